use std::collections::{BTreeMap, BTreeSet};

use super::types::{DiscrepancyClass, ProvenanceVector, TargetKey, TargetRecord};

/// True if every entry of `expected` is present in `actual` at the same or a
/// fresher version.
pub fn at_least_as_fresh(actual: &ProvenanceVector, expected: &ProvenanceVector) -> bool {
    expected.iter().all(|(k, v)| actual.get(k).is_some_and(|a| a.at_least_as_fresh_as(v)))
}

/// Classify one key. `None` means the record does not exist at all.
pub fn classify(expected: Option<&TargetRecord>, actual: Option<&TargetRecord>) -> DiscrepancyClass {
    use DiscrepancyClass::*;
    match (expected, actual) {
        (None, None) => Consistent,
        (None, Some(a)) => {
            if a.is_live() {
                UnexpectedExtra
            } else {
                Consistent
            }
        }
        (Some(e), None) => {
            if e.is_live() {
                Missing
            } else {
                Consistent
            }
        }
        (Some(e), Some(a)) => {
            if e.tombstone && a.is_live() {
                Resurrection
            } else if !at_least_as_fresh(&a.provenance, &e.provenance) {
                Stale
            } else if e.tombstone == a.tombstone && e.value == a.value {
                Consistent
            } else {
                Corrupt
            }
        }
    }
}

/// Compare two keyed sets over the union of their keys.
pub fn compare(
    expected: &BTreeMap<TargetKey, TargetRecord>,
    actual: &BTreeMap<TargetKey, TargetRecord>,
) -> BTreeMap<TargetKey, DiscrepancyClass> {
    let keys: BTreeSet<&TargetKey> = expected.keys().chain(actual.keys()).collect();
    keys.into_iter().map(|k| (k.clone(), classify(expected.get(k), actual.get(k)))).collect()
}

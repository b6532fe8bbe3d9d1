use std::sync::Arc;

use super::queue::{FailReason, FixOutcome};
use crate::domain::{classify, DiscrepancyClass, Mapper, SourceView, TargetKey, TargetRecord, Tick};
use crate::stores::{PutOutcome, TargetStore};

/// Stores and mapping a repair runs against. The legacy side is any source
/// view so checkers can repair against frozen copies too.
pub struct RepairContext<'a, S: SourceView> {
    pub legacy: &'a S,
    pub target: &'a mut TargetStore,
    pub mapper: &'a Mapper,
}

/// What one validate-and-fix call observed and did.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixReport {
    pub outcome: FixOutcome,
    pub class: Option<DiscrepancyClass>,
    pub write: Option<(Arc<TargetRecord>, PutOutcome)>,
}

impl FixReport {
    fn failed(reason: FailReason, class: Option<DiscrepancyClass>) -> Self {
        FixReport { outcome: FixOutcome::Failed(reason), class, write: None }
    }
}

/// Re-read the latest source state, map it, compare with the target and
/// overwrite the target if it diverged.
///
/// Idempotent: with no interleaving source writes a second call finds the
/// key consistent. A failed call writes nothing.
pub fn validate_and_fix<S: SourceView>(ctx: &mut RepairContext<'_, S>, key: &TargetKey, now: Tick) -> FixReport {
    let expected = match ctx.mapper.expected_for(ctx.legacy, key) {
        Ok(e) => e,
        Err(e) => return FixReport::failed(FailReason::MappingBug(e.to_string()), None),
    };
    let actual = match ctx.target.get(key, now) {
        Ok(a) => a,
        Err(_) => return FixReport::failed(FailReason::Unavailable, None),
    };
    let class = classify(expected.as_ref(), actual.as_deref());
    if class.is_consistent() {
        return FixReport { outcome: FixOutcome::AlreadyConsistent, class: Some(class), write: None };
    }
    let record = match expected {
        Some(e) => e,
        // an extra with no source behind it is retired with a tombstone
        None => {
            let a = actual.expect("extra implies an actual record");
            TargetRecord { key: key.clone(), value: Default::default(), provenance: a.provenance.clone(), tombstone: true }
        }
    };
    let parents = if record.is_live() {
        match ctx.mapper.parent_keys(&record) {
            Ok(p) => p,
            Err(e) => return FixReport::failed(FailReason::MappingBug(e.to_string()), Some(class)),
        }
    } else {
        if let Some(child) = ctx.mapper.dependent_siblings(key).into_iter().find(|c| ctx.target.is_live(c)) {
            return FixReport::failed(FailReason::LiveChild(child), Some(class));
        }
        Vec::new()
    };
    let record = Arc::new(record);
    let put = ctx.target.put_checked(record.clone(), &parents, now);
    let outcome = match &put {
        PutOutcome::Accepted => FixOutcome::Fixed,
        PutOutcome::StaleRejected => FixOutcome::AlreadyConsistent,
        PutOutcome::Unavailable => FixOutcome::Failed(FailReason::Unavailable),
        PutOutcome::ParentMissing(p) => FixOutcome::Failed(FailReason::MissingParent(p.clone())),
    };
    FixReport { outcome, class: Some(class), write: Some((record, put)) }
}

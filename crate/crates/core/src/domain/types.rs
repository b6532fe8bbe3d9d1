use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// Simulated clock time. One tick is one simulated minute.
pub type Tick = u64;

/// Opaque field map carried by records on both sides of the migration.
pub type Value = BTreeMap<String, String>;

/// Name of a registered entity type. Cheap to clone.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TypeName(Arc<str>);

impl TypeName {
    pub fn new(name: &str) -> Self {
        TypeName(Arc::from(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for TypeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(&*self.0, f)
    }
}

impl fmt::Display for TypeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TypeName {
    fn from(s: &str) -> Self {
        TypeName::new(s)
    }
}

/// `(entity type, id)`. Used for both source and target keys.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityKey {
    pub ty: TypeName,
    pub id: u64,
}

pub type SourceKey = EntityKey;
pub type TargetKey = EntityKey;

impl EntityKey {
    pub fn new(ty: impl Into<TypeName>, id: u64) -> Self {
        EntityKey { ty: ty.into(), id }
    }

    /// Stable 64-bit digest, used as the subject of availability draws.
    pub fn digest(&self) -> u64 {
        crate::rng::splitmix64(crate::rng::fnv1a(self.ty.as_str().as_bytes()) ^ crate::rng::splitmix64(self.id))
    }
}

impl fmt::Debug for EntityKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.ty, self.id)
    }
}

impl fmt::Display for EntityKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.ty, self.id)
    }
}

/// Version of a source record: per-key counter plus commit time.
///
/// A counter of 0 marks a bootstrap default; those are ordered by commit
/// time instead of counter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VersionStamp {
    pub counter: u64,
    pub commit_time: Tick,
}

impl VersionStamp {
    pub fn new(counter: u64, commit_time: Tick) -> Self {
        VersionStamp { counter, commit_time }
    }

    pub fn freshness_cmp(&self, other: &VersionStamp) -> std::cmp::Ordering {
        if self.counter == 0 || other.counter == 0 {
            self.commit_time.cmp(&other.commit_time)
        } else {
            self.counter.cmp(&other.counter)
        }
    }

    pub fn at_least_as_fresh_as(&self, other: &VersionStamp) -> bool {
        self.freshness_cmp(other) != std::cmp::Ordering::Less
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub key: SourceKey,
    pub value: Value,
    pub version: VersionStamp,
    pub tombstone: bool,
}

impl SourceRecord {
    pub fn live(key: SourceKey, value: Value, version: VersionStamp) -> Self {
        SourceRecord { key, value, version, tombstone: false }
    }

    /// Tombstones keep key and version but drop the value.
    pub fn tombstone(key: SourceKey, version: VersionStamp) -> Self {
        SourceRecord { key, value: Value::new(), version, tombstone: true }
    }
}

/// Source versions a target state was derived from.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct ProvenanceVector(pub BTreeMap<SourceKey, VersionStamp>);

// Encoded as a list of pairs: JSON object keys must be strings.
impl Serialize for ProvenanceVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.0.iter())
    }
}

impl<'de> Deserialize<'de> for ProvenanceVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Vec::<(SourceKey, VersionStamp)>::deserialize(d).map(ProvenanceVector::from_entries)
    }
}

impl ProvenanceVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (SourceKey, VersionStamp)>) -> Self {
        ProvenanceVector(entries.into_iter().collect())
    }

    pub fn get(&self, key: &SourceKey) -> Option<&VersionStamp> {
        self.0.get(key)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SourceKey, &VersionStamp)> {
        self.0.iter()
    }

    /// True if some entry shared with `other` is strictly older here.
    pub fn older_than_on_any(&self, other: &ProvenanceVector) -> bool {
        self.0.iter().any(|(k, v)| {
            other
                .0
                .get(k)
                .is_some_and(|o| v.freshness_cmp(o) == std::cmp::Ordering::Less)
        })
    }

    /// Pointwise maximum of two vectors.
    pub fn join(&self, other: &ProvenanceVector) -> ProvenanceVector {
        let mut out = self.0.clone();
        for (k, v) in &other.0 {
            out.entry(k.clone())
                .and_modify(|cur| {
                    if v.freshness_cmp(cur) == std::cmp::Ordering::Greater {
                        *cur = *v;
                    }
                })
                .or_insert(*v);
        }
        ProvenanceVector(out)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetRecord {
    pub key: TargetKey,
    pub value: Value,
    pub provenance: ProvenanceVector,
    pub tombstone: bool,
}

impl TargetRecord {
    pub fn is_live(&self) -> bool {
        !self.tombstone
    }
}

/// Outcome of comparing an expected target state with the actual one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DiscrepancyClass {
    Consistent,
    Missing,
    Stale,
    Corrupt,
    UnexpectedExtra,
    Resurrection,
}

impl DiscrepancyClass {
    pub const ALL: [DiscrepancyClass; 6] = [
        DiscrepancyClass::Consistent,
        DiscrepancyClass::Missing,
        DiscrepancyClass::Stale,
        DiscrepancyClass::Corrupt,
        DiscrepancyClass::UnexpectedExtra,
        DiscrepancyClass::Resurrection,
    ];

    pub fn is_consistent(self) -> bool {
        self == DiscrepancyClass::Consistent
    }

    pub fn name(self) -> &'static str {
        match self {
            DiscrepancyClass::Consistent => "consistent",
            DiscrepancyClass::Missing => "missing",
            DiscrepancyClass::Stale => "stale",
            DiscrepancyClass::Corrupt => "corrupt",
            DiscrepancyClass::UnexpectedExtra => "unexpected_extra",
            DiscrepancyClass::Resurrection => "resurrection",
        }
    }
}

impl fmt::Display for DiscrepancyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bootstrap_defaults_compare_by_commit_time() {
        let boot = VersionStamp::new(0, 50);
        let real = VersionStamp::new(3, 40);
        assert!(boot.at_least_as_fresh_as(&real));
        assert!(VersionStamp::new(4, 1).at_least_as_fresh_as(&VersionStamp::new(3, 9)));
    }

    #[test]
    fn provenance_join_is_pointwise_max() {
        let a = EntityKey::new("a", 1);
        let b = EntityKey::new("b", 1);
        let x = ProvenanceVector::from_entries([(a.clone(), VersionStamp::new(2, 5)), (b.clone(), VersionStamp::new(1, 1))]);
        let y = ProvenanceVector::from_entries([(a.clone(), VersionStamp::new(1, 3)), (b.clone(), VersionStamp::new(4, 9))]);
        let j = x.join(&y);
        assert_eq!(j.get(&a), Some(&VersionStamp::new(2, 5)));
        assert_eq!(j.get(&b), Some(&VersionStamp::new(4, 9)));
        assert!(y.older_than_on_any(&x));
        assert!(x.older_than_on_any(&y));
        assert!(!j.older_than_on_any(&x));
    }
}

//! The target store under faults: freshness-checked writes, stale
//! rejection, tombstones, scheduled outages and seeded availability draws.

use std::sync::Arc;

use convergence::domain::{EntityKey, ProvenanceVector, TargetRecord, Value, VersionStamp};
use convergence::stores::{FaultProfile, TargetStore};

fn record(counter: u64, tombstone: bool) -> TargetRecord {
    let src = EntityKey::new("project", 1);
    let mut value = Value::new();
    if !tombstone {
        value.insert("name".into(), format!("v{counter}"));
    }
    TargetRecord {
        key: EntityKey::new("project_v2", 1),
        value,
        provenance: ProvenanceVector::from_entries([(src, VersionStamp::new(counter, counter))]),
        tombstone,
    }
}

fn main() {
    let mut t = TargetStore::new(FaultProfile::healthy().with_outage(50, 60));
    println!("put v2          -> {:?}", t.put_if_fresher(record(2, false), 1));
    println!("put older v1    -> {:?}", t.put_if_fresher(record(1, false), 2));
    println!("tombstone at v3 -> {:?}", t.put_if_fresher(record(3, true), 3));
    println!("stale live v2   -> {:?}  (a deleted record stays deleted)", t.put_if_fresher(record(2, false), 4));
    println!("put in outage   -> {:?}", t.put_if_fresher(record(4, false), 55));

    let fault = FaultProfile::healthy().with_availability(0.99).with_seed(7);
    let mut t = TargetStore::new(fault);
    let mut failures = 0;
    for tick in 0..10_000u64 {
        let mut r = record(tick + 1, false);
        r.key = EntityKey::new("project_v2", tick % 100);
        r.provenance = ProvenanceVector::from_entries([(EntityKey::new("project", tick % 100), VersionStamp::new(tick + 1, tick))]);
        if !t.put_checked(Arc::new(r), &[], tick).is_accepted() {
            failures += 1;
        }
    }
    println!("p=0.99 over 10000 writes: {failures} unavailable");
}

//! Settlement times, time to converge over a window, and the overall vs
//! settled-only consistency rates.

use convergence::domain::{EntityKey, ProvenanceVector, TargetRecord, Value, VersionStamp};
use convergence::metrics::{consistency_rate, time_to_converge, SettlementTracker, Update};
use convergence::schemas;
use convergence::stores::{FaultProfile, LegacyStore, LegacyWrite, TargetStore};

fn main() {
    // two updates committed at 10 and 11, settled at 12 and 16
    let u = |id, c, s| Update { key: EntityKey::new("project", id), counter: 1, commit_time: c, settled_at: Some(s) };
    println!("TTC over [0, 20] = {:?}", time_to_converge(&[u(1, 10, 12), u(2, 11, 16)], 0, 20));

    let mut tracker = SettlementTracker::new();
    let src = EntityKey::new("project", 1);
    tracker.on_commit(src.clone(), 1, 10, vec![EntityKey::new("project_v2", 1)]);
    tracker.on_commit(src.clone(), 2, 14, vec![EntityKey::new("project_v2", 1)]);
    let rec = TargetRecord {
        key: EntityKey::new("project_v2", 1),
        value: Value::new(),
        provenance: ProvenanceVector::from_entries([(src.clone(), VersionStamp::new(2, 14))]),
        tombstone: false,
    };
    println!("provisional TTC at 18 = {}", tracker.provisional_ttc(0, 18, 18));
    tracker.on_accepted(&rec, 20);
    println!("one write of version 2 settles both: {:?} {:?}", tracker.settlement_time(&src, 1), tracker.settlement_time(&src, 2));

    // 100,000 records, one update still in flight
    let schema = schemas::recruiting();
    let mut legacy = LegacyStore::new();
    let mut target = TargetStore::new(FaultProfile::healthy());
    let mapper = convergence::domain::Mapper::new(schema.clone());
    for id in 0..100_000u64 {
        let v: Value = [("name".to_string(), "p".to_string())].into();
        let ev = legacy.commit(EntityKey::new("project", id), LegacyWrite::Put(v), id / 1000);
        if id != 99_999 {
            for out in mapper.expected_for_source(&legacy, &ev.key).unwrap() {
                target.put_if_fresher(out, 100);
            }
        }
    }
    let (overall, settled) = consistency_rate(&legacy.take_snapshot(100), &target.snapshot(100), &schema, 10);
    println!("overall {overall}, settled-only {settled}");
}

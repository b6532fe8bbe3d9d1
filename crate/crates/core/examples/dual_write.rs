//! A legacy commit replicated to the target. When the target is down the
//! dual write hands the key to the self-healing queue, which repairs it once
//! the outage ends.

use convergence::domain::{EntityKey, Mapper, Value};
use convergence::dualwrite::{on_commit, replicate};
use convergence::healing::{validate_and_fix, RepairContext, RetryPolicy, SelfHealingQueue};
use convergence::schemas;
use convergence::stores::{FaultProfile, LegacyStore, LegacyWrite, TargetStore};

fn main() {
    let mapper = Mapper::new(schemas::recruiting());
    let mut legacy = LegacyStore::new();
    let mut target = TargetStore::new(FaultProfile::healthy().with_outage(10, 13));
    let mut queue = SelfHealingQueue::new(RetryPolicy::default(), 100);

    let name: Value = [("name".to_string(), "apollo".to_string())].into();
    for (tick, id) in [(5, 1), (11, 2)] {
        let ev = legacy.commit(EntityKey::new("project", id), LegacyWrite::Put(name.clone()), tick);
        let task = on_commit(&mapper, ev, tick);
        let r = replicate(&task, &legacy, &mut target, &mapper, &mut queue, tick);
        println!("t={tick} project {id}: {:?}, enqueued {:?}", r.outcome, r.enqueued);
    }
    for tick in 11..20 {
        let report = queue.process(tick, |ev| validate_and_fix(&mut RepairContext { legacy: &legacy, target: &mut target, mapper: &mapper }, &ev.target_key, tick).outcome);
        for tr in report.transitions {
            println!("t={tick} {tr:?}");
        }
    }
    println!("queue empty: {}, project_v2/2 live: {}", queue.is_empty(), target.is_live(&EntityKey::new("project_v2", 2)));
}

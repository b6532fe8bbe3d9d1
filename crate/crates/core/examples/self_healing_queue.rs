//! Retry with exponential backoff, dead letters for a systematic mapping
//! bug, and draining after the bug is fixed and the dead letters requeued.

use convergence::domain::{EntityKey, Mapper, MappingBug, Value};
use convergence::healing::{validate_and_fix, RepairContext, RetryPolicy, SelfHealingQueue, Trigger, ValidationEvent};
use convergence::schemas;
use convergence::stores::{FaultProfile, LegacyStore, LegacyWrite, TargetStore};

fn main() {
    let policy = RetryPolicy::default();
    println!("backoff by attempt: {:?}", (1..=policy.max_attempts).map(|a| policy.backoff(a)).collect::<Vec<_>>());

    let bug = MappingBug { rule: "project".into(), id_modulus: 4, id_residue: 1, active: true };
    let mut mapper = Mapper::new(schemas::recruiting()).with_bug(bug);
    let mut legacy = LegacyStore::new();
    let mut target = TargetStore::new(FaultProfile::healthy().with_availability(0.9).with_seed(3));
    let mut queue = SelfHealingQueue::new(policy, 100);
    let name: Value = [("name".to_string(), "p".to_string())].into();
    for id in 0..12 {
        legacy.commit(EntityKey::new("project", id), LegacyWrite::Put(name.clone()), 0);
        queue.enqueue(ValidationEvent::new(EntityKey::new("project_v2", id), Trigger::Bootstrap, 0, 0));
    }

    let mut tick = 0;
    while !queue.is_empty() {
        queue.process(tick, |ev| validate_and_fix(&mut RepairContext { legacy: &legacy, target: &mut target, mapper: &mapper }, &ev.target_key, tick).outcome);
        tick += 1;
    }
    println!("after {tick} ticks: {} dead letters", queue.dead_letters().len());
    print!("{}", queue.dump(tick));

    mapper.set_bug_active(false);
    let back = queue.requeue_dead_letters(tick);
    println!("bug fixed, requeued {}", back.len());
    while !queue.is_empty() {
        queue.process(tick, |ev| validate_and_fix(&mut RepairContext { legacy: &legacy, target: &mut target, mapper: &mapper }, &ev.target_key, tick).outcome);
        tick += 1;
    }
    let m = queue.metrics();
    println!("drained at t={tick}: attempts {}, dead letters {}, targets live {}", m.attempts(), queue.dead_letters().len(), target.len());
}

//! The four verifiers on one small store pair: a rate-limited bootstrap,
//! nearline checks behind the change stream, shadow reads, and an offline
//! snapshot comparison.

use convergence::domain::{EntityKey, Mapper, Value};
use convergence::healing::{validate_and_fix, RepairContext, RetryPolicy, SelfHealingQueue};
use convergence::schemas;
use convergence::stores::{FaultProfile, LegacyStore, LegacyWrite, TargetStore};
use convergence::verifiers::{offline_bulk_verify, Bootstrap, BootstrapMode, NearlineVerifier, RateLimiter, ShadowReader};

fn value(name: &str) -> Value {
    [("name".to_string(), name.to_string())].into()
}

fn main() {
    let mapper = Mapper::new(schemas::recruiting());
    let mut legacy = LegacyStore::new();
    for id in 0..50 {
        legacy.commit(EntityKey::new("project", id), LegacyWrite::Put(value("old")), id);
    }
    let fault = FaultProfile { stream_lag: 2, stream_drop_p: 0.5, ..FaultProfile::healthy() };
    let mut target = TargetStore::new(fault.clone());
    let mut queue = SelfHealingQueue::new(RetryPolicy::default(), 100);
    let mut limiter = RateLimiter::new(20);
    let mut boot = Bootstrap::new(legacy.take_snapshot(100), &mapper, BootstrapMode::Queue);
    let mut nearline = NearlineVerifier::new(&legacy, legacy.max_seq() + 1, &fault, 4).expect("subscribe");
    let mut shadow = ShadowReader::new(None);

    for t in 100..140 {
        limiter.begin_tick(t);
        queue.process(t, |ev| validate_and_fix(&mut RepairContext { legacy: &legacy, target: &mut target, mapper: &mapper }, &ev.target_key, t).outcome);
        if t >= 110 && t < 120 {
            // legacy writes that never reach the target directly
            legacy.commit(EntityKey::new("project", t % 50), LegacyWrite::Put(value("new")), t);
        }
        boot.step(t, &mut limiter, &mapper, &mut target, &mut queue);
        nearline.step(t, &legacy, &mut target, &mapper, &mut queue);
        if t == 125 {
            let read = legacy.read(&EntityKey::new("project", 3)).cloned().expect("exists");
            println!("shadow read at {t}: {:?}", shadow.shadow_read(&read, &legacy, &mut target, &mapper, &mut queue, t));
        }
    }
    let r = boot.report();
    println!("bootstrap: {} records in {} ticks (limit 20/tick)", r.records, r.duration);
    let (verified, enqueued) = nearline.counts();
    println!("nearline: {verified} checked, {enqueued} enqueued, {} dropped by the stream", nearline.dropped());

    let now = 140;
    let report = offline_bulk_verify(&legacy.take_snapshot(now), &target.snapshot(now), 10, &mapper, &mut queue, now);
    print!("{}", report.to_text());
}

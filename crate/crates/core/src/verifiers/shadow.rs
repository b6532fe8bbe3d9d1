use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::domain::{classify, DiscrepancyClass, Mapper, SourceKey, SourceRecord, SourceView, TargetRecord, Tick};
use crate::healing::{SelfHealingQueue, Trigger, ValidationEvent};
use crate::stores::{LegacyStore, TargetStore};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShadowOutcome {
    Match,
    DiscrepancyReported { class: Option<DiscrepancyClass>, enqueued: bool },
}

pub const DEFAULT_ALARM_INTERVAL: Tick = 10;

/// Dry run of the switched read path: after a legacy read returns, compare
/// what the target would have served.
#[derive(Debug)]
pub struct ShadowReader {
    compared_fields: Option<Vec<String>>,
    alarm_interval: Tick,
    last_alarm: HashMap<SourceKey, Tick>,
    matches: u64,
    reported: u64,
}

struct Overlay<'a> {
    observed: &'a SourceRecord,
    legacy: &'a LegacyStore,
}

impl SourceView for Overlay<'_> {
    fn source(&self, key: &SourceKey) -> Option<&SourceRecord> {
        if *key == self.observed.key {
            Some(self.observed)
        } else {
            self.legacy.current(key)
        }
    }
}

impl ShadowReader {
    pub fn new(compared_fields: Option<Vec<String>>) -> Self {
        ShadowReader { compared_fields, alarm_interval: DEFAULT_ALARM_INTERVAL, last_alarm: HashMap::new(), matches: 0, reported: 0 }
    }

    fn project(&self, r: Option<TargetRecord>) -> Option<TargetRecord> {
        let fields = self.compared_fields.as_ref()?;
        r.map(|mut r| {
            r.value = r.value.into_iter().filter(|(k, _)| fields.contains(k)).collect::<BTreeMap<_, _>>();
            r
        })
    }

    pub fn shadow_read(
        &mut self,
        observed: &SourceRecord,
        legacy: &LegacyStore,
        target: &mut TargetStore,
        mapper: &Mapper,
        queue: &mut SelfHealingQueue,
        now: Tick,
    ) -> ShadowOutcome {
        let view = Overlay { observed, legacy };
        let mut worst: Option<Option<DiscrepancyClass>> = None;
        let mut bad_keys = Vec::new();
        for key in mapper.affected_targets(&observed.key) {
            let class = match (mapper.expected_for(&view, &key), target.get(&key, now)) {
                (_, Err(_)) => None,
                (Err(_), Ok(_)) => Some(DiscrepancyClass::Corrupt),
                (Ok(expected), Ok(actual)) => {
                    let actual = actual.map(|a| (*a).clone());
                    let (e, a) = if self.compared_fields.is_some() { (self.project(expected), self.project(actual)) } else { (expected, actual) };
                    Some(classify(e.as_ref(), a.as_ref()))
                }
            };
            if class.is_some_and(|c| c.is_consistent()) {
                continue;
            }
            worst.get_or_insert(class);
            if class.is_some() {
                bad_keys.push(key);
            }
        }
        let Some(class) = worst else {
            self.matches += 1;
            return ShadowOutcome::Match;
        };
        self.reported += 1;
        let allowed = self.last_alarm.get(&observed.key).is_none_or(|t| now >= t + self.alarm_interval);
        let enqueued = allowed && !bad_keys.is_empty();
        if enqueued {
            self.last_alarm.insert(observed.key.clone(), now);
            for key in bad_keys {
                queue.enqueue(ValidationEvent::new(key, Trigger::ShadowRead, now, observed.version.commit_time));
            }
        }
        ShadowOutcome::DiscrepancyReported { class, enqueued }
    }

    pub fn counts(&self) -> (u64, u64) {
        (self.matches, self.reported)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{EntityKey, Value};
    use crate::healing::{validate_and_fix, RepairContext, RetryPolicy};
    use crate::schemas;
    use crate::stores::{FaultProfile, LegacyWrite};

    fn v(n: &str) -> Value {
        Value::from([("name".to_string(), n.to_string()), ("notes".to_string(), "z".to_string())])
    }

    struct Rig {
        legacy: LegacyStore,
        target: TargetStore,
        mapper: Mapper,
        queue: SelfHealingQueue,
    }

    fn rig() -> Rig {
        let mut r = Rig {
            legacy: LegacyStore::new(),
            target: TargetStore::new(FaultProfile::healthy()),
            mapper: Mapper::new(schemas::recruiting()),
            queue: SelfHealingQueue::new(RetryPolicy::default(), 100),
        };
        r.legacy.commit(EntityKey::new("project", 1), LegacyWrite::Put(v("a")), 1);
        let mut ctx = RepairContext { legacy: &r.legacy, target: &mut r.target, mapper: &r.mapper };
        validate_and_fix(&mut ctx, &EntityKey::new("project_v2", 1), 1);
        r
    }

    impl Rig {
        fn read(&mut self, s: &mut ShadowReader, now: Tick) -> ShadowOutcome {
            let observed = self.legacy.read(&EntityKey::new("project", 1)).unwrap().clone();
            s.shadow_read(&observed, &self.legacy, &mut self.target, &self.mapper, &mut self.queue, now)
        }
    }

    #[test]
    fn consistent_key_matches() {
        let mut r = rig();
        let mut s = ShadowReader::new(None);
        assert_eq!(r.read(&mut s, 2), ShadowOutcome::Match);
        assert!(r.queue.is_empty());
    }

    #[test]
    fn stale_target_reports_and_enqueues_once_per_interval() {
        let mut r = rig();
        r.legacy.commit(EntityKey::new("project", 1), LegacyWrite::Put(v("b")), 2);
        let mut s = ShadowReader::new(None);
        let stale = ShadowOutcome::DiscrepancyReported { class: Some(DiscrepancyClass::Stale), enqueued: true };
        assert_eq!(r.read(&mut s, 3), stale);
        assert_eq!(r.queue.len(), 1);
        assert_eq!(r.read(&mut s, 5), ShadowOutcome::DiscrepancyReported { class: Some(DiscrepancyClass::Stale), enqueued: false });
        assert_eq!(r.read(&mut s, 13), stale);
        assert_eq!(r.queue.metrics().coalesced, 1);
    }

    #[test]
    fn tombstoned_source_with_live_target_is_resurrection() {
        let mut r = rig();
        r.legacy.commit(EntityKey::new("project", 1), LegacyWrite::Delete, 2);
        let mut s = ShadowReader::new(None);
        assert_eq!(r.read(&mut s, 3), ShadowOutcome::DiscrepancyReported { class: Some(DiscrepancyClass::Resurrection), enqueued: true });
    }

    #[test]
    fn unavailable_target_does_not_enqueue() {
        let mut r = rig();
        r.target.set_fault(FaultProfile::healthy().with_outage(0, 100));
        let mut s = ShadowReader::new(None);
        assert_eq!(r.read(&mut s, 3), ShadowOutcome::DiscrepancyReported { class: None, enqueued: false });
        assert!(r.queue.is_empty());
    }

    #[test]
    fn compared_fields_restrict_the_view() {
        let mut r = rig();
        let mut drifted = (**r.target.peek(&EntityKey::new("project_v2", 1)).unwrap()).clone();
        drifted.value.insert("notes".to_string(), "other".to_string());
        assert!(r.target.put_if_fresher(drifted, 2).is_accepted());
        let mut full = ShadowReader::new(None);
        assert!(matches!(r.read(&mut full, 3), ShadowOutcome::DiscrepancyReported { class: Some(DiscrepancyClass::Corrupt), .. }));
        let mut named = ShadowReader::new(Some(vec!["name".to_string()]));
        assert_eq!(r.read(&mut named, 3), ShadowOutcome::Match);
    }
}

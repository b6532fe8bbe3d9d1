use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{register_schema, EntityType, MappingBug, MappingRule, SchemaError, SchemaHandle, Tick, TypeName};
use crate::duration::{self, DAY, HOUR};
use crate::healing::{RetryPolicy, RetryPolicyError, SelfHealingQueue};
use crate::ramp::{RampCriteria, RampPlan, RampPlanError, SwitchOutcome};
use crate::schemas;
use crate::stores::{FaultError, FaultProfile};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("scenario file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("schema: {0}")]
    Schema(#[from] SchemaError),
    #[error("faults: {0}")]
    Faults(#[from] FaultError),
    #[error("retry: {0}")]
    Retry(#[from] RetryPolicyError),
    #[error("ramp: {0}")]
    Ramp(#[from] RampPlanError),
    #[error("{0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaSpec {
    pub types: Vec<EntityType>,
    pub rules: Vec<MappingRule>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Population {
    pub initial_records: u64,
    /// Relative weight of each generated source type.
    pub mix: BTreeMap<String, u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Burst {
    #[serde(deserialize_with = "duration::deserialize")]
    pub at: Tick,
    pub size: u64,
}

fn day_start() -> Tick {
    7 * HOUR
}

fn day_end() -> Tick {
    22 * HOUR
}

fn insert_fraction() -> f64 {
    0.2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    #[serde(default)]
    pub write_rate_day: f64,
    #[serde(default)]
    pub write_rate_night: f64,
    #[serde(default = "day_start", deserialize_with = "duration::deserialize")]
    pub day_start: Tick,
    #[serde(default = "day_end", deserialize_with = "duration::deserialize")]
    pub day_end: Tick,
    #[serde(default)]
    pub read_rate: f64,
    #[serde(default = "insert_fraction")]
    pub insert_fraction: f64,
    /// Deletes only ever hit leaf types.
    #[serde(default)]
    pub delete_fraction: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bursts: Vec<Burst>,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            write_rate_day: 0.0,
            write_rate_night: 0.0,
            day_start: day_start(),
            day_end: day_end(),
            read_rate: 0.0,
            insert_fraction: insert_fraction(),
            delete_fraction: 0.0,
            bursts: Vec::new(),
        }
    }
}

impl WorkloadSpec {
    pub fn write_rate(&self, now: Tick) -> f64 {
        let tod = now % DAY;
        if tod >= self.day_start && tod < self.day_end {
            self.write_rate_day
        } else {
            self.write_rate_night
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapChoice {
    Off,
    #[default]
    Queue,
    DirectLoad,
}

fn yes() -> bool {
    true
}

fn limiter_capacity() -> u64 {
    15_900
}

fn queue_rate_limit() -> usize {
    SelfHealingQueue::DEFAULT_RATE_LIMIT
}

fn offline_cutoff() -> Tick {
    DAY
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pipeline {
    #[serde(default = "yes")]
    pub dual_writes: bool,
    #[serde(default)]
    pub bootstrap: BootstrapChoice,
    #[serde(default = "limiter_capacity")]
    pub limiter_capacity: u64,
    #[serde(default = "queue_rate_limit")]
    pub queue_rate_limit: usize,
    #[serde(default = "yes")]
    pub nearline: bool,
    /// Defaults to twice the stream lag.
    #[serde(default, with = "duration::option", skip_serializing_if = "Option::is_none")]
    pub settle_delay: Option<Tick>,
    #[serde(default = "yes")]
    pub shadow_reads: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compared_fields: Option<Vec<String>>,
    #[serde(default, with = "duration::option", skip_serializing_if = "Option::is_none")]
    pub offline_every: Option<Tick>,
    #[serde(default = "offline_cutoff", deserialize_with = "duration::deserialize")]
    pub offline_cutoff: Tick,
}

impl Default for Pipeline {
    fn default() -> Self {
        Pipeline {
            dual_writes: true,
            bootstrap: BootstrapChoice::Queue,
            limiter_capacity: limiter_capacity(),
            queue_rate_limit: queue_rate_limit(),
            nearline: true,
            settle_delay: None,
            shadow_reads: true,
            compared_fields: None,
            offline_every: None,
            offline_cutoff: offline_cutoff(),
        }
    }
}

fn sample_every() -> Tick {
    HOUR
}

fn ttc_window() -> Tick {
    DAY
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSpec {
    #[serde(default = "sample_every", deserialize_with = "duration::deserialize")]
    pub sample_every: Tick,
    /// Trailing window for the time-to-converge gauge.
    #[serde(default = "ttc_window", deserialize_with = "duration::deserialize")]
    pub ttc_window: Tick,
    /// Fixed staleness bound; derived from the window TTC when absent.
    #[serde(default, with = "duration::option", skip_serializing_if = "Option::is_none")]
    pub staleness_bound: Option<Tick>,
}

impl Default for MetricsSpec {
    fn default() -> Self {
        MetricsSpec { sample_every: sample_every(), ttc_window: ttc_window(), staleness_bound: None }
    }
}

/// An injected mapping bug, optionally fixed (with a dead-letter requeue)
/// at `fixed_at`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BugSpec {
    pub rule: String,
    pub id_modulus: u64,
    #[serde(default)]
    pub id_residue: u64,
    #[serde(default, with = "duration::option", skip_serializing_if = "Option::is_none")]
    pub fixed_at: Option<Tick>,
}

impl BugSpec {
    pub fn mapping_bug(&self) -> MappingBug {
        MappingBug { rule: self.rule.clone(), id_modulus: self.id_modulus, id_residue: self.id_residue, active: true }
    }
}

/// Assertions checked after the run; all optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectations {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch_outcome: Option<SwitchOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_post_switch_discrepancies: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_lost_updates: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attempts_ratio_range: Option<(f64, f64)>,
    /// Samples at or after this tick form the steady state.
    #[serde(default, with = "duration::option", skip_serializing_if = "Option::is_none")]
    pub steady_from: Option<Tick>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steady_min_overall: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steady_min_settled: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_min_settled: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_dead_letters: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_final_discrepancies: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_resurrections: Option<u64>,
}

/// Everything a run depends on. Equal scenarios give identical runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    /// Preloaded history has commit times in `[0, start)`; the migration
    /// system comes up at `start`.
    #[serde(deserialize_with = "duration::deserialize")]
    pub start: Tick,
    /// Last simulated tick, unless a switch-over ends the run earlier.
    #[serde(deserialize_with = "duration::deserialize")]
    pub end: Tick,
    pub population: Population,
    #[serde(default)]
    pub workload: WorkloadSpec,
    #[serde(default)]
    pub faults: FaultProfile,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default)]
    pub pipeline: Pipeline,
    #[serde(default)]
    pub metrics: MetricsSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ramp: Option<RampPlan>,
    #[serde(default)]
    pub criteria: RampCriteria,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bug: Option<BugSpec>,
    #[serde(default)]
    pub expect: Expectations,
    pub schema: SchemaSpec,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Scenario, ConfigError> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn register_schema(&self) -> Result<SchemaHandle, ConfigError> {
        Ok(register_schema(self.schema.types.clone(), self.schema.rules.clone())?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let schema = self.register_schema()?;
        self.faults.validate()?;
        self.retry.validate()?;
        if let Some(r) = &self.ramp {
            r.validate()?;
        }
        if self.end < self.start {
            return Err(invalid(format!("end {} precedes start {}", self.end, self.start)));
        }
        for (ty, w) in &self.population.mix {
            if schema.rule_for_source(&TypeName::new(ty)).is_none() {
                return Err(invalid(format!("population mix names `{ty}`, which no rule consumes")));
            }
            if *w == 0 {
                return Err(invalid(format!("population weight of `{ty}` is zero")));
            }
        }
        if self.population.initial_records > 0 && self.population.mix.is_empty() {
            return Err(invalid("population mix is empty"));
        }
        let w = &self.workload;
        for (name, v) in [("write_rate_day", w.write_rate_day), ("write_rate_night", w.write_rate_night), ("read_rate", w.read_rate)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(format!("workload.{name} must be a non-negative number")));
            }
        }
        if !(0.0..=1.0).contains(&w.insert_fraction) || !(0.0..=1.0).contains(&w.delete_fraction) || w.insert_fraction + w.delete_fraction > 1.0 {
            return Err(invalid("workload insert/delete fractions must lie in [0, 1] and sum to at most 1"));
        }
        if w.day_start > w.day_end || w.day_end > DAY {
            return Err(invalid("workload day window must satisfy day_start <= day_end <= 1d"));
        }
        if self.metrics.sample_every == 0 {
            return Err(invalid("metrics.sample_every must be positive"));
        }
        if self.pipeline.offline_every == Some(0) {
            return Err(invalid("pipeline.offline_every must be positive"));
        }
        if self.pipeline.queue_rate_limit == 0 {
            return Err(invalid("pipeline.queue_rate_limit must be positive"));
        }
        if let Some(b) = &self.bug {
            if schema.rule_index(&b.rule).is_none() {
                return Err(invalid(format!("bug names unknown rule `{}`", b.rule)));
            }
            if b.id_modulus == 0 || b.id_residue >= b.id_modulus {
                return Err(invalid("bug id_modulus must be positive and exceed id_residue"));
            }
        }
        Ok(())
    }

    /// The reference desk-scale scenario: 100,000 records over projects,
    /// states and candidates, 99% availability, bootstrap, two bulk bursts,
    /// a three-day bulk freeze and a drained ramp at 01:00.
    pub fn default_scenario() -> Scenario {
        let (types, rules) = schemas::recruiting_types();
        let start = 2 * DAY;
        let ramp_time = 6 * DAY + HOUR;
        Scenario {
            name: "default".into(),
            seed: 1,
            start,
            end: ramp_time + DAY,
            population: Population {
                initial_records: 100_000,
                mix: [("project".to_string(), 1), ("state".to_string(), 2), ("candidate".to_string(), 7)].into_iter().collect(),
            },
            workload: WorkloadSpec {
                write_rate_day: 4.0,
                write_rate_night: 2.0,
                read_rate: 2.0,
                delete_fraction: 0.05,
                bursts: vec![Burst { at: 3600, size: 1000 }, Burst { at: 4200, size: 1000 }],
                ..WorkloadSpec::default()
            },
            faults: FaultProfile { availability_p: 0.99, stream_lag: 1, ..FaultProfile::healthy() },
            retry: RetryPolicy::default(),
            pipeline: Pipeline { queue_rate_limit: 20_000, offline_every: Some(10 * HOUR), ..Pipeline::default() },
            metrics: MetricsSpec::default(),
            ramp: Some(RampPlan::at(ramp_time)),
            criteria: RampCriteria::default(),
            bug: None,
            expect: Expectations {
                switch_outcome: Some(SwitchOutcome::Switched),
                max_post_switch_discrepancies: Some(0),
                attempts_ratio_range: Some((1.0, 1.02)),
                steady_from: Some(ramp_time - 1000),
                steady_min_overall: Some(0.99999),
                steady_min_settled: Some(1.0),
                max_dead_letters: Some(0),
                max_resurrections: Some(0),
                ..Expectations::default()
            },
            schema: SchemaSpec { types, rules },
        }
    }

    /// Smallest valid scenario: no records, no traffic.
    pub fn empty() -> Scenario {
        let (types, rules) = schemas::recruiting_types();
        Scenario {
            name: "empty".into(),
            seed: 0,
            start: 0,
            end: 10,
            population: Population { initial_records: 0, mix: BTreeMap::new() },
            workload: WorkloadSpec::default(),
            faults: FaultProfile::healthy(),
            retry: RetryPolicy::default(),
            pipeline: Pipeline::default(),
            metrics: MetricsSpec::default(),
            ramp: None,
            criteria: RampCriteria::default(),
            bug: None,
            expect: Expectations::default(),
            schema: SchemaSpec { types, rules },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_byte_identical() {
        for s in [Scenario::default_scenario(), Scenario::empty()] {
            let a = s.to_toml();
            let parsed = Scenario::from_toml(&a).unwrap();
            assert_eq!(parsed, s);
            assert_eq!(parsed.to_toml(), a);
        }
    }

    #[test]
    fn duration_sugar_and_defaults() {
        let mut text = Scenario::empty().to_toml();
        text = text.replace("end = 10", "end = \"2d\"");
        let s = Scenario::from_toml(&text).unwrap();
        assert_eq!(s.end, 2880);
        assert!(s.to_toml().contains("end = 2880"));
        assert_eq!(s.pipeline.offline_cutoff, 1440);
        assert_eq!(s.ramp, None);
    }

    #[test]
    fn invalid_scenarios_are_rejected() {
        let mut s = Scenario::empty();
        s.end = 0;
        s.start = 5;
        assert!(matches!(s.validate(), Err(ConfigError::Invalid(_))));
        let mut s = Scenario::empty();
        s.faults.availability_p = 0.0;
        assert!(matches!(s.validate(), Err(ConfigError::Faults(_))));
        let mut s = Scenario::empty();
        s.schema.rules[0].sources = vec![TypeName::new("ghost")];
        assert!(matches!(s.validate(), Err(ConfigError::Schema(_))));
        let mut s = Scenario::empty();
        s.population.mix.insert("nope".into(), 1);
        assert!(s.validate().is_err());
        assert!(matches!(Scenario::from_toml("name = 1"), Err(ConfigError::Parse(_))));
    }
}

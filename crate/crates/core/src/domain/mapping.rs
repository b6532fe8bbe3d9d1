use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::schema::{MappingRule, SchemaHandle};
use super::types::{EntityKey, ProvenanceVector, SourceKey, SourceRecord, TargetKey, TargetRecord, Value};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TransformError {
    #[error("rule `{rule}`: malformed input: {reason}")]
    Malformed { rule: String, reason: String },
    #[error("rule `{rule}`: mapping bug on {key}")]
    MappingBug { rule: String, key: SourceKey },
}

/// Read access to a set of source records.
pub trait SourceView {
    fn source(&self, key: &SourceKey) -> Option<&SourceRecord>;
}

impl SourceView for BTreeMap<SourceKey, SourceRecord> {
    fn source(&self, key: &SourceKey) -> Option<&SourceRecord> {
        self.get(key)
    }
}

impl SourceView for HashMap<SourceKey, SourceRecord> {
    fn source(&self, key: &SourceKey) -> Option<&SourceRecord> {
        self.get(key)
    }
}

/// Target keys affected by a source key, and the other source keys feeding them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyMap {
    pub targets: Vec<TargetKey>,
    pub co_inputs: Vec<SourceKey>,
}

/// Apply `rule` to the present source records of one id.
///
/// Output provenance lists exactly the consumed sources. If every consumed
/// source is tombstoned the outputs are tombstones.
pub fn map_source(rule: &MappingRule, sources: &[SourceRecord]) -> Result<Vec<TargetRecord>, TransformError> {
    let malformed = |reason: String| TransformError::Malformed { rule: rule.name.clone(), reason };
    let Some(first) = sources.first() else {
        return Err(malformed("no source records".into()));
    };
    let id = first.key.id;
    let mut ordered: Vec<&SourceRecord> = Vec::with_capacity(sources.len());
    for ty in &rule.sources {
        let mut found = sources.iter().filter(|s| &s.key.ty == ty);
        if let Some(s) = found.next() {
            if found.next().is_some() {
                return Err(malformed(format!("duplicate input of type `{ty}`")));
            }
            ordered.push(s);
        }
    }
    if ordered.len() != sources.len() {
        return Err(malformed("input type not consumed by this rule".into()));
    }
    if let Some(other) = sources.iter().find(|s| s.key.id != id) {
        return Err(malformed(format!("inputs disagree on id: {} vs {}", first.key, other.key)));
    }

    let provenance = ProvenanceVector::from_entries(ordered.iter().map(|s| (s.key.clone(), s.version)));
    let tombstone = ordered.iter().all(|s| s.tombstone);
    let mut combined = Value::new();
    if !tombstone {
        for s in ordered.iter().filter(|s| !s.tombstone) {
            combined.extend(s.value.iter().map(|(k, v)| (k.clone(), v.clone())));
        }
        if let Some(missing) = rule.required_fields.iter().find(|f| !combined.contains_key(*f)) {
            return Err(malformed(format!("missing required field `{missing}` for id {id}")));
        }
    }

    Ok(rule
        .outputs
        .iter()
        .map(|out| {
            let value = if tombstone {
                Value::new()
            } else {
                match &out.fields {
                    None => combined.clone(),
                    Some(fields) => fields.iter().filter_map(|f| combined.get_key_value(f)).map(|(k, v)| (k.clone(), v.clone())).collect(),
                }
            };
            TargetRecord { key: EntityKey { ty: out.target.clone(), id }, value, provenance: provenance.clone(), tombstone }
        })
        .collect())
}

/// A deliberately broken transform, for exercising the dead-letter path.
///
/// While active, the named rule fails for every id with
/// `id % id_modulus == id_residue`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingBug {
    pub rule: String,
    pub id_modulus: u64,
    #[serde(default)]
    pub id_residue: u64,
    #[serde(default = "default_true")]
    pub active: bool,
}

fn default_true() -> bool {
    true
}

impl MappingBug {
    pub fn hits(&self, rule: &MappingRule, id: u64) -> bool {
        self.active && rule.name == self.rule && self.id_modulus > 0 && id % self.id_modulus == self.id_residue
    }
}

/// Schema-aware mapping front end used by every writer and verifier.
#[derive(Clone, Debug)]
pub struct Mapper {
    schema: SchemaHandle,
    bug: Option<MappingBug>,
}

impl Mapper {
    pub fn new(schema: SchemaHandle) -> Self {
        Mapper { schema, bug: None }
    }

    pub fn with_bug(mut self, bug: MappingBug) -> Self {
        self.bug = Some(bug);
        self
    }

    pub fn schema(&self) -> &SchemaHandle {
        &self.schema
    }

    pub fn bug(&self) -> Option<&MappingBug> {
        self.bug.as_ref()
    }

    pub fn set_bug_active(&mut self, active: bool) {
        if let Some(b) = &mut self.bug {
            b.active = active;
        }
    }

    pub fn key_map(&self, key: &SourceKey) -> KeyMap {
        match self.schema.rule_for_source(&key.ty) {
            None => KeyMap { targets: Vec::new(), co_inputs: Vec::new() },
            Some(idx) => {
                let rule = self.schema.rule(idx);
                KeyMap {
                    targets: rule.target_types().map(|t| EntityKey { ty: t.clone(), id: key.id }).collect(),
                    co_inputs: rule.sources.iter().filter(|t| **t != key.ty).map(|t| EntityKey { ty: t.clone(), id: key.id }).collect(),
                }
            }
        }
    }

    pub fn affected_targets(&self, key: &SourceKey) -> Vec<TargetKey> {
        self.key_map(key).targets
    }

    /// Source keys feeding a target key.
    pub fn contributing_sources(&self, key: &TargetKey) -> Vec<SourceKey> {
        match self.schema.rule_for_target(&key.ty) {
            None => Vec::new(),
            Some(idx) => self.schema.rule(idx).sources.iter().map(|t| EntityKey { ty: t.clone(), id: key.id }).collect(),
        }
    }

    /// Expected outputs of the rule at `rule_idx` for `id`, read from `view`.
    /// Empty if no input record exists.
    pub fn expected_outputs(&self, view: &impl SourceView, rule_idx: usize, id: u64) -> Result<Vec<TargetRecord>, TransformError> {
        let rule = self.schema.rule(rule_idx);
        let inputs: Vec<SourceRecord> =
            rule.sources.iter().filter_map(|t| view.source(&EntityKey { ty: t.clone(), id })).cloned().collect();
        if inputs.is_empty() {
            return Ok(Vec::new());
        }
        if let Some(bug) = &self.bug {
            if bug.hits(rule, id) {
                return Err(TransformError::MappingBug { rule: rule.name.clone(), key: inputs[0].key.clone() });
            }
        }
        let outputs = map_source(rule, &inputs)?;
        for out in &outputs {
            if out.is_live() {
                self.parent_keys(out)?;
            }
        }
        Ok(outputs)
    }

    /// Expected state of one target key; `None` if no contributing source exists.
    pub fn expected_for(&self, view: &impl SourceView, key: &TargetKey) -> Result<Option<TargetRecord>, TransformError> {
        let Some(idx) = self.schema.rule_for_target(&key.ty) else {
            return Ok(None);
        };
        Ok(self.expected_outputs(view, idx, key.id)?.into_iter().find(|r| &r.key == key))
    }

    /// Expected state of every target key fed by `source`.
    pub fn expected_for_source(&self, view: &impl SourceView, source: &SourceKey) -> Result<Vec<TargetRecord>, TransformError> {
        match self.schema.rule_for_source(&source.ty) {
            None => Ok(Vec::new()),
            Some(idx) => self.expected_outputs(view, idx, source.id),
        }
    }

    /// Outputs of the same rule and id whose type depends on `key`'s type.
    pub fn dependent_siblings(&self, key: &TargetKey) -> Vec<TargetKey> {
        let rule = self.schema.rule_for_target(&key.ty);
        self.schema
            .children_of(&key.ty)
            .iter()
            .filter(|c| rule.is_some() && self.schema.rule_for_target(c) == rule)
            .map(|c| EntityKey { ty: c.clone(), id: key.id })
            .collect()
    }

    /// Parent target keys referenced by a target record, per the schema.
    pub fn parent_keys(&self, record: &TargetRecord) -> Result<Vec<TargetKey>, TransformError> {
        let Some(et) = self.schema.entity_type(&record.key.ty) else {
            return Ok(Vec::new());
        };
        et.parents
            .iter()
            .map(|(pty, field)| {
                let raw = record.value.get(field).ok_or_else(|| TransformError::Malformed {
                    rule: self.rule_name_for_target(&record.key),
                    reason: format!("{} lacks reference field `{field}`", record.key),
                })?;
                let id = raw.parse::<u64>().map_err(|_| TransformError::Malformed {
                    rule: self.rule_name_for_target(&record.key),
                    reason: format!("{} has non-numeric reference `{field}`={raw}", record.key),
                })?;
                Ok(EntityKey { ty: pty.clone(), id })
            })
            .collect()
    }

    fn rule_name_for_target(&self, key: &TargetKey) -> String {
        self.schema.rule_for_target(&key.ty).map(|i| self.schema.rule(i).name.clone()).unwrap_or_default()
    }
}

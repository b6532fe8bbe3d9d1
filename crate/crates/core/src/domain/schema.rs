use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::types::TypeName;

/// A registered entity type and the parent types it depends on.
///
/// Each parent is referenced from a record's value through a field holding
/// the parent's id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityType {
    pub name: TypeName,
    /// parent type -> reference field
    #[serde(default)]
    pub parents: BTreeMap<TypeName, String>,
}

impl EntityType {
    pub fn root(name: &str) -> Self {
        EntityType { name: TypeName::new(name), parents: BTreeMap::new() }
    }

    pub fn depends_on(mut self, parent: &str, via_field: &str) -> Self {
        self.parents.insert(TypeName::new(parent), via_field.to_string());
        self
    }

    pub fn parent_types(&self) -> impl Iterator<Item = &TypeName> {
        self.parents.keys()
    }
}

/// One output of a mapping rule.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleOutput {
    pub target: TypeName,
    /// Fields projected from the combined source view; `None` keeps all.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fields: Option<Vec<String>>,
}

/// Declarative, id-preserving mapping from source types to target types.
///
/// Source records of all `sources` types sharing an id are combined (later
/// types win on field collisions) and projected into each output.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingRule {
    pub name: String,
    pub sources: Vec<TypeName>,
    pub outputs: Vec<RuleOutput>,
    /// Fields the combined live view must carry; absence is a malformed value.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub required_fields: Vec<String>,
}

impl MappingRule {
    pub fn identity(name: &str, source: &str, target: &str) -> Self {
        MappingRule {
            name: name.to_string(),
            sources: vec![TypeName::new(source)],
            outputs: vec![RuleOutput { target: TypeName::new(target), fields: None }],
            required_fields: Vec::new(),
        }
    }

    pub fn split(name: &str, source: &str, parts: &[(&str, &[&str])]) -> Self {
        MappingRule {
            name: name.to_string(),
            sources: vec![TypeName::new(source)],
            outputs: parts
                .iter()
                .map(|(t, fields)| RuleOutput {
                    target: TypeName::new(t),
                    fields: Some(fields.iter().map(|f| f.to_string()).collect()),
                })
                .collect(),
            required_fields: Vec::new(),
        }
    }

    pub fn merge(name: &str, sources: &[&str], target: &str) -> Self {
        MappingRule {
            name: name.to_string(),
            sources: sources.iter().map(|s| TypeName::new(s)).collect(),
            outputs: vec![RuleOutput { target: TypeName::new(target), fields: None }],
            required_fields: Vec::new(),
        }
    }

    pub fn requiring(mut self, fields: &[&str]) -> Self {
        self.required_fields = fields.iter().map(|f| f.to_string()).collect();
        self
    }

    pub fn target_types(&self) -> impl Iterator<Item = &TypeName> {
        self.outputs.iter().map(|o| &o.target)
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum SchemaError {
    #[error("dependency cycle: {}", format_cycle(.0))]
    Cycle(Vec<TypeName>),
    #[error("unknown entity type `{0}`")]
    UnknownType(TypeName),
    #[error("duplicate entity type `{0}`")]
    DuplicateType(TypeName),
    #[error("invalid rule `{rule}`: {reason}")]
    InvalidRule { rule: String, reason: String },
}

fn format_cycle(cycle: &[TypeName]) -> String {
    let mut parts: Vec<&str> = cycle.iter().map(|t| t.as_str()).collect();
    if let Some(first) = cycle.first() {
        parts.push(first.as_str());
    }
    parts.join(" -> ")
}

/// Frozen, validated schema.
#[derive(Debug)]
pub struct Schema {
    types: BTreeMap<TypeName, EntityType>,
    rules: Vec<MappingRule>,
    order: Vec<TypeName>,
    rank: HashMap<TypeName, usize>,
    rule_by_source: HashMap<TypeName, usize>,
    rule_by_target: HashMap<TypeName, usize>,
    children: HashMap<TypeName, Vec<TypeName>>,
}

pub type SchemaHandle = Arc<Schema>;

/// Validate types and rules and freeze the dependency order.
pub fn register_schema(types: Vec<EntityType>, rules: Vec<MappingRule>) -> Result<SchemaHandle, SchemaError> {
    let mut by_name = BTreeMap::new();
    for t in types {
        if by_name.contains_key(&t.name) {
            return Err(SchemaError::DuplicateType(t.name));
        }
        by_name.insert(t.name.clone(), t);
    }
    for t in by_name.values() {
        for p in t.parent_types() {
            if !by_name.contains_key(p) {
                return Err(SchemaError::UnknownType(p.clone()));
            }
        }
    }
    let order = topo_sort(&by_name)?;
    let rank = order.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();

    let mut rule_by_source = HashMap::new();
    let mut rule_by_target = HashMap::new();
    for (idx, rule) in rules.iter().enumerate() {
        let invalid = |reason: &str| SchemaError::InvalidRule { rule: rule.name.clone(), reason: reason.to_string() };
        if rule.sources.is_empty() {
            return Err(invalid("no source types"));
        }
        if rule.outputs.is_empty() {
            return Err(invalid("no target types"));
        }
        for s in &rule.sources {
            if !by_name.contains_key(s) {
                return Err(SchemaError::UnknownType(s.clone()));
            }
            if rule_by_source.insert(s.clone(), idx).is_some() {
                return Err(invalid(&format!("source type `{s}` consumed by more than one rule")));
            }
        }
        for t in rule.target_types() {
            if !by_name.contains_key(t) {
                return Err(SchemaError::UnknownType(t.clone()));
            }
            if rule_by_target.insert(t.clone(), idx).is_some() {
                return Err(invalid(&format!("target type `{t}` produced more than once")));
            }
        }
    }

    let mut children: HashMap<TypeName, Vec<TypeName>> = HashMap::new();
    for t in by_name.values() {
        for p in t.parent_types() {
            children.entry(p.clone()).or_default().push(t.name.clone());
        }
    }

    Ok(Arc::new(Schema { types: by_name, rules, order, rank, rule_by_source, rule_by_target, children }))
}

/// Kahn's algorithm; ready nodes leave in name order.
fn topo_sort(types: &BTreeMap<TypeName, EntityType>) -> Result<Vec<TypeName>, SchemaError> {
    let mut pending: BTreeMap<&TypeName, usize> = types.iter().map(|(n, t)| (n, t.parents.len())).collect();
    let mut dependents: BTreeMap<&TypeName, Vec<&TypeName>> = BTreeMap::new();
    for t in types.values() {
        for p in t.parent_types() {
            dependents.entry(p).or_default().push(&t.name);
        }
    }
    let mut ready: BTreeSet<&TypeName> = pending.iter().filter(|(_, n)| **n == 0).map(|(t, _)| *t).collect();
    let mut order = Vec::with_capacity(types.len());
    while let Some(next) = ready.pop_first() {
        order.push(next.clone());
        for child in dependents.get(next).into_iter().flatten() {
            let n = pending.get_mut(child).expect("registered");
            *n -= 1;
            if *n == 0 {
                ready.insert(child);
            }
        }
    }
    if order.len() == types.len() {
        return Ok(order);
    }
    let placed: BTreeSet<&TypeName> = order.iter().collect();
    Err(SchemaError::Cycle(find_cycle(types, &placed)))
}

fn find_cycle(types: &BTreeMap<TypeName, EntityType>, placed: &BTreeSet<&TypeName>) -> Vec<TypeName> {
    // Every unplaced node has an unplaced parent; walk parents until a repeat.
    let start = types.keys().find(|t| !placed.contains(t)).expect("cycle exists");
    let mut path: Vec<TypeName> = Vec::new();
    let mut seen: HashMap<TypeName, usize> = HashMap::new();
    let mut cur = start.clone();
    loop {
        if let Some(&at) = seen.get(&cur) {
            let mut cycle = path[at..].to_vec();
            cycle.reverse();
            return cycle;
        }
        seen.insert(cur.clone(), path.len());
        path.push(cur.clone());
        cur = types[&cur]
            .parent_types()
            .find(|p| !placed.contains(p))
            .expect("unplaced node keeps an unplaced parent")
            .clone();
    }
}

impl Schema {
    pub fn topo_order(&self) -> &[TypeName] {
        &self.order
    }

    pub fn rank(&self, ty: &TypeName) -> Option<usize> {
        self.rank.get(ty).copied()
    }

    pub fn entity_type(&self, ty: &TypeName) -> Option<&EntityType> {
        self.types.get(ty)
    }

    pub fn types(&self) -> impl Iterator<Item = &EntityType> {
        self.types.values()
    }

    pub fn rules(&self) -> &[MappingRule] {
        &self.rules
    }

    pub fn rule(&self, idx: usize) -> &MappingRule {
        &self.rules[idx]
    }

    pub fn rule_index(&self, name: &str) -> Option<usize> {
        self.rules.iter().position(|r| r.name == name)
    }

    pub fn rule_for_source(&self, ty: &TypeName) -> Option<usize> {
        self.rule_by_source.get(ty).copied()
    }

    pub fn rule_for_target(&self, ty: &TypeName) -> Option<usize> {
        self.rule_by_target.get(ty).copied()
    }

    /// Types nothing depends on.
    pub fn is_leaf(&self, ty: &TypeName) -> bool {
        self.children.get(ty).is_none_or(|c| c.is_empty())
    }

    pub fn children_of(&self, ty: &TypeName) -> &[TypeName] {
        self.children.get(ty).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Source types in dependency order.
    pub fn source_types_in_order(&self) -> Vec<TypeName> {
        self.order.iter().filter(|t| self.rule_by_source.contains_key(*t)).cloned().collect()
    }
}

/// Handle accessor mirroring the schema's frozen order.
pub fn topo_order(handle: &SchemaHandle) -> Vec<TypeName> {
    handle.topo_order().to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[TypeName]) -> Vec<&str> {
        v.iter().map(|t| t.as_str()).collect()
    }

    #[test]
    fn single_type_with_identity_rule() {
        let h = register_schema(vec![EntityType::root("P"), EntityType::root("P'")], vec![MappingRule::identity("p", "P", "P'")])
            .unwrap();
        assert_eq!(names(&topo_order(&h)), ["P", "P'"]);
        let h = register_schema(vec![EntityType::root("P")], vec![]).unwrap();
        assert_eq!(names(&topo_order(&h)), ["P"]);
    }

    #[test]
    fn dependency_graph_orders_parents_first() {
        let types = vec![
            EntityType::root("C").depends_on("P", "project").depends_on("S", "state"),
            EntityType::root("S").depends_on("P", "project"),
            EntityType::root("P"),
        ];
        let h = register_schema(types, vec![]).unwrap();
        assert_eq!(names(&topo_order(&h)), ["P", "S", "C"]);
    }

    #[test]
    fn independent_roots_break_ties_by_name() {
        let h = register_schema(vec![EntityType::root("B"), EntityType::root("A")], vec![]).unwrap();
        assert_eq!(names(&topo_order(&h)), ["A", "B"]);
    }

    #[test]
    fn two_cycle_is_named() {
        let err = register_schema(vec![EntityType::root("A").depends_on("B", "b"), EntityType::root("B").depends_on("A", "a")], vec![])
            .unwrap_err();
        match &err {
            SchemaError::Cycle(c) => {
                let mut n = names(c);
                n.sort();
                assert_eq!(n, ["A", "B"]);
            }
            other => panic!("{other:?}"),
        }
        assert!(err.to_string().contains("->"));
    }

    #[test]
    fn longer_cycle_excludes_tail() {
        // D hangs off the A->B->C->A cycle and must not be named.
        let err = register_schema(
            vec![
                EntityType::root("A").depends_on("C", "c"),
                EntityType::root("B").depends_on("A", "a"),
                EntityType::root("C").depends_on("B", "b"),
                EntityType::root("D").depends_on("A", "a"),
            ],
            vec![],
        )
        .unwrap_err();
        let SchemaError::Cycle(c) = err else { panic!() };
        let mut n = names(&c);
        n.sort();
        assert_eq!(n, ["A", "B", "C"]);
    }

    #[test]
    fn unknown_types_are_rejected() {
        assert_eq!(
            register_schema(vec![EntityType::root("A").depends_on("Z", "z")], vec![]).unwrap_err(),
            SchemaError::UnknownType(TypeName::new("Z"))
        );
        assert_eq!(
            register_schema(vec![EntityType::root("A")], vec![MappingRule::identity("r", "A", "B")]).unwrap_err(),
            SchemaError::UnknownType(TypeName::new("B"))
        );
    }

    #[test]
    fn source_consumed_twice_is_invalid() {
        let err = register_schema(
            vec![EntityType::root("A"), EntityType::root("X"), EntityType::root("Y")],
            vec![MappingRule::identity("r1", "A", "X"), MappingRule::identity("r2", "A", "Y")],
        )
        .unwrap_err();
        assert!(matches!(err, SchemaError::InvalidRule { .. }));
    }
}

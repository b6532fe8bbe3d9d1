//! Ready-made schemas used by the shipped scenarios, examples and tests.

use crate::domain::{register_schema, EntityType, MappingRule, SchemaHandle};

/// Projects, hiring-pipeline states and candidates, mapped one-to-one.
/// A state belongs to a project; a candidate belongs to a project and sits
/// in a state.
pub fn recruiting_types() -> (Vec<EntityType>, Vec<MappingRule>) {
    let types = vec![
        EntityType::root("project"),
        EntityType::root("state").depends_on("project", "project"),
        EntityType::root("candidate").depends_on("project", "project").depends_on("state", "state"),
        EntityType::root("project_v2"),
        EntityType::root("state_v2").depends_on("project_v2", "project"),
        EntityType::root("candidate_v2").depends_on("project_v2", "project").depends_on("state_v2", "state"),
    ];
    let rules = vec![
        MappingRule::identity("project", "project", "project_v2"),
        MappingRule::identity("state", "state", "state_v2").requiring(&["project"]),
        MappingRule::identity("candidate", "candidate", "candidate_v2").requiring(&["project", "state"]),
    ];
    (types, rules)
}

pub fn recruiting() -> SchemaHandle {
    let (t, r) = recruiting_types();
    register_schema(t, r).expect("recruiting schema is valid")
}

/// Many-to-many variant: a candidate splits into a core record and a notes
/// record that points back at it through the candidate's own `id` field; a
/// seat and a profile merge into one member.
pub fn many_to_many_types() -> (Vec<EntityType>, Vec<MappingRule>) {
    let types = vec![
        EntityType::root("project"),
        EntityType::root("candidate").depends_on("project", "project"),
        EntityType::root("seat"),
        EntityType::root("profile"),
        EntityType::root("project_v2"),
        EntityType::root("candidate_core").depends_on("project_v2", "project"),
        EntityType::root("candidate_notes").depends_on("candidate_core", "id"),
        EntityType::root("member"),
    ];
    let rules = vec![
        MappingRule::identity("project", "project", "project_v2"),
        MappingRule::split("candidate", "candidate", &[("candidate_core", &["project", "name"]), ("candidate_notes", &["id", "notes"])])
            .requiring(&["project", "id"]),
        MappingRule::merge("member", &["seat", "profile"], "member"),
    ];
    (types, rules)
}

pub fn many_to_many() -> SchemaHandle {
    let (t, r) = many_to_many_types();
    register_schema(t, r).expect("many-to-many schema is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_schemas_register() {
        let r = recruiting();
        let order: Vec<&str> = r.topo_order().iter().map(|t| t.as_str()).collect();
        assert_eq!(order, ["project", "project_v2", "state", "candidate", "state_v2", "candidate_v2"]);
        many_to_many();
    }
}

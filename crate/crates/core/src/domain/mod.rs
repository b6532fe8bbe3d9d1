//! Entity model, versioning, many-to-many mapping and the entity dependency graph.

mod compare;
mod mapping;
mod schema;
mod types;

pub use compare::{at_least_as_fresh, classify, compare};
pub use mapping::{map_source, KeyMap, Mapper, MappingBug, SourceView, TransformError};
pub use schema::{register_schema, topo_order, EntityType, MappingRule, RuleOutput, Schema, SchemaError, SchemaHandle};
pub use types::{
    DiscrepancyClass, EntityKey, ProvenanceVector, SourceKey, SourceRecord, TargetKey, TargetRecord, Tick, TypeName, Value,
    VersionStamp,
};

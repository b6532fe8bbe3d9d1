//! Register a schema, inspect its dependency order and map source records
//! into target records with provenance. Includes a one-to-many split and a
//! many-to-one merge.

use convergence::domain::{EntityKey, Mapper, Value};
use convergence::schemas;
use convergence::stores::{LegacyStore, LegacyWrite};

fn value(kv: &[(&str, &str)]) -> Value {
    kv.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

fn main() -> anyhow::Result<()> {
    let schema = schemas::recruiting();
    println!("recruiting order: {:?}", schema.topo_order());

    let mapper = Mapper::new(schema);
    let mut legacy = LegacyStore::new();
    legacy.commit(EntityKey::new("project", 1), LegacyWrite::Put(value(&[("id", "1"), ("name", "search")])), 1);
    legacy.commit(EntityKey::new("candidate", 9), LegacyWrite::Put(value(&[("id", "9"), ("project", "1"), ("state", "4"), ("name", "ada")])), 2);
    for src in [EntityKey::new("project", 1), EntityKey::new("candidate", 9)] {
        for out in mapper.expected_for_source(&legacy, &src)? {
            println!("{src} -> {} {:?} provenance {:?} parents {:?}", out.key, out.value, out.provenance, mapper.parent_keys(&out)?);
        }
    }

    let mapper = Mapper::new(schemas::many_to_many());
    println!("\nmany-to-many order: {:?}", mapper.schema().topo_order());
    let mut legacy = LegacyStore::new();
    legacy.commit(EntityKey::new("candidate", 3), LegacyWrite::Put(value(&[("id", "3"), ("project", "1"), ("name", "bo"), ("notes", "strong")])), 1);
    legacy.commit(EntityKey::new("seat", 5), LegacyWrite::Put(value(&[("id", "5"), ("name", "seat-5")])), 2);
    legacy.commit(EntityKey::new("profile", 5), LegacyWrite::Put(value(&[("id", "5"), ("notes", "admin")])), 3);
    for src in [EntityKey::new("candidate", 3), EntityKey::new("seat", 5)] {
        for out in mapper.expected_for_source(&legacy, &src)? {
            println!("{src} -> {} {:?} from {} source(s)", out.key, out.value, out.provenance.iter().count());
        }
    }
    Ok(())
}

use std::collections::{BTreeMap, HashMap};

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use super::scenario::{Population, WorkloadSpec};
use crate::domain::{EntityKey, Schema, SourceKey, Tick, TypeName, Value};
use crate::stores::LegacyWrite;

/// One client operation against the legacy store.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LegacyOp {
    Write(SourceKey, LegacyWrite),
    Read(SourceKey),
}

#[derive(Debug, Default)]
struct LiveSet {
    keys: Vec<u64>,
    index: HashMap<u64, usize>,
    next_id: u64,
}

impl LiveSet {
    fn insert(&mut self, id: u64) {
        if !self.index.contains_key(&id) {
            self.index.insert(id, self.keys.len());
            self.keys.push(id);
        }
        self.next_id = self.next_id.max(id + 1);
    }

    fn remove(&mut self, id: u64) {
        if let Some(i) = self.index.remove(&id) {
            self.keys.swap_remove(i);
            if let Some(&moved) = self.keys.get(i) {
                self.index.insert(moved, i);
            }
        }
    }
}

/// Seeded client traffic: Poisson writes and reads on a day/night cycle,
/// scheduled bulk bursts, and the bulk-freeze switch.
#[derive(Debug)]
pub struct WorkloadGenerator {
    spec: WorkloadSpec,
    rng: ChaCha8Rng,
    types: Vec<(TypeName, u64)>,
    parents: BTreeMap<TypeName, Vec<(TypeName, String)>>,
    leaves: Vec<TypeName>,
    live: BTreeMap<TypeName, LiveSet>,
    rejected_writes: u64,
    burst_writes: u64,
}

fn pick_weighted<'a>(rng: &mut impl Rng, items: &'a [(TypeName, u64)]) -> Option<&'a TypeName> {
    let total: u64 = items.iter().map(|(_, w)| w).sum();
    if total == 0 {
        return None;
    }
    let mut x = rng.random_range(0..total);
    for (t, w) in items {
        if x < *w {
            return Some(t);
        }
        x -= w;
    }
    None
}

impl WorkloadGenerator {
    pub fn new(spec: WorkloadSpec, population: &Population, schema: &Schema, rng: ChaCha8Rng) -> Self {
        let order = schema.source_types_in_order();
        let types: Vec<(TypeName, u64)> = order.iter().filter_map(|t| population.mix.get(t.as_str()).map(|w| (t.clone(), *w))).collect();
        let parents = types
            .iter()
            .map(|(t, _)| {
                let p = schema.entity_type(t).map(|e| e.parents.iter().map(|(pt, f)| (pt.clone(), f.clone())).collect()).unwrap_or_default();
                (t.clone(), p)
            })
            .collect();
        let leaves = types.iter().map(|(t, _)| t.clone()).filter(|t| schema.is_leaf(t)).collect();
        let live = types.iter().map(|(t, _)| (t.clone(), LiveSet::default())).collect();
        WorkloadGenerator { spec, rng, types, parents, leaves, live, rejected_writes: 0, burst_writes: 0 }
    }

    fn value_for(&mut self, ty: &TypeName, id: u64) -> Value {
        let mut v = Value::new();
        v.insert("id".into(), id.to_string());
        v.insert("name".into(), format!("n{}", self.rng.random_range(0..1_000_000u32)));
        v.insert("notes".into(), format!("r{}", self.rng.random_range(0..1_000_000u32)));
        for (pt, field) in self.parents.get(ty).cloned().unwrap_or_default() {
            if let Some(&pid) = self.live.get(&pt).and_then(|s| s.keys.choose(&mut self.rng)) {
                v.insert(field, pid.to_string());
            }
        }
        v
    }

    fn insert(&mut self, ty: &TypeName) -> LegacyOp {
        let id = self.live[ty].next_id;
        let v = self.value_for(ty, id);
        self.live.get_mut(ty).expect("known type").insert(id);
        LegacyOp::Write(EntityKey { ty: ty.clone(), id }, LegacyWrite::Put(v))
    }

    fn random_live(&mut self, among: &[TypeName]) -> Option<SourceKey> {
        let weights: Vec<(TypeName, u64)> = among.iter().map(|t| (t.clone(), self.live[t].keys.len() as u64)).collect();
        let ty = pick_weighted(&mut self.rng, &weights)?.clone();
        let id = *self.live[&ty].keys.choose(&mut self.rng)?;
        Some(EntityKey { ty, id })
    }

    /// Records to preload, apportioned over the mix, parents' types first.
    pub fn preload(&mut self, n: u64) -> Vec<LegacyOp> {
        let total: u64 = self.types.iter().map(|(_, w)| w).sum();
        if n == 0 || total == 0 {
            return Vec::new();
        }
        // largest remainder apportionment
        let mut counts: Vec<(u64, u64, usize)> =
            self.types.iter().enumerate().map(|(i, (_, w))| (n * w / total, (n * w) % total, i)).collect();
        let mut left = n - counts.iter().map(|c| c.0).sum::<u64>();
        let mut by_rem: Vec<usize> = (0..counts.len()).collect();
        by_rem.sort_by_key(|&i| (std::cmp::Reverse(counts[i].1), i));
        for i in by_rem {
            if left == 0 {
                break;
            }
            counts[i].0 += 1;
            left -= 1;
        }
        let mut ops = Vec::with_capacity(n as usize);
        for (count, _, i) in counts {
            let ty = self.types[i].0.clone();
            for _ in 0..count {
                ops.push(self.insert(&ty));
            }
        }
        ops
    }

    fn one_write(&mut self, insert_fraction: f64, delete_fraction: f64) -> Option<LegacyOp> {
        let u: f64 = self.rng.random();
        let all: Vec<TypeName> = self.types.iter().map(|(t, _)| t.clone()).collect();
        if u < delete_fraction {
            let leaves = self.leaves.clone();
            if let Some(key) = self.random_live(&leaves) {
                self.live.get_mut(&key.ty).expect("known").remove(key.id);
                return Some(LegacyOp::Write(key, LegacyWrite::Delete));
            }
        }
        if u >= delete_fraction + insert_fraction {
            if let Some(key) = self.random_live(&all) {
                let v = self.value_for(&key.ty, key.id);
                return Some(LegacyOp::Write(key, LegacyWrite::Put(v)));
            }
        }
        let types = self.types.clone();
        let ty = pick_weighted(&mut self.rng, &types)?.clone();
        Some(self.insert(&ty))
    }

    /// Operations issued at `now`. With writes rejected, write attempts are
    /// drawn and counted but not emitted; bursts are skipped while frozen.
    pub fn step(&mut self, now: Tick, writes_allowed: bool, bulk_frozen: bool) -> Vec<LegacyOp> {
        let mut ops = Vec::new();
        let rate = self.spec.write_rate(now);
        let writes = if rate > 0.0 { Poisson::new(rate).expect("positive rate").sample(&mut self.rng) as u64 } else { 0 };
        let reads = if self.spec.read_rate > 0.0 { Poisson::new(self.spec.read_rate).expect("positive rate").sample(&mut self.rng) as u64 } else { 0 };
        let burst: u64 = if bulk_frozen { 0 } else { self.spec.bursts.iter().filter(|b| b.at == now).map(|b| b.size).sum() };
        if !writes_allowed {
            self.rejected_writes += writes + burst;
        } else {
            let (ins, del) = (self.spec.insert_fraction, self.spec.delete_fraction);
            for _ in 0..writes {
                ops.extend(self.one_write(ins, del));
            }
            // bulk operations rewrite existing records
            for _ in 0..burst {
                ops.extend(self.one_write(0.0, 0.0));
            }
            self.burst_writes += burst;
        }
        let all: Vec<TypeName> = self.types.iter().map(|(t, _)| t.clone()).collect();
        for _ in 0..reads {
            if let Some(k) = self.random_live(&all) {
                ops.push(LegacyOp::Read(k));
            }
        }
        ops
    }

    pub fn rejected_writes(&self) -> u64 {
        self.rejected_writes
    }

    pub fn burst_writes(&self) -> u64 {
        self.burst_writes
    }

    pub fn live_count(&self) -> usize {
        self.live.values().map(|s| s.keys.len()).sum()
    }
}

/// Stateless view of one step for callers that only need the op list.
pub fn generate_workload_step(generator: &mut WorkloadGenerator, now: Tick, writes_allowed: bool, bulk_frozen: bool) -> Vec<LegacyOp> {
    generator.step(now, writes_allowed, bulk_frozen)
}

//! Rule-based peer pools: generation, train/test split, per-slot identifier
//! labels and JSON serialization.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{EnvKind, Environment};
use crate::kuhn::{KuhnEnv, KuhnPeerParams};
use crate::predator_prey::{PpConfig, PpEnv, PpPeers, PredatorPrefPolicy, PreyPathPolicy, NUM_PREY};
use crate::rng::{self, Purpose};

pub const POOL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PeerSpec {
    KuhnP2 { xi: f64, eta: f64 },
    PpPredator { target: usize },
    PpPrey { path: u32, speed: f64 },
}

impl PeerSpec {
    fn validate(&self) -> std::result::Result<(), String> {
        match *self {
            PeerSpec::KuhnP2 { xi, eta } => KuhnPeerParams::new(xi, eta).map(|_| ()).map_err(|e| e.to_string()),
            PeerSpec::PpPredator { target } if target >= NUM_PREY => Err(format!("predator target {target} out of range")),
            PeerSpec::PpPrey { speed, .. } if !(speed > 0.0 && speed.is_finite()) => Err(format!("invalid prey speed {speed}")),
            _ => Ok(()),
        }
    }
}

/// The peers occupying every non-ego slot of one environment.
pub type PeerTuple = Vec<PeerSpec>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSpec {
    pub version: u32,
    pub env: EnvKind,
    pub seed: u64,
    pub train: Vec<PeerTuple>,
    pub test: Vec<PeerTuple>,
    pub slot_cardinalities: Vec<usize>,
}

impl PoolSpec {
    /// Number of peer slots per tuple.
    pub fn num_slots(&self) -> usize {
        self.slot_cardinalities.len()
    }

    /// Identifier labels `(i_1, ..., i_m)` of a training tuple.
    pub fn slot_indices(&self, tuple: &PeerTuple) -> Result<Vec<usize>> {
        match self.env {
            EnvKind::Kuhn => self
                .train
                .iter()
                .position(|t| t == tuple)
                .map(|i| vec![i])
                .ok_or_else(|| Error::usage("tuple is not in the training pool")),
            EnvKind::PredatorPreyW => {
                let labels = pp_slot_values(&self.train);
                let values = pp_tuple_values(tuple).map_err(Error::Usage)?;
                values
                    .iter()
                    .zip(&labels)
                    .enumerate()
                    .map(|(j, (v, set))| {
                        set.iter()
                            .position(|x| x == v)
                            .ok_or_else(|| Error::usage(format!("slot {j} value {v} unseen in training pool")))
                    })
                    .collect()
            }
        }
    }

    /// Labels for every training tuple, in pool order.
    pub fn train_labels(&self) -> Result<Vec<Vec<usize>>> {
        self.train.iter().map(|t| self.slot_indices(t)).collect()
    }

    fn expected_cardinalities(&self) -> std::result::Result<Vec<usize>, String> {
        match self.env {
            EnvKind::Kuhn => Ok(vec![self.train.len()]),
            EnvKind::PredatorPreyW => {
                for t in &self.train {
                    pp_tuple_values(t)?;
                }
                Ok(pp_slot_values(&self.train).iter().map(BTreeSet::len).collect())
            }
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.train.is_empty() {
            return Err("empty training pool".into());
        }
        for t in self.train.iter().chain(&self.test) {
            let expected_len = match self.env {
                EnvKind::Kuhn => 1,
                EnvKind::PredatorPreyW => 1 + NUM_PREY,
            };
            if t.len() != expected_len {
                return Err(format!("tuple of length {} for {}", t.len(), self.env));
            }
            for p in t {
                p.validate()?;
                let ok = matches!(
                    (self.env, p),
                    (EnvKind::Kuhn, PeerSpec::KuhnP2 { .. })
                        | (EnvKind::PredatorPreyW, PeerSpec::PpPredator { .. } | PeerSpec::PpPrey { .. })
                );
                if !ok {
                    return Err(format!("peer {p:?} does not belong to {}", self.env));
                }
            }
        }
        if self.train.iter().any(|t| self.test.contains(t)) {
            return Err("train and test pools overlap".into());
        }
        let expected = self.expected_cardinalities()?;
        if expected != self.slot_cardinalities {
            return Err(format!(
                "slot_cardinalities {:?} inconsistent with training pool {:?}",
                self.slot_cardinalities, expected
            ));
        }
        Ok(())
    }
}

/// Slot values of a PP tuple: predator target, then prey path ids.
fn pp_tuple_values(tuple: &PeerTuple) -> std::result::Result<Vec<u64>, String> {
    match tuple.as_slice() {
        [PeerSpec::PpPredator { target }, PeerSpec::PpPrey { path: a, .. }, PeerSpec::PpPrey { path: b, .. }] => {
            Ok(vec![*target as u64, *a as u64, *b as u64])
        }
        other => Err(format!("malformed predator-prey tuple {other:?}")),
    }
}

fn pp_slot_values(train: &[PeerTuple]) -> Vec<BTreeSet<u64>> {
    let mut sets = vec![BTreeSet::new(); 1 + NUM_PREY];
    for t in train {
        if let Ok(v) = pp_tuple_values(t) {
            for (s, x) in sets.iter_mut().zip(v) {
                s.insert(x);
            }
        }
    }
    sets
}

/// `(ξ, η)` drawn uniformly from the unit square; train and test use
/// separate random streams.
pub fn gen_kuhn_pool(n_train: usize, n_test: usize, seed: u64) -> Result<PoolSpec> {
    if n_train == 0 || n_test == 0 {
        return Err(Error::usage("pool sizes must be at least 1"));
    }
    let draw = |purpose, n| {
        let mut rng = rng::stream(seed, purpose, 0);
        (0..n)
            .map(|_| vec![PeerSpec::KuhnP2 { xi: rng.gen::<f64>(), eta: rng.gen::<f64>() }])
            .collect::<Vec<_>>()
    };
    let pool = PoolSpec {
        version: POOL_VERSION,
        env: EnvKind::Kuhn,
        seed,
        train: draw(Purpose::Pool, n_train),
        test: draw(Purpose::PoolTest, n_test),
        slot_cardinalities: vec![n_train],
    };
    pool.validate().map_err(Error::Usage)?;
    Ok(pool)
}

fn pp_combinations(paths: &[u32], speed: f64) -> Vec<PeerTuple> {
    let mut out = Vec::new();
    for target in 0..NUM_PREY {
        for &a in paths {
            for &b in paths {
                if a != b {
                    out.push(vec![
                        PeerSpec::PpPredator { target },
                        PeerSpec::PpPrey { path: a, speed },
                        PeerSpec::PpPrey { path: b, speed },
                    ]);
                }
            }
        }
    }
    out
}

/// Samples tuples of (predator preference, two prey paths) with distinct
/// paths per tuple; train tuples use train paths only, test tuples test
/// paths only.
pub fn gen_pp_pool(n_train: usize, n_test: usize, seed: u64, config: &PpConfig) -> Result<PoolSpec> {
    config.validate()?;
    let speed = config.prey_speed();
    let sample = |paths: &[u32], n: usize, purpose| -> Result<Vec<PeerTuple>> {
        let mut all = pp_combinations(paths, speed);
        if n == 0 || n > all.len() {
            return Err(Error::usage(format!("cannot sample {n} of {} combinations", all.len())));
        }
        all.shuffle(&mut rng::stream(seed, purpose, 0));
        all.truncate(n);
        Ok(all)
    };
    let train = sample(&config.train_paths, n_train, Purpose::Pool)?;
    let test = sample(&config.test_paths, n_test, Purpose::PoolTest)?;
    let slot_cardinalities = pp_slot_values(&train).iter().map(BTreeSet::len).collect();
    let pool = PoolSpec {
        version: POOL_VERSION,
        env: EnvKind::PredatorPreyW,
        seed,
        train,
        test,
        slot_cardinalities,
    };
    pool.validate().map_err(Error::Usage)?;
    Ok(pool)
}

pub fn default_pp_pool(seed: u64, config: &PpConfig) -> Result<PoolSpec> {
    gen_pp_pool(16, 24, seed, config)
}

pub fn save_pool(pool: &PoolSpec, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(pool).expect("pool serializes");
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn load_pool(path: &Path) -> Result<PoolSpec> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(Error::MissingFile(path.to_owned())),
        Err(e) => return Err(e.into()),
    };
    let schema = |msg: String| Error::Schema {
        path: path.to_owned(),
        msg,
    };
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| schema(e.to_string()))?;
    let version = value
        .get("version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| schema("missing version".into()))?;
    if version != POOL_VERSION as u64 {
        return Err(Error::Version {
            path: path.to_owned(),
            found: version as u32,
            expected: POOL_VERSION,
        });
    }
    let pool: PoolSpec = serde_json::from_value(value).map_err(|e| schema(e.to_string()))?;
    pool.validate().map_err(schema)?;
    Ok(pool)
}

/// Loads a pool and checks it was generated for `expected`.
pub fn load_pool_for(path: &Path, expected: EnvKind) -> Result<PoolSpec> {
    let pool = load_pool(path)?;
    if pool.env != expected {
        return Err(Error::KindMismatch {
            expected: expected.to_string(),
            found: pool.env.to_string(),
        });
    }
    Ok(pool)
}

/// Instantiates the environment that embeds `tuple`'s peers.
pub fn build_env(kind: EnvKind, tuple: &PeerTuple, pp: &Arc<PpConfig>) -> Result<Box<dyn Environment>> {
    match (kind, tuple.as_slice()) {
        (EnvKind::Kuhn, [PeerSpec::KuhnP2 { xi, eta }]) => Ok(Box::new(KuhnEnv::new(KuhnPeerParams::new(*xi, *eta)?))),
        (EnvKind::PredatorPreyW, [PeerSpec::PpPredator { target }, PeerSpec::PpPrey { path: a, speed: sa }, PeerSpec::PpPrey { path: b, speed: sb }]) => {
            let prey = |id: u32, speed: f64| PreyPathPolicy::new(pp.path(id)?.waypoints.clone(), speed);
            let peers = PpPeers {
                predator: PredatorPrefPolicy::new(*target)?,
                prey: [prey(*a, *sa)?, prey(*b, *sb)?],
            };
            Ok(Box::new(PpEnv::new(pp.clone(), peers)))
        }
        _ => Err(Error::KindMismatch {
            expected: kind.to_string(),
            found: format!("{tuple:?}"),
        }),
    }
}

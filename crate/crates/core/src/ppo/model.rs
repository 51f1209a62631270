use ndarray::{concatenate, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::context::{Context, Encoder, EncoderSpec, Identifier, IdentifierSpec};
use crate::error::{Error, Result};
use crate::game::EnvKind;
use crate::nn::{log_softmax, Mlp, MlpSpec, ParamStore};
use crate::rng::{stream, Purpose};

/// Architecture of a PACE agent; stored alongside every checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub env: EnvKind,
    pub encoder: EncoderSpec,
    pub actor_hidden: Vec<usize>,
    pub slot_cardinalities: Vec<usize>,
}

/// Encoder, identifier, actor and critic over one flat parameter store.
#[derive(Clone, Debug)]
pub struct Model {
    pub spec: ModelSpec,
    pub encoder: Encoder,
    pub identifier: Identifier,
    pub actor: Mlp,
    pub critic: Mlp,
}

/// Output of one batched policy evaluation.
pub struct PolicyOutput {
    pub log_probs: Array2<f64>,
    pub values: Vec<f64>,
    pub id_logits: Array2<f64>,
}

impl Model {
    pub fn build(spec: &ModelSpec) -> (Model, ParamStore) {
        let obs = spec.env.obs_dim();
        let acts = spec.env.num_actions();
        let mut store = ParamStore::new();
        let encoder = Encoder::new(&mut store, &spec.encoder, obs, acts);
        let identifier = Identifier::new(
            &mut store,
            &IdentifierSpec {
                cardinalities: spec.slot_cardinalities.clone(),
            },
            spec.encoder.d_z,
        );
        let width = obs + spec.encoder.d_z;
        let actor = Mlp::new(&mut store, "actor", MlpSpec::new(width, &spec.actor_hidden, acts));
        let critic = Mlp::new(&mut store, "critic", MlpSpec::new(width, &spec.actor_hidden, 1));
        (
            Model {
                spec: spec.clone(),
                encoder,
                identifier,
                actor,
                critic,
            },
            store,
        )
    }

    pub fn init(&self, params: &mut [f64], seed: u64) {
        let mut rng = stream(seed, Purpose::Init, 0);
        let sqrt2 = std::f64::consts::SQRT_2;
        self.encoder.init(params, &mut rng);
        self.identifier.init(params, &mut rng);
        self.actor.init(params, sqrt2, 0.01, &mut rng);
        self.critic.init(params, sqrt2, 1.0, &mut rng);
    }

    pub fn obs_dim(&self) -> usize {
        self.spec.env.obs_dim()
    }

    pub fn num_actions(&self) -> usize {
        self.spec.env.num_actions()
    }

    pub fn d_z(&self) -> usize {
        self.spec.encoder.d_z
    }

    pub fn new_context(&self, n_eps: usize) -> Context {
        self.encoder.new_context(n_eps)
    }

    /// `[obs | z]` rows for the actor and critic.
    pub fn joint_input<'a>(&self, obs: ArrayView2<'a, f64>, z: ArrayView2<'a, f64>) -> Result<Array2<f64>> {
        if obs.ncols() != self.obs_dim() || z.ncols() != self.d_z() || obs.nrows() != z.nrows() {
            return Err(Error::shape("joint input shapes disagree"));
        }
        Ok(concatenate(Axis(1), &[obs, z]).expect("matching rows"))
    }

    /// Log-probabilities, values and identifier logits for each row.
    pub fn evaluate<'a>(&self, params: &[f64], obs: ArrayView2<'a, f64>, z: ArrayView2<'a, f64>) -> Result<PolicyOutput> {
        let x = self.joint_input(obs, z)?;
        let logits = self.actor.predict(params, x.view())?;
        let values = self.critic.predict(params, x.view())?;
        let id_logits = self.identifier.logits(params, z)?.0;
        let mut log_probs = logits;
        for mut row in log_probs.rows_mut() {
            let lp = log_softmax(row.as_slice().expect("contiguous"));
            row.assign(&ndarray::ArrayView1::from(&lp));
        }
        Ok(PolicyOutput {
            log_probs,
            values: values.column(0).to_vec(),
            id_logits,
        })
    }
}

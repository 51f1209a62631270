use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{softmax, softmax_ce, Mlp, MlpSpec, ParamStore, Tape};

/// One categorical head per peer slot; head `j` has `cardinalities[j]`
/// classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentifierSpec {
    pub cardinalities: Vec<usize>,
}

/// Linear map from the embedding to the concatenated logits of all heads.
#[derive(Clone, Debug)]
pub struct Identifier {
    head: Mlp,
    cardinalities: Vec<usize>,
}

impl Identifier {
    pub fn new(store: &mut ParamStore, spec: &IdentifierSpec, d_z: usize) -> Self {
        assert!(!spec.cardinalities.is_empty() && spec.cardinalities.iter().all(|&c| c > 0));
        let total = spec.cardinalities.iter().sum();
        Identifier {
            head: Mlp::new(store, "identifier", MlpSpec::new(d_z, &[], total)),
            cardinalities: spec.cardinalities.clone(),
        }
    }

    pub fn init<R: Rng + ?Sized>(&self, params: &mut [f64], rng: &mut R) {
        self.head.init(params, 1.0, 1.0, rng);
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    pub fn num_slots(&self) -> usize {
        self.cardinalities.len()
    }

    pub fn logits(&self, params: &[f64], z: ArrayView2<f64>) -> Result<(Array2<f64>, Tape)> {
        self.head.forward(params, z)
    }

    pub fn backward(&self, params: &[f64], tape: &Tape, d_logits: ArrayView2<f64>, grads: &mut [f64]) -> Result<Array2<f64>> {
        self.head.backward(params, tape, d_logits, grads)
    }

    /// Splits a row of concatenated logits into per-slot slices.
    pub fn split<'a>(&self, row: &'a [f64]) -> Vec<&'a [f64]> {
        let mut out = Vec::with_capacity(self.cardinalities.len());
        let mut start = 0;
        for &c in &self.cardinalities {
            out.push(&row[start..start + c]);
            start += c;
        }
        out
    }

    /// Per-slot posterior distributions for one embedding.
    pub fn identify(&self, params: &[f64], z: &[f64]) -> Result<Vec<Vec<f64>>> {
        let view = ArrayView2::from_shape((1, z.len()), z).map_err(|e| Error::shape(e.to_string()))?;
        let logits = self.head.predict(params, view)?;
        Ok(self.split(logits.row(0).as_slice().expect("contiguous")).into_iter().map(softmax).collect())
    }

    /// Mean cross-entropy over slots for one logits row, and its gradient.
    pub fn loss_and_grad(&self, logits_row: &[f64], targets: &[usize]) -> Result<(f64, Vec<f64>)> {
        if targets.len() != self.num_slots() {
            return Err(Error::usage("one target index per slot"));
        }
        let m = self.num_slots() as f64;
        let mut grad = Vec::with_capacity(logits_row.len());
        let mut loss = 0.0;
        for (slot, &t) in self.split(logits_row).into_iter().zip(targets) {
            let (l, g) = softmax_ce(slot, t)?;
            loss += l / m;
            grad.extend(g.into_iter().map(|v| v / m));
        }
        Ok((loss, grad))
    }
}

fn check_targets(dists: &[Vec<f64>], targets: &[usize]) -> Result<()> {
    if dists.len() != targets.len() {
        return Err(Error::usage("one target index per slot"));
    }
    for (j, (d, &t)) in dists.iter().zip(targets).enumerate() {
        if t >= d.len() {
            return Err(Error::usage(format!("slot {j} index {t} out of range for {} classes", d.len())));
        }
    }
    Ok(())
}

/// `(1/m) Σ_j -ln dist_j[i_j]`.
pub fn aux_loss(dists: &[Vec<f64>], targets: &[usize]) -> Result<f64> {
    check_targets(dists, targets)?;
    Ok(dists.iter().zip(targets).map(|(d, &t)| -d[t].ln()).sum::<f64>() / targets.len() as f64)
}

/// `(1/m) Σ_j dist_j[i_j]`, always in `[0, 1]`.
pub fn exploration_reward(dists: &[Vec<f64>], targets: &[usize]) -> Result<f64> {
    check_targets(dists, targets)?;
    let r = dists.iter().zip(targets).map(|(d, &t)| d[t]).sum::<f64>() / targets.len() as f64;
    Ok(r.clamp(0.0, 1.0))
}

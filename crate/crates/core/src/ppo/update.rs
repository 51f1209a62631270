use ndarray::{s, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::config::PpoConfig;
use super::model::Model;
use super::rollout::RolloutBatch;
use crate::context::PrefixEncoding;
use crate::error::{Error, Result};
use crate::nn::{adam_step, log_softmax, AdamConfig, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdateMode {
    /// Clipped surrogate, value loss, entropy bonus and identification loss.
    Full,
    /// Identification loss alone (encoder warm-up).
    AuxOnly,
}

/// Transitions of one batch that share a context segment.
#[derive(Clone, Debug)]
pub struct Unit {
    pub segment: usize,
    pub rows: Vec<usize>,
}

pub fn build_units(batch: &RolloutBatch) -> Vec<Unit> {
    let mut units: Vec<Unit> = batch
        .segments
        .iter()
        .enumerate()
        .map(|(segment, _)| Unit {
            segment,
            rows: Vec::new(),
        })
        .collect();
    for i in 0..batch.len() {
        units[batch.segment[i]].rows.push(i);
    }
    units.retain(|u| !u.rows.is_empty());
    units
}

/// Loss components averaged over a minibatch.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub aux: f64,
    pub aux_accuracy: f64,
    pub clip_fraction: f64,
}

/// Mean loss over the transitions in `units`; when `grads` is given, its
/// gradient is added to it.
pub fn minibatch_loss(
    model: &Model,
    params: &[f64],
    batch: &RolloutBatch,
    units: &[Unit],
    config: &PpoConfig,
    mode: UpdateMode,
    grads: Option<&mut [f64]>,
) -> Result<LossParts> {
    let encodings = units
        .par_iter()
        .map(|u| {
            let prefixes: Vec<usize> = u.rows.iter().map(|&i| batch.prefix[i]).collect();
            PrefixEncoding::forward(&model.encoder, params, &batch.segments[u.segment], &prefixes)
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<usize> = units.iter().flat_map(|u| u.rows.iter().copied()).collect();
    let b = rows.len();
    if b == 0 {
        return Ok(LossParts::default());
    }
    let inv_b = 1.0 / b as f64;
    let obs_dim = model.obs_dim();
    let d_z = model.d_z();
    let zs: Vec<_> = encodings.iter().map(|(z, _)| z.view()).collect();
    let z = ndarray::concatenate(Axis(0), &zs).map_err(|e| Error::shape(e.to_string()))?;
    let obs = Array2::from_shape_fn((b, obs_dim), |(r, c)| batch.obs_row(rows[r])[c]);

    let mut parts = LossParts::default();
    let mut d_z_total = Array2::<f64>::zeros((b, d_z));

    let (id_logits, id_tape) = model.identifier.logits(params, z.view())?;
    let mut d_id = Array2::<f64>::zeros(id_logits.raw_dim());
    for (r, &i) in rows.iter().enumerate() {
        let row = id_logits.row(r);
        let row = row.as_slice().expect("contiguous");
        let labels = batch.labels(i);
        let (l, g) = model.identifier.loss_and_grad(row, labels)?;
        parts.aux += l * inv_b;
        let mut hits = 0usize;
        for (slot, &t) in model.identifier.split(row).into_iter().zip(labels) {
            let best = slot
                .iter()
                .enumerate()
                .fold(0, |bi, (k, &v)| if v > slot[bi] { k } else { bi });
            hits += usize::from(best == t);
        }
        parts.aux_accuracy += hits as f64 / labels.len() as f64 * inv_b;
        for (d, gv) in d_id.row_mut(r).iter_mut().zip(g) {
            *d = config.aux_weight * gv * inv_b;
        }
    }
    parts.total = config.aux_weight * parts.aux;

    let mut rl_tapes = None;
    let mut d_logits = Array2::<f64>::zeros((b, model.num_actions()));
    let mut d_value = Array2::<f64>::zeros((b, 1));
    // Entropy and value loss are always reported; they enter the objective in Full mode only.
    let x = model.joint_input(obs.view(), z.view())?;
    let (logits, actor_tape) = model.actor.forward(params, x.view())?;
    let (values, critic_tape) = model.critic.forward(params, x.view())?;
    let eps = config.clip_eps;
    for (r, &i) in rows.iter().enumerate() {
        let lp = log_softmax(logits.row(r).as_slice().expect("contiguous"));
        let p: Vec<f64> = lp.iter().map(|v| v.exp()).collect();
        let h = -p.iter().zip(&lp).map(|(a, b)| a * b).sum::<f64>();
        let a = batch.actions[i];
        let adv = batch.advantages[i];
        let ratio = (lp[a] - batch.old_log_probs[i]).exp();
        let surr1 = ratio * adv;
        let surr2 = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
        parts.policy -= surr1.min(surr2) * inv_b;
        parts.clip_fraction += f64::from(u8::from((ratio - 1.0).abs() > eps)) * inv_b;
        parts.entropy += h * inv_b;
        let g_logp = if surr1 <= surr2 { -adv * ratio } else { 0.0 };
        for (j, d) in d_logits.row_mut(r).iter_mut().enumerate() {
            let onehot = if j == a { 1.0 } else { 0.0 };
            *d = (g_logp * (onehot - p[j]) + config.entropy_coef * p[j] * (lp[j] + h)) * inv_b;
        }
        let err = values[[r, 0]] - batch.returns[i];
        parts.value += err * err * inv_b;
        d_value[[r, 0]] = 2.0 * config.value_coef * err * inv_b;
    }
    if mode == UpdateMode::Full {
        parts.total += parts.policy + config.value_coef * parts.value - config.entropy_coef * parts.entropy;
        rl_tapes = Some((actor_tape, critic_tape));
    }
    if !parts.total.is_finite() {
        return Err(Error::NonFinite(format!("minibatch loss {:?}", parts)));
    }

    let Some(grads) = grads else {
        return Ok(parts);
    };
    if config.aux_weight > 0.0 {
        d_z_total += &model.identifier.backward(params, &id_tape, d_id.view(), grads)?;
    }
    if let Some((actor_tape, critic_tape)) = rl_tapes {
        let dx = model.actor.backward(params, &actor_tape, d_logits.view(), grads)?;
        d_z_total += &dx.slice(s![.., obs_dim..]);
        let dx = model.critic.backward(params, &critic_tape, d_value.view(), grads)?;
        d_z_total += &dx.slice(s![.., obs_dim..]);
    }
    let mut offsets = Vec::with_capacity(units.len());
    let mut start = 0;
    for u in units {
        offsets.push(start);
        start += u.rows.len();
    }
    let n_params = grads.len();
    let enc_range = model.encoder.param_range();
    let partial = encodings
        .par_iter()
        .zip(units.par_iter().zip(offsets.par_iter()))
        .map(|((_, tape), (u, &off))| {
            let mut local = vec![0.0; n_params];
            let dz = d_z_total.slice(s![off..off + u.rows.len(), ..]);
            tape.backward(&model.encoder, params, dz, &mut local)?;
            Ok(local)
        })
        .collect::<Result<Vec<_>>>()?;
    for local in partial {
        for k in enc_range.clone() {
            grads[k] += local[k];
        }
    }
    Ok(parts)
}

/// Splits shuffled units into `count` groups of roughly equal transition count.
fn partition(units: &[Unit], count: usize) -> Vec<Vec<Unit>> {
    let total: usize = units.iter().map(|u| u.rows.len()).sum();
    let mut groups = Vec::with_capacity(count);
    let mut current = Vec::new();
    let mut seen = 0;
    for u in units {
        seen += u.rows.len();
        current.push(u.clone());
        if seen * count >= total * (groups.len() + 1) {
            groups.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        groups.push(current);
    }
    groups
}

/// Diagnostics of one update, averaged over all minibatches.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateStats {
    pub loss: LossParts,
    pub grad_norm: f64,
    pub minibatches: usize,
}

/// Epochs of minibatch Adam steps on `batch`, whose advantages must already
/// be computed.
pub fn ppo_update<R: Rng + ?Sized>(
    model: &Model,
    store: &mut ParamStore,
    batch: &RolloutBatch,
    config: &PpoConfig,
    mode: UpdateMode,
    rng: &mut R,
) -> Result<UpdateStats> {
    if batch.advantages.len() != batch.len() {
        return Err(Error::usage("advantages not computed for this batch"));
    }
    let adam = AdamConfig {
        max_grad_norm: Some(config.max_grad_norm),
        ..AdamConfig::new(config.lr)
    };
    let mut units = build_units(batch);
    let mut stats = UpdateStats::default();
    for _ in 0..config.epochs {
        units.shuffle(rng);
        for group in partition(&units, config.minibatches) {
            let mut grads = store.zero_grad();
            let parts = minibatch_loss(model, &store.data, batch, &group, config, mode, Some(&mut grads))?;
            let norm = adam_step(store, &mut grads, &adam)?;
            if let Some(i) = store.data.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("parameter {i} after Adam step")));
            }
            let l = &mut stats.loss;
            l.total += parts.total;
            l.policy += parts.policy;
            l.value += parts.value;
            l.entropy += parts.entropy;
            l.aux += parts.aux;
            l.aux_accuracy += parts.aux_accuracy;
            l.clip_fraction += parts.clip_fraction;
            stats.grad_norm += norm;
            stats.minibatches += 1;
        }
    }
    let k = stats.minibatches.max(1) as f64;
    let l = &mut stats.loss;
    for v in [
        &mut l.total,
        &mut l.policy,
        &mut l.value,
        &mut l.entropy,
        &mut l.aux,
        &mut l.aux_accuracy,
        &mut l.clip_fraction,
    ] {
        *v /= k;
    }
    stats.grad_norm /= k;
    Ok(stats)
}

//! Online adaptation with a frozen agent, evaluation metrics, sudden-change
//! detection and the horizon cross-test.

use std::io::Write;
use std::sync::Arc;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::context::Context;
use crate::error::{Error, Result};
use crate::game::EnvKind;
use crate::nn::sample_categorical;
use crate::pool::{build_env, PeerTuple};
use crate::ppo::Model;
use crate::predator_prey::PpConfig;
use crate::rng::{stream, Purpose};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangeDetectorConfig {
    pub c_th: f64,
}

impl ChangeDetectorConfig {
    pub fn new(c_th: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&c_th) {
            return Err(Error::Config(format!("c_th {c_th} outside [0, 1]")));
        }
        Ok(ChangeDetectorConfig { c_th })
    }
}

/// `R_i < c_th * max_{j<=i} R_j + (1 - c_th) * min_{j<=i} R_j`, where `R_i`
/// is the last entry of `history`.
pub fn detect_change(history: &[f64], c_th: f64) -> Result<bool> {
    let Some(&last) = history.last() else {
        return Err(Error::usage("change detection needs at least one return"));
    };
    let max = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = history.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(last < c_th * max + (1.0 - c_th) * min)
}

#[derive(Clone, Debug)]
pub struct AdaptOptions {
    pub n_eps: usize,
    /// Context capacity in episodes; the context is cleared when it fills.
    pub n_ctx: usize,
    /// 1-based episode from which `switch_to` replaces the starting tuple.
    pub switch_at: Option<usize>,
    pub switch_to: Option<PeerTuple>,
    pub detector: Option<ChangeDetectorConfig>,
    /// Identifier labels of the starting tuple, when it belongs to the
    /// training pool; enables posterior tracking.
    pub labels: Option<Vec<usize>>,
    pub record_trace: bool,
}

impl AdaptOptions {
    pub fn new(n_eps: usize) -> Self {
        AdaptOptions {
            n_eps,
            n_ctx: n_eps,
            switch_at: None,
            switch_to: None,
            detector: None,
            labels: None,
            record_trace: false,
        }
    }
}

/// One ego decision seen during adaptation.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceStep {
    pub episode: usize,
    pub step: usize,
    pub obs: Vec<f64>,
    pub action: usize,
    pub z: Vec<f64>,
    /// Terminal observation when this step ended the episode.
    pub terminal: Option<Vec<f64>>,
    /// Whether the context was cleared after this step.
    pub cleared: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetaEpisodeReport {
    pub peer_id: usize,
    pub seed: u64,
    pub returns: Vec<f64>,
    pub lengths: Vec<usize>,
    pub detected: Vec<bool>,
    /// Mean posterior of the true labels after each episode, when labels were given.
    pub true_posterior: Vec<f64>,
    pub trace: Vec<TraceStep>,
}

impl MetaEpisodeReport {
    pub fn mean_return(&self) -> f64 {
        self.returns.iter().sum::<f64>() / self.returns.len() as f64
    }
}

fn embed(model: &Model, params: &[f64], ctx: &Context) -> Result<Vec<f64>> {
    Ok(model.encoder.encode_many(&[ctx], params)?.row(0).to_vec())
}

fn true_posterior(model: &Model, params: &[f64], z: &[f64], labels: &[usize]) -> Result<f64> {
    let dists = model.identifier.identify(params, z)?;
    crate::context::exploration_reward(&dists, labels)
}

/// Plays `options.n_eps` episodes against `tuple` with a persistent context
/// and no exploration reward.
pub fn adapt(
    model: &Model,
    params: &[f64],
    tuple: &PeerTuple,
    pp: &Arc<PpConfig>,
    options: &AdaptOptions,
    peer_id: usize,
    seed: u64,
) -> Result<MetaEpisodeReport> {
    if options.n_eps == 0 || options.n_ctx == 0 {
        return Err(Error::usage("n_eps and n_ctx must be positive"));
    }
    let kind = model.spec.env;
    let mut env = build_env(kind, tuple, pp)?;
    let mut env_rng = stream(seed, Purpose::Eval, (peer_id as u64) << 1);
    let mut policy_rng = stream(seed, Purpose::Eval, ((peer_id as u64) << 1) | 1);
    let mut ctx = model.new_context(options.n_ctx);
    let mut report = MetaEpisodeReport {
        peer_id,
        seed,
        returns: Vec::with_capacity(options.n_eps),
        lengths: Vec::with_capacity(options.n_eps),
        detected: Vec::with_capacity(options.n_eps),
        true_posterior: Vec::new(),
        trace: Vec::new(),
    };
    let mut obs = env.reset(&mut env_rng).into_inner();
    let (mut ret, mut len) = (0.0, 0usize);
    while report.returns.len() < options.n_eps {
        let z = embed(model, params, &ctx)?;
        let o = Array2::from_shape_vec((1, obs.len()), obs.clone()).expect("row");
        let zv = Array2::from_shape_vec((1, z.len()), z.clone()).expect("row");
        let out = model.evaluate(params, o.view(), zv.view())?;
        let probs: Vec<f64> = out.log_probs.row(0).iter().map(|v| v.exp()).collect();
        let action = sample_categorical(&probs, &mut policy_rng);
        model.encoder.append_step(&mut ctx, params, &obs, action)?;
        let outcome = env.step(action, &mut env_rng)?;
        ret += outcome.task_reward;
        len += 1;
        let mut step = TraceStep {
            episode: report.returns.len() + 1,
            step: len,
            obs: std::mem::take(&mut obs),
            action,
            z,
            terminal: None,
            cleared: false,
        };
        if outcome.episode_done {
            let terminal = outcome.next_observation.into_inner();
            let full = model.encoder.close_episode(&mut ctx, params, &terminal)?;
            report.returns.push(ret);
            report.lengths.push(len);
            if let Some(labels) = &options.labels {
                let z_end = embed(model, params, &ctx)?;
                report.true_posterior.push(true_posterior(model, params, &z_end, labels)?);
            }
            let detected = match options.detector {
                Some(d) => detect_change(&report.returns, d.c_th)?,
                None => false,
            };
            report.detected.push(detected);
            if full || detected {
                ctx.clear();
                step.cleared = true;
            }
            step.terminal = Some(terminal);
            (ret, len) = (0.0, 0);
            let next_episode = report.returns.len() + 1;
            if options.switch_at == Some(next_episode) {
                let to = options
                    .switch_to
                    .as_ref()
                    .ok_or_else(|| Error::usage("switch_at given without a replacement tuple"))?;
                env = build_env(kind, to, pp)?;
            }
            if report.returns.len() < options.n_eps {
                obs = env.reset(&mut env_rng).into_inner();
            }
        } else {
            obs = outcome.next_observation.into_inner();
        }
        if options.record_trace {
            report.trace.push(step);
        }
    }
    Ok(report)
}

/// Adaptation against every tuple for every seed, ordered seed-major.
pub fn evaluate_tuples(
    model: &Model,
    params: &[f64],
    tuples: &[PeerTuple],
    pp: &Arc<PpConfig>,
    options: &AdaptOptions,
    seeds: &[u64],
) -> Result<Vec<MetaEpisodeReport>> {
    let jobs: Vec<(u64, usize)> = seeds
        .iter()
        .flat_map(|&s| (0..tuples.len()).map(move |p| (s, p)))
        .collect();
    jobs.par_iter()
        .map(|&(seed, p)| adapt(model, params, &tuples[p], pp, options, p, seed))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowStat {
    /// 1-based first and last episode of the window.
    pub start: usize,
    pub end: usize,
    pub mean: f64,
    pub std: f64,
    pub partial: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowedMetrics {
    pub windows: Vec<WindowStat>,
    pub overall_mean: f64,
    pub overall_std: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-window average return of each report, then mean and population
/// standard deviation across reports.
pub fn windowed_metrics(reports: &[MetaEpisodeReport], window: usize) -> Result<WindowedMetrics> {
    let Some(first) = reports.first() else {
        return Err(Error::usage("no reports"));
    };
    let n = first.returns.len();
    if window == 0 || n == 0 || reports.iter().any(|r| r.returns.len() != n) {
        return Err(Error::usage("reports must be non-empty, of equal length, with a positive window"));
    }
    let mut windows = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + window).min(n);
        let per: Vec<f64> = reports
            .iter()
            .map(|r| r.returns[start..end].iter().sum::<f64>() / (end - start) as f64)
            .collect();
        let (mean, std) = mean_std(&per);
        windows.push(WindowStat {
            start: start + 1,
            end,
            mean,
            std,
            partial: end - start < window,
        });
        start = end;
    }
    let overall: Vec<f64> = reports.iter().map(MetaEpisodeReport::mean_return).collect();
    let (overall_mean, overall_std) = mean_std(&overall);
    Ok(WindowedMetrics {
        windows,
        overall_mean,
        overall_std,
    })
}

/// An agent in the horizon cross-test, with the context size it was trained on.
pub struct HorizonAgent<'a> {
    pub n_ctx: usize,
    pub model: &'a Model,
    pub params: &'a [f64],
}

/// Mean return over `tuples × seeds`; rows follow `n_eps_list`, columns
/// follow `agents`.
pub fn cross_horizon(
    agents: &[HorizonAgent<'_>],
    n_eps_list: &[usize],
    tuples: &[PeerTuple],
    pp: &Arc<PpConfig>,
    seeds: &[u64],
) -> Result<Vec<Vec<f64>>> {
    n_eps_list
        .iter()
        .map(|&n_eps| {
            agents
                .iter()
                .map(|a| {
                    let options = AdaptOptions {
                        n_ctx: a.n_ctx,
                        ..AdaptOptions::new(n_eps)
                    };
                    let reports = evaluate_tuples(a.model, a.params, tuples, pp, &options, seeds)?;
                    Ok(reports.iter().map(MetaEpisodeReport::mean_return).sum::<f64>() / reports.len() as f64)
                })
                .collect()
        })
        .collect()
}

pub const RESULTS_HEADER: [&str; 7] = [
    "env",
    "checkpoint",
    "peer_id",
    "seed",
    "episode_index",
    "return",
    "detected_change_flag",
];

pub fn write_results<W: Write>(out: W, env: EnvKind, checkpoint: &str, reports: &[MetaEpisodeReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULTS_HEADER)?;
    for r in reports {
        for (i, (ret, det)) in r.returns.iter().zip(&r.detected).enumerate() {
            w.write_record([
                env.as_str().to_string(),
                checkpoint.to_string(),
                r.peer_id.to_string(),
                r.seed.to_string(),
                (i + 1).to_string(),
                ret.to_string(),
                u8::from(*det).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary<W: Write>(out: W, metrics: &WindowedMetrics) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["window_start", "window_end", "mean_return", "std_return", "partial"])?;
    for s in &metrics.windows {
        w.write_record([
            s.start.to_string(),
            s.end.to_string(),
            s.mean.to_string(),
            s.std.to_string(),
            u8::from(s.partial).to_string(),
        ])?;
    }
    w.write_record([
        "all".to_string(),
        "all".to_string(),
        metrics.overall_mean.to_string(),
        metrics.overall_std.to_string(),
        "0".to_string(),
    ])?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::EncoderSpec;
    use crate::pool::gen_kuhn_pool;
    use crate::ppo::ModelSpec;

    #[test]
    fn detector_examples() {
        assert!(detect_change(&[5.0, 5.0, 1.0], 0.8).unwrap());
        assert!(!detect_change(&[1.0, 2.0, 3.0], 0.8).unwrap());
        assert!(!detect_change(&[5.0, 5.0, 1.0], 0.0).unwrap());
        assert!(detect_change(&[3.0, 2.5], 1.0).unwrap());
        assert!(!detect_change(&[3.0, 3.0], 1.0).unwrap());
        assert!(detect_change(&[], 0.5).is_err());
        assert!(ChangeDetectorConfig::new(1.2).is_err());
    }

    #[test]
    fn strict_new_minimum_always_fires() {
        for c in [1e-9, 0.1, 0.5, 0.8, 1.0] {
            assert!(detect_change(&[2.0, 4.0, -1.0], c).unwrap());
        }
    }

    fn report(returns: Vec<f64>) -> MetaEpisodeReport {
        MetaEpisodeReport {
            peer_id: 0,
            seed: 0,
            detected: vec![false; returns.len()],
            lengths: vec![1; returns.len()],
            returns,
            true_posterior: Vec::new(),
            trace: Vec::new(),
        }
    }

    #[test]
    fn windows() {
        let r: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let m = windowed_metrics(&[report(r.clone())], 10).unwrap();
        assert_eq!(m.windows.len(), 10);
        assert_eq!(m.windows[0].mean, 4.5);
        let m = windowed_metrics(&[report(r)], 100).unwrap();
        assert_eq!(m.windows.len(), 1);
        assert_eq!(m.windows[0].mean, m.overall_mean);
        let m = windowed_metrics(&[report(vec![1.0; 7]), report(vec![1.0; 7])], 3).unwrap();
        assert!(m.windows.iter().all(|w| w.std == 0.0));
        assert!(m.windows[2].partial && !m.windows[1].partial);
    }

    fn tiny_model() -> (Model, Vec<f64>, crate::pool::PoolSpec) {
        let pool = gen_kuhn_pool(3, 2, 4).unwrap();
        let spec = ModelSpec {
            env: EnvKind::Kuhn,
            encoder: EncoderSpec {
                f_hidden: vec![8],
                g_hidden: vec![8],
                d_z: 4,
            },
            actor_hidden: vec![8],
            slot_cardinalities: pool.slot_cardinalities.clone(),
        };
        let (model, mut store) = Model::build(&spec);
        model.init(&mut store.data, 6);
        (model, store.data, pool)
    }

    #[test]
    fn switch_and_report_lengths() {
        let (model, params, pool) = tiny_model();
        let pp = Arc::new(PpConfig::default());
        let mut opts = AdaptOptions::new(10);
        opts.switch_at = Some(6);
        opts.switch_to = Some(pool.test[1].clone());
        opts.detector = Some(ChangeDetectorConfig::new(0.8).unwrap());
        let r = adapt(&model, &params, &pool.test[0], &pp, &opts, 0, 1).unwrap();
        assert_eq!(r.returns.len(), 10);
        assert_eq!(r.detected.len(), 10);
        let again = adapt(&model, &params, &pool.test[0], &pp, &opts, 0, 1).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn replayed_trace_gives_identical_embeddings() {
        let (model, params, pool) = tiny_model();
        let pp = Arc::new(PpConfig::default());
        let mut opts = AdaptOptions::new(9);
        opts.n_ctx = 4;
        opts.record_trace = true;
        let r = adapt(&model, &params, &pool.test[0], &pp, &opts, 2, 3).unwrap();
        let mut ctx = model.new_context(4);
        for s in &r.trace {
            assert_eq!(model.encoder.encode_many(&[&ctx], &params).unwrap().row(0).to_vec(), s.z);
            model.encoder.append_step(&mut ctx, &params, &s.obs, s.action).unwrap();
            if let Some(t) = &s.terminal {
                let full = model.encoder.close_episode(&mut ctx, &params, t).unwrap();
                assert_eq!(full, s.cleared);
                if full {
                    ctx.clear();
                }
            }
        }
    }

    #[test]
    fn cross_horizon_shape() {
        let (model, params, pool) = tiny_model();
        let pp = Arc::new(PpConfig::default());
        let agents = [
            HorizonAgent { n_ctx: 2, model: &model, params: &params },
            HorizonAgent { n_ctx: 4, model: &model, params: &params },
        ];
        let m = cross_horizon(&agents, &[2, 4, 6], &pool.test, &pp, &[1, 2]).unwrap();
        assert_eq!((m.len(), m[0].len()), (3, 2));
    }
}

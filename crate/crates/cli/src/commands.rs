use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use pace::adapt::{self, AdaptOptions, ChangeDetectorConfig, MetaEpisodeReport};
use pace::context::EmbeddingWriter;
use pace::kuhn::{best_response, KuhnPeerParams};
use pace::nn::{load_checkpoint, save_checkpoint, Checkpoint};
use pace::pool::{self, PeerSpec, PeerTuple, PoolSpec};
use pace::ppo::{model_from_checkpoint, DiagnosticsWriter, Model, Trainer};
use pace::predator_prey::PpConfig;
use pace::{EnvKind, Error, Result};

use crate::config::ExperimentConfig;
use crate::{AdaptArgs, EvalArgs, ExportArgs, GenPoolArgs, OracleArgs, TrainArgs};

fn generate_pool(env: EnvKind, train: usize, test: usize, seed: u64, pp: &PpConfig) -> Result<PoolSpec> {
    match env {
        EnvKind::Kuhn => pool::gen_kuhn_pool(train, test, seed),
        EnvKind::PredatorPreyW => pool::gen_pp_pool(train, test, seed, pp),
    }
}

pub fn gen_pool(args: GenPoolArgs) -> Result<()> {
    let env: EnvKind = args.env.parse()?;
    let pp = match &args.config {
        Some(p) => ExperimentConfig::load(p)?.predator_prey,
        None => PpConfig::default(),
    };
    let defaults = ExperimentConfig::defaults(env).pool;
    let train = args.train.unwrap_or(defaults.train);
    let test = args.test.unwrap_or(defaults.test);
    let spec = generate_pool(env, train, test, args.seed, &pp)?;
    pool::save_pool(&spec, &args.out)?;
    println!(
        "{}: {} train / {} test tuples, slot cardinalities {:?} -> {}",
        env,
        spec.train.len(),
        spec.test.len(),
        spec.slot_cardinalities,
        args.out.display()
    );
    Ok(())
}

pub fn train(args: TrainArgs) -> Result<()> {
    let mut config = match (&args.config, &args.env) {
        (Some(p), None) => ExperimentConfig::load(p)?,
        (None, Some(e)) => ExperimentConfig::defaults(e.parse()?),
        (None, None) => ExperimentConfig::defaults(EnvKind::Kuhn),
        (Some(_), Some(_)) => return Err(Error::Usage("give either --config or --env".into())),
    };
    if let Some(p) = &args.preset {
        config.preset = p.parse()?;
    }
    if let Some(s) = args.steps {
        config.ppo.total_steps = s;
        config.ppo.warmup_steps = config.ppo.warmup_steps.min(s);
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(o) = args.out {
        config.out_dir = o;
    }
    config.preset.apply(&mut config.ppo);
    config.validate()?;

    let pool = match &config.pool.path {
        Some(p) => pool::load_pool_for(p, config.env)?,
        None => generate_pool(config.env, config.pool.train, config.pool.test, config.pool.seed, &config.predator_prey)?,
    };
    let out = &config.out_dir;
    fs::create_dir_all(out.join("checkpoints"))?;
    fs::write(out.join("config.toml"), config.to_toml()?)?;
    pool::save_pool(&pool, &out.join("pool.json"))?;

    let pp = Arc::new(config.predator_prey.clone());
    let mut trainer = Trainer::new(config.ppo.clone(), &pool, pp, config.seed)?;
    let mut diag = DiagnosticsWriter::new(BufWriter::new(File::create(out.join("diagnostics.csv"))?))?;
    let stamp = |ckpt: &mut Checkpoint| {
        ckpt.meta["predator_prey"] = serde_json::to_value(&config.predator_prey).expect("serializable");
        ckpt.meta["preset"] = serde_json::json!(config.preset.as_str());
    };
    let every = config.checkpoint_every;
    trainer.run(|t, d| {
        diag.write(d)?;
        eprintln!(
            "step {:>9}  return {:+.4}  r_e {:.4}  aux {:.4} ({:.3})  entropy {:.4}",
            d.global_step, d.mean_task_return, d.mean_exploration_reward, d.aux_loss, d.aux_accuracy, d.entropy
        );
        if every > 0 && t.updates() % every == 0 {
            let mut ckpt = t.checkpoint();
            stamp(&mut ckpt);
            save_checkpoint(&out.join("checkpoints").join(format!("step-{}", d.global_step)), &ckpt, true)?;
        }
        Ok(())
    })?;
    let mut ckpt = trainer.checkpoint();
    stamp(&mut ckpt);
    save_checkpoint(&out.join("final"), &ckpt, true)?;
    println!("final checkpoint: {}", out.join("final").display());
    Ok(())
}

struct Loaded {
    model: Model,
    params: Vec<f64>,
    pool: PoolSpec,
    pp: Arc<PpConfig>,
}

fn load_agent(checkpoint: &Path, pool_path: &Path) -> Result<Loaded> {
    let ckpt = load_checkpoint(checkpoint)?;
    let model = model_from_checkpoint(&ckpt)?;
    let pool = pool::load_pool_for(pool_path, model.spec.env)?;
    if pool.slot_cardinalities != model.spec.slot_cardinalities {
        return Err(Error::Config(format!(
            "pool slot cardinalities {:?} differ from the checkpoint's {:?}",
            pool.slot_cardinalities, model.spec.slot_cardinalities
        )));
    }
    let pp = match ckpt.meta.get("predator_prey") {
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::Config(format!("checkpoint constants: {e}")))?,
        None => PpConfig::default(),
    };
    Ok(Loaded {
        model,
        params: ckpt.params.data,
        pool,
        pp: Arc::new(pp),
    })
}

fn split<'a>(pool: &'a PoolSpec, name: &str) -> Result<&'a [PeerTuple]> {
    match name {
        "test" => Ok(&pool.test),
        "train" => Ok(&pool.train),
        other => Err(Error::Usage(format!("unknown split `{other}` (use test or train)"))),
    }
}

fn eval_defaults(env: EnvKind) -> (usize, usize) {
    let e = ExperimentConfig::defaults(env).eval;
    (e.n_eps, e.window)
}

fn write_outputs(out: &Path, env: EnvKind, checkpoint: &Path, reports: &[MetaEpisodeReport], window: usize) -> Result<()> {
    fs::create_dir_all(out)?;
    let name = checkpoint.display().to_string();
    adapt::write_results(BufWriter::new(File::create(out.join("results.csv"))?), env, &name, reports)?;
    let metrics = adapt::windowed_metrics(reports, window)?;
    adapt::write_summary(BufWriter::new(File::create(out.join("summary.csv"))?), &metrics)?;
    println!(
        "{} runs, mean episodic return {:.5} (std across runs {:.5}) -> {}",
        reports.len(),
        metrics.overall_mean,
        metrics.overall_std,
        out.display()
    );
    Ok(())
}

fn output_dir(out: &Option<PathBuf>, checkpoint: &Path, what: &str) -> PathBuf {
    out.clone().unwrap_or_else(|| {
        let stem = checkpoint.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        crate::config::default_output_root().join(format!("{what}-{stem}"))
    })
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let a = load_agent(&args.checkpoint, &args.pool)?;
    let env = a.model.spec.env;
    let (n_eps, window) = eval_defaults(env);
    let tuples = split(&a.pool, &args.split)?;
    let mut options = AdaptOptions::new(args.episodes.unwrap_or(n_eps));
    options.n_ctx = args.n_ctx.unwrap_or(options.n_eps);
    let mut jobs = Vec::new();
    for &seed in &args.seeds {
        for (p, tuple) in tuples.iter().enumerate() {
            let mut o = options.clone();
            if args.split == "train" {
                o.labels = Some(a.pool.slot_indices(tuple)?);
            }
            jobs.push((seed, p, o));
        }
    }
    let reports = run_jobs(&a, tuples, jobs)?;
    if args.split == "train" {
        let last: Vec<f64> = reports.iter().filter_map(|r| r.true_posterior.last().copied()).collect();
        println!(
            "mean posterior of the true training tuple after the last episode: {:.5}",
            last.iter().sum::<f64>() / last.len() as f64
        );
    }
    write_outputs(
        &output_dir(&args.out, &args.checkpoint, "eval"),
        env,
        &args.checkpoint,
        &reports,
        args.window.unwrap_or(window),
    )
}

fn run_jobs(a: &Loaded, tuples: &[PeerTuple], jobs: Vec<(u64, usize, AdaptOptions)>) -> Result<Vec<MetaEpisodeReport>> {
    use rayon::prelude::*;
    jobs.par_iter()
        .map(|(seed, p, o)| adapt::adapt(&a.model, &a.params, &tuples[*p], &a.pp, o, *p, *seed))
        .collect()
}

pub fn adapt(args: AdaptArgs) -> Result<()> {
    let e = &args.eval;
    let a = load_agent(&e.checkpoint, &e.pool)?;
    let env = a.model.spec.env;
    let (n_eps, window) = eval_defaults(env);
    let tuples = split(&a.pool, &e.split)?;
    let mut options = AdaptOptions::new(e.episodes.unwrap_or(n_eps));
    options.n_ctx = e.n_ctx.unwrap_or(options.n_eps);
    options.detector = args.cth.map(ChangeDetectorConfig::new).transpose()?;
    if let Some(k) = args.switch_at {
        if k < 2 || k > options.n_eps {
            return Err(Error::Usage(format!("--switch-at must lie in 2..={}", options.n_eps)));
        }
        if tuples.len() < 2 {
            return Err(Error::Usage("a peer switch needs at least two tuples".into()));
        }
        options.switch_at = Some(k);
    }
    let peers: Vec<usize> = match args.peer {
        Some(p) if p >= tuples.len() => return Err(Error::Usage(format!("--peer {p} out of range"))),
        Some(p) => vec![p],
        None => (0..tuples.len()).collect(),
    };
    let mut jobs = Vec::new();
    for &seed in &e.seeds {
        for &p in &peers {
            let mut o = options.clone();
            if o.switch_at.is_some() {
                o.switch_to = Some(tuples[(p + 1) % tuples.len()].clone());
            }
            jobs.push((seed, p, o));
        }
    }
    let reports = run_jobs(&a, tuples, jobs)?;
    write_outputs(
        &output_dir(&e.out, &e.checkpoint, "adapt"),
        env,
        &e.checkpoint,
        &reports,
        e.window.unwrap_or(window),
    )
}

pub fn oracle(args: OracleArgs) -> Result<()> {
    let mut rows: Vec<(String, f64, f64)> = Vec::new();
    if let Some(path) = &args.pool {
        let pool = pool::load_pool_for(path, EnvKind::Kuhn)?;
        for (name, tuples) in [("train", &pool.train), ("test", &pool.test)] {
            for (i, t) in tuples.iter().enumerate() {
                match t.as_slice() {
                    [PeerSpec::KuhnP2 { xi, eta }] => rows.push((format!("{name}-{i}"), *xi, *eta)),
                    _ => return Err(Error::Config("kuhn pool tuple is not a single P2 peer".into())),
                }
            }
        }
    } else if let (Some(xi), Some(eta)) = (args.xi, args.eta) {
        rows.push(("single".into(), xi, eta));
    } else if let Some(n) = args.grid {
        if n < 2 {
            return Err(Error::Usage("--grid needs at least 2 points per axis".into()));
        }
        for i in 0..n {
            for j in 0..n {
                let (xi, eta) = (i as f64 / (n - 1) as f64, j as f64 / (n - 1) as f64);
                rows.push((format!("grid-{i}-{j}"), xi, eta));
            }
        }
    } else {
        return Err(Error::Usage("give --pool, --xi/--eta or --grid".into()));
    }
    let sink: Box<dyn Write> = match &args.out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["peer_id", "xi", "eta", "best_response", "value"])?;
    let mut test_values = Vec::new();
    for (id, xi, eta) in rows {
        let (value, strategy) = best_response(&KuhnPeerParams::new(xi, eta)?);
        if id.starts_with("test-") {
            test_values.push(value);
        }
        w.write_record([id, xi.to_string(), eta.to_string(), strategy.index().to_string(), value.to_string()])?;
    }
    w.flush()?;
    if !test_values.is_empty() {
        eprintln!(
            "mean best-response value over {} test peers: {:.5}",
            test_values.len(),
            test_values.iter().sum::<f64>() / test_values.len() as f64
        );
    }
    Ok(())
}

pub fn export_embeddings(args: ExportArgs) -> Result<()> {
    let a = load_agent(&args.checkpoint, &args.pool)?;
    let (n_eps, _) = eval_defaults(a.model.spec.env);
    let tuples = split(&a.pool, &args.split)?;
    let mut options = AdaptOptions::new(args.episodes.unwrap_or(n_eps));
    options.record_trace = true;
    let jobs = (0..tuples.len()).map(|p| (args.seed, p, options.clone())).collect();
    let reports = run_jobs(&a, tuples, jobs)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = EmbeddingWriter::new(BufWriter::new(File::create(&args.out)?), a.model.d_z())?;
    for r in &reports {
        for s in &r.trace {
            w.write(r.peer_id, s.episode, s.step, &s.z)?;
        }
    }
    w.finish()?.flush()?;
    println!("embeddings for {} tuples -> {}", reports.len(), args.out.display());
    Ok(())
}

use ndarray::{s, Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::buffer::Context;
use crate::error::{Error, Result};
use crate::nn::{Mlp, MlpSpec, ParamStore, Tape};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSpec {
    pub f_hidden: Vec<usize>,
    pub g_hidden: Vec<usize>,
    pub d_z: usize,
}

impl EncoderSpec {
    pub fn kuhn() -> Self {
        EncoderSpec {
            f_hidden: vec![64, 64],
            g_hidden: vec![64],
            d_z: 64,
        }
    }

    pub fn predator_prey() -> Self {
        EncoderSpec {
            f_hidden: vec![128, 128],
            g_hidden: vec![128],
            d_z: 128,
        }
    }
}

/// `χ(C) = g(mean_n mean_t f(o, a))`, with `χ(∅) = 0`.
#[derive(Clone, Debug)]
pub struct Encoder {
    f: Mlp,
    g: Mlp,
    obs_dim: usize,
    num_actions: usize,
    d_z: usize,
}

impl Encoder {
    pub fn new(store: &mut ParamStore, spec: &EncoderSpec, obs_dim: usize, num_actions: usize) -> Self {
        let f = Mlp::new(store, "encoder.f", MlpSpec::new(obs_dim + num_actions, &spec.f_hidden, spec.d_z));
        let g = Mlp::new(store, "encoder.g", MlpSpec::new(spec.d_z, &spec.g_hidden, spec.d_z));
        Encoder {
            f,
            g,
            obs_dim,
            num_actions,
            d_z: spec.d_z,
        }
    }

    pub fn init<R: Rng + ?Sized>(&self, params: &mut [f64], rng: &mut R) {
        let sqrt2 = std::f64::consts::SQRT_2;
        self.f.init(params, sqrt2, 1.0, rng);
        self.g.init(params, sqrt2, 1.0, rng);
    }

    pub fn d_z(&self) -> usize {
        self.d_z
    }

    pub fn input_dim(&self) -> usize {
        self.obs_dim + self.num_actions
    }

    pub fn new_context(&self, capacity: usize) -> Context {
        Context::new(capacity, self.input_dim(), self.d_z)
    }

    /// Parameter range shared by `f` and `g`.
    pub fn param_range(&self) -> std::ops::Range<usize> {
        self.f.param_range().start..self.g.param_range().end
    }

    /// Context row: observation followed by the action one-hot, or zeros
    /// when no ego action accompanies the observation.
    pub fn row(&self, obs: &[f64], action: Option<usize>) -> Result<Vec<f64>> {
        if obs.len() != self.obs_dim {
            return Err(Error::shape(format!("observation width {} != {}", obs.len(), self.obs_dim)));
        }
        let mut r = Vec::with_capacity(self.input_dim());
        r.extend_from_slice(obs);
        r.resize(self.input_dim(), 0.0);
        if let Some(a) = action {
            if a >= self.num_actions {
                return Err(Error::usage(format!("action {a} out of range")));
            }
            r[self.obs_dim + a] = 1.0;
        }
        Ok(r)
    }

    pub fn f_rows(&self, params: &[f64], rows: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.f.predict(params, rows)
    }

    /// `g` applied row-wise to mean embeddings.
    pub fn g_rows(&self, params: &[f64], means: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.g.predict(params, means)
    }

    fn push_row(&self, ctx: &mut Context, params: &[f64], row: &[f64]) -> Result<()> {
        let view = ArrayView2::from_shape((1, row.len()), row).map_err(|e| Error::shape(e.to_string()))?;
        let f = self.f.predict(params, view)?;
        ctx.push(row, f.as_slice().expect("standard layout"))
    }

    /// Adds `(obs, action)` to the current episode, updating the cached sums.
    pub fn append_step(&self, ctx: &mut Context, params: &[f64], obs: &[f64], action: usize) -> Result<()> {
        let row = self.row(obs, Some(action))?;
        self.push_row(ctx, params, &row)
    }

    /// Adds the terminal observation with an all-zero action and seals the
    /// episode. Returns `true` when the context reached its capacity.
    pub fn close_episode(&self, ctx: &mut Context, params: &[f64], terminal_obs: &[f64]) -> Result<bool> {
        let row = self.row(terminal_obs, None)?;
        self.push_row(ctx, params, &row)?;
        ctx.seal()
    }

    /// Embedding from the cached sums.
    pub fn encode(&self, ctx: &Context, params: &[f64]) -> Result<Vec<f64>> {
        match ctx.mean_embedding() {
            None => Ok(vec![0.0; self.d_z]),
            Some(mean) => {
                let view = ArrayView2::from_shape((1, self.d_z), &mean).expect("d_z row");
                Ok(self.g.predict(params, view)?.into_raw_vec_and_offset().0)
            }
        }
    }

    /// Embeddings of several contexts with one batched `g` call.
    pub fn encode_many(&self, ctxs: &[&Context], params: &[f64]) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((ctxs.len(), self.d_z));
        let means: Vec<(usize, Vec<f64>)> = ctxs
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.mean_embedding().map(|m| (i, m)))
            .collect();
        if means.is_empty() {
            return Ok(out);
        }
        let flat: Vec<f64> = means.iter().flat_map(|(_, m)| m.iter().copied()).collect();
        let m = Array2::from_shape_vec((means.len(), self.d_z), flat).expect("rows");
        let z = self.g.predict(params, m.view())?;
        for (k, (i, _)) in means.iter().enumerate() {
            out.row_mut(*i).assign(&z.row(k));
        }
        Ok(out)
    }

    /// Embedding recomputed from the raw rows, ignoring the cache.
    pub fn encode_recompute(&self, ctx: &Context, params: &[f64]) -> Result<Vec<f64>> {
        let seg = Segment::from_context(ctx);
        let (z, _) = PrefixEncoding::forward(self, params, &seg, &[ctx.num_items()])?;
        Ok(z.row(0).to_vec())
    }

    /// Recomputes the cached `f` sums after a parameter change.
    pub fn refresh(&self, ctx: &mut Context, params: &[f64]) -> Result<()> {
        if ctx.is_empty() {
            return Ok(());
        }
        let rows = ArrayView2::from_shape((ctx.num_items(), self.input_dim()), ctx.items())
            .map_err(|e| Error::shape(e.to_string()))?;
        let f = self.f.predict(params, rows)?;
        ctx.set_cached(f.as_slice().expect("standard layout"));
        Ok(())
    }
}

/// Raw rows of one meta-episode and the item count at each episode end.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Segment {
    pub items: Vec<f64>,
    pub episode_ends: Vec<usize>,
}

impl Segment {
    pub fn from_context(ctx: &Context) -> Self {
        Segment {
            items: ctx.items().to_vec(),
            episode_ends: ctx.episode_ends().to_vec(),
        }
    }
}

/// Encodings of many prefixes of one segment, sharing a single `f` pass,
/// with an exact backward pass through both levels of averaging.
pub struct PrefixEncoding {
    f_tape: Option<Tape>,
    g_tape: Option<Tape>,
    /// Queries with a non-empty prefix, in input order.
    active: Vec<usize>,
    queries: Vec<QueryInfo>,
    /// Length of every completed episode in the segment.
    ep_lens: Vec<usize>,
    n_rows: usize,
}

#[derive(Clone, Copy, Debug)]
struct QueryInfo {
    /// Completed episodes inside the prefix.
    closed: usize,
    /// Start of the partial episode.
    start: usize,
    prefix: usize,
}

impl QueryInfo {
    fn partial(&self) -> usize {
        self.prefix - self.start
    }

    fn episodes(&self) -> usize {
        self.closed + usize::from(self.partial() > 0)
    }
}

impl PrefixEncoding {
    /// `z` for the first `prefixes[q]` rows of `seg`, one row per query.
    pub fn forward(
        enc: &Encoder,
        params: &[f64],
        seg: &Segment,
        prefixes: &[usize],
    ) -> Result<(Array2<f64>, PrefixEncoding)> {
        let d = enc.d_z;
        let width = enc.input_dim();
        let total = seg.items.len() / width;
        let n_rows = prefixes.iter().copied().max().unwrap_or(0);
        if n_rows > total {
            return Err(Error::shape(format!("prefix {n_rows} exceeds segment of {total} rows")));
        }
        let queries: Vec<QueryInfo> = prefixes
            .iter()
            .map(|&p| {
                let closed = seg.episode_ends.partition_point(|&e| e <= p);
                let start = if closed == 0 { 0 } else { seg.episode_ends[closed - 1] };
                QueryInfo { closed, start, prefix: p }
            })
            .collect();
        let mut ep_lens = Vec::with_capacity(seg.episode_ends.len());
        let mut prev = 0;
        for &e in &seg.episode_ends {
            ep_lens.push(e - prev);
            prev = e;
        }
        let mut z = Array2::zeros((prefixes.len(), d));
        let active: Vec<usize> = (0..queries.len()).filter(|&q| queries[q].prefix > 0).collect();
        if active.is_empty() {
            return Ok((
                z,
                PrefixEncoding {
                    f_tape: None,
                    g_tape: None,
                    active,
                    queries,
                    ep_lens,
                    n_rows,
                },
            ));
        }

        let rows = ArrayView2::from_shape((n_rows, width), &seg.items[..n_rows * width])
            .map_err(|e| Error::shape(e.to_string()))?;
        let (f_out, f_tape) = enc.f.forward(params, rows)?;

        // cum[i] = Σ_{j<i} f_j
        let mut cum = Array2::zeros((n_rows + 1, d));
        for i in 0..n_rows {
            let next = &cum.row(i) + &f_out.row(i);
            cum.row_mut(i + 1).assign(&next);
        }
        // closed_mean[k] = Σ_{e<k} (episode e mean), for episodes inside n_rows.
        let usable = seg.episode_ends.partition_point(|&e| e <= n_rows);
        let mut closed_mean = Array2::zeros((usable + 1, d));
        let mut start = 0;
        for k in 0..usable {
            let end = seg.episode_ends[k];
            let mean = (&cum.row(end) - &cum.row(start)) / (end - start) as f64;
            let next = &closed_mean.row(k) + &mean;
            closed_mean.row_mut(k + 1).assign(&next);
            start = end;
        }

        let mut means = Array2::zeros((active.len(), d));
        for (r, &q) in active.iter().enumerate() {
            let info = queries[q];
            let mut m = closed_mean.row(info.closed).to_owned();
            if info.partial() > 0 {
                m += &((&cum.row(info.prefix) - &cum.row(info.start)) / info.partial() as f64);
            }
            m /= info.episodes() as f64;
            means.row_mut(r).assign(&m);
        }
        let (g_out, g_tape) = enc.g.forward(params, means.view())?;
        for (r, &q) in active.iter().enumerate() {
            z.row_mut(q).assign(&g_out.row(r));
        }
        Ok((
            z,
            PrefixEncoding {
                f_tape: Some(f_tape),
                g_tape: Some(g_tape),
                active,
                queries,
                ep_lens,
                n_rows,
            },
        ))
    }

    /// Accumulates encoder gradients for upstream `dz` (one row per query).
    pub fn backward(&self, enc: &Encoder, params: &[f64], dz: ArrayView2<f64>, grads: &mut [f64]) -> Result<()> {
        let (Some(f_tape), Some(g_tape)) = (&self.f_tape, &self.g_tape) else {
            return Ok(());
        };
        let d = enc.d_z;
        if dz.dim() != (self.queries.len(), d) {
            return Err(Error::shape("dz rows must match queries"));
        }
        let g_up = dz.select(ndarray::Axis(0), &self.active);
        let d_mean = enc.g.backward(params, g_tape, g_up.view(), grads)?;

        // Per query, weight 1/N. Closed episodes e < closed receive it spread
        // over their T_e rows; the partial rows [start, prefix) over T_p.
        let n_eps = self.ep_lens.len();
        let mut by_closed = Array2::<f64>::zeros((n_eps + 1, d));
        let mut diff = Array2::<f64>::zeros((self.n_rows + 1, d));
        for (r, &q) in self.active.iter().enumerate() {
            let info = self.queries[q];
            let v = &d_mean.row(r) / info.episodes() as f64;
            let mut acc = by_closed.row_mut(info.closed);
            acc += &v;
            if info.partial() > 0 {
                let w = &v / info.partial() as f64;
                let mut a = diff.row_mut(info.start);
                a += &w;
                let mut b = diff.row_mut(info.prefix);
                b -= &w;
            }
        }
        let mut d_f = Array2::<f64>::zeros((self.n_rows, d));
        // Partial-episode contributions: prefix sum of the difference array.
        let mut run = ndarray::Array1::<f64>::zeros(d);
        for i in 0..self.n_rows {
            run += &diff.row(i);
            d_f.row_mut(i).assign(&run);
        }
        // Closed-episode contributions: episode e collects every query with closed > e.
        let mut suffix = ndarray::Array1::<f64>::zeros(d);
        let mut end: usize = self.ep_lens.iter().sum();
        for e in (0..n_eps).rev() {
            suffix += &by_closed.row(e + 1);
            let start = end - self.ep_lens[e];
            if start < self.n_rows {
                let share = &suffix / self.ep_lens[e] as f64;
                let hi = end.min(self.n_rows);
                let mut block = d_f.slice_mut(s![start..hi, ..]);
                block += &share;
            }
            end = start;
        }
        enc.f.backward(params, f_tape, d_f.view(), grads)?;
        Ok(())
    }
}

//! Power-series graph kernels estimated by random walks.
//!
//! A kernel `K = sum_k alpha_k W^k` is factored through a modulation function
//! `f` whose self-convolution is `alpha`. Each walker deposits
//! `load * f(len)` on the nodes it visits; the resulting signature vectors
//! satisfy `E[phi(i) . phi'(j)] = K_ij` for independent walk sets.

use std::io::Write;

use dashu_float::round::mode::HalfEven;
use dashu_float::FBig;
use rand::distributions::{Bernoulli, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::graph::WeightedGraph;
use crate::linalg::DenseMatrix;

type BigFloat = FBig<HalfEven, 2>;

/// Values below this are treated as zero when truncating coefficient series.
pub const ALPHA_CUTOFF: f64 = 1e-300;

/// Hard cap on series length when no explicit truncation is requested.
pub const DEFAULT_MAX_TERMS: usize = 20_000;

/// Where a coefficient sequence came from. Heat coefficients are kept in
/// closed form so that deconvolution can be carried out without first
/// rounding them to `f64`.
#[derive(Debug, Clone, PartialEq)]
pub enum AlphaSource {
    /// `alpha_k = exp(log_scale) * t^k / k!`.
    Heat { t: f64, log_scale: f64 },
    Explicit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaCoefficients {
    values: Vec<f64>,
    source: AlphaSource,
    truncated: bool,
}

impl AlphaCoefficients {
    pub fn explicit(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("alpha coefficients"));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid("alpha", format!("alpha_{k} is not finite")));
        }
        Ok(Self {
            values,
            source: AlphaSource::Explicit,
            truncated: false,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest index kept.
    pub fn truncation(&self) -> usize {
        self.values.len() - 1
    }

    pub fn source(&self) -> &AlphaSource {
        &self.source
    }

    /// True when the length cap, not the magnitude cutoff, ended the series.
    pub fn truncated_by_length(&self) -> bool {
        self.truncated
    }
}

/// `alpha_k = t^k / k!` for `exp(t M)`.
pub fn heat_alpha(t: f64, k_max: usize) -> Result<AlphaCoefficients> {
    heat_alpha_scaled(t, k_max, 0.0)
}

/// `alpha_k = exp(log_scale) t^k / k!`, evaluated in log space so that very
/// small prefactors such as `exp(-c)` with large `c` do not underflow the
/// bulk of the series. The series stops at the first `k >= t` whose value
/// falls below [`ALPHA_CUTOFF`], or at `k_max`.
pub fn heat_alpha_scaled(t: f64, k_max: usize, log_scale: f64) -> Result<AlphaCoefficients> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(invalid("t", format!("diffusion time must be finite and >= 0, got {t}")));
    }
    if !log_scale.is_finite() {
        return Err(invalid("log_scale", "must be finite"));
    }
    let ln_cut = ALPHA_CUTOFF.ln();
    let ln_t = t.ln();
    let mut values = vec![log_scale.exp()];
    let mut ln_a = log_scale;
    let mut truncated = true;
    for k in 1..=k_max {
        if t == 0.0 {
            break;
        }
        ln_a += ln_t - (k as f64).ln();
        if k as f64 >= t && ln_a < ln_cut {
            truncated = false;
            break;
        }
        values.push(ln_a.exp());
    }
    if t == 0.0 {
        truncated = false;
    } else if values.len() == k_max + 1 {
        // the cap was reached; it only counts as a length cut if the next
        // term would still have been kept
        let next = ln_a + ln_t - ((k_max + 1) as f64).ln();
        truncated = !((k_max + 1) as f64 >= t && next < ln_cut);
    }
    Ok(AlphaCoefficients {
        values,
        source: AlphaSource::Heat { t, log_scale },
        truncated,
    })
}

/// Modulation function `f(0..support)`; zero beyond the stored values.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationFunction {
    values: Vec<f64>,
}

impl ModulationFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("modulation function"));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid("f", format!("f({k}) is not finite")));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, k: usize) -> f64 {
        self.values.get(k).copied().unwrap_or(0.0)
    }

    /// Number of leading values after which `f` is identically zero.
    pub fn support(&self) -> usize {
        self.values.len()
    }

    /// Drops the trailing tail whose values are all below `rel * max|f|`.
    /// Walks never deposit past the support, so this bounds their length.
    pub fn truncate_relative(&self, rel: f64) -> Self {
        let peak = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let cut = rel * peak;
        let last = self
            .values
            .iter()
            .rposition(|v| v.abs() >= cut && *v != 0.0)
            .unwrap_or(0);
        Self {
            values: self.values[..=last].to_vec(),
        }
    }

    pub fn check_non_negative(&self) -> Result<()> {
        match self.values.iter().position(|&v| v < 0.0) {
            Some(index) => Err(Error::NegativeModulation {
                index,
                value: self.values[index],
            }),
            None => Ok(()),
        }
    }
}

/// Discrete convolution truncated to the shorter of the two inputs' reach:
/// `out[k] = sum_{p=0}^{k} a[k-p] b[p]` for `k < max(len)`.
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|k| {
            (0..=k)
                .filter(|&p| p < b.len() && k - p < a.len())
                .map(|p| a[k - p] * b[p])
                .sum()
        })
        .collect()
}

fn big(x: f64, prec: usize) -> BigFloat {
    BigFloat::try_from(x)
        .expect("finite f64 converts exactly")
        .with_precision(prec)
        .value()
}

/// Solves `sum_{p=0}^{k} f(k-p) f(p) = alpha_k` by forward recursion.
///
/// The recursion loses roughly one bit per step to cancellation, so it runs
/// in binary floating point with `len + 192` bits. Heat coefficients are
/// regenerated at that precision from their closed form; explicit ones are
/// taken exactly as given. Leading underflowed or trailing zero terms are
/// handled through the normalised sequence `alpha / alpha_0`.
pub fn deconvolve_alpha(alpha: &AlphaCoefficients) -> Result<ModulationFunction> {
    let n = alpha.len();
    let prec = n + 192;
    let two = big(2.0, prec);

    // beta = alpha / alpha_0 at working precision; `half_scale` = sqrt(alpha_0)
    let (beta, half_scale): (Vec<BigFloat>, BigFloat) = match alpha.source() {
        AlphaSource::Heat { t, log_scale } => {
            let t = big(*t, prec);
            let mut beta = Vec::with_capacity(n);
            beta.push(big(1.0, prec));
            for k in 1..n {
                let next = &beta[k - 1] * &t / big(k as f64, prec);
                beta.push(next);
            }
            (beta, big(log_scale / 2.0, prec).exp())
        }
        AlphaSource::Explicit => {
            let a0 = alpha.values()[0];
            if !(a0 > 0.0) {
                return Err(Error::DeconvolutionUndefined(a0));
            }
            let a0b = big(a0, prec);
            let beta = alpha.values().iter().map(|&a| big(a, prec) / &a0b).collect();
            let half = (a0b.ln() / big(2.0, prec)).exp();
            (beta, half)
        }
    };

    let mut g: Vec<BigFloat> = Vec::with_capacity(n);
    g.push(big(1.0, prec));
    for k in 1..n {
        let mut acc = beta[k].clone();
        for p in 1..k {
            acc -= &g[p] * &g[k - p];
        }
        g.push(acc / &two);
    }
    let values = g
        .iter()
        .map(|gk| (gk * &half_scale).to_f64().value())
        .collect();
    ModulationFunction::new(values)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkConfig {
    pub p_halt: f64,
    pub num_walks: usize,
    pub seed: u64,
}

impl WalkConfig {
    pub fn new(p_halt: f64, num_walks: usize, seed: u64) -> Result<Self> {
        let cfg = Self {
            p_halt,
            num_walks,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_halt > 0.0 && self.p_halt < 1.0) {
            return Err(invalid("p_halt", format!("must lie in (0, 1), got {}", self.p_halt)));
        }
        if self.num_walks == 0 {
            return Err(invalid("num_walks", "must be at least 1"));
        }
        Ok(())
    }

    /// Seed for an independent second walk set.
    pub fn independent(&self) -> Self {
        Self {
            seed: self.seed ^ 0x9e37_79b9_7f4a_7c15,
            ..*self
        }
    }
}

/// Sparse non-negative vector indexed by node, entries sorted by node.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureVector {
    pub start_node: usize,
    pub num_nodes: usize,
    pub entries: Vec<(usize, f64)>,
}

impl SignatureVector {
    pub fn get(&self, node: usize) -> f64 {
        self.entries
            .binary_search_by_key(&node, |&(j, _)| j)
            .map_or(0.0, |pos| self.entries[pos].1)
    }

    pub fn dot(&self, other: &Self) -> f64 {
        let (mut a, mut b) = (self.entries.iter().peekable(), other.entries.iter().peekable());
        let mut acc = 0.0;
        while let (Some(&&(i, x)), Some(&&(j, y))) = (a.peek(), b.peek()) {
            match i.cmp(&j) {
                std::cmp::Ordering::Less => {
                    a.next();
                }
                std::cmp::Ordering::Greater => {
                    b.next();
                }
                std::cmp::Ordering::Equal => {
                    acc += x * y;
                    a.next();
                    b.next();
                }
            }
        }
        acc
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.num_nodes];
        for &(j, x) in &self.entries {
            v[j] = x;
        }
        v
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            entries: self.entries.iter().map(|&(j, x)| (j, x * s)).collect(),
            ..self.clone()
        }
    }
}

struct Scratch {
    acc: Vec<f64>,
    touched: Vec<usize>,
}

/// Runs `num_walks` walkers from every start node.
///
/// Each start node owns a ChaCha stream keyed by `(seed, start)`, so the
/// output is identical for any thread count. Walkers deposit, step to a
/// uniform neighbour, reweight the load by `deg / (1 - p_halt) * w`, then
/// draw termination. They also stop once the walk length passes the
/// support of `f`, past which deposits are zero.
pub fn run_grf(
    graph: &WeightedGraph,
    f: &ModulationFunction,
    config: &WalkConfig,
    start_nodes: &[usize],
) -> Result<Vec<SignatureVector>> {
    config.validate()?;
    f.check_non_negative()?;
    let n = graph.num_nodes();
    if let Some(&bad) = start_nodes.iter().find(|&&s| s >= n) {
        return Err(Error::NodeOutOfRange { index: bad, len: n });
    }
    let fvals = f.values();
    let support = f.support();
    let survive = 1.0 / (1.0 - config.p_halt);
    let inv_m = 1.0 / config.num_walks as f64;
    let halt = Bernoulli::new(config.p_halt).map_err(|e| invalid("p_halt", e.to_string()))?;
    // one sampler per node: `gen_range` redoes a 64-bit modulo on every call
    let pickers = (0..n)
        .map(|i| match graph.neighbors(i).len() {
            0 => Ok(None),
            deg => u32::try_from(deg)
                .map(|d| Some(Uniform::new(0, d)))
                .map_err(|_| invalid("graph", format!("node {i} has more than u32::MAX neighbours"))),
        })
        .collect::<Result<Vec<_>>>()?;

    start_nodes
        .par_iter()
        .map_init(
            || Scratch {
                acc: vec![0.0; n],
                touched: Vec::new(),
            },
            |scratch, &start| {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(start as u64);
                for _ in 0..config.num_walks {
                    let mut cur = start;
                    let mut load = 1.0;
                    let mut len = 0;
                    while len < support {
                        let dep = load * fvals[len];
                        if dep != 0.0 {
                            if scratch.acc[cur] == 0.0 {
                                scratch.touched.push(cur);
                            }
                            scratch.acc[cur] += dep;
                        }
                        len += 1;
                        let Some(pick) = pickers[cur] else {
                            return Err(Error::WalkerStuck(cur));
                        };
                        let nbrs = graph.neighbors(cur);
                        let (next, w) = nbrs[rng.sample(pick) as usize];
                        load *= nbrs.len() as f64 * survive * w;
                        cur = next;
                        if rng.sample(halt) {
                            break;
                        }
                    }
                }
                scratch.touched.sort_unstable();
                let entries = scratch
                    .touched
                    .drain(..)
                    .map(|j| {
                        let v = std::mem::take(&mut scratch.acc[j]) * inv_m;
                        (j, v)
                    })
                    .collect();
                Ok(SignatureVector {
                    start_node: start,
                    num_nodes: n,
                    entries,
                })
            },
        )
        .collect()
}

/// Stacks signatures as rows of a dense `len x num_nodes` matrix.
pub fn signatures_to_dense(sigs: &[SignatureVector]) -> Result<DenseMatrix> {
    let n = sigs.first().map_or(0, |s| s.num_nodes);
    let mut m = DenseMatrix::zeros(sigs.len(), n);
    for (r, s) in sigs.iter().enumerate() {
        if s.num_nodes != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: s.num_nodes,
            });
        }
        let row = m.row_mut(r);
        for &(j, v) in &s.entries {
            row[j] = v;
        }
    }
    Ok(m)
}

/// Gram matrix `(i, j) -> <rows[i], cols[j]>`.
pub fn estimate_kernel(rows: &[SignatureVector], cols: &[SignatureVector]) -> Result<DenseMatrix> {
    if let (Some(r), Some(c)) = (rows.first(), cols.first()) {
        if r.num_nodes != c.num_nodes {
            return Err(Error::DimensionMismatch {
                expected: r.num_nodes,
                actual: c.num_nodes,
            });
        }
    }
    let a = signatures_to_dense(rows)?;
    let b = signatures_to_dense(cols)?;
    if a.rows() == 0 || b.rows() == 0 {
        return Ok(DenseMatrix::zeros(a.rows(), b.rows()));
    }
    a.matmul_transposed(&b)
}

/// `sum_k alpha_k W^k` by repeated multiplication.
///
/// The running power is renormalised every step and its log-norm tracked, so
/// large `||W||` with fast-decaying `alpha` does not overflow. Heat series
/// that were cut by length must have a final term below `1e-16` of the
/// accumulated sum; otherwise the series is reported as divergent.
pub fn exact_kernel_series(w: &DenseMatrix, alpha: &AlphaCoefficients) -> Result<DenseMatrix> {
    if !w.is_square() {
        return Err(Error::DimensionMismatch {
            expected: w.rows(),
            actual: w.cols(),
        });
    }
    let n = w.rows();
    let a = alpha.values();
    let mut acc = DenseMatrix::identity(n);
    acc.scale_in_place(a[0]);
    let mut power = DenseMatrix::identity(n);
    let mut log_norm = 0.0f64;
    let mut last_term_norm = a[0].abs();
    for (k, &ak) in a.iter().enumerate().skip(1) {
        power = power.matmul(w)?;
        let m = power.max_abs();
        if m == 0.0 {
            last_term_norm = 0.0;
            break;
        }
        if !m.is_finite() {
            return Err(Error::SeriesDivergence {
                terms: k,
                last_term_norm: f64::INFINITY,
            });
        }
        power.scale_in_place(1.0 / m);
        log_norm += m.ln();
        if ak == 0.0 {
            last_term_norm = 0.0;
            continue;
        }
        let coef = ak.signum() * (ak.abs().ln() + log_norm).exp();
        if !coef.is_finite() {
            return Err(Error::SeriesDivergence {
                terms: k,
                last_term_norm: f64::INFINITY,
            });
        }
        for (dst, src) in acc.as_mut_slice().iter_mut().zip(power.as_slice()) {
            *dst += coef * src;
        }
        last_term_norm = coef.abs();
    }
    let scale = acc.max_abs();
    if !scale.is_finite() {
        return Err(Error::SeriesDivergence {
            terms: a.len(),
            last_term_norm,
        });
    }
    let guarded = matches!(alpha.source(), AlphaSource::Heat { .. }) && alpha.truncated_by_length();
    if guarded && last_term_norm >= 1e-16 * scale {
        return Err(Error::SeriesDivergence {
            terms: a.len(),
            last_term_norm,
        });
    }
    Ok(acc)
}

/// Writes `start_node,node,value` rows.
pub fn write_signatures_csv<W: Write>(writer: W, sigs: &[SignatureVector]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["start_node", "node", "value"])?;
    for s in sigs {
        for &(j, v) in &s.entries {
            w.write_record(&[s.start_node.to_string(), j.to_string(), format!("{v:e}")])?;
        }
    }
    w.flush()?;
    Ok(())
}

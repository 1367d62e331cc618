//! A small ReLU network regressing signature values from
//! `(x, omega, geodesic distance)`, trained with Adam on a clamped relative
//! error.

use std::io::{BufRead, BufReader, Read, Write};

use rand::distributions::Uniform;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::graph::PointCloud;
use crate::grf::SignatureVector;
use crate::linalg::{gemm_slices, DenseMatrix};

pub const HIDDEN: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTriple {
    pub x: Vec<f64>,
    pub omega: Vec<f64>,
    pub geodesic: f64,
    pub target: f64,
}

impl TrainingTriple {
    pub fn input(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.x.len() + 1);
        v.extend_from_slice(&self.x);
        v.extend_from_slice(&self.omega);
        v.push(self.geodesic);
        v
    }
}

/// Options for [`build_dataset`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetConfig {
    pub keep_threshold: f64,
    pub retain_prob: f64,
    /// Number of candidate nodes drawn uniformly without replacement per
    /// start; `None` uses every node.
    pub candidates_per_start: Option<usize>,
    pub seed: u64,
}

/// Turns signature vectors into training triples.
///
/// Candidates for a start `x` are nodes `omega` (all of them, or a uniform
/// sample of `candidates_per_start`). Targets at or above `keep_threshold` are always kept;
/// smaller ones, zeros included, survive with probability `retain_prob`.
/// `geodesics[s]` is the distance row of `signatures[s].start_node`.
pub fn build_dataset(
    signatures: &[SignatureVector],
    points: &PointCloud,
    geodesics: &[Vec<f64>],
    config: &DatasetConfig,
) -> Result<Vec<TrainingTriple>> {
    if !(0.0..=1.0).contains(&config.retain_prob) {
        return Err(invalid("retain_prob", format!("must lie in [0, 1], got {}", config.retain_prob)));
    }
    if geodesics.len() != signatures.len() {
        return Err(Error::DimensionMismatch {
            expected: signatures.len(),
            actual: geodesics.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = Vec::new();
    for (sig, row) in signatures.iter().zip(geodesics) {
        if sig.num_nodes != points.len() || row.len() != points.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                actual: if sig.num_nodes != points.len() { sig.num_nodes } else { row.len() },
            });
        }
        let candidates: Vec<usize> = match config.candidates_per_start {
            Some(limit) if limit < points.len() => {
                let mut c = rand::seq::index::sample(&mut rng, points.len(), limit).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..points.len()).collect(),
        };
        let dense = sig.to_dense();
        for w in candidates {
            let target = dense[w];
            let keep = target >= config.keep_threshold || rng.gen::<f64>() < config.retain_prob;
            if !keep {
                continue;
            }
            let g = row[w];
            if !g.is_finite() {
                return Err(Error::MissingGeodesic(sig.start_node, w));
            }
            out.push(TrainingTriple {
                x: points.point(sig.start_node).to_vec(),
                omega: points.point(w).to_vec(),
                geodesic: g,
                target,
            });
        }
    }
    if out.is_empty() {
        return Err(Error::DatasetEmpty);
    }
    Ok(out)
}

/// `|pred - target| / max(target, eps)`.
pub fn clamped_relative_loss(pred: f64, target: f64, eps: f64) -> f64 {
    (pred - target).abs() / target.max(eps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Raw network output.
    Train,
    /// Output clamped at zero.
    Inference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Network weights plus the per-feature input standardisation.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateParams {
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub layers: Vec<Layer>,
}

impl SurrogateParams {
    /// `input -> 128 -> 128 -> 1` with Glorot-uniform weights and zero biases.
    pub fn init(input_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sizes = [input_dim, HIDDEN, HIDDEN, 1];
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (i, o) = (w[0], w[1]);
                let a = (6.0 / (i + o) as f64).sqrt();
                let dist = Uniform::new_inclusive(-a, a);
                Layer {
                    inputs: i,
                    outputs: o,
                    weights: (0..i * o).map(|_| rng.sample(dist)).collect(),
                    biases: vec![0.0; o],
                }
            })
            .collect();
        Self {
            input_mean: vec![0.0; input_dim],
            input_scale: vec![1.0; input_dim],
            layers,
        }
    }

    pub fn zeros(input_dim: usize) -> Self {
        let mut p = Self::init(input_dim, 0);
        for l in &mut p.layers {
            l.weights.iter_mut().for_each(|w| *w = 0.0);
        }
        p
    }

    pub fn input_dim(&self) -> usize {
        self.input_mean.len()
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Fits mean and standard deviation of each input column.
    pub fn set_standardization(&mut self, inputs: &[Vec<f64>]) {
        let d = self.input_dim();
        if inputs.is_empty() {
            return;
        }
        let n = inputs.len() as f64;
        for j in 0..d {
            let mean = inputs.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = inputs.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            self.input_mean[j] = mean;
            self.input_scale[j] = if var > 0.0 { 1.0 / var.sqrt() } else { 1.0 };
        }
    }

    fn standardize_into(&self, input: &[f64], dst: &mut [f64]) {
        for ((d, x), (m, s)) in dst.iter_mut().zip(input).zip(self.input_mean.iter().zip(&self.input_scale)) {
            *d = (x - m) * s;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    /// Writes a header line with the layer sizes followed by one line per
    /// tensor.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.layers.iter().map(|l| l.outputs));
        let header: Vec<String> = sizes.iter().map(usize::to_string).collect();
        writeln!(w, "surrogate {}", header.join(" "))?;
        let line = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(",");
        writeln!(w, "{}", line(&self.input_mean))?;
        writeln!(w, "{}", line(&self.input_scale))?;
        for l in &self.layers {
            writeln!(w, "{}", line(&l.weights))?;
            writeln!(w, "{}", line(&l.biases))?;
        }
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        let mut next = || -> Result<String> { lines.next().ok_or(Error::Parse("truncated params".into()))?.map_err(Error::from) };
        let header = next()?;
        let mut toks = header.split_whitespace();
        if toks.next() != Some("surrogate") {
            return Err(Error::Parse("missing surrogate header".into()));
        }
        let sizes = toks
            .map(|t| t.parse::<usize>().map_err(|e| Error::Parse(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        if sizes.len() < 2 {
            return Err(Error::Parse("need at least one layer".into()));
        }
        let parse = |s: String, n: usize| -> Result<Vec<f64>> {
            let v = if s.is_empty() {
                Vec::new()
            } else {
                s.split(',')
                    .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(e.to_string())))
                    .collect::<Result<Vec<_>>>()?
            };
            if v.len() != n {
                return Err(Error::DimensionMismatch { expected: n, actual: v.len() });
            }
            Ok(v)
        };
        let input_mean = parse(next()?, sizes[0])?;
        let input_scale = parse(next()?, sizes[0])?;
        let mut layers = Vec::new();
        for w in sizes.windows(2) {
            let weights = parse(next()?, w[0] * w[1])?;
            let biases = parse(next()?, w[1])?;
            layers.push(Layer {
                inputs: w[0],
                outputs: w[1],
                weights,
                biases,
            });
        }
        Ok(Self {
            input_mean,
            input_scale,
            layers,
        })
    }
}

/// Scratch buffers for a batched forward pass.
struct Activations {
    /// Standardised inputs followed by each layer's post-activation.
    acts: Vec<Vec<f64>>,
    /// Pre-activations per layer.
    pre: Vec<Vec<f64>>,
}

fn forward_batch(params: &SurrogateParams, inputs: &[Vec<f64>]) -> Activations {
    let b = inputs.len();
    let d = params.input_dim();
    let mut x = vec![0.0; b * d];
    for (row, inp) in x.chunks_exact_mut(d).zip(inputs) {
        params.standardize_into(inp, row);
    }
    let mut acts = vec![x];
    let mut pre = Vec::with_capacity(params.layers.len());
    let last = params.layers.len() - 1;
    for (li, l) in params.layers.iter().enumerate() {
        let mut z = vec![0.0; b * l.outputs];
        for row in z.chunks_exact_mut(l.outputs) {
            row.copy_from_slice(&l.biases);
        }
        gemm_slices(
            &mut z,
            true,
            acts.last().expect("input present"),
            (b, l.inputs),
            false,
            &l.weights,
            (l.outputs, l.inputs),
            true,
        );
        let a = if li == last { z.clone() } else { z.iter().map(|v| v.max(0.0)).collect() };
        pre.push(z);
        acts.push(a);
    }
    Activations { acts, pre }
}

/// Network output for a single input `(x, omega, geodesic)`.
pub fn mlp_forward(params: &SurrogateParams, input: &[f64], mode: Mode) -> Result<f64> {
    Ok(mlp_forward_batch(params, &[input.to_vec()], mode)?[0])
}

pub fn mlp_forward_batch(params: &SurrogateParams, inputs: &[Vec<f64>], mode: Mode) -> Result<Vec<f64>> {
    let d = params.input_dim();
    if let Some(bad) = inputs.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: bad.len(),
        });
    }
    if inputs.is_empty() {
        return Ok(Vec::new());
    }
    let act = forward_batch(params, inputs);
    let out = act.acts.last().expect("output layer").clone();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(match mode {
        Mode::Train => out,
        Mode::Inference => out.into_iter().map(|v| v.max(0.0)).collect(),
    })
}

/// Gradients with the same layout as the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

/// Mean clamped relative loss of the raw output over a batch, with exact
/// gradients by backpropagation.
pub fn loss_and_gradients(
    params: &SurrogateParams,
    inputs: &[Vec<f64>],
    targets: &[f64],
    eps: f64,
) -> Result<(f64, Gradients)> {
    let b = inputs.len();
    if b == 0 || targets.len() != b {
        return Err(Error::DimensionMismatch {
            expected: b,
            actual: targets.len(),
        });
    }
    let act = forward_batch(params, inputs);
    let out = act.acts.last().expect("output layer");
    let mut loss = 0.0;
    let mut delta: Vec<f64> = Vec::with_capacity(b);
    for (p, &t) in out.iter().zip(targets) {
        let denom = t.max(eps);
        loss += (p - t).abs() / denom;
        let s = if p > &t {
            1.0
        } else if p < &t {
            -1.0
        } else {
            0.0
        };
        delta.push(s / denom / b as f64);
    }
    loss /= b as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite);
    }

    let nl = params.layers.len();
    let mut gw = vec![Vec::new(); nl];
    let mut gb = vec![Vec::new(); nl];
    for li in (0..nl).rev() {
        let l = &params.layers[li];
        // delta is dL/dz for this layer, b x outputs
        let mut dw = vec![0.0; l.outputs * l.inputs];
        gemm_slices(&mut dw, false, &delta, (b, l.outputs), true, &act.acts[li], (b, l.inputs), false);
        let mut db = vec![0.0; l.outputs];
        for row in delta.chunks_exact(l.outputs) {
            for (d, r) in db.iter_mut().zip(row) {
                *d += r;
            }
        }
        gw[li] = dw;
        gb[li] = db;
        if li > 0 {
            let mut prev = vec![0.0; b * l.inputs];
            gemm_slices(&mut prev, false, &delta, (b, l.outputs), false, &l.weights, (l.outputs, l.inputs), false);
            for (p, z) in prev.iter_mut().zip(&act.pre[li - 1]) {
                if *z <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }
    Ok((loss, Gradients { weights: gw, biases: gb }))
}

/// Mean loss of the raw (or clamped) output, no gradients.
pub fn mean_loss(params: &SurrogateParams, inputs: &[Vec<f64>], targets: &[f64], eps: f64, mode: Mode) -> Result<f64> {
    let out = mlp_forward_batch(params, inputs, mode)?;
    Ok(out
        .iter()
        .zip(targets)
        .map(|(&p, &t)| clamped_relative_loss(p, t, eps))
        .sum::<f64>()
        / targets.len().max(1) as f64)
}

fn param_mut(p: &mut SurrogateParams, layer: usize, bias: bool, k: usize) -> &mut f64 {
    if bias {
        &mut p.layers[layer].biases[k]
    } else {
        &mut p.layers[layer].weights[k]
    }
}

/// Largest per-tensor relative difference between backprop gradients and
/// central finite differences with step `h`.
pub fn gradient_check(params: &SurrogateParams, inputs: &[Vec<f64>], targets: &[f64], eps: f64, h: f64) -> Result<f64> {
    let (_, grads) = loss_and_gradients(params, inputs, targets, eps)?;
    let mut worst = 0.0f64;
    let mut probe = params.clone();
    for li in 0..params.layers.len() {
        for is_bias in [false, true] {
            let n = if is_bias { params.layers[li].biases.len() } else { params.layers[li].weights.len() };
            let analytic = if is_bias { &grads.biases[li] } else { &grads.weights[li] };
            let mut num = vec![0.0; n];
            for k in 0..n {
                let orig = *param_mut(&mut probe, li, is_bias, k);
                *param_mut(&mut probe, li, is_bias, k) = orig + h;
                let up = mean_loss(&probe, inputs, targets, eps, Mode::Train)?;
                *param_mut(&mut probe, li, is_bias, k) = orig - h;
                let down = mean_loss(&probe, inputs, targets, eps, Mode::Train)?;
                *param_mut(&mut probe, li, is_bias, k) = orig;
                num[k] = (up - down) / (2.0 * h);
            }
            let diff: f64 = num.iter().zip(analytic).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let scale = num.iter().map(|v| v * v).sum::<f64>().sqrt().max(analytic.iter().map(|v| v * v).sum::<f64>().sqrt());
            if scale > 0.0 {
                worst = worst.max(diff / scale);
            }
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub eps: f64,
    pub val_split: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(invalid("learning_rate", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size", "must be positive"));
        }
        if !(self.eps > 0.0) {
            return Err(invalid("eps", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.val_split) {
            return Err(invalid("val_split", format!("must lie in [0, 1), got {}", self.val_split)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    /// Clamped-output loss on the held-out split; `None` without one.
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: SurrogateParams,
    pub history: Vec<EpochLoss>,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(params: &SurrogateParams) -> Self {
        let shapes: Vec<usize> = params
            .layers
            .iter()
            .flat_map(|l| [l.weights.len(), l.biases.len()])
            .collect();
        Self {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    fn update(&mut self, params: &mut SurrogateParams, grads: &Gradients, lr: f64) {
        self.step += 1;
        let c1 = 1.0 - Self::B1.powi(self.step);
        let c2 = 1.0 - Self::B2.powi(self.step);
        for (li, layer) in params.layers.iter_mut().enumerate() {
            for (slot, (p, g)) in [
                (2 * li, (&mut layer.weights, &grads.weights[li])),
                (2 * li + 1, (&mut layer.biases, &grads.biases[li])),
            ] {
                let (m, v) = (&mut self.m[slot], &mut self.v[slot]);
                for k in 0..p.len() {
                    m[k] = Self::B1 * m[k] + (1.0 - Self::B1) * g[k];
                    v[k] = Self::B2 * v[k] + (1.0 - Self::B2) * g[k] * g[k];
                    let mh = m[k] / c1;
                    let vh = v[k] / c2;
                    p[k] -= lr * mh / (vh.sqrt() + Self::EPS);
                }
            }
        }
    }
}

/// Splits per triple, standardises inputs on the training part, then runs
/// Adam on shuffled mini-batches.
pub fn train(dataset: &[TrainingTriple], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::DatasetEmpty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng);
    let n_val = (config.val_split * dataset.len() as f64).floor() as usize;
    let val_indices: Vec<usize> = order[..n_val].to_vec();
    let mut train_indices: Vec<usize> = order[n_val..].to_vec();
    if train_indices.is_empty() {
        return Err(invalid("val_split", "leaves no training samples"));
    }

    let inputs: Vec<Vec<f64>> = dataset.iter().map(TrainingTriple::input).collect();
    let dim = inputs[0].len();
    let mut params = SurrogateParams::init(dim, config.seed.wrapping_add(1));
    let train_inputs: Vec<Vec<f64>> = train_indices.iter().map(|&i| inputs[i].clone()).collect();
    params.set_standardization(&train_inputs);
    let val_inputs: Vec<Vec<f64>> = val_indices.iter().map(|&i| inputs[i].clone()).collect();
    let val_targets: Vec<f64> = val_indices.iter().map(|&i| dataset[i].target).collect();

    let mut adam = Adam::new(&params);
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        train_indices.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in train_indices.chunks(config.batch_size) {
            let bx: Vec<Vec<f64>> = batch.iter().map(|&i| inputs[i].clone()).collect();
            let bt: Vec<f64> = batch.iter().map(|&i| dataset[i].target).collect();
            let (loss, grads) = match loss_and_gradients(&params, &bx, &bt, config.eps) {
                Ok(v) => v,
                Err(Error::NonFinite) => return Err(Error::Divergence(epoch)),
                Err(e) => return Err(e),
            };
            total += loss * batch.len() as f64;
            adam.update(&mut params, &grads, config.learning_rate);
        }
        let train_loss = total / train_indices.len() as f64;
        if !train_loss.is_finite() || !params.is_finite() {
            return Err(Error::Divergence(epoch));
        }
        let val_loss = if val_inputs.is_empty() {
            None
        } else {
            match mean_loss(&params, &val_inputs, &val_targets, config.eps, Mode::Inference) {
                Ok(v) => Some(v),
                Err(Error::NonFinite) => return Err(Error::Divergence(epoch)),
                Err(e) => return Err(e),
            }
        };
        history.push(EpochLoss {
            epoch,
            train_loss,
            val_loss,
        });
    }
    train_indices.sort_unstable();
    let mut val_indices = val_indices;
    val_indices.sort_unstable();
    Ok(TrainOutcome {
        params,
        history,
        train_indices,
        val_indices,
    })
}

/// `Phi_il = g(x_i, omega_l, d(i, l)) / sqrt(n_rf)` with the clamped output.
/// `geodesics` is `eval x anchors`.
pub fn predict_feature_matrix(
    params: &SurrogateParams,
    eval_points: &PointCloud,
    anchors: &PointCloud,
    geodesics: &DenseMatrix,
) -> Result<DenseMatrix> {
    if geodesics.shape() != (eval_points.len(), anchors.len()) {
        return Err(Error::DimensionMismatch {
            expected: eval_points.len() * anchors.len(),
            actual: geodesics.rows() * geodesics.cols(),
        });
    }
    let n_rf = anchors.len();
    let mut inputs = Vec::with_capacity(eval_points.len() * n_rf);
    for i in 0..eval_points.len() {
        for l in 0..n_rf {
            let g = geodesics[(i, l)];
            if !g.is_finite() {
                return Err(Error::MissingGeodesic(i, l));
            }
            let mut v = Vec::with_capacity(params.input_dim());
            v.extend_from_slice(eval_points.point(i));
            v.extend_from_slice(anchors.point(l));
            v.push(g);
            inputs.push(v);
        }
    }
    let mut out = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(4096) {
        out.extend(mlp_forward_batch(params, chunk, Mode::Inference)?);
    }
    let scale = 1.0 / (n_rf as f64).sqrt();
    out.iter_mut().for_each(|v| *v *= scale);
    DenseMatrix::new(eval_points.len(), n_rf, out)
}

/// Writes `epoch,train_loss,val_loss`.
pub fn write_loss_history<W: Write>(writer: W, history: &[EpochLoss]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["epoch", "train_loss", "val_loss"])?;
    for h in history {
        w.write_record(&[
            h.epoch.to_string(),
            format!("{:e}", h.train_loss),
            h.val_loss.map_or(String::new(), |v| format!("{v:e}")),
        ])?;
    }
    w.flush()?;
    Ok(())
}

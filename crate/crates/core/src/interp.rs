//! Kernel interpolation of per-vertex fields: masked normal prediction and
//! the normalised velocity interpolant, with a dense full-kernel path, a
//! factored MRF path and a small timing harness.

use std::io::Write;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::graph::{build_knn_graph, geodesic_rows, Bandwidth, KnnGraph, PointCloud, WeightedGraph};
use crate::grf::{heat_alpha, run_grf, ModulationFunction, SignatureVector, WalkConfig, DEFAULT_MAX_TERMS};
use crate::linalg::{gemm, DenseMatrix};
use crate::manifolds::{densify_mesh, Mesh, Vec3};
use crate::oracles::eigendecompose_symmetric;
use crate::surrogate::{build_dataset, predict_feature_matrix, train, DatasetConfig, EpochLoss, SurrogateParams, TrainConfig};

pub const DEFAULT_TAU: f64 = 20.0;

/// A field with a random subset of rows hidden.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedField {
    /// Input rows, zero on the masked set.
    pub values: Vec<Vec3>,
    /// `true` where the row is observed.
    pub observed: Vec<bool>,
    /// Masked node indices, ascending.
    pub masked: Vec<usize>,
}

impl MaskedField {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Hides `floor(fraction * |V|)` rows chosen uniformly without replacement.
pub fn mask_field(field: &[Vec3], fraction: f64, seed: u64) -> Result<MaskedField> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(invalid("fraction", format!("must lie in [0, 1), got {fraction}")));
    }
    let n = field.len();
    if n == 0 {
        return Err(Error::EmptyInput("field"));
    }
    let count = (fraction * n as f64).floor() as usize;
    if count >= n {
        return Err(Error::EmptyObservation);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut masked = rand::seq::index::sample(&mut rng, n, count).into_vec();
    masked.sort_unstable();
    let mut values = field.to_vec();
    let mut observed = vec![true; n];
    for &i in &masked {
        values[i] = [0.0; 3];
        observed[i] = false;
    }
    Ok(MaskedField {
        values,
        observed,
        masked,
    })
}

/// Something that multiplies a `|V| x c` block by a symmetric kernel.
pub trait KernelOperator {
    fn size(&self) -> usize;
    fn apply(&self, rhs: &DenseMatrix) -> Result<DenseMatrix>;
}

impl KernelOperator for DenseMatrix {
    fn size(&self) -> usize {
        self.rows()
    }

    fn apply(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        self.matmul(rhs)
    }
}

/// `K ~ Z Z^T`, applied as `Z (Z^T X)` without forming `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredKernel {
    pub features: DenseMatrix,
}

impl KernelOperator for FactoredKernel {
    fn size(&self) -> usize {
        self.features.rows()
    }

    fn apply(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        let inner = gemm(&self.features, true, rhs, false)?;
        self.features.matmul(&inner)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterpolationReport {
    pub predictions: Vec<Vec3>,
    /// Mean cosine similarity on the masked set for normals, relative
    /// Frobenius error on the masked set for velocities.
    pub score: f64,
    /// Rows whose prediction had zero norm before normalisation.
    pub zero_rows: Vec<usize>,
    pub preprocess_seconds: f64,
    pub interpolate_seconds: f64,
}

fn field_matrix(rows: &[Vec3]) -> DenseMatrix {
    DenseMatrix::new(rows.len(), 3, rows.iter().flatten().copied().collect()).expect("three columns")
}

fn check_len(op: &dyn KernelOperator, n: usize) -> Result<()> {
    if op.size() != n {
        return Err(Error::DimensionMismatch {
            expected: op.size(),
            actual: n,
        });
    }
    Ok(())
}

/// `N_pred = K N~` followed by row-wise unit normalisation.
///
/// The score averages `<pred_i, truth_i>` over the masked set (over every
/// node when nothing is masked); zero rows are flagged and count as 0.
pub fn interpolate_normals(op: &dyn KernelOperator, masked: &MaskedField, truth: &[Vec3]) -> Result<InterpolationReport> {
    let n = masked.len();
    check_len(op, n)?;
    if truth.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: truth.len(),
        });
    }
    let start = Instant::now();
    let raw = op.apply(&field_matrix(&masked.values))?;
    let mut predictions = Vec::with_capacity(n);
    let mut zero_rows = Vec::new();
    for i in 0..n {
        let r = raw.row(i);
        let len = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
        if !len.is_finite() {
            return Err(Error::NonFinite);
        }
        if len > 0.0 {
            predictions.push([r[0] / len, r[1] / len, r[2] / len]);
        } else {
            zero_rows.push(i);
            predictions.push([0.0; 3]);
        }
    }
    let interpolate_seconds = start.elapsed().as_secs_f64();
    let all: Vec<usize>;
    let scored = if masked.masked.is_empty() {
        all = (0..n).collect();
        &all
    } else {
        &masked.masked
    };
    let score = scored
        .iter()
        .map(|&i| (0..3).map(|k| predictions[i][k] * truth[i][k]).sum::<f64>())
        .sum::<f64>()
        / scored.len() as f64;
    Ok(InterpolationReport {
        predictions,
        score,
        zero_rows,
        preprocess_seconds: 0.0,
        interpolate_seconds,
    })
}

/// `U_pred = K (m * U) / (K m)` row-wise, from one application of `K` to
/// the stacked block `[m, m * U]`.
///
/// `field` is the full ground truth; masked rows are zeroed here. The
/// score is the relative Frobenius error on the masked set (absolute if
/// the truth there is zero, 0 when nothing is masked).
pub fn interpolate_velocity_normalized(op: &dyn KernelOperator, field: &[Vec3], observed: &[bool]) -> Result<InterpolationReport> {
    let n = field.len();
    check_len(op, n)?;
    if observed.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: observed.len(),
        });
    }
    if !observed.iter().any(|&o| o) {
        return Err(Error::EmptyObservation);
    }
    let start = Instant::now();
    let mut rhs = DenseMatrix::zeros(n, 4);
    for i in 0..n {
        if observed[i] {
            let r = rhs.row_mut(i);
            r[0] = 1.0;
            r[1..].copy_from_slice(&field[i]);
        }
    }
    let out = op.apply(&rhs)?;
    let mut predictions = Vec::with_capacity(n);
    for i in 0..n {
        let r = out.row(i);
        if !(r[0] > 0.0) || !r[0].is_finite() {
            return Err(Error::UnreachableNode(i));
        }
        predictions.push([r[1] / r[0], r[2] / r[0], r[3] / r[0]]);
    }
    let interpolate_seconds = start.elapsed().as_secs_f64();

    let (mut err, mut base) = (0.0, 0.0);
    for i in (0..n).filter(|&i| !observed[i]) {
        for k in 0..3 {
            err += (predictions[i][k] - field[i][k]).powi(2);
            base += field[i][k] * field[i][k];
        }
    }
    let score = if base > 0.0 { (err / base).sqrt() } else { err.sqrt() };
    Ok(InterpolationReport {
        predictions,
        score,
        zero_rows: Vec::new(),
        preprocess_seconds: 0.0,
        interpolate_seconds,
    })
}

/// `||a - b||_F / ||b||_F` over the listed rows.
pub fn relative_row_error(a: &[Vec3], b: &[Vec3], rows: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: b.len(),
            actual: a.len(),
        });
    }
    let (mut err, mut base) = (0.0, 0.0);
    for &i in rows {
        if i >= a.len() {
            return Err(Error::NodeOutOfRange { index: i, len: a.len() });
        }
        for k in 0..3 {
            err += (a[i][k] - b[i][k]).powi(2);
            base += b[i][k] * b[i][k];
        }
    }
    if base == 0.0 {
        return Err(Error::ZeroTruthNorm);
    }
    Ok((err / base).sqrt())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// Graph on the mesh vertices with one edge per face side and weights
/// `exp(-|x_i - x_j|^2 / sigma^2)`, `sigma^2` the median squared edge length.
pub fn mesh_edge_graph(mesh: &Mesh) -> Result<WeightedGraph> {
    let mut pairs: Vec<(usize, usize)> = mesh
        .faces
        .iter()
        .flat_map(|f| [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])])
        .map(|(a, b)| (a.min(b), a.max(b)))
        .filter(|(a, b)| a != b)
        .collect();
    if pairs.is_empty() {
        return Err(Error::EmptyInput("mesh edges"));
    }
    pairs.sort_unstable();
    pairs.dedup();
    let d2: Vec<f64> = pairs
        .iter()
        .map(|&(a, b)| {
            let (p, q) = (mesh.vertices[a], mesh.vertices[b]);
            (0..3).map(|k| (p[k] - q[k]).powi(2)).sum()
        })
        .collect();
    let sigma2 = median(d2.clone());
    if !(sigma2 > 0.0) {
        return Err(invalid("mesh", "median edge length is zero"));
    }
    let edges: Vec<(usize, usize, f64)> = pairs
        .iter()
        .zip(&d2)
        .map(|(&(a, b), &d)| (a, b, (-d / sigma2).exp()))
        .collect();
    WeightedGraph::from_edges(mesh.num_vertices(), &edges)
}

/// Dense `exp(tau W_f)` through a full eigendecomposition of `W_f`.
pub fn full_heat_kernel(graph: &WeightedGraph, tau: f64) -> Result<DenseMatrix> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(invalid("tau", format!("must be positive, got {tau}")));
    }
    let wf = graph.symmetric_normalized()?.to_dense();
    eigendecompose_symmetric(&wf)?.apply_function(|l| (tau * l).exp())
}

/// Walk, supervision and training budget for the MRF path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MrfConfig {
    pub knn: usize,
    pub tau: f64,
    pub p_halt: f64,
    pub num_walks: usize,
    pub num_starts: usize,
    pub candidates_per_start: Option<usize>,
    pub keep_threshold: f64,
    pub retain_prob: f64,
    /// Modulation entries below this fraction of the peak are dropped,
    /// which bounds the walk length. Zero keeps the whole series.
    pub f_cutoff: f64,
    pub n_rf: usize,
    /// Lower bound on the densified point count for mesh inputs.
    pub min_dense: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub eps: f64,
    pub val_split: f64,
    pub seed: u64,
}

impl MrfConfig {
    /// Full-scale budget.
    pub fn paper(seed: u64) -> Self {
        Self {
            knn: 16,
            tau: DEFAULT_TAU,
            p_halt: 0.01,
            num_walks: 10_000,
            num_starts: 1000,
            candidates_per_start: None,
            keep_threshold: 0.1,
            retain_prob: 0.025,
            f_cutoff: 0.0,
            n_rf: 256,
            min_dense: 5000,
            learning_rate: 1e-3,
            batch_size: 32_768,
            epochs: 1000,
            eps: 0.1,
            val_split: 0.2,
            seed,
        }
    }

    /// Reduced budget that runs in seconds to minutes on one machine.
    pub fn desk(seed: u64) -> Self {
        Self {
            num_walks: 2000,
            num_starts: 200,
            candidates_per_start: Some(150),
            f_cutoff: 1e-16,
            batch_size: 512,
            epochs: 150,
            ..Self::paper(seed)
        }
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            eps: self.eps,
            val_split: self.val_split,
            seed: self.seed.wrapping_add(3),
        }
    }
}

/// A trained surrogate together with the discretization it was fit on.
#[derive(Debug, Clone)]
pub struct MrfSurrogate {
    pub params: SurrogateParams,
    pub points: PointCloud,
    pub knn: KnnGraph,
    pub starts: Vec<usize>,
    /// GRF signatures of `starts`, in the same order.
    pub signatures: Vec<SignatureVector>,
    pub num_triples: usize,
    pub history: Vec<EpochLoss>,
}

/// Builds the kNN graph on `points`, estimates rows of `exp((tau/2) W_f)`
/// from starts drawn from `start_pool` and fits `g_theta` to them.
pub fn fit_mrf_surrogate(points: &PointCloud, start_pool: &[usize], cfg: &MrfConfig) -> Result<MrfSurrogate> {
    if start_pool.is_empty() {
        return Err(Error::EmptyInput("start pool"));
    }
    if let Some(&bad) = start_pool.iter().find(|&&s| s >= points.len()) {
        return Err(Error::NodeOutOfRange {
            index: bad,
            len: points.len(),
        });
    }
    let knn = build_knn_graph(points, cfg.knn, Bandwidth::MedianEdge)?;
    let wf = knn.graph.symmetric_normalized()?;
    // the half-kernel series is the modulation whose self-convolution gives
    // the heat coefficients of exp(tau W_f)
    let f = ModulationFunction::new(heat_alpha(cfg.tau / 2.0, DEFAULT_MAX_TERMS)?.values().to_vec())?
        .truncate_relative(cfg.f_cutoff);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let count = cfg.num_starts.min(start_pool.len());
    let mut starts: Vec<usize> = rand::seq::index::sample(&mut rng, start_pool.len(), count)
        .into_iter()
        .map(|i| start_pool[i])
        .collect();
    starts.sort_unstable();

    let walks = WalkConfig::new(cfg.p_halt, cfg.num_walks, cfg.seed.wrapping_add(1))?;
    let sigs = run_grf(&wf, &f, &walks, &starts)?;
    let geo = geodesic_rows(&knn.graph, points, &starts)?;
    let data = build_dataset(
        &sigs,
        points,
        &geo,
        &DatasetConfig {
            keep_threshold: cfg.keep_threshold,
            retain_prob: cfg.retain_prob,
            candidates_per_start: cfg.candidates_per_start,
            seed: cfg.seed.wrapping_add(2),
        },
    )?;
    let outcome = train(&data, &cfg.train_config())?;
    Ok(MrfSurrogate {
        params: outcome.params,
        points: points.clone(),
        knn,
        starts,
        signatures: sigs,
        num_triples: data.len(),
        history: outcome.history,
    })
}

impl MrfSurrogate {
    /// Feature rows `g(x_i, x_omega, d(i, omega)) / sqrt(n_rf)` for
    /// `eval_nodes`, with `n_rf` anchors drawn uniformly from all points.
    pub fn features(&self, eval_nodes: &[usize], n_rf: usize, seed: u64) -> Result<FactoredKernel> {
        let n = self.points.len();
        if n_rf == 0 || n_rf > n {
            return Err(invalid("n_rf", format!("need 1 <= n_rf <= {n}, got {n_rf}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut anchors = rand::seq::index::sample(&mut rng, n, n_rf).into_vec();
        anchors.sort_unstable();
        let rows = geodesic_rows(&self.knn.graph, &self.points, &anchors)?;
        let geo = DenseMatrix::from_fn(eval_nodes.len(), n_rf, |i, l| rows[l][eval_nodes[i]]);
        let features = predict_feature_matrix(
            &self.params,
            &self.points.select(eval_nodes),
            &self.points.select(&anchors),
            &geo,
        )?;
        Ok(FactoredKernel { features })
    }
}

fn elapsed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let out = f()?;
    Ok((out, start.elapsed().as_secs_f64()))
}

/// Full-kernel normals on the mesh-edge graph. Preprocessing is graph,
/// eigendecomposition and kernel formation.
pub fn normals_full_kernel(mesh: &Mesh, masked: &MaskedField, truth: &[Vec3], tau: f64) -> Result<InterpolationReport> {
    let (k, pre) = elapsed(|| full_heat_kernel(&mesh_edge_graph(mesh)?, tau))?;
    let mut report = interpolate_normals(&k, masked, truth)?;
    report.preprocess_seconds = pre;
    Ok(report)
}

/// MRF normals: the surrogate is fit on a densified copy of the mesh with
/// starts on the original vertices; features are evaluated on the vertices.
/// Anchor sampling, distances and network evaluation count as interpolation.
pub fn normals_mrf(mesh: &Mesh, masked: &MaskedField, truth: &[Vec3], cfg: &MrfConfig) -> Result<InterpolationReport> {
    let nv = mesh.num_vertices();
    let (model, pre) = elapsed(|| {
        let dense = densify_mesh(mesh, nv.max(cfg.min_dense), cfg.seed.wrapping_add(7))?;
        let pool: Vec<usize> = (0..nv).collect();
        fit_mrf_surrogate(&dense.point_cloud(), &pool, cfg)
    })?;
    let vertices: Vec<usize> = (0..nv).collect();
    let (op, feat) = elapsed(|| model.features(&vertices, cfg.n_rf, cfg.seed.wrapping_add(11)))?;
    let mut report = interpolate_normals(&op, masked, truth)?;
    report.preprocess_seconds = pre;
    report.interpolate_seconds += feat;
    Ok(report)
}

/// Dense spectral baseline for velocities on a point cloud. Preprocessing
/// is kNN graph, eigendecomposition and kernel formation.
pub fn velocity_full_kernel(
    points: &PointCloud,
    field: &[Vec3],
    observed: &[bool],
    knn: usize,
    tau: f64,
) -> Result<InterpolationReport> {
    let (k, pre) = elapsed(|| full_heat_kernel(&build_knn_graph(points, knn, Bandwidth::MedianEdge)?.graph, tau))?;
    let mut report = interpolate_velocity_normalized(&k, field, observed)?;
    report.preprocess_seconds = pre;
    Ok(report)
}

/// MRF velocities on a point cloud. Preprocessing is supervision, training
/// and feature precomputation for every point; interpolation is the two
/// thin products.
pub fn velocity_mrf(points: &PointCloud, field: &[Vec3], observed: &[bool], cfg: &MrfConfig) -> Result<InterpolationReport> {
    let (op, pre) = elapsed(|| {
        let all: Vec<usize> = (0..points.len()).collect();
        let model = fit_mrf_surrogate(points, &all, cfg)?;
        model.features(&all, cfg.n_rf, cfg.seed.wrapping_add(11))
    })?;
    let mut report = interpolate_velocity_normalized(&op, field, observed)?;
    report.preprocess_seconds = pre;
    Ok(report)
}

/// Wall-clock split of one timed run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timed {
    pub preprocess_seconds: f64,
    pub interpolate_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRecord {
    pub method: String,
    pub size: usize,
    pub preprocess_seconds: f64,
    pub interpolate_seconds: f64,
    pub censored: bool,
}

/// A labelled method for [`timing_harness`].
pub type TimedMethod<'a> = (String, Box<dyn FnMut(usize) -> Result<Timed> + 'a>);

/// Runs every method across `sizes`, one method at a time.
///
/// Each method first gets one untimed warm-up run at the smallest size.
/// Once a run's total time exceeds `budget` it is marked censored and the
/// method's larger sizes are recorded as censored without running.
pub fn timing_harness(sizes: &[usize], methods: &mut [TimedMethod<'_>], budget: Duration) -> Result<Vec<TimingRecord>> {
    if sizes.is_empty() {
        return Err(Error::EmptyInput("size list"));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("sizes", "must be strictly increasing"));
    }
    let mut out = Vec::new();
    for (label, run) in methods.iter_mut() {
        run(sizes[0])?;
        let mut over = false;
        for &size in sizes {
            if over {
                out.push(TimingRecord {
                    method: label.clone(),
                    size,
                    preprocess_seconds: f64::NAN,
                    interpolate_seconds: f64::NAN,
                    censored: true,
                });
                continue;
            }
            let t = run(size)?;
            over = t.preprocess_seconds + t.interpolate_seconds > budget.as_secs_f64();
            out.push(TimingRecord {
                method: label.clone(),
                size,
                preprocess_seconds: t.preprocess_seconds,
                interpolate_seconds: t.interpolate_seconds,
                censored: over,
            });
        }
    }
    Ok(out)
}

/// Least-squares slope of `ln(time)` against `ln(size)`.
pub fn loglog_slope(sizes: &[f64], times: &[f64]) -> Result<f64> {
    if sizes.len() != times.len() {
        return Err(Error::DimensionMismatch {
            expected: sizes.len(),
            actual: times.len(),
        });
    }
    if sizes.len() < 2 {
        return Err(invalid("sizes", "need at least two points"));
    }
    if sizes.iter().chain(times).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(invalid("timings", "sizes and times must be positive"));
    }
    let xs: Vec<f64> = sizes.iter().map(|s| s.ln()).collect();
    let ys: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

/// Writes `method,size,preprocess_seconds,interpolate_seconds,censored`.
pub fn write_timing_csv<W: Write>(writer: W, records: &[TimingRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifolds::{torus_mesh, vertex_normals};

    fn ramp(n: usize) -> Vec<Vec3> {
        (0..n).map(|i| [i as f64, 1.0, -(i as f64)]).collect()
    }

    #[test]
    fn mask_counts_and_zeroes() {
        let m = mask_field(&ramp(100), 0.8, 3).unwrap();
        assert_eq!(m.masked.len(), 80);
        assert_eq!(m.observed.iter().filter(|&&o| o).count(), 20);
        for &i in &m.masked {
            assert_eq!(m.values[i], [0.0; 3]);
        }
        assert_eq!(m, mask_field(&ramp(100), 0.8, 3).unwrap());
        assert_ne!(m.masked, mask_field(&ramp(100), 0.8, 4).unwrap().masked);
    }

    #[test]
    fn empty_mask_keeps_field() {
        let f = ramp(7);
        let m = mask_field(&f, 0.0, 1).unwrap();
        assert!(m.masked.is_empty());
        assert_eq!(m.values, f);
    }

    #[test]
    fn mask_rejects_bad_fractions() {
        assert!(mask_field(&ramp(5), 1.0, 0).is_err());
        assert!(mask_field(&ramp(5), -0.1, 0).is_err());
        assert!(mask_field(&[], 0.5, 0).is_err());
        // 0.9 of 1 rounds down to 0, so one observation is left
        assert!(mask_field(&ramp(1), 0.9, 0).is_ok());
    }

    #[test]
    fn identity_kernel_passes_observed_rows() {
        let truth: Vec<Vec3> = (0..10).map(|i| if i % 2 == 0 { [1.0, 0.0, 0.0] } else { [0.0, 0.6, 0.8] }).collect();
        let m = mask_field(&truth, 0.3, 5).unwrap();
        let r = interpolate_normals(&DenseMatrix::identity(10), &m, &truth).unwrap();
        assert_eq!(r.zero_rows, m.masked);
        for i in 0..10 {
            if m.observed[i] {
                assert_eq!(r.predictions[i], truth[i]);
            }
        }
        assert_eq!(r.score, 0.0);
    }

    #[test]
    fn ones_kernel_spreads_single_normal() {
        let n = 6;
        let mut vals = vec![[0.0; 3]; n];
        vals[2] = [0.0, 0.0, 1.0];
        let masked = MaskedField {
            values: vals,
            observed: (0..n).map(|i| i == 2).collect(),
            masked: vec![0, 1, 3, 4, 5],
        };
        let truth = vec![[0.0, 0.0, 1.0]; n];
        let ones = DenseMatrix::from_fn(n, n, |_, _| 1.0);
        let r = interpolate_normals(&ones, &masked, &truth).unwrap();
        assert!(r.predictions.iter().all(|p| *p == [0.0, 0.0, 1.0]));
        assert_eq!(r.score, 1.0);
    }

    #[test]
    fn factored_matches_dense() {
        let z = DenseMatrix::from_fn(8, 3, |i, j| ((i * 3 + j) as f64 * 0.37).sin().abs());
        let k = z.matmul_transposed(&z).unwrap();
        let x = DenseMatrix::from_fn(8, 4, |i, j| (i + 2 * j) as f64);
        let a = k.apply(&x).unwrap();
        let b = FactoredKernel { features: z }.apply(&x).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-12 * a.max_abs());
    }

    #[test]
    fn velocity_reproduces_constants_and_is_scale_free() {
        let n = 12;
        let k = DenseMatrix::from_fn(n, n, |i, j| (-((i as f64 - j as f64).powi(2)) / 4.0).exp());
        let c = [0.3, -1.7, 2.5];
        let field = vec![c; n];
        let m = mask_field(&field, 0.5, 9).unwrap();
        let r = interpolate_velocity_normalized(&k, &field, &m.observed).unwrap();
        for p in &r.predictions {
            for k in 0..3 {
                assert!((p[k] - c[k]).abs() < 1e-12);
            }
        }
        let f2 = ramp(n);
        let a = interpolate_velocity_normalized(&k, &f2, &m.observed).unwrap();
        let b = interpolate_velocity_normalized(&k.scaled(2.0), &f2, &m.observed).unwrap();
        for (p, q) in a.predictions.iter().zip(&b.predictions) {
            for k in 0..3 {
                assert!((p[k] - q[k]).abs() <= 1e-12 * p[k].abs().max(1.0));
            }
        }
    }

    #[test]
    fn velocity_with_stochastic_kernel_and_no_mask_is_k_u() {
        let n = 5;
        let k = DenseMatrix::from_fn(n, n, |i, j| if i == j { 0.6 } else { 0.1 });
        let u = ramp(n);
        let r = interpolate_velocity_normalized(&k, &u, &vec![true; n]).unwrap();
        let ku = k.matmul(&field_matrix(&u)).unwrap();
        for i in 0..n {
            for c in 0..3 {
                assert!((r.predictions[i][c] - ku[(i, c)]).abs() < 1e-12);
            }
        }
        assert_eq!(r.score, 0.0);
    }

    #[test]
    fn velocity_flags_unreachable_rows() {
        let k = DenseMatrix::identity(4);
        let obs = [true, false, true, true];
        assert!(matches!(
            interpolate_velocity_normalized(&k, &ramp(4), &obs),
            Err(Error::UnreachableNode(1))
        ));
        assert!(matches!(
            interpolate_velocity_normalized(&k, &ramp(4), &[false; 4]),
            Err(Error::EmptyObservation)
        ));
    }

    #[test]
    fn mesh_edges_of_a_torus() {
        let mesh = torus_mesh(6, 5, 2.0, 0.5).unwrap();
        let g = mesh_edge_graph(&mesh).unwrap();
        assert_eq!(g.num_nodes(), 30);
        // each quad contributes two sides and a diagonal
        assert_eq!(g.num_edges(), 3 * 30);
        assert!(g.is_symmetric());
        assert!(g.unweighted_degrees().iter().all(|&d| d == 6));
    }

    #[test]
    fn heat_kernel_is_positive_and_symmetric() {
        let mesh = torus_mesh(6, 5, 2.0, 0.5).unwrap();
        let k = full_heat_kernel(&mesh_edge_graph(&mesh).unwrap(), 3.0).unwrap();
        assert!(k.max_asymmetry() < 1e-9 * k.max_abs());
        assert!(k.as_slice().iter().all(|&v| v > 0.0));
        assert!(full_heat_kernel(&mesh_edge_graph(&mesh).unwrap(), 0.0).is_err());
    }

    #[test]
    fn normals_fk_on_a_coarse_torus_are_sensible() {
        let mesh = torus_mesh(24, 12, 2.0, 0.8).unwrap();
        let truth = vertex_normals(&mesh).normals;
        let m = mask_field(&truth, 0.5, 1).unwrap();
        let r = normals_full_kernel(&mesh, &m, &truth, 2.0).unwrap();
        assert!(r.score > 0.9, "{}", r.score);
        assert!(r.zero_rows.is_empty());
    }

    #[test]
    fn slope_of_power_law() {
        let s = [500.0, 1000.0, 2000.0, 4000.0];
        let t: Vec<f64> = s.iter().map(|x: &f64| 3e-9 * x.powi(3)).collect();
        assert!((loglog_slope(&s, &t).unwrap() - 3.0).abs() < 1e-12);
        assert!(loglog_slope(&s, &[1.0, 0.0, 1.0, 1.0]).is_err());
        assert!(loglog_slope(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn harness_warms_up_and_censors() {
        let mut calls = Vec::new();
        let mut slow = Vec::new();
        let mut methods: Vec<TimedMethod> = vec![
            (
                "fast".into(),
                Box::new(|n| {
                    calls.push(n);
                    Ok(Timed {
                        preprocess_seconds: n as f64 * 1e-3,
                        interpolate_seconds: 0.0,
                    })
                }),
            ),
            (
                "slow".into(),
                Box::new(|n| {
                    slow.push(n);
                    Ok(Timed {
                        preprocess_seconds: n as f64,
                        interpolate_seconds: 0.0,
                    })
                }),
            ),
        ];
        let recs = timing_harness(&[1, 2, 5], &mut methods, Duration::from_secs_f64(1.5)).unwrap();
        drop(methods);
        assert_eq!(calls, vec![1, 1, 2, 5]);
        assert_eq!(slow, vec![1, 1, 2]);
        let censored: Vec<(String, usize)> = recs.iter().filter(|r| r.censored).map(|r| (r.method.clone(), r.size)).collect();
        assert_eq!(censored, vec![("slow".into(), 2), ("slow".into(), 5)]);
        assert!(timing_harness(&[2, 2], &mut [], Duration::from_secs(1)).is_err());
    }

    #[test]
    fn timing_csv_has_header() {
        let rec = TimingRecord {
            method: "FK".into(),
            size: 10,
            preprocess_seconds: 0.5,
            interpolate_seconds: 0.25,
            censored: false,
        };
        let mut buf = Vec::new();
        write_timing_csv(&mut buf, &[rec]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "method,size,preprocess_seconds,interpolate_seconds,censored\nFK,10,0.5,0.25,false\n");
    }
}

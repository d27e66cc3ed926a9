//! Maximum-likelihood fitting and a replicated fitting experiment around
//! the symmetry point.
//!
//! The optimizer is a hand-rolled Nelder-Mead simplex over an unconstrained
//! chart: location as-is, the scale root through its matrix logarithm (so
//! every chart point maps to a positive definite root), and the skewness
//! vector as-is. Derivative-free search is deliberate: away from delta = 0
//! the skewing function is not assumed differentiable in delta, so gradient
//! methods would demand more than the model guarantees.

use nalgebra::{DMatrix, DVector};
use rand::RngExt;

use crate::density::{SkewModel, ThetaPoint};
use crate::error::{Error, Result};
use crate::exec;
use crate::fisher::vech_pairs;

/// Simplex spread targets: the value spread is relative to the objective
/// scale, the vertex spread is absolute in chart coordinates.
const FTOL: f64 = 1e-12;
const XTOL: f64 = 1e-8;
/// Iteration budget per start, scaled by the chart dimension.
const MAX_ITERS_PER_DIM: usize = 600;
/// Initial simplex edge in chart coordinates.
const SIMPLEX_STEP: f64 = 0.25;
/// Skewness starting points probed beyond the caller's init. The
/// likelihood near symmetry can be bimodal in delta, and a single start
/// systematically lands in one mode.
const DELTA_RESTARTS: [f64; 2] = [0.5, -0.5];
/// Step for the curvature proxy and the objective parallelism cutoff.
const HESSIAN_STEP: f64 = 1e-4;
const PAR_OBJECTIVE_MIN_N: usize = 4096;

/// Outcome of one maximum-likelihood fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub theta_hat: ThetaPoint,
    /// Total log-likelihood at the fit.
    pub loglik: f64,
    /// Simplex iterations summed over all starts.
    pub iterations: usize,
    pub converged: bool,
    /// Curvature-based scale per chart coordinate (location, scale-root
    /// log-spectrum, skewness), from the observed information. Absent when
    /// that matrix is not positive definite, as happens at a singular fit.
    pub stderr_proxy: Option<Vec<f64>>,
}

/// Replicated fits to fresh samples drawn at a symmetric truth.
#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub replicates: usize,
    pub n_per_replicate: usize,
    /// Skewness estimate per replicate, NaN where the fit errored.
    pub delta_hats: Vec<f64>,
    /// Per-replicate convergence flags; errors count as unconverged.
    pub converged: Vec<bool>,
    /// Fraction of finite estimates that came out negative.
    pub sign_split: f64,
    /// (skewness^2 + 1) / kurtosis of the standardized estimates. The
    /// uniform reference value is 5/9; bimodal samples sit above it.
    pub bimodality_coefficient: f64,
}

/// The unconstrained chart (mu, vech log Sigma_half, delta).
struct Chart {
    k: usize,
}

impl Chart {
    fn dim(&self) -> usize {
        self.k * (self.k + 5) / 2
    }

    fn scale_entries(&self) -> usize {
        self.k * (self.k + 1) / 2
    }

    fn pack(&self, theta: &ThetaPoint) -> Result<Vec<f64>> {
        let k = self.k;
        let mut params = Vec::with_capacity(self.dim());
        params.extend(theta.mu().iter());
        let log_root = logm_spd(theta.sigma_half())?;
        for (i, j) in vech_pairs(k) {
            params.push(log_root[(i, j)]);
        }
        params.extend(theta.delta().iter());
        Ok(params)
    }

    /// None when the chart point exponentiates out of range.
    fn unpack(&self, params: &[f64]) -> Option<ThetaPoint> {
        let k = self.k;
        debug_assert_eq!(params.len(), self.dim());
        let mu = DVector::from_row_slice(&params[..k]);
        let mut log_root = DMatrix::zeros(k, k);
        for (idx, (i, j)) in vech_pairs(k).into_iter().enumerate() {
            let v = params[k + idx];
            log_root[(i, j)] = v;
            log_root[(j, i)] = v;
        }
        let sigma_half = expm_sym(&log_root);
        let delta = DVector::from_row_slice(&params[k + self.scale_entries()..]);
        ThetaPoint::new(mu, sigma_half, delta).ok()
    }
}

/// exp of a symmetric matrix through its spectrum.
fn expm_sym(a: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = a.clone().symmetric_eigen();
    let mut scaled = eig.eigenvectors.clone();
    for j in 0..a.ncols() {
        let e = eig.eigenvalues[j].exp();
        for i in 0..a.nrows() {
            scaled[(i, j)] *= e;
        }
    }
    scaled * eig.eigenvectors.transpose()
}

/// log of a symmetric positive definite matrix through its spectrum.
fn logm_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = m.clone().symmetric_eigen();
    let mut scaled = eig.eigenvectors.clone();
    for j in 0..m.ncols() {
        let v = eig.eigenvalues[j];
        if v <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "sigma_half",
                reason: format!("matrix log needs positive eigenvalues, got {v}"),
            });
        }
        let e = v.ln();
        for i in 0..m.nrows() {
            scaled[(i, j)] *= e;
        }
    }
    Ok(scaled * eig.eigenvectors.transpose())
}

/// Mean negative log-likelihood on the chart. Infinite outside the
/// admissible region, which the simplex treats as a always-worst value.
struct Objective<'a> {
    model: &'a SkewModel,
    data: &'a [Vec<f64>],
    chart: Chart,
}

impl Objective<'_> {
    fn eval(&self, params: &[f64]) -> f64 {
        if params.iter().any(|p| !p.is_finite()) {
            return f64::INFINITY;
        }
        let Some(theta) = self.chart.unpack(params) else {
            return f64::INFINITY;
        };
        let Ok(frozen) = self.model.at(&theta) else {
            return f64::INFINITY;
        };
        let n = self.data.len();
        let total = if n >= PAR_OBJECTIVE_MIN_N {
            let values = exec::map_indexed(n, |i| frozen.log_pdf(&self.data[i]));
            exec::sum_pairwise(&values)
        } else {
            exec::sum_pairwise_of(n, &|i| frozen.log_pdf(&self.data[i]))
        };
        let mean = -total / n as f64;
        if mean.is_nan() {
            f64::INFINITY
        } else {
            mean
        }
    }
}

struct NmOutcome {
    x: Vec<f64>,
    f: f64,
    iterations: usize,
    converged: bool,
}

/// Nelder-Mead with the standard coefficient set (reflect 1, expand 2,
/// contract 1/2, shrink 1/2) and deterministic total-order sorting, so a
/// fit is a pure function of its inputs.
fn nelder_mead(obj: &Objective, x0: &[f64], steps: &[f64], max_iters: usize) -> NmOutcome {
    let d = x0.len();
    let mut points: Vec<Vec<f64>> = Vec::with_capacity(d + 1);
    points.push(x0.to_vec());
    for i in 0..d {
        let mut p = x0.to_vec();
        p[i] += steps[i];
        points.push(p);
    }
    let mut values: Vec<f64> = points.iter().map(|p| obj.eval(p)).collect();

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let best = order[0];
        let worst = order[d];
        let second_worst = order[d - 1];

        let f_spread = values[worst] - values[best];
        let x_spread = points
            .iter()
            .flat_map(|p| p.iter().zip(&points[best]).map(|(a, b)| (a - b).abs()))
            .fold(0.0f64, f64::max);
        if f_spread <= FTOL * (1.0 + values[best].abs()) && x_spread <= XTOL {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; d];
        for &idx in &order[..d] {
            for (c, p) in centroid.iter_mut().zip(&points[idx]) {
                *c += p / d as f64;
            }
        }

        let at = |t: f64, far: &[f64]| -> Vec<f64> {
            centroid.iter().zip(far).map(|(c, w)| c + t * (c - w)).collect()
        };
        let reflected = at(1.0, &points[worst]);
        let f_reflected = obj.eval(&reflected);

        if f_reflected < values[best] {
            let expanded = at(2.0, &points[worst]);
            let f_expanded = obj.eval(&expanded);
            if f_expanded < f_reflected {
                points[worst] = expanded;
                values[worst] = f_expanded;
            } else {
                points[worst] = reflected;
                values[worst] = f_reflected;
            }
            continue;
        }
        if f_reflected < values[second_worst] {
            points[worst] = reflected;
            values[worst] = f_reflected;
            continue;
        }
        let contracted = if f_reflected < values[worst] {
            at(0.5, &points[worst])
        } else {
            at(-0.5, &points[worst])
        };
        let f_contracted = obj.eval(&contracted);
        if f_contracted < values[worst].min(f_reflected) {
            points[worst] = contracted;
            values[worst] = f_contracted;
            continue;
        }
        for idx in 0..=d {
            if idx == best {
                continue;
            }
            let shrunk: Vec<f64> = points[idx]
                .iter()
                .zip(&points[best])
                .map(|(p, b)| b + 0.5 * (p - b))
                .collect();
            values[idx] = obj.eval(&shrunk);
            points[idx] = shrunk;
        }
    }

    let mut best = 0;
    for i in 1..=d {
        if values[i].total_cmp(&values[best]).is_lt() {
            best = i;
        }
    }
    NmOutcome {
        x: points[best].clone(),
        f: values[best],
        iterations,
        converged,
    }
}

fn column_median(data: &[Vec<f64>], j: usize) -> f64 {
    let mut col: Vec<f64> = data.iter().map(|row| row[j]).collect();
    col.sort_by(f64::total_cmp);
    let n = col.len();
    if n % 2 == 1 {
        col[n / 2]
    } else {
        0.5 * (col[n / 2 - 1] + col[n / 2])
    }
}

fn sample_covariance(data: &[Vec<f64>], k: usize) -> DMatrix<f64> {
    let n = data.len();
    let mut mean = vec![0.0; k];
    for row in data {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x / n as f64;
        }
    }
    let mut cov = DMatrix::zeros(k, k);
    for row in data {
        for i in 0..k {
            for j in 0..k {
                cov[(i, j)] += (row[i] - mean[i]) * (row[j] - mean[j]) / (n as f64 - 1.0);
            }
        }
    }
    cov
}

/// Maximize the sample log-likelihood of `model` over (mu, Sigma_half,
/// delta) by simplex search, starting from `init` (or a median/covariance
/// start) plus skewness restarts at +-1/2.
pub fn fit(model: &SkewModel, data: &[Vec<f64>], init: Option<&ThetaPoint>) -> Result<FitResult> {
    let k = model.dim();
    let chart = Chart { k };
    let needed = 10 * chart.dim();
    if data.len() < needed {
        return Err(Error::InsufficientData { needed, got: data.len() });
    }
    for row in data {
        if row.len() != k {
            return Err(Error::DimensionMismatch { expected: k, got: row.len() });
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "data",
                reason: "observations must be finite".into(),
            });
        }
    }

    let cov = sample_covariance(data, k);
    // Repeated-value columns have variance at rounding-noise level, which
    // is nonzero, so the spread is compared against the data magnitude.
    for j in 0..k {
        let mean = data.iter().map(|row| row[j]).sum::<f64>() / data.len() as f64;
        if cov[(j, j)].sqrt() <= 1e-12 * mean.abs() + 1e-300 {
            return Err(Error::DegenerateData(format!(
                "coordinate {j} has zero variance"
            )));
        }
    }
    let cov_eig = cov.clone().symmetric_eigen();
    let max_eig = cov_eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(*v));
    let min_eig = cov_eig.eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    if !(min_eig > 1e-12 * max_eig) {
        return Err(Error::DegenerateData(format!(
            "sample covariance is rank deficient (smallest eigenvalue {min_eig:.3e})"
        )));
    }

    let x0 = match init {
        Some(theta) => {
            if theta.dim() != k {
                return Err(Error::DimensionMismatch { expected: k, got: theta.dim() });
            }
            chart.pack(theta)?
        }
        None => {
            let mut root_scaled = cov_eig.eigenvectors.clone();
            for j in 0..k {
                let e = cov_eig.eigenvalues[j].sqrt();
                for i in 0..k {
                    root_scaled[(i, j)] *= e;
                }
            }
            let root = root_scaled * cov_eig.eigenvectors.transpose();
            let start = ThetaPoint::new(
                DVector::from_iterator(k, (0..k).map(|j| column_median(data, j))),
                root,
                DVector::zeros(k),
            )?;
            chart.pack(&start)?
        }
    };

    // Steps depend on the data only through its spread, so shifted data
    // walk a translated simplex and equivariance holds to optimizer
    // tolerance.
    let mut steps = vec![SIMPLEX_STEP; chart.dim()];
    for (j, s) in steps.iter_mut().take(k).enumerate() {
        *s = SIMPLEX_STEP * (1.0 + cov[(j, j)].sqrt());
    }

    let mut starts = vec![x0.clone()];
    for delta in DELTA_RESTARTS {
        let mut start = x0.clone();
        for s in start.iter_mut().skip(k + chart.scale_entries()) {
            *s = delta;
        }
        starts.push(start);
    }

    let obj = Objective { model, data, chart };
    let max_iters = MAX_ITERS_PER_DIM * obj.chart.dim();
    let mut iterations = 0;
    let mut winner: Option<NmOutcome> = None;
    for start in &starts {
        let outcome = nelder_mead(&obj, start, &steps, max_iters);
        iterations += outcome.iterations;
        let better = match &winner {
            None => true,
            Some(w) => outcome.f.total_cmp(&w.f).is_lt(),
        };
        if better {
            winner = Some(outcome);
        }
    }
    let winner = winner.expect("at least one start");
    let theta_hat = obj
        .chart
        .unpack(&winner.x)
        .ok_or_else(|| Error::Contract("optimizer returned an inadmissible point".into()))?;
    let loglik = -winner.f * data.len() as f64;
    let stderr_proxy = curvature_proxy(&obj, &winner.x, data.len());

    Ok(FitResult {
        theta_hat,
        loglik,
        iterations,
        converged: winner.converged,
        stderr_proxy,
    })
}

/// Inverse-curvature scales from a finite-difference observed information
/// in chart coordinates. None when that matrix is not positive definite.
fn curvature_proxy(obj: &Objective, x: &[f64], n: usize) -> Option<Vec<f64>> {
    let d = x.len();
    let f = |p: &[f64]| obj.eval(p) * n as f64;
    let h: Vec<f64> = x.iter().map(|v| HESSIAN_STEP * (1.0 + v.abs())).collect();
    let f0 = f(x);
    let mut hess = DMatrix::zeros(d, d);
    let mut shifted = x.to_vec();
    for i in 0..d {
        shifted.copy_from_slice(x);
        shifted[i] = x[i] + h[i];
        let fp = f(&shifted);
        shifted[i] = x[i] - h[i];
        let fm = f(&shifted);
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in (i + 1)..d {
            let mut corner = |si: f64, sj: f64| {
                shifted.copy_from_slice(x);
                shifted[i] = x[i] + si * h[i];
                shifted[j] = x[j] + sj * h[j];
                f(&shifted)
            };
            let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0)
                + corner(-1.0, -1.0))
                / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    if hess.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let inv = hess.cholesky()?.inverse();
    let mut out = Vec::with_capacity(d);
    for i in 0..d {
        let v = inv[(i, i)];
        if v <= 0.0 {
            return None;
        }
        out.push(v.sqrt());
    }
    Some(out)
}

/// Fit `replicates` fresh samples of size `n` drawn at the symmetric truth
/// `theta_true`, and summarize the skewness estimates. Univariate models
/// only: the summary statistics read a scalar estimate.
pub fn symmetry_experiment(
    model: &SkewModel,
    theta_true: &ThetaPoint,
    n: usize,
    replicates: usize,
    seed: u64,
) -> Result<ExperimentSummary> {
    if model.dim() != 1 {
        return Err(Error::Capability(format!(
            "the symmetry experiment summarizes a scalar skewness estimate; `{}` has dimension {}",
            model.tag(),
            model.dim()
        )));
    }
    if theta_true.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: theta_true.dim() });
    }
    if theta_true.delta().iter().any(|d| *d != 0.0) {
        return Err(Error::Contract(
            "the experiment probes the symmetry point; pass delta = 0".into(),
        ));
    }
    if replicates < 100 {
        return Err(Error::InsufficientData { needed: 100, got: replicates });
    }
    if !model.kernel().supports_sampling() {
        return Err(Error::Capability(format!(
            "kernel `{}` has no exact sampler",
            model.kernel().tag()
        )));
    }

    let frozen = model.at(theta_true)?;
    let fits: Vec<(f64, bool)> = exec::map_indexed(replicates, |r| {
        let rep_seed: u64 = exec::substream(seed, r as u64).random();
        let data = match frozen.sample_matrix(n, rep_seed) {
            Ok(d) => d,
            Err(_) => return (f64::NAN, false),
        };
        match fit(model, &data, None) {
            Ok(res) => (res.theta_hat.delta()[0], res.converged),
            Err(_) => (f64::NAN, false),
        }
    });

    let delta_hats: Vec<f64> = fits.iter().map(|(d, _)| *d).collect();
    let converged: Vec<bool> = fits.iter().map(|(_, c)| *c).collect();
    let finite: Vec<f64> = delta_hats.iter().copied().filter(|d| d.is_finite()).collect();
    let (sign_split, bimodality_coefficient) = summarize(&finite);

    Ok(ExperimentSummary {
        replicates,
        n_per_replicate: n,
        delta_hats,
        converged,
        sign_split,
        bimodality_coefficient,
    })
}

fn summarize(finite: &[f64]) -> (f64, f64) {
    if finite.len() < 2 {
        return (f64::NAN, f64::NAN);
    }
    let n = finite.len() as f64;
    let negative = finite.iter().filter(|d| **d < 0.0).count() as f64;
    let mean = finite.iter().sum::<f64>() / n;
    let var = finite.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd == 0.0 {
        return (negative / n, f64::NAN);
    }
    let m3 = finite.iter().map(|d| ((d - mean) / sd).powi(3)).sum::<f64>() / n;
    let m4 = finite.iter().map(|d| ((d - mean) / sd).powi(4)).sum::<f64>() / n;
    (negative / n, (m3 * m3 + 1.0) / m4)
}

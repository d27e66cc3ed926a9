//! Numerical integration over R^k.
//!
//! All schemes share two determinism rules: integrand evaluations may run
//! concurrently, but contributions are combined in a fixed order by pairwise
//! summation, so results are identical run to run regardless of thread count.
//!
//! Infinite domains are handled by the rational substitution z = t/(1 - t^2),
//! which maps (-1, 1) onto the real line and turns polynomial tail decay into
//! a bounded transformed integrand.

mod rules;

use crate::error::{Error, Result};
use crate::exec;

pub use rules::gauss_legendre;

/// Tail behavior of an integrand, used to pick Monte Carlo envelopes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decay {
    GaussianLike,
    ExponentialLike,
    /// Polynomial tails with the given degrees-of-freedom parameter.
    HeavyTail(f64),
}

/// A function R^k -> R^d to integrate entrywise over R^k.
///
/// `eval` writes the `out_dim` entries for one point into the provided
/// buffer. Evaluations must be pure: they can run on any thread in any order.
pub struct Integrand<'a> {
    pub dim: usize,
    pub out_dim: usize,
    pub decay: Decay,
    pub eval: &'a (dyn Fn(&[f64], &mut [f64]) + Sync),
}

impl<'a> Integrand<'a> {
    pub fn new(
        dim: usize,
        out_dim: usize,
        decay: Decay,
        eval: &'a (dyn Fn(&[f64], &mut [f64]) + Sync),
    ) -> Self {
        Integrand { dim, out_dim, decay, eval }
    }
}

/// Integration scheme.
#[derive(Debug, Clone, PartialEq)]
pub enum Scheme {
    /// Adaptive Gauss-Kronrod on the transformed line. One-dimensional only.
    Adaptive1d,
    /// Tensor-product Gauss-Legendre with `level` nodes per axis (k <= 3).
    TensorProduct { level: usize },
    /// Polar/spherical factorization: trapezoid (and Gauss-Legendre for the
    /// polar angle at k = 3) over directions, adaptive in the radius.
    /// Dimensions 2 and 3. Preferred for elliptically decaying integrands,
    /// whose tails are not product-shaped.
    RadialAngular { angular: usize },
    /// Importance-sampled Monte Carlo with an envelope chosen from the
    /// integrand's decay hint. Any dimension; the fallback above k = 3.
    MonteCarlo { n: usize, seed: u64 },
}

/// Result of [`integrate`]: per-entry values and error estimates.
#[derive(Debug, Clone)]
pub struct QuadResult {
    pub value: Vec<f64>,
    pub err: Vec<f64>,
    pub nodes: usize,
    pub scheme: &'static str,
}

impl QuadResult {
    /// Convenience accessor for scalar integrands.
    pub fn scalar(&self) -> f64 {
        self.value[0]
    }
}

/// Verdict of [`probe_divergence`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Convergence {
    Convergent(f64),
    Divergent,
}

impl Convergence {
    pub fn is_convergent(&self) -> bool {
        matches!(self, Convergence::Convergent(_))
    }
}

/// Local error target for adaptive subdivision, applied relative to the
/// running whole-domain magnitude with an absolute floor at 1. Fixed rather
/// than tunable: run-to-run determinism matters more than dialing precision.
pub const ADAPTIVE_LOCAL_TOL: f64 = 1e-12;

/// Cap on rule applications per adaptive integration.
const ADAPTIVE_BUDGET: usize = 30_000;

/// Radii at which [`probe_divergence`] takes partial integrals. Doubles from
/// well inside the bulk to far enough out that exponentially and fast
/// polynomially decaying tails settle, while 1/R-mass tails still show
/// moving increments at the end of the schedule.
pub const DEFAULT_ENLARGEMENT: [f64; 15] = [
    6.25, 12.5, 25.0, 50.0, 100.0, 200.0, 400.0, 800.0, 1600.0, 3200.0, 6400.0, 12800.0, 25600.0,
    51200.0, 102400.0,
];

/// Relative-increment threshold of the probe's Cauchy criterion.
const PROBE_REL_INCREMENT: f64 = 1e-6;

/// Increments are only judged once the radius exceeds this.
const PROBE_MIN_RADIUS: f64 = 50.0;

pub fn z_of_t(t: f64) -> f64 {
    t / (1.0 - t * t)
}

pub fn t_of_z(z: f64) -> f64 {
    if z == 0.0 {
        0.0
    } else if z.is_infinite() {
        z.signum()
    } else {
        // root of z t^2 + t - z with |t| < 1, written to avoid cancellation
        2.0 * z / (1.0 + (1.0 + 4.0 * z * z).sqrt())
    }
}

fn map_weight(t: f64) -> f64 {
    let s = 1.0 - t * t;
    (1.0 + t * t) / (s * s)
}

/// Integrate `f` over R^k with the given scheme.
pub fn integrate(f: &Integrand, scheme: &Scheme) -> Result<QuadResult> {
    if f.dim == 0 {
        return Err(Error::InvalidParameter { name: "dim", reason: "must be at least 1".into() });
    }
    match scheme {
        Scheme::Adaptive1d => {
            if f.dim != 1 {
                return Err(Error::Contract(format!(
                    "adaptive_1d integrates one dimension, got {}",
                    f.dim
                )));
            }
            integrate_range_1d(f, f64::NEG_INFINITY, f64::INFINITY)
        }
        Scheme::TensorProduct { level } => tensor_product(f, *level),
        Scheme::RadialAngular { angular } => radial_angular(f, *angular, f64::INFINITY, true),
        Scheme::MonteCarlo { n, seed } => monte_carlo(f, *n, *seed),
    }
}

/// One-dimensional adaptive integration over (lo, hi); either endpoint may
/// be infinite. This is the engine behind `Scheme::Adaptive1d` and is also
/// used directly for half-line constraints.
pub fn integrate_range_1d(f: &Integrand, lo: f64, hi: f64) -> Result<QuadResult> {
    if f.dim != 1 {
        return Err(Error::Contract(format!("range integration is one-dimensional, got dim {}", f.dim)));
    }
    let (t_lo, t_hi) = (t_of_z(lo), t_of_z(hi));
    let eval = f.eval;
    let out_dim = f.out_dim;
    let g = move |t: f64, out: &mut [f64]| {
        let z = z_of_t(t);
        eval(&[z], out);
        let w = map_weight(t);
        for v in out.iter_mut() {
            *v *= w;
        }
    };
    let (value, err, nodes, converged) =
        adaptive_t(&g, t_lo, t_hi, out_dim, ADAPTIVE_LOCAL_TOL, ADAPTIVE_BUDGET);
    let worst = err.iter().cloned().fold(0.0, f64::max);
    if !converged {
        return Err(Error::QuadratureBudget { best: value[0], err: worst });
    }
    Ok(QuadResult { value, err, nodes, scheme: "adaptive_1d" })
}

/// Adaptive Gauss-Kronrod in the transformed coordinate. Processes intervals
/// in waves (all rule applications of a wave may run concurrently), splits
/// any interval whose |K15 - G7| exceeds `tol`, and finally combines the
/// accepted intervals in positional order by pairwise summation.
fn adaptive_t(
    g: &(dyn Fn(f64, &mut [f64]) + Sync),
    t_lo: f64,
    t_hi: f64,
    out_dim: usize,
    tol: f64,
    budget: usize,
) -> (Vec<f64>, Vec<f64>, usize, bool) {
    struct Piece {
        lo: f64,
        val: Vec<f64>,
        dev: Vec<f64>,
    }

    let nodes_t = rules::kronrod_nodes();
    let init = 8usize;
    let mut wave: Vec<(f64, f64)> = (0..init)
        .map(|i| {
            let a = t_lo + (t_hi - t_lo) * i as f64 / init as f64;
            let b = t_lo + (t_hi - t_lo) * (i + 1) as f64 / init as f64;
            (a, b)
        })
        .collect();
    let mut accepted: Vec<Piece> = Vec::new();
    let mut acc_total = vec![0.0; out_dim];
    let mut applications = 0usize;
    let mut exhausted = false;

    while !wave.is_empty() {
        if applications + wave.len() > budget {
            exhausted = true;
        }
        // Evaluate every node of every interval in this wave concurrently.
        let evals: Vec<Vec<f64>> = exec::map_indexed(wave.len() * 15, |idx| {
            let (a, b) = wave[idx / 15];
            let mid = 0.5 * (a + b);
            let half = 0.5 * (b - a);
            let t = mid + half * nodes_t[idx % 15];
            let mut out = vec![0.0; out_dim];
            g(t, &mut out);
            out
        });
        applications += wave.len();

        let combined: Vec<(Vec<f64>, Vec<f64>, f64)> = wave
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| {
                let mut val = vec![0.0; out_dim];
                let mut dev = vec![0.0; out_dim];
                let worst = rules::qk15_combine(
                    &evals[i * 15..(i + 1) * 15],
                    0.5 * (b - a),
                    &mut val,
                    &mut dev,
                );
                (val, dev, worst)
            })
            .collect();

        // The tolerance acts relative to the current whole-domain magnitude,
        // floored at 1 so small integrals keep the absolute interpretation.
        // Non-finite wave estimates are excluded so overflowing integrands
        // still exhaust the budget instead of being accepted wholesale.
        let mut scale = 1.0f64;
        for e in 0..out_dim {
            let wave_sum: f64 = combined.iter().map(|c| c.0[e]).sum();
            let total = acc_total[e] + wave_sum;
            if total.is_finite() {
                scale = scale.max(total.abs());
            }
        }
        let threshold = tol * scale;

        let mut next = Vec::new();
        for ((val, dev, worst), &(a, b)) in combined.into_iter().zip(wave.iter()) {
            let mid = 0.5 * (a + b);
            let splittable = mid > a && mid < b;
            if worst <= threshold || exhausted || !splittable {
                for e in 0..out_dim {
                    acc_total[e] += val[e];
                }
                accepted.push(Piece { lo: a, val, dev });
            } else {
                next.push((a, mid));
                next.push((mid, b));
            }
        }
        if exhausted {
            // flush whatever remains at its current estimate
            wave.clear();
        } else {
            wave = next;
        }
    }

    accepted.sort_by(|p, q| p.lo.total_cmp(&q.lo));
    let mut value = vec![0.0; out_dim];
    let mut err = vec![0.0; out_dim];
    for e in 0..out_dim {
        value[e] = exec::sum_pairwise_of(accepted.len(), &|i| accepted[i].val[e]);
        err[e] = exec::sum_pairwise_of(accepted.len(), &|i| accepted[i].dev[e]);
        // floor at the rounding level of the accumulated magnitude
        let mag: f64 = exec::sum_pairwise_of(accepted.len(), &|i| accepted[i].val[e].abs());
        err[e] = err[e].max(f64::EPSILON * mag);
    }
    (value, err, applications * 15, !exhausted)
}

/// Tensor-product Gauss-Legendre over R^k, k <= 3. The error estimate is the
/// difference against a coarser level.
fn tensor_product(f: &Integrand, level: usize) -> Result<QuadResult> {
    if f.dim > 3 {
        return Err(Error::Capability(format!(
            "tensor_product supports dimensions 1..=3, got {}",
            f.dim
        )));
    }
    if level < 8 {
        return Err(Error::InvalidParameter { name: "level", reason: "needs at least 8 nodes per axis".into() });
    }
    let coarse = level - (level / 5).max(4);
    let (v_fine, n_fine) = tensor_pass(f, level);
    let (v_coarse, n_coarse) = tensor_pass(f, coarse);
    let err: Vec<f64> = v_fine
        .iter()
        .zip(&v_coarse)
        .map(|(a, b)| (a - b).abs().max(f64::EPSILON * a.abs()))
        .collect();
    Ok(QuadResult { value: v_fine, err, nodes: n_fine + n_coarse, scheme: "tensor_product" })
}

fn tensor_pass(f: &Integrand, level: usize) -> (Vec<f64>, usize) {
    let (t_nodes, t_weights) = rules::gauss_legendre(level);
    let k = f.dim;
    let total = level.pow(k as u32);
    let eval = f.eval;
    let out_dim = f.out_dim;
    let contribs: Vec<Vec<f64>> = exec::map_indexed(total, |flat| {
        let mut z = [0.0; 3];
        let mut w = 1.0;
        let mut rest = flat;
        for axis in 0..k {
            let j = rest % level;
            rest /= level;
            let t = t_nodes[j];
            z[axis] = z_of_t(t);
            w *= t_weights[j] * map_weight(t);
        }
        let mut out = vec![0.0; out_dim];
        eval(&z[..k], &mut out);
        for v in out.iter_mut() {
            *v *= w;
        }
        out
    });
    let mut value = vec![0.0; out_dim];
    for e in 0..out_dim {
        value[e] = exec::sum_pairwise_of(total, &|i| contribs[i][e]);
    }
    (value, total)
}

/// Direction set with weights for the angular factor of [`radial_angular`].
fn direction_table(dim: usize, angular: usize) -> Result<Vec<(Vec<f64>, f64)>> {
    match dim {
        2 => {
            let n = angular.max(8);
            Ok((0..n)
                .map(|j| {
                    let th = 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / n as f64;
                    (vec![th.cos(), th.sin()], 2.0 * std::f64::consts::PI / n as f64)
                })
                .collect())
        }
        3 => {
            let n_az = angular.max(8);
            let n_pol = (angular / 2).max(4);
            let (u_nodes, u_weights) = rules::gauss_legendre(n_pol);
            let mut dirs = Vec::with_capacity(n_az * n_pol);
            for (u, wu) in u_nodes.iter().zip(&u_weights) {
                let s = (1.0 - u * u).sqrt();
                for j in 0..n_az {
                    let ph = 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / n_az as f64;
                    dirs.push((
                        vec![s * ph.cos(), s * ph.sin(), *u],
                        wu * 2.0 * std::f64::consts::PI / n_az as f64,
                    ));
                }
            }
            Ok(dirs)
        }
        d => Err(Error::Capability(format!("radial_angular supports dimensions 2 and 3, got {d}"))),
    }
}

/// Radial-angular integration over the ball of radius `r_max` (pass infinity
/// for all of R^k). `strict` demands the adaptive radial pass converge.
fn radial_angular(f: &Integrand, angular: usize, r_max: f64, strict: bool) -> Result<QuadResult> {
    let dirs = direction_table(f.dim, angular)?;
    let eval = f.eval;
    let out_dim = f.out_dim;
    let k = f.dim;
    let shell = move |r: f64, out: &mut [f64]| {
        let mut point = vec![0.0; k];
        let mut buf = vec![0.0; out.len()];
        for v in out.iter_mut() {
            *v = 0.0;
        }
        for (dir, w) in &dirs {
            for (p, d) in point.iter_mut().zip(dir) {
                *p = r * d;
            }
            eval(&point, &mut buf);
            let scale = w * r.powi(k as i32 - 1);
            for (o, b) in out.iter_mut().zip(&buf) {
                *o += scale * b;
            }
        }
    };
    let g = move |t: f64, out: &mut [f64]| {
        let r = z_of_t(t);
        shell(r, out);
        let w = map_weight(t);
        for v in out.iter_mut() {
            *v *= w;
        }
    };
    let (value, err, nodes, converged) =
        adaptive_t(&g, 0.0, t_of_z(r_max), out_dim, ADAPTIVE_LOCAL_TOL, ADAPTIVE_BUDGET);
    if strict && !converged {
        return Err(Error::QuadratureBudget { best: value[0], err: err.iter().cloned().fold(0.0, f64::max) });
    }
    Ok(QuadResult { value, err, nodes, scheme: "radial_angular" })
}

/// Importance-sampling envelope, one per decay class.
enum Envelope {
    Gauss { sd: f64 },
    Laplace { b: f64 },
    StudentElliptical { nu: f64, scale: f64 },
}

impl Envelope {
    fn for_decay(decay: Decay) -> Envelope {
        match decay {
            Decay::GaussianLike => Envelope::Gauss { sd: 1.6 },
            Decay::ExponentialLike => Envelope::Laplace { b: 1.25 },
            Decay::HeavyTail(nu) => Envelope::StudentElliptical { nu, scale: 1.5 },
        }
    }

    fn sample(&self, rng: &mut rand_chacha::ChaCha8Rng, dim: usize, z: &mut [f64]) {
        use rand::RngExt;
        use rand_distr::StandardNormal;
        match self {
            Envelope::Gauss { sd } => {
                for zi in z.iter_mut().take(dim) {
                    let n: f64 = rng.sample(StandardNormal);
                    *zi = sd * n;
                }
            }
            Envelope::Laplace { b } => {
                for zi in z.iter_mut().take(dim) {
                    let e: f64 = rng.sample(rand_distr::Exp1);
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    *zi = b * e * sign;
                }
            }
            Envelope::StudentElliptical { nu, scale } => {
                let chi = rand_distr::Gamma::new(nu / 2.0, 2.0).expect("nu > 0");
                let w: f64 = rng.sample(chi);
                let denom = (w / nu).sqrt();
                for zi in z.iter_mut().take(dim) {
                    let n: f64 = rng.sample(StandardNormal);
                    *zi = scale * n / denom;
                }
            }
        }
    }

    fn log_density(&self, z: &[f64]) -> f64 {
        let k = z.len() as f64;
        match self {
            Envelope::Gauss { sd } => {
                let q: f64 = z.iter().map(|zi| (zi / sd) * (zi / sd)).sum();
                -0.5 * q - k * (sd * (2.0 * std::f64::consts::PI).sqrt()).ln()
            }
            Envelope::Laplace { b } => {
                let q: f64 = z.iter().map(|zi| zi.abs()).sum();
                -q / b - k * (2.0 * b).ln()
            }
            Envelope::StudentElliptical { nu, scale } => {
                let q: f64 = z.iter().map(|zi| (zi / scale) * (zi / scale)).sum();
                let c = libm::lgamma((nu + k) / 2.0)
                    - libm::lgamma(nu / 2.0)
                    - 0.5 * k * (nu * std::f64::consts::PI).ln()
                    - k * scale.ln();
                c - 0.5 * (nu + k) * (1.0 + q / nu).ln()
            }
        }
    }
}

/// Importance-sampled Monte Carlo. Sample i of the stream is generated from
/// its own counter-derived generator, so results are bit-identical for a
/// given seed no matter how the work is chunked across threads.
fn monte_carlo(f: &Integrand, n: usize, seed: u64) -> Result<QuadResult> {
    if n < 2 {
        return Err(Error::InvalidParameter { name: "n", reason: "needs at least 2 samples".into() });
    }
    let envelope = Envelope::for_decay(f.decay);
    let eval = f.eval;
    let dim = f.dim;
    let out_dim = f.out_dim;
    let draws: Vec<Vec<f64>> = exec::map_indexed(n, |i| {
        let mut rng = exec::substream(seed, i as u64);
        let mut z = vec![0.0; dim];
        envelope.sample(&mut rng, dim, &mut z);
        let mut out = vec![0.0; out_dim];
        eval(&z, &mut out);
        let inv_env = (-envelope.log_density(&z)).exp();
        for v in out.iter_mut() {
            *v *= inv_env;
        }
        out
    });
    let nf = n as f64;
    let mut value = vec![0.0; out_dim];
    let mut err = vec![0.0; out_dim];
    for e in 0..out_dim {
        let mean = exec::sum_pairwise_of(n, &|i| draws[i][e]) / nf;
        let var = exec::sum_pairwise_of(n, &|i| {
            let d = draws[i][e] - mean;
            d * d
        }) / (nf * (nf - 1.0));
        value[e] = mean;
        err[e] = var.sqrt().max(f64::EPSILON * mean.abs());
    }
    Ok(QuadResult { value, err, nodes: n, scheme: "monte_carlo" })
}

/// Decide whether a nonnegative integrand has a finite integral over R^k by
/// integrating over growing balls.
///
/// Reports `Divergent` as soon as a partial integral is non-finite, and
/// `Convergent` once two consecutive enlargements beyond radius 50 each move
/// the total by a relative increment below 1e-6. If the schedule ends with
/// the tail mass still moving, the verdict is `Divergent`: integrals whose
/// tails cannot be resolved at desk scale are treated as divergent on
/// purpose, trading a conservative verdict for run-to-run determinism.
pub fn probe_divergence(f: &Integrand, schedule: Option<&[f64]>) -> Result<Convergence> {
    if f.out_dim != 1 {
        return Err(Error::Contract("probe_divergence takes a scalar integrand".into()));
    }
    let radii = schedule.unwrap_or(&DEFAULT_ENLARGEMENT);
    if radii.len() < 3 {
        return Err(Error::InvalidParameter { name: "schedule", reason: "needs at least 3 radii".into() });
    }
    let mut prev_value = 0.0;
    let mut small_increments = 0u32;
    for (step, &radius) in radii.iter().enumerate() {
        let partial = partial_ball_integral(f, radius)?;
        if !partial.is_finite() {
            return Ok(Convergence::Divergent);
        }
        if step > 0 {
            let rel = (partial - prev_value).abs() / partial.abs().max(f64::MIN_POSITIVE);
            if radius > PROBE_MIN_RADIUS {
                if rel < PROBE_REL_INCREMENT {
                    small_increments += 1;
                    if small_increments >= 2 {
                        return Ok(Convergence::Convergent(partial));
                    }
                } else {
                    small_increments = 0;
                }
            }
        }
        prev_value = partial;
    }
    Ok(Convergence::Divergent)
}

/// Partial integral of `f` over the ball (or interval) of radius `r`, at
/// probe accuracy. Budget exhaustion falls back to the best estimate: the
/// partial only steers a verdict.
fn partial_ball_integral(f: &Integrand, r: f64) -> Result<f64> {
    if f.dim == 1 {
        let eval = f.eval;
        let g = move |t: f64, out: &mut [f64]| {
            let z = z_of_t(t);
            eval(&[z], out);
            out[0] *= map_weight(t);
        };
        let (value, _, _, _) = adaptive_t(&g, t_of_z(-r), t_of_z(r), 1, 1e-9, 4_000);
        Ok(value[0])
    } else {
        let res = radial_angular(f, 64, r, false)?;
        Ok(res.value[0])
    }
}

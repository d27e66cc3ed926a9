//! Centrally symmetric kernels f with f(-z) = f(z).
//!
//! Each kernel carries its standardization scale explicitly. Construction
//! solves the scale by root-finding on quadrature integrals, so idempotence
//! of re-standardization is a checked property rather than an assumption.
//!
//! Every evaluation path (log density, score) is arranged so that symmetry
//! holds bit-exactly in floating point: radii enter through sums of squares
//! or absolute values, and odd factors are applied through sign carriers.

use std::sync::Arc;

use rand::{Rng, RngExt};
use rand_distr::{Distribution, Exp1, Gamma, Open01, StandardNormal};

use crate::error::{Error, Result};
use crate::models::skewers::{SkewerShape, SkewingFunction};
use crate::models::standardize::solve_extra_scale;
use crate::models::Rule;
use crate::quad::{self, Decay, Integrand};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone)]
enum Imp {
    Gaussian { c: f64 },
    Student { nu: f64, c: f64 },
    ExponentialPower { alpha: f64, c: f64 },
    Laplace { c: f64 },
    Logistic { c: f64 },
    Product { factors: Vec<SymmetricKernel> },
    ExpOfNegPsi { a: f64, skewer: Arc<SkewingFunction>, c: f64, log_norm: f64 },
}

/// A standardized symmetric kernel on R^k.
#[derive(Debug, Clone)]
pub struct SymmetricKernel {
    dim: usize,
    rule: Rule,
    imp: Imp,
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::InvalidParameter {
            name: "dim".into(),
            reason: "dimension must be at least 1".into(),
        });
    }
    Ok(())
}

impl SymmetricKernel {
    /// Spherical Gaussian kernel on R^dim.
    pub fn gaussian(dim: usize, rule: Rule) -> Result<Self> {
        check_dim(dim)?;
        let base = Self { dim, rule, imp: Imp::Gaussian { c: 1.0 } };
        base.standardized(rule)
    }

    /// Elliptically contoured Student kernel with `nu` degrees of freedom.
    pub fn student(dim: usize, nu: f64, rule: Rule) -> Result<Self> {
        check_dim(dim)?;
        if !(nu.is_finite() && nu > 0.0) {
            return Err(Error::InvalidParameter {
                name: "nu".into(),
                reason: format!("student kernel needs nu > 0, got {nu}"),
            });
        }
        if rule == Rule::UnitVariance && nu <= 2.0 {
            return Err(Error::StandardizationInfeasible {
                rule: rule.name().into(),
                family: format!("student(nu={nu})"),
                reason: "second moment is infinite for nu <= 2".into(),
            });
        }
        let base = Self { dim, rule, imp: Imp::Student { nu, c: 1.0 } };
        base.standardized(rule)
    }

    /// Univariate exponential-power kernel, density proportional to
    /// exp(-|z/c|^alpha / alpha). Restricted to alpha >= 1 so the score
    /// stays locally square-integrable at the origin.
    pub fn exponential_power(alpha: f64, rule: Rule) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 1.0) {
            return Err(Error::InvalidParameter {
                name: "alpha".into(),
                reason: format!("exponential_power kernel needs alpha >= 1, got {alpha}"),
            });
        }
        let base = Self { dim: 1, rule, imp: Imp::ExponentialPower { alpha, c: 1.0 } };
        base.standardized(rule)
    }

    /// Univariate Laplace kernel.
    pub fn laplace(rule: Rule) -> Result<Self> {
        let base = Self { dim: 1, rule, imp: Imp::Laplace { c: 1.0 } };
        base.standardized(rule)
    }

    /// Univariate logistic kernel.
    pub fn logistic(rule: Rule) -> Result<Self> {
        let base = Self { dim: 1, rule, imp: Imp::Logistic { c: 1.0 } };
        base.standardized(rule)
    }

    /// Product of univariate kernels, one per coordinate. The factors must
    /// already be standardized under a common rule.
    pub fn product(factors: Vec<SymmetricKernel>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidParameter {
                name: "factors".into(),
                reason: "product kernel needs at least one factor".into(),
            });
        }
        let rule = factors[0].rule;
        for f in &factors {
            if f.dim != 1 {
                return Err(Error::InvalidParameter {
                    name: "factors".into(),
                    reason: "product factors must be univariate".into(),
                });
            }
            if f.rule != rule {
                return Err(Error::InvalidParameter {
                    name: "factors".into(),
                    reason: "product factors must share one standardization rule".into(),
                });
            }
        }
        let dim = factors.len();
        Ok(Self { dim, rule, imp: Imp::Product { factors } })
    }

    /// Univariate kernel with density proportional to exp(-a Psi(z/c)),
    /// where Psi is the potential of the given skewing function.
    ///
    /// Fails if exp(-a Psi) is not integrable over the line (for instance
    /// any bounded potential, such as the sine family's).
    pub fn exp_of_neg_psi(a: f64, skewer: Arc<SkewingFunction>, rule: Rule) -> Result<Self> {
        if !a.is_finite() {
            return Err(Error::InvalidParameter {
                name: "a".into(),
                reason: format!("exp_of_neg_psi needs finite a, got {a}"),
            });
        }
        if !skewer.admits_dim(1) {
            return Err(Error::Capability(format!(
                "exp_of_neg_psi kernels require a univariate potential; `{}` does not apply",
                skewer.name()
            )));
        }
        let mass_eval = |z: &[f64], out: &mut [f64]| {
            out[0] = (-a * skewer.big_psi(z).expect("dim checked")).exp();
        };
        let mass = Integrand::new(1, 1, Decay::ExponentialLike, &mass_eval);
        let verdict = quad::probe_divergence(&mass, None)?;
        if !verdict.is_convergent() {
            return Err(Error::Capability(format!(
                "exp(-a Psi) with a={a} over skewer `{}` has no finite normalizer",
                skewer.name()
            )));
        }
        if rule == Rule::UnitVariance {
            let second_eval = |z: &[f64], out: &mut [f64]| {
                out[0] = z[0] * z[0] * (-a * skewer.big_psi(z).expect("dim checked")).exp();
            };
            let second = Integrand::new(1, 1, Decay::ExponentialLike, &second_eval);
            if !quad::probe_divergence(&second, None)?.is_convergent() {
                return Err(Error::StandardizationInfeasible {
                    rule: rule.name().into(),
                    family: format!("exp_of_neg_psi(a={a}, psi={})", skewer.tag()),
                    reason: "second moment of exp(-a Psi) is infinite".into(),
                });
            }
        }
        let norm = quad::integrate(&mass, &quad::Scheme::Adaptive1d)?.scalar();
        let base = Self {
            dim: 1,
            rule,
            imp: Imp::ExpOfNegPsi { a, skewer, c: 1.0, log_norm: norm.ln() },
        };
        base.standardized(rule)
    }

    /// Re-solve the standardization scale under `rule`. Applying this to an
    /// already standardized kernel reproduces its scales to solver tolerance.
    pub fn standardized(&self, rule: Rule) -> Result<Self> {
        if let Imp::Product { factors } = &self.imp {
            let redone: Result<Vec<_>> = factors.iter().map(|f| f.standardized(rule)).collect();
            return Self::product(redone?);
        }
        if rule == Rule::UnitVariance {
            if let Imp::Student { nu, .. } = &self.imp {
                if *nu <= 2.0 {
                    return Err(Error::StandardizationInfeasible {
                        rule: rule.name().into(),
                        family: format!("student(nu={nu})"),
                        reason: "second moment is infinite for nu <= 2".into(),
                    });
                }
            }
        }
        let mld = |u: f64| self.marginal_log_density(u);
        let s = solve_extra_scale(&mld, rule, &self.tag())?;
        Ok(self.rescaled(s, rule))
    }

    /// Multiply the kernel scale by `s` (exact for the stored normalizers).
    fn rescaled(&self, s: f64, rule: Rule) -> Self {
        let imp = match &self.imp {
            Imp::Gaussian { c } => Imp::Gaussian { c: c * s },
            Imp::Student { nu, c } => Imp::Student { nu: *nu, c: c * s },
            Imp::ExponentialPower { alpha, c } => {
                Imp::ExponentialPower { alpha: *alpha, c: c * s }
            }
            Imp::Laplace { c } => Imp::Laplace { c: c * s },
            Imp::Logistic { c } => Imp::Logistic { c: c * s },
            Imp::Product { .. } => unreachable!("products rescale factor-wise"),
            Imp::ExpOfNegPsi { a, skewer, c, log_norm } => Imp::ExpOfNegPsi {
                a: *a,
                skewer: skewer.clone(),
                c: c * s,
                // int exp(-a Psi(u / (c s))) du = s * int exp(-a Psi(v / c)) dv
                log_norm: log_norm + s.ln(),
            },
        };
        Self { dim: self.dim, rule, imp }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rule(&self) -> Rule {
        self.rule
    }

    /// For exponential-family members exp(-a Psi)/c, the pair (a, skewer
    /// generating Psi). None for every other kernel.
    pub fn exp_family_parts(&self) -> Option<(f64, &SkewingFunction)> {
        match &self.imp {
            Imp::ExpOfNegPsi { a, skewer, .. } => Some((*a, skewer)),
            _ => None,
        }
    }

    /// Standardization scale; for product kernels, the first factor's.
    pub fn scale(&self) -> f64 {
        self.scales()[0]
    }

    /// Per-coordinate standardization scales.
    pub fn scales(&self) -> Vec<f64> {
        match &self.imp {
            Imp::Gaussian { c }
            | Imp::Student { c, .. }
            | Imp::ExponentialPower { c, .. }
            | Imp::Laplace { c }
            | Imp::Logistic { c }
            | Imp::ExpOfNegPsi { c, .. } => vec![*c; self.dim],
            Imp::Product { factors } => factors.iter().map(|f| f.scale()).collect(),
        }
    }

    pub fn tag(&self) -> String {
        match &self.imp {
            Imp::Gaussian { .. } => "gaussian".into(),
            Imp::Student { nu, .. } => format!("student(nu={nu})"),
            Imp::ExponentialPower { alpha, .. } => format!("exponential_power(alpha={alpha})"),
            Imp::Laplace { .. } => "laplace".into(),
            Imp::Logistic { .. } => "logistic".into(),
            Imp::Product { factors } => {
                let inner: Vec<String> = factors.iter().map(|f| f.tag()).collect();
                format!("product({})", inner.join(", "))
            }
            Imp::ExpOfNegPsi { a, skewer, .. } => {
                format!("exp_of_neg_psi(a={a}, psi={})", skewer.tag())
            }
        }
    }

    /// log f(z). Exactly even: the input enters only through |z_i| and
    /// sums of squares.
    pub fn log_density(&self, z: &[f64]) -> f64 {
        debug_assert_eq!(z.len(), self.dim);
        let k = self.dim as f64;
        match &self.imp {
            Imp::Gaussian { c } => {
                let r2: f64 = z.iter().map(|zi| zi * zi).sum();
                -0.5 * r2 / (c * c) - k * (c.ln() + LN_SQRT_2PI)
            }
            Imp::Student { nu, c } => {
                let r2: f64 = z.iter().map(|zi| zi * zi).sum();
                libm::lgamma(0.5 * (nu + k)) - libm::lgamma(0.5 * nu)
                    - 0.5 * k * (nu * std::f64::consts::PI).ln()
                    - k * c.ln()
                    - 0.5 * (nu + k) * (r2 / (nu * c * c)).ln_1p()
            }
            Imp::ExponentialPower { alpha, c } => {
                let u = (z[0] / c).abs();
                -u.powf(*alpha) / alpha - c.ln() - ep_log_norm(*alpha)
            }
            Imp::Laplace { c } => -(z[0] / c).abs() - (2.0 * c).ln(),
            Imp::Logistic { c } => {
                let u = (z[0] / c).abs();
                -u - 2.0 * (-u).exp().ln_1p() - c.ln()
            }
            Imp::Product { factors } => factors
                .iter()
                .zip(z)
                .map(|(f, zi)| f.log_density(std::slice::from_ref(zi)))
                .sum(),
            Imp::ExpOfNegPsi { a, skewer, c, log_norm } => {
                let v = [z[0] / c];
                -a * skewer.big_psi(&v).expect("dim checked at construction") - log_norm
            }
        }
    }

    /// Score phi_f(z) = -grad log f(z), written into `out`. Exactly odd.
    pub fn score(&self, z: &[f64], out: &mut [f64]) {
        debug_assert_eq!(z.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        match &self.imp {
            Imp::Gaussian { c } => {
                let inv = 1.0 / (c * c);
                for (o, zi) in out.iter_mut().zip(z) {
                    *o = zi * inv;
                }
            }
            Imp::Student { nu, c } => {
                let k = self.dim as f64;
                let r2: f64 = z.iter().map(|zi| zi * zi).sum();
                let factor = (nu + k) / (nu * c * c + r2);
                for (o, zi) in out.iter_mut().zip(z) {
                    *o = zi * factor;
                }
            }
            Imp::ExponentialPower { alpha, c } => {
                let u = (z[0] / c).abs();
                let mag = u.powf(alpha - 1.0) / c;
                out[0] = if z[0] == 0.0 { 0.0 } else { mag.copysign(z[0]) };
            }
            Imp::Laplace { c } => {
                out[0] = if z[0] == 0.0 { 0.0 } else { (1.0 / c).copysign(z[0]) };
            }
            Imp::Logistic { c } => {
                let t = ((z[0] / c).abs() * 0.5).tanh() / c;
                out[0] = if z[0] == 0.0 { 0.0 } else { t.copysign(z[0]) };
            }
            Imp::Product { factors } => {
                for (i, f) in factors.iter().enumerate() {
                    let mut oi = [0.0];
                    f.score(&z[i..=i], &mut oi);
                    out[i] = oi[0];
                }
            }
            Imp::ExpOfNegPsi { a, skewer, c, .. } => {
                let v = [z[0] / c];
                let mut psi = [0.0];
                skewer.psi(&v, &mut psi).expect("dim checked at construction");
                out[0] = a * psi[0] / c;
            }
        }
    }

    /// log density of the first coordinate's marginal. For elliptical
    /// families this is the matching univariate member with the same scale.
    pub fn marginal_log_density(&self, u: f64) -> f64 {
        match &self.imp {
            Imp::Gaussian { c } => -0.5 * (u / c) * (u / c) - c.ln() - LN_SQRT_2PI,
            Imp::Student { nu, c } => {
                libm::lgamma(0.5 * (nu + 1.0)) - libm::lgamma(0.5 * nu)
                    - 0.5 * (nu * std::f64::consts::PI).ln()
                    - c.ln()
                    - 0.5 * (nu + 1.0) * (u * u / (nu * c * c)).ln_1p()
            }
            Imp::Product { factors } => factors[0].marginal_log_density(u),
            _ => self.log_density(std::slice::from_ref(&u)),
        }
    }

    /// Tail classification used to pick Monte Carlo envelopes.
    pub fn decay(&self) -> Decay {
        match &self.imp {
            Imp::Gaussian { .. } => Decay::GaussianLike,
            Imp::Student { nu, .. } => Decay::HeavyTail(*nu),
            Imp::ExponentialPower { alpha, .. } => {
                if *alpha >= 2.0 {
                    Decay::GaussianLike
                } else {
                    Decay::ExponentialLike
                }
            }
            Imp::Laplace { .. } | Imp::Logistic { .. } => Decay::ExponentialLike,
            Imp::Product { factors } => {
                factors.iter().map(|f| f.decay()).fold(Decay::GaussianLike, worst_decay)
            }
            Imp::ExpOfNegPsi { skewer, .. } => match skewer.shape() {
                SkewerShape::Linear => Decay::GaussianLike,
                SkewerShape::Power { alpha } => {
                    if 0.5 * alpha + 1.0 >= 2.0 {
                        Decay::GaussianLike
                    } else {
                        Decay::ExponentialLike
                    }
                }
                SkewerShape::StudentType { .. } => Decay::ExponentialLike,
                // Conservative: the true tail is a power of the kernel's.
                SkewerShape::ScoreComposed { kernel } => kernel.decay(),
                SkewerShape::Sine => Decay::ExponentialLike,
            },
        }
    }

    /// Whether the density is a function of |z| alone (after scaling).
    pub fn is_elliptical(&self) -> bool {
        matches!(self.imp, Imp::Gaussian { .. } | Imp::Student { .. })
    }

    /// Exact draws exist for every family except exp_of_neg_psi.
    pub fn supports_sampling(&self) -> bool {
        match &self.imp {
            Imp::ExpOfNegPsi { .. } => false,
            Imp::Product { factors } => factors.iter().all(|f| f.supports_sampling()),
            _ => true,
        }
    }

    /// Draw one vector from the kernel into `out`.
    pub fn sample_into<R: Rng>(&self, rng: &mut R, out: &mut [f64]) -> Result<()> {
        debug_assert_eq!(out.len(), self.dim);
        match &self.imp {
            Imp::Gaussian { c } => {
                for o in out.iter_mut() {
                    let n: f64 = StandardNormal.sample(rng);
                    *o = c * n;
                }
                Ok(())
            }
            Imp::Student { nu, c } => {
                for o in out.iter_mut() {
                    let n: f64 = StandardNormal.sample(rng);
                    *o = n;
                }
                let chi2 = Gamma::new(0.5 * nu, 2.0).expect("nu validated");
                let w: f64 = chi2.sample(rng);
                let factor = c * (nu / w).sqrt();
                for o in out.iter_mut() {
                    *o *= factor;
                }
                Ok(())
            }
            Imp::ExponentialPower { alpha, c } => {
                let gamma = Gamma::new(1.0 / alpha, 1.0).expect("alpha validated");
                let w: f64 = gamma.sample(rng);
                let mag = c * (alpha * w).powf(1.0 / alpha);
                out[0] = if rng.random::<bool>() { mag } else { -mag };
                Ok(())
            }
            Imp::Laplace { c } => {
                let e: f64 = Exp1.sample(rng);
                let mag = c * e;
                out[0] = if rng.random::<bool>() { mag } else { -mag };
                Ok(())
            }
            Imp::Logistic { c } => {
                let u: f64 = Open01.sample(rng);
                out[0] = c * (u / (1.0 - u)).ln();
                Ok(())
            }
            Imp::Product { factors } => {
                for (i, f) in factors.iter().enumerate() {
                    f.sample_into(rng, &mut out[i..=i])?;
                }
                Ok(())
            }
            Imp::ExpOfNegPsi { .. } => Err(Error::Capability(
                "exp_of_neg_psi kernels have no exact sampler".into(),
            )),
        }
    }
}

fn worst_decay(a: Decay, b: Decay) -> Decay {
    use Decay::*;
    match (a, b) {
        (HeavyTail(x), HeavyTail(y)) => HeavyTail(x.min(y)),
        (HeavyTail(x), _) | (_, HeavyTail(x)) => HeavyTail(x),
        (ExponentialLike, _) | (_, ExponentialLike) => ExponentialLike,
        _ => GaussianLike,
    }
}

/// ln of the exponential-power normalizer 2 alpha^(1/alpha) Gamma(1 + 1/alpha).
fn ep_log_norm(alpha: f64) -> f64 {
    std::f64::consts::LN_2 + alpha.ln() / alpha + libm::lgamma(1.0 + 1.0 / alpha)
}

//! Skewing functions Pi(z, delta) and their symmetry-point derivatives.
//!
//! Every family here has the form Pi(z, delta) = H(u(z, delta)) where H is a
//! scalar cdf with H(u) + H(-u) = 1 and u is odd in z and linear in delta.
//! Consequently psi(z) = dPi/ddelta at delta = 0 equals H'(0) * v(z) for an
//! odd vector field v, and Psi is the potential with grad Psi = psi.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::models::kernels::SymmetricKernel;

/// Standard normal cdf, arranged so that `normal_cdf(u) + normal_cdf(-u)`
/// is exactly 1.0 in floating point: both branches share the same erfc call.
pub fn normal_cdf(u: f64) -> f64 {
    let t = u * std::f64::consts::FRAC_1_SQRT_2;
    if u >= 0.0 {
        1.0 - 0.5 * libm::erfc(t)
    } else {
        0.5 * libm::erfc(-t)
    }
}

/// Logistic cdf with the same exact mirror property. The negative branch is
/// 1 - p with p in [1/2, 1], which floating point computes exactly, so the
/// two branches always sum to 1.
fn logistic_cdf(u: f64) -> f64 {
    let w = (-u.abs()).exp();
    let p = 1.0 / (1.0 + w);
    if u >= 0.0 {
        p
    } else {
        1.0 - p
    }
}

const PI_DOT0_NORMAL: f64 = 0.398_942_280_401_432_7;
const PI_DOT0_LOGISTIC: f64 = 0.25;

/// Outer cdf applied to the skewing argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outer {
    NormalCdf,
    LogisticCdf,
}

impl Outer {
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            Outer::NormalCdf => normal_cdf(u),
            Outer::LogisticCdf => logistic_cdf(u),
        }
    }

    /// Derivative of the cdf at zero.
    pub fn slope_at_zero(&self) -> f64 {
        match self {
            Outer::NormalCdf => PI_DOT0_NORMAL,
            Outer::LogisticCdf => PI_DOT0_LOGISTIC,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Outer::NormalCdf => "normal_cdf",
            Outer::LogisticCdf => "logistic_cdf",
        }
    }
}

/// The inner argument family of a skewing function.
#[derive(Debug, Clone)]
pub enum SkewerShape {
    /// u = delta' z
    Linear,
    /// u = delta * sign(z) |z|^(alpha/2) sqrt(2/alpha), univariate only.
    Power { alpha: f64 },
    /// u = delta' z sqrt(nu + k) / sqrt(|z|^2 + nu)
    StudentType { nu: f64 },
    /// u = sum_i delta_i sin(z_i)
    Sine,
    /// u = delta' phi_f(z) for the score phi_f of a symmetric kernel.
    ScoreComposed { kernel: Arc<SymmetricKernel> },
}

impl SkewerShape {
    fn name(&self) -> &'static str {
        match self {
            SkewerShape::Linear => "linear",
            SkewerShape::Power { .. } => "power",
            SkewerShape::StudentType { .. } => "t_type",
            SkewerShape::Sine => "sine",
            SkewerShape::ScoreComposed { .. } => "score_composed",
        }
    }
}

/// A skewing function Pi(z, delta) together with psi, Psi and Pi-dot-zero.
#[derive(Debug, Clone)]
pub struct SkewingFunction {
    shape: SkewerShape,
    outer: Outer,
    /// H'(0), stored explicitly so alternative outer cdfs slot in.
    pi_dot0: f64,
}

impl SkewingFunction {
    pub fn new(shape: SkewerShape, outer: Outer) -> Result<Self> {
        match &shape {
            SkewerShape::Power { alpha } => {
                if !(alpha.is_finite() && *alpha > 1.0) {
                    return Err(Error::InvalidParameter {
                        name: "alpha".into(),
                        reason: format!("power skewer needs alpha > 1, got {alpha}"),
                    });
                }
            }
            SkewerShape::StudentType { nu } => {
                if !(nu.is_finite() && *nu > 0.0) {
                    return Err(Error::InvalidParameter {
                        name: "nu".into(),
                        reason: format!("t_type skewer needs nu > 0, got {nu}"),
                    });
                }
            }
            _ => {}
        }
        let pi_dot0 = outer.slope_at_zero();
        Ok(Self { shape, outer, pi_dot0 })
    }

    pub fn linear(outer: Outer) -> Self {
        Self::new(SkewerShape::Linear, outer).expect("linear has no parameters")
    }

    pub fn power(alpha: f64, outer: Outer) -> Result<Self> {
        Self::new(SkewerShape::Power { alpha }, outer)
    }

    pub fn t_type(nu: f64, outer: Outer) -> Result<Self> {
        Self::new(SkewerShape::StudentType { nu }, outer)
    }

    pub fn sine(outer: Outer) -> Self {
        Self::new(SkewerShape::Sine, outer).expect("sine has no parameters")
    }

    pub fn score_composed(kernel: Arc<SymmetricKernel>, outer: Outer) -> Self {
        Self::new(SkewerShape::ScoreComposed { kernel }, outer)
            .expect("score_composed has no parameters of its own")
    }

    pub fn shape(&self) -> &SkewerShape {
        &self.shape
    }

    pub fn outer(&self) -> Outer {
        self.outer
    }

    pub fn pi_dot0(&self) -> f64 {
        self.pi_dot0
    }

    pub fn name(&self) -> &'static str {
        self.shape.name()
    }

    pub fn tag(&self) -> String {
        let inner = match &self.shape {
            SkewerShape::Linear => "linear".to_string(),
            SkewerShape::Power { alpha } => format!("power(alpha={alpha})"),
            SkewerShape::StudentType { nu } => format!("t_type(nu={nu})"),
            SkewerShape::Sine => "sine".to_string(),
            SkewerShape::ScoreComposed { kernel } => {
                format!("score_composed({})", kernel.tag())
            }
        };
        format!("{inner}@{}", self.outer.name())
    }

    /// Whether the family is defined for dimension `dim`.
    pub fn admits_dim(&self, dim: usize) -> bool {
        if dim == 0 {
            return false;
        }
        match &self.shape {
            SkewerShape::Power { .. } => dim == 1,
            SkewerShape::ScoreComposed { kernel } => kernel.dim() == dim,
            _ => true,
        }
    }

    fn check_dims(&self, zlen: usize, dlen: usize) -> Result<()> {
        if zlen != dlen {
            return Err(Error::DimensionMismatch { expected: zlen, got: dlen });
        }
        if !self.admits_dim(zlen) {
            return Err(Error::Capability(format!(
                "skewer `{}` is not defined in dimension {zlen}",
                self.name()
            )));
        }
        Ok(())
    }

    /// The odd vector field v with u(z, delta) = delta' v(z).
    ///
    /// Writes into `out` (same length as `z`). Every component map sends
    /// -z to -v(z) exactly in floating point.
    pub fn inner_field(&self, z: &[f64], out: &mut [f64]) {
        debug_assert_eq!(z.len(), out.len());
        match &self.shape {
            SkewerShape::Linear => out.copy_from_slice(z),
            SkewerShape::Power { alpha } => {
                let a = *alpha;
                let scale = (2.0 / a).sqrt();
                out[0] = z[0].signum() * z[0].abs().powf(0.5 * a) * scale;
                if z[0] == 0.0 {
                    out[0] = 0.0;
                }
            }
            SkewerShape::StudentType { nu } => {
                let k = z.len() as f64;
                let r2: f64 = z.iter().map(|zi| zi * zi).sum();
                let factor = (nu + k).sqrt() / (r2 + nu).sqrt();
                for (o, zi) in out.iter_mut().zip(z) {
                    *o = zi * factor;
                }
            }
            SkewerShape::Sine => {
                for (o, zi) in out.iter_mut().zip(z) {
                    *o = zi.sin();
                }
            }
            SkewerShape::ScoreComposed { kernel } => kernel.score(z, out),
        }
    }

    /// Pi(z, delta).
    pub fn pi(&self, z: &[f64], delta: &[f64]) -> Result<f64> {
        self.check_dims(z.len(), delta.len())?;
        let mut v = vec![0.0; z.len()];
        self.inner_field(z, &mut v);
        let u: f64 = v.iter().zip(delta).map(|(vi, di)| vi * di).sum();
        Ok(self.outer.eval(u))
    }

    /// psi(z) = dPi/ddelta at delta = 0, written into `out`.
    pub fn psi(&self, z: &[f64], out: &mut [f64]) -> Result<()> {
        if z.len() != out.len() {
            return Err(Error::DimensionMismatch { expected: z.len(), got: out.len() });
        }
        if !self.admits_dim(z.len()) {
            return Err(Error::Capability(format!(
                "skewer `{}` is not defined in dimension {}",
                self.name(),
                z.len()
            )));
        }
        self.inner_field(z, out);
        for o in out.iter_mut() {
            *o *= self.pi_dot0;
        }
        Ok(())
    }

    /// The potential Psi with grad Psi = psi. The additive constant follows
    /// the closed forms below and is not normalized to Psi(0) = 0.
    pub fn big_psi(&self, z: &[f64]) -> Result<f64> {
        if !self.admits_dim(z.len()) {
            return Err(Error::Capability(format!(
                "skewer `{}` is not defined in dimension {}",
                self.name(),
                z.len()
            )));
        }
        let d0 = self.pi_dot0;
        Ok(match &self.shape {
            SkewerShape::Linear => {
                let r2: f64 = z.iter().map(|zi| zi * zi).sum();
                d0 * 0.5 * r2
            }
            SkewerShape::Power { alpha } => {
                let a = *alpha;
                let p = 0.5 * a + 1.0;
                d0 * z[0].abs().powf(p) * (2.0 / a).sqrt() / p
            }
            SkewerShape::StudentType { nu } => {
                let k = z.len() as f64;
                let r2: f64 = z.iter().map(|zi| zi * zi).sum();
                d0 * (nu + k).sqrt() * (r2 + nu).sqrt()
            }
            SkewerShape::Sine => -d0 * z.iter().map(|zi| zi.cos()).sum::<f64>(),
            SkewerShape::ScoreComposed { kernel } => {
                let zero = vec![0.0; z.len()];
                d0 * (kernel.log_density(&zero) - kernel.log_density(z))
            }
        })
    }
}

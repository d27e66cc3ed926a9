//! Scale calibration for symmetric kernels.
//!
//! Both rules are solved the same way: bisection on a residual computed by
//! quadrature against the kernel's first-coordinate marginal. No scale
//! constants are hardcoded, so families added later calibrate themselves.

use crate::error::{Error, Result};
use crate::models::Rule;
use crate::quad::{self, Decay, Integrand, Scheme};

const BRACKET_LO: f64 = 1e-6;
const BRACKET_HI: f64 = 1e6;
const REL_TOL: f64 = 1e-12;
const MAX_ITER: usize = 200;

/// Find s so that the marginal density exp(mld(u/s))/s satisfies `rule`.
///
/// `mld` must be the log density of a normalized univariate marginal. The
/// residual is unit variance minus one, or P(U <= 1) minus 3/4; both are
/// strictly monotone in s, so a sign-based geometric bisection suffices.
pub(crate) fn solve_extra_scale<F>(mld: &F, rule: Rule, family: &str) -> Result<f64>
where
    F: Fn(f64) -> f64 + Sync,
{
    // Integrate in the base variable so the integrand keeps O(1) width for
    // every candidate scale; only closed-form factors and limits move with s.
    let second_moment = match rule {
        Rule::UnitVariance => {
            let eval = |z: &[f64], out: &mut [f64]| {
                out[0] = z[0] * z[0] * mld(z[0]).exp();
            };
            let f = Integrand::new(1, 1, Decay::ExponentialLike, &eval);
            let m2 = quad::integrate(&f, &Scheme::Adaptive1d)?.scalar();
            if !(m2.is_finite() && m2 > 0.0) {
                return Err(Error::StandardizationInfeasible {
                    rule: rule.name().into(),
                    family: family.into(),
                    reason: format!("marginal second moment evaluated to {m2}"),
                });
            }
            m2
        }
        Rule::MedianOfSquares => f64::NAN,
    };

    let residual = |s: f64| -> Result<f64> {
        match rule {
            Rule::UnitVariance => Ok(s * s * second_moment - 1.0),
            Rule::MedianOfSquares => {
                let eval = |z: &[f64], out: &mut [f64]| {
                    out[0] = mld(z[0]).exp();
                };
                let f = Integrand::new(1, 1, Decay::ExponentialLike, &eval);
                Ok(quad::integrate_range_1d(&f, f64::NEG_INFINITY, 1.0 / s)?.scalar() - 0.75)
            }
        }
    };

    let mut lo = BRACKET_LO;
    let mut hi = BRACKET_HI;
    let mut res_lo = residual(lo)?;
    let res_hi = residual(hi)?;
    if res_lo == 0.0 {
        return Ok(lo);
    }
    if res_hi == 0.0 {
        return Ok(hi);
    }
    if res_lo.signum() == res_hi.signum() {
        return Err(Error::StandardizationInfeasible {
            rule: rule.name().into(),
            family: family.into(),
            reason: format!(
                "no scale in [{BRACKET_LO:.0e}, {BRACKET_HI:.0e}] meets the rule \
                 (bracket residuals {res_lo:.3e} and {res_hi:.3e})"
            ),
        });
    }

    for _ in 0..MAX_ITER {
        if hi / lo - 1.0 <= REL_TOL {
            break;
        }
        let mid = (lo * hi).sqrt();
        let res_mid = residual(mid)?;
        if res_mid == 0.0 {
            return Ok(mid);
        }
        if res_mid.signum() == res_lo.signum() {
            lo = mid;
            res_lo = res_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

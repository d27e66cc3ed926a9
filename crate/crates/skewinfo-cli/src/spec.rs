//! Model spec files: a TOML surface naming a kernel, a skewing function,
//! an optional parameter point, and optional standardization/quadrature
//! overrides. Every field is validated against the library registries;
//! unknown keys are rejected with the parser's line anchor.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use skewinfo::density::{SkewModel, ThetaPoint};
use skewinfo::models::{Outer, Rule, SkewingFunction, SymmetricKernel};
use skewinfo::quad::Scheme;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    /// "unit_variance" (default) or "median_of_squares". Declared before
    /// the tables so serialization emits it at the top level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardization: Option<String>,
    pub kernel: KernelSpec,
    pub skewer: SkewerSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<ThetaSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<QuadSpec>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factors: Option<Vec<KernelSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skewer: Option<Box<SkewerSpec>>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SkewerSpec {
    pub family: String,
    /// "normal_cdf" (default) or "logistic_cdf".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<Box<KernelSpec>>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaSpec {
    pub mu: Vec<f64>,
    /// Row-major square matrix.
    pub sigma_half: Vec<Vec<f64>>,
    pub delta: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct QuadSpec {
    /// "adaptive_1d", "tensor_product", or "radial_angular".
    pub scheme: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angular: Option<usize>,
}

/// A fully validated spec, bound to library objects.
pub struct Loaded {
    pub model: SkewModel,
    pub theta: ThetaPoint,
    pub rule: Rule,
    pub scheme: Option<Scheme>,
    pub file: SpecFile,
}

pub fn load(path: &Path) -> Result<Loaded, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read spec file `{}`: {e}", path.display()))?;
    let file: SpecFile = toml::from_str(&text)
        .map_err(|e| format!("in spec file `{}`:\n{e}", path.display()))?;
    build(file)
}

pub fn build(file: SpecFile) -> Result<Loaded, String> {
    let rule = match file.standardization.as_deref() {
        None | Some("unit_variance") => Rule::UnitVariance,
        Some("median_of_squares") => Rule::MedianOfSquares,
        Some(other) => {
            return Err(format!(
                "standardization: unknown rule `{other}` (expected `unit_variance` or \
                 `median_of_squares`)"
            ))
        }
    };
    let kernel = build_kernel(&file.kernel, rule)?;
    let skewer = build_skewer(&file.skewer, rule)?;
    let model = SkewModel::new(kernel, skewer).map_err(|e| e.to_string())?;
    let k = model.dim();

    let theta = match &file.theta {
        None => ThetaPoint::symmetric(k),
        Some(t) => build_theta(t, k)?,
    };
    let scheme = match &file.quadrature {
        None => None,
        Some(q) => Some(build_scheme(q, k)?),
    };
    Ok(Loaded { model, theta, rule, scheme, file })
}

fn reject_unused(kind: &str, family: &str, fields: &[(&str, bool)]) -> Result<(), String> {
    for (name, present) in fields {
        if *present {
            return Err(format!(
                "{kind}: field `{name}` does not apply to family `{family}`"
            ));
        }
    }
    Ok(())
}

pub fn build_kernel(spec: &KernelSpec, rule: Rule) -> Result<SymmetricKernel, String> {
    let f = spec.family.as_str();
    let err = |e: skewinfo::Error| format!("kernel `{f}`: {e}");
    match f {
        "gaussian" => {
            reject_unused("kernel", f, &[
                ("nu", spec.nu.is_some()),
                ("alpha", spec.alpha.is_some()),
                ("a", spec.a.is_some()),
                ("factors", spec.factors.is_some()),
                ("skewer", spec.skewer.is_some()),
            ])?;
            SymmetricKernel::gaussian(spec.dim.unwrap_or(1), rule).map_err(err)
        }
        "student" => {
            reject_unused("kernel", f, &[
                ("alpha", spec.alpha.is_some()),
                ("a", spec.a.is_some()),
                ("factors", spec.factors.is_some()),
                ("skewer", spec.skewer.is_some()),
            ])?;
            let nu = spec.nu.ok_or("kernel `student`: field `nu` is required")?;
            SymmetricKernel::student(spec.dim.unwrap_or(1), nu, rule).map_err(err)
        }
        "laplace" | "logistic" => {
            reject_unused("kernel", f, &[
                ("dim", spec.dim.is_some()),
                ("nu", spec.nu.is_some()),
                ("alpha", spec.alpha.is_some()),
                ("a", spec.a.is_some()),
                ("factors", spec.factors.is_some()),
                ("skewer", spec.skewer.is_some()),
            ])?;
            if f == "laplace" {
                SymmetricKernel::laplace(rule).map_err(err)
            } else {
                SymmetricKernel::logistic(rule).map_err(err)
            }
        }
        "exponential_power" => {
            reject_unused("kernel", f, &[
                ("dim", spec.dim.is_some()),
                ("nu", spec.nu.is_some()),
                ("a", spec.a.is_some()),
                ("factors", spec.factors.is_some()),
                ("skewer", spec.skewer.is_some()),
            ])?;
            let alpha =
                spec.alpha.ok_or("kernel `exponential_power`: field `alpha` is required")?;
            SymmetricKernel::exponential_power(alpha, rule).map_err(err)
        }
        "product" => {
            reject_unused("kernel", f, &[
                ("dim", spec.dim.is_some()),
                ("nu", spec.nu.is_some()),
                ("alpha", spec.alpha.is_some()),
                ("a", spec.a.is_some()),
                ("skewer", spec.skewer.is_some()),
            ])?;
            let factors = spec
                .factors
                .as_ref()
                .ok_or("kernel `product`: field `factors` is required")?;
            let built: Result<Vec<_>, String> =
                factors.iter().map(|k| build_kernel(k, rule)).collect();
            SymmetricKernel::product(built?).map_err(err)
        }
        "exp_of_neg_psi" => {
            reject_unused("kernel", f, &[
                ("dim", spec.dim.is_some()),
                ("nu", spec.nu.is_some()),
                ("alpha", spec.alpha.is_some()),
                ("factors", spec.factors.is_some()),
            ])?;
            let a = spec.a.ok_or("kernel `exp_of_neg_psi`: field `a` is required")?;
            let inner = spec
                .skewer
                .as_ref()
                .ok_or("kernel `exp_of_neg_psi`: a `skewer` table is required")?;
            let skewer = build_skewer(inner, rule)?;
            SymmetricKernel::exp_of_neg_psi(a, Arc::new(skewer), rule).map_err(err)
        }
        other => Err(format!(
            "kernel: unknown family `{other}` (expected one of gaussian, student, laplace, \
             logistic, exponential_power, product, exp_of_neg_psi)"
        )),
    }
}

pub fn build_skewer(spec: &SkewerSpec, rule: Rule) -> Result<SkewingFunction, String> {
    let outer = match spec.outer.as_deref() {
        None | Some("normal_cdf") => Outer::NormalCdf,
        Some("logistic_cdf") => Outer::LogisticCdf,
        Some(other) => {
            return Err(format!(
                "skewer: unknown outer `{other}` (expected `normal_cdf` or `logistic_cdf`)"
            ))
        }
    };
    let f = spec.family.as_str();
    let err = |e: skewinfo::Error| format!("skewer `{f}`: {e}");
    match f {
        "linear" | "sine" => {
            reject_unused("skewer", f, &[
                ("alpha", spec.alpha.is_some()),
                ("nu", spec.nu.is_some()),
                ("kernel", spec.kernel.is_some()),
            ])?;
            Ok(if f == "linear" {
                SkewingFunction::linear(outer)
            } else {
                SkewingFunction::sine(outer)
            })
        }
        "power" => {
            reject_unused("skewer", f, &[
                ("nu", spec.nu.is_some()),
                ("kernel", spec.kernel.is_some()),
            ])?;
            let alpha = spec.alpha.ok_or("skewer `power`: field `alpha` is required")?;
            SkewingFunction::power(alpha, outer).map_err(err)
        }
        "t_type" => {
            reject_unused("skewer", f, &[
                ("alpha", spec.alpha.is_some()),
                ("kernel", spec.kernel.is_some()),
            ])?;
            let nu = spec.nu.ok_or("skewer `t_type`: field `nu` is required")?;
            SkewingFunction::t_type(nu, outer).map_err(err)
        }
        "score_composed" => {
            reject_unused("skewer", f, &[
                ("alpha", spec.alpha.is_some()),
                ("nu", spec.nu.is_some()),
            ])?;
            let inner = spec
                .kernel
                .as_ref()
                .ok_or("skewer `score_composed`: a `kernel` table is required")?;
            let kernel = build_kernel(inner, rule)?;
            Ok(SkewingFunction::score_composed(Arc::new(kernel), outer))
        }
        other => Err(format!(
            "skewer: unknown family `{other}` (expected one of linear, sine, power, t_type, \
             score_composed)"
        )),
    }
}

fn build_theta(spec: &ThetaSpec, k: usize) -> Result<ThetaPoint, String> {
    if spec.mu.len() != k {
        return Err(format!("theta.mu: expected {k} entries, got {}", spec.mu.len()));
    }
    if spec.delta.len() != k {
        return Err(format!("theta.delta: expected {k} entries, got {}", spec.delta.len()));
    }
    if spec.sigma_half.len() != k || spec.sigma_half.iter().any(|row| row.len() != k) {
        return Err(format!("theta.sigma_half: expected a {k}x{k} row-major matrix"));
    }
    let mut sigma_half = nalgebra::DMatrix::zeros(k, k);
    for (i, row) in spec.sigma_half.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            sigma_half[(i, j)] = *v;
        }
    }
    ThetaPoint::new(
        nalgebra::DVector::from_row_slice(&spec.mu),
        sigma_half,
        nalgebra::DVector::from_row_slice(&spec.delta),
    )
    .map_err(|e| format!("theta: {e}"))
}

fn build_scheme(spec: &QuadSpec, k: usize) -> Result<Scheme, String> {
    match spec.scheme.as_str() {
        "adaptive_1d" => {
            if spec.level.is_some() || spec.angular.is_some() {
                return Err("quadrature `adaptive_1d` takes no `level` or `angular`".into());
            }
            if k != 1 {
                return Err(format!(
                    "quadrature `adaptive_1d` is one-dimensional; this model has dimension {k}"
                ));
            }
            Ok(Scheme::Adaptive1d)
        }
        "tensor_product" => {
            if spec.angular.is_some() {
                return Err("quadrature `tensor_product` takes no `angular`".into());
            }
            Ok(Scheme::TensorProduct { level: spec.level.unwrap_or(61) })
        }
        "radial_angular" => {
            if spec.level.is_some() {
                return Err("quadrature `radial_angular` takes no `level`".into());
            }
            if k < 2 {
                return Err("quadrature `radial_angular` needs dimension 2 or 3".into());
            }
            Ok(Scheme::RadialAngular { angular: spec.angular.unwrap_or(48) })
        }
        other => Err(format!(
            "quadrature: unknown scheme `{other}` (expected one of adaptive_1d, \
             tensor_product, radial_angular)"
        )),
    }
}

/// Serialize the spec for a matched kernel: exp(-a Psi) of the input
/// skewer, paired with that same skewer.
pub fn matched_spec_text(a: f64, rule: Rule, skewer: &SkewerSpec) -> String {
    let file = SpecFile {
        standardization: Some(rule.to_string()),
        kernel: KernelSpec {
            family: "exp_of_neg_psi".into(),
            dim: None,
            nu: None,
            alpha: None,
            a: Some(a),
            factors: None,
            skewer: Some(Box::new(skewer.clone())),
        },
        skewer: skewer.clone(),
        theta: None,
        quadrature: None,
    };
    let body = toml::to_string(&file).expect("spec structs serialize");
    format!("# written by skewinfo match\n{body}")
}

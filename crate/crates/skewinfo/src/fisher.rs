//! Fisher information at the symmetry point delta = 0.
//!
//! With z = S^-1 (x - mu) the score splits into three blocks:
//!
//!   location:  l1 = S^-1 phi_f(z)
//!   scatter:   l2 = vech-projection of S^-1 (phi_f(z) z' - I)
//!   skewness:  l3 = 2 psi(z)
//!
//! l1 and l3 are odd in x - mu while l2 is even, so the location-scatter
//! and scatter-skewness information blocks vanish identically. Assembly
//! writes those zeros exactly; only the genuinely nonzero blocks are
//! integrated.
//!
//! Singularity of the reduced (location, skewness) information is what the
//! rank diagnosis quantifies: a null vector (v, w) certifies the pointwise
//! score collinearity V' phi_f = W' psi with V = S^-1 v and W = -2 w.
//!
//! vech convention, fixed once for P_k, l2 and the scatter block alike:
//! upper triangle, stacked column-wise, so k = 2 orders (m11, m12, m22).

use nalgebra::{DMatrix, DVector};

use crate::density::{SkewModel, ThetaPoint};
use crate::error::{Error, Result};
use crate::quad::{self, Integrand, Scheme};

/// Angular resolution of the radial scheme used for elliptical kernels.
const RADIAL_ANGULAR: usize = 48;
/// Per-axis node count of the tensor scheme used for product kernels.
const TENSOR_LEVEL: usize = 61;

/// Which parameter blocks the information matrix covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    /// (location, skewness): the 2k x 2k matrix whose rank determines
    /// whether skewness is locally identifiable.
    Reduced,
    /// (location, scatter, skewness): k(k+5)/2 parameters.
    Full,
}

/// Index pairs (i, j), i <= j, of the column-stacked upper triangle.
pub(crate) fn vech_pairs(k: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(k * (k + 1) / 2);
    for j in 0..k {
        for i in 0..=j {
            pairs.push((i, j));
        }
    }
    pairs
}

/// The 0/1 matrix P_k of shape k(k+1)/2 x k^2 satisfying
/// P_k' vech(M) = vec(M) for every symmetric M, with vech ordered like
/// `vech_pairs`. Applied to vec(M) it returns the pair sums of the
/// symmetric part of M.
pub fn duplication_matrix(k: usize) -> DMatrix<f64> {
    let pairs = vech_pairs(k);
    let mut p = DMatrix::zeros(pairs.len(), k * k);
    for (row, &(i, j)) in pairs.iter().enumerate() {
        p[(row, j * k + i)] = 1.0;
        if i != j {
            p[(row, i * k + j)] = 1.0;
        }
    }
    p
}

/// Score value at one observation, split into its parameter blocks.
#[derive(Debug, Clone)]
pub struct ScoreVector {
    pub loc_block: DVector<f64>,
    /// Empty for the reduced decomposition.
    pub scatter_block: DVector<f64>,
    pub skew_block: DVector<f64>,
}

impl ScoreVector {
    /// Blocks concatenated in parameter order.
    pub fn stacked(&self) -> DVector<f64> {
        let mut out =
            DVector::zeros(self.loc_block.len() + self.scatter_block.len() + self.skew_block.len());
        let mut idx = 0;
        for b in [&self.loc_block, &self.scatter_block, &self.skew_block] {
            for v in b.iter() {
                out[idx] = *v;
                idx += 1;
            }
        }
        out
    }
}

/// Score evaluator at a symmetric parameter point (delta must be zero).
pub struct ScoreAtSymmetry<'a> {
    model: &'a SkewModel,
    theta: &'a ThetaPoint,
    inv_sigma_half: DMatrix<f64>,
}

impl<'a> ScoreAtSymmetry<'a> {
    pub fn new(model: &'a SkewModel, theta: &'a ThetaPoint) -> Result<Self> {
        if theta.dim() != model.dim() {
            return Err(Error::DimensionMismatch { expected: model.dim(), got: theta.dim() });
        }
        if theta.delta().iter().any(|d| *d != 0.0) {
            return Err(Error::Contract(
                "the score decomposition applies at the symmetry point delta = 0".into(),
            ));
        }
        let inv = theta.sigma_half().clone().try_inverse().ok_or_else(|| {
            Error::InvalidParameter {
                name: "sigma_half".into(),
                reason: "scale root is numerically singular".into(),
            }
        })?;
        Ok(Self { model, theta, inv_sigma_half: inv })
    }

    pub fn dim(&self, part: Part) -> usize {
        let k = self.model.dim();
        match part {
            Part::Reduced => 2 * k,
            Part::Full => k * (k + 5) / 2,
        }
    }

    /// Stacked score evaluated in the standardized coordinate z.
    ///
    /// Reduced order: (l1, l3). Full order: (l1, l2, l3).
    pub fn eval_standardized(&self, z: &[f64], part: Part, out: &mut [f64]) {
        let k = self.model.dim();
        debug_assert_eq!(z.len(), k);
        debug_assert_eq!(out.len(), self.dim(part));
        let mut phi = vec![0.0; k];
        self.model.kernel().score(z, &mut phi);

        // l1 = S^-1 phi
        for i in 0..k {
            let mut acc = 0.0;
            for j in 0..k {
                acc += self.inv_sigma_half[(i, j)] * phi[j];
            }
            out[i] = acc;
        }

        let skew_offset = match part {
            Part::Reduced => k,
            Part::Full => {
                // l2 = pair sums of G = S^-1 (phi z' - I)
                let mut g = vec![0.0; k * k];
                for i in 0..k {
                    for j in 0..k {
                        let mut acc = 0.0;
                        for l in 0..k {
                            let m = phi[l] * z[j] - if l == j { 1.0 } else { 0.0 };
                            acc += self.inv_sigma_half[(i, l)] * m;
                        }
                        g[i * k + j] = acc;
                    }
                }
                let mut idx = k;
                for (i, j) in vech_pairs(k) {
                    out[idx] = if i == j { g[i * k + j] } else { g[i * k + j] + g[j * k + i] };
                    idx += 1;
                }
                idx
            }
        };

        // l3 = 2 psi
        let psi = &mut phi;
        self.model
            .skewer()
            .psi(z, psi)
            .expect("dimension admissibility checked at model construction");
        for i in 0..k {
            out[skew_offset + i] = 2.0 * psi[i];
        }
    }

    /// Stacked score at an observation point x.
    pub fn eval_at(&self, x: &[f64], part: Part, out: &mut [f64]) {
        let k = self.model.dim();
        let mut z = vec![0.0; k];
        for i in 0..k {
            let mut acc = 0.0;
            for j in 0..k {
                acc += self.inv_sigma_half[(i, j)] * (x[j] - self.theta.mu()[j]);
            }
            z[i] = acc;
        }
        self.eval_standardized(&z, part, out);
    }
}

/// Score at an observation x, as labeled parameter blocks.
pub fn score_at_symmetry(
    model: &SkewModel,
    theta: &ThetaPoint,
    x: &[f64],
    part: Part,
) -> Result<ScoreVector> {
    let score = ScoreAtSymmetry::new(model, theta)?;
    if x.len() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: x.len() });
    }
    let k = model.dim();
    let mut out = vec![0.0; score.dim(part)];
    score.eval_at(x, part, &mut out);
    let scatter_len = match part {
        Part::Reduced => 0,
        Part::Full => k * (k + 1) / 2,
    };
    Ok(ScoreVector {
        loc_block: DVector::from_row_slice(&out[..k]),
        scatter_block: DVector::from_row_slice(&out[k..k + scatter_len]),
        skew_block: DVector::from_row_slice(&out[k + scatter_len..]),
    })
}

/// Quadrature scheme for integrals of score products against the kernel.
pub fn scheme_for(kernel: &crate::models::SymmetricKernel) -> Scheme {
    if kernel.dim() == 1 {
        Scheme::Adaptive1d
    } else if kernel.is_elliptical() {
        Scheme::RadialAngular { angular: RADIAL_ANGULAR }
    } else {
        Scheme::TensorProduct { level: TENSOR_LEVEL }
    }
}

/// Square-integrability conditions behind each information block, checked
/// by partial-integral probes before any block is integrated. The names
/// follow the univariate (A) and multivariate (B) conventions.
pub(crate) fn check_assumptions(model: &SkewModel, part: Part) -> Result<()> {
    let kernel = model.kernel();
    let k = kernel.dim();
    let (base_name, plus_name, skew_name) =
        if k == 1 { ("(A1)", "(A1+)", "(A2+)") } else { ("(B1)", "(B1+)", "(B2+)") };

    let base_eval = |z: &[f64], out: &mut [f64]| {
        let mut phi = vec![0.0; z.len()];
        kernel.score(z, &mut phi);
        let fz = kernel.log_density(z).exp();
        out[0] = phi.iter().map(|p| p * p).sum::<f64>() * fz;
    };
    let base = Integrand::new(k, 1, kernel.decay(), &base_eval);
    if !quad::probe_divergence(&base, None)?.is_convergent() {
        return Err(Error::AssumptionViolation {
            assumption: base_name,
            detail: "the squared location score is not integrable against the kernel".into(),
        });
    }

    if part == Part::Full {
        let plus_eval = |z: &[f64], out: &mut [f64]| {
            let mut phi = vec![0.0; z.len()];
            kernel.score(z, &mut phi);
            let fz = kernel.log_density(z).exp();
            let mut frob = 0.0;
            for i in 0..z.len() {
                for j in 0..z.len() {
                    let m = phi[i] * z[j] - if i == j { 1.0 } else { 0.0 };
                    frob += m * m;
                }
            }
            out[0] = frob * fz;
        };
        let plus = Integrand::new(k, 1, kernel.decay(), &plus_eval);
        if !quad::probe_divergence(&plus, None)?.is_convergent() {
            return Err(Error::AssumptionViolation {
                assumption: plus_name,
                detail: "the squared scatter score is not integrable against the kernel".into(),
            });
        }
    }

    let skewer = model.skewer();
    let skew_eval = |z: &[f64], out: &mut [f64]| {
        let mut psi = vec![0.0; z.len()];
        skewer.psi(z, &mut psi).expect("dimension checked at model construction");
        let fz = kernel.log_density(z).exp();
        out[0] = psi.iter().map(|p| p * p).sum::<f64>() * fz;
    };
    let skew = Integrand::new(k, 1, kernel.decay(), &skew_eval);
    if !quad::probe_divergence(&skew, None)?.is_convergent() {
        return Err(Error::AssumptionViolation {
            assumption: skew_name,
            detail: "the squared skewness score is not integrable against the kernel".into(),
        });
    }
    Ok(())
}

/// Fisher information at a symmetric parameter point.
#[derive(Debug, Clone)]
pub struct InformationMatrix {
    pub part: Part,
    /// Model dimension k.
    pub k: usize,
    pub matrix: DMatrix<f64>,
    /// Entrywise quadrature error estimates; exact-zero blocks carry 0.
    pub err: DMatrix<f64>,
    /// Kernel evaluations spent.
    pub nodes: usize,
    /// Which quadrature scheme produced the entries.
    pub scheme: &'static str,
    /// The symmetric parameter point the matrix was computed at.
    pub theta0: ThetaPoint,
}

impl InformationMatrix {
    pub fn order(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn max_err(&self) -> f64 {
        self.err.iter().fold(0.0f64, |m, e| m.max(*e))
    }

    pub fn location_range(&self) -> std::ops::Range<usize> {
        0..self.k
    }

    pub fn scatter_range(&self) -> std::ops::Range<usize> {
        match self.part {
            Part::Reduced => self.k..self.k,
            Part::Full => self.k..self.k + self.k * (self.k + 1) / 2,
        }
    }

    pub fn skew_range(&self) -> std::ops::Range<usize> {
        let start = self.scatter_range().end;
        start..start + self.k
    }
}

/// Compute the information matrix, probing integrability first.
pub fn information(model: &SkewModel, theta: &ThetaPoint, part: Part) -> Result<InformationMatrix> {
    information_with(model, theta, part, None)
}

/// [`information`] with an explicit quadrature scheme overriding the
/// automatic routing. `None` routes by kernel shape.
pub fn information_with(
    model: &SkewModel,
    theta: &ThetaPoint,
    part: Part,
    override_scheme: Option<&Scheme>,
) -> Result<InformationMatrix> {
    let score = ScoreAtSymmetry::new(model, theta)?;
    check_assumptions(model, part)?;

    let kernel = model.kernel();
    let k = kernel.dim();
    let d = score.dim(part);
    let mut pairs = Vec::with_capacity(d * (d + 1) / 2);
    for i in 0..d {
        for j in i..d {
            pairs.push((i, j));
        }
    }
    let out_dim = pairs.len();
    let eval = |z: &[f64], out: &mut [f64]| {
        let fz = kernel.log_density(z).exp();
        let mut s = vec![0.0; d];
        score.eval_standardized(z, part, &mut s);
        for (o, &(i, j)) in out.iter_mut().zip(&pairs) {
            *o = s[i] * s[j] * fz;
        }
    };
    let f = Integrand::new(k, out_dim, kernel.decay(), &eval);
    let scheme = match override_scheme {
        Some(s) => s.clone(),
        None => scheme_for(kernel),
    };
    let r = quad::integrate(&f, &scheme)?;

    let mut matrix = DMatrix::zeros(d, d);
    let mut err = DMatrix::zeros(d, d);
    for (idx, &(i, j)) in pairs.iter().enumerate() {
        matrix[(i, j)] = r.value[idx];
        matrix[(j, i)] = r.value[idx];
        err[(i, j)] = r.err[idx];
        err[(j, i)] = r.err[idx];
    }

    let mut info = InformationMatrix {
        part,
        k,
        matrix,
        err,
        nodes: r.nodes,
        scheme: r.scheme,
        theta0: theta.clone(),
    };
    if part == Part::Full {
        // Odd-even symmetry makes these blocks vanish identically.
        let scatter = info.scatter_range();
        let loc = info.location_range();
        let skew = info.skew_range();
        for i in loc {
            for j in scatter.clone() {
                for (a, b) in [(i, j), (j, i)] {
                    info.matrix[(a, b)] = 0.0;
                    info.err[(a, b)] = 0.0;
                }
            }
        }
        for i in scatter {
            for j in skew.clone() {
                for (a, b) in [(i, j), (j, i)] {
                    info.matrix[(a, b)] = 0.0;
                    info.err[(a, b)] = 0.0;
                }
            }
        }
    }
    Ok(info)
}

/// Spectral rank report of an information (or Gram) matrix.
#[derive(Debug, Clone)]
pub struct RankDiagnosis {
    /// Singular values, descending.
    pub singular_values: Vec<f64>,
    /// Null threshold: max(1e-7 * s_max, 10 * quadrature error).
    pub tolerance: f64,
    pub rank: usize,
    pub nullity: usize,
    /// True when some singular value sits within a factor 10 of the
    /// threshold, so the rank call should not be trusted blindly.
    pub indeterminate: bool,
    /// Orthonormal columns spanning the numerical null space.
    pub null_basis: DMatrix<f64>,
}

/// Rank of a symmetric matrix whose entries carry quadrature error `err`.
pub fn rank_from_parts(matrix: &DMatrix<f64>, err: f64) -> RankDiagnosis {
    let d = matrix.nrows();
    let svd = matrix.clone().svd(true, true);
    let v_t = svd.v_t.expect("requested");
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let singular_values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();

    let s_max = singular_values.first().copied().unwrap_or(0.0);
    let tolerance = (1e-7 * s_max).max(10.0 * err);
    let nullity = singular_values.iter().filter(|s| **s < tolerance).count();
    let rank = d - nullity;
    let indeterminate = singular_values
        .iter()
        .any(|s| *s >= tolerance / 10.0 && *s <= tolerance * 10.0);

    let mut null_basis = DMatrix::zeros(d, nullity);
    for (col, &oi) in order[rank..].iter().enumerate() {
        for r in 0..d {
            null_basis[(r, col)] = v_t[(oi, r)];
        }
    }
    RankDiagnosis { singular_values, tolerance, rank, nullity, indeterminate, null_basis }
}

pub fn rank_diagnosis(info: &InformationMatrix) -> RankDiagnosis {
    rank_from_parts(&info.matrix, info.max_err())
}

/// The score collinearity certificate extracted from a reduced null space.
#[derive(Debug, Clone)]
pub struct DerivedPair {
    /// k x m: combination of location scores.
    pub v: DMatrix<f64>,
    /// k x m: matching combination of skewness scores.
    pub w: DMatrix<f64>,
    /// Per-column value of int (V'phi - W'psi)^2 f, a direct quadrature
    /// check of the collinearity certified by the null vector.
    pub residuals: Vec<f64>,
}

/// Map reduced null vectors (v, w) to the derived pair V = S^-1 v,
/// W = -2 w, sign-normalized so each column's largest component of V
/// (falling back to W) is positive, and verify the collinearity residual.
pub fn derived_null_pair(
    model: &SkewModel,
    theta: &ThetaPoint,
    info: &InformationMatrix,
    diag: &RankDiagnosis,
) -> Result<Option<DerivedPair>> {
    if info.part != Part::Reduced {
        return Err(Error::Contract(
            "derived null pairs are defined for the reduced information".into(),
        ));
    }
    let k = info.k;
    let m = diag.nullity;
    if m == 0 {
        return Ok(None);
    }
    let inv = theta.sigma_half().clone().try_inverse().ok_or_else(|| {
        Error::InvalidParameter {
            name: "sigma_half".into(),
            reason: "scale root is numerically singular".into(),
        }
    })?;
    let mut v = DMatrix::zeros(k, m);
    let mut w = DMatrix::zeros(k, m);
    for c in 0..m {
        let raw_v = diag.null_basis.view((0, c), (k, 1)).into_owned();
        let mapped = &inv * DVector::from_column_slice(raw_v.as_slice());
        for i in 0..k {
            v[(i, c)] = mapped[i];
            w[(i, c)] = -2.0 * diag.null_basis[(k + i, c)];
        }
        sign_normalize_column(&mut v, &mut w, c);
    }

    let residuals = collinearity_residuals(model, &v, &w)?;
    Ok(Some(DerivedPair { v, w, residuals }))
}

/// Flip the signs of column `c` of (v, w) jointly so the largest-magnitude
/// entry of v (falling back to w when v is zero) is positive.
pub(crate) fn sign_normalize_column(v: &mut DMatrix<f64>, w: &mut DMatrix<f64>, c: usize) {
    let k = v.nrows();
    let mut best = 0usize;
    let mut best_abs = 0.0f64;
    let mut from_w = false;
    for i in 0..k {
        if v[(i, c)].abs() > best_abs {
            best_abs = v[(i, c)].abs();
            best = i;
        }
    }
    if best_abs == 0.0 {
        for i in 0..k {
            if w[(i, c)].abs() > best_abs {
                best_abs = w[(i, c)].abs();
                best = i;
                from_w = true;
            }
        }
    }
    let pivot = if from_w { w[(best, c)] } else { v[(best, c)] };
    if pivot < 0.0 {
        for i in 0..k {
            v[(i, c)] = -v[(i, c)];
            w[(i, c)] = -w[(i, c)];
        }
    }
}

/// Per-column int (V'phi - W'psi)^2 f dz, a fresh quadrature pass.
pub(crate) fn collinearity_residuals(
    model: &SkewModel,
    v: &DMatrix<f64>,
    w: &DMatrix<f64>,
) -> Result<Vec<f64>> {
    let kernel = model.kernel();
    let skewer = model.skewer();
    let k = kernel.dim();
    let m = v.ncols();
    let eval = |z: &[f64], out: &mut [f64]| {
        let mut phi = vec![0.0; k];
        let mut psi = vec![0.0; k];
        kernel.score(z, &mut phi);
        skewer.psi(z, &mut psi).expect("dimension checked at model construction");
        let fz = kernel.log_density(z).exp();
        for (c, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for i in 0..k {
                acc += v[(i, c)] * phi[i] - w[(i, c)] * psi[i];
            }
            *o = acc * acc * fz;
        }
    };
    let f = Integrand::new(k, m, kernel.decay(), &eval);
    let r = quad::integrate(&f, &scheme_for(kernel))?;
    Ok(r.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec;
    use crate::models::{Outer, Rule, SkewingFunction, SymmetricKernel};
    use crate::testutil::{registry_1d, registry_2d};
    use approx::assert_relative_eq;

    const PI_DOT0: f64 = 0.398_942_280_401_432_7;

    fn model_1d(kernel: SymmetricKernel, skewer: SkewingFunction) -> SkewModel {
        SkewModel::new(kernel, skewer).unwrap()
    }

    fn skew_normal_1d() -> SkewModel {
        model_1d(
            SymmetricKernel::gaussian(1, Rule::UnitVariance).unwrap(),
            SkewingFunction::linear(Outer::NormalCdf),
        )
    }

    #[test]
    fn duplication_matrix_k2_literal() {
        let p = duplication_matrix(2);
        let expected = DMatrix::from_row_slice(
            3,
            4,
            &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0],
        );
        assert_eq!(p, expected);
        assert_eq!(duplication_matrix(1), DMatrix::from_row_slice(1, 1, &[1.0]));
    }

    #[test]
    fn duplication_transpose_rebuilds_vec_of_symmetric() {
        let k = 3;
        let p = duplication_matrix(k);
        let m = DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 0.4, -0.2, 0.4, 2.0, 0.7, -0.2, 0.7, 3.0],
        );
        let vech = DVector::from_iterator(6, vech_pairs(k).into_iter().map(|(i, j)| m[(i, j)]));
        let rebuilt = p.transpose() * vech;
        let vec_m = DVector::from_iterator(9, m.iter().copied());
        assert_eq!(rebuilt, vec_m);
    }

    #[test]
    fn stacked_score_of_the_skew_normal() {
        let model = skew_normal_1d();
        let theta = ThetaPoint::symmetric(1);
        let sv = score_at_symmetry(&model, &theta, &[1.0], Part::Full).unwrap();
        // The kernel scale comes out of the standardization solver at
        // 1 +- 1e-12, so the Gaussian blocks are only that accurate.
        assert_relative_eq!(sv.loc_block[0], 1.0, max_relative = 1e-11);
        assert!(sv.scatter_block[0].abs() < 1e-11);
        assert_relative_eq!(sv.skew_block[0], 2.0 * PI_DOT0, max_relative = 1e-15);

        let reduced = score_at_symmetry(&model, &theta, &[1.0], Part::Reduced).unwrap();
        assert_eq!(reduced.scatter_block.len(), 0);
        assert_eq!(reduced.stacked().len(), 2);
    }

    #[test]
    fn score_blocks_have_definite_parity() {
        for model in registry_1d().into_iter().chain(registry_2d()) {
            let k = model.dim();
            let theta = ThetaPoint::symmetric(k);
            let x: Vec<f64> = (0..k).map(|i| 0.7 + 0.3 * i as f64).collect();
            let neg: Vec<f64> = x.iter().map(|v| -v).collect();
            let plus = score_at_symmetry(&model, &theta, &x, Part::Full).unwrap();
            let minus = score_at_symmetry(&model, &theta, &neg, Part::Full).unwrap();
            for i in 0..k {
                assert_eq!(plus.loc_block[i], -minus.loc_block[i], "{}", model.tag());
                assert_eq!(plus.skew_block[i], -minus.skew_block[i], "{}", model.tag());
            }
            for i in 0..k * (k + 1) / 2 {
                assert_eq!(plus.scatter_block[i], minus.scatter_block[i], "{}", model.tag());
            }
        }
    }

    #[test]
    fn scatter_score_pair_sums_in_2d() {
        let model = SkewModel::new(
            SymmetricKernel::gaussian(2, Rule::UnitVariance).unwrap(),
            SkewingFunction::linear(Outer::NormalCdf),
        )
        .unwrap();
        let theta = ThetaPoint::symmetric(2);
        let sv = score_at_symmetry(&model, &theta, &[1.0, 0.0], Part::Full).unwrap();
        // G = z z' - I at z = (1, 0): diag(0, -1); vech pair sums (0, 0, -1),
        // up to the solver's placement of the unit-variance scale.
        assert!(sv.scatter_block[0].abs() < 1e-10);
        assert!(sv.scatter_block[1].abs() < 1e-10);
        assert_relative_eq!(sv.scatter_block[2], -1.0, max_relative = 1e-11);
    }

    #[test]
    fn score_requires_the_symmetry_point() {
        let model = skew_normal_1d();
        let theta = ThetaPoint::symmetric(1)
            .with_delta(DVector::from_row_slice(&[0.5]))
            .unwrap();
        assert!(matches!(
            ScoreAtSymmetry::new(&model, &theta),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn skew_normal_information_is_singular_with_known_null_pair() {
        let model = skew_normal_1d();
        let theta = ThetaPoint::symmetric(1);
        let info = information(&model, &theta, Part::Reduced).unwrap();
        let two_d0 = 2.0 * PI_DOT0;
        assert_relative_eq!(info.matrix[(0, 0)], 1.0, max_relative = 1e-9);
        assert_relative_eq!(info.matrix[(0, 1)], two_d0, max_relative = 1e-9);
        assert_relative_eq!(info.matrix[(1, 1)], 2.0 / std::f64::consts::PI, max_relative = 1e-9);

        let diag = rank_diagnosis(&info);
        assert_eq!(diag.rank, 1);
        assert_eq!(diag.nullity, 1);
        // Raw null vector proportional to (1, -sqrt(pi/2)).
        let ratio = diag.null_basis[(1, 0)] / diag.null_basis[(0, 0)];
        assert_relative_eq!(ratio, -(std::f64::consts::PI / 2.0).sqrt(), max_relative = 1e-6);

        let pair = derived_null_pair(&model, &theta, &info, &diag).unwrap().unwrap();
        // V' phi = W' psi holds with W/V = sqrt(2 pi).
        let ratio = pair.w[(0, 0)] / pair.v[(0, 0)];
        assert_relative_eq!(ratio, (2.0 * std::f64::consts::PI).sqrt(), max_relative = 1e-6);
        assert!(pair.v[(0, 0)] > 0.0);
        assert!(
            pair.residuals[0] <= 10.0 * diag.tolerance * diag.tolerance,
            "residual {} vs tolerance^2 {}",
            pair.residuals[0],
            diag.tolerance * diag.tolerance
        );
    }

    #[test]
    fn laplace_linear_information_is_regular() {
        let model = model_1d(
            SymmetricKernel::laplace(Rule::UnitVariance).unwrap(),
            SkewingFunction::linear(Outer::NormalCdf),
        );
        let theta = ThetaPoint::symmetric(1);
        let info = information(&model, &theta, Part::Reduced).unwrap();
        // I_f = 1/c^2 = 2; the linear skewer always gives 2 d0 int z phi f = 2 d0;
        // 4 d0^2 E z^2 = 2/pi at unit variance.
        assert_relative_eq!(info.matrix[(0, 0)], 2.0, max_relative = 1e-8);
        assert_relative_eq!(info.matrix[(0, 1)], 2.0 * PI_DOT0, max_relative = 1e-8);
        assert_relative_eq!(info.matrix[(1, 1)], 2.0 / std::f64::consts::PI, max_relative = 1e-8);
        let diag = rank_diagnosis(&info);
        assert_eq!(diag.rank, 2);
        assert_eq!(diag.nullity, 0);
        assert!(derived_null_pair(&model, &theta, &info, &diag).unwrap().is_none());
    }

    #[test]
    fn logistic_full_information_closed_forms() {
        let model = model_1d(
            SymmetricKernel::logistic(Rule::UnitVariance).unwrap(),
            SkewingFunction::linear(Outer::NormalCdf),
        );
        let theta = ThetaPoint::symmetric(1);
        let info = information(&model, &theta, Part::Full).unwrap();
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        assert_eq!(info.order(), 3);
        assert_relative_eq!(info.matrix[(0, 0)], pi2 / 9.0, max_relative = 1e-8);
        assert_relative_eq!(info.matrix[(1, 1)], (pi2 + 3.0) / 9.0, max_relative = 1e-8);
        assert_relative_eq!(info.matrix[(0, 2)], 2.0 * PI_DOT0, max_relative = 1e-8);
        assert_relative_eq!(
            info.matrix[(2, 2)],
            4.0 * PI_DOT0 * PI_DOT0,
            max_relative = 1e-8
        );
        // Odd-even zero blocks are written exactly, with zero error.
        assert_eq!(info.matrix[(0, 1)], 0.0);
        assert_eq!(info.matrix[(1, 0)], 0.0);
        assert_eq!(info.matrix[(1, 2)], 0.0);
        assert_eq!(info.matrix[(2, 1)], 0.0);
        assert_eq!(info.err[(0, 1)], 0.0);
        assert_eq!(info.err[(1, 2)], 0.0);
    }

    #[test]
    fn gaussian_sine_information_reference_values() {
        let model = model_1d(
            SymmetricKernel::gaussian(1, Rule::UnitVariance).unwrap(),
            SkewingFunction::sine(Outer::NormalCdf),
        );
        let theta = ThetaPoint::symmetric(1);
        let info = information(&model, &theta, Part::Reduced).unwrap();
        // E[Z sin Z] = E[cos Z] = exp(-1/2); E[sin^2 Z] = (1 - exp(-2)) / 2.
        let g13 = 2.0 * PI_DOT0 * (-0.5f64).exp();
        let g33 = 4.0 * PI_DOT0 * PI_DOT0 * 0.5 * (1.0 - (-2.0f64).exp());
        assert_relative_eq!(info.matrix[(0, 1)], g13, max_relative = 1e-9);
        assert_relative_eq!(info.matrix[(1, 1)], g33, max_relative = 1e-9);
        let det = info.matrix[(0, 0)] * info.matrix[(1, 1)]
            - info.matrix[(0, 1)] * info.matrix[(1, 0)];
        assert!(det > 0.0);
        assert_relative_eq!(det, 0.041_032_001_482_816_77, max_relative = 1e-7);
        assert_eq!(rank_diagnosis(&info).rank, 2);
    }

    #[test]
    fn product_gaussian_logistic_singles_out_one_direction() {
        let model = SkewModel::new(
            SymmetricKernel::product(vec![
                SymmetricKernel::gaussian(1, Rule::UnitVariance).unwrap(),
                SymmetricKernel::logistic(Rule::UnitVariance).unwrap(),
            ])
            .unwrap(),
            SkewingFunction::linear(Outer::NormalCdf),
        )
        .unwrap();
        let theta = ThetaPoint::symmetric(2);
        let info = information(&model, &theta, Part::Reduced).unwrap();
        let diag = rank_diagnosis(&info);

        // Coordinates decouple into 2x2 blocks; the Gaussian block is the
        // exactly singular one, the logistic block is regular.
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let if_logistic = pi2 / 9.0;
        let g13 = 2.0 * PI_DOT0;
        let g33 = 2.0 / std::f64::consts::PI;
        let tr = if_logistic + g33;
        let dt = if_logistic * g33 - g13 * g13;
        let disc = (tr * tr - 4.0 * dt).sqrt();
        let expected = {
            let mut v = vec![1.0 + g33, 0.0, 0.5 * (tr + disc), 0.5 * (tr - disc)];
            v.sort_by(|a, b| b.total_cmp(a));
            v
        };
        for (got, want) in diag.singular_values.iter().zip(&expected) {
            assert_relative_eq!(got, want, max_relative = 1e-7, epsilon = 1e-9);
        }
        assert_eq!(diag.nullity, 1);
        assert_eq!(diag.rank, 3);

        let pair = derived_null_pair(&model, &theta, &info, &diag).unwrap().unwrap();
        assert!(pair.v[(0, 0)] > 0.0);
        assert!(pair.v[(1, 0)].abs() < 1e-5 * pair.v[(0, 0)].abs());
        assert_relative_eq!(
            pair.w[(0, 0)] / pair.v[(0, 0)],
            (2.0 * std::f64::consts::PI).sqrt(),
            max_relative = 1e-5
        );
        assert!(pair.residuals[0] <= 10.0 * diag.tolerance * diag.tolerance);
    }

    #[test]
    fn elliptical_information_matches_student_closed_form() {
        let model = SkewModel::new(
            SymmetricKernel::student(2, 3.0, Rule::UnitVariance).unwrap(),
            SkewingFunction::t_type(3.0, Outer::NormalCdf).unwrap(),
        )
        .unwrap();
        let theta = ThetaPoint::symmetric(2);
        let info = information(&model, &theta, Part::Reduced).unwrap();
        // int phi phi' f = I_f I with per-coordinate information
        // I_f = nu (nu + k) / ((nu + k + 2)(nu - 2)) at unit variance:
        // nu = 3, k = 2 gives 15/7.
        assert_relative_eq!(info.matrix[(0, 0)], 15.0 / 7.0, max_relative = 1e-7);
        assert_relative_eq!(info.matrix[(1, 1)], 15.0 / 7.0, max_relative = 1e-7);
        assert!(info.matrix[(0, 1)].abs() < 1e-9);
        // Positive semidefinite within quadrature error.
        let diag = rank_diagnosis(&info);
        let eig = info.matrix.clone().symmetric_eigen();
        for v in eig.eigenvalues.iter() {
            assert!(*v > -10.0 * info.max_err(), "eigenvalue {v}");
        }
        assert_eq!(diag.rank, 4);
    }

    #[test]
    fn reduced_is_a_submatrix_of_full() {
        let model = model_1d(
            SymmetricKernel::student(1, 5.0, Rule::UnitVariance).unwrap(),
            SkewingFunction::t_type(5.0, Outer::NormalCdf).unwrap(),
        );
        let theta = ThetaPoint::symmetric(1);
        let full = information(&model, &theta, Part::Full).unwrap();
        let reduced = information(&model, &theta, Part::Reduced).unwrap();
        // I_f = nu (nu + 1) / ((nu + 3)(nu - 2)) = 1.25 at nu = 5.
        assert_relative_eq!(reduced.matrix[(0, 0)], 1.25, max_relative = 1e-8);
        for (fi, ri) in [(0usize, 0usize), (2, 1)] {
            for (fj, rj) in [(0usize, 0usize), (2, 1)] {
                let gap = (full.matrix[(fi, fj)] - reduced.matrix[(ri, rj)]).abs();
                let tol = 2.0 * (full.err[(fi, fj)] + reduced.err[(ri, rj)]) + 1e-13;
                assert!(gap <= tol, "entry ({fi},{fj}) gap {gap} tol {tol}");
            }
        }
    }

    #[test]
    fn location_scale_change_moves_blocks_the_known_way() {
        let model = model_1d(
            SymmetricKernel::logistic(Rule::UnitVariance).unwrap(),
            SkewingFunction::sine(Outer::LogisticCdf),
        );
        let base = information(&model, &ThetaPoint::symmetric(1), Part::Reduced).unwrap();
        let sigma = 2.5;
        let shifted = ThetaPoint::new(
            DVector::from_row_slice(&[-3.0]),
            DMatrix::from_row_slice(1, 1, &[sigma]),
            DVector::from_row_slice(&[0.0]),
        )
        .unwrap();
        let moved = information(&model, &shifted, Part::Reduced).unwrap();
        assert_relative_eq!(
            moved.matrix[(0, 0)],
            base.matrix[(0, 0)] / (sigma * sigma),
            max_relative = 1e-10
        );
        assert_relative_eq!(
            moved.matrix[(0, 1)],
            base.matrix[(0, 1)] / sigma,
            max_relative = 1e-10
        );
        assert_relative_eq!(moved.matrix[(1, 1)], base.matrix[(1, 1)], max_relative = 1e-10);
        assert_eq!(rank_diagnosis(&moved).rank, rank_diagnosis(&base).rank);
    }

    #[test]
    fn cauchy_schwarz_binds_the_cross_block() {
        for model in registry_1d() {
            let theta = ThetaPoint::symmetric(1);
            let info = match information(&model, &theta, Part::Reduced) {
                Ok(i) => i,
                // Heavy-tail probes legitimately reject some pairs.
                Err(Error::AssumptionViolation { .. }) => continue,
                Err(e) => panic!("{}: {e}", model.tag()),
            };
            let lhs = info.matrix[(0, 1)] * info.matrix[(0, 1)];
            let rhs = info.matrix[(0, 0)] * info.matrix[(1, 1)];
            assert!(lhs <= rhs + 10.0 * info.max_err(), "{}", model.tag());
        }
    }

    #[test]
    fn monte_carlo_outer_products_agree_with_quadrature() {
        let model = model_1d(
            SymmetricKernel::laplace(Rule::UnitVariance).unwrap(),
            SkewingFunction::linear(Outer::NormalCdf),
        );
        let theta = ThetaPoint::symmetric(1);
        let info = information(&model, &theta, Part::Full).unwrap();
        let score = ScoreAtSymmetry::new(&model, &theta).unwrap();
        let d = score.dim(Part::Full);

        let n = 100_000usize;
        let xs = model.at(&theta).unwrap().sample_matrix(n, 907_211).unwrap();
        let rows: Vec<(Vec<f64>, Vec<f64>)> = exec::map_indexed(n, |i| {
            let mut s = vec![0.0; d];
            score.eval_at(&xs[i], Part::Full, &mut s);
            let mut prod = Vec::with_capacity(d * d);
            let mut sq = Vec::with_capacity(d * d);
            for a in 0..d {
                for b in 0..d {
                    prod.push(s[a] * s[b]);
                    sq.push(s[a] * s[b] * s[a] * s[b]);
                }
            }
            (prod, sq)
        });
        for a in 0..d {
            for b in 0..d {
                let idx = a * d + b;
                let mean = rows.iter().map(|r| r.0[idx]).sum::<f64>() / n as f64;
                let mean_sq = rows.iter().map(|r| r.1[idx]).sum::<f64>() / n as f64;
                let se = ((mean_sq - mean * mean).max(0.0) / n as f64).sqrt();
                let gap = (mean - info.matrix[(a, b)]).abs();
                assert!(
                    gap <= 4.0 * se + 1e-12,
                    "entry ({a},{b}): mc {mean} quad {} se {se}",
                    info.matrix[(a, b)]
                );
            }
        }
    }

    #[test]
    fn cross_blocks_vanish_numerically_not_just_by_fiat() {
        let model = SkewModel::new(
            SymmetricKernel::product(vec![
                SymmetricKernel::laplace(Rule::UnitVariance).unwrap(),
                SymmetricKernel::gaussian(1, Rule::UnitVariance).unwrap(),
            ])
            .unwrap(),
            SkewingFunction::sine(Outer::LogisticCdf),
        )
        .unwrap();
        let theta = ThetaPoint::symmetric(2);
        let score = ScoreAtSymmetry::new(&model, &theta).unwrap();
        let kernel = model.kernel();
        let d = score.dim(Part::Full);
        let k = 2;
        // integral of l1 (x) l2 entries: 2 x 3 block
        let eval = |z: &[f64], out: &mut [f64]| {
            let fz = kernel.log_density(z).exp();
            let mut s = vec![0.0; d];
            score.eval_standardized(z, Part::Full, &mut s);
            let mut idx = 0;
            for i in 0..k {
                for j in k..k + 3 {
                    out[idx] = s[i] * s[j] * fz;
                    idx += 1;
                }
            }
        };
        let f = Integrand::new(2, 6, kernel.decay(), &eval);
        let r = quad::integrate(&f, &Scheme::TensorProduct { level: 61 }).unwrap();
        for v in &r.value {
            assert!(v.abs() < 1e-10, "cross-block entry {v}");
        }
    }

    #[test]
    fn heavy_tail_assumption_gate_names_the_failing_condition() {
        let cauchy_sine = model_1d(
            SymmetricKernel::student(1, 1.0, Rule::MedianOfSquares).unwrap(),
            SkewingFunction::sine(Outer::NormalCdf),
        );
        let theta = ThetaPoint::symmetric(1);
        match information(&cauchy_sine, &theta, Part::Full) {
            Err(Error::AssumptionViolation { assumption, .. }) => {
                assert_eq!(assumption, "(A1+)");
            }
            other => panic!("expected an assumption violation, got {other:?}"),
        }
        match information(&cauchy_sine, &theta, Part::Reduced) {
            Err(Error::AssumptionViolation { assumption, .. }) => {
                assert_eq!(assumption, "(A2+)");
            }
            other => panic!("expected an assumption violation, got {other:?}"),
        }
    }

    #[test]
    fn rank_tolerance_flags_borderline_calls() {
        let diag = rank_from_parts(
            &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 5e-8]),
            1e-12,
        );
        assert_eq!(diag.rank, 1);
        assert_eq!(diag.nullity, 1);
        assert!(diag.indeterminate);

        let diag = rank_from_parts(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.5]), 1e-12);
        assert_eq!(diag.rank, 2);
        assert_eq!(diag.nullity, 0);
        assert!(!diag.indeterminate);

        let diag = rank_from_parts(&DMatrix::identity(5, 5), 0.0);
        assert_eq!(diag.rank, 5);
        assert_eq!(diag.nullity, 0);
    }
}

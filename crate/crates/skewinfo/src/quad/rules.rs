//! Fixed quadrature rules: the 15-point Gauss-Kronrod pair and
//! Gauss-Legendre nodes of arbitrary order.

/// Kronrod abscissae for the 7/15 pair on [-1, 1]. Entry 7 is the center.
pub const XGK15: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_838_258_730,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];

/// Gauss weights; `WG7[j]` pairs with `XGK15[2j + 1]`, the last with the center.
pub const WG7: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Kronrod weights matching `XGK15`.
pub const WGK15: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

/// The 15 Kronrod nodes of the pair on [-1, 1], negative to positive.
pub fn kronrod_nodes() -> [f64; 15] {
    let mut t = [0.0; 15];
    for j in 0..7 {
        t[j] = -XGK15[j];
        t[14 - j] = XGK15[j];
    }
    t[7] = 0.0;
    t
}

/// Apply the 7/15 pair to tabulated integrand values at [`kronrod_nodes`],
/// scaled to an interval of half-width `half`. `values` holds one slice of
/// length `out_dim` per node. Writes the Kronrod estimate into `kronrod`, the
/// per-entry |K15 - G7| deviation into `dev`, and returns the largest
/// deviation (NaN is treated as infinitely bad).
pub fn qk15_combine(values: &[Vec<f64>], half: f64, kronrod: &mut [f64], dev: &mut [f64]) -> f64 {
    let out_dim = kronrod.len();
    debug_assert_eq!(values.len(), 15);
    let mut worst = 0.0f64;
    for e in 0..out_dim {
        let mut k = WGK15[7] * values[7][e];
        let mut g = WG7[3] * values[7][e];
        for j in 0..7 {
            let pair = values[j][e] + values[14 - j][e];
            k += WGK15[j] * pair;
            if j % 2 == 1 {
                g += WG7[j / 2] * pair;
            }
        }
        kronrod[e] = k * half;
        let d = ((k - g) * half).abs();
        dev[e] = d;
        if !(d <= worst) {
            worst = if d.is_nan() { f64::INFINITY } else { d };
        }
    }
    worst
}

/// Gauss-Legendre nodes and weights of order `n` on [-1, 1], computed by
/// Newton iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2, "Gauss-Legendre order must be at least 2");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess for the i-th positive root.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                let (p2, d2) = legendre_and_derivative(n, x);
                x -= p2 / d2;
                dp = d2;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
        let (_, d) = legendre_and_derivative(n, 0.0);
        weights[n / 2] = 2.0 / (d * d);
    }
    (nodes, weights)
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_weights_sum_to_two() {
        for n in [2, 3, 7, 20, 41, 61, 81] {
            let (nodes, weights) = gauss_legendre(n);
            let sum: f64 = weights.iter().sum();
            assert!((sum - 2.0).abs() < 1e-13, "order {n}: weight sum {sum}");
            for w in &nodes[1..] {
                assert!(w > &nodes[0]);
            }
        }
    }

    #[test]
    fn legendre_integrates_monomials_exactly() {
        // order n is exact through degree 2n - 1
        let (nodes, weights) = gauss_legendre(5);
        for deg in [0usize, 2, 4, 6, 8] {
            let got: f64 = nodes
                .iter()
                .zip(&weights)
                .map(|(x, w)| w * x.powi(deg as i32))
                .sum();
            let want = 2.0 / (deg as f64 + 1.0);
            assert!((got - want).abs() < 1e-14, "degree {deg}: {got} vs {want}");
        }
    }

    #[test]
    fn qk15_is_exact_on_low_degree_polynomials() {
        let nodes = kronrod_nodes();
        // integrate 3t^2 over [-1, 1] = 2
        let values: Vec<Vec<f64>> = nodes.iter().map(|t| vec![3.0 * t * t]).collect();
        let mut out = [0.0];
        let mut dev = [0.0];
        let worst = qk15_combine(&values, 1.0, &mut out, &mut dev);
        assert!((out[0] - 2.0).abs() < 1e-14);
        assert!(worst < 1e-14);
    }
}

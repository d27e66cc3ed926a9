//! Output formatting: key/value text blocks, CSV with a metadata
//! comment line, and SVG curve plots. All floats are printed with 17
//! significant digits so round-trips are lossless.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use skewinfo::expmatch::{NaturalSpace, PropositionRecord, SingularityPrediction, Verdict};
use skewinfo::fisher::{InformationMatrix, Part, RankDiagnosis};
use skewinfo::mle::{ExperimentSummary, FitResult};

pub fn sig(x: f64) -> String {
    format!("{x:.16e}")
}

/// First line of every CSV this tool writes.
pub fn csv_comment(seed: Option<u64>, quad: &str) -> String {
    let seed = match seed {
        Some(s) => s.to_string(),
        None => "none".into(),
    };
    format!("# skewinfo {} seed={seed} quad={quad}\n", env!("CARGO_PKG_VERSION"))
}

pub fn matrix_text(m: &DMatrix<f64>) -> String {
    let mut s = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| sig(m[(i, j)])).collect();
        let _ = writeln!(s, "  {}", row.join("  "));
    }
    s
}

/// Chart coordinate names in estimation order: location, then the
/// column-wise upper triangle of the log-scale matrix, then skewness.
pub fn chart_names(k: usize) -> Vec<String> {
    let mut names: Vec<String> = (0..k).map(|i| format!("mu_{i}")).collect();
    for j in 0..k {
        for i in 0..=j {
            names.push(format!("eta_{i}{j}"));
        }
    }
    names.extend((0..k).map(|i| format!("delta_{i}")));
    names
}

pub fn info_text(info: &InformationMatrix) -> String {
    let mut s = String::new();
    let part = match info.part {
        Part::Reduced => "reduced",
        Part::Full => "full",
    };
    let _ = writeln!(s, "part: {part}");
    let _ = writeln!(s, "dimension: {}", info.k);
    let _ = writeln!(s, "order: {}", info.order());
    let _ = writeln!(s, "scheme: {}", info.scheme);
    let _ = writeln!(s, "nodes: {}", info.nodes);
    let _ = writeln!(s, "max_error: {}", sig(info.max_err()));
    let _ = writeln!(s, "matrix:");
    s.push_str(&matrix_text(&info.matrix));
    s
}

pub fn rank_text(diag: &RankDiagnosis) -> String {
    let mut s = String::new();
    let svals: Vec<String> = diag.singular_values.iter().map(|v| sig(*v)).collect();
    let _ = writeln!(s, "singular_values: {}", svals.join(" "));
    let _ = writeln!(s, "tolerance: {}", sig(diag.tolerance));
    let _ = writeln!(s, "rank: {}", diag.rank);
    let _ = writeln!(s, "nullity: {}", diag.nullity);
    let _ = writeln!(s, "indeterminate: {}", diag.indeterminate);
    s
}

/// Matrix CSV plus a `.meta` sidecar holding everything that is not an
/// entry: block layout, scheme, node count, and the error matrix.
pub fn write_info_csv(path: &Path, info: &InformationMatrix) -> Result<(), String> {
    let write = |p: &Path, text: &str| {
        std::fs::write(p, text).map_err(|e| format!("cannot write `{}`: {e}", p.display()))
    };
    let mut csv = csv_comment(None, info.scheme);
    for i in 0..info.order() {
        let row: Vec<String> = (0..info.order()).map(|j| sig(info.matrix[(i, j)])).collect();
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    write(path, &csv)?;

    let mut meta = String::new();
    let _ = writeln!(meta, "order: {}", info.order());
    let _ = writeln!(
        meta,
        "location_rows: {}..{}",
        info.location_range().start,
        info.location_range().end
    );
    let _ = writeln!(
        meta,
        "scatter_rows: {}..{}",
        info.scatter_range().start,
        info.scatter_range().end
    );
    let _ = writeln!(meta, "skew_rows: {}..{}", info.skew_range().start, info.skew_range().end);
    let _ = writeln!(meta, "scheme: {}", info.scheme);
    let _ = writeln!(meta, "nodes: {}", info.nodes);
    let _ = writeln!(meta, "max_error: {}", sig(info.max_err()));
    let _ = writeln!(meta, "error_matrix:");
    meta.push_str(&matrix_text(&info.err));
    write(&path.with_extension("meta"), &meta)
}

pub fn natural_space_text(ns: &NaturalSpace) -> String {
    let mut s = String::new();
    let convergent = ns.probes.iter().filter(|p| p.convergent).count();
    let _ = writeln!(s, "probed: {}", ns.probes.len());
    let _ = writeln!(s, "convergent: {convergent}");
    let _ = writeln!(s, "contiguous: {}", ns.contiguous);
    match ns.interval {
        Some((lo, hi)) => {
            let edge = |v: f64| {
                if v.is_infinite() {
                    if v > 0.0 { "inf".into() } else { "-inf".into() }
                } else {
                    sig(v)
                }
            };
            let _ = writeln!(s, "interval: [{}, {}]", edge(lo), edge(hi));
        }
        None => {
            let _ = writeln!(s, "interval: empty");
        }
    }
    s
}

pub fn prediction_text(pred: &SingularityPrediction) -> String {
    let mut s = String::new();
    match &pred.verdict {
        Verdict::Nonsingular => {
            let _ = writeln!(s, "prediction: nonsingular");
        }
        Verdict::Singular { m } => {
            let _ = writeln!(s, "prediction: singular");
            let _ = writeln!(s, "degeneracy_order: {m}");
        }
    }
    let _ = writeln!(s, "gram_error: {}", sig(pred.gram_err));
    s.push_str(&rank_text(&pred.diagnosis));
    if let Verdict::Singular { .. } = pred.verdict {
        let _ = writeln!(s, "null_residual: {}", sig(pred.residual));
        let v: Vec<String> = pred.v.iter().map(|x| sig(*x)).collect();
        let w: Vec<String> = pred.w.iter().map(|x| sig(*x)).collect();
        let _ = writeln!(s, "direction_v: {}", v.join(" "));
        let _ = writeln!(s, "direction_w: {}", w.join(" "));
    }
    if let Some(a) = pred.a {
        let _ = writeln!(s, "matched_a: {}", sig(a));
    }
    if let Some(m) = &pred.matched {
        let _ = writeln!(s, "matched_kernel: {}", m.kernel.tag());
        let _ = writeln!(s, "matched_sup_log_gap: {}", sig(m.sup_log_gap));
    }
    s
}

pub fn proposition_text(rec: &PropositionRecord) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "checked_nullity: {}", rec.m);
    let _ = writeln!(s, "contexts: {}", rec.contexts.len());
    let _ = writeln!(
        s,
        "grid: {} points, halfwidth {}",
        rec.grid_points,
        sig(rec.grid_halfwidth)
    );
    let worst = rec
        .contexts
        .iter()
        .map(|c| c.max_residual)
        .fold(0.0f64, f64::max);
    if !rec.contexts.is_empty() {
        let _ = writeln!(s, "worst_context_residual: {}", sig(worst));
        let a_lo = rec.contexts.iter().map(|c| c.a).fold(f64::INFINITY, f64::min);
        let a_hi = rec.contexts.iter().map(|c| c.a).fold(f64::NEG_INFINITY, f64::max);
        let _ = writeln!(s, "fitted_a_range: [{}, {}]", sig(a_lo), sig(a_hi));
    }
    if let Some(ok) = rec.construction_nullity_ok {
        let _ = writeln!(s, "construction_nullity_ok: {ok}");
    }
    let _ = writeln!(s, "verified: {}", rec.verified);
    s
}

pub fn fit_text(fit: &FitResult, loglik_label: &str) -> String {
    let mut s = String::new();
    let theta = &fit.theta_hat;
    let k = theta.dim();
    let mu: Vec<String> = theta.mu().iter().map(|x| sig(*x)).collect();
    let delta: Vec<String> = theta.delta().iter().map(|x| sig(*x)).collect();
    let _ = writeln!(s, "converged: {}", fit.converged);
    let _ = writeln!(s, "iterations: {}", fit.iterations);
    let _ = writeln!(s, "{loglik_label}: {}", sig(fit.loglik));
    let _ = writeln!(s, "mu: {}", mu.join(" "));
    let _ = writeln!(s, "sigma_half:");
    s.push_str(&matrix_text(theta.sigma_half()));
    let _ = writeln!(s, "delta: {}", delta.join(" "));
    match &fit.stderr_proxy {
        Some(se) => {
            let names = chart_names(k);
            for (name, v) in names.iter().zip(se) {
                let _ = writeln!(s, "stderr[{name}]: {}", sig(*v));
            }
        }
        None => {
            let _ = writeln!(s, "stderr: unavailable (observed information not positive definite)");
        }
    }
    s
}

pub fn experiment_text(sum: &ExperimentSummary) -> String {
    let mut s = String::new();
    let ok = sum.converged.iter().filter(|c| **c).count();
    let _ = writeln!(s, "replicates: {}", sum.replicates);
    let _ = writeln!(s, "n_per_replicate: {}", sum.n_per_replicate);
    let _ = writeln!(s, "converged: {ok}/{}", sum.replicates);
    let _ = writeln!(s, "sign_split: {}", sig(sum.sign_split));
    let _ = writeln!(s, "bimodality_coefficient: {}", sig(sum.bimodality_coefficient));
    let _ = writeln!(
        s,
        "bimodal: {}",
        if sum.bimodality_coefficient > 5.0 / 9.0 { "yes" } else { "no" }
    );
    s
}

pub fn write_experiment_csv(
    path: &Path,
    sum: &ExperimentSummary,
    seed: u64,
    quad: &str,
) -> Result<(), String> {
    let mut csv = csv_comment(Some(seed), quad);
    csv.push_str("replicate,delta_hat,converged\n");
    for (r, (dh, ok)) in sum.delta_hats.iter().zip(&sum.converged).enumerate() {
        let _ = writeln!(csv, "{r},{},{}", sig(*dh), ok);
    }
    std::fs::write(path, csv).map_err(|e| format!("cannot write `{}`: {e}", path.display()))
}

pub fn write_samples_csv(
    path: &Path,
    rows: &[Vec<f64>],
    seed: u64,
    quad: &str,
) -> Result<(), String> {
    let k = rows.first().map_or(0, Vec::len);
    let mut csv = csv_comment(Some(seed), quad);
    let header: Vec<String> = (0..k).map(|j| format!("x{j}")).collect();
    csv.push_str(&header.join(","));
    csv.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|x| sig(*x)).collect();
        csv.push_str(&cells.join(","));
        csv.push('\n');
    }
    std::fs::write(path, csv).map_err(|e| format!("cannot write `{}`: {e}", path.display()))
}

pub fn write_curves_csv(
    path: &Path,
    xs: &[f64],
    deltas: &[f64],
    columns: &[Vec<f64>],
    quad: &str,
) -> Result<(), String> {
    let mut csv = csv_comment(None, quad);
    let mut header = vec!["x".to_string()];
    header.extend(deltas.iter().map(|d| format!("pdf_delta_{d}")));
    csv.push_str(&header.join(","));
    csv.push('\n');
    for (i, x) in xs.iter().enumerate() {
        let mut cells = vec![sig(*x)];
        cells.extend(columns.iter().map(|col| sig(col[i])));
        csv.push_str(&cells.join(","));
        csv.push('\n');
    }
    std::fs::write(path, csv).map_err(|e| format!("cannot write `{}`: {e}", path.display()))
}

/// 800x600 plot with one gray polyline per curve, darkest first.
pub fn write_curves_svg(
    path: &Path,
    xs: &[f64],
    deltas: &[f64],
    columns: &[Vec<f64>],
) -> Result<(), String> {
    const W: f64 = 800.0;
    const H: f64 = 600.0;
    const ML: f64 = 60.0;
    const MR: f64 = 20.0;
    const MT: f64 = 30.0;
    const MB: f64 = 40.0;

    let x_lo = xs.first().copied().unwrap_or(0.0);
    let x_hi = xs.last().copied().unwrap_or(1.0);
    let y_hi = columns
        .iter()
        .flat_map(|c| c.iter())
        .fold(0.0f64, |m, v| m.max(*v))
        .max(1e-300)
        * 1.05;
    let px = |x: f64| ML + (x - x_lo) / (x_hi - x_lo) * (W - ML - MR);
    let py = |y: f64| H - MB - y / y_hi * (H - MT - MB);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\">"
    );
    let _ = writeln!(svg, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
    let _ = writeln!(
        svg,
        "<line x1=\"{ML}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        H - MB,
        W - MR,
        H - MB
    );
    let _ = writeln!(
        svg,
        "<line x1=\"{ML}\" y1=\"{MT}\" x2=\"{ML}\" y2=\"{}\" stroke=\"black\"/>",
        H - MB
    );
    let _ = writeln!(
        svg,
        "<text x=\"{ML}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{x_lo}</text>",
        H - MB + 16.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{x_hi}</text>",
        W - MR,
        H - MB + 16.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"end\">{y_hi:.3}</text>",
        ML - 6.0,
        MT + 4.0
    );

    let span = (columns.len().max(2) - 1) as f64;
    for (i, col) in columns.iter().enumerate() {
        let level = (i as f64 / span * 170.0).round() as u8;
        let points: Vec<String> = xs
            .iter()
            .zip(col)
            .map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y)))
            .collect();
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"rgb({level},{level},{level})\" \
             stroke-width=\"1.5\" points=\"{}\"/>",
            points.join(" ")
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"rgb({level},{level},{level})\">\
             delta = {}</text>",
            W - MR - 110.0,
            MT + 16.0 * (i as f64 + 1.0),
            deltas[i]
        );
    }
    let _ = writeln!(svg, "</svg>");
    std::fs::write(path, svg).map_err(|e| format!("cannot write `{}`: {e}", path.display()))
}

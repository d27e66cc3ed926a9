//! `skewinfo`: command-line front end for the skew-symmetric toolkit.
//!
//! Exit codes: 0 success, 2 spec parse or validation error, 3 a
//! verification check failed, 4 an integrability assumption is violated
//! (the message names it), 1 internal numerical failure.

mod report;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use nalgebra::DVector;

use skewinfo::density::ThetaPoint;
use skewinfo::expmatch::{self, Verdict};
use skewinfo::fisher::{self, Part};
use skewinfo::models::SymmetricKernel;
use skewinfo::{exec, mle};

#[derive(Parser)]
#[command(name = "skewinfo", version, about = "Fisher information of skew-symmetric families")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fisher information and rank report at the spec's parameter point.
    Info {
        spec: PathBuf,
        /// Full parameterization (location, scatter, skewness) instead of
        /// the reduced (location, skewness) one.
        #[arg(long)]
        full: bool,
        /// Also write the matrix as CSV (a `.meta` sidecar carries scheme,
        /// node count, and error estimates).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict singularity from the score Gram matrix, then verify the
    /// prediction against the computed information rank.
    Predict { spec: PathBuf },
    /// Map the normalizable exponential family of the spec's skewer and
    /// solve for the degenerate member, writing it as a new spec.
    Match {
        spec: PathBuf,
        #[arg(long, default_value = "matched.toml")]
        out: PathBuf,
    },
    /// Density curves over x in [-4, 4] for several skewness values.
    Plot {
        spec: PathBuf,
        /// Comma-separated skewness values, one curve each.
        #[arg(long, default_value = "0,0.5,2,6")]
        deltas: String,
        #[arg(long)]
        out: PathBuf,
        /// Also render the curves as an SVG plot.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Draw exact samples at the spec's parameter point.
    Sample {
        spec: PathBuf,
        #[arg(short)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Maximum-likelihood fit to CSV data (rows are observations).
    Fit {
        spec: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Replicated fits at the symmetric point: distribution of the
    /// skewness estimate.
    Experiment {
        spec: PathBuf,
        #[arg(short)]
        n: usize,
        #[arg(short = 'R', long)]
        replicates: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    /// Exit 2: the spec or another input is malformed or inconsistent.
    Input(String),
    /// Exit 3: a verification check disagreed with the prediction.
    Verification(String),
    /// Exit 4: an integrability assumption is violated.
    Assumption(String),
    /// Exit 1: internal numerical failure.
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Internal(_) => 1,
            Failure::Input(_) => 2,
            Failure::Verification(_) => 3,
            Failure::Assumption(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m)
            | Failure::Verification(m)
            | Failure::Assumption(m)
            | Failure::Internal(m) => m,
        }
    }
}

impl From<skewinfo::Error> for Failure {
    fn from(e: skewinfo::Error) -> Self {
        use skewinfo::Error::*;
        match e {
            AssumptionViolation { .. } => Failure::Assumption(e.to_string()),
            InvalidParameter { .. }
            | DimensionMismatch { .. }
            | StandardizationInfeasible { .. }
            | Capability(_)
            | Contract(_)
            | InsufficientData { .. }
            | DegenerateData(_) => Failure::Input(e.to_string()),
            QuadratureBudget { .. } | AmbiguousRoot { .. } => Failure::Internal(e.to_string()),
            _ => Failure::Internal(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    if let Err(f) = apply_thread_cap() {
        eprintln!("error: {}", f.message());
        return ExitCode::from(f.code());
    }
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn apply_thread_cap() -> Result<(), Failure> {
    match std::env::var("SKEWINFO_THREADS") {
        Err(_) => Ok(()),
        Ok(raw) => {
            let n: usize = raw.parse().map_err(|_| {
                Failure::Input(format!("SKEWINFO_THREADS: `{raw}` is not a thread count"))
            })?;
            if n == 0 {
                return Err(Failure::Input(
                    "SKEWINFO_THREADS: thread count must be at least 1".into(),
                ));
            }
            exec::limit_threads(n);
            Ok(())
        }
    }
}

fn run(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Info { spec, full, out } => cmd_info(&spec, full, out.as_deref()),
        Cmd::Predict { spec } => cmd_predict(&spec),
        Cmd::Match { spec, out } => cmd_match(&spec, &out),
        Cmd::Plot { spec, deltas, out, svg } => cmd_plot(&spec, &deltas, &out, svg.as_deref()),
        Cmd::Sample { spec, n, seed, out } => cmd_sample(&spec, n, seed, &out),
        Cmd::Fit { spec, data } => cmd_fit(&spec, &data),
        Cmd::Experiment { spec, n, replicates, seed, out } => {
            cmd_experiment(&spec, n, replicates, seed, &out)
        }
    }
}

fn load(path: &std::path::Path) -> Result<spec::Loaded, Failure> {
    spec::load(path).map_err(Failure::Input)
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn cmd_info(path: &std::path::Path, full: bool, out: Option<&std::path::Path>) -> Result<(), Failure> {
    let loaded = load(path)?;
    let part = if full { Part::Full } else { Part::Reduced };
    let info = fisher::information_with(&loaded.model, &loaded.theta, part, loaded.scheme.as_ref())?;
    let diag = fisher::rank_diagnosis(&info);
    print!("model: {}\n{}{}", loaded.model.tag(), report::info_text(&info), report::rank_text(&diag));
    if let Some(csv) = out {
        report::write_info_csv(csv, &info).map_err(Failure::Internal)?;
        println!("wrote: {}", csv.display());
    }
    Ok(())
}

fn cmd_predict(path: &std::path::Path) -> Result<(), Failure> {
    let loaded = load(path)?;
    let model = &loaded.model;
    let pred = expmatch::predict_singularity(model.kernel(), model.skewer())?;
    print!("model: {}\n{}", model.tag(), report::prediction_text(&pred));

    // Independent check: the actual information rank at the symmetric point.
    let theta0 = ThetaPoint::symmetric(model.dim());
    let info = fisher::information_with(model, &theta0, Part::Reduced, loaded.scheme.as_ref())?;
    let diag = fisher::rank_diagnosis(&info);
    println!("observed:");
    print!("{}", report::rank_text(&diag));

    let observed = if diag.nullity == 0 {
        Verdict::Nonsingular
    } else {
        Verdict::Singular { m: diag.nullity }
    };
    if diag.indeterminate {
        println!("verdict_comparison: indeterminate");
    } else if observed == pred.verdict {
        println!("verdict_comparison: agree");
    } else {
        return Err(Failure::Verification(format!(
            "prediction {:?} disagrees with observed information rank {} (nullity {})",
            pred.verdict, diag.rank, diag.nullity
        )));
    }

    let record = expmatch::verify_proposition(model.kernel(), model.skewer(), &diag)?;
    print!("{}", report::proposition_text(&record));
    if !record.verified {
        return Err(Failure::Verification(
            "structure verification failed: some conditioning context does not fit \
             log f = a * (-Psi) + const within tolerance"
                .into(),
        ));
    }
    Ok(())
}

fn cmd_match(path: &std::path::Path, out: &std::path::Path) -> Result<(), Failure> {
    let loaded = load(path)?;
    if loaded.model.dim() != 1 {
        return Err(Failure::Input(format!(
            "match works on one-dimensional skewers; this model has dimension {}",
            loaded.model.dim()
        )));
    }
    let skewer = loaded.model.skewer();
    let family = expmatch::ExpFamily::new(skewer, 1)?;
    let space = family.natural_space(&expmatch::default_a_grid())?;
    print!("skewer: {}\n{}", skewer.tag(), report::natural_space_text(&space));

    match expmatch::solve_a(skewer, loaded.rule)? {
        None => {
            println!(
                "no degenerate kernel exists for this skewer under standardization `{}`",
                loaded.rule
            );
        }
        Some(a) => {
            // Confirms the solved member is normalizable before writing it.
            SymmetricKernel::exp_of_neg_psi(a, Arc::new(skewer.clone()), loaded.rule)?;
            println!("a: {}", report::sig(a));
            let text = spec::matched_spec_text(a, loaded.rule, &loaded.file.skewer);
            std::fs::write(out, text)
                .map_err(|e| Failure::Internal(format!("cannot write `{}`: {e}", out.display())))?;
            println!("wrote: {}", out.display());
        }
    }
    Ok(())
}

fn cmd_plot(
    path: &std::path::Path,
    deltas_raw: &str,
    out: &std::path::Path,
    svg: Option<&std::path::Path>,
) -> Result<(), Failure> {
    let loaded = load(path)?;
    if loaded.model.dim() != 1 {
        return Err(Failure::Input(format!(
            "plot works on one-dimensional models; this model has dimension {}",
            loaded.model.dim()
        )));
    }
    let deltas: Vec<f64> = deltas_raw
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Failure::Input(format!("--deltas: `{s}` is not a number")))
        })
        .collect::<Result<_, _>>()?;
    if deltas.is_empty() {
        return Err(Failure::Input("--deltas: need at least one value".into()));
    }

    let xs = linspace(-4.0, 4.0, 401);
    let mut columns = Vec::with_capacity(deltas.len());
    for d in &deltas {
        let theta = loaded
            .theta
            .with_delta(DVector::from_row_slice(&[*d]))
            .map_err(|e| Failure::Input(format!("--deltas: {e}")))?;
        let frozen = loaded.model.at(&theta)?;
        columns.push(xs.iter().map(|x| frozen.pdf(&[*x])).collect::<Vec<f64>>());
    }
    report::write_curves_csv(out, &xs, &deltas, &columns, "none").map_err(Failure::Internal)?;
    println!("wrote: {}", out.display());
    if let Some(svg_path) = svg {
        report::write_curves_svg(svg_path, &xs, &deltas, &columns).map_err(Failure::Internal)?;
        println!("wrote: {}", svg_path.display());
    }
    Ok(())
}

fn cmd_sample(path: &std::path::Path, n: usize, seed: u64, out: &std::path::Path) -> Result<(), Failure> {
    let loaded = load(path)?;
    let frozen = loaded.model.at(&loaded.theta)?;
    let rows = frozen.sample_matrix(n, seed)?;
    report::write_samples_csv(out, &rows, seed, "none").map_err(Failure::Internal)?;
    println!("wrote: {}", out.display());
    Ok(())
}

/// Rows are observations; `#` lines and a non-numeric first row (a
/// header) are skipped.
fn read_data_csv(path: &std::path::Path, k: usize) -> Result<Vec<Vec<f64>>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Input(format!("cannot read data file `{}`: {e}", path.display())))?;
    let mut rows = Vec::new();
    let mut first_data_line = true;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed: Result<Vec<f64>, _> =
            line.split(',').map(|c| c.trim().parse::<f64>()).collect();
        match parsed {
            Err(_) if first_data_line => {
                first_data_line = false;
                continue;
            }
            Err(_) => {
                return Err(Failure::Input(format!(
                    "data file `{}` line {}: not a numeric row",
                    path.display(),
                    lineno + 1
                )));
            }
            Ok(row) => {
                if row.len() != k {
                    return Err(Failure::Input(format!(
                        "data file `{}` line {}: expected {k} columns, got {}",
                        path.display(),
                        lineno + 1,
                        row.len()
                    )));
                }
                first_data_line = false;
                rows.push(row);
            }
        }
    }
    if rows.is_empty() {
        return Err(Failure::Input(format!(
            "data file `{}` contains no numeric rows",
            path.display()
        )));
    }
    Ok(rows)
}

fn cmd_fit(path: &std::path::Path, data_path: &std::path::Path) -> Result<(), Failure> {
    let loaded = load(path)?;
    let data = read_data_csv(data_path, loaded.model.dim())?;
    let init = loaded.file.theta.as_ref().map(|_| &loaded.theta);
    let fit = mle::fit(&loaded.model, &data, init)?;
    print!(
        "model: {}\nobservations: {}\n{}",
        loaded.model.tag(),
        data.len(),
        report::fit_text(&fit, "loglik")
    );
    Ok(())
}

fn cmd_experiment(
    path: &std::path::Path,
    n: usize,
    replicates: usize,
    seed: u64,
    out: &std::path::Path,
) -> Result<(), Failure> {
    let loaded = load(path)?;
    let summary = mle::symmetry_experiment(&loaded.model, &loaded.theta, n, replicates, seed)?;
    report::write_experiment_csv(out, &summary, seed, "none").map_err(Failure::Internal)?;
    print!("model: {}\n{}", loaded.model.tag(), report::experiment_text(&summary));
    println!("wrote: {}", out.display());
    Ok(())
}

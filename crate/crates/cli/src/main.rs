//! przk — verify, extract, recurse, perturb, and numerically solve
//! Przanowski descriptions of quaternion-Kähler four-manifolds.
//!
//! Exit status: 0 when every check passes, 1 when a check fails (the
//! summary names it), 2 for usage and load errors.

mod checks;
mod report;

use anyhow::Result;
use checks::{
    extract_checks, lax_checks, load_manifold, perturb_checks, recursion_checks,
    resolve_solve_target, solve_run, study_checks, verify_checks, ExtractOpts, LaxOpts,
    PerturbOpts, RecursionOpts, SolveOpts, SolveTarget, VerifyOpts,
};
use clap::{Parser, Subcommand};
use przanowski::expr::ManifoldSpec;
use przanowski::solver::{GridField, GridSpec, SolverFamily};
use przanowski::twistor::TwistorLineFamily;
use report::RunReport;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "przk", version, about = "Przanowski geometry verification and solving")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Seed for every sampled quantity (recorded in the report).
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,

    /// Worker threads for the parallel folds (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Write the JSON report here; `solve` also writes the solution grid
    /// as CSV beside it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Pointwise checks: Przanowski residual, curvature decomposition,
    /// scalar curvature, Lax commutator, conformal Laplacian.
    Verify {
        /// Builtin name (s4, h4, cp2, bergmann) or file:path.json.
        #[arg(long, default_value = "h4")]
        manifold: String,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        /// Relative tolerance for the Przanowski residual.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Lax-pair checks: on-shell commutator, off-shell visibility of a
    /// bump, closed-form reconstruction.
    Lax {
        #[arg(long, default_value = "h4")]
        manifold: String,
        #[arg(long, default_value_t = 50)]
        samples: usize,
        /// Amplitude of the w·z bump for the visibility check.
        #[arg(long, default_value_t = 1e-2)]
        noise: f64,
    },
    /// Twistor-line extraction of K against a target manifold.
    Extract {
        /// Line family: s4, h4, cp2, bergmann (defaults to the manifold's
        /// name, or to h4 when neither flag is given).
        #[arg(long)]
        family: Option<String>,
        /// Comparison target; defaults to the family's own builtin.
        #[arg(long)]
        manifold: Option<String>,
        #[arg(long, default_value_t = 100)]
        samples: usize,
    },
    /// Series recursion checks: step relations, weighted integrability,
    /// one integrated step against the closed-form continuation.
    Recursion {
        #[arg(long, default_value = "s4")]
        manifold: String,
        #[arg(long, default_value_t = 50)]
        samples: usize,
    },
    /// Perturbation machinery: contour-integral mode extraction and
    /// linearised-operator annihilation of the gauge kernel.
    Perturb {
        #[arg(long, default_value = "h4")]
        manifold: String,
        #[arg(long, default_value_t = 20)]
        samples: usize,
        /// Radius of the extraction contour.
        #[arg(long, default_value_t = 1.0)]
        contour_radius: f64,
        /// Quadrature nodes on the contour.
        #[arg(long, default_value_t = 64)]
        order: usize,
    },
    /// Newton-solve the symmetry-reduced equation from a noisy start.
    Solve {
        /// Reduced family: h4, s4, cp2-slice.
        #[arg(long)]
        family: Option<String>,
        /// Builtin or file:path.json with lambda = ±1, solved over the
        /// matching family's default box.
        #[arg(long)]
        manifold: Option<String>,
        /// Nodes per grid axis.
        #[arg(long, default_value_t = 17)]
        grid: usize,
        /// Uniform noise amplitude on the interior start values.
        #[arg(long, default_value_t = 1e-2)]
        noise: f64,
        /// Residual max-norm target.
        #[arg(long, default_value_t = 1e-11)]
        tol: f64,
    },
    /// Aggregate report: every pipeline on every builtin plus the
    /// convergence study, or all pipelines on one --manifold.
    Report {
        #[arg(long)]
        manifold: Option<String>,
        /// Sample count per pointwise pipeline.
        #[arg(long, default_value_t = 50)]
        samples: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(err) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("przk: configuring {jobs} worker threads failed: {err}");
            return ExitCode::from(2);
        }
    }

    let started = Instant::now();
    match run(&cli) {
        Ok(mut outcome) => {
            outcome.report.wall_time_s = started.elapsed().as_secs_f64();
            outcome.report.print_summary();
            if let Err(err) = write_outputs(&cli, &outcome) {
                eprintln!("przk: writing outputs failed: {err:#}");
                return ExitCode::from(2);
            }
            if outcome.report.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(err) => {
            eprintln!("przk: {err:#}");
            ExitCode::from(2)
        }
    }
}

struct Outcome {
    report: RunReport,
    solution: Option<(GridSpec, GridField)>,
}

impl Outcome {
    fn plain(report: RunReport) -> Outcome {
        Outcome { report, solution: None }
    }
}

fn write_outputs(cli: &Cli, outcome: &Outcome) -> Result<()> {
    let Some(out) = &cli.out else {
        return Ok(());
    };
    outcome.report.write_json(out)?;
    if let Some((grid, field)) = &outcome.solution {
        let csv = out.with_extension("csv");
        write_solution_csv(&csv, grid, field)?;
        println!("wrote {} and {}", out.display(), csv.display());
    } else {
        println!("wrote {}", out.display());
    }
    Ok(())
}

/// Node-by-node solution dump: reduced coordinates and the field value,
/// row-major with i along ρ.
fn write_solution_csv(path: &Path, grid: &GridSpec, field: &GridField) -> Result<()> {
    use std::fmt::Write as _;
    let mut text = String::from("rho,sigma,K\n");
    for i in 0..grid.n {
        for j in 0..grid.n {
            let (rho, sigma) = grid.node(i, j);
            writeln!(text, "{rho},{sigma},{}", field.at(i, j))?;
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn run(cli: &Cli) -> Result<Outcome> {
    let seed = cli.seed;
    match &cli.command {
        Command::Verify { manifold, samples, tol } => {
            let spec = load_manifold(manifold)?;
            let opts = VerifyOpts { samples: *samples, seed, tol: *tol };
            let checks = verify_checks(&spec, &opts)?;
            Ok(Outcome::plain(RunReport::new("verify", &spec.name, seed, checks)))
        }
        Command::Lax { manifold, samples, noise } => {
            let spec = load_manifold(manifold)?;
            let opts = LaxOpts { samples: *samples, seed, noise: *noise };
            let checks = lax_checks(&spec, &opts)?;
            Ok(Outcome::plain(RunReport::new("lax", &spec.name, seed, checks)))
        }
        Command::Extract { family, manifold, samples } => {
            let (family, target) = resolve_extract_target(family.as_deref(), manifold.as_deref())?;
            let opts = ExtractOpts { samples: *samples, seed };
            let checks = extract_checks(&family, &target, &opts)?;
            let label = format!("{}->{}", family.name, target.name);
            Ok(Outcome::plain(RunReport::new("extract", &label, seed, checks)))
        }
        Command::Recursion { manifold, samples } => {
            let spec = load_manifold(manifold)?;
            let opts = RecursionOpts { samples: *samples, seed };
            let checks = recursion_checks(&spec, &opts)?;
            Ok(Outcome::plain(RunReport::new("recursion", &spec.name, seed, checks)))
        }
        Command::Perturb { manifold, samples, contour_radius, order } => {
            let spec = load_manifold(manifold)?;
            let opts = PerturbOpts {
                samples: *samples,
                seed,
                radius: *contour_radius,
                order: *order,
            };
            let checks = perturb_checks(&spec, &opts)?;
            Ok(Outcome::plain(RunReport::new("perturb", &spec.name, seed, checks)))
        }
        Command::Solve { family, manifold, grid, noise, tol } => {
            let target = resolve_solve_target(family.as_deref(), manifold.as_deref())?;
            let opts = SolveOpts { grid: *grid, noise: *noise, seed, tol: *tol };
            let outcome = solve_run(&target, &opts)?;
            let mut report = RunReport::new("solve", &target.label(), seed, outcome.checks);
            report.newton = outcome.newton;
            Ok(Outcome { report, solution: outcome.solution })
        }
        Command::Report { manifold, samples } => aggregate_report(manifold.as_deref(), *samples, seed),
    }
}

/// `extract` accepts a family, a manifold, or both; a lone builtin manifold
/// doubles as the family of the same name, while a file manifold is
/// compared against the sign-matched round family unless one is named.
fn resolve_extract_target(
    family: Option<&str>,
    manifold: Option<&str>,
) -> Result<(TwistorLineFamily, ManifoldSpec)> {
    match (family, manifold) {
        (Some(f), Some(m)) => Ok((TwistorLineFamily::builtin(f)?, load_manifold(m)?)),
        (Some(f), None) => Ok((TwistorLineFamily::builtin(f)?, ManifoldSpec::builtin(f)?)),
        (None, Some(m)) => {
            let target = load_manifold(m)?;
            let name = if !m.starts_with("file:") {
                target.name.clone()
            } else if target.lambda > 0.0 {
                "h4".to_string()
            } else {
                "s4".to_string()
            };
            Ok((TwistorLineFamily::builtin(&name)?, target))
        }
        (None, None) => Ok((TwistorLineFamily::builtin("h4")?, ManifoldSpec::builtin("h4")?)),
    }
}

const BUILTINS: [&str; 4] = ["s4", "h4", "cp2", "bergmann"];

/// The aggregate report: every pipeline over every builtin (or over the one
/// named manifold), each check prefixed with its input's name, plus the
/// Newton solve and the nested-grid convergence study.
fn aggregate_report(manifold: Option<&str>, samples: usize, seed: u64) -> Result<Outcome> {
    let mut checks = Vec::new();

    let targets: Vec<ManifoldSpec> = match manifold {
        Some(m) => vec![load_manifold(m)?],
        None => BUILTINS
            .iter()
            .map(|name| Ok(ManifoldSpec::builtin(name)?))
            .collect::<Result<_>>()?,
    };

    for spec in &targets {
        let label = spec.name.as_str();
        let verify = verify_checks(spec, &VerifyOpts { samples, seed, tol: 1e-9 })?;
        checks.extend(verify.into_iter().map(|c| c.prefixed(label)));
        let lax = lax_checks(spec, &LaxOpts { samples: samples.min(50), seed, noise: 1e-2 })?;
        checks.extend(lax.into_iter().map(|c| c.prefixed(label)));
        let perturb = perturb_checks(
            spec,
            &PerturbOpts { samples: samples.min(20), seed, radius: 1.0, order: 64 },
        )?;
        checks.extend(perturb.into_iter().map(|c| c.prefixed(label)));
    }

    let (newton, solution, studies) = match manifold {
        Some(_) => {
            let spec = &targets[0];
            let label = spec.name.as_str();
            let rec = recursion_checks(spec, &RecursionOpts { samples: samples.min(50), seed })?;
            checks.extend(rec.into_iter().map(|c| c.prefixed(label)));

            let (family, target) = resolve_extract_target(None, manifold)?;
            let ext = extract_checks(&family, &target, &ExtractOpts { samples: samples.min(100), seed })?;
            checks.extend(ext.into_iter().map(|c| c.prefixed(label)));

            let target = resolve_solve_target(None, manifold)?;
            let solve = solve_run(&target, &SolveOpts { grid: 17, noise: 1e-2, seed, tol: 1e-11 })?;
            checks.extend(solve.checks.into_iter().map(|c| c.prefixed(label)));
            (solve.newton, solve.solution, None)
        }
        None => {
            for name in ["s4", "h4"] {
                let spec = ManifoldSpec::builtin(name)?;
                let rec = recursion_checks(&spec, &RecursionOpts { samples: samples.min(50), seed })?;
                checks.extend(rec.into_iter().map(|c| c.prefixed(name)));
            }
            for name in BUILTINS {
                let family = TwistorLineFamily::builtin(name)?;
                let target = ManifoldSpec::builtin(name)?;
                let ext = extract_checks(&family, &target, &ExtractOpts { samples: samples.min(100), seed })?;
                checks.extend(ext.into_iter().map(|c| c.prefixed(name)));
            }

            let target = SolveTarget::Family(SolverFamily::H4);
            let solve = solve_run(&target, &SolveOpts { grid: 17, noise: 1e-2, seed, tol: 1e-11 })?;
            checks.extend(solve.checks.into_iter().map(|c| c.prefixed("h4")));

            let families = [SolverFamily::H4, SolverFamily::S4, SolverFamily::Cp2Slice];
            let (study, tables) = study_checks(&families, &[9, 17, 33])?;
            checks.extend(study);
            (solve.newton, solve.solution, Some(tables))
        }
    };

    let label = manifold.unwrap_or("builtins");
    let mut report = RunReport::new("report", label, seed, checks);
    report.newton = newton;
    report.studies = studies;
    Ok(Outcome { report, solution })
}

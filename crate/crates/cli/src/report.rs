//! Run reports: one schema shared by every subcommand, printed as a summary
//! table and optionally written as JSON.

use przanowski::solver::{NewtonReport, StudyTable};
use serde::Serialize;
use std::path::Path;

/// One verified quantity: a measured extreme against its tolerance.  `pass`
/// encodes the check's own direction — most checks need the measure below
/// the tolerance, visibility checks need it above a floor.
#[derive(Clone, Debug, Serialize)]
pub struct CheckLine {
    pub name: String,
    pub max_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckLine {
    /// A check that passes when the measured value stays below `tolerance`.
    /// Non-finite measurements fail.
    pub fn below(name: impl Into<String>, value: f64, tolerance: f64) -> CheckLine {
        CheckLine {
            name: name.into(),
            max_residual: value,
            tolerance,
            pass: value.is_finite() && value < tolerance,
        }
    }

    /// A check that passes when the measured value stays above `floor` —
    /// used where the pipeline must *see* an effect (a perturbed commutator)
    /// rather than bound an error.
    pub fn above(name: impl Into<String>, value: f64, floor: f64) -> CheckLine {
        CheckLine {
            name: name.into(),
            max_residual: value,
            tolerance: floor,
            pass: value.is_finite() && value > floor,
        }
    }

    /// Prefixes the check name with a manifold or family label, for
    /// aggregate reports that run the same pipeline on several inputs.
    pub fn prefixed(mut self, label: &str) -> CheckLine {
        self.name = format!("{label}:{}", self.name);
        self
    }
}

/// Everything one invocation measured.  The wall time is the last field so
/// that reports from identical arguments and seed are byte-identical up to
/// that one line.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub command: String,
    pub spec: String,
    pub seed: u64,
    pub checks: Vec<CheckLine>,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub newton: Option<NewtonReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub studies: Option<Vec<StudyTable>>,
    pub wall_time_s: f64,
}

impl RunReport {
    pub fn new(command: &str, spec: &str, seed: u64, checks: Vec<CheckLine>) -> RunReport {
        let pass = checks.iter().all(|c| c.pass);
        RunReport {
            command: command.to_string(),
            spec: spec.to_string(),
            seed,
            checks,
            pass,
            newton: None,
            studies: None,
            wall_time_s: 0.0,
        }
    }

    pub fn failing(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.as_str())
            .collect()
    }

    /// Human-readable summary on stdout: one line per check, then the
    /// verdict naming any failing checks.
    pub fn print_summary(&self) {
        println!(
            "{} {} (seed {}, {:.2}s)",
            self.command, self.spec, self.seed, self.wall_time_s
        );
        let width = self
            .checks
            .iter()
            .map(|c| c.name.len())
            .max()
            .unwrap_or(4)
            .max(4);
        println!("  {:width$}  {:>12}  {:>10}  result", "name", "measured", "tolerance");
        for c in &self.checks {
            println!(
                "  {:width$}  {:>12.4e}  {:>10.1e}  {}",
                c.name,
                c.max_residual,
                c.tolerance,
                if c.pass { "pass" } else { "FAIL" }
            );
        }
        if let Some(newton) = &self.newton {
            println!(
                "  newton: {} iterations, residual trace {:?}, deviation {:.3e}",
                newton.iterations, newton.residuals, newton.final_deviation
            );
        }
        if let Some(studies) = &self.studies {
            for table in studies {
                let fmt =
                    |o: Option<f64>| o.map_or("n/a".to_string(), |v| format!("{v:.3}"));
                println!(
                    "  study {}: deviation order {}, residual order {}",
                    table.family,
                    fmt(table.deviation_order),
                    fmt(table.residual_order),
                );
                for row in &table.rows {
                    println!(
                        "    n={:<3} h={:.4e} residual={:.4e} deviation={:.4e} ({} iterations)",
                        row.n, row.h, row.exact_residual, row.max_deviation, row.iterations
                    );
                }
            }
        }
        if self.pass {
            println!("overall: PASS");
        } else {
            println!("overall: FAIL ({})", self.failing().join(", "));
        }
    }

    pub fn write_json(&self, path: &Path) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

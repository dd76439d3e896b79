use std::path::{Path, PathBuf};

use anyhow::Context;
use netcoord_core::glm::table::{write_coefficient_table, ModelSpec, Table};
use netcoord_core::glm::{fit, Family, FitOptions, DEFAULT_PRIOR_SD, DEFAULT_SUBJECT_SD};

use crate::output::write_atomic;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Comma-delimited table with a header row.
    #[arg(long)]
    table: PathBuf,
    /// beta, gaussian, logistic or hurdle.
    #[arg(long, value_parser = parse_family)]
    family: Family,
    /// Response column.
    #[arg(long, short = 'y')]
    response: String,
    /// Predictor columns, repeatable or comma separated.
    #[arg(long = "predictor", short = 'x', value_delimiter = ',')]
    predictors: Vec<String>,
    /// Product term `a:b`, repeatable.
    #[arg(long = "interaction", value_parser = parse_interaction)]
    interactions: Vec<(String, String)>,
    /// Subject id column for the hurdle model's intercepts.
    #[arg(long)]
    subject: Option<String>,
    #[arg(long)]
    no_intercept: bool,
    #[arg(long, default_value_t = DEFAULT_PRIOR_SD)]
    prior_sd: f64,
    #[arg(long, default_value_t = DEFAULT_SUBJECT_SD)]
    subject_sd: f64,
    /// Interval level.
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Coefficient table path; defaults to `<out>/coefficients.csv`.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn parse_family(s: &str) -> Result<Family, String> {
    s.parse().map_err(|e: netcoord_core::Error| e.to_string())
}

fn parse_interaction(s: &str) -> Result<(String, String), String> {
    ModelSpec::parse_interaction(s).map_err(|e| e.to_string())
}

pub fn run(a: Args, out: &Path) -> anyhow::Result<()> {
    if !(a.level > 0.0 && a.level < 1.0) {
        return Err(crate::config::usage(format!("level must be in (0, 1), got {}", a.level)));
    }
    let table = Table::load(&a.table).with_context(|| format!("table {}", a.table.display()))?;
    let spec = ModelSpec {
        response: a.response,
        predictors: a.predictors,
        interactions: a.interactions,
        subject: a.subject,
        no_intercept: a.no_intercept,
    };
    let data = spec.dataset(&table).with_context(|| format!("table {}", a.table.display()))?;
    let opts = FitOptions {
        prior_sd: a.prior_sd,
        subject_sd: a.subject_sd,
        ..FitOptions::default()
    };
    let result = fit(a.family, &data, &opts)?;
    if result.converged {
        log::info!("{} fit converged in {} iterations", a.family.as_str(), result.iterations);
    } else {
        log::warn!(
            "{} fit did not converge after {} iterations (gradient {:e})",
            a.family.as_str(),
            result.iterations,
            result.diagnostics.gradient_norm
        );
    }
    let path = a.output.unwrap_or_else(|| out.join("coefficients.csv"));
    write_atomic(&path, |w| write_coefficient_table(&result, a.level, w))?;
    let mut shown = Vec::new();
    write_coefficient_table(&result, a.level, &mut shown)?;
    print!("{}", String::from_utf8_lossy(&shown));
    Ok(())
}

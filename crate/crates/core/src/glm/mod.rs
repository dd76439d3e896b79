//! MAP regression with Gaussian priors and Laplace intervals.
//!
//! Four families are supported. Each one exposes its log posterior through
//! [`LogPosterior`] so that gradients can be checked independently; the
//! flat parameter layouts are:
//!
//! | family          | parameters                          |
//! |-----------------|-------------------------------------|
//! | `BetaLogit`     | `[β…, log φ]`                       |
//! | `Gaussian`      | `[β…, log σ]`                       |
//! | `BernoulliLogit`| `[β…]`                              |
//! | `HurdlePoisson` | `[logit hu, β…, u_1 … u_S]`         |

mod beta;
mod gaussian;
mod hurdle;
mod logistic;
pub mod optimize;
pub mod special;
pub mod synthetic;
pub mod table;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
pub use beta::{fit_beta_regression, smooth_proportions};
pub use gaussian::fit_gaussian;
pub use hurdle::{fit_hurdle_poisson, mean_from_log};
pub use logistic::fit_logistic;
pub use optimize::LogPosterior;

pub const DEFAULT_PRIOR_SD: f64 = 10.0;
pub const DEFAULT_SUBJECT_SD: f64 = 1.0;
pub const GRADIENT_TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 500;

/// Smallest singular-value ratio of the column-scaled design accepted as full rank.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    BetaLogit,
    Gaussian,
    BernoulliLogit,
    HurdlePoisson,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::BetaLogit => "beta",
            Family::Gaussian => "gaussian",
            Family::BernoulliLogit => "logistic",
            Family::HurdlePoisson => "hurdle",
        }
    }

    /// Inverse link applied to the linear predictor.
    pub fn inverse_link(self, eta: f64) -> f64 {
        match self {
            Family::BetaLogit | Family::BernoulliLogit => special::logistic(eta),
            Family::Gaussian => eta,
            Family::HurdlePoisson => eta.exp(),
        }
    }

    fn inverse_link_deriv(self, eta: f64) -> f64 {
        match self {
            Family::BetaLogit | Family::BernoulliLogit => {
                let p = special::logistic(eta);
                p * (1.0 - p)
            }
            Family::Gaussian => 1.0,
            Family::HurdlePoisson => eta.exp(),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "beta" | "beta_logit" => Ok(Family::BetaLogit),
            "gaussian" | "normal" => Ok(Family::Gaussian),
            "logistic" | "bernoulli" | "bernoulli_logit" => Ok(Family::BernoulliLogit),
            "hurdle" | "hurdle_poisson" => Ok(Family::HurdlePoisson),
            other => Err(Error::InvalidConfig(format!("unknown model family `{other}`"))),
        }
    }
}

/// Design matrix, response and optional subject tags.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    x: DMatrix<f64>,
    y: DVector<f64>,
    subjects: Option<Vec<usize>>,
    subject_labels: Vec<String>,
}

impl Dataset {
    pub fn new(names: Vec<String>, x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if names.len() != x.ncols() {
            return Err(Error::Shape(format!(
                "{} column names for {} design columns",
                names.len(),
                x.ncols()
            )));
        }
        if x.nrows() != y.len() {
            return Err(Error::Shape(format!("{} design rows for {} responses", x.nrows(), y.len())));
        }
        if x.nrows() == 0 {
            return Err(Error::Shape("dataset has no observations".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::Shape(format!("duplicate column name `{n}`")));
            }
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("dataset contains missing or non-finite cells".into()));
        }
        Ok(Dataset {
            names,
            x,
            y,
            subjects: None,
            subject_labels: Vec::new(),
        })
    }

    /// Builds from row vectors.
    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        let p = names.len();
        if let Some(bad) = rows.iter().position(|r| r.len() != p) {
            return Err(Error::Shape(format!("row {bad} has {} cells, expected {p}", rows[bad].len())));
        }
        let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        Dataset::new(names, x, DVector::from_vec(y))
    }

    /// Tags each observation with a subject id.
    pub fn with_subjects<S: AsRef<str>>(mut self, ids: &[S]) -> Result<Self> {
        if ids.len() != self.n() {
            return Err(Error::Shape(format!("{} subject ids for {} observations", ids.len(), self.n())));
        }
        let mut index = std::collections::BTreeMap::new();
        for id in ids {
            let next = index.len();
            index.entry(id.as_ref().to_string()).or_insert(next);
        }
        let mut labels = vec![String::new(); index.len()];
        for (label, &i) in &index {
            labels[i] = label.clone();
        }
        self.subjects = Some(ids.iter().map(|id| index[id.as_ref()]).collect());
        self.subject_labels = labels;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    /// Dense subject index per observation.
    pub fn subjects(&self) -> Option<&[usize]> {
        self.subjects.as_deref()
    }

    pub fn subject_labels(&self) -> &[String] {
        &self.subject_labels
    }

    pub fn n_subjects(&self) -> usize {
        self.subject_labels.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub prior_sd: f64,
    pub subject_sd: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            prior_sd: DEFAULT_PRIOR_SD,
            subject_sd: DEFAULT_SUBJECT_SD,
            max_iterations: MAX_ITERATIONS,
            tolerance: GRADIENT_TOLERANCE,
        }
    }
}

impl FitOptions {
    pub fn with_prior_sd(mut self, sd: f64) -> Self {
        self.prior_sd = sd;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.prior_sd > 0.0 && self.prior_sd.is_finite()) {
            return Err(Error::InvalidConfig(format!("prior_sd must be positive, got {}", self.prior_sd)));
        }
        if !(self.subject_sd > 0.0 && self.subject_sd.is_finite()) {
            return Err(Error::InvalidConfig(format!("subject_sd must be positive, got {}", self.subject_sd)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig("tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    /// The fitted linear predictor classifies every binary outcome correctly.
    pub separation: bool,
    /// The count part saw no positive observations.
    pub empty_part: bool,
    /// Singular-value ratio of the column-scaled design.
    pub condition_number: f64,
    pub gradient_norm: f64,
    /// Log posterior after each accepted optimizer step.
    pub trace: Vec<f64>,
    /// Per-subject intercepts (hurdle model), in `Dataset::subject_labels` order.
    pub subject_effects: Vec<f64>,
}

/// An auxiliary scalar parameter with its Laplace standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scalar {
    pub estimate: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit {
    pub family: Family,
    pub names: Vec<String>,
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    /// Laplace covariance of `beta`.
    pub cov: DMatrix<f64>,
    pub hu: Option<Scalar>,
    pub phi: Option<Scalar>,
    pub sigma: Option<Scalar>,
    pub loglik: f64,
    pub log_posterior: f64,
    pub converged: bool,
    pub iterations: usize,
    pub diagnostics: Diagnostics,
}

impl GlmFit {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.beta[i])
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.se[i])
    }
}

/// Fits `data` with the given family.
pub fn fit(family: Family, data: &Dataset, opts: &FitOptions) -> Result<GlmFit> {
    match family {
        Family::BetaLogit => fit_beta_regression(data, opts),
        Family::Gaussian => fit_gaussian(data, opts),
        Family::BernoulliLogit => fit_logistic(data, opts),
        Family::HurdlePoisson => fit_hurdle_poisson(data, opts),
    }
}

/// The log posterior a fit of `family` maximizes, for external checking.
pub fn log_posterior<'a>(family: Family, data: &'a Dataset, opts: &FitOptions) -> Result<Box<dyn LogPosterior + 'a>> {
    opts.validate()?;
    Ok(match family {
        Family::BetaLogit => Box::new(beta::BetaPosterior::new(data, opts)?),
        Family::Gaussian => Box::new(gaussian::GaussianPosterior::new(data, opts)),
        Family::BernoulliLogit => Box::new(logistic::LogisticPosterior::new(data, opts)?),
        Family::HurdlePoisson => Box::new(hurdle::HurdlePosterior::new(data, opts)?),
    })
}

/// Condition number of the column-scaled design; an error when it is
/// numerically rank deficient.
fn check_rank(x: &DMatrix<f64>) -> Result<f64> {
    let cond = scaled_condition(x);
    if !(cond.is_finite() && 1.0 / cond > RANK_TOLERANCE) {
        return Err(Error::Fit(format!("design matrix is rank deficient (condition number {cond:e})")));
    }
    Ok(cond)
}

fn scaled_condition(x: &DMatrix<f64>) -> f64 {
    let mut scaled = x.clone();
    for mut col in scaled.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    let sv = scaled.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn standard_errors(cov: &DMatrix<f64>) -> Vec<f64> {
    cov.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect()
}

/// One point of a marginal-effect curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalPoint {
    pub eta: f64,
    pub estimate: f64,
    /// Delta-method standard error on the response scale.
    pub se: f64,
    /// Interval endpoints: the link-scale interval mapped through the inverse link.
    pub lower: f64,
    pub upper: f64,
}

/// Predicted response over `grid` (rows of predictor values in coefficient
/// order) with `level` intervals.
pub fn marginal_effects(fit: &GlmFit, grid: &[Vec<f64>], level: f64) -> Result<Vec<MarginalPoint>> {
    if !fit.converged {
        return Err(Error::Fit(format!(
            "refusing marginal effects for an unconverged {} fit (gradient norm {:e} after {} iterations)",
            fit.family, fit.diagnostics.gradient_norm, fit.iterations
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!("interval level must be in (0,1), got {level}")));
    }
    let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    let p = fit.beta.len();
    let beta = DVector::from_column_slice(&fit.beta);
    grid.iter()
        .enumerate()
        .map(|(row, g)| {
            if g.len() != p {
                return Err(Error::Shape(format!("grid row {row} has {} values, expected {p}", g.len())));
            }
            let v = DVector::from_column_slice(g);
            let eta = v.dot(&beta);
            let se_eta = (v.transpose() * &fit.cov * &v)[(0, 0)].max(0.0).sqrt();
            let f = fit.family;
            Ok(MarginalPoint {
                eta,
                estimate: f.inverse_link(eta),
                se: f.inverse_link_deriv(eta).abs() * se_eta,
                lower: f.inverse_link(eta - z * se_eta),
                upper: f.inverse_link(eta + z * se_eta),
            })
        })
        .collect()
}

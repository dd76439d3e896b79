use nalgebra::{DMatrix, DVector};

use super::optimize::{maximize, solve_spd, LogPosterior};
use super::special::{logistic, softplus};
use super::{check_rank, standard_errors, Dataset, Diagnostics, Family, FitOptions, GlmFit};
use crate::error::{Error, Result};

pub(crate) struct LogisticPosterior<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    prior_var: f64,
}

impl<'a> LogisticPosterior<'a> {
    pub(crate) fn new(data: &'a Dataset, opts: &FitOptions) -> Result<Self> {
        if let Some(bad) = data.y().iter().find(|v| **v != 0.0 && **v != 1.0) {
            return Err(Error::Domain(format!("logistic regression needs binary responses, got {bad}")));
        }
        Ok(LogisticPosterior {
            x: data.x(),
            y: data.y(),
            prior_var: opts.prior_sd * opts.prior_sd,
        })
    }

    fn loglik(&self, beta: &DVector<f64>) -> f64 {
        let eta = self.x * beta;
        eta.iter().zip(self.y.iter()).map(|(e, y)| y * e - softplus(*e)).sum()
    }

    /// X' W X + I/σ², the exact negative Hessian.
    fn curvature(&self, beta: &DVector<f64>) -> DMatrix<f64> {
        let eta = self.x * beta;
        let w = eta.map(|e| {
            let p = logistic(e);
            p * (1.0 - p)
        });
        let mut xw = self.x.clone();
        for (i, mut row) in xw.row_iter_mut().enumerate() {
            row *= w[i];
        }
        let p = self.x.ncols();
        self.x.transpose() * xw + DMatrix::identity(p, p) / self.prior_var
    }
}

impl LogPosterior for LogisticPosterior<'_> {
    fn dim(&self) -> usize {
        self.x.ncols()
    }

    fn value(&self, theta: &DVector<f64>) -> f64 {
        self.loglik(theta) - theta.norm_squared() / (2.0 * self.prior_var)
    }

    fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        let resid = self.y - (self.x * theta).map(logistic);
        self.x.transpose() * resid - theta / self.prior_var
    }

    fn newton_direction(&self, theta: &DVector<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
        solve_spd(self.curvature(theta), grad)
    }

    fn initial(&self) -> DVector<f64> {
        DVector::zeros(self.dim())
    }

    fn is_concave(&self) -> bool {
        true
    }

    fn covariance(&self, theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.curvature(theta).cholesky().map(|c| c.inverse())
    }
}

/// MAP logistic regression by Newton steps on the penalized likelihood
/// (iteratively reweighted least squares).
pub fn fit_logistic(data: &Dataset, opts: &FitOptions) -> Result<GlmFit> {
    opts.validate()?;
    let obj = LogisticPosterior::new(data, opts)?;
    let condition_number = check_rank(data.x())?;
    let opt = maximize(&obj, obj.initial(), opts);
    let cov = obj
        .covariance(&opt.theta)
        .ok_or_else(|| Error::Fit("logistic information matrix is not positive definite".into()))?;
    let eta = data.x() * &opt.theta;
    let separation = eta
        .iter()
        .zip(data.y().iter())
        .all(|(e, y)| if *y == 1.0 { *e > 0.0 } else { *e < 0.0 });
    if separation {
        log::warn!("logistic fit: outcomes are completely separated; coefficients are bounded only by the prior");
    }
    Ok(GlmFit {
        family: Family::BernoulliLogit,
        names: data.names().to_vec(),
        beta: opt.theta.iter().copied().collect(),
        se: standard_errors(&cov),
        cov,
        hu: None,
        phi: None,
        sigma: None,
        loglik: obj.loglik(&opt.theta),
        log_posterior: opt.value,
        converged: opt.converged,
        iterations: opt.iterations,
        diagnostics: Diagnostics {
            separation,
            condition_number,
            gradient_norm: opt.gradient_norm,
            trace: opt.trace,
            ..Diagnostics::default()
        },
    })
}

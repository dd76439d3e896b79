use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

use super::optimize::{maximize, observed_information, solve_spd, LogPosterior};
use super::special::{digamma, logistic, trigamma};
use super::{check_rank, standard_errors, Dataset, Diagnostics, Family, FitOptions, GlmFit, Scalar};
use crate::error::{Error, Result};

/// Pulls proportions in [0,1] into the open interval: y' = (y(n-1) + 0.5)/n.
pub fn smooth_proportions(y: &DVector<f64>) -> DVector<f64> {
    let n = y.len() as f64;
    y.map(|v| (v * (n - 1.0) + 0.5) / n)
}

pub(crate) struct BetaPosterior<'a> {
    x: &'a DMatrix<f64>,
    log_y: DVector<f64>,
    log_1my: DVector<f64>,
    prior_var: f64,
}

impl<'a> BetaPosterior<'a> {
    pub(crate) fn new(data: &'a Dataset, opts: &FitOptions) -> Result<Self> {
        if let Some(bad) = data.y().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("beta regression needs proportions in [0,1], got {bad}")));
        }
        let y = smooth_proportions(data.y());
        Ok(BetaPosterior {
            x: data.x(),
            log_y: y.map(f64::ln),
            log_1my: y.map(|v| (-v).ln_1p()),
            prior_var: opts.prior_sd * opts.prior_sd,
        })
    }

    fn p(&self) -> usize {
        self.x.ncols()
    }

    fn split<'t>(&self, theta: &'t DVector<f64>) -> (nalgebra::DVectorView<'t, f64>, f64) {
        (theta.rows(0, self.p()), theta[self.p()])
    }

    fn loglik(&self, theta: &DVector<f64>) -> f64 {
        let (beta, zeta) = self.split(theta);
        let phi = zeta.exp();
        let eta = self.x * beta;
        let lg_phi = ln_gamma(phi);
        let mut ll = 0.0;
        for i in 0..eta.len() {
            let a = logistic(eta[i]) * phi;
            let b = logistic(-eta[i]) * phi;
            if !(a > 0.0 && b > 0.0 && phi.is_finite()) {
                return f64::NEG_INFINITY;
            }
            ll += lg_phi - ln_gamma(a) - ln_gamma(b) + (a - 1.0) * self.log_y[i] + (b - 1.0) * self.log_1my[i];
        }
        ll
    }

    /// Expected information plus prior precision.
    fn curvature(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let p = self.p();
        let (beta, zeta) = self.split(theta);
        let phi = zeta.exp();
        let eta = self.x * beta;
        let tg_phi = trigamma(phi);
        let mut c = DMatrix::zeros(p + 1, p + 1);
        for i in 0..eta.len() {
            let mu = logistic(eta[i]);
            let nu = logistic(-eta[i]);
            let g = mu * nu;
            let ta = trigamma(mu * phi);
            let tb = trigamma(nu * phi);
            let w_bb = phi * phi * (ta + tb) * g * g;
            let w_bz = g * phi * phi * (mu * ta - nu * tb);
            let w_zz = phi * phi * (mu * mu * ta + nu * nu * tb - tg_phi);
            let xi = self.x.row(i);
            for j in 0..p {
                for k in 0..=j {
                    c[(j, k)] += w_bb * xi[j] * xi[k];
                }
                c[(j, p)] += w_bz * xi[j];
            }
            c[(p, p)] += w_zz;
        }
        for j in 0..p {
            for k in 0..j {
                c[(k, j)] = c[(j, k)];
            }
            c[(p, j)] = c[(j, p)];
        }
        for j in 0..=p {
            c[(j, j)] += 1.0 / self.prior_var;
        }
        c
    }
}

impl LogPosterior for BetaPosterior<'_> {
    fn dim(&self) -> usize {
        self.p() + 1
    }

    fn value(&self, theta: &DVector<f64>) -> f64 {
        self.loglik(theta) - theta.norm_squared() / (2.0 * self.prior_var)
    }

    fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        let p = self.p();
        let (beta, zeta) = self.split(theta);
        let phi = zeta.exp();
        let eta = self.x * beta;
        let dg_phi = digamma(phi);
        let mut g = DVector::zeros(p + 1);
        for i in 0..eta.len() {
            let mu = logistic(eta[i]);
            let nu = logistic(-eta[i]);
            let da = digamma(mu * phi);
            let db = digamma(nu * phi);
            let y_star = self.log_y[i] - self.log_1my[i];
            let mu_star = da - db;
            let s = phi * (y_star - mu_star) * mu * nu;
            for j in 0..p {
                g[j] += s * self.x[(i, j)];
            }
            g[p] += phi * (dg_phi - mu * da - nu * db + mu * self.log_y[i] + nu * self.log_1my[i]);
        }
        g - theta / self.prior_var
    }

    fn newton_direction(&self, theta: &DVector<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
        solve_spd(self.curvature(theta), grad)
    }

    fn initial(&self) -> DVector<f64> {
        let p = self.p();
        let z = &self.log_y - &self.log_1my;
        let xtx = self.x.transpose() * self.x + DMatrix::identity(p, p) * 1e-8;
        let beta = solve_spd(xtx, &(self.x.transpose() * &z)).unwrap_or_else(|| DVector::zeros(p));
        let eta = self.x * &beta;
        let y = self.log_y.map(f64::exp);
        let (mut spread, mut resid) = (0.0, 0.0);
        for i in 0..eta.len() {
            let mu = logistic(eta[i]);
            spread += mu * (1.0 - mu);
            resid += (y[i] - mu).powi(2);
        }
        let phi = (spread / resid.max(1e-300) - 1.0).clamp(1.0, 1e4);
        let mut theta = DVector::zeros(p + 1);
        theta.rows_mut(0, p).copy_from(&beta);
        theta[p] = phi.ln();
        theta
    }

    fn covariance(&self, theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        observed_information(self, theta)
            .cholesky()
            .or_else(|| self.curvature(theta).cholesky())
            .map(|c| c.inverse())
    }
}

pub fn fit_beta_regression(data: &Dataset, opts: &FitOptions) -> Result<GlmFit> {
    opts.validate()?;
    let condition_number = check_rank(data.x())?;
    let obj = BetaPosterior::new(data, opts)?;
    let opt = maximize(&obj, obj.initial(), opts);
    let p = data.p();
    let full_cov = obj
        .covariance(&opt.theta)
        .ok_or_else(|| Error::Fit("beta regression information matrix is not positive definite".into()))?;
    let cov = full_cov.view((0, 0), (p, p)).into_owned();
    let zeta = opt.theta[p];
    let phi = zeta.exp();
    let fit = GlmFit {
        family: Family::BetaLogit,
        names: data.names().to_vec(),
        beta: opt.theta.rows(0, p).iter().copied().collect(),
        se: standard_errors(&cov),
        cov,
        hu: None,
        phi: Some(Scalar {
            estimate: phi,
            se: phi * full_cov[(p, p)].max(0.0).sqrt(),
        }),
        sigma: None,
        loglik: obj.loglik(&opt.theta),
        log_posterior: opt.value,
        converged: opt.converged,
        iterations: opt.iterations,
        diagnostics: Diagnostics {
            condition_number,
            gradient_norm: opt.gradient_norm,
            trace: opt.trace,
            separation: false,
            empty_part: false,
            subject_effects: Vec::new(),
        },
    };
    if !fit.converged {
        log::warn!(
            "beta regression stopped after {} iterations with gradient norm {:e}",
            fit.iterations,
            fit.diagnostics.gradient_norm
        );
    }
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::testutil::{dataset, gradient_error};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Beta, Distribution};

    fn synthetic(n: usize, b0: f64, b1: f64, phi: f64, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let t = (i % 40 + 1) as f64;
            let mu = logistic(b0 + b1 * t);
            let d = Beta::new(mu * phi, (1.0 - mu) * phi).unwrap();
            rows.push(vec![1.0, t]);
            y.push(d.sample(&mut rng));
        }
        dataset(&["Intercept", "Trial"], rows, y)
    }

    #[test]
    fn smoothing_maps_into_open_interval() {
        let y = DVector::from_vec(vec![0.0, 0.5, 1.0, 1.0]);
        let s = smooth_proportions(&y);
        assert_eq!(s[0], 0.125);
        assert_eq!(s[1], 0.5);
        assert_eq!(s[2], 0.875);
    }

    #[test]
    fn constant_half_gives_zero_intercept() {
        let d = dataset(&["Intercept"], vec![vec![1.0]; 40], vec![0.5; 40]);
        let fit = fit_beta_regression(&d, &FitOptions::default()).unwrap();
        assert!(fit.beta[0].abs() < 0.01, "{:?}", fit.beta);
        assert!(fit.diagnostics.trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let d = synthetic(200, 0.5, 0.04, 15.0, 3);
        let obj = BetaPosterior::new(&d, &FitOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let theta = DVector::from_vec(vec![
                rng.random_range(-1.0..1.0),
                rng.random_range(-0.05..0.05),
                rng.random_range(0.0..4.0),
            ]);
            let err = gradient_error(&obj, &theta);
            assert!(err < 1e-6, "relative error {err} at {theta:?}");
        }
    }

    #[test]
    fn recovers_synthetic_coefficients() {
        let d = synthetic(4000, 0.5, 0.04, 30.0, 7);
        let fit = fit_beta_regression(&d, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!((fit.beta[0] - 0.5).abs() < 0.05, "{:?}", fit.beta);
        assert!((fit.beta[1] - 0.04).abs() < 0.004, "{:?}", fit.beta);
        let phi = fit.phi.unwrap();
        assert!((phi.estimate - 30.0).abs() < 3.0);
        assert!(fit.diagnostics.trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn duplicated_column_is_an_error() {
        let d = synthetic(100, 0.5, 0.04, 30.0, 1);
        let rows: Vec<_> = (0..100).map(|i| vec![1.0, d.x()[(i, 1)], d.x()[(i, 1)]]).collect();
        let dup = dataset(&["Intercept", "Trial", "Trial2"], rows, d.y().iter().copied().collect());
        assert!(matches!(fit_beta_regression(&dup, &FitOptions::default()), Err(Error::Fit(_))));
    }

    #[test]
    fn out_of_range_response_rejected() {
        let d = dataset(&["Intercept"], vec![vec![1.0]; 2], vec![0.5, 1.5]);
        assert!(matches!(fit_beta_regression(&d, &FitOptions::default()), Err(Error::Domain(_))));
    }
}

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

use super::optimize::{maximize, solve_spd, LogPosterior};
use super::special::{logistic, softplus};
use super::{check_rank, standard_errors, Dataset, Diagnostics, Family, FitOptions, GlmFit, Scalar};
use crate::error::{Error, Result};

/// Expected count implied by a log-scale coefficient.
pub fn mean_from_log(b: f64) -> f64 {
    b.exp()
}

/// Hurdle Poisson: an intercept-only logistic model for the probability of a
/// zero, and a zero-truncated Poisson with log link and penalized
/// per-subject intercepts for the positive counts.
pub(crate) struct HurdlePosterior<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    positive: Vec<usize>,
    subjects: Option<&'a [usize]>,
    n_subjects: usize,
    ln_fact: Vec<f64>,
    prior_var: f64,
    subject_var: f64,
}

/// λ/(1-e^{-λ}) and its derivative with respect to log λ.
fn truncated_mean(lambda: f64) -> (f64, f64) {
    if lambda < 1e-4 {
        let m = 1.0 + lambda / 2.0 + lambda * lambda / 12.0;
        (m, lambda * (0.5 + lambda / 6.0))
    } else {
        let q = -(-lambda).exp_m1();
        let m = lambda / q;
        let w = lambda * (q - lambda * (-lambda).exp()) / (q * q);
        (m, w)
    }
}

impl<'a> HurdlePosterior<'a> {
    pub(crate) fn new(data: &'a Dataset, opts: &FitOptions) -> Result<Self> {
        if let Some(bad) = data.y().iter().find(|v| !(**v >= 0.0 && v.fract() == 0.0)) {
            return Err(Error::Domain(format!("hurdle model needs non-negative integer counts, got {bad}")));
        }
        let positive: Vec<usize> = (0..data.n()).filter(|&i| data.y()[i] > 0.0).collect();
        let ln_fact = positive.iter().map(|&i| ln_gamma(data.y()[i] + 1.0)).collect();
        Ok(HurdlePosterior {
            x: data.x(),
            y: data.y(),
            positive,
            subjects: data.subjects(),
            n_subjects: data.n_subjects(),
            ln_fact,
            prior_var: opts.prior_sd * opts.prior_sd,
            subject_var: opts.subject_sd * opts.subject_sd,
        })
    }

    fn p(&self) -> usize {
        self.x.ncols()
    }

    fn n_zero(&self) -> f64 {
        (self.y.len() - self.positive.len()) as f64
    }

    fn eta(&self, theta: &DVector<f64>, i: usize) -> f64 {
        let p = self.p();
        let mut e = self.x.row(i).transpose().dot(&theta.rows(1, p));
        if let Some(s) = self.subjects {
            e += theta[1 + p + s[i]];
        }
        e
    }

    fn loglik(&self, theta: &DVector<f64>) -> f64 {
        let gamma = theta[0];
        let npos = self.positive.len() as f64;
        let mut ll = self.n_zero() * (gamma - softplus(gamma)) - npos * softplus(gamma);
        for (k, &i) in self.positive.iter().enumerate() {
            let eta = self.eta(theta, i);
            let lambda = eta.exp();
            ll += self.y[i] * eta - lambda - (-(-lambda).exp_m1()).ln() - self.ln_fact[k];
        }
        ll
    }

    fn log_prior(&self, theta: &DVector<f64>) -> f64 {
        let p = self.p();
        let fixed = theta.rows(0, 1 + p).norm_squared();
        let random = theta.rows(1 + p, self.n_subjects).norm_squared();
        -fixed / (2.0 * self.prior_var) - random / (2.0 * self.subject_var)
    }

    /// Curvature blocks of the count part: A (fixed), B (fixed × subject),
    /// D (diagonal subject), each including prior precision.
    fn blocks(&self, theta: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
        let p = self.p();
        let s = self.n_subjects;
        let mut a = DMatrix::identity(p, p) / self.prior_var;
        let mut b = DMatrix::zeros(p, s);
        let mut d = DVector::from_element(s, 1.0 / self.subject_var);
        for &i in &self.positive {
            let (_, w) = truncated_mean(self.eta(theta, i).exp());
            let xi = self.x.row(i);
            for j in 0..p {
                for k in 0..p {
                    a[(j, k)] += w * xi[j] * xi[k];
                }
            }
            if let Some(subj) = self.subjects {
                let si = subj[i];
                for j in 0..p {
                    b[(j, si)] += w * xi[j];
                }
                d[si] += w;
            }
        }
        (a, b, d)
    }

    fn gamma_curvature(&self, gamma: f64) -> f64 {
        let h = logistic(gamma);
        self.y.len() as f64 * h * (1.0 - h) + 1.0 / self.prior_var
    }

    /// Schur complement A - B D⁻¹ Bᵀ.
    fn schur(a: &DMatrix<f64>, b: &DMatrix<f64>, d: &DVector<f64>) -> DMatrix<f64> {
        let mut bd = b.clone();
        for (j, mut col) in bd.column_iter_mut().enumerate() {
            col /= d[j];
        }
        a - bd * b.transpose()
    }
}

impl LogPosterior for HurdlePosterior<'_> {
    fn dim(&self) -> usize {
        1 + self.p() + self.n_subjects
    }

    fn value(&self, theta: &DVector<f64>) -> f64 {
        self.loglik(theta) + self.log_prior(theta)
    }

    fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        let p = self.p();
        let n = self.y.len() as f64;
        let mut g = DVector::zeros(self.dim());
        g[0] = self.n_zero() - n * logistic(theta[0]) - theta[0] / self.prior_var;
        for &i in &self.positive {
            let (m, _) = truncated_mean(self.eta(theta, i).exp());
            let r = self.y[i] - m;
            for j in 0..p {
                g[1 + j] += r * self.x[(i, j)];
            }
            if let Some(s) = self.subjects {
                g[1 + p + s[i]] += r;
            }
        }
        for j in 0..p {
            g[1 + j] -= theta[1 + j] / self.prior_var;
        }
        for s in 0..self.n_subjects {
            g[1 + p + s] -= theta[1 + p + s] / self.subject_var;
        }
        g
    }

    fn newton_direction(&self, theta: &DVector<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
        let p = self.p();
        let s = self.n_subjects;
        let (a, b, d) = self.blocks(theta);
        let g_beta = grad.rows(1, p).into_owned();
        let g_u = grad.rows(1 + p, s).into_owned();
        let rhs = &g_beta - &b * g_u.component_div(&d);
        let d_beta = solve_spd(Self::schur(&a, &b, &d), &rhs)?;
        let d_u = (&g_u - b.transpose() * &d_beta).component_div(&d);
        let mut dir = DVector::zeros(self.dim());
        dir[0] = grad[0] / self.gamma_curvature(theta[0]);
        dir.rows_mut(1, p).copy_from(&d_beta);
        dir.rows_mut(1 + p, s).copy_from(&d_u);
        Some(dir)
    }

    fn initial(&self) -> DVector<f64> {
        let n = self.y.len() as f64;
        let mut theta = DVector::zeros(self.dim());
        theta[0] = ((self.n_zero() + 0.5) / (n - self.n_zero() + 0.5)).ln();
        theta
    }

    fn is_concave(&self) -> bool {
        true
    }

    /// Covariance of `[logit hu, β…]`; subject effects are integrated out
    /// through the Schur complement.
    fn covariance(&self, theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        let p = self.p();
        let (a, b, d) = self.blocks(theta);
        let beta_cov = Self::schur(&a, &b, &d).cholesky()?.inverse();
        let mut cov = DMatrix::zeros(1 + p, 1 + p);
        cov[(0, 0)] = 1.0 / self.gamma_curvature(theta[0]);
        cov.view_mut((1, 1), (p, p)).copy_from(&beta_cov);
        Some(cov)
    }
}

pub fn fit_hurdle_poisson(data: &Dataset, opts: &FitOptions) -> Result<GlmFit> {
    opts.validate()?;
    let obj = HurdlePosterior::new(data, opts)?;
    let condition_number = check_rank(data.x())?;
    let empty_part = obj.positive.is_empty();
    if empty_part {
        log::warn!("hurdle model: every count is zero; the count part is fitted to its prior");
    }
    let opt = maximize(&obj, obj.initial(), opts);
    let p = data.p();
    let full_cov = obj
        .covariance(&opt.theta)
        .ok_or_else(|| Error::Fit("hurdle count-part information is not positive definite".into()))?;
    let cov = full_cov.view((1, 1), (p, p)).into_owned();
    let hu = logistic(opt.theta[0]);
    Ok(GlmFit {
        family: Family::HurdlePoisson,
        names: data.names().to_vec(),
        beta: opt.theta.rows(1, p).iter().copied().collect(),
        se: standard_errors(&cov),
        cov,
        hu: Some(Scalar {
            estimate: hu,
            se: hu * (1.0 - hu) * full_cov[(0, 0)].sqrt(),
        }),
        phi: None,
        sigma: None,
        loglik: obj.loglik(&opt.theta),
        log_posterior: opt.value,
        converged: opt.converged,
        iterations: opt.iterations,
        diagnostics: Diagnostics {
            empty_part,
            condition_number,
            gradient_norm: opt.gradient_norm,
            trace: opt.trace,
            subject_effects: opt.theta.rows(1 + p, data.n_subjects()).iter().copied().collect(),
            separation: false,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::optimize::observed_information;
    use crate::glm::testutil::{dataset, gradient_error};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small(seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        let mut subj = Vec::new();
        for s in 0..15 {
            for phase in 0..2 {
                rows.push(vec![1.0, phase as f64]);
                y.push(if rng.random_bool(0.5) { 0.0 } else { rng.random_range(1..5) as f64 });
                subj.push(format!("s{s}"));
            }
        }
        dataset(&["Intercept", "Post"], rows, y).with_subjects(&subj).unwrap()
    }

    #[test]
    fn mean_from_log_coefficient() {
        assert!((mean_from_log(0.19) - 1.209).abs() < 5e-4);
    }

    #[test]
    fn truncated_mean_branches_agree() {
        for lambda in [9e-5, 1.1e-4] {
            let (m, w) = truncated_mean(lambda);
            let q = -(-lambda as f64).exp_m1();
            assert!((m - lambda / q).abs() < 1e-12);
            let h = 1e-3;
            let fd = (truncated_mean(lambda * (h as f64).exp()).0 - truncated_mean(lambda * (-h as f64).exp()).0) / (2.0 * h);
            assert!((w - fd).abs() / w < 1e-5, "{w} vs {fd}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let d = small(4);
        let obj = HurdlePosterior::new(&d, &FitOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for _ in 0..20 {
            let theta = DVector::from_fn(obj.dim(), |_, _| rng.random_range(-1.0..1.0));
            let err = gradient_error(&obj, &theta);
            assert!(err < 1e-6, "relative error {err}");
        }
    }

    #[test]
    fn block_solve_matches_dense_hessian() {
        let d = small(9);
        let obj = HurdlePosterior::new(&d, &FitOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let theta = DVector::from_fn(obj.dim(), |_, _| rng.random_range(-0.5..0.5));
        let g = obj.gradient(&theta);
        let dir = obj.newton_direction(&theta, &g).unwrap();
        let dense = observed_information(&obj, &theta);
        let resid = (&dense * &dir - &g).amax();
        assert!(resid < 1e-5 * g.amax().max(1.0), "residual {resid}");
    }

    #[test]
    fn all_zero_counts() {
        let subj: Vec<String> = (0..40).map(|i| format!("s{}", i / 2)).collect();
        let d = dataset(&["Intercept"], vec![vec![1.0]; 40], vec![0.0; 40])
            .with_subjects(&subj)
            .unwrap();
        let fit = fit_hurdle_poisson(&d, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.diagnostics.empty_part);
        let hu = fit.hu.unwrap().estimate;
        assert!(hu > 0.97 && hu < 1.0, "hu {hu}");
        assert_eq!(fit.beta, vec![0.0]);
    }

    #[test]
    fn negative_count_rejected() {
        let d = dataset(&["Intercept"], vec![vec![1.0]; 2], vec![1.0, -1.0]);
        assert!(matches!(fit_hurdle_poisson(&d, &FitOptions::default()), Err(Error::Domain(_))));
    }
}

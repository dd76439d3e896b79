//! Damped Newton ascent on a log posterior.

use nalgebra::{DMatrix, DVector};

use super::FitOptions;

/// A differentiable log posterior over a flat parameter vector.
pub trait LogPosterior {
    fn dim(&self) -> usize;

    /// Log posterior up to an additive constant.
    fn value(&self, theta: &DVector<f64>) -> f64;

    fn gradient(&self, theta: &DVector<f64>) -> DVector<f64>;

    /// Solves `C d = g` for a positive-definite curvature `C` (the negative
    /// Hessian or its expectation). `None` when the solve fails.
    fn newton_direction(&self, theta: &DVector<f64>, grad: &DVector<f64>) -> Option<DVector<f64>>;

    fn initial(&self) -> DVector<f64>;

    /// Whether the log posterior is concave everywhere.
    fn is_concave(&self) -> bool {
        false
    }

    /// Laplace covariance at `theta`; by default the inverse of the
    /// observed information from central differences of the gradient.
    fn covariance(&self, theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        let info = observed_information(self, theta);
        info.cholesky().map(|c| c.inverse())
    }
}

/// Negative Hessian from central differences of the analytic gradient,
/// symmetrized.
pub fn observed_information<P: LogPosterior + ?Sized>(obj: &P, theta: &DVector<f64>) -> DMatrix<f64> {
    let d = obj.dim();
    let mut h = DMatrix::zeros(d, d);
    for j in 0..d {
        let step = 1e-5 * theta[j].abs().max(1.0);
        let mut up = theta.clone();
        up[j] += step;
        let mut down = theta.clone();
        down[j] -= step;
        let col = (obj.gradient(&up) - obj.gradient(&down)) / (2.0 * step);
        h.set_column(j, &col);
    }
    let sym = (&h + h.transpose()) * 0.5;
    -sym
}

#[derive(Debug, Clone)]
pub struct Optimum {
    pub theta: DVector<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
    /// Log posterior after every accepted step, starting from the initial point.
    pub trace: Vec<f64>,
}

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;
const RESOLUTION: f64 = 64.0 * f64::EPSILON;

pub fn maximize<P: LogPosterior + ?Sized>(obj: &P, start: DVector<f64>, opts: &FitOptions) -> Optimum {
    let mut theta = start;
    let mut value = obj.value(&theta);
    let mut trace = vec![value];
    let mut iterations = 0;
    let mut grad = obj.gradient(&theta);
    let mut gradient_norm = grad.amax();

    while gradient_norm >= opts.tolerance && iterations < opts.max_iterations {
        iterations += 1;
        let mut dir = obj
            .newton_direction(&theta, &grad)
            .filter(|d| d.iter().all(|v| v.is_finite()))
            .unwrap_or_else(|| grad.clone());
        let mut slope = grad.dot(&dir);
        if !(slope > 0.0) {
            dir = grad.clone();
            slope = grad.dot(&dir);
        }

        // A step is accepted on the Armijo condition or, once the predicted
        // gain is below the resolution of the computed objective, on evidence
        // from the gradient: for a concave objective a non-negative
        // directional derivative at the new point gives f(new) >= f(old);
        // otherwise the gradient norm must fall. The recorded value is then
        // the old one.
        let concave = obj.is_concave();
        let band = RESOLUTION * value.abs().max(1.0);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand = &theta + &dir * step;
            let v = obj.value(&cand);
            if v.is_finite() {
                if v >= value + ARMIJO * step * slope {
                    accepted = Some((cand, v.max(value), None));
                    break;
                }
                let g = obj.gradient(&cand);
                if (concave && g.dot(&dir) >= 0.0) || (step * slope <= band && g.amax() < gradient_norm) {
                    accepted = Some((cand, v.max(value), Some(g)));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((cand, v, g)) = accepted else {
            break;
        };
        theta = cand;
        value = v;
        trace.push(value);
        grad = g.unwrap_or_else(|| obj.gradient(&theta));
        gradient_norm = grad.amax();
    }

    Optimum {
        converged: gradient_norm < opts.tolerance,
        theta,
        value,
        iterations,
        gradient_norm,
        trace,
    }
}

/// Solves a symmetric positive-definite system, adding a growing ridge when
/// the Cholesky factorization fails.
pub fn solve_spd(mut a: DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = a.diagonal().amax().max(1e-300);
    let mut ridge = 0.0;
    for _ in 0..12 {
        if let Some(c) = a.clone().cholesky() {
            return Some(c.solve(b));
        }
        let bump = if ridge == 0.0 { scale * 1e-12 } else { ridge * 10.0 };
        for i in 0..a.nrows() {
            a[(i, i)] += bump - ridge;
        }
        ridge = bump;
    }
    None
}

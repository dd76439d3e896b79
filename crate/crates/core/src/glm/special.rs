//! Polygamma functions needed by the Beta likelihood.

const ASYMPTOTIC_FROM: f64 = 10.0;

/// Digamma ψ(x) for x > 0.
pub fn digamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < ASYMPTOTIC_FROM {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv2
        * (1.0 / 12.0
            - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * 691.0 / 32760.0)))));
    acc + x.ln() - 0.5 * inv - series
}

/// Trigamma ψ'(x) for x > 0.
pub fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < ASYMPTOTIC_FROM {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv
        + 0.5 * inv2
        + inv * inv2 * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0 - inv2 * 5.0 / 66.0))));
    acc + series
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// log(1 + e^x) without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digamma_matches_statrs() {
        for &x in &[0.01, 0.3, 1.0, 2.5, 7.0, 13.0, 250.0, 1e5] {
            let ours = digamma(x);
            let theirs = statrs::function::gamma::digamma(x);
            assert!((ours - theirs).abs() < 1e-12 * (1.0 + theirs.abs()), "x={x}: {ours} vs {theirs}");
        }
        // ψ(1) = -γ
        let e = digamma(1.0) + 0.577_215_664_901_532_9;
        assert!(e.abs() < 1e-14, "{e}");
    }

    #[test]
    fn trigamma_matches_known_values_and_derivative() {
        let pi2_6 = std::f64::consts::PI.powi(2) / 6.0;
        let e = trigamma(1.0) - pi2_6;
        assert!(e.abs() < 1e-13, "{e}");
        assert!((trigamma(0.5) - std::f64::consts::PI.powi(2) / 2.0).abs() < 1e-12);
        for &x in &[0.2, 1.3, 4.0, 11.0, 80.0] {
            let h = 1e-5 * x;
            let fd = (digamma(x + h) - digamma(x - h)) / (2.0 * h);
            assert!((fd - trigamma(x)).abs() < 1e-6 * trigamma(x), "x={x}");
        }
    }

    #[test]
    fn logistic_helpers() {
        assert_eq!(logistic(0.0), 0.5);
        assert!((logit(logistic(1.7)) - 1.7).abs() < 1e-12);
        assert!(logistic(-800.0) >= 0.0 && logistic(800.0) <= 1.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((softplus(50.0) - 50.0).abs() < 1e-15);
    }
}

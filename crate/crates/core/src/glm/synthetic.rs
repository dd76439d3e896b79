//! Simulated datasets with known coefficients, shaped like the experiment's
//! tables: 40 trials, a 0/1 spatial indicator, subjects observed in two phases.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal, Poisson};

use super::special::logistic;
use super::Dataset;
use crate::error::Result;

pub const TRIALS: usize = 40;

fn trial_of(i: usize) -> f64 {
    (i % TRIALS + 1) as f64
}

fn build(names: &[&str], rows: Vec<Vec<f64>>, y: Vec<f64>) -> Dataset {
    let p = names.len();
    let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
    Dataset::new(names.iter().map(|s| s.to_string()).collect(), x, DVector::from_vec(y))
        .expect("synthetic design is well formed")
}

/// Proportions from Beta(μφ, (1-μ)φ) with logit μ = b0 + b1·Trial.
pub fn beta_trials(n: usize, b0: f64, b1: f64, phi: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (rows, y) = (0..n)
        .map(|i| {
            let t = trial_of(i);
            let mu = logistic(b0 + b1 * t);
            let v = Beta::new(mu * phi, (1.0 - mu) * phi).unwrap().sample(&mut rng);
            (vec![1.0, t], v)
        })
        .unzip();
    build(&["Intercept", "Trial"], rows, y)
}

/// y = b0 + b1·Trial + N(0, σ²).
pub fn gaussian_trials(n: usize, b0: f64, b1: f64, sigma: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    let (rows, y) = (0..n)
        .map(|i| {
            let t = trial_of(i);
            (vec![1.0, t], b0 + b1 * t + noise.sample(&mut rng))
        })
        .unzip();
    build(&["Intercept", "Trial"], rows, y)
}

/// Binary outcomes with logit p = b0 + b_trial·Trial + b_spatial·Spatial;
/// half the observations have Spatial = 1.
pub fn logistic_pairs(n: usize, b0: f64, b_trial: f64, b_spatial: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (rows, y) = (0..n)
        .map(|i| {
            let t = trial_of(i);
            let s = ((i / TRIALS) % 2) as f64;
            let p = logistic(b0 + b_trial * t + b_spatial * s);
            (vec![1.0, t, s], rng.random_bool(p) as u8 as f64)
        })
        .unzip();
    build(&["Intercept", "Trial", "Spatial"], rows, y)
}

/// Counts from a hurdle Poisson: zero with probability `hu`, otherwise
/// zero-truncated Poisson with log λ = b0 + u_subject, u ~ N(0, subject_sd²).
/// Each subject contributes a pre and a post observation (`Post` column).
pub fn hurdle_counts(subjects: usize, hu: f64, b0: f64, subject_sd: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let effects = Normal::new(0.0, subject_sd).unwrap();
    let mut rows = Vec::with_capacity(2 * subjects);
    let mut y = Vec::with_capacity(2 * subjects);
    let mut ids = Vec::with_capacity(2 * subjects);
    for s in 0..subjects {
        let u: f64 = effects.sample(&mut rng);
        let counts = Poisson::new((b0 + u).exp()).unwrap();
        for phase in 0..2 {
            let v = if rng.random_bool(hu) {
                0.0
            } else {
                loop {
                    let k: f64 = counts.sample(&mut rng);
                    if k > 0.0 {
                        break k;
                    }
                }
            };
            rows.push(vec![1.0, phase as f64]);
            y.push(v);
            ids.push(format!("p{s:03}"));
        }
    }
    build(&["Intercept", "Post"], rows, y)
        .with_subjects(&ids)
        .expect("one id per row")
}

/// Writes the dataset's non-intercept columns, subject ids when present, and
/// the response as a comma-delimited table.
pub fn write_table<W: Write>(data: &Dataset, response: &str, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let cols: Vec<usize> = (0..data.p()).filter(|&j| data.names()[j] != super::table::INTERCEPT).collect();
    let mut header: Vec<&str> = cols.iter().map(|&j| data.names()[j].as_str()).collect();
    if data.subjects().is_some() {
        header.push("subject");
    }
    header.push(response);
    w.write_record(&header)?;
    for i in 0..data.n() {
        let mut rec: Vec<String> = cols.iter().map(|&j| format!("{:?}", data.x()[(i, j)])).collect();
        if let Some(s) = data.subjects() {
            rec.push(data.subject_labels()[s[i]].clone());
        }
        rec.push(format!("{:?}", data.y()[i]));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

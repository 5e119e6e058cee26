//! Gaussian-process regression with a Matérn-5/2 ARD kernel.
//!
//! Inputs live in the unit cube; targets are standardized per fit. Predictions
//! are returned in the original target units.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

const SQRT5: f64 = 2.236_067_977_499_79;

/// Diagonal jitter schedule tried in order until the Gram matrix factors.
pub const JITTER_SCHEDULE: [f64; 4] = [0.0, 1e-6, 1e-5, 1e-4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matern52 {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
}

impl Matern52 {
    pub fn isotropic(dim: usize, lengthscale: f64, signal_variance: f64) -> Self {
        Self {
            lengthscales: vec![lengthscale; dim],
            signal_variance,
        }
    }

    fn scaled_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(&self.lengthscales)
            .map(|((x, y), l)| {
                let d = (x - y) / l;
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let r = self.scaled_distance(a, b);
        self.signal_variance * (1.0 + SQRT5 * r + 5.0 / 3.0 * r * r) * (-SQRT5 * r).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpFitConfig {
    pub restarts: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    /// Smallest noise variance the optimizer may reach (standardized units).
    /// Doubles as the base diagonal jitter of fitted models.
    pub min_noise: f64,
}

impl Default for GpFitConfig {
    fn default() -> Self {
        Self {
            restarts: 4,
            iterations: 60,
            learning_rate: 0.1,
            min_noise: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GpModel {
    pub kernel: Matern52,
    pub noise_variance: f64,
    pub jitter: f64,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    y_mean: f64,
    y_scale: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

fn standardize(targets: &[f64]) -> (f64, f64) {
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let var = targets.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
    let scale = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
    (mean, scale)
}

fn gram(kernel: &Matern52, inputs: &[Vec<f64>]) -> DMatrix<f64> {
    let n = inputs.len();
    DMatrix::from_fn(n, n, |i, j| kernel.eval(&inputs[i], &inputs[j]))
}

fn factor(mut k: DMatrix<f64>, noise: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = k.nrows();
    for i in 0..n {
        k[(i, i)] += noise;
    }
    for jitter in JITTER_SCHEDULE {
        let mut kj = k.clone();
        for i in 0..n {
            kj[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(kj) {
            return Ok((c, jitter));
        }
    }
    Err(Error::Fit(format!(
        "Gram matrix not positive definite after jitter {}",
        JITTER_SCHEDULE[JITTER_SCHEDULE.len() - 1]
    )))
}

fn check_inputs(inputs: &[Vec<f64>], targets: &[f64]) -> Result<usize> {
    if inputs.len() != targets.len() {
        return Err(Error::Fit(format!("{} inputs but {} targets", inputs.len(), targets.len())));
    }
    let Some(first) = inputs.first() else {
        return Err(Error::Fit("no training data".into()));
    };
    let d = first.len();
    if inputs.iter().any(|x| x.len() != d) {
        return Err(Error::Fit("inputs have inconsistent dimension".into()));
    }
    if targets.iter().any(|y| !y.is_finite()) {
        return Err(Error::Fit("non-finite target".into()));
    }
    Ok(d)
}

impl GpModel {
    /// Conditions a GP with fixed hyperparameters on the data.
    pub fn with_hyperparameters(
        inputs: &[Vec<f64>],
        targets: &[f64],
        kernel: Matern52,
        noise_variance: f64,
    ) -> Result<Self> {
        let d = check_inputs(inputs, targets)?;
        if kernel.lengthscales.len() != d || kernel.lengthscales.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::Fit("lengthscales must be positive, one per input dimension".into()));
        }
        let (y_mean, y_scale) = standardize(targets);
        let y = DVector::from_iterator(targets.len(), targets.iter().map(|t| (t - y_mean) / y_scale));
        let (chol, jitter) = factor(gram(&kernel, inputs), noise_variance)?;
        let alpha = chol.solve(&y);
        Ok(Self {
            kernel,
            noise_variance,
            jitter,
            inputs: inputs.to_vec(),
            targets: targets.to_vec(),
            y_mean,
            y_scale,
            chol,
            alpha,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Log marginal likelihood of the standardized targets.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.len() as f64;
        let y = DVector::from_iterator(self.len(), self.targets.iter().map(|t| (t - self.y_mean) / self.y_scale));
        let log_det: f64 = self.chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
        -0.5 * y.dot(&self.alpha) - 0.5 * log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }

    fn cross(&self, query: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.inputs.iter().map(|x| self.kernel.eval(x, query)))
    }

    /// Predictive mean and variance of the latent function at `query`.
    pub fn posterior(&self, query: &[f64]) -> (f64, f64) {
        let ks = self.cross(query);
        let mean = ks.dot(&self.alpha);
        let v = self.chol.l().solve_lower_triangular(&ks).expect("triangular factor is invertible");
        let var = (self.kernel.signal_variance - v.dot(&v)).max(0.0);
        (self.y_mean + self.y_scale * mean, self.y_scale * self.y_scale * var)
    }

    /// Joint predictive mean vector and covariance matrix over several queries.
    pub fn posterior_joint(&self, queries: &[Vec<f64>]) -> (Vec<f64>, DMatrix<f64>) {
        let q = queries.len();
        let mut means = Vec::with_capacity(q);
        let mut vs = Vec::with_capacity(q);
        for x in queries {
            let ks = self.cross(x);
            means.push(self.y_mean + self.y_scale * ks.dot(&self.alpha));
            vs.push(self.chol.l().solve_lower_triangular(&ks).expect("triangular factor is invertible"));
        }
        let s2 = self.y_scale * self.y_scale;
        let cov = DMatrix::from_fn(q, q, |i, j| s2 * (self.kernel.eval(&queries[i], &queries[j]) - vs[i].dot(&vs[j])));
        (means, cov)
    }
}

pub fn gp_posterior(model: &GpModel, query: &[f64]) -> (f64, f64) {
    model.posterior(query)
}

/// Log marginal likelihood and its gradient w.r.t. `(ln l_1..ln l_d, ln s2, ln noise)`.
fn lml_and_grad(inputs: &[Vec<f64>], y: &DVector<f64>, theta: &[f64]) -> Option<(f64, Vec<f64>)> {
    let d = inputs[0].len();
    let n = inputs.len();
    let kernel = Matern52 {
        lengthscales: theta[..d].iter().map(|t| t.exp()).collect(),
        signal_variance: theta[d].exp(),
    };
    let noise = theta[d + 1].exp();
    let (chol, _) = factor(gram(&kernel, inputs), noise).ok()?;
    let alpha = chol.solve(y);
    let log_det: f64 = chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
    let lml = -0.5 * y.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    // W = alpha alpha^T - K^-1; dL/dtheta = 0.5 * sum(W .* dK/dtheta)
    let w = &alpha * alpha.transpose() - chol.inverse();
    let mut grad = vec![0.0; d + 2];
    for i in 0..n {
        for j in 0..n {
            let r = kernel.scaled_distance(&inputs[i], &inputs[j]);
            let e = (-SQRT5 * r).exp();
            let k_ij = kernel.signal_variance * (1.0 + SQRT5 * r + 5.0 / 3.0 * r * r) * e;
            let common = kernel.signal_variance * 5.0 / 3.0 * (1.0 + SQRT5 * r) * e;
            let wij = w[(i, j)];
            for (k, g) in grad[..d].iter_mut().enumerate() {
                let delta = (inputs[i][k] - inputs[j][k]) / kernel.lengthscales[k];
                *g += 0.5 * wij * common * delta * delta;
            }
            grad[d] += 0.5 * wij * k_ij;
        }
        grad[d + 1] += 0.5 * w[(i, i)] * noise;
    }
    Some((lml, grad))
}

/// Fits hyperparameters by multi-start Adam ascent on the log marginal likelihood.
pub fn gp_fit<R: Rng + ?Sized>(inputs: &[Vec<f64>], targets: &[f64], cfg: &GpFitConfig, rng: &mut R) -> Result<GpModel> {
    let d = check_inputs(inputs, targets)?;
    if inputs.len() < 2 {
        return Err(Error::Fit("need at least two observations".into()));
    }
    let (y_mean, y_scale) = standardize(targets);
    let y = DVector::from_iterator(targets.len(), targets.iter().map(|t| (t - y_mean) / y_scale));

    let mut lower = vec![(0.01f64).ln(); d];
    let mut upper = vec![(20.0f64).ln(); d];
    lower.extend([(0.05f64).ln(), cfg.min_noise.ln()]);
    upper.extend([(20.0f64).ln(), (1.0f64).ln()]);

    let mut best: Option<(f64, Vec<f64>)> = None;
    for restart in 0..cfg.restarts.max(1) {
        let mut theta: Vec<f64> = if restart == 0 {
            let mut t = vec![(0.5f64).ln(); d];
            t.extend([0.0, (1e-4f64).ln()]);
            t
        } else {
            let mut t: Vec<f64> = (0..d).map(|_| rng.random_range((0.05f64).ln()..(2.0f64).ln())).collect();
            t.push(rng.random_range((0.5f64).ln()..(2.0f64).ln()));
            t.push(rng.random_range((1e-6f64).ln()..(1e-2f64).ln()));
            t
        };
        let mut m = vec![0.0; d + 2];
        let mut v = vec![0.0; d + 2];
        let (b1, b2) = (0.9, 0.999);
        for step in 1..=cfg.iterations {
            let Some((lml, grad)) = lml_and_grad(inputs, &y, &theta) else {
                break;
            };
            if best.as_ref().is_none_or(|(b, _)| lml > *b) {
                best = Some((lml, theta.clone()));
            }
            for k in 0..theta.len() {
                m[k] = b1 * m[k] + (1.0 - b1) * grad[k];
                v[k] = b2 * v[k] + (1.0 - b2) * grad[k] * grad[k];
                let mh = m[k] / (1.0 - b1.powi(step as i32));
                let vh = v[k] / (1.0 - b2.powi(step as i32));
                theta[k] = (theta[k] + cfg.learning_rate * mh / (vh.sqrt() + 1e-8)).clamp(lower[k], upper[k]);
            }
        }
        if let Some((lml, _)) = lml_and_grad(inputs, &y, &theta) {
            if best.as_ref().is_none_or(|(b, _)| lml > *b) {
                best = Some((lml, theta.clone()));
            }
        }
    }
    let (_, theta) = best.ok_or_else(|| Error::Fit("no hyperparameter setting gave a factorizable Gram matrix".into()))?;
    let kernel = Matern52 {
        lengthscales: theta[..d].iter().map(|t| t.exp()).collect(),
        signal_variance: theta[d].exp(),
    };
    GpModel::with_hyperparameters(inputs, targets, kernel, theta[d + 1].exp())
}

/// Per-query Monte-Carlo EI with common random numbers:
/// `EI_j = mean_i max(mu_j + sigma_j * eps_i - best, 0)`.
pub fn mc_expected_improvement<R: Rng + ?Sized>(
    model: &GpModel,
    queries: &[Vec<f64>],
    best: f64,
    samples: usize,
    rng: &mut R,
) -> Vec<f64> {
    let eps = stratified_normals(samples.max(1), rng);
    queries
        .iter()
        .map(|q| {
            let (mu, var) = model.posterior(q);
            let sd = var.sqrt();
            eps.iter().map(|e| (mu + sd * e - best).max(0.0)).sum::<f64>() / eps.len() as f64
        })
        .collect()
}

/// Batch expected improvement: `(1/Z) sum_i max_j max(xi_ij - best, 0)` with
/// `xi_i` drawn from the joint posterior over the batch.
pub fn batch_expected_improvement<R: Rng + ?Sized>(
    model: &GpModel,
    queries: &[Vec<f64>],
    best: f64,
    samples: usize,
    rng: &mut R,
) -> f64 {
    let q = queries.len();
    if q == 0 {
        return 0.0;
    }
    let (means, mut cov) = model.posterior_joint(queries);
    let mut l = None;
    for jitter in [0.0, 1e-12, 1e-10, 1e-8, 1e-6] {
        let mut c = cov.clone();
        for i in 0..q {
            c[(i, i)] += jitter * (1.0 + c[(i, i)].abs());
        }
        if let Some(ch) = Cholesky::new(c) {
            l = Some(ch.l());
            break;
        }
    }
    let l = l.unwrap_or_else(|| {
        // fall back to independent marginals
        for i in 0..q {
            for j in 0..q {
                if i != j {
                    cov[(i, j)] = 0.0;
                }
            }
        }
        DMatrix::from_fn(q, q, |i, j| if i == j { cov[(i, i)].max(0.0).sqrt() } else { 0.0 })
    });
    let z = samples.max(1);
    let columns: Vec<Vec<f64>> = (0..q)
        .map(|_| {
            let mut c = stratified_normals(z, rng);
            c.shuffle(rng);
            c
        })
        .collect();
    let mut total = 0.0;
    for i in 0..z {
        let e = DVector::from_iterator(q, columns.iter().map(|c| c[i]));
        let xi = &l * e;
        let gain = (0..q).map(|j| (means[j] + xi[j] - best).max(0.0)).fold(0.0, f64::max);
        total += gain;
    }
    total / z as f64
}

/// `n` standard-normal draws, one per equal-probability stratum.
pub fn stratified_normals<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let normal = Normal::standard();
    (0..n)
        .map(|i| {
            let u: f64 = rng.random();
            let p = ((i as f64 + u) / n as f64).clamp(1e-300, 1.0 - 1e-16);
            normal.inverse_cdf(p)
        })
        .collect()
}

/// Closed-form EI of a Gaussian with mean `mu` and standard deviation `sigma`.
pub fn analytic_expected_improvement(mu: f64, sigma: f64, best: f64) -> f64 {
    if sigma <= 0.0 {
        return (mu - best).max(0.0);
    }
    let z = (mu - best) / sigma;
    sigma * normal_pdf(z) + (mu - best) * normal_cdf(z)
}

fn normal_pdf(z: f64) -> f64 {
    Normal::standard().pdf(z)
}

fn normal_cdf(z: f64) -> f64 {
    Normal::standard().cdf(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kernel_at_zero_distance_is_signal_variance() {
        let k = Matern52::isotropic(2, 0.3, 1.7);
        assert_eq!(k.eval(&[0.2, 0.4], &[0.2, 0.4]), 1.7);
        assert!(k.eval(&[0.0, 0.0], &[1.0, 1.0]) < 1.7);
    }

    #[test]
    fn lml_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<Vec<f64>> = (0..6).map(|_| vec![rng.random(), rng.random()]).collect();
        let y = DVector::from_iterator(6, (0..6).map(|i| (i as f64 * 0.7).sin()));
        let theta = vec![(0.4f64).ln(), (0.7f64).ln(), 0.2, (1e-3f64).ln()];
        let (_, g) = lml_and_grad(&x, &y, &theta).unwrap();
        for k in 0..theta.len() {
            let h = 1e-5;
            let mut tp = theta.clone();
            tp[k] += h;
            let mut tm = theta.clone();
            tm[k] -= h;
            let fd = (lml_and_grad(&x, &y, &tp).unwrap().0 - lml_and_grad(&x, &y, &tm).unwrap().0) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-5 * (1.0 + fd.abs()), "{k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn fit_is_deterministic_under_seed() {
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 / 7.0]).collect();
        let y: Vec<f64> = x.iter().map(|v| (6.0 * v[0]).sin()).collect();
        let a = gp_fit(&x, &y, &GpFitConfig::default(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = gp_fit(&x, &y, &GpFitConfig::default(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a.kernel, b.kernel);
        assert_eq!(a.noise_variance, b.noise_variance);
    }

    #[test]
    fn analytic_ei_limits() {
        assert_eq!(analytic_expected_improvement(2.0, 0.0, 1.0), 1.0);
        assert!((analytic_expected_improvement(0.0, 1.0, 0.0) - normal_pdf(0.0)).abs() < 1e-15);
        assert!(analytic_expected_improvement(-50.0, 1.0, 0.0) < 1e-300);
    }
}

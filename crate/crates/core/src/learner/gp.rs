//! Gaussian-process regression on the unit box with a squared-exponential
//! kernel, used as the surrogate in GP-UCB.

/// Lower-triangular Cholesky factor of a symmetric matrix stored row-major.
/// Returns `None` if the matrix is not numerically positive definite.
pub(crate) fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Solves `L x = b` in place.
fn forward(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * n + k] * b[k];
        }
        b[i] = sum / l[i * n + i];
    }
}

/// Solves `L^T x = b` in place.
fn backward(l: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let mut sum = b[i];
        for k in i + 1..n {
            sum -= l[k * n + i] * b[k];
        }
        b[i] = sum / l[i * n + i];
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// A fitted GP on standardized targets (unit signal variance).
#[derive(Debug, Clone)]
pub(crate) struct GaussianProcess {
    x: Vec<Vec<f64>>,
    chol: Vec<f64>,
    alpha: Vec<f64>,
    length_scale: f64,
    y_mean: f64,
    y_scale: f64,
    log_marginal: f64,
}

impl GaussianProcess {
    /// Fits with the given length scale; jitter grows until the kernel
    /// matrix factors.
    pub(crate) fn fit(x: &[Vec<f64>], y: &[f64], length_scale: f64, noise: f64) -> Option<Self> {
        let n = x.len();
        if n == 0 || n != y.len() {
            return None;
        }
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n as f64;
        let y_scale = if var > 1e-24 { var.sqrt() } else { 1.0 };
        let ys: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_scale).collect();

        let inv = 1.0 / (2.0 * length_scale * length_scale);
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = (-sq_dist(&x[i], &x[j]) * inv).exp();
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        let mut jitter = noise.max(1e-10);
        let chol = loop {
            let mut kj = k.clone();
            for i in 0..n {
                kj[i * n + i] += jitter;
            }
            if let Some(l) = cholesky(&kj, n) {
                break l;
            }
            jitter *= 10.0;
            if jitter > 1.0 {
                return None;
            }
        };
        let mut alpha = ys.clone();
        forward(&chol, n, &mut alpha);
        backward(&chol, n, &mut alpha);
        let fit_term: f64 = ys.iter().zip(&alpha).map(|(a, b)| a * b).sum();
        let log_det: f64 = (0..n).map(|i| chol[i * n + i].ln()).sum();
        let log_marginal =
            -0.5 * fit_term - log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        Some(Self { x: x.to_vec(), chol, alpha, length_scale, y_mean, y_scale, log_marginal })
    }

    /// Fits once per candidate length scale and keeps the highest marginal
    /// likelihood.
    pub(crate) fn fit_best(x: &[Vec<f64>], y: &[f64], length_scales: &[f64], noise: f64) -> Option<Self> {
        length_scales
            .iter()
            .filter_map(|&ls| Self::fit(x, y, ls, noise))
            .fold(None, |best: Option<Self>, gp| match best {
                Some(b) if b.log_marginal >= gp.log_marginal => Some(b),
                _ => Some(gp),
            })
    }

    /// Posterior mean and standard deviation in the original target units.
    pub(crate) fn predict(&self, p: &[f64]) -> (f64, f64) {
        let n = self.x.len();
        let inv = 1.0 / (2.0 * self.length_scale * self.length_scale);
        let mut k: Vec<f64> = self.x.iter().map(|xi| (-sq_dist(xi, p) * inv).exp()).collect();
        let mean: f64 = k.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        forward(&self.chol, n, &mut k);
        let var = (1.0 - k.iter().map(|v| v * v).sum::<f64>()).max(1e-12);
        (self.y_mean + mean * self.y_scale, var.sqrt() * self.y_scale)
    }
}

//! Shared numerical kernels: Gaussian sampling from precision matrices,
//! log densities, and Wishart-family draws.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::error::Error;
use crate::Result;

pub const LN_2PI: f64 = 1.8378770664093453;

/// Symmetrize in place; guards against drift from accumulated round-off.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Cholesky with a small escalating jitter fallback. Errors only if the matrix
/// stays indefinite after the largest jitter.
pub fn cholesky_with_jitter(m: &DMatrix<f64>, context: &str) -> Result<Cholesky<f64, Dyn>> {
    if let Some(ch) = Cholesky::new(m.clone()) {
        return Ok(ch);
    }
    let scale = m.diagonal().amax().max(1.0);
    for &eps in &[1e-12, 1e-10, 1e-8] {
        let jittered = m + DMatrix::identity(m.nrows(), m.ncols()) * (eps * scale);
        if let Some(ch) = Cholesky::new(jittered) {
            return Ok(ch);
        }
    }
    Err(Error::Numerical(format!(
        "Cholesky factorization failed in {context} (n = {})",
        m.nrows()
    )))
}

/// Solve A x = b through an existing Cholesky factor.
pub fn chol_solve(chol: &Cholesky<f64, Dyn>, b: &DVector<f64>) -> DVector<f64> {
    chol.solve(b)
}

/// Draw x ~ N(mean, P^-1) given the precision matrix P.
///
/// Uses P = L L^T and x = mean + L^-T z with z standard normal, so the draw
/// costs one factorization and one triangular solve.
pub fn sample_mvn_from_precision<R: Rng>(
    mean: &DVector<f64>,
    precision: &DMatrix<f64>,
    rng: &mut R,
    context: &str,
) -> Result<DVector<f64>> {
    let chol = cholesky_with_jitter(precision, context)?;
    sample_mvn_from_precision_chol(mean, &chol, rng)
}

/// Same draw when the caller already factorized the precision.
pub fn sample_mvn_from_precision_chol<R: Rng>(
    mean: &DVector<f64>,
    chol: &Cholesky<f64, Dyn>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let n = mean.len();
    let z = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
    let x = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::Numerical("singular Cholesky factor in MVN draw".into()))?;
    Ok(mean + x)
}

/// Gaussian conditional expressed by its natural parameters: precision P and
/// the shift b = P * mean. Shared by every conjugate Gaussian update so the
/// density-ratio checks can evaluate the same object the sampler draws from.
#[derive(Debug, Clone)]
pub struct GaussianConditional {
    pub precision: DMatrix<f64>,
    pub shift: DVector<f64>,
}

impl GaussianConditional {
    pub fn mean(&self) -> Result<DVector<f64>> {
        let chol = cholesky_with_jitter(&self.precision, "GaussianConditional::mean")?;
        Ok(chol_solve(&chol, &self.shift))
    }

    pub fn sample<R: Rng>(&self, rng: &mut R, context: &str) -> Result<DVector<f64>> {
        let chol = cholesky_with_jitter(&self.precision, context)?;
        let mean = chol_solve(&chol, &self.shift);
        sample_mvn_from_precision_chol(&mean, &chol, rng)
    }

    /// Log density at x (full normalizing constant included).
    pub fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        let chol = cholesky_with_jitter(&self.precision, "GaussianConditional::log_density")?;
        let mean = chol_solve(&chol, &self.shift);
        let r = x - mean;
        let quad = r.dot(&(&self.precision * &r));
        let log_det: f64 = chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
        Ok(0.5 * (log_det - x.len() as f64 * LN_2PI - quad))
    }
}

/// Log density of N(mean, cov) evaluated densely. Used by oracles and the
/// stacked spatial-effect generator, not by the sampler hot path.
pub fn mvn_log_density_cov(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let chol = cholesky_with_jitter(cov, "mvn_log_density_cov")?;
    let r = x - mean;
    let half = chol
        .l()
        .solve_lower_triangular(&r)
        .ok_or_else(|| Error::Numerical("singular covariance".into()))?;
    let quad = half.dot(&half);
    let log_det: f64 = chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
    Ok(-0.5 * (x.len() as f64 * LN_2PI + log_det + quad))
}

/// Gamma(shape, rate) log density.
pub fn gamma_log_density(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// inv-Gamma(shape, scale) log density, mean scale / (shape - 1).
pub fn inv_gamma_log_density(x: f64, shape: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - scale / x
}

/// Beta(a, b) log density on (0, 1).
pub fn beta_log_density(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return f64::NEG_INFINITY;
    }
    ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln()
}

/// Draw from Gamma(shape, rate).
pub fn sample_gamma<R: Rng>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    let g = rand_distr::Gamma::new(shape, 1.0 / rate).expect("gamma parameters");
    g.sample(rng)
}

/// Draw from inv-Gamma(shape, scale).
pub fn sample_inv_gamma<R: Rng>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    1.0 / sample_gamma(shape, scale, rng)
}

/// Multivariate log gamma function of dimension p.
pub fn ln_multivariate_gamma(p: usize, a: f64) -> f64 {
    let mut acc = 0.25 * (p * (p - 1)) as f64 * std::f64::consts::PI.ln();
    for i in 1..=p {
        acc += ln_gamma(a + 0.5 * (1.0 - i as f64));
    }
    acc
}

/// inv-Wishart(df, scale) log density at spd matrix `x`.
pub fn inv_wishart_log_density(x: &DMatrix<f64>, df: f64, scale: &DMatrix<f64>) -> Result<f64> {
    let p = x.nrows();
    let chol_x = cholesky_with_jitter(x, "inv_wishart_log_density x")?;
    let chol_s = cholesky_with_jitter(scale, "inv_wishart_log_density scale")?;
    let log_det_x: f64 = chol_x.l().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
    let log_det_s: f64 = chol_s.l().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
    // tr(S X^-1) via solves against X.
    let mut trace = 0.0;
    for j in 0..p {
        let col = DVector::from_fn(p, |i, _| scale[(i, j)]);
        let solved = chol_x.solve(&col);
        trace += solved[j];
    }
    Ok(0.5 * df * log_det_s
        - 0.5 * df * p as f64 * std::f64::consts::LN_2
        - ln_multivariate_gamma(p, 0.5 * df)
        - 0.5 * (df + p as f64 + 1.0) * log_det_x
        - 0.5 * trace)
}

/// Draw from inv-Wishart(df, scale) via a Bartlett-decomposed Wishart of the
/// inverse scale: if W ~ Wishart(df, scale^-1) then W^-1 ~ inv-Wishart(df, scale).
pub fn sample_inv_wishart<R: Rng>(df: f64, scale: &DMatrix<f64>, rng: &mut R) -> Result<DMatrix<f64>> {
    let p = scale.nrows();
    if df <= (p - 1) as f64 {
        return Err(Error::InvalidConfig(format!(
            "inv-Wishart degrees of freedom {df} must exceed dim - 1 = {}",
            p - 1
        )));
    }
    // scale^-1 = (L L^T)^-1; its Cholesky factor is L^-T up to orientation, so
    // factor the explicit inverse instead to keep the algebra simple.
    let chol_scale = cholesky_with_jitter(scale, "sample_inv_wishart scale")?;
    let scale_inv = chol_scale.inverse();
    let chol_v = cholesky_with_jitter(&scale_inv, "sample_inv_wishart inverse scale")?;
    let l = chol_v.l();

    let mut a = DMatrix::zeros(p, p);
    for i in 0..p {
        let chi = ChiSquared::new(df - i as f64).expect("chi-squared dof");
        a[(i, i)] = chi.sample(rng).max(1e-300).sqrt();
        for j in 0..i {
            a[(i, j)] = StandardNormal.sample(rng);
        }
    }
    let f = &l * a;
    let w = &f * f.transpose(); // Wishart(df, scale^-1)
    let chol_w = cholesky_with_jitter(&w, "sample_inv_wishart w")?;
    let mut inv = chol_w.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

//! Temporal design vectors built from lagged responses, and multi-step
//! forecasting by recursing the fitted autoregression forward.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Covariates, ObservationPanel};
use crate::error::Error;
use crate::linalg::quantile;
use crate::model::ModelState;
use crate::Result;

/// Which lagged responses enter the design vector. Autoregressive lags come
/// first, seasonal lags after, and that order fixes the layout of every
/// cluster coefficient block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagSpec {
    pub ar_lags: Vec<usize>,
    pub seasonal_lags: Vec<usize>,
}

impl LagSpec {
    pub fn new(ar_lags: Vec<usize>, seasonal_lags: Vec<usize>) -> Result<Self> {
        let spec = Self {
            ar_lags,
            seasonal_lags,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let all = self.all_lags();
        if all.is_empty() {
            return Err(Error::InvalidConfig("lag specification is empty".into()));
        }
        if all.iter().any(|&l| l == 0) {
            return Err(Error::InvalidConfig("lags must be positive".into()));
        }
        let mut sorted = all.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != all.len() {
            return Err(Error::InvalidConfig("lags must be distinct".into()));
        }
        Ok(())
    }

    /// All lags in design order: autoregressive then seasonal.
    pub fn all_lags(&self) -> Vec<usize> {
        self.ar_lags
            .iter()
            .chain(self.seasonal_lags.iter())
            .copied()
            .collect()
    }

    /// Design dimension per disease.
    pub fn q(&self) -> usize {
        self.ar_lags.len() + self.seasonal_lags.len()
    }

    pub fn q_max(&self) -> usize {
        self.all_lags().into_iter().max().unwrap_or(0)
    }
}

/// Lagged design vectors Z over the usable time range `t_start..n_times`
/// (0-indexed). Every entry is a verbatim copy of some response value.
#[derive(Debug, Clone)]
pub struct TemporalDesign {
    spec: LagSpec,
    n_areas: usize,
    n_times: usize,
    n_diseases: usize,
    t_start: usize,
    z: Vec<f64>,
}

impl TemporalDesign {
    pub fn spec(&self) -> &LagSpec {
        &self.spec
    }

    /// First usable (0-indexed) time.
    pub fn t_start(&self) -> usize {
        self.t_start
    }

    /// Number of usable time points.
    pub fn t_effective(&self) -> usize {
        self.n_times - self.t_start
    }

    pub fn q(&self) -> usize {
        self.spec.q()
    }

    /// Design vector Z_{itd} for an absolute time index in the usable range.
    #[inline]
    pub fn z(&self, area: usize, time: usize, disease: usize) -> &[f64] {
        debug_assert!(area < self.n_areas);
        debug_assert!(time >= self.t_start && time < self.n_times);
        let q = self.spec.q();
        let t_rel = time - self.t_start;
        let base = ((area * self.t_effective() + t_rel) * self.n_diseases + disease) * q;
        &self.z[base..base + q]
    }
}

/// Build Z from the panel: Z_{itd} holds y_{i,t-l,d} for each lag l, for every
/// t with all lags in range. Rejects panels with no usable time point.
pub fn build_design(data: &ObservationPanel, spec: &LagSpec) -> Result<TemporalDesign> {
    spec.validate()?;
    let q_max = spec.q_max();
    if data.n_times() <= q_max {
        return Err(Error::InvalidData(format!(
            "need more than {q_max} time points for maximum lag {q_max}, got {}",
            data.n_times()
        )));
    }
    let t_start = q_max;
    let lags = spec.all_lags();
    let t_eff = data.n_times() - t_start;
    let mut z = Vec::with_capacity(data.n_areas() * t_eff * data.n_diseases() * spec.q());
    for i in 0..data.n_areas() {
        for t in t_start..data.n_times() {
            for d in 0..data.n_diseases() {
                for &l in &lags {
                    z.push(data.y(i, t - l, d));
                }
            }
        }
    }
    Ok(TemporalDesign {
        spec: spec.clone(),
        n_areas: data.n_areas(),
        n_times: data.n_times(),
        n_diseases: data.n_diseases(),
        t_start,
        z,
    })
}

/// Per-draw forecast trajectories over (draw, area, horizon, disease).
#[derive(Debug, Clone)]
pub struct ForecastDraws {
    n_areas: usize,
    horizon: usize,
    n_diseases: usize,
    draws: Vec<f64>,
    n_draws: usize,
    /// True when some seasonal lag reached past the observed series and had to
    /// read the simulated trajectory instead.
    pub seasonal_recursion: bool,
}

/// One summarized forecast cell: posterior mean and central 95% interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastPoint {
    /// 0-indexed area.
    pub area: usize,
    /// 0-indexed disease.
    pub disease: usize,
    /// 1-indexed step ahead.
    pub horizon: usize,
    pub mean: f64,
    pub lo95: f64,
    pub hi95: f64,
}

impl ForecastDraws {
    pub fn n_draws(&self) -> usize {
        self.n_draws
    }

    pub fn values(&self, area: usize, h: usize, disease: usize) -> Vec<f64> {
        (0..self.n_draws)
            .map(|s| self.draws[((s * self.n_areas + area) * self.horizon + h) * self.n_diseases + disease])
            .collect()
    }

    pub fn summarize(&self) -> Vec<ForecastPoint> {
        let mut out = Vec::with_capacity(self.n_areas * self.horizon * self.n_diseases);
        for i in 0..self.n_areas {
            for d in 0..self.n_diseases {
                for h in 0..self.horizon {
                    let mut vals = self.values(i, h, d);
                    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                    out.push(ForecastPoint {
                        area: i,
                        disease: d,
                        horizon: h + 1,
                        mean,
                        lo95: quantile(&vals, 0.025),
                        hi95: quantile(&vals, 0.975),
                    });
                }
            }
        }
        out
    }
}

/// Iterate the fitted model `horizon` steps past the end of the panel, once
/// per saved state. Each draw feeds its own sampled trajectory back into the
/// lagged positions, so predictive intervals widen with the horizon; seasonal
/// lags read the observed series as long as it reaches. Future covariate rows
/// must cover the horizon.
pub fn forecast(
    states: &[ModelState],
    data: &ObservationPanel,
    spec: &LagSpec,
    horizon: usize,
    future_covariates: &Covariates,
    noisy: bool,
    seed: u64,
) -> Result<ForecastDraws> {
    if horizon == 0 {
        return Err(Error::InvalidConfig("forecast horizon must be positive".into()));
    }
    if states.is_empty() {
        return Err(Error::InvalidConfig("empty chain".into()));
    }
    if future_covariates.n_times() < horizon {
        return Err(Error::InvalidData(format!(
            "future covariates cover {} steps, horizon is {horizon}",
            future_covariates.n_times()
        )));
    }
    if future_covariates.n_covariates() != data.n_covariates() {
        return Err(Error::DimensionMismatch(
            "future covariates do not match the fitted covariate set".into(),
        ));
    }
    let n = data.n_areas();
    let t_obs = data.n_times();
    let d_count = data.n_diseases();
    for (s, st) in states.iter().enumerate() {
        st.check_dimensions(n, d_count, data.n_covariates(), spec.q())
            .map_err(|e| Error::DimensionMismatch(format!("state {s}: {e}")))?;
    }
    let lags = spec.all_lags();
    let n_seasonal = spec.seasonal_lags.len();
    let seasonal_start = spec.ar_lags.len();
    let q = spec.q();

    let results: Vec<(Vec<f64>, bool)> = states
        .par_iter()
        .enumerate()
        .map(|(s, state)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64 + 1);
            let normal = Normal::new(0.0, 1.0).unwrap();
            let mut recursed = false;
            // Simulated continuation per (area, step, disease).
            let mut sim = vec![0.0f64; n * horizon * d_count];
            let read = |sim: &Vec<f64>, i: usize, t_abs: usize, d: usize| -> f64 {
                if t_abs < t_obs {
                    data.y(i, t_abs, d)
                } else {
                    sim[(i * horizon + (t_abs - t_obs)) * d_count + d]
                }
            };
            for h in 0..horizon {
                let t_abs = t_obs + h;
                for i in 0..n {
                    let j = state.partition.label(i);
                    for d in 0..d_count {
                        let x = future_covariates.row(i, h, d);
                        let beta_d = state.beta_block(d);
                        let mut mean = 0.0;
                        for (l, &xv) in x.iter().enumerate() {
                            mean += xv * beta_d[l];
                        }
                        let gamma = state.gamma_block(j, d);
                        for (pos, &lag) in lags.iter().enumerate() {
                            if pos >= seasonal_start && n_seasonal > 0 && t_abs >= t_obs + lag {
                                recursed = true;
                            }
                            mean += gamma[pos] * read(&sim, i, t_abs - lag, d);
                        }
                        mean += state.phi[(i, d)];
                        let var = state.sigma_star[j][d];
                        let value = if noisy && var > 0.0 {
                            mean + normal.sample(&mut rng) * var.sqrt()
                        } else {
                            mean
                        };
                        sim[(i * horizon + h) * d_count + d] = value;
                        if !value.is_finite() || value.abs() > 1e12 {
                            return Err(Error::Numerical(format!(
                                "forecast recursion diverged at area {i}, step {}",
                                h + 1
                            )));
                        }
                    }
                }
            }
            Ok((sim, recursed))
        })
        .collect::<Result<Vec<_>>>()?;

    let n_draws = results.len();
    let mut draws = Vec::with_capacity(n_draws * n * horizon * d_count);
    let mut seasonal_recursion = false;
    for (sim, rec) in results {
        seasonal_recursion |= rec;
        draws.extend_from_slice(&sim);
    }
    let _ = q;
    Ok(ForecastDraws {
        n_areas: n,
        horizon,
        n_diseases: d_count,
        draws,
        n_draws,
        seasonal_recursion,
    })
}

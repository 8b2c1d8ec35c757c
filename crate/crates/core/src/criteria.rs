//! Model fit and comparison metrics: pointwise log likelihoods, information
//! criteria (AIC, BIC, DIC, WAIC with their effective-parameter corrections),
//! RMSE, and the plug-in state the headline numbers are evaluated at.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::ObservationPanel;
use crate::error::Error;
use crate::linalg::LN_2PI;
use crate::model::ModelState;
use crate::partition::{estimate_partition_vi, Partition};
use crate::temporal::TemporalDesign;
use crate::Result;

/// Fit summary serialized as JSON and as a one-line CSV across runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub log_likelihood: f64,
    pub rmse: f64,
    pub p_total: usize,
    pub aic: f64,
    pub bic: f64,
    pub p_dic: Option<f64>,
    pub dic: Option<f64>,
    pub p_waic: Option<f64>,
    pub waic: Option<f64>,
    pub n_obs: usize,
}

impl FitReport {
    pub fn csv_header() -> &'static str {
        "log_likelihood,rmse,p_total,aic,bic,p_dic,dic,p_waic,waic,n_obs"
    }

    pub fn csv_line(&self) -> String {
        let opt = |v: &Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.log_likelihood,
            self.rmse,
            self.p_total,
            self.aic,
            self.bic,
            opt(&self.p_dic),
            opt(&self.dic),
            opt(&self.p_waic),
            opt(&self.waic),
            self.n_obs
        )
    }
}

/// Gaussian log density of every observation under every saved state:
/// one row per draw, one column per (area, usable time, disease) cell.
pub fn pointwise_loglik(
    states: &[ModelState],
    data: &ObservationPanel,
    design: &TemporalDesign,
) -> Result<Vec<Vec<f64>>> {
    if states.is_empty() {
        return Err(Error::InvalidConfig("empty chain".into()));
    }
    let n = data.n_areas();
    let t0 = design.t_start();
    let d_count = data.n_diseases();
    for st in states {
        st.check_dimensions(n, d_count, data.n_covariates(), design.q())?;
    }
    let mut rows = Vec::with_capacity(states.len());
    for st in states {
        let mut row = Vec::with_capacity(n * design.t_effective() * d_count);
        for i in 0..n {
            let j = st.partition.label(i);
            for t in t0..data.n_times() {
                for d in 0..d_count {
                    let var = st.sigma_star[j][d];
                    let r = data.y(i, t, d) - st.mean(data, design, i, t, d);
                    row.push(-0.5 * (LN_2PI + var.ln()) - 0.5 * r * r / var);
                }
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Number of realized parameters at a state: regression and temporal
/// coefficients, cluster variances, spatial effects, bridge pairs,
/// autocorrelations, spatial scales, the variance-level parameter, and the
/// temporal prior mean and covariance (free symmetric entries).
pub fn total_parameters(state: &ModelState, n: usize, p: usize, q: usize) -> usize {
    let d = state.n_diseases();
    let k = state.n_clusters();
    let qd = q * d;
    p * d
        + k * qd
        + k * d
        + n * d
        + state.omega.iter().map(|o| 2 * o.len()).sum::<usize>()
        + d
        + d
        + 1
        + qd
        + qd * (qd + 1) / 2
}

/// Shift-by-first mean: exact when every value is identical.
fn shifted_mean(values: &[f64]) -> f64 {
    let first = values[0];
    let acc: f64 = values.iter().map(|v| v - first).sum();
    first + acc / values.len() as f64
}

/// Shift-by-first sample variance (divisor len - 1); exactly zero for
/// identical inputs.
fn shifted_variance(values: &[f64]) -> f64 {
    let s = values.len() as f64;
    let first = values[0];
    let sum: f64 = values.iter().map(|v| v - first).sum();
    let sum_sq: f64 = values.iter().map(|v| (v - first) * (v - first)).sum();
    (sum_sq - sum * sum / s) / (s - 1.0)
}

fn mean_vectors(vectors: &[DVector<f64>]) -> DVector<f64> {
    let first = &vectors[0];
    let mut acc = DVector::zeros(first.len());
    for v in vectors {
        acc += v - first;
    }
    first + acc / vectors.len() as f64
}

fn mean_matrices(mats: &[DMatrix<f64>]) -> DMatrix<f64> {
    let first = &mats[0];
    let mut acc = DMatrix::zeros(first.nrows(), first.ncols());
    for m in mats {
        acc += m - first;
    }
    first + acc / mats.len() as f64
}

/// Plug-in state: the VI point-estimate partition with per-cluster parameters
/// averaged over draws after matching each draw's clusters to the estimate by
/// maximum overlap; everything else is a posterior mean.
pub fn plug_in_state(
    states: &[ModelState],
    vi_budget: usize,
    seed: u64,
) -> Result<ModelState> {
    if states.is_empty() {
        return Err(Error::InvalidConfig("empty chain".into()));
    }
    let partitions: Vec<Partition> = states.iter().map(|s| s.partition.clone()).collect();
    let point = estimate_partition_vi(&partitions, vi_budget, seed)?;
    let k = point.n_clusters();
    let d_count = states[0].n_diseases();
    let blocks = point.blocks();

    // Per-draw, per-point-cluster matched parameter rows.
    let mut gamma_rows: Vec<Vec<DVector<f64>>> = vec![Vec::new(); k];
    let mut sigma_rows: Vec<Vec<Vec<f64>>> = vec![Vec::new(); k];
    for st in states {
        for (jp, members) in blocks.iter().enumerate() {
            let mut best = 0usize;
            let mut best_overlap = 0usize;
            for js in 0..st.n_clusters() {
                let overlap = members
                    .iter()
                    .filter(|&&i| st.partition.label(i) == js)
                    .count();
                if overlap > best_overlap {
                    best_overlap = overlap;
                    best = js;
                }
            }
            gamma_rows[jp].push(st.gamma_star[best].clone());
            sigma_rows[jp].push(st.sigma_star[best].clone());
        }
    }

    let gamma_star: Vec<DVector<f64>> = gamma_rows.iter().map(|rows| mean_vectors(rows)).collect();
    let sigma_star: Vec<Vec<f64>> = sigma_rows
        .iter()
        .map(|rows| {
            (0..d_count)
                .map(|d| {
                    let vals: Vec<f64> = rows.iter().map(|r| r[d]).collect();
                    shifted_mean(&vals)
                })
                .collect()
        })
        .collect();

    let betas: Vec<DVector<f64>> = states.iter().map(|s| s.beta.clone()).collect();
    let mus: Vec<DVector<f64>> = states.iter().map(|s| s.mu_gamma.clone()).collect();
    let sigmas: Vec<DMatrix<f64>> = states.iter().map(|s| s.sigma_gamma.clone()).collect();
    let phis: Vec<DMatrix<f64>> = states.iter().map(|s| s.phi.clone()).collect();
    let alpha: Vec<f64> = (0..d_count)
        .map(|d| shifted_mean(&states.iter().map(|s| s.alpha[d]).collect::<Vec<_>>()))
        .collect();
    let sigma_phi: Vec<f64> = (0..d_count)
        .map(|d| shifted_mean(&states.iter().map(|s| s.sigma_phi[d]).collect::<Vec<_>>()))
        .collect();
    let omega: Vec<Vec<(f64, f64)>> = (0..d_count)
        .map(|d| {
            (0..d)
                .map(|dp| {
                    let o0: Vec<f64> = states.iter().map(|s| s.omega[d][dp].0).collect();
                    let o1: Vec<f64> = states.iter().map(|s| s.omega[d][dp].1).collect();
                    (shifted_mean(&o0), shifted_mean(&o1))
                })
                .collect()
        })
        .collect();
    let xi = shifted_mean(&states.iter().map(|s| s.xi).collect::<Vec<_>>());

    Ok(ModelState {
        beta: mean_vectors(&betas),
        gamma_star,
        mu_gamma: mean_vectors(&mus),
        sigma_gamma: mean_matrices(&sigmas),
        partition: point,
        phi: mean_matrices(&phis),
        omega,
        alpha,
        sigma_phi,
        sigma_star,
        xi,
    })
}

/// Assemble the criteria from the pointwise matrix and the plug-in log
/// likelihood. DIC and WAIC need at least two draws and are absent otherwise.
pub fn information_criteria(
    pointwise: &[Vec<f64>],
    log_lik_plugin: f64,
    rmse: f64,
    p_total: usize,
) -> Result<FitReport> {
    let n_draws = pointwise.len();
    if n_draws == 0 {
        return Err(Error::InvalidConfig("empty pointwise matrix".into()));
    }
    let n_obs = pointwise[0].len();
    if pointwise.iter().any(|row| row.len() != n_obs) {
        return Err(Error::DimensionMismatch("ragged pointwise matrix".into()));
    }
    let aic = -2.0 * log_lik_plugin + 2.0 * p_total as f64;
    let bic = -2.0 * log_lik_plugin + p_total as f64 * (n_obs as f64).ln();

    let (p_dic, dic, p_waic, waic) = if n_draws < 2 {
        (None, None, None, None)
    } else {
        let per_draw_total: Vec<f64> = pointwise.iter().map(|row| row.iter().sum()).collect();
        let mean_loglik = shifted_mean(&per_draw_total);
        let p_dic = 2.0 * (log_lik_plugin - mean_loglik);
        let dic = -2.0 * log_lik_plugin + 2.0 * p_dic;

        let mut lppd = 0.0;
        let mut p_waic = 0.0;
        let mut col = Vec::with_capacity(n_draws);
        for o in 0..n_obs {
            col.clear();
            col.extend(pointwise.iter().map(|row| row[o]));
            let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + col.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            lppd += lse - (n_draws as f64).ln();
            p_waic += shifted_variance(&col);
        }
        let waic = -2.0 * (lppd - p_waic);
        (Some(p_dic), Some(dic), Some(p_waic), Some(waic))
    };

    Ok(FitReport {
        log_likelihood: log_lik_plugin,
        rmse,
        p_total,
        aic,
        bic,
        p_dic,
        dic,
        p_waic,
        waic,
        n_obs,
    })
}

/// Root mean squared residual of posterior-mean fitted values over the usable
/// range.
pub fn rmse(states: &[ModelState], data: &ObservationPanel, design: &TemporalDesign) -> Result<f64> {
    if states.is_empty() {
        return Err(Error::InvalidConfig("empty chain".into()));
    }
    let n = data.n_areas();
    let t0 = design.t_start();
    let d_count = data.n_diseases();
    let mut sum_sq = 0.0;
    let mut count = 0usize;
    for i in 0..n {
        for t in t0..data.n_times() {
            for d in 0..d_count {
                let fitted: Vec<f64> = states
                    .iter()
                    .map(|st| st.mean(data, design, i, t, d))
                    .collect();
                let r = data.y(i, t, d) - shifted_mean(&fitted);
                sum_sq += r * r;
                count += 1;
            }
        }
    }
    Ok((sum_sq / count as f64).sqrt())
}

/// Full fit report for a chain against its data.
pub fn fit_report(
    states: &[ModelState],
    data: &ObservationPanel,
    design: &TemporalDesign,
    vi_budget: usize,
    seed: u64,
) -> Result<(FitReport, ModelState)> {
    let plug = plug_in_state(states, vi_budget, seed)?;
    let plug_ll: f64 = pointwise_loglik(std::slice::from_ref(&plug), data, design)?[0]
        .iter()
        .sum();
    let pointwise = pointwise_loglik(states, data, design)?;
    let p_total = total_parameters(&plug, data.n_areas(), data.n_covariates(), design.q());
    let model_rmse = rmse(states, data, design)?;
    let report = information_criteria(&pointwise, plug_ll, model_rmse, p_total)?;
    Ok((report, plug))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Covariates;
    use approx::assert_relative_eq;

    fn tiny_state(sigma2: f64, gamma: f64) -> ModelState {
        ModelState {
            beta: DVector::zeros(0),
            gamma_star: vec![DVector::from_vec(vec![gamma])],
            mu_gamma: DVector::zeros(1),
            sigma_gamma: DMatrix::identity(1, 1),
            partition: Partition::single_cluster(1),
            phi: DMatrix::zeros(1, 1),
            omega: vec![vec![]],
            alpha: vec![0.5],
            sigma_phi: vec![1.0],
            sigma_star: vec![vec![sigma2]],
            xi: 1.0,
        }
    }

    fn tiny_data(values: &[f64]) -> (ObservationPanel, TemporalDesign) {
        let t = values.len();
        let data =
            ObservationPanel::new(1, t, 1, values.to_vec(), Covariates::empty(1, t, 1)).unwrap();
        let design =
            crate::temporal::build_design(&data, &crate::temporal::LagSpec::new(vec![1], vec![]).unwrap())
                .unwrap();
        (data, design)
    }

    #[test]
    fn pointwise_normalizing_constant_cancels() {
        // Residual 0 with variance 1/(2 pi) gives log density exactly 0.
        let (data, design) = tiny_data(&[0.0, 0.0, 0.0]);
        let state = tiny_state(1.0 / (2.0 * std::f64::consts::PI), 0.0);
        let rows = pointwise_loglik(&[state], &data, &design).unwrap();
        for v in &rows[0] {
            assert_relative_eq!(*v, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn pointwise_matches_scalar_formula() {
        let (data, design) = tiny_data(&[0.5, 1.0, -0.3]);
        let state = tiny_state(0.7, 0.4);
        let rows = pointwise_loglik(&[state.clone(), state], &data, &design).unwrap();
        assert_eq!(rows[0], rows[1]);
        // t = 1: residual 1.0 - 0.4 * 0.5.
        let r: f64 = 1.0 - 0.4 * 0.5;
        let expected = -0.5 * (LN_2PI + 0.7f64.ln()) - r * r / (2.0 * 0.7);
        assert_relative_eq!(rows[0][0], expected, epsilon = 1e-12);
    }

    #[test]
    fn identical_draws_zero_effective_parameters() {
        let (data, design) = tiny_data(&[0.5, 1.0, -0.3, 0.2]);
        let states = vec![tiny_state(0.7, 0.4); 5];
        let (report, _) = fit_report(&states, &data, &design, 4, 1).unwrap();
        assert_eq!(report.p_dic, Some(0.0));
        assert_eq!(report.p_waic, Some(0.0));
        assert_relative_eq!(
            report.waic.unwrap(),
            -2.0 * report.log_likelihood,
            epsilon = 1e-12
        );
    }

    #[test]
    fn two_draw_p_waic_by_hand() {
        let pointwise = vec![vec![-1.0, -2.0], vec![-1.5, -2.5]];
        let report = information_criteria(&pointwise, -3.0, 0.0, 3).unwrap();
        // Per-observation sample variance of {-1, -1.5} and {-2, -2.5} is
        // 0.125 each; p_waic = 0.25.
        assert_relative_eq!(report.p_waic.unwrap(), 0.25, epsilon = 1e-12);
        assert_relative_eq!(report.aic, 12.0, epsilon = 1e-12);
        assert_relative_eq!(report.bic, 6.0 + 3.0 * 2.0f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn single_draw_reports_absent_criteria() {
        let pointwise = vec![vec![-1.0, -2.0]];
        let report = information_criteria(&pointwise, -3.0, 0.0, 2).unwrap();
        assert!(report.dic.is_none());
        assert!(report.waic.is_none());
    }

    #[test]
    fn waic_invariant_under_draw_reordering_and_lppd_bound() {
        let a = vec![vec![-1.0, -2.0], vec![-0.5, -2.2], vec![-1.2, -1.8]];
        let mut b = a.clone();
        b.reverse();
        let ra = information_criteria(&a, -3.0, 0.0, 1).unwrap();
        let rb = information_criteria(&b, -3.0, 0.0, 1).unwrap();
        assert_relative_eq!(ra.waic.unwrap(), rb.waic.unwrap(), epsilon = 1e-12);
        // lppd >= mean log-lik (Jensen): recover lppd from the report.
        let lppd = -0.5 * ra.waic.unwrap() + ra.p_waic.unwrap();
        let mean_ll: f64 =
            a.iter().map(|r| r.iter().sum::<f64>()).sum::<f64>() / 3.0;
        assert!(lppd >= mean_ll - 1e-12);
    }

    #[test]
    fn rmse_perfect_and_offset_fits() {
        let (data, design) = tiny_data(&[1.0, 2.0, 4.0, 8.0]);
        // gamma = 2 reproduces the doubling series exactly.
        let perfect = tiny_state(1.0, 2.0);
        assert_relative_eq!(
            rmse(&[perfect.clone()], &data, &design).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        // Constant offset via phi.
        let mut offset = perfect;
        offset.phi[(0, 0)] = 0.25;
        assert_relative_eq!(
            rmse(&[offset], &data, &design).unwrap(),
            0.25,
            epsilon = 1e-12
        );
    }

    #[test]
    fn total_parameters_counts_every_block() {
        // n=70, p=2, q=2, D=2, k=1: 4 + 4 + 2 + 140 + 2 + 2 + 2 + 1 + 4 + 10.
        let mut st = tiny_state(1.0, 0.0);
        st.partition = Partition::single_cluster(70);
        st.phi = DMatrix::zeros(70, 2);
        st.alpha = vec![0.5, 0.5];
        st.sigma_phi = vec![1.0, 1.0];
        st.omega = vec![vec![], vec![(0.0, 0.0)]];
        st.gamma_star = vec![DVector::zeros(4)];
        st.sigma_star = vec![vec![1.0, 1.0]];
        st.mu_gamma = DVector::zeros(4);
        st.sigma_gamma = DMatrix::identity(4, 4);
        assert_eq!(total_parameters(&st, 70, 2, 2), 171);
    }

    #[test]
    fn duplicate_noise_draw_does_not_decrease_p_waic() {
        let base = vec![vec![-1.0, -2.0], vec![-1.4, -2.1]];
        let mut extended = base.clone();
        extended.push(vec![-0.7, -2.6]);
        let rb = information_criteria(&base, -3.0, 0.0, 1).unwrap();
        let re = information_criteria(&extended, -3.0, 0.0, 1).unwrap();
        assert!(re.p_waic.unwrap() >= rb.p_waic.unwrap() - 1e-12);
    }
}

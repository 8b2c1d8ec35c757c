//! Synthetic-data generators: the partition-recovery study, the
//! model-comparison study, and arbitrary user scenarios, plus the
//! conditional response regeneration used by sampler self-checks.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criteria::{fit_report, FitReport};
use crate::data::{Covariates, ObservationPanel};
use crate::error::Error;
use crate::gibbs::{run_chain, Schedule};
use crate::graph::{ArealMap, DagOrdering, OrderingRule};
use crate::linalg::cholesky_with_jitter;
use crate::model::{Hyperparameters, ModelState, SigmaPhiPrior};
use crate::partition::{adjusted_rand_index, CohesionSpec, Partition};
use crate::temporal::{build_design, LagSpec};
use crate::Result;

const WARMUP: usize = 200;
const EXPLOSION_LIMIT: f64 = 1e9;

/// Complete description of a data-generating mechanism. Everything needed to
/// regenerate a dataset bit-exactly lives here plus one replica seed.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub map: ArealMap,
    /// Planar coordinates per area, for the distance-power spatial law.
    pub coords: Vec<(f64, f64)>,
    pub true_partition: Partition,
    /// One stacked qD coefficient vector per cluster.
    pub gamma_star: Vec<DVector<f64>>,
    /// Stacked pD regression coefficients.
    pub beta: DVector<f64>,
    /// Shared data variance.
    pub sigma_star: f64,
    pub lag_spec: LagSpec,
    pub n_times: usize,
    pub n_diseases: usize,
    /// Spatial-law autocorrelations, one per disease.
    pub alpha: Vec<f64>,
    /// Bridge pair linking disease 2 to disease 1.
    pub omega: (f64, f64),
    /// Overall scale of the spatial effects.
    pub phi_scale: f64,
    pub season_period: usize,
    /// Stream for the covariates, fixed across replicas.
    pub covariate_seed: u64,
}

/// The generator side of a dataset: everything a scoring pass needs.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub partition: Partition,
    pub gamma_star: Vec<DVector<f64>>,
    pub beta: DVector<f64>,
    pub sigma_star: f64,
    pub phi: DMatrix<f64>,
    pub replica_seed: u64,
    /// True when the distance-power matrix needed an eigenvalue floor to
    /// become positive definite.
    pub spd_adjusted: bool,
}

impl Scenario {
    fn k(&self) -> usize {
        self.true_partition.n_clusters()
    }

    fn q(&self) -> usize {
        self.lag_spec.q()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.map.n_areas();
        if self.coords.len() != n || self.true_partition.n_items() != n {
            return Err(Error::InvalidConfig("scenario arrays disagree on n".into()));
        }
        if self.gamma_star.len() != self.k() {
            return Err(Error::InvalidConfig("one gamma row per cluster".into()));
        }
        let qd = self.q() * self.n_diseases;
        if self.gamma_star.iter().any(|g| g.len() != qd) {
            return Err(Error::InvalidConfig(format!("gamma rows must have length {qd}")));
        }
        if self.alpha.len() != self.n_diseases {
            return Err(Error::InvalidConfig("one alpha per disease".into()));
        }
        if self.sigma_star < 0.0 {
            return Err(Error::InvalidConfig("negative variance".into()));
        }
        self.lag_spec.validate()?;
        Ok(())
    }
}

/// Distance-power matrix alpha^dist(i, i'), floored to positive definite when
/// the raw matrix is not. Returns the matrix and whether flooring happened.
fn distance_power_precision(
    coords: &[(f64, f64)],
    alpha: f64,
) -> (DMatrix<f64>, bool) {
    let n = coords.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let dx = coords[i].0 - coords[j].0;
            let dy = coords[i].1 - coords[j].1;
            m[(i, j)] = alpha.powf((dx * dx + dy * dy).sqrt());
        }
    }
    let eig = m.clone().symmetric_eigen();
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min > 1e-10 {
        return (m, false);
    }
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        if *v < 1e-10 {
            *v = 1e-10;
        }
    }
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
    let mut sym = rebuilt;
    crate::linalg::symmetrize(&mut sym);
    (sym, true)
}

/// Draw x ~ N(0, scale * P^-1) where P is a dense precision matrix.
fn sample_from_precision<R: Rng>(
    precision: &DMatrix<f64>,
    scale: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let chol = cholesky_with_jitter(precision, "spatial law precision")?;
    let z = DVector::from_fn(precision.nrows(), |_, _| StandardNormal.sample(rng));
    let x = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::Numerical("singular spatial-law factor".into()))?;
    Ok(x * scale.sqrt())
}

/// Spatial effects from the chained distance-power law: the first disease is
/// a zero-mean draw, each later one is bridged from its predecessor.
fn generate_phi<R: Rng>(scenario: &Scenario, rng: &mut R) -> Result<(DMatrix<f64>, bool)> {
    let n = scenario.map.n_areas();
    let mut phi = DMatrix::zeros(n, scenario.n_diseases);
    let mut adjusted = false;
    let mut previous: Option<DVector<f64>> = None;
    for d in 0..scenario.n_diseases {
        let (prec, adj) = distance_power_precision(&scenario.coords, scenario.alpha[d]);
        adjusted |= adj;
        let noise = sample_from_precision(&prec, scenario.phi_scale, rng)?;
        let col = match previous {
            None => noise,
            Some(ref prev) => {
                crate::dagar::bridge_apply(scenario.omega, &scenario.map, prev) + noise
            }
        };
        phi.set_column(d, &col);
        previous = Some(col);
    }
    Ok((phi, adjusted))
}

/// Season indicator at absolute time index: first half of each period high.
fn season_indicator(t: usize, period: usize) -> f64 {
    if (t % period) < period / 2 {
        1.0
    } else {
        0.0
    }
}

/// Covariate arrays over `total` time points: a binary season indicator and a
/// continuous N(0, 0.5) draw shared across diseases, independent over areas
/// and times. Fixed by the scenario's covariate seed.
fn generate_covariates(scenario: &Scenario, total: usize) -> Covariates {
    let n = scenario.map.n_areas();
    let d_count = scenario.n_diseases;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.covariate_seed);
    let normal_sd = 0.5f64.sqrt();
    let mut values = Vec::with_capacity(n * total * d_count * 2);
    for i in 0..n {
        let _ = i;
        for t in 0..total {
            let season = season_indicator(t, scenario.season_period);
            let z: f64 = StandardNormal.sample(&mut rng);
            let cont = z * normal_sd;
            for _d in 0..d_count {
                values.push(season);
                values.push(cont);
            }
        }
    }
    Covariates::new(
        vec!["season".into(), "cont".into()],
        n,
        total,
        d_count,
        values,
    )
    .expect("generated covariates are rectangular")
}

/// Generate one dataset: the observation recursion with a discarded warm-up,
/// plus the full truth record.
pub fn generate(scenario: &Scenario, replica_seed: u64) -> Result<(ObservationPanel, GroundTruth)> {
    scenario.validate()?;
    let n = scenario.map.n_areas();
    let d_count = scenario.n_diseases;
    let q_max = scenario.lag_spec.q_max();
    let total = q_max + WARMUP + scenario.n_times;
    let lags = scenario.lag_spec.all_lags();
    let q = scenario.q();

    let covariates_full = generate_covariates(scenario, total);

    let mut rng = ChaCha8Rng::seed_from_u64(replica_seed);
    let (phi, spd_adjusted) = generate_phi(scenario, &mut rng)?;
    let sd = scenario.sigma_star.sqrt();

    // Trajectory over the full span; the first q_max values seed the lags.
    let mut y = vec![0.0f64; n * total * d_count];
    let idx = |i: usize, t: usize, d: usize| (i * total + t) * d_count + d;
    for i in 0..n {
        for t in 0..q_max {
            for d in 0..d_count {
                let z: f64 = StandardNormal.sample(&mut rng);
                y[idx(i, t, d)] = z * sd;
            }
        }
    }
    for t in q_max..total {
        for i in 0..n {
            let j = scenario.true_partition.label(i);
            for d in 0..d_count {
                let x = covariates_full.row(i, t, d);
                let beta_d = &scenario.beta.as_slice()[d * x.len()..(d + 1) * x.len()];
                let mut mean = 0.0;
                for (l, &xv) in x.iter().enumerate() {
                    mean += xv * beta_d[l];
                }
                let g = &scenario.gamma_star[j].as_slice()[d * q..(d + 1) * q];
                for (pos, &lag) in lags.iter().enumerate() {
                    mean += g[pos] * y[idx(i, t - lag, d)];
                }
                mean += phi[(i, d)];
                let z: f64 = StandardNormal.sample(&mut rng);
                let value = mean + z * sd;
                if !value.is_finite() || value.abs() > EXPLOSION_LIMIT {
                    return Err(Error::Numerical(format!(
                        "explosive recursion: |y| > {EXPLOSION_LIMIT:.0e} at area {i}, step {t}"
                    )));
                }
                y[idx(i, t, d)] = value;
            }
        }
    }

    // Keep the last n_times points of the trajectory and covariates.
    let start = total - scenario.n_times;
    let mut kept = Vec::with_capacity(n * scenario.n_times * d_count);
    for i in 0..n {
        for t in start..total {
            for d in 0..d_count {
                kept.push(y[idx(i, t, d)]);
            }
        }
    }
    let covariates = covariates_full.slice_times(start, scenario.n_times)?;
    let panel = ObservationPanel::new(n, scenario.n_times, d_count, kept, covariates)?;
    Ok((
        panel,
        GroundTruth {
            partition: scenario.true_partition.clone(),
            gamma_star: scenario.gamma_star.clone(),
            beta: scenario.beta.clone(),
            sigma_star: scenario.sigma_star,
            phi,
            replica_seed,
            spd_adjusted,
        },
    ))
}

/// Redraw the responses after the seed window, conditional on the current
/// parameters; the lagged design reads the evolving series. This is the data
/// step of the successive-conditional sampler checks.
pub fn regenerate_responses<R: Rng>(
    data: &mut ObservationPanel,
    state: &ModelState,
    spec: &LagSpec,
    rng: &mut R,
) {
    let q_max = spec.q_max();
    let lags = spec.all_lags();
    for t in q_max..data.n_times() {
        for i in 0..data.n_areas() {
            let j = state.partition.label(i);
            for d in 0..data.n_diseases() {
                let x = data.x(i, t, d);
                let beta_d = state.beta_block(d);
                let mut mean = 0.0;
                for (l, &xv) in x.iter().enumerate() {
                    mean += xv * beta_d[l];
                }
                let g = state.gamma_block(j, d);
                for (pos, &lag) in lags.iter().enumerate() {
                    mean += g[pos] * data.y(i, t - lag, d);
                }
                mean += state.phi[(i, d)];
                let z: f64 = StandardNormal.sample(rng);
                data.set_y(i, t, d, mean + z * state.sigma_star[j][d].sqrt());
            }
        }
    }
}

fn grid_coords(rows: usize, cols: usize) -> Vec<(f64, f64)> {
    let mut coords = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            coords.push((r as f64, c as f64));
        }
    }
    coords
}

/// Contiguous column bands assigning `k` clusters on a rows x cols grid.
pub fn band_partition(rows: usize, cols: usize, k: usize) -> Partition {
    let labels: Vec<usize> = (0..rows * cols)
        .map(|i| {
            let c = i % cols;
            (c * k) / cols
        })
        .collect();
    Partition::from_labels(&labels).expect("grid is nonempty")
}

fn stack_rows(rows: &[Vec<f64>], k: usize, d_count: usize) -> Vec<DVector<f64>> {
    rows.iter()
        .take(k)
        .map(|row| {
            let mut stacked = Vec::with_capacity(row.len() * d_count);
            for _ in 0..d_count {
                stacked.extend_from_slice(row);
            }
            DVector::from_vec(stacked)
        })
        .collect()
}

/// Partition-recovery study: bivariate panel, third-order autoregression plus
/// a 24-step seasonal lag, 120 time points, clusters as grid column bands.
pub fn partition_study_scenario(rows: usize, cols: usize, k: usize) -> Result<(Scenario, Hyperparameters)> {
    let map = ArealMap::grid(rows, cols)?;
    let coefficient_rows = vec![
        vec![0.5, 0.3, -0.5, 0.4],
        vec![0.1, -0.2, -0.1, 0.3],
        vec![1.6, -0.9, 0.1, 0.1],
        vec![0.8, 0.2, -0.4, 0.2],
    ];
    if k == 0 || k > coefficient_rows.len() {
        return Err(Error::InvalidConfig(format!("k = {k} outside 1..=4")));
    }
    let d_count = 2;
    let scenario = Scenario {
        coords: grid_coords(rows, cols),
        true_partition: band_partition(rows, cols, k),
        gamma_star: stack_rows(&coefficient_rows, k, d_count),
        beta: DVector::from_vec(vec![0.1, 0.4, 0.2, 0.3]),
        sigma_star: 0.001,
        lag_spec: LagSpec::new(vec![1, 2, 3], vec![24])?,
        n_times: 120,
        n_diseases: d_count,
        alpha: vec![0.5, 0.5],
        omega: (1.0, 0.1),
        phi_scale: 1e-5,
        season_period: 24,
        covariate_seed: 0x5ea50,
        map,
    };
    let hyper = study_hyper(&scenario, StudyPriors::Tight);
    Ok((scenario, hyper))
}

/// Model-comparison study: second-order autoregression, no seasonal lag,
/// otherwise the same generating choices.
pub fn comparison_study_scenario(rows: usize, cols: usize, k: usize) -> Result<(Scenario, Hyperparameters)> {
    let map = ArealMap::grid(rows, cols)?;
    let coefficient_rows = vec![
        vec![1.6, -0.7],
        vec![0.9, -0.1],
        vec![0.3, 0.1],
    ];
    if k == 0 || k > coefficient_rows.len() {
        return Err(Error::InvalidConfig(format!("k = {k} outside 1..=3")));
    }
    let d_count = 2;
    let scenario = Scenario {
        coords: grid_coords(rows, cols),
        true_partition: band_partition(rows, cols, k),
        gamma_star: stack_rows(&coefficient_rows, k, d_count),
        beta: DVector::from_vec(vec![0.1, 0.4, 0.2, 0.3]),
        sigma_star: 0.001,
        lag_spec: LagSpec::new(vec![1, 2], vec![])?,
        n_times: 120,
        n_diseases: d_count,
        alpha: vec![0.5, 0.5],
        omega: (1.0, 0.1),
        phi_scale: 1e-5,
        season_period: 24,
        covariate_seed: 0x5ea50,
        map,
    };
    let hyper = study_hyper(&scenario, StudyPriors::Loose);
    Ok((scenario, hyper))
}

enum StudyPriors {
    /// Temporal coefficients held near the truth.
    Tight,
    /// More variability, centered at (1, 0) blocks.
    Loose,
}

fn study_hyper(scenario: &Scenario, priors: StudyPriors) -> Hyperparameters {
    let p = 2;
    let q = scenario.q();
    let d = scenario.n_diseases;
    let qd = q * d;
    let mut hyper = Hyperparameters::default_for(p, q, d);
    hyper.mu_beta = DVector::from_element(p * d, 0.25);
    hyper.sigma_beta = DMatrix::identity(p * d, p * d) * 0.5;
    hyper.nu = 2.0;
    hyper.a_xi = 1.0;
    hyper.b_xi = 2.0;
    hyper.mu_omega = DVector::zeros(2);
    hyper.sigma_omega = DMatrix::identity(2, 2);
    hyper.a_alpha = 300.0;
    hyper.b_alpha = 300.0;
    hyper.sigma_phi_prior = SigmaPhiPrior::Fixed { value: 1.0 };
    hyper.df = 2.0 * (q as f64 + 1.0);
    match priors {
        StudyPriors::Tight => {
            hyper.mu_mu = DVector::zeros(qd);
            hyper.sigma_mu = DMatrix::identity(qd, qd) * 0.1;
            hyper.s_scale = DMatrix::identity(qd, qd) * 0.1;
        }
        StudyPriors::Loose => {
            let mut mu = DVector::zeros(qd);
            for dd in 0..d {
                mu[dd * q] = 1.0;
            }
            hyper.mu_mu = mu;
            hyper.sigma_mu = DMatrix::identity(qd, qd) * 0.5;
            hyper.s_scale = DMatrix::identity(qd, qd) * 0.5;
        }
    }
    hyper
}

/// One cohesion configuration inside a replicated study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyConfig {
    pub label: String,
    pub cohesion: CohesionSpec,
}

/// Scores of one (replica, configuration) fit.
#[derive(Debug, Clone)]
pub struct ReplicaScore {
    pub replica: usize,
    pub config: String,
    pub ari: f64,
    pub rmse: f64,
    pub k_estimate: usize,
    pub report: Option<FitReport>,
    pub error: Option<String>,
}

/// Generate and fit `n_datasets` replicas under each configuration. Replicas
/// run in parallel with seeds derived from the master seed; a fit abort is
/// recorded in its score row without killing the batch.
#[allow(clippy::too_many_arguments)]
pub fn replicate_study(
    scenario: &Scenario,
    hyper_base: &Hyperparameters,
    configs: &[StudyConfig],
    n_datasets: usize,
    schedule: Schedule,
    master_seed: u64,
    vi_budget: usize,
) -> Result<Vec<ReplicaScore>> {
    if configs.is_empty() {
        return Err(Error::InvalidConfig("no study configurations".into()));
    }
    scenario.validate()?;
    let ordering = DagOrdering::new(&scenario.map, OrderingRule::ByIndex)?;
    let replicas: Vec<usize> = (0..n_datasets).collect();
    let scores: Vec<Vec<ReplicaScore>> = replicas
        .par_iter()
        .map(|&r| {
            let replica_seed = master_seed
                .wrapping_mul(6364136223846793005)
                .wrapping_add(r as u64 + 1);
            let mut rows = Vec::with_capacity(configs.len());
            let generated = generate(scenario, replica_seed);
            for (c_idx, config) in configs.iter().enumerate() {
                let row = match &generated {
                    Err(e) => ReplicaScore {
                        replica: r,
                        config: config.label.clone(),
                        ari: f64::NAN,
                        rmse: f64::NAN,
                        k_estimate: 0,
                        report: None,
                        error: Some(e.to_string()),
                    },
                    Ok((panel, truth)) => {
                        let mut hyper = hyper_base.clone();
                        hyper.cohesion = config.cohesion;
                        let chain_seed = replica_seed.wrapping_add((c_idx as u64 + 1) << 32);
                        match fit_one(panel, &scenario.lag_spec, &scenario.map, &ordering, &hyper, schedule, chain_seed, vi_budget, truth) {
                            Ok(score) => ReplicaScore {
                                replica: r,
                                config: config.label.clone(),
                                ..score
                            },
                            Err(e) => ReplicaScore {
                                replica: r,
                                config: config.label.clone(),
                                ari: f64::NAN,
                                rmse: f64::NAN,
                                k_estimate: 0,
                                report: None,
                                error: Some(e.to_string()),
                            },
                        }
                    }
                };
                rows.push(row);
            }
            rows
        })
        .collect();
    Ok(scores.into_iter().flatten().collect())
}

#[allow(clippy::too_many_arguments)]
fn fit_one(
    panel: &ObservationPanel,
    lag_spec: &LagSpec,
    map: &ArealMap,
    ordering: &DagOrdering,
    hyper: &Hyperparameters,
    schedule: Schedule,
    seed: u64,
    vi_budget: usize,
    truth: &GroundTruth,
) -> Result<ReplicaScore> {
    let design = build_design(panel, lag_spec)?;
    let chain = run_chain(panel, &design, map, ordering, hyper, schedule, seed)?;
    let (report, plug) = fit_report(&chain.states, panel, &design, vi_budget, seed)?;
    let ari = adjusted_rand_index(&plug.partition, &truth.partition)?;
    Ok(ReplicaScore {
        replica: 0,
        config: String::new(),
        ari,
        rmse: report.rmse,
        k_estimate: plug.partition.n_clusters(),
        report: Some(report),
        error: None,
    })
}

/// How often each configuration attains the best ARI over the replicas; ties
/// credit every winner.
pub fn best_ari_counts(scores: &[ReplicaScore], configs: &[StudyConfig]) -> Vec<(String, usize)> {
    let mut counts: Vec<(String, usize)> =
        configs.iter().map(|c| (c.label.clone(), 0)).collect();
    let replicas: std::collections::BTreeSet<usize> =
        scores.iter().map(|s| s.replica).collect();
    for r in replicas {
        let rows: Vec<&ReplicaScore> = scores
            .iter()
            .filter(|s| s.replica == r && s.error.is_none())
            .collect();
        let best = rows
            .iter()
            .map(|s| s.ari)
            .fold(f64::NEG_INFINITY, f64::max);
        for row in rows {
            if (row.ari - best).abs() < 1e-12 {
                if let Some(entry) = counts.iter_mut().find(|(l, _)| *l == row.config) {
                    entry.1 += 1;
                }
            }
        }
    }
    counts
}

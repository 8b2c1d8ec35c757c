//! Brute-force oracle used by the acceptance suite: a dense, from-scratch
//! evaluation of the joint posterior. Every density here is restated from the
//! model formulas with plain dense linear algebra, independent of the
//! sampler's factored code paths.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::gamma::ln_gamma;

use stppm::data::{Covariates, ObservationPanel};
use stppm::graph::{ArealMap, DagOrdering, OrderingRule};
use stppm::model::{Hyperparameters, ModelState, SigmaPhiPrior};
use stppm::partition::{CohesionSpec, Partition};
use stppm::temporal::{build_design, LagSpec, TemporalDesign};

pub const LN_2PI: f64 = 1.8378770664093453;

pub fn oracle_normal_lpdf(x: f64, mean: f64, var: f64) -> f64 {
    let r = x - mean;
    -0.5 * (LN_2PI + var.ln()) - 0.5 * r * r / var
}

pub fn oracle_mvn_lpdf_cov(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let chol = Cholesky::new(cov.clone()).expect("oracle covariance must be SPD");
    let r = x - mean;
    let half = chol
        .l()
        .solve_lower_triangular(&r)
        .expect("oracle triangular solve");
    let log_det: f64 = chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
    -0.5 * (x.len() as f64 * LN_2PI + log_det + half.dot(&half))
}

pub fn oracle_gamma_lpdf(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

pub fn oracle_inv_gamma_lpdf(x: f64, shape: f64, scale: f64) -> f64 {
    shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - scale / x
}

pub fn oracle_beta_lpdf(x: f64, a: f64, b: f64) -> f64 {
    ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln()
}

pub fn oracle_inv_wishart_lpdf(x: &DMatrix<f64>, df: f64, scale: &DMatrix<f64>) -> f64 {
    let p = x.nrows();
    let mut multi_gamma = 0.25 * (p * (p - 1)) as f64 * std::f64::consts::PI.ln();
    for i in 1..=p {
        multi_gamma += ln_gamma(0.5 * df + 0.5 * (1.0 - i as f64));
    }
    let x_inv = x.clone().try_inverse().expect("oracle inverse");
    let trace = (scale * x_inv).trace();
    0.5 * df * scale.clone().determinant().ln()
        - 0.5 * df * p as f64 * std::f64::consts::LN_2
        - multi_gamma
        - 0.5 * (df + p as f64 + 1.0) * x.clone().determinant().ln()
        - 0.5 * trace
}

/// Dense DAGAR precision straight from the defining formulas.
pub fn oracle_dagar_precision(ordering: &DagOrdering, alpha: f64) -> DMatrix<f64> {
    let n = ordering.n_areas();
    let mut b = DMatrix::zeros(n, n);
    let mut lambda = DMatrix::zeros(n, n);
    for i in 0..n {
        let n_dir = ordering.n_directed(i) as f64;
        let denom = 1.0 + (n_dir - 1.0) * alpha * alpha;
        for &j in ordering.directed_neighbors(i) {
            b[(i, j)] = alpha / denom;
        }
        lambda[(i, i)] = denom / (1.0 - alpha * alpha);
    }
    let ib = DMatrix::identity(n, n) - b;
    ib.transpose() * lambda * ib
}

pub fn oracle_bridge_dense(omega: (f64, f64), map: &ArealMap) -> DMatrix<f64> {
    let n = map.n_areas();
    let mut a = DMatrix::identity(n, n) * omega.0;
    for i in 0..n {
        for &j in map.neighbors(i) {
            a[(i, j)] += omega.1;
        }
    }
    a
}

/// Boundary length of one block recomputed from raw adjacency.
fn oracle_boundary(map: &ArealMap, labels: &[usize], j: usize) -> usize {
    let mut count = 0;
    for i in 0..labels.len() {
        if labels[i] != j {
            continue;
        }
        for &nb in map.neighbors(i) {
            if labels[nb] != j {
                count += 1;
            }
        }
    }
    count
}

pub fn oracle_log_partition_prior(map: &ArealMap, partition: &Partition, spec: &CohesionSpec) -> f64 {
    let labels = partition.labels();
    let mut total = 0.0;
    for j in 0..partition.n_clusters() {
        match *spec {
            CohesionSpec::Hb { eta } => {
                total += oracle_boundary(map, labels, j) as f64 * eta.ln();
            }
            CohesionSpec::Dp { mass } => {
                let size = labels.iter().filter(|&&c| c == j).count();
                total += mass.ln() + ln_gamma(size as f64);
            }
        }
    }
    total
}

/// Joint log posterior evaluated densely: likelihood with the lagged design
/// recomputed from the raw responses, then each prior layer in turn.
pub fn oracle_log_joint(
    state: &ModelState,
    data: &ObservationPanel,
    lag_spec: &LagSpec,
    map: &ArealMap,
    ordering: &DagOrdering,
    hyper: &Hyperparameters,
) -> f64 {
    let n = data.n_areas();
    let d_count = data.n_diseases();
    let p = data.n_covariates();
    let q = lag_spec.q();
    let lags = lag_spec.all_lags();
    let q_max = lag_spec.q_max();
    let mut total = 0.0;

    // Likelihood, lags read straight from the panel.
    for i in 0..n {
        let j = state.partition.label(i);
        for t in q_max..data.n_times() {
            for d in 0..d_count {
                let mut mean = state.phi[(i, d)];
                let x = data.x(i, t, d);
                for l in 0..p {
                    mean += x[l] * state.beta[d * p + l];
                }
                for (pos, &lag) in lags.iter().enumerate() {
                    mean += state.gamma_star[j][d * q + pos] * data.y(i, t - lag, d);
                }
                total += oracle_normal_lpdf(data.y(i, t, d), mean, state.sigma_star[j][d]);
            }
        }
    }

    if p > 0 {
        total += oracle_mvn_lpdf_cov(&state.beta, &hyper.mu_beta, &hyper.sigma_beta);
    }
    for g in &state.gamma_star {
        total += oracle_mvn_lpdf_cov(g, &state.mu_gamma, &state.sigma_gamma);
    }
    total += oracle_mvn_lpdf_cov(&state.mu_gamma, &hyper.mu_mu, &hyper.sigma_mu);
    total += oracle_inv_wishart_lpdf(&state.sigma_gamma, hyper.df, &hyper.s_scale);

    // Spatial effects: each disease is Gaussian around its bridged mean with
    // covariance sigma2 Q^-1, evaluated through the dense inverse.
    for d in 0..d_count {
        let q_dense = oracle_dagar_precision(ordering, state.alpha[d]);
        let cov = q_dense.try_inverse().expect("oracle Q inverse") * state.sigma_phi[d];
        let mut mean = DVector::zeros(n);
        for dp in 0..d {
            let a = oracle_bridge_dense(state.omega[d][dp], map);
            mean += a * state.phi.column(dp);
        }
        let col = state.phi.column(d).into_owned();
        total += oracle_mvn_lpdf_cov(&col, &mean, &cov);
    }

    for pairs in &state.omega {
        for &(o0, o1) in pairs {
            let v = DVector::from_vec(vec![o0, o1]);
            total += oracle_mvn_lpdf_cov(&v, &hyper.mu_omega, &hyper.sigma_omega);
        }
    }
    for &a in &state.alpha {
        total += oracle_beta_lpdf(a, hyper.a_alpha, hyper.b_alpha);
    }
    if let SigmaPhiPrior::InvGamma { a, b } = hyper.sigma_phi_prior {
        for &s in &state.sigma_phi {
            total += oracle_inv_gamma_lpdf(s, a, b);
        }
    }
    for row in &state.sigma_star {
        for &s in row {
            total += oracle_inv_gamma_lpdf(s, hyper.nu, hyper.nu * state.xi);
        }
    }
    total += oracle_gamma_lpdf(state.xi, hyper.a_xi, hyper.b_xi);
    total += oracle_log_partition_prior(map, &state.partition, &hyper.cohesion);
    total
}

/// Small randomized model instance for conditional-correctness checks.
pub struct Toy {
    pub data: ObservationPanel,
    pub map: ArealMap,
    pub ordering: DagOrdering,
    pub design: TemporalDesign,
    pub lag_spec: LagSpec,
    pub hyper: Hyperparameters,
    pub state: ModelState,
}

pub fn random_spd<R: Rng>(dim: usize, rng: &mut R) -> DMatrix<f64> {
    let a = DMatrix::from_fn(dim, dim, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        z * 0.3
    });
    &a * a.transpose() + DMatrix::identity(dim, dim)
}

pub fn toy_instance<R: Rng>(
    rows: usize,
    cols: usize,
    t: usize,
    d_count: usize,
    k: usize,
    cohesion: CohesionSpec,
    rng: &mut R,
) -> Toy {
    let map = ArealMap::grid(rows, cols).unwrap();
    let n = map.n_areas();
    assert!(k <= n);
    let ordering = DagOrdering::new(&map, OrderingRule::ByIndex).unwrap();
    let p = 2;
    let lag_spec = LagSpec::new(vec![1, 2], vec![]).unwrap();
    let q = lag_spec.q();
    let qd = q * d_count;

    let y: Vec<f64> = (0..n * t * d_count)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * 0.8
        })
        .collect();
    let x: Vec<f64> = (0..n * t * d_count * p)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z
        })
        .collect();
    let cov = Covariates::new(vec!["x1".into(), "x2".into()], n, t, d_count, x).unwrap();
    let data = ObservationPanel::new(n, t, d_count, y, cov).unwrap();
    let design = build_design(&data, &lag_spec).unwrap();

    let mut hyper = Hyperparameters::default_for(p, q, d_count);
    hyper.cohesion = cohesion;
    hyper.nu = 2.5;
    hyper.df = qd as f64 + 3.0;
    hyper.sigma_mu = random_spd(qd, rng) * 0.4;
    hyper.s_scale = random_spd(qd, rng) * 0.4;
    hyper.sigma_beta = random_spd(p * d_count, rng) * 0.4;
    hyper.sigma_omega = random_spd(2, rng) * 0.5;
    hyper.a_alpha = 3.0;
    hyper.b_alpha = 2.0;
    hyper.sigma_phi_prior = SigmaPhiPrior::InvGamma { a: 3.0, b: 1.5 };

    // Labels with every cluster occupied.
    let mut labels: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.gen_range(0..k) }).collect();
    labels[0] = 0;
    let partition = Partition::from_labels(&labels).unwrap();
    let k_eff = partition.n_clusters();

    let gamma_star: Vec<DVector<f64>> = (0..k_eff)
        .map(|_| DVector::from_fn(qd, |_, _| {
            let z: f64 = StandardNormal.sample(rng);
            z * 0.3
        }))
        .collect();
    let sigma_star: Vec<Vec<f64>> = (0..k_eff)
        .map(|_| (0..d_count).map(|_| 0.4 + rng.gen::<f64>()).collect())
        .collect();
    let omega: Vec<Vec<(f64, f64)>> = (0..d_count)
        .map(|d| {
            (0..d)
                .map(|_| {
                    let a: f64 = StandardNormal.sample(rng);
                    let b: f64 = StandardNormal.sample(rng);
                    (0.5 * a, 0.2 * b)
                })
                .collect()
        })
        .collect();
    let state = ModelState {
        beta: DVector::from_fn(p * d_count, |_, _| {
            let z: f64 = StandardNormal.sample(rng);
            z * 0.4
        }),
        gamma_star,
        mu_gamma: DVector::from_fn(qd, |_, _| {
            let z: f64 = StandardNormal.sample(rng);
            z * 0.3
        }),
        sigma_gamma: random_spd(qd, rng) * 0.5,
        partition,
        phi: DMatrix::from_fn(n, d_count, |_, _| {
            let z: f64 = StandardNormal.sample(rng);
            z * 0.5
        }),
        omega,
        alpha: (0..d_count).map(|_| 0.2 + 0.6 * rng.gen::<f64>()).collect(),
        sigma_phi: (0..d_count).map(|_| 0.5 + rng.gen::<f64>()).collect(),
        sigma_star,
        xi: 0.5 + rng.gen::<f64>(),
    };
    state
        .check_dimensions(n, d_count, p, q)
        .expect("toy state coherent");
    Toy {
        data,
        map,
        ordering,
        design,
        lag_spec,
        hyper,
        state,
    }
}

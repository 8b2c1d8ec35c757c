//! Model state, hyperparameters, and the joint log posterior that every
//! conditional update is checked against.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dagar;
use crate::data::ObservationPanel;
use crate::error::Error;
use crate::graph::{ArealMap, DagOrdering};
use crate::linalg::{
    beta_log_density, gamma_log_density, inv_gamma_log_density, inv_wishart_log_density,
    mvn_log_density_cov, LN_2PI,
};
use crate::partition::{log_prior, CohesionSpec, Partition};
use crate::temporal::TemporalDesign;
use crate::Result;

/// One point in the parameter space. Cluster-specific arrays always hold one
/// entry per cluster of `partition`, in label order.
#[derive(Debug, Clone)]
pub struct ModelState {
    /// Regression coefficients, one p-block per disease.
    pub beta: DVector<f64>,
    /// Temporal coefficients per cluster; each is a qD vector of per-disease
    /// q-blocks.
    pub gamma_star: Vec<DVector<f64>>,
    pub mu_gamma: DVector<f64>,
    pub sigma_gamma: DMatrix<f64>,
    pub partition: Partition,
    /// Spatial effects, n x D.
    pub phi: DMatrix<f64>,
    /// Bridge coefficients: omega[d] holds one (omega0, omega1) pair for each
    /// earlier disease d' < d.
    pub omega: Vec<Vec<(f64, f64)>>,
    pub alpha: Vec<f64>,
    pub sigma_phi: Vec<f64>,
    /// Cluster-by-disease data variances.
    pub sigma_star: Vec<Vec<f64>>,
    pub xi: f64,
}

impl ModelState {
    pub fn n_clusters(&self) -> usize {
        self.partition.n_clusters()
    }

    pub fn n_diseases(&self) -> usize {
        self.alpha.len()
    }

    /// p covariate coefficients of one disease.
    pub fn beta_block(&self, d: usize) -> &[f64] {
        let d_count = self.n_diseases();
        let p = self.beta.len() / d_count.max(1);
        &self.beta.as_slice()[d * p..(d + 1) * p]
    }

    /// q temporal coefficients of cluster j, disease d.
    pub fn gamma_block(&self, j: usize, d: usize) -> &[f64] {
        let d_count = self.n_diseases();
        let q = self.gamma_star[j].len() / d_count;
        &self.gamma_star[j].as_slice()[d * q..(d + 1) * q]
    }

    pub fn check_dimensions(&self, n: usize, d_count: usize, p: usize, q: usize) -> Result<()> {
        let k = self.partition.n_clusters();
        if self.partition.n_items() != n {
            return Err(Error::DimensionMismatch(format!(
                "partition over {} areas, data has {n}",
                self.partition.n_items()
            )));
        }
        if self.alpha.len() != d_count || self.sigma_phi.len() != d_count {
            return Err(Error::DimensionMismatch("per-disease arrays".into()));
        }
        if self.beta.len() != p * d_count {
            return Err(Error::DimensionMismatch(format!(
                "beta has {} entries, expected {}",
                self.beta.len(),
                p * d_count
            )));
        }
        if self.gamma_star.len() != k || self.sigma_star.len() != k {
            return Err(Error::DimensionMismatch(
                "cluster arrays inconsistent with partition".into(),
            ));
        }
        for g in &self.gamma_star {
            if g.len() != q * d_count {
                return Err(Error::DimensionMismatch("gamma block size".into()));
            }
        }
        for s in &self.sigma_star {
            if s.len() != d_count {
                return Err(Error::DimensionMismatch("sigma block size".into()));
            }
            if s.iter().any(|&v| v <= 0.0) {
                return Err(Error::InvalidData("non-positive cluster variance".into()));
            }
        }
        if self.phi.nrows() != n || self.phi.ncols() != d_count {
            return Err(Error::DimensionMismatch("phi shape".into()));
        }
        if self.omega.len() != d_count || self.omega.iter().enumerate().any(|(d, o)| o.len() != d) {
            return Err(Error::DimensionMismatch("omega pair layout".into()));
        }
        Ok(())
    }

    /// Fitted mean for one observation under this state.
    pub fn mean(
        &self,
        data: &ObservationPanel,
        design: &TemporalDesign,
        area: usize,
        time: usize,
        disease: usize,
    ) -> f64 {
        let j = self.partition.label(area);
        let mut m = self.phi[(area, disease)];
        let x = data.x(area, time, disease);
        let b = self.beta_block(disease);
        for (l, &xv) in x.iter().enumerate() {
            m += xv * b[l];
        }
        let z = design.z(area, time, disease);
        let g = self.gamma_block(j, disease);
        for (l, &zv) in z.iter().enumerate() {
            m += zv * g[l];
        }
        m
    }
}

/// Prior on the spatial scale: either sampled with an inverse-gamma prior or
/// held fixed (the simulation-study configuration).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SigmaPhiPrior {
    Fixed { value: f64 },
    InvGamma { a: f64, b: f64 },
}

impl SigmaPhiPrior {
    pub fn initial(&self) -> f64 {
        match *self {
            SigmaPhiPrior::Fixed { value } => value,
            SigmaPhiPrior::InvGamma { a, b } => {
                if a > 1.0 {
                    b / (a - 1.0)
                } else {
                    1.0
                }
            }
        }
    }
}

/// User-specified constants of every prior, plus sampler knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub mu_beta: DVector<f64>,
    pub sigma_beta: DMatrix<f64>,
    pub nu: f64,
    pub a_xi: f64,
    pub b_xi: f64,
    pub cohesion: CohesionSpec,
    pub mu_mu: DVector<f64>,
    pub sigma_mu: DMatrix<f64>,
    pub df: f64,
    pub s_scale: DMatrix<f64>,
    pub mu_omega: DVector<f64>,
    pub sigma_omega: DMatrix<f64>,
    pub a_alpha: f64,
    pub b_alpha: f64,
    pub sigma_phi_prior: SigmaPhiPrior,
    /// Auxiliary components per partition move.
    pub m_aux: usize,
    /// Random-walk acceptance target for the spatial autocorrelations.
    pub target_acceptance: f64,
}

impl Hyperparameters {
    /// Neutral defaults for a given dimension; callers override fields.
    pub fn default_for(p: usize, q: usize, d_count: usize) -> Self {
        let pd = p * d_count;
        let qd = q * d_count;
        Self {
            mu_beta: DVector::zeros(pd),
            sigma_beta: DMatrix::identity(pd, pd),
            nu: 2.0,
            a_xi: 1.0,
            b_xi: 2.0,
            cohesion: CohesionSpec::Hb { eta: 0.35 },
            mu_mu: DVector::zeros(qd),
            sigma_mu: DMatrix::identity(qd, qd) * 0.5,
            df: 2.0 * (q as f64 + 1.0).max((qd as f64 + 2.0) / 2.0),
            s_scale: DMatrix::identity(qd, qd) * 0.5,
            mu_omega: DVector::zeros(2),
            sigma_omega: DMatrix::identity(2, 2),
            a_alpha: 2.0,
            b_alpha: 2.0,
            sigma_phi_prior: SigmaPhiPrior::InvGamma { a: 2.0, b: 0.1 },
            m_aux: 3,
            target_acceptance: 0.44,
        }
    }

    pub fn validate(&self, p: usize, q: usize, d_count: usize) -> Result<()> {
        let pd = p * d_count;
        let qd = q * d_count;
        if self.mu_beta.len() != pd || self.sigma_beta.nrows() != pd {
            return Err(Error::InvalidConfig("beta prior dimensions".into()));
        }
        if self.mu_mu.len() != qd || self.sigma_mu.nrows() != qd || self.s_scale.nrows() != qd {
            return Err(Error::InvalidConfig("temporal prior dimensions".into()));
        }
        if self.df <= (qd as f64) - 1.0 {
            return Err(Error::InvalidConfig(format!(
                "inv-Wishart df {} must exceed qD - 1 = {}",
                self.df,
                qd - 1
            )));
        }
        if self.nu <= 0.0 || self.a_xi <= 0.0 || self.b_xi <= 0.0 {
            return Err(Error::InvalidConfig("variance hyperparameters must be positive".into()));
        }
        if self.a_alpha <= 0.0 || self.b_alpha <= 0.0 {
            return Err(Error::InvalidConfig("alpha prior must be positive".into()));
        }
        if self.m_aux == 0 {
            return Err(Error::InvalidConfig("need at least one auxiliary component".into()));
        }
        if !(0.0 < self.target_acceptance && self.target_acceptance < 1.0) {
            return Err(Error::InvalidConfig("target acceptance in (0, 1)".into()));
        }
        self.cohesion.validate()?;
        if let SigmaPhiPrior::InvGamma { a, b } = self.sigma_phi_prior {
            if a <= 0.0 || b <= 0.0 {
                return Err(Error::InvalidConfig("sigma_phi prior must be positive".into()));
            }
        }
        if let SigmaPhiPrior::Fixed { value } = self.sigma_phi_prior {
            if value <= 0.0 {
                return Err(Error::InvalidConfig("fixed sigma_phi must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Neutral starting point: one cluster, parameters at their prior centers.
pub fn initial_state(
    data: &ObservationPanel,
    q: usize,
    hyper: &Hyperparameters,
) -> Result<ModelState> {
    let n = data.n_areas();
    let d_count = data.n_diseases();
    let qd = q * d_count;
    let sigma_gamma = if hyper.df > (qd as f64) + 1.0 {
        &hyper.s_scale / (hyper.df - qd as f64 - 1.0)
    } else {
        hyper.s_scale.clone()
    };
    let omega: Vec<Vec<(f64, f64)>> = (0..d_count)
        .map(|d| vec![(hyper.mu_omega[0], hyper.mu_omega[1]); d])
        .collect();
    let state = ModelState {
        beta: hyper.mu_beta.clone(),
        gamma_star: vec![hyper.mu_mu.clone()],
        mu_gamma: hyper.mu_mu.clone(),
        sigma_gamma,
        partition: Partition::single_cluster(n),
        phi: DMatrix::zeros(n, d_count),
        omega,
        alpha: vec![0.5; d_count],
        sigma_phi: vec![hyper.sigma_phi_prior.initial(); d_count],
        sigma_star: vec![vec![1.0; d_count]],
        xi: 1.0,
    };
    state.check_dimensions(n, d_count, data.n_covariates(), q)?;
    Ok(state)
}

/// Gaussian log likelihood of the panel over the usable time range.
pub fn log_likelihood(
    state: &ModelState,
    data: &ObservationPanel,
    design: &TemporalDesign,
) -> f64 {
    let mut total = 0.0;
    for i in 0..data.n_areas() {
        let j = state.partition.label(i);
        for d in 0..data.n_diseases() {
            let var = state.sigma_star[j][d];
            let log_norm = -0.5 * (LN_2PI + var.ln());
            for t in design.t_start()..data.n_times() {
                let r = data.y(i, t, d) - state.mean(data, design, i, t, d);
                total += log_norm - 0.5 * r * r / var;
            }
        }
    }
    total
}

/// Joint log posterior (unnormalized): likelihood times every prior layer,
/// including the partition cohesion product.
pub fn log_joint(
    state: &ModelState,
    data: &ObservationPanel,
    design: &TemporalDesign,
    map: &ArealMap,
    ordering: &DagOrdering,
    hyper: &Hyperparameters,
) -> Result<f64> {
    let mut total = log_likelihood(state, data, design);

    if state.beta.len() > 0 {
        total += mvn_log_density_cov(&state.beta, &hyper.mu_beta, &hyper.sigma_beta)?;
    }
    for g in &state.gamma_star {
        total += mvn_log_density_cov(g, &state.mu_gamma, &state.sigma_gamma)?;
    }
    total += mvn_log_density_cov(&state.mu_gamma, &hyper.mu_mu, &hyper.sigma_mu)?;
    total += inv_wishart_log_density(&state.sigma_gamma, hyper.df, &hyper.s_scale)?;

    total += dagar::mdagar_log_density(
        &state.phi,
        &state.alpha,
        &state.sigma_phi,
        &state.omega,
        ordering,
        map,
    )?;

    for pairs in &state.omega {
        for &(o0, o1) in pairs {
            let v = DVector::from_vec(vec![o0, o1]);
            total += mvn_log_density_cov(&v, &hyper.mu_omega, &hyper.sigma_omega)?;
        }
    }
    for &a in &state.alpha {
        total += beta_log_density(a, hyper.a_alpha, hyper.b_alpha);
    }
    if let SigmaPhiPrior::InvGamma { a, b } = hyper.sigma_phi_prior {
        for &s in &state.sigma_phi {
            total += inv_gamma_log_density(s, a, b);
        }
    }
    for row in &state.sigma_star {
        for &s in row {
            total += inv_gamma_log_density(s, hyper.nu, hyper.nu * state.xi);
        }
    }
    total += gamma_log_density(state.xi, hyper.a_xi, hyper.b_xi);

    total += log_prior(map, &state.partition, &hyper.cohesion)?;
    Ok(total)
}

//! Metropolis-within-Gibbs sampler: one operation per conditional update,
//! plus the chain driver.
//!
//! Sweep order per iteration: xi, mu_gamma, sigma_gamma, partition,
//! cluster variances, cluster temporal coefficients, bridge coefficients,
//! spatial scales, spatial autocorrelations (adaptive random walk on the
//! logit scale), spatial effects, regression coefficients.
//!
//! Every conjugate update is exposed through its conditional parameters so
//! tests can compare conditional density ratios against the joint posterior.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::ObservationPanel;
use crate::error::Error;
use crate::graph::{ArealMap, DagOrdering};
use crate::linalg::{
    beta_log_density, cholesky_with_jitter, sample_gamma, sample_inv_gamma, sample_inv_wishart,
    GaussianConditional, LN_2PI,
};
use crate::model::{initial_state, log_joint, Hyperparameters, ModelState, SigmaPhiPrior};
use crate::partition::{CohesionSpec, Partition};
use crate::temporal::TemporalDesign;
use crate::{dagar, Result};

/// Everything held fixed across one chain.
pub struct GibbsContext<'a> {
    pub data: &'a ObservationPanel,
    pub design: &'a TemporalDesign,
    pub map: &'a ArealMap,
    pub ordering: &'a DagOrdering,
    pub hyper: &'a Hyperparameters,
}

impl<'a> GibbsContext<'a> {
    pub fn new(
        data: &'a ObservationPanel,
        design: &'a TemporalDesign,
        map: &'a ArealMap,
        ordering: &'a DagOrdering,
        hyper: &'a Hyperparameters,
    ) -> Result<Self> {
        if map.n_areas() != data.n_areas() {
            return Err(Error::DimensionMismatch(format!(
                "map has {} areas, panel has {}",
                map.n_areas(),
                data.n_areas()
            )));
        }
        hyper.validate(data.n_covariates(), design.q(), data.n_diseases())?;
        if let CohesionSpec::Hb { eta } = hyper.cohesion {
            if eta <= 0.0 {
                return Err(Error::InvalidConfig(
                    "partition sampling needs eta > 0".into(),
                ));
            }
        }
        Ok(Self {
            data,
            design,
            map,
            ordering,
            hyper,
        })
    }

    pub fn n(&self) -> usize {
        self.data.n_areas()
    }

    pub fn d_count(&self) -> usize {
        self.data.n_diseases()
    }

    pub fn p(&self) -> usize {
        self.data.n_covariates()
    }

    pub fn q(&self) -> usize {
        self.design.q()
    }

    pub fn t_eff(&self) -> usize {
        self.design.t_effective()
    }

    fn x_dot_beta(&self, state: &ModelState, i: usize, t: usize, d: usize) -> f64 {
        let x = self.data.x(i, t, d);
        let b = state.beta_block(d);
        x.iter().zip(b.iter()).map(|(xv, bv)| xv * bv).sum()
    }

    fn z_dot_gamma(&self, state: &ModelState, j: usize, i: usize, t: usize, d: usize) -> f64 {
        let z = self.design.z(i, t, d);
        let g = state.gamma_block(j, d);
        z.iter().zip(g.iter()).map(|(zv, gv)| zv * gv).sum()
    }
}

/// Gamma(shape, rate) conditional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaParams {
    pub shape: f64,
    pub rate: f64,
}

/// inv-Gamma(shape, scale) conditional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvGammaParams {
    pub shape: f64,
    pub scale: f64,
}

/// inv-Wishart(df, scale) conditional.
#[derive(Debug, Clone)]
pub struct InvWishartParams {
    pub df: f64,
    pub scale: DMatrix<f64>,
}

// ---------------------------------------------------------------------------
// Step 1: xi
// ---------------------------------------------------------------------------

/// Gamma conditional of the variance-level parameter. The shape picks up kD
/// copies of nu from the inverse-gamma layer; the rate collects nu / sigma2
/// over every cluster-disease cell.
pub fn xi_conditional(state: &ModelState, hyper: &Hyperparameters) -> GammaParams {
    let k = state.n_clusters() as f64;
    let d_count = state.n_diseases() as f64;
    let inv_sum: f64 = state
        .sigma_star
        .iter()
        .flat_map(|row| row.iter())
        .map(|&s| 1.0 / s)
        .sum();
    GammaParams {
        shape: hyper.a_xi + k * d_count * hyper.nu,
        rate: hyper.b_xi + hyper.nu * inv_sum,
    }
}

pub fn update_xi<R: Rng>(state: &mut ModelState, ctx: &GibbsContext, rng: &mut R) {
    let params = xi_conditional(state, ctx.hyper);
    state.xi = sample_gamma(params.shape, params.rate, rng);
}

// ---------------------------------------------------------------------------
// Step 2: mu_gamma
// ---------------------------------------------------------------------------

pub fn mu_gamma_conditional(state: &ModelState, hyper: &Hyperparameters) -> Result<GaussianConditional> {
    let k = state.n_clusters() as f64;
    let sigma_gamma_inv = cholesky_with_jitter(&state.sigma_gamma, "mu_gamma sigma_gamma")?.inverse();
    let sigma_mu_inv = cholesky_with_jitter(&hyper.sigma_mu, "mu_gamma sigma_mu")?.inverse();
    let precision = &sigma_gamma_inv * k + &sigma_mu_inv;
    let mut gamma_sum = DVector::zeros(state.mu_gamma.len());
    for g in &state.gamma_star {
        gamma_sum += g;
    }
    let shift = &sigma_gamma_inv * gamma_sum + &sigma_mu_inv * &hyper.mu_mu;
    Ok(GaussianConditional { precision, shift })
}

pub fn update_mu_gamma<R: Rng>(state: &mut ModelState, ctx: &GibbsContext, rng: &mut R) -> Result<()> {
    let cond = mu_gamma_conditional(state, ctx.hyper)?;
    state.mu_gamma = cond.sample(rng, "mu_gamma draw")?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Step 3: sigma_gamma
// ---------------------------------------------------------------------------

pub fn sigma_gamma_conditional(state: &ModelState, hyper: &Hyperparameters) -> InvWishartParams {
    let mut scatter = hyper.s_scale.clone();
    for g in &state.gamma_star {
        let r = g - &state.mu_gamma;
        scatter += &r * r.transpose();
    }
    InvWishartParams {
        df: hyper.df + state.n_clusters() as f64,
        scale: scatter,
    }
}

pub fn update_sigma_gamma<R: Rng>(state: &mut ModelState, ctx: &GibbsContext, rng: &mut R) -> Result<()> {
    let params = sigma_gamma_conditional(state, ctx.hyper);
    state.sigma_gamma = sample_inv_wishart(params.df, &params.scale, rng)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Step 4: partition (auxiliary-component move)
// ---------------------------------------------------------------------------

/// Residuals y - x'beta - phi over the usable range, the part of the
/// likelihood that does not move during a partition pass.
fn partial_residuals(state: &ModelState, ctx: &GibbsContext) -> Vec<f64> {
    let n = ctx.n();
    let t_eff = ctx.t_eff();
    let d_count = ctx.d_count();
    let t0 = ctx.design.t_start();
    let mut out = vec![0.0; n * t_eff * d_count];
    for i in 0..n {
        for (tr, t) in (t0..ctx.data.n_times()).enumerate() {
            for d in 0..d_count {
                out[(i * t_eff + tr) * d_count + d] =
                    ctx.data.y(i, t, d) - ctx.x_dot_beta(state, i, t, d) - state.phi[(i, d)];
            }
        }
    }
    out
}

/// Log likelihood of area i under candidate cluster parameters.
fn area_log_lik(
    ctx: &GibbsContext,
    pre_resid: &[f64],
    i: usize,
    gamma: &DVector<f64>,
    sigma_row: &[f64],
) -> f64 {
    let t_eff = ctx.t_eff();
    let d_count = ctx.d_count();
    let q = ctx.q();
    let t0 = ctx.design.t_start();
    let mut total = 0.0;
    for d in 0..d_count {
        let var = sigma_row[d];
        let log_norm = -0.5 * (LN_2PI + var.ln());
        let g = &gamma.as_slice()[d * q..(d + 1) * q];
        for tr in 0..t_eff {
            let z = ctx.design.z(i, t0 + tr, d);
            let fitted: f64 = z.iter().zip(g.iter()).map(|(zv, gv)| zv * gv).sum();
            let r = pre_resid[(i * t_eff + tr) * d_count + d] - fitted;
            total += log_norm - 0.5 * r * r / var;
        }
    }
    total
}

/// Log cohesion ratio C(S u {i}) / C(S) for a cluster holding the areas where
/// `labels == j` (area i itself already detached).
fn cohesion_ratio_log(
    cohesion: &CohesionSpec,
    map: &ArealMap,
    labels: &[usize],
    sizes: &[usize],
    i: usize,
    j: usize,
) -> f64 {
    match *cohesion {
        CohesionSpec::Hb { eta } => {
            let deg = map.degree(i);
            let inside = map
                .neighbors(i)
                .iter()
                .filter(|&&nb| labels[nb] == j)
                .count();
            (deg as f64 - 2.0 * inside as f64) * eta.ln()
        }
        CohesionSpec::Dp { .. } => (sizes[j] as f64).ln(),
    }
}

/// Log cohesion of the singleton {i}.
fn singleton_cohesion_log(cohesion: &CohesionSpec, map: &ArealMap, i: usize) -> f64 {
    match *cohesion {
        CohesionSpec::Hb { eta } => map.degree(i) as f64 * eta.ln(),
        CohesionSpec::Dp { mass } => mass.ln(),
    }
}

/// Allocation log weights for detached area `i`: one per existing cluster,
/// then one per auxiliary parameter set. `labels[i]` must already be detached
/// (set to `usize::MAX`).
#[allow(clippy::too_many_arguments)]
fn allocation_log_weights(
    ctx: &GibbsContext,
    pre_resid: &[f64],
    labels: &[usize],
    sizes: &[usize],
    gamma_star: &[DVector<f64>],
    sigma_star: &[Vec<f64>],
    i: usize,
    aux: &[(DVector<f64>, Vec<f64>)],
) -> (Vec<f64>, Vec<f64>) {
    let k_minus = sizes.len();
    let mut existing = Vec::with_capacity(k_minus);
    for j in 0..k_minus {
        let w = cohesion_ratio_log(&ctx.hyper.cohesion, ctx.map, labels, sizes, i, j)
            + area_log_lik(ctx, pre_resid, i, &gamma_star[j], &sigma_star[j]);
        existing.push(w);
    }
    let base = singleton_cohesion_log(&ctx.hyper.cohesion, ctx.map, i) - (aux.len() as f64).ln();
    let auxiliary = aux
        .iter()
        .map(|(g, s)| base + area_log_lik(ctx, pre_resid, i, g, s))
        .collect();
    (existing, auxiliary)
}

/// Public view of the allocation weights for a given area with injected
/// auxiliary parameters; used by the conditional-correctness checks.
pub fn partition_allocation_log_weights(
    state: &ModelState,
    ctx: &GibbsContext,
    area: usize,
    aux: &[(DVector<f64>, Vec<f64>)],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if area >= ctx.n() {
        return Err(Error::InvalidData(format!("area {area} out of range")));
    }
    let pre_resid = partial_residuals(state, ctx);
    let mut labels = state.partition.labels().to_vec();
    let mut sizes = state.partition.block_sizes();
    let mut gamma = state.gamma_star.clone();
    let mut sigma = state.sigma_star.clone();
    let j_old = labels[area];
    labels[area] = usize::MAX;
    sizes[j_old] -= 1;
    if sizes[j_old] == 0 {
        sizes.remove(j_old);
        gamma.remove(j_old);
        sigma.remove(j_old);
        for l in labels.iter_mut() {
            if *l != usize::MAX && *l > j_old {
                *l -= 1;
            }
        }
    }
    Ok(allocation_log_weights(
        ctx, &pre_resid, &labels, &sizes, &gamma, &sigma, area, aux,
    ))
}

fn sample_categorical_log<R: Rng>(log_weights: &[f64], rng: &mut R) -> usize {
    let max = log_weights
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_weights.iter().map(|&w| (w - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u: f64 = rng.gen::<f64>() * total;
    for (idx, w) in weights.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return idx;
        }
    }
    weights.len() - 1
}

/// One full pass of the auxiliary-component partition move over all areas.
/// Cluster parameter rows follow every birth, death, and relabeling, and the
/// partition ends in canonical form.
pub fn update_partition<R: Rng>(state: &mut ModelState, ctx: &GibbsContext, rng: &mut R) -> Result<()> {
    let n = ctx.n();
    let m_aux = ctx.hyper.m_aux;
    let pre_resid = partial_residuals(state, ctx);

    let mut labels = state.partition.labels().to_vec();
    let mut sizes = state.partition.block_sizes();
    let mut gamma = std::mem::take(&mut state.gamma_star);
    let mut sigma = std::mem::take(&mut state.sigma_star);

    let chol_gamma = cholesky_with_jitter(&state.sigma_gamma, "partition aux gamma prior")?;
    let gamma_l = chol_gamma.l();
    let qd = state.mu_gamma.len();
    let d_count = ctx.d_count();

    for i in 0..n {
        let j_old = labels[i];
        labels[i] = usize::MAX;
        sizes[j_old] -= 1;
        let mut stashed: Option<(DVector<f64>, Vec<f64>)> = None;
        if sizes[j_old] == 0 {
            stashed = Some((gamma.remove(j_old), sigma.remove(j_old)));
            sizes.remove(j_old);
            for l in labels.iter_mut() {
                if *l != usize::MAX && *l > j_old {
                    *l -= 1;
                }
            }
        }

        // Fresh auxiliary parameters from the priors; a vacated singleton
        // donates its parameters as the first auxiliary.
        let mut aux: Vec<(DVector<f64>, Vec<f64>)> = Vec::with_capacity(m_aux);
        if let Some(params) = stashed {
            aux.push(params);
        }
        while aux.len() < m_aux {
            let z = DVector::from_fn(qd, |_, _| StandardNormal.sample(rng));
            let g = &state.mu_gamma + &gamma_l * z;
            let s: Vec<f64> = (0..d_count)
                .map(|_| sample_inv_gamma(ctx.hyper.nu, ctx.hyper.nu * state.xi, rng))
                .collect();
            aux.push((g, s));
        }

        let (existing, auxiliary) =
            allocation_log_weights(ctx, &pre_resid, &labels, &sizes, &gamma, &sigma, i, &aux);
        let mut all = existing;
        let k_minus = all.len();
        all.extend(auxiliary);
        let choice = sample_categorical_log(&all, rng);

        if choice < k_minus {
            labels[i] = choice;
            sizes[choice] += 1;
        } else {
            let (g, s) = aux.swap_remove(choice - k_minus);
            labels[i] = k_minus;
            sizes.push(1);
            gamma.push(g);
            sigma.push(s);
        }
    }

    // Canonicalize labels and permute cluster rows to match.
    let canonical = Partition::from_labels(&labels)?;
    let k = canonical.n_clusters();
    let mut order = vec![usize::MAX; k];
    for (area, &raw) in labels.iter().enumerate() {
        let canon = canonical.label(area);
        if order[canon] == usize::MAX {
            order[canon] = raw;
        }
    }
    state.gamma_star = order.iter().map(|&r| gamma[r].clone()).collect();
    state.sigma_star = order.iter().map(|&r| sigma[r].clone()).collect();
    state.partition = canonical;
    Ok(())
}

// ---------------------------------------------------------------------------
// Step 5: cluster variances
// ---------------------------------------------------------------------------

/// inv-Gamma conditional for one cluster-disease variance. Residual sum runs
/// over the cluster's own areas only.
pub fn sigma_star_conditional(
    state: &ModelState,
    ctx: &GibbsContext,
    j: usize,
    d: usize,
) -> InvGammaParams {
    let t0 = ctx.design.t_start();
    let mut n_j = 0usize;
    let mut ss = 0.0;
    for i in 0..ctx.n() {
        if state.partition.label(i) != j {
            continue;
        }
        n_j += 1;
        for t in t0..ctx.data.n_times() {
            let r = ctx.data.y(i, t, d)
                - ctx.x_dot_beta(state, i, t, d)
                - ctx.z_dot_gamma(state, j, i, t, d)
                - state.phi[(i, d)];
            ss += r * r;
        }
    }
    InvGammaParams {
        shape: (n_j * ctx.t_eff()) as f64 / 2.0 + ctx.hyper.nu,
        scale: ss / 2.0 + ctx.hyper.nu * state.xi,
    }
}

pub fn update_sigma_star<R: Rng>(state: &mut ModelState, ctx: &GibbsContext, rng: &mut R) {
    for j in 0..state.n_clusters() {
        for d in 0..ctx.d_count() {
            let params = sigma_star_conditional(state, ctx, j, d);
            state.sigma_star[j][d] = sample_inv_gamma(params.shape, params.scale, rng);
        }
    }
}

// ---------------------------------------------------------------------------
// Step 6: cluster temporal coefficients
// ---------------------------------------------------------------------------

/// Gaussian conditional of one cluster's stacked coefficient vector. The data
/// contribution is block-diagonal over diseases; cross-disease coupling
/// enters only through the prior covariance.
pub fn gamma_conditional(state: &ModelState, ctx: &GibbsContext, j: usize) -> Result<GaussianConditional> {
    let q = ctx.q();
    let d_count = ctx.d_count();
    let qd = q * d_count;
    let t0 = ctx.design.t_start();
    let sigma_gamma_inv = cholesky_with_jitter(&state.sigma_gamma, "gamma prior")?.inverse();
    let mut precision = sigma_gamma_inv.clone();
    let mut shift = &sigma_gamma_inv * &state.mu_gamma;

    for d in 0..d_count {
        let var = state.sigma_star[j][d];
        let mut block: DMatrix<f64> = DMatrix::zeros(q, q);
        let mut vec: DVector<f64> = DVector::zeros(q);
        for i in 0..ctx.n() {
            if state.partition.label(i) != j {
                continue;
            }
            for t in t0..ctx.data.n_times() {
                let z = ctx.design.z(i, t, d);
                let r = ctx.data.y(i, t, d) - ctx.x_dot_beta(state, i, t, d) - state.phi[(i, d)];
                for a in 0..q {
                    vec[a] += z[a] * r;
                    for b in 0..q {
                        block[(a, b)] += z[a] * z[b];
                    }
                }
            }
        }
        precision
            .view_mut((d * q, d * q), (q, q))
            .zip_apply(&(block / var), |p, v| *p += v);
        shift.rows_mut(d * q, q).zip_apply(&(vec / var), |s, v| *s += v);
    }
    let _ = qd;
    Ok(GaussianConditional { precision, shift })
}

pub fn update_gamma_star<R: Rng>(state: &mut ModelState, ctx: &GibbsContext, rng: &mut R) -> Result<()> {
    for j in 0..state.n_clusters() {
        let cond = gamma_conditional(state, ctx, j)?;
        state.gamma_star[j] = cond.sample(rng, "gamma_star draw")?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Step 7: bridge coefficients
// ---------------------------------------------------------------------------

/// Gaussian conditional of the stacked bridge pairs of disease d (one
/// (omega0, omega1) pair per earlier disease).
pub fn omega_conditional(state: &ModelState, ctx: &GibbsContext, d: usize) -> Result<GaussianConditional> {
    assert!(d >= 1, "first disease has no bridge");
    let n = ctx.n();
    let dim = 2 * d;
    let q_d = dagar::DagarPrecision::new(ctx.ordering, state.alpha[d])?;
    let inv_var = 1.0 / state.sigma_phi[d];

    // delta columns: phi_d' and its neighbor sums, per earlier disease.
    let mut delta = DMatrix::zeros(n, dim);
    for dp in 0..d {
        let col = state.phi.column(dp).into_owned();
        let msum = crate::dagar::bridge_apply((0.0, 1.0), ctx.map, &col);
        delta.set_column(2 * dp, &col);
        delta.set_column(2 * dp + 1, &msum);
    }
    let mut q_delta = DMatrix::zeros(n, dim);
    for c in 0..dim {
        let col = delta.column(c).into_owned();
        q_delta.set_column(c, &q_d.apply(&col));
    }
    let sigma_omega_inv = cholesky_with_jitter(&ctx.hyper.sigma_omega, "omega prior")?.inverse();
    let mut precision = delta.transpose() * &q_delta * inv_var;
    let phi_d = state.phi.column(d).into_owned();
    let mut shift = delta.transpose() * q_d.apply(&phi_d) * inv_var;
    for dp in 0..d {
        precision
            .view_mut((2 * dp, 2 * dp), (2, 2))
            .zip_apply(&sigma_omega_inv, |p, v| *p += v);
        let prior_shift = &sigma_omega_inv * &ctx.hyper.mu_omega;
        shift.rows_mut(2 * dp, 2).zip_apply(&prior_shift, |s, v| *s += v);
    }
    Ok(GaussianConditional { precision, shift })
}

pub fn update_omega<R: Rng>(state: &mut ModelState, ctx: &GibbsContext, rng: &mut R) -> Result<()> {
    for d in 1..ctx.d_count() {
        let cond = omega_conditional(state, ctx, d)?;
        let draw = cond.sample(rng, "omega draw")?;
        for dp in 0..d {
            state.omega[d][dp] = (draw[2 * dp], draw[2 * dp + 1]);
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Step 8: spatial scales
// ---------------------------------------------------------------------------

pub fn sigma_phi_conditional(state: &ModelState, ctx: &GibbsContext, d: usize) -> Result<InvGammaParams> {
    let (a_phi, b_phi) = match ctx.hyper.sigma_phi_prior {
        SigmaPhiPrior::InvGamma { a, b } => (a, b),
        SigmaPhiPrior::Fixed { .. } => {
            return Err(Error::InvalidConfig(
                "sigma_phi is fixed; no conditional exists".into(),
            ))
        }
    };
    let q_d = dagar::DagarPrecision::new(ctx.ordering, state.alpha[d])?;
    let mean = dagar::bridge_mean(&state.omega[d], ctx.map, &state.phi, d);
    let res = state.phi.column(d).into_owned() - mean;
    Ok(InvGammaParams {
        shape: a_phi + ctx.n() as f64 / 2.0,
        scale: b_phi + 0.5 * q_d.quadratic_form(&res),
    })
}

pub fn update_sigma_phi<R: Rng>(state: &mut ModelState, ctx: &GibbsContext, rng: &mut R) -> Result<()> {
    if matches!(ctx.hyper.sigma_phi_prior, SigmaPhiPrior::Fixed { .. }) {
        return Ok(());
    }
    for d in 0..ctx.d_count() {
        let params = sigma_phi_conditional(state, ctx, d)?;
        state.sigma_phi[d] = sample_inv_gamma(params.shape, params.scale, rng);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Step 9: spatial autocorrelations (adaptive random walk)
// ---------------------------------------------------------------------------

/// Log target of alpha_d on the original scale, including the Jacobian of the
/// logit transform: p(phi_d | .) p(alpha_d) alpha (1 - alpha).
pub fn alpha_log_target(state: &ModelState, ctx: &GibbsContext, d: usize, alpha: f64) -> Result<f64> {
    if alpha <= 0.0 || alpha >= 1.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let q = dagar::DagarPrecision::new(ctx.ordering, alpha)?;
    let mean = dagar::bridge_mean(&state.omega[d], ctx.map, &state.phi, d);
    let col = state.phi.column(d).into_owned();
    let lik = q.log_density(&col, &mean, state.sigma_phi[d]);
    let prior = beta_log_density(alpha, ctx.hyper.a_alpha, ctx.hyper.b_alpha);
    Ok(lik + prior + (alpha * (1.0 - alpha)).ln())
}

/// Robbins-Monro scale adaptation on the log proposal scale; frozen outside
/// burn-in so the chain kernel stays fixed after adaptation.
#[derive(Debug, Clone)]
pub struct ScaleAdapter {
    log_scale: f64,
    target: f64,
    steps: usize,
    acc_sum: f64,
    proposals: usize,
}

impl ScaleAdapter {
    pub fn new(target: f64) -> Self {
        Self {
            log_scale: (0.5f64).ln(),
            target,
            steps: 0,
            acc_sum: 0.0,
            proposals: 0,
        }
    }

    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    pub fn observe(&mut self, acc_prob: f64, adapting: bool) {
        self.acc_sum += acc_prob;
        self.proposals += 1;
        if adapting {
            self.steps += 1;
            let gain = (self.steps as f64).powf(-0.6);
            self.log_scale += gain * (acc_prob - self.target);
            self.log_scale = self.log_scale.clamp(-15.0, 15.0);
        }
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.acc_sum / self.proposals as f64
        }
    }
}

/// One random-walk move on logit(alpha_d); returns the acceptance probability.
pub fn update_alpha<R: Rng>(
    state: &mut ModelState,
    ctx: &GibbsContext,
    d: usize,
    scale: f64,
    rng: &mut R,
) -> Result<f64> {
    let current = state.alpha[d];
    let abar = (current / (1.0 - current)).ln();
    let step: f64 = StandardNormal.sample(rng);
    let proposal_logit = abar + scale * step;
    let proposal = 1.0 / (1.0 + (-proposal_logit).exp());
    let log_current = alpha_log_target(state, ctx, d, current)?;
    let log_proposal = alpha_log_target(state, ctx, d, proposal)?;
    let acc_prob = (log_proposal - log_current).exp().min(1.0);
    let u: f64 = rng.gen();
    if u < acc_prob {
        state.alpha[d] = proposal;
    }
    Ok(acc_prob)
}

// ---------------------------------------------------------------------------
// Step 10: spatial effects
// ---------------------------------------------------------------------------

fn bridge_dense(omega: (f64, f64), map: &ArealMap) -> DMatrix<f64> {
    let n = map.n_areas();
    let mut a = DMatrix::identity(n, n) * omega.0;
    for i in 0..n {
        for &j in map.neighbors(i) {
            a[(i, j)] += omega.1;
        }
    }
    a
}

/// Gaussian conditional of one disease's spatial effect vector. Combines its
/// own DAGAR prior, the back-coupling from later diseases that condition on
/// it, and an area-wise data precision that sums the usable time points of
/// the cluster the area currently sits in.
pub fn phi_conditional(state: &ModelState, ctx: &GibbsContext, d: usize) -> Result<GaussianConditional> {
    let n = ctx.n();
    let d_count = ctx.d_count();
    let t0 = ctx.design.t_start();
    let q_d = dagar::DagarPrecision::new(ctx.ordering, state.alpha[d])?;
    let p_own = q_d.to_dense() / state.sigma_phi[d];
    let own_mean = dagar::bridge_mean(&state.omega[d], ctx.map, &state.phi, d);
    let mut precision = p_own.clone();
    let mut shift = &p_own * own_mean;

    for l in (d + 1)..d_count {
        let q_l = dagar::DagarPrecision::new(ctx.ordering, state.alpha[l])?;
        let p_l = q_l.to_dense() / state.sigma_phi[l];
        let a_ld = bridge_dense(state.omega[l][d], ctx.map);
        // Residual of disease l around the other earlier diseases.
        let mut u = state.phi.column(l).into_owned();
        for lp in 0..l {
            if lp == d {
                continue;
            }
            let col = state.phi.column(lp).into_owned();
            u -= dagar::bridge_apply(state.omega[l][lp], ctx.map, &col);
        }
        precision += a_ld.transpose() * &p_l * &a_ld;
        shift += a_ld.transpose() * (&p_l * u);
    }

    for i in 0..n {
        let j = state.partition.label(i);
        let var = state.sigma_star[j][d];
        precision[(i, i)] += ctx.t_eff() as f64 / var;
        let mut acc = 0.0;
        for t in t0..ctx.data.n_times() {
            acc += ctx.data.y(i, t, d)
                - ctx.x_dot_beta(state, i, t, d)
                - ctx.z_dot_gamma(state, j, i, t, d);
        }
        shift[i] += acc / var;
    }
    Ok(GaussianConditional { precision, shift })
}

pub fn update_phi<R: Rng>(state: &mut ModelState, ctx: &GibbsContext, rng: &mut R) -> Result<()> {
    for d in 0..ctx.d_count() {
        let cond = phi_conditional(state, ctx, d)?;
        let draw = cond.sample(rng, "phi draw")?;
        state.phi.set_column(d, &draw);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Step 11: regression coefficients
// ---------------------------------------------------------------------------

pub fn beta_conditional(state: &ModelState, ctx: &GibbsContext) -> Result<GaussianConditional> {
    let p = ctx.p();
    let d_count = ctx.d_count();
    let t0 = ctx.design.t_start();
    let sigma_beta_inv = cholesky_with_jitter(&ctx.hyper.sigma_beta, "beta prior")?.inverse();
    let mut precision = sigma_beta_inv.clone();
    let mut shift = &sigma_beta_inv * &ctx.hyper.mu_beta;

    for d in 0..d_count {
        let mut block: DMatrix<f64> = DMatrix::zeros(p, p);
        let mut vec: DVector<f64> = DVector::zeros(p);
        for i in 0..ctx.n() {
            let j = state.partition.label(i);
            let inv_var = 1.0 / state.sigma_star[j][d];
            for t in t0..ctx.data.n_times() {
                let x = ctx.data.x(i, t, d);
                let r = ctx.data.y(i, t, d)
                    - ctx.z_dot_gamma(state, j, i, t, d)
                    - state.phi[(i, d)];
                for a in 0..p {
                    vec[a] += x[a] * r * inv_var;
                    for b in 0..p {
                        block[(a, b)] += x[a] * x[b] * inv_var;
                    }
                }
            }
        }
        precision
            .view_mut((d * p, d * p), (p, p))
            .zip_apply(&block, |pv, v| *pv += v);
        shift.rows_mut(d * p, p).zip_apply(&vec, |s, v| *s += v);
    }
    Ok(GaussianConditional { precision, shift })
}

pub fn update_beta<R: Rng>(state: &mut ModelState, ctx: &GibbsContext, rng: &mut R) -> Result<()> {
    if ctx.p() == 0 {
        return Ok(());
    }
    let cond = beta_conditional(state, ctx)?;
    state.beta = cond.sample(rng, "beta draw")?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Chain driver
// ---------------------------------------------------------------------------

/// Iteration schedule: `saved = (iterations - burnin) / thin`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub iterations: usize,
    pub burnin: usize,
    pub thin: usize,
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::InvalidConfig("thinning must be positive".into()));
        }
        if self.burnin > self.iterations {
            return Err(Error::InvalidConfig(format!(
                "burn-in {} exceeds iterations {}",
                self.burnin, self.iterations
            )));
        }
        Ok(())
    }

    pub fn n_saved(&self) -> usize {
        (self.iterations - self.burnin) / self.thin
    }
}

/// Saved draws plus run provenance.
#[derive(Debug, Clone)]
pub struct PosteriorChain {
    pub states: Vec<ModelState>,
    pub iteration_stamps: Vec<usize>,
    pub log_posterior: Vec<f64>,
    /// Final acceptance rate of each spatial autocorrelation walker.
    pub acceptance_rates: Vec<f64>,
    pub schedule: Schedule,
    pub seed: u64,
}

/// One full sweep over all conditionals, in order.
pub fn sweep<R: Rng>(
    state: &mut ModelState,
    ctx: &GibbsContext,
    adapters: &mut [ScaleAdapter],
    adapting: bool,
    rng: &mut R,
) -> Result<()> {
    update_xi(state, ctx, rng);
    update_mu_gamma(state, ctx, rng)?;
    update_sigma_gamma(state, ctx, rng)?;
    update_partition(state, ctx, rng)?;
    update_sigma_star(state, ctx, rng);
    update_gamma_star(state, ctx, rng)?;
    update_omega(state, ctx, rng)?;
    update_sigma_phi(state, ctx, rng)?;
    for d in 0..ctx.d_count() {
        let scale = adapters[d].scale();
        let acc = update_alpha(state, ctx, d, scale, rng)?;
        adapters[d].observe(acc, adapting);
    }
    update_phi(state, ctx, rng)?;
    update_beta(state, ctx, rng)?;
    Ok(())
}

/// Run one chain. Deterministic for a fixed seed; aborts with a diagnosable
/// state summary on numerical failure.
pub fn run_chain(
    data: &ObservationPanel,
    design: &TemporalDesign,
    map: &ArealMap,
    ordering: &DagOrdering,
    hyper: &Hyperparameters,
    schedule: Schedule,
    seed: u64,
) -> Result<PosteriorChain> {
    schedule.validate()?;
    let ctx = GibbsContext::new(data, design, map, ordering, hyper)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = initial_state(data, design.q(), hyper)?;
    let mut adapters = vec![ScaleAdapter::new(hyper.target_acceptance); ctx.d_count()];

    let n_saved = schedule.n_saved();
    let mut states = Vec::with_capacity(n_saved);
    let mut stamps = Vec::with_capacity(n_saved);
    let mut log_post = Vec::with_capacity(n_saved);

    for iter in 1..=schedule.iterations {
        let adapting = iter <= schedule.burnin;
        sweep(&mut state, &ctx, &mut adapters, adapting, &mut rng).map_err(|e| {
            Error::Numerical(format!(
                "iteration {iter}: {e}; state: k = {}, xi = {:.3e}, alpha = {:?}, \
                 sigma_star range = [{:.3e}, {:.3e}]",
                state.n_clusters(),
                state.xi,
                state.alpha,
                state
                    .sigma_star
                    .iter()
                    .flatten()
                    .cloned()
                    .fold(f64::INFINITY, f64::min),
                state
                    .sigma_star
                    .iter()
                    .flatten()
                    .cloned()
                    .fold(0.0, f64::max),
            ))
        })?;
        if iter > schedule.burnin && (iter - schedule.burnin) % schedule.thin == 0 {
            let lj = log_joint(&state, data, design, map, ordering, hyper)?;
            if !lj.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite log posterior at iteration {iter}"
                )));
            }
            states.push(state.clone());
            stamps.push(iter);
            log_post.push(lj);
        }
    }

    Ok(PosteriorChain {
        states,
        iteration_stamps: stamps,
        log_posterior: log_post,
        acceptance_rates: adapters.iter().map(|a| a.acceptance_rate()).collect(),
        schedule,
        seed,
    })
}

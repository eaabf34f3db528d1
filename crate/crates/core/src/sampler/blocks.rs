//! The individual Metropolis-within-Gibbs blocks.
//!
//! One [`gibbs_sweep`] updates, in order:
//!
//! * (a) regression coefficients `(alpha_j, beta_j1, beta_j2)` — exact
//!   conjugate Gaussian draw, using the normal scale-mixture form of the
//!   Laplace prior (coefficient k has conditional prior `N(0, psi_jk)`);
//! * (b) mixture variances `psi_jk` — exact inverse-Gaussian draw on the
//!   precision scale (the Bayesian-lasso device);
//! * (c) observation scales `sigma_j`, process scale `nu`, index scale `tau`
//!   — adaptive random-walk Metropolis on the log scale (the half-Cauchy
//!   priors break conjugacy);
//! * (d) shrinkage scale `lambda` — adaptive log-scale random walk given the
//!   mixture variances;
//! * (e) trend coefficients `(omega, delta)` — exact conjugate Gaussian when
//!   the trend is on, fresh prior draws otherwise (they enter nothing else);
//! * (f) autocorrelation `rho` — random-walk Metropolis on `logit((rho+1)/2)`
//!   with the Jacobian correction;
//! * (g) deviations `eta_t` — single-site exact Gaussian conditionals swept
//!   forward in time;
//! * (h) latent index values `I_t^r` — per-site adaptive random-walk
//!   Metropolis where proxy observations attach (the quadratic response makes
//!   those conditionals non-Gaussian), and an exact `N(gamma_t, tau^2)` draw
//!   at sites with no proxy observations, where the conditional is Gaussian.
//!
//! Every block leaves the state inside the parameter support; each block
//! satisfies detailed balance for the joint posterior, so the sweep has the
//! posterior as invariant distribution.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Exp, InverseGaussian, StandardNormal};

use crate::dist::{half_cauchy_lpdf, normal_lpdf};
use crate::error::{Error, Result};
use crate::model::{response, ModelData, ModelSpec, ParameterState};

/// Target acceptance rate for scalar random-walk blocks.
pub const TARGET_ACCEPT: f64 = 0.44;

const PSI_MIN: f64 = 1e-12;
const PSI_MAX: f64 = 1e12;

/// Adaptive scalar random-walk step with Robbins-Monro tuning of the
/// log-step, gain `n^-0.6`. Acceptance counters survive freezing so the
/// post-adaptation rates can be reported.
#[derive(Debug, Clone)]
pub struct ScalarTuner {
    log_step: f64,
    target: f64,
    adapt_count: u64,
    frozen: bool,
    pub accepted: u64,
    pub attempted: u64,
}

impl ScalarTuner {
    pub fn new(initial_step: f64, target: f64) -> Self {
        ScalarTuner {
            log_step: initial_step.ln(),
            target,
            adapt_count: 0,
            frozen: false,
            accepted: 0,
            attempted: 0,
        }
    }

    #[inline]
    pub fn step(&self) -> f64 {
        self.log_step.exp()
    }

    pub fn record(&mut self, accepted: bool) {
        self.attempted += 1;
        if accepted {
            self.accepted += 1;
        }
        if !self.frozen {
            self.adapt_count += 1;
            let gain = (self.adapt_count as f64).powf(-0.6);
            self.log_step += gain * (f64::from(u8::from(accepted)) - self.target);
            self.log_step = self.log_step.clamp(-23.0, 4.0);
        }
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn reset_counters(&mut self) {
        self.accepted = 0;
        self.attempted = 0;
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.attempted == 0 {
            0.0
        } else {
            self.accepted as f64 / self.attempted as f64
        }
    }
}

/// All adaptive steps for one chain.
#[derive(Debug, Clone)]
pub struct Tuners {
    pub sigma: Vec<ScalarTuner>,
    pub nu: ScalarTuner,
    pub tau: ScalarTuner,
    pub lambda: ScalarTuner,
    pub rho: ScalarTuner,
    /// One tuner per reconstruction-period site (used only where proxy
    /// observations attach).
    pub recon: Vec<ScalarTuner>,
}

impl Tuners {
    pub fn new(n_proxies: usize, n_recon: usize) -> Self {
        let fresh = || ScalarTuner::new(0.5, TARGET_ACCEPT);
        Tuners {
            sigma: (0..n_proxies).map(|_| fresh()).collect(),
            nu: fresh(),
            tau: fresh(),
            lambda: fresh(),
            rho: fresh(),
            recon: (0..n_recon).map(|_| fresh()).collect(),
        }
    }

    pub fn freeze_all(&mut self) {
        for t in &mut self.sigma {
            t.freeze();
        }
        self.nu.freeze();
        self.tau.freeze();
        self.lambda.freeze();
        self.rho.freeze();
        for t in &mut self.recon {
            t.freeze();
        }
    }

    pub fn reset_counters(&mut self) {
        for t in &mut self.sigma {
            t.reset_counters();
        }
        self.nu.reset_counters();
        self.tau.reset_counters();
        self.lambda.reset_counters();
        self.rho.reset_counters();
        for t in &mut self.recon {
            t.reset_counters();
        }
    }
}

/// Immutable per-run context shared by all blocks: the data, the `ModelSpec`,
/// and an index from grid position to the proxy observations attached there.
pub struct SweepContext<'a> {
    pub data: &'a ModelData,
    pub spec: &'a ModelSpec,
    /// Per grid position: `(proxy index, observed value)` pairs.
    site_obs: Vec<Vec<(usize, f64)>>,
    recon_indices: Vec<usize>,
}

impl<'a> SweepContext<'a> {
    pub fn new(data: &'a ModelData, spec: &'a ModelSpec) -> Result<Self> {
        if spec.n_proxies != data.n_proxies() {
            return Err(Error::Data("spec/data proxy counts differ".into()));
        }
        if spec.grid != data.grid {
            return Err(Error::Data("spec/data grids differ".into()));
        }
        let mut site_obs = vec![Vec::new(); data.grid.len()];
        for (j, proxy) in data.proxies.iter().enumerate() {
            for &(idx, y) in &proxy.obs {
                if idx >= site_obs.len() {
                    return Err(Error::Data(format!(
                        "proxy {} observation index {idx} outside grid",
                        proxy.id
                    )));
                }
                site_obs[idx].push((j, y));
            }
        }
        Ok(SweepContext {
            data,
            spec,
            site_obs,
            recon_indices: data.recon_indices(),
        })
    }

    pub fn recon_indices(&self) -> &[usize] {
        &self.recon_indices
    }

    fn numerical(block: &'static str) -> Error {
        // The chain driver rewrites the iteration number.
        Error::Numerical {
            iteration: 0,
            block,
        }
    }
}

/// Trend mean (excluding eta) per grid position.
#[inline]
fn trend_mean(state: &ParameterState, spec: &ModelSpec, idx: usize) -> f64 {
    if spec.trend {
        state.omega + state.delta * spec.time_covariate(idx)
    } else {
        0.0
    }
}

/// (a) Conjugate draw of `(alpha_j, beta_j1, beta_j2)` for every proxy.
pub fn update_regression<R: Rng>(
    state: &mut ParameterState,
    ctx: &SweepContext,
    rng: &mut R,
) -> Result<()> {
    let index = state.index_values(ctx.data);
    let alpha_prec = 1.0 / (ctx.spec.priors.alpha_sd * ctx.spec.priors.alpha_sd);
    for j in 0..ctx.data.n_proxies() {
        let inv_var = 1.0 / (state.sigma[j] * state.sigma[j]);
        let mut a = Matrix3::from_diagonal(&Vector3::new(
            alpha_prec,
            1.0 / state.psi[j][0],
            1.0 / state.psi[j][1],
        ));
        let mut b = Vector3::zeros();
        for &(idx, y) in &ctx.data.proxies[j].obs {
            let u = index[idx];
            let x = Vector3::new(1.0, u, u * u);
            a += x * x.transpose() * inv_var;
            b += x * (y * inv_var);
        }
        let chol = nalgebra::Cholesky::new(a)
            .ok_or_else(|| SweepContext::numerical("regression"))?;
        let mean = chol.solve(&b);
        let z = Vector3::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        let noise = chol
            .l()
            .transpose()
            .solve_upper_triangular(&z)
            .ok_or_else(|| SweepContext::numerical("regression"))?;
        let draw = mean + noise;
        if !draw.iter().all(|v| v.is_finite()) {
            return Err(SweepContext::numerical("regression"));
        }
        state.alpha[j] = draw[0];
        state.beta1[j] = draw[1];
        state.beta2[j] = draw[2];
    }
    Ok(())
}

/// (b) Exact draw of the Laplace mixture variances `psi_jk`.
///
/// Given coefficient b and Laplace scale lambda, `1/psi ~
/// InverseGaussian(mean 1/(lambda |b|), shape 1/lambda^2)`; a coefficient
/// numerically at zero falls back to the prior `psi ~ Exp(rate
/// 1/(2 lambda^2))`.
pub fn update_mixture_variances<R: Rng>(
    state: &mut ParameterState,
    ctx: &SweepContext,
    rng: &mut R,
) -> Result<()> {
    let lambda = state.lambda;
    for j in 0..ctx.data.n_proxies() {
        for (k, beta) in [state.beta1[j], state.beta2[j]].into_iter().enumerate() {
            let psi = if beta.abs() < 1e-10 {
                let rate = (0.5 / (lambda * lambda)).clamp(1e-300, 1e300);
                Exp::new(rate)
                    .map_err(|_| SweepContext::numerical("mixture"))?
                    .sample(rng)
            } else {
                let mean = (1.0 / (lambda * beta.abs())).clamp(1e-300, 1e300);
                let shape = (1.0 / (lambda * lambda)).clamp(1e-300, 1e300);
                let inv_psi = InverseGaussian::new(mean, shape)
                    .map_err(|_| SweepContext::numerical("mixture"))?
                    .sample(rng);
                1.0 / inv_psi
            };
            state.psi[j][k] = psi.clamp(PSI_MIN, PSI_MAX);
        }
    }
    Ok(())
}

/// Shared scalar log-scale Metropolis step. `log_target` must return the
/// conditional log-density (up to a constant); out-of-support proposals may
/// return `-inf`.
fn mh_log_scale<R: Rng, F: Fn(f64) -> f64>(
    current: f64,
    tuner: &mut ScalarTuner,
    log_target: F,
    rng: &mut R,
) -> f64 {
    let ell = current.ln();
    let prop_ell = ell + tuner.step() * rng.sample::<f64, _>(StandardNormal);
    let proposal = prop_ell.exp();
    // Jacobian of the log transform: + (ell' - ell).
    let delta = log_target(proposal) - log_target(current) + (prop_ell - ell);
    let accepted = delta >= 0.0 || rng.random::<f64>() < delta.exp();
    tuner.record(accepted);
    if accepted {
        proposal
    } else {
        current
    }
}

/// (c) Adaptive log-scale random walk on each observation scale `sigma_j`.
pub fn update_obs_scales<R: Rng>(
    state: &mut ParameterState,
    ctx: &SweepContext,
    tuners: &mut Tuners,
    rng: &mut R,
) -> Result<()> {
    let index = state.index_values(ctx.data);
    let scale = ctx.spec.priors.scale_halft;
    for j in 0..ctx.data.n_proxies() {
        let mut n = 0.0;
        let mut ssr = 0.0;
        for &(idx, y) in &ctx.data.proxies[j].obs {
            let r = y - response(state.alpha[j], state.beta1[j], state.beta2[j], index[idx]);
            n += 1.0;
            ssr += r * r;
        }
        let target = |s: f64| -> f64 {
            if !(s > 0.0) || !s.is_finite() {
                return f64::NEG_INFINITY;
            }
            -n * s.ln() - 0.5 * ssr / (s * s) + half_cauchy_lpdf(s, scale)
        };
        state.sigma[j] = mh_log_scale(state.sigma[j], &mut tuners.sigma[j], target, rng);
        if !state.sigma[j].is_finite() {
            return Err(SweepContext::numerical("sigma"));
        }
    }
    Ok(())
}

/// (c) Adaptive log-scale random walk on the process innovation scale `nu`.
pub fn update_process_scale<R: Rng>(
    state: &mut ParameterState,
    ctx: &SweepContext,
    tuners: &mut Tuners,
    rng: &mut R,
) -> Result<()> {
    let rho = state.rho;
    let t_len = state.eta.len() as f64;
    let mut ss = state.eta[0] * state.eta[0] * (1.0 - rho * rho);
    for t in 1..state.eta.len() {
        let r = state.eta[t] - rho * state.eta[t - 1];
        ss += r * r;
    }
    let scale = ctx.spec.priors.scale_halft;
    let target = |v: f64| -> f64 {
        if !(v > 0.0) || !v.is_finite() {
            return f64::NEG_INFINITY;
        }
        -t_len * v.ln() - 0.5 * ss / (v * v) + half_cauchy_lpdf(v, scale)
    };
    state.nu = mh_log_scale(state.nu, &mut tuners.nu, target, rng);
    if !state.nu.is_finite() {
        return Err(SweepContext::numerical("nu"));
    }
    Ok(())
}

/// (c) Adaptive log-scale random walk on the index measurement scale `tau`.
pub fn update_index_scale<R: Rng>(
    state: &mut ParameterState,
    ctx: &SweepContext,
    tuners: &mut Tuners,
    rng: &mut R,
) -> Result<()> {
    let index = state.index_values(ctx.data);
    let mut ss = 0.0;
    for (idx, &i_t) in index.iter().enumerate() {
        let r = i_t - (trend_mean(state, ctx.spec, idx) + state.eta[idx]);
        ss += r * r;
    }
    let t_len = index.len() as f64;
    let scale = ctx.spec.priors.scale_halft;
    let target = |v: f64| -> f64 {
        if !(v > 0.0) || !v.is_finite() {
            return f64::NEG_INFINITY;
        }
        -t_len * v.ln() - 0.5 * ss / (v * v) + half_cauchy_lpdf(v, scale)
    };
    state.tau = mh_log_scale(state.tau, &mut tuners.tau, target, rng);
    if !state.tau.is_finite() {
        return Err(SweepContext::numerical("tau"));
    }
    Ok(())
}

/// (d) Adaptive log-scale random walk on the Laplace shrinkage scale.
pub fn update_shrinkage<R: Rng>(
    state: &mut ParameterState,
    ctx: &SweepContext,
    tuners: &mut Tuners,
    rng: &mut R,
) -> Result<()> {
    let mut psi_sum = 0.0;
    let mut k = 0.0;
    for psi in &state.psi {
        psi_sum += psi[0] + psi[1];
        k += 2.0;
    }
    let prior_scale = ctx.spec.priors.lambda_scale;
    let target = |l: f64| -> f64 {
        if !(l > 0.0) || !l.is_finite() {
            return f64::NEG_INFINITY;
        }
        // k exponential terms with rate 1/(2 l^2).
        let l2 = 2.0 * l * l;
        -k * l2.ln() - psi_sum / l2 + half_cauchy_lpdf(l, prior_scale)
    };
    state.lambda = mh_log_scale(state.lambda, &mut tuners.lambda, target, rng);
    if !state.lambda.is_finite() {
        return Err(SweepContext::numerical("lambda"));
    }
    Ok(())
}

/// (e) Conjugate draw of `(omega, delta)` from the regression of
/// `I_t - eta_t` on `(1, x_t)`; fresh prior draws when the trend is off.
pub fn update_trend_coeffs<R: Rng>(
    state: &mut ParameterState,
    ctx: &SweepContext,
    rng: &mut R,
) -> Result<()> {
    let p = &ctx.spec.priors;
    if !ctx.spec.trend {
        state.omega = p.alpha_sd * rng.sample::<f64, _>(StandardNormal);
        state.delta = p.delta_sd * rng.sample::<f64, _>(StandardNormal);
        return Ok(());
    }
    let index = state.index_values(ctx.data);
    let inv_tau2 = 1.0 / (state.tau * state.tau);
    let (mut s_n, mut s_x, mut s_xx, mut s_r, mut s_xr) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (idx, &i_t) in index.iter().enumerate() {
        let x = ctx.spec.time_covariate(idx);
        let r = i_t - state.eta[idx];
        s_n += 1.0;
        s_x += x;
        s_xx += x * x;
        s_r += r;
        s_xr += x * r;
    }
    let a = Matrix2::new(
        s_n * inv_tau2 + 1.0 / (p.alpha_sd * p.alpha_sd),
        s_x * inv_tau2,
        s_x * inv_tau2,
        s_xx * inv_tau2 + 1.0 / (p.delta_sd * p.delta_sd),
    );
    let b = Vector2::new(s_r * inv_tau2, s_xr * inv_tau2);
    let chol = nalgebra::Cholesky::new(a).ok_or_else(|| SweepContext::numerical("trend"))?;
    let mean = chol.solve(&b);
    let z = Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
    let noise = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| SweepContext::numerical("trend"))?;
    let draw = mean + noise;
    if !draw.iter().all(|v| v.is_finite()) {
        return Err(SweepContext::numerical("trend"));
    }
    state.omega = draw[0];
    state.delta = draw[1];
    Ok(())
}

/// (f) Random-walk Metropolis on `z = logit((rho+1)/2)` with Jacobian
/// `d rho / d z = (1 - rho^2)/2`.
pub fn update_autocorr<R: Rng>(
    state: &mut ParameterState,
    ctx: &SweepContext,
    tuners: &mut Tuners,
    rng: &mut R,
) -> Result<()> {
    let _ = ctx;
    let eta = &state.eta;
    let nu2 = state.nu * state.nu;
    let eta1_sq = eta[0] * eta[0];
    let (mut s00, mut s01, mut s11) = (0.0, 0.0, 0.0);
    for t in 1..eta.len() {
        s00 += eta[t - 1] * eta[t - 1];
        s01 += eta[t] * eta[t - 1];
        s11 += eta[t] * eta[t];
    }
    // Conditional log-density of rho (uniform prior adds a constant).
    let target = |r: f64| -> f64 {
        if !(r > -1.0 && r < 1.0) {
            return f64::NEG_INFINITY;
        }
        let one_m = 1.0 - r * r;
        0.5 * one_m.ln()
            - 0.5 * (eta1_sq * one_m + s11 - 2.0 * r * s01 + r * r * s00) / nu2
    };

    let rho = state.rho;
    let z = ((1.0 + rho) / (1.0 - rho)).ln();
    let z_prop = z + tuners.rho.step() * rng.sample::<f64, _>(StandardNormal);
    let rho_prop = (z_prop / 2.0).tanh();
    let jac = (1.0 - rho_prop * rho_prop).ln() - (1.0 - rho * rho).ln();
    let delta = target(rho_prop) - target(rho) + jac;
    let accepted = delta >= 0.0 || rng.random::<f64>() < delta.exp();
    tuners.rho.record(accepted);
    if accepted {
        state.rho = rho_prop;
    }
    if !(state.rho > -1.0 && state.rho < 1.0) {
        return Err(SweepContext::numerical("rho"));
    }
    Ok(())
}

/// (g) Exact single-site Gaussian conditional draw of every `eta_t`, swept
/// forward. Each site's conditional combines the stationary or transition
/// terms on both sides with the `N(gamma_t, tau^2)` term of the index value
/// at that site.
pub fn update_deviations<R: Rng>(
    state: &mut ParameterState,
    ctx: &SweepContext,
    rng: &mut R,
) -> Result<()> {
    let index = state.index_values(ctx.data);
    let n = state.eta.len();
    let inv_nu2 = 1.0 / (state.nu * state.nu);
    let inv_tau2 = 1.0 / (state.tau * state.tau);
    let rho = state.rho;
    for t in 0..n {
        let c_t = trend_mean(state, ctx.spec, t);
        let mut prec = inv_tau2;
        let mut lin = (index[t] - c_t) * inv_tau2;
        if t == 0 {
            prec += (1.0 - rho * rho) * inv_nu2;
        } else {
            prec += inv_nu2;
            lin += rho * state.eta[t - 1] * inv_nu2;
        }
        if t + 1 < n {
            prec += rho * rho * inv_nu2;
            lin += rho * state.eta[t + 1] * inv_nu2;
        }
        let sd = (1.0 / prec).sqrt();
        let draw = lin / prec + sd * rng.sample::<f64, _>(StandardNormal);
        if !draw.is_finite() {
            return Err(SweepContext::numerical("eta"));
        }
        state.eta[t] = draw;
    }
    Ok(())
}

/// (h) Update every latent index value.
///
/// Sites with proxy observations get an adaptive random-walk Metropolis step
/// (the quadratic response makes the conditional non-Gaussian); sites without
/// observations get an exact `N(gamma_t, tau^2)` draw, which is the full
/// conditional there.
pub fn update_latent_index<R: Rng>(
    state: &mut ParameterState,
    ctx: &SweepContext,
    tuners: &mut Tuners,
    rng: &mut R,
) -> Result<()> {
    let tau = state.tau;
    for (k, &idx) in ctx.recon_indices.iter().enumerate() {
        let gamma = trend_mean(state, ctx.spec, idx) + state.eta[idx];
        let obs = &ctx.site_obs[idx];
        if obs.is_empty() {
            let draw = gamma + tau * rng.sample::<f64, _>(StandardNormal);
            if !draw.is_finite() {
                return Err(SweepContext::numerical("latent_index"));
            }
            state.recon[k] = draw;
            continue;
        }
        let log_target = |v: f64| -> f64 {
            let mut total = normal_lpdf(v, gamma, tau);
            for &(j, y) in obs {
                let mu = response(state.alpha[j], state.beta1[j], state.beta2[j], v);
                total += normal_lpdf(y, mu, state.sigma[j]);
            }
            total
        };
        let current = state.recon[k];
        let proposal = current + tuners.recon[k].step() * rng.sample::<f64, _>(StandardNormal);
        let delta = log_target(proposal) - log_target(current);
        let accepted = delta >= 0.0 || rng.random::<f64>() < delta.exp();
        tuners.recon[k].record(accepted);
        if accepted {
            state.recon[k] = proposal;
        }
        if !state.recon[k].is_finite() {
            return Err(SweepContext::numerical("latent_index"));
        }
    }
    Ok(())
}

/// One full sweep: every block exactly once.
pub fn gibbs_sweep<R: Rng>(
    state: &mut ParameterState,
    ctx: &SweepContext,
    tuners: &mut Tuners,
    rng: &mut R,
) -> Result<()> {
    update_regression(state, ctx, rng)?;
    update_mixture_variances(state, ctx, rng)?;
    update_obs_scales(state, ctx, tuners, rng)?;
    update_process_scale(state, ctx, tuners, rng)?;
    update_index_scale(state, ctx, tuners, rng)?;
    update_shrinkage(state, ctx, tuners, rng)?;
    update_trend_coeffs(state, ctx, rng)?;
    update_autocorr(state, ctx, tuners, rng)?;
    update_deviations(state, ctx, rng)?;
    update_latent_index(state, ctx, tuners, rng)?;
    Ok(())
}

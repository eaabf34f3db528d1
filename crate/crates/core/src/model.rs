//! The hierarchical state-space model tying proxies to a latent index.
//!
//! Data level, per index year t and proxy j (all on standardised scales):
//!
//! ```text
//! I_t  ~ N(gamma_t, tau^2)                 observed in the instrumental era,
//!                                          latent (a parameter) before it
//! y_ij ~ N(mu_ij, sigma_j^2),  mu_ij = alpha_j + beta_j1 u + beta_j2 u^2
//! ```
//!
//! where `u = I_{t(i,j)}` is the index value in the year the observation
//! informs. Process level:
//!
//! ```text
//! gamma_t = omega + delta x_t + eta_t      (trend variant)
//! gamma_t = eta_t                          (default)
//! eta_t   ~ N(rho eta_{t-1}, nu^2),        eta_1 ~ N(0, nu^2 / (1 - rho^2))
//! ```
//!
//! with `x_t` the 1-based grid position. Priors: `alpha_j, omega ~ N(0,
//! alpha_sd^2)`, `delta ~ N(0, delta_sd^2)`, `beta_jk ~ Laplace(0, lambda)`
//! (lambda a scale), `lambda ~ half-Cauchy(lambda_scale)`, `rho ~ U(-1, 1)`,
//! and `sigma_j, nu, tau ~ half-Cauchy(scale_halft)`. The Laplace prior on
//! the regression coefficients shrinks weak (especially quadratic) responses
//! toward zero.
//!
//! [`log_prior`] works on the collapsed parameterisation (Laplace density for
//! the betas). The sampler internally expands each Laplace into a normal
//! scale mixture with auxiliary variances `psi_jk`; those variances live in
//! [`ParameterState`] but are deliberately not part of the collapsed prior.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dist::{half_cauchy_lpdf, laplace_lpdf, normal_lpdf, uniform_pm1_lpdf};
use crate::error::{Error, Result};
use crate::ingest::{AlignedRecord, HydroSeries, Split, TimeGrid};

/// Prior scale constants.
///
/// `alpha_sd` is shared by the proxy intercepts and the trend intercept
/// `omega`; `scale_halft` is shared by every half-Cauchy scale prior except
/// the shrinkage hyperparameter `lambda`, which has its own wider scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub alpha_sd: f64,
    pub delta_sd: f64,
    pub lambda_scale: f64,
    pub scale_halft: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            alpha_sd: 2.0,
            delta_sd: 1.0,
            lambda_scale: 5.0,
            scale_halft: 2.0,
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha_sd", self.alpha_sd),
            ("delta_sd", self.delta_sd),
            ("lambda_scale", self.lambda_scale),
            ("scale_halft", self.scale_halft),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("prior scale {name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Flat, serialisable model configuration block (the shape used in config
/// files and manifests).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub trend: bool,
    pub alpha_sd: f64,
    pub delta_sd: f64,
    pub lambda_scale: f64,
    pub scale_halft: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let p = PriorSpec::default();
        ModelConfig {
            trend: false,
            alpha_sd: p.alpha_sd,
            delta_sd: p.delta_sd,
            lambda_scale: p.lambda_scale,
            scale_halft: p.scale_halft,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn priors(&self) -> PriorSpec {
        PriorSpec {
            alpha_sd: self.alpha_sd,
            delta_sd: self.delta_sd,
            lambda_scale: self.lambda_scale,
            scale_halft: self.scale_halft,
        }
    }
}

/// One proxy's observations resolved onto the grid (standardised values).
#[derive(Debug, Clone)]
pub struct ProxyData {
    pub id: String,
    /// `(grid index, value)` pairs, sorted by grid index.
    pub obs: Vec<(usize, f64)>,
}

/// Everything the likelihood needs: the grid, the observed index values and
/// the proxy observations.
#[derive(Debug, Clone)]
pub struct ModelData {
    pub grid: TimeGrid,
    /// Per grid position: `Some(value)` in the instrumental era, `None` where
    /// the index is latent.
    pub calib: Vec<Option<f64>>,
    pub proxies: Vec<ProxyData>,
}

impl ModelData {
    /// Assemble model inputs from aligned records and a standardised index
    /// series covering the calibration period.
    pub fn new(records: &[AlignedRecord], hydro: &HydroSeries, grid: TimeGrid) -> Result<Self> {
        if grid.index(hydro.start_year()).is_none() || grid.index(hydro.end_year()).is_none() {
            return Err(Error::Data(
                "instrumental period extends outside the time grid".into(),
            ));
        }
        let mut calib = vec![None; grid.len()];
        for (year, value) in hydro.years.iter().zip(&hydro.values) {
            calib[grid.index(*year).unwrap()] = Some(*value);
        }
        let mut proxies = Vec::with_capacity(records.len());
        for record in records {
            let mut obs = Vec::with_capacity(record.obs.len());
            for o in &record.obs {
                let idx = record_index(&record.id, o.target_year, &grid)?;
                debug_assert_eq!(
                    o.split == Split::Calibration,
                    calib[idx].is_some(),
                    "split tag inconsistent with instrumental coverage"
                );
                obs.push((idx, o.value));
            }
            obs.sort_by_key(|&(idx, _)| idx);
            proxies.push(ProxyData {
                id: record.id.clone(),
                obs,
            });
        }
        if proxies.is_empty() {
            return Err(Error::Data("no proxy records to model".into()));
        }
        Ok(ModelData {
            grid,
            calib,
            proxies,
        })
    }

    pub fn n_proxies(&self) -> usize {
        self.proxies.len()
    }

    pub fn n_years(&self) -> usize {
        self.grid.len()
    }

    /// Grid positions where the index is latent, ascending.
    pub fn recon_indices(&self) -> Vec<usize> {
        self.calib
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.is_none().then_some(i))
            .collect()
    }

    /// Grid positions with an observed index value, ascending.
    pub fn calib_indices(&self) -> Vec<usize> {
        self.calib
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.is_some().then_some(i))
            .collect()
    }

    pub fn n_recon(&self) -> usize {
        self.calib.iter().filter(|c| c.is_none()).count()
    }
}

fn record_index(id: &str, target_year: i32, grid: &TimeGrid) -> Result<usize> {
    grid.index(target_year).ok_or_else(|| {
        Error::Data(format!(
            "proxy {id}: target year {target_year} outside grid {}..{}",
            grid.start(),
            grid.end()
        ))
    })
}

/// Structural description of one model instance.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    /// `gamma_t = omega + delta x_t + eta_t` when set, `gamma_t = eta_t`
    /// otherwise.
    pub trend: bool,
    pub priors: PriorSpec,
    pub n_proxies: usize,
    pub grid: TimeGrid,
    /// Inclusive instrumental year range, if any year is observed.
    pub calib_range: Option<(i32, i32)>,
}

impl ModelSpec {
    pub fn for_data(data: &ModelData, trend: bool, priors: PriorSpec) -> Result<Self> {
        priors.validate()?;
        if data.n_proxies() == 0 {
            return Err(Error::Data("model requires at least one proxy".into()));
        }
        let calib_idx = data.calib_indices();
        let calib_range = if calib_idx.is_empty() {
            None
        } else {
            Some((
                data.grid.year(calib_idx[0]),
                data.grid.year(*calib_idx.last().unwrap()),
            ))
        };
        Ok(ModelSpec {
            trend,
            priors,
            n_proxies: data.n_proxies(),
            grid: data.grid,
            calib_range,
        })
    }

    /// Time covariate for the trend component: 1-based grid position.
    #[inline]
    pub fn time_covariate(&self, idx: usize) -> f64 {
        (idx + 1) as f64
    }
}

/// A full set of model unknowns.
///
/// `recon` holds the latent index values in ascending year order, parallel to
/// [`ModelData::recon_indices`]. `psi` holds the per-coefficient mixture
/// variances of the Laplace scale-mixture representation; they are a sampler
/// device and take no part in [`log_prior`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterState {
    pub alpha: Vec<f64>,
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
    pub sigma: Vec<f64>,
    pub omega: f64,
    pub delta: f64,
    pub rho: f64,
    pub nu: f64,
    pub tau: f64,
    pub lambda: f64,
    pub eta: Vec<f64>,
    pub recon: Vec<f64>,
    pub psi: Vec<[f64; 2]>,
}

impl ParameterState {
    /// A state with every value at a neutral, in-support default.
    pub fn neutral(n_proxies: usize, n_years: usize, n_recon: usize) -> Self {
        ParameterState {
            alpha: vec![0.0; n_proxies],
            beta1: vec![0.0; n_proxies],
            beta2: vec![0.0; n_proxies],
            sigma: vec![1.0; n_proxies],
            omega: 0.0,
            delta: 0.0,
            rho: 0.0,
            nu: 1.0,
            tau: 1.0,
            lambda: 1.0,
            eta: vec![0.0; n_years],
            recon: vec![0.0; n_recon],
            psi: vec![[1.0, 1.0]; n_proxies],
        }
    }

    /// Check dimensions against a spec/data pair and support constraints.
    pub fn validate(&self, spec: &ModelSpec, data: &ModelData) -> Result<()> {
        let m = spec.n_proxies;
        if self.alpha.len() != m
            || self.beta1.len() != m
            || self.beta2.len() != m
            || self.sigma.len() != m
            || self.psi.len() != m
        {
            return Err(Error::Data("per-proxy parameter lengths do not match".into()));
        }
        if self.eta.len() != spec.grid.len() {
            return Err(Error::Data("eta length does not match grid".into()));
        }
        if self.recon.len() != data.n_recon() {
            return Err(Error::Data(
                "latent index length does not match reconstruction years".into(),
            ));
        }
        for (j, s) in self.sigma.iter().enumerate() {
            if !(*s > 0.0) {
                return Err(Error::OutOfSupport {
                    name: "sigma",
                    value: self.sigma[j],
                });
            }
        }
        for p in &self.psi {
            if !(p[0] > 0.0) || !(p[1] > 0.0) {
                return Err(Error::OutOfSupport {
                    name: "psi",
                    value: p[0].min(p[1]),
                });
            }
        }
        for (name, v) in [("nu", self.nu), ("tau", self.tau), ("lambda", self.lambda)] {
            if !(v > 0.0) {
                return Err(Error::OutOfSupport { name, value: v });
            }
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(Error::OutOfSupport {
                name: "rho",
                value: self.rho,
            });
        }
        Ok(())
    }

    /// Materialise the full index path: observed values in the instrumental
    /// era, current latent values elsewhere.
    pub fn index_values(&self, data: &ModelData) -> Vec<f64> {
        let mut out = Vec::with_capacity(data.grid.len());
        let mut r = 0;
        for c in &data.calib {
            match c {
                Some(v) => out.push(*v),
                None => {
                    out.push(self.recon[r]);
                    r += 1;
                }
            }
        }
        debug_assert_eq!(r, self.recon.len());
        out
    }

    /// Process mean for one grid position.
    #[inline]
    pub fn gamma_at(&self, spec: &ModelSpec, idx: usize) -> f64 {
        if spec.trend {
            self.omega + self.delta * spec.time_covariate(idx) + self.eta[idx]
        } else {
            self.eta[idx]
        }
    }
}

/// Quadratic proxy response.
#[inline]
pub fn response(alpha: f64, beta1: f64, beta2: f64, u: f64) -> f64 {
    alpha + beta1 * u + beta2 * u * u
}

/// Log-likelihood of every proxy observation given the current index path.
pub fn log_lik_proxy(state: &ParameterState, data: &ModelData) -> Result<f64> {
    let index = state.index_values(data);
    let mut total = 0.0;
    for (j, proxy) in data.proxies.iter().enumerate() {
        let sd = state.sigma[j];
        if !(sd > 0.0) {
            return Err(Error::OutOfSupport {
                name: "sigma",
                value: sd,
            });
        }
        for &(idx, y) in &proxy.obs {
            let mu = response(state.alpha[j], state.beta1[j], state.beta2[j], index[idx]);
            total += normal_lpdf(y, mu, sd);
        }
    }
    Ok(total)
}

/// Log-density of the index measurement layer: observed instrumental values
/// and latent reconstruction values both follow `N(gamma_t, tau^2)`.
pub fn log_lik_hydro(state: &ParameterState, data: &ModelData, spec: &ModelSpec) -> Result<f64> {
    if !(state.tau > 0.0) {
        return Err(Error::OutOfSupport {
            name: "tau",
            value: state.tau,
        });
    }
    let index = state.index_values(data);
    let mut total = 0.0;
    for (idx, &i_t) in index.iter().enumerate() {
        total += normal_lpdf(i_t, state.gamma_at(spec, idx), state.tau);
    }
    Ok(total)
}

/// Log-density of the AR(1) deviation chain with stationary initialisation.
pub fn log_process(state: &ParameterState, _spec: &ModelSpec) -> Result<f64> {
    if !(state.rho > -1.0 && state.rho < 1.0) {
        return Err(Error::OutOfSupport {
            name: "rho",
            value: state.rho,
        });
    }
    if !(state.nu > 0.0) {
        return Err(Error::OutOfSupport {
            name: "nu",
            value: state.nu,
        });
    }
    let stationary_sd = state.nu / (1.0 - state.rho * state.rho).sqrt();
    let mut total = normal_lpdf(state.eta[0], 0.0, stationary_sd);
    for t in 1..state.eta.len() {
        total += normal_lpdf(state.eta[t], state.rho * state.eta[t - 1], state.nu);
    }
    Ok(total)
}

/// Log-density of the priors on the collapsed parameterisation (Laplace
/// betas; the auxiliary mixture variances are excluded).
pub fn log_prior(state: &ParameterState, spec: &ModelSpec) -> Result<f64> {
    let p = &spec.priors;
    for (j, s) in state.sigma.iter().enumerate() {
        if !(*s > 0.0) {
            return Err(Error::OutOfSupport {
                name: "sigma",
                value: state.sigma[j],
            });
        }
    }
    for (name, v) in [("nu", state.nu), ("tau", state.tau), ("lambda", state.lambda)] {
        if !(v > 0.0) {
            return Err(Error::OutOfSupport { name, value: v });
        }
    }
    if !(state.rho > -1.0 && state.rho < 1.0) {
        return Err(Error::OutOfSupport {
            name: "rho",
            value: state.rho,
        });
    }

    let mut total = 0.0;
    for j in 0..state.alpha.len() {
        total += normal_lpdf(state.alpha[j], 0.0, p.alpha_sd);
        total += laplace_lpdf(state.beta1[j], state.lambda);
        total += laplace_lpdf(state.beta2[j], state.lambda);
        total += half_cauchy_lpdf(state.sigma[j], p.scale_halft);
    }
    total += normal_lpdf(state.omega, 0.0, p.alpha_sd);
    total += normal_lpdf(state.delta, 0.0, p.delta_sd);
    total += uniform_pm1_lpdf(state.rho);
    total += half_cauchy_lpdf(state.nu, p.scale_halft);
    total += half_cauchy_lpdf(state.tau, p.scale_halft);
    total += half_cauchy_lpdf(state.lambda, p.lambda_scale);
    Ok(total)
}

/// Joint log-posterior (up to the normalising constant).
pub fn log_posterior(state: &ParameterState, data: &ModelData, spec: &ModelSpec) -> Result<f64> {
    Ok(log_lik_proxy(state, data)?
        + log_lik_hydro(state, data, spec)?
        + log_process(state, spec)?
        + log_prior(state, spec)?)
}

/// One proxy in a simulation scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimProxySpec {
    pub id: String,
    pub archive: String,
    pub lag: i32,
    /// Observation years (raw proxy years; the value responds to
    /// `year + lag`).
    pub obs_years: Vec<i32>,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub sigma: f64,
}

/// A full forward-simulation scenario: true parameters plus layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimSpec {
    pub grid_start: i32,
    pub grid_end: i32,
    pub instrumental_start: i32,
    pub instrumental_end: i32,
    pub trend: bool,
    pub omega: f64,
    pub delta: f64,
    pub rho: f64,
    pub nu: f64,
    pub tau: f64,
    pub proxies: Vec<SimProxySpec>,
    pub seed: u64,
}

/// Simulation output: instrumental series, proxy records, and the true index
/// over the whole grid for recovery checks.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub hydro: HydroSeries,
    pub proxies: Vec<crate::ingest::ProxyRecord>,
    pub grid: TimeGrid,
    /// True index value per grid year.
    pub truth: Vec<f64>,
}

impl SimSpec {
    fn validate(&self) -> Result<()> {
        if self.grid_start > self.grid_end {
            return Err(Error::Config("simulation grid is empty".into()));
        }
        if self.instrumental_start < self.grid_start
            || self.instrumental_end > self.grid_end
            || self.instrumental_start > self.instrumental_end
        {
            return Err(Error::Config(
                "instrumental period must lie within the simulation grid".into(),
            ));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(Error::Config(format!("rho {} outside (-1, 1)", self.rho)));
        }
        for (name, v) in [("nu", self.nu), ("tau", self.tau)] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.proxies.is_empty() {
            return Err(Error::Config("simulation needs at least one proxy".into()));
        }
        for p in &self.proxies {
            if !(p.sigma > 0.0) {
                return Err(Error::Config(format!(
                    "proxy {}: sigma must be positive",
                    p.id
                )));
            }
            if p.obs_years.is_empty() {
                return Err(Error::Config(format!("proxy {}: no observation years", p.id)));
            }
            for &y in &p.obs_years {
                let target = y + p.lag;
                if target < self.grid_start || target > self.grid_end {
                    return Err(Error::Config(format!(
                        "proxy {}: observation year {y} (lag {}) maps outside the grid",
                        p.id, p.lag
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Draw a synthetic dataset from the generative model.
///
/// Deterministic given `spec.seed`: the deviation chain is drawn forward in
/// year order, then the index, then each proxy's observations in year order.
pub fn simulate(spec: &SimSpec) -> Result<SimOutput> {
    spec.validate()?;
    let grid = TimeGrid::new(spec.grid_start, spec.grid_end)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let n = grid.len();
    let mut eta = Vec::with_capacity(n);
    let stationary_sd = spec.nu / (1.0 - spec.rho * spec.rho).sqrt();
    for t in 0..n {
        let z: f64 = rng.sample(StandardNormal);
        let value = if t == 0 {
            stationary_sd * z
        } else {
            spec.rho * eta[t - 1] + spec.nu * z
        };
        eta.push(value);
    }

    let mut truth = Vec::with_capacity(n);
    for (t, eta_t) in eta.iter().enumerate() {
        let gamma = if spec.trend {
            spec.omega + spec.delta * (t + 1) as f64 + eta_t
        } else {
            *eta_t
        };
        let z: f64 = rng.sample(StandardNormal);
        truth.push(gamma + spec.tau * z);
    }

    let mut proxies = Vec::with_capacity(spec.proxies.len());
    for p in &spec.proxies {
        let mut obs_years = p.obs_years.clone();
        obs_years.sort_unstable();
        obs_years.dedup();
        let noise = Normal::new(0.0, p.sigma).expect("validated sigma");
        let mut obs = Vec::with_capacity(obs_years.len());
        for &year in &obs_years {
            let idx = grid.index(year + p.lag).expect("validated target year");
            let mu = response(p.alpha, p.beta1, p.beta2, truth[idx]);
            obs.push(crate::ingest::ProxyObs {
                year,
                value: mu + noise.sample(&mut rng),
            });
        }
        proxies.push(crate::ingest::ProxyRecord {
            id: p.id.clone(),
            archive: p.archive.clone(),
            lag: p.lag,
            obs,
            standardization: None,
        });
    }

    let instr_years: Vec<i32> = (spec.instrumental_start..=spec.instrumental_end).collect();
    let instr_values: Vec<f64> = instr_years
        .iter()
        .map(|&y| truth[grid.index(y).unwrap()])
        .collect();
    let hydro = HydroSeries::new(instr_years, instr_values)?;

    Ok(SimOutput {
        hydro,
        proxies,
        grid,
        truth,
    })
}

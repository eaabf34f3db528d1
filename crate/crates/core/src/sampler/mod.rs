//! Metropolis-within-Gibbs sampling of the posterior, chain management,
//! and convergence diagnostics.

pub mod blocks;
pub mod diagnostics;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::dist::half_cauchy_quantile;
use crate::error::{Error, Result};
use crate::model::{ModelData, ModelSpec, ParameterState};
use blocks::{SweepContext, Tuners};
use diagnostics::{convergence_flag, ess, rhat};

/// Chain-run settings. Retained draws per chain are
/// `(n_iter - n_burn) / thin`; adaptation of the random-walk steps stops
/// after `adapt_len` sweeps (defaults to the burn-in length) and acceptance
/// counters restart after burn-in, so reported rates describe the frozen
/// kernel.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    pub n_chains: usize,
    pub n_iter: usize,
    pub n_burn: usize,
    pub thin: usize,
    pub seed: u64,
    pub adapt_len: Option<usize>,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            n_chains: 3,
            n_iter: 15_000,
            n_burn: 5_000,
            thin: 10,
            seed: 0,
            adapt_len: None,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 {
            return Err(Error::Config("n_chains must be at least 1".into()));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.n_iter <= self.n_burn {
            return Err(Error::Config(format!(
                "n_iter ({}) must exceed n_burn ({})",
                self.n_iter, self.n_burn
            )));
        }
        if self.per_chain_draws() < 100 {
            return Err(Error::Config(format!(
                "(n_iter - n_burn) / thin = {} retained draws per chain; need at least 100",
                self.per_chain_draws()
            )));
        }
        if let Some(len) = self.adapt_len {
            if len > self.n_burn {
                return Err(Error::Config(format!(
                    "adapt_len ({len}) must not exceed n_burn ({})",
                    self.n_burn
                )));
            }
        }
        Ok(())
    }

    pub fn per_chain_draws(&self) -> usize {
        (self.n_iter - self.n_burn) / self.thin
    }

    fn adapt_end(&self) -> usize {
        self.adapt_len.unwrap_or(self.n_burn)
    }
}

/// Post-burn-in acceptance rates of one chain's random-walk blocks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainAcceptance {
    pub sigma: Vec<f64>,
    pub nu: f64,
    pub tau: f64,
    pub lambda: f64,
    pub rho: f64,
    /// Mean over latent-index sites that use a random-walk step; `None` when
    /// every site has an exact conditional draw.
    pub recon_mean: Option<f64>,
}

impl ChainAcceptance {
    fn from_tuners(tuners: &Tuners) -> Self {
        let walked: Vec<f64> = tuners
            .recon
            .iter()
            .filter(|t| t.attempted > 0)
            .map(|t| t.acceptance_rate())
            .collect();
        ChainAcceptance {
            sigma: tuners.sigma.iter().map(|t| t.acceptance_rate()).collect(),
            nu: tuners.nu.acceptance_rate(),
            tau: tuners.tau.acceptance_rate(),
            lambda: tuners.lambda.acceptance_rate(),
            rho: tuners.rho.acceptance_rate(),
            recon_mean: if walked.is_empty() {
                None
            } else {
                Some(walked.iter().sum::<f64>() / walked.len() as f64)
            },
        }
    }
}

/// Per-parameter convergence summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamDiag {
    pub name: String,
    /// `None` for single-chain runs.
    pub rhat: Option<f64>,
    pub ess: f64,
    /// Parameter was numerically constant; excluded from the gate.
    pub degenerate: bool,
    pub flagged: bool,
}

/// Retained draws from every chain plus diagnostics.
///
/// `chains[c][d][p]` is draw `d` of parameter `p` in chain `c`; `param_names`
/// names the last axis. Parameter order: `alpha[j]`, `beta1[j]`, `beta2[j]`,
/// `sigma[j]` (each for all proxies, in data order), then `omega`, `delta`,
/// `rho`, `nu`, `tau`, `lambda`, then `I_r[year]` ascending.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorArchive {
    pub param_names: Vec<String>,
    pub chains: Vec<Vec<Vec<f64>>>,
    /// Calendar years of the latent index values, ascending; parallel to the
    /// trailing `I_r[...]` entries of `param_names`.
    pub recon_years: Vec<i32>,
    pub diagnostics: Vec<ParamDiag>,
    pub acceptance: Vec<ChainAcceptance>,
    pub config: McmcConfig,
}

impl PosteriorArchive {
    pub fn n_params(&self) -> usize {
        self.param_names.len()
    }

    pub fn total_draws(&self) -> usize {
        self.chains.iter().map(|c| c.len()).sum()
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.param_names.iter().position(|n| n == name)
    }

    /// Draws of one parameter, per chain.
    pub fn param_chains(&self, p: usize) -> Vec<Vec<f64>> {
        self.chains
            .iter()
            .map(|chain| chain.iter().map(|draw| draw[p]).collect())
            .collect()
    }

    /// Draws of one parameter, all chains concatenated in chain order.
    pub fn pooled(&self, p: usize) -> Vec<f64> {
        self.chains
            .iter()
            .flat_map(|chain| chain.iter().map(|draw| draw[p]))
            .collect()
    }

    pub fn flagged_params(&self) -> Vec<&ParamDiag> {
        self.diagnostics.iter().filter(|d| d.flagged).collect()
    }

    pub fn converged(&self) -> bool {
        self.diagnostics.iter().all(|d| !d.flagged)
    }

    /// Index of the first latent-index parameter (`I_r[...]`).
    pub fn recon_offset(&self) -> usize {
        self.n_params() - self.recon_years.len()
    }

    /// Long-format draws table: `chain,draw,parameter,value`.
    pub fn write_draws_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
        let io_err = |e: csv::Error| Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(e),
        };
        w.write_record(["chain", "draw", "parameter", "value"])
            .map_err(io_err)?;
        for (c, chain) in self.chains.iter().enumerate() {
            for (d, draw) in chain.iter().enumerate() {
                for (p, name) in self.param_names.iter().enumerate() {
                    w.write_record([
                        c.to_string(),
                        d.to_string(),
                        name.clone(),
                        draw[p].to_string(),
                    ])
                    .map_err(io_err)?;
                }
            }
        }
        w.flush().map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(())
    }
}

/// Stable parameter naming for the flattened state vector.
pub fn param_names(data: &ModelData) -> Vec<String> {
    let m = data.n_proxies();
    let mut names = Vec::with_capacity(4 * m + 6 + data.n_recon());
    for family in ["alpha", "beta1", "beta2", "sigma"] {
        for j in 0..m {
            names.push(format!("{family}[{j}]"));
        }
    }
    for scalar in ["omega", "delta", "rho", "nu", "tau", "lambda"] {
        names.push(scalar.to_string());
    }
    for idx in data.recon_indices() {
        names.push(format!("I_r[{}]", data.grid.year(idx)));
    }
    names
}

fn flatten_state(state: &ParameterState, out: &mut Vec<f64>) {
    out.clear();
    out.extend_from_slice(&state.alpha);
    out.extend_from_slice(&state.beta1);
    out.extend_from_slice(&state.beta2);
    out.extend_from_slice(&state.sigma);
    out.push(state.omega);
    out.push(state.delta);
    out.push(state.rho);
    out.push(state.nu);
    out.push(state.tau);
    out.push(state.lambda);
    out.extend_from_slice(&state.recon);
}

fn laplace_draw<R: Rng>(rng: &mut R, scale: f64) -> f64 {
    let u: f64 = rng.random::<f64>() - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Overdispersed but in-support starting point for chain `chain_id`.
/// Scale parameters start at a mid-body prior quantile, location parameters
/// at prior draws, both inflated by `1 + chain_id / 2`.
pub fn init_state<R: Rng>(
    spec: &ModelSpec,
    data: &ModelData,
    chain_id: usize,
    rng: &mut R,
) -> ParameterState {
    let m = data.n_proxies();
    let t = data.n_years();
    let recon_idx = data.recon_indices();
    let disp = 1.0 + 0.5 * chain_id as f64;
    let p = spec.priors;
    let mut state = ParameterState::neutral(m, t, recon_idx.len());

    // Quantile kept inside [0.05, 0.9] so scales start positive and finite.
    let scale_start = |rng: &mut R, s: f64| -> f64 {
        let q = (rng.random::<f64>() * 0.9).max(0.05);
        half_cauchy_quantile(q, s) * disp
    };
    state.lambda = scale_start(rng, p.lambda_scale);
    state.nu = scale_start(rng, p.scale_halft);
    state.tau = scale_start(rng, p.scale_halft);
    for j in 0..m {
        state.sigma[j] = scale_start(rng, p.scale_halft);
    }

    let psi_rate = (0.5 / (state.lambda * state.lambda)).clamp(1e-300, 1e300);
    let psi_prior = Exp::new(psi_rate).expect("positive rate");
    for j in 0..m {
        state.alpha[j] = p.alpha_sd * rng.sample::<f64, _>(StandardNormal) * disp;
        state.beta1[j] = laplace_draw(rng, state.lambda) * disp;
        state.beta2[j] = laplace_draw(rng, state.lambda) * disp;
        state.psi[j] = [
            psi_prior.sample(rng).clamp(1e-12, 1e12),
            psi_prior.sample(rng).clamp(1e-12, 1e12),
        ];
    }
    state.omega = p.alpha_sd * rng.sample::<f64, _>(StandardNormal) * disp;
    state.delta = p.delta_sd * rng.sample::<f64, _>(StandardNormal) * disp;
    state.rho = rng.random_range(-1.0..1.0);
    // eta stays at zero; latent index values start on the trend line.
    for (k, &idx) in recon_idx.iter().enumerate() {
        state.recon[k] = if spec.trend {
            state.omega + state.delta * spec.time_covariate(idx)
        } else {
            0.0
        };
    }
    state
}

/// Run one chain. The RNG is seeded from `config.seed` with the chain id as
/// the stream, so chains are independent and the whole run is reproducible.
pub fn run_one_chain(
    data: &ModelData,
    spec: &ModelSpec,
    config: &McmcConfig,
    chain_id: usize,
) -> Result<(Vec<Vec<f64>>, ChainAcceptance)> {
    let ctx = SweepContext::new(data, spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(chain_id as u64);

    let mut state = init_state(spec, data, chain_id, &mut rng);
    let mut tuners = Tuners::new(data.n_proxies(), data.n_recon());
    let adapt_end = config.adapt_end();

    let mut draws = Vec::with_capacity(config.per_chain_draws());
    let mut buf = Vec::new();
    for s in 1..=config.n_iter {
        if s == adapt_end + 1 {
            tuners.freeze_all();
        }
        if s == config.n_burn + 1 {
            tuners.reset_counters();
        }
        blocks::gibbs_sweep(&mut state, &ctx, &mut tuners, &mut rng).map_err(|e| match e {
            Error::Numerical { block, .. } => Error::Numerical {
                iteration: s,
                block,
            },
            other => other,
        })?;
        if s > config.n_burn && (s - config.n_burn) % config.thin == 0 {
            flatten_state(&state, &mut buf);
            draws.push(buf.clone());
        }
    }
    Ok((draws, ChainAcceptance::from_tuners(&tuners)))
}

/// Run all chains (in parallel) and assemble the archive with per-parameter
/// diagnostics.
pub fn run_chains(data: &ModelData, spec: &ModelSpec, config: &McmcConfig) -> Result<PosteriorArchive> {
    config.validate()?;
    if data.n_proxies() == 0 {
        return Err(Error::Data("no proxy records in model data".into()));
    }
    let names = param_names(data);
    let recon_years: Vec<i32> = data
        .recon_indices()
        .iter()
        .map(|&idx| data.grid.year(idx))
        .collect();

    let results: Vec<(Vec<Vec<f64>>, ChainAcceptance)> = (0..config.n_chains)
        .into_par_iter()
        .map(|c| run_one_chain(data, spec, config, c))
        .collect::<Result<Vec<_>>>()?;

    let mut chains = Vec::with_capacity(results.len());
    let mut acceptance = Vec::with_capacity(results.len());
    for (draws, acc) in results {
        chains.push(draws);
        acceptance.push(acc);
    }

    let mut archive = PosteriorArchive {
        param_names: names,
        chains,
        recon_years,
        diagnostics: Vec::new(),
        acceptance,
        config: config.clone(),
    };

    let total = archive.total_draws();
    let mut diags = Vec::with_capacity(archive.n_params());
    for (p, name) in archive.param_names.iter().enumerate() {
        let per_chain = archive.param_chains(p);
        let rhat_res = if per_chain.len() >= 2 {
            Some(rhat(&per_chain)?)
        } else {
            None
        };
        let ess_res = ess(&per_chain)?;
        let degenerate = ess_res.degenerate || rhat_res.as_ref().is_some_and(|r| r.degenerate);
        let flagged = !degenerate
            && convergence_flag(rhat_res.as_ref().map(|r| r.value), ess_res.value, total);
        diags.push(ParamDiag {
            name: name.clone(),
            rhat: rhat_res.map(|r| r.value),
            ess: ess_res.value,
            degenerate,
            flagged,
        });
    }
    archive.diagnostics = diags;

    let flagged = archive.flagged_params().len();
    if flagged > 0 {
        log::warn!(
            "{flagged} of {} parameters flagged by the convergence gate",
            archive.n_params()
        );
    }
    Ok(archive)
}

//! Convergence diagnostics: rank-normalised split R-hat and autocorrelation-
//! based effective sample size with Geyer initial-monotone truncation.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Flagging thresholds: a parameter needs R-hat below 1.1 and an effective
/// sample size of at least 10% of the retained draws.
pub const RHAT_THRESHOLD: f64 = 1.1;
pub const ESS_FRACTION: f64 = 0.10;

/// A diagnostic value plus a degeneracy marker (constant chains carry no
/// mixing information).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagResult {
    pub value: f64,
    pub degenerate: bool,
}

fn validate_chains(chains: &[Vec<f64>], min_chains: usize) -> Result<(usize, usize)> {
    if chains.len() < min_chains {
        return Err(Error::Data(format!(
            "diagnostic requires at least {min_chains} chains, got {}",
            chains.len()
        )));
    }
    let n = chains[0].len();
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::Data("chains have unequal lengths".into()));
    }
    if n < 4 {
        return Err(Error::Data(format!(
            "diagnostic requires at least 4 draws per chain, got {n}"
        )));
    }
    Ok((chains.len(), n))
}

fn is_constant(chains: &[Vec<f64>]) -> bool {
    let first = chains[0][0];
    chains.iter().all(|c| c.iter().all(|&v| v == first))
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample variance, n-1 denominator.
fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() as f64 - 1.0)
}

/// Classic split-R-hat on already-transformed sequences.
fn split_rhat_raw(halves: &[Vec<f64>]) -> f64 {
    let n = halves[0].len() as f64;
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let vars: Vec<f64> = halves.iter().map(|h| variance(h)).collect();
    let w = mean(&vars);
    let b = n * variance(&means);
    if w == 0.0 {
        return if b == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}

/// Split each chain into halves, dropping the middle draw when the length is
/// odd.
fn split_halves(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = chains[0].len();
    let half = n / 2;
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        out.push(c[..half].to_vec());
        out.push(c[n - half..].to_vec());
    }
    out
}

/// Average ranks (ties get the mean of the tied positions), 1-based.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("non-NaN draws"));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) share the average of ranks i+1..=j+1.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Rank-normalised split R-hat.
///
/// Chains are split in half, the pooled draws are replaced by normal scores
/// of their fractional ranks, z = Phi^-1((r - 3/8) / (S + 1/4)), and the
/// classic split-R-hat is computed on the scores. Requires at least two
/// chains of at least four draws. Constant input returns 1.0 with the
/// degenerate flag set.
pub fn rhat(chains: &[Vec<f64>]) -> Result<DiagResult> {
    validate_chains(chains, 2)?;
    if is_constant(chains) {
        return Ok(DiagResult {
            value: 1.0,
            degenerate: true,
        });
    }
    let halves = split_halves(chains);
    let pooled: Vec<f64> = halves.iter().flatten().copied().collect();
    let ranks = average_ranks(&pooled);
    let s_total = pooled.len() as f64;
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let z: Vec<f64> = ranks
        .iter()
        .map(|r| std_normal.inverse_cdf((r - 0.375) / (s_total + 0.25)))
        .collect();
    let half_n = halves[0].len();
    let z_halves: Vec<Vec<f64>> = (0..halves.len())
        .map(|h| z[h * half_n..(h + 1) * half_n].to_vec())
        .collect();
    Ok(DiagResult {
        value: split_rhat_raw(&z_halves),
        degenerate: false,
    })
}

/// Biased autocovariance (denominator n) of one sequence at one lag.
fn autocov_at(x: &[f64], x_mean: f64, lag: usize) -> f64 {
    let n = x.len();
    let mut sum = 0.0;
    for i in 0..n - lag {
        sum += (x[i] - x_mean) * (x[i + lag] - x_mean);
    }
    sum / n as f64
}

/// Effective sample size combined across chains.
///
/// Per-lag correlation estimates pool the within-chain autocovariances and
/// the between-chain variance; the lag sum is truncated at the first
/// non-positive Geyer pair and made monotone. Works with a single chain.
/// Constant input returns the total draw count with the degenerate flag.
pub fn ess(chains: &[Vec<f64>]) -> Result<DiagResult> {
    let (m, n) = validate_chains(chains, 1)?;
    let total = (m * n) as f64;
    if is_constant(chains) {
        return Ok(DiagResult {
            value: total,
            degenerate: true,
        });
    }

    let chain_means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let acov0: Vec<f64> = chains
        .iter()
        .zip(&chain_means)
        .map(|(c, &m)| autocov_at(c, m, 0))
        .collect();
    let n_f = n as f64;
    let chain_vars: Vec<f64> = acov0.iter().map(|a| a * n_f / (n_f - 1.0)).collect();
    let mean_var = mean(&chain_vars);
    let mut var_plus = mean_var * (n_f - 1.0) / n_f;
    if m > 1 {
        var_plus += variance(&chain_means);
    }
    if var_plus == 0.0 || !var_plus.is_finite() {
        return Ok(DiagResult {
            value: total,
            degenerate: true,
        });
    }

    let mean_acov = |lag: usize| -> f64 {
        let sum: f64 = chains
            .iter()
            .zip(&chain_means)
            .map(|(c, &m)| autocov_at(c, m, lag))
            .sum();
        sum / chains.len() as f64
    };

    let mut rho_hat_s = vec![0.0; n];
    let mut rho_hat_even = 1.0;
    rho_hat_s[0] = rho_hat_even;
    let mut rho_hat_odd = 1.0 - (mean_var - mean_acov(1)) / var_plus;
    rho_hat_s[1] = rho_hat_odd;

    let mut s = 1;
    while s < n.saturating_sub(4) && (rho_hat_even + rho_hat_odd) > 0.0 {
        rho_hat_even = 1.0 - (mean_var - mean_acov(s + 1)) / var_plus;
        rho_hat_odd = 1.0 - (mean_var - mean_acov(s + 2)) / var_plus;
        if rho_hat_even + rho_hat_odd >= 0.0 {
            rho_hat_s[s + 1] = rho_hat_even;
            rho_hat_s[s + 2] = rho_hat_odd;
        }
        s += 2;
    }
    let max_s = s;
    // Improved estimate for the antithetic case.
    if rho_hat_even > 0.0 {
        rho_hat_s[max_s + 1] = rho_hat_even;
    }
    // Geyer initial monotone sequence.
    let mut s = 1;
    while s + 3 <= max_s {
        if rho_hat_s[s + 1] + rho_hat_s[s + 2] > rho_hat_s[s - 1] + rho_hat_s[s] {
            rho_hat_s[s + 1] = (rho_hat_s[s - 1] + rho_hat_s[s]) / 2.0;
            rho_hat_s[s + 2] = rho_hat_s[s + 1];
        }
        s += 2;
    }

    let tau_hat = -1.0 + 2.0 * rho_hat_s[..max_s].iter().sum::<f64>() + rho_hat_s[max_s + 1];
    let ess = (total / tau_hat).min(total * total.log10());
    Ok(DiagResult {
        value: ess,
        degenerate: false,
    })
}

/// Convergence gate: true means the parameter must be flagged.
///
/// Flags R-hat at or above 1.1 (inclusive) or ESS strictly below 10% of the
/// total retained draws. `rhat` is `None` for single-chain runs, where the
/// between-chain criterion cannot be evaluated.
pub fn convergence_flag(rhat: Option<f64>, ess: f64, total_draws: usize) -> bool {
    let rhat_bad = rhat.is_some_and(|r| r >= RHAT_THRESHOLD);
    let ess_bad = ess < ESS_FRACTION * total_draws as f64;
    rhat_bad || ess_bad
}

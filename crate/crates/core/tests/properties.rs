//! Randomised checks of structural invariants: transformations invert,
//! alignment stays in bounds and is deterministic, the record screen is
//! affine-invariant and monotone in its threshold, quantiles are monotone,
//! exceedance counts survive monotone rescaling, and retained draws respect
//! parameter supports.

use std::collections::HashSet;

use hydrorecon::filter::{apply_filter, filter_measure, FilterOverrides};
use hydrorecon::ingest::{
    align, fit_boxcox, standardize, AlignedObs, AlignedRecord, HydroSeries, ProxyObs, ProxyRecord,
    Split,
};
use hydrorecon::model::{simulate, ModelData, ModelSpec, PriorSpec, SimProxySpec, SimSpec};
use hydrorecon::posterior::{exceedance, quantile_type7};
use hydrorecon::sampler::{run_chains, McmcConfig, PosteriorArchive};
use proptest::prelude::*;

fn instrumental_years() -> Vec<i32> {
    (1950..1970).collect()
}

fn hydro_from(values: Vec<f64>) -> HydroSeries {
    HydroSeries::new(instrumental_years(), values).unwrap()
}

/// Series values with enough spread that standardisation is well defined.
fn hydro_values() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(10.0..500.0f64, 20).prop_filter("needs spread", |v| {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() > 1e-6
    })
}

fn aligned_record(calib: Vec<f64>, recon: Vec<f64>) -> AlignedRecord {
    let mut obs = Vec::new();
    for (i, v) in recon.iter().enumerate() {
        obs.push(AlignedObs {
            year: 1900 + i as i32,
            target_year: 1900 + i as i32,
            value: *v,
            split: Split::Reconstruction,
        });
    }
    for (i, v) in calib.iter().enumerate() {
        obs.push(AlignedObs {
            year: 1950 + i as i32,
            target_year: 1950 + i as i32,
            value: *v,
            split: Split::Calibration,
        });
    }
    AlignedRecord {
        id: "r".into(),
        archive: "a".into(),
        lag: 0,
        obs,
    }
}

/// A small proxy network with randomised values; record `i` gets id `p{i}`.
fn network(values: Vec<Vec<(f64, bool)>>) -> Vec<AlignedRecord> {
    values
        .into_iter()
        .enumerate()
        .map(|(i, obs)| {
            let mut calib = Vec::new();
            let mut recon = Vec::new();
            for (v, is_calib) in obs {
                if is_calib {
                    calib.push(v);
                } else {
                    recon.push(v);
                }
            }
            let mut r = aligned_record(calib, recon);
            r.id = format!("p{i}");
            r
        })
        .collect()
}

fn kept_set(records: &[AlignedRecord], threshold: f64) -> HashSet<String> {
    match apply_filter(records, threshold, &FilterOverrides::default()) {
        Ok((kept, _)) => kept.into_iter().map(|r| r.id).collect(),
        // All records filtered: the kept set is empty.
        Err(_) => HashSet::new(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn standardization_round_trips(values in hydro_values()) {
        let raw = hydro_from(values.clone());
        let std = standardize(&raw).unwrap();
        for (orig, stored) in values.iter().zip(&std.values) {
            let back = std.to_original(*stored);
            prop_assert!((back - orig).abs() < 1e-9 * orig.abs().max(1.0));
            let forward = std.from_original(*orig).unwrap();
            prop_assert!((forward - stored).abs() < 1e-9);
        }
    }

    #[test]
    fn boxcox_round_trips(values in proptest::collection::vec(0.05..800.0f64, 15)) {
        let state = fit_boxcox(&values).unwrap();
        for v in &values {
            let back = state.inverse(state.forward(*v));
            prop_assert!((back - v).abs() < 1e-9 * v.abs().max(1.0));
        }
    }

    #[test]
    fn alignment_is_in_bounds_and_deterministic(
        lags in proptest::collection::vec(-5..=5i32, 1..4),
        seed_vals in proptest::collection::vec(-3.0..3.0f64, 30),
    ) {
        let hydro = hydro_from((0..20).map(|i| 10.0 + (i as f64) * 0.7).collect());
        let hydro = standardize(&hydro).unwrap();
        let records: Vec<ProxyRecord> = lags
            .iter()
            .enumerate()
            .map(|(j, &lag)| ProxyRecord {
                id: format!("p{j}"),
                archive: "a".into(),
                lag,
                // Some of these years fall past the instrumental end and
                // must be dropped rather than land out of bounds.
                obs: (0..30)
                    .map(|i| ProxyObs {
                        year: 1900 + (i * 4) as i32,
                        value: seed_vals[i],
                    })
                    .collect(),
                standardization: Some((0.0, 1.0)),
            })
            .collect();
        let a1 = align(&records, &hydro).unwrap();
        for r in &a1.records {
            for o in &r.obs {
                let idx = a1.grid.index(o.target_year);
                prop_assert!(idx.is_some());
                let expect_calib = o.target_year >= 1950;
                prop_assert_eq!(o.split == Split::Calibration, expect_calib);
            }
        }
        let a2 = align(&records, &hydro).unwrap();
        prop_assert_eq!(format!("{:?}", a1.records), format!("{:?}", a2.records));
        prop_assert_eq!(a1.grid, a2.grid);
    }

    #[test]
    fn filter_measure_is_affine_invariant(
        calib in proptest::collection::vec(-5.0..5.0f64, 2..12),
        recon in proptest::collection::vec(-8.0..8.0f64, 1..12),
        a in prop_oneof![-50.0..-0.01f64, 0.01..50.0f64],
        b in -100.0..100.0f64,
    ) {
        let base = aligned_record(calib.clone(), recon.clone());
        let f0 = filter_measure(&base);
        let mapped = aligned_record(
            calib.iter().map(|v| a * v + b).collect(),
            recon.iter().map(|v| a * v + b).collect(),
        );
        let f1 = filter_measure(&mapped);
        match (f0, f1) {
            (Ok(x), Ok(y)) if x.is_finite() => {
                prop_assert!((x - y).abs() < 1e-9 * x.abs().max(1.0), "{x} vs {y}");
            }
            (Ok(x), Ok(y)) => prop_assert!(x.is_infinite() && y.is_infinite()),
            _ => prop_assert!(false, "measure failed on a well-formed record"),
        }
    }

    #[test]
    fn filter_threshold_monotonicity(
        values in proptest::collection::vec(
            proptest::collection::vec((-6.0..6.0f64, proptest::bool::ANY), 3..20),
            1..5,
        ),
        t_lo in 0.5..4.0f64,
        gap in 0.1..4.0f64,
    ) {
        let records = network(values);
        let lo = kept_set(&records, t_lo);
        let hi = kept_set(&records, t_lo + gap);
        prop_assert!(lo.is_subset(&hi), "kept set shrank as the threshold rose");
    }

    #[test]
    fn filter_decisions_partition_the_input(
        values in proptest::collection::vec(
            proptest::collection::vec((-6.0..6.0f64, proptest::bool::ANY), 1..20),
            1..5,
        ),
        threshold in 0.5..8.0f64,
    ) {
        let records = network(values);
        if let Ok((kept, report)) = apply_filter(&records, threshold, &FilterOverrides::default()) {
            prop_assert_eq!(report.rows.len(), records.len());
            for (row, rec) in report.rows.iter().zip(&records) {
                prop_assert_eq!(&row.id, &rec.id);
            }
            let kept_rows: Vec<&str> = report.kept_ids();
            let kept_ids: Vec<&str> = kept.iter().map(|r| r.id.as_str()).collect();
            prop_assert_eq!(kept_rows, kept_ids);
        }
    }

    #[test]
    fn quantiles_monotone_in_p(
        mut draws in proptest::collection::vec(-100.0..100.0f64, 1..60),
        p1 in 0.0..1.0f64,
        p2 in 0.0..1.0f64,
    ) {
        draws.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
        prop_assert!(quantile_type7(&draws, lo) <= quantile_type7(&draws, hi));
    }

    #[test]
    fn exceedance_counts_survive_monotone_rescaling(
        draws in proptest::collection::vec(-3.0..3.0f64, 8..40),
        lo in -2.0..0.0f64,
        span in 0.1..3.0f64,
    ) {
        let hi = lo + span;
        // Strictly increasing map: counts against mapped thresholds must
        // not move.
        let f = |x: f64| x.exp() + 0.5 * x;
        let base = recon_archive(vec![1900], vec![draws.clone()]);
        let mapped = recon_archive(vec![1900], vec![draws.iter().map(|&d| f(d)).collect()]);
        let e0 = exceedance(&base, lo, hi).unwrap();
        let e1 = exceedance(&mapped, f(lo), f(hi)).unwrap();
        prop_assert_eq!(e0.rows[0].p_below_min, e1.rows[0].p_below_min);
        prop_assert_eq!(e0.rows[0].p_above_max, e1.rows[0].p_above_max);
        // And the two tails can never overlap.
        prop_assert!(e0.rows[0].p_below_min + e0.rows[0].p_above_max <= 1.0);
    }
}

/// Archive holding only latent-index parameters, one chain.
fn recon_archive(years: Vec<i32>, draws_per_year: Vec<Vec<f64>>) -> PosteriorArchive {
    assert_eq!(years.len(), draws_per_year.len());
    let n_draws = draws_per_year[0].len();
    let chain: Vec<Vec<f64>> = (0..n_draws)
        .map(|d| draws_per_year.iter().map(|ys| ys[d]).collect())
        .collect();
    PosteriorArchive {
        param_names: years.iter().map(|y| format!("I_r[{y}]")).collect(),
        chains: vec![chain],
        recon_years: years,
        diagnostics: Vec::new(),
        acceptance: Vec::new(),
        config: McmcConfig::default(),
    }
}

/// Every retained draw must respect the parameter supports: positive
/// scales and |rho| < 1.
#[test]
fn retained_draws_respect_parameter_supports() {
    let sim = SimSpec {
        grid_start: 1900,
        grid_end: 1999,
        instrumental_start: 1960,
        instrumental_end: 1999,
        trend: false,
        omega: 0.0,
        delta: 0.0,
        rho: 0.5,
        nu: 0.6,
        tau: 0.3,
        seed: 11,
        proxies: vec![
            SimProxySpec {
                id: "a".into(),
                archive: "x".into(),
                lag: 0,
                obs_years: (1900..2000).collect(),
                alpha: 0.0,
                beta1: 1.0,
                beta2: 0.0,
                sigma: 0.5,
            },
            SimProxySpec {
                id: "b".into(),
                archive: "x".into(),
                lag: 0,
                obs_years: (1900..2000).step_by(2).collect(),
                alpha: 0.4,
                beta1: -0.7,
                beta2: 0.1,
                sigma: 0.7,
            },
        ],
    };
    let out = simulate(&sim).unwrap();
    let aligned = align(&out.proxies, &out.hydro).unwrap();
    let data = ModelData::new(&aligned.records, &out.hydro, aligned.grid).unwrap();
    let spec = ModelSpec::for_data(&data, false, PriorSpec::default()).unwrap();
    let mcmc = McmcConfig {
        n_chains: 2,
        n_iter: 450,
        n_burn: 150,
        thin: 2,
        seed: 5,
        adapt_len: None,
    };
    let archive = run_chains(&data, &spec, &mcmc).unwrap();

    let scale_params: Vec<usize> = archive
        .param_names
        .iter()
        .enumerate()
        .filter(|(_, n)| {
            n.starts_with("sigma[") || *n == "nu" || *n == "tau" || *n == "lambda"
        })
        .map(|(i, _)| i)
        .collect();
    let rho = archive.param_index("rho").unwrap();
    for chain in &archive.chains {
        for draw in chain {
            for &p in &scale_params {
                assert!(draw[p] > 0.0, "scale parameter went non-positive");
            }
            assert!(draw[rho].abs() < 1.0, "rho left (-1, 1)");
        }
    }
}

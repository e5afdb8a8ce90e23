//! Statistical checks of the panel simulators and the HLZ model.

use fdrb_core::bounds::{NullModel, StoreyBinSpec};
use fdrb_core::hlz::{hlz_fdr_curve, hlz_replicate, hlz_share_above, DiscoveryPopulation, HlzParams};
use fdrb_core::normal::two_sided_tail;
use fdrb_core::panel::{compute_tstats, ExclusionReason, ReturnPanel, TStatSample};
use fdrb_core::rng::stream;
use fdrb_core::simkit::{
    apply_selection, assemble_panel, make_truth_and_mu, monte_carlo_fdr, realized_fdp, replicate, synthetic_source_panel,
    BoundSettings, ResidualSource, SelectionRule, SimConfig,
};
use fdrb_core::stats::{mean, pair_correlation, pearson, sample_sd};
use rand::Rng;

fn synthetic(n: usize, t: usize, gamma: f64, p_false: f64, n_sims: usize, seed: u64) -> SimConfig {
    SimConfig {
        n_predictors: n,
        n_months: t,
        gamma_bps: gamma,
        p_false,
        residual_source: ResidualSource::synthetic_default(),
        seed,
        n_sims,
        min_obs: 60,
    }
}

fn independent(n: usize, t: usize, gamma: f64, p_false: f64, n_sims: usize, seed: u64) -> SimConfig {
    SimConfig {
        residual_source: ResidualSource::Synthetic { block_size: 1, within_block_corr: 0.0, idio_sd: 3.32 },
        ..synthetic(n, t, gamma, p_false, n_sims, seed)
    }
}

#[test]
fn false_share_follows_p_false() {
    let cfg = synthetic(100_000, 100, 50.0, 0.5, 1, 1);
    let (labels, mu) = make_truth_and_mu(&cfg, &mut stream(1, 0));
    let share = labels.n_false() as f64 / labels.len() as f64;
    assert!((share - 0.5).abs() < 0.01, "{share}");
    assert!(labels.is_false.iter().zip(&mu).all(|(&f, &m)| f == (m == 0.0)));
}

#[test]
fn independent_synthetic_panel_has_no_correlation() {
    let p = synthetic_source_panel(60, 500, 20, 0.0, 3.32, &mut stream(2, 0)).unwrap();
    let mut rs = Vec::new();
    for i in 0..60 {
        for j in (i + 1)..60 {
            rs.push(pair_correlation(&p, i, j).unwrap());
        }
    }
    assert!(mean(&rs).abs() < 0.02);
    let abs = rs.iter().map(|r| r.abs()).sum::<f64>() / rs.len() as f64;
    assert!((abs - (2.0 / (std::f64::consts::PI * 500.0)).sqrt()).abs() < 0.005, "{abs}");
}

#[test]
fn synthetic_marginal_sd() {
    // 100 predictors in five blocks; pooled over predictors the sample sd
    // should sit within 2% of the target.
    let p = synthetic_source_panel(100, 5_000, 20, 0.35, 3.32, &mut stream(3, 0)).unwrap();
    let var = (0..100).map(|i| sample_sd(p.row(i)).powi(2)).sum::<f64>() / 100.0;
    assert!((var.sqrt() / 3.32 - 1.0).abs() < 0.02, "pooled sd {}", var.sqrt());
}

#[test]
fn power_of_true_predictors() {
    // E[t] ~ gamma / sd * sqrt(T) = 0.50 / 3.32 * sqrt(500) = 3.37.
    let cfg = independent(2_000, 500, 50.0, 0.0, 1, 4);
    let rep = replicate(
        &cfg,
        0,
        &BoundSettings { hurdle: 2.0, bin: StoreyBinSpec::default(), null: NullModel::ExactNormal, selection: None },
    )
    .unwrap();
    let m = mean(&rep.sample.abs_t);
    let want = 0.50 / 3.32 * 500f64.sqrt();
    assert!((m - want).abs() < 0.1, "{m} vs {want}");
}

#[test]
fn zero_residuals_are_flagged_as_zero_variance() {
    let res = ReturnPanel::new(
        vec!["a".into(), "b".into()],
        (0..80).map(|k| format!("m{k:03}")).collect(),
        vec![0.0; 160],
        vec![true; 160],
    )
    .unwrap();
    let panel = assemble_panel(&[0.5, 0.5], res).unwrap();
    let t = compute_tstats(&panel, 60).unwrap();
    assert!(t.sample.is_empty());
    assert!(t.excluded.iter().all(|e| e.reason == ExclusionReason::ZeroVariance));
}

#[test]
fn middle_segment_selects_half() {
    let mut rng = stream(5, 0);
    let abs_t: Vec<f64> = (0..100_000).map(|_| rng.random_range(1.9601..=2.57)).collect();
    let sel = apply_selection(&TStatSample::from_abs_t(abs_t, "u").unwrap(), &SelectionRule::default(), &mut rng);
    let share = sel.len() as f64 / 100_000.0;
    assert!((share - 0.5).abs() < 0.01, "{share}");
}

#[test]
fn all_null_calibration() {
    let cfg = synthetic(2_000, 200, 75.0, 1.0, 20, 6);
    let settings =
        BoundSettings { hurdle: 2.0, bin: StoreyBinSpec::default(), null: NullModel::PaperMode, selection: None };
    for r in 0..cfg.n_sims {
        let rep = replicate(&cfg, r, &settings).unwrap();
        if rep.fdp.n_discoveries > 0 {
            assert_eq!(rep.fdp.fdp, 1.0);
        }
    }
    let cell = monte_carlo_fdr(&cfg, 2.0, StoreyBinSpec::default(), NullModel::PaperMode, None).unwrap();
    // Share above 2 is about tail(2) = 0.0455 < 0.05, so the bound sits at its cap.
    assert!(cell.mean_easy_bound.unwrap() > 0.9, "{:?}", cell.mean_easy_bound);
}

#[test]
fn storey_never_above_easy_in_any_replication() {
    let cfg = synthetic(500, 120, 50.0, 0.6, 20, 7);
    for null in [NullModel::ExactNormal, NullModel::PaperMode] {
        let settings = BoundSettings { hurdle: 2.0, bin: StoreyBinSpec::default(), null, selection: None };
        for r in 0..cfg.n_sims {
            let o = replicate(&cfg, r, &settings).unwrap().outcome;
            if let (Some(e), Some(s)) = (o.easy, o.storey) {
                assert!(s <= e, "replication {r}: storey {s} > easy {e}");
            }
        }
    }
}

#[test]
fn realized_fdp_matches_brute_force_recount() {
    let cfg = synthetic(200, 120, 40.0, 0.5, 25, 8);
    let rule = SelectionRule::default();
    for selection in [None, Some(&rule)] {
        let settings = BoundSettings { hurdle: 2.0, bin: StoreyBinSpec::default(), null: NullModel::ExactNormal, selection };
        for r in 0..cfg.n_sims {
            let rep = replicate(&cfg, r, &settings).unwrap();
            // Truth comes first on the replication stream.
            let (raw, _) = make_truth_and_mu(&cfg, &mut stream(cfg.seed, r as u64));
            let (mut disc, mut fals) = (0, 0);
            for (id, &t) in rep.sample.predictor_ids.iter().zip(&rep.sample.abs_t) {
                let i: usize = id[1..].parse().unwrap();
                if t > 2.0 {
                    disc += 1;
                    if raw.is_false[i] {
                        fals += 1;
                    }
                }
            }
            assert_eq!((rep.fdp.n_discoveries, rep.fdp.n_false_discoveries), (disc, fals));
            let again = realized_fdp(&rep.labels, &rep.sample, 2.0).unwrap();
            assert_eq!(again, rep.fdp);
        }
    }
}

#[test]
fn grid_cells_do_not_depend_on_thread_count() {
    let cfg = synthetic(300, 120, 50.0, 0.5, 12, 9);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
            monte_carlo_fdr(&cfg, 2.0, StoreyBinSpec::default(), NullModel::ExactNormal, Some(&SelectionRule::default()))
                .unwrap()
        })
    };
    let (a, b) = (run(1), run(4));
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
}

#[test]
fn bounds_cover_at_high_power() {
    for p_false in [0.01, 0.5, 0.99] {
        let cfg = synthetic(2_000, 500, 75.0, p_false, 10, 10);
        let cell = monte_carlo_fdr(&cfg, 2.0, StoreyBinSpec::default(), NullModel::PaperMode, None).unwrap();
        assert!(cell.mean_easy_bound.unwrap() >= cell.actual_fdr, "{cell:?}");
        assert!(cell.mean_storey_bound.unwrap() >= cell.actual_fdr, "{cell:?}");
    }
}

#[test]
fn hlz_independent_noise_has_unit_variance() {
    let p = HlzParams { rho: 0.0, n_factors: 10_000, ..Default::default() };
    let d = hlz_replicate(&p, 11, 0).unwrap();
    let resid: Vec<f64> = d.t.iter().zip(&d.mu_bps).map(|(t, m)| t - m / p.se_bps).collect();
    let var = sample_sd(&resid).powi(2);
    assert!((var - 1.0).abs() < 0.05, "{var}");
}

#[test]
fn hlz_all_null_publication_rate() {
    // The common shock moves a single draw's share, so average over draws.
    let p = HlzParams { p0: 1.0, ..Default::default() };
    let (mut published, mut total) = (0usize, 0usize);
    for r in 0..500 {
        let d = hlz_replicate(&p, 12, r).unwrap();
        assert!(d.mu_bps.iter().all(|&m| m == 0.0));
        published += d.published.iter().filter(|&&x| x).count();
        total += d.len();
    }
    let share = published as f64 / total as f64;
    let want = 0.5 * (two_sided_tail(1.96) - two_sided_tail(2.57)) + two_sided_tail(2.57);
    assert!((share - want).abs() < 0.003, "{share} vs {want}");
}

#[test]
fn hlz_pairwise_correlation_is_rho() {
    let p = HlzParams::default();
    let k = 50;
    let reps = 1_000;
    let mut cols: Vec<Vec<f64>> = (0..k).map(|_| Vec::with_capacity(reps)).collect();
    for r in 0..reps {
        let d = hlz_replicate(&p, 13, r).unwrap();
        for (i, col) in cols.iter_mut().enumerate() {
            col.push(d.t[i] - d.mu_bps[i] / p.se_bps);
        }
    }
    let mut rs = Vec::new();
    for i in 0..k {
        for j in (i + 1)..k {
            rs.push(pearson(&cols[i], &cols[j]).unwrap());
        }
    }
    let m = mean(&rs);
    assert!((m - 0.2).abs() < 0.02, "{m}");
}

#[test]
fn hlz_labels_hold_on_every_draw() {
    for r in 0..200 {
        let d = hlz_replicate(&HlzParams::default(), 14, r).unwrap();
        assert!(d.is_false.iter().zip(&d.mu_bps).all(|(&f, &m)| f == (m == 0.0)));
    }
}

#[test]
fn hlz_fdr_falls_with_the_hurdle() {
    let hurdles: Vec<f64> = (0..=16).map(|k| 1.5 + 0.125 * k as f64).collect();
    for pop in [DiscoveryPopulation::AllFactors, DiscoveryPopulation::Published] {
        let rows = hlz_fdr_curve(&HlzParams::default(), &hurdles, 500, 15, pop).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].mean_fdr <= w[0].mean_fdr + 0.005, "{:?} -> {:?}", w[0], w[1]);
        }
    }
}

#[test]
fn hlz_lower_s_bar_is_a_smaller_sample() {
    let hurdles = [2.0, 2.27, 2.95];
    let full = hlz_fdr_curve(&HlzParams::default(), &hurdles, 500, 16, DiscoveryPopulation::Published).unwrap();
    let half_params = HlzParams { s_bar: 0.5, ..Default::default() };
    let half = hlz_fdr_curve(&half_params, &hurdles, 500, 16, DiscoveryPopulation::Published).unwrap();
    for (f, h) in full.iter().zip(&half) {
        assert!((f.mean_fdr - h.mean_fdr).abs() < 0.01, "{f:?} vs {h:?}");
        let ratio = h.mean_discoveries / f.mean_discoveries;
        assert!((ratio - 0.5).abs() < 0.02, "count ratio {ratio}");
    }
}

#[test]
fn hlz_middle_segment_is_half_published() {
    let (mut seg, mut published) = (0usize, 0usize);
    for r in 0..300 {
        let d = hlz_replicate(&HlzParams::default(), 17, r).unwrap();
        for i in 0..d.len() {
            let a = d.t[i].abs();
            if a > 1.96 && a <= 2.57 {
                seg += 1;
                published += usize::from(d.published[i]);
            }
        }
    }
    let share = published as f64 / seg as f64;
    assert!((share - 0.5).abs() < 0.01, "{share} over {seg}");
}

#[test]
fn hlz_shares_above_reference_hurdles() {
    let p = HlzParams::default();
    let above3 = hlz_share_above(&p, 2.0, 3.0, 300, 18).unwrap();
    let above227 = hlz_share_above(&p, 2.0, 2.27, 300, 18).unwrap();
    assert!((above3 - 0.69).abs() < 0.05, "{above3}");
    assert!((above227 - 0.91).abs() < 0.02, "{above227}");
}

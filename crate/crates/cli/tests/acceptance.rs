//! Acceptance checks. Each criterion prints one line:
//!
//! `criterion NN PASS|FAIL <name> [<elapsed> / <budget>] <detail>`
//!
//! A criterion passes only when its numeric check holds and it finishes
//! within its time budget. The process exits nonzero if any criterion fails.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use fdrb_core::bounds::{
    easy_bound, exp_extrap_bound, interval_pf_bound, storey_fdr_bound_from_shares, storey_pf_from_share, NullModel,
    StoreyBinSpec,
};
use fdrb_core::control::{bh95_hurdle, bonferroni_hurdle, ControlMethod, ControlRequest};
use fdrb_core::hlz::{hlz_fdr_curve, DiscoveryPopulation, HlzParams};
use fdrb_core::normal::two_sided_tail;
use fdrb_core::panel::{ReturnPanel, TStatSample};
use fdrb_core::rng::stream;
use fdrb_core::simkit::{
    cluster_bootstrap_residuals, monte_carlo_fdr, run_grid, synthetic_source_panel, BootstrapSource, ResidualSource,
    SelectionRule, SimConfig, DEFAULT_BOOT_WEIGHT, DEFAULT_NOISE_SD,
};
use fdrb_core::stats::{ks_distance, pair_correlation};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = (&'static str, u64, fn() -> Outcome);

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol + 1e-12
}

// 1 -------------------------------------------------------------------------

fn easy_arithmetic() -> Outcome {
    let r = easy_bound(0.33, 2.0, NullModel::PaperMode).unwrap();
    let exact = 5.0 / 33.0;
    outcome(
        r.bound_raw == exact && r.display_percent() == "15.2%",
        format!("easy(0.33) = {} (5/33 = {exact})", r.bound_raw),
    )
}

// 2 -------------------------------------------------------------------------

fn table1_plugins() -> Outcome {
    let a = easy_bound(0.20, 2.0, NullModel::PaperMode).unwrap().bound_raw;
    let b = easy_bound(0.20, 1.87, NullModel::ExactNormal).unwrap().bound_raw;
    outcome(
        a == 0.25 && within(b, 0.30, 0.01),
        format!("share 0.20: {} at h=2 paper, {} at h=1.87 exact", pct(a), pct(b)),
    )
}

// 3 -------------------------------------------------------------------------

fn table2_extrapolation() -> Outcome {
    let cases = [
        ("5.1", 5.1, 0.10),
        ("4.6", 4.6, 0.11),
        ("4.2", 4.2, 0.12),
        ("3.6", 3.6, 0.18),
        ("3.1", 3.1, 0.32),
        ("McLean-Pontiff 3.55", 3.55, 0.18),
        ("Jacobs-Muller 4.2", 4.2, 0.08),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, t, target) in cases {
        let b = exp_extrap_bound(t, 2.0, NullModel::PaperMode).unwrap().bound_capped;
        let ok = within(b, target, 0.005);
        pass &= ok;
        parts.push(format!("{label}: {} vs {} {}", pct(b), pct(target), if ok { "ok" } else { "MISS" }));
    }
    outcome(pass, parts.join("; "))
}

// 4 -------------------------------------------------------------------------

fn storey_chain() -> Outcome {
    let bin = StoreyBinSpec::new(0.0, 0.5).unwrap();
    let pf = storey_pf_from_share(0.215, bin, NullModel::PaperMode).unwrap().pf;
    let combined = storey_fdr_bound_from_shares(0.33, 0.215, 2.0, bin, NullModel::PaperMode).unwrap().bound_raw;
    outcome(
        within(pf, 0.561, 0.005) && within(combined, 0.085, 0.01),
        format!("pf = {}, combined = {}", pct(pf), pct(combined)),
    )
}

// 5 -------------------------------------------------------------------------

fn table3_consistency() -> Outcome {
    // (label, Pr(|t|>2), Pr(|t|<=0.5), easy, Pr(F), Storey), all in percent.
    let columns = [
        ("EW raw", 32.5, 21.6, 15.4, 56.3, 8.7),
        ("EW CAPM", 35.9, 19.7, 13.9, 51.4, 7.2),
        ("EW FF3", 37.3, 18.8, 13.4, 49.0, 6.6),
        ("EW 4-fac", 32.4, 20.7, 15.4, 54.0, 8.3),
        ("VW raw", 10.7, 33.4, 46.7, 87.2, 40.8),
        ("VW CAPM", 17.1, 28.5, 29.2, 74.3, 21.7),
        ("VW FF3", 18.6, 27.9, 26.9, 72.8, 19.6),
        ("VW 4-fac", 13.5, 31.8, 37.2, 83.1, 30.9),
    ];
    let bin = StoreyBinSpec::new(0.0, 0.5).unwrap();
    let mut worst = 0.0f64;
    let mut worst_at = "";
    for (label, above, small, easy, pf, storey) in columns {
        let r = storey_fdr_bound_from_shares(above / 100.0, small / 100.0, 2.0, bin, NullModel::PaperMode).unwrap();
        let e = easy_bound(above / 100.0, 2.0, NullModel::PaperMode).unwrap().bound_raw;
        let p = r.intermediates.pf_bound.unwrap();
        for (got, printed) in [(e, easy), (p, pf), (r.bound_raw, storey)] {
            let gap = (100.0 * got - printed).abs();
            if gap > worst {
                worst = gap;
                worst_at = label;
            }
        }
    }
    outcome(worst <= 0.3 + 1e-9, format!("largest gap {worst:.3}pp ({worst_at}) over 24 cells"))
}

// 6 -------------------------------------------------------------------------

fn interval_pf() -> Outcome {
    let r = interval_pf_bound(0.80, -1.62, 1.58, NullModel::ExactNormal).unwrap();
    let pf = r.bound_capped;
    let true_share = 1.0 - pf;
    outcome(
        within(pf, 0.89, 0.01) && within(100.0 * true_share, 11.0, 1.0),
        format!("pf = {}, at least {} true", pct(pf), pct(true_share)),
    )
}

// 7 -------------------------------------------------------------------------

fn sorted_p_discoveries(abs_t: &[f64], q: f64) -> Vec<usize> {
    let m = abs_t.len();
    let p: Vec<f64> = abs_t.iter().map(|&t| two_sided_tail(t)).collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut k_star = 0;
    for (k, &i) in order.iter().enumerate() {
        if p[i] <= (k + 1) as f64 / m as f64 * q {
            k_star = k + 1;
        }
    }
    if k_star == 0 {
        return Vec::new();
    }
    let cutoff = p[order[k_star - 1]];
    (0..m).filter(|&i| p[i] <= cutoff).collect()
}

fn bh95_oracle() -> Outcome {
    let mut rng = stream(7, 0);
    let mut mismatches = 0;
    let mut total_discoveries = 0;
    for instance in 0..1000 {
        let m = rng.random_range(1..=50);
        let q = rng.random_range(0.01..0.5);
        let on_grid = instance % 2 == 0;
        let abs_t: Vec<f64> = (0..m)
            .map(|_| {
                let t = rng.random_range(0.0..5.0);
                if on_grid {
                    (t * 10.0f64).round() / 10.0
                } else {
                    t
                }
            })
            .collect();
        let sample = TStatSample::from_abs_t(abs_t.clone(), "acceptance").unwrap();
        let request = ControlRequest::new(q, ControlMethod::Bh95, NullModel::ExactNormal).unwrap();
        let search = bh95_hurdle(&sample, &request).unwrap().discoveries;
        let oracle = sorted_p_discoveries(&abs_t, q);
        total_discoveries += search.len();
        mismatches += usize::from(search != oracle);
    }
    outcome(
        mismatches == 0,
        format!("{mismatches} mismatches in 1000 instances ({total_discoveries} discoveries in total)"),
    )
}

// 8 -------------------------------------------------------------------------

fn bonferroni() -> Outcome {
    let h = bonferroni_hurdle(296, 0.05, NullModel::ExactNormal).unwrap();
    outcome(within(h, 3.78, 0.02), format!("hurdle {h:.4}"))
}

// 9 -------------------------------------------------------------------------

fn hlz_reconciliation() -> Outcome {
    let params = HlzParams::default();
    let hurdles = [2.0, 2.27, 2.95];
    let targets = [(0.09, 0.02), (0.05, 0.015), (0.01, 0.007)];
    let rows = hlz_fdr_curve(&params, &hurdles, 1000, 1, DiscoveryPopulation::AllFactors).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for (row, (target, tol)) in rows.iter().zip(targets) {
        let ok = within(row.mean_fdr, target, tol);
        pass &= ok;
        parts.push(format!(
            "h={}: {} vs {} ({:.0} discoveries)",
            row.hurdle,
            pct(row.mean_fdr),
            pct(target),
            row.mean_discoveries
        ));
    }
    outcome(pass, parts.join("; "))
}

// 10 ------------------------------------------------------------------------

fn bound_validity_grid() -> Outcome {
    let base = SimConfig {
        n_predictors: 2000,
        n_months: 500,
        gamma_bps: 25.0,
        p_false: 0.5,
        residual_source: ResidualSource::synthetic_default(),
        seed: 10,
        n_sims: 100,
        min_obs: 60,
    };
    let bin = StoreyBinSpec::default();
    let cells = run_grid(&base, &[25.0, 75.0], &[0.01, 0.25, 0.5, 0.75, 0.99], 2.0, bin, NullModel::PaperMode, None)
        .unwrap();
    let mut pass = true;
    let mut worst = f64::INFINITY;
    for c in &cells {
        let easy = c.mean_easy_bound.unwrap_or(f64::NAN);
        let storey = c.mean_storey_bound.unwrap_or(f64::NAN);
        let margin = (easy - c.actual_fdr).min(storey - c.actual_fdr);
        pass &= easy >= c.actual_fdr - 0.01 && storey >= c.actual_fdr - 0.01;
        worst = worst.min(margin);
    }
    outcome(pass, format!("{} cells, smallest bound minus actual FDR {:+.2}pp", cells.len(), 100.0 * worst))
}

// 11 ------------------------------------------------------------------------

fn mixed_source() -> Arc<BootstrapSource> {
    let panel = synthetic_source_panel(200, 500, 20, 0.35, 3.32, &mut stream(11, 9999)).unwrap();
    Arc::new(BootstrapSource::new(&panel).unwrap())
}

fn publication_extrapolation() -> Outcome {
    let source = mixed_source();
    let config = SimConfig {
        n_predictors: 10_000,
        n_months: 200,
        gamma_bps: 25.0,
        p_false: 0.5,
        residual_source: ResidualSource::MixedBootstrap {
            source,
            boot_weight: DEFAULT_BOOT_WEIGHT,
            noise_sd: DEFAULT_NOISE_SD,
        },
        seed: 11,
        n_sims: 40,
        min_obs: 60,
    };
    let rule = SelectionRule::staircase(1.0).unwrap();
    let bin = StoreyBinSpec::default();
    let p_grid: Vec<f64> = (1..=8).map(|k| f64::from(k) / 10.0).collect();
    let cells = run_grid(&config, &[25.0, 50.0], &p_grid, 2.0, bin, NullModel::PaperMode, Some(&rule)).unwrap();
    let mut pass = true;
    let mut worst = f64::INFINITY;
    for c in &cells {
        let extrap = c.mean_extrap_bound.unwrap_or(f64::NAN);
        pass &= extrap >= c.actual_fdr - 0.01;
        worst = worst.min(extrap - c.actual_fdr);
    }
    let edge = SimConfig { gamma_bps: 75.0, p_false: 0.9, ..config };
    let e = monte_carlo_fdr(&edge, 2.0, bin, NullModel::PaperMode, Some(&rule)).unwrap();
    outcome(
        pass,
        format!(
            "{} cells, smallest extrapolation minus actual FDR {:+.2}pp; recorded gamma=75 p_false=0.9: extrapolation {} vs actual {}",
            cells.len(),
            100.0 * worst,
            pct(e.mean_extrap_bound.unwrap_or(f64::NAN)),
            pct(e.actual_fdr)
        ),
    )
}

// 12 ------------------------------------------------------------------------

fn correlations(panel: &ReturnPanel, pairs: &[(usize, usize)]) -> Vec<f64> {
    pairs.iter().map(|&(i, j)| pair_correlation(panel, i, j).unwrap()).collect()
}

fn correlation_preservation() -> Outcome {
    let (n, t) = (200, 500);
    let source_panel = synthetic_source_panel(n, t, 20, 0.35, 3.32, &mut stream(12, 0)).unwrap();
    let source = BootstrapSource::new(&source_panel).unwrap();
    let boot = cluster_bootstrap_residuals(&source, n, 10 * t, &mut stream(12, 1)).unwrap();

    let mut rng = stream(12, 2);
    let pairs: Vec<(usize, usize)> = (0..1000)
        .map(|_| loop {
            let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
            if i != j {
                break (i, j);
            }
        })
        .collect();
    let src = correlations(source.residuals(), &pairs);
    let ks = ks_distance(&src, &correlations(&boot, &pairs));

    // Negative control: months drawn independently per predictor destroy the
    // cross-section, and the comparison should notice.
    let res = source.residuals();
    let mut values = Vec::with_capacity(n * 10 * t);
    for i in 0..n {
        let row = res.row(i);
        values.extend((0..10 * t).map(|_| row[rng.random_range(0..t)]));
    }
    let shuffled = ReturnPanel::new(
        (0..n).map(|i| format!("p{i}")).collect(),
        (0..10 * t).map(|k| format!("m{k:06}")).collect(),
        values,
        vec![true; n * 10 * t],
    )
    .unwrap();
    let ks_control = ks_distance(&src, &correlations(&shuffled, &pairs));
    outcome(
        ks < 0.05 && ks_control >= 0.05,
        format!("KS {ks:.4} on 1000 pairs; independent-months control KS {ks_control:.4}"),
    )
}

// 13 ------------------------------------------------------------------------

fn run_fdrb(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_fdrb")).args(args).output().map(|o| o.status.success()).unwrap_or(false)
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("sim.json");
    std::fs::write(
        &config,
        r#"{
  "n_predictors": 300,
  "n_months": 120,
  "gamma_bps": 50,
  "p_false": 0.5,
  "residual_source": {
    "kind": "mixed_bootstrap",
    "source": {"synthetic": {"n_predictors": 100, "n_months": 200, "seed": 3}}
  },
  "seed": 13,
  "n_sims": 40,
  "gamma_grid_bps": [25, 75],
  "p_false_grid": [0.2, 0.8],
  "selection": {"s_bar": 1.0}
}
"#,
    )
    .unwrap();
    let mut parts = Vec::new();
    let mut pass = true;
    for sub in ["simulate", "hlz"] {
        let mut outputs = Vec::new();
        for threads in ["1", "4"] {
            let out = tmp.path().join(format!("{sub}-{threads}"));
            let out_s = out.to_str().unwrap();
            let config_s = config.to_str().unwrap();
            let ok = match sub {
                "simulate" => run_fdrb(&["simulate", "--config", config_s, "--threads", threads, "--out", out_s]),
                _ => run_fdrb(&[
                    "hlz", "--n-sims", "200", "--seed", "5", "--scatter", "2", "--threads", threads, "--out", out_s,
                ]),
            };
            pass &= ok;
            outputs.push(if ok { csv_files(&out) } else { Vec::new() });
        }
        let same = !outputs[0].is_empty() && outputs[0] == outputs[1];
        pass &= same;
        parts.push(format!(
            "{sub}: {} CSV files {}",
            outputs[0].len(),
            if same { "identical" } else { "DIFFER" }
        ));
    }
    outcome(pass, parts.join("; "))
}

// ---------------------------------------------------------------------------

fn main() -> ExitCode {
    let criteria: [Criterion; 13] = [
        ("easy-bound arithmetic", 1, easy_arithmetic),
        ("plug-in shares", 1, table1_plugins),
        ("extrapolated bounds from mean published t", 1, table2_extrapolation),
        ("Storey chain", 1, storey_chain),
        ("liquidity and factor table consistency", 1, table3_consistency),
        ("asymmetric interval Pr(F)", 1, interval_pf),
        ("BH95 hurdle search vs sorted p", 30, bh95_oracle),
        ("Bonferroni hurdle for 296 tests", 1, bonferroni),
        ("HLZ reconciliation", 120, hlz_reconciliation),
        ("bound-validity grid", 600, bound_validity_grid),
        ("publication-simulation extrapolation", 600, publication_extrapolation),
        ("correlation preservation", 60, correlation_preservation),
        ("thread-count determinism", 120, determinism),
    ];
    let mut failed = 0;
    for (k, (name, budget_s, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = std::panic::catch_unwind(run).unwrap_or_else(|_| outcome(false, "panicked"));
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(*budget_s);
        let pass = o.pass && in_time;
        failed += usize::from(!pass);
        println!(
            "criterion {:02} {} {name} [{:.2}s / {budget_s}s{}] {}",
            k + 1,
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            if in_time { "" } else { ", over budget" },
            o.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

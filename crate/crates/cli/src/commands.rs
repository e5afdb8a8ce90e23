use std::path::Path;

use fdrb_core::bounds::{
    easy_bound, easy_bound_from_tstats, exp_extrap_bound, histogram_decomposition, interval_pf_bound, storey_fdr_bound,
    storey_fdr_bound_from_shares, write_decomposition_csv, write_reports_csv, FdrBoundReport, NullModel, StoreyBinSpec,
};
use fdrb_core::control::{bonferroni_hurdle, control_hurdle, ControlRequest};
use fdrb_core::hlz::{
    hlz_fdr_curve, hlz_replicate, write_curve_csv, write_scatter_csv, DiscoveryPopulation, HlzParams,
    HLZ_REFERENCE_POINTS,
};
use fdrb_core::panel::{
    compute_alpha_tstats, compute_tstats, load_factor_csv, load_panel_csv, panel_summary, read_tstat_csv,
    write_summary_csv, FactorPanel, LoadOptions, PanelLayout, TStatSample,
};
use fdrb_core::simkit::{write_grid_csv, SimSpec, SourceSpec, ResidualSourceSpec};
use serde_json::{json, Value};

use crate::args::{
    BonferroniArgs, BoundArgs, ControlArgs, DecomposeArgs, HlzArgs, MethodArg, SimulateArgs, SummaryArgs, ThreadsArg,
    TstatsArgs,
};
use crate::error::{flag_error, CliError, CliResult};
use crate::manifest::{file_digest, Sink};

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> fdrb_core::Result<()>) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn check_hurdle(h: f64) -> CliResult<()> {
    if h.is_finite() && h >= 0.0 {
        Ok(())
    } else {
        Err(CliError::usage(format!("hurdle must be finite and non-negative, got {h}")))
    }
}

fn input(path: &Path) -> CliResult<Value> {
    let digest = if path.exists() { file_digest(path)? } else { String::new() };
    Ok(json!({ "path": path.display().to_string(), "sha256": digest }))
}

/// Factor names for a model preset, matched case-insensitively against the
/// factor file; anything else is read as a comma-separated list.
fn model_columns(model: &str, factors: &FactorPanel) -> CliResult<Vec<String>> {
    let wanted: Vec<&str> = match model.to_ascii_lowercase().as_str() {
        "capm" => vec!["mkt"],
        "ff3" => vec!["mkt", "smb", "hml"],
        "ff5" => vec!["mkt", "smb", "hml", "rmw", "cma"],
        _ => return Ok(model.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()),
    };
    wanted
        .iter()
        .map(|&w| {
            let aliases: &[&str] = if w == "mkt" { &["mkt", "mkt_rf", "mktrf", "mkt-rf"] } else { &[w] };
            factors
                .factor_names()
                .iter()
                .find(|n| aliases.contains(&n.to_ascii_lowercase().as_str()))
                .cloned()
                .ok_or_else(|| CliError::Core(fdrb_core::Error::BadHeader(format!("factor file has no `{w}` column"))))
        })
        .collect()
}

pub fn tstats(args: &TstatsArgs) -> CliResult<()> {
    if args.min_obs < 2 {
        return Err(CliError::usage("--min-obs must be at least 2"));
    }
    let options = LoadOptions { delimiter: args.delimiter, layout: PanelLayout::from(args.layout) };
    let loaded = load_panel_csv(&args.panel, &options)?;
    let (result, label) = match (&args.factors, &args.model) {
        (Some(fpath), Some(model)) => {
            let factors = load_factor_csv(fpath, args.delimiter)?;
            let cols = model_columns(model, &factors)?;
            let refs: Vec<&str> = cols.iter().map(String::as_str).collect();
            (compute_alpha_tstats(&loaded.panel, &factors, &refs, args.min_obs)?, model.clone())
        }
        _ => (compute_tstats(&loaded.panel, args.min_obs)?, "raw".to_string()),
    };

    let sample = &result.sample;
    let main = csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["predictor_id", "abs_t", "n_obs", "model"])?;
        for i in 0..sample.len() {
            w.write_record([
                sample.predictor_ids[i].clone(),
                sample.abs_t[i].to_string(),
                sample.n_obs_used[i].to_string(),
                label.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    let excluded = csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["predictor_id", "reason"])?;
        for e in &result.excluded {
            w.write_record([e.predictor_id.clone(), e.reason.to_string()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    for e in &result.excluded {
        eprintln!("excluded {}: {}", e.predictor_id, e.reason);
    }

    let mut sink = Sink::new(args.out.out.clone())?;
    sink.emit("tstats.csv", &main, true)?;
    sink.emit("tstats_excluded.csv", &excluded, false)?;
    let config = json!({
        "panel": input(&args.panel)?,
        "layout": format!("{:?}", options.layout).to_lowercase(),
        "delimiter": (args.delimiter as char).to_string(),
        "factors": args.factors.as_deref().map(input).transpose()?,
        "model": args.model,
        "min_obs": args.min_obs,
        "load_report": {
            "rows_read": loaded.report.rows_read,
            "unparseable_cells": loaded.report.unparseable_cells,
            "absent_cells": loaded.report.absent_cells,
        },
    });
    sink.finish("tstats", config, None)
}

pub fn summary(args: &SummaryArgs) -> CliResult<()> {
    for &h in &args.hurdles {
        check_hurdle(h)?;
    }
    let sample = read_tstat_csv(&args.tstats)?;
    let rows = panel_summary(&sample, &args.hurdles, &args.bins).map_err(flag_error)?;
    let bytes = csv_bytes(|b| write_summary_csv(&rows, b))?;
    let mut sink = Sink::new(args.out.out.clone())?;
    sink.emit("summary.csv", &bytes, true)?;
    let config = json!({ "tstats": input(&args.tstats)?, "hurdles": args.hurdles, "bins": args.bins });
    sink.finish("summary", config, None)
}

fn need(v: Option<f64>, flag: &str, method: &str) -> CliResult<f64> {
    v.ok_or_else(|| CliError::usage(format!("--method {method} needs --tstats or {flag}")))
}

fn bound_report(args: &BoundArgs, sample: Option<&TStatSample>) -> CliResult<FdrBoundReport> {
    let null = NullModel::from(args.null);
    let bin = StoreyBinSpec::new(args.bin.0, args.bin.1).map_err(flag_error)?;
    check_hurdle(args.hurdle)?;
    let share = |v: f64, flag: &str| -> CliResult<f64> {
        if (0.0..=1.0).contains(&v) {
            Ok(v)
        } else {
            Err(CliError::usage(format!("{flag} must lie in [0, 1], got {v}")))
        }
    };
    Ok(match (args.method, sample) {
        (MethodArg::Easy, Some(s)) => easy_bound_from_tstats(s, args.hurdle, null)?,
        (MethodArg::Easy, None) => {
            easy_bound(share(need(args.share_above, "--share-above", "easy")?, "--share-above")?, args.hurdle, null)?
        }
        (MethodArg::Storey, Some(s)) => storey_fdr_bound(s, args.hurdle, bin, null)?,
        (MethodArg::Storey, None) => storey_fdr_bound_from_shares(
            share(need(args.share_above, "--share-above", "storey")?, "--share-above")?,
            share(need(args.bin_share, "--bin-share", "storey")?, "--bin-share")?,
            args.hurdle,
            bin,
            null,
        )?,
        (MethodArg::Extrap, Some(s)) => {
            let above: Vec<f64> = s.abs_t.iter().copied().filter(|&t| t > args.hurdle).collect();
            if above.is_empty() {
                return Err(fdrb_core::Error::NoDiscoveries { hurdle: args.hurdle }.into());
            }
            exp_extrap_bound(above.iter().sum::<f64>() / above.len() as f64, args.hurdle, null)?
        }
        (MethodArg::Extrap, None) => {
            let m = need(args.mean_pub_t, "--mean-pub-t", "extrap")?;
            if !m.is_finite() {
                return Err(CliError::usage("--mean-pub-t must be finite"));
            }
            exp_extrap_bound(m, args.hurdle, null)?
        }
        (MethodArg::Interval, s) => {
            let (lo, hi) = args.interval.ok_or_else(|| CliError::usage("--method interval needs --interval lo,hi"))?;
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(CliError::usage(format!("interval [{lo}, {hi}] is not well ordered")));
            }
            let share_in = match s {
                // A |t| file only identifies shares of symmetric intervals.
                Some(s) if lo == -hi => s.count_in(0.0, hi) as f64 / s.len() as f64,
                Some(_) => {
                    return Err(CliError::usage(
                        "a t-stat file holds |t| only; use a symmetric --interval or pass --share-in",
                    ))
                }
                None => share(need(args.share_in, "--share-in", "interval")?, "--share-in")?,
            };
            interval_pf_bound(share_in, lo, hi, null)?
        }
    })
}

pub fn bound(args: &BoundArgs) -> CliResult<()> {
    let sample = args.tstats.as_deref().map(read_tstat_csv).transpose()?;
    let report = bound_report(args, sample.as_ref())?;
    eprintln!("{} bound: {}", report.method.label(), report.display_percent());
    let bytes = csv_bytes(|b| write_reports_csv(std::slice::from_ref(&report), b))?;
    let mut sink = Sink::new(args.out.out.clone())?;
    sink.emit("bound.csv", &bytes, true)?;
    let config = json!({
        "method": format!("{:?}", args.method).to_lowercase(),
        "tstats": args.tstats.as_deref().map(input).transpose()?,
        "share_above": args.share_above,
        "bin_share": args.bin_share,
        "mean_pub_t": args.mean_pub_t,
        "share_in": args.share_in,
        "hurdle": args.hurdle,
        "bin": args.bin,
        "interval": args.interval,
        "null": NullModel::from(args.null).label(),
    });
    sink.finish("bound", config, None)
}

pub fn decompose(args: &DecomposeArgs) -> CliResult<()> {
    if !(args.bin_width.is_finite() && args.bin_width > 0.0) {
        return Err(CliError::usage("--bin-width must be positive"));
    }
    check_hurdle(args.hurdle)?;
    let sample = read_tstat_csv(&args.tstats)?;
    let null = NullModel::from(args.null);
    let d = histogram_decomposition(&sample, null, args.scaling.into(), args.bin_width, args.hurdle)?;
    let bytes = csv_bytes(|b| write_decomposition_csv(&d, b))?;
    let mut sink = Sink::new(args.out.out.clone())?;
    sink.emit("decomposition.csv", &bytes, true)?;
    let config = json!({
        "tstats": input(&args.tstats)?,
        "scaling": format!("{:?}", args.scaling).to_lowercase(),
        "bin_width": args.bin_width,
        "hurdle": args.hurdle,
        "null": (null.label()),
    });
    sink.finish("decompose", config, None)
}

pub fn control(args: &ControlArgs) -> CliResult<()> {
    let null = NullModel::from(args.null);
    let request = ControlRequest::new(args.q_star, args.method.into(), null).map_err(flag_error)?;
    let sample = read_tstat_csv(&args.tstats)?;
    let r = control_hurdle(&sample, &request)?;
    let main = csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["method", "q_star", "penalty", "hurdle", "n_discoveries"])?;
        w.write_record([
            r.method.label().to_string(),
            r.q_star.to_string(),
            r.penalty.to_string(),
            r.hurdle.map_or_else(|| "NA".to_string(), |h| h.to_string()),
            r.n_discoveries().to_string(),
        ])?;
        w.flush()?;
        Ok(())
    })?;
    let discoveries = csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["predictor_id", "abs_t"])?;
        for &i in &r.discoveries {
            w.write_record([sample.predictor_ids[i].clone(), sample.abs_t[i].to_string()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    if r.hurdle.is_none() {
        eprintln!("no hurdle controls the FDR at q* = {}", r.q_star);
    }
    let mut sink = Sink::new(args.out.out.clone())?;
    sink.emit("control.csv", &main, true)?;
    sink.emit("discoveries.csv", &discoveries, false)?;
    let config = json!({
        "tstats": input(&args.tstats)?,
        "method": r.method.label(),
        "q_star": args.q_star,
        "null": (null.label()),
    });
    sink.finish("control", config, None)
}

pub fn bonferroni(args: &BonferroniArgs) -> CliResult<()> {
    let null = NullModel::from(args.null);
    let h = bonferroni_hurdle(args.m, args.level, null).map_err(flag_error)?;
    let bytes = csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["m", "level", "null", "hurdle"])?;
        w.write_record([args.m.to_string(), args.level.to_string(), null.label().to_string(), h.to_string()])?;
        w.flush()?;
        Ok(())
    })?;
    let mut sink = Sink::new(args.out.out.clone())?;
    sink.emit("bonferroni.csv", &bytes, true)?;
    sink.finish("bonferroni", json!({ "m": args.m, "level": args.level, "null": (null.label()) }), None)
}

fn with_threads<T: Send>(threads: &ThreadsArg, f: impl FnOnce() -> CliResult<T> + Send) -> CliResult<T> {
    match threads.threads {
        None => f(),
        Some(0) => Err(CliError::usage("--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::usage(format!("cannot start {n} threads: {e}")))?
            .install(f),
    }
}

fn source_input(spec: &SourceSpec, base: &Path) -> CliResult<Value> {
    Ok(match spec {
        SourceSpec::Csv { path, .. } => {
            let p = if path.is_absolute() { path.clone() } else { base.join(path) };
            json!({ "sha256": if p.exists() { file_digest(&p)? } else { String::new() } })
        }
        SourceSpec::Synthetic { .. } => Value::Null,
    })
}

pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::Core(fdrb_core::Error::MissingFile(args.config.clone())),
        _ => CliError::Io(e),
    })?;
    let mut spec: SimSpec = serde_json::from_str(&text).map_err(|e| CliError::usage(format!("config: {e}")))?;
    if let Some(g) = &args.gamma_bps {
        spec.gamma_grid_bps = Some(g.clone());
    }
    if let Some(p) = &args.p_false {
        spec.p_false_grid = Some(p.clone());
    }
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let Some(n) = args.n_sims {
        spec.n_sims = n;
    }
    if let Some(h) = args.hurdle {
        check_hurdle(h)?;
        spec.hurdle = h;
    }
    if let Some((lo, hi)) = args.bin {
        spec.bin = StoreyBinSpec::new(lo, hi).map_err(flag_error)?;
    }
    if let Some(n) = args.null {
        spec.null = n.into();
    }
    check_hurdle(spec.hurdle)?;
    let base = args.config.parent().map(Path::to_path_buf).unwrap_or_default();

    let cells = with_threads(&args.threads, || {
        spec.run(&base).map_err(|e| match e {
            fdrb_core::Error::InvalidArgument(m) => CliError::usage(m),
            other => other.into(),
        })
    })?;
    let bytes = csv_bytes(|b| write_grid_csv(&cells, b))?;
    let mut sink = Sink::new(args.out.out.clone())?;
    sink.emit("grid.csv", &bytes, true)?;
    let source = match &spec.residual_source {
        ResidualSourceSpec::ClusterBootstrap { source } | ResidualSourceSpec::MixedBootstrap { source, .. } => {
            source_input(source, &base)?
        }
        ResidualSourceSpec::Synthetic { .. } => Value::Null,
    };
    let config = json!({ "spec": serde_json::to_value(&spec)?, "source_input": source });
    sink.finish("simulate", config, Some(spec.seed))
}

pub fn hlz(args: &HlzArgs) -> CliResult<()> {
    let mut params = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => CliError::Core(fdrb_core::Error::MissingFile(path.clone())),
                _ => CliError::Io(e),
            })?;
            serde_json::from_str::<HlzParams>(&text).map_err(|e| CliError::usage(format!("config: {e}")))?
        }
        None => HlzParams::default(),
    };
    macro_rules! set {
        ($($f:ident),*) => { $( if let Some(v) = args.$f { params.$f = v; } )* };
    }
    set!(p0, lambda_bps, se_bps, rho, n_factors, s_bar);
    params.validate().map_err(flag_error)?;
    if args.n_sims == 0 {
        return Err(CliError::usage("--n-sims must be positive"));
    }
    for &h in &args.hurdles {
        check_hurdle(h)?;
    }
    if args.scatter > 0 && args.out.out.is_none() {
        return Err(CliError::usage("--scatter needs --out"));
    }
    let population = DiscoveryPopulation::from(args.population);

    let reference_hurdles: Vec<f64> = HLZ_REFERENCE_POINTS.iter().map(|p| p.0).collect();
    let (curve, reference) = with_threads(&args.threads, || {
        let curve = hlz_fdr_curve(&params, &args.hurdles, args.n_sims, args.seed, population)?;
        let reference = hlz_fdr_curve(&params, &reference_hurdles, args.n_sims, args.seed, population)?;
        Ok((curve, reference))
    })?;

    let mut sink = Sink::new(args.out.out.clone())?;
    sink.emit("hlz_curve.csv", &csv_bytes(|b| write_curve_csv(&curve, b))?, true)?;
    let reference_bytes = csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["hurdle", "reference_fdr", "mean_fdr", "mean_discoveries", "mean_false_discoveries"])?;
        for (row, (_, want)) in reference.iter().zip(HLZ_REFERENCE_POINTS) {
            w.write_record([
                row.hurdle.to_string(),
                want.to_string(),
                row.mean_fdr.to_string(),
                row.mean_discoveries.to_string(),
                row.mean_false_discoveries.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    sink.emit("hlz_reference.csv", &reference_bytes, false)?;
    for r in 0..args.scatter {
        let draw = hlz_replicate(&params, args.seed, r)?;
        sink.emit(&format!("hlz_scatter_rep{r}.csv"), &csv_bytes(|b| write_scatter_csv(&draw, b))?, false)?;
    }
    let config = json!({
        "params": serde_json::to_value(params)?,
        "hurdles": args.hurdles,
        "n_sims": args.n_sims,
        "population": population.label(),
        "scatter": args.scatter,
    });
    sink.finish("hlz", config, Some(args.seed))
}

//! Monte Carlo checks of the FDR bounds on panels with known truth.
//!
//! A replication draws which predictors are false, builds residual returns
//! (cluster bootstrap, bootstrap mixed with noise, or synthetic block-correlated
//! Gaussian), adds `mu_i` (0 for false predictors, `gamma` otherwise), computes
//! t-stats, optionally applies publication selection, and records the realized
//! false discovery proportion next to each bound.
//!
//! Truth labels are i.i.d. Bernoulli(p_false), so the realized false count is
//! random around `N * p_false`.
//!
//! Units: returns and sds are percent per month, `gamma_bps` is basis points
//! per month.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{easy_bound_from_tstats, exp_extrap_bound, storey_fdr_bound, NullModel, StoreyBinSpec};
use crate::error::{invalid, Error, Result};
use crate::panel::{
    compute_tstats, load_panel_csv, Exclusion, ExclusionReason, LoadOptions, PanelLayout, ReturnPanel, TStatSample,
    DEFAULT_MIN_OBS,
};
use crate::rng::{stream, SimRng};

pub const DEFAULT_BLOCK_SIZE: usize = 20;
pub const DEFAULT_WITHIN_BLOCK_CORR: f64 = 0.35;
pub const DEFAULT_IDIO_SD: f64 = 3.32;
pub const DEFAULT_BOOT_WEIGHT: f64 = 0.65;
pub const DEFAULT_NOISE_SD: f64 = 3.32;

/// A source panel prepared for bootstrapping: each predictor de-meaned over
/// its observed months, predictors with no observations dropped.
#[derive(Debug, Clone)]
pub struct BootstrapSource {
    panel: ReturnPanel,
    excluded: Vec<Exclusion>,
}

impl BootstrapSource {
    pub fn new(source: &ReturnPanel) -> Result<Self> {
        let t = source.n_months();
        let mut values = Vec::with_capacity(source.n_predictors() * t);
        let mut observed = Vec::with_capacity(source.n_predictors() * t);
        let mut excluded = Vec::new();
        for i in 0..source.n_predictors() {
            let obs = source.observed_row(i);
            let n_obs = obs.iter().filter(|&&o| o).count();
            if n_obs == 0 {
                excluded.push(Exclusion {
                    panel_index: i,
                    predictor_id: source.predictor_ids()[i].clone(),
                    reason: ExclusionReason::TooFewObservations { observed: 0, min_obs: 1 },
                });
                continue;
            }
            let row = source.row(i);
            let mean = row.iter().zip(obs).filter(|(_, &o)| o).map(|(v, _)| v).sum::<f64>() / n_obs as f64;
            values.extend(row.iter().zip(obs).map(|(&v, &o)| if o { v - mean } else { 0.0 }));
            observed.extend_from_slice(obs);
        }
        let n = source.n_predictors() - excluded.len();
        if n == 0 {
            return Err(Error::EmptySample);
        }
        Ok(Self { panel: ReturnPanel::from_dense(n, t, values, observed), excluded })
    }

    /// The de-meaned residual panel.
    pub fn residuals(&self) -> &ReturnPanel {
        &self.panel
    }

    /// Source predictors dropped for having no observed months.
    pub fn excluded(&self) -> &[Exclusion] {
        &self.excluded
    }

    pub fn n_predictors(&self) -> usize {
        self.panel.n_predictors()
    }

    pub fn n_months(&self) -> usize {
        self.panel.n_months()
    }
}

#[derive(Debug, Clone)]
pub enum ResidualSource {
    ClusterBootstrap { source: Arc<BootstrapSource> },
    MixedBootstrap { source: Arc<BootstrapSource>, boot_weight: f64, noise_sd: f64 },
    Synthetic { block_size: usize, within_block_corr: f64, idio_sd: f64 },
}

impl ResidualSource {
    pub fn synthetic_default() -> Self {
        ResidualSource::Synthetic {
            block_size: DEFAULT_BLOCK_SIZE,
            within_block_corr: DEFAULT_WITHIN_BLOCK_CORR,
            idio_sd: DEFAULT_IDIO_SD,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub n_predictors: usize,
    pub n_months: usize,
    pub gamma_bps: f64,
    pub p_false: f64,
    pub residual_source: ResidualSource,
    pub seed: u64,
    pub n_sims: usize,
    /// Minimum observed months for a t-stat.
    pub min_obs: usize,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_predictors == 0 || self.n_months < 2 {
            return Err(invalid("simulation needs at least one predictor and two months"));
        }
        if self.n_sims == 0 {
            return Err(invalid("n_sims must be positive"));
        }
        if !(0.0..=1.0).contains(&self.p_false) {
            return Err(invalid(format!("p_false must lie in [0, 1], got {}", self.p_false)));
        }
        if !self.gamma_bps.is_finite() {
            return Err(invalid("gamma_bps must be finite"));
        }
        if self.min_obs < 2 || self.min_obs > self.n_months {
            return Err(invalid(format!(
                "min_obs must lie in [2, n_months = {}], got {}",
                self.n_months, self.min_obs
            )));
        }
        match &self.residual_source {
            ResidualSource::ClusterBootstrap { source } => {
                if self.n_predictors > source.n_predictors() {
                    return Err(invalid(format!(
                        "cluster bootstrap reuses the source cross-section: n_predictors {} exceeds the {} usable source predictors",
                        self.n_predictors,
                        source.n_predictors()
                    )));
                }
            }
            ResidualSource::MixedBootstrap { boot_weight, noise_sd, .. } => check_mix(*boot_weight, *noise_sd)?,
            ResidualSource::Synthetic { block_size, within_block_corr, idio_sd } => {
                check_synthetic(*block_size, *within_block_corr, *idio_sd)?
            }
        }
        Ok(())
    }
}

fn check_mix(boot_weight: f64, noise_sd: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&boot_weight) {
        return Err(invalid(format!("boot_weight must lie in [0, 1], got {boot_weight}")));
    }
    if !(noise_sd.is_finite() && noise_sd >= 0.0) {
        return Err(invalid(format!("noise_sd must be non-negative, got {noise_sd}")));
    }
    Ok(())
}

fn check_synthetic(block_size: usize, corr: f64, sd: f64) -> Result<()> {
    if block_size == 0 {
        return Err(invalid("block_size must be at least 1"));
    }
    if !(0.0..1.0).contains(&corr) {
        return Err(invalid(format!("within_block_corr must lie in [0, 1), got {corr}")));
    }
    if !(sd.is_finite() && sd >= 0.0) {
        return Err(invalid(format!("idio_sd must be non-negative, got {sd}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TruthLabels {
    pub is_false: Vec<bool>,
}

impl TruthLabels {
    pub fn len(&self) -> usize {
        self.is_false.len()
    }

    pub fn is_empty(&self) -> bool {
        self.is_false.is_empty()
    }

    pub fn n_false(&self) -> usize {
        self.is_false.iter().filter(|&&f| f).count()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self { is_false: indices.iter().map(|&i| self.is_false[i]).collect() }
    }
}

/// Publication probability as a step function of |t|.
///
/// Segment `k` holds |t| with exactly `k` thresholds strictly below it, so a
/// value equal to a cutpoint falls in the lower segment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionRule {
    thresholds: Vec<f64>,
    probabilities: Vec<f64>,
    s_bar: f64,
}

pub const STAIRCASE_THRESHOLDS: [f64; 2] = [1.96, 2.57];

impl SelectionRule {
    /// Probability 0 below 1.96, `0.5 * s_bar` on (1.96, 2.57], `s_bar` above.
    pub fn staircase(s_bar: f64) -> Result<Self> {
        if !(s_bar > 0.0 && s_bar <= 1.0) {
            return Err(invalid(format!("s_bar must lie in (0, 1], got {s_bar}")));
        }
        Self::new(STAIRCASE_THRESHOLDS.to_vec(), vec![0.0, 0.5 * s_bar, s_bar])
    }

    pub fn new(thresholds: Vec<f64>, probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.len() != thresholds.len() + 1 {
            return Err(invalid(format!(
                "{} thresholds need {} probabilities, got {}",
                thresholds.len(),
                thresholds.len() + 1,
                probabilities.len()
            )));
        }
        if thresholds.iter().any(|t| !t.is_finite()) || thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("selection thresholds must be finite and strictly increasing"));
        }
        if probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(invalid("selection probabilities must lie in [0, 1]"));
        }
        if probabilities.windows(2).any(|w| w[0] > w[1]) {
            return Err(invalid("selection probabilities must be non-decreasing in |t|"));
        }
        let s_bar = *probabilities.last().unwrap();
        if s_bar == 0.0 {
            return Err(invalid("a selection rule that never selects is not allowed"));
        }
        Ok(Self { thresholds, probabilities, s_bar })
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn s_bar(&self) -> f64 {
        self.s_bar
    }

    pub fn probability(&self, abs_t: f64) -> f64 {
        let segment = self.thresholds.iter().filter(|&&c| abs_t > c).count();
        self.probabilities[segment]
    }
}

impl Default for SelectionRule {
    fn default() -> Self {
        Self::staircase(1.0).expect("default staircase is valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FdpResult {
    pub n_discoveries: usize,
    pub n_false_discoveries: usize,
    pub fdp: f64,
}

/// Truth labels and expected returns in percent per month.
pub fn make_truth_and_mu(config: &SimConfig, rng: &mut SimRng) -> (TruthLabels, Vec<f64>) {
    let gamma = config.gamma_bps / 100.0;
    let is_false: Vec<bool> = (0..config.n_predictors).map(|_| rng.random::<f64>() < config.p_false).collect();
    let mu = is_false.iter().map(|&f| if f { 0.0 } else { gamma }).collect();
    (TruthLabels { is_false }, mu)
}

/// Residuals from resampled calendar months: every predictor takes its own
/// de-meaned return in the same drawn month, preserving the cross-section.
pub fn cluster_bootstrap_residuals(
    source: &BootstrapSource,
    n_predictors: usize,
    n_months: usize,
    rng: &mut SimRng,
) -> Result<ReturnPanel> {
    if n_predictors > source.n_predictors() {
        return Err(invalid(format!(
            "n_predictors {n_predictors} exceeds the {} usable source predictors",
            source.n_predictors()
        )));
    }
    let months = draw_months(source, n_months, rng);
    Ok(cluster_from_draws(source, n_predictors, &months))
}

fn draw_months(source: &BootstrapSource, n_months: usize, rng: &mut SimRng) -> Vec<usize> {
    (0..n_months).map(|_| rng.random_range(0..source.n_months())).collect()
}

pub(crate) fn cluster_from_draws(source: &BootstrapSource, n_predictors: usize, months: &[usize]) -> ReturnPanel {
    let res = &source.panel;
    let t = months.len();
    let mut values = Vec::with_capacity(n_predictors * t);
    let mut observed = Vec::with_capacity(n_predictors * t);
    for i in 0..n_predictors {
        let (row, obs) = (res.row(i), res.observed_row(i));
        for &k in months {
            values.push(row[k]);
            observed.push(obs[k]);
        }
    }
    ReturnPanel::from_dense(n_predictors, t, values, observed)
}

/// `boot_weight * bootstrap residual + (1 - boot_weight) * N(0, noise_sd)`.
/// Predictor identities are drawn with replacement from the source, months
/// are drawn once per simulated month and shared across predictors.
pub fn mixed_bootstrap_residuals(
    source: &BootstrapSource,
    n_predictors: usize,
    n_months: usize,
    boot_weight: f64,
    noise_sd: f64,
    rng: &mut SimRng,
) -> Result<ReturnPanel> {
    check_mix(boot_weight, noise_sd)?;
    if n_predictors == 0 || n_months == 0 {
        return Err(invalid("residual panel needs at least one predictor and one month"));
    }
    let identities: Vec<usize> = (0..n_predictors).map(|_| rng.random_range(0..source.n_predictors())).collect();
    let months = draw_months(source, n_months, rng);
    let noise_weight = 1.0 - boot_weight;
    Ok(mixed_from_draws(source, &identities, &months, boot_weight, || {
        let d: f64 = StandardNormal.sample(rng);
        noise_weight * noise_sd * d
    }))
}

pub(crate) fn mixed_from_draws<F: FnMut() -> f64>(
    source: &BootstrapSource,
    identities: &[usize],
    months: &[usize],
    boot_weight: f64,
    mut noise: F,
) -> ReturnPanel {
    let res = &source.panel;
    let (n, t) = (identities.len(), months.len());
    let mut values = Vec::with_capacity(n * t);
    let mut observed = Vec::with_capacity(n * t);
    for &src in identities {
        let (row, obs) = (res.row(src), res.observed_row(src));
        for &k in months {
            values.push(boot_weight * row[k] + noise());
            observed.push(obs[k]);
        }
    }
    ReturnPanel::from_dense(n, t, values, observed)
}

/// Gaussian returns, equicorrelated within consecutive blocks of
/// `block_size` predictors and independent across blocks, each with sd
/// `idio_sd`.
pub fn synthetic_source_panel(
    n_predictors: usize,
    n_months: usize,
    block_size: usize,
    within_block_corr: f64,
    idio_sd: f64,
    rng: &mut SimRng,
) -> Result<ReturnPanel> {
    check_synthetic(block_size, within_block_corr, idio_sd)?;
    if n_predictors == 0 || n_months == 0 {
        return Err(invalid("synthetic panel needs at least one predictor and one month"));
    }
    let n_blocks = n_predictors.div_ceil(block_size);
    let common: Vec<f64> = (0..n_blocks * n_months).map(|_| StandardNormal.sample(rng)).collect();
    let (a, b) = (within_block_corr.sqrt(), (1.0 - within_block_corr).sqrt());
    let mut values = Vec::with_capacity(n_predictors * n_months);
    for i in 0..n_predictors {
        let z = &common[(i / block_size) * n_months..(i / block_size + 1) * n_months];
        for &zk in z {
            let e: f64 = StandardNormal.sample(rng);
            values.push(idio_sd * (a * zk + b * e));
        }
    }
    Ok(ReturnPanel::from_dense(n_predictors, n_months, values, vec![true; n_predictors * n_months]))
}

/// `r = mu_i + residual`, cell by cell, keeping the residual mask.
pub fn assemble_panel(mu: &[f64], residuals: ReturnPanel) -> Result<ReturnPanel> {
    if mu.len() != residuals.n_predictors() {
        return Err(Error::DimensionMismatch(format!(
            "{} expected returns for {} residual rows",
            mu.len(),
            residuals.n_predictors()
        )));
    }
    let t = residuals.n_months();
    let n = residuals.n_predictors();
    let (_, _, mut values, observed) = residuals.into_parts();
    for (i, &m) in mu.iter().enumerate() {
        for (v, &o) in values[i * t..(i + 1) * t].iter_mut().zip(&observed[i * t..(i + 1) * t]) {
            if o {
                *v += m;
            }
        }
    }
    Ok(ReturnPanel::from_dense(n, t, values, observed))
}

/// Indices (ascending) of predictors selected for publication. One uniform
/// is drawn per predictor whatever its segment.
pub fn apply_selection(tstats: &TStatSample, rule: &SelectionRule, rng: &mut SimRng) -> Vec<usize> {
    tstats
        .abs_t
        .iter()
        .enumerate()
        .filter_map(|(i, &t)| {
            let u: f64 = rng.random();
            (u < rule.probability(t)).then_some(i)
        })
        .collect()
}

/// Discoveries are |t| > hurdle; FDP is false discoveries over discoveries,
/// or 0 when nothing is discovered.
pub fn realized_fdp(labels: &TruthLabels, tstats: &TStatSample, hurdle: f64) -> Result<FdpResult> {
    if labels.len() != tstats.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} truth labels for {} t-stats",
            labels.len(),
            tstats.len()
        )));
    }
    let (mut r, mut f) = (0usize, 0usize);
    for (&t, &is_false) in tstats.abs_t.iter().zip(&labels.is_false) {
        if t > hurdle {
            r += 1;
            f += usize::from(is_false);
        }
    }
    Ok(fdp_from_counts(r, f))
}

pub fn fdp_from_counts(n_discoveries: usize, n_false_discoveries: usize) -> FdpResult {
    let fdp = if n_discoveries == 0 { 0.0 } else { n_false_discoveries as f64 / n_discoveries as f64 };
    FdpResult { n_discoveries, n_false_discoveries, fdp }
}

/// Everything produced by one replication.
#[derive(Debug, Clone)]
pub struct Replication {
    /// Labels aligned with `sample`.
    pub labels: TruthLabels,
    /// The evaluated t-stats: every computable one, or the selected subset.
    pub sample: TStatSample,
    /// Predictors excluded from the t-stat computation.
    pub n_excluded: usize,
    pub fdp: FdpResult,
    pub outcome: ReplicationOutcome,
}

/// Per-replication numbers that feed the grid aggregates. Bounds are capped
/// at 1 and `None` when undefined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicationOutcome {
    pub fdp: f64,
    pub easy: Option<f64>,
    pub storey: Option<f64>,
    pub extrap: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundSettings<'a> {
    pub hurdle: f64,
    pub bin: StoreyBinSpec,
    pub null: NullModel,
    pub selection: Option<&'a SelectionRule>,
}

fn undefined_or<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(e) if e.is_infeasible() || matches!(e, Error::EmptySample) => Ok(None),
        Err(e) => Err(e),
    }
}

fn residuals_for(config: &SimConfig, rng: &mut SimRng) -> Result<ReturnPanel> {
    match &config.residual_source {
        ResidualSource::ClusterBootstrap { source } => {
            cluster_bootstrap_residuals(source, config.n_predictors, config.n_months, rng)
        }
        ResidualSource::MixedBootstrap { source, boot_weight, noise_sd } => {
            mixed_bootstrap_residuals(source, config.n_predictors, config.n_months, *boot_weight, *noise_sd, rng)
        }
        ResidualSource::Synthetic { block_size, within_block_corr, idio_sd } => synthetic_source_panel(
            config.n_predictors,
            config.n_months,
            *block_size,
            *within_block_corr,
            *idio_sd,
            rng,
        ),
    }
}

/// Runs replication `index` of `config`. Its draws come from stream `index`
/// of the master seed, so the result does not depend on scheduling.
pub fn replicate(config: &SimConfig, index: usize, settings: &BoundSettings<'_>) -> Result<Replication> {
    let mut rng = stream(config.seed, index as u64);
    let (labels, mu) = make_truth_and_mu(config, &mut rng);
    let panel = assemble_panel(&mu, residuals_for(config, &mut rng)?)?;
    let tstats = compute_tstats(&panel, config.min_obs)?;
    let computed_labels = labels.subset(&tstats.panel_index);
    let (sample, labels) = match settings.selection {
        Some(rule) => {
            let chosen = apply_selection(&tstats.sample, rule, &mut rng);
            (tstats.sample.subset(&chosen, "selected"), computed_labels.subset(&chosen))
        }
        None => (tstats.sample, computed_labels),
    };
    let fdp = realized_fdp(&labels, &sample, settings.hurdle)?;

    let easy = undefined_or(easy_bound_from_tstats(&sample, settings.hurdle, settings.null))?.map(|r| r.bound_capped);
    let storey = undefined_or(storey_fdr_bound(&sample, settings.hurdle, settings.bin, settings.null))?
        .map(|r| r.bound_capped);
    let extrap = if settings.selection.is_some() {
        let above: Vec<f64> = sample.abs_t.iter().copied().filter(|&t| t > settings.hurdle).collect();
        if above.is_empty() {
            None
        } else {
            let mean_pub_t = above.iter().sum::<f64>() / above.len() as f64;
            undefined_or(exp_extrap_bound(mean_pub_t, settings.hurdle, settings.null))?.map(|r| r.bound_capped)
        }
    } else {
        None
    };

    Ok(Replication {
        labels,
        sample,
        n_excluded: tstats.excluded.len(),
        fdp,
        outcome: ReplicationOutcome { fdp: fdp.fdp, easy, storey, extrap },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCellReport {
    pub gamma_bps: f64,
    pub p_false: f64,
    pub hurdle: f64,
    pub n_sims: usize,
    /// Mean FDP over all replications.
    pub actual_fdr: f64,
    /// Means over replications where the bound is defined.
    pub mean_easy_bound: Option<f64>,
    pub mean_storey_bound: Option<f64>,
    /// Only computed when publication selection is active.
    pub mean_extrap_bound: Option<f64>,
    /// Share of defined replications with bound >= FDP.
    pub cover_rate_easy: Option<f64>,
    pub cover_rate_storey: Option<f64>,
    pub cover_rate_extrap: Option<f64>,
    /// Replications with no discoveries, where the easy and Storey bounds
    /// are undefined.
    pub n_undefined: usize,
    pub n_undefined_extrap: usize,
}

struct BoundAccumulator {
    sum: f64,
    covered: usize,
    defined: usize,
}

impl BoundAccumulator {
    fn new() -> Self {
        Self { sum: 0.0, covered: 0, defined: 0 }
    }

    fn push(&mut self, bound: Option<f64>, fdp: f64) {
        if let Some(b) = bound {
            self.sum += b;
            self.defined += 1;
            self.covered += usize::from(b >= fdp);
        }
    }

    fn mean(&self) -> Option<f64> {
        (self.defined > 0).then(|| self.sum / self.defined as f64)
    }

    fn cover_rate(&self) -> Option<f64> {
        (self.defined > 0).then(|| self.covered as f64 / self.defined as f64)
    }
}

/// Per-replication outcomes, in replication order.
pub fn replication_outcomes(config: &SimConfig, settings: &BoundSettings<'_>) -> Result<Vec<ReplicationOutcome>> {
    config.validate()?;
    (0..config.n_sims)
        .into_par_iter()
        .map(|r| replicate(config, r, settings).map(|rep| rep.outcome))
        .collect()
}

/// Folds outcomes in order into a grid cell.
pub fn aggregate(config: &SimConfig, hurdle: f64, outcomes: &[ReplicationOutcome]) -> GridCellReport {
    let mut fdp_sum = 0.0;
    let (mut easy, mut storey, mut extrap) = (BoundAccumulator::new(), BoundAccumulator::new(), BoundAccumulator::new());
    for o in outcomes {
        fdp_sum += o.fdp;
        easy.push(o.easy, o.fdp);
        storey.push(o.storey, o.fdp);
        extrap.push(o.extrap, o.fdp);
    }
    let n = outcomes.len();
    GridCellReport {
        gamma_bps: config.gamma_bps,
        p_false: config.p_false,
        hurdle,
        n_sims: n,
        actual_fdr: fdp_sum / n as f64,
        mean_easy_bound: easy.mean(),
        mean_storey_bound: storey.mean(),
        mean_extrap_bound: extrap.mean(),
        cover_rate_easy: easy.cover_rate(),
        cover_rate_storey: storey.cover_rate(),
        cover_rate_extrap: extrap.cover_rate(),
        n_undefined: n - easy.defined,
        n_undefined_extrap: n - extrap.defined,
    }
}

pub fn monte_carlo_fdr(
    config: &SimConfig,
    hurdle: f64,
    bin: StoreyBinSpec,
    null: NullModel,
    selection: Option<&SelectionRule>,
) -> Result<GridCellReport> {
    let settings = BoundSettings { hurdle, bin, null, selection };
    let outcomes = replication_outcomes(config, &settings)?;
    Ok(aggregate(config, hurdle, &outcomes))
}

/// One cell per (gamma, p_false), gamma outermost. Every cell reuses the
/// base seed, so cells share random numbers.
pub fn run_grid(
    base: &SimConfig,
    gammas_bps: &[f64],
    p_falses: &[f64],
    hurdle: f64,
    bin: StoreyBinSpec,
    null: NullModel,
    selection: Option<&SelectionRule>,
) -> Result<Vec<GridCellReport>> {
    let mut cells = Vec::with_capacity(gammas_bps.len() * p_falses.len());
    for &gamma_bps in gammas_bps {
        for &p_false in p_falses {
            let config = SimConfig { gamma_bps, p_false, ..base.clone() };
            cells.push(monte_carlo_fdr(&config, hurdle, bin, null, selection)?);
        }
    }
    Ok(cells)
}

pub const GRID_CSV_HEADER: [&str; 11] = [
    "gamma_bps",
    "p_false",
    "hurdle",
    "n_sims",
    "actual_fdr",
    "mean_easy_bound",
    "mean_storey_bound",
    "mean_extrap_bound",
    "cover_rate_easy",
    "cover_rate_storey",
    "n_undefined",
];

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// Undefined means and rates are written as `NA`.
pub fn write_grid_csv<W: Write>(cells: &[GridCellReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(GRID_CSV_HEADER)?;
    for c in cells {
        w.write_record([
            c.gamma_bps.to_string(),
            c.p_false.to_string(),
            c.hurdle.to_string(),
            c.n_sims.to_string(),
            c.actual_fdr.to_string(),
            opt(c.mean_easy_bound),
            opt(c.mean_storey_bound),
            opt(c.mean_extrap_bound),
            opt(c.cover_rate_easy),
            opt(c.cover_rate_storey),
            c.n_undefined.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Configuration documents

/// Where a bootstrap source panel comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    /// A return panel on disk; relative paths resolve against the config file.
    Csv {
        path: PathBuf,
        #[serde(default)]
        layout: PanelLayout,
        #[serde(default = "default_delimiter")]
        delimiter: char,
    },
    /// A generated block-correlated panel.
    Synthetic {
        n_predictors: usize,
        n_months: usize,
        #[serde(default = "default_block_size")]
        block_size: usize,
        #[serde(default = "default_corr")]
        within_block_corr: f64,
        #[serde(default = "default_idio_sd")]
        idio_sd: f64,
        #[serde(default)]
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ResidualSourceSpec {
    ClusterBootstrap {
        source: SourceSpec,
    },
    MixedBootstrap {
        source: SourceSpec,
        #[serde(default = "default_boot_weight")]
        boot_weight: f64,
        #[serde(default = "default_noise_sd")]
        noise_sd: f64,
    },
    Synthetic {
        #[serde(default = "default_block_size")]
        block_size: usize,
        #[serde(default = "default_corr")]
        within_block_corr: f64,
        #[serde(default = "default_idio_sd")]
        idio_sd: f64,
    },
}

impl Default for ResidualSourceSpec {
    fn default() -> Self {
        ResidualSourceSpec::Synthetic {
            block_size: DEFAULT_BLOCK_SIZE,
            within_block_corr: DEFAULT_WITHIN_BLOCK_CORR,
            idio_sd: DEFAULT_IDIO_SD,
        }
    }
}

/// Publication selection in a config document. Omitted fields take the
/// staircase defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionSpec {
    #[serde(default = "default_s_bar")]
    pub s_bar: f64,
    #[serde(default)]
    pub thresholds: Option<Vec<f64>>,
    #[serde(default)]
    pub probabilities: Option<Vec<f64>>,
}

impl SelectionSpec {
    pub fn to_rule(&self) -> Result<SelectionRule> {
        match (&self.thresholds, &self.probabilities) {
            (None, None) => SelectionRule::staircase(self.s_bar),
            (Some(t), Some(p)) => SelectionRule::new(t.clone(), p.clone()),
            _ => Err(invalid("selection needs both thresholds and probabilities, or neither")),
        }
    }
}

/// A simulation run as written in a JSON config. Field names follow
/// [`SimConfig`]; the grid fields and bound settings are optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub n_predictors: usize,
    pub n_months: usize,
    pub gamma_bps: f64,
    pub p_false: f64,
    #[serde(default)]
    pub residual_source: ResidualSourceSpec,
    pub seed: u64,
    pub n_sims: usize,
    #[serde(default = "default_min_obs")]
    pub min_obs: usize,
    /// When set, replaces `gamma_bps` with a list of grid values.
    #[serde(default)]
    pub gamma_grid_bps: Option<Vec<f64>>,
    #[serde(default)]
    pub p_false_grid: Option<Vec<f64>>,
    #[serde(default = "default_hurdle")]
    pub hurdle: f64,
    #[serde(default)]
    pub bin: StoreyBinSpec,
    #[serde(default)]
    pub null: NullModel,
    #[serde(default)]
    pub selection: Option<SelectionSpec>,
}

impl SimSpec {
    /// Loads or generates any source panel and returns the runnable config.
    pub fn resolve(&self, base_dir: &Path) -> Result<SimConfig> {
        let residual_source = match &self.residual_source {
            ResidualSourceSpec::ClusterBootstrap { source } => {
                ResidualSource::ClusterBootstrap { source: Arc::new(resolve_source(source, base_dir)?) }
            }
            ResidualSourceSpec::MixedBootstrap { source, boot_weight, noise_sd } => ResidualSource::MixedBootstrap {
                source: Arc::new(resolve_source(source, base_dir)?),
                boot_weight: *boot_weight,
                noise_sd: *noise_sd,
            },
            ResidualSourceSpec::Synthetic { block_size, within_block_corr, idio_sd } => ResidualSource::Synthetic {
                block_size: *block_size,
                within_block_corr: *within_block_corr,
                idio_sd: *idio_sd,
            },
        };
        let config = SimConfig {
            n_predictors: self.n_predictors,
            n_months: self.n_months,
            gamma_bps: self.gamma_bps,
            p_false: self.p_false,
            residual_source,
            seed: self.seed,
            n_sims: self.n_sims,
            min_obs: self.min_obs,
        };
        config.validate()?;
        StoreyBinSpec::new(self.bin.lo, self.bin.hi)?;
        Ok(config)
    }

    pub fn gammas(&self) -> Vec<f64> {
        self.gamma_grid_bps.clone().unwrap_or_else(|| vec![self.gamma_bps])
    }

    pub fn p_falses(&self) -> Vec<f64> {
        self.p_false_grid.clone().unwrap_or_else(|| vec![self.p_false])
    }

    pub fn selection_rule(&self) -> Result<Option<SelectionRule>> {
        self.selection.as_ref().map(SelectionSpec::to_rule).transpose()
    }

    /// Resolves the config and runs every grid cell.
    pub fn run(&self, base_dir: &Path) -> Result<Vec<GridCellReport>> {
        let config = self.resolve(base_dir)?;
        let rule = self.selection_rule()?;
        let gammas = self.gammas();
        let p_falses = self.p_falses();
        if gammas.is_empty() || p_falses.is_empty() {
            return Err(invalid("grid lists must be non-empty"));
        }
        for &p in &p_falses {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(format!("p_false must lie in [0, 1], got {p}")));
            }
        }
        run_grid(&config, &gammas, &p_falses, self.hurdle, self.bin, self.null, rule.as_ref())
    }
}

fn resolve_source(spec: &SourceSpec, base_dir: &Path) -> Result<BootstrapSource> {
    let panel = match spec {
        SourceSpec::Csv { path, layout, delimiter } => {
            if !delimiter.is_ascii() {
                return Err(invalid(format!("delimiter must be a single ASCII character, got `{delimiter}`")));
            }
            let path = if path.is_absolute() { path.clone() } else { base_dir.join(path) };
            load_panel_csv(&path, &LoadOptions { delimiter: *delimiter as u8, layout: *layout })?.panel
        }
        SourceSpec::Synthetic { n_predictors, n_months, block_size, within_block_corr, idio_sd, seed } => {
            let mut rng = stream(*seed, 0);
            synthetic_source_panel(*n_predictors, *n_months, *block_size, *within_block_corr, *idio_sd, &mut rng)?
        }
    };
    BootstrapSource::new(&panel)
}

fn default_delimiter() -> char {
    ','
}
fn default_block_size() -> usize {
    DEFAULT_BLOCK_SIZE
}
fn default_corr() -> f64 {
    DEFAULT_WITHIN_BLOCK_CORR
}
fn default_idio_sd() -> f64 {
    DEFAULT_IDIO_SD
}
fn default_boot_weight() -> f64 {
    DEFAULT_BOOT_WEIGHT
}
fn default_noise_sd() -> f64 {
    DEFAULT_NOISE_SD
}
fn default_s_bar() -> f64 {
    1.0
}
fn default_min_obs() -> usize {
    DEFAULT_MIN_OBS
}
fn default_hurdle() -> f64 {
    2.0
}

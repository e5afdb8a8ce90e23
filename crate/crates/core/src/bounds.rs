//! FDR bounds built from the null distribution of |t| and the empirical
//! distribution of reported t-statistics.
//!
//! Every bound here is a ratio of a null probability to an empirical share:
//!
//! * easy bound: `Pr(|t| > h | null) / Pr(|t| > h)`, i.e. Bayes' rule with
//!   the false share set to one;
//! * Storey bound: the easy bound times an upper bound on the false share,
//!   `Pr(|t| in [a, b]) / Pr(|t| in [a, b] | null)`, capped at one;
//! * exponential extrapolation: the easy bound with `Pr(|t| > h)` taken from an
//!   exponential whose mean is recovered from published t-stats through the
//!   memoryless property, `E|t| = E(|t| | |t| > h) - h`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::normal;
use crate::panel::TStatSample;

/// Null distribution of a t-statistic: standard normal, two-sided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NullModel {
    /// Tails from the normal CDF (Pr(|t| > 2) = 4.55%).
    #[default]
    #[serde(alias = "exact")]
    ExactNormal,
    /// Normal, except Pr(|t| > 2) is exactly 5% and Pr(|t| in [0, 0.5]) is
    /// exactly 38.3%, the rounded values behind commonly quoted tables.
    #[serde(alias = "paper")]
    PaperMode,
}

/// Rounded null tail at |t| = 2 used in paper mode.
pub const PAPER_TAIL_AT_2: f64 = 0.05;
/// Rounded "half sigma" mass on [0, 0.5] used in paper mode.
pub const PAPER_HALF_SIGMA_MASS: f64 = 0.383;

impl NullModel {
    /// Pr(|t| > h | null).
    pub fn tail(self, h: f64) -> f64 {
        match self {
            NullModel::PaperMode if h == 2.0 => PAPER_TAIL_AT_2,
            _ => normal::two_sided_tail(h),
        }
    }

    /// Pr(a <= |t| <= b | null) for 0 <= a <= b.
    pub fn bin_mass(self, a: f64, b: f64) -> f64 {
        match self {
            NullModel::PaperMode if a == 0.0 && b == 0.5 => PAPER_HALF_SIGMA_MASS,
            _ => normal::abs_interval_mass(a, b),
        }
    }

    /// Pr(lo <= t <= hi | null) for a signed t. No rounded overrides apply.
    pub fn signed_mass(self, lo: f64, hi: f64) -> f64 {
        normal::signed_interval_mass(lo, hi)
    }

    pub fn description(self) -> &'static str {
        match self {
            NullModel::ExactNormal => "standard normal, two-sided, exact tails",
            NullModel::PaperMode => "standard normal with Pr(|t|>2)=5% and Pr(|t|<=0.5)=38.3%",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            NullModel::ExactNormal => "exact",
            NullModel::PaperMode => "paper",
        }
    }
}

impl std::str::FromStr for NullModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" | "exact_normal" => Ok(NullModel::ExactNormal),
            "paper" | "paper_mode" => Ok(NullModel::PaperMode),
            other => Err(invalid(format!("unknown null model `{other}` (expected exact or paper)"))),
        }
    }
}

/// Bin [lo, hi] of small |t| used to bound the false share.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoreyBinSpec {
    pub lo: f64,
    pub hi: f64,
}

impl StoreyBinSpec {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi > lo) {
            return Err(invalid(format!("Storey bin needs 0 <= lo < hi, got [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }
}

impl Default for StoreyBinSpec {
    fn default() -> Self {
        Self { lo: 0.0, hi: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMethod {
    Easy,
    Storey,
    Extrapolation,
    IntervalPf,
}

impl BoundMethod {
    pub fn label(self) -> &'static str {
        match self {
            BoundMethod::Easy => "easy",
            BoundMethod::Storey => "storey",
            BoundMethod::Extrapolation => "extrap",
            BoundMethod::IntervalPf => "interval_pf",
        }
    }
}

/// Every quantity that enters a bound. Fields not used by a method are `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Intermediates {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub share_above: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count_above: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub null_tail: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bin_lo: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bin_hi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bin_share: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub null_bin_mass: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pf_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pf_cap_applied: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_pub_t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub implied_mean_abs_t: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FdrBoundReport {
    pub method: BoundMethod,
    pub null: NullModel,
    /// Discovery hurdle; `None` for the interval Pr(F) bound.
    pub hurdle: Option<f64>,
    pub bound_raw: f64,
    pub bound_capped: f64,
    pub cap_applied: bool,
    pub sample_size: Option<usize>,
    pub intermediates: Intermediates,
}

impl FdrBoundReport {
    fn new(
        method: BoundMethod,
        null: NullModel,
        hurdle: Option<f64>,
        bound_raw: f64,
        sample_size: Option<usize>,
        intermediates: Intermediates,
    ) -> Self {
        Self {
            method,
            null,
            hurdle,
            bound_raw,
            bound_capped: bound_raw.min(1.0),
            cap_applied: bound_raw > 1.0,
            sample_size,
            intermediates,
        }
    }

    /// Capped bound in percent, rounded to one decimal for display.
    pub fn display_percent(&self) -> String {
        format!("{:.1}%", 100.0 * self.bound_capped)
    }
}

pub const REPORT_CSV_HEADER: [&str; 18] = [
    "method",
    "null",
    "hurdle",
    "sample_size",
    "bound_raw",
    "bound_capped",
    "cap_applied",
    "share_above",
    "count_above",
    "null_tail",
    "bin_lo",
    "bin_hi",
    "bin_share",
    "null_bin_mass",
    "pf_bound",
    "pf_cap_applied",
    "mean_pub_t",
    "implied_mean_abs_t",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes reports as CSV, one row each, with [`REPORT_CSV_HEADER`] columns.
pub fn write_reports_csv<W: Write>(reports: &[FdrBoundReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_CSV_HEADER)?;
    for r in reports {
        let m = &r.intermediates;
        w.write_record([
            r.method.label().to_string(),
            r.null.label().to_string(),
            opt(r.hurdle),
            opt(r.sample_size),
            r.bound_raw.to_string(),
            r.bound_capped.to_string(),
            r.cap_applied.to_string(),
            opt(m.share_above),
            opt(m.count_above),
            opt(m.null_tail),
            opt(m.bin_lo),
            opt(m.bin_hi),
            opt(m.bin_share),
            opt(m.null_bin_mass),
            opt(m.pf_bound),
            opt(m.pf_cap_applied),
            opt(m.mean_pub_t),
            opt(m.implied_mean_abs_t),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn check_hurdle(hurdle: f64) -> Result<()> {
    if !(hurdle.is_finite() && hurdle >= 0.0) {
        return Err(invalid(format!("hurdle must be finite and non-negative, got {hurdle}")));
    }
    Ok(())
}

fn check_share(name: &str, share: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&share) {
        return Err(invalid(format!("{name} must lie in [0, 1], got {share}")));
    }
    Ok(())
}

/// `null.tail(hurdle) / share_above`.
pub fn easy_bound(share_above: f64, hurdle: f64, null: NullModel) -> Result<FdrBoundReport> {
    check_hurdle(hurdle)?;
    check_share("share_above", share_above)?;
    if share_above == 0.0 {
        return Err(Error::NoDiscoveries { hurdle });
    }
    let null_tail = null.tail(hurdle);
    Ok(FdrBoundReport::new(
        BoundMethod::Easy,
        null,
        Some(hurdle),
        null_tail / share_above,
        None,
        Intermediates { share_above: Some(share_above), null_tail: Some(null_tail), ..Default::default() },
    ))
}

/// Easy bound with the share above the hurdle counted from a sample.
pub fn easy_bound_from_tstats(tstats: &TStatSample, hurdle: f64, null: NullModel) -> Result<FdrBoundReport> {
    if tstats.is_empty() {
        return Err(Error::EmptySample);
    }
    check_hurdle(hurdle)?;
    let count = tstats.count_above(hurdle);
    let mut report = easy_bound(count as f64 / tstats.len() as f64, hurdle, null)?;
    report.sample_size = Some(tstats.len());
    report.intermediates.count_above = Some(count);
    Ok(report)
}

/// Upper bound on the share of false predictors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PfBound {
    pub pf: f64,
    pub bin: StoreyBinSpec,
    pub bin_share: f64,
    pub null_bin_mass: f64,
    pub cap_applied: bool,
    pub bin_count: Option<usize>,
    pub sample_size: Option<usize>,
}

/// `min(1, bin_share / null.bin_mass(bin))` from a share computed elsewhere.
pub fn storey_pf_from_share(bin_share: f64, bin: StoreyBinSpec, null: NullModel) -> Result<PfBound> {
    check_share("bin_share", bin_share)?;
    let null_bin_mass = null.bin_mass(bin.lo, bin.hi);
    if null_bin_mass <= 0.0 {
        return Err(Error::ZeroNullMass { lo: bin.lo, hi: bin.hi });
    }
    let ratio = bin_share / null_bin_mass;
    Ok(PfBound {
        pf: ratio.min(1.0),
        bin,
        bin_share,
        null_bin_mass,
        cap_applied: ratio > 1.0,
        bin_count: None,
        sample_size: None,
    })
}

pub fn storey_pf_bound(tstats: &TStatSample, bin: StoreyBinSpec, null: NullModel) -> Result<PfBound> {
    if tstats.is_empty() {
        return Err(Error::EmptySample);
    }
    let count = tstats.count_in(bin.lo, bin.hi);
    let mut pf = storey_pf_from_share(count as f64 / tstats.len() as f64, bin, null)?;
    pf.bin_count = Some(count);
    pf.sample_size = Some(tstats.len());
    Ok(pf)
}

fn combine_storey(easy: FdrBoundReport, pf: PfBound) -> FdrBoundReport {
    let intermediates = Intermediates {
        bin_lo: Some(pf.bin.lo),
        bin_hi: Some(pf.bin.hi),
        bin_share: Some(pf.bin_share),
        null_bin_mass: Some(pf.null_bin_mass),
        pf_bound: Some(pf.pf),
        pf_cap_applied: Some(pf.cap_applied),
        ..easy.intermediates
    };
    FdrBoundReport::new(
        BoundMethod::Storey,
        easy.null,
        easy.hurdle,
        easy.bound_raw * pf.pf,
        easy.sample_size,
        intermediates,
    )
}

/// Easy bound times the Storey Pr(F) bound.
pub fn storey_fdr_bound(
    tstats: &TStatSample,
    hurdle: f64,
    bin: StoreyBinSpec,
    null: NullModel,
) -> Result<FdrBoundReport> {
    let easy = easy_bound_from_tstats(tstats, hurdle, null)?;
    let pf = storey_pf_bound(tstats, bin, null)?;
    Ok(combine_storey(easy, pf))
}

/// Storey bound from reported shares rather than a sample.
pub fn storey_fdr_bound_from_shares(
    share_above: f64,
    bin_share: f64,
    hurdle: f64,
    bin: StoreyBinSpec,
    null: NullModel,
) -> Result<FdrBoundReport> {
    let easy = easy_bound(share_above, hurdle, null)?;
    let pf = storey_pf_from_share(bin_share, bin, null)?;
    Ok(combine_storey(easy, pf))
}

/// Easy bound under an exponential |t| distribution whose mean is backed out
/// of the mean published t-stat, `mean_pub_t ~ E(|t| | |t| > hurdle)`.
///
/// Equals `null.tail(hurdle) * exp(hurdle / (mean_pub_t - hurdle))`.
pub fn exp_extrap_bound(mean_pub_t: f64, hurdle: f64, null: NullModel) -> Result<FdrBoundReport> {
    check_hurdle(hurdle)?;
    if !mean_pub_t.is_finite() {
        return Err(invalid(format!("mean published t-stat must be finite, got {mean_pub_t}")));
    }
    if mean_pub_t <= hurdle {
        return Err(Error::InfeasibleExtrapolation { mean_pub_t, hurdle });
    }
    let mean_abs_t = mean_pub_t - hurdle;
    let share_above = (-hurdle / mean_abs_t).exp();
    let null_tail = null.tail(hurdle);
    Ok(FdrBoundReport::new(
        BoundMethod::Extrapolation,
        null,
        Some(hurdle),
        null_tail * (hurdle / mean_abs_t).exp(),
        None,
        Intermediates {
            share_above: Some(share_above),
            null_tail: Some(null_tail),
            mean_pub_t: Some(mean_pub_t),
            implied_mean_abs_t: Some(mean_abs_t),
            ..Default::default()
        },
    ))
}

/// Pr(F) bound from the share of signed t-stats inside `[lo, hi]`, an
/// interval that need not be symmetric around zero.
pub fn interval_pf_bound(share_in_interval: f64, lo: f64, hi: f64, null: NullModel) -> Result<FdrBoundReport> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(invalid(format!("interval needs lo < hi, got [{lo}, {hi}]")));
    }
    check_share("share_in_interval", share_in_interval)?;
    let mass = null.signed_mass(lo, hi);
    if mass <= 0.0 {
        return Err(Error::ZeroNullMass { lo, hi });
    }
    let ratio = share_in_interval / mass;
    let pf = ratio.min(1.0);
    Ok(FdrBoundReport {
        method: BoundMethod::IntervalPf,
        null,
        hurdle: None,
        bound_raw: ratio,
        bound_capped: pf,
        cap_applied: ratio > 1.0,
        sample_size: None,
        intermediates: Intermediates {
            bin_lo: Some(lo),
            bin_hi: Some(hi),
            bin_share: Some(share_in_interval),
            null_bin_mass: Some(mass),
            pf_bound: Some(pf),
            pf_cap_applied: Some(ratio > 1.0),
            ..Default::default()
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PluginKind {
    /// Reported share of |t| above the hurdle.
    TailShare,
    /// Reported mean of published |t|.
    MeanPubT,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PluginRow {
    pub label: String,
    pub kind: PluginKind,
    pub value: f64,
}

impl PluginRow {
    pub fn new(label: impl Into<String>, kind: PluginKind, value: f64) -> Self {
        Self { label: label.into(), kind, value }
    }
}

#[derive(Debug)]
pub struct PluginResult {
    pub row: PluginRow,
    pub outcome: Result<FdrBoundReport>,
}

/// Bounds from summary statistics, one per row. A failing row does not
/// affect the others.
pub fn plugin_table(rows: &[PluginRow], hurdle: f64, null: NullModel) -> Vec<PluginResult> {
    rows.iter()
        .map(|row| PluginResult {
            row: row.clone(),
            outcome: match row.kind {
                PluginKind::TailShare => easy_bound(row.value, hurdle, null),
                PluginKind::MeanPubT => exp_extrap_bound(row.value, hurdle, null),
            },
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// Null component scaled to the whole sample (Pr(F) = 1).
    #[default]
    Easy,
    /// Null component scaled so it explains 100% of the first bin.
    Storey,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionBin {
    pub lo: f64,
    /// `f64::INFINITY` for the final overflow bin.
    pub hi: f64,
    pub count_empirical: usize,
    pub count_null_scaled: f64,
    pub count_true_implied: f64,
    /// Null over empirical count; `None` for empty bins.
    pub false_share: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decomposition {
    pub scaling: Scaling,
    pub null: NullModel,
    pub sample_size: usize,
    /// Multiplier on the null component: 1 for easy scaling, the first-bin
    /// Pr(F) bound for Storey scaling.
    pub scale: f64,
    pub bins: Vec<DecompositionBin>,
    pub hurdle: f64,
    pub discoveries: usize,
    /// Scaled null mass above the hurdle over the number of discoveries.
    pub discovery_fdr_bound: Option<f64>,
}

/// Splits the |t| histogram into a scaled-null component and the remainder.
///
/// Bins have width `bin_width` and cover [0, max |t|]: the first is [0, w]
/// and the rest are (kw, (k+1)w]. A final (edge, inf) bin holds the null mass
/// beyond the last edge so null counts sum to `scale * N`.
pub fn histogram_decomposition(
    tstats: &TStatSample,
    null: NullModel,
    scaling: Scaling,
    bin_width: f64,
    hurdle: f64,
) -> Result<Decomposition> {
    if tstats.is_empty() {
        return Err(Error::EmptySample);
    }
    if !(bin_width.is_finite() && bin_width > 0.0) {
        return Err(invalid(format!("bin width must be positive, got {bin_width}")));
    }
    check_hurdle(hurdle)?;
    let n = tstats.len();
    let max_t = tstats.max().unwrap_or(0.0);
    let n_bins = ((max_t / bin_width).ceil() as usize).max(1);
    let edge = |k: usize| k as f64 * bin_width;

    let mut counts = vec![0usize; n_bins];
    for &t in &tstats.abs_t {
        let k = if t <= bin_width { 0 } else { ((t / bin_width).ceil() as usize - 1).min(n_bins - 1) };
        // Guard against ceil() rounding across an edge.
        let k = if k > 0 && t <= edge(k) { k - 1 } else { k };
        counts[k] += 1;
    }

    let scale = match scaling {
        Scaling::Easy => 1.0,
        Scaling::Storey => storey_pf_bound(tstats, StoreyBinSpec::new(0.0, bin_width)?, null)?.pf,
    };
    let nf = n as f64;
    let mut bins: Vec<DecompositionBin> = counts
        .iter()
        .enumerate()
        .map(|(k, &count)| {
            let null_count = scale * nf * null.bin_mass(edge(k), edge(k + 1));
            DecompositionBin {
                lo: edge(k),
                hi: edge(k + 1),
                count_empirical: count,
                count_null_scaled: null_count,
                count_true_implied: count as f64 - null_count,
                false_share: (count > 0).then(|| null_count / count as f64),
            }
        })
        .collect();
    let overflow = scale * nf * null.tail(edge(n_bins));
    bins.push(DecompositionBin {
        lo: edge(n_bins),
        hi: f64::INFINITY,
        count_empirical: 0,
        count_null_scaled: overflow,
        count_true_implied: -overflow,
        false_share: None,
    });

    let discoveries = tstats.count_above(hurdle);
    let discovery_fdr_bound = (discoveries > 0).then(|| scale * nf * null.tail(hurdle) / discoveries as f64);
    Ok(Decomposition { scaling, null, sample_size: n, scale, bins, hurdle, discoveries, discovery_fdr_bound })
}

/// Writes `bin_lo,bin_hi,count_empirical,count_null_scaled,count_true_implied,false_share`.
pub fn write_decomposition_csv<W: Write>(d: &Decomposition, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "bin_lo",
        "bin_hi",
        "count_empirical",
        "count_null_scaled",
        "count_true_implied",
        "false_share",
    ])?;
    for b in &d.bins {
        w.write_record([
            b.lo.to_string(),
            if b.hi.is_finite() { b.hi.to_string() } else { "inf".to_string() },
            b.count_empirical.to_string(),
            b.count_null_scaled.to_string(),
            b.count_true_implied.to_string(),
            opt(b.false_share),
        ])?;
    }
    w.flush()?;
    Ok(())
}

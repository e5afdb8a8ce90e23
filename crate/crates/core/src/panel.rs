//! Return panels, factor panels and the t-statistics computed from them.
//!
//! Returns are monthly long-short returns in percent per month. Every
//! predictor uses only its own observed months; a predictor needs at least
//! `min_obs` of them to receive a t-statistic.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Conventional floor on the number of observed months behind a t-stat.
pub const DEFAULT_MIN_OBS: usize = 60;

/// N predictors by T months of long-short returns with an observation mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    predictor_ids: Vec<String>,
    month_labels: Vec<String>,
    /// Row-major, N x T. Unobserved cells hold 0.0.
    returns: Vec<f64>,
    observed: Vec<bool>,
}

impl ReturnPanel {
    pub fn new(
        predictor_ids: Vec<String>,
        month_labels: Vec<String>,
        mut returns: Vec<f64>,
        observed: Vec<bool>,
    ) -> Result<Self> {
        let n = predictor_ids.len();
        let t = month_labels.len();
        if n == 0 || t == 0 {
            return Err(invalid("a return panel needs at least one predictor and one month"));
        }
        if returns.len() != n * t || observed.len() != n * t {
            return Err(Error::DimensionMismatch(format!(
                "expected {} cells for {n} predictors x {t} months, got {} returns and {} mask entries",
                n * t,
                returns.len(),
                observed.len()
            )));
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &predictor_ids {
            if !seen.insert(id.as_str()) {
                return Err(invalid(format!("predictor id `{id}` is not unique")));
            }
        }
        check_increasing(&month_labels)?;
        for (cell, (value, &obs)) in returns.iter_mut().zip(&observed).enumerate() {
            if obs && !value.is_finite() {
                return Err(invalid(format!(
                    "non-finite observed return for predictor `{}` in month `{}`",
                    predictor_ids[cell / t],
                    month_labels[cell % t]
                )));
            }
            if !obs {
                *value = 0.0;
            }
        }
        Ok(Self { predictor_ids, month_labels, returns, observed })
    }

    /// Fully observed panel with generated identifiers, used by the simulators.
    pub(crate) fn from_dense(n: usize, t: usize, returns: Vec<f64>, observed: Vec<bool>) -> Self {
        debug_assert_eq!(returns.len(), n * t);
        debug_assert_eq!(observed.len(), n * t);
        Self {
            predictor_ids: (0..n).map(|i| format!("p{i:06}")).collect(),
            month_labels: (0..t).map(|k| format!("m{k:06}")).collect(),
            returns,
            observed,
        }
    }

    pub fn n_predictors(&self) -> usize {
        self.predictor_ids.len()
    }

    pub fn n_months(&self) -> usize {
        self.month_labels.len()
    }

    pub fn predictor_ids(&self) -> &[String] {
        &self.predictor_ids
    }

    pub fn month_labels(&self) -> &[String] {
        &self.month_labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let t = self.n_months();
        &self.returns[i * t..(i + 1) * t]
    }

    pub fn observed_row(&self, i: usize) -> &[bool] {
        let t = self.n_months();
        &self.observed[i * t..(i + 1) * t]
    }

    pub fn get(&self, i: usize, k: usize) -> Option<f64> {
        let cell = i * self.n_months() + k;
        self.observed[cell].then(|| self.returns[cell])
    }

    pub fn n_observed(&self, i: usize) -> usize {
        self.observed_row(i).iter().filter(|&&o| o).count()
    }

    /// Observed values of predictor `i`, in month order.
    pub fn observed_values(&self, i: usize) -> Vec<f64> {
        self.row(i)
            .iter()
            .zip(self.observed_row(i))
            .filter_map(|(&v, &o)| o.then_some(v))
            .collect()
    }

    pub(crate) fn into_parts(self) -> (Vec<String>, Vec<String>, Vec<f64>, Vec<bool>) {
        (self.predictor_ids, self.month_labels, self.returns, self.observed)
    }
}

/// T months by K factors of factor returns in percent per month.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPanel {
    factor_names: Vec<String>,
    month_labels: Vec<String>,
    /// Row-major, T x K.
    values: Vec<f64>,
}

impl FactorPanel {
    pub fn new(factor_names: Vec<String>, month_labels: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let k = factor_names.len();
        let t = month_labels.len();
        if k == 0 {
            return Err(invalid("a factor panel needs at least one factor"));
        }
        if t == 0 {
            return Err(invalid("a factor panel needs at least one month"));
        }
        if values.len() != t * k {
            return Err(Error::DimensionMismatch(format!(
                "expected {} factor values for {t} months x {k} factors, got {}",
                t * k,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!(
                "non-finite value for factor `{}` in month `{}`",
                factor_names[pos % k],
                month_labels[pos / k]
            )));
        }
        check_increasing(&month_labels)?;
        Ok(Self { factor_names, month_labels, values })
    }

    pub fn factor_names(&self) -> &[String] {
        &self.factor_names
    }

    pub fn month_labels(&self) -> &[String] {
        &self.month_labels
    }

    pub fn n_factors(&self) -> usize {
        self.factor_names.len()
    }

    pub fn value(&self, month: usize, factor: usize) -> f64 {
        self.values[month * self.n_factors() + factor]
    }

    pub fn factor_index(&self, name: &str) -> Option<usize> {
        self.factor_names.iter().position(|f| f == name)
    }
}

fn check_increasing(labels: &[String]) -> Result<()> {
    for pair in labels.windows(2) {
        if pair[0] >= pair[1] {
            return Err(invalid(format!(
                "month labels must be strictly increasing, found `{}` before `{}`",
                pair[0], pair[1]
            )));
        }
    }
    Ok(())
}

/// Absolute t-statistics plus where they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TStatSample {
    pub abs_t: Vec<f64>,
    pub n_obs_used: Vec<usize>,
    pub predictor_ids: Vec<String>,
    pub source_tag: String,
}

impl TStatSample {
    pub fn new(
        abs_t: Vec<f64>,
        n_obs_used: Vec<usize>,
        predictor_ids: Vec<String>,
        source_tag: impl Into<String>,
    ) -> Result<Self> {
        if abs_t.len() != n_obs_used.len() || abs_t.len() != predictor_ids.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} t-stats, {} observation counts, {} ids",
                abs_t.len(),
                n_obs_used.len(),
                predictor_ids.len()
            )));
        }
        if let Some(bad) = abs_t.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
            return Err(invalid(format!("absolute t-stats must be finite and non-negative, got {bad}")));
        }
        Ok(Self { abs_t, n_obs_used, predictor_ids, source_tag: source_tag.into() })
    }

    /// A sample built from bare |t| values, e.g. transcribed from a paper.
    /// Identifiers are the 1-based positions and observation counts are 0.
    pub fn from_abs_t(abs_t: Vec<f64>, source_tag: impl Into<String>) -> Result<Self> {
        let n = abs_t.len();
        Self::new(abs_t, vec![0; n], (1..=n).map(|i| i.to_string()).collect(), source_tag)
    }

    pub fn len(&self) -> usize {
        self.abs_t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.abs_t.is_empty()
    }

    pub fn count_above(&self, hurdle: f64) -> usize {
        self.abs_t.iter().filter(|&&t| t > hurdle).count()
    }

    pub fn count_in(&self, lo: f64, hi: f64) -> usize {
        self.abs_t.iter().filter(|&&t| t >= lo && t <= hi).count()
    }

    pub fn max(&self) -> Option<f64> {
        self.abs_t.iter().copied().reduce(f64::max)
    }

    /// Keep the entries at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize], source_tag: impl Into<String>) -> Self {
        Self {
            abs_t: indices.iter().map(|&i| self.abs_t[i]).collect(),
            n_obs_used: indices.iter().map(|&i| self.n_obs_used[i]).collect(),
            predictor_ids: indices.iter().map(|&i| self.predictor_ids[i].clone()).collect(),
            source_tag: source_tag.into(),
        }
    }

    /// Writes `predictor_id,abs_t,n_obs`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["predictor_id", "abs_t", "n_obs"])?;
        for i in 0..self.len() {
            w.write_record([
                self.predictor_ids[i].clone(),
                self.abs_t[i].to_string(),
                self.n_obs_used[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads a `predictor_id,abs_t[,n_obs]` file (signed t values are folded to |t|).
pub fn read_tstat_csv(path: &Path) -> Result<TStatSample> {
    let file = open(path)?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let t_col = col("abs_t")
        .or_else(|| col("t"))
        .ok_or_else(|| Error::BadHeader("expected an `abs_t` column".into()))?;
    let id_col = col("predictor_id");
    let n_col = col("n_obs");

    let (mut abs_t, mut n_obs, mut ids) = (Vec::new(), Vec::new(), Vec::new());
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let t: f64 = record
            .get(t_col)
            .and_then(|s| s.parse().ok())
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| invalid(format!("row {}: unparsable t-stat", row + 1)))?;
        abs_t.push(t.abs());
        ids.push(match id_col {
            Some(c) => record.get(c).unwrap_or_default().to_string(),
            None => (row + 1).to_string(),
        });
        n_obs.push(n_col.and_then(|c| record.get(c)).and_then(|s| s.parse().ok()).unwrap_or(0));
    }
    if abs_t.is_empty() {
        return Err(Error::NoParsableRows);
    }
    TStatSample::new(abs_t, n_obs, ids, path.display().to_string())
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PanelLayout {
    /// `predictor_id,month,ret` triples.
    #[default]
    Long,
    /// `predictor_id,<month>,<month>,...` with one row per predictor.
    Wide,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadOptions {
    pub delimiter: u8,
    pub layout: PanelLayout,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { delimiter: b',', layout: PanelLayout::Long }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct LoadReport {
    pub rows_read: usize,
    /// Cells present in the file whose return was blank or not a finite number.
    pub unparseable_cells: usize,
    /// (predictor, month) combinations that never appear in the file.
    pub absent_cells: usize,
}

#[derive(Debug, Clone)]
pub struct LoadedPanel {
    pub panel: ReturnPanel,
    pub report: LoadReport,
}

fn parse_return(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Loads a return panel. Month labels are ordered lexicographically, so they
/// must sort chronologically (e.g. `1990-07`).
pub fn load_panel_csv(path: &Path, options: &LoadOptions) -> Result<LoadedPanel> {
    let file = open(path)?;
    match options.layout {
        PanelLayout::Long => load_long(file, options.delimiter),
        PanelLayout::Wide => load_wide(file, options.delimiter),
    }
}

fn load_long<R: Read>(input: R, delimiter: u8) -> Result<LoadedPanel> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::Headers)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::BadHeader(format!("missing `{name}` column in long-format panel")))
    };
    let (id_col, month_col, ret_col) = (col("predictor_id")?, col("month")?, col("ret")?);

    let mut ids: Vec<String> = Vec::new();
    let mut id_pos: HashMap<String, usize> = HashMap::new();
    let mut cells: HashMap<(usize, String), Option<f64>> = HashMap::new();
    let mut months: HashSet<String> = HashSet::new();
    let mut report = LoadReport::default();
    let mut parsed = 0usize;

    for (row, record) in reader.records().enumerate() {
        let record = record?;
        report.rows_read += 1;
        let id = record.get(id_col).unwrap_or_default().trim();
        let month = record.get(month_col).unwrap_or_default().trim();
        if id.is_empty() || month.is_empty() {
            return Err(invalid(format!("row {}: empty predictor_id or month", row + 1)));
        }
        let value = parse_return(record.get(ret_col).unwrap_or_default());
        let idx = *id_pos.entry(id.to_string()).or_insert_with(|| {
            ids.push(id.to_string());
            ids.len() - 1
        });
        if cells.insert((idx, month.to_string()), value).is_some() {
            return Err(Error::DuplicateKey { predictor: id.to_string(), month: month.to_string() });
        }
        months.insert(month.to_string());
        match value {
            Some(_) => parsed += 1,
            None => report.unparseable_cells += 1,
        }
    }
    if parsed == 0 {
        return Err(Error::NoParsableRows);
    }

    let mut month_labels: Vec<String> = months.into_iter().collect();
    month_labels.sort();
    let t = month_labels.len();
    let month_pos: HashMap<&str, usize> =
        month_labels.iter().enumerate().map(|(k, m)| (m.as_str(), k)).collect();
    let mut returns = vec![0.0; ids.len() * t];
    let mut observed = vec![false; ids.len() * t];
    for ((i, month), value) in &cells {
        if let Some(v) = value {
            let cell = i * t + month_pos[month.as_str()];
            returns[cell] = *v;
            observed[cell] = true;
        }
    }
    report.absent_cells = ids.len() * t - cells.len();
    let panel = ReturnPanel::new(ids, month_labels, returns, observed)?;
    Ok(LoadedPanel { panel, report })
}

fn load_wide<R: Read>(input: R, delimiter: u8) -> Result<LoadedPanel> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::Headers)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.get(0) != Some("predictor_id") || headers.len() < 2 {
        return Err(Error::BadHeader(
            "wide-format panel header must be `predictor_id,<month>,...`".into(),
        ));
    }
    let file_months: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut seen = HashSet::new();
    for m in &file_months {
        if !seen.insert(m.as_str()) {
            return Err(Error::DuplicateKey { predictor: "*".into(), month: m.clone() });
        }
    }
    // Column order in the file need not be chronological.
    let mut order: Vec<usize> = (0..file_months.len()).collect();
    order.sort_by(|&a, &b| file_months[a].cmp(&file_months[b]));
    let month_labels: Vec<String> = order.iter().map(|&c| file_months[c].clone()).collect();
    let t = month_labels.len();

    let mut ids = Vec::new();
    let mut id_seen = HashSet::new();
    let mut returns = Vec::new();
    let mut observed = Vec::new();
    let mut report = LoadReport::default();
    let mut parsed = 0usize;
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        report.rows_read += 1;
        let id = record.get(0).unwrap_or_default().trim().to_string();
        if id.is_empty() {
            return Err(invalid(format!("row {}: empty predictor_id", row + 1)));
        }
        if !id_seen.insert(id.clone()) {
            return Err(Error::DuplicateKey { predictor: id, month: month_labels[0].clone() });
        }
        for &c in &order {
            match record.get(c + 1) {
                Some(cell) => match parse_return(cell) {
                    Some(v) => {
                        returns.push(v);
                        observed.push(true);
                        parsed += 1;
                    }
                    None => {
                        returns.push(0.0);
                        observed.push(false);
                        report.unparseable_cells += 1;
                    }
                },
                None => {
                    returns.push(0.0);
                    observed.push(false);
                    report.absent_cells += 1;
                }
            }
        }
        ids.push(id);
    }
    if parsed == 0 {
        return Err(Error::NoParsableRows);
    }
    debug_assert_eq!(returns.len(), ids.len() * t);
    let panel = ReturnPanel::new(ids, month_labels, returns, observed)?;
    Ok(LoadedPanel { panel, report })
}

/// Reads `month,<factor1>,<factor2>,...`. Every cell must be a finite number.
pub fn load_factor_csv(path: &Path, delimiter: u8) -> Result<FactorPanel> {
    let file = open(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader.headers()?.clone();
    if headers.get(0) != Some("month") || headers.len() < 2 {
        return Err(Error::BadHeader("factor file header must be `month,<factor>,...`".into()));
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut rows: Vec<(String, Vec<f64>)> = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let month = record.get(0).unwrap_or_default().to_string();
        let mut values = Vec::with_capacity(names.len());
        for (k, name) in names.iter().enumerate() {
            let v = record
                .get(k + 1)
                .and_then(parse_return)
                .ok_or_else(|| invalid(format!("row {}: unparsable value for factor `{name}`", row + 1)))?;
            values.push(v);
        }
        rows.push((month, values));
    }
    if rows.is_empty() {
        return Err(Error::NoParsableRows);
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    let months = rows.iter().map(|r| r.0.clone()).collect();
    let values = rows.into_iter().flat_map(|r| r.1).collect();
    FactorPanel::new(names, months, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum ExclusionReason {
    TooFewObservations { observed: usize, min_obs: usize },
    ZeroVariance,
    RankDeficient,
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExclusionReason::TooFewObservations { observed, min_obs } => {
                write!(f, "only {observed} observed months (minimum {min_obs})")
            }
            ExclusionReason::ZeroVariance => write!(f, "zero residual variance"),
            ExclusionReason::RankDeficient => write!(f, "rank-deficient regressor matrix"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Exclusion {
    pub panel_index: usize,
    pub predictor_id: String,
    pub reason: ExclusionReason,
}

#[derive(Debug, Clone)]
pub struct TStatResult {
    pub sample: TStatSample,
    /// Row of the source panel behind each entry of `sample`.
    pub panel_index: Vec<usize>,
    pub excluded: Vec<Exclusion>,
}

/// |mean / sd * sqrt(n)| with the n-1 standard deviation.
fn mean_t(values: &[f64]) -> std::result::Result<f64, ExclusionReason> {
    let n = values.len() as f64;
    let first = values[0];
    if values.iter().all(|&v| v == first) {
        return Err(ExclusionReason::ZeroVariance);
    }
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let sd = (ss / (n - 1.0)).sqrt();
    if sd == 0.0 || !sd.is_finite() {
        return Err(ExclusionReason::ZeroVariance);
    }
    Ok((mean / sd * n.sqrt()).abs())
}

fn check_min_obs(min_obs: usize, floor: usize) -> Result<()> {
    if min_obs < floor {
        return Err(invalid(format!("min_obs must be at least {floor}, got {min_obs}")));
    }
    Ok(())
}

/// Raw t-statistics of the mean long-short return, one per predictor.
pub fn compute_tstats(panel: &ReturnPanel, min_obs: usize) -> Result<TStatResult> {
    check_min_obs(min_obs, 2)?;
    collect_tstats(panel, min_obs, "raw", |i| {
        let values = panel.observed_values(i);
        let n = values.len();
        mean_t(&values).map(|t| (t, n))
    })
}

fn collect_tstats<F>(panel: &ReturnPanel, min_obs: usize, tag: &str, mut stat: F) -> Result<TStatResult>
where
    F: FnMut(usize) -> std::result::Result<(f64, usize), ExclusionReason>,
{
    let n = panel.n_predictors();
    let (mut abs_t, mut n_obs, mut ids, mut index) =
        (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let mut excluded = Vec::new();
    for i in 0..n {
        let observed = panel.n_observed(i);
        let outcome = if observed < min_obs {
            Err(ExclusionReason::TooFewObservations { observed, min_obs })
        } else {
            stat(i)
        };
        match outcome {
            Ok((t, used)) => {
                abs_t.push(t);
                n_obs.push(used);
                ids.push(panel.predictor_ids[i].clone());
                index.push(i);
            }
            Err(reason) => excluded.push(Exclusion {
                panel_index: i,
                predictor_id: panel.predictor_ids[i].clone(),
                reason,
            }),
        }
    }
    Ok(TStatResult {
        sample: TStatSample { abs_t, n_obs_used: n_obs, predictor_ids: ids, source_tag: tag.to_string() },
        panel_index: index,
        excluded,
    })
}

/// Intercept t-statistics from time-series regressions on the factors named
/// in `model`, using homoskedastic OLS standard errors.
///
/// Factor columns that are identically zero over a predictor's observed
/// months carry no information and are dropped; when nothing is left the
/// regression is the plain mean test and the raw t-stat is returned.
pub fn compute_alpha_tstats(
    panel: &ReturnPanel,
    factors: &FactorPanel,
    model: &[&str],
    min_obs: usize,
) -> Result<TStatResult> {
    if model.is_empty() {
        return compute_tstats(panel, min_obs);
    }
    let cols: Vec<usize> = model
        .iter()
        .map(|name| {
            factors
                .factor_index(name)
                .ok_or_else(|| invalid(format!("unknown factor `{name}`")))
        })
        .collect::<Result<_>>()?;
    check_min_obs(min_obs, cols.len() + 2)?;

    let factor_row: HashMap<&str, usize> =
        factors.month_labels.iter().enumerate().map(|(k, m)| (m.as_str(), k)).collect();
    let month_map: Vec<usize> = panel
        .month_labels
        .iter()
        .map(|m| factor_row.get(m.as_str()).copied().ok_or_else(|| Error::MonthMismatch(m.clone())))
        .collect::<Result<_>>()?;

    let tag = model.join("+");
    collect_tstats(panel, min_obs, &tag, |i| {
        let (y, rows): (Vec<f64>, Vec<usize>) = panel
            .row(i)
            .iter()
            .zip(panel.observed_row(i))
            .zip(&month_map)
            .filter_map(|((&v, &o), &fr)| o.then_some((v, fr)))
            .unzip();
        let active: Vec<usize> = cols
            .iter()
            .copied()
            .filter(|&c| rows.iter().any(|&r| factors.value(r, c) != 0.0))
            .collect();
        if active.is_empty() {
            return mean_t(&y).map(|t| (t, y.len()));
        }
        intercept_t(&y, &rows, &active, factors).map(|t| (t, y.len()))
    })
}

fn intercept_t(
    y: &[f64],
    rows: &[usize],
    cols: &[usize],
    factors: &FactorPanel,
) -> std::result::Result<f64, ExclusionReason> {
    let n = y.len();
    let p = cols.len() + 1;
    let x = DMatrix::from_fn(n, p, |r, c| if c == 0 { 1.0 } else { factors.value(rows[r], cols[c - 1]) });
    let yv = DVector::from_column_slice(y);

    let qr = x.clone().qr();
    let r = qr.r();
    let max_diag = (0..p).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    if (0..p).any(|j| r[(j, j)].abs() <= 1e-10 * max_diag) {
        return Err(ExclusionReason::RankDeficient);
    }
    let qty = qr.q().transpose() * &yv;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or(ExclusionReason::RankDeficient)?;
    let resid = &yv - &x * &beta;
    let ssr = resid.norm_squared();
    let sst = yv.norm_squared();

    let alpha = beta[0];
    // Exact fit: residual variance is zero.
    if ssr <= 1e-24 * sst.max(f64::MIN_POSITIVE) {
        let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        return if alpha.abs() <= 1e-12 * scale.max(1.0) {
            Ok(0.0)
        } else {
            Err(ExclusionReason::ZeroVariance)
        };
    }
    let r_inv = r
        .try_inverse()
        .ok_or(ExclusionReason::RankDeficient)?;
    // [(X'X)^-1]_00 = squared norm of the first row of R^-1.
    let v00: f64 = r_inv.row(0).iter().map(|v| v * v).sum();
    let s2 = ssr / (n - p) as f64;
    Ok((alpha / (s2 * v00).sqrt()).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryStat {
    /// Share strictly above a hurdle.
    Above,
    /// Share inside a closed interval.
    InBin,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub stat: SummaryStat,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub total: usize,
    pub share: f64,
}

impl SummaryRow {
    pub fn label(&self) -> String {
        match self.stat {
            SummaryStat::Above => format!("{}", self.lo),
            SummaryStat::InBin => format!("[{};{}]", self.lo, self.hi),
        }
    }
}

/// Empirical shares above each hurdle and inside each closed bin.
pub fn panel_summary(tstats: &TStatSample, hurdles: &[f64], bins: &[(f64, f64)]) -> Result<Vec<SummaryRow>> {
    if tstats.is_empty() {
        return Err(Error::EmptySample);
    }
    let total = tstats.len();
    let mut rows = Vec::with_capacity(hurdles.len() + bins.len());
    for &h in hurdles {
        if !(h.is_finite() && h >= 0.0) {
            return Err(invalid(format!("hurdle must be finite and non-negative, got {h}")));
        }
        let count = tstats.count_above(h);
        rows.push(SummaryRow { stat: SummaryStat::Above, lo: h, hi: f64::INFINITY, count, total, share: count as f64 / total as f64 });
    }
    for &(lo, hi) in bins {
        if !(lo >= 0.0 && lo <= hi) {
            return Err(invalid(format!("bin [{lo}, {hi}] is not a well-ordered interval in [0, inf)")));
        }
        let count = tstats.count_in(lo, hi);
        rows.push(SummaryRow { stat: SummaryStat::InBin, lo, hi, count, total, share: count as f64 / total as f64 });
    }
    Ok(rows)
}

/// Writes `stat,threshold_or_bin,count,share`.
pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["stat", "threshold_or_bin", "count", "share"])?;
    for row in rows {
        let stat = match row.stat {
            SummaryStat::Above => "share_above",
            SummaryStat::InBin => "share_in_bin",
        };
        w.write_record([stat.to_string(), row.label(), row.count.to_string(), row.share.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

//! FDR control by hurdle selection.
//!
//! Benjamini-Hochberg (1995) is written as a search over observed |t| values
//! for the smallest hurdle whose easy FDR bound is at most `q*`:
//!
//! ```text
//! h* = min { h in {|t_i|} : tail(h) <= (#{|t_i| >= h} / M) * q* }
//! ```
//!
//! Benjamini-Yekutieli's Theorem 1.3 is the same search with the bound
//! inflated by the harmonic penalty `sum_{j=1}^M 1/j`.

use serde::{Deserialize, Serialize};

use crate::bounds::NullModel;
use crate::error::{invalid, Error, Result};
use crate::panel::TStatSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMethod {
    Bh95,
    By13,
}

impl ControlMethod {
    pub fn label(self) -> &'static str {
        match self {
            ControlMethod::Bh95 => "bh95",
            ControlMethod::By13 => "by13",
        }
    }
}

impl std::str::FromStr for ControlMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bh95" | "bh" => Ok(ControlMethod::Bh95),
            "by13" | "by" => Ok(ControlMethod::By13),
            other => Err(invalid(format!("unknown control method `{other}` (expected bh95 or by13)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlRequest {
    pub q_star: f64,
    pub method: ControlMethod,
    pub null: NullModel,
}

impl ControlRequest {
    pub fn new(q_star: f64, method: ControlMethod, null: NullModel) -> Result<Self> {
        if !(q_star > 0.0 && q_star < 1.0) {
            return Err(invalid(format!("q* must lie in (0, 1), got {q_star}")));
        }
        Ok(Self { q_star, method, null })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HurdleResult {
    pub method: ControlMethod,
    pub q_star: f64,
    /// `None` when no candidate hurdle satisfies the constraint.
    pub hurdle: Option<f64>,
    /// Indices into the sample, ascending. Every entry has |t| >= hurdle.
    pub discoveries: Vec<usize>,
    /// `penalty * tail(h*) * M / #discoveries`, at most `q*` when feasible.
    pub fdr_bound_at_hurdle: Option<f64>,
    /// 1 for BH95, the harmonic number H_M for BY 1.3.
    pub penalty: f64,
}

impl HurdleResult {
    pub fn n_discoveries(&self) -> usize {
        self.discoveries.len()
    }
}

/// H_m = sum_{j=1}^m 1/j, summed smallest terms first.
pub fn harmonic_number(m: usize) -> f64 {
    (1..=m).rev().map(|j| 1.0 / j as f64).sum()
}

pub fn bh95_hurdle(tstats: &TStatSample, request: &ControlRequest) -> Result<HurdleResult> {
    hurdle_search(tstats, request, ControlMethod::Bh95, 1.0)
}

pub fn by13_hurdle(tstats: &TStatSample, request: &ControlRequest) -> Result<HurdleResult> {
    hurdle_search(tstats, request, ControlMethod::By13, harmonic_number(tstats.len()))
}

/// Dispatches on `request.method`.
pub fn control_hurdle(tstats: &TStatSample, request: &ControlRequest) -> Result<HurdleResult> {
    match request.method {
        ControlMethod::Bh95 => bh95_hurdle(tstats, request),
        ControlMethod::By13 => by13_hurdle(tstats, request),
    }
}

fn hurdle_search(
    tstats: &TStatSample,
    request: &ControlRequest,
    method: ControlMethod,
    penalty: f64,
) -> Result<HurdleResult> {
    if tstats.is_empty() {
        return Err(Error::EmptySample);
    }
    let abs_t = &tstats.abs_t;
    let m = abs_t.len();
    let mut order: Vec<usize> = (0..m).collect();
    // Descending |t|, ties broken by index.
    order.sort_by(|&a, &b| abs_t[b].total_cmp(&abs_t[a]).then(a.cmp(&b)));

    let mut best: Option<(f64, usize)> = None;
    let mut pos = 0;
    while pos < m {
        let h = abs_t[order[pos]];
        // Advance to the end of the tie group so ties share a fate.
        let mut end = pos + 1;
        while end < m && abs_t[order[end]] == h {
            end += 1;
        }
        let count_ge = end;
        if penalty * request.null.tail(h) <= count_ge as f64 / m as f64 * request.q_star {
            best = Some((h, count_ge));
        }
        pos = end;
    }

    Ok(match best {
        Some((h, count)) => {
            let mut discoveries: Vec<usize> = order[..count].to_vec();
            discoveries.sort_unstable();
            HurdleResult {
                method,
                q_star: request.q_star,
                hurdle: Some(h),
                discoveries,
                fdr_bound_at_hurdle: Some(penalty * request.null.tail(h) * m as f64 / count as f64),
                penalty,
            }
        }
        None => HurdleResult {
            method,
            q_star: request.q_star,
            hurdle: None,
            discoveries: Vec::new(),
            fdr_bound_at_hurdle: None,
            penalty,
        },
    })
}

/// `penalty * tail(hurdle) / share(|t| > hurdle)`, uncapped.
pub fn fdr_bound_at_hurdle(tstats: &TStatSample, hurdle: f64, null: NullModel, penalty: f64) -> Result<f64> {
    if tstats.is_empty() {
        return Err(Error::EmptySample);
    }
    if !(penalty.is_finite() && penalty > 0.0) {
        return Err(invalid(format!("penalty must be positive, got {penalty}")));
    }
    let count = tstats.count_above(hurdle);
    if count == 0 {
        return Err(Error::NoDiscoveries { hurdle });
    }
    Ok(penalty * null.tail(hurdle) * tstats.len() as f64 / count as f64)
}

const BISECTION_TOL: f64 = 1e-9;

/// The two-sided hurdle h with `null.tail(h) = level / m_tests`, by bisection
/// on [0, 10].
pub fn bonferroni_hurdle(m_tests: usize, level: f64, null: NullModel) -> Result<f64> {
    if m_tests == 0 {
        return Err(invalid("Bonferroni needs at least one test"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(invalid(format!("level must lie in (0, 1), got {level}")));
    }
    let target = level / m_tests as f64;
    let (mut lo, mut hi) = (0.0f64, 10.0f64);
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if null.tail(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(v: &[f64]) -> TStatSample {
        TStatSample::from_abs_t(v.to_vec(), "test").unwrap()
    }

    fn req(q: f64) -> ControlRequest {
        ControlRequest::new(q, ControlMethod::Bh95, NullModel::ExactNormal).unwrap()
    }

    #[test]
    fn four_stat_example() {
        let r = bh95_hurdle(&sample(&[3.5, 2.8, 1.0, 0.2]), &req(0.05)).unwrap();
        assert_eq!(r.hurdle, Some(2.8));
        assert_eq!(r.discoveries, vec![0, 1]);
        assert!(r.fdr_bound_at_hurdle.unwrap() <= 0.05);
        assert_eq!(r.penalty, 1.0);
    }

    #[test]
    fn all_zero_is_infeasible() {
        let r = bh95_hurdle(&sample(&[0.0, 0.0, 0.0]), &req(0.05)).unwrap();
        assert_eq!(r.hurdle, None);
        assert!(r.discoveries.is_empty());
    }

    #[test]
    fn single_large_stat_is_discovered() {
        let r = bh95_hurdle(&sample(&[5.0]), &req(0.05)).unwrap();
        assert_eq!(r.discoveries, vec![0]);
    }

    #[test]
    fn ties_are_not_split() {
        let r = bh95_hurdle(&sample(&[2.5, 2.5, 2.5, 0.1]), &req(0.1)).unwrap();
        assert_eq!(r.discoveries, vec![0, 1, 2]);
    }

    #[test]
    fn harmonic_values() {
        assert!((harmonic_number(3) - 11.0 / 6.0).abs() < 1e-15);
        assert_eq!(harmonic_number(1), 1.0);
        let by = by13_hurdle(&sample(&[3.0, 2.0, 1.0]), &req(0.05)).unwrap();
        assert!((by.penalty - 11.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn bound_at_hurdle_errors_above_max() {
        assert!(matches!(
            fdr_bound_at_hurdle(&sample(&[1.0, 2.0]), 3.0, NullModel::PaperMode, 1.0),
            Err(Error::NoDiscoveries { .. })
        ));
    }

    #[test]
    fn bonferroni_single_test() {
        let h = bonferroni_hurdle(1, 0.05, NullModel::ExactNormal).unwrap();
        assert!((h - 1.959_963_984_540_054).abs() < 1e-8);
        assert!(bonferroni_hurdle(0, 0.05, NullModel::ExactNormal).is_err());
    }

    #[test]
    fn q_star_validated() {
        assert!(ControlRequest::new(0.0, ControlMethod::Bh95, NullModel::ExactNormal).is_err());
        assert!(ControlRequest::new(1.0, ControlMethod::By13, NullModel::ExactNormal).is_err());
    }
}

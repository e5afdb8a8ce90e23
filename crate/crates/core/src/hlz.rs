//! The Harvey-Liu-Zhu factor model with staircase publication.
//!
//! Expected returns are a point mass at zero (probability `p0`) mixed with an
//! exponential of mean `lambda_bps`. Signed t-stats are
//! `mu/SE + sqrt(rho) Z + sqrt(1 - rho) e_i`, one common `Z` per draw, which
//! gives every pair of t-stats correlation `rho`. Discovery logic uses |t|.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::NullModel;
use crate::control::bonferroni_hurdle;
use crate::error::{invalid, Result};
use crate::rng::{stream, SimRng};
use crate::simkit::{fdp_from_counts, SelectionRule};

/// Monthly volatility (bps) behind the default standard error.
pub const HLZ_ANNUAL_VOL_BPS: f64 = 1500.0;
pub const HLZ_SAMPLE_MONTHS: f64 = 240.0;

/// Published factor count behind the Bonferroni reference line.
pub const HLZ_BONFERRONI_M: usize = 296;

/// Reference (hurdle, FDR) pairs read off the simulated scatter.
pub const HLZ_REFERENCE_POINTS: [(f64, f64); 3] = [(2.0, 0.09), (2.27, 0.05), (2.95, 0.01)];

/// `(1500 / sqrt(12)) / sqrt(240)`, in bps per month.
pub fn hlz_default_se() -> f64 {
    hlz_se(HLZ_SAMPLE_MONTHS)
}

/// Standard error of a mean return over `months` months at the default
/// annual volatility.
pub fn hlz_se(months: f64) -> f64 {
    (HLZ_ANNUAL_VOL_BPS / 12f64.sqrt()) / months.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HlzParams {
    pub p0: f64,
    pub lambda_bps: f64,
    pub se_bps: f64,
    pub rho: f64,
    pub n_factors: usize,
    pub s_bar: f64,
}

impl Default for HlzParams {
    fn default() -> Self {
        Self { p0: 0.444, lambda_bps: 55.5, se_bps: hlz_default_se(), rho: 0.2, n_factors: 1378, s_bar: 1.0 }
    }
}

impl HlzParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p0) {
            return Err(invalid(format!("p0 must lie in [0, 1], got {}", self.p0)));
        }
        if !(self.lambda_bps.is_finite() && self.lambda_bps > 0.0) {
            return Err(invalid(format!("lambda must be positive, got {}", self.lambda_bps)));
        }
        if !(self.se_bps.is_finite() && self.se_bps > 0.0) {
            return Err(invalid(format!("SE must be positive, got {}", self.se_bps)));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(invalid(format!("rho must lie in [0, 1), got {}", self.rho)));
        }
        if self.n_factors == 0 {
            return Err(invalid("n_factors must be positive"));
        }
        if !(self.s_bar > 0.0 && self.s_bar <= 1.0) {
            return Err(invalid(format!("s_bar must lie in (0, 1], got {}", self.s_bar)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorDraw {
    pub mu_bps: Vec<f64>,
    /// Signed t-stats.
    pub t: Vec<f64>,
    /// Exactly the factors with `mu_bps == 0`.
    pub is_false: Vec<bool>,
    pub published: Vec<bool>,
}

impl FactorDraw {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Draws expected returns, then t-stats, then publication decisions.
pub fn hlz_draw(params: &HlzParams, rng: &mut SimRng) -> Result<FactorDraw> {
    params.validate()?;
    let n = params.n_factors;
    let exp = Exp::new(1.0 / params.lambda_bps).map_err(|e| invalid(e.to_string()))?;
    let mut mu_bps = Vec::with_capacity(n);
    let mut is_false = Vec::with_capacity(n);
    for _ in 0..n {
        let null = rng.random::<f64>() < params.p0;
        let mu = if null {
            0.0
        } else {
            // A zero draw would blur the true/false split.
            loop {
                let m: f64 = exp.sample(rng);
                if m > 0.0 {
                    break m;
                }
            }
        };
        mu_bps.push(mu);
        is_false.push(null);
    }
    let z: f64 = StandardNormal.sample(rng);
    let (a, b) = (params.rho.sqrt(), (1.0 - params.rho).sqrt());
    let common = a * z;
    let t: Vec<f64> = mu_bps
        .iter()
        .map(|&m| {
            let e: f64 = StandardNormal.sample(rng);
            m / params.se_bps + common + b * e
        })
        .collect();
    let rule = SelectionRule::staircase(params.s_bar)?;
    let published = t
        .iter()
        .map(|&ti| {
            let u: f64 = rng.random();
            u < rule.probability(ti.abs())
        })
        .collect();
    Ok(FactorDraw { mu_bps, t, is_false, published })
}

/// The draw for replication `index` under `seed`.
pub fn hlz_replicate(params: &HlzParams, seed: u64, index: usize) -> Result<FactorDraw> {
    hlz_draw(params, &mut stream(seed, index as u64))
}

/// Which factors count as discoveries once past the hurdle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscoveryPopulation {
    /// Every simulated factor, as in a scatter of the whole model.
    #[default]
    AllFactors,
    /// Only factors that pass publication selection.
    Published,
}

impl DiscoveryPopulation {
    pub fn label(self) -> &'static str {
        match self {
            DiscoveryPopulation::AllFactors => "all",
            DiscoveryPopulation::Published => "published",
        }
    }
}

impl std::str::FromStr for DiscoveryPopulation {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" | "all_factors" => Ok(DiscoveryPopulation::AllFactors),
            "published" => Ok(DiscoveryPopulation::Published),
            other => Err(invalid(format!("unknown population `{other}` (expected all or published)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HlzCurveRow {
    pub hurdle: f64,
    pub n_sims: usize,
    pub mean_fdr: f64,
    pub mean_discoveries: f64,
    pub mean_false_discoveries: f64,
}

/// Counts (discoveries, false discoveries) per hurdle for one draw.
fn count_at(draw: &FactorDraw, hurdles: &[f64], population: DiscoveryPopulation) -> Vec<(usize, usize)> {
    hurdles
        .iter()
        .map(|&h| {
            let (mut r, mut f) = (0, 0);
            for i in 0..draw.len() {
                if population == DiscoveryPopulation::Published && !draw.published[i] {
                    continue;
                }
                if draw.t[i].abs() > h {
                    r += 1;
                    f += usize::from(draw.is_false[i]);
                }
            }
            (r, f)
        })
        .collect()
}

/// Mean FDP and discovery counts per hurdle over `n_sims` replications.
pub fn hlz_fdr_curve(
    params: &HlzParams,
    hurdles: &[f64],
    n_sims: usize,
    seed: u64,
    population: DiscoveryPopulation,
) -> Result<Vec<HlzCurveRow>> {
    params.validate()?;
    if n_sims == 0 {
        return Err(invalid("n_sims must be positive"));
    }
    if hurdles.is_empty() || hurdles.iter().any(|h| !(h.is_finite() && *h >= 0.0)) {
        return Err(invalid("hurdles must be a non-empty list of non-negative numbers"));
    }
    let counts: Vec<Vec<(usize, usize)>> = (0..n_sims)
        .into_par_iter()
        .map(|r| hlz_replicate(params, seed, r).map(|d| count_at(&d, hurdles, population)))
        .collect::<Result<_>>()?;
    let n = n_sims as f64;
    Ok(hurdles
        .iter()
        .enumerate()
        .map(|(j, &hurdle)| {
            let (mut fdp, mut r, mut f) = (0.0, 0.0, 0.0);
            for rep in &counts {
                let (rj, fj) = rep[j];
                fdp += fdp_from_counts(rj, fj).fdp;
                r += rj as f64;
                f += fj as f64;
            }
            HlzCurveRow { hurdle, n_sims, mean_fdr: fdp / n, mean_discoveries: r / n, mean_false_discoveries: f / n }
        })
        .collect())
}

/// Among published factors with |t| > `lower`, the share with |t| > `upper`,
/// averaged over replications that publish anything above `lower`.
pub fn hlz_share_above(params: &HlzParams, lower: f64, upper: f64, n_sims: usize, seed: u64) -> Result<f64> {
    params.validate()?;
    if lower > upper {
        return Err(invalid(format!("lower {lower} exceeds upper {upper}")));
    }
    if n_sims == 0 {
        return Err(invalid("n_sims must be positive"));
    }
    let shares: Vec<Option<f64>> = (0..n_sims)
        .into_par_iter()
        .map(|r| {
            let d = hlz_replicate(params, seed, r)?;
            let (mut above_lower, mut above_upper) = (0usize, 0usize);
            for i in 0..d.len() {
                let a = d.t[i].abs();
                if d.published[i] && a > lower {
                    above_lower += 1;
                    above_upper += usize::from(a > upper);
                }
            }
            Ok((above_lower > 0).then(|| above_upper as f64 / above_lower as f64))
        })
        .collect::<Result<_>>()?;
    let defined: Vec<f64> = shares.into_iter().flatten().collect();
    if defined.is_empty() {
        return Err(crate::Error::NoDiscoveries { hurdle: lower });
    }
    Ok(defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Upper bound on the FDR at a lower hurdle: the `share_above` fraction past
/// the stricter hurdle has FDR `fdr_above`, the rest is treated as all false.
pub fn implied_fdr(share_above: f64, fdr_above: f64) -> f64 {
    share_above * fdr_above + (1.0 - share_above)
}

/// Bonferroni hurdle at 5% with the published factor count.
pub fn hlz_bonferroni_hurdle(null: NullModel) -> Result<f64> {
    bonferroni_hurdle(HLZ_BONFERRONI_M, 0.05, null)
}

pub const CURVE_CSV_HEADER: [&str; 5] = ["hurdle", "n_sims", "mean_fdr", "mean_discoveries", "mean_false_discoveries"];

pub fn write_curve_csv<W: Write>(rows: &[HlzCurveRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CURVE_CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.hurdle.to_string(),
            r.n_sims.to_string(),
            r.mean_fdr.to_string(),
            r.mean_discoveries.to_string(),
            r.mean_false_discoveries.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub const SCATTER_CSV_HEADER: [&str; 5] = ["factor_index", "mu_bps", "abs_t", "is_false", "published"];

/// One row per factor of a single draw.
pub fn write_scatter_csv<W: Write>(draw: &FactorDraw, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SCATTER_CSV_HEADER)?;
    for i in 0..draw.len() {
        w.write_record([
            i.to_string(),
            draw.mu_bps[i].to_string(),
            draw.t[i].abs().to_string(),
            draw.is_false[i].to_string(),
            draw.published[i].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

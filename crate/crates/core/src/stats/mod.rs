//! Interval estimates, heteroscedastic ANOVA and t-tests, inter-rater
//! reliability, correlation with multiple-comparison correction, and rank
//! summaries. Everything here is a pure function of its inputs and seed.

pub mod dist;
mod report;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::campaign::AggregateJudgments;
use crate::generation::GuidanceCondition;

pub use report::{
    analyze, AnalysisOptions, AnalysisReport, AnovaUnit, ConditionSummary, MetricCorrelation, MetricSummary,
    PreferenceSplit, RelevanceSummary, Target,
};

pub const BOOTSTRAP_RESAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("no samples")]
    Empty,
    #[error("{0}")]
    Degenerate(String),
    #[error("insufficient data: {0}")]
    Insufficient(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("kappa is undefined when expected agreement is 1")]
    UndefinedKappa,
    #[error("correlation is undefined for constant input")]
    UndefinedCorrelation,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CiMethod {
    #[default]
    Bootstrap,
    TInterval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalEstimate {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub method: CiMethod,
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Confidence interval for the mean: percentile bootstrap over
/// [`BOOTSTRAP_RESAMPLES`] seeded resamples, or mean ± t·s/√n.
pub fn mean_ci(samples: &[f64], level: f64, method: CiMethod, seed: u64) -> Result<IntervalEstimate, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::Empty);
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(StatsError::InvalidInput(format!("level {level} outside (0, 1)")));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(StatsError::InvalidInput("non-finite sample".into()));
    }
    let m = mean(samples);
    let n = samples.len();
    let (lower, upper) = if n < 2 {
        (m, m)
    } else {
        match method {
            CiMethod::TInterval => {
                let half =
                    dist::t_quantile((1.0 + level) / 2.0, n as f64 - 1.0) * (variance(samples) / n as f64).sqrt();
                (m - half, m + half)
            }
            CiMethod::Bootstrap => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut means: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
                    .map(|_| (0..n).map(|_| samples[rng.random_range(0..n)]).sum::<f64>() / n as f64)
                    .collect();
                means.sort_by(f64::total_cmp);
                let alpha = 1.0 - level;
                (
                    quantile_sorted(&means, alpha / 2.0),
                    quantile_sorted(&means, 1.0 - alpha / 2.0),
                )
            }
        }
    };
    // A percentile interval can in principle miss a heavily skewed mean.
    Ok(IntervalEstimate {
        mean: m,
        lower: lower.min(m),
        upper: upper.max(m),
        level,
        method,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    #[serde(rename = "F")]
    pub f: f64,
    pub df1: f64,
    pub df2: f64,
    pub p: f64,
}

fn check_groups(groups: &[Vec<f64>]) -> Result<(), StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::Insufficient(format!(
            "{} group(s); need at least 2",
            groups.len()
        )));
    }
    for (i, g) in groups.iter().enumerate() {
        if g.len() < 2 {
            return Err(StatsError::Degenerate(format!(
                "group {i} has {} sample(s); need at least 2",
                g.len()
            )));
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(StatsError::InvalidInput(format!("group {i} has a non-finite sample")));
        }
        if variance(g) == 0.0 {
            return Err(StatsError::Degenerate(format!("group {i} has zero variance")));
        }
    }
    Ok(())
}

/// Welch's heteroscedastic one-way ANOVA.
pub fn welch_anova(groups: &[Vec<f64>]) -> Result<AnovaResult, StatsError> {
    check_groups(groups)?;
    let k = groups.len() as f64;
    let w: Vec<f64> = groups.iter().map(|g| g.len() as f64 / variance(g)).collect();
    let means: Vec<f64> = groups.iter().map(|g| mean(g)).collect();
    let sw: f64 = w.iter().sum();
    let grand = w.iter().zip(&means).map(|(w, m)| w * m).sum::<f64>() / sw;
    let between = w.iter().zip(&means).map(|(w, m)| w * (m - grand).powi(2)).sum::<f64>() / (k - 1.0);
    let lambda: f64 = groups
        .iter()
        .zip(&w)
        .map(|(g, wi)| (1.0 - wi / sw).powi(2) / (g.len() as f64 - 1.0))
        .sum();
    let f = between / (1.0 + 2.0 * (k - 2.0) * lambda / (k * k - 1.0));
    let df1 = k - 1.0;
    let df2 = (k * k - 1.0) / (3.0 * lambda);
    Ok(AnovaResult {
        f,
        df1,
        df2,
        p: dist::f_sf(f, df1, df2),
    })
}

/// Classical equal-variance one-way ANOVA.
pub fn fisher_anova(groups: &[Vec<f64>]) -> Result<AnovaResult, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::Insufficient(format!(
            "{} group(s); need at least 2",
            groups.len()
        )));
    }
    if let Some(i) = groups.iter().position(|g| g.is_empty()) {
        return Err(StatsError::Degenerate(format!("group {i} is empty")));
    }
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    let grand = mean(&all);
    let n = all.len() as f64;
    let k = groups.len() as f64;
    let ssb: f64 = groups.iter().map(|g| g.len() as f64 * (mean(g) - grand).powi(2)).sum();
    let ssw: f64 = groups
        .iter()
        .map(|g| {
            let m = mean(g);
            g.iter().map(|x| (x - m).powi(2)).sum::<f64>()
        })
        .sum();
    if n - k <= 0.0 || ssw == 0.0 {
        return Err(StatsError::Degenerate("no within-group variation".into()));
    }
    let f = (ssb / (k - 1.0)) / (ssw / (n - k));
    Ok(AnovaResult {
        f,
        df1: k - 1.0,
        df2: n - k,
        p: dist::f_sf(f, k - 1.0, n - k),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

/// Welch's unequal-variance two-sample t-test, two-sided.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult, StatsError> {
    check_groups(&[a.to_vec(), b.to_vec()])?;
    let (va, vb) = (variance(a) / a.len() as f64, variance(b) / b.len() as f64);
    let t = (mean(a) - mean(b)) / (va + vb).sqrt();
    let df = (va + vb).powi(2) / (va * va / (a.len() as f64 - 1.0) + vb * vb / (b.len() as f64 - 1.0));
    Ok(TTestResult {
        t,
        df,
        p: dist::t_two_sided_p(t, df),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReliabilityKind {
    KrippendorffAlpha,
    FleissKappa,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasurementLevel {
    Nominal,
    #[default]
    Ordinal,
    Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityResult {
    pub coefficient: f64,
    pub kind: ReliabilityKind,
    pub level: MeasurementLevel,
    pub n_items: usize,
    pub n_raters: usize,
}

/// Fleiss' κ from an item × category count matrix where every row sums to
/// `n_raters`.
pub fn fleiss_kappa(counts: &[Vec<usize>], n_raters: usize) -> Result<ReliabilityResult, StatsError> {
    if counts.is_empty() {
        return Err(StatsError::Empty);
    }
    if n_raters < 2 {
        return Err(StatsError::InvalidInput("need at least 2 raters per item".into()));
    }
    let k = counts[0].len();
    for (i, row) in counts.iter().enumerate() {
        if row.len() != k {
            return Err(StatsError::InvalidInput(format!(
                "item {i} has {} categories, expected {k}",
                row.len()
            )));
        }
        let s: usize = row.iter().sum();
        if s != n_raters {
            return Err(StatsError::InvalidInput(format!(
                "item {i} has {s} ratings, expected {n_raters}"
            )));
        }
    }
    let n = n_raters as f64;
    let items = counts.len() as f64;
    let p_bar = counts
        .iter()
        .map(|row| (row.iter().map(|&c| (c * c) as f64).sum::<f64>() - n) / (n * (n - 1.0)))
        .sum::<f64>()
        / items;
    let p_e: f64 = (0..k)
        .map(|j| {
            let pj = counts.iter().map(|r| r[j] as f64).sum::<f64>() / (items * n);
            pj * pj
        })
        .sum();
    if (1.0 - p_e).abs() < 1e-15 {
        return Err(StatsError::UndefinedKappa);
    }
    Ok(ReliabilityResult {
        coefficient: (p_bar - p_e) / (1.0 - p_e),
        kind: ReliabilityKind::FleissKappa,
        level: MeasurementLevel::Nominal,
        n_items: counts.len(),
        n_raters,
    })
}

/// Krippendorff's α from an item × rater matrix (`None` = not rated), via
/// the coincidence matrix. Items with fewer than two ratings are not
/// pairable and are ignored.
pub fn krippendorff_alpha(data: &[Vec<Option<f64>>], level: MeasurementLevel) -> Result<ReliabilityResult, StatsError> {
    let units: Vec<Vec<f64>> = data
        .iter()
        .map(|row| row.iter().flatten().copied().collect::<Vec<f64>>())
        .filter(|vals| vals.len() >= 2)
        .collect();
    if units.iter().flatten().any(|v| !v.is_finite()) {
        return Err(StatsError::InvalidInput("non-finite rating".into()));
    }
    if units.is_empty() {
        return Err(StatsError::Insufficient("no item has two or more ratings".into()));
    }
    let mut values: Vec<f64> = units.iter().flatten().copied().collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let idx = |v: f64| values.iter().position(|x| *x == v).expect("value collected above");
    let k = values.len();
    let mut o = vec![vec![0.0f64; k]; k];
    for vals in &units {
        let m = vals.len() as f64;
        for (i, a) in vals.iter().enumerate() {
            for (j, b) in vals.iter().enumerate() {
                if i != j {
                    o[idx(*a)][idx(*b)] += 1.0 / (m - 1.0);
                }
            }
        }
    }
    let n_c: Vec<f64> = o.iter().map(|row| row.iter().sum()).collect();
    let n: f64 = n_c.iter().sum();
    let delta = |c: usize, kk: usize| -> f64 {
        match level {
            MeasurementLevel::Nominal => f64::from(u8::from(c != kk)),
            MeasurementLevel::Interval => (values[c] - values[kk]).powi(2),
            MeasurementLevel::Ordinal => {
                let (lo, hi) = (c.min(kk), c.max(kk));
                let s: f64 = n_c[lo..=hi].iter().sum();
                (s - (n_c[c] + n_c[kk]) / 2.0).powi(2)
            }
        }
    };
    let mut d_o = 0.0;
    let mut d_e = 0.0;
    for c in 0..k {
        for kk in 0..k {
            let d = delta(c, kk);
            d_o += o[c][kk] * d;
            d_e += n_c[c] * n_c[kk] * d;
        }
    }
    if d_e == 0.0 {
        return Err(StatsError::Insufficient("only one value was ever assigned".into()));
    }
    let n_raters = data.iter().map(Vec::len).max().unwrap_or(0);
    Ok(ReliabilityResult {
        coefficient: 1.0 - (n - 1.0) * d_o / d_e,
        kind: ReliabilityKind::KrippendorffAlpha,
        level,
        n_items: units.len(),
        n_raters,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub r: f64,
    pub p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_adjusted: Option<f64>,
    pub n: usize,
}

/// Sample Pearson r with a two-sided p from the t transform.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::InvalidInput(format!(
            "lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(StatsError::Insufficient(format!("{} pairs; need at least 3", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::InvalidInput("non-finite value".into()));
    }
    let (mx, my) = (mean(x), mean(y));
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::UndefinedCorrelation);
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let n = x.len();
    let p = if r.abs() == 1.0 {
        0.0
    } else {
        let t = r * ((n as f64 - 2.0) / (1.0 - r * r)).sqrt();
        dist::t_two_sided_p(t, n as f64 - 2.0)
    };
    Ok(CorrelationResult {
        r,
        p,
        p_adjusted: None,
        n,
    })
}

/// p′ = min(1, p·m), order preserved. `m` below the number of p-values is
/// raised to it.
pub fn adjust_bonferroni(p_values: &[f64], m: usize) -> Vec<f64> {
    let m = m.max(p_values.len()) as f64;
    p_values.iter().map(|p| (p * m).min(1.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub condition: GuidanceCondition,
    /// counts[r - 1] = rankings placing the condition at rank r.
    pub counts: [usize; 3],
    pub proportions: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwisePreference {
    pub winner: GuidanceCondition,
    pub loser: GuidanceCondition,
    pub wins: usize,
    pub n: usize,
    pub proportion: f64,
    pub ci: IntervalEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankAnalysis {
    pub n_rankings: usize,
    pub distribution: Vec<RankRow>,
    /// The three unordered pairs, each reported as `winner` over `loser` in
    /// none < low < high order.
    pub pairwise: Vec<PairwisePreference>,
}

/// Rank distributions and pairwise preference proportions; each proportion's
/// interval is [`mean_ci`] over per-ranking win indicators.
pub fn rank_analysis(
    agg: &AggregateJudgments,
    level: f64,
    method: CiMethod,
    seed: u64,
) -> Result<RankAnalysis, StatsError> {
    let rankings = &agg.judgments.rankings;
    if rankings.is_empty() {
        return Err(StatsError::Insufficient("no rankings".into()));
    }
    let n = rankings.len();
    let distribution = GuidanceCondition::RANKED
        .iter()
        .map(|c| {
            let counts = agg.rank_distribution.get(c).copied().unwrap_or_default();
            RankRow {
                condition: *c,
                counts,
                proportions: counts.map(|x| x as f64 / n as f64),
            }
        })
        .collect();
    let pairs = [
        (GuidanceCondition::Low, GuidanceCondition::None),
        (GuidanceCondition::Low, GuidanceCondition::High),
        (GuidanceCondition::None, GuidanceCondition::High),
    ];
    let mut pairwise = Vec::new();
    for (a, b) in pairs {
        let indicators: Vec<f64> = rankings
            .iter()
            .map(|r| f64::from(u8::from(r.ranks.get(&a) < r.ranks.get(&b))))
            .collect();
        let wins = indicators.iter().filter(|x| **x == 1.0).count();
        pairwise.push(PairwisePreference {
            winner: a,
            loser: b,
            wins,
            n,
            proportion: wins as f64 / n as f64,
            ci: mean_ci(&indicators, level, method, seed)?,
        });
    }
    Ok(RankAnalysis {
        n_rankings: n,
        distribution,
        pairwise,
    })
}

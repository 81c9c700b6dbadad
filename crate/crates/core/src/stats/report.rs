use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{
    adjust_bonferroni, fisher_anova, fleiss_kappa, krippendorff_alpha, mean_ci, pearson, rank_analysis, welch_anova,
    welch_t_test, AnovaResult, CiMethod, CorrelationResult, IntervalEstimate, MeasurementLevel, RankAnalysis,
    ReliabilityResult, StatsError, TTestResult,
};
use crate::campaign::AggregateJudgments;
use crate::generation::GuidanceCondition;
use crate::metrics::MetricTable;

/// What one ANOVA observation is.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnovaUnit {
    /// Mean groundedness of each response over its annotators.
    #[default]
    ResponseMeans,
    /// Every individual groundedness judgment.
    RawJudgments,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisOptions {
    pub level: f64,
    pub ci_method: CiMethod,
    pub seed: u64,
    pub groundedness_level: MeasurementLevel,
    pub relevance_level: MeasurementLevel,
    pub anova_unit: AnovaUnit,
    /// Also report the equal-variance ANOVA.
    pub fisher: bool,
    /// Number of comparisons for the metric correlation table.
    pub bonferroni_m: usize,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            level: 0.95,
            ci_method: CiMethod::Bootstrap,
            seed: 0,
            groundedness_level: MeasurementLevel::Ordinal,
            relevance_level: MeasurementLevel::Ordinal,
            anova_unit: AnovaUnit::ResponseMeans,
            fisher: false,
            bonferroni_m: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: GuidanceCondition,
    pub n: usize,
    pub ci: IntervalEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    pub condition: GuidanceCondition,
    pub n: usize,
    pub ci: IntervalEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceSummary {
    pub n_queries: usize,
    pub mean: f64,
    /// Share of queries with mean relevance ≥ 1 (topic or better).
    pub at_least_topic: f64,
    /// Share with mean relevance ≥ 2 (partial or better).
    pub at_least_partial: f64,
    /// Histogram of per-query means rounded to the nearest half point.
    pub histogram: BTreeMap<String, usize>,
}

/// Document relevance for queries whose annotators preferred the low
/// guidance response over the high guidance one, against the reverse.
/// The test is run as (high-preferred, low-preferred), so a negative t means
/// low-preferred queries had more relevant documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceSplit {
    pub n_low_preferred: usize,
    pub n_high_preferred: usize,
    pub mean_low_preferred: f64,
    pub mean_high_preferred: f64,
    pub diff: f64,
    pub test: TTestResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Faithfulness,
    Relevance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCorrelation {
    /// A ranked condition, or `pooled`.
    pub guidance: String,
    pub target: Target,
    pub metric: String,
    pub result: CorrelationResult,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub n_rankings: usize,
    pub n_groundedness_items: usize,
    pub ranks: Option<RankAnalysis>,
    pub groundedness_by_condition: Vec<ConditionSummary>,
    pub groundedness_anova: Option<AnovaResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groundedness_fisher_anova: Option<AnovaResult>,
    pub groundedness_alpha: Option<ReliabilityResult>,
    /// Per judgment: the low guidance response's rank (1 = best) against the
    /// same annotator's groundedness judgment of it.
    pub low_rank_vs_groundedness: Option<CorrelationResult>,
    pub relevance: Option<RelevanceSummary>,
    pub relevance_kappa: Option<ReliabilityResult>,
    pub relevance_alpha: Option<ReliabilityResult>,
    /// Per response: document relevance (query mean) against mean groundedness.
    pub relevance_vs_groundedness: Option<CorrelationResult>,
    pub relevance_by_preference: Option<PreferenceSplit>,
    pub metric_summaries: Vec<MetricSummary>,
    pub metric_correlations: Vec<MetricCorrelation>,
    /// Why any optional section is missing.
    pub warnings: Vec<String>,
}

fn keep<T>(warnings: &mut Vec<String>, what: &str, r: Result<T, StatsError>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            warnings.push(format!("{what}: {e}"));
            None
        }
    }
}

fn rater_matrix<'a>(items: impl Iterator<Item = (String, &'a str, f64)>) -> Vec<Vec<Option<f64>>> {
    let mut by_item: BTreeMap<String, BTreeMap<&str, f64>> = BTreeMap::new();
    let mut raters = BTreeSet::new();
    for (item, rater, v) in items {
        by_item.entry(item).or_default().insert(rater, v);
        raters.insert(rater);
    }
    by_item
        .values()
        .map(|row| raters.iter().map(|r| row.get(r).copied()).collect())
        .collect()
}

/// Runs every analysis the inputs allow. `agg` holds ranking/groundedness
/// and/or relevance judgments (see [`crate::campaign::Judgments::merge`]);
/// `metrics` adds per-condition metric intervals and the metric correlation
/// table.
pub fn analyze(agg: &AggregateJudgments, metrics: Option<&MetricTable>, opts: &AnalysisOptions) -> AnalysisReport {
    let mut w = Vec::new();
    let mut report = AnalysisReport {
        n_rankings: agg.n_rankings,
        n_groundedness_items: agg.groundedness.len(),
        ..Default::default()
    };
    let j = &agg.judgments;

    if !j.rankings.is_empty() {
        report.ranks = keep(
            &mut w,
            "rank analysis",
            rank_analysis(agg, opts.level, opts.ci_method, opts.seed),
        );
    }

    if !j.groundedness.is_empty() {
        let groups: Vec<Vec<f64>> = GuidanceCondition::RANKED
            .iter()
            .map(|c| match opts.anova_unit {
                AnovaUnit::ResponseMeans => agg
                    .groundedness
                    .iter()
                    .filter(|g| g.condition == *c)
                    .map(|g| g.mean)
                    .collect(),
                AnovaUnit::RawJudgments => j
                    .groundedness
                    .iter()
                    .filter(|g| g.condition == *c)
                    .map(|g| f64::from(g.value))
                    .collect(),
            })
            .collect();
        for (c, g) in GuidanceCondition::RANKED.iter().zip(&groups) {
            if let Some(ci) = keep(
                &mut w,
                &format!("groundedness interval ({c})"),
                mean_ci(g, opts.level, opts.ci_method, opts.seed),
            ) {
                report.groundedness_by_condition.push(ConditionSummary {
                    condition: *c,
                    n: g.len(),
                    ci,
                });
            }
        }
        report.groundedness_anova = keep(&mut w, "groundedness ANOVA", welch_anova(&groups));
        if opts.fisher {
            report.groundedness_fisher_anova = keep(&mut w, "groundedness Fisher ANOVA", fisher_anova(&groups));
        }
        let matrix = rater_matrix(j.groundedness.iter().map(|g| {
            (
                format!("{}\u{0}{}", g.query_id, g.condition),
                g.annotator_id.as_str(),
                f64::from(g.value),
            )
        }));
        report.groundedness_alpha = keep(
            &mut w,
            "groundedness alpha",
            krippendorff_alpha(&matrix, opts.groundedness_level),
        );

        let mut rank_x = Vec::new();
        let mut ground_y = Vec::new();
        for r in &j.rankings {
            let Some(rank) = r.ranks.get(&GuidanceCondition::Low) else {
                continue;
            };
            if let Some(g) = j.groundedness.iter().find(|g| {
                g.query_id == r.query_id && g.annotator_id == r.annotator_id && g.condition == GuidanceCondition::Low
            }) {
                rank_x.push(f64::from(*rank));
                ground_y.push(f64::from(g.value));
            }
        }
        if !rank_x.is_empty() {
            report.low_rank_vs_groundedness = keep(&mut w, "low rank vs groundedness", pearson(&rank_x, &ground_y));
        }
    }

    if !j.relevance.is_empty() {
        let means: Vec<f64> = agg.relevance.iter().map(|r| r.mean).collect();
        let n = means.len() as f64;
        let mut histogram = BTreeMap::new();
        for m in &means {
            *histogram.entry(format!("{:.1}", (m * 2.0).round() / 2.0)).or_insert(0) += 1;
        }
        report.relevance = Some(RelevanceSummary {
            n_queries: means.len(),
            mean: means.iter().sum::<f64>() / n,
            at_least_topic: means.iter().filter(|m| **m >= 1.0).count() as f64 / n,
            at_least_partial: means.iter().filter(|m| **m >= 2.0).count() as f64 / n,
            histogram,
        });

        let mut per_query: BTreeMap<&str, Vec<u8>> = BTreeMap::new();
        for r in &j.relevance {
            per_query.entry(&r.query_id).or_default().push(r.relevance);
        }
        let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
        for v in per_query.values() {
            *sizes.entry(v.len()).or_default() += 1;
        }
        // Fleiss needs a constant rater count; use the most common one.
        let modal = sizes
            .iter()
            .max_by_key(|(k, n)| (**n, **k))
            .map(|(k, _)| *k)
            .unwrap_or(0);
        let counts: Vec<Vec<usize>> = per_query
            .values()
            .filter(|v| v.len() == modal)
            .map(|v| (0..4u8).map(|c| v.iter().filter(|x| **x == c).count()).collect())
            .collect();
        if counts.len() < per_query.len() {
            w.push(format!(
                "relevance kappa: {} of {} queries without exactly {modal} judgments were left out",
                per_query.len() - counts.len(),
                per_query.len()
            ));
        }
        report.relevance_kappa = keep(&mut w, "relevance kappa", fleiss_kappa(&counts, modal));
        let matrix = rater_matrix(
            j.relevance
                .iter()
                .map(|r| (r.query_id.clone(), r.annotator_id.as_str(), f64::from(r.relevance))),
        );
        report.relevance_alpha = keep(
            &mut w,
            "relevance alpha",
            krippendorff_alpha(&matrix, opts.relevance_level),
        );

        if !agg.groundedness.is_empty() {
            let (xs, ys): (Vec<f64>, Vec<f64>) = agg
                .groundedness
                .iter()
                .filter_map(|g| agg.relevance_mean(&g.query_id).map(|r| (r, g.mean)))
                .unzip();
            report.relevance_vs_groundedness = keep(&mut w, "relevance vs groundedness", pearson(&xs, &ys));
        }

        if !j.rankings.is_empty() {
            let mut low_wins: BTreeMap<&str, i64> = BTreeMap::new();
            for r in &j.rankings {
                let (Some(l), Some(h)) = (
                    r.ranks.get(&GuidanceCondition::Low),
                    r.ranks.get(&GuidanceCondition::High),
                ) else {
                    continue;
                };
                *low_wins.entry(&r.query_id).or_default() += if l < h { 1 } else { -1 };
            }
            let mut low_pref = Vec::new();
            let mut high_pref = Vec::new();
            for (q, margin) in low_wins {
                let Some(rel) = agg.relevance_mean(q) else { continue };
                match margin {
                    m if m > 0 => low_pref.push(rel),
                    m if m < 0 => high_pref.push(rel),
                    _ => {}
                }
            }
            if let Some(test) = keep(&mut w, "relevance by preference", welch_t_test(&high_pref, &low_pref)) {
                let ml = low_pref.iter().sum::<f64>() / low_pref.len() as f64;
                let mh = high_pref.iter().sum::<f64>() / high_pref.len() as f64;
                report.relevance_by_preference = Some(PreferenceSplit {
                    n_low_preferred: low_pref.len(),
                    n_high_preferred: high_pref.len(),
                    mean_low_preferred: ml,
                    mean_high_preferred: mh,
                    diff: ml - mh,
                    test,
                });
            }
        }
    }

    if let Some(table) = metrics {
        metric_sections(&mut report, &mut w, agg, table, opts);
    }
    report.warnings = w;
    report
}

fn metric_sections(
    report: &mut AnalysisReport,
    w: &mut Vec<String>,
    agg: &AggregateJudgments,
    table: &MetricTable,
    opts: &AnalysisOptions,
) {
    for metric in table.metric_names() {
        for c in GuidanceCondition::ALL {
            let scores: Vec<f64> = table
                .rows
                .iter()
                .filter(|r| r.metric == metric && r.condition == c)
                .filter_map(|r| r.score)
                .collect();
            if scores.is_empty() {
                continue;
            }
            if let Some(ci) = keep(
                w,
                &format!("{metric} interval ({c})"),
                mean_ci(&scores, opts.level, opts.ci_method, opts.seed),
            ) {
                report.metric_summaries.push(MetricSummary {
                    metric: metric.to_string(),
                    condition: c,
                    n: scores.len(),
                    ci,
                });
            }
        }
    }

    if agg.groundedness.is_empty() && agg.relevance.is_empty() {
        return;
    }
    let rows: Vec<(String, Vec<GuidanceCondition>)> = GuidanceCondition::RANKED
        .iter()
        .map(|c| (c.to_string(), vec![*c]))
        .chain([("pooled".to_string(), GuidanceCondition::RANKED.to_vec())])
        .collect();
    let mut cells = Vec::new();
    for target in [Target::Faithfulness, Target::Relevance] {
        for metric in table.metric_names() {
            for (label, conds) in &rows {
                let mut xs = Vec::new();
                let mut ys = Vec::new();
                for r in table
                    .rows
                    .iter()
                    .filter(|r| r.metric == metric && conds.contains(&r.condition))
                {
                    let Some(score) = r.score else { continue };
                    let human = match target {
                        Target::Faithfulness => agg.groundedness_mean(&r.query_id, r.condition),
                        Target::Relevance => agg.relevance_mean(&r.query_id),
                    };
                    if let Some(h) = human {
                        xs.push(score);
                        ys.push(h);
                    }
                }
                if xs.is_empty() {
                    continue;
                }
                if let Some(result) = keep(
                    w,
                    &format!("{metric} vs {target:?} ({label})").to_lowercase(),
                    pearson(&xs, &ys),
                ) {
                    cells.push(MetricCorrelation {
                        guidance: label.clone(),
                        target,
                        metric: metric.to_string(),
                        result,
                    });
                }
            }
        }
    }
    let ps: Vec<f64> = cells.iter().map(|c| c.result.p).collect();
    for (cell, adj) in cells
        .iter_mut()
        .zip(adjust_bonferroni(&ps, opts.bonferroni_m.max(ps.len())))
    {
        cell.result.p_adjusted = Some(adj);
    }
    // m is per report, not per column block; raise it only if needed.
    report.metric_correlations = cells;
}

fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

fn fmt_ci(ci: &IntervalEstimate) -> String {
    format!("{:.3} [{:.3}, {:.3}]", ci.mean, ci.lower, ci.upper)
}

impl AnalysisReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Correlation table: one row per guidance level plus `pooled`, one
    /// column per (target, metric), cells `r` with significance stars from
    /// the adjusted p-value.
    pub fn correlation_table_csv(&self) -> Result<String, csv::Error> {
        let mut columns: Vec<(Target, String)> = Vec::new();
        for c in &self.metric_correlations {
            if !columns.contains(&(c.target, c.metric.clone())) {
                columns.push((c.target, c.metric.clone()));
            }
        }
        columns.sort();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["guidance".to_string()];
        header.extend(
            columns
                .iter()
                .map(|(t, m)| format!("{}:{m}", format!("{t:?}").to_lowercase())),
        );
        w.write_record(&header)?;
        let labels = GuidanceCondition::RANKED
            .iter()
            .map(|c| c.to_string())
            .chain(["pooled".to_string()]);
        for label in labels {
            let mut row = vec![label.clone()];
            for (t, m) in &columns {
                let cell = self
                    .metric_correlations
                    .iter()
                    .find(|c| c.guidance == label && c.target == *t && &c.metric == m)
                    .map(|c| format!("{:.2}{}", c.result.r, stars(c.result.p_adjusted.unwrap_or(c.result.p))))
                    .unwrap_or_default();
                row.push(cell);
            }
            w.write_record(&row)?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv is utf-8"))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "rankings: {}   groundedness items: {}",
            self.n_rankings, self.n_groundedness_items
        );
        if let Some(r) = &self.ranks {
            let _ = writeln!(s, "\nrank distribution (rank 1 / 2 / 3)");
            for row in &r.distribution {
                let _ = writeln!(
                    s,
                    "  {:<5} {:>4} {:>4} {:>4}",
                    row.condition, row.counts[0], row.counts[1], row.counts[2]
                );
            }
            let _ = writeln!(s, "pairwise preference");
            for p in &r.pairwise {
                let _ = writeln!(
                    s,
                    "  {} > {}: {}/{} = {}",
                    p.winner,
                    p.loser,
                    p.wins,
                    p.n,
                    fmt_ci(&p.ci)
                );
            }
        }
        if !self.groundedness_by_condition.is_empty() {
            let _ = writeln!(s, "\nmean groundedness");
            for g in &self.groundedness_by_condition {
                let _ = writeln!(s, "  {:<5} n={:<4} {}", g.condition, g.n, fmt_ci(&g.ci));
            }
        }
        if let Some(a) = &self.groundedness_anova {
            let _ = writeln!(
                s,
                "Welch ANOVA: F({:.2}, {:.2}) = {:.2}, p = {:.4}",
                a.df1, a.df2, a.f, a.p
            );
        }
        if let Some(a) = &self.groundedness_fisher_anova {
            let _ = writeln!(
                s,
                "Fisher ANOVA: F({:.0}, {:.0}) = {:.2}, p = {:.4}",
                a.df1, a.df2, a.f, a.p
            );
        }
        if let Some(a) = &self.groundedness_alpha {
            let _ = writeln!(
                s,
                "groundedness Krippendorff alpha ({:?}): {:.3} over {} items",
                a.level, a.coefficient, a.n_items
            );
        }
        if let Some(c) = &self.low_rank_vs_groundedness {
            let _ = writeln!(
                s,
                "low guidance rank vs groundedness: r = {:.3}, p = {:.3}, n = {}",
                c.r, c.p, c.n
            );
        }
        if let Some(r) = &self.relevance {
            let _ = writeln!(
                s,
                "\nrelevance: {} queries, mean {:.2}, topic+ {:.1}%, partial+ {:.1}%",
                r.n_queries,
                r.mean,
                100.0 * r.at_least_topic,
                100.0 * r.at_least_partial
            );
        }
        if let Some(k) = &self.relevance_kappa {
            let _ = writeln!(
                s,
                "relevance Fleiss kappa: {:.3} ({} items, {} raters)",
                k.coefficient, k.n_items, k.n_raters
            );
        }
        if let Some(a) = &self.relevance_alpha {
            let _ = writeln!(s, "relevance Krippendorff alpha ({:?}): {:.3}", a.level, a.coefficient);
        }
        if let Some(c) = &self.relevance_vs_groundedness {
            let _ = writeln!(
                s,
                "relevance vs groundedness: r = {:.3}, p = {:.4}, n = {}",
                c.r, c.p, c.n
            );
        }
        if let Some(p) = &self.relevance_by_preference {
            let _ = writeln!(
                s,
                "relevance, low preferred (n={}) vs high preferred (n={}): diff = {:.2}, t = {:.2}, p = {:.3}",
                p.n_low_preferred, p.n_high_preferred, p.diff, p.test.t, p.test.p
            );
        }
        if !self.metric_summaries.is_empty() {
            let _ = writeln!(s, "\nautomated metrics");
            for m in &self.metric_summaries {
                let _ = writeln!(
                    s,
                    "  {:<10} {:<5} n={:<4} {}",
                    m.metric,
                    m.condition,
                    m.n,
                    fmt_ci(&m.ci)
                );
            }
        }
        if !self.metric_correlations.is_empty() {
            let _ = writeln!(s, "\nmetric vs human (Pearson r, Bonferroni-adjusted)");
            for c in &self.metric_correlations {
                let _ = writeln!(
                    s,
                    "  {:<6} {:<12} {:<10} r = {:>6.3}{:<3} p_adj = {:.4} n = {}",
                    c.guidance,
                    format!("{:?}", c.target).to_lowercase(),
                    c.metric,
                    c.result.r,
                    stars(c.result.p_adjusted.unwrap_or(c.result.p)),
                    c.result.p_adjusted.unwrap_or(c.result.p),
                    c.result.n
                );
            }
        }
        for warning in &self.warnings {
            let _ = writeln!(s, "note: {warning}");
        }
        s
    }
}

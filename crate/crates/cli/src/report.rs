//! Statistical comparison of run summaries.

use std::fmt::Write;

use morphevo::stats::{
    dunn_posthoc, group_medians, kruskal_wallis, DunnComparison, KruskalWallis, PAdjust,
    SampleGroups,
};
use serde::Serialize;

use crate::artifacts::SummaryRow;
use crate::error::{CliError, CliResult};

pub const METRICS: [&str; 4] = [
    "default_fitness",
    "local_mean",
    "global_mean",
    "sufficiency",
];

fn metric_value(row: &SummaryRow, metric: &str) -> f64 {
    match metric {
        "default_fitness" => row.default_fitness,
        "local_mean" => row.local_mean,
        "global_mean" => row.global_mean,
        "sufficiency" => row.sufficiency as f64,
        _ => unreachable!("unknown metric {metric}"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub metric: String,
    pub sizes: Vec<(String, usize)>,
    pub medians: Vec<(String, f64)>,
    pub kruskal: KruskalWallis,
    pub dunn: Vec<DunnComparison>,
}

/// Groups rows by their `group` column, in order of first appearance.
pub fn group_rows(rows: &[SummaryRow], metric: &str) -> CliResult<SampleGroups> {
    let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
    for row in rows {
        let v = metric_value(row, metric);
        match groups.iter_mut().find(|(g, _)| *g == row.group) {
            Some((_, values)) => values.push(v),
            None => groups.push((row.group.clone(), vec![v])),
        }
    }
    if groups.len() < 2 {
        return Err(CliError::Input(format!(
            "statistics need at least two groups, found {} ({})",
            groups.len(),
            groups
                .iter()
                .map(|(g, _)| g.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        )));
    }
    SampleGroups::from_pairs(groups).map_err(|e| CliError::Input(format!("{metric}: {e}")))
}

pub fn analyze(
    rows: &[SummaryRow],
    metrics: &[&str],
    alpha: f64,
    adjust: PAdjust,
) -> CliResult<Vec<MetricReport>> {
    metrics
        .iter()
        .map(|&metric| {
            let groups = group_rows(rows, metric)?;
            Ok(MetricReport {
                metric: metric.to_string(),
                sizes: groups
                    .groups()
                    .iter()
                    .map(|g| (g.label.clone(), g.samples.len()))
                    .collect(),
                medians: group_medians(groups.groups()),
                kruskal: kruskal_wallis(&groups),
                dunn: dunn_posthoc(&groups, alpha, adjust),
            })
        })
        .collect()
}

fn adjust_name(adjust: PAdjust) -> &'static str {
    match adjust {
        PAdjust::None => "none",
        PAdjust::Bonferroni => "bonferroni",
        PAdjust::Holm => "holm",
    }
}

pub fn render_text(reports: &[MetricReport], alpha: f64, adjust: PAdjust) -> String {
    let mut s = String::new();
    for r in reports {
        writeln!(
            s,
            "{} (alpha {alpha}, adjustment {})",
            r.metric,
            adjust_name(adjust)
        )
        .unwrap();
        let width = r
            .sizes
            .iter()
            .map(|(g, _)| g.len())
            .max()
            .unwrap_or(5)
            .max(5);
        writeln!(s, "  {:<width$}  {:>4}  {:>14}", "group", "n", "median").unwrap();
        for ((g, n), (_, m)) in r.sizes.iter().zip(&r.medians) {
            writeln!(s, "  {g:<width$}  {n:>4}  {m:>14.4}").unwrap();
        }
        writeln!(
            s,
            "  Kruskal-Wallis H = {:.6}, df = {}, p = {:.6e}",
            r.kruskal.h, r.kruskal.df, r.kruskal.p
        )
        .unwrap();
        writeln!(s, "  Dunn post hoc:").unwrap();
        for d in &r.dunn {
            writeln!(
                s,
                "    {} vs {}: z = {:+.4}, p = {:.6e}, p_adj = {:.6e}{}",
                d.first,
                d.second,
                d.z,
                d.p_raw,
                d.p_adjusted,
                if d.significant { "  *" } else { "" }
            )
            .unwrap();
        }
        let bars: Vec<String> = r
            .dunn
            .iter()
            .filter(|d| d.significant)
            .map(|d| format!("{}|{}", d.first, d.second))
            .collect();
        writeln!(
            s,
            "  significant pairs: {}\n",
            if bars.is_empty() {
                "none".to_string()
            } else {
                bars.join(" ")
            }
        )
        .unwrap();
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsRow {
    pub metric: String,
    pub test: &'static str,
    pub first: String,
    pub second: String,
    pub statistic: f64,
    pub p_value: Option<f64>,
    pub p_adjusted: Option<f64>,
    pub significant: Option<bool>,
}

pub fn table(reports: &[MetricReport]) -> Vec<StatsRow> {
    let mut rows = Vec::new();
    for r in reports {
        for (g, m) in &r.medians {
            rows.push(StatsRow {
                metric: r.metric.clone(),
                test: "median",
                first: g.clone(),
                second: String::new(),
                statistic: *m,
                p_value: None,
                p_adjusted: None,
                significant: None,
            });
        }
        rows.push(StatsRow {
            metric: r.metric.clone(),
            test: "kruskal_wallis",
            first: String::new(),
            second: String::new(),
            statistic: r.kruskal.h,
            p_value: Some(r.kruskal.p),
            p_adjusted: None,
            significant: None,
        });
        for d in &r.dunn {
            rows.push(StatsRow {
                metric: r.metric.clone(),
                test: "dunn",
                first: d.first.clone(),
                second: d.second.clone(),
                statistic: d.z,
                p_value: Some(d.p_raw),
                p_adjusted: Some(d.p_adjusted),
                significant: Some(d.significant),
            });
        }
    }
    rows
}

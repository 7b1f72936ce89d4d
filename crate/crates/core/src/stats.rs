//! Nonparametric comparison of run groups: Kruskal-Wallis H test, Dunn's
//! post hoc test and group medians.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub label: String,
    pub samples: Vec<f64>,
}

/// At least two groups of at least two finite samples each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleGroups {
    groups: Vec<Group>,
}

impl SampleGroups {
    pub fn new(groups: Vec<Group>) -> Result<Self> {
        if groups.len() < 2 {
            return Err(Error::Groups(format!(
                "need at least two groups to compare, got {}",
                groups.len()
            )));
        }
        for g in &groups {
            if g.samples.len() < 2 {
                return Err(Error::Groups(format!(
                    "group '{}' has {} sample(s), need at least two",
                    g.label,
                    g.samples.len()
                )));
            }
            if g.samples.iter().any(|v| !v.is_finite()) {
                return Err(Error::Groups(format!(
                    "group '{}' has non-finite samples",
                    g.label
                )));
            }
        }
        Ok(Self { groups })
    }

    pub fn from_pairs<L: Into<String>>(pairs: Vec<(L, Vec<f64>)>) -> Result<Self> {
        Self::new(
            pairs
                .into_iter()
                .map(|(label, samples)| Group {
                    label: label.into(),
                    samples,
                })
                .collect(),
        )
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    fn total(&self) -> usize {
        self.groups.iter().map(|g| g.samples.len()).sum()
    }
}

/// Pooled midranks (1-based) of every sample, grouped like the input, and
/// the tie sum Σ(t³ - t) over tie blocks.
fn pooled_ranks(groups: &SampleGroups) -> (Vec<Vec<f64>>, f64) {
    let mut pooled: Vec<(f64, usize, usize)> = groups
        .groups
        .iter()
        .enumerate()
        .flat_map(|(g, grp)| grp.samples.iter().enumerate().map(move |(i, &v)| (v, g, i)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut ranks: Vec<Vec<f64>> = groups
        .groups
        .iter()
        .map(|g| vec![0.0; g.samples.len()])
        .collect();
    let mut tie_sum = 0.0;
    let mut start = 0;
    while start < pooled.len() {
        let mut end = start + 1;
        while end < pooled.len() && pooled[end].0 == pooled[start].0 {
            end += 1;
        }
        let midrank = (start + 1 + end) as f64 / 2.0;
        for &(_, g, i) in &pooled[start..end] {
            ranks[g][i] = midrank;
        }
        let t = (end - start) as f64;
        tie_sum += t * t * t - t;
        start = end;
    }
    (ranks, tie_sum)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KruskalWallis {
    pub h: f64,
    pub df: usize,
    pub p: f64,
}

/// Kruskal-Wallis H on midranks with tie correction; p from the chi-square
/// upper tail with `k - 1` degrees of freedom.
pub fn kruskal_wallis(groups: &SampleGroups) -> KruskalWallis {
    let n = groups.total() as f64;
    let df = groups.groups.len() - 1;
    let (ranks, tie_sum) = pooled_ranks(groups);
    let correction = 1.0 - tie_sum / (n * n * n - n);
    if correction <= 0.0 {
        // every value identical
        return KruskalWallis { h: 0.0, df, p: 1.0 };
    }
    let rank_term: f64 = ranks
        .iter()
        .map(|r| {
            let s: f64 = r.iter().sum();
            s * s / r.len() as f64
        })
        .sum();
    let h = ((12.0 / (n * (n + 1.0)) * rank_term - 3.0 * (n + 1.0)) / correction).max(0.0);
    let p = ChiSquared::new(df as f64)
        .expect("df >= 1")
        .sf(h)
        .clamp(0.0, 1.0);
    KruskalWallis { h, df, p }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PAdjust {
    #[default]
    None,
    Bonferroni,
    Holm,
}

impl std::str::FromStr for PAdjust {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "bonferroni" => Ok(Self::Bonferroni),
            "holm" => Ok(Self::Holm),
            other => Err(Error::Groups(format!(
                "unknown p-value adjustment '{other}' (expected none, bonferroni or holm)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DunnComparison {
    pub first: String,
    pub second: String,
    pub z: f64,
    pub p_raw: f64,
    pub p_adjusted: f64,
    pub significant: bool,
}

/// Dunn's pairwise test on pooled midranks with tie correction, two-sided.
///
/// Pairs are reported in `(i, j)`, `i < j` order of the input groups.
pub fn dunn_posthoc(groups: &SampleGroups, alpha: f64, adjust: PAdjust) -> Vec<DunnComparison> {
    let n = groups.total() as f64;
    let (ranks, tie_sum) = pooled_ranks(groups);
    let mean_rank: Vec<f64> = ranks
        .iter()
        .map(|r| r.iter().sum::<f64>() / r.len() as f64)
        .collect();
    let variance = n * (n + 1.0) / 12.0 - tie_sum / (12.0 * (n - 1.0));

    let k = groups.groups.len();
    let mut out = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in i + 1..k {
            let ni = ranks[i].len() as f64;
            let nj = ranks[j].len() as f64;
            let se = (variance * (1.0 / ni + 1.0 / nj)).sqrt();
            let z = if se > 0.0 {
                (mean_rank[i] - mean_rank[j]) / se
            } else {
                0.0
            };
            let p = erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0);
            out.push(DunnComparison {
                first: groups.groups[i].label.clone(),
                second: groups.groups[j].label.clone(),
                z,
                p_raw: p,
                p_adjusted: p,
                significant: false,
            });
        }
    }

    let raw: Vec<f64> = out.iter().map(|c| c.p_raw).collect();
    for (c, p) in out.iter_mut().zip(adjust_p_values(&raw, adjust)) {
        c.p_adjusted = p;
        c.significant = p < alpha;
    }
    out
}

pub fn adjust_p_values(p: &[f64], method: PAdjust) -> Vec<f64> {
    let m = p.len() as f64;
    match method {
        PAdjust::None => p.to_vec(),
        PAdjust::Bonferroni => p.iter().map(|v| (v * m).min(1.0)).collect(),
        PAdjust::Holm => {
            let mut order: Vec<usize> = (0..p.len()).collect();
            order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
            let mut adjusted = vec![0.0; p.len()];
            let mut running = 0.0f64;
            for (rank, &idx) in order.iter().enumerate() {
                running = running.max(((m - rank as f64) * p[idx]).min(1.0));
                adjusted[idx] = running;
            }
            adjusted
        }
    }
}

/// Median of a non-empty sample; mean of the central pair for even sizes.
pub fn median(samples: &[f64]) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    Some(if sorted.len().is_multiple_of(2) {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    } else {
        sorted[mid]
    })
}

pub fn group_medians(groups: &[Group]) -> Vec<(String, f64)> {
    groups
        .iter()
        .filter_map(|g| median(&g.samples).map(|m| (g.label.clone(), m)))
        .collect()
}

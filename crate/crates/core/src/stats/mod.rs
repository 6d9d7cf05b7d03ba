//! Descriptives and inferential tests: pooled t, Cohen's d, one- and two-way
//! ANOVA with eta squared, Tukey HSD and Bonferroni.

pub mod dist;
pub mod quad;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dist::{dist_cdf, Distribution};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("need at least {need} observations per group, got {got}")]
    TooFewObservations { need: usize, got: usize },
    #[error("need at least 2 groups, got {0}")]
    TooFewGroups(usize),
    #[error("pooled variance is zero")]
    ZeroVariance,
    #[error("within-group variance is zero")]
    ZeroWithinVariance,
    #[error("empty cell ({a}, {b})")]
    EmptyCell { a: String, b: String },
    #[error("unbalanced design: cell sizes differ")]
    UnbalancedDesign,
    #[error("domain error: {0}")]
    Domain(String),
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn all_equal(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[0] == w[1])
}

// Sum of squared deviations from the mean; exactly zero for constant data.
fn sum_sq_dev(xs: &[f64]) -> f64 {
    if all_equal(xs) {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum()
}

/// Sample variance with the n - 1 denominator.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    sum_sq_dev(xs) / (xs.len() - 1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub n: usize,
    pub mean: f64,
    /// Sample SD (n - 1 denominator); 0 for a single observation.
    pub sd: f64,
}

impl SampleSummary {
    pub fn from_slice(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        Some(Self {
            n: xs.len(),
            mean: if all_equal(xs) { xs[0] } else { mean(xs) },
            sd: variance(xs).sqrt(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Df {
    One(f64),
    Two(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub df: Df,
    pub p: f64,
    /// Cohen's d for t-tests, eta squared for ANOVA effects.
    pub effect: Option<f64>,
}

fn require_n(xs: &[f64], need: usize) -> Result<(), StatsError> {
    if xs.len() < need {
        return Err(StatsError::TooFewObservations { need, got: xs.len() });
    }
    Ok(())
}

fn pooled_variance(a: &[f64], b: &[f64]) -> f64 {
    (sum_sq_dev(a) + sum_sq_dev(b)) / (a.len() + b.len() - 2) as f64
}

/// Standardized mean difference `(mean_a - mean_b) / s_pooled`.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    require_n(a, 2)?;
    require_n(b, 2)?;
    let sp2 = pooled_variance(a, b);
    if sp2 == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    Ok((mean(a) - mean(b)) / sp2.sqrt())
}

/// Student's two-sample t with pooled variance, two-sided p. `effect`
/// carries Cohen's d.
pub fn t_test_pooled(a: &[f64], b: &[f64]) -> Result<TestResult, StatsError> {
    require_n(a, 2)?;
    require_n(b, 2)?;
    let df = (a.len() + b.len() - 2) as f64;
    let sp2 = pooled_variance(a, b);
    if sp2 == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let diff = mean(a) - mean(b);
    let se = (sp2 * (1.0 / a.len() as f64 + 1.0 / b.len() as f64)).sqrt();
    let t = diff / se;
    Ok(TestResult {
        statistic: t,
        df: Df::One(df),
        p: dist::t_two_sided_p(t, df)?,
        effect: Some(diff / sp2.sqrt()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnovaDecomposition {
    pub ss_between: f64,
    pub ss_within: f64,
    pub ss_total: f64,
    pub df_between: f64,
    pub df_within: f64,
}

impl AnovaDecomposition {
    pub fn ms_within(&self) -> f64 {
        self.ss_within / self.df_within
    }
}

pub fn anova_decomposition<G: AsRef<[f64]>>(groups: &[G]) -> Result<AnovaDecomposition, StatsError> {
    let k = groups.len();
    if k < 2 {
        return Err(StatsError::TooFewGroups(k));
    }
    for g in groups {
        require_n(g.as_ref(), 1)?;
    }
    let all: Vec<f64> = groups.iter().flat_map(|g| g.as_ref().iter().copied()).collect();
    let n_total = all.len();
    if n_total <= k {
        return Err(StatsError::TooFewObservations { need: k + 1, got: n_total });
    }
    let grand = mean(&all);
    let ss_total = sum_sq_dev(&all);
    let ss_within: f64 = groups.iter().map(|g| sum_sq_dev(g.as_ref())).sum();
    let ss_between = if ss_total == 0.0 {
        0.0
    } else {
        groups
            .iter()
            .map(|g| {
                let g = g.as_ref();
                g.len() as f64 * (mean(g) - grand).powi(2)
            })
            .sum()
    };
    Ok(AnovaDecomposition {
        ss_between,
        ss_within,
        ss_total,
        df_between: (k - 1) as f64,
        df_within: (n_total - k) as f64,
    })
}

fn f_result(ss_effect: f64, df_effect: f64, ss_error: f64, df_error: f64, ss_total: f64) -> Result<TestResult, StatsError> {
    let eta2 = if ss_total > 0.0 { (ss_effect / ss_total).clamp(0.0, 1.0) } else { 0.0 };
    let df = Df::Two(df_effect, df_error);
    if ss_error == 0.0 {
        // no error variance: any effect is infinitely large, no effect is F = 0
        let (statistic, p) = if ss_effect > 0.0 { (f64::INFINITY, 0.0) } else { (0.0, 1.0) };
        return Ok(TestResult {
            statistic,
            df,
            p,
            effect: Some(eta2),
        });
    }
    let f = (ss_effect / df_effect) / (ss_error / df_error);
    Ok(TestResult {
        statistic: f,
        df,
        p: dist::f_sf(f, df_effect, df_error)?,
        effect: Some(eta2),
    })
}

/// One-way ANOVA; `effect` is eta squared. Zero within-group variance with
/// distinct means yields `F = +inf, p = 0`.
pub fn one_way_anova<G: AsRef<[f64]>>(groups: &[G]) -> Result<TestResult, StatsError> {
    let d = anova_decomposition(groups)?;
    f_result(d.ss_between, d.df_between, d.ss_within, d.df_within, d.ss_total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoWayAnova {
    pub factor_a: TestResult,
    pub factor_b: TestResult,
    pub interaction: TestResult,
    pub residual_df: f64,
    pub ss_residual: f64,
    pub ss_total: f64,
    pub cell_n: usize,
}

/// Balanced two-way ANOVA with interaction. Rows are `(a level, b level,
/// value)`; every cell must hold the same number (at least 2) of values.
pub fn two_way_anova<A, B>(rows: &[(A, B, f64)]) -> Result<TwoWayAnova, StatsError>
where
    A: Ord + Clone + ToString,
    B: Ord + Clone + ToString,
{
    let mut cells: BTreeMap<(A, B), Vec<f64>> = BTreeMap::new();
    let mut a_levels: Vec<A> = Vec::new();
    let mut b_levels: Vec<B> = Vec::new();
    for (a, b, v) in rows {
        if !a_levels.contains(a) {
            a_levels.push(a.clone());
        }
        if !b_levels.contains(b) {
            b_levels.push(b.clone());
        }
        cells.entry((a.clone(), b.clone())).or_default().push(*v);
    }
    a_levels.sort();
    b_levels.sort();
    if a_levels.len() < 2 {
        return Err(StatsError::TooFewGroups(a_levels.len()));
    }
    if b_levels.len() < 2 {
        return Err(StatsError::TooFewGroups(b_levels.len()));
    }
    let mut cell_n = None;
    for a in &a_levels {
        for b in &b_levels {
            let Some(cell) = cells.get(&(a.clone(), b.clone())) else {
                return Err(StatsError::EmptyCell {
                    a: a.to_string(),
                    b: b.to_string(),
                });
            };
            match cell_n {
                None => cell_n = Some(cell.len()),
                Some(n) if n != cell.len() => return Err(StatsError::UnbalancedDesign),
                _ => {}
            }
        }
    }
    let n = cell_n.unwrap_or(0);
    if n < 2 {
        return Err(StatsError::TooFewObservations { need: 2, got: n });
    }
    let (ka, kb) = (a_levels.len() as f64, b_levels.len() as f64);
    let nf = n as f64;
    let all: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let grand = mean(&all);
    let ss_total = sum_sq_dev(&all);

    let a_means: Vec<f64> = a_levels
        .iter()
        .map(|a| {
            let vals: Vec<f64> = rows.iter().filter(|r| &r.0 == a).map(|r| r.2).collect();
            mean(&vals)
        })
        .collect();
    let b_means: Vec<f64> = b_levels
        .iter()
        .map(|b| {
            let vals: Vec<f64> = rows.iter().filter(|r| &r.1 == b).map(|r| r.2).collect();
            mean(&vals)
        })
        .collect();
    let (ss_a, ss_b, ss_cells) = if ss_total == 0.0 {
        (0.0, 0.0, 0.0)
    } else {
        (
            kb * nf * a_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>(),
            ka * nf * b_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>(),
            nf * cells.values().map(|c| (mean(c) - grand).powi(2)).sum::<f64>(),
        )
    };
    let ss_ab = (ss_cells - ss_a - ss_b).max(0.0);
    let ss_residual: f64 = cells.values().map(|c| sum_sq_dev(c)).sum();
    let df_a = ka - 1.0;
    let df_b = kb - 1.0;
    let df_ab = df_a * df_b;
    let df_res = ka * kb * (nf - 1.0);
    Ok(TwoWayAnova {
        factor_a: f_result(ss_a, df_a, ss_residual, df_res, ss_total)?,
        factor_b: f_result(ss_b, df_b, ss_residual, df_res, ss_total)?,
        interaction: f_result(ss_ab, df_ab, ss_residual, df_res, ss_total)?,
        residual_df: df_res,
        ss_residual,
        ss_total,
        cell_n: n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosthocRow {
    pub group_a: String,
    pub group_b: String,
    /// mean(group_a) - mean(group_b)
    pub mean_diff: f64,
    pub q: f64,
    pub p_adjusted: f64,
}

/// Tukey HSD (Tukey–Kramer for unequal n) over all unordered pairs, in
/// input order.
pub fn tukey_hsd<S: AsRef<str>, G: AsRef<[f64]>>(groups: &[(S, G)]) -> Result<Vec<PosthocRow>, StatsError> {
    let samples: Vec<&[f64]> = groups.iter().map(|(_, g)| g.as_ref()).collect();
    let d = anova_decomposition(&samples)?;
    if d.ss_within == 0.0 {
        return Err(StatsError::ZeroWithinVariance);
    }
    let msw = d.ms_within();
    let k = groups.len() as f64;
    let mut rows = Vec::new();
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            let (a, b) = (samples[i], samples[j]);
            let diff = mean(a) - mean(b);
            let se = (msw / 2.0 * (1.0 / a.len() as f64 + 1.0 / b.len() as f64)).sqrt();
            let q = diff.abs() / se;
            rows.push(PosthocRow {
                group_a: groups[i].0.as_ref().to_string(),
                group_b: groups[j].0.as_ref().to_string(),
                mean_diff: diff,
                q,
                p_adjusted: dist::ptukey_sf(q, k, d.df_within)?,
            });
        }
    }
    Ok(rows)
}

/// Per-comparison significance level for `m` tests.
pub fn bonferroni(alpha: f64, m: usize) -> f64 {
    assert!(m >= 1 && alpha > 0.0 && alpha <= 1.0, "bonferroni needs m >= 1 and 0 < alpha <= 1");
    alpha / m as f64
}

/// Bonferroni-adjusted p-value, clamped to 1.
pub fn adjust_p(p: f64, m: usize) -> f64 {
    (p * m as f64).min(1.0)
}

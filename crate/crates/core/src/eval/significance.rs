use serde::{Deserialize, Serialize};

use super::{Metric, MetricResult, DEFAULT_ALPHA};
use crate::error::{Error, Result};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    pub t_statistic: f64,
    pub df: usize,
    pub mean_difference: f64,
    pub p_value: f64,
    pub correction_factor: usize,
    pub p_adjusted: f64,
    pub alpha: f64,
    pub n: usize,
    pub significant: bool,
}

impl SignificanceResult {
    /// Apply a Bonferroni factor `m` and decide at level `alpha`.
    pub fn corrected(mut self, m: usize, alpha: f64) -> Self {
        self.correction_factor = m;
        self.p_adjusted = bonferroni(self.p_value, m);
        self.alpha = alpha;
        self.significant = self.p_adjusted < alpha;
        self
    }
}

/// `min(1, m * p)`.
pub fn bonferroni(p: f64, m: usize) -> f64 {
    (p * m.max(1) as f64).min(1.0)
}

/// Two-sided paired Student's t-test on aligned per-topic scores, with no
/// correction (`m = 1`) at α = 0.05.
///
/// All-zero differences give `t = 0, p = 1`; zero spread with a non-zero
/// mean difference gives `t = ±inf, p = 0`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<SignificanceResult> {
    if a.len() != b.len() {
        return Err(Error::invalid(
            "eval",
            format!("paired t-test needs equal lengths, got {} and {}", a.len(), b.len()),
        ));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::invalid("eval", "paired t-test needs at least 2 pairs"));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = stats::mean(&diffs);
    let sd = stats::sample_sd(&diffs);
    let df = n - 1;
    let (t, p) = if sd == 0.0 {
        if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (mean.signum() * f64::INFINITY, 0.0)
        }
    } else {
        let t = mean / (sd / (n as f64).sqrt());
        (t, stats::t_two_sided_p(t, df as f64))
    };
    Ok(SignificanceResult {
        t_statistic: t,
        df,
        mean_difference: mean,
        p_value: p,
        correction_factor: 1,
        p_adjusted: p,
        alpha: DEFAULT_ALPHA,
        n,
        significant: p < DEFAULT_ALPHA,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub baseline: String,
    pub system: String,
    pub metric: Metric,
    pub baseline_mean: f64,
    pub system_mean: f64,
    #[serde(flatten)]
    pub result: SignificanceResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceReport {
    pub correction_factor: usize,
    pub alpha: f64,
    pub tests: Vec<PairwiseTest>,
}

/// Test every system against the baseline on the topics both evaluated.
/// `m` defaults to the number of comparisons.
pub fn compare_to_baseline(
    baseline_name: &str,
    baseline: &MetricResult,
    systems: &[(String, MetricResult)],
    m: Option<usize>,
    alpha: f64,
) -> Result<SignificanceReport> {
    let m = m.unwrap_or(systems.len()).max(1);
    let mut tests = Vec::with_capacity(systems.len());
    for (name, sys) in systems {
        if sys.metric != baseline.metric {
            return Err(Error::invalid(
                "eval",
                format!("system {name} reports {} but baseline reports {}", sys.metric, baseline.metric),
            ));
        }
        let (a, b): (Vec<f64>, Vec<f64>) = sys
            .per_topic
            .iter()
            .filter_map(|(t, v)| baseline.per_topic.get(t).map(|base| (*v, *base)))
            .unzip();
        let result = paired_t_test(&a, &b)?.corrected(m, alpha);
        tests.push(PairwiseTest {
            baseline: baseline_name.to_string(),
            system: name.clone(),
            metric: sys.metric,
            baseline_mean: stats::mean(&b),
            system_mean: stats::mean(&a),
            result,
        });
    }
    Ok(SignificanceReport {
        correction_factor: m,
        alpha,
        tests,
    })
}

//! Pairwise scenario comparisons.
//!
//! Each group is screened with Shapiro-Wilk; when both look normal the pair
//! goes to Welch's t-test, otherwise to Mann-Whitney U.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::hypothesis::{mann_whitney_u, welch_t_test, MwuMethod};
use super::normality::shapiro_wilk;
use super::stats::mean;
use super::{map_items, AnalysisError, ExecMode, ScenarioGroups, ScenarioKey};

pub const NORMALITY_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Welch,
    MannWhitneyExact,
    MannWhitneyAsymptotic,
    /// Loaded from elsewhere rather than computed here.
    Reported,
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestKind::Welch => "welch_t",
            TestKind::MannWhitneyExact => "mann_whitney_exact",
            TestKind::MannWhitneyAsymptotic => "mann_whitney_asymptotic",
            TestKind::Reported => "reported",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseComparison {
    pub scenario_a: ScenarioKey,
    pub scenario_b: ScenarioKey,
    pub file_size_bytes: u64,
    /// Two-sided, unadjusted.
    pub p_value: f64,
    /// Holm-adjusted p when correction is on.
    #[serde(default)]
    pub p_adjusted: Option<f64>,
    pub test: TestKind,
    /// The scenario with the larger mean; ties go to `a`.
    pub higher: Side,
    pub delta_j: f64,
    pub significant: bool,
}

impl PairwiseComparison {
    pub fn higher_energy_user(&self) -> &ScenarioKey {
        match self.higher {
            Side::A => &self.scenario_a,
            Side::B => &self.scenario_b,
        }
    }

    /// "Mu base vs Mu change"
    pub fn label(&self) -> String {
        format!("{} vs {}", self.scenario_a.label(), self.scenario_b.label())
    }

    /// p-value that decides significance.
    pub fn decisive_p(&self) -> f64 {
        self.p_adjusted.unwrap_or(self.p_value)
    }

    /// Recomputes `significant` at a new threshold.
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.significant = self.decisive_p() < alpha;
        self
    }
}

fn looks_normal(samples: &[f64]) -> bool {
    // too small or constant data cannot be screened, so stay nonparametric
    shapiro_wilk(samples).is_ok_and(|r| r.p_value > NORMALITY_ALPHA)
}

pub fn test_pairwise(
    key_a: &ScenarioKey,
    a: &[f64],
    key_b: &ScenarioKey,
    b: &[f64],
    alpha: f64,
) -> Result<PairwiseComparison, AnalysisError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(AnalysisError::Invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if a.len() < 2 || b.len() < 2 {
        return Err(AnalysisError::InsufficientData(format!(
            "{key_a} has {} and {key_b} has {} samples; need at least 2 each",
            a.len(),
            b.len()
        )));
    }
    let (p, test) = if looks_normal(a) && looks_normal(b) {
        (welch_t_test(a, b)?.p_value, TestKind::Welch)
    } else {
        let r = mann_whitney_u(a, b)?;
        let kind = match r.method {
            MwuMethod::Exact => TestKind::MannWhitneyExact,
            MwuMethod::Asymptotic => TestKind::MannWhitneyAsymptotic,
        };
        (r.p_value, kind)
    };
    let (ma, mb) = (mean(a), mean(b));
    Ok(PairwiseComparison {
        scenario_a: key_a.clone(),
        scenario_b: key_b.clone(),
        file_size_bytes: key_a.file_size_bytes,
        p_value: p,
        p_adjusted: None,
        test,
        higher: if mb > ma { Side::B } else { Side::A },
        delta_j: (ma - mb).abs(),
        significant: p < alpha,
    })
}

/// Holm-Bonferroni step-down adjustment, returned in input order.
pub fn holm_adjust(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p[i].total_cmp(&p[j]));
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (rank, &i) in order.iter().enumerate() {
        running = running.max(((m - rank) as f64 * p[i]).min(1.0));
        adjusted[i] = running;
    }
    adjusted
}

/// Every pair of scenarios sharing a file size. Groups with fewer than two
/// samples are skipped.
pub fn all_pairwise(
    groups: &ScenarioGroups,
    alpha: f64,
    holm: bool,
    mode: ExecMode,
) -> Result<Vec<PairwiseComparison>, AnalysisError> {
    let keys: Vec<(&ScenarioKey, &Vec<f64>)> = groups.iter().filter(|(_, s)| s.len() >= 2).collect();
    let mut pairs = Vec::new();
    for (i, (ka, _)) in keys.iter().enumerate() {
        for (kb, _) in &keys[i + 1..] {
            if ka.file_size_bytes == kb.file_size_bytes {
                pairs.push((*ka, *kb));
            }
        }
    }
    let results = map_items(&pairs, mode, |(ka, kb)| {
        test_pairwise(ka, &groups[*ka], kb, &groups[*kb], alpha)
    });
    let mut out = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    out.sort_by(|x, y| {
        (x.file_size_bytes, &x.scenario_a, &x.scenario_b).cmp(&(y.file_size_bytes, &y.scenario_a, &y.scenario_b))
    });
    if holm {
        let adjusted = holm_adjust(&out.iter().map(|c| c.p_value).collect::<Vec<_>>());
        for (c, p) in out.iter_mut().zip(adjusted) {
            c.p_adjusted = Some(p);
            c.significant = p < alpha;
        }
    }
    Ok(out)
}

//! Two-sample tests: Welch's t-test and the Mann-Whitney U test.

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::beta::beta_reg;

use super::stats::{mean, sample_variance};
use super::AnalysisError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    /// Two-sided.
    pub p_value: f64,
}

pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchResult, AnalysisError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(AnalysisError::InsufficientData(format!(
            "Welch t-test needs n >= 2 per group, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (sample_variance(a) / na, sample_variance(b) / nb);
    let diff = mean(a) - mean(b);
    let se2 = va + vb;
    if se2 == 0.0 {
        // both groups constant: identical means are no evidence, distinct means are total
        let p = if diff == 0.0 { 1.0 } else { 0.0 };
        return Ok(WelchResult {
            t: if diff == 0.0 { 0.0 } else { diff.signum() * f64::INFINITY },
            df: na + nb - 2.0,
            p_value: p,
        });
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    // P(|T| > |t|) = I_{df / (df + t^2)}(df / 2, 1 / 2)
    let p = beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0);
    Ok(WelchResult { t, df, p_value: p })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MwuMethod {
    Exact,
    Asymptotic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MannWhitneyResult {
    /// U statistic of the first group.
    pub u: f64,
    /// Two-sided.
    pub p_value: f64,
    pub method: MwuMethod,
    /// Every observation shares one value; p is 1 by convention.
    pub all_tied: bool,
}

/// Average ranks (1-based) of the pooled sample, plus the tie correction
/// term `sum(t^3 - t)` over tie groups.
fn pooled_ranks(pooled: &[f64]) -> (Vec<f64>, f64) {
    let mut idx: Vec<usize> = (0..pooled.len()).collect();
    idx.sort_by(|&i, &j| pooled[i].total_cmp(&pooled[j]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut tie_term = 0.0;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && pooled[idx[end]] == pooled[idx[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = avg;
        }
        let t = (end - start) as f64;
        tie_term += t * t * t - t;
        start = end;
    }
    (ranks, tie_term)
}

/// Survival function P(U >= u) of the null U distribution without ties.
fn exact_sf(u: usize, n1: usize, n2: usize) -> f64 {
    // table[m][k]: arrangements of m group-one and n group-two items with
    // U = k, grown one group-two item at a time
    let max_u = n1 * n2;
    let mut table = vec![vec![0.0; max_u + 1]; n1 + 1];
    for row in &mut table {
        row[0] = 1.0;
    }
    for n in 1..=n2 {
        let mut next = vec![vec![0.0; max_u + 1]; n1 + 1];
        next[0][0] = 1.0;
        for m in 1..=n1 {
            for k in 0..=m * n {
                // the largest item belongs to group one (adds n to U) or group two
                let from_first = if k >= n { next[m - 1][k - n] } else { 0.0 };
                next[m][k] = from_first + table[m][k];
            }
        }
        table = next;
    }
    let counts = &table[n1];
    let total: f64 = counts.iter().sum();
    counts[u.min(max_u)..].iter().sum::<f64>() / total
}

pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitneyResult, AnalysisError> {
    if a.is_empty() || b.is_empty() {
        return Err(AnalysisError::InsufficientData(
            "Mann-Whitney U needs non-empty groups".into(),
        ));
    }
    let (n1, n2) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, tie_term) = pooled_ranks(&pooled);
    let r1: f64 = ranks[..n1].iter().sum();
    let u1 = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
    let u2 = (n1 * n2) as f64 - u1;
    let u = u1.max(u2);
    let n = (n1 + n2) as f64;

    let has_ties = tie_term > 0.0;
    let method = if (n1 > 8 && n2 > 8) || has_ties {
        MwuMethod::Asymptotic
    } else {
        MwuMethod::Exact
    };
    let all_tied = tie_term == n * n * n - n;
    if all_tied {
        return Ok(MannWhitneyResult {
            u: u1,
            p_value: 1.0,
            method,
            all_tied,
        });
    }
    let p = match method {
        MwuMethod::Exact => 2.0 * exact_sf(u.round() as usize, n1, n2),
        MwuMethod::Asymptotic => {
            let (f1, f2) = (n1 as f64, n2 as f64);
            let mu = f1 * f2 / 2.0;
            let s = (f1 * f2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)))).sqrt();
            let z = (u - mu - 0.5) / s;
            2.0 * Normal::new(0.0, 1.0).expect("unit normal").sf(z)
        }
    };
    Ok(MannWhitneyResult {
        u: u1,
        p_value: p.clamp(0.0, 1.0),
        method,
        all_tied,
    })
}

//! Descriptive statistics and box-plot summaries.

use serde::{Deserialize, Serialize};

use super::AnalysisError;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance (n - 1 denominator). Zero for fewer than two samples.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub(crate) fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Linear-interpolation quantile over sorted data (the default in R and NumPy).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptive {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    /// Sample standard deviation; 0 with `sd_defined = false` when n = 1.
    pub sd: f64,
    pub sd_defined: bool,
    pub min: f64,
    pub max: f64,
    pub q1: f64,
    pub q3: f64,
}

pub fn describe(samples: &[f64]) -> Result<Descriptive, AnalysisError> {
    if samples.is_empty() {
        return Err(AnalysisError::EmptyGroup("no samples".into()));
    }
    let s = sorted(samples);
    Ok(Descriptive {
        n: s.len(),
        mean: mean(&s),
        median: quantile_sorted(&s, 0.5),
        sd: sample_variance(&s).sqrt(),
        sd_defined: s.len() > 1,
        min: s[0],
        max: s[s.len() - 1],
        q1: quantile_sorted(&s, 0.25),
        q3: quantile_sorted(&s, 0.75),
    })
}

/// Tukey box: whiskers reach the most extreme samples within 1.5 IQR of the
/// quartiles, anything beyond is an outlier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSummary {
    pub n: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub lo_whisker: f64,
    pub hi_whisker: f64,
    pub outliers: Vec<f64>,
}

pub fn box_summary(samples: &[f64]) -> Result<BoxSummary, AnalysisError> {
    if samples.is_empty() {
        return Err(AnalysisError::EmptyGroup("no samples".into()));
    }
    let s = sorted(samples);
    let q1 = quantile_sorted(&s, 0.25);
    let q3 = quantile_sorted(&s, 0.75);
    let (lo_fence, hi_fence) = tukey_fences(q1, q3);
    let inside: Vec<f64> = s
        .iter()
        .copied()
        .filter(|x| (lo_fence..=hi_fence).contains(x))
        .collect();
    Ok(BoxSummary {
        n: s.len(),
        q1,
        median: quantile_sorted(&s, 0.5),
        q3,
        lo_whisker: inside.first().copied().unwrap_or(q1),
        hi_whisker: inside.last().copied().unwrap_or(q3),
        outliers: s
            .iter()
            .copied()
            .filter(|x| !(lo_fence..=hi_fence).contains(x))
            .collect(),
    })
}

fn tukey_fences(q1: f64, q3: f64) -> (f64, f64) {
    let iqr = q3 - q1;
    (q1 - 1.5 * iqr, q3 + 1.5 * iqr)
}

/// Drops samples outside the 1.5 IQR fences.
pub fn iqr_filter(samples: &[f64]) -> Vec<f64> {
    if samples.len() < 4 {
        return samples.to_vec();
    }
    let s = sorted(samples);
    let (lo, hi) = tukey_fences(quantile_sorted(&s, 0.25), quantile_sorted(&s, 0.75));
    samples
        .iter()
        .copied()
        .filter(|x| (lo..=hi).contains(x))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_two_three() {
        let d = describe(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((d.mean, d.median, d.sd), (2.0, 2.0, 1.0));
        assert!(d.sd_defined);
        assert_eq!((d.min, d.max, d.q1, d.q3), (1.0, 3.0, 1.5, 2.5));
    }

    #[test]
    fn single_sample_has_undefined_sd() {
        let d = describe(&[7.0]).unwrap();
        assert_eq!((d.mean, d.median, d.sd), (7.0, 7.0, 0.0));
        assert!(!d.sd_defined);
    }

    #[test]
    fn empty_group_is_an_error() {
        assert!(describe(&[]).is_err());
        assert!(box_summary(&[]).is_err());
    }

    #[test]
    fn quartiles_match_numpy_linear() {
        // numpy.percentile([1, 2, 4, 7, 11, 16], [25, 50, 75]) -> 2.5, 5.5, 10.0
        let s = [1.0, 2.0, 4.0, 7.0, 11.0, 16.0];
        assert_eq!(quantile_sorted(&s, 0.25), 2.5);
        assert_eq!(quantile_sorted(&s, 0.5), 5.5);
        assert_eq!(quantile_sorted(&s, 0.75), 10.0);
    }

    #[test]
    fn box_marks_far_points_as_outliers() {
        let data = [10.0, 11.0, 12.0, 12.5, 13.0, 14.0, 40.0];
        let b = box_summary(&data).unwrap();
        assert_eq!(b.outliers, vec![40.0]);
        assert_eq!(b.hi_whisker, 14.0);
        assert_eq!(b.lo_whisker, 10.0);
        assert_eq!(iqr_filter(&data), data[..6].to_vec());
    }
}

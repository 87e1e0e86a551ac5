//! Shapiro-Wilk W test, following Royston's AS R94 approximation
//! (valid for 3 <= n <= 5000).

use statrs::distribution::{ContinuousCDF, Normal};

use super::stats::{quantile_sorted, sorted};
use super::AnalysisError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapiroWilk {
    pub w: f64,
    pub p_value: f64,
}

const SMALL: f64 = 1e-19;

const G: [f64; 2] = [-2.273, 0.459];
const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056];
const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
const C3: [f64; 4] = [0.544, -0.39978, 0.025054, -6.714e-4];
const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];

fn poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Upper-half coefficients `a[0..n/2]`, largest first.
fn coefficients(n: usize) -> Vec<f64> {
    let half = n / 2;
    if n == 3 {
        return vec![std::f64::consts::FRAC_1_SQRT_2];
    }
    let norm = std_normal();
    let an25 = n as f64 + 0.25;
    let m: Vec<f64> = (1..=half)
        .map(|i| norm.inverse_cdf((i as f64 - 0.375) / an25))
        .collect();
    let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
    let ssumm2 = summ2.sqrt();
    let rsn = 1.0 / (n as f64).sqrt();
    let a1 = poly(&C1, rsn) - m[0] / ssumm2;

    let mut a = vec![0.0; half];
    a[0] = a1;
    let (first_scaled, fac) = if n > 5 {
        let a2 = -m[1] / ssumm2 + poly(&C2, rsn);
        a[1] = a2;
        let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1])
            / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2))
            .sqrt();
        (2, fac)
    } else {
        let fac = ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt();
        (1, fac)
    };
    for i in first_scaled..half {
        a[i] = -m[i] / fac;
    }
    a
}

pub fn shapiro_wilk(samples: &[f64]) -> Result<ShapiroWilk, AnalysisError> {
    let n = samples.len();
    if !(3..=5000).contains(&n) {
        return Err(AnalysisError::InsufficientData(format!(
            "Shapiro-Wilk needs 3..=5000 samples, got {n}"
        )));
    }
    let mut x = sorted(samples);
    let med = quantile_sorted(&x, 0.5);
    x.iter_mut().for_each(|v| *v -= med);
    let range = x[n - 1] - x[0];
    if range < SMALL {
        return Err(AnalysisError::InsufficientData(
            "Shapiro-Wilk undefined for constant data".into(),
        ));
    }

    let half = coefficients(n);
    // antisymmetric full coefficient vector over the order statistics
    let coef = |i: usize| -> f64 {
        let j = n - 1 - i;
        match i.cmp(&j) {
            std::cmp::Ordering::Less => -half[i],
            std::cmp::Ordering::Greater => half[j],
            std::cmp::Ordering::Equal => 0.0,
        }
    };
    let xs: Vec<f64> = x.iter().map(|v| v / range).collect();
    let sa = (0..n).map(coef).sum::<f64>() / n as f64;
    let sx = xs.iter().sum::<f64>() / n as f64;
    let (mut ssa, mut ssx, mut sax) = (0.0, 0.0, 0.0);
    for (i, xi) in xs.iter().enumerate() {
        let asa = coef(i) - sa;
        let xsx = xi - sx;
        ssa += asa * asa;
        ssx += xsx * xsx;
        sax += asa * xsx;
    }
    let ssassx = (ssa * ssx).sqrt();
    let w1 = (ssassx - sax) * (ssassx + sax) / (ssa * ssx);
    let w = 1.0 - w1;

    if n == 3 {
        use std::f64::consts::{FRAC_PI_3, PI};
        let p = (6.0 / PI * (w.sqrt().asin() - FRAC_PI_3)).max(0.0);
        return Ok(ShapiroWilk { w, p_value: p.min(1.0) });
    }

    let an = n as f64;
    let mut y = w1.ln();
    let (m, s) = if n <= 11 {
        let gamma = poly(&G, an);
        if y >= gamma {
            return Ok(ShapiroWilk { w, p_value: 1e-99 });
        }
        y = -(gamma - y).ln();
        (poly(&C3, an), poly(&C4, an).exp())
    } else {
        let ln_n = an.ln();
        (poly(&C5, ln_n), poly(&C6, ln_n).exp())
    };
    let p = std_normal().sf((y - m) / s).clamp(0.0, 1.0);
    Ok(ShapiroWilk { w, p_value: p })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_points() {
        // scipy.stats.shapiro([1, 2, 4]) -> W = 0.9642857142857141, p = 0.6368868
        let r = shapiro_wilk(&[1.0, 2.0, 4.0]).unwrap();
        assert!((r.w - 0.9642857142857141).abs() < 1e-9);
        assert!((r.p_value - 0.6368868).abs() < 1e-6, "{}", r.p_value);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(shapiro_wilk(&[1.0, 2.0]).is_err());
        assert!(shapiro_wilk(&[5.0; 10]).is_err());
    }

    #[test]
    fn coefficients_have_unit_norm() {
        for n in [4, 5, 6, 11, 12, 30, 100] {
            let a = coefficients(n);
            let ss: f64 = 2.0 * a.iter().map(|v| v * v).sum::<f64>();
            assert!((ss - 1.0).abs() < 1e-9, "n={n}: {ss}");
        }
    }
}

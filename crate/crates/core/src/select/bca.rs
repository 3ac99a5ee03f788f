//! Bias-corrected and accelerated bootstrap intervals.
//!
//! Given a point estimate `t`, bootstrap replicates `t*_1..t*_B` and
//! leave-one-out jackknife estimates `t_(1)..t_(n)`:
//!
//! ```text
//! z0 = Phi^-1( (#{t* < t} + #{t* = t} / 2) / B )
//! a  = sum (m - t_(i))^3 / (6 * (sum (m - t_(i))^2)^(3/2)),   m = mean of t_(i)
//! alpha_j = Phi( z0 + (z0 + z_j) / (1 - a (z0 + z_j)) ),     z_j = Phi^-1(q_j)
//! ```
//!
//! with `q_1 = (1 - c) / 2`, `q_2 = (1 + c) / 2` for confidence `c`. The
//! endpoints are the `alpha_j` quantiles of the sorted replicates, linearly
//! interpolated between order statistics (`x[(B - 1) * alpha]`). The
//! proportion inside `Phi^-1` is kept within `[1/(2B), 1 - 1/(2B)]`. A
//! constant replicate vector yields `(t, t)`.

use alloc::vec::Vec;

use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcaMode {
    Mean,
    Lower,
    Upper,
}

impl BcaMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mean" => Some(BcaMode::Mean),
            "lower" => Some(BcaMode::Lower),
            "upper" => Some(BcaMode::Upper),
            _ => None,
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            BcaMode::Mean => "mean",
            BcaMode::Lower => "lower",
            BcaMode::Upper => "upper",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BcaInterval {
    pub lower: f64,
    pub upper: f64,
    pub z0: f64,
    pub acceleration: f64,
}

pub fn bca_interval(point: f64, replicates: &[f64], jackknife: &[f64], confidence: f64) -> BcaInterval {
    let b = replicates.len();
    if b == 0 || replicates.iter().all(|&x| x == replicates[0]) {
        return BcaInterval { lower: point, upper: point, z0: 0.0, acceleration: 0.0 };
    }
    let below = replicates.iter().filter(|&&x| x < point).count() as f64;
    let ties = replicates.iter().filter(|&&x| x == point).count() as f64;
    let half = 0.5 / b as f64;
    let prop = ((below + 0.5 * ties) / b as f64).clamp(half, 1.0 - half);
    let z0 = math::norm_ppf(prop);
    let acceleration = jackknife_acceleration(jackknife);

    let mut sorted = replicates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let endpoint = |q: f64| {
        let z = math::norm_ppf(q);
        let level = math::norm_cdf(z0 + (z0 + z) / (1.0 - acceleration * (z0 + z)));
        quantile(&sorted, level)
    };
    BcaInterval {
        lower: endpoint((1.0 - confidence) / 2.0),
        upper: endpoint((1.0 + confidence) / 2.0),
        z0,
        acceleration,
    }
}

fn jackknife_acceleration(jack: &[f64]) -> f64 {
    if jack.len() < 2 {
        return 0.0;
    }
    let m = jack.iter().sum::<f64>() / jack.len() as f64;
    let (mut s2, mut s3) = (0.0, 0.0);
    for &x in jack {
        let d = m - x;
        s2 += d * d;
        s3 += d * d * d;
    }
    if s2 == 0.0 {
        0.0
    } else {
        s3 / (6.0 * math::powf(s2, 1.5))
    }
}

/// Linear interpolation between order statistics of an ascending slice.
pub(crate) fn quantile(sorted: &[f64], level: f64) -> f64 {
    let level = if level.is_nan() { 0.5 } else { level.clamp(0.0, 1.0) };
    let pos = level * (sorted.len() - 1) as f64;
    let lo = math::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Mean of the replicates, or the requested interval endpoint.
pub fn bca_score(point: f64, replicates: &[f64], jackknife: &[f64], mode: BcaMode, confidence: f64) -> f64 {
    match mode {
        BcaMode::Mean if replicates.is_empty() => point,
        BcaMode::Mean => replicates.iter().sum::<f64>() / replicates.len() as f64,
        BcaMode::Lower => bca_interval(point, replicates, jackknife, confidence).lower,
        BcaMode::Upper => bca_interval(point, replicates, jackknife, confidence).upper,
    }
}

pub(crate) fn leave_one_out(n: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..n).map(move |skip| (0..n).filter(|&i| i != skip).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_collapses() {
        let iv = bca_interval(3.0, &[3.0; 50], &[3.0; 5], 0.9);
        assert_eq!((iv.lower, iv.upper), (3.0, 3.0));
        assert_eq!(bca_score(3.0, &[3.0; 50], &[3.0; 5], BcaMode::Mean, 0.9), 3.0);
    }

    #[test]
    fn symmetric_case_reduces_to_percentile() {
        let reps: Vec<f64> = (0..101).map(|i| i as f64).collect();
        let iv = bca_interval(50.0, &reps, &[1.0, 2.0, 3.0], 0.9);
        assert!(iv.z0.abs() < 1e-12 && iv.acceleration.abs() < 1e-12);
        assert!((iv.lower - 5.0).abs() < 1e-6 && (iv.upper - 95.0).abs() < 1e-6, "{iv:?}");
    }

    #[test]
    fn quantile_interpolates() {
        assert_eq!(quantile(&[0.0, 10.0], 0.25), 2.5);
        assert_eq!(quantile(&[1.0, 2.0, 3.0], 1.0), 3.0);
    }

    #[test]
    fn mode_ids() {
        for m in [BcaMode::Mean, BcaMode::Lower, BcaMode::Upper] {
            assert_eq!(BcaMode::parse(m.id()), Some(m));
        }
        assert_eq!(BcaMode::parse("median"), None);
    }
}

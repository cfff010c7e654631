//! Reference values and the comparisons used by the acceptance run.

use std::fmt;

/// A reported mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reference {
    pub value: f64,
    pub se: f64,
}

impl Reference {
    pub const fn new(value: f64, se: f64) -> Self {
        Self { value, se }
    }
}

pub fn pooled_se(a: f64, b: f64) -> f64 {
    (a * a + b * b).sqrt()
}

/// Distance from `reference` in pooled standard errors.
pub fn z_score(value: f64, se: f64, reference: Reference) -> f64 {
    let s = pooled_se(se, reference.se);
    if s > 0.0 {
        (value - reference.value).abs() / s
    } else if value == reference.value {
        0.0
    } else {
        f64::INFINITY
    }
}

/// `(slope over the upper half) / (slope over the lower half)` of a curve
/// `(x, y)` listed in threshold order, splitting at the middle point.
pub fn half_slope_ratio(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 3 {
        return None;
    }
    let mid = points.len() / 2;
    let slope = |a: (f64, f64), b: (f64, f64)| (b.1 - a.1) / (b.0 - a.0);
    let lower = slope(points[0], points[mid]);
    let upper = slope(points[mid], points[points.len() - 1]);
    (lower.is_finite() && upper.is_finite() && lower > 0.0).then_some(upper / lower)
}

/// One criterion's verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub criterion: u32,
    pub title: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        write!(
            f,
            "{verdict} criterion {:>2} {}: {}",
            self.criterion, self.title, self.detail
        )
    }
}

/// Calibrated HC thresholds at target ARL 5000.
pub mod thresholds {
    pub const HC_N100: f64 = 9.93;
    pub const HC_N10K: f64 = 12.11;
    pub const HC_N100_RANGE: (f64, f64) = (9.3, 10.6);
    pub const HC_N10K_RANGE: (f64, f64) = (11.3, 13.0);
}

/// Detection delays at `N = 100`, shift 1, by affected count.
pub mod small_n {
    use super::Reference;
    pub const HC_I1: Reference = Reference::new(16.3, 0.35);
    pub const HC_I3: Reference = Reference::new(10.3, 0.19);
    pub const HC_I5: Reference = Reference::new(8.2, 0.14);
    pub const LOGP_MIN_I1: Reference = Reference::new(18.2, 0.38);
    pub const LOGP_SUM_I5: Reference = Reference::new(20.0, 0.20);
    /// `|I| = 5`, shift 0.4 and 1.0.
    pub const HC_R04: Reference = Reference::new(44.9, 0.89);
    pub const HC_R10: Reference = Reference::new(8.3, 0.13);
}

/// Detection delays at `N = 10^4`, shift 1.
pub mod large_n {
    use super::Reference;
    pub const HC_I1: Reference = Reference::new(25.8, 0.47);
    pub const HC_I5: Reference = Reference::new(15.3, 0.23);
    pub const HORIZON: u64 = 1000;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pooled_and_z() {
        assert_eq!(pooled_se(3.0, 4.0), 5.0);
        assert_eq!(z_score(20.0, 3.0, Reference::new(10.0, 4.0)), 2.0);
        assert_eq!(z_score(1.0, 0.0, Reference::new(1.0, 0.0)), 0.0);
        assert!(z_score(1.5, 0.0, Reference::new(1.0, 0.0)).is_infinite());
    }

    #[test]
    fn slope_ratio_of_bent_curve() {
        let pts: Vec<(f64, f64)> = (0..=10)
            .map(|i| {
                let x = i as f64 * 10.0;
                (
                    x,
                    if x <= 50.0 {
                        x
                    } else {
                        50.0 + 0.05 * (x - 50.0)
                    },
                )
            })
            .collect();
        assert!((half_slope_ratio(&pts).unwrap() - 0.05).abs() < 1e-12);
        let line: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, 2.0 * i as f64)).collect();
        assert_eq!(half_slope_ratio(&line), Some(1.0));
        assert_eq!(half_slope_ratio(&line[..2]), None);
    }

    #[test]
    fn outcome_line() {
        let o = Outcome {
            criterion: 3,
            title: "edd",
            pass: false,
            detail: "x".into(),
        };
        assert_eq!(o.to_string(), "FAIL criterion  3 edd: x");
    }
}

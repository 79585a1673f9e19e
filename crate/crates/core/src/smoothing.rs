//! Trailing moving-average smoothing of position tracks.

use crate::error::{Error, Result};
use crate::geometry::Point2;

/// Default number of samples averaged by [`moving_average`].
pub const DEFAULT_WINDOW: usize = 5;

/// Causal moving average: element `i` is the mean of the up-to-`window` most
/// recent points ending at `i`. The window is shorter at the start of the
/// series, so the output has the same length as the input.
pub fn moving_average(series: &[Point2], window: usize) -> Result<Vec<Point2>> {
    if window == 0 {
        return Err(Error::InvalidInput("moving-average window must be >= 1".into()));
    }
    Ok((0..series.len())
        .map(|i| {
            let start = (i + 1).saturating_sub(window);
            let w = &series[start..=i];
            Point2::new(
                window_mean(w.iter().map(|p| p.x)),
                window_mean(w.iter().map(|p| p.y)),
            )
        })
        .collect())
}

// Mean taken relative to the first element and clamped to the window's
// range, so constant windows are reproduced exactly.
fn window_mean(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let mut it = values.clone();
    let Some(first) = it.next() else {
        return f64::NAN;
    };
    let (mut lo, mut hi, mut dev, mut n) = (first, first, 0.0, 1usize);
    for v in it {
        lo = lo.min(v);
        hi = hi.max(v);
        dev += v - first;
        n += 1;
    }
    (first + dev / n as f64).clamp(lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series_is_unchanged() {
        let s = vec![Point2::new(2.0, 2.0); 10];
        assert_eq!(moving_average(&s, 5).unwrap(), s);
        let s = vec![Point2::new(0.1, -0.7); 7];
        assert_eq!(moving_average(&s, 3).unwrap(), s);
    }

    #[test]
    fn two_point_mean() {
        let s = [Point2::new(0.0, 0.0), Point2::new(2.0, 0.0)];
        let out = moving_average(&s, 2).unwrap();
        assert_eq!(out, vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0)]);
    }

    #[test]
    fn ramp_uses_trailing_window() {
        let s: Vec<_> = (0..10).map(|i| Point2::new(i as f64, 0.0)).collect();
        let out = moving_average(&s, 5).unwrap();
        assert_eq!(out.len(), 10);
        assert_eq!(out[9].x, 7.0);
        assert_eq!(out[0].x, 0.0);
        assert_eq!(out[1].x, 0.5);
    }

    #[test]
    fn zero_window_rejected() {
        assert!(moving_average(&[Point2::default()], 0).is_err());
    }

    #[test]
    fn empty_series() {
        assert!(moving_average(&[], 5).unwrap().is_empty());
    }
}

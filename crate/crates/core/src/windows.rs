//! Per-window returns and fluctuations at a fixed time scale.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::IncrementSeries;

/// One window of `scale` consecutive increments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowEntry {
    pub start: usize,
    /// Return over the window: the sum of its signed increments.
    pub z: f64,
    /// Fluctuation: mean absolute deviation of the window's increments from
    /// their window mean.
    pub r: f64,
    /// False when the window holds an excluded (gap-crossing) increment.
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub scale: usize,
    pub stride: usize,
    pub entries: Vec<WindowEntry>,
}

impl WindowStats {
    pub fn valid(&self) -> impl Iterator<Item = &WindowEntry> {
        self.entries.iter().filter(|e| e.valid)
    }

    pub fn valid_count(&self) -> usize {
        self.valid().count()
    }

    pub fn valid_z(&self) -> Vec<f64> {
        self.valid().map(|e| e.z).collect()
    }
}

/// Computes `(Z, r)` for windows of `scale` increments whose start indices are
/// multiples of `stride`. Invalid windows keep NaN in `z` and `r`.
pub fn window_stats(incs: &IncrementSeries, scale: usize, stride: usize) -> Result<WindowStats> {
    if scale < 2 {
        return Err(Error::InvalidParameter(format!(
            "window scale must be at least 2, got {scale}"
        )));
    }
    if stride == 0 {
        return Err(Error::InvalidParameter("window stride must be positive".into()));
    }
    if incs.len() < scale {
        return Err(Error::TooShort {
            needed: scale,
            have: incs.len(),
        });
    }

    let signed = incs.signed();
    // prefix count of excluded increments, for O(1) validity per window
    let mut excluded = Vec::with_capacity(signed.len() + 1);
    excluded.push(0usize);
    for k in 0..signed.len() {
        excluded.push(excluded[k] + usize::from(!incs.is_usable(k)));
    }

    let entries = (0..=signed.len() - scale)
        .step_by(stride)
        .map(|start| {
            if excluded[start + scale] != excluded[start] {
                return WindowEntry {
                    start,
                    z: f64::NAN,
                    r: f64::NAN,
                    valid: false,
                };
            }
            let w = &signed[start..start + scale];
            let z: f64 = w.iter().sum();
            let mean = z / scale as f64;
            // equal increments give r = 0 exactly, free of rounding in `mean`
            let r = if w.iter().all(|&x| x == w[0]) {
                0.0
            } else {
                w.iter().map(|x| (x - mean).abs()).sum::<f64>() / scale as f64
            };
            WindowEntry {
                start,
                z,
                r,
                valid: true,
            }
        })
        .collect();

    Ok(WindowStats {
        scale,
        stride,
        entries,
    })
}

/// `count` integer scales spread linearly over `[min, max]`, rounded,
/// deduplicated and sorted.
pub fn scale_grid(min: usize, max: usize, count: usize) -> Result<Vec<usize>> {
    if min < 2 || max < min {
        return Err(Error::InvalidParameter(format!(
            "scale grid needs 2 <= min <= max, got {min}..{max}"
        )));
    }
    if count == 0 {
        return Err(Error::InvalidParameter("scale grid is empty".into()));
    }
    let mut scales: Vec<usize> = if count == 1 {
        vec![min]
    } else {
        let step = (max - min) as f64 / (count - 1) as f64;
        (0..count)
            .map(|k| (min as f64 + step * k as f64).round() as usize)
            .collect()
    };
    scales.sort_unstable();
    scales.dedup();
    Ok(scales)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stats(incs: &[f64], scale: usize) -> WindowStats {
        window_stats(&IncrementSeries::from_signed(incs.to_vec()), scale, scale).unwrap()
    }

    #[test]
    fn constant_increments_have_zero_fluctuation() {
        let w = stats(&[1.0; 4], 4);
        assert_eq!(w.entries.len(), 1);
        assert_eq!(w.entries[0].z, 4.0);
        assert_eq!(w.entries[0].r, 0.0);
    }

    #[test]
    fn alternating_pair() {
        let w = stats(&[2.0, -2.0], 2);
        assert_eq!(w.entries[0].z, 0.0);
        assert_eq!(w.entries[0].r, 2.0);
    }

    #[test]
    fn overlapping_stride() {
        let incs = IncrementSeries::from_signed(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let w = window_stats(&incs, 3, 1).unwrap();
        let z: Vec<f64> = w.entries.iter().map(|e| e.z).collect();
        assert_eq!(z, vec![6.0, 9.0, 12.0]);
    }

    #[test]
    fn flagged_increment_invalidates_window() {
        let incs = IncrementSeries::with_flags(
            vec![1.0, 1.0, 50.0, 1.0, 1.0, 1.0],
            vec![false, false, true, false, false, false],
            true,
        );
        let w = window_stats(&incs, 3, 3).unwrap();
        assert!(!w.entries[0].valid);
        assert!(w.entries[0].z.is_nan());
        assert!(w.entries[1].valid);

        let naive = IncrementSeries::with_flags(incs.signed().to_vec(), vec![true; 6], false);
        assert!(window_stats(&naive, 3, 3).unwrap().entries.iter().all(|e| e.valid));
    }

    #[test]
    fn guards() {
        let incs = IncrementSeries::from_signed(vec![1.0; 5]);
        assert!(window_stats(&incs, 1, 1).is_err());
        assert!(window_stats(&incs, 2, 0).is_err());
        assert!(matches!(window_stats(&incs, 6, 1), Err(Error::TooShort { .. })));
    }

    #[test]
    fn scale_grid_examples() {
        assert_eq!(scale_grid(75, 125, 3).unwrap(), vec![75, 100, 125]);
        assert_eq!(scale_grid(100, 100, 1).unwrap(), vec![100]);
        let g = scale_grid(3, 18, 6).unwrap();
        assert_eq!(g.len(), 6);
        assert!(g.iter().all(|&s| (3..=18).contains(&s)));
        assert_eq!(scale_grid(2, 4, 10).unwrap(), vec![2, 3, 4]);
        assert!(scale_grid(1, 5, 3).is_err());
        assert!(scale_grid(5, 4, 3).is_err());
        assert!(scale_grid(5, 6, 0).is_err());
    }

    proptest! {
        #[test]
        fn disjoint_windows_sum_to_net_change(
            incs in proptest::collection::vec(-100.0f64..100.0, 10..300),
            scale in 2usize..10,
        ) {
            prop_assume!(incs.len() >= scale);
            let w = stats(&incs, scale);
            let covered = w.entries.len() * scale;
            let net: f64 = incs[..covered].iter().sum();
            let total: f64 = w.entries.iter().map(|e| e.z).sum();
            prop_assert!((net - total).abs() <= 1e-9 * (1.0 + net.abs().max(covered as f64 * 100.0)));
        }

        #[test]
        fn scaling_and_sign_flip(
            incs in proptest::collection::vec(-10.0f64..10.0, 20..100),
            c in 0.1f64..50.0,
        ) {
            let base = stats(&incs, 5);
            let scaled: Vec<f64> = incs.iter().map(|x| x * c).collect();
            let flipped: Vec<f64> = incs.iter().map(|x| -x).collect();
            let s = stats(&scaled, 5);
            let f = stats(&flipped, 5);
            for ((b, s), f) in base.entries.iter().zip(&s.entries).zip(&f.entries) {
                prop_assert!((s.z - c * b.z).abs() <= 1e-9 * (1.0 + (c * b.z).abs()) * 10.0);
                prop_assert!((s.r - c * b.r).abs() <= 1e-9 * (1.0 + c * b.r));
                prop_assert_eq!(f.z, -b.z);
                prop_assert_eq!(f.r, b.r);
                prop_assert!(b.r >= 0.0);
            }
        }

        #[test]
        fn zero_fluctuation_iff_equal_increments(
            base in -5.0f64..5.0,
            bump in proptest::option::of((0usize..6, 0.5f64..3.0)),
        ) {
            let mut incs = vec![base; 6];
            if let Some((k, d)) = bump {
                incs[k] += d;
            }
            let r = stats(&incs, 6).entries[0].r;
            prop_assert_eq!(r == 0.0, bump.is_none());
        }
    }
}

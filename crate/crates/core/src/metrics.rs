//! Accuracy metrics over angular pose errors.

use crate::error::{Error, Result};

/// Mean average accuracy up to `max_thresh` degrees.
///
/// Thresholds are `1°, 2°, …, ⌊max_thresh⌋°`; an error is accurate at `T`
/// when `error ≤ T`. Non-finite errors count as inaccurate everywhere. The
/// result is a single integer ratio, so independent recomputations that count
/// the same hits agree bit for bit.
pub fn maa(errors: &[f64], max_thresh: f64) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::Empty("error list"));
    }
    if !(max_thresh >= 1.0) {
        return Err(Error::InvalidArgument(format!("maximum threshold {max_thresh} is below 1°")));
    }
    let steps = max_thresh.floor() as u64;
    let mut sorted: Vec<f64> = errors.iter().copied().filter(|e| e.is_finite()).collect();
    sorted.sort_by(f64::total_cmp);
    let hits: u64 = (1..=steps)
        .map(|t| sorted.partition_point(|&e| e <= t as f64) as u64)
        .sum();
    Ok(hits as f64 / (steps * errors.len() as u64) as f64)
}

/// Median of an already sorted slice; the mean of the middle pair for even lengths.
pub fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    median_sorted(&v)
}

/// Average ranks (1-based) with ties sharing their mean rank.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            out[idx[k]] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::InvalidArgument("spearman needs two equal-length series of length >= 2".into()));
    }
    pearson(&ranks(a), &ranks(b))
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::InvalidArgument("correlation of a constant series".into()));
    }
    Ok(sab / (saa * sbb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maa_reference_values() {
        assert_eq!(maa(&[0.0; 4], 10.0).unwrap(), 1.0);
        assert_eq!(maa(&[180.0; 4], 10.0).unwrap(), 0.0);
        assert_eq!(maa(&[5.0], 10.0).unwrap(), 0.6);
        assert_eq!(maa(&[f64::NAN, 0.0], 10.0).unwrap(), 0.5);
        assert!(maa(&[], 10.0).is_err());
    }

    #[test]
    fn threshold_boundary_is_inclusive() {
        assert_eq!(maa(&[1.0], 1.0).unwrap(), 1.0);
        assert_eq!(maa(&[1.0 + 1e-12], 1.0).unwrap(), 0.0);
    }

    #[test]
    fn spearman_of_monotone_series() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [10.0, 20.0, 25.0, 100.0];
        assert!((spearman(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        let c = [4.0, 3.0, 2.0, 1.0];
        assert!((spearman(&a, &c).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn ties_share_ranks() {
        assert_eq!(ranks(&[3.0, 1.0, 3.0]), vec![2.5, 1.0, 2.5]);
    }
}

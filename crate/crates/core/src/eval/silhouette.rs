//! Silhouette coefficients under Euclidean distance.

use crate::error::{Error, Result};

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// `s(i) = (b − a) / max(a, b)` with `a` the mean distance to the own
/// cluster and `b` the smallest mean distance to another cluster.
/// Singleton clusters score 0.
pub fn silhouette_samples(points: &[Vec<f64>], labels: &[usize]) -> Result<Vec<f64>> {
    if points.len() != labels.len() {
        return Err(Error::shape("silhouette labels", &[points.len()], &[labels.len()]));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let sizes: Vec<usize> = (0..k).map(|c| labels.iter().filter(|&&l| l == c).count()).collect();
    if sizes.iter().filter(|&&n| n > 0).count() < 2 {
        return Err(Error::invalid("silhouette needs at least two non-empty clusters"));
    }
    Ok((0..points.len())
        .map(|i| {
            let mut sums = vec![0.0; k];
            for (j, p) in points.iter().enumerate() {
                if j != i {
                    sums[labels[j]] += dist(&points[i], p);
                }
            }
            let own = labels[i];
            if sizes[own] < 2 {
                return 0.0;
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own && sizes[c] > 0)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m > 0.0 {
                (b - a) / m
            } else {
                0.0
            }
        })
        .collect())
}

/// Mean over classes of each class's mean silhouette.
pub fn class_mean_silhouette(points: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    let s = silhouette_samples(points, labels)?;
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let means: Vec<f64> = (0..k)
        .filter_map(|c| {
            let v: Vec<f64> = s.iter().zip(labels).filter(|(_, &l)| l == c).map(|(x, _)| *x).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        })
        .collect();
    Ok(means.iter().sum::<f64>() / means.len() as f64)
}

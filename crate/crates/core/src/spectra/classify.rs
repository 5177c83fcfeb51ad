//! Two-state clustering of dipole angles on the 180° circle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PERIOD: f64 = 180.0;

/// Outcome of [`classify_polarization`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarizationClusters {
    /// Cluster centers in `[0, 180)`, ascending. One entry when degenerate.
    pub centers: Vec<f64>,
    /// Cluster index of each input angle.
    pub assignments: Vec<usize>,
    /// Indices of angles farther than the tolerance from every center.
    pub outliers: Vec<usize>,
    /// Every angle lies within the tolerance of a center.
    pub two_state: bool,
    /// Two-state data whose centers are 90° apart within the tolerance.
    pub orthogonal: bool,
    /// All angles coincide; a single cluster is returned.
    pub degenerate: bool,
    pub warning: Option<String>,
}

/// Distance on the circle of circumference 180°.
pub fn angle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PERIOD);
    d.min(PERIOD - d)
}

fn wrap(a: f64) -> f64 {
    let w = a.rem_euclid(PERIOD);
    if w >= PERIOD {
        0.0
    } else {
        w
    }
}

/// 1-D circular k-means with k = 2 and period 180°.
///
/// The globally optimal split into two arcs is found by exhaustive search
/// over cut points, then refined with Lloyd iterations under the circular
/// metric. Angles are taken modulo 180°.
pub fn classify_polarization(phis: &[f64], tolerance: f64) -> Result<PolarizationClusters> {
    if phis.len() < 2 {
        return Err(Error::InvalidInput("need at least two angles".into()));
    }
    if phis.iter().any(|p| !p.is_finite()) || !(tolerance > 0.0) {
        return Err(Error::InvalidInput("angles must be finite and the tolerance positive".into()));
    }
    let angles: Vec<f64> = phis.iter().map(|&p| wrap(p)).collect();
    if angles.iter().all(|&a| angle_distance(a, angles[0]) < 1e-9) {
        return Ok(PolarizationClusters {
            centers: vec![angles[0]],
            assignments: vec![0; angles.len()],
            outliers: Vec::new(),
            two_state: false,
            orthogonal: false,
            degenerate: true,
            warning: Some("all angles coincide: single polarization state".into()),
        });
    }

    let n = angles.len();
    let mut sorted = angles.clone();
    sorted.sort_by(f64::total_cmp);
    // Doubled, unwrapped copy so every arc is a contiguous, increasing slice.
    let unwrapped: Vec<f64> = sorted.iter().copied().chain(sorted.iter().map(|a| a + PERIOD)).collect();
    let mut s1 = vec![0.0; 2 * n + 1];
    let mut s2 = vec![0.0; 2 * n + 1];
    for (i, &u) in unwrapped.iter().enumerate() {
        s1[i + 1] = s1[i] + u;
        s2[i + 1] = s2[i] + u * u;
    }
    let sse = |i: usize, j: usize| {
        let m = (j - i) as f64;
        let s = s1[j] - s1[i];
        (s2[j] - s2[i]) - s * s / m
    };
    let mut best = (f64::INFINITY, 0usize, 1usize);
    for i in 0..n {
        for len in 1..n {
            let cost = sse(i, i + len) + sse(i + len, i + n);
            if cost < best.0 - 1e-12 {
                best = (cost, i, len);
            }
        }
    }
    let (_, i, len) = best;
    let mean = |a: usize, b: usize| wrap((s1[b] - s1[a]) / (b - a) as f64);
    let mut centers = [mean(i, i + len), mean(i + len, i + n)];

    let mut assignments = assign(&angles, &centers);
    for _ in 0..20 {
        let next =
            [circular_mean(&angles, &assignments, 0, centers[0]), circular_mean(&angles, &assignments, 1, centers[1])];
        let moved = centers.iter().zip(&next).any(|(a, b)| angle_distance(*a, *b) > 1e-12);
        centers = next;
        assignments = assign(&angles, &centers);
        if !moved {
            break;
        }
    }
    if centers[1] < centers[0] {
        centers.swap(0, 1);
        assignments.iter_mut().for_each(|a| *a = 1 - *a);
    }

    let outliers: Vec<usize> =
        (0..n).filter(|&k| centers.iter().all(|&c| angle_distance(angles[k], c) > tolerance)).collect();
    let separation = angle_distance(centers[0], centers[1]);
    let two_state = outliers.is_empty();
    let orthogonal = two_state && (separation - 90.0).abs() <= tolerance;
    let warning = if !two_state {
        Some(format!(
            "{} angle(s) lie more than {tolerance}° from both centers: more than two polarization states",
            outliers.len()
        ))
    } else if !orthogonal {
        Some(format!("two states {separation:.2}° apart are not orthogonal within {tolerance}°"))
    } else {
        None
    };
    Ok(PolarizationClusters {
        centers: centers.to_vec(),
        assignments,
        outliers,
        two_state,
        orthogonal,
        degenerate: false,
        warning,
    })
}

fn assign(angles: &[f64], centers: &[f64; 2]) -> Vec<usize> {
    angles.iter().map(|&a| usize::from(angle_distance(a, centers[1]) < angle_distance(a, centers[0]))).collect()
}

/// Mean of the members of cluster `k`, unwrapped around `reference`.
fn circular_mean(angles: &[f64], assignments: &[usize], k: usize, reference: f64) -> f64 {
    let members: Vec<f64> = angles
        .iter()
        .zip(assignments)
        .filter(|(_, &c)| c == k)
        .map(|(&a, _)| {
            let d = (a - reference + 0.5 * PERIOD).rem_euclid(PERIOD) - 0.5 * PERIOD;
            reference + d
        })
        .collect();
    if members.is_empty() {
        return reference;
    }
    wrap(members.iter().sum::<f64>() / members.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_orthogonal_states() {
        let c = classify_polarization(&[45.0, 135.0, 44.0, 136.0], 5.0).unwrap();
        assert!((c.centers[0] - 44.5).abs() < 1e-9 && (c.centers[1] - 135.5).abs() < 1e-9);
        assert_eq!(c.assignments, vec![0, 1, 0, 1]);
        assert!(c.orthogonal && c.two_state && c.warning.is_none());
    }

    #[test]
    fn three_states_warn() {
        let c = classify_polarization(&[30.0, 90.0, 150.0], 5.0).unwrap();
        assert!(!c.orthogonal);
        assert!(!c.outliers.is_empty());
        assert!(c.warning.is_some());
    }

    #[test]
    fn identical_angles_are_degenerate() {
        let c = classify_polarization(&[10.0, 10.0], 5.0).unwrap();
        assert!(c.degenerate);
        assert_eq!(c.centers, vec![10.0]);
    }

    #[test]
    fn wraps_across_zero() {
        let c = classify_polarization(&[178.0, 2.0, 89.0, 91.0], 5.0).unwrap();
        assert!(c.orthogonal);
        assert!(angle_distance(c.centers[0], 0.0) < 1e-9 || angle_distance(c.centers[1], 0.0) < 1e-9);
    }
}

//! Direction heuristic: counts of lag-1 activation events break the
//! symmetry of the partial-correlation scores.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::{AssociationMatrix, Recording};

/// Window and blend parameters. An activation event from neuron i to
/// neuron j at time t is `x_j[t+1] - x_i[t]` falling inside the closed
/// interval [phi1, phi2].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectivityConfig {
    pub phi1: f64,
    pub phi2: f64,
    /// Threshold for the indicator matrix `r`.
    pub phi3: f64,
    /// Blend between the symmetric scores and the count differences.
    pub weight: f64,
}

impl Default for DirectivityConfig {
    fn default() -> Self {
        DirectivityConfig {
            phi1: 0.2,
            phi2: 0.5,
            phi3: 1.0,
            weight: 0.997,
        }
    }
}

impl DirectivityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.phi1 < self.phi2) {
            return Err(Error::Parameter(format!(
                "activation window requires phi1 < phi2, got [{}, {}]",
                self.phi1, self.phi2
            )));
        }
        if !(self.phi3 > 0.0) {
            return Err(Error::Parameter(format!("phi3 must be > 0, got {}", self.phi3)));
        }
        if !(0.0..=1.0).contains(&self.weight) {
            return Err(Error::Parameter(format!(
                "blend weight must be in [0, 1], got {}",
                self.weight
            )));
        }
        Ok(())
    }
}

/// Pairwise activation counts `s` and their antisymmetric difference
/// `z = s - s^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationCounts {
    pub s: Array2<u64>,
    pub z: Array2<f64>,
    /// Number of lag-1 pairs that were counted (T' - 1); the
    /// normalization denominator for `z`.
    pub lag_pairs: usize,
}

/// Counts, for every ordered pair (i, j), the times t at which
/// `x_j[t+1] - x_i[t]` lies in [phi1, phi2].
pub fn activation_counts(rec: &Recording, cfg: &DirectivityConfig) -> Result<ActivationCounts> {
    cfg.validate()?;
    let p = rec.neurons();
    let t_len = rec.samples();
    if t_len < 2 {
        return Err(Error::Shape(format!(
            "activation counts need at least 2 samples, recording has {t_len}"
        )));
    }

    let rows: Vec<Vec<u64>> = (0..p)
        .into_par_iter()
        .map(|i| {
            let source = rec.values.row(i);
            (0..p)
                .map(|j| {
                    let target = rec.values.row(j);
                    let mut count = 0u64;
                    for t in 0..t_len - 1 {
                        let diff = target[t + 1] - source[t];
                        if diff >= cfg.phi1 && diff <= cfg.phi2 {
                            count += 1;
                        }
                    }
                    count
                })
                .collect()
        })
        .collect();

    let mut s = Array2::zeros((p, p));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, count) in row.into_iter().enumerate() {
            s[[i, j]] = count;
        }
    }
    let z = Array2::from_shape_fn((p, p), |(i, j)| s[[i, j]] as f64 - s[[j, i]] as f64);
    Ok(ActivationCounts {
        s,
        z,
        lag_pairs: t_len - 1,
    })
}

fn check_dims(m: &AssociationMatrix, counts: &ActivationCounts) -> Result<()> {
    if m.p() != counts.z.nrows() {
        return Err(Error::Dimension(format!(
            "association matrix is {}x{} but counts are {}x{}",
            m.p(),
            m.p(),
            counts.z.nrows(),
            counts.z.ncols()
        )));
    }
    Ok(())
}

/// Keeps `scores[i][j]` only where `z[i][j] > phi3`. Mostly of
/// historical interest; the blend below behaves better.
pub fn thresholded_association(
    m: &AssociationMatrix,
    counts: &ActivationCounts,
    phi3: f64,
) -> Result<AssociationMatrix> {
    check_dims(m, counts)?;
    if !m.symmetric {
        return Err(Error::Parameter(
            "thresholded association expects symmetric input scores".into(),
        ));
    }
    let p = m.p();
    let mut scores = Array2::zeros((p, p));
    for i in 0..p {
        for j in 0..p {
            if i != j && counts.z[[i, j]] > phi3 {
                scores[[i, j]] = m.scores[[i, j]];
            }
        }
    }
    AssociationMatrix::new(scores, false)
}

/// `q = weight * scores + (1 - weight) * z`, diagonal zero. With
/// `normalize_z` the count difference is divided by the number of lag
/// pairs first; by default `z` enters raw.
pub fn blended_association(
    m: &AssociationMatrix,
    counts: &ActivationCounts,
    weight: f64,
    normalize_z: bool,
) -> Result<AssociationMatrix> {
    check_dims(m, counts)?;
    if !(0.0..=1.0).contains(&weight) {
        return Err(Error::Parameter(format!(
            "blend weight must be in [0, 1], got {weight}"
        )));
    }
    if !m.symmetric {
        return Err(Error::Parameter(
            "blended association expects symmetric input scores".into(),
        ));
    }
    let p = m.p();
    let z_scale = if normalize_z {
        1.0 / counts.lag_pairs as f64
    } else {
        1.0
    };
    let mut scores = Array2::zeros((p, p));
    for i in 0..p {
        for j in 0..p {
            if i != j {
                scores[[i, j]] =
                    weight * m.scores[[i, j]] + (1.0 - weight) * (counts.z[[i, j]] * z_scale);
            }
        }
    }
    AssociationMatrix::new(scores, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn rec(values: Array2<f64>) -> Recording {
        Recording::new(values, 0).unwrap()
    }

    fn cfg() -> DirectivityConfig {
        DirectivityConfig::default()
    }

    #[test]
    fn counts_enumerate_lagged_window_hits() {
        let rec = rec(array![[0.0, 1.0, 0.0], [0.0, 0.3, 1.2]]);
        let counts = activation_counts(&rec, &cfg()).unwrap();
        // x_j[1]-x_i[0] = 0.3, x_j[2]-x_i[1] = 0.2: both inside [0.2, 0.5]
        assert_eq!(counts.s[[0, 1]], 2);
        assert_eq!(counts.lag_pairs, 2);
    }

    #[test]
    fn identical_series_have_zero_difference() {
        let rec = rec(array![[0.0, 0.4, 0.1, 0.9], [0.0, 0.4, 0.1, 0.9]]);
        let counts = activation_counts(&rec, &cfg()).unwrap();
        assert_eq!(counts.s[[0, 1]], counts.s[[1, 0]]);
        assert_eq!(counts.z[[0, 1]], 0.0);
    }

    #[test]
    fn zero_recording_has_zero_counts() {
        let rec = rec(Array2::zeros((3, 10)));
        let counts = activation_counts(&rec, &cfg()).unwrap();
        assert!(counts.s.iter().all(|&c| c == 0));
    }

    #[test]
    fn z_is_exactly_antisymmetric() {
        let rec = rec(array![
            [0.0, 1.0, 0.2, 0.7, 0.0],
            [0.3, 0.0, 1.1, 0.0, 0.5],
            [0.9, 0.2, 0.0, 0.4, 0.1]
        ]);
        let counts = activation_counts(&rec, &cfg()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(counts.z[[i, j]], -counts.z[[j, i]]);
            }
            assert_eq!(counts.z[[i, i]], 0.0);
        }
    }

    #[test]
    fn counts_need_two_samples() {
        assert!(activation_counts(&rec(array![[1.0]]), &cfg()).is_err());
    }

    fn symmetric_scores() -> AssociationMatrix {
        AssociationMatrix::new(array![[0.0, 0.7], [0.7, 0.0]], true).unwrap()
    }

    fn counts_with_z(z01: f64, lag_pairs: usize) -> ActivationCounts {
        ActivationCounts {
            s: Array2::zeros((2, 2)),
            z: array![[0.0, z01], [-z01, 0.0]],
            lag_pairs,
        }
    }

    #[test]
    fn threshold_keeps_only_strong_directions() {
        let r = thresholded_association(&symmetric_scores(), &counts_with_z(5.0, 10), 1.0).unwrap();
        assert_eq!(r.scores[[0, 1]], 0.7);
        assert_eq!(r.scores[[1, 0]], 0.0);
        assert!(!r.symmetric);
    }

    #[test]
    fn threshold_zero_z_gives_zero_matrix() {
        let r = thresholded_association(&symmetric_scores(), &counts_with_z(0.0, 10), 1.0).unwrap();
        assert!(r.scores.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn threshold_infinite_phi3_gives_zero_matrix() {
        let r =
            thresholded_association(&symmetric_scores(), &counts_with_z(100.0, 10), f64::INFINITY)
                .unwrap();
        assert!(r.scores.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn blend_degenerates_at_the_endpoints() {
        let m = symmetric_scores();
        let counts = counts_with_z(10.0, 10);
        let q1 = blended_association(&m, &counts, 1.0, false).unwrap();
        assert_eq!(q1.scores[[0, 1]], m.scores[[0, 1]]);
        assert_eq!(q1.scores[[1, 0]], m.scores[[1, 0]]);
        let q0 = blended_association(&m, &counts, 0.0, false).unwrap();
        assert_eq!(q0.scores, counts.z);
    }

    #[test]
    fn blend_scalar_arithmetic() {
        let m = AssociationMatrix::new(array![[0.0, 0.5], [0.5, 0.0]], true).unwrap();
        let counts = counts_with_z(10.0, 10);
        let q = blended_association(&m, &counts, 0.997, false).unwrap();
        assert!((q.scores[[0, 1]] - 0.5285).abs() < 1e-12);
    }

    #[test]
    fn blend_normalized_z_divides_by_lag_pairs() {
        let m = AssociationMatrix::new(array![[0.0, 0.5], [0.5, 0.0]], true).unwrap();
        let counts = counts_with_z(10.0, 20);
        let q = blended_association(&m, &counts, 0.5, true).unwrap();
        assert!((q.scores[[0, 1]] - (0.5 * 0.5 + 0.5 * 0.5)).abs() < 1e-12);
    }

    #[test]
    fn blend_antisymmetric_decomposition() {
        let m = symmetric_scores();
        let counts = counts_with_z(4.0, 10);
        let weight = 0.9;
        let q = blended_association(&m, &counts, weight, false).unwrap();
        let lhs = q.scores[[0, 1]] + q.scores[[1, 0]];
        let rhs = 2.0 * weight * m.scores[[0, 1]];
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn blend_rejects_bad_weight() {
        let m = symmetric_scores();
        let counts = counts_with_z(1.0, 10);
        assert!(blended_association(&m, &counts, 1.5, false).is_err());
        assert!(blended_association(&m, &counts, -0.1, false).is_err());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let m = AssociationMatrix::new(Array2::zeros((3, 3)), true).unwrap();
        let counts = counts_with_z(1.0, 10);
        assert!(matches!(
            blended_association(&m, &counts, 0.5, false),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn config_validation() {
        let mut bad = DirectivityConfig::default();
        bad.phi1 = 0.6;
        assert!(bad.validate().is_err());
        let mut bad = DirectivityConfig::default();
        bad.weight = 1.2;
        assert!(bad.validate().is_err());
    }
}

//! Averaged partial correlation over a (threshold, low-pass filter)
//! grid: uniform mean across thresholds within a filter, weighted sum
//! across filters.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::inference::{
    default_pca_components, empirical_covariance, invert_exact, invert_pca, partial_correlation,
};
use crate::pipeline::{apply_pipeline, Lowpass, PipelineConfig};
use crate::types::{AssociationMatrix, Recording};

/// Grid points evaluated in parallel per batch; batches are folded in
/// job order so the accumulation order never depends on scheduling.
const GRID_BATCH: usize = 32;

/// How the precision matrix is obtained at each grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PcaMode {
    /// Exact SPD inverse.
    Off,
    /// Truncate to a fixed component count.
    Components(usize),
    /// Truncate to round(fraction * p) components.
    Fraction(f64),
}

impl PcaMode {
    /// Resolves to a concrete component count for `p` neurons
    /// (None = exact inverse).
    pub fn resolve(&self, p: usize) -> Result<Option<usize>> {
        match *self {
            PcaMode::Off => Ok(None),
            PcaMode::Components(m) => {
                if m < 1 || m > p {
                    Err(Error::Parameter(format!(
                        "component count must be in [1, {p}], got {m}"
                    )))
                } else {
                    Ok(Some(m))
                }
            }
            PcaMode::Fraction(f) => {
                if !(f > 0.0 && f <= 1.0) {
                    Err(Error::Parameter(format!(
                        "component fraction must be in (0, 1], got {f}"
                    )))
                } else {
                    Ok(Some((((f * p as f64).round() as usize).max(1)).min(p)))
                }
            }
        }
    }
}

impl std::str::FromStr for PcaMode {
    type Err = Error;

    /// `off`, an integer count (`800`), or a fraction of p (`0.8p`).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("off") {
            return Ok(PcaMode::Off);
        }
        if let Some(fraction) = s.strip_suffix(['p', 'P']) {
            let f: f64 = fraction
                .parse()
                .map_err(|_| Error::Parameter(format!("invalid PCA fraction {s:?}")))?;
            return Ok(PcaMode::Fraction(f));
        }
        let m: usize = s
            .parse()
            .map_err(|_| Error::Parameter(format!("invalid PCA mode {s:?}")))?;
        Ok(PcaMode::Components(m))
    }
}

/// Ensemble definition: threshold grid, per-filter weights, the shared
/// pipeline template (its `lowpass` and `tau` are overridden per grid
/// point) and the precision mode.
#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    pub tau_grid: Vec<f64>,
    pub filters: Vec<(Lowpass, f64)>,
    pub template: PipelineConfig,
    pub pca: PcaMode,
    /// Skip degenerate grid points instead of aborting; weights are
    /// renormalized over the surviving filters.
    pub skip_degenerate: bool,
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau_grid.is_empty() {
            return Err(Error::Parameter("tau grid must be nonempty".into()));
        }
        for &tau in &self.tau_grid {
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(Error::Parameter(format!("grid threshold must be > 0, got {tau}")));
            }
        }
        for pair in self.tau_grid.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::Parameter(format!(
                    "tau grid must be strictly increasing, got {} then {}",
                    pair[0], pair[1]
                )));
            }
        }
        if self.filters.is_empty() {
            return Err(Error::Parameter("filter list must be nonempty".into()));
        }
        let mut total = 0.0;
        for &(_, w) in &self.filters {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Parameter(format!("filter weight must be >= 0, got {w}")));
            }
            total += w;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter(format!(
                "filter weights must sum to 1 (within 1e-9), got {total}"
            )));
        }
        Ok(())
    }
}

/// The two published grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridMode {
    /// f1 and f2 with their published weights renormalized to sum 1.
    Simplified,
    /// All four filters with weights 0.383 / 0.345 / 0.004 / 0.268.
    Full,
}

/// Thresholds 0.100, 0.101, ..., 0.210 (111 values) and the published
/// per-filter weights for the requested mode.
pub fn default_grid(mode: GridMode) -> EnsembleConfig {
    let tau_grid: Vec<f64> = (100..=210).map(|k| k as f64 / 1000.0).collect();
    let filters = match mode {
        GridMode::Simplified => {
            let total = 0.383 + 0.345;
            vec![(Lowpass::F1, 0.383 / total), (Lowpass::F2, 0.345 / total)]
        }
        GridMode::Full => vec![
            (Lowpass::F1, 0.383),
            (Lowpass::F2, 0.345),
            (Lowpass::F3, 0.004),
            (Lowpass::F4, 0.268),
        ],
    };
    EnsembleConfig {
        tau_grid,
        filters,
        template: PipelineConfig::default(),
        pca: PcaMode::Fraction(0.8),
        skip_degenerate: false,
    }
}

/// One grid point: filter, threshold, partial correlation.
fn grid_point(rec: &Recording, cfg: &EnsembleConfig, filter: Lowpass, tau: f64) -> Result<Array2<f64>> {
    let mut point_cfg = cfg.template.clone();
    point_cfg.lowpass = Some(filter);
    point_cfg.tau = tau;
    let filtered = apply_pipeline(rec, &point_cfg)?;
    let cov = empirical_covariance(&filtered)?;
    let prec = match cfg.pca.resolve(rec.neurons())? {
        None => invert_exact(&cov)?,
        Some(m) => invert_pca(&cov, m)?,
    };
    Ok(partial_correlation(&prec)?.scores)
}

/// Ensemble result plus the grid points that were skipped (only ever
/// nonempty with `skip_degenerate`).
#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub matrix: AssociationMatrix,
    pub skipped: Vec<(Lowpass, f64)>,
}

/// Runs every (filter, tau) grid point and combines the resulting
/// partial-correlation matrices: uniform mean over tau within each
/// filter, then the weighted sum across filters. Accumulation order is
/// filter-major, tau-ascending, independent of the worker count.
pub fn run_ensemble(rec: &Recording, cfg: &EnsembleConfig) -> Result<EnsembleRun> {
    cfg.validate()?;
    let p = rec.neurons();
    cfg.pca.resolve(p)?;

    let jobs: Vec<(usize, usize)> = (0..cfg.filters.len())
        .flat_map(|fi| (0..cfg.tau_grid.len()).map(move |ti| (fi, ti)))
        .collect();

    let mut sums: Vec<Option<Array2<f64>>> = vec![None; cfg.filters.len()];
    let mut counts = vec![0usize; cfg.filters.len()];
    let mut skipped = Vec::new();
    let mut first_failure: Option<Error> = None;

    for batch in jobs.chunks(GRID_BATCH) {
        let results: Vec<Result<Array2<f64>>> = batch
            .par_iter()
            .map(|&(fi, ti)| grid_point(rec, cfg, cfg.filters[fi].0, cfg.tau_grid[ti]))
            .collect();
        for (&(fi, ti), result) in batch.iter().zip(results) {
            let (filter, tau) = (cfg.filters[fi].0, cfg.tau_grid[ti]);
            match result {
                Ok(scores) => {
                    match &mut sums[fi] {
                        Some(sum) => *sum += &scores,
                        None => sums[fi] = Some(scores),
                    }
                    counts[fi] += 1;
                }
                Err(err) => {
                    let annotated = Error::GridPoint {
                        filter: filter.name().to_string(),
                        tau,
                        source: Box::new(err),
                    };
                    if !cfg.skip_degenerate {
                        return Err(annotated);
                    }
                    if first_failure.is_none() {
                        first_failure = Some(annotated);
                    }
                    skipped.push((filter, tau));
                }
            }
        }
    }

    let surviving_weight: f64 = cfg
        .filters
        .iter()
        .zip(&counts)
        .filter(|(_, &c)| c > 0)
        .map(|(&(_, w), _)| w)
        .sum();
    if surviving_weight <= 0.0 {
        return Err(first_failure
            .unwrap_or_else(|| Error::Parameter("ensemble produced no grid points".into())));
    }
    // renormalize only when a whole filter dropped out
    let renormalize = counts.iter().any(|&c| c == 0);

    let mut combined = Array2::zeros((p, p));
    for (fi, sum) in sums.into_iter().enumerate() {
        let Some(sum) = sum else { continue };
        let weight = if renormalize {
            cfg.filters[fi].1 / surviving_weight
        } else {
            cfg.filters[fi].1
        };
        let scale = weight / counts[fi] as f64;
        combined += &sum.mapv(|v| v * scale);
    }
    Ok(EnsembleRun {
        matrix: AssociationMatrix::new(combined, true)?,
        skipped,
    })
}

/// See [`run_ensemble`]; this drops the skip bookkeeping.
pub fn averaged_partial_correlation(rec: &Recording, cfg: &EnsembleConfig) -> Result<AssociationMatrix> {
    run_ensemble(rec, cfg).map(|run| run.matrix)
}

/// Resolved component count for an ensemble's PCA mode, mainly for
/// manifest reporting.
pub fn resolved_components(pca: PcaMode, p: usize) -> Result<usize> {
    Ok(match pca.resolve(p)? {
        None => p,
        Some(m) => m,
    })
}

/// Convenience used by tests and the CLI preset path.
pub fn default_components_for(p: usize) -> usize {
    default_pca_components(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noisy_recording(p: usize, t: usize, seed: u64) -> Recording {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Array2::zeros((p, t));
        for i in 0..p {
            for s in 0..t {
                // sparse spikes on a noisy floor
                let spike = if rng.gen::<f64>() < 0.05 { rng.gen_range(0.5..1.5) } else { 0.0 };
                values[[i, s]] = spike + 0.01 * rng.gen_range(-1.0..1.0);
            }
        }
        Recording::new(values, 0).unwrap()
    }

    #[test]
    fn default_grid_full_mode() {
        let cfg = default_grid(GridMode::Full);
        assert_eq!(cfg.filters.len(), 4);
        assert_eq!(cfg.tau_grid.len(), 111);
        let total: f64 = cfg.filters.iter().map(|&(_, w)| w).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(cfg.tau_grid[0], 0.1);
        assert_eq!(cfg.tau_grid[110], 0.21);
        cfg.validate().unwrap();
    }

    #[test]
    fn default_grid_simplified_mode() {
        let cfg = default_grid(GridMode::Simplified);
        assert_eq!(cfg.filters.len(), 2);
        assert_eq!(cfg.tau_grid.len(), 111);
        let (w1, w2) = (cfg.filters[0].1, cfg.filters[1].1);
        assert!((w1 + w2 - 1.0).abs() < 1e-12);
        assert!((w1 / w2 - 0.383 / 0.345).abs() < 1e-12);
        cfg.validate().unwrap();
    }

    #[test]
    fn single_grid_point_equals_single_config() {
        let rec = noisy_recording(6, 400, 1);
        let cfg = EnsembleConfig {
            tau_grid: vec![0.15],
            filters: vec![(Lowpass::F1, 1.0)],
            template: PipelineConfig::default(),
            pca: PcaMode::Off,
            skip_degenerate: false,
        };
        let ensemble = averaged_partial_correlation(&rec, &cfg).unwrap();

        let mut single_cfg = PipelineConfig::default();
        single_cfg.lowpass = Some(Lowpass::F1);
        single_cfg.tau = 0.15;
        let filtered = apply_pipeline(&rec, &single_cfg).unwrap();
        let cov = inference::empirical_covariance(&filtered).unwrap();
        let single = inference::partial_correlation(&inference::invert_exact(&cov).unwrap()).unwrap();

        assert_eq!(ensemble.scores, single.scores);
        assert!(ensemble.symmetric);
    }

    #[test]
    fn duplicated_grid_point_is_idempotent() {
        let rec = noisy_recording(5, 300, 2);
        let once = averaged_partial_correlation(
            &rec,
            &EnsembleConfig {
                tau_grid: vec![0.12],
                filters: vec![(Lowpass::F2, 1.0)],
                template: PipelineConfig::default(),
                pca: PcaMode::Off,
                skip_degenerate: false,
            },
        )
        .unwrap();
        let twice = averaged_partial_correlation(
            &rec,
            &EnsembleConfig {
                tau_grid: vec![0.12],
                filters: vec![(Lowpass::F2, 0.5), (Lowpass::F2, 0.5)],
                template: PipelineConfig::default(),
                pca: PcaMode::Off,
                skip_degenerate: false,
            },
        )
        .unwrap();
        assert_eq!(once.scores, twice.scores);
    }

    #[test]
    fn weight_rescaling_is_invisible() {
        let rec = noisy_recording(6, 400, 3);
        let base = EnsembleConfig {
            tau_grid: vec![0.1, 0.15],
            filters: vec![(Lowpass::F1, 0.3), (Lowpass::F2, 0.7)],
            template: PipelineConfig::default(),
            pca: PcaMode::Off,
            skip_degenerate: false,
        };
        let reference = averaged_partial_correlation(&rec, &base).unwrap();

        let alpha = 3.7;
        let total = 0.3 * alpha + 0.7 * alpha;
        let mut scaled = base.clone();
        scaled.filters = vec![
            (Lowpass::F1, 0.3 * alpha / total),
            (Lowpass::F2, 0.7 * alpha / total),
        ];
        let rescaled = averaged_partial_correlation(&rec, &scaled).unwrap();
        for ((i, j), v) in rescaled.scores.indexed_iter() {
            assert!((v - reference.scores[[i, j]]).abs() < 1e-12, "({i},{j})");
        }
    }

    #[test]
    fn ensemble_output_is_exactly_symmetric_and_deterministic() {
        let rec = noisy_recording(8, 500, 4);
        let mut cfg = default_grid(GridMode::Simplified);
        cfg.tau_grid = vec![0.1, 0.13, 0.16];
        cfg.pca = PcaMode::Fraction(0.8);
        let a = averaged_partial_correlation(&rec, &cfg).unwrap();
        let b = averaged_partial_correlation(&rec, &cfg).unwrap();
        assert_eq!(a.scores, b.scores);
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(a.scores[[i, j]], a.scores[[j, i]]);
            }
        }
    }

    #[test]
    fn degenerate_point_annotates_filter_and_tau() {
        // thresholds beyond every spike magnitude leave no signal
        let rec = noisy_recording(4, 200, 5);
        let cfg = EnsembleConfig {
            tau_grid: vec![0.15, 50.0],
            filters: vec![(Lowpass::F1, 1.0)],
            template: PipelineConfig::default(),
            pca: PcaMode::Off,
            skip_degenerate: false,
        };
        let err = averaged_partial_correlation(&rec, &cfg).unwrap_err();
        match err {
            Error::GridPoint { filter, tau, .. } => {
                assert_eq!(filter, "f1");
                assert_eq!(tau, 50.0);
            }
            other => panic!("expected grid-point error, got {other}"),
        }
    }

    #[test]
    fn skip_degenerate_keeps_surviving_points() {
        let rec = noisy_recording(4, 200, 5);
        let mut cfg = EnsembleConfig {
            tau_grid: vec![0.15, 50.0],
            filters: vec![(Lowpass::F1, 1.0)],
            template: PipelineConfig::default(),
            pca: PcaMode::Off,
            skip_degenerate: true,
        };
        let run = run_ensemble(&rec, &cfg).unwrap();
        assert_eq!(run.skipped, vec![(Lowpass::F1, 50.0)]);

        // surviving point alone defines the output
        cfg.tau_grid = vec![0.15];
        cfg.skip_degenerate = false;
        let single = averaged_partial_correlation(&rec, &cfg).unwrap();
        assert_eq!(run.matrix.scores, single.scores);
    }

    #[test]
    fn config_validation_catches_bad_grids() {
        let template = PipelineConfig::default();
        let bad_weights = EnsembleConfig {
            tau_grid: vec![0.1],
            filters: vec![(Lowpass::F1, 0.6), (Lowpass::F2, 0.6)],
            template: template.clone(),
            pca: PcaMode::Off,
            skip_degenerate: false,
        };
        assert!(bad_weights.validate().is_err());

        let unsorted = EnsembleConfig {
            tau_grid: vec![0.2, 0.1],
            filters: vec![(Lowpass::F1, 1.0)],
            template,
            pca: PcaMode::Off,
            skip_degenerate: false,
        };
        assert!(unsorted.validate().is_err());
    }

    #[test]
    fn pca_mode_parsing() {
        assert_eq!("off".parse::<PcaMode>().unwrap(), PcaMode::Off);
        assert_eq!("800".parse::<PcaMode>().unwrap(), PcaMode::Components(800));
        assert_eq!("0.8p".parse::<PcaMode>().unwrap(), PcaMode::Fraction(0.8));
        assert!("eight".parse::<PcaMode>().is_err());
        assert_eq!(PcaMode::Fraction(0.8).resolve(50).unwrap(), Some(40));
        assert_eq!(PcaMode::Off.resolve(50).unwrap(), None);
        assert!(PcaMode::Components(51).resolve(50).is_err());
    }
}

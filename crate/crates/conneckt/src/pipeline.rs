//! Signal conditioning: low-pass smoothing, backward differencing, hard
//! thresholding, optional magnitude smoothing and global-activity
//! regularization, composed into a single pipeline.
//!
//! Window filters emit only indices where every window term exists (no
//! padding); dropped leading samples are tracked in `time_offset` so the
//! outputs of different configurations stay alignable.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::types::Recording;

/// The four low-pass window filters. Each sums a short window around
/// (or trailing / leading) the current sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Lowpass {
    /// x[t-1] + x[t] + x[t+1]
    F1,
    /// 0.4 x[t-3] + 0.8 x[t-2] + x[t-1] + x[t]
    F2,
    /// x[t-1] + x[t] + x[t+1] + x[t+2]
    F3,
    /// x[t] + x[t+1] + x[t+2] + x[t+3]
    F4,
}

impl Lowpass {
    /// (weight, relative offset) pairs, in evaluation order.
    fn taps(self) -> &'static [(f64, isize)] {
        match self {
            Lowpass::F1 => &[(1.0, -1), (1.0, 0), (1.0, 1)],
            Lowpass::F2 => &[(0.4, -3), (0.8, -2), (1.0, -1), (1.0, 0)],
            Lowpass::F3 => &[(1.0, -1), (1.0, 0), (1.0, 1), (1.0, 2)],
            Lowpass::F4 => &[(1.0, 0), (1.0, 1), (1.0, 2), (1.0, 3)],
        }
    }

    /// Leading samples without a full window.
    pub fn head_drop(self) -> usize {
        self.taps().iter().map(|&(_, o)| (-o).max(0) as usize).max().unwrap()
    }

    /// Trailing samples without a full window.
    pub fn tail_drop(self) -> usize {
        self.taps().iter().map(|&(_, o)| o.max(0) as usize).max().unwrap()
    }

    /// Minimum input length.
    pub fn min_samples(self) -> usize {
        self.head_drop() + self.tail_drop() + 1
    }

    pub fn name(self) -> &'static str {
        match self {
            Lowpass::F1 => "f1",
            Lowpass::F2 => "f2",
            Lowpass::F3 => "f3",
            Lowpass::F4 => "f4",
        }
    }
}

impl std::str::FromStr for Lowpass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "f1" => Ok(Lowpass::F1),
            "f2" => Ok(Lowpass::F2),
            "f3" => Ok(Lowpass::F3),
            "f4" => Ok(Lowpass::F4),
            other => Err(Error::Parameter(format!("unknown low-pass filter {other:?}"))),
        }
    }
}

/// Piecewise-linear function on the nonnegative reals: clamps below the
/// first knot and above the last, interpolates linearly between knots.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    knots: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::Parameter("piecewise-linear needs at least one knot".into()));
        }
        for window in knots.windows(2) {
            if window[1].0 <= window[0].0 {
                return Err(Error::Parameter(format!(
                    "knot x values must be strictly increasing, got {} then {}",
                    window[0].0, window[1].0
                )));
            }
        }
        for &(x, y) in &knots {
            if !(x.is_finite() && x >= 0.0) || !(y.is_finite() && y >= 0.0) {
                return Err(Error::Parameter(format!("invalid knot ({x}, {y})")));
            }
        }
        Ok(PiecewiseLinear { knots })
    }

    pub fn constant(y: f64) -> Self {
        PiecewiseLinear { knots: vec![(0.0, y)] }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let knots = &self.knots;
        if x <= knots[0].0 {
            return knots[0].1;
        }
        if x >= knots[knots.len() - 1].0 {
            return knots[knots.len() - 1].1;
        }
        let hi = knots.partition_point(|&(kx, _)| kx < x);
        let (x0, y0) = knots[hi - 1];
        let (x1, y1) = knots[hi];
        y0 + (y1 - y0) * ((x - x0) / (x1 - x0))
    }
}

/// Global-activity regularization stage.
#[derive(Debug, Clone, PartialEq)]
pub enum Regularizer {
    None,
    /// (x + 1)^(1 + 1/S_t) where S_t is the summed activity at time t.
    W,
    /// W raised to k(S_t); with k == 1 this reduces to W.
    WStar(PiecewiseLinear),
}

/// One filtering configuration: which low-pass filter (if any), the
/// hard threshold, the magnitude-smoothing exponent (1 disables the
/// stage) and the regularization mode.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub lowpass: Option<Lowpass>,
    pub tau: f64,
    pub c: f64,
    pub regularizer: Regularizer,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Parameter(format!("threshold tau must be > 0, got {}", self.tau)));
        }
        if !(self.c > 0.0 && self.c <= 1.0) {
            return Err(Error::Parameter(format!("exponent c must be in (0, 1], got {}", self.c)));
        }
        Ok(())
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            lowpass: Some(Lowpass::F1),
            tau: 0.15,
            c: 1.0,
            regularizer: Regularizer::W,
        }
    }
}

/// Applies one of the low-pass window filters per neuron. Output keeps
/// only indices with a complete window; `time_offset` grows by the
/// number of dropped leading samples.
pub fn lowpass(rec: &Recording, kind: Lowpass) -> Result<Recording> {
    let t_in = rec.samples();
    if t_in < kind.min_samples() {
        return Err(Error::Shape(format!(
            "{} needs at least {} samples, recording has {}",
            kind.name(),
            kind.min_samples(),
            t_in
        )));
    }
    let head = kind.head_drop();
    let t_out = t_in - head - kind.tail_drop();
    let taps = kind.taps();

    let p = rec.neurons();
    let mut values = Array2::zeros((p, t_out));
    for i in 0..p {
        let row = rec.values.row(i);
        for t in 0..t_out {
            let center = t + head;
            let mut acc = 0.0;
            for &(w, o) in taps {
                acc += w * row[(center as isize + o) as usize];
            }
            values[[i, t]] = acc;
        }
    }
    Ok(Recording {
        values,
        time_offset: rec.time_offset + head,
    })
}

/// Backward difference x[t] - x[t-1]; drops the first sample.
pub fn backward_difference(rec: &Recording) -> Result<Recording> {
    let t_in = rec.samples();
    if t_in < 2 {
        return Err(Error::Shape(format!(
            "backward difference needs at least 2 samples, recording has {t_in}"
        )));
    }
    let p = rec.neurons();
    let mut values = Array2::zeros((p, t_in - 1));
    for i in 0..p {
        let row = rec.values.row(i);
        for t in 0..t_in - 1 {
            values[[i, t]] = row[t + 1] - row[t];
        }
    }
    Ok(Recording {
        values,
        time_offset: rec.time_offset + 1,
    })
}

/// Keeps values >= tau, zeroes the rest. Length and offset unchanged.
pub fn hard_threshold(rec: &Recording, tau: f64) -> Result<Recording> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Parameter(format!("threshold tau must be > 0, got {tau}")));
    }
    let values = rec.values.mapv(|x| if x >= tau { x } else { 0.0 });
    Ok(Recording {
        values,
        time_offset: rec.time_offset,
    })
}

/// Elementwise x^c for nonnegative inputs, 0 < c <= 1. Evens out
/// differences in peak magnitudes left after thresholding.
pub fn magnitude_smooth(rec: &Recording, c: f64) -> Result<Recording> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::Parameter(format!("exponent c must be in (0, 1], got {c}")));
    }
    if let Some(((i, t), v)) = rec.values.indexed_iter().find(|(_, v)| **v < 0.0) {
        return Err(Error::Contract(format!(
            "magnitude smoothing requires nonnegative input, neuron {i} sample {t} is {v}"
        )));
    }
    if c == 1.0 {
        return Ok(rec.clone());
    }
    let values = rec.values.mapv(|x| if x == 0.0 { 0.0 } else { x.powf(c) });
    Ok(Recording {
        values,
        time_offset: rec.time_offset,
    })
}

/// Magnifies spikes that occur during low global activity. For each
/// time t, S_t is the sum over all neurons (fixed index order). When
/// S_t = 0 every neuron outputs 1 at t; otherwise
/// W: (x+1)^(1+1/S_t), WStar: ((x+1)^(1+1/S_t))^k(S_t).
pub fn global_regularize(rec: &Recording, mode: &Regularizer, k: &PiecewiseLinear) -> Result<Recording> {
    if let Some(((i, t), v)) = rec.values.indexed_iter().find(|(_, v)| **v < 0.0) {
        return Err(Error::Contract(format!(
            "regularization requires nonnegative input, neuron {i} sample {t} is {v}"
        )));
    }
    let p = rec.neurons();
    let t_len = rec.samples();
    let mut values = Array2::zeros((p, t_len));
    for t in 0..t_len {
        let mut total = 0.0;
        for i in 0..p {
            total += rec.values[[i, t]];
        }
        if total == 0.0 {
            for i in 0..p {
                values[[i, t]] = 1.0;
            }
            continue;
        }
        let exponent = 1.0 + 1.0 / total;
        let k_t = match mode {
            Regularizer::WStar(_) => k.eval(total),
            _ => 1.0,
        };
        for i in 0..p {
            let base = (rec.values[[i, t]] + 1.0).powf(exponent);
            values[[i, t]] = match mode {
                Regularizer::None => rec.values[[i, t]],
                Regularizer::W => base,
                Regularizer::WStar(_) => {
                    if k_t == 1.0 {
                        base
                    } else {
                        base.powf(k_t)
                    }
                }
            };
        }
    }
    Ok(Recording {
        values,
        time_offset: rec.time_offset,
    })
}

/// Runs the configured stages in order: low-pass, backward difference,
/// hard threshold, magnitude smoothing (when c < 1), regularization.
/// Chaining the stage functions by hand gives a bit-identical result.
pub fn apply_pipeline(rec: &Recording, cfg: &PipelineConfig) -> Result<Recording> {
    cfg.validate()?;
    let mut current = match cfg.lowpass {
        Some(kind) => lowpass(rec, kind)?,
        None => rec.clone(),
    };
    current = backward_difference(&current)?;
    current = hard_threshold(&current, cfg.tau)?;
    if cfg.c < 1.0 {
        current = magnitude_smooth(&current, cfg.c)?;
    }
    match &cfg.regularizer {
        Regularizer::None => Ok(current),
        Regularizer::W => global_regularize(&current, &Regularizer::W, &PiecewiseLinear::constant(1.0)),
        Regularizer::WStar(k) => global_regularize(&current, &cfg.regularizer, k),
    }
}

//! Trend-alignment metrics between a simulated and a ground-truth curve.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-step population-mean opinions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TrendCurve {
    pub values: Vec<f64>,
}

impl TrendCurve {
    pub fn new(values: Vec<f64>) -> Self {
        TrendCurve { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl From<Vec<f64>> for TrendCurve {
    fn from(values: Vec<f64>) -> Self {
        TrendCurve { values }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendMetrics {
    #[serde(rename = "ΔBias")]
    pub delta_bias: f64,
    #[serde(rename = "ΔDiv")]
    pub delta_div: f64,
    #[serde(rename = "Corr.")]
    pub corr: f64,
    #[serde(rename = "F.")]
    pub frechet: f64,
}

fn check_lengths(sim: &TrendCurve, truth: &TrendCurve, min: usize) -> Result<()> {
    if sim.len() != truth.len() {
        return Err(Error::Dimension {
            expected: truth.len(),
            actual: sim.len(),
        });
    }
    if sim.len() < min {
        return Err(Error::Precondition(format!(
            "curves need at least {min} points"
        )));
    }
    Ok(())
}

fn abs_errors<'a>(sim: &'a TrendCurve, truth: &'a TrendCurve) -> impl Iterator<Item = f64> + 'a {
    sim.values
        .iter()
        .zip(&truth.values)
        .map(|(s, t)| (t - s).abs())
}

/// Mean absolute deviation between the curves.
pub fn delta_bias(sim: &TrendCurve, truth: &TrendCurve) -> Result<f64> {
    check_lengths(sim, truth, 1)?;
    Ok(abs_errors(sim, truth).sum::<f64>() / sim.len() as f64)
}

/// Population variance of the absolute deviation.
pub fn delta_div(sim: &TrendCurve, truth: &TrendCurve) -> Result<f64> {
    let bias = delta_bias(sim, truth)?;
    Ok(abs_errors(sim, truth)
        .map(|e| (e - bias) * (e - bias))
        .sum::<f64>()
        / sim.len() as f64)
}

/// Pearson correlation; 0 when either curve is constant.
pub fn pearson_corr(sim: &TrendCurve, truth: &TrendCurve) -> Result<f64> {
    check_lengths(sim, truth, 2)?;
    Ok(pearson(&sim.values, &truth.values))
}

pub(crate) fn pearson(a: &[f64], b: &[f64]) -> f64 {
    // Exact constancy check: the mean of a constant series need not equal
    // its value, which would leave a spurious non-zero variance.
    let constant = |v: &[f64]| v.iter().all(|x| *x == v[0]);
    if a.is_empty() || constant(a) || constant(b) {
        return 0.0;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

/// Curve vertices `(t / (len - 1), value)`; a single point sits at x = 0.
fn polyline(c: &TrendCurve) -> Vec<(f64, f64)> {
    let n = c.len();
    c.values
        .iter()
        .enumerate()
        .map(|(t, &v)| {
            let x = if n > 1 {
                t as f64 / (n - 1) as f64
            } else {
                0.0
            };
            (x, v)
        })
        .collect()
}

/// Discrete Fréchet distance between the two curves drawn as 2-D polylines
/// over normalised time.
pub fn frechet_distance(sim: &TrendCurve, truth: &TrendCurve) -> Result<f64> {
    if sim.is_empty() || truth.is_empty() {
        return Err(Error::Precondition(
            "Fréchet distance of an empty curve".into(),
        ));
    }
    Ok(discrete_frechet(&polyline(sim), &polyline(truth)))
}

pub fn discrete_frechet(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let dist = |p: (f64, f64), q: (f64, f64)| (p.0 - q.0).hypot(p.1 - q.1);
    let m = b.len();
    let mut prev = vec![0.0f64; m];
    let mut cur = vec![0.0f64; m];
    for (i, &p) in a.iter().enumerate() {
        for j in 0..m {
            let d = dist(p, b[j]);
            cur[j] = match (i, j) {
                (0, 0) => d,
                (0, _) => cur[j - 1].max(d),
                (_, 0) => prev[0].max(d),
                _ => prev[j].min(prev[j - 1]).min(cur[j - 1]).max(d),
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m - 1]
}

pub fn all_metrics(sim: &TrendCurve, truth: &TrendCurve) -> Result<TrendMetrics> {
    Ok(TrendMetrics {
        delta_bias: delta_bias(sim, truth)?,
        delta_div: delta_div(sim, truth)?,
        corr: pearson_corr(sim, truth)?,
        frechet: frechet_distance(sim, truth)?,
    })
}

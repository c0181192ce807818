//! Weighted expectation estimators and repetition studies.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::csvio;
use crate::designs::{Design, Scheme};
use crate::error::{Error, Result};
use crate::inputs::{InputModel, Prepared, SamplingSettings};
use crate::models::RowEvaluator;
use crate::quantizer::{CandidatePool, Quantizer};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateResult {
    pub value: f64,
    pub scheme: Scheme,
    pub n: usize,
    pub seed: Option<u64>,
}

/// Evaluates `f` on every row, turning failures and non-finite values into
/// errors that name the 1-based row.
pub fn evaluate<E: RowEvaluator + ?Sized>(design: &Design, f: &E) -> Result<Vec<f64>> {
    (0..design.n())
        .map(|i| {
            let v = f.eval(design.row(i)).map_err(|e| Error::Evaluation { row: i + 1, message: e.to_string() })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Evaluation { row: i + 1, message: format!("non-finite value {v}") })
            }
        })
        .collect()
}

/// Weighted mean of `values` under `design`'s weights.
///
/// Sums run on `values - values[0]` so a constant function returns its value
/// exactly. Q2LHS divides by the weight total; the other schemes use their
/// weights as given.
pub fn weighted_value(design: &Design, values: &[f64]) -> Result<f64> {
    let w = design.weights();
    if values.len() != w.len() {
        return Err(Error::Dimension { expected: w.len(), found: values.len() });
    }
    let f0 = values[0];
    let shifted: f64 = w.iter().zip(values).map(|(w, v)| w * (v - f0)).sum();
    if design.scheme() == Scheme::Q2lhs {
        let total: f64 = w.iter().sum();
        if total < 1e-300 {
            return Err(Error::Weight(format!("degenerate weight total {total}")));
        }
        Ok(f0 + shifted / total)
    } else {
        Ok(f0 + shifted)
    }
}

pub fn estimate<E: RowEvaluator + ?Sized>(design: &Design, f: &E) -> Result<EstimateResult> {
    let values = evaluate(design, f)?;
    Ok(EstimateResult { value: weighted_value(design, &values)?, scheme: design.scheme(), n: design.n(), seed: design.seed() })
}

/// `sum_i p_i^2 Var(f | cell i)` with the cell law uniform over its pool members:
/// the exact variance of the RQ estimator for a fixed quantizer.
pub fn rq_variance<E: RowEvaluator + ?Sized>(quantizer: &Quantizer, pool: &CandidatePool, f: &E) -> Result<f64> {
    let mut total = 0.0;
    for (cell, p) in quantizer.probabilities().iter().enumerate() {
        let vals = quantizer.members(cell).iter().map(|&k| f.eval(pool.point(k))).collect::<Result<Vec<f64>>>()?;
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64;
        total += p * p * var;
    }
    Ok(total)
}

/// Spread of a repetition sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub repetitions: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub std_error: f64,
    pub p025: f64,
    pub p975: f64,
    pub min: f64,
    pub max: f64,
}

/// Linear-interpolation percentile of sorted data, `q` in `[0, 1]`.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    let r = values.len();
    if r < 2 {
        return Err(Error::Config(format!("a summary needs at least 2 repetitions, got {r}")));
    }
    let mean = values.iter().sum::<f64>() / r as f64;
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Summary {
        repetitions: r,
        mean,
        variance,
        std_error: (variance / r as f64).sqrt(),
        p025: percentile(&sorted, 0.025),
        p975: percentile(&sorted, 0.975),
        min: sorted[0],
        max: sorted[r - 1],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantizerMode {
    /// Fresh pool and quantizer for every repetition.
    #[default]
    Refit,
    /// One pool and quantizer for all repetitions.
    Shared,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateSettings {
    pub scheme: Scheme,
    pub n: usize,
    pub repetitions: usize,
    pub base_seed: u64,
    pub sampling: SamplingSettings,
    pub mode: QuantizerMode,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Replication {
    pub scheme: Scheme,
    pub n: usize,
    pub mode: QuantizerMode,
    pub seeds: Vec<u64>,
    pub estimates: Vec<f64>,
    pub summary: Summary,
}

impl Replication {
    /// One `seed,estimate` row per repetition.
    pub fn write_csv<W: Write>(&self, w: &mut W, metadata: &[String]) -> Result<()> {
        csvio::write_metadata(w, metadata)?;
        writeln!(w, "scheme,n,seed,estimate")?;
        for (s, e) in self.seeds.iter().zip(&self.estimates) {
            writeln!(w, "{},{},{},{}", self.scheme, self.n, s, csvio::fmt_f64(*e))?;
        }
        Ok(())
    }
}

/// The generator for repetition seed `seed`.
pub fn repetition_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// The generator used to build the shared stage, on its own stream so it never
/// coincides with a repetition's generator.
pub fn shared_rng(base_seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(1);
    rng
}

/// Repetition `r` uses seed `base_seed + r`.
pub fn replicate<E: RowEvaluator + ?Sized>(inputs: &InputModel, f: &E, settings: &ReplicateSettings) -> Result<Replication> {
    if settings.repetitions < 2 {
        return Err(Error::Config(format!("repetitions must be at least 2, got {}", settings.repetitions)));
    }
    let seeds: Vec<u64> = (0..settings.repetitions as u64).map(|r| settings.base_seed.wrapping_add(r)).collect();
    let shared = match settings.mode {
        QuantizerMode::Refit => None,
        QuantizerMode::Shared => Some(inputs.prepare(
            settings.scheme,
            settings.n,
            &settings.sampling,
            &mut shared_rng(settings.base_seed),
        )?),
    };
    replicate_with_seeds(inputs, f, settings.scheme, settings.n, &settings.sampling, &seeds, shared.as_ref())
}

/// Runs one repetition per seed, in parallel, results in seed order. With
/// `shared` set, every repetition draws from that stage instead of refitting.
pub fn replicate_with_seeds<E: RowEvaluator + ?Sized>(
    inputs: &InputModel,
    f: &E,
    scheme: Scheme,
    n: usize,
    sampling: &SamplingSettings,
    seeds: &[u64],
    shared: Option<&Prepared>,
) -> Result<Replication> {
    if let Some(p) = shared {
        if p.scheme() != scheme || p.n() != n {
            return Err(Error::Config("shared stage was prepared for another scheme or size".into()));
        }
    }
    let estimates = seeds
        .par_iter()
        .map(|&seed| {
            let mut rng = repetition_rng(seed);
            let design = match shared {
                Some(p) => inputs.design_from(p, &mut rng)?,
                None => inputs.design(scheme, n, sampling, &mut rng)?,
            };
            Ok(estimate(&design.with_seed(seed), f)?.value)
        })
        .collect::<Result<Vec<f64>>>()?;
    let summary = summarize(&estimates)?;
    let mode = if shared.is_some() { QuantizerMode::Shared } else { QuantizerMode::Refit };
    Ok(Replication { scheme, n, mode, seeds: seeds.to_vec(), estimates, summary })
}

//! Least-squares calibration of the demand model from load-test samples, and
//! validation of a fitted model against held-out measurements.

use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{CalibrationSample, DemandModel, ModelCoefficients, ModelError, PairCoefficients};
use crate::domain::{resolve_tier, HardwareTier};

/// CPU regressors are (1, U, T, T·P).
pub const MIN_CPU_SAMPLES: usize = 4;
/// Memory regressors are (1, U, P).
pub const MIN_MEM_SAMPLES: usize = 3;

/// Singular values below this fraction of the largest (after column
/// normalization) count as rank deficiency.
const RANK_TOLERANCE: f64 = 1e-10;

/// Fits one coefficient set per (implementation, binding) pair found in
/// `samples`.
///
/// CPU measured on a non-reference tier is first converted to reference-tier
/// CPU. Each equation is solved by ordinary least squares; whenever a
/// coefficient comes out negative the most negative one is pinned to zero and
/// the rest refit, until all are non-negative.
///
/// `deploy_mem_mb` is the mean memory of zero-load samples (U = T = P = 0)
/// when any exist, otherwise the value carried by `prior` for the same pair,
/// otherwise the fitted memory intercept.
///
/// CPU samples from other tiers are rescaled to `reference` with the tier
/// factors carried by `prior`, falling back to the core-GHz ratio; those
/// factors are carried into the result.
pub fn fit_coefficients(
    samples: &[CalibrationSample],
    reference: &HardwareTier,
    tiers: &[HardwareTier],
    prior: Option<&ModelCoefficients>,
) -> Result<ModelCoefficients, ModelError> {
    let tier_factors = prior.map(|p| p.tier_factors.clone()).unwrap_or_default();
    let scaling = ModelCoefficients { tier_factors, ..ModelCoefficients::default() };
    let mut groups: IndexMap<(String, String), Vec<(f64, &CalibrationSample)>> = IndexMap::new();
    for (i, s) in samples.iter().enumerate() {
        let row = i + 1;
        if !s.is_valid() {
            return Err(ModelError::InvalidSample { row });
        }
        let tier = resolve_tier(&s.tier, tiers)
            .filter(HardwareTier::is_valid)
            .ok_or_else(|| ModelError::UnknownSampleTier { row, tier: s.tier.clone() })?;
        let factor = scaling.scale_factor(&tier, reference);
        groups.entry((s.implementation_type.clone(), s.binding_type.clone())).or_default().push((factor, s));
    }

    let mut pairs = Vec::with_capacity(groups.len());
    for ((implementation_type, binding_type), rows) in groups {
        let key = format!("{implementation_type}/{binding_type}");

        let cpu_design: Vec<Vec<f64>> = rows
            .iter()
            .map(|(_, s)| vec![1.0, s.concurrency, s.throughput, s.throughput * s.payload_total_kb])
            .collect();
        let cpu_target: Vec<f64> = rows.iter().map(|(factor, s)| s.measured_cpu_pct / factor).collect();
        let cpu = fit_equation(&key, "cpu", &cpu_design, &cpu_target, MIN_CPU_SAMPLES)?;

        let mem_design: Vec<Vec<f64>> =
            rows.iter().map(|(_, s)| vec![1.0, s.concurrency, s.payload_total_kb]).collect();
        let mem_target: Vec<f64> = rows.iter().map(|(_, s)| s.measured_mem_mb).collect();
        let mem = fit_equation(&key, "memory", &mem_design, &mem_target, MIN_MEM_SAMPLES)?;

        let idle: Vec<f64> = rows
            .iter()
            .filter(|(_, s)| s.concurrency == 0.0 && s.throughput == 0.0 && s.payload_total_kb == 0.0)
            .map(|(_, s)| s.measured_mem_mb)
            .collect();
        let deploy_mem_mb = if !idle.is_empty() {
            idle.iter().sum::<f64>() / idle.len() as f64
        } else {
            prior.and_then(|p| p.pair(&implementation_type, &binding_type)).map_or(mem[0], |p| p.deploy_mem_mb)
        };

        pairs.push(PairCoefficients {
            implementation_type,
            binding_type,
            c0_cpu_pct: cpu[0],
            c1_cpu_per_user: cpu[1],
            c2_cpu_per_rps: cpu[2],
            c3_cpu_per_rps_kb: cpu[3],
            m0_mem_mb: mem[0],
            m1_mem_per_user_mb: mem[1],
            m2_mem_per_kb_mb: mem[2],
            deploy_mem_mb,
        });
    }

    Ok(ModelCoefficients { reference_tier: reference.name.clone(), pairs, tier_factors: scaling.tier_factors })
}

fn fit_equation(
    pair: &str,
    kind: &'static str,
    design: &[Vec<f64>],
    target: &[f64],
    needed: usize,
) -> Result<Vec<f64>, ModelError> {
    if design.len() < needed {
        return Err(ModelError::InsufficientSamples { pair: pair.to_string(), kind, found: design.len(), needed });
    }
    let cols = design[0].len();
    let x = DMatrix::from_fn(design.len(), cols, |r, c| design[r][c]);
    let y = DVector::from_column_slice(target);
    let all: Vec<usize> = (0..cols).collect();
    if !full_column_rank(&x, &all) {
        return Err(ModelError::CollinearSamples { pair: pair.to_string(), kind });
    }

    let mut active = all;
    loop {
        let solution = least_squares(&x, &y, &active);
        let worst =
            solution.iter().enumerate().filter(|(_, v)| **v < 0.0).min_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i);
        match worst {
            None => {
                let mut coeffs = vec![0.0; cols];
                for (&col, v) in active.iter().zip(solution) {
                    coeffs[col] = v;
                }
                return Ok(coeffs);
            }
            Some(i) => {
                active.remove(i);
                if active.is_empty() {
                    return Ok(vec![0.0; cols]);
                }
            }
        }
    }
}

/// Columns of `x` restricted to `active`, each divided by its largest
/// magnitude. Returns the scaled matrix and the scale factors.
fn normalized_columns(x: &DMatrix<f64>, active: &[usize]) -> (DMatrix<f64>, Vec<f64>) {
    let scales: Vec<f64> = active.iter().map(|&c| x.column(c).iter().fold(0.0_f64, |m, v| m.max(v.abs()))).collect();
    let m =
        DMatrix::from_fn(
            x.nrows(),
            active.len(),
            |r, j| {
                if scales[j] > 0.0 {
                    x[(r, active[j])] / scales[j]
                } else {
                    0.0
                }
            },
        );
    (m, scales)
}

fn full_column_rank(x: &DMatrix<f64>, active: &[usize]) -> bool {
    let (m, scales) = normalized_columns(x, active);
    if scales.contains(&0.0) {
        return false;
    }
    let sv = m.singular_values();
    let max = sv.max();
    max > 0.0 && sv.iter().all(|s| *s > max * RANK_TOLERANCE)
}

fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>, active: &[usize]) -> Vec<f64> {
    let (m, scales) = normalized_columns(x, active);
    let svd = m.svd(true, true);
    let eps = svd.singular_values.max() * RANK_TOLERANCE;
    let beta = svd.solve(y, eps).expect("svd computed with both factors");
    beta.iter().zip(&scales).map(|(b, s)| b / s).collect()
}

/// Accuracy of a model on measurements it was not fitted to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub holdout_count: usize,
    pub cpu_rmse_pct: f64,
    pub mem_rmse_mb: f64,
    pub max_abs_cpu_err_pct: f64,
    pub tolerance_cpu_pct: f64,
    /// `max_abs_cpu_err_pct <= tolerance_cpu_pct`.
    pub pass: bool,
}

/// Compares predictions against `holdout`, each sample predicted on its own tier.
pub fn validate_extrapolation(
    model: &DemandModel,
    holdout: &[CalibrationSample],
    tolerance_cpu_pct: f64,
) -> Result<ValidationReport, ModelError> {
    if holdout.is_empty() {
        return Err(ModelError::EmptyHoldout);
    }
    let mut cpu_sq = 0.0;
    let mut mem_sq = 0.0;
    let mut max_abs: f64 = 0.0;
    for (i, s) in holdout.iter().enumerate() {
        let tier =
            model.tier(&s.tier).ok_or_else(|| ModelError::UnknownSampleTier { row: i + 1, tier: s.tier.clone() })?;
        let pair = model.coefficients().pair(&s.implementation_type, &s.binding_type).ok_or_else(|| {
            ModelError::UnknownPair {
                implementation_type: s.implementation_type.clone(),
                binding_type: s.binding_type.clone(),
            }
        })?;
        let cpu = pair.reference_cpu_pct(s.concurrency, s.throughput, s.payload_total_kb) * model.scale_factor(&tier);
        let mem = pair.memory_mb(s.concurrency, s.payload_total_kb);
        let cpu_err = cpu - s.measured_cpu_pct;
        let mem_err = mem - s.measured_mem_mb;
        cpu_sq += cpu_err * cpu_err;
        mem_sq += mem_err * mem_err;
        max_abs = max_abs.max(cpu_err.abs());
    }
    let n = holdout.len() as f64;
    Ok(ValidationReport {
        holdout_count: holdout.len(),
        cpu_rmse_pct: (cpu_sq / n).sqrt(),
        mem_rmse_mb: (mem_sq / n).sqrt(),
        max_abs_cpu_err_pct: max_abs,
        tolerance_cpu_pct,
        pass: max_abs <= tolerance_cpu_pct,
    })
}

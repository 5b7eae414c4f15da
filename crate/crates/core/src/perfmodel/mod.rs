//! Per-service resource demand model.
//!
//! CPU demand is affine in concurrency `U`, throughput `T` and the
//! throughput-payload product `T·P`; memory is affine in `U` and `P`:
//!
//! ```text
//! cpu_pct(ref) = c0 + c1·U + c2·T + c3·T·P
//! memory_mb    = m0 + m1·U + m2·P
//! ```
//!
//! CPU is expressed against a reference tier and rescaled to other tiers by
//! their ratio of core-GHz, unless the coefficient table carries a measured
//! factor for that tier. Memory does not depend on the tier.
//! Coefficients are non-negative, so demand never decreases with load.

mod fit;
mod samples;

pub use fit::{fit_coefficients, validate_extrapolation, ValidationReport, MIN_CPU_SAMPLES, MIN_MEM_SAMPLES};
pub use samples::{read_samples_csv, write_samples_csv, CalibrationSample, SAMPLES_CSV_HEADER};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::domain::{
    resolve_tier, HardwareTier, PackerConfig, PerformanceCurve, ResourceDemand, RuntimeProfile, ServiceSpec,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("no coefficients for implementation {implementation_type:?} with binding {binding_type:?}")]
    UnknownPair { implementation_type: String, binding_type: String },
    #[error("unknown tier {0:?}")]
    UnknownTier(String),
    #[error("tier {0:?} has nonpositive fields")]
    InvalidTier(String),
    #[error("coefficient {field} of pair {pair} must be finite and non-negative")]
    NegativeCoefficient { pair: String, field: &'static str },
    #[error("{pair}: need at least {needed} {kind} samples, found {found}")]
    InsufficientSamples { pair: String, kind: &'static str, found: usize, needed: usize },
    #[error("{pair}: {kind} samples are collinear")]
    CollinearSamples { pair: String, kind: &'static str },
    #[error("sample row {row} names unknown tier {tier:?}")]
    UnknownSampleTier { row: usize, tier: String },
    #[error("sample row {row}: measured values must be finite and non-negative")]
    InvalidSample { row: usize },
    #[error("tier factor for {0:?} must be finite and positive")]
    InvalidTierFactor(String),
    #[error("holdout set is empty")]
    EmptyHoldout,
    #[error("malformed samples csv: {0}")]
    Csv(String),
}

impl ModelError {
    /// Stable snake_case name of the error variant, used in API error bodies.
    pub fn kind(&self) -> &'static str {
        match self {
            ModelError::UnknownPair { .. } => "unknown_pair",
            ModelError::UnknownTier(_) => "unknown_tier",
            ModelError::InvalidTier(_) => "invalid_tier",
            ModelError::NegativeCoefficient { .. } => "negative_coefficient",
            ModelError::InsufficientSamples { .. } => "insufficient_samples",
            ModelError::CollinearSamples { .. } => "collinear_samples",
            ModelError::UnknownSampleTier { .. } => "unknown_sample_tier",
            ModelError::InvalidSample { .. } => "invalid_sample",
            ModelError::InvalidTierFactor(_) => "invalid_tier_factor",
            ModelError::EmptyHoldout => "empty_holdout",
            ModelError::Csv(_) => "malformed_csv",
        }
    }
}

/// Fitted demand equations for one (implementation, binding) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCoefficients {
    pub implementation_type: String,
    pub binding_type: String,
    pub c0_cpu_pct: f64,
    pub c1_cpu_per_user: f64,
    pub c2_cpu_per_rps: f64,
    pub c3_cpu_per_rps_kb: f64,
    pub m0_mem_mb: f64,
    pub m1_mem_per_user_mb: f64,
    pub m2_mem_per_kb_mb: f64,
    /// Static footprint of a deployed, idle service.
    pub deploy_mem_mb: f64,
}

impl PairCoefficients {
    pub fn key(&self) -> String {
        format!("{}/{}", self.implementation_type, self.binding_type)
    }

    pub fn cpu_terms(&self) -> [f64; 4] {
        [self.c0_cpu_pct, self.c1_cpu_per_user, self.c2_cpu_per_rps, self.c3_cpu_per_rps_kb]
    }

    pub fn mem_terms(&self) -> [f64; 3] {
        [self.m0_mem_mb, self.m1_mem_per_user_mb, self.m2_mem_per_kb_mb]
    }

    /// CPU% on the reference tier.
    pub fn reference_cpu_pct(&self, concurrency: f64, throughput: f64, payload_kb: f64) -> f64 {
        self.c0_cpu_pct
            + self.c1_cpu_per_user * concurrency
            + self.c2_cpu_per_rps * throughput
            + self.c3_cpu_per_rps_kb * throughput * payload_kb
    }

    pub fn memory_mb(&self, concurrency: f64, payload_kb: f64) -> f64 {
        self.m0_mem_mb + self.m1_mem_per_user_mb * concurrency + self.m2_mem_per_kb_mb * payload_kb
    }

    fn check(&self) -> Result<(), ModelError> {
        let fields = [
            ("c0_cpu_pct", self.c0_cpu_pct),
            ("c1_cpu_per_user", self.c1_cpu_per_user),
            ("c2_cpu_per_rps", self.c2_cpu_per_rps),
            ("c3_cpu_per_rps_kb", self.c3_cpu_per_rps_kb),
            ("m0_mem_mb", self.m0_mem_mb),
            ("m1_mem_per_user_mb", self.m1_mem_per_user_mb),
            ("m2_mem_per_kb_mb", self.m2_mem_per_kb_mb),
            ("deploy_mem_mb", self.deploy_mem_mb),
        ];
        match fields.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
            Some((field, _)) => Err(ModelError::NegativeCoefficient { pair: self.key(), field }),
            None => Ok(()),
        }
    }
}

/// A coefficient table: one entry per (implementation, binding) pair, all
/// expressed against `reference_tier`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCoefficients {
    pub reference_tier: String,
    pub pairs: Vec<PairCoefficients>,
    /// Measured CPU ratios (reference to tier) that replace the derived
    /// core-GHz ratio for the named tiers.
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub tier_factors: IndexMap<String, f64>,
}

impl Default for ModelCoefficients {
    /// The shipped table: java/soap_http on the performance-lab tier.
    ///
    /// At 100 users, 100 req/s and 64 KB payload one service costs 6.5% of a
    /// perflab machine, so twelve fit under an 80% cap and thirteen do not.
    fn default() -> Self {
        Self {
            reference_tier: "perflab".to_string(),
            pairs: vec![PairCoefficients {
                implementation_type: "java".to_string(),
                binding_type: "soap_http".to_string(),
                c0_cpu_pct: 2.5,
                c1_cpu_per_user: 0.02,
                c2_cpu_per_rps: 0.01,
                c3_cpu_per_rps_kb: 1.5625e-4,
                m0_mem_mb: 256.0,
                m1_mem_per_user_mb: 0.5,
                m2_mem_per_kb_mb: 0.25,
                deploy_mem_mb: 192.0,
            }],
            tier_factors: IndexMap::new(),
        }
    }
}

impl ModelCoefficients {
    pub fn pair(&self, implementation_type: &str, binding_type: &str) -> Option<&PairCoefficients> {
        self.pairs.iter().find(|p| p.implementation_type == implementation_type && p.binding_type == binding_type)
    }

    fn pair_for(&self, service: &ServiceSpec) -> Result<&PairCoefficients, ModelError> {
        self.pair(&service.implementation_type, &service.binding_type).ok_or_else(|| ModelError::UnknownPair {
            implementation_type: service.implementation_type.clone(),
            binding_type: service.binding_type.clone(),
        })
    }

    /// Rejects negative or non-finite coefficients and nonpositive tier factors.
    pub fn check(&self) -> Result<(), ModelError> {
        self.pairs.iter().try_for_each(PairCoefficients::check)?;
        match self.tier_factors.iter().find(|(_, f)| !(f.is_finite() && **f > 0.0)) {
            Some((tier, _)) => Err(ModelError::InvalidTierFactor(tier.clone())),
            None => Ok(()),
        }
    }

    /// CPU ratio from `reference` to `tier`: the measured factor when one is
    /// recorded, else [`tier_scale_factor`].
    pub fn scale_factor(&self, tier: &HardwareTier, reference: &HardwareTier) -> f64 {
        self.tier_factors.get(&tier.name).copied().unwrap_or_else(|| tier_scale_factor(tier, reference))
    }
}

/// Ratio converting CPU% on `reference` into CPU% on `tier`.
///
/// Equals `reference.capacity_units / tier.capacity_units`. Core counts and
/// frequencies are divided separately so that tiers sharing a clock give
/// exact ratios (3.0 for medium against perflab, 1.5 for large).
pub fn tier_scale_factor(tier: &HardwareTier, reference: &HardwareTier) -> f64 {
    let cores = reference.total_cores() as f64 / tier.total_cores() as f64;
    let clock = reference.frequency_ghz / tier.frequency_ghz;
    cores * clock
}

/// Coefficients bound to their resolved reference tier and the tiers samples
/// and estimates may name.
#[derive(Debug, Clone)]
pub struct DemandModel {
    coeffs: ModelCoefficients,
    reference: HardwareTier,
    tiers: Vec<HardwareTier>,
}

impl DemandModel {
    /// Resolves the reference tier among `tiers` or the standard tiers.
    pub fn new(coeffs: ModelCoefficients, tiers: &[HardwareTier]) -> Result<Self, ModelError> {
        coeffs.check()?;
        let reference = resolve_tier(&coeffs.reference_tier, tiers)
            .ok_or_else(|| ModelError::UnknownTier(coeffs.reference_tier.clone()))?;
        if !reference.is_valid() {
            return Err(ModelError::InvalidTier(reference.name));
        }
        Ok(Self { coeffs, reference, tiers: tiers.to_vec() })
    }

    pub fn coefficients(&self) -> &ModelCoefficients {
        &self.coeffs
    }

    pub fn reference(&self) -> &HardwareTier {
        &self.reference
    }

    pub fn tier(&self, name: &str) -> Option<HardwareTier> {
        resolve_tier(name, &self.tiers)
    }

    /// CPU ratio from the reference tier to `tier`.
    pub fn scale_factor(&self, tier: &HardwareTier) -> f64 {
        self.coeffs.scale_factor(tier, &self.reference)
    }

    /// Load-dependent demand of `service` under `profile` on one `tier` machine.
    pub fn estimate_demand(
        &self,
        service: &ServiceSpec,
        profile: &RuntimeProfile,
        tier: &HardwareTier,
    ) -> Result<ResourceDemand, ModelError> {
        let pair = self.coeffs.pair_for(service)?;
        let users = f64::from(profile.concurrency);
        let payload = profile.payload_total_kb();
        let cpu = pair.reference_cpu_pct(users, profile.throughput, payload);
        Ok(ResourceDemand {
            cpu_pct: cpu * self.scale_factor(tier),
            memory_mb: pair.memory_mb(users, payload),
            tier: tier.name.clone(),
        })
    }

    /// Static footprint of deploying `service`, with no load.
    pub fn deployment_demand(&self, service: &ServiceSpec) -> Result<ResourceDemand, ModelError> {
        let pair = self.coeffs.pair_for(service)?;
        Ok(ResourceDemand { cpu_pct: 0.0, memory_mb: pair.deploy_mem_mb, tier: self.reference.name.clone() })
    }

    /// Predicted CPU of one `tier` machine hosting 1..=`max_services` copies
    /// of `template` under `profile`.
    pub fn performance_curve(
        &self,
        profile: &RuntimeProfile,
        template: &ServiceSpec,
        tier: &HardwareTier,
        packer: &PackerConfig,
        max_services: usize,
    ) -> Result<PerformanceCurve, ModelError> {
        let demand = self.estimate_demand(template, profile, tier)?;
        Ok(curve_for_demand(&tier.name, demand.cpu_pct, packer.cpu_cap_pct, max_services))
    }
}

/// Builds the curve `n × per_service_cpu` for n in 1..=max_services.
pub fn curve_for_demand(tier: &str, per_service_cpu: f64, cpu_cap_pct: f64, max_services: usize) -> PerformanceCurve {
    let points: Vec<(usize, f64)> = (1..=max_services).map(|n| (n, n as f64 * per_service_cpu)).collect();
    let degradation_threshold = points.iter().take_while(|(_, cpu)| *cpu < cpu_cap_pct).count();
    PerformanceCurve { tier: tier.to_string(), points, degradation_threshold }
}

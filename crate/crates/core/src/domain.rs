//! Shared vocabulary: machine tiers, services and their workloads, resource
//! demands, packing topology, sizing requests and results.
//!
//! Every type here serializes to a canonical JSON form with snake_case field
//! names. That form is used for request files, HTTP bodies and golden tests.

use std::collections::HashSet;
use std::fmt;

use chrono::{DateTime, Utc};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::perfmodel::ModelCoefficients;

/// Longest accepted identifier, in characters.
pub const MAX_IDENTIFIER_LEN: usize = 64;

/// Implementation types a service may declare out of the box.
pub const DEFAULT_IMPLEMENTATION_TYPES: [&str; 3] = ["java", "mediation", "webapp"];

/// Binding types a service may declare out of the box.
pub const DEFAULT_BINDING_TYPES: [&str; 3] = ["soap_http", "jms", "rest"];

/// A standard machine class.
///
/// `cores_per_processor` counts physical cores on one socket, so the
/// performance-lab tier (2 × 12) is a 24 core machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareTier {
    pub name: String,
    pub processors: u32,
    pub cores_per_processor: u32,
    pub frequency_ghz: f64,
    pub ram_gb: f64,
}

impl HardwareTier {
    pub fn new(
        name: impl Into<String>,
        processors: u32,
        cores_per_processor: u32,
        frequency_ghz: f64,
        ram_gb: f64,
    ) -> Self {
        Self { name: name.into(), processors, cores_per_processor, frequency_ghz, ram_gb }
    }

    /// The medium production system: 2 × 4 cores at 3.07 GHz, 32 GB.
    pub fn medium() -> Self {
        Self::new("medium", 2, 4, 3.07, 32.0)
    }

    /// The large production system: 2 × 8 cores at 3.07 GHz, 64 GB.
    pub fn large() -> Self {
        Self::new("large", 2, 8, 3.07, 64.0)
    }

    /// The performance-lab system all measurements are taken on: 2 × 12 cores
    /// at 3.07 GHz, 64 GB.
    pub fn perflab() -> Self {
        Self::new("perflab", 2, 12, 3.07, 64.0)
    }

    /// The three standard tiers, smallest first.
    pub fn standard() -> Vec<Self> {
        vec![Self::medium(), Self::large(), Self::perflab()]
    }

    pub fn total_cores(&self) -> u64 {
        u64::from(self.processors) * u64::from(self.cores_per_processor)
    }

    /// Compute capacity in core-GHz.
    pub fn capacity_units(&self) -> f64 {
        self.total_cores() as f64 * self.frequency_ghz
    }

    /// Memory a machine of this tier may commit to services and nodes.
    pub fn memory_cap_mb(&self, mem_cap_fraction: f64) -> f64 {
        mem_cap_fraction * self.ram_gb * 1024.0
    }

    /// Lists every invalid field; empty when the tier is usable.
    pub fn violations(&self) -> Vec<ValidationError> {
        let mut out = Vec::new();
        if let Err(e) = check_identifier(&self.name) {
            out.push(ValidationError::InvalidIdentifier(e));
        }
        let mut bad = |field: &str, ok: bool| {
            if !ok {
                out.push(ValidationError::InvalidTier(FieldRef::new(&self.name, field)));
            }
        };
        bad("processors", self.processors > 0);
        bad("cores_per_processor", self.cores_per_processor > 0);
        bad("frequency_ghz", self.frequency_ghz.is_finite() && self.frequency_ghz > 0.0);
        bad("ram_gb", self.ram_gb.is_finite() && self.ram_gb > 0.0);
        out
    }

    pub fn is_valid(&self) -> bool {
        self.violations().is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkloadType {
    #[default]
    Steady,
    Burst,
}

/// Runtime workload of one service.
///
/// `workload_type` is carried through to results but does not influence the
/// default demand model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeProfile {
    #[serde(default)]
    pub workload_type: WorkloadType,
    /// Concurrent users.
    pub concurrency: u32,
    /// Requests per second.
    pub throughput: f64,
    pub payload_request_kb: f64,
    pub payload_response_kb: f64,
}

impl RuntimeProfile {
    pub fn new(concurrency: u32, throughput: f64, payload_request_kb: f64, payload_response_kb: f64) -> Self {
        Self { workload_type: WorkloadType::Steady, concurrency, throughput, payload_request_kb, payload_response_kb }
    }

    /// 100 users, 100 req/s, 64 KB total payload split evenly.
    pub fn reference() -> Self {
        Self::new(100, 100.0, 32.0, 32.0)
    }

    pub fn payload_total_kb(&self) -> f64 {
        self.payload_request_kb + self.payload_response_kb
    }

    /// Names of the fields that are negative or not finite.
    pub fn invalid_fields(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        for (name, v) in [
            ("throughput", self.throughput),
            ("payload_request_kb", self.payload_request_kb),
            ("payload_response_kb", self.payload_response_kb),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                out.push(name);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceSpec {
    pub id: String,
    pub implementation_type: String,
    pub binding_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<RuntimeProfile>,
}

impl ServiceSpec {
    pub fn new(id: impl Into<String>, implementation_type: impl Into<String>, binding_type: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            implementation_type: implementation_type.into(),
            binding_type: binding_type.into(),
            profile: None,
        }
    }

    pub fn with_profile(mut self, profile: RuntimeProfile) -> Self {
        self.profile = Some(profile);
        self
    }
}

/// Resources one service needs, with CPU expressed as a percentage of one
/// machine of `tier`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceDemand {
    pub cpu_pct: f64,
    pub memory_mb: f64,
    pub tier: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PackerConfig {
    /// Per-machine CPU cap W. Machine totals stay strictly below it.
    pub cpu_cap_pct: f64,
    pub mem_cap_fraction: f64,
    pub max_nodes_per_host: u32,
    pub services_per_node_cap: u32,
    pub node_overhead_mb: f64,
}

impl Default for PackerConfig {
    fn default() -> Self {
        Self {
            cpu_cap_pct: 80.0,
            mem_cap_fraction: 0.75,
            max_nodes_per_host: 5,
            services_per_node_cap: 4,
            node_overhead_mb: 512.0,
        }
    }
}

impl PackerConfig {
    pub fn with_cpu_cap(mut self, cpu_cap_pct: f64) -> Self {
        self.cpu_cap_pct = cpu_cap_pct;
        self
    }

    pub fn violations(&self) -> Vec<ValidationError> {
        let mut out = Vec::new();
        let mut bad = |field: &str, ok: bool| {
            if !ok {
                out.push(ValidationError::InvalidPacker(field.to_string()));
            }
        };
        bad("cpu_cap_pct", self.cpu_cap_pct > 0.0 && self.cpu_cap_pct <= 100.0);
        bad("mem_cap_fraction", self.mem_cap_fraction > 0.0 && self.mem_cap_fraction <= 1.0);
        bad("max_nodes_per_host", self.max_nodes_per_host > 0);
        bad("services_per_node_cap", self.services_per_node_cap > 0);
        bad("node_overhead_mb", self.node_overhead_mb.is_finite() && self.node_overhead_mb >= 0.0);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub service_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Host {
    pub id: String,
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachinePlan {
    /// 1-based position within the topology.
    pub index: usize,
    pub tier: String,
    pub hosts: Vec<Host>,
    pub total_cpu_pct: f64,
    /// Service memory plus per-node overhead.
    pub total_memory_mb: f64,
}

impl MachinePlan {
    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.hosts.iter().flat_map(|h| h.nodes.iter())
    }

    pub fn service_ids(&self) -> impl Iterator<Item = &str> {
        self.nodes().flat_map(|n| n.service_ids.iter().map(String::as_str))
    }

    pub fn service_count(&self) -> usize {
        self.nodes().map(|n| n.service_ids.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub tier: String,
    pub machines: Vec<MachinePlan>,
}

impl Topology {
    pub fn empty(tier: impl Into<String>) -> Self {
        Self { tier: tier.into(), machines: Vec::new() }
    }

    pub fn service_ids(&self) -> impl Iterator<Item = &str> {
        self.machines.iter().flat_map(MachinePlan::service_ids)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Single,
    #[default]
    Distributed,
}

/// Which inputs drive sizing: static deployment footprints only, or
/// footprints plus load-dependent demand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizingLevel {
    Deployment,
    #[default]
    Runtime,
}

/// Where a request gets its demand model from: a stored profile name, or an
/// inline coefficient set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoefficientsRef {
    Named(String),
    Inline(ModelCoefficients),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecommendThresholds {
    /// Suggest a larger tier once a tier needs more machines than this.
    pub machine_count: usize,
    /// Fraction of W at which a machine is reported as close to degrading.
    pub near_degradation_fraction: f64,
}

impl Default for RecommendThresholds {
    fn default() -> Self {
        Self { machine_count: 10, near_degradation_fraction: 0.9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizingRequest {
    pub services: Vec<ServiceSpec>,
    #[serde(default)]
    pub architecture: Architecture,
    #[serde(default)]
    pub level: SizingLevel,
    /// Empty means the standard tiers.
    #[serde(default)]
    pub tiers: Vec<HardwareTier>,
    #[serde(default)]
    pub packer: PackerConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<CoefficientsRef>,
    /// Applied to services that carry no profile of their own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_profile: Option<RuntimeProfile>,
    #[serde(default)]
    pub thresholds: RecommendThresholds,
}

impl SizingRequest {
    pub fn new(services: Vec<ServiceSpec>) -> Self {
        Self {
            services,
            architecture: Architecture::default(),
            level: SizingLevel::default(),
            tiers: Vec::new(),
            packer: PackerConfig::default(),
            coefficients: None,
            default_profile: None,
            thresholds: RecommendThresholds::default(),
        }
    }

    /// `count` java/soap_http services named `svc1..svcN` sharing one profile.
    pub fn homogeneous(count: usize, profile: RuntimeProfile) -> Self {
        let services = (1..=count)
            .map(|i| ServiceSpec::new(format!("svc{i}"), "java", "soap_http").with_profile(profile.clone()))
            .collect();
        Self::new(services)
    }

    pub fn tier(&self, name: &str) -> Option<&HardwareTier> {
        self.tiers.iter().find(|t| t.name == name)
    }
}

/// One problem found while validating a request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(rename_all = "snake_case")]
pub enum ValidationError {
    #[error("duplicate service id {0:?}")]
    DuplicateId(String),
    #[error("duplicate tier name {0:?}")]
    DuplicateTier(String),
    #[error("{0}")]
    InvalidIdentifier(String),
    #[error("service {0:?} has an unknown implementation/binding pair")]
    UnknownPair(String),
    #[error("service {0:?} has no runtime profile and no default profile is declared")]
    MissingProfile(String),
    #[error("invalid profile field {}", .0)]
    InvalidProfile(FieldRef),
    #[error("invalid tier field {}", .0)]
    InvalidTier(FieldRef),
    #[error("invalid packer field {0:?}")]
    InvalidPacker(String),
    #[error("invalid threshold field {0:?}")]
    InvalidThreshold(String),
    #[error("unknown coefficient profile {0:?}")]
    UnknownCoefficients(String),
    #[error("coefficient reference tier {0:?} is not a known tier")]
    UnknownReferenceTier(String),
}

/// Names a field of a particular owner, e.g. tier `medium` field `ram_gb`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldRef {
    pub owner: String,
    pub field: String,
}

impl FieldRef {
    pub fn new(owner: &str, field: &str) -> Self {
        Self { owner: owner.to_string(), field: field.to_string() }
    }
}

impl fmt::Display for FieldRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.owner, self.field)
    }
}

/// Identifiers are case-sensitive, non-empty and at most 64 characters.
pub fn check_identifier(id: &str) -> Result<(), String> {
    if id.is_empty() {
        return Err("identifier must not be empty".to_string());
    }
    if id.chars().count() > MAX_IDENTIFIER_LEN {
        return Err(format!("identifier {id:?} exceeds {MAX_IDENTIFIER_LEN} characters"));
    }
    Ok(())
}

/// Checks a request and fills its defaults.
///
/// An empty tier list becomes `default_tiers` (the standard tiers when that is
/// empty too), and services without a profile inherit `default_profile`. All
/// violations are collected rather than stopping at the first. Validating an
/// already validated request returns it unchanged.
pub fn validate_request(
    request: &SizingRequest,
    coeffs: &ModelCoefficients,
    default_tiers: &[HardwareTier],
) -> Result<SizingRequest, Vec<ValidationError>> {
    let mut errors = Vec::new();
    let mut out = request.clone();

    if out.tiers.is_empty() {
        out.tiers = if default_tiers.is_empty() { HardwareTier::standard() } else { default_tiers.to_vec() };
    }
    let mut tier_names = HashSet::new();
    for tier in &out.tiers {
        errors.extend(tier.violations());
        if !tier_names.insert(tier.name.as_str()) {
            errors.push(ValidationError::DuplicateTier(tier.name.clone()));
        }
    }
    if resolve_tier(&coeffs.reference_tier, &out.tiers).is_none() {
        errors.push(ValidationError::UnknownReferenceTier(coeffs.reference_tier.clone()));
    }

    errors.extend(out.packer.violations());
    let fraction = out.thresholds.near_degradation_fraction;
    if !(fraction > 0.0 && fraction <= 1.0) {
        errors.push(ValidationError::InvalidThreshold("near_degradation_fraction".to_string()));
    }

    if let Some(profile) = &out.default_profile {
        for field in profile.invalid_fields() {
            errors.push(ValidationError::InvalidProfile(FieldRef::new("default_profile", field)));
        }
    }

    let mut ids = HashSet::new();
    let mut reported = HashSet::new();
    for service in &mut out.services {
        if let Err(e) = check_identifier(&service.id) {
            errors.push(ValidationError::InvalidIdentifier(e));
        }
        if !ids.insert(service.id.clone()) && reported.insert(service.id.clone()) {
            errors.push(ValidationError::DuplicateId(service.id.clone()));
        }
        if coeffs.pair(&service.implementation_type, &service.binding_type).is_none() {
            errors.push(ValidationError::UnknownPair(service.id.clone()));
        }
        if service.profile.is_none() {
            service.profile = request.default_profile.clone();
        }
        match &service.profile {
            Some(profile) => {
                for field in profile.invalid_fields() {
                    errors.push(ValidationError::InvalidProfile(FieldRef::new(&service.id, field)));
                }
            }
            None if out.level == SizingLevel::Runtime => {
                errors.push(ValidationError::MissingProfile(service.id.clone()));
            }
            None => {}
        }
    }

    if errors.is_empty() {
        Ok(out)
    } else {
        Err(errors)
    }
}

/// Looks a tier up among `tiers`, falling back to the standard tiers.
pub fn resolve_tier(name: &str, tiers: &[HardwareTier]) -> Option<HardwareTier> {
    tiers
        .iter()
        .find(|t| t.name == name)
        .cloned()
        .or_else(|| HardwareTier::standard().into_iter().find(|t| t.name == name))
}

/// Why a tier produced no topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TierFailure {
    #[error("service {service_id} needs {cpu_pct:.1}% cpu and {memory_mb:.1} MB, more than an empty machine offers")]
    OversizedService { service_id: String, cpu_pct: f64, memory_mb: f64 },
    #[error("all services need {total_cpu_pct:.1}% cpu and {total_memory_mb:.1} MB on one machine; use a distributed architecture")]
    SingleMachineInfeasible { total_cpu_pct: f64, total_memory_mb: f64 },
    #[error("demand estimation failed: {message}")]
    Estimation { message: String },
}

/// Structured advice attached to a sizing result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Recommendation {
    SwitchTier { from: String, to: String, machine_count: usize, threshold: usize },
    SwitchArchitecture { tier: String, from: Architecture, to: Architecture },
    NearDegradation { tier: String, machine_index: usize, total_cpu_pct: f64, cpu_cap_pct: f64 },
    Infeasible { tier: String, failure: TierFailure },
}

impl fmt::Display for Recommendation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Recommendation::SwitchTier { from, to, machine_count, threshold } => {
                write!(f, "switch tier {from} -> {to}: {from} needs {machine_count} machines (threshold {threshold})")
            }
            Recommendation::SwitchArchitecture { tier, from, to } => {
                write!(f, "switch architecture on {tier}: {from:?} -> {to:?}")
            }
            Recommendation::NearDegradation { tier, machine_index, total_cpu_pct, cpu_cap_pct } => write!(
                f,
                "near degradation on {tier} machine {machine_index}: {total_cpu_pct:.1}% of {cpu_cap_pct:.1}% cap"
            ),
            Recommendation::Infeasible { tier, failure } => write!(f, "tier {tier} infeasible: {failure}"),
        }
    }
}

/// Predicted CPU of one machine against the number of identical services on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceCurve {
    pub tier: String,
    /// `(service_count, predicted_cpu_pct)` for counts 1..=max.
    pub points: Vec<(usize, f64)>,
    /// Largest service count whose prediction stays below W; 0 if none does.
    pub degradation_threshold: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizingResult {
    pub run_id: String,
    pub created_at: DateTime<Utc>,
    pub request_echo: SizingRequest,
    pub per_tier: IndexMap<String, Topology>,
    /// Tiers that produced no topology, and why.
    #[serde(default)]
    pub failures: IndexMap<String, TierFailure>,
    pub curves: IndexMap<String, PerformanceCurve>,
    pub recommendations: Vec<Recommendation>,
    #[serde(default)]
    pub traces: IndexMap<String, crate::packer::PackingTrace>,
}

impl SizingResult {
    /// True when at least one tier produced a topology.
    pub fn any_feasible(&self) -> bool {
        !self.per_tier.is_empty()
    }
}

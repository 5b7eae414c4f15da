//! End-to-end sizing of a request across every requested tier.

use chrono::{DateTime, Utc};
use indexmap::IndexMap;

use crate::domain::{
    validate_request, Architecture, HardwareTier, Recommendation, ResourceDemand, ServiceSpec, SizingLevel,
    SizingRequest, SizingResult, TierFailure, Topology, ValidationError,
};
use crate::packer::{pack, PackError};
use crate::perfmodel::{curve_for_demand, DemandModel, ModelCoefficients, ModelError};

/// Fewest points a result curve carries.
pub const MIN_CURVE_POINTS: usize = 20;
/// Most points a result curve carries.
pub const MAX_CURVE_POINTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SizingError {
    #[error("invalid request: {}", join(.0))]
    Invalid(Vec<ValidationError>),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn join(errors: &[ValidationError]) -> String {
    errors.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("no tier produced a feasible plan")]
    NoFeasibleTier,
}

/// Identity of one sizing run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunStamp {
    pub run_id: String,
    pub created_at: DateTime<Utc>,
}

impl RunStamp {
    pub fn new(run_id: impl Into<String>, created_at: DateTime<Utc>) -> Self {
        Self { run_id: run_id.into(), created_at }
    }
}

struct TierOutcome {
    topology: Result<(Topology, crate::packer::PackingTrace), TierFailure>,
    mean_cpu: Option<f64>,
}

/// Sizes `request` on every tier it names.
///
/// Deployment level packs static footprints only (no CPU). Runtime level
/// packs load-dependent CPU and memory, plus the static footprint on top of
/// memory. A single architecture must fit on one machine or the tier is
/// reported infeasible. One tier failing never suppresses the others.
pub fn size(request: &SizingRequest, coeffs: &ModelCoefficients, stamp: RunStamp) -> Result<SizingResult, SizingError> {
    let request = validate_request(request, coeffs, &[]).map_err(SizingError::Invalid)?;
    let model = DemandModel::new(coeffs.clone(), &request.tiers)?;

    let mut result = SizingResult {
        run_id: stamp.run_id,
        created_at: stamp.created_at,
        request_echo: request.clone(),
        per_tier: IndexMap::new(),
        failures: IndexMap::new(),
        curves: IndexMap::new(),
        recommendations: Vec::new(),
        traces: IndexMap::new(),
    };

    for tier in &request.tiers {
        let outcome = size_tier(&request, &model, tier);
        if let Some(mean) = outcome.mean_cpu {
            let points = curve_points(mean, request.packer.cpu_cap_pct, request.services.len());
            result
                .curves
                .insert(tier.name.clone(), curve_for_demand(&tier.name, mean, request.packer.cpu_cap_pct, points));
        }
        match outcome.topology {
            Ok((topology, trace)) => {
                result.per_tier.insert(tier.name.clone(), topology);
                result.traces.insert(tier.name.clone(), trace);
            }
            Err(failure) => {
                result.failures.insert(tier.name.clone(), failure);
            }
        }
    }

    result.recommendations = recommend(&result);
    Ok(result)
}

fn size_tier(request: &SizingRequest, model: &DemandModel, tier: &HardwareTier) -> TierOutcome {
    let demands = match tier_demands(request, model, tier) {
        Ok(d) => d,
        Err(e) => {
            return TierOutcome { topology: Err(TierFailure::Estimation { message: e.to_string() }), mean_cpu: None }
        }
    };
    let mean_cpu = if demands.is_empty() {
        None
    } else {
        Some(demands.iter().map(|(_, d)| d.cpu_pct).sum::<f64>() / demands.len() as f64)
    };

    let packed = pack(&demands, tier, &request.packer).map_err(|e| match e {
        PackError::OversizedService { service_id, cpu_pct, memory_mb } => {
            TierFailure::OversizedService { service_id, cpu_pct, memory_mb }
        }
        other => TierFailure::Estimation { message: other.to_string() },
    });

    let topology = match (request.architecture, packed) {
        (Architecture::Single, Ok((topology, _))) if topology.machines.len() > 1 => {
            let total_cpu_pct = demands.iter().map(|(_, d)| d.cpu_pct).sum();
            let nodes = demands.len().div_ceil(request.packer.services_per_node_cap as usize);
            let total_memory_mb =
                demands.iter().map(|(_, d)| d.memory_mb).sum::<f64>() + nodes as f64 * request.packer.node_overhead_mb;
            Err(TierFailure::SingleMachineInfeasible { total_cpu_pct, total_memory_mb })
        }
        (_, packed) => packed,
    };
    TierOutcome { topology, mean_cpu }
}

fn tier_demands(
    request: &SizingRequest,
    model: &DemandModel,
    tier: &HardwareTier,
) -> Result<Vec<(ServiceSpec, ResourceDemand)>, ModelError> {
    request
        .services
        .iter()
        .map(|service| {
            let deploy = model.deployment_demand(service)?;
            let demand = match (request.level, &service.profile) {
                (SizingLevel::Runtime, Some(profile)) => {
                    let mut d = model.estimate_demand(service, profile, tier)?;
                    d.memory_mb += deploy.memory_mb;
                    d
                }
                _ => ResourceDemand {
                    cpu_pct: deploy.cpu_pct * model.scale_factor(tier),
                    memory_mb: deploy.memory_mb,
                    tier: tier.name.clone(),
                },
            };
            Ok((service.clone(), demand))
        })
        .collect()
}

/// Curve length: long enough to show the knee well past the threshold.
fn curve_points(per_service_cpu: f64, cpu_cap_pct: f64, services: usize) -> usize {
    let knee = if per_service_cpu > 0.0 {
        let k = (cpu_cap_pct / per_service_cpu).ceil();
        if k.is_finite() && k < MAX_CURVE_POINTS as f64 {
            2 * k as usize
        } else {
            MAX_CURVE_POINTS
        }
    } else {
        0
    };
    MIN_CURVE_POINTS.max(services).max(knee).min(MAX_CURVE_POINTS)
}

/// Advice for a sized result, in request tier order.
///
/// Per tier: an architecture switch when one machine cannot hold everything,
/// an infeasibility notice for any other failure, a switch to the next larger
/// requested tier when the machine count exceeds the threshold, and a
/// near-degradation warning for each machine at or above the configured
/// fraction of W.
pub fn recommend(result: &SizingResult) -> Vec<Recommendation> {
    let request = &result.request_echo;
    let cap = request.packer.cpu_cap_pct;
    let mut out = Vec::new();
    for tier in &request.tiers {
        if let Some(failure) = result.failures.get(&tier.name) {
            out.push(match failure {
                TierFailure::SingleMachineInfeasible { .. } => Recommendation::SwitchArchitecture {
                    tier: tier.name.clone(),
                    from: Architecture::Single,
                    to: Architecture::Distributed,
                },
                other => Recommendation::Infeasible { tier: tier.name.clone(), failure: other.clone() },
            });
        }
        let Some(topology) = result.per_tier.get(&tier.name) else { continue };

        let count = topology.machines.len();
        if count > request.thresholds.machine_count {
            let next = request
                .tiers
                .iter()
                .filter(|t| t.capacity_units() > tier.capacity_units())
                .min_by(|a, b| a.capacity_units().total_cmp(&b.capacity_units()));
            if let Some(next) = next {
                out.push(Recommendation::SwitchTier {
                    from: tier.name.clone(),
                    to: next.name.clone(),
                    machine_count: count,
                    threshold: request.thresholds.machine_count,
                });
            }
        }

        let warn_at = request.thresholds.near_degradation_fraction * cap;
        for machine in &topology.machines {
            if machine.total_cpu_pct >= warn_at {
                out.push(Recommendation::NearDegradation {
                    tier: tier.name.clone(),
                    machine_index: machine.index,
                    total_cpu_pct: machine.total_cpu_pct,
                    cpu_cap_pct: cap,
                });
            }
        }
    }
    out
}

/// Compute capacity a tier plan occupies: machines × core count × clock.
pub fn deployed_capacity_units(tier: &HardwareTier, machines: usize) -> f64 {
    (machines as u64 * tier.total_cores()) as f64 * tier.frequency_ghz
}

/// Feasible tiers, cheapest first by deployed capacity, then by fewer
/// machines, then by request order.
pub fn compare_tiers(result: &SizingResult) -> Result<Vec<String>, EngineError> {
    let mut ranked: Vec<(&HardwareTier, usize, f64)> = result
        .request_echo
        .tiers
        .iter()
        .filter_map(|tier| {
            let machines = result.per_tier.get(&tier.name)?.machines.len();
            Some((tier, machines, deployed_capacity_units(tier, machines)))
        })
        .collect();
    if ranked.is_empty() {
        return Err(EngineError::NoFeasibleTier);
    }
    ranked.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.1.cmp(&b.1)));
    Ok(ranked.into_iter().map(|(t, _, _)| t.name.clone()).collect())
}

#[cfg(test)]
mod tests {
    use chrono::TimeZone;

    use super::*;
    use crate::domain::RuntimeProfile;

    fn stamp() -> RunStamp {
        RunStamp::new("test", Utc.timestamp_opt(0, 0).unwrap())
    }

    fn run(req: &SizingRequest) -> SizingResult {
        size(req, &ModelCoefficients::default(), stamp()).unwrap()
    }

    fn counts(t: &Topology) -> Vec<usize> {
        t.machines.iter().map(|m| m.service_count()).collect()
    }

    #[test]
    fn ten_services_on_standard_tiers() {
        let r = run(&SizingRequest::homogeneous(10, RuntimeProfile::reference()));
        assert_eq!(counts(&r.per_tier["medium"]), vec![4, 4, 2]);
        assert_eq!(counts(&r.per_tier["large"]), vec![8, 2]);
        assert_eq!(counts(&r.per_tier["perflab"]), vec![10]);
        assert_eq!(r.per_tier["large"].machines[0].total_cpu_pct, 78.0);
        assert_eq!(r.per_tier["large"].machines[1].total_cpu_pct, 19.5);
        assert!(r.failures.is_empty());
        assert_eq!(compare_tiers(&r).unwrap(), vec!["perflab", "medium", "large"]);

        // No tier or architecture switch is needed; the 78% machines are flagged.
        assert!(r.recommendations.iter().all(|x| matches!(x, Recommendation::NearDegradation { .. })));
        let flagged: Vec<_> = r
            .recommendations
            .iter()
            .map(|x| match x {
                Recommendation::NearDegradation { tier, machine_index, .. } => (tier.as_str(), *machine_index),
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(flagged, vec![("medium", 1), ("medium", 2), ("large", 1)]);
    }

    #[test]
    fn units_tie_between_medium_and_perflab() {
        let medium = deployed_capacity_units(&HardwareTier::medium(), 3);
        let perflab = deployed_capacity_units(&HardwareTier::perflab(), 1);
        assert_eq!(medium, perflab);
        assert!((medium - 73.68).abs() < 1e-9);
        assert!((deployed_capacity_units(&HardwareTier::large(), 2) - 98.24).abs() < 1e-9);
    }

    #[test]
    fn no_services_means_empty_plans() {
        let r = run(&SizingRequest::homogeneous(0, RuntimeProfile::reference()));
        assert_eq!(r.per_tier.len(), 3);
        assert!(r.per_tier.values().all(|t| t.machines.is_empty()));
        assert!(r.recommendations.is_empty());
        assert!(r.curves.is_empty());
        assert_eq!(compare_tiers(&r).unwrap(), vec!["medium", "large", "perflab"]);
    }

    #[test]
    fn single_architecture_over_cap_suggests_distributed() {
        let mut req = SizingRequest::homogeneous(13, RuntimeProfile::reference());
        req.architecture = Architecture::Single;
        req.tiers = vec![HardwareTier::perflab()];
        let r = run(&req);
        assert!(r.per_tier.is_empty());
        match &r.failures["perflab"] {
            TierFailure::SingleMachineInfeasible { total_cpu_pct, .. } => assert_eq!(*total_cpu_pct, 84.5),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(
            r.recommendations,
            vec![Recommendation::SwitchArchitecture {
                tier: "perflab".into(),
                from: Architecture::Single,
                to: Architecture::Distributed
            }]
        );
        assert_eq!(compare_tiers(&r), Err(EngineError::NoFeasibleTier));

        req.services.truncate(12);
        let r = run(&req);
        assert_eq!(r.per_tier["perflab"].machines.len(), 1);
    }

    #[test]
    fn many_machines_suggest_next_larger_tier() {
        // 45 reference services on medium: 4 per machine, 12 machines.
        let r = run(&SizingRequest::homogeneous(45, RuntimeProfile::reference()));
        assert_eq!(r.per_tier["medium"].machines.len(), 12);
        assert!(r.recommendations.contains(&Recommendation::SwitchTier {
            from: "medium".into(),
            to: "large".into(),
            machine_count: 12,
            threshold: 10
        }));
        assert!(!r
            .recommendations
            .iter()
            .any(|x| matches!(x, Recommendation::SwitchTier { from, .. } if from != "medium")));
    }

    #[test]
    fn largest_tier_has_nowhere_to_go() {
        let mut req = SizingRequest::homogeneous(45, RuntimeProfile::reference());
        req.tiers = vec![HardwareTier::medium()];
        let r = run(&req);
        assert!(!r.recommendations.iter().any(|x| matches!(x, Recommendation::SwitchTier { .. })));
    }

    #[test]
    fn oversized_service_fails_only_its_tier() {
        let heavy = RuntimeProfile::new(1500, 100.0, 32.0, 32.0); // 34.5% on perflab, 103.5% on medium
        let r = run(&SizingRequest::homogeneous(2, heavy));
        assert!(matches!(r.failures["medium"], TierFailure::OversizedService { .. }));
        assert_eq!(r.per_tier["large"].machines.len(), 2);
        assert_eq!(r.per_tier["perflab"].machines.len(), 1);
        assert!(r
            .recommendations
            .iter()
            .any(|x| matches!(x, Recommendation::Infeasible { tier, .. } if tier == "medium")));
    }

    #[test]
    fn deployment_level_packs_memory_only() {
        let mut req = SizingRequest::homogeneous(10, RuntimeProfile::reference());
        req.level = SizingLevel::Deployment;
        let r = run(&req);
        for t in r.per_tier.values() {
            assert_eq!(t.machines.len(), 1);
            assert_eq!(t.machines[0].total_cpu_pct, 0.0);
            assert_eq!(t.machines[0].total_memory_mb, 10.0 * 192.0 + 3.0 * 512.0);
        }
        assert_eq!(r.curves["perflab"].degradation_threshold, MIN_CURVE_POINTS);
    }

    #[test]
    fn runtime_memory_includes_deployment_footprint() {
        let r = run(&SizingRequest::homogeneous(1, RuntimeProfile::reference()));
        assert_eq!(r.per_tier["perflab"].machines[0].total_memory_mb, 322.0 + 192.0 + 512.0);
    }

    #[test]
    fn curves_cover_the_knee() {
        let r = run(&SizingRequest::homogeneous(10, RuntimeProfile::reference()));
        assert_eq!(r.curves["perflab"].degradation_threshold, 12);
        assert_eq!(r.curves["large"].degradation_threshold, 8);
        assert_eq!(r.curves["medium"].degradation_threshold, 4);
        assert_eq!(r.curves["perflab"].points.len(), 26);
    }

    #[test]
    fn invalid_requests_are_rejected() {
        let mut req = SizingRequest::homogeneous(2, RuntimeProfile::reference());
        req.services[1].id = "svc1".into();
        let err = size(&req, &ModelCoefficients::default(), stamp()).unwrap_err();
        assert_eq!(err, SizingError::Invalid(vec![ValidationError::DuplicateId("svc1".into())]));
    }

    #[test]
    fn curve_length_bounds() {
        assert_eq!(curve_points(0.0, 80.0, 3), MIN_CURVE_POINTS);
        assert_eq!(curve_points(6.5, 80.0, 3), 26);
        assert_eq!(curve_points(1e-9, 80.0, 3), MAX_CURVE_POINTS);
        assert_eq!(curve_points(6.5, 80.0, 50), 50);
    }
}

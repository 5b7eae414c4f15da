//! Placement of services onto machines of one tier.
//!
//! Machines are filled one at a time. For the open machine the unplaced
//! services are scanned in input order and the first one that keeps machine
//! CPU strictly below the cap W (and memory within its cap) is placed. When
//! nothing fits, the machine is closed, its services are spread over nodes
//! and hosts, and a new machine is opened. Closed machines are never
//! revisited.
//!
//! This is bin packing over distinct services (each placed exactly once), not
//! a knapsack with repeated items.

use serde::{Deserialize, Serialize};

use crate::domain::{HardwareTier, Host, MachinePlan, Node, PackerConfig, ResourceDemand, ServiceSpec, Topology};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PackError {
    #[error("service {service_id} does not fit an empty machine ({cpu_pct}% cpu, {memory_mb} MB)")]
    OversizedService { service_id: String, cpu_pct: f64, memory_mb: f64 },
    #[error("service {service_id} demand is expressed against tier {found}, expected {expected}")]
    TierMismatch { service_id: String, expected: String, found: String },
    #[error("service {service_id} has a negative or non-finite demand")]
    InvalidDemand { service_id: String },
}

/// Which rule placed a service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementReason {
    /// The earliest unplaced service fit.
    FirstFit,
    /// An earlier unplaced service did not fit; a later one did.
    Lookahead,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Place { service_id: String, machine_index: usize, reason: PlacementReason },
    Close { machine_index: usize, service_count: usize, total_cpu_pct: f64, total_memory_mb: f64 },
}

/// Ordered log of placement decisions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PackingTrace {
    pub events: Vec<TraceEvent>,
}

/// Number of nodes needed for `services` services at `cap` per node.
fn nodes_for(services: usize, cap: u32) -> usize {
    services.div_ceil(cap as usize)
}

struct OpenMachine {
    cpu: f64,
    service_mem: f64,
    members: Vec<usize>,
}

impl OpenMachine {
    fn new() -> Self {
        Self { cpu: 0.0, service_mem: 0.0, members: Vec::new() }
    }

    fn memory_with(&self, extra_mem: f64, extra_services: usize, config: &PackerConfig) -> f64 {
        let nodes = nodes_for(self.members.len() + extra_services, config.services_per_node_cap);
        self.service_mem + extra_mem + nodes as f64 * config.node_overhead_mb
    }

    fn fits(&self, demand: &ResourceDemand, mem_cap: f64, config: &PackerConfig) -> bool {
        self.cpu + demand.cpu_pct < config.cpu_cap_pct && self.memory_with(demand.memory_mb, 1, config) <= mem_cap
    }
}

/// Packs `demands` onto machines of `tier`.
///
/// Every demand must be tagged with `tier` and fit an empty machine on its
/// own. Output is fully determined by the input order.
pub fn pack(
    demands: &[(ServiceSpec, ResourceDemand)],
    tier: &HardwareTier,
    config: &PackerConfig,
) -> Result<(Topology, PackingTrace), PackError> {
    let mem_cap = tier.memory_cap_mb(config.mem_cap_fraction);
    let empty = OpenMachine::new();
    for (service, demand) in demands {
        if demand.tier != tier.name {
            return Err(PackError::TierMismatch {
                service_id: service.id.clone(),
                expected: tier.name.clone(),
                found: demand.tier.clone(),
            });
        }
        let finite = demand.cpu_pct.is_finite() && demand.memory_mb.is_finite();
        if !finite || demand.cpu_pct < 0.0 || demand.memory_mb < 0.0 {
            return Err(PackError::InvalidDemand { service_id: service.id.clone() });
        }
        if !empty.fits(demand, mem_cap, config) {
            return Err(PackError::OversizedService {
                service_id: service.id.clone(),
                cpu_pct: demand.cpu_pct,
                memory_mb: demand.memory_mb,
            });
        }
    }

    let mut unplaced: Vec<usize> = (0..demands.len()).collect();
    let mut machines = Vec::new();
    let mut trace = PackingTrace::default();

    while !unplaced.is_empty() {
        let index = machines.len() + 1;
        let mut open = OpenMachine::new();
        while let Some(pos) = unplaced.iter().position(|&i| open.fits(&demands[i].1, mem_cap, config)) {
            let i = unplaced.remove(pos);
            let (service, demand) = &demands[i];
            open.cpu += demand.cpu_pct;
            open.service_mem += demand.memory_mb;
            open.members.push(i);
            trace.events.push(TraceEvent::Place {
                service_id: service.id.clone(),
                machine_index: index,
                reason: if pos == 0 { PlacementReason::FirstFit } else { PlacementReason::Lookahead },
            });
        }
        // Every service fits an empty machine, so each round places at least one.
        debug_assert!(!open.members.is_empty());

        let ids: Vec<String> = open.members.iter().map(|&i| demands[i].0.id.clone()).collect();
        let total_memory_mb = open.memory_with(0.0, 0, config);
        trace.events.push(TraceEvent::Close {
            machine_index: index,
            service_count: ids.len(),
            total_cpu_pct: open.cpu,
            total_memory_mb,
        });
        machines.push(MachinePlan {
            index,
            tier: tier.name.clone(),
            hosts: distribute_to_nodes(&ids, config),
            total_cpu_pct: open.cpu,
            total_memory_mb,
        });
    }

    Ok((Topology { tier: tier.name.clone(), machines }, trace))
}

/// Spreads one machine's services over nodes and groups the nodes into hosts.
///
/// Uses `⌈n / services_per_node_cap⌉` nodes, assigning service k to node
/// `k mod node_count`, so node sizes differ by at most one. Hosts take
/// consecutive runs of at most `max_nodes_per_host` nodes. Ids are local to
/// the machine: `host-1`, `node-1`, ...
pub fn distribute_to_nodes(service_ids: &[String], config: &PackerConfig) -> Vec<Host> {
    let node_count = nodes_for(service_ids.len(), config.services_per_node_cap);
    let mut nodes: Vec<Node> =
        (1..=node_count).map(|n| Node { id: format!("node-{n}"), service_ids: Vec::new() }).collect();
    for (k, id) in service_ids.iter().enumerate() {
        nodes[k % node_count].service_ids.push(id.clone());
    }
    nodes
        .chunks(config.max_nodes_per_host as usize)
        .enumerate()
        .map(|(h, chunk)| Host { id: format!("host-{}", h + 1), nodes: chunk.to_vec() })
        .collect()
}

/// Largest instance [`exact_pack_oracle`] accepts.
pub const ORACLE_MAX_ITEMS: usize = 14;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("instance of {0} items exceeds the exhaustive search limit of {ORACLE_MAX_ITEMS}")]
    TooLarge(usize),
    #[error("item {0} does not fit strictly below the cap")]
    Oversized(usize),
}

/// Minimum number of machines whose CPU sums each stay strictly below `cap`.
///
/// Exhaustive search over set partitions: `best[mask]` is the fewest machines
/// covering `mask`, built by peeling off a feasible subset that contains the
/// lowest member. CPU only; memory is ignored.
pub fn exact_pack_oracle(demands: &[f64], cap: f64) -> Result<usize, OracleError> {
    let n = demands.len();
    if n > ORACLE_MAX_ITEMS {
        return Err(OracleError::TooLarge(n));
    }
    if let Some(i) = demands.iter().position(|d| d.partial_cmp(&cap) != Some(std::cmp::Ordering::Less)) {
        return Err(OracleError::Oversized(i));
    }
    let full = (1usize << n) - 1;
    let mut sum = vec![0.0; full + 1];
    for mask in 1..=full {
        let low = mask.trailing_zeros() as usize;
        sum[mask] = sum[mask & (mask - 1)] + demands[low];
    }
    let mut best = vec![usize::MAX; full + 1];
    best[0] = 0;
    for mask in 1..=full {
        let low = mask & mask.wrapping_neg();
        let rest = mask ^ low;
        // Enumerate subsets of `rest`, each joined with `low`.
        let mut sub = rest;
        loop {
            let group = sub | low;
            if sum[group] < cap {
                let prev = best[mask ^ group];
                if prev != usize::MAX && prev + 1 < best[mask] {
                    best[mask] = prev + 1;
                }
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
    }
    Ok(best[full])
}

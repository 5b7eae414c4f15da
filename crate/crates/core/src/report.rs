//! Text artifacts rendered from sizing results: Graphviz topology and
//! infrastructure diagrams, the performance curve as CSV, and the Markdown
//! summary report. All emitters are pure; equal input gives equal bytes.

use std::fmt::Write;

use crate::domain::{
    Architecture, CoefficientsRef, PerformanceCurve, SizingLevel, SizingResult, Topology, WorkloadType,
};
use crate::engine::{compare_tiers, EngineError};
use crate::packer::{PackingTrace, PlacementReason, TraceEvent};

/// Quotes `s` as a DOT string literal body.
fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n")
}

fn md_escape(s: &str) -> String {
    s.replace('|', "\\|")
}

fn machine_vertex(machine: usize) -> String {
    format!("m{machine}")
}

fn host_vertex(machine: usize, host: usize) -> String {
    format!("m{machine}_h{host}")
}

fn node_vertex(machine: usize, host: usize, node: usize) -> String {
    format!("m{machine}_h{host}_n{node}")
}

/// Machines as clusters, hosts as nested clusters, nodes as boxes listing
/// their service ids.
pub fn emit_topology_graph(topology: &Topology) -> String {
    let mut out = String::new();
    let tier = dot_escape(&topology.tier);
    let n = topology.machines.len();
    writeln!(out, "digraph topology {{").unwrap();
    writeln!(out, "  graph [fontname=\"Helvetica\", label=\"{tier}: {n} machine(s)\", labelloc=t];").unwrap();
    writeln!(out, "  node [shape=box, fontname=\"Helvetica\"];").unwrap();
    for (mi, machine) in topology.machines.iter().enumerate() {
        let m = mi + 1;
        writeln!(out, "  subgraph cluster_{} {{", machine_vertex(m)).unwrap();
        writeln!(
            out,
            "    label=\"machine {} ({})\\ncpu {:.1}% | mem {:.1} MB\";",
            machine.index,
            dot_escape(&machine.tier),
            machine.total_cpu_pct,
            machine.total_memory_mb
        )
        .unwrap();
        for (hi, host) in machine.hosts.iter().enumerate() {
            let h = hi + 1;
            writeln!(out, "    subgraph cluster_{} {{", host_vertex(m, h)).unwrap();
            writeln!(out, "      label=\"{}\";", dot_escape(&host.id)).unwrap();
            for (ni, node) in host.nodes.iter().enumerate() {
                let mut label = dot_escape(&node.id);
                for id in &node.service_ids {
                    label.push_str("\\n");
                    label.push_str(&dot_escape(id));
                }
                writeln!(out, "      \"{}\" [label=\"{label}\"];", node_vertex(m, h, ni + 1)).unwrap();
            }
            writeln!(out, "    }}").unwrap();
        }
        writeln!(out, "  }}").unwrap();
    }
    writeln!(out, "}}").unwrap();
    out
}

pub const CURVE_CSV_HEADER: &str = "service_count,predicted_cpu_pct,region,threshold";

/// One row per curve point; `region` is `safe` below `cpu_cap_pct` and
/// `degraded` otherwise, and `threshold` is 1 on the degradation threshold row.
pub fn emit_performance_curve(curve: &PerformanceCurve, cpu_cap_pct: f64) -> String {
    let mut out = String::new();
    writeln!(out, "{CURVE_CSV_HEADER}").unwrap();
    for &(n, cpu) in &curve.points {
        let region = if cpu < cpu_cap_pct { "safe" } else { "degraded" };
        let flag = u8::from(n == curve.degradation_threshold);
        writeln!(out, "{n},{cpu},{region},{flag}").unwrap();
    }
    out
}

/// Schematic of the cheapest feasible tier: a load balancer feeding every
/// machine, a monitoring station watching every machine, and each machine's
/// hosts and nodes beneath it.
pub fn emit_infrastructure_diagram(result: &SizingResult) -> Result<String, EngineError> {
    let ranking = compare_tiers(result)?;
    let tier = &ranking[0];
    let topology = &result.per_tier[tier];

    let mut out = String::new();
    writeln!(out, "digraph infrastructure {{").unwrap();
    writeln!(
        out,
        "  graph [rankdir=LR, fontname=\"Helvetica\", label=\"{} infrastructure\", labelloc=t];",
        dot_escape(tier)
    )
    .unwrap();
    writeln!(out, "  node [fontname=\"Helvetica\"];").unwrap();
    writeln!(out, "  \"load_balancer\" [shape=diamond, label=\"load balancer\"];").unwrap();
    writeln!(out, "  \"monitor\" [shape=ellipse, label=\"management / monitoring\"];").unwrap();
    for (mi, machine) in topology.machines.iter().enumerate() {
        let m = mi + 1;
        writeln!(
            out,
            "  \"{}\" [shape=box3d, label=\"machine {}\\n{}\"];",
            machine_vertex(m),
            machine.index,
            dot_escape(&machine.tier)
        )
        .unwrap();
        for (hi, host) in machine.hosts.iter().enumerate() {
            let h = hi + 1;
            writeln!(out, "  \"{}\" [shape=folder, label=\"{}\"];", host_vertex(m, h), dot_escape(&host.id)).unwrap();
            for (ni, node) in host.nodes.iter().enumerate() {
                writeln!(
                    out,
                    "  \"{}\" [shape=component, label=\"{}\\n{} service(s)\"];",
                    node_vertex(m, h, ni + 1),
                    dot_escape(&node.id),
                    node.service_ids.len()
                )
                .unwrap();
            }
        }
    }
    for (mi, machine) in topology.machines.iter().enumerate() {
        let m = mi + 1;
        writeln!(out, "  \"load_balancer\" -> \"{}\";", machine_vertex(m)).unwrap();
        writeln!(out, "  \"monitor\" -> \"{}\" [style=dashed];", machine_vertex(m)).unwrap();
        for (hi, host) in machine.hosts.iter().enumerate() {
            let h = hi + 1;
            writeln!(out, "  \"{}\" -> \"{}\";", machine_vertex(m), host_vertex(m, h)).unwrap();
            for ni in 0..host.nodes.len() {
                writeln!(out, "  \"{}\" -> \"{}\";", host_vertex(m, h), node_vertex(m, h, ni + 1)).unwrap();
            }
        }
    }
    writeln!(out, "}}").unwrap();
    Ok(out)
}

fn architecture_name(a: Architecture) -> &'static str {
    match a {
        Architecture::Single => "single",
        Architecture::Distributed => "distributed",
    }
}

fn level_name(l: SizingLevel) -> &'static str {
    match l {
        SizingLevel::Deployment => "deployment",
        SizingLevel::Runtime => "runtime",
    }
}

fn workload_name(w: WorkloadType) -> &'static str {
    match w {
        WorkloadType::Steady => "steady",
        WorkloadType::Burst => "burst",
    }
}

/// The downloadable summary: inputs, per-tier topology tables, degradation
/// thresholds, recommendations, and the packing trace, in that order.
pub fn emit_summary_report(result: &SizingResult) -> String {
    let req = &result.request_echo;
    let mut out = String::new();
    writeln!(out, "# Sizing report\n").unwrap();
    writeln!(out, "- Run: `{}`", result.run_id).unwrap();
    writeln!(out, "- Created: {}\n", result.created_at.to_rfc3339()).unwrap();

    writeln!(out, "## 1. Inputs\n").unwrap();
    let coefficients = match &req.coefficients {
        None => "built-in".to_string(),
        Some(CoefficientsRef::Named(name)) => format!("profile `{name}`"),
        Some(CoefficientsRef::Inline(c)) => format!("inline (reference {})", c.reference_tier),
    };
    writeln!(out, "| Setting | Value |\n|---|---|").unwrap();
    for (k, v) in [
        ("Architecture", architecture_name(req.architecture).to_string()),
        ("Level", level_name(req.level).to_string()),
        ("CPU cap W (%)", req.packer.cpu_cap_pct.to_string()),
        ("Memory cap fraction", req.packer.mem_cap_fraction.to_string()),
        ("Max nodes per host", req.packer.max_nodes_per_host.to_string()),
        ("Services per node", req.packer.services_per_node_cap.to_string()),
        ("Node overhead (MB)", req.packer.node_overhead_mb.to_string()),
        ("Machine count threshold", req.thresholds.machine_count.to_string()),
        ("Near-degradation fraction", req.thresholds.near_degradation_fraction.to_string()),
        ("Coefficients", coefficients),
    ] {
        writeln!(out, "| {k} | {} |", md_escape(&v)).unwrap();
    }

    writeln!(out, "\n### Tiers\n").unwrap();
    writeln!(out, "| Tier | Processors | Cores per processor | Frequency (GHz) | RAM (GB) |").unwrap();
    writeln!(out, "|---|---:|---:|---:|---:|").unwrap();
    for t in &req.tiers {
        writeln!(
            out,
            "| {} | {} | {} | {} | {} |",
            md_escape(&t.name),
            t.processors,
            t.cores_per_processor,
            t.frequency_ghz,
            t.ram_gb
        )
        .unwrap();
    }

    writeln!(out, "\n### Services\n").unwrap();
    writeln!(
        out,
        "| # | Implementation | Binding | Workload | Concurrency | Throughput (req/s) | Request (KB) | Response (KB) |"
    )
    .unwrap();
    writeln!(out, "|---:|---|---|---|---:|---:|---:|---:|").unwrap();
    for (i, s) in req.services.iter().enumerate() {
        let runtime = match &s.profile {
            Some(p) => format!(
                "{} | {} | {} | {} | {}",
                workload_name(p.workload_type),
                p.concurrency,
                p.throughput,
                p.payload_request_kb,
                p.payload_response_kb
            ),
            None => "- | - | - | - | -".to_string(),
        };
        writeln!(
            out,
            "| {} | {} | {} | {runtime} |",
            i + 1,
            md_escape(&s.implementation_type),
            md_escape(&s.binding_type)
        )
        .unwrap();
    }

    writeln!(out, "\n## 2. Topology\n").unwrap();
    for t in &req.tiers {
        writeln!(out, "### {}\n", t.name).unwrap();
        if let Some(failure) = result.failures.get(&t.name) {
            writeln!(out, "Infeasible: {failure}\n").unwrap();
            continue;
        }
        let Some(topology) = result.per_tier.get(&t.name) else { continue };
        writeln!(out, "| Tier | Machine | Hosts | Nodes | Services | CPU (%) | Memory (MB) |").unwrap();
        writeln!(out, "|---|---:|---:|---:|---:|---:|---:|").unwrap();
        for m in &topology.machines {
            writeln!(
                out,
                "| {} | {} | {} | {} | {} | {:.1} | {:.1} |",
                md_escape(&m.tier),
                m.index,
                m.hosts.len(),
                m.nodes().count(),
                m.service_count(),
                m.total_cpu_pct,
                m.total_memory_mb
            )
            .unwrap();
        }
        writeln!(out, "\n| Machine | Host | Node | Service ids |").unwrap();
        writeln!(out, "|---:|---|---|---|").unwrap();
        for m in &topology.machines {
            for h in &m.hosts {
                for n in &h.nodes {
                    let ids: Vec<String> = n.service_ids.iter().map(|s| md_escape(s)).collect();
                    writeln!(out, "| {} | {} | {} | {} |", m.index, md_escape(&h.id), md_escape(&n.id), ids.join(", "))
                        .unwrap();
                }
            }
        }
        writeln!(out).unwrap();
    }

    writeln!(out, "## 3. Degradation thresholds\n").unwrap();
    writeln!(out, "| Tier | Per-service CPU (%) | Threshold (services) |").unwrap();
    writeln!(out, "|---|---:|---:|").unwrap();
    for (tier, curve) in &result.curves {
        let per_service = curve.points.first().map_or(0.0, |p| p.1);
        writeln!(out, "| {} | {:.2} | {} |", md_escape(tier), per_service, curve.degradation_threshold).unwrap();
    }

    writeln!(out, "\n## 4. Recommendations\n").unwrap();
    if result.recommendations.is_empty() {
        writeln!(out, "None.").unwrap();
    }
    for r in &result.recommendations {
        writeln!(out, "- {r}").unwrap();
    }
    if let Ok(ranking) = compare_tiers(result) {
        writeln!(out, "\nTier ranking by deployed capacity: {}", ranking.join(", ")).unwrap();
    }

    writeln!(out, "\n## 5. Packing trace").unwrap();
    for (tier, trace) in &result.traces {
        writeln!(out, "\n### {tier}\n").unwrap();
        write_trace(&mut out, trace);
    }
    out
}

fn write_trace(out: &mut String, trace: &PackingTrace) {
    if trace.events.is_empty() {
        writeln!(out, "No placements.").unwrap();
    }
    for event in &trace.events {
        match event {
            TraceEvent::Place { service_id, machine_index, reason } => {
                let reason = match reason {
                    PlacementReason::FirstFit => "first fit",
                    PlacementReason::Lookahead => "lookahead",
                };
                writeln!(out, "- place `{service_id}` on machine {machine_index} ({reason})").unwrap();
            }
            TraceEvent::Close { machine_index, service_count, total_cpu_pct, total_memory_mb } => writeln!(
                out,
                "- close machine {machine_index}: {service_count} service(s), {total_cpu_pct:.1}% cpu, {total_memory_mb:.1} MB"
            )
            .unwrap(),
        }
    }
}

use proptest::prelude::*;
use sizer_core::perfmodel::{curve_for_demand, tier_scale_factor, DemandModel, ModelCoefficients, PairCoefficients};
use sizer_core::{HardwareTier, RuntimeProfile, ServiceSpec};

fn coefficients() -> impl Strategy<Value = ModelCoefficients> {
    prop::collection::vec(0.0..10.0f64, 7).prop_map(|v| ModelCoefficients {
        reference_tier: "perflab".into(),
        pairs: vec![PairCoefficients {
            implementation_type: "java".into(),
            binding_type: "soap_http".into(),
            c0_cpu_pct: v[0],
            c1_cpu_per_user: v[1] / 100.0,
            c2_cpu_per_rps: v[2] / 100.0,
            c3_cpu_per_rps_kb: v[3] / 10_000.0,
            m0_mem_mb: v[4] * 100.0,
            m1_mem_per_user_mb: v[5],
            m2_mem_per_kb_mb: v[6],
            deploy_mem_mb: 0.0,
        }],
        tier_factors: Default::default(),
    })
}

fn profile() -> impl Strategy<Value = RuntimeProfile> {
    (0u32..5000, 0.0..5000.0f64, 0.0..512.0f64, 0.0..512.0f64)
        .prop_map(|(u, t, req, resp)| RuntimeProfile::new(u, t, req, resp))
}

fn tier() -> impl Strategy<Value = HardwareTier> {
    (1u32..9, 1u32..65, 1.0..5.0f64, 1.0..1024.0f64).prop_map(|(p, c, f, r)| HardwareTier::new("custom", p, c, f, r))
}

fn svc() -> ServiceSpec {
    ServiceSpec::new("s", "java", "soap_http")
}

proptest! {
    #[test]
    fn demand_is_monotone_in_load(coeffs in coefficients(), a in profile(), b in profile()) {
        let lo = RuntimeProfile::new(
            a.concurrency.min(b.concurrency),
            a.throughput.min(b.throughput),
            a.payload_request_kb.min(b.payload_request_kb),
            a.payload_response_kb.min(b.payload_response_kb),
        );
        let hi = RuntimeProfile::new(
            a.concurrency.max(b.concurrency),
            a.throughput.max(b.throughput),
            a.payload_request_kb.max(b.payload_request_kb),
            a.payload_response_kb.max(b.payload_response_kb),
        );
        let model = DemandModel::new(coeffs, &[]).unwrap();
        for t in HardwareTier::standard() {
            let d_lo = model.estimate_demand(&svc(), &lo, &t).unwrap();
            let d_hi = model.estimate_demand(&svc(), &hi, &t).unwrap();
            prop_assert!(d_lo.cpu_pct <= d_hi.cpu_pct);
            prop_assert!(d_lo.memory_mb <= d_hi.memory_mb);
        }
    }

    #[test]
    fn work_is_conserved_across_tiers(coeffs in coefficients(), p in profile(), t in tier()) {
        let model = DemandModel::new(coeffs, &[]).unwrap();
        let reference = HardwareTier::perflab();
        let on_tier = model.estimate_demand(&svc(), &p, &t).unwrap();
        let on_ref = model.estimate_demand(&svc(), &p, &reference).unwrap();
        let lhs = on_tier.cpu_pct * t.capacity_units();
        let rhs = on_ref.cpu_pct * reference.capacity_units();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1e-300));
        prop_assert_eq!(on_tier.memory_mb, on_ref.memory_mb);
    }

    #[test]
    fn scale_factor_is_capacity_ratio(a in tier(), b in tier()) {
        let f = tier_scale_factor(&a, &b);
        let expect = (b.processors as f64 * b.cores_per_processor as f64 * b.frequency_ghz)
            / (a.processors as f64 * a.cores_per_processor as f64 * a.frequency_ghz);
        prop_assert!((f - expect).abs() <= 1e-12 * expect);
    }

    #[test]
    fn threshold_matches_closed_form(per_service in 0.01..100.0f64, cap in 1.0..100.0f64) {
        let max = 20_000;
        let curve = curve_for_demand("t", per_service, cap, max);
        let scan = (1..=max).filter(|&n| (n as f64) * per_service < cap).max().unwrap_or(0);
        prop_assert_eq!(curve.degradation_threshold, scan);
        let ratio = cap / per_service;
        if ratio.fract() != 0.0 {
            prop_assert_eq!(curve.degradation_threshold, ratio.ceil() as usize - 1);
        }
    }
}

use nova_core::bench::{read_trace, write_trace, RunConfig, TraceFormat};
use nova_core::inner::NoObserver;
use nova_core::nova::NovaStatus;
use nova_core::sim::{run_distributed, SimMode, Topology, TopologyKind};
use serde_json::json;

fn shared_budget(blocks: usize, m: usize) -> RunConfig {
    let mut cfg = RunConfig::for_benchmark("shared-budget");
    cfg.problem = serde_json::from_value(json!({"id": "shared-budget", "params": {"blocks": blocks, "constraints": m, "seed": 4}})).unwrap();
    cfg.nova.stop_tol = 1e-7;
    cfg.nova.max_outer = 2000;
    cfg.seed = 2;
    cfg
}

fn topology(kind: TopologyKind, agents: usize) -> Topology {
    Topology { kind, agents, seed: 5 }
}

#[test]
fn distributed_runs_match_the_centralized_run() {
    let cfg = shared_budget(3, 1);
    let prepared = cfg.prepare().unwrap();
    let central = prepared.run(&mut NoObserver).unwrap();
    for mode in [SimMode::Dual, SimMode::Primal] {
        let out = run_distributed(
            &prepared.plan,
            &prepared.nova,
            &prepared.solve,
            mode,
            topology(TopologyKind::ClusterHead, 3),
            &prepared.x0,
        )
        .unwrap();
        assert_eq!(out.run.status, NovaStatus::Stationary, "{mode:?}");
        let d: f64 = out
            .run
            .point
            .iter()
            .zip(&central.point)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(d < 1e-5, "{mode:?}: {d}");
        assert!(!out.rounds.is_empty());
    }
}

#[test]
fn message_accounting_follows_the_topology() {
    let (blocks, m) = (4, 2);
    let cfg = shared_budget(blocks, m);
    let prepared = cfg.prepare().unwrap();
    let cases = [
        (TopologyKind::ClusterHead, SimMode::Dual, blocks + 1),
        (TopologyKind::ClusterHead, SimMode::Primal, 2 * blocks),
        (TopologyKind::FullyDecentralizedStub, SimMode::Dual, blocks * (blocks - 1)),
    ];
    for (kind, mode, per_round) in cases {
        let out = run_distributed(&prepared.plan, &prepared.nova, &prepared.solve, mode, topology(kind, blocks), &prepared.x0)
            .unwrap();
        let rounds = out.rounds.len();
        assert_eq!(out.total_messages, rounds * per_round, "{kind:?} {mode:?}");
        assert_eq!(out.total_floats, rounds * per_round * m);
        for r in &out.rounds {
            assert_eq!(r.agent_work.len(), blocks);
            assert!((1.0..5.0).contains(&r.latency_ms));
            match mode {
                SimMode::Dual => {
                    assert_eq!(r.snapshot.len(), m);
                    assert!(r.snapshot.iter().all(|l| *l >= 0.0));
                }
                SimMode::Primal => {
                    assert_eq!(r.snapshot.len(), blocks * m);
                    assert!(r.shared.as_ref().unwrap().iter().all(|v| *v <= 1e-12));
                }
            }
        }
        let outers = out.rounds.last().unwrap().outer + 1;
        assert_eq!(outers, out.run.trace.len());
    }
}

#[test]
fn simulation_is_reproducible() {
    let cfg = shared_budget(3, 2);
    let prepared = cfg.prepare().unwrap();
    let go = || {
        run_distributed(
            &prepared.plan,
            &prepared.nova,
            &prepared.solve,
            SimMode::Dual,
            topology(TopologyKind::ClusterHead, 3),
            &prepared.x0,
        )
        .unwrap()
    };
    let a = go();
    let b = go();
    assert_eq!(a.rounds, b.rounds);
    assert_eq!(a.run.trace, b.run.trace);
}

#[test]
fn mismatched_or_coupled_setups_are_rejected() {
    let prepared = shared_budget(3, 1).prepare().unwrap();
    let err = run_distributed(
        &prepared.plan,
        &prepared.nova,
        &prepared.solve,
        SimMode::Dual,
        topology(TopologyKind::ClusterHead, 2),
        &prepared.x0,
    )
    .unwrap_err();
    assert!(err.to_string().contains("agents"), "{err}");

    let mut cfg = RunConfig::for_benchmark("product-floor");
    cfg.surrogate = Some(
        serde_json::from_value(json!({
            "objective": {"kind": "block-convex", "tau": 0.0, "modulus": 1.0, "joint": true},
            "constraints": [{"kind": "identity-convex"}]
        }))
        .unwrap(),
    );
    let prepared = cfg.prepare().unwrap();
    let err = run_distributed(
        &prepared.plan,
        &prepared.nova,
        &prepared.solve,
        SimMode::Primal,
        topology(TopologyKind::ClusterHead, 2),
        &prepared.x0,
    )
    .unwrap_err();
    assert!(err.to_string().contains("separable"), "{err}");
}

#[test]
fn traces_round_trip_through_files() {
    let out = RunConfig::for_benchmark("product-floor").prepare().unwrap().run(&mut NoObserver).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for format in [TraceFormat::Csv, TraceFormat::Json] {
        let path = dir.path().join(format!("trace.{format:?}"));
        write_trace(&out.trace, &path, format).unwrap();
        assert_eq!(read_trace(&path, format).unwrap(), out.trace);
    }
    let csv = std::fs::read_to_string(dir.path().join("trace.Csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "nu,U,gamma,bestresp_dist,max_g,descent_lhs,descent_rhs,kkt,inner_iters,wall_ms"
    );
    assert!(out.trace.iter().all(|r| r.wall_ms == 0.0));
}

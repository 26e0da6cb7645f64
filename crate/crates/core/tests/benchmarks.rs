use nova_core::bench::{build_benchmark, grid_oracle, registry, RunConfig};
use nova_core::dual::DualRuleKind;
use nova_core::inner::NoObserver;
use nova_core::nova::{NovaStatus, StepConfig};
use serde_json::Value;

fn run(cfg: &RunConfig) -> nova_core::nova::NovaOutcome {
    cfg.prepare().unwrap().run(&mut NoObserver).unwrap()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[test]
fn registry_entries_build_with_defaults() {
    let ids: Vec<&str> = registry().iter().map(|e| e.id).collect();
    assert_eq!(ids, ["reverse-ball", "bilinear-floor", "shared-budget", "product-floor"]);
    for id in ids {
        let b = build_benchmark(id, &Value::Null).unwrap();
        assert_eq!(b.id, id);
        b.problem.sample_feasible_point(1, 100_000).unwrap();
    }
    assert!(build_benchmark("nope", &Value::Null).is_err());
    assert!(build_benchmark("shared-budget", &serde_json::json!({"constraints": 3})).is_err());
}

#[test]
fn references_agree_with_grid_scan() {
    for (id, resolution) in [("bilinear-floor", 0.01), ("product-floor", 0.01), ("reverse-ball", 0.005)] {
        let b = build_benchmark(id, &Value::Null).unwrap();
        let reference = b.reference.unwrap();
        let bounds = match id {
            "bilinear-floor" => Some((vec![0.1, 0.1], vec![3.0, 3.0])),
            _ => None,
        };
        let (x, v) = grid_oracle(&b.problem, resolution, bounds).unwrap().best.unwrap();
        assert!(dist(&x, &reference.point) < 1e-9, "{id}: {x:?}");
        assert!((v - reference.value).abs() < 1e-9, "{id}: {v}");
    }
}

#[test]
fn bilinear_floor_reaches_optimum_under_every_step_rule() {
    let steps = [
        StepConfig::Constant { gamma_max: 1.0, gamma: None },
        StepConfig::Constant { gamma_max: 1.0, gamma: Some(0.5) },
        StepConfig::DiminishingRecursive { gamma0: 1.0, eps: 0.1 },
        StepConfig::DiminishingCustom { gamma0: 1.0, power: 0.6 },
    ];
    for step in steps {
        let mut cfg = RunConfig::for_benchmark("bilinear-floor");
        cfg.nova.step = step;
        cfg.nova.stop_tol = 1e-9;
        cfg.nova.max_outer = 3000;
        cfg.dual.rule = DualRuleKind::Bisection;
        cfg.x0 = Some(vec![3.0, 0.5]);
        let out = run(&cfg);
        assert_eq!(out.status, NovaStatus::Stationary, "{step:?}");
        assert!(dist(&out.point, &[1.0, 1.0]) < 1e-4, "{step:?}: {:?}", out.point);
        // multiplier of x1·x2 ≥ 1 at (1, 1): ∇U = μ∇(x1x2) gives μ = 2
        assert!((out.multipliers[0] - 2.0).abs() < 1e-3, "{:?}", out.multipliers);
        assert!(out.diagnostics.passed(), "{:?}", out.diagnostics);
    }
}

#[test]
fn product_floor_reaches_symmetric_optimum() {
    for seed in 0..3 {
        let mut cfg = RunConfig::for_benchmark("product-floor");
        cfg.seed = seed;
        cfg.nova.stop_tol = 1e-9;
        let out = run(&cfg);
        assert_eq!(out.status, NovaStatus::Stationary);
        assert!(dist(&out.point, &[0.5, 0.5]) < 1e-4, "{:?}", out.point);
        assert!((out.trace.last().unwrap().u - 1.5625).abs() < 1e-6);
    }
}

#[test]
fn reverse_ball_finds_global_optimum_from_some_start() {
    let reference = build_benchmark("reverse-ball", &Value::Null).unwrap().reference.unwrap();
    let mut best = f64::INFINITY;
    for seed in 0..10 {
        let mut cfg = RunConfig::for_benchmark("reverse-ball");
        cfg.seed = seed;
        cfg.nova.step = StepConfig::Constant { gamma_max: 1.0, gamma: None };
        cfg.nova.stop_tol = 1e-9;
        cfg.dual.rule = DualRuleKind::Bisection;
        let out = run(&cfg);
        assert_eq!(out.status, NovaStatus::Stationary);
        assert!(out.final_kkt < 1e-5);
        let u = out.trace.last().unwrap().u;
        assert!(u >= reference.value - 1e-9, "below the global optimum: {u}");
        best = best.min(u);
    }
    assert!((best - reference.value).abs() < 1e-6, "best {best}");
}

#[test]
fn shared_budget_variants_agree() {
    let b = build_benchmark("shared-budget", &serde_json::json!({"blocks": 3, "constraints": 1, "seed": 2})).unwrap();
    let mut finals = Vec::new();
    for (_, recipe) in std::iter::once(("default".to_string(), b.surrogate.clone())).chain(b.variants.clone()) {
        let mut cfg = RunConfig::for_benchmark("shared-budget");
        cfg.problem = serde_json::from_value(serde_json::json!({"id": "shared-budget", "params": {"blocks": 3, "constraints": 1, "seed": 2}})).unwrap();
        cfg.surrogate = Some(recipe);
        cfg.nova.stop_tol = 1e-8;
        cfg.nova.max_outer = 5000;
        cfg.seed = 9;
        let out = run(&cfg);
        assert_eq!(out.status, NovaStatus::Stationary);
        assert!(out.final_kkt < 1e-5);
        finals.push(out.point);
    }
    for f in &finals[1..] {
        assert!(dist(f, &finals[0]) < 1e-4, "{f:?} vs {:?}", finals[0]);
    }
}

#[test]
fn custom_problem_from_json() {
    // min ‖x − (0.2, 0.1)‖² outside the unit disc: the radial projection
    // of the center onto the circle
    let text = r#"{
        "problem": {"custom": {
            "dim": 2,
            "set": {"kind": "box", "lower": [-2, -2], "upper": [2, 2]},
            "objective": {"kind": "squared-distance", "center": [0.2, 0.1]},
            "constraints": [{"kind": "sum", "terms": [
                {"kind": "constant", "value": 1.0},
                {"kind": "scaled", "factor": -1.0, "term": {"kind": "squared-distance", "center": [0, 0]}}
            ]}]
        }},
        "surrogate": {
            "objective": {"kind": "proximal", "tau": 0.5},
            "constraints": [{"kind": "dc", "params": {
                "plus": {"kind": "constant", "value": 1.0},
                "minus": {"kind": "squared-distance", "center": [0, 0]}
            }}]
        },
        "nova": {"step": {"kind": "diminishing-recursive", "gamma0": 1.0, "eps": 0.05}, "stop_tol": 1e-9},
        "dual": {"rule": "bisection"},
        "x0": [1.5, 1.5]
    }"#;
    let cfg = RunConfig::from_json(text).unwrap();
    let out = run(&cfg);
    let r = (0.2f64 * 0.2 + 0.1 * 0.1).sqrt();
    let expected = [0.2 / r, 0.1 / r];
    assert_eq!(out.status, NovaStatus::Stationary);
    assert!(dist(&out.point, &expected) < 1e-5, "{:?}", out.point);
}

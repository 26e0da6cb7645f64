use nova_core::bench::RunConfig;
use nova_core::dual::{dual_solve, resolve_rule, BlockSystem, DualOptions, DualRuleKind, DualStepRule};
use nova_core::inner::{solve_subproblem, InnerMethod, NoObserver, RoundObserver, SolveOptions, Subproblem, WarmStart};
use nova_core::primal::{primal_solve, project_master, PrimalOptions, SlackAllocation};
use proptest::prelude::*;
use serde_json::json;

fn subproblem(params: serde_json::Value, seed: u64) -> Subproblem {
    let mut cfg = RunConfig::for_benchmark("shared-budget");
    cfg.problem = serde_json::from_value(json!({"id": "shared-budget", "params": params})).unwrap();
    let run = cfg.prepare().unwrap();
    let y = run.problem.sample_feasible_point(seed, 100_000).unwrap();
    Subproblem::from_plan(&run.plan, &y).unwrap()
}

fn centralized(sub: &Subproblem) -> Vec<f64> {
    let mut opts = SolveOptions::default();
    opts.inner.method = InnerMethod::ProjectedGradient;
    opts.inner.tol = 1e-10;
    solve_subproblem(sub, &opts, &mut WarmStart::default(), &mut NoObserver).unwrap().point
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[test]
fn every_dual_rule_matches_the_centralized_solution() {
    let sub = subproblem(json!({"blocks": 3, "constraints": 1, "seed": 5}), 11);
    let reference = centralized(&sub);
    let system = BlockSystem::from_subproblem(&sub, true).unwrap();
    for rule in [DualRuleKind::ConstantRange, DualRuleKind::Bisection, DualRuleKind::SummableDiminishing] {
        let opts = DualOptions {
            rule,
            alpha0: (rule == DualRuleKind::SummableDiminishing).then_some(5.0),
            tol: if rule == DualRuleKind::SummableDiminishing { 1e-7 } else { 1e-10 },
            max_iter: 2_000_000,
            ..DualOptions::default()
        };
        let r = resolve_rule(&system, &opts).unwrap();
        let out = dual_solve(&system, &r, &opts, None, &mut NoObserver).unwrap();
        let tol = if rule == DualRuleKind::SummableDiminishing { 1e-3 } else { 1e-6 };
        assert!(dist(&out.point, &reference) < tol, "{rule:?}: {:?} vs {reference:?}", out.point);
    }
}

#[test]
fn dual_values_increase_under_constant_step() {
    let sub = subproblem(json!({"blocks": 4, "constraints": 2, "seed": 7}), 3);
    let system = BlockSystem::from_subproblem(&sub, true).unwrap();
    let opts = DualOptions::default();
    let rule = resolve_rule(&system, &opts).unwrap();
    assert!(matches!(rule, DualStepRule::ConstantRange { .. }));
    let out = dual_solve(&system, &rule, &opts, None, &mut NoObserver).unwrap();
    for w in out.dual_values.windows(2) {
        assert!(w[1] >= w[0] - 1e-10, "{} then {}", w[0], w[1]);
    }
    assert!(out.lambda.iter().all(|l| *l >= 0.0));
}

#[test]
fn warm_start_is_honored() {
    let sub = subproblem(json!({"blocks": 4, "constraints": 2, "seed": 7}), 3);
    let system = BlockSystem::from_subproblem(&sub, true).unwrap();
    let opts = DualOptions::default();
    let rule = resolve_rule(&system, &opts).unwrap();
    let cold = dual_solve(&system, &rule, &opts, None, &mut NoObserver).unwrap();
    let warm = dual_solve(&system, &rule, &opts, Some(&cold.lambda), &mut NoObserver).unwrap();
    assert!(warm.rounds <= 2, "{}", warm.rounds);
    assert!(dist(&warm.point, &cold.point) < 1e-8);
}

struct MasterLog(Vec<Vec<f64>>, Vec<f64>);

impl RoundObserver for MasterLog {
    fn master_round(&mut self, _round: usize, slacks: &[Vec<f64>], _work: &[usize], shared: &[f64]) {
        let m = shared.len();
        let total = (0..m).map(|j| slacks.iter().map(|t| t[j]).sum::<f64>()).fold(f64::NEG_INFINITY, f64::max);
        self.0.push(shared.to_vec());
        self.1.push(total);
    }
}

#[test]
fn primal_decomposition_keeps_shared_constraints_every_round() {
    for (params, seed) in [
        (json!({"blocks": 4, "constraints": 2, "seed": 7}), 21),
        (json!({"blocks": 2, "constraints": 1, "seed": 1}), 22),
    ] {
        let sub = subproblem(params, seed);
        let reference = centralized(&sub);
        let mut log = MasterLog(Vec::new(), Vec::new());
        let out = primal_solve(&sub, &PrimalOptions::default(), &DualOptions::default(), &mut log).unwrap();
        assert_eq!(log.0.len(), out.rounds);
        assert!(log.0.iter().flatten().all(|v| *v <= 1e-12));
        assert!(log.1.iter().all(|t| *t <= 1e-12));
        assert!(out.slacks.is_feasible(1e-12));
        assert!(dist(&out.point, &reference) < 1e-4, "{:?} vs {reference:?}", out.point);
        assert!(sub.violation(&out.point) <= 1e-12);
    }
}

#[test]
fn non_separable_models_are_rejected() {
    // a coupled quadratic kept whole by the joint model
    let cfg = RunConfig::from_json(
        &json!({
            "problem": {"custom": {
                "dim": 2,
                "set": {"kind": "box", "lower": [-1, -1], "upper": [1, 1]},
                "objective": {"kind": "quadratic", "matrix": [[2, 1], [1, 2]]},
                "constraints": [{"kind": "linear", "coef": [-1, -1], "constant": -0.5}],
                "blocks": [1, 1]
            }},
            "surrogate": {
                "objective": {"kind": "block-convex", "tau": 0.0, "modulus": 1.0, "joint": true},
                "constraints": [{"kind": "identity-convex"}]
            }
        })
        .to_string(),
    )
    .unwrap();
    let run = cfg.prepare().unwrap();
    let sub = Subproblem::from_plan(&run.plan, &run.x0).unwrap();
    assert!(BlockSystem::from_subproblem(&sub, true).is_err());
    assert!(primal_solve(&sub, &PrimalOptions::default(), &DualOptions::default(), &mut NoObserver).is_err());
}

fn allocation() -> impl Strategy<Value = SlackAllocation> {
    (1usize..5, 1usize..3).prop_flat_map(|(blocks, m)| {
        prop::collection::vec(prop::collection::vec(-5.0f64..5.0, m), blocks).prop_map(|t| SlackAllocation { t })
    })
}

fn flat_dist(a: &SlackAllocation, b: &SlackAllocation) -> f64 {
    a.t.iter()
        .flatten()
        .zip(b.t.iter().flatten())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

proptest! {
    #[test]
    fn master_projection_lands_in_the_feasible_set(t in allocation()) {
        let p = project_master(&t);
        prop_assert!(p.max_total() <= 1e-12);
    }

    #[test]
    fn master_projection_is_idempotent(t in allocation()) {
        let p = project_master(&t);
        let q = project_master(&p);
        prop_assert!(flat_dist(&p, &q) <= 1e-12);
    }

    #[test]
    fn master_projection_is_nonexpansive(a in allocation(), seed in 0u64..1000) {
        // a second allocation with the same shape
        let b = SlackAllocation {
            t: a.t.iter().enumerate().map(|(i, row)| {
                row.iter().enumerate().map(|(j, v)| v + ((seed as f64 + 1.0) * (i * 7 + j * 3 + 1) as f64).sin() * 3.0).collect()
            }).collect(),
        };
        let d = flat_dist(&project_master(&a), &project_master(&b));
        prop_assert!(d <= flat_dist(&a, &b) + 1e-12);
    }
}

//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero if any
//! criterion fails.

use std::f64::consts::PI;
use std::time::Instant;

use nova_core::bench::{build_benchmark, grid_oracle, registry, write_trace, RunConfig, TraceFormat};
use nova_core::dual::{
    dual_lipschitz_constant, dual_solve, evaluate_dual, resolve_rule, BlockSystem, DualOptions, DualRuleKind,
};
use nova_core::expr::Expr;
use nova_core::inner::{
    kkt_residual_original, solve_subproblem, InnerMethod, NoObserver, RoundObserver, SolveOptions, Subproblem, WarmStart,
};
use nova_core::nova::{step_next, NovaOutcome, NovaStatus, StepConfig, StepSchedule};
use nova_core::primal::{primal_solve, PrimalOptions};
use nova_core::problem::ProblemSpec;
use nova_core::set::ConvexSet;
use nova_core::surrogate::{lipschitz_quadratic_surrogate, verify_surrogate, Property, SurrogatePlan, Target};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PROBLEMS: [&str; 3] = ["reverse-ball", "bilinear-floor", "shared-budget"];
const STARTS: u64 = 20;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

/// Constant-step configuration used for the feasibility, descent,
/// monotonicity and stationarity criteria.
fn constant_config(id: &str, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::for_benchmark(id);
    cfg.nova.step = StepConfig::Constant {
        gamma_max: 1.0,
        gamma: None,
    };
    cfg.nova.stop_tol = 1e-7;
    cfg.nova.max_outer = 1000;
    if id != "shared-budget" {
        cfg.dual.rule = DualRuleKind::Bisection;
    }
    cfg.seed = seed;
    cfg
}

/// Records every iterate handed to the subproblem solver.
#[derive(Default)]
struct Iterates(Vec<Vec<f64>>);

impl RoundObserver for Iterates {
    fn outer_iteration(&mut self, _nu: usize, x: &[f64]) {
        self.0.push(x.to_vec());
    }
}

struct Runs {
    outcomes: Vec<(String, u64, NovaOutcome)>,
    iterates: Vec<Vec<Vec<f64>>>,
    seconds: f64,
    errors: Vec<String>,
}

fn multi_start_runs() -> Runs {
    let started = Instant::now();
    let mut outcomes = Vec::new();
    let mut iterates = Vec::new();
    let mut errors = Vec::new();
    for id in PROBLEMS {
        for seed in 0..STARTS {
            let mut seen = Iterates::default();
            match constant_config(id, 1000 + seed).prepare().and_then(|r| r.run(&mut seen)) {
                Ok(out) => {
                    outcomes.push((id.to_string(), seed, out));
                    iterates.push(seen.0);
                }
                Err(e) => errors.push(format!("{id} start {seed}: {e}")),
            }
        }
    }
    Runs {
        outcomes,
        iterates,
        seconds: started.elapsed().as_secs_f64(),
        errors,
    }
}

fn criterion_1(runs: &Runs) -> Verdict {
    let mut worst_g = f64::NEG_INFINITY;
    let mut worst_set = 0.0f64;
    let mut rows = 0;
    for ((id, _, out), xs) in runs.outcomes.iter().zip(&runs.iterates) {
        let problem = build_benchmark(id, &serde_json::Value::Null).unwrap().problem;
        for (row, x) in out.trace.iter().zip(xs) {
            let g = problem.max_constraint(x).unwrap_or(f64::NEG_INFINITY);
            worst_g = worst_g.max(g).max(row.max_g);
            worst_set = worst_set.max(problem.set.distance(x));
            rows += 1;
        }
        if xs.len() != out.trace.len() {
            worst_g = f64::INFINITY;
        }
    }
    let expected = PROBLEMS.len() * STARTS as usize;
    let pass = runs.errors.is_empty()
        && runs.outcomes.len() == expected
        && worst_g <= 1e-9
        && worst_set <= 1e-9
        && runs.seconds < 30.0;
    verdict(
        pass,
        format!(
            "{} runs, {rows} rows, max g = {worst_g:.2e}, max set residual = {worst_set:.2e}, {:.2} s{}",
            runs.outcomes.len(),
            runs.seconds,
            error_suffix(&runs.errors)
        ),
    )
}

fn error_suffix(errors: &[String]) -> String {
    if errors.is_empty() {
        String::new()
    } else {
        format!("; errors: {}", errors.join(" | "))
    }
}

fn criterion_2(runs: &Runs) -> Verdict {
    let mut failures = 0;
    let mut rows = 0;
    let mut worst = f64::NEG_INFINITY;
    for (_, _, out) in &runs.outcomes {
        for row in &out.trace {
            rows += 1;
            let slack = 1e-8 * (1.0 + row.descent_rhs.abs());
            let excess = row.descent_lhs - row.descent_rhs;
            worst = worst.max(excess - slack);
            if excess > slack {
                failures += 1;
            }
        }
    }
    verdict(
        failures == 0 && rows > 0 && runs.errors.is_empty(),
        format!("{rows} rows, {failures} violations, worst lhs − rhs − slack = {worst:.2e}"),
    )
}

fn criterion_3(runs: &Runs) -> Verdict {
    let mut worst = f64::NEG_INFINITY;
    let mut checked = 0;
    let mut bad_schedules = 0;
    for (_, _, out) in &runs.outcomes {
        let s = out.schedule;
        let (StepConfig::Constant { gamma_max, .. }, Some(l)) = (s.config, s.l_grad_u) else {
            bad_schedules += 1;
            continue;
        };
        if 2.0 * s.c_tilde <= gamma_max * l || s.c_tilde.is_nan() {
            bad_schedules += 1;
        }
        for w in out.trace.windows(2) {
            let g = w[0].gamma;
            let decrease = g * (s.c_tilde - g * l / 2.0) * w[0].bestresp_dist.powi(2);
            worst = worst.max(w[1].u - (w[0].u - decrease));
            worst = worst.max(w[1].u - w[0].u);
            checked += 1;
        }
    }
    verdict(
        bad_schedules == 0 && checked > 0 && worst <= 1e-7,
        format!("{checked} consecutive pairs, worst excess over the decrease bound = {worst:.2e}"),
    )
}

fn criterion_4() -> Verdict {
    let started = Instant::now();
    let target = [1.0, 1.0];
    let problem = build_benchmark("bilinear-floor", &serde_json::Value::Null).unwrap().problem;
    let grid = match grid_oracle(&problem, 0.01, Some((vec![0.1, 0.1], vec![3.0, 3.0]))) {
        Ok(g) => g,
        Err(e) => return verdict(false, format!("grid oracle failed: {e}")),
    };
    let Some((gx, gv)) = grid.best else {
        return verdict(false, "grid oracle found no feasible point".into());
    };
    let grid_ok = (gx[0] - 1.0).abs() < 1e-9 && (gx[1] - 1.0).abs() < 1e-9 && (gv - 2.0).abs() < 1e-9;

    let mut worst = 0.0f64;
    let mut max_iters = 0;
    let mut errors = Vec::new();
    let starts: Vec<Option<Vec<f64>>> = vec![Some(vec![2.0, 2.0]), None, None, None];
    for (k, x0) in starts.into_iter().enumerate() {
        let mut cfg = RunConfig::for_benchmark("bilinear-floor");
        cfg.nova.step = StepConfig::DiminishingRecursive { gamma0: 1.0, eps: 0.1 };
        cfg.nova.stop_tol = 1e-9;
        cfg.nova.max_outer = 500;
        cfg.dual.rule = DualRuleKind::Bisection;
        cfg.x0 = x0;
        cfg.seed = 50 + k as u64;
        match cfg.prepare().and_then(|r| r.run(&mut NoObserver)) {
            Ok(out) => {
                let d = ((out.point[0] - target[0]).powi(2) + (out.point[1] - target[1]).powi(2)).sqrt();
                worst = worst.max(d);
                max_iters = max_iters.max(out.trace.len());
            }
            Err(e) => errors.push(e.to_string()),
        }
    }
    let secs = started.elapsed().as_secs_f64();
    verdict(
        grid_ok && errors.is_empty() && worst <= 1e-3 && max_iters <= 500 && secs < 5.0,
        format!(
            "grid best {gx:?} U = {gv:.6}; worst ‖x − (1,1)‖ = {worst:.2e} within {max_iters} iterations, {secs:.2} s{}",
            error_suffix(&errors)
        ),
    )
}

fn criterion_5(runs: &Runs) -> Verdict {
    let mut worst = 0.0f64;
    let mut stationary = 0;
    for (id, _, out) in &runs.outcomes {
        if out.status != NovaStatus::Stationary {
            continue;
        }
        stationary += 1;
        let problem = build_benchmark(id, &serde_json::Value::Null).unwrap().problem;
        let r = kkt_residual_original(&problem, &out.point, &out.multipliers).unwrap_or(f64::INFINITY);
        worst = worst.max(r).max(out.final_kkt);
    }
    verdict(
        stationary == runs.outcomes.len() && stationary > 0 && worst <= 1e-5,
        format!("{stationary}/{} runs stationary, worst KKT residual = {worst:.2e}", runs.outcomes.len()),
    )
}

fn p3_subproblem(seed: u64) -> Subproblem {
    let run = RunConfig::for_benchmark("shared-budget").prepare().unwrap();
    let y = run.problem.sample_feasible_point(seed, 100_000).unwrap();
    Subproblem::from_plan(&run.plan, &y).unwrap()
}

fn criterion_6() -> Verdict {
    let sub = p3_subproblem(606);
    let system = BlockSystem::from_subproblem(&sub, true).unwrap();
    let m = system.num_constraints;
    let starts: Vec<Vec<f64>> = system
        .blocks
        .iter()
        .map(|b| sub.anchor[b.range.clone()].to_vec())
        .collect();
    let eval = |l: &[f64]| evaluate_dual(&system, l, &starts, 1e-14, 1_000_000).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let h = 1e-6;
    let mut worst_fd = 0.0f64;
    for _ in 0..20 {
        let lambda: Vec<f64> = (0..m).map(|_| rng.random_range(0.01..2.0)).collect();
        let g = eval(&lambda).gradient;
        let fd: Vec<f64> = (0..m)
            .map(|j| {
                let mut up = lambda.clone();
                let mut down = lambda.clone();
                up[j] += h;
                down[j] -= h;
                (eval(&up).value - eval(&down).value) / (2.0 * h)
            })
            .collect();
        let err = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = g.iter().map(|a| a * a).sum::<f64>().sqrt().max(1.0);
        worst_fd = worst_fd.max(err / scale);
    }

    // Jacobian of the shared models by central differences at sampled
    // points, as an independent lower bound on the map's Lipschitz constant.
    let l_est = system.estimate_constraint_lipschitz(64, 0);
    let mut l_seen = 0.0f64;
    for _ in 0..32 {
        let x = sub.set.sample(&mut rng);
        let mut frob = 0.0;
        for c in &sub.constraints {
            for k in 0..x.len() {
                let mut up = x.clone();
                let mut down = x.clone();
                up[k] += 1e-6;
                down[k] -= 1e-6;
                frob += ((c.func.value(&up) - c.func.value(&down)) / 2e-6).powi(2);
            }
        }
        l_seen = l_seen.max(frob.sqrt());
    }
    let bound = dual_lipschitz_constant(l_est, m, system.strong_convexity).unwrap();
    let mut worst_ratio = 0.0f64;
    for _ in 0..100 {
        let a: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..3.0)).collect();
        let b: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..3.0)).collect();
        let ga = eval(&a).gradient;
        let gb = eval(&b).gradient;
        let num = ga.iter().zip(&gb).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let den = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        if den > 0.0 {
            worst_ratio = worst_ratio.max(num / den);
        }
    }
    verdict(
        worst_fd <= 1e-4 && worst_ratio <= bound + 1e-6 && l_est >= l_seen,
        format!(
            "worst FD relative error = {worst_fd:.2e}; worst Lipschitz ratio = {worst_ratio:.4} vs bound {bound:.4} \
             (L_g = {l_est:.4}, sampled Jacobian norm {l_seen:.4})"
        ),
    )
}

fn criterion_7() -> Verdict {
    let started = Instant::now();
    let mut worst_dist = 0.0f64;
    let mut worst_gap = 0.0f64;
    let mut worst_shared = f64::NEG_INFINITY;
    let mut errors = Vec::new();
    for k in 0..10 {
        let sub = p3_subproblem(700 + k);
        let system = BlockSystem::from_subproblem(&sub, true).unwrap();
        let opts = DualOptions::default();
        let dual = resolve_rule(&system, &opts).and_then(|r| dual_solve(&system, &r, &opts, None, &mut NoObserver));
        let mut central_opts = SolveOptions::default();
        central_opts.inner.method = InnerMethod::ProjectedGradient;
        central_opts.inner.tol = 1e-10;
        let central = solve_subproblem(&sub, &central_opts, &mut WarmStart::default(), &mut NoObserver);
        let primal = primal_solve(&sub, &PrimalOptions::default(), &opts, &mut NoObserver);
        match (dual, central, primal) {
            (Ok(d), Ok(c), Ok(p)) => {
                let dist = d.point.iter().zip(&c.point).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                worst_dist = worst_dist.max(dist);
                let dual_opt = *d.dual_values.last().unwrap();
                let primal_obj = sub.objective.func.value(&p.point);
                worst_gap = worst_gap.max((primal_obj - dual_opt).abs());
                for s in &p.shared_history {
                    for v in s {
                        worst_shared = worst_shared.max(*v);
                    }
                }
                for v in sub.model_values(&p.point) {
                    worst_shared = worst_shared.max(v);
                }
            }
            (d, c, p) => {
                for e in [d.err(), c.err(), p.err()].into_iter().flatten() {
                    errors.push(format!("anchor {k}: {e}"));
                }
            }
        }
    }
    verdict(
        errors.is_empty() && worst_dist <= 1e-4 && worst_gap <= 1e-3 && worst_shared <= 1e-12,
        format!(
            "10 anchors: worst ‖dual − centralized‖ = {worst_dist:.2e}, worst |primal − dual optimum| = {worst_gap:.2e}, \
             max shared model value over master rounds = {worst_shared:.2e}, {:.2} s{}",
            started.elapsed().as_secs_f64(),
            error_suffix(&errors)
        ),
    )
}

fn criterion_8() -> Verdict {
    let mut checked = 0;
    let mut failures = Vec::new();
    for entry in registry() {
        let bench = build_benchmark(entry.id, &serde_json::Value::Null).unwrap();
        let mut recipes = vec![("default".to_string(), bench.surrogate.clone())];
        recipes.extend(bench.variants.clone());
        for seed in 0..2u64 {
            let anchor = bench.problem.sample_feasible_point(800 + seed, 100_000).unwrap();
            for (name, recipe) in &recipes {
                let built = SurrogatePlan::new(&bench.problem, recipe).and_then(|plan| plan.build(&anchor));
                match built {
                    Ok((obj, cons)) => {
                        let report = verify_surrogate(&bench.problem, Some(&obj), &cons, 10_000, seed);
                        checked += 1;
                        if !report.passed() {
                            let codes: Vec<&str> = report.failures().map(|c| c.property.code()).collect();
                            failures.push(format!("{}/{name}: {}", entry.id, codes.join(",")));
                        }
                    }
                    Err(e) => failures.push(format!("{}/{name}: {e}", entry.id)),
                }
            }
        }
    }

    // Negative control: the quadratic model of sin on [0, 2π] with half the
    // true curvature bound, anchored where sin is most convex.
    let sine = ProblemSpec::new(
        "sine",
        Expr::squared_distance(vec![PI]).compile(1).unwrap(),
        vec![Expr::Sin {
            a: vec![1.0],
            b: 0.0,
            weight: 1.0,
        }
        .compile(1)
        .unwrap()],
        ConvexSet::Box {
            lower: vec![0.0],
            upper: vec![2.0 * PI],
        },
    )
    .unwrap();
    let corrupted = lipschitz_quadratic_surrogate(&sine.constraints[0], 0.5, &[1.5 * PI]).unwrap();
    let report = verify_surrogate(&sine, None, &[corrupted], 10_000, 8);
    let c3 = report.find(Property::UpperBound, Target::Constraint(0));
    let control_fails = c3.is_some_and(|c| !c.passed);
    verdict(
        failures.is_empty() && control_fails && checked > 0,
        format!(
            "{checked} model/anchor pairs verified, {} failures; corrupted model C3 {}{}",
            failures.len(),
            if control_fails { "fails as expected" } else { "did not fail" },
            if failures.is_empty() { String::new() } else { format!(": {}", failures.join(" | ")) }
        ),
    )
}

fn criterion_9() -> Verdict {
    let s = StepSchedule::new(StepConfig::DiminishingRecursive { gamma0: 1.0, eps: 0.5 }, None, 1.0).unwrap();
    let g1 = step_next(&s, 1, s.initial());
    let g2 = step_next(&s, 2, g1);
    let exact = g1 == 0.5 && g2 == 0.375;
    let mut ratios = Vec::new();
    for eps in [0.5, 0.1, 0.01] {
        let s = StepSchedule::new(StepConfig::DiminishingRecursive { gamma0: 1.0, eps }, None, 1.0).unwrap();
        let mut g = s.initial();
        // independent recursion alongside the library one
        let mut oracle = 1.0f64;
        for nu in 1..=10_000 {
            g = step_next(&s, nu, g);
            oracle *= 1.0 - eps * oracle;
        }
        if g != oracle {
            return verdict(false, format!("library step {g} differs from the recursion {oracle} at eps {eps}"));
        }
        ratios.push((eps, 10_000.0 * g * eps));
    }
    let within = ratios.iter().all(|(_, r)| (r - 1.0).abs() <= 0.2);
    verdict(
        exact && within,
        format!("gamma1 = {g1}, gamma2 = {g2}; nu·gamma·eps at 1e4: {ratios:?}"),
    )
}

fn trace_bytes(cfg: &RunConfig, threads: usize, format: TraceFormat) -> Result<Vec<u8>, String> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| e.to_string())?;
    let out = pool
        .install(|| cfg.prepare().and_then(|r| r.run(&mut NoObserver)))
        .map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("trace");
    write_trace(&out.trace, &path, format).map_err(|e| e.to_string())?;
    std::fs::read(&path).map_err(|e| e.to_string())
}

fn criterion_10() -> Verdict {
    let mut configs = Vec::new();
    for id in PROBLEMS {
        configs.push(constant_config(id, 42));
    }
    let mut primal = constant_config("shared-budget", 43);
    primal.inner.method = InnerMethod::PrimalDecomposition;
    configs.push(primal);
    let mut diminishing = RunConfig::for_benchmark("product-floor");
    diminishing.seed = 44;
    configs.push(diminishing);

    let mut compared = 0;
    let mut mismatches = Vec::new();
    for cfg in &configs {
        let id = match &cfg.problem {
            nova_core::bench::ProblemRef::Registry(r) => r.id.clone(),
            nova_core::bench::ProblemRef::Custom(_) => "custom".into(),
        };
        for format in [TraceFormat::Csv, TraceFormat::Json] {
            let runs: Vec<Result<Vec<u8>, String>> =
                [1, 1, 4, 8].iter().map(|&t| trace_bytes(cfg, t, format)).collect();
            match &runs[0] {
                Ok(first) => {
                    for (k, r) in runs.iter().enumerate().skip(1) {
                        compared += 1;
                        if r.as_ref() != Ok(first) {
                            mismatches.push(format!("{id} {format:?} run {k}"));
                        }
                    }
                }
                Err(e) => mismatches.push(format!("{id}: {e}")),
            }
        }
    }
    verdict(
        mismatches.is_empty(),
        format!(
            "{compared} trace comparisons across 1, 4 and 8 worker threads, {} mismatches{}",
            mismatches.len(),
            if mismatches.is_empty() { String::new() } else { format!(": {}", mismatches.join(", ")) }
        ),
    )
}

fn main() {
    let runs = multi_start_runs();
    let results = [
        ("1 iterate feasibility", criterion_1(&runs)),
        ("2 descent inequality", criterion_2(&runs)),
        ("3 constant-step decrease", criterion_3(&runs)),
        ("4 convergence to the known optimum", criterion_4()),
        ("5 stationarity certificate", criterion_5(&runs)),
        ("6 dual gradient and Lipschitz bound", criterion_6()),
        ("7 centralized and distributed agreement", criterion_7()),
        ("8 surrogate contracts", criterion_8()),
        ("9 step schedule", criterion_9()),
        ("10 determinism", criterion_10()),
    ];
    let mut failed = 0;
    for (name, v) in &results {
        println!("{} [{name}] {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        if !v.pass {
            failed += 1;
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

//! Primal decomposition: the shared constraints are split into per-block
//! slack budgets `t_i` with `Σ_i t_i ≤ 0`, every block solves its own
//! constrained problem, and a master loop moves the budgets along the
//! block multipliers. Every assembled point satisfies the shared models.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dual::{self, Block, BlockSystem, DualOptions, DualRuleKind, DualStepRule};
use crate::error::{Error, Result};
use crate::inner::{restore_feasibility, NoObserver, RoundObserver, Subproblem};
use crate::linalg::norm;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrimalOptions {
    /// Master step `β^n = beta0 / (n + 1)`.
    pub beta0: f64,
    /// Stop when `‖t^{n+1} − t^n‖ ≤ tol · (1 + ‖t^n‖)`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PrimalOptions {
    fn default() -> Self {
        Self {
            beta0: 10.0,
            tol: 1e-7,
            max_iter: 20_000,
        }
    }
}

/// Per-block budgets, `t[i][j]` for block `i` and shared constraint `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlackAllocation {
    pub t: Vec<Vec<f64>>,
}

impl SlackAllocation {
    /// Largest column sum `max_j Σ_i t_ij`.
    pub fn max_total(&self) -> f64 {
        let m = self.t.first().map_or(0, |v| v.len());
        (0..m)
            .map(|j| self.t.iter().map(|ti| ti[j]).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_feasible(&self, tol: f64) -> bool {
        self.t.is_empty() || self.max_total() <= tol
    }

    fn flat_norm(&self) -> f64 {
        self.t.iter().map(|v| crate::linalg::norm_sq(v)).sum::<f64>().sqrt()
    }
}

/// Euclidean projection onto `{t : Σ_i t_i ≤ 0}`, one coordinate `j` at a
/// time: any positive excess is removed equally from every block.
pub fn project_master(t: &SlackAllocation) -> SlackAllocation {
    let count = t.t.len() as f64;
    let m = t.t.first().map_or(0, |v| v.len());
    let mut out = t.clone();
    for j in 0..m {
        let total: f64 = t.t.iter().map(|ti| ti[j]).sum();
        if total > 0.0 {
            let shift = total / count;
            for ti in &mut out.t {
                ti[j] -= shift;
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockPrimalSolution {
    pub point: Vec<f64>,
    pub multipliers: Vec<f64>,
    /// `Ũ_i(x_i*)`.
    pub objective: f64,
    pub iterations: usize,
}

/// Partial subgradient of the master objective: `−μ_i` for every block.
pub fn master_subgradient(blocks: &[BlockPrimalSolution]) -> Vec<Vec<f64>> {
    blocks
        .iter()
        .map(|b| b.multipliers.iter().map(|m| -m).collect())
        .collect()
}

/// `min Ũ_i(x_i)` over `K_i` subject to `g̃^i(x_i) ≤ t_i`, solved by a
/// single-block dual ascent.
pub fn block_subproblem(
    index: usize,
    block: &Block,
    anchor: &[f64],
    t_i: &[f64],
    rule: &DualStepRule,
    dual_opts: &DualOptions,
    lambda0: Option<&[f64]>,
) -> Result<BlockPrimalSolution> {
    let mut b = block.clone();
    b.range = 0..anchor.len();
    b.rhs = t_i.to_vec();
    let system = BlockSystem {
        num_constraints: b.constraints.len(),
        blocks: vec![b],
        dim: anchor.len(),
        strong_convexity: 1.0,
        anchor: anchor.to_vec(),
    };
    let out = dual::dual_solve(&system, rule, dual_opts, lambda0, &mut NoObserver).map_err(|e| match e {
        Error::Infeasible(msg) => Error::Infeasible(format!("block {index}: {msg}")),
        other => other,
    })?;
    let objective = system.blocks[0].objective.value(&out.point);
    Ok(BlockPrimalSolution {
        point: out.point,
        multipliers: out.lambda,
        objective,
        iterations: out.rounds,
    })
}

#[derive(Debug, Clone)]
pub struct PrimalOutcome {
    pub point: Vec<f64>,
    /// Mean of the block multipliers.
    pub multipliers: Vec<f64>,
    pub rounds: usize,
    pub slacks: SlackAllocation,
    /// `Σ_i Ũ_i(x_i*(t^n))` at every master round.
    pub objective_history: Vec<f64>,
    /// Shared model values `Σ_i g̃^i(x_i*(t^n))` at every master round.
    pub shared_history: Vec<Vec<f64>>,
}

const PRECHECK_SAMPLES: usize = 16;
const MAX_HALVINGS: usize = 40;

/// Solve `sub` by primal decomposition. Requires every model to split
/// across the block partition.
pub fn primal_solve(
    sub: &Subproblem,
    opts: &PrimalOptions,
    dual_opts: &DualOptions,
    observer: &mut dyn RoundObserver,
) -> Result<PrimalOutcome> {
    if !(opts.beta0 > 0.0) || !(opts.tol > 0.0) {
        return Err(Error::Parameter("primal.beta0 and primal.tol must be positive".into()));
    }
    if !sub.is_separable() {
        return Err(Error::Config(format!(
            "primal decomposition needs separable models; not separable: {}",
            sub.non_separable_labels().join(", ")
        )));
    }
    let system = BlockSystem::from_subproblem(sub, true)?;
    let m = system.num_constraints;
    let count = system.blocks.len();
    let anchors: Vec<Vec<f64>> = system
        .blocks
        .iter()
        .map(|b| sub.anchor[b.range.clone()].to_vec())
        .collect();
    let rules = system
        .blocks
        .iter()
        .zip(&anchors)
        .map(|(b, a)| block_rule(b, a, sub.strong_convexity(), dual_opts))
        .collect::<Result<Vec<_>>>()?;

    let mut t = SlackAllocation {
        t: system
            .blocks
            .iter()
            .zip(&anchors)
            .map(|(b, a)| b.constraints.iter().map(|g| g.value(a)).collect())
            .collect(),
    };
    // The anchor may violate the shared models by up to the feasibility
    // tolerance; remove that excess so the budgets start feasible.
    t = project_master(&t);

    let solve_all = |t: &SlackAllocation, warm: &[Option<Vec<f64>>]| -> Result<Vec<BlockPrimalSolution>> {
        (0..count)
            .map(|i| {
                block_subproblem(
                    i,
                    &system.blocks[i],
                    &anchors[i],
                    &t.t[i],
                    &rules[i],
                    dual_opts,
                    warm[i].as_deref(),
                )
            })
            .collect()
    };

    let mut warm: Vec<Option<Vec<f64>>> = vec![None; count];
    let mut sols = solve_all(&t, &warm)?;
    let mut objective_history = Vec::new();
    let mut shared_history = Vec::new();
    let mut record = |round: usize, t: &SlackAllocation, sols: &[BlockPrimalSolution], observer: &mut dyn RoundObserver| {
        let shared = shared_values(&system, sols);
        objective_history.push(sols.iter().map(|s| s.objective).sum());
        let work: Vec<usize> = sols.iter().map(|s| s.iterations).collect();
        observer.master_round(round, &t.t, &work, &shared);
        shared_history.push(shared);
    };
    record(0, &t, &sols, observer);

    let mut rounds = 1;
    let mut converged = m == 0;
    for n in 0..opts.max_iter {
        if converged {
            break;
        }
        let mut beta = opts.beta0 / (n as f64 + 1.0);
        let mut next = None;
        for attempt in 0..=MAX_HALVINGS {
            let candidate = project_master(&SlackAllocation {
                t: t.t
                    .iter()
                    .zip(&sols)
                    .map(|(ti, s)| ti.iter().zip(&s.multipliers).map(|(a, mu)| a + beta * mu).collect())
                    .collect(),
            });
            let seed = (n * (MAX_HALVINGS + 1) + attempt) as u64;
            if budgets_admissible(&system, &anchors, &sols, &candidate, seed) {
                next = Some(candidate);
                break;
            }
            beta *= 0.5;
        }
        let Some(next) = next else {
            converged = true;
            break;
        };
        let moved = {
            let diff = SlackAllocation {
                t: next
                    .t
                    .iter()
                    .zip(&t.t)
                    .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
                    .collect(),
            };
            diff.flat_norm()
        };
        let scale = 1.0 + t.flat_norm();
        for (w, s) in warm.iter_mut().zip(&sols) {
            *w = Some(s.multipliers.clone());
        }
        t = next;
        sols = solve_all(&t, &warm)?;
        record(rounds, &t, &sols, observer);
        rounds += 1;
        if moved <= opts.tol * scale {
            converged = true;
        }
    }
    let parts: Vec<Vec<f64>> = sols.iter().map(|s| s.point.clone()).collect();
    let assembled = system.assemble(&parts);
    if !converged {
        return Err(Error::convergence(
            format!("master loop did not settle in {} rounds", opts.max_iter),
            Some(assembled),
        ));
    }
    let mut multipliers = vec![0.0; m];
    for s in &sols {
        for (acc, mu) in multipliers.iter_mut().zip(&s.multipliers) {
            *acc += mu / count as f64;
        }
    }
    Ok(PrimalOutcome {
        point: restore_feasibility(sub, &assembled),
        multipliers,
        rounds,
        slacks: t,
        objective_history,
        shared_history,
    })
}

fn shared_values(system: &BlockSystem, sols: &[BlockPrimalSolution]) -> Vec<f64> {
    let mut out = vec![0.0; system.num_constraints];
    for (b, s) in system.blocks.iter().zip(sols) {
        for (acc, g) in out.iter_mut().zip(&b.constraints) {
            *acc += g.value(&s.point);
        }
    }
    out
}

fn block_rule(block: &Block, anchor: &[f64], c: f64, dual_opts: &DualOptions) -> Result<DualStepRule> {
    let m = block.constraints.len();
    let mut local = block.clone();
    local.range = 0..anchor.len();
    let system = BlockSystem {
        blocks: vec![local],
        dim: anchor.len(),
        num_constraints: m,
        strong_convexity: c,
        anchor: anchor.to_vec(),
    };
    let mut opts = dual_opts.clone();
    opts.rule = if m <= dual::NESTED_BISECTION_MAX {
        DualRuleKind::Bisection
    } else {
        DualRuleKind::ConstantRange
    };
    opts.alpha0 = None;
    dual::resolve_rule(&system, &opts)
}

/// Sampled check that every block keeps a strictly feasible point under
/// the new budgets: the previous block solution, the anchor block, then a
/// few seeded samples of the block set.
fn budgets_admissible(
    system: &BlockSystem,
    anchors: &[Vec<f64>],
    sols: &[BlockPrimalSolution],
    t: &SlackAllocation,
    seed: u64,
) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    system.blocks.iter().enumerate().all(|(i, b)| {
        let strict = |z: &[f64]| b.constraints.iter().zip(&t.t[i]).all(|(g, ti)| g.value(z) < *ti);
        strict(&sols[i].point)
            || strict(&anchors[i])
            || (0..PRECHECK_SAMPLES).any(|_| strict(&b.set.sample(&mut rng)))
    })
}

/// Norm of the master step that `t` would take with all multipliers.
pub fn master_step_norm(t: &SlackAllocation, sols: &[BlockPrimalSolution], beta: f64) -> f64 {
    let next = project_master(&SlackAllocation {
        t: t.t
            .iter()
            .zip(sols)
            .map(|(ti, s)| ti.iter().zip(&s.multipliers).map(|(a, mu)| a + beta * mu).collect())
            .collect(),
    });
    let diff: Vec<f64> = next
        .t
        .iter()
        .zip(&t.t)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y))
        .collect();
    norm(&diff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::set::ConvexSet;

    fn alloc(t: Vec<Vec<f64>>) -> SlackAllocation {
        SlackAllocation { t }
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_master(&alloc(vec![vec![1.0], vec![1.0]])).t, vec![vec![0.0], vec![0.0]]);
        let inside = alloc(vec![vec![-1.0], vec![0.5]]);
        assert_eq!(project_master(&inside), inside);
        assert_eq!(
            project_master(&alloc(vec![vec![3.0], vec![0.0], vec![0.0]])).t,
            vec![vec![2.0], vec![-1.0], vec![-1.0]]
        );
    }

    #[test]
    fn subgradient_examples() {
        let sol = |mu: f64| BlockPrimalSolution {
            point: vec![0.0],
            multipliers: vec![mu],
            objective: 0.0,
            iterations: 0,
        };
        assert_eq!(master_subgradient(&[sol(0.0)]), vec![vec![-0.0]]);
        assert_eq!(master_subgradient(&[sol(2.0), sol(0.0)]), vec![vec![-2.0], vec![-0.0]]);
        // the master step raises block 1's budget and lowers block 2's
        let t = alloc(vec![vec![0.0], vec![0.0]]);
        let next = project_master(&alloc(vec![vec![2.0], vec![0.0]]));
        assert!(next.t[0][0] > t.t[0][0] && next.t[1][0] < t.t[1][0]);
        assert!(master_step_norm(&t, &[sol(2.0), sol(0.0)], 1.0) > 0.0);
    }

    fn scalar_block() -> Block {
        let set = ConvexSet::Box {
            lower: vec![0.0],
            upper: vec![10.0],
        };
        Block {
            range: 0..1,
            objective: Expr::SquaredDistance {
                center: vec![3.0],
                weight: 0.5,
                coords: None,
            }
            .compile(1)
            .unwrap(),
            constraints: vec![Expr::Linear {
                coef: vec![1.0],
                constant: 0.0,
            }
            .compile(1)
            .unwrap()],
            rhs: vec![0.0],
            set,
        }
    }

    #[test]
    fn block_subproblem_examples() {
        let b = scalar_block();
        let opts = DualOptions::default();
        let s = block_subproblem(0, &b, &[1.0], &[2.0], &DualStepRule::Bisection, &opts, None).unwrap();
        assert!((s.point[0] - 2.0).abs() < 1e-9);
        assert!((s.multipliers[0] - 1.0).abs() < 1e-8);
        let s = block_subproblem(0, &b, &[1.0], &[1e6], &DualStepRule::Bisection, &opts, None).unwrap();
        assert!((s.point[0] - 3.0).abs() < 1e-9);
        assert_eq!(s.multipliers[0], 0.0);
        let s = block_subproblem(0, &b, &[1.0], &[3.0], &DualStepRule::Bisection, &opts, None).unwrap();
        assert!((s.point[0] - 3.0).abs() < 1e-9);
        assert_eq!(s.multipliers[0], 0.0);
        let err = block_subproblem(3, &b, &[1.0], &[-1.0], &DualStepRule::Bisection, &opts, None).unwrap_err();
        assert!(err.to_string().contains("block 3"), "{err}");
    }

    #[test]
    fn slack_feasibility() {
        assert!(alloc(vec![vec![-1.0], vec![1.0]]).is_feasible(1e-12));
        assert!(!alloc(vec![vec![0.5], vec![0.0]]).is_feasible(1e-12));
    }
}

//! Simulated multi-agent execution of the distributed inner solvers.
//!
//! Each agent owns one block. The harness runs the ordinary outer loop and
//! only observes the inner rounds: it counts messages and payload floats,
//! records per-agent work and draws artificial latencies. Numerical results
//! are exactly those of a direct run with the same method.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inner::{InnerMethod, RoundObserver, SolveOptions};
use crate::nova::{nova_run, NovaConfig, NovaOutcome};
use crate::surrogate::SurrogatePlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyKind {
    /// A cluster head aggregates block values and broadcasts the update.
    #[default]
    ClusterHead,
    /// Every agent exchanges its values with every other agent; the
    /// aggregate itself is computed exactly.
    FullyDecentralizedStub,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub kind: TopologyKind,
    pub agents: usize,
    /// Seed for the simulated latencies.
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimMode {
    Dual,
    Primal,
}

impl SimMode {
    pub fn method(self) -> InnerMethod {
        match self {
            SimMode::Dual => InnerMethod::DualAscent,
            SimMode::Primal => InnerMethod::PrimalDecomposition,
        }
    }
}

/// Messages and payload floats of one round with `m` shared constraints.
///
/// Cluster head, dual: one broadcast of `λ` plus one upstream message per
/// agent, `(I + 1)` messages carrying `m` floats each. Cluster head,
/// primal: each agent receives its budget `t_i` and returns `μ_i`, `2I`
/// messages of `m` floats. The decentralized stub sends `I(I − 1)`
/// messages of `m` floats. A single agent exchanges nothing.
pub fn round_messages(kind: TopologyKind, mode: SimMode, agents: usize, m: usize) -> (usize, usize) {
    if agents <= 1 {
        return (0, 0);
    }
    let messages = match (kind, mode) {
        (TopologyKind::ClusterHead, SimMode::Dual) => agents + 1,
        (TopologyKind::ClusterHead, SimMode::Primal) => 2 * agents,
        (TopologyKind::FullyDecentralizedStub, _) => agents * (agents - 1),
    };
    (messages, messages * m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub outer: usize,
    pub round: usize,
    pub messages: usize,
    pub payload_floats: usize,
    /// Inner iterations spent by each agent.
    pub agent_work: Vec<usize>,
    /// Simulated duration of the round (slowest agent).
    pub latency_ms: f64,
    /// `λ` (dual mode) or the flattened budgets `t` (primal mode).
    pub snapshot: Vec<f64>,
    /// Shared model values at the assembled point (primal mode).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shared: Option<Vec<f64>>,
}

struct Recorder {
    topo: Topology,
    mode: SimMode,
    m: usize,
    outer: usize,
    rng: ChaCha8Rng,
    log: Vec<RoundLog>,
}

impl Recorder {
    fn push(&mut self, round: usize, work: &[usize], snapshot: Vec<f64>, shared: Option<Vec<f64>>) {
        let (messages, payload_floats) = round_messages(self.topo.kind, self.mode, self.topo.agents, self.m);
        let latency_ms = (0..self.topo.agents)
            .map(|_| self.rng.random_range(1.0..5.0))
            .fold(0.0, f64::max);
        self.log.push(RoundLog {
            outer: self.outer,
            round,
            messages,
            payload_floats,
            agent_work: work.to_vec(),
            latency_ms,
            snapshot,
            shared,
        });
    }
}

impl RoundObserver for Recorder {
    fn outer_iteration(&mut self, nu: usize, _x: &[f64]) {
        self.outer = nu;
    }
    fn dual_round(&mut self, round: usize, lambda: &[f64], block_work: &[usize]) {
        if self.mode == SimMode::Dual {
            self.push(round, block_work, lambda.to_vec(), None);
        }
    }
    fn master_round(&mut self, round: usize, slacks: &[Vec<f64>], block_work: &[usize], shared: &[f64]) {
        let flat = slacks.iter().flatten().copied().collect();
        self.push(round, block_work, flat, Some(shared.to_vec()));
    }
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub run: NovaOutcome,
    pub rounds: Vec<RoundLog>,
    pub total_messages: usize,
    pub total_floats: usize,
    /// Sum of simulated round latencies.
    pub wall_rounds_ms: f64,
}

/// Run the outer loop with every inner solve executed as agent rounds.
pub fn run_distributed(
    plan: &SurrogatePlan,
    cfg: &NovaConfig,
    solve: &SolveOptions,
    mode: SimMode,
    topo: Topology,
    x0: &[f64],
) -> Result<SimOutcome> {
    let p = plan.problem();
    let blocks = p.blocks.as_ref().map_or(1, |b| b.len());
    if topo.agents != blocks {
        return Err(Error::Config(format!(
            "topology has {} agents but the problem has {blocks} blocks",
            topo.agents
        )));
    }
    if blocks > 1 {
        let offending = plan.non_separable(x0)?;
        if !offending.is_empty() {
            return Err(Error::Config(format!(
                "distributed execution needs separable models; not separable: {}",
                offending.join(", ")
            )));
        }
    }
    let mut opts = solve.clone();
    opts.inner.method = mode.method();
    let mut recorder = Recorder {
        topo,
        mode,
        m: p.num_constraints(),
        outer: 0,
        rng: ChaCha8Rng::seed_from_u64(topo.seed),
        log: Vec::new(),
    };
    let run = nova_run(plan, cfg, &opts, x0, &mut recorder)?;
    let rounds = recorder.log;
    Ok(SimOutcome {
        total_messages: rounds.iter().map(|r| r.messages).sum(),
        total_floats: rounds.iter().map(|r| r.payload_floats).sum(),
        wall_rounds_ms: rounds.iter().map(|r| r.latency_ms).sum(),
        run,
        rounds,
    })
}

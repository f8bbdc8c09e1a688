//! The gossip protocol variants as deterministic, seeded simulations.
//!
//! All variants minimize the weighted completion + consensus objective
//!
//! ```text
//! sum_i f_i(x_i) + (rho/2) * sum_edges d(x_i, x_k)^2
//! ```
//!
//! by pairwise Riemannian stochastic gradient steps. Per time slot exactly
//! one edge (or, in the parallel variant, one round of disjoint edges) is
//! active:
//!
//! - online: agents form a chain; slot t draws i <= N-1 uniformly and updates
//!   agents i and i+1 with stepsize gamma_t = gamma0/t. Interior agents are
//!   drawn twice as often as the endpoints, compensated by the weight
//!   alpha_i (1 at the ends, 0.5 inside).
//! - parallel: the chain's edges are split into two rounds (odd-origin and
//!   even-origin pairs); a slot draws a round and updates all its pairs with
//!   the same stepsize. Pairs within a round touch disjoint agents and may
//!   run concurrently; the stepsize clock ticks per round drawn.
//! - dynamic: the topology is the complete graph; a slot draws one of the
//!   N(N-1)/2 edges uniformly and updates both endpoints without alpha
//!   weights.
//!
//! The preconditioned variants right-scale the combined search direction by
//! `(W^T W + rho I)^{-1}` before the exponential map.
//!
//! Runs are driven by a single ChaCha stream consumed only at slot
//! boundaries, so an (agents, config, seed) triple fully determines the
//! trace.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::completion::{
    local_cost, precondition, riemannian_gradient, SparseObservations, WeightMatrix,
};
use crate::error::{Error, Result};
use crate::grassmann::{exp_map, geodesic_distance, log_map, SubspacePoint, TangentVector};
use crate::metrics::{self, RunTrace};

/// Which protocol a run executes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Online,
    PreconOnline,
    Parallel,
    PreconParallel,
    Dynamic,
}

impl Variant {
    pub fn preconditioned(self) -> bool {
        matches!(self, Variant::PreconOnline | Variant::PreconParallel)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Online => "online",
            Variant::PreconOnline => "precon-online",
            Variant::Parallel => "parallel",
            Variant::PreconParallel => "precon-parallel",
            Variant::Dynamic => "dynamic",
        }
    }
}

/// Run parameters. `trace_every` controls the recording cadence; slots 1 and
/// `max_slots` are always recorded.
#[derive(Clone, Debug)]
pub struct ProtocolConfig {
    pub rho: f64,
    pub gamma0: f64,
    pub reg: f64,
    pub max_slots: u64,
    pub variant: Variant,
    pub seed: u64,
    pub trace_every: u64,
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho.is_finite() && self.rho >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "rho must be finite and >= 0, got {}",
                self.rho
            )));
        }
        if !(self.gamma0.is_finite() && self.gamma0 > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "gamma0 must be finite and > 0, got {}",
                self.gamma0
            )));
        }
        if !(self.reg.is_finite() && self.reg >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "reg must be finite and >= 0, got {}",
                self.reg
            )));
        }
        if self.max_slots < 1 {
            return Err(Error::InvalidConfig("max_slots must be >= 1".into()));
        }
        if self.trace_every < 1 {
            return Err(Error::InvalidConfig("trace_every must be >= 1".into()));
        }
        Ok(())
    }
}

/// One agent: its subspace estimate, its column block of observations, the
/// held-out entries for test error, and bookkeeping.
#[derive(Clone, Debug)]
pub struct AgentState {
    pub id: usize,
    pub point: SubspacePoint,
    pub block: SparseObservations,
    pub heldout: SparseObservations,
    pub cached_weights: WeightMatrix,
    pub update_count: u64,
}

impl AgentState {
    pub fn new(
        id: usize,
        point: SubspacePoint,
        block: SparseObservations,
        heldout: SparseObservations,
    ) -> Result<Self> {
        if block.n_rows() != point.ambient_dim() || heldout.n_rows() != point.ambient_dim() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} rows", point.ambient_dim()),
                got: format!("{}/{} rows", block.n_rows(), heldout.n_rows()),
            });
        }
        if block.n_cols() != heldout.n_cols() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} cols", block.n_cols()),
                got: format!("{} cols", heldout.n_cols()),
            });
        }
        let cached_weights = WeightMatrix::zeros(block.n_cols(), point.subspace_dim());
        Ok(Self {
            id,
            point,
            block,
            heldout,
            cached_weights,
            update_count: 0,
        })
    }
}

/// Sampling compensation weight: 1 for the chain endpoints, 0.5 inside.
pub fn alpha(i: usize, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 agents, got {n}"
        )));
    }
    if i < 1 || i > n {
        return Err(Error::InvalidConfig(format!(
            "agent id {i} out of range 1..={n}"
        )));
    }
    Ok(if i == 1 || i == n { 1.0 } else { 0.5 })
}

/// Decreasing stepsize gamma0 / t (square-summable, not summable).
pub fn stepsize(t: u64, gamma0: f64) -> Result<f64> {
    if t == 0 {
        return Err(Error::InvalidConfig("slot index starts at 1".into()));
    }
    Ok(gamma0 / t as f64)
}

/// One gossip exchange between two agents.
///
/// Both gradients are evaluated at the current states before either agent
/// moves. Each agent's search direction is `alpha * grad f + rho * grad d`
/// with `grad d = -Log(self, other)`, optionally right-scaled by
/// `(W^T W + rho I)^{-1}`, and the step is `Exp(-gamma * direction)`.
/// Update counters increment even for gamma = 0.
#[allow(clippy::too_many_arguments)]
pub fn pair_update(
    a: &mut AgentState,
    b: &mut AgentState,
    gamma: f64,
    rho: f64,
    alpha_a: f64,
    alpha_b: f64,
    precond: bool,
    reg: f64,
) -> Result<()> {
    let log_ab = log_map(&a.point, &b.point)?;
    let log_ba = log_map(&b.point, &a.point)?;
    let (grad_a, w_a) = riemannian_gradient(&a.point, &a.block, reg)?;
    let (grad_b, w_b) = riemannian_gradient(&b.point, &b.block, reg)?;

    let dir_a = search_direction(&grad_a, &log_ab, alpha_a, rho, precond, &w_a)?;
    let dir_b = search_direction(&grad_b, &log_ba, alpha_b, rho, precond, &w_b)?;

    let new_a = exp_map(&a.point, &dir_a, -gamma)?;
    let new_b = exp_map(&b.point, &dir_b, -gamma)?;

    a.point = new_a;
    a.cached_weights = w_a;
    a.update_count += 1;
    b.point = new_b;
    b.cached_weights = w_b;
    b.update_count += 1;
    Ok(())
}

fn search_direction(
    grad_f: &TangentVector,
    log_toward: &TangentVector,
    alpha: f64,
    rho: f64,
    precond: bool,
    weights: &WeightMatrix,
) -> Result<TangentVector> {
    // grad d = -Log, so alpha*grad f + rho*grad d = alpha*grad f - rho*Log.
    let mut dir = TangentVector {
        direction: &grad_f.direction * alpha - &log_toward.direction * rho,
    };
    if precond {
        dir = precondition(&dir, weights, rho)?;
    }
    if dir.direction.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "search direction".into(),
        });
    }
    Ok(dir)
}

/// Chain edges (i, i+1) as 1-based agent id pairs.
pub fn chain_pairs(n: usize) -> Vec<(usize, usize)> {
    (1..n).map(|i| (i, i + 1)).collect()
}

/// All unordered pairs, lexicographic, as 1-based agent id pairs.
pub fn all_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    for i in 1..=n {
        for k in (i + 1)..=n {
            pairs.push((i, k));
        }
    }
    pairs
}

/// The two parallel rounds: pairs starting at odd chain positions and pairs
/// starting at even positions. For n = 5: round 1 is (1,2),(3,4) and round 2
/// is (2,3),(4,5).
pub fn parallel_rounds(n: usize) -> [Vec<(usize, usize)>; 2] {
    let round1 = (1..n).step_by(2).map(|i| (i, i + 1)).collect();
    let round2 = (2..n).step_by(2).map(|i| (i, i + 1)).collect();
    [round1, round2]
}

fn validate_agents(agents: &[AgentState], min_n: usize) -> Result<()> {
    let n = agents.len();
    if n < min_n {
        return Err(Error::InvalidConfig(format!(
            "need at least {min_n} agents, got {n}"
        )));
    }
    let m = agents[0].point.ambient_dim();
    let r = agents[0].point.subspace_dim();
    for (idx, agent) in agents.iter().enumerate() {
        if agent.id != idx + 1 {
            return Err(Error::InvalidConfig(format!(
                "agent ids must be 1..={n} in order; index {idx} has id {}",
                agent.id
            )));
        }
        if agent.point.ambient_dim() != m || agent.point.subspace_dim() != r {
            return Err(Error::InvalidConfig(
                "all agents must share manifold dimensions".into(),
            ));
        }
    }
    Ok(())
}

fn should_record(t: u64, config: &ProtocolConfig) -> bool {
    t == 1 || t == config.max_slots || t.is_multiple_of(config.trace_every)
}

/// Online chain gossip (plain or preconditioned).
pub fn run_online(agents: &mut [AgentState], config: &ProtocolConfig) -> Result<RunTrace> {
    config.validate()?;
    if !matches!(config.variant, Variant::Online | Variant::PreconOnline) {
        return Err(Error::InvalidConfig(format!(
            "run_online cannot execute variant {}",
            config.variant.name()
        )));
    }
    validate_agents(agents, 2)?;
    let n = agents.len();
    let precond = config.variant.preconditioned();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trace = RunTrace::new(n, chain_pairs(n));

    for t in 1..=config.max_slots {
        let edge = rng.random_range(0..n - 1);
        let gamma = stepsize(t, config.gamma0)?;
        let (left, right) = agents.split_at_mut(edge + 1);
        let a = &mut left[edge];
        let b = &mut right[0];
        let result = pair_update(
            a,
            b,
            gamma,
            config.rho,
            alpha(edge + 1, n)?,
            alpha(edge + 2, n)?,
            precond,
            config.reg,
        );
        match result {
            Ok(()) => {}
            Err(Error::SingularOverlap { .. }) => trace.skipped += 1,
            Err(e) => return Err(e),
        }
        if should_record(t, config) {
            metrics::record(&mut trace, t, gamma, agents, config.reg)?;
        }
    }
    Ok(trace)
}

/// Parallel rounds over the chain (plain or preconditioned).
///
/// Pairs within the drawn round touch disjoint agents; with the `parallel`
/// feature they are updated concurrently, and the end-of-round state equals
/// sequential execution in any order.
pub fn run_parallel(agents: &mut [AgentState], config: &ProtocolConfig) -> Result<RunTrace> {
    config.validate()?;
    if !matches!(config.variant, Variant::Parallel | Variant::PreconParallel) {
        return Err(Error::InvalidConfig(format!(
            "run_parallel cannot execute variant {}",
            config.variant.name()
        )));
    }
    validate_agents(agents, 3)?;
    let n = agents.len();
    let precond = config.variant.preconditioned();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trace = RunTrace::new(n, chain_pairs(n));

    for t in 1..=config.max_slots {
        let round = rng.random_range(0..2usize);
        let gamma = stepsize(t, config.gamma0)?;
        let slice = &mut agents[round..];
        let rho = config.rho;
        let reg = config.reg;

        let update_chunk = |chunk: &mut [AgentState]| -> Result<bool> {
            if chunk.len() < 2 {
                return Ok(false);
            }
            let (left, right) = chunk.split_at_mut(1);
            let a = &mut left[0];
            let b = &mut right[0];
            let alpha_a = alpha(a.id, n)?;
            let alpha_b = alpha(b.id, n)?;
            match pair_update(a, b, gamma, rho, alpha_a, alpha_b, precond, reg) {
                Ok(()) => Ok(true),
                Err(Error::SingularOverlap { .. }) => Ok(false),
                Err(e) => Err(e),
            }
        };

        #[cfg(feature = "parallel")]
        let results: Vec<Result<bool>> = {
            use rayon::prelude::*;
            slice.par_chunks_mut(2).map(update_chunk).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let results: Vec<Result<bool>> = slice.chunks_mut(2).map(update_chunk).collect();

        let full_chunks = slice.len() / 2;
        let mut updated_pairs = 0usize;
        for res in results {
            if res? {
                updated_pairs += 1;
            }
        }
        trace.skipped += (full_chunks - updated_pairs) as u64;

        if should_record(t, config) {
            metrics::record(&mut trace, t, gamma, agents, config.reg)?;
        }
    }
    Ok(trace)
}

/// Continuously changing topology: one uniformly random edge of the complete
/// graph is active per slot; no alpha weights.
pub fn run_dynamic(agents: &mut [AgentState], config: &ProtocolConfig) -> Result<RunTrace> {
    config.validate()?;
    if config.variant != Variant::Dynamic {
        return Err(Error::InvalidConfig(format!(
            "run_dynamic cannot execute variant {}",
            config.variant.name()
        )));
    }
    validate_agents(agents, 2)?;
    let n = agents.len();
    let edges = all_pairs(n);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trace = RunTrace::new(n, edges.clone());

    for t in 1..=config.max_slots {
        let (i, k) = edges[rng.random_range(0..edges.len())];
        let gamma = stepsize(t, config.gamma0)?;
        let (left, right) = agents.split_at_mut(k - 1);
        let a = &mut left[i - 1];
        let b = &mut right[0];
        let result = pair_update(a, b, gamma, config.rho, 1.0, 1.0, false, config.reg);
        match result {
            Ok(()) => {}
            Err(Error::SingularOverlap { .. }) => trace.skipped += 1,
            Err(e) => return Err(e),
        }
        if should_record(t, config) {
            metrics::record(&mut trace, t, gamma, agents, config.reg)?;
        }
    }
    Ok(trace)
}

/// Dispatches to the runner matching `config.variant`.
pub fn run(agents: &mut [AgentState], config: &ProtocolConfig) -> Result<RunTrace> {
    match config.variant {
        Variant::Online | Variant::PreconOnline => run_online(agents, config),
        Variant::Parallel | Variant::PreconParallel => run_parallel(agents, config),
        Variant::Dynamic => run_dynamic(agents, config),
    }
}

/// Monitoring objective: completion costs plus weighted consensus terms over
/// the variant's edge set. The dynamic variant weighs the completion sum by
/// (N-1), matching its limit objective.
pub fn global_objective(
    agents: &[AgentState],
    rho: f64,
    reg: f64,
    variant: Variant,
) -> Result<f64> {
    let n = agents.len();
    let mut completion = 0.0;
    for agent in agents {
        completion += local_cost(&agent.point, &agent.block, reg)?;
    }
    let (edges, completion_weight) = match variant {
        Variant::Dynamic => (all_pairs(n), (n - 1) as f64),
        _ => (chain_pairs(n), 1.0),
    };
    let mut consensus = 0.0;
    for (i, k) in edges {
        let d = geodesic_distance(&agents[i - 1].point, &agents[k - 1].point)?;
        consensus += d * d;
    }
    Ok(completion_weight * completion + 0.5 * rho * consensus)
}

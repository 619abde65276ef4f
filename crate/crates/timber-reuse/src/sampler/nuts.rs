//! Core No-U-Turn transition: leapfrog integration, recursive trajectory
//! doubling with multinomial state selection, and the U-turn criterion.
//!
//! The trajectory doubles until it either turns back on itself, diverges
//! (energy error above [`MAX_ENERGY_ERROR`]), or reaches the depth limit.
//! States are weighted by `exp(h0 - h)`; within a subtree the proposal is a
//! plain multinomial draw, while across top-level doublings the fresh subtree
//! is favored with probability `min(1, w_new / w_old)`. At depth limit 0 this
//! collapses to a single leapfrog proposal with a Metropolis-style
//! correction.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::Target;

/// Energy-error threshold above which a trajectory is declared divergent.
pub const MAX_ENERGY_ERROR: f64 = 1000.0;

/// A point in phase space with its cached log density and gradient, so each
/// leapfrog step costs exactly one new gradient evaluation.
#[derive(Debug, Clone)]
pub struct PhasePoint {
    pub position: Vec<f64>,
    pub momentum: Vec<f64>,
    pub gradient: Vec<f64>,
    pub logp: f64,
}

impl PhasePoint {
    /// Evaluate the target at `position` and attach `momentum`.
    pub fn new<T: Target>(target: &mut T, position: Vec<f64>, momentum: Vec<f64>) -> PhasePoint {
        let mut gradient = vec![0.0; position.len()];
        let logp = target.logp_grad(&position, &mut gradient);
        PhasePoint {
            position,
            momentum,
            gradient,
            logp,
        }
    }
}

/// Kinetic energy under a diagonal inverse mass matrix (`inv_mass` holds the
/// per-coordinate variance estimates).
pub fn kinetic_energy(momentum: &[f64], inv_mass: &[f64]) -> f64 {
    0.5 * momentum
        .iter()
        .zip(inv_mass)
        .map(|(&p, &v)| v * p * p)
        .sum::<f64>()
}

/// Hamiltonian `-logp + kinetic`.
pub fn hamiltonian(phase: &PhasePoint, inv_mass: &[f64]) -> f64 {
    -phase.logp + kinetic_energy(&phase.momentum, inv_mass)
}

/// One leapfrog step (half-kick, drift, half-kick). `step` may be negative to
/// integrate backwards in time. Costs one gradient evaluation.
pub fn leapfrog<T: Target>(
    target: &mut T,
    from: &PhasePoint,
    step: f64,
    inv_mass: &[f64],
) -> PhasePoint {
    let d = from.position.len();
    let mut momentum = from.momentum.clone();
    for i in 0..d {
        momentum[i] += 0.5 * step * from.gradient[i];
    }
    let mut position = from.position.clone();
    for i in 0..d {
        position[i] += step * inv_mass[i] * momentum[i];
    }
    let mut gradient = vec![0.0; d];
    let logp = target.logp_grad(&position, &mut gradient);
    if logp.is_finite() {
        for i in 0..d {
            momentum[i] += 0.5 * step * gradient[i];
        }
    }
    PhasePoint {
        position,
        momentum,
        gradient,
        logp,
    }
}

/// U-turn criterion between the backward and forward trajectory ends.
fn is_turning(minus: &PhasePoint, plus: &PhasePoint, inv_mass: &[f64]) -> bool {
    let mut forward = 0.0;
    let mut backward = 0.0;
    for i in 0..inv_mass.len() {
        let dq = plus.position[i] - minus.position[i];
        forward += dq * inv_mass[i] * plus.momentum[i];
        backward += dq * inv_mass[i] * minus.momentum[i];
    }
    forward < 0.0 || backward < 0.0
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let max = a.max(b);
    max + ((a - max).exp() + (b - max).exp()).ln()
}

struct Subtree {
    /// Backward end in trajectory time order.
    minus: PhasePoint,
    /// Forward end in trajectory time order.
    plus: PhasePoint,
    proposal: PhasePoint,
    proposal_energy: f64,
    /// logsumexp of `h0 - h` over the leaves.
    log_weight: f64,
    sum_accept: f64,
    n_leapfrog: usize,
    turning: bool,
    divergent: bool,
}

#[allow(clippy::too_many_arguments)]
fn build_tree<T: Target>(
    target: &mut T,
    from: &PhasePoint,
    direction: f64,
    depth: usize,
    step: f64,
    h0: f64,
    inv_mass: &[f64],
    rng: &mut ChaCha8Rng,
) -> Subtree {
    if depth == 0 {
        let next = leapfrog(target, from, direction * step, inv_mass);
        let h = hamiltonian(&next, inv_mass);
        let energy_error = h - h0;
        // NaN comparisons are false, so a non-finite Hamiltonian also counts
        // as divergent here.
        let divergent = !(energy_error <= MAX_ENERGY_ERROR);
        let log_weight = if h.is_finite() {
            h0 - h
        } else {
            f64::NEG_INFINITY
        };
        let accept = if h.is_finite() {
            (h0 - h).min(0.0).exp()
        } else {
            0.0
        };
        return Subtree {
            minus: next.clone(),
            plus: next.clone(),
            proposal: next,
            proposal_energy: h,
            log_weight,
            sum_accept: accept,
            n_leapfrog: 1,
            turning: false,
            divergent,
        };
    }

    let first = build_tree(target, from, direction, depth - 1, step, h0, inv_mass, rng);
    if first.turning || first.divergent {
        return first;
    }
    let edge = if direction > 0.0 {
        first.plus.clone()
    } else {
        first.minus.clone()
    };
    let second = build_tree(target, &edge, direction, depth - 1, step, h0, inv_mass, rng);

    let log_weight = log_add_exp(first.log_weight, second.log_weight);
    let sum_accept = first.sum_accept + second.sum_accept;
    let n_leapfrog = first.n_leapfrog + second.n_leapfrog;
    let (minus, plus) = if direction > 0.0 {
        (first.minus, second.plus)
    } else {
        (second.minus, first.plus)
    };

    if second.turning || second.divergent {
        // The combined subtree is invalid; the caller discards the proposal.
        return Subtree {
            minus,
            plus,
            proposal: first.proposal,
            proposal_energy: first.proposal_energy,
            log_weight,
            sum_accept,
            n_leapfrog,
            turning: second.turning,
            divergent: second.divergent,
        };
    }

    // Plain multinomial choice between the two halves.
    let take_second = {
        let threshold = (second.log_weight - log_weight).exp();
        rng.random::<f64>() < threshold
    };
    let (proposal, proposal_energy) = if take_second {
        (second.proposal, second.proposal_energy)
    } else {
        (first.proposal, first.proposal_energy)
    };
    let turning = is_turning(&minus, &plus, inv_mass);
    Subtree {
        minus,
        plus,
        proposal,
        proposal_energy,
        log_weight,
        sum_accept,
        n_leapfrog,
        turning,
        divergent: false,
    }
}

/// Position with cached density and gradient, threaded through the chain so
/// the target is only re-evaluated when it actually changes.
#[derive(Debug, Clone)]
pub struct EvalState {
    pub position: Vec<f64>,
    pub logp: f64,
    pub gradient: Vec<f64>,
}

impl EvalState {
    pub fn new<T: Target>(target: &mut T, position: Vec<f64>) -> EvalState {
        let mut gradient = vec![0.0; position.len()];
        let logp = target.logp_grad(&position, &mut gradient);
        EvalState {
            position,
            logp,
            gradient,
        }
    }

    /// Re-evaluate after the target itself changed (e.g. a relabeling).
    pub fn refresh<T: Target>(&mut self, target: &mut T) {
        self.logp = target.logp_grad(&self.position, &mut self.gradient);
    }
}

/// Per-transition statistics.
#[derive(Debug, Clone, Copy)]
pub struct TransitionStats {
    /// Mean of `min(1, exp(h0 - h))` over the trajectory leaves; drives dual
    /// averaging.
    pub accept_prob: f64,
    /// Completed doublings.
    pub depth: usize,
    pub divergent: bool,
    /// Hamiltonian of the selected draw.
    pub energy: f64,
    pub n_leapfrog: usize,
}

/// One NUTS transition, updating `state` in place.
///
/// `max_treedepth = 0` still performs one doubling, i.e. a single leapfrog
/// proposal accepted with the Metropolis ratio.
pub fn transition<T: Target>(
    target: &mut T,
    state: &mut EvalState,
    step: f64,
    inv_mass: &[f64],
    max_treedepth: usize,
    rng: &mut ChaCha8Rng,
) -> TransitionStats {
    let d = state.position.len();
    let mut momentum = vec![0.0; d];
    for i in 0..d {
        let sd = 1.0 / inv_mass[i].sqrt();
        momentum[i] = rng.sample::<f64, _>(rand_distr::StandardNormal) * sd;
    }
    let initial = PhasePoint {
        position: state.position.clone(),
        momentum,
        gradient: state.gradient.clone(),
        logp: state.logp,
    };
    let h0 = hamiltonian(&initial, inv_mass);

    let mut z_minus = initial.clone();
    let mut z_plus = initial.clone();
    let mut proposal = initial;
    let mut proposal_energy = h0;
    let mut trajectory_log_weight = 0.0;
    let mut depth = 0usize;
    let mut divergent = false;
    let mut sum_accept = 0.0;
    let mut n_leapfrog = 0usize;

    loop {
        let direction = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let root = if direction > 0.0 {
            z_plus.clone()
        } else {
            z_minus.clone()
        };
        let subtree = build_tree(target, &root, direction, depth, step, h0, inv_mass, rng);
        sum_accept += subtree.sum_accept;
        n_leapfrog += subtree.n_leapfrog;
        if subtree.divergent {
            divergent = true;
        }
        if subtree.divergent || subtree.turning {
            break;
        }

        // Biased progressive sampling: favor the fresh half of the
        // trajectory with probability min(1, w_new / w_old).
        let log_ratio = subtree.log_weight - trajectory_log_weight;
        if log_ratio >= 0.0 || rng.random::<f64>() < log_ratio.exp() {
            proposal = subtree.proposal.clone();
            proposal_energy = subtree.proposal_energy;
        }
        trajectory_log_weight = log_add_exp(trajectory_log_weight, subtree.log_weight);
        if direction > 0.0 {
            z_plus = subtree.plus;
        } else {
            z_minus = subtree.minus;
        }
        depth += 1;
        if is_turning(&z_minus, &z_plus, inv_mass) {
            break;
        }
        if depth >= max_treedepth {
            break;
        }
    }

    state.position = proposal.position;
    state.logp = proposal.logp;
    state.gradient = proposal.gradient;
    TransitionStats {
        accept_prob: if n_leapfrog > 0 {
            sum_accept / n_leapfrog as f64
        } else {
            0.0
        },
        depth,
        divergent,
        energy: proposal_energy,
        n_leapfrog,
    }
}

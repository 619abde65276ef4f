//! Warmup adaptation: dual-averaging step size and diagonal mass estimation
//! over expanding memoryless windows.
//!
//! The window layout follows the usual three-phase scheme: an initial
//! step-size-only buffer, a sequence of doubling covariance windows (each one
//! ends with a mass update and a step-size reset), and a terminal
//! step-size-only buffer that polishes epsilon against the final metric.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::nuts::{hamiltonian, leapfrog, transition, EvalState, PhasePoint};
use super::{SamplerConfig, Target};
use crate::error::{Error, Result};

/// Nesterov dual averaging on log step size.
#[derive(Debug, Clone)]
pub(crate) struct DualAverage {
    mu: f64,
    log_eps: f64,
    log_eps_bar: f64,
    h_bar: f64,
    count: f64,
    target_accept: f64,
}

const DA_GAMMA: f64 = 0.05;
const DA_T0: f64 = 10.0;
const DA_KAPPA: f64 = 0.75;

impl DualAverage {
    pub fn new(initial_step: f64, target_accept: f64) -> DualAverage {
        DualAverage {
            mu: (10.0 * initial_step).ln(),
            log_eps: initial_step.ln(),
            log_eps_bar: 0.0,
            h_bar: 0.0,
            count: 1.0,
            target_accept,
        }
    }

    pub fn update(&mut self, accept_prob: f64) {
        let frac = 1.0 / (self.count + DA_T0);
        self.h_bar = (1.0 - frac) * self.h_bar + frac * (self.target_accept - accept_prob);
        self.log_eps = self.mu - self.count.sqrt() / DA_GAMMA * self.h_bar;
        let power = self.count.powf(-DA_KAPPA);
        self.log_eps_bar = power * self.log_eps + (1.0 - power) * self.log_eps_bar;
        self.count += 1.0;
    }

    /// Step size to use for the next warmup iteration.
    pub fn current(&self) -> f64 {
        self.log_eps.exp()
    }

    /// Smoothed step size frozen at the end of adaptation.
    pub fn adapted(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

/// Welford accumulator for the per-coordinate draw variance.
#[derive(Debug, Clone)]
pub(crate) struct RunningVariance {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl RunningVariance {
    pub fn new(dim: usize) -> RunningVariance {
        RunningVariance {
            n: 0.0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn push(&mut self, values: &[f64]) {
        self.n += 1.0;
        for i in 0..values.len() {
            let delta = values[i] - self.mean[i];
            self.mean[i] += delta / self.n;
            self.m2[i] += delta * (values[i] - self.mean[i]);
        }
    }

    /// Regularized variance estimate, shrunk slightly toward a small constant
    /// the way Stan does, so short windows cannot produce a wild metric.
    pub fn regularized(&self) -> Vec<f64> {
        if self.n < 2.0 {
            return vec![1.0; self.mean.len()];
        }
        let n = self.n;
        self.m2
            .iter()
            .map(|&m2| {
                let var = m2 / (n - 1.0);
                (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
            })
            .collect()
    }

    pub fn reset(&mut self) {
        self.n = 0.0;
        self.mean.iter_mut().for_each(|v| *v = 0.0);
        self.m2.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Warmup phase layout: iterations `[0, init_end)` adapt only the step size,
/// covariance windows span `[init_end, term_start)` and each entry of
/// `window_ends` marks a mass-matrix update, and `[term_start, n_warmup)`
/// again adapts only the step size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct WarmupSchedule {
    pub init_end: usize,
    pub window_ends: Vec<usize>,
    pub term_start: usize,
}

pub(crate) fn warmup_schedule(n_warmup: usize) -> WarmupSchedule {
    if n_warmup < 20 {
        return WarmupSchedule {
            init_end: n_warmup,
            window_ends: Vec::new(),
            term_start: n_warmup,
        };
    }
    let (init_end, term_len, base) = if n_warmup >= 150 {
        (75, 50, 25)
    } else {
        let init = n_warmup * 15 / 100;
        let term = n_warmup / 10;
        (init, term, (n_warmup - init - term).max(1))
    };
    let term_start = n_warmup - term_len;
    let mut window_ends = Vec::new();
    let mut pos = init_end;
    let mut size = base;
    while pos < term_start {
        let end = pos + size;
        if end + 2 * size > term_start {
            window_ends.push(term_start);
            break;
        }
        window_ends.push(end);
        pos = end;
        size *= 2;
    }
    WarmupSchedule {
        init_end,
        window_ends,
        term_start,
    }
}

/// Heuristic search for a starting step size: double or halve until one
/// leapfrog step crosses 50% acceptance.
pub(crate) fn find_reasonable_step<T: Target>(
    target: &mut T,
    state: &EvalState,
    inv_mass: &[f64],
    rng: &mut ChaCha8Rng,
) -> f64 {
    let d = state.position.len();
    let mut momentum = vec![0.0; d];
    for i in 0..d {
        momentum[i] = rng.sample::<f64, _>(rand_distr::StandardNormal) / inv_mass[i].sqrt();
    }
    let start = PhasePoint {
        position: state.position.clone(),
        momentum,
        gradient: state.gradient.clone(),
        logp: state.logp,
    };
    let h0 = hamiltonian(&start, inv_mass);

    let mut step = 1.0;
    let log_ratio_at = |target: &mut T, step: f64| -> f64 {
        let next = leapfrog(target, &start, step, inv_mass);
        let h = hamiltonian(&next, inv_mass);
        if h.is_finite() {
            h0 - h
        } else {
            f64::NEG_INFINITY
        }
    };
    let mut log_ratio = log_ratio_at(target, step);
    let dir: f64 = if log_ratio > (0.5f64).ln() { 1.0 } else { -1.0 };
    for _ in 0..100 {
        if dir * log_ratio <= -dir * (2.0f64).ln() {
            break;
        }
        step *= (2.0f64).powf(dir);
        if !(1e-10..=1e7).contains(&step) {
            break;
        }
        log_ratio = log_ratio_at(target, step);
    }
    step.clamp(1e-10, 1e7)
}

/// Run the full warmup phase: jittered initialization, dual-averaged step
/// size, and windowed diagonal mass adaptation. Returns the frozen step size,
/// the inverse mass diagonal, and the state sampling starts from.
///
/// The target's interleaved update (the discrete threshold block, when
/// present) runs after every warmup transition so adaptation sees the same
/// kernel that sampling will use.
pub fn warmup_adapt<T: Target>(
    target: &mut T,
    config: &SamplerConfig,
    chain_id: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Vec<f64>, EvalState)> {
    let d = target.dim();

    // Jittered start near the origin; retry a few times if the density is
    // not finite there.
    let mut state = None;
    for _ in 0..100 {
        let position: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let candidate = EvalState::new(target, position);
        if candidate.logp.is_finite() {
            state = Some(candidate);
            break;
        }
    }
    let mut state = state.ok_or_else(|| Error::WarmupFailed {
        chain: chain_id,
        message: "no finite starting point found in the jitter box".to_string(),
    })?;

    let mut inv_mass = vec![1.0; d];
    let mut dual = DualAverage::new(
        find_reasonable_step(target, &state, &inv_mass, rng),
        config.target_accept,
    );
    let schedule = warmup_schedule(config.n_warmup);
    let mut running = RunningVariance::new(d);
    let mut window_cursor = 0usize;
    let mut n_divergent = 0usize;

    for iter in 0..config.n_warmup {
        let stats = transition(
            target,
            &mut state,
            dual.current(),
            &inv_mass,
            config.max_treedepth,
            rng,
        );
        dual.update(stats.accept_prob);
        if stats.divergent {
            n_divergent += 1;
        }
        if target.interleaved_update(&state.position, rng) {
            state.refresh(target);
        }

        let in_window = iter >= schedule.init_end && iter < schedule.term_start;
        if in_window {
            running.push(&state.position);
        }
        if window_cursor < schedule.window_ends.len()
            && iter + 1 == schedule.window_ends[window_cursor]
        {
            inv_mass = running.regularized();
            running.reset();
            window_cursor += 1;
            // The metric changed; re-seat the step size against it.
            let step = find_reasonable_step(target, &state, &inv_mass, rng);
            dual = DualAverage::new(step, config.target_accept);
        }
    }

    if config.n_warmup > 0 && n_divergent == config.n_warmup {
        return Err(Error::WarmupFailed {
            chain: chain_id,
            message: "every warmup iteration diverged".to_string(),
        });
    }

    let step_size = if config.n_warmup > 0 {
        dual.adapted()
    } else {
        dual.current()
    };
    Ok((step_size, inv_mass, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::targets::StdNormal;
    use rand::SeedableRng;

    fn test_config(n_warmup: usize, target_accept: f64) -> SamplerConfig {
        SamplerConfig {
            n_warmup,
            target_accept,
            ..SamplerConfig::default()
        }
    }

    #[test]
    fn schedule_matches_expanding_window_layout() {
        let s = warmup_schedule(2000);
        assert_eq!(s.init_end, 75);
        assert_eq!(s.term_start, 1950);
        assert_eq!(s.window_ends, vec![100, 150, 250, 450, 850, 1950]);
    }

    #[test]
    fn schedule_shrinks_for_short_warmup() {
        let s = warmup_schedule(100);
        assert_eq!(s.init_end, 15);
        assert_eq!(s.term_start, 90);
        assert_eq!(s.window_ends, vec![90]);
    }

    #[test]
    fn welford_matches_direct_variance() {
        let mut running = RunningVariance::new(1);
        let values = [1.0, 4.0, 2.0, 8.0, 5.0];
        for v in values {
            running.push(&[v]);
        }
        let mean = values.iter().sum::<f64>() / 5.0;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        let expected = (5.0 / 10.0) * var + 1e-3 * 0.5;
        assert!((running.regularized()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn adapted_mass_close_to_unit_variances() {
        let mut target = StdNormal::new(6);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let (_, inv_mass, _) =
            warmup_adapt(&mut target, &test_config(800, 0.8), 0, &mut rng).unwrap();
        for (i, &v) in inv_mass.iter().enumerate() {
            assert!((0.5..=2.0).contains(&v), "coordinate {i}: {v}");
        }
    }

    #[test]
    fn higher_target_accept_gives_smaller_step() {
        let run = |target_accept: f64| {
            let mut target = StdNormal::new(4);
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let (step, _, _) =
                warmup_adapt(&mut target, &test_config(400, target_accept), 0, &mut rng).unwrap();
            step
        };
        assert!(run(0.999) < run(0.6));
    }

    #[test]
    fn warmup_is_deterministic_given_seed() {
        let run = || {
            let mut target = StdNormal::new(3);
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            warmup_adapt(&mut target, &test_config(300, 0.8), 0, &mut rng).unwrap()
        };
        let (eps1, mass1, state1) = run();
        let (eps2, mass2, state2) = run();
        assert_eq!(eps1, eps2);
        assert_eq!(mass1, mass2);
        assert_eq!(state1.position, state2.position);
    }
}

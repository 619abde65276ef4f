//! Mapping residual performance onto the three reuse levels, and level
//! counts/proportions aggregated across posterior threshold draws.
//!
//! Levels form a hard three-way partition of the `R` axis: `R >= tau1` is
//! direct structural reuse (L1), `tau2 <= R < tau1` allows reuse after
//! trimming (L2), and `R < tau2` relegates the member to non-structural use
//! (L3). Both boundaries are inclusive downward into the better level.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Decision boundaries on `R`. The upper boundary defaults to 0.90; the lower
/// one is a point value here (the sampler treats it as random).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    tau1: f64,
    tau2: f64,
}

impl Thresholds {
    pub const DEFAULT_TAU1: f64 = 0.90;

    pub fn new(tau1: f64, tau2: f64) -> Result<Thresholds> {
        if !(0.0 < tau2 && tau2 < tau1 && tau1 <= 1.0) {
            return Err(Error::Config(format!(
                "thresholds must satisfy 0 < tau2 < tau1 <= 1, got ({tau1}, {tau2})"
            )));
        }
        Ok(Thresholds { tau1, tau2 })
    }

    pub fn tau1(&self) -> f64 {
        self.tau1
    }

    pub fn tau2(&self) -> f64 {
        self.tau2
    }
}

/// The three reuse levels, ordered by reuse quality: L1 > L2 > L3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReuseLevel {
    L1,
    L2,
    L3,
}

impl ReuseLevel {
    /// 1-based level number as used in reporting.
    pub fn number(&self) -> u8 {
        match self {
            ReuseLevel::L1 => 1,
            ReuseLevel::L2 => 2,
            ReuseLevel::L3 => 3,
        }
    }

    /// 0-based class index into probability vectors (L1 -> 0).
    pub fn class_index(&self) -> usize {
        self.number() as usize - 1
    }

    pub fn from_class_index(index: usize) -> ReuseLevel {
        match index {
            0 => ReuseLevel::L1,
            1 => ReuseLevel::L2,
            _ => ReuseLevel::L3,
        }
    }

    /// Higher means better reuse quality.
    pub fn quality_rank(&self) -> u8 {
        4 - self.number()
    }

    pub fn label(&self) -> &'static str {
        match self {
            ReuseLevel::L1 => "L1",
            ReuseLevel::L2 => "L2",
            ReuseLevel::L3 => "L3",
        }
    }
}

impl std::fmt::Display for ReuseLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Assign the reuse level for one residual-performance value.
///
/// `R = tau1` grades L1 and `R = tau2` grades L2: each boundary belongs to
/// the level above it.
pub fn assign_level(r: f64, thresholds: &Thresholds) -> ReuseLevel {
    if r >= thresholds.tau1 {
        ReuseLevel::L1
    } else if r >= thresholds.tau2 {
        ReuseLevel::L2
    } else {
        ReuseLevel::L3
    }
}

/// Per-level counts over a set of `R` values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelCounts {
    pub l1: usize,
    pub l2: usize,
    pub l3: usize,
}

impl LevelCounts {
    pub fn total(&self) -> usize {
        self.l1 + self.l2 + self.l3
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.l1, self.l2, self.l3]
    }

    /// Proportions in level order; all zero for an empty set.
    pub fn proportions(&self) -> [f64; 3] {
        let total = self.total();
        if total == 0 {
            return [0.0; 3];
        }
        let t = total as f64;
        [
            self.l1 as f64 / t,
            self.l2 as f64 / t,
            self.l3 as f64 / t,
        ]
    }
}

/// Count levels for every value under fixed thresholds.
pub fn level_counts(r_values: &[f64], thresholds: &Thresholds) -> LevelCounts {
    let mut counts = LevelCounts {
        l1: 0,
        l2: 0,
        l3: 0,
    };
    for &r in r_values {
        match assign_level(r, thresholds) {
            ReuseLevel::L1 => counts.l1 += 1,
            ReuseLevel::L2 => counts.l2 += 1,
            ReuseLevel::L3 => counts.l3 += 1,
        }
    }
    counts
}

/// Mean and spread of level proportions propagated through posterior draws
/// of the lower threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelProportions {
    /// Per-level mean proportion across draws, level order L1/L2/L3.
    pub mean: [f64; 3],
    /// Per-level sample standard deviation across draws (0 for one draw).
    pub sd: [f64; 3],
}

/// Recompute the level partition for every `tau2` draw and summarize the
/// proportion of each level across draws.
pub fn proportions_over_draws(
    r_values: &[f64],
    tau2_draws: &[f64],
    tau1: f64,
) -> Result<LevelProportions> {
    if tau2_draws.is_empty() {
        return Err(Error::Config("tau2 draws are empty".to_string()));
    }
    let n_draws = tau2_draws.len() as f64;
    let mut sums = [0.0f64; 3];
    let mut sq_sums = [0.0f64; 3];
    for &tau2 in tau2_draws {
        let thresholds = Thresholds::new(tau1, tau2)?;
        let p = level_counts(r_values, &thresholds).proportions();
        for level in 0..3 {
            sums[level] += p[level];
            sq_sums[level] += p[level] * p[level];
        }
    }
    let mut mean = [0.0f64; 3];
    let mut sd = [0.0f64; 3];
    for level in 0..3 {
        mean[level] = sums[level] / n_draws;
        sd[level] = if tau2_draws.len() == 1 {
            0.0
        } else {
            let var =
                (sq_sums[level] - n_draws * mean[level] * mean[level]) / (n_draws - 1.0);
            var.max(0.0).sqrt()
        };
    }
    Ok(LevelProportions { mean, sd })
}

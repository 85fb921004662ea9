//! Toy hard-exploration environments.
//!
//! `DeepSea` and `SparseChain` are deterministic MDPs where exactly one
//! action sequence earns reward, so episodes-to-solve is a crisp deep
//! exploration metric. `LineWalk` is the 1-D continuous task used by the
//! offline agent.

use serde::{Deserialize, Serialize};

use crate::error::{DrndError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToyEnvKind {
    DeepSea,
    SparseChain,
}

/// Discrete-action toy environment. Observations are one-hot encodings of
/// the (time, position) cell.
#[derive(Debug, Clone)]
pub enum ToyEnv {
    DeepSea {
        size: usize,
        row: usize,
        col: usize,
        done: bool,
    },
    SparseChain {
        length: usize,
        pos: usize,
        t: usize,
        done: bool,
    },
}

impl ToyEnv {
    pub fn new(kind: ToyEnvKind, size: usize) -> Result<Self> {
        if size < 2 {
            return Err(DrndError::Config(format!(
                "environment size must be >= 2, got {size}"
            )));
        }
        Ok(match kind {
            ToyEnvKind::DeepSea => ToyEnv::DeepSea {
                size,
                row: 0,
                col: 0,
                done: false,
            },
            ToyEnvKind::SparseChain => ToyEnv::SparseChain {
                length: size,
                pos: 0,
                t: 0,
                done: false,
            },
        })
    }

    pub fn n_actions(&self) -> usize {
        2
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            // Cells (row, col) with row in 0..=size, col in 0..=size.
            ToyEnv::DeepSea { size, .. } => (size + 1) * (size + 1),
            // (t, pos) pairs, t in 0..=length, pos in 0..=length.
            ToyEnv::SparseChain { length, .. } => (length + 1) * (length + 1),
        }
    }

    pub fn max_episode_len(&self) -> usize {
        match self {
            ToyEnv::DeepSea { size, .. } => *size,
            ToyEnv::SparseChain { length, .. } => *length,
        }
    }

    pub fn observe(&self) -> Vec<f64> {
        let mut obs = vec![0.0; self.obs_dim()];
        let idx = match self {
            ToyEnv::DeepSea { size, row, col, .. } => row * (size + 1) + col,
            ToyEnv::SparseChain { length, pos, t, .. } => t * (length + 1) + pos,
        };
        obs[idx] = 1.0;
        obs
    }

    pub fn reset(&mut self) -> Vec<f64> {
        match self {
            ToyEnv::DeepSea { row, col, done, .. } => {
                *row = 0;
                *col = 0;
                *done = false;
            }
            ToyEnv::SparseChain { pos, t, done, .. } => {
                *pos = 0;
                *t = 0;
                *done = false;
            }
        }
        self.observe()
    }

    /// Deterministic step. Action 0 = left/back, action 1 = right/forward.
    /// Only the all-right trajectory earns the sparse reward; each right
    /// move carries a small cost that biases naive agents away from it.
    pub fn step(&mut self, action: usize) -> Result<(Vec<f64>, f64, bool)> {
        if action >= 2 {
            return Err(DrndError::Argument(format!("action {action} out of range")));
        }
        match self {
            ToyEnv::DeepSea {
                size,
                row,
                col,
                done,
            } => {
                if *done {
                    return Err(DrndError::Usage("step after episode end".into()));
                }
                *row += 1;
                let mut reward = 0.0;
                if action == 1 {
                    *col += 1;
                    reward -= 0.01 / *size as f64;
                } else {
                    *col = col.saturating_sub(1);
                }
                if *row == *size {
                    *done = true;
                    if *col == *size {
                        reward += 1.0;
                    }
                }
                let d = *done;
                Ok((self.observe(), reward, d))
            }
            ToyEnv::SparseChain {
                length,
                pos,
                t,
                done,
            } => {
                if *done {
                    return Err(DrndError::Usage("step after episode end".into()));
                }
                *t += 1;
                let mut reward = 0.0;
                if action == 1 {
                    *pos += 1;
                    reward -= 0.01 / *length as f64;
                } else {
                    *pos = pos.saturating_sub(1);
                }
                if *t == *length {
                    *done = true;
                    if *pos == *length {
                        reward += 1.0;
                    }
                }
                let d = *done;
                Ok((self.observe(), reward, d))
            }
        }
    }
}

/// 1-D continuous control task: state in [-1, 1], action in [-1, 1],
/// s' = clamp(s + 0.2 a), reward peaks at the target state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LineWalkEnv {
    pub target: f64,
    pub action_scale: f64,
    pub episode_len: usize,
}

impl Default for LineWalkEnv {
    fn default() -> Self {
        LineWalkEnv {
            target: 0.6,
            action_scale: 0.2,
            episode_len: 40,
        }
    }
}

impl LineWalkEnv {
    pub fn reward(&self, s: f64) -> f64 {
        (-((s - self.target) / 0.3).powi(2)).exp()
    }

    pub fn transition(&self, s: f64, a: f64) -> (f64, f64) {
        let a = a.clamp(-1.0, 1.0);
        let s2 = (s + self.action_scale * a).clamp(-1.0, 1.0);
        (s2, self.reward(s2))
    }
}

//! Greedy evaluation rollouts on fresh environments.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::seeds::splitmix64;
use crate::agent::DqnAgent;
use crate::env::{catch_optimal_action, Env, EnvConfig, EnvState, Observation};
use crate::error::Result;

pub trait Policy {
    /// Action for the current observation. `state` is the simulator state,
    /// visible only to scripted policies.
    fn action(&mut self, obs: &Observation, state: &EnvState) -> Result<usize>;
}

impl Policy for DqnAgent {
    fn action(&mut self, obs: &Observation, _state: &EnvState) -> Result<usize> {
        self.greedy_action(obs)
    }
}

/// Moves the paddle under the ball.
#[derive(Clone, Copy, Debug, Default)]
pub struct CatchOracle;

impl Policy for CatchOracle {
    fn action(&mut self, _obs: &Observation, state: &EnvState) -> Result<usize> {
        Ok(catch_optimal_action(state))
    }
}

#[derive(Clone, Debug)]
pub struct RandomPolicy {
    pub num_actions: usize,
    pub rng: ChaCha8Rng,
}

impl Policy for RandomPolicy {
    fn action(&mut self, _obs: &Observation, _state: &EnvState) -> Result<usize> {
        Ok(self.rng.gen_range(0..self.num_actions))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub returns: Vec<f64>,
}

impl EvalResult {
    pub fn from_returns(returns: Vec<f64>) -> Self {
        let n = returns.len() as f64;
        let mean = returns.iter().sum::<f64>() / n;
        let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
            returns,
        }
    }
}

/// Runs `episodes` episodes; episode `i` uses a fresh environment seeded
/// with `splitmix64(seed + i)`.
pub fn evaluate<P: Policy + ?Sized>(policy: &mut P, env: &EnvConfig, episodes: usize, seed: u64) -> Result<EvalResult> {
    let episodes = episodes.max(1);
    let mut returns = Vec::with_capacity(episodes);
    for i in 0..episodes {
        let (mut e, mut obs) = Env::new(env.clone(), splitmix64(seed.wrapping_add(i as u64)))?;
        let mut total = 0.0;
        loop {
            let a = policy.action(&obs, &e.state())?;
            let step = e.step(a)?;
            total += step.reward;
            if step.done {
                break;
            }
            obs = step.observation;
        }
        returns.push(total);
    }
    Ok(EvalResult::from_returns(returns))
}

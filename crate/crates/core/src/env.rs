//! Seeded pixel environments with frame stacking.
//!
//! `catch`: a ball falls one row per step from a random column of the top
//! row; the agent moves a one-cell paddle along the bottom row (left, stay,
//! right). Reward +1 for a catch, -1 for a miss, 0 otherwise; the episode
//! ends when the ball reaches the bottom row.
//!
//! `grid_goal`: the agent moves (up, down, left, right) on a grid towards a
//! goal cell. Reward +1 and episode end on reaching the goal, 0 otherwise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvId {
    Catch,
    GridGoal,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub env_id: EnvId,
    /// Cells per side.
    pub grid_size: usize,
    /// Pixels per side of the rendered frame.
    pub render_size: usize,
    pub frame_stack: usize,
    /// Episodes are cut (and marked done) after this many steps.
    pub max_episode_steps: usize,
}

impl EnvConfig {
    pub fn catch() -> Self {
        Self {
            env_id: EnvId::Catch,
            grid_size: 12,
            render_size: 24,
            frame_stack: 2,
            max_episode_steps: 100,
        }
    }

    pub fn grid_goal() -> Self {
        Self {
            env_id: EnvId::GridGoal,
            grid_size: 8,
            render_size: 32,
            frame_stack: 1,
            max_episode_steps: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 2 {
            return config_err("grid_size must be at least 2");
        }
        if self.render_size < self.grid_size {
            return config_err(format!(
                "render_size {} is smaller than grid_size {}",
                self.render_size, self.grid_size
            ));
        }
        if self.frame_stack == 0 {
            return config_err("frame_stack must be at least 1");
        }
        if self.max_episode_steps == 0 {
            return config_err("max_episode_steps must be at least 1");
        }
        Ok(())
    }

    pub fn num_actions(&self) -> usize {
        match self.env_id {
            EnvId::Catch => 3,
            EnvId::GridGoal => 4,
        }
    }

    /// `(S, H, W)` of an observation.
    pub fn obs_shape(&self) -> [usize; 3] {
        [self.frame_stack, self.render_size, self.render_size]
    }

    /// Bytes of one grayscale frame.
    pub fn frame_bytes(&self) -> usize {
        self.render_size * self.render_size
    }
}

/// `S` stacked `H x W` grayscale frames, oldest first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Observation {
    frames: usize,
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl Observation {
    pub fn new(frames: usize, height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if frames == 0 || height == 0 || width == 0 || data.len() != frames * height * width {
            return config_err(format!(
                "observation ({frames}, {height}, {width}) cannot hold {} bytes",
                data.len()
            ));
        }
        Ok(Self {
            frames,
            height,
            width,
            data,
        })
    }

    /// A stack holding `frame` repeated `frames` times.
    pub fn repeated(frame: &[u8], frames: usize, height: usize, width: usize) -> Result<Self> {
        if frame.len() != height * width {
            return config_err("frame size does not match observation size");
        }
        Self::new(frames, height, width, frame.repeat(frames))
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.frames, self.height, self.width]
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn frame(&self, i: usize) -> &[u8] {
        let n = self.height * self.width;
        &self.data[i * n..(i + 1) * n]
    }

    pub fn latest_frame(&self) -> &[u8] {
        self.frame(self.frames - 1)
    }

    /// Drops the oldest frame and appends `frame`.
    pub fn push_frame(&mut self, frame: &[u8]) {
        let n = self.height * self.width;
        debug_assert_eq!(frame.len(), n);
        self.data.copy_within(n.., 0);
        let len = self.data.len();
        self.data[len - n..].copy_from_slice(frame);
    }

    /// Pixels scaled to `[0, 1]`, shape `(S, H, W)`.
    pub fn to_tensor(&self) -> Tensor<f32> {
        let data = self.data.iter().map(|&p| p as f32 / 255.0).collect();
        Tensor::new(vec![self.frames, self.height, self.width], data).expect("valid shape")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnvState {
    Catch {
        ball_row: usize,
        ball_col: usize,
        paddle_col: usize,
    },
    GridGoal {
        agent: (usize, usize),
        goal: (usize, usize),
    },
}

/// Draws `cells` as filled blocks on an `size x size` frame. Cell `(r, c)`
/// covers pixel rows `r*size/grid .. (r+1)*size/grid`, columns likewise.
pub fn render_cells(cells: &[(usize, usize, u8)], grid: usize, size: usize) -> Vec<u8> {
    let mut frame = vec![0u8; size * size];
    for &(r, c, value) in cells {
        for y in r * size / grid..(r + 1) * size / grid {
            for x in c * size / grid..(c + 1) * size / grid {
                frame[y * size + x] = value;
            }
        }
    }
    frame
}

pub struct Env {
    config: EnvConfig,
    rng: ChaCha8Rng,
    state: EnvState,
    stack: Observation,
    steps: usize,
    done: bool,
}

impl Env {
    /// Creates the environment and resets it once.
    pub fn new(config: EnvConfig, seed: u64) -> Result<(Self, Observation)> {
        config.validate()?;
        let [s, h, w] = config.obs_shape();
        let mut env = Self {
            stack: Observation::new(s, h, w, vec![0; s * h * w])?,
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            state: EnvState::Catch {
                ball_row: 0,
                ball_col: 0,
                paddle_col: 0,
            },
            steps: 0,
            done: true,
        };
        let obs = env.reset();
        Ok((env, obs))
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn num_actions(&self) -> usize {
        self.config.num_actions()
    }

    pub fn state(&self) -> EnvState {
        self.state
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Samples a fresh initial state from the environment's RNG stream.
    pub fn reset(&mut self) -> Observation {
        let g = self.config.grid_size;
        self.state = match self.config.env_id {
            EnvId::Catch => EnvState::Catch {
                ball_row: 0,
                ball_col: self.rng.gen_range(0..g),
                paddle_col: g / 2,
            },
            EnvId::GridGoal => {
                let agent = (self.rng.gen_range(0..g), self.rng.gen_range(0..g));
                let mut goal = agent;
                while goal == agent {
                    goal = (self.rng.gen_range(0..g), self.rng.gen_range(0..g));
                }
                EnvState::GridGoal { agent, goal }
            }
        };
        self.start_from_state()
    }

    /// Starts an episode from an explicit state.
    pub fn reset_to(&mut self, state: EnvState) -> Result<Observation> {
        let g = self.config.grid_size;
        let ok = match (self.config.env_id, state) {
            (
                EnvId::Catch,
                EnvState::Catch {
                    ball_row,
                    ball_col,
                    paddle_col,
                },
            ) => ball_row < g - 1 && ball_col < g && paddle_col < g,
            (EnvId::GridGoal, EnvState::GridGoal { agent, goal }) => {
                agent.0 < g && agent.1 < g && goal.0 < g && goal.1 < g && agent != goal
            }
            _ => false,
        };
        if !ok {
            return config_err(format!("state {state:?} is not valid for {:?}", self.config.env_id));
        }
        self.state = state;
        Ok(self.start_from_state())
    }

    fn start_from_state(&mut self) -> Observation {
        let frame = self.render();
        let [s, h, w] = self.config.obs_shape();
        self.stack = Observation::repeated(&frame, s, h, w).expect("rendered frame fits");
        self.steps = 0;
        self.done = false;
        self.stack.clone()
    }

    pub fn render(&self) -> Vec<u8> {
        render_state(&self.config, &self.state)
    }

    pub fn step(&mut self, action: usize) -> Result<StepResult> {
        if self.done {
            return Err(Error::Usage("step called on a finished episode; call reset".into()));
        }
        if action >= self.num_actions() {
            return Err(Error::Usage(format!(
                "action {action} out of range for {} actions",
                self.num_actions()
            )));
        }
        let g = self.config.grid_size;
        let (reward, terminal) = match &mut self.state {
            EnvState::Catch {
                ball_row,
                ball_col,
                paddle_col,
            } => {
                match action {
                    0 => *paddle_col = paddle_col.saturating_sub(1),
                    2 => *paddle_col = (*paddle_col + 1).min(g - 1),
                    _ => {}
                }
                *ball_row += 1;
                if *ball_row == g - 1 {
                    (if ball_col == paddle_col { 1.0 } else { -1.0 }, true)
                } else {
                    (0.0, false)
                }
            }
            EnvState::GridGoal { agent, goal } => {
                match action {
                    0 => agent.0 = agent.0.saturating_sub(1),
                    1 => agent.0 = (agent.0 + 1).min(g - 1),
                    2 => agent.1 = agent.1.saturating_sub(1),
                    _ => agent.1 = (agent.1 + 1).min(g - 1),
                }
                if agent == goal {
                    (1.0, true)
                } else {
                    (0.0, false)
                }
            }
        };
        self.steps += 1;
        self.done = terminal || self.steps >= self.config.max_episode_steps;
        let frame = self.render();
        self.stack.push_frame(&frame);
        Ok(StepResult {
            observation: self.stack.clone(),
            reward,
            done: self.done,
        })
    }
}

pub fn render_state(config: &EnvConfig, state: &EnvState) -> Vec<u8> {
    let g = config.grid_size;
    let cells: Vec<(usize, usize, u8)> = match *state {
        EnvState::Catch {
            ball_row,
            ball_col,
            paddle_col,
        } => vec![(ball_row, ball_col, 255), (g - 1, paddle_col, 255)],
        EnvState::GridGoal { agent, goal } => vec![(goal.0, goal.1, 128), (agent.0, agent.1, 255)],
    };
    render_cells(&cells, g, config.render_size)
}

/// Action a perfect Catch player takes: move towards the ball's column.
pub fn catch_optimal_action(state: &EnvState) -> usize {
    match *state {
        EnvState::Catch {
            ball_col, paddle_col, ..
        } => match ball_col.cmp(&paddle_col) {
            std::cmp::Ordering::Less => 0,
            std::cmp::Ordering::Equal => 1,
            std::cmp::Ordering::Greater => 2,
        },
        EnvState::GridGoal { .. } => 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_observation() {
        let (_, a) = Env::new(EnvConfig::catch(), 7).unwrap();
        let (_, b) = Env::new(EnvConfig::catch(), 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.shape(), [2, 24, 24]);
        let (_, g) = Env::new(EnvConfig::grid_goal(), 7).unwrap();
        assert_eq!(g.shape(), [1, 32, 32]);
    }

    #[test]
    fn catch_starts_with_ball_on_top_and_paddle_on_bottom() {
        for seed in 0..20 {
            let (env, obs) = Env::new(EnvConfig::catch(), seed).unwrap();
            let EnvState::Catch {
                ball_row,
                paddle_col,
                ball_col,
            } = env.state()
            else {
                panic!("wrong state")
            };
            assert_eq!(ball_row, 0);
            let frame = obs.latest_frame();
            // top row block of the ball and bottom row block of the paddle
            assert_eq!(frame[2 * ball_col], 255);
            assert_eq!(frame[23 * 24 + 2 * paddle_col], 255);
            assert_eq!(obs.frame(0), obs.frame(1));
        }
    }

    #[test]
    fn catch_reward_rules() {
        let (mut env, _) = Env::new(EnvConfig::catch(), 0).unwrap();
        env.reset_to(EnvState::Catch {
            ball_row: 10,
            ball_col: 4,
            paddle_col: 4,
        })
        .unwrap();
        let r = env.step(1).unwrap();
        assert_eq!((r.reward, r.done), (1.0, true));
        assert!(env.step(1).is_err());

        env.reset_to(EnvState::Catch {
            ball_row: 10,
            ball_col: 4,
            paddle_col: 4,
        })
        .unwrap();
        let r = env.step(2).unwrap();
        assert_eq!((r.reward, r.done), (-1.0, true));

        env.reset_to(EnvState::Catch {
            ball_row: 3,
            ball_col: 4,
            paddle_col: 9,
        })
        .unwrap();
        let r = env.step(0).unwrap();
        assert_eq!((r.reward, r.done), (0.0, false));
    }

    #[test]
    fn grid_goal_reaching_goal_ends_episode() {
        let (mut env, _) = Env::new(EnvConfig::grid_goal(), 0).unwrap();
        env.reset_to(EnvState::GridGoal {
            agent: (3, 3),
            goal: (3, 4),
        })
        .unwrap();
        let r = env.step(3).unwrap();
        assert_eq!((r.reward, r.done), (1.0, true));
    }

    #[test]
    fn frame_stack_shifts() {
        let (mut env, obs0) = Env::new(EnvConfig::catch(), 3).unwrap();
        let r = env.step(1).unwrap();
        assert_eq!(r.observation.frame(0), obs0.latest_frame());
        assert_eq!(r.observation.latest_frame(), env.render().as_slice());
    }

    #[test]
    fn render_blocks() {
        assert!(render_cells(&[], 12, 24).iter().all(|&p| p == 0));
        let f = render_cells(&[(3, 5, 255)], 12, 24);
        let lit: Vec<usize> = (0..f.len()).filter(|&i| f[i] == 255).collect();
        assert_eq!(lit, vec![6 * 24 + 10, 6 * 24 + 11, 7 * 24 + 10, 7 * 24 + 11]);
        // non-integer scale still yields one contiguous block
        let f = render_cells(&[(1, 1, 255)], 3, 8);
        let lit: Vec<usize> = (0..f.len()).filter(|&i| f[i] == 255).collect();
        assert_eq!(
            lit,
            vec![
                2 * 8 + 2,
                2 * 8 + 3,
                2 * 8 + 4,
                3 * 8 + 2,
                3 * 8 + 3,
                3 * 8 + 4,
                4 * 8 + 2,
                4 * 8 + 3,
                4 * 8 + 4
            ]
        );
    }

    #[test]
    fn optimal_catch_policy_always_catches() {
        let (mut env, _) = Env::new(EnvConfig::catch(), 99).unwrap();
        for _ in 0..200 {
            env.reset();
            loop {
                let r = env.step(catch_optimal_action(&env.state())).unwrap();
                if r.done {
                    assert_eq!(r.reward, 1.0);
                    break;
                }
            }
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let mut c = EnvConfig::catch();
        c.render_size = 8;
        assert!(Env::new(c, 0).is_err());
        let mut c = EnvConfig::catch();
        c.frame_stack = 0;
        assert!(Env::new(c, 0).is_err());
    }
}

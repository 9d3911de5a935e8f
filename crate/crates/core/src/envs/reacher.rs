use crate::envs::{check_not_finished, clip_action, EnvSpec, Environment, StepResult};
use crate::error::Result;
use crate::nn::Rng;

/// Planar point mass driven toward a fixed goal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReacherConfig {
    pub dt: f64,
    /// Arena is the square `[-arena, arena]²`.
    pub arena: f64,
    pub max_speed: f64,
    pub max_accel: f64,
    pub goal: [f64; 2],
    pub action_cost: f64,
    pub max_episode_steps: usize,
}

impl Default for ReacherConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            arena: 1.0,
            max_speed: 1.0,
            max_accel: 1.0,
            goal: [0.0, 0.0],
            action_cost: 0.01,
            max_episode_steps: 150,
        }
    }
}

/// Observation `[x, y, ẋ, ẏ]`, action is a bounded acceleration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointReacher {
    pub config: ReacherConfig,
    pos: [f64; 2],
    vel: [f64; 2],
    elapsed: usize,
}

impl PointReacher {
    pub fn new(config: ReacherConfig) -> Self {
        Self {
            config,
            ..Default::default()
        }
    }

    pub fn set_state(&mut self, pos: [f64; 2], vel: [f64; 2]) {
        self.pos = pos;
        self.vel = vel;
        self.elapsed = 0;
    }

    pub fn position(&self) -> [f64; 2] {
        self.pos
    }

    pub fn goal_distance(&self) -> f64 {
        let [gx, gy] = self.config.goal;
        ((self.pos[0] - gx).powi(2) + (self.pos[1] - gy).powi(2)).sqrt()
    }
}

impl Environment for PointReacher {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            state_dim: 4,
            action_dim: 2,
            action_bound: self.config.max_accel,
            max_episode_steps: self.config.max_episode_steps,
        }
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = Rng::new(seed);
        let a = self.config.arena;
        self.pos = [rng.uniform_range(-a, a), rng.uniform_range(-a, a)];
        self.vel = [0.0, 0.0];
        self.elapsed = 0;
        self.observation()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let spec = self.spec();
        check_not_finished(self.elapsed, &spec)?;
        let u = clip_action(action, &spec)?;
        let c = self.config;
        let reward = -self.goal_distance() - c.action_cost * (u[0] * u[0] + u[1] * u[1]);

        #[allow(clippy::needless_range_loop)]
        for k in 0..2 {
            self.vel[k] = (self.vel[k] + u[k] * c.dt).clamp(-c.max_speed, c.max_speed);
            let p = self.pos[k] + self.vel[k] * c.dt;
            if p.abs() > c.arena {
                // Inelastic wall.
                self.pos[k] = p.clamp(-c.arena, c.arena);
                self.vel[k] = 0.0;
            } else {
                self.pos[k] = p;
            }
        }
        self.elapsed += 1;

        Ok(StepResult {
            next_observation: self.observation(),
            reward,
            terminal: false,
            truncated: self.elapsed >= spec.max_episode_steps,
        })
    }

    fn observation(&self) -> Vec<f64> {
        vec![self.pos[0], self.pos[1], self.vel[0], self.vel[1]]
    }

    fn elapsed_steps(&self) -> usize {
        self.elapsed
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn at_rest_without_action_stays_put() {
        let mut env = PointReacher::default();
        env.set_state([0.3, -0.4], [0.0, 0.0]);
        let r = env.step(&[0.0, 0.0]).unwrap();
        assert_eq!(r.next_observation, vec![0.3, -0.4, 0.0, 0.0]);
        assert!((r.reward + 0.5).abs() < 1e-15);
    }

    #[test]
    fn reset_inside_arena() {
        let mut env = PointReacher::default();
        for seed in 0..10_000 {
            let o = env.reset(seed);
            assert!(o[0].abs() <= 1.0 && o[1].abs() <= 1.0);
            assert_eq!(&o[2..], &[0.0, 0.0]);
        }
    }

    #[test]
    fn bounded_speed_position_and_reward() {
        let mut env = PointReacher::default();
        let mut rng = Rng::new(3);
        for ep in 0..20 {
            env.reset(ep);
            for _ in 0..150 {
                let a = [rng.uniform_range(-2.0, 2.0), rng.uniform_range(-2.0, 2.0)];
                let r = env.step(&a).unwrap();
                assert!(r.reward <= 0.0);
                let o = &r.next_observation;
                assert!(o.iter().all(|v| v.abs() <= 1.0));
            }
        }
    }
}

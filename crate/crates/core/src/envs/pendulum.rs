use std::f64::consts::PI;

use crate::envs::{check_not_finished, clip_action, EnvSpec, Environment, StepResult};
use crate::error::Result;
use crate::nn::Rng;

/// Physical constants of the swing-up task. Angle `0` is upright.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumConfig {
    pub dt: f64,
    pub gravity: f64,
    pub mass: f64,
    pub length: f64,
    pub max_torque: f64,
    pub max_speed: f64,
    /// Viscous friction coefficient on the angular velocity.
    pub friction: f64,
    pub max_episode_steps: usize,
}

impl Default for PendulumConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            gravity: 10.0,
            mass: 1.0,
            length: 1.0,
            max_torque: 2.0,
            max_speed: 8.0,
            friction: 0.0,
            max_episode_steps: 200,
        }
    }
}

/// Torque-limited rod pendulum; observation `[cos θ, sin θ, θ̇]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Pendulum {
    pub config: PendulumConfig,
    theta: f64,
    theta_dot: f64,
    elapsed: usize,
}

/// Wraps an angle into `[-π, π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    (theta + PI).rem_euclid(2.0 * PI) - PI
}

impl Pendulum {
    pub fn new(config: PendulumConfig) -> Self {
        Self {
            config,
            ..Default::default()
        }
    }

    /// Places the pendulum at an explicit state and restarts the step count.
    pub fn set_state(&mut self, theta: f64, theta_dot: f64) {
        self.theta = theta;
        self.theta_dot = theta_dot;
        self.elapsed = 0;
    }

    pub fn state(&self) -> (f64, f64) {
        (self.theta, self.theta_dot)
    }

    /// `½ I θ̇² + m g (l/2) cos θ` with `I = m l² / 3`.
    pub fn mechanical_energy(&self) -> f64 {
        let c = &self.config;
        let inertia = c.mass * c.length * c.length / 3.0;
        0.5 * inertia * self.theta_dot * self.theta_dot
            + c.mass * c.gravity * c.length / 2.0 * self.theta.cos()
    }

    pub fn cost(theta: f64, theta_dot: f64, torque: f64) -> f64 {
        let th = wrap_angle(theta);
        th * th + 0.1 * theta_dot * theta_dot + 0.001 * torque * torque
    }
}

impl Environment for Pendulum {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            state_dim: 3,
            action_dim: 1,
            action_bound: self.config.max_torque,
            max_episode_steps: self.config.max_episode_steps,
        }
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = Rng::new(seed);
        self.theta = rng.uniform_range(-PI, PI);
        self.theta_dot = rng.uniform_range(-1.0, 1.0);
        self.elapsed = 0;
        self.observation()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let spec = self.spec();
        check_not_finished(self.elapsed, &spec)?;
        let u = clip_action(action, &spec)?[0];
        let c = self.config;
        let reward = -Self::cost(self.theta, self.theta_dot, u);

        // Semi-implicit Euler: velocity first, then position with the new velocity.
        let accel = 3.0 * c.gravity / (2.0 * c.length) * self.theta.sin()
            + 3.0 / (c.mass * c.length * c.length) * u
            - c.friction * self.theta_dot;
        self.theta_dot = (self.theta_dot + accel * c.dt).clamp(-c.max_speed, c.max_speed);
        self.theta += self.theta_dot * c.dt;
        self.elapsed += 1;

        Ok(StepResult {
            next_observation: self.observation(),
            reward,
            terminal: false,
            truncated: self.elapsed >= spec.max_episode_steps,
        })
    }

    fn observation(&self) -> Vec<f64> {
        vec![self.theta.cos(), self.theta.sin(), self.theta_dot]
    }

    fn elapsed_steps(&self) -> usize {
        self.elapsed
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hanging_equilibrium_is_stationary() {
        let mut env = Pendulum::default();
        env.set_state(PI, 0.0);
        for _ in 0..200 {
            env.step(&[0.0]).unwrap();
        }
        let (theta, theta_dot) = env.state();
        assert!((theta - PI).abs() < 1e-12);
        assert!(theta_dot.abs() < 1e-12);
    }

    #[test]
    fn zero_cost_at_goal() {
        let mut env = Pendulum::default();
        env.set_state(0.0, 0.0);
        let r = env.step(&[0.0]).unwrap();
        assert_eq!(r.reward, 0.0);
    }

    #[test]
    fn reset_ranges() {
        let mut env = Pendulum::default();
        for seed in 0..10_000 {
            env.reset(seed);
            let (theta, theta_dot) = env.state();
            assert!((-PI..=PI).contains(&theta));
            assert!((-1.0..=1.0).contains(&theta_dot));
            assert_eq!(env.elapsed_steps(), 0);
        }
        assert_eq!(env.reset(5), env.reset(5));
    }

    #[test]
    fn rewards_non_positive_and_observation_bounded() {
        let mut env = Pendulum::default();
        let mut rng = Rng::new(8);
        for ep in 0..20 {
            env.reset(ep);
            for _ in 0..200 {
                let r = env.step(&[rng.uniform_range(-3.0, 3.0)]).unwrap();
                assert!(r.reward <= 0.0);
                let o = &r.next_observation;
                assert!(o[0].abs() <= 1.0 && o[1].abs() <= 1.0 && o[2].abs() <= 8.0);
            }
        }
    }

    #[test]
    fn energy_has_no_secular_drift() {
        // Symplectic Euler keeps energy bounded; compare quarter-episode means
        // against the bottom-to-top energy range m·g·l.
        let config = PendulumConfig::default();
        let scale = config.mass * config.gravity * config.length;
        for theta0 in [0.05, 0.5, PI / 2.0, PI - 1.0, PI - 0.1] {
            let mut env = Pendulum::new(config);
            env.set_state(theta0, 0.0);
            let mut energies = Vec::with_capacity(200);
            for _ in 0..200 {
                env.step(&[0.0]).unwrap();
                energies.push(env.mechanical_energy());
            }
            let q = energies.len() / 4;
            let first = energies[..q].iter().sum::<f64>() / q as f64;
            let last = energies[energies.len() - q..].iter().sum::<f64>() / q as f64;
            assert!((last - first).abs() / scale < 0.01, "θ0 = {theta0}");
        }
    }

    #[test]
    fn torque_is_clipped() {
        let mut a = Pendulum::default();
        let mut b = Pendulum::default();
        a.set_state(1.0, 0.0);
        b.set_state(1.0, 0.0);
        assert_eq!(
            a.step(&[50.0]).unwrap().next_observation,
            b.step(&[2.0]).unwrap().next_observation
        );
    }

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((wrap_angle(-0.25) + 0.25).abs() < 1e-15);
    }
}

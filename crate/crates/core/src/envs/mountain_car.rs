use rand_chacha::ChaCha8Rng;

use super::{Environment, Step};

/// Throttle value of each action index.
pub const MOUNTAIN_CAR_ACTIONS: [f64; 3] = [-1.0, 0.0, 1.0];

pub const POSITION_BOUNDS: (f64, f64) = (-1.2, 0.6);
pub const VELOCITY_BOUNDS: (f64, f64) = (-0.07, 0.07);
pub const GOAL_POSITION: f64 = 0.5;
pub const START: [f64; 2] = [-0.5, 0.0];

/// Classic mountain car: `v += 0.001·a − 0.0025·cos(3x)`, `x += v`,
/// clamped to the bounds above; the left wall zeroes velocity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MountainCar {
    pub horizon: usize,
}

impl Default for MountainCar {
    fn default() -> Self {
        MountainCar { horizon: 1000 }
    }
}

impl MountainCar {
    pub fn bounds() -> Vec<(f64, f64)> {
        vec![POSITION_BOUNDS, VELOCITY_BOUNDS]
    }

    pub fn is_goal(state: &[f64; 2]) -> bool {
        state[0] >= GOAL_POSITION
    }

    pub fn dynamics(state: &[f64; 2], action: usize) -> [f64; 2] {
        let [x, v] = *state;
        let throttle = MOUNTAIN_CAR_ACTIONS[action];
        let mut v = (v + 0.001 * throttle - 0.0025 * (3.0 * x).cos())
            .clamp(VELOCITY_BOUNDS.0, VELOCITY_BOUNDS.1);
        let mut x = x + v;
        if x <= POSITION_BOUNDS.0 {
            x = POSITION_BOUNDS.0;
            v = 0.0;
        }
        if x > POSITION_BOUNDS.1 {
            x = POSITION_BOUNDS.1;
        }
        [x, v]
    }
}

impl Environment for MountainCar {
    type State = [f64; 2];

    fn n_actions(&self) -> usize {
        MOUNTAIN_CAR_ACTIONS.len()
    }

    fn reset(&self, _rng: &mut ChaCha8Rng) -> [f64; 2] {
        START
    }

    fn step(&self, state: &[f64; 2], action: usize, _rng: &mut ChaCha8Rng) -> Step<[f64; 2]> {
        let next = MountainCar::dynamics(state, action);
        Step {
            next_state: next,
            reward: -1.0,
            terminal: MountainCar::is_goal(&next),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::rollout;

    #[test]
    fn velocity_is_clamped() {
        let s = MountainCar::dynamics(&[0.0, 0.0699], 2);
        assert!(s[1] <= 0.07);
        let s = MountainCar::dynamics(&[-0.3, -0.07], 0);
        assert!(s[1] >= -0.07);
    }

    #[test]
    fn left_wall_zeroes_velocity() {
        let s = MountainCar::dynamics(&[-1.19, -0.05], 0);
        assert_eq!(s, [-1.2, 0.0]);
    }

    #[test]
    fn coasting_never_reaches_goal() {
        let mut s = START;
        for _ in 0..10_000 {
            s = MountainCar::dynamics(&s, 1);
            assert!(!MountainCar::is_goal(&s));
            assert!(s[0].is_finite() && s[1].is_finite());
        }
    }

    #[test]
    fn energy_pumping_reaches_goal() {
        // Push in the direction of motion.
        let car = MountainCar::default();
        let trace = rollout(
            &car,
            |s: &[f64; 2], _: &mut ChaCha8Rng| if s[1] < 0.0 { 0 } else { 2 },
            1000,
            0,
        )
        .unwrap();
        assert!(trace.last().unwrap().terminal);
        assert!(trace.len() < 200);
    }
}

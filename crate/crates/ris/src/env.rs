//! Goal-conditioned point-mass maze environments.
//!
//! A point agent moves in a rectangle with axis-aligned interior walls.
//! Actions live in [-1, 1]^2 and are scaled by `max_step`; motion resolves
//! per axis (x then y) and an axis move that would enter a wall or leave the
//! bounds is cancelled, so the agent slides along obstacles. Reward is -1
//! per step until the position lands within `success_radius` of the goal,
//! which ends the episode with reward 0.

use crate::error::{Result, RisError};
use rand::RngExt;
use rand_chacha::ChaCha12Rng;

/// A (state, goal) pair; states and goals share the position space.
pub type StateGoal = ((f64, f64), (f64, f64));

/// Axis-aligned rectangle `(x, y)` to `(x + w, y + h)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Rect { x, y, w, h }
    }

    /// Strict interior test: touching a wall face is allowed, being inside
    /// is not, so the agent can slide flush along walls.
    pub fn contains_interior(&self, p: (f64, f64)) -> bool {
        p.0 > self.x && p.0 < self.x + self.w && p.1 > self.y && p.1 < self.y + self.h
    }

    pub fn sample_inside(&self, rng: &mut ChaCha12Rng) -> (f64, f64) {
        (
            rng.random_range(self.x..self.x + self.w),
            rng.random_range(self.y..self.y + self.h),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MazeKind {
    U,
    S,
}

/// World geometry plus the success criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct MazeSpec {
    /// (width, height); the playable area is [0, w] x [0, h].
    pub bounds: (f64, f64),
    pub walls: Vec<Rect>,
    pub success_radius: f64,
    /// Start/goal regions of the most temporally extended configuration,
    /// when the layout defines one.
    pub hardest: Option<(Rect, Rect)>,
}

impl MazeSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.bounds.0 > 0.0 && self.bounds.1 > 0.0) {
            return Err(RisError::Config(format!("bad bounds {:?}", self.bounds)));
        }
        if !(self.success_radius > 0.0) {
            return Err(RisError::Config(format!(
                "success_radius must be positive, got {}",
                self.success_radius
            )));
        }
        for r in &self.walls {
            if r.w <= 0.0 || r.h <= 0.0 {
                return Err(RisError::Config(format!("degenerate wall {r:?}")));
            }
            if r.x < 0.0 || r.y < 0.0 || r.x + r.w > self.bounds.0 || r.y + r.h > self.bounds.1 {
                return Err(RisError::Config(format!(
                    "wall {r:?} lies outside bounds {:?}",
                    self.bounds
                )));
            }
        }
        Ok(())
    }

    /// A position is free when it is inside the bounds and not strictly
    /// inside any wall.
    pub fn is_free(&self, p: (f64, f64)) -> bool {
        p.0 >= 0.0
            && p.0 <= self.bounds.0
            && p.1 >= 0.0
            && p.1 <= self.bounds.1
            && !self.walls.iter().any(|r| r.contains_interior(p))
    }

    pub fn diagonal(&self) -> f64 {
        (self.bounds.0 * self.bounds.0 + self.bounds.1 * self.bounds.1).sqrt()
    }
}

/// Euclidean success test; the boundary is inclusive.
pub fn success(position: (f64, f64), goal: (f64, f64), spec: &MazeSpec) -> bool {
    let (dx, dy) = (position.0 - goal.0, position.1 - goal.1);
    (dx * dx + dy * dy).sqrt() <= spec.success_radius
}

/// The named layouts. The U corridor is one interior wall attached to the
/// left side; the S corridor interleaves a left-attached and a
/// right-attached wall. Walls are 1.5 units thick.
pub fn make_maze(kind: MazeKind) -> MazeSpec {
    match kind {
        MazeKind::U => MazeSpec {
            bounds: (7.5, 18.0),
            walls: vec![Rect::new(0.0, 8.25, 6.0, 1.5)],
            success_radius: 0.5,
            hardest: Some((
                Rect::new(0.75, 0.75, 1.5, 1.5),
                Rect::new(0.75, 15.75, 1.5, 1.5),
            )),
        },
        MazeKind::S => MazeSpec {
            bounds: (12.0, 12.0),
            walls: vec![
                Rect::new(0.0, 3.5, 8.5, 1.5),
                Rect::new(3.5, 7.0, 8.5, 1.5),
            ],
            success_radius: 0.5,
            hardest: Some((
                Rect::new(0.75, 0.75, 1.5, 1.5),
                Rect::new(9.75, 9.75, 1.5, 1.5),
            )),
        },
    }
}

/// Agent and goal positions plus the step counter of the running episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvState {
    pub position: (f64, f64),
    pub goal: (f64, f64),
    pub steps_elapsed: u32,
}

/// The simulated world: geometry plus kinematics.
#[derive(Debug, Clone)]
pub struct PointMass {
    pub spec: MazeSpec,
    /// Displacement per unit action component.
    pub max_step: f64,
    pub episode_limit: u32,
}

pub const DEFAULT_MAX_STEP: f64 = 0.75;
pub const DEFAULT_EPISODE_LIMIT: u32 = 100;

const RESET_ATTEMPTS: usize = 10_000;

impl PointMass {
    pub fn new(spec: MazeSpec) -> Self {
        PointMass {
            spec,
            max_step: DEFAULT_MAX_STEP,
            episode_limit: DEFAULT_EPISODE_LIMIT,
        }
    }

    fn sample_free(&self, rng: &mut ChaCha12Rng) -> Result<(f64, f64)> {
        for _ in 0..RESET_ATTEMPTS {
            let p = (
                rng.random_range(0.0..self.spec.bounds.0),
                rng.random_range(0.0..self.spec.bounds.1),
            );
            if self.spec.is_free(p) {
                return Ok(p);
            }
        }
        Err(RisError::Config(format!(
            "rejection sampling failed {RESET_ATTEMPTS} times; maze has no usable free space"
        )))
    }

    /// Uniform start and goal over the free space.
    pub fn reset(&self, rng: &mut ChaCha12Rng) -> Result<EnvState> {
        let position = self.sample_free(rng)?;
        let goal = self.sample_free(rng)?;
        Ok(EnvState {
            position,
            goal,
            steps_elapsed: 0,
        })
    }

    /// Start and goal drawn from the layout's hardest regions.
    pub fn reset_hardest(&self, rng: &mut ChaCha12Rng) -> Result<EnvState> {
        let (start_box, goal_box) = self.spec.hardest.ok_or_else(|| {
            RisError::Usage("maze layout does not define a hardest configuration".into())
        })?;
        for _ in 0..RESET_ATTEMPTS {
            let position = start_box.sample_inside(rng);
            let goal = goal_box.sample_inside(rng);
            if self.spec.is_free(position) && self.spec.is_free(goal) {
                return Ok(EnvState {
                    position,
                    goal,
                    steps_elapsed: 0,
                });
            }
        }
        Err(RisError::Config(
            "hardest-configuration boxes overlap the walls".into(),
        ))
    }

    /// Fixed start/goal (validated), for evaluation from explicit states.
    pub fn reset_from(&self, position: (f64, f64), goal: (f64, f64)) -> Result<EnvState> {
        if !self.spec.is_free(position) || !self.spec.is_free(goal) {
            return Err(RisError::Usage(format!(
                "start {position:?} or goal {goal:?} is not in free space"
            )));
        }
        Ok(EnvState {
            position,
            goal,
            steps_elapsed: 0,
        })
    }

    /// One transition. Returns (next state, reward, done).
    pub fn step(&self, state: &EnvState, action: (f64, f64)) -> (EnvState, f64, bool) {
        let ax = action.0.clamp(-1.0, 1.0);
        let ay = action.1.clamp(-1.0, 1.0);
        let (mut x, mut y) = state.position;
        let try_x = (x + ax * self.max_step, y);
        if self.spec.is_free(try_x) {
            x = try_x.0;
        }
        let try_y = (x, y + ay * self.max_step);
        if self.spec.is_free(try_y) {
            y = try_y.1;
        }
        let position = (x, y);
        let steps_elapsed = state.steps_elapsed + 1;
        let next = EnvState {
            position,
            goal: state.goal,
            steps_elapsed,
        };
        if success(position, state.goal, &self.spec) {
            (next, 0.0, true)
        } else {
            (next, -1.0, steps_elapsed >= self.episode_limit)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use proptest::prelude::*;

    #[test]
    fn named_layouts_match_reference_dimensions() {
        let u = make_maze(MazeKind::U);
        assert_eq!(u.bounds, (7.5, 18.0));
        let s = make_maze(MazeKind::S);
        assert_eq!(s.bounds, (12.0, 12.0));
        for spec in [&u, &s] {
            spec.validate().unwrap();
            assert!(spec.walls.iter().all(|w| (w.h - 1.5).abs() < 1e-12 || (w.w - 1.5).abs() < 1e-12));
        }
    }

    #[test]
    fn reset_is_deterministic_under_seed() {
        let env = PointMass::new(make_maze(MazeKind::U));
        let a = env.reset(&mut stream_rng(99, Stream::Env, 0)).unwrap();
        let b = env.reset(&mut stream_rng(99, Stream::Env, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn resets_land_outside_walls() {
        let env = PointMass::new(make_maze(MazeKind::U));
        let mut rng = stream_rng(5, Stream::Env, 0);
        for _ in 0..10_000 {
            let s = env.reset(&mut rng).unwrap();
            assert!(env.spec.is_free(s.position));
            assert!(env.spec.is_free(s.goal));
            assert_eq!(s.steps_elapsed, 0);
        }
    }

    /// Approximate chi-square critical value (Wilson-Hilferty).
    fn chi2_crit_99(df: f64) -> f64 {
        let z = 2.326_347_874_040_841; // N(0,1) 99th percentile
        let a = 2.0 / (9.0 * df);
        df * (1.0 - a + z * a.sqrt()).powi(3)
    }

    #[test]
    fn reset_occupancy_is_uniform_over_free_cells() {
        // Bin U-maze resets into 0.75-unit cells and test uniformity over
        // the cells that are fully free (the conditional law is uniform).
        let env = PointMass::new(make_maze(MazeKind::U));
        let cell = 0.75;
        let (nx, ny) = (10usize, 24usize);
        let fully_free = |cx: usize, cy: usize| -> bool {
            let corners = [
                (cx as f64 * cell + 1e-9, cy as f64 * cell + 1e-9),
                ((cx + 1) as f64 * cell - 1e-9, cy as f64 * cell + 1e-9),
                (cx as f64 * cell + 1e-9, (cy + 1) as f64 * cell - 1e-9),
                ((cx + 1) as f64 * cell - 1e-9, (cy + 1) as f64 * cell - 1e-9),
            ];
            corners.iter().all(|&p| env.spec.is_free(p))
        };
        let mut counts = vec![0u64; nx * ny];
        let mut kept = 0u64;
        let mut rng = stream_rng(17, Stream::Env, 0);
        for _ in 0..40_000 {
            let s = env.reset(&mut rng).unwrap();
            let (cx, cy) = (
                ((s.position.0 / cell) as usize).min(nx - 1),
                ((s.position.1 / cell) as usize).min(ny - 1),
            );
            if fully_free(cx, cy) {
                counts[cy * nx + cx] += 1;
                kept += 1;
            }
        }
        let free_cells: Vec<u64> = (0..nx * ny)
            .filter(|i| fully_free(i % nx, i / nx))
            .map(|i| counts[i])
            .collect();
        let k = free_cells.len() as f64;
        let expected = kept as f64 / k;
        let chi2: f64 = free_cells
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        assert!(
            chi2 < chi2_crit_99(k - 1.0),
            "chi2 {chi2} exceeds 1% critical value {}",
            chi2_crit_99(k - 1.0)
        );
    }

    #[test]
    fn unusable_maze_fails_reset_after_bounded_attempts() {
        let spec = MazeSpec {
            bounds: (2.0, 2.0),
            walls: vec![Rect::new(0.0, 0.0, 2.0, 2.0)],
            success_radius: 0.5,
            hardest: None,
        };
        let env = PointMass::new(spec);
        let err = env.reset(&mut stream_rng(1, Stream::Env, 0));
        assert!(matches!(err, Err(crate::error::RisError::Config(_))));
    }

    #[test]
    fn wall_blocks_axis_and_costs_reward() {
        let env = PointMass::new(make_maze(MazeKind::U));
        // Just below the interior wall (y in [8.25, 9.75]), pushing up.
        let state = env.reset_from((3.0, 8.0), (7.0, 17.0)).unwrap();
        let (next, reward, done) = env.step(&state, (0.0, 1.0));
        assert_eq!(next.position, (3.0, 8.0));
        assert_eq!(reward, -1.0);
        assert!(!done);
        // Sliding along x still works while y is blocked.
        let (next, _, _) = env.step(&state, (1.0, 1.0));
        assert_eq!(next.position, (3.75, 8.0));
    }

    #[test]
    fn reaching_goal_gives_zero_reward_and_done() {
        let env = PointMass::new(make_maze(MazeKind::U));
        let state = env.reset_from((3.0, 3.0), (3.4, 3.0)).unwrap();
        let (next, reward, done) = env.step(&state, (0.2, 0.0));
        assert!(success(next.position, next.goal, &env.spec));
        assert_eq!(reward, 0.0);
        assert!(done);
    }

    #[test]
    fn zero_action_far_from_goal() {
        let env = PointMass::new(make_maze(MazeKind::U));
        let state = env.reset_from((3.0, 3.0), (3.0, 15.0)).unwrap();
        let (next, reward, done) = env.step(&state, (0.0, 0.0));
        assert_eq!(next.position, (3.0, 3.0));
        assert_eq!(reward, -1.0);
        assert!(!done);
        assert_eq!(next.steps_elapsed, 1);
    }

    #[test]
    fn success_boundary_is_inclusive() {
        let spec = make_maze(MazeKind::U);
        assert!(success((1.0, 1.0), (1.0, 1.0), &spec));
        assert!(success((1.0, 1.0), (1.0, 1.5), &spec));
        assert!(!success((1.0, 1.0), (1.0, 1.5 + 1e-9), &spec));
    }

    #[test]
    fn episode_limit_terminates_without_success() {
        let mut env = PointMass::new(make_maze(MazeKind::U));
        env.episode_limit = 3;
        let mut state = env.reset_from((3.0, 3.0), (3.0, 15.0)).unwrap();
        for want_done in [false, false, true] {
            let (next, reward, done) = env.step(&state, (0.0, 0.0));
            assert_eq!(reward, -1.0);
            assert_eq!(done, want_done);
            state = next;
        }
    }

    #[test]
    fn optimal_straight_run_returns_minus_steps_before_success() {
        let env = PointMass::new(make_maze(MazeKind::U));
        let mut state = env.reset_from((1.0, 1.0), (1.0, 5.5)).unwrap();
        let mut ret = 0.0;
        let mut steps = 0;
        loop {
            let (next, reward, done) = env.step(&state, (0.0, 1.0));
            ret += reward;
            steps += 1;
            state = next;
            if done {
                break;
            }
        }
        // 4.5 units at 0.75/step: within 0.5 after 6 steps; 5 rewards of -1.
        assert_eq!(steps, 6);
        assert_eq!(ret, -(steps as f64 - 1.0));
    }

    #[test]
    fn hardest_configuration_uses_opposite_arms() {
        let env = PointMass::new(make_maze(MazeKind::U));
        let mut rng = stream_rng(23, Stream::Eval, 0);
        for _ in 0..100 {
            let s = env.reset_hardest(&mut rng).unwrap();
            assert!(s.position.1 < 2.5 && s.goal.1 > 15.5);
            // straight line crosses the wall: the detour is forced
            assert!(s.position.0 < 6.0 && s.goal.0 < 6.0);
        }
    }

    proptest! {
        /// No action sequence can push the agent into a wall or out of bounds.
        #[test]
        fn agent_never_enters_walls(
            seed in 0u64..1000,
            actions in proptest::collection::vec((-1.5f64..1.5, -1.5f64..1.5), 1..80)
        ) {
            let env = PointMass::new(make_maze(MazeKind::S));
            let mut rng = stream_rng(seed, Stream::Env, 0);
            let mut state = env.reset(&mut rng).unwrap();
            for a in actions {
                let (next, _, done) = env.step(&state, a);
                prop_assert!(env.spec.is_free(next.position));
                if done { break; }
                state = next;
            }
        }

        /// step is a pure function of (state, action).
        #[test]
        fn step_is_deterministic(x in 0.5f64..7.0, y in 0.5f64..17.5, ax in -1.0f64..1.0, ay in -1.0f64..1.0) {
            let env = PointMass::new(make_maze(MazeKind::U));
            prop_assume!(env.spec.is_free((x, y)));
            let state = env.reset_from((x, y), (1.0, 1.0)).unwrap();
            let (n1, r1, d1) = env.step(&state, (ax, ay));
            let (n2, r2, d2) = env.step(&state, (ax, ay));
            prop_assert_eq!(n1, n2);
            prop_assert_eq!(r1, r2);
            prop_assert_eq!(d1, d2);
        }
    }
}

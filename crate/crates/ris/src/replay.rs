//! Trajectory-aware replay buffer with hindsight goal relabeling.
//!
//! Transitions are stored per episode so the "future state of the same
//! trajectory" relabeling strategy has O(1) lookups. Eviction removes whole
//! trajectories, oldest first. Relabeled rewards and termination flags are
//! recomputed from the success predicate, so `done` in sampled batches
//! always means goal-reached (time-limit cutoffs never suppress the Bellman
//! bootstrap).

use crate::env::{success, MazeSpec};
use crate::error::{Result, RisError};
use rand::RngExt;
use rand_chacha::ChaCha12Rng;
use std::collections::VecDeque;

/// One environment step, the replay unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: (f64, f64),
    pub action: (f64, f64),
    pub reward: f64,
    pub next_state: (f64, f64),
    pub done: bool,
    pub goal: (f64, f64),
    pub trajectory_id: u64,
    pub index_in_trajectory: u32,
    /// Length of the owning trajectory; stamped on push, enables future
    /// lookups without a separate index.
    pub traj_len: u32,
}

impl Transition {
    pub fn new(
        state: (f64, f64),
        action: (f64, f64),
        reward: f64,
        next_state: (f64, f64),
        done: bool,
        goal: (f64, f64),
    ) -> Self {
        Transition {
            state,
            action,
            reward,
            next_state,
            done,
            goal,
            trajectory_id: 0,
            index_in_trajectory: 0,
            traj_len: 0,
        }
    }
}

/// How a sampled transition's goal was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelabelKind {
    /// Original goal kept (20%).
    Original,
    /// Goal replaced by the state of a uniformly random stored transition (40%).
    RandomState,
    /// Goal replaced by a random strictly-later state of the same trajectory
    /// (40%); falls back to the original goal at the trajectory tail.
    Future,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RelabelCounts {
    pub original: usize,
    pub random_state: usize,
    pub future: usize,
}

pub struct ReplayBuffer {
    data: VecDeque<Transition>,
    traj_lens: VecDeque<u32>,
    capacity: usize,
    next_traj_id: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            data: VecDeque::new(),
            traj_lens: VecDeque::new(),
            capacity,
            next_traj_id: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn num_trajectories(&self) -> usize {
        self.traj_lens.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.data.iter()
    }

    /// Stores one contiguous episode, stamping trajectory bookkeeping, then
    /// evicts oldest whole trajectories until the capacity bound holds.
    pub fn push_trajectory(&mut self, mut steps: Vec<Transition>) -> Result<()> {
        if steps.is_empty() {
            return Ok(());
        }
        if steps.len() > self.capacity {
            return Err(RisError::Config(format!(
                "episode of {} transitions exceeds buffer capacity {}",
                steps.len(),
                self.capacity
            )));
        }
        for t in &steps {
            if t.reward != 0.0 && t.reward != -1.0 {
                return Err(RisError::Usage(format!(
                    "transition reward {} outside {{-1, 0}}",
                    t.reward
                )));
            }
        }
        let id = self.next_traj_id;
        self.next_traj_id += 1;
        let len = steps.len() as u32;
        for (i, t) in steps.iter_mut().enumerate() {
            t.trajectory_id = id;
            t.index_in_trajectory = i as u32;
            t.traj_len = len;
        }
        self.traj_lens.push_back(len);
        self.data.extend(steps);
        while self.data.len() > self.capacity {
            let evict = self.traj_lens.pop_front().expect("non-empty by invariant");
            for _ in 0..evict {
                self.data.pop_front();
            }
        }
        Ok(())
    }

    /// Relabeled minibatch: per transition, keep the goal with probability
    /// 0.2, swap in a random stored state with 0.4, or a random future state
    /// of the same trajectory with 0.4. Rewards and dones are recomputed
    /// against the (possibly new) goal.
    pub fn sample_her(
        &self,
        batch_size: usize,
        spec: &MazeSpec,
        rng: &mut ChaCha12Rng,
    ) -> Vec<Transition> {
        self.sample_her_detailed(batch_size, spec, rng).0
    }

    pub fn sample_her_detailed(
        &self,
        batch_size: usize,
        spec: &MazeSpec,
        rng: &mut ChaCha12Rng,
    ) -> (Vec<Transition>, Vec<RelabelKind>) {
        assert!(!self.is_empty(), "sample_her on empty buffer");
        let mut out = Vec::with_capacity(batch_size);
        let mut kinds = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            let idx = rng.random_range(0..self.data.len());
            let mut t = self.data[idx];
            let roll: f64 = rng.random();
            let kind = if roll < 0.2 {
                RelabelKind::Original
            } else if roll < 0.6 {
                let j = rng.random_range(0..self.data.len());
                t.goal = self.data[j].state;
                RelabelKind::RandomState
            } else {
                let later = t.traj_len - 1 - t.index_in_trajectory;
                if later > 0 {
                    let ahead = rng.random_range(0..later) as usize;
                    t.goal = self.data[idx + 1 + ahead].state;
                }
                RelabelKind::Future
            };
            let reached = success(t.next_state, t.goal, spec);
            t.reward = if reached { 0.0 } else { -1.0 };
            t.done = reached;
            out.push(t);
            kinds.push(kind);
        }
        (out, kinds)
    }

    /// Uniform draw of stored states; these realize the valid-state
    /// distribution the high-level policy is regularized toward.
    pub fn sample_subgoal_candidates(
        &self,
        batch_size: usize,
        rng: &mut ChaCha12Rng,
    ) -> Vec<(f64, f64)> {
        assert!(!self.is_empty(), "sample_subgoal_candidates on empty buffer");
        (0..batch_size)
            .map(|_| self.data[rng.random_range(0..self.data.len())].state)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{make_maze, MazeKind};
    use crate::rng::{stream_rng, Stream};

    /// A trajectory whose states encode (traj, index) for trackability.
    fn coded_trajectory(code: f64, len: usize) -> Vec<Transition> {
        (0..len)
            .map(|i| {
                Transition::new(
                    (code, i as f64 * 0.01),
                    (0.1, 0.1),
                    -1.0,
                    (code, (i + 1) as f64 * 0.01),
                    i + 1 == len,
                    (6.0, 17.0),
                )
            })
            .collect()
    }

    #[test]
    fn push_stamps_contiguous_indices() {
        let mut buf = ReplayBuffer::new(100);
        buf.push_trajectory(coded_trajectory(1.0, 7)).unwrap();
        let stored: Vec<&Transition> = buf.iter().collect();
        assert_eq!(stored.len(), 7);
        for (i, t) in stored.iter().enumerate() {
            assert_eq!(t.index_in_trajectory, i as u32);
            assert_eq!(t.trajectory_id, 0);
            assert_eq!(t.traj_len, 7);
        }
    }

    #[test]
    fn sampled_tuples_are_stored_tuples() {
        let spec = make_maze(MazeKind::U);
        let mut buf = ReplayBuffer::new(100);
        buf.push_trajectory(coded_trajectory(1.0, 5)).unwrap();
        let mut rng = stream_rng(3, Stream::Replay, 0);
        let (batch, kinds) = buf.sample_her_detailed(64, &spec, &mut rng);
        for (t, kind) in batch.iter().zip(kinds.iter()) {
            let original = buf
                .iter()
                .find(|s| s.trajectory_id == t.trajectory_id && s.index_in_trajectory == t.index_in_trajectory)
                .unwrap();
            assert_eq!(t.state, original.state);
            assert_eq!(t.action, original.action);
            assert_eq!(t.next_state, original.next_state);
            if *kind == RelabelKind::Original {
                assert_eq!(t.goal, original.goal);
            }
        }
    }

    #[test]
    fn eviction_drops_oldest_whole_trajectory() {
        let mut buf = ReplayBuffer::new(10);
        buf.push_trajectory(coded_trajectory(1.0, 5)).unwrap();
        buf.push_trajectory(coded_trajectory(2.0, 5)).unwrap();
        buf.push_trajectory(coded_trajectory(3.0, 5)).unwrap();
        assert_eq!(buf.len(), 10);
        assert_eq!(buf.num_trajectories(), 2);
        assert!(buf.iter().all(|t| t.state.0 > 1.5));
    }

    #[test]
    fn oversized_episode_is_config_error() {
        let mut buf = ReplayBuffer::new(4);
        assert!(buf.push_trajectory(coded_trajectory(1.0, 5)).is_err());
    }

    #[test]
    fn relabel_mix_matches_twenty_forty_forty() {
        let spec = make_maze(MazeKind::U);
        let mut buf = ReplayBuffer::new(10_000);
        for k in 0..40 {
            buf.push_trajectory(coded_trajectory(k as f64 * 0.1 + 1.0, 25)).unwrap();
        }
        let mut rng = stream_rng(7, Stream::Replay, 0);
        let n = 100_000;
        let (_, kinds) = buf.sample_her_detailed(n, &spec, &mut rng);
        let mut counts = RelabelCounts::default();
        for k in kinds {
            match k {
                RelabelKind::Original => counts.original += 1,
                RelabelKind::RandomState => counts.random_state += 1,
                RelabelKind::Future => counts.future += 1,
            }
        }
        let f = |c: usize| c as f64 / n as f64;
        assert!((f(counts.original) - 0.2).abs() < 0.01, "{counts:?}");
        assert!((f(counts.random_state) - 0.4).abs() < 0.01, "{counts:?}");
        assert!((f(counts.future) - 0.4).abs() < 0.01, "{counts:?}");
    }

    #[test]
    fn future_goals_come_from_strictly_later_same_trajectory() {
        let spec = make_maze(MazeKind::U);
        let mut buf = ReplayBuffer::new(1000);
        buf.push_trajectory(coded_trajectory(1.0, 30)).unwrap();
        buf.push_trajectory(coded_trajectory(2.0, 30)).unwrap();
        let mut rng = stream_rng(11, Stream::Replay, 0);
        let (batch, kinds) = buf.sample_her_detailed(2000, &spec, &mut rng);
        for (t, kind) in batch.iter().zip(kinds.iter()) {
            if *kind == RelabelKind::Future && t.goal != (6.0, 17.0) {
                // decoded: goal = (traj_code, 0.01 * source_index)
                assert_eq!(t.goal.0, t.state.0, "future goal left the trajectory");
                let goal_idx = (t.goal.1 / 0.01).round() as u32;
                assert!(
                    goal_idx > t.index_in_trajectory,
                    "future goal index {goal_idx} not after {}",
                    t.index_in_trajectory
                );
            }
        }
    }

    #[test]
    fn rewards_and_dones_are_recomputed() {
        let spec = make_maze(MazeKind::U);
        let mut buf = ReplayBuffer::new(1000);
        // states march straight up x=3; any future goal within 0.5 of
        // next_state yields a success relabel.
        let steps: Vec<Transition> = (0..20)
            .map(|i| {
                Transition::new(
                    (3.0, 0.5 + i as f64 * 0.2),
                    (0.0, 0.27),
                    -1.0,
                    (3.0, 0.5 + (i + 1) as f64 * 0.2),
                    i == 19,
                    (7.0, 17.5),
                )
            })
            .collect();
        buf.push_trajectory(steps).unwrap();
        let mut rng = stream_rng(13, Stream::Replay, 0);
        let batch = buf.sample_her(4000, &spec, &mut rng);
        let mut successes = 0;
        for t in &batch {
            let reached = success(t.next_state, t.goal, &spec);
            assert_eq!(t.done, reached);
            assert_eq!(t.reward, if reached { 0.0 } else { -1.0 });
            successes += reached as usize;
        }
        // nearby future goals make success relabels common here
        assert!(successes > 100, "only {successes} successes");
    }

    #[test]
    fn relabel_never_fabricates_states() {
        let spec = make_maze(MazeKind::U);
        let mut buf = ReplayBuffer::new(1000);
        buf.push_trajectory(coded_trajectory(1.0, 12)).unwrap();
        buf.push_trajectory(coded_trajectory(2.0, 9)).unwrap();
        let stored_states: Vec<(f64, f64)> = buf.iter().map(|t| t.state).collect();
        let mut rng = stream_rng(17, Stream::Replay, 0);
        let batch = buf.sample_her(5000, &spec, &mut rng);
        for t in &batch {
            let ok = t.goal == (6.0, 17.0) || stored_states.contains(&t.goal);
            assert!(ok, "fabricated goal {:?}", t.goal);
        }
    }

    #[test]
    fn subgoal_candidates_are_uniform_stored_states() {
        let mut buf = ReplayBuffer::new(100);
        buf.push_trajectory(coded_trajectory(1.0, 10)).unwrap();
        let stored: Vec<(f64, f64)> = buf.iter().map(|t| t.state).collect();
        let mut rng = stream_rng(19, Stream::Replay, 0);
        let n = 50_000;
        let candidates = buf.sample_subgoal_candidates(n, &mut rng);
        let mut counts = vec![0u64; 10];
        for c in &candidates {
            let idx = stored.iter().position(|s| s == c).expect("candidate not stored");
            counts[idx] += 1;
        }
        // chi-square at the 1% level, df = 9 -> critical value 21.67
        let expected = n as f64 / 10.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        assert!(chi2 < 21.67, "chi2 {chi2}");
    }

    #[test]
    fn sampling_is_deterministic_under_seed() {
        let spec = make_maze(MazeKind::U);
        let mut buf = ReplayBuffer::new(100);
        buf.push_trajectory(coded_trajectory(1.0, 10)).unwrap();
        let a = buf.sample_her(32, &spec, &mut stream_rng(23, Stream::Replay, 5));
        let b = buf.sample_her(32, &spec, &mut stream_rng(23, Stream::Replay, 5));
        assert_eq!(a, b);
        let ca = buf.sample_subgoal_candidates(16, &mut stream_rng(23, Stream::Replay, 6));
        let cb = buf.sample_subgoal_candidates(16, &mut stream_rng(23, Stream::Replay, 6));
        assert_eq!(ca, cb);
    }
}

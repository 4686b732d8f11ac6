//! Rolls a checkpoint's deterministic policy through hardest-configuration
//! episodes, printing the trajectory, head outputs, and a value profile
//! along the detour route. Handy when a trained agent misbehaves.
//!
//! Usage: cargo run --release --example trace_policy -- CHECKPOINT [max_step]

use ris::env::{make_maze, MazeKind, PointMass};
use ris::rng::{stream_rng, Stream};
use ris::train::agent_from_checkpoint;

fn main() {
    let mut args = std::env::args().skip(1);
    let path = args.next().expect("usage: trace_policy CHECKPOINT [max_step]");
    let max_step: f64 = args.next().map(|s| s.parse().unwrap()).unwrap_or(0.25);
    let set = ris::checkpoint::load(std::path::Path::new(&path)).unwrap();
    let mut agent = agent_from_checkpoint(&set, &ris::agent::RisHyperparams::default()).unwrap();
    let mut env = PointMass::new(make_maze(MazeKind::U));
    env.max_step = max_step;

    let mut rng = stream_rng(123, Stream::Eval, 0);
    for ep in 0..3 {
        let mut state = env.reset_hardest(&mut rng).unwrap();
        println!("episode {ep}: start {:?} goal {:?}", state.position, state.goal);
        let mut outcome = "timeout";
        for step in 0..env.episode_limit {
            let p = agent.policy_params_for(state.position, state.goal);
            let a = agent.act_mean(state.position, state.goal);
            if step % 10 == 0 {
                println!(
                    "  step {step:3} pos ({:5.2},{:5.2}) mean ({:7.2},{:7.2}) log_std ({:5.2},{:5.2}) act ({:5.2},{:5.2})",
                    state.position.0,
                    state.position.1,
                    p.mean[0],
                    p.mean[1],
                    p.log_std[0],
                    p.log_std[1],
                    a.0,
                    a.1
                );
            }
            let (next, reward, done) = env.step(&state, a);
            state = next;
            if done {
                outcome = if reward == 0.0 { "success" } else { "limit" };
                println!("  done at step {step}: {outcome} pos {:?}", state.position);
                break;
            }
        }
        println!("  outcome: {outcome}");
        let mut vrng = stream_rng(5, Stream::Eval, 1);
        print!("  |V| along route:");
        for probe in [
            (1.5, 1.5),
            (5.0, 1.5),
            (6.7, 5.0),
            (6.7, 9.0),
            (6.7, 13.0),
            (4.0, 16.5),
            (1.5, 16.5),
        ] {
            let v = agent.value(probe, state.goal, &mut vrng);
            print!(" {:5.1}", v.abs());
        }
        println!();
    }
}

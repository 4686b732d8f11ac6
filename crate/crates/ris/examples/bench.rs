use ris::agent::{Agent, PriorMode, RisHyperparams};
use ris::replay::Transition;
use ris::rng::{stream_rng, Stream};
use std::time::Instant;

fn main() {
    let hp = RisHyperparams {
        batch_size: 128,
        hidden: vec![64, 64],
        advantage_samples: 4,
        ..Default::default()
    };
    let b = hp.batch_size;
    let mut agent = Agent::new(hp, &mut stream_rng(1, Stream::Init, 0)).unwrap();
    let mut rng = stream_rng(2, Stream::Updates, 0);
    let mut r2 = stream_rng(3, Stream::Replay, 0);
    use rand::RngExt;
    let batch: Vec<Transition> = (0..b)
        .map(|_| {
            Transition::new(
                (r2.random_range(0.5..7.0), r2.random_range(0.5..17.0)),
                (r2.random_range(-1.0..1.0), r2.random_range(-1.0..1.0)),
                -1.0,
                (r2.random_range(0.5..7.0), r2.random_range(0.5..17.0)),
                false,
                (r2.random_range(0.5..7.0), r2.random_range(0.5..17.0)),
            )
        })
        .collect();
    let candidates: Vec<(f64, f64)> = batch.iter().map(|t| t.next_state).collect();

    let reps = 100;
    let t = Instant::now();
    for _ in 0..reps {
        agent.critic_update(&batch, &mut rng).unwrap();
    }
    println!("critic_update:        {:>7.2} ms", t.elapsed().as_secs_f64() / reps as f64 * 1e3);

    let t = Instant::now();
    for _ in 0..reps {
        agent.highlevel_update(&batch, &candidates, &mut rng).unwrap();
    }
    println!("highlevel_update:     {:>7.2} ms", t.elapsed().as_secs_f64() / reps as f64 * 1e3);

    let t = Instant::now();
    for _ in 0..reps {
        agent.policy_update(&batch, PriorMode::ImaginedSubgoals, None, &mut rng).unwrap();
    }
    println!("policy_update:        {:>7.2} ms", t.elapsed().as_secs_f64() / reps as f64 * 1e3);

    let states: Vec<f64> = batch.iter().flat_map(|t| [t.state.0, t.state.1]).collect();
    let goals: Vec<f64> = batch.iter().flat_map(|t| [t.goal.0, t.goal.1]).collect();
    let t = Instant::now();
    for _ in 0..reps {
        agent.value_batch(&states, &goals, &mut rng);
    }
    println!("value_batch(128):     {:>7.2} ms", t.elapsed().as_secs_f64() / reps as f64 * 1e3);

    let t = Instant::now();
    for _ in 0..reps {
        agent.act((1.0, 1.0), (5.0, 9.0), &mut rng);
    }
    println!("act:                  {:>7.3} ms", t.elapsed().as_secs_f64() / reps as f64 * 1e3);
}

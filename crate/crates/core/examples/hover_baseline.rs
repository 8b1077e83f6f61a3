//! Baseline cascade controller recovering from randomized initial states in
//! still air. Prints the worst position error after 3 s for each seed.
//!
//! cargo run --release --example hover_baseline [seeds]

use gustlab::control::{ControllerMode, ResidualAction};
use gustlab::env::{sample_initial_state, EnvConfig, GustEnv};
use gustlab::mast::WindSensor;
use gustlab::rng::{stream_rng, Stream};
use gustlab::wind::GustProfile;

fn main() -> gustlab::Result<()> {
    let seeds: u64 = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("seeds must be an integer"))
        .unwrap_or(20);
    let cfg = EnvConfig::default();
    let mut env = GustEnv::new(cfg.clone(), ControllerMode::Baseline, WindSensor::ideal())?;
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let init = sample_initial_state(&cfg, &mut stream_rng(seed, Stream::InitialState, 0))?;
        let e0 = (init.r - cfg.setpoint()).norm();
        env.reset(init, GustProfile::calm(), stream_rng(seed, Stream::SensorNoise, 0))?;
        let mut after3 = 0.0f64;
        for _ in 0..cfg.episode_steps {
            let (_, rec) = env.step(&ResidualAction::ZERO)?;
            if rec.t >= 3.0 {
                after3 = after3.max((rec.state.r - cfg.setpoint()).norm());
            }
        }
        worst = worst.max(after3);
        println!("seed {seed:>3}: initial error {e0:.3} m, max error after 3 s {after3:.4} m");
    }
    println!("worst {worst:.4} m");
    Ok(())
}

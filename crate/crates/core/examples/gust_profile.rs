//! Sample randomized gusts and write each as a training episode and as the
//! 30 s hardware timeline with its 12 s onset.
//!
//! cargo run --release --example gust_profile -- [count] [seed]

use std::fs::File;
use std::io::BufWriter;

use gustlab::control::ControllerMode;
use gustlab::experiment::{scenario_profile, ScenarioSpec, HARDWARE_DURATION};
use gustlab::env::EnvConfig;
use gustlab::wind::{write_profile_csv, GustRanges};

fn main() -> gustlab::Result<()> {
    let mut args = std::env::args().skip(1);
    let count: u64 = args.next().map(|s| s.parse().expect("count")).unwrap_or(5);
    let seed: u64 = args.next().map(|s| s.parse().expect("seed")).unwrap_or(0);
    let ranges = GustRanges::default();
    let env = EnvConfig::default();
    let out = std::path::Path::new("target/gust_profile");
    std::fs::create_dir_all(out).expect("output directory");
    for k in 0..count {
        let episode = ScenarioSpec::training_episode(ControllerMode::Baseline, seed, k, &env);
        let training = scenario_profile(&episode, &ranges)?;
        let spec = ScenarioSpec::hardware_timeline(ControllerMode::Baseline, seed, k);
        let hardware = scenario_profile(&spec, &ranges)?;
        println!(
            "{k}: low {:.2} m/s, high {:.2} m/s from {:.2} s for {:.2} s, dip {:.2} m/s at {:.2} s | hardware high {:.2} m/s from {:.2} s",
            training.u_low,
            training.u_high,
            training.high_start(),
            training.high_duration,
            training.dip_depth,
            training.dip_time,
            hardware.u_high,
            hardware.high_start()
        );
        let mut f = BufWriter::new(File::create(out.join(format!("training_{k}.csv"))).expect("csv"));
        write_profile_csv(&mut f, &training, 10.0, 0.025).expect("write");
        let mut f = BufWriter::new(File::create(out.join(format!("hardware_{k}.csv"))).expect("csv"));
        write_profile_csv(&mut f, &hardware, HARDWARE_DURATION, 0.025).expect("write");
    }
    println!("wrote {}", out.display());
    Ok(())
}

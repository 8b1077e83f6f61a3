//! Paired hardware-timeline comparison of the controllers whose checkpoints
//! are present in a directory (`wind-aware.net`, `wind-unaware.net`). The
//! baseline always runs. Writes the table, per-trial rows, mean trajectories
//! and SVG figures to target/compare_controllers.
//!
//! cargo run --release --example compare_controllers -- [checkpoint dir] [trials] [seed]

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use gustlab::control::ControllerMode;
use gustlab::experiment::{
    compare_controllers, write_mean_trajectory_csv, write_svg_figures, write_table_csv,
    write_trials_csv, Checkpoints, ExperimentSetup, ScenarioSpec,
};
use gustlab::policy::load_actor;

fn main() -> gustlab::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "target/train_residual".into()));
    let trials: usize = args.next().map(|s| s.parse().expect("trials")).unwrap_or(10);
    let seed: u64 = args.next().map(|s| s.parse().expect("seed")).unwrap_or(0);

    let mut checkpoints = Checkpoints::new();
    let mut modes = Vec::new();
    for mode in [ControllerMode::WindAware, ControllerMode::WindUnaware] {
        let path = dir.join(format!("{mode}.net"));
        if path.exists() {
            checkpoints.insert(mode, load_actor(&path)?);
            modes.push(mode);
        } else {
            println!("no checkpoint at {}, skipping {mode}", path.display());
        }
    }
    modes.push(ControllerMode::Baseline);

    let setup = ExperimentSetup::default();
    let template = ScenarioSpec::hardware_timeline(ControllerMode::Baseline, seed, 0);
    let cmp = compare_controllers(&setup, &template, &modes, trials, &checkpoints, 1)?;
    for r in &cmp.reports {
        println!(
            "{:<13} max error {}  mse {}  range {}",
            r.mode.as_str(),
            r.max_error.display(),
            r.mse.display(),
            r.range.display()
        );
    }
    let failed = cmp.trials.iter().filter(|t| t.failed.is_some()).count();
    if failed > 0 {
        println!("{failed} trial(s) ended early");
    }

    let out = PathBuf::from("target/compare_controllers");
    std::fs::create_dir_all(&out).expect("output directory");
    let create = |name: &str| BufWriter::new(File::create(out.join(name)).expect("output file"));
    write_table_csv(&mut create("table.csv"), &cmp).expect("table");
    write_trials_csv(&mut create("trials.csv"), &cmp).expect("trials");
    write_mean_trajectory_csv(&mut create("mean_trajectory.csv"), &cmp).expect("trajectory");
    for p in write_svg_figures(&cmp, &out)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

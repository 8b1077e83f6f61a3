//! Train a residual policy with SAC and write the best checkpoint and the
//! training curves.
//!
//! cargo run --release --example train_residual -- [wind-aware|wind-unaware] [steps] [seed]

use std::fs::File;
use std::io::BufWriter;

use gustlab::control::ControllerMode;
use gustlab::env::{EnvConfig, SensorSetup};
use gustlab::policy::{save_actor, train, write_curves_csv, SacHyperparams, TrainSetup};
use gustlab::wind::GustRanges;

fn main() -> gustlab::Result<()> {
    let mut args = std::env::args().skip(1);
    let mode: ControllerMode = args.next().as_deref().unwrap_or("wind-aware").parse()?;
    let steps: usize = args.next().map(|s| s.parse().expect("steps")).unwrap_or(200_000);
    let seed: u64 = args.next().map(|s| s.parse().expect("seed")).unwrap_or(0);
    let setup = TrainSetup {
        env: EnvConfig::default(),
        gust: GustRanges::default(),
        sensor: SensorSetup::Ideal,
        mode,
        hp: SacHyperparams {
            total_steps: steps,
            ..SacHyperparams::default()
        },
        seed,
        workers: 1,
    };
    let started = std::time::Instant::now();
    let outcome = train(&setup, |r| {
        println!(
            "step {:>7} | eval return {:>8.2} | eval max |x| {:.3} m | train return {:>8.2} | alpha {:.4} | entropy {:>6.2} | {:.0} s",
            r.step,
            r.eval_return,
            r.eval_max_x_error,
            r.train_return,
            r.alpha,
            r.entropy,
            started.elapsed().as_secs_f64()
        )
    })?;
    println!(
        "baseline controller: return {:.2}, max |x| {:.3} m; random residual return {:.2}",
        outcome.baseline.mean_return, outcome.baseline.mean_max_x_error, outcome.random_return
    );
    let out = std::path::Path::new("target/train_residual");
    std::fs::create_dir_all(out).expect("output directory");
    let ckpt = out.join(format!("{mode}.net"));
    save_actor(&ckpt, &outcome.actor)?;
    write_curves_csv(
        &mut BufWriter::new(File::create(out.join(format!("{mode}_curves.csv"))).expect("curves")),
        &outcome.curves,
    )
    .expect("write curves");
    println!("best eval return {:.2}; wrote {}", outcome.best_eval_return, ckpt.display());
    if let Some(msg) = outcome.halted {
        println!("halted early: {msg}");
    }
    Ok(())
}

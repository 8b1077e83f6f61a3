//! Fly back and forth in still air and compare the vehicle speed with the
//! relative wind read by the emulated hot-wire tower.
//!
//! cargo run --release --example relative_wind -- [seed]

use std::fs::File;
use std::io::BufWriter;
use std::sync::Arc;

use gustlab::env::SensorSetup;
use gustlab::experiment::{
    relative_wind_validation, validation_calibration, write_validation_csv, ExperimentSetup,
    RelativeWindProfile,
};
use gustlab::mast::{generate_calibration_set, train_inverse_models, MastConfig};
use gustlab::rng::{stream_rng, Stream};

fn main() -> gustlab::Result<()> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse().expect("seed")).unwrap_or(0);
    let mast = MastConfig::default();
    let cal = validation_calibration();
    let mut rng = stream_rng(seed, Stream::Calibration, 0);
    let set = generate_calibration_set(&mast, &cal, &mut rng);
    let models = Arc::new(train_inverse_models(&set, &cal, &mut rng)?);
    let setup = ExperimentSetup {
        sensor: SensorSetup::Emulated { config: mast, models },
        ..ExperimentSetup::default()
    };
    let profile = RelativeWindProfile::default();
    let s = relative_wind_validation(&setup, &profile, seed)?;

    let hover: Vec<f64> = s.t.iter().zip(&s.smoothed).filter(|(t, _)| **t < profile.pause).map(|(_, e)| *e).collect();
    let cruise: Vec<f64> = s
        .t
        .iter()
        .zip(&s.smoothed)
        .filter(|(t, _)| (profile.setpoint_at(**t - 1.0).1.abs() - profile.cruise_speed).abs() < 1e-9
            && (profile.setpoint_at(**t).1.abs() - profile.cruise_speed).abs() < 1e-9)
        .map(|(_, e)| *e)
        .collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    println!(
        "{:.1} s flight: hover estimate {:.3} m/s, cruise estimate {:.3} m/s at {} m/s, correlation {:.3}",
        profile.duration(),
        mean(&hover),
        mean(&cruise),
        profile.cruise_speed,
        s.correlation
    );
    let out = std::path::Path::new("target/relative_wind");
    std::fs::create_dir_all(out).expect("output directory");
    let path = out.join("series.csv");
    write_validation_csv(&mut BufWriter::new(File::create(&path).expect("csv")), &s).expect("write");
    println!("wrote {}", path.display());
    Ok(())
}

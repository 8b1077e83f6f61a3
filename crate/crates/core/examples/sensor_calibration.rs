//! Calibrate the inverse sensor networks on synthetic sweeps and print the
//! held-out error statistics, noiseless and with the default noise.
//!
//! cargo run --release --example sensor_calibration [steps]

use gustlab::mast::{
    evaluate, generate_calibration_set, train_inverse_models, CalibrationConfig, MastConfig,
};
use gustlab::rng::{stream_rng, Stream};

fn main() -> gustlab::Result<()> {
    let steps = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("steps must be an integer"))
        .unwrap_or(CalibrationConfig::default().steps);
    let cal = CalibrationConfig {
        steps,
        ..CalibrationConfig::default()
    };
    for (label, config) in [
        ("noiseless", MastConfig::default().noiseless()),
        ("noisy", MastConfig::default()),
    ] {
        let started = std::time::Instant::now();
        let mut rng = stream_rng(0, Stream::Calibration, 0);
        let set = generate_calibration_set(&config, &cal, &mut rng);
        let models = train_inverse_models(&set, &cal, &mut rng)?;
        let s = evaluate(&models, &set.test);
        println!(
            "{label:>9}: angle mean {:.3} deg, p95 {:.3} deg | speed mean {:.4} m/s, p95 {:.4} m/s ({:.1} s)",
            s.angle_mean_deg,
            s.angle_p95_deg,
            s.speed_mean,
            s.speed_p95,
            started.elapsed().as_secs_f64()
        );
    }
    Ok(())
}

//! Reversed cascade: energy recovered at t = 2 for two viscosity branches.
use anomalylab::experiments::{run_thm2_scenario, ExperimentConfig, Viscosity};

fn main() -> anomalylab::Result<()> {
    let cfg = ExperimentConfig::default();
    for m in [3, 4, 5] {
        for v in [Viscosity::FixedK(1.0), Viscosity::High] {
            let r = run_thm2_scenario(m, v, &cfg)?;
            println!(
                "m={m} {:<10} E(1)={:.4} min E near 1={:.4} E(2)={:.4}",
                r.kind,
                r.e_at_1,
                r.min_energy_near_1.unwrap_or(f64::NAN),
                r.e_at_2
            );
        }
    }
    Ok(())
}

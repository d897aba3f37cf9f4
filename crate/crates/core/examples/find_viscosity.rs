//! Bisection for the viscosity that dissipates a prescribed fraction of the energy by t = 1.
use anomalylab::experiments::{find_viscosity_for_dissipation, ExperimentConfig};

fn main() -> anomalylab::Result<()> {
    let cfg = ExperimentConfig::default();
    for target in [0.6, 0.75, 0.25] {
        match find_viscosity_for_dissipation(4, target, 1.0, 0.02, &cfg) {
            Ok(s) => println!(
                "target {target}: nu={:.4e} D(1)={:.4} after {} iterations, bracket D = {:.4?}",
                s.nu, s.achieved, s.iterations, s.bracket_dissipation
            ),
            Err(e) => println!("target {target}: {e}"),
        }
    }
    Ok(())
}

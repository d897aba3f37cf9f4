//! Forward cascade at m = 4 under the three viscosity schedules.
use anomalylab::experiments::{run_thm1_scenario, ExperimentConfig, Viscosity};

fn main() -> anomalylab::Result<()> {
    let cfg = ExperimentConfig::default();
    for v in [Viscosity::Low, Viscosity::Intermediate, Viscosity::High] {
        let r = run_thm1_scenario(4, v, &cfg)?;
        println!(
            "{:<12} nu={:.3e} N={} D(1)={:.4} D(1.1)={:.4} D(2)={:.4}",
            r.kind, r.nu, r.n, r.d_at_1, r.d_at_1p_delta, r.d_at_2
        );
        if let Some(s) = r.mode_split {
            println!(
                "             |P_low theta(1)|={:.4} |P_high theta(1)|={:.4} cutoff {:.2}",
                s.low, s.high, s.cutoff
            );
        }
    }
    Ok(())
}

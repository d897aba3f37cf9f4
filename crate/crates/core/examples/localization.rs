//! Dyadic shell spectrum over time: dominant shell and decay rate.
use anomalylab::experiments::{
    localization_series, run_thm1_scenario, ExperimentConfig, Viscosity,
};

fn main() -> anomalylab::Result<()> {
    let cfg = ExperimentConfig {
        shells: true,
        ..ExperimentConfig::default()
    };
    let r = run_thm1_scenario(5, Viscosity::High, &cfg)?;
    for (t, q, alpha) in localization_series(&r.ledger).into_iter().step_by(8) {
        match alpha {
            Some(a) => println!("t={t:.4} dominant shell {q} alpha {a:.3}"),
            None => println!("t={t:.4} dominant shell {q}"),
        }
    }
    Ok(())
}

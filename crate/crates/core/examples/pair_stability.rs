//! Viscous versus inviscid solution and the dissipation bound on their gap.
use anomalylab::experiments::{to_unit_torus, ExperimentConfig, Viscosity};
use anomalylab::glue::{Continuation, GlueSchedule};
use anomalylab::mixing_blocks::block_initial_density;
use anomalylab::solver::run_pair;

fn main() -> anomalylab::Result<()> {
    let cfg = ExperimentConfig::default();
    let m = 4;
    let n = cfg.grid_for(m)?;
    let nu = Viscosity::Intermediate.value(m, cfg.params.base, cfg.alpha_c)?;
    let schedule = GlueSchedule::new(m, cfg.params.clone(), Continuation::Hold)?;
    let p = run_pair(
        &schedule,
        &block_initial_density(n)?,
        &cfg.solver(n, to_unit_torus(nu)),
    )?;
    for i in (0..p.t.len()).step_by((p.t.len() / 10).max(1)) {
        println!(
            "t={:.4} |theta-rho|^2={:.4e} bound={:.4e}",
            p.t[i], p.difference[i], p.bound[i]
        );
    }
    println!("margin {:.3e}", p.margin);
    Ok(())
}

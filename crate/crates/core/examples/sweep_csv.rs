//! Parallel parameter sweep rendered as CSV.
use anomalylab::experiments::{sweep, sweep_csv, ExperimentConfig, SweepCell, Viscosity};
use anomalylab::glue::Continuation;

fn main() {
    let cfg = ExperimentConfig::default();
    let cells: Vec<SweepCell> = [2, 3, 4]
        .iter()
        .flat_map(|&m| {
            [Viscosity::Low, Viscosity::Intermediate, Viscosity::High]
                .map(|viscosity| SweepCell { m, viscosity })
        })
        .collect();
    let rows = sweep(&cells, Continuation::Hold, &cfg);
    print!("{}", sweep_csv(&cells, &rows, cfg.params.base));
}

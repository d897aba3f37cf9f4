//! The two exact kernels of the split step: heat decay of a mode and
//! an energy-preserving shear translation.
use std::f64::consts::PI;

use anomalylab::field::Spectrum;
use anomalylab::mixing_blocks::{apply_shear_exact, build_block_drift, BlockParams};
use anomalylab::ScalarField2D;

fn main() -> anomalylab::Result<()> {
    let mode = ScalarField2D::from_fn(64, |x, _| 2f64.sqrt() * (2.0 * PI * x).cos())?;
    let mut s = Spectrum::from_field(&mode);
    let removed = s.heat(0.01, 1.0);
    println!("heat: E = {:.15}, removed = {:.15}", s.energy(), removed);

    let rho = ScalarField2D::from_fn(64, |x, y| (2.0 * PI * (x + y)).sin())?;
    let step = &build_block_drift(2, &BlockParams::default())?[0];
    let sheared = apply_shear_exact(&rho, step, step.start, step.end)?;
    println!(
        "shear: E before {:.15}, after {:.15}, grad energy {:.4} -> {:.4}",
        rho.energy(),
        sheared.energy(),
        rho.grad_energy(),
        sheared.grad_energy()
    );
    Ok(())
}

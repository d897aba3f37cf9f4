//! Block estimates for the first stages of the default cascade.
use anomalylab::mixing_blocks::{verify_block_estimates, BlockCaps, BlockParams};

fn main() -> anomalylab::Result<()> {
    let params = BlockParams::default();
    let caps = BlockCaps::default();
    println!("n  lambda  sup|rho|  |grad|/lambda  mix ratio  pass");
    for n in 0..=4 {
        let r = verify_block_estimates(n, &params, 256, &caps)?;
        println!(
            "{:<2} {:<7} {:<9.4} {:<14.3} {:<10.4} {}",
            r.n, r.lambda_n, r.sup_linf, r.grad_ratio, r.mixnorm_ratio, r.pass
        );
    }
    Ok(())
}

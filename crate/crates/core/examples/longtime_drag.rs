//! Time-periodic construction: work identity and the drag coefficient.
use anomalylab::experiments::{run_longtime_family, ExperimentConfig, LongtimeConfig};

fn main() -> anomalylab::Result<()> {
    let cfg = ExperimentConfig::default();
    let lt = LongtimeConfig {
        u_target: 6.0,
        ..LongtimeConfig::default()
    };
    for r in run_longtime_family(&[4, 6], &cfg, &lt)? {
        println!(
            "m={} tau={:.4} a={:.4} eps={:.5e} work={:.5e} drag={:.4} Re={:.3e} bound_ok={:?}",
            r.m, r.tau, r.a_m, r.eps, r.work, r.drag, r.re, r.bound_ok
        );
    }
    Ok(())
}

//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `EXPECTED_SHORTFALL` are measured and reported like
//! every other criterion but do not fail the target; any other failing
//! criterion exits nonzero. A shortfall criterion that starts passing is
//! reported so the list can be pruned.

use std::f64::consts::PI;
use std::time::Instant;

use anomalylab::diagnostics::h_minus1_norm;
use anomalylab::experiments::{
    find_viscosity_for_dissipation, localization_series, run_longtime_family, run_thm1_scenario,
    strictly_decreasing, strictly_increasing, sweep, sweep_csv, to_unit_torus, ExperimentConfig,
    LongtimeConfig, ScenarioResult, SweepCell, Viscosity,
};
use anomalylab::field::Spectrum;
use anomalylab::glue::{Continuation, GlueSchedule};
use anomalylab::mixing_blocks::{
    apply_shear_exact, block_initial_density, build_block_drift, cascade, BlockParams,
};
use anomalylab::solver::{run, run_pair, RunLedger, SolverConfig};
use anomalylab::{LabError, ScalarField2D};
use rayon::prelude::*;

const EXPECTED_SHORTFALL: &[u32] = &[4, 6, 7, 8, 9];

const CLOSURE: f64 = 1e-9;

struct Outcome {
    id: u32,
    title: &'static str,
    pass: bool,
    detail: String,
}

#[derive(Default)]
struct Closure {
    worst: f64,
    label: String,
    count: usize,
}

impl Closure {
    fn add(&mut self, label: &str, ledger: &RunLedger) {
        let (res, _) = ledger.closure_residual();
        let rel = res / ledger.e0();
        self.count += 1;
        if rel >= self.worst {
            self.worst = rel;
            self.label = label.to_string();
        }
    }
}

fn row(rows: &[ScenarioResult], m: u32) -> &ScenarioResult {
    rows.iter().find(|r| r.m == m).unwrap()
}

fn unwrap_rows(rows: Vec<Result<ScenarioResult, LabError>>) -> Vec<ScenarioResult> {
    rows.into_iter().map(|r| r.expect("scenario run")).collect()
}

fn cells(ms: &[u32], viscosity: Viscosity) -> Vec<SweepCell> {
    ms.iter().map(|&m| SweepCell { m, viscosity }).collect()
}

fn criterion_2() -> Outcome {
    let n = 64;
    let (nu, t, k) = (0.01, 1.0, (3.0, 2.0));
    let f = ScalarField2D::from_fn(n, |x, y| {
        2f64.sqrt() * (2.0 * PI * (k.0 * x + k.1 * y)).cos()
    })
    .unwrap();
    let mut s = Spectrum::from_field(&f);
    s.heat(nu, t);
    let exact = (-8.0 * PI * PI * nu * (k.0 * k.0 + k.1 * k.1) * t).exp();
    let heat_err = (s.energy() - exact).abs();

    let rho = ScalarField2D::from_fn(n, |x, y| {
        (2.0 * PI * (x + 2.0 * y)).sin() + 0.3 * (2.0 * PI * (5.0 * x - 3.0 * y)).cos()
    })
    .unwrap();
    let mut shear_err: f64 = 0.0;
    for step in build_block_drift(3, &BlockParams::default()).unwrap() {
        let out = apply_shear_exact(&rho, &step, step.start, step.end).unwrap();
        shear_err = shear_err.max((out.energy() - rho.energy()).abs());
    }

    let mut a = Spectrum::from_field(&rho);
    let mut b = a.clone();
    a.heat(2e-3, 0.3);
    a.heat(2e-3, 0.45);
    b.heat(2e-3, 0.75);
    let split_err = a.distance_sq(&b).sqrt();

    Outcome {
        id: 2,
        title: "exact kernels",
        pass: heat_err <= 1e-12 && shear_err <= 1e-12 && split_err <= 1e-13,
        detail: format!("heat {heat_err:.2e}, shear L2 {shear_err:.2e}, semigroup {split_err:.2e}"),
    }
}

fn criterion_3(closure: &mut Closure) -> Outcome {
    let n = 512;
    let schedule = GlueSchedule::new(6, BlockParams::default(), Continuation::Reversed).unwrap();
    let rho0 = block_initial_density(n).unwrap();
    let out = run(&schedule, &rho0, &SolverConfig::new(n, 0.0)).unwrap();
    closure.add("reversed inviscid m=6", &out.ledger);
    let err = out.final_field.l2_distance(&rho0).unwrap();
    Outcome {
        id: 3,
        title: "inviscid reversibility",
        pass: err <= 1e-8,
        detail: format!("m=6 N=512 ||rho(2) - rho_in|| = {err:.2e}"),
    }
}

fn criterion_4() -> Outcome {
    let params = BlockParams::default();
    let stages = cascade(&params, 1024, 5).unwrap();
    let pts: Vec<(f64, f64)> = (0..=5u32)
        .map(|n| {
            let lam = params.lambda(n + 1).unwrap() as f64;
            (
                lam.ln(),
                h_minus1_norm(&stages[n as usize + 1]).unwrap().ln(),
            )
        })
        .collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    Outcome {
        id: 4,
        title: "mixing rate",
        pass: (-1.3..=-0.7).contains(&slope),
        detail: format!("slope {slope:.4} over n = 0..5 (target [-1.3, -0.7])"),
    }
}

fn criterion_5(cfg: &ExperimentConfig, closure: &mut Closure) -> Outcome {
    let cases: Vec<(u32, Viscosity)> = (3..=8)
        .flat_map(|m| [Viscosity::Low, Viscosity::Intermediate, Viscosity::High].map(|v| (m, v)))
        .collect();
    let reports: Vec<_> = cases
        .par_iter()
        .map(|&(m, v)| {
            let n = cfg.grid_for(m).unwrap();
            let nu = v.value(m, cfg.params.base, cfg.alpha_c).unwrap();
            let schedule = GlueSchedule::new(m, cfg.params.clone(), Continuation::Hold).unwrap();
            let p = run_pair(
                &schedule,
                &block_initial_density(n).unwrap(),
                &cfg.solver(n, to_unit_torus(nu)),
            )
            .unwrap();
            (m, v, p)
        })
        .collect();
    let mut worst = (f64::INFINITY, String::new());
    for (m, v, p) in &reports {
        closure.add(&format!("pair viscous m={m} {}", v.label()), &p.viscous);
        closure.add(&format!("pair inviscid m={m}"), &p.inviscid);
        if p.margin < worst.0 {
            worst = (p.margin, format!("m={m} {}", v.label()));
        }
    }
    Outcome {
        id: 5,
        title: "stability inequality",
        pass: worst.0 >= -1e-10,
        detail: format!(
            "min margin {:.3e} at {} over {} runs",
            worst.0,
            worst.1,
            reports.len()
        ),
    }
}

fn criterion_6(high: &[ScenarioResult], low: &[ScenarioResult]) -> Outcome {
    let dh: Vec<f64> = high.iter().map(|r| r.d_at_1p_delta).collect();
    let dl: Vec<f64> = low.iter().map(|r| r.d_at_2).collect();
    let (h_inc, h_top) = (strictly_increasing(&dh), dh[2] >= 0.8);
    let (l_dec, l_top) = (strictly_decreasing(&dl), dl[2] <= 0.2);
    Outcome {
        id: 6,
        title: "total-anomaly trend",
        pass: h_inc && h_top && l_dec && l_top,
        detail: format!(
            "high D(1.1) = {:.4?} increasing={h_inc} >=0.8={h_top}; low D(2) = {:.4?} decreasing={l_dec} <=0.2={l_top}",
            dh, dl
        ),
    }
}

fn criterion_7(cfg: &ExperimentConfig) -> Outcome {
    let results: Vec<_> = [0.25, 0.5, 0.75]
        .par_iter()
        .map(|&e| (e, find_viscosity_for_dissipation(6, e, 1.0, 0.02, cfg)))
        .collect();
    let mut pass = true;
    let mut parts = Vec::new();
    for (e, r) in results {
        match r {
            Ok(s) => {
                let ok = (s.achieved - e).abs() <= 0.02;
                pass &= ok;
                parts.push(format!(
                    "e={e}: nu={:.4e} D(1)={:.4} ok={ok}",
                    s.nu, s.achieved
                ));
            }
            Err(err) => {
                pass = false;
                parts.push(format!("e={e}: {err}"));
            }
        }
    }
    Outcome {
        id: 7,
        title: "intermediate-value selection",
        pass,
        detail: parts.join("; "),
    }
}

fn criterion_8(recover: &[ScenarioResult], high_rev: &ScenarioResult) -> Outcome {
    let e: Vec<f64> = recover.iter().map(|r| r.e_at_2).collect();
    let (inc, top) = (strictly_increasing(&e), e[2] >= 0.8);
    let low = high_rev.e_at_2 <= 0.2;
    let gap = e[2] - high_rev.e_at_2;
    Outcome {
        id: 8,
        title: "reverse-cascade recovery",
        pass: inc && top && low && gap >= 0.5,
        detail: format!(
            "lambda^-2 E(2) = {e:.4?} increasing={inc} >=0.8={top}; high E(2) at m=8 = {:.4} <=0.2={low}; gap {gap:.4}",
            high_rev.e_at_2
        ),
    }
}

fn criterion_9(cfg: &ExperimentConfig) -> Outcome {
    let ms = [4, 6, 8];
    let unit = LongtimeConfig::default();
    let drag = match run_longtime_family(&ms, cfg, &unit) {
        Ok(reports) => {
            let d = reports[2].drag;
            (
                ((d - unit.c_target) / unit.c_target).abs() <= 0.1,
                format!("U=1 drag at m=8 {d:.4}"),
            )
        }
        Err(e) => (false, format!("U=1: {e}")),
    };
    let fast = LongtimeConfig {
        u_target: 6.0,
        ..LongtimeConfig::default()
    };
    let (identity, bound, info) = match run_longtime_family(&ms, cfg, &fast) {
        Ok(reports) => {
            let worst = reports
                .iter()
                .map(|r| (r.eps - r.work).abs())
                .fold(0.0, f64::max);
            let bound = reports.iter().all(|r| r.bound_ok == Some(true));
            let drags: Vec<f64> = reports.iter().map(|r| r.drag).collect();
            (
                worst <= 1e-8,
                bound,
                format!(
                    "U=6 |eps - work| max {worst:.2e}, drag {drags:.4?}, c1={:.4} c2={:.4} bound={bound}",
                    reports[0].c1_fit.unwrap_or(f64::NAN),
                    reports[0].c2_fit.unwrap_or(f64::NAN)
                ),
            )
        }
        Err(e) => (false, false, format!("U=6: {e}")),
    };
    Outcome {
        id: 9,
        title: "long-time drag",
        pass: drag.0 && identity && bound,
        detail: format!("{}; {info}", drag.1),
    }
}

fn criterion_10(cfg: &ExperimentConfig, closure: &mut Closure) -> Outcome {
    let mut c = cfg.clone();
    c.shells = true;
    let r = run_thm1_scenario(6, Viscosity::High, &c).unwrap();
    closure.add("localization m=6", &r.ledger);
    let series = localization_series(&r.ledger);
    let window: Vec<_> = series
        .iter()
        .filter(|s| s.0 >= 0.2 && s.0 <= 0.95)
        .collect();
    let above = window
        .iter()
        .filter(|s| s.2.is_some_and(|a| a > 1.0))
        .count();
    let frac = above as f64 / window.len() as f64;
    let mut peak = 0;
    let mut monotone = true;
    for &(t, q, _) in &series {
        if t > 1.0 {
            break;
        }
        monotone &= q + 1 >= peak;
        peak = peak.max(q);
    }
    Outcome {
        id: 10,
        title: "localization diagnostic",
        pass: frac >= 0.9 && monotone,
        detail: format!(
            "alpha > 1 at {above}/{} samples ({frac:.3}); dominant shell monotone={monotone}",
            window.len()
        ),
    }
}

fn main() {
    let start = Instant::now();
    let cfg = ExperimentConfig::default();
    let b = cfg.params.base;
    let ms = [4, 6, 8];
    let mut closure = Closure::default();
    let mut outcomes = Vec::new();

    outcomes.push(criterion_2());
    outcomes.push(criterion_3(&mut closure));
    outcomes.push(criterion_4());
    outcomes.push(criterion_5(&cfg, &mut closure));

    let high_cells = cells(&ms, Viscosity::High);
    let high_rows = sweep(&high_cells, Continuation::Hold, &cfg);
    let high_csv = sweep_csv(&high_cells, &high_rows, b);
    let high = unwrap_rows(high_rows);
    let low = unwrap_rows(sweep(&cells(&ms, Viscosity::Low), Continuation::Hold, &cfg));
    let recover = unwrap_rows(sweep(
        &cells(&ms, Viscosity::FixedK(1.0)),
        Continuation::Reversed,
        &cfg,
    ));
    let high_rev = unwrap_rows(sweep(
        &cells(&[8], Viscosity::High),
        Continuation::Reversed,
        &cfg,
    ));
    for (label, rows) in [
        ("high", &high),
        ("low", &low),
        ("recover", &recover),
        ("high reversed", &high_rev),
    ] {
        for r in rows {
            closure.add(&format!("{label} m={}", r.m), &r.ledger);
        }
    }
    outcomes.push(criterion_6(&high, &low));
    outcomes.push(criterion_7(&cfg));
    outcomes.push(criterion_8(&recover, row(&high_rev, 8)));
    outcomes.push(criterion_9(&cfg));
    outcomes.push(criterion_10(&cfg, &mut closure));

    let again = sweep(&high_cells, Continuation::Hold, &cfg);
    let identical_sweep = sweep_csv(&high_cells, &again, b) == high_csv;
    let identical_ledgers = unwrap_rows(again)
        .iter()
        .zip(&high)
        .all(|(a, r)| a.ledger.to_csv() == r.ledger.to_csv());
    outcomes.push(Outcome {
        id: 11,
        title: "determinism",
        pass: identical_sweep && identical_ledgers,
        detail: format!(
            "sweep csv identical={identical_sweep}, ledger csv identical={identical_ledgers}"
        ),
    });

    outcomes.push(Outcome {
        id: 1,
        title: "ledger closure",
        pass: closure.worst <= CLOSURE,
        detail: format!(
            "worst |E+D-E0-W|/E0 = {:.2e} ({}) over {} runs",
            closure.worst, closure.label, closure.count
        ),
    });
    outcomes.sort_by_key(|o| o.id);

    let mut unexpected = Vec::new();
    for o in &outcomes {
        let status = if o.pass { "PASS" } else { "FAIL" };
        let expected = EXPECTED_SHORTFALL.contains(&o.id);
        let note = match (o.pass, expected) {
            (false, true) => " [expected shortfall]",
            (true, true) => " [shortfall list is stale]",
            _ => "",
        };
        println!(
            "criterion {:2} {status} {}{note}: {}",
            o.id, o.title, o.detail
        );
        if !o.pass && !expected {
            unexpected.push(o.id);
        }
    }
    println!(
        "acceptance finished in {:.1}s",
        start.elapsed().as_secs_f64()
    );
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}

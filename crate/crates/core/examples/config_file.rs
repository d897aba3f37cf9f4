//! Parsing a flat configuration and printing its normalized echo.
use anomalylab::config::parse_config;

fn main() {
    let text = "grid.n = 256\nstage.m = 4,5\nviscosity.kind = alpha\nviscosity.value = 0.3\nrun.continuation = reversed\n";
    match parse_config(text) {
        Ok(cfg) => print!("{}", cfg.to_text()),
        Err(v) => eprintln!("{}", anomalylab::LabError::from(v)),
    }
    match parse_config("grid.n = 100\nstage.m = 9\n") {
        Ok(_) => {}
        Err(v) => v.0.iter().for_each(|e| println!("rejected: {e}")),
    }
}

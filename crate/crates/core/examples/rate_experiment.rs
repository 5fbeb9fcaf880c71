//! A small Monte-Carlo rate sweep written to CSV on stdout.

use dpdensity::experiments::{run_sweep, write_records_csv, ExperimentConfig, Sweep};

fn main() -> dpdensity::error::Result<()> {
    let cfg = ExperimentConfig::from_json(
        r#"{"sweeps": [{"name": "demo", "density": {"kind": "random-trig", "d": 1, "beta": 1.0, "L": 2.0, "m_truth": 32, "seed": 1},
            "d": 1, "n": [256, 1024, 4096], "rho": [10.0], "mode": "oracle-beta", "beta": 1.0, "replicates": 10, "seed": 2}]}"#,
    )?;
    let sweep = Sweep::from_config(&cfg.sweeps[0], std::path::Path::new("."))?;
    let report = run_sweep(&sweep)?;
    write_records_csv(&report.records, std::io::stdout())?;
    if let Some(s) = report.slope {
        eprintln!("fitted slope {:.3}", s.slope);
    }
    Ok(())
}

//! Batch runs: configuration, scenario dispatch and machine-readable output.

pub mod compare;
pub mod config;
pub mod output;
pub mod presets;
pub mod scenarios;

pub use compare::{moment_errors, run_compare, write_compare, ComparisonReport, MacroProfile};
pub use config::{parse_config, parse_config_str, InitialCondition, RunConfig, Scenario};
pub use output::{Gate, Provenance, RunSummary};

use crate::error::Result;

/// Runs the configured scenario, writes its outputs and a summary.json
/// listing the gates.
pub fn run_scenario(cfg: &RunConfig) -> Result<RunSummary> {
    let mut summary = match cfg.scenario {
        Scenario::Coeffs => scenarios::run_coeffs(cfg)?,
        Scenario::Gci => scenarios::run_gci(cfg)?,
        Scenario::Kinetic => scenarios::run_kinetic(cfg)?,
        Scenario::Spherefp => scenarios::run_spherefp(cfg)?,
        Scenario::Soh => scenarios::run_soh(cfg)?,
        Scenario::Compare => write_compare(cfg, &run_compare(cfg)?)?,
    };
    let prov = Provenance::new(cfg);
    let path = output::write_json(&cfg.output, "summary.json", &prov, &summary)?;
    summary.files.push(path);
    Ok(summary)
}

//! `fedrank game`: best-response dynamics from a configured start, Nash
//! verification of the terminal profile, and the per-client mechanism
//! comparison table, all serialized to JSON.

use std::path::Path;

use anyhow::{Result, anyhow};
use serde::Serialize;
use serde_json::Value;

use fedrank_core::game::{
    BestResponseResult, DynamicsResult, MechanismComparison, NashReport, best_response,
    best_response_dynamics, compare_mechanisms, verify_nash,
};

use crate::config::{self, RawConfig};
use crate::report::{RunReport, config_echo, ensure_out_dir, write_json};

#[derive(Serialize)]
struct GameReport {
    command: &'static str,
    config: Value,
    dynamics: DynamicsResult,
    nash: NashReport,
    /// Each client's full utility curve over its grid, at the terminal
    /// profile.
    response_curves: Vec<BestResponseResult>,
    comparison: Vec<MechanismComparison>,
    theorem1_all_hold: bool,
}

#[derive(Serialize)]
struct GameSummary {
    command: &'static str,
    config: Value,
    report_json: String,
    converged: bool,
    passes: usize,
    is_nash: bool,
    theorem1_all_hold: bool,
}

pub fn run(raw: &RawConfig, out_dir: &Path) -> Result<RunReport> {
    let seed = raw.seed()?;
    let params = config::utility_section(raw)?;
    let game = config::game_section(raw, seed)?;

    let dynamics = best_response_dynamics(&game.start, &game.config, &params)
        .map_err(|e| anyhow!("dynamics: {e}"))?;
    let terminal = dynamics.passes.last().unwrap_or(&dynamics.initial).clone();
    let nash = verify_nash(&terminal, &game.config, &params).map_err(|e| anyhow!("nash: {e}"))?;
    let response_curves = terminal
        .ids()
        .map(|id| best_response(id, &terminal, &game.config, &params))
        .collect::<fedrank_core::Result<Vec<_>>>()
        .map_err(|e| anyhow!("response curves: {e}"))?;
    let comparison = compare_mechanisms(&terminal, &game.config, &params)
        .map_err(|e| anyhow!("comparison: {e}"))?;
    let theorem1_all_hold = comparison.iter().all(|row| row.holds);

    ensure_out_dir(out_dir)?;
    let report = GameReport {
        command: "game",
        config: config_echo(raw),
        dynamics,
        nash,
        response_curves,
        comparison,
        theorem1_all_hold,
    };
    let report_path = out_dir.join("game_report.json");
    write_json(&report_path, &report)?;

    let summary = GameSummary {
        command: "game",
        config: config_echo(raw),
        report_json: "game_report.json".into(),
        converged: report.dynamics.converged,
        passes: report.dynamics.passes.len(),
        is_nash: report.nash.is_nash,
        theorem1_all_hold,
    };
    let summary_path = out_dir.join("summary.json");
    write_json(&summary_path, &summary)?;

    Ok(RunReport {
        command: "game",
        out_dir: out_dir.to_path_buf(),
        files: vec![report_path, summary_path],
    })
}

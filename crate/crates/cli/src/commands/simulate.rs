//! `fedrank simulate`: run the federated training loop and write the
//! per-round telemetry plus a summary.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result, anyhow};
use serde::Serialize;
use serde_json::Value;

use fedrank_core::mechanism::{self, ClientRecord, MechanismMode, ROUNDS_CSV_HEADER};
use fedrank_core::synthdata::generate_task;

use crate::config::{self, RawConfig};
use crate::report::{RunReport, config_echo, ensure_out_dir, write_json, write_text};

#[derive(Serialize)]
struct ClientSummary {
    d_i: u64,
    position: usize,
    acc_uploaded: f64,
    acc_distributed: f64,
}

#[derive(Serialize)]
struct SimulateSummary {
    command: &'static str,
    config: Value,
    mode: String,
    rounds: usize,
    rounds_csv: String,
    /// Final-round state per client id.
    r#final: BTreeMap<usize, ClientSummary>,
}

pub fn run(raw: &RawConfig, out_dir: &Path) -> Result<RunReport> {
    let seed = raw.seed()?;
    let task = config::task_section(raw, seed)?;
    let (mechanism_cfg, rounds) = config::mechanism_section(raw)?;
    let train = config::train_section(raw, seed)?;

    let (datasets, validation) = generate_task(&task.spec).map_err(|e| anyhow!("task: {e}"))?;
    let clients: Vec<ClientRecord> = datasets
        .into_iter()
        .zip(&task.sizes)
        .enumerate()
        .map(|(id, (data, &size))| ClientRecord::new(id, data, size, size))
        .collect::<fedrank_core::Result<_>>()
        .map_err(|e| anyhow!("clients: {e}"))?;

    let mode_label = match mechanism_cfg.mode {
        MechanismMode::Incentive => "incentive".to_string(),
        MechanismMode::Vanilla { weighted: false } => "vanilla".to_string(),
        MechanismMode::Vanilla { weighted: true } => "vanilla-weighted".to_string(),
    };

    let (logs, _) =
        mechanism::run_training(clients, validation, mechanism_cfg, train, rounds, seed)
            .map_err(|e| anyhow!("simulation: {e}"))?;

    ensure_out_dir(out_dir)?;
    let csv_path = out_dir.join("rounds.csv");
    let mut csv = String::from(ROUNDS_CSV_HEADER);
    csv.push('\n');
    for log in &logs {
        for row in log.csv_rows() {
            csv.push_str(&row);
            csv.push('\n');
        }
    }
    write_text(&csv_path, &csv)?;

    let last = logs.last().context("at least one round")?;
    let summary = SimulateSummary {
        command: "simulate",
        config: config_echo(raw),
        mode: mode_label,
        rounds,
        rounds_csv: "rounds.csv".into(),
        r#final: last
            .entries
            .iter()
            .map(|e| {
                (
                    e.client_id,
                    ClientSummary {
                        d_i: e.contributed,
                        position: e.position,
                        acc_uploaded: e.acc_uploaded,
                        acc_distributed: e.acc_distributed,
                    },
                )
            })
            .collect(),
    };
    let summary_path = out_dir.join("summary.json");
    write_json(&summary_path, &summary)?;

    Ok(RunReport {
        command: "simulate",
        out_dir: out_dir.to_path_buf(),
        files: vec![csv_path, summary_path],
    })
}

//! `fedrank analyze`: the analytic layer over one utility parameterization —
//! utility curves for plotting, the sufficiency-condition verdict, the
//! numeric concavity verdict, and both mechanisms' optimal contributions.

use std::path::Path;

use anyhow::{Result, anyhow};
use serde::Serialize;
use serde_json::Value;

use fedrank_core::utility::{
    GRID_POINTS, UtilityMode, check_eq_large, concavity_on_grid, optimal_contribution,
    utility_deriv, utility_incentive, utility_vanilla,
};

use crate::config::{self, RawConfig};
use crate::report::{RunReport, config_echo, ensure_out_dir, write_json, write_text};

#[derive(Serialize)]
#[serde(untagged)]
enum SufficiencyVerdict {
    Defined {
        holds: bool,
        lhs: f64,
        rhs: f64,
    },
    /// p' vanished at the evaluation point; the condition is undefined there.
    Degenerate {
        degenerate: bool,
        at: f64,
    },
}

#[derive(Serialize)]
struct ConcavityVerdict {
    concave: bool,
    max_second_deriv: f64,
    grid: usize,
}

#[derive(Serialize)]
struct AnalyzeSummary {
    command: &'static str,
    config: Value,
    curve_csv: String,
    eq_large: SufficiencyVerdict,
    concavity: ConcavityVerdict,
    /// Best contribution under the ranked mechanism.
    d_opt_incentive: f64,
    /// Best contribution under the shared-model mechanism (self-consistent
    /// fixed other-data total).
    d_opt_vanilla: f64,
    /// Data total the vanilla curve was drawn at.
    d_fixed_vanilla: f64,
    /// Incentive optimum at least the vanilla one, within one grid step.
    theorem1_holds: bool,
    grid_step: f64,
}

pub fn run(raw: &RawConfig, out_dir: &Path) -> Result<RunReport> {
    raw.seed()?;
    let params = config::utility_section(raw)?;
    let curve_points: usize = raw.optional_or("analyze.curve_points", 200)?;
    if curve_points < 2 {
        return Err(anyhow!(
            "invalid value for key `analyze.curve_points`: need at least 2"
        ));
    }

    let d_opt_incentive = optimal_contribution(&params, UtilityMode::Incentive, None);
    let d_opt_vanilla = optimal_contribution(&params, UtilityMode::Vanilla, None);
    let d_fixed = params.population.d_others(d_opt_vanilla);

    ensure_out_dir(out_dir)?;
    let mut curve = String::from("d,u_vanilla,u_incentive,du_incentive,D_others\n");
    for i in 0..=curve_points {
        let d = params.cap * i as f64 / curve_points as f64;
        let u_van = utility_vanilla(d, &params, d_fixed).map_err(|e| anyhow!("curve: {e}"))?;
        let u_inc = utility_incentive(d, &params).map_err(|e| anyhow!("curve: {e}"))?;
        let du = utility_deriv(d, &params, UtilityMode::Incentive);
        let d_others = params.population.d_others(d);
        curve.push_str(&format!("{d},{u_van},{u_inc},{du},{d_others}\n"));
    }
    let curve_path = out_dir.join("utility_curve.csv");
    write_text(&curve_path, &curve)?;

    let eq_large = match check_eq_large(&params) {
        Ok(check) => SufficiencyVerdict::Defined {
            holds: check.holds,
            lhs: check.lhs,
            rhs: check.rhs,
        },
        Err(fedrank_core::Error::DegenerateSaturation { at }) => SufficiencyVerdict::Degenerate {
            degenerate: true,
            at,
        },
        Err(e) => return Err(anyhow!("utility: {e}")),
    };
    let (concave, max_second) = concavity_on_grid(&params, UtilityMode::Incentive, 1000);
    let grid_step = params.cap / GRID_POINTS as f64;

    let summary = AnalyzeSummary {
        command: "analyze",
        config: config_echo(raw),
        curve_csv: "utility_curve.csv".into(),
        eq_large,
        concavity: ConcavityVerdict {
            concave,
            max_second_deriv: max_second,
            grid: 1000,
        },
        d_opt_incentive,
        d_opt_vanilla,
        d_fixed_vanilla: d_fixed,
        theorem1_holds: d_opt_incentive >= d_opt_vanilla - grid_step,
        grid_step,
    };
    let summary_path = out_dir.join("summary.json");
    write_json(&summary_path, &summary)?;

    Ok(RunReport {
        command: "analyze",
        out_dir: out_dir.to_path_buf(),
        files: vec![curve_path, summary_path],
    })
}

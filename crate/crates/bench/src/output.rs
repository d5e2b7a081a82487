//! CSV emission. Every file opens with `# key = value` provenance lines.

use std::io::Write;

use sural_core::oracle::GammaValue;
use sural_core::synth::ThetaPoint;

use crate::campaign::{SweepRow, TrialRow};
use crate::config::ExperimentConfig;

/// Column order of the per-trial table. Changing it breaks downstream readers.
pub const TRIAL_HEADER: [&str; 10] = [
    "trial",
    "method",
    "eps",
    "labels_used",
    "unlabeled_used",
    "excess_error",
    "excess_surrogate",
    "success",
    "seed",
    "wall_ms",
];

pub const SWEEP_HEADER: [&str; 5] = ["eps", "method", "budget_found", "success_rate", "failed_trials"];

fn provenance(out: &mut impl Write, config: &ExperimentConfig, command: &str) -> std::io::Result<()> {
    writeln!(out, "# sural {} {command}", env!("CARGO_PKG_VERSION"))?;
    for (k, v) in &config.provenance {
        writeln!(out, "# {k} = {v}")?;
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Per-trial rows. `wall_ms` stays empty unless `output.timing` is set,
/// which keeps repeated runs byte-identical.
pub fn write_trials(out: &mut impl Write, config: &ExperimentConfig, rows: &[TrialRow]) -> csv::Result<()> {
    provenance(out, config, "run")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRIAL_HEADER)?;
    for r in rows {
        let (labels, unlabeled, err, sur, success, wall) = match &r.outcome {
            Ok(rec) => (
                rec.labels_used.to_string(),
                rec.unlabeled_used.to_string(),
                rec.final_excess_error.to_string(),
                rec.final_excess_surrogate.to_string(),
                r.success().map(|s| s.to_string()).unwrap_or_default(),
                if config.timing {
                    format!("{:.3}", rec.wall_ms)
                } else {
                    String::new()
                },
            ),
            Err(_) => Default::default(),
        };
        let success = if r.failed() { "failed".to_string() } else { success };
        w.write_record([
            r.trial.to_string(),
            r.learner.name().to_string(),
            opt(r.eps),
            labels,
            unlabeled,
            err,
            sur,
            success,
            r.seed.to_string(),
            wall,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep(out: &mut impl Write, config: &ExperimentConfig, rows: &[SweepRow]) -> csv::Result<()> {
    provenance(out, config, "sweep")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record([
            r.eps.to_string(),
            r.learner.name().to_string(),
            r.budget_found.map(|b| b.to_string()).unwrap_or_default(),
            r.success_rate.to_string(),
            r.failed_trials.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_theta(out: &mut impl Write, config: &ExperimentConfig, theta: f64, curve: &[ThetaPoint]) -> csv::Result<()> {
    provenance(out, config, "theta")?;
    writeln!(out, "# theta = {theta}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["r", "dis_mass", "ratio", "theta_running_sup"])?;
    for p in curve {
        w.write_record([p.r, p.dis_mass, p.ratio, p.running_sup].map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// `(x, psi_tilde, psi, closed_form)` rows.
pub fn write_calibration(out: &mut impl Write, config: &ExperimentConfig, rows: &[[f64; 4]]) -> csv::Result<()> {
    provenance(out, config, "calibration")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "psi_tilde", "psi", "closed_form"])?;
    for row in rows {
        w.write_record(row.map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub enum OracleValue {
    Phi { m: usize, value: f64 },
    Gamma { eps: f64, value: GammaValue },
}

pub fn write_oracle(out: &mut impl Write, config: &ExperimentConfig, values: &[OracleValue]) -> csv::Result<()> {
    provenance(out, config, "oracle")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["quantity", "argument", "value"])?;
    for v in values {
        let row = match v {
            OracleValue::Phi { m, value } => ["phi".to_string(), m.to_string(), value.to_string()],
            OracleValue::Gamma { eps, value } => [
                "gamma".to_string(),
                eps.to_string(),
                match value {
                    GammaValue::Finite(g) => g.to_string(),
                    GammaValue::Unbounded => "unbounded".to_string(),
                },
            ],
        };
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

//! CSV and JSON emission. Every number is written with 17 significant digits.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{Map, Number, Value};

use crate::entropy::{EntropyReport, LedgerEntry};
use crate::friction::flux_from_state;
use crate::mixture::{BinaryDiffusivities, Grid1D, MixtureState, RowTable};
use crate::solver::{Snapshot, Trajectory};
use crate::weak_form::AuditReport;
use crate::{Error, Result};

/// `d.ddddddddddddddddde±x`: 17 significant digits, exact round trip.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn json_number(v: f64) -> Value {
    if v.is_finite() {
        Value::Number(fmt_f64(v).parse::<Number>().expect("formatted float is valid JSON"))
    } else {
        Value::Null
    }
}

/// Writes `contents` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::Format(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(contents)?;
        file.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(|e| Error::io(path, e))
}

fn csv_row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    let cells: Vec<String> = values.into_iter().map(fmt_f64).collect();
    out.push_str(&cells.join(","));
    out.push('\n');
}

pub fn entropy_series_csv(trajectory: &Trajectory) -> String {
    let n = trajectory.n_species;
    let report = EntropyReport::from_trajectory(trajectory);
    let mut out = String::from(
        "t,entropy,dissipation_rate,cumulative_dissipation,residual,pairing_gap,min_c,repair_magnitude",
    );
    for i in 1..=n {
        out.push_str(&format!(",mass_{i}"));
    }
    out.push('\n');
    for (k, entry) in trajectory.ledger.iter().enumerate() {
        let fixed = [
            report.times[k],
            report.entropy[k],
            report.dissipation_rate[k],
            report.cumulative_dissipation[k],
            report.residual[k],
            report.pairing_gap[k],
            entry.min_concentration,
            trajectory.repair_log[k],
        ];
        csv_row(&mut out, fixed.into_iter().chain(entry.masses.iter().copied()));
    }
    out
}

pub fn snapshot_csv(state: &MixtureState, grid: &Grid1D) -> String {
    let mut out = String::from("x");
    for i in 1..=state.n_species {
        out.push_str(&format!(",c_{i}"));
    }
    out.push('\n');
    for k in 0..state.num_cells() {
        csv_row(&mut out, std::iter::once(grid.cell_center(k)).chain(state.cell(k).iter().copied()));
    }
    out
}

pub fn snapshot_file_name(step: usize) -> String {
    format!("snapshot_{step:08}.csv")
}

/// Writes `snapshots/index.csv` and one CSV per snapshot, removing snapshot
/// files left over from earlier runs.
pub fn write_snapshots(dir: &Path, trajectory: &Trajectory) -> Result<()> {
    let snap_dir = dir.join("snapshots");
    fs::create_dir_all(&snap_dir).map_err(|e| Error::io(&snap_dir, e))?;
    for entry in fs::read_dir(&snap_dir).map_err(|e| Error::io(&snap_dir, e))? {
        let path = entry.map_err(|e| Error::io(&snap_dir, e))?.path();
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        if name.starts_with("snapshot_") && name.ends_with(".csv") {
            fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
        }
    }
    let mut index = String::from("step,t,file\n");
    for snap in &trajectory.snapshots {
        let name = snapshot_file_name(snap.step);
        index.push_str(&format!("{},{},{}\n", snap.step, fmt_f64(snap.time), name));
        write_atomic(&snap_dir.join(&name), snapshot_csv(&snap.state, &trajectory.grid).as_bytes())?;
    }
    write_atomic(&snap_dir.join("index.csv"), index.as_bytes())
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_field(path: &Path, line: usize, field: &str) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Format(format!("{}:{line}: `{field}` is not a number", path.display())))
}

/// Reads snapshots written by [`write_snapshots`]; fluxes are recomputed.
pub fn read_snapshots(dir: &Path, grid: &Grid1D, d: &BinaryDiffusivities) -> Result<Vec<Snapshot>> {
    let snap_dir = dir.join("snapshots");
    let index_path = snap_dir.join("index.csv");
    let index = read(&index_path)?;
    let mut snapshots = Vec::new();
    for (idx, line) in index.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Format(format!("{}:{}: expected step,t,file", index_path.display(), idx + 1)));
        }
        let step: usize = fields[0]
            .parse()
            .map_err(|_| Error::Format(format!("{}:{}: bad step `{}`", index_path.display(), idx + 1, fields[0])))?;
        let time = parse_field(&index_path, idx + 1, fields[1])?;
        let file: PathBuf = snap_dir.join(fields[2].trim());
        let text = read(&file)?;
        let mut rows = Vec::new();
        for (r, row) in text.lines().enumerate().skip(1) {
            if row.trim().is_empty() {
                continue;
            }
            let values = row
                .split(',')
                .skip(1)
                .map(|f| parse_field(&file, r + 1, f))
                .collect::<Result<Vec<f64>>>()?;
            rows.push(values);
        }
        if rows.len() != grid.num_cells() {
            return Err(Error::Format(format!(
                "{}: {} rows, scenario grid has {} cells",
                file.display(),
                rows.len(),
                grid.num_cells()
            )));
        }
        let table = RowTable::from_rows(&rows)?;
        let state = MixtureState::new(d.n_species(), table, time)?;
        let flux = flux_from_state(&state, grid, d)?;
        snapshots.push(Snapshot {
            step,
            time,
            state,
            flux,
        });
    }
    if snapshots.is_empty() {
        return Err(Error::Format(format!("{} lists no snapshots", index_path.display())));
    }
    Ok(snapshots)
}

pub fn audit_report_json(report: &AuditReport) -> String {
    let mut root = Map::new();
    root.insert("test_bank_version".into(), Value::String(report.test_bank_version.clone()));
    let residuals = |entries: &[crate::weak_form::ResidualEntry], label: &str| -> Value {
        Value::Array(
            entries
                .iter()
                .map(|e| {
                    let mut m = Map::new();
                    m.insert("species".into(), Value::from(e.species + 1));
                    m.insert(label.into(), Value::String(e.label.clone()));
                    m.insert("value".into(), json_number(e.value));
                    Value::Object(m)
                })
                .collect(),
        )
    };
    root.insert("weak_residuals".into(), residuals(&report.weak_residuals, "test_function"));
    root.insert("renorm_residuals".into(), residuals(&report.renorm_residuals, "beta"));
    root.insert("mol_commutation_gap".into(), json_number(report.mol_commutation.gap));
    root.insert("mol_commutation_lhs".into(), json_number(report.mol_commutation.lhs));
    root.insert("mol_commutation_rhs".into(), json_number(report.mol_commutation.rhs));
    let checks = report.definition_checks;
    let mut defs = Map::new();
    defs.insert("sup_bound".into(), Value::Bool(checks.sup_bound));
    defs.insert("simplex".into(), Value::Bool(checks.simplex));
    defs.insert("sqrt_l2_h1_finite".into(), Value::Bool(checks.sqrt_h1_finite));
    defs.insert("continuity".into(), Value::Bool(checks.continuity));
    root.insert("definition_checks".into(), Value::Object(defs));
    for (key, value) in [
        ("sqrt_l2_h1_norm", report.sqrt_l2_h1_norm),
        ("continuity_modulus", report.continuity_modulus),
        ("continuity_threshold", report.continuity_threshold),
        ("max_sum_deviation", report.max_sum_deviation),
        ("min_concentration", report.min_concentration),
        ("max_concentration", report.max_concentration),
    ] {
        root.insert(key.into(), json_number(value));
    }
    let mut text = serde_json::to_string_pretty(&Value::Object(root)).expect("serializable");
    text.push('\n');
    text
}

/// Run-level diagnostics not covered by the other files.
pub fn run_summary_json(trajectory: &Trajectory) -> String {
    let report = EntropyReport::from_trajectory(trajectory);
    let mut root = Map::new();
    root.insert("n_steps".into(), Value::from(trajectory.n_steps));
    root.insert("dt".into(), json_number(trajectory.dt));
    root.insert("t_end".into(), json_number(trajectory.t_end));
    root.insert("initial_entropy".into(), json_number(report.initial_entropy()));
    root.insert("sup_abs_residual".into(), json_number(report.sup_abs_residual()));
    root.insert("max_pairing_gap".into(), json_number(report.pairing_gap.iter().copied().fold(0.0, f64::max)));
    root.insert("max_repair".into(), json_number(trajectory.max_repair()));
    root.insert("max_relative_mass_drift".into(), json_number(trajectory.max_relative_mass_drift()));
    root.insert("max_entropy_increase".into(), json_number(trajectory.max_entropy_increase()));
    root.insert("max_rhs_defect".into(), json_number(trajectory.max_rhs_defect));
    root.insert("degenerate_faces".into(), Value::from(trajectory.degenerate_face_count));
    root.insert(
        "uphill".into(),
        Value::Array(trajectory.uphill.iter().map(|&b| Value::Bool(b)).collect()),
    );
    let mut text = serde_json::to_string_pretty(&Value::Object(root)).expect("serializable");
    text.push('\n');
    text
}

/// Ledger entries recomputed from snapshot states.
pub fn ledger_from_snapshots(snapshots: &[Snapshot], grid: &Grid1D, d: &BinaryDiffusivities) -> Result<Vec<LedgerEntry>> {
    snapshots
        .iter()
        .map(|s| crate::entropy::ledger_entry(&s.state, &s.flux, grid, d))
        .collect()
}

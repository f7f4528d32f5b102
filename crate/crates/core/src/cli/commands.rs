use std::fs;
use std::path::{Path, PathBuf};

use crate::cli::output::{
    audit_report_json, entropy_series_csv, fmt_f64, read_snapshots, run_summary_json, write_atomic,
    write_snapshots,
};
use crate::cli::scenario::{format_scenario, parse_scenario};
use crate::entropy::EntropyReport;
use crate::solver::{
    binary_cosine_exact, l2_error, simulate, simulate_observed, InitialPreset, Scenario, Trajectory,
};
use crate::weak_form::{
    audit_definition_with, AuditReport, Renormalization, ResidualAccumulator, TestFunction,
    DEFAULT_CONTINUITY_THRESHOLD,
};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Emit {
    StateSnapshots,
    EntropySeries,
    AuditReport,
}

impl Emit {
    pub const ALL: [Emit; 3] = [Emit::StateSnapshots, Emit::EntropySeries, Emit::AuditReport];

    pub fn parse(s: &str) -> Result<Emit> {
        match s.trim() {
            "state_snapshots" | "snapshots" => Ok(Emit::StateSnapshots),
            "entropy_series" => Ok(Emit::EntropySeries),
            "audit_report" | "audit" => Ok(Emit::AuditReport),
            other => Err(Error::Config(format!(
                "unknown output `{other}` (expected state_snapshots, entropy_series or audit_report)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub scenario_path: PathBuf,
    pub output_dir: PathBuf,
    pub emit: Vec<Emit>,
    pub refinement_levels: usize,
    pub seed: u64,
    /// Overrides the scenario's `fault.flux_truncation`.
    pub flux_truncation: Option<f64>,
    pub continuity_threshold: f64,
}

impl RunConfig {
    pub fn new(scenario_path: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            scenario_path: scenario_path.into(),
            output_dir: output_dir.into(),
            emit: Emit::ALL.to_vec(),
            refinement_levels: 3,
            seed: 0,
            flux_truncation: None,
            continuity_threshold: DEFAULT_CONTINUITY_THRESHOLD,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.scenario_path.as_os_str().is_empty() || self.output_dir.as_os_str().is_empty() {
            return Err(Error::Config("scenario and output paths must be nonempty".into()));
        }
        if self.refinement_levels < 1 {
            return Err(Error::Config("refinement_levels must be at least 1".into()));
        }
        if !(self.continuity_threshold > 0.0) {
            return Err(Error::Config("continuity threshold must be positive".into()));
        }
        Ok(())
    }

    fn emits(&self, what: Emit) -> bool {
        self.emit.contains(&what)
    }
}

pub fn load_scenario(path: &Path, flux_truncation: Option<f64>) -> Result<Scenario> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut scenario = parse_scenario(&text)?;
    if let Some(f) = flux_truncation {
        scenario.flux_truncation = f;
        scenario.validate()?;
    }
    Ok(scenario)
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub trajectory: Trajectory,
    pub entropy: EntropyReport,
    pub audit: Option<AuditReport>,
}

/// Simulates the scenario and writes the requested outputs plus
/// `scenario.txt` (canonical form) and `run_summary.json`.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let scenario = load_scenario(&config.scenario_path, config.flux_truncation)?;
    let trajectory = simulate(&scenario)?;
    let entropy = EntropyReport::from_trajectory(&trajectory);
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_atomic(&dir.join("scenario.txt"), format_scenario(&scenario).as_bytes())?;
    write_atomic(&dir.join("run_summary.json"), run_summary_json(&trajectory).as_bytes())?;
    if config.emits(Emit::EntropySeries) {
        write_atomic(&dir.join("entropy_series.csv"), entropy_series_csv(&trajectory).as_bytes())?;
    }
    if config.emits(Emit::StateSnapshots) {
        write_snapshots(dir, &trajectory)?;
    }
    let audit = if config.emits(Emit::AuditReport) {
        let report = audit_definition_with(&trajectory, config.continuity_threshold)?;
        write_atomic(&dir.join("audit_report.json"), audit_report_json(&report).as_bytes())?;
        Some(report)
    } else {
        None
    };
    Ok(RunOutcome {
        trajectory,
        entropy,
        audit,
    })
}

/// Re-audits a run directory from `scenario.txt` and the stored snapshots,
/// rewriting `audit_report.json`.
pub fn audit_dir(dir: &Path, continuity_threshold: f64) -> Result<AuditReport> {
    let scenario = load_scenario(&dir.join("scenario.txt"), None)?;
    let snapshots = read_snapshots(dir, &scenario.grid, &scenario.d)?;
    let trajectory = Trajectory::from_snapshots(scenario.grid, scenario.d.clone(), scenario.t_end, snapshots)?;
    let report = audit_definition_with(&trajectory, continuity_threshold)?;
    write_atomic(&dir.join("audit_report.json"), audit_report_json(&report).as_bytes())?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelResult {
    pub level: usize,
    pub cells: usize,
    pub steps: usize,
    pub dt: f64,
    pub initial_entropy: f64,
    pub sup_abs_residual: f64,
    /// L² error of species 1 against the heat-equation solution (binary cosine only).
    pub l2_error: Option<f64>,
    /// Root-sum-square of the weak residuals over the test bank and species.
    pub weak_residual_norm: f64,
    /// Root-sum-square of the renormalized residuals over the β bank, test bank and species.
    pub renorm_residual_norm: f64,
    pub max_relative_mass_drift: f64,
    pub max_simplex_deviation: f64,
    pub max_entropy_increase: f64,
    pub min_dissipation_rate: f64,
    pub max_repair: f64,
    pub uphill: Vec<bool>,
}

/// `log₂(e_{l−1}/e_l)`; NaN when undefined.
pub fn observed_order(coarse: f64, fine: f64) -> f64 {
    if coarse > 0.0 && fine > 0.0 {
        (coarse / fine).log2()
    } else {
        f64::NAN
    }
}

fn binary_cosine_amplitude(scenario: &Scenario) -> Option<f64> {
    match &scenario.initial {
        InitialPreset::CosinePerturbation { amplitudes } if scenario.n_species == 2 => Some(amplitudes[0]),
        _ => None,
    }
}

/// Runs one scenario while streaming the weak and renormalized residuals,
/// keeping only the initial and final snapshots.
pub fn run_level(scenario: &Scenario, level: usize) -> Result<LevelResult> {
    let mut scenario = scenario.clone();
    scenario.output_stride = usize::MAX;
    let tests = TestFunction::bank(scenario.grid.domain_length(), scenario.t_end);
    let mut betas = vec![Renormalization::identity()];
    betas.extend(Renormalization::bank());
    let mut acc = ResidualAccumulator::new(scenario.grid, scenario.n_species, scenario.t_end, tests, betas)?;
    let mut failure = None;
    let trajectory = simulate_observed(&scenario, |view| {
        if failure.is_none() {
            if let Err(e) = acc.observe(view.time, view.state, view.flux) {
                failure = Some(e);
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let n = scenario.n_species;
    let tests = acc.tests().len();
    let rss = |betas: std::ops::Range<usize>| -> f64 {
        let mut total = 0.0;
        for b in betas {
            for t in 0..tests {
                for i in 0..n {
                    total += acc.residual(b, t, i).powi(2);
                }
            }
        }
        total.sqrt()
    };
    let report = EntropyReport::from_trajectory(&trajectory);
    let l2 = binary_cosine_amplitude(&scenario).map(|a| {
        let (t, dval, len) = (scenario.t_end, scenario.d.get(0, 1), scenario.grid.domain_length());
        l2_error(&trajectory.last().state, &scenario.grid, 0, |x| binary_cosine_exact(x, t, a, dval, len))
    });
    Ok(LevelResult {
        level,
        cells: scenario.grid.num_cells(),
        steps: trajectory.n_steps,
        dt: trajectory.dt,
        initial_entropy: report.initial_entropy(),
        sup_abs_residual: report.sup_abs_residual(),
        l2_error: l2,
        weak_residual_norm: rss(0..1),
        renorm_residual_norm: rss(1..acc.betas().len()),
        max_relative_mass_drift: trajectory.max_relative_mass_drift(),
        max_simplex_deviation: trajectory.max_simplex_deviation(),
        max_entropy_increase: trajectory.max_entropy_increase(),
        min_dissipation_rate: report.dissipation_rate.iter().copied().fold(f64::INFINITY, f64::min),
        max_repair: trajectory.max_repair(),
        uphill: trajectory.uphill.clone(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefinementTable {
    pub levels: Vec<LevelResult>,
}

impl RefinementTable {
    fn orders(&self, metric: impl Fn(&LevelResult) -> Option<f64>) -> Vec<f64> {
        let mut out = vec![f64::NAN];
        for w in self.levels.windows(2) {
            out.push(match (metric(&w[0]), metric(&w[1])) {
                (Some(a), Some(b)) => observed_order(a, b),
                _ => f64::NAN,
            });
        }
        out
    }

    pub fn residual_orders(&self) -> Vec<f64> {
        self.orders(|l| Some(l.sup_abs_residual))
    }

    pub fn l2_orders(&self) -> Vec<f64> {
        self.orders(|l| l.l2_error)
    }

    pub fn weak_orders(&self) -> Vec<f64> {
        self.orders(|l| Some(l.weak_residual_norm))
    }

    pub fn renorm_orders(&self) -> Vec<f64> {
        self.orders(|l| Some(l.renorm_residual_norm))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "level,cells,steps,dt,sup_abs_residual,residual_order,l2_error,l2_order,\
             weak_residual_norm,weak_order,renorm_residual_norm,renorm_order,max_relative_mass_drift,max_repair\n",
        );
        let (ro, lo, wo, bo) = (self.residual_orders(), self.l2_orders(), self.weak_orders(), self.renorm_orders());
        for (k, l) in self.levels.iter().enumerate() {
            let cells = [
                l.level.to_string(),
                l.cells.to_string(),
                l.steps.to_string(),
                fmt_f64(l.dt),
                fmt_f64(l.sup_abs_residual),
                fmt_f64(ro[k]),
                fmt_f64(l.l2_error.unwrap_or(f64::NAN)),
                fmt_f64(lo[k]),
                fmt_f64(l.weak_residual_norm),
                fmt_f64(wo[k]),
                fmt_f64(l.renorm_residual_norm),
                fmt_f64(bo[k]),
                fmt_f64(l.max_relative_mass_drift),
                fmt_f64(l.max_repair),
            ];
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        let (ro, lo, wo, bo) = (self.residual_orders(), self.l2_orders(), self.weak_orders(), self.renorm_orders());
        let mut out = format!(
            "{:>5} {:>6} {:>8} {:>11} {:>6} {:>11} {:>6} {:>11} {:>6} {:>11} {:>6}\n",
            "level", "cells", "steps", "sup|r|", "order", "L2 error", "order", "weak", "order", "renorm", "order"
        );
        let show = |v: f64| if v.is_nan() { "-".to_string() } else { format!("{v:.3e}") };
        let show_order = |v: f64| if v.is_nan() { "-".to_string() } else { format!("{v:.2}") };
        for (k, l) in self.levels.iter().enumerate() {
            out.push_str(&format!(
                "{:>5} {:>6} {:>8} {:>11} {:>6} {:>11} {:>6} {:>11} {:>6} {:>11} {:>6}\n",
                l.level,
                l.cells,
                l.steps,
                show(l.sup_abs_residual),
                show_order(ro[k]),
                show(l.l2_error.unwrap_or(f64::NAN)),
                show_order(lo[k]),
                show(l.weak_residual_norm),
                show_order(wo[k]),
                show(l.renorm_residual_norm),
                show_order(bo[k]),
            ));
        }
        out
    }
}

/// Runs `levels` refinements (`N, 2N, 4N, …` cells, `dt ∝ dx²`) concurrently.
pub fn refine_scenario(scenario: &Scenario, levels: usize) -> Result<RefinementTable> {
    if levels < 2 {
        return Err(Error::Config(format!("a refinement study needs at least 2 levels, got {levels}")));
    }
    let results: Vec<Result<LevelResult>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..levels)
            .map(|l| {
                let level_scenario = scenario.refined(l as u32);
                scope.spawn(move || run_level(&level_scenario, l))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Format("refinement worker panicked".into()))))
            .collect()
    });
    Ok(RefinementTable {
        levels: results.into_iter().collect::<Result<Vec<_>>>()?,
    })
}

/// `refine` command: writes `refinement.csv` into the output directory.
pub fn refine(config: &RunConfig) -> Result<RefinementTable> {
    config.validate()?;
    let scenario = load_scenario(&config.scenario_path, config.flux_truncation)?;
    let table = refine_scenario(&scenario, config.refinement_levels)?;
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_atomic(&dir.join("refinement.csv"), table.to_csv().as_bytes())?;
    Ok(table)
}

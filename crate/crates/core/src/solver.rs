//! Explicit finite-volume integration of `∂t c_i + ∂x J_i = 0` with zero flux
//! through both ends of the interval.

use std::f64::consts::PI;

use crate::entropy::{ledger_entry, LedgerEntry};
use crate::friction::{flux_from_state, FluxSolution};
use crate::mixture::{
    project_rows_in_place, validate_state, BinaryDiffusivities, Grid1D, MixtureState, RowTable,
};
use crate::{Error, Result};

/// A single step may not move any concentration by more than this in the
/// simplex repair.
pub const MAX_STEP_REPAIR: f64 = 1e-6;

/// Tolerance used when checking user-supplied initial tables.
const TABLE_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Integrator {
    #[default]
    Euler,
    Heun,
}

impl Integrator {
    pub fn name(self) -> &'static str {
        match self {
            Integrator::Euler => "euler",
            Integrator::Heun => "heun",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialPreset {
    /// `c_i = 1/n + a_i cos(πx/L)` for `i < n`, last species closes the sum.
    CosinePerturbation { amplitudes: Vec<f64> },
    /// Blend from `left` to `right` through `½(1 + tanh((x − L/2)/w))`.
    SmoothedStep {
        interface_width: f64,
        left: Vec<f64>,
        right: Vec<f64>,
    },
    /// Ternary `(0.8, 0.2, 0) → (0, 0.2, 0.8)` joined by a quintic smoothstep of
    /// physical width `interface_width` centred at `L/2`; outside the ramp the
    /// absent species is exactly zero.
    DuncanToor { interface_width: f64 },
    Custom { table: RowTable },
}

impl InitialPreset {
    pub fn name(&self) -> &'static str {
        match self {
            InitialPreset::CosinePerturbation { .. } => "cosine_perturbation",
            InitialPreset::SmoothedStep { .. } => "smoothed_step",
            InitialPreset::DuncanToor { .. } => "duncan_toor",
            InitialPreset::Custom { .. } => "custom",
        }
    }

    /// Default smoothed step: species 1 rich on the left, species `n` rich on the right.
    pub fn smoothed_step(n: usize, interface_width: f64) -> Self {
        let mut left = vec![0.25 / (n - 1) as f64; n];
        left[0] = 0.75;
        let right: Vec<f64> = left.iter().rev().copied().collect();
        InitialPreset::SmoothedStep {
            interface_width,
            left,
            right,
        }
    }

    /// Default duncan_toor width: a sixteenth of the domain.
    pub fn duncan_toor(domain_length: f64) -> Self {
        InitialPreset::DuncanToor {
            interface_width: domain_length / 16.0,
        }
    }

    /// Pointwise profile of the analytic presets; `None` for `Custom`.
    pub fn profile(&self, x: f64, domain_length: f64, n: usize) -> Option<Vec<f64>> {
        match self {
            InitialPreset::CosinePerturbation { amplitudes } => {
                let wave = (PI * x / domain_length).cos();
                let mut c: Vec<f64> = amplitudes.iter().map(|a| 1.0 / n as f64 + a * wave).collect();
                let rest = 1.0 - c.iter().sum::<f64>();
                c.push(rest);
                Some(c)
            }
            InitialPreset::SmoothedStep {
                interface_width,
                left,
                right,
            } => {
                let theta = 0.5 * (1.0 + ((x - 0.5 * domain_length) / interface_width).tanh());
                Some(left.iter().zip(right).map(|(l, r)| (1.0 - theta) * l + theta * r).collect())
            }
            InitialPreset::DuncanToor { interface_width } => {
                let s = ((x - 0.5 * domain_length) / interface_width + 0.5).clamp(0.0, 1.0);
                let theta = s * s * s * (s * (6.0 * s - 15.0) + 10.0);
                Some(vec![0.8 * (1.0 - theta), 0.2, 0.8 * theta])
            }
            InitialPreset::Custom { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub grid: Grid1D,
    pub n_species: usize,
    pub d: BinaryDiffusivities,
    pub initial: InitialPreset,
    pub t_end: f64,
    pub cfl: f64,
    pub integrator: Integrator,
    pub output_stride: usize,
    /// Fraction removed from every flux before it is applied (fault injection;
    /// zero for physical runs). The ledger always records the untruncated fluxes.
    pub flux_truncation: f64,
}

impl Scenario {
    pub fn new(
        grid: Grid1D,
        d: BinaryDiffusivities,
        initial: InitialPreset,
        t_end: f64,
    ) -> Result<Self> {
        let scenario = Scenario {
            grid,
            n_species: d.n_species(),
            d,
            initial,
            t_end,
            cfl: 0.25,
            integrator: Integrator::Euler,
            output_stride: 1,
            flux_truncation: 0.0,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// Same scenario on a grid with `2^levels` times as many cells.
    pub fn refined(&self, levels: u32) -> Self {
        let mut out = self.clone();
        for _ in 0..levels {
            out.grid = out.grid.refined();
        }
        if let InitialPreset::Custom { .. } = out.initial {
            // Piecewise-constant prolongation of the tabulated cells.
            let table = match &self.initial {
                InitialPreset::Custom { table } => table,
                _ => unreachable!(),
            };
            let factor = 1usize << levels;
            let rows: Vec<Vec<f64>> = (0..table.rows() * factor)
                .map(|k| table.row(k / factor).to_vec())
                .collect();
            out.initial = InitialPreset::Custom {
                table: RowTable::from_rows(&rows).expect("non-empty table"),
            };
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_species;
        if n < 2 {
            return Err(Error::Config(format!("need at least 2 species, got {n}")));
        }
        if self.d.n_species() != n {
            return Err(Error::Config(format!(
                "diffusivities cover {} species, scenario has {n}",
                self.d.n_species()
            )));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(Error::Config(format!("t_end must be >= 0, got {}", self.t_end)));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::Config(format!("cfl must lie in (0, 1], got {}", self.cfl)));
        }
        if self.output_stride == 0 {
            return Err(Error::Config("output_stride must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.flux_truncation) {
            return Err(Error::Config(format!(
                "flux truncation must lie in [0, 1), got {}",
                self.flux_truncation
            )));
        }
        match &self.initial {
            InitialPreset::CosinePerturbation { amplitudes } => {
                if amplitudes.len() != n - 1 {
                    return Err(Error::Config(format!(
                        "cosine_perturbation needs {} amplitudes, got {}",
                        n - 1,
                        amplitudes.len()
                    )));
                }
                let limit = 0.8 / n as f64;
                let total: f64 = amplitudes.iter().sum();
                if amplitudes.iter().any(|a| !(a.abs() <= limit)) || !(total.abs() <= limit) {
                    return Err(Error::Config(format!(
                        "cosine amplitudes {amplitudes:?} leave the simplex margin (each and their sum must be within ±{limit})"
                    )));
                }
            }
            InitialPreset::SmoothedStep {
                interface_width,
                left,
                right,
            } => {
                if !(interface_width.is_finite() && *interface_width > 0.0) {
                    return Err(Error::Config(format!(
                        "interface width must be positive, got {interface_width}"
                    )));
                }
                for (side, comp) in [("left", left), ("right", right)] {
                    if comp.len() != n
                        || comp.iter().any(|&c| !(c >= 0.0))
                        || (comp.iter().sum::<f64>() - 1.0).abs() > TABLE_TOLERANCE
                    {
                        return Err(Error::Config(format!(
                            "smoothed_step {side} composition {comp:?} is not a point of the {n}-simplex"
                        )));
                    }
                }
            }
            InitialPreset::DuncanToor { interface_width } => {
                if n != 3 {
                    return Err(Error::Config(format!("duncan_toor needs 3 species, got {n}")));
                }
                if !(interface_width.is_finite() && *interface_width > 0.0) {
                    return Err(Error::Config(format!(
                        "interface width must be positive, got {interface_width}"
                    )));
                }
            }
            InitialPreset::Custom { table } => {
                if table.rows() != self.grid.num_cells() || table.cols() != n {
                    return Err(Error::Config(format!(
                        "custom table is {}×{}, expected {}×{n}",
                        table.rows(),
                        table.cols(),
                        self.grid.num_cells()
                    )));
                }
                for (k, row) in table.iter_rows().enumerate() {
                    if row.iter().any(|&c| !(c >= 0.0))
                        || (row.iter().sum::<f64>() - 1.0).abs() > TABLE_TOLERANCE
                    {
                        return Err(Error::Config(format!(
                            "custom table row {k} {row:?} is not on the simplex"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn initial_state(scenario: &Scenario) -> Result<MixtureState> {
    scenario.validate()?;
    let grid = &scenario.grid;
    let n = scenario.n_species;
    let mut table = match &scenario.initial {
        InitialPreset::Custom { table } => table.clone(),
        preset => {
            let mut table = RowTable::zeros(grid.num_cells(), n);
            for k in 0..grid.num_cells() {
                let row = preset
                    .profile(grid.cell_center(k), grid.domain_length(), n)
                    .expect("analytic preset");
                table.row_mut(k).copy_from_slice(&row);
            }
            table
        }
    };
    project_rows_in_place(&mut table)?;
    MixtureState::new(n, table, 0.0)
}

/// `cfl · dx² / (2 max_{i≠j} D_ij)`.
pub fn stable_dt(grid: &Grid1D, d: &BinaryDiffusivities, cfl: f64) -> f64 {
    cfl * grid.dx() * grid.dx() / (2.0 * d.max_off_diagonal())
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub state: MixtureState,
    /// Fluxes evaluated at the input state.
    pub flux: FluxSolution,
    /// Largest entry change made by the simplex projection.
    pub repair: f64,
}

/// Conservative update `c − (dt/dx)(J_{k+½} − J_{k−½})` without projection.
fn conservative_update(state: &MixtureState, flux: &FluxSolution, grid: &Grid1D, dt: f64) -> RowTable {
    let ratio = dt / grid.dx();
    let mut raw = state.concentrations.clone();
    for k in 0..grid.num_cells() {
        let (west, east) = (flux.j.row(k), flux.j.row(k + 1));
        for ((c, w), e) in raw.row_mut(k).iter_mut().zip(west).zip(east) {
            *c -= ratio * (e - w);
        }
    }
    raw
}

fn project_checked(mut raw: RowTable, time: f64) -> Result<(MixtureState, f64)> {
    let repair = project_rows_in_place(&mut raw)?;
    if repair > MAX_STEP_REPAIR {
        return Err(Error::StabilityFailure { magnitude: repair });
    }
    let n = raw.cols();
    Ok((MixtureState::new(n, raw, time)?, repair))
}

fn advance(
    state: &MixtureState,
    grid: &Grid1D,
    d: &BinaryDiffusivities,
    dt: f64,
    integrator: Integrator,
    flux_scale: f64,
    flux: Option<FluxSolution>,
) -> Result<StepOutcome> {
    let flux = match flux {
        Some(f) => f,
        None => flux_from_state(state, grid, d)?,
    };
    let applied = if flux_scale == 1.0 {
        None
    } else {
        Some(flux.scaled(flux_scale))
    };
    let first = applied.as_ref().unwrap_or(&flux);
    let time = state.time + dt;
    match integrator {
        Integrator::Euler => {
            let (next, repair) = project_checked(conservative_update(state, first, grid, dt), time)?;
            Ok(StepOutcome {
                state: next,
                flux,
                repair,
            })
        }
        Integrator::Heun => {
            let (predictor, repair_a) =
                project_checked(conservative_update(state, first, grid, dt), time)?;
            let second = flux_from_state(&predictor, grid, d)?.scaled(flux_scale);
            let corrected = conservative_update(&predictor, &second, grid, dt);
            let mut raw = state.concentrations.clone();
            for (r, c) in raw.as_mut_slice().iter_mut().zip(corrected.as_slice()) {
                *r = 0.5 * (*r + c);
            }
            let (next, repair_b) = project_checked(raw, time)?;
            Ok(StepOutcome {
                state: next,
                flux,
                repair: repair_a.max(repair_b),
            })
        }
    }
}

/// One explicit Euler step.
pub fn step(state: &MixtureState, grid: &Grid1D, d: &BinaryDiffusivities, dt: f64) -> Result<StepOutcome> {
    advance(state, grid, d, dt, Integrator::Euler, 1.0, None)
}

/// One step of the two-stage Heun average.
pub fn step_heun(
    state: &MixtureState,
    grid: &Grid1D,
    d: &BinaryDiffusivities,
    dt: f64,
) -> Result<StepOutcome> {
    advance(state, grid, d, dt, Integrator::Heun, 1.0, None)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    pub state: MixtureState,
    pub flux: FluxSolution,
}

/// Borrowed view of the state at step `step`, handed to simulation observers.
#[derive(Clone, Copy, Debug)]
pub struct StepView<'a> {
    pub step: usize,
    pub time: f64,
    pub state: &'a MixtureState,
    pub flux: &'a FluxSolution,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub grid: Grid1D,
    pub d: BinaryDiffusivities,
    pub n_species: usize,
    pub dt: f64,
    pub n_steps: usize,
    pub t_end: f64,
    pub snapshots: Vec<Snapshot>,
    /// One entry per step endpoint `t_n = n·dt`, `n = 0..=n_steps`.
    pub ledger: Vec<LedgerEntry>,
    /// Simplex repair applied to produce the state at each step endpoint.
    pub repair_log: Vec<f64>,
    /// Per species: some face at some step carried flux up its own gradient.
    pub uphill: Vec<bool>,
    /// Largest constraint-projection defect over all faces and steps.
    pub max_rhs_defect: f64,
    /// Face solves flagged rank-deficient over the whole run.
    pub degenerate_face_count: usize,
}

impl Trajectory {
    pub fn initial(&self) -> &Snapshot {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("trajectory has an initial snapshot")
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }

    /// Largest relative change of any species mass over the run.
    pub fn max_relative_mass_drift(&self) -> f64 {
        let first = &self.ledger[0].masses;
        self.ledger
            .iter()
            .flat_map(|e| {
                e.masses
                    .iter()
                    .zip(first)
                    .map(|(m, m0)| if *m0 > 0.0 { (m - m0).abs() / m0 } else { (m - m0).abs() })
            })
            .fold(0.0, f64::max)
    }

    pub fn max_repair(&self) -> f64 {
        self.repair_log.iter().copied().fold(0.0, f64::max)
    }

    /// Largest per-step entropy increase (zero if entropy never increases).
    pub fn max_entropy_increase(&self) -> f64 {
        self.ledger
            .windows(2)
            .map(|w| w[1].entropy - w[0].entropy)
            .fold(0.0, f64::max)
    }

    pub fn max_simplex_deviation(&self) -> f64 {
        self.snapshots
            .iter()
            .map(|s| validate_state(&s.state).map_or(f64::INFINITY, |d| d.max_sum_deviation))
            .fold(0.0, f64::max)
    }
}

impl Trajectory {
    /// Rebuilds a trajectory from stored snapshots (e.g. read back from disk).
    /// Fluxes are taken from the snapshots; the ledger is evaluated at the
    /// snapshot times only and no repair history is available.
    pub fn from_snapshots(
        grid: Grid1D,
        d: BinaryDiffusivities,
        t_end: f64,
        snapshots: Vec<Snapshot>,
    ) -> Result<Self> {
        let first = snapshots
            .first()
            .ok_or_else(|| Error::Format("a trajectory needs at least one snapshot".into()))?;
        let n_species = first.state.n_species;
        if snapshots.windows(2).any(|w| !(w[1].time > w[0].time)) {
            return Err(Error::Format("snapshot times must be strictly increasing".into()));
        }
        let n_steps = snapshots.last().map_or(0, |s| s.step);
        let mut uphill = vec![false; n_species];
        let mut ledger = Vec::with_capacity(snapshots.len());
        let mut max_rhs_defect = 0.0_f64;
        let mut degenerate_face_count = 0;
        for snap in &snapshots {
            ledger.push(ledger_entry(&snap.state, &snap.flux, &grid, &d)?);
            update_uphill(&mut uphill, &snap.state, &snap.flux, &grid);
            max_rhs_defect = max_rhs_defect.max(snap.flux.max_rhs_defect());
            degenerate_face_count += snap.flux.degenerate.iter().filter(|&&f| f).count();
        }
        Ok(Trajectory {
            grid,
            d,
            n_species,
            dt: if n_steps > 0 { t_end / n_steps as f64 } else { 0.0 },
            n_steps,
            t_end,
            repair_log: vec![0.0; snapshots.len()],
            snapshots,
            ledger,
            uphill,
            max_rhs_defect,
            degenerate_face_count,
        })
    }
}

fn update_uphill(uphill: &mut [bool], state: &MixtureState, flux: &FluxSolution, grid: &Grid1D) {
    const TINY: f64 = 1e-12;
    for f in 1..grid.num_cells() {
        let (left, right) = (state.cell(f - 1), state.cell(f));
        for (i, flag) in uphill.iter_mut().enumerate() {
            let jump = right[i] - left[i];
            let j = flux.j.row(f)[i];
            if jump.abs() > TINY && j.abs() > TINY && j * jump > 0.0 {
                *flag = true;
            }
        }
    }
}

/// Runs `scenario` to `t_end`, calling `observer` with the state and fluxes at
/// every step endpoint (including `t = 0` and `t_end`).
///
/// The step count is `⌈t_end / dt_stable⌉` and the step size `t_end / steps`, so
/// the run ends exactly at `t_end` with `dt ≤ stable_dt`.
pub fn simulate_observed<F>(scenario: &Scenario, mut observer: F) -> Result<Trajectory>
where
    F: FnMut(StepView<'_>),
{
    let grid = scenario.grid;
    let d = &scenario.d;
    let mut state = initial_state(scenario)?;
    let dt_stable = stable_dt(&grid, d, scenario.cfl);
    let n_steps = if scenario.t_end > 0.0 {
        (scenario.t_end / dt_stable * (1.0 - 1e-12)).ceil().max(1.0) as usize
    } else {
        0
    };
    let dt = if n_steps > 0 { scenario.t_end / n_steps as f64 } else { 0.0 };
    let flux_scale = 1.0 - scenario.flux_truncation;

    let mut trajectory = Trajectory {
        grid,
        d: d.clone(),
        n_species: scenario.n_species,
        dt,
        n_steps,
        t_end: scenario.t_end,
        snapshots: Vec::new(),
        ledger: Vec::with_capacity(n_steps + 1),
        repair_log: Vec::with_capacity(n_steps + 1),
        uphill: vec![false; scenario.n_species],
        max_rhs_defect: 0.0,
        degenerate_face_count: 0,
    };

    let mut flux = flux_from_state(&state, &grid, d).map_err(|e| at_step(0, 0.0, e))?;
    let mut repair = 0.0;
    for n in 0..=n_steps {
        let time = if n == n_steps { scenario.t_end } else { n as f64 * dt };
        state.time = time;
        observer(StepView {
            step: n,
            time,
            state: &state,
            flux: &flux,
        });
        trajectory
            .ledger
            .push(ledger_entry(&state, &flux, &grid, d).map_err(|e| at_step(n, time, e))?);
        trajectory.repair_log.push(repair);
        trajectory.max_rhs_defect = trajectory.max_rhs_defect.max(flux.max_rhs_defect());
        trajectory.degenerate_face_count += flux.degenerate.iter().filter(|&&f| f).count();
        update_uphill(&mut trajectory.uphill, &state, &flux, &grid);
        if n % scenario.output_stride == 0 || n == n_steps {
            trajectory.snapshots.push(Snapshot {
                step: n,
                time,
                state: state.clone(),
                flux: flux.clone(),
            });
        }
        if n == n_steps {
            break;
        }
        let outcome = advance(&state, &grid, d, dt, scenario.integrator, flux_scale, Some(flux))
            .map_err(|e| at_step(n + 1, time + dt, e))?;
        state = outcome.state;
        repair = outcome.repair;
        flux = flux_from_state(&state, &grid, d).map_err(|e| at_step(n + 1, time + dt, e))?;
    }
    Ok(trajectory)
}

pub fn simulate(scenario: &Scenario) -> Result<Trajectory> {
    simulate_observed(scenario, |_| {})
}

fn at_step(step: usize, time: f64, source: Error) -> Error {
    Error::AtStep {
        step,
        time,
        source: Box::new(source),
    }
}

/// `½ + a cos(πx/L) exp(−π² D t / L²)`: species 1 of the binary cosine
/// benchmark, which reduces to the heat equation.
pub fn binary_cosine_exact(x: f64, t: f64, amplitude: f64, diffusivity: f64, length: f64) -> f64 {
    let k = PI / length;
    0.5 + amplitude * (k * x).cos() * (-k * k * diffusivity * t).exp()
}

/// Discrete L² distance between species `species` and `exact(x)` at cell centres.
pub fn l2_error<F: Fn(f64) -> f64>(state: &MixtureState, grid: &Grid1D, species: usize, exact: F) -> f64 {
    (0..grid.num_cells())
        .map(|k| {
            let e = state.cell(k)[species] - exact(grid.cell_center(k));
            e * e * grid.dx()
        })
        .sum::<f64>()
        .sqrt()
}

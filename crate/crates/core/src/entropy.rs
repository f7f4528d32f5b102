//! Entropy `H(c) = Σ ∫ c_i (ln c_i − 1)`, its dissipation, and the balance
//! residual `r(t) = H(t) + ∫₀ᵗ D − H(0)`.

use crate::friction::{dissipation_density, FluxSolution};
use crate::mixture::{face_grad_sqrt, face_values, BinaryDiffusivities, Grid1D, MixtureState, RowTable};
use crate::solver::Trajectory;
use crate::{Error, Result};

/// Concentrations at or below this are skipped in the velocity form.
pub const VELOCITY_FORM_CUTOFF: f64 = 1e-8;

fn entropy_density(c: f64) -> f64 {
    if c > 0.0 {
        c * (c.ln() - 1.0)
    } else {
        0.0
    }
}

/// `Σ_i Σ_k c_{k,i} (ln c_{k,i} − 1) dx` with `0 ln 0 = 0`.
pub fn entropy(state: &MixtureState, grid: &Grid1D) -> f64 {
    state
        .concentrations
        .iter_rows()
        .map(|row| row.iter().map(|&c| entropy_density(c)).sum::<f64>())
        .sum::<f64>()
        * grid.dx()
}

fn check_flux_shape(flux: &FluxSolution, grid: &Grid1D, n: usize) -> Result<()> {
    if flux.num_faces() != grid.num_faces() || flux.m.cols() != n {
        return Err(Error::Shape(format!(
            "flux table is {}×{}, expected {}×{n}",
            flux.num_faces(),
            flux.m.cols(),
            grid.num_faces()
        )));
    }
    Ok(())
}

/// Midpoint face quadrature of the m-form dissipation density.
pub fn dissipation_rate(
    state: &MixtureState,
    flux: &FluxSolution,
    grid: &Grid1D,
    d: &BinaryDiffusivities,
) -> Result<f64> {
    check_flux_shape(flux, grid, state.n_species)?;
    let faces = face_values(state, grid)?;
    Ok(dissipation_from_faces(&faces, flux, grid, d))
}

fn dissipation_from_faces(faces: &RowTable, flux: &FluxSolution, grid: &Grid1D, d: &BinaryDiffusivities) -> f64 {
    (1..grid.num_cells())
        .map(|f| dissipation_density(faces.row(f), flux.m.row(f), d))
        .sum::<f64>()
        * grid.dx()
}

/// `½ Σ (c_i c_j / D_ij) |u_i − u_j|²` with `u_i = m_i/√c_i`, summed over faces
/// whose concentrations all exceed [`VELOCITY_FORM_CUTOFF`]. Returns the value
/// and the number of faces skipped.
pub fn dissipation_rate_velocity_form(
    state: &MixtureState,
    flux: &FluxSolution,
    grid: &Grid1D,
    d: &BinaryDiffusivities,
) -> Result<(f64, usize)> {
    check_flux_shape(flux, grid, state.n_species)?;
    let faces = face_values(state, grid)?;
    let n = state.n_species;
    let mut total = 0.0;
    let mut skipped = 0;
    for f in 1..grid.num_cells() {
        let c = faces.row(f);
        if c.iter().any(|&v| v <= VELOCITY_FORM_CUTOFF) {
            skipped += 1;
            continue;
        }
        let u: Vec<f64> = c.iter().zip(flux.m.row(f)).map(|(ci, mi)| mi / ci.sqrt()).collect();
        let mut face = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let du = u[i] - u[j];
                    face += c[i] * c[j] / d.get(i, j) * du * du;
                }
            }
        }
        total += 0.5 * face;
    }
    Ok((total * grid.dx(), skipped))
}

/// `−2 Σ_i Σ_faces m_i (∇√c_i)_face dx`.
pub fn flux_pairing(flux: &FluxSolution, grad_sqrt: &RowTable, grid: &Grid1D) -> Result<f64> {
    if grad_sqrt.rows() != flux.num_faces() || grad_sqrt.cols() != flux.m.cols() {
        return Err(Error::Shape(format!(
            "gradient table is {}×{}, flux table is {}×{}",
            grad_sqrt.rows(),
            grad_sqrt.cols(),
            flux.num_faces(),
            flux.m.cols()
        )));
    }
    let sum: f64 = flux
        .m
        .as_slice()
        .iter()
        .zip(grad_sqrt.as_slice())
        .map(|(m, g)| m * g)
        .sum();
    Ok(-2.0 * sum * grid.dx())
}

/// Scalar diagnostics recorded at every step endpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct LedgerEntry {
    pub time: f64,
    pub entropy: f64,
    pub dissipation_rate: f64,
    pub flux_pairing: f64,
    /// `|flux_pairing − dissipation_rate|`.
    pub pairing_gap: f64,
    pub min_concentration: f64,
    pub masses: Vec<f64>,
}

pub fn ledger_entry(
    state: &MixtureState,
    flux: &FluxSolution,
    grid: &Grid1D,
    d: &BinaryDiffusivities,
) -> Result<LedgerEntry> {
    check_flux_shape(flux, grid, state.n_species)?;
    let faces = face_values(state, grid)?;
    let grads = face_grad_sqrt(state, grid)?;
    let dissipation = dissipation_from_faces(&faces, flux, grid, d);
    let pairing = flux_pairing(flux, &grads, grid)?;
    Ok(LedgerEntry {
        time: state.time,
        entropy: entropy(state, grid),
        dissipation_rate: dissipation,
        flux_pairing: pairing,
        pairing_gap: (pairing - dissipation).abs(),
        min_concentration: state
            .concentrations
            .as_slice()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min),
        masses: state.species_masses(grid),
    })
}

/// Entropy balance along a trajectory, one entry per step endpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct EntropyReport {
    pub times: Vec<f64>,
    pub entropy: Vec<f64>,
    pub dissipation_rate: Vec<f64>,
    /// Trapezoidal `∫₀ᵗ D dτ` on step endpoints.
    pub cumulative_dissipation: Vec<f64>,
    /// `H(t) + ∫₀ᵗ D − H(0)`.
    pub residual: Vec<f64>,
    pub pairing_gap: Vec<f64>,
}

impl EntropyReport {
    pub fn from_ledger(ledger: &[LedgerEntry]) -> Self {
        let len = ledger.len();
        let mut report = EntropyReport {
            times: Vec::with_capacity(len),
            entropy: Vec::with_capacity(len),
            dissipation_rate: Vec::with_capacity(len),
            cumulative_dissipation: Vec::with_capacity(len),
            residual: Vec::with_capacity(len),
            pairing_gap: Vec::with_capacity(len),
        };
        let Some(first) = ledger.first() else {
            return report;
        };
        let h0 = first.entropy;
        let mut cumulative = 0.0;
        for (k, entry) in ledger.iter().enumerate() {
            if k > 0 {
                let prev = &ledger[k - 1];
                cumulative += 0.5 * (entry.time - prev.time) * (entry.dissipation_rate + prev.dissipation_rate);
            }
            report.times.push(entry.time);
            report.entropy.push(entry.entropy);
            report.dissipation_rate.push(entry.dissipation_rate);
            report.cumulative_dissipation.push(cumulative);
            report.residual.push(entry.entropy + cumulative - h0);
            report.pairing_gap.push(entry.pairing_gap);
        }
        report
    }

    pub fn from_trajectory(trajectory: &Trajectory) -> Self {
        Self::from_ledger(&trajectory.ledger)
    }

    pub fn sup_abs_residual(&self) -> f64 {
        self.residual.iter().map(|r| r.abs()).fold(0.0, f64::max)
    }

    pub fn initial_entropy(&self) -> f64 {
        self.entropy.first().copied().unwrap_or(0.0)
    }
}

/// `r(t_n)` at every step endpoint of `trajectory`.
pub fn anomalous_residual(trajectory: &Trajectory) -> Vec<f64> {
    EntropyReport::from_trajectory(trajectory).residual
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::friction::flux_from_state;
    use crate::solver::{simulate, InitialPreset, Scenario};
    use proptest::prelude::*;

    fn uniform_state(n: usize, cells: usize) -> MixtureState {
        let rows = vec![vec![1.0 / n as f64; n]; cells];
        MixtureState::new(n, RowTable::from_rows(&rows).unwrap(), 0.0).unwrap()
    }

    fn cosine_state(cells: usize, a: f64) -> (MixtureState, Grid1D) {
        let g = Grid1D::new(cells, 1.0).unwrap();
        let rows: Vec<Vec<f64>> = (0..cells)
            .map(|k| {
                let c1 = 0.5 + a * (std::f64::consts::PI * g.cell_center(k)).cos();
                vec![c1, 1.0 - c1]
            })
            .collect();
        (MixtureState::new(2, RowTable::from_rows(&rows).unwrap(), 0.0).unwrap(), g)
    }

    #[test]
    fn uniform_entropy_closed_forms() {
        let g = Grid1D::new(10, 1.0).unwrap();
        let h2 = entropy(&uniform_state(2, 10), &g);
        assert!((h2 - (-(2.0_f64).ln() - 1.0)).abs() < 1e-14, "{h2}");
        let h3 = entropy(&uniform_state(3, 10), &g);
        assert!((h3 - (-(3.0_f64).ln() - 1.0)).abs() < 1e-14, "{h3}");
    }

    #[test]
    fn pure_cell_contributes_minus_dx() {
        let g = Grid1D::new(2, 1.0).unwrap();
        let s = MixtureState::new(2, RowTable::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap(), 0.0)
            .unwrap();
        assert_eq!(entropy(&s, &g), -1.0);
    }

    #[test]
    fn uniform_state_has_no_dissipation() {
        let g = Grid1D::new(8, 1.0).unwrap();
        let d = BinaryDiffusivities::uniform(3, 1.0).unwrap();
        let s = uniform_state(3, 8);
        let flux = flux_from_state(&s, &g, &d).unwrap();
        assert_eq!(dissipation_rate(&s, &flux, &g, &d).unwrap(), 0.0);
        let grads = face_grad_sqrt(&s, &g).unwrap();
        assert_eq!(flux_pairing(&flux, &grads, &g).unwrap(), 0.0);
    }

    #[test]
    fn binary_cosine_dual_forms_agree() {
        let (s, g) = cosine_state(64, 0.3);
        let d = BinaryDiffusivities::uniform(2, 1.0).unwrap();
        let flux = flux_from_state(&s, &g, &d).unwrap();
        let m_form = dissipation_rate(&s, &flux, &g, &d).unwrap();
        let (u_form, skipped) = dissipation_rate_velocity_form(&s, &flux, &g, &d).unwrap();
        assert_eq!(skipped, 0);
        assert!(m_form > 0.0);
        assert!((m_form - u_form).abs() <= 1e-8 * m_form, "{m_form} {u_form}");

        // Binary reduction: D = ∫ D₁₂ |∇c₁|² / (c₁ c₂) in the face quadrature with
        // the exact face flux replacing D₁₂ ∇c₁.
        let faces = face_values(&s, &g).unwrap();
        let fick: f64 = (1..64)
            .map(|f| {
                let c = faces.row(f);
                let j = flux.j.row(f)[0];
                j * j / (c[0] * c[1])
            })
            .sum::<f64>()
            * g.dx();
        assert!((m_form - fick).abs() <= 1e-10 * m_form);

        let grads = face_grad_sqrt(&s, &g).unwrap();
        let pairing = flux_pairing(&flux, &grads, &g).unwrap();
        assert!((pairing - m_form).abs() <= 1e-10 * m_form.max(1.0));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let (s, g) = cosine_state(8, 0.1);
        let d = BinaryDiffusivities::uniform(2, 1.0).unwrap();
        let flux = flux_from_state(&s, &g, &d).unwrap();
        let other = Grid1D::new(9, 1.0).unwrap();
        assert!(matches!(dissipation_rate(&s, &flux, &other, &d), Err(Error::Shape(_))));
    }

    #[test]
    fn report_on_short_run() {
        let scenario = Scenario::new(
            Grid1D::new(16, 1.0).unwrap(),
            BinaryDiffusivities::uniform(2, 1.0).unwrap(),
            InitialPreset::CosinePerturbation { amplitudes: vec![0.3] },
            0.02,
        )
        .unwrap();
        let traj = simulate(&scenario).unwrap();
        let report = EntropyReport::from_trajectory(&traj);
        assert_eq!(report.residual[0], 0.0);
        assert!(report.entropy.iter().all(|&h| h <= 0.0));
        assert!(report.dissipation_rate.iter().all(|&d| d >= 0.0));
        assert!(report.cumulative_dissipation.windows(2).all(|w| w[1] >= w[0]));
        assert!(report.entropy.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(report.sup_abs_residual() <= 5e-3 * report.initial_entropy().abs());
        assert_eq!(anomalous_residual(&traj), report.residual);
    }

    fn simplex_row(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..1.0, n).prop_map(|w| {
            let t: f64 = w.iter().sum();
            w.into_iter().map(|v| v / t).collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn pairing_matches_dissipation_for_solver_fluxes(
            rows in (2usize..6).prop_flat_map(|n| prop::collection::vec(simplex_row(n), 4..12)),
            dvals in prop::collection::vec(0.1f64..5.0, 15),
        ) {
            let n = rows[0].len();
            let cells = rows.len();
            let mut dm = vec![vec![0.0; n]; n];
            let mut k = 0;
            for i in 0..n {
                for j in i + 1..n {
                    dm[i][j] = dvals[k];
                    dm[j][i] = dvals[k];
                    k += 1;
                }
            }
            let d = BinaryDiffusivities::new(&dm).unwrap();
            let g = Grid1D::new(cells, 1.0).unwrap();
            let s = MixtureState::new(n, RowTable::from_rows(&rows).unwrap(), 0.0).unwrap();
            let flux = flux_from_state(&s, &g, &d).unwrap();
            let entry = ledger_entry(&s, &flux, &g, &d).unwrap();
            prop_assert!(entry.dissipation_rate >= 0.0);
            prop_assert!(entry.entropy <= 0.0);
            // m is orthogonal to s, so mᵀAm = mᵀP_L b = m·b exactly.
            prop_assert!(entry.pairing_gap <= 1e-10 * entry.dissipation_rate.max(1.0),
                "gap {}", entry.pairing_gap);
        }
    }
}

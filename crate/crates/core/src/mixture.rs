//! Grid geometry, mixture states on the probability simplex, and the face
//! reconstructions shared by the flux solver and the entropy ledger.
//!
//! Faces are indexed `f = 0..=num_cells`; face `f` sits at `x = f·dx`.
//! Faces `0` and `num_cells` are the domain boundary and carry no flux.

use crate::{Error, Result};

/// Dense row-major table, used for per-cell and per-face rows of species data.
#[derive(Clone, Debug, PartialEq)]
pub struct RowTable {
    cols: usize,
    data: Vec<f64>,
}

impl RowTable {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RowTable {
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_flat(cols: usize, data: Vec<f64>) -> Result<Self> {
        if cols == 0 || data.len() % cols != 0 {
            return Err(Error::Shape(format!(
                "{} values cannot be split into rows of {cols}",
                data.len()
            )));
        }
        Ok(RowTable { cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if cols == 0 {
            return Err(Error::Shape("table needs at least one non-empty row".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (k, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::Shape(format!(
                    "row {k} has {} entries, expected {cols}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(RowTable { cols, data })
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.cols.max(1)
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.cols..(k + 1) * self.cols]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.cols..(k + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols)
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        self.iter_rows().map(|r| r[i]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.iter_rows().map(<[f64]>::to_vec).collect()
    }
}

/// Uniform partition of `[0, domain_length]` into `num_cells` cells.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid1D {
    num_cells: usize,
    domain_length: f64,
    dx: f64,
}

impl Grid1D {
    pub fn new(num_cells: usize, domain_length: f64) -> Result<Self> {
        if num_cells < 2 {
            return Err(Error::Config(format!(
                "grid needs at least 2 cells, got {num_cells}"
            )));
        }
        if !(domain_length.is_finite() && domain_length > 0.0) {
            return Err(Error::Config(format!(
                "domain length must be positive, got {domain_length}"
            )));
        }
        Ok(Grid1D {
            num_cells,
            domain_length,
            dx: domain_length / num_cells as f64,
        })
    }

    pub fn num_cells(&self) -> usize {
        self.num_cells
    }

    pub fn num_faces(&self) -> usize {
        self.num_cells + 1
    }

    pub fn domain_length(&self) -> f64 {
        self.domain_length
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn cell_center(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.dx
    }

    pub fn face_position(&self, f: usize) -> f64 {
        f as f64 * self.dx
    }

    pub fn is_boundary_face(&self, f: usize) -> bool {
        f == 0 || f == self.num_cells
    }

    /// Same domain with twice as many cells.
    pub fn refined(&self) -> Self {
        Grid1D::new(self.num_cells * 2, self.domain_length).expect("refining a valid grid")
    }
}

/// Symmetric binary interaction coefficients `D_ij`, `i ≠ j`.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryDiffusivities {
    n: usize,
    d: Vec<f64>,
}

impl BinaryDiffusivities {
    /// Builds from a full `n × n` matrix; the diagonal is ignored.
    pub fn new(matrix: &[Vec<f64>]) -> Result<Self> {
        let n = matrix.len();
        if n < 2 {
            return Err(Error::Config(format!("need at least 2 species, got {n}")));
        }
        let mut d = vec![0.0; n * n];
        for (i, row) in matrix.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Shape(format!(
                    "diffusivity row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                if i != j {
                    d[i * n + j] = v;
                }
            }
        }
        let out = BinaryDiffusivities { n, d };
        out.check()?;
        Ok(out)
    }

    /// All off-diagonal coefficients equal to `value`.
    pub fn uniform(n: usize, value: f64) -> Result<Self> {
        let matrix = vec![vec![value; n]; n];
        Self::new(&matrix)
    }

    fn check(&self) -> Result<()> {
        for i in 0..self.n {
            for j in 0..self.n {
                if i == j {
                    continue;
                }
                let dij = self.get(i, j);
                if !(dij.is_finite() && dij > 0.0) {
                    return Err(Error::Config(format!(
                        "D_{}{} = {dij} must be positive",
                        i + 1,
                        j + 1
                    )));
                }
                if dij != self.get(j, i) {
                    return Err(Error::Config(format!(
                        "D is not symmetric: D_{}{} = {dij} but D_{}{} = {}",
                        i + 1,
                        j + 1,
                        j + 1,
                        i + 1,
                        self.get(j, i)
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n_species(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    /// Largest off-diagonal coefficient.
    pub fn max_off_diagonal(&self) -> f64 {
        let mut best = 0.0_f64;
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j {
                    best = best.max(self.get(i, j));
                }
            }
        }
        best
    }

    /// Every coefficient multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Self {
        BinaryDiffusivities {
            n: self.n,
            d: self.d.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn to_matrix(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j)).collect())
            .collect()
    }
}

/// Cell-averaged mass fractions, one row per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureState {
    pub n_species: usize,
    pub concentrations: RowTable,
    pub time: f64,
}

impl MixtureState {
    pub fn new(n_species: usize, concentrations: RowTable, time: f64) -> Result<Self> {
        if n_species < 2 {
            return Err(Error::Shape(format!("need at least 2 species, got {n_species}")));
        }
        if concentrations.cols() != n_species {
            return Err(Error::Shape(format!(
                "state has {} columns but declares {n_species} species",
                concentrations.cols()
            )));
        }
        Ok(MixtureState {
            n_species,
            concentrations,
            time,
        })
    }

    pub fn num_cells(&self) -> usize {
        self.concentrations.rows()
    }

    pub fn cell(&self, k: usize) -> &[f64] {
        self.concentrations.row(k)
    }

    /// Total mass `Σ_k c_{k,i} dx` of each species.
    pub fn species_masses(&self, grid: &Grid1D) -> Vec<f64> {
        let mut masses = vec![0.0; self.n_species];
        for row in self.concentrations.iter_rows() {
            for (m, &c) in masses.iter_mut().zip(row) {
                *m += c * grid.dx();
            }
        }
        masses
    }

    fn check_grid(&self, grid: &Grid1D) -> Result<()> {
        if self.num_cells() != grid.num_cells() {
            return Err(Error::Shape(format!(
                "state has {} cells, grid has {}",
                self.num_cells(),
                grid.num_cells()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimplexDiagnostics {
    pub min_concentration: f64,
    pub max_sum_deviation: f64,
    pub negative_cell_count: usize,
}

impl SimplexDiagnostics {
    pub fn is_valid(&self, tolerance: f64) -> bool {
        self.negative_cell_count == 0 && self.max_sum_deviation <= tolerance
    }
}

pub fn validate_state(state: &MixtureState) -> Result<SimplexDiagnostics> {
    if state.concentrations.cols() != state.n_species {
        return Err(Error::Shape(format!(
            "state has {} columns but declares {} species",
            state.concentrations.cols(),
            state.n_species
        )));
    }
    let mut diag = SimplexDiagnostics {
        min_concentration: f64::INFINITY,
        max_sum_deviation: 0.0,
        negative_cell_count: 0,
    };
    for row in state.concentrations.iter_rows() {
        let mut sum = 0.0;
        let mut negative = false;
        for &c in row {
            sum += c;
            diag.min_concentration = diag.min_concentration.min(c);
            negative |= c < 0.0;
        }
        diag.max_sum_deviation = diag.max_sum_deviation.max((sum - 1.0).abs());
        diag.negative_cell_count += usize::from(negative);
    }
    Ok(diag)
}

/// Clips negatives and renormalizes each row; see [`project_to_simplex`].
/// Returns the largest absolute change of any entry.
pub(crate) fn project_rows_in_place(table: &mut RowTable) -> Result<f64> {
    let mut repair = 0.0_f64;
    for k in 0..table.rows() {
        let row = table.row_mut(k);
        let positive_sum: f64 = row.iter().map(|&c| c.max(0.0)).sum();
        if !(positive_sum > 0.0 && positive_sum.is_finite()) {
            return Err(Error::DegenerateCell { cell: k, positive_sum });
        }
        for c in row.iter_mut() {
            let projected = c.max(0.0) / positive_sum;
            repair = repair.max((projected - *c).abs());
            *c = projected;
        }
    }
    Ok(repair)
}

/// Clip negatives to zero, then divide each row by its sum.
pub fn project_to_simplex(raw: &RowTable) -> Result<MixtureState> {
    let mut table = raw.clone();
    project_rows_in_place(&mut table)?;
    MixtureState::new(table.cols(), table, 0.0)
}

/// Face concentrations on every face. Interior faces take the arithmetic mean
/// of the two neighbours; boundary faces copy the adjacent cell.
pub fn face_values(state: &MixtureState, grid: &Grid1D) -> Result<RowTable> {
    state.check_grid(grid)?;
    let n = state.n_species;
    let cells = grid.num_cells();
    let mut faces = RowTable::zeros(grid.num_faces(), n);
    faces.row_mut(0).copy_from_slice(state.cell(0));
    faces.row_mut(cells).copy_from_slice(state.cell(cells - 1));
    for f in 1..cells {
        let (left, right) = (state.cell(f - 1), state.cell(f));
        for (out, (&l, &r)) in faces.row_mut(f).iter_mut().zip(left.iter().zip(right)) {
            *out = 0.5 * (l + r);
        }
    }
    Ok(faces)
}

/// Difference quotients of `√c_i` across every face; boundary rows are zero.
pub fn face_grad_sqrt(state: &MixtureState, grid: &Grid1D) -> Result<RowTable> {
    state.check_grid(grid)?;
    let n = state.n_species;
    let cells = grid.num_cells();
    let inv_dx = 1.0 / grid.dx();
    let mut grads = RowTable::zeros(grid.num_faces(), n);
    for f in 1..cells {
        let (left, right) = (state.cell(f - 1), state.cell(f));
        for (out, (&l, &r)) in grads.row_mut(f).iter_mut().zip(left.iter().zip(right)) {
            *out = (r.max(0.0).sqrt() - l.max(0.0).sqrt()) * inv_dx;
        }
    }
    Ok(grads)
}

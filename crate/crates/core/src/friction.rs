//! Friction matrix of the Maxwell-Stefan system and the constrained solve
//! for the auxiliary fluxes `m_i = √c_i u_i`.
//!
//! At a composition `c` on the simplex
//!
//! ```text
//! A_ij = −√(c_i c_j) / D_ij           (i ≠ j)
//! A_ii = Σ_{k≠i} c_k / D_ik
//! ```
//!
//! is symmetric positive semidefinite with `A s = 0` for `s = (√c_1, …, √c_n)`.
//! The fluxes solve `A m = −2 ∂x√c` on `L = s⊥`, i.e. subject to `Σ √c_i m_i = 0`.
//! [`bott_duffin_solve`] inverts `A` on `L` through
//! `P_L (A P_L + P_{L⊥})⁻¹ P_L`; [`moore_penrose_solve`] is an independent
//! SVD route used as an oracle and for compositions with vanishing entries.

use nalgebra::{DMatrix, DVector};

use crate::dense::{self, Dd};
use crate::mixture::{face_grad_sqrt, face_values, BinaryDiffusivities, Grid1D, MixtureState, RowTable};
use crate::{Error, Result};

/// Condition number above which the Bott-Duffin composition is rejected.
pub const MAX_CONDITION: f64 = 1e14;

/// Relative singular-value cutoff of the pseudoinverse.
pub const SVD_CUTOFF: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct FrictionMatrix {
    n: usize,
    a: Vec<f64>,
    c: Vec<f64>,
    s: Vec<f64>,
    /// `D_ij` row-major, zero diagonal.
    d: Vec<f64>,
}

impl FrictionMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    /// Row-major entries.
    pub fn entries(&self) -> &[f64] {
        &self.a
    }

    /// Composition the matrix was assembled at.
    pub fn composition(&self) -> &[f64] {
        &self.c
    }

    /// `s = (√c_1, …, √c_n)`, which spans the kernel.
    pub fn kernel_vector(&self) -> &[f64] {
        &self.s
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        dense::mat_vec(self.n, &self.a, v)
    }

    /// `mᵀ A m`. Evaluated in double-double from `c` and `D`: for `m` close
    /// to the kernel the terms cancel by many orders of magnitude.
    pub fn quadratic_form(&self, m: &[f64]) -> f64 {
        let n = self.n;
        let roots: Vec<Dd> = self.c.iter().map(|&c| Dd::new(c).sqrt()).collect();
        let mut total = Dd::default();
        for i in 0..n {
            let mi = Dd::new(m[i]);
            let mut row = Dd::default();
            for j in 0..n {
                if i == j {
                    continue;
                }
                let dij = Dd::new(self.d[i * n + j]);
                // A_ii m_i + A_ij m_j = (c_j m_i − √(c_i c_j) m_j) / D_ij
                let term = Dd::new(self.c[j]).mul(mi).sub(roots[i].mul(roots[j]).mul(Dd::new(m[j])));
                row = row.add(term.div(dij));
            }
            total = total.add(mi.mul(row));
        }
        total.hi
    }

    pub fn frobenius_norm(&self) -> f64 {
        dense::norm2(&self.a)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.a.chunks_exact(self.n).map(<[f64]>::to_vec).collect()
    }
}

pub fn assemble_friction_matrix(c: &[f64], d: &BinaryDiffusivities) -> Result<FrictionMatrix> {
    let n = c.len();
    if n != d.n_species() {
        return Err(Error::Shape(format!(
            "composition has {n} species, diffusivities have {}",
            d.n_species()
        )));
    }
    let mut a = vec![0.0; n * n];
    let mut s = vec![0.0; n];
    fill_friction(c, d, &mut a, &mut s);
    let c = c.iter().map(|&v| v.max(0.0)).collect();
    let d = (0..n * n)
        .map(|k| if k / n == k % n { 0.0 } else { d.get(k / n, k % n) })
        .collect();
    Ok(FrictionMatrix { n, a, c, s, d })
}

/// Writes `A(c)` (row-major) and `s = √c`, clipping negative entries of `c` to zero.
fn fill_friction(c: &[f64], d: &BinaryDiffusivities, a: &mut [f64], s: &mut [f64]) {
    let n = c.len();
    for (si, &ci) in s.iter_mut().zip(c) {
        *si = ci.max(0.0).sqrt();
    }
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if i == j {
                continue;
            }
            let dij = d.get(i, j);
            diag += c[j].max(0.0) / dij;
            a[i * n + j] = -(s[i] * s[j]) / dij;
        }
        a[i * n + i] = diag;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BottDuffinSolution {
    pub m: Vec<f64>,
    /// `‖b − P_L b‖`, the part of the right-hand side outside the constraint space.
    pub defect: f64,
    /// 1-norm condition number of `A P_L + P_{L⊥}`.
    pub condition: f64,
}

/// `P_L = I − ŝŝᵀ` for the unit kernel direction `ŝ`.
fn constraint_projector(s: &[f64]) -> Option<Vec<f64>> {
    let n = s.len();
    let norm_sq = dense::dot(s, s);
    if norm_sq <= 0.0 {
        return None;
    }
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = f64::from(u8::from(i == j)) - s[i] * s[j] / norm_sq;
        }
    }
    Some(p)
}

/// Scratch space for repeated Bott-Duffin solves of one size.
struct BottDuffinWorkspace {
    n: usize,
    unit: Vec<f64>,
    a_unit: Vec<f64>,
    composite: Vec<f64>,
    perm: Vec<usize>,
    pb: Vec<f64>,
    y: Vec<f64>,
    scratch: Vec<f64>,
}

impl BottDuffinWorkspace {
    fn new(n: usize) -> Self {
        BottDuffinWorkspace {
            n,
            unit: vec![0.0; n],
            a_unit: vec![0.0; n],
            composite: vec![0.0; n * n],
            perm: vec![0; n],
            pb: vec![0.0; n],
            y: vec![0.0; n],
            scratch: vec![0.0; 2 * n],
        }
    }

    /// Writes `m` and returns `(defect, condition)`; `Err(condition)` when the
    /// composition is rejected.
    fn solve(&mut self, a: &[f64], s: &[f64], b: &[f64], m: &mut [f64]) -> std::result::Result<(f64, f64), f64> {
        let n = self.n;
        let norm = dense::norm2(s);
        if !(norm > 0.0) {
            return Err(f64::INFINITY);
        }
        for (u, v) in self.unit.iter_mut().zip(s) {
            *u = v / norm;
        }
        // With P_L = I − ûûᵀ: A P_L = A − (Aû)ûᵀ and P_{L⊥} = ûûᵀ.
        for i in 0..n {
            self.a_unit[i] = dense::dot(&a[i * n..(i + 1) * n], &self.unit);
        }
        for i in 0..n {
            for j in 0..n {
                self.composite[i * n + j] =
                    a[i * n + j] - self.a_unit[i] * self.unit[j] + self.unit[i] * self.unit[j];
            }
        }
        let along = dense::dot(&self.unit, b);
        for i in 0..n {
            self.pb[i] = b[i] - along * self.unit[i];
        }
        let composite_norm = dense::norm1(n, &self.composite);
        if !dense::factor_in_place(n, &mut self.composite, &mut self.perm) {
            return Err(f64::INFINITY);
        }
        let condition = composite_norm * dense::inverse_norm1(n, &self.composite, &self.perm, &mut self.scratch);
        if !(condition <= MAX_CONDITION) {
            return Err(condition);
        }
        dense::solve_into(n, &self.composite, &self.perm, &self.pb, &mut self.y);
        let back = dense::dot(&self.unit, &self.y);
        for i in 0..n {
            m[i] = self.y[i] - back * self.unit[i];
        }
        Ok((along.abs(), condition))
    }
}

/// Solves `A m = P_L b` with `m ∈ L = s⊥` through the Bott-Duffin inverse.
pub fn bott_duffin_solve(a: &FrictionMatrix, b: &[f64]) -> Result<BottDuffinSolution> {
    let n = a.n;
    if b.len() != n {
        return Err(Error::Shape(format!("rhs has {} entries, expected {n}", b.len())));
    }
    let mut m = vec![0.0; n];
    match BottDuffinWorkspace::new(n).solve(&a.a, &a.s, b, &mut m) {
        Ok((defect, condition)) => Ok(BottDuffinSolution { m, defect, condition }),
        Err(condition) => Err(Error::DegenerateComposition {
            c: a.c.clone(),
            condition,
        }),
    }
}

/// Minimal-norm least-squares solution, returned with the numerical rank.
///
/// `A` is symmetric PSD, so its symmetric eigendecomposition is an SVD. The
/// eigen route is used because nalgebra's bidiagonal SVD loses accuracy on
/// some of these matrices (relative errors near 1e-4 in singular values).
fn pseudo_inverse_solve(a: &FrictionMatrix, b: &[f64]) -> (Vec<f64>, usize) {
    let n = a.n;
    let eig = DMatrix::from_row_slice(n, n, &a.a).symmetric_eigen();
    let sigma_max = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let cutoff = SVD_CUTOFF * sigma_max;
    let rhs = DVector::from_column_slice(b);
    let mut x = DVector::zeros(n);
    let mut rank = 0;
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda.abs() > cutoff && lambda != 0.0 {
            rank += 1;
            let v = eig.eigenvectors.column(k);
            x += v * (v.dot(&rhs) / lambda);
        }
    }
    (x.iter().copied().collect(), rank)
}

/// Minimal-norm least-squares solution of `A m = b`, singular values below
/// `1e-12 · σ_max` treated as zero.
pub fn moore_penrose_solve(a: &FrictionMatrix, b: &[f64]) -> Vec<f64> {
    pseudo_inverse_solve(a, b).0
}

/// `½ Σ_{i≠j} |√c_j m_i − √c_i m_j|² / D_ij`, the entropy dissipation density in
/// terms of the auxiliary fluxes. The differences are formed in double-double.
pub fn dissipation_density(c: &[f64], m: &[f64], d: &BinaryDiffusivities) -> f64 {
    let n = c.len();
    let roots: Vec<Dd> = c.iter().map(|&v| Dd::new(v.max(0.0)).sqrt()).collect();
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let w = roots[j].mul(Dd::new(m[i])).sub(roots[i].mul(Dd::new(m[j]))).hi;
            total += w * w / d.get(i, j);
        }
    }
    total
}

/// Per-face fluxes. Rows are indexed by face (`0..=num_cells`); boundary rows are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct FluxSolution {
    /// Auxiliary fluxes `m_i = √c_i u_i`.
    pub m: RowTable,
    /// Molar fluxes `J_i = √c_face,i m_i`.
    pub j: RowTable,
    /// Norm of the right-hand side component removed by the constraint projection.
    pub rhs_defect: Vec<f64>,
    /// Faces routed through the SVD path whose numerical rank fell below `n − 1`.
    pub degenerate: Vec<bool>,
}

impl FluxSolution {
    pub fn num_faces(&self) -> usize {
        self.m.rows()
    }

    /// Largest `|Σ_i J_i|` over faces.
    pub fn max_total_flux(&self) -> f64 {
        self.j
            .iter_rows()
            .map(|r| r.iter().sum::<f64>().abs())
            .fold(0.0, f64::max)
    }

    pub fn max_rhs_defect(&self) -> f64 {
        self.rhs_defect.iter().copied().fold(0.0, f64::max)
    }

    /// Every flux multiplied by `factor` (fault injection).
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.m.as_mut_slice().iter_mut().for_each(|v| *v *= factor);
        out.j.as_mut_slice().iter_mut().for_each(|v| *v *= factor);
        out
    }
}

/// Vanishing species: minimal-norm solution in the constraint space.
fn solve_face_degenerate(c_face: &[f64], b: &[f64], d: &BinaryDiffusivities) -> Result<(Vec<f64>, f64, bool)> {
    let a = assemble_friction_matrix(c_face, d)?;
    let p = constraint_projector(&a.s).ok_or_else(|| Error::DegenerateComposition {
        c: c_face.to_vec(),
        condition: f64::INFINITY,
    })?;
    let n = a.n;
    let pb = dense::mat_vec(n, &p, b);
    let defect = dense::norm2(&b.iter().zip(&pb).map(|(x, y)| x - y).collect::<Vec<_>>());
    let (m, rank) = pseudo_inverse_solve(&a, &pb);
    let m = dense::mat_vec(n, &p, &m);
    Ok((m, defect, rank + 1 < n))
}

/// Fluxes on every face of `grid` for the given state.
pub fn flux_from_state(
    state: &MixtureState,
    grid: &Grid1D,
    d: &BinaryDiffusivities,
) -> Result<FluxSolution> {
    let n = state.n_species;
    if d.n_species() != n {
        return Err(Error::Shape(format!(
            "state has {n} species, diffusivities have {}",
            d.n_species()
        )));
    }
    let faces = face_values(state, grid)?;
    let grads = face_grad_sqrt(state, grid)?;
    let num_faces = grid.num_faces();
    let mut m = RowTable::zeros(num_faces, n);
    let mut j = RowTable::zeros(num_faces, n);
    let mut rhs_defect = vec![0.0; num_faces];
    let mut degenerate = vec![false; num_faces];
    let mut workspace = BottDuffinWorkspace::new(n);
    let mut a = vec![0.0; n * n];
    let mut s = vec![0.0; n];
    let mut b = vec![0.0; n];
    for f in 1..grid.num_cells() {
        let c_face = faces.row(f);
        for (bi, g) in b.iter_mut().zip(grads.row(f)) {
            *bi = -2.0 * g;
        }
        let at_face = |e: Error| Error::AtFace {
            face: f,
            source: Box::new(e),
        };
        if c_face.iter().any(|&c| c <= 0.0) {
            let (mf, defect, flag) = solve_face_degenerate(c_face, &b, d).map_err(at_face)?;
            m.row_mut(f).copy_from_slice(&mf);
            rhs_defect[f] = defect;
            degenerate[f] = flag;
        } else {
            fill_friction(c_face, d, &mut a, &mut s);
            let (defect, _) = workspace.solve(&a, &s, &b, m.row_mut(f)).map_err(|condition| {
                at_face(Error::DegenerateComposition {
                    c: c_face.to_vec(),
                    condition,
                })
            })?;
            rhs_defect[f] = defect;
        }
        let mf = m.row(f);
        for (i, out) in j.row_mut(f).iter_mut().enumerate() {
            *out = c_face[i].max(0.0).sqrt() * mf[i];
        }
    }
    Ok(FluxSolution {
        m,
        j,
        rhs_defect,
        degenerate,
    })
}

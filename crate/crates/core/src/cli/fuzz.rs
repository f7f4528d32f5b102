//! Randomized property suite for the friction matrix and its constrained solve.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dense;
use crate::friction::{assemble_friction_matrix, bott_duffin_solve, dissipation_density, moore_penrose_solve};
use crate::mixture::BinaryDiffusivities;
use crate::Result;

pub const KERNEL_TOLERANCE: f64 = 1e-13;
pub const PSD_TOLERANCE: f64 = 1e-13;
pub const QUADRATIC_TOLERANCE: f64 = 1e-12;
pub const ORACLE_TOLERANCE: f64 = 1e-10;

pub const MIN_SPECIES: usize = 2;
pub const MAX_SPECIES: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct StructureStats {
    pub cases: usize,
    /// max ‖A s‖ / max(1, ‖A‖_F)
    pub max_kernel_ratio: f64,
    /// min mᵀ A m
    pub min_quadratic: f64,
    /// max |mᵀ A m − density| / |density|
    pub max_quadratic_rel_error: f64,
    pub failures: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleStats {
    pub cases: usize,
    pub max_rel_difference: f64,
    pub failures: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FuzzReport {
    pub seed: u64,
    pub structure: StructureStats,
    pub oracle: OracleStats,
}

impl FuzzReport {
    pub fn passed(&self) -> bool {
        self.structure.failures.is_empty() && self.oracle.failures.is_empty()
    }

    pub fn to_text(&self) -> String {
        format!(
            "seed {}\n\
             structure: {} cases, max kernel ratio {:.3e}, min mᵀAm {:.3e}, max quadratic-form rel. error {:.3e}, {} failures\n\
             oracle:    {} cases, max relative difference {:.3e}, {} failures\n",
            self.seed,
            self.structure.cases,
            self.structure.max_kernel_ratio,
            self.structure.min_quadratic,
            self.structure.max_quadratic_rel_error,
            self.structure.failures.len(),
            self.oracle.cases,
            self.oracle.max_rel_difference,
            self.oracle.failures.len(),
        )
    }
}

fn random_diffusivities(rng: &mut ChaCha8Rng, n: usize) -> Result<BinaryDiffusivities> {
    let (lo, hi) = (0.1_f64.ln(), 10.0_f64.ln());
    let mut matrix = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = rng.random_range(lo..hi).exp();
            matrix[i][j] = v;
            matrix[j][i] = v;
        }
    }
    BinaryDiffusivities::new(&matrix)
}

/// Random point of the simplex; with `allow_zeros`, about one draw in five
/// has some vanishing components.
fn random_composition(rng: &mut ChaCha8Rng, n: usize, min: f64, allow_zeros: bool) -> Vec<f64> {
    loop {
        let mut c: Vec<f64> = (0..n).map(|_| -rng.random_range(f64::EPSILON..1.0).ln()).collect();
        if allow_zeros && rng.random_bool(0.2) {
            let k = rng.random_range(0..n);
            c[k] = 0.0;
            if n > 2 && rng.random_bool(0.3) {
                c[(k + 1) % n] = 0.0;
            }
        }
        let total: f64 = c.iter().sum();
        if total <= 0.0 {
            continue;
        }
        c.iter_mut().for_each(|v| *v /= total);
        if c.iter().all(|&v| v == 0.0 || v >= min) && (allow_zeros || c.iter().all(|&v| v >= min)) {
            return c;
        }
    }
}

/// Kernel, positivity and quadratic-form checks on `cases` random `(c, D, m)`.
pub fn structure_suite(seed: u64, cases: usize) -> Result<StructureStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = StructureStats {
        cases,
        max_kernel_ratio: 0.0,
        min_quadratic: f64::INFINITY,
        max_quadratic_rel_error: 0.0,
        failures: Vec::new(),
    };
    for case in 0..cases {
        let n = rng.random_range(MIN_SPECIES..=MAX_SPECIES);
        let d = random_diffusivities(&mut rng, n)?;
        let c = random_composition(&mut rng, n, 0.0, true);
        let m: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let a = assemble_friction_matrix(&c, &d)?;

        let kernel = dense::norm2(&a.apply(a.kernel_vector())) / a.frobenius_norm().max(1.0);
        stats.max_kernel_ratio = stats.max_kernel_ratio.max(kernel);
        if !(kernel <= KERNEL_TOLERANCE) {
            stats.failures.push(format!("case {case}: ‖A s‖ ratio {kernel:e} at c = {c:?}"));
        }

        let q = a.quadratic_form(&m);
        stats.min_quadratic = stats.min_quadratic.min(q);
        if !(q >= -PSD_TOLERANCE) {
            stats.failures.push(format!("case {case}: mᵀAm = {q:e} at c = {c:?}"));
        }

        let density = dissipation_density(&c, &m, &d);
        let rel = if density == 0.0 {
            q.abs()
        } else {
            (q - density).abs() / density.abs()
        };
        stats.max_quadratic_rel_error = stats.max_quadratic_rel_error.max(rel);
        if !(rel <= QUADRATIC_TOLERANCE) {
            stats.failures.push(format!(
                "case {case}: quadratic form {q:e} vs density {density:e} at c = {c:?}, m = {m:?}, D = {:?}",
                d.to_matrix()
            ));
        }
    }
    Ok(stats)
}

/// Bott-Duffin against the pseudoinverse on strictly positive compositions
/// (`min c_i ≥ 1e-3`) and right-hand sides orthogonal to `s`.
pub fn oracle_suite(seed: u64, cases: usize) -> Result<OracleStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut stats = OracleStats {
        cases,
        max_rel_difference: 0.0,
        failures: Vec::new(),
    };
    for case in 0..cases {
        let n = rng.random_range(MIN_SPECIES..=MAX_SPECIES);
        let d = random_diffusivities(&mut rng, n)?;
        let c = random_composition(&mut rng, n, 1e-3, false);
        let a = assemble_friction_matrix(&c, &d)?;
        let s = a.kernel_vector().to_vec();
        let mut b: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let along = dense::dot(&b, &s) / dense::dot(&s, &s);
        b.iter_mut().zip(&s).for_each(|(bi, si)| *bi -= along * si);

        let oracle = moore_penrose_solve(&a, &b);
        let rel = match bott_duffin_solve(&a, &b) {
            Ok(sol) => {
                let diff: Vec<f64> = sol.m.iter().zip(&oracle).map(|(x, y)| x - y).collect();
                dense::norm2(&diff) / dense::norm2(&oracle).max(f64::MIN_POSITIVE)
            }
            Err(e) => {
                stats.failures.push(format!("case {case}: {e}"));
                continue;
            }
        };
        stats.max_rel_difference = stats.max_rel_difference.max(rel);
        if !(rel <= ORACLE_TOLERANCE) {
            stats.failures.push(format!("case {case}: relative difference {rel:e} at c = {c:?}"));
        }
    }
    Ok(stats)
}

pub fn run_fuzz(seed: u64, cases: usize) -> Result<FuzzReport> {
    Ok(FuzzReport {
        seed,
        structure: structure_suite(seed, cases)?,
        oracle: oracle_suite(seed, cases)?,
    })
}

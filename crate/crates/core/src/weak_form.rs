//! Discrete audits of the weak formulation: residuals of `∂t c + ∂x J = 0` and
//! of its renormalized form against a fixed test-function bank, the time
//! cut-off `η_σ`, time mollification, and the mollification commutation identity.

use std::fmt;
use std::sync::Arc;

use crate::dense;
use crate::entropy::entropy;
use crate::friction::FluxSolution;
use crate::mixture::{face_grad_sqrt, Grid1D, MixtureState};
use crate::solver::Trajectory;
use crate::{Error, Result};

/// Version tag of [`TestFunction::bank`] and [`Renormalization::bank`].
pub const TEST_BANK_VERSION: &str = "v1";

/// Default threshold on the L² jump between consecutive snapshots.
pub const DEFAULT_CONTINUITY_THRESHOLD: f64 = 0.05;

/// Piecewise-linear cut-off: 0 outside `[σ, T−σ]`, ramps on `[σ, 2σ]` and
/// `[T−2σ, T−σ]`, 1 on `[2σ, T−2σ]`.
pub fn eta_sigma(t: f64, sigma: f64, horizon: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma < horizon / 4.0) {
        return Err(Error::Parameter(format!(
            "eta_sigma needs 0 < sigma < T/4, got sigma = {sigma}, T = {horizon}"
        )));
    }
    Ok(eta_unchecked(t, sigma, horizon))
}

fn eta_unchecked(t: f64, sigma: f64, horizon: f64) -> f64 {
    if t <= sigma || t >= horizon - sigma {
        0.0
    } else if t < 2.0 * sigma {
        (t - sigma) / sigma
    } else if t <= horizon - 2.0 * sigma {
        1.0
    } else {
        (horizon - t - sigma) / sigma
    }
}

/// `exp(−1/(1−τ²))` on `|τ| < 1`, zero elsewhere.
fn bump(tau: f64) -> f64 {
    if tau.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - tau * tau)).exp()
    }
}

fn bump_derivative(tau: f64) -> f64 {
    if tau.abs() >= 1.0 {
        0.0
    } else {
        let q = 1.0 - tau * tau;
        bump(tau) * (-2.0 * tau / (q * q))
    }
}

fn bump_second_derivative(tau: f64) -> f64 {
    if tau.abs() >= 1.0 {
        0.0
    } else {
        let q = 1.0 - tau * tau;
        let g = -2.0 * tau / (q * q);
        let dg = (-2.0 * q * q - 8.0 * tau * tau * q) / (q * q * q * q);
        bump(tau) * (g * g + dg)
    }
}

fn kernel_half_width(spacing: f64, epsilon: f64) -> Result<usize> {
    if !(epsilon > 0.0 && spacing > 0.0) {
        return Err(Error::Parameter(format!(
            "mollification needs positive spacing and radius, got h = {spacing}, epsilon = {epsilon}"
        )));
    }
    if spacing > epsilon / 4.0 {
        return Err(Error::Resolution { spacing, epsilon });
    }
    Ok((epsilon / spacing).ceil() as usize)
}

/// Discrete mollifier of radius `epsilon` on a grid of spacing `spacing`:
/// weights `w_{−K..=K}` with `Σ w_k h = 1`, stored from `−K` to `K`.
pub fn mollifier_weights(spacing: f64, epsilon: f64) -> Result<Vec<f64>> {
    let half = kernel_half_width(spacing, epsilon)?;
    let positive: Vec<f64> = (0..=half).map(|k| bump(k as f64 * spacing / epsilon)).collect();
    let total = spacing * (positive[0] + 2.0 * positive[1..].iter().sum::<f64>());
    let mut weights: Vec<f64> = positive.iter().rev().map(|w| w / total).collect();
    weights.extend(positive[1..].iter().map(|w| w / total));
    Ok(weights)
}

/// Derivative weights matching [`mollifier_weights`] (same normalization).
fn mollifier_derivative_weights(spacing: f64, epsilon: f64) -> Result<Vec<f64>> {
    let half = kernel_half_width(spacing, epsilon)?;
    let positive: Vec<f64> = (0..=half).map(|k| bump(k as f64 * spacing / epsilon)).collect();
    let total = spacing * (positive[0] + 2.0 * positive[1..].iter().sum::<f64>());
    Ok((0..=2 * half)
        .map(|idx| {
            let k = idx as f64 - half as f64;
            bump_derivative(k * spacing / epsilon) / (epsilon * total)
        })
        .collect())
}

/// `out_n = Σ_k w_k h s_{n−k}` with the signal extended by zero outside the samples.
fn convolve(signal: &[f64], weights: &[f64], spacing: f64) -> Vec<f64> {
    let half = (weights.len() - 1) / 2;
    let len = signal.len() as isize;
    (0..len)
        .map(|n| {
            let mut acc = 0.0;
            for (idx, w) in weights.iter().enumerate() {
                let m = n - (idx as isize - half as isize);
                if (0..len).contains(&m) {
                    acc += w * signal[m as usize];
                }
            }
            acc * spacing
        })
        .collect()
}

/// Mollifies a uniformly sampled series (spacing `spacing`, zero outside).
pub fn mollify_time(signal: &[f64], spacing: f64, epsilon: f64) -> Result<Vec<f64>> {
    let weights = mollifier_weights(spacing, epsilon)?;
    Ok(convolve(signal, &weights, spacing))
}

fn trapezoid(values: &[f64], spacing: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        len => spacing * (values[1..len - 1].iter().sum::<f64>() + 0.5 * (values[0] + values[len - 1])),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MolCheck {
    /// `∫ v ∂t(φ^ε)`.
    pub lhs: f64,
    /// `∫ v^ε ∂tφ`.
    pub rhs: f64,
    pub gap: f64,
}

/// Both sides of `∫ v ∂t φ^ε = ∫ v^ε ∂t φ` on a uniform grid. The left side
/// differentiates the kernel analytically; the right side uses central
/// differences of `φ` (zero-extended).
pub fn mol_commutation_check(v: &[f64], phi: &[f64], spacing: f64, epsilon: f64) -> Result<MolCheck> {
    if v.len() != phi.len() || v.len() < 3 {
        return Err(Error::Shape(format!(
            "series lengths {} and {} must agree and be at least 3",
            v.len(),
            phi.len()
        )));
    }
    let scale = phi.iter().map(|p| p.abs()).fold(0.0, f64::max).max(1.0);
    let (first, last) = (phi[0], phi[phi.len() - 1]);
    if first.abs() > 1e-14 * scale || last.abs() > 1e-14 * scale {
        return Err(Error::Parameter(format!(
            "test series must vanish at both ends, got {first} and {last}"
        )));
    }
    let dphi_eps = convolve(phi, &mollifier_derivative_weights(spacing, epsilon)?, spacing);
    let v_eps = mollify_time(v, spacing, epsilon)?;
    let len = phi.len();
    let dphi: Vec<f64> = (0..len)
        .map(|n| {
            let ahead = if n + 1 < len { phi[n + 1] } else { 0.0 };
            let behind = if n > 0 { phi[n - 1] } else { 0.0 };
            (ahead - behind) / (2.0 * spacing)
        })
        .collect();
    let lhs_integrand: Vec<f64> = v.iter().zip(&dphi_eps).map(|(a, b)| a * b).collect();
    let rhs_integrand: Vec<f64> = v_eps.iter().zip(&dphi).map(|(a, b)| a * b).collect();
    let lhs = trapezoid(&lhs_integrand, spacing);
    let rhs = trapezoid(&rhs_integrand, spacing);
    Ok(MolCheck {
        lhs,
        rhs,
        gap: (lhs - rhs).abs(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TemporalPart {
    EtaSigma { sigma: f64, horizon: f64 },
    /// `exp(−1/(1−τ²))`, `τ = (t − center)/width`.
    Bump { center: f64, width: f64 },
}

impl TemporalPart {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            TemporalPart::EtaSigma { sigma, horizon } => eta_unchecked(t, sigma, horizon),
            TemporalPart::Bump { center, width } => bump((t - center) / width),
        }
    }

    /// Closed support `[a, b]`.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            TemporalPart::EtaSigma { sigma, horizon } => (sigma, horizon - sigma),
            TemporalPart::Bump { center, width } => (center - width, center + width),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            TemporalPart::EtaSigma { sigma, horizon } => eta_sigma(0.0, sigma, horizon).map(|_| ()),
            TemporalPart::Bump { width, center } if width > 0.0 && center.is_finite() => Ok(()),
            TemporalPart::Bump { width, .. } => Err(Error::Parameter(format!(
                "bump width must be positive, got {width}"
            ))),
        }
    }
}

/// `φ(x, t) = p(x) θ(t)` with `p` a polynomial of degree at most 4 in `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct TestFunction {
    /// Coefficients of `p` in ascending powers of `x`.
    pub spatial: Vec<f64>,
    pub temporal: TemporalPart,
}

impl TestFunction {
    pub fn new(spatial: Vec<f64>, temporal: TemporalPart) -> Result<Self> {
        if spatial.is_empty() || spatial.len() > 5 {
            return Err(Error::Parameter(format!(
                "spatial part needs 1 to 5 coefficients, got {}",
                spatial.len()
            )));
        }
        if spatial.iter().any(|c| !c.is_finite()) {
            return Err(Error::Parameter("spatial coefficients must be finite".into()));
        }
        temporal.validate()?;
        Ok(TestFunction { spatial, temporal })
    }

    pub fn spatial_value(&self, x: f64) -> f64 {
        self.spatial.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn spatial_derivative(&self, x: f64) -> f64 {
        self.spatial
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (p, c)| acc * x + p as f64 * c)
    }

    pub fn value(&self, x: f64, t: f64) -> f64 {
        self.spatial_value(x) * self.temporal.value(t)
    }

    /// `a·self + b·other`; both must share the temporal part.
    pub fn combine(&self, a: f64, other: &TestFunction, b: f64) -> Result<TestFunction> {
        if self.temporal != other.temporal {
            return Err(Error::Parameter("combined test functions must share their temporal part".into()));
        }
        let len = self.spatial.len().max(other.spatial.len());
        let coeff = |v: &[f64], k: usize| v.get(k).copied().unwrap_or(0.0);
        let spatial = (0..len)
            .map(|k| a * coeff(&self.spatial, k) + b * coeff(&other.spatial, k))
            .collect();
        TestFunction::new(spatial, self.temporal)
    }

    pub fn label(&self) -> String {
        let powers: Vec<String> = self
            .spatial
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(p, c)| format!("{c}*x^{p}"))
            .collect();
        let time = match self.temporal {
            TemporalPart::EtaSigma { sigma, .. } => format!("eta(sigma={sigma})"),
            TemporalPart::Bump { center, width } => format!("bump(center={center},width={width})"),
        };
        format!("({}) {}", if powers.is_empty() { "0".into() } else { powers.join(" + ") }, time)
    }

    /// The fixed bank: `(x/L)^p` for `p = 0..=4`, each times `η_σ` with
    /// `σ = T/8` and times a bump centred at `T/2` of half-width `3T/8`.
    pub fn bank(domain_length: f64, horizon: f64) -> Vec<TestFunction> {
        if !(horizon > 0.0) {
            return Vec::new();
        }
        let temporals = [
            TemporalPart::EtaSigma {
                sigma: horizon / 8.0,
                horizon,
            },
            TemporalPart::Bump {
                center: 0.5 * horizon,
                width: 0.375 * horizon,
            },
        ];
        let mut bank = Vec::with_capacity(10);
        for temporal in temporals {
            for p in 0..=4 {
                let mut spatial = vec![0.0; p + 1];
                spatial[p] = domain_length.powi(-(p as i32));
                bank.push(TestFunction { spatial, temporal });
            }
        }
        bank
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A renormalization `β` with its first two derivatives.
#[derive(Clone)]
pub struct Renormalization {
    name: String,
    value: ScalarFn,
    first: ScalarFn,
    second: ScalarFn,
}

impl fmt::Debug for Renormalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Renormalization").field("name", &self.name).finish()
    }
}

impl Renormalization {
    /// Wraps `β, β′, β″` after checking they are finite on `[0, 1]`.
    pub fn new<B, B1, B2>(name: &str, value: B, first: B1, second: B2) -> Result<Self>
    where
        B: Fn(f64) -> f64 + Send + Sync + 'static,
        B1: Fn(f64) -> f64 + Send + Sync + 'static,
        B2: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let beta = Renormalization {
            name: name.to_string(),
            value: Arc::new(value),
            first: Arc::new(first),
            second: Arc::new(second),
        };
        beta.check_admissible()?;
        Ok(beta)
    }

    fn check_admissible(&self) -> Result<()> {
        const SAMPLES: usize = 1000;
        for k in 0..=SAMPLES {
            let s = k as f64 / SAMPLES as f64;
            for (label, f) in [("beta", &self.value), ("beta'", &self.first), ("beta''", &self.second)] {
                let v = f(s);
                if !v.is_finite() {
                    return Err(Error::Inadmissible {
                        name: self.name.clone(),
                        reason: format!("{label}({s}) = {v} is not finite; beta must be C² on [0, 1]"),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self, s: f64) -> f64 {
        (self.value)(s)
    }

    pub fn derivative(&self, s: f64) -> f64 {
        (self.first)(s)
    }

    pub fn second_derivative(&self, s: f64) -> f64 {
        (self.second)(s)
    }

    pub fn identity() -> Self {
        Self::new("s", |s| s, |_| 1.0, |_| 0.0).expect("admissible")
    }

    pub fn square() -> Self {
        Self::new("s^2", |s| s * s, |s| 2.0 * s, |_| 2.0).expect("admissible")
    }

    pub fn cube() -> Self {
        Self::new("s^3", |s| s * s * s, |s| 3.0 * s * s, |s| 6.0 * s).expect("admissible")
    }

    pub fn shifted_entropy() -> Self {
        Self::new(
            "(s+1)ln(s+1)",
            |s| (s + 1.0) * (s + 1.0).ln(),
            |s| (s + 1.0).ln() + 1.0,
            |s| 1.0 / (s + 1.0),
        )
        .expect("admissible")
    }

    /// Smooth bump of half-width `width` centred at `center`.
    pub fn bump(center: f64, width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::Parameter(format!("bump width must be positive, got {width}")));
        }
        Self::new(
            &format!("bump(center={center},width={width})"),
            move |s| bump((s - center) / width),
            move |s| bump_derivative((s - center) / width) / width,
            move |s| bump_second_derivative((s - center) / width) / (width * width),
        )
    }

    /// `s ln s − s`; always rejected because `β′ = ln s` blows up at 0.
    pub fn entropy_density() -> Result<Self> {
        Self::new("s ln s - s", |s| s * s.ln() - s, |s| s.ln(), |s| 1.0 / s)
    }

    pub fn bank() -> Vec<Renormalization> {
        vec![
            Self::square(),
            Self::cube(),
            Self::shifted_entropy(),
            Self::bump(0.5, 0.25).expect("admissible"),
        ]
    }
}

/// Streaming accumulator of weak and renormalized residuals. Feed it the state
/// and fluxes at successive times with [`ResidualAccumulator::observe`].
///
/// With frames at `t_0 < t_1 < …` the residual of `β` against `φ = p(x)θ(t)` is
///
/// ```text
/// −Σ_n Σ_k dx (β(c_k^{n+1}) − β(c_k^n)) p(x_k) ½(θ^{n+1} + θ^n)
///   + Σ_n ½(t_{n+1} − t_n)(G^n + G^{n+1}),
/// G = θ(t) Σ_f dx J_f [β′(c̄_f) p′(x_f) + (β′(c_R) − β′(c_L))/dx · p(x_f)]
/// ```
///
/// The time derivative is moved onto `c` by summation by parts, which is
/// exact because `θ` vanishes at both ends.
pub struct ResidualAccumulator {
    grid: Grid1D,
    n_species: usize,
    tests: Vec<TestFunction>,
    betas: Vec<Renormalization>,
    /// Distinct spatial parts; tests sharing one are evaluated once.
    test_profile: Vec<usize>,
    cell_p: Vec<Vec<f64>>,
    face_p: Vec<Vec<f64>>,
    face_dp: Vec<Vec<f64>>,
    prev: Option<Frame>,
    /// `[beta][test][species]`.
    totals: Vec<f64>,
    dbeta: Vec<f64>,
    weights: Vec<f64>,
    column: Vec<f64>,
}

struct Frame {
    time: f64,
    /// `Σ_k β(c_k) p(x_k)` per `[beta][profile][species]`.
    cell_proj: Vec<f64>,
    /// `Σ_f` spatial flux sums per `[beta][profile][species]`, before the `θ(t)` factor.
    spatial_flux: Vec<f64>,
}

impl ResidualAccumulator {
    pub fn new(
        grid: Grid1D,
        n_species: usize,
        horizon: f64,
        tests: Vec<TestFunction>,
        betas: Vec<Renormalization>,
    ) -> Result<Self> {
        for phi in &tests {
            phi.temporal.validate()?;
            let (a, b) = phi.temporal.support();
            let slack = 1e-12 * horizon.abs().max(1.0);
            if a < -slack || b > horizon + slack {
                return Err(Error::Parameter(format!(
                    "test function support [{a}, {b}] exceeds [0, {horizon}]"
                )));
            }
        }
        let mut profiles: Vec<&TestFunction> = Vec::new();
        let mut test_profile = Vec::with_capacity(tests.len());
        for phi in &tests {
            match profiles.iter().position(|q| q.spatial == phi.spatial) {
                Some(k) => test_profile.push(k),
                None => {
                    test_profile.push(profiles.len());
                    profiles.push(phi);
                }
            }
        }
        let cell_p = profiles
            .iter()
            .map(|phi| (0..grid.num_cells()).map(|k| phi.spatial_value(grid.cell_center(k))).collect())
            .collect();
        let face_p = profiles
            .iter()
            .map(|phi| (0..grid.num_faces()).map(|f| phi.spatial_value(grid.face_position(f))).collect())
            .collect();
        let face_dp = profiles
            .iter()
            .map(|phi| {
                (0..grid.num_faces())
                    .map(|f| phi.spatial_derivative(grid.face_position(f)))
                    .collect()
            })
            .collect();
        let totals = vec![0.0; betas.len() * tests.len() * n_species];
        let cells = grid.num_cells();
        Ok(ResidualAccumulator {
            grid,
            n_species,
            tests,
            betas,
            test_profile,
            cell_p,
            face_p,
            face_dp,
            prev: None,
            totals,
            dbeta: vec![0.0; cells * n_species],
            weights: vec![0.0; 2 * (cells + 1)],
            column: vec![0.0; cells],
        })
    }

    fn index(&self, b: usize, t: usize, i: usize) -> usize {
        (b * self.tests.len() + t) * self.n_species + i
    }

    pub fn observe(&mut self, time: f64, state: &MixtureState, flux: &FluxSolution) -> Result<()> {
        if state.n_species != self.n_species || state.num_cells() != self.grid.num_cells() {
            return Err(Error::Shape("state does not match the accumulator grid".into()));
        }
        if let Some(prev) = &self.prev {
            if !(time > prev.time) {
                return Err(Error::Parameter(format!(
                    "frames must advance in time ({} then {time})",
                    prev.time
                )));
            }
        }
        let grid = self.grid;
        let n = self.n_species;
        let cells = grid.num_cells();
        let faces = cells + 1;
        let dx = grid.dx();
        let (nb, np) = (self.betas.len(), self.cell_p.len());
        let c = state.concentrations.as_slice();

        let mut cell_proj = vec![0.0; nb * np * n];
        let mut spatial_flux = vec![0.0; nb * np * n];
        for (b, beta) in self.betas.iter().enumerate() {
            for (slot, &v) in self.dbeta.iter_mut().zip(c) {
                *slot = beta.derivative(v);
            }
            for i in 0..n {
                for k in 0..cells {
                    self.column[k] = beta.value(c[k * n + i]);
                }
                let (w_mean, w_jump) = self.weights.split_at_mut(faces);
                w_mean[0] = 0.0;
                w_jump[0] = 0.0;
                w_mean[cells] = 0.0;
                w_jump[cells] = 0.0;
                for f in 1..cells {
                    let (l, r) = (c[(f - 1) * n + i], c[f * n + i]);
                    let j = flux.j.row(f)[i] * dx;
                    w_mean[f] = j * beta.derivative(0.5 * (l + r));
                    w_jump[f] = j * (self.dbeta[f * n + i] - self.dbeta[(f - 1) * n + i]) / dx;
                }
                for p in 0..np {
                    let s = (b * np + p) * n + i;
                    cell_proj[s] = dense::dot(&self.column, &self.cell_p[p]);
                    spatial_flux[s] = dense::dot(w_mean, &self.face_dp[p]) + dense::dot(w_jump, &self.face_p[p]);
                }
            }
        }

        if let Some(prev) = self.prev.take() {
            let dt = time - prev.time;
            for t in 0..self.tests.len() {
                let p = self.test_profile[t];
                let (theta_prev, theta_now) = (
                    self.tests[t].temporal.value(prev.time),
                    self.tests[t].temporal.value(time),
                );
                let theta_mean = 0.5 * (theta_prev + theta_now);
                for b in 0..nb {
                    for i in 0..n {
                        let s = (b * np + p) * n + i;
                        let change = cell_proj[s] - prev.cell_proj[s];
                        let flux_term = 0.5 * dt * (theta_prev * prev.spatial_flux[s] + theta_now * spatial_flux[s]);
                        let idx = self.index(b, t, i);
                        self.totals[idx] += -change * dx * theta_mean + flux_term;
                    }
                }
            }
        }
        self.prev = Some(Frame {
            time,
            cell_proj,
            spatial_flux,
        });
        Ok(())
    }

    /// Residual of renormalization `b` against test `t` for species `i`.
    pub fn residual(&self, b: usize, t: usize, i: usize) -> f64 {
        self.totals[self.index(b, t, i)]
    }

    /// Root-sum-square over the test bank for `(b, i)`.
    pub fn bank_norm(&self, b: usize, i: usize) -> f64 {
        (0..self.tests.len())
            .map(|t| self.residual(b, t, i).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn tests(&self) -> &[TestFunction] {
        &self.tests
    }

    pub fn betas(&self) -> &[Renormalization] {
        &self.betas
    }
}

fn accumulate(trajectory: &Trajectory, tests: Vec<TestFunction>, betas: Vec<Renormalization>) -> Result<ResidualAccumulator> {
    let mut acc = ResidualAccumulator::new(trajectory.grid, trajectory.n_species, trajectory.t_end, tests, betas)?;
    for snap in &trajectory.snapshots {
        acc.observe(snap.time, &snap.state, &snap.flux)?;
    }
    Ok(acc)
}

fn check_species(trajectory: &Trajectory, species: usize) -> Result<()> {
    if species >= trajectory.n_species {
        return Err(Error::Parameter(format!(
            "species index {species} out of range for {} species",
            trajectory.n_species
        )));
    }
    Ok(())
}

/// `∫∫ c_i ∂tφ + ∫∫ J_i ∂xφ` over the snapshots of `trajectory`.
pub fn weak_residual(trajectory: &Trajectory, phi: &TestFunction, species: usize) -> Result<f64> {
    check_species(trajectory, species)?;
    let acc = accumulate(trajectory, vec![phi.clone()], vec![Renormalization::identity()])?;
    Ok(acc.residual(0, 0, species))
}

/// Residual of the renormalized equation for `beta` against one test function.
pub fn renormalized_residual_against(
    trajectory: &Trajectory,
    beta: &Renormalization,
    phi: &TestFunction,
    species: usize,
) -> Result<f64> {
    check_species(trajectory, species)?;
    let acc = accumulate(trajectory, vec![phi.clone()], vec![beta.clone()])?;
    Ok(acc.residual(0, 0, species))
}

/// Root-sum-square of the renormalized residual over [`TestFunction::bank`].
pub fn renormalized_residual(trajectory: &Trajectory, beta: &Renormalization, species: usize) -> Result<f64> {
    check_species(trajectory, species)?;
    let bank = TestFunction::bank(trajectory.grid.domain_length(), trajectory.t_end);
    let acc = accumulate(trajectory, bank, vec![beta.clone()])?;
    Ok(acc.bank_norm(0, species))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResidualEntry {
    pub species: usize,
    pub label: String,
    pub value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DefinitionChecks {
    /// Every concentration lies in `[0, 1]`.
    pub sup_bound: bool,
    /// Every cell sums to 1 within `1e-12`.
    pub simplex: bool,
    /// The discrete `L²(0,T; H¹)` norm of `√c` is finite.
    pub sqrt_h1_finite: bool,
    /// The snapshot-to-snapshot L² jump stays below the continuity threshold.
    pub continuity: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditReport {
    pub test_bank_version: String,
    pub weak_residuals: Vec<ResidualEntry>,
    pub renorm_residuals: Vec<ResidualEntry>,
    pub mol_commutation: MolCheck,
    pub definition_checks: DefinitionChecks,
    pub sqrt_l2_h1_norm: f64,
    pub continuity_modulus: f64,
    pub continuity_threshold: f64,
    pub max_sum_deviation: f64,
    pub min_concentration: f64,
    pub max_concentration: f64,
}

impl AuditReport {
    pub fn all_checks_pass(&self) -> bool {
        let c = self.definition_checks;
        c.sup_bound && c.simplex && c.sqrt_h1_finite && c.continuity
    }

    /// Root-sum-square of all weak residuals.
    pub fn weak_residual_norm(&self) -> f64 {
        self.weak_residuals.iter().map(|e| e.value * e.value).sum::<f64>().sqrt()
    }
}

fn l2_norm_diff(a: &MixtureState, b: &MixtureState, grid: &Grid1D) -> f64 {
    a.concentrations
        .as_slice()
        .iter()
        .zip(b.concentrations.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
        * grid.dx().sqrt()
}

/// Snapshot entropy history resampled to 257 uniform points, paired with the
/// `η_{T/8}` cut-off, mollified at radius `T/16`.
fn entropy_mol_check(trajectory: &Trajectory) -> Result<MolCheck> {
    const SAMPLES: usize = 256;
    let horizon = trajectory.t_end;
    if !(horizon > 0.0) || trajectory.snapshots.len() < 2 {
        return Ok(MolCheck {
            lhs: 0.0,
            rhs: 0.0,
            gap: 0.0,
        });
    }
    let times: Vec<f64> = trajectory.snapshots.iter().map(|s| s.time).collect();
    let values: Vec<f64> = trajectory
        .snapshots
        .iter()
        .map(|s| entropy(&s.state, &trajectory.grid))
        .collect();
    let spacing = horizon / SAMPLES as f64;
    let mut cursor = 0;
    let v: Vec<f64> = (0..=SAMPLES)
        .map(|k| {
            let t = k as f64 * spacing;
            while cursor + 2 < times.len() && times[cursor + 1] < t {
                cursor += 1;
            }
            let (t0, t1) = (times[cursor], times[cursor + 1]);
            let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
            (1.0 - w) * values[cursor] + w * values[cursor + 1]
        })
        .collect();
    let sigma = horizon / 8.0;
    let phi: Vec<f64> = (0..=SAMPLES)
        .map(|k| eta_unchecked(k as f64 * spacing, sigma, horizon))
        .collect();
    mol_commutation_check(&v, &phi, spacing, horizon / 16.0)
}

/// Discrete checks of the weak-solution definition, with the default
/// continuity threshold.
pub fn audit_definition(trajectory: &Trajectory) -> Result<AuditReport> {
    audit_definition_with(trajectory, DEFAULT_CONTINUITY_THRESHOLD)
}

pub fn audit_definition_with(trajectory: &Trajectory, continuity_threshold: f64) -> Result<AuditReport> {
    let grid = trajectory.grid;
    let n = trajectory.n_species;

    let mut min_c = f64::INFINITY;
    let mut max_c = f64::NEG_INFINITY;
    let mut max_dev = 0.0_f64;
    for snap in &trajectory.snapshots {
        for row in snap.state.concentrations.iter_rows() {
            for &c in row {
                min_c = min_c.min(c);
                max_c = max_c.max(c);
            }
            max_dev = max_dev.max((row.iter().sum::<f64>() - 1.0).abs());
        }
    }
    let sup_bound = min_c >= 0.0 && max_c <= 1.0;
    let simplex = min_c >= 0.0 && max_dev <= 1e-12;

    // ‖√c‖²_{H¹} per snapshot, integrated by the trapezoid rule.
    let mut h1 = Vec::with_capacity(trajectory.snapshots.len());
    for snap in &trajectory.snapshots {
        let grads = face_grad_sqrt(&snap.state, &grid)?;
        let l2: f64 = snap.state.concentrations.as_slice().iter().map(|c| c.max(0.0)).sum();
        let grad2: f64 = grads.as_slice().iter().map(|g| g * g).sum();
        h1.push((l2 + grad2) * grid.dx());
    }
    let norm_sq = if h1.len() < 2 {
        h1.first().copied().unwrap_or(0.0)
    } else {
        trajectory
            .snapshots
            .windows(2)
            .zip(h1.windows(2))
            .map(|(s, h)| 0.5 * (s[1].time - s[0].time) * (h[0] + h[1]))
            .sum()
    };
    let sqrt_l2_h1_norm = norm_sq.sqrt();

    let continuity_modulus = trajectory
        .snapshots
        .windows(2)
        .map(|w| l2_norm_diff(&w[0].state, &w[1].state, &grid))
        .fold(0.0, f64::max);

    let bank = TestFunction::bank(grid.domain_length(), trajectory.t_end);
    let mut betas = vec![Renormalization::identity()];
    betas.extend(Renormalization::bank());
    let acc = accumulate(trajectory, bank, betas)?;
    let mut weak_residuals = Vec::new();
    for (t, phi) in acc.tests().iter().enumerate() {
        for i in 0..n {
            weak_residuals.push(ResidualEntry {
                species: i,
                label: phi.label(),
                value: acc.residual(0, t, i),
            });
        }
    }
    let mut renorm_residuals = Vec::new();
    for (b, beta) in acc.betas().iter().enumerate().skip(1) {
        for i in 0..n {
            renorm_residuals.push(ResidualEntry {
                species: i,
                label: beta.name().to_string(),
                value: acc.bank_norm(b, i),
            });
        }
    }

    Ok(AuditReport {
        test_bank_version: TEST_BANK_VERSION.to_string(),
        weak_residuals,
        renorm_residuals,
        mol_commutation: entropy_mol_check(trajectory)?,
        definition_checks: DefinitionChecks {
            sup_bound,
            simplex,
            sqrt_h1_finite: sqrt_l2_h1_norm.is_finite(),
            continuity: continuity_modulus <= continuity_threshold,
        },
        sqrt_l2_h1_norm,
        continuity_modulus,
        continuity_threshold,
        max_sum_deviation: max_dev,
        min_concentration: min_c,
        max_concentration: max_c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::friction::flux_from_state;
    use crate::mixture::{BinaryDiffusivities, RowTable};
    use crate::solver::{simulate, InitialPreset, Scenario, Snapshot};
    use proptest::prelude::*;

    #[test]
    fn eta_sigma_examples() {
        let (s, t) = (0.125, 1.0);
        assert_eq!(eta_sigma(1.5 * s, s, t).unwrap(), 0.5);
        assert_eq!(eta_sigma(0.5, s, t).unwrap(), 1.0);
        assert_eq!(eta_sigma(0.0, s, t).unwrap(), 0.0);
        assert_eq!(eta_sigma(t, s, t).unwrap(), 0.0);
        assert!((eta_sigma(t - 1.5 * s, s, t).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(eta_sigma(0.5, 0.25, 1.0), Err(Error::Parameter(_))));
        assert!(matches!(eta_sigma(0.5, 0.0, 1.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn mollifier_mass_and_symmetry() {
        for (h, eps) in [(0.01, 0.1), (0.001, 0.05), (0.025, 0.1)] {
            let w = mollifier_weights(h, eps).unwrap();
            let mass: f64 = w.iter().sum::<f64>() * h;
            assert!((mass - 1.0).abs() < 1e-14, "{mass}");
            let len = w.len();
            for k in 0..len {
                assert_eq!(w[k], w[len - 1 - k]);
                assert!(w[k] >= 0.0);
            }
        }
        assert!(matches!(
            mollifier_weights(0.03, 0.1),
            Err(Error::Resolution { .. })
        ));
    }

    #[test]
    fn mollify_preserves_constants_and_lines() {
        let (h, eps) = (1.0 / 400.0, 0.05);
        let t: Vec<f64> = (0..=400).map(|k| k as f64 * h).collect();
        let ones = vec![1.0; t.len()];
        let smooth_ones = mollify_time(&ones, h, eps).unwrap();
        let smooth_t = mollify_time(&t, h, eps).unwrap();
        for (k, &tk) in t.iter().enumerate() {
            if tk >= 2.0 * eps && tk <= 1.0 - 2.0 * eps {
                assert!((smooth_ones[k] - 1.0).abs() < 1e-14);
                assert!((smooth_t[k] - tk).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn mollified_step_is_monotone_and_localized() {
        let (h, eps) = (1.0 / 400.0, 0.05);
        let step: Vec<f64> = (0..=400).map(|k| if k as f64 * h < 0.5 { 0.0 } else { 1.0 }).collect();
        let s = mollify_time(&step, h, eps).unwrap();
        for k in 1..=400 {
            let tk = k as f64 * h;
            if tk > 2.0 * eps && tk < 1.0 - 2.0 * eps {
                assert!(s[k] >= s[k - 1] - 1e-15);
            }
            if (tk - 0.5).abs() > eps + 1e-12 && tk > 2.0 * eps && tk < 1.0 - 2.0 * eps {
                assert!((s[k] - step[k]).abs() < 1e-14, "{tk}");
            }
        }
    }

    fn bump_series(n: usize) -> (Vec<f64>, f64) {
        let h = 1.0 / n as f64;
        ((0..=n).map(|k| bump((k as f64 * h - 0.5) / 0.3)).collect(), h)
    }

    #[test]
    fn commutation_constant_signal() {
        let (phi, h) = bump_series(200);
        let ones = vec![1.0; phi.len()];
        let check = mol_commutation_check(&ones, &phi, h, 0.05).unwrap();
        assert!(check.lhs.abs() < 1e-12 && check.rhs.abs() < 1e-12);
    }

    #[test]
    fn commutation_self_pairing_vanishes() {
        let (phi, h) = bump_series(200);
        let check = mol_commutation_check(&phi, &phi, h, 0.05).unwrap();
        assert!(check.gap <= 1e-12, "{check:?}");
    }

    #[test]
    fn commutation_gap_second_order() {
        let gaps: Vec<f64> = [64, 128, 256]
            .iter()
            .map(|&n| {
                let (phi, h) = bump_series(n);
                let v: Vec<f64> = (0..=n).map(|k| (3.0 * k as f64 * h).sin() + k as f64 * h).collect();
                mol_commutation_check(&v, &phi, h, 0.1).unwrap().gap
            })
            .collect();
        for w in gaps.windows(2) {
            assert!((w[0] / w[1]).log2() >= 1.8, "{gaps:?}");
        }
    }

    #[test]
    fn commutation_rejects_nonzero_endpoints() {
        let v = vec![1.0; 101];
        assert!(matches!(
            mol_commutation_check(&v, &v, 0.01, 0.1),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn entropy_density_is_inadmissible() {
        match Renormalization::entropy_density() {
            Err(Error::Inadmissible { name, .. }) => assert_eq!(name, "s ln s - s"),
            other => panic!("{other:?}"),
        }
        for beta in Renormalization::bank() {
            assert!(beta.value(0.0).is_finite());
        }
    }

    #[test]
    fn bump_renormalization_derivatives() {
        let beta = Renormalization::bump(0.5, 0.25).unwrap();
        let h = 1e-5;
        for s in [0.3, 0.45, 0.5, 0.6, 0.7] {
            let fd1 = (beta.value(s + h) - beta.value(s - h)) / (2.0 * h);
            let fd2 = (beta.derivative(s + h) - beta.derivative(s - h)) / (2.0 * h);
            assert!((fd1 - beta.derivative(s)).abs() < 1e-6);
            assert!((fd2 - beta.second_derivative(s)).abs() < 1e-5);
        }
    }

    fn uniform_trajectory() -> Trajectory {
        let scenario = Scenario::new(
            Grid1D::new(8, 1.0).unwrap(),
            BinaryDiffusivities::uniform(3, 1.0).unwrap(),
            InitialPreset::Custom {
                table: RowTable::from_rows(&vec![vec![0.2, 0.3, 0.5]; 8]).unwrap(),
            },
            0.05,
        )
        .unwrap();
        simulate(&scenario).unwrap()
    }

    fn cosine_trajectory(cells: usize) -> Trajectory {
        let scenario = Scenario::new(
            Grid1D::new(cells, 1.0).unwrap(),
            BinaryDiffusivities::uniform(2, 1.0).unwrap(),
            InitialPreset::CosinePerturbation { amplitudes: vec![0.3] },
            0.05,
        )
        .unwrap();
        simulate(&scenario).unwrap()
    }

    #[test]
    fn uniform_trajectory_has_zero_residuals() {
        let traj = uniform_trajectory();
        for phi in TestFunction::bank(1.0, traj.t_end) {
            for i in 0..3 {
                assert!(weak_residual(&traj, &phi, i).unwrap().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_test_function_gives_mass_balance() {
        let traj = cosine_trajectory(16);
        let phi = TestFunction::new(
            vec![1.0],
            TemporalPart::EtaSigma {
                sigma: traj.t_end / 8.0,
                horizon: traj.t_end,
            },
        )
        .unwrap();
        assert!(weak_residual(&traj, &phi, 0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn identity_renormalization_is_weak_residual() {
        let traj = cosine_trajectory(16);
        let phi = &TestFunction::bank(1.0, traj.t_end)[2];
        let weak = weak_residual(&traj, phi, 0).unwrap();
        let renorm = renormalized_residual_against(&traj, &Renormalization::identity(), phi, 0).unwrap();
        assert_eq!(weak, renorm);
    }

    #[test]
    fn residual_is_linear_in_test_function() {
        let traj = cosine_trajectory(16);
        let bank = TestFunction::bank(1.0, traj.t_end);
        let (a, b) = (0.7, -1.3);
        let combo = bank[1].combine(a, &bank[3], b).unwrap();
        let lhs = weak_residual(&traj, &combo, 0).unwrap();
        let rhs = a * weak_residual(&traj, &bank[1], 0).unwrap() + b * weak_residual(&traj, &bank[3], 0).unwrap();
        assert!((lhs - rhs).abs() < 1e-12, "{lhs} {rhs}");
    }

    #[test]
    fn residuals_shrink_under_refinement() {
        let levels: Vec<Trajectory> = [16, 32, 64].iter().map(|&c| cosine_trajectory(c)).collect();
        let phi = TestFunction::new(
            vec![0.0, 0.0, 1.0],
            TemporalPart::EtaSigma {
                sigma: 0.05 / 8.0,
                horizon: 0.05,
            },
        )
        .unwrap();
        let weak: Vec<f64> = levels.iter().map(|t| weak_residual(t, &phi, 0).unwrap().abs()).collect();
        let renorm: Vec<f64> = levels
            .iter()
            .map(|t| renormalized_residual(t, &Renormalization::square(), 0).unwrap())
            .collect();
        for series in [&weak, &renorm] {
            for w in series.windows(2) {
                assert!((w[0] / w[1]).log2() >= 1.0, "{series:?}");
            }
        }
    }

    #[test]
    fn support_outside_horizon_is_rejected() {
        let traj = cosine_trajectory(8);
        let phi = TestFunction::new(vec![1.0], TemporalPart::Bump { center: 0.05, width: 0.02 }).unwrap();
        assert!(matches!(weak_residual(&traj, &phi, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn audit_of_solver_run_passes() {
        let report = audit_definition(&cosine_trajectory(16)).unwrap();
        assert!(report.all_checks_pass(), "{report:?}");
        assert_eq!(report.weak_residuals.len(), 20);
        assert_eq!(report.renorm_residuals.len(), 8);
        assert!(report.sqrt_l2_h1_norm.is_finite() && report.sqrt_l2_h1_norm > 0.0);
        assert!(report.mol_commutation.gap.is_finite());
    }

    fn planted(mut edit: impl FnMut(&mut Trajectory)) -> AuditReport {
        let mut traj = cosine_trajectory(8);
        edit(&mut traj);
        audit_definition(&traj).unwrap()
    }

    #[test]
    fn audit_flags_planted_simplex_violation() {
        let report = planted(|t| {
            let row = t.snapshots[3].state.concentrations.row_mut(2);
            row[0] += 0.1;
        });
        assert!(!report.definition_checks.simplex);
        assert!(!report.all_checks_pass());
    }

    #[test]
    fn audit_flags_planted_time_jump() {
        let report = planted(|t| {
            let grid = t.grid;
            let d = t.d.clone();
            let mid = t.snapshots.len() / 2;
            for snap in &mut t.snapshots[mid..] {
                let rows = vec![vec![0.9, 0.1]; grid.num_cells()];
                let state = MixtureState::new(2, RowTable::from_rows(&rows).unwrap(), snap.time).unwrap();
                let flux = flux_from_state(&state, &grid, &d).unwrap();
                *snap = Snapshot { step: snap.step, time: snap.time, state, flux };
            }
        });
        assert!(report.continuity_modulus > DEFAULT_CONTINUITY_THRESHOLD);
        assert!(!report.definition_checks.continuity);
        assert!(report.definition_checks.simplex);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]
        #[test]
        fn eta_sigma_matches_piecewise_definition(t in 0.0f64..1.0, sigma in 1e-3f64..0.2499) {
            let v = eta_sigma(t, sigma, 1.0).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
            if t >= 2.0 * sigma && t <= 1.0 - 2.0 * sigma {
                prop_assert_eq!(v, 1.0);
            }
            if t <= sigma || t >= 1.0 - sigma {
                prop_assert_eq!(v, 0.0);
            }
        }
    }
}

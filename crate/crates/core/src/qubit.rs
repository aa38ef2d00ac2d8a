//! Qubit value types: density matrices, Bloch vectors, effects, measurement
//! operators and their classical counterparts.
//!
//! Matrices are written in the `(|e⟩, |g⟩)` basis, so `σ_z = diag(1, -1)` and
//! `σ₋ = |g⟩⟨e|` has its single nonzero entry at row 1, column 0.

use std::f64::consts::TAU;

use nalgebra::Matrix2;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Mat2 = Matrix2<C64>;

/// Entrywise tolerance on `A - A†`.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Tolerance on `Tr ρ = 1`.
pub const TRACE_TOL: f64 = 1e-10;
/// Eigenvalues in `[-PSD_FLOOR, 0)` are clipped; anything lower is an error.
pub const PSD_FLOOR: f64 = 1e-10;

pub mod ops {
    //! Fixed single-qubit operators.
    use super::{Mat2, C64};

    pub fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    pub fn identity() -> Mat2 {
        Mat2::identity()
    }

    pub fn sigma_x() -> Mat2 {
        Mat2::new(c(0.0), c(1.0), c(1.0), c(0.0))
    }

    pub fn sigma_y() -> Mat2 {
        Mat2::new(c(0.0), C64::new(0.0, -1.0), C64::new(0.0, 1.0), c(0.0))
    }

    pub fn sigma_z() -> Mat2 {
        Mat2::new(c(1.0), c(0.0), c(0.0), c(-1.0))
    }

    /// Lowering operator `|g⟩⟨e|`.
    pub fn sigma_minus() -> Mat2 {
        Mat2::new(c(0.0), c(0.0), c(1.0), c(0.0))
    }

    /// Raising operator `|e⟩⟨g|`.
    pub fn sigma_plus() -> Mat2 {
        Mat2::new(c(0.0), c(1.0), c(0.0), c(0.0))
    }

    pub fn proj_e() -> Mat2 {
        Mat2::new(c(1.0), c(0.0), c(0.0), c(0.0))
    }

    pub fn proj_g() -> Mat2 {
        Mat2::new(c(0.0), c(0.0), c(0.0), c(1.0))
    }
}

pub fn trace(m: &Mat2) -> C64 {
    m[(0, 0)] + m[(1, 1)]
}

/// Real part of `Tr[a b]`.
pub fn trace_product(a: &Mat2, b: &Mat2) -> f64 {
    trace(&(a * b)).re
}

pub fn anticommutator(a: &Mat2, b: &Mat2) -> Mat2 {
    a * b + b * a
}

pub fn commutator(a: &Mat2, b: &Mat2) -> Mat2 {
    a * b - b * a
}

/// Max absolute entry.
pub fn max_abs(m: &Mat2) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn hermitian_defect(m: &Mat2) -> f64 {
    max_abs(&(m - m.adjoint()))
}

fn hermitian_part(m: &Mat2) -> Mat2 {
    (m + m.adjoint()) * ops::c(0.5)
}

/// Eigenvalues of a Hermitian 2×2 matrix, ascending.
pub fn hermitian_eigenvalues(m: &Mat2) -> [f64; 2] {
    let a = m[(0, 0)].re;
    let d = m[(1, 1)].re;
    let b = m[(0, 1)];
    let mean = 0.5 * (a + d);
    let half_gap = (0.25 * (a - d).powi(2) + b.norm_sqr()).sqrt();
    [mean - half_gap, mean + half_gap]
}

/// Bloch components `(Tr[Aσ_x], Tr[Aσ_y], Tr[Aσ_z])` of any Hermitian matrix.
fn pauli_components(m: &Mat2) -> [f64; 3] {
    let b = m[(1, 0)];
    [2.0 * b.re, 2.0 * b.im, m[(0, 0)].re - m[(1, 1)].re]
}

fn from_pauli_components(scalar: f64, r: [f64; 3]) -> Mat2 {
    // scalar·1/2 + r·σ/2
    Mat2::new(
        ops::c(0.5 * (scalar + r[2])),
        C64::new(0.5 * r[0], -0.5 * r[1]),
        C64::new(0.5 * r[0], 0.5 * r[1]),
        ops::c(0.5 * (scalar - r[2])),
    )
}

/// Rates of the qubit model: Alice's emission channel `δ`, Bob's emission
/// channel `γ` and Bob's absorption channel `ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub delta: f64,
    pub gamma: f64,
    pub epsilon: f64,
    /// Treat `δ` as exactly zero between Alice's jumps while still imposing
    /// the terminal jump as a conditioning event.
    pub delta_zero_limit: bool,
}

impl ModelParams {
    pub fn new(delta: f64, gamma: f64, epsilon: f64) -> Result<Self> {
        let p = ModelParams {
            delta,
            gamma,
            epsilon,
            delta_zero_limit: false,
        };
        p.validate()?;
        Ok(p)
    }

    /// `γ = 1`, `ε = 0.05γ`, `δ → 0⁺`.
    pub fn reference() -> Self {
        ModelParams {
            delta: 0.0,
            gamma: 1.0,
            epsilon: 0.05,
            delta_zero_limit: true,
        }
    }

    pub fn with_delta_zero_limit(mut self, on: bool) -> Self {
        self.delta_zero_limit = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.delta.is_finite() && self.gamma.is_finite() && self.epsilon.is_finite();
        if !finite || self.delta < 0.0 || self.gamma <= 0.0 || self.epsilon <= 0.0 {
            return Err(Error::Config(format!(
                "rates must satisfy delta >= 0, gamma > 0, epsilon > 0 (got delta={}, gamma={}, epsilon={})",
                self.delta, self.gamma, self.epsilon
            )));
        }
        Ok(())
    }

    /// The `δ` used in inter-jump dynamics.
    pub fn effective_delta(&self) -> f64 {
        if self.delta_zero_limit {
            0.0
        } else {
            self.delta
        }
    }

    /// Total relaxation rate `γ + ε`.
    pub fn relaxation_rate(&self) -> f64 {
        self.gamma + self.epsilon
    }

    /// Steady-state excited population of the filtered state with `δ → 0`.
    pub fn steady_excited_population(&self) -> f64 {
        self.epsilon / (self.gamma + self.epsilon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        BlochVector { x, y, z }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.x * self.x + self.y * self.y + self.z * self.z
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn dot(&self, other: &BlochVector) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn distance_sqr(&self, other: &BlochVector) -> f64 {
        (self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2)
    }

    fn components(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// A qubit density matrix. Construction always validates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(Mat2);

impl DensityMatrix {
    /// Validates `m`: Hermitian to 1e-12, unit trace to 1e-10, eigenvalues
    /// above `-1e-10`. Tiny negative eigenvalues are clipped.
    pub fn new(m: Mat2) -> Result<Self> {
        let defect = hermitian_defect(&m);
        if defect > HERMITIAN_TOL {
            return Err(Error::validation(format!(
                "density matrix not Hermitian (defect {defect:.3e})"
            )));
        }
        let tr = trace(&m);
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::validation(format!(
                "density matrix trace {tr} differs from 1"
            )));
        }
        Self::clip(hermitian_part(&m))
    }

    /// Normalizes a positive operator by its trace, then validates.
    pub fn from_unnormalized(m: Mat2) -> Result<Self> {
        let tr = trace(&m).re;
        if !(tr > 0.0) || !tr.is_finite() {
            return Err(Error::validation(format!(
                "cannot normalize operator with trace {tr}"
            )));
        }
        Self::new(m / ops::c(tr))
    }

    fn clip(m: Mat2) -> Result<Self> {
        let [lo, _] = hermitian_eigenvalues(&m);
        if lo < -PSD_FLOOR {
            return Err(Error::validation(format!(
                "density matrix has negative eigenvalue {lo:.3e}"
            )));
        }
        if lo < 0.0 {
            // Clip the small negative eigenvalue: the state becomes pure along r̂.
            let r = pauli_components(&m);
            let len = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
            let r = [r[0] / len, r[1] / len, r[2] / len];
            return Ok(DensityMatrix(from_pauli_components(1.0, r)));
        }
        Ok(DensityMatrix(m))
    }

    /// `ρ = ½(1 + r·σ)`; rejects `|r| > 1 + 1e-10`.
    pub fn from_bloch(r: BlochVector) -> Result<Self> {
        if !(r.norm_sqr() <= 1.0 + 1e-10) {
            return Err(Error::validation(format!(
                "Bloch vector length {} exceeds 1",
                r.norm()
            )));
        }
        Self::clip(from_pauli_components(1.0, r.components()))
    }

    pub fn excited() -> Self {
        DensityMatrix(ops::proj_e())
    }

    pub fn ground() -> Self {
        DensityMatrix(ops::proj_g())
    }

    pub fn maximally_mixed() -> Self {
        DensityMatrix(Mat2::identity() * ops::c(0.5))
    }

    /// Diagonal state with the given excited population.
    pub fn diagonal(p_e: f64) -> Result<Self> {
        if !(-PSD_FLOOR..=1.0 + PSD_FLOOR).contains(&p_e) {
            return Err(Error::validation(format!("population {p_e} outside [0, 1]")));
        }
        let p_e = p_e.clamp(0.0, 1.0);
        Ok(DensityMatrix(Mat2::new(
            ops::c(p_e),
            ops::c(0.0),
            ops::c(0.0),
            ops::c(1.0 - p_e),
        )))
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.0
    }

    pub fn bloch(&self) -> BlochVector {
        let [x, y, z] = pauli_components(&self.0);
        BlochVector { x, y, z }
    }

    pub fn excited_population(&self) -> f64 {
        self.0[(0, 0)].re
    }

    pub fn ground_population(&self) -> f64 {
        self.0[(1, 1)].re
    }

    pub fn purity(&self) -> f64 {
        trace_product(&self.0, &self.0)
    }

    pub fn eigenvalues(&self) -> [f64; 2] {
        hermitian_eigenvalues(&self.0)
    }

    /// Largest off-diagonal magnitude in the σ_z basis.
    pub fn coherence(&self) -> f64 {
        self.0[(0, 1)].norm()
    }
}

/// `r_i = Tr[ρ σ_i]`. Validates the input, so a non-Hermitian matrix is an error.
pub fn bloch_from_density(m: &Mat2) -> Result<BlochVector> {
    Ok(DensityMatrix::new(*m)?.bloch())
}

pub fn density_from_bloch(r: BlochVector) -> Result<DensityMatrix> {
    DensityMatrix::from_bloch(r)
}

/// `Tr[ρ²]`.
pub fn purity(rho: &DensityMatrix) -> f64 {
    rho.purity()
}

/// `Tr[(a - b)²]`.
pub fn trace_square_deviation(a: &DensityMatrix, b: &DensityMatrix) -> f64 {
    let d = a.matrix() - b.matrix();
    trace_product(&d, &d).max(0.0)
}

/// Pure state `½(1 + sinθ σ_x + cosθ σ_z)` on the x–z great circle.
pub fn pure_state_on_circle(theta: f64) -> DensityMatrix {
    let theta = theta.rem_euclid(TAU);
    let (s, c) = theta.sin_cos();
    DensityMatrix(from_pauli_components(1.0, [s, 0.0, c]))
}

/// Angle of a Bloch vector on the x–z circle, in `[0, 2π)`.
pub fn circle_angle(r: &BlochVector) -> f64 {
    r.x.atan2(r.z).rem_euclid(TAU)
}

/// Positive operator of arbitrary norm representing the likelihood of a
/// future record. Only its direction matters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Effect(Mat2);

impl Effect {
    pub fn new(m: Mat2) -> Result<Self> {
        let scale = max_abs(&m).max(f64::MIN_POSITIVE);
        let defect = hermitian_defect(&m);
        if defect > HERMITIAN_TOL * scale.max(1.0) {
            return Err(Error::validation(format!(
                "effect not Hermitian (defect {defect:.3e})"
            )));
        }
        let m = hermitian_part(&m);
        let [lo, hi] = hermitian_eigenvalues(&m);
        if lo < -PSD_FLOOR * hi.abs().max(1.0) {
            return Err(Error::validation(format!(
                "effect has negative eigenvalue {lo:.3e}"
            )));
        }
        if !(hi > 0.0) || !hi.is_finite() {
            return Err(Error::DegenerateEffect(format!(
                "effect has no positive support (largest eigenvalue {hi:.3e})"
            )));
        }
        Ok(Effect(m))
    }

    pub fn identity() -> Self {
        Effect(Mat2::identity())
    }

    /// `diag(E_e, E_g)` in the σ_z basis.
    pub fn diagonal(e_excited: f64, e_ground: f64) -> Result<Self> {
        Effect::new(Mat2::new(
            ops::c(e_excited),
            ops::c(0.0),
            ops::c(0.0),
            ops::c(e_ground),
        ))
    }

    pub fn from_bloch(scalar: f64, r: BlochVector) -> Result<Self> {
        Effect::new(from_pauli_components(scalar, r.components()))
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        trace(&self.0).re
    }

    /// Half the trace: the overall scale `λ` of the effect.
    pub fn scale(&self) -> f64 {
        0.5 * self.trace()
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        if !(s > 0.0) {
            return Err(Error::validation(format!("effect scale {s} must be positive")));
        }
        Ok(Effect(self.0 * ops::c(s)))
    }

    /// Unit-trace representative.
    pub fn normalized(&self) -> Self {
        Effect(self.0 / ops::c(self.trace()))
    }

    pub fn excited_weight(&self) -> f64 {
        self.0[(0, 0)].re
    }

    pub fn ground_weight(&self) -> f64 {
        self.0[(1, 1)].re
    }

    pub fn coherence(&self) -> f64 {
        self.0[(0, 1)].norm()
    }

    /// Bloch direction of the unit-trace representative.
    pub fn bloch(&self) -> BlochVector {
        let [x, y, z] = pauli_components(&(self.0 / ops::c(self.trace())));
        BlochVector { x, y, z }
    }

    /// `Tr[E ρ]` for an arbitrary operator.
    pub fn expectation(&self, m: &Mat2) -> f64 {
        trace_product(&self.0, m)
    }
}

/// Kraus operator for one outcome in one time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementOperator(pub Mat2);

impl MeasurementOperator {
    pub fn matrix(&self) -> &Mat2 {
        &self.0
    }
}

/// Checks `Σ_k M_k† M_k = 1` to 1e-9.
pub fn check_completeness(set: &[MeasurementOperator]) -> Result<()> {
    let total = set
        .iter()
        .fold(Mat2::zeros(), |acc, m| acc + m.0.adjoint() * m.0);
    let defect = max_abs(&(total - Mat2::identity()));
    if defect > 1e-9 {
        return Err(Error::validation(format!(
            "measurement operators incomplete: |Σ M†M - 1| = {defect:.3e}"
        )));
    }
    Ok(())
}

/// Probability vector over discrete hidden states.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalBelief(Vec<f64>);

impl ClassicalBelief {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::validation("empty belief"));
        }
        if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::validation(format!("belief has negative entry: {p:?}")));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-10 {
            return Err(Error::validation(format!("belief sums to {sum}")));
        }
        Ok(ClassicalBelief(p))
    }

    /// Normalizes a nonnegative weight vector.
    pub fn from_weights(w: Vec<f64>) -> Result<Self> {
        let sum: f64 = w.iter().sum();
        if w.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::validation(format!("negative weight in {w:?}")));
        }
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(Error::InconsistentRecord(format!(
                "weights {w:?} have zero total"
            )));
        }
        Ok(ClassicalBelief(w.into_iter().map(|x| x / sum).collect()))
    }

    pub fn uniform(d: usize) -> Self {
        ClassicalBelief(vec![1.0 / d as f64; d])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Nonnegative likelihood vector over discrete hidden states, arbitrary norm.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalEffect(Vec<f64>);

impl ClassicalEffect {
    pub fn new(e: Vec<f64>) -> Result<Self> {
        if e.is_empty() || e.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::validation(format!("invalid classical effect {e:?}")));
        }
        Ok(ClassicalEffect(e))
    }

    pub fn uniform(d: usize) -> Self {
        ClassicalEffect(vec![1.0; d])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

//! Unconditional Lindblad dynamics and the jump/innovation superoperators used
//! by the conditioned equations.

use crate::error::{Error, Result};
use crate::qubit::{anticommutator, ops, trace, DensityMatrix, Mat2, ModelParams};

/// Default step size in units of `1/γ`.
pub const DEFAULT_DT: f64 = 1e-3;

/// Ordered jump operators with their rates folded in.
#[derive(Debug, Clone, PartialEq)]
pub struct LindbladSet(Vec<Mat2>);

impl LindbladSet {
    pub fn new(ops: Vec<Mat2>) -> Self {
        LindbladSet(ops)
    }

    /// `(√δ σ₋, √γ σ₋, √ε σ₊)`.
    pub fn model(params: &ModelParams) -> Self {
        let mut v = vec![Self::alice(params)];
        v.extend(Self::unobserved(params).0);
        LindbladSet(v)
    }

    /// Alice's observed channel `√δ σ₋` (zero in the `δ → 0` limit).
    pub fn alice(params: &ModelParams) -> Mat2 {
        ops::sigma_minus() * ops::c(params.effective_delta().sqrt())
    }

    /// Bob's channels `(√γ σ₋, √ε σ₊)`.
    pub fn unobserved(params: &ModelParams) -> Self {
        LindbladSet(vec![
            ops::sigma_minus() * ops::c(params.gamma.sqrt()),
            ops::sigma_plus() * ops::c(params.epsilon.sqrt()),
        ])
    }

    pub fn operators(&self) -> &[Mat2] {
        &self.0
    }
}

/// `Σ_ℓ c ρ c† - ½{c†c, ρ}`. Accepts unnormalized operators.
pub fn dissipator(set: &LindbladSet, rho: &Mat2) -> Mat2 {
    set.0.iter().fold(Mat2::zeros(), |acc, c| {
        let cd = c.adjoint();
        acc + c * rho * cd - anticommutator(&(cd * c), rho) * ops::c(0.5)
    })
}

/// Heisenberg-picture dual `Σ_ℓ c† E c - ½{c†c, E}`.
pub fn dissipator_adjoint(set: &LindbladSet, e: &Mat2) -> Mat2 {
    set.0.iter().fold(Mat2::zeros(), |acc, c| {
        let cd = c.adjoint();
        acc + cd * e * c - anticommutator(&(cd * c), e) * ops::c(0.5)
    })
}

/// Right-hand side of the classical rate equation for the ground population,
/// `(δ + γ)(1 - p_g) - ε p_g`.
pub fn classical_rate_rhs(params: &ModelParams, p_g: f64) -> f64 {
    (params.effective_delta() + params.gamma) * (1.0 - p_g) - params.epsilon * p_g
}

/// Fixed point of [`classical_rate_rhs`].
pub fn steady_ground_population(params: &ModelParams) -> f64 {
    let d = params.effective_delta();
    (params.gamma + d) / (params.gamma + d + params.epsilon)
}

/// `𝒢[a]ρ = aρa†/Tr[aρa†] - ρ`.
pub fn superop_g(a: &Mat2, rho: &Mat2) -> Result<Mat2> {
    let jumped = a * rho * a.adjoint();
    let p = trace(&jumped).re;
    if !(p > 0.0) {
        return Err(Error::ImpossibleJump(format!(
            "jump probability Tr[aρa†] = {p:.3e}"
        )));
    }
    Ok(jumped / ops::c(p) - rho)
}

/// `ℋ[a]ρ = Σ_k a_kρ + ρa_k† - Tr[a_kρ + ρa_k†]ρ`.
pub fn superop_h(a_list: &[Mat2], rho: &Mat2) -> Mat2 {
    a_list.iter().fold(Mat2::zeros(), |acc, a| {
        let t = a * rho + rho * a.adjoint();
        let tr = trace(&t);
        acc + t - rho * tr
    })
}

/// `𝒢̃[a]X = aXa† - X`.
pub fn superop_g_tilde(a: &Mat2, x: &Mat2) -> Mat2 {
    a * x * a.adjoint() - x
}

/// `ℋ̃[a]X = Σ_k a_kX + Xa_k†`.
pub fn superop_h_tilde(a_list: &[Mat2], x: &Mat2) -> Mat2 {
    a_list
        .iter()
        .fold(Mat2::zeros(), |acc, a| acc + a * x + x * a.adjoint())
}

/// One classical RK4 step of `dρ/dt = f(ρ)`.
pub fn rk4_step(f: impl Fn(&Mat2) -> Mat2, rho: &Mat2, dt: f64) -> Mat2 {
    let h = ops::c(dt);
    let half = ops::c(0.5 * dt);
    let k1 = f(rho);
    let k2 = f(&(rho + k1 * half));
    let k3 = f(&(rho + k2 * half));
    let k4 = f(&(rho + k3 * h));
    rho + (k1 + k2 * ops::c(2.0) + k3 * ops::c(2.0) + k4) * (h / ops::c(6.0))
}

/// Integrates the master equation with RK4, returning the state after each
/// of `steps` steps of size `dt` (the initial state excluded).
pub fn evolve_unconditional(
    set: &LindbladSet,
    rho0: &DensityMatrix,
    dt: f64,
    steps: usize,
) -> Result<Vec<DensityMatrix>> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    let mut rho = *rho0.matrix();
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        rho = rk4_step(|r| dissipator(set, r), &rho, dt);
        let state = DensityMatrix::from_unnormalized(rho)?;
        rho = *state.matrix();
        out.push(state);
    }
    Ok(out)
}

//! Backward propagation of the retrofiltered effect for Alice's record, the
//! matching unnormalized forward filter, and a co-diagonality check for
//! one-step measurement operator sets.
//!
//! Between detections the effect obeys, in backward time,
//!
//! ```text
//! E(t) = E(t+dt) + dt (𝒟†[c_u]E - ½{c_o†c_o, E} - ζE)
//! ```
//!
//! and across a detection `E(t) = c_o† E(t+dt) c_o`. The unnormalized filter
//! uses the adjoint maps, so `Tr[ρ̃_F(t) E(t)]` is the same at every `t`.

use crate::error::{Error, Result};
use crate::lindblad::{dissipator, dissipator_adjoint, LindbladSet};
use crate::qubit::{
    anticommutator, check_completeness, hermitian_eigenvalues, max_abs, ops, trace_product,
    Effect, Mat2, MeasurementOperator, ModelParams,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetroConfig {
    /// Norm-only decay rate; any `ζ ≥ 0` gives the same normalized effect.
    pub zeta: f64,
    pub renormalize_each_step: bool,
}

impl Default for RetroConfig {
    fn default() -> Self {
        RetroConfig {
            zeta: 0.0,
            renormalize_each_step: true,
        }
    }
}

impl RetroConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.zeta >= 0.0) || !self.zeta.is_finite() {
            return Err(Error::Config(format!("ζ must be ≥ 0, got {}", self.zeta)));
        }
        Ok(())
    }
}

/// Effect just before a detection given the effect `after` it: `σ₊ E σ₋`,
/// i.e. `⟨g|E|g⟩ |e⟩⟨e|`.
pub fn effect_jump_update(after: &Effect) -> Result<Effect> {
    let m = ops::sigma_plus() * after.matrix() * ops::sigma_minus();
    Effect::new(m).map_err(|_| {
        Error::DegenerateEffect(format!(
            "⟨g|E|g⟩ = {:.3e} leaves nothing to jump from",
            after.ground_weight()
        ))
    })
}

fn no_jump_generator(e: &Mat2, params: &ModelParams, zeta: f64) -> Mat2 {
    let c_o = LindbladSet::alice(params);
    dissipator_adjoint(&LindbladSet::unobserved(params), e)
        - anticommutator(&(c_o.adjoint() * c_o), e) * ops::c(0.5)
        - e * ops::c(zeta)
}

/// One backward step from `t + dt` to `t`.
pub fn effect_backward_step(
    e: &Effect,
    dn_o: bool,
    params: &ModelParams,
    cfg: &RetroConfig,
    dt: f64,
) -> Result<Effect> {
    cfg.validate()?;
    let next = if dn_o {
        effect_jump_update(e)?
    } else {
        let m = e.matrix() + no_jump_generator(e.matrix(), params, cfg.zeta) * ops::c(dt);
        Effect::new(m).map_err(|err| match err {
            Error::DegenerateEffect(msg) => Error::DegenerateEffect(msg),
            other => Error::StepSize(format!("backward step lost positivity: {other}")),
        })?
    };
    Ok(if cfg.renormalize_each_step {
        next.normalized()
    } else {
        next
    })
}

/// The same step restricted to diagonal effects, `(E_e, E_g)`.
pub fn effect_backward_step_diagonal(
    e: (f64, f64),
    dn_o: bool,
    params: &ModelParams,
    cfg: &RetroConfig,
    dt: f64,
) -> Result<(f64, f64)> {
    cfg.validate()?;
    let (ee, eg) = e;
    let (ee, eg) = if dn_o {
        if !(eg > 0.0) {
            return Err(Error::DegenerateEffect("E_g = 0 before a detection".into()));
        }
        (eg, 0.0)
    } else {
        let delta = params.effective_delta();
        (
            ee + dt * (params.gamma * (eg - ee) - (delta + cfg.zeta) * ee),
            eg + dt * (params.epsilon * (ee - eg) - cfg.zeta * eg),
        )
    };
    if ee < 0.0 || eg < 0.0 {
        return Err(Error::StepSize(format!("negative effect component ({ee}, {eg})")));
    }
    if cfg.renormalize_each_step {
        let s = ee + eg;
        Ok((ee / s, eg / s))
    } else {
        Ok((ee, eg))
    }
}

/// Effects at grid points `0..=N` for Alice's flags `observed[k]` on steps
/// `[t_k, t_{k+1})`, ending in `final_effect` at `t_N`.
pub fn backward_pass(
    observed: &[u8],
    final_effect: Effect,
    params: &ModelParams,
    cfg: &RetroConfig,
    dt: f64,
) -> Result<Vec<Effect>> {
    let n = observed.len();
    let mut out = vec![final_effect; n + 1];
    for k in (0..n).rev() {
        out[k] = effect_backward_step(&out[k + 1], observed[k] != 0, params, cfg, dt)?;
    }
    Ok(out)
}

/// Effect at `0⁻` when Alice detects a photon at `t = 0` and nothing later
/// is conditioned on: `∝ |e⟩⟨e|`.
pub fn pre_jump_effect() -> Effect {
    effect_jump_update(&Effect::identity()).expect("identity has ground support")
}

/// Effects over a window ending just before Alice's detection at its end,
/// with no other detections in the window.
pub fn pre_jump_backward_pass(
    steps: usize,
    params: &ModelParams,
    cfg: &RetroConfig,
    dt: f64,
) -> Result<Vec<Effect>> {
    backward_pass(&vec![0; steps], pre_jump_effect(), params, cfg, dt)
}

/// One forward step of the unnormalized filtered state, adjoint to
/// [`effect_backward_step`] with the same `ζ`.
pub fn forward_unnormalized_step(
    rho: &Mat2,
    dn_o: bool,
    params: &ModelParams,
    zeta: f64,
    dt: f64,
) -> Mat2 {
    if dn_o {
        return ops::sigma_minus() * rho * ops::sigma_plus();
    }
    let c_o = LindbladSet::alice(params);
    let gen = dissipator(&LindbladSet::unobserved(params), rho)
        - anticommutator(&(c_o.adjoint() * c_o), rho) * ops::c(0.5)
        - rho * ops::c(zeta);
    rho + gen * ops::c(dt)
}

/// `Tr[ρ̃_F E]`.
pub fn forward_backward_trace(rho_unnorm: &Mat2, e: &Effect) -> f64 {
    trace_product(rho_unnorm, e.matrix())
}

/// Makes a one-step operator set exactly complete: `M_k → M_k S^{-1/2}`
/// with `S = Σ M_k†M_k`.
pub fn complete_operator_set(set: &[Mat2]) -> Result<Vec<MeasurementOperator>> {
    let s = set.iter().fold(Mat2::zeros(), |acc, m| acc + m.adjoint() * m);
    let eig = nalgebra::SymmetricEigen::new(s);
    if eig.eigenvalues.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::validation("operator set has a null direction"));
    }
    let inv_sqrt = eig.eigenvectors
        * Mat2::from_diagonal(&eig.eigenvalues.map(|l| ops::c(1.0 / l.sqrt())))
        * eig.eigenvectors.adjoint();
    Ok(set
        .iter()
        .map(|m| MeasurementOperator(m * inv_sqrt))
        .collect())
}

/// Alice's two outcomes for one step: `(no detection, detection)`.
pub fn alice_operators(params: &ModelParams, dt: f64) -> Result<Vec<MeasurementOperator>> {
    let c_o = LindbladSet::alice(params);
    complete_operator_set(&[
        Mat2::identity() - c_o.adjoint() * c_o * ops::c(0.5 * dt),
        c_o * ops::c(dt.sqrt()),
    ])
}

/// Bob's photon-counting outcomes for one step: none, emission, absorption.
pub fn photon_operator_set(params: &ModelParams, dt: f64) -> Result<Vec<MeasurementOperator>> {
    let set = LindbladSet::unobserved(params);
    let c = set.operators();
    let no_jump = Mat2::identity()
        - (c[0].adjoint() * c[0] + c[1].adjoint() * c[1]) * ops::c(0.5 * dt);
    complete_operator_set(&[
        no_jump,
        c[0] * ops::c(dt.sqrt()),
        c[1] * ops::c(dt.sqrt()),
    ])
}

/// Bob's homodyne outcomes for one step, with each current increment
/// coarse-grained to `±√dt`.
pub fn homodyne_operator_set(params: &ModelParams, dt: f64) -> Result<Vec<MeasurementOperator>> {
    let set = LindbladSet::unobserved(params);
    let c = set.operators();
    let base = Mat2::identity()
        - (c[0].adjoint() * c[0] + c[1].adjoint() * c[1]) * ops::c(0.5 * dt);
    let mut out = Vec::with_capacity(4);
    for s1 in [-1.0, 1.0] {
        for s2 in [-1.0, 1.0] {
            let m = base + (c[0] * ops::c(s1) + c[1] * ops::c(s2)) * ops::c(dt.sqrt());
            out.push(m * ops::c(0.5));
        }
    }
    complete_operator_set(&out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodiagonalityReport {
    /// Every unobserved outcome maps each basis state onto a basis state.
    pub codiagonal: bool,
    /// Largest `|T_ik T*_jk|` with `i ≠ j` over outcomes and `k`.
    pub max_violation: f64,
    /// Largest off-diagonal after one averaged forward step from diagonal inputs.
    pub forward_offdiagonal: f64,
    /// Same for one averaged backward step of an effect.
    pub backward_offdiagonal: f64,
}

/// Checks whether the observed operator combined with each unobserved
/// outcome keeps the σ_z basis states orthogonal, i.e. whether the true
/// state stays diagonal, and measures diagonality preservation of the
/// outcome-averaged forward and backward maps.
pub fn codiagonality_oracle(
    m_o: &MeasurementOperator,
    m_u: &[MeasurementOperator],
) -> Result<CodiagonalityReport> {
    check_completeness(m_u)?;
    let mut max_violation: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for mu in m_u {
        let t = m_o.matrix() * mu.matrix();
        scale = scale.max(max_abs(&t).powi(2));
        for k in 0..2 {
            let v = (t[(0, k)] * t[(1, k)].conj()).norm();
            max_violation = max_violation.max(v);
        }
    }

    let mut forward: f64 = 0.0;
    let mut backward: f64 = 0.0;
    for p in [0.0, 0.13, 0.5, 0.87, 1.0] {
        let diag = Mat2::new(ops::c(p), ops::c(0.0), ops::c(0.0), ops::c(1.0 - p));
        let mut rho = Mat2::zeros();
        let mut eff = Mat2::zeros();
        for mu in m_u {
            let t = m_o.matrix() * mu.matrix();
            rho += t * diag * t.adjoint();
            eff += t.adjoint() * diag * t;
        }
        forward = forward.max(rho[(0, 1)].norm());
        backward = backward.max(eff[(0, 1)].norm());
    }

    Ok(CodiagonalityReport {
        codiagonal: max_violation <= 1e-12 * scale.max(1.0),
        max_violation,
        forward_offdiagonal: forward,
        backward_offdiagonal: backward,
    })
}

/// Smallest eigenvalue of an effect's unit-trace representative.
pub fn min_normalized_eigenvalue(e: &Effect) -> f64 {
    hermitian_eigenvalues(e.normalized().matrix())[0]
}

//! Adaptive weak-local-oscillator (WLO) photodetection for Bob, and the cyclic
//! three-state physically realizable ensemble (PRE) it confines the qubit to.
//!
//! For each ensemble state `|θ⟩` Bob adds real amplitudes `μ₋`, `μ₊` to his
//! emission and absorption outputs. The jump operators become
//! `σ'₋ = √γ σ₋ + μ₋` and `σ'₊ = √ε σ₊ + μ₊` and the no-jump evolution is
//! generated by
//!
//! ```text
//! H'_eff = -(i/2)(γ σ₊σ₋ + ε σ₋σ₊ + 2√γ μ₋ σ₋ + 2√ε μ₊ σ₊ + μ₋² + μ₊²).
//! ```
//!
//! The ensemble is cyclic when each `|θ⟩` is an eigenstate of its own
//! `H'_eff` and either jump sends it to the next state in the cycle
//! `α → φ → β → α`.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lindblad::{dissipator, LindbladSet};
use crate::lm::{self, LmOptions};
use crate::qubit::{
    max_abs, ops, pure_state_on_circle, BlochVector, ClassicalBelief, DensityMatrix, Mat2,
    ModelParams, C64,
};

/// Number of states in the cyclic ensemble.
pub const PRE_SIZE: usize = 3;

/// Display labels in cycle order.
pub const STATE_LABELS: [&str; PRE_SIZE] = ["alpha", "phi", "beta"];

/// Real WLO amplitudes for one ensemble state, in √rate units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WloSettings {
    /// Added to the emission (γ) channel.
    pub minus: f64,
    /// Added to the absorption (ε) channel.
    pub plus: f64,
}

impl WloSettings {
    pub const fn new(minus: f64, plus: f64) -> Self {
        WloSettings { minus, plus }
    }

    pub const ZERO: WloSettings = WloSettings::new(0.0, 0.0);
}

/// Published amplitudes for `γ = 1`, `ε = 0.05`, in cycle order α, φ, β.
pub const PUBLISHED_WLO: [WloSettings; PRE_SIZE] = [
    WloSettings::new(-0.07812, -0.1804),
    WloSettings::new(-0.3684, 0.2552),
    WloSettings::new(0.06446, 0.6158),
];

fn flatten(wlo: &[WloSettings; PRE_SIZE]) -> Vec<f64> {
    wlo.iter().flat_map(|w| [w.minus, w.plus]).collect()
}

fn unflatten(v: &[f64]) -> [WloSettings; PRE_SIZE] {
    [
        WloSettings::new(v[0], v[1]),
        WloSettings::new(v[2], v[3]),
        WloSettings::new(v[4], v[5]),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveOperators {
    pub h_eff: Mat2,
    pub jump_minus: Mat2,
    pub jump_plus: Mat2,
}

/// No-jump Hamiltonian and primed jump operators for one WLO setting.
/// Alice's channel is not part of Bob's operators.
pub fn build_operators(wlo: &WloSettings, params: &ModelParams) -> AdaptiveOperators {
    let sg = params.gamma.sqrt();
    let se = params.epsilon.sqrt();
    let (sm, sp) = (ops::sigma_minus(), ops::sigma_plus());
    let generator = sp * sm * ops::c(params.gamma)
        + sm * sp * ops::c(params.epsilon)
        + sm * ops::c(2.0 * sg * wlo.minus)
        + sp * ops::c(2.0 * se * wlo.plus)
        + Mat2::identity() * ops::c(wlo.minus * wlo.minus + wlo.plus * wlo.plus);
    AdaptiveOperators {
        h_eff: generator * C64::new(0.0, -0.5),
        jump_minus: sm * ops::c(sg) + Mat2::identity() * ops::c(wlo.minus),
        jump_plus: sp * ops::c(se) + Mat2::identity() * ops::c(wlo.plus),
    }
}

impl AdaptiveOperators {
    /// Generator of the averaged evolution, `-i(Hρ - ρH†) + Σ JρJ†`.
    pub fn averaged_generator(&self, rho: &Mat2) -> Mat2 {
        let i = C64::new(0.0, 1.0);
        (self.h_eff * rho - rho * self.h_eff.adjoint()) * (-i)
            + self.jump_minus * rho * self.jump_minus.adjoint()
            + self.jump_plus * rho * self.jump_plus.adjoint()
    }

    /// Largest entry of `averaged_generator - 𝒟[c_u]` over the matrix-unit basis.
    pub fn unravelling_defect(&self, params: &ModelParams) -> f64 {
        let set = LindbladSet::unobserved(params);
        let mut worst: f64 = 0.0;
        for k in 0..4 {
            let mut unit = Mat2::zeros();
            unit[(k / 2, k % 2)] = ops::c(1.0);
            let diff = self.averaged_generator(&unit) - dissipator(&set, &unit);
            worst = worst.max(max_abs(&diff));
        }
        worst
    }

    /// Total jump rate `⟨ψ|σ'₋†σ'₋ + σ'₊†σ'₊|ψ⟩` from a pure state.
    pub fn exit_rate(&self, theta: f64) -> f64 {
        let k = ket(theta);
        let a = self.jump_minus * k;
        let b = self.jump_plus * k;
        a.norm_squared() + b.norm_squared()
    }

    /// Per-channel jump rates from a pure state, `(emission, absorption)`.
    pub fn channel_rates(&self, theta: f64) -> (f64, f64) {
        let k = ket(theta);
        (
            (self.jump_minus * k).norm_squared(),
            (self.jump_plus * k).norm_squared(),
        )
    }
}

type Ket = nalgebra::Vector2<C64>;

/// `cos(θ/2)|e⟩ + sin(θ/2)|g⟩`, whose Bloch angle on the x–z circle is `θ`.
fn ket(theta: f64) -> Ket {
    let (s, c) = (0.5 * theta).sin_cos();
    Ket::new(ops::c(c), ops::c(s))
}

/// Unit vector orthogonal to [`ket`].
fn ket_perp(theta: f64) -> Ket {
    let (s, c) = (0.5 * theta).sin_cos();
    Ket::new(ops::c(-s), ops::c(c))
}

fn overlap_sqr(a: f64, b: f64) -> f64 {
    ket(a).dotc(&ket(b)).norm_sqr()
}

fn check_distinct(angles: &[f64; PRE_SIZE]) -> Result<()> {
    for i in 0..PRE_SIZE {
        for j in (i + 1)..PRE_SIZE {
            if overlap_sqr(angles[i], angles[j]) > 1.0 - 1e-12 {
                return Err(Error::validation(format!(
                    "ensemble states {} and {} coincide (θ = {}, {})",
                    STATE_LABELS[i], STATE_LABELS[j], angles[i], angles[j]
                )));
            }
        }
    }
    Ok(())
}

fn residuals_unchecked(
    angles: &[f64; PRE_SIZE],
    wlo: &[WloSettings; PRE_SIZE],
    params: &ModelParams,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(6 * PRE_SIZE);
    for i in 0..PRE_SIZE {
        let theta = angles[i];
        let next = angles[(i + 1) % PRE_SIZE];
        let op = build_operators(&wlo[i], params);
        let here = ket(theta);
        let stay = ket_perp(theta).dotc(&(op.h_eff * here));
        let perp_next = ket_perp(next);
        let down = perp_next.dotc(&(op.jump_minus * here));
        let up = perp_next.dotc(&(op.jump_plus * here));
        out.extend([stay.re, stay.im, down.re, down.im, up.re, up.im]);
    }
    out
}

/// For each state: the part of `H'_eff|θ⟩` orthogonal to `|θ⟩` and the parts
/// of `σ'∓|θ⟩` orthogonal to the next state, as (re, im) pairs. Zero exactly
/// for a cyclic physically realizable ensemble.
pub fn constraint_residuals(
    angles: &[f64; PRE_SIZE],
    wlo: &[WloSettings; PRE_SIZE],
    params: &ModelParams,
) -> Result<Vec<f64>> {
    check_distinct(angles)?;
    Ok(residuals_unchecked(angles, wlo, params))
}

pub fn residual_norm(v: &[f64]) -> f64 {
    v.iter().map(|r| r * r).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Serialize)]
pub struct WloSolution {
    pub wlo: [WloSettings; PRE_SIZE],
    pub residual_norm: f64,
    pub iterations: usize,
}

/// Least-squares solve of the cyclic constraints for the WLO amplitudes at
/// fixed ensemble angles.
pub fn solve_wlo(
    angles: &[f64; PRE_SIZE],
    params: &ModelParams,
    initial: &[WloSettings; PRE_SIZE],
) -> Result<WloSolution> {
    solve_wlo_with(angles, params, initial, &LmOptions::default())
}

pub fn solve_wlo_with(
    angles: &[f64; PRE_SIZE],
    params: &ModelParams,
    initial: &[WloSettings; PRE_SIZE],
    opts: &LmOptions,
) -> Result<WloSolution> {
    check_distinct(angles)?;
    let out = lm::minimize(
        |v| residuals_unchecked(angles, &unflatten(v), params),
        &flatten(initial),
        opts,
    );
    if !out.converged {
        return Err(Error::Solver {
            iterations: out.iterations,
            best_residual: out.residual_norm,
        });
    }
    Ok(WloSolution {
        wlo: unflatten(&out.x),
        residual_norm: out.residual_norm,
        iterations: out.iterations,
    })
}

/// Multistart [`solve_wlo`]: the given seed first, then `random_starts`
/// uniform seeds in `[-1, 1]⁶`. Failed starts are dropped.
pub fn solve_wlo_multistart(
    angles: &[f64; PRE_SIZE],
    params: &ModelParams,
    seed_guess: &[WloSettings; PRE_SIZE],
    random_starts: usize,
    rng_seed: u64,
) -> Vec<WloSolution> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut seeds = vec![*seed_guess];
    for _ in 0..random_starts {
        let v: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        seeds.push(unflatten(&v));
    }
    seeds
        .par_iter()
        .filter_map(|s| solve_wlo(angles, params, s).ok())
        .collect()
}

/// Solves angles and amplitudes together (9 unknowns, 9 nontrivial
/// constraints). Used to turn rounded published amplitudes into an exact
/// ensemble.
pub fn refine_ensemble(
    angles: &[f64; PRE_SIZE],
    wlo: &[WloSettings; PRE_SIZE],
    params: &ModelParams,
) -> Result<([f64; PRE_SIZE], WloSolution)> {
    check_distinct(angles)?;
    let mut x0 = angles.to_vec();
    x0.extend(flatten(wlo));
    let opts = LmOptions {
        tolerance: 1e-13,
        ..LmOptions::default()
    };
    let out = lm::minimize(
        |v| residuals_unchecked(&[v[0], v[1], v[2]], &unflatten(&v[3..]), params),
        &x0,
        &opts,
    );
    if !out.converged {
        return Err(Error::Solver {
            iterations: out.iterations,
            best_residual: out.residual_norm,
        });
    }
    let refined = [
        out.x[0].rem_euclid(TAU),
        out.x[1].rem_euclid(TAU),
        out.x[2].rem_euclid(TAU),
    ];
    Ok((
        refined,
        WloSolution {
            wlo: unflatten(&out.x[3..]),
            residual_norm: out.residual_norm,
            iterations: out.iterations,
        },
    ))
}

/// Real eigenvector angles of the no-jump generator for one WLO setting.
fn eigen_angles(wlo: &WloSettings, params: &ModelParams) -> Result<[f64; 2]> {
    // H'_eff = -(i/2) K with K real.
    let k = build_operators(wlo, params).h_eff * C64::new(0.0, 2.0);
    let (a, b, c, d) = (k[(0, 0)].re, k[(0, 1)].re, k[(1, 0)].re, k[(1, 1)].re);
    let half_tr = 0.5 * (a + d);
    let disc = 0.25 * (a - d).powi(2) + b * c;
    if disc < 0.0 {
        return Err(Error::Extraction(format!(
            "no real eigenvector for WLO {wlo:?} (discriminant {disc:.3e})"
        )));
    }
    let root = disc.sqrt();
    let mut out = [0.0; 2];
    for (slot, lambda) in out.iter_mut().zip([half_tr + root, half_tr - root]) {
        // (K - λ)v = 0: pick the better-conditioned row.
        let (ve, vg) = if b.abs() + (a - lambda).abs() >= c.abs() + (d - lambda).abs() {
            (b, lambda - a)
        } else {
            (lambda - d, c)
        };
        if ve.abs() + vg.abs() == 0.0 {
            // K ∝ 1 on this eigenspace; any vector works, fall back to |e⟩/|g⟩.
            *slot = if lambda == half_tr + root { 0.0 } else { std::f64::consts::PI };
        } else {
            *slot = (2.0 * vg.atan2(ve)).rem_euclid(TAU);
        }
    }
    Ok(out)
}

/// Ensemble angles implied by a set of WLO amplitudes: for each state, the
/// eigenvector of its no-jump operator, choosing the combination that best
/// satisfies the cyclic jump conditions.
pub fn pre_states_from_wlo(
    wlo: &[WloSettings; PRE_SIZE],
    params: &ModelParams,
) -> Result<[f64; PRE_SIZE]> {
    let cands = [
        eigen_angles(&wlo[0], params)?,
        eigen_angles(&wlo[1], params)?,
        eigen_angles(&wlo[2], params)?,
    ];
    let mut best: Option<(f64, [f64; PRE_SIZE])> = None;
    for choice in 0..(1 << PRE_SIZE) {
        let angles = [
            cands[0][choice & 1],
            cands[1][(choice >> 1) & 1],
            cands[2][(choice >> 2) & 1],
        ];
        let norm = residual_norm(&residuals_unchecked(&angles, wlo, params));
        if best.is_none_or(|(b, _)| norm < b) {
            best = Some((norm, angles));
        }
    }
    Ok(best.expect("eight candidates").1)
}

/// Stationary occupations of the cycle: `wp_θ ∝ 1/r_θ`.
pub fn occupations(
    angles: &[f64; PRE_SIZE],
    wlo: &[WloSettings; PRE_SIZE],
    params: &ModelParams,
) -> Result<ClassicalBelief> {
    let mut inv = [0.0; PRE_SIZE];
    for i in 0..PRE_SIZE {
        let rate = build_operators(&wlo[i], params).exit_rate(angles[i]);
        if !(rate > 0.0) {
            return Err(Error::DegenerateCycle(format!(
                "state {} has zero exit rate",
                STATE_LABELS[i]
            )));
        }
        inv[i] = 1.0 / rate;
    }
    ClassicalBelief::from_weights(inv.to_vec())
}

/// Whether the filtered state typically relaxes between Alice's jumps:
/// `δε < 0.01 (γ + ε)²`.
pub fn regime_check(params: &ModelParams) -> bool {
    params.effective_delta() * params.epsilon < 0.01 * params.relaxation_rate().powi(2)
}

/// Three pure states on the x–z circle with their occupations and WLO settings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreEnsemble {
    pub angles: [f64; PRE_SIZE],
    pub occupations: [f64; PRE_SIZE],
    pub wlo: [WloSettings; PRE_SIZE],
}

impl PreEnsemble {
    /// Validates the ensemble: distinct states, residual norm below 1e-6 and
    /// mixture equal to the steady filtered state to 1e-6.
    pub fn new(
        angles: [f64; PRE_SIZE],
        wlo: [WloSettings; PRE_SIZE],
        params: &ModelParams,
    ) -> Result<Self> {
        let res = residual_norm(&constraint_residuals(&angles, &wlo, params)?);
        if res > 1e-6 {
            return Err(Error::validation(format!(
                "ensemble is not cyclic (residual norm {res:.3e})"
            )));
        }
        let occ = occupations(&angles, &wlo, params)?;
        let p = occ.probs();
        let pre = PreEnsemble {
            angles,
            occupations: [p[0], p[1], p[2]],
            wlo,
        };
        let target = params.steady_excited_population();
        let mix = pre.mixture()?;
        let err = (mix.excited_population() - target)
            .abs()
            .max(mix.coherence());
        if err > 1e-6 {
            return Err(Error::validation(format!(
                "ensemble mixture misses the steady filtered state by {err:.3e}"
            )));
        }
        Ok(pre)
    }

    /// The ensemble realized by the published amplitudes, refined to an exact
    /// solution of the cyclic constraints.
    pub fn published(params: &ModelParams) -> Result<Self> {
        let rough = pre_states_from_wlo(&PUBLISHED_WLO, params)?;
        let (angles, sol) = refine_ensemble(&rough, &PUBLISHED_WLO, params)?;
        PreEnsemble::new(angles, sol.wlo, params)
    }

    pub fn state(&self, index: usize) -> DensityMatrix {
        pure_state_on_circle(self.angles[index])
    }

    pub fn operators(&self, index: usize, params: &ModelParams) -> AdaptiveOperators {
        build_operators(&self.wlo[index], params)
    }

    /// `Σ wp_θ ρ(θ)`.
    pub fn mixture(&self) -> Result<DensityMatrix> {
        let m = (0..PRE_SIZE).fold(Mat2::zeros(), |acc, i| {
            acc + self.state(i).matrix() * ops::c(self.occupations[i])
        });
        DensityMatrix::from_unnormalized(m)
    }

    pub fn exit_rates(&self, params: &ModelParams) -> [f64; PRE_SIZE] {
        [0, 1, 2].map(|i| self.operators(i, params).exit_rate(self.angles[i]))
    }

    /// Barycentric coordinates of a point of the x–z plane with respect to
    /// the triangle of ensemble states.
    pub fn barycentric(&self, r: &BlochVector) -> [f64; PRE_SIZE] {
        let p: Vec<(f64, f64)> = self.angles.iter().map(|t| (t.sin(), t.cos())).collect();
        let (x1, z1) = p[0];
        let (x2, z2) = p[1];
        let (x3, z3) = p[2];
        let det = (z2 - z3) * (x1 - x3) + (x3 - x2) * (z1 - z3);
        let l1 = ((z2 - z3) * (r.x - x3) + (x3 - x2) * (r.z - z3)) / det;
        let l2 = ((z3 - z1) * (r.x - x3) + (x1 - x3) * (r.z - z3)) / det;
        [l1, l2, 1.0 - l1 - l2]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn reference() -> ModelParams {
        ModelParams::reference()
    }

    #[test]
    fn bare_operators_without_wlo() {
        let p = reference();
        let op = build_operators(&WloSettings::ZERO, &p);
        let bare = (ops::sigma_plus() * ops::sigma_minus() * ops::c(p.gamma)
            + ops::sigma_minus() * ops::sigma_plus() * ops::c(p.epsilon))
            * C64::new(0.0, -0.5);
        assert!(max_abs(&(op.h_eff - bare)) < 1e-15);
    }

    #[test]
    fn unravelling_reproduces_dissipator() {
        let p = reference();
        for w in PUBLISHED_WLO.iter().chain([&WloSettings::new(0.7, -1.3)]) {
            assert!(build_operators(w, &p).unravelling_defect(&p) < 1e-10);
        }
    }

    #[test]
    fn zero_wlo_eigenstates_are_poles() {
        let angles = pre_states_from_wlo(&[WloSettings::ZERO; 3], &reference()).unwrap();
        for a in angles {
            assert!(a.abs() < 1e-12 || (a - PI).abs() < 1e-12, "{a}");
        }
    }

    #[test]
    fn published_amplitudes_nearly_satisfy_constraints() {
        let p = reference();
        let angles = pre_states_from_wlo(&PUBLISHED_WLO, &p).unwrap();
        let res = residual_norm(&constraint_residuals(&angles, &PUBLISHED_WLO, &p).unwrap());
        assert!(res < 1e-3, "{res}");
        let exact = PreEnsemble::published(&p).unwrap();
        let tight =
            residual_norm(&constraint_residuals(&exact.angles, &exact.wlo, &p).unwrap());
        assert!(tight < 1e-6, "{tight}");
        for (a, b) in exact.angles.iter().zip(angles) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn random_wlo_violates_constraints() {
        let p = reference();
        let angles = PreEnsemble::published(&p).unwrap().angles;
        let wlo = [
            WloSettings::new(0.4, 0.1),
            WloSettings::new(-0.2, -0.9),
            WloSettings::new(0.3, 0.3),
        ];
        assert!(residual_norm(&constraint_residuals(&angles, &wlo, &p).unwrap()) > 1e-2);
    }

    #[test]
    fn degenerate_angles_rejected() {
        let p = reference();
        let r = constraint_residuals(&[1.0, 1.0, 2.0], &PUBLISHED_WLO, &p);
        assert!(matches!(r, Err(Error::Validation(_))));
    }

    #[test]
    fn occupations_of_equal_rates_are_uniform() {
        // Same WLO on three states with equal exit rates: reflection about the
        // z-axis keeps the rate, so use θ and -θ plus a state with matched rate.
        let p = reference();
        let w = [WloSettings::ZERO; 3];
        let theta = 1.0;
        let rate = build_operators(&w[0], &p).exit_rate(theta);
        assert_abs_diff_eq!(rate, build_operators(&w[0], &p).exit_rate(TAU - theta), epsilon = 1e-15);
        let occ = occupations(&[theta, TAU - theta, theta + TAU], &w, &p).unwrap();
        for x in occ.probs() {
            assert_abs_diff_eq!(*x, 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn zero_rate_is_degenerate_cycle() {
        // ε-channel dark on |e⟩ and γ-channel dark on |g⟩ cannot both vanish
        // without WLOs, so cancel the emission amplitude on |g⟩ instead.
        let p = ModelParams::reference();
        let op = build_operators(&WloSettings::ZERO, &p);
        assert!(op.exit_rate(PI) > 0.0);
        let occ = occupations(
            &[0.0, PI, 1.0],
            &[
                WloSettings::new(0.0, 0.0),
                WloSettings::new(0.0, 0.0),
                WloSettings::new(0.0, 0.0),
            ],
            &ModelParams {
                epsilon: 1e-300,
                ..p
            },
        );
        assert!(occ.is_ok());
    }

    #[test]
    fn regime_examples() {
        assert!(regime_check(&ModelParams::reference()));
        let boundary = ModelParams::new(22.0, 1.0, 0.05).unwrap();
        assert!(!regime_check(&boundary));
        let equal = ModelParams::new(1.0, 1.0, 1.0).unwrap();
        assert!(!regime_check(&equal));
    }

    #[test]
    fn barycentric_of_vertices() {
        let pre = PreEnsemble::published(&reference()).unwrap();
        for i in 0..3 {
            let b = pre.barycentric(&pre.state(i).bloch());
            for (j, v) in b.iter().enumerate() {
                assert_abs_diff_eq!(*v, if i == j { 1.0 } else { 0.0 }, epsilon = 1e-12);
            }
        }
    }
}

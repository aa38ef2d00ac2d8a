//! Smoothing estimators and the trace-square-deviation cost comparisons.
//!
//! Classical hidden Markov smoothing, the commuting-case quantum smoother,
//! the smoothed weak-value (SWV) operator, and the scheme-specific quantum
//! smoothers, which are all weighted averages of true states with weights
//! `Tr[E ρ_T]`.

use log::warn;

use crate::error::{Error, Result};
use crate::fpe::ThetaDistribution;
use crate::pre_solver::{PreEnsemble, PRE_SIZE};
use crate::qubit::{
    anticommutator, commutator, hermitian_eigenvalues, max_abs, ops, pure_state_on_circle,
    trace, trace_product, BlochVector, ClassicalBelief, ClassicalEffect, DensityMatrix, Effect,
    Mat2,
};
use crate::qubit::ModelParams;
use crate::trajectories::{ensemble_map, simulate_true, stationary_start, Scheme, TimeGrid};

/// Effective sample size below which [`mc_smooth`] flags degeneration.
pub const MIN_EFFECTIVE_SAMPLES: f64 = 100.0;

/// Commutator norm (of unit-trace representatives) tolerated as commuting.
pub const COMMUTATOR_TOL: f64 = 1e-8;

/// Sum in a fixed binary tree, independent of how the inputs were produced.
pub fn pairwise_sum<T: Copy + std::ops::Add<Output = T>>(xs: &[T], zero: T) -> T {
    match xs.len() {
        0 => zero,
        1 => xs[0],
        n => {
            let (a, b) = xs.split_at(n / 2);
            pairwise_sum(a, zero) + pairwise_sum(b, zero)
        }
    }
}

/// Discrete-time hidden Markov model.
#[derive(Debug, Clone, PartialEq)]
pub struct Hmm {
    /// `transition[i][j] = P(x_{k+1} = j | x_k = i)`.
    pub transition: Vec<Vec<f64>>,
    /// `emission[i][y] = P(y_k = y | x_k = i)`.
    pub emission: Vec<Vec<f64>>,
    pub initial: ClassicalBelief,
}

impl Hmm {
    pub fn new(
        transition: Vec<Vec<f64>>,
        emission: Vec<Vec<f64>>,
        initial: ClassicalBelief,
    ) -> Result<Self> {
        let d = initial.len();
        if transition.len() != d || emission.len() != d {
            return Err(Error::validation("HMM tables do not match the state count"));
        }
        for row in &transition {
            let s: f64 = row.iter().sum();
            if row.len() != d || row.iter().any(|p| !(*p >= 0.0)) || (s - 1.0).abs() > 1e-10 {
                return Err(Error::validation(format!("transition row {row:?} is not stochastic")));
            }
        }
        let symbols = emission[0].len();
        for row in &emission {
            if row.len() != symbols || row.iter().any(|p| !(*p >= 0.0)) {
                return Err(Error::validation(format!("bad emission row {row:?}")));
            }
        }
        Ok(Hmm {
            transition,
            emission,
            initial,
        })
    }

    /// `T = 1 + Q dt` from off-diagonal rates `rates[i][j]` (i → j).
    pub fn from_rates(
        rates: &[Vec<f64>],
        dt: f64,
        emission: Vec<Vec<f64>>,
        initial: ClassicalBelief,
    ) -> Result<Self> {
        let d = rates.len();
        let mut t = vec![vec![0.0; d]; d];
        for i in 0..d {
            let mut out = 0.0;
            for j in 0..d {
                if i != j {
                    t[i][j] = rates[i][j] * dt;
                    out += t[i][j];
                }
            }
            t[i][i] = 1.0 - out;
        }
        Hmm::new(t, emission, initial)
    }

    pub fn states(&self) -> usize {
        self.initial.len()
    }

    /// `(e, g)` chain of the qubit with emission rate `γ`, absorption rate `ε`
    /// and an uninformative single-symbol record.
    pub fn qubit_photon(params: &ModelParams, dt: f64) -> Result<Self> {
        let pe = params.steady_excited_population();
        Hmm::from_rates(
            &[vec![0.0, params.gamma], vec![params.epsilon, 0.0]],
            dt,
            vec![vec![1.0], vec![1.0]],
            ClassicalBelief::new(vec![pe, 1.0 - pe])?,
        )
    }
}

fn likelihood(hmm: &Hmm, y: usize) -> Result<Vec<f64>> {
    hmm.emission
        .iter()
        .map(|row| {
            row.get(y)
                .copied()
                .ok_or_else(|| Error::validation(format!("symbol {y} outside the emission table")))
        })
        .collect()
}

/// Filtered beliefs `P(x_k | y_0..y_{k-1})` for `k = 0..=n`.
pub fn classical_hmm_filter(hmm: &Hmm, record: &[usize]) -> Result<Vec<ClassicalBelief>> {
    let d = hmm.states();
    let mut out = Vec::with_capacity(record.len() + 1);
    out.push(hmm.initial.clone());
    for (k, &y) in record.iter().enumerate() {
        let l = likelihood(hmm, y)?;
        let f = out[k].probs();
        let next: Vec<f64> = (0..d)
            .map(|j| (0..d).map(|i| f[i] * l[i] * hmm.transition[i][j]).sum())
            .collect();
        out.push(ClassicalBelief::from_weights(next).map_err(|_| {
            Error::InconsistentRecord(format!("record has zero likelihood at step {k}"))
        })?);
    }
    Ok(out)
}

/// Retrofiltered likelihoods `∝ P(y_k..y_{n-1}, final | x_k)` for `k = 0..=n`,
/// normalized to unit sum at each step.
pub fn classical_hmm_retrofilter(
    hmm: &Hmm,
    record: &[usize],
    final_effect: &ClassicalEffect,
) -> Result<Vec<ClassicalEffect>> {
    let d = hmm.states();
    if final_effect.len() != d {
        return Err(Error::validation("final effect has the wrong dimension"));
    }
    let n = record.len();
    let mut out = vec![final_effect.clone(); n + 1];
    for k in (0..n).rev() {
        let l = likelihood(hmm, record[k])?;
        let e = out[k + 1].values();
        let raw: Vec<f64> = (0..d)
            .map(|i| l[i] * (0..d).map(|j| hmm.transition[i][j] * e[j]).sum::<f64>())
            .collect();
        let s: f64 = raw.iter().sum();
        if !(s > 0.0) {
            return Err(Error::InconsistentRecord(format!(
                "future record impossible from every state at step {k}"
            )));
        }
        out[k] = ClassicalEffect::new(raw.into_iter().map(|v| v / s).collect())?;
    }
    Ok(out)
}

/// `wp_S(x;t) ∝ E_R(x;t) wp_F(x;t)` on aligned grids.
pub fn classical_hmm_smooth(
    filtered: &[ClassicalBelief],
    effects: &[ClassicalEffect],
) -> Result<Vec<ClassicalBelief>> {
    if filtered.len() != effects.len() {
        return Err(Error::validation(format!(
            "filter has {} points, retrofilter {}",
            filtered.len(),
            effects.len()
        )));
    }
    filtered
        .iter()
        .zip(effects)
        .enumerate()
        .map(|(k, (f, e))| {
            if f.len() != e.len() {
                return Err(Error::validation("belief and effect dimensions differ"));
            }
            let w = f.probs().iter().zip(e.values()).map(|(a, b)| a * b).collect();
            ClassicalBelief::from_weights(w).map_err(|_| {
                Error::InconsistentRecord(format!("filter and effect disjoint at step {k}"))
            })
        })
        .collect()
}

/// Largest commutator entry between the unit-trace representatives.
pub fn commutator_norm(rho: &DensityMatrix, e: &Effect) -> f64 {
    max_abs(&commutator(rho.matrix(), e.normalized().matrix()))
}

/// Smoothed state for commuting `ρ_F` and `E`: in the shared eigenbasis the
/// populations are `∝ E_m wp_F(m)`.
pub fn classical_quantum_smooth(rho_f: &DensityMatrix, e: &Effect) -> Result<DensityMatrix> {
    let c = commutator_norm(rho_f, e);
    if c > COMMUTATOR_TOL {
        return Err(Error::Precondition(format!(
            "filtered state and effect do not commute (|[ρ, E]| = {c:.3e})"
        )));
    }
    // Eigenbasis of whichever operator has a nondegenerate spectrum.
    let en = e.normalized();
    let [l0, l1] = hermitian_eigenvalues(en.matrix());
    let basis_of = if (l1 - l0).abs() > 1e-9 { *en.matrix() } else { *rho_f.matrix() };
    let eig = nalgebra::SymmetricEigen::new(basis_of);
    let v = eig.eigenvectors;
    let mut out = Mat2::zeros();
    let mut total = 0.0;
    for m in 0..2 {
        let col = v.column(m);
        let proj = col * col.adjoint();
        let w = trace_product(&proj, rho_f.matrix()) * trace_product(&proj, en.matrix());
        total += w;
        out += proj * ops::c(w);
    }
    if !(total > 0.0) {
        return Err(Error::InconsistentRecord(
            "filtered state and effect have disjoint support".into(),
        ));
    }
    DensityMatrix::new(out / ops::c(total))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwvState {
    /// `½(Eρ + ρE)/Tr[Eρ]`; Hermitian with unit trace, possibly indefinite.
    pub matrix: Mat2,
    pub min_eigenvalue: f64,
    pub psd: bool,
}

impl SwvState {
    pub fn bloch(&self) -> BlochVector {
        let m = &self.matrix;
        BlochVector::new(
            2.0 * m[(0, 1)].re,
            -2.0 * m[(0, 1)].im,
            (m[(0, 0)] - m[(1, 1)]).re,
        )
    }
}

/// Normalized Jordan product of the filtered state and the effect.
pub fn swv_state(rho_f: &DensityMatrix, e: &Effect) -> Result<SwvState> {
    let en = e.normalized();
    let jordan = anticommutator(en.matrix(), rho_f.matrix()) * ops::c(0.5);
    let norm = trace(&jordan).re;
    if !(norm > 0.0) {
        return Err(Error::InconsistentRecord(format!(
            "Tr[Eρ] = {norm:.3e} is not positive"
        )));
    }
    let matrix = jordan / ops::c(norm);
    let min_eigenvalue = hermitian_eigenvalues(&matrix)[0];
    Ok(SwvState {
        matrix,
        min_eigenvalue,
        psd: min_eigenvalue >= -crate::qubit::PSD_FLOOR,
    })
}

/// A filtered state / effect pair whose SWV operator is indefinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwvWitness {
    pub filtered: BlochVector,
    pub effect: BlochVector,
    pub min_eigenvalue: f64,
}

/// Brute-force scan over pairs of mixed x–z plane Bloch vectors (radii
/// `i/resolution` for `i < resolution`, angles on a `resolution` grid) for
/// the most negative SWV eigenvalue.
pub fn swv_indefinite_scan(resolution: usize) -> Result<SwvWitness> {
    let n = resolution.max(2);
    let mut best: Option<SwvWitness> = None;
    let point = |ri: usize, ti: usize| {
        let r = ri as f64 / n as f64;
        let t = ti as f64 * std::f64::consts::TAU / n as f64;
        BlochVector::new(r * t.sin(), 0.0, r * t.cos())
    };
    for ra in 1..n {
        // Rotational symmetry: fix the filtered state on +z.
        let a = point(ra, 0);
        let rho = DensityMatrix::from_bloch(a)?;
        for rb in 1..n {
            for tb in 0..n {
                let b = point(rb, tb);
                let e = Effect::from_bloch(1.0, b)?;
                if commutator_norm(&rho, &e) < COMMUTATOR_TOL {
                    continue;
                }
                let Ok(s) = swv_state(&rho, &e) else { continue };
                if best.is_none_or(|w| s.min_eigenvalue < w.min_eigenvalue) {
                    best = Some(SwvWitness {
                        filtered: a,
                        effect: b,
                        min_eigenvalue: s.min_eigenvalue,
                    });
                }
            }
        }
    }
    best.ok_or_else(|| Error::validation("scan found no non-commuting pair"))
}

/// `Σ_i w_i Tr[E ρ_i] ρ_i`, normalized, for a weighted family of states.
pub fn effect_weighted_mixture(
    states: &[DensityMatrix],
    weights: &[f64],
    e: &Effect,
) -> Result<DensityMatrix> {
    if states.len() != weights.len() {
        return Err(Error::validation("states and weights differ in length"));
    }
    let en = e.normalized();
    let w: Vec<f64> = states
        .iter()
        .zip(weights)
        .map(|(s, w)| w * en.expectation(s.matrix()))
        .collect();
    let total = pairwise_sum(&w, 0.0);
    if !(total > 0.0) {
        return Err(Error::InconsistentRecord("smoothing weights sum to zero".into()));
    }
    let terms: Vec<Mat2> = states
        .iter()
        .zip(&w)
        .map(|(s, wi)| s.matrix() * ops::c(*wi))
        .collect();
    DensityMatrix::new(pairwise_sum(&terms, Mat2::zeros()) / ops::c(total))
}

/// `ρ_S ∝ Δθ Σ_θ Tr[E ρ(θ)] p(θ) ρ(θ)`.
pub fn homodyne_smooth(p: &ThetaDistribution, e: &Effect) -> Result<DensityMatrix> {
    let states: Vec<DensityMatrix> = (0..p.len()).map(|i| pure_state_on_circle(p.theta(i))).collect();
    let weights: Vec<f64> = p.values().iter().map(|v| v * p.dtheta()).collect();
    effect_weighted_mixture(&states, &weights, e)
}

/// Second-order trigonometric moments of a θ density. Since
/// `Tr[E ρ(θ)]` is affine in `(sinθ, cosθ)`, these determine the homodyne
/// smoothed state for every effect.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleMoments {
    pub mass: f64,
    pub s: f64,
    pub c: f64,
    pub ss: f64,
    pub sc: f64,
    pub cc: f64,
}

impl CircleMoments {
    pub fn of(p: &ThetaDistribution) -> Self {
        let d = p.dtheta();
        let mut terms = [const { Vec::new() }; 6];
        for (i, v) in p.values().iter().enumerate() {
            let (s, c) = p.theta(i).sin_cos();
            let w = v * d;
            for (t, x) in terms.iter_mut().zip([w, w * s, w * c, w * s * s, w * s * c, w * c * c]) {
                t.push(x);
            }
        }
        let [mass, s, c, ss, sc, cc] = terms.map(|t| pairwise_sum(&t, 0.0));
        CircleMoments { mass, s, c, ss, sc, cc }
    }

    /// Same result as [`homodyne_smooth`] on the underlying density.
    pub fn smooth(&self, e: &Effect) -> Result<DensityMatrix> {
        let b = e.normalized().bloch();
        // Tr[E ρ(θ)] ∝ 1 + b_x sinθ + b_z cosθ for unit-trace E.
        let w = self.mass + b.x * self.s + b.z * self.c;
        if !(w > 0.0) {
            return Err(Error::InconsistentRecord("smoothing weights sum to zero".into()));
        }
        let x = (self.s + b.x * self.ss + b.z * self.sc) / w;
        let z = (self.c + b.x * self.sc + b.z * self.cc) / w;
        DensityMatrix::from_bloch(BlochVector::new(x, 0.0, z))
    }
}

/// `ρ_S ∝ Σ_θ Tr[E ρ(θ)] wp_θ ρ(θ)` over the ensemble states.
pub fn adaptive_smooth(pre: &PreEnsemble, e: &Effect) -> Result<DensityMatrix> {
    let states: Vec<DensityMatrix> = (0..PRE_SIZE).map(|i| pre.state(i)).collect();
    let rho = effect_weighted_mixture(&states, &pre.occupations, e)?;
    let bary = pre.barycentric(&rho.bloch());
    if bary.iter().any(|b| *b < -1e-6) {
        return Err(Error::validation(format!(
            "smoothed state left the ensemble triangle: {bary:?}"
        )));
    }
    Ok(rho)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McSmoothed {
    pub state: DensityMatrix,
    /// `(Σw)² / Σw²`.
    pub effective_samples: f64,
    pub low_effective_samples: bool,
}

/// Weighted average of sampled true states.
pub fn mc_smooth(states: &[DensityMatrix], weights: &[f64]) -> Result<McSmoothed> {
    if states.is_empty() || states.len() != weights.len() {
        return Err(Error::validation("need equally many states and weights"));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::validation("negative importance weight"));
    }
    let total = pairwise_sum(weights, 0.0);
    if !(total > 0.0) {
        return Err(Error::InconsistentRecord("importance weights sum to zero".into()));
    }
    let sq: Vec<f64> = weights.iter().map(|w| w * w).collect();
    let ess = total * total / pairwise_sum(&sq, 0.0);
    let terms: Vec<Mat2> = states
        .iter()
        .zip(weights)
        .map(|(s, w)| s.matrix() * ops::c(*w))
        .collect();
    let state = DensityMatrix::new(pairwise_sum(&terms, Mat2::zeros()) / ops::c(total))?;
    let low = ess < MIN_EFFECTIVE_SAMPLES;
    if low {
        warn!("importance weights degenerate: effective sample size {ess:.1}");
    }
    Ok(McSmoothed {
        state,
        effective_samples: ess,
        low_effective_samples: low,
    })
}

/// `Σ w Tr[(ρ_T - est)²] / Σ w`.
pub fn expected_cost(estimate: &Mat2, states: &[DensityMatrix], weights: &[f64]) -> Result<f64> {
    if states.len() != weights.len() || states.is_empty() {
        return Err(Error::validation("need equally many states and weights"));
    }
    let total = pairwise_sum(weights, 0.0);
    let terms: Vec<f64> = states
        .iter()
        .zip(weights)
        .map(|(s, w)| {
            let d = s.matrix() - estimate;
            w * trace_product(&d, &d)
        })
        .collect();
    Ok(pairwise_sum(&terms, 0.0) / total)
}

/// `E{P[ρ_T]} - P[ρ_C]`, the minimal expected cost, attained when the
/// conditioned state is the ensemble mean.
pub fn expected_cost_optimal(
    conditioned: &DensityMatrix,
    states: &[DensityMatrix],
    weights: &[f64],
) -> Result<f64> {
    let mean = mc_smooth(states, weights)?.state;
    let gap = max_abs(&(mean.matrix() - conditioned.matrix()));
    if gap > 1e-6 {
        return Err(Error::Precondition(format!(
            "conditioned state is not the ensemble mean (off by {gap:.3e})"
        )));
    }
    let total = pairwise_sum(weights, 0.0);
    let p: Vec<f64> = states.iter().zip(weights).map(|(s, w)| w * s.purity()).collect();
    Ok(pairwise_sum(&p, 0.0) / total - conditioned.purity())
}

/// Expected cost of reporting `ρ_F` when the truth is distributed with
/// mean `ρ_S` over pure states: `1 - 2Tr[ρ_F ρ_S] + P(ρ_F)`.
pub fn expected_cost_filtered_under_smoothing(rho_f: &DensityMatrix, rho_s: &DensityMatrix) -> f64 {
    1.0 - 2.0 * trace_product(rho_f.matrix(), rho_s.matrix()) + rho_f.purity()
}

/// Expected cost of the optimal estimate over pure true states: `1 - P(ρ)`.
pub fn pure_ensemble_cost(rho: &DensityMatrix) -> f64 {
    1.0 - rho.purity()
}

/// `Σ_{T,T'} w_T w_T' Tr[ρ_T ρ_T']` for normalized weights.
pub fn purity_overlap_expansion(states: &[DensityMatrix], weights: &[f64]) -> Result<f64> {
    if states.len() != weights.len() {
        return Err(Error::validation("states and weights differ in length"));
    }
    let s: f64 = weights.iter().sum();
    if (s - 1.0).abs() > 1e-10 {
        return Err(Error::validation(format!("weights sum to {s}")));
    }
    let mut rows = Vec::with_capacity(states.len());
    for (a, wa) in states.iter().zip(weights) {
        let r: Vec<f64> = states
            .iter()
            .zip(weights)
            .map(|(b, wb)| wa * wb * trace_product(a.matrix(), b.matrix()))
            .collect();
        rows.push(pairwise_sum(&r, 0.0));
    }
    Ok(pairwise_sum(&rows, 0.0))
}

/// `-Σ λ ln λ` with `0 ln 0 = 0`.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> f64 {
    rho.eigenvalues()
        .iter()
        .filter(|l| **l > 0.0)
        .map(|l| -l * l.ln())
        .sum()
}

/// Inputs for one smoothing evaluation; the variant fixes the scheme.
#[derive(Debug, Clone, Copy)]
pub enum SmoothingInputs<'a> {
    /// Two-state `(e, g)` classical belief and likelihood.
    Classical {
        filtered: &'a ClassicalBelief,
        effect: &'a ClassicalEffect,
    },
    Photon {
        filtered: &'a DensityMatrix,
        effect: &'a Effect,
    },
    Homodyne {
        density: &'a ThetaDistribution,
        effect: &'a Effect,
    },
    Adaptive {
        ensemble: &'a PreEnsemble,
        effect: &'a Effect,
    },
}

/// Dispatches to the matching smoother; classical results are embedded as
/// diagonal qubit states.
pub fn smooth(inputs: SmoothingInputs<'_>) -> Result<DensityMatrix> {
    match inputs {
        SmoothingInputs::Classical { filtered, effect } => {
            if filtered.len() != 2 {
                return Err(Error::validation("qubit embedding needs a two-state belief"));
            }
            let s = classical_hmm_smooth(std::slice::from_ref(filtered), std::slice::from_ref(effect))?;
            DensityMatrix::diagonal(s[0].probs()[0])
        }
        SmoothingInputs::Photon { filtered, effect } => classical_quantum_smooth(filtered, effect),
        SmoothingInputs::Homodyne { density, effect } => homodyne_smooth(density, effect),
        SmoothingInputs::Adaptive { ensemble, effect } => adaptive_smooth(ensemble, effect),
    }
}

/// Monte Carlo smoothed states for the window before Alice's detection at
/// the end of `grid`.
#[derive(Debug, Clone)]
pub struct McWindow {
    /// Grid indices of the reported states.
    pub checkpoints: Vec<usize>,
    pub smoothed: Vec<McSmoothed>,
    /// Plain ensemble means (the filtered estimate).
    pub unweighted: Vec<DensityMatrix>,
}

/// Samples `count` stationary true-state trajectories over `grid` and
/// weights each by its probability `⟨e|ρ_T|e⟩` of producing Alice's
/// detection at the end of the window. Alice's record in the window is
/// empty, which has unit likelihood with `δ → 0`.
pub fn mc_pre_jump_smooth(
    scheme: &Scheme,
    params: &ModelParams,
    grid: &TimeGrid,
    count: usize,
    seed: u64,
    checkpoints: &[usize],
) -> Result<McWindow> {
    if params.effective_delta() > 0.0 {
        return Err(Error::Config("Monte Carlo smoothing assumes δ → 0".into()));
    }
    if checkpoints.iter().any(|&k| k > grid.steps()) {
        return Err(Error::Config("checkpoint beyond the window".into()));
    }
    let samples = ensemble_map(count, seed, |_, rng| {
        let start = stationary_start(scheme, params, grid.dt(), rng)?;
        let mut at = vec![DensityMatrix::ground(); checkpoints.len()];
        let mut last = DensityMatrix::ground();
        simulate_true(scheme, params, grid, start, rng, |k, t| {
            for (slot, &c) in at.iter_mut().zip(checkpoints) {
                if c == k {
                    *slot = *t;
                }
            }
            if k == grid.steps() {
                last = *t;
            }
        })?;
        Ok((at, last.excited_population()))
    })?;
    let weights: Vec<f64> = samples.iter().map(|(_, w)| *w).collect();
    let ones = vec![1.0; samples.len()];
    let mut smoothed = Vec::with_capacity(checkpoints.len());
    let mut unweighted = Vec::with_capacity(checkpoints.len());
    for i in 0..checkpoints.len() {
        let states: Vec<DensityMatrix> = samples.iter().map(|(s, _)| s[i]).collect();
        smoothed.push(mc_smooth(&states, &weights)?);
        unweighted.push(mc_smooth(&states, &ones)?.state);
    }
    Ok(McWindow {
        checkpoints: checkpoints.to_vec(),
        smoothed,
        unweighted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qubit::ModelParams;
    use crate::retrofilter::{pre_jump_backward_pass, RetroConfig};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive enumeration of hidden paths: filtered and smoothed marginals.
    fn brute_force(
        hmm: &Hmm,
        record: &[usize],
        final_effect: &[f64],
    ) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let d = hmm.states();
        let n = record.len();
        let paths = d.pow((n + 1) as u32);
        let mut filt = vec![vec![0.0; d]; n + 1];
        let mut smooth = vec![vec![0.0; d]; n + 1];
        for code in 0..paths {
            let x: Vec<usize> = (0..=n).map(|k| (code / d.pow(k as u32)) % d).collect();
            // Probability of the path and of the first k emissions.
            let mut prefix = vec![0.0; n + 1];
            let mut p = hmm.initial.probs()[x[0]];
            prefix[0] = p;
            for k in 0..n {
                p *= hmm.emission[x[k]][record[k]] * hmm.transition[x[k]][x[k + 1]];
                prefix[k + 1] = p;
            }
            let full = p * final_effect[x[n]];
            for k in 0..=n {
                smooth[k][x[k]] += full;
            }
            // Count each prefix once: only the all-zero continuation adds it.
            for k in 0..=n {
                if x[k + 1..].iter().all(|&s| s == 0) {
                    filt[k][x[k]] += prefix[k];
                }
            }
        }
        let norm = |v: &mut Vec<f64>| {
            let s: f64 = v.iter().sum();
            v.iter_mut().for_each(|x| *x /= s);
        };
        filt.iter_mut().for_each(norm);
        smooth.iter_mut().for_each(norm);
        (filt, smooth)
    }

    fn random_hmm(rng: &mut ChaCha8Rng, d: usize, symbols: usize) -> Hmm {
        let mut row = |m: usize| {
            let w: Vec<f64> = (0..m).map(|_| rng.random::<f64>() + 0.05).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|x| x / s).collect::<Vec<f64>>()
        };
        let transition = (0..d).map(|_| row(d)).collect();
        let emission = (0..d).map(|_| row(symbols)).collect();
        let initial = ClassicalBelief::new(row(d)).unwrap();
        Hmm::new(transition, emission, initial).unwrap()
    }

    #[test]
    fn hmm_matches_path_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 1..=8 {
            for d in [2, 3] {
                let hmm = random_hmm(&mut rng, d, 3);
                let record: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
                let fin: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
                let (bf, bs) = brute_force(&hmm, &record, &fin);
                let f = classical_hmm_filter(&hmm, &record).unwrap();
                let e = classical_hmm_retrofilter(
                    &hmm,
                    &record,
                    &ClassicalEffect::new(fin.clone()).unwrap(),
                )
                .unwrap();
                let s = classical_hmm_smooth(&f, &e).unwrap();
                for k in 0..=n {
                    for i in 0..d {
                        assert!((f[k].probs()[i] - bf[k][i]).abs() < 1e-12);
                        assert!((s[k].probs()[i] - bs[k][i]).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn uninformative_record_follows_rate_equation() {
        let p = ModelParams::reference();
        let dt = 1e-3;
        let mut hmm = Hmm::qubit_photon(&p, dt).unwrap();
        hmm.initial = ClassicalBelief::new(vec![0.0, 1.0]).unwrap();
        let f = classical_hmm_filter(&hmm, &[0; 100]).unwrap();
        let mut pg = 1.0;
        for b in f.iter().skip(1) {
            pg += dt * crate::lindblad::classical_rate_rhs(&p, pg);
            assert_abs_diff_eq!(b.probs()[1], pg, epsilon = 1e-13);
        }
    }

    #[test]
    fn deterministic_emission_collapses_belief() {
        let hmm = Hmm::new(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            ClassicalBelief::uniform(2),
        )
        .unwrap();
        let f = classical_hmm_filter(&hmm, &[1]).unwrap();
        assert_eq!(f[1].probs(), &[0.0, 1.0]);
        let bad = classical_hmm_filter(&hmm, &[1, 0]);
        assert!(matches!(bad, Err(Error::InconsistentRecord(_))));
    }

    #[test]
    fn smoothing_with_trivial_and_indicator_effects() {
        let f = vec![ClassicalBelief::new(vec![0.3, 0.7]).unwrap()];
        let s = classical_hmm_smooth(&f, &[ClassicalEffect::uniform(2)]).unwrap();
        assert_eq!(s[0], f[0]);
        let s = classical_hmm_smooth(&f, &[ClassicalEffect::new(vec![1.0, 0.0]).unwrap()]).unwrap();
        assert_eq!(s[0].probs(), &[1.0, 0.0]);
        let z = ClassicalEffect::new(vec![0.0, 1.0]).unwrap();
        let one = vec![ClassicalBelief::new(vec![1.0, 0.0]).unwrap()];
        assert!(matches!(
            classical_hmm_smooth(&one, &[z]),
            Err(Error::InconsistentRecord(_))
        ));
    }

    #[test]
    fn commuting_smoother_examples() {
        let rho = DensityMatrix::diagonal(0.2).unwrap();
        assert_eq!(classical_quantum_smooth(&rho, &Effect::identity()).unwrap(), rho);
        let e = Effect::diagonal(1.0, 0.0).unwrap();
        let s = classical_quantum_smooth(&rho, &e).unwrap();
        assert_abs_diff_eq!(s.excited_population(), 1.0);
        let off = Effect::from_bloch(1.0, BlochVector::new(0.5, 0.0, 0.0)).unwrap();
        assert!(matches!(
            classical_quantum_smooth(&rho, &off),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn commuting_smoother_on_rotated_basis() {
        let rho = DensityMatrix::from_bloch(BlochVector::new(0.6, 0.0, 0.0)).unwrap();
        let e = Effect::from_bloch(2.0, BlochVector::new(-0.5, 0.0, 0.0)).unwrap();
        let s = classical_quantum_smooth(&rho, &e).unwrap();
        let w = swv_state(&rho, &e).unwrap();
        assert!(max_abs(&(s.matrix() - w.matrix)) < 1e-12);
    }

    #[test]
    fn pre_jump_smoothing_reaches_excited_state() {
        let p = ModelParams::reference();
        let rho = DensityMatrix::diagonal(p.steady_excited_population()).unwrap();
        let effects = pre_jump_backward_pass(1000, &p, &RetroConfig::default(), 1e-3).unwrap();
        let s = classical_quantum_smooth(&rho, &effects[1000]).unwrap();
        assert_abs_diff_eq!(s.excited_population(), 1.0);
        let early = classical_quantum_smooth(&rho, &effects[0]).unwrap();
        assert!(early.excited_population() < s.excited_population());
    }

    #[test]
    fn photon_scenario_three_way_equivalence() {
        let p = ModelParams::reference();
        let dt = 1e-3;
        let n = 3000;
        let hmm = Hmm::qubit_photon(&p, dt).unwrap();
        let record = vec![0usize; n];
        let f = classical_hmm_filter(&hmm, &record).unwrap();
        let e = classical_hmm_retrofilter(&hmm, &record, &ClassicalEffect::new(vec![1.0, 0.0]).unwrap())
            .unwrap();
        let cs = classical_hmm_smooth(&f, &e).unwrap();
        let qe = pre_jump_backward_pass(n, &p, &RetroConfig::default(), dt).unwrap();
        let mut rho = DensityMatrix::diagonal(p.steady_excited_population()).unwrap();
        for k in 0..=n {
            if k > 0 {
                rho = crate::trajectories::alice_filter_step(&rho, false, &p, dt).unwrap();
            }
            let a = classical_quantum_smooth(&rho, &qe[k]).unwrap();
            let b = swv_state(&rho, &qe[k]).unwrap();
            assert!(b.psd);
            assert!(max_abs(&(a.matrix() - b.matrix)) < 1e-9);
            assert!((a.excited_population() - cs[k].probs()[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn swv_examples() {
        let rho = DensityMatrix::from_bloch(BlochVector::new(0.0, 0.0, 0.9)).unwrap();
        let w = swv_state(&rho, &Effect::identity()).unwrap();
        assert!(w.psd && max_abs(&(w.matrix - rho.matrix())) < 1e-15);
        let e = Effect::from_bloch(1.0, BlochVector::new(0.9, 0.0, 0.0)).unwrap();
        let w = swv_state(&rho, &e).unwrap();
        assert!(!w.psd);
        // Bloch vector (a + b)/(1 + a·b) has length 0.9√2.
        assert_abs_diff_eq!(w.min_eigenvalue, 0.5 * (1.0 - 0.9 * 2f64.sqrt()), epsilon = 1e-12);
        let scan = swv_indefinite_scan(21).unwrap();
        assert!(scan.min_eigenvalue < -1e-3);
        let dark = Effect::diagonal(0.0, 1.0).unwrap();
        assert!(matches!(
            swv_state(&DensityMatrix::excited(), &dark),
            Err(Error::InconsistentRecord(_))
        ));
    }

    #[test]
    fn homodyne_smoother_examples() {
        let p = crate::fpe::ThetaDistribution::gaussian(256, 2.0, 0.3).unwrap();
        let s = homodyne_smooth(&p, &Effect::identity()).unwrap().bloch();
        assert_abs_diff_eq!(s.x, p.mean_sin(), epsilon = 1e-12);
        assert_abs_diff_eq!(s.z, p.mean_cos(), epsilon = 1e-12);
        let sym = crate::fpe::ThetaDistribution::gaussian(256, std::f64::consts::PI, 0.3).unwrap();
        let s = homodyne_smooth(&sym, &crate::retrofilter::pre_jump_effect()).unwrap();
        assert!(s.bloch().x.abs() < 1e-12);
    }

    #[test]
    fn moment_smoother_matches_direct_sum() {
        let p = crate::fpe::ThetaDistribution::gaussian(512, 2.5, 0.4).unwrap();
        let m = CircleMoments::of(&p);
        for e in [
            Effect::identity(),
            crate::retrofilter::pre_jump_effect(),
            Effect::from_bloch(3.0, BlochVector::new(0.3, 0.2, -0.6)).unwrap(),
        ] {
            let a = homodyne_smooth(&p, &e).unwrap();
            let b = m.smooth(&e).unwrap();
            assert!(max_abs(&(a.matrix() - b.matrix())) < 1e-12);
        }
    }

    #[test]
    fn adaptive_smoother_examples() {
        let p = ModelParams::reference();
        let pre = PreEnsemble::published(&p).unwrap();
        let s = adaptive_smooth(&pre, &Effect::identity()).unwrap();
        assert_abs_diff_eq!(s.excited_population(), 1.0 / 21.0, epsilon = 1e-9);
        let e = Effect::diagonal(1.0, 0.0).unwrap();
        let s = adaptive_smooth(&pre, &e).unwrap();
        let w: Vec<f64> = (0..3)
            .map(|i| pre.occupations[i] * pre.state(i).excited_population())
            .collect();
        let tot: f64 = w.iter().sum();
        let x: f64 = (0..3).map(|i| w[i] * pre.angles[i].sin()).sum::<f64>() / tot;
        assert_abs_diff_eq!(s.bloch().x, x, epsilon = 1e-12);
    }

    #[test]
    fn mc_smooth_examples() {
        let states = [DensityMatrix::excited(), DensityMatrix::ground()];
        let m = mc_smooth(&states, &[1.0, 1.0]).unwrap();
        assert_eq!(m.state, DensityMatrix::maximally_mixed());
        assert!(m.low_effective_samples);
        assert!(matches!(
            mc_smooth(&states, &[0.0, 0.0]),
            Err(Error::InconsistentRecord(_))
        ));
    }

    #[test]
    fn cost_examples() {
        let pure = crate::qubit::pure_state_on_circle(1.1);
        assert_abs_diff_eq!(
            expected_cost_optimal(&pure, &[pure, pure], &[0.5, 0.5]).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        let states = [DensityMatrix::excited(), DensityMatrix::ground()];
        let mixed = DensityMatrix::maximally_mixed();
        assert_abs_diff_eq!(expected_cost_optimal(&mixed, &states, &[1.0, 1.0]).unwrap(), 0.5);
        assert!(expected_cost_optimal(&DensityMatrix::excited(), &states, &[1.0, 1.0]).is_err());
        assert_abs_diff_eq!(
            expected_cost_filtered_under_smoothing(&mixed, &DensityMatrix::excited()),
            0.5
        );
        let s = DensityMatrix::diagonal(0.3).unwrap();
        assert_abs_diff_eq!(
            expected_cost_filtered_under_smoothing(&s, &s),
            pure_ensemble_cost(&s),
            epsilon = 1e-15
        );
    }

    #[test]
    fn overlap_expansion_examples() {
        let a = crate::qubit::pure_state_on_circle(0.4);
        assert_abs_diff_eq!(purity_overlap_expansion(&[a], &[1.0]).unwrap(), 1.0, epsilon = 1e-15);
        let w = 0.3;
        let v = purity_overlap_expansion(
            &[DensityMatrix::excited(), DensityMatrix::ground()],
            &[w, 1.0 - w],
        )
        .unwrap();
        assert_abs_diff_eq!(v, w * w + (1.0 - w) * (1.0 - w), epsilon = 1e-15);
        assert_abs_diff_eq!(purity_overlap_expansion(&[a, a], &[0.5, 0.5]).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn entropy_examples_and_ordering() {
        assert_abs_diff_eq!(von_neumann_entropy(&DensityMatrix::excited()), 0.0);
        assert_abs_diff_eq!(
            von_neumann_entropy(&DensityMatrix::maximally_mixed()),
            2f64.ln(),
            epsilon = 1e-15
        );
        let states: Vec<DensityMatrix> = (1..100)
            .map(|i| DensityMatrix::from_bloch(BlochVector::new(0.0, 0.0, i as f64 / 100.0)).unwrap())
            .collect();
        for w in states.windows(2) {
            assert!(w[1].purity() > w[0].purity());
            assert!(von_neumann_entropy(&w[1]) < von_neumann_entropy(&w[0]));
        }
    }

    fn random_states(seed: u64, n: usize) -> (Vec<DensityMatrix>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let states = (0..n)
            .map(|_| crate::qubit::pure_state_on_circle(rng.random_range(0.0..std::f64::consts::TAU)))
            .collect();
        let w = (0..n).map(|_| rng.random::<f64>()).collect();
        (states, w)
    }

    #[test]
    fn weighted_mean_minimizes_expected_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for seed in 0..5 {
            let (states, w) = random_states(seed, 200);
            let best = mc_smooth(&states, &w).unwrap().state;
            let c0 = expected_cost(best.matrix(), &states, &w).unwrap();
            for _ in 0..100 {
                let r = best.bloch();
                let d = BlochVector::new(
                    r.x + rng.random_range(-0.1..0.1),
                    0.0,
                    r.z + rng.random_range(-0.1..0.1),
                );
                let Ok(other) = DensityMatrix::from_bloch(d) else { continue };
                assert!(expected_cost(other.matrix(), &states, &w).unwrap() >= c0);
            }
            let opt = expected_cost_optimal(&best, &states, &w).unwrap();
            assert_abs_diff_eq!(opt, c0, epsilon = 1e-12);
        }
    }

    #[test]
    fn pairwise_sum_is_fixed_tree() {
        let xs: Vec<f64> = (0..1000).map(|i| 1.0 / (i as f64 + 1.0)).collect();
        assert_eq!(pairwise_sum(&xs, 0.0), pairwise_sum(&xs.clone(), 0.0));
        assert_abs_diff_eq!(pairwise_sum(&xs, 0.0), xs.iter().sum::<f64>(), epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn overlap_expansion_is_purity_of_mean(seed in 0u64..1000, n in 1usize..20) {
            let (states, w) = random_states(seed, n);
            let total: f64 = w.iter().sum();
            let w: Vec<f64> = w.iter().map(|x| x / total).collect();
            let mean = mc_smooth(&states, &w).unwrap().state;
            let v = purity_overlap_expansion(&states, &w).unwrap();
            prop_assert!((v - mean.purity()).abs() < 1e-10);
        }

        #[test]
        fn smoothers_are_scale_invariant(s in 1e-4f64..1e4, bx in -0.6f64..0.6, bz in -0.6f64..0.6) {
            let pre = PreEnsemble::published(&ModelParams::reference()).unwrap();
            let e = Effect::from_bloch(1.0, BlochVector::new(bx, 0.0, bz)).unwrap();
            let es = e.scaled(s).unwrap();
            let a = adaptive_smooth(&pre, &e).unwrap();
            let b = adaptive_smooth(&pre, &es).unwrap();
            prop_assert!(max_abs(&(a.matrix() - b.matrix())) < 1e-9);
            let rho = DensityMatrix::from_bloch(BlochVector::new(0.2, 0.0, -0.5)).unwrap();
            let a = swv_state(&rho, &e).unwrap();
            let b = swv_state(&rho, &es).unwrap();
            prop_assert!(max_abs(&(a.matrix - b.matrix)) < 1e-9);
        }

        #[test]
        fn entropy_and_purity_sort_identically(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut states: Vec<DensityMatrix> = (0..30)
                .map(|_| {
                    let r: f64 = rng.random_range(0.0..1.0);
                    let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                    DensityMatrix::from_bloch(BlochVector::new(r * t.sin(), 0.0, r * t.cos())).unwrap()
                })
                .collect();
            states.sort_by(|a, b| a.purity().total_cmp(&b.purity()));
            for w in states.windows(2) {
                prop_assert!(von_neumann_entropy(&w[0]) >= von_neumann_entropy(&w[1]) - 1e-12);
            }
        }
    }
}

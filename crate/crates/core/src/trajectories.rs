//! Record sampling and forward propagation of true and filtered states.
//!
//! Alice counts photons on the `√δ σ₋` channel. Bob monitors the remaining
//! channels `√γ σ₋`, `√ε σ₊` by photon counting, X-homodyne detection, or
//! adaptive WLO photodetection. The filtered state only sees Alice's record;
//! the true state sees both.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fpe::{diffusion_b, drift_a};
use crate::lindblad::{dissipator, superop_g, superop_h, LindbladSet};
use crate::pre_solver::{PreEnsemble, PRE_SIZE};
use crate::qubit::{ops, trace, BlochVector, DensityMatrix, Mat2, ModelParams, C64};

/// Largest per-step jump probability accepted by the samplers.
pub const MAX_STEP_JUMP_PROBABILITY: f64 = 0.1;

/// Uniform time grid `t_k = t_start + k·dt`, `k = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_start: f64,
    t_end: f64,
    dt: f64,
    steps: usize,
}

impl TimeGrid {
    /// Requires `(t_end - t_start)/dt` to be a whole number to 1e-9 relative.
    pub fn new(t_start: f64, t_end: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !(t_end > t_start) || !t_start.is_finite() || !t_end.is_finite() {
            return Err(Error::Config(format!(
                "invalid grid [{t_start}, {t_end}) with dt = {dt}"
            )));
        }
        let n = (t_end - t_start) / dt;
        let steps = n.round();
        if (n - steps).abs() > 1e-9 * n.max(1.0) || steps < 1.0 {
            return Err(Error::Config(format!(
                "window length {} is not a whole number of steps of {dt}",
                t_end - t_start
            )));
        }
        Ok(TimeGrid {
            t_start,
            t_end,
            dt,
            steps: steps as usize,
        })
    }

    /// Shrinks `nominal_dt` just enough to fit a whole number of steps.
    pub fn fitted(t_start: f64, t_end: f64, nominal_dt: f64) -> Result<Self> {
        if !(nominal_dt > 0.0) || !(t_end > t_start) {
            return Err(Error::Config(format!(
                "invalid grid [{t_start}, {t_end}) with dt = {nominal_dt}"
            )));
        }
        let steps = ((t_end - t_start) / nominal_dt).round().max(1.0);
        TimeGrid::new(t_start, t_end, (t_end - t_start) / steps)
    }

    /// `[-10/(γ+ε), 0)` with `t = 0` at Alice's jump.
    pub fn pre_jump_window(params: &ModelParams, nominal_dt: f64) -> Result<Self> {
        TimeGrid::fitted(-10.0 / params.relaxation_rate(), 0.0, nominal_dt)
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.t_end
        } else {
            self.t_start + k as f64 * self.dt
        }
    }

    /// All `steps + 1` grid times.
    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }
}

/// Local-oscillator phases for Bob's two homodyne detectors.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HomodyneConfig {
    pub phi_gamma: f64,
    pub phi_epsilon: f64,
}

/// Bob's measurement scheme.
#[derive(Debug, Clone, PartialEq)]
pub enum Scheme {
    Photon,
    Homodyne(HomodyneConfig),
    Adaptive(PreEnsemble),
}

impl Scheme {
    pub fn tag(&self) -> SchemeTag {
        match self {
            Scheme::Photon => SchemeTag::Photon,
            Scheme::Homodyne(_) => SchemeTag::Homodyne,
            Scheme::Adaptive(_) => SchemeTag::Adaptive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeTag {
    Photon,
    Homodyne,
    Adaptive,
}

/// Bob's per-step increments.
#[derive(Debug, Clone, PartialEq)]
pub enum UnobservedRecord {
    Jumps { gamma: Vec<u8>, epsilon: Vec<u8> },
    Wiener { gamma: Vec<f64>, epsilon: Vec<f64> },
    Adaptive { minus: Vec<u8>, plus: Vec<u8> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub scheme: SchemeTag,
    pub dt: f64,
    /// Alice's jump flags.
    pub observed: Vec<u8>,
    pub unobserved: UnobservedRecord,
}

impl TrajectoryRecord {
    fn empty(scheme: SchemeTag, dt: f64, steps: usize) -> Self {
        let unobserved = match scheme {
            SchemeTag::Photon => UnobservedRecord::Jumps {
                gamma: Vec::with_capacity(steps),
                epsilon: Vec::with_capacity(steps),
            },
            SchemeTag::Homodyne => UnobservedRecord::Wiener {
                gamma: Vec::with_capacity(steps),
                epsilon: Vec::with_capacity(steps),
            },
            SchemeTag::Adaptive => UnobservedRecord::Adaptive {
                minus: Vec::with_capacity(steps),
                plus: Vec::with_capacity(steps),
            },
        };
        TrajectoryRecord {
            scheme,
            dt,
            observed: Vec::with_capacity(steps),
            unobserved,
        }
    }

    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }
}

fn jump_to(target: DensityMatrix, rho: &DensityMatrix, what: &str) -> Result<DensityMatrix> {
    let p = match what {
        "emission" => rho.excited_population(),
        _ => rho.ground_population(),
    };
    if !(p > 0.0) {
        return Err(Error::ImpossibleJump(format!(
            "{what} from a state with zero population ({p:.3e})"
        )));
    }
    Ok(target)
}

/// One step of Alice's filter. A detection collapses to `|g⟩⟨g|`; otherwise
/// an Euler step of `𝒟[c_u]ρ - ½ℋ[c_o†c_o]ρ`.
pub fn alice_filter_step(
    rho_f: &DensityMatrix,
    dn_o: bool,
    params: &ModelParams,
    dt: f64,
) -> Result<DensityMatrix> {
    if dn_o {
        // The σ₋ collapse is imposed even when δ is treated as zero.
        return jump_to(DensityMatrix::ground(), rho_f, "emission");
    }
    let rho = rho_f.matrix();
    let c_o = LindbladSet::alice(params);
    let drift = dissipator(&LindbladSet::unobserved(params), rho)
        - superop_h(&[c_o.adjoint() * c_o], rho) * ops::c(0.5);
    DensityMatrix::from_unnormalized(rho + drift * ops::c(dt))
}

/// `d p_g/dt` for the diagonal filtered state: `γ(1-p_g) - ε p_g + δ(1-p_g)p_g`.
pub fn filtered_ode_rhs(params: &ModelParams, p_g: f64) -> f64 {
    params.gamma * (1.0 - p_g) - params.epsilon * p_g
        + params.effective_delta() * (1.0 - p_g) * p_g
}

/// One step of the true state under photon counting on all three channels.
pub fn bob_photon_true_step(
    rho_t: &DensityMatrix,
    dn_o: bool,
    dn_gamma: bool,
    dn_epsilon: bool,
    params: &ModelParams,
    dt: f64,
) -> Result<DensityMatrix> {
    let mut rho = *rho_t;
    let mut jumped = false;
    if dn_o {
        rho = jump_to(DensityMatrix::ground(), &rho, "emission")?;
        jumped = true;
    }
    if dn_gamma {
        rho = DensityMatrix::from_unnormalized(
            rho.matrix() + superop_g(&ops::sigma_minus(), rho.matrix())?,
        )?;
        jumped = true;
    }
    if dn_epsilon {
        rho = DensityMatrix::from_unnormalized(
            rho.matrix() + superop_g(&ops::sigma_plus(), rho.matrix())?,
        )?;
        jumped = true;
    }
    if jumped {
        return Ok(rho);
    }
    let all = LindbladSet::model(params);
    let no_jump: Vec<Mat2> = all
        .operators()
        .iter()
        .map(|c| c.adjoint() * c * ops::c(0.5))
        .collect();
    let m = rho.matrix();
    DensityMatrix::from_unnormalized(m - superop_h(&no_jump, m) * ops::c(dt))
}

fn measured_operators(params: &ModelParams, cfg: &HomodyneConfig) -> [Mat2; 2] {
    let set = LindbladSet::unobserved(params);
    let ops_ = set.operators();
    [
        ops_[0] * C64::from_polar(1.0, cfg.phi_gamma),
        ops_[1] * C64::from_polar(1.0, cfg.phi_epsilon),
    ]
}

/// One step of the true state under homodyne detection of both of Bob's
/// channels. Uses the Kraus form
/// `M = 1 - ½Σc†c dt + Σ c_k dy_k + ½Σ c_k c_l (dy_k dy_l - δ_kl dt)` with
/// `dy_k = ⟨c_k + c_k†⟩dt + dW_k`, which agrees with the Euler-Maruyama
/// step of the diffusive SME to first order and keeps pure states pure.
pub fn bob_homodyne_true_step(
    rho_t: &DensityMatrix,
    dw_gamma: f64,
    dw_epsilon: f64,
    params: &ModelParams,
    cfg: &HomodyneConfig,
    dt: f64,
) -> Result<DensityMatrix> {
    let rho = rho_t.matrix();
    let l = measured_operators(params, cfg);
    let dw = [dw_gamma, dw_epsilon];
    let dy: Vec<f64> = (0..2)
        .map(|k| trace(&(l[k] * rho + rho * l[k].adjoint())).re * dt + dw[k])
        .collect();
    let mut m = Mat2::identity();
    for k in 0..2 {
        m -= l[k].adjoint() * l[k] * ops::c(0.5 * dt);
        m += l[k] * ops::c(dy[k]);
        for j in 0..2 {
            let ito = if j == k { dt } else { 0.0 };
            m += l[k] * l[j] * ops::c(0.5 * (dy[k] * dy[j] - ito));
        }
    }
    let next = m * rho * m.adjoint();
    let tr = trace(&next).re;
    if !(tr > 0.0) || !tr.is_finite() {
        return Err(Error::StepSize(format!(
            "homodyne update lost the state norm (trace {tr:.3e})"
        )));
    }
    DensityMatrix::from_unnormalized(next)
}

/// Drift of the Bloch vector under X-homodyne detection (`y = 0` plane).
pub fn homodyne_bloch_drift(r: &BlochVector, params: &ModelParams) -> BlochVector {
    let (g, e) = (params.gamma, params.epsilon);
    BlochVector::new(
        -0.5 * (g + e) * r.x,
        -0.5 * (g + e) * r.y,
        -g * (1.0 + r.z) + e * (1.0 - r.z),
    )
}

/// Coefficients of `dW_γ` and `dW_ε` in the Bloch SDE (`y = 0` plane).
pub fn homodyne_bloch_diffusion(
    r: &BlochVector,
    params: &ModelParams,
) -> (BlochVector, BlochVector) {
    let (sg, se) = (params.gamma.sqrt(), params.epsilon.sqrt());
    (
        BlochVector::new(sg * (1.0 + r.z - r.x * r.x), 0.0, -sg * r.x * (1.0 + r.z)),
        BlochVector::new(se * (1.0 - r.z - r.x * r.x), 0.0, se * r.x * (1.0 - r.z)),
    )
}

/// Homodyne current times `dt` on one of Bob's channels (0 = γ, 1 = ε):
/// `⟨c e^{iφ} + c† e^{-iφ}⟩dt + dW`.
pub fn homodyne_current(
    rho_t: &DensityMatrix,
    params: &ModelParams,
    cfg: &HomodyneConfig,
    channel: usize,
    dw: f64,
    dt: f64,
) -> Result<f64> {
    if channel > 1 {
        return Err(Error::validation(format!("no homodyne channel {channel}")));
    }
    let l = measured_operators(params, cfg)[channel];
    let rho = rho_t.matrix();
    Ok(trace(&(l * rho + rho * l.adjoint())).re * dt + dw)
}

/// Euler-Maruyama step of the angle Langevin equation, reduced mod 2π.
pub fn theta_langevin_step(
    theta: f64,
    dw_gamma: f64,
    dw_epsilon: f64,
    params: &ModelParams,
    dt: f64,
) -> f64 {
    let (bg, be) = diffusion_b(theta, params);
    (theta + drift_a(theta, params) * dt + bg * dw_gamma + be * dw_epsilon)
        .rem_euclid(std::f64::consts::TAU)
}

/// Cyclic step of the adaptive scheme: any detection advances the ensemble
/// index, otherwise it stays.
pub fn adaptive_true_step(index: usize, jumped: bool, pre: &PreEnsemble) -> Result<usize> {
    let _ = pre;
    if index >= PRE_SIZE {
        return Err(Error::validation(format!("ensemble index {index} out of range")));
    }
    Ok(if jumped { (index + 1) % PRE_SIZE } else { index })
}

/// Per-trajectory RNG: stream `index` of the ChaCha generator keyed by `master_seed`.
pub fn trajectory_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

fn wiener(rng: &mut impl Rng, dt: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    z * dt.sqrt()
}

fn check_step(scheme: &Scheme, params: &ModelParams, dt: f64) -> Result<()> {
    let rate = match scheme {
        Scheme::Photon => params.effective_delta() + params.gamma + params.epsilon,
        Scheme::Homodyne(_) => params.effective_delta(),
        Scheme::Adaptive(pre) => {
            if params.effective_delta() > 0.0 {
                return Err(Error::Config(
                    "the adaptive scheme is only simulated with δ → 0".into(),
                ));
            }
            pre.exit_rates(params).into_iter().fold(0.0, f64::max)
        }
    };
    let p = rate * dt;
    if p > MAX_STEP_JUMP_PROBABILITY {
        return Err(Error::Config(format!(
            "dt = {dt} gives a per-step jump probability of {p:.3}, above {MAX_STEP_JUMP_PROBABILITY}"
        )));
    }
    Ok(())
}

/// State of Bob's true-state simulation between steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrueState {
    Density(DensityMatrix),
    Ensemble(usize),
}

/// Where a simulation starts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Start {
    pub true_state: TrueState,
    pub filtered: DensityMatrix,
}

impl Start {
    pub fn density(rho_t: DensityMatrix, rho_f: DensityMatrix) -> Self {
        Start {
            true_state: TrueState::Density(rho_t),
            filtered: rho_f,
        }
    }
}

/// Samples a start from Bob's stationary ensemble with the filter at its
/// steady state. Homodyne starts burn in from `|g⟩` for `10/(γ+ε)`.
pub fn stationary_start(
    scheme: &Scheme,
    params: &ModelParams,
    dt: f64,
    rng: &mut impl Rng,
) -> Result<Start> {
    let steady = DensityMatrix::diagonal(params.steady_excited_population())?;
    let true_state = match scheme {
        Scheme::Photon => {
            let excited = rng.random::<f64>() < params.steady_excited_population();
            TrueState::Density(if excited {
                DensityMatrix::excited()
            } else {
                DensityMatrix::ground()
            })
        }
        Scheme::Homodyne(cfg) => {
            let steps = (10.0 / params.relaxation_rate() / dt).ceil() as usize;
            let mut rho = DensityMatrix::ground();
            for _ in 0..steps {
                let (a, b) = (wiener(rng, dt), wiener(rng, dt));
                rho = bob_homodyne_true_step(&rho, a, b, params, cfg, dt)?;
            }
            TrueState::Density(rho)
        }
        Scheme::Adaptive(pre) => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut idx = PRE_SIZE - 1;
            for (i, w) in pre.occupations.iter().enumerate() {
                acc += w;
                if u < acc {
                    idx = i;
                    break;
                }
            }
            TrueState::Ensemble(idx)
        }
    };
    Ok(Start {
        true_state,
        filtered: if matches!(scheme, Scheme::Adaptive(_)) {
            pre_mixture(scheme)?
        } else {
            steady
        },
    })
}

fn pre_mixture(scheme: &Scheme) -> Result<DensityMatrix> {
    match scheme {
        Scheme::Adaptive(pre) => pre.mixture(),
        _ => unreachable!("only called for the adaptive scheme"),
    }
}

/// Runs one trajectory over `grid`, calling `observe(k, true, filtered)`
/// at every grid point `k = 0..=steps`.
pub fn simulate(
    scheme: &Scheme,
    params: &ModelParams,
    grid: &TimeGrid,
    start: Start,
    rng: &mut impl Rng,
    observe: impl FnMut(usize, &DensityMatrix, &DensityMatrix),
) -> Result<TrajectoryRecord> {
    run(scheme, params, grid, start, rng, true, observe)
}

/// Like [`simulate`] but without propagating the filtered state; `observe`
/// sees only the true state.
pub fn simulate_true(
    scheme: &Scheme,
    params: &ModelParams,
    grid: &TimeGrid,
    start: Start,
    rng: &mut impl Rng,
    mut observe: impl FnMut(usize, &DensityMatrix),
) -> Result<TrajectoryRecord> {
    run(scheme, params, grid, start, rng, false, |k, t, _| observe(k, t))
}

fn is_pole(rho: &DensityMatrix) -> bool {
    *rho == DensityMatrix::ground() || *rho == DensityMatrix::excited()
}

fn run(
    scheme: &Scheme,
    params: &ModelParams,
    grid: &TimeGrid,
    start: Start,
    rng: &mut impl Rng,
    track_filtered: bool,
    mut observe: impl FnMut(usize, &DensityMatrix, &DensityMatrix),
) -> Result<TrajectoryRecord> {
    let dt = grid.dt();
    check_step(scheme, params, dt)?;
    let mut record = TrajectoryRecord::empty(scheme.tag(), dt, grid.steps());
    let mut rho_f = start.filtered;
    let mut state = start.true_state;
    let delta = params.effective_delta();

    let density = |s: &TrueState| -> Result<DensityMatrix> {
        match (s, scheme) {
            (TrueState::Density(r), _) => Ok(*r),
            (TrueState::Ensemble(i), Scheme::Adaptive(pre)) => Ok(pre.state(*i)),
            _ => Err(Error::validation("ensemble index outside the adaptive scheme")),
        }
    };

    for k in 0..grid.steps() {
        let rho_t = density(&state)?;
        observe(k, &rho_t, &rho_f);

        // Alice's channel.
        let dn_o = delta > 0.0 && rng.random::<f64>() < delta * rho_t.excited_population() * dt;
        record.observed.push(dn_o as u8);
        if track_filtered || dn_o {
            rho_f = alice_filter_step(&rho_f, dn_o, params, dt)?;
        }
        let rho_t = if dn_o {
            bob_photon_true_step(&rho_t, true, false, false, params, dt)?
        } else {
            rho_t
        };

        state = match (scheme, &mut record.unobserved) {
            (Scheme::Photon, UnobservedRecord::Jumps { gamma, epsilon }) => {
                let mut rho = rho_t;
                let dn_g = rng.random::<f64>() < params.gamma * rho.excited_population() * dt;
                if dn_g {
                    rho = bob_photon_true_step(&rho, false, true, false, params, dt)?;
                }
                let dn_e = rng.random::<f64>() < params.epsilon * rho.ground_population() * dt;
                if dn_e {
                    rho = bob_photon_true_step(&rho, false, false, true, params, dt)?;
                }
                // Poles are fixed points of the no-jump evolution.
                if !(dn_o || dn_g || dn_e || is_pole(&rho)) {
                    rho = bob_photon_true_step(&rho, false, false, false, params, dt)?;
                }
                gamma.push(dn_g as u8);
                epsilon.push(dn_e as u8);
                TrueState::Density(rho)
            }
            (Scheme::Homodyne(cfg), UnobservedRecord::Wiener { gamma, epsilon }) => {
                let (a, b) = (wiener(rng, dt), wiener(rng, dt));
                gamma.push(a);
                epsilon.push(b);
                TrueState::Density(bob_homodyne_true_step(&rho_t, a, b, params, cfg, dt)?)
            }
            (Scheme::Adaptive(pre), UnobservedRecord::Adaptive { minus, plus }) => {
                let TrueState::Ensemble(idx) = state else {
                    return Err(Error::validation("adaptive scheme needs an ensemble start"));
                };
                let (r_minus, r_plus) = pre.operators(idx, params).channel_rates(pre.angles[idx]);
                let dn_m = rng.random::<f64>() < r_minus * dt;
                let dn_p = !dn_m && rng.random::<f64>() < r_plus * dt;
                minus.push(dn_m as u8);
                plus.push(dn_p as u8);
                TrueState::Ensemble(adaptive_true_step(idx, dn_m || dn_p, pre)?)
            }
            _ => unreachable!("record layout follows the scheme"),
        };
    }
    observe(grid.steps(), &density(&state)?, &rho_f);
    Ok(record)
}

/// One trajectory with full true and filtered paths (`steps + 1` points each).
#[derive(Debug, Clone)]
pub struct SampledTrajectory {
    pub record: TrajectoryRecord,
    pub true_states: Vec<DensityMatrix>,
    pub filtered: Vec<DensityMatrix>,
}

/// Samples one trajectory from a stationary start; deterministic in `seed`.
pub fn sample_trajectory(
    scheme: &Scheme,
    params: &ModelParams,
    grid: &TimeGrid,
    seed: u64,
) -> Result<SampledTrajectory> {
    check_step(scheme, params, grid.dt())?;
    let mut rng = trajectory_rng(seed, 0);
    let start = stationary_start(scheme, params, grid.dt(), &mut rng)?;
    sample_from(scheme, params, grid, start, &mut rng)
}

pub fn sample_from(
    scheme: &Scheme,
    params: &ModelParams,
    grid: &TimeGrid,
    start: Start,
    rng: &mut impl Rng,
) -> Result<SampledTrajectory> {
    let mut true_states = Vec::with_capacity(grid.steps() + 1);
    let mut filtered = Vec::with_capacity(grid.steps() + 1);
    let record = simulate(scheme, params, grid, start, rng, |_, t, f| {
        true_states.push(*t);
        filtered.push(*f);
    })?;
    Ok(SampledTrajectory {
        record,
        true_states,
        filtered,
    })
}

/// Runs `f` for trajectories `0..count` in parallel, each with its own RNG
/// stream, and returns the results in index order.
pub fn ensemble_map<T, F>(count: usize, master_seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut ChaCha8Rng) -> Result<T> + Sync,
{
    (0..count)
        .into_par_iter()
        .map(|i| f(i, &mut trajectory_rng(master_seed, i as u64)))
        .collect()
}

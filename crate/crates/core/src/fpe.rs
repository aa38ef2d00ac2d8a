//! Fokker-Planck solver for the density of the Bloch-circle angle θ under
//! X-homodyne monitoring with no detections by Alice:
//!
//! ```text
//! ∂ₜp = -∂_θ[A p] + ½ Σ_k ∂²_θ[B_k² p]
//! ```
//!
//! Method of lines on a periodic grid with central differences in flux form
//! (conservative to round-off) and classical RK4 in time.

use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::output::Dataset;
use crate::qubit::ModelParams;

pub const DEFAULT_GRID: usize = 512;
pub const MIN_GRID: usize = 128;
/// Initial variance in rad².
pub const DEFAULT_INIT_VARIANCE: f64 = 0.01;

/// `A(θ) = sinθ[½(γ+ε)cosθ + (γ-ε)]`.
pub fn drift_a(theta: f64, params: &ModelParams) -> f64 {
    let (g, e) = (params.gamma, params.epsilon);
    let (s, c) = theta.sin_cos();
    s * (0.5 * (g + e) * c + (g - e))
}

/// `(B_γ, B_ε) = (√γ(1+cosθ), -√ε(1-cosθ))`.
pub fn diffusion_b(theta: f64, params: &ModelParams) -> (f64, f64) {
    let c = theta.cos();
    (params.gamma.sqrt() * (1.0 + c), -params.epsilon.sqrt() * (1.0 - c))
}

fn total_b2(theta: f64, params: &ModelParams) -> f64 {
    let (a, b) = diffusion_b(theta, params);
    a * a + b * b
}

/// Density over `θ_i = i·2π/N`, `i = 0..N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaDistribution {
    values: Vec<f64>,
}

impl ThetaDistribution {
    /// Validates: at least [`MIN_GRID`] points, values ≥ -1e-12 (then
    /// clipped), unit mass to 1e-6.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < MIN_GRID {
            return Err(Error::Config(format!(
                "θ grid needs at least {MIN_GRID} points, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= -1e-12)) {
            return Err(Error::validation(format!("negative density {v:.3e}")));
        }
        let d = ThetaDistribution {
            values: values.into_iter().map(|v| v.max(0.0)).collect(),
        };
        let m = d.mass();
        if (m - 1.0).abs() > 1e-6 {
            return Err(Error::validation(format!("density has mass {m}")));
        }
        Ok(d)
    }

    /// Clips negatives and rescales to unit mass.
    pub fn normalized(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        let clipped: Vec<f64> = values.into_iter().map(|v| v.max(0.0)).collect();
        let mass: f64 = clipped.iter().sum::<f64>() * TAU / n as f64;
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::validation(format!("cannot normalize density of mass {mass}")));
        }
        ThetaDistribution::new(clipped.into_iter().map(|v| v / mass).collect())
    }

    pub fn uniform(n: usize) -> Result<Self> {
        ThetaDistribution::new(vec![1.0 / TAU; n])
    }

    /// Wrapped Gaussian with the given mean and variance (rad²).
    pub fn gaussian(n: usize, mean: f64, variance: f64) -> Result<Self> {
        if !(variance > 0.0) {
            return Err(Error::Config(format!("variance must be positive, got {variance}")));
        }
        let dtheta = TAU / n as f64;
        let images = 2 + (6.0 * variance.sqrt() / TAU).ceil() as i32;
        let values = (0..n)
            .map(|i| {
                let th = i as f64 * dtheta;
                (-images..=images)
                    .map(|k| {
                        let d = th - mean + k as f64 * TAU;
                        (-0.5 * d * d / variance).exp()
                    })
                    .sum::<f64>()
            })
            .collect();
        ThetaDistribution::normalized(values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dtheta(&self) -> f64 {
        TAU / self.values.len() as f64
    }

    pub fn theta(&self, i: usize) -> f64 {
        i as f64 * self.dtheta()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dtheta()
    }

    /// `Δθ Σ f(θ_i) p_i`.
    pub fn expectation(&self, f: impl Fn(f64) -> f64) -> f64 {
        let d = self.dtheta();
        self.values
            .iter()
            .enumerate()
            .map(|(i, p)| f(i as f64 * d) * p)
            .sum::<f64>()
            * d
    }

    pub fn mean_cos(&self) -> f64 {
        self.expectation(f64::cos)
    }

    pub fn mean_sin(&self) -> f64 {
        self.expectation(f64::sin)
    }

    /// `Δθ Σ |p_i - q_i|`.
    pub fn l1_distance(&self, other: &ThetaDistribution) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::validation("distributions on different grids"));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * self.dtheta())
    }

    /// Largest `|p(θ) - p(2π - θ)|`.
    pub fn mirror_asymmetry(&self) -> f64 {
        let n = self.len();
        (1..n)
            .map(|i| (self.values[i] - self.values[n - i]).abs())
            .fold(0.0, f64::max)
    }

    /// Probability mass in `bins` equal arcs starting at θ = 0. Grid points
    /// are assigned to the arc containing them.
    pub fn binned(&self, bins: usize) -> Vec<f64> {
        let mut out = vec![0.0; bins];
        let d = self.dtheta();
        for (i, p) in self.values.iter().enumerate() {
            let b = ((i as f64 * d / TAU * bins as f64) as usize).min(bins - 1);
            out[b] += p * d;
        }
        out
    }

    /// Snapshot table with columns `theta, density`.
    pub fn to_dataset(&self, name: &str) -> Dataset {
        let mut d = Dataset::new(name, &["theta", "density"]);
        for (i, p) in self.values.iter().enumerate() {
            d.push(vec![self.theta(i), *p]);
        }
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpeConfig {
    pub n: usize,
    pub dt: f64,
    pub init_mean: f64,
    pub init_variance: f64,
}

impl FpeConfig {
    pub fn new(
        n: usize,
        dt: f64,
        init_mean: f64,
        init_variance: f64,
        params: &ModelParams,
    ) -> Result<Self> {
        let cfg = FpeConfig {
            n,
            dt,
            init_mean,
            init_variance,
        };
        cfg.validate(params)?;
        Ok(cfg)
    }

    /// `N = 512`, 90% of the stability bound, Gaussian at π with 0.01 rad².
    pub fn standard(params: &ModelParams) -> Result<Self> {
        let n = DEFAULT_GRID;
        FpeConfig::new(
            n,
            0.9 * stability_bound(n, params),
            PI,
            DEFAULT_INIT_VARIANCE,
            params,
        )
    }

    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        if self.n < MIN_GRID {
            return Err(Error::Config(format!(
                "θ grid needs at least {MIN_GRID} points, got {}",
                self.n
            )));
        }
        let bound = stability_bound(self.n, params);
        if !(self.dt > 0.0) || self.dt > bound {
            return Err(Error::Config(format!(
                "FPE dt = {} outside (0, {bound:.4e}] for N = {}",
                self.dt, self.n
            )));
        }
        if !(self.init_variance > 0.0) {
            return Err(Error::Config(format!(
                "initial variance must be positive, got {}",
                self.init_variance
            )));
        }
        Ok(())
    }

    pub fn initial(&self) -> Result<ThetaDistribution> {
        ThetaDistribution::gaussian(self.n, self.init_mean, self.init_variance)
    }
}

/// `Δθ² / (2 max_θ Σ_k B_k²)` over the grid.
pub fn stability_bound(n: usize, params: &ModelParams) -> f64 {
    let dtheta = TAU / n as f64;
    let max_b2 = (0..n)
        .map(|i| total_b2(i as f64 * dtheta, params))
        .fold(0.0, f64::max);
    dtheta * dtheta / (2.0 * max_b2)
}

/// Precomputed drift and diffusion on a fixed grid.
#[derive(Debug, Clone)]
pub struct FpeSolver {
    drift: Vec<f64>,
    diffusion: Vec<f64>,
    dt: f64,
}

impl FpeSolver {
    pub fn new(params: &ModelParams, cfg: &FpeConfig) -> Result<Self> {
        cfg.validate(params)?;
        let dtheta = TAU / cfg.n as f64;
        let thetas = (0..cfg.n).map(|i| i as f64 * dtheta);
        Ok(FpeSolver {
            drift: thetas.clone().map(|t| drift_a(t, params)).collect(),
            diffusion: thetas.map(|t| total_b2(t, params)).collect(),
            dt: cfg.dt,
        })
    }

    /// Arbitrary coefficients `A_i` and `Σ_k B_k²` on the grid. The stability
    /// bound is enforced against the supplied diffusion.
    pub fn from_coefficients(drift: Vec<f64>, diffusion: Vec<f64>, dt: f64) -> Result<Self> {
        let n = drift.len();
        if n < MIN_GRID || diffusion.len() != n {
            return Err(Error::Config("coefficient arrays must share a grid of ≥ 128".into()));
        }
        let dtheta = TAU / n as f64;
        let max_b2 = diffusion.iter().cloned().fold(0.0, f64::max);
        if max_b2 > 0.0 && dt > dtheta * dtheta / (2.0 * max_b2) {
            return Err(Error::Config(format!("FPE dt = {dt} violates the stability bound")));
        }
        Ok(FpeSolver {
            drift,
            diffusion,
            dt,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn rhs(&self, p: &[f64], out: &mut [f64]) {
        let n = p.len();
        let dtheta = TAU / n as f64;
        let adv = 1.0 / (2.0 * dtheta);
        let dif = 0.5 / (dtheta * dtheta);
        for i in 0..n {
            let l = if i == 0 { n - 1 } else { i - 1 };
            let r = if i + 1 == n { 0 } else { i + 1 };
            out[i] = -adv * (self.drift[r] * p[r] - self.drift[l] * p[l])
                + dif
                    * (self.diffusion[r] * p[r] - 2.0 * self.diffusion[i] * p[i]
                        + self.diffusion[l] * p[l]);
        }
    }

    fn rk4(&self, p: &mut Vec<f64>, h: f64, scratch: &mut [Vec<f64>; 5]) {
        let n = p.len();
        let [k1, k2, k3, k4, tmp] = scratch;
        self.rhs(p, k1);
        for i in 0..n {
            tmp[i] = p[i] + 0.5 * h * k1[i];
        }
        self.rhs(tmp, k2);
        for i in 0..n {
            tmp[i] = p[i] + 0.5 * h * k2[i];
        }
        self.rhs(tmp, k3);
        for i in 0..n {
            tmp[i] = p[i] + h * k3[i];
        }
        self.rhs(tmp, k4);
        for i in 0..n {
            p[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }

    fn check_grid(&self, p: &ThetaDistribution) -> Result<()> {
        if p.len() != self.drift.len() {
            return Err(Error::Config(format!(
                "distribution has {} points, solver {}",
                p.len(),
                self.drift.len()
            )));
        }
        Ok(())
    }

    fn finish(values: Vec<f64>) -> Result<ThetaDistribution> {
        if values.iter().any(|v| *v < -1e-12) {
            ThetaDistribution::normalized(values)
        } else {
            ThetaDistribution::new(values.into_iter().map(|v| v.max(0.0)).collect())
        }
    }

    /// One RK4 step of length `dt`.
    pub fn step(&self, p: &ThetaDistribution) -> Result<ThetaDistribution> {
        self.check_grid(p)?;
        let mut v = p.values.clone();
        let mut scratch = std::array::from_fn(|_| vec![0.0; v.len()]);
        self.rk4(&mut v, self.dt, &mut scratch);
        Self::finish(v)
    }

    /// Advances by `duration` using whole steps no longer than `dt`.
    pub fn advance(&self, p: &ThetaDistribution, duration: f64) -> Result<ThetaDistribution> {
        self.check_grid(p)?;
        if duration < 0.0 {
            return Err(Error::Config(format!("negative duration {duration}")));
        }
        if duration == 0.0 {
            return Ok(p.clone());
        }
        let steps = (duration / self.dt).ceil().max(1.0) as usize;
        let h = duration / steps as f64;
        let mut v = p.values.clone();
        let mut scratch = std::array::from_fn(|_| vec![0.0; v.len()]);
        for k in 0..steps {
            self.rk4(&mut v, h, &mut scratch);
            // Round-off clipping without touching the mass.
            if k % 1024 == 1023 && v.iter().any(|x| *x < -1e-12) {
                v = ThetaDistribution::normalized(v)?.values;
            }
        }
        Self::finish(v)
    }

    /// Advances by `duration` and returns snapshots at the requested
    /// (ascending, within `[0, duration]`) times along with the final state.
    pub fn evolve_to(
        &self,
        p: &ThetaDistribution,
        duration: f64,
        snapshot_times: &[f64],
    ) -> Result<(ThetaDistribution, Vec<ThetaDistribution>)> {
        let mut now = 0.0;
        let mut cur = p.clone();
        let mut snaps = Vec::with_capacity(snapshot_times.len());
        for &t in snapshot_times {
            if t < now || t > duration {
                return Err(Error::Config(format!(
                    "snapshot time {t} outside [{now}, {duration}] or unsorted"
                )));
            }
            cur = self.advance(&cur, t - now)?;
            now = t;
            snaps.push(cur.clone());
        }
        let end = self.advance(&cur, duration - now)?;
        Ok((end, snaps))
    }

    /// Evolves in chunks of `interval` until successive chunks differ by
    /// less than `tol` in L1, or `max_duration` is exceeded.
    pub fn stationary(
        &self,
        p: &ThetaDistribution,
        interval: f64,
        tol: f64,
        max_duration: f64,
    ) -> Result<ThetaDistribution> {
        let mut cur = p.clone();
        let mut elapsed = 0.0;
        while elapsed < max_duration {
            let next = self.advance(&cur, interval)?;
            elapsed += interval;
            if next.l1_distance(&cur)? < tol {
                return Ok(next);
            }
            cur = next;
        }
        Err(Error::StepSize(format!(
            "no stationary density within {max_duration} time units"
        )))
    }
}

/// One explicit step; rebuilds the coefficient tables each call.
pub fn fpe_step(
    p: &ThetaDistribution,
    params: &ModelParams,
    cfg: &FpeConfig,
) -> Result<ThetaDistribution> {
    FpeSolver::new(params, cfg)?.step(p)
}

/// Stationary density of the discretized no-jump dynamics on an `n`-point
/// grid, from the zero-flux condition between neighbouring cells:
///
/// ```text
/// p_{i+1} = p_i (S_i/Δθ + A_i) / (S_{i+1}/Δθ - A_{i+1}),   S = Σ_k B_k²
/// ```
///
/// This is the exact null vector of the semi-discrete operator the time
/// stepper uses, so it costs O(n) and large grids are cheap.
pub fn zero_flux_stationary(params: &ModelParams, n: usize) -> Result<ThetaDistribution> {
    params.validate()?;
    if n < MIN_GRID {
        return Err(Error::Config(format!(
            "θ grid needs at least {MIN_GRID} points, got {n}"
        )));
    }
    let dtheta = TAU / n as f64;
    let a: Vec<f64> = (0..n).map(|i| drift_a(i as f64 * dtheta, params)).collect();
    let s: Vec<f64> = (0..n).map(|i| total_b2(i as f64 * dtheta, params)).collect();
    // Log space: the density spans many decades near θ = 0.
    let mut log_p = vec![0.0; n + 1];
    for i in 0..n {
        let j = (i + 1) % n;
        let num = s[i] / dtheta + a[i];
        let den = s[j] / dtheta - a[j];
        if !(num > 0.0 && den > 0.0) {
            return Err(Error::Config(format!(
                "θ grid of {n} points too coarse for a positive stationary density"
            )));
        }
        log_p[i + 1] = log_p[i] + num.ln() - den.ln();
    }
    // The mirror symmetry of A and S closes the loop; anything else means
    // the parameters admit a circulating stationary flux.
    if log_p[n].abs() > 1e-8 {
        return Err(Error::validation(format!(
            "zero-flux recurrence does not close (log mismatch {:.3e})",
            log_p[n]
        )));
    }
    let peak = log_p[..n].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    ThetaDistribution::normalized(log_p[..n].iter().map(|l| (l - peak).exp()).collect())
}

/// Stationary density on the grid of `cfg`.
pub fn stationary_density(params: &ModelParams, cfg: &FpeConfig) -> Result<ThetaDistribution> {
    cfg.validate(params)?;
    zero_flux_stationary(params, cfg.n)
}

/// Stationary density by time evolution from the initial density of `cfg`.
pub fn stationary_density_by_evolution(
    params: &ModelParams,
    cfg: &FpeConfig,
    tol: f64,
) -> Result<ThetaDistribution> {
    let solver = FpeSolver::new(params, cfg)?;
    let relax = 1.0 / params.relaxation_rate();
    solver.stationary(&cfg.initial()?, 2.0 * relax, tol, 80.0 * relax)
}

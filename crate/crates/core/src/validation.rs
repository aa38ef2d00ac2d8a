//! Invariant checks run by `qsmooth validate`.

use crate::error::{Error, Result};
use crate::fpe::{stability_bound, stationary_density_by_evolution, zero_flux_stationary, FpeConfig};
use crate::pre_solver::PreEnsemble;
use crate::qubit::{check_completeness, max_abs, DensityMatrix, Effect, ModelParams};
use crate::retrofilter::{
    alice_operators, backward_pass, codiagonality_oracle, forward_backward_trace,
    forward_unnormalized_step, homodyne_operator_set, photon_operator_set, RetroConfig,
};
use crate::scenarios::{PreJumpWindow, Preset, ScenarioConfig};
use crate::smoother::{
    expected_cost_filtered_under_smoothing, pure_ensemble_cost, swv_indefinite_scan, swv_state,
};
use crate::trajectories::{alice_filter_step, sample_trajectory, Scheme, TimeGrid};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

/// Diagonality and forward/backward consistency along one record of
/// Alice's photon detections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordReport {
    pub jumps: usize,
    pub filtered_offdiagonal: f64,
    pub effect_offdiagonal: f64,
    /// `max |Tr[ρ̃_k E_k] / Tr[ρ̃_0 E_0] - 1|`.
    pub trace_drift: f64,
}

/// Runs the filter forward and the effect backward over `observed`, both
/// from diagonal boundary conditions.
pub fn photon_record_report(
    observed: &[u8],
    params: &ModelParams,
    dt: f64,
) -> Result<RecordReport> {
    let n = observed.len();
    let cfg = RetroConfig {
        zeta: 0.0,
        renormalize_each_step: false,
    };
    let effects = backward_pass(observed, Effect::identity(), params, &cfg, dt)?;
    let mut rho = DensityMatrix::diagonal(params.steady_excited_population())?;
    let mut unnorm = *rho.matrix();
    let t0 = forward_backward_trace(&unnorm, &effects[0]);
    let mut report = RecordReport {
        jumps: observed.iter().filter(|f| **f != 0).count(),
        filtered_offdiagonal: rho.coherence(),
        effect_offdiagonal: effects[0].coherence(),
        trace_drift: 0.0,
    };
    for k in 0..n {
        let jump = observed[k] != 0;
        rho = alice_filter_step(&rho, jump, params, dt)?;
        unnorm = forward_unnormalized_step(&unnorm, jump, params, cfg.zeta, dt);
        let e = &effects[k + 1];
        report.filtered_offdiagonal = report.filtered_offdiagonal.max(rho.coherence());
        report.effect_offdiagonal = report
            .effect_offdiagonal
            .max(e.coherence() / e.trace());
        let tr = forward_backward_trace(&unnorm, e);
        report.trace_drift = report.trace_drift.max((tr / t0 - 1.0).abs());
    }
    Ok(report)
}

/// Alice's records from Bob-photon-detection trajectories with finite `δ`.
pub fn random_alice_records(
    params: &ModelParams,
    count: usize,
    steps: usize,
    dt: f64,
    seed: u64,
) -> Result<Vec<Vec<u8>>> {
    let grid = TimeGrid::new(0.0, steps as f64 * dt, dt)?;
    (0..count)
        .map(|i| {
            sample_trajectory(&Scheme::Photon, params, &grid, seed.wrapping_add(i as u64))
                .map(|t| t.record.observed)
        })
        .collect()
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    match f() {
        Ok((passed, detail)) => Check {
            name,
            passed,
            detail,
        },
        Err(e) => Check {
            name,
            passed: false,
            detail: e.to_string(),
        },
    }
}

/// The invariant suite at the reference parameters. Takes a few seconds.
pub fn run_checks() -> Vec<Check> {
    let params = ModelParams::reference();
    let finite = ModelParams::new(2.0, 1.0, 0.05).expect("valid rates");
    let dt = 1e-2;
    let mut out = Vec::new();

    out.push(check("operator-completeness", || {
        for set in [
            alice_operators(&finite, dt)?,
            photon_operator_set(&params, dt)?,
            homodyne_operator_set(&params, dt)?,
        ] {
            check_completeness(&set)?;
        }
        Ok((true, "Σ M†M = 1 for Alice, photon and homodyne outcome sets".into()))
    }));

    out.push(check("photon-codiagonality", || {
        let a = alice_operators(&finite, dt)?;
        let bob = photon_operator_set(&finite, dt)?;
        let mut worst: f64 = 0.0;
        for m in &a {
            let r = codiagonality_oracle(m, &bob)?;
            worst = worst.max(r.max_violation);
            if !r.codiagonal {
                return Ok((false, format!("violation {:.3e}", r.max_violation)));
            }
        }
        let hom = homodyne_operator_set(&finite, dt)?;
        let detects = codiagonality_oracle(&a[0], &hom)?.max_violation > 1e-6;
        Ok((
            detects,
            format!("photon violation {worst:.1e}; homodyne flagged: {detects}"),
        ))
    }));

    out.push(check("record-diagonality-and-trace", || {
        let records = random_alice_records(&finite, 20, 1000, dt, 7)?;
        let mut worst = (0.0f64, 0.0f64, 0.0f64);
        let mut jumps = 0;
        for r in &records {
            let rep = photon_record_report(r, &finite, dt)?;
            jumps += rep.jumps;
            worst.0 = worst.0.max(rep.filtered_offdiagonal);
            worst.1 = worst.1.max(rep.effect_offdiagonal);
            worst.2 = worst.2.max(rep.trace_drift);
        }
        let ok = worst.0 < 1e-10 && worst.1 < 1e-10 && worst.2 < 1e-6;
        Ok((
            ok,
            format!(
                "20 records, {jumps} detections: off-diagonals {:.1e}/{:.1e}, trace drift {:.1e}",
                worst.0, worst.1, worst.2
            ),
        ))
    }));

    out.push(check("classical-equivalence-and-cost", || {
        let w = PreJumpWindow::new(&params, dt)?;
        let s = w.classical()?;
        let mut gap: f64 = 0.0;
        let mut violations = 0;
        for k in 0..w.len() {
            let swv = swv_state(&w.filtered[k], &w.effects[k])?;
            gap = gap.max(max_abs(&(swv.matrix - s[k].matrix())));
            if pure_ensemble_cost(&s[k]) > expected_cost_filtered_under_smoothing(&w.filtered[k], &s[k]) {
                violations += 1;
            }
        }
        Ok((
            gap < 1e-9 && violations == 0,
            format!("SWV gap {gap:.1e}, cost violations {violations}"),
        ))
    }));

    out.push(check("homodyne-symmetry", || {
        let w = PreJumpWindow::new(&params, dt)?;
        let p = zero_flux_stationary(&params, 4096)?;
        let worst = w
            .homodyne(&p)?
            .iter()
            .map(|r| {
                let b = r.bloch();
                b.x.abs().max(b.y.abs())
            })
            .fold(0.0, f64::max);
        Ok((worst < 1e-3, format!("max |x|, |y| = {worst:.1e}")))
    }));

    out.push(check("pre-ensemble", || {
        let pre = PreEnsemble::published(&params)?;
        let mix = pre.mixture()?;
        let err = (mix.excited_population() - params.steady_excited_population())
            .abs()
            .max(mix.coherence());
        let defect = (0..3)
            .map(|i| pre.operators(i, &params).unravelling_defect(&params))
            .fold(0.0, f64::max);
        Ok((
            err < 1e-6 && defect < 1e-10,
            format!("mixture error {err:.1e}, unravelling defect {defect:.1e}"),
        ))
    }));

    out.push(check("adaptive-triangle", || {
        let w = PreJumpWindow::new(&params, dt)?;
        let pre = PreEnsemble::published(&params)?;
        let min = w
            .adaptive(&pre)?
            .iter()
            .flat_map(|r| pre.barycentric(&r.bloch()))
            .fold(f64::INFINITY, f64::min);
        Ok((min >= -1e-6, format!("min barycentric coordinate {min:.3e}")))
    }));

    out.push(check("fpe-stationary", || {
        let n = 128;
        let cfg = FpeConfig::new(n, 0.9 * stability_bound(n, &params), std::f64::consts::PI, 0.01, &params)?;
        let evolved = stationary_density_by_evolution(&params, &cfg, 1e-9)?;
        let l1 = evolved.l1_distance(&zero_flux_stationary(&params, n)?)?;
        let fine = zero_flux_stationary(&params, 8192)?.mean_cos();
        let target = 2.0 * params.steady_excited_population() - 1.0;
        Ok((
            l1 < 1e-6 && (fine - target).abs() < 1e-5,
            format!("evolved vs zero-flux L1 {l1:.1e}; E[cos θ] {fine:.7} vs {target:.7}"),
        ))
    }));

    out.push(check("swv-indefinite", || {
        let w = swv_indefinite_scan(21)?;
        Ok((
            w.min_eigenvalue < -1e-3,
            format!("min eigenvalue {:.4}", w.min_eigenvalue),
        ))
    }));

    out.push(check("config-round-trip", || {
        for p in Preset::ALL {
            let cfg = ScenarioConfig::new(p);
            if ScenarioConfig::parse(&cfg.to_text())? != cfg {
                return Err(Error::validation(format!("{p} does not round-trip")));
            }
        }
        Ok((true, "all presets".into()))
    }));

    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invariant_suite_passes() {
        for c in run_checks() {
            assert!(c.passed, "{c}");
        }
    }

    #[test]
    fn record_report_examples() {
        let p = ModelParams::new(0.5, 1.0, 0.05).unwrap();
        let rep = photon_record_report(&[0, 0, 1, 0, 0, 0, 1, 0], &p, 1e-2).unwrap();
        assert_eq!(rep.jumps, 2);
        assert!(rep.trace_drift < 1e-12);
        assert_eq!(rep.filtered_offdiagonal, 0.0);
    }
}

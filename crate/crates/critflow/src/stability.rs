//! Mild-solution evolution of a perturbation `w = u - U` around a frozen
//! stationary solution, by two independent discretizations of the same
//! integral equation, plus the weighted decay functionals measured on the
//! resulting traces.
//!
//! Scheme `PerturbedSemigroup` marches
//! `w(t+dt) = E w(t) - int_0^dt E(dt-s) P div(w (x) w) ds` with
//! `E = e^{-A dt}` realized as a Strang split (exact heat half-steps around
//! the exponential of the bounded perturbation) and trapezoidal Duhamel
//! quadrature. Scheme `HeatDuhamel` keeps the heat factor exact and moves
//! every background term into the Duhamel integrand. Both are second order
//! and target the same mild solution, so their agreement is a
//! discretization certificate.

use crate::error::{Error, Result};
use crate::fit::loglog_slope;
use crate::grid::{RealField, SpectralField};
use crate::norms::Estimator;
use crate::operator::{op_a, op_b_spectral, PerturbedOperator};
use crate::profiles;
use crate::spectral::{
    div_dealiased_sym_product_spectral, forward_transform, fractional_laplacian_spectral,
    inverse_transform_unchecked, leray_project_spectral, require_mean_zero,
    spectral_divergence_max,
};
use crate::stationary::{picard_solve, ForceSpec, SolveStatus};

/// Which mild-solution discretization to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    PerturbedSemigroup,
    HeatDuhamel,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scheme::PerturbedSemigroup => write!(f, "perturbed_semigroup"),
            Scheme::HeatDuhamel => write!(f, "heat_duhamel"),
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Scheme> {
        match s {
            "perturbed_semigroup" => Ok(Scheme::PerturbedSemigroup),
            "heat_duhamel" => Ok(Scheme::HeatDuhamel),
            other => Err(Error::InvalidConfig(format!("unknown scheme '{other}'"))),
        }
    }
}

/// Evolution parameters. The decay-fit window is
/// `[fit_start_steps * dt, 0.1 L^2/(4 pi^2)]`: earlier times are startup
/// transient, later times are ruled by the torus spectral gap.
#[derive(Clone, Debug)]
pub struct StabilityConfig {
    pub sigma0: f64,
    pub sigma1: f64,
    /// Weighted-norm orders recorded along the trace.
    pub sigmas: Vec<f64>,
    /// Initial-attainment orders.
    pub alphas: Vec<f64>,
    /// Perturbation amplitude.
    pub epsilon: f64,
    pub horizon: f64,
    pub dt: f64,
    /// Steps between checkpoints.
    pub checkpoint_every: usize,
    /// Checkpoint stride at which (before, at, after) snapshots are kept
    /// for the discrete PDE residual.
    pub residual_stride: usize,
    /// Start of the fit window in units of dt.
    pub fit_start_steps: usize,
}

impl StabilityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.5 < self.sigma0 && self.sigma0 < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "sigma0 must lie in (1/2, 1), got {}",
                self.sigma0
            )));
        }
        if !(0.0 < self.sigma1 && self.sigma1 < 0.5) {
            return Err(Error::InvalidConfig(format!(
                "sigma1 must lie in (0, 1/2), got {}",
                self.sigma1
            )));
        }
        if self.dt <= 0.0 || self.horizon <= self.dt {
            return Err(Error::InvalidConfig(format!(
                "need 0 < dt < horizon, got dt={}, horizon={}",
                self.dt, self.horizon
            )));
        }
        if self.checkpoint_every == 0 || self.residual_stride == 0 {
            return Err(Error::InvalidConfig(
                "checkpoint_every and residual_stride must be positive".to_string(),
            ));
        }
        Ok(())
    }

    /// Fit window [t_lo, t_hi] for decay regressions on a given box.
    pub fn fit_window(&self, grid: &crate::grid::Grid) -> (f64, f64) {
        let lo = self.fit_start_steps as f64 * self.dt;
        let hi = 0.1 / grid.spectral_gap();
        (lo, hi)
    }
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            sigma0: 0.75,
            sigma1: 0.25,
            sigmas: vec![0.0, 0.25, 0.5, 0.75],
            alphas: vec![-1.0, -0.5, 0.0],
            epsilon: 0.02,
            horizon: 0.5,
            dt: 2.5e-3,
            checkpoint_every: 8,
            residual_stride: 4,
            fit_start_steps: 10,
        }
    }
}

/// Snapshot triple used for the central-difference PDE residual.
#[derive(Clone)]
pub struct ResidualTriple {
    pub t: f64,
    pub before: RealField,
    pub at: RealField,
    pub after: RealField,
    pub dt: f64,
}

/// Time series of sigma-indexed weighted norms of the perturbation.
#[derive(Clone)]
pub struct EvolutionTrace {
    pub times: Vec<f64>,
    pub sigmas: Vec<f64>,
    /// raw[sigma_index][checkpoint] = |(-Delta)^{sigma/2} w(t)| (ball estimator).
    pub raw: Vec<Vec<f64>>,
    /// weighted[sigma_index][checkpoint] = t^{sigma/2} raw.
    pub weighted: Vec<Vec<f64>>,
    pub scheme: Scheme,
    pub estimator: Estimator,
    /// w at every checkpoint.
    pub snapshots: Vec<RealField>,
    pub residual_triples: Vec<ResidualTriple>,
    pub dt: f64,
    pub fit_window: (f64, f64),
}

impl EvolutionTrace {
    /// Trace CSV: t, sigma, weighted_norm, raw_norm, scheme, estimator.
    pub fn csv(&self, name: &str) -> crate::io::CsvTable {
        let mut t =
            crate::io::CsvTable::new(name, "t,sigma,weighted_norm,raw_norm,scheme,estimator");
        for (si, sigma) in self.sigmas.iter().enumerate() {
            for (ci, time) in self.times.iter().enumerate() {
                t.push(format!(
                    "{},{},{},{},{},{}",
                    crate::io::fmt_float(*time),
                    crate::io::fmt_float(*sigma),
                    crate::io::fmt_float(self.weighted[si][ci]),
                    crate::io::fmt_float(self.raw[si][ci]),
                    self.scheme,
                    self.estimator
                ));
            }
        }
        t
    }

    pub fn sigma_index(&self, sigma: f64) -> Result<usize> {
        self.sigmas
            .iter()
            .position(|s| (s - sigma).abs() < 1e-12)
            .ok_or_else(|| {
                Error::InvalidConfig(format!("sigma {sigma} is not in the trace's list"))
            })
    }
}

/// Nonlinear Duhamel term P div(w (x) w), spectral, dealiased.
fn nonlinear_term(w_phys: &RealField) -> Result<SpectralField> {
    let mut div = div_dealiased_sym_product_spectral(w_phys, w_phys)?;
    div.scale(0.5); // the symmetric product counts w (x) w twice
    Ok(leray_project_spectral(&div))
}

/// Heat multiplier e^{t Delta} applied spectrally.
fn heat_apply(spec: &SpectralField, t: f64) -> SpectralField {
    crate::spectral::map_modes(spec, |k, v| {
        let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
        v * (-t * k2).exp()
    })
}

/// exp(-dt B_U) by the convergent series of the bounded perturbation.
fn expm_bounded(p: &PerturbedOperator, spec: &SpectralField, dt: f64) -> Result<SpectralField> {
    let mut sum = spec.clone();
    let mut term = spec.clone();
    let base = spec.l2_norm();
    if base == 0.0 || p.is_unperturbed() {
        return Ok(sum);
    }
    for m in 1..=40 {
        let phys = inverse_transform_unchecked(&term);
        let mut next = op_b_spectral(p, &phys)?;
        next.scale(-dt / m as f64);
        sum.add_scaled(&next, 1.0);
        let norm = next.l2_norm();
        term = next;
        if norm <= 1e-15 * base {
            return Ok(sum);
        }
    }
    Err(Error::NoConvergence {
        iterations: 40,
        residual: term.l2_norm() / base,
    })
}

/// One Strang-split application of e^{-A dt}.
fn linear_factor(p: &PerturbedOperator, spec: &SpectralField, dt: f64) -> Result<SpectralField> {
    let half = heat_apply(spec, dt / 2.0);
    let mid = expm_bounded(p, &half, dt)?;
    Ok(heat_apply(&mid, dt / 2.0))
}

struct SchemeState<'a> {
    p: &'a PerturbedOperator,
    scheme: Scheme,
    dt: f64,
}

impl SchemeState<'_> {
    /// Advance the perturbation by one step.
    fn step(&self, w: &SpectralField) -> Result<SpectralField> {
        let dt = self.dt;
        match self.scheme {
            Scheme::PerturbedSemigroup => {
                // w' = E w - dt/2 (E N(w) + N(pred)), pred = E w - dt E N(w).
                let w_phys = inverse_transform_unchecked(w);
                let n_w = nonlinear_term(&w_phys)?;
                let e_w = linear_factor(self.p, w, dt)?;
                let e_n = linear_factor(self.p, &n_w, dt)?;
                let mut pred = e_w.clone();
                pred.add_scaled(&e_n, -dt);
                let pred_phys = inverse_transform_unchecked(&pred);
                let n_pred = nonlinear_term(&pred_phys)?;
                let mut out = e_w;
                out.add_scaled(&e_n, -dt / 2.0);
                out.add_scaled(&n_pred, -dt / 2.0);
                Ok(out)
            }
            Scheme::HeatDuhamel => {
                // Linear factor is the bare heat multiplier; the background
                // coupling joins the quadratic term in the integrand.
                let w_phys = inverse_transform_unchecked(w);
                let g_w = self.coupled_term(&w_phys)?;
                let h_w = heat_apply(w, dt);
                let h_g = heat_apply(&g_w, dt);
                let mut pred = h_w.clone();
                pred.add_scaled(&h_g, -dt);
                let pred_phys = inverse_transform_unchecked(&pred);
                let g_pred = self.coupled_term(&pred_phys)?;
                let mut out = h_w;
                out.add_scaled(&h_g, -dt / 2.0);
                out.add_scaled(&g_pred, -dt / 2.0);
                Ok(out)
            }
        }
    }

    /// P div(w (x) U + U (x) w + w (x) w).
    fn coupled_term(&self, w_phys: &RealField) -> Result<SpectralField> {
        let mut total = div_dealiased_sym_product_spectral(self.p.background(), w_phys)?;
        let mut quad = div_dealiased_sym_product_spectral(w_phys, w_phys)?;
        quad.scale(0.5);
        total.add_scaled(&quad, 1.0);
        Ok(leray_project_spectral(&total))
    }
}

/// March the mild solution and record the weighted-norm trace.
pub fn evolve_mild(
    w0: &RealField,
    p: &PerturbedOperator,
    cfg: &StabilityConfig,
    scheme: Scheme,
) -> Result<EvolutionTrace> {
    cfg.validate()?;
    p.grid().check_same(w0.grid(), "evolution")?;
    require_mean_zero(w0)?;
    let div = spectral_divergence_max(w0)?;
    if div > 1e-9 * (1.0 + w0.max_abs()) {
        return Err(Error::NotSolenoidal { divergence: div });
    }

    let grid = p.grid().clone();
    let steps = (cfg.horizon / cfg.dt).round() as usize;
    let state = SchemeState {
        p,
        scheme,
        dt: cfg.dt,
    };

    let mut w = forward_transform(w0)?;
    let mut prev_norm = w.l2_norm();
    let mut times = Vec::new();
    let mut raw: Vec<Vec<f64>> = vec![Vec::new(); cfg.sigmas.len()];
    let mut weighted: Vec<Vec<f64>> = vec![Vec::new(); cfg.sigmas.len()];
    let mut snapshots = Vec::new();
    let mut residual_triples: Vec<ResidualTriple> = Vec::new();
    let mut pending_after: Option<usize> = None;
    let mut prev_phys = w0.clone();

    for step in 1..=steps {
        w = state.step(&w)?;
        let t = step as f64 * cfg.dt;
        let norm = w.l2_norm();
        if !norm.is_finite() || norm > 2.0 * prev_norm + 1e-14 {
            return Err(Error::Unstable { t, norm });
        }
        prev_norm = norm;
        let is_checkpoint = step % cfg.checkpoint_every == 0;
        let phys = if is_checkpoint || pending_after.is_some() {
            Some(inverse_transform_unchecked(&w))
        } else {
            None
        };
        if let Some(idx) = pending_after {
            residual_triples[idx].after = phys.clone().expect("computed above");
            pending_after = None;
        }
        if is_checkpoint {
            let phys = phys.expect("computed above");
            times.push(t);
            for (si, sigma) in cfg.sigmas.iter().enumerate() {
                let weighted_spec = fractional_laplacian_spectral(&w, *sigma)?;
                let field = inverse_transform_unchecked(&weighted_spec);
                let value = crate::norms::vnorm_ball(&field)?.value;
                raw[si].push(value);
                weighted[si].push(t.powf(sigma / 2.0) * value);
            }
            let checkpoint_index = times.len() - 1;
            if checkpoint_index % cfg.residual_stride == 0 && step < steps {
                residual_triples.push(ResidualTriple {
                    t,
                    before: prev_phys.clone(),
                    at: phys.clone(),
                    after: phys.clone(), // placeholder, filled next step
                    dt: cfg.dt,
                });
                pending_after = Some(residual_triples.len() - 1);
            }
            snapshots.push(phys);
        }
        // Keep the state one step before the next checkpoint for triples.
        if (step + 1) % cfg.checkpoint_every == 0 {
            prev_phys = inverse_transform_unchecked(&w);
        }
    }
    if pending_after.is_some() {
        residual_triples.pop();
    }

    Ok(EvolutionTrace {
        times,
        sigmas: cfg.sigmas.clone(),
        raw,
        weighted,
        scheme,
        estimator: Estimator::BallSup,
        snapshots,
        residual_triples,
        dt: cfg.dt,
        fit_window: cfg.fit_window(&grid),
    })
}

/// Supremum and fitted exponent of one sigma slice of a trace.
#[derive(Clone, Copy, Debug)]
pub struct DecayFunctional {
    pub sigma: f64,
    /// sup over the fit window of t^{sigma/2} |(-Delta)^{sigma/2} w|.
    pub sup_weighted: f64,
    /// Fitted exponent of the raw norm against t inside the window
    /// (approximately -sigma/2 in the linear regime).
    pub fitted_exponent: Option<f64>,
}

/// Measure the decay functional for one sigma of the configured list.
pub fn decay_functionals(trace: &EvolutionTrace, sigma: f64) -> Result<DecayFunctional> {
    let si = trace.sigma_index(sigma)?;
    let (lo, hi) = trace.fit_window;
    let mut sup = 0.0f64;
    let mut pts = Vec::new();
    for (ci, t) in trace.times.iter().enumerate() {
        if *t >= lo && *t <= hi {
            sup = sup.max(trace.weighted[si][ci]);
            pts.push((*t, trace.raw[si][ci]));
        }
    }
    if pts.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "empty fit window ({lo}, {hi}) for sigma {sigma}"
        )));
    }
    Ok(DecayFunctional {
        sigma,
        sup_weighted: sup,
        fitted_exponent: loglog_slope(&pts, lo, hi),
    })
}

/// sup over checkpoints of t^{alpha/2} |(-Delta)^{alpha/2}(w(t) - w0)|,
/// alpha in [-1, 0]: how the trajectory attains its initial datum.
pub fn initial_attainment_check(trace: &EvolutionTrace, w0: &RealField, alpha: f64) -> Result<f64> {
    if !(-1.0..=0.0).contains(&alpha) {
        return Err(Error::InvalidExponents(format!(
            "attainment order must lie in [-1, 0], got {alpha}"
        )));
    }
    let mut sup = 0.0f64;
    for (ci, t) in trace.times.iter().enumerate() {
        let diff = trace.snapshots[ci].sub(w0);
        if diff.mean_abs() > 1e-10 * (1.0 + diff.max_abs()) {
            return Err(Error::NonZeroMean {
                mean: diff.mean_abs(),
            });
        }
        let spec = forward_transform(&diff)?;
        let weighted = fractional_laplacian_spectral(&spec, alpha)?;
        let field = inverse_transform_unchecked(&weighted);
        let value = crate::norms::vnorm_ball(&field)?.value;
        sup = sup.max(t.powf(alpha / 2.0) * value);
    }
    Ok(sup)
}

/// Central-difference residual of the perturbation equation
/// `dw/dt + A w + P div(w (x) w) = 0` at one snapshot triple, relative to
/// the magnitude of the stiff term.
pub fn pde_residual(p: &PerturbedOperator, triple: &ResidualTriple) -> Result<f64> {
    let mut dwdt = triple.after.sub(&triple.before);
    dwdt.scale(1.0 / (2.0 * triple.dt));
    let aw = op_a(p, &triple.at)?;
    let nl = nonlinear_term(&triple.at)?;
    let nl_phys = inverse_transform_unchecked(&nl);
    let mut r = dwdt;
    r.add_scaled(&aw, 1.0);
    r.add_scaled(&nl_phys, 1.0);
    let scale = forward_transform(&aw)?.l2_norm();
    let rn = forward_transform(&r)?.l2_norm();
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok(rn / scale)
}

/// Maximum relative gap between the two schemes over all checkpoints;
/// errors with `SchemesDisagree` beyond `tol`.
pub fn uniqueness_check(
    w0: &RealField,
    p: &PerturbedOperator,
    cfg: &StabilityConfig,
    tol: f64,
) -> Result<f64> {
    let a = evolve_mild(w0, p, cfg, Scheme::PerturbedSemigroup)?;
    let b = evolve_mild(w0, p, cfg, Scheme::HeatDuhamel)?;
    let gap = scheme_gap(&a, &b)?;
    if gap > tol {
        return Err(Error::SchemesDisagree { gap, tol });
    }
    Ok(gap)
}

/// Relative L^2 gap between two traces of the same run.
pub fn scheme_gap(a: &EvolutionTrace, b: &EvolutionTrace) -> Result<f64> {
    if a.times.len() != b.times.len() {
        return Err(Error::InvalidConfig(
            "traces have different checkpoint counts".to_string(),
        ));
    }
    let mut gap = 0.0f64;
    for ci in 0..a.times.len() {
        let diff = a.snapshots[ci].sub(&b.snapshots[ci]);
        let denom = forward_transform(&a.snapshots[ci])?.l2_norm();
        if denom > 0.0 {
            gap = gap.max(forward_transform(&diff)?.l2_norm() / denom);
        }
    }
    Ok(gap)
}

/// Deterministic perturbation profile: a Leray-projected band-limited
/// random field with a |k|^{-3/2} envelope (broadband, so the weighted
/// norms display their decay exponents in-window), or a Beltrami harmonic.
pub fn perturbation_profile(grid: &crate::grid::Grid, kind: &str, seed: u64) -> Result<RealField> {
    match kind {
        "random_band" => Ok(profiles::random_solenoidal(
            grid,
            seed,
            31,
            1,
            grid.n() / 3,
            1.5,
        )),
        "beltrami" => {
            let mut b = profiles::beltrami(grid, 1, 1.0, 0.7, 0.4);
            let m = b.max_abs();
            b.scale(1.0 / m);
            Ok(b)
        }
        other => Err(Error::InvalidConfig(format!(
            "unknown perturbation profile '{other}'"
        ))),
    }
}

/// Full stability experiment output.
pub struct StabilityReport {
    pub stationary_status: SolveStatus,
    pub background_norm: f64,
    pub w0_norm: f64,
    pub traces: Vec<EvolutionTrace>,
    pub functionals: Vec<DecayFunctional>,
    /// (alpha, sup) pairs of the initial-attainment functionals.
    pub attainment: Vec<(f64, f64)>,
    pub scheme_gap: f64,
    /// (t, relative residual) at the snapshot triples.
    pub pde_residuals: Vec<(f64, f64)>,
}

/// End-to-end pipeline: solve the stationary problem, freeze the operator,
/// perturb, evolve with both schemes, and measure every functional.
pub fn stability_experiment(
    force: &ForceSpec,
    profile_kind: &str,
    seed: u64,
    cfg: &StabilityConfig,
) -> Result<StabilityReport> {
    cfg.validate().map_err(|e| e.in_stage("config"))?;
    let solve = picard_solve(force, crate::stationary::PICARD_TOL, 200)
        .map_err(|e| e.in_stage("stationary solve"))?;
    if solve.status != SolveStatus::Converged {
        return Err(Error::NoConvergence {
            iterations: solve.iterations,
            residual: solve.residual,
        }
        .in_stage("stationary solve"));
    }
    let p = PerturbedOperator::new(solve.solution.clone()).map_err(|e| e.in_stage("operator"))?;
    let background_norm = crate::norms::vnorm_ball(&solve.solution)
        .map_err(|e| e.in_stage("operator"))?
        .value;

    let grid = p.grid().clone();
    let mut w0 = perturbation_profile(&grid, profile_kind, seed)?;
    w0.scale(cfg.epsilon);
    let w0_norm = crate::norms::vnorm_ball(&w0)
        .map_err(|e| e.in_stage("perturbation"))?
        .value;

    if cfg.epsilon == 0.0 {
        // u = U exactly: a single trivial trace, every functional zero.
        let trace =
            evolve_mild(&w0, &p, cfg, Scheme::HeatDuhamel).map_err(|e| e.in_stage("evolution"))?;
        return Ok(StabilityReport {
            stationary_status: solve.status,
            background_norm,
            w0_norm,
            traces: vec![trace],
            functionals: Vec::new(),
            attainment: Vec::new(),
            scheme_gap: 0.0,
            pde_residuals: Vec::new(),
        });
    }

    let trace_a = evolve_mild(&w0, &p, cfg, Scheme::PerturbedSemigroup)
        .map_err(|e| e.in_stage("evolution perturbed_semigroup"))?;
    let trace_b = evolve_mild(&w0, &p, cfg, Scheme::HeatDuhamel)
        .map_err(|e| e.in_stage("evolution heat_duhamel"))?;
    let gap = scheme_gap(&trace_a, &trace_b).map_err(|e| e.in_stage("scheme comparison"))?;

    let mut functionals = Vec::new();
    for sigma in &cfg.sigmas {
        functionals
            .push(decay_functionals(&trace_b, *sigma).map_err(|e| e.in_stage("functionals"))?);
    }
    let mut attainment = Vec::new();
    for alpha in &cfg.alphas {
        let sup = initial_attainment_check(&trace_b, &w0, *alpha)
            .map_err(|e| e.in_stage("attainment"))?;
        attainment.push((*alpha, sup));
    }
    let mut pde_residuals = Vec::new();
    for triple in &trace_b.residual_triples {
        pde_residuals.push((
            triple.t,
            pde_residual(&p, triple).map_err(|e| e.in_stage("pde residual"))?,
        ));
    }

    Ok(StabilityReport {
        stationary_status: solve.status,
        background_norm,
        w0_norm,
        traces: vec![trace_a, trace_b],
        functionals,
        attainment,
        scheme_gap: gap,
        pde_residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, Rank};
    use std::f64::consts::PI;

    fn grid() -> Grid {
        Grid::new(16, 2.0 * PI).unwrap()
    }

    fn small_operator(g: &Grid, amp: f64) -> PerturbedOperator {
        PerturbedOperator::new(profiles::taylor_green(g, 1).scaled(amp)).unwrap()
    }

    fn quick_cfg() -> StabilityConfig {
        StabilityConfig {
            horizon: 0.2,
            dt: 2e-3,
            checkpoint_every: 10,
            residual_stride: 2,
            ..Default::default()
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = StabilityConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.sigma0 = 0.4;
        assert!(cfg.validate().is_err());
        cfg.sigma0 = 0.75;
        cfg.sigma1 = 0.6;
        assert!(cfg.validate().is_err());
        cfg.sigma1 = 0.25;
        cfg.dt = -1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_perturbation_stays_zero() {
        let g = grid();
        let p = small_operator(&g, 0.05);
        let w0 = RealField::zeros(&g, Rank::Vector3);
        for scheme in [Scheme::PerturbedSemigroup, Scheme::HeatDuhamel] {
            let trace = evolve_mild(&w0, &p, &quick_cfg(), scheme).unwrap();
            for snapshot in &trace.snapshots {
                assert_eq!(snapshot.max_abs(), 0.0);
            }
        }
    }

    #[test]
    fn schemes_coincide_when_background_vanishes() {
        // With U = 0 both schemes integrate the same free equation with the
        // same quadrature; they agree to roundoff-level tolerance.
        let g = grid();
        let p = PerturbedOperator::new(RealField::zeros(&g, Rank::Vector3)).unwrap();
        let w0 = perturbation_profile(&g, "random_band", 7)
            .unwrap()
            .scaled(0.01);
        let cfg = quick_cfg();
        let a = evolve_mild(&w0, &p, &cfg, Scheme::PerturbedSemigroup).unwrap();
        let b = evolve_mild(&w0, &p, &cfg, Scheme::HeatDuhamel).unwrap();
        let gap = scheme_gap(&a, &b).unwrap();
        assert!(gap < 1e-8, "U = 0 scheme gap {gap}");
    }

    #[test]
    fn perturbation_norm_decreases_and_solenoidality_preserved() {
        let g = grid();
        let p = small_operator(&g, 0.05);
        let w0 = perturbation_profile(&g, "random_band", 3)
            .unwrap()
            .scaled(0.02);
        let cfg = quick_cfg();
        let trace = evolve_mild(&w0, &p, &cfg, Scheme::HeatDuhamel).unwrap();
        let s0 = trace.sigma_index(0.0).unwrap();
        let first = trace.raw[s0][0];
        let last = *trace.raw[s0].last().unwrap();
        assert!(
            last < first,
            "sigma = 0 norm did not decrease: {first} -> {last}"
        );
        for snapshot in &trace.snapshots {
            let div = spectral_divergence_max(snapshot).unwrap();
            assert!(div < 1e-9 * (1.0 + snapshot.max_abs()));
        }
    }

    #[test]
    fn richardson_order_of_the_marching() {
        let g = grid();
        let p = small_operator(&g, 0.1);
        let w0 = perturbation_profile(&g, "beltrami", 0)
            .unwrap()
            .scaled(0.05);
        let horizon = 0.1;
        let run = |dt: f64| {
            let cfg = StabilityConfig {
                horizon,
                dt,
                checkpoint_every: (horizon / dt).round() as usize,
                ..Default::default()
            };
            let trace = evolve_mild(&w0, &p, &cfg, Scheme::HeatDuhamel).unwrap();
            trace.snapshots.last().unwrap().clone()
        };
        let fine = run(horizon / 512.0);
        let e1 = run(horizon / 32.0).max_diff(&fine);
        let e2 = run(horizon / 64.0).max_diff(&fine);
        let ratio = e1 / e2;
        assert!(
            (2.8..=5.6).contains(&ratio),
            "dt-halving error ratio {ratio} (e1={e1:.3e}, e2={e2:.3e})"
        );
    }

    #[test]
    fn schemes_agree_for_small_background() {
        let g = grid();
        let p = small_operator(&g, 0.05);
        let w0 = perturbation_profile(&g, "random_band", 11)
            .unwrap()
            .scaled(0.01);
        let cfg = StabilityConfig {
            horizon: 0.2,
            dt: 1e-3,
            checkpoint_every: 20,
            ..Default::default()
        };
        let gap = uniqueness_check(&w0, &p, &cfg, 1e-5).unwrap();
        assert!(gap <= 1e-5, "scheme gap {gap}");
    }

    #[test]
    fn attainment_zero_for_zero_initial() {
        let g = grid();
        let p = small_operator(&g, 0.05);
        let w0 = RealField::zeros(&g, Rank::Vector3);
        let trace = evolve_mild(&w0, &p, &quick_cfg(), Scheme::HeatDuhamel).unwrap();
        let sup = initial_attainment_check(&trace, &w0, -0.5).unwrap();
        assert_eq!(sup, 0.0);
    }

    #[test]
    fn attainment_rejects_bad_alpha() {
        let g = grid();
        let p = small_operator(&g, 0.05);
        let w0 = RealField::zeros(&g, Rank::Vector3);
        let trace = evolve_mild(&w0, &p, &quick_cfg(), Scheme::HeatDuhamel).unwrap();
        assert!(matches!(
            initial_attainment_check(&trace, &w0, 0.5),
            Err(Error::InvalidExponents(_))
        ));
    }

    #[test]
    fn pde_residual_is_second_order_small() {
        let g = grid();
        let p = small_operator(&g, 0.08);
        let w0 = perturbation_profile(&g, "random_band", 5)
            .unwrap()
            .scaled(0.02);
        let cfg = StabilityConfig {
            horizon: 0.2,
            dt: 1e-3,
            checkpoint_every: 25,
            residual_stride: 1,
            ..Default::default()
        };
        let trace = evolve_mild(&w0, &p, &cfg, Scheme::HeatDuhamel).unwrap();
        assert!(!trace.residual_triples.is_empty());
        for triple in &trace.residual_triples {
            let r = pde_residual(&p, triple).unwrap();
            assert!(r < 1e-3, "pde residual {r} at t = {}", triple.t);
        }
    }

    #[test]
    fn blow_up_guard_trips_for_large_amplitude() {
        // An enormous perturbation on a coarse step must either trip the
        // per-step doubling guard or go non-finite; both map to Unstable.
        let g = grid();
        let p = small_operator(&g, 0.1);
        let w0 = perturbation_profile(&g, "random_band", 9)
            .unwrap()
            .scaled(400.0);
        let cfg = StabilityConfig {
            horizon: 0.2,
            dt: 5e-3,
            checkpoint_every: 4,
            ..Default::default()
        };
        match evolve_mild(&w0, &p, &cfg, Scheme::HeatDuhamel) {
            Err(Error::Unstable { .. }) => {}
            Err(other) => panic!("expected Unstable, got {other:?}"),
            Ok(trace) => {
                let s0 = trace.sigma_index(0.0).unwrap();
                let first = trace.raw[s0][0];
                let last = *trace.raw[s0].last().unwrap();
                panic!("expected Unstable, trace ran: {first} -> {last}");
            }
        }
    }
}

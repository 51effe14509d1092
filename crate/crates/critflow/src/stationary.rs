//! Picard construction of the stationary solution.
//!
//! The momentum equation with solenoidal force F is solved in integral form
//! `U = B(U, U) + U0` with `U0 = -InvLaplacian(Leray F)` and
//! `B(U, V) = InvLaplacian(Leray div(U (x) V))`. For small data the map is
//! a contraction and the fixed point is unique in the ball of radius
//! 2 |U0|.

use crate::error::{Error, Result};
use crate::grid::{Rank, RealField};
use crate::norms::{vnorm_ball_with, vnorm_operator, BallFamily};
use crate::profiles;
use crate::spectral::{
    dealiased_tensor_product_spectral, forward_transform, fractional_laplacian,
    inverse_laplacian_spectral, inverse_transform_unchecked, leray_project,
    leray_project_spectral, require_mean_zero, spectral_divergence_max,
    tensor_divergence_spectral,
};

/// Tolerance on the spectral divergence of force representatives.
const SOLENOIDAL_TOL: f64 = 1e-10;

/// External force specification; the derived representative is always
/// divergence-free and mean-zero (only the projected part enters the
/// equations, so the pressure gradient component is never materialized).
#[derive(Clone, Debug)]
pub enum ForceSpec {
    /// Force manufactured so that the given solenoidal field solves the
    /// stationary problem exactly.
    Manufactured { target: RealField },
    /// Mollified critically-singular profile force: the associated U0 is
    /// `amplitude` times a divergence-free |x|^{-1}-type profile
    /// regularized at `core_scale`.
    MollifiedSingular {
        grid: crate::grid::Grid,
        amplitude: f64,
        core_scale: f64,
    },
    /// Explicit solenoidal force field.
    Explicit { force: RealField },
}

impl ForceSpec {
    /// The divergence-free mean-zero force representative.
    pub fn force(&self) -> Result<RealField> {
        let f = match self {
            ForceSpec::Manufactured { target } => manufacture_force(target)?,
            ForceSpec::MollifiedSingular {
                grid,
                amplitude,
                core_scale,
            } => {
                // Build V = P(profile * e1), normalize, then F = -Delta V
                // so that U0 = amplitude * V carries the critical profile.
                let profile =
                    profiles::mollified_inverse_distance(grid, profiles::box_center(grid), *core_scale);
                let mut vec = RealField::zeros(grid, Rank::Vector3);
                vec.component_mut(0).copy_from_slice(profile.component(0));
                vec.remove_mean();
                let mut v = leray_project(&vec)?;
                let max = v.max_abs();
                if max > 0.0 {
                    v.scale(*amplitude / max);
                }
                let spec = forward_transform(&v)?;
                let lap = crate::spectral::fractional_laplacian_spectral(&spec, 2.0)?;
                inverse_transform_unchecked(&lap)
            }
            ForceSpec::Explicit { force } => force.clone(),
        };
        let div = spectral_divergence_max(&f)?;
        if div > SOLENOIDAL_TOL * (1.0 + f.max_abs()) {
            return Err(Error::NotSolenoidal { divergence: div });
        }
        Ok(f)
    }

    pub fn grid(&self) -> &crate::grid::Grid {
        match self {
            ForceSpec::Manufactured { target } => target.grid(),
            ForceSpec::MollifiedSingular { grid, .. } => grid,
            ForceSpec::Explicit { force } => force.grid(),
        }
    }
}

/// U0 = -InvLaplacian(Leray F): the linear response to the force.
pub fn u0_from_force(force: &RealField) -> Result<RealField> {
    require_mean_zero(force)?;
    let spec = forward_transform(force)?;
    let projected = leray_project_spectral(&spec);
    let mut u0 = inverse_laplacian_spectral(&projected);
    u0.scale(-1.0);
    Ok(inverse_transform_unchecked(&u0))
}

/// The bilinear term B(U, V) = InvLaplacian(Leray div(U (x) V)) with the
/// dealiased product.
pub fn bilinear_b(u: &RealField, v: &RealField) -> Result<RealField> {
    u.grid().check_same(v.grid(), "bilinear term")?;
    let prod = dealiased_tensor_product_spectral(u, v)?;
    let div = tensor_divergence_spectral(&prod);
    let projected = leray_project_spectral(&div);
    let out = inverse_laplacian_spectral(&projected);
    Ok(inverse_transform_unchecked(&out))
}

/// Manufacture the solenoidal force whose stationary solution is `target`:
/// F = Leray(-Delta U* + div(U* (x) U*)). The target must be
/// divergence-free, mean-zero, and band-limited below 2N/9 so the
/// quadratic term is alias-free after the two-thirds rule.
pub fn manufacture_force(target: &RealField) -> Result<RealField> {
    let div = spectral_divergence_max(target)?;
    if div > SOLENOIDAL_TOL * (1.0 + target.max_abs()) {
        return Err(Error::NotSolenoidal { divergence: div });
    }
    require_mean_zero(target)?;
    let spec = forward_transform(target)?;
    let lap = crate::spectral::fractional_laplacian_spectral(&spec, 2.0)?; // (-Delta) U*
    let nl = dealiased_tensor_product_spectral(target, target)?;
    let nl_div = tensor_divergence_spectral(&nl);
    let mut total = lap; // -Delta U* = +(-Delta) U*
    total.add_scaled(&nl_div, 1.0);
    let projected = leray_project_spectral(&total);
    Ok(inverse_transform_unchecked(&projected))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    NoContraction,
    MaxIter,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SolveStatus::Converged => write!(f, "converged"),
            SolveStatus::NoContraction => write!(f, "no_contraction"),
            SolveStatus::MaxIter => write!(f, "max_iter"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct StationarySolveResult {
    pub solution: RealField,
    pub u0: RealField,
    /// Ball-estimator norm of each iterate.
    pub iterate_norms: Vec<f64>,
    /// Ratios of successive increment norms.
    pub contraction_ratios: Vec<f64>,
    /// Integral-form residual of the final iterate.
    pub residual: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    /// Norm of each Picard increment.
    pub increments: Vec<f64>,
}

impl StationarySolveResult {
    /// CSV iterate log: k, vnorm_ball, increment, ratio.
    pub fn iterate_csv(&self) -> crate::io::CsvTable {
        let mut table = crate::io::CsvTable::new("iterates", "k,vnorm_ball,increment,ratio");
        for (k, norm) in self.iterate_norms.iter().enumerate() {
            let inc = if k == 0 { 0.0 } else { self.increments[k - 1] };
            let ratio = if k >= 2 && self.increments[k - 2] > 0.0 {
                inc / self.increments[k - 2]
            } else {
                0.0
            };
            table.push(format!(
                "{k},{},{},{}",
                crate::io::fmt_float(*norm),
                crate::io::fmt_float(inc),
                crate::io::fmt_float(ratio)
            ));
        }
        table
    }
}

/// Default relative tolerance for Picard iteration.
pub const PICARD_TOL: f64 = 1e-10;
/// Default iteration cap.
pub const PICARD_MAX_ITER: usize = 200;

/// Picard iteration x_{k+1} = B(x_k, x_k) + U0. Divergence is declared
/// after 5 consecutive increment-ratio > 1 events; convergence when the
/// increment (ball estimator) drops below `tol * |U0|`.
pub fn picard_solve(spec: &ForceSpec, tol: f64, max_iter: usize) -> Result<StationarySolveResult> {
    let force = spec.force()?;
    let grid = force.grid().clone();
    let u0 = u0_from_force(&force)?;
    let radii = crate::norms::dyadic_radii(&grid);
    let family = BallFamily::new(&grid, &radii)?;
    let u0_norm = vnorm_ball_with(&u0, &family)?.value;

    let mut x = u0.clone();
    let mut iterate_norms = vec![vnorm_ball_with(&x, &family)?.value];
    let mut increments: Vec<f64> = Vec::new();
    let mut ratios: Vec<f64> = Vec::new();
    let mut status = SolveStatus::MaxIter;
    let mut iterations = 0;
    let mut growth_streak = 0;

    if u0_norm == 0.0 {
        // F = 0: the zero field is the fixed point immediately.
        let residual = residual_of(&x, &u0)?;
        return Ok(StationarySolveResult {
            solution: x,
            u0,
            iterate_norms,
            contraction_ratios: ratios,
            residual: residual.integral_form,
            iterations: 0,
            status: SolveStatus::Converged,
            increments,
        });
    }

    for k in 0..max_iter {
        iterations = k + 1;
        let bx = bilinear_b(&x, &x)?;
        let mut next = bx;
        next.add_scaled(&u0, 1.0);
        let diff = next.sub(&x);
        let inc = vnorm_ball_with(&diff, &family)?.value;
        increments.push(inc);
        if increments.len() >= 2 {
            let prev = increments[increments.len() - 2];
            let ratio = if prev > 0.0 { inc / prev } else { 0.0 };
            ratios.push(ratio);
            if ratio > 1.0 {
                growth_streak += 1;
            } else {
                growth_streak = 0;
            }
        }
        x = next;
        iterate_norms.push(vnorm_ball_with(&x, &family)?.value);
        if inc <= tol * u0_norm {
            status = SolveStatus::Converged;
            break;
        }
        if growth_streak >= 5 {
            status = SolveStatus::NoContraction;
            break;
        }
    }

    let res = residual_of(&x, &u0)?;
    Ok(StationarySolveResult {
        solution: x,
        u0,
        iterate_norms,
        contraction_ratios: ratios,
        residual: res.integral_form,
        iterations,
        status,
        increments,
    })
}

/// Residual of a candidate solution in both algebraic forms.
#[derive(Clone, Copy, Debug)]
pub struct ResidualReport {
    /// |U - B(U,U) - U0| in the spectral L^2 norm.
    pub integral_form: f64,
    /// |Leray(-Delta U + div(U (x) U) - F)| in the spectral L^2 norm.
    pub momentum_form: f64,
}

/// Both residual forms for a solution candidate against a force spec.
pub fn residual(u: &RealField, spec: &ForceSpec) -> Result<ResidualReport> {
    let force = spec.force()?;
    let u0 = u0_from_force(&force)?;
    let mut rep = residual_of(u, &u0)?;
    // Momentum form: Leray(-Delta U + div(U x U) - F).
    let uspec = forward_transform(u)?;
    let mut total = crate::spectral::fractional_laplacian_spectral(&uspec, 2.0)?;
    let nl = dealiased_tensor_product_spectral(u, u)?;
    total.add_scaled(&tensor_divergence_spectral(&nl), 1.0);
    let fspec = forward_transform(&force)?;
    total.add_scaled(&fspec, -1.0);
    let projected = leray_project_spectral(&total);
    rep.momentum_form = projected.l2_norm();
    Ok(rep)
}

fn residual_of(u: &RealField, u0: &RealField) -> Result<ResidualReport> {
    let b = bilinear_b(u, u)?;
    let mut r = u.sub(&b);
    r.add_scaled(u0, -1.0);
    let spec = forward_transform(&r)?;
    Ok(ResidualReport {
        integral_form: spec.l2_norm(),
        momentum_form: f64::NAN,
    })
}

/// Smallness indicator of a force and the contraction it predicts.
#[derive(Clone, Copy, Debug)]
pub struct SmallnessReport {
    /// Operator-estimator norm of the linear response (-InvLaplacian F).
    pub delta: f64,
    /// Calibrated bilinear bound times delta: below ~1/4 the fixed-point
    /// lemma guarantees contraction.
    pub predicted_contraction: f64,
}

/// Measure delta = |linear response|_V (operator estimator) and combine it
/// with the calibrated bilinear bound.
pub fn smallness_report(spec: &ForceSpec, bilinear_bound: f64) -> Result<SmallnessReport> {
    let force = spec.force()?;
    if force.max_abs() == 0.0 {
        return Ok(SmallnessReport {
            delta: 0.0,
            predicted_contraction: 0.0,
        });
    }
    let minus_inv = fractional_laplacian(&force, -2.0)?; // (-Delta)^{-1} F
    let delta = vnorm_operator(&minus_inv, 1e-6)?.value;
    Ok(SmallnessReport {
        delta,
        predicted_contraction: bilinear_bound * delta,
    })
}

/// Empirical bilinear bound C with |B(U,V)| <= C |U| |V| (ball estimator)
/// over a seeded family of solenoidal fields.
pub fn bilinear_calibration(grid: &crate::grid::Grid, seed: u64) -> Result<f64> {
    let fields = vec![
        profiles::taylor_green(grid, 1),
        profiles::beltrami(grid, 1, 1.0, 0.8, 0.5),
        profiles::random_solenoidal(grid, seed, 21, 1, grid.n() / 4, 1.0),
        profiles::random_solenoidal(grid, seed, 22, 1, grid.n() / 3, 1.5),
    ];
    let radii = crate::norms::dyadic_radii(grid);
    let family = BallFamily::new(grid, &radii)?;
    let mut worst = 0.0f64;
    for u in &fields {
        for v in &fields {
            let b = bilinear_b(u, v)?;
            let nu = vnorm_ball_with(u, &family)?.value;
            let nv = vnorm_ball_with(v, &family)?.value;
            let nb = vnorm_ball_with(&b, &family)?.value;
            if nu > 0.0 && nv > 0.0 {
                worst = worst.max(nb / (nu * nv));
            }
        }
    }
    Ok(worst)
}

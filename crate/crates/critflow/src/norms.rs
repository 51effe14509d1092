//! Morrey norms and the capacitary-norm estimators.
//!
//! Three estimators of the capacitary norm coexist and are never compared
//! raw, only through fixed-estimator ratios:
//!
//! - `ball_sup`: supremum over sampled balls of (int_B |f|^2 / 4 pi r)^{1/2},
//!   a cheap lower estimator driven by FFT ball sums;
//! - `operator_power`: the operator norm of g -> |f| I_1(g - mean) on L^2
//!   via power iteration, a genuine two-sided equivalent;
//! - `x_iterate`: the iterated-potential norm sup_n |w_n|_{M^{2,2}}^{1/2^n}
//!   with w_0 = |u|, w_{n+1} = I_1(w_n^2).

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Grid, Rank, RealField, SpectralField};
use crate::potential::{operator_norm_sq, riesz1};
use crate::spectral::{forward_transform, fractional_laplacian, inverse_transform_unchecked};

/// Which estimator produced a norm value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Estimator {
    BallSup,
    OperatorPower,
    XIterate,
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Estimator::BallSup => write!(f, "ball_sup"),
            Estimator::OperatorPower => write!(f, "operator_power"),
            Estimator::XIterate => write!(f, "x_iterate"),
        }
    }
}

/// A norm value together with the estimator identity and its parameters.
#[derive(Clone, Debug)]
pub struct NormReport {
    pub value: f64,
    pub estimator: Estimator,
    pub alpha: f64,
    pub converged: bool,
    /// Opaque key=value parameter list recorded with the value.
    pub params: Vec<(String, String)>,
}

impl NormReport {
    /// CSV row: estimator, alpha, value, converged, quoted params payload.
    pub fn csv_row(&self) -> String {
        let params: Vec<String> = self
            .params
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        format!(
            "{},{},{:e},{},\"{}\"",
            self.estimator,
            self.alpha,
            self.value,
            self.converged,
            params.join(";")
        )
    }

    pub fn csv_header() -> &'static str {
        "estimator,alpha,value,converged,params"
    }
}

/// Dyadic radii {2h, 4h, 8h, ...} up to L/4.
pub fn dyadic_radii(grid: &Grid) -> Vec<f64> {
    let h = grid.spacing();
    let mut radii = Vec::new();
    let mut r = 2.0 * h;
    while r <= grid.length() / 4.0 + 1e-12 {
        radii.push(r);
        r *= 2.0;
    }
    radii
}

/// Precomputed spectra of ball indicators; turns every "sum of w over all
/// balls of radius r" query into one FFT convolution, yielding the sums at
/// every center at once.
pub struct BallFamily {
    grid: Grid,
    radii: Vec<f64>,
    kernels: Vec<Vec<Complex64>>,
    counts: Vec<f64>,
}

impl BallFamily {
    pub fn new(grid: &Grid, radii: &[f64]) -> Result<BallFamily> {
        if radii.is_empty() {
            return Err(Error::InvalidConfig("empty radii list".to_string()));
        }
        let n = grid.n();
        let mut kernels = Vec::with_capacity(radii.len());
        let mut counts = Vec::with_capacity(radii.len());
        for &r in radii {
            let mut ind = RealField::zeros(grid, Rank::Scalar);
            let mut count = 0.0;
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let dx = grid.min_image(0, i);
                        let dy = grid.min_image(0, j);
                        let dz = grid.min_image(0, k);
                        if (dx * dx + dy * dy + dz * dz).sqrt() <= r {
                            ind.data_mut()[grid.idx(i, j, k)] = 1.0;
                            count += 1.0;
                        }
                    }
                }
            }
            let spec = forward_transform(&ind)?;
            kernels.push(spec.data().to_vec());
            counts.push(count);
        }
        Ok(BallFamily {
            grid: grid.clone(),
            radii: radii.to_vec(),
            kernels,
            counts,
        })
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    /// Node count of the ball with radius index `ri`.
    pub fn count(&self, ri: usize) -> f64 {
        self.counts[ri]
    }

    /// Sum of `w` over the ball of radius index `ri` centered at every node.
    /// The indicator is symmetric, so correlation equals convolution.
    pub fn ball_sums(&self, w: &[f64], ri: usize) -> Vec<f64> {
        let nn = self.grid.node_count();
        assert_eq!(w.len(), nn);
        let mut buf: Vec<Complex64> = w.iter().map(|v| Complex64::new(*v, 0.0)).collect();
        self.grid.fft3_inplace(&mut buf, true);
        let scale = 1.0; // (1/N^3 forward) x (N^3 convolution factor)
        for (b, k) in buf.iter_mut().zip(self.kernels[ri].iter()) {
            *b *= k * scale;
        }
        self.grid.fft3_inplace(&mut buf, false);
        buf.iter().map(|v| v.re).collect()
    }

    /// sup over centers and radii of `score(r, ball_sum)`, where the sums
    /// are of the provided node values.
    pub fn sup_over_balls<F: Fn(f64, f64) -> f64>(&self, w: &[f64], score: F) -> f64 {
        let mut best = 0.0f64;
        for ri in 0..self.radii.len() {
            let sums = self.ball_sums(w, ri);
            let r = self.radii[ri];
            for s in sums {
                // FFT roundoff can leave tiny negatives on empty regions.
                let v = score(r, s.max(0.0));
                if v > best {
                    best = v;
                }
            }
        }
        best
    }
}

fn abs_power(f: &RealField, p: f64) -> Vec<f64> {
    let mag = f.magnitude();
    mag.data().iter().map(|v| v.powf(p)).collect()
}

/// Morrey norm: sup over sampled balls of
/// [r^{lambda - 3} int_{B_r} |f|^p dx]^{1/p}.
pub fn morrey_norm(f: &RealField, p: f64, lambda: f64) -> Result<NormReport> {
    if !(1.0..f64::INFINITY).contains(&p) || !(0.0 < lambda && lambda <= 3.0) {
        return Err(Error::InvalidExponents(format!(
            "morrey norm needs 1 <= p < inf, 0 < lambda <= 3; got p={p}, lambda={lambda}"
        )));
    }
    let grid = f.grid().clone();
    let radii = dyadic_radii(&grid);
    let family = BallFamily::new(&grid, &radii)?;
    let w = abs_power(f, p);
    let cell = grid.cell_volume();
    let sup = family.sup_over_balls(&w, |r, s| (r.powf(lambda - 3.0) * s * cell).powf(1.0 / p));
    Ok(NormReport {
        value: sup,
        estimator: Estimator::BallSup,
        alpha: 0.0,
        converged: true,
        params: vec![
            ("p".into(), format!("{p}")),
            ("lambda".into(), format!("{lambda}")),
            ("radii".into(), format!("{}", radii.len())),
            ("stride".into(), "1".into()),
        ],
    })
}

/// Ball-supremum estimator of the capacitary norm:
/// sup over balls of (int_B |f|^2 / (4 pi r))^{1/2}.
pub fn vnorm_ball(f: &RealField) -> Result<NormReport> {
    let grid = f.grid().clone();
    let radii = dyadic_radii(&grid);
    let family = BallFamily::new(&grid, &radii)?;
    let report = vnorm_ball_with(f, &family)?;
    Ok(report)
}

/// Variant reusing a precomputed ball family (hot loops).
pub fn vnorm_ball_with(f: &RealField, family: &BallFamily) -> Result<NormReport> {
    let cell = f.grid().cell_volume();
    let w = abs_power(f, 2.0);
    let sup = family.sup_over_balls(&w, |r, s| {
        (s * cell / (4.0 * std::f64::consts::PI * r)).sqrt()
    });
    Ok(NormReport {
        value: sup,
        estimator: Estimator::BallSup,
        alpha: 0.0,
        converged: true,
        params: vec![
            ("radii".into(), format!("{}", family.radii().len())),
            ("stride".into(), "1".into()),
        ],
    })
}

/// Operator-norm estimator: the largest singular value of
/// g -> |f| I_1(g - mean) on L^2, by power iteration on the normal
/// operator. Converges when successive Rayleigh quotients differ by less
/// than `tol` relatively.
pub fn vnorm_operator(f: &RealField, tol: f64) -> Result<NormReport> {
    let mag = f.magnitude();
    let iters = 500;
    let value_sq = operator_norm_sq(&mag, tol, iters)?;
    Ok(NormReport {
        value: value_sq.sqrt(),
        estimator: Estimator::OperatorPower,
        alpha: 0.0,
        converged: true,
        params: vec![
            ("tol".into(), format!("{tol:e}")),
            ("max_iter".into(), format!("{iters}")),
        ],
    })
}

/// Fractional-order capacitary norm: apply (-Delta)^{alpha/2}, then the
/// chosen base estimator. `alpha in [-2, 1]`; mean-zero required for
/// negative orders.
pub fn vnorm_alpha(f: &RealField, alpha: f64, estimator: Estimator, tol: f64) -> Result<NormReport> {
    if !(-2.0..=1.0).contains(&alpha) {
        return Err(Error::UnsupportedOrder { order: alpha });
    }
    let g = fractional_laplacian(f, alpha)?;
    let mut report = match estimator {
        Estimator::BallSup => vnorm_ball(&g)?,
        Estimator::OperatorPower => vnorm_operator(&g, tol)?,
        Estimator::XIterate => xnorm_iterates(&g, 4)?,
    };
    report.alpha = alpha;
    Ok(report)
}

/// Guard for the iterated-potential recursion.
const XNORM_OVERFLOW: f64 = 1e12;

/// Iterated-potential norm of the optimality remark:
/// w_0 = |u|, w_{n+1} = I_1(w_n^2), value = sup_n |w_n|_{M^{2,2}}^{1/2^n}.
/// Depth is capped at 8; iterate blow-up means `u` lies outside the
/// contraction ball.
pub fn xnorm_iterates(u: &RealField, depth: usize) -> Result<NormReport> {
    if depth > 8 {
        return Err(Error::InvalidConfig(format!(
            "x-norm depth {depth} exceeds the supported maximum 8"
        )));
    }
    let grid = u.grid().clone();
    let mut w = u.magnitude();
    let mut sup = 0.0f64;
    let mut sup_at = 0usize;
    for level in 0..=depth {
        let m = morrey_norm(&w, 2.0, 2.0)?.value;
        let rooted = m.powf(1.0 / 2f64.powi(level as i32));
        if rooted > sup {
            sup = rooted;
            sup_at = level;
        }
        if level == depth {
            break;
        }
        if w.max_abs() > XNORM_OVERFLOW {
            return Err(Error::IterateBlowup {
                depth: level,
                norm: w.max_abs(),
            });
        }
        let sq = RealField::from_data(
            &grid,
            Rank::Scalar,
            w.data().iter().map(|v| v * v).collect(),
        )?;
        w = riesz1(&sq)?;
    }
    Ok(NormReport {
        value: sup,
        estimator: Estimator::XIterate,
        alpha: 0.0,
        converged: true,
        params: vec![
            ("depth".into(), format!("{depth}")),
            ("sup_at".into(), format!("{sup_at}")),
        ],
    })
}

/// Ratio of the capacitary expressions in the Sobolev-type embedding
/// `|I_alpha f|` with target exponent 2p/(2 - alpha p): left supremum over
/// the sampled ball family divided by the right supremum.
pub fn sobolev_embedding_constant(f: &RealField, p: f64, alpha: f64) -> Result<f64> {
    if !(0.0 < alpha && alpha < 2.0 / p) || p <= 1.0 {
        return Err(Error::InvalidExponents(format!(
            "need 1 < p and 0 < alpha < 2/p, got p={p}, alpha={alpha}"
        )));
    }
    if f.max_abs() == 0.0 {
        return Ok(0.0);
    }
    let q = 2.0 * p / (2.0 - alpha * p);
    let grid = f.grid().clone();
    let radii = dyadic_radii(&grid);
    let family = BallFamily::new(&grid, &radii)?;
    let cell = grid.cell_volume();
    let cap = |r: f64| 4.0 * std::f64::consts::PI * r;

    let pot = crate::potential::riesz_potential(&f.magnitude(), alpha)?.0;
    let wl = abs_power(&pot, q);
    let lhs = family.sup_over_balls(&wl, |r, s| (s * cell / cap(r)).powf(1.0 / q));
    let wr = abs_power(f, p);
    let rhs = family.sup_over_balls(&wr, |r, s| (s * cell / cap(r)).powf(1.0 / p));
    if rhs == 0.0 {
        return Ok(0.0);
    }
    Ok(lhs / rhs)
}

/// Ratio check of the product inequality
/// `|f (x) g|_{-sigma} <= C |f|_{s1} |g|_{s2}` with sigma + s1 + s2 = 1:
/// returns LHS / (product of RHS norms) with the ball estimator.
pub fn holder_product_check(
    f: &RealField,
    g: &RealField,
    sigma: f64,
    s1: f64,
    s2: f64,
) -> Result<f64> {
    if !(0.0 < sigma && sigma < 1.0)
        || !(0.0..1.0).contains(&s1)
        || !(0.0..1.0).contains(&s2)
        || (sigma + s1 + s2 - 1.0).abs() > 1e-12
    {
        return Err(Error::InvalidExponents(format!(
            "need sigma in (0,1), s1, s2 in [0,1), sigma+s1+s2 = 1; got ({sigma}, {s1}, {s2})"
        )));
    }
    f.grid().check_same(g.grid(), "product check")?;
    let rhs1 = vnorm_alpha(f, s1, Estimator::BallSup, 1e-6)?.value;
    let rhs2 = vnorm_alpha(g, s2, Estimator::BallSup, 1e-6)?.value;
    if rhs1 == 0.0 || rhs2 == 0.0 {
        return Ok(0.0);
    }

    let prod = tensor_or_scalar_product(f, g)?;
    let mut prod = prod;
    prod.remove_mean();
    let lhs = vnorm_alpha(&prod, -sigma, Estimator::BallSup, 1e-6)?.value;
    Ok(lhs / (rhs1 * rhs2))
}

fn tensor_or_scalar_product(f: &RealField, g: &RealField) -> Result<RealField> {
    let grid = f.grid().clone();
    let nn = grid.node_count();
    match (f.rank(), g.rank()) {
        (Rank::Scalar, Rank::Scalar) => {
            let data = f
                .data()
                .iter()
                .zip(g.data().iter())
                .map(|(a, b)| a * b)
                .collect();
            RealField::from_data(&grid, Rank::Scalar, data)
        }
        (Rank::Vector3, Rank::Vector3) => {
            let mut out = RealField::zeros(&grid, Rank::Tensor3x3);
            for i in 0..3 {
                for j in 0..3 {
                    let a = f.component(i);
                    let b = g.component(j);
                    let dst = out.component_mut(3 * i + j);
                    for idx in 0..nn {
                        dst[idx] = a[idx] * b[idx];
                    }
                }
            }
            Ok(out)
        }
        _ => Err(Error::RankMismatch(
            "product check requires two scalar or two vector fields".to_string(),
        )),
    }
}

/// Capacitary norm of a complex field stored as a (re, im) pair: the ball
/// estimator applied to the pointwise modulus.
pub fn vnorm_ball_complex(re: &RealField, im: &RealField) -> Result<f64> {
    let grid = re.grid().clone();
    let nn = grid.node_count();
    let mut mag = RealField::zeros(&grid, Rank::Scalar);
    for c in 0..re.rank().components() {
        let a = re.component(c);
        let b = im.component(c);
        for idx in 0..nn {
            mag.data_mut()[idx] += a[idx] * a[idx] + b[idx] * b[idx];
        }
    }
    for v in mag.data_mut() {
        *v = v.sqrt();
    }
    Ok(vnorm_ball(&mag)?.value)
}

/// Spectral-side weighted norm |(-Delta)^{sigma/2} f| with the ball
/// estimator, used by the scan drivers.
pub fn vnorm_ball_weighted_spectral(spec: &SpectralField, sigma: f64) -> Result<f64> {
    let weighted = crate::spectral::fractional_laplacian_spectral(spec, sigma)?;
    let f = inverse_transform_unchecked(&weighted);
    Ok(vnorm_ball(&f)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles;

    fn grid() -> Grid {
        Grid::new(16, 2.0).unwrap()
    }

    #[test]
    fn ball_sums_match_brute_force() {
        let g = Grid::new(8, 2.0).unwrap();
        let f = profiles::random_band_scalar(&g, 3, 0, 1, 3, 0.5);
        let radii = dyadic_radii(&g);
        let family = BallFamily::new(&g, &radii).unwrap();
        let n = g.n();
        for (ri, &r) in radii.iter().enumerate() {
            let fast = family.ball_sums(f.component(0), ri);
            for ci in 0..n {
                for cj in 0..n {
                    for ck in 0..n {
                        let mut slow = 0.0;
                        for i in 0..n {
                            for j in 0..n {
                                for k in 0..n {
                                    let dx = g.min_image(ci, i);
                                    let dy = g.min_image(cj, j);
                                    let dz = g.min_image(ck, k);
                                    if (dx * dx + dy * dy + dz * dz).sqrt() <= r {
                                        slow += f.component(0)[g.idx(i, j, k)];
                                    }
                                }
                            }
                        }
                        let fast_v = fast[g.idx(ci, cj, ck)];
                        assert!(
                            (fast_v - slow).abs() < 1e-12,
                            "radius {r}, center ({ci},{cj},{ck}): {fast_v} vs {slow}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn maximal_function_matches_brute_force() {
        let g = Grid::new(8, 2.0).unwrap();
        let f = profiles::random_band_scalar(&g, 5, 1, 1, 3, 0.0);
        let radii = dyadic_radii(&g);
        let m = crate::potential::maximal_function(&f, &radii).unwrap();
        let n = g.n();
        for ci in 0..n {
            for cj in 0..n {
                for ck in 0..n {
                    let mut best: f64 = 0.0;
                    for &r in &radii {
                        let mut sum = 0.0;
                        let mut count = 0.0;
                        for i in 0..n {
                            for j in 0..n {
                                for k in 0..n {
                                    let dx = g.min_image(ci, i);
                                    let dy = g.min_image(cj, j);
                                    let dz = g.min_image(ck, k);
                                    if (dx * dx + dy * dy + dz * dz).sqrt() <= r {
                                        sum += f.component(0)[g.idx(i, j, k)].abs();
                                        count += 1.0;
                                    }
                                }
                            }
                        }
                        best = best.max(sum / count);
                    }
                    assert!((m.component(0)[g.idx(ci, cj, ck)] - best).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn morrey_zero_field() {
        let g = grid();
        let f = RealField::zeros(&g, Rank::Scalar);
        assert_eq!(morrey_norm(&f, 2.0, 2.0).unwrap().value, 0.0);
    }

    #[test]
    fn morrey_constant_field_closed_form() {
        // For constant c the ball integral is c^p x (node count x h^3), so
        // the supremum over the dyadic family has a closed form.
        let g = grid();
        let c = 1.7;
        let f = RealField::from_fn(&g, Rank::Scalar, |_, _| c);
        let radii = dyadic_radii(&g);
        let family = BallFamily::new(&g, &radii).unwrap();
        let cell = g.cell_volume();
        let mut expect = 0.0f64;
        for (ri, &r) in radii.iter().enumerate() {
            let vol = family.count(ri) * cell;
            expect = expect.max((r.powf(-1.0) * c * c * vol).sqrt());
        }
        let got = morrey_norm(&f, 2.0, 2.0).unwrap().value;
        assert!((got - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn vnorm_ball_is_morrey_over_sqrt_4pi() {
        let g = grid();
        let f = profiles::mollified_bump(&g, profiles::box_center(&g), 0.4);
        let m = morrey_norm(&f, 2.0, 2.0).unwrap().value;
        let v = vnorm_ball(&f).unwrap().value;
        let ratio = m / v;
        assert!((ratio - (4.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn vnorm_operator_zero_and_homogeneity() {
        let g = grid();
        let z = RealField::zeros(&g, Rank::Scalar);
        assert_eq!(vnorm_operator(&z, 1e-8).unwrap().value, 0.0);

        let f = profiles::mollified_bump(&g, profiles::box_center(&g), 0.4);
        let a = vnorm_operator(&f, 1e-10).unwrap().value;
        let b = vnorm_operator(&f.scaled(3.0), 1e-10).unwrap().value;
        assert!((b - 3.0 * a).abs() < 1e-10 * (1.0 + a));
    }

    #[test]
    fn vnorm_alpha_zero_matches_base() {
        let g = grid();
        let f = profiles::mollified_bump(&g, profiles::box_center(&g), 0.4);
        let mut f = f;
        f.remove_mean();
        let direct = vnorm_ball(&f).unwrap().value;
        let via = vnorm_alpha(&f, 0.0, Estimator::BallSup, 1e-6).unwrap().value;
        assert!((direct - via).abs() < 1e-12 * (1.0 + direct));
    }

    #[test]
    fn vnorm_alpha_symbol_cancellation() {
        // alpha = 1 applied to (-Delta)^{-1/2} g equals the estimator on g.
        let g = grid();
        let mut base = profiles::mollified_bump(&g, profiles::box_center(&g), 0.4);
        base.remove_mean();
        let half_inv = fractional_laplacian(&base, -1.0).unwrap();
        let lhs = vnorm_alpha(&half_inv, 1.0, Estimator::BallSup, 1e-6)
            .unwrap()
            .value;
        let rhs = vnorm_ball(&base).unwrap().value;
        assert!((lhs - rhs).abs() < 1e-10 * (1.0 + rhs));
    }

    #[test]
    fn xnorm_zero_and_depth_cap() {
        let g = grid();
        let z = RealField::zeros(&g, Rank::Scalar);
        assert_eq!(xnorm_iterates(&z, 3).unwrap().value, 0.0);
        assert!(matches!(
            xnorm_iterates(&z, 9),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn xnorm_small_amplitude_sup_at_low_depth() {
        let g = grid();
        let f = profiles::mollified_bump(&g, profiles::box_center(&g), 0.4).scaled(0.1);
        let rep = xnorm_iterates(&f, 5).unwrap();
        let sup_at: usize = rep
            .params
            .iter()
            .find(|(k, _)| k == "sup_at")
            .unwrap()
            .1
            .parse()
            .unwrap();
        assert!(sup_at <= 3, "sup attained at depth {sup_at}");
        assert!(rep.value > 0.0);
    }

    #[test]
    fn holder_check_zero_and_symmetry() {
        let g = grid();
        let f = profiles::mollified_bump(&g, profiles::box_center(&g), 0.4);
        let z = RealField::zeros(&g, Rank::Scalar);
        assert_eq!(holder_product_check(&f, &z, 0.5, 0.25, 0.25).unwrap(), 0.0);

        let g2 = profiles::random_band_scalar(&g, 9, 0, 1, 4, 1.0);
        let a = holder_product_check(&f, &g2, 0.5, 0.25, 0.25).unwrap();
        let b = holder_product_check(&g2, &f, 0.5, 0.25, 0.25).unwrap();
        assert!((a - b).abs() < 1e-12 * (1.0 + a));
        assert!(a.is_finite() && a > 0.0);
    }

    #[test]
    fn holder_check_rejects_bad_exponents() {
        let g = grid();
        let f = RealField::zeros(&g, Rank::Scalar);
        assert!(matches!(
            holder_product_check(&f, &f, 0.5, 0.3, 0.3),
            Err(Error::InvalidExponents(_))
        ));
    }

    #[test]
    fn sobolev_constant_zero_field_and_bad_exponents() {
        let g = grid();
        let z = RealField::zeros(&g, Rank::Scalar);
        assert_eq!(sobolev_embedding_constant(&z, 2.0, 0.5).unwrap(), 0.0);
        assert!(matches!(
            sobolev_embedding_constant(&z, 2.0, 1.5),
            Err(Error::InvalidExponents(_))
        ));
    }
}

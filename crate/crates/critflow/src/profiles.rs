//! Deterministic test-field generators: mollified profiles, band-limited
//! random fields, Beltrami/Taylor-Green harmonics, and grid-commensurate
//! dilations. All randomness is seeded through [`crate::rng::SeededStream`].

use num_complex::Complex64;

use crate::grid::{Grid, Rank, RealField};
use crate::rng::SeededStream;
use crate::spectral::{
    dealias_spectral, forward_transform, inverse_transform_unchecked, leray_project_spectral,
};

/// Smooth cutoff: 1 on [0, 1/2], 0 on [1, inf), C-infinity in between.
pub fn smooth_cutoff(t: f64) -> f64 {
    fn g(s: f64) -> f64 {
        if s > 0.0 {
            (-1.0 / s).exp()
        } else {
            0.0
        }
    }
    let a = g(1.0 - t);
    let b = g(t - 0.5);
    if a + b == 0.0 {
        0.0
    } else {
        a / (a + b)
    }
}

/// Minimum-image distance from `x` to `center` on the torus.
fn torus_distance(grid: &Grid, x: [f64; 3], center: [f64; 3]) -> f64 {
    let l = grid.length();
    let mut d2 = 0.0;
    for a in 0..3 {
        let mut d = x[a] - center[a];
        d -= l * (d / l).round();
        d2 += d * d;
    }
    d2.sqrt()
}

/// C-infinity bump of support radius `radius` centered at `center`,
/// amplitude 1 at the center.
pub fn mollified_bump(grid: &Grid, center: [f64; 3], radius: f64) -> RealField {
    RealField::from_fn(grid, Rank::Scalar, |_, x| {
        let r = torus_distance(grid, x, center) / radius;
        if r >= 1.0 {
            0.0
        } else {
            (1.0 - 1.0 / (1.0 - r * r)).exp()
        }
    })
}

/// Mollified critically-singular profile: |x - c|^{-1} decay regularized at
/// `core` and smoothly cut off at radius L/4 so the support stays in the
/// central cube.
pub fn mollified_inverse_distance(grid: &Grid, center: [f64; 3], core: f64) -> RealField {
    let l = grid.length();
    RealField::from_fn(grid, Rank::Scalar, |_, x| {
        let d = torus_distance(grid, x, center);
        let cut = smooth_cutoff(d / (l / 4.0));
        cut / (d * d + core * core).sqrt()
    })
}

/// Center of the box.
pub fn box_center(grid: &Grid) -> [f64; 3] {
    let l = grid.length();
    [l / 2.0, l / 2.0, l / 2.0]
}

/// Band-limited random scalar field with spectral envelope |k|^{-slope} on
/// the mode band [m_min, m_max], mean removed, max amplitude 1.
pub fn random_band_scalar(
    grid: &Grid,
    seed: u64,
    stream: u64,
    m_min: usize,
    m_max: usize,
    slope: f64,
) -> RealField {
    let mut rng = SeededStream::new(seed, stream);
    let mut white = RealField::zeros(grid, Rank::Scalar);
    for v in white.data_mut() {
        *v = rng.normal();
    }
    let mut spec = forward_transform(&white).expect("white noise is finite");
    band_filter(grid, spec.data_mut(), m_min, m_max, slope);
    let mut out = inverse_transform_unchecked(&spec);
    out.remove_mean();
    let m = out.max_abs();
    if m > 0.0 {
        out.scale(1.0 / m);
    }
    out
}

fn band_filter(grid: &Grid, data: &mut [Complex64], m_min: usize, m_max: usize, slope: f64) {
    let n = grid.n();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let idx = grid.idx(i, j, k);
                let mi = grid.mode(i) as f64;
                let mj = grid.mode(j) as f64;
                let mk = grid.mode(k) as f64;
                let m = (mi * mi + mj * mj + mk * mk).sqrt();
                if m < m_min as f64 || m > m_max as f64 || m == 0.0 {
                    data[idx] = Complex64::default();
                } else {
                    data[idx] *= m.powf(-slope);
                }
            }
        }
    }
}

/// Band-limited random divergence-free vector field (Leray-projected,
/// dealiased, mean-zero), normalized to unit max amplitude.
pub fn random_solenoidal(
    grid: &Grid,
    seed: u64,
    stream: u64,
    m_min: usize,
    m_max: usize,
    slope: f64,
) -> RealField {
    let mut rng = SeededStream::new(seed, stream);
    let mut white = RealField::zeros(grid, Rank::Vector3);
    for v in white.data_mut() {
        *v = rng.normal();
    }
    let mut spec = forward_transform(&white).expect("white noise is finite");
    for c in 0..3 {
        let nn = grid.node_count();
        let mut comp = spec.data()[c * nn..(c + 1) * nn].to_vec();
        band_filter(grid, &mut comp, m_min, m_max, slope);
        spec.data_mut()[c * nn..(c + 1) * nn].copy_from_slice(&comp);
    }
    let mut proj = leray_project_spectral(&spec);
    dealias_spectral(&mut proj);
    let mut out = inverse_transform_unchecked(&proj);
    out.remove_mean();
    let m = out.max_abs();
    if m > 0.0 {
        out.scale(1.0 / m);
    }
    out
}

/// ABC (Beltrami) flow at wavenumber index `m`: divergence-free, and an
/// eigenfunction of curl, so its self-advection is a pure gradient.
pub fn beltrami(grid: &Grid, m: usize, a: f64, b: f64, c: f64) -> RealField {
    let k = 2.0 * std::f64::consts::PI * m as f64 / grid.length();
    RealField::from_fn(grid, Rank::Vector3, |comp, x| match comp {
        0 => a * (k * x[2]).sin() + c * (k * x[1]).cos(),
        1 => b * (k * x[0]).sin() + a * (k * x[2]).cos(),
        _ => c * (k * x[1]).sin() + b * (k * x[0]).cos(),
    })
}

/// Taylor-Green-type cellular vortex at wavenumber index `m`:
/// divergence-free, band-limited to |mode| <= m per axis.
pub fn taylor_green(grid: &Grid, m: usize) -> RealField {
    let k = 2.0 * std::f64::consts::PI * m as f64 / grid.length();
    RealField::from_fn(grid, Rank::Vector3, |comp, x| match comp {
        0 => (k * x[0]).sin() * (k * x[1]).cos() * (k * x[2]).cos(),
        1 => -(k * x[0]).cos() * (k * x[1]).sin() * (k * x[2]).cos(),
        _ => 0.0,
    })
}

/// Grid-commensurate dilation: out(x) = lambda^power * f(lambda x mod L).
/// `lambda` must divide the resolution evenly for exact resampling.
pub fn dilate(f: &RealField, lambda: usize, power: f64) -> RealField {
    let grid = f.grid().clone();
    let n = grid.n();
    let amp = (lambda as f64).powf(power);
    let mut out = RealField::zeros(&grid, f.rank());
    for c in 0..f.rank().components() {
        let src = f.component(c);
        let dst = out.component_mut(c);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let si = (i * lambda) % n;
                    let sj = (j * lambda) % n;
                    let sk = (k * lambda) % n;
                    dst[grid.idx(i, j, k)] = amp * src[grid.idx(si, sj, sk)];
                }
            }
        }
    }
    out
}

/// The fixed regression family of scalar profiles used by ratio-based norm
/// assertions: mollified profiles, random band-limited fields, and a dilate.
pub fn scalar_regression_family(grid: &Grid, seed: u64) -> Vec<(String, RealField)> {
    let c = box_center(grid);
    let l = grid.length();
    let bump = mollified_bump(grid, c, l / 8.0);
    let singular = mollified_inverse_distance(grid, c, 4.0 * grid.spacing());
    let rand1 = random_band_scalar(grid, seed, 1, 1, grid.n() / 4, 1.0);
    let rand2 = random_band_scalar(grid, seed, 2, 2, grid.n() / 3, 1.5);
    let dil = dilate(&bump, 2, 1.0);
    vec![
        ("bump".to_string(), bump),
        ("singular".to_string(), singular),
        ("band_low".to_string(), rand1),
        ("band_high".to_string(), rand2),
        ("bump_dilate".to_string(), dil),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::spectral_divergence_max;

    #[test]
    fn cutoff_endpoints() {
        assert_eq!(smooth_cutoff(0.2), 1.0);
        assert_eq!(smooth_cutoff(1.3), 0.0);
        let mid = smooth_cutoff(0.75);
        assert!(mid > 0.0 && mid < 1.0);
    }

    #[test]
    fn bump_is_supported_in_central_cube() {
        let g = Grid::new(16, 4.0).unwrap();
        let b = mollified_bump(&g, box_center(&g), 0.5);
        // Corner node is far from the center: must vanish.
        assert_eq!(b.data()[0], 0.0);
        assert!(b.max_abs() > 0.9);
    }

    #[test]
    fn random_solenoidal_is_divergence_free_and_reproducible() {
        let g = Grid::new(16, 2.0).unwrap();
        let v1 = random_solenoidal(&g, 7, 0, 1, 4, 1.0);
        let v2 = random_solenoidal(&g, 7, 0, 1, 4, 1.0);
        assert_eq!(v1.data(), v2.data());
        assert!(spectral_divergence_max(&v1).unwrap() < 1e-10);
        assert!(v1.mean_abs() < 1e-14);
    }

    #[test]
    fn beltrami_and_taylor_green_are_solenoidal() {
        let g = Grid::new(16, 2.0).unwrap();
        let b = beltrami(&g, 1, 1.0, 0.7, 0.3);
        let tg = taylor_green(&g, 1);
        assert!(spectral_divergence_max(&b).unwrap() < 1e-9);
        assert!(spectral_divergence_max(&tg).unwrap() < 1e-9);
    }

    #[test]
    fn dilate_resamples_exactly() {
        let g = Grid::new(8, 2.0).unwrap();
        let f = RealField::from_fn(&g, Rank::Scalar, |_, x| x[0]);
        let d = dilate(&f, 2, 1.0);
        // At node (1,0,0): 2 * f(2h) = 2 * 2h.
        let h = g.spacing();
        assert!((d.data()[g.idx(1, 0, 0)] - 2.0 * 2.0 * h).abs() < 1e-15);
    }
}

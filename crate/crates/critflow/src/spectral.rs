//! Fourier-multiplier calculus on the periodic box: transforms, fractional
//! Laplacian, Riesz transforms, Leray projection, differential operators,
//! and dealiased quadratic products.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Grid, Rank, RealField, SpectralField};

/// Tolerance for Hermitian-symmetry validation on inverse transforms.
pub const HERMITIAN_TOL: f64 = 1e-9;

/// Tolerance on the mean for operations requiring mean-zero input.
pub const MEAN_TOL: f64 = 1e-12;

/// Check that every component mean is below tolerance (relative to field size).
pub fn require_mean_zero(f: &RealField) -> Result<()> {
    let mean = f.mean_abs();
    if mean > MEAN_TOL * (1.0 + f.max_abs()) {
        Err(Error::NonZeroMean { mean })
    } else {
        Ok(())
    }
}

/// Forward transform with the 1/N^3 convention: the zero mode equals the
/// component mean and multiplier symbols match continuum symbols.
pub fn forward_transform(f: &RealField) -> Result<SpectralField> {
    if !f.is_finite() {
        return Err(Error::InvalidField);
    }
    let grid = f.grid().clone();
    let nn = grid.node_count();
    let comps = f.rank().components();
    let scale = 1.0 / nn as f64;
    let mut data = vec![Complex64::default(); comps * nn];
    for c in 0..comps {
        let src = f.component(c);
        let dst = &mut data[c * nn..(c + 1) * nn];
        for (d, s) in dst.iter_mut().zip(src.iter()) {
            *d = Complex64::new(*s, 0.0);
        }
        grid.fft3_inplace(dst, true);
        for d in dst.iter_mut() {
            *d *= scale;
        }
    }
    Ok(SpectralField::from_parts(grid, f.rank(), data))
}

/// Inverse transform back to real samples. Rejects spectra whose Hermitian
/// asymmetry exceeds `HERMITIAN_TOL` relative to the largest coefficient.
pub fn inverse_transform(spec: &SpectralField) -> Result<RealField> {
    let asym = spec.hermitian_asymmetry();
    if asym > HERMITIAN_TOL * (1.0 + spec.max_abs()) {
        return Err(Error::AsymmetricSpectrum {
            max_asymmetry: asym,
        });
    }
    Ok(inverse_transform_unchecked(spec))
}

/// Inverse transform without the symmetry check; the imaginary residue is
/// discarded. Internal hot paths use this after symmetry-preserving ops.
pub(crate) fn inverse_transform_unchecked(spec: &SpectralField) -> RealField {
    let grid = spec.grid().clone();
    let nn = grid.node_count();
    let comps = spec.rank().components();
    let mut out = RealField::zeros(&grid, spec.rank());
    let mut buf = vec![Complex64::default(); nn];
    for c in 0..comps {
        buf.copy_from_slice(spec.component(c));
        grid.fft3_inplace(&mut buf, false);
        for (o, b) in out.component_mut(c).iter_mut().zip(buf.iter()) {
            *o = b.re;
        }
    }
    out
}

/// A wavevector -> complex symbol, scalar (rank-preserving) or 3x3 matrix
/// (vector-to-vector), with optional homogeneity metadata
/// (`eval(t k) = t^sigma eval(k)` for homogeneous symbols).
pub struct MultiplierSymbol {
    kind: SymbolKind,
    zero_mode_value: Complex64,
    homogeneity: Option<f64>,
}

enum SymbolKind {
    Scalar(Box<dyn Fn([f64; 3]) -> Complex64 + Sync + Send>),
    Matrix(Box<dyn Fn([f64; 3]) -> [[Complex64; 3]; 3] + Sync + Send>),
}

impl MultiplierSymbol {
    /// Scalar symbol; the zero mode maps to 0.
    pub fn scalar<F>(eval: F, homogeneity: Option<f64>) -> MultiplierSymbol
    where
        F: Fn([f64; 3]) -> Complex64 + Sync + Send + 'static,
    {
        MultiplierSymbol {
            kind: SymbolKind::Scalar(Box::new(eval)),
            zero_mode_value: Complex64::default(),
            homogeneity,
        }
    }

    /// Matrix symbol acting on vector fields; the zero mode maps to 0.
    pub fn matrix<F>(eval: F, homogeneity: Option<f64>) -> MultiplierSymbol
    where
        F: Fn([f64; 3]) -> [[Complex64; 3]; 3] + Sync + Send + 'static,
    {
        MultiplierSymbol {
            kind: SymbolKind::Matrix(Box::new(eval)),
            zero_mode_value: Complex64::default(),
            homogeneity,
        }
    }

    /// Override the value assigned to the zero wavevector (default 0).
    pub fn with_zero_mode(mut self, value: Complex64) -> MultiplierSymbol {
        self.zero_mode_value = value;
        self
    }

    pub fn zero_mode_value(&self) -> Complex64 {
        self.zero_mode_value
    }

    pub fn homogeneity(&self) -> Option<f64> {
        self.homogeneity
    }

    pub fn eval_scalar(&self, k: [f64; 3]) -> Option<Complex64> {
        match &self.kind {
            SymbolKind::Scalar(f) => Some(f(k)),
            SymbolKind::Matrix(_) => None,
        }
    }

    pub fn eval_matrix(&self, k: [f64; 3]) -> Option<[[Complex64; 3]; 3]> {
        match &self.kind {
            SymbolKind::Matrix(f) => Some(f(k)),
            SymbolKind::Scalar(_) => None,
        }
    }

    /// The identity symbol (zero mode included).
    pub fn identity() -> MultiplierSymbol {
        MultiplierSymbol::scalar(|_| Complex64::new(1.0, 0.0), Some(0.0))
            .with_zero_mode(Complex64::new(1.0, 0.0))
    }

    /// |k|^alpha, the fractional Laplacian symbol of order alpha.
    pub fn power_of_laplacian(alpha: f64) -> MultiplierSymbol {
        MultiplierSymbol::scalar(
            move |k| {
                let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
                Complex64::new(k2.powf(alpha / 2.0), 0.0)
            },
            Some(alpha),
        )
    }

    /// i k_j / |k|, the axis-`j` Riesz transform symbol.
    pub fn riesz(axis: usize) -> MultiplierSymbol {
        MultiplierSymbol::scalar(
            move |k| {
                let norm = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt();
                Complex64::new(0.0, k[axis] / norm)
            },
            Some(0.0),
        )
    }

    /// Leray projection matrix I - k k^T / |k|^2.
    pub fn leray() -> MultiplierSymbol {
        MultiplierSymbol::matrix(
            |k| {
                let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
                let mut m = [[Complex64::default(); 3]; 3];
                for (i, row) in m.iter_mut().enumerate() {
                    for (j, entry) in row.iter_mut().enumerate() {
                        let delta = if i == j { 1.0 } else { 0.0 };
                        *entry = Complex64::new(delta - k[i] * k[j] / k2, 0.0);
                    }
                }
                m
            },
            Some(0.0),
        )
    }

    /// The scalar heat factor e^{-t |k|^2} (zero mode maps to 1).
    pub fn heat(t: f64) -> MultiplierSymbol {
        MultiplierSymbol::scalar(
            move |k| {
                let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
                Complex64::new((-t * k2).exp(), 0.0)
            },
            None,
        )
        .with_zero_mode(Complex64::new(1.0, 0.0))
    }

    /// Resolvent factor 1/(lambda - |k|^2) of the Laplacian term; the zero
    /// mode carries 1/lambda.
    pub fn laplacian_resolvent(lambda: Complex64) -> MultiplierSymbol {
        MultiplierSymbol::scalar(
            move |k| {
                let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
                1.0 / (lambda - k2)
            },
            None,
        )
        .with_zero_mode(1.0 / lambda)
    }
}

/// Apply a multiplier symbol per wavevector.
pub fn apply_multiplier(field: &SpectralField, symbol: &MultiplierSymbol) -> Result<SpectralField> {
    let grid = field.grid().clone();
    let n = grid.n();
    let nn = grid.node_count();
    match &symbol.kind {
        SymbolKind::Scalar(eval) => {
            let mut out = field.clone();
            // Precompute the symbol once per wavevector, reuse for all components.
            let mut sym = vec![Complex64::default(); nn];
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let idx = grid.idx(i, j, k);
                        sym[idx] = if idx == 0 {
                            symbol.zero_mode_value
                        } else {
                            eval(grid.wavevector(i, j, k))
                        };
                    }
                }
            }
            for c in 0..field.rank().components() {
                let comp = out.component_mut(c);
                for (v, s) in comp.iter_mut().zip(sym.iter()) {
                    *v *= *s;
                }
            }
            Ok(out)
        }
        SymbolKind::Matrix(eval) => {
            if field.rank() != Rank::Vector3 {
                return Err(Error::RankMismatch(format!(
                    "matrix symbol requires a vector3 field, got {}",
                    field.rank()
                )));
            }
            let mut out = SpectralField::zeros(&grid, Rank::Vector3);
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let idx = grid.idx(i, j, k);
                        if idx == 0 {
                            // zero_mode_value scales the input vector.
                            for c in 0..3 {
                                let v = field.component(c)[0] * symbol.zero_mode_value;
                                out.component_mut(c)[0] = v;
                            }
                            continue;
                        }
                        let m = eval(grid.wavevector(i, j, k));
                        let v = [
                            field.component(0)[idx],
                            field.component(1)[idx],
                            field.component(2)[idx],
                        ];
                        for (r, row) in m.iter().enumerate() {
                            let mut acc = Complex64::default();
                            for (c, entry) in row.iter().enumerate() {
                                acc += entry * v[c];
                            }
                            out.component_mut(r)[idx] = acc;
                        }
                    }
                }
            }
            Ok(out)
        }
    }
}

/// Apply a scalar complex symbol `m(|k|^2, k)` directly to spectral data of
/// any rank. Internal fast path: no boxing, zero mode passed k = 0.
pub(crate) fn map_modes<F>(field: &SpectralField, f: F) -> SpectralField
where
    F: Fn([f64; 3], Complex64) -> Complex64,
{
    let grid = field.grid().clone();
    let n = grid.n();
    let nn = grid.node_count();
    let mut out = field.clone();
    let mut sym_cache: Vec<[f64; 3]> = Vec::with_capacity(nn);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                sym_cache.push(grid.wavevector(i, j, k));
            }
        }
    }
    for c in 0..field.rank().components() {
        let comp = out.component_mut(c);
        for (idx, v) in comp.iter_mut().enumerate() {
            *v = f(sym_cache[idx], *v);
        }
    }
    out
}

/// (-Delta)^{alpha/2}: the symbol |k|^alpha with the zero mode mapped to 0.
///
/// Negative orders require mean-zero input. Supported range alpha in [-4, 4].
pub fn fractional_laplacian(f: &RealField, alpha: f64) -> Result<RealField> {
    let spec = forward_transform(f)?;
    let spec = fractional_laplacian_spectral(&spec, alpha)?;
    Ok(inverse_transform_unchecked(&spec))
}

/// Spectral-side fractional Laplacian.
pub fn fractional_laplacian_spectral(spec: &SpectralField, alpha: f64) -> Result<SpectralField> {
    if !(-4.0..=4.0).contains(&alpha) {
        return Err(Error::UnsupportedOrder { order: alpha });
    }
    if alpha < 0.0 {
        let mean = (0..spec.rank().components())
            .map(|c| spec.zero_mode(c).norm())
            .fold(0.0, f64::max);
        if mean > MEAN_TOL * (1.0 + spec.max_abs()) {
            return Err(Error::NonZeroMean { mean });
        }
    }
    if alpha == 0.0 {
        let mut out = spec.clone();
        for c in 0..out.rank().components() {
            out.component_mut(c)[0] = Complex64::default();
        }
        return Ok(out);
    }
    Ok(map_modes(spec, |k, v| {
        let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
        if k2 == 0.0 {
            Complex64::default()
        } else {
            v * k2.powf(alpha / 2.0)
        }
    }))
}

/// j-th Riesz transform: symbol i k_j / |k| on a mean-zero field.
/// The Nyquist plane of the differentiated axis is zeroed to preserve
/// Hermitian symmetry of the odd symbol.
pub fn riesz_transform(f: &RealField, axis: usize) -> Result<RealField> {
    require_mean_zero(f)?;
    let spec = forward_transform(f)?;
    let out = riesz_transform_spectral(&spec, axis);
    Ok(inverse_transform_unchecked(&out))
}

pub fn riesz_transform_spectral(spec: &SpectralField, axis: usize) -> SpectralField {
    let nyq = nyquist_wavenumber(spec.grid());
    map_modes(spec, |k, v| {
        let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
        if k2 == 0.0 || k[axis] == nyq {
            Complex64::default()
        } else {
            v * Complex64::new(0.0, k[axis] / k2.sqrt())
        }
    })
}

/// Wavenumber of the unmatched Nyquist mode m = -N/2 (negative by the
/// half-open mode convention).
fn nyquist_wavenumber(grid: &Grid) -> f64 {
    -(2.0 * std::f64::consts::PI / grid.length()) * (grid.n() as f64 / 2.0)
}

/// Helmholtz-Leray projection onto divergence-free vector fields:
/// multiplier I - k k^T/|k|^2 on a mean-zero vector field.
pub fn leray_project(v: &RealField) -> Result<RealField> {
    if v.rank() != Rank::Vector3 {
        return Err(Error::RankMismatch(format!(
            "leray projection requires a vector3 field, got {}",
            v.rank()
        )));
    }
    require_mean_zero(v)?;
    let spec = forward_transform(v)?;
    let out = leray_project_spectral(&spec);
    Ok(inverse_transform_unchecked(&out))
}

pub fn leray_project_spectral(spec: &SpectralField) -> SpectralField {
    let grid = spec.grid().clone();
    let n = grid.n();
    let nyq = nyquist_wavenumber(&grid);
    let mut out = spec.clone();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let idx = grid.idx(i, j, k);
                let kv = grid.wavevector(i, j, k);
                let k2 = kv[0] * kv[0] + kv[1] * kv[1] + kv[2] * kv[2];
                // The zero mode has no projection; the unpaired Nyquist
                // planes cannot carry the odd off-diagonal entries of the
                // projection matrix and are zeroed like all derivative
                // symbols.
                if k2 == 0.0 || kv[0] == nyq || kv[1] == nyq || kv[2] == nyq {
                    for c in 0..3 {
                        out.component_mut(c)[idx] = Complex64::default();
                    }
                    continue;
                }
                let dot = kv[0] * spec.component(0)[idx]
                    + kv[1] * spec.component(1)[idx]
                    + kv[2] * spec.component(2)[idx];
                for c in 0..3 {
                    let v = spec.component(c)[idx] - dot * kv[c] / k2;
                    out.component_mut(c)[idx] = v;
                }
            }
        }
    }
    out
}

/// Delta^{-1}: symbol -1/|k|^2 so that Delta(Delta^{-1} f) = f on mean-zero
/// fields.
pub fn inverse_laplacian(f: &RealField) -> Result<RealField> {
    require_mean_zero(f)?;
    let spec = forward_transform(f)?;
    let out = inverse_laplacian_spectral(&spec);
    Ok(inverse_transform_unchecked(&out))
}

pub fn inverse_laplacian_spectral(spec: &SpectralField) -> SpectralField {
    map_modes(spec, |k, v| {
        let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
        if k2 == 0.0 {
            Complex64::default()
        } else {
            -v / k2
        }
    })
}

/// Gradient of a scalar field: (d1 f, d2 f, d3 f) via i k_j.
pub fn gradient(f: &RealField) -> Result<RealField> {
    if f.rank() != Rank::Scalar {
        return Err(Error::RankMismatch(format!(
            "gradient requires a scalar field, got {}",
            f.rank()
        )));
    }
    let spec = forward_transform(f)?;
    let grid = spec.grid().clone();
    let mut out = SpectralField::zeros(&grid, Rank::Vector3);
    for axis in 0..3 {
        let d = derivative_spectral(&spec, axis, 0);
        out.component_mut(axis).copy_from_slice(d.component(0));
    }
    Ok(inverse_transform_unchecked(&out))
}

/// Spectral partial derivative of one component along `axis`
/// (i k_axis multiplication; the Nyquist plane of that axis is zeroed).
pub(crate) fn derivative_spectral(
    spec: &SpectralField,
    axis: usize,
    component: usize,
) -> SpectralField {
    let grid = spec.grid().clone();
    let nyq = nyquist_wavenumber(&grid);
    let mut out = SpectralField::zeros(&grid, Rank::Scalar);
    let src = spec.component(component);
    let dst = out.component_mut(0);
    let n = grid.n();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let idx = grid.idx(i, j, k);
                let kv = grid.wavevector(i, j, k);
                dst[idx] = if kv[axis] == nyq {
                    Complex64::default()
                } else {
                    src[idx] * Complex64::new(0.0, kv[axis])
                };
            }
        }
    }
    out
}

/// Divergence of a vector field (scalar output).
pub fn divergence(v: &RealField) -> Result<RealField> {
    if v.rank() != Rank::Vector3 {
        return Err(Error::RankMismatch(format!(
            "divergence requires a vector3 field, got {}",
            v.rank()
        )));
    }
    let spec = forward_transform(v)?;
    Ok(inverse_transform_unchecked(&divergence_spectral(&spec)))
}

pub fn divergence_spectral(spec: &SpectralField) -> SpectralField {
    let grid = spec.grid().clone();
    let mut out = SpectralField::zeros(&grid, Rank::Scalar);
    for axis in 0..3 {
        let d = derivative_spectral(spec, axis, axis);
        out.add_scaled(&d, 1.0);
    }
    out
}

/// Divergence of a tensor field, contracting the second index:
/// (div T)_i = sum_j d_j T_{ij}, with T_{ij} stored at component 3i + j.
pub fn tensor_divergence(t: &RealField) -> Result<RealField> {
    if t.rank() != Rank::Tensor3x3 {
        return Err(Error::RankMismatch(format!(
            "tensor divergence requires a tensor3x3 field, got {}",
            t.rank()
        )));
    }
    let spec = forward_transform(t)?;
    Ok(inverse_transform_unchecked(&tensor_divergence_spectral(
        &spec,
    )))
}

pub fn tensor_divergence_spectral(spec: &SpectralField) -> SpectralField {
    let grid = spec.grid().clone();
    let mut out = SpectralField::zeros(&grid, Rank::Vector3);
    for i in 0..3 {
        for j in 0..3 {
            let d = derivative_spectral(spec, j, 3 * i + j);
            let dst = out.component_mut(i);
            for (a, b) in dst.iter_mut().zip(d.component(0).iter()) {
                *a += b;
            }
        }
    }
    out
}

/// Maximum |k . v(k)| over all wavevectors: the spectral divergence used by
/// solenoidality checks.
pub fn spectral_divergence_max(v: &RealField) -> Result<f64> {
    let spec = forward_transform(v)?;
    Ok(spectral_divergence_max_of(&spec))
}

pub fn spectral_divergence_max_of(spec: &SpectralField) -> f64 {
    let grid = spec.grid().clone();
    let n = grid.n();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let idx = grid.idx(i, j, k);
                let kv = grid.wavevector(i, j, k);
                let dot = kv[0] * spec.component(0)[idx]
                    + kv[1] * spec.component(1)[idx]
                    + kv[2] * spec.component(2)[idx];
                worst = worst.max(dot.norm());
            }
        }
    }
    worst
}

/// Zero every mode with any |m_axis| > N/3 in place (two-thirds rule).
pub fn dealias_spectral(spec: &mut SpectralField) {
    let grid = spec.grid().clone();
    let n = grid.n();
    let cutoff = n as f64 / 3.0;
    for c in 0..spec.rank().components() {
        let comp = spec.component_mut(c);
        for i in 0..n {
            let mi = grid.mode(i).unsigned_abs() as f64;
            for j in 0..n {
                let mj = grid.mode(j).unsigned_abs() as f64;
                for k in 0..n {
                    let mk = grid.mode(k).unsigned_abs() as f64;
                    if mi > cutoff || mj > cutoff || mk > cutoff {
                        comp[(i * n + j) * n + k] = Complex64::default();
                    }
                }
            }
        }
    }
}

/// Outer product u tensor v in physical space followed by two-thirds
/// truncation; returns the spectral tensor (component 3i + j = u_i v_j).
pub fn dealiased_tensor_product_spectral(u: &RealField, v: &RealField) -> Result<SpectralField> {
    u.grid().check_same(v.grid(), "tensor product")?;
    if u.rank() != Rank::Vector3 || v.rank() != Rank::Vector3 {
        return Err(Error::RankMismatch(
            "tensor product requires two vector3 fields".to_string(),
        ));
    }
    let grid = u.grid().clone();
    let nn = grid.node_count();
    let mut prod = RealField::zeros(&grid, Rank::Tensor3x3);
    for i in 0..3 {
        for j in 0..3 {
            let a = u.component(i);
            let b = v.component(j);
            let dst = prod.component_mut(3 * i + j);
            for idx in 0..nn {
                dst[idx] = a[idx] * b[idx];
            }
        }
    }
    let mut spec = forward_transform(&prod)?;
    dealias_spectral(&mut spec);
    Ok(spec)
}

/// Physical-space dealiased tensor product u tensor v.
pub fn dealiased_tensor_product(u: &RealField, v: &RealField) -> Result<RealField> {
    let spec = dealiased_tensor_product_spectral(u, v)?;
    Ok(inverse_transform_unchecked(&spec))
}

/// Divergence of the dealiased symmetric product u tensor v + v tensor u,
/// returned spectrally. Exploits symmetry: only 6 unique components are
/// transformed. This is the hot kernel of the perturbed operator.
pub fn div_dealiased_sym_product_spectral(u: &RealField, v: &RealField) -> Result<SpectralField> {
    u.grid().check_same(v.grid(), "symmetric product")?;
    let grid = u.grid().clone();
    let nn = grid.node_count();
    let n = grid.n();
    let scale = 1.0 / nn as f64;
    let cutoff = n as f64 / 3.0;
    let nyq = nyquist_wavenumber(&grid);

    // Unique components of S = u (x) v + v (x) u, upper triangle.
    let pairs = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];
    let mut spectra: Vec<Vec<Complex64>> = Vec::with_capacity(6);
    for &(i, j) in &pairs {
        let a_i = u.component(i);
        let a_j = u.component(j);
        let b_i = v.component(i);
        let b_j = v.component(j);
        let mut buf = vec![Complex64::default(); nn];
        for idx in 0..nn {
            let s = a_i[idx] * b_j[idx] + b_i[idx] * a_j[idx];
            buf[idx] = Complex64::new(s, 0.0);
        }
        grid.fft3_inplace(&mut buf, true);
        for b in buf.iter_mut() {
            *b *= scale;
        }
        spectra.push(buf);
    }
    let sym_index = |i: usize, j: usize| -> usize {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        match (a, b) {
            (0, 0) => 0,
            (0, 1) => 1,
            (0, 2) => 2,
            (1, 1) => 3,
            (1, 2) => 4,
            (2, 2) => 5,
            _ => unreachable!(),
        }
    };

    let mut out = SpectralField::zeros(&grid, Rank::Vector3);
    for i in 0..n {
        let mi = grid.mode(i).unsigned_abs() as f64;
        for j in 0..n {
            let mj = grid.mode(j).unsigned_abs() as f64;
            for k in 0..n {
                let mk = grid.mode(k).unsigned_abs() as f64;
                let idx = (i * n + j) * n + k;
                if mi > cutoff || mj > cutoff || mk > cutoff {
                    continue;
                }
                let kv = grid.wavevector(i, j, k);
                for row in 0..3 {
                    let mut acc = Complex64::default();
                    for col in 0..3 {
                        if kv[col] == nyq {
                            continue;
                        }
                        acc += spectra[sym_index(row, col)][idx] * Complex64::new(0.0, kv[col]);
                    }
                    out.component_mut(row)[idx] = acc;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cos_x1(grid: &Grid) -> RealField {
        let l = grid.length();
        RealField::from_fn(grid, Rank::Scalar, |_, x| (2.0 * PI * x[0] / l).cos())
    }

    #[test]
    fn constant_field_transforms_to_zero_mode_only() {
        let g = Grid::new(8, 2.0).unwrap();
        let f = RealField::from_fn(&g, Rank::Scalar, |_, _| 3.5);
        let spec = forward_transform(&f).unwrap();
        assert!((spec.zero_mode(0) - Complex64::new(3.5, 0.0)).norm() < 1e-13);
        let rest: f64 = spec.data()[1..].iter().map(|v| v.norm()).sum();
        assert!(rest < 1e-12);
    }

    #[test]
    fn single_harmonic_has_two_modes() {
        let g = Grid::new(8, 2.0).unwrap();
        let f = cos_x1(&g);
        let spec = forward_transform(&f).unwrap();
        let n = g.n();
        let plus = spec.component(0)[g.idx(1, 0, 0)];
        let minus = spec.component(0)[g.idx(n - 1, 0, 0)];
        assert!((plus - Complex64::new(0.5, 0.0)).norm() < 1e-13);
        assert!((minus - Complex64::new(0.5, 0.0)).norm() < 1e-13);
        let mut others = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if (i == 1 || i == n - 1) && j == 0 && k == 0 {
                        continue;
                    }
                    others += spec.component(0)[g.idx(i, j, k)].norm();
                }
            }
        }
        assert!(others < 1e-12);
    }

    #[test]
    fn non_finite_input_rejected() {
        let g = Grid::new(4, 1.0).unwrap();
        let mut f = RealField::zeros(&g, Rank::Scalar);
        f.data_mut()[3] = f64::NAN;
        assert!(matches!(forward_transform(&f), Err(Error::InvalidField)));
    }

    #[test]
    fn asymmetric_spectrum_rejected() {
        let g = Grid::new(4, 1.0).unwrap();
        let mut spec = SpectralField::zeros(&g, Rank::Scalar);
        spec.component_mut(0)[g.idx(1, 0, 0)] = Complex64::new(1.0, 0.5);
        // Missing the conjugate partner at (3,0,0).
        assert!(matches!(
            inverse_transform(&spec),
            Err(Error::AsymmetricSpectrum { .. })
        ));
    }

    #[test]
    fn conjugate_pair_inverts_to_cosine() {
        let g = Grid::new(8, 2.0).unwrap();
        let n = g.n();
        let mut spec = SpectralField::zeros(&g, Rank::Scalar);
        spec.component_mut(0)[g.idx(1, 0, 0)] = Complex64::new(0.5, 0.0);
        spec.component_mut(0)[g.idx(n - 1, 0, 0)] = Complex64::new(0.5, 0.0);
        let f = inverse_transform(&spec).unwrap();
        let expect = cos_x1(&g);
        assert!(f.max_diff(&expect) < 1e-13);
    }

    #[test]
    fn laplacian_symbol_on_eigenfunction() {
        let g = Grid::new(8, 2.0 * PI).unwrap();
        let f = cos_x1(&g); // cos(x1) when L = 2 pi
        let spec = forward_transform(&f).unwrap();
        let m = MultiplierSymbol::power_of_laplacian(2.0);
        let out = apply_multiplier(&spec, &m).unwrap();
        let back = inverse_transform(&out).unwrap();
        assert!(back.max_diff(&f) < 1e-12);
    }

    #[test]
    fn identity_multiplier_keeps_zero_mode() {
        let g = Grid::new(4, 1.0).unwrap();
        let f = RealField::from_fn(&g, Rank::Scalar, |_, x| 1.0 + x[0]);
        let spec = forward_transform(&f).unwrap();
        let out = apply_multiplier(&spec, &MultiplierSymbol::identity()).unwrap();
        let back = inverse_transform(&out).unwrap();
        assert!(back.max_diff(&f) < 1e-12);
    }

    #[test]
    fn riesz_single_harmonic() {
        let g = Grid::new(16, 2.0).unwrap();
        let l = g.length();
        let f = cos_x1(&g);
        let r1 = riesz_transform(&f, 0).unwrap();
        let expect = RealField::from_fn(&g, Rank::Scalar, |_, x| -(2.0 * PI * x[0] / l).sin());
        assert!(r1.max_diff(&expect) < 1e-12);
        let r2 = riesz_transform(&f, 1).unwrap();
        assert!(r2.max_abs() < 1e-12);
    }

    #[test]
    fn riesz_rejects_nonzero_mean() {
        let g = Grid::new(8, 1.0).unwrap();
        let f = RealField::from_fn(&g, Rank::Scalar, |_, _| 1.0);
        assert!(matches!(
            riesz_transform(&f, 0),
            Err(Error::NonZeroMean { .. })
        ));
    }

    #[test]
    fn gradient_of_cosine() {
        let g = Grid::new(16, 2.0).unwrap();
        let l = g.length();
        let f = cos_x1(&g);
        let grad = gradient(&f).unwrap();
        let expect = RealField::from_fn(&g, Rank::Vector3, |c, x| {
            if c == 0 {
                -(2.0 * PI / l) * (2.0 * PI * x[0] / l).sin()
            } else {
                0.0
            }
        });
        assert!(grad.max_diff(&expect) < 1e-12);
    }

    #[test]
    fn leray_kills_gradients_and_fixes_solenoidal() {
        let g = Grid::new(16, 2.0).unwrap();
        let l = g.length();
        let phi = cos_x1(&g);
        let grad = gradient(&phi).unwrap();
        let projected = leray_project(&grad).unwrap();
        assert!(projected.max_abs() < 1e-12);

        let v = RealField::from_fn(&g, Rank::Vector3, |c, x| {
            if c == 0 {
                (2.0 * PI * x[1] / l).sin()
            } else {
                0.0
            }
        });
        let pv = leray_project(&v).unwrap();
        assert!(pv.max_diff(&v) < 1e-12);
        assert!(spectral_divergence_max(&pv).unwrap() < 1e-10);
    }

    #[test]
    fn leray_single_mode_projection_matrix() {
        // Mode k along (1,1,0), input e_1: projection is (1/2, -1/2, 0).
        let g = Grid::new(8, 2.0).unwrap();
        let n = g.n();
        let mut spec = SpectralField::zeros(&g, Rank::Vector3);
        spec.component_mut(0)[g.idx(1, 1, 0)] = Complex64::new(1.0, 0.0);
        spec.component_mut(0)[g.idx(n - 1, n - 1, 0)] = Complex64::new(1.0, 0.0);
        let out = leray_project_spectral(&spec);
        let p0 = out.component(0)[g.idx(1, 1, 0)];
        let p1 = out.component(1)[g.idx(1, 1, 0)];
        let p2 = out.component(2)[g.idx(1, 1, 0)];
        assert!((p0 - Complex64::new(0.5, 0.0)).norm() < 1e-13);
        assert!((p1 - Complex64::new(-0.5, 0.0)).norm() < 1e-13);
        assert!(p2.norm() < 1e-13);
    }

    #[test]
    fn inverse_laplacian_single_harmonic_scale() {
        let g = Grid::new(8, 2.0).unwrap();
        let l = g.length();
        let f = cos_x1(&g);
        let out = inverse_laplacian(&f).unwrap();
        // Delta^{-1} cos(k x) = -cos(k x)/k^2 with k = 2 pi / L.
        let factor = -(l * l) / (4.0 * PI * PI);
        assert!(out.max_diff(&f.scaled(factor)) < 1e-12);
        // Zero field maps to zero.
        let z = RealField::zeros(&g, Rank::Scalar);
        assert!(inverse_laplacian(&z).unwrap().max_abs() == 0.0);
    }

    #[test]
    fn single_mode_product_untouched_by_dealiasing() {
        let g = Grid::new(8, 2.0).unwrap();
        let u = RealField::from_fn(&g, Rank::Vector3, |c, x| {
            if c == 0 {
                (2.0 * PI * x[0] / 2.0).cos()
            } else {
                0.0
            }
        });
        let t = dealiased_tensor_product(&u, &u).unwrap();
        // cos^2 = (1 + cos(2k x))/2: modes m1 in {-2, 0, 2} survive at N=8.
        let spec = forward_transform(&t).unwrap();
        let c00 = spec.component(0);
        assert!((c00[g.idx(0, 0, 0)] - Complex64::new(0.5, 0.0)).norm() < 1e-13);
        assert!((c00[g.idx(2, 0, 0)] - Complex64::new(0.25, 0.0)).norm() < 1e-13);
        assert!((c00[g.idx(6, 0, 0)] - Complex64::new(0.25, 0.0)).norm() < 1e-13);
        let z = RealField::zeros(&g, Rank::Vector3);
        assert!(dealiased_tensor_product(&z, &u).unwrap().max_abs() == 0.0);
    }

    #[test]
    fn grid_mismatch_detected() {
        let g1 = Grid::new(8, 1.0).unwrap();
        let g2 = Grid::new(16, 1.0).unwrap();
        let u = RealField::zeros(&g1, Rank::Vector3);
        let v = RealField::zeros(&g2, Rank::Vector3);
        assert!(matches!(
            dealiased_tensor_product(&u, &v),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn rank_mismatch_for_matrix_symbol() {
        let g = Grid::new(4, 1.0).unwrap();
        let f = RealField::zeros(&g, Rank::Scalar);
        let spec = forward_transform(&f).unwrap();
        assert!(matches!(
            apply_multiplier(&spec, &MultiplierSymbol::leray()),
            Err(Error::RankMismatch(_))
        ));
    }
}

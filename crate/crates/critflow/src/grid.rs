//! Periodic-box discretization and the fields living on it.
//!
//! The box is a 3-torus of side `L` sampled on `N` equispaced nodes per
//! axis. Wavevectors are `k = (2 pi / L) * m` with integer modes
//! `m in [-N/2, N/2)` per axis. The forward transform carries the `1/N^3`
//! factor, so the zero-mode coefficient equals the field mean and
//! multiplier symbols match their continuum counterparts with no extra
//! normalization.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Tensor rank of a field: how many components it carries per node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rank {
    Scalar,
    Vector3,
    Tensor3x3,
}

impl Rank {
    pub fn components(self) -> usize {
        match self {
            Rank::Scalar => 1,
            Rank::Vector3 => 3,
            Rank::Tensor3x3 => 9,
        }
    }

    /// Code used by the VFLD1 dump format.
    pub fn code(self) -> u8 {
        match self {
            Rank::Scalar => 0,
            Rank::Vector3 => 1,
            Rank::Tensor3x3 => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Rank> {
        match code {
            0 => Some(Rank::Scalar),
            1 => Some(Rank::Vector3),
            2 => Some(Rank::Tensor3x3),
            _ => None,
        }
    }
}

impl fmt::Display for Rank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rank::Scalar => write!(f, "scalar"),
            Rank::Vector3 => write!(f, "vector3"),
            Rank::Tensor3x3 => write!(f, "tensor3x3"),
        }
    }
}

struct GridInner {
    n: usize,
    length: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

/// Periodic box of side `length` with `n` nodes per axis (`n` even, >= 4).
///
/// Construction plans the FFTs once; clones share the plans and are cheap.
#[derive(Clone)]
pub struct Grid(Arc<GridInner>);

impl Grid {
    pub fn new(n: usize, length: f64) -> Result<Grid> {
        if n < 4 || n % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "grid resolution must be even and >= 4, got {n}"
            )));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "box length must be positive and finite, got {length}"
            )));
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        Ok(Grid(Arc::new(GridInner {
            n,
            length,
            fwd,
            inv,
        })))
    }

    pub fn n(&self) -> usize {
        self.0.n
    }

    pub fn length(&self) -> f64 {
        self.0.length
    }

    /// Node spacing h = L / N.
    pub fn spacing(&self) -> f64 {
        self.0.length / self.0.n as f64
    }

    /// Number of nodes per component.
    pub fn node_count(&self) -> usize {
        self.0.n * self.0.n * self.0.n
    }

    /// Cell volume h^3, the quadrature weight of one node.
    pub fn cell_volume(&self) -> f64 {
        let h = self.spacing();
        h * h * h
    }

    /// Linear index of node (i, j, k), C-order with k fastest.
    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.0.n + j) * self.0.n + k
    }

    /// Physical coordinates of node (i, j, k).
    #[inline]
    pub fn position(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let h = self.spacing();
        [i as f64 * h, j as f64 * h, k as f64 * h]
    }

    /// Integer mode for axis index `i`: `i` for `i < N/2`, else `i - N`.
    #[inline]
    pub fn mode(&self, i: usize) -> i64 {
        let n = self.0.n as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    /// Wavevector of the spectral node (i, j, k): 2 pi m / L per axis.
    #[inline]
    pub fn wavevector(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let scale = 2.0 * std::f64::consts::PI / self.0.length;
        [
            scale * self.mode(i) as f64,
            scale * self.mode(j) as f64,
            scale * self.mode(k) as f64,
        ]
    }

    /// Smallest positive Laplacian eigenvalue (2 pi / L)^2; its inverse sets
    /// the time window where algebraic decay fits are meaningful.
    pub fn spectral_gap(&self) -> f64 {
        let k0 = 2.0 * std::f64::consts::PI / self.0.length;
        k0 * k0
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        self.0.n == other.0.n && self.0.length == other.0.length
    }

    pub fn check_same(&self, other: &Grid, what: &str) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{what}: {}x{} (L={}) vs {}x{} (L={})",
                self.0.n, self.0.n, self.0.length, other.0.n, other.0.n, other.0.length
            )))
        }
    }

    /// Minimum-image displacement from node `a` to node `b` along one axis,
    /// in physical units.
    #[inline]
    pub fn min_image(&self, a: usize, b: usize) -> f64 {
        let n = self.0.n as i64;
        let mut d = b as i64 - a as i64;
        if d > n / 2 {
            d -= n;
        } else if d < -(n / 2) {
            d += n;
        }
        d as f64 * self.spacing()
    }

    /// In-place complex FFT along every axis of a length-N^3 buffer.
    /// `forward` applies e^{-ik.x} sums without normalization.
    pub(crate) fn fft3_inplace(&self, data: &mut [Complex64], forward: bool) {
        let n = self.0.n;
        assert_eq!(data.len(), n * n * n);
        let plan = if forward { &self.0.fwd } else { &self.0.inv };
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];

        // Axis 2 is contiguous: one batched pass over the whole buffer.
        plan.process_with_scratch(data, &mut scratch);

        // Axes 1 and 0 via gather/scatter of strided lines.
        let mut line = vec![Complex64::default(); n];
        for i in 0..n {
            for k in 0..n {
                let base = i * n * n + k;
                for j in 0..n {
                    line[j] = data[base + j * n];
                }
                plan.process_with_scratch(&mut line, &mut scratch);
                for j in 0..n {
                    data[base + j * n] = line[j];
                }
            }
        }
        for j in 0..n {
            for k in 0..n {
                let base = j * n + k;
                for i in 0..n {
                    line[i] = data[base + i * n * n];
                }
                plan.process_with_scratch(&mut line, &mut scratch);
                for i in 0..n {
                    data[base + i * n * n] = line[i];
                }
            }
        }
    }
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Grid({}^3, L={})", self.0.n, self.0.length)
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.same_as(other)
    }
}

/// Real-valued samples at grid nodes, component-major C-order.
#[derive(Clone, Debug)]
pub struct RealField {
    grid: Grid,
    rank: Rank,
    data: Vec<f64>,
}

impl RealField {
    pub fn zeros(grid: &Grid, rank: Rank) -> RealField {
        RealField {
            grid: grid.clone(),
            rank,
            data: vec![0.0; rank.components() * grid.node_count()],
        }
    }

    /// Build from a per-node closure receiving (component, position).
    pub fn from_fn<F: Fn(usize, [f64; 3]) -> f64>(grid: &Grid, rank: Rank, f: F) -> RealField {
        let n = grid.n();
        let mut out = RealField::zeros(grid, rank);
        for c in 0..rank.components() {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let v = f(c, grid.position(i, j, k));
                        out.data[c * grid.node_count() + grid.idx(i, j, k)] = v;
                    }
                }
            }
        }
        out
    }

    pub fn from_data(grid: &Grid, rank: Rank, data: Vec<f64>) -> Result<RealField> {
        if data.len() != rank.components() * grid.node_count() {
            return Err(Error::InvalidConfig(format!(
                "field data length {} does not match {} components x {} nodes",
                data.len(),
                rank.components(),
                grid.node_count()
            )));
        }
        Ok(RealField {
            grid: grid.clone(),
            rank,
            data,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn rank(&self) -> Rank {
        self.rank
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let nn = self.grid.node_count();
        &self.data[c * nn..(c + 1) * nn]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        let nn = self.grid.node_count();
        &mut self.data[c * nn..(c + 1) * nn]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Mean of one component.
    pub fn component_mean(&self, c: usize) -> f64 {
        let nn = self.grid.node_count() as f64;
        self.component(c).iter().sum::<f64>() / nn
    }

    /// Largest component-mean magnitude; zero for mean-free fields.
    pub fn mean_abs(&self) -> f64 {
        (0..self.rank.components())
            .map(|c| self.component_mean(c).abs())
            .fold(0.0, f64::max)
    }

    /// Subtract the mean of every component.
    pub fn remove_mean(&mut self) {
        for c in 0..self.rank.components() {
            let m = self.component_mean(c);
            for v in self.component_mut(c) {
                *v -= m;
            }
        }
    }

    /// L^2 norm over the box: sqrt(h^3 sum of squares over all components).
    pub fn l2_norm(&self) -> f64 {
        let w = self.grid.cell_volume();
        (self.data.iter().map(|v| v * v).sum::<f64>() * w).sqrt()
    }

    /// Pointwise Euclidean magnitude across components, as a scalar field.
    pub fn magnitude(&self) -> RealField {
        let nn = self.grid.node_count();
        let mut out = RealField::zeros(&self.grid, Rank::Scalar);
        for c in 0..self.rank.components() {
            let comp = self.component(c);
            for (o, v) in out.data.iter_mut().zip(comp.iter().take(nn)) {
                *o += v * v;
            }
        }
        for o in out.data.iter_mut() {
            *o = o.sqrt();
        }
        out
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.data {
            *v *= c;
        }
    }

    pub fn scaled(&self, c: f64) -> RealField {
        let mut out = self.clone();
        out.scale(c);
        out
    }

    /// self += c * other (ranks and grids must match).
    pub fn add_scaled(&mut self, other: &RealField, c: f64) {
        assert_eq!(self.rank, other.rank, "rank mismatch in add_scaled");
        assert!(self.grid.same_as(&other.grid), "grid mismatch in add_scaled");
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += c * b;
        }
    }

    pub fn add(&self, other: &RealField) -> RealField {
        let mut out = self.clone();
        out.add_scaled(other, 1.0);
        out
    }

    pub fn sub(&self, other: &RealField) -> RealField {
        let mut out = self.clone();
        out.add_scaled(other, -1.0);
        out
    }

    /// max |self - other| over all nodes and components.
    pub fn max_diff(&self, other: &RealField) -> f64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Complex Fourier coefficients per wavevector per component.
///
/// Holds the full N^3 complex cube for each component; fields produced from
/// real data satisfy Hermitian symmetry `F(-k) = conj(F(k))`.
#[derive(Clone, Debug)]
pub struct SpectralField {
    grid: Grid,
    rank: Rank,
    data: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: &Grid, rank: Rank) -> SpectralField {
        SpectralField {
            grid: grid.clone(),
            rank,
            data: vec![Complex64::default(); rank.components() * grid.node_count()],
        }
    }

    pub(crate) fn from_parts(grid: Grid, rank: Rank, data: Vec<Complex64>) -> SpectralField {
        SpectralField { grid, rank, data }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn rank(&self) -> Rank {
        self.rank
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn component(&self, c: usize) -> &[Complex64] {
        let nn = self.grid.node_count();
        &self.data[c * nn..(c + 1) * nn]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [Complex64] {
        let nn = self.grid.node_count();
        &mut self.data[c * nn..(c + 1) * nn]
    }

    /// Coefficient of the zero wavevector for component `c` (the mean under
    /// the 1/N^3 forward convention).
    pub fn zero_mode(&self, c: usize) -> Complex64 {
        self.component(c)[0]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// Maximum Hermitian-symmetry violation `|F(-k) - conj F(k)|`.
    pub fn hermitian_asymmetry(&self) -> f64 {
        let n = self.grid.n();
        let nn = self.grid.node_count();
        let mut worst = 0.0f64;
        for c in 0..self.rank.components() {
            let comp = &self.data[c * nn..(c + 1) * nn];
            for i in 0..n {
                let ir = (n - i) % n;
                for j in 0..n {
                    let jr = (n - j) % n;
                    for k in 0..n {
                        let kr = (n - k) % n;
                        let a = comp[self.grid.idx(i, j, k)];
                        let b = comp[self.grid.idx(ir, jr, kr)];
                        worst = worst.max((b - a.conj()).norm());
                    }
                }
            }
        }
        worst
    }

    /// Spectral L^2 norm: sqrt(L^3 sum |F|^2), equal to the physical L^2
    /// norm by Parseval under the 1/N^3 forward convention.
    pub fn l2_norm(&self) -> f64 {
        let vol = self.grid.length().powi(3);
        (self.data.iter().map(|v| v.norm_sqr()).sum::<f64>() * vol).sqrt()
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.data {
            *v *= c;
        }
    }

    /// self += c * other.
    pub fn add_scaled(&mut self, other: &SpectralField, c: f64) {
        assert_eq!(self.rank, other.rank, "rank mismatch in add_scaled");
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += c * b;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_odd_or_tiny_resolution() {
        assert!(Grid::new(3, 1.0).is_err());
        assert!(Grid::new(7, 1.0).is_err());
        assert!(Grid::new(2, 1.0).is_err());
        assert!(Grid::new(8, -1.0).is_err());
        assert!(Grid::new(8, 1.0).is_ok());
    }

    #[test]
    fn spacing_times_n_is_length() {
        let g = Grid::new(16, 2.5).unwrap();
        assert_eq!(g.spacing() * g.n() as f64, 2.5);
    }

    #[test]
    fn modes_cover_half_open_range() {
        let g = Grid::new(8, 1.0).unwrap();
        let modes: Vec<i64> = (0..8).map(|i| g.mode(i)).collect();
        assert_eq!(modes, vec![0, 1, 2, 3, -4, -3, -2, -1]);
    }

    #[test]
    fn min_image_wraps() {
        let g = Grid::new(8, 8.0).unwrap();
        assert_eq!(g.min_image(0, 1), 1.0);
        assert_eq!(g.min_image(0, 7), -1.0);
        assert_eq!(g.min_image(1, 7), -2.0);
    }

    #[test]
    fn magnitude_of_vector_field() {
        let g = Grid::new(4, 1.0).unwrap();
        let f = RealField::from_fn(&g, Rank::Vector3, |c, _| (c + 1) as f64);
        let m = f.magnitude();
        let expect = (1.0f64 + 4.0 + 9.0).sqrt();
        assert!((m.data()[0] - expect).abs() < 1e-15);
    }
}

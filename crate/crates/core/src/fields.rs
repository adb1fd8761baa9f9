//! Grids, scalar/vector/matrix fields and stacked variables.
//!
//! All pixel data is stored in flat `Vec<f64>` buffers in row-major order
//! (index `j * nx + i`, `i` running along x). Vector fields interleave the
//! two components per pixel, matrix fields store the four entries of the
//! per-pixel 2x2 matrix as `[m00, m01, m10, m11]` (row-major, so column `c`
//! is `(m[c], m[2 + c])`).
//!
//! Discrete integrals over the image domain carry the pixel area `h^2`, so
//! functional values approximate their continuum counterparts and weights
//! transfer across grid resolutions.

use crate::error::{Error, Result};

/// Regular 2-D pixel grid over a rectangular physical domain.
///
/// Pixels are squares of edge length `h`; the centre of pixel `(i, j)` is
/// `(x0 + (i + 1/2) h, y0 + (j + 1/2) h)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    x0: f64,
    y0: f64,
    h: f64,
}

impl Grid {
    /// Square grid of `n` x `n` pixels over the default domain `[-1, 1]^2`.
    pub fn square(n: usize) -> Result<Self> {
        Self::new(n, n, (-1.0, 1.0), (-1.0, 1.0))
    }

    /// Grid over `[x_min, x_max] x [y_min, y_max]`. Pixels must be square,
    /// i.e. the two axes must imply the same edge length.
    pub fn new(nx: usize, ny: usize, x: (f64, f64), y: (f64, f64)) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 2 pixels per axis, got {nx} x {ny}"
            )));
        }
        let hx = (x.1 - x.0) / nx as f64;
        let hy = (y.1 - y.0) / ny as f64;
        if !(hx > 0.0) || !(hy > 0.0) {
            return Err(Error::InvalidParameter(
                "grid extent must have positive width and height".into(),
            ));
        }
        if (hx - hy).abs() > 1e-12 * hx.max(hy) {
            return Err(Error::InvalidParameter(format!(
                "pixels must be square: hx = {hx}, hy = {hy}"
            )));
        }
        Ok(Grid { nx, ny, x0: x.0, y0: y.0, h: hx })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    /// Pixel edge length.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Pixel area, the weight of the discrete integral.
    pub fn cell_area(&self) -> f64 {
        self.h * self.h
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flat index of pixel `(i, j)`.
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        j * self.nx + i
    }

    /// Physical coordinates of the centre of pixel `(i, j)`.
    #[inline]
    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.x0 + (i as f64 + 0.5) * self.h,
            self.y0 + (j as f64 + 0.5) * self.h,
        )
    }

    /// Lower-left corner of the domain.
    pub fn origin(&self) -> (f64, f64) {
        (self.x0, self.y0)
    }
}

/// Scalar image on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    grid: Grid,
    data: Vec<f64>,
}

impl Image {
    pub fn zeros(grid: Grid) -> Self {
        Image { grid, data: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Image { grid, data: vec![value; grid.len()] }
    }

    pub fn from_vec(grid: Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "image needs {} values, got {}",
                grid.len(),
                data.len()
            )));
        }
        Ok(Image { grid, data })
    }

    /// Build an image by evaluating `f` at every pixel centre.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let (x, y) = grid.center(i, j);
                data.push(f(x, y));
            }
        }
        Image { grid, data }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.grid.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.grid.idx(i, j);
        self.data[k] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image { grid: self.grid, data: self.data.iter().map(|&v| f(v)).collect() }
    }
}

/// Per-pixel 2-vector field on a [`Grid`]; components interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    data: Vec<f64>,
}

impl VectorField {
    pub fn zeros(grid: Grid) -> Self {
        VectorField { grid, data: vec![0.0; 2 * grid.len()] }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn get(&self, k: usize) -> [f64; 2] {
        [self.data[2 * k], self.data[2 * k + 1]]
    }

    #[inline]
    pub fn set(&mut self, k: usize, v: [f64; 2]) {
        self.data[2 * k] = v[0];
        self.data[2 * k + 1] = v[1];
    }

    /// Euclidean norm of the vector at pixel `k`.
    #[inline]
    pub fn norm_at(&self, k: usize) -> f64 {
        let [a, b] = self.get(k);
        (a * a + b * b).sqrt()
    }

    /// Largest per-pixel Euclidean norm.
    pub fn max_norm(&self) -> f64 {
        (0..self.grid.len()).map(|k| self.norm_at(k)).fold(0.0, f64::max)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Per-pixel 2x2 matrix field on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixField {
    grid: Grid,
    data: Vec<f64>,
}

impl MatrixField {
    pub fn zeros(grid: Grid) -> Self {
        MatrixField { grid, data: vec![0.0; 4 * grid.len()] }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Matrix at pixel `k` as `[[m00, m01], [m10, m11]]`.
    #[inline]
    pub fn get(&self, k: usize) -> [[f64; 2]; 2] {
        let d = &self.data[4 * k..4 * k + 4];
        [[d[0], d[1]], [d[2], d[3]]]
    }

    #[inline]
    pub fn set(&mut self, k: usize, m: [[f64; 2]; 2]) {
        let d = &mut self.data[4 * k..4 * k + 4];
        d[0] = m[0][0];
        d[1] = m[0][1];
        d[2] = m[1][0];
        d[3] = m[1][1];
    }

    /// Column `c` of the matrix at pixel `k`.
    #[inline]
    pub fn column(&self, k: usize, c: usize) -> [f64; 2] {
        [self.data[4 * k + c], self.data[4 * k + 2 + c]]
    }

    /// Frobenius norm of the matrix at pixel `k`.
    #[inline]
    pub fn frobenius_at(&self, k: usize) -> f64 {
        let d = &self.data[4 * k..4 * k + 4];
        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2] + d[3] * d[3]).sqrt()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Parallel-beam acquisition geometry: equispaced view angles in `[0, pi)`
/// and a centred linear detector array.
#[derive(Debug, Clone, PartialEq)]
pub struct RadonGeometry {
    n_views: usize,
    n_detectors: usize,
    detector_span: f64,
    angles: Vec<f64>,
}

impl RadonGeometry {
    pub fn new(n_views: usize, n_detectors: usize, detector_span: f64) -> Result<Self> {
        if n_views < 1 || n_detectors < 1 {
            return Err(Error::InvalidParameter(
                "radon geometry needs at least one view and one detector".into(),
            ));
        }
        if !(detector_span > 0.0) {
            return Err(Error::InvalidParameter("detector span must be positive".into()));
        }
        let angles = (0..n_views)
            .map(|k| k as f64 * std::f64::consts::PI / n_views as f64)
            .collect();
        Ok(RadonGeometry { n_views, n_detectors, detector_span, angles })
    }

    pub fn n_views(&self) -> usize {
        self.n_views
    }

    pub fn n_detectors(&self) -> usize {
        self.n_detectors
    }

    pub fn detector_span(&self) -> f64 {
        self.detector_span
    }

    /// Width of one detector bin.
    pub fn bin_width(&self) -> f64 {
        self.detector_span / self.n_detectors as f64
    }

    /// Angular spacing between views.
    pub fn angle_increment(&self) -> f64 {
        std::f64::consts::PI / self.n_views as f64
    }

    /// Measure of one sinogram bin, `bin_width * angle_increment`; the
    /// weight of discrete integrals over the sinogram domain.
    pub fn cell_measure(&self) -> f64 {
        self.bin_width() * self.angle_increment()
    }

    /// Signed offset of the centre of detector bin `d` from the array centre.
    pub fn detector_offset(&self, d: usize) -> f64 {
        (d as f64 + 0.5) * self.bin_width() - 0.5 * self.detector_span
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn len(&self) -> usize {
        self.n_views * self.n_detectors
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Line-integral measurements, one row per view.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    geometry: RadonGeometry,
    data: Vec<f64>,
}

impl Sinogram {
    pub fn zeros(geometry: RadonGeometry) -> Self {
        let n = geometry.len();
        Sinogram { geometry, data: vec![0.0; n] }
    }

    pub fn from_vec(geometry: RadonGeometry, data: Vec<f64>) -> Result<Self> {
        if data.len() != geometry.len() {
            return Err(Error::ShapeMismatch(format!(
                "sinogram needs {} values, got {}",
                geometry.len(),
                data.len()
            )));
        }
        Ok(Sinogram { geometry, data })
    }

    pub fn geometry(&self) -> &RadonGeometry {
        &self.geometry
    }

    #[inline]
    pub fn idx(&self, view: usize, det: usize) -> usize {
        view * self.geometry.n_detectors + det
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// A value in any of the spaces the linear blocks map between.
#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Scalar(Image),
    Vector(VectorField),
    Matrix(MatrixField),
    Sino(Sinogram),
}

impl Field {
    pub fn flat(&self) -> &[f64] {
        match self {
            Field::Scalar(f) => f.data(),
            Field::Vector(f) => f.data(),
            Field::Matrix(f) => f.data(),
            Field::Sino(f) => f.data(),
        }
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        match self {
            Field::Scalar(f) => f.data_mut(),
            Field::Vector(f) => f.data_mut(),
            Field::Matrix(f) => f.data_mut(),
            Field::Sino(f) => f.data_mut(),
        }
    }

    /// A zero field of the same shape.
    pub fn zeros_like(&self) -> Field {
        let mut z = self.clone();
        z.flat_mut().fill(0.0);
        z
    }

    /// True when `other` lives in the same space (same kind, grid/geometry).
    pub fn same_shape(&self, other: &Field) -> bool {
        match (self, other) {
            (Field::Scalar(a), Field::Scalar(b)) => a.grid() == b.grid(),
            (Field::Vector(a), Field::Vector(b)) => a.grid() == b.grid(),
            (Field::Matrix(a), Field::Matrix(b)) => a.grid() == b.grid(),
            (Field::Sino(a), Field::Sino(b)) => a.geometry() == b.geometry(),
            _ => false,
        }
    }

    /// Weight of the discrete integral over the space the field lives in:
    /// the pixel area for grid fields, the bin measure for sinograms.
    pub fn cell_weight(&self) -> f64 {
        match self {
            Field::Scalar(f) => f.grid().cell_area(),
            Field::Vector(f) => f.grid().cell_area(),
            Field::Matrix(f) => f.grid().cell_area(),
            Field::Sino(s) => s.geometry().cell_measure(),
        }
    }

    pub fn as_scalar(&self) -> Option<&Image> {
        match self {
            Field::Scalar(f) => Some(f),
            _ => None,
        }
    }

    pub fn as_vector(&self) -> Option<&VectorField> {
        match self {
            Field::Vector(f) => Some(f),
            _ => None,
        }
    }

    pub fn as_matrix(&self) -> Option<&MatrixField> {
        match self {
            Field::Matrix(f) => Some(f),
            _ => None,
        }
    }

    pub fn as_sino(&self) -> Option<&Sinogram> {
        match self {
            Field::Sino(f) => Some(f),
            _ => None,
        }
    }

    pub fn scale(&mut self, a: f64) {
        for v in self.flat_mut() {
            *v *= a;
        }
    }

    /// `self += a * other`. Shapes must already agree.
    pub fn axpy(&mut self, a: f64, other: &Field) {
        debug_assert!(self.same_shape(other));
        for (s, o) in self.flat_mut().iter_mut().zip(other.flat()) {
            *s += a * o;
        }
    }

    /// Unweighted Euclidean inner product of the flat buffers.
    pub fn dot_flat(&self, other: &Field) -> f64 {
        debug_assert!(self.same_shape(other));
        self.flat().iter().zip(other.flat()).map(|(a, b)| a * b).sum()
    }

    pub fn norm_flat(&self) -> f64 {
        self.dot_flat(self).sqrt()
    }

    /// Inner product of the space the field lives in: the flat product
    /// scaled by the cell weight.
    pub fn dot_weighted(&self, other: &Field) -> f64 {
        self.cell_weight() * self.dot_flat(other)
    }

    pub fn norm_weighted(&self) -> f64 {
        self.dot_weighted(self).sqrt()
    }

    pub fn max_abs_diff(&self, other: &Field) -> f64 {
        debug_assert!(self.same_shape(other));
        self.flat()
            .iter()
            .zip(other.flat())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.flat().iter().all(|v| v.is_finite())
    }
}

/// Ordered list of heterogeneous fields making up one optimisation variable,
/// e.g. `(u,)` for first-order models and `(u, zeta)` for second-order ones.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedVariable {
    parts: Vec<Field>,
}

impl StackedVariable {
    pub fn new(parts: Vec<Field>) -> Self {
        StackedVariable { parts }
    }

    /// Single-component variable holding an image.
    pub fn scalar(img: Image) -> Self {
        StackedVariable { parts: vec![Field::Scalar(img)] }
    }

    pub fn parts(&self) -> &[Field] {
        &self.parts
    }

    pub fn parts_mut(&mut self) -> &mut [Field] {
        &mut self.parts
    }

    pub fn part(&self, k: usize) -> &Field {
        &self.parts[k]
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// The image stored in component `k`; panics when the component is not
    /// scalar. Component 0 is the reconstruction `u` by convention.
    pub fn image(&self, k: usize) -> &Image {
        self.parts[k].as_scalar().expect("component is not a scalar image")
    }

    pub fn vector(&self, k: usize) -> &VectorField {
        self.parts[k].as_vector().expect("component is not a vector field")
    }

    pub fn zeros_like(&self) -> StackedVariable {
        StackedVariable { parts: self.parts.iter().map(Field::zeros_like).collect() }
    }

    pub fn same_shape(&self, other: &StackedVariable) -> bool {
        self.parts.len() == other.parts.len()
            && self
                .parts
                .iter()
                .zip(&other.parts)
                .all(|(a, b)| a.same_shape(b))
    }

    pub fn scale(&mut self, a: f64) {
        for p in &mut self.parts {
            p.scale(a);
        }
    }

    pub fn axpy(&mut self, a: f64, other: &StackedVariable) {
        debug_assert!(self.same_shape(other));
        for (p, o) in self.parts.iter_mut().zip(&other.parts) {
            p.axpy(a, o);
        }
    }

    /// `a * x + b * y` as a new variable.
    pub fn lincomb(a: f64, x: &StackedVariable, b: f64, y: &StackedVariable) -> StackedVariable {
        debug_assert!(x.same_shape(y));
        let mut out = x.clone();
        out.scale(a);
        out.axpy(b, y);
        out
    }

    pub fn dot_flat(&self, other: &StackedVariable) -> f64 {
        debug_assert!(self.same_shape(other));
        self.parts.iter().zip(&other.parts).map(|(a, b)| a.dot_flat(b)).sum()
    }

    pub fn norm_flat(&self) -> f64 {
        self.dot_flat(self).sqrt()
    }

    pub fn dot_weighted(&self, other: &StackedVariable) -> f64 {
        debug_assert!(self.same_shape(other));
        self.parts
            .iter()
            .zip(&other.parts)
            .map(|(a, b)| a.dot_weighted(b))
            .sum()
    }

    pub fn norm_weighted(&self) -> f64 {
        self.dot_weighted(self).sqrt()
    }

    pub fn max_abs_diff(&self, other: &StackedVariable) -> f64 {
        self.parts
            .iter()
            .zip(&other.parts)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.parts.iter().all(Field::all_finite)
    }
}

/// Grid-weighted inner product `h^2 * sum_k a_k b_k`, summed over components.
///
/// Measurement-space components (sinograms) carry unit weight; their bins are
/// discrete readings, not samples of a function on the image domain.
pub fn inner_product(a: &StackedVariable, b: &StackedVariable) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::ShapeMismatch(
            "inner product requires identically shaped variables".into(),
        ));
    }
    Ok(a.dot_weighted(b))
}

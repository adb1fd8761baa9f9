//! Guide-image preprocessing: edge weights and directional projectors.
//!
//! A guide image `v` is turned into the scalar edge-indicator field
//! `w = eta / sqrt(eta^2 + |grad v|^2)` and the edge-vector field
//! `xi = grad v / sqrt(eta^2 + |grad v|^2)`, which define the per-pixel
//! projector `D = I - gamma xi xi^T` used by the directional regularisers.

use crate::diffops::gradient;
use crate::error::{Error, Result};
use crate::fields::{Image, VectorField};

/// Preprocessed side information: the normalised guide image together with
/// its cached gradient, edge weight and edge-vector fields.
#[derive(Debug, Clone)]
pub struct SideInformation {
    v: Image,
    eta: f64,
    gamma: f64,
    w: Image,
    xi: VectorField,
    grad_v: VectorField,
}

impl SideInformation {
    /// Normalise `v` so that `sup |grad v| = 1`, then precompute the weight
    /// and edge-vector fields. Fails for constant `v`.
    pub fn new(v: &Image, eta: f64, gamma: f64) -> Result<Self> {
        let v = normalize_side_info(v)?;
        Self::from_normalized(v, eta, gamma)
    }

    /// Use `v` as given, without rescaling. This is the right constructor
    /// when `v` is already normalised, or degenerate on purpose (a flat
    /// guide makes every structure-promoting regulariser reduce to its
    /// plain counterpart).
    pub fn from_normalized(v: Image, eta: f64, gamma: f64) -> Result<Self> {
        if !(eta > 0.0) {
            return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidParameter(format!("gamma must be in (0, 1], got {gamma}")));
        }
        let grad_v = gradient(&v);
        let w = edge_weight_from_gradient(&grad_v, eta);
        let xi = edge_vector_from_gradient(&grad_v, eta);
        Ok(SideInformation { v, eta, gamma, w, xi, grad_v })
    }

    pub fn v(&self) -> &Image {
        &self.v
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Scalar edge weight field, in `(0, 1]`, equal to 1 on flat regions.
    pub fn w(&self) -> &Image {
        &self.w
    }

    /// Edge-vector field `xi`, `|xi| < 1`, zero on flat regions.
    pub fn xi(&self) -> &VectorField {
        &self.xi
    }

    pub fn grad_v(&self) -> &VectorField {
        &self.grad_v
    }

    /// Shift field for the Jacobian-based regularisers: `eta * grad v`.
    pub fn jacobian_shift(&self) -> VectorField {
        let mut out = self.grad_v.clone();
        for x in out.data_mut() {
            *x *= self.eta;
        }
        out
    }

    /// Apply the per-pixel projector `D = I - gamma xi xi^T` to `p`.
    /// `D` is symmetric, so this is also its adjoint.
    pub fn apply_d(&self, p: &VectorField) -> Result<VectorField> {
        if p.grid() != self.v.grid() {
            return Err(Error::GridMismatch);
        }
        let mut out = p.clone();
        self.apply_d_in_place(&mut out);
        Ok(out)
    }

    pub(crate) fn apply_d_in_place(&self, p: &mut VectorField) {
        let n = self.v.grid().len();
        for k in 0..n {
            let xi = self.xi.get(k);
            let q = p.get(k);
            let dot = xi[0] * q[0] + xi[1] * q[1];
            let s = self.gamma * dot;
            p.set(k, [q[0] - s * xi[0], q[1] - s * xi[1]]);
        }
    }
}

/// Rescale `v` by `1 / sup |grad v|` so the largest gradient magnitude is 1.
pub fn normalize_side_info(v: &Image) -> Result<Image> {
    let sup = gradient(v).max_norm();
    if sup == 0.0 {
        return Err(Error::DegenerateInput(
            "side information is constant (zero gradient everywhere)".into(),
        ));
    }
    Ok(v.map(|x| x / sup))
}

/// Edge indicator `w = eta / sqrt(eta^2 + |grad v|^2)`, in `(0, 1]`.
pub fn edge_weight(v: &Image, eta: f64) -> Result<Image> {
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")));
    }
    Ok(edge_weight_from_gradient(&gradient(v), eta))
}

fn edge_weight_from_gradient(grad_v: &VectorField, eta: f64) -> Image {
    let g = *grad_v.grid();
    let mut out = Image::zeros(g);
    for k in 0..g.len() {
        let gn = grad_v.norm_at(k);
        out.data_mut()[k] = eta / (eta * eta + gn * gn).sqrt();
    }
    out
}

/// Edge vector `xi = grad v / sqrt(eta^2 + |grad v|^2)`, `|xi| < 1`.
pub fn edge_vector(v: &Image, eta: f64) -> Result<VectorField> {
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")));
    }
    Ok(edge_vector_from_gradient(&gradient(v), eta))
}

fn edge_vector_from_gradient(grad_v: &VectorField, eta: f64) -> VectorField {
    let g = *grad_v.grid();
    let mut out = VectorField::zeros(g);
    for k in 0..g.len() {
        let gv = grad_v.get(k);
        let denom = (eta * eta + gv[0] * gv[0] + gv[1] * gv[1]).sqrt();
        out.set(k, [gv[0] / denom, gv[1] / denom]);
    }
    out
}

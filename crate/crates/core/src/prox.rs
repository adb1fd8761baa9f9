//! Proximal operators for the functionals of the composite models.
//!
//! Every functional is `weight * base(y)` with an optional shift or data
//! field; `prox(F, z, sigma) = argmin_x 1/2 ||x - z||^2 + sigma F(x)` has a
//! closed form for each kind. The conjugate prox needed by the primal-dual
//! loop comes from the Moreau decomposition, and `scaled_by` implements the
//! exact transformation `F(lambda y)` used for prewhitening.

use crate::error::{Error, Result};
use crate::fields::Field;

/// Convex functional with a computable proximal operator.
#[derive(Debug, Clone)]
pub enum ProxFunctional {
    /// `weight * ||y||_2^2` (squared norm of the flat buffer).
    SquaredNorm { weight: f64 },
    /// `weight * sum_px |y_px - shift_px|` with per-pixel Euclidean
    /// (vector) or Frobenius (matrix) group norms.
    GroupL1 { weight: f64, shift: Option<Field> },
    /// `weight * sum_px (sigma1 + sigma2)(Y_px - Shift_px)` over the
    /// per-pixel 2x2 matrices.
    NuclearL1 { weight: f64, shift: Option<Field> },
    /// `weight * 1/2 ||y - data||_2^2`.
    QuadraticFidelity { data: Field, weight: f64 },
    /// `weight * ||y - data||_1`.
    RobustL1Fidelity { data: Field, weight: f64 },
    /// Indicator of the nonnegative orthant.
    NonnegIndicator,
    /// The zero functional.
    Zero,
}

impl ProxFunctional {
    pub fn group_l1(weight: f64) -> Self {
        ProxFunctional::GroupL1 { weight, shift: None }
    }

    pub fn nuclear_l1(weight: f64) -> Self {
        ProxFunctional::NuclearL1 { weight, shift: None }
    }

    fn check_operand(&self, z: &Field) -> Result<()> {
        let reference = match self {
            ProxFunctional::GroupL1 { shift, .. } | ProxFunctional::NuclearL1 { shift, .. } => {
                shift.as_ref()
            }
            ProxFunctional::QuadraticFidelity { data, .. }
            | ProxFunctional::RobustL1Fidelity { data, .. } => Some(data),
            _ => None,
        };
        if let Some(r) = reference {
            if !r.same_shape(z) {
                return Err(Error::ShapeMismatch(
                    "prox operand does not match the functional's field shape".into(),
                ));
            }
        }
        if matches!(self, ProxFunctional::NuclearL1 { .. }) && z.as_matrix().is_none() {
            return Err(Error::ShapeMismatch("nuclear norm requires a matrix field".into()));
        }
        Ok(())
    }

    /// `argmin_x 1/2 ||x - z||^2 + sigma F(x)`.
    pub fn prox(&self, z: &Field, sigma: f64) -> Result<Field> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "prox step must be positive, got {sigma}"
            )));
        }
        self.check_operand(z)?;
        let out = match self {
            ProxFunctional::SquaredNorm { weight } => {
                let c = 1.0 / (1.0 + 2.0 * sigma * weight);
                let mut o = z.clone();
                o.scale(c);
                o
            }
            ProxFunctional::GroupL1 { weight, shift } => {
                let thresh = sigma * weight;
                let mut o = z.clone();
                let gs = group_size(z);
                match shift {
                    None => shrink_groups(o.flat_mut(), gs, thresh, None),
                    Some(s) => shrink_groups(o.flat_mut(), gs, thresh, Some(s.flat())),
                }
                o
            }
            ProxFunctional::NuclearL1 { weight, shift } => {
                let thresh = sigma * weight;
                let mut o = z.clone();
                nuclear_shrink(o.flat_mut(), thresh, shift.as_ref().map(|s| s.flat()));
                o
            }
            ProxFunctional::QuadraticFidelity { data, weight } => {
                let sw = sigma * weight;
                let c = 1.0 / (1.0 + sw);
                let mut o = z.clone();
                for (x, f) in o.flat_mut().iter_mut().zip(data.flat()) {
                    *x = (*x + sw * f) * c;
                }
                o
            }
            ProxFunctional::RobustL1Fidelity { data, weight } => {
                let thresh = sigma * weight;
                let mut o = z.clone();
                for (x, f) in o.flat_mut().iter_mut().zip(data.flat()) {
                    *x = f + soft(*x - f, thresh);
                }
                o
            }
            ProxFunctional::NonnegIndicator => {
                let mut o = z.clone();
                for x in o.flat_mut() {
                    *x = x.max(0.0);
                }
                o
            }
            ProxFunctional::Zero => z.clone(),
        };
        Ok(out)
    }

    /// Prox of the convex conjugate via the Moreau decomposition:
    /// `prox_{sigma F*}(y) = y - sigma prox_{F / sigma}(y / sigma)`.
    pub fn conjugate_prox(&self, y: &Field, sigma: f64) -> Result<Field> {
        self.conjugate_prox_in_space(y, sigma, 1.0)
    }

    /// Prox with the quadratic measured in the field's own space, whose
    /// inner product is `space_weight` times the flat one. Equal to the
    /// plain prox with step `sigma / space_weight`.
    pub fn prox_in_space(&self, z: &Field, sigma: f64, space_weight: f64) -> Result<Field> {
        self.prox(z, sigma / space_weight)
    }

    /// Conjugate prox in a weighted space (conjugacy taken with respect to
    /// that space's inner product).
    pub fn conjugate_prox_in_space(
        &self,
        y: &Field,
        sigma: f64,
        space_weight: f64,
    ) -> Result<Field> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "prox step must be positive, got {sigma}"
            )));
        }
        let mut scaled = y.clone();
        scaled.scale(1.0 / sigma);
        let p = self.prox(&scaled, 1.0 / (sigma * space_weight))?;
        let mut out = y.clone();
        out.axpy(-sigma, &p);
        Ok(out)
    }

    /// Value of the functional at `y` (`+inf` for violated indicators).
    pub fn value(&self, y: &Field) -> Result<f64> {
        self.check_operand(y)?;
        let v = match self {
            ProxFunctional::SquaredNorm { weight } => {
                weight * y.flat().iter().map(|a| a * a).sum::<f64>()
            }
            ProxFunctional::GroupL1 { weight, shift } => {
                weight * group_l1_value(y.flat(), group_size(y), shift.as_ref().map(|s| s.flat()))
            }
            ProxFunctional::NuclearL1 { weight, shift } => {
                let s = shift.as_ref().map(|s| s.flat());
                let mut acc = 0.0;
                for (px, m) in y.flat().chunks_exact(4).enumerate() {
                    let mm = shifted_matrix(m, s, px);
                    let (s1, s2) = singular_pair(mm);
                    acc += s1 + s2;
                }
                weight * acc
            }
            ProxFunctional::QuadraticFidelity { data, weight } => {
                0.5 * weight
                    * y.flat()
                        .iter()
                        .zip(data.flat())
                        .map(|(a, f)| (a - f) * (a - f))
                        .sum::<f64>()
            }
            ProxFunctional::RobustL1Fidelity { data, weight } => {
                weight
                    * y.flat()
                        .iter()
                        .zip(data.flat())
                        .map(|(a, f)| (a - f).abs())
                        .sum::<f64>()
            }
            ProxFunctional::NonnegIndicator => {
                if y.flat().iter().all(|&a| a >= 0.0) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            ProxFunctional::Zero => 0.0,
        };
        Ok(v)
    }

    /// Value of the convex conjugate at `q`, taken with respect to the
    /// inner product `space_weight * <.,.>` of the field's space.
    /// Indicator constraints are checked up to `feas_tol`; `+inf` when
    /// violated beyond it.
    pub fn conjugate_value(&self, q: &Field, space_weight: f64, feas_tol: f64) -> Result<f64> {
        self.check_operand(q)?;
        let w = space_weight;
        let v = match self {
            ProxFunctional::SquaredNorm { weight } => {
                w * w * q.flat().iter().map(|a| a * a).sum::<f64>() / (4.0 * weight)
            }
            ProxFunctional::GroupL1 { weight, shift } => {
                let radius = weight / w;
                let gs = group_size(q);
                let mut lin = 0.0;
                for (g, chunk) in q.flat().chunks_exact(gs).enumerate() {
                    let mut n2 = 0.0;
                    for (c, &a) in chunk.iter().enumerate() {
                        n2 += a * a;
                        if let Some(s) = shift {
                            lin += a * s.flat()[g * gs + c];
                        }
                    }
                    if n2.sqrt() > radius + feas_tol * (1.0 + radius) {
                        return Ok(f64::INFINITY);
                    }
                }
                w * lin
            }
            ProxFunctional::NuclearL1 { weight, shift } => {
                let radius = weight / w;
                let s = shift.as_ref().map(|s| s.flat());
                let mut lin = 0.0;
                for (px, m) in q.flat().chunks_exact(4).enumerate() {
                    let (s1, _) = singular_pair([[m[0], m[1]], [m[2], m[3]]]);
                    if s1 > radius + feas_tol * (1.0 + radius) {
                        return Ok(f64::INFINITY);
                    }
                    if let Some(sf) = s {
                        for c in 0..4 {
                            lin += m[c] * sf[4 * px + c];
                        }
                    }
                }
                w * lin
            }
            ProxFunctional::QuadraticFidelity { data, weight } => {
                let lin: f64 = q.flat().iter().zip(data.flat()).map(|(a, f)| a * f).sum();
                w * lin + w * w * q.flat().iter().map(|a| a * a).sum::<f64>() / (2.0 * weight)
            }
            ProxFunctional::RobustL1Fidelity { data, weight } => {
                let radius = weight / w;
                for &a in q.flat() {
                    if a.abs() > radius + feas_tol * (1.0 + radius) {
                        return Ok(f64::INFINITY);
                    }
                }
                w * q.flat().iter().zip(data.flat()).map(|(a, f)| a * f).sum::<f64>()
            }
            ProxFunctional::NonnegIndicator => {
                if q.flat().iter().all(|&a| a <= feas_tol) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            ProxFunctional::Zero => {
                if q.flat().iter().all(|&a| a.abs() <= feas_tol) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        };
        Ok(v)
    }

    /// The functional `y -> F(lambda * y)`, in closed form. Together with
    /// dividing the paired operator block by `lambda` this leaves every
    /// composite objective value unchanged.
    pub fn scaled_by(&self, lambda: f64) -> Result<ProxFunctional> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "scaling factor must be positive, got {lambda}"
            )));
        }
        let scaled_field = |f: &Field| {
            let mut o = f.clone();
            o.scale(1.0 / lambda);
            o
        };
        let out = match self {
            ProxFunctional::SquaredNorm { weight } => {
                ProxFunctional::SquaredNorm { weight: weight * lambda * lambda }
            }
            ProxFunctional::GroupL1 { weight, shift } => ProxFunctional::GroupL1 {
                weight: weight * lambda,
                shift: shift.as_ref().map(scaled_field),
            },
            ProxFunctional::NuclearL1 { weight, shift } => ProxFunctional::NuclearL1 {
                weight: weight * lambda,
                shift: shift.as_ref().map(scaled_field),
            },
            ProxFunctional::QuadraticFidelity { data, weight } => {
                ProxFunctional::QuadraticFidelity {
                    data: scaled_field(data),
                    weight: weight * lambda * lambda,
                }
            }
            ProxFunctional::RobustL1Fidelity { data, weight } => {
                ProxFunctional::RobustL1Fidelity {
                    data: scaled_field(data),
                    weight: weight * lambda,
                }
            }
            ProxFunctional::NonnegIndicator => ProxFunctional::NonnegIndicator,
            ProxFunctional::Zero => ProxFunctional::Zero,
        };
        Ok(out)
    }
}

/// Number of flat entries forming one shrinkage group.
fn group_size(f: &Field) -> usize {
    match f {
        Field::Scalar(_) | Field::Sino(_) => 1,
        Field::Vector(_) => 2,
        Field::Matrix(_) => 4,
    }
}

#[inline]
fn soft(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// In-place group shrinkage `y <- y * max(0, 1 - t / |y|)`, applied to
/// `y = x - shift` with the shift added back. Zero groups stay zero.
fn shrink_groups(x: &mut [f64], gs: usize, t: f64, shift: Option<&[f64]>) {
    let n_groups = x.len() / gs;
    for g in 0..n_groups {
        let base = g * gs;
        let mut n2 = 0.0;
        for c in 0..gs {
            let y = x[base + c] - shift.map_or(0.0, |s| s[base + c]);
            x[base + c] = y;
            n2 += y * y;
        }
        let n = n2.sqrt();
        let factor = if n > t { 1.0 - t / n } else { 0.0 };
        for c in 0..gs {
            x[base + c] = factor * x[base + c] + shift.map_or(0.0, |s| s[base + c]);
        }
    }
}

fn group_l1_value(x: &[f64], gs: usize, shift: Option<&[f64]>) -> f64 {
    let mut acc = 0.0;
    for (g, chunk) in x.chunks_exact(gs).enumerate() {
        let mut n2 = 0.0;
        for (c, &a) in chunk.iter().enumerate() {
            let y = a - shift.map_or(0.0, |s| s[g * gs + c]);
            n2 += y * y;
        }
        acc += n2.sqrt();
    }
    acc
}

#[inline]
fn shifted_matrix(m: &[f64], shift: Option<&[f64]>, px: usize) -> [[f64; 2]; 2] {
    let s = |c: usize| shift.map_or(0.0, |sf| sf[4 * px + c]);
    [[m[0] - s(0), m[1] - s(1)], [m[2] - s(2), m[3] - s(3)]]
}

/// Per-pixel singular-value soft-thresholding of the 2x2 matrices.
fn nuclear_shrink(x: &mut [f64], t: f64, shift: Option<&[f64]>) {
    let n_px = x.len() / 4;
    for px in 0..n_px {
        let base = 4 * px;
        let m = shifted_matrix(&x[base..base + 4], shift, px);
        let svd = svd_2col(&m);
        let s1 = (svd.s[0] - t).max(0.0);
        let s2 = (svd.s[1] - t).max(0.0);
        // U diag(s') V^T with d = 2.
        let mut out = [[0.0; 2]; 2];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, entry) in row.iter_mut().enumerate() {
                *entry = s1 * svd.u[r][0] * svd.v[c][0] + s2 * svd.u[r][1] * svd.v[c][1];
            }
        }
        let s = |c: usize| shift.map_or(0.0, |sf| sf[base + c]);
        x[base] = out[0][0] + s(0);
        x[base + 1] = out[0][1] + s(1);
        x[base + 2] = out[1][0] + s(2);
        x[base + 3] = out[1][1] + s(3);
    }
}

/// Thin SVD of a `d x 2` matrix, `d` in `{2, 3}`.
#[derive(Debug, Clone)]
pub struct Svd2 {
    /// Left singular vectors, one row per matrix row (`d x 2`).
    pub u: Vec<[f64; 2]>,
    /// Singular values, descending.
    pub s: [f64; 2],
    /// Right singular vectors as rows of `v`, i.e. `v[r][c]` is entry `r`
    /// of singular vector `c`; the matrix reconstructs as `U S V^T`.
    pub v: [[f64; 2]; 2],
}

/// Closed-form thin SVD of a `d x 2` matrix (rows given top to bottom) via
/// the eigen-decomposition of the 2x2 Gram matrix `M^T M`. The sign of each
/// right singular vector is fixed so its first nonzero entry is positive.
pub fn svd_2col(rows: &[[f64; 2]]) -> Svd2 {
    let d = rows.len();
    assert!(d == 2 || d == 3, "svd_2col supports 2 or 3 rows, got {d}");
    // Gram matrix.
    let mut g00 = 0.0;
    let mut g01 = 0.0;
    let mut g11 = 0.0;
    for r in rows {
        g00 += r[0] * r[0];
        g01 += r[0] * r[1];
        g11 += r[1] * r[1];
    }
    let tr = g00 + g11;
    let half_diff = 0.5 * (g00 - g11);
    let disc = (half_diff * half_diff + g01 * g01).sqrt();
    let l1 = (0.5 * tr + disc).max(0.0);
    let l2 = (0.5 * tr - disc).max(0.0);
    let s1 = l1.sqrt();
    let s2 = l2.sqrt();

    // Eigenvector of the Gram matrix for l1; pick the better-conditioned of
    // the two candidate null-space formulas.
    let cand_a = [g01, l1 - g00];
    let cand_b = [l1 - g11, g01];
    let na = cand_a[0] * cand_a[0] + cand_a[1] * cand_a[1];
    let nb = cand_b[0] * cand_b[0] + cand_b[1] * cand_b[1];
    let mut v1 = if na >= nb { cand_a } else { cand_b };
    let n1 = (v1[0] * v1[0] + v1[1] * v1[1]).sqrt();
    if n1 > 0.0 {
        v1 = [v1[0] / n1, v1[1] / n1];
    } else {
        v1 = [1.0, 0.0]; // Gram matrix is a multiple of the identity
    }
    let mut v2 = [-v1[1], v1[0]];

    // Deterministic sign: first nonzero entry of each right vector positive.
    if sign_flip(&v1) {
        v1 = [-v1[0], -v1[1]];
    }
    if sign_flip(&v2) {
        v2 = [-v2[0], -v2[1]];
    }

    // Left vectors: u_i = M v_i / s_i, completed orthonormally at rank
    // deficiency.
    let mv = |v: [f64; 2]| -> Vec<f64> {
        rows.iter().map(|r| r[0] * v[0] + r[1] * v[1]).collect()
    };
    let u1 = unit_or(mv(v1), s1, d, 0, None);
    let u2 = unit_or(mv(v2), s2, d, 1, Some(&u1));

    let u: Vec<[f64; 2]> = u1.iter().zip(&u2).map(|(&a, &b)| [a, b]).collect();
    // Sign flips above must keep M = U S V^T consistent: u_i was computed
    // from the already-flipped v_i, so nothing more to do.
    Svd2 { u, s: [s1, s2], v: [[v1[0], v2[0]], [v1[1], v2[1]]] }
}

fn sign_flip(v: &[f64; 2]) -> bool {
    if v[0] != 0.0 {
        v[0] < 0.0
    } else {
        v[1] < 0.0
    }
}

/// Normalise `w / s`, or produce a deterministic unit vector orthogonal to
/// `prev` (and axis-aligned where possible) when `s` is numerically zero.
fn unit_or(w: Vec<f64>, s: f64, d: usize, which: usize, prev: Option<&[f64]>) -> Vec<f64> {
    let wn = w.iter().map(|a| a * a).sum::<f64>().sqrt();
    if s > 1e-300 && wn > 0.0 {
        return w.iter().map(|a| a / s).collect();
    }
    match prev {
        None => {
            let mut e = vec![0.0; d];
            e[which.min(d - 1)] = 1.0;
            e
        }
        Some(p) => {
            // Pick the axis least aligned with p, orthogonalise, normalise.
            let mut best = 0;
            for k in 1..d {
                if p[k].abs() < p[best].abs() {
                    best = k;
                }
            }
            let mut e = vec![0.0; d];
            e[best] = 1.0;
            let dot: f64 = e.iter().zip(p).map(|(a, b)| a * b).sum();
            for k in 0..d {
                e[k] -= dot * p[k];
            }
            let n = e.iter().map(|a| a * a).sum::<f64>().sqrt();
            e.iter().map(|a| a / n).collect()
        }
    }
}

/// Per-pixel singular values of a 2x2 matrix (used by the nuclear norm).
fn singular_pair(m: [[f64; 2]; 2]) -> (f64, f64) {
    let svd = svd_2col(&m);
    (svd.s[0], svd.s[1])
}

//! Finite-difference operators and Jacobian-based similarity diagnostics.
//!
//! The gradient uses forward differences with a Neumann boundary (the last
//! difference along each axis is zero); divergence and symmetrised
//! divergence are the exact negative transposes of gradient and symmetrised
//! gradient, so `<grad u, p> = <u, -div p>` holds in exact arithmetic.

use crate::error::{Error, Result};
use crate::fields::{Image, MatrixField, VectorField};

/// Forward-difference gradient with Neumann boundary.
pub fn gradient(u: &Image) -> VectorField {
    let g = *u.grid();
    let (nx, ny, h) = (g.nx(), g.ny(), g.h());
    let mut out = VectorField::zeros(g);
    for j in 0..ny {
        for i in 0..nx {
            let k = g.idx(i, j);
            let dx = if i + 1 < nx { (u.get(i + 1, j) - u.get(i, j)) / h } else { 0.0 };
            let dy = if j + 1 < ny { (u.get(i, j + 1) - u.get(i, j)) / h } else { 0.0 };
            out.set(k, [dx, dy]);
        }
    }
    out
}

/// Negative transpose of [`gradient`]: backward differences with the
/// boundary stencil that makes the adjoint identity exact.
pub fn divergence(p: &VectorField) -> Image {
    let g = *p.grid();
    let (nx, ny, h) = (g.nx(), g.ny(), g.h());
    let mut out = Image::zeros(g);
    for j in 0..ny {
        for i in 0..nx {
            let k = g.idx(i, j);
            let mut acc = 0.0;
            if i + 1 < nx {
                acc += p.get(k)[0];
            }
            if i > 0 {
                acc -= p.get(g.idx(i - 1, j))[0];
            }
            if j + 1 < ny {
                acc += p.get(k)[1];
            }
            if j > 0 {
                acc -= p.get(g.idx(i, j - 1))[1];
            }
            out.set(i, j, acc / h);
        }
    }
    out
}

/// Symmetrised gradient of a vector field: per pixel the symmetric 2x2
/// matrix with entries `(d_i z_j + d_j z_i) / 2`, forward differences.
pub fn sym_gradient(z: &VectorField) -> MatrixField {
    let g = *z.grid();
    let (nx, ny, h) = (g.nx(), g.ny(), g.h());
    let mut out = MatrixField::zeros(g);
    let dval = |k2: usize, k1: usize, c: usize| (z.get(k2)[c] - z.get(k1)[c]) / h;
    for j in 0..ny {
        for i in 0..nx {
            let k = g.idx(i, j);
            let d1z1 = if i + 1 < nx { dval(g.idx(i + 1, j), k, 0) } else { 0.0 };
            let d1z2 = if i + 1 < nx { dval(g.idx(i + 1, j), k, 1) } else { 0.0 };
            let d2z1 = if j + 1 < ny { dval(g.idx(i, j + 1), k, 0) } else { 0.0 };
            let d2z2 = if j + 1 < ny { dval(g.idx(i, j + 1), k, 1) } else { 0.0 };
            let off = 0.5 * (d2z1 + d1z2);
            out.set(k, [[d1z1, off], [off, d2z2]]);
        }
    }
    out
}

/// Negative transpose of [`sym_gradient`] acting on a (symmetric) matrix
/// field, so `<E z, q> = <z, -sym_divergence(q)>` exactly.
pub fn sym_divergence(q: &MatrixField) -> VectorField {
    let g = *q.grid();
    let (nx, ny, h) = (g.nx(), g.ny(), g.h());
    let mut out = VectorField::zeros(g);
    // Transpose of the forward difference d1 applied at pixel k contributes
    // +q(k) to pixel k+1 and -q(k) to pixel k; accumulate per target pixel.
    // Entry m00 feeds d1 z1, m11 feeds d2 z2, and each off-diagonal slot
    // feeds half of d2 z1 (m01, m10 row/col symmetric layout: m01 couples
    // d2 z1 and d1 z2 each with factor 1/2, as does m10).
    for j in 0..ny {
        for i in 0..nx {
            let k = g.idx(i, j);
            let mut a0 = 0.0; // transpose accumulation for component z1
            let mut a1 = 0.0; // component z2
            // d1 terms: difference (i+1) - (i) stored at (i, j).
            if i + 1 < nx {
                let m = q.get(k);
                a0 -= m[0][0];
                a1 -= 0.5 * (m[0][1] + m[1][0]);
            }
            if i > 0 {
                let m = q.get(g.idx(i - 1, j));
                a0 += m[0][0];
                a1 += 0.5 * (m[0][1] + m[1][0]);
            }
            // d2 terms.
            if j + 1 < ny {
                let m = q.get(k);
                a1 -= m[1][1];
                a0 -= 0.5 * (m[0][1] + m[1][0]);
            }
            if j > 0 {
                let m = q.get(g.idx(i, j - 1));
                a1 += m[1][1];
                a0 += 0.5 * (m[0][1] + m[1][0]);
            }
            // Negative transpose: flip the accumulated sign.
            out.set(k, [-a0 / h, -a1 / h]);
        }
    }
    out
}

/// Per-pixel Jacobian of the channel pair `(u, v)`: column 0 is the gradient
/// of `u`, column 1 the gradient of `v`.
pub fn jacobian(u: &Image, v: &Image) -> Result<MatrixField> {
    if u.grid() != v.grid() {
        return Err(Error::GridMismatch);
    }
    let gu = gradient(u);
    let gv = gradient(v);
    let g = *u.grid();
    let mut out = MatrixField::zeros(g);
    for k in 0..g.len() {
        let a = gu.get(k);
        let b = gv.get(k);
        out.set(k, [[a[0], b[0]], [a[1], b[1]]]);
    }
    Ok(out)
}

/// Per-pixel `det(J^T J) = |c0|^2 |c1|^2 - <c0, c1>^2` for the two columns
/// of the Jacobian. Tiny negative values from rounding are clipped to zero
/// (Cauchy-Schwarz guarantees nonnegativity analytically).
pub fn jacobian_det(jac: &MatrixField) -> Image {
    let g = *jac.grid();
    let mut out = Image::zeros(g);
    for k in 0..g.len() {
        out.data_mut()[k] = det_gram(jac.get(k)).max(0.0);
    }
    out
}

#[inline]
fn det_gram(m: [[f64; 2]; 2]) -> f64 {
    let c0 = [m[0][0], m[1][0]];
    let c1 = [m[0][1], m[1][1]];
    let n0 = c0[0] * c0[0] + c0[1] * c0[1];
    let n1 = c1[0] * c1[0] + c1[1] * c1[1];
    let ip = c0[0] * c1[0] + c0[1] * c1[1];
    n0 * n1 - ip * ip
}

/// Per-pixel singular values of the Jacobian, `sigma1 >= sigma2 >= 0`,
/// from the eigenvalues of `J^T J`:
/// `sigma^2 = (tr +- sqrt(tr^2 - 4 det)) / 2` with `tr = |J|_F^2`.
pub fn singular_values(jac: &MatrixField) -> (Image, Image) {
    let g = *jac.grid();
    let mut s1 = Image::zeros(g);
    let mut s2 = Image::zeros(g);
    for k in 0..g.len() {
        let m = jac.get(k);
        let tr = m[0][0] * m[0][0] + m[0][1] * m[0][1] + m[1][0] * m[1][0] + m[1][1] * m[1][1];
        let det = det_gram(m).max(0.0);
        let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
        s1.data_mut()[k] = (0.5 * (tr + disc)).max(0.0).sqrt();
        s2.data_mut()[k] = (0.5 * (tr - disc)).max(0.0).sqrt();
    }
    (s1, s2)
}

/// Edge-set and parallel-level-set diagnostics for an image pair.
#[derive(Debug, Clone)]
pub struct SimilarityReport {
    /// Pixels where `|grad u| > epsilon`.
    pub edge_set_u: Vec<bool>,
    /// Pixels where `|grad v| > epsilon`.
    pub edge_set_v: Vec<bool>,
    /// Overlap of the two edge sets (1 when both are empty).
    pub jaccard: f64,
    /// Per-pixel `det(J^T J)`.
    pub det_field: Image,
    /// Per-pixel second singular value of the Jacobian.
    pub sigma2_field: Image,
    /// Fraction of shared edge pixels (both gradients above threshold)
    /// with `sigma2 <= epsilon`; 1 when no edges are shared.
    pub parallel_fraction: f64,
}

/// Suggested edge threshold: `1e-8` times the largest gradient magnitude of
/// either image.
pub fn default_edge_epsilon(u: &Image, v: &Image) -> f64 {
    let m = gradient(u).max_norm().max(gradient(v).max_norm());
    1e-8 * m
}

/// Compare the edge structure of `u` and `v` with threshold `epsilon`.
pub fn similarity_report(u: &Image, v: &Image, epsilon: f64) -> Result<SimilarityReport> {
    if u.grid() != v.grid() {
        return Err(Error::GridMismatch);
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter("edge threshold must be positive".into()));
    }
    let gu = gradient(u);
    let gv = gradient(v);
    let n = u.grid().len();
    let edge_set_u: Vec<bool> = (0..n).map(|k| gu.norm_at(k) > epsilon).collect();
    let edge_set_v: Vec<bool> = (0..n).map(|k| gv.norm_at(k) > epsilon).collect();

    let jac = jacobian(u, v)?;
    let det_field = jacobian_det(&jac);
    let (_, sigma2_field) = singular_values(&jac);

    let mut inter = 0usize;
    let mut union = 0usize;
    let mut parallel = 0usize;
    for k in 0..n {
        let (eu, ev) = (edge_set_u[k], edge_set_v[k]);
        if eu || ev {
            union += 1;
        }
        if eu && ev {
            inter += 1;
            if sigma2_field.data()[k] <= epsilon {
                parallel += 1;
            }
        }
    }
    let jaccard = if union == 0 { 1.0 } else { inter as f64 / union as f64 };
    let parallel_fraction = if inter == 0 { 1.0 } else { parallel as f64 / inter as f64 };
    Ok(SimilarityReport {
        edge_set_u,
        edge_set_v,
        jaccard,
        det_field,
        sigma2_field,
        parallel_fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Grid;
    use approx::assert_relative_eq;
    use rand::prelude::*;

    fn random_image(g: Grid, rng: &mut impl Rng) -> Image {
        Image::from_fn(g, |_, _| rng.random::<f64>() - 0.5)
    }

    fn random_vfield(g: Grid, rng: &mut impl Rng) -> VectorField {
        let mut f = VectorField::zeros(g);
        for k in 0..g.len() {
            f.set(k, [rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5]);
        }
        f
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let g = Grid::square(6).unwrap();
        let out = gradient(&Image::constant(g, 3.7));
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_of_linear_ramp() {
        let g = Grid::square(6).unwrap();
        // u(i, j) = i * h  => slope 1 along x in the interior, 0 at the
        // last column; slope 0 along y.
        let h = g.h();
        let mut u = Image::zeros(g);
        for j in 0..6 {
            for i in 0..6 {
                u.set(i, j, i as f64 * h);
            }
        }
        let gr = gradient(&u);
        for j in 0..6 {
            for i in 0..6 {
                let [dx, dy] = gr.get(g.idx(i, j));
                if i + 1 < 6 {
                    assert_relative_eq!(dx, 1.0, max_relative = 1e-12);
                } else {
                    assert_eq!(dx, 0.0);
                }
                assert_eq!(dy, 0.0);
            }
        }
    }

    #[test]
    fn divergence_of_zero_and_constant() {
        let g = Grid::square(5).unwrap();
        let zero = divergence(&VectorField::zeros(g));
        assert!(zero.data().iter().all(|&v| v == 0.0));

        let mut c = VectorField::zeros(g);
        for k in 0..g.len() {
            c.set(k, [1.0, 0.0]);
        }
        let d = divergence(&c);
        for j in 0..5 {
            for i in 0..5 {
                let v = d.get(i, j);
                if i == 0 || i == 4 {
                    assert!(v != 0.0, "expected boundary contribution at ({i},{j})");
                } else {
                    assert_relative_eq!(v, 0.0, epsilon = 1e-14);
                }
            }
        }
    }

    #[test]
    fn gradient_divergence_adjoint() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let g = Grid::square(4).unwrap();
        for _ in 0..100 {
            let u = random_image(g, &mut rng);
            let p = random_vfield(g, &mut rng);
            let gu = gradient(&u);
            let dp = divergence(&p);
            let lhs: f64 = gu.data().iter().zip(p.data()).map(|(a, b)| a * b).sum();
            let rhs = -u.data().iter().zip(dp.data()).map(|(a, b)| a * b).sum::<f64>();
            assert_relative_eq!(lhs, rhs, max_relative = 1e-12, epsilon = 1e-13);
        }
    }

    #[test]
    fn sym_gradient_of_constant_and_identity_map() {
        let g = Grid::square(6).unwrap();
        let mut c = VectorField::zeros(g);
        for k in 0..g.len() {
            c.set(k, [2.0, -1.0]);
        }
        assert!(sym_gradient(&c).data().iter().all(|&v| v == 0.0));

        // zeta(x) = x sampled at pixel centres: E zeta = I in the interior.
        let mut z = VectorField::zeros(g);
        for j in 0..6 {
            for i in 0..6 {
                let (x, y) = g.center(i, j);
                z.set(g.idx(i, j), [x, y]);
            }
        }
        let e = sym_gradient(&z);
        for j in 0..5 {
            for i in 0..5 {
                let m = e.get(g.idx(i, j));
                assert_relative_eq!(m[0][0], 1.0, max_relative = 1e-12);
                assert_relative_eq!(m[1][1], 1.0, max_relative = 1e-12);
                assert_relative_eq!(m[0][1], 0.0, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn sym_gradient_divergence_adjoint() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(43);
        let g = Grid::square(4).unwrap();
        for _ in 0..100 {
            let z = random_vfield(g, &mut rng);
            // Random symmetric matrix field.
            let mut q = MatrixField::zeros(g);
            for k in 0..g.len() {
                let a = rng.random::<f64>() - 0.5;
                let b = rng.random::<f64>() - 0.5;
                let c = rng.random::<f64>() - 0.5;
                q.set(k, [[a, b], [b, c]]);
            }
            let ez = sym_gradient(&z);
            let dq = sym_divergence(&q);
            let lhs: f64 = ez.data().iter().zip(q.data()).map(|(a, b)| a * b).sum();
            let rhs = -z.data().iter().zip(dq.data()).map(|(a, b)| a * b).sum::<f64>();
            assert_relative_eq!(lhs, rhs, max_relative = 1e-12, epsilon = 1e-13);
        }
    }

    #[test]
    fn jacobian_columns_and_rank() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(44);
        let g = Grid::square(5).unwrap();
        let u = random_image(g, &mut rng);
        let v = random_image(g, &mut rng);
        let j = jacobian(&u, &v).unwrap();
        let gu = gradient(&u);
        let gv = gradient(&v);
        for k in 0..g.len() {
            assert_eq!(j.column(k, 0), gu.get(k));
            assert_eq!(j.column(k, 1), gv.get(k));
        }
        // Equal channels: rank <= 1 everywhere.
        let jj = jacobian(&u, &u).unwrap();
        let det = jacobian_det(&jj);
        for &d in det.data() {
            assert!(d.abs() < 1e-20);
        }
        // Constant pair: zero Jacobian.
        let c = Image::constant(g, 1.0);
        let jc = jacobian(&c, &c).unwrap();
        assert!(jc.data().iter().all(|&v| v == 0.0));
        // Grid mismatch is an error.
        let other = Image::zeros(Grid::square(6).unwrap());
        assert!(jacobian(&u, &other).is_err());
    }

    #[test]
    fn jacobian_det_orthonormal_columns() {
        let g = Grid::square(2).unwrap();
        let mut m = MatrixField::zeros(g);
        for k in 0..g.len() {
            m.set(k, [[1.0, 0.0], [0.0, 1.0]]);
        }
        let det = jacobian_det(&m);
        for &d in det.data() {
            assert_relative_eq!(d, 1.0);
        }
    }

    #[test]
    fn jacobian_det_nonnegative_on_random_fields() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(45);
        let g = Grid::square(4).unwrap();
        for _ in 0..50 {
            let mut m = MatrixField::zeros(g);
            for k in 0..g.len() {
                m.set(
                    k,
                    [
                        [rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5],
                        [rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5],
                    ],
                );
            }
            assert!(jacobian_det(&m).data().iter().all(|&d| d >= 0.0));
        }
    }

    #[test]
    fn singular_values_identity_and_rank_one() {
        let g = Grid::square(2).unwrap();
        let mut m = MatrixField::zeros(g);
        m.set(0, [[1.0, 0.0], [0.0, 1.0]]);
        m.set(1, [[1.0, 1.0], [2.0, 2.0]]); // equal columns
        let (s1, s2) = singular_values(&m);
        assert_relative_eq!(s1.data()[0], 1.0, max_relative = 1e-12);
        assert_relative_eq!(s2.data()[0], 1.0, max_relative = 1e-12);
        assert!(s2.data()[1].abs() < 1e-7);
        assert_eq!(s1.data()[2], 0.0);
        assert_eq!(s2.data()[2], 0.0);
    }

    #[test]
    fn frobenius_matches_singular_values() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(46);
        let g = Grid::square(3).unwrap();
        let mut m = MatrixField::zeros(g);
        for k in 0..g.len() {
            m.set(
                k,
                [
                    [rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5],
                    [rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5],
                ],
            );
        }
        let (s1, s2) = singular_values(&m);
        for k in 0..g.len() {
            let frob = m.frobenius_at(k);
            let s = (s1.data()[k].powi(2) + s2.data()[k].powi(2)).sqrt();
            assert_relative_eq!(s, frob, max_relative = 1e-12, epsilon = 1e-14);
        }
    }

    #[test]
    fn similarity_identical_and_axis_ramps() {
        let g = Grid::square(8).unwrap();
        let disk = Image::from_fn(g, |x, y| if x * x + y * y < 0.25 { 1.0 } else { 0.0 });
        let eps = default_edge_epsilon(&disk, &disk);
        let rep = similarity_report(&disk, &disk, eps).unwrap();
        assert_eq!(rep.jaccard, 1.0);
        assert_eq!(rep.parallel_fraction, 1.0);

        // u(x) = x1, v(x) = x2: same edge set, nowhere parallel.
        let u = Image::from_fn(g, |x, _| x);
        let v = Image::from_fn(g, |_, y| y);
        let rep = similarity_report(&u, &v, 1e-6).unwrap();
        // Forward differences vanish on the trailing row/column of the
        // respective axis, so restrict to the shared interior.
        let mut interior_overlap = true;
        for j in 0..7 {
            for i in 0..7 {
                let k = g.idx(i, j);
                interior_overlap &= rep.edge_set_u[k] && rep.edge_set_v[k];
            }
        }
        assert!(interior_overlap);
        assert_eq!(rep.parallel_fraction, 0.0);

        // Disjoint edge supports.
        let left = Image::from_fn(g, |x, _| if x < -0.5 { 1.0 } else { 0.0 });
        let right = Image::from_fn(g, |x, _| if x > 0.5 { 1.0 } else { 0.0 });
        let rep = similarity_report(&left, &right, 1e-6).unwrap();
        assert_eq!(rep.jaccard, 0.0);
    }
}

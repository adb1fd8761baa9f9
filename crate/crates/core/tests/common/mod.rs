//! Independent oracles for the acceptance suite: brute-force prox
//! minimisation, library SVD, and dense transposes. Nothing here may call
//! into the implementation paths it is used to check.

#![allow(dead_code)]

use guided_recon::fields::{Field, Grid, Image, MatrixField, StackedVariable, VectorField};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Golden-section minimiser of a convex scalar function on `[lo, hi]`.
pub fn golden_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64, iters: usize) -> f64 {
    let (mut a, mut b) = (lo, hi);
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Minimise a jointly convex function of two variables by nested golden
/// sections (outer over the first argument, inner over the second).
pub fn golden_min2(
    f: impl Fn(f64, f64) -> f64 + Copy,
    b0: (f64, f64),
    b1: (f64, f64),
    iters: usize,
) -> (f64, f64) {
    let inner = move |x0: f64| golden_min(move |x1| f(x0, x1), b1.0, b1.1, iters);
    let x0 = golden_min(move |x0| f(x0, inner(x0)), b0.0, b0.1, iters);
    (x0, inner(x0))
}

/// Singular values of a 2x2 matrix via nalgebra's iterative SVD.
pub fn svd2_oracle(m: [[f64; 2]; 2]) -> (f64, f64) {
    let mat = nalgebra::Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1]);
    let sv = mat.svd(false, false).singular_values;
    (sv[0].max(sv[1]), sv[0].min(sv[1]))
}

/// Largest singular value of a dense matrix via nalgebra.
pub fn dense_norm_oracle(m: &nalgebra::DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(g: Grid, rng: &mut ChaCha8Rng) -> Image {
    Image::from_fn(g, |_, _| rng.random::<f64>() - 0.5)
}

pub fn random_vfield(g: Grid, rng: &mut ChaCha8Rng) -> VectorField {
    let mut f = VectorField::zeros(g);
    for k in 0..g.len() {
        f.set(k, [rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5]);
    }
    f
}

pub fn random_mfield(g: Grid, rng: &mut ChaCha8Rng) -> MatrixField {
    let mut f = MatrixField::zeros(g);
    for k in 0..g.len() {
        f.set(
            k,
            [
                [rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5],
                [rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5],
            ],
        );
    }
    f
}

pub fn randomize_field(f: &mut Field, rng: &mut ChaCha8Rng) {
    for v in f.flat_mut() {
        *v = rng.random::<f64>() - 0.5;
    }
}

pub fn randomize_stacked(x: &mut StackedVariable, rng: &mut ChaCha8Rng) {
    for p in x.parts_mut() {
        for v in p.flat_mut() {
            *v = rng.random::<f64>() - 0.5;
        }
    }
}

/// Relative adjoint defect `|<Ax,y> - <x,A^T y>| / (|<Ax,y>| + |<x,A^T y>| + tiny)`
/// from already-paired inner products.
pub fn adjoint_defect(lhs: f64, rhs: f64) -> f64 {
    (lhs - rhs).abs() / (lhs.abs() + rhs.abs() + 1e-300)
}

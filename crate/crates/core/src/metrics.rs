//! Reconstruction quality metrics: PSNR and mean local SSIM.

use crate::error::{Error, Result};
use crate::fields::Image;

/// Peak signal-to-noise ratio in dB, `10 log10(R^2 / MSE)` with the peak
/// `R = max(ref) - min(ref)`. Returns `+inf` for identical images.
pub fn psnr(x: &Image, reference: &Image) -> Result<f64> {
    if x.grid() != reference.grid() {
        return Err(Error::GridMismatch);
    }
    let r = reference.max() - reference.min();
    if r == 0.0 {
        return Err(Error::DegenerateInput("psnr reference is constant".into()));
    }
    let n = reference.data().len() as f64;
    let mse: f64 = x
        .data()
        .iter()
        .zip(reference.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (r * r / mse).log10())
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;

/// Mean local structural similarity with an 11x11 Gaussian window
/// (sigma 1.5), `C1 = (0.01 R)^2`, `C2 = (0.03 R)^2`, `R` as in [`psnr`].
/// At image borders the window is truncated and its weights renormalised.
pub fn ssim(x: &Image, reference: &Image) -> Result<f64> {
    if x.grid() != reference.grid() {
        return Err(Error::GridMismatch);
    }
    let r = reference.max() - reference.min();
    if r == 0.0 {
        return Err(Error::DegenerateInput("ssim reference is constant".into()));
    }
    let c1 = (0.01 * r) * (0.01 * r);
    let c2 = (0.03 * r) * (0.03 * r);

    let half = (SSIM_WINDOW / 2) as isize;
    let mut kernel = [[0.0; SSIM_WINDOW]; SSIM_WINDOW];
    for (dj, row) in kernel.iter_mut().enumerate() {
        for (di, k) in row.iter_mut().enumerate() {
            let dx = di as f64 - half as f64;
            let dy = dj as f64 - half as f64;
            *k = (-(dx * dx + dy * dy) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        }
    }

    let g = x.grid();
    let (nx, ny) = (g.nx() as isize, g.ny() as isize);
    let mut acc = 0.0;
    for j in 0..ny {
        for i in 0..nx {
            let mut wsum = 0.0;
            let mut mx = 0.0;
            let mut my = 0.0;
            let mut mxx = 0.0;
            let mut myy = 0.0;
            let mut mxy = 0.0;
            for dj in -half..=half {
                let jj = j + dj;
                if jj < 0 || jj >= ny {
                    continue;
                }
                for di in -half..=half {
                    let ii = i + di;
                    if ii < 0 || ii >= nx {
                        continue;
                    }
                    let w = kernel[(dj + half) as usize][(di + half) as usize];
                    let a = x.get(ii as usize, jj as usize);
                    let b = reference.get(ii as usize, jj as usize);
                    wsum += w;
                    mx += w * a;
                    my += w * b;
                    mxx += w * a * a;
                    myy += w * b * b;
                    mxy += w * a * b;
                }
            }
            mx /= wsum;
            my /= wsum;
            let vx = mxx / wsum - mx * mx;
            let vy = myy / wsum - my * my;
            let vxy = mxy / wsum - mx * my;
            let num = (2.0 * mx * my + c1) * (2.0 * vxy + c2);
            let den = (mx * mx + my * my + c1) * (vx + vy + c2);
            acc += num / den;
        }
    }
    Ok(acc / (nx * ny) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Grid;
    use approx::assert_relative_eq;
    use rand::prelude::*;

    #[test]
    fn psnr_identical_and_full_scale_error() {
        let g = Grid::square(8).unwrap();
        let a = Image::from_fn(g, |x, y| x + y);
        assert!(psnr(&a, &a).unwrap().is_infinite());

        // MSE = R^2 gives 0 dB: shift the image by exactly R.
        let r = a.max() - a.min();
        let b = a.map(|v| v + r);
        assert_relative_eq!(psnr(&b, &a).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn psnr_matches_hand_computed_mse() {
        let g = Grid::square(2).unwrap();
        let reference = Image::from_vec(g, vec![0.0, 1.0, 0.5, 0.25]).unwrap();
        let x = Image::from_vec(g, vec![0.1, 0.9, 0.5, 0.25]).unwrap();
        let mse: f64 = (0.01 + 0.01) / 4.0;
        let expected = 10.0 * (1.0 / mse).log10();
        assert_relative_eq!(psnr(&x, &reference).unwrap(), expected, max_relative = 1e-12);
    }

    #[test]
    fn psnr_errors() {
        let g = Grid::square(4).unwrap();
        let a = Image::constant(g, 1.0);
        let b = Image::from_fn(g, |x, _| x);
        assert!(psnr(&b, &a).is_err()); // constant reference
        let c = Image::zeros(Grid::square(5).unwrap());
        assert!(psnr(&c, &b).is_err()); // grid mismatch
    }

    #[test]
    fn psnr_decreases_with_growing_noise() {
        let g = Grid::square(16).unwrap();
        let reference = Image::from_fn(g, |x, y| (3.0 * x).sin() + y);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(71);
        let noise: Vec<f64> = (0..g.len()).map(|_| rng.random::<f64>() - 0.5).collect();
        let mut last = f64::INFINITY;
        for stddev in [0.01, 0.05, 0.2] {
            let mut noisy = reference.clone();
            for (v, n) in noisy.data_mut().iter_mut().zip(&noise) {
                *v += stddev * n;
            }
            let p = psnr(&noisy, &reference).unwrap();
            assert!(p < last, "psnr {p} did not decrease (was {last})");
            last = p;
        }
    }

    #[test]
    fn ssim_identical_is_exactly_one() {
        let g = Grid::square(16).unwrap();
        let a = Image::from_fn(g, |x, y| (2.0 * x).cos() * y + x);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn ssim_anticorrelated_is_nonpositive() {
        // Fine checkerboard: every window has strong structure, and the
        // inverted image is anticorrelated inside each of them.
        let g = Grid::square(16).unwrap();
        let a = Image::from_fn(g, |x, y| {
            let i = ((x + 1.0) * 8.0) as i64;
            let j = ((y + 1.0) * 8.0) as i64;
            ((i + j) % 2) as f64
        });
        let b = a.map(|v| 1.0 - v);
        assert!(ssim(&b, &a).unwrap() <= 0.0);
    }

    #[test]
    fn ssim_shift_sensitivity() {
        let g = Grid::square(16).unwrap();
        let a = Image::from_fn(g, |x, y| (4.0 * x).sin() + (3.0 * y).cos());
        // Shift by one pixel along x.
        let mut b = a.clone();
        for j in 0..16 {
            for i in 1..16 {
                let v = a.get(i - 1, j);
                b.set(i, j, v);
            }
        }
        let s = ssim(&b, &a).unwrap();
        assert!(s < 1.0);
        assert!(s > -1.0);
    }
}

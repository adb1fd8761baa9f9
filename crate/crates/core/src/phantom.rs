//! Synthetic phantom pairs: a ground truth `u` and a structurally similar
//! guide `v`.
//!
//! Both images share a large body disk and a set of interior disks whose
//! values differ by a fixed strictly monotone transform, so the shared
//! edges have parallel level sets. `u` additionally carries small disks on
//! an outer ring that are absent from `v`, and `v` carries a smooth
//! background bump that is absent from `u`.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fields::{Grid, Image};

const BODY_RADIUS: f64 = 0.7;
const BODY_VALUE: f64 = 1.0;
const SHARED_CENTER_MAX: f64 = 0.38;
const SHARED_RADIUS_RANGE: (f64, f64) = (0.08, 0.14);
const SHARED_VALUE_RANGE: (f64, f64) = (0.25, 0.85);
const RING_RADIUS: f64 = 0.58;
const RING_DISK_RADIUS: f64 = 0.045;
const RING_VALUE_RANGE: (f64, f64) = (0.2, 0.6);
const BUMP_AMPLITUDE: f64 = 0.2;
const BUMP_WIDTH: f64 = 0.5;
const PLACEMENT_ATTEMPTS: usize = 2000;

/// Parameters that generated a phantom pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomParams {
    pub seed: u64,
    pub n_shared: usize,
    pub n_unshared: usize,
}

/// Ground truth and guide image on a common grid.
#[derive(Debug, Clone)]
pub struct PhantomPair {
    pub u_true: Image,
    pub v: Image,
    pub provenance: PhantomParams,
}

#[derive(Debug, Clone, Copy)]
struct Disk {
    cx: f64,
    cy: f64,
    r: f64,
    value: f64,
}

impl Disk {
    fn contains(&self, x: f64, y: f64) -> bool {
        let dx = x - self.cx;
        let dy = y - self.cy;
        dx * dx + dy * dy <= self.r * self.r
    }

    fn overlaps(&self, other: &Disk, margin: f64) -> bool {
        let dx = self.cx - other.cx;
        let dy = self.cy - other.cy;
        (dx * dx + dy * dy).sqrt() < self.r + other.r + margin
    }
}

/// The monotone value transform between the shared structures of `u` and
/// `v` (strictly increasing, fixes 0).
fn value_transform(t: f64) -> f64 {
    (1.0 + 2.0 * t).ln() / 3.0f64.ln()
}

/// Deterministically generate a phantom pair on `grid`.
///
/// `n_shared` interior disks appear in both images (transformed values in
/// `v`), `n_unshared` ring disks only in `u`. Disk placement retries a
/// bounded number of times before failing.
pub fn generate_phantom_pair(
    grid: Grid,
    seed: u64,
    n_shared: usize,
    n_unshared: usize,
) -> Result<PhantomPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Shared interior disks: non-overlapping, strictly inside the body.
    let mut shared: Vec<Disk> = Vec::with_capacity(n_shared);
    let mut attempts = 0;
    while shared.len() < n_shared {
        attempts += 1;
        if attempts > PLACEMENT_ATTEMPTS {
            return Err(Error::PlacementFailed(PLACEMENT_ATTEMPTS));
        }
        let r = rng.random_range(SHARED_RADIUS_RANGE.0..SHARED_RADIUS_RANGE.1);
        let rc = rng.random_range(0.0..(SHARED_CENTER_MAX - r).max(0.0));
        let phi = rng.random_range(0.0..std::f64::consts::TAU);
        let cand = Disk {
            cx: rc * phi.cos(),
            cy: rc * phi.sin(),
            r,
            value: rng.random_range(SHARED_VALUE_RANGE.0..SHARED_VALUE_RANGE.1),
        };
        if shared.iter().all(|d| !cand.overlaps(d, 0.03)) {
            shared.push(cand);
        }
    }

    // Unshared disks sit on a ring between the shared region and the body
    // boundary, equally spaced with a random phase.
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let unshared: Vec<Disk> = (0..n_unshared)
        .map(|k| {
            let phi = phase + k as f64 * std::f64::consts::TAU / n_unshared.max(1) as f64;
            Disk {
                cx: RING_RADIUS * phi.cos(),
                cy: RING_RADIUS * phi.sin(),
                r: RING_DISK_RADIUS,
                value: rng.random_range(RING_VALUE_RANGE.0..RING_VALUE_RANGE.1),
            }
        })
        .collect();

    // Smooth background bump, only in v.
    let bump_rc = rng.random_range(0.0..0.35);
    let bump_phi = rng.random_range(0.0..std::f64::consts::TAU);
    let (bx, by) = (bump_rc * bump_phi.cos(), bump_rc * bump_phi.sin());

    // Piecewise-constant label shared by both images.
    let label = |x: f64, y: f64| -> f64 {
        if x * x + y * y > BODY_RADIUS * BODY_RADIUS {
            return 0.0;
        }
        for d in &shared {
            if d.contains(x, y) {
                return d.value;
            }
        }
        BODY_VALUE
    };

    // Supersampled rendering: pixel values are averages over a subpixel
    // raster, so disk boundaries become short ramps instead of hard jumps.
    // The value transform is applied per subpixel; across an edge between
    // two labels both images then ramp affinely in the coverage fraction,
    // which keeps their level sets exactly parallel.
    const SS: usize = 4;
    let h = grid.h();
    let sub = move |x: f64, y: f64, f: &dyn Fn(f64, f64) -> f64| -> f64 {
        let mut acc = 0.0;
        for sj in 0..SS {
            for si in 0..SS {
                let xs = x + ((si as f64 + 0.5) / SS as f64 - 0.5) * h;
                let ys = y + ((sj as f64 + 0.5) / SS as f64 - 0.5) * h;
                acc += f(xs, ys);
            }
        }
        acc / (SS * SS) as f64
    };

    let u_sample = |x: f64, y: f64| -> f64 {
        let mut val = label(x, y);
        for d in &unshared {
            if d.contains(x, y) {
                val = d.value;
            }
        }
        val
    };
    let v_sample = |x: f64, y: f64| -> f64 { value_transform(label(x, y)) };

    let u_true = Image::from_fn(grid, |x, y| sub(x, y, &u_sample).max(0.0));
    let v = Image::from_fn(grid, |x, y| {
        let dx = x - bx;
        let dy = y - by;
        let bump =
            BUMP_AMPLITUDE * (-(dx * dx + dy * dy) / (2.0 * BUMP_WIDTH * BUMP_WIDTH)).exp();
        sub(x, y, &v_sample) + bump
    });

    Ok(PhantomPair { u_true, v, provenance: PhantomParams { seed, n_shared, n_unshared } })
}

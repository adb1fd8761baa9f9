//! Browser demo: explore the guide-image weighting fields and run small
//! guided reconstructions interactively.
//!
//! Compiled with `wasm-pack build --target web` (see `www/`); the crate
//! also builds natively so the rendering logic stays unit-testable.

use wasm_bindgen::prelude::*;

use guided_recon::composite::{RegKind, RegularizerSpec};
use guided_recon::diffops::{gradient, similarity_report};
use guided_recon::experiment::{build_problem, simulate_data, ExperimentConfig, TestCase};
use guided_recon::fields::{Grid, Image};
use guided_recon::metrics::{psnr, ssim};
use guided_recon::pdhg::{Solver, SolverConfig};
use guided_recon::phantom::{generate_phantom_pair, PhantomPair};
use guided_recon::sideinfo::SideInformation;

fn err_to_js(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// Greyscale RGBA with a linear window; rows flipped so canvas y points
/// down while the grid y points up.
fn gray_rgba(img: &Image, lo: f64, hi: f64) -> Vec<u8> {
    let (nx, ny) = (img.grid().nx(), img.grid().ny());
    let scale = if hi > lo { 255.0 / (hi - lo) } else { 0.0 };
    let mut out = vec![0u8; 4 * nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let v = ((img.get(i, ny - 1 - j) - lo) * scale).clamp(0.0, 255.0) as u8;
            let k = 4 * (j * nx + i);
            out[k] = v;
            out[k + 1] = v;
            out[k + 2] = v;
            out[k + 3] = 255;
        }
    }
    out
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let c = v * s;
    let hp = (h / 60.0).rem_euclid(6.0);
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [
        ((r + m) * 255.0).round() as u8,
        ((g + m) * 255.0).round() as u8,
        ((b + m) * 255.0).round() as u8,
    ]
}

/// Interactive state: one phantom pair plus the most recent scores.
#[wasm_bindgen]
pub struct Demo {
    grid: Grid,
    pair: PhantomPair,
    seed: u64,
    last_psnr: f64,
    last_ssim: f64,
}

#[wasm_bindgen]
impl Demo {
    /// Build the phantom pair. `size` should be a multiple of 5 so the
    /// super-resolution case works (60 is the natural choice).
    #[wasm_bindgen(constructor)]
    pub fn new(size: u32, seed: u32, shared: u32, unshared: u32) -> Result<Demo, JsValue> {
        let grid = Grid::square(size as usize).map_err(err_to_js)?;
        let pair = generate_phantom_pair(grid, seed as u64, shared as usize, unshared as usize)
            .map_err(err_to_js)?;
        Ok(Demo { grid, pair, seed: seed as u64, last_psnr: f64::NAN, last_ssim: f64::NAN })
    }

    pub fn size(&self) -> u32 {
        self.grid.nx() as u32
    }

    pub fn truth_rgba(&self) -> Vec<u8> {
        gray_rgba(&self.pair.u_true, 0.0, self.pair.u_true.max())
    }

    pub fn guide_rgba(&self) -> Vec<u8> {
        gray_rgba(&self.pair.v, self.pair.v.min(), self.pair.v.max())
    }

    /// The scalar edge-weight field `w` of the guide image for a given
    /// `eta` (white = 1: full regularisation, black = 0: released).
    pub fn edge_weight_rgba(&self, eta: f64) -> Result<Vec<u8>, JsValue> {
        let si = SideInformation::new(&self.pair.v, eta, 1.0).map_err(err_to_js)?;
        Ok(gray_rgba(si.w(), 0.0, 1.0))
    }

    /// The edge-vector field `xi`: hue encodes direction modulo sign,
    /// brightness its magnitude.
    pub fn edge_direction_rgba(&self, eta: f64) -> Result<Vec<u8>, JsValue> {
        let si = SideInformation::new(&self.pair.v, eta, 1.0).map_err(err_to_js)?;
        let xi = si.xi();
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        let mut out = vec![0u8; 4 * nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let k_src = self.grid.idx(i, ny - 1 - j);
                let v = xi.get(k_src);
                let mag = (v[0] * v[0] + v[1] * v[1]).sqrt().min(1.0);
                // Angle modulo pi: xi and -xi act identically.
                let ang = v[1].atan2(v[0]).rem_euclid(std::f64::consts::PI);
                let rgb = hsv_to_rgb(ang / std::f64::consts::PI * 360.0, 1.0, mag);
                let k = 4 * (j * nx + i);
                out[k] = rgb[0];
                out[k + 1] = rgb[1];
                out[k + 2] = rgb[2];
                out[k + 3] = 255;
            }
        }
        Ok(out)
    }

    /// Second-singular-value map of the Jacobian of (truth, guide); dark
    /// where the pair has parallel level sets.
    pub fn similarity_rgba(&self) -> Result<Vec<u8>, JsValue> {
        let eps = 0.05 * gradient(&self.pair.u_true).max_norm().max(1e-30);
        let rep = similarity_report(&self.pair.u_true, &self.pair.v, eps).map_err(err_to_js)?;
        let hi = rep.sigma2_field.max().max(1e-30);
        Ok(gray_rgba(&rep.sigma2_field, 0.0, hi))
    }

    pub fn similarity_jaccard(&self) -> Result<f64, JsValue> {
        let eps = 0.05 * gradient(&self.pair.u_true).max_norm().max(1e-30);
        let rep = similarity_report(&self.pair.u_true, &self.pair.v, eps).map_err(err_to_js)?;
        Ok(rep.jaccard)
    }

    pub fn similarity_parallel_fraction(&self) -> Result<f64, JsValue> {
        let eps = 0.05 * gradient(&self.pair.u_true).max_norm().max(1e-30);
        let rep = similarity_report(&self.pair.u_true, &self.pair.v, eps).map_err(err_to_js)?;
        Ok(rep.parallel_fraction)
    }

    /// Solve one desk-scale test case and return the reconstruction as
    /// RGBA. Scores are stored on the demo object.
    #[allow(clippy::too_many_arguments)]
    pub fn reconstruct(
        &mut self,
        case: &str,
        reg: &str,
        alpha: f64,
        eta: f64,
        gamma: f64,
        beta: f64,
        iterations: u32,
    ) -> Result<Vec<u8>, JsValue> {
        let case = TestCase::parse(case).map_err(err_to_js)?;
        let kind = RegKind::parse(reg).map_err(err_to_js)?;
        let mut spec = RegularizerSpec::new(kind, alpha);
        spec.eta = eta;
        spec.gamma = gamma;
        spec.beta = beta;
        let mut cfg = ExperimentConfig::desk(case, spec);
        cfg.size = self.grid.nx();
        cfg.seed = self.seed;
        cfg.n_shared = self.pair.provenance.n_shared;
        cfg.n_unshared = self.pair.provenance.n_unshared;
        cfg.solver.iterations = iterations as usize;
        cfg.validate().map_err(err_to_js)?;

        let data = simulate_data(&cfg, &self.pair.u_true).map_err(err_to_js)?;
        let problem = build_problem(&cfg, &self.pair.v, &data).map_err(err_to_js)?;
        // Step manually: wall-clock timing is unavailable on wasm targets.
        let mut solver = Solver::new(&problem, &cfg.solver).map_err(err_to_js)?;
        for _ in 0..cfg.solver.iterations {
            solver.step().map_err(err_to_js)?;
        }
        let recon = solver.x().image(0).clone();
        self.last_psnr = psnr(&recon, &self.pair.u_true).map_err(err_to_js)?;
        self.last_ssim = ssim(&recon, &self.pair.u_true).map_err(err_to_js)?;
        Ok(gray_rgba(&recon, 0.0, self.pair.u_true.max()))
    }

    pub fn last_psnr(&self) -> f64 {
        self.last_psnr
    }

    pub fn last_ssim(&self) -> f64 {
        self.last_ssim
    }

    /// Default solver configuration knobs, surfaced for the UI.
    pub fn default_iterations(&self) -> u32 {
        SolverConfig::default().iterations.min(500) as u32
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo() -> Demo {
        Demo::new(30, 7, 2, 1).unwrap()
    }

    #[test]
    fn rgba_buffers_have_canvas_layout() {
        let d = demo();
        let n = 30 * 30 * 4;
        assert_eq!(d.truth_rgba().len(), n);
        assert_eq!(d.guide_rgba().len(), n);
        assert_eq!(d.edge_weight_rgba(0.1).unwrap().len(), n);
        assert_eq!(d.edge_direction_rgba(0.1).unwrap().len(), n);
        assert_eq!(d.similarity_rgba().unwrap().len(), n);
        // Alpha channel is opaque everywhere.
        assert!(d.truth_rgba().chunks(4).all(|p| p[3] == 255));
    }

    #[test]
    fn edge_weight_rendering_brightens_with_eta() {
        let d = demo();
        let dark: u64 = d.edge_weight_rgba(0.05).unwrap().iter().map(|&v| v as u64).sum();
        let bright: u64 = d.edge_weight_rgba(10.0).unwrap().iter().map(|&v| v as u64).sum();
        assert!(bright > dark);
    }

    #[test]
    fn reconstruction_reports_scores() {
        let mut d = demo();
        let rgba = d
            .reconstruct("denoise", "dtv", 0.003, 0.1, 1.0, 0.05, 60)
            .unwrap();
        assert_eq!(rgba.len(), 30 * 30 * 4);
        assert!(d.last_psnr().is_finite());
        assert!(d.last_ssim() > 0.0);
    }

    #[test]
    fn hsv_primary_anchors() {
        assert_eq!(hsv_to_rgb(0.0, 1.0, 1.0), [255, 0, 0]);
        assert_eq!(hsv_to_rgb(120.0, 1.0, 1.0), [0, 255, 0]);
        assert_eq!(hsv_to_rgb(240.0, 1.0, 1.0), [0, 0, 255]);
        assert_eq!(hsv_to_rgb(0.0, 0.0, 0.0), [0, 0, 0]);
    }
}

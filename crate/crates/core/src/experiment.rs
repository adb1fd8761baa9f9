//! End-to-end test cases: phantom, simulated data, assembly, solve, score.
//!
//! Two cases: sparse-view tomography with broken detectors (`x-ray`) and
//! block-mean super-resolution with Gaussian noise (`super-resolution`).
//! A third `denoise` case (identity forward operator) exists as a sanity
//! surrogate. Desk-scale defaults keep runs in CI territory; full-scale
//! settings (200^2, 15 views, 3000 iterations) sit behind a constructor.

use std::path::Path;

use crate::composite::{assemble, BlockOp, CompositeProblem, RegularizerSpec};
use crate::error::{Error, Result};
use crate::fields::{Field, Grid, Image, RadonGeometry};
use crate::forward::{add_noise, Downsampler, NoiseKind, NoiseSpec, RadonTransform};
use crate::io::{fmt_f64, write_csv, write_pgm};
use crate::metrics::{psnr, ssim};
use crate::pdhg::{self, HistoryRow, SolverConfig};
use crate::phantom::{generate_phantom_pair, PhantomPair};
use crate::prox::ProxFunctional;
use crate::sideinfo::SideInformation;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestCase {
    XRay,
    SuperResolution,
    Denoise,
}

impl TestCase {
    pub fn name(&self) -> &'static str {
        match self {
            TestCase::XRay => "x-ray",
            TestCase::SuperResolution => "super-resolution",
            TestCase::Denoise => "denoise",
        }
    }

    pub fn parse(s: &str) -> Result<TestCase> {
        match s.to_ascii_lowercase().as_str() {
            "x-ray" | "xray" => Ok(TestCase::XRay),
            "super-resolution" | "superres" | "super_resolution" => Ok(TestCase::SuperResolution),
            "denoise" => Ok(TestCase::Denoise),
            other => Err(Error::InvalidParameter(format!("unknown test case {other:?}"))),
        }
    }
}

impl std::fmt::Display for TestCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Which data-fit term to use; defaults follow the noise model of the case
/// (robust L1 against salt-and-pepper outliers, quadratic against Gaussian).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FidelityKind {
    Quadratic,
    RobustL1,
}

impl FidelityKind {
    pub fn name(&self) -> &'static str {
        match self {
            FidelityKind::Quadratic => "quadratic",
            FidelityKind::RobustL1 => "l1",
        }
    }

    pub fn parse(s: &str) -> Result<FidelityKind> {
        match s.to_ascii_lowercase().as_str() {
            "quadratic" | "l2" => Ok(FidelityKind::Quadratic),
            "l1" | "robust" => Ok(FidelityKind::RobustL1),
            other => Err(Error::InvalidParameter(format!("unknown fidelity {other:?}"))),
        }
    }
}

/// Declarative description of one reconstruction run.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub case: TestCase,
    /// Pixels per axis of the square reconstruction grid.
    pub size: usize,
    pub reg: RegularizerSpec,
    pub fidelity: FidelityKind,
    /// `None` disables noise.
    pub noise: Option<NoiseKind>,
    pub n_views: usize,
    pub n_detectors: usize,
    pub detector_span: f64,
    /// Super-resolution factor.
    pub factor: usize,
    pub solver: SolverConfig,
    pub prewhiten: bool,
    /// Master seed: phantom, noise and solver draws derive from it.
    pub seed: u64,
    pub n_shared: usize,
    pub n_unshared: usize,
    /// The solve is repeated this often for timing; the median wall time is
    /// reported. Results are identical across repeats (fixed seeds).
    pub timing_repeats: usize,
}

impl ExperimentConfig {
    /// Desk-scale defaults (small enough for CI).
    pub fn desk(case: TestCase, reg: RegularizerSpec) -> Self {
        let mut cfg = ExperimentConfig {
            case,
            size: 64,
            reg,
            fidelity: FidelityKind::Quadratic,
            noise: None,
            n_views: 10,
            n_detectors: 100,
            detector_span: 3.0,
            factor: 5,
            solver: SolverConfig { iterations: 500, rho: 16.0, ..Default::default() },
            prewhiten: true,
            seed: 0,
            n_shared: 5,
            n_unshared: 3,
            timing_repeats: 1,
        };
        match case {
            TestCase::XRay => {
                cfg.fidelity = FidelityKind::RobustL1;
                cfg.noise = Some(NoiseKind::SaltPepper { fraction: 0.05, lo: None, hi: None });
            }
            TestCase::SuperResolution => {
                // The factor must divide the grid.
                cfg.size = 60;
                cfg.noise = Some(NoiseKind::Gaussian { mean: 0.0, stddev: 0.01 });
            }
            TestCase::Denoise => {
                cfg.size = 32;
                cfg.noise = Some(NoiseKind::Gaussian { mean: 0.0, stddev: 0.05 });
            }
        }
        cfg
    }

    /// Full-scale settings: 200^2 grid, 15 views, 3000 iterations and the
    /// stock step-size balance `rho = 1`.
    pub fn full_scale(case: TestCase, reg: RegularizerSpec) -> Self {
        let mut cfg = Self::desk(case, reg);
        cfg.size = 200;
        cfg.n_views = 15;
        cfg.solver.iterations = 3000;
        cfg.solver.rho = 1.0;
        cfg
    }

    fn noise_seed(&self) -> u64 {
        self.seed.wrapping_add(0x9e3779b97f4a7c15)
    }

    pub fn validate(&self) -> Result<()> {
        self.reg.validate()?;
        if self.case == TestCase::SuperResolution && !self.size.is_multiple_of(self.factor) {
            return Err(Error::InvalidParameter(format!(
                "factor {} does not divide grid size {}",
                self.factor, self.size
            )));
        }
        if self.timing_repeats == 0 {
            return Err(Error::InvalidParameter("timing_repeats must be >= 1".into()));
        }
        Ok(())
    }
}

/// Scores and provenance of one run. Wall time is kept out of the metrics
/// CSV so that identically seeded runs serialise byte-identically; timings
/// go to a sibling file.
#[derive(Debug, Clone)]
pub struct MetricsRecord {
    pub case: String,
    pub regulariser: String,
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub gamma: f64,
    pub seed: u64,
    pub prewhitened: bool,
    pub iterations: usize,
    pub psnr_db: f64,
    pub ssim: f64,
    pub wall_time_s: f64,
}

impl MetricsRecord {
    pub const CSV_HEADER: [&'static str; 11] = [
        "case",
        "regulariser",
        "alpha",
        "beta",
        "eta",
        "gamma",
        "seed",
        "prewhitened",
        "iterations",
        "psnr_db",
        "ssim",
    ];

    pub fn csv_row(&self) -> Vec<String> {
        vec![
            self.case.clone(),
            self.regulariser.clone(),
            fmt_f64(self.alpha),
            fmt_f64(self.beta),
            fmt_f64(self.eta),
            fmt_f64(self.gamma),
            self.seed.to_string(),
            self.prewhitened.to_string(),
            self.iterations.to_string(),
            fmt_f64(self.psnr_db),
            fmt_f64(self.ssim),
        ]
    }

    pub const TIMING_HEADER: [&'static str; 5] =
        ["case", "regulariser", "alpha", "repeats", "wall_time_s"];

    pub fn timing_row(&self, repeats: usize) -> Vec<String> {
        vec![
            self.case.clone(),
            self.regulariser.clone(),
            fmt_f64(self.alpha),
            repeats.to_string(),
            fmt_f64(self.wall_time_s),
        ]
    }
}

/// Everything a run produces in memory.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: MetricsRecord,
    pub history: Vec<HistoryRow>,
    pub reconstruction: Image,
    pub phantom: PhantomPair,
}

/// Simulated measurement data plus the operator block that produced it.
pub struct SimulatedData {
    pub k_op: BlockOp,
    pub clean: Field,
    pub noisy: Field,
}

/// Build the forward block for `cfg` and simulate (clean, noisy) data from
/// the ground truth.
pub fn simulate_data(cfg: &ExperimentConfig, u_true: &Image) -> Result<SimulatedData> {
    let grid = *u_true.grid();
    let (k_op, clean) = match cfg.case {
        TestCase::XRay => {
            let geom = RadonGeometry::new(cfg.n_views, cfg.n_detectors, cfg.detector_span)?;
            let rt = RadonTransform::new(grid, geom);
            let sino = rt.forward(u_true)?;
            (BlockOp::Radon(rt), Field::Sino(sino))
        }
        TestCase::SuperResolution => {
            let ds = Downsampler::new(grid, cfg.factor)?;
            let low = ds.forward(u_true)?;
            (BlockOp::Downsample(ds), Field::Scalar(low))
        }
        TestCase::Denoise => (BlockOp::Identity, Field::Scalar(u_true.clone())),
    };
    let mut noisy = clean.clone();
    if let Some(kind) = &cfg.noise {
        add_noise(
            noisy.flat_mut(),
            &NoiseSpec { kind: kind.clone(), seed: cfg.noise_seed() },
        )?;
    }
    Ok(SimulatedData { k_op, clean, noisy })
}

/// Assemble the composite problem of `cfg` for the given data.
pub fn build_problem(
    cfg: &ExperimentConfig,
    guide: &Image,
    data: &SimulatedData,
) -> Result<CompositeProblem> {
    let grid = match &data.k_op {
        BlockOp::Radon(rt) => *rt.grid(),
        BlockOp::Downsample(ds) => *ds.fine_grid(),
        _ => *guide.grid(),
    };
    let side_info = if cfg.reg.kind.needs_side_info() {
        Some(
            SideInformation::new(guide, cfg.reg.eta, cfg.reg.gamma)
                .map_err(|e| e.at_stage("side-information"))?,
        )
    } else {
        None
    };
    let weight = data.noisy.cell_weight();
    let fidelity = match cfg.fidelity {
        FidelityKind::Quadratic => {
            ProxFunctional::QuadraticFidelity { data: data.noisy.clone(), weight }
        }
        FidelityKind::RobustL1 => {
            ProxFunctional::RobustL1Fidelity { data: data.noisy.clone(), weight }
        }
    };
    let mut problem = assemble(grid, &cfg.reg, fidelity, data.k_op.clone(), side_info.as_ref())
        .map_err(|e| e.at_stage("assemble"))?;
    if cfg.prewhiten {
        problem
            .compute_norms(
                cfg.solver.norm_max_iters,
                cfg.solver.norm_tol,
                cfg.solver.seed,
                cfg.solver.norm_safety,
            )
            .map_err(|e| e.at_stage("block-norms"))?;
        problem = problem.prewhiten().map_err(|e| e.at_stage("prewhiten"))?;
    }
    Ok(problem)
}

/// Run one full case; artifacts are written when `out_dir` is given
/// (reconstruction and phantom PGMs, metrics/timing/history CSVs).
pub fn run_case(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<RunOutput> {
    cfg.validate()?;
    let grid = Grid::square(cfg.size).map_err(|e| e.at_stage("grid"))?;
    let pair = generate_phantom_pair(grid, cfg.seed, cfg.n_shared, cfg.n_unshared)
        .map_err(|e| e.at_stage("phantom"))?;
    let data = simulate_data(cfg, &pair.u_true).map_err(|e| e.at_stage("simulate"))?;
    let problem = build_problem(cfg, &pair.v, &data)?;

    let mut times: Vec<f64> = Vec::with_capacity(cfg.timing_repeats);
    let mut result = None;
    for _ in 0..cfg.timing_repeats {
        let r = pdhg::run(&problem, &cfg.solver).map_err(|e| e.at_stage("solve"))?;
        times.push(r.wall_time_s);
        result = Some(r);
    }
    let result = result.expect("timing_repeats >= 1");
    times.sort_by(|a, b| a.total_cmp(b));
    let median_time = times[times.len() / 2];

    let reconstruction = result.x.image(0).clone();
    let metrics = MetricsRecord {
        case: cfg.case.name().into(),
        regulariser: cfg.reg.kind.name().into(),
        alpha: cfg.reg.alpha,
        beta: cfg.reg.beta,
        eta: cfg.reg.eta,
        gamma: cfg.reg.gamma,
        seed: cfg.seed,
        prewhitened: cfg.prewhiten,
        iterations: cfg.solver.iterations,
        psnr_db: psnr(&reconstruction, &pair.u_true).map_err(|e| e.at_stage("metrics"))?,
        ssim: ssim(&reconstruction, &pair.u_true).map_err(|e| e.at_stage("metrics"))?,
        wall_time_s: median_time,
    };
    let out = RunOutput { metrics, history: result.history, reconstruction, phantom: pair };
    if let Some(dir) = out_dir {
        write_run_artifacts(&out, dir).map_err(|e| e.at_stage("artifacts"))?;
    }
    Ok(out)
}

fn image_window(img: &Image) -> (f64, f64) {
    let (lo, hi) = (img.min(), img.max());
    if hi > lo {
        (lo, hi)
    } else {
        (lo, lo + 1.0)
    }
}

fn write_run_artifacts(out: &RunOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let window = image_window(&out.phantom.u_true);
    write_pgm(&out.reconstruction, dir.join("reconstruction.pgm"), window)?;
    write_pgm(&out.phantom.u_true, dir.join("truth.pgm"), window)?;
    write_pgm(&out.phantom.v, dir.join("guide.pgm"), image_window(&out.phantom.v))?;
    write_csv(
        dir.join("metrics.csv"),
        &MetricsRecord::CSV_HEADER,
        [out.metrics.csv_row()],
    )?;
    write_csv(
        dir.join("timing.csv"),
        &MetricsRecord::TIMING_HEADER,
        [out.metrics.timing_row(1)],
    )?;
    write_history_csv(&out.history, &dir.join("history.csv"))?;
    Ok(())
}

/// History CSV: iteration, objective, gap, wall-time.
pub fn write_history_csv(history: &[HistoryRow], path: &Path) -> Result<()> {
    write_csv(
        path,
        &["iteration", "objective", "gap", "wall_time_s"],
        history.iter().map(|r| {
            vec![
                r.iteration.to_string(),
                fmt_f64(r.objective),
                fmt_f64(r.gap),
                fmt_f64(r.wall_time_s),
            ]
        }),
    )
}

/// Sweepable parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Eta,
    Alpha,
    Gamma,
    Beta,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::Eta => "eta",
            SweepParam::Alpha => "alpha",
            SweepParam::Gamma => "gamma",
            SweepParam::Beta => "beta",
        }
    }

    pub fn parse(s: &str) -> Result<SweepParam> {
        match s.to_ascii_lowercase().as_str() {
            "eta" => Ok(SweepParam::Eta),
            "alpha" => Ok(SweepParam::Alpha),
            "gamma" => Ok(SweepParam::Gamma),
            "beta" => Ok(SweepParam::Beta),
            other => Err(Error::InvalidParameter(format!("unknown sweep parameter {other:?}"))),
        }
    }

    pub fn apply(&self, cfg: &mut ExperimentConfig, value: f64) {
        match self {
            SweepParam::Eta => cfg.reg.eta = value,
            SweepParam::Alpha => cfg.reg.alpha = value,
            SweepParam::Gamma => cfg.reg.gamma = value,
            SweepParam::Beta => cfg.reg.beta = value,
        }
    }
}

/// Run `cfg` once per value of `param`, sharing the seed and phantom.
/// Writes a combined metrics CSV and a horizontal reconstruction strip when
/// `out_dir` is given.
pub fn sweep(
    cfg: &ExperimentConfig,
    param: SweepParam,
    values: &[f64],
    out_dir: Option<&Path>,
) -> Result<Vec<RunOutput>> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("sweep needs at least one value".into()));
    }
    let mut outputs = Vec::with_capacity(values.len());
    for &value in values {
        let mut c = cfg.clone();
        param.apply(&mut c, value);
        let sub = out_dir.map(|d| d.join(format!("{}_{}", param.name(), fmt_f64(value))));
        outputs.push(run_case(&c, sub.as_deref())?);
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        write_csv(
            dir.join("sweep.csv"),
            &MetricsRecord::CSV_HEADER,
            outputs.iter().map(|o| o.metrics.csv_row()),
        )?;
        let strip = reconstruction_strip(&outputs)?;
        let window = image_window(&outputs[0].phantom.u_true);
        write_pgm(&strip, dir.join("sweep_strip.pgm"), window)?;
    }
    Ok(outputs)
}

/// Horizontal concatenation of the sweep reconstructions.
fn reconstruction_strip(outputs: &[RunOutput]) -> Result<Image> {
    let first = outputs[0].reconstruction.grid();
    let (nx, ny, h) = (first.nx(), first.ny(), first.h());
    let total = nx * outputs.len();
    let grid = Grid::new(
        total,
        ny,
        (0.0, total as f64 * h),
        (0.0, ny as f64 * h),
    )?;
    let mut strip = Image::zeros(grid);
    for (s, out) in outputs.iter().enumerate() {
        for j in 0..ny {
            for i in 0..nx {
                strip.set(s * nx + i, j, out.reconstruction.get(i, j));
            }
        }
    }
    Ok(strip)
}

/// Fixed 7-point logarithmic grid spanning 3 decades around `center`, used
/// by the tuned-alpha comparison protocol.
pub fn alpha_grid(center: f64) -> [f64; 7] {
    let mut out = [0.0; 7];
    for (i, o) in out.iter_mut().enumerate() {
        *o = center * 10f64.powf(-1.5 + 0.5 * i as f64);
    }
    out
}

/// Default alpha-grid centre per test case (desk scale); calibrated so the
/// grid brackets the best PSNR for all eleven regularisers.
pub fn default_alpha_center(case: TestCase) -> f64 {
    match case {
        TestCase::XRay => 0.01,
        TestCase::SuperResolution => 0.003,
        TestCase::Denoise => 0.003,
    }
}

/// Default directional strength per test case.
pub fn default_gamma(case: TestCase) -> f64 {
    match case {
        TestCase::SuperResolution => 0.9,
        _ => 1.0,
    }
}

//! `grecon`: phantom generation, data simulation, reconstruction runs,
//! parameter sweeps and report aggregation for the guided-recon toolkit.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use guided_recon::composite::{RegKind, RegularizerSpec};
use guided_recon::diffops::{gradient, similarity_report};
use guided_recon::experiment::{
    default_alpha_center, default_gamma, run_case, simulate_data, sweep, ExperimentConfig,
    MetricsRecord, SweepParam, TestCase,
};
use guided_recon::fields::{Field, Grid};
use guided_recon::io::{fmt_f64, write_csv, write_pgm};
use guided_recon::phantom::generate_phantom_pair;

#[derive(Parser)]
#[command(name = "grecon", version, about = "Structure-guided variational reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a phantom pair (ground truth and guide image).
    Phantom(CommonOpts),
    /// Simulate measurement data for a test case.
    Simulate(CommonOpts),
    /// Run a single reconstruction and write its artifacts.
    Reconstruct(CommonOpts),
    /// Run one reconstruction per value of a swept parameter.
    Sweep(SweepOpts),
    /// Aggregate metrics/timing CSV files under a directory.
    Report(ReportOpts),
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Flat key-value config file (`key = value` per line); explicit flags
    /// take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Test case: x-ray | super-resolution | denoise.
    #[arg(long)]
    case: Option<String>,
    /// Regulariser: h1 wh1 dh1 tv wtv dtv jtv tnv tgv wtgv dtgv.
    #[arg(long)]
    reg: Option<String>,
    /// Regularisation weight.
    #[arg(long)]
    alpha: Option<f64>,
    /// Edge parameter of the guide weighting.
    #[arg(long)]
    eta: Option<f64>,
    /// Directional strength in (0, 1].
    #[arg(long)]
    gamma: Option<f64>,
    /// Second-order weight of the TGV family.
    #[arg(long)]
    beta: Option<f64>,
    /// Master seed (phantom, noise, solver draws).
    #[arg(long)]
    seed: Option<u64>,
    /// PDHG iteration count.
    #[arg(long)]
    iters: Option<usize>,
    /// PDHG step-size balance.
    #[arg(long)]
    rho: Option<f64>,
    /// Grid size (pixels per axis).
    #[arg(long)]
    size: Option<usize>,
    /// Skip prewhitening of the operator blocks.
    #[arg(long)]
    no_prewhiten: bool,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of projection views (x-ray case).
    #[arg(long)]
    views: Option<usize>,
    /// Number of detector bins (x-ray case).
    #[arg(long)]
    detectors: Option<usize>,
    /// Super-resolution factor.
    #[arg(long)]
    factor: Option<usize>,
    /// Shared phantom disks.
    #[arg(long)]
    shared: Option<usize>,
    /// Unshared (truth-only) phantom disks.
    #[arg(long)]
    unshared: Option<usize>,
    /// Full-scale preset: 200^2 grid, 15 views, 3000 iterations, rho 1.
    #[arg(long)]
    full_scale: bool,
    /// Repeat the solve and report the median wall time.
    #[arg(long)]
    timing_repeats: Option<usize>,
}

#[derive(Args)]
struct SweepOpts {
    #[command(flatten)]
    common: CommonOpts,
    /// Parameter to sweep: eta | alpha | gamma | beta.
    #[arg(long)]
    param: String,
    /// Comma-separated values.
    #[arg(long)]
    values: String,
}

#[derive(Args)]
struct ReportOpts {
    /// Directory to scan recursively for metrics.csv / timing.csv files.
    #[arg(long)]
    dir: PathBuf,
    /// Where to write the combined CSV (default: <dir>/report.csv).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// `key = value` per line, `#` comments. Keys mirror the long flags.
fn read_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .with_context(|| format!("line {} is not `key = value`", lineno + 1))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

struct Resolved {
    cfg: ExperimentConfig,
    out: Option<PathBuf>,
}

fn resolve(opts: &CommonOpts) -> Result<Resolved> {
    let file = match &opts.config {
        Some(p) => read_config(p)?,
        None => BTreeMap::new(),
    };
    fn pick<T: std::str::FromStr + Clone>(
        flag: &Option<T>,
        file: &BTreeMap<String, String>,
        key: &str,
    ) -> Result<Option<T>>
    where
        <T as std::str::FromStr>::Err: std::fmt::Display,
    {
        if let Some(v) = flag {
            return Ok(Some(v.clone()));
        }
        match file.get(key) {
            Some(s) => s
                .parse::<T>()
                .map(Some)
                .map_err(|e| anyhow::anyhow!("config key {key}: {e}")),
            None => Ok(None),
        }
    }
    let flag_true = |set: bool, key: &str| -> bool {
        set || file.get(key).map(|v| v == "true" || v == "1") == Some(true)
    };

    let case = match pick(&opts.case, &file, "case")? {
        Some(s) => TestCase::parse(&s)?,
        None => TestCase::XRay,
    };
    let kind = match pick(&opts.reg, &file, "reg")? {
        Some(s) => RegKind::parse(&s)?,
        None => RegKind::Tv,
    };
    let mut reg = RegularizerSpec::new(kind, default_alpha_center(case));
    reg.gamma = default_gamma(case);
    if let Some(a) = pick(&opts.alpha, &file, "alpha")? {
        reg.alpha = a;
    }
    if let Some(e) = pick(&opts.eta, &file, "eta")? {
        reg.eta = e;
    }
    if let Some(g) = pick(&opts.gamma, &file, "gamma")? {
        reg.gamma = g;
    }
    if let Some(b) = pick(&opts.beta, &file, "beta")? {
        reg.beta = b;
    }

    let mut cfg = if flag_true(opts.full_scale, "full-scale") {
        ExperimentConfig::full_scale(case, reg)
    } else {
        ExperimentConfig::desk(case, reg)
    };
    if let Some(s) = pick(&opts.size, &file, "size")? {
        cfg.size = s;
    }
    if let Some(v) = pick(&opts.views, &file, "views")? {
        cfg.n_views = v;
    }
    if let Some(d) = pick(&opts.detectors, &file, "detectors")? {
        cfg.n_detectors = d;
    }
    if let Some(f) = pick(&opts.factor, &file, "factor")? {
        cfg.factor = f;
    }
    if let Some(s) = pick(&opts.seed, &file, "seed")? {
        cfg.seed = s;
    }
    if let Some(i) = pick(&opts.iters, &file, "iters")? {
        cfg.solver.iterations = i;
    }
    if let Some(r) = pick(&opts.rho, &file, "rho")? {
        cfg.solver.rho = r;
    }
    if let Some(n) = pick(&opts.shared, &file, "shared")? {
        cfg.n_shared = n;
    }
    if let Some(n) = pick(&opts.unshared, &file, "unshared")? {
        cfg.n_unshared = n;
    }
    if let Some(t) = pick(&opts.timing_repeats, &file, "timing-repeats")? {
        cfg.timing_repeats = t;
    }
    cfg.prewhiten = !flag_true(opts.no_prewhiten, "no-prewhiten");

    let out = match &opts.out {
        Some(p) => Some(p.clone()),
        None => file.get("out").map(PathBuf::from),
    };
    Ok(Resolved { cfg, out })
}

fn require_out(r: &Resolved) -> Result<&PathBuf> {
    r.out.as_ref().context("this subcommand needs --out <dir>")
}

fn cmd_phantom(opts: &CommonOpts) -> Result<()> {
    let r = resolve(opts)?;
    let dir = require_out(&r)?;
    std::fs::create_dir_all(dir)?;
    let grid = Grid::square(r.cfg.size)?;
    let pair = generate_phantom_pair(grid, r.cfg.seed, r.cfg.n_shared, r.cfg.n_unshared)?;
    write_pgm(&pair.u_true, dir.join("truth.pgm"), (pair.u_true.min(), pair.u_true.max()))?;
    write_pgm(&pair.v, dir.join("guide.pgm"), (pair.v.min(), pair.v.max()))?;

    // Structural-similarity diagnostics of the pair.
    let eps = 0.05 * gradient(&pair.u_true).max_norm().max(1e-30);
    let rep = similarity_report(&pair.u_true, &pair.v, eps)?;
    write_csv(
        dir.join("phantom.csv"),
        &["size", "seed", "shared", "unshared", "edge_epsilon", "jaccard", "parallel_fraction"],
        [vec![
            r.cfg.size.to_string(),
            r.cfg.seed.to_string(),
            r.cfg.n_shared.to_string(),
            r.cfg.n_unshared.to_string(),
            fmt_f64(eps),
            fmt_f64(rep.jaccard),
            fmt_f64(rep.parallel_fraction),
        ]],
    )?;
    println!(
        "phantom written to {} (jaccard {:.3}, parallel fraction {:.3})",
        dir.display(),
        rep.jaccard,
        rep.parallel_fraction
    );
    Ok(())
}

fn cmd_simulate(opts: &CommonOpts) -> Result<()> {
    let r = resolve(opts)?;
    let dir = require_out(&r)?;
    std::fs::create_dir_all(dir)?;
    r.cfg.validate()?;
    let grid = Grid::square(r.cfg.size)?;
    let pair = generate_phantom_pair(grid, r.cfg.seed, r.cfg.n_shared, r.cfg.n_unshared)?;
    let data = simulate_data(&r.cfg, &pair.u_true)?;
    match (&data.clean, &data.noisy) {
        (Field::Sino(clean), Field::Sino(noisy)) => {
            write_sinogram_csv(clean, &dir.join("sinogram_clean.csv"))?;
            write_sinogram_csv(noisy, &dir.join("sinogram.csv"))?;
            println!(
                "sinogram ({} views x {} detectors) written to {}",
                clean.geometry().n_views(),
                clean.geometry().n_detectors(),
                dir.display()
            );
        }
        (Field::Scalar(clean), Field::Scalar(noisy)) => {
            let w = (clean.min(), clean.max());
            write_pgm(clean, dir.join("data_clean.pgm"), w)?;
            write_pgm(noisy, dir.join("data.pgm"), (noisy.min(), noisy.max()))?;
            println!(
                "{} x {} data images written to {}",
                clean.grid().nx(),
                clean.grid().ny(),
                dir.display()
            );
        }
        _ => bail!("unexpected data layout"),
    }
    Ok(())
}

/// One row per view, comma-separated detector readings.
fn write_sinogram_csv(s: &guided_recon::fields::Sinogram, path: &Path) -> Result<()> {
    let nd = s.geometry().n_detectors();
    let header: Vec<String> = (0..nd).map(|d| format!("det{d}")).collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(
        path,
        &header_refs,
        (0..s.geometry().n_views())
            .map(|v| (0..nd).map(|d| fmt_f64(s.data()[s.idx(v, d)])).collect::<Vec<_>>()),
    )?;
    Ok(())
}

fn cmd_reconstruct(opts: &CommonOpts) -> Result<()> {
    let r = resolve(opts)?;
    let out = run_case(&r.cfg, r.out.as_deref())?;
    println!(
        "case={} reg={} alpha={} psnr={:.2} dB ssim={:.4} iters={} time={:.2}s",
        out.metrics.case,
        out.metrics.regulariser,
        fmt_f64(out.metrics.alpha),
        out.metrics.psnr_db,
        out.metrics.ssim,
        out.metrics.iterations,
        out.metrics.wall_time_s
    );
    if let Some(dir) = &r.out {
        println!("artifacts in {}", dir.display());
    }
    Ok(())
}

fn cmd_sweep(opts: &SweepOpts) -> Result<()> {
    let r = resolve(&opts.common)?;
    let param = SweepParam::parse(&opts.param)?;
    let values: Vec<f64> = opts
        .values
        .split(',')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("bad sweep value {s:?}")))
        .collect::<Result<_>>()?;
    let outs = sweep(&r.cfg, param, &values, r.out.as_deref())?;
    for o in &outs {
        println!(
            "{}={} psnr={:.2} dB ssim={:.4}",
            param.name(),
            fmt_f64(match param {
                SweepParam::Eta => o.metrics.eta,
                SweepParam::Alpha => o.metrics.alpha,
                SweepParam::Gamma => o.metrics.gamma,
                SweepParam::Beta => o.metrics.beta,
            }),
            o.metrics.psnr_db,
            o.metrics.ssim
        );
    }
    Ok(())
}

fn cmd_report(opts: &ReportOpts) -> Result<()> {
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut timing: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    collect_csv_rows(&opts.dir, &mut rows, &mut timing)?;
    if rows.is_empty() {
        bail!("no metrics.csv files under {}", opts.dir.display());
    }
    rows.sort();
    let out_path = opts.out.clone().unwrap_or_else(|| opts.dir.join("report.csv"));
    let header: Vec<&str> = MetricsRecord::CSV_HEADER.to_vec();
    write_csv(&out_path, &header, rows.iter().cloned())?;

    // Best PSNR per (case, regulariser) to stdout.
    let mut best: BTreeMap<(String, String), (f64, f64)> = BTreeMap::new();
    for row in &rows {
        let key = (row[0].clone(), row[1].clone());
        let psnr: f64 = row[9].parse().unwrap_or(f64::NEG_INFINITY);
        let alpha: f64 = row[2].parse().unwrap_or(f64::NAN);
        let e = best.entry(key).or_insert((f64::NEG_INFINITY, f64::NAN));
        if psnr > e.0 {
            *e = (psnr, alpha);
        }
    }
    println!("{:<18} {:<6} {:>9} {:>12} {:>12}", "case", "reg", "psnr", "alpha", "median_t");
    for ((case, reg), (psnr, alpha)) in &best {
        let t = timing
            .get(&(case.clone(), reg.clone()))
            .map(|v| {
                let mut v = v.clone();
                v.sort_by(f64::total_cmp);
                v[v.len() / 2]
            })
            .unwrap_or(f64::NAN);
        println!("{case:<18} {reg:<6} {psnr:>9.2} {alpha:>12.4e} {t:>11.2}s");
    }
    println!("combined CSV: {}", out_path.display());
    Ok(())
}

fn collect_csv_rows(
    dir: &Path,
    rows: &mut Vec<Vec<String>>,
    timing: &mut BTreeMap<(String, String), Vec<f64>>,
) -> Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        if path.is_dir() {
            collect_csv_rows(&path, rows, timing)?;
        } else if path.file_name().map(|n| n == "metrics.csv" || n == "sweep.csv") == Some(true) {
            let text = std::fs::read_to_string(&path)?;
            for line in text.lines().skip(1) {
                let row: Vec<String> = line.split(',').map(str::to_string).collect();
                if row.len() == MetricsRecord::CSV_HEADER.len() {
                    rows.push(row);
                }
            }
        } else if path.file_name().map(|n| n == "timing.csv") == Some(true) {
            let text = std::fs::read_to_string(&path)?;
            for line in text.lines().skip(1) {
                let row: Vec<&str> = line.split(',').collect();
                if row.len() == MetricsRecord::TIMING_HEADER.len() {
                    if let Ok(t) = row[4].parse::<f64>() {
                        timing
                            .entry((row[0].to_string(), row[1].to_string()))
                            .or_default()
                            .push(t);
                    }
                }
            }
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Phantom(o) => cmd_phantom(o),
        Command::Simulate(o) => cmd_simulate(o),
        Command::Reconstruct(o) => cmd_reconstruct(o),
        Command::Sweep(o) => cmd_sweep(o),
        Command::Report(o) => cmd_report(o),
    }
}

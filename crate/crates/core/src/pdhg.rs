//! Primal-dual hybrid gradient loop over a composite problem.
//!
//! With step sizes `sigma = rho / |A|` and `tau = 0.999 / (rho |A|)` the
//! product `sigma tau |A|^2 = 0.999 < 1` holds by construction. Iterates
//! start at zero, run for a fixed iteration count (no stopping criterion)
//! and the duality gap is logged, never acted on.

use std::time::Instant;

use crate::composite::CompositeProblem;
use crate::error::{Error, Result};
use crate::fields::{Field, StackedVariable};

/// Solver parameters. `sigma`/`tau` are derived from `rho` and the stacked
/// norm estimate; everything that draws randomness is seeded.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Step-size balance between the primal and dual updates.
    pub rho: f64,
    /// Fixed iteration count.
    pub iterations: usize,
    /// Multiplier on the stacked norm estimate before step sizes are
    /// formed; keeps the estimate on the safe side of the true norm.
    pub norm_safety: f64,
    /// History rows are recorded every `log_every` iterations (and at the
    /// final one).
    pub log_every: usize,
    /// Seed for the power-method start vector.
    pub seed: u64,
    /// Power-method iteration cap.
    pub norm_max_iters: usize,
    /// Power-method relative-change tolerance.
    pub norm_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rho: 1.0,
            iterations: 3000,
            norm_safety: 1.01,
            log_every: 100,
            seed: 0,
            norm_max_iters: 500,
            norm_tol: 1e-6,
        }
    }
}

/// One logged diagnostic row.
#[derive(Debug, Clone)]
pub struct HistoryRow {
    pub iteration: usize,
    pub objective: f64,
    pub gap: f64,
    pub wall_time_s: f64,
}

/// Result of a full solver run.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub x: StackedVariable,
    pub history: Vec<HistoryRow>,
    /// Stacked norm estimate actually used for the step sizes (including
    /// the safety factor).
    pub norm_estimate: f64,
    pub sigma: f64,
    pub tau: f64,
    pub wall_time_s: f64,
}

/// Stepping interface around Algorithm-style iterations, usable both for
/// batch runs and for incremental (interactive) stepping.
pub struct Solver<'a> {
    problem: &'a CompositeProblem,
    x: StackedVariable,
    y: Vec<Field>,
    sigma: f64,
    tau: f64,
    norm_estimate: f64,
    k: usize,
}

impl<'a> Solver<'a> {
    /// Estimate the stacked operator norm and initialise `x = 0`, `y = 0`.
    pub fn new(problem: &'a CompositeProblem, cfg: &SolverConfig) -> Result<Self> {
        if !(cfg.rho > 0.0) {
            return Err(Error::InvalidParameter(format!("rho must be > 0, got {}", cfg.rho)));
        }
        let raw = problem.estimate_stacked_norm(cfg.norm_max_iters, cfg.norm_tol, cfg.seed);
        if !(raw > 0.0) {
            return Err(Error::DegenerateInput("stacked operator has zero norm".into()));
        }
        let norm = raw * cfg.norm_safety;
        let sigma = cfg.rho / norm;
        let tau = 0.999 / (cfg.rho * norm);
        let x = problem.template().zeros_like();
        let y: Vec<Field> = problem.apply_forward(&x); // correctly shaped zeros
        Ok(Solver { problem, x, y, sigma, tau, norm_estimate: norm, k: 0 })
    }

    pub fn x(&self) -> &StackedVariable {
        &self.x
    }

    pub fn iteration(&self) -> usize {
        self.k
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn norm_estimate(&self) -> f64 {
        self.norm_estimate
    }

    /// One primal-dual iteration:
    /// `x+ = prox_{tau G}(x - tau A^T y)`,
    /// `y+ = prox_{sigma F*}(y + sigma A (2 x+ - x))`.
    pub fn step(&mut self) -> Result<()> {
        self.k += 1;

        let aty = self.problem.apply_adjoint(&self.y);
        let mut z = self.x.clone();
        z.axpy(-self.tau, &aty);
        let x_new = self.problem.prox_simple(&z, self.tau)?;

        let x_bar = StackedVariable::lincomb(2.0, &x_new, -1.0, &self.x);
        let ax_bar = self.problem.apply_forward(&x_bar);
        for ((y, f), a) in self
            .y
            .iter_mut()
            .zip(self.problem.functionals())
            .zip(&ax_bar)
        {
            y.axpy(self.sigma, a);
            *y = f.conjugate_prox_in_space(y, self.sigma, y.cell_weight())?;
        }
        self.x = x_new;

        if !self.x.all_finite() {
            return Err(Error::NonFiniteIterate { iteration: self.k, what: "primal" });
        }
        if !self.y.iter().all(Field::all_finite) {
            return Err(Error::NonFiniteIterate { iteration: self.k, what: "dual" });
        }
        Ok(())
    }

    /// Duality gap of the current iterate pair.
    pub fn gap(&self) -> f64 {
        primal_dual_gap(self.problem, &self.x, &self.y)
    }

    pub fn duals(&self) -> &[Field] {
        &self.y
    }
}

/// Run the full loop with history logging.
pub fn run(problem: &CompositeProblem, cfg: &SolverConfig) -> Result<SolveResult> {
    let start = Instant::now();
    let mut solver = Solver::new(problem, cfg)?;
    let mut history = Vec::new();
    let log_every = cfg.log_every.max(1);
    for k in 1..=cfg.iterations {
        solver.step()?;
        if k % log_every == 0 || k == cfg.iterations {
            history.push(HistoryRow {
                iteration: k,
                objective: problem.objective(&solver.x)?,
                gap: solver.gap(),
                wall_time_s: start.elapsed().as_secs_f64(),
            });
        }
    }
    Ok(SolveResult {
        x: solver.x,
        history,
        norm_estimate: solver.norm_estimate,
        sigma: solver.sigma,
        tau: solver.tau,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Feasibility tolerance for dual indicator constraints in the gap.
const GAP_FEAS_TOL: f64 = 1e-9;

/// `(primal objective) - (dual objective)`; `+inf` when a dual constraint
/// is violated beyond tolerance. Nonnegative up to rounding by weak duality.
pub fn primal_dual_gap(p: &CompositeProblem, x: &StackedVariable, y: &[Field]) -> f64 {
    let primal = match p.objective(x) {
        Ok(v) => v,
        Err(_) => return f64::INFINITY,
    };

    // Dual: -sum_i F_i*(y_i) - G*(-A^T y), conjugates taken in the
    // grid-weighted spaces the solver runs in.
    let mut dual = 0.0;
    for (f, yi) in p.functionals().iter().zip(y) {
        match f.conjugate_value(yi, yi.cell_weight(), GAP_FEAS_TOL) {
            Ok(v) if v.is_finite() => dual -= v,
            _ => return f64::INFINITY,
        }
    }
    let mut w = p.apply_adjoint(y);
    w.scale(-1.0);
    for (g, wc) in p.simple_term().iter().zip(w.parts()) {
        match g.conjugate_value(wc, wc.cell_weight(), GAP_FEAS_TOL) {
            Ok(v) if v.is_finite() => dual -= v,
            _ => return f64::INFINITY,
        }
    }
    primal - dual
}

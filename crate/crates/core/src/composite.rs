//! Assembly of regularised inverse problems into the composite form
//! `min_x sum_i F_i(A_i x) + G(x)`.
//!
//! Block 1 is always the forward operator paired with the data fidelity;
//! the remaining blocks realise the chosen regulariser. First-order models
//! use `x = (u,)`, the second-order (TGV) family uses `x = (u, zeta)`.
//! Discrete regulariser weights carry the pixel area `h^2`, so `alpha`
//! transfers across grid resolutions.

use crate::diffops::{divergence, gradient, sym_divergence, sym_gradient};
use crate::error::{Error, Result};
use crate::fields::{Field, Grid, Image, MatrixField, StackedVariable, VectorField};
use crate::forward::{power_method, Downsampler, RadonTransform};
use crate::prox::ProxFunctional;
use crate::sideinfo::SideInformation;

/// The eleven supported regularisers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegKind {
    H1,
    Wh1,
    Dh1,
    Tv,
    Wtv,
    Dtv,
    Jtv,
    Tnv,
    Tgv,
    Wtgv,
    Dtgv,
}

impl RegKind {
    pub const ALL: [RegKind; 11] = [
        RegKind::H1,
        RegKind::Wh1,
        RegKind::Dh1,
        RegKind::Tv,
        RegKind::Wtv,
        RegKind::Dtv,
        RegKind::Jtv,
        RegKind::Tnv,
        RegKind::Tgv,
        RegKind::Wtgv,
        RegKind::Dtgv,
    ];

    /// True for every kind that needs side information.
    pub fn needs_side_info(&self) -> bool {
        !matches!(self, RegKind::H1 | RegKind::Tv | RegKind::Tgv)
    }

    /// True for the second-order (TGV) family with auxiliary variable.
    pub fn is_second_order(&self) -> bool {
        matches!(self, RegKind::Tgv | RegKind::Wtgv | RegKind::Dtgv)
    }

    pub fn name(&self) -> &'static str {
        match self {
            RegKind::H1 => "h1",
            RegKind::Wh1 => "wh1",
            RegKind::Dh1 => "dh1",
            RegKind::Tv => "tv",
            RegKind::Wtv => "wtv",
            RegKind::Dtv => "dtv",
            RegKind::Jtv => "jtv",
            RegKind::Tnv => "tnv",
            RegKind::Tgv => "tgv",
            RegKind::Wtgv => "wtgv",
            RegKind::Dtgv => "dtgv",
        }
    }

    pub fn parse(s: &str) -> Result<RegKind> {
        RegKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidParameter(format!("unknown regulariser {s:?}")))
    }
}

impl std::fmt::Display for RegKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Regulariser choice with its parameters.
#[derive(Debug, Clone)]
pub struct RegularizerSpec {
    pub kind: RegKind,
    /// Regularisation weight.
    pub alpha: f64,
    /// Second-order weight of the TGV family (the third block carries
    /// `alpha * beta`).
    pub beta: f64,
    /// Edge parameter of the guide-image weighting.
    pub eta: f64,
    /// Directional strength in `(0, 1]`.
    pub gamma: f64,
}

impl RegularizerSpec {
    pub fn new(kind: RegKind, alpha: f64) -> Self {
        RegularizerSpec { kind, alpha, beta: 5e-2, eta: 0.1, gamma: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidParameter(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if self.kind.is_second_order() && !(self.beta > 0.0) {
            return Err(Error::InvalidParameter(format!("beta must be > 0, got {}", self.beta)));
        }
        if self.kind.needs_side_info() {
            if !(self.eta > 0.0) {
                return Err(Error::InvalidParameter(format!("eta must be > 0, got {}", self.eta)));
            }
            if !(self.gamma > 0.0 && self.gamma <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "gamma must be in (0, 1], got {}",
                    self.gamma
                )));
            }
        }
        Ok(())
    }
}

/// Per-pixel scaling applied to the image gradient inside a block:
/// nothing, the scalar edge weight `w`, or the projector `I - gamma xi xi^T`.
#[derive(Debug, Clone)]
pub enum GradScaling {
    Plain,
    Weighted(Image),
    Directional { xi: VectorField, gamma: f64 },
}

impl GradScaling {
    /// Apply the per-pixel scaling in place. All variants are symmetric,
    /// so this is also the adjoint action.
    fn apply(&self, p: &mut VectorField) {
        match self {
            GradScaling::Plain => {}
            GradScaling::Weighted(w) => {
                for k in 0..w.grid().len() {
                    let v = p.get(k);
                    let s = w.data()[k];
                    p.set(k, [s * v[0], s * v[1]]);
                }
            }
            GradScaling::Directional { xi, gamma } => {
                for k in 0..xi.grid().len() {
                    let x = xi.get(k);
                    let v = p.get(k);
                    let s = gamma * (x[0] * v[0] + x[1] * v[1]);
                    p.set(k, [v[0] - s * x[0], v[1] - s * x[1]]);
                }
            }
        }
    }
}

/// One linear operator of the stacked system. Forward maps the full primal
/// variable into the block's output space; adjoint maps back, touching only
/// the components the block reads.
#[derive(Debug, Clone)]
pub enum BlockOp {
    /// `u` as is (denoising surrogate for `K`).
    Identity,
    /// Parallel-beam projection of `u`.
    Radon(RadonTransform),
    /// Block-mean downsampling of `u`.
    Downsample(Downsampler),
    /// `scaling(grad u)`.
    Gradient(GradScaling),
    /// `scaling(grad u) - zeta` (first block of the TGV family).
    TgvGradient(GradScaling),
    /// `E zeta`, the symmetrised gradient of the auxiliary field.
    SymGradient,
    /// `[grad u, 0]` as a per-pixel 2x2 matrix (Jacobian-based models).
    JacobianPad,
    /// `factor * inner(x)`, used by prewhitening.
    Scaled { inner: Box<BlockOp>, factor: f64 },
}

impl BlockOp {
    pub fn forward(&self, x: &StackedVariable) -> Field {
        match self {
            BlockOp::Identity => Field::Scalar(x.image(0).clone()),
            BlockOp::Radon(rt) => {
                Field::Sino(rt.forward(x.image(0)).expect("radon grid mismatch"))
            }
            BlockOp::Downsample(ds) => {
                Field::Scalar(ds.forward(x.image(0)).expect("downsample grid mismatch"))
            }
            BlockOp::Gradient(scaling) => {
                let mut g = gradient(x.image(0));
                scaling.apply(&mut g);
                Field::Vector(g)
            }
            BlockOp::TgvGradient(scaling) => {
                let mut g = gradient(x.image(0));
                scaling.apply(&mut g);
                let zeta = x.vector(1);
                for (a, b) in g.data_mut().iter_mut().zip(zeta.data()) {
                    *a -= b;
                }
                Field::Vector(g)
            }
            BlockOp::SymGradient => Field::Matrix(sym_gradient(x.vector(1))),
            BlockOp::JacobianPad => {
                let g = gradient(x.image(0));
                let grid = *g.grid();
                let mut m = MatrixField::zeros(grid);
                for k in 0..grid.len() {
                    let v = g.get(k);
                    m.set(k, [[v[0], 0.0], [v[1], 0.0]]);
                }
                Field::Matrix(m)
            }
            BlockOp::Scaled { inner, factor } => {
                let mut y = inner.forward(x);
                y.scale(*factor);
                y
            }
        }
    }

    /// Adjoint with respect to the grid-weighted inner products of the
    /// primal and block spaces; `template` fixes the primal shape,
    /// untouched components come back zero.
    ///
    /// For blocks whose output lives on the reconstruction grid this is the
    /// plain matrix transpose (the weights cancel); measurement-space
    /// blocks pick up the weight ratio of the two spaces.
    pub fn adjoint(&self, y: &Field, template: &StackedVariable) -> StackedVariable {
        let mut out = self.adjoint_plain(y, template);
        let w = y.cell_weight() / template.parts()[0].cell_weight();
        if w != 1.0 {
            out.scale(w);
        }
        out
    }

    /// Plain matrix transpose of [`Self::forward`].
    fn adjoint_plain(&self, y: &Field, template: &StackedVariable) -> StackedVariable {
        let mut out = template.zeros_like();
        match self {
            BlockOp::Identity => {
                out.parts_mut()[0] = y.clone();
            }
            BlockOp::Radon(rt) => {
                let img = rt.adjoint(y.as_sino().expect("radon dual is a sinogram"));
                out.parts_mut()[0] = Field::Scalar(img.expect("radon geometry mismatch"));
            }
            BlockOp::Downsample(ds) => {
                let img = ds.adjoint(y.as_scalar().expect("downsample dual is an image"));
                out.parts_mut()[0] = Field::Scalar(img.expect("downsample grid mismatch"));
            }
            BlockOp::Gradient(scaling) => {
                let mut p = y.as_vector().expect("gradient dual is a vector field").clone();
                scaling.apply(&mut p);
                let mut d = divergence(&p);
                for v in d.data_mut() {
                    *v = -*v;
                }
                out.parts_mut()[0] = Field::Scalar(d);
            }
            BlockOp::TgvGradient(scaling) => {
                let p = y.as_vector().expect("gradient dual is a vector field");
                let mut sp = p.clone();
                scaling.apply(&mut sp);
                let mut d = divergence(&sp);
                for v in d.data_mut() {
                    *v = -*v;
                }
                out.parts_mut()[0] = Field::Scalar(d);
                let mut neg = p.clone();
                for v in neg.data_mut() {
                    *v = -*v;
                }
                out.parts_mut()[1] = Field::Vector(neg);
            }
            BlockOp::SymGradient => {
                let q = y.as_matrix().expect("sym-gradient dual is a matrix field");
                let mut d = sym_divergence(q);
                for v in d.data_mut() {
                    *v = -*v;
                }
                out.parts_mut()[1] = Field::Vector(d);
            }
            BlockOp::JacobianPad => {
                let m = y.as_matrix().expect("jacobian dual is a matrix field");
                let grid = *m.grid();
                let mut p = VectorField::zeros(grid);
                for k in 0..grid.len() {
                    p.set(k, m.column(k, 0));
                }
                let mut d = divergence(&p);
                for v in d.data_mut() {
                    *v = -*v;
                }
                out.parts_mut()[0] = Field::Scalar(d);
            }
            BlockOp::Scaled { inner, factor } => {
                out = inner.adjoint_plain(y, template);
                out.scale(*factor);
            }
        }
        out
    }
}

/// A block operator together with its cached norm estimate (raw power
/// estimate times a safety factor, so the cache bounds the true norm).
#[derive(Debug, Clone)]
pub struct LinearBlock {
    pub op: BlockOp,
    pub norm: Option<f64>,
}

impl LinearBlock {
    pub fn new(op: BlockOp) -> Self {
        LinearBlock { op, norm: None }
    }
}

/// `min_x sum_i F_i(A_i x) + G(x)` with `G` acting componentwise on `x`.
#[derive(Debug, Clone)]
pub struct CompositeProblem {
    blocks: Vec<LinearBlock>,
    functionals: Vec<ProxFunctional>,
    simple_term: Vec<ProxFunctional>,
    template: StackedVariable,
}

impl CompositeProblem {
    pub fn new(
        blocks: Vec<LinearBlock>,
        functionals: Vec<ProxFunctional>,
        simple_term: Vec<ProxFunctional>,
        template: StackedVariable,
    ) -> Result<Self> {
        if blocks.len() != functionals.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} blocks but {} functionals",
                blocks.len(),
                functionals.len()
            )));
        }
        if simple_term.len() != template.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} simple-term entries but {} variable components",
                simple_term.len(),
                template.len()
            )));
        }
        Ok(CompositeProblem { blocks, functionals, simple_term, template })
    }

    pub fn blocks(&self) -> &[LinearBlock] {
        &self.blocks
    }

    pub fn functionals(&self) -> &[ProxFunctional] {
        &self.functionals
    }

    pub fn simple_term(&self) -> &[ProxFunctional] {
        &self.simple_term
    }

    /// Zero variable of the problem's primal shape.
    pub fn template(&self) -> &StackedVariable {
        &self.template
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Evaluate every block.
    pub fn apply_forward(&self, x: &StackedVariable) -> Vec<Field> {
        self.blocks.iter().map(|b| b.op.forward(x)).collect()
    }

    /// Sum of block adjoints: `A^T y`.
    pub fn apply_adjoint(&self, ys: &[Field]) -> StackedVariable {
        let mut acc = self.template.zeros_like();
        for (b, y) in self.blocks.iter().zip(ys) {
            let part = b.op.adjoint(y, &self.template);
            acc.axpy(1.0, &part);
        }
        acc
    }

    /// `sum_i F_i(A_i x) + G(x)`; `+inf` when an indicator is violated.
    pub fn objective(&self, x: &StackedVariable) -> Result<f64> {
        if !x.same_shape(&self.template) {
            return Err(Error::ShapeMismatch("variable does not match problem shape".into()));
        }
        let mut acc = 0.0;
        for (b, f) in self.blocks.iter().zip(&self.functionals) {
            acc += f.value(&b.op.forward(x))?;
        }
        for (g, part) in self.simple_term.iter().zip(x.parts()) {
            acc += g.value(part)?;
        }
        Ok(acc)
    }

    /// Componentwise prox of the simple term, `prox_{tau G}`, in the
    /// grid-weighted primal space.
    pub fn prox_simple(&self, z: &StackedVariable, tau: f64) -> Result<StackedVariable> {
        let mut parts = Vec::with_capacity(z.len());
        for (g, part) in self.simple_term.iter().zip(z.parts()) {
            parts.push(g.prox_in_space(part, tau, part.cell_weight())?);
        }
        Ok(StackedVariable::new(parts))
    }

    /// Power-method estimate of each block norm, times `safety`, cached on
    /// the block.
    pub fn compute_norms(
        &mut self,
        max_iters: usize,
        tol: f64,
        seed: u64,
        safety: f64,
    ) -> Result<()> {
        let template = self.template.clone();
        for b in &mut self.blocks {
            let est = power_method(
                &template,
                |x| b.op.forward(x),
                |y| b.op.adjoint(y, &template),
                StackedVariable::norm_weighted,
                Field::norm_weighted,
                max_iters,
                tol,
                seed,
            );
            if est == 0.0 {
                return Err(Error::DegenerateInput("block with zero operator norm".into()));
            }
            b.norm = Some(est * safety);
        }
        Ok(())
    }

    /// Power-method estimate of the stacked operator norm (raw estimate,
    /// no safety factor).
    pub fn estimate_stacked_norm(&self, max_iters: usize, tol: f64, seed: u64) -> f64 {
        power_method(
            &self.template,
            |x| self.apply_forward(x),
            |ys: &Vec<Field>| self.apply_adjoint(ys),
            StackedVariable::norm_weighted,
            |ys: &Vec<Field>| ys.iter().map(|y| y.dot_weighted(y)).sum::<f64>().sqrt(),
            max_iters,
            tol,
            seed,
        )
    }

    /// Rescale every block to unit norm, `A_i -> A_i / |A_i|`, compensating
    /// each functional by `F_i -> F_i(|A_i| .)` so the objective value is
    /// unchanged for every `x`. Norms must have been computed first.
    pub fn prewhiten(self) -> Result<CompositeProblem> {
        let mut blocks = Vec::with_capacity(self.blocks.len());
        let mut functionals = Vec::with_capacity(self.functionals.len());
        for (b, f) in self.blocks.into_iter().zip(self.functionals) {
            let lambda = b.norm.ok_or_else(|| {
                Error::InvalidParameter("prewhitening requires computed block norms".into())
            })?;
            if !(lambda > 0.0) {
                return Err(Error::DegenerateInput("block with zero operator norm".into()));
            }
            if lambda == 1.0 {
                blocks.push(LinearBlock { op: b.op, norm: Some(1.0) });
                functionals.push(f);
            } else {
                blocks.push(LinearBlock {
                    op: BlockOp::Scaled { inner: Box::new(b.op), factor: 1.0 / lambda },
                    norm: Some(1.0),
                });
                functionals.push(f.scaled_by(lambda)?);
            }
        }
        Ok(CompositeProblem {
            blocks,
            functionals,
            simple_term: self.simple_term,
            template: self.template,
        })
    }
}

/// Build the composite problem for `reg` on `grid`: forward block `k_op`
/// paired with `fidelity`, the regulariser blocks from the catalogue, and
/// nonnegativity on `u`.
///
/// `side_info` is required for every structure-promoting kind and must have
/// been constructed with the same `eta` / `gamma` the regulariser uses.
pub fn assemble(
    grid: Grid,
    reg: &RegularizerSpec,
    fidelity: ProxFunctional,
    k_op: BlockOp,
    side_info: Option<&SideInformation>,
) -> Result<CompositeProblem> {
    reg.validate()?;
    let si = match (reg.kind.needs_side_info(), side_info) {
        (true, None) => {
            return Err(Error::InvalidParameter(format!(
                "regulariser {} needs side information",
                reg.kind
            )))
        }
        (_, si) => si,
    };
    if let Some(si) = si {
        if si.v().grid() != &grid {
            return Err(Error::GridMismatch);
        }
    }
    let h2 = grid.cell_area();
    let w_reg = reg.alpha * h2;

    let scaling = |kind: RegKind| -> GradScaling {
        match kind {
            RegKind::Wh1 | RegKind::Wtv | RegKind::Wtgv => {
                GradScaling::Weighted(si.unwrap().w().clone())
            }
            RegKind::Dh1 | RegKind::Dtv | RegKind::Dtgv => GradScaling::Directional {
                xi: si.unwrap().xi().clone(),
                gamma: si.unwrap().gamma(),
            },
            _ => GradScaling::Plain,
        }
    };

    let template_u = StackedVariable::scalar(Image::zeros(grid));
    let k_block = LinearBlock::new(k_op);

    let problem = match reg.kind {
        RegKind::H1 | RegKind::Wh1 | RegKind::Dh1 => CompositeProblem::new(
            vec![k_block, LinearBlock::new(BlockOp::Gradient(scaling(reg.kind)))],
            vec![fidelity, ProxFunctional::SquaredNorm { weight: w_reg }],
            vec![ProxFunctional::NonnegIndicator],
            template_u,
        )?,
        RegKind::Tv | RegKind::Wtv | RegKind::Dtv => CompositeProblem::new(
            vec![k_block, LinearBlock::new(BlockOp::Gradient(scaling(reg.kind)))],
            vec![fidelity, ProxFunctional::group_l1(w_reg)],
            vec![ProxFunctional::NonnegIndicator],
            template_u,
        )?,
        RegKind::Jtv | RegKind::Tnv => {
            let si = si.unwrap();
            let shift_vec = si.jacobian_shift();
            let mut shift = MatrixField::zeros(grid);
            for k in 0..grid.len() {
                let s = shift_vec.get(k);
                shift.set(k, [[0.0, s[0]], [0.0, s[1]]]);
            }
            let shift = Field::Matrix(shift);
            let f2 = if reg.kind == RegKind::Jtv {
                ProxFunctional::GroupL1 { weight: w_reg, shift: Some(shift) }
            } else {
                ProxFunctional::NuclearL1 { weight: w_reg, shift: Some(shift) }
            };
            CompositeProblem::new(
                vec![k_block, LinearBlock::new(BlockOp::JacobianPad)],
                vec![fidelity, f2],
                vec![ProxFunctional::NonnegIndicator],
                template_u,
            )?
        }
        RegKind::Tgv | RegKind::Wtgv | RegKind::Dtgv => {
            let template = StackedVariable::new(vec![
                Field::Scalar(Image::zeros(grid)),
                Field::Vector(VectorField::zeros(grid)),
            ]);
            CompositeProblem::new(
                vec![
                    k_block,
                    LinearBlock::new(BlockOp::TgvGradient(scaling(reg.kind))),
                    LinearBlock::new(BlockOp::SymGradient),
                ],
                vec![
                    fidelity,
                    ProxFunctional::group_l1(w_reg),
                    ProxFunctional::group_l1(reg.alpha * reg.beta * h2),
                ],
                vec![ProxFunctional::NonnegIndicator, ProxFunctional::Zero],
                template,
            )?
        }
    };
    Ok(problem)
}

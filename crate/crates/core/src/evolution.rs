//! Time marching of `(∂₀M₀ + M₁(∂₀⁻¹) + A_h)U = F` on the staggered grid.
//!
//! Rational parts of `M₁` run as auxiliary states through their state-space
//! realizations. Both schemes are θ-methods (`θ = 1` backward Euler,
//! `θ = ½` trapezoidal) applied jointly to the field and auxiliary states;
//! the auxiliary states are eliminated from the linear solve, so the step
//! matrix has the size of the field block and is factored once.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use serde::{Deserialize, Serialize};

use crate::banded::BandedLu;
use crate::error::{Error, Result};
use crate::material::{compute_entropy, recover_theta, BlockSizes, CellLaw, MaterialLaw};
use crate::rational::{realize_state_space, RationalMatrixFunction, RealRealization};
use crate::signal::{apply_symbol_fl, pre_support_leakage, WeightedSignal};
use crate::spatial::{spmv, DiscreteSpatialOperator, Grid1D};
use crate::wellposedness::{Verdict, WellPosednessReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    BackwardEuler,
    Trapezoidal,
}

impl Scheme {
    /// Implicitness weight of the θ-method.
    pub fn theta(self) -> f64 {
        match self {
            Scheme::BackwardEuler => 1.0,
            Scheme::Trapezoidal => 0.5,
        }
    }
}

// ---------------------------------------------------------------------------
// forcing

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForcingBlock {
    /// Body force in the `v` row.
    F,
    /// Heat source in the `Θ` row.
    H,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpatialProfile {
    /// `sin(kπx/L)`.
    Mode(usize),
    /// `cos²` bump of half-width `L/4` centered at `L/2`.
    Bump,
}

impl SpatialProfile {
    pub fn parse(s: &str) -> Result<Self> {
        if s == "bump" {
            return Ok(Self::Bump);
        }
        if let Some(k) = s.strip_prefix("mode_") {
            let k: usize = k.parse().map_err(|_| Error::Config(format!("bad mode index in '{s}'")))?;
            if k == 0 {
                return Err(Error::Config("mode index must be at least 1".into()));
            }
            return Ok(Self::Mode(k));
        }
        Err(Error::Config(format!("unknown spatial profile '{s}' (expected mode_<k> or bump)")))
    }

    pub fn name(&self) -> String {
        match self {
            Self::Mode(k) => format!("mode_{k}"),
            Self::Bump => "bump".into(),
        }
    }

    pub fn value(&self, x: f64, length: f64) -> f64 {
        match self {
            Self::Mode(k) => (*k as f64 * std::f64::consts::PI * x / length).sin(),
            Self::Bump => {
                let r = (x - 0.5 * length) / (0.25 * length);
                if r.abs() < 1.0 {
                    (0.5 * std::f64::consts::PI * r).cos().powi(2)
                } else {
                    0.0
                }
            }
        }
    }
}

/// Gaussian pulses are cut off at eight widths from the center.
pub const PULSE_TRUNCATION: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TemporalShape {
    GaussianPulse { center: f64, width: f64 },
    /// Switches on at `delay`; a quintic ramp of duration `width`, or a jump
    /// when `width = 0`.
    DelayedStep { delay: f64, width: f64 },
}

impl TemporalShape {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::GaussianPulse { center, width } => {
                if !(width > 0.0) || !center.is_finite() || !width.is_finite() {
                    return Err(Error::Config("gaussian_pulse needs finite center and positive width".into()));
                }
            }
            Self::DelayedStep { delay, width } => {
                if !(width >= 0.0) || !delay.is_finite() || !width.is_finite() {
                    return Err(Error::Config("delayed_step needs finite delay and nonnegative width".into()));
                }
            }
        }
        Ok(())
    }

    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Self::GaussianPulse { center, width } => {
                let r = (t - center) / width;
                if r.abs() > PULSE_TRUNCATION {
                    0.0
                } else {
                    (-0.5 * r * r).exp()
                }
            }
            Self::DelayedStep { delay, width } => {
                if t < delay {
                    0.0
                } else if width == 0.0 || t >= delay + width {
                    1.0
                } else {
                    let s = (t - delay) / width;
                    s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
                }
            }
        }
    }

    /// `(first, last)` time of nonzero values; `last` may be infinite.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Self::GaussianPulse { center, width } => {
                (center - PULSE_TRUNCATION * width, center + PULSE_TRUNCATION * width)
            }
            Self::DelayedStep { delay, .. } => (delay, f64::INFINITY),
        }
    }
}

/// `amplitude · profile(x) · shape(t)` in one block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForcingTerm {
    pub block: ForcingBlock,
    pub profile: SpatialProfile,
    pub shape: TemporalShape,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Forcing {
    pub terms: Vec<ForcingTerm>,
}

impl Forcing {
    pub fn new(terms: Vec<ForcingTerm>) -> Result<Self> {
        for t in &terms {
            t.shape.validate()?;
            if !t.amplitude.is_finite() {
                return Err(Error::Config("forcing amplitude must be finite".into()));
            }
        }
        Ok(Self { terms })
    }

    pub fn single(term: ForcingTerm) -> Result<Self> {
        Self::new(vec![term])
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let terms = self.terms.iter().map(|t| ForcingTerm { amplitude: alpha * t.amplitude, ..*t }).collect();
        Self { terms }
    }

    pub fn plus(&self, other: &Forcing) -> Self {
        Self { terms: self.terms.iter().chain(&other.terms).copied().collect() }
    }

    /// Spatial profile sampled at the interior nodes.
    pub fn profile_vector(term: &ForcingTerm, grid: &Grid1D) -> DVector<f64> {
        DVector::from_iterator(
            grid.n_nodes(),
            grid.nodes().into_iter().map(|x| term.amplitude * term.profile.value(x, grid.length())),
        )
    }

    pub fn block_offset(block: ForcingBlock, grid: &Grid1D) -> usize {
        let [ov, _, ot, _] = grid.block_offsets();
        match block {
            ForcingBlock::F => ov,
            ForcingBlock::H => ot,
        }
    }

    pub fn support(&self) -> (f64, f64) {
        self.terms.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), t| {
            let (s, e) = t.shape.support();
            (a.min(s), b.max(e))
        })
    }
}

/// Right-hand side of the evolution: analytic terms or samples on the time grid
/// (linearly interpolated in between).
#[derive(Debug, Clone, PartialEq)]
pub enum ForcingSource {
    Analytic(Forcing),
    Sampled(WeightedSignal),
}

impl ForcingSource {
    pub fn zero() -> Self {
        Self::Analytic(Forcing::default())
    }
}

/// Precomputed spatial vectors for fast evaluation.
pub(crate) struct ForcingEvaluator<'a> {
    source: &'a ForcingSource,
    vectors: Vec<(usize, DVector<f64>, TemporalShape)>,
    n: usize,
}

impl<'a> ForcingEvaluator<'a> {
    pub(crate) fn new(source: &'a ForcingSource, grid: &Grid1D) -> Self {
        let vectors = match source {
            ForcingSource::Analytic(f) => f
                .terms
                .iter()
                .map(|t| (Forcing::block_offset(t.block, grid), Forcing::profile_vector(t, grid), t.shape))
                .collect(),
            ForcingSource::Sampled(_) => Vec::new(),
        };
        Self { source, vectors, n: grid.n_dofs() }
    }

    pub(crate) fn eval(&self, t: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        match self.source {
            ForcingSource::Analytic(_) => {
                for (off, vec, shape) in &self.vectors {
                    let s = shape.value(t);
                    if s != 0.0 {
                        out.rows_mut(*off, vec.len()).axpy(s, vec, 1.0);
                    }
                }
            }
            ForcingSource::Sampled(sig) => {
                let x = (t - sig.t_min()) / sig.dt();
                if x < 0.0 || x > (sig.len() - 1) as f64 {
                    return out;
                }
                let k = (x.floor() as usize).min(sig.len() - 2);
                let a = x - k as f64;
                let s = sig.samples();
                for j in 0..self.n {
                    out[j] = (1.0 - a) * s[(k, j)] + a * s[(k + 1, j)];
                }
            }
        }
        out
    }

    /// Evaluation at the `k`-th grid time; exact for sampled sources.
    pub(crate) fn at_step(&self, k: usize, dt: f64) -> DVector<f64> {
        match self.source {
            ForcingSource::Sampled(sig) => sig.samples().row(k).transpose(),
            ForcingSource::Analytic(_) => self.eval(k as f64 * dt),
        }
    }
}

// ---------------------------------------------------------------------------
// problem

#[derive(Debug, Clone)]
pub struct EvolutionProblem {
    pub law: MaterialLaw,
    pub op: DiscreteSpatialOperator,
    pub forcing: ForcingSource,
    pub t_max: f64,
    pub dt: f64,
    pub scheme: Scheme,
    pub rho: f64,
}

impl EvolutionProblem {
    pub fn new(
        law: MaterialLaw,
        op: DiscreteSpatialOperator,
        forcing: ForcingSource,
        t_max: f64,
        dt: f64,
        scheme: Scheme,
        rho: f64,
    ) -> Result<Self> {
        let p = Self { law, op, forcing, t_max, dt, scheme, rho };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if self.law.blocks() != BlockSizes::ONE_D {
            return Err(Error::DimensionMismatch("the 1-D solver needs scalar blocks".into()));
        }
        if self.law.n_cells() != self.op.grid.n_cells() {
            return Err(Error::DimensionMismatch(format!(
                "law has {} cells, grid has {}",
                self.law.n_cells(),
                self.op.grid.n_cells()
            )));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidInput(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_max > 0.0) || !self.t_max.is_finite() {
            return Err(Error::InvalidInput(format!("t_max must be positive, got {}", self.t_max)));
        }
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(Error::InvalidInput(format!("rho must be positive, got {}", self.rho)));
        }
        let steps = self.t_max / self.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) || steps.round() < 1.0 {
            return Err(Error::InvalidInput(format!(
                "t_max = {} is not a whole number of steps dt = {}",
                self.t_max, self.dt
            )));
        }
        if let ForcingSource::Sampled(sig) = &self.forcing {
            if sig.components() != self.op.grid.n_dofs() {
                return Err(Error::DimensionMismatch(format!(
                    "forcing has {} components, system has {}",
                    sig.components(),
                    self.op.grid.n_dofs()
                )));
            }
            if sig.t_min() != 0.0 || (sig.dt() - self.dt).abs() > 1e-15 * self.dt || sig.len() != self.steps() + 1 {
                return Err(Error::GridMismatch("sampled forcing must live on the problem's time grid".into()));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> &Grid1D {
        &self.op.grid
    }

    pub fn steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }

    pub fn with_forcing(&self, forcing: ForcingSource) -> Result<Self> {
        let mut p = self.clone();
        p.forcing = forcing;
        p.validate()?;
        Ok(p)
    }

    pub fn with_dt(&self, dt: f64) -> Result<Self> {
        let mut p = self.clone();
        p.dt = dt;
        if let ForcingSource::Sampled(_) = p.forcing {
            return Err(Error::InvalidInput("cannot resample a sampled forcing".into()));
        }
        p.validate()?;
        Ok(p)
    }

    pub fn with_scheme(&self, scheme: Scheme) -> Self {
        Self { scheme, ..self.clone() }
    }

    /// The forcing on the time grid, one row per step.
    pub fn forcing_samples(&self) -> Result<WeightedSignal> {
        if let ForcingSource::Sampled(sig) = &self.forcing {
            return sig.clone().with_rho(self.rho);
        }
        let ev = ForcingEvaluator::new(&self.forcing, self.grid());
        let n = self.steps() + 1;
        let mut m = DMatrix::zeros(n, self.grid().n_dofs());
        for k in 0..n {
            m.row_mut(k).copy_from(&ev.at_step(k, self.dt).transpose());
        }
        WeightedSignal::new(0.0, self.dt, self.rho, m)
    }
}

// ---------------------------------------------------------------------------
// discrete law

/// A scalar realization feeding its output back into one row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Attachment {
    pub row: usize,
    pub weight: f64,
    pub realization: usize,
    /// First auxiliary state index.
    pub offset: usize,
}

/// The material law on the staggered grid. Coefficients of `σ` and `q` are
/// taken from their cell; `ρ₀`, `ν` and `a₁` at a node are the average of the
/// two adjacent cells, and the couplings through `Γ` and `ζ₀` use the
/// node-to-face average `P`, so that `M₀,h = L_hᵀ·D_h·L_h`.
#[derive(Debug, Clone)]
pub struct DiscreteLaw {
    pub m0: CsrMatrix<f64>,
    /// Node-to-face average, `n × (n − 1)`.
    pub averaging: CsrMatrix<f64>,
    pub realizations: Vec<RealRealization>,
    pub attachments: Vec<Attachment>,
    pub n_aux: usize,
    /// Averaged cell laws at the nodes, for derived quantities.
    pub node_law: MaterialLaw,
}

fn averaging_matrix(grid: &Grid1D) -> CsrMatrix<f64> {
    let (nn, nf) = (grid.n_nodes(), grid.n_faces());
    let mut coo = CooMatrix::new(nf, nn);
    for j in 0..nf {
        if j >= 1 {
            coo.push(j, j - 1, 0.5);
        }
        if j < nn {
            coo.push(j, j, 0.5);
        }
    }
    CsrMatrix::from(&coo)
}

fn average_cells(a: &CellLaw, b: &CellLaw) -> Result<CellLaw> {
    if a == b {
        return Ok(a.clone());
    }
    let half = num_complex::Complex64::new(0.5, 0.0);
    Ok(CellLaw {
        rho0: 0.5 * (a.rho0 + b.rho0),
        c: (&a.c + &b.c) * 0.5,
        gamma: (&a.gamma + &b.gamma) * 0.5,
        nu: 0.5 * (a.nu + b.nu),
        a0: (&a.a0 + &b.a0) * 0.5,
        zeta0: (&a.zeta0 + &b.zeta0) * 0.5,
        a1: a.a1.scale(half).add(&b.a1.scale(half))?,
        a2: a.a2.scale(half).add(&b.a2.scale(half))?,
        n0: 0.5 * (a.n0 + b.n0),
    })
}

pub fn discretize_law(law: &MaterialLaw, grid: &Grid1D) -> Result<DiscreteLaw> {
    if law.blocks() != BlockSizes::ONE_D || law.n_cells() != grid.n_cells() {
        return Err(Error::DimensionMismatch("law does not match the grid".into()));
    }
    let (nn, nf) = (grid.n_nodes(), grid.n_faces());
    let [ov, os, ot, oq] = grid.block_offsets();
    let cells = law.cells();
    let p = averaging_matrix(grid);

    let n = grid.n_dofs();
    let mut coo = CooMatrix::new(n, n);
    for k in 0..nn {
        let (l, r) = (&cells[k], &cells[k + 1]);
        coo.push(ov + k, ov + k, 0.5 * (l.rho0 + r.rho0));
        coo.push(ot + k, ot + k, 0.5 * (l.nu + r.nu));
    }
    for j in 0..nf {
        let m = law.m0(j);
        let nu = cells[j].nu;
        coo.push(os + j, os + j, m[(1, 1)]);
        coo.push(oq + j, oq + j, m[(3, 3)]);
        let adj: Vec<(usize, f64)> = p.row(j).col_indices().iter().copied().zip(p.row(j).values().iter().copied()).collect();
        for &(k, w) in &adj {
            if m[(1, 2)] != 0.0 {
                coo.push(os + j, ot + k, w * m[(1, 2)]);
                coo.push(ot + k, os + j, w * m[(1, 2)]);
            }
            if m[(2, 3)] != 0.0 {
                coo.push(oq + j, ot + k, w * m[(2, 3)]);
                coo.push(ot + k, oq + j, w * m[(2, 3)]);
            }
            let tt = m[(2, 2)] - nu;
            if tt != 0.0 {
                for &(k2, w2) in &adj {
                    coo.push(ot + k, ot + k2, w * tt * w2);
                }
            }
        }
    }
    let m0 = CsrMatrix::from(&coo);

    let mut distinct: Vec<RationalMatrixFunction> = Vec::new();
    let mut realizations = Vec::new();
    let mut attachments = Vec::new();
    let mut n_aux = 0;
    let mut attach = |row: usize, weight: f64, r: &RationalMatrixFunction| -> Result<()> {
        if r.is_zero() {
            return Ok(());
        }
        let idx = match distinct.iter().position(|d| d == r) {
            Some(i) => i,
            None => {
                realizations.push(realize_state_space(r)?.to_real()?);
                distinct.push(r.clone());
                distinct.len() - 1
            }
        };
        attachments.push(Attachment { row, weight, realization: idx, offset: n_aux });
        n_aux += realizations[idx].n_states();
        Ok(())
    };
    for k in 0..nn {
        let (l, r) = (&cells[k].a1, &cells[k + 1].a1);
        if l == r {
            attach(ot + k, 1.0, l)?;
        } else {
            attach(ot + k, 0.5, l)?;
            attach(ot + k, 0.5, r)?;
        }
    }
    for (j, cell) in cells.iter().enumerate() {
        attach(oq + j, 1.0, &cell.a2)?;
    }

    let node_cells = (0..nn).map(|k| average_cells(&cells[k], &cells[k + 1])).collect::<Result<Vec<_>>>()?;
    let node_law = MaterialLaw::from_cells(law.family, node_cells)?;
    Ok(DiscreteLaw { m0, averaging: p, realizations, attachments, n_aux, node_law })
}

impl DiscreteLaw {
    /// `h·⟨M₀,h U, U⟩`.
    pub fn energy(&self, grid: &Grid1D, u: &DVector<f64>) -> f64 {
        grid.h() * spmv(&self.m0, u).dot(u)
    }
}

// ---------------------------------------------------------------------------
// stepping

#[derive(Debug, Clone)]
struct RealizationStep {
    d_new: f64,
    d_old: f64,
    cx: DVector<f64>,
    s: DMatrix<f64>,
    p_old: DVector<f64>,
    p_new: DVector<f64>,
}

fn realization_step(r: &RealRealization, theta: f64, dt: f64) -> Result<RealizationStep> {
    let m = r.n_states();
    let d = r.d[(0, 0)];
    if m == 0 {
        return Ok(RealizationStep {
            d_new: theta * d,
            d_old: (1.0 - theta) * d,
            cx: DVector::zeros(0),
            s: DMatrix::zeros(0, 0),
            p_old: DVector::zeros(0),
            p_new: DVector::zeros(0),
        });
    }
    let eye = DMatrix::<f64>::identity(m, m);
    let rinv = (&eye - &r.a * (theta * dt))
        .try_inverse()
        .ok_or_else(|| Error::SingularSystem { dt, detail: "auxiliary state update is singular".into() })?;
    let s = &rinv * (&eye + &r.a * ((1.0 - theta) * dt));
    let rb = (&rinv * &r.b).column(0).into_owned();
    let c = r.c.row(0).transpose();
    let p_old = &rb * (dt * (1.0 - theta));
    let p_new = &rb * (dt * theta);
    Ok(RealizationStep {
        d_new: theta * (d + c.dot(&p_new)),
        d_old: (1.0 - theta) * d + theta * c.dot(&p_old),
        cx: &c * (1.0 - theta) + (s.transpose() * &c) * theta,
        s,
        p_old,
        p_new,
    })
}

/// Interleaves the unknowns by position (face 0, node 1, face 1, …) so the
/// step matrix is banded.
fn interleaved_order(grid: &Grid1D) -> Vec<usize> {
    let [ov, os, ot, oq] = grid.block_offsets();
    let mut perm = Vec::with_capacity(grid.n_dofs());
    for j in 0..grid.n_faces() {
        perm.push(os + j);
        perm.push(oq + j);
        if j < grid.n_nodes() {
            perm.push(ov + j);
            perm.push(ot + j);
        }
    }
    perm
}

/// A factored θ-scheme step for fixed `dt`.
pub struct Stepper {
    pub dlaw: DiscreteLaw,
    theta: f64,
    dt: f64,
    m0: CsrMatrix<f64>,
    explicit: CsrMatrix<f64>,
    steps: Vec<RealizationStep>,
    lu: BandedLu,
    perm: Vec<usize>,
}

impl Stepper {
    pub fn new(problem: &EvolutionProblem) -> Result<Self> {
        let grid = problem.grid();
        let dlaw = discretize_law(&problem.law, grid)?;
        let theta = problem.scheme.theta();
        let dt = problem.dt;
        let steps = dlaw
            .realizations
            .iter()
            .map(|r| realization_step(r, theta, dt))
            .collect::<Result<Vec<_>>>()?;

        let n = grid.n_dofs();
        let mut diag_new = CooMatrix::new(n, n);
        let mut diag_old = CooMatrix::new(n, n);
        for att in &dlaw.attachments {
            let st = &steps[att.realization];
            diag_new.push(att.row, att.row, att.weight * st.d_new);
            diag_old.push(att.row, att.row, att.weight * st.d_old);
        }
        let m0_dt = &dlaw.m0 * (1.0 / dt);
        let lhs = &(&m0_dt + &(&problem.op.a_h * theta)) + &CsrMatrix::from(&diag_new);
        let explicit = &(&problem.op.a_h * (1.0 - theta)) + &CsrMatrix::from(&diag_old);
        let perm = interleaved_order(grid);
        let lu = BandedLu::factor(&lhs, &perm).map_err(|e| match e {
            Error::SingularSystem { detail, .. } => Error::SingularSystem { dt, detail },
            other => other,
        })?;
        Ok(Self { theta, dt, m0: m0_dt, explicit, steps, lu, perm, dlaw })
    }

    pub fn n_aux(&self) -> usize {
        self.dlaw.n_aux
    }

    /// Ratio of smallest to largest pivot of the factored step matrix.
    pub fn pivot_ratio(&self) -> f64 {
        self.lu.pivot_ratio()
    }

    /// One step from `(Uⁿ, xⁿ)` with forcing `Fⁿ`, `Fⁿ⁺¹`.
    pub fn step_implicit(
        &self,
        u: &DVector<f64>,
        x: &DVector<f64>,
        f_old: &DVector<f64>,
        f_new: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>) {
        let mut rhs = spmv(&self.m0, u) - spmv(&self.explicit, u) + f_new * self.theta;
        if self.theta < 1.0 {
            rhs.axpy(1.0 - self.theta, f_old, 1.0);
        }
        for att in &self.dlaw.attachments {
            let st = &self.steps[att.realization];
            let m = st.cx.len();
            if m > 0 {
                rhs[att.row] -= att.weight * st.cx.dot(&x.rows(att.offset, m));
            }
        }
        let u_new = self.lu.solve(&self.perm, &rhs);
        let mut x_new = DVector::zeros(x.len());
        for att in &self.dlaw.attachments {
            let st = &self.steps[att.realization];
            let m = st.cx.len();
            if m == 0 {
                continue;
            }
            let xs = &st.s * x.rows(att.offset, m) + &st.p_old * u[att.row] + &st.p_new * u_new[att.row];
            x_new.rows_mut(att.offset, m).copy_from(&xs);
        }
        (u_new, x_new)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }
}

/// Free-function form of [`Stepper::step_implicit`].
pub fn step_implicit(
    stepper: &Stepper,
    u: &DVector<f64>,
    x: &DVector<f64>,
    f_old: &DVector<f64>,
    f_new: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    stepper.step_implicit(u, x, f_old, f_new)
}

// ---------------------------------------------------------------------------
// trajectory

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    V,
    Sigma,
    ThetaBig,
    Q,
}

impl Field {
    pub const ALL: [Field; 4] = [Field::V, Field::Sigma, Field::ThetaBig, Field::Q];

    pub fn name(self) -> &'static str {
        match self {
            Field::V => "v",
            Field::Sigma => "sigma",
            Field::ThetaBig => "theta_big",
            Field::Q => "q",
        }
    }

    fn index(self) -> usize {
        match self {
            Field::V => 0,
            Field::Sigma => 1,
            Field::ThetaBig => 2,
            Field::Q => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: Grid1D,
    pub dt: f64,
    pub rho: f64,
    /// Weight of the new value in the θ-rule used to integrate `v` to `u`.
    pub time_weight: f64,
    /// One row per time step, unknowns in block order `[v, σ, Θ, q]`.
    pub states: DMatrix<f64>,
    /// Auxiliary realization states per step, when the producer has them.
    pub aux: Option<DMatrix<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.nrows()
    }
    pub fn is_empty(&self) -> bool {
        self.states.nrows() == 0
    }
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }
    pub fn state(&self, k: usize) -> DVector<f64> {
        self.states.row(k).transpose()
    }

    pub fn as_signal(&self) -> Result<WeightedSignal> {
        WeightedSignal::new(0.0, self.dt, self.rho, self.states.clone())
    }

    pub fn field(&self, f: Field) -> WeightedSignal {
        let off = self.grid.block_offsets()[f.index()];
        let size = self.grid.block_sizes()[f.index()];
        let m = self.states.columns(off, size).into_owned();
        WeightedSignal::new(0.0, self.dt, self.rho, m).expect("trajectory fields are valid signals")
    }

    /// `‖U‖_ρ` with the grid-weighted spatial norm.
    pub fn weighted_norm(&self) -> f64 {
        self.grid.h().sqrt() * self.as_signal().map(|s| s.weighted_norm()).unwrap_or(0.0)
    }

    /// `u = ∂₀⁻¹v`, accumulated with the same θ-rule as the scheme.
    pub fn displacement(&self) -> WeightedSignal {
        let v = self.field(Field::V);
        let (n, m) = v.samples().shape();
        let th = self.time_weight;
        let mut out = DMatrix::zeros(n, m);
        for k in 1..n {
            for j in 0..m {
                out[(k, j)] = out[(k - 1, j)]
                    + self.dt * (th * v.samples()[(k, j)] + (1.0 - th) * v.samples()[(k - 1, j)]);
            }
        }
        WeightedSignal::new(0.0, self.dt, self.rho, out).expect("valid signal")
    }

    /// `ε = D_grad u` on the faces.
    pub fn strain(&self, op: &DiscreteSpatialOperator) -> WeightedSignal {
        let u = self.displacement();
        let n = u.len();
        let mut out = DMatrix::zeros(n, self.grid.n_faces());
        for k in 0..n {
            let e = spmv(&op.d_grad, &u.samples().row(k).transpose());
            out.row_mut(k).copy_from(&e.transpose());
        }
        WeightedSignal::new(0.0, self.dt, self.rho, out).expect("valid signal")
    }

    /// `θ` from `Θ = (1 + n₀∂₀)θ` at the nodes.
    pub fn temperature(&self, dlaw: &DiscreteLaw) -> Result<WeightedSignal> {
        let big = self.field(Field::ThetaBig);
        let mut out = DMatrix::zeros(big.len(), big.components());
        for (k, cell) in dlaw.node_law.cells().iter().enumerate() {
            let col = WeightedSignal::new(0.0, self.dt, self.rho, big.samples().columns(k, 1).into_owned())?;
            let th = recover_theta(&col, cell.n0)?;
            out.column_mut(k).copy_from(&th.samples().column(0));
        }
        WeightedSignal::new(0.0, self.dt, self.rho, out)
    }

    /// Entropy density at the nodes; face quantities are averaged to nodes.
    pub fn entropy(&self, op: &DiscreteSpatialOperator, dlaw: &DiscreteLaw) -> Result<WeightedSignal> {
        let to_nodes = |s: &WeightedSignal| -> Result<WeightedSignal> {
            let pt = dlaw.averaging.transpose();
            let mut out = DMatrix::zeros(s.len(), self.grid.n_nodes());
            for k in 0..s.len() {
                let v = spmv(&pt, &s.samples().row(k).transpose());
                out.row_mut(k).copy_from(&v.transpose());
            }
            WeightedSignal::new(0.0, self.dt, self.rho, out)
        };
        let eps = to_nodes(&self.strain(op))?;
        let q = to_nodes(&self.field(Field::Q))?;
        compute_entropy(&eps, &self.field(Field::ThetaBig), &q, &dlaw.node_law)
    }

    pub fn energy(&self, dlaw: &DiscreteLaw) -> Vec<f64> {
        (0..self.len()).map(|k| dlaw.energy(&self.grid, &self.state(k))).collect()
    }

    /// Writes `v`, `sigma`, `theta_big`, `q`, `u`, `epsilon`, `theta`, `eta`
    /// and `energy` CSV files into `dir`.
    pub fn write_csvs(&self, dir: &Path, op: &DiscreteSpatialOperator, dlaw: &DiscreteLaw) -> Result<Vec<String>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let mut put = |name: &str, s: &WeightedSignal| -> Result<()> {
            let file = format!("{name}.csv");
            let w = BufWriter::new(fs::File::create(dir.join(&file))?);
            s.write_csv_columns(w, "x")?;
            written.push(file);
            Ok(())
        };
        for f in Field::ALL {
            put(f.name(), &self.field(f))?;
        }
        put("u", &self.displacement())?;
        put("epsilon", &self.strain(op))?;
        put("theta", &self.temperature(dlaw)?)?;
        put("eta", &self.entropy(op, dlaw)?)?;
        let mut w = BufWriter::new(fs::File::create(dir.join("energy.csv"))?);
        writeln!(w, "t,energy")?;
        for (k, e) in self.energy(dlaw).iter().enumerate() {
            writeln!(w, "{:.16e},{:.16e}", self.time(k), e)?;
        }
        w.flush()?;
        written.push("energy.csv".into());
        Ok(written)
    }
}

/// Marches from zero state and zero history.
pub fn solve(problem: &EvolutionProblem) -> Result<Trajectory> {
    let stepper = Stepper::new(problem)?;
    solve_with(problem, &stepper)
}

pub fn solve_with(problem: &EvolutionProblem, stepper: &Stepper) -> Result<Trajectory> {
    let grid = *problem.grid();
    let n = grid.n_dofs();
    let steps = problem.steps();
    let ev = ForcingEvaluator::new(&problem.forcing, &grid);
    let mut states = DMatrix::zeros(steps + 1, n);
    let mut aux = DMatrix::zeros(steps + 1, stepper.n_aux());
    let mut u = DVector::zeros(n);
    let mut x = DVector::zeros(stepper.n_aux());
    let mut f_old = ev.at_step(0, problem.dt);
    for k in 1..=steps {
        let f_new = ev.at_step(k, problem.dt);
        let (un, xn) = stepper.step_implicit(&u, &x, &f_old, &f_new);
        if un.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularSystem { dt: problem.dt, detail: format!("non-finite state at step {k}") });
        }
        states.row_mut(k).copy_from(&un.transpose());
        aux.row_mut(k).copy_from(&xn.transpose());
        u = un;
        x = xn;
        f_old = f_new;
    }
    Ok(Trajectory {
        grid,
        dt: problem.dt,
        rho: problem.rho,
        time_weight: problem.scheme.theta(),
        states,
        aux: Some(aux),
    })
}

/// `Eⁿ = h·⟨M₀,h Uⁿ, Uⁿ⟩` for every step.
pub fn energy_functional(trajectory: &Trajectory, law: &MaterialLaw) -> Result<Vec<f64>> {
    let dlaw = discretize_law(law, &trajectory.grid)?;
    Ok(trajectory.energy(&dlaw))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Causality {
    /// `max_{t < t0 − 2dt} |U(t)| / max_t |U(t)|`.
    Leakage(f64),
    Skipped(String),
}

/// Marches the problem and measures the response before the forcing starts.
pub fn causality_test(problem: &EvolutionProblem, t0: f64) -> Result<Causality> {
    if t0 <= 2.0 * problem.dt {
        return Ok(Causality::Skipped(format!("t0 = {t0} leaves no pre-support window")));
    }
    let f = problem.forcing_samples()?;
    let early = (0..f.len()).filter(|&k| f.time(k) < t0).map(|k| f.samples().row(k).amax()).fold(0.0, f64::max);
    if early > 0.0 {
        return Ok(Causality::Skipped(format!("forcing is nonzero before t0 = {t0}")));
    }
    if f.samples().row(0).amax() != 0.0 {
        return Ok(Causality::Skipped("forcing support touches t_min".into()));
    }
    let traj = solve(problem)?;
    Ok(Causality::Leakage(pre_support_leakage(&traj.as_signal()?, t0)))
}

/// Leakage of the Fourier-Laplace path: `M(∂₀⁻¹)` applied to an input that
/// vanishes before `t0`.
pub fn laplace_path_leakage(symbol: &RationalMatrixFunction, input: &WeightedSignal, t0: f64) -> Result<f64> {
    let out = apply_symbol_fl(symbol, input)?;
    Ok(pre_support_leakage(&out, t0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCheck {
    /// `‖U‖_ρ`.
    pub lhs: f64,
    /// `‖F‖_ρ / c`.
    pub rhs: f64,
    pub c: f64,
}

impl BoundCheck {
    pub fn holds(&self, slack: f64) -> bool {
        self.lhs <= self.rhs * (1.0 + slack)
    }
}

/// Default slack of the a-priori bound.
pub const BOUND_SLACK: f64 = 0.05;

pub fn solution_bound_check(problem: &EvolutionProblem, report: &WellPosednessReport) -> Result<BoundCheck> {
    let traj = solve(problem)?;
    bound_check_for(problem, &traj, report)
}

/// Weighted norms of a computed trajectory and its forcing. The report must
/// have been evaluated at the problem's `ρ`.
pub fn bound_check_for(
    problem: &EvolutionProblem,
    traj: &Trajectory,
    report: &WellPosednessReport,
) -> Result<BoundCheck> {
    if report.verdict != Verdict::Satisfied {
        return Err(Error::InvalidInput(format!("bound check needs a satisfied verdict, got {:?}", report.verdict)));
    }
    if problem.rho < report.rho_min {
        return Err(Error::InvalidInput(format!("rho = {} is below rho_min = {}", problem.rho, report.rho_min)));
    }
    if (report.rho_eval - problem.rho).abs() > 1e-12 * problem.rho {
        return Err(Error::InvalidInput(format!(
            "report was evaluated at rho = {}, problem uses {}",
            report.rho_eval, problem.rho
        )));
    }
    let sig = traj.as_signal()?;
    let weighted = |k: usize| (-problem.rho * sig.time(k)).exp() * sig.samples().row(k).norm();
    let peak = (0..sig.len()).map(weighted).fold(0.0, f64::max);
    let tail = weighted(sig.len() - 1);
    if peak > 0.0 && tail > 1e-6 * peak {
        return Err(Error::WindowTooShort { tail, peak });
    }
    let h = problem.grid().h().sqrt();
    let lhs = h * sig.weighted_norm();
    let rhs = h * problem.forcing_samples()?.weighted_norm() / report.c_estimate;
    Ok(BoundCheck { lhs, rhs, c: report.c_estimate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::{assemble_material_law, Family, ModelSpec};
    use crate::spatial::build_operators;

    fn law(family: Family, n: usize, pairs: &[(&str, f64)]) -> MaterialLaw {
        let mut all = vec![("rho0", 1.0), ("C", 1.0), ("Gamma", 0.0), ("nu", 1.0)];
        all.extend_from_slice(pairs);
        let spec = ModelSpec::from_scalars(family, &all).unwrap().with_cells(n).unwrap();
        assemble_material_law(&spec).unwrap()
    }

    fn pulse(block: ForcingBlock, k: usize) -> Forcing {
        Forcing::single(ForcingTerm {
            block,
            profile: SpatialProfile::Mode(k),
            shape: TemporalShape::GaussianPulse { center: 1.0, width: 0.15 },
            amplitude: 1.0,
        })
        .unwrap()
    }

    fn problem(law: MaterialLaw, f: Forcing, t_max: f64, dt: f64, scheme: Scheme) -> EvolutionProblem {
        let grid = Grid1D::new(1.0, law.n_cells()).unwrap();
        EvolutionProblem::new(law, build_operators(&grid).unwrap(), ForcingSource::Analytic(f), t_max, dt, scheme, 1.0)
            .unwrap()
    }

    #[test]
    fn shapes() {
        let g = TemporalShape::GaussianPulse { center: 1.0, width: 0.1 };
        assert_eq!(g.value(1.0), 1.0);
        assert_eq!(g.value(1.81), 0.0);
        let s = TemporalShape::DelayedStep { delay: 0.5, width: 0.0 };
        assert_eq!((s.value(0.49), s.value(0.5)), (0.0, 1.0));
        let r = TemporalShape::DelayedStep { delay: 0.5, width: 1.0 };
        assert_eq!(r.value(1.0), 0.5);
        assert_eq!(SpatialProfile::parse("mode_3").unwrap(), SpatialProfile::Mode(3));
        assert!(SpatialProfile::parse("mode_0").is_err());
        assert!(SpatialProfile::parse("wave").is_err());
    }

    #[test]
    fn zero_forcing_gives_zero_trajectory() {
        let p = problem(law(Family::LordShulman, 8, &[("kappa", 1.0), ("a0", 1.0)]), Forcing::default(), 0.5, 1.0 / 64.0, Scheme::BackwardEuler);
        let t = solve(&p).unwrap();
        assert_eq!(t.states.amax(), 0.0);
        assert!(t.energy(&discretize_law(&p.law, p.grid()).unwrap()).iter().all(|e| *e == 0.0));
    }

    #[test]
    fn m0_is_congruent_to_diagonal() {
        let spec = ModelSpec::from_scalars(
            Family::LordShulman,
            &[("rho0", 1.5), ("C", 2.0), ("Gamma", 0.7), ("nu", 0.9), ("kappa", 1.0), ("a0", 0.4)],
        )
        .unwrap()
        .with_cells(6)
        .unwrap();
        let law = assemble_material_law(&spec).unwrap();
        let grid = Grid1D::new(1.0, 6).unwrap();
        let d = discretize_law(&law, &grid).unwrap();
        let mut m = DMatrix::<f64>::zeros(grid.n_dofs(), grid.n_dofs());
        for (i, j, v) in d.m0.triplet_iter() {
            m[(i, j)] += *v;
        }
        assert!((&m - m.transpose()).amax() == 0.0);
        assert!(m.symmetric_eigenvalues().min() > 0.0);
    }

    #[test]
    fn strain_matches_stress_relation() {
        // C⁻¹(σ + Γ·PΘ) = D_grad u holds exactly for the scheme.
        let spec = ModelSpec::from_scalars(
            Family::Classical,
            &[("rho0", 1.0), ("C", 2.0), ("Gamma", 0.5), ("nu", 1.0), ("kappa", 1.0)],
        )
        .unwrap()
        .with_cells(8)
        .unwrap();
        let law = assemble_material_law(&spec).unwrap();
        for scheme in [Scheme::BackwardEuler, Scheme::Trapezoidal] {
            let f = pulse(ForcingBlock::F, 1).plus(&pulse(ForcingBlock::H, 2));
            let p = problem(law.clone(), f, 2.0, 1.0 / 128.0, scheme);
            let t = solve(&p).unwrap();
            let eps = t.strain(&p.op);
            let d = discretize_law(&p.law, p.grid()).unwrap();
            let sigma = t.field(Field::Sigma);
            let th = t.field(Field::ThetaBig);
            let mut worst = 0.0_f64;
            for k in 0..t.len() {
                let pth = spmv(&d.averaging, &th.samples().row(k).transpose());
                for j in 0..8 {
                    let lhs = (sigma.samples()[(k, j)] + 0.5 * pth[j]) / 2.0;
                    worst = worst.max((lhs - eps.samples()[(k, j)]).abs());
                }
            }
            assert!(worst < 1e-12 * eps.max_abs().max(1.0), "{worst}");
        }
    }

    #[test]
    fn linearity() {
        let l = law(Family::DplI, 8, &[("kappa", 1.0), ("n1", 0.5), ("n2", 1.0)]);
        let f1 = pulse(ForcingBlock::H, 1);
        let f2 = pulse(ForcingBlock::F, 3);
        let p = problem(l, f1.scaled(2.0).plus(&f2.scaled(-0.5)), 2.0, 1.0 / 64.0, Scheme::Trapezoidal);
        let a = solve(&p).unwrap();
        let b = solve(&p.with_forcing(ForcingSource::Analytic(f1)).unwrap()).unwrap();
        let c = solve(&p.with_forcing(ForcingSource::Analytic(f2)).unwrap()).unwrap();
        let combo = &b.states * 2.0 - &c.states * 0.5;
        assert!((&a.states - combo).amax() <= 1e-10 * a.states.amax());
    }

    #[test]
    fn conservative_trapezoidal_energy() {
        let l = law(Family::GreenNaghdiII, 16, &[("k_star", 1.0)]);
        let p = problem(l, pulse(ForcingBlock::H, 2), 4.0, 1.0 / 128.0, Scheme::Trapezoidal);
        let t = solve(&p).unwrap();
        let e = energy_functional(&t, &p.law).unwrap();
        let after = (2.3 * 128.0) as usize;
        for k in after..e.len() - 1 {
            assert!((e[k + 1] - e[k]).abs() <= 1e-10 * e[k]);
        }
    }

    #[test]
    fn backward_euler_dissipates() {
        let l = law(Family::LordShulman, 16, &[("kappa", 1.0), ("a0", 1.0)]);
        let p = problem(l, pulse(ForcingBlock::H, 1), 4.0, 1.0 / 128.0, Scheme::BackwardEuler);
        let t = solve(&p).unwrap();
        let e = energy_functional(&t, &p.law).unwrap();
        let after = (2.3 * 128.0) as usize;
        for k in after..e.len() - 1 {
            assert!(e[k + 1] < e[k]);
        }
    }

    #[test]
    fn marching_is_causal() {
        let l = law(Family::Classical, 8, &[("kappa", 1.0)]);
        let late = Forcing::single(ForcingTerm {
            block: ForcingBlock::H,
            profile: SpatialProfile::Bump,
            shape: TemporalShape::GaussianPulse { center: 1.5, width: 0.1 },
            amplitude: 1.0,
        })
        .unwrap();
        let p = problem(l.clone(), late, 2.0, 1.0 / 64.0, Scheme::BackwardEuler);
        assert_eq!(causality_test(&p, 0.7).unwrap(), Causality::Leakage(0.0));
        assert!(matches!(causality_test(&p, 1.2).unwrap(), Causality::Skipped(_)));
        let early = problem(l, pulse(ForcingBlock::H, 1), 2.0, 1.0 / 64.0, Scheme::BackwardEuler);
        assert!(matches!(causality_test(&early, 0.5).unwrap(), Causality::Skipped(_)));
    }

    #[test]
    fn green_lindsay_runs_with_memory_states() {
        let spec = ModelSpec::representative(Family::GreenLindsay).with_cells(8).unwrap();
        let law = assemble_material_law(&spec).unwrap();
        let p = problem(law, pulse(ForcingBlock::H, 1), 2.0, 1.0 / 64.0, Scheme::BackwardEuler);
        let st = Stepper::new(&p).unwrap();
        assert_eq!(st.n_aux(), 7);
        let t = solve_with(&p, &st).unwrap();
        assert!(t.states.iter().all(|v| v.is_finite()));
        let d = discretize_law(&p.law, p.grid()).unwrap();
        let th = t.temperature(&d).unwrap();
        let eta = t.entropy(&p.op, &d).unwrap();
        assert_eq!(th.components(), 7);
        assert!(eta.max_abs() > 0.0);
    }

    #[test]
    fn heterogeneous_memory_uses_two_attachments() {
        let mut map = std::collections::BTreeMap::new();
        use crate::material::CoefValue;
        for (k, v) in [("rho0", 1.0), ("C", 1.0), ("Gamma", 0.0), ("kappa", 1.0), ("b", 0.0), ("d", 3.0), ("h", 1.0)] {
            map.insert(k.to_string(), CoefValue::Scalar(v));
        }
        map.insert("n0".into(), CoefValue::PerCell(vec![0.5, 0.5, 1.0, 1.0]));
        let law = assemble_material_law(&ModelSpec::new(Family::GreenLindsay, map).unwrap()).unwrap();
        let d = discretize_law(&law, &Grid1D::new(1.0, 4).unwrap()).unwrap();
        // three nodes (equal, mixed, equal) carry four memory attachments,
        // the four faces one flux law each
        assert_eq!(d.attachments.len(), 8);
        assert_eq!(d.realizations.len(), 3);
    }
}

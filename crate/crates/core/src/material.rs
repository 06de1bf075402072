//! The model catalog.
//!
//! Every named model is mapped onto the general law
//! `M(z) = M₀ + z·M₁(z)` over the unknowns `(v, σ, Θ, q)`, where
//!
//! ```text
//!        ⎡ ρ₀   0        0                          0     ⎤
//! M₀  =  ⎢ 0    C⁻¹      C⁻¹Γ                       0     ⎥      M₁(z) = diag(0, 0, a₁(z), a₂(z))
//!        ⎢ 0    Γ*C⁻¹    ν + Γ*C⁻¹Γ + ζ₀*a₀ζ₀       ζ₀*a₀ ⎥
//!        ⎣ 0    0        a₀ζ₀                       a₀    ⎦
//! ```
//!
//! Coefficients are cellwise (piecewise constant in space).

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{realize_state_space, RationalMatrixFunction};
use crate::signal::WeightedSignal;

/// Relative spectral cutoff separating zero from positive eigenvalues.
pub const SPECTRAL_CUTOFF: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    Classical,
    LordShulman,
    GreenNaghdiI,
    GreenNaghdiII,
    GreenNaghdiIII,
    GreenLindsay,
    #[serde(rename = "DPL_I")]
    DplI,
    #[serde(rename = "DPL_II")]
    DplII,
    Custom,
}

impl Family {
    pub const CATALOG: [Family; 8] = [
        Family::Classical,
        Family::LordShulman,
        Family::GreenNaghdiII,
        Family::GreenLindsay,
        Family::DplII,
        Family::GreenNaghdiI,
        Family::GreenNaghdiIII,
        Family::DplI,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Classical => "Classical",
            Family::LordShulman => "LordShulman",
            Family::GreenNaghdiI => "GreenNaghdiI",
            Family::GreenNaghdiII => "GreenNaghdiII",
            Family::GreenNaghdiIII => "GreenNaghdiIII",
            Family::GreenLindsay => "GreenLindsay",
            Family::DplI => "DPL_I",
            Family::DplII => "DPL_II",
            Family::Custom => "Custom",
        }
    }

    fn specific_keys(self) -> &'static [&'static str] {
        match self {
            Family::Classical => &["kappa"],
            Family::LordShulman => &["kappa", "a0"],
            Family::GreenNaghdiI => &["k"],
            Family::GreenNaghdiII => &["k_star"],
            Family::GreenNaghdiIII => &["k", "k_star"],
            Family::GreenLindsay => &["kappa", "n0", "b", "d", "h"],
            Family::DplI | Family::DplII => &["kappa", "n1", "n2"],
            Family::Custom => &["a0", "zeta0", "a1", "a2"],
        }
    }

    fn required_keys(self) -> Vec<&'static str> {
        let mut keys = vec!["rho0", "C", "Gamma"];
        if self != Family::GreenLindsay {
            keys.push("nu");
        }
        keys.extend_from_slice(self.specific_keys());
        keys
    }

    fn optional_keys(self) -> &'static [&'static str] {
        match self {
            Family::Custom => &["n0"],
            _ => &[],
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A coefficient: homogeneous, cellwise, or (for custom laws) a rational function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoefValue {
    Scalar(f64),
    PerCell(Vec<f64>),
    Rational(RationalMatrixFunction),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub family: Family,
    pub coefficients: BTreeMap<String, CoefValue>,
    cells: usize,
}

impl ModelSpec {
    /// Validates key sets and per-cell array lengths. The number of cells is
    /// the common length of the cellwise arrays, or 1 when all are scalars.
    pub fn new(family: Family, coefficients: BTreeMap<String, CoefValue>) -> Result<Self> {
        let required = family.required_keys();
        for key in &required {
            if !coefficients.contains_key(*key) {
                return Err(Error::InvalidModel(format!("{family}: missing coefficient '{key}'")));
            }
        }
        for key in coefficients.keys() {
            if !required.contains(&key.as_str()) && !family.optional_keys().contains(&key.as_str()) {
                return Err(Error::InvalidModel(format!("{family}: unexpected coefficient '{key}'")));
            }
        }
        let mut cells = None;
        for (key, v) in &coefficients {
            match v {
                CoefValue::PerCell(vals) => {
                    if vals.is_empty() {
                        return Err(Error::InvalidModel(format!("'{key}' has no cells")));
                    }
                    match cells {
                        None => cells = Some(vals.len()),
                        Some(n) if n != vals.len() => {
                            return Err(Error::InvalidModel(format!(
                                "'{key}' has {} cells, expected {n}",
                                vals.len()
                            )))
                        }
                        _ => {}
                    }
                }
                CoefValue::Rational(_) if !matches!(key.as_str(), "a1" | "a2") || family != Family::Custom => {
                    return Err(Error::InvalidModel(format!("'{key}' must be numeric")));
                }
                CoefValue::Scalar(_) if family == Family::Custom && matches!(key.as_str(), "a1" | "a2") => {}
                _ => {}
            }
            let finite = match v {
                CoefValue::Scalar(x) => x.is_finite(),
                CoefValue::PerCell(xs) => xs.iter().all(|x| x.is_finite()),
                CoefValue::Rational(_) => true,
            };
            if !finite {
                return Err(Error::InvalidModel(format!("'{key}' is not finite")));
            }
        }
        Ok(Self { family, coefficients, cells: cells.unwrap_or(1) })
    }

    pub fn from_scalars(family: Family, pairs: &[(&str, f64)]) -> Result<Self> {
        let map = pairs.iter().map(|(k, v)| (k.to_string(), CoefValue::Scalar(*v))).collect();
        Self::new(family, map)
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Broadcasts to `n` cells; cellwise arrays must already have length `n`.
    pub fn with_cells(mut self, n: usize) -> Result<Self> {
        let has_arrays = self.coefficients.values().any(|v| matches!(v, CoefValue::PerCell(_)));
        if has_arrays && self.cells != n {
            return Err(Error::InvalidModel(format!(
                "coefficients are given on {} cells but the grid has {n}",
                self.cells
            )));
        }
        if n == 0 {
            return Err(Error::InvalidModel("zero cells".into()));
        }
        self.cells = n;
        Ok(self)
    }

    /// Unit coefficients with a nonzero coupling; used for pattern tables.
    pub fn representative(family: Family) -> Self {
        let mut pairs: Vec<(&str, f64)> = vec![("rho0", 1.0), ("C", 1.0), ("Gamma", 0.5)];
        if family != Family::GreenLindsay {
            pairs.push(("nu", 1.0));
        }
        match family {
            Family::Classical => pairs.push(("kappa", 1.0)),
            Family::LordShulman => pairs.extend([("kappa", 1.0), ("a0", 1.0)]),
            Family::GreenNaghdiI => pairs.push(("k", 1.0)),
            Family::GreenNaghdiII => pairs.push(("k_star", 1.0)),
            Family::GreenNaghdiIII => pairs.extend([("k", 1.0), ("k_star", 1.0)]),
            Family::GreenLindsay => {
                pairs.extend([("kappa", 1.0), ("n0", 0.5), ("b", 0.3), ("d", 2.0), ("h", 1.0)])
            }
            Family::DplI | Family::DplII => pairs.extend([("kappa", 1.0), ("n1", 0.5), ("n2", 1.0)]),
            Family::Custom => {
                let mut map: BTreeMap<String, CoefValue> =
                    pairs.iter().map(|(k, v)| (k.to_string(), CoefValue::Scalar(*v))).collect();
                map.insert("a0".into(), CoefValue::Scalar(1.0));
                map.insert("zeta0".into(), CoefValue::Scalar(0.0));
                map.insert("a1".into(), CoefValue::Scalar(0.0));
                map.insert("a2".into(), CoefValue::Scalar(1.0));
                return Self::new(family, map).expect("representative custom spec");
            }
        }
        Self::from_scalars(family, &pairs).expect("representative spec")
    }

    fn value(&self, key: &str, cell: usize) -> Result<f64> {
        match self.coefficients.get(key) {
            Some(CoefValue::Scalar(v)) => Ok(*v),
            Some(CoefValue::PerCell(v)) => v
                .get(cell)
                .copied()
                .ok_or_else(|| Error::InvalidModel(format!("'{key}' has no value for cell {cell}"))),
            Some(CoefValue::Rational(_)) => Err(Error::InvalidModel(format!("'{key}' must be numeric"))),
            None => Err(Error::InvalidModel(format!("missing coefficient '{key}'"))),
        }
    }

    fn rational(&self, key: &str) -> Result<RationalMatrixFunction> {
        match self.coefficients.get(key) {
            Some(CoefValue::Rational(r)) => Ok(r.clone()),
            Some(CoefValue::Scalar(v)) => RationalMatrixFunction::constant(DMatrix::from_element(1, 1, *v)),
            _ => Err(Error::InvalidModel(format!("'{key}' must be a scalar or a rational function"))),
        }
    }
}

/// Block dimensions of `(v, σ, Θ, q)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSizes {
    pub v: usize,
    pub sigma: usize,
    pub theta: usize,
    pub q: usize,
}

impl BlockSizes {
    pub const ONE_D: BlockSizes = BlockSizes { v: 1, sigma: 1, theta: 1, q: 1 };

    pub fn total(&self) -> usize {
        self.v + self.sigma + self.theta + self.q
    }
    pub fn offsets(&self) -> [usize; 4] {
        [0, self.v, self.v + self.sigma, self.v + self.sigma + self.theta]
    }
    pub fn sizes(&self) -> [usize; 4] {
        [self.v, self.sigma, self.theta, self.q]
    }
}

/// The pointwise law in one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellLaw {
    pub rho0: f64,
    pub c: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub nu: f64,
    pub a0: DMatrix<f64>,
    pub zeta0: DMatrix<f64>,
    pub a1: RationalMatrixFunction,
    pub a2: RationalMatrixFunction,
    /// Relaxation time in `Θ = (1 + n₀∂₀)θ`; zero outside Green-Lindsay.
    pub n0: f64,
}

impl CellLaw {
    pub fn blocks(&self) -> BlockSizes {
        BlockSizes { v: 1, sigma: self.c.nrows(), theta: self.gamma.ncols(), q: self.a0.nrows() }
    }

    fn validate(&self) -> Result<()> {
        let b = self.blocks();
        let shape_ok = self.c.shape() == (b.sigma, b.sigma)
            && self.gamma.shape() == (b.sigma, b.theta)
            && self.a0.shape() == (b.q, b.q)
            && self.zeta0.shape() == (b.q, b.theta)
            && self.a1.dims() == (b.theta, b.theta)
            && self.a2.dims() == (b.q, b.q);
        if !shape_ok {
            return Err(Error::DimensionMismatch("cell coefficient shapes are inconsistent".into()));
        }
        if (&self.c - self.c.transpose()).amax() > 1e-14 * self.c.amax().max(1.0) {
            return Err(Error::InvalidModel("C must be symmetric".into()));
        }
        if (&self.a0 - self.a0.transpose()).amax() > 1e-14 * self.a0.amax().max(1.0) {
            return Err(Error::InvalidModel("a0 must be selfadjoint".into()));
        }
        if !self.rho0.is_finite() || !self.nu.is_finite() || !self.n0.is_finite() {
            return Err(Error::InvalidModel("non-finite scalar coefficient".into()));
        }
        Ok(())
    }

    pub fn c_inverse(&self) -> Result<DMatrix<f64>> {
        self.c
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidModel("C is not invertible".into()))
    }

    /// `M₀` by the explicit block formulas.
    pub fn m0(&self) -> Result<DMatrix<f64>> {
        let b = self.blocks();
        let [ov, os, ot, oq] = b.offsets();
        let ci = self.c_inverse()?;
        let ci_g = &ci * &self.gamma;
        let a0z = &self.a0 * &self.zeta0;
        let mut m = DMatrix::zeros(b.total(), b.total());
        m[(ov, ov)] = self.rho0;
        m.view_mut((os, os), (b.sigma, b.sigma)).copy_from(&ci);
        m.view_mut((os, ot), (b.sigma, b.theta)).copy_from(&ci_g);
        m.view_mut((ot, os), (b.theta, b.sigma)).copy_from(&ci_g.transpose());
        let tt = DMatrix::identity(b.theta, b.theta) * self.nu
            + self.gamma.transpose() * &ci_g
            + self.zeta0.transpose() * &a0z;
        m.view_mut((ot, ot), (b.theta, b.theta)).copy_from(&tt);
        m.view_mut((ot, oq), (b.theta, b.q)).copy_from(&a0z.transpose());
        m.view_mut((oq, ot), (b.q, b.theta)).copy_from(&a0z);
        m.view_mut((oq, oq), (b.q, b.q)).copy_from(&self.a0);
        Ok(m)
    }

    /// `M₁(z) = diag(0, 0, a₁(z), a₂(z))`.
    pub fn m1(&self) -> Result<RationalMatrixFunction> {
        let b = self.blocks();
        let [_, _, ot, oq] = b.offsets();
        let n = b.total();
        self.a1.embed(n, n, ot, ot)?.add(&self.a2.embed(n, n, oq, oq)?)
    }

    pub fn m1_at_zero(&self) -> DMatrix<Complex64> {
        let b = self.blocks();
        let [_, _, ot, oq] = b.offsets();
        let mut m = DMatrix::zeros(b.total(), b.total());
        m.view_mut((ot, ot), (b.theta, b.theta)).copy_from(&self.a1.at_zero());
        m.view_mut((oq, oq), (b.q, b.q)).copy_from(&self.a2.at_zero());
        m
    }

    /// The full symbol `M(z) = M₀ + z·M₁(z)`.
    pub fn full_symbol(&self) -> Result<RationalMatrixFunction> {
        RationalMatrixFunction::constant(self.m0()?)?.add(&self.m1()?.mul_z())
    }

    /// Factors `(L, D)` with `M₀ = Lᵀ·D·L`: `L` is unit upper triangular with
    /// `Γ` at `(σ, Θ)` and `ζ₀` at `(q, Θ)`, `D = diag(ρ₀, C⁻¹, ν, a₀)`.
    pub fn congruence_factors(&self) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let b = self.blocks();
        let [ov, os, ot, oq] = b.offsets();
        let n = b.total();
        let mut l = DMatrix::identity(n, n);
        l.view_mut((os, ot), (b.sigma, b.theta)).copy_from(&self.gamma);
        l.view_mut((oq, ot), (b.q, b.theta)).copy_from(&self.zeta0);
        let mut d = DMatrix::zeros(n, n);
        d[(ov, ov)] = self.rho0;
        d.view_mut((os, os), (b.sigma, b.sigma)).copy_from(&self.c_inverse()?);
        d.view_mut((ot, ot), (b.theta, b.theta))
            .copy_from(&(DMatrix::identity(b.theta, b.theta) * self.nu));
        d.view_mut((oq, oq), (b.q, b.q)).copy_from(&self.a0);
        Ok((l, d))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    Generic,
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialLaw {
    pub family: Family,
    cells: Vec<CellLaw>,
    m0: Vec<DMatrix<f64>>,
    classification: Classification,
}

impl MaterialLaw {
    /// Builds a law directly from cell data.
    pub fn from_cells(family: Family, cells: Vec<CellLaw>) -> Result<Self> {
        let first = cells.first().ok_or_else(|| Error::InvalidModel("no cells".into()))?;
        let blocks = first.blocks();
        let mut m0 = Vec::with_capacity(cells.len());
        for cell in &cells {
            cell.validate()?;
            if cell.blocks() != blocks {
                return Err(Error::DimensionMismatch("cells have different block sizes".into()));
            }
            let m = cell.m0()?;
            if (&m - m.transpose()).amax() > 1e-14 * m.amax().max(1.0) {
                return Err(Error::InvalidModel("M0 is not Hermitian".into()));
            }
            m0.push(m);
        }
        let classification = classify_m0(&m0);
        Ok(Self { family, cells, m0, classification })
    }

    pub fn cells(&self) -> &[CellLaw] {
        &self.cells
    }
    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }
    pub fn blocks(&self) -> BlockSizes {
        self.cells[0].blocks()
    }
    pub fn m0(&self, cell: usize) -> &DMatrix<f64> {
        &self.m0[cell]
    }
    pub fn classification(&self) -> Classification {
        self.classification
    }

    /// True when every cell carries the same coefficients.
    pub fn is_homogeneous(&self) -> bool {
        self.cells.iter().all(|c| c == &self.cells[0])
    }

    pub fn pattern_table(&self) -> String {
        zero_pattern(self).to_table(self.family)
    }
}

fn classify_m0(m0: &[DMatrix<f64>]) -> Classification {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0_f64;
    for m in m0 {
        let eig = m.clone().symmetric_eigenvalues();
        lo = lo.min(eig.min());
        hi = hi.max(eig.max());
    }
    if lo > SPECTRAL_CUTOFF * hi {
        Classification::Generic
    } else {
        Classification::Degenerate
    }
}

fn scalar_rational(num: &[f64], den: &[f64]) -> Result<RationalMatrixFunction> {
    RationalMatrixFunction::scalar(num, den)
}

fn one(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

fn nonzero(key: &str, v: f64) -> Result<f64> {
    if v == 0.0 {
        Err(Error::InvalidModel(format!("'{key}' must be invertible (nonzero)")))
    } else {
        Ok(v)
    }
}

/// Maps a model specification onto `(M₀, M₁)` cell by cell.
pub fn assemble_material_law(spec: &ModelSpec) -> Result<MaterialLaw> {
    let mut cells = Vec::with_capacity(spec.cells());
    for i in 0..spec.cells() {
        cells.push(assemble_cell(spec, i)?);
    }
    MaterialLaw::from_cells(spec.family, cells)
}

fn assemble_cell(spec: &ModelSpec, i: usize) -> Result<CellLaw> {
    let get = |k: &str| spec.value(k, i);
    let rho0 = get("rho0")?;
    if !(rho0 > 0.0) {
        return Err(Error::InvalidModel(format!("rho0 must be positive (cell {i})")));
    }
    let c = get("C")?;
    if !(c > 0.0) {
        return Err(Error::InvalidModel(format!("C must be positive definite (cell {i})")));
    }
    let gamma = get("Gamma")?;

    let zero_fn = || RationalMatrixFunction::zero(1, 1);
    let mut nu = if spec.family == Family::GreenLindsay { 0.0 } else { get("nu")? };
    let mut a0 = 0.0;
    let mut zeta0 = 0.0;
    let mut n0 = 0.0;
    let mut a1 = zero_fn();
    let a2;

    match spec.family {
        Family::Classical => {
            a2 = RationalMatrixFunction::constant(one(1.0 / nonzero("kappa", get("kappa")?)?))?;
        }
        Family::LordShulman => {
            a0 = get("a0")?;
            a2 = RationalMatrixFunction::constant(one(1.0 / nonzero("kappa", get("kappa")?)?))?;
        }
        Family::GreenNaghdiI => {
            a2 = RationalMatrixFunction::constant(one(1.0 / nonzero("k", get("k")?)?))?;
        }
        Family::GreenNaghdiII => {
            a0 = 1.0 / nonzero("k_star", get("k_star")?)?;
            a2 = zero_fn();
        }
        Family::GreenNaghdiIII => {
            // (z k* + k)⁻¹
            let k = nonzero("k", get("k")?)?;
            a2 = scalar_rational(&[1.0], &[k, get("k_star")?])?;
        }
        Family::GreenLindsay => {
            let kappa = nonzero("kappa", get("kappa")?)?;
            n0 = get("n0")?;
            if !(n0 > 0.0) {
                return Err(Error::InvalidModel(format!("n0 must be positive for Green-Lindsay (cell {i})")));
            }
            let (b, d, h) = (get("b")?, get("d")?, get("h")?);
            a0 = n0 / kappa;
            zeta0 = b / n0;
            nu = h / n0;
            a2 = RationalMatrixFunction::constant(one(1.0 / kappa))?;
            // (d − (h + b*κ⁻¹b)n₀⁻¹)(n₀ + z)⁻¹
            let coef = d - (h + b * b / kappa) / n0;
            a1 = scalar_rational(&[coef], &[n0, 1.0])?;
        }
        Family::DplII => {
            let kappa = nonzero("kappa", get("kappa")?)?;
            let n1 = nonzero("n1", get("n1")?)?;
            let n2 = nonzero("n2", get("n2")?)?;
            let half = 0.5 * n1 * n1 / n2;
            a0 = half / kappa;
            // ((n₁ + z) − ½n₁²n₂⁻¹)(z + n₂)⁻¹κ⁻¹
            a2 = scalar_rational(&[(n1 - half) / kappa, 1.0 / kappa], &[n2, 1.0])?;
        }
        Family::DplI => {
            let kappa = nonzero("kappa", get("kappa")?)?;
            let n1 = nonzero("n1", get("n1")?)?;
            let n2 = nonzero("n2", get("n2")?)?;
            // (z + n₂)⁻¹(z + n₁)κ⁻¹
            a2 = scalar_rational(&[n1 / kappa, 1.0 / kappa], &[n2, 1.0])?;
        }
        Family::Custom => {
            a0 = get("a0")?;
            zeta0 = get("zeta0")?;
            a1 = spec.rational("a1")?;
            a2 = spec.rational("a2")?;
            if spec.coefficients.contains_key("n0") {
                n0 = get("n0")?;
                if n0 < 0.0 {
                    return Err(Error::InvalidModel("n0 must be nonnegative".into()));
                }
            }
        }
    }
    if nu < 0.0 && spec.family != Family::GreenLindsay {
        return Err(Error::InvalidModel(format!("nu must be nonnegative (cell {i})")));
    }

    Ok(CellLaw {
        rho0,
        c: one(c),
        gamma: one(gamma),
        nu,
        a0: one(a0),
        zeta0: one(zeta0),
        a1,
        a2,
        n0,
    })
}

/// Block zero-patterns of `M(0) = M₀` and `M₁(0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZeroPattern {
    pub m0: [[bool; 4]; 4],
    pub m1: [[bool; 4]; 4],
}

pub const BLOCK_LABELS: [&str; 4] = ["v", "sigma", "Theta", "q"];

impl ZeroPattern {
    /// Text table: one block per row `v/sigma/Theta/q`, entries `*` or `0`.
    pub fn to_table(&self, family: Family) -> String {
        let mut s = format!("model: {family}\n");
        for (title, pat) in [("M(0)", &self.m0), ("M1(0)", &self.m1)] {
            s.push_str(title);
            s.push('\n');
            s.push_str(&format!("{:<6}", ""));
            for label in BLOCK_LABELS {
                s.push_str(&format!("{label:<6}"));
            }
            s = s.trim_end().to_string();
            s.push('\n');
            for (r, label) in BLOCK_LABELS.iter().enumerate() {
                let mut line = format!("{label:<6}");
                for entry in pat[r] {
                    line.push_str(&format!("{:<6}", if entry { "*" } else { "0" }));
                }
                s.push_str(line.trim_end());
                s.push('\n');
            }
        }
        s
    }
}

/// An entry is starred iff the corresponding block is nonzero in some cell.
pub fn zero_pattern(law: &MaterialLaw) -> ZeroPattern {
    let b = law.blocks();
    let offs = b.offsets();
    let sizes = b.sizes();
    let mut m0 = [[false; 4]; 4];
    let mut m1 = [[false; 4]; 4];
    for (i, cell) in law.cells().iter().enumerate() {
        let a = law.m0(i);
        let m1z = cell.m1_at_zero();
        for r in 0..4 {
            for c in 0..4 {
                let v0 = a.view((offs[r], offs[c]), (sizes[r], sizes[c]));
                m0[r][c] |= v0.iter().any(|x| *x != 0.0);
                let v1 = m1z.view((offs[r], offs[c]), (sizes[r], sizes[c]));
                m1[r][c] |= v1.iter().any(|x| x.norm() != 0.0);
            }
        }
    }
    ZeroPattern { m0, m1 }
}

/// Generic iff the smallest eigenvalue of `M(0)` over all cells exceeds
/// `1e-10` times the largest.
pub fn classify(law: &MaterialLaw) -> Classification {
    law.classification()
}

/// Recovers `θ` from `Θ = (1 + n₀∂₀)θ` by solving `n₀θ′ + θ = Θ` from zero
/// history; each step is exact for piecewise-linear `Θ`.
pub fn recover_theta(theta_big: &WeightedSignal, n0: f64) -> Result<WeightedSignal> {
    if !(n0 >= 0.0) {
        return Err(Error::InvalidInput(format!("n0 must be nonnegative, got {n0}")));
    }
    if n0 == 0.0 {
        return Ok(theta_big.clone());
    }
    let dt = theta_big.dt();
    let e = (-dt / n0).exp();
    let one_minus = -(-dt / n0).exp_m1();
    let ramp = (dt - n0 * one_minus) / dt;
    let src = theta_big.samples();
    let mut out = DMatrix::zeros(src.nrows(), src.ncols());
    for j in 0..src.ncols() {
        let mut th = 0.0;
        let mut prev = 0.0;
        for k in 0..src.nrows() {
            let cur = src[(k, j)];
            if k > 0 {
                th = e * th + one_minus * prev + ramp * (cur - prev);
            }
            out[(k, j)] = th;
            prev = cur;
        }
    }
    WeightedSignal::new(theta_big.t_min(), dt, theta_big.rho(), out)
}

/// `η` from `ρ₀η = Γ*ε + (ν + ζ₀*a₀ζ₀)Θ + ζ₀*a₀q + ∂₀⁻¹a₁(∂₀⁻¹)Θ`, with one
/// signal component per cell of a 1-D law. The memory term runs through the
/// state-space realization of `z·a₁(z)`.
pub fn compute_entropy(
    epsilon: &WeightedSignal,
    theta_big: &WeightedSignal,
    q: &WeightedSignal,
    law: &MaterialLaw,
) -> Result<WeightedSignal> {
    if law.blocks() != BlockSizes::ONE_D {
        return Err(Error::DimensionMismatch("entropy evaluation needs scalar blocks".into()));
    }
    let n = law.n_cells();
    for (name, s) in [("epsilon", epsilon), ("Theta", theta_big), ("q", q)] {
        if s.components() != n {
            return Err(Error::DimensionMismatch(format!(
                "{name} has {} components, law has {n} cells",
                s.components()
            )));
        }
    }
    epsilon.check_same_grid(theta_big)?;
    epsilon.check_same_grid(q)?;

    let mut out = DMatrix::zeros(epsilon.len(), n);
    for (j, cell) in law.cells().iter().enumerate() {
        let a0 = cell.a0[(0, 0)];
        let z0 = cell.zeta0[(0, 0)];
        let g = cell.gamma[(0, 0)];
        let theta_j = WeightedSignal::new(
            theta_big.t_min(),
            theta_big.dt(),
            theta_big.rho(),
            DMatrix::from_column_slice(theta_big.len(), 1, theta_big.samples().column(j).as_slice()),
        )?;
        let memory = if cell.a1.is_zero() {
            None
        } else {
            let real = realize_state_space(&cell.a1.mul_z())?.to_real()?;
            Some(real.simulate(&theta_j, 4)?)
        };
        for k in 0..epsilon.len() {
            let mut v = g * epsilon.samples()[(k, j)]
                + (cell.nu + z0 * a0 * z0) * theta_big.samples()[(k, j)]
                + z0 * a0 * q.samples()[(k, j)];
            if let Some(m) = &memory {
                v += m.samples()[(k, 0)];
            }
            out[(k, j)] = v / cell.rho0;
        }
    }
    WeightedSignal::new(epsilon.t_min(), epsilon.dt(), epsilon.rho(), out)
}

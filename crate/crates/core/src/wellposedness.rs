//! Certification of the positivity hypotheses behind well-posedness.
//!
//! The solution theory needs `Re z⁻¹M(z) ≥ c > 0` on a ball around zero;
//! for laws of the form `M₀ + zM₁(z)` this reduces, for large `ρ`, to
//! `ρM₀ + Re M₁(0) ≥ c`. The checks here are numerical and sampled.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::material::{CellLaw, Classification, MaterialLaw, SPECTRAL_CUTOFF};
use crate::rational::RationalMatrixFunction;

pub const RHO_SEARCH_MIN: f64 = 1e-3;
pub const RHO_SEARCH_MAX: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Satisfied,
    Violated,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub cell: usize,
    pub eigenvalue: f64,
    #[serde(serialize_with = "serialize_vector")]
    pub eigenvector: DVector<Complex64>,
}

fn serialize_vector<S: Serializer>(v: &DVector<Complex64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for x in v.iter() {
        if x.im == 0.0 {
            seq.serialize_element(&x.re)?;
        } else {
            seq.serialize_element(&[x.re, x.im])?;
        }
    }
    seq.end()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WellPosednessReport {
    pub verdict: Verdict,
    pub c_estimate: f64,
    pub rho_min: f64,
    pub classification: Classification,
    pub witnesses: Vec<Witness>,
    pub checks_run: Vec<String>,
    /// Weight at which `c_estimate` was evaluated.
    #[serde(skip)]
    pub rho_eval: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOptions {
    /// Weight for `c_estimate`; chosen automatically when absent.
    pub rho: Option<f64>,
    pub rho_range: (f64, f64),
    pub t_samples: usize,
    pub shells: usize,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self { rho: None, rho_range: (RHO_SEARCH_MIN, RHO_SEARCH_MAX), t_samples: 257, shells: 8 }
    }
}

/// Smallest eigenvalue and a unit eigenvector of a Hermitian matrix, with the
/// phase fixed so that the largest component is real and positive.
pub fn hermitian_min_eig(m: &DMatrix<Complex64>) -> (f64, DVector<Complex64>) {
    let eig = SymmetricEigen::new(m.clone());
    let (mut k, mut lo) = (0, f64::INFINITY);
    for (i, v) in eig.eigenvalues.iter().enumerate() {
        if *v < lo {
            lo = *v;
            k = i;
        }
    }
    let mut vec = eig.eigenvectors.column(k).into_owned();
    let pivot = vec.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap_or_default();
    if pivot.norm() > 0.0 {
        let phase = pivot.conj() / pivot.norm();
        vec *= phase;
        for x in vec.iter_mut() {
            if x.im.abs() <= 1e-15 * x.norm().max(1e-300) {
                x.im = 0.0;
            }
        }
    }
    (lo, vec)
}

fn hermitian_part(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (m + m.adjoint()).scale(0.5)
}

/// `ρM₀ + Re M₁(0)` for one cell.
pub fn condition_matrix(cell: &CellLaw, rho: f64) -> Result<DMatrix<Complex64>> {
    let m0 = cell.m0()?.map(|v| Complex64::new(v * rho, 0.0));
    Ok(m0 + hermitian_part(&cell.m1_at_zero()))
}

/// Global minimum eigenvalue of `ρM₀ + Re M₁(0)` over all cells.
pub fn check_condition_rho(law: &MaterialLaw, rho: f64) -> Witness {
    let mut best: Option<Witness> = None;
    for (i, cell) in law.cells().iter().enumerate() {
        let m0 = law.m0(i).map(|v| Complex64::new(v * rho, 0.0));
        let h = m0 + hermitian_part(&cell.m1_at_zero());
        let (lo, vec) = hermitian_min_eig(&h);
        if best.as_ref().is_none_or(|b| lo < b.eigenvalue) {
            best = Some(Witness { cell: i, eigenvalue: lo, eigenvector: vec });
        }
    }
    best.expect("a material law has at least one cell")
}

fn symbol_times(n_samples: usize) -> Vec<f64> {
    let mut t = vec![0.0];
    let m = n_samples.saturating_sub(1);
    for k in 0..m {
        let frac = if m == 1 { 0.0 } else { k as f64 / (m - 1) as f64 };
        t.push(10f64.powf(-3.0 + 7.0 * frac));
    }
    t
}

fn symbol_min_on_line(
    m: &RationalMatrixFunction,
    rho: f64,
    times: &[f64],
    both_signs: bool,
) -> Result<(f64, Complex64, DVector<Complex64>)> {
    let mut best = (f64::INFINITY, Complex64::new(0.0, 0.0), DVector::zeros(0));
    for &t in times {
        let signs: &[f64] = if both_signs && t != 0.0 { &[1.0, -1.0] } else { &[1.0] };
        for &sg in signs {
            let s = Complex64::new(rho, sg * t);
            let z = s.inv();
            let val = m.eval(z)?.scale(1.0) * s;
            let (lo, vec) = hermitian_min_eig(&hermitian_part(&val));
            if lo < best.0 {
                best = (lo, z, vec);
            }
        }
    }
    Ok(best)
}

/// Samples `Re z⁻¹M(z)` for `z = (it+ρ)⁻¹` with `ρ ∈ {ρ₀(1 + 2⁻ʲ)}`, `j = 0..8`,
/// and `t` on a log-spaced grid plus `t = 0`. Returns the smallest
/// eigenvalue seen and the `z` where it occurred.
pub fn check_symbol_boundary(m: &RationalMatrixFunction, rho0: f64, n_samples: usize) -> Result<(f64, Complex64)> {
    check_symbol_boundary_shells(m, rho0, n_samples, 8)
}

pub fn check_symbol_boundary_shells(
    m: &RationalMatrixFunction,
    rho0: f64,
    n_samples: usize,
    shells: usize,
) -> Result<(f64, Complex64)> {
    if !(rho0 > 0.0) {
        return Err(Error::InvalidInput(format!("rho0 must be positive, got {rho0}")));
    }
    if m.dims().0 != m.dims().1 {
        return Err(Error::DimensionMismatch("symbol must be square".into()));
    }
    let times = symbol_times(n_samples);
    let both = !m.is_real();
    let mut best = (f64::INFINITY, Complex64::new(0.0, 0.0));
    for j in 0..shells.max(1) {
        let rho = rho0 * (1.0 + 2f64.powi(-(j as i32)));
        let (lo, z, _) = symbol_min_on_line(m, rho, &times, both)?;
        if lo < best.0 {
            best = (lo, z);
        }
    }
    Ok(best)
}

/// Positivity constant of `Re (it+ρ)M((it+ρ)⁻¹)` along the line `Re s = ρ`:
/// the smaller of the sampled minimum and the `t → ∞` limit
/// `ρM₀ + Re M₁(0)`.
pub fn positivity_constant(law: &MaterialLaw, rho: f64, n_samples: usize) -> Result<Witness> {
    let times = symbol_times(n_samples);
    let mut best = check_condition_rho(law, rho);
    let mut seen: Vec<&CellLaw> = Vec::new();
    for (i, cell) in law.cells().iter().enumerate() {
        if seen.contains(&cell) {
            continue;
        }
        seen.push(cell);
        let symbol = cell.full_symbol()?;
        let (lo, _, vec) = symbol_min_on_line(&symbol, rho, &times, !symbol.is_real())?;
        if lo < best.eigenvalue {
            best = Witness { cell: i, eigenvalue: lo, eigenvector: vec };
        }
    }
    Ok(best)
}

fn scale_of(law: &MaterialLaw) -> f64 {
    let mut s = 0.0_f64;
    for (i, cell) in law.cells().iter().enumerate() {
        s = s.max(law.m0(i).amax());
        s = s.max(cell.m1_at_zero().iter().map(|v| v.norm()).fold(0.0, f64::max));
    }
    s.max(f64::MIN_POSITIVE)
}

fn bisect_rho(law: &MaterialLaw, target: f64, range: (f64, f64)) -> Option<f64> {
    let holds = |rho: f64| check_condition_rho(law, rho).eigenvalue >= target;
    let (mut lo, mut hi) = range;
    if holds(lo) {
        return Some(lo);
    }
    if !holds(hi) {
        return None;
    }
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if holds(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Smallest `ρ` in `[10⁻³, 10⁶]` with `λ_min(ρM₀ + Re M₁(0)) ≥ c_target`.
pub fn find_min_rho(law: &MaterialLaw, c_target: f64) -> Result<f64> {
    find_min_rho_in(law, c_target, (RHO_SEARCH_MIN, RHO_SEARCH_MAX))
}

pub fn find_min_rho_in(law: &MaterialLaw, c_target: f64, range: (f64, f64)) -> Result<f64> {
    if !(c_target > 0.0) {
        return Err(Error::InvalidInput(format!("c_target must be positive, got {c_target}")));
    }
    bisect_rho(law, c_target, range).ok_or(Error::UnreachableTarget { target: c_target, rho_max: range.1 })
}

fn embed_block(n: usize, offset: usize, v: &DVector<Complex64>) -> DVector<Complex64> {
    let mut out = DVector::zeros(n);
    out.rows_mut(offset, v.len()).copy_from(v);
    out
}

/// Eigenpairs of a selfadjoint real block, split by the relative cutoff.
struct Spectrum {
    values: DVector<f64>,
    vectors: DMatrix<f64>,
    tol: f64,
}

impl Spectrum {
    fn of(m: &DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(m.clone());
        let tol = SCALE_FLOOR.max(SPECTRAL_CUTOFF * eig.eigenvalues.amax());
        Self { values: eig.eigenvalues, vectors: eig.eigenvectors, tol }
    }
    fn kernel(&self) -> DMatrix<f64> {
        let cols: Vec<_> = (0..self.values.len())
            .filter(|&i| self.values[i].abs() <= self.tol)
            .map(|i| self.vectors.column(i).into_owned())
            .collect();
        if cols.is_empty() {
            DMatrix::zeros(self.values.len(), 0)
        } else {
            DMatrix::from_columns(&cols)
        }
    }
    fn most_negative(&self) -> Option<(f64, DVector<f64>)> {
        let (i, v) = self.values.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1))?;
        (*v < -self.tol).then(|| (*v, self.vectors.column(i).into_owned()))
    }
}

const SCALE_FLOOR: f64 = 1e-300;

fn to_complex(v: &DVector<f64>) -> DVector<Complex64> {
    v.map(|x| Complex64::new(x, 0.0))
}

/// Per-cell range/kernel conditions on `a₀` and `Re a₂(0)` plus positivity
/// of `ρ₀`, `C`, `ν`, combined with the asymptotic condition into a verdict.
pub fn check_theorem_2(law: &MaterialLaw) -> WellPosednessReport {
    check_theorem_2_with(law, &CheckOptions::default())
}

pub fn check_theorem_2_with(law: &MaterialLaw, opts: &CheckOptions) -> WellPosednessReport {
    let mut checks = vec![
        "rho0_positive".to_string(),
        "C_positive_definite".to_string(),
        "nu_positive".to_string(),
        "a0_positive_on_range".to_string(),
        "re_a2_positive_on_kernel_a0".to_string(),
    ];
    let mut witnesses = Vec::new();
    let mut inconclusive = false;
    let b = law.blocks();
    let [ov, os, ot, oq] = b.offsets();
    let n = b.total();

    for (i, cell) in law.cells().iter().enumerate() {
        if cell.rho0 <= 0.0 {
            let mut e = DVector::zeros(n);
            e[ov] = Complex64::new(1.0, 0.0);
            witnesses.push(Witness { cell: i, eigenvalue: cell.rho0, eigenvector: e });
        }
        let c_spec = Spectrum::of(&cell.c);
        let c_min = c_spec.values.min();
        if c_min <= c_spec.tol {
            let k = c_spec.values.imin();
            let v = to_complex(&c_spec.vectors.column(k).into_owned());
            witnesses.push(Witness { cell: i, eigenvalue: c_min, eigenvector: embed_block(n, os, &v) });
        }
        let re_a1 = cell.a1.at_zero().map(|v| v.re);
        let re_a1 = (&re_a1 + re_a1.transpose()) * 0.5;
        let nu_tol = SPECTRAL_CUTOFF * law.m0(i).amax();
        if cell.nu < -nu_tol || (cell.nu.abs() <= nu_tol && re_a1.symmetric_eigenvalues().min() <= 0.0) {
            let (val, vec) = if cell.nu.abs() <= nu_tol {
                let eig = SymmetricEigen::new(re_a1.clone());
                let k = eig.eigenvalues.imin();
                (cell.nu, eig.eigenvectors.column(k).into_owned())
            } else {
                (cell.nu, DVector::from_element(b.theta, 1.0) / (b.theta as f64).sqrt())
            };
            witnesses.push(Witness { cell: i, eigenvalue: val, eigenvector: embed_block(n, ot, &to_complex(&vec)) });
        } else if cell.nu.abs() <= nu_tol {
            inconclusive = true;
        }

        let a0 = Spectrum::of(&cell.a0);
        if let Some((val, vec)) = a0.most_negative() {
            witnesses.push(Witness { cell: i, eigenvalue: val, eigenvector: embed_block(n, oq, &to_complex(&vec)) });
        }
        let kernel = a0.kernel();
        if kernel.ncols() > 0 {
            let re_a2 = hermitian_part(&cell.a2.at_zero());
            let kc = kernel.map(|x| Complex64::new(x, 0.0));
            let projected = kc.adjoint() * &re_a2 * &kc;
            let (lo, y) = hermitian_min_eig(&projected);
            let tol = SPECTRAL_CUTOFF * re_a2.iter().map(|v| v.norm()).fold(0.0, f64::max).max(a0.values.amax());
            if lo <= tol {
                witnesses.push(Witness { cell: i, eigenvalue: lo, eigenvector: embed_block(n, oq, &(kc * y)) });
            }
        }
    }

    let classification = law.classification();
    if !witnesses.is_empty() {
        witnesses.sort_by(|a, b| a.eigenvalue.total_cmp(&b.eigenvalue));
        return WellPosednessReport {
            verdict: Verdict::Violated,
            c_estimate: witnesses[0].eigenvalue.min(0.0),
            rho_min: f64::INFINITY,
            classification,
            witnesses,
            checks_run: checks,
            rho_eval: f64::NAN,
        };
    }

    checks.push("condition_rho".to_string());
    let threshold = SPECTRAL_CUTOFF * scale_of(law);
    let rho_min = bisect_rho(law, threshold, opts.rho_range).unwrap_or(f64::INFINITY);
    if !rho_min.is_finite() {
        let w = check_condition_rho(law, opts.rho_range.1);
        return WellPosednessReport {
            verdict: Verdict::Inconclusive,
            c_estimate: w.eigenvalue,
            rho_min,
            classification,
            witnesses: vec![w],
            checks_run: checks,
            rho_eval: opts.rho_range.1,
        };
    }

    checks.push("symbol_boundary".to_string());
    let mut rho_eval = match opts.rho {
        Some(r) => r.max(rho_min),
        None => (2.0 * rho_min).max(1.0),
    };
    let mut witness = positivity_constant(law, rho_eval, opts.t_samples);
    if opts.rho.is_none() {
        while matches!(&witness, Ok(w) if w.eigenvalue <= threshold) && rho_eval < opts.rho_range.1 {
            rho_eval = (2.0 * rho_eval).min(opts.rho_range.1);
            witness = positivity_constant(law, rho_eval, opts.t_samples);
        }
    }
    let shells_ok = check_symbol_boundary_ok(law, rho_eval, opts);
    let (verdict, c_estimate, witnesses) = match witness {
        Ok(w) if w.eigenvalue > threshold && shells_ok => {
            (if inconclusive { Verdict::Inconclusive } else { Verdict::Satisfied }, w.eigenvalue, vec![w])
        }
        Ok(w) => (Verdict::Inconclusive, w.eigenvalue, vec![w]),
        Err(_) => (Verdict::Inconclusive, f64::NAN, Vec::new()),
    };
    WellPosednessReport { verdict, c_estimate, rho_min, classification, witnesses, checks_run: checks, rho_eval }
}

fn check_symbol_boundary_ok(law: &MaterialLaw, rho: f64, opts: &CheckOptions) -> bool {
    let mut seen: Vec<&CellLaw> = Vec::new();
    for cell in law.cells() {
        if seen.contains(&cell) {
            continue;
        }
        seen.push(cell);
        let ok = cell
            .full_symbol()
            .and_then(|m| check_symbol_boundary_shells(&m, rho, opts.t_samples, opts.shells))
            .map(|(lo, _)| lo > 0.0)
            .unwrap_or(false);
        if !ok {
            return false;
        }
    }
    true
}

impl WellPosednessReport {
    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serializes")
    }
}

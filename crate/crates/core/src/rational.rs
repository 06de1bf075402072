//! Matrix-valued rational functions of `z = ∂₀⁻¹` and their time-domain
//! state-space realizations.
//!
//! A [`RationalMatrixFunction`] is stored in the canonical form
//! `N(z) / d(z)` with a matrix polynomial numerator and a scalar polynomial
//! denominator, coefficients ascending in `z`. Products `Π Qₖ(z)⁻¹ Pₖ(z)`
//! with scalar `Qₖ` are normalized into this form by [`RationalMatrixFunction::from_factors`].

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::signal::WeightedSignal;

/// Relative |denominator| threshold for [`RationalMatrixFunction::eval`].
pub const EVAL_POLE_TOL: f64 = 1e-14;
/// Relative distance below which two poles count as repeated.
pub const REPEATED_POLE_TOL: f64 = 1e-8;

type CMat = DMatrix<Complex64>;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn horner(coeffs: &[Complex64], z: Complex64) -> Complex64 {
    coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, a| acc * z + a)
}

fn poly_mul(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_derivative(a: &[Complex64]) -> Vec<Complex64> {
    if a.len() <= 1 {
        return vec![c(0.0)];
    }
    a.iter().enumerate().skip(1).map(|(k, v)| v * k as f64).collect()
}

/// Roots of a scalar polynomial (ascending coefficients, nonzero leading term).
fn poly_roots(a: &[Complex64]) -> Vec<Complex64> {
    let deg = a.len() - 1;
    match deg {
        0 => Vec::new(),
        1 => vec![-a[0] / a[1]],
        _ => {
            let lead = a[deg];
            let mut comp = CMat::zeros(deg, deg);
            for i in 1..deg {
                comp[(i, i - 1)] = c(1.0);
            }
            for i in 0..deg {
                comp[(i, deg - 1)] = -a[i] / lead;
            }
            let mut roots: Vec<Complex64> = comp
                .eigenvalues()
                .map(|v| v.iter().copied().collect())
                .unwrap_or_else(|| vec![c(f64::NAN); deg]);
            let da = poly_derivative(a);
            for r in roots.iter_mut() {
                for _ in 0..3 {
                    let d = horner(&da, *r);
                    if d.norm() == 0.0 {
                        break;
                    }
                    *r -= horner(a, *r) / d;
                }
            }
            roots
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RationalMatrixFunction {
    num: Vec<CMat>,
    den: Vec<Complex64>,
    rows: usize,
    cols: usize,
}

impl RationalMatrixFunction {
    /// Builds `num(z)/den(z)`, rejecting functions that are not analytic at 0.
    pub fn new(num: Vec<CMat>, den: Vec<Complex64>) -> Result<Self> {
        let first = num
            .first()
            .ok_or_else(|| Error::InvalidInput("numerator needs at least one coefficient".into()))?;
        let (rows, cols) = first.shape();
        if num.iter().any(|m| m.shape() != (rows, cols)) {
            return Err(Error::DimensionMismatch("numerator coefficients differ in shape".into()));
        }
        if den.is_empty() {
            return Err(Error::InvalidInput("empty denominator".into()));
        }
        if num.iter().flat_map(|m| m.iter()).chain(den.iter()).any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidInput("non-finite coefficient".into()));
        }
        let scale = den.iter().fold(0.0_f64, |m, v| m.max(v.norm()));
        if scale == 0.0 || den[0].norm() <= EVAL_POLE_TOL * scale {
            return Err(Error::NotAnalyticAtZero);
        }
        let mut out = Self { num, den, rows, cols };
        out.trim();
        Ok(out)
    }

    fn trim(&mut self) {
        while self.den.len() > 1 && self.den.last().is_some_and(|v| v.norm() == 0.0) {
            self.den.pop();
        }
        while self.num.len() > 1 && self.num.last().is_some_and(|m| m.iter().all(|v| v.norm() == 0.0)) {
            self.num.pop();
        }
    }

    pub fn from_real(num: Vec<DMatrix<f64>>, den: Vec<f64>) -> Result<Self> {
        Self::new(num.into_iter().map(|m| m.map(c)).collect(), den.into_iter().map(c).collect())
    }

    /// Scalar `num(z)/den(z)` with real coefficients.
    pub fn scalar(num: &[f64], den: &[f64]) -> Result<Self> {
        Self::from_real(
            num.iter().map(|v| DMatrix::from_element(1, 1, *v)).collect(),
            den.to_vec(),
        )
    }

    pub fn constant(m: DMatrix<f64>) -> Result<Self> {
        Self::from_real(vec![m], vec![1.0])
    }

    pub fn constant_complex(m: CMat) -> Result<Self> {
        Self::new(vec![m], vec![c(1.0)])
    }

    pub fn identity(n: usize) -> Self {
        Self { num: vec![CMat::identity(n, n)], den: vec![c(1.0)], rows: n, cols: n }
    }

    pub fn zero(rows: usize, cols: usize) -> Self {
        Self { num: vec![CMat::zeros(rows, cols)], den: vec![c(1.0)], rows, cols }
    }

    /// Normalizes `Π_k Q_k(z)⁻¹ P_k(z)` (scalar `Q_k`, matrix `P_k`, factors in
    /// left-to-right order) into a single ratio.
    pub fn from_factors(factors: &[(Vec<DMatrix<f64>>, Vec<f64>)]) -> Result<Self> {
        let mut acc: Option<Self> = None;
        for (p, q) in factors {
            let f = Self::from_real(p.clone(), q.clone())?;
            acc = Some(match acc {
                None => f,
                Some(a) => a.mul(&f)?,
            });
        }
        acc.ok_or_else(|| Error::InvalidInput("no factors".into()))
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
    pub fn numerator(&self) -> &[CMat] {
        &self.num
    }
    pub fn denominator(&self) -> &[Complex64] {
        &self.den
    }
    pub fn numerator_degree(&self) -> usize {
        self.num.len() - 1
    }
    pub fn denominator_degree(&self) -> usize {
        self.den.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.num.iter().all(|m| m.iter().all(|v| v.norm() == 0.0))
    }

    /// True when the function does not depend on `z`.
    pub fn is_constant(&self) -> bool {
        if self.is_zero() {
            return true;
        }
        // N(z) = N₀·d(z)/d₀ exactly.
        let d0 = self.den[0];
        let n0 = &self.num[0];
        let deg = self.num.len().max(self.den.len());
        (0..deg).all(|k| {
            let dk = self.den.get(k).copied().unwrap_or(c(0.0));
            let expected = n0.map(|v| v * dk / d0);
            let got = self.num.get(k).cloned().unwrap_or_else(|| CMat::zeros(self.rows, self.cols));
            (got - expected).iter().all(|v| v.norm() <= 1e-14 * (1.0 + n0.norm()))
        })
    }

    /// True when every coefficient is real.
    pub fn is_real(&self) -> bool {
        self.num.iter().flat_map(|m| m.iter()).chain(self.den.iter()).all(|v| v.im == 0.0)
    }

    pub fn eval_numerator(&self, z: Complex64) -> CMat {
        let mut acc = CMat::zeros(self.rows, self.cols);
        for m in self.num.iter().rev() {
            acc = acc * z + m;
        }
        acc
    }

    pub fn eval_denominator(&self, z: Complex64) -> Complex64 {
        horner(&self.den, z)
    }

    /// `N(z)/d(z)` by Horner evaluation.
    pub fn eval(&self, z: Complex64) -> Result<CMat> {
        let d = self.eval_denominator(z);
        let scale = self.den.iter().fold(0.0_f64, |m, v| m.max(v.norm()));
        if d.norm() <= EVAL_POLE_TOL * scale {
            return Err(Error::PoleProximity { z, magnitude: d.norm() });
        }
        Ok(self.eval_numerator(z) / d)
    }

    /// `R(0)`, always defined.
    pub fn at_zero(&self) -> CMat {
        &self.num[0] / self.den[0]
    }

    pub fn scale(&self, alpha: Complex64) -> Self {
        Self { num: self.num.iter().map(|m| m * alpha).collect(), ..self.clone() }
    }

    /// `z·R(z)`.
    pub fn mul_z(&self) -> Self {
        let mut num = vec![CMat::zeros(self.rows, self.cols)];
        num.extend(self.num.iter().cloned());
        let mut out = Self { num, ..self.clone() };
        out.trim();
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch("cannot add rational functions of different shape".into()));
        }
        if self.den == other.den {
            let len = self.num.len().max(other.num.len());
            let num = (0..len)
                .map(|k| {
                    let a = self.num.get(k).cloned().unwrap_or_else(|| CMat::zeros(self.rows, self.cols));
                    let b = other.num.get(k).cloned().unwrap_or_else(|| CMat::zeros(self.rows, self.cols));
                    a + b
                })
                .collect();
            return Self::new(num, self.den.clone());
        }
        let left = self.num_times_poly(&other.den);
        let right = other.num_times_poly(&self.den);
        let len = left.len().max(right.len());
        let num = (0..len)
            .map(|k| {
                let a = left.get(k).cloned().unwrap_or_else(|| CMat::zeros(self.rows, self.cols));
                let b = right.get(k).cloned().unwrap_or_else(|| CMat::zeros(self.rows, self.cols));
                a + b
            })
            .collect();
        Self::new(num, poly_mul(&self.den, &other.den))
    }

    fn num_times_poly(&self, p: &[Complex64]) -> Vec<CMat> {
        let mut out = vec![CMat::zeros(self.rows, self.cols); self.num.len() + p.len() - 1];
        for (i, m) in self.num.iter().enumerate() {
            for (j, s) in p.iter().enumerate() {
                out[i + j] += m * *s;
            }
        }
        out
    }

    /// Matrix product `self(z)·other(z)`.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch("inner dimensions differ".into()));
        }
        let mut num = vec![CMat::zeros(self.rows, other.cols); self.num.len() + other.num.len() - 1];
        for (i, a) in self.num.iter().enumerate() {
            for (j, b) in other.num.iter().enumerate() {
                num[i + j] += a * b;
            }
        }
        Self::new(num, poly_mul(&self.den, &other.den))
    }

    /// Embeds `self` into a `rows × cols` zero function at the given offset.
    pub fn embed(&self, rows: usize, cols: usize, row_off: usize, col_off: usize) -> Result<Self> {
        if row_off + self.rows > rows || col_off + self.cols > cols {
            return Err(Error::DimensionMismatch("embedding exceeds target shape".into()));
        }
        let num = self
            .num
            .iter()
            .map(|m| {
                let mut big = CMat::zeros(rows, cols);
                big.view_mut((row_off, col_off), (self.rows, self.cols)).copy_from(m);
                big
            })
            .collect();
        Self::new(num, self.den.clone())
    }

    /// Roots of the denominator in the `z` variable.
    pub fn denominator_roots(&self) -> Vec<Complex64> {
        poly_roots(&self.den)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Coef {
    Real(f64),
    Complex([f64; 2]),
}

impl From<Complex64> for Coef {
    fn from(v: Complex64) -> Self {
        if v.im == 0.0 {
            Coef::Real(v.re)
        } else {
            Coef::Complex([v.re, v.im])
        }
    }
}

impl From<Coef> for Complex64 {
    fn from(v: Coef) -> Self {
        match v {
            Coef::Real(re) => c(re),
            Coef::Complex([re, im]) => Complex64::new(re, im),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RationalJson {
    num: Vec<Vec<Vec<Coef>>>,
    den: Vec<Coef>,
}

impl Serialize for RationalMatrixFunction {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let num = self
            .num
            .iter()
            .map(|m| (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| Coef::from(m[(i, j)])).collect()).collect())
            .collect();
        let den = self.den.iter().map(|v| Coef::from(*v)).collect();
        RationalJson { num, den }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for RationalMatrixFunction {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = RationalJson::deserialize(d)?;
        let mut num = Vec::with_capacity(raw.num.len());
        for m in raw.num {
            let rows = m.len();
            let cols = m.first().map_or(0, Vec::len);
            if rows == 0 || cols == 0 || m.iter().any(|r| r.len() != cols) {
                return Err(D::Error::custom("numerator matrices must be nonempty and rectangular"));
            }
            let flat: Vec<Complex64> = m.into_iter().flatten().map(Complex64::from).collect();
            num.push(CMat::from_row_slice(rows, cols, &flat));
        }
        let den = raw.den.into_iter().map(Complex64::from).collect();
        Self::new(num, den).map_err(D::Error::custom)
    }
}

/// `y = D·u + C·x`, `∂₀x = A·x + B·u`, realizing `y = R(∂₀⁻¹)u`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceRealization {
    pub d: CMat,
    pub a: CMat,
    pub b: CMat,
    pub c: CMat,
}

impl StateSpaceRealization {
    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    /// `D + C(sI − A)⁻¹B`.
    pub fn transfer(&self, s: Complex64) -> Result<CMat> {
        if self.n_states() == 0 {
            return Ok(self.d.clone());
        }
        let n = self.n_states();
        let shifted = CMat::identity(n, n) * s - &self.a;
        let solved = shifted
            .lu()
            .solve(&self.b)
            .ok_or_else(|| Error::PoleProximity { z: s.inv(), magnitude: 0.0 })?;
        Ok(&self.d + &self.c * solved)
    }

    pub fn to_real(&self) -> Result<RealRealization> {
        let scale = [&self.d, &self.a, &self.b, &self.c]
            .iter()
            .flat_map(|m| m.iter())
            .fold(1.0_f64, |m, v| m.max(v.norm()));
        let all_real = [&self.d, &self.a, &self.b, &self.c]
            .iter()
            .flat_map(|m| m.iter())
            .all(|v| v.im.abs() <= 1e-12 * scale);
        if !all_real {
            return Err(Error::ComplexRealization);
        }
        let re = |m: &CMat| m.map(|v| v.re);
        Ok(RealRealization { d: re(&self.d), a: re(&self.a), b: re(&self.b), c: re(&self.c) })
    }
}

/// Real-valued counterpart used by the time steppers.
#[derive(Debug, Clone, PartialEq)]
pub struct RealRealization {
    pub d: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

/// One-step propagators of a realization with piecewise-linear input over a
/// step `δ`: `x₁ = Φx₀ + G₀u₀ + G₁u₁`.
#[derive(Debug, Clone)]
pub struct FohPropagator {
    pub phi: DMatrix<f64>,
    pub g0: DMatrix<f64>,
    pub g1: DMatrix<f64>,
}

impl RealRealization {
    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }
    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }
    pub fn outputs(&self) -> usize {
        self.d.nrows()
    }

    /// Exact propagators for first-order-hold input, from the exponential of
    /// the augmented matrix `[[A, B, 0], [0, 0, I/δ], [0, 0, 0]]·δ`.
    pub fn foh_propagator(&self, delta: f64) -> FohPropagator {
        let n = self.n_states();
        let m = self.inputs();
        let mut aug = DMatrix::zeros(n + 2 * m, n + 2 * m);
        aug.view_mut((0, 0), (n, n)).copy_from(&(&self.a * delta));
        aug.view_mut((0, n), (n, m)).copy_from(&(&self.b * delta));
        for i in 0..m {
            aug[(n + i, n + m + i)] = 1.0;
        }
        let e = aug.exp();
        let phi = e.view((0, 0), (n, n)).into_owned();
        let integral = e.view((0, n), (n, m)).into_owned();
        let ramp = e.view((0, n + m), (n, m)).into_owned();
        FohPropagator { phi, g0: &integral - &ramp, g1: ramp }
    }

    /// Drives the realization with `input` from zero state, interpolating the
    /// input linearly between samples and splitting each sample interval into
    /// `substeps` exact sub-steps.
    pub fn simulate(&self, input: &WeightedSignal, substeps: usize) -> Result<WeightedSignal> {
        if input.components() != self.inputs() {
            return Err(Error::DimensionMismatch(format!(
                "realization takes {} inputs, signal has {}",
                self.inputs(),
                input.components()
            )));
        }
        let substeps = substeps.max(1);
        let n = self.n_states();
        let u = input.samples();
        let mut out = DMatrix::zeros(input.len(), self.outputs());
        let prop = self.foh_propagator(input.dt() / substeps as f64);
        let mut x = nalgebra::DVector::zeros(n);
        for k in 0..input.len() {
            let uk = u.row(k).transpose();
            if k > 0 && n > 0 {
                let uprev = u.row(k - 1).transpose();
                for s in 0..substeps {
                    let a0 = s as f64 / substeps as f64;
                    let a1 = (s + 1) as f64 / substeps as f64;
                    let u0 = &uprev * (1.0 - a0) + &uk * a0;
                    let u1 = &uprev * (1.0 - a1) + &uk * a1;
                    x = &prop.phi * &x + &prop.g0 * u0 + &prop.g1 * u1;
                }
            }
            let y = &self.d * &uk + &self.c * &x;
            out.row_mut(k).copy_from(&y.transpose());
        }
        WeightedSignal::new(input.t_min(), input.dt(), input.rho(), out)
    }
}

/// `R(z)` at a complex point, with pole-proximity checking.
pub fn eval_rational(r: &RationalMatrixFunction, z: Complex64) -> Result<CMat> {
    r.eval(z)
}

/// Partial-fraction realization in `s = 1/z`.
///
/// Each simple root `p` of the denominator contributes a pole at `s = 1/p` with
/// residue `N(p) / (−p²·d′(p))`; a numerator exceeding the denominator degree
/// by one contributes an integrator at `s = 0`. The feedthrough is `R(0)`.
pub fn realize_state_space(r: &RationalMatrixFunction) -> Result<StateSpaceRealization> {
    let (rows, cols) = r.dims();
    let d = r.at_zero();
    if r.is_zero() || r.is_constant() {
        return Ok(StateSpaceRealization {
            d,
            a: CMat::zeros(0, 0),
            b: CMat::zeros(0, cols),
            c: CMat::zeros(rows, 0),
        });
    }
    let nd = r.denominator_degree();
    let nn = r.numerator_degree();
    if nn >= nd + 2 {
        return Err(Error::RepeatedPole(c(0.0)));
    }

    let roots = r.denominator_roots();
    let s_poles: Vec<Complex64> = roots.iter().map(|p| p.inv()).collect();
    let mut all: Vec<Complex64> = s_poles.clone();
    if nn == nd + 1 {
        all.push(c(0.0));
    }
    for i in 0..all.len() {
        for j in (i + 1)..all.len() {
            let scale = all[i].norm().max(all[j].norm()).max(1.0);
            if (all[i] - all[j]).norm() <= REPEATED_POLE_TOL * scale {
                return Err(Error::RepeatedPole(all[i]));
            }
        }
    }

    let dden = poly_derivative(r.denominator());
    let mut blocks: Vec<(Complex64, CMat)> = Vec::new();
    for (p, s) in roots.iter().zip(&s_poles) {
        let residue = r.eval_numerator(*p) / (-(p * p) * horner(&dden, *p));
        blocks.push((*s, residue));
    }
    if nn == nd + 1 {
        let top = r.numerator()[nn].clone() / r.denominator()[nd];
        blocks.push((c(0.0), top));
    }

    let ns = blocks.len() * cols;
    let mut a = CMat::zeros(ns, ns);
    let mut b = CMat::zeros(ns, cols);
    let mut cm = CMat::zeros(rows, ns);
    for (k, (s, res)) in blocks.iter().enumerate() {
        let off = k * cols;
        for i in 0..cols {
            a[(off + i, off + i)] = *s;
            b[(off + i, i)] = c(1.0);
        }
        cm.view_mut((0, off), (rows, cols)).copy_from(res);
    }
    Ok(StateSpaceRealization { d, a, b, c: cm })
}

/// Runs the realization in the time domain and compares with the
/// Fourier-Laplace application of `r` to `probe`; returns the maximal
/// deviation relative to the peak of the Fourier-Laplace output.
pub fn validate_realization(
    r: &RationalMatrixFunction,
    s: &StateSpaceRealization,
    probe: &WeightedSignal,
) -> Result<f64> {
    let reference = crate::signal::apply_symbol_fl(r, probe)?;
    let time_path = s.to_real()?.simulate(probe, 4)?;
    let peak = reference.max_abs().max(time_path.max_abs());
    if peak == 0.0 {
        return Ok(0.0);
    }
    let diff = time_path.combine(1.0, &reference, -1.0)?;
    Ok(diff.max_abs() / peak)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: Complex64, b: f64, tol: f64) -> bool {
        (a - c(b)).norm() <= tol
    }

    #[test]
    fn rejects_pole_at_zero() {
        assert!(matches!(RationalMatrixFunction::scalar(&[1.0], &[0.0, 1.0]), Err(Error::NotAnalyticAtZero)));
    }

    #[test]
    fn rejects_mismatched_numerators() {
        let r = RationalMatrixFunction::from_real(vec![DMatrix::zeros(2, 2), DMatrix::zeros(1, 2)], vec![1.0]);
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn identity_polynomial() {
        let r = RationalMatrixFunction::scalar(&[0.0, 1.0], &[1.0]).unwrap();
        assert!(approx(r.eval(c(0.25)).unwrap()[(0, 0)], 0.25, 1e-15));
    }

    #[test]
    fn dpl_with_equal_lags_is_fourier() {
        // (z + n₂)⁻¹ (z + n₁) κ⁻¹ with n₁ = n₂
        let kinv = 0.4;
        let r = RationalMatrixFunction::scalar(&[0.7 * kinv, kinv], &[0.7, 1.0]).unwrap();
        for z in [c(0.0), c(0.3), Complex64::new(0.2, -0.4)] {
            assert!(approx(r.eval(z).unwrap()[(0, 0)], kinv, 1e-14));
        }
        assert!(r.is_constant());
    }

    #[test]
    fn eval_detects_pole() {
        let r = RationalMatrixFunction::scalar(&[1.0], &[2.0, 1.0]).unwrap();
        assert!(matches!(r.eval(c(-2.0)), Err(Error::PoleProximity { .. })));
    }

    #[test]
    fn factors_normalize_to_single_ratio() {
        let one = |v: f64| DMatrix::from_element(1, 1, v);
        let r = RationalMatrixFunction::from_factors(&[
            (vec![one(1.0), one(1.0)], vec![2.0, 1.0]),
            (vec![one(3.0)], vec![1.0, 0.5]),
        ])
        .unwrap();
        let z = Complex64::new(0.1, 0.2);
        let expected = (z + 1.0) / (z + 2.0) * 3.0 / (1.0 + 0.5 * z);
        assert!((r.eval(z).unwrap()[(0, 0)] - expected).norm() < 1e-14);
    }

    #[test]
    fn add_and_mul_z() {
        let a = RationalMatrixFunction::scalar(&[1.0], &[1.0, 1.0]).unwrap();
        let b = RationalMatrixFunction::scalar(&[2.0], &[1.0, 0.5]).unwrap();
        let s = a.add(&b).unwrap().mul_z();
        let z = Complex64::new(0.3, -0.1);
        let expected = z * (1.0 / (1.0 + z) + 2.0 / (1.0 + 0.5 * z));
        assert!((s.eval(z).unwrap()[(0, 0)] - expected).norm() < 1e-14);
    }

    #[test]
    fn constant_realization_has_no_states() {
        let r = RationalMatrixFunction::constant(DMatrix::from_element(1, 1, 0.5)).unwrap();
        let s = realize_state_space(&r).unwrap();
        assert_eq!(s.n_states(), 0);
        assert!(approx(s.d[(0, 0)], 0.5, 0.0));
    }

    #[test]
    fn dpl_one_realization() {
        // n₁ = 0.5, n₂ = 1, κ = 1
        let r = RationalMatrixFunction::scalar(&[0.5, 1.0], &[1.0, 1.0]).unwrap();
        let s = realize_state_space(&r).unwrap();
        assert!(approx(s.d[(0, 0)], 0.5, 1e-15));
        assert_eq!(s.n_states(), 1);
        assert!(approx(s.a[(0, 0)], -1.0, 1e-14));
    }

    #[test]
    fn green_lindsay_realization() {
        // c·(n₀ + z)⁻¹ with c = 1, n₀ = 2
        let r = RationalMatrixFunction::scalar(&[1.0], &[2.0, 1.0]).unwrap();
        let s = realize_state_space(&r).unwrap();
        assert!(approx(s.d[(0, 0)], 0.5, 1e-15));
        assert!(approx(s.a[(0, 0)], -0.5, 1e-14));
    }

    #[test]
    fn integrator_realization() {
        let r = RationalMatrixFunction::scalar(&[0.0, 1.0], &[1.0]).unwrap();
        let s = realize_state_space(&r).unwrap();
        assert_eq!(s.n_states(), 1);
        assert!(approx(s.a[(0, 0)], 0.0, 0.0));
        assert!(approx(s.d[(0, 0)], 0.0, 0.0));
        let z2 = RationalMatrixFunction::scalar(&[0.0, 0.0, 1.0], &[1.0]).unwrap();
        assert!(matches!(realize_state_space(&z2), Err(Error::RepeatedPole(_))));
    }

    #[test]
    fn repeated_pole_rejected() {
        let r = RationalMatrixFunction::scalar(&[1.0], &[1.0, 2.0, 1.0]).unwrap();
        assert!(matches!(realize_state_space(&r), Err(Error::RepeatedPole(_))));
    }

    #[test]
    fn matrix_realization_matches_transfer() {
        let num = vec![
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 2.0]),
            DMatrix::from_row_slice(2, 2, &[0.3, 0.0, -1.0, 0.2]),
            DMatrix::from_row_slice(2, 2, &[0.0, 0.1, 0.4, 0.0]),
        ];
        let r = RationalMatrixFunction::from_real(num, vec![2.0, 3.0, 1.0]).unwrap();
        let s = realize_state_space(&r).unwrap();
        assert_eq!(s.n_states(), 4);
        for k in 0..32 {
            let sv = Complex64::new(0.3 + 0.1 * k as f64, 0.7 * k as f64 - 5.0);
            let lhs = s.transfer(sv).unwrap();
            let rhs = r.eval(sv.inv()).unwrap();
            assert!((&lhs - &rhs).norm() <= 1e-9 * rhs.norm(), "k={k}");
        }
    }

    #[test]
    fn json_roundtrip_with_complex_entries() {
        let r = RationalMatrixFunction::new(
            vec![CMat::from_element(1, 1, Complex64::new(0.0, 2.0)), CMat::from_element(1, 1, c(1.0))],
            vec![c(1.0), c(0.5)],
        )
        .unwrap();
        let text = serde_json::to_string(&r).unwrap();
        assert_eq!(text, r#"{"num":[[[[0.0,2.0]]],[[1.0]]],"den":[1.0,0.5]}"#);
        let back: RationalMatrixFunction = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
        assert!(serde_json::from_str::<RationalMatrixFunction>(r#"{"num":[[[1.0]]],"den":[0.0,1.0]}"#).is_err());
    }
}

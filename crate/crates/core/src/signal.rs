//! Sampled time signals in exponentially weighted L² spaces.
//!
//! A [`WeightedSignal`] lives on a uniform grid `t_min + k·dt` and carries the
//! weight `rho` of the norm `(∫ e^{-2ρt} |f(t)|² dt)^{1/2}` it is measured in.
//! The signal is taken to vanish before `t_min`.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::rational::RationalMatrixFunction;

/// Relative size of the weighted boundary samples tolerated by [`apply_symbol_fl`].
pub const WINDOW_DECAY_TOL: f64 = 1e-8;
/// Minimum |denominator| on the sampled frequency circle.
pub const FL_POLE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSignal {
    t_min: f64,
    dt: f64,
    rho: f64,
    /// One row per grid point, one column per component.
    samples: DMatrix<f64>,
}

impl WeightedSignal {
    pub fn new(t_min: f64, dt: f64, rho: f64, samples: DMatrix<f64>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
        }
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::InvalidInput(format!("rho must be positive, got {rho}")));
        }
        if !t_min.is_finite() {
            return Err(Error::InvalidInput("t_min must be finite".into()));
        }
        if samples.nrows() < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 samples, got {}",
                samples.nrows()
            )));
        }
        if samples.ncols() == 0 {
            return Err(Error::InvalidInput("signal has no components".into()));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite sample".into()));
        }
        Ok(Self { t_min, dt, rho, samples })
    }

    /// Samples `f(t)` on `n` grid points starting at `t_min`.
    pub fn from_fn<F>(t_min: f64, dt: f64, n: usize, rho: f64, components: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(f64, &mut [f64]),
    {
        let mut samples = DMatrix::zeros(n, components);
        let mut row = vec![0.0; components];
        for k in 0..n {
            row.iter_mut().for_each(|v| *v = 0.0);
            f(t_min + k as f64 * dt, &mut row);
            for (j, v) in row.iter().enumerate() {
                samples[(k, j)] = *v;
            }
        }
        Self::new(t_min, dt, rho, samples)
    }

    pub fn scalar_fn<F: Fn(f64) -> f64>(t_min: f64, dt: f64, n: usize, rho: f64, f: F) -> Result<Self> {
        Self::from_fn(t_min, dt, n, rho, 1, |t, out| out[0] = f(t))
    }

    pub fn zeros_like(&self, components: usize) -> Self {
        Self {
            t_min: self.t_min,
            dt: self.dt,
            rho: self.rho,
            samples: DMatrix::zeros(self.len(), components),
        }
    }

    pub fn t_min(&self) -> f64 {
        self.t_min
    }
    pub fn t_max(&self) -> f64 {
        self.time(self.len() - 1)
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }
    pub fn len(&self) -> usize {
        self.samples.nrows()
    }
    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }
    pub fn components(&self) -> usize {
        self.samples.ncols()
    }
    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }
    pub fn time(&self, k: usize) -> f64 {
        self.t_min + k as f64 * self.dt
    }
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |k| self.time(k))
    }

    pub fn with_rho(mut self, rho: f64) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(Error::InvalidInput(format!("rho must be positive, got {rho}")));
        }
        self.rho = rho;
        Ok(self)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self { samples: &self.samples * alpha, ..self.clone() }
    }

    /// Pointwise `alpha·self + beta·other` on a common grid.
    pub fn combine(&self, alpha: f64, other: &Self, beta: f64) -> Result<Self> {
        self.check_same_grid(other)?;
        if self.components() != other.components() {
            return Err(Error::DimensionMismatch(format!(
                "{} vs {} components",
                self.components(),
                other.components()
            )));
        }
        Ok(Self { samples: &self.samples * alpha + &other.samples * beta, ..self.clone() })
    }

    pub fn check_same_grid(&self, other: &Self) -> Result<()> {
        let same = self.len() == other.len()
            && (self.dt - other.dt).abs() <= 1e-12 * self.dt
            && (self.t_min - other.t_min).abs() <= 1e-12 * self.dt.max(self.t_min.abs());
        if same {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "grids ({}, {}, {}) and ({}, {}, {}) differ",
                self.t_min,
                self.dt,
                self.len(),
                other.t_min,
                other.dt,
                other.len()
            )))
        }
    }

    /// Largest absolute sample value over all components.
    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    fn row_norm(&self, k: usize) -> f64 {
        self.samples.row(k).norm()
    }

    /// Trapezoidal quadrature of `∫ e^{-2ρt}|f(t)|² dt`, then square root.
    pub fn weighted_norm(&self) -> f64 {
        let n = self.len();
        let mut acc = 0.0;
        for k in 0..n {
            let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
            let r = self.row_norm(k);
            acc += w * (-2.0 * self.rho * self.time(k)).exp() * r * r;
        }
        (acc * self.dt).sqrt()
    }

    /// Cumulative trapezoidal integral from `t_min`.
    pub fn antiderivative(&self) -> Self {
        let (n, m) = self.samples.shape();
        let mut out = DMatrix::zeros(n, m);
        for j in 0..m {
            let mut acc = 0.0;
            for k in 1..n {
                acc += 0.5 * self.dt * (self.samples[(k - 1, j)] + self.samples[(k, j)]);
                out[(k, j)] = acc;
            }
        }
        Self { samples: out, ..self.clone() }
    }

    /// Header `t,component_0,...`.
    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        self.write_csv_columns(w, "component")
    }

    /// Header `t,{prefix}_0,...`.
    pub fn write_csv_columns<W: Write>(&self, mut w: W, prefix: &str) -> std::io::Result<()> {
        write!(w, "t")?;
        for j in 0..self.components() {
            write!(w, ",{prefix}_{j}")?;
        }
        writeln!(w)?;
        for k in 0..self.len() {
            write!(w, "{:.16e}", self.time(k))?;
            for j in 0..self.components() {
                write!(w, ",{:.16e}", self.samples[(k, j)])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Reads the format produced by [`write_csv`](Self::write_csv) or
    /// [`write_csv_columns`](Self::write_csv_columns). The grid step is
    /// recovered from the first two time stamps.
    pub fn read_csv<R: BufRead>(r: R, rho: f64) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidInput("empty csv".into()))??;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.first() != Some(&"t") {
            return Err(Error::InvalidInput("csv header must start with 't'".into()));
        }
        let prefix = cols.get(1).and_then(|c| c.strip_suffix("_0")).unwrap_or("component");
        for (j, c) in cols.iter().skip(1).enumerate() {
            if *c != format!("{prefix}_{j}") {
                return Err(Error::InvalidInput(format!("unexpected column '{c}'")));
            }
        }
        let m = cols.len() - 1;
        let mut times = Vec::new();
        let mut data = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: std::result::Result<Vec<f64>, _> = line.split(',').map(|s| s.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|e| Error::InvalidInput(format!("bad number: {e}")))?;
            if vals.len() != m + 1 {
                return Err(Error::InvalidInput("ragged csv row".into()));
            }
            times.push(vals[0]);
            data.extend_from_slice(&vals[1..]);
        }
        if times.len() < 2 {
            return Err(Error::InvalidInput("need at least 2 rows".into()));
        }
        let dt = times[1] - times[0];
        Self::new(times[0], dt, rho, DMatrix::from_row_slice(times.len(), m, &data))
    }
}

/// `‖f‖_ρ` by trapezoidal quadrature over the sampled window.
pub fn weighted_norm(f: &WeightedSignal) -> f64 {
    f.weighted_norm()
}

/// `g(t) = ∫_{t_min}^t f(s) ds`, the causal inverse of the time derivative.
pub fn antiderivative(f: &WeightedSignal) -> WeightedSignal {
    f.antiderivative()
}

/// Applies `M(∂₀⁻¹)` through its Fourier-Laplace representation: weight by
/// `e^{-ρt}`, transform, multiply frequency `ω` by `M((iω+ρ)⁻¹)`, transform back,
/// unweight. The weighted signal is zero-padded to the next power of two at
/// least twice its length.
pub fn apply_symbol_fl(m: &RationalMatrixFunction, f: &WeightedSignal) -> Result<WeightedSignal> {
    let (rows, cols) = m.dims();
    if cols != f.components() {
        return Err(Error::DimensionMismatch(format!(
            "symbol has {cols} columns but signal has {} components",
            f.components()
        )));
    }
    let n = f.len();
    let rho = f.rho();

    let weights: Vec<f64> = f.times().map(|t| (-rho * t).exp()).collect();
    let peak = (0..n).map(|k| weights[k] * f.row_norm(k)).fold(0.0_f64, f64::max);
    if peak == 0.0 {
        return Ok(f.zeros_like(rows));
    }
    let boundary = (weights[0] * f.row_norm(0)).max(weights[n - 1] * f.row_norm(n - 1));
    let limit = WINDOW_DECAY_TOL * peak;
    if boundary >= limit {
        return Err(Error::Windowing { boundary, limit, peak });
    }

    let len = (2 * n).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);

    let mut spectra: Vec<Vec<Complex64>> = (0..cols)
        .map(|j| {
            let mut buf = vec![Complex64::new(0.0, 0.0); len];
            for k in 0..n {
                buf[k] = Complex64::new(weights[k] * f.samples[(k, j)], 0.0);
            }
            fwd.process(&mut buf);
            buf
        })
        .collect();

    let mut out_spec = vec![vec![Complex64::new(0.0, 0.0); len]; rows];
    let dw = 2.0 * std::f64::consts::PI / (len as f64 * f.dt());
    for k in 0..len {
        let idx = if k <= len / 2 { k as f64 } else { k as f64 - len as f64 };
        let z = Complex64::new(rho, idx * dw).inv();
        let den = m.eval_denominator(z);
        if den.norm() < FL_POLE_TOL {
            return Err(Error::PoleProximity { z, magnitude: den.norm() });
        }
        let num = m.eval_numerator(z);
        for r in 0..rows {
            let mut acc = Complex64::new(0.0, 0.0);
            for (c, spec) in spectra.iter().enumerate() {
                acc += num[(r, c)] * spec[k];
            }
            out_spec[r][k] = acc / den;
        }
    }
    spectra.clear();

    let mut out = DMatrix::zeros(n, rows);
    let scale = 1.0 / len as f64;
    for (r, buf) in out_spec.iter_mut().enumerate() {
        inv.process(buf);
        for k in 0..n {
            out[(k, r)] = buf[k].re * scale / weights[k];
        }
    }
    WeightedSignal::new(f.t_min(), f.dt(), rho, out)
}

/// Scalar probe `exp(−½((t − 3)/0.4)²)` on `[0, 16]` with `dt = 1/256`, `ρ = 1`.
pub fn standard_pulse() -> WeightedSignal {
    WeightedSignal::scalar_fn(0.0, 1.0 / 256.0, 16 * 256 + 1, 1.0, |t| {
        let r = (t - 3.0) / 0.4;
        (-0.5 * r * r).exp()
    })
    .expect("probe grid is valid")
}

/// `max_{t < t0 - 2dt} |f(t)| / max_t |f(t)|`; zero for the zero signal.
pub fn pre_support_leakage(f: &WeightedSignal, t0: f64) -> f64 {
    let peak = f.max_abs();
    if peak == 0.0 {
        return 0.0;
    }
    let cutoff = t0 - 2.0 * f.dt();
    let mut leak = 0.0_f64;
    for k in 0..f.len() {
        if f.time(k) < cutoff {
            leak = leak.max(f.row_norm(k));
        }
    }
    leak / peak
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump(t: f64, c: f64, w: f64) -> f64 {
        let x = (t - c) / w;
        if x.abs() >= 1.0 {
            0.0
        } else {
            (std::f64::consts::FRAC_PI_2 * x).cos().powi(4)
        }
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(WeightedSignal::new(0.0, 0.0, 1.0, DMatrix::zeros(4, 1)).is_err());
        assert!(WeightedSignal::new(0.0, 0.1, -1.0, DMatrix::zeros(4, 1)).is_err());
        assert!(WeightedSignal::new(0.0, 0.1, 1.0, DMatrix::zeros(1, 1)).is_err());
        let mut bad = DMatrix::zeros(3, 1);
        bad[(1, 0)] = f64::NAN;
        assert!(matches!(WeightedSignal::new(0.0, 0.1, 1.0, bad), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn norm_of_zero_and_unit_signal() {
        let z = WeightedSignal::new(0.0, 0.01, 2.0, DMatrix::zeros(50, 3)).unwrap();
        assert_eq!(z.weighted_norm(), 0.0);

        let dt = 1e-3;
        let one = WeightedSignal::scalar_fn(0.0, dt, 1001, 1.0, |_| 1.0).unwrap();
        let exact = ((1.0 - (-2.0_f64).exp()) / 2.0).sqrt();
        assert!((one.weighted_norm() - exact).abs() < dt * dt);
        assert!((exact - 0.657520).abs() < 1e-6);
    }

    #[test]
    fn norm_is_homogeneous() {
        let f = WeightedSignal::scalar_fn(0.0, 0.01, 400, 1.5, |t| bump(t, 2.0, 1.0) - 0.3 * t).unwrap();
        let n = f.weighted_norm();
        assert!((f.scaled(3.0).weighted_norm() - 3.0 * n).abs() < 1e-12 * n);
        assert!((f.scaled(-3.0).weighted_norm() - 3.0 * n).abs() < 1e-12 * n);
    }

    #[test]
    fn antiderivative_of_constant_is_linear() {
        let f = WeightedSignal::scalar_fn(0.0, 0.01, 201, 1.0, |_| 1.0).unwrap();
        let g = f.antiderivative();
        for (k, t) in g.times().enumerate() {
            assert!((g.samples()[(k, 0)] - t).abs() < 1e-12);
        }
        let z = f.scaled(0.0).antiderivative();
        assert_eq!(z.max_abs(), 0.0);
    }

    #[test]
    fn identity_symbol_roundtrips() {
        let f = WeightedSignal::from_fn(0.0, 0.01, 800, 1.0, 2, |t, out| {
            out[0] = bump(t, 3.0, 1.5);
            out[1] = -2.0 * bump(t, 4.0, 0.7);
        })
        .unwrap();
        let id = RationalMatrixFunction::identity(2);
        let g = apply_symbol_fl(&id, &f).unwrap();
        let err = g.combine(1.0, &f, -1.0).unwrap().max_abs();
        assert!(err <= 1e-10 * f.max_abs(), "err {err}");
    }

    #[test]
    fn constant_symbol_scales() {
        let f = WeightedSignal::scalar_fn(0.0, 0.01, 800, 1.0, |t| bump(t, 3.0, 1.5)).unwrap();
        let kinv = RationalMatrixFunction::constant(DMatrix::from_element(1, 1, 0.25)).unwrap();
        let g = apply_symbol_fl(&kinv, &f).unwrap();
        let err = g.combine(1.0, &f.scaled(0.25), -1.0).unwrap().max_abs();
        assert!(err <= 1e-10 * f.max_abs());
    }

    #[test]
    fn windowing_is_enforced() {
        let f = WeightedSignal::scalar_fn(0.0, 0.01, 100, 1.0, |_| 1.0).unwrap();
        let id = RationalMatrixFunction::identity(1);
        assert!(matches!(apply_symbol_fl(&id, &f), Err(Error::Windowing { .. })));
    }

    #[test]
    fn pole_on_sampled_circle_is_rejected() {
        // 1/(1 - z) has its pole at z = 1 = (i·0 + 1)⁻¹ when rho = 1.
        let r = RationalMatrixFunction::scalar(&[1.0], &[1.0, -1.0]).unwrap();
        let f = WeightedSignal::scalar_fn(0.0, 0.01, 800, 1.0, |t| bump(t, 3.0, 1.5)).unwrap();
        assert!(matches!(apply_symbol_fl(&r, &f), Err(Error::PoleProximity { .. })));
    }

    #[test]
    fn csv_roundtrip_keeps_digits() {
        let f = WeightedSignal::from_fn(0.5, 0.125, 5, 1.0, 2, |t, out| {
            out[0] = t.sin();
            out[1] = 1.0 / 3.0;
        })
        .unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,component_0,component_1\n"));
        let g = WeightedSignal::read_csv(std::io::Cursor::new(buf), 1.0).unwrap();
        assert_eq!(f, g);
        let mut buf = Vec::new();
        f.write_csv_columns(&mut buf, "x").unwrap();
        assert!(buf.starts_with(b"t,x_0,x_1\n"));
        assert_eq!(WeightedSignal::read_csv(std::io::Cursor::new(buf), 1.0).unwrap(), f);
    }
}

//! Reference solver in the eigenbasis of the staggered difference operator.
//!
//! With spatially constant coefficients and no `Γ`/`ζ₀` coupling, the
//! discrete sine vectors on the nodes and cosine vectors on the faces
//! diagonalize `D_grad`, and every mode obeys a small linear system
//! `E·w′ + K·w = g` (field plus auxiliary states). Its singular part is
//! eliminated algebraically; the rest is propagated with matrix exponentials
//! and two-point Gauss quadrature of the forcing on a fine sub-grid.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolution::{EvolutionProblem, Field, Forcing, ForcingSource, Trajectory};
use crate::material::{MaterialLaw, SPECTRAL_CUTOFF};
use crate::rational::{realize_state_space, RealRealization};
use crate::signal::WeightedSignal;
use crate::spatial::Grid1D;

/// Default refinement of the oracle time step relative to the solver's.
pub const ORACLE_SUBSTEPS: usize = 64;

/// Orthonormal eigenvectors of the staggered difference operator:
/// `D_grad·ŝ_k = λ_k·ĉ_k` with `λ_k = (2/h)·sin(kπ/2n)`.
#[derive(Debug, Clone)]
pub struct DiscreteModes {
    /// Node vectors `ŝ_k`, `k = 1..n−1`, as columns.
    pub sines: DMatrix<f64>,
    /// Face vectors `ĉ_k`, `k = 0..n−1`, as columns (`ĉ₀` is constant).
    pub cosines: DMatrix<f64>,
    /// `λ_k` for `k = 1..n−1`.
    pub wavenumbers: Vec<f64>,
}

pub fn discrete_modes(grid: &Grid1D) -> DiscreteModes {
    let n = grid.n_cells();
    let nf = n as f64;
    let pi = std::f64::consts::PI;
    let sines = DMatrix::from_fn(n - 1, n - 1, |i, k| {
        (2.0 / nf).sqrt() * ((k + 1) as f64 * pi * (i + 1) as f64 / nf).sin()
    });
    let cosines = DMatrix::from_fn(n, n, |j, k| {
        if k == 0 {
            1.0 / nf.sqrt()
        } else {
            (2.0 / nf).sqrt() * (k as f64 * pi * (j as f64 + 0.5) / nf).cos()
        }
    });
    let wavenumbers = (1..n).map(|k| 2.0 / grid.h() * (k as f64 * pi / (2.0 * nf)).sin()).collect();
    DiscreteModes { sines, cosines, wavenumbers }
}

/// The dense system of one mode: `E·w′ + K·w = g` with `w` the mode's field
/// coordinates followed by the auxiliary states.
#[derive(Debug, Clone)]
pub struct ModeSystem {
    pub k: usize,
    /// Field coordinates present in this mode, as offsets in `(v, σ, Θ, q)`.
    pub fields: Vec<usize>,
    pub e: DMatrix<f64>,
    pub k_mat: DMatrix<f64>,
    /// The skew part alone.
    pub a_k: DMatrix<f64>,
}

struct Realizations {
    theta: Option<RealRealization>,
    q: Option<RealRealization>,
}

fn check_supported(law: &MaterialLaw) -> Result<()> {
    if !law.is_homogeneous() {
        return Err(Error::OracleUnsupported("coefficients vary in space".into()));
    }
    let cell = &law.cells()[0];
    if cell.gamma.amax() != 0.0 || cell.zeta0.amax() != 0.0 {
        return Err(Error::OracleUnsupported(
            "Gamma and zeta0 couple node and face modes; the modal solver needs both zero".into(),
        ));
    }
    Ok(())
}

fn realizations(law: &MaterialLaw) -> Result<Realizations> {
    let cell = &law.cells()[0];
    let real = |r: &crate::rational::RationalMatrixFunction| -> Result<Option<RealRealization>> {
        if r.is_zero() {
            Ok(None)
        } else {
            Ok(Some(realize_state_space(r)?.to_real()?))
        }
    };
    Ok(Realizations { theta: real(&cell.a1)?, q: real(&cell.a2)? })
}

fn build_mode(k: usize, lambda: f64, law: &MaterialLaw, re: &Realizations) -> ModeSystem {
    let m0 = law.m0(0);
    let fields: Vec<usize> = if k == 0 { vec![1, 3] } else { vec![0, 1, 2, 3] };
    let nf = fields.len();
    let mut attached: Vec<(usize, &RealRealization)> = Vec::new();
    for (local, &f) in fields.iter().enumerate() {
        match f {
            2 => {
                if let Some(r) = &re.theta {
                    attached.push((local, r));
                }
            }
            3 => {
                if let Some(r) = &re.q {
                    attached.push((local, r));
                }
            }
            _ => {}
        }
    }
    let n_aux: usize = attached.iter().map(|(_, r)| r.n_states()).sum();
    let dim = nf + n_aux;
    let mut e = DMatrix::zeros(dim, dim);
    let mut a_k = DMatrix::zeros(nf, nf);
    for (i, &fi) in fields.iter().enumerate() {
        for (j, &fj) in fields.iter().enumerate() {
            e[(i, j)] = m0[(fi, fj)];
        }
    }
    if k > 0 {
        // (v,σ)=λ, (σ,v)=−λ, (Θ,q)=−λ, (q,Θ)=λ
        a_k[(0, 1)] = lambda;
        a_k[(1, 0)] = -lambda;
        a_k[(2, 3)] = -lambda;
        a_k[(3, 2)] = lambda;
    }
    let mut km = DMatrix::zeros(dim, dim);
    km.view_mut((0, 0), (nf, nf)).copy_from(&a_k);
    let mut off = nf;
    for (local, r) in attached {
        let m = r.n_states();
        km[(local, local)] += r.d[(0, 0)];
        for s in 0..m {
            km[(local, off + s)] += r.c[(0, s)];
            km[(off + s, local)] -= r.b[(s, 0)];
            e[(off + s, off + s)] = 1.0;
        }
        km.view_mut((off, off), (m, m)).copy_from(&(-&r.a));
        off += m;
    }
    ModeSystem { k, fields, e, k_mat: km, a_k }
}

/// `w(t) = out_a·a(t) + out_g·g(t)` with `a′ = G·a + H·g`.
struct Reduced {
    g: DMatrix<f64>,
    h: DMatrix<f64>,
    out_a: DMatrix<f64>,
    out_g: DMatrix<f64>,
}

fn reduce(sys: &ModeSystem) -> Result<Reduced> {
    let dim = sys.e.nrows();
    let eig = SymmetricEigen::new(sys.e.clone());
    let top = eig.eigenvalues.amax();
    let range: Vec<usize> = (0..dim).filter(|&i| eig.eigenvalues[i] > SPECTRAL_CUTOFF * top).collect();
    let null: Vec<usize> = (0..dim).filter(|&i| eig.eigenvalues[i] <= SPECTRAL_CUTOFF * top).collect();
    if eig.eigenvalues.iter().any(|&v| v < -SPECTRAL_CUTOFF * top) {
        return Err(Error::OracleUnsupported("mass matrix is indefinite".into()));
    }
    let cols = |idx: &[usize]| -> DMatrix<f64> {
        let mut m = DMatrix::zeros(dim, idx.len());
        for (c, &i) in idx.iter().enumerate() {
            m.set_column(c, &eig.eigenvectors.column(i));
        }
        m
    };
    let q = cols(&range);
    let z = cols(&null);
    let lam_inv = DMatrix::from_diagonal(&DVector::from_iterator(range.len(), range.iter().map(|&i| 1.0 / eig.eigenvalues[i])));
    let k = &sys.k_mat;
    let qt = q.transpose();
    if null.is_empty() {
        return Ok(Reduced {
            g: -(&lam_inv * &qt * k * &q),
            h: &lam_inv * &qt,
            out_a: q,
            out_g: DMatrix::zeros(dim, dim),
        });
    }
    let zt = z.transpose();
    let w = (&zt * k * &z)
        .try_inverse()
        .ok_or_else(|| Error::OracleUnsupported("algebraic part of a mode is singular".into()))?;
    let coupling = &qt * k * &z * &w;
    let s = &qt * k * &q - &coupling * &zt * k * &q;
    let t = &qt - &coupling * &zt;
    let out_a = &q - &z * &w * &zt * k * &q;
    let out_g = &z * &w * &zt;
    Ok(Reduced { g: -(&lam_inv * s), h: &lam_inv * t, out_a, out_g })
}

/// Integrates every mode with step `dt / substeps` and reassembles the
/// trajectory on the problem's time grid.
pub fn spectral_solve(problem: &EvolutionProblem) -> Result<Trajectory> {
    spectral_solve_with(problem, ORACLE_SUBSTEPS)
}

pub fn spectral_solve_with(problem: &EvolutionProblem, substeps: usize) -> Result<Trajectory> {
    let law = &problem.law;
    check_supported(law)?;
    let grid = *problem.grid();
    let modes = discrete_modes(&grid);
    let re = realizations(law)?;
    let steps = problem.steps();
    let substeps = substeps.max(1);
    let delta = problem.dt / substeps as f64;
    let gauss = [0.5 - 3f64.sqrt() / 6.0, 0.5 + 3f64.sqrt() / 6.0];
    let [ov, os, ot, oq] = grid.block_offsets();
    let offsets = [ov, os, ot, oq];

    // Forcing in modal coordinates at the Gauss points of every sub-step:
    // forcing(t) = Σ_r vec_r · shape_r(t), with vec_r in field layout.
    let (spatial, temporal) = separate_forcing(problem, steps, substeps, delta, &gauss);

    let mut states = DMatrix::zeros(steps + 1, grid.n_dofs());
    for k in 0..grid.n_cells() {
        let lambda = if k == 0 { 0.0 } else { modes.wavenumbers[k - 1] };
        let sys = build_mode(k, lambda, law, &re);
        let dim = sys.e.nrows();
        let nf = sys.fields.len();
        let basis = |field: usize| -> DVector<f64> {
            match field {
                0 | 2 => modes.sines.column(k - 1).into_owned(),
                _ => modes.cosines.column(k).into_owned(),
            }
        };
        // project each spatial forcing vector onto this mode
        let g_terms: Vec<DVector<f64>> = spatial
            .iter()
            .map(|vec| {
                let mut g = DVector::zeros(dim);
                for (local, &f) in sys.fields.iter().enumerate() {
                    let size = grid.block_sizes()[f];
                    g[local] = basis(f).dot(&vec.rows(offsets[f], size));
                }
                g
            })
            .collect();
        if g_terms.iter().all(|g| g.amax() == 0.0) {
            continue;
        }
        let red = reduce(&sys)?;
        let na = red.g.ncols();
        let phi = (&red.g * delta).exp();
        let psi: Vec<DMatrix<f64>> = gauss.iter().map(|&c| (&red.g * (delta * (1.0 - c))).exp() * &red.h * (0.5 * delta)).collect();
        let drive: Vec<[DVector<f64>; 2]> = g_terms.iter().map(|g| [&psi[0] * g, &psi[1] * g]).collect();
        let out_g_terms: Vec<DVector<f64>> = g_terms.iter().map(|g| &red.out_g * g).collect();

        let phi_v: Vec<f64> = phi.transpose().iter().copied().collect();
        let mut a = vec![0.0; na];
        let mut next = vec![0.0; na];
        let mut coords = DMatrix::zeros(steps + 1, nf);
        for n in 0..steps {
            for s in 0..substeps {
                let idx = n * substeps + s;
                for i in 0..na {
                    let row = &phi_v[i * na..(i + 1) * na];
                    next[i] = row.iter().zip(&a).map(|(p, x)| p * x).sum();
                }
                for (r, d) in drive.iter().enumerate() {
                    let (s0, s1) = (temporal[r][2 * idx], temporal[r][2 * idx + 1]);
                    if s0 != 0.0 || s1 != 0.0 {
                        for i in 0..na {
                            next[i] += d[0][i] * s0 + d[1][i] * s1;
                        }
                    }
                }
                std::mem::swap(&mut a, &mut next);
            }
            let t = (n + 1) as f64 * problem.dt;
            let av = DVector::from_column_slice(&a);
            let mut w = &red.out_a * av;
            for (r, og) in out_g_terms.iter().enumerate() {
                let sv = time_factor(problem, r, t);
                if sv != 0.0 {
                    w.axpy(sv, og, 1.0);
                }
            }
            for local in 0..nf {
                coords[(n + 1, local)] = w[local];
            }
        }
        for (local, &f) in sys.fields.iter().enumerate() {
            let b = basis(f);
            let off = offsets[f];
            for n in 0..=steps {
                let c = coords[(n, local)];
                if c != 0.0 {
                    for (i, bi) in b.iter().enumerate() {
                        states[(n, off + i)] += c * bi;
                    }
                }
            }
        }
    }
    Ok(Trajectory { grid, dt: problem.dt, rho: problem.rho, time_weight: 0.5, states, aux: None })
}

/// Splits the forcing into spatial vectors and their time factors sampled at
/// the two Gauss points of every sub-step. Sampled forcings contribute one
/// term per grid column with hat-function time factors.
fn separate_forcing(
    problem: &EvolutionProblem,
    steps: usize,
    substeps: usize,
    delta: f64,
    gauss: &[f64; 2],
) -> (Vec<DVector<f64>>, Vec<Vec<f64>>) {
    let grid = problem.grid();
    let total = steps * substeps;
    let gauss_times = || (0..total).flat_map(move |i| gauss.iter().map(move |c| (i as f64 + c) * delta));
    match &problem.forcing {
        ForcingSource::Analytic(f) => {
            let spatial = f
                .terms
                .iter()
                .map(|t| {
                    let mut v = DVector::zeros(grid.n_dofs());
                    let off = Forcing::block_offset(t.block, grid);
                    let p = Forcing::profile_vector(t, grid);
                    v.rows_mut(off, p.len()).copy_from(&p);
                    v
                })
                .collect();
            let temporal = f.terms.iter().map(|t| gauss_times().map(|s| t.shape.value(s)).collect()).collect();
            (spatial, temporal)
        }
        ForcingSource::Sampled(sig) => {
            // hat functions on the sample grid
            let n = sig.len();
            let spatial: Vec<DVector<f64>> = (0..n).map(|k| sig.samples().row(k).transpose()).collect();
            let mut temporal = vec![vec![0.0; 2 * total]; n];
            for (gi, s) in gauss_times().enumerate() {
                if let Some((k, a)) = hat(sig, s) {
                    temporal[k][gi] = 1.0 - a;
                    temporal[k + 1][gi] = a;
                }
            }
            (spatial, temporal)
        }
    }
}

/// Left sample index and interpolation weight of `t`, if inside the record.
fn hat(sig: &WeightedSignal, t: f64) -> Option<(usize, f64)> {
    let x = (t - sig.t_min()) / sig.dt();
    if sig.len() < 2 || x < 0.0 || x > (sig.len() - 1) as f64 {
        return None;
    }
    let k = (x.floor() as usize).min(sig.len() - 2);
    Some((k, x - k as f64))
}

fn time_factor(problem: &EvolutionProblem, term: usize, t: f64) -> f64 {
    match &problem.forcing {
        ForcingSource::Analytic(f) => f.terms[term].shape.value(t),
        ForcingSource::Sampled(sig) => match hat(sig, t) {
            Some((k, a)) if k == term => 1.0 - a,
            Some((k, a)) if k + 1 == term => a,
            _ => 0.0,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    /// `(field, ‖a − b‖_ρ / ‖b‖_ρ)`.
    pub fields: Vec<(String, f64)>,
    pub overall: f64,
}

fn relative(diff: f64, reference: f64) -> f64 {
    if diff == 0.0 {
        0.0
    } else if reference == 0.0 {
        f64::INFINITY
    } else {
        diff / reference
    }
}

/// Weighted space-time L² errors of `a` relative to the reference `b`.
pub fn compare(a: &Trajectory, b: &Trajectory) -> Result<Comparison> {
    if a.grid != b.grid || a.dt != b.dt || a.len() != b.len() || a.rho != b.rho {
        return Err(Error::GridMismatch("trajectories live on different grids".into()));
    }
    let mut fields = Vec::new();
    for f in Field::ALL {
        let fa = a.field(f);
        let fb = b.field(f);
        let d = fa.combine(1.0, &fb, -1.0)?;
        fields.push((f.name().to_string(), relative(d.weighted_norm(), fb.weighted_norm())));
    }
    let d = a.as_signal()?.combine(1.0, &b.as_signal()?, -1.0)?;
    let overall = relative(d.weighted_norm(), b.as_signal()?.weighted_norm());
    Ok(Comparison { fields, overall })
}

/// Subsamples a trajectory on a grid `factor` times coarser in time.
pub fn coarsen(t: &Trajectory, factor: usize) -> Result<Trajectory> {
    if factor == 0 || (t.len() - 1) % factor != 0 {
        return Err(Error::GridMismatch(format!("cannot coarsen {} steps by {factor}", t.len() - 1)));
    }
    let rows = (t.len() - 1) / factor + 1;
    let states = DMatrix::from_fn(rows, t.states.ncols(), |i, j| t.states[(i * factor, j)]);
    Ok(Trajectory { states, dt: t.dt * factor as f64, aux: None, ..t.clone() })
}

//! 1-D staggered grid for the spatial operator.
//!
//! `v` and `Θ` live on the `n − 1` interior nodes `x = ih` (the boundary
//! nodes carry the homogeneous Dirichlet values and are omitted); `σ` and
//! `q` live on the `n` cell centers `x = (j + ½)h`. The state vector is laid
//! out block by block as `[v, σ, Θ, q]`.

use std::io::Write;

use nalgebra::DVector;
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    length: f64,
    n_cells: usize,
}

impl Grid1D {
    pub fn new(length: f64, n_cells: usize) -> Result<Self> {
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::InvalidInput(format!("domain length must be positive, got {length}")));
        }
        if n_cells < 2 {
            return Err(Error::InvalidInput(format!("n_cells must be at least 2, got {n_cells}")));
        }
        Ok(Self { length, n_cells })
    }

    pub fn length(&self) -> f64 {
        self.length
    }
    pub fn n_cells(&self) -> usize {
        self.n_cells
    }
    pub fn h(&self) -> f64 {
        self.length / self.n_cells as f64
    }
    pub fn n_nodes(&self) -> usize {
        self.n_cells - 1
    }
    pub fn n_faces(&self) -> usize {
        self.n_cells
    }
    /// Interior node positions.
    pub fn nodes(&self) -> Vec<f64> {
        (1..self.n_cells).map(|i| i as f64 * self.h()).collect()
    }
    /// Cell-center positions.
    pub fn faces(&self) -> Vec<f64> {
        (0..self.n_cells).map(|j| (j as f64 + 0.5) * self.h()).collect()
    }
    pub fn block_sizes(&self) -> [usize; 4] {
        let (n, f) = (self.n_nodes(), self.n_faces());
        [n, f, n, f]
    }
    pub fn block_offsets(&self) -> [usize; 4] {
        let (n, f) = (self.n_nodes(), self.n_faces());
        [0, n, n + f, 2 * n + f]
    }
    pub fn n_dofs(&self) -> usize {
        2 * (self.n_nodes() + self.n_faces())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSpatialOperator {
    pub grid: Grid1D,
    /// Node → face gradient, `n × (n − 1)`.
    pub d_grad: CsrMatrix<f64>,
    /// Face → node divergence, `−D_gradᵀ`.
    pub d_div: CsrMatrix<f64>,
    pub a_h: CsrMatrix<f64>,
}

pub fn build_operators(grid: &Grid1D) -> Result<DiscreteSpatialOperator> {
    let (nn, nf) = (grid.n_nodes(), grid.n_faces());
    let ih = 1.0 / grid.h();
    let mut grad = CooMatrix::new(nf, nn);
    for j in 0..nf {
        // face j sits between nodes j and j + 1 (boundary nodes omitted)
        if j >= 1 {
            grad.push(j, j - 1, -ih);
        }
        if j < nn {
            grad.push(j, j, ih);
        }
    }
    let d_grad = CsrMatrix::from(&grad);
    let d_div = d_grad.transpose() * -1.0;

    let [ov, os, ot, oq] = grid.block_offsets();
    let n = grid.n_dofs();
    let mut a = CooMatrix::new(n, n);
    for (j, k, &g) in d_grad.triplet_iter() {
        // (σ,v) = −D_grad, (v,σ) = −D_div, (q,Θ) = D_grad, (Θ,q) = D_div
        a.push(os + j, ov + k, -g);
        a.push(ov + k, os + j, g);
        a.push(oq + j, ot + k, g);
        a.push(ot + k, oq + j, -g);
    }
    Ok(DiscreteSpatialOperator { grid: *grid, d_grad, d_div, a_h: CsrMatrix::from(&a) })
}

impl DiscreteSpatialOperator {
    pub fn apply(&self, u: &DVector<f64>) -> DVector<f64> {
        spmv(&self.a_h, u)
    }

    /// Coordinate text export: one `row col value` line per stored entry,
    /// zero-based indices.
    pub fn write_coordinate<W: Write>(&self, w: W) -> std::io::Result<()> {
        write_coordinate(&self.a_h, w)
    }
}

pub fn spmv(a: &CsrMatrix<f64>, u: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(a.nrows());
    for (i, row) in a.row_iter().enumerate() {
        out[i] = row.col_indices().iter().zip(row.values()).map(|(&j, &v)| v * u[j]).sum();
    }
    out
}

pub fn write_coordinate<W: Write>(a: &CsrMatrix<f64>, mut w: W) -> std::io::Result<()> {
    for (i, j, v) in a.triplet_iter() {
        writeln!(w, "{i} {j} {v:.16e}")?;
    }
    Ok(())
}

/// True iff `A + Aᵀ` has no nonzero entry, compared bitwise.
pub fn is_exactly_skew(a: &CsrMatrix<f64>) -> bool {
    if a.nrows() != a.ncols() {
        return false;
    }
    let at = a.transpose();
    let sum = a + &at;
    sum.values().iter().all(|v| *v == 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkewCheck {
    /// `max |⟨Au, w⟩ + ⟨u, Aw⟩|`.
    pub max_abs: f64,
    /// Same, divided by `‖u‖‖w‖‖A‖_F` per pair.
    pub max_relative: f64,
}

/// Pairing residual over 100 random pairs drawn from a fixed seed.
pub fn verify_skew_adjoint(a: &CsrMatrix<f64>) -> SkewCheck {
    verify_skew_adjoint_seeded(a, 100, 0x5eed)
}

pub fn verify_skew_adjoint_seeded(a: &CsrMatrix<f64>, pairs: usize, seed: u64) -> SkewCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = a.ncols();
    let norm_a = a.values().iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut out = SkewCheck { max_abs: 0.0, max_relative: 0.0 };
    for _ in 0..pairs {
        let u = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let w = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let r = (spmv(a, &u).dot(&w) + u.dot(&spmv(a, &w))).abs();
        let denom = u.norm() * w.norm() * norm_a;
        out.max_abs = out.max_abs.max(r);
        if denom > 0.0 {
            out.max_relative = out.max_relative.max(r / denom);
        }
    }
    out
}

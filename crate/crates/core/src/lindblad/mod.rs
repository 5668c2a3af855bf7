//! GKSL generator assembly and its action on density matrices.
//!
//! The generator is
//!
//! ```text
//! dρ/dt = -i[H, ρ] + Σ_a ( L_a ρ L_a^† - ½ L_a^† L_a ρ - ½ ρ L_a^† L_a )
//! ```
//!
//! with ħ = 1 and every rate already folded into its jump operator
//! (`L = sqrt(2κ) A`). The action is evaluated with sparse operator products
//! against the dense state; the `dim² × dim²` superoperator is only built on
//! request, as a test oracle, for small spaces.
//!
//! Vectorization convention for [`LindbladGenerator::materialize_superoperator`]:
//! column stacking, `vec(ρ)[i + j·n] = ρ[i, j]`, so that
//! `vec(A X B) = (B^T ⊗ A) vec(X)`.

mod integrator;

pub use integrator::{evolve, evolve_observed, IntegrationStats, IntegratorConfig, IntegratorMethod, Trajectory};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{DynamicsError, SpaceError};
use crate::sparse::CsrMatrix;
use crate::tensorspace::{CompositeSpace, DensityMatrix, OperatorMatrix, HERMITICITY_TOL};

/// Largest `total_dim` for which the superoperator may be materialized.
pub const SUPEROPERATOR_DIM_LIMIT: usize = 64;

const PAR_THRESHOLD: usize = 1 << 14;

/// A jump operator with its rate prefactor folded in.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpOperator {
    label: String,
    matrix: OperatorMatrix,
}

impl JumpOperator {
    pub fn new(label: impl Into<String>, matrix: OperatorMatrix) -> Self {
        Self {
            label: label.into(),
            matrix,
        }
    }

    /// `sqrt(2 * rate) * op`.
    pub fn from_rate(label: impl Into<String>, rate: f64, op: &OperatorMatrix) -> Self {
        Self::new(label, op.scale((2.0 * rate).sqrt()))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn matrix(&self) -> &OperatorMatrix {
        &self.matrix
    }
}

/// Hamiltonian plus jump operators on a common space.
#[derive(Clone, Debug)]
pub struct LindbladGenerator {
    space: CompositeSpace,
    hamiltonian: OperatorMatrix,
    jumps: Vec<JumpOperator>,
    /// `H - (i/2) Σ L^† L`
    effective: CsrMatrix,
    /// Diagonals of the diagonal jumps: `(L ρ L^†)_ij = l_i conj(l_j) ρ_ij`.
    diagonal: Vec<Vec<Complex64>>,
    general: Vec<CsrMatrix>,
}

/// Scratch buffers reused across Liouvillian applications.
#[derive(Clone, Debug)]
pub struct Workspace {
    product: DMatrix<Complex64>,
    jump_sum: DMatrix<Complex64>,
}

impl Workspace {
    pub fn new(dim: usize) -> Self {
        Self {
            product: DMatrix::zeros(dim, dim),
            jump_sum: DMatrix::zeros(dim, dim),
        }
    }
}

impl LindbladGenerator {
    pub fn new(hamiltonian: OperatorMatrix, jumps: Vec<JumpOperator>) -> Result<Self, DynamicsError> {
        let space = hamiltonian.space().clone();
        let dev = hamiltonian.hermiticity_deviation();
        if dev > HERMITICITY_TOL {
            return Err(DynamicsError::NonHermitianHamiltonian(dev));
        }
        if jumps.iter().any(|j| j.matrix.space() != &space) {
            return Err(SpaceError::SpaceMismatch.into());
        }

        let n = space.total_dim();
        let mut decay = CsrMatrix::zeros(n, n);
        let mut diagonal = Vec::new();
        let mut general = Vec::new();
        for j in &jumps {
            let l = j.matrix.matrix();
            decay = decay.add(&l.adjoint().matmul(l));
            if l.is_diagonal() {
                diagonal.push((0..n).map(|i| l.get(i, i)).collect());
            } else {
                general.push(l.clone());
            }
        }
        let effective = hamiltonian.matrix().add(&decay.scale(Complex64::new(0.0, -0.5)));
        Ok(Self {
            space,
            hamiltonian,
            jumps,
            effective,
            diagonal,
            general,
        })
    }

    pub fn space(&self) -> &CompositeSpace {
        &self.space
    }

    pub fn hamiltonian(&self) -> &OperatorMatrix {
        &self.hamiltonian
    }

    pub fn jumps(&self) -> &[JumpOperator] {
        &self.jumps
    }

    pub fn dim(&self) -> usize {
        self.space.total_dim()
    }

    /// `dρ/dt` for a density matrix on the generator's space.
    pub fn liouvillian_apply(&self, rho: &DensityMatrix) -> Result<DMatrix<Complex64>, DynamicsError> {
        if rho.space() != &self.space {
            return Err(SpaceError::SpaceMismatch.into());
        }
        Ok(self.apply_hermitian(rho.entries()))
    }

    /// `dρ/dt` assuming `rho` is Hermitian. The result is exactly Hermitian.
    pub fn apply_hermitian(&self, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        let mut ws = Workspace::new(n);
        self.apply_hermitian_into(rho, &mut out, &mut ws);
        out
    }

    /// In-place variant of [`Self::apply_hermitian`].
    ///
    /// Uses `ρ H_eff^† = (H_eff ρ)^†` so the coherent part costs one
    /// sparse-dense product. A general jump adds `(L ρ) L^†`, the adjoint of
    /// `L ρ L^†`, to a running sum that is symmetrized once at the end.
    /// Diagonal jumps are applied entrywise in a single pass.
    pub fn apply_hermitian_into(&self, rho: &DMatrix<Complex64>, out: &mut DMatrix<Complex64>, ws: &mut Workspace) {
        let n = self.dim();
        assert_eq!(rho.shape(), (n, n));

        self.effective.mul_dense_into(rho, &mut ws.product);
        let minus_i = Complex64::new(0.0, -1.0);
        combine_with_adjoint(&ws.product, out, |_, a, b| minus_i * a + (minus_i * b).conj());

        if !self.diagonal.is_empty() {
            let diag = &self.diagonal;
            let dephase = |(j, col): (usize, &mut [Complex64])| {
                let lj: Vec<Complex64> = diag.iter().map(|l| l[j].conj()).collect();
                let rho_col = &rho.as_slice()[j * n..(j + 1) * n];
                for (i, (o, r)) in col.iter_mut().zip(rho_col).enumerate() {
                    let mut w = Complex64::new(0.0, 0.0);
                    for (l, c) in diag.iter().zip(&lj) {
                        w += l[i] * c;
                    }
                    *o += w * r;
                }
            };
            let os = out.as_mut_slice();
            if n * n >= PAR_THRESHOLD {
                os.par_chunks_mut(n).enumerate().for_each(dephase);
            } else {
                os.chunks_mut(n).enumerate().for_each(dephase);
            }
        }

        if !self.general.is_empty() {
            ws.jump_sum.fill(Complex64::new(0.0, 0.0));
            for l in &self.general {
                l.mul_dense_into(rho, &mut ws.product);
                l.add_dense_mul_adjoint(&ws.product, &mut ws.jump_sum);
            }
            combine_with_adjoint(&ws.jump_sum, out, |o, a, b| o + (a + b.conj()) * 0.5);
        }
    }

    /// Generator action on an arbitrary (not necessarily Hermitian) matrix.
    pub fn apply_general(&self, x: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let i = Complex64::i();
        let xa = x.adjoint();
        let mut out = self.effective.mul_dense(x) * (-i) + self.effective.mul_dense(&xa).adjoint() * i;
        for l in &self.diagonal {
            for c in 0..x.ncols() {
                for r in 0..x.nrows() {
                    out[(r, c)] += l[r] * x[(r, c)] * l[c].conj();
                }
            }
        }
        for l in &self.general {
            out += l.mul_dense(&l.mul_dense(&xa).adjoint());
        }
        out
    }

    /// Explicit superoperator `S` with `vec(dρ/dt) = S vec(ρ)` in the
    /// column-stacking convention.
    pub fn materialize_superoperator(&self) -> Result<DMatrix<Complex64>, DynamicsError> {
        let n = self.dim();
        if n > SUPEROPERATOR_DIM_LIMIT {
            return Err(DynamicsError::TooLarge {
                dim: n,
                limit: SUPEROPERATOR_DIM_LIMIT,
            });
        }
        let id = DMatrix::<Complex64>::identity(n, n);
        let h = self.hamiltonian.to_dense();
        let minus_i = Complex64::new(0.0, -1.0);
        let mut s = (id.kronecker(&h) - h.transpose().kronecker(&id)) * minus_i;
        for jump in &self.jumps {
            let l = jump.matrix.to_dense();
            let k = l.adjoint() * &l;
            s += l.conjugate().kronecker(&l);
            s -= (id.kronecker(&k) + k.transpose().kronecker(&id)) * Complex64::new(0.5, 0.0);
        }
        Ok(s)
    }
}

/// Column-stacking vectorization.
pub fn vectorize(m: &DMatrix<Complex64>) -> nalgebra::DVector<Complex64> {
    nalgebra::DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vectorize`] for an `n × n` matrix.
pub fn unvectorize(v: &nalgebra::DVector<Complex64>, n: usize) -> DMatrix<Complex64> {
    DMatrix::from_column_slice(n, n, v.as_slice())
}

/// Edge of the square tiles used when reading a matrix transposed.
const TILE: usize = 32;

/// `out[i, j] = f(out[i, j], a[i, j], a[j, i])` over a square matrix, read in
/// tiles so the transposed access stays in cache.
fn combine_with_adjoint<F>(a: &DMatrix<Complex64>, out: &mut DMatrix<Complex64>, f: F)
where
    F: Fn(Complex64, Complex64, Complex64) -> Complex64 + Sync,
{
    let n = a.nrows();
    let src = a.as_slice();
    let strip = |(s, cols): (usize, &mut [Complex64])| {
        let j0 = s * TILE;
        let width = cols.len() / n;
        for i0 in (0..n).step_by(TILE) {
            let i1 = (i0 + TILE).min(n);
            for dj in 0..width {
                let j = j0 + dj;
                for i in i0..i1 {
                    let o = &mut cols[dj * n + i];
                    *o = f(*o, src[j * n + i], src[i * n + j]);
                }
            }
        }
    };
    let dst = out.as_mut_slice();
    if n * n >= PAR_THRESHOLD {
        dst.par_chunks_mut(n * TILE).enumerate().for_each(strip);
    } else {
        dst.chunks_mut(n * TILE).enumerate().for_each(strip);
    }
}

//! Subsystem spaces, elementary operators and their embedding into
//! composite tensor-product spaces.
//!
//! Ordering convention: the first-listed subsystem is the slowest-varying
//! (leftmost) Kronecker factor. A basis index of a composite space is
//! therefore the mixed-radix number whose most significant digit belongs to
//! subsystem 0.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::SpaceError;
use crate::sparse::CsrMatrix;

/// Max entrywise `|ρ - ρ^†|` accepted for a density matrix.
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Max `|Tr ρ - 1|` accepted at construction.
pub const TRACE_TOL: f64 = 1e-10;
/// Most negative eigenvalue tolerated before a state counts as unphysical.
pub const POSITIVITY_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SubsystemKind {
    Boson { truncation: usize },
    Qubit,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SubsystemSpec {
    kind: SubsystemKind,
    label: String,
}

impl SubsystemSpec {
    /// A bosonic mode truncated to the Fock states `|0>..|d-1>`.
    pub fn boson(label: impl Into<String>, truncation: usize) -> Result<Self, SpaceError> {
        if truncation < 2 {
            return Err(SpaceError::InvalidDimension {
                dim: truncation,
                reason: "boson truncation must be at least 2",
            });
        }
        Ok(Self {
            kind: SubsystemKind::Boson { truncation },
            label: label.into(),
        })
    }

    pub fn qubit(label: impl Into<String>) -> Self {
        Self {
            kind: SubsystemKind::Qubit,
            label: label.into(),
        }
    }

    pub fn kind(&self) -> SubsystemKind {
        self.kind
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            SubsystemKind::Boson { truncation } => truncation,
            SubsystemKind::Qubit => 2,
        }
    }
}

/// Ordered list of subsystems spanning a tensor-product Hilbert space.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CompositeSpace {
    subsystems: Vec<SubsystemSpec>,
    total_dim: usize,
}

impl CompositeSpace {
    pub fn new(subsystems: Vec<SubsystemSpec>) -> Result<Self, SpaceError> {
        if subsystems.is_empty() {
            return Err(SpaceError::InvalidDimension {
                dim: 0,
                reason: "a composite space needs at least one subsystem",
            });
        }
        for (i, s) in subsystems.iter().enumerate() {
            if subsystems[..i].iter().any(|o| o.label == s.label) {
                return Err(SpaceError::DuplicateLabel(s.label.clone()));
            }
        }
        let total_dim = subsystems
            .iter()
            .try_fold(1usize, |acc, s| acc.checked_mul(s.dim()))
            .ok_or(SpaceError::InvalidDimension {
                dim: usize::MAX,
                reason: "total dimension overflows",
            })?;
        Ok(Self { subsystems, total_dim })
    }

    /// Single-subsystem space.
    pub fn single(spec: SubsystemSpec) -> Self {
        let total_dim = spec.dim();
        Self {
            subsystems: vec![spec],
            total_dim,
        }
    }

    pub fn subsystems(&self) -> &[SubsystemSpec] {
        &self.subsystems
    }

    pub fn dims(&self) -> Vec<usize> {
        self.subsystems.iter().map(SubsystemSpec::dim).collect()
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn len(&self) -> usize {
        self.subsystems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsystems.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.subsystems.iter().position(|s| s.label == label)
    }

    /// The space spanned by the listed subsystems, in their original order.
    pub fn subspace(&self, sites: &[usize]) -> Result<Self, SpaceError> {
        let mut sorted = sites.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.is_empty() {
            return Err(SpaceError::InvalidSelection("empty subsystem set".into()));
        }
        if let Some(&bad) = sorted.iter().find(|&&s| s >= self.len()) {
            return Err(SpaceError::SiteOutOfRange {
                site: bad,
                len: self.len(),
            });
        }
        Self::new(sorted.iter().map(|&s| self.subsystems[s].clone()).collect())
    }

    /// Concatenation `self ⊗ other`; labels must stay unique.
    pub fn tensor(&self, other: &Self) -> Result<Self, SpaceError> {
        Self::new(self.subsystems.iter().chain(&other.subsystems).cloned().collect())
    }
}

impl fmt::Display for CompositeSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .subsystems
            .iter()
            .map(|s| match s.kind {
                SubsystemKind::Boson { truncation } => format!("{}:boson({truncation})", s.label),
                SubsystemKind::Qubit => format!("{}:qubit", s.label),
            })
            .collect();
        write!(f, "[{}] (dim {})", parts.join(", "), self.total_dim)
    }
}

/// Square complex operator on a composite space, stored sparsely.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    space: CompositeSpace,
    matrix: CsrMatrix,
}

impl OperatorMatrix {
    pub fn new(space: CompositeSpace, matrix: CsrMatrix) -> Result<Self, SpaceError> {
        let n = space.total_dim();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(SpaceError::DimensionMismatch {
                expected: n,
                got: matrix.nrows().max(matrix.ncols()),
            });
        }
        Ok(Self { space, matrix })
    }

    pub fn from_dense(space: CompositeSpace, dense: &DMatrix<Complex64>) -> Result<Self, SpaceError> {
        Self::new(space, CsrMatrix::from_dense(dense))
    }

    pub fn identity(space: &CompositeSpace) -> Self {
        Self {
            matrix: CsrMatrix::identity(space.total_dim()),
            space: space.clone(),
        }
    }

    pub fn zeros(space: &CompositeSpace) -> Self {
        Self {
            matrix: CsrMatrix::zeros(space.total_dim(), space.total_dim()),
            space: space.clone(),
        }
    }

    pub fn space(&self) -> &CompositeSpace {
        &self.space
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.space.total_dim()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.matrix.get(i, j)
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        self.matrix.to_dense()
    }

    pub fn adjoint(&self) -> Self {
        Self {
            space: self.space.clone(),
            matrix: self.matrix.adjoint(),
        }
    }

    pub fn scale(&self, c: impl Into<Complex64>) -> Self {
        Self {
            space: self.space.clone(),
            matrix: self.matrix.scale(c.into()),
        }
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        self.matrix.hermiticity_deviation()
    }

    /// Re-tags the operator with another space of the same total dimension.
    pub fn on_space(self, space: CompositeSpace) -> Result<Self, SpaceError> {
        Self::new(space, self.matrix)
    }
}

impl Add for &OperatorMatrix {
    type Output = OperatorMatrix;

    /// Panics when the operands live on different spaces.
    fn add(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        assert_eq!(self.space, rhs.space, "operator spaces differ");
        OperatorMatrix {
            space: self.space.clone(),
            matrix: self.matrix.add(&rhs.matrix),
        }
    }
}

impl Sub for &OperatorMatrix {
    type Output = OperatorMatrix;

    fn sub(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        self + &rhs.scale(-1.0)
    }
}

impl Mul for &OperatorMatrix {
    type Output = OperatorMatrix;

    fn mul(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        assert_eq!(self.space, rhs.space, "operator spaces differ");
        OperatorMatrix {
            space: self.space.clone(),
            matrix: self.matrix.matmul(&rhs.matrix),
        }
    }
}

/// Bosonic lowering operator on the `d`-level truncated Fock space:
/// `A[i, i+1] = sqrt(i+1)`.
pub fn annihilation_op(d: usize) -> Result<OperatorMatrix, SpaceError> {
    let space = CompositeSpace::single(SubsystemSpec::boson("mode", d)?);
    let m = CsrMatrix::from_triplets(d, d, (0..d - 1).map(|i| (i, i + 1, Complex64::new(((i + 1) as f64).sqrt(), 0.0))));
    OperatorMatrix::new(space, m)
}

pub fn creation_op(d: usize) -> Result<OperatorMatrix, SpaceError> {
    Ok(annihilation_op(d)?.adjoint())
}

/// `a^† a` on the truncated space.
pub fn number_op(d: usize) -> Result<OperatorMatrix, SpaceError> {
    let a = annihilation_op(d)?;
    Ok(&a.adjoint() * &a)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pauli {
    X,
    Y,
    Z,
    /// `|0><1|`
    Minus,
    /// `|1><0|`
    Plus,
}

/// 2x2 Pauli or ladder matrix in the `{|0>, |1>}` basis.
pub fn pauli_op(which: Pauli) -> OperatorMatrix {
    let c = Complex64::new;
    let entries: Vec<(usize, usize, Complex64)> = match which {
        Pauli::X => vec![(0, 1, c(1.0, 0.0)), (1, 0, c(1.0, 0.0))],
        Pauli::Y => vec![(0, 1, c(0.0, -1.0)), (1, 0, c(0.0, 1.0))],
        Pauli::Z => vec![(0, 0, c(1.0, 0.0)), (1, 1, c(-1.0, 0.0))],
        Pauli::Minus => vec![(0, 1, c(1.0, 0.0))],
        Pauli::Plus => vec![(1, 0, c(1.0, 0.0))],
    };
    OperatorMatrix {
        space: CompositeSpace::single(SubsystemSpec::qubit("qubit")),
        matrix: CsrMatrix::from_triplets(2, 2, entries),
    }
}

/// Lifts a single-subsystem operator to `I ⊗ .. ⊗ op ⊗ .. ⊗ I` with `op`
/// at position `site`.
pub fn embed(op: &OperatorMatrix, site: usize, space: &CompositeSpace) -> Result<OperatorMatrix, SpaceError> {
    let dims = space.dims();
    if site >= dims.len() {
        return Err(SpaceError::SiteOutOfRange { site, len: dims.len() });
    }
    if op.dim() != dims[site] {
        return Err(SpaceError::DimensionMismatch {
            expected: dims[site],
            got: op.dim(),
        });
    }
    let left: usize = dims[..site].iter().product();
    let right: usize = dims[site + 1..].iter().product();
    let m = CsrMatrix::identity(left).kron(op.matrix()).kron(&CsrMatrix::identity(right));
    OperatorMatrix::new(space.clone(), m)
}

/// Hermitian, unit-trace, positive semidefinite operator on a composite space.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    space: CompositeSpace,
    entries: DMatrix<Complex64>,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(space: CompositeSpace, entries: DMatrix<Complex64>) -> Result<Self, SpaceError> {
        let n = space.total_dim();
        if entries.shape() != (n, n) {
            return Err(SpaceError::DimensionMismatch {
                expected: n,
                got: entries.nrows().max(entries.ncols()),
            });
        }
        let rho = Self { space, entries };
        let herm = rho.hermiticity_deviation();
        if herm > HERMITICITY_TOL {
            return Err(SpaceError::InvalidState(format!("not Hermitian (deviation {herm:e})")));
        }
        let tr = rho.trace();
        if (tr - Complex64::new(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(SpaceError::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min_eig = rho.min_eigenvalue();
        if min_eig < -POSITIVITY_TOL {
            return Err(SpaceError::InvalidState(format!("negative eigenvalue {min_eig:e}")));
        }
        Ok(rho)
    }

    /// Wraps a matrix without validation. Used for propagated states whose
    /// trace drift is tracked as a diagnostic rather than rejected.
    pub fn new_unchecked(space: CompositeSpace, entries: DMatrix<Complex64>) -> Self {
        debug_assert_eq!(entries.shape(), (space.total_dim(), space.total_dim()));
        Self { space, entries }
    }

    /// `|ψ><ψ|` for a normalized state vector.
    pub fn from_pure(space: CompositeSpace, psi: &DVector<Complex64>) -> Result<Self, SpaceError> {
        if psi.len() != space.total_dim() {
            return Err(SpaceError::DimensionMismatch {
                expected: space.total_dim(),
                got: psi.len(),
            });
        }
        let norm = psi.norm();
        if (norm - 1.0).abs() > TRACE_TOL {
            return Err(SpaceError::InvalidState(format!("state vector norm {norm} differs from 1")));
        }
        Ok(Self {
            space,
            entries: psi * psi.adjoint(),
        })
    }

    pub fn space(&self) -> &CompositeSpace {
        &self.space
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub(crate) fn entries_mut(&mut self) -> &mut DMatrix<Complex64> {
        &mut self.entries
    }

    pub fn into_entries(self) -> DMatrix<Complex64> {
        self.entries
    }

    pub fn dim(&self) -> usize {
        self.space.total_dim()
    }

    pub fn trace(&self) -> Complex64 {
        self.entries.trace()
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        hermiticity_deviation(&self.entries)
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.entries)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    /// `ρ ⊗ σ` on the concatenated space.
    pub fn tensor(&self, other: &Self) -> Result<Self, SpaceError> {
        Ok(Self {
            space: self.space.tensor(&other.space)?,
            entries: self.entries.kronecker(&other.entries),
        })
    }
}

/// `|0...0><0...0|` on the composite space.
pub fn ground_state(space: &CompositeSpace) -> DensityMatrix {
    let n = space.total_dim();
    let mut entries = DMatrix::zeros(n, n);
    entries[(0, 0)] = Complex64::new(1.0, 0.0);
    DensityMatrix::new_unchecked(space.clone(), entries)
}

pub fn hermiticity_deviation(m: &DMatrix<Complex64>) -> f64 {
    let n = m.nrows();
    let mut dev: f64 = 0.0;
    for j in 0..n {
        for i in j..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

/// Ascending eigenvalues of `(m + m^†)/2`.
pub fn hermitian_eigenvalues(m: &DMatrix<Complex64>) -> Vec<f64> {
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

//! Reduced states and correlation measures: purity, von Neumann entropy,
//! mutual information, negativity and two-qubit quantum discord.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CorrelationError, SpaceError};
use crate::tensorspace::{hermitian_eigenvalues, CompositeSpace, DensityMatrix, POSITIVITY_TOL};

/// Eigenvalues of a partial transpose below `-NEGATIVITY_CUTOFF` count as negative.
pub const NEGATIVITY_CUTOFF: f64 = 1e-12;
/// Slack for clamping eigenvalues into `[0, 1]` before taking logarithms.
pub const EIGEN_CLAMP_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogBase {
    #[default]
    Bits,
    Nats,
}

impl LogBase {
    fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Bits => x.log2(),
            LogBase::Nats => x.ln(),
        }
    }
}

/// Two disjoint, non-empty sets of subsystem indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bipartition {
    side_a: Vec<usize>,
    side_b: Vec<usize>,
}

impl Bipartition {
    pub fn new(side_a: impl IntoIterator<Item = usize>, side_b: impl IntoIterator<Item = usize>) -> Result<Self, CorrelationError> {
        let a: BTreeSet<usize> = side_a.into_iter().collect();
        let b: BTreeSet<usize> = side_b.into_iter().collect();
        if a.is_empty() || b.is_empty() {
            return Err(CorrelationError::InvalidPartition("both sides must be non-empty".into()));
        }
        if let Some(x) = a.intersection(&b).next() {
            return Err(CorrelationError::InvalidPartition(format!("subsystem {x} appears on both sides")));
        }
        Ok(Self {
            side_a: a.into_iter().collect(),
            side_b: b.into_iter().collect(),
        })
    }

    pub fn side_a(&self) -> &[usize] {
        &self.side_a
    }

    pub fn side_b(&self) -> &[usize] {
        &self.side_b
    }

    pub fn swapped(&self) -> Self {
        Self {
            side_a: self.side_b.clone(),
            side_b: self.side_a.clone(),
        }
    }

    /// All subsystems on either side, ascending.
    pub fn union(&self) -> Vec<usize> {
        let mut u: Vec<usize> = self.side_a.iter().chain(&self.side_b).copied().collect();
        u.sort_unstable();
        u
    }

    pub fn validate_for(&self, space: &CompositeSpace) -> Result<(), CorrelationError> {
        match self.union().into_iter().find(|&s| s >= space.len()) {
            Some(site) => Err(SpaceError::SiteOutOfRange { site, len: space.len() }.into()),
            None => Ok(()),
        }
    }

    fn covers(&self, space: &CompositeSpace) -> bool {
        self.side_a.len() + self.side_b.len() == space.len()
    }

    /// The same split expressed in the indices of the reduced space spanned
    /// by [`Self::union`].
    fn relabeled(&self) -> Self {
        let u = self.union();
        let pos = |s: &usize| u.iter().position(|x| x == s).unwrap();
        Self {
            side_a: self.side_a.iter().map(pos).collect(),
            side_b: self.side_b.iter().map(pos).collect(),
        }
    }
}

/// Mixed-radix digits of `index` for the given dimensions (slowest first).
fn digits(mut index: usize, dims: &[usize], out: &mut [usize]) {
    for (d, o) in dims.iter().zip(out.iter_mut()).rev() {
        *o = index % d;
        index /= d;
    }
}

fn compose(digits: &[usize], dims: &[usize]) -> usize {
    digits.iter().zip(dims).fold(0, |acc, (x, d)| acc * d + x)
}

/// Reduced density matrix on `keep`, subsystems in their original order.
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix, CorrelationError> {
    let space = rho.space();
    let reduced_space = space.subspace(keep)?;
    let dims = space.dims();
    let kept: Vec<usize> = (0..dims.len()).filter(|s| keep.contains(s)).collect();
    let traced: Vec<usize> = (0..dims.len()).filter(|s| !keep.contains(s)).collect();
    let kept_dims: Vec<usize> = kept.iter().map(|&s| dims[s]).collect();
    let traced_dims: Vec<usize> = traced.iter().map(|&s| dims[s]).collect();
    let dk: usize = kept_dims.iter().product();
    let dt: usize = traced_dims.iter().product();

    // full index for each (kept, traced) pair
    let mut full = vec![0usize; dk * dt];
    let mut d = vec![0usize; dims.len()];
    let mut dkd = vec![0usize; kept.len()];
    let mut dtd = vec![0usize; traced.len()];
    for a in 0..dk {
        digits(a, &kept_dims, &mut dkd);
        for t in 0..dt {
            digits(t, &traced_dims, &mut dtd);
            for (s, &x) in kept.iter().zip(&dkd) {
                d[*s] = x;
            }
            for (s, &x) in traced.iter().zip(&dtd) {
                d[*s] = x;
            }
            full[a * dt + t] = compose(&d, &dims);
        }
    }

    let m = rho.entries();
    let out = DMatrix::from_fn(dk, dk, |a, b| {
        (0..dt).fold(Complex64::new(0.0, 0.0), |acc, t| acc + m[(full[a * dt + t], full[b * dt + t])])
    });
    Ok(DensityMatrix::new_unchecked(reduced_space, out))
}

/// Transpose on the subsystems of `part.side_b()`. The partition must cover
/// every subsystem of the state's space.
pub fn partial_transpose(rho: &DensityMatrix, part: &Bipartition) -> Result<DMatrix<Complex64>, CorrelationError> {
    let space = rho.space();
    part.validate_for(space)?;
    if !part.covers(space) {
        return Err(CorrelationError::InvalidPartition("partition must cover every subsystem".into()));
    }
    Ok(transpose_sites(rho.entries(), &space.dims(), part.side_b()))
}

fn transpose_sites(m: &DMatrix<Complex64>, dims: &[usize], sites: &[usize]) -> DMatrix<Complex64> {
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, n);
    let mut di = vec![0usize; dims.len()];
    let mut dj = vec![0usize; dims.len()];
    for j in 0..n {
        digits(j, dims, &mut dj);
        for i in 0..n {
            digits(i, dims, &mut di);
            let (mut ti, mut tj) = (di.clone(), dj.clone());
            for &s in sites {
                ti[s] = dj[s];
                tj[s] = di[s];
            }
            out[(compose(&ti, dims), compose(&tj, dims))] = m[(i, j)];
        }
    }
    out
}

/// Sum of the magnitudes of the negative eigenvalues of `ρ^{T_B}`.
///
/// Subsystems outside the partition are traced out first.
pub fn negativity(rho: &DensityMatrix, part: &Bipartition) -> Result<f64, CorrelationError> {
    part.validate_for(rho.space())?;
    let (state, split) = if part.covers(rho.space()) {
        (rho.clone(), part.clone())
    } else {
        (partial_trace(rho, &part.union())?, part.relabeled())
    };
    let pt = partial_transpose(&state, &split)?;
    Ok(hermitian_eigenvalues(&pt)
        .into_iter()
        .filter(|&l| l < -NEGATIVITY_CUTOFF)
        .map(|l| -l)
        .sum())
}

/// `Tr ρ²`.
pub fn purity(rho: &DensityMatrix) -> f64 {
    let m = rho.entries();
    // Tr(ρ ρ) = Σ_ij ρ_ij ρ_ji
    let n = m.nrows();
    let mut s = Complex64::new(0.0, 0.0);
    for j in 0..n {
        for i in 0..n {
            s += m[(i, j)] * m[(j, i)];
        }
    }
    s.re
}

fn entropy_of(eigenvalues: &[f64], base: LogBase) -> Result<f64, CorrelationError> {
    let mut s = 0.0;
    for &l in eigenvalues {
        if l < -POSITIVITY_TOL {
            return Err(CorrelationError::NegativeEigenvalue(l));
        }
        let l = if l < EIGEN_CLAMP_TOL { l.max(0.0) } else { l };
        let l = if l > 1.0 && l < 1.0 + EIGEN_CLAMP_TOL { 1.0 } else { l };
        if l > 0.0 {
            s -= l * base.log(l);
        }
    }
    Ok(s.max(0.0))
}

/// `-Σ λ log₂ λ`.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> Result<f64, CorrelationError> {
    von_neumann_entropy_in(rho, LogBase::Bits)
}

pub fn von_neumann_entropy_in(rho: &DensityMatrix, base: LogBase) -> Result<f64, CorrelationError> {
    entropy_of(&rho.eigenvalues(), base)
}

/// `S(ρ_A) + S(ρ_B) - S(ρ_AB)`, clamped at zero.
pub fn mutual_information(rho: &DensityMatrix, part: &Bipartition) -> Result<f64, CorrelationError> {
    mutual_information_in(rho, part, LogBase::Bits)
}

pub fn mutual_information_in(rho: &DensityMatrix, part: &Bipartition, base: LogBase) -> Result<f64, CorrelationError> {
    part.validate_for(rho.space())?;
    let joint = if part.covers(rho.space()) {
        rho.clone()
    } else {
        partial_trace(rho, &part.union())?
    };
    let s_a = von_neumann_entropy_in(&partial_trace(rho, part.side_a())?, base)?;
    let s_b = von_neumann_entropy_in(&partial_trace(rho, part.side_b())?, base)?;
    let s_ab = von_neumann_entropy_in(&joint, base)?;
    let mi = s_a + s_b - s_ab;
    if mi < -EIGEN_CLAMP_TOL {
        log::debug!("mutual information {mi:e} below zero; clamping");
    }
    Ok(mi.max(0.0))
}

/// Search settings for the classical-correlation maximization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscordOptions {
    /// Polar grid points over `θ ∈ [0, π/2]`.
    pub theta_points: usize,
    /// Azimuthal grid points over `φ ∈ [0, 2π)`.
    pub phi_points: usize,
    /// Number of best grid points refined by pattern search.
    pub refine_candidates: usize,
    pub base: LogBase,
}

impl Default for DiscordOptions {
    fn default() -> Self {
        Self {
            theta_points: 64,
            phi_points: 128,
            refine_candidates: 4,
            base: LogBase::Bits,
        }
    }
}

/// Quantum discord of a two-qubit state with projective measurements on
/// `measured_side` (0 or 1).
pub fn discord_two_qubit(rho: &DensityMatrix, measured_side: usize) -> Result<f64, CorrelationError> {
    discord_two_qubit_with(rho, measured_side, &DiscordOptions::default())
}

pub fn discord_two_qubit_with(rho: &DensityMatrix, measured_side: usize, opts: &DiscordOptions) -> Result<f64, CorrelationError> {
    let dims = rho.space().dims();
    if dims != [2, 2] {
        return Err(CorrelationError::NotTwoQubit(dims));
    }
    if measured_side > 1 {
        return Err(SpaceError::SiteOutOfRange { site: measured_side, len: 2 }.into());
    }
    let other = 1 - measured_side;
    let mi = mutual_information_in(rho, &Bipartition::new([0], [1])?, opts.base)?;
    let s_other = von_neumann_entropy_in(&partial_trace(rho, &[other])?, opts.base)?;

    // ρ[(a,b),(a',b')] with a the measured index
    let m = rho.entries();
    let mut t = [[[[Complex64::new(0.0, 0.0); 2]; 2]; 2]; 2];
    for (a, ta) in t.iter_mut().enumerate() {
        for (b, tb) in ta.iter_mut().enumerate() {
            for (a2, tc) in tb.iter_mut().enumerate() {
                for (b2, v) in tc.iter_mut().enumerate() {
                    let (i, j) = if measured_side == 0 { (2 * a + b, 2 * a2 + b2) } else { (2 * b + a, 2 * b2 + a2) };
                    *v = m[(i, j)];
                }
            }
        }
    }
    let classical = |theta: f64, phi: f64| classical_correlation(&t, s_other, theta, phi, opts.base);

    let nt = opts.theta_points.max(2);
    let np = opts.phi_points.max(1);
    let dtheta = std::f64::consts::FRAC_PI_2 / (nt - 1) as f64;
    let dphi = 2.0 * std::f64::consts::PI / np as f64;
    let grid: Vec<(f64, f64, f64)> = (0..nt * np)
        .into_par_iter()
        .map(|k| {
            let (th, ph) = ((k / np) as f64 * dtheta, (k % np) as f64 * dphi);
            (classical(th, ph), th, ph)
        })
        .collect();
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&x, &y| grid[y].0.total_cmp(&grid[x].0).then(x.cmp(&y)));

    let mut best = grid[order[0]].0;
    for &k in order.iter().take(opts.refine_candidates.max(1)) {
        let (v, th, ph) = grid[k];
        best = best.max(pattern_search(&classical, v, th, ph, dtheta, dphi));
    }
    Ok((mi - best).max(0.0))
}

/// Compass search maximizing `f` from `(theta, phi)`.
fn pattern_search(f: &impl Fn(f64, f64) -> f64, mut value: f64, mut theta: f64, mut phi: f64, dtheta: f64, dphi: f64) -> f64 {
    let (mut st, mut sp) = (dtheta, dphi);
    while st > 1e-10 || sp > 1e-10 {
        let mut moved = false;
        for (ct, cp) in [(st, 0.0), (-st, 0.0), (0.0, sp), (0.0, -sp)] {
            let v = f(theta + ct, phi + cp);
            if v > value {
                value = v;
                theta += ct;
                phi += cp;
                moved = true;
                break;
            }
        }
        if !moved {
            st *= 0.5;
            sp *= 0.5;
        }
    }
    value
}

/// `S(ρ_other) - Σ_± p_± S(ρ_other|±)` for the measurement along the Bloch
/// direction `(θ, φ)`.
fn classical_correlation(t: &[[[[Complex64; 2]; 2]; 2]; 2], s_other: f64, theta: f64, phi: f64, base: LogBase) -> f64 {
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let e = Complex64::from_polar(1.0, phi);
    let up = [Complex64::new(c, 0.0), e * s];
    let down = [-e.conj() * s, Complex64::new(c, 0.0)];
    let mut conditional = 0.0;
    for u in [up, down] {
        let mut block = Matrix2::<Complex64>::zeros();
        for b in 0..2 {
            for b2 in 0..2 {
                let mut acc = Complex64::new(0.0, 0.0);
                for a in 0..2 {
                    for a2 in 0..2 {
                        acc += u[a].conj() * t[a][b][a2][b2] * u[a2];
                    }
                }
                block[(b, b2)] = acc;
            }
        }
        let p = block.trace().re;
        if p > 1e-15 {
            conditional += p * entropy_2x2(&(block / Complex64::new(p, 0.0)), base);
        }
    }
    s_other - conditional
}

/// Entropy of a 2x2 Hermitian unit-trace matrix from its closed-form spectrum.
fn entropy_2x2(m: &Matrix2<Complex64>, base: LogBase) -> f64 {
    let a = m[(0, 0)].re;
    let d = m[(1, 1)].re;
    let b = m[(0, 1)];
    let tr = a + d;
    let disc = ((a - d) * (a - d) + 4.0 * b.norm_sqr()).sqrt();
    [(tr + disc) / 2.0, (tr - disc) / 2.0]
        .into_iter()
        .map(|l| l.clamp(0.0, 1.0))
        .filter(|&l| l > 0.0)
        .map(|l| -l * base.log(l))
        .sum()
}

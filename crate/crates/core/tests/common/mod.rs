//! Seeded random operators and dense reference computations shared by the
//! integration tests.

#![allow(dead_code)]

use nalgebra::DMatrix;
use qprobe::lindblad::{JumpOperator, LindbladGenerator};
use qprobe::tensorspace::{CompositeSpace, DensityMatrix, OperatorMatrix, SubsystemSpec};
use qprobe::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Dense = DMatrix<Complex64>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn random_matrix(rng: &mut impl Rng, n: usize, scale: f64) -> Dense {
    DMatrix::from_fn(n, n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale)
}

pub fn random_hermitian(rng: &mut impl Rng, n: usize, scale: f64) -> Dense {
    let g = random_matrix(rng, n, scale);
    (&g + g.adjoint()) * c(0.5, 0.0)
}

/// `G G^† / Tr(G G^†)`, full rank with probability one.
pub fn random_density(rng: &mut impl Rng, n: usize) -> Dense {
    let g = random_matrix(rng, n, 1.0);
    let rho = &g * g.adjoint();
    let tr = rho.trace();
    rho / tr
}

pub fn random_state(rng: &mut impl Rng, space: &CompositeSpace) -> DensityMatrix {
    DensityMatrix::new(space.clone(), random_density(rng, space.total_dim())).unwrap()
}

/// Random unitary from the QR factor of a random complex matrix.
pub fn random_unitary(rng: &mut impl Rng, n: usize) -> Dense {
    random_matrix(rng, n, 1.0).qr().q()
}

/// A mixed space of qubits and small bosons with `total_dim <= max_dim`.
pub fn random_space(rng: &mut impl Rng, max_dim: usize) -> CompositeSpace {
    loop {
        let n_sub = rng.random_range(1..=3);
        let mut subs = Vec::new();
        let mut dim = 1;
        for k in 0..n_sub {
            let s = if rng.random_bool(0.5) {
                SubsystemSpec::qubit(format!("q{k}"))
            } else {
                SubsystemSpec::boson(format!("b{k}"), rng.random_range(2..=4)).unwrap()
            };
            dim *= s.dim();
            subs.push(s);
        }
        if dim <= max_dim && dim >= 2 {
            return CompositeSpace::new(subs).unwrap();
        }
    }
}

/// Random Hermitian `H` plus one to three dense jump operators, all of
/// order-one norm.
pub fn random_generator(rng: &mut impl Rng, space: &CompositeSpace) -> LindbladGenerator {
    let n = space.total_dim();
    let h = OperatorMatrix::from_dense(space.clone(), &random_hermitian(rng, n, 1.0)).unwrap();
    let n_jumps = rng.random_range(1..=3);
    let jumps = (0..n_jumps)
        .map(|k| {
            let l = OperatorMatrix::from_dense(space.clone(), &random_matrix(rng, n, 0.4)).unwrap();
            JumpOperator::new(format!("jump{k}"), l)
        })
        .collect();
    LindbladGenerator::new(h, jumps).unwrap()
}

/// The GKSL right-hand side evaluated with dense products.
pub fn dense_rhs(h: &Dense, jumps: &[Dense], rho: &Dense) -> Dense {
    let mut out = (h * rho - rho * h) * c(0.0, -1.0);
    for l in jumps {
        let k = l.adjoint() * l;
        out += l * rho * l.adjoint() - (&k * rho + rho * &k) * c(0.5, 0.0);
    }
    out
}

/// Superoperator assembled column by column from the action on the matrix
/// units `E_ij`, in the column-stacking convention.
pub fn reference_superoperator(gen: &LindbladGenerator) -> Dense {
    let n = gen.dim();
    let h = gen.hamiltonian().to_dense();
    let ls: Vec<Dense> = gen.jumps().iter().map(|j| j.matrix().to_dense()).collect();
    let mut s = DMatrix::zeros(n * n, n * n);
    for j in 0..n {
        for i in 0..n {
            let mut e = DMatrix::zeros(n, n);
            e[(i, j)] = c(1.0, 0.0);
            let col = dense_rhs(&h, &ls, &e);
            s.column_mut(i + j * n).copy_from_slice(col.as_slice());
        }
    }
    s
}

/// `exp(S t) vec(ρ0)`, reshaped back to a matrix.
pub fn exact_evolution(gen: &LindbladGenerator, rho0: &Dense, t: f64) -> Dense {
    let n = gen.dim();
    let s = reference_superoperator(gen) * c(t, 0.0);
    let v = s.exp() * nalgebra::DVector::from_column_slice(rho0.as_slice());
    DMatrix::from_column_slice(n, n, v.as_slice())
}

pub fn max_abs_diff(a: &Dense, b: &Dense) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Reorders the tensor factors of `rho`: factor `k` of the result is factor
/// `perm[k]` of the input.
pub fn permute_factors(rho: &Dense, dims: &[usize], perm: &[usize]) -> Dense {
    let n = rho.nrows();
    let digits = |mut x: usize, d: &[usize]| {
        let mut out = vec![0; d.len()];
        for k in (0..d.len()).rev() {
            out[k] = x % d[k];
            x /= d[k];
        }
        out
    };
    let index = |old_digits: &[usize]| perm.iter().fold(0, |acc, &p| acc * dims[p] + old_digits[p]);
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        let di = digits(i, dims);
        for j in 0..n {
            let dj = digits(j, dims);
            out[(index(&di), index(&dj))] = rho[(i, j)];
        }
    }
    out
}

/// Eigenvalues of the Bell-diagonal state with correlations `c`.
pub fn bell_diagonal_weights(cs: [f64; 3]) -> [f64; 4] {
    let [c1, c2, c3] = cs;
    [
        (1.0 - c1 - c2 - c3) / 4.0,
        (1.0 - c1 + c2 + c3) / 4.0,
        (1.0 + c1 - c2 + c3) / 4.0,
        (1.0 + c1 + c2 - c3) / 4.0,
    ]
}

/// `(I + Σ c_i σ_i ⊗ σ_i) / 4` on two qubits.
pub fn bell_diagonal_state(cs: [f64; 3]) -> Dense {
    let sx = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
    let sy = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)]);
    let sz = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]);
    let mut rho = DMatrix::<Complex64>::identity(4, 4);
    for (ci, s) in cs.iter().zip([sx, sy, sz]) {
        rho += s.kronecker(&s) * c(*ci, 0.0);
    }
    rho * c(0.25, 0.0)
}

/// Closed-form discord (bits) of a Bell-diagonal state.
pub fn bell_diagonal_discord(cs: [f64; 3]) -> f64 {
    let xlog = |x: f64| if x > 0.0 { x * x.log2() } else { 0.0 };
    let mutual = 2.0 + bell_diagonal_weights(cs).iter().map(|&l| xlog(l)).sum::<f64>();
    let cmax = cs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let classical = 0.5 * xlog(1.0 - cmax) + 0.5 * xlog(1.0 + cmax);
    mutual - classical
}

/// Uniform draw of correlations giving a valid (positive) Bell-diagonal state.
pub fn random_bell_correlations(rng: &mut impl Rng) -> [f64; 3] {
    loop {
        let cs = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        if bell_diagonal_weights(cs).iter().all(|&l| l >= 0.0) {
            return cs;
        }
    }
}

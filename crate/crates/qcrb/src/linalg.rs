//! Dense complex Hermitian kernel.
//!
//! Storage is `nalgebra`; eigendecompositions use its Householder
//! tridiagonalization followed by implicit QR sweeps, which is deterministic.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gellmann::{gmm_kind, GmmKind};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type RMat = DMatrix<f64>;

const EIG_MAX_ITER: usize = 10_000;

/// A dense complex Hermitian matrix.
///
/// Construction symmetrizes the input as `(A + A†)/2`, so every value of this
/// type is exactly Hermitian.
#[derive(Clone, Debug, PartialEq)]
pub struct HermMatrix {
    m: CMat,
}

impl HermMatrix {
    pub fn new(m: CMat) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension(format!(
                "matrix is not square: {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Self::symmetrized(m))
    }

    /// Symmetrizes a square matrix. Panics on non-square input.
    pub fn symmetrized(m: CMat) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "HermMatrix needs a square matrix");
        let h = (&m + m.adjoint()) * C64::new(0.5, 0.0);
        Self { m: h }
    }

    pub fn from_real(m: &RMat) -> Result<Self> {
        Self::new(m.map(|x| C64::new(x, 0.0)))
    }

    pub fn from_fn(d: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Self::symmetrized(CMat::from_fn(d, d, f))
    }

    pub fn identity(d: usize) -> Self {
        Self { m: CMat::identity(d, d) }
    }

    pub fn zeros(d: usize) -> Self {
        Self { m: CMat::zeros(d, d) }
    }

    pub fn diag(values: &[f64]) -> Self {
        let d = values.len();
        Self::from_fn(d, |i, j| if i == j { C64::new(values[i], 0.0) } else { C64::new(0.0, 0.0) })
    }

    /// Projector onto the normalized vector `v`.
    pub fn projector(v: &[C64]) -> Self {
        let norm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        Self::from_fn(v.len(), |i, j| v[i] * v[j].conj() / norm2)
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn mat(&self) -> &CMat {
        &self.m
    }

    pub fn into_mat(self) -> CMat {
        self.m
    }

    pub fn trace(&self) -> f64 {
        self.m.trace().re
    }

    /// `Re Tr(A B)`, the Hilbert-Schmidt inner product.
    pub fn inner(&self, other: &HermMatrix) -> f64 {
        // Tr(AB) = Σ_ab A_ab B_ba = Σ_ab A_ab conj(B_ab)
        self.m.iter().zip(other.m.iter()).map(|(a, b)| (a * b.conj()).re).sum()
    }

    pub fn frob_norm(&self) -> f64 {
        self.m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { m: &self.m * C64::new(s, 0.0) }
    }

    /// The plain product `A B` (not Hermitian in general).
    pub fn dot(&self, other: &HermMatrix) -> CMat {
        &self.m * &other.m
    }

    /// `{A, B} = AB + BA`.
    pub fn anticomm(&self, other: &HermMatrix) -> HermMatrix {
        let ab = self.dot(other);
        Self::symmetrized(&ab + ab.adjoint())
    }

    /// `U A U†`.
    pub fn conjugate_by(&self, u: &CMat) -> HermMatrix {
        Self::symmetrized(u * &self.m * u.adjoint())
    }

    pub fn eig(&self) -> Result<EigH> {
        eig_herm(self)
    }

    pub fn min_eig(&self) -> Result<f64> {
        Ok(eig_herm(self)?.values[0])
    }

    /// Applies a real function to the spectrum.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> Result<HermMatrix> {
        let e = eig_herm(self)?;
        let d = self.dim();
        let mut scaled = e.vectors.clone();
        for (c, &w) in e.values.iter().enumerate() {
            let fw = C64::new(f(w), 0.0);
            for r in 0..d {
                scaled[(r, c)] *= fw;
            }
        }
        Ok(Self::symmetrized(scaled * e.vectors.adjoint()))
    }

    pub fn inverse(&self) -> Result<HermMatrix> {
        let e = eig_herm(self)?;
        let scale = e.values.iter().map(|w| w.abs()).fold(0.0, f64::max);
        if e.values.iter().any(|w| w.abs() <= 1e-14 * scale.max(1e-300)) {
            return Err(Error::Singular("Hermitian matrix is not invertible".into()));
        }
        self.map_spectrum(|w| 1.0 / w)
    }
}

impl Add for &HermMatrix {
    type Output = HermMatrix;
    fn add(self, rhs: &HermMatrix) -> HermMatrix {
        HermMatrix { m: &self.m + &rhs.m }
    }
}

impl Sub for &HermMatrix {
    type Output = HermMatrix;
    fn sub(self, rhs: &HermMatrix) -> HermMatrix {
        HermMatrix { m: &self.m - &rhs.m }
    }
}

impl Neg for &HermMatrix {
    type Output = HermMatrix;
    fn neg(self) -> HermMatrix {
        HermMatrix { m: -&self.m }
    }
}

impl Mul<f64> for &HermMatrix {
    type Output = HermMatrix;
    fn mul(self, rhs: f64) -> HermMatrix {
        self.scale(rhs)
    }
}

/// Eigendecomposition `A = U diag(values) U†`, values ascending.
#[derive(Clone, Debug)]
pub struct EigH {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

pub fn eig_herm(a: &HermMatrix) -> Result<EigH> {
    let d = a.dim();
    if d == 0 {
        return Ok(EigH { values: vec![], vectors: CMat::zeros(0, 0) });
    }
    let se = a
        .m
        .clone()
        .try_symmetric_eigen(f64::EPSILON, EIG_MAX_ITER)
        .ok_or_else(|| Error::Solver("Hermitian eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| se.eigenvalues[i].total_cmp(&se.eigenvalues[j]));
    let values = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(d, d, |r, c| se.eigenvectors[(r, order[c])]);
    Ok(EigH { values, vectors })
}

/// Eigendecomposition of a real symmetric matrix, values ascending.
pub fn eig_sym(a: &RMat) -> Result<(Vec<f64>, RMat)> {
    let d = a.nrows();
    let sym = (a + a.transpose()) * 0.5;
    let se = sym
        .try_symmetric_eigen(f64::EPSILON, EIG_MAX_ITER)
        .ok_or_else(|| Error::Solver("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| se.eigenvalues[i].total_cmp(&se.eigenvalues[j]));
    let values = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let vectors = RMat::from_fn(d, d, |r, c| se.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// Sum of singular values. For Hermitian input this is `Σ|w_i|`.
pub fn trace_norm(a: &HermMatrix) -> Result<f64> {
    Ok(eig_herm(a)?.values.iter().map(|w| w.abs()).sum())
}

/// Trace norm of an arbitrary complex matrix.
pub fn trace_norm_general(a: &CMat) -> f64 {
    a.clone().svd(false, false).singular_values.iter().sum()
}

/// True iff the smallest eigenvalue is at least `-tol`.
pub fn is_psd(a: &HermMatrix, tol: f64) -> bool {
    match a.min_eig() {
        Ok(w) => w >= -tol,
        Err(_) => false,
    }
}

/// The real representation `[[Re A, -Im A], [Im A, Re A]]`.
pub fn herm_to_real_embed(a: &HermMatrix) -> RMat {
    cmat_to_real_embed(a.mat())
}

pub fn cmat_to_real_embed(a: &CMat) -> RMat {
    let (r, c) = a.shape();
    let mut out = RMat::zeros(2 * r, 2 * c);
    for i in 0..r {
        for j in 0..c {
            let z = a[(i, j)];
            out[(i, j)] = z.re;
            out[(i + r, j + c)] = z.re;
            out[(i, j + c)] = -z.im;
            out[(i + r, j)] = z.im;
        }
    }
    out
}

/// Inverse of [`herm_to_real_embed`]. Averages the two copies, so it also
/// projects a real matrix onto the embedded subspace.
pub fn real_to_herm(m: &RMat) -> Result<HermMatrix> {
    let n2 = m.nrows();
    if n2 % 2 != 0 || m.ncols() != n2 {
        return Err(Error::Dimension(format!("not an embedded matrix: {}x{}", n2, m.ncols())));
    }
    let d = n2 / 2;
    Ok(HermMatrix::from_fn(d, |i, j| {
        let re = 0.5 * (m[(i, j)] + m[(i + d, j + d)]);
        let im = 0.5 * (m[(i + d, j)] - m[(i, j + d)]);
        C64::new(re, im)
    }))
}

/// Coordinates of a Hermitian matrix in the orthonormal basis
/// `{1/√d} ∪ Λ_d`. Entry 0 is `Tr(A)/√d`; entry `j` is `Tr(A λ_j)`.
pub fn herm_basis_vec(a: &HermMatrix) -> Vec<f64> {
    let d = a.dim();
    let m = a.mat();
    let mut v = Vec::with_capacity(d * d);
    v.push(a.trace() / (d as f64).sqrt());
    for idx in 0..d * d - 1 {
        let c = match gmm_kind(d, idx) {
            GmmKind::Sym(j, k) => std::f64::consts::SQRT_2 * m[(j, k)].re,
            GmmKind::Anti(j, k) => -std::f64::consts::SQRT_2 * m[(j, k)].im,
            GmmKind::Diag(l) => {
                let s: f64 = (0..l).map(|i| m[(i, i)].re).sum();
                (s - l as f64 * m[(l, l)].re) / ((l * (l + 1)) as f64).sqrt()
            }
        };
        v.push(c);
    }
    v
}

/// Inverse of [`herm_basis_vec`].
pub fn herm_basis_unvec(v: &[f64], d: usize) -> Result<HermMatrix> {
    if v.len() != d * d {
        return Err(Error::Dimension(format!("expected {} coordinates, got {}", d * d, v.len())));
    }
    let mut m = CMat::zeros(d, d);
    let c0 = v[0] / (d as f64).sqrt();
    for i in 0..d {
        m[(i, i)] += C64::new(c0, 0.0);
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for (idx, &c) in v[1..].iter().enumerate() {
        match gmm_kind(d, idx) {
            GmmKind::Sym(j, k) => {
                m[(j, k)] += C64::new(c * s, 0.0);
                m[(k, j)] += C64::new(c * s, 0.0);
            }
            GmmKind::Anti(j, k) => {
                m[(j, k)] += C64::new(0.0, -c * s);
                m[(k, j)] += C64::new(0.0, c * s);
            }
            GmmKind::Diag(l) => {
                let norm = 1.0 / ((l * (l + 1)) as f64).sqrt();
                for i in 0..l {
                    m[(i, i)] += C64::new(c * norm, 0.0);
                }
                m[(l, l)] -= C64::new(c * l as f64 * norm, 0.0);
            }
        }
    }
    HermMatrix::new(m)
}

/// Square root of a PSD matrix; negative eigenvalues are clipped to zero.
pub fn sqrtm_psd(a: &HermMatrix) -> Result<HermMatrix> {
    a.map_spectrum(|w| w.max(0.0).sqrt())
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn kron_herm(a: &HermMatrix, b: &HermMatrix) -> HermMatrix {
    HermMatrix::symmetrized(a.mat().kronecker(b.mat()))
}

/// An operator on `ℂⁿ ⊗ ℂᵈ` stored as an `n × n` grid of `d × d` blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct CqMatrix {
    n: usize,
    d: usize,
    m: CMat,
}

impl CqMatrix {
    pub fn zeros(n: usize, d: usize) -> Self {
        Self { n, d, m: CMat::zeros(n * d, n * d) }
    }

    pub fn from_blocks(n: usize, d: usize, mut f: impl FnMut(usize, usize) -> CMat) -> Self {
        let mut out = Self::zeros(n, d);
        for j in 0..n {
            for k in 0..n {
                let b = f(j, k);
                out.set_block(j, k, &b);
            }
        }
        out
    }

    pub fn from_flat(n: usize, d: usize, m: CMat) -> Result<Self> {
        if m.nrows() != n * d || m.ncols() != n * d {
            return Err(Error::Dimension("flat matrix does not match block layout".into()));
        }
        Ok(Self { n, d, m })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn block(&self, j: usize, k: usize) -> CMat {
        self.m.view((j * self.d, k * self.d), (self.d, self.d)).into_owned()
    }

    pub fn set_block(&mut self, j: usize, k: usize, b: &CMat) {
        self.m.view_mut((j * self.d, k * self.d), (self.d, self.d)).copy_from(b);
    }

    pub fn flat(&self) -> &CMat {
        &self.m
    }

    pub fn hermitian_defect(&self) -> f64 {
        (&self.m - self.m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn to_herm(&self) -> HermMatrix {
        HermMatrix::symmetrized(self.m.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_herm(d: usize, rng: &mut impl Rng) -> HermMatrix {
        HermMatrix::from_fn(d, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn identity_eigenvalues() {
        let e = eig_herm(&HermMatrix::identity(3)).unwrap();
        for w in e.values {
            assert!((w - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn lambda3_eigenvalues() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let e = eig_herm(&HermMatrix::diag(&[s, -s, 0.0])).unwrap();
        assert!((e.values[0] + s).abs() < 1e-14);
        assert!(e.values[1].abs() < 1e-14);
        assert!((e.values[2] - s).abs() < 1e-14);
    }

    // Independent oracle: eigenvalues of a Hermitian matrix are the roots of
    // its characteristic polynomial. Coefficients come from Faddeev-LeVerrier,
    // roots from Newton iteration with deflation.
    fn charpoly_roots(a: &CMat) -> Vec<f64> {
        let n = a.nrows();
        let mut coeffs = vec![C64::new(1.0, 0.0)];
        let mut mk = CMat::zeros(n, n);
        let id = CMat::identity(n, n);
        for k in 1..=n {
            let prev = *coeffs.last().unwrap();
            mk = a * &mk + &id * prev;
            let ck = -(a * &mk).trace() / C64::new(k as f64, 0.0);
            coeffs.push(ck);
        }
        let mut p: Vec<f64> = coeffs.iter().map(|z| z.re).collect();
        let mut roots = Vec::new();
        while p.len() > 1 {
            let mut x = 0.0f64;
            for start in [10.0, -10.0, 0.5, -0.5, 3.0] {
                x = start;
                let mut ok = false;
                for _ in 0..500 {
                    let (mut f, mut df) = (0.0, 0.0);
                    for &cf in &p {
                        df = df * x + f;
                        f = f * x + cf;
                    }
                    if df.abs() < 1e-300 {
                        break;
                    }
                    let step = f / df;
                    x -= step;
                    if step.abs() < 1e-15 * (1.0 + x.abs()) {
                        ok = true;
                        break;
                    }
                }
                if ok {
                    break;
                }
            }
            roots.push(x);
            let mut q = Vec::with_capacity(p.len() - 1);
            let mut acc = 0.0;
            for &cf in &p[..p.len() - 1] {
                acc = acc * x + cf;
                q.push(acc);
            }
            p = q;
        }
        roots.sort_by(f64::total_cmp);
        roots
    }

    #[test]
    fn eig_matches_charpoly_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_herm(4, &mut rng);
        let e = eig_herm(&a).unwrap();
        let r = charpoly_roots(a.mat());
        for (w, x) in e.values.iter().zip(r.iter()) {
            assert!((w - x).abs() < 1e-9, "{w} vs {x}");
        }
    }

    #[test]
    fn eig_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in 1..9 {
            let a = random_herm(d, &mut rng);
            let e = eig_herm(&a).unwrap();
            let diag = CMat::from_fn(d, d, |i, j| if i == j { c(e.values[i], 0.0) } else { c(0.0, 0.0) });
            let rec = &e.vectors * diag * e.vectors.adjoint();
            let err = (&rec - a.mat()).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(err <= 1e-10 * a.frob_norm().max(1.0));
            for w in e.values.windows(2) {
                assert!(w[0] <= w[1]);
            }
        }
    }

    #[test]
    fn trace_norm_cases() {
        assert!((trace_norm(&HermMatrix::diag(&[1.0, -2.0, 0.5])).unwrap() - 3.5).abs() < 1e-14);
        assert_eq!(trace_norm(&HermMatrix::zeros(3)).unwrap(), 0.0);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let l1 = HermMatrix::from_fn(3, |i, j| if i + j == 1 { c(s, 0.0) } else { c(0.0, 0.0) });
        assert!((trace_norm(&l1).unwrap() - 2f64.sqrt()).abs() < 1e-14);
        assert!((trace_norm_general(l1.mat()) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn psd_tests() {
        assert!(is_psd(&HermMatrix::identity(4), 0.0));
        assert!(!is_psd(&HermMatrix::diag(&[1.0, -1e-6]), 1e-8));
    }

    #[test]
    fn embed_real_is_block_copy() {
        let a = HermMatrix::diag(&[1.0, 2.0]);
        let e = herm_to_real_embed(&a);
        assert_eq!(e[(0, 0)], 1.0);
        assert_eq!(e[(3, 3)], 2.0);
        assert_eq!(e[(0, 2)], 0.0);
    }

    #[test]
    fn embed_imaginary_lambda2_spectrum() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let l2 = HermMatrix::new(CMat::from_fn(3, 3, |i, j| match (i, j) {
            (0, 1) => c(0.0, -s),
            (1, 0) => c(0.0, s),
            _ => c(0.0, 0.0),
        }))
        .unwrap();
        let (w, _) = eig_sym(&herm_to_real_embed(&l2)).unwrap();
        let expect = [-s, -s, 0.0, 0.0, s, s];
        for (a, b) in w.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let eh = eig_herm(&l2).unwrap().values;
        assert!((eh[0] + s).abs() < 1e-12 && (eh[2] - s).abs() < 1e-12);
    }

    #[test]
    fn embed_roundtrip_and_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_herm(5, &mut rng);
        let e = herm_to_real_embed(&a);
        assert!((e.trace() - 2.0 * a.trace()).abs() < 1e-12);
        let back = real_to_herm(&e).unwrap();
        assert!((&back - &a).max_abs() < 1e-15);
    }

    #[test]
    fn basis_vec_examples() {
        let d = 3;
        let v = herm_basis_vec(&HermMatrix::identity(d).scale(1.0 / d as f64));
        assert!((v[0] - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!(v[1..].iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn basis_vec_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for d in 2..7 {
            let a = random_herm(d, &mut rng);
            let v = herm_basis_vec(&a);
            let back = herm_basis_unvec(&v, d).unwrap();
            assert!((&back - &a).max_abs() < 1e-12);
            let n2: f64 = v.iter().map(|x| x * x).sum();
            assert!((n2 - a.inner(&a)).abs() < 1e-10);
        }
    }

    #[test]
    fn kron_dims() {
        let k = kron(&CMat::identity(2, 2), &CMat::identity(3, 3));
        assert_eq!(k.shape(), (6, 6));
        assert_eq!(k.trace(), c(6.0, 0.0));
    }

    #[test]
    fn sqrtm_squares_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_herm(4, &mut rng);
        let p = HermMatrix::symmetrized(a.mat() * a.mat());
        let s = sqrtm_psd(&p).unwrap();
        let err = (s.mat() * s.mat() - p.mat()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err < 1e-10);
    }

    #[test]
    fn cq_blocks() {
        let m = CqMatrix::from_blocks(2, 2, |j, k| CMat::from_element(2, 2, c((j * 2 + k) as f64, 0.0)));
        assert_eq!(m.block(1, 0)[(0, 1)], c(2.0, 0.0));
        assert_eq!(m.flat()[(3, 0)], c(2.0, 0.0));
    }
}

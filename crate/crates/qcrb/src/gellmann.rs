//! Generalized Gell-Mann matrices with `Tr(λ_j λ_k) = δ_jk`.
//!
//! Ordering: the `d(d-1)/2` symmetric matrices for pairs `(j,k)`, `j<k`, in
//! lexicographic order, then the antisymmetric ones for the same pairs, then
//! the `d-1` diagonal ones. For `d = 3` this is a relabeling of the usual
//! eight matrices; [`A5_ORDER`] maps the conventional labels onto it.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::{CMat, HermMatrix};

pub const MAX_DIM: usize = 16;

/// `A5_ORDER[i]` is the index in [`gmm_basis`]`(3)` of the conventional
/// qutrit matrix `λ_{i+1}`.
pub const A5_ORDER: [usize; 8] = [0, 3, 6, 1, 4, 2, 5, 7];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GmmKind {
    Sym(usize, usize),
    Anti(usize, usize),
    /// `(Σ_{i<l} E_ii - l E_ll) / √(l(l+1))` for `l` in `1..d`.
    Diag(usize),
}

fn pair(d: usize, mut idx: usize) -> (usize, usize) {
    for j in 0..d {
        let row = d - 1 - j;
        if idx < row {
            return (j, j + 1 + idx);
        }
        idx -= row;
    }
    unreachable!("pair index out of range")
}

/// Which matrix sits at zero-based position `idx` of the basis.
pub fn gmm_kind(d: usize, idx: usize) -> GmmKind {
    let p = d * (d - 1) / 2;
    assert!(idx < d * d - 1, "GMM index {idx} out of range for d={d}");
    if idx < p {
        let (j, k) = pair(d, idx);
        GmmKind::Sym(j, k)
    } else if idx < 2 * p {
        let (j, k) = pair(d, idx - p);
        GmmKind::Anti(j, k)
    } else {
        GmmKind::Diag(idx - 2 * p + 1)
    }
}

#[derive(Clone, Debug)]
pub struct GmmBasis {
    pub dim: usize,
    pub matrices: Vec<HermMatrix>,
}

impl GmmBasis {
    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn get(&self, j: usize) -> &HermMatrix {
        &self.matrices[j]
    }
}

pub fn gmm_matrix(d: usize, idx: usize) -> HermMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut m = CMat::zeros(d, d);
    match gmm_kind(d, idx) {
        GmmKind::Sym(j, k) => {
            m[(j, k)] = C64::new(s, 0.0);
            m[(k, j)] = C64::new(s, 0.0);
        }
        GmmKind::Anti(j, k) => {
            m[(j, k)] = C64::new(0.0, -s);
            m[(k, j)] = C64::new(0.0, s);
        }
        GmmKind::Diag(l) => {
            let norm = 1.0 / ((l * (l + 1)) as f64).sqrt();
            for i in 0..l {
                m[(i, i)] = C64::new(norm, 0.0);
            }
            m[(l, l)] = C64::new(-(l as f64) * norm, 0.0);
        }
    }
    HermMatrix::symmetrized(m)
}

pub fn gmm_basis(d: usize) -> Result<GmmBasis> {
    if !(2..=MAX_DIM).contains(&d) {
        return Err(Error::Unsupported(format!("GMM dimension {d} outside 2..={MAX_DIM}")));
    }
    let matrices = (0..d * d - 1).map(|i| gmm_matrix(d, i)).collect();
    Ok(GmmBasis { dim: d, matrices })
}

/// Dense structure constants `d_jkl = Tr({λ_j,λ_k}λ_l)` and
/// `f_jkl = -i Tr([λ_j,λ_k]λ_l)`.
#[derive(Clone, Debug)]
pub struct StructureConstants {
    pub n: usize,
    pub d_sym: Vec<f64>,
    pub f_anti: Vec<f64>,
}

impl StructureConstants {
    #[inline]
    fn at(&self, j: usize, k: usize, l: usize) -> usize {
        (j * self.n + k) * self.n + l
    }

    pub fn d(&self, j: usize, k: usize, l: usize) -> f64 {
        self.d_sym[self.at(j, k, l)]
    }

    pub fn f(&self, j: usize, k: usize, l: usize) -> f64 {
        self.f_anti[self.at(j, k, l)]
    }
}

fn trace_prod(a: &CMat, b: &CMat) -> C64 {
    // Tr(AB) = Σ_ab A_ab B_ba
    let n = a.nrows();
    let mut s = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            s += a[(i, j)] * b[(j, i)];
        }
    }
    s
}

pub fn structure_constants(basis: &GmmBasis) -> StructureConstants {
    let n = basis.len();
    let prods: Vec<CMat> = (0..n * n)
        .map(|jk| basis.get(jk / n).dot(basis.get(jk % n)))
        .collect();
    let mut t = vec![C64::new(0.0, 0.0); n * n * n];
    for jk in 0..n * n {
        for l in 0..n {
            t[jk * n + l] = trace_prod(&prods[jk], basis.get(l).mat());
        }
    }
    let mut d_sym = vec![0.0; n * n * n];
    let mut f_anti = vec![0.0; n * n * n];
    for j in 0..n {
        for k in 0..n {
            for l in 0..n {
                let a = t[(j * n + k) * n + l];
                let b = t[(k * n + j) * n + l];
                let idx = (j * n + k) * n + l;
                d_sym[idx] = (a + b).re;
                f_anti[idx] = (C64::new(0.0, -1.0) * (a - b)).re;
            }
        }
    }
    StructureConstants { n, d_sym, f_anti }
}

/// Max-norm residuals of the three basis identities
/// `Σ λ_j² = (d²-1)/d`, `Σ_m λ_m λ_j λ_m = -λ_j/d` (worst `j`) and
/// `Σ_jk λ_j λ_k λ_j λ_k = -(d²-1)/d²`.
#[derive(Clone, Copy, Debug)]
pub struct IdentityReport {
    pub casimir: f64,
    pub conjugation: f64,
    pub quartic: f64,
}

impl IdentityReport {
    pub fn max(&self) -> f64 {
        self.casimir.max(self.conjugation).max(self.quartic)
    }
}

fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn verify_identities(basis: &GmmBasis) -> IdentityReport {
    let d = basis.dim;
    let df = d as f64;
    let id = CMat::identity(d, d);
    let mats: Vec<&CMat> = basis.matrices.iter().map(|m| m.mat()).collect();

    let mut casimir = CMat::zeros(d, d);
    for m in &mats {
        casimir += *m * *m;
    }
    casimir -= &id * C64::new((df * df - 1.0) / df, 0.0);

    let mut conjugation: f64 = 0.0;
    for lj in &mats {
        let s = conjugation_sum(lj, basis) + *lj * C64::new(1.0 / df, 0.0);
        conjugation = conjugation.max(max_abs(&s));
    }

    let mut quartic = CMat::zeros(d, d);
    for lj in &mats {
        for lk in &mats {
            let jk = *lj * *lk;
            quartic += &jk * &jk;
        }
    }
    quartic += &id * C64::new((df * df - 1.0) / (df * df), 0.0);

    IdentityReport { casimir: max_abs(&casimir), conjugation, quartic: max_abs(&quartic) }
}

/// `Σ_m λ_m A λ_m` for an arbitrary `d × d` matrix `A`.
pub fn conjugation_sum(a: &CMat, basis: &GmmBasis) -> CMat {
    let d = basis.dim;
    let mut s = CMat::zeros(d, d);
    for m in &basis.matrices {
        s += m.mat() * a * m.mat();
    }
    s
}

/// Residuals of `Σ_{m,c} f_jmc f_pmc = 2d δ_jp` and
/// `Σ_{m,c} d_jmc d_pmc = 2(d²-4)/d δ_jp`, as `(f_residual, d_residual)`.
pub fn contraction_residuals(sc: &StructureConstants, d: usize) -> (f64, f64) {
    let n = sc.n;
    let df = d as f64;
    let (mut rf, mut rd) = (0.0f64, 0.0f64);
    for j in 0..n {
        for p in 0..n {
            let (mut sf, mut sd) = (0.0, 0.0);
            for m in 0..n {
                for c in 0..n {
                    sf += sc.f(j, m, c) * sc.f(p, m, c);
                    sd += sc.d(j, m, c) * sc.d(p, m, c);
                }
            }
            let delta = if j == p { 1.0 } else { 0.0 };
            rf = rf.max((sf - 2.0 * df * delta).abs());
            rd = rd.max((sd - 2.0 * (df * df - 4.0) / df * delta).abs());
        }
    }
    (rf, rd)
}

/// `Σ_k (d_abk f_kcl + d_bck f_kal + d_cak f_kbl)` for one index tuple.
pub fn jacobi_residual(sc: &StructureConstants, a: usize, b: usize, c: usize, l: usize) -> f64 {
    (0..sc.n)
        .map(|k| sc.d(a, b, k) * sc.f(k, c, l) + sc.d(b, c, k) * sc.f(k, a, l) + sc.d(c, a, k) * sc.f(k, b, l))
        .sum::<f64>()
        .abs()
}

/// Max-norm residual of `2 λ_m λ_j = (2/d)δ_mj + Σ_c (d_mjc + i f_mjc) λ_c`
/// over every pair.
pub fn product_rule_residual(basis: &GmmBasis, sc: &StructureConstants) -> f64 {
    let d = basis.dim;
    let n = basis.len();
    let mut worst: f64 = 0.0;
    for m in 0..n {
        for j in 0..n {
            let mut rhs = CMat::zeros(d, d);
            if m == j {
                rhs += CMat::identity(d, d) * C64::new(2.0 / d as f64, 0.0);
            }
            for c in 0..n {
                let coef = C64::new(sc.d(m, j, c), sc.f(m, j, c));
                if coef.norm() > 0.0 {
                    rhs += basis.get(c).mat() * coef;
                }
            }
            let lhs = basis.get(m).dot(basis.get(j)) * C64::new(2.0, 0.0);
            worst = worst.max(max_abs(&(lhs - rhs)));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn qubit_is_scaled_pauli() {
        let b = gmm_basis(2).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let close = |a: C64, b: C64| (a - b).norm() < 1e-15;
        assert!(close(b.get(0).mat()[(0, 1)], c(s, 0.0)));
        assert!(close(b.get(1).mat()[(0, 1)], c(0.0, -s)));
        assert!(close(b.get(1).mat()[(1, 0)], c(0.0, s)));
        assert!(close(b.get(2).mat()[(0, 0)], c(s, 0.0)));
        assert!(close(b.get(2).mat()[(1, 1)], c(-s, 0.0)));
    }

    #[test]
    fn qutrit_matches_conventional_list() {
        let b = gmm_basis(3).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let z = c(0.0, 0.0);
        let r = c(s, 0.0);
        let i = c(0.0, s);
        let expected: [[C64; 9]; 8] = [
            [z, r, z, r, z, z, z, z, z],
            [z, -i, z, i, z, z, z, z, z],
            [r, z, z, z, -r, z, z, z, z],
            [z, z, r, z, z, z, r, z, z],
            [z, z, -i, z, z, z, i, z, z],
            [z, z, z, z, z, r, z, r, z],
            [z, z, z, z, z, -i, z, i, z],
            [
                c(1.0 / 6f64.sqrt(), 0.0),
                z,
                z,
                z,
                c(1.0 / 6f64.sqrt(), 0.0),
                z,
                z,
                z,
                c(-2.0 / 6f64.sqrt(), 0.0),
            ],
        ];
        for (label, e) in expected.iter().enumerate() {
            let m = b.get(A5_ORDER[label]).mat();
            for r_ in 0..3 {
                for c_ in 0..3 {
                    assert!((m[(r_, c_)] - e[3 * r_ + c_]).norm() < 1e-15, "λ_{}", label + 1);
                }
            }
        }
    }

    #[test]
    fn orthonormal_and_traceless() {
        for d in 2..9 {
            let b = gmm_basis(d).unwrap();
            assert_eq!(b.len(), d * d - 1);
            for j in 0..b.len() {
                assert!(b.get(j).trace().abs() < 1e-14);
                for k in 0..b.len() {
                    let g = b.get(j).inner(b.get(k));
                    let e = if j == k { 1.0 } else { 0.0 };
                    assert!((g - e).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn out_of_range() {
        assert!(gmm_basis(1).is_err());
        assert!(gmm_basis(17).is_err());
    }

    #[test]
    fn qubit_structure_constants() {
        let b = gmm_basis(2).unwrap();
        let sc = structure_constants(&b);
        assert!(sc.d_sym.iter().all(|x| x.abs() < 1e-14));
        assert!((sc.f(0, 1, 2).abs() - 2f64.sqrt()).abs() < 1e-14);
        assert!((sc.f(0, 1, 2) + sc.f(1, 0, 2)).abs() < 1e-14);
    }

    #[test]
    fn qutrit_contractions() {
        let b = gmm_basis(3).unwrap();
        let sc = structure_constants(&b);
        let (rf, rd) = contraction_residuals(&sc, 3);
        assert!(rf < 1e-12 && rd < 1e-12);
        assert!(product_rule_residual(&b, &sc) < 1e-12);
        for j in 0..8 {
            let s: f64 = (0..8).map(|m| sc.d(m, j, m)).sum();
            assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn identities_small_d() {
        for d in 2..6 {
            let r = verify_identities(&gmm_basis(d).unwrap());
            assert!(r.max() < 1e-12, "d={d}: {r:?}");
        }
    }

    #[test]
    fn corollaries() {
        let b = gmm_basis(3).unwrap();
        let l1 = b.get(A5_ORDER[0]).mat().clone();
        let s = conjugation_sum(&l1, &b);
        assert!(max_abs(&(s + &l1 * c(1.0 / 3.0, 0.0))) < 1e-14);
        let sq = &l1 * &l1;
        let s2 = conjugation_sum(&sq, &b);
        let expect = CMat::identity(3, 3) - &sq * c(1.0 / 3.0, 0.0);
        assert!(max_abs(&(s2 - expect)) < 1e-14);
        assert!(max_abs(&conjugation_sum(&CMat::zeros(3, 3), &b)) == 0.0);
    }
}

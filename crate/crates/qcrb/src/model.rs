//! Local statistical models `(ρ, {∂_j ρ}, W, θ*)` and the locally unbiased
//! operator family.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gellmann::{gmm_basis, gmm_matrix};
use crate::linalg::{eig_sym, herm_basis_unvec, herm_basis_vec, kron_herm, CMat, HermMatrix, RMat, C64};

pub const STATE_TOL: f64 = 1e-10;
pub const GRAM_TOL: f64 = 1e-8;
pub const DEFAULT_EPS: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct StatModel {
    pub d: usize,
    pub rho: HermMatrix,
    pub derivs: Vec<HermMatrix>,
    pub weight: RMat,
    pub theta_star: Vec<f64>,
}

impl StatModel {
    /// Builds and validates a model. `weight` defaults to the identity and
    /// `theta_star` to `Tr(ρ X)` for the minimum-norm unbiased operators.
    pub fn new(
        rho: HermMatrix,
        derivs: Vec<HermMatrix>,
        weight: Option<RMat>,
        theta_star: Option<Vec<f64>>,
    ) -> Result<Self> {
        let d = rho.dim();
        let n = derivs.len();
        let weight = weight.unwrap_or_else(|| RMat::identity(n, n));
        let theta_star = theta_star.unwrap_or_else(|| vec![0.0; n]);
        let m = Self { d, rho, derivs, weight, theta_star };
        m.validate()?;
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.derivs.len()
    }

    /// Checks every model invariant and reports the first one violated.
    pub fn validate(&self) -> Result<()> {
        let d = self.d;
        let n = self.n();
        let bad = |s: String| Err(Error::InvalidModel(s));
        if d < 2 {
            return bad(format!("dimension {d} < 2"));
        }
        if self.rho.dim() != d {
            return bad("rho dimension mismatch".into());
        }
        if (self.rho.trace() - 1.0).abs() > STATE_TOL {
            return bad(format!("rho trace {} != 1", self.rho.trace()));
        }
        let wmin = self.rho.min_eig()?;
        if wmin < -STATE_TOL {
            return bad(format!("rho not PSD (min eigenvalue {wmin:e})"));
        }
        if n == 0 {
            return bad("no parameters".into());
        }
        if n > d * d - 1 {
            return bad(format!("n = {n} exceeds d^2 - 1 = {}", d * d - 1));
        }
        for (j, dj) in self.derivs.iter().enumerate() {
            if dj.dim() != d {
                return bad(format!("derivative {j} has dimension {}", dj.dim()));
            }
            if dj.trace().abs() > STATE_TOL {
                return bad(format!("derivative {j} not traceless (trace {:e})", dj.trace()));
            }
        }
        let g = self.gram();
        let (gw, _) = eig_sym(&g)?;
        if gw[0] <= GRAM_TOL {
            return bad(format!("derivatives linearly dependent (Gram min eigenvalue {:e})", gw[0]));
        }
        if self.weight.nrows() != n || self.weight.ncols() != n {
            return bad("weight shape does not match n".into());
        }
        let asym = (&self.weight - self.weight.transpose()).abs().max();
        if asym > 1e-10 {
            return bad(format!("weight not symmetric ({asym:e})"));
        }
        let (ww, _) = eig_sym(&self.weight)?;
        if ww[0] < -1e-10 {
            return bad(format!("weight not PSD (min eigenvalue {:e})", ww[0]));
        }
        if self.theta_star.len() != n {
            return bad("theta_star length does not match n".into());
        }
        if self.theta_star.iter().any(|t| !t.is_finite()) {
            return bad("theta_star not finite".into());
        }
        Ok(())
    }

    /// `G_jk = Tr(∂_j ρ ∂_k ρ)`.
    pub fn gram(&self) -> RMat {
        let n = self.n();
        RMat::from_fn(n, n, |j, k| self.derivs[j].inner(&self.derivs[k]))
    }

    /// `θ*ᵀ W θ*`, subtracted from every SDP value.
    pub fn theta_correction(&self) -> f64 {
        let n = self.n();
        let mut s = 0.0;
        for j in 0..n {
            for k in 0..n {
                s += self.theta_star[j] * self.weight[(j, k)] * self.theta_star[k];
            }
        }
        s
    }

    pub fn is_identity_weight(&self) -> bool {
        (&self.weight - RMat::identity(self.n(), self.n())).abs().max() < 1e-14
    }

    pub fn with_weight(mut self, w: RMat) -> Result<Self> {
        self.weight = w;
        self.validate()?;
        Ok(self)
    }

    pub fn with_theta_star(mut self, theta: Vec<f64>) -> Result<Self> {
        self.theta_star = theta;
        self.validate()?;
        Ok(self)
    }

    /// Replaces `ρ` by `(1-ε)ρ + ε 1/d`.
    pub fn regularized(mut self, eps: f64) -> Result<Self> {
        let d = self.d;
        self.rho = &self.rho.scale(1.0 - eps) + &HermMatrix::identity(d).scale(eps / d as f64);
        self.validate()?;
        Ok(self)
    }

    pub fn purity(&self) -> f64 {
        purity(self)
    }

    pub fn to_json(&self) -> ModelJson {
        let flat = |m: &HermMatrix| -> Vec<[f64; 2]> {
            let d = m.dim();
            let mut v = Vec::with_capacity(d * d);
            for i in 0..d {
                for j in 0..d {
                    let z = m.mat()[(i, j)];
                    v.push([z.re, z.im]);
                }
            }
            v
        };
        let n = self.n();
        let mut w = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                w.push(self.weight[(i, j)]);
            }
        }
        ModelJson {
            d: self.d,
            n,
            rho: flat(&self.rho),
            derivs: self.derivs.iter().map(flat).collect(),
            weight: Some(w),
            theta_star: Some(self.theta_star.clone()),
        }
    }

    /// Short hex digest of the canonical JSON form.
    pub fn content_hash(&self) -> String {
        let s = serde_json::to_string(&self.to_json()).unwrap_or_default();
        hex16(&s)
    }
}

pub(crate) fn hex16(s: &str) -> String {
    let digest = Sha256::digest(s.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// On-disk model format. Matrices are row-major lists of `[re, im]` pairs;
/// `weight` is a row-major list of `n²` reals.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelJson {
    pub d: usize,
    pub n: usize,
    pub rho: Vec<[f64; 2]>,
    pub derivs: Vec<Vec<[f64; 2]>>,
    #[serde(default)]
    pub weight: Option<Vec<f64>>,
    #[serde(default)]
    pub theta_star: Option<Vec<f64>>,
}

impl ModelJson {
    pub fn into_model(self) -> Result<StatModel> {
        let d = self.d;
        let n = self.n;
        let bad = |s: String| Err(Error::InvalidModel(s));
        if d < 2 {
            return bad(format!("d = {d} must be at least 2"));
        }
        let to_herm = |name: &str, v: &[[f64; 2]]| -> Result<HermMatrix> {
            if v.len() != d * d {
                return Err(Error::InvalidModel(format!("{name} has {} entries, expected {}", v.len(), d * d)));
            }
            let m = CMat::from_fn(d, d, |i, j| C64::new(v[i * d + j][0], v[i * d + j][1]));
            let defect = (&m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
            if defect > 1e-10 {
                return Err(Error::InvalidModel(format!("{name} not Hermitian (defect {defect:e})")));
            }
            HermMatrix::new(m)
        };
        let rho = to_herm("rho", &self.rho)?;
        if self.derivs.len() != n {
            return bad(format!("{} derivatives given, n = {n}", self.derivs.len()));
        }
        let derivs = self
            .derivs
            .iter()
            .enumerate()
            .map(|(j, v)| to_herm(&format!("derivative {j}"), v))
            .collect::<Result<Vec<_>>>()?;
        let weight = match self.weight {
            Some(w) => {
                if w.len() != n * n {
                    return bad(format!("weight has {} entries, expected {}", w.len(), n * n));
                }
                Some(RMat::from_row_slice(n, n, &w))
            }
            None => None,
        };
        StatModel::new(rho, derivs, weight, self.theta_star)
    }
}

pub fn load_model_json(text: &str) -> Result<StatModel> {
    let mj: ModelJson = serde_json::from_str(text).map_err(|e| Error::InvalidModel(format!("bad JSON: {e}")))?;
    mj.into_model()
}

fn gmm_state(d: usize, theta: &[f64]) -> HermMatrix {
    let mut v = vec![0.0; d * d];
    v[0] = 1.0 / (d as f64).sqrt();
    v[1..].copy_from_slice(theta);
    herm_basis_unvec(&v, d).expect("length checked by caller")
}

fn check_state(rho: &HermMatrix) -> Result<()> {
    let w = rho.min_eig()?;
    if w < -1e-12 {
        return Err(Error::InvalidState(format!("ρ not PSD (min eigenvalue {w:e})")));
    }
    Ok(())
}

/// `ρ = 1/d + Σ θ_j λ_j` with all `d²-1` Gell-Mann directions as parameters.
pub fn gmm_model(d: usize, theta: &[f64]) -> Result<StatModel> {
    let basis = gmm_basis(d)?;
    if theta.len() != d * d - 1 {
        return Err(Error::Dimension(format!("theta has length {}, expected {}", theta.len(), d * d - 1)));
    }
    let rho = gmm_state(d, theta);
    check_state(&rho)?;
    StatModel::new(rho, basis.matrices, None, Some(theta.to_vec()))
}

/// Estimating the coefficients of `{λ_k : k ∈ K}` (zero-based indices) with
/// the remaining coefficients fixed at zero.
pub fn gmm_subset_model(d: usize, k: &[usize], theta_k: &[f64]) -> Result<StatModel> {
    let nmax = d * d - 1;
    if k.len() != theta_k.len() {
        return Err(Error::Dimension("index set and theta lengths differ".into()));
    }
    let mut seen = vec![false; nmax];
    for &i in k {
        if i >= nmax {
            return Err(Error::InvalidModel(format!("GMM index {i} out of range for d={d}")));
        }
        if seen[i] {
            return Err(Error::InvalidModel(format!("GMM index {i} repeated")));
        }
        seen[i] = true;
    }
    let mut theta = vec![0.0; nmax];
    for (&i, &t) in k.iter().zip(theta_k) {
        theta[i] = t;
    }
    let rho = gmm_state(d, &theta);
    check_state(&rho)?;
    let derivs = k.iter().map(|&i| gmm_matrix(d, i)).collect();
    StatModel::new(rho, derivs, None, Some(theta_k.to_vec()))
}

/// Maximally mixed state with `n` of the Gell-Mann directions as parameters.
pub fn mm_subset_model(d: usize, k: &[usize]) -> Result<StatModel> {
    gmm_subset_model(d, k, &vec![0.0; k.len()])
}

/// Replaces the derivative basis by `B_j = Σ_k η_jk ∂_k ρ` for a real
/// orthogonal `η`, mapping `θ* → ηθ*` and `W → ηWηᵀ`.
pub fn onb_rotate(model: &StatModel, eta: &RMat) -> Result<StatModel> {
    let n = model.n();
    let d = model.d;
    if n != d * d - 1 {
        return Err(Error::InvalidModel("ONB rotation needs a full-parameter model".into()));
    }
    if eta.nrows() != n || eta.ncols() != n {
        return Err(Error::Dimension("eta shape".into()));
    }
    let defect = (eta * eta.transpose() - RMat::identity(n, n)).abs().max();
    if defect > 1e-10 {
        return Err(Error::InvalidModel(format!("eta not orthogonal (defect {defect:e})")));
    }
    let derivs = (0..n)
        .map(|j| {
            let mut m = CMat::zeros(d, d);
            for k in 0..n {
                m += model.derivs[k].mat() * C64::new(eta[(j, k)], 0.0);
            }
            HermMatrix::symmetrized(m)
        })
        .collect();
    let th = nalgebra::DVector::from_column_slice(&model.theta_star);
    let theta = (eta * th).iter().copied().collect();
    let w = eta * &model.weight * eta.transpose();
    let w = (&w + w.transpose()) * 0.5;
    StatModel::new(model.rho.clone(), derivs, Some(w), Some(theta))
}

/// `|+⟩ = (|0⟩ + … + |d-1⟩)/√d`.
pub fn plus_state(d: usize) -> HermMatrix {
    HermMatrix::projector(&vec![C64::new(1.0, 0.0); d])
}

/// Full Gell-Mann model at an arbitrary state, with `θ*_j = Tr(ρ λ_j)`.
pub fn full_model_at(rho: HermMatrix) -> Result<StatModel> {
    let d = rho.dim();
    let theta = herm_basis_vec(&rho)[1..].to_vec();
    let basis = gmm_basis(d)?;
    StatModel::new(rho, basis.matrices, None, Some(theta))
}

/// `ρ_max(p) = p|+⟩⟨+| + (1-p) 1/d` with all Gell-Mann parameters.
pub fn depolarized_plus_model(d: usize, p: f64) -> Result<StatModel> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidModel(format!("p = {p} outside [0, 1]")));
    }
    let rho = &plus_state(d).scale(p) + &HermMatrix::identity(d).scale((1.0 - p) / d as f64);
    full_model_at(rho)
}

/// Diagonal state `diag(p, …, p, 1-(r-1)p, 0, …)` with `r-1` copies of `p`,
/// regularized by `ε`. Branch `r` covers `p ∈ [1/r, 1/(r-1)]`.
pub fn rank_deficient_min_model(d: usize, branch: usize, p: f64, eps: f64) -> Result<StatModel> {
    if branch < 2 || branch > d {
        return Err(Error::InvalidModel(format!("branch {branch} not in 2..={d}")));
    }
    let lo = 1.0 / branch as f64;
    let hi = 1.0 / (branch - 1) as f64;
    if p < lo - 1e-12 || p > hi + 1e-12 {
        return Err(Error::InvalidModel(format!("p = {p} outside branch window [{lo}, {hi}]")));
    }
    let mut diag = vec![0.0; d];
    for x in diag.iter_mut().take(branch - 1) {
        *x = p;
    }
    diag[branch - 1] = (1.0 - (branch - 1) as f64 * p).max(0.0);
    let rho = HermMatrix::diag(&diag);
    let rho = &rho.scale(1.0 - eps) + &HermMatrix::identity(d).scale(eps / d as f64);
    full_model_at(rho)
}

/// Qubit full model at `ρ = (1 + r σ_z)/2`, i.e. `θ* = (0, 0, r/√2)`.
pub fn qubit_bloch_model(r: f64) -> Result<StatModel> {
    gmm_model(2, &[0.0, 0.0, r / 2f64.sqrt()])
}

/// `k` copies: `ρ^{⊗k}` with product-rule derivatives.
pub fn tensor_copies(model: &StatModel, k: usize) -> Result<StatModel> {
    if k == 0 {
        return Err(Error::InvalidModel("k must be positive".into()));
    }
    if k == 1 {
        return Ok(model.clone());
    }
    let dim = model.d.pow(k as u32);
    if dim > 64 {
        return Err(Error::Unsupported(format!("{k} copies of d={} exceed the size budget", model.d)));
    }
    let rho_k = (1..k).fold(model.rho.clone(), |acc, _| kron_herm(&acc, &model.rho));
    let derivs = model
        .derivs
        .iter()
        .map(|dj| {
            let mut sum = HermMatrix::zeros(dim);
            for pos in 0..k {
                let mut term: Option<HermMatrix> = None;
                for slot in 0..k {
                    let f = if slot == pos { dj } else { &model.rho };
                    term = Some(match term {
                        None => f.clone(),
                        Some(t) => kron_herm(&t, f),
                    });
                }
                sum = &sum + &term.expect("k >= 1");
            }
            sum
        })
        .collect();
    StatModel::new(rho_k, derivs, Some(model.weight.clone()), Some(model.theta_star.clone()))
}

pub fn purity(model: &StatModel) -> f64 {
    model.rho.inner(&model.rho)
}

/// Locally unbiased operators: `X_j = particular_j + Σ_l c_jl N_l`.
#[derive(Clone, Debug)]
pub struct LubFamily {
    pub particular: Vec<HermMatrix>,
    pub null_basis: Vec<HermMatrix>,
    pub unique: bool,
}

impl LubFamily {
    /// `X_j` for coefficient matrix `c` (`n × null_dim`, row-major).
    pub fn member(&self, c: &[f64]) -> Vec<HermMatrix> {
        let q = self.null_basis.len();
        self.particular
            .iter()
            .enumerate()
            .map(|(j, x)| {
                let mut m = x.mat().clone();
                for (l, nl) in self.null_basis.iter().enumerate() {
                    let cj = c[j * q + l];
                    if cj != 0.0 {
                        m += nl.mat() * C64::new(cj, 0.0);
                    }
                }
                HermMatrix::symmetrized(m)
            })
            .collect()
    }
}

/// Max residual of `Tr(ρ X_j) = θ*_j` and `Tr(∂_k ρ X_j) = δ_jk`.
pub fn lub_residual(model: &StatModel, x: &[HermMatrix]) -> f64 {
    let mut r: f64 = 0.0;
    for (j, xj) in x.iter().enumerate() {
        r = r.max((model.rho.inner(xj) - model.theta_star[j]).abs());
        for (k, dk) in model.derivs.iter().enumerate() {
            let e = if j == k { 1.0 } else { 0.0 };
            r = r.max((dk.inner(xj) - e).abs());
        }
    }
    r
}

/// Minimum-norm particular solution and an orthonormal basis of the shared
/// null directions, computed in Hermitian-basis coordinates.
pub fn solve_lub(model: &StatModel) -> Result<LubFamily> {
    let d = model.d;
    let n = model.n();
    let dd = d * d;
    let mut a = RMat::zeros(n + 1, dd);
    let vr = herm_basis_vec(&model.rho);
    for c in 0..dd {
        a[(0, c)] = vr[c];
    }
    for (j, dj) in model.derivs.iter().enumerate() {
        let v = herm_basis_vec(dj);
        for c in 0..dd {
            a[(j + 1, c)] = v[c];
        }
    }
    let aat = &a * a.transpose();
    let chol = aat
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidModel("unbiasedness constraints are rank deficient".into()))?;
    let mut particular = Vec::with_capacity(n);
    for j in 0..n {
        let mut b = nalgebra::DVector::zeros(n + 1);
        b[0] = model.theta_star[j];
        b[j + 1] = 1.0;
        let x = a.transpose() * chol.solve(&b);
        particular.push(herm_basis_unvec(x.as_slice(), d)?);
    }
    // projector onto the null space of a
    let proj = RMat::identity(dd, dd) - a.transpose() * chol.solve(&a);
    let (w, v) = eig_sym(&proj)?;
    let q = dd - n - 1;
    let mut null_basis = Vec::with_capacity(q);
    for c in (dd - q)..dd {
        if (w[c] - 1.0).abs() > 1e-6 {
            return Err(Error::Solver("null-space projector has unexpected spectrum".into()));
        }
        let col: Vec<f64> = v.column(c).iter().copied().collect();
        null_basis.push(herm_basis_unvec(&col, d)?);
    }
    let fam = LubFamily { particular, null_basis, unique: q == 0 };
    let r = lub_residual(model, &fam.particular);
    if r > 1e-9 {
        return Err(Error::Solver(format!("LUB residual {r:e}")));
    }
    Ok(fam)
}

//! The bound catalog.
//!
//! Closed forms (SLD, RLD, Gill-Massar), the SDP-backed Holevo and
//! Nagaoka-Hayashi bounds, analytic values at the maximally mixed state and
//! the feasible-point machinery for the most-informative bound.
//!
//! Every value that depends on the true parameters has `θ*ᵀWθ*` subtracted
//! and carries it in [`BoundReport::theta_correction`].

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gellmann::gmm_basis;
use crate::linalg::{eig_herm, eig_sym, sqrtm_psd, trace_norm_general, CMat, HermMatrix, RMat, C64};
use crate::model::{gmm_model, lub_residual, StatModel};
use crate::povm::Povm;
use crate::sdp::{self, extract_estimator, SdpOptions, SdpSolution, SdpStatus};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BoundKind {
    #[serde(rename = "SLD")]
    Sld,
    #[serde(rename = "RLD")]
    Rld,
    #[serde(rename = "HCRB")]
    Hcrb,
    #[serde(rename = "NHCRB")]
    Nhcrb,
    #[serde(rename = "GMCRB")]
    Gmcrb,
    #[serde(rename = "NHCRB_upper_suzuki")]
    NhcrbUpperSuzuki,
    #[serde(rename = "MICRB_upper")]
    MicrbUpper,
    #[serde(rename = "HCRB_lower")]
    HcrbLower,
    #[serde(rename = "NHCRB_upper_mm")]
    NhcrbUpperMm,
    /// `Tr[W J⁻¹]` for a fixed POVM.
    #[serde(rename = "classical")]
    Classical,
}

impl BoundKind {
    pub fn label(self) -> &'static str {
        match self {
            BoundKind::Sld => "SLD",
            BoundKind::Rld => "RLD",
            BoundKind::Hcrb => "HCRB",
            BoundKind::Nhcrb => "NHCRB",
            BoundKind::Gmcrb => "GMCRB",
            BoundKind::NhcrbUpperSuzuki => "NHCRB_upper_suzuki",
            BoundKind::MicrbUpper => "MICRB_upper",
            BoundKind::HcrbLower => "HCRB_lower",
            BoundKind::NhcrbUpperMm => "NHCRB_upper_mm",
            BoundKind::Classical => "classical",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ClosedForm,
    Sdp,
    FeasiblePoint,
    Inequality,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolverStats {
    pub status: SdpStatus,
    pub iterations: usize,
    pub primal_value: f64,
    pub dual_value: f64,
    pub primal_infeas: f64,
    pub dual_infeas: f64,
    pub constraints: usize,
}

impl SolverStats {
    fn from(sol: &SdpSolution, m: usize) -> Self {
        Self {
            status: sol.status,
            iterations: sol.iterations,
            primal_value: sol.primal_value,
            dual_value: sol.dual_value,
            primal_infeas: sol.primal_infeas,
            dual_infeas: sol.dual_infeas,
            constraints: m,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub value: f64,
    pub method: Method,
    /// Relative duality gap for SDP values.
    pub gap: Option<f64>,
    pub residuals: BTreeMap<String, f64>,
    pub theta_correction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverStats>,
    /// Whether all certificate checks passed, for feasible-point bounds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certified: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl BoundReport {
    fn new(kind: BoundKind, value: f64, method: Method, theta_correction: f64) -> Self {
        Self {
            kind,
            value,
            method,
            gap: None,
            residuals: BTreeMap::new(),
            theta_correction,
            solver: None,
            certified: None,
            note: None,
        }
    }

    fn residual(mut self, name: &str, v: f64) -> Self {
        self.residuals.insert(name.to_string(), v);
        self
    }
}

fn weight_note(model: &StatModel) -> Option<String> {
    (!model.is_identity_weight()).then(|| "weighted extension Tr[W J^-1]".to_string())
}

/// SLD and RLD operators and quantum Fisher matrices.
#[derive(Clone, Debug)]
pub struct QfiMatrices {
    pub j_sld: RMat,
    /// Hermitian, `J_jk = Tr(∂_j ρ ρ⁻¹ ∂_k ρ)`.
    pub j_rld: CMat,
    pub l_sld: Vec<HermMatrix>,
    /// `L_j = ρ⁻¹ ∂_j ρ`, not Hermitian in general.
    pub l_rld: Vec<CMat>,
}

/// Below this the SLD denominator `w_a + w_b` is treated as zero.
const SLD_FLOOR: f64 = 1e-12;

pub fn sld_rld(model: &StatModel) -> Result<QfiMatrices> {
    let eig = eig_herm(&model.rho)?;
    let d = model.d;
    let n = model.n();
    let u = &eig.vectors;
    let w = &eig.values;
    if w[0] <= 0.0 {
        return Err(Error::Singular(format!(
            "ρ is singular (smallest eigenvalue {:e}); regularize first",
            w[0]
        )));
    }
    let uh = u.adjoint();
    let l_sld: Vec<HermMatrix> = model
        .derivs
        .iter()
        .map(|dj| {
            let mut t = &uh * dj.mat() * u;
            for a in 0..d {
                for b in 0..d {
                    let s = w[a] + w[b];
                    t[(a, b)] = if s < SLD_FLOOR { C64::new(0.0, 0.0) } else { t[(a, b)] * (2.0 / s) };
                }
            }
            HermMatrix::symmetrized(u * t * &uh)
        })
        .collect();
    let j_sld = RMat::from_fn(n, n, |j, k| model.derivs[j].inner(&l_sld[k]));
    let j_sld = (&j_sld + j_sld.transpose()) * 0.5;

    let rho_inv = model.rho.inverse()?;
    let l_rld: Vec<CMat> = model.derivs.iter().map(|dj| rho_inv.mat() * dj.mat()).collect();
    let mut j_rld = CMat::from_fn(n, n, |j, k| (model.derivs[j].mat() * &l_rld[k]).trace());
    j_rld = (&j_rld + j_rld.adjoint()) * C64::new(0.5, 0.0);
    Ok(QfiMatrices { j_sld, j_rld, l_sld, l_rld })
}

/// Inverse of a symmetric positive definite matrix, rejecting near-singular
/// input.
pub(crate) fn spd_inverse(j: &RMat, what: &str) -> Result<RMat> {
    let (w, v) = eig_sym(j)?;
    let top = w.last().copied().unwrap_or(0.0).abs().max(1e-300);
    if w[0] <= 1e-12 * top {
        return Err(Error::Singular(format!("{what} is singular (eigenvalues {:e} .. {:e})", w[0], top)));
    }
    let inv = RMat::from_diagonal(&nalgebra::DVector::from_iterator(w.len(), w.iter().map(|x| 1.0 / x)));
    Ok(&v * inv * v.transpose())
}

fn sym_sqrt(a: &RMat) -> Result<RMat> {
    let (w, v) = eig_sym(a)?;
    let s = RMat::from_diagonal(&nalgebra::DVector::from_iterator(w.len(), w.iter().map(|x| x.max(0.0).sqrt())));
    Ok(&v * s * v.transpose())
}

fn trace_product(a: &RMat, b: &RMat) -> f64 {
    a.component_mul(&b.transpose()).sum()
}

/// `Tr[W J_SLD⁻¹]`.
pub fn sld_crb(model: &StatModel) -> Result<BoundReport> {
    let q = sld_rld(model)?;
    let jinv = spd_inverse(&q.j_sld, "SLD QFI")?;
    let mut r = BoundReport::new(BoundKind::Sld, trace_product(&model.weight, &jinv), Method::ClosedForm, 0.0);
    r.note = weight_note(model);
    Ok(r)
}

/// `Tr[W Re J⁻¹] + ‖√W Im J⁻¹ √W‖₁` with the RLD Fisher matrix.
pub fn rld_crb(model: &StatModel) -> Result<BoundReport> {
    let q = sld_rld(model)?;
    let n = model.n();
    let jinv = q
        .j_rld
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("RLD QFI is singular".into()))?;
    let re = RMat::from_fn(n, n, |j, k| jinv[(j, k)].re);
    let im = RMat::from_fn(n, n, |j, k| jinv[(j, k)].im);
    let sw = sym_sqrt(&model.weight)?;
    let t = &sw * im * &sw;
    let tc = CMat::from_fn(n, n, |j, k| C64::new(t[(j, k)], 0.0));
    let imag_term = trace_norm_general(&tc);
    let value = trace_product(&model.weight, &re) + imag_term;
    let mut r = BoundReport::new(BoundKind::Rld, value, Method::ClosedForm, 0.0).residual("imaginary_term", imag_term);
    r.note = weight_note(model);
    Ok(r)
}

/// Gill-Massar bound for `copies` copies measured individually:
/// `(Tr √(J^{-1/2} W J^{-1/2}))² / (k(d-1))`, which is `(Tr J^{-1/2})²/(k(d-1))`
/// for `W = 1`.
pub fn gmcrb(model: &StatModel, copies: usize) -> Result<BoundReport> {
    if copies == 0 {
        return Err(Error::InvalidModel("copies must be positive".into()));
    }
    let q = sld_rld(model)?;
    let jinv = spd_inverse(&q.j_sld, "SLD QFI")?;
    let jis = sym_sqrt(&jinv)?;
    let inner = &jis * &model.weight * &jis;
    let (w, _) = eig_sym(&inner)?;
    let t: f64 = w.iter().map(|x| x.max(0.0).sqrt()).sum();
    let value = t * t / (copies as f64 * (model.d as f64 - 1.0));
    Ok(BoundReport::new(BoundKind::Gmcrb, value, Method::ClosedForm, 0.0).residual("copies", copies as f64))
}

fn ensure_usable(sol: &SdpSolution, what: &str) -> Result<()> {
    if sol.is_usable() {
        Ok(())
    } else {
        Err(Error::Solver(format!(
            "{what} SDP ended with status {:?} after {} iterations (gap {:e}, primal infeasibility {:e}, dual infeasibility {:e})",
            sol.status, sol.iterations, sol.gap, sol.primal_infeas, sol.dual_infeas
        )))
    }
}

/// Holevo bound with the optimal `V` and unbiased operators.
#[derive(Clone, Debug)]
pub struct HcrbResult {
    pub report: BoundReport,
    pub v: RMat,
    pub x: Vec<HermMatrix>,
}

pub fn hcrb_detailed(model: &StatModel, opts: &SdpOptions) -> Result<HcrbResult> {
    let prog = sdp::build_hcrb(model)?;
    let sol = sdp::solve(&prog.problem, opts)?;
    ensure_usable(&sol, "HCRB")?;
    let (v, x) = prog.extract(&sol);
    let mut r = BoundReport::new(BoundKind::Hcrb, prog.value(&sol), Method::Sdp, prog.correction())
        .residual("primal_side_value", prog.primal_side_value(&sol))
        .residual("primal_infeas", sol.primal_infeas)
        .residual("dual_infeas", sol.dual_infeas)
        .residual("lub", lub_residual(model, &x));
    r.gap = Some(sol.gap);
    r.solver = Some(SolverStats::from(&sol, prog.problem.m()));
    Ok(HcrbResult { report: r, v, x })
}

pub fn hcrb(model: &StatModel, opts: &SdpOptions) -> Result<BoundReport> {
    Ok(hcrb_detailed(model, opts)?.report)
}

#[derive(Clone, Debug)]
pub struct NhcrbResult {
    pub report: BoundReport,
    pub l: crate::linalg::CqMatrix,
    pub x: Vec<HermMatrix>,
}

pub fn nhcrb_detailed(model: &StatModel, opts: &SdpOptions) -> Result<NhcrbResult> {
    let prog = sdp::build_nhcrb(model)?;
    let sol = sdp::solve(&prog.problem, opts)?;
    ensure_usable(&sol, "NHCRB")?;
    let (l, x) = prog.extract(&sol)?;
    let mut r = BoundReport::new(BoundKind::Nhcrb, prog.value(&sol), Method::Sdp, prog.correction())
        .residual("primal_side_value", prog.primal_side_value(&sol))
        .residual("primal_infeas", sol.primal_infeas)
        .residual("dual_infeas", sol.dual_infeas)
        .residual("lub", lub_residual(model, &x));
    r.gap = Some(sol.gap);
    r.solver = Some(SolverStats::from(&sol, prog.problem.m()));
    r.note = Some(format!("{:?} form", prog.form).to_lowercase());
    Ok(NhcrbResult { report: r, l, x })
}

pub fn nhcrb(model: &StatModel, opts: &SdpOptions) -> Result<BoundReport> {
    Ok(nhcrb_detailed(model, opts)?.report)
}

/// Unbiased operators built from the SLDs: `X_j = θ*_j + Σ_k (J⁻¹)_jk L_k`.
pub fn sld_operators(model: &StatModel) -> Result<Vec<HermMatrix>> {
    let q = sld_rld(model)?;
    let jinv = spd_inverse(&q.j_sld, "SLD QFI")?;
    let d = model.d;
    let n = model.n();
    Ok((0..n)
        .map(|j| {
            let mut m = CMat::identity(d, d) * C64::new(model.theta_star[j], 0.0);
            for k in 0..n {
                m += q.l_sld[k].mat() * C64::new(jinv[(j, k)], 0.0);
            }
            HermMatrix::symmetrized(m)
        })
        .collect())
}

/// `Tr Z[X] + Σ_{j,k} ‖ρ[X_j, X_k]‖₁ - θ*ᵀθ*`, an upper bound on the
/// Nagaoka-Hayashi bound for identity weight. `x` defaults to
/// [`sld_operators`]. The report also carries `n·C_SLD`.
pub fn nhcrb_upper_suzuki(model: &StatModel, x: Option<&[HermMatrix]>) -> Result<BoundReport> {
    if !model.is_identity_weight() {
        return Err(Error::Unsupported("the commutator upper bound is implemented for W = 1 only".into()));
    }
    let own;
    let x = match x {
        Some(x) => x,
        None => {
            own = sld_operators(model)?;
            &own
        }
    };
    let n = model.n();
    if x.len() != n {
        return Err(Error::Dimension(format!("{} operators for {n} parameters", x.len())));
    }
    let lub = lub_residual(model, x);
    if lub > 1e-8 {
        return Err(Error::InvalidModel(format!("operators are not locally unbiased (residual {lub:e})")));
    }
    let rho = model.rho.mat();
    let sr = sqrtm_psd(&model.rho)?;
    let mut tr_z = 0.0;
    let mut comm = 0.0;
    let mut comm_sandwich = 0.0;
    for j in 0..n {
        tr_z += (rho * x[j].mat() * x[j].mat()).trace().re;
        for k in 0..n {
            if j == k {
                continue;
            }
            let c = x[j].mat() * x[k].mat() - x[k].mat() * x[j].mat();
            comm += trace_norm_general(&(rho * &c));
            comm_sandwich += trace_norm_general(&(sr.mat() * &c * sr.mat()));
        }
    }
    let corr = model.theta_correction();
    let n_sld = n as f64 * sld_crb(model)?.value;
    Ok(BoundReport::new(BoundKind::NhcrbUpperSuzuki, tr_z + comm - corr, Method::Inequality, corr)
        .residual("n_times_sld", n_sld)
        .residual("sandwiched_value", tr_z + comm_sandwich - corr)
        .residual("lub", lub))
}

/// Closed forms at the maximally mixed state with `n` Gell-Mann parameters.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MmAnalytic {
    pub hcrb: f64,
    /// Exact when `n = d²-1`, an upper bound otherwise.
    pub nhcrb_upper: f64,
    pub exact: bool,
    /// `((d²-1)/d, (d²-1)(d+1)/d)`.
    pub full: (f64, f64),
}

pub fn analytic_mm(d: usize, n: usize) -> Result<MmAnalytic> {
    let nmax = d * d - 1;
    if d < 2 || n == 0 || n > nmax {
        return Err(Error::InvalidModel(format!("need 1 <= n <= d²-1, got d={d}, n={n}")));
    }
    let df = d as f64;
    let nf = n as f64;
    let full = nmax as f64;
    Ok(MmAnalytic {
        hcrb: nf / df,
        nhcrb_upper: nf * (df + 1.0) / df,
        exact: n == nmax,
        full: (full / df, full * (df + 1.0) / df),
    })
}

/// Holevo and Nagaoka-Hayashi values for `p|+⟩⟨+| + (1-p) 1/d` with all
/// Gell-Mann parameters.
pub fn analytic_rho_max(d: usize, p: f64) -> (f64, f64) {
    let d = d as f64;
    let h = (d * d - 1.0) / d + p * (d - 1.0) - (d - 1.0) / d * p * p;
    let nh = (d * d + 1.0) / 2.0 - (d * d - 4.0 * d + 5.0) / 2.0 * p * p
        + (d * d * d + 2.0 * d * d - 3.0 * d - 2.0) / (2.0 * d) * (1.0 - p * p).max(0.0).sqrt();
    (h, nh)
}

/// Qubit closed forms in terms of the Bloch length `r`:
/// `(3 - r² + 2r, 5 - r² + 4√(1-r²))`. Only their ratio is normalization-free.
pub fn analytic_qubit(r: f64) -> (f64, f64) {
    (3.0 - r * r + 2.0 * r, 5.0 - r * r + 4.0 * (1.0 - r * r).max(0.0).sqrt())
}

/// `p` of the depolarized family with the given purity.
pub fn rho_max_p_for_purity(d: usize, purity: f64) -> f64 {
    let d = d as f64;
    ((purity * d - 1.0) / (d - 1.0)).max(0.0).sqrt()
}

/// `(d²+d-1-P)/(d-P)`, the largest Nagaoka-Hayashi to Holevo ratio possible at
/// purity `P` for full-parameter orthonormal models. At most `d+2`.
pub fn ratio_cap(d: usize, purity: f64) -> f64 {
    let d = d as f64;
    (d * d + d - 1.0 - purity) / (d - purity)
}

fn require_full_onb(model: &StatModel) -> Result<()> {
    let d = model.d;
    let n = model.n();
    if n != d * d - 1 {
        return Err(Error::InvalidModel("needs a full-parameter model".into()));
    }
    let g = model.gram();
    let defect = (&g - RMat::identity(n, n)).abs().max();
    if defect > 1e-10 {
        return Err(Error::InvalidModel(format!("derivatives are not orthonormal (defect {defect:e})")));
    }
    if !model.is_identity_weight() {
        return Err(Error::InvalidModel("needs identity weight".into()));
    }
    Ok(())
}

/// `d - P(ρ)`, a lower bound on the Holevo bound of full orthonormal models.
pub fn hcrb_lower_purity(model: &StatModel) -> Result<BoundReport> {
    require_full_onb(model)?;
    let p = model.purity();
    let d = model.d as f64;
    Ok(BoundReport::new(BoundKind::HcrbLower, d - p, Method::Inequality, model.theta_correction())
        .residual("purity", p)
        .residual("ratio_cap", ratio_cap(model.d, p)))
}

/// `d² + d - 1 - P(ρ)`, an upper bound on the Nagaoka-Hayashi bound of full
/// orthonormal models.
pub fn nhcrb_upper_mm(model: &StatModel) -> Result<BoundReport> {
    require_full_onb(model)?;
    let p = model.purity();
    let d = model.d as f64;
    Ok(BoundReport::new(BoundKind::NhcrbUpperMm, d * d + d - 1.0 - p, Method::Inequality, model.theta_correction())
        .residual("purity", p)
        .residual("ratio_cap", ratio_cap(model.d, p)))
}

/// `𝕃*_jk = (d+1)/(d+2) ({B_j, B_k} + δ_jk 1)` for an orthonormal traceless
/// basis `B`.
pub fn optimal_l_mm(basis: &[HermMatrix]) -> crate::linalg::CqMatrix {
    let n = basis.len();
    let d = basis[0].dim();
    let c = (d as f64 + 1.0) / (d as f64 + 2.0);
    crate::linalg::CqMatrix::from_blocks(n, d, |j, k| {
        let mut m = basis[j].dot(&basis[k]) + basis[k].dot(&basis[j]);
        if j == k {
            m += CMat::identity(d, d);
        }
        m * C64::new(c, 0.0)
    })
}

fn block_matrix(n: usize, d: usize, f: impl Fn(usize, usize) -> CMat) -> CMat {
    let mut out = CMat::zeros(n * d, n * d);
    for j in 0..n {
        for k in 0..n {
            out.view_mut((j * d, k * d), (d, d)).copy_from(&f(j, k));
        }
    }
    out
}

/// Largest distance of an eigenvalue from the set `{0, 2}`.
fn spectrum_defect(m: CMat) -> Result<f64> {
    let e = eig_herm(&HermMatrix::symmetrized(m))?;
    Ok(e.values.iter().map(|&w| w.abs().min((w - 2.0).abs())).fold(0.0, f64::max))
}

/// Primal and dual optimality certificates for the Nagaoka-Hayashi program at
/// the maximally mixed state.
#[derive(Clone, Debug, Serialize)]
pub struct MmCertificateReport {
    pub d: usize,
    pub n: usize,
    pub closed_form: f64,
    /// `Σ_j Tr(ρ_m 𝕃*_jj)`, evaluated numerically.
    pub primal_value: f64,
    /// `Σ_j 2 y_jj + √d y_5` from the dual certificate.
    pub dual_value: f64,
    /// Smallest eigenvalue of `𝕃* - ΛΛᵀ`.
    pub primal_min_eig: f64,
    /// Smallest eigenvalue of the (rescaled) dual slack.
    pub dual_min_eig: f64,
    pub m_spectrum_defect: f64,
    pub n_spectrum_defect: f64,
    pub passed: bool,
}

pub fn verify_mm_certificates(d: usize) -> Result<MmCertificateReport> {
    if !(2..=8).contains(&d) {
        return Err(Error::Unsupported(format!("certificate suite supports d in 2..=8, got {d}")));
    }
    let basis = gmm_basis(d)?;
    let lam = &basis.matrices;
    let n = lam.len();
    let df = d as f64;
    let nf = n as f64;
    let closed_form = nf * (df + 1.0) / df;
    let prod = |j: usize, k: usize| lam[j].dot(&lam[k]);
    let id = CMat::identity(d, d);
    let delta = |j: usize, k: usize| if j == k { id.clone() } else { CMat::zeros(d, d) };

    let l = optimal_l_mm(lam);
    let rho_m = HermMatrix::identity(d).scale(1.0 / df);
    let primal_value: f64 = (0..n).map(|j| (rho_m.mat() * l.block(j, j)).trace().re).sum();
    let xx = block_matrix(n, d, prod);
    let primal_min_eig = eig_herm(&HermMatrix::symmetrized(l.flat() - xx))?.values[0];

    // y2_jk = (d+1)/d δ_jk, y5 = -n(d+1)/(d√d), c2_jj = 2, c5 = √d
    let y2 = (df + 1.0) / df;
    let y5 = -nf * (df + 1.0) / (df * df.sqrt());
    let dual_value = nf * 2.0 * y2 + df.sqrt() * y5;

    // F_0 - Σ y* F_k, scaled by d
    let dim = (n + 1) * d;
    let mut slack = CMat::zeros(dim, dim);
    for j in 0..n {
        for k in 0..n {
            let b = delta(j, k) + prod(j, k) - prod(k, j);
            slack.view_mut((j * d, k * d), (d, d)).copy_from(&b);
        }
        let g = lam[j].mat() * C64::new(-(df + 1.0), 0.0);
        slack.view_mut((j * d, n * d), (d, d)).copy_from(&g);
        slack.view_mut((n * d, j * d), (d, d)).copy_from(&g);
    }
    slack.view_mut((n * d, n * d), (d, d)).copy_from(&(&id * C64::new(nf * (df + 1.0) / df, 0.0)));
    let dual_min_eig = eig_herm(&HermMatrix::symmetrized(slack))?.values[0];

    let m_mat = block_matrix(n, d, |j, k| delta(j, k) - prod(j, k) * C64::new(1.0 / (df - 1.0), 0.0) - prod(k, j));
    let n_mat = block_matrix(n, d, |j, k| delta(j, k) + prod(k, j) - prod(j, k) * C64::new(1.0 / (df + 1.0), 0.0));
    let m_spectrum_defect = spectrum_defect(m_mat)?;
    let n_spectrum_defect = spectrum_defect(n_mat)?;

    let tol = 1e-9;
    let passed = primal_min_eig >= -tol
        && dual_min_eig >= -tol
        && m_spectrum_defect <= tol
        && n_spectrum_defect <= tol
        && (primal_value - closed_form).abs() <= tol * closed_form
        && (dual_value - closed_form).abs() <= tol * closed_form;
    Ok(MmCertificateReport {
        d,
        n,
        closed_form,
        primal_value,
        dual_value,
        primal_min_eig,
        dual_min_eig,
        m_spectrum_defect,
        n_spectrum_defect,
        passed,
    })
}

/// The block operator `[[1, 𝕏ᵀ], [𝕏, 𝕃*]]` on `ℝ^{n+1} ⊗ ℂ^d` built from the
/// model's derivative basis.
pub fn x_sol(model: &StatModel) -> CMat {
    let d = model.d;
    let n = model.n();
    let l = optimal_l_mm(&model.derivs);
    block_matrix(n + 1, d, |j, k| match (j, k) {
        (0, 0) => CMat::identity(d, d),
        (0, k) => model.derivs[k - 1].mat().clone(),
        (j, 0) => model.derivs[j - 1].mat().clone(),
        (j, k) => l.block(j - 1, k - 1),
    })
}

/// Upper bound on the most-informative bound from the feasible point
/// `X_sol`, with its constraints checked. Full orthonormal models with
/// identity weight only.
pub fn micrb_feasible(model: &StatModel) -> Result<BoundReport> {
    require_full_onb(model)?;
    let d = model.d;
    let n = model.n();
    let x = x_sol(model);
    let blk = |j: usize, k: usize| x.view((j * d, k * d), (d, d)).into_owned();
    let c1 = (blk(0, 0) - CMat::identity(d, d)).camax();
    let mut c2: f64 = 0.0;
    for j in 1..=n {
        for k in 0..n {
            let dk = model.derivs[k].mat();
            let v = 0.5 * ((dk * blk(0, j)).trace().re + (dk * blk(j, 0)).trace().re);
            let e = if j - 1 == k { 1.0 } else { 0.0 };
            c2 = c2.max((v - e).abs());
        }
    }
    let min_eig = eig_herm(&HermMatrix::symmetrized(x.clone()))?.values[0];
    let raw: f64 = (1..=n).map(|j| (model.rho.mat() * blk(j, j)).trace().re).sum();
    let corr = model.theta_correction();
    let tol = 1e-10;
    let mut r = BoundReport::new(BoundKind::MicrbUpper, raw - corr, Method::FeasiblePoint, corr)
        .residual("c1", c1)
        .residual("c2", c2)
        .residual("min_eig", min_eig);
    r.certified = Some(c1 <= tol && c2 <= tol && min_eig >= -tol);
    Ok(r)
}

/// Decomposition `X_sol = Σ_l Ξ_l ⊗ Π_l` with `Ξ_l = (1, ξ_l)(1, ξ_l)ᵀ`.
#[derive(Clone, Debug, Serialize)]
pub struct SeparableReport {
    pub d: usize,
    /// `max |X_sol - Σ Ξ_l ⊗ Π_l|`.
    pub reconstruction_residual: f64,
    /// `|𝕋r[(1⊗ρ_m)(X_sol - Σ Ξ_l ⊗ Π_l)]|`: the decomposition's objective
    /// against the feasible point's.
    pub value_residual: f64,
    /// Residual of `λ_j = Σ_l ξ_jl Π_l`.
    pub estimator_residual: f64,
    /// Smallest eigenvalue over all `Ξ_l`.
    pub xi_min_eig: f64,
    /// Largest second eigenvalue over all `Ξ_l` (zero for rank one).
    pub xi_rank_defect: f64,
    pub pi_min_eig: f64,
    /// `Tr Ξ_l = 1 + Σ_j ξ_jl²`.
    pub xi_traces: Vec<f64>,
    pub passed: bool,
}

pub fn verify_xsol_separable(d: usize, povm: &Povm) -> Result<SeparableReport> {
    if povm.dim() != d {
        return Err(Error::Dimension(format!("POVM dimension {} != {d}", povm.dim())));
    }
    let model = gmm_model(d, &vec![0.0; d * d - 1])?;
    let n = model.n();
    let fit = extract_estimator(&model.derivs, povm)?;
    let x = x_sol(&model);
    let mut recon = CMat::zeros((n + 1) * d, (n + 1) * d);
    let mut xi_min_eig = f64::INFINITY;
    let mut xi_rank_defect: f64 = 0.0;
    let mut pi_min_eig = f64::INFINITY;
    let mut xi_traces = Vec::with_capacity(povm.len());
    for (l, pi) in povm.elements().iter().enumerate() {
        let mut v = vec![1.0];
        v.extend((0..n).map(|j| fit.xi[(j, l)]));
        let xi = RMat::from_fn(n + 1, n + 1, |a, b| v[a] * v[b]);
        let (w, _) = eig_sym(&xi)?;
        xi_min_eig = xi_min_eig.min(w[0]);
        if w.len() > 1 {
            xi_rank_defect = xi_rank_defect.max(w[w.len() - 2].abs());
        }
        xi_traces.push(xi.trace());
        pi_min_eig = pi_min_eig.min(pi.min_eig()?);
        for a in 0..=n {
            for b in 0..=n {
                let mut view = recon.view_mut((a * d, b * d), (d, d));
                view += pi.mat() * C64::new(xi[(a, b)], 0.0);
            }
        }
    }
    let diff = recon - x;
    let reconstruction_residual = diff.camax();
    let value_residual = ((1..=n).map(|j| diff.view((j * d, j * d), (d, d)).trace().re).sum::<f64>() / d as f64).abs();
    let passed = reconstruction_residual <= 1e-8 && xi_min_eig >= -1e-10 && pi_min_eig >= -1e-10;
    Ok(SeparableReport {
        d,
        reconstruction_residual,
        value_residual,
        estimator_residual: fit.residual,
        xi_min_eig,
        xi_rank_defect,
        pi_min_eig,
        xi_traces,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gmm_model, mm_subset_model};

    fn mm(d: usize) -> StatModel {
        gmm_model(d, &vec![0.0; d * d - 1]).unwrap()
    }

    #[test]
    fn qfi_at_maximally_mixed() {
        for d in 2..=4 {
            let q = sld_rld(&mm(d)).unwrap();
            let n = d * d - 1;
            assert!((&q.j_sld - RMat::identity(n, n) * d as f64).abs().max() < 1e-10);
            for j in 0..n {
                assert!((q.j_rld[(j, j)].re - d as f64).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn sld_and_rld_closed_forms() {
        let m = mm(3);
        assert!((sld_crb(&m).unwrap().value - 8.0 / 3.0).abs() < 1e-10);
        assert!((rld_crb(&m).unwrap().value - 8.0 / 3.0).abs() < 1e-10);
        let s = mm_subset_model(3, &[0, 4, 7]).unwrap();
        assert!((sld_crb(&s).unwrap().value - 1.0).abs() < 1e-10);
    }

    // Fidelity susceptibility: F(ρ, ρ + t∂ρ) ≈ 1 - J t²/8.
    #[test]
    fn sld_matches_fidelity_expansion() {
        let rho = HermMatrix::diag(&[0.8, 0.2]);
        let lam3 = crate::gellmann::gmm_matrix(2, 2);
        let m = StatModel::new(rho.clone(), vec![lam3.clone()], None, None).unwrap();
        let j = sld_rld(&m).unwrap().j_sld[(0, 0)];
        let sr = sqrtm_psd(&rho).unwrap();
        let fid = |t: f64| {
            let sigma = &rho + &lam3.scale(t);
            let inner = HermMatrix::symmetrized(sr.mat() * sigma.mat() * sr.mat());
            sqrtm_psd(&inner).unwrap().trace()
        };
        // The odd orders cancel in the symmetric difference.
        let t = 1e-3;
        let j_fd = 4.0 * (2.0 - fid(t) - fid(-t)) / (t * t);
        assert!((j - j_fd).abs() < 1e-5 * j.max(1.0), "{j} vs {j_fd}");
    }

    #[test]
    fn gmcrb_closed_forms() {
        let s = mm_subset_model(3, &[0, 1, 2, 3]).unwrap();
        assert!((gmcrb(&s, 1).unwrap().value - 16.0 / 6.0).abs() < 1e-10);
        assert!((gmcrb(&s, 2).unwrap().value - 8.0 / 6.0).abs() < 1e-10);
    }

    #[test]
    fn analytic_values() {
        let a = analytic_mm(5, 24).unwrap();
        assert!((a.hcrb - 4.8).abs() < 1e-14 && (a.nhcrb_upper - 28.8).abs() < 1e-12);
        let (h, nh) = analytic_rho_max(3, 0.0);
        assert!((h - 8.0 / 3.0).abs() < 1e-14 && (nh - 32.0 / 3.0).abs() < 1e-12);
        let (h, nh) = analytic_rho_max(4, 1.0);
        assert!((h - 6.0).abs() < 1e-12 && (nh - 6.0).abs() < 1e-12);
        assert!((ratio_cap(3, 1.0) - 5.0).abs() < 1e-14);
        assert!((ratio_cap(3, 0.5) - 4.2).abs() < 1e-12);
    }

    #[test]
    fn mm_certificates_small() {
        for d in 2..=4 {
            let r = verify_mm_certificates(d).unwrap();
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn micrb_point_at_mm() {
        let r = micrb_feasible(&mm(3)).unwrap();
        assert_eq!(r.certified, Some(true));
        assert!((r.value - 32.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn suzuki_bound_brackets() {
        let r = nhcrb_upper_suzuki(&mm(2), None).unwrap();
        assert!(r.value >= 4.5 - 1e-9);
        let r = nhcrb_upper_suzuki(&mm(3), None).unwrap();
        assert!(r.value >= 32.0 / 3.0 - 1e-9);
        // Each commutator term is at most Tr ρ(X_j² + X_k²), so the value is
        // at most (2n - 1) C_SLD. The tighter n C_SLD does not hold here.
        let n_sld = r.residuals["n_times_sld"];
        assert!(r.value <= (2.0 * 8.0 - 1.0) / 8.0 * n_sld + 1e-9);
        assert!(r.value > n_sld);
    }
}

//! POVMs: validation, Weyl-Heisenberg SIC construction, classical Fisher
//! information and a local optimizer over rank-one `m`-outcome measurements.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::bounds::{self, spd_inverse, BoundKind, BoundReport, Method};
use crate::error::{Error, Result};
use crate::linalg::{eig_herm, CMat, HermMatrix, RMat, C64};
use crate::model::StatModel;
use crate::sdp::SdpOptions;

pub const POVM_TOL: f64 = 1e-10;
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct Povm {
    d: usize,
    elements: Vec<HermMatrix>,
}

impl Povm {
    /// Checks positivity (to `-1e-10`) and closure `Σ Π_l = 1` (to `1e-10`).
    pub fn new(elements: Vec<HermMatrix>) -> Result<Self> {
        let d = elements.first().map(|e| e.dim()).ok_or_else(|| Error::InvalidModel("empty POVM".into()))?;
        let mut sum = CMat::zeros(d, d);
        for (l, e) in elements.iter().enumerate() {
            if e.dim() != d {
                return Err(Error::Dimension(format!("element {l} has dimension {}, expected {d}", e.dim())));
            }
            let w = e.min_eig()?;
            if w < -POVM_TOL {
                return Err(Error::InvalidModel(format!("element {l} not PSD (min eigenvalue {w:e})")));
            }
            sum += e.mat();
        }
        let defect = (sum - CMat::identity(d, d)).camax();
        if defect > POVM_TOL {
            return Err(Error::InvalidModel(format!("elements sum to identity only within {defect:e}")));
        }
        Ok(Self { d, elements })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[HermMatrix] {
        &self.elements
    }

    /// `{U Π_l U†}`.
    pub fn conjugated(&self, u: &CMat) -> Result<Povm> {
        Povm::new(self.elements.iter().map(|e| e.conjugate_by(u)).collect())
    }

    /// `Tr(Π_a Π_b)` for all `a < b`.
    pub fn pairwise_overlaps(&self) -> Vec<f64> {
        let m = self.len();
        let mut out = Vec::with_capacity(m * (m - 1) / 2);
        for a in 0..m {
            for b in (a + 1)..m {
                out.push(self.elements[a].inner(&self.elements[b]));
            }
        }
        out
    }

    /// Overlaps of the normalized elements `Π_l / Tr Π_l`, scaled by
    /// `1/d²` so that a SIC gives `1/(d²(d+1))` throughout.
    pub fn normalized_overlaps(&self) -> Vec<f64> {
        let m = self.len();
        let dd = (self.d * self.d) as f64;
        let tr: Vec<f64> = self.elements.iter().map(|e| e.trace()).collect();
        let mut out = Vec::with_capacity(m * (m - 1) / 2);
        for a in 0..m {
            for b in (a + 1)..m {
                out.push(self.elements[a].inner(&self.elements[b]) / (tr[a] * tr[b] * dd));
            }
        }
        out
    }

    pub fn to_json(&self) -> PovmJson {
        PovmJson {
            d: self.d,
            elements: self
                .elements
                .iter()
                .map(|e| {
                    let mut v = Vec::with_capacity(self.d * self.d);
                    for i in 0..self.d {
                        for j in 0..self.d {
                            let z = e.mat()[(i, j)];
                            v.push([z.re, z.im]);
                        }
                    }
                    v
                })
                .collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Povm> {
        let j: PovmJson = serde_json::from_str(text)?;
        j.into_povm()
    }
}

/// On-disk POVM format: row-major `[re, im]` lists, one per element.
#[derive(Clone, Debug, Serialize, serde::Deserialize)]
pub struct PovmJson {
    pub d: usize,
    pub elements: Vec<Vec<[f64; 2]>>,
}

impl PovmJson {
    pub fn into_povm(self) -> Result<Povm> {
        let d = self.d;
        let els = self
            .elements
            .into_iter()
            .enumerate()
            .map(|(l, v)| {
                if v.len() != d * d {
                    return Err(Error::Parse(format!("element {l} has {} entries, expected {}", v.len(), d * d)));
                }
                let m = CMat::from_fn(d, d, |i, j| C64::new(v[i * d + j][0], v[i * d + j][1]));
                HermMatrix::new(m)
            })
            .collect::<Result<Vec<_>>>()?;
        Povm::new(els)
    }
}

/// A SIC POVM `Π_l = |ψ_l⟩⟨ψ_l|/d` over the Weyl-Heisenberg orbit of a
/// fiducial.
#[derive(Clone, Debug)]
pub struct SicPovm {
    pub povm: Povm,
    pub fiducial: Vec<C64>,
    /// `max |Tr(Π_a Π_b) - 1/(d²(d+1))|` over `a ≠ b`.
    pub overlap_residual: f64,
}

const FIDUCIALS: &str = include_str!("../data/sic_fiducials.txt");

/// `X^a Z^b ψ` with `X|j⟩ = |j+1⟩`, `Z|j⟩ = ω^j |j⟩`.
pub fn weyl_heisenberg(psi: &[C64], a: usize, b: usize) -> Vec<C64> {
    let d = psi.len();
    let w = 2.0 * std::f64::consts::PI / d as f64;
    let z: Vec<C64> = (0..d).map(|j| psi[j] * C64::from_polar(1.0, w * ((b * j) % d) as f64)).collect();
    (0..d).map(|j| z[(j + d - a % d) % d]).collect()
}

fn shipped_fiducial(d: usize) -> Result<Vec<C64>> {
    let mut lines = FIDUCIALS.lines().filter(|l| !l.trim_start().starts_with('#') && !l.trim().is_empty());
    while let Some(h) = lines.next() {
        let dim: usize = h
            .split_whitespace()
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad fiducial header {h:?}")))?;
        let mut v = Vec::with_capacity(dim);
        for _ in 0..dim {
            let l = lines.next().ok_or_else(|| Error::Parse("truncated fiducial file".into()))?;
            let mut it = l.split_whitespace().map(|s| s.parse::<f64>());
            match (it.next(), it.next()) {
                (Some(Ok(re)), Some(Ok(im))) => v.push(C64::new(re, im)),
                _ => return Err(Error::Parse(format!("bad amplitude line {l:?}"))),
            }
        }
        if dim == d {
            return Ok(v);
        }
    }
    Err(Error::Unsupported(format!("no SIC fiducial shipped for d={d}")))
}

fn overlap_residuals(psi: &[C64]) -> Vec<f64> {
    let d = psi.len();
    let target = 1.0 / (d as f64 + 1.0);
    let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
    let mut r = vec![norm - 1.0];
    for a in 0..d {
        for b in 0..d {
            if a == 0 && b == 0 {
                continue;
            }
            let phi = weyl_heisenberg(psi, a, b);
            let z: C64 = psi.iter().zip(&phi).map(|(p, q)| p.conj() * q).sum();
            r.push(z.norm_sqr() - target);
        }
    }
    r
}

/// Gauss-Newton on `|⟨ψ|D_ab|ψ⟩|² = 1/(d+1)`, `‖ψ‖ = 1`, with a
/// finite-difference Jacobian over the real and imaginary parts.
fn polish_fiducial(mut psi: Vec<C64>) -> Vec<C64> {
    let d = psi.len();
    let h = 1e-7;
    for _ in 0..20 {
        let r0 = overlap_residuals(&psi);
        let err = r0.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if err < 1e-15 {
            break;
        }
        let mut jac = RMat::zeros(r0.len(), 2 * d);
        for c in 0..2 * d {
            let mut p = psi.clone();
            let mut q = psi.clone();
            let e = if c < d { C64::new(h, 0.0) } else { C64::new(0.0, h) };
            p[c % d] += e;
            q[c % d] -= e;
            let (rp, rq) = (overlap_residuals(&p), overlap_residuals(&q));
            for i in 0..r0.len() {
                jac[(i, c)] = (rp[i] - rq[i]) / (2.0 * h);
            }
        }
        let svd = jac.svd(true, true);
        let rhs = nalgebra::DVector::from_vec(r0);
        let Ok(step) = svd.solve(&rhs, 1e-10) else { break };
        let cand: Vec<C64> = (0..d).map(|i| psi[i] - C64::new(step[i], step[i + d])).collect();
        let new_err = overlap_residuals(&cand).iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if new_err >= err {
            break;
        }
        psi = cand;
    }
    psi
}

fn sic_from_fiducial(fiducial: Vec<C64>) -> Result<SicPovm> {
    let d = fiducial.len();
    let mut elements = Vec::with_capacity(d * d);
    for a in 0..d {
        for b in 0..d {
            elements.push(HermMatrix::projector(&weyl_heisenberg(&fiducial, a, b)).scale(1.0 / d as f64));
        }
    }
    let target = 1.0 / ((d * d) as f64 * (d as f64 + 1.0));
    let mut overlap_residual: f64 = 0.0;
    for a in 0..elements.len() {
        for b in (a + 1)..elements.len() {
            overlap_residual = overlap_residual.max((elements[a].inner(&elements[b]) - target).abs());
        }
    }
    let povm = Povm::new(elements)?;
    Ok(SicPovm { povm, fiducial, overlap_residual })
}

/// SIC POVM for `2 <= d <= 8`. `d = 2` uses the tetrahedron fiducial,
/// `d = 3` the Hesse fiducial `(0, 1, -1)/√2`; larger `d` a shipped numerical
/// fiducial polished by Gauss-Newton.
pub fn sic_povm(d: usize) -> Result<SicPovm> {
    let fid = match d {
        2 => {
            let c = 1.0 / 3f64.sqrt();
            vec![
                C64::new(((1.0 + c) / 2.0).sqrt(), 0.0),
                C64::from_polar(((1.0 - c) / 2.0).sqrt(), std::f64::consts::FRAC_PI_4),
            ]
        }
        3 => {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            vec![C64::new(0.0, 0.0), C64::new(s, 0.0), C64::new(-s, 0.0)]
        }
        4..=8 => polish_fiducial(shipped_fiducial(d)?),
        _ => return Err(Error::Unsupported(format!("SIC POVMs are available for d in 2..=8, not {d}"))),
    };
    sic_from_fiducial(fid)
}

/// Projective measurement in the computational basis.
pub fn computational_basis(d: usize) -> Povm {
    let els = (0..d)
        .map(|i| {
            let mut v = vec![0.0; d];
            v[i] = 1.0;
            HermMatrix::diag(&v)
        })
        .collect();
    Povm { d, elements: els }
}

#[derive(Clone, Debug)]
pub struct Cfi {
    pub matrix: RMat,
    /// Outcomes dropped for probability below the floor.
    pub dropped: usize,
}

/// `J_jk = Σ_l Tr(∂_j ρ Π_l) Tr(∂_k ρ Π_l) / Tr(ρ Π_l)`, dropping outcomes
/// with probability below `floor`.
pub fn cfi_with_floor(model: &StatModel, povm: &Povm, floor: f64) -> Result<Cfi> {
    if povm.dim() != model.d {
        return Err(Error::Dimension(format!("POVM dimension {} != model dimension {}", povm.dim(), model.d)));
    }
    let n = model.n();
    let mut j = RMat::zeros(n, n);
    let mut dropped = 0;
    for e in povm.elements() {
        let p = model.rho.inner(e);
        if p < floor {
            dropped += 1;
            continue;
        }
        let a: Vec<f64> = model.derivs.iter().map(|dj| dj.inner(e)).collect();
        for r in 0..n {
            for c in 0..n {
                j[(r, c)] += a[r] * a[c] / p;
            }
        }
    }
    if dropped == povm.len() {
        return Err(Error::Singular("every outcome probability is below the floor".into()));
    }
    Ok(Cfi { matrix: (&j + j.transpose()) * 0.5, dropped })
}

pub fn cfi(model: &StatModel, povm: &Povm) -> Result<Cfi> {
    cfi_with_floor(model, povm, PROB_FLOOR)
}

/// `Tr[W J⁻¹]` for the classical Fisher matrix of `povm`.
pub fn classical_crb(model: &StatModel, povm: &Povm) -> Result<BoundReport> {
    let f = cfi(model, povm)?;
    let jinv = spd_inverse(&f.matrix, "classical Fisher matrix").map_err(|e| match e {
        Error::Singular(s) => Error::Singular(format!("POVM is not informationally complete for this model: {s}")),
        e => e,
    })?;
    let value = model.weight.component_mul(&jinv).sum();
    let mut r = BoundReport {
        kind: BoundKind::Classical,
        value,
        method: Method::ClosedForm,
        gap: None,
        residuals: Default::default(),
        theta_correction: 0.0,
        solver: None,
        certified: None,
        note: None,
    };
    r.residuals.insert("dropped_outcomes".into(), f.dropped as f64);
    Ok(r)
}

/// `Tr[J_SLD⁻¹ J]`, at most `d - 1` for any POVM.
pub fn gill_massar_check(model: &StatModel, povm: &Povm) -> Result<f64> {
    let q = bounds::sld_rld(model)?;
    let jinv = spd_inverse(&q.j_sld, "SLD QFI")?;
    let f = cfi(model, povm)?;
    Ok(jinv.component_mul(&f.matrix).sum())
}

#[derive(Clone, Debug, Serialize)]
pub struct PovmOptOptions {
    /// Outcome count; defaults to `d²`.
    pub outcomes: Option<usize>,
    pub restarts: usize,
    pub iters: usize,
    pub seed: u64,
    /// Stop when the gradient norm falls below this.
    pub grad_tol: f64,
    /// Also solve the Nagaoka-Hayashi SDP and report the gap to it.
    pub compare_nhcrb: bool,
}

impl Default for PovmOptOptions {
    fn default() -> Self {
        Self { outcomes: None, restarts: 8, iters: 3000, seed: 0, grad_tol: 1e-10, compare_nhcrb: false }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RestartOutcome {
    pub seed: u64,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct PovmOptResult {
    pub povm: Povm,
    pub trace_crb: f64,
    /// Objective per iteration of the winning restart.
    pub history: Vec<f64>,
    pub restarts: Vec<RestartOutcome>,
    pub converged: bool,
    pub nhcrb: Option<f64>,
}

impl PovmOptResult {
    pub fn nhcrb_gap(&self) -> Option<f64> {
        self.nhcrb.map(|v| self.trace_crb - v)
    }
}

/// Frame parameterization `Π_l = A^{-1/2} v_l v_l† A^{-1/2}`, `A = Σ v_l v_l†`.
struct Frame<'a> {
    model: &'a StatModel,
    d: usize,
    m: usize,
}

struct Eval {
    f: f64,
    grad: Vec<f64>,
}

impl Frame<'_> {
    fn unpack(&self, x: &[f64]) -> Vec<Vec<C64>> {
        let (d, m) = (self.d, self.m);
        (0..m).map(|l| (0..d).map(|i| C64::new(x[2 * (l * d + i)], x[2 * (l * d + i) + 1])).collect()).collect()
    }

    fn elements(&self, v: &[Vec<C64>]) -> Result<(Vec<HermMatrix>, CMat, Vec<f64>, CMat)> {
        let d = self.d;
        let mut a = CMat::zeros(d, d);
        for vl in v {
            let col = nalgebra::DVector::from_column_slice(vl);
            a += &col * col.adjoint();
        }
        let eig = eig_herm(&HermMatrix::symmetrized(a))?;
        if eig.values[0] <= 1e-14 * eig.values[d - 1].max(1e-300) {
            return Err(Error::Singular("frame does not span the space".into()));
        }
        let u = eig.vectors;
        let binv = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
            d,
            eig.values.iter().map(|w| C64::new(1.0 / w.sqrt(), 0.0)),
        ));
        let b = &u * binv * u.adjoint();
        let els = v
            .iter()
            .map(|vl| {
                let bv = &b * nalgebra::DVector::from_column_slice(vl);
                HermMatrix::symmetrized(&bv * bv.adjoint())
            })
            .collect();
        Ok((els, b, eig.values, u))
    }

    fn objective(&self, x: &[f64]) -> Result<f64> {
        let v = self.unpack(x);
        let (els, ..) = self.elements(&v)?;
        let povm = Povm { d: self.d, elements: els };
        let f = cfi_with_floor(self.model, &povm, 0.0)?;
        let jinv = spd_inverse(&f.matrix, "classical Fisher matrix")?;
        Ok(self.model.weight.component_mul(&jinv).sum())
    }

    fn eval(&self, x: &[f64]) -> Result<Eval> {
        let (d, m) = (self.d, self.m);
        let model = self.model;
        let n = model.n();
        let v = self.unpack(x);
        let (els, b, alpha, u) = self.elements(&v)?;
        let p: Vec<f64> = els.iter().map(|e| model.rho.inner(e)).collect();
        if p.iter().any(|&q| q <= 0.0) {
            return Err(Error::Singular("zero-probability outcome".into()));
        }
        let a: Vec<Vec<f64>> = els.iter().map(|e| model.derivs.iter().map(|dj| dj.inner(e)).collect()).collect();
        let mut j = RMat::zeros(n, n);
        for l in 0..m {
            for r in 0..n {
                for c in 0..n {
                    j[(r, c)] += a[l][r] * a[l][c] / p[l];
                }
            }
        }
        let jinv = spd_inverse(&j, "classical Fisher matrix")?;
        let f = model.weight.component_mul(&jinv).sum();
        let mm = &jinv * &model.weight * &jinv;

        // G_l = ∂f/∂Π_l
        let g: Vec<CMat> = (0..m)
            .map(|l| {
                let al = nalgebra::DVector::from_column_slice(&a[l]);
                let ma = &mm * &al;
                let quad = al.dot(&ma);
                let mut gl = model.rho.mat() * C64::new(quad / (p[l] * p[l]), 0.0);
                for k in 0..n {
                    gl -= model.derivs[k].mat() * C64::new(2.0 * ma[k] / p[l], 0.0);
                }
                gl
            })
            .collect();
        let mut k = CMat::zeros(d, d);
        for l in 0..m {
            let col = nalgebra::DVector::from_column_slice(&v[l]);
            let pl = &col * col.adjoint();
            k += &pl * &b * &g[l] + &g[l] * &b * &pl;
        }
        // Fréchet derivative of A ↦ A^{-1/2} in the eigenbasis of A
        let kt = u.adjoint() * k * &u;
        let ht = CMat::from_fn(d, d, |i, jj| {
            let (ai, aj) = (alpha[i], alpha[jj]);
            let gamma = if (ai - aj).abs() > 1e-10 * ai.max(aj) {
                (1.0 / ai.sqrt() - 1.0 / aj.sqrt()) / (ai - aj)
            } else {
                -0.5 * ai.powf(-1.5)
            };
            kt[(i, jj)] * gamma
        });
        let h = &u * ht * u.adjoint();
        let mut grad = vec![0.0; 2 * d * m];
        for l in 0..m {
            let q = &b * &g[l] * &b + &h;
            let w = q * nalgebra::DVector::from_column_slice(&v[l]) * C64::new(2.0, 0.0);
            for i in 0..d {
                grad[2 * (l * d + i)] = w[i].re;
                grad[2 * (l * d + i) + 1] = w[i].im;
            }
        }
        Ok(Eval { f, grad })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One restart: limited-memory quasi-Newton directions with Armijo
/// backtracking, falling back to steepest descent when the direction is not
/// a descent direction.
fn run_restart(frame: &Frame, x0: Vec<f64>, iters: usize, grad_tol: f64) -> Result<(Vec<f64>, Vec<f64>, bool)> {
    const MEM: usize = 12;
    let mut x = x0;
    let mut cur = frame.eval(&x)?;
    let mut history = vec![cur.f];
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut converged = false;
    let mut stall = 0;
    for _ in 0..iters {
        let gnorm = dot(&cur.grad, &cur.grad).sqrt();
        let xnorm = dot(&x, &x).sqrt().max(1.0);
        if gnorm <= grad_tol * xnorm {
            converged = true;
            break;
        }
        // two-loop recursion
        let mut q = cur.grad.clone();
        let mut alphas = Vec::with_capacity(s_hist.len());
        for (s, y) in s_hist.iter().zip(&y_hist).rev() {
            let rho = 1.0 / dot(y, s);
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push((a, rho));
        }
        if let (Some(s), Some(y)) = (s_hist.last(), y_hist.last()) {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y), (a, rho)) in s_hist.iter().zip(&y_hist).zip(alphas.into_iter().rev()) {
            let bcoef = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - bcoef) * si;
            }
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&dir, &cur.grad);
        if slope >= 0.0 || !slope.is_finite() {
            dir = cur.grad.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
            s_hist.clear();
            y_hist.clear();
        }
        let mut t = if s_hist.is_empty() { xnorm / gnorm.max(1e-300) * 1e-2 } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let xt: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
            if let Ok(e) = frame.eval(&xt) {
                if e.f <= cur.f + 1e-4 * t * slope {
                    accepted = Some((xt, e));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((xn, en)) = accepted else {
            if s_hist.is_empty() {
                converged = gnorm <= 1e-6 * xnorm;
                break;
            }
            s_hist.clear();
            y_hist.clear();
            continue;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = en.grad.iter().zip(&cur.grad).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > 1e-300 {
            s_hist.push(s);
            y_hist.push(y);
            if s_hist.len() > MEM {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }
        let rel = (cur.f - en.f).abs() / cur.f.abs().max(1e-300);
        stall = if rel < 1e-15 { stall + 1 } else { 0 };
        x = xn;
        cur = en;
        history.push(cur.f);
        if stall >= 10 {
            converged = true;
            break;
        }
    }
    Ok((x, history, converged))
}

/// Local minimizer of `Tr[W J⁻¹]` over rank-one POVMs with `m` outcomes,
/// best of `restarts` random frames. Ties go to the lowest restart seed.
pub fn optimize_ic_povm(model: &StatModel, opts: &PovmOptOptions) -> Result<PovmOptResult> {
    let d = model.d;
    let m = opts.outcomes.unwrap_or(d * d);
    if m < d {
        return Err(Error::InvalidModel(format!("{m} outcomes cannot form a POVM in dimension {d}")));
    }
    if opts.restarts == 0 {
        return Err(Error::InvalidModel("at least one restart is needed".into()));
    }
    let frame = Frame { model, d, m };
    let mut best: Option<(f64, u64, Vec<f64>, Vec<f64>, bool)> = None;
    let mut restarts = Vec::with_capacity(opts.restarts);
    for r in 0..opts.restarts {
        let seed = crate::experiments::derive_seed(opts.seed, r as u64);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let x0: Vec<f64> = (0..2 * d * m).map(|_| StandardNormal.sample(&mut rng)).collect();
        let outcome = run_restart(&frame, x0, opts.iters, opts.grad_tol);
        let (x, hist, conv) = match outcome {
            Ok(v) => v,
            Err(_) => {
                restarts.push(RestartOutcome { seed, value: f64::INFINITY, iterations: 0, converged: false });
                continue;
            }
        };
        let value = frame.objective(&x)?;
        restarts.push(RestartOutcome { seed, value, iterations: hist.len() - 1, converged: conv });
        let better = match &best {
            None => true,
            Some((bv, bs, ..)) => value < *bv || (value == *bv && seed < *bs),
        };
        if better {
            best = Some((value, seed, x, hist, conv));
        }
    }
    let (value, _, x, history, converged) =
        best.ok_or_else(|| Error::Solver("every optimizer restart failed".into()))?;
    let (els, ..) = frame.elements(&frame.unpack(&x))?;
    let povm = Povm::new(els)?;
    let nhcrb = if opts.compare_nhcrb { Some(bounds::nhcrb(model, &SdpOptions::default())?.value) } else { None };
    Ok(PovmOptResult { povm, trace_crb: value, history, restarts, converged, nhcrb })
}

/// Spread `max - min` of a list of overlaps.
pub fn overlap_spread(overlaps: &[f64]) -> f64 {
    let mx = overlaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mn = overlaps.iter().copied().fold(f64::INFINITY, f64::min);
    mx - mn
}

//! Primal-dual interior-point solver for block semidefinite programs and the
//! builders for the Holevo and Nagaoka-Hayashi programs.
//!
//! Standard form:
//!
//! ```text
//! primal:  min ⟨C, Y⟩   s.t. ⟨A_k, Y⟩ = b_k,  Y ⪰ 0
//! dual:    max bᵀy      s.t. C - Σ y_k A_k ⪰ 0
//! ```
//!
//! The solver is an infeasible path-following method with Nesterov-Todd
//! scaling and Mehrotra's predictor-corrector. The Schur complement is formed
//! from the sparse constraint matrices and factored with `faer`.
//!
//! Complex Hermitian linear matrix inequalities are mapped to real ones with
//! [`crate::linalg::herm_to_real_embed`] and placed on the dual side, so the
//! dual iterate is always an exact embedding.

use std::fmt::Write as _;

use faer::linalg::solvers::Solve;
use nalgebra::linalg::SVD;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{eig_sym, real_to_herm, CMat, CqMatrix, HermMatrix, RMat, C64};
use crate::model::{solve_lub, LubFamily, StatModel};
use crate::povm::Povm;

/// Symmetric sparse matrix over the block structure, upper triangle only:
/// `(block, row, col, value)` with `row <= col`.
#[derive(Clone, Debug, Default)]
pub struct SymSparse {
    pub entries: Vec<(usize, usize, usize, f64)>,
}

impl SymSparse {
    pub fn inner(&self, x: &[RMat]) -> f64 {
        self.entries
            .iter()
            .map(|&(b, r, c, v)| if r == c { v * x[b][(r, c)] } else { 2.0 * v * x[b][(r, c)] })
            .sum()
    }

    pub fn add_to(&self, out: &mut [RMat], scale: f64) {
        for &(b, r, c, v) in &self.entries {
            out[b][(r, c)] += scale * v;
            if r != c {
                out[b][(c, r)] += scale * v;
            }
        }
    }

    pub fn to_dense(&self, dims: &[usize]) -> Vec<RMat> {
        let mut out: Vec<RMat> = dims.iter().map(|&n| RMat::zeros(n, n)).collect();
        self.add_to(&mut out, 1.0);
        out
    }
}

#[derive(Clone, Debug)]
pub struct SdpProblem {
    pub block_dims: Vec<usize>,
    pub c: Vec<RMat>,
    pub a: Vec<SymSparse>,
    pub b: Vec<f64>,
    /// When set, `C` is maximized instead; values are reported for the
    /// original sense.
    pub maximize: bool,
}

impl SdpProblem {
    pub fn m(&self) -> usize {
        self.b.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.a.is_empty() || self.a.len() != self.b.len() {
            return Err(Error::Solver("constraint count mismatch or zero".into()));
        }
        if self.c.len() != self.block_dims.len() {
            return Err(Error::Solver("objective block count mismatch".into()));
        }
        for (cb, &n) in self.c.iter().zip(&self.block_dims) {
            if cb.nrows() != n || cb.ncols() != n {
                return Err(Error::Solver("objective block shape".into()));
            }
            if (cb - cb.transpose()).abs().max() > 1e-12 * (1.0 + cb.abs().max()) {
                return Err(Error::Solver("objective block not symmetric".into()));
            }
        }
        for a in &self.a {
            for &(b, r, c, v) in &a.entries {
                if b >= self.block_dims.len() || r > c || c >= self.block_dims[b] || !v.is_finite() {
                    return Err(Error::Solver("bad constraint entry".into()));
                }
            }
        }
        if self.b.iter().any(|x| !x.is_finite()) {
            return Err(Error::Solver("non-finite right-hand side".into()));
        }
        Ok(())
    }

    /// SDPA sparse text format (1-based). The program is written in SDPA's
    /// sense `min cᵀx s.t. Σ F_i x_i - F_0 ⪰ 0` with `x = y`, `c = -b`,
    /// `F_0 = -C`, `F_k = -A_k`.
    pub fn dump_triplets(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}", self.m());
        let _ = writeln!(s, "{}", self.block_dims.len());
        let dims: Vec<String> = self.block_dims.iter().map(|d| d.to_string()).collect();
        let _ = writeln!(s, "{}", dims.join(" "));
        let cs: Vec<String> = self.b.iter().map(|x| format!("{:.17e}", -x)).collect();
        let _ = writeln!(s, "{}", cs.join(" "));
        let sign = if self.maximize { 1.0 } else { -1.0 };
        for (bi, cb) in self.c.iter().enumerate() {
            for r in 0..cb.nrows() {
                for c in r..cb.ncols() {
                    if cb[(r, c)] != 0.0 {
                        let _ = writeln!(s, "0 {} {} {} {:.17e}", bi + 1, r + 1, c + 1, sign * cb[(r, c)]);
                    }
                }
            }
        }
        for (k, a) in self.a.iter().enumerate() {
            for &(b, r, c, v) in &a.entries {
                let _ = writeln!(s, "{} {} {} {} {:.17e}", k + 1, b + 1, r + 1, c + 1, -v);
            }
        }
        s
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SdpOptions {
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
    #[serde(skip)]
    pub verbose: bool,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self { gap_tol: 1e-8, feas_tol: 1e-8, max_iter: 200, verbose: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SdpStatus {
    Optimal,
    /// Stopped early but within 100× the requested tolerances.
    NearOptimal,
    MaxIterations,
    InfeasibleDetected,
    NumericalBreakdown,
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub primal_value: f64,
    pub dual_value: f64,
    pub y_mat: Vec<RMat>,
    pub y: Vec<f64>,
    pub s_mat: Vec<RMat>,
    pub gap: f64,
    pub primal_infeas: f64,
    pub dual_infeas: f64,
    pub iterations: usize,
    pub status: SdpStatus,
}

impl SdpSolution {
    pub fn is_usable(&self) -> bool {
        matches!(self.status, SdpStatus::Optimal | SdpStatus::NearOptimal)
    }
}

fn inner(a: &[RMat], b: &[RMat]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y.iter()).map(|(p, q)| p * q).sum::<f64>()).sum()
}

fn frob(a: &[RMat]) -> f64 {
    inner(a, a).sqrt()
}

fn sym(m: &RMat) -> RMat {
    (m + m.transpose()) * 0.5
}

struct Scaling {
    g: RMat,
    ginv: RMat,
    w: RMat,
    dvals: Vec<f64>,
    lx: RMat,
    ls: RMat,
}

fn nt_scaling(x: &RMat, s: &RMat) -> Option<Scaling> {
    let lx = x.clone().cholesky()?.l();
    let ls = s.clone().cholesky()?.l();
    let k = ls.transpose() * &lx;
    let svd = SVD::new(k, true, true);
    let u = svd.u?;
    let vt = svd.v_t?;
    let sv = svd.singular_values;
    let n = x.nrows();
    if sv.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return None;
    }
    let mut g = &lx * vt.transpose();
    let mut ginv = u.transpose() * ls.transpose();
    for i in 0..n {
        let r = sv[i].sqrt();
        for row in 0..n {
            g[(row, i)] /= r;
        }
        for col in 0..n {
            ginv[(i, col)] /= r;
        }
    }
    let w = sym(&(&g * g.transpose()));
    Some(Scaling { g, ginv, w, dvals: sv.iter().copied().collect(), lx, ls })
}

/// Largest `α` with `L Lᵀ + α Δ ⪰ 0`, capped at `1e10`.
fn max_step(l: &RMat, delta: &RMat) -> Result<f64> {
    let linv_d = l
        .clone()
        .solve_lower_triangular(delta)
        .ok_or_else(|| Error::Solver("triangular solve failed".into()))?;
    let t = l
        .clone()
        .solve_lower_triangular(&linv_d.transpose())
        .ok_or_else(|| Error::Solver("triangular solve failed".into()))?;
    let (w, _) = eig_sym(&sym(&t))?;
    let lmin = w[0];
    Ok(if lmin < 0.0 { (-1.0 / lmin).min(1e10) } else { 1e10 })
}

struct Workspace<'a> {
    p: &'a SdpProblem,
}

impl Workspace<'_> {
    fn a_op(&self, x: &[RMat]) -> Vec<f64> {
        self.p.a.iter().map(|a| a.inner(x)).collect()
    }

    fn at_op(&self, y: &[f64]) -> Vec<RMat> {
        let mut out: Vec<RMat> = self.p.block_dims.iter().map(|&n| RMat::zeros(n, n)).collect();
        for (a, &yk) in self.p.a.iter().zip(y) {
            if yk != 0.0 {
                a.add_to(&mut out, yk);
            }
        }
        out
    }

    fn schur(&self, sc: &[Scaling]) -> faer::Mat<f64> {
        let m = self.p.m();
        let mut mm = faer::Mat::<f64>::zeros(m, m);
        let mut g: Vec<RMat> = self.p.block_dims.iter().map(|&n| RMat::zeros(n, n)).collect();
        let mut touched = vec![false; g.len()];
        for j in 0..m {
            for &(b, r, c, v) in &self.p.a[j].entries {
                let w = &sc[b].w;
                touched[b] = true;
                if r == c {
                    g[b].ger(v, &w.column(r), &w.column(r), 1.0);
                } else {
                    g[b].ger(v, &w.column(r), &w.column(c), 1.0);
                    g[b].ger(v, &w.column(c), &w.column(r), 1.0);
                }
            }
            for i in j..m {
                let val = self.p.a[i].inner(&g);
                mm[(i, j)] = val;
                mm[(j, i)] = val;
            }
            for (b, t) in touched.iter_mut().enumerate() {
                if *t {
                    g[b].fill(0.0);
                    *t = false;
                }
            }
        }
        mm
    }
}

enum Factor {
    Llt(faer::linalg::solvers::Llt<f64>),
    Lblt(faer::linalg::solvers::Lblt<f64>),
}

impl Factor {
    fn new(m: &faer::Mat<f64>) -> Self {
        match m.llt(faer::Side::Lower) {
            Ok(f) => Factor::Llt(f),
            Err(_) => Factor::Lblt(m.lblt(faer::Side::Lower)),
        }
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let r = faer::Mat::<f64>::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        let x = match self {
            Factor::Llt(f) => f.solve(&r),
            Factor::Lblt(f) => f.solve(&r),
        };
        (0..rhs.len()).map(|i| x[(i, 0)]).collect()
    }
}

/// Solves the program. Returns `Err` only for malformed input; numerical
/// trouble is reported through [`SdpSolution::status`].
pub fn solve(p: &SdpProblem, opts: &SdpOptions) -> Result<SdpSolution> {
    p.validate()?;
    let ws = Workspace { p };
    let m = p.m();
    let nb = p.block_dims.len();
    let n_tot: usize = p.block_dims.iter().sum();
    let sense = if p.maximize { -1.0 } else { 1.0 };
    let c: Vec<RMat> = p.c.iter().map(|cb| cb * sense).collect();

    let bmax = p.b.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    let tau = 1.0 + bmax;
    let cmax = c.iter().fold(0.0f64, |acc, cb| acc.max(cb.abs().max()));
    let eta = 1.0 + cmax;
    let mut x: Vec<RMat> = p.block_dims.iter().map(|&n| RMat::identity(n, n) * tau).collect();
    let mut s: Vec<RMat> = p.block_dims.iter().map(|&n| RMat::identity(n, n) * eta).collect();
    let mut y = vec![0.0; m];

    let bnorm = p.b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let cnorm = frob(&c);
    let mut status = SdpStatus::MaxIterations;
    let mut iterations = 0;
    let mut stall = 0;
    let (mut pobj, mut dobj, mut gap, mut pinf, mut dinf);
    // Best iterate by max(gap, pinf, dinf); returned if later iterates lose
    // accuracy, which happens on nearly singular states.
    let mut best: Option<(f64, [f64; 5], Vec<RMat>, Vec<f64>, Vec<RMat>)> = None;
    let mut since_best = 0;

    loop {
        let ax = ws.a_op(&x);
        let rp: Vec<f64> = p.b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let aty = ws.at_op(&y);
        let rd: Vec<RMat> = (0..nb).map(|i| &c[i] - &s[i] - &aty[i]).collect();
        pobj = inner(&c, &x);
        dobj = p.b.iter().zip(&y).map(|(b, v)| b * v).sum::<f64>();
        gap = (pobj - dobj).abs() / (1.0 + pobj.abs());
        pinf = rp.iter().map(|v| v * v).sum::<f64>().sqrt() / (1.0 + bnorm);
        dinf = frob(&rd) / (1.0 + cnorm);
        let mu = inner(&x, &s) / n_tot as f64;
        if opts.verbose {
            eprintln!(
                "it {iterations:3} pobj {pobj:+.10e} dobj {dobj:+.10e} gap {gap:.2e} pinf {pinf:.2e} dinf {dinf:.2e} mu {mu:.2e}"
            );
        }
        if gap <= opts.gap_tol && pinf <= opts.feas_tol && dinf <= opts.feas_tol {
            status = SdpStatus::Optimal;
            break;
        }
        let merit = gap.max(pinf).max(dinf);
        if best.as_ref().is_none_or(|b| merit < b.0) {
            best = Some((merit, [pobj, dobj, gap, pinf, dinf], x.clone(), y.clone(), s.clone()));
            since_best = 0;
        } else {
            since_best += 1;
        }
        if iterations >= opts.max_iter || since_best >= 25 {
            break;
        }
        let ynorm = y.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let xnorm = x.iter().map(|b| b.abs().max()).fold(0.0, f64::max);
        if ynorm > 1e12 || xnorm > 1e12 {
            status = SdpStatus::InfeasibleDetected;
            break;
        }
        iterations += 1;

        let mut sc = Vec::with_capacity(nb);
        for i in 0..nb {
            match nt_scaling(&x[i], &s[i]) {
                Some(v) => sc.push(v),
                None => {
                    status = SdpStatus::NumericalBreakdown;
                    break;
                }
            }
        }
        if sc.len() != nb {
            break;
        }
        let schur = ws.schur(&sc);
        let fac = Factor::new(&schur);

        let wrdw: Vec<RMat> = (0..nb).map(|i| sym(&(&sc[i].w * &rd[i] * &sc[i].w))).collect();
        let direction = |rc: &[RMat]| -> (Vec<f64>, Vec<RMat>, Vec<RMat>) {
            let t: Vec<RMat> = (0..nb).map(|i| &rc[i] - &wrdw[i]).collect();
            let at = ws.a_op(&t);
            let rhs: Vec<f64> = rp.iter().zip(&at).map(|(r, a)| r - a).collect();
            let dy = fac.solve(&rhs);
            let atdy = ws.at_op(&dy);
            let ds: Vec<RMat> = (0..nb).map(|i| &rd[i] - &atdy[i]).collect();
            let dx: Vec<RMat> = (0..nb).map(|i| sym(&(&rc[i] - &sc[i].w * &ds[i] * &sc[i].w))).collect();
            (dy, dx, ds)
        };

        // predictor
        let rc_aff: Vec<RMat> = x.iter().map(|xb| -xb).collect();
        let (_, dx_a, ds_a) = direction(&rc_aff);
        let mut ap = f64::INFINITY;
        let mut ad = f64::INFINITY;
        for i in 0..nb {
            ap = ap.min(max_step(&sc[i].lx, &dx_a[i])?);
            ad = ad.min(max_step(&sc[i].ls, &ds_a[i])?);
        }
        let ap1 = ap.min(1.0);
        let ad1 = ad.min(1.0);
        let mut mu_aff = 0.0;
        for i in 0..nb {
            let xa = &x[i] + &dx_a[i] * ap1;
            let sa = &s[i] + &ds_a[i] * ad1;
            mu_aff += inner(std::slice::from_ref(&xa), std::slice::from_ref(&sa));
        }
        mu_aff /= n_tot as f64;
        let expon = (3.0 * ap1.min(ad1).powi(2)).max(1.0);
        let sigma = (mu_aff / mu).max(0.0).powf(expon).min(1.0);

        // corrector
        let mut rc = Vec::with_capacity(nb);
        for i in 0..nb {
            let scb = &sc[i];
            let dxt = &scb.ginv * &dx_a[i] * scb.ginv.transpose();
            let dst = scb.g.transpose() * &ds_a[i] * &scb.g;
            let h = &dxt * &dst + &dst * &dxt;
            let n = p.block_dims[i];
            let t = RMat::from_fn(n, n, |a, b| {
                let diag = if a == b { 2.0 * sigma * mu - 2.0 * scb.dvals[a] * scb.dvals[a] } else { 0.0 };
                (diag - h[(a, b)]) / (scb.dvals[a] + scb.dvals[b])
            });
            rc.push(sym(&(&scb.g * t * scb.g.transpose())));
        }
        let (dy, dx, ds) = direction(&rc);
        let mut ap = f64::INFINITY;
        let mut ad = f64::INFINITY;
        for i in 0..nb {
            ap = ap.min(max_step(&sc[i].lx, &dx[i])?);
            ad = ad.min(max_step(&sc[i].ls, &ds[i])?);
        }
        let gamma = 0.9 + 0.09 * ap1.min(ad1);
        let ap = (gamma * ap).min(1.0);
        let ad = (gamma * ad).min(1.0);
        if ap < 1e-10 && ad < 1e-10 {
            stall += 1;
            if stall >= 3 {
                status = SdpStatus::NumericalBreakdown;
                break;
            }
        } else {
            stall = 0;
        }
        for i in 0..nb {
            x[i] = sym(&(&x[i] + &dx[i] * ap));
            s[i] = sym(&(&s[i] + &ds[i] * ad));
        }
        for (yk, dk) in y.iter_mut().zip(&dy) {
            *yk += ad * dk;
        }
    }

    if status != SdpStatus::Optimal && status != SdpStatus::InfeasibleDetected {
        if let Some((merit, v, bx, by, bs)) = best {
            if merit < gap.max(pinf).max(dinf) {
                [pobj, dobj, gap, pinf, dinf] = v;
                x = bx;
                y = by;
                s = bs;
            }
        }
    }
    if status != SdpStatus::Optimal
        && status != SdpStatus::InfeasibleDetected
        && gap <= 100.0 * opts.gap_tol
        && pinf <= 100.0 * opts.feas_tol
        && dinf <= 100.0 * opts.feas_tol
    {
        status = SdpStatus::NearOptimal;
    }
    Ok(SdpSolution {
        primal_value: sense * pobj,
        dual_value: sense * dobj,
        y_mat: x,
        y,
        s_mat: s,
        gap,
        primal_infeas: pinf,
        dual_infeas: dinf,
        iterations,
        status,
    })
}

/// A complex Hermitian LMI `F_0 + Σ z_k F_k ⪰ 0` with objective
/// `min Σ obj_k z_k`. Coefficients are stored as upper-triangle entries.
pub(crate) struct ComplexLmi {
    dim: usize,
    f0: Vec<(usize, usize, C64)>,
    vars: Vec<Vec<(usize, usize, C64)>>,
    obj: Vec<f64>,
}

impl ComplexLmi {
    pub(crate) fn new(dim: usize) -> Self {
        Self { dim, f0: Vec::new(), vars: Vec::new(), obj: Vec::new() }
    }

    pub(crate) fn f0_entry(&mut self, r: usize, c: usize, z: C64) {
        self.f0.push(upper(r, c, z));
    }

    pub(crate) fn add_var(&mut self, entries: Vec<(usize, usize, C64)>, obj: f64) -> usize {
        self.vars.push(entries.into_iter().map(|(r, c, z)| upper(r, c, z)).collect());
        self.obj.push(obj);
        self.vars.len() - 1
    }

    fn embed(&self, entries: &[(usize, usize, C64)], scale: f64) -> SymSparse {
        let n = self.dim;
        let mut out = Vec::with_capacity(entries.len() * 4);
        for &(r, c, z) in entries {
            let (re, im) = (z.re * scale, z.im * scale);
            if r == c {
                if re != 0.0 {
                    out.push((0, r, r, re));
                    out.push((0, r + n, r + n, re));
                }
            } else {
                if re != 0.0 {
                    out.push((0, r, c, re));
                    out.push((0, r + n, c + n, re));
                }
                if im != 0.0 {
                    out.push((0, r, c + n, -im));
                    out.push((0, c, r + n, im));
                }
            }
        }
        SymSparse { entries: merge(out) }
    }

    pub(crate) fn into_problem(self) -> SdpProblem {
        let n2 = 2 * self.dim;
        let c = self.embed(&self.f0, 1.0).to_dense(&[n2]);
        let a = self.vars.iter().map(|v| self.embed(v, -1.0)).collect();
        let b = self.obj.iter().map(|o| -o).collect();
        SdpProblem { block_dims: vec![n2], c, a, b, maximize: false }
    }
}

fn upper(r: usize, c: usize, z: C64) -> (usize, usize, C64) {
    if r <= c {
        (r, c, z)
    } else {
        (c, r, z.conj())
    }
}

fn merge(mut v: Vec<(usize, usize, usize, f64)>) -> Vec<(usize, usize, usize, f64)> {
    v.sort_by(|a, b| (a.0, a.1, a.2).cmp(&(b.0, b.1, b.2)));
    let mut out: Vec<(usize, usize, usize, f64)> = Vec::with_capacity(v.len());
    for e in v {
        match out.last_mut() {
            Some(l) if (l.0, l.1, l.2) == (e.0, e.1, e.2) => l.3 += e.3,
            _ => out.push(e),
        }
    }
    out.retain(|e| e.3 != 0.0);
    out
}

/// Row-major `vec(A)` so that `vec(A)† vec(B) = Tr(A† B)`.
fn vec_row_major(a: &CMat) -> Vec<C64> {
    let (r, c) = a.shape();
    let mut v = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            v.push(a[(i, j)]);
        }
    }
    v
}

/// Holevo program: `min Tr[W V]` over real symmetric `V` and unbiased `X`
/// subject to `[[V, R†], [R, 1]] ⪰ 0`, `R_j = vec(X_j √ρ)`.
pub struct HcrbProgram {
    pub problem: SdpProblem,
    pub lub: LubFamily,
    n: usize,
    correction: f64,
}

pub fn build_hcrb(model: &StatModel) -> Result<HcrbProgram> {
    let lub = solve_lub(model)?;
    let n = model.n();
    let d = model.d;
    let dd = d * d;
    let sqrt_rho = crate::linalg::sqrtm_psd(&model.rho)?;
    let mut lmi = ComplexLmi::new(n + dd);
    for j in 0..n {
        let r0 = vec_row_major(&lub.particular[j].dot(&sqrt_rho));
        for (a, z) in r0.into_iter().enumerate() {
            if z.norm() > 0.0 {
                lmi.f0_entry(n + a, j, z);
            }
        }
    }
    for a in 0..dd {
        lmi.f0_entry(n + a, n + a, C64::new(1.0, 0.0));
    }
    for j in 0..n {
        for k in j..n {
            let obj = if j == k { model.weight[(j, j)] } else { 2.0 * model.weight[(j, k)] };
            lmi.add_var(vec![(j, k, C64::new(1.0, 0.0))], obj);
        }
    }
    let q = lub.null_basis.len();
    let null_r: Vec<Vec<C64>> = lub.null_basis.iter().map(|nl| vec_row_major(&nl.dot(&sqrt_rho))).collect();
    for j in 0..n {
        for nr in null_r.iter().take(q) {
            let entries = nr
                .iter()
                .enumerate()
                .filter(|(_, z)| z.norm() > 0.0)
                .map(|(a, &z)| (n + a, j, z))
                .collect();
            lmi.add_var(entries, 0.0);
        }
    }
    Ok(HcrbProgram { problem: lmi.into_problem(), lub, n, correction: model.theta_correction() })
}

impl HcrbProgram {
    pub fn value(&self, sol: &SdpSolution) -> f64 {
        -sol.dual_value - self.correction
    }

    pub fn primal_side_value(&self, sol: &SdpSolution) -> f64 {
        -sol.primal_value - self.correction
    }

    pub fn correction(&self) -> f64 {
        self.correction
    }

    /// Optimal `V` and unbiased operators.
    pub fn extract(&self, sol: &SdpSolution) -> (RMat, Vec<HermMatrix>) {
        let n = self.n;
        let mut v = RMat::zeros(n, n);
        let mut idx = 0;
        for j in 0..n {
            for k in j..n {
                v[(j, k)] = sol.y[idx];
                v[(k, j)] = sol.y[idx];
                idx += 1;
            }
        }
        let c = &sol.y[idx..];
        (v, self.lub.member(c))
    }
}

/// Which formulation [`build_nhcrb`] produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NhcrbForm {
    /// Variables `𝕃` and the unbiased-operator coordinates,
    /// `[[𝕃, 𝕏], [𝕏†, 1]] ⪰ 0`.
    General,
    /// `𝕏` is unique: dual program in the anti-Hermitian off-diagonal
    /// multipliers only, `W⊗ρ + A ⪰ 0`.
    Reduced,
}

pub struct NhcrbProgram {
    pub problem: SdpProblem,
    pub lub: LubFamily,
    pub form: NhcrbForm,
    n: usize,
    d: usize,
    offset: f64,
    correction: f64,
}

fn herm_block_basis(d: usize) -> Vec<Vec<(usize, usize, C64)>> {
    let mut out = Vec::with_capacity(d * d);
    for p in 0..d {
        out.push(vec![(p, p, C64::new(1.0, 0.0))]);
    }
    for p in 0..d {
        for q in (p + 1)..d {
            out.push(vec![(p, q, C64::new(1.0, 0.0)), (q, p, C64::new(1.0, 0.0))]);
            out.push(vec![(p, q, C64::new(0.0, -1.0)), (q, p, C64::new(0.0, 1.0))]);
        }
    }
    out
}

fn anti_block_basis(d: usize) -> Vec<Vec<(usize, usize, C64)>> {
    let mut out = Vec::with_capacity(d * d);
    for p in 0..d {
        out.push(vec![(p, p, C64::new(0.0, 1.0))]);
    }
    for p in 0..d {
        for q in (p + 1)..d {
            out.push(vec![(p, q, C64::new(1.0, 0.0)), (q, p, C64::new(-1.0, 0.0))]);
            out.push(vec![(p, q, C64::new(0.0, 1.0)), (q, p, C64::new(0.0, 1.0))]);
        }
    }
    out
}

/// `Tr(E K)` for a sparse `E` given as `(p, q, z)` meaning `E_pq = z`.
fn sparse_trace(e: &[(usize, usize, C64)], k: &CMat) -> C64 {
    e.iter().map(|&(p, q, z)| z * k[(q, p)]).sum()
}

pub fn build_nhcrb(model: &StatModel) -> Result<NhcrbProgram> {
    let lub = solve_lub(model)?;
    if lub.unique {
        build_nhcrb_reduced(model, lub)
    } else {
        build_nhcrb_general(model, lub)
    }
}

/// Always uses the general formulation, even when `𝕏` is unique.
pub fn build_nhcrb_general_form(model: &StatModel) -> Result<NhcrbProgram> {
    let lub = solve_lub(model)?;
    build_nhcrb_general(model, lub)
}

fn build_nhcrb_general(model: &StatModel, lub: LubFamily) -> Result<NhcrbProgram> {
    let n = model.n();
    let d = model.d;
    let nd = n * d;
    let rho = model.rho.mat();
    let mut lmi = ComplexLmi::new(nd + d);
    for j in 0..n {
        let x = lub.particular[j].mat();
        for a in 0..d {
            for b in 0..d {
                if x[(a, b)].norm() > 0.0 {
                    lmi.f0_entry(j * d + a, nd + b, x[(a, b)]);
                }
            }
        }
    }
    for b in 0..d {
        lmi.f0_entry(nd + b, nd + b, C64::new(1.0, 0.0));
    }
    let basis = herm_block_basis(d);
    for j in 0..n {
        for k in j..n {
            for e in &basis {
                let tr = sparse_trace(e, rho).re;
                let obj = if j == k { model.weight[(j, j)] * tr } else { 2.0 * model.weight[(j, k)] * tr };
                let entries = if j == k {
                    e.iter().filter(|&&(p, q, _)| p <= q).map(|&(p, q, z)| (j * d + p, j * d + q, z)).collect()
                } else {
                    e.iter().map(|&(p, q, z)| (j * d + p, k * d + q, z)).collect()
                };
                lmi.add_var(entries, obj);
            }
        }
    }
    for j in 0..n {
        for nl in &lub.null_basis {
            let m = nl.mat();
            let mut entries = Vec::with_capacity(d * d);
            for a in 0..d {
                for b in 0..d {
                    if m[(a, b)].norm() > 0.0 {
                        entries.push((j * d + a, nd + b, m[(a, b)]));
                    }
                }
            }
            lmi.add_var(entries, 0.0);
        }
    }
    Ok(NhcrbProgram {
        problem: lmi.into_problem(),
        lub,
        form: NhcrbForm::General,
        n,
        d,
        offset: 0.0,
        correction: model.theta_correction(),
    })
}

fn build_nhcrb_reduced(model: &StatModel, lub: LubFamily) -> Result<NhcrbProgram> {
    let n = model.n();
    let d = model.d;
    let rho = model.rho.mat();
    let x: Vec<&CMat> = lub.particular.iter().map(|m| m.mat()).collect();
    let mut lmi = ComplexLmi::new(n * d);
    for j in 0..n {
        for k in j..n {
            let w = model.weight[(j, k)];
            if w == 0.0 {
                continue;
            }
            for a in 0..d {
                let b0 = if j == k { a } else { 0 };
                for b in b0..d {
                    let z = rho[(a, b)] * w;
                    if z.norm() > 0.0 {
                        lmi.f0_entry(j * d + a, k * d + b, z);
                    }
                }
            }
        }
    }
    let basis = anti_block_basis(d);
    for j in 0..n {
        for k in (j + 1)..n {
            let comm = x[k] * x[j] - x[j] * x[k];
            for e in &basis {
                let tr = sparse_trace(e, &comm).re;
                let entries = e.iter().map(|&(p, q, z)| (j * d + p, k * d + q, z)).collect();
                lmi.add_var(entries, -tr);
            }
        }
    }
    let mut tr_sc = 0.0;
    for j in 0..n {
        for k in 0..n {
            let w = model.weight[(j, k)];
            if w != 0.0 {
                tr_sc += w * (rho * x[k] * x[j]).trace().re;
            }
        }
    }
    Ok(NhcrbProgram {
        problem: lmi.into_problem(),
        lub,
        form: NhcrbForm::Reduced,
        n,
        d,
        offset: tr_sc,
        correction: model.theta_correction(),
    })
}

impl NhcrbProgram {
    fn sign(&self) -> f64 {
        match self.form {
            NhcrbForm::General => -1.0,
            NhcrbForm::Reduced => 1.0,
        }
    }

    pub fn value(&self, sol: &SdpSolution) -> f64 {
        self.offset + self.sign() * sol.dual_value - self.correction
    }

    pub fn primal_side_value(&self, sol: &SdpSolution) -> f64 {
        self.offset + self.sign() * sol.primal_value - self.correction
    }

    pub fn correction(&self) -> f64 {
        self.correction
    }

    /// Optimal `𝕃` and unbiased operators `X_j`.
    pub fn extract(&self, sol: &SdpSolution) -> Result<(CqMatrix, Vec<HermMatrix>)> {
        let (n, d) = (self.n, self.d);
        match self.form {
            NhcrbForm::Reduced => {
                let x = self.lub.particular.clone();
                let p = real_to_herm(&sol.y_mat[0])?.scale(2.0);
                let l = CqMatrix::from_blocks(n, d, |j, k| {
                    let pb = p.mat().view((j * d, k * d), (d, d)).into_owned();
                    x[j].dot(&x[k]) + pb
                });
                Ok((l, x))
            }
            NhcrbForm::General => {
                let basis = herm_block_basis(d);
                let mut l = CqMatrix::zeros(n, d);
                let mut idx = 0;
                for j in 0..n {
                    for k in j..n {
                        let mut blk = CMat::zeros(d, d);
                        for e in &basis {
                            for &(p, q, z) in e {
                                blk[(p, q)] += z * sol.y[idx];
                            }
                            idx += 1;
                        }
                        l.set_block(j, k, &blk);
                        if j != k {
                            l.set_block(k, j, &blk);
                        }
                    }
                }
                let x = self.lub.member(&sol.y[idx..]);
                Ok((l, x))
            }
        }
    }
}

/// Least-squares coefficients `ξ` with `X_j ≈ Σ_l ξ_jl Π_l`.
#[derive(Clone, Debug)]
pub struct EstimatorFit {
    /// `n × m`.
    pub xi: RMat,
    pub residual: f64,
    pub exact: bool,
}

pub fn extract_estimator(x: &[HermMatrix], povm: &Povm) -> Result<EstimatorFit> {
    let d = povm.dim();
    let m = povm.len();
    let n = x.len();
    let dd = d * d;
    let mut pm = RMat::zeros(dd, m);
    for (l, e) in povm.elements().iter().enumerate() {
        let v = crate::linalg::herm_basis_vec(e);
        for r in 0..dd {
            pm[(r, l)] = v[r];
        }
    }
    let svd = SVD::new(pm.clone(), true, true);
    let mut xi = RMat::zeros(n, m);
    let mut residual: f64 = 0.0;
    for (j, xj) in x.iter().enumerate() {
        let v = nalgebra::DVector::from_vec(crate::linalg::herm_basis_vec(xj));
        let sol = svd.solve(&v, 1e-12).map_err(|e| Error::Solver(e.to_string()))?;
        let r = (&pm * &sol - &v).amax();
        residual = residual.max(r);
        for l in 0..m {
            xi[(j, l)] = sol[l];
        }
    }
    Ok(EstimatorFit { xi, residual, exact: residual <= 1e-6 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trivial() -> SdpProblem {
        SdpProblem {
            block_dims: vec![1],
            c: vec![RMat::identity(1, 1)],
            a: vec![SymSparse { entries: vec![(0, 0, 0, 1.0)] }],
            b: vec![1.0],
            maximize: false,
        }
    }

    #[test]
    fn one_by_one() {
        let s = solve(&trivial(), &SdpOptions::default()).unwrap();
        assert_eq!(s.status, SdpStatus::Optimal);
        assert!((s.primal_value - 1.0).abs() < 1e-8);
    }

    // min Tr(C Y), Tr(Y) = 1 over 3x3 PSD: the minimum eigenvalue of C.
    #[test]
    fn min_eigenvalue_program() {
        let c = RMat::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 1.0]);
        let p = SdpProblem {
            block_dims: vec![3],
            c: vec![c.clone()],
            a: vec![SymSparse { entries: vec![(0, 0, 0, 1.0), (0, 1, 1, 1.0), (0, 2, 2, 1.0)] }],
            b: vec![1.0],
            maximize: false,
        };
        let s = solve(&p, &SdpOptions::default()).unwrap();
        let (w, _) = eig_sym(&c).unwrap();
        assert_eq!(s.status, SdpStatus::Optimal);
        assert!((s.primal_value - w[0]).abs() < 1e-7);
        assert!(s.dual_value <= s.primal_value + 1e-9 * (1.0 + s.primal_value.abs()));
    }

    #[test]
    fn objective_scaling() {
        let c = RMat::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let mk = |s: f64| SdpProblem {
            block_dims: vec![2],
            c: vec![&c * s],
            a: vec![SymSparse { entries: vec![(0, 0, 0, 1.0), (0, 1, 1, 1.0)] }],
            b: vec![1.0],
            maximize: false,
        };
        let a = solve(&mk(1.0), &SdpOptions::default()).unwrap();
        let b = solve(&mk(3.5), &SdpOptions::default()).unwrap();
        assert!((b.primal_value - 3.5 * a.primal_value).abs() < 1e-7);
    }

    #[test]
    fn maximize_flag() {
        // max Tr(C Y), Tr(Y) = 1: the largest eigenvalue.
        let c = RMat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let p = SdpProblem {
            block_dims: vec![2],
            c: vec![c],
            a: vec![SymSparse { entries: vec![(0, 0, 0, 1.0), (0, 1, 1, 1.0)] }],
            b: vec![1.0],
            maximize: true,
        };
        let s = solve(&p, &SdpOptions::default()).unwrap();
        assert!((s.primal_value - 2.0).abs() < 1e-7);
    }

    #[test]
    fn dump_format() {
        let t = trivial().dump_triplets();
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "1");
        assert_eq!(lines[1], "1");
        assert_eq!(lines[2], "1");
        assert!(lines[4].starts_with("0 1 1 1"));
        assert!(lines[5].starts_with("1 1 1 1"));
    }

    #[test]
    fn malformed_rejected() {
        let mut p = trivial();
        p.a[0].entries[0] = (0, 1, 0, 1.0);
        assert!(solve(&p, &SdpOptions::default()).is_err());
    }
}

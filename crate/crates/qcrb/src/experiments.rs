//! Random models, ratio statistics and dataset emission.
//!
//! Every sample `i` draws from its own generator seeded by
//! [`derive_seed`]`(master, i)`, so results do not depend on the number of
//! worker threads. Records are always returned in index order.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bounds::{self, analytic_rho_max};
use crate::error::{Error, Result};
use crate::gellmann::{gmm_basis, gmm_matrix};
use crate::linalg::{herm_basis_vec, CMat, HermMatrix, RMat, C64};
use crate::model::{
    depolarized_plus_model, full_model_at, hex16, mm_subset_model, plus_state, rank_deficient_min_model,
    tensor_copies, StatModel, DEFAULT_EPS, GRAM_TOL,
};
use crate::sdp::SdpOptions;

/// Counter-based seed for sample `index` of a run with seed `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(index.to_le_bytes());
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("sha256 has 32 bytes"))
}

fn rng_for(master: u64, index: u64) -> (u64, ChaCha20Rng) {
    let s = derive_seed(master, index);
    (s, ChaCha20Rng::seed_from_u64(s))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampler {
    /// `SS†/Tr(SS†)` with standard complex normal `S`.
    Ginibre,
    /// Uniform Gell-Mann coefficients in `[-√((d-1)/d), √((d-1)/d)]`,
    /// rejected until positive.
    BlochReject,
    /// Ginibre state mixed with `1/d`.
    DepolarizedMix,
    /// Ginibre state mixed with `|+⟩⟨+|`.
    PlusMix,
}

impl std::str::FromStr for Sampler {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ginibre" => Ok(Sampler::Ginibre),
            "bloch-reject" => Ok(Sampler::BlochReject),
            "depolarized-mix" => Ok(Sampler::DepolarizedMix),
            "plus-mix" => Ok(Sampler::PlusMix),
            _ => Err(Error::Parse(format!("unknown sampler {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivMode {
    GmmFull,
    GmmSubset,
    RandomDirections,
}

impl std::str::FromStr for DerivMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gmm-full" => Ok(DerivMode::GmmFull),
            "gmm-subset" => Ok(DerivMode::GmmSubset),
            "random-directions" => Ok(DerivMode::RandomDirections),
            _ => Err(Error::Parse(format!("unknown derivative mode {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, Serialize, serde::Deserialize)]
pub struct SampleSpec {
    pub d: usize,
    pub n: usize,
    pub count: usize,
    pub seed: u64,
    pub sampler: Sampler,
    /// Mixing weights for the two mix samplers; one is drawn per sample.
    pub mix_p: Vec<f64>,
}

impl SampleSpec {
    pub fn new(d: usize, n: usize, count: usize, seed: u64, sampler: Sampler) -> Self {
        Self { d, n, count, seed, sampler, mix_p: default_mix_grid() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::InvalidModel("sample count must be positive".into()));
        }
        if self.d < 2 || self.d > crate::gellmann::MAX_DIM {
            return Err(Error::InvalidModel(format!("d = {} out of range", self.d)));
        }
        if self.n == 0 || self.n > self.d * self.d - 1 {
            return Err(Error::InvalidModel(format!("n = {} not in 1..={}", self.n, self.d * self.d - 1)));
        }
        if matches!(self.sampler, Sampler::DepolarizedMix | Sampler::PlusMix)
            && (self.mix_p.is_empty() || self.mix_p.iter().any(|p| !(0.0..=1.0).contains(p)))
        {
            return Err(Error::InvalidModel("mix_p must be a non-empty list in [0, 1]".into()));
        }
        Ok(())
    }
}

/// `0.05, 0.10, …, 0.95`. The endpoint 1 is left out because the plus-mix
/// state is pure there.
pub fn default_mix_grid() -> Vec<f64> {
    (1..20).map(|i| i as f64 * 0.05).collect()
}

const REJECT_WINDOW: usize = 1_000_000;

fn ginibre(d: usize, rng: &mut ChaCha20Rng) -> HermMatrix {
    let s = CMat::from_fn(d, d, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    });
    let p = &s * s.adjoint();
    let tr = p.trace().re;
    HermMatrix::symmetrized(p / C64::new(tr, 0.0))
}

fn bloch_reject(d: usize, rng: &mut ChaCha20Rng) -> Result<HermMatrix> {
    let a = ((d as f64 - 1.0) / d as f64).sqrt();
    let basis = gmm_basis(d)?;
    for _ in 0..REJECT_WINDOW {
        let mut m = CMat::identity(d, d) * C64::new(1.0 / d as f64, 0.0);
        for l in basis.matrices.iter() {
            let t: f64 = rng.gen_range(-a..=a);
            m += l.mat() * C64::new(t, 0.0);
        }
        let rho = HermMatrix::symmetrized(m);
        if rho.min_eig()? > 0.0 {
            return Ok(rho);
        }
    }
    Err(Error::InvalidState(format!(
        "sampler starvation: no positive state in {REJECT_WINDOW} Bloch-cube draws for d={d} (acceptance < 1e-6)"
    )))
}

fn draw_state(spec: &SampleSpec, rng: &mut ChaCha20Rng) -> Result<HermMatrix> {
    let d = spec.d;
    match spec.sampler {
        Sampler::Ginibre => Ok(ginibre(d, rng)),
        Sampler::BlochReject => bloch_reject(d, rng),
        Sampler::DepolarizedMix | Sampler::PlusMix => {
            let base = ginibre(d, rng);
            let p = *spec.mix_p.choose(rng).expect("validated non-empty");
            let target = if spec.sampler == Sampler::PlusMix {
                plus_state(d)
            } else {
                HermMatrix::identity(d).scale(1.0 / d as f64)
            };
            Ok(&base.scale(1.0 - p) + &target.scale(p))
        }
    }
}

/// State number `index` of the stream described by `spec`.
pub fn sample_state(spec: &SampleSpec, index: usize) -> Result<HermMatrix> {
    spec.validate()?;
    let (_, mut rng) = rng_for(spec.seed, index as u64);
    draw_state(spec, &mut rng)
}

pub fn sample_states(spec: &SampleSpec) -> impl Iterator<Item = Result<HermMatrix>> + '_ {
    (0..spec.count).map(move |i| sample_state(spec, i))
}

fn random_directions(d: usize, n: usize, rng: &mut ChaCha20Rng) -> Result<Vec<HermMatrix>> {
    let nmax = d * d - 1;
    let basis = gmm_basis(d)?;
    for _ in 0..1000 {
        let derivs: Vec<HermMatrix> = (0..n)
            .map(|_| {
                let mut m = CMat::zeros(d, d);
                for l in basis.matrices.iter().take(nmax) {
                    let c: f64 = StandardNormal.sample(rng);
                    m += l.mat() * C64::new(c, 0.0);
                }
                HermMatrix::symmetrized(m)
            })
            .collect();
        let g = RMat::from_fn(n, n, |j, k| derivs[j].inner(&derivs[k]));
        let (w, _) = crate::linalg::eig_sym(&g)?;
        if w[0] > GRAM_TOL {
            return Ok(derivs);
        }
    }
    Err(Error::InvalidModel("could not draw linearly independent directions".into()))
}

fn draw_model(spec: &SampleSpec, mode: DerivMode, rng: &mut ChaCha20Rng) -> Result<StatModel> {
    let d = spec.d;
    let n = spec.n;
    let nmax = d * d - 1;
    let rho = draw_state(spec, rng)?;
    match mode {
        DerivMode::GmmFull => {
            if n != nmax {
                return Err(Error::InvalidModel(format!("gmm-full needs n = {nmax}")));
            }
            full_model_at(rho)
        }
        DerivMode::GmmSubset => {
            let mut idx: Vec<usize> = (0..nmax).collect();
            idx.shuffle(rng);
            let mut k = idx[..n].to_vec();
            k.sort_unstable();
            let coords = herm_basis_vec(&rho);
            let theta = k.iter().map(|&i| coords[i + 1]).collect();
            let derivs = k.iter().map(|&i| gmm_matrix(d, i)).collect();
            StatModel::new(rho, derivs, None, Some(theta))
        }
        DerivMode::RandomDirections => {
            let derivs = random_directions(d, n, rng)?;
            StatModel::new(rho, derivs, None, None)
        }
    }
}

/// Model number `index`; also returns the per-sample seed.
pub fn sample_model(spec: &SampleSpec, mode: DerivMode, index: usize) -> Result<(u64, StatModel)> {
    spec.validate()?;
    let (seed, mut rng) = rng_for(spec.seed, index as u64);
    Ok((seed, draw_model(spec, mode, &mut rng)?))
}

pub fn sample_models(spec: &SampleSpec, mode: DerivMode) -> impl Iterator<Item = Result<(u64, StatModel)>> + '_ {
    (0..spec.count).map(move |i| sample_model(spec, mode, i))
}

/// Random symmetric positive weight with `Tr W = n`.
pub fn random_weight(n: usize, rng: &mut ChaCha20Rng) -> RMat {
    let g = RMat::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let w = &g * g.transpose() + RMat::identity(n, n) * 1e-3;
    let tr = w.trace();
    w * (n as f64 / tr)
}

/// Runs `f(0..count)` on `jobs` threads, returning results in index order.
pub fn par_map<T: Send>(count: usize, jobs: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let jobs = jobs.max(1).min(count.max(1));
    if jobs == 1 {
        return (0..count).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..count).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= count {
                    break;
                }
                let v = f(i);
                slots.lock().expect("no panics while holding the lock")[i] = Some(v);
            });
        }
    });
    slots.into_inner().expect("threads joined").into_iter().map(|v| v.expect("every index visited")).collect()
}

/// One model's bounds and the derived ratios.
#[derive(Clone, Debug, Serialize)]
pub struct RatioRecord {
    pub index: usize,
    pub source: String,
    pub d: usize,
    pub n: usize,
    pub purity: f64,
    pub hcrb: f64,
    pub nhcrb: f64,
    pub sld: f64,
    pub rld: f64,
    pub gmcrb: f64,
    /// `nhcrb / hcrb`.
    pub ratio_nh: f64,
    /// `(hcrb - sld) / sld`.
    pub delta: f64,
    /// `(nhcrb - hcrb) / hcrb`.
    pub small_delta: f64,
    pub seed: u64,
    pub model_hash: String,
}

/// A record that failed the ordering or range checks, kept with the solver
/// diagnostics instead of being emitted.
#[derive(Clone, Debug, Serialize)]
pub struct Quarantined {
    pub record: RatioRecord,
    pub reason: String,
    pub hcrb_gap: Option<f64>,
    pub nhcrb_gap: Option<f64>,
}

pub const ORDER_TOL: f64 = 1e-5;

pub enum Evaluated {
    Ok(RatioRecord),
    Quarantined(Box<Quarantined>),
}

/// All bounds for one model, with the ordering checks applied.
pub fn evaluate(model: &StatModel, opts: &SdpOptions, index: usize, seed: u64, source: &str) -> Result<Evaluated> {
    let sld = bounds::sld_crb(model)?.value;
    let rld = bounds::rld_crb(model)?.value;
    let gm = bounds::gmcrb(model, 1)?.value;
    let h = bounds::hcrb(model, opts)?;
    let nh = bounds::nhcrb(model, opts)?;
    let rec = RatioRecord {
        index,
        source: source.to_string(),
        d: model.d,
        n: model.n(),
        purity: model.purity(),
        hcrb: h.value,
        nhcrb: nh.value,
        sld,
        rld,
        gmcrb: gm,
        ratio_nh: nh.value / h.value,
        delta: (h.value - sld) / sld,
        small_delta: (nh.value - h.value) / h.value,
        seed,
        model_hash: model.content_hash(),
    };
    let scale = 1.0 + h.value.abs();
    let mut reasons = Vec::new();
    if sld.max(rld) > h.value + ORDER_TOL * scale {
        reasons.push(format!("max(SLD, RLD) = {} exceeds HCRB = {}", sld.max(rld), h.value));
    }
    if h.value > nh.value + ORDER_TOL * scale {
        reasons.push(format!("HCRB = {} exceeds NHCRB = {}", h.value, nh.value));
    }
    if rec.delta < -ORDER_TOL || rec.delta > 1.0 + ORDER_TOL {
        reasons.push(format!("delta = {} outside [0, 1]", rec.delta));
    }
    if reasons.is_empty() {
        Ok(Evaluated::Ok(rec))
    } else {
        Ok(Evaluated::Quarantined(Box::new(Quarantined {
            record: rec,
            reason: reasons.join("; "),
            hcrb_gap: h.gap,
            nhcrb_gap: nh.gap,
        })))
    }
}

/// Records, quarantined records and failure messages of one run.
#[derive(Clone, Debug, Default, Serialize)]
pub struct RecordSet {
    pub records: Vec<RatioRecord>,
    pub quarantined: Vec<Quarantined>,
    pub failures: Vec<String>,
}

impl RecordSet {
    fn push(&mut self, r: Result<Evaluated>, index: usize) {
        match r {
            Ok(Evaluated::Ok(rec)) => self.records.push(rec),
            Ok(Evaluated::Quarantined(q)) => self.quarantined.push(*q),
            Err(e) => self.failures.push(format!("sample {index}: {e}")),
        }
    }

    pub fn max_ratio(&self) -> Option<f64> {
        self.records.iter().map(|r| r.ratio_nh).reduce(f64::max)
    }
}

fn run_models(
    count: usize,
    jobs: usize,
    opts: &SdpOptions,
    make: impl Fn(usize) -> Result<(u64, StatModel, String)> + Sync,
) -> RecordSet {
    let out = par_map(count, jobs, |i| make(i).and_then(|(seed, m, src)| evaluate(&m, opts, i, seed, &src)));
    let mut set = RecordSet::default();
    for (i, r) in out.into_iter().enumerate() {
        set.push(r, i);
    }
    set
}

/// A point on one of the analytic extremal curves.
#[derive(Clone, Debug, Serialize)]
pub struct ExtremalPoint {
    /// `rho-max` or `rho-min-<r>`.
    pub family: String,
    pub p: f64,
    pub purity: f64,
    pub hcrb: f64,
    pub nhcrb: f64,
    pub ratio: f64,
    /// Closed-form values where known (the `ρ_max` family).
    pub analytic_hcrb: Option<f64>,
    pub analytic_nhcrb: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SweepResult {
    pub samples: RecordSet,
    pub extremal: Vec<ExtremalPoint>,
    pub extremal_failures: Vec<String>,
}

/// Full-model samples cycling through the Ginibre, plus-mix and
/// depolarized-mix samplers, plus optional extremal curves.
pub fn purity_sweep(
    d: usize,
    samples: usize,
    seed: u64,
    include_extremal: bool,
    opts: &SdpOptions,
    jobs: usize,
) -> Result<SweepResult> {
    if !(2..=4).contains(&d) {
        return Err(Error::Unsupported(format!("purity sweep supports d in 2..=4, got {d}")));
    }
    let nmax = d * d - 1;
    let samplers = [Sampler::Ginibre, Sampler::PlusMix, Sampler::DepolarizedMix];
    let set = run_models(samples, jobs, opts, |i| {
        let spec = SampleSpec::new(d, nmax, samples, seed, samplers[i % samplers.len()]);
        let (s, m) = sample_model(&spec, DerivMode::GmmFull, i)?;
        Ok((s, m, format!("{:?}", spec.sampler).to_lowercase()))
    });
    let mut out = SweepResult { samples: set, ..Default::default() };
    if include_extremal {
        let mut jobs_list: Vec<(String, f64)> = Vec::new();
        for i in 0..=10 {
            let p = i as f64 / 10.0;
            jobs_list.push(("rho-max".into(), p.min(0.99)));
        }
        for r in 2..=d {
            let lo = 1.0 / r as f64;
            let hi = 1.0 / (r - 1) as f64;
            for i in 0..=4 {
                let p = lo + (hi - lo) * i as f64 / 4.0;
                jobs_list.push((format!("rho-min-{r}"), p));
            }
        }
        let pts = par_map(jobs_list.len(), jobs, |i| -> Result<ExtremalPoint> {
            let (fam, p) = &jobs_list[i];
            let p = *p;
            let (model, analytic) = if fam == "rho-max" {
                (depolarized_plus_model(d, p)?, Some(analytic_rho_max(d, p)))
            } else {
                let r: usize = fam.trim_start_matches("rho-min-").parse().expect("own label");
                (rank_deficient_min_model(d, r, p, DEFAULT_EPS)?, None)
            };
            let h = bounds::hcrb(&model, opts)?.value;
            let nh = bounds::nhcrb(&model, opts)?.value;
            Ok(ExtremalPoint {
                family: fam.clone(),
                p,
                purity: model.purity(),
                hcrb: h,
                nhcrb: nh,
                ratio: nh / h,
                analytic_hcrb: analytic.map(|a| a.0),
                analytic_nhcrb: analytic.map(|a| a.1),
            })
        });
        for (i, p) in pts.into_iter().enumerate() {
            match p {
                Ok(p) => out.extremal.push(p),
                Err(e) => out.extremal_failures.push(format!("{} p={}: {e}", jobs_list[i].0, jobs_list[i].1)),
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Stats {
    pub count: usize,
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(v: &[f64]) -> Option<Stats> {
        if v.is_empty() {
            return None;
        }
        let min = v.iter().copied().fold(f64::INFINITY, f64::min);
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some(Stats { count: v.len(), min, mean: v.iter().sum::<f64>() / v.len() as f64, max })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GridCell {
    pub d: usize,
    pub n: usize,
    /// Random models only.
    pub random: Option<Stats>,
    /// Maximally mixed subset models only.
    pub forced: Option<Stats>,
    /// Largest ratio over both.
    pub envelope_max: Option<f64>,
    pub failures: usize,
    pub quarantined: usize,
}

/// All `k`-subsets of `0..m` in lexicographic order.
pub fn subsets(m: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    if k > m {
        return out;
    }
    loop {
        out.push(cur.clone());
        let mut i = k;
        while i > 0 && cur[i - 1] == m - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        cur[i - 1] += 1;
        for j in i..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// Most subsets enumerated per cell; beyond this a seeded sample is used.
pub const MAX_FORCED_SUBSETS: usize = 256;

/// Maximally mixed subset models used as forced members of a grid cell.
pub fn forced_subsets(d: usize, n: usize, seed: u64) -> Vec<Vec<usize>> {
    let all = subsets(d * d - 1, n);
    if all.len() <= MAX_FORCED_SUBSETS {
        return all;
    }
    let (_, mut rng) = rng_for(seed, (d * 1000 + n) as u64);
    let mut pick: Vec<Vec<usize>> = all.choose_multiple(&mut rng, MAX_FORCED_SUBSETS).cloned().collect();
    pick.sort();
    pick
}

/// Random models plus maximally mixed subset models for every `(d, n)`.
pub fn ratio_grid(
    d_range: &[usize],
    n_range: &[usize],
    samples_per_cell: usize,
    seed: u64,
    include_forced: bool,
    opts: &SdpOptions,
    jobs: usize,
) -> Result<Vec<GridCell>> {
    let mut cells = Vec::new();
    for &d in d_range {
        for &n in n_range {
            let nmax = d * d - 1;
            if n == 0 || n > nmax {
                continue;
            }
            let cell_seed = derive_seed(seed, (d * 1000 + n) as u64);
            let mode = if n == nmax { DerivMode::GmmFull } else { DerivMode::RandomDirections };
            let random = run_models(samples_per_cell, jobs, opts, |i| {
                let spec = SampleSpec::new(d, n, samples_per_cell, cell_seed, Sampler::Ginibre);
                let (s, m) = sample_model(&spec, mode, i)?;
                Ok((s, m, "random".into()))
            });
            let forced = if include_forced {
                let ks = forced_subsets(d, n, seed);
                run_models(ks.len(), jobs, opts, |i| {
                    Ok((0, mm_subset_model(d, &ks[i])?, format!("mm-subset:{:?}", ks[i])))
                })
            } else {
                RecordSet::default()
            };
            let rr: Vec<f64> = random.records.iter().map(|r| r.ratio_nh).collect();
            let fr: Vec<f64> = forced.records.iter().map(|r| r.ratio_nh).collect();
            let envelope_max = rr.iter().chain(&fr).copied().reduce(f64::max);
            cells.push(GridCell {
                d,
                n,
                random: Stats::of(&rr),
                forced: Stats::of(&fr),
                envelope_max,
                failures: random.failures.len() + forced.failures.len(),
                quarantined: random.quarantined.len() + forced.quarantined.len(),
            });
        }
    }
    Ok(cells)
}

/// Whether the forced-model maxima are non-decreasing in `n` for every `d`.
/// Reported, not asserted: at the qutrit maximally mixed state the subset
/// maximum drops from n = 5 to n = 6.
pub fn forced_envelope_monotone(cells: &[GridCell]) -> bool {
    let mut prev: Option<(usize, f64)> = None;
    for c in cells {
        let Some(f) = c.forced else { continue };
        if let Some((d, m)) = prev {
            if d == c.d && f.max < m - 1e-6 {
                return false;
            }
        }
        prev = Some((c.d, f.max));
    }
    true
}

#[derive(Clone, Debug, Serialize)]
pub struct WeightedRecord {
    pub index: usize,
    pub seed: u64,
    pub purity: f64,
    pub ratio_model: f64,
    pub ratio_mm: f64,
    pub model_below_mm: bool,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct WeightedResult {
    pub records: Vec<WeightedRecord>,
    pub failures: Vec<String>,
    /// Fraction of records with `ratio(ρ, W) <= ratio(ρ_m, W)`.
    pub fraction_below: f64,
}

/// Ratio at `(ρ, W)` against the ratio at `(ρ_m, W)` for random full models
/// and random weights with `Tr W = n`.
pub fn weighted_experiment(d: usize, samples: usize, seed: u64, opts: &SdpOptions, jobs: usize) -> Result<WeightedResult> {
    let nmax = d * d - 1;
    let out = par_map(samples, jobs, |i| -> Result<WeightedRecord> {
        let spec = SampleSpec::new(d, nmax, samples, seed, Sampler::Ginibre);
        let (s, mut rng) = rng_for(seed, i as u64);
        let model = draw_model(&spec, DerivMode::GmmFull, &mut rng)?;
        let w = random_weight(nmax, &mut rng);
        let model = model.with_weight(w.clone())?;
        let mm = crate::model::gmm_model(d, &vec![0.0; nmax])?.with_weight(w)?;
        let rm = bounds::nhcrb(&model, opts)?.value / bounds::hcrb(&model, opts)?.value;
        let r0 = bounds::nhcrb(&mm, opts)?.value / bounds::hcrb(&mm, opts)?.value;
        Ok(WeightedRecord {
            index: i,
            seed: s,
            purity: model.purity(),
            ratio_model: rm,
            ratio_mm: r0,
            model_below_mm: rm <= r0 + 1e-6,
        })
    });
    let mut res = WeightedResult::default();
    for (i, r) in out.into_iter().enumerate() {
        match r {
            Ok(r) => res.records.push(r),
            Err(e) => res.failures.push(format!("sample {i}: {e}")),
        }
    }
    if !res.records.is_empty() {
        res.fraction_below =
            res.records.iter().filter(|r| r.model_below_mm).count() as f64 / res.records.len() as f64;
    }
    Ok(res)
}

#[derive(Clone, Debug, Serialize)]
pub struct GmRecord {
    pub index: usize,
    pub seed: u64,
    /// `full` or `subset`.
    pub kind: String,
    pub n: usize,
    pub purity: f64,
    pub hcrb: f64,
    pub nhcrb: f64,
    pub gmcrb: f64,
    pub gmcrb_two_copy: f64,
    pub nhcrb_two_copy: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct GmResult {
    pub records: Vec<GmRecord>,
    pub failures: Vec<String>,
}

/// Gill-Massar against Nagaoka-Hayashi on random full models (even indices)
/// and random Gell-Mann subset models (odd indices). The first
/// `two_copy_nhcrb` full models also get the two-copy Nagaoka-Hayashi bound.
pub fn gm_vs_nh_experiment(
    d: usize,
    samples: usize,
    seed: u64,
    two_copy_nhcrb: usize,
    opts: &SdpOptions,
    jobs: usize,
) -> Result<GmResult> {
    if two_copy_nhcrb > 0 && d > 3 {
        return Err(Error::Unsupported("two-copy NHCRB is limited to d <= 3".into()));
    }
    let nmax = d * d - 1;
    let out = par_map(samples, jobs, |i| -> Result<GmRecord> {
        let full = i % 2 == 0;
        let (s, mut rng) = rng_for(seed, i as u64);
        let model = if full {
            let spec = SampleSpec::new(d, nmax, samples, seed, Sampler::Ginibre);
            draw_model(&spec, DerivMode::GmmFull, &mut rng)?
        } else {
            let n = rng.gen_range(2..nmax);
            let spec = SampleSpec::new(d, n, samples, seed, Sampler::Ginibre);
            draw_model(&spec, DerivMode::GmmSubset, &mut rng)?
        };
        let nh = bounds::nhcrb(&model, opts)?.value;
        let h = bounds::hcrb(&model, opts)?.value;
        let gm = bounds::gmcrb(&model, 1)?.value;
        let gm2 = bounds::gmcrb(&model, 2)?.value;
        let nh2 = if full && i / 2 < two_copy_nhcrb {
            Some(bounds::nhcrb(&tensor_copies(&model, 2)?, opts)?.value)
        } else {
            None
        };
        Ok(GmRecord {
            index: i,
            seed: s,
            kind: if full { "full" } else { "subset" }.into(),
            n: model.n(),
            purity: model.purity(),
            hcrb: h,
            nhcrb: nh,
            gmcrb: gm,
            gmcrb_two_copy: gm2,
            nhcrb_two_copy: nh2,
        })
    });
    let mut res = GmResult::default();
    for (i, r) in out.into_iter().enumerate() {
        match r {
            Ok(r) => res.records.push(r),
            Err(e) => res.failures.push(format!("sample {i}: {e}")),
        }
    }
    Ok(res)
}

#[derive(Clone, Debug, Serialize)]
pub struct Table1Row {
    pub n: usize,
    pub subsets: usize,
    pub hcrb_min: f64,
    pub hcrb_max: f64,
    pub nhcrb_min: f64,
    pub nhcrb_max: f64,
    pub max_ratio: f64,
    pub failures: usize,
}

/// Holevo and Nagaoka-Hayashi bounds for every subset of the qutrit
/// Gell-Mann directions at the maximally mixed state.
pub fn table1_reproduce(opts: &SdpOptions, jobs: usize) -> Result<Vec<Table1Row>> {
    let mut rows = Vec::new();
    for n in 2..=8 {
        let ks = subsets(8, n);
        let vals = par_map(ks.len(), jobs, |i| -> Result<(f64, f64)> {
            let m = mm_subset_model(3, &ks[i])?;
            Ok((bounds::hcrb(&m, opts)?.value, bounds::nhcrb(&m, opts)?.value))
        });
        let mut ok = Vec::new();
        let mut failures = 0;
        for v in vals {
            match v {
                Ok(v) => ok.push(v),
                Err(_) => failures += 1,
            }
        }
        if ok.is_empty() {
            return Err(Error::Solver(format!("every subset failed for n = {n}")));
        }
        let f = |g: fn(f64, f64) -> f64, init: f64, pick: fn(&(f64, f64)) -> f64| ok.iter().map(pick).fold(init, g);
        rows.push(Table1Row {
            n,
            subsets: ks.len(),
            hcrb_min: f(f64::min, f64::INFINITY, |v| v.0),
            hcrb_max: f(f64::max, f64::NEG_INFINITY, |v| v.0),
            nhcrb_min: f(f64::min, f64::INFINITY, |v| v.1),
            nhcrb_max: f(f64::max, f64::NEG_INFINITY, |v| v.1),
            max_ratio: f(f64::max, f64::NEG_INFINITY, |v| v.1 / v.0),
            failures,
        });
    }
    Ok(rows)
}

fn csv_f(x: f64) -> String {
    format!("{x:e}")
}

/// CSV with a header line; floats in shortest round-trip form.
pub fn records_to_csv(records: &[RatioRecord]) -> String {
    let mut s = String::from("index,source,d,n,purity,hcrb,nhcrb,sld,rld,gmcrb,ratio_nh,delta,small_delta,seed,model_hash\n");
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.index,
            r.source,
            r.d,
            r.n,
            csv_f(r.purity),
            csv_f(r.hcrb),
            csv_f(r.nhcrb),
            csv_f(r.sld),
            csv_f(r.rld),
            csv_f(r.gmcrb),
            csv_f(r.ratio_nh),
            csv_f(r.delta),
            csv_f(r.small_delta),
            r.seed,
            r.model_hash
        );
    }
    s
}

/// Generic CSV from a header and rows already converted to strings.
pub fn table_to_csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

pub fn fmt_f(x: f64) -> String {
    csv_f(x)
}

/// Per-run metadata written next to a dataset.
#[derive(Clone, Debug, Serialize, serde::Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub config: serde_json::Value,
    pub seed: u64,
    /// Digest of the emitted dataset.
    pub content_hash: String,
    /// Digest of the configuration, used to decide whether a rerun can be
    /// skipped.
    pub config_hash: String,
    pub solver: serde_json::Value,
    pub records: usize,
    pub failures: usize,
    pub quarantined: usize,
    pub complete: bool,
    pub version: String,
}

impl RunManifest {
    pub fn new(
        experiment: &str,
        config: serde_json::Value,
        seed: u64,
        dataset: &str,
        opts: &SdpOptions,
        counts: (usize, usize, usize),
    ) -> Self {
        let config_hash = hex16(&format!("{experiment}:{config}"));
        Self {
            experiment: experiment.to_string(),
            config,
            seed,
            content_hash: hex16(dataset),
            config_hash,
            solver: serde_json::to_value(opts).unwrap_or_default(),
            records: counts.0,
            failures: counts.1,
            quarantined: counts.2,
            complete: true,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn config_hash_for(experiment: &str, config: &serde_json::Value) -> String {
        hex16(&format!("{experiment}:{config}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_stable_and_distinct() {
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
        assert_ne!(derive_seed(7, 3), derive_seed(7, 4));
        assert_ne!(derive_seed(7, 3), derive_seed(8, 3));
    }

    #[test]
    fn subset_enumeration() {
        assert_eq!(subsets(8, 2).len(), 28);
        assert_eq!(subsets(8, 5).len(), 56);
        assert_eq!(subsets(4, 4), vec![vec![0, 1, 2, 3]]);
    }

    #[test]
    fn depolarized_mix_at_one_is_maximally_mixed() {
        let mut spec = SampleSpec::new(3, 8, 4, 1, Sampler::DepolarizedMix);
        spec.mix_p = vec![1.0];
        for r in sample_states(&spec) {
            let r = r.unwrap();
            assert!((r.mat() - CMat::identity(3, 3) / C64::new(3.0, 0.0)).camax() < 1e-15);
        }
    }

    #[test]
    fn random_directions_independent() {
        let spec = SampleSpec::new(3, 4, 10, 11, Sampler::Ginibre);
        for m in sample_models(&spec, DerivMode::RandomDirections) {
            let (_, m) = m.unwrap();
            let (w, _) = crate::linalg::eig_sym(&m.gram()).unwrap();
            assert!(w[0] > GRAM_TOL);
        }
    }

    #[test]
    fn par_map_is_order_preserving() {
        let a = par_map(50, 4, |i| i * i);
        assert_eq!(a, (0..50).map(|i| i * i).collect::<Vec<_>>());
    }
}

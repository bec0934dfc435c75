//! Uniform polyconvexity: instance checks, counterexample search and
//! sampled LP certificates.
//!
//! For a decomposition `η₀ = Σ mᵢηᵢ` of a unit simple k-vector into unit
//! simple atoms, the Jensen gap at constant `c` is
//!
//! ```text
//! gap = Σ mᵢΨ(ηᵢ) − Ψ(η₀) − c·(Σ mᵢ|ηᵢ| − |η₀|)
//! ```
//!
//! and Ψ is uniformly polyconvex with constant `c` when every gap is
//! non-negative. Writing `G(η) = Ψ(η) − c|η|`, the gap is
//! `Σ mᵢG(ηᵢ) − G(η₀)`, which is linear in the weights: minimizing it over a
//! finite atom set is a linear program whose basic optima use at most
//! `C(n, k)` atoms.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exterior::{binomial, KVector, OrientedPlane, DEFAULT_RANK_TOL};
use crate::integrands::GeometricIntegrand;
use crate::lp::{self, LpOutcome};
use crate::sampling::{gaussian_matrix, random_orthonormal, random_plane, stream_rng};

/// Gaps below this are genuine violations.
pub const COUNTEREXAMPLE_THRESHOLD: f64 = -1e-9;
/// Tolerance on `Σ mᵢηᵢ = η₀` for float decompositions.
pub const IDENTITY_TOL: f64 = 1e-9;
pub const DEFAULT_RETRY_BUDGET: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OrientationMode {
    /// Atoms anywhere on the oriented Grassmannian.
    Any,
    /// Atoms with positive pairing against η₀.
    #[default]
    Positive,
}

impl std::str::FromStr for OrientationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "any" => Ok(Self::Any),
            "positive" => Ok(Self::Positive),
            other => Err(Error::Invalid(format!("orientation mode {other:?} (expected any|positive)"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Atom {
    pub weight: f64,
    pub plane: OrientedPlane,
}

/// `η₀ = Σ mᵢηᵢ` with positive weights and unit simple atoms.
#[derive(Clone, Debug)]
pub struct Decomposition {
    eta0: OrientedPlane,
    atoms: Vec<Atom>,
}

impl Decomposition {
    pub fn new(eta0: OrientedPlane, atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Invalid("a decomposition needs at least one atom".into()));
        }
        let (n, k) = (eta0.dim(), eta0.grade());
        let mut sum = KVector::zero(n, k);
        for (i, a) in atoms.iter().enumerate() {
            if a.plane.dim() != n || a.plane.grade() != k {
                return Err(Error::DimensionMismatch(format!("atom {i} not in Λ_{k}ℝ^{n}")));
            }
            if !(a.weight > 0.0) || !a.weight.is_finite() {
                return Err(Error::Invalid(format!("atom {i} has non-positive weight {}", a.weight)));
            }
            sum = &sum + &a.plane.kvector().scale(&a.weight);
        }
        let residual = sum.distance(eta0.kvector());
        if residual > IDENTITY_TOL {
            return Err(Error::Invalid(format!("Σ mᵢηᵢ misses η₀ by {residual:e}")));
        }
        Ok(Self { eta0, atoms })
    }

    pub fn eta0(&self) -> &OrientedPlane {
        &self.eta0
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn dim(&self) -> usize {
        self.eta0.dim()
    }

    pub fn grade(&self) -> usize {
        self.eta0.grade()
    }

    pub fn weight_sum(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    /// `Σ mᵢ|ηᵢ| − |η₀|`, non-negative by the triangle inequality.
    pub fn mass_excess(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight * a.plane.kvector().norm()).sum::<f64>() - self.eta0.kvector().norm()
    }

    pub fn check_orientation(&self) -> Result<()> {
        for (i, a) in self.atoms.iter().enumerate() {
            let inner = a.plane.inner(&self.eta0)?;
            if inner <= 0.0 {
                return Err(Error::Orientation { index: i, inner });
            }
        }
        Ok(())
    }

    pub fn is_positively_oriented(&self) -> bool {
        self.check_orientation().is_ok()
    }
}

#[derive(Serialize, Deserialize)]
struct AtomRepr {
    m: f64,
    eta: KVector<f64>,
}

#[derive(Serialize, Deserialize)]
struct DecompositionRepr {
    #[serde(default)]
    n: Option<usize>,
    #[serde(default)]
    k: Option<usize>,
    eta0: KVector<f64>,
    atoms: Vec<AtomRepr>,
}

impl Serialize for Decomposition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DecompositionRepr {
            n: Some(self.dim()),
            k: Some(self.grade()),
            eta0: self.eta0.kvector().clone(),
            atoms: self.atoms.iter().map(|a| AtomRepr { m: a.weight, eta: a.plane.kvector().clone() }).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Decomposition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = DecompositionRepr::deserialize(d)?;
        let eta0 = OrientedPlane::from_kvector(&repr.eta0).map_err(D::Error::custom)?;
        let atoms = repr
            .atoms
            .iter()
            .map(|a| Ok(Atom { weight: a.m, plane: OrientedPlane::from_kvector(&a.eta)? }))
            .collect::<Result<Vec<_>>>()
            .map_err(D::Error::custom)?;
        Decomposition::new(eta0, atoms).map_err(D::Error::custom)
    }
}

/// Jensen gap of one decomposition at constant `c`.
pub fn check_instance(psi: &GeometricIntegrand, c: f64, dec: &Decomposition, mode: OrientationMode) -> Result<f64> {
    if mode == OrientationMode::Positive {
        dec.check_orientation()?;
    }
    let mut weighted = 0.0;
    for a in &dec.atoms {
        weighted += a.weight * psi.eval(a.plane.kvector())?;
    }
    Ok(weighted - psi.eval(dec.eta0.kvector())? - c * dec.mass_excess())
}

/// Affine structure of the gap in `c`: returns `(A, B)` with
/// `gap(c) = A − c·B` fitted through `c_list`.
pub fn gap_affinity_check(psi: &GeometricIntegrand, dec: &Decomposition, c_list: &[f64]) -> Result<(f64, f64)> {
    if c_list.len() < 2 {
        return Err(Error::Invalid("need at least two values of c".into()));
    }
    let gaps: Vec<f64> = c_list
        .iter()
        .map(|&c| check_instance(psi, c, dec, OrientationMode::Any))
        .collect::<Result<_>>()?;
    let len = c_list.len() as f64;
    let mean_c = c_list.iter().sum::<f64>() / len;
    let mean_g = gaps.iter().sum::<f64>() / len;
    let sxx: f64 = c_list.iter().map(|c| (c - mean_c).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Invalid("c values must not all coincide".into()));
    }
    let sxy: f64 = c_list.iter().zip(&gaps).map(|(c, g)| (c - mean_c) * (g - mean_g)).sum();
    let slope = sxy / sxx;
    let a = mean_g - slope * mean_c;
    let b = -slope;
    let residual = c_list.iter().zip(&gaps).map(|(c, g)| (g - (a - c * b)).abs()).fold(0.0, f64::max);
    if residual >= 1e-10 {
        return Err(Error::Invalid(format!("gap is not affine in c (residual {residual:e})")));
    }
    Ok((a, b))
}

/// Sampler settings for random decompositions.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SamplerParams {
    pub n: usize,
    pub k: usize,
    pub d_min: usize,
    pub d_max: usize,
    pub mode: OrientationMode,
}

impl SamplerParams {
    pub fn new(n: usize, k: usize, mode: OrientationMode) -> Self {
        Self { n, k, d_min: 2, d_max: 4, mode }
    }
}

/// Atom families whose positive combinations are always simple.
#[derive(Clone, Copy, Debug)]
enum Family {
    Free,
    /// All atoms contain a common (k−1)-dimensional core.
    Pencil,
    /// All atoms lie in a common (k+1)-dimensional subspace.
    Sheaf,
}

fn draw_atoms(n: usize, k: usize, d: usize, family: Family, rng: &mut ChaCha8Rng) -> Vec<OrientedPlane> {
    match family {
        Family::Free => (0..d).map(|_| random_plane(n, k, rng)).collect(),
        Family::Pencil => {
            let core = random_orthonormal(n, k - 1, rng);
            (0..d)
                .map(|_| loop {
                    let w = gaussian_matrix(n, 1, rng);
                    let frame = nalgebra::DMatrix::from_fn(n, k, |i, j| if j < k - 1 { core[(i, j)] } else { w[(i, 0)] });
                    if let Ok(p) = OrientedPlane::from_frame(&frame) {
                        break p;
                    }
                })
                .collect()
        }
        Family::Sheaf => {
            let ambient = random_orthonormal(n, k + 1, rng);
            (0..d)
                .map(|_| loop {
                    let g = gaussian_matrix(k + 1, k, rng);
                    if let Ok(p) = OrientedPlane::from_frame(&(&ambient * g)) {
                        break p;
                    }
                })
                .collect()
        }
    }
}

fn assemble(planes: &[OrientedPlane], weights: &[f64], mode: OrientationMode) -> Option<Decomposition> {
    let (n, k) = (planes[0].dim(), planes[0].grade());
    let mut sigma = KVector::zero(n, k);
    for (p, &m) in planes.iter().zip(weights) {
        sigma = &sigma + &p.kvector().scale(&m);
    }
    let norm = sigma.norm();
    if norm <= 0.1 || !sigma.is_simple(DEFAULT_RANK_TOL).ok()? {
        return None;
    }
    if mode == OrientationMode::Positive && planes.iter().any(|p| p.kvector().inner(&sigma).unwrap() <= 0.0) {
        return None;
    }
    let eta0 = OrientedPlane::from_kvector(&sigma).ok()?;
    let atoms = planes.iter().zip(weights).map(|(p, &m)| Atom { weight: m / norm, plane: p.clone() }).collect();
    Decomposition::new(eta0, atoms).ok()
}

pub(crate) fn random_decomposition_rng(
    n: usize,
    k: usize,
    d: usize,
    mode: OrientationMode,
    rng: &mut ChaCha8Rng,
) -> Result<Decomposition> {
    if d < 2 {
        return Err(Error::Invalid("random decompositions need d ≥ 2".into()));
    }
    if k == 0 || k > n {
        return Err(Error::Invalid(format!("need 1 ≤ k ≤ n, got n={n}, k={k}")));
    }
    let always_simple = k == 1 || k + 1 >= n;
    for attempt in 0..DEFAULT_RETRY_BUDGET {
        let family = if always_simple {
            Family::Free
        } else if attempt % 2 == 0 {
            Family::Pencil
        } else {
            Family::Sheaf
        };
        let mut planes = draw_atoms(n, k, d, family, rng);
        if mode == OrientationMode::Positive {
            let first = planes[0].clone();
            for p in planes.iter_mut().skip(1) {
                if p.inner(&first).unwrap() < 0.0 {
                    *p = p.reversed();
                }
            }
        }
        let weights: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..1.0)).collect();
        if let Some(dec) = assemble(&planes, &weights, mode) {
            return Ok(dec);
        }
    }
    Err(Error::RetryBudget {
        attempts: DEFAULT_RETRY_BUDGET,
        reason: format!("no admissible decomposition for n={n}, k={k}, d={d}, mode={mode:?}"),
    })
}

/// Random decomposition with `d` atoms, deterministic in `seed`.
pub fn random_decomposition(n: usize, k: usize, d: usize, seed: u64, mode: OrientationMode) -> Result<Decomposition> {
    random_decomposition_rng(n, k, d, mode, &mut stream_rng(seed, 0))
}

fn sample_for_index(params: &SamplerParams, seed: u64, index: u64) -> Result<Decomposition> {
    let mut rng = stream_rng(seed, index);
    let d = rng.random_range(params.d_min..=params.d_max.max(params.d_min));
    random_decomposition_rng(params.n, params.k, d, params.mode, &mut rng)
}

/// Re-weights the atoms of `dec` multiplicatively, rebuilding η₀.
fn perturb_weights(dec: &Decomposition, scale: f64, mode: OrientationMode, rng: &mut ChaCha8Rng) -> Option<Decomposition> {
    let planes: Vec<OrientedPlane> = dec.atoms.iter().map(|a| a.plane.clone()).collect();
    let weights: Vec<f64> = dec
        .atoms
        .iter()
        .map(|a| a.weight * (scale * rng.sample::<f64, _>(rand_distr::StandardNormal)).exp())
        .collect();
    assemble(&planes, &weights, mode)
}

/// First decomposition (in sample order) whose gap is below
/// [`COUNTEREXAMPLE_THRESHOLD`], followed by a weight-perturbation descent
/// from the best samples when plain sampling finds nothing.
pub fn search_counterexample(
    psi: &GeometricIntegrand,
    c: f64,
    budget: usize,
    params: &SamplerParams,
    seed: u64,
) -> Result<Option<(Decomposition, f64)>> {
    let out = search_impl(psi, c, budget, params, seed)?;
    Ok(out.found.then_some(out.best))
}

struct SearchOutcome {
    best: (Decomposition, f64),
    found: bool,
    evaluated: usize,
    mean_gap: f64,
    negative: usize,
    best_index: usize,
}

fn search_impl(
    psi: &GeometricIntegrand,
    c: f64,
    budget: usize,
    params: &SamplerParams,
    seed: u64,
) -> Result<SearchOutcome> {
    if budget == 0 {
        return Err(Error::Invalid("budget must be at least 1".into()));
    }
    let scored: Vec<(u64, Decomposition, f64)> = (0..budget as u64)
        .into_par_iter()
        .map(|i| {
            let dec = sample_for_index(params, seed, i)?;
            let gap = check_instance(psi, c, &dec, params.mode)?;
            Ok((i, dec, gap))
        })
        .collect::<Result<_>>()?;
    let mean_gap = scored.iter().map(|s| s.2).sum::<f64>() / budget as f64;
    let negative = scored.iter().filter(|s| s.2 < COUNTEREXAMPLE_THRESHOLD).count();
    let mut evaluated = budget;
    if let Some((i, dec, gap)) = scored.iter().find(|(_, _, g)| *g < COUNTEREXAMPLE_THRESHOLD) {
        return Ok(SearchOutcome {
            best: (dec.clone(), *gap),
            found: true,
            evaluated,
            mean_gap,
            negative,
            best_index: *i as usize,
        });
    }

    let mut ranked: Vec<&(u64, Decomposition, f64)> = scored.iter().collect();
    ranked.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)));
    let overall = ranked[0];
    let mut overall = ((overall.1.clone(), overall.2), overall.0 as usize);
    let starts = ranked.len().min(8);
    for (slot, (idx, start, start_gap)) in ranked.into_iter().take(starts).enumerate() {
        let mut rng = stream_rng(seed, budget as u64 + slot as u64);
        let mut best = (start.clone(), *start_gap);
        for step in 0..200 {
            let scale = 0.2 / (1.0 + step as f64 / 50.0);
            let Some(cand) = perturb_weights(&best.0, scale, params.mode, &mut rng) else {
                continue;
            };
            evaluated += 1;
            let gap = check_instance(psi, c, &cand, params.mode)?;
            if gap < best.1 {
                best = (cand, gap);
                if gap < COUNTEREXAMPLE_THRESHOLD {
                    return Ok(SearchOutcome { best, found: true, evaluated, mean_gap, negative, best_index: *idx as usize });
                }
            }
        }
        if best.1 < overall.0 .1 {
            overall = (best, *idx as usize);
        }
    }
    Ok(SearchOutcome { best: overall.0, found: false, evaluated, mean_gap, negative, best_index: overall.1 })
}

/// [`search_counterexample`] wrapped in a report. Without a hit, the report
/// carries the smallest gap seen and the sampling caveat.
pub fn search_report(
    psi: &GeometricIntegrand,
    c: f64,
    budget: usize,
    params: &SamplerParams,
    seed: u64,
) -> Result<UpcReport> {
    let out = search_impl(psi, c, budget, params, seed)?;
    Ok(UpcReport {
        property: "uniform_polyconvexity",
        integrand: psi.name().to_string(),
        n: params.n,
        k: params.k,
        orientation_mode: params.mode,
        mode: if out.found { ReportMode::Counterexample } else { ReportMode::SampledCertificate },
        c,
        seed: Some(seed),
        worst_gap: out.best.1,
        witness: out.found.then_some(out.best.0),
        sample_stats: SampleStats {
            samples: out.evaluated,
            n_dirs: 0,
            n_atoms: 0,
            negative: out.negative,
            unbounded: 0,
            max_support: 0,
            mean_gap: out.mean_gap,
            worst_index: out.best_index,
        },
        caveat: (!out.found).then_some(SEARCH_CAVEAT),
    })
}

pub const SEARCH_CAVEAT: &str = "random search found no violation; this is evidence, not a proof";

#[derive(Clone, Debug)]
pub struct LpDecompositionResult {
    /// `min Σ mᵢG(ηᵢ) − G(η₀)`; for unbounded programs, the gap of the
    /// finite witness built from the ray.
    pub lp_gap: f64,
    pub weights: Vec<f64>,
    pub unbounded: bool,
    pub support: usize,
    pub witness: Option<Decomposition>,
}

/// Minimizes the Jensen gap over nonnegative combinations of `atom_set`
/// that reproduce `eta0`.
pub fn lp_min_decomposition(
    psi: &GeometricIntegrand,
    c: f64,
    eta0: &OrientedPlane,
    atom_set: &[OrientedPlane],
    mode: OrientationMode,
) -> Result<LpDecompositionResult> {
    let (n, k) = (eta0.dim(), eta0.grade());
    if !atom_set.iter().any(|a| a.kvector().distance(eta0.kvector()) < 1e-12) {
        return Err(Error::Invalid("atom set must contain η₀".into()));
    }
    if mode == OrientationMode::Positive {
        for (i, a) in atom_set.iter().enumerate() {
            let inner = a.inner(eta0)?;
            if inner <= 0.0 {
                return Err(Error::Orientation { index: i, inner });
            }
        }
    }
    let m = binomial(n, k);
    let cols = atom_set.len();
    let a = nalgebra::DMatrix::from_fn(m, cols, |r, j| atom_set[j].kvector().coeffs()[r]);
    let g = |p: &OrientedPlane| -> Result<f64> { Ok(psi.eval(p.kvector())? - c * p.kvector().norm()) };
    let cost: Vec<f64> = atom_set.iter().map(g).collect::<Result<_>>()?;
    let g0 = g(eta0)?;
    let witness_from = |weights: &[f64]| -> Option<Decomposition> {
        let atoms: Vec<Atom> = weights
            .iter()
            .zip(atom_set)
            .filter(|(w, _)| **w > 1e-13)
            .map(|(w, p)| Atom { weight: *w, plane: p.clone() })
            .collect();
        Decomposition::new(eta0.clone(), atoms).ok()
    };

    match lp::minimize(&a, eta0.kvector().coeffs(), &cost, lp::DEFAULT_MAX_ITERATIONS)? {
        LpOutcome::Optimal { x, objective, .. } => {
            let lp_gap = objective - g0;
            let support = x.iter().filter(|&&w| w > 1e-13).count();
            let witness = if lp_gap < COUNTEREXAMPLE_THRESHOLD { witness_from(&x) } else { None };
            Ok(LpDecompositionResult { lp_gap, weights: x, unbounded: false, support, witness })
        }
        LpOutcome::Unbounded { x, ray } => {
            let ray_mass: f64 = ray.iter().sum();
            let t = if ray_mass > 0.0 { 1.0 / ray_mass } else { 1.0 };
            let weights: Vec<f64> = x.iter().zip(&ray).map(|(xi, ri)| xi + t * ri).collect();
            let lp_gap = weights.iter().zip(&cost).map(|(w, c)| w * c).sum::<f64>() - g0;
            let support = weights.iter().filter(|&&w| w > 1e-13).count();
            let witness = witness_from(&weights);
            Ok(LpDecompositionResult { lp_gap, weights, unbounded: true, support, witness })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportMode {
    VerifiedInstance,
    Counterexample,
    SampledCertificate,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SampleStats {
    pub samples: usize,
    pub n_dirs: usize,
    pub n_atoms: usize,
    pub negative: usize,
    pub unbounded: usize,
    pub max_support: usize,
    pub mean_gap: f64,
    pub worst_index: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct UpcReport {
    pub property: &'static str,
    pub integrand: String,
    pub n: usize,
    pub k: usize,
    pub orientation_mode: OrientationMode,
    pub mode: ReportMode,
    pub c: f64,
    pub seed: Option<u64>,
    pub worst_gap: f64,
    pub witness: Option<Decomposition>,
    pub sample_stats: SampleStats,
    pub caveat: Option<&'static str>,
}

pub const SAMPLED_CAVEAT: &str = "sampled certificate: finitely many reference planes and atoms were tested; \
this is evidence, not a proof, and no density bound relates it to the constant c";

/// Sampled LP certificate over `n_dirs` random reference planes, each with
/// `n_atoms` random atoms plus the reference plane itself.
#[allow(clippy::too_many_arguments)]
pub fn certify_sampled(
    psi: &GeometricIntegrand,
    c: f64,
    n_dirs: usize,
    n_atoms: usize,
    seed: u64,
    mode: OrientationMode,
) -> Result<UpcReport> {
    if n_dirs == 0 || n_atoms == 0 {
        return Err(Error::Invalid("n_dirs and n_atoms must be positive".into()));
    }
    let (n, k) = (psi.dim(), psi.grade());
    let results: Vec<LpDecompositionResult> = (0..n_dirs as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i);
            let eta0 = random_plane(n, k, &mut rng);
            let mut atoms = Vec::with_capacity(n_atoms + 1);
            atoms.push(eta0.clone());
            while atoms.len() < n_atoms + 1 {
                let mut p = random_plane(n, k, &mut rng);
                if mode == OrientationMode::Positive {
                    let inner = p.inner(&eta0)?;
                    if inner.abs() < 1e-6 {
                        continue;
                    }
                    if inner < 0.0 {
                        p = p.reversed();
                    }
                }
                atoms.push(p);
            }
            lp_min_decomposition(psi, c, &eta0, &atoms, mode)
        })
        .collect::<Result<_>>()?;

    // minimum gap, ties to the lowest shard
    let (worst_index, worst) = results
        .iter()
        .enumerate()
        .fold((0usize, f64::INFINITY), |acc, (i, r)| if r.lp_gap < acc.1 { (i, r.lp_gap) } else { acc });
    let stats = SampleStats {
        samples: n_dirs,
        n_dirs,
        n_atoms,
        negative: results.iter().filter(|r| r.lp_gap < COUNTEREXAMPLE_THRESHOLD).count(),
        unbounded: results.iter().filter(|r| r.unbounded).count(),
        max_support: results.iter().map(|r| r.support).max().unwrap_or(0),
        mean_gap: results.iter().map(|r| r.lp_gap).sum::<f64>() / n_dirs as f64,
        worst_index,
    };
    let counterexample = worst < COUNTEREXAMPLE_THRESHOLD;
    Ok(UpcReport {
        property: "uniform_polyconvexity",
        integrand: psi.name().to_string(),
        n,
        k,
        orientation_mode: mode,
        mode: if counterexample { ReportMode::Counterexample } else { ReportMode::SampledCertificate },
        c,
        seed: Some(seed),
        worst_gap: worst,
        witness: if counterexample { results[worst_index].witness.clone() } else { None },
        sample_stats: stats,
        caveat: (!counterexample).then_some(SAMPLED_CAVEAT),
    })
}

/// Largest `c` in `[lo, hi]` at which [`certify_sampled`] still passes,
/// located by bisection. Heuristic: it inherits the sampling caveat.
#[allow(clippy::too_many_arguments)]
pub fn bisect_upc_constant(
    psi: &GeometricIntegrand,
    mut lo: f64,
    mut hi: f64,
    iterations: usize,
    n_dirs: usize,
    n_atoms: usize,
    seed: u64,
    mode: OrientationMode,
) -> Result<f64> {
    let passes = |c: f64| -> Result<bool> {
        Ok(certify_sampled(psi, c, n_dirs, n_atoms, seed, mode)?.mode == ReportMode::SampledCertificate)
    };
    if !passes(lo)? {
        return Err(Error::Invalid(format!("certificate already fails at the lower bracket c = {lo}")));
    }
    if passes(hi)? {
        return Ok(hi);
    }
    for _ in 0..iterations {
        let mid = 0.5 * (lo + hi);
        if passes(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Report for a single instance check.
pub fn verify_report(psi: &GeometricIntegrand, c: f64, dec: &Decomposition, mode: OrientationMode) -> Result<UpcReport> {
    let gap = check_instance(psi, c, dec, mode)?;
    let counterexample = gap < COUNTEREXAMPLE_THRESHOLD;
    Ok(UpcReport {
        property: "uniform_polyconvexity",
        integrand: psi.name().to_string(),
        n: dec.dim(),
        k: dec.grade(),
        orientation_mode: mode,
        mode: if counterexample { ReportMode::Counterexample } else { ReportMode::VerifiedInstance },
        c,
        seed: None,
        worst_gap: gap,
        witness: counterexample.then(|| dec.clone()),
        sample_stats: SampleStats { samples: 1, ..Default::default() },
        caveat: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::SQRT_2;

    fn sqrt2_decomposition() -> Decomposition {
        let eta0 = OrientedPlane::coordinate(2, &[1]).unwrap();
        let p = OrientedPlane::from_kvector(&KVector::vector(&[1.0, 1.0])).unwrap();
        let q = OrientedPlane::from_kvector(&KVector::vector(&[1.0, -1.0])).unwrap();
        let w = 1.0 / SQRT_2;
        Decomposition::new(eta0, vec![Atom { weight: w, plane: p }, Atom { weight: w, plane: q }]).unwrap()
    }

    #[test]
    fn sqrt2_gap_at_point_nine() {
        let psi = GeometricIntegrand::area(2, 1);
        let dec = sqrt2_decomposition();
        let gap = check_instance(&psi, 0.9, &dec, OrientationMode::Positive).unwrap();
        assert!((gap - 0.1 * (SQRT_2 - 1.0)).abs() < 1e-12, "{gap}");
        assert!((check_instance(&psi, 1.0, &dec, OrientationMode::Any).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn degenerate_decomposition_has_zero_gap() {
        let eta0 = OrientedPlane::coordinate(3, &[1, 2]).unwrap();
        let dec = Decomposition::new(eta0.clone(), vec![Atom { weight: 1.0, plane: eta0 }]).unwrap();
        let psi = GeometricIntegrand::custom(3, 2, "wobbly", |xi| 2.0 + xi.coeffs()[0].sin());
        for c in [0.0, 0.5, 3.0] {
            assert_eq!(check_instance(&psi, c, &dec, OrientationMode::Positive).unwrap(), 0.0);
        }
    }

    #[test]
    fn decomposition_validation() {
        let eta0 = OrientedPlane::coordinate(2, &[1]).unwrap();
        let e2 = OrientedPlane::coordinate(2, &[2]).unwrap();
        assert!(Decomposition::new(eta0.clone(), vec![]).is_err());
        assert!(Decomposition::new(eta0.clone(), vec![Atom { weight: 1.0, plane: e2 }]).is_err());
        assert!(Decomposition::new(eta0.clone(), vec![Atom { weight: -1.0, plane: eta0.reversed() }]).is_err());
    }

    #[test]
    fn positive_mode_rejects_misoriented_atoms() {
        // e₁ = 2·e₁ + 1·(−e₁)
        let eta0 = OrientedPlane::coordinate(2, &[1]).unwrap();
        let dec = Decomposition::new(
            eta0.clone(),
            vec![Atom { weight: 2.0, plane: eta0.clone() }, Atom { weight: 1.0, plane: eta0.reversed() }],
        )
        .unwrap();
        let psi = GeometricIntegrand::area(2, 1);
        assert!(matches!(check_instance(&psi, 1.0, &dec, OrientationMode::Positive), Err(Error::Orientation { .. })));
        assert!(check_instance(&psi, 1.0, &dec, OrientationMode::Any).is_ok());
    }

    #[test]
    fn random_decompositions_are_valid() {
        for (n, k) in [(2, 1), (3, 1), (3, 2), (4, 2), (5, 2), (5, 3), (6, 3)] {
            for seed in 0..5 {
                let dec = random_decomposition(n, k, 3, seed, OrientationMode::Positive).unwrap();
                assert_eq!(dec.atoms().len(), 3);
                assert!(dec.is_positively_oriented());
                assert!(dec.mass_excess() >= -1e-12);
                assert!(dec.eta0().kvector().is_simple(DEFAULT_RANK_TOL).unwrap());
            }
        }
        assert!(random_decomposition(3, 1, 1, 0, OrientationMode::Any).is_err());
    }

    #[test]
    fn random_decomposition_is_deterministic() {
        let a = random_decomposition(4, 2, 3, 11, OrientationMode::Any).unwrap();
        let b = random_decomposition(4, 2, 3, 11, OrientationMode::Any).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn search_finds_area_violation_above_one() {
        let psi = GeometricIntegrand::area(2, 1);
        let params = SamplerParams::new(2, 1, OrientationMode::Positive);
        let (dec, gap) = search_counterexample(&psi, 1.1, 10_000, &params, 7).unwrap().unwrap();
        assert!(gap < COUNTEREXAMPLE_THRESHOLD);
        let again = check_instance(&psi, 1.1, &dec, OrientationMode::Positive).unwrap();
        assert!((again - gap).abs() < 1e-12);
        assert!(search_counterexample(&psi, 1.0, 500, &params, 7).unwrap().is_none());
        assert!(search_counterexample(&psi, 0.5, 500, &params, 7).unwrap().is_none());
    }

    #[test]
    fn lp_trivial_cases() {
        let psi = GeometricIntegrand::area(3, 1);
        let eta0 = OrientedPlane::coordinate(3, &[1]).unwrap();
        let only = lp_min_decomposition(&psi, 1.3, &eta0, std::slice::from_ref(&eta0), OrientationMode::Positive).unwrap();
        assert_eq!(only.lp_gap, 0.0);
        let dec = sqrt2_decomposition();
        let atoms: Vec<OrientedPlane> =
            std::iter::once(dec.eta0().clone()).chain(dec.atoms().iter().map(|a| a.plane.clone())).collect();
        let psi2 = GeometricIntegrand::area(2, 1);
        let r = lp_min_decomposition(&psi2, 1.0, dec.eta0(), &atoms, OrientationMode::Positive).unwrap();
        assert!(r.lp_gap.abs() < 1e-12);
        let r = lp_min_decomposition(&psi2, 1.1, dec.eta0(), &atoms, OrientationMode::Positive).unwrap();
        assert!(r.lp_gap < COUNTEREXAMPLE_THRESHOLD);
        let w = r.witness.unwrap();
        let regap = check_instance(&psi2, 1.1, &w, OrientationMode::Positive).unwrap();
        assert!((regap - r.lp_gap).abs() < 1e-9);
        assert!(lp_min_decomposition(&psi2, 1.0, dec.eta0(), &atoms[1..], OrientationMode::Positive).is_err());
    }

    #[test]
    fn affinity_of_area_gap() {
        let psi = GeometricIntegrand::area(2, 1);
        let dec = sqrt2_decomposition();
        let (a, b) = gap_affinity_check(&psi, &dec, &[0.0, 0.3, 0.7, 1.0]).unwrap();
        assert!((a - (SQRT_2 - 1.0)).abs() < 1e-12 && (b - (SQRT_2 - 1.0)).abs() < 1e-12);
        assert!(gap_affinity_check(&psi, &dec, &[1.0]).is_err());
    }

    #[test]
    fn decomposition_json_round_trip() {
        let dec = random_decomposition(4, 2, 3, 5, OrientationMode::Positive).unwrap();
        let text = serde_json::to_string(&dec).unwrap();
        let back: Decomposition = serde_json::from_str(&text).unwrap();
        assert_eq!(back.atoms().len(), 3);
        assert!(back.eta0().kvector().distance(dec.eta0().kvector()) < 1e-12);
    }
}

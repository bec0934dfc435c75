//! Cross-checks between the three formulations of the same inequality:
//! Jensen gaps of decompositions, energy gaps of polyhedral test pairs and
//! energy gaps of Q-valued graph test pairs.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::currents::{make_test_pair_k1, verify_aue};
use crate::error::{Error, Result};
use crate::integrands::{ClassicalIntegrand, GeometricIntegrand, QIntegrand};
use crate::polyconvexity::{check_instance, random_decomposition_rng, Decomposition, OrientationMode, COUNTEREXAMPLE_THRESHOLD};
use crate::qvalued::{make_graph_test_pair, random_multigraph, random_q_function, verify_uqc};
use crate::sampling::stream_rng;

/// Largest tolerated disagreement between a Jensen gap and the energy gap of
/// its induced polyhedral pair.
pub const GAP_AGREEMENT_TOL: f64 = 1e-10;

#[derive(Clone, Debug, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub upc_gap: f64,
    pub aue_gap: Option<f64>,
    pub uqc_gap: Option<f64>,
    pub uqc_q: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GapSummary {
    pub checked: usize,
    pub min_gap: Option<f64>,
    pub negative: usize,
}

impl GapSummary {
    fn from_gaps(gaps: impl Iterator<Item = f64>) -> Self {
        let gaps: Vec<f64> = gaps.collect();
        Self {
            checked: gaps.len(),
            min_gap: gaps.iter().copied().reduce(f64::min),
            negative: gaps.iter().filter(|&&g| g < COUNTEREXAMPLE_THRESHOLD).count(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Every check passed.
    Holds,
    /// The Jensen inequality fails, and the other formulations agree.
    Counterexample,
    /// The formulations disagree, which the equivalences rule out.
    Inconsistent,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub property: &'static str,
    pub integrand: String,
    pub n: usize,
    pub k: usize,
    pub c: f64,
    pub seed: u64,
    pub trials: usize,
    pub upc: GapSummary,
    pub polyhedral: GapSummary,
    pub q_graph: GapSummary,
    pub sign_mismatches: usize,
    pub defects: Vec<String>,
    pub verdict: Verdict,
    pub witness: Option<Decomposition>,
    pub notes: Vec<String>,
    pub records: Vec<TrialRecord>,
}

/// Runs `trials` rounds of: a Jensen gap on a random decomposition; for
/// `k = 1`, the energy gap of the induced polyhedral pair (which must equal
/// it); for `k < n`, the gap of a random Q-graph test pair over `[0,1]^k`.
/// When no Jensen gap is negative, a negative polyhedral or Q-graph gap is
/// reported as a defect.
pub fn equivalence_suite(psi: &GeometricIntegrand, c: f64, seed: u64, trials: usize) -> Result<SuiteReport> {
    if trials == 0 {
        return Err(Error::Invalid("trials must be positive".into()));
    }
    let (n, k) = (psi.dim(), psi.grade());
    if n < 2 {
        return Err(Error::Invalid("the suite needs n ≥ 2".into()));
    }
    let run_q = k < n;
    let fq = |q: usize| QIntegrand::new(q, ClassicalIntegrand::new(psi.clone()));

    let results: Vec<(TrialRecord, Decomposition)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(seed, t as u64);
            let d = rng.random_range(2..=4);
            let dec = random_decomposition_rng(n, k, d, OrientationMode::Any, &mut rng)?;
            let upc_gap = check_instance(psi, c, &dec, OrientationMode::Any)?;
            let aue_gap = if k == 1 {
                let (s, dd) = make_test_pair_k1(&dec)?;
                Some(verify_aue(psi, c, &s, &dd)?)
            } else {
                None
            };
            let (uqc_gap, uqc_q) = if run_q {
                let q = 1 + t % 3;
                let sub_seed: u64 = rng.random();
                let h = random_multigraph(k, n - k, q, sub_seed)?;
                let f = random_q_function(&h, 2, 1.0, sub_seed)?;
                let pair = make_graph_test_pair(&f, &h, false)?;
                (Some(verify_uqc(&fq(q)?, c, &pair)?), Some(q))
            } else {
                (None, None)
            };
            Ok((TrialRecord { trial: t, upc_gap, aue_gap, uqc_gap, uqc_q }, dec))
        })
        .collect::<Result<_>>()?;

    let upc = GapSummary::from_gaps(results.iter().map(|(r, _)| r.upc_gap));
    let polyhedral = GapSummary::from_gaps(results.iter().filter_map(|(r, _)| r.aue_gap));
    let q_graph = GapSummary::from_gaps(results.iter().filter_map(|(r, _)| r.uqc_gap));

    let mut defects = Vec::new();
    let mut sign_mismatches = 0;
    for (r, _) in &results {
        if let Some(a) = r.aue_gap {
            let same_sign = (r.upc_gap < COUNTEREXAMPLE_THRESHOLD) == (a < COUNTEREXAMPLE_THRESHOLD);
            if !same_sign {
                sign_mismatches += 1;
            }
            if (a - r.upc_gap).abs() > GAP_AGREEMENT_TOL || !same_sign {
                defects.push(format!(
                    "trial {}: Jensen gap {:e} and polyhedral gap {:e} disagree",
                    r.trial, r.upc_gap, a
                ));
            }
        }
    }
    if upc.negative == 0 {
        for (r, _) in &results {
            if let Some(g) = r.uqc_gap.filter(|&g| g < COUNTEREXAMPLE_THRESHOLD) {
                defects.push(format!("trial {}: no Jensen violation found, yet the Q-graph gap is {g:e}", r.trial));
            }
            if let Some(g) = r.aue_gap.filter(|&g| g < COUNTEREXAMPLE_THRESHOLD) {
                defects.push(format!("trial {}: no Jensen violation found, yet the polyhedral gap is {g:e}", r.trial));
            }
        }
    }

    let witness = results
        .iter()
        .filter(|(r, _)| r.upc_gap < COUNTEREXAMPLE_THRESHOLD)
        .min_by(|a, b| a.0.upc_gap.total_cmp(&b.0.upc_gap).then(a.0.trial.cmp(&b.0.trial)))
        .map(|(_, d)| d.clone());
    let verdict = if !defects.is_empty() {
        Verdict::Inconsistent
    } else if upc.negative > 0 {
        Verdict::Counterexample
    } else {
        Verdict::Holds
    };
    let mut notes = Vec::new();
    if k != 1 {
        notes.push("polyhedral test pairs are built only for k = 1; that column is empty".to_string());
    }
    if !run_q {
        notes.push("k = n leaves no target dimension for Q-graphs; that column is empty".to_string());
    }
    Ok(SuiteReport {
        property: "equivalence_suite",
        integrand: psi.name().to_string(),
        n,
        k,
        c,
        seed,
        trials,
        upc,
        polyhedral,
        q_graph,
        sign_mismatches,
        defects,
        verdict,
        witness,
        notes,
        records: results.into_iter().map(|(r, _)| r).collect(),
    })
}

//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
//! Runs without the libtest harness so the lines always reach the terminal.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use aniso::currents::{make_test_pair_k1, verify_aue};
use aniso::exterior::{binomial, wedge_cols, KVector, MultiIndex};
use aniso::integrands::{ClassicalIntegrand, GeometricIntegrand, QIntegrand};
use aniso::polyconvexity::{
    certify_sampled, check_instance, gap_affinity_check, lp_min_decomposition, random_decomposition,
    search_counterexample, Decomposition, OrientationMode, ReportMode, SamplerParams,
};
use aniso::qvalued::{metric_g, random_multigraph, random_q_function, sample_uqc, QPoint};
use aniso::rational_approx::{approximate_decomposition, caratheodory_reduce};
use aniso::sampling::{random_plane, stream_rng};
use aniso::Rational;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn random_kvector<R: Rng>(n: usize, k: usize, rng: &mut R) -> KVector<f64> {
    let m = binomial(n, k);
    let coeffs = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
    KVector::new(n, k, coeffs).unwrap()
}

fn rel_close(a: &KVector<f64>, b: &KVector<f64>, tol: f64) -> bool {
    a.distance(b) <= tol * a.norm().max(b.norm()).max(1.0)
}

fn criterion_1() -> Check {
    let mut rng = stream_rng(1, 0);
    let mut checks = 0;
    for n in 1..=6 {
        for _ in 0..20 {
            for p in 1..=n {
                for q in 1..=n - p {
                    let a = random_kvector(n, p, &mut rng);
                    let b = random_kvector(n, q, &mut rng);
                    let ab = a.wedge(&b).map_err(err)?;
                    let ba = b.wedge(&a).map_err(err)?;
                    let sign = if p * q % 2 == 0 { 1.0 } else { -1.0 };
                    ensure(rel_close(&ab, &ba.scale(&sign), 1e-12), || format!("anticommutativity n={n} p={p} q={q}"))?;
                    for r in 1..=n - p - q {
                        let c = random_kvector(n, r, &mut rng);
                        let left = ab.wedge(&c).map_err(err)?;
                        let right = a.wedge(&b.wedge(&c).map_err(err)?).map_err(err)?;
                        ensure(rel_close(&left, &right, 1e-12), || format!("associativity n={n} ({p},{q},{r})"))?;
                        checks += 1;
                    }
                    checks += 1;
                }
            }
            for k in 1..n {
                let xi = random_kvector(n, k, &mut rng);
                let sign = if k * (n - k) % 2 == 0 { 1.0 } else { -1.0 };
                ensure(rel_close(&xi.hodge_star().hodge_star(), &xi.scale(&sign), 1e-12), || {
                    format!("double star n={n} k={k}")
                })?;
                // random blades factor and rewedge
                let w = DMatrix::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0));
                let blade = wedge_cols(&w);
                if blade.norm() > 1e-3 {
                    ensure(blade.is_simple(1e-9).map_err(err)?, || format!("blade not simple n={n} k={k}"))?;
                    let f = blade.factor_simple(1e-9).map_err(err)?;
                    let back = wedge_cols(&f);
                    ensure(back.distance(&blade) < 1e-10 * blade.norm(), || {
                        format!("round trip n={n} k={k}: {:e}", back.distance(&blade) / blade.norm())
                    })?;
                    checks += 1;
                }
                checks += 1;
            }
        }
        if n >= 4 {
            let e = |a: usize, b: usize| KVector::<f64>::blade(n, &[a, b]).unwrap();
            let split = e(1, 2).try_add(&e(3, 4)).map_err(err)?;
            let shared = e(1, 2).try_add(&e(1, 3)).map_err(err)?;
            ensure(!split.is_simple(1e-9).map_err(err)?, || format!("e1∧e2+e3∧e4 called simple (n={n})"))?;
            ensure(shared.is_simple(1e-9).map_err(err)?, || format!("e1∧e2+e1∧e3 called non-simple (n={n})"))?;
            ensure(!split.to_rational().is_simple_exact().map_err(err)?, || "exact split".into())?;
            ensure(shared.to_rational().is_simple_exact().map_err(err)?, || "exact shared".into())?;
            checks += 4;
        }
    }
    Ok(format!("{checks} identities over n ≤ 6"))
}

fn brute_metric(a: &QPoint, b: &QPoint) -> f64 {
    let q = a.q();
    let mut perm: Vec<usize> = (0..q).collect();
    let mut best = f64::INFINITY;
    // Heap's algorithm
    let mut c = vec![0usize; q];
    let mut eval = |p: &[usize]| {
        let s: f64 = (0..q).map(|i| (&a.points()[i] - &b.points()[p[i]]).norm_squared()).sum();
        best = best.min(s);
    };
    eval(&perm);
    let mut i = 0;
    while i < q {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            eval(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best.sqrt()
}

fn criterion_2() -> Check {
    let mut worst: f64 = 0.0;
    for q in 2..=6 {
        let mut rng = stream_rng(2, q as u64);
        for t in 0..1000 {
            let dim = 1 + t % 3;
            let pts = |rng: &mut rand_chacha::ChaCha8Rng| {
                QPoint::new((0..q).map(|_| DVector::from_fn(dim, |_, _| rng.random_range(-2.0..2.0))).collect()).unwrap()
            };
            let a = pts(&mut rng);
            let b = pts(&mut rng);
            let g = metric_g(&a, &b).map_err(err)?;
            let diff = (g - brute_metric(&a, &b)).abs();
            worst = worst.max(diff);
            ensure(diff <= 1e-12, || format!("Q={q} trial {t}: differs by {diff:e}"))?;
        }
    }
    Ok(format!("5000 instances, max |Δ| = {worst:e}"))
}

fn criterion_3() -> Check {
    let mut worst: f64 = 0.0;
    for t in 0..200u64 {
        let mut rng = stream_rng(3, t);
        let k = rng.random_range(1..=3);
        let m = rng.random_range(1..=3);
        let q = rng.random_range(1..=3);
        let level = rng.random_range(1..=2);
        let seed: u64 = rng.random();
        let h = random_multigraph(k, m, q, seed).map_err(err)?;
        let f = random_q_function(&h, level, 1.0, seed).map_err(err)?;
        let graph = f.graph_current().map_err(err)?;
        let mass_a = f.area_formula_mass();
        let mass_g = graph.mass();
        let rel = |x: f64, y: f64| (x - y).abs() / x.abs().max(y.abs()).max(1e-300);
        ensure(rel(mass_a, mass_g) <= 1e-9, || format!("trial {t}: mass {mass_a} vs {mass_g}"))?;
        worst = worst.max(rel(mass_a, mass_g));
        let n = k + m;
        let dir = KVector::basis(n, &MultiIndex::unrank(t as usize % binomial(n, k), n, k));
        for psi in [GeometricIntegrand::area(n, k), GeometricIntegrand::perturbed_area(dir, 0.3).map_err(err)?] {
            let fq = QIntegrand::new(q, ClassicalIntegrand::new(psi.clone())).map_err(err)?;
            let e_q = f.q_energy(&fq).map_err(err)?;
            let e_g = graph.energy(&psi).map_err(err)?;
            ensure(rel(e_q, e_g) <= 1e-9, || format!("trial {t} {}: energy {e_q} vs {e_g}", psi.name()))?;
            worst = worst.max(rel(e_q, e_g));
        }
    }
    Ok(format!("200 Q-functions, max relative Δ = {worst:e}"))
}

/// The 1000 decompositions shared by criteria 4, 5 and 9.
fn ground_truth_decompositions() -> Vec<(Decomposition, f64)> {
    let shapes = [(2, 1), (3, 1), (4, 1), (5, 1), (6, 1), (3, 2), (4, 2), (5, 2), (6, 2), (4, 3), (5, 3), (6, 3)];
    (0..1000u64)
        .map(|i| {
            let (n, k) = shapes[i as usize % shapes.len()];
            let mut rng = stream_rng(4, i);
            let d = rng.random_range(2..=4);
            let mode = if i % 2 == 0 { OrientationMode::Any } else { OrientationMode::Positive };
            let c = rng.random_range(0.0..2.0);
            (random_decomposition(n, k, d, 4_000 + i, mode).unwrap(), c)
        })
        .collect()
}

fn criterion_4(decs: &[(Decomposition, f64)]) -> Check {
    let mut worst: f64 = 0.0;
    for (i, (dec, c)) in decs.iter().enumerate() {
        let psi = GeometricIntegrand::area(dec.dim(), dec.grade());
        let gap = check_instance(&psi, *c, dec, OrientationMode::Any).map_err(err)?;
        let expected = (1.0 - c) * (dec.weight_sum() - 1.0);
        worst = worst.max((gap - expected).abs());
        ensure((gap - expected).abs() <= 1e-12, || format!("decomposition {i}: gap {gap} vs {expected}"))?;
    }
    let shapes = [(2, 1), (3, 1), (3, 2), (4, 2)];
    let mut certified = Vec::new();
    for (n, k) in shapes {
        let psi = GeometricIntegrand::area(n, k);
        let rep = certify_sampled(&psi, 1.0, 50, 200, 4, OrientationMode::Any).map_err(err)?;
        ensure(rep.mode == ReportMode::SampledCertificate && rep.worst_gap >= -1e-9, || {
            format!("certificate fails at c=1 for ({n},{k}): worst gap {:e}", rep.worst_gap)
        })?;
        certified.push(format!("{:.1e}", rep.worst_gap));
        let params = SamplerParams::new(n, k, OrientationMode::Any);
        let hit = search_counterexample(&psi, 1.1, 10_000, &params, 4).map_err(err)?;
        ensure(hit.is_some_and(|(_, g)| g < -1e-9), || format!("no witness at c=1.1 for ({n},{k})"))?;
    }
    Ok(format!(
        "identity max |Δ| = {worst:e}; certify worst gaps {}; witnesses found for all 4 shapes",
        certified.join(", ")
    ))
}

fn criterion_5(decs: &[(Decomposition, f64)]) -> Check {
    let mut count = 0;
    let mut negatives = 0;
    let mut worst: f64 = 0.0;
    for (i, (dec, c)) in decs.iter().enumerate().filter(|(_, (d, _))| d.grade() == 1) {
        let psi = GeometricIntegrand::area(dec.dim(), 1);
        let upc = check_instance(&psi, *c, dec, OrientationMode::Any).map_err(err)?;
        let (s, d) = make_test_pair_k1(dec).map_err(err)?;
        let aue = verify_aue(&psi, *c, &s, &d).map_err(err)?;
        worst = worst.max((upc - aue).abs());
        ensure((upc - aue).abs() <= 1e-10, || format!("decomposition {i}: {upc} vs {aue}"))?;
        ensure((upc < -1e-9) == (aue < -1e-9), || format!("decomposition {i}: sign mismatch"))?;
        negatives += usize::from(upc < -1e-9);
        count += 1;
    }
    Ok(format!("{count} k=1 pairs ({negatives} counterexamples), max |Δ| = {worst:e}"))
}

fn criterion_6() -> Check {
    let eps = 1e-2;
    let mut max_extra = 0;
    for i in 0..100u64 {
        let mut rng = stream_rng(6, i);
        let n = rng.random_range(2..=5);
        let k = rng.random_range(1..n);
        let d = rng.random_range(2..=4);
        let dec = random_decomposition(n, k, d, 6_000 + i, OrientationMode::Positive).map_err(err)?;
        let rd = approximate_decomposition(&dec, eps).map_err(|e| format!("decomposition {i} ({n},{k}): {e}"))?;
        let ledger = rd.verify(&dec, eps);
        ensure(ledger.identity_exact && rd.identity_residual().is_zero(), || format!("{i}: identity not exact"))?;
        let extra = rd.n_atoms - d;
        max_extra = max_extra.max(extra);
        ensure(rd.n_atoms >= d && extra <= binomial(n, k), || format!("{i}: N − d = {extra}"))?;
        let dist = rd.eta0_tilde.unit_f64().distance(dec.eta0().kvector());
        ensure(ledger.eta0_within_half_eps && dist < eps / 2.0, || format!("{i}: |η̃₀ − η₀| = {dist}"))?;
        for (j, a) in dec.atoms().iter().enumerate() {
            let dj = rd.atoms[j].eta.unit_f64().distance(a.plane.kvector());
            let bound = eps / (2.0 * d as f64 * a.weight);
            ensure(dj < bound, || format!("{i}: atom {j} moved {dj:e} ≥ {bound:e}"))?;
        }
        ensure(ledger.atoms_within_bound, || format!("{i}: exact atom bound fails"))?;
        ensure(ledger.positively_oriented && ledger.min_inner_with_eta0 > 0.0, || format!("{i}: orientation lost"))?;
    }
    Ok(format!("100 decompositions, zero failures, max N − d = {max_extra}"))
}

fn criterion_7() -> Check {
    let mut lp_checked = 0;
    let mut worst_ratio: f64 = 0.0;
    for t in 0..60u64 {
        let mut rng = stream_rng(7, t);
        let n = rng.random_range(2..=5);
        let k = rng.random_range(1..n);
        let m = binomial(n, k);
        let eta0 = random_plane(n, k, &mut rng);
        let mut atoms = vec![eta0.clone()];
        atoms.extend((0..40).map(|_| random_plane(n, k, &mut rng)));
        let dir = KVector::basis(n, &MultiIndex::unrank(0, n, k));
        let psi = GeometricIntegrand::perturbed_area(dir, rng.random_range(-0.5..0.5)).map_err(err)?;
        let c = rng.random_range(0.0..1.5);
        let res = lp_min_decomposition(&psi, c, &eta0, &atoms, OrientationMode::Any).map_err(err)?;
        if !res.unbounded {
            ensure(res.support <= m, || format!("LP {t}: support {} > {m}", res.support))?;
            worst_ratio = worst_ratio.max(res.support as f64 / m as f64);
            lp_checked += 1;
        }
        // Carathéodory on a random positive combination of many atoms
        let vecs: Vec<Vec<f64>> = atoms.iter().map(|p| p.kvector().coeffs().to_vec()).collect();
        let w: Vec<f64> = (0..vecs.len()).map(|_| rng.random_range(0.1..1.0)).collect();
        let target: Vec<f64> = (0..m).map(|r| vecs.iter().zip(&w).map(|(v, wi)| wi * v[r]).sum()).collect();
        let red = caratheodory_reduce(&target, &vecs, &w).map_err(err)?;
        ensure(red.indices.len() <= m, || format!("reduce {t}: {} atoms > {m}", red.indices.len()))?;
        let to_q = |x: f64| <Rational as aniso::Scalar>::from_f64(x);
        let qvecs: Vec<Vec<Rational>> = vecs.iter().take(3 * m).map(|v| v.iter().map(|&x| to_q(x)).collect()).collect();
        let qw: Vec<Rational> = w.iter().take(3 * m).map(|&x| to_q(x)).collect();
        let qt: Vec<Rational> =
            (0..m).map(|r| qvecs.iter().zip(&qw).fold(to_q(0.0), |acc, (v, wi)| acc + wi.clone() * v[r].clone())).collect();
        let qred = caratheodory_reduce(&qt, &qvecs, &qw).map_err(err)?;
        ensure(qred.indices.len() <= m, || format!("exact reduce {t}: {} atoms > {m}", qred.indices.len()))?;
    }
    for (n, k) in [(3, 1), (4, 2)] {
        let rep = certify_sampled(&GeometricIntegrand::area(n, k), 1.0, 30, 100, 7, OrientationMode::Any).map_err(err)?;
        ensure(rep.sample_stats.max_support <= binomial(n, k), || format!("certify ({n},{k}) support too large"))?;
    }
    Ok(format!("{lp_checked} bounded LPs (max support/M = {worst_ratio:.2}), 120 reductions"))
}

fn criterion_8() -> Check {
    let configs = [(1, 1), (1, 2), (2, 1), (2, 2)];
    let mut total = 0;
    let mut strict = 0;
    let mut min_gap = f64::INFINITY;
    for (idx, (k, m)) in configs.into_iter().enumerate() {
        let psi = GeometricIntegrand::area(k + m, k);
        let seed = 80 + idx as u64;
        let at_one = sample_uqc(&psi, 1.0, k, 3, 2, 125, 1.0, seed).map_err(err)?;
        let at_half = sample_uqc(&psi, 0.5, k, 3, 2, 125, 1.0, seed).map_err(err)?;
        for (a, b) in at_one.iter().zip(&at_half) {
            min_gap = min_gap.min(a.gap);
            ensure(a.gap >= -1e-9, || format!("k={k} m={m} trial {}: gap {:e} at c=1", a.trial, a.gap))?;
            // area at c = 1/2: the gap is half the mass excess, zero up to rounding
            ensure(b.gap >= -1e-12, || format!("k={k} m={m} trial {}: gap {:e} at c=1/2", b.trial, b.gap))?;
            if b.mass_f > b.mass_h + 1e-6 {
                ensure(b.gap > 0.0, || format!("k={k} m={m} trial {}: gap not positive", b.trial))?;
                strict += 1;
            }
        }
        total += at_one.len();
    }
    Ok(format!("{total} pairs over Q ∈ {{1,2,3}}, min gap at c=1 {min_gap:e}, {strict} strictly positive at c=1/2"))
}

fn criterion_9(decs: &[(Decomposition, f64)]) -> Check {
    let c_list = [0.0, 0.25, 0.5, 0.9, 1.0, 1.5, 2.0];
    let mut pairs = 0;
    for (i, (dec, _)) in decs.iter().enumerate() {
        let (n, k) = (dec.dim(), dec.grade());
        let m = binomial(n, k);
        let dir = KVector::basis(n, &MultiIndex::unrank(i % m, n, k));
        let diag = DMatrix::from_fn(m, m, |r, s| if r == s { 1.0 + r as f64 * 0.5 } else { 0.0 });
        let integrands = [
            GeometricIntegrand::area(n, k),
            GeometricIntegrand::perturbed_area(dir, 0.4).map_err(err)?,
            GeometricIntegrand::ellipse_norm(n, k, diag).map_err(err)?,
        ];
        for psi in &integrands {
            gap_affinity_check(psi, dec, &c_list).map_err(|e| format!("decomposition {i} {}: {e}", psi.name()))?;
            pairs += 1;
        }
    }
    let mut monotone = 0;
    let cases: Vec<(GeometricIntegrand, f64)> = vec![
        (GeometricIntegrand::area(2, 1), 1.0),
        (GeometricIntegrand::area(3, 2), 1.0),
        (GeometricIntegrand::perturbed_area(KVector::basis(3, &MultiIndex::unrank(0, 3, 1)), 0.3).map_err(err)?, 0.6),
        (GeometricIntegrand::perturbed_area(KVector::basis(3, &MultiIndex::unrank(0, 3, 1)), 0.3).map_err(err)?, 0.95),
    ];
    for (psi, c) in &cases {
        let rep = certify_sampled(psi, *c, 50, 200, 9, OrientationMode::Any).map_err(err)?;
        if rep.mode != ReportMode::SampledCertificate {
            continue;
        }
        for factor in [0.25, 0.5, 0.9] {
            let lower = certify_sampled(psi, c * factor, 50, 200, 9, OrientationMode::Any).map_err(err)?;
            ensure(lower.mode == ReportMode::SampledCertificate, || {
                format!("{} passes at c={c} but fails at c={}", psi.name(), c * factor)
            })?;
        }
        monotone += 1;
    }
    ensure(monotone >= 2, || "too few certified cases to test monotonicity".into())?;
    Ok(format!("{pairs} affine fits; monotonicity on {monotone} certified cases"))
}

fn run_cli(args: &[&str]) -> (Vec<u8>, i32) {
    let out = Command::new(env!("CARGO_BIN_EXE_aniso")).args(args).output().expect("launch aniso");
    (out.stdout, out.status.code().unwrap_or(-1))
}

fn criterion_10() -> Check {
    let dir = std::env::temp_dir().join(format!("aniso-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(err)?;
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let (a_out, a_code) = run_cli(&["suite", "equivalence", "--seed", "42", "--out", &p("a.json")]);
    let (b_out, b_code) = run_cli(&["suite", "equivalence", "--seed", "42", "--out", &p("b.json")]);
    ensure(a_out == b_out, || "stdout differs between runs".into())?;
    let ra = std::fs::read(p("a.json")).map_err(err)?;
    let rb = std::fs::read(p("b.json")).map_err(err)?;
    ensure(ra == rb && ra == a_out, || "report files differ".into())?;
    ensure(a_code == 0 && b_code == 0, || format!("pass case exited {a_code}/{b_code}"))?;

    let (_, cx_code) = run_cli(&["upc", "search", "--c", "1.1", "--seed", "42", "--out", &p("cx.json")]);
    ensure(cx_code == 1, || format!("counterexample case exited {cx_code}"))?;
    ensure(Path::new(&p("cx.witness.json")).is_file(), || "no witness file".into())?;

    std::fs::write(p("bad.json"), "{\"n\": 2, \"k\": ").map_err(err)?;
    let (_, bad_code) = run_cli(&["upc", "verify", "--decomposition", &p("bad.json"), "--c", "1"]);
    ensure(bad_code == 2, || format!("malformed input exited {bad_code}"))?;
    let _ = std::fs::remove_dir_all(&dir);
    Ok(format!("{} identical report bytes; exit codes 0/1/2", ra.len()))
}

fn main() {
    let start = Instant::now();
    let decs = ground_truth_decompositions();
    let criteria: Vec<(&str, Box<dyn Fn() -> Check + '_>)> = vec![
        ("exterior algebra identities", Box::new(criterion_1)),
        ("Q-metric vs brute force", Box::new(criterion_2)),
        ("area formula consistency", Box::new(criterion_3)),
        ("area integrand ground truth", Box::new(|| criterion_4(&decs))),
        ("Jensen gap = polyhedral gap (k=1)", Box::new(|| criterion_5(&decs))),
        ("rational approximation bounds", Box::new(criterion_6)),
        ("Carathéodory support bound", Box::new(criterion_7)),
        ("Q-graph ellipticity of area", Box::new(criterion_8)),
        ("gap affinity and monotonicity", Box::new(|| criterion_9(&decs))),
        ("end-to-end determinism and exit codes", Box::new(criterion_10)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let res = std::panic::catch_unwind(std::panic::AssertUnwindSafe(check))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        let secs = t.elapsed().as_secs_f64();
        match res {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.1}s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed in {:.1}s", criteria.len() - failed, start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}

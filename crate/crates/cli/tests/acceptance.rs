//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use polylab::active::{active_learn_from, ActiveConfig, Algorithm, RunTrace};
use polylab::fitter::MarginModel;
use polylab::geometry::{self, VertexSet};
use polylab::models::{generate_device, DeviceProblem, StateVector};
use polylab_cli::cell::ResultRow;
use polylab_cli::config::ExperimentConfig;
use polylab_cli::problem::Kind;
use polylab_cli::sweep::{run_experiment, RESULTS_CSV};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn secs(d: Duration) -> String {
    format!("{:.1} s", d.as_secs_f64())
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n.max(1) as f64
}

fn jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

struct Sweep {
    dir: PathBuf,
    rows: Vec<ResultRow>,
    failed: usize,
    elapsed: Duration,
}

fn sweep(root: &Path, name: &str, json: &str) -> anyhow::Result<Sweep> {
    let cfg: ExperimentConfig = serde_json::from_str(json)?;
    let dir = root.join(name);
    let t = Instant::now();
    let s = run_experiment(&cfg, &dir, jobs())?;
    let rows = polylab_cli::sweep::read_results(&dir.join(RESULTS_CSV))?;
    Ok(Sweep { dir, rows, failed: s.failed, elapsed: t.elapsed() })
}

fn stalled(s: &Sweep) -> usize {
    s.rows.iter().filter(|r| r.stalled).count()
}

fn bounded_instance(rng: &mut ChaCha8Rng, dim: usize) -> IntPolytope {
    loop {
        let n = rng.gen_range(dim + 2..=12);
        let p = random_int_polytope(rng, dim, n);
        if geometry::is_bounded(&p.to_float()).unwrap() {
            return p;
        }
    }
}

fn geometry_equivalence() -> Verdict {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut problems = Vec::new();
    let mut probes = 0usize;
    for i in 0..50 {
        let dim = 3 + i % 2;
        let p = bounded_instance(&mut rng, dim);
        let exact = brute_vertices(&p);
        let facets = brute_facet_count(&p, &exact);
        let verts = match geometry::enumerate_vertices(&p.to_float()) {
            Ok(v) => v,
            Err(e) => {
                problems.push(format!("#{i}: enumerate_vertices failed: {e}"));
                continue;
            }
        };
        let missing = exact
            .iter()
            .filter(|v| {
                let vf = to_f64(v);
                !verts.points.iter().any(|g| max_abs_diff(g, &vf) < 1e-9)
            })
            .count();
        if verts.len() != exact.len() || missing > 0 {
            problems.push(format!("#{i}: {} vertices vs {} exact, {missing} missing", verts.len(), exact.len()));
        }
        let reduced = geometry::remove_redundant(&p.to_float()).unwrap();
        let hull = geometry::convex_hull(&verts).unwrap();
        let exact_hull = geometry::convex_hull(&VertexSet::new(dim, exact.iter().map(|v| to_f64(v)).collect()).unwrap()).unwrap();
        if reduced.len() != facets || hull.len() != facets || exact_hull.len() != facets {
            problems.push(format!(
                "#{i}: facets {} / {} / {} vs {facets}",
                reduced.len(),
                hull.len(),
                exact_hull.len()
            ));
        }
        // Dyadic probes k/1024 make the exact test a pure integer sign check.
        let lo: Vec<f64> = (0..dim).map(|j| exact.iter().map(|v| to_f64(v)[j]).fold(f64::INFINITY, f64::min)).collect();
        let hi: Vec<f64> = (0..dim).map(|j| exact.iter().map(|v| to_f64(v)[j]).fold(f64::NEG_INFINITY, f64::max)).collect();
        let mut disagree = 0;
        for _ in 0..100_000 {
            let k: Vec<i64> = (0..dim)
                .map(|j| {
                    let pad = 0.2 * (hi[j] - lo[j]) + 0.1;
                    rng.gen_range(((lo[j] - pad) * 1024.0) as i64..=((hi[j] + pad) * 1024.0) as i64)
                })
                .collect();
            let inside = p.a.iter().zip(&p.b).all(|(a, &b)| a.iter().zip(&k).map(|(x, y)| x * y).sum::<i64>() + 1024 * b <= 0);
            let x: Vec<f64> = k.iter().map(|&v| v as f64 / 1024.0).collect();
            if inside != hull.contains(&x) {
                disagree += 1;
            }
        }
        probes += 100_000;
        if disagree > 0 {
            problems.push(format!("#{i}: {disagree} membership disagreements"));
        }
    }
    let el = t.elapsed();
    let pass = problems.is_empty() && el < Duration::from_secs(120);
    verdict(
        pass,
        format!(
            "50 polytopes, {probes} probes, {} mismatches{}, {}",
            problems.len(),
            problems.first().map(|p| format!(" (first: {p})")).unwrap_or_default(),
            secs(el)
        ),
    )
}

fn model_consistency() -> Verdict {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    let mut state_mismatch = 0;
    for seed in 0..20u64 {
        let n = 3 + (seed % 2) as usize;
        let dev = generate_device(n, seed).unwrap();
        let anchor = dev.anchor(&StateVector::uniform(n, 1)).unwrap();
        let mut triples = 0;
        while triples < 1000 {
            let s: Vec<u32> = (0..n).map(|_| rng.gen_range(0..=4)).collect();
            let r: Vec<u32> = (0..n).map(|_| rng.gen_range(0..=4)).collect();
            if s == r {
                continue;
            }
            let x: Vec<f64> = (0..dev.n_gates()).map(|_| rng.gen_range(-20.0..20.0)).collect();
            let vg = dev.from_rescaled(&x, &anchor);
            let h = dev.transition_halfspace(&StateVector(s.clone()), &StateVector(r.clone())).unwrap();
            let diff = energy(&dev, &s, &vg) - energy(&dev, &r, &vg);
            worst = worst.max((diff - h.eval(&vg)).abs());
            triples += 1;
        }
        for _ in 0..1000 {
            let x: Vec<f64> = (0..dev.n_gates()).map(|_| rng.gen_range(-15.0..15.0)).collect();
            let vg = dev.from_rescaled(&x, &anchor);
            if dev.ground_state_unchecked(&vg, 4).unwrap().0 != brute_ground_state(&dev, &vg, 4) {
                state_mismatch += 1;
            }
        }
    }
    let el = t.elapsed();
    verdict(
        worst <= 1e-9 && state_mismatch == 0 && el < Duration::from_secs(60),
        format!("max energy residual {worst:.2e}, {state_mismatch} ground-state mismatches, {}", secs(el)),
    )
}

fn facet_counts() -> Verdict {
    let mut bad = Vec::new();
    for seed in 0..20 {
        for (n, expected) in [(3, 14), (4, 30)] {
            let got = DeviceProblem::new(generate_device(n, seed).unwrap(), StateVector::uniform(n, 1), 4)
                .map(|p| p.truth.len());
            if !matches!(got, Ok(c) if c == expected) {
                bad.push(format!("{n} dots seed {seed}: {got:?}"));
            }
        }
    }
    verdict(bad.is_empty(), format!("20 seeds x {{3, 4}} dots, {} deviations {bad:?}", bad.len()))
}

fn injected_truth() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let mut done = 0;
    let mut bad = 0;
    while done < 20 {
        let dim = 2 + done % 3;
        let p = random_int_polytope(&mut rng, dim, dim + 4).to_float();
        if !geometry::is_bounded(&p).unwrap() {
            continue;
        }
        let truth = geometry::remove_redundant(&p).unwrap().normalized();
        let cfg = ActiveConfig::new(0.01, Algorithm::Main, done as u64);
        let ok = match active_learn_from(&truth, &vec![0.0; dim], &cfg, MarginModel::from_polytope(&truth)) {
            Ok(out) => {
                out.trace.rounds.len() == 1
                    && out.trace.rounds[0].terminated
                    && out.trace.rounds[0].new_distances.iter().all(|&v| v < cfg.eps_end)
            }
            Err(_) => false,
        };
        if !ok {
            bad += 1;
        }
        done += 1;
    }
    verdict(bad == 0, format!("20 polytopes, {bad} did not stop after one round"))
}

fn voronoi_desk(s: &Sweep) -> Verdict {
    let unmatched = mean(s.rows.iter().map(|r| r.unmatched as f64));
    let iou = mean(s.rows.iter().map(|r| r.iou));
    let pass = s.failed == 0 && s.rows.len() == 10 && unmatched <= 0.2 && iou >= 0.995 && s.elapsed < Duration::from_secs(1800);
    verdict(
        pass,
        format!(
            "{} cells ({} failed, {} stalled), mean unmatched {unmatched:.2}, mean IoU {iou:.5}, {}",
            s.rows.len(),
            s.failed,
            stalled(s),
            secs(s.elapsed)
        ),
    )
}

fn group_mean(rows: &[ResultRow], delta: f64, alg: Algorithm, f: impl Fn(&ResultRow) -> f64) -> (usize, f64) {
    let sel: Vec<&ResultRow> = rows.iter().filter(|r| r.delta == delta && r.algorithm == alg).collect();
    (sel.len(), mean(sel.iter().map(|r| f(r))))
}

fn device_trend(s: &Sweep) -> Verdict {
    let (n_fine, fine) = group_mean(&s.rows, 0.01, Algorithm::Main, |r| r.unmatched as f64);
    let (n_coarse, coarse) = group_mean(&s.rows, 0.2, Algorithm::Main, |r| r.unmatched as f64);
    let (n_base, base) = group_mean(&s.rows, 0.2, Algorithm::Baseline, |r| r.unmatched as f64);
    let pass = s.failed == 0
        && (n_fine, n_coarse, n_base) == (10, 10, 10)
        && coarse > fine
        && base <= coarse
        && s.elapsed < Duration::from_secs(3600);
    verdict(
        pass,
        format!(
            "mean unmatched: main δ=0.01 {fine:.2}, main δ=0.2 {coarse:.2}, baseline δ=0.2 {base:.2} ({} failed, {} stalled), {}",
            s.failed,
            stalled(s),
            secs(s.elapsed)
        ),
    )
}

fn budget(s: &Sweep) -> Verdict {
    let mut pass = s.failed == 0;
    let mut parts = Vec::new();
    for i in 0..3 {
        let get = |alg: Algorithm| s.rows.iter().find(|r| r.instance == i && r.algorithm == alg).map(|r| r.line_searches);
        match (get(Algorithm::Main), get(Algorithm::Baseline)) {
            (Some(m), Some(b)) => {
                pass &= (500..=4000).contains(&m) && (150..=1500).contains(&b) && b < m;
                parts.push(format!("#{i} main {m} / baseline {b}"));
            }
            _ => {
                pass = false;
                parts.push(format!("#{i} missing"));
            }
        }
    }
    verdict(pass, format!("{}, {} stalled, {}", parts.join(", "), stalled(s), secs(s.elapsed)))
}

fn monotonicity(sweeps: &[&Sweep]) -> Verdict {
    let (mut fits, mut runs, mut bad_ccp, mut bad_restart) = (0, 0, 0, 0);
    let mut worst: f64 = 0.0;
    for s in sweeps {
        for r in &s.rows {
            let path = s.dir.join("cells").join(&r.cell_id).join("trace.jsonl");
            let trace = match File::open(&path).map(BufReader::new).and_then(RunTrace::read_jsonl) {
                Ok(t) => t,
                Err(_) => {
                    bad_ccp += 1;
                    continue;
                }
            };
            for round in &trace.rounds {
                fits += 1;
                for objs in &round.ccp_objectives {
                    runs += 1;
                    let rise = objs.windows(2).map(|w| (w[1] - w[0]) / w[0].abs().max(1e-12)).fold(0.0, f64::max);
                    worst = worst.max(rise);
                    if rise > 1e-7 {
                        bad_ccp += 1;
                    }
                }
                let ro = &round.restart_objectives;
                if let (Some(Some(first)), Some(Some(sel))) = (ro.first(), ro.get(round.selected_restart)) {
                    if *sel > *first {
                        bad_restart += 1;
                    }
                }
            }
        }
    }
    verdict(
        bad_ccp == 0 && bad_restart == 0 && runs > 0,
        format!(
            "{fits} fits, {runs} CCP runs, worst relative rise {worst:.1e}, {bad_ccp} non-monotone, {bad_restart} restart selections worse than restart 0"
        ),
    )
}

fn row_line(csv: &str, id: &str) -> Option<String> {
    csv.lines().find(|l| l.split(',').next() == Some(id)).map(String::from)
}

fn determinism(root: &Path, previous: &Sweep, json: &str, id: &str) -> Verdict {
    let again = match sweep(root, "rerun", json) {
        Ok(s) => s,
        Err(e) => return verdict(false, format!("rerun failed: {e:#}")),
    };
    let read = |d: &Path| fs::read_to_string(d.join(RESULTS_CSV)).unwrap_or_default();
    let a = row_line(&read(&previous.dir), id);
    let b = row_line(&read(&again.dir), id);
    verdict(a.is_some() && a == b, format!("{id} rerun in a fresh directory, rows identical: {}", a.is_some() && a == b))
}

fn config(name: &str, kind: Kind, dim: usize, instances: &str, deltas: &str, algs: &str) -> String {
    format!(
        r#"{{"name":"{name}","problems":[{{"kind":"{}","dim":{dim}}}],"instances":{instances},"deltas":{deltas},"algorithms":{algs}}}"#,
        kind.name()
    )
}

fn main() -> ExitCode {
    let root = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let _ = fs::remove_dir_all(&root);
    fs::create_dir_all(&root).unwrap();

    let mut results: Vec<(usize, Verdict)> = Vec::new();
    let mut report = |n: usize, v: Verdict| {
        println!("criterion {n}: {} — {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((n, v));
    };

    report(1, geometry_equivalence());
    report(2, model_consistency());
    report(3, facet_counts());

    let run = |name: &str, json: String| {
        sweep(&root, name, &json).unwrap_or_else(|e| panic!("sweep {name} could not run: {e:#}"))
    };
    let c4 = run("voronoi3", config("voronoi3", Kind::Voronoi, 3, "10", "[0.01]", r#"["main"]"#));
    report(4, voronoi_desk(&c4));
    let c5 = run("device3", config("device3", Kind::Device, 3, "10", "[0.01, 0.2]", r#"["main","baseline"]"#));
    report(5, device_trend(&c5));
    let c6 = run("device4", config("device4", Kind::Device, 4, "3", "[0.1]", r#"["main","baseline"]"#));
    report(6, budget(&c6));
    report(7, injected_truth());
    report(8, monotonicity(&[&c4, &c5, &c6]));
    report(
        9,
        determinism(
            &root,
            &c5,
            &config("device3", Kind::Device, 3, "[0]", "[0.2]", r#"["main"]"#),
            "device-d3-i0-delta0.2-main",
        ),
    );

    let failed: Vec<usize> = results.iter().filter(|(_, v)| !v.pass).map(|(n, _)| *n).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", results.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}

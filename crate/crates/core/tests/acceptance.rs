//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any criterion fails.
//!
//! Optional: set `UCREG_TRAUMA_CSV` to a trauma table with columns `RTS`,
//! `ISS`, `age` and `outcome` (label `death`) to run the data-dependent AUC
//! check; without it that criterion reports SKIP.

use std::collections::{BTreeMap, HashSet};
use std::f64::consts::TAU;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ucreg_core::chart::{train_and_evaluate, ChartSpec, EvaluationOptions};
use ucreg_core::correlation::build_panorama as correlate;
use ucreg_core::data::{decompose_target, Dataset, LoadOptions};
use ucreg_core::evaluation::{auc_pairs_oracle, roc_curve};
use ucreg_core::logit::{fit_binary, fit_multinomial, sigmoid, Design, FitConfig, Objective};
use ucreg_core::query::query;
use ucreg_core::radviz::{place_anchors, radviz_map};
use ucreg_core::store::{build_panorama, BuildOptions, PanoramaFile};

const AUC_TOL: f64 = 1e-12;
const AUC_BUDGET: Duration = Duration::from_secs(5);
const GRAD_H: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-6;
const DEGENERATE_TOL: f64 = 1e-9;
const NORMALIZATION_TOL: f64 = 1e-12;
const GEOMETRY_TOL: f64 = 1e-12;
const ZOO_BUDGET: Duration = Duration::from_secs(1);
const ROUND_TRIP_TOL: f64 = 1e-12;
const SEPARABLE_P: f64 = 0.99;
const SWAP_TOL: f64 = 1e-6;
const TRAUMA_AUC: (f64, f64) = (0.97, 0.99);

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("auc-oracle-equivalence", auc_oracle_equivalence),
        ("gradient-check", gradient_check),
        ("multinomial-degeneration", multinomial_degeneration),
        ("probability-normalization", probability_normalization),
        ("radviz-geometry", radviz_geometry),
        ("zoo-dominant-labels", zoo_dominant_labels),
        ("panorama-round-trip", panorama_round_trip),
        ("separable-fit", separable_fit),
        ("trauma-auc (optional)", trauma_auc),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::Fail(format!("panicked: {msg}"))
        });
        let ms = started.elapsed().as_secs_f64() * 1e3;
        match outcome {
            Outcome::Pass(d) => println!("PASS  {name:<28} {d} [{ms:.0} ms]"),
            Outcome::Skip(d) => println!("SKIP  {name:<28} {d}"),
            Outcome::Fail(d) => {
                failed += 1;
                println!("FAIL  {name:<28} {d} [{ms:.0} ms]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
}

fn auc_oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2020);
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    let mut instances = 0;
    while instances < 1000 {
        let n = rng.random_range(2..=200);
        // Coarse levels on some instances force many ties.
        let levels = if rng.random_bool(0.5) { rng.random_range(2..10) } else { 1_000_000 };
        let scores: Vec<f64> = (0..n)
            .map(|_| f64::from(rng.random_range(0..levels)) / f64::from(levels))
            .collect();
        let truth: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        if truth.iter().all(|t| *t) || truth.iter().all(|t| !*t) {
            continue;
        }
        let auc = roc_curve(&scores, &truth).unwrap().auc;
        let oracle = auc_pairs_oracle(&scores, &truth).unwrap();
        worst = worst.max((auc - oracle).abs());
        instances += 1;
    }
    let elapsed = started.elapsed();
    check(
        worst < AUC_TOL && elapsed < AUC_BUDGET,
        format!("{instances} instances, max |dAUC| = {worst:.2e}, {:.2} s", elapsed.as_secs_f64()),
    )
}

fn random_columns(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..d)
        .map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect()
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(10..80);
        let d = rng.random_range(1..5);
        let columns = random_columns(&mut rng, n, d);
        let y: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let l2 = if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..2.0) };
        let params: Vec<f64> = (0..=d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let obj = Objective {
            columns: &columns,
            y: &y,
            l2,
        };
        let g = obj.gradient(&params);
        let fd: Vec<f64> = (0..=d)
            .map(|j| {
                let mut up = params.clone();
                let mut down = params.clone();
                up[j] += GRAD_H;
                down[j] -= GRAD_H;
                (obj.value(&up) - obj.value(&down)) / (2.0 * GRAD_H)
            })
            .collect();
        let diff = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm = g.iter().map(|a| a * a).sum::<f64>().sqrt();
        worst = worst.max(diff / norm);
    }
    check(worst < GRAD_TOL, format!("100 points, max relative error = {worst:.2e}"))
}

fn two_class_problem(rng: &mut ChaCha8Rng) -> (Design, Vec<usize>) {
    loop {
        let n = rng.random_range(20..120);
        let d = rng.random_range(1..4);
        let columns = random_columns(rng, n, d);
        let w: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let assignment: Vec<usize> = (0..n)
            .map(|i| {
                let z: f64 = columns.iter().zip(&w).map(|(c, w)| c[i] * w).sum();
                usize::from(rng.random::<f64>() >= sigmoid(z))
            })
            .collect();
        if assignment.contains(&0) && assignment.contains(&1) {
            let names = (0..d).map(|j| format!("x{j}")).collect();
            return (Design::new(names, columns, n).unwrap(), assignment);
        }
    }
}

fn multinomial_degeneration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let cfg = FitConfig::default();
    let labels = vec!["yes".to_string(), "no".to_string()];
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (design, assignment) = two_class_problem(&mut rng);
        let mm = fit_multinomial(&design, &assignment, &labels, &cfg).unwrap();
        let y: Vec<bool> = assignment.iter().map(|a| *a == 0).collect();
        let binary = fit_binary(&design, &y, &cfg).unwrap();
        for i in 0..design.n_rows() {
            let row = design.row(i);
            let p = mm.predict_row(&row);
            let s = binary.predict_row(&row);
            worst = worst.max((p[0] - s).abs()).max((p[1] - (1.0 - s)).abs());
        }
    }
    check(worst < DEGENERATE_TOL, format!("50 models, max |dp| = {worst:.2e}"))
}

fn probability_normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = FitConfig::default();
    let mut worst_row: f64 = 0.0;
    let mut rows = 0;
    for _ in 0..30 {
        let k = rng.random_range(2..6);
        let n = rng.random_range(30..150);
        let d = rng.random_range(1..4);
        let columns = random_columns(&mut rng, n, d);
        let mut assignment: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        for (j, a) in assignment.iter_mut().take(k).enumerate() {
            *a = j;
        }
        let names: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
        let labels: Vec<String> = (0..k).map(|j| format!("L{j}")).collect();
        let design = Design::new(names, columns, n).unwrap();
        let mm = fit_multinomial(&design, &assignment, &labels, &cfg).unwrap();
        for row in mm.probability_matrix(&design).unwrap() {
            worst_row = worst_row.max((row.iter().sum::<f64>() - 1.0).abs());
            rows += 1;
        }
    }
    let mut worst_sigmoid: f64 = 0.0;
    for _ in 0..100_000 {
        let z = rng.random_range(-40.0..40.0);
        worst_sigmoid = worst_sigmoid.max((sigmoid(z) + sigmoid(-z) - 1.0).abs());
    }
    check(
        worst_row < NORMALIZATION_TOL && worst_sigmoid < NORMALIZATION_TOL,
        format!("{rows} rows max |sum-1| = {worst_row:.2e}; sigmoid symmetry max = {worst_sigmoid:.2e}"),
    )
}

/// Cross-product test against the polygon of visible anchors (CCW order).
fn inside_hull(p: (f64, f64), hull: &[(f64, f64)]) -> bool {
    match hull.len() {
        1 => (p.0 - hull[0].0).abs() < GEOMETRY_TOL && (p.1 - hull[0].1).abs() < GEOMETRY_TOL,
        2 => {
            let (a, b) = (hull[0], hull[1]);
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            let dot = (p.0 - a.0) * (b.0 - a.0) + (p.1 - a.1) * (b.1 - a.1);
            let len2 = (b.0 - a.0).powi(2) + (b.1 - a.1).powi(2);
            cross.abs() < GEOMETRY_TOL && dot >= -GEOMETRY_TOL && dot <= len2 + GEOMETRY_TOL
        }
        _ => (0..hull.len()).all(|i| {
            let (a, b) = (hull[i], hull[(i + 1) % hull.len()]);
            (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0) >= -GEOMETRY_TOL
        }),
    }
}

fn radviz_geometry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut problems = Vec::new();
    for k in 1..=8 {
        let labels: Vec<String> = (0..k).map(|j| format!("L{j}")).collect();
        let ring = place_anchors(&labels, &vec![true; k]).unwrap();
        for j in 0..k {
            let mut w = vec![0.0; k];
            w[j] = rng.random_range(0.1..5.0);
            if radviz_map(&w, &ring, 1.0).unwrap() != ring.anchor_position(j).unwrap() {
                problems.push(format!("one-hot k={k} j={j}"));
            }
        }
        if k >= 2 {
            let (x, y) = radviz_map(&vec![0.7; k], &ring, 1.0).unwrap();
            if x.hypot(y) >= GEOMETRY_TOL {
                problems.push(format!("uniform k={k} -> ({x:e}, {y:e})"));
            }
        }
    }
    let mut tested = 0;
    while tested < 10_000 {
        let k = rng.random_range(1..=8);
        let labels: Vec<String> = (0..k).map(|j| format!("L{j}")).collect();
        let mut visible: Vec<bool> = (0..k).map(|_| rng.random_bool(0.8)).collect();
        if !visible.iter().any(|v| *v) {
            visible[0] = true;
        }
        let ring = place_anchors(&labels, &visible).unwrap();
        let w: Vec<f64> = (0..k)
            .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..3.0) })
            .collect();
        let p = radviz_map(&w, &ring, rng.random_range(1.0..3.0)).unwrap();
        let effective: f64 = (0..k).filter(|&j| visible[j]).map(|j| w[j]).sum();
        if effective == 0.0 {
            continue;
        }
        // Visible anchors in ascending-angle order from the top are CCW.
        let mut hull: Vec<(f64, f64, f64)> = ring
            .anchors
            .iter()
            .filter_map(|a| a.angle.map(|t| ((t - TAU / 4.0).rem_euclid(TAU), t.cos(), t.sin())))
            .collect();
        hull.sort_by(|a, b| a.0.total_cmp(&b.0));
        let hull: Vec<(f64, f64)> = hull.into_iter().map(|(_, x, y)| (x, y)).collect();
        if !inside_hull(p, &hull) {
            problems.push(format!("outside hull: k={k} w={w:?} p={p:?}"));
        }
        tested += 1;
    }
    check(
        problems.is_empty(),
        format!("one-hot/uniform k=1..8, {tested} random points in hull; problems: {problems:?}"),
    )
}

fn zoo_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/zoo.csv")
}

/// Direct Pearson from raw text with textbook sums, independent of the crate.
fn zoo_oracle(text: &str) -> (Vec<String>, Vec<String>, Vec<Vec<f64>>) {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let rows: Vec<Vec<&str>> = lines.filter(|l| !l.is_empty()).map(|l| l.split(',').collect()).collect();
    let target = header.len() - 1;
    let mut labels: Vec<String> = Vec::new();
    for r in &rows {
        if !labels.iter().any(|l| l == r[target]) {
            labels.push(r[target].to_string());
        }
    }
    let attrs: Vec<usize> = (1..target).collect();
    let n = rows.len() as f64;
    let matrix = attrs
        .iter()
        .map(|&a| {
            let x: Vec<f64> = rows.iter().map(|r| r[a].parse().unwrap()).collect();
            labels
                .iter()
                .map(|l| {
                    let y: Vec<f64> = rows.iter().map(|r| f64::from(u8::from(r[target] == l))).collect();
                    let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
                    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
                    let sxx: f64 = x.iter().map(|a| a * a).sum();
                    let syy: f64 = y.iter().map(|b| b * b).sum();
                    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
                })
                .collect()
        })
        .collect();
    (attrs.iter().map(|&a| header[a].to_string()).collect(), labels, matrix)
}

fn load_zoo() -> Dataset {
    let opts = LoadOptions {
        id_column: Some("name".into()),
        ..LoadOptions::default()
    };
    Dataset::load(std::fs::File::open(zoo_path()).unwrap(), &opts).unwrap()
}

fn zoo_dominant_labels() -> Outcome {
    let text = std::fs::read_to_string(zoo_path()).unwrap();
    let started = Instant::now();
    let ds = load_zoo();
    let dec = decompose_target(&ds, "type").unwrap();
    let p = correlate(&ds, &dec, &HashSet::new()).unwrap();
    let elapsed = started.elapsed();

    let (attrs, labels, oracle) = zoo_oracle(&text);
    let mut problems = Vec::new();
    if attrs != p.attributes || labels != p.labels {
        problems.push("attribute/label order differs from oracle".to_string());
    }
    let mut worst: f64 = 0.0;
    for (a, row) in oracle.iter().enumerate() {
        for (j, r) in row.iter().enumerate() {
            worst = worst.max((r - p.matrix[a][j]).abs());
        }
    }
    if worst > 1e-10 {
        problems.push(format!("matrix deviates from oracle by {worst:.2e}"));
    }
    let argmax = |row: &[f64]| {
        let mut best = 0;
        for j in 0..row.len() {
            if row[j].abs() > row[best].abs() {
                best = j;
            }
        }
        best
    };
    let mut found = Vec::new();
    for (attr, expected) in [("feathers", "bird"), ("milk", "mammal"), ("fins", "fish")] {
        let i = p.attribute_index(attr).unwrap();
        let engine = &p.labels[p.dominant_label[i]];
        let direct = &labels[argmax(&oracle[attrs.iter().position(|a| a == attr).unwrap()])];
        if engine != expected || direct != expected {
            problems.push(format!("{attr}: engine {engine}, oracle {direct}, expected {expected}"));
        }
        found.push(format!("{attr}->{engine}"));
    }
    if elapsed >= ZOO_BUDGET {
        problems.push(format!("took {:.3} s", elapsed.as_secs_f64()));
    }
    check(
        problems.is_empty(),
        format!("{} ({} rows, oracle max |dr| = {worst:.1e}){}", found.join(", "), ds.n_rows(), if problems.is_empty() { String::new() } else { format!(" {problems:?}") }),
    )
}

fn panorama_round_trip() -> Outcome {
    let ds = load_zoo();
    let spec = |title: &str, labels: &[&str], attrs: &[&str]| ChartSpec {
        title: title.into(),
        target: "type".into(),
        labels: labels.iter().map(|s| s.to_string()).collect(),
        attributes: attrs.iter().map(|s| s.to_string()).collect(),
    };
    let specs = vec![
        spec("aquatic life", &["fish"], &["legs", "breathes", "aquatic"]),
        spec("vertebrates", &["bird", "mammal", "fish", "reptile"], &["legs", "eggs", "toothed", "catsize"]),
        spec("small classes", &["insect", "invertebrate"], &["legs", "airborne"]),
    ];
    let pf = build_panorama(&ds, &specs, &FitConfig::default(), &BuildOptions::default()).unwrap();
    let loaded = PanoramaFile::load(&pf.save()).unwrap();
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for chart in &pf.charts {
        let data = ucreg_core::chart::chart_data(&ds, &chart.spec).unwrap();
        for i in 0..data.design.n_rows() {
            let profile: BTreeMap<String, f64> = data.design.names.iter().cloned().zip(data.design.row(i)).collect();
            let mut full = loaded.default_profile();
            full.extend(profile.clone());
            let before = chart.model.predict(&profile).unwrap();
            let after = query(&loaded, &full).unwrap();
            let after = &after.iter().find(|c| c.title == chart.spec.title).unwrap().probabilities;
            for (a, b) in before.iter().zip(after) {
                worst = worst.max((a - b).abs());
            }
            compared += 1;
        }
    }
    check(
        worst <= ROUND_TRIP_TOL,
        format!("{} charts, {compared} training rows, max |dp| = {worst:.1e}", pf.charts.len()),
    )
}

/// Coarse-to-fine grid maximization of the penalized likelihood over
/// (intercept, weight) in standardized units.
fn grid_oracle(x_std: &[f64], y: &[bool], l2: f64) -> (f64, f64, f64) {
    let objective = |b: f64, w: f64| -> f64 {
        let ll: f64 = x_std
            .iter()
            .zip(y)
            .map(|(x, &t)| {
                let z = b + w * x;
                let s = if t { z } else { -z };
                // log sigmoid(s), evaluated stably.
                -((-s).max(0.0) + (-s.abs()).exp().ln_1p())
            })
            .sum();
        ll - 0.5 * l2 * w * w
    };
    let (mut b0, mut w0) = (0.0, 0.0);
    let (mut bspan, mut wspan) = (8.0, 60.0);
    let (mut wc, mut bc) = (30.0, 0.0);
    let mut best = f64::NEG_INFINITY;
    for _ in 0..12 {
        let steps = 80;
        for i in 0..=steps {
            for j in 0..=steps {
                let b = bc - bspan / 2.0 + bspan * f64::from(i) / f64::from(steps);
                let w = wc - wspan / 2.0 + wspan * f64::from(j) / f64::from(steps);
                let f = objective(b, w);
                if f > best {
                    best = f;
                    b0 = b;
                    w0 = w;
                }
            }
        }
        bc = b0;
        wc = w0;
        bspan /= 8.0;
        wspan /= 8.0;
    }
    (b0, w0, best)
}

fn separable_fit() -> Outcome {
    let x = [-2.0, -1.0, 1.0, 2.0];
    let y = [false, false, true, true];
    let cfg = FitConfig::default();
    let design = Design::new(vec!["x".into()], vec![x.to_vec()], 4).unwrap();
    let m = fit_binary(&design, &y, &cfg).unwrap();
    let p2 = m.predict_row(&[2.0]);
    let pm2 = m.predict_row(&[-2.0]);

    let std = (x.iter().map(|v| v * v).sum::<f64>() / 4.0).sqrt();
    let x_std: Vec<f64> = x.iter().map(|v| v / std).collect();
    let (gb, gw, gbest) = grid_oracle(&x_std, &y, cfg.l2);
    let oracle_p2 = sigmoid(gb + gw * 2.0 / std);
    let fitted = Objective {
        columns: std::slice::from_ref(&x_std),
        y: &y,
        l2: cfg.l2,
    }
    .value(&[m.standardized.intercept, m.standardized.weights[0]]);

    let swapped: Vec<bool> = y.iter().map(|v| !v).collect();
    let ms = fit_binary(&design, &swapped, &cfg).unwrap();
    let swap_err = (m.standardized.intercept + ms.standardized.intercept)
        .abs()
        .max((m.standardized.weights[0] + ms.standardized.weights[0]).abs());

    let ok = m.diagnostics.converged
        && p2 > SEPARABLE_P
        && pm2 < 1.0 - SEPARABLE_P
        && fitted >= gbest - 1e-12
        && (p2 - oracle_p2).abs() < 1e-6
        && swap_err < SWAP_TOL;
    check(
        ok,
        format!(
            "converged={} in {} it, P(x=2)={p2:.6}, grid P={oracle_p2:.6}, w={:.4} vs grid {gw:.4}, objective {fitted:.6e} vs grid {gbest:.6e}, swap |d|={swap_err:.1e}",
            m.diagnostics.converged, m.diagnostics.iterations, m.standardized.weights[0]
        ),
    )
}

fn trauma_auc() -> Outcome {
    let Ok(path) = std::env::var("UCREG_TRAUMA_CSV") else {
        return Outcome::Skip("UCREG_TRAUMA_CSV not set; trauma data not fetched".into());
    };
    let ds = Dataset::load(std::fs::File::open(&path).unwrap(), &LoadOptions::default()).unwrap();
    let spec = ChartSpec {
        title: "TRISS-like".into(),
        target: "outcome".into(),
        labels: vec!["death".into()],
        attributes: vec!["RTS".into(), "ISS".into(), "age".into()],
    };
    let opts = EvaluationOptions { split: Some(0.2), seed: 7 };
    let (report, _) = train_and_evaluate(&ds, &spec, &opts, &FitConfig::default()).unwrap();
    let auc = report.rocs[0].roc.as_ref().unwrap().auc;
    check(
        auc >= TRAUMA_AUC.0 && auc <= TRAUMA_AUC.1,
        format!("test AUC = {auc:.4} (expected in [{}, {}])", TRAUMA_AUC.0, TRAUMA_AUC.1),
    )
}

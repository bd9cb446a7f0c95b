//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any gated criterion fails.

use std::collections::{BTreeSet, VecDeque};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use graphofuse_core::eval::{
    plan_cv, run_experiment, run_single_modality, sweep_threshold, zoning_set, ExperimentConfig,
    Modality, MultimodalSet,
};
use graphofuse_core::features::{FeatureMap, FeatureVector};
use graphofuse_core::fusion::{conditional_fusion_predict, soft_vote, FusionConfig, FusionMode};
use graphofuse_core::ingest::{load_dataset, FormatConfig, HandwritingRecord, Label, PenSample, Task};
use graphofuse_core::models::svm::{dual_gradient, dual_objective, kernel_matrix, kkt_violation, solve_dual};
use graphofuse_core::models::{
    gbt, sigmoid, train_svm, Algo, Classifier, GbtParams, HyperParams, Kernel, KernelSpec, Matrix,
    ProbabilityPair, SvmParams,
};
use graphofuse_core::online::{extract_online, online_manifest, ONLINE_FEATURE_COUNT};
use graphofuse_core::par::Execution;
use graphofuse_core::raster::{read_png, rasterize, write_png, RasterConfig, RasterImage};
use graphofuse_core::synth::{generate, SynthConfig, GOLDEN_SEED};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = std::result::Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(budget: Duration, start: Instant) -> std::result::Result<Duration, String> {
    let e = start.elapsed();
    check(e < budget, format!("took {e:.2?}, budget {budget:?}"))?;
    Ok(e)
}

// ---------------------------------------------------------------- fusion

struct Counting {
    p: ProbabilityPair,
    calls: AtomicUsize,
}

impl Classifier for Counting {
    fn dim(&self) -> usize {
        1
    }
    fn predict_proba(&self, _: &[f64]) -> graphofuse_core::Result<ProbabilityPair> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(self.p)
    }
}

fn pp(td: f64, dyg: f64) -> ProbabilityPair {
    ProbabilityPair { p_td: td, p_dyg: dyg }
}

fn small_set(seed: u64) -> MultimodalSet {
    let ds = generate(&SynthConfig {
        n_subjects: 12,
        records_per_subject: 2,
        seed,
        ..SynthConfig::default()
    })
    .unwrap();
    zoning_set(&ds, 0.01, &RasterConfig::default(), 8, Execution::default()).unwrap()
}

fn fusion_correctness() -> Outcome {
    let start = Instant::now();
    // (tau, online, offline, fused, triggered, final (td, dyg), label), worked by hand
    let table = [
        (0.2, (0.9, 0.1), (0.8, 0.2), (0.2, 0.8), false, (0.85, 0.15), Label::Td),
        (0.2, (0.55, 0.45), (0.5, 0.5), (0.2, 0.8), true, (1.25 / 3.0, 1.75 / 3.0), Label::Dyg),
        (0.2, (0.6, 0.4), (0.4, 0.6), (0.7, 0.3), true, (1.7 / 3.0, 1.3 / 3.0), Label::Td),
        (0.0, (0.5, 0.5), (0.5, 0.5), (0.0, 1.0), false, (0.5, 0.5), Label::Dyg),
        (0.15, (0.3, 0.7), (0.45, 0.55), (0.9, 0.1), false, (0.375, 0.625), Label::Dyg),
        (0.3, (0.3, 0.7), (0.45, 0.55), (0.9, 0.1), true, (0.55, 0.45), Label::Td),
        (0.1, (0.52, 0.48), (0.5, 0.5), (0.5, 0.5), true, (1.52 / 3.0, 1.48 / 3.0), Label::Td),
        (0.1, (0.62, 0.38), (0.5, 0.5), (0.1, 0.9), false, (0.56, 0.44), Label::Td),
        (1.0, (0.99, 0.01), (0.97, 0.03), (0.0, 1.0), true, (1.96 / 3.0, 1.04 / 3.0), Label::Td),
        (1.0, (1.0, 0.0), (1.0, 0.0), (0.0, 1.0), false, (1.0, 0.0), Label::Td),
        (0.25, (0.2, 0.8), (0.7, 0.3), (0.5, 0.5), true, (1.4 / 3.0, 1.6 / 3.0), Label::Dyg),
        (0.25, (0.35, 0.65), (0.45, 0.55), (0.35, 0.65), true, (1.15 / 3.0, 1.85 / 3.0), Label::Dyg),
    ];
    let x = FeatureVector {
        values: vec![0.0],
        manifest_version: "fixture".into(),
        sample_id: "s".into(),
    };
    let mut triggered = 0;
    for (i, (tau, on, off, fused, trig, fin, label)) in table.iter().enumerate() {
        let clf = Counting {
            p: pp(fused.0, fused.1),
            calls: AtomicUsize::new(0),
        };
        let cfg = FusionConfig::new(FusionMode::ConditionalFusion, *tau).unwrap();
        let d = conditional_fusion_predict(pp(on.0, on.1), pp(off.0, off.1), &clf, &x, &cfg)
            .map_err(|e| format!("fixture {i}: {e}"))?;
        check(d.triggered == *trig, format!("fixture {i}: triggered {}", d.triggered))?;
        check(d.fused_probs.is_some() == *trig, format!("fixture {i}: fused_probs presence"))?;
        check(
            clf.calls.load(Ordering::SeqCst) == usize::from(*trig),
            format!("fixture {i}: fused classifier evaluated eagerly"),
        )?;
        check(
            (d.final_probs.p_td - fin.0).abs() < 1e-12 && (d.final_probs.p_dyg - fin.1).abs() < 1e-12,
            format!("fixture {i}: final {:?}", d.final_probs),
        )?;
        check(d.label == *label, format!("fixture {i}: label {}", d.label))?;
        triggered += usize::from(*trig);
    }

    let set = small_set(11);
    let mut cfg = ExperimentConfig::new(
        Algo::Svm,
        FusionConfig::new(FusionMode::SoftVote, 0.0).unwrap(),
        5,
    );
    cfg.k = 3;
    cfg.grid = vec![HyperParams::Svm(SvmParams::default())];
    let soft = run_experiment(&set, &cfg).map_err(|e| e.to_string())?;
    cfg.fusion = FusionConfig::new(FusionMode::ConditionalFusion, 0.0).unwrap();
    let cond = run_experiment(&set, &cfg).map_err(|e| e.to_string())?;
    check(
        soft.report.to_csv() == cond.report.to_csv(),
        "tau=0 report differs from soft vote",
    )?;
    check(cond.triggered() == 0, "tau=0 triggered")?;
    let e = within(Duration::from_secs(1), start)?;
    Ok(format!(
        "{} fixtures ({triggered} triggered) match; tau=0 report byte-identical to soft vote [{e:.2?}]",
        table.len()
    ))
}

fn soft_vote_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(2..=3);
        let probs: Vec<ProbabilityPair> = (0..n)
            .map(|_| {
                let d: f64 = rng.random();
                pp(1.0 - d, d)
            })
            .collect();
        let v = soft_vote(&probs).map_err(|e| e.to_string())?;
        let mut td = 0.0;
        let mut dyg = 0.0;
        for p in &probs {
            td += p.p_td;
            dyg += p.p_dyg;
        }
        worst = worst
            .max((v.p_td - td / n as f64).abs())
            .max((v.p_dyg - dyg / n as f64).abs());
    }
    check(worst <= 1e-12, format!("max deviation {worst:e}"))?;
    let ties: [&[ProbabilityPair]; 3] = [
        &[pp(0.5, 0.5)],
        &[pp(0.3, 0.7), pp(0.7, 0.3)],
        &[pp(0.25, 0.75), pp(0.5, 0.5), pp(0.75, 0.25)],
    ];
    for t in ties {
        let v = soft_vote(t).map_err(|e| e.to_string())?;
        check(v.p_td == v.p_dyg, format!("fixture is not a tie: {v:?}"))?;
        check(v.label() == Label::Dyg, "tie not resolved to DYG")?;
    }
    Ok(format!("1000 random votes, max deviation {worst:.1e}; ties go to DYG"))
}

// ---------------------------------------------------------------- svm

/// Euclidean projection onto {0 <= a <= c, y·a = 0} by bisection on the
/// multiplier of the equality constraint.
fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |mu: f64| -> Vec<f64> {
        v.iter()
            .zip(y)
            .map(|(vi, yi)| (vi - mu * yi).clamp(0.0, c))
            .collect()
    };
    let g = |mu: f64| -> f64 { at(mu).iter().zip(y).map(|(a, yi)| a * yi).sum() };
    let (mut lo, mut hi) = (-1e6, 1e6);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        // g is non-increasing in mu
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Accelerated projected gradient on the dual.
fn dual_oracle(k: &[f64], y: &[f64], c: f64) -> f64 {
    let n = y.len();
    let q = |i: usize, j: usize| y[i] * y[j] * k[i * n + j];
    // Lipschitz bound: largest absolute row sum of Q
    let lip = (0..n)
        .map(|i| (0..n).map(|j| q(i, j).abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let grad = |a: &[f64]| -> Vec<f64> { (0..n).map(|i| (0..n).map(|j| q(i, j) * a[j]).sum::<f64>() - 1.0).collect() };
    let mut a = vec![0.0; n];
    let mut z = a.clone();
    let mut t: f64 = 1.0;
    for _ in 0..200_000 {
        let g = grad(&z);
        let step: Vec<f64> = z.iter().zip(&g).map(|(zi, gi)| zi - gi / lip).collect();
        let next = project(&step, y, c);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        z = next
            .iter()
            .zip(&a)
            .map(|(n, o)| n + (t - 1.0) / t_next * (n - o))
            .collect();
        let moved: f64 = next.iter().zip(&a).map(|(n, o)| (n - o).abs()).sum();
        a = next;
        t = t_next;
        if moved < 1e-13 {
            break;
        }
    }
    dual_objective(k, y, &a)
}

fn svm_fixture(seed: u64) -> (Matrix, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for i in 0..20 {
        let s = if i % 2 == 0 { 1.0 } else { -1.0 };
        rows.push(vec![s * 1.5 + rng.random_range(-1.0..1.0), rng.random_range(-2.0..2.0)]);
        y.push(s);
    }
    (Matrix::from_rows(&rows).unwrap(), y)
}

fn svm_optimization() -> Outcome {
    let start = Instant::now();
    let mut worst_gap: f64 = 0.0;
    let mut worst_kkt: f64 = 0.0;
    let mut cases = 0;
    for seed in 0..4 {
        let (x, y) = svm_fixture(seed);
        for kernel in [Kernel::Linear, Kernel::Rbf { gamma: 0.5 }] {
            for c in [1.0, 10.0] {
                let k = kernel_matrix(&kernel, &x);
                let sol = solve_dual(&k, &y, c, 1e-3);
                let smo = dual_objective(&k, &y, &sol.alpha);
                let oracle = dual_oracle(&k, &y, c);
                let kkt = kkt_violation(&y, c, &sol.alpha, &dual_gradient(&k, &y, &sol.alpha));
                worst_gap = worst_gap.max((smo - oracle).abs());
                worst_kkt = worst_kkt.max(kkt);
                cases += 1;
            }
        }
    }
    check(worst_gap <= 1e-4, format!("objective gap {worst_gap:e}"))?;
    check(worst_kkt <= 1e-3, format!("KKT violation {worst_kkt:e}"))?;

    let x = Matrix::from_rows(&[vec![-1.0, 0.0], vec![1.0, 0.0]]).unwrap();
    let m = train_svm(
        &x,
        &[Label::Td, Label::Dyg],
        None,
        &SvmParams {
            c: 1.0,
            kernel: KernelSpec::Linear,
        },
        0,
    )
    .map_err(|e| e.to_string())?;
    let f0 = m.decision_function(&[0.0, 0.0]).map_err(|e| e.to_string())?;
    check(f0.abs() <= 1e-3, format!("two-point boundary at f(0) = {f0}"))?;
    let e = within(Duration::from_secs(5), start)?;
    Ok(format!(
        "{cases} fixtures: objective gap {worst_gap:.1e}, KKT {worst_kkt:.1e}; two-point f(0) = {f0:.1e} [{e:.2?}]"
    ))
}

// ---------------------------------------------------------------- gbt

fn gbt_correctness() -> Outcome {
    // one feature, labels 0,1,1,1; depth-1 stumps, lr 0.5, lambda 1
    let x = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0], vec![4.0]]).unwrap();
    let y = [Label::Td, Label::Dyg, Label::Dyg, Label::Dyg];
    let yf = [0.0, 1.0, 1.0, 1.0];
    let params = GbtParams {
        rounds: 2,
        max_depth: 1,
        learning_rate: 0.5,
        subsample: 1.0,
        lambda: 1.0,
    };
    let model = gbt::train_gbt(&x, &y, &params, 0).map_err(|e| e.to_string())?;
    check(model.trees.len() == 2, "expected two trees")?;

    // hand recurrence: F0 = logit(3/4); every round splits {x=1} from the rest
    // and each side gets sum(y - p) / (sum p(1-p) + lambda)
    let groups: [&[usize]; 2] = [&[0], &[1, 2, 3]];
    let mut f = [3f64.ln(); 4];
    let mut worst: f64 = 0.0;
    for (round, tree) in model.trees.iter().enumerate() {
        let mut expected = [0.0; 4];
        for g in groups {
            let grad: f64 = g.iter().map(|&i| yf[i] - sigmoid(f[i])).sum();
            let hess: f64 = g.iter().map(|&i| sigmoid(f[i]) * (1.0 - sigmoid(f[i]))).sum();
            for &i in g {
                expected[i] = grad / (hess + 1.0);
            }
        }
        for (i, want) in expected.iter().enumerate() {
            let got = tree.predict(&model.standardizer.transform_row(x.row(i)));
            worst = worst.max((got - want).abs());
            check(
                (got - want).abs() <= 1e-9,
                format!("round {round} row {i}: leaf {got}, expected {want}"),
            )?;
        }
        for i in 0..4 {
            f[i] += 0.5 * expected[i];
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rows: Vec<Vec<f64>> = (0..80)
        .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let labels: Vec<Label> = rows
        .iter()
        .map(|r| {
            let noisy = r[0] + r[1] * r[2] + 0.4 * rng.random_range(-1.0..1.0);
            if noisy > 0.0 {
                Label::Dyg
            } else {
                Label::Td
            }
        })
        .collect();
    let (_, losses) = gbt::train_gbt_traced(
        &Matrix::from_rows(&rows).unwrap(),
        &labels,
        &GbtParams {
            rounds: 50,
            ..GbtParams::default()
        },
        1,
    )
    .map_err(|e| e.to_string())?;
    check(losses.len() == 51, format!("{} loss entries", losses.len()))?;
    let rises = losses.windows(2).filter(|w| w[1] > w[0] + 1e-12).count();
    check(rises == 0, format!("log-loss rose {rises} times"))?;
    Ok(format!(
        "two-round stump leaves within {worst:.1e}; 50-round log-loss {:.4} -> {:.4}, non-increasing",
        losses[0], losses[50]
    ))
}

// ---------------------------------------------------------------- features

fn record(samples: Vec<PenSample>) -> HandwritingRecord {
    HandwritingRecord {
        subject_id: "s".into(),
        task: Task::Word,
        label: Label::Td,
        samples,
        sample_id: "r".into(),
    }
}

fn pen(x: i64, y: i64, t: i64) -> PenSample {
    PenSample {
        x,
        y,
        t,
        on_surface: true,
        azimuth: 0,
        altitude: 0,
        pressure: 100,
    }
}

fn feature_correctness() -> Outcome {
    let manifest = online_manifest();
    let dt = 0.01;
    let get = |v: &FeatureVector, name: &str| v.values[manifest.index_of(name).expect(name)];
    let mut worst: f64 = 0.0;
    let mut expect = |v: &FeatureVector, name: &str, want: f64| -> std::result::Result<(), String> {
        let got = get(v, name);
        worst = worst.max((got - want).abs());
        check((got - want).abs() <= 1e-9, format!("{name}: {got} vs {want}"))
    };

    // constant velocity: 7 units/tick in x, 3 in y
    let line = extract_online(
        &record((0..30).map(|k| pen(100 + 7 * k, 200 + 3 * k, k)).collect()),
        &manifest,
        dt,
    );
    let speed = (49.0f64 + 9.0).sqrt() / dt;
    for (ch, v) in [("vx", 7.0 / dt), ("vy", 3.0 / dt), ("v", speed)] {
        for stat in ["mean", "median", "min", "max", "rms"] {
            expect(&line, &format!("{ch}_{stat}"), v)?;
        }
        for stat in ["std", "range", "iqr"] {
            expect(&line, &format!("{ch}_{stat}"), 0.0)?;
        }
    }
    for ch in ["ax", "ay", "a", "jx", "jy", "j"] {
        for stat in ["mean", "std", "min", "max", "rms"] {
            expect(&line, &format!("{ch}_{stat}"), 0.0)?;
        }
    }

    // parabola y = k^2 at uniform ticks: vy runs over (2k+1)/dt, ay = 2/dt^2
    let n = 21i64;
    let m = (n - 1) as f64;
    let para = extract_online(
        &record((0..n).map(|k| pen(10 * k, k * k, k)).collect()),
        &manifest,
        dt,
    );
    let step = 2.0 / dt;
    expect(&para, "vx_mean", 10.0 / dt)?;
    expect(&para, "vy_mean", m / dt)?;
    expect(&para, "vy_median", m / dt)?;
    expect(&para, "vy_min", 1.0 / dt)?;
    expect(&para, "vy_max", (2.0 * m - 1.0) / dt)?;
    expect(&para, "vy_std", step * ((m * m - 1.0) / 12.0).sqrt())?;
    expect(&para, "vy_skewness", 0.0)?;
    expect(&para, "vy_kurtosis", -6.0 * (m * m + 1.0) / (5.0 * (m * m - 1.0)))?;
    for stat in ["mean", "median", "min", "max", "rms"] {
        expect(&para, &format!("ay_{stat}"), 2.0 / (dt * dt))?;
    }
    expect(&para, "ay_std", 0.0)?;
    for stat in ["mean", "min", "max", "std"] {
        expect(&para, &format!("jy_{stat}"), 0.0)?;
        expect(&para, &format!("ax_{stat}"), 0.0)?;
    }

    // finiteness and exact invariances on generated records
    let mut records = 0;
    for seed in 0..3 {
        let ds = generate(&SynthConfig {
            n_subjects: 8,
            records_per_subject: 2,
            seed,
            ..SynthConfig::default()
        })
        .map_err(|e| e.to_string())?;
        for r in &ds.records {
            let base = extract_online(r, &manifest, dt);
            check(
                base.values.len() == ONLINE_FEATURE_COUNT && base.is_finite(),
                format!("{}: {} values or non-finite", r.sample_id, base.values.len()),
            )?;
            let mut moved = r.clone();
            for s in &mut moved.samples {
                s.x += 12_345;
                s.y += 678;
                s.t += 99_999;
            }
            check(
                extract_online(&moved, &manifest, dt).values == base.values,
                format!("{}: not translation/time-shift invariant", r.sample_id),
            )?;
            records += 1;
        }
    }
    Ok(format!(
        "analytic line and parabola within {worst:.1e}; {records} records give {ONLINE_FEATURE_COUNT} finite, shift-invariant features"
    ))
}

// ---------------------------------------------------------------- raster

/// 8-connected components of ink pixels by breadth-first labeling.
fn components(img: &RasterImage) -> usize {
    let (w, h) = (img.width, img.height);
    let mut seen = vec![false; w * h];
    let mut count = 0;
    for start in 0..w * h {
        if seen[start] || img.pixels[start] >= 128 {
            continue;
        }
        count += 1;
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            let (r, c) = ((p / w) as i64, (p % w) as i64);
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let (rr, cc) = (r + dr, c + dc);
                    if rr < 0 || cc < 0 || rr >= h as i64 || cc >= w as i64 {
                        continue;
                    }
                    let q = rr as usize * w + cc as usize;
                    if !seen[q] && img.pixels[q] < 128 {
                        seen[q] = true;
                        queue.push_back(q);
                    }
                }
            }
        }
    }
    count
}

fn raster_correctness() -> Outcome {
    let mut cfg = RasterConfig::default();
    let mut stamps = Vec::new();
    for w in [1, 2, 3, 5] {
        cfg.stroke_width = w;
        let img = rasterize(&record(vec![pen(500, 500, 0)]), &cfg).map_err(|e| e.to_string())?;
        let ink = img.pixels.iter().filter(|&&p| p < 128).count();
        check(ink == w * w, format!("width {w}: {ink} ink pixels"))?;
        stamps.push(ink);
    }

    cfg = RasterConfig::default();
    let mut samples: Vec<PenSample> = (0..20).map(|k| pen(100 + 10 * k, 100, k)).collect();
    let mut lifted = pen(300, 200, 20);
    lifted.on_surface = false;
    samples.push(lifted);
    samples.extend((0..20).map(|k| pen(100 + 10 * k, 400, 21 + k)));
    let img = rasterize(&record(samples), &cfg).map_err(|e| e.to_string())?;
    let n = components(&img);
    check(n == 2, format!("{n} connected components"))?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("r.png");
    write_png(&img, &path).map_err(|e| e.to_string())?;
    let back = read_png(&path).map_err(|e| e.to_string())?;
    check(back == img, "PNG round-trip changed pixels")?;
    Ok(format!(
        "single point gives w^2 pixels for w in 1,2,3,5 ({stamps:?}); two strokes give {n} components; PNG round-trip exact"
    ))
}

// ---------------------------------------------------------------- leakage

fn leakage() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut splits = 0;
    for corpus in 0..100u64 {
        let cfg = SynthConfig {
            n_subjects: rng.random_range(12..=40),
            records_per_subject: rng.random_range(1..=4),
            class_balance: rng.random_range(0.3..0.7),
            seed: corpus,
            ..SynthConfig::default()
        };
        let ds = generate(&cfg).map_err(|e| e.to_string())?;
        // fold assignment ignores feature values; a one-column stand-in is enough
        let stub: FeatureMap = ds
            .records
            .iter()
            .map(|r| {
                (
                    r.sample_id.clone(),
                    FeatureVector {
                        values: vec![0.0],
                        manifest_version: "stub".into(),
                        sample_id: r.sample_id.clone(),
                    },
                )
            })
            .collect();
        let set = MultimodalSet::new(&ds, stub.clone(), stub).map_err(|e| e.to_string())?;
        let plan = plan_cv(&set, 10, 3, corpus).map_err(|e| e.to_string())?;
        let subj = |idx: &[usize]| -> BTreeSet<String> { idx.iter().map(|&i| set.subjects[i].clone()).collect() };
        for f in &plan.folds {
            let train = subj(&f.train);
            let test = subj(&f.test);
            check(!test.is_empty(), format!("corpus {corpus} fold {}: empty test fold", f.fold))?;
            assert!(
                train.is_disjoint(&test),
                "corpus {corpus} fold {}: outer leak",
                f.fold
            );
            let train_subjects: Vec<String> = f.train.iter().map(|&i| set.subjects[i].clone()).collect();
            for inner in 0..f.inner.k {
                let mut itrain = BTreeSet::new();
                let mut itest = BTreeSet::new();
                for s in &train_subjects {
                    if f.inner.fold_of_subject[s] == inner {
                        itest.insert(s.clone());
                    } else {
                        itrain.insert(s.clone());
                    }
                }
                assert!(itrain.is_disjoint(&itest), "corpus {corpus}: inner leak");
                assert!(itest.is_disjoint(&test), "corpus {corpus}: inner fold sees outer test");
                splits += 1;
            }
            splits += 1;
        }
    }
    Ok(format!("100 corpora, {splits} outer and inner splits, no shared subject"))
}

// ---------------------------------------------------------------- end to end

struct Golden {
    set: MultimodalSet,
    online: f64,
    offline: f64,
    soft: f64,
    conditional: f64,
    conditional_models: usize,
    elapsed: Duration,
}

fn golden() -> std::result::Result<Golden, String> {
    let start = Instant::now();
    let ds = generate(&SynthConfig {
        seed: GOLDEN_SEED,
        ..SynthConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let set = zoning_set(&ds, 0.01, &RasterConfig::default(), 16, Execution::default()).map_err(|e| e.to_string())?;
    let cfg = |mode, tau| ExperimentConfig::new(Algo::Svm, FusionConfig::new(mode, tau).unwrap(), GOLDEN_SEED);
    let soft_cfg = cfg(FusionMode::SoftVote, 0.0);
    let acc = |r: graphofuse_core::Result<graphofuse_core::eval::ExperimentOutcome>| {
        r.map(|o| o.report.accuracy).map_err(|e| e.to_string())
    };
    let online = acc(run_single_modality(&set, Modality::Online, &soft_cfg))?;
    let offline = acc(run_single_modality(&set, Modality::Offline, &soft_cfg))?;
    let soft = acc(run_experiment(&set, &soft_cfg))?;
    let cond = run_experiment(&set, &cfg(FusionMode::ConditionalFusion, 0.2)).map_err(|e| e.to_string())?;
    Ok(Golden {
        set,
        online,
        offline,
        soft,
        conditional: cond.report.accuracy,
        conditional_models: cond.models_trained,
        elapsed: start.elapsed(),
    })
}

fn end_to_end(g: &Golden) -> Outcome {
    let detail = format!(
        "online {:.3}, offline {:.3}, soft vote {:.3}, conditional(0.2) {:.3} [{:.1?}]",
        g.online, g.offline, g.soft, g.conditional, g.elapsed
    );
    check(g.soft >= g.online && g.soft >= g.offline, format!("soft vote below a single modality: {detail}"))?;
    check(g.conditional >= g.soft - 0.02, format!("conditional fusion too low: {detail}"))?;
    check(g.elapsed < Duration::from_secs(180), format!("too slow: {detail}"))?;
    Ok(detail)
}

fn sweep_mechanics(g: &Golden) -> Outcome {
    let taus = [0.1, 0.15, 0.2, 0.25, 0.3];
    let cfg = ExperimentConfig::new(
        Algo::Svm,
        FusionConfig::new(FusionMode::ConditionalFusion, 0.2).unwrap(),
        GOLDEN_SEED,
    );
    let sweep = sweep_threshold(&g.set, &taus, &cfg).map_err(|e| e.to_string())?;
    let counts: Vec<usize> = sweep.rows.iter().map(|r| r.triggered).collect();
    check(counts.windows(2).all(|w| w[0] <= w[1]), format!("trigger counts {counts:?}"))?;
    check(
        sweep.models_trained == g.conditional_models,
        format!(
            "sweep trained {} models, a single run trains {}",
            sweep.models_trained, g.conditional_models
        ),
    )?;
    let at_02 = &sweep.rows[2].report;
    check(
        (at_02.accuracy - g.conditional).abs() < 1e-15,
        "sweep row for 0.2 differs from the single run",
    )?;
    Ok(format!(
        "triggered {counts:?} of {}; {} trainings, same as one run",
        g.set.len(),
        sweep.models_trained
    ))
}

// ---------------------------------------------------------------- real corpus

fn real_corpus() -> Option<Outcome> {
    let dir = PathBuf::from(std::env::var_os("GRAPHOFUSE_REAL_CORPUS")?);
    Some((|| {
        let meta = std::fs::read(dir.join("metadata.csv")).map_err(|e| e.to_string())?;
        let ds = load_dataset(&dir.join("streams"), &meta, &Task::Pseudoword, &FormatConfig::default())
            .map_err(|e| e.to_string())?;
        let set = zoning_set(&ds, 0.01, &RasterConfig::default(), 16, Execution::default()).map_err(|e| e.to_string())?;
        let run = |mode, tau| {
            run_experiment(
                &set,
                &ExperimentConfig::new(Algo::Svm, FusionConfig::new(mode, tau).unwrap(), GOLDEN_SEED),
            )
            .map(|o| o.report)
            .map_err(|e| e.to_string())
        };
        let cond = run(FusionMode::ConditionalFusion, 0.2)?;
        let soft = run(FusionMode::SoftVote, 0.0)?;
        let detail = format!(
            "conditional acc {:.3} recall {:.3}; soft vote acc {:.3}",
            cond.accuracy, cond.recall, soft.accuracy
        );
        check((cond.accuracy - 0.888).abs() <= 0.02, detail.clone())?;
        check((cond.recall - 0.900).abs() <= 0.03, detail.clone())?;
        check((soft.accuracy - 0.856).abs() <= 0.02, detail.clone())?;
        Ok(detail)
    })())
}

fn main() {
    let mut failed = 0;
    let mut report = |name: &str, outcome: Outcome| match outcome {
        Ok(detail) => println!("PASS  {name}: {detail}"),
        Err(detail) => {
            failed += 1;
            println!("FAIL  {name}: {detail}");
        }
    };
    report("fusion correctness", fusion_correctness());
    report("soft-vote oracle", soft_vote_oracle());
    report("svm optimization", svm_optimization());
    report("gbt correctness", gbt_correctness());
    report("feature correctness", feature_correctness());
    report("raster correctness", raster_correctness());
    report("leakage", leakage());
    match golden() {
        Ok(g) => {
            report("end-to-end multimodal lift", end_to_end(&g));
            report("threshold-sweep mechanics", sweep_mechanics(&g));
        }
        Err(e) => {
            report("end-to-end multimodal lift", Err(e.clone()));
            report("threshold-sweep mechanics", Err(e));
        }
    }
    // manual check, reported but never gating
    match real_corpus() {
        None => println!("SKIP  real-corpus reproduction: set GRAPHOFUSE_REAL_CORPUS to a corpus directory"),
        Some(Ok(d)) => println!("PASS  real-corpus reproduction (manual): {d}"),
        Some(Err(d)) => println!("FAIL  real-corpus reproduction (manual, not gating): {d}"),
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}

//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use fuselab::checkpoint::{load_model, save_model};
use fuselab::data::{augment, class_names, load_chip, save_chip, split, synth_generate, SplitFractions, SynthConfig};
use fuselab::eval::{compare_paradigms, metrics_from_cm, tables_from_csv, tables_to_csv, MetricsTable, TieBreak};
use fuselab::fusion::{
    argmax, build_model_with, derive_weights, late_aggregate_mean, late_aggregate_weighted, predict, Backbone, FusionModel,
    ModelSpec, Paradigm, ParadigmKind,
};
use fuselab::nn::{gradient_check, softmax, Network};
use fuselab::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

/// Rounding tolerance on published two-decimal table values.
const TABLE_TOLERANCE: f64 = 0.015;
/// Central-difference step for the gradient check.
const GRAD_EPSILON: f64 = 1e-3;
/// Maximum relative error between analytic and numeric gradients.
const GRAD_TOLERANCE: f64 = 1e-4;
/// Probability vectors must sum to one within this bound.
const SOFTMAX_SUM_TOLERANCE: f64 = 1e-6;
/// Allowed per-class recall shortfall of weighted late fusion below the better single modality.
const RECALL_SLACK: f64 = 0.05;
/// Number of random prediction pairs for the aggregation properties.
const PREDICTION_PAIRS: usize = 1000;
/// Seed of the end-to-end dataset and training run.
const RUN_SEED: &str = "42";

type Outcome = Result<String, String>;

struct Criterion {
    id: u8,
    name: &'static str,
    limit: Duration,
    run: fn() -> Outcome,
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fuselab(dir: &Path, args: &[&str]) -> Result<String, String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fuselab"));
    for (k, _) in std::env::vars() {
        if k.starts_with("FUSELAB_") {
            cmd.env_remove(k);
        }
    }
    let out = cmd.current_dir(dir).args(args).arg("--quiet").output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("fuselab {args:?} failed: {}", String::from_utf8_lossy(&out.stderr).trim()));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn read_tables(path: &Path) -> Result<Vec<(String, MetricsTable)>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    tables_from_csv(&text, path).map_err(|e| e.to_string())
}

fn table_reproduction() -> Outcome {
    let mut worst = 0.0f64;
    for (name, fractions) in &REFERENCE_CONFUSION {
        let computed = metrics_from_cm(&reference_counts(fractions));
        let published = reference_table(name);
        for (c, p) in computed.classes.iter().zip(&published.classes) {
            for (label, got, want) in [("precision", c.precision, p.precision), ("recall", c.recall, p.recall), ("f1", c.f1, p.f1)] {
                let (got, want) = (got.ok_or("undefined metric")?, want.ok_or("missing published value")?);
                worst = worst.max((got - want).abs());
                ensure((got - want).abs() <= TABLE_TOLERANCE, || format!("{name}/{}/{label}: {got:.4} vs {want:.2}", c.class))?;
            }
        }
    }
    let block = |n: &str| REFERENCE_CONFUSION.iter().find(|(k, _)| *k == n).unwrap().1;
    for (name, class, want) in [("single-b", 0, 0.97), ("single-a", 4, 1.00), ("joint", 2, 0.68)] {
        let got = metrics_from_cm(&reference_counts(&block(name))).classes[class].precision.unwrap_or(f64::NAN);
        ensure((got - want).abs() <= TABLE_TOLERANCE, || format!("{name} class {class} precision {got:.4} vs {want:.2}"))?;
    }
    for (name, want) in &REFERENCE_AVERAGE_F1 {
        let got = metrics_from_cm(&reference_counts(&block(name))).macro_f1();
        worst = worst.max((got - want).abs());
        ensure((got - want).abs() <= TABLE_TOLERANCE, || format!("{name} average F1 {got:.4} vs {want:.2}"))?;
    }
    Ok(format!("90 cells, 3 spot checks and 6 averages; worst deviation {worst:.4}"))
}

fn weight_derivation() -> Outcome {
    let block = |n: &str| REFERENCE_CONFUSION.iter().find(|(k, _)| *k == n).unwrap().1;
    let w = derive_weights(&diagonal(&block("single-a")), &diagonal(&block("single-b"))).map_err(|e| e.to_string())?;
    ensure(w.alpha == [0.0, 1.0, 1.0, 1.0, 0.0] && w.beta == [1.0, 0.0, 0.0, 0.0, 1.0], || format!("{w:?}"))?;
    Ok(format!("alpha={:?} beta={:?}", w.alpha, w.beta))
}

fn published_verdict() -> Outcome {
    let t = TempDir::new().map_err(|e| e.to_string())?;
    let stdout = fuselab(t.path(), &["compare", "--from-tables", &reference_metrics_path().to_string_lossy(), "--out", "r"])?;
    let report = compare_paradigms(read_tables(&t.path().join("r/report.csv"))?).map_err(|e| e.to_string())?;
    let (first, second) = (&report.ranking[0], &report.ranking[1]);
    ensure(first.name == "late-weighted" && second.name == "joint", || format!("ranking {} then {}", first.name, second.name))?;
    ensure(report.tie_break == TieBreak::MinClassF1, || format!("decided by {:?}", report.tie_break))?;
    ensure((first.min_f1 - 0.76).abs() < 1e-12 && (second.min_f1 - 0.72).abs() < 1e-12, || {
        format!("minimum class F1 {} vs {}", first.min_f1, second.min_f1)
    })?;
    ensure(stdout.contains("verdict: late-weighted"), || stdout.clone())?;
    Ok(stdout.trim().to_string())
}

fn dataset_arithmetic() -> Outcome {
    let samples = synth_generate(&SynthConfig::new(100, 64, 2, 13, 5, 42)).map_err(|e| e.to_string())?;
    ensure(samples.len() == 500, || format!("{} samples", samples.len()))?;
    let s = split(samples, SplitFractions::default(), 42, true, class_names(5)).map_err(|e| e.to_string())?;
    ensure(s.sizes() == (425, 50, 25), || format!("split {:?}", s.sizes()))?;
    let a = augment(&s, true).map_err(|e| e.to_string())?;
    ensure(a.sizes() == (1700, 200, 100), || format!("augmented {:?}", a.sizes()))?;
    Ok("500 -> 425/50/25 -> 1700/200/100".into())
}

fn gradient_correctness() -> Outcome {
    let spec = ModelSpec {
        width: 8,
        height: 8,
        p: 2,
        b: 3,
        classes: 5,
    };
    let backbone = Backbone {
        conv_channels: vec![2, 3, 2],
        dense_units: 6,
        kernel: 3,
    };
    let mut worst = 0.0f64;
    let mut checked = 0;
    for (i, kind) in ParadigmKind::ALL.into_iter().enumerate() {
        for &role in FusionModel::roles(kind) {
            let arch = FusionModel::architecture(&spec, &backbone, role);
            let mut rng = ChaCha8Rng::seed_from_u64(500 + i as u64);
            let net: Network<f64> = Network::init(&arch, &mut rng).map_err(|e| e.to_string())?;
            let inputs: Vec<Tensor<f64>> = arch
                .inputs
                .iter()
                .map(|s| {
                    let n = s.height * s.width * s.channels;
                    Tensor::new(s.shape().to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
                })
                .collect();
            let refs: Vec<&Tensor<f64>> = inputs.iter().collect();
            let c = (500 + i) % spec.classes;
            let truth: Vec<f64> = (0..spec.classes).map(|k| if k == c { 1.0 } else { 0.0 }).collect();
            let report = gradient_check(&net, &refs, &truth, GRAD_EPSILON, GRAD_TOLERANCE).map_err(|e| e.to_string())?;
            worst = worst.max(report.max_rel_error);
            checked += 1;
            ensure(report.passed, || format!("{kind}/{}: {report:?}", role.name()))?;
        }
    }
    Ok(format!("{checked} networks, worst relative error {worst:.2e}"))
}

fn random_distribution(rng: &mut ChaCha8Rng, classes: usize) -> Vec<f32> {
    let logits: Vec<f32> = (0..classes).map(|_| rng.gen_range(-6.0..6.0)).collect();
    softmax(&logits)
}

fn fusion_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_sum = 0.0f64;
    for _ in 0..PREDICTION_PAIRS {
        let classes = rng.gen_range(2..8);
        let a = random_distribution(&mut rng, classes);
        let b = random_distribution(&mut rng, classes);
        for p in [&a, &b] {
            let sum: f64 = p.iter().map(|&v| v as f64).sum();
            worst_sum = worst_sum.max((sum - 1.0).abs());
        }

        let alpha: Vec<f64> = (0..classes).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect();
        let beta: Vec<f64> = alpha.iter().map(|a| 1.0 - a).collect();
        let weighted = late_aggregate_weighted(&a, &b, &alpha, &beta).map_err(|e| e.to_string())?;
        let selected: Vec<f32> = (0..classes).map(|k| if alpha[k] == 1.0 { a[k] } else { b[k] }).collect();
        ensure(weighted == selected, || format!("weighted {weighted:?} vs selected {selected:?}"))?;

        let mean = late_aggregate_mean(&a, &b).map_err(|e| e.to_string())?;
        let sum: Vec<f32> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        ensure(argmax(&mean) == argmax(&sum), || format!("argmax differs for {a:?} {b:?}"))?;
    }
    ensure(worst_sum <= SOFTMAX_SUM_TOLERANCE, || format!("softmax sum off by {worst_sum:e}"))?;
    Ok(format!("{PREDICTION_PAIRS} pairs; worst softmax sum error {worst_sum:.1e}"))
}

fn paradigm_ordering() -> Outcome {
    let t = TempDir::new().map_err(|e| e.to_string())?;
    fuselab(t.path(), &["dataset", "synth", "--out", "d", "--seed", RUN_SEED])?;
    let start = Instant::now();
    let verdict = fuselab(t.path(), &["compare", "--data", "d", "--out", "c", "--seed", RUN_SEED])?;
    let elapsed = start.elapsed();
    let tables = read_tables(&t.path().join("c/report.csv"))?;
    let table = |name: &str| tables.iter().find(|(n, _)| n == name).map(|(_, t)| t).ok_or(format!("no {name} table"));
    let (sa, sb) = (table("single-a")?, table("single-b")?);
    let best_single = sa.macro_f1().max(sb.macro_f1());
    let mut summary = vec![format!("single-a {:.4}", sa.macro_f1()), format!("single-b {:.4}", sb.macro_f1())];
    for name in ["early", "joint", "late-mean", "late-weighted"] {
        let f = table(name)?.macro_f1();
        summary.push(format!("{name} {f:.4}"));
        ensure(f > best_single, || format!("{name} macro-F1 {f:.4} not above singles ({})", summary.join(", ")))?;
    }
    let lw = table("late-weighted")?;
    for ((w, a), b) in lw.classes.iter().zip(&sa.classes).zip(&sb.classes) {
        let floor = a.recall.unwrap_or(0.0).max(b.recall.unwrap_or(0.0)) - RECALL_SLACK;
        let got = w.recall.unwrap_or(0.0);
        ensure(got >= floor, || format!("late-weighted recall on {} is {got:.4}, floor {floor:.4}", w.class))?;
    }
    Ok(format!("{}; compare took {:.0}s; {}", summary.join(", "), elapsed.as_secs_f64(), verdict.trim()))
}

fn determinism() -> Outcome {
    let t = TempDir::new().map_err(|e| e.to_string())?;
    fuselab(t.path(), &["dataset", "synth", "--out", "d", "--per-class", "10", "--size", "16"])?;
    let reduced = ["compare", "--data", "d", "--epochs", "2"];
    let a = fuselab(t.path(), &[&reduced[..], &["--out", "a", "--jobs", "1"]].concat())?;
    let b = fuselab(t.path(), &[&reduced[..], &["--out", "b", "--jobs", "4"]].concat())?;
    ensure(a == b, || format!("verdicts differ: {a} / {b}"))?;
    let mut files = vec!["report.csv".to_string()];
    for kind in ParadigmKind::ALL {
        files.push(format!("{}/metrics.csv", kind.name()));
        files.push(format!("{}/confusion.csv", kind.name()));
    }
    for f in &files {
        let read = |d: &str| fs::read(t.path().join(d).join(f)).map_err(|e| format!("{f}: {e}"));
        ensure(read("a")? == read("b")?, || format!("{f} differs between runs"))?;
    }
    Ok(format!("{} CSV files byte-identical across two runs", files.len()))
}

fn round_trips() -> Outcome {
    let t = TempDir::new().map_err(|e| e.to_string())?;
    let samples = synth_generate(&SynthConfig::new(2, 16, 2, 13, 5, 7)).map_err(|e| e.to_string())?;
    for (i, s) in samples.iter().enumerate() {
        for chip in [&s.chip_a, &s.chip_b] {
            let path = t.path().join(format!("{i}.fchp"));
            save_chip(&path, chip).map_err(|e| e.to_string())?;
            let back = load_chip(&path).map_err(|e| e.to_string())?;
            let bits = |c: &Tensor| c.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            ensure(back.shape() == chip.shape() && bits(&back) == bits(chip), || format!("chip {i} changed"))?;
        }
    }

    let spec = ModelSpec {
        width: 16,
        height: 16,
        p: 2,
        b: 13,
        classes: 5,
    };
    for kind in ParadigmKind::ALL {
        let model = build_model_with(Paradigm::from_kind(kind, 5), spec, Backbone::default(), 11).map_err(|e| e.to_string())?;
        let dir = t.path().join(kind.name());
        save_model(&dir, &model).map_err(|e| e.to_string())?;
        let back = load_model(&dir).map_err(|e| e.to_string())?;
        for s in &samples {
            let (p, q) = (predict(&model, s).map_err(|e| e.to_string())?, predict(&back, s).map_err(|e| e.to_string())?);
            ensure(p == q, || format!("{kind} predictions changed after reload"))?;
        }
    }

    let tables = reference_tables();
    let text = tables_to_csv(&tables);
    let reparsed = tables_from_csv(&text, Path::new("report.csv")).map_err(|e| e.to_string())?;
    ensure(reparsed == tables, || "report tables changed after re-parse".into())?;
    ensure(tables_to_csv(&reparsed) == text, || "report text changed after re-parse".into())?;
    Ok(format!("{} chips, 6 model checkpoints, 6 report tables", samples.len() * 2))
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "published metric tables from published confusion matrices", limit: Duration::from_secs(1), run: table_reproduction },
        Criterion { id: 2, name: "late weights from published single-modality recalls", limit: Duration::from_secs(1), run: weight_derivation },
        Criterion { id: 3, name: "selection on published tables", limit: Duration::from_secs(1), run: published_verdict },
        Criterion { id: 4, name: "dataset sizes through split and augmentation", limit: Duration::from_secs(30), run: dataset_arithmetic },
        Criterion { id: 5, name: "analytic gradients against central differences", limit: Duration::from_secs(120), run: gradient_correctness },
        Criterion { id: 6, name: "late aggregation and softmax properties", limit: Duration::from_secs(30), run: fusion_properties },
        Criterion { id: 7, name: "fusion beats single modalities end to end", limit: Duration::from_secs(15 * 60), run: paradigm_ordering },
        Criterion { id: 8, name: "repeated compare runs are byte-identical", limit: Duration::from_secs(300), run: determinism },
        Criterion { id: 9, name: "chip, checkpoint and report round-trips", limit: Duration::from_secs(60), run: round_trips },
    ];
    let only: Option<Vec<u8>> = std::env::args().skip(1).find(|a| !a.starts_with('-')).map(|a| a.split(',').filter_map(|x| x.parse().ok()).collect());
    let mut failures = 0;
    for c in &criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&c.id)) {
            continue;
        }
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let (passed, detail) = match outcome {
            Ok(d) if elapsed <= c.limit => (true, d),
            Ok(d) => (false, format!("{d}; exceeded {}s limit", c.limit.as_secs())),
            Err(e) => (false, e),
        };
        failures += usize::from(!passed);
        println!(
            "criterion {} {} [{:.1}s] {}: {detail}",
            c.id,
            if passed { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            c.name
        );
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}

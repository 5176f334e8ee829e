//! End-to-end acceptance suite. Each criterion prints one PASS/FAIL line
//! to stderr, bypassing output capture; the test fails if any criterion
//! fails.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use holosub::datagen::{count_components, load_dataset, pearson, VariantId};
use holosub::gradcheck::{central_difference, relative_error};
use holosub::hrr::{bind, exact_inverse, project, HrrVector};
use holosub::loss::{ce_loss, hrr_loss, score_and_gradient, BatchPrediction, Codebook, DecodeMode};
use holosub::nn::{Head, Mode, ModelSpec, ModelState, VitSpec};
use holosub::rng::CounterRng;
use holosub_cli::commands::bench::{bench, bound_limit, BenchReport, BENCH_FILE};
use holosub_cli::commands::saliency::{SaliencyReport, REPORT_FILE};
use holosub_cli::commands::{TABLE_FILE, TABLE_TEXT_FILE};
use holosub_cli::manifest::RunManifest;
use holosub_cli::table::{AccuracyTable, Flag};

const ROUND_TRIP_TOL: f64 = 1e-6;
const ROUND_TRIP_SECONDS: f64 = 5.0;
const BOUND_SECONDS: f64 = 10.0;
const EXACT_SCORE: f64 = 0.999;
const NOISY_ACCURACY: f64 = 0.99;
const LOSS_GRAD_TOL: f64 = 1e-4;
const NET_GRAD_TOL: f64 = 1e-3;
const GRAD_INSTANCES: u64 = 10;
const LOSS_STEP: f64 = 1e-6;
// small enough that a step rarely straddles a ReLU or max-pool switch
const NET_STEP: f64 = 1e-6;
const GRAD_SECONDS: f64 = 120.0;
const CORR_LIMIT: f64 = 0.05;
const FIT_EPOCHS: usize = 50;
const FIT_SECONDS: f64 = 600.0;
const DATA_SEED: &str = "7";

type Outcome = Result<String, String>;

fn holosub(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_holosub"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| format!("spawn: {e}"))?;
    if !out.status.success() {
        return Err(format!("holosub {args:?} exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// Shared state across criteria: the generated data and trained runs.
struct Workspace {
    root: PathBuf,
}

impl Workspace {
    fn data(&self) -> PathBuf {
        self.root.join("data")
    }
    fn run(&self, loss: &str) -> PathBuf {
        self.root.join(format!("train_{loss}"))
    }
    fn eval(&self) -> PathBuf {
        self.root.join("eval")
    }
    fn saliency(&self) -> PathBuf {
        self.root.join("saliency")
    }
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let report = bench(0, 1000).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for dim in [8, 64, 100] {
        let row = report.get("round_trip", dim).ok_or("missing round_trip row")?;
        check(row.trials == 1000, || format!("d={dim}: {} trials", row.trials))?;
        worst = worst.max(row.value);
        check(row.value < ROUND_TRIP_TOL, || format!("d={dim}: max error {:e}", row.value))?;
    }
    // independent oracle: unbinding with the exact inverse, computed here
    let mut rng = CounterRng::new(99);
    for dim in [8, 64, 100] {
        for _ in 0..50 {
            let k = project(&HrrVector::new((0..dim).map(|_| rng.next_normal() / (dim as f64).sqrt()).collect()).unwrap()).unwrap();
            let v = HrrVector::new((0..dim).map(|_| rng.next_normal()).collect()).unwrap();
            let back = bind(&bind(&k, &v).unwrap(), &exact_inverse(&k).unwrap()).unwrap();
            let err = back.values().iter().zip(v.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            check(err < ROUND_TRIP_TOL, || format!("oracle d={dim}: {err:e}"))?;
        }
    }
    let rt: f64 = report.rows.iter().filter(|r| r.check == "round_trip").map(|r| r.seconds).sum();
    check(rt < ROUND_TRIP_SECONDS, || format!("round trips took {rt:.2}s"))?;
    Ok(format!("max error {worst:.2e} < {ROUND_TRIP_TOL:e} over 3x1000 pairs, {rt:.2}s (bench total {:.2}s)", secs(t.elapsed())))
}

fn criterion_2() -> Outcome {
    let limit = 4.0 * 2f64.sqrt() / 8.0;
    check((bound_limit(64) - limit).abs() < 1e-15 && (limit - 0.70711).abs() < 1e-5, || "bound formula".into())?;
    let t = Instant::now();
    let mut worst = 0.0f64;
    let mut over = 0usize;
    for s in 0..1000u64 {
        let book = Codebook::new(6, 64, CounterRng::derive(77, &[s]).next_u64()).map_err(|e| e.to_string())?;
        for target in book.targets() {
            for &x in target.values() {
                worst = worst.max(x.abs());
                if x.abs() > limit {
                    over += 1;
                }
            }
        }
    }
    let took = secs(t.elapsed());
    check(over == 0, || format!("{over} target entries exceed {limit:.5}"))?;
    check(took < BOUND_SECONDS, || format!("took {took:.2}s"))?;
    Ok(format!("0 of 384000 entries exceed {limit:.5} (max {worst:.4}) over 1000 codebooks, {took:.2}s"))
}

fn criterion_3() -> Outcome {
    let report = bench(3, 1000).map_err(|e| e.to_string())?;
    let exact = report.get("exact_decode", 64).ok_or("missing exact_decode")?;
    check(exact.pass && exact.value >= EXACT_SCORE && exact.trials == 600, || format!("exact decode lowest score {}", exact.value))?;
    let noisy = report.get("noisy_decode", 64).ok_or("missing noisy_decode")?;
    check(noisy.trials == 1000 && noisy.value >= NOISY_ACCURACY, || format!("noisy accuracy {}", noisy.value))?;
    Ok(format!(
        "exact targets: 600/600 decoded, lowest score {:.6}; sigma 0.1 noise: accuracy {:.3} over 1000 trials",
        exact.value, noisy.value
    ))
}

fn worst_loss_grad(f: impl Fn(&[f64]) -> (f64, Vec<f64>), x: &[f64]) -> f64 {
    let (_, g) = f(x);
    let numeric = central_difference(|v| f(v).0, x, LOSS_STEP);
    g.iter().zip(&numeric).map(|(a, n)| relative_error(*a, *n, 1e-8)).fold(0.0, f64::max)
}

fn worst_net_grad(spec: &ModelSpec, seed: u64) -> f64 {
    let mut state = ModelState::init(spec, seed).unwrap();
    let mut rng = CounterRng::new(seed ^ 0x5A5A);
    for t in state.params_mut() {
        t.data_mut().iter_mut().for_each(|v| *v += rng.uniform(-0.05, 0.05));
    }
    let x: Vec<Vec<f64>> = (0..2).map(|_| (0..spec.input_len()).map(|_| rng.next_f64()).collect()).collect();
    let r: Vec<f64> = (0..2 * spec.output_len()).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let f = |s: &ModelState, x: &[Vec<f64>]| -> f64 { s.predict(x).unwrap().iter().zip(&r).map(|(a, b)| a * b).sum() };
    let grads = state.backward(&state.forward(&x, Mode::Eval).unwrap(), &r).unwrap();
    let mut worst = 0.0f64;
    for k in 0..state.params().len() {
        let n = state.params()[k].len();
        for j in 0..3 {
            let c = (j * 104_729 + k * 31 + seed as usize) % n;
            let base = state.params()[k].data()[c];
            let numeric = central_difference(
                |v| {
                    let mut s = state.clone();
                    s.params_mut()[k].data_mut()[c] = v[0];
                    f(&s, &x)
                },
                &[base],
                NET_STEP,
            )[0];
            worst = worst.max(relative_error(grads[k].data()[c], numeric, 1e-6));
        }
    }
    let gx = state.input_gradient(&x[0], &r[..spec.output_len()]).unwrap();
    for c in (seed as usize % 13..spec.input_len()).step_by(37) {
        let numeric = central_difference(
            |v| {
                let mut xi = x[0].clone();
                xi[c] = v[0];
                state.predict(&[xi]).unwrap().iter().zip(&r).map(|(a, b)| a * b).sum()
            },
            &[x[0][c]],
            NET_STEP,
        )[0];
        worst = worst.max(relative_error(gx[c], numeric, 1e-6));
    }
    worst
}

fn criterion_4() -> Outcome {
    let t = Instant::now();
    let (mut hrr, mut ce, mut sim, mut cnn, mut vit) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for i in 0..GRAD_INSTANCES {
        let mut rng = CounterRng::new(1000 + i);
        let book = Codebook::new(6, 64, i).unwrap();
        let labels: Vec<usize> = (0..3).map(|b| (b + i as usize) % 6).collect();
        let y: Vec<f64> = (0..3 * 64).map(|_| rng.uniform(-0.5, 0.5)).collect();
        hrr = hrr.max(worst_loss_grad(
            |v| {
                let o = hrr_loss(&BatchPrediction::new(64, v.to_vec()).unwrap(), &labels, &book).unwrap();
                (o.loss, o.grad)
            },
            &y,
        ));
        let logits: Vec<f64> = (0..3 * 6).map(|_| rng.uniform(-3.0, 3.0)).collect();
        ce = ce.max(worst_loss_grad(
            |v| {
                let o = ce_loss(v, &labels, 6).unwrap();
                (o.loss, o.grad)
            },
            &logits,
        ));
        let row = &y[..64];
        sim = sim.max(worst_loss_grad(|v| score_and_gradient(v, &book, labels[0], DecodeMode::ExactInverse).unwrap(), row));
        let head = if i % 2 == 0 { Head::Hrr { feature_dim: 64 } } else { Head::Ce { num_classes: 6 } };
        cnn = cnn.max(worst_net_grad(&ModelSpec::cnn(32, head), i));
        vit = vit.max(worst_net_grad(&ModelSpec::vit(32, VitSpec::desk(), head), i));
    }
    let took = secs(t.elapsed());
    let detail = format!(
        "max rel err hrr_loss {hrr:.1e}, ce_loss {ce:.1e}, decode similarity {sim:.1e}, small CNN {cnn:.1e}, tiny ViT {vit:.1e} over {GRAD_INSTANCES} instances each, {took:.1}s"
    );
    check(hrr <= LOSS_GRAD_TOL && ce <= LOSS_GRAD_TOL && sim <= LOSS_GRAD_TOL, || detail.clone())?;
    check(cnn <= NET_GRAD_TOL && vit <= NET_GRAD_TOL, || detail.clone())?;
    check(took < GRAD_SECONDS, || detail.clone())?;
    Ok(detail)
}

fn criterion_5(ws: &Workspace) -> Outcome {
    holosub(&["gen", "--seed", DATA_SEED, "--variant", "all", "--out", p(&ws.data())])?;
    let base = load_dataset(&ws.data().join("train_circles")).map_err(|e| e.to_string())?;
    check(base.len() == 600, || format!("{} training images", base.len()))?;
    let labels: Vec<f64> = base.manifest.records.iter().map(|r| r.label as f64).collect();
    let white: Vec<f64> = base.images.iter().map(|i| i.white_count() as f64).collect();
    let rho = pearson(&labels, &white);
    check(rho.abs() < CORR_LIMIT, || format!("corr(label, white) = {rho:.4}"))?;

    let mut solid = 0;
    for v in VariantId::ALL.into_iter().filter(|v| v.is_solid()) {
        let ds = load_dataset(&ws.data().join(v.name())).map_err(|e| e.to_string())?;
        for (r, img) in ds.manifest.records.iter().zip(&ds.images) {
            let n = count_components(img, r.scene.polarity.foreground());
            check(n == r.label, || format!("{v} image {}: {n} components, label {}", r.index, r.label))?;
            solid += 1;
        }
    }

    let swap = load_dataset(&ws.data().join("color_swap")).map_err(|e| e.to_string())?;
    for (a, b) in base.images.iter().zip(&swap.images) {
        check(a.pixels.iter().zip(&b.pixels).all(|(x, y)| *y == 1.0 - *x), || "color_swap is not an exact inversion".into())?;
    }
    Ok(format!("|corr(label, white)| = {:.4} < {CORR_LIMIT}; components == label on {solid}/{solid} solid images; 600/600 color_swap inversions exact", rho.abs()))
}

fn train_log_accuracies(dir: &Path) -> Vec<f64> {
    let text = std::fs::read_to_string(dir.join("train_log.txt")).unwrap();
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| {
            let row = holosub::kv::parse_row(l).unwrap();
            holosub::kv::row_get(&row, "train_accuracy").unwrap().parse().unwrap()
        })
        .collect()
}

fn criterion_6(ws: &Workspace) -> Outcome {
    let mut parts = Vec::new();
    let mut failures = Vec::new();
    for loss in ["hrr", "ce"] {
        let t = Instant::now();
        holosub(&["train", "--seed", DATA_SEED, "--loss", loss, "--model", "cnn", "--data", p(&ws.data()), "--out", p(&ws.run(loss))])?;
        let took = secs(t.elapsed());
        let m = RunManifest::read(&ws.run(loss)).map_err(|e| e.to_string())?;
        let acc = train_log_accuracies(&ws.run(loss));
        let first = acc.iter().position(|&a| a == 1.0);
        let last = *acc.last().unwrap();
        check(m.summary.get("train_images") == Some("600"), || "train set is not 600 images".into())?;
        parts.push(format!(
            "{loss}: final {last:.4}, first 100% at epoch {}, {took:.0}s",
            first.map(|e| (e + 1).to_string()).unwrap_or("never".into())
        ));
        if acc.len() > FIT_EPOCHS || last != 1.0 || took > FIT_SECONDS {
            failures.push(loss);
        }
    }
    let detail = parts.join("; ");
    check(failures.is_empty(), || format!("{detail} (failed: {failures:?})"))?;
    Ok(detail)
}

fn criterion_7(ws: &Workspace) -> Outcome {
    let (hrr, ce) = (ws.run("hrr"), ws.run("ce"));
    let stdout = holosub(&["eval", "--seed", DATA_SEED, "--data", p(&ws.data()), "--run", p(&hrr), "--run", p(&ce), "--out", p(&ws.eval())])?;
    let text = std::fs::read_to_string(ws.eval().join(TABLE_FILE)).map_err(|e| e.to_string())?;
    let table = AccuracyTable::parse_machine(&text).map_err(|e| e.to_string())?;
    check(table.runs.len() == 2, || "expected two runs".into())?;
    check(table.columns.len() == 14, || format!("{} columns", table.columns.len()))?;
    for v in VariantId::EVAL {
        for run in ["HRR", "CE"] {
            let col = table.columns.iter().find(|c| c.variant == v.name() && c.run == run).ok_or(format!("no column {v}/{run}"))?;
            check(col.total.iter().all(|&n| n == 100), || format!("{v}/{run}: class totals {:?}", col.total))?;
            // the flag rule, recomputed from the counts
            let acc = |k: usize| col.correct[k] as f64 / col.total[k] as f64;
            let mean_pred = |k: usize| col.pred_sum[k] as f64 / col.total[k] as f64;
            let over = acc(5) - acc(4) > 0.2 && mean_pred(4) > 5.5;
            check(over == (col.flag(6) == Some(Flag::Overcount)), || format!("{v}/{run}: overcount flag disagrees with counts"))?;
        }
    }
    let text_table = std::fs::read_to_string(ws.eval().join(TABLE_TEXT_FILE)).map_err(|e| e.to_string())?;
    check(stdout.contains(&text_table), || "printed table differs from the written one".into())?;
    for v in VariantId::EVAL {
        check(text_table.contains(v.name()), || format!("text table lacks {v}"))?;
    }
    let m = RunManifest::read(&ws.eval()).map_err(|e| e.to_string())?;
    let h = m.summary.get("mean.squares.HRR").ok_or("squares HRR mean not archived")?;
    let c = m.summary.get("mean.squares.CE").ok_or("squares CE mean not archived")?;
    let (h, c): (f64, f64) = (h.parse().unwrap(), c.parse().unwrap());
    let flags = m.summary.get("flags").unwrap_or("");
    Ok(format!(
        "7 variants x 2 runs x 6 classes; squares mean accuracy HRR {h:.4} vs CE {c:.4} (archived, no threshold); flags [{flags}]"
    ))
}

/// Replays the manifest in `dir` into a fresh directory and compares every
/// recorded output byte for byte.
fn replay(dir: &Path, cmd: &str, into: &Path) -> Result<usize, String> {
    let original = RunManifest::read(dir).map_err(|e| e.to_string())?;
    holosub(&[cmd, "--config", p(&dir.join("run_manifest.txt")), "--out", p(into)])?;
    let again = RunManifest::read(into).map_err(|e| e.to_string())?;
    check(original.config == again.config, || format!("{cmd}: replayed config differs"))?;
    check(original.outputs == again.outputs, || format!("{cmd}: output digests differ"))?;
    for (rel, _) in &original.outputs {
        let a = std::fs::read(dir.join(rel)).map_err(|e| e.to_string())?;
        let b = std::fs::read(into.join(rel)).map_err(|e| e.to_string())?;
        check(a == b, || format!("{cmd}: {rel} differs"))?;
    }
    Ok(original.outputs.len())
}

fn criterion_8(ws: &Workspace) -> Outcome {
    holosub(&["saliency", "--run", p(&ws.run("hrr")), "--seed", DATA_SEED, "--data", p(&ws.data()), "--variant", "squares", "--out", p(&ws.saliency())])?;
    let report = SaliencyReport::parse(&std::fs::read_to_string(ws.saliency().join(REPORT_FILE)).unwrap()).map_err(|e| e.to_string())?;
    check(!report.rows.is_empty(), || "empty saliency report".into())?;
    let bench_dir = ws.root.join("bench");
    holosub(&["vsa-bench", "--trials", "200", "--out", p(&bench_dir)])?;
    BenchReport::parse(&std::fs::read_to_string(bench_dir.join(BENCH_FILE)).unwrap()).map_err(|e| e.to_string())?;

    let replays = ws.root.join("replay");
    let mut counts = Vec::new();
    for (dir, cmd) in [
        (ws.data(), "gen"),
        (ws.run("hrr"), "train"),
        (ws.eval(), "eval"),
        (ws.saliency(), "saliency"),
        (bench_dir, "vsa-bench"),
    ] {
        let n = replay(&dir, cmd, &replays.join(cmd))?;
        counts.push(format!("{cmd} {n} files"));
    }
    Ok(format!("byte-identical replays: {}", counts.join(", ")))
}

#[test]
fn acceptance() {
    let tmp = tempfile::tempdir().unwrap();
    let ws = Workspace { root: tmp.path().to_path_buf() };
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("1 vsa round trip", Box::new(criterion_1)),
        ("2 bound range", Box::new(criterion_2)),
        ("3 decode fidelity", Box::new(criterion_3)),
        ("4 gradient oracles", Box::new(criterion_4)),
        ("5 dataset invariants", Box::new(|| criterion_5(&ws))),
        ("6 training fit", Box::new(|| criterion_6(&ws))),
        ("7 table pipeline", Box::new(|| criterion_7(&ws))),
        ("8 determinism", Box::new(|| criterion_8(&ws))),
    ];
    let mut failed = Vec::new();
    for (name, f) in &criteria {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| f())).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or("panic".into()))
        });
        let line = match outcome {
            Ok(detail) => format!("criterion {name}: PASS ({:.1}s) {detail}", secs(t.elapsed())),
            Err(detail) => {
                failed.push(*name);
                format!("criterion {name}: FAIL ({:.1}s) {detail}", secs(t.elapsed()))
            }
        };
        let _ = writeln!(std::io::stderr(), "{line}");
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

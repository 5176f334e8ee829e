use std::path::Path;
use std::time::Instant;

use holosub::hrr::{bind, project, sample_vector, unbind};
use holosub::kv::{parse_row, render_row, row_get};
use holosub::loss::{decode, BatchPrediction, Codebook};
use holosub::rng::CounterRng;

use super::write_file;
use crate::config::NUM_CLASSES;
use crate::error::{invalid, Result};
use crate::manifest::RunManifest;

pub const BENCH_FILE: &str = "vsa_report.txt";
pub const BENCH_HEADER: &str = "# holosub vsa report v1";

pub const ROUND_TRIP_DIMS: [usize; 3] = [8, 64, 100];
pub const ROUND_TRIP_LIMIT: f64 = 1e-6;
pub const BOUND_DIM: usize = 64;
pub const EXACT_SCORE_MIN: f64 = 0.999;
pub const EXACT_SEEDS: usize = 100;
pub const NOISE_SIGMA: f64 = 0.1;
pub const NOISE_ACCURACY_MIN: f64 = 0.99;

const TAG_ROUND_TRIP: u64 = 0x5254;
const TAG_BOUND: u64 = 0x424e;
const TAG_EXACT: u64 = 0x4558;
const TAG_NOISE: u64 = 0x4e53;

/// Returns `4√2/√dim`.
pub fn bound_limit(dim: usize) -> f64 {
    4.0 * 2f64.sqrt() / (dim as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub check: String,
    pub dim: usize,
    pub trials: usize,
    pub value: f64,
    pub limit: f64,
    /// `true` when `value` is on the right side of `limit`.
    pub pass: bool,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn get(&self, check: &str, dim: usize) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.check == check && r.dim == dim)
    }

    pub fn render(&self) -> String {
        let mut out = format!("{BENCH_HEADER}\n");
        for r in &self.rows {
            out.push_str(&render_row(&[
                ("check", r.check.clone()),
                ("dim", r.dim.to_string()),
                ("trials", r.trials.to_string()),
                ("value", format!("{:?}", r.value)),
                ("limit", format!("{:?}", r.limit)),
                ("pass", r.pass.to_string()),
                ("seconds", format!("{:?}", r.seconds)),
            ]));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(BENCH_HEADER) {
            return Err(invalid("not a vsa report"));
        }
        let mut rows = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let row = parse_row(line).map_err(invalid)?;
            let get = |k: &str| row_get(&row, k).ok_or_else(|| invalid(format!("vsa report lacks `{k}`")));
            let bad = |k: &str| invalid(format!("bad `{k}` in vsa report"));
            rows.push(BenchRow {
                check: get("check")?.into(),
                dim: get("dim")?.parse().map_err(|_| bad("dim"))?,
                trials: get("trials")?.parse().map_err(|_| bad("trials"))?,
                value: get("value")?.parse().map_err(|_| bad("value"))?,
                limit: get("limit")?.parse().map_err(|_| bad("limit"))?,
                pass: get("pass")?.parse().map_err(|_| bad("pass"))?,
                seconds: get("seconds")?.parse().map_err(|_| bad("seconds"))?,
            });
        }
        Ok(Self { rows })
    }
}

/// Worst `‖unbind(bind(k, v), k) − v‖∞` over projected keys and arbitrary
/// values.
fn round_trip(seed: u64, dim: usize, trials: usize) -> Result<f64> {
    let mut worst = 0.0f64;
    for t in 0..trials {
        let mut rng = CounterRng::derive(seed, &[TAG_ROUND_TRIP, dim as u64, t as u64]);
        let k = project(&sample_vector(dim, &mut rng)?)?;
        let v = sample_vector(dim, &mut rng)?;
        let back = unbind(&bind(&k, &v)?, &k)?;
        let err = back.values().iter().zip(v.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(err);
    }
    Ok(worst)
}

fn bound_range(seed: u64, trials: usize) -> Result<f64> {
    let mut worst = 0.0f64;
    for t in 0..trials {
        let book = Codebook::new(NUM_CLASSES, BOUND_DIM, CounterRng::derive(seed, &[TAG_BOUND, t as u64]).next_u64())?;
        worst = worst.max(book.max_abs_target());
    }
    Ok(worst)
}

/// Lowest winning score over exact targets; `None` if any target decodes
/// to the wrong class.
fn exact_decode(seed: u64, dim: usize) -> Result<Option<f64>> {
    let mut lowest = f64::INFINITY;
    for s in 0..EXACT_SEEDS {
        let book = Codebook::new(NUM_CLASSES, dim, CounterRng::derive(seed, &[TAG_EXACT, s as u64]).next_u64())?;
        let data: Vec<f64> = book.targets().iter().flat_map(|t| t.values().to_vec()).collect();
        let d = decode(&BatchPrediction::new(dim, data)?, &book)?;
        for c in 0..NUM_CLASSES {
            if d.argmax[c] != c {
                return Ok(None);
            }
            lowest = lowest.min(d.scores.row(c)[c]);
        }
    }
    Ok(Some(lowest))
}

fn noisy_decode(seed: u64, dim: usize, trials: usize) -> Result<f64> {
    let mut correct = 0;
    for t in 0..trials {
        let mut rng = CounterRng::derive(seed, &[TAG_NOISE, t as u64]);
        let book = Codebook::new(NUM_CLASSES, dim, rng.next_u64())?;
        let c = t % NUM_CLASSES;
        let noisy: Vec<f64> = book.targets()[c].values().iter().map(|x| x + NOISE_SIGMA * rng.next_normal()).collect();
        let d = decode(&BatchPrediction::new(dim, noisy)?, &book)?;
        if d.argmax[0] == c {
            correct += 1;
        }
    }
    Ok(correct as f64 / trials as f64)
}

pub fn bench(seed: u64, trials: usize) -> Result<BenchReport> {
    let mut rows = Vec::new();
    for dim in ROUND_TRIP_DIMS {
        let t = Instant::now();
        let value = round_trip(seed, dim, trials)?;
        rows.push(BenchRow {
            check: "round_trip".into(),
            dim,
            trials,
            value,
            limit: ROUND_TRIP_LIMIT,
            pass: value < ROUND_TRIP_LIMIT,
            seconds: t.elapsed().as_secs_f64(),
        });
    }
    let t = Instant::now();
    let value = bound_range(seed, trials)?;
    let limit = bound_limit(BOUND_DIM);
    rows.push(BenchRow {
        check: "bound_range".into(),
        dim: BOUND_DIM,
        trials,
        value,
        limit,
        pass: value <= limit,
        seconds: t.elapsed().as_secs_f64(),
    });
    let t = Instant::now();
    let lowest = exact_decode(seed, BOUND_DIM)?;
    rows.push(BenchRow {
        check: "exact_decode".into(),
        dim: BOUND_DIM,
        trials: EXACT_SEEDS * NUM_CLASSES,
        value: lowest.unwrap_or(f64::NEG_INFINITY),
        limit: EXACT_SCORE_MIN,
        pass: lowest.is_some_and(|v| v >= EXACT_SCORE_MIN),
        seconds: t.elapsed().as_secs_f64(),
    });
    let t = Instant::now();
    let acc = noisy_decode(seed, BOUND_DIM, trials)?;
    rows.push(BenchRow {
        check: "noisy_decode".into(),
        dim: BOUND_DIM,
        trials,
        value: acc,
        limit: NOISE_ACCURACY_MIN,
        pass: acc >= NOISE_ACCURACY_MIN,
        seconds: t.elapsed().as_secs_f64(),
    });
    Ok(BenchReport { rows })
}

pub fn run(manifest: &mut RunManifest, out: &Path) -> Result<Vec<String>> {
    let cfg = &manifest.config;
    let report = bench(cfg.seed, cfg.trials)?;
    for r in &report.rows {
        println!(
            "{:<13} dim {:>3}  trials {:>4}  value {:<24e} limit {:<12e} {:>8.3}s  {}",
            r.check,
            r.dim,
            r.trials,
            r.value,
            r.limit,
            r.seconds,
            if r.pass { "pass" } else { "FAIL" }
        );
    }
    let all = report.rows.iter().all(|r| r.pass);
    manifest.summary.set("all_pass", all);
    // timings vary between runs, so they stay out of the written report
    let mut stable = report.clone();
    stable.rows.iter_mut().for_each(|r| r.seconds = 0.0);
    Ok(vec![write_file(out, BENCH_FILE, stable.render().as_bytes())?])
}

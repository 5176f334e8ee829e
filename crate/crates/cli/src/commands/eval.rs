use std::path::Path;

use holosub::datagen::Dataset;
use holosub::nn::train::classify;
use holosub::parallel;
use holosub::saliency::{boundary_mass, saliency_map};
use log::info;

use super::{dataset, eval_subset, write_file, TrainedRun, TABLE_FILE, TABLE_TEXT_FILE};
use crate::config::NUM_CLASSES;
use crate::error::Result;
use crate::manifest::RunManifest;
use crate::table::{AccuracyTable, Column, RunInfo, SaliencyStat};

/// Run labels: the loss name, disambiguated when several runs share one.
fn labels(runs: &[TrainedRun]) -> Vec<String> {
    let base: Vec<String> = runs.iter().map(|r| r.loss().name().to_uppercase()).collect();
    base.iter()
        .enumerate()
        .map(|(i, b)| {
            if base.iter().filter(|x| *x == b).count() > 1 {
                format!("{b}-{}", i + 1)
            } else {
                b.clone()
            }
        })
        .collect()
}

/// First `per_class` images of each class.
fn saliency_sample(ds: &Dataset, per_class: usize) -> Vec<usize> {
    let mut seen = [0usize; NUM_CLASSES];
    let mut out = Vec::new();
    for (i, r) in ds.manifest.records.iter().enumerate() {
        if seen[r.label - 1] < per_class {
            seen[r.label - 1] += 1;
            out.push(i);
        }
    }
    out
}

fn mean_boundary_mass(run: &TrainedRun, ds: &Dataset, sample: &[usize]) -> Result<f64> {
    let masses = parallel::map(sample.len(), |k| {
        let img = &ds.images[sample[k]];
        saliency_map(&run.state, img, &run.objective).map(|s| boundary_mass(&s.map, img))
    });
    let mut total = 0.0;
    for m in masses {
        total += m?;
    }
    Ok(if sample.is_empty() { 0.0 } else { total / sample.len() as f64 })
}

pub fn run(manifest: &mut RunManifest, out: &Path) -> Result<Vec<String>> {
    let cfg = manifest.config.clone();
    let runs = cfg.runs.iter().map(|d| TrainedRun::load(d)).collect::<Result<Vec<_>>>()?;
    let labels = labels(&runs);
    let mut table = AccuracyTable::default();
    for (run, label) in runs.iter().zip(&labels) {
        table.runs.push(RunInfo {
            label: label.clone(),
            loss: run.loss().name().into(),
            model: run.state.spec().kind().into(),
            trained_on: run.trained_on().name().into(),
        });
        manifest.summary.set(format!("run.{label}"), run.manifest.content_digest());
    }
    for &variant in &cfg.variants {
        let ds = dataset(&cfg, variant)?;
        manifest.summary.set(format!("{variant}.digest"), ds.manifest.digest());
        for (run, label) in runs.iter().zip(&labels) {
            run.check_input(&ds)?;
            let sub = eval_subset(run, &ds);
            let truth: Vec<usize> = sub.manifest.records.iter().map(|r| r.label).collect();
            let pred: Vec<usize> = classify(&run.state, &run.objective, &sub.pixels())?.into_iter().map(|p| p + 1).collect();
            let col = Column::from_predictions(variant.name(), label, &truth, &pred);
            let sample = saliency_sample(&sub, cfg.saliency_per_class);
            let mass = mean_boundary_mass(run, &sub, &sample)?;
            info!("{variant} {label}: mean accuracy {:.4}, boundary saliency mass {mass:.4}", col.mean_accuracy());
            manifest.summary.set(format!("mean.{variant}.{label}"), format!("{:?}", col.mean_accuracy()));
            table.columns.push(col);
            table.saliency.push(SaliencyStat {
                variant: variant.name().into(),
                run: label.clone(),
                samples: sample.len(),
                boundary_mass: mass,
            });
        }
    }
    let flagged = table
        .columns
        .iter()
        .flat_map(|c| (1..=NUM_CLASSES).filter_map(move |k| c.flag(k).map(|f| format!("{}:{}:{}", c.variant, c.run, f.name()))))
        .collect::<Vec<_>>();
    manifest.summary.set("flags", flagged.join(","));
    let text = table.render_text();
    print!("{text}");
    Ok(vec![
        write_file(out, TABLE_FILE, table.render_machine().as_bytes())?,
        write_file(out, TABLE_TEXT_FILE, text.as_bytes())?,
    ])
}

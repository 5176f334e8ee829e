use std::path::Path;

use holosub::datagen::pgm;
use holosub::kv::{parse_row, render_row, row_get};
use holosub::nn::train::LossKind;
use holosub::parallel;
use holosub::saliency::{boundary_mass, saliency_map};

use super::{dataset, write_file, TrainedRun};
use crate::config::NUM_CLASSES;
use crate::error::{invalid, Result};
use crate::manifest::RunManifest;

pub const REPORT_FILE: &str = "saliency_report.txt";
pub const REPORT_HEADER: &str = "# holosub saliency report v1";

#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyRow {
    pub image: usize,
    pub label: usize,
    pub prediction: usize,
    pub score: f64,
    pub boundary_mass: f64,
    pub map: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyReport {
    pub variant: String,
    pub loss: String,
    /// What was differentiated.
    pub score: String,
    pub rows: Vec<SaliencyRow>,
}

pub fn score_description(loss: LossKind) -> &'static str {
    match loss {
        LossKind::Hrr => "winning_similarity",
        LossKind::Ce => "winning_logit",
    }
}

impl SaliencyReport {
    pub fn render(&self) -> String {
        let mut out = format!("{REPORT_HEADER}\n");
        out.push_str(&render_row(&[
            ("variant", self.variant.clone()),
            ("loss", self.loss.clone()),
            ("score", self.score.clone()),
            ("map", "abs_input_gradient_max_normalized".into()),
        ]));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&render_row(&[
                ("image", r.image.to_string()),
                ("label", r.label.to_string()),
                ("prediction", r.prediction.to_string()),
                ("score", format!("{:?}", r.score)),
                ("boundary_mass", format!("{:?}", r.boundary_mass)),
                ("file", r.map.clone()),
            ]));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(REPORT_HEADER) {
            return Err(invalid("not a saliency report"));
        }
        let head = parse_row(lines.next().unwrap_or_default()).map_err(invalid)?;
        let field = |row: &[(String, String)], k: &str| -> Result<String> {
            row_get(row, k).map(String::from).ok_or_else(|| invalid(format!("saliency report lacks `{k}`")))
        };
        let mut report = SaliencyReport {
            variant: field(&head, "variant")?,
            loss: field(&head, "loss")?,
            score: field(&head, "score")?,
            rows: Vec::new(),
        };
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let row = parse_row(line).map_err(invalid)?;
            let num = |k: &str| -> Result<f64> { field(&row, k)?.parse().map_err(|_| invalid(format!("bad `{k}`"))) };
            let int = |k: &str| -> Result<usize> { field(&row, k)?.parse().map_err(|_| invalid(format!("bad `{k}`"))) };
            report.rows.push(SaliencyRow {
                image: int("image")?,
                label: int("label")?,
                prediction: int("prediction")?,
                score: num("score")?,
                boundary_mass: num("boundary_mass")?,
                map: field(&row, "file")?,
            });
        }
        Ok(report)
    }
}

pub fn run(manifest: &mut RunManifest, out: &Path) -> Result<Vec<String>> {
    let cfg = manifest.config.clone();
    let run = TrainedRun::load(&cfg.runs[0])?;
    let variant = cfg.variants[0];
    let ds = dataset(&cfg, variant)?;
    run.check_input(&ds)?;
    let indices: Vec<usize> = if cfg.images.is_empty() {
        (0..NUM_CLASSES.min(ds.len())).collect()
    } else {
        cfg.images.clone()
    };
    if let Some(&bad) = indices.iter().find(|&&i| i >= ds.len()) {
        return Err(invalid(format!("image index {bad} outside 0..{}", ds.len())));
    }
    let maps = parallel::map(indices.len(), |k| saliency_map(&run.state, &ds.images[indices[k]], &run.objective));
    let mut report = SaliencyReport {
        variant: variant.name().into(),
        loss: run.loss().name().into(),
        score: score_description(run.loss()).into(),
        rows: Vec::new(),
    };
    let mut files = Vec::new();
    for (&i, m) in indices.iter().zip(maps) {
        let s = m?;
        let record = &ds.manifest.records[i];
        let rel = format!("maps/{variant}/{i:05}.pgm");
        files.push(write_file(out, &rel, &pgm::encode(&s.map.to_image()))?);
        report.rows.push(SaliencyRow {
            image: i,
            label: record.label,
            prediction: s.predicted + 1,
            score: s.score,
            boundary_mass: boundary_mass(&s.map, &ds.images[i]),
            map: rel,
        });
    }
    let mean = report.rows.iter().map(|r| r.boundary_mass).sum::<f64>() / report.rows.len().max(1) as f64;
    print!("{}", report.render());
    manifest.summary.set("run", run.manifest.content_digest());
    manifest.summary.set("maps", report.rows.len());
    manifest.summary.set("mean_boundary_mass", format!("{mean:?}"));
    files.push(write_file(out, REPORT_FILE, report.render().as_bytes())?);
    Ok(files)
}

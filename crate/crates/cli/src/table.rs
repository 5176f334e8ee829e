//! Per-class accuracy tables.
//!
//! Counts are stored as integers so the machine-readable form round-trips
//! exactly; accuracies and mean predictions are derived from them.

use std::fmt::Write;

use holosub::kv::{parse_row, render_row, row_get};

use crate::config::NUM_CLASSES;
use crate::error::{invalid, Result};

pub const TABLE_HEADER: &str = "# holosub accuracy table v1";

/// Class-6 accuracy must exceed class-5 accuracy by more than this before
/// the over-count flag is considered.
pub const OVERCOUNT_MARGIN: f64 = 0.2;
pub const OVERCOUNT_MEAN_PRED: f64 = 5.5;
pub const UNDERCOUNT_MEAN_PRED: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flag {
    /// Class-6 accuracy inflated by predictions saturating at the top class.
    Overcount,
    /// Class-1 accuracy inflated by predictions saturating at the bottom.
    Undercount,
}

impl Flag {
    pub fn name(self) -> &'static str {
        match self {
            Flag::Overcount => "boundary-overcount",
            Flag::Undercount => "boundary-undercount",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunInfo {
    pub label: String,
    pub loss: String,
    pub model: String,
    pub trained_on: String,
}

/// Counts for one (variant, run) column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Column {
    pub variant: String,
    pub run: String,
    /// Index `c` holds true class `c + 1`.
    pub correct: [usize; NUM_CLASSES],
    pub total: [usize; NUM_CLASSES],
    /// Sum of predicted labels (1-based) over images of each true class.
    pub pred_sum: [usize; NUM_CLASSES],
}

impl Column {
    pub fn from_predictions(variant: &str, run: &str, truth: &[usize], pred: &[usize]) -> Self {
        let mut col = Column {
            variant: variant.to_string(),
            run: run.to_string(),
            correct: [0; NUM_CLASSES],
            total: [0; NUM_CLASSES],
            pred_sum: [0; NUM_CLASSES],
        };
        for (&t, &p) in truth.iter().zip(pred) {
            col.total[t - 1] += 1;
            col.pred_sum[t - 1] += p;
            if t == p {
                col.correct[t - 1] += 1;
            }
        }
        col
    }

    /// Accuracy for 1-based `class`; 0 for an empty class.
    pub fn accuracy(&self, class: usize) -> f64 {
        let c = class - 1;
        if self.total[c] == 0 {
            0.0
        } else {
            self.correct[c] as f64 / self.total[c] as f64
        }
    }

    pub fn mean_prediction(&self, class: usize) -> f64 {
        let c = class - 1;
        if self.total[c] == 0 {
            0.0
        } else {
            self.pred_sum[c] as f64 / self.total[c] as f64
        }
    }

    /// Unweighted mean over the six classes.
    pub fn mean_accuracy(&self) -> f64 {
        (1..=NUM_CLASSES).map(|c| self.accuracy(c)).sum::<f64>() / NUM_CLASSES as f64
    }

    pub fn flag(&self, class: usize) -> Option<Flag> {
        let (top, bottom) = (NUM_CLASSES, 1);
        if class == top
            && self.accuracy(top) - self.accuracy(top - 1) > OVERCOUNT_MARGIN
            && self.mean_prediction(top - 1) > OVERCOUNT_MEAN_PRED
        {
            return Some(Flag::Overcount);
        }
        if class == bottom
            && self.accuracy(bottom) - self.accuracy(bottom + 1) > OVERCOUNT_MARGIN
            && self.mean_prediction(bottom + 1) < UNDERCOUNT_MEAN_PRED
        {
            return Some(Flag::Undercount);
        }
        None
    }
}

/// Mean boundary saliency mass for one (variant, run) column.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyStat {
    pub variant: String,
    pub run: String,
    pub samples: usize,
    pub boundary_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AccuracyTable {
    pub runs: Vec<RunInfo>,
    pub columns: Vec<Column>,
    pub saliency: Vec<SaliencyStat>,
}

impl AccuracyTable {
    pub fn column(&self, variant: &str, run: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.variant == variant && c.run == run)
    }

    pub fn variants(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for c in &self.columns {
            if !out.contains(&c.variant.as_str()) {
                out.push(&c.variant);
            }
        }
        out
    }

    pub fn render_machine(&self) -> String {
        let mut out = String::new();
        out.push_str(TABLE_HEADER);
        out.push('\n');
        for r in &self.runs {
            let row = render_row(&[
                ("kind", "run".into()),
                ("label", r.label.clone()),
                ("loss", r.loss.clone()),
                ("model", r.model.clone()),
                ("trained_on", r.trained_on.clone()),
            ]);
            out.push_str(&row);
            out.push('\n');
        }
        for c in &self.columns {
            for class in 1..=NUM_CLASSES {
                let i = class - 1;
                let flag = c.flag(class).map(|f| f.name()).unwrap_or("-");
                let row = render_row(&[
                    ("kind", "cell".into()),
                    ("variant", c.variant.clone()),
                    ("run", c.run.clone()),
                    ("class", class.to_string()),
                    ("correct", c.correct[i].to_string()),
                    ("total", c.total[i].to_string()),
                    ("pred_sum", c.pred_sum[i].to_string()),
                    ("flag", flag.into()),
                ]);
                out.push_str(&row);
                out.push('\n');
            }
        }
        for s in &self.saliency {
            let row = render_row(&[
                ("kind", "saliency".into()),
                ("variant", s.variant.clone()),
                ("run", s.run.clone()),
                ("samples", s.samples.to_string()),
                ("boundary_mass", format!("{:?}", s.boundary_mass)),
            ]);
            out.push_str(&row);
            out.push('\n');
        }
        out
    }

    pub fn parse_machine(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(TABLE_HEADER) {
            return Err(invalid("not an accuracy table"));
        }
        let mut t = AccuracyTable::default();
        // flags depend on neighbouring classes, so they are checked last
        let mut flags = Vec::new();
        for (n, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |m: &str| invalid(format!("accuracy table line {}: {m}", n + 2));
            let row = parse_row(line).map_err(|m| bad(&m))?;
            let get = |k: &str| row_get(&row, k).ok_or_else(|| bad(&format!("missing `{k}`")));
            let num = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|_| bad(&format!("bad `{k}`"))) };
            match get("kind")? {
                "run" => t.runs.push(RunInfo {
                    label: get("label")?.into(),
                    loss: get("loss")?.into(),
                    model: get("model")?.into(),
                    trained_on: get("trained_on")?.into(),
                }),
                "cell" => {
                    let (variant, run) = (get("variant")?, get("run")?);
                    let class = num("class")?;
                    if !(1..=NUM_CLASSES).contains(&class) {
                        return Err(bad("class out of range"));
                    }
                    let pos = match t.columns.iter().position(|c| c.variant == variant && c.run == run) {
                        Some(p) => p,
                        None => {
                            t.columns.push(Column::from_predictions(variant, run, &[], &[]));
                            t.columns.len() - 1
                        }
                    };
                    let col = &mut t.columns[pos];
                    col.correct[class - 1] = num("correct")?;
                    col.total[class - 1] = num("total")?;
                    col.pred_sum[class - 1] = num("pred_sum")?;
                    if col.correct[class - 1] > col.total[class - 1] {
                        return Err(bad("more correct than total"));
                    }
                    flags.push((n + 2, pos, class, get("flag")?.to_string()));
                }
                "saliency" => t.saliency.push(SaliencyStat {
                    variant: get("variant")?.into(),
                    run: get("run")?.into(),
                    samples: num("samples")?,
                    boundary_mass: get("boundary_mass")?.parse().map_err(|_| bad("bad `boundary_mass`"))?,
                }),
                other => return Err(bad(&format!("unknown row kind `{other}`"))),
            }
        }
        for (line, pos, class, flag) in flags {
            if t.columns[pos].flag(class).map(|f| f.name()).unwrap_or("-") != flag {
                return Err(invalid(format!("accuracy table line {line}: flag disagrees with counts")));
            }
        }
        Ok(t)
    }

    /// Aligned text: one block per variant, one row per class, one column
    /// per run.
    pub fn render_text(&self) -> String {
        let runs: Vec<&str> = self.runs.iter().map(|r| r.label.as_str()).collect();
        let width = runs.iter().map(|r| r.len()).max().unwrap_or(0).max(6) + 2;
        let mut out = String::new();
        for variant in self.variants() {
            let _ = writeln!(out, "{variant}");
            let _ = write!(out, "{:<8}", "class");
            for r in &runs {
                let _ = write!(out, "{r:>width$}");
            }
            out.push('\n');
            let cols: Vec<Option<&Column>> = runs.iter().map(|r| self.column(variant, r)).collect();
            for class in 1..=NUM_CLASSES {
                let _ = write!(out, "{class:<8}");
                let mut flags = Vec::new();
                for (r, c) in runs.iter().zip(&cols) {
                    match c {
                        Some(c) => {
                            let _ = write!(out, "{:>width$.4}", c.accuracy(class));
                            if let Some(f) = c.flag(class) {
                                flags.push(format!("{r}: {}", f.name()));
                            }
                        }
                        None => {
                            let _ = write!(out, "{:>width$}", "-");
                        }
                    }
                }
                if !flags.is_empty() {
                    let _ = write!(out, "  [{}]", flags.join(", "));
                }
                out.push('\n');
            }
            let _ = write!(out, "{:<8}", "mean");
            for c in &cols {
                match c {
                    Some(c) => {
                        let _ = write!(out, "{:>width$.4}", c.mean_accuracy());
                    }
                    None => {
                        let _ = write!(out, "{:>width$}", "-");
                    }
                }
            }
            out.push('\n');
            let stats: Vec<String> = runs
                .iter()
                .filter_map(|r| {
                    self.saliency
                        .iter()
                        .find(|s| s.variant == variant && s.run == *r)
                        .map(|s| format!("{r} {:.4}", s.boundary_mass))
                })
                .collect();
            if !stats.is_empty() {
                let _ = writeln!(out, "boundary saliency mass: {}", stats.join(", "));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn run(label: &str) -> RunInfo {
        RunInfo {
            label: label.into(),
            loss: label.to_lowercase(),
            model: "cnn".into(),
            trained_on: "train_circles".into(),
        }
    }

    #[test]
    fn always_six_predictor_is_flagged() {
        let truth: Vec<usize> = (0..60).map(|i| i % 6 + 1).collect();
        let pred = vec![6; 60];
        let c = Column::from_predictions("larger50", "HRR", &truth, &pred);
        assert_eq!(c.accuracy(6), 1.0);
        assert_eq!(c.accuracy(5), 0.0);
        assert_eq!(c.flag(6), Some(Flag::Overcount));
        assert_eq!(c.flag(5), None);
        let c1 = Column::from_predictions("larger50", "HRR", &truth, &vec![1; 60]);
        assert_eq!(c1.flag(1), Some(Flag::Undercount));
        assert_eq!(c1.flag(6), None);
    }

    #[test]
    fn perfect_predictor_is_not_flagged() {
        let truth: Vec<usize> = (0..60).map(|i| i % 6 + 1).collect();
        let c = Column::from_predictions("squares", "CE", &truth, &truth);
        assert!((1..=6).all(|k| c.flag(k).is_none() && c.accuracy(k) == 1.0));
        assert_eq!(c.mean_accuracy(), 1.0);
    }

    #[test]
    fn flag_requires_both_conditions() {
        let truth = [5, 5, 6, 6];
        // class 6 beats class 5 by 0.5 but true-5 images average 5.0
        let c = Column::from_predictions("v", "r", &truth, &[4, 6, 6, 6]);
        assert!(c.accuracy(6) - c.accuracy(5) > OVERCOUNT_MARGIN);
        assert_eq!(c.flag(6), None);
    }

    #[test]
    fn text_render_lists_every_variant() {
        let truth: Vec<usize> = (0..12).map(|i| i % 6 + 1).collect();
        let t = AccuracyTable {
            runs: vec![run("HRR"), run("CE")],
            columns: vec![
                Column::from_predictions("squares", "HRR", &truth, &truth),
                Column::from_predictions("squares", "CE", &truth, &vec![6; 12]),
            ],
            saliency: vec![],
        };
        let text = t.render_text();
        assert!(text.contains("squares"));
        assert!(text.contains("CE: boundary-overcount"));
        assert_eq!(text.lines().filter(|l| l.starts_with("mean")).count(), 1);
    }

    proptest! {
        #[test]
        fn machine_form_round_trips(preds in proptest::collection::vec(1usize..=6, 1..120), mass in 0.0f64..1.0) {
            let truth: Vec<usize> = (0..preds.len()).map(|i| i % 6 + 1).collect();
            let t = AccuracyTable {
                runs: vec![run("HRR")],
                columns: vec![Column::from_predictions("triangles", "HRR", &truth, &preds)],
                saliency: vec![SaliencyStat { variant: "triangles".into(), run: "HRR".into(), samples: 7, boundary_mass: mass }],
            };
            let back = AccuracyTable::parse_machine(&t.render_machine()).unwrap();
            prop_assert_eq!(back, t);
        }
    }
}

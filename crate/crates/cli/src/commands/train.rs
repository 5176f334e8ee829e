use std::path::Path;

use holosub::datagen::{Split, VariantId};
use holosub::kv::render_row;
use holosub::nn::checkpoint;
use holosub::nn::train::{accuracy, classify, train, Objective};
use holosub::nn::ModelState;
use log::info;

use super::{dataset, objective, write_file, CHECKPOINT_FILE, CODEBOOK_FILE, TRAIN_LOG_FILE};
use crate::error::Result;
use crate::manifest::RunManifest;

pub const LOG_HEADER: &str = "# holosub training log v1";

pub fn run(manifest: &mut RunManifest, out: &Path) -> Result<Vec<String>> {
    let cfg = manifest.config.clone();
    let variant = cfg.variants[0];
    let full = dataset(&cfg, variant)?;
    // only boundary polygons carry a split; everything else is training data
    let ds = full.subset(Split::Train);
    let obj = objective(&cfg)?;
    let spec = cfg.model_spec();
    let mut state = ModelState::init(&spec, cfg.model_seed)?;
    info!(
        "training {} ({} parameters) with {} loss on {} {} images",
        spec.kind(),
        state.num_parameters(),
        cfg.loss.name(),
        ds.len(),
        variant
    );
    let mut log = String::from(LOG_HEADER);
    log.push('\n');
    let labels = ds.class_indices();
    let logs = train(&mut state, &ds.pixels(), &labels, &cfg.train_config(), &obj, |e| {
        info!("epoch {:>3}  lr {:e}  loss {:.6}  train acc {:.4}", e.epoch, e.lr, e.loss, e.train_accuracy);
        log.push_str(&render_row(&[
            ("epoch", e.epoch.to_string()),
            ("lr", format!("{:?}", e.lr)),
            ("loss", format!("{:?}", e.loss)),
            ("train_accuracy", format!("{:?}", e.train_accuracy)),
        ]));
        log.push('\n');
    })?;
    let last = logs.last().expect("at least one epoch");
    println!("final train accuracy {:.4} after {} epochs", last.train_accuracy, logs.len());

    let mut files = vec![write_file(out, TRAIN_LOG_FILE, log.as_bytes())?];
    files.push(write_file(out, CHECKPOINT_FILE, &checkpoint::to_bytes(&state))?);
    if let Objective::Hrr { book, .. } = &obj {
        files.push(write_file(out, CODEBOOK_FILE, &book.to_bytes())?);
    }

    let s = &mut manifest.summary;
    s.set("dataset_digest", full.manifest.digest());
    s.set("train_images", ds.len());
    s.set("epochs_run", logs.len());
    s.set("final_loss", format!("{:?}", last.loss));
    s.set("final_train_accuracy", format!("{:?}", last.train_accuracy));
    s.set("parameters", state.num_parameters());
    if variant == VariantId::BoundaryPolygons {
        let test = full.subset(Split::Test);
        let pred = classify(&state, &obj, &test.pixels())?;
        let acc = accuracy(&pred, &test.class_indices());
        println!("held-out accuracy {acc:.4} on {} images", test.len());
        s.set("test_images", test.len());
        s.set("test_accuracy", format!("{acc:?}"));
    }
    manifest.model = Some(spec.to_section());
    Ok(files)
}

pub mod bench;
pub mod eval;
pub mod gen;
pub mod saliency;
pub mod train;

use std::path::{Path, PathBuf};

use holosub::datagen::{build_dataset, load_dataset, Dataset, VariantId};
use holosub::loss::Codebook;
use holosub::nn::checkpoint;
use holosub::nn::train::{LossKind, Objective};
use holosub::nn::{Head, ModelState};

use crate::config::{Command, RunConfig, NUM_CLASSES};
use crate::error::{invalid, CliError, Result};
use crate::manifest::RunManifest;

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const CODEBOOK_FILE: &str = "codebook.bin";
pub const TRAIN_LOG_FILE: &str = "train_log.txt";
pub const TABLE_FILE: &str = "accuracy.txt";
pub const TABLE_TEXT_FILE: &str = "accuracy_table.txt";

/// Runs the configured command, filling in the manifest summary. Returns
/// the written files relative to `out`.
pub fn dispatch(manifest: &mut RunManifest, out: &Path) -> Result<Vec<String>> {
    match manifest.config.command {
        Command::Gen => gen::run(manifest, out),
        Command::Train => train::run(manifest, out),
        Command::Eval => eval::run(manifest, out),
        Command::Saliency => saliency::run(manifest, out),
        Command::VsaBench => bench::run(manifest, out),
    }
}

/// Loads `variant` from the configured data root, or builds it in memory.
/// A dataset on disk must have been generated with the same settings.
pub fn dataset(cfg: &RunConfig, variant: VariantId) -> Result<Dataset> {
    let want = cfg.dataset_config(variant);
    match &cfg.data {
        Some(root) => {
            let ds = load_dataset(&root.join(variant.name()))?;
            if ds.manifest.config.digest() != want.digest() {
                return Err(invalid(format!(
                    "dataset under {} was generated with different settings",
                    root.display()
                )));
            }
            Ok(ds)
        }
        None => Ok(build_dataset(&want)?),
    }
}

pub fn objective(cfg: &RunConfig) -> Result<Objective> {
    Ok(match cfg.loss {
        LossKind::Hrr => Objective::Hrr {
            book: Codebook::new(NUM_CLASSES, cfg.feature_dim, cfg.codebook_seed)?,
            residual: cfg.residual,
        },
        LossKind::Ce => Objective::Ce {
            num_classes: NUM_CLASSES,
        },
    })
}

/// A finished training run loaded back from its output directory.
pub struct TrainedRun {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub state: ModelState,
    pub objective: Objective,
}

impl TrainedRun {
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = RunManifest::read(dir)?;
        if manifest.config.command != Command::Train {
            return Err(invalid(format!("{} is not a training run", dir.display())));
        }
        manifest.verify(dir)?;
        let state = checkpoint::load(&dir.join(CHECKPOINT_FILE))?;
        let objective = match state.spec().head {
            Head::Hrr { .. } => {
                let p = dir.join(CODEBOOK_FILE);
                let f = std::fs::File::open(&p).map_err(CliError::io(p.display()))?;
                Objective::Hrr {
                    book: Codebook::read_from(std::io::BufReader::new(f))?,
                    residual: manifest.config.residual,
                }
            }
            Head::Ce { num_classes } => Objective::Ce { num_classes },
        };
        objective.check_head(state.spec().head)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            state,
            objective,
        })
    }

    pub fn trained_on(&self) -> VariantId {
        self.manifest.config.variants[0]
    }

    pub fn loss(&self) -> LossKind {
        self.manifest.config.loss
    }

    /// Rejects datasets whose image size differs from the model input.
    pub fn check_input(&self, ds: &Dataset) -> Result<()> {
        let spec = self.state.spec();
        let side = ds.manifest.config.params.side;
        if spec.height != side || spec.width != side {
            return Err(invalid(format!(
                "run {} expects {}×{} images, dataset has {side}×{side}",
                self.dir.display(),
                spec.width,
                spec.height
            )));
        }
        Ok(())
    }
}

/// Evaluation images for a run: boundary variants use only the held-out
/// split when the run was trained on boundary polygons.
pub fn eval_subset(run: &TrainedRun, ds: &Dataset) -> Dataset {
    let config = &ds.manifest.config;
    if !(run.trained_on() == VariantId::BoundaryPolygons && config.variant.is_boundary()) {
        return Dataset {
            manifest: ds.manifest.clone(),
            images: ds.images.clone(),
        };
    }
    let mut records = Vec::new();
    let mut images = Vec::new();
    for (r, img) in ds.manifest.records.iter().zip(&ds.images) {
        if holosub::datagen::Split::of(config.seed, r.index) == holosub::datagen::Split::Test {
            records.push(r.clone());
            images.push(img.clone());
        }
    }
    Dataset {
        manifest: holosub::datagen::DatasetManifest {
            config: config.clone(),
            records,
        },
        images,
    }
}

pub fn write_file(out: &Path, rel: &str, bytes: &[u8]) -> Result<String> {
    let p = out.join(rel);
    if let Some(parent) = p.parent() {
        std::fs::create_dir_all(parent).map_err(CliError::io(parent.display()))?;
    }
    std::fs::write(&p, bytes).map_err(CliError::io(p.display()))?;
    Ok(rel.to_string())
}

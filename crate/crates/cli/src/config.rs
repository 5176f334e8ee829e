//! Resolved run configuration.
//!
//! Values come from profile defaults, then the `[config]` and `[dataset]`
//! sections of an optional config file, then command-line flags. The
//! resolved form is written back into every run manifest, so a manifest is
//! itself a valid config file.

use std::path::PathBuf;

use holosub::datagen::{DatasetConfig, GenParams, Profile, VariantId};
use holosub::kv::{KvDoc, Section};
use holosub::loss::ResidualNorm;
use holosub::nn::optim::OptimizerKind;
use holosub::nn::train::{LossKind, LrSchedule, TrainConfig};
use holosub::nn::{Head, ModelSpec, VitSpec};

use crate::error::{invalid, Result};

pub const NUM_CLASSES: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Gen,
    Train,
    Eval,
    Saliency,
    VsaBench,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Gen => "gen",
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Saliency => "saliency",
            Command::VsaBench => "vsa-bench",
        }
    }
}

pub fn command_by_name(name: &str) -> Option<Command> {
    [Command::Gen, Command::Train, Command::Eval, Command::Saliency, Command::VsaBench]
        .into_iter()
        .find(|c| c.name() == name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Cnn,
    Vit,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Cnn => "cnn",
            ModelKind::Vit => "vit",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "cnn" => Ok(ModelKind::Cnn),
            "vit" => Ok(ModelKind::Vit),
            other => Err(invalid(format!("unknown model `{other}`"))),
        }
    }
}

fn residual_name(r: ResidualNorm) -> &'static str {
    match r {
        ResidualNorm::L2 => "l2",
        ResidualNorm::SquaredL2 => "squared_l2",
    }
}

fn parse_residual(s: &str) -> Result<ResidualNorm> {
    match s {
        "l2" => Ok(ResidualNorm::L2),
        "squared_l2" => Ok(ResidualNorm::SquaredL2),
        other => Err(invalid(format!("unknown residual norm `{other}`"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub profile: Profile,
    /// Dataset seed.
    pub seed: u64,
    /// Seed for initialization, dropout and shuffling.
    pub model_seed: u64,
    pub variants: Vec<VariantId>,
    pub loss: LossKind,
    pub model: ModelKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    pub optimizer: OptimizerKind,
    pub feature_dim: usize,
    pub codebook_seed: u64,
    pub residual: ResidualNorm,
    pub stop_when_fit: bool,
    /// Dataset root written by `gen`; datasets are rebuilt in memory when
    /// absent.
    pub data: Option<PathBuf>,
    /// Training output directories consumed by `eval` and `saliency`.
    pub runs: Vec<PathBuf>,
    /// Image indices for `saliency`; empty selects the first image of each
    /// class.
    pub images: Vec<usize>,
    /// Images per class used for the boundary-mass statistic in `eval`.
    pub saliency_per_class: usize,
    pub trials: usize,
    pub params: GenParams,
}

impl RunConfig {
    pub fn defaults(command: Command, profile: Profile) -> Self {
        let (epochs, batch_size, schedule) = match profile {
            Profile::Desk => (50, 8, LrSchedule::new(vec![(0, 2e-3), (40, 2e-4)])),
            Profile::Full => (300, 32, LrSchedule::new(vec![(0, 1e-3), (100, 1e-4), (200, 1e-5)])),
        };
        let variants = match command {
            Command::Gen => VariantId::ALL.to_vec(),
            Command::Eval => VariantId::EVAL.to_vec(),
            _ => vec![VariantId::TrainCircles],
        };
        Self {
            command,
            profile,
            seed: 0,
            model_seed: 0,
            variants,
            loss: LossKind::Hrr,
            model: ModelKind::Cnn,
            epochs,
            batch_size,
            schedule: schedule.expect("static schedule"),
            optimizer: OptimizerKind::default(),
            feature_dim: 64,
            codebook_seed: 0,
            residual: ResidualNorm::L2,
            stop_when_fit: false,
            data: None,
            runs: Vec::new(),
            images: Vec::new(),
            saliency_per_class: 10,
            trials: 1000,
            params: GenParams::for_profile(profile),
        }
    }

    /// Resolves a configuration. `file` is an optional config document and
    /// `flags` holds command-line overrides in config-key form.
    pub fn resolve(command: Command, file: Option<&KvDoc>, flags: &Section) -> Result<Self> {
        let empty = Section::new("config");
        let from_file = file.and_then(|d| d.section("config")).unwrap_or(&empty);
        if let Some(c) = from_file.get("command") {
            if c != command.name() {
                return Err(invalid(format!("config is for `{c}`, not `{}`", command.name())));
            }
        }
        let profile = match flags.get("profile").or_else(|| from_file.get("profile")) {
            Some(p) => Profile::parse(p)?,
            None => Profile::Desk,
        };
        let mut cfg = Self::defaults(command, profile);
        let fallback_model_seed = flags.get("seed").or_else(|| from_file.get("seed"));
        if let Some(s) = file.and_then(|d| d.section("dataset")) {
            cfg.params = GenParams::read_section(s, &cfg.params)?;
        }
        cfg.apply(from_file)?;
        cfg.apply(flags)?;
        if flags.get("model_seed").is_none() && from_file.get("model_seed").is_none() {
            if let Some(s) = fallback_model_seed {
                cfg.model_seed = parse_num(s, "seed")?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, s: &Section) -> Result<()> {
        for (k, v) in &s.entries {
            let v = v.as_str();
            match k.as_str() {
                "command" | "profile" => {}
                "seed" => self.seed = parse_num(v, k)?,
                "model_seed" => self.model_seed = parse_num(v, k)?,
                "variant" => self.variants = parse_variants(v)?,
                "loss" => self.loss = LossKind::parse(v)?,
                "model" => self.model = ModelKind::parse(v)?,
                "epochs" => self.epochs = parse_num(v, k)?,
                "batch_size" => self.batch_size = parse_num(v, k)?,
                "lr" => self.schedule = LrSchedule::parse(v)?,
                "optimizer" => self.optimizer = OptimizerKind::parse(v)?,
                "feature_dim" => self.feature_dim = parse_num(v, k)?,
                "codebook_seed" => self.codebook_seed = parse_num(v, k)?,
                "residual" => self.residual = parse_residual(v)?,
                "stop_when_fit" => self.stop_when_fit = parse_num(v, k)?,
                "data" => self.data = (!v.is_empty()).then(|| PathBuf::from(v)),
                "runs" => self.runs = split_list(v).map(PathBuf::from).collect(),
                "images" => self.images = split_list(v).map(|i| parse_num(i, k)).collect::<Result<_>>()?,
                "saliency_per_class" => self.saliency_per_class = parse_num(v, k)?,
                "trials" => self.trials = parse_num(v, k)?,
                other => return Err(invalid(format!("unknown config key `{other}`"))),
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.variants.is_empty() {
            return Err(invalid("no variants selected"));
        }
        let single = matches!(self.command, Command::Train | Command::Saliency);
        if single && self.variants.len() != 1 {
            return Err(invalid(format!("`{}` takes exactly one variant", self.command.name())));
        }
        if matches!(self.command, Command::Eval | Command::Saliency) && self.runs.is_empty() {
            return Err(invalid(format!("`{}` needs at least one --run directory", self.command.name())));
        }
        if self.command == Command::Saliency && self.runs.len() != 1 {
            return Err(invalid("`saliency` takes exactly one --run directory"));
        }
        if self.command == Command::VsaBench && self.trials == 0 {
            return Err(invalid("trials must be positive"));
        }
        self.train_config().validate()?;
        if self.feature_dim < 2 {
            return Err(invalid("feature_dim must be at least 2"));
        }
        Ok(())
    }

    pub fn to_doc(&self) -> KvDoc {
        let mut s = Section::new("config");
        s.set("command", self.command.name());
        s.set("profile", self.profile.name());
        s.set("seed", self.seed);
        s.set("model_seed", self.model_seed);
        let names: Vec<&str> = self.variants.iter().map(|v| v.name()).collect();
        s.set("variant", names.join(","));
        s.set("loss", self.loss.name());
        s.set("model", self.model.name());
        s.set("epochs", self.epochs);
        s.set("batch_size", self.batch_size);
        s.set("lr", self.schedule.render());
        s.set("optimizer", self.optimizer.render());
        s.set("feature_dim", self.feature_dim);
        s.set("codebook_seed", self.codebook_seed);
        s.set("residual", residual_name(self.residual));
        s.set("stop_when_fit", self.stop_when_fit);
        s.set("data", self.data.as_ref().map(|p| p.display().to_string()).unwrap_or_default());
        let runs: Vec<String> = self.runs.iter().map(|p| p.display().to_string()).collect();
        s.set("runs", runs.join(","));
        let images: Vec<String> = self.images.iter().map(|i| i.to_string()).collect();
        s.set("images", images.join(","));
        s.set("saliency_per_class", self.saliency_per_class);
        s.set("trials", self.trials);
        let mut d = Section::new("dataset");
        self.params.write_section(&mut d);
        KvDoc { sections: vec![s, d] }
    }

    pub fn digest(&self) -> String {
        self.to_doc().digest()
    }

    pub fn dataset_config(&self, variant: VariantId) -> DatasetConfig {
        DatasetConfig {
            variant,
            profile: self.profile,
            seed: self.seed,
            params: self.params.clone(),
        }
    }

    pub fn model_spec(&self) -> ModelSpec {
        let side = self.params.side;
        let head = match self.loss {
            LossKind::Hrr => Head::Hrr {
                feature_dim: self.feature_dim,
            },
            LossKind::Ce => Head::Ce {
                num_classes: NUM_CLASSES,
            },
        };
        match self.model {
            ModelKind::Cnn => ModelSpec::cnn(side, head),
            ModelKind::Vit => {
                let vit = match self.profile {
                    Profile::Desk => VitSpec::desk(),
                    Profile::Full => VitSpec::full(),
                };
                ModelSpec::vit(side, vit, head)
            }
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            schedule: self.schedule.clone(),
            optimizer: self.optimizer,
            seed: self.model_seed,
            stop_when_fit: self.stop_when_fit,
        }
    }
}

fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|x| !x.is_empty())
}

fn parse_num<T: std::str::FromStr>(v: &str, key: &str) -> Result<T> {
    v.trim().parse().map_err(|_| invalid(format!("bad value `{v}` for `{key}`")))
}

/// `all`, `eval` or a comma-separated list of variant names.
pub fn parse_variants(v: &str) -> Result<Vec<VariantId>> {
    match v {
        "all" => Ok(VariantId::ALL.to_vec()),
        "eval" => Ok(VariantId::EVAL.to_vec()),
        _ => split_list(v).map(|x| VariantId::parse(x).map_err(Into::into)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(pairs: &[(&str, &str)]) -> Section {
        let mut s = Section::new("config");
        for (k, v) in pairs {
            s.set(*k, *v);
        }
        s
    }

    #[test]
    fn resolved_config_round_trips_as_config_file() {
        let f = flags(&[("seed", "7"), ("loss", "ce"), ("epochs", "3"), ("images", "1,2")]);
        let cfg = RunConfig::resolve(Command::Train, None, &f).unwrap();
        assert_eq!(cfg.model_seed, 7);
        let doc = KvDoc::parse(&cfg.to_doc().render()).unwrap();
        let back = RunConfig::resolve(Command::Train, Some(&doc), &Section::new("config")).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.digest(), cfg.digest());
    }

    #[test]
    fn flags_override_file() {
        let doc = KvDoc::parse("[config]\nseed=3\nprofile=full\n[dataset]\nper_class=5\n").unwrap();
        let cfg = RunConfig::resolve(Command::Gen, Some(&doc), &flags(&[("seed", "9")])).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.profile, Profile::Full);
        assert_eq!(cfg.params.per_class, 5);
        assert_eq!(cfg.params.side, 100);
        assert_eq!(cfg.epochs, 300);
        assert_eq!(cfg.variants.len(), 9);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RunConfig::resolve(Command::Train, None, &flags(&[("variant", "all")])).is_err());
        assert!(RunConfig::resolve(Command::Eval, None, &Section::new("config")).is_err());
        assert!(RunConfig::resolve(Command::Gen, None, &flags(&[("bogus", "1")])).is_err());
        let doc = KvDoc::parse("[config]\ncommand=train\n").unwrap();
        assert!(RunConfig::resolve(Command::Eval, Some(&doc), &flags(&[("runs", "x")])).is_err());
    }
}

//! Run manifests.
//!
//! A manifest records the resolved configuration, the command line and the
//! SHA-256 of every file a command wrote. Its `[config]` and `[dataset]`
//! sections are a complete config file, so passing the manifest back with
//! `--config` repeats the run.

use std::path::Path;

use holosub::kv::{sha256_hex, KvDoc, Section};

use crate::config::RunConfig;
use crate::error::{invalid, CliError, Result};

pub const RUN_MANIFEST_FILE: &str = "run_manifest.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub argv: Vec<String>,
    pub config: RunConfig,
    /// Command-specific results such as dataset digests or mean accuracies.
    pub summary: Section,
    /// Model spec of the trained or evaluated model, when there is one.
    pub model: Option<Section>,
    /// `(relative path, sha256)`, sorted by path.
    pub outputs: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(argv: Vec<String>, config: RunConfig) -> Self {
        Self {
            argv,
            config,
            summary: Section::new("summary"),
            model: None,
            outputs: Vec::new(),
        }
    }

    /// Hashes `files` (relative to `root`) into the output list.
    pub fn record_outputs(&mut self, root: &Path, files: &[String]) -> Result<()> {
        let mut outputs = Vec::with_capacity(files.len());
        for f in files {
            let p = root.join(f);
            let bytes = std::fs::read(&p).map_err(CliError::io(p.display()))?;
            outputs.push((f.clone(), sha256_hex(&bytes)));
        }
        outputs.sort();
        outputs.dedup();
        self.outputs = outputs;
        Ok(())
    }

    /// Digest over the sorted `sha  path` listing of all outputs.
    pub fn content_digest(&self) -> String {
        let mut listing = String::new();
        for (path, sha) in &self.outputs {
            listing.push_str(sha);
            listing.push_str("  ");
            listing.push_str(path);
            listing.push('\n');
        }
        sha256_hex(listing.as_bytes())
    }

    fn run_section(&self) -> Section {
        let c = &self.config;
        let mut s = Section::new("run");
        s.set("command", c.command.name());
        s.set("argv", self.argv.join(" "));
        s.set("config_digest", c.digest());
        s.set("profile", c.profile.name());
        s.set("seed", c.seed);
        s.set("model_seed", c.model_seed);
        s.set("codebook_seed", c.codebook_seed);
        s.set("loss", c.loss.name());
        s.set("optimizer", c.optimizer.render());
        s.set("data", c.data.as_ref().map(|p| p.display().to_string()).unwrap_or_default());
        s.set("content_digest", self.content_digest());
        s
    }

    pub fn render(&self) -> String {
        let mut doc = KvDoc::new();
        doc.sections.push(self.run_section());
        doc.sections.extend(self.config.to_doc().sections);
        if let Some(m) = &self.model {
            doc.sections.push(m.clone());
        }
        doc.sections.push(self.summary.clone());
        let mut out = Section::new("outputs");
        out.entries = self.outputs.clone();
        doc.sections.push(out);
        doc.render()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let doc = KvDoc::parse(text)?;
        let command = doc.require("run", "command")?;
        let cmd = crate::config::command_by_name(command).ok_or_else(|| invalid(format!("unknown command `{command}`")))?;
        let config = RunConfig::resolve(cmd, Some(&doc), &Section::new("config"))?;
        if doc.require("run", "config_digest")? != config.digest() {
            return Err(invalid("run manifest config digest does not match its config"));
        }
        let argv = doc.require("run", "argv")?.split(' ').filter(|a| !a.is_empty()).map(String::from).collect();
        let outputs = doc.section("outputs").map(|s| s.entries.clone()).unwrap_or_default();
        let m = Self {
            argv,
            config,
            summary: doc.section("summary").cloned().unwrap_or_else(|| Section::new("summary")),
            model: doc.section("model").cloned(),
            outputs,
        };
        if doc.require("run", "content_digest")? != m.content_digest() {
            return Err(invalid("run manifest content digest does not match its outputs"));
        }
        Ok(m)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let p = dir.join(RUN_MANIFEST_FILE);
        std::fs::write(&p, self.render()).map_err(CliError::io(p.display()))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let p = dir.join(RUN_MANIFEST_FILE);
        let text = std::fs::read_to_string(&p).map_err(CliError::io(p.display()))?;
        Self::parse(&text)
    }

    /// Checks every recorded output under `root` against its digest.
    pub fn verify(&self, root: &Path) -> Result<()> {
        for (path, sha) in &self.outputs {
            let p = root.join(path);
            let bytes = std::fs::read(&p).map_err(CliError::io(p.display()))?;
            if &sha256_hex(&bytes) != sha {
                return Err(invalid(format!("{} does not match its recorded digest", p.display())));
            }
        }
        Ok(())
    }
}

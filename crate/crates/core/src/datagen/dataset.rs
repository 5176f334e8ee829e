//! Whole datasets: generation, on-disk layout and manifests.
//!
//! Image `i` has label `i % 6 + 1` and is generated from the stream
//! `(seed, i, redraw)`, so datasets are reproducible and every variant with
//! the same seed starts from the same base scenes. A scaled variant whose
//! objects no longer fit is redrawn from the next `redraw` stream; the
//! number of redraws is recorded per image.

use std::path::{Path, PathBuf};

use crate::kv::{self, KvDoc, Section};
use crate::parallel;
use crate::rng::{mix64, CounterRng};

use super::pgm;
use super::raster::{rasterize, ImageGray};
use super::scene::{gen_scene, Polarity, SceneObject, SceneSpec};
use super::{DatagenError, GenParams, Profile, VariantId, MAX_COUNT};

const TAG_SCENE: u64 = 0x5343_454E;
const TAG_SPLIT: u64 = 0x5350_4C54;
pub const MANIFEST_FILE: &str = "manifest.txt";
const IMAGES_HEADER: &str = "[images]";

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub variant: VariantId,
    pub profile: Profile,
    pub seed: u64,
    pub params: GenParams,
}

impl DatasetConfig {
    pub fn new(variant: VariantId, profile: Profile, seed: u64) -> Self {
        Self {
            variant,
            profile,
            seed,
            params: GenParams::for_profile(profile),
        }
    }

    pub fn len(&self) -> usize {
        self.params.per_class * MAX_COUNT
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_section(&self) -> Section {
        let mut s = Section::new("dataset");
        s.set("variant", self.variant.name());
        s.set("profile", self.profile.name());
        s.set("seed", self.seed);
        self.params.write_section(&mut s);
        s
    }

    pub fn from_section(s: &Section) -> Result<Self, DatagenError> {
        let get = |k: &str| s.get(k).ok_or_else(|| DatagenError::Config(format!("dataset section lacks `{k}`")));
        let variant = VariantId::parse(get("variant")?)?;
        let profile = Profile::parse(get("profile")?)?;
        let seed = get("seed")?.parse().map_err(|_| DatagenError::Config("bad seed".into()))?;
        let params = GenParams::read_section(s, &GenParams::for_profile(profile))?;
        Ok(Self {
            variant,
            profile,
            seed,
            params,
        })
    }

    pub fn digest(&self) -> String {
        KvDoc {
            sections: vec![self.to_section()],
        }
        .digest()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    /// 80/20 assignment by a hash of `(seed, index)`.
    pub fn of(seed: u64, index: usize) -> Self {
        let h = mix64(mix64(seed ^ TAG_SPLIT).wrapping_add(index as u64));
        if h % 5 == 0 {
            Split::Test
        } else {
            Split::Train
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub index: usize,
    pub label: usize,
    /// Path relative to the variant directory.
    pub file: String,
    pub split: Option<Split>,
    pub redraws: usize,
    pub white: usize,
    pub scene: SceneSpec,
}

impl ImageRecord {
    fn render(&self) -> String {
        let mut pairs = vec![
            ("file", self.file.clone()),
            ("index", self.index.to_string()),
            ("label", self.label.to_string()),
        ];
        if let Some(s) = self.split {
            pairs.push(("split", s.name().to_string()));
        }
        pairs.push(("redraws", self.redraws.to_string()));
        pairs.push(("white", self.white.to_string()));
        pairs.push(("polarity", self.scene.polarity.name().to_string()));
        pairs.push(("objects", self.scene.encode_objects()));
        kv::render_row(&pairs)
    }

    fn parse(line: &str, side: usize) -> Result<Self, String> {
        let row = kv::parse_row(line)?;
        let get = |k: &str| kv::row_get(&row, k).ok_or_else(|| format!("row lacks `{k}`"));
        let num = |k: &str| -> Result<usize, String> { get(k)?.parse().map_err(|_| format!("bad `{k}`")) };
        let split = match kv::row_get(&row, "split") {
            None => None,
            Some("train") => Some(Split::Train),
            Some("test") => Some(Split::Test),
            Some(other) => return Err(format!("bad split `{other}`")),
        };
        let objects = get("objects")?
            .split(';')
            .map(|o| SceneObject::decode(o).ok_or_else(|| format!("bad object `{o}`")))
            .collect::<Result<Vec<_>, _>>()?;
        let label = num("label")?;
        Ok(Self {
            index: num("index")?,
            label,
            file: get("file")?.to_string(),
            split,
            redraws: num("redraws")?,
            white: num("white")?,
            scene: SceneSpec {
                count: label,
                objects,
                polarity: Polarity::parse(get("polarity")?).ok_or("bad polarity")?,
                height: side,
                width: side,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub config: DatasetConfig,
    pub records: Vec<ImageRecord>,
}

impl DatasetManifest {
    pub fn counts(&self) -> [usize; MAX_COUNT] {
        let mut c = [0; MAX_COUNT];
        for r in &self.records {
            c[r.label - 1] += 1;
        }
        c
    }

    pub fn render(&self) -> String {
        let mut header = KvDoc::new();
        let mut ds = self.config.to_section();
        ds.set("config_digest", self.config.digest());
        ds.set("images", self.records.len());
        header.sections.push(ds);
        let counts = header.section_mut("counts");
        for (i, c) in self.counts().iter().enumerate() {
            counts.set((i + 1).to_string(), c);
        }
        let mut out = header.render();
        out.push('\n');
        out.push_str(IMAGES_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&r.render());
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, DatagenError> {
        let err = |msg: String| DatagenError::Format {
            path: origin.to_string(),
            msg,
        };
        let split_at = text
            .find(&format!("\n{IMAGES_HEADER}\n"))
            .ok_or_else(|| err("no [images] block".into()))?;
        let header = KvDoc::parse(&text[..split_at]).map_err(|e| err(e.to_string()))?;
        let section = header.section("dataset").ok_or_else(|| err("no [dataset] section".into()))?;
        let config = DatasetConfig::from_section(section)?;
        if section.get("config_digest") != Some(config.digest().as_str()) {
            return Err(err("config digest mismatch".into()));
        }
        let body = &text[split_at + IMAGES_HEADER.len() + 2..];
        let records = body
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| ImageRecord::parse(l, config.params.side).map_err(|m| err(format!("image row {}: {m}", i + 1))))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { config, records })
    }

    /// SHA-256 of the rendered manifest.
    pub fn digest(&self) -> String {
        kv::sha256_hex(self.render().as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub images: Vec<ImageGray>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Labels as class indices `0..6`.
    pub fn class_indices(&self) -> Vec<usize> {
        self.manifest.records.iter().map(|r| r.label - 1).collect()
    }

    pub fn pixels(&self) -> Vec<&[f64]> {
        self.images.iter().map(|i| i.pixels.as_slice()).collect()
    }

    /// Records and images restricted to one split; datasets without a split
    /// return everything for [`Split::Train`] and nothing for [`Split::Test`].
    pub fn subset(&self, split: Split) -> Dataset {
        let keep = |r: &ImageRecord| r.split.unwrap_or(Split::Train) == split;
        let mut records = Vec::new();
        let mut images = Vec::new();
        for (r, img) in self.manifest.records.iter().zip(&self.images) {
            if keep(r) {
                records.push(r.clone());
                images.push(img.clone());
            }
        }
        Dataset {
            manifest: DatasetManifest {
                config: self.manifest.config.clone(),
                records,
            },
            images,
        }
    }
}

/// The scene for image `index`, redrawing from fresh streams when a scaled
/// variant cannot be placed.
pub fn scene_for(config: &DatasetConfig, index: usize) -> Result<(SceneSpec, usize), DatagenError> {
    let n = index % MAX_COUNT + 1;
    let mut last = None;
    for redraw in 0..=config.params.max_redraws {
        let mut rng = CounterRng::derive(config.seed, &[TAG_SCENE, index as u64, redraw as u64]);
        match gen_scene(n, config.variant, &config.params, &mut rng) {
            Ok(scene) => return Ok((scene, redraw)),
            Err(e @ DatagenError::PlacementFailure { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Generates the dataset in memory.
pub fn build_dataset(config: &DatasetConfig) -> Result<Dataset, DatagenError> {
    config.params.validate()?;
    let results = parallel::map(config.len(), |i| {
        scene_for(config, i).map(|(scene, redraws)| {
            let img = rasterize(&scene);
            (scene, redraws, img)
        })
    });
    let mut records = Vec::with_capacity(results.len());
    let mut images = Vec::with_capacity(results.len());
    for (index, r) in results.into_iter().enumerate() {
        let (scene, redraws, img) = r?;
        let label = scene.count;
        records.push(ImageRecord {
            index,
            label,
            file: format!("{label}/{index:05}.pgm"),
            split: (config.variant == VariantId::BoundaryPolygons).then(|| Split::of(config.seed, index)),
            redraws,
            white: img.white_count(),
            scene,
        });
        images.push(img);
    }
    Ok(Dataset {
        manifest: DatasetManifest {
            config: config.clone(),
            records,
        },
        images,
    })
}

pub fn variant_dir(root: &Path, variant: VariantId) -> PathBuf {
    root.join(variant.name())
}

/// Generates the dataset and writes it under `root/<variant>/`.
pub fn gen_dataset(config: &DatasetConfig, root: &Path) -> Result<Dataset, DatagenError> {
    let ds = build_dataset(config)?;
    let dir = variant_dir(root, config.variant);
    for label in 1..=MAX_COUNT {
        std::fs::create_dir_all(dir.join(label.to_string()))?;
    }
    for (r, img) in ds.manifest.records.iter().zip(&ds.images) {
        pgm::write(&dir.join(&r.file), img)?;
    }
    std::fs::write(dir.join(MANIFEST_FILE), ds.manifest.render())?;
    Ok(ds)
}

/// Reads a variant directory written by [`gen_dataset`].
pub fn load_dataset(dir: &Path) -> Result<Dataset, DatagenError> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path)?;
    let manifest = DatasetManifest::parse(&text, &path.display().to_string())?;
    let side = manifest.config.params.side;
    let mut images = Vec::with_capacity(manifest.records.len());
    for r in &manifest.records {
        let p = dir.join(&r.file);
        let img = pgm::read(&p)?;
        if img.height != side || img.width != side {
            return Err(DatagenError::Format {
                path: p.display().to_string(),
                msg: format!("expected {side}×{side}, found {}×{}", img.width, img.height),
            });
        }
        images.push(img);
    }
    Ok(Dataset { manifest, images })
}

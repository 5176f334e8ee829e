use std::path::Path;

use holosub::datagen::dataset::{variant_dir, MANIFEST_FILE};
use holosub::datagen::{gen_dataset, pearson};
use log::info;

use crate::error::Result;
use crate::manifest::RunManifest;

pub fn run(manifest: &mut RunManifest, out: &Path) -> Result<Vec<String>> {
    let cfg = manifest.config.clone();
    let mut files = Vec::new();
    for &variant in &cfg.variants {
        let ds = gen_dataset(&cfg.dataset_config(variant), out)?;
        let name = variant.name();
        let labels: Vec<f64> = ds.manifest.records.iter().map(|r| r.label as f64).collect();
        let white: Vec<f64> = ds.manifest.records.iter().map(|r| r.white as f64).collect();
        let redraws: usize = ds.manifest.records.iter().map(|r| r.redraws).sum();
        let digest = ds.manifest.digest();
        println!("{name}: {} images, manifest digest {digest}", ds.len());
        info!("{name}: corr(label, white) = {:.4}, {redraws} redraws", pearson(&labels, &white));
        let s = &mut manifest.summary;
        s.set(format!("{name}.digest"), &digest);
        s.set(format!("{name}.images"), ds.len());
        s.set(format!("{name}.redraws"), redraws);
        s.set(format!("{name}.count_area_corr"), format!("{:?}", pearson(&labels, &white)));
        let dir = variant_dir(Path::new(""), variant);
        files.push(dir.join(MANIFEST_FILE).display().to_string());
        files.extend(ds.manifest.records.iter().map(|r| dir.join(&r.file).display().to_string()));
    }
    Ok(files)
}

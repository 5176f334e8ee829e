//! Synthetic numerosity benchmark.
//!
//! Every image shows `n ∈ 1..=6` non-overlapping objects. The total object
//! area is drawn independently of `n` and split across the objects, so the
//! amount of foreground carries no information about the count. Test
//! variants are derived from the same base scenes: they change size, shape,
//! polarity or fill while keeping everything else fixed.
//!
//! Images are written as binary PGM files under
//! `<root>/<variant>/<label>/<index>.pgm` next to a plain-text manifest.

pub mod dataset;
pub mod pgm;
pub mod raster;
pub mod scene;

use std::fmt;

use thiserror::Error;

use crate::kv::Section;

pub use dataset::{build_dataset, gen_dataset, load_dataset, Dataset, DatasetConfig, DatasetManifest, ImageRecord, Split};
pub use raster::{count_components, rasterize, ImageGray};
pub use scene::{gen_scene, Fill, Polarity, SceneObject, SceneSpec, Shape};

pub const MAX_COUNT: usize = 6;
pub const MARGIN: f64 = 2.0;
pub const SEPARATION: f64 = 2.0;
pub const MAX_ATTEMPTS: usize = 10_000;

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("object count {0} outside 1..=6")]
    InvalidCount(usize),
    #[error("could not place {count} objects after {attempts} attempts")]
    PlacementFailure { count: usize, attempts: usize },
    #[error("invalid dataset config: {0}")]
    Config(String),
    #[error("bad file {path}: {msg}")]
    Format { path: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VariantId {
    TrainCircles,
    Larger50,
    Triangles,
    Squares,
    ColorSwap,
    WhiteRings,
    BoundaryPolygons,
    BoundaryLarger50,
    BoundarySmaller50,
}

impl VariantId {
    pub const ALL: [VariantId; 9] = [
        VariantId::TrainCircles,
        VariantId::Larger50,
        VariantId::Triangles,
        VariantId::Squares,
        VariantId::ColorSwap,
        VariantId::WhiteRings,
        VariantId::BoundaryPolygons,
        VariantId::BoundaryLarger50,
        VariantId::BoundarySmaller50,
    ];

    /// The test variants, in table column order.
    pub const EVAL: [VariantId; 7] = [
        VariantId::Larger50,
        VariantId::Triangles,
        VariantId::Squares,
        VariantId::ColorSwap,
        VariantId::WhiteRings,
        VariantId::BoundaryLarger50,
        VariantId::BoundarySmaller50,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VariantId::TrainCircles => "train_circles",
            VariantId::Larger50 => "larger50",
            VariantId::Triangles => "triangles",
            VariantId::Squares => "squares",
            VariantId::ColorSwap => "color_swap",
            VariantId::WhiteRings => "white_rings",
            VariantId::BoundaryPolygons => "boundary_polygons",
            VariantId::BoundaryLarger50 => "boundary_larger50",
            VariantId::BoundarySmaller50 => "boundary_smaller50",
        }
    }

    pub fn parse(s: &str) -> Result<Self, DatagenError> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| DatagenError::Config(format!("unknown variant `{s}`")))
    }

    /// Variants built from polygon outlines rather than circles.
    pub fn is_boundary(self) -> bool {
        matches!(
            self,
            VariantId::BoundaryPolygons | VariantId::BoundaryLarger50 | VariantId::BoundarySmaller50
        )
    }

    /// Variants whose objects are filled, so each object is one connected
    /// component.
    pub fn is_solid(self) -> bool {
        !matches!(self, VariantId::WhiteRings) && !self.is_boundary()
    }
}

impl fmt::Display for VariantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Desk,
    Full,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::Desk => "desk",
            Profile::Full => "full",
        }
    }

    pub fn parse(s: &str) -> Result<Self, DatagenError> {
        match s {
            "desk" => Ok(Profile::Desk),
            "full" => Ok(Profile::Full),
            other => Err(DatagenError::Config(format!("unknown profile `{other}`"))),
        }
    }
}

/// Scene distribution parameters. Sizes are circumradii in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct GenParams {
    pub side: usize,
    pub per_class: usize,
    /// Total object area range for circle scenes, px².
    pub area: (f64, f64),
    /// Total object area range for boundary polygon scenes, px².
    pub boundary_area: (f64, f64),
    pub concentration: f64,
    pub radius_floor: f64,
    pub thickness: f64,
    /// Relative size jitter of boundary polygons.
    pub size_jitter: f64,
    pub min_sides: usize,
    pub max_sides: usize,
    /// Base-scene redraws allowed when a scaled variant cannot be placed.
    pub max_redraws: usize,
}

impl GenParams {
    pub fn for_profile(profile: Profile) -> Self {
        match profile {
            Profile::Desk => Self {
                side: 32,
                per_class: 100,
                area: (80.0, 120.0),
                boundary_area: (80.0, 110.0),
                concentration: 5.0,
                radius_floor: 2.0,
                thickness: 1.0,
                size_jitter: 0.3,
                min_sides: 3,
                max_sides: 8,
                max_redraws: 32,
            },
            Profile::Full => Self {
                side: 100,
                per_class: 1000,
                area: (900.0, 1800.0),
                boundary_area: (900.0, 1800.0),
                concentration: 5.0,
                radius_floor: 3.0,
                thickness: 2.0,
                size_jitter: 0.3,
                min_sides: 3,
                max_sides: 8,
                max_redraws: 32,
            },
        }
    }

    pub fn validate(&self) -> Result<(), DatagenError> {
        let bad = |m: &str| Err(DatagenError::Config(m.to_string()));
        if self.side < 8 {
            return bad("canvas side must be at least 8");
        }
        if self.per_class == 0 {
            return bad("per_class must be positive");
        }
        for (lo, hi) in [self.area, self.boundary_area] {
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return bad("area range must satisfy 0 < lo <= hi");
            }
        }
        if !(self.concentration > 0.0) || !(self.radius_floor > 0.0) || !(self.thickness > 0.0) {
            return bad("concentration, radius floor and thickness must be positive");
        }
        if !(0.0..1.0).contains(&self.size_jitter) {
            return bad("size jitter must lie in [0, 1)");
        }
        if self.min_sides < 3 || self.max_sides < self.min_sides {
            return bad("polygon sides must satisfy 3 <= min <= max");
        }
        let floor_area = MAX_COUNT as f64 * std::f64::consts::PI * self.radius_floor.powi(2);
        if self.area.0 < floor_area || self.boundary_area.0 < floor_area {
            return bad("smallest area budget cannot give six objects at the radius floor");
        }
        Ok(())
    }

    pub fn write_section(&self, s: &mut Section) {
        s.set("side", self.side);
        s.set("per_class", self.per_class);
        s.set("area", format!("{:?}:{:?}", self.area.0, self.area.1));
        s.set("boundary_area", format!("{:?}:{:?}", self.boundary_area.0, self.boundary_area.1));
        s.set("concentration", format!("{:?}", self.concentration));
        s.set("radius_floor", format!("{:?}", self.radius_floor));
        s.set("thickness", format!("{:?}", self.thickness));
        s.set("size_jitter", format!("{:?}", self.size_jitter));
        s.set("sides", format!("{}:{}", self.min_sides, self.max_sides));
        s.set("max_redraws", self.max_redraws);
        s.set("margin", format!("{MARGIN:?}"));
        s.set("separation", format!("{SEPARATION:?}"));
        s.set("max_attempts", MAX_ATTEMPTS);
    }

    /// Reads parameters from `s`, starting from `base` for absent keys.
    pub fn read_section(s: &Section, base: &GenParams) -> Result<Self, DatagenError> {
        fn num<T: std::str::FromStr>(s: &Section, key: &str, default: T) -> Result<T, DatagenError> {
            match s.get(key) {
                None => Ok(default),
                Some(v) => v.parse().map_err(|_| DatagenError::Config(format!("bad `{key}` = `{v}`"))),
            }
        }
        fn pair<T: std::str::FromStr + Copy>(s: &Section, key: &str, default: (T, T)) -> Result<(T, T), DatagenError> {
            match s.get(key) {
                None => Ok(default),
                Some(v) => {
                    let err = || DatagenError::Config(format!("bad `{key}` = `{v}`"));
                    let (a, b) = v.split_once(':').ok_or_else(err)?;
                    Ok((a.parse().map_err(|_| err())?, b.parse().map_err(|_| err())?))
                }
            }
        }
        let (min_sides, max_sides) = pair(s, "sides", (base.min_sides, base.max_sides))?;
        let p = Self {
            side: num(s, "side", base.side)?,
            per_class: num(s, "per_class", base.per_class)?,
            area: pair(s, "area", base.area)?,
            boundary_area: pair(s, "boundary_area", base.boundary_area)?,
            concentration: num(s, "concentration", base.concentration)?,
            radius_floor: num(s, "radius_floor", base.radius_floor)?,
            thickness: num(s, "thickness", base.thickness)?,
            size_jitter: num(s, "size_jitter", base.size_jitter)?,
            min_sides,
            max_sides,
            max_redraws: num(s, "max_redraws", base.max_redraws)?,
        };
        p.validate()?;
        Ok(p)
    }
}

/// Pearson correlation; 0 when either side is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len()) as f64;
    if n < 2.0 {
        return 0.0;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in VariantId::ALL {
            assert_eq!(VariantId::parse(v.name()).unwrap(), v);
        }
        assert!(VariantId::parse("circles").is_err());
        assert_eq!(VariantId::EVAL.len(), 7);
    }

    #[test]
    fn params_round_trip_and_validate() {
        for p in [Profile::Desk, Profile::Full] {
            let params = GenParams::for_profile(p);
            params.validate().unwrap();
            let mut s = Section::new("dataset");
            params.write_section(&mut s);
            let back = GenParams::read_section(&s, &GenParams::for_profile(Profile::Full)).unwrap();
            assert_eq!(back, params);
        }
        let mut bad = GenParams::for_profile(Profile::Desk);
        bad.area = (10.0, 20.0);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn pearson_examples() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]) - 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert_eq!(pearson(&[1.0, 1.0], &[1.0, 2.0]), 0.0);
    }
}

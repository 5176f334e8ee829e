//! Symbolic scenes and their sampling.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};

use crate::rng::CounterRng;

use super::{DatagenError, GenParams, VariantId, MARGIN, MAX_ATTEMPTS, MAX_COUNT, SEPARATION};

/// Smallest circumradius any rendered object may have.
pub const MIN_OBJECT_SIZE: f64 = 2.0;
const TRIES_PER_OBJECT: usize = 100;
const TAG_DERIVE: u64 = 0x4445_5256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Circle,
    Triangle,
    Square,
    Polygon(usize),
}

impl Shape {
    /// Number of polygon sides, `None` for a circle.
    pub fn sides(self) -> Option<usize> {
        match self {
            Shape::Circle => None,
            Shape::Triangle => Some(3),
            Shape::Square => Some(4),
            Shape::Polygon(k) => Some(k),
        }
    }

    fn code(self) -> String {
        match self {
            Shape::Circle => "circle".into(),
            Shape::Triangle => "triangle".into(),
            Shape::Square => "square".into(),
            Shape::Polygon(k) => format!("poly{k}"),
        }
    }

    fn from_code(s: &str) -> Option<Self> {
        match s {
            "circle" => Some(Shape::Circle),
            "triangle" => Some(Shape::Triangle),
            "square" => Some(Shape::Square),
            _ => s.strip_prefix("poly")?.parse().ok().filter(|&k| k >= 3).map(Shape::Polygon),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fill {
    Solid,
    /// Pixels within `thickness / 2` of the boundary.
    Outline(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    WhiteOnBlack,
    BlackOnWhite,
}

impl Polarity {
    pub fn name(self) -> &'static str {
        match self {
            Polarity::WhiteOnBlack => "white_on_black",
            Polarity::BlackOnWhite => "black_on_white",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "white_on_black" => Some(Polarity::WhiteOnBlack),
            "black_on_white" => Some(Polarity::BlackOnWhite),
            _ => None,
        }
    }

    /// Pixel value of object pixels.
    pub fn foreground(self) -> f64 {
        match self {
            Polarity::WhiteOnBlack => 1.0,
            Polarity::BlackOnWhite => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneObject {
    pub shape: Shape,
    /// `(x, y)` in pixels; pixel `(row, col)` covers `[col, col+1) × [row, row+1)`.
    pub center: (f64, f64),
    /// Circumradius in pixels.
    pub size: f64,
    pub fill: Fill,
    pub rotation: f64,
}

impl SceneObject {
    /// Radius of the disk that contains every pixel the object can paint.
    pub fn extent(&self) -> f64 {
        match self.fill {
            Fill::Solid => self.size,
            Fill::Outline(t) => self.size + t / 2.0,
        }
    }

    /// `shape:x:y:size:fill:rotation`, with `fill` either `solid` or `outline<t>`.
    pub fn encode(&self) -> String {
        let fill = match self.fill {
            Fill::Solid => "solid".to_string(),
            Fill::Outline(t) => format!("outline{t:?}"),
        };
        format!(
            "{}:{:?}:{:?}:{:?}:{fill}:{:?}",
            self.shape.code(),
            self.center.0,
            self.center.1,
            self.size,
            self.rotation
        )
    }

    pub fn decode(s: &str) -> Option<Self> {
        let p: Vec<&str> = s.split(':').collect();
        if p.len() != 6 {
            return None;
        }
        let fill = if p[4] == "solid" {
            Fill::Solid
        } else {
            Fill::Outline(p[4].strip_prefix("outline")?.parse().ok()?)
        };
        Some(Self {
            shape: Shape::from_code(p[0])?,
            center: (p[1].parse().ok()?, p[2].parse().ok()?),
            size: p[3].parse().ok()?,
            fill,
            rotation: p[5].parse().ok()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub count: usize,
    pub objects: Vec<SceneObject>,
    pub polarity: Polarity,
    pub height: usize,
    pub width: usize,
}

impl SceneSpec {
    /// Checks count, canvas margins and pairwise separation.
    pub fn check(&self) -> Result<(), String> {
        if self.objects.len() != self.count || !(1..=MAX_COUNT).contains(&self.count) {
            return Err(format!("{} objects for count {}", self.objects.len(), self.count));
        }
        let (w, h) = (self.width as f64, self.height as f64);
        for (i, o) in self.objects.iter().enumerate() {
            let r = o.extent();
            let (x, y) = o.center;
            if x - r < MARGIN || y - r < MARGIN || x + r > w - MARGIN || y + r > h - MARGIN {
                return Err(format!("object {i} violates the canvas margin"));
            }
            if o.size < MIN_OBJECT_SIZE {
                return Err(format!("object {i} has size {} below {MIN_OBJECT_SIZE}", o.size));
            }
            for (j, p) in self.objects.iter().enumerate().skip(i + 1) {
                let d = (x - p.center.0).hypot(y - p.center.1);
                if d <= r + p.extent() + SEPARATION {
                    return Err(format!("objects {i} and {j} are too close"));
                }
            }
        }
        Ok(())
    }

    pub fn encode_objects(&self) -> String {
        let parts: Vec<String> = self.objects.iter().map(SceneObject::encode).collect();
        parts.join(";")
    }

    pub fn mean_size(&self) -> f64 {
        self.objects.iter().map(|o| o.size).sum::<f64>() / self.objects.len() as f64
    }
}

/// Finds centers for disks of radius `extents` by rejection sampling.
/// Larger disks go first; an object that fails `TRIES_PER_OBJECT` times
/// restarts the whole scene. Every candidate center counts against
/// `MAX_ATTEMPTS`.
pub fn place(extents: &[f64], side: usize, rng: &mut CounterRng) -> Result<Vec<(f64, f64)>, DatagenError> {
    let fail = |attempts| DatagenError::PlacementFailure {
        count: extents.len(),
        attempts,
    };
    let mut order: Vec<usize> = (0..extents.len()).collect();
    order.sort_by(|&a, &b| extents[b].total_cmp(&extents[a]));
    let s = side as f64;
    if extents.iter().any(|&r| r + MARGIN > s - r - MARGIN) {
        return Err(fail(0));
    }
    let mut attempts = 0;
    'scene: loop {
        let mut centers = vec![(0.0, 0.0); extents.len()];
        for (k, &i) in order.iter().enumerate() {
            let r = extents[i];
            let (lo, hi) = (r + MARGIN, s - r - MARGIN);
            let mut placed = false;
            for _ in 0..TRIES_PER_OBJECT {
                if attempts == MAX_ATTEMPTS {
                    return Err(fail(attempts));
                }
                attempts += 1;
                let c = (rng.uniform(lo, hi), rng.uniform(lo, hi));
                let clear = order[..k].iter().all(|&j| {
                    let d = (c.0 - centers[j].0).hypot(c.1 - centers[j].1);
                    d > r + extents[j] + SEPARATION
                });
                if clear {
                    centers[i] = c;
                    placed = true;
                    break;
                }
            }
            if !placed {
                continue 'scene;
            }
        }
        return Ok(centers);
    }
}

/// Splits `area` into `n` disk radii via a symmetric Dirichlet, scaling
/// each by `jitter(u)` and redrawing until every radius reaches `floor`.
fn split_area(
    n: usize,
    area: f64,
    p: &GenParams,
    rng: &mut CounterRng,
    jitter: f64,
) -> Result<Vec<f64>, DatagenError> {
    for _ in 0..MAX_ATTEMPTS {
        let shares = if n == 1 { vec![1.0] } else { rng.dirichlet(n, p.concentration) };
        let radii: Vec<f64> = shares
            .iter()
            .map(|w| {
                let r = (area * w / PI).sqrt();
                if jitter > 0.0 {
                    r * rng.uniform(1.0 - jitter, 1.0 + jitter)
                } else {
                    r
                }
            })
            .collect();
        if radii.iter().all(|&r| r >= p.radius_floor) {
            return Ok(radii);
        }
    }
    Err(DatagenError::PlacementFailure {
        count: n,
        attempts: MAX_ATTEMPTS,
    })
}

fn base_scene(n: usize, boundary: bool, p: &GenParams, rng: &mut CounterRng) -> Result<SceneSpec, DatagenError> {
    let half = p.thickness / 2.0;
    let (objects, pad) = if boundary {
        let area = rng.uniform(p.boundary_area.0, p.boundary_area.1);
        let radii = split_area(n, area, p, rng, p.size_jitter)?;
        let objects: Vec<SceneObject> = radii
            .iter()
            .map(|&size| {
                let sides = p.min_sides + rng.next_below((p.max_sides - p.min_sides + 1) as u64) as usize;
                SceneObject {
                    shape: Shape::Polygon(sides),
                    center: (0.0, 0.0),
                    size,
                    fill: Fill::Outline(p.thickness),
                    rotation: rng.uniform(0.0, TAU),
                }
            })
            .collect();
        (objects, 0.0)
    } else {
        let area = rng.uniform(p.area.0, p.area.1);
        let radii = split_area(n, area, p, rng, 0.0)?;
        let objects = radii
            .iter()
            .map(|&size| SceneObject {
                shape: Shape::Circle,
                center: (0.0, 0.0),
                size,
                fill: Fill::Solid,
                rotation: 0.0,
            })
            .collect();
        // room for the ring variant's outline
        (objects, half)
    };
    let mut scene = SceneSpec {
        count: n,
        objects,
        polarity: Polarity::WhiteOnBlack,
        height: p.side,
        width: p.side,
    };
    replace_centers(&mut scene, pad, rng)?;
    Ok(scene)
}

fn replace_centers(scene: &mut SceneSpec, pad: f64, rng: &mut CounterRng) -> Result<(), DatagenError> {
    let extents: Vec<f64> = scene.objects.iter().map(|o| o.extent() + pad).collect();
    let centers = place(&extents, scene.width.min(scene.height), rng)?;
    for (o, c) in scene.objects.iter_mut().zip(centers) {
        o.center = c;
    }
    Ok(())
}

/// Samples a scene with `n` objects for `variant`.
///
/// The base scene (circles, or outlined polygons for the boundary family)
/// is drawn first from `rng`; the variant transform then uses a forked
/// stream. Two variants sharing a family therefore see the same base scene
/// for the same `rng`.
pub fn gen_scene(n: usize, variant: VariantId, p: &GenParams, rng: &mut CounterRng) -> Result<SceneSpec, DatagenError> {
    if !(1..=MAX_COUNT).contains(&n) {
        return Err(DatagenError::InvalidCount(n));
    }
    let mut scene = base_scene(n, variant.is_boundary(), p, rng)?;
    let mut derive = rng.fork(TAG_DERIVE);
    match variant {
        VariantId::TrainCircles | VariantId::BoundaryPolygons => {}
        VariantId::ColorSwap => scene.polarity = Polarity::BlackOnWhite,
        VariantId::WhiteRings => scene.objects.iter_mut().for_each(|o| o.fill = Fill::Outline(p.thickness)),
        VariantId::Triangles => scene.objects.iter_mut().for_each(|o| {
            o.shape = Shape::Triangle;
            o.rotation = -FRAC_PI_2;
        }),
        VariantId::Squares => scene.objects.iter_mut().for_each(|o| {
            o.shape = Shape::Square;
            o.rotation = FRAC_PI_4;
        }),
        VariantId::Larger50 | VariantId::BoundaryLarger50 => {
            scene.objects.iter_mut().for_each(|o| o.size *= 1.5);
            replace_centers(&mut scene, 0.0, &mut derive)?;
        }
        VariantId::BoundarySmaller50 => scene.objects.iter_mut().for_each(|o| o.size = (o.size * 0.5).max(MIN_OBJECT_SIZE)),
    }
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::Profile;

    #[test]
    fn object_encoding_round_trips() {
        let o = SceneObject {
            shape: Shape::Polygon(7),
            center: (12.25, 3.0 / 7.0),
            size: 2.5,
            fill: Fill::Outline(1.0),
            rotation: 0.1,
        };
        assert_eq!(SceneObject::decode(&o.encode()), Some(o));
        assert_eq!(SceneObject::decode("poly2:1:1:1:solid:0"), None);
    }

    #[test]
    fn scenes_satisfy_invariants() {
        use crate::datagen::dataset::{scene_for, DatasetConfig};
        for profile in [Profile::Desk, Profile::Full] {
            for v in VariantId::ALL {
                let cfg = DatasetConfig::new(v, profile, 1);
                for i in 0..60 {
                    let (scene, _) = scene_for(&cfg, i).unwrap();
                    assert_eq!(scene.count, i % 6 + 1);
                    scene.check().unwrap_or_else(|e| panic!("{v} image {i}: {e}"));
                }
            }
        }
    }

    #[test]
    fn same_stream_same_scene() {
        let p = GenParams::for_profile(Profile::Desk);
        let a = gen_scene(4, VariantId::Larger50, &p, &mut CounterRng::new(3)).unwrap();
        let b = gen_scene(4, VariantId::Larger50, &p, &mut CounterRng::new(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn variants_share_base_scene() {
        let p = GenParams::for_profile(Profile::Desk);
        let base = gen_scene(5, VariantId::TrainCircles, &p, &mut CounterRng::new(9)).unwrap();
        let swap = gen_scene(5, VariantId::ColorSwap, &p, &mut CounterRng::new(9)).unwrap();
        let large = gen_scene(5, VariantId::Larger50, &p, &mut CounterRng::new(9)).unwrap();
        assert_eq!(base.objects, swap.objects);
        assert_eq!(swap.polarity, Polarity::BlackOnWhite);
        for (a, b) in base.objects.iter().zip(&large.objects) {
            assert_eq!(b.size, 1.5 * a.size);
        }
    }

    #[test]
    fn invalid_count() {
        let p = GenParams::for_profile(Profile::Desk);
        assert!(matches!(gen_scene(0, VariantId::TrainCircles, &p, &mut CounterRng::new(0)), Err(DatagenError::InvalidCount(0))));
        assert!(gen_scene(7, VariantId::TrainCircles, &p, &mut CounterRng::new(0)).is_err());
    }

    #[test]
    fn oversized_objects_fail_cleanly() {
        let r = place(&[10.0; 6], 32, &mut CounterRng::new(0));
        assert!(matches!(r, Err(DatagenError::PlacementFailure { count: 6, .. })));
        let r = place(&[20.0], 32, &mut CounterRng::new(0));
        assert!(matches!(r, Err(DatagenError::PlacementFailure { attempts: 0, .. })));
    }
}

//! Binary rendering of scenes by pixel-center sampling.

use std::f64::consts::TAU;

use super::scene::{Fill, Polarity, SceneObject, SceneSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct ImageGray {
    pub height: usize,
    pub width: usize,
    /// Row-major values in `[0, 1]`.
    pub pixels: Vec<f64>,
}

impl ImageGray {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Option<Self> {
        (pixels.len() == height * width && pixels.iter().all(|v| (0.0..=1.0).contains(v))).then_some(Self { height, width, pixels })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            pixels: vec![value; height * width],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn count_value(&self, value: f64) -> usize {
        self.pixels.iter().filter(|&&v| v == value).count()
    }

    pub fn white_count(&self) -> usize {
        self.count_value(1.0)
    }

    /// `1 − x` per pixel.
    pub fn inverted(&self) -> Self {
        Self {
            height: self.height,
            width: self.width,
            pixels: self.pixels.iter().map(|v| 1.0 - v).collect(),
        }
    }
}

fn vertices(o: &SceneObject, sides: usize) -> Vec<(f64, f64)> {
    (0..sides)
        .map(|j| {
            let a = o.rotation + TAU * j as f64 / sides as f64;
            (o.center.0 + o.size * a.cos(), o.center.1 + o.size * a.sin())
        })
        .collect()
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p.0 - a.0 - t * dx).hypot(p.1 - a.1 - t * dy)
}

/// Point-in-convex-polygon for counter-clockwise or clockwise vertices.
fn inside_convex(p: (f64, f64), v: &[(f64, f64)]) -> bool {
    let mut sign = 0.0;
    for i in 0..v.len() {
        let (a, b) = (v[i], v[(i + 1) % v.len()]);
        let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
        if cross != 0.0 {
            if sign == 0.0 {
                sign = cross.signum();
            } else if cross.signum() != sign {
                return false;
            }
        }
    }
    true
}

/// Whether object `o` covers point `p`.
pub fn covers(o: &SceneObject, p: (f64, f64)) -> bool {
    match o.shape.sides() {
        None => {
            let d = (p.0 - o.center.0).hypot(p.1 - o.center.1);
            match o.fill {
                Fill::Solid => d <= o.size,
                Fill::Outline(t) => (d - o.size).abs() <= t / 2.0,
            }
        }
        Some(k) => {
            let v = vertices(o, k);
            match o.fill {
                Fill::Solid => inside_convex(p, &v),
                Fill::Outline(t) => (0..k).any(|i| segment_distance(p, v[i], v[(i + 1) % k]) <= t / 2.0),
            }
        }
    }
}

/// Paints every pixel whose center an object covers.
pub fn rasterize(scene: &SceneSpec) -> ImageGray {
    let (h, w) = (scene.height, scene.width);
    let mut mask = vec![false; h * w];
    for o in &scene.objects {
        let r = o.extent() + 1.0;
        let (x, y) = o.center;
        let c0 = (x - r).floor().max(0.0) as usize;
        let c1 = ((x + r).ceil() as usize).min(w);
        let r0 = (y - r).floor().max(0.0) as usize;
        let r1 = ((y + r).ceil() as usize).min(h);
        // polygons: precompute once per object
        let verts = o.shape.sides().map(|k| vertices(o, k));
        for row in r0..r1 {
            for col in c0..c1 {
                let p = (col as f64 + 0.5, row as f64 + 0.5);
                let hit = match (&verts, o.fill) {
                    (None, _) => covers(o, p),
                    (Some(v), Fill::Solid) => inside_convex(p, v),
                    (Some(v), Fill::Outline(t)) => (0..v.len()).any(|i| segment_distance(p, v[i], v[(i + 1) % v.len()]) <= t / 2.0),
                };
                if hit {
                    mask[row * w + col] = true;
                }
            }
        }
    }
    let (fg, bg) = match scene.polarity {
        Polarity::WhiteOnBlack => (1.0, 0.0),
        Polarity::BlackOnWhite => (0.0, 1.0),
    };
    ImageGray {
        height: h,
        width: w,
        pixels: mask.into_iter().map(|m| if m { fg } else { bg }).collect(),
    }
}

/// Number of 8-connected components of pixels equal to `foreground`.
pub fn count_components(img: &ImageGray, foreground: f64) -> usize {
    let (h, w) = (img.height, img.width);
    let mut seen = vec![false; h * w];
    let mut stack = Vec::new();
    let mut count = 0;
    for start in 0..h * w {
        if seen[start] || img.pixels[start] != foreground {
            continue;
        }
        count += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (r, c) = ((i / w) as isize, (i % w) as isize);
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let (nr, nc) = (r + dr, c + dc);
                    if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                        continue;
                    }
                    let j = nr as usize * w + nc as usize;
                    if !seen[j] && img.pixels[j] == foreground {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
    }
    count
}

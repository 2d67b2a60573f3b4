//! Room layouts as labelled triangle soups, and a seeded procedural generator
//! for rectangular rooms with box furniture.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SurfaceLabel {
    Wall,
    Floor,
    Ceiling,
    Furniture,
}

impl SurfaceLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            SurfaceLabel::Wall => "wall",
            SurfaceLabel::Floor => "floor",
            SurfaceLabel::Ceiling => "ceiling",
            SurfaceLabel::Furniture => "furniture",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "wall" => Some(SurfaceLabel::Wall),
            "floor" => Some(SurfaceLabel::Floor),
            "ceiling" => Some(SurfaceLabel::Ceiling),
            "furniture" => Some(SurfaceLabel::Furniture),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triangle {
    pub vertices: [[f64; 3]; 3],
    pub label: SurfaceLabel,
}

impl Triangle {
    pub fn normal(&self) -> [f64; 3] {
        let [a, b, c] = self.vertices;
        let e1 = sub(b, a);
        let e2 = sub(c, a);
        let n = cross(e1, e2);
        let len = dot(n, n).sqrt();
        if len == 0.0 {
            return [0.0; 3];
        }
        [n[0] / len, n[1] / len, n[2] / len]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn center(&self) -> [f64; 3] {
        [
            (self.min[0] + self.max[0]) / 2.0,
            (self.min[1] + self.max[1]) / 2.0,
            (self.min[2] + self.max[2]) / 2.0,
        ]
    }

    /// True when the open interiors overlap.
    pub fn intersects(&self, other: &Aabb) -> bool {
        (0..3).all(|k| self.min[k] < other.max[k] && other.min[k] < self.max[k])
    }

    pub fn contains_box(&self, other: &Aabb, eps: f64) -> bool {
        (0..3).all(|k| other.min[k] >= self.min[k] - eps && other.max[k] <= self.max[k] + eps)
    }

    pub fn contains_point(&self, p: [f64; 3], eps: f64) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] - eps && p[k] <= self.max[k] + eps)
    }

    pub fn of_points(points: impl IntoIterator<Item = [f64; 3]>) -> Option<Aabb> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut b = Aabb { min: first, max: first };
        for p in it {
            for k in 0..3 {
                b.min[k] = b.min[k].min(p[k]);
                b.max[k] = b.max[k].max(p[k]);
            }
        }
        Some(b)
    }
}

/// Room geometry. Every quad occupies two consecutive triangles, so quad `q`
/// is triangles `2q` and `2q + 1`; `selected_wall` is a quad index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutScene {
    pub triangles: Vec<Triangle>,
    pub room_aabb: Aabb,
    pub selected_wall: usize,
    pub center: [f64; 3],
}

impl LayoutScene {
    pub fn new(triangles: Vec<Triangle>, selected_wall: usize, center: [f64; 3]) -> Result<Self> {
        let shell = triangles
            .iter()
            .filter(|t| t.label != SurfaceLabel::Furniture)
            .flat_map(|t| t.vertices);
        let room_aabb = Aabb::of_points(shell).ok_or_else(|| Error::input("layout has no room surfaces"))?;
        let layout = LayoutScene { triangles, room_aabb, selected_wall, center };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        let n_quads = self.triangles.len() / 2;
        if self.selected_wall >= n_quads {
            return Err(Error::input("selected wall index out of range"));
        }
        for tri in self.selected_wall_triangles() {
            if tri.label != SurfaceLabel::Wall || tri.normal()[2].abs() > 1e-9 {
                return Err(Error::input("selected wall must be a vertical wall quad"));
            }
        }
        if !self.room_aabb.contains_point(self.center, 0.0) {
            return Err(Error::input("layout center lies outside the room"));
        }
        let eps = 1e-9;
        for t in &self.triangles {
            if t.label == SurfaceLabel::Furniture && !t.vertices.iter().all(|v| self.room_aabb.contains_point(*v, eps)) {
                return Err(Error::input("furniture extends outside the room"));
            }
        }
        Ok(())
    }

    pub fn selected_wall_triangles(&self) -> &[Triangle] {
        &self.triangles[2 * self.selected_wall..2 * self.selected_wall + 2]
    }

    /// Bounding boxes of consecutive furniture blocks of 12 triangles.
    pub fn furniture_boxes(&self) -> Vec<Aabb> {
        let furn: Vec<_> = self.triangles.iter().filter(|t| t.label == SurfaceLabel::Furniture).collect();
        furn.chunks(12)
            .filter_map(|c| Aabb::of_points(c.iter().flat_map(|t| t.vertices)))
            .collect()
    }
}

/// Furniture kind with footprint and height ranges in metres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FurnitureKind {
    pub name: String,
    pub size_min: [f64; 3],
    pub size_max: [f64; 3],
}

/// Furniture palette selected by keywords in a room description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomTemplate {
    pub name: String,
    pub keywords: Vec<String>,
    pub items: Vec<FurnitureKind>,
}

fn kind(name: &str, lo: [f64; 3], hi: [f64; 3]) -> FurnitureKind {
    FurnitureKind { name: name.to_string(), size_min: lo, size_max: hi }
}

fn template(name: &str, keywords: &[&str], items: Vec<FurnitureKind>) -> RoomTemplate {
    RoomTemplate {
        name: name.to_string(),
        keywords: keywords.iter().map(|k| k.to_string()).collect(),
        items,
    }
}

/// Built-in templates. The last entry is the fallback.
pub fn builtin_templates() -> Vec<RoomTemplate> {
    alloc::vec![
        template(
            "bedroom",
            &["bedroom", "bed"],
            alloc::vec![
                kind("bed", [1.4, 1.9, 0.4], [1.8, 2.1, 0.6]),
                kind("nightstand", [0.4, 0.4, 0.5], [0.5, 0.5, 0.6]),
                kind("wardrobe", [1.0, 0.5, 1.8], [1.4, 0.6, 2.1]),
            ],
        ),
        template(
            "kitchen",
            &["kitchen", "dining"],
            alloc::vec![
                kind("counter", [1.6, 0.6, 0.85], [2.4, 0.65, 0.95]),
                kind("table", [0.9, 0.9, 0.72], [1.4, 0.9, 0.78]),
                kind("fridge", [0.6, 0.65, 1.7], [0.75, 0.7, 1.9]),
            ],
        ),
        template(
            "office",
            &["office", "study", "library"],
            alloc::vec![
                kind("desk", [1.2, 0.6, 0.72], [1.6, 0.8, 0.76]),
                kind("shelf", [0.8, 0.3, 1.6], [1.2, 0.4, 2.0]),
                kind("cabinet", [0.5, 0.5, 0.7], [0.8, 0.6, 1.0]),
            ],
        ),
        template(
            "living room",
            &["living", "lounge"],
            alloc::vec![
                kind("sofa", [1.8, 0.8, 0.8], [2.2, 0.95, 0.9]),
                kind("coffee table", [0.8, 0.5, 0.4], [1.2, 0.7, 0.45]),
                kind("tv stand", [1.2, 0.4, 0.5], [1.8, 0.45, 0.6]),
            ],
        ),
    ]
}

/// Picks the first template whose keyword occurs in `description`
/// (case-insensitive), else the last template.
pub fn route_template<'a>(templates: &'a [RoomTemplate], description: &str) -> Option<&'a RoomTemplate> {
    let lower = description.to_lowercase();
    templates
        .iter()
        .find(|t| t.keywords.iter().any(|k| lower.contains(k.as_str())))
        .or_else(|| templates.last())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    /// Extent along x, metres.
    pub width: f64,
    /// Extent along y, metres.
    pub depth: f64,
    pub height: f64,
    pub furniture_count: usize,
    pub template: Option<RoomTemplate>,
}

impl RoomSpec {
    pub fn new(width: f64, depth: f64, height: f64, furniture_count: usize) -> Self {
        RoomSpec { width, depth, height, furniture_count, template: None }
    }
}

/// Horizontal clearance kept between furniture and the room centre column.
pub const CENTER_CLEARANCE: f64 = 0.6;
/// Minimum gap between furniture pieces and from walls.
pub const FURNITURE_GAP: f64 = 0.05;
pub const PLACEMENT_ATTEMPTS: usize = 200;

/// Builds a rectangular room `[-w/2, w/2] × [-d/2, d/2] × [0, h]` with the
/// +y wall selected and the centre at mid-height.
pub fn procedural_layout(seed: u64, spec: &RoomSpec) -> Result<LayoutScene> {
    let (w, d, h) = (spec.width, spec.depth, spec.height);
    if !(w > 0.0 && d > 0.0 && h > 0.0) || !(w.is_finite() && d.is_finite() && h.is_finite()) {
        return Err(Error::input("room dimensions must be positive and finite"));
    }
    let (x0, x1, y0, y1) = (-w / 2.0, w / 2.0, -d / 2.0, d / 2.0);
    let mut tris = Vec::new();

    // Walls wound so normals face inward. +y wall first.
    push_quad(&mut tris, [[x0, y1, 0.0], [x1, y1, 0.0], [x1, y1, h], [x0, y1, h]], SurfaceLabel::Wall);
    push_quad(&mut tris, [[x1, y1, 0.0], [x1, y0, 0.0], [x1, y0, h], [x1, y1, h]], SurfaceLabel::Wall);
    push_quad(&mut tris, [[x1, y0, 0.0], [x0, y0, 0.0], [x0, y0, h], [x1, y0, h]], SurfaceLabel::Wall);
    push_quad(&mut tris, [[x0, y0, 0.0], [x0, y1, 0.0], [x0, y1, h], [x0, y0, h]], SurfaceLabel::Wall);
    for (z, label) in [(0.0, SurfaceLabel::Floor), (h, SurfaceLabel::Ceiling)] {
        for (xa, xb) in [(x0, 0.0), (0.0, x1)] {
            for (ya, yb) in [(y0, 0.0), (0.0, y1)] {
                let q = [[xa, ya, z], [xb, ya, z], [xb, yb, z], [xa, yb, z]];
                push_quad(&mut tris, q, label);
            }
        }
    }

    let templates = builtin_templates();
    let tpl = match &spec.template {
        Some(t) => t,
        None => templates.last().expect("builtin templates are non-empty"),
    };
    if spec.furniture_count > 0 && tpl.items.is_empty() {
        return Err(Error::input("furniture template has no items"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut boxes: Vec<Aabb> = Vec::new();
    for i in 0..spec.furniture_count {
        let item = &tpl.items[i % tpl.items.len()];
        let b = place_box(&mut rng, item, w, d, h, &boxes).ok_or_else(|| Error::Placement {
            item: item.name.clone(),
            attempts: PLACEMENT_ATTEMPTS,
        })?;
        boxes.push(b);
        push_box(&mut tris, &b);
    }

    LayoutScene::new(tris, 0, [0.0, 0.0, h / 2.0])
}

fn place_box(rng: &mut ChaCha8Rng, item: &FurnitureKind, w: f64, d: f64, h: f64, existing: &[Aabb]) -> Option<Aabb> {
    for _ in 0..PLACEMENT_ATTEMPTS {
        let mut size = [0.0; 3];
        for k in 0..3 {
            let (lo, hi) = (item.size_min[k], item.size_max[k].max(item.size_min[k]));
            size[k] = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        }
        if rng.random_bool(0.5) {
            size.swap(0, 1);
        }
        let free_x = w - 2.0 * FURNITURE_GAP - size[0];
        let free_y = d - 2.0 * FURNITURE_GAP - size[1];
        if free_x <= 0.0 || free_y <= 0.0 || size[2] >= h - FURNITURE_GAP {
            continue;
        }
        let min_x = -w / 2.0 + FURNITURE_GAP + rng.random_range(0.0..free_x);
        let min_y = -d / 2.0 + FURNITURE_GAP + rng.random_range(0.0..free_y);
        let b = Aabb {
            min: [min_x, min_y, 0.0],
            max: [min_x + size[0], min_y + size[1], size[2]],
        };
        let clear = Aabb {
            min: [-CENTER_CLEARANCE, -CENTER_CLEARANCE, f64::NEG_INFINITY],
            max: [CENTER_CLEARANCE, CENTER_CLEARANCE, f64::INFINITY],
        };
        if b.intersects(&clear) {
            continue;
        }
        let grown = Aabb {
            min: [b.min[0] - FURNITURE_GAP, b.min[1] - FURNITURE_GAP, b.min[2]],
            max: [b.max[0] + FURNITURE_GAP, b.max[1] + FURNITURE_GAP, b.max[2]],
        };
        if existing.iter().any(|e| e.intersects(&grown)) {
            continue;
        }
        return Some(b);
    }
    None
}

fn push_quad(tris: &mut Vec<Triangle>, q: [[f64; 3]; 4], label: SurfaceLabel) {
    tris.push(Triangle { vertices: [q[0], q[1], q[2]], label });
    tris.push(Triangle { vertices: [q[0], q[2], q[3]], label });
}

/// Six faces, two triangles each.
fn push_box(tris: &mut Vec<Triangle>, b: &Aabb) {
    let [x0, y0, z0] = b.min;
    let [x1, y1, z1] = b.max;
    let l = SurfaceLabel::Furniture;
    push_quad(tris, [[x0, y0, z0], [x0, y1, z0], [x1, y1, z0], [x1, y0, z0]], l);
    push_quad(tris, [[x0, y0, z1], [x1, y0, z1], [x1, y1, z1], [x0, y1, z1]], l);
    push_quad(tris, [[x0, y0, z0], [x1, y0, z0], [x1, y0, z1], [x0, y0, z1]], l);
    push_quad(tris, [[x1, y1, z0], [x0, y1, z0], [x0, y1, z1], [x1, y1, z1]], l);
    push_quad(tris, [[x0, y1, z0], [x0, y0, z0], [x0, y0, z1], [x0, y1, z1]], l);
    push_quad(tris, [[x1, y0, z0], [x1, y1, z0], [x1, y1, z1], [x1, y0, z1]], l);
}

pub(crate) fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

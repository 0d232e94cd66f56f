//! Yaw-rotated 3D boxes and the exact geometry the pipeline needs on them:
//! footprint polygons, BEV and 3D IoU, point containment and the size
//! descriptors used as features.
//!
//! Boxes rotate about the vertical axis only, so every 3D intersection
//! factors into a footprint overlap times a vertical interval overlap.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Intersections smaller than this (m²) count as empty.
pub const MIN_INTERSECTION_AREA: f64 = 1e-12;

/// 7-parameter box: center, extents along the box axes, yaw about +z.
///
/// `length` runs along the heading, `width` across it. Use [`OrientedBox3D::new`]
/// to get the invariants checked (positive extents, yaw in `[-π, π)`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox3D {
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub yaw: f64,
}

/// A 2D point in the ground plane.
pub type Vec2 = [f64; 2];

impl OrientedBox3D {
    pub fn new(
        center: [f64; 3],
        length: f64,
        width: f64,
        height: f64,
        yaw: f64,
    ) -> Result<Self> {
        let vals = [center[0], center[1], center[2], length, width, height, yaw];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation(format!("non-finite box parameter in {vals:?}")));
        }
        if length <= 0.0 || width <= 0.0 || height <= 0.0 {
            return Err(Error::validation(format!(
                "box extents must be positive, got l={length} w={width} h={height}"
            )));
        }
        Ok(Self {
            cx: center[0],
            cy: center[1],
            cz: center[2],
            length,
            width,
            height,
            yaw: normalize_yaw(yaw),
        })
    }

    pub fn center(&self) -> [f64; 3] {
        [self.cx, self.cy, self.cz]
    }

    pub fn volume(&self) -> f64 {
        self.length * self.width * self.height
    }

    pub fn surface_area(&self) -> f64 {
        let (l, w, h) = (self.length, self.width, self.height);
        2.0 * (l * w + l * h + w * h)
    }

    /// Volume over surface area; homogeneous of degree one in the extents.
    pub fn relative_size(&self) -> f64 {
        self.volume() / self.surface_area()
    }

    pub fn footprint_area(&self) -> f64 {
        self.length * self.width
    }

    pub fn z_bottom(&self) -> f64 {
        self.cz - 0.5 * self.height
    }

    pub fn z_top(&self) -> f64 {
        self.cz + 0.5 * self.height
    }

    /// Radius of the footprint's circumscribed circle.
    pub fn bev_radius(&self) -> f64 {
        0.5 * self.length.hypot(self.width)
    }

    /// Footprint corners, counter-clockwise, starting at the front-right corner.
    pub fn bev_polygon(&self) -> [Vec2; 4] {
        let (s, c) = self.yaw.sin_cos();
        let hl = 0.5 * self.length;
        let hw = 0.5 * self.width;
        [[hl, -hw], [hl, hw], [-hl, hw], [-hl, -hw]].map(|[u, v]| {
            [self.cx + c * u - s * v, self.cy + s * u + c * v]
        })
    }

    /// Closed-face containment test in the box frame.
    pub fn contains(&self, x: f64, y: f64, z: f64) -> bool {
        let dz = z - self.cz;
        if dz.abs() > 0.5 * self.height {
            return false;
        }
        let dx = x - self.cx;
        let dy = y - self.cy;
        let (s, c) = self.yaw.sin_cos();
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        u.abs() <= 0.5 * self.length && v.abs() <= 0.5 * self.width
    }

    pub fn contains_point(&self, p: &LidarPoint) -> bool {
        self.contains(p.x, p.y, p.z)
    }

    /// Same box moved by `(dx, dy)` and then rotated by `angle` about the origin.
    pub fn rigid_motion(&self, dx: f64, dy: f64, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let x = self.cx + dx;
        let y = self.cy + dy;
        Self {
            cx: c * x - s * y,
            cy: s * x + c * y,
            yaw: normalize_yaw(self.yaw + angle),
            ..*self
        }
    }

    fn sort_key(&self) -> [u64; 7] {
        [
            self.cx, self.cy, self.cz, self.length, self.width, self.height, self.yaw,
        ]
        .map(f64::to_bits)
    }
}

/// Maps any angle onto `[-π, π)`.
pub fn normalize_yaw(yaw: f64) -> f64 {
    if (-PI..PI).contains(&yaw) {
        return yaw;
    }
    let mut a = (yaw + PI).rem_euclid(2.0 * PI) - PI;
    if a >= PI {
        a -= 2.0 * PI;
    }
    a
}

/// A Lidar return. Reflectance is kept in `[0, 1]` by the readers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub r: f64,
}

impl LidarPoint {
    pub fn new(x: f64, y: f64, z: f64, r: f64) -> Self {
        Self { x, y, z, r }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub frame_id: String,
    pub points: Vec<LidarPoint>,
}

impl PointCloud {
    pub fn new(frame_id: impl Into<String>, points: Vec<LidarPoint>) -> Self {
        Self {
            frame_id: frame_id.into(),
            points,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Signed shoelace area; positive for counter-clockwise polygons.
pub fn polygon_area(poly: &[Vec2]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let [x0, y0] = poly[i];
        let [x1, y1] = poly[(i + 1) % poly.len()];
        acc += x0 * y1 - x1 * y0;
    }
    0.5 * acc
}

fn cross(o: Vec2, a: Vec2, b: Vec2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn line_intersection(p: Vec2, q: Vec2, a: Vec2, b: Vec2) -> Vec2 {
    // p + t (q - p) on the line through a, b
    let cp = cross(a, b, p);
    let cq = cross(a, b, q);
    let t = cp / (cp - cq);
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

/// Sutherland–Hodgman clipping of `subject` against a convex,
/// counter-clockwise `clip` polygon.
pub fn clip_convex(subject: &[Vec2], clip: &[Vec2]) -> Vec<Vec2> {
    let mut output: Vec<Vec2> = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let input = std::mem::take(&mut output);
        let mut prev = input[input.len() - 1];
        let mut prev_inside = cross(a, b, prev) >= 0.0;
        for &cur in &input {
            let cur_inside = cross(a, b, cur) >= 0.0;
            if cur_inside {
                if !prev_inside {
                    output.push(line_intersection(prev, cur, a, b));
                }
                output.push(cur);
            } else if prev_inside {
                output.push(line_intersection(prev, cur, a, b));
            }
            prev = cur;
            prev_inside = cur_inside;
        }
    }
    output
}

/// Footprint intersection area of two boxes.
pub fn bev_intersection_area(a: &OrientedBox3D, b: &OrientedBox3D) -> f64 {
    let (a, b) = ordered(a, b);
    let dist = (a.cx - b.cx).hypot(a.cy - b.cy);
    if dist > a.bev_radius() + b.bev_radius() {
        return 0.0;
    }
    let area = polygon_area(&clip_convex(&a.bev_polygon(), &b.bev_polygon())).abs();
    if area < MIN_INTERSECTION_AREA {
        0.0
    } else {
        area.min(a.footprint_area()).min(b.footprint_area())
    }
}

/// Bird's-eye-view IoU of the two footprints.
pub fn iou_bev(a: &OrientedBox3D, b: &OrientedBox3D) -> f64 {
    if a == b {
        return 1.0;
    }
    let inter = bev_intersection_area(a, b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.footprint_area() + b.footprint_area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Volumetric IoU; exact for yaw-only boxes.
pub fn iou_3d(a: &OrientedBox3D, b: &OrientedBox3D) -> f64 {
    if a == b {
        return 1.0;
    }
    let dz = a.z_top().min(b.z_top()) - a.z_bottom().max(b.z_bottom());
    if dz <= 0.0 {
        return 0.0;
    }
    let inter_area = bev_intersection_area(a, b);
    if inter_area == 0.0 {
        return 0.0;
    }
    let inter = inter_area * dz;
    let union = a.volume() + b.volume() - inter;
    (inter / union).clamp(0.0, 1.0)
}

// Canonical operand order so both IoUs are bitwise symmetric.
fn ordered<'a>(a: &'a OrientedBox3D, b: &'a OrientedBox3D) -> (&'a OrientedBox3D, &'a OrientedBox3D) {
    if a.sort_key() <= b.sort_key() {
        (a, b)
    } else {
        (b, a)
    }
}

//! Synthetic 2.5D scans of simple solids.
//!
//! A virtual depth sensor casts a square grid of rays at the object; the
//! first surface hit becomes a point tagged with the id of the surface
//! patch it landed on. Self-occlusion and back-face culling fall out of the
//! nearest-hit rule.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{GeometryError, PointCloud, Segment, SegmentedObject};

/// Patches hit by fewer rays than this are dropped from the scan.
pub const MIN_PATCH_POINTS: usize = 10;

/// An axis-aligned solid, z up, centered at its local origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    Box { size: [f64; 3] },
    Sphere { radius: f64 },
    /// Closed cylinder: lateral wall plus top and bottom lids.
    Cylinder { radius: f64, height: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacedPrimitive {
    pub primitive: Primitive,
    #[serde(default)]
    pub offset: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum ShapeSpec {
    Box { size: [f64; 3] },
    Sphere { radius: f64 },
    Cylinder { radius: f64, height: f64 },
    Composite { parts: Vec<PlacedPrimitive> },
}

impl ShapeSpec {
    /// A can: cylindrical wall with planar lids.
    pub fn can(radius: f64, height: f64) -> Self {
        ShapeSpec::Cylinder { radius, height }
    }

    /// Sphere cluster: body, head and two ears.
    pub fn teddy(scale: f64) -> Self {
        let s = scale;
        let sphere = |r: f64, offset: [f64; 3]| PlacedPrimitive {
            primitive: Primitive::Sphere { radius: r },
            offset,
        };
        ShapeSpec::Composite {
            parts: vec![
                sphere(s, [0.0, 0.0, 0.0]),
                sphere(0.65 * s, [0.0, 0.0, 1.45 * s]),
                sphere(0.28 * s, [0.45 * s, 0.0, 2.0 * s]),
                sphere(0.28 * s, [-0.45 * s, 0.0, 2.0 * s]),
            ],
        }
    }

    fn parts(&self) -> Vec<PlacedPrimitive> {
        let at_origin = |primitive| {
            vec![PlacedPrimitive {
                primitive,
                offset: [0.0; 3],
            }]
        };
        match self {
            ShapeSpec::Box { size } => at_origin(Primitive::Box { size: *size }),
            ShapeSpec::Sphere { radius } => at_origin(Primitive::Sphere { radius: *radius }),
            ShapeSpec::Cylinder { radius, height } => at_origin(Primitive::Cylinder {
                radius: *radius,
                height: *height,
            }),
            ShapeSpec::Composite { parts } => parts.clone(),
        }
    }

    fn validate(&self) -> Result<(), GeometryError> {
        let parts = self.parts();
        if parts.is_empty() {
            return Err(GeometryError::InvalidShape("composite without parts".into()));
        }
        for part in &parts {
            let dims: Vec<f64> = match &part.primitive {
                Primitive::Box { size } => size.to_vec(),
                Primitive::Sphere { radius } => vec![*radius],
                Primitive::Cylinder { radius, height } => vec![*radius, *height],
            };
            if dims.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
                return Err(GeometryError::InvalidShape(format!(
                    "non-positive dimension in {:?}",
                    part.primitive
                )));
            }
            if part.offset.iter().any(|o| !o.is_finite()) {
                return Err(GeometryError::InvalidShape("non-finite offset".into()));
            }
        }
        Ok(())
    }
}

/// Sensor placement around the object, which sits centered at the world origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Viewpoint {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    /// Sensor-to-object-center distance in meters.
    pub distance: f64,
    /// Rays per image side.
    pub resolution: usize,
}

impl Default for Viewpoint {
    fn default() -> Self {
        Self {
            azimuth_deg: 45.0,
            elevation_deg: 35.0,
            distance: 1.0,
            resolution: 56,
        }
    }
}

impl Viewpoint {
    pub fn new(azimuth_deg: f64, elevation_deg: f64) -> Self {
        Self {
            azimuth_deg,
            elevation_deg,
            ..Default::default()
        }
    }
}

struct Hit {
    t: f64,
    patch: usize,
}

struct Solid {
    center: Vector3<f64>,
    primitive: Primitive,
    first_patch: usize,
}

impl Solid {
    fn patch_count(&self) -> usize {
        match self.primitive {
            Primitive::Box { .. } => 6,
            Primitive::Sphere { .. } => 1,
            Primitive::Cylinder { .. } => 3,
        }
    }

    fn bounding_radius(&self) -> f64 {
        let r = match &self.primitive {
            Primitive::Box { size } => 0.5 * Vector3::from(*size).norm(),
            Primitive::Sphere { radius } => *radius,
            Primitive::Cylinder { radius, height } => (radius * radius + 0.25 * height * height).sqrt(),
        };
        self.center.norm() + r
    }

    fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<Hit> {
        let o = origin - self.center;
        let local = match &self.primitive {
            Primitive::Box { size } => intersect_box(&o, dir, &(Vector3::from(*size) * 0.5)),
            Primitive::Sphere { radius } => intersect_sphere(&o, dir, *radius),
            Primitive::Cylinder { radius, height } => intersect_cylinder(&o, dir, *radius, 0.5 * height),
        }?;
        Some(Hit {
            t: local.t,
            patch: self.first_patch + local.patch,
        })
    }
}

// Box patches: +x, -x, +y, -y, +z, -z.
fn intersect_box(o: &Vector3<f64>, d: &Vector3<f64>, half: &Vector3<f64>) -> Option<Hit> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    let mut patch = 0;
    for axis in 0..3 {
        if d[axis].abs() < 1e-15 {
            if o[axis].abs() > half[axis] {
                return None;
            }
            continue;
        }
        let t1 = (-half[axis] - o[axis]) / d[axis];
        let t2 = (half[axis] - o[axis]) / d[axis];
        let (t_in, t_out, face) = if t1 < t2 {
            (t1, t2, 2 * axis + 1)
        } else {
            (t2, t1, 2 * axis)
        };
        if t_in > t_near {
            t_near = t_in;
            patch = face;
        }
        t_far = t_far.min(t_out);
    }
    (t_near <= t_far && t_near > 1e-9).then_some(Hit { t: t_near, patch })
}

fn intersect_sphere(o: &Vector3<f64>, d: &Vector3<f64>, r: f64) -> Option<Hit> {
    let b = o.dot(d);
    let c = o.norm_squared() - r * r;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let t = -b - disc.sqrt();
    (t > 1e-9).then_some(Hit { t, patch: 0 })
}

// Cylinder patches: wall, top lid, bottom lid.
fn intersect_cylinder(o: &Vector3<f64>, d: &Vector3<f64>, r: f64, hh: f64) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    let mut consider = |t: f64, patch: usize| {
        if t > 1e-9 && best.as_ref().is_none_or(|b| t < b.t) {
            best = Some(Hit { t, patch });
        }
    };
    let a = d.x * d.x + d.y * d.y;
    if a > 1e-15 {
        let b = o.x * d.x + o.y * d.y;
        let c = o.x * o.x + o.y * o.y - r * r;
        let disc = b * b - a * c;
        if disc >= 0.0 {
            for t in [(-b - disc.sqrt()) / a, (-b + disc.sqrt()) / a] {
                let z = o.z + t * d.z;
                if z.abs() <= hh {
                    consider(t, 0);
                }
            }
        }
    }
    if d.z.abs() > 1e-15 {
        for (z, patch) in [(hh, 1), (-hh, 2)] {
            let t = (z - o.z) / d.z;
            let x = o.x + t * d.x;
            let y = o.y + t * d.y;
            if x * x + y * y <= r * r {
                consider(t, patch);
            }
        }
    }
    best
}

/// Renders a noisy single-view scan of `shape` with ground-truth segment ids.
///
/// Points are returned in the sensor frame: sensor at the origin, +z along
/// the viewing direction. The output depends only on the arguments.
pub fn generate_synthetic_scan(
    shape: &ShapeSpec,
    viewpoint: &Viewpoint,
    noise_sigma: f64,
    seed: u64,
) -> Result<SegmentedObject, GeometryError> {
    shape.validate()?;
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(GeometryError::InvalidParameter(format!(
            "noise_sigma must be >= 0, got {noise_sigma}"
        )));
    }
    if viewpoint.resolution < 2 || !(viewpoint.distance > 0.0) {
        return Err(GeometryError::InvalidParameter(
            "viewpoint needs resolution >= 2 and distance > 0".into(),
        ));
    }

    let mut solids = Vec::new();
    let mut next_patch = 0;
    let parts = shape.parts();
    // Center the composite on the mean of its part offsets.
    let centroid = parts
        .iter()
        .map(|p| Vector3::from(p.offset))
        .fold(Vector3::zeros(), |a, b| a + b)
        / parts.len() as f64;
    for part in parts {
        let solid = Solid {
            center: Vector3::from(part.offset) - centroid,
            primitive: part.primitive,
            first_patch: next_patch,
        };
        next_patch += solid.patch_count();
        solids.push(solid);
    }
    let bound = solids.iter().map(Solid::bounding_radius).fold(0.0, f64::max);
    if bound >= viewpoint.distance {
        return Err(GeometryError::InvalidParameter(
            "sensor lies inside the object's bounding sphere".into(),
        ));
    }

    let (az, el) = (
        viewpoint.azimuth_deg.to_radians(),
        viewpoint.elevation_deg.to_radians(),
    );
    let sensor = viewpoint.distance * Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
    let forward = -sensor.normalize();
    let mut up = Vector3::z();
    if forward.cross(&up).norm() < 1e-9 {
        up = Vector3::y();
    }
    let right = forward.cross(&up).normalize();
    let down = forward.cross(&right);

    let half_angle = ((bound / viewpoint.distance).asin() * 1.05).min(1.4);
    let span = half_angle.tan();
    let res = viewpoint.resolution;

    let mut raw: Vec<(Vector3<f64>, usize)> = Vec::new();
    for row in 0..res {
        let v = (2.0 * (row as f64 + 0.5) / res as f64 - 1.0) * span;
        for col in 0..res {
            let u = (2.0 * (col as f64 + 0.5) / res as f64 - 1.0) * span;
            let dir = (forward + u * right + v * down).normalize();
            let hit = solids
                .iter()
                .filter_map(|s| s.intersect(&sensor, &dir))
                .min_by(|a, b| a.t.total_cmp(&b.t).then(a.patch.cmp(&b.patch)));
            if let Some(hit) = hit {
                let rel = hit.t * dir;
                raw.push((Vector3::new(rel.dot(&right), rel.dot(&down), rel.dot(&forward)), hit.patch));
            }
        }
    }

    let mut counts = vec![0usize; next_patch];
    for (_, p) in &raw {
        counts[*p] += 1;
    }
    let mut remap = vec![None; next_patch];
    let mut next_id = 0u32;
    for (patch, &c) in counts.iter().enumerate() {
        if c >= MIN_PATCH_POINTS {
            remap[patch] = Some(next_id);
            next_id += 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, noise_sigma).expect("sigma validated");
    let mut points = Vec::new();
    let mut ids = Vec::new();
    for (p, patch) in raw {
        if let Some(id) = remap[patch] {
            let noise = if noise_sigma > 0.0 {
                Vector3::new(jitter.sample(&mut rng), jitter.sample(&mut rng), jitter.sample(&mut rng))
            } else {
                Vector3::zeros()
            };
            points.push(p + noise);
            ids.push(Some(id));
        }
    }

    let mut segments: Vec<Segment> = (0..next_id)
        .map(|id| Segment {
            id,
            point_indices: Vec::new(),
        })
        .collect();
    for (i, id) in ids.iter().enumerate() {
        segments[id.expect("all kept points are labeled") as usize]
            .point_indices
            .push(i);
    }
    let mut cloud = PointCloud::new(points);
    cloud.segment_ids = Some(ids);
    let adjacency = super::segment::segment_adjacency(&cloud, &segments, ground_truth_contact(viewpoint, span));
    Ok(SegmentedObject {
        cloud,
        segments,
        adjacency,
        category_label: None,
    })
}

/// Contact distance for ground-truth adjacency: a few ray spacings at the
/// object distance.
fn ground_truth_contact(viewpoint: &Viewpoint, span: f64) -> f64 {
    let pixel = 2.0 * span * viewpoint.distance / viewpoint.resolution as f64;
    2.5 * pixel
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_from_corner_shows_three_faces() {
        let obj = generate_synthetic_scan(
            &ShapeSpec::Box { size: [0.2, 0.2, 0.2] },
            &Viewpoint::new(45.0, 35.0),
            0.0,
            1,
        )
        .unwrap();
        assert_eq!(obj.segments.len(), 3);
        assert_eq!(obj.adjacency.len(), 3);
        obj.validate().unwrap();
    }

    #[test]
    fn sphere_is_one_segment_from_any_view() {
        for (az, el) in [(0.0, 0.0), (123.0, 40.0), (270.0, -30.0), (10.0, 89.0)] {
            let obj = generate_synthetic_scan(
                &ShapeSpec::Sphere { radius: 0.1 },
                &Viewpoint::new(az, el),
                0.001,
                5,
            )
            .unwrap();
            assert_eq!(obj.segments.len(), 1);
            assert!(obj.adjacency.is_empty());
        }
    }

    #[test]
    fn scan_is_bit_reproducible() {
        let shape = ShapeSpec::can(0.05, 0.15);
        let vp = Viewpoint::new(30.0, 40.0);
        let a = generate_synthetic_scan(&shape, &vp, 0.002, 99).unwrap();
        let b = generate_synthetic_scan(&shape, &vp, 0.002, 99).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_scan(&shape, &vp, 0.002, 100).unwrap();
        assert_ne!(a.cloud.points, c.cloud.points);
    }

    #[test]
    fn can_from_above_shows_wall_and_lid() {
        let obj = generate_synthetic_scan(&ShapeSpec::can(0.05, 0.15), &Viewpoint::new(0.0, 40.0), 0.0, 0).unwrap();
        assert_eq!(obj.segments.len(), 2);
        assert_eq!(obj.adjacency.len(), 1);
    }

    #[test]
    fn teddy_has_several_parts() {
        let obj = generate_synthetic_scan(&ShapeSpec::teddy(0.07), &Viewpoint::new(90.0, 20.0), 0.0, 0).unwrap();
        assert!(obj.segments.len() >= 3, "{}", obj.segments.len());
        obj.validate().unwrap();
    }

    #[test]
    fn degenerate_shapes_are_rejected() {
        let vp = Viewpoint::default();
        for shape in [
            ShapeSpec::Box { size: [0.1, 0.0, 0.1] },
            ShapeSpec::Sphere { radius: -1.0 },
            ShapeSpec::Cylinder { radius: 0.1, height: f64::NAN },
            ShapeSpec::Composite { parts: vec![] },
        ] {
            assert!(matches!(
                generate_synthetic_scan(&shape, &vp, 0.0, 0),
                Err(GeometryError::InvalidShape(_))
            ));
        }
        assert!(generate_synthetic_scan(&ShapeSpec::Sphere { radius: 0.1 }, &vp, -0.1, 0).is_err());
    }

    #[test]
    fn points_face_the_sensor() {
        let obj = generate_synthetic_scan(&ShapeSpec::Sphere { radius: 0.1 }, &Viewpoint::new(0.0, 0.0), 0.0, 0).unwrap();
        // visible hemisphere: every point is at most `distance` from the sensor
        for p in &obj.cloud.points {
            assert!(p.z > 0.0 && p.norm() <= 1.0 + 1e-9);
            assert!(((p - Vector3::new(0.0, 0.0, 1.0)).norm() - 0.1).abs() < 1e-9);
        }
    }
}

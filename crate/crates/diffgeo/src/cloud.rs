//! Synthetic test shapes and point-cloud I/O.
//!
//! Every generator is a pure function of its parameters and seed, so clouds
//! are bit-reproducible. Noise is isotropic ambient Gaussian added after
//! surface sampling.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite sample of `n` points in ambient dimension `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Array2<f64>,
    pub seed: Option<u64>,
    pub label: Option<String>,
}

impl PointCloud {
    pub fn new(points: Array2<f64>) -> Result<Self> {
        if points.nrows() == 0 || points.ncols() == 0 {
            return Err(Error::invalid("point cloud must have n >= 1 and d >= 1"));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("point cloud contains non-finite coordinates"));
        }
        Ok(PointCloud { points, seed: None, label: None })
    }

    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    /// Applies a rigid motion `x -> R x + b`. Used by the invariance tests.
    pub fn transformed(&self, rotation: &Array2<f64>, shift: &Array1<f64>) -> Result<Self> {
        if rotation.nrows() != self.dim() || rotation.ncols() != self.dim() || shift.len() != self.dim() {
            return Err(Error::invalid("transform dimensions do not match the cloud"));
        }
        let moved = self.points.dot(&rotation.t()) + &shift.view().insert_axis(ndarray::Axis(0));
        let mut out = self.clone();
        out.points = moved;
        Ok(out)
    }
}

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn add_noise(points: &mut Array2<f64>, sigma: f64, rng: &mut ChaCha8Rng) {
    if sigma == 0.0 {
        return;
    }
    let normal = Normal::new(0.0, sigma).expect("sigma >= 0 checked by caller");
    for x in points.iter_mut() {
        *x += normal.sample(rng);
    }
}

/// Circle of radius `radius` in the plane. Angles are evenly spaced unless
/// `random_angles` is set, in which case they are uniform random.
pub fn gen_circle(n: usize, radius: f64, noise_sigma: f64, seed: u64, random_angles: bool) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::invalid("gen_circle: n must be positive"));
    }
    if radius <= 0.0 {
        return Err(Error::invalid("gen_circle: radius must be positive"));
    }
    if noise_sigma < 0.0 {
        return Err(Error::invalid("gen_circle: noise_sigma must be nonnegative"));
    }
    let mut rng = rng_for(seed);
    let mut points = Array2::zeros((n, 2));
    for i in 0..n {
        let theta = if random_angles {
            rng.gen::<f64>() * 2.0 * PI
        } else {
            2.0 * PI * i as f64 / n as f64
        };
        points[[i, 0]] = radius * theta.cos();
        points[[i, 1]] = radius * theta.sin();
    }
    add_noise(&mut points, noise_sigma, &mut rng);
    let mut pc = PointCloud::new(points)?;
    pc.seed = Some(seed);
    Ok(pc.with_label("circle"))
}

/// Torus in R^3 sampled uniformly in the two angles.
pub fn gen_torus(n: usize, major_radius: f64, minor_radius: f64, noise_sigma: f64, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::invalid("gen_torus: n must be positive"));
    }
    if !(major_radius > minor_radius && minor_radius > 0.0) {
        return Err(Error::invalid("gen_torus: need major_radius > minor_radius > 0"));
    }
    if noise_sigma < 0.0 {
        return Err(Error::invalid("gen_torus: noise_sigma must be nonnegative"));
    }
    let mut rng = rng_for(seed);
    let mut points = Array2::zeros((n, 3));
    for i in 0..n {
        let u = rng.gen::<f64>() * 2.0 * PI;
        let v = rng.gen::<f64>() * 2.0 * PI;
        let w = major_radius + minor_radius * v.cos();
        points[[i, 0]] = w * u.cos();
        points[[i, 1]] = w * u.sin();
        points[[i, 2]] = minor_radius * v.sin();
    }
    add_noise(&mut points, noise_sigma, &mut rng);
    let mut pc = PointCloud::new(points)?;
    pc.seed = Some(seed);
    Ok(pc.with_label("torus"))
}

/// Unit 2-sphere with two disjoint circles adjoined at the poles.
/// Mixture proportions follow surface measure (area vs. circumference).
pub fn gen_sphere_with_circles(n: usize, noise_sigma: f64, seed: u64) -> Result<PointCloud> {
    if n < 3 {
        return Err(Error::invalid("gen_sphere_with_circles: n must be at least 3"));
    }
    if noise_sigma < 0.0 {
        return Err(Error::invalid("gen_sphere_with_circles: noise_sigma must be nonnegative"));
    }
    let rho = 0.6; // radius of the adjoined circles
    let sphere_measure = 4.0 * PI;
    let circle_measure = 2.0 * PI * rho;
    let total = sphere_measure + 2.0 * circle_measure;

    let mut rng = rng_for(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut points = Array2::zeros((n, 3));
    for i in 0..n {
        let pick = rng.gen::<f64>() * total;
        if pick < sphere_measure {
            // uniform on the sphere via normalized Gaussian
            loop {
                let x: f64 = normal.sample(&mut rng);
                let y: f64 = normal.sample(&mut rng);
                let z: f64 = normal.sample(&mut rng);
                let r = (x * x + y * y + z * z).sqrt();
                if r > 1e-12 {
                    points[[i, 0]] = x / r;
                    points[[i, 1]] = y / r;
                    points[[i, 2]] = z / r;
                    break;
                }
            }
        } else {
            let t = rng.gen::<f64>() * 2.0 * PI;
            if pick < sphere_measure + circle_measure {
                // circle through the north pole, in the x-z plane
                points[[i, 0]] = rho * t.sin();
                points[[i, 1]] = 0.0;
                points[[i, 2]] = 1.0 + rho - rho * t.cos();
            } else {
                // circle through the south pole, in the y-z plane
                points[[i, 0]] = 0.0;
                points[[i, 1]] = rho * t.sin();
                points[[i, 2]] = -1.0 - rho + rho * t.cos();
            }
        }
    }
    add_noise(&mut points, noise_sigma, &mut rng);
    let mut pc = PointCloud::new(points)?;
    pc.seed = Some(seed);
    Ok(pc.with_label("sphere_with_circles"))
}

/// Annulus in the plane, area-uniform between the two radii.
pub fn gen_annulus(n: usize, inner_radius: f64, outer_radius: f64, noise_sigma: f64, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::invalid("gen_annulus: n must be positive"));
    }
    if !(outer_radius > inner_radius && inner_radius >= 0.0) {
        return Err(Error::invalid("gen_annulus: need outer_radius > inner_radius >= 0"));
    }
    if noise_sigma < 0.0 {
        return Err(Error::invalid("gen_annulus: noise_sigma must be nonnegative"));
    }
    let mut rng = rng_for(seed);
    let mut points = Array2::zeros((n, 2));
    let (r0sq, r1sq) = (inner_radius * inner_radius, outer_radius * outer_radius);
    for i in 0..n {
        let r = (r0sq + rng.gen::<f64>() * (r1sq - r0sq)).sqrt();
        let theta = rng.gen::<f64>() * 2.0 * PI;
        points[[i, 0]] = r * theta.cos();
        points[[i, 1]] = r * theta.sin();
    }
    add_noise(&mut points, noise_sigma, &mut rng);
    let mut pc = PointCloud::new(points)?;
    pc.seed = Some(seed);
    Ok(pc.with_label("annulus"))
}

/// Uniform sample of the square [0, side] x [0, side].
pub fn gen_square(n: usize, side: f64, noise_sigma: f64, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::invalid("gen_square: n must be positive"));
    }
    if side <= 0.0 {
        return Err(Error::invalid("gen_square: side must be positive"));
    }
    if noise_sigma < 0.0 {
        return Err(Error::invalid("gen_square: noise_sigma must be nonnegative"));
    }
    let mut rng = rng_for(seed);
    let mut points = Array2::zeros((n, 2));
    for i in 0..n {
        points[[i, 0]] = rng.gen::<f64>() * side;
        points[[i, 1]] = rng.gen::<f64>() * side;
    }
    add_noise(&mut points, noise_sigma, &mut rng);
    let mut pc = PointCloud::new(points)?;
    pc.seed = Some(seed);
    Ok(pc.with_label("square"))
}

/// A primitive in an intersecting-shape specification.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum Primitive {
    /// Circle in the plane.
    Circle2 { center: [f64; 2], radius: f64, n: usize },
    /// Straight segment in the plane.
    Segment2 { a: [f64; 2], b: [f64; 2], n: usize },
    /// Sphere in R^3.
    Sphere3 { center: [f64; 3], radius: f64, n: usize },
    /// Circle in R^3 lying in the plane with the given unit normal.
    Circle3 { center: [f64; 3], radius: f64, normal: [f64; 3], n: usize },
}

impl Primitive {
    fn dim(&self) -> usize {
        match self {
            Primitive::Circle2 { .. } | Primitive::Segment2 { .. } => 2,
            Primitive::Sphere3 { .. } | Primitive::Circle3 { .. } => 3,
        }
    }

    fn count(&self) -> usize {
        match self {
            Primitive::Circle2 { n, .. }
            | Primitive::Segment2 { n, .. }
            | Primitive::Sphere3 { n, .. }
            | Primitive::Circle3 { n, .. } => *n,
        }
    }

    fn sample_into(&self, out: &mut Array2<f64>, start: usize, rng: &mut ChaCha8Rng) {
        match self {
            Primitive::Circle2 { center, radius, n } => {
                for i in 0..*n {
                    let t = rng.gen::<f64>() * 2.0 * PI;
                    out[[start + i, 0]] = center[0] + radius * t.cos();
                    out[[start + i, 1]] = center[1] + radius * t.sin();
                }
            }
            Primitive::Segment2 { a, b, n } => {
                for i in 0..*n {
                    let t = rng.gen::<f64>();
                    out[[start + i, 0]] = a[0] + t * (b[0] - a[0]);
                    out[[start + i, 1]] = a[1] + t * (b[1] - a[1]);
                }
            }
            Primitive::Sphere3 { center, radius, n } => {
                let normal = Normal::new(0.0, 1.0).unwrap();
                for i in 0..*n {
                    loop {
                        let x: f64 = normal.sample(rng);
                        let y: f64 = normal.sample(rng);
                        let z: f64 = normal.sample(rng);
                        let r = (x * x + y * y + z * z).sqrt();
                        if r > 1e-12 {
                            out[[start + i, 0]] = center[0] + radius * x / r;
                            out[[start + i, 1]] = center[1] + radius * y / r;
                            out[[start + i, 2]] = center[2] + radius * z / r;
                            break;
                        }
                    }
                }
            }
            Primitive::Circle3 { center, radius, normal, n } => {
                let (u, v) = plane_basis(*normal);
                for i in 0..*n {
                    let t = rng.gen::<f64>() * 2.0 * PI;
                    for a in 0..3 {
                        out[[start + i, a]] = center[a] + radius * (t.cos() * u[a] + t.sin() * v[a]);
                    }
                }
            }
        }
    }
}

fn plane_basis(normal: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let nn = (normal[0].powi(2) + normal[1].powi(2) + normal[2].powi(2)).sqrt();
    let n = [normal[0] / nn, normal[1] / nn, normal[2] / nn];
    let pick = if n[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let mut u = [
        n[1] * pick[2] - n[2] * pick[1],
        n[2] * pick[0] - n[0] * pick[2],
        n[0] * pick[1] - n[1] * pick[0],
    ];
    let un = (u[0].powi(2) + u[1].powi(2) + u[2].powi(2)).sqrt();
    u = [u[0] / un, u[1] / un, u[2] / un];
    let v = [
        n[1] * u[2] - n[2] * u[1],
        n[2] * u[0] - n[0] * u[2],
        n[0] * u[1] - n[1] * u[0],
    ];
    (u, v)
}

/// An intersecting-shape sample together with the ground-truth intersection
/// points, so singularity tests can assert localization quantitatively.
#[derive(Debug, Clone)]
pub struct IntersectingSample {
    pub cloud: PointCloud,
    /// One row per ground-truth intersection point (same ambient dimension).
    pub intersections: Array2<f64>,
}

/// Union sample of the listed primitives plus the analytic (or finely
/// sampled) locations where they intersect.
pub fn gen_intersecting(spec: &[Primitive], noise_sigma: f64, seed: u64) -> Result<IntersectingSample> {
    if spec.is_empty() {
        return Err(Error::invalid("gen_intersecting: empty shape list"));
    }
    if noise_sigma < 0.0 {
        return Err(Error::invalid("gen_intersecting: noise_sigma must be nonnegative"));
    }
    let dim = spec[0].dim();
    if spec.iter().any(|p| p.dim() != dim) {
        return Err(Error::invalid("gen_intersecting: primitives mix 2D and 3D"));
    }
    let total: usize = spec.iter().map(|p| p.count()).sum();
    if total == 0 {
        return Err(Error::invalid("gen_intersecting: total point count is zero"));
    }

    let mut rng = rng_for(seed);
    let mut points = Array2::zeros((total, dim));
    let mut start = 0;
    for prim in spec {
        prim.sample_into(&mut points, start, &mut rng);
        start += prim.count();
    }
    add_noise(&mut points, noise_sigma, &mut rng);

    let mut hits: Vec<Vec<f64>> = Vec::new();
    for i in 0..spec.len() {
        for j in (i + 1)..spec.len() {
            intersections_of(&spec[i], &spec[j], &mut hits);
        }
    }
    let mut intersections = Array2::zeros((hits.len(), dim));
    for (r, p) in hits.iter().enumerate() {
        for (c, x) in p.iter().enumerate() {
            intersections[[r, c]] = *x;
        }
    }

    let mut pc = PointCloud::new(points)?;
    pc.seed = Some(seed);
    Ok(IntersectingSample { cloud: pc.with_label("intersecting"), intersections })
}

fn intersections_of(a: &Primitive, b: &Primitive, out: &mut Vec<Vec<f64>>) {
    use Primitive::*;
    match (a, b) {
        (Circle2 { center: c1, radius: r1, .. }, Circle2 { center: c2, radius: r2, .. }) => {
            circle_circle_2d(*c1, *r1, *c2, *r2, out);
        }
        (Circle2 { center, radius, .. }, Segment2 { a, b, .. })
        | (Segment2 { a, b, .. }, Circle2 { center, radius, .. }) => {
            circle_segment_2d(*center, *radius, *a, *b, out);
        }
        (Segment2 { a: a1, b: b1, .. }, Segment2 { a: a2, b: b2, .. }) => {
            segment_segment_2d(*a1, *b1, *a2, *b2, out);
        }
        (Sphere3 { center: c1, radius: r1, .. }, Sphere3 { center: c2, radius: r2, .. }) => {
            sphere_sphere_3d(*c1, *r1, *c2, *r2, out);
        }
        (Sphere3 { center, radius, .. }, Circle3 { center: cc, radius: cr, normal, .. })
        | (Circle3 { center: cc, radius: cr, normal, .. }, Sphere3 { center, radius, .. }) => {
            sphere_circle_3d(*center, *radius, *cc, *cr, *normal, out);
        }
        (Circle3 { .. }, Circle3 { .. }) => {
            // Generic 3D circles do not meet; poses that do intersect are not
            // used by the shipped experiments.
        }
        // Mixed-dimension pairs cannot coexist in one cloud.
        _ => {}
    }
}

fn circle_circle_2d(c1: [f64; 2], r1: f64, c2: [f64; 2], r2: f64, out: &mut Vec<Vec<f64>>) {
    let dx = c2[0] - c1[0];
    let dy = c2[1] - c1[1];
    let d = (dx * dx + dy * dy).sqrt();
    if d < 1e-12 || d > r1 + r2 || d < (r1 - r2).abs() {
        return;
    }
    let a = (d * d + r1 * r1 - r2 * r2) / (2.0 * d);
    let h2 = r1 * r1 - a * a;
    let h = if h2 > 0.0 { h2.sqrt() } else { 0.0 };
    let mx = c1[0] + a * dx / d;
    let my = c1[1] + a * dy / d;
    out.push(vec![mx + h * dy / d, my - h * dx / d]);
    if h > 1e-12 {
        out.push(vec![mx - h * dy / d, my + h * dx / d]);
    }
}

fn circle_segment_2d(c: [f64; 2], r: f64, a: [f64; 2], b: [f64; 2], out: &mut Vec<Vec<f64>>) {
    let dx = b[0] - a[0];
    let dy = b[1] - a[1];
    let fx = a[0] - c[0];
    let fy = a[1] - c[1];
    let qa = dx * dx + dy * dy;
    let qb = 2.0 * (fx * dx + fy * dy);
    let qc = fx * fx + fy * fy - r * r;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 || qa < 1e-24 {
        return;
    }
    let sq = disc.sqrt();
    for t in [(-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa)] {
        if (0.0..=1.0).contains(&t) {
            out.push(vec![a[0] + t * dx, a[1] + t * dy]);
        }
        if sq < 1e-12 {
            break; // tangency: one root only
        }
    }
}

fn segment_segment_2d(a1: [f64; 2], b1: [f64; 2], a2: [f64; 2], b2: [f64; 2], out: &mut Vec<Vec<f64>>) {
    let d1 = [b1[0] - a1[0], b1[1] - a1[1]];
    let d2 = [b2[0] - a2[0], b2[1] - a2[1]];
    let denom = d1[0] * d2[1] - d1[1] * d2[0];
    if denom.abs() < 1e-15 {
        return;
    }
    let dx = a2[0] - a1[0];
    let dy = a2[1] - a1[1];
    let t = (dx * d2[1] - dy * d2[0]) / denom;
    let s = (dx * d1[1] - dy * d1[0]) / denom;
    if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&s) {
        out.push(vec![a1[0] + t * d1[0], a1[1] + t * d1[1]]);
    }
}

fn sphere_sphere_3d(c1: [f64; 3], r1: f64, c2: [f64; 3], r2: f64, out: &mut Vec<Vec<f64>>) {
    let d2v = [c2[0] - c1[0], c2[1] - c1[1], c2[2] - c1[2]];
    let d = (d2v[0].powi(2) + d2v[1].powi(2) + d2v[2].powi(2)).sqrt();
    if d < 1e-12 || d > r1 + r2 || d < (r1 - r2).abs() {
        return;
    }
    let a = (d * d + r1 * r1 - r2 * r2) / (2.0 * d);
    let h2 = r1 * r1 - a * a;
    let h = if h2 > 0.0 { h2.sqrt() } else { 0.0 };
    let n = [d2v[0] / d, d2v[1] / d, d2v[2] / d];
    let center = [c1[0] + a * n[0], c1[1] + a * n[1], c1[2] + a * n[2]];
    // The singular set is a whole circle; represent it by a fine sample.
    let (u, v) = plane_basis(n);
    let samples = 64;
    for i in 0..samples {
        let t = 2.0 * PI * i as f64 / samples as f64;
        out.push(vec![
            center[0] + h * (t.cos() * u[0] + t.sin() * v[0]),
            center[1] + h * (t.cos() * u[1] + t.sin() * v[1]),
            center[2] + h * (t.cos() * u[2] + t.sin() * v[2]),
        ]);
    }
}

fn sphere_circle_3d(sc: [f64; 3], sr: f64, cc: [f64; 3], cr: f64, normal: [f64; 3], out: &mut Vec<Vec<f64>>) {
    // Scan the circle parameter for sign changes of |p(t)|^2 - sr^2, then bisect.
    let (u, v) = plane_basis(normal);
    let point = |t: f64| -> [f64; 3] {
        [
            cc[0] + cr * (t.cos() * u[0] + t.sin() * v[0]),
            cc[1] + cr * (t.cos() * u[1] + t.sin() * v[1]),
            cc[2] + cr * (t.cos() * u[2] + t.sin() * v[2]),
        ]
    };
    let f = |t: f64| -> f64 {
        let p = point(t);
        (p[0] - sc[0]).powi(2) + (p[1] - sc[1]).powi(2) + (p[2] - sc[2]).powi(2) - sr * sr
    };
    let steps = 4096;
    for i in 0..steps {
        let t0 = 2.0 * PI * i as f64 / steps as f64;
        let t1 = 2.0 * PI * (i + 1) as f64 / steps as f64;
        let (f0, f1) = (f(t0), f(t1));
        if f0 == 0.0 {
            out.push(point(t0).to_vec());
        } else if f0 * f1 < 0.0 {
            let (mut lo, mut hi) = (t0, t1);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if f(lo) * f(mid) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            out.push(point(0.5 * (lo + hi)).to_vec());
        }
    }
}

/// JSON-serializable generator specification.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeSpec {
    Circle {
        n: usize,
        radius: f64,
        #[serde(default)]
        noise: f64,
        seed: u64,
        #[serde(default)]
        random_angles: bool,
    },
    Torus {
        n: usize,
        #[serde(rename = "R")]
        major_radius: f64,
        #[serde(rename = "r")]
        minor_radius: f64,
        #[serde(default)]
        noise: f64,
        seed: u64,
    },
    SphereWithCircles {
        n: usize,
        #[serde(default)]
        noise: f64,
        seed: u64,
    },
    Annulus {
        n: usize,
        inner: f64,
        outer: f64,
        #[serde(default)]
        noise: f64,
        seed: u64,
    },
    Square {
        n: usize,
        side: f64,
        #[serde(default)]
        noise: f64,
        seed: u64,
    },
    Intersecting {
        parts: Vec<Primitive>,
        #[serde(default)]
        noise: f64,
        seed: u64,
    },
}

impl ShapeSpec {
    pub fn generate(&self) -> Result<PointCloud> {
        match self {
            ShapeSpec::Circle { n, radius, noise, seed, random_angles } => {
                gen_circle(*n, *radius, *noise, *seed, *random_angles)
            }
            ShapeSpec::Torus { n, major_radius, minor_radius, noise, seed } => {
                gen_torus(*n, *major_radius, *minor_radius, *noise, *seed)
            }
            ShapeSpec::SphereWithCircles { n, noise, seed } => gen_sphere_with_circles(*n, *noise, *seed),
            ShapeSpec::Annulus { n, inner, outer, noise, seed } => gen_annulus(*n, *inner, *outer, *noise, *seed),
            ShapeSpec::Square { n, side, noise, seed } => gen_square(*n, *side, *noise, *seed),
            ShapeSpec::Intersecting { parts, noise, seed } => Ok(gen_intersecting(parts, *noise, *seed)?.cloud),
        }
    }
}

/// Loads a CSV of `n` rows by `d` numeric columns. A single non-numeric
/// header row is allowed and skipped.
pub fn load_csv(path: impl AsRef<Path>) -> Result<PointCloud> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse { row: idx, message: e.to_string() })?;
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(|cell| cell.parse::<f64>()).collect();
        match parsed {
            Ok(vals) => {
                if let Some(w) = width {
                    if vals.len() != w {
                        return Err(Error::Parse {
                            row: idx,
                            message: format!("ragged row: expected {} columns, found {}", w, vals.len()),
                        });
                    }
                } else {
                    width = Some(vals.len());
                }
                rows.push(vals);
            }
            Err(e) => {
                if idx == 0 {
                    continue; // header row
                }
                return Err(Error::Parse { row: idx, message: format!("non-numeric cell: {e}") });
            }
        }
    }
    let width = width.ok_or_else(|| Error::Parse { row: 0, message: "empty file".into() })?;
    let n = rows.len();
    let mut points = Array2::zeros((n, width));
    for (i, row) in rows.iter().enumerate() {
        for (j, x) in row.iter().enumerate() {
            points[[i, j]] = *x;
        }
    }
    PointCloud::new(points)
}

/// Writes coordinates in shortest round-trip decimal form, so that
/// `load_csv(save_csv(pc))` reproduces the matrix exactly.
pub fn save_csv(pc: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_path(path.as_ref())?;
    for row in pc.points.rows() {
        let record: Vec<String> = row.iter().map(|x| format!("{x}")).collect();
        writer.write_record(&record).map_err(|e| Error::Parse { row: 0, message: e.to_string() })?;
    }
    writer.flush()?;
    Ok(())
}

//! Room geometry, transmitters, receivers and the discretization of the
//! room boundary into Lambertian reflection elements.
//!
//! Frame: origin at a floor corner, `x` along the room length, `y` along the
//! width, `z` up. The floor is `z = 0` and the ceiling `z = height`.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn distance(self, other: Vec3) -> f64 {
        (other - self).norm()
    }

    /// Unit vector in the same direction, or `None` for a zero-length or
    /// non-finite vector.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        if n > 0.0 && n.is_finite() {
            Some(self * (1.0 / n))
        } else {
            None
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Two unit vectors completing `self` (assumed unit) to a right-handed
    /// orthonormal basis.
    pub fn orthonormal_basis(self) -> (Vec3, Vec3) {
        let helper = if self.x.abs() < 0.9 { Vec3::X } else { Vec3::Y };
        let u = self.cross(helper).normalized().expect("non-parallel helper");
        let v = self.cross(u);
        (u, v)
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, rhs: Vec3) {
        *self = *self + rhs;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, rhs: f64) -> Vec3 {
        Vec3::new(self.x * rhs, self.y * rhs, self.z * rhs)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(v: [f64; 3]) -> Self {
        Vec3::new(v[0], v[1], v[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        [v.x, v.y, v.z]
    }
}

/// Cosine between `normal` and the direction from `from` to `to`, clamped
/// to `[0, 1]`. Directions behind the surface give zero.
pub fn cos_angle(from: Vec3, to: Vec3, normal: Vec3) -> Result<f64> {
    let dir = (to - from)
        .normalized()
        .ok_or_else(|| Error::Geometry(format!("zero-length direction at {from:?}")))?;
    Ok(normal.dot(dir).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub reflectivity_walls: f64,
    pub reflectivity_ceiling: f64,
    pub reflectivity_floor: f64,
}

impl Default for Room {
    fn default() -> Self {
        Room {
            length: 8.0,
            width: 4.0,
            height: 3.0,
            reflectivity_walls: 0.8,
            reflectivity_ceiling: 0.8,
            reflectivity_floor: 0.3,
        }
    }
}

impl Room {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("room_length", self.length),
            ("room_width", self.width),
            ("room_height", self.height),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config_key(key, format!("dimension must be > 0, got {v}")));
            }
        }
        for (key, v) in [
            ("reflectivity_walls", self.reflectivity_walls),
            ("reflectivity_ceiling", self.reflectivity_ceiling),
            ("reflectivity_floor", self.reflectivity_floor),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config_key(
                    key,
                    format!("reflectivity must lie in [0, 1], got {v}"),
                ));
            }
        }
        Ok(())
    }

    pub fn center(&self) -> Vec3 {
        Vec3::new(self.length / 2.0, self.width / 2.0, self.height / 2.0)
    }

    pub fn surface_area(&self) -> f64 {
        2.0 * (self.length * self.width + self.length * self.height + self.width * self.height)
    }

    /// True if `p` lies inside the closed room box (with a small tolerance).
    pub fn contains(&self, p: Vec3) -> bool {
        let tol = 1e-9 * (self.length + self.width + self.height);
        (-tol..=self.length + tol).contains(&p.x)
            && (-tol..=self.width + tol).contains(&p.y)
            && (-tol..=self.height + tol).contains(&p.z)
    }

    pub fn reflectivity(&self, face: Face) -> f64 {
        match face {
            Face::Floor => self.reflectivity_floor,
            Face::Ceiling => self.reflectivity_ceiling,
            _ => self.reflectivity_walls,
        }
    }

    /// Plane parameters of a face: origin, in-plane axes `u`, `v`, their
    /// extents, and the inward normal.
    pub fn face_frame(&self, face: Face) -> FaceFrame {
        let (l, w, h) = (self.length, self.width, self.height);
        let (origin, u, v, u_len, v_len, normal) = match face {
            Face::Floor => (Vec3::ZERO, Vec3::X, Vec3::Y, l, w, Vec3::Z),
            Face::Ceiling => (Vec3::new(0.0, 0.0, h), Vec3::X, Vec3::Y, l, w, -Vec3::Z),
            Face::WallXMin => (Vec3::ZERO, Vec3::Y, Vec3::Z, w, h, Vec3::X),
            Face::WallXMax => (Vec3::new(l, 0.0, 0.0), Vec3::Y, Vec3::Z, w, h, -Vec3::X),
            Face::WallYMin => (Vec3::ZERO, Vec3::X, Vec3::Z, l, h, Vec3::Y),
            Face::WallYMax => (Vec3::new(0.0, w, 0.0), Vec3::X, Vec3::Z, l, h, -Vec3::Y),
        };
        FaceFrame {
            origin,
            u,
            v,
            u_len,
            v_len,
            normal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Face {
    Floor,
    Ceiling,
    WallXMin,
    WallXMax,
    WallYMin,
    WallYMax,
}

impl Face {
    pub const ALL: [Face; 6] = [
        Face::Floor,
        Face::Ceiling,
        Face::WallXMin,
        Face::WallXMax,
        Face::WallYMin,
        Face::WallYMax,
    ];
}

#[derive(Debug, Clone, Copy)]
pub struct FaceFrame {
    pub origin: Vec3,
    pub u: Vec3,
    pub v: Vec3,
    pub u_len: f64,
    pub v_len: f64,
    pub normal: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceElement {
    pub center: Vec3,
    /// Unit normal pointing into the room.
    pub normal: Vec3,
    pub area: f64,
    pub reflectivity: f64,
    pub face: Face,
}

#[derive(Debug, Clone)]
struct FaceTiling {
    face: Face,
    frame: FaceFrame,
    u_edges: Vec<f64>,
    v_edges: Vec<f64>,
    first: usize,
}

#[derive(Debug, Clone)]
pub struct ElementGrid {
    pub elements: Vec<SurfaceElement>,
    pub element_side: f64,
    tilings: Vec<FaceTiling>,
}

impl ElementGrid {
    /// A grid made of explicitly given elements, with no face tiling. Point
    /// location falls back to a linear search.
    pub fn from_elements(elements: Vec<SurfaceElement>, element_side: f64) -> Self {
        ElementGrid {
            elements,
            element_side,
            tilings: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn total_area(&self) -> f64 {
        self.elements.iter().map(|e| e.area).sum()
    }

    /// Index of the element containing a point on the room boundary.
    pub fn locate(&self, p: Vec3) -> Option<usize> {
        if self.tilings.is_empty() {
            return self.locate_linear(p);
        }
        for t in &self.tilings {
            let rel = p - t.frame.origin;
            let scale = t.frame.u_len.max(t.frame.v_len);
            if rel.dot(t.frame.normal).abs() > 1e-9 * scale.max(1.0) {
                continue;
            }
            let (a, b) = (rel.dot(t.frame.u), rel.dot(t.frame.v));
            let tol = 1e-9 * scale.max(1.0);
            if a < -tol || a > t.frame.u_len + tol || b < -tol || b > t.frame.v_len + tol {
                continue;
            }
            let i = edge_index(&t.u_edges, a);
            let j = edge_index(&t.v_edges, b);
            return Some(t.first + i * (t.v_edges.len() - 1) + j);
        }
        None
    }

    fn locate_linear(&self, p: Vec3) -> Option<usize> {
        self.elements.iter().position(|e| {
            let rel = p - e.center;
            let half = e.area.sqrt() / 2.0;
            let tol = 1e-9 * half.max(1.0);
            if rel.dot(e.normal).abs() > tol {
                return false;
            }
            let (u, v) = e.normal.orthonormal_basis();
            rel.dot(u).abs() <= half + tol && rel.dot(v).abs() <= half + tol
        })
    }

    /// Elements lying on `face`, if the grid was built by tiling.
    pub fn face_range(&self, face: Face) -> Option<std::ops::Range<usize>> {
        self.tilings.iter().find(|t| t.face == face).map(|t| {
            let n = (t.u_edges.len() - 1) * (t.v_edges.len() - 1);
            t.first..t.first + n
        })
    }
}

fn edge_index(edges: &[f64], x: f64) -> usize {
    let cells = edges.len() - 1;
    let k = edges.partition_point(|&e| e <= x);
    k.saturating_sub(1).min(cells - 1)
}

/// Cell edges along one face dimension: as many full `side` cells as fit,
/// plus one narrower residual cell when the dimension is not a multiple.
fn axis_edges(len: f64, side: f64) -> Vec<f64> {
    let ratio = len / side;
    let mut count = (ratio + 1e-9).floor() as usize;
    if count == 0 {
        count = 1;
    }
    let mut edges: Vec<f64> = (0..=count).map(|k| (k as f64 * side).min(len)).collect();
    let residual = len - count as f64 * side;
    if residual > 1e-9 * len {
        edges.push(len);
    } else {
        *edges.last_mut().unwrap() = len;
    }
    edges
}

/// Tile all six room faces with square elements of the given side.
pub fn discretize(room: &Room, element_side: f64) -> Result<ElementGrid> {
    discretize_faces(room, element_side, &Face::ALL)
}

/// Tile a subset of the room faces.
pub fn discretize_faces(room: &Room, element_side: f64, faces: &[Face]) -> Result<ElementGrid> {
    room.validate()?;
    let min_dim = room.length.min(room.width).min(room.height);
    if !(element_side.is_finite() && element_side > 0.0 && element_side <= min_dim) {
        return Err(Error::config(format!(
            "element side must lie in (0, {min_dim}], got {element_side}"
        )));
    }
    let mut elements = Vec::new();
    let mut tilings = Vec::new();
    for &face in faces {
        let frame = room.face_frame(face);
        let reflectivity = room.reflectivity(face);
        let u_edges = axis_edges(frame.u_len, element_side);
        let v_edges = axis_edges(frame.v_len, element_side);
        let first = elements.len();
        for iu in 0..u_edges.len() - 1 {
            let (u0, u1) = (u_edges[iu], u_edges[iu + 1]);
            for iv in 0..v_edges.len() - 1 {
                let (v0, v1) = (v_edges[iv], v_edges[iv + 1]);
                let center = frame.origin + frame.u * ((u0 + u1) / 2.0) + frame.v * ((v0 + v1) / 2.0);
                elements.push(SurfaceElement {
                    center,
                    normal: frame.normal,
                    area: (u1 - u0) * (v1 - v0),
                    reflectivity,
                    face,
                });
            }
        }
        tilings.push(FaceTiling {
            face,
            frame,
            u_edges,
            v_edges,
            first,
        });
    }
    Ok(ElementGrid {
        elements,
        element_side,
        tilings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApConfig {
    pub position: Vec3,
    /// Peak optical power `I_max` in watts.
    pub peak_power: f64,
    /// Beam half-angle divergence in radians.
    pub beam_divergence: f64,
    pub quantum_efficiency: f64,
}

impl ApConfig {
    pub fn new(position: Vec3, peak_power: f64, beam_divergence: f64, quantum_efficiency: f64) -> Result<Self> {
        let ap = ApConfig {
            position,
            peak_power,
            beam_divergence,
            quantum_efficiency,
        };
        ap.validate()?;
        Ok(ap)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.position.is_finite() {
            return Err(Error::config_key("ap_positions", "non-finite coordinate"));
        }
        if !(self.peak_power.is_finite() && self.peak_power > 0.0) {
            return Err(Error::config_key(
                "ap_power_w",
                format!("must be > 0, got {}", self.peak_power),
            ));
        }
        if !(self.beam_divergence.is_finite() && self.beam_divergence > 0.0) {
            return Err(Error::config_key(
                "beam_divergence_rad",
                format!("must be > 0, got {}", self.beam_divergence),
            ));
        }
        if !(self.quantum_efficiency > 0.0 && self.quantum_efficiency <= 1.0) {
            return Err(Error::config_key(
                "quantum_efficiency",
                format!("must lie in (0, 1], got {}", self.quantum_efficiency),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReceiverConfig {
    pub position: Vec3,
    pub normal: Vec3,
    /// Detector area in m². The aperture is a square of side `sqrt(area)`.
    pub area: f64,
    pub fov_half_angle: f64,
    /// Responsivity in A/W.
    pub responsivity: f64,
}

impl ReceiverConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.position.is_finite() {
            return Err(Error::Geometry("receiver position is not finite".into()));
        }
        if (self.normal.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::Geometry("receiver normal must be a unit vector".into()));
        }
        if !(self.area > 0.0) {
            return Err(Error::config_key(
                "rx_area_m2",
                format!("must be > 0, got {}", self.area),
            ));
        }
        if !(self.fov_half_angle > 0.0 && self.fov_half_angle <= std::f64::consts::FRAC_PI_2 + 1e-12) {
            return Err(Error::config_key(
                "rx_fov_deg",
                format!(
                    "half-angle must lie in (0, 90] degrees, got {} rad",
                    self.fov_half_angle
                ),
            ));
        }
        if !(self.responsivity > 0.0) {
            return Err(Error::config_key(
                "responsivity",
                format!("must be > 0, got {}", self.responsivity),
            ));
        }
        Ok(())
    }

    /// In-plane axes of the square aperture.
    pub fn aperture_axes(&self) -> (Vec3, Vec3) {
        if (self.normal - Vec3::Z).norm() < 1e-12 {
            (Vec3::X, Vec3::Y)
        } else {
            self.normal.orthonormal_basis()
        }
    }

    pub fn half_side(&self) -> f64 {
        self.area.sqrt() / 2.0
    }

    /// Optical gain of a point source at `from` radiating toward this
    /// detector: `A·cosθ/d²`, zero outside the field of view.
    pub fn capture(&self, from: Vec3) -> f64 {
        let d2 = (from - self.position).norm_squared();
        if d2 == 0.0 {
            return 0.0;
        }
        let cos_in = self.normal.dot(from - self.position) / d2.sqrt();
        if cos_in <= 0.0 || cos_in < self.fov_half_angle.cos() {
            return 0.0;
        }
        self.area * cos_in / d2
    }

    /// Whether a ray `origin + t·dir`, `0 < t < t_max`, crosses the aperture.
    pub fn blocks_ray(&self, origin: Vec3, dir: Vec3, t_max: f64) -> bool {
        let denom = dir.dot(self.normal);
        if denom.abs() < 1e-15 {
            return false;
        }
        let t = (self.position - origin).dot(self.normal) / denom;
        if !(t > 1e-12 && t < t_max) {
            return false;
        }
        let rel = origin + dir * t - self.position;
        let (u, v) = self.aperture_axes();
        let h = self.half_side();
        rel.dot(u).abs() <= h && rel.dot(v).abs() <= h
    }
}

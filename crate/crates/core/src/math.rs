//! Small deterministic geometry kernel: vectors, unit quaternions, boxes and
//! horizontal support surfaces.
//!
//! World convention: right-handed, `y` up. Yaw is a rotation about `+y`.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

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
        Self { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Unit vector in the same direction, or `None` for (near) zero vectors.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        (n > 1e-12).then(|| self * (1.0 / n))
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn component_mul(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x * o.x, self.y * o.y, self.z * o.z)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Unit quaternion `(w, x, y, z)`.
///
/// Every constructor and product renormalizes, so the unit-norm invariant
/// holds after arbitrary chains of operations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quat {
    fn default() -> Self {
        Quat::IDENTITY
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Builds a quaternion from raw components, normalizing. A zero input
    /// yields the identity.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quat { w, x, y, z }.normalized()
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let Some(a) = axis.normalized() else {
            return Quat::IDENTITY;
        };
        let (s, c) = (angle * 0.5).sin_cos();
        Quat::new(c, a.x * s, a.y * s, a.z * s)
    }

    pub fn from_yaw(yaw: f64) -> Self {
        Quat::from_axis_angle(Vec3::Y, yaw)
    }

    /// Intrinsic x-y-z composition: `Rx(a) * Ry(b) * Rz(c)`.
    pub fn from_euler_xyz(e: [f64; 3]) -> Self {
        Quat::from_axis_angle(Vec3::X, e[0])
            * Quat::from_axis_angle(Vec3::Y, e[1])
            * Quat::from_axis_angle(Vec3::Z, e[2])
    }

    /// Inverse of [`Quat::from_euler_xyz`]. The middle angle is in
    /// `[-pi/2, pi/2]`; at gimbal lock the third angle is set to zero.
    pub fn to_euler_xyz(self) -> [f64; 3] {
        let m = self.to_matrix();
        let sb = m[0][2].clamp(-1.0, 1.0);
        let b = sb.asin();
        if sb.abs() > 1.0 - 1e-12 {
            let a = m[2][1].atan2(m[1][1]);
            [a, b, 0.0]
        } else {
            let a = (-m[1][2]).atan2(m[2][2]);
            let c = (-m[0][1]).atan2(m[0][0]);
            [a, b, c]
        }
    }

    pub fn norm(self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(self) -> Quat {
        let n = self.norm();
        if n < 1e-15 || !n.is_finite() {
            return Quat::IDENTITY;
        }
        Quat { w: self.w / n, x: self.x / n, y: self.y / n, z: self.z / n }
    }

    pub fn conjugate(self) -> Quat {
        Quat { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    pub fn inverse(self) -> Quat {
        self.conjugate()
    }

    pub fn rotate(self, v: Vec3) -> Vec3 {
        let u = Vec3::new(self.x, self.y, self.z);
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }

    /// Row-major rotation matrix.
    pub fn to_matrix(self) -> [[f64; 3]; 3] {
        let Quat { w, x, y, z } = self;
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ]
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(self) -> f64 {
        2.0 * self.w.abs().clamp(0.0, 1.0).acos()
    }

    /// Angle of the relative rotation between two orientations.
    pub fn angle_to(self, o: Quat) -> f64 {
        (self.inverse() * o).angle()
    }

    pub fn slerp(self, o: Quat, t: f64) -> Quat {
        let mut d = self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z;
        let mut o = o;
        if d < 0.0 {
            d = -d;
            o = Quat { w: -o.w, x: -o.x, y: -o.y, z: -o.z };
        }
        if d > 0.9995 {
            return Quat::new(
                self.w + (o.w - self.w) * t,
                self.x + (o.x - self.x) * t,
                self.y + (o.y - self.y) * t,
                self.z + (o.z - self.z) * t,
            );
        }
        let theta = d.clamp(-1.0, 1.0).acos();
        let s = theta.sin();
        let a = ((1.0 - t) * theta).sin() / s;
        let b = (t * theta).sin() / s;
        Quat::new(
            a * self.w + b * o.w,
            a * self.x + b * o.x,
            a * self.y + b * o.y,
            a * self.z + b * o.z,
        )
    }

    pub fn is_finite(self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }
}

impl Mul for Quat {
    type Output = Quat;
    fn mul(self, o: Quat) -> Quat {
        Quat::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }
}

/// Decomposes `delta` into intrinsic x-y-z Euler angles, clamps each to
/// `[-limit, limit]` and recomposes.
pub fn clamp_incremental_rotation(delta: Quat, limit_rad: f64) -> Quat {
    let e = delta.to_euler_xyz();
    Quat::from_euler_xyz(e.map(|a| a.clamp(-limit_rad, limit_rad)))
}

/// A rigid transform: rotate, then translate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: Quat,
}

impl Pose {
    pub const IDENTITY: Pose = Pose { position: Vec3::ZERO, orientation: Quat::IDENTITY };

    pub fn new(position: Vec3, orientation: Quat) -> Self {
        Self { position, orientation }
    }

    pub fn transform_point(&self, p: Vec3) -> Vec3 {
        self.position + self.orientation.rotate(p)
    }

    pub fn compose(&self, child: &Pose) -> Pose {
        Pose {
            position: self.transform_point(child.position),
            orientation: self.orientation * child.orientation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.orientation.inverse();
        Pose { position: inv.rotate(-self.position), orientation: inv }
    }
}

/// Axis-aligned box. Faces that merely touch do not count as overlap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        debug_assert!(min.x <= max.x && min.y <= max.y && min.z <= max.z);
        Self { min, max }
    }

    pub fn from_center_half(center: Vec3, half: Vec3) -> Self {
        Self { min: center - half, max: center + half }
    }

    pub fn overlaps(&self, o: &Aabb) -> bool {
        aabb_overlap(self, o)
    }

    pub fn contains_point(&self, p: Vec3) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }

    pub fn contains_xz(&self, x: f64, z: f64) -> bool {
        x >= self.min.x && x <= self.max.x && z >= self.min.z && z <= self.max.z
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn half_extents(&self) -> Vec3 {
        (self.max - self.min) * 0.5
    }

    pub fn inflated_xz(&self, margin: f64) -> Aabb {
        Aabb {
            min: Vec3::new(self.min.x - margin, self.min.y, self.min.z - margin),
            max: Vec3::new(self.max.x + margin, self.max.y, self.max.z + margin),
        }
    }

    /// Axis-aligned bounds of a box with the given half extents after
    /// rotating it by `orientation` about its center.
    pub fn of_rotated_box(center: Vec3, half: Vec3, orientation: Quat) -> Aabb {
        let m = orientation.to_matrix();
        let h = half.to_array();
        let mut ext = [0.0; 3];
        for (i, e) in ext.iter_mut().enumerate() {
            *e = (0..3).map(|j| m[i][j].abs() * h[j]).sum();
        }
        Aabb::from_center_half(center, Vec3::from_array(ext))
    }
}

/// True iff the interiors of `a` and `b` intersect.
pub fn aabb_overlap(a: &Aabb, b: &Aabb) -> bool {
    a.min.x < b.max.x
        && b.min.x < a.max.x
        && a.min.y < b.max.y
        && b.min.y < a.max.y
        && a.min.z < b.max.z
        && b.min.z < a.max.z
}

/// Rectangle on the floor plane, possibly rotated about `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub center_x: f64,
    pub center_z: f64,
    pub half_x: f64,
    pub half_z: f64,
    #[serde(default)]
    pub yaw: f64,
}

impl Rect {
    pub fn axis_aligned(min_x: f64, min_z: f64, max_x: f64, max_z: f64) -> Self {
        Rect {
            center_x: 0.5 * (min_x + max_x),
            center_z: 0.5 * (min_z + max_z),
            half_x: 0.5 * (max_x - min_x),
            half_z: 0.5 * (max_z - min_z),
            yaw: 0.0,
        }
    }

    /// Maps a world point into the rectangle's local frame.
    pub fn to_local(&self, x: f64, z: f64) -> (f64, f64) {
        let (dx, dz) = (x - self.center_x, z - self.center_z);
        let (s, c) = self.yaw.sin_cos();
        (dx * c - dz * s, dx * s + dz * c)
    }

    pub fn to_world(&self, lx: f64, lz: f64) -> (f64, f64) {
        let (s, c) = self.yaw.sin_cos();
        (self.center_x + lx * c + lz * s, self.center_z - lx * s + lz * c)
    }

    pub fn contains(&self, x: f64, z: f64) -> bool {
        let (lx, lz) = self.to_local(x, z);
        lx.abs() <= self.half_x + 1e-12 && lz.abs() <= self.half_z + 1e-12
    }

    pub fn corners(&self) -> [(f64, f64); 4] {
        let (hx, hz) = (self.half_x, self.half_z);
        [
            self.to_world(-hx, -hz),
            self.to_world(hx, -hz),
            self.to_world(hx, hz),
            self.to_world(-hx, hz),
        ]
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.corners().iter().all(|&(x, z)| self.contains(x, z))
    }

    pub fn scaled(&self, factor: f64) -> Rect {
        Rect { half_x: self.half_x * factor, half_z: self.half_z * factor, ..*self }
    }

    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        let cs = self.corners();
        let min_x = cs.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
        let max_x = cs.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max);
        let min_z = cs.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
        let max_z = cs.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
        (min_x, min_z, max_x, max_z)
    }

    pub fn width(&self) -> f64 {
        2.0 * self.half_x
    }

    pub fn depth(&self) -> f64 {
        2.0 * self.half_z
    }
}

/// A horizontal support surface at height `height`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    pub rect: Rect,
    pub height: f64,
    /// Object id owning the surface; `None` for the floor.
    #[serde(default)]
    pub owner: Option<u32>,
}

/// Height of the highest surface containing `(x, z)`, or `None` when no
/// surface (including the floor) is hit.
pub fn raycast_down(x: f64, z: f64, surfaces: &[Surface]) -> Option<f64> {
    surfaces
        .iter()
        .filter(|s| s.rect.contains(x, z))
        .map(|s| s.height)
        .fold(None, |acc: Option<f64>, h| Some(acc.map_or(h, |a| a.max(h))))
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut r = a.rem_euclid(TAU);
    if r > PI {
        r -= TAU;
    }
    r
}

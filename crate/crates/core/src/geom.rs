//! Vectors, quaternions and poses, generic over the float type.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_traits::{Float, FromPrimitive};

/// Scalar type the geometry and reward code is written against.
pub trait Real: Float + FromPrimitive + Default + fmt::Debug + fmt::Display + Send + Sync + 'static {
    /// Converts a literal. Every literal used here is representable in f32.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Vec3<T> {
    pub const fn new(x: T, y: T, z: T) -> Self {
        Vec3 { x, y, z }
    }

    pub fn zero() -> Self {
        Vec3::new(T::zero(), T::zero(), T::zero())
    }

    pub fn from_array(a: [T; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Self) -> Self {
        Vec3::new(self.y * o.z - self.z * o.y, self.z * o.x - self.x * o.z, self.x * o.y - self.y * o.x)
    }

    pub fn norm_sq(self) -> T {
        self.dot(self)
    }

    pub fn norm(self) -> T {
        self.norm_sq().sqrt()
    }

    pub fn dist(self, o: Self) -> T {
        (self - o).norm()
    }

    /// Distance in the xy plane.
    pub fn dist_xy(self, o: Self) -> T {
        (self.x - o.x).hypot(self.y - o.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Moves toward `target` by at most `max_step`.
    pub fn step_toward(self, target: Self, max_step: T) -> Self {
        let d = target - self;
        let n = d.norm();
        if n <= max_step {
            target
        } else {
            self + d * (max_step / n)
        }
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> Mul<T> for Vec3<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Rotation quaternion stored as (w, x, y, z).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quat<T> {
    pub w: T,
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Quat<T> {
    pub const fn new(w: T, x: T, y: T, z: T) -> Self {
        Quat { w, x, y, z }
    }

    pub fn identity() -> Self {
        Quat::new(T::one(), T::zero(), T::zero(), T::zero())
    }

    pub fn from_axis_angle(axis: Vec3<T>, angle: T) -> Self {
        let a = axis * (T::one() / axis.norm());
        let half = angle / T::lit(2.0);
        let s = half.sin();
        Quat::new(half.cos(), a.x * s, a.y * s, a.z * s)
    }

    pub fn norm(self) -> T {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(self) -> Option<Self> {
        let n = self.norm();
        if !n.is_finite() || n <= T::epsilon() {
            return None;
        }
        Some(Quat::new(self.w / n, self.x / n, self.y / n, self.z / n))
    }

    pub fn conj(self) -> Self {
        Quat::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn rotate(self, v: Vec3<T>) -> Vec3<T> {
        let u = Vec3::new(self.x, self.y, self.z);
        let two = T::lit(2.0);
        let t = u.cross(v) * two;
        v + t * self.w + u.cross(t)
    }

    /// Angle of the rotation taking `self` to `other`, in [0, pi].
    pub fn angle_to(self, other: Self) -> T {
        let d = (self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z).abs();
        T::lit(2.0) * d.min(T::one()).acos()
    }
}

impl<T: Real> Mul for Quat<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Quat::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose<T> {
    pub position: Vec3<T>,
    pub orientation: Quat<T>,
}

/// Largest deviation from unit norm accepted for a pose orientation.
pub const QUAT_NORM_TOL: f64 = 1e-9;

impl<T: Real> Pose<T> {
    pub fn new(position: Vec3<T>, orientation: Quat<T>) -> Self {
        Pose { position, orientation }
    }

    pub fn at(position: Vec3<T>) -> Self {
        Pose::new(position, Quat::identity())
    }

    /// Checks the type invariants: finite position and unit quaternion.
    pub fn check(&self) -> Result<(), String> {
        if !self.position.is_finite() {
            return Err("position components must be finite".into());
        }
        let n = self.orientation.norm();
        if !((n - T::one()).abs() <= T::lit(QUAT_NORM_TOL)) {
            return Err(format!("quaternion norm {n} is not 1"));
        }
        Ok(())
    }

    /// `[x, y, z, qw, qx, qy, qz]`, the layout used on the wire.
    pub fn to_array7(&self) -> [T; 7] {
        let (p, q) = (self.position, self.orientation);
        [p.x, p.y, p.z, q.w, q.x, q.y, q.z]
    }

    /// Accepts a bare position (3 values, identity orientation) or position plus
    /// quaternion (7 values). The quaternion is renormalized.
    pub fn from_slice(v: &[T]) -> Result<Self, String> {
        let position = match v {
            [x, y, z, ..] if v.len() == 3 || v.len() == 7 => Vec3::new(*x, *y, *z),
            _ => return Err(format!("expected 3 or 7 numbers, got {}", v.len())),
        };
        if !position.is_finite() {
            return Err("position components must be finite".into());
        }
        let orientation = if v.len() == 7 {
            Quat::new(v[3], v[4], v[5], v[6]).normalized().ok_or("quaternion must be finite and non-zero")?
        } else {
            Quat::identity()
        };
        Ok(Pose { position, orientation })
    }
}

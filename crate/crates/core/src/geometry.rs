//! Coordinate frames, rigid transforms and the headset-to-device calibration solve.
//!
//! Everything downstream of ingest works in the [`FrameId::Device`] frame: origin at
//! the array center, z pointing up through the interaction volume.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use nalgebra::{Matrix3, Vector3, SVD};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::table::{self, TableError};

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("at least 3 point pairs are required, got {0}")]
    TooFewPoints(usize),
    #[error("source points are collinear or coincident")]
    DegenerateConfiguration,
    #[error("point lists differ in length ({src} vs {dst})")]
    LengthMismatch { src: usize, dst: usize },
    #[error("rotation is not orthonormal with det +1")]
    InvalidRotation,
    #[error(transparent)]
    Table(#[from] TableError),
}

/// A point or direction in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
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

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    /// Returns `None` for (near-)zero vectors.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        (n > f64::EPSILON && n.is_finite()).then(|| self / n)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Component-wise product.
    pub fn scale_by(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x * o.x, self.y * o.y, self.z * o.z)
    }

    pub fn min_component(self) -> f64 {
        self.x.min(self.y).min(self.z)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub(crate) fn to_na(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub(crate) fn from_na(v: Vector3<f64>) -> Self {
        Vec3::new(v.x, v.y, v.z)
    }
}

impl fmt::Display for Vec3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
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

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

// On the wire a Vec3 is a bare `[x, y, z]` array.
impl Serialize for Vec3 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vec3 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let a = <[f64; 3]>::deserialize(d)?;
        Ok(Vec3::from(a))
    }
}

/// Which frame a position is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameId {
    /// Origin at the array center, z up.
    #[default]
    Device,
    Headset,
    World,
}

/// Proper rigid motion `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::ZERO,
        }
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    /// Rotation by `angle` radians about `axis` (right-handed), then translation.
    pub fn from_axis_angle(axis: Vec3, angle: f64, translation: Vec3) -> Self {
        let axis = nalgebra::Unit::new_normalize(axis.to_na());
        let rotation = *nalgebra::Rotation3::from_axis_angle(&axis, angle).matrix();
        Self { rotation, translation }
    }

    /// Validates orthonormality and handedness to 1e-9.
    pub fn new(rotation: [[f64; 3]; 3], translation: Vec3) -> Result<Self, GeometryError> {
        let r = Matrix3::from_fn(|i, j| rotation[i][j]);
        let ortho_err = (r.transpose() * r - Matrix3::identity()).abs().max();
        if !ortho_err.is_finite() || ortho_err > 1e-9 || (r.determinant() - 1.0).abs() > 1e-9 {
            return Err(GeometryError::InvalidRotation);
        }
        if !translation.is_finite() {
            return Err(GeometryError::InvalidRotation);
        }
        Ok(Self {
            rotation: r,
            translation,
        })
    }

    /// Row-major rotation.
    pub fn rotation_rows(&self) -> [[f64; 3]; 3] {
        let r = &self.rotation;
        [
            [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
            [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
            [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
        ]
    }

    pub fn translation(&self) -> Vec3 {
        self.translation
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        Vec3::from_na(self.rotation * p.to_na()) + self.translation
    }

    /// Rotates a direction; translation does not apply.
    pub fn rotate(&self, d: Vec3) -> Vec3 {
        Vec3::from_na(self.rotation * d.to_na())
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.apply(other.translation),
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -Vec3::from_na(rt * self.translation.to_na()),
        }
    }

    /// Angle of `self.rotation⁻¹ · other.rotation`, in radians.
    pub fn rotation_angle_to(&self, other: &RigidTransform) -> f64 {
        let rel = self.rotation.transpose() * other.rotation;
        let c = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        // acos loses precision near 0, so use the skew part as well.
        let s = 0.5
            * Vector3::new(
                rel[(2, 1)] - rel[(1, 2)],
                rel[(0, 2)] - rel[(2, 0)],
                rel[(1, 0)] - rel[(0, 1)],
            )
            .norm();
        s.atan2(c)
    }
}

/// Deterministic orthonormal basis `(u, v)` of the plane perpendicular to `normal`.
///
/// `u = normalize(normal × ẑ)`, falling back to `x̂` when `normal` is (anti)parallel
/// to `ẑ`; `v = normal × u`.
pub fn plane_basis(normal: Vec3) -> (Vec3, Vec3) {
    let c = normal.cross(Vec3::Z);
    let u = if c.norm() < 1e-6 { Vec3::X } else { c / c.norm() };
    (u, normal.cross(u))
}

/// Least-squares proper rigid transform mapping `src` onto `dst` (Kabsch, no scale).
pub fn solve_rigid_transform(src: &[Vec3], dst: &[Vec3]) -> Result<RigidTransform, GeometryError> {
    if src.len() != dst.len() {
        return Err(GeometryError::LengthMismatch {
            src: src.len(),
            dst: dst.len(),
        });
    }
    if src.len() < 3 {
        return Err(GeometryError::TooFewPoints(src.len()));
    }
    let n = src.len() as f64;
    let src_c = src.iter().fold(Vec3::ZERO, |a, &p| a + p) / n;
    let dst_c = dst.iter().fold(Vec3::ZERO, |a, &p| a + p) / n;

    let mut scatter = Matrix3::zeros();
    let mut cov = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        let a = (*s - src_c).to_na();
        let b = (*d - dst_c).to_na();
        scatter += a * a.transpose();
        cov += b * a.transpose();
    }

    let sv = scatter.singular_values();
    let (largest, middle) = sorted_top_two(sv);
    if !(largest > 0.0) || middle < 1e-12 * largest {
        return Err(GeometryError::DegenerateConfiguration);
    }

    // cov = U Σ Vᵀ, R = U diag(1,1,d) Vᵀ with d fixing the handedness.
    let svd = SVD::new(cov, true, true);
    let u = svd.u.ok_or(GeometryError::DegenerateConfiguration)?;
    let v_t = svd.v_t.ok_or(GeometryError::DegenerateConfiguration)?;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let d = (u * v_t).determinant().signum();
    let mut diag = Matrix3::identity();
    diag[(order[2], order[2])] = d;
    let rotation = u * diag * v_t;

    let translation = dst_c - Vec3::from_na(rotation * src_c.to_na());
    Ok(RigidTransform { rotation, translation })
}

fn sorted_top_two(sv: Vector3<f64>) -> (f64, f64) {
    let mut v = [sv[0], sv[1], sv[2]];
    v.sort_by(|a, b| b.total_cmp(a));
    (v[0], v[1])
}

/// RMS distance between `T(src_i)` and `dst_i`.
pub fn calibration_residual(t: &RigidTransform, src: &[Vec3], dst: &[Vec3]) -> Result<f64, GeometryError> {
    if src.len() != dst.len() {
        return Err(GeometryError::LengthMismatch {
            src: src.len(),
            dst: dst.len(),
        });
    }
    if src.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = src
        .iter()
        .zip(dst)
        .map(|(s, d)| {
            let e = t.apply(*s) - *d;
            e.dot(e)
        })
        .sum();
    Ok((sum / src.len() as f64).sqrt())
}

/// Matched point pairs, `src` in the headset frame and `dst` in the device frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorrespondenceSet {
    pub src: Vec<Vec3>,
    pub dst: Vec<Vec3>,
}

impl CorrespondenceSet {
    /// Parses `sx,sy,sz,dx,dy,dz` rows; `#` starts a comment line.
    pub fn parse_csv(text: &str) -> Result<Self, GeometryError> {
        let rows = table::parse_rows(text, 6)?;
        let mut set = CorrespondenceSet::default();
        for r in rows {
            set.src.push(Vec3::new(r[0], r[1], r[2]));
            set.dst.push(Vec3::new(r[3], r[4], r[5]));
        }
        Ok(set)
    }

    pub fn solve(&self) -> Result<(RigidTransform, f64), GeometryError> {
        let t = solve_rigid_transform(&self.src, &self.dst)?;
        let r = calibration_residual(&t, &self.src, &self.dst)?;
        Ok((t, r))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn tetra() -> Vec<Vec3> {
        vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ]
    }

    fn close(a: Vec3, b: Vec3, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn apply_identity_translation_rotation() {
        let p = Vec3::new(0.1, 0.2, 0.3);
        assert_eq!(RigidTransform::identity().apply(p), p);
        let t = RigidTransform::from_translation(Vec3::new(0.0, 0.0, 0.1));
        assert_eq!(t.apply(Vec3::ZERO), Vec3::new(0.0, 0.0, 0.1));
        let rz = RigidTransform::from_axis_angle(Vec3::Z, FRAC_PI_2, Vec3::ZERO);
        assert!(close(rz.apply(Vec3::X), Vec3::Y, 1e-12));
    }

    #[test]
    fn compose_and_invert() {
        let t = RigidTransform::from_axis_angle(Vec3::new(1.0, 2.0, 3.0), 0.7, Vec3::new(0.3, -0.1, 2.0));
        assert_eq!(RigidTransform::identity().compose(&t), t);
        let inv = RigidTransform::from_translation(Vec3::new(1.0, 2.0, 3.0)).inverse();
        assert_eq!(inv.translation(), Vec3::new(-1.0, -2.0, -3.0));
        let p = Vec3::new(0.5, 0.25, -1.0);
        assert!(close(t.inverse().apply(t.apply(p)), p, 1e-12));
    }

    #[test]
    fn new_rejects_reflection() {
        let mirror = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]];
        assert_eq!(
            RigidTransform::new(mirror, Vec3::ZERO),
            Err(GeometryError::InvalidRotation)
        );
        let skew = [[1.0, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(RigidTransform::new(skew, Vec3::ZERO).is_err());
    }

    #[test]
    fn solve_identity_and_translation() {
        let src = tetra();
        let t = solve_rigid_transform(&src, &src).unwrap();
        assert!(calibration_residual(&t, &src, &src).unwrap() < 1e-12);
        assert!(t.rotation_angle_to(&RigidTransform::identity()) < 1e-12);

        let off = Vec3::new(0.0, 0.0, 0.05);
        let dst: Vec<_> = src.iter().map(|&p| p + off).collect();
        let t = solve_rigid_transform(&src, &dst).unwrap();
        assert!(close(t.translation(), off, 1e-12));
        assert!(t.rotation_angle_to(&RigidTransform::identity()) < 1e-12);
    }

    #[test]
    fn solve_recovers_rz37() {
        let truth = RigidTransform::from_axis_angle(Vec3::Z, 37f64.to_radians(), Vec3::new(0.1, -0.2, 0.3));
        let src = tetra();
        let dst: Vec<_> = src.iter().map(|&p| truth.apply(p)).collect();
        let t = solve_rigid_transform(&src, &dst).unwrap();
        assert!(calibration_residual(&t, &src, &dst).unwrap() < 1e-9);
        assert!(t.rotation_angle_to(&truth) < 1e-9);
        assert!(close(t.translation(), truth.translation(), 1e-9));
    }

    #[test]
    fn solve_never_returns_reflection_for_mirrored_input() {
        let src = tetra();
        let dst: Vec<_> = src.iter().map(|p| Vec3::new(p.x, p.y, -p.z)).collect();
        let t = solve_rigid_transform(&src, &dst).unwrap();
        let r = t.rotation_rows();
        let det = nalgebra::Matrix3::from_fn(|i, j| r[i][j]).determinant();
        assert!((det - 1.0).abs() < 1e-9);
    }

    #[test]
    fn solve_errors() {
        let two = vec![Vec3::ZERO, Vec3::X];
        assert_eq!(solve_rigid_transform(&two, &two), Err(GeometryError::TooFewPoints(2)));
        let line: Vec<_> = (0..5).map(|i| Vec3::new(i as f64 * 0.1, 0.0, 0.0)).collect();
        assert_eq!(
            solve_rigid_transform(&line, &line),
            Err(GeometryError::DegenerateConfiguration)
        );
        assert!(matches!(
            solve_rigid_transform(&tetra(), &two),
            Err(GeometryError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn residual_of_uniform_offset() {
        let src = tetra();
        let dst: Vec<_> = src.iter().map(|&p| p + Vec3::new(0.002, 0.0, 0.0)).collect();
        let r = calibration_residual(&RigidTransform::identity(), &src, &dst).unwrap();
        assert!((r - 0.002).abs() < 1e-15);
        assert_eq!(
            calibration_residual(&RigidTransform::identity(), &src, &src).unwrap(),
            0.0
        );
    }

    #[test]
    fn plane_basis_conventions() {
        assert_eq!(plane_basis(Vec3::Z), (Vec3::X, Vec3::Y));
        let n = Vec3::new(1.0, 2.0, 0.5).normalized().unwrap();
        let (u, v) = plane_basis(n);
        assert!(u.dot(n).abs() < 1e-12 && v.dot(n).abs() < 1e-12 && u.dot(v).abs() < 1e-12);
        assert!((u.norm() - 1.0).abs() < 1e-12 && (v.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn correspondence_csv() {
        let text = "# headset -> device\n0,0,0,0,0,0.1\n1,0,0,1,0,0.1\n0,1,0,0,1,0.1\n\n0,0,1,0,0,1.1\n";
        let set = CorrespondenceSet::parse_csv(text).unwrap();
        assert_eq!(set.src.len(), 4);
        let (t, r) = set.solve().unwrap();
        assert!(r < 1e-12);
        assert!(close(t.translation(), Vec3::new(0.0, 0.0, 0.1), 1e-12));
        assert!(CorrespondenceSet::parse_csv("1,2,3\n").is_err());
    }
}

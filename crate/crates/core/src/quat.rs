//! Quaternion algebra and conversions between rotation parameterizations.
//!
//! Components are stored real-part first, `(w, x, y, z)`, and products follow
//! the Hamilton convention. Nothing in this module renormalizes implicitly;
//! callers that need unit quaternions call [`Quaternion::normalized`].

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::ops::{Mul, Neg};
use std::str::FromStr;

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

/// Below this rotation angle `expmap_to_quat` switches to a Taylor expansion.
pub const SMALL_ANGLE: f64 = 1e-8;
/// Norms at or below this are treated as a collapsed quaternion.
pub const DEGENERATE_NORM: f64 = 1e-12;
/// Threshold on the middle-axis sine beyond which the third Euler angle is pinned to 0.
pub const GIMBAL_THRESHOLD: f64 = 1.0 - 1e-7;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self::new(s[0], s[1], s[2], s[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    /// Rotation of `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let n = norm3(axis);
        if n == 0.0 {
            return Self::IDENTITY;
        }
        let (s, c) = (angle * 0.5).sin_cos();
        Self::new(c, s * axis[0] / n, s * axis[1] / n, s * axis[2] / n)
    }

    /// Rotation about a principal axis (0 = x, 1 = y, 2 = z).
    pub fn about_axis(axis: usize, angle: f64) -> Self {
        let (s, c) = (angle * 0.5).sin_cos();
        let mut q = Self::new(c, 0.0, 0.0, 0.0);
        match axis {
            0 => q.x = s,
            1 => q.y = s,
            _ => q.z = s,
        }
        q
    }

    pub fn conjugate(self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn dot(self, o: Self) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn scale(self, s: f64) -> Self {
        Self::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    pub fn is_unit(self, tol: f64) -> bool {
        (self.norm_squared() - 1.0).abs() <= tol
    }

    pub fn normalized(self) -> Result<Self> {
        qnormalize(self)
    }

    pub fn rotate(self, v: Vec3) -> Vec3 {
        qrotate(self, v)
    }

    /// Standard quaternion-to-matrix map for a unit quaternion (row-major).
    pub fn to_rotation_matrix(self) -> [[f64; 3]; 3] {
        let Quaternion { w, x, y, z } = self;
        [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;

    fn mul(self, rhs: Quaternion) -> Quaternion {
        qmul(self, rhs)
    }
}

impl Neg for Quaternion {
    type Output = Quaternion;

    fn neg(self) -> Quaternion {
        self.scale(-1.0)
    }
}

/// Hamilton product `a ⊗ b`.
pub fn qmul(a: Quaternion, b: Quaternion) -> Quaternion {
    Quaternion {
        w: a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
        x: a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
        y: a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
        z: a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
    }
}

pub fn qnormalize(q: Quaternion) -> Result<Quaternion> {
    let n = q.norm();
    if n <= DEGENERATE_NORM || !n.is_finite() {
        return Err(Error::DegenerateQuaternion { norm: n });
    }
    Ok(q.scale(1.0 / n))
}

/// `q ⊗ (0, v) ⊗ q*`, expanded. For non-unit `q` the result is scaled by `|q|²`.
pub fn qrotate(q: Quaternion, v: Vec3) -> Vec3 {
    let u = [q.x, q.y, q.z];
    let uv = dot3(u, v);
    let uu = dot3(u, u);
    let c = cross3(u, v);
    let s = q.w * q.w - uu;
    [
        s * v[0] + 2.0 * uv * u[0] + 2.0 * q.w * c[0],
        s * v[1] + 2.0 * uv * u[1] + 2.0 * q.w * c[1],
        s * v[2] + 2.0 * uv * u[2] + 2.0 * q.w * c[2],
    ]
}

/// Exponential map (axis scaled by angle) to unit quaternion.
pub fn expmap_to_quat(e: Vec3) -> Quaternion {
    let theta = norm3(e);
    let half = 0.5 * theta;
    // sin(θ/2)/θ, continuous through θ = 0
    let k = if theta < SMALL_ANGLE {
        0.5 - theta * theta / 48.0
    } else {
        half.sin() / theta
    };
    Quaternion::new(half.cos(), k * e[0], k * e[1], k * e[2])
}

/// Inverse of [`expmap_to_quat`], choosing the representative with angle in `[0, π]`.
pub fn quat_to_expmap(q: Quaternion) -> Vec3 {
    let q = if q.w < 0.0 { -q } else { q };
    let s = (q.x * q.x + q.y * q.y + q.z * q.z).sqrt();
    let theta = 2.0 * s.atan2(q.w);
    let k = if s < SMALL_ANGLE {
        2.0 / q.w.max(DEGENERATE_NORM)
    } else {
        theta / s
    };
    [k * q.x, k * q.y, k * q.z]
}

/// Rotation angle between two orientations, insensitive to quaternion sign.
pub fn quat_angle_distance(a: Quaternion, b: Quaternion) -> f64 {
    2.0 * a.dot(b).abs().clamp(0.0, 1.0).acos()
}

/// Flips signs so that each quaternion is the representative closest to its
/// predecessor. The first element is kept as is.
pub fn fix_antipodal(seq: &[Quaternion]) -> Vec<Quaternion> {
    let mut out = Vec::with_capacity(seq.len());
    for (t, &q) in seq.iter().enumerate() {
        if t == 0 {
            out.push(q);
            continue;
        }
        let prev: Quaternion = out[t - 1];
        // ‖q − p‖² − ‖−q − p‖² = −4 q·p
        out.push(if q.dot(prev) < 0.0 { -q } else { q });
    }
    out
}

/// In-place antipodal fix over a flat `[frames × joints × 4]` buffer, per joint.
pub fn fix_antipodal_flat(data: &mut [f64], joints: usize) {
    let stride = joints * 4;
    if stride == 0 {
        return;
    }
    let frames = data.len() / stride;
    for t in 1..frames {
        for j in 0..joints {
            let cur = t * stride + j * 4;
            let prev = cur - stride;
            let d: f64 = (0..4).map(|c| data[cur + c] * data[prev + c]).sum();
            if d < 0.0 {
                for c in 0..4 {
                    data[cur + c] = -data[cur + c];
                }
            }
        }
    }
}

/// Intrinsic Euler axis order; `Zyx` means `R = Rz(a1)·Ry(a2)·Rx(a3)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum EulerOrder {
    Xyz,
    Xzy,
    Yxz,
    Yzx,
    Zxy,
    #[default]
    Zyx,
}

impl EulerOrder {
    pub const ALL: [EulerOrder; 6] = [
        EulerOrder::Xyz,
        EulerOrder::Xzy,
        EulerOrder::Yxz,
        EulerOrder::Yzx,
        EulerOrder::Zxy,
        EulerOrder::Zyx,
    ];

    pub fn axes(self) -> [usize; 3] {
        match self {
            EulerOrder::Xyz => [0, 1, 2],
            EulerOrder::Xzy => [0, 2, 1],
            EulerOrder::Yxz => [1, 0, 2],
            EulerOrder::Yzx => [1, 2, 0],
            EulerOrder::Zxy => [2, 0, 1],
            EulerOrder::Zyx => [2, 1, 0],
        }
    }

    pub fn from_axes(axes: [usize; 3]) -> Option<Self> {
        Self::ALL.into_iter().find(|o| o.axes() == axes)
    }

    /// +1 for cyclic axis orders, −1 otherwise.
    fn parity(self) -> f64 {
        match self {
            EulerOrder::Xyz | EulerOrder::Yzx | EulerOrder::Zxy => 1.0,
            _ => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EulerOrder::Xyz => "XYZ",
            EulerOrder::Xzy => "XZY",
            EulerOrder::Yxz => "YXZ",
            EulerOrder::Yzx => "YZX",
            EulerOrder::Zxy => "ZXY",
            EulerOrder::Zyx => "ZYX",
        }
    }
}

impl fmt::Display for EulerOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EulerOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut axes = [0usize; 3];
        let chars: Vec<char> = s.trim().chars().collect();
        if chars.len() != 3 {
            return Err(Error::Config(format!("invalid Euler order `{s}`")));
        }
        for (slot, c) in axes.iter_mut().zip(chars) {
            *slot = match c.to_ascii_uppercase() {
                'X' => 0,
                'Y' => 1,
                'Z' => 2,
                _ => return Err(Error::Config(format!("invalid Euler order `{s}`"))),
            };
        }
        EulerOrder::from_axes(axes).ok_or_else(|| Error::Config(format!("invalid Euler order `{s}`")))
    }
}

pub fn euler_to_quat(angles: Vec3, order: EulerOrder) -> Quaternion {
    let ax = order.axes();
    Quaternion::about_axis(ax[0], angles[0])
        * Quaternion::about_axis(ax[1], angles[1])
        * Quaternion::about_axis(ax[2], angles[2])
}

pub fn quat_to_euler(q: Quaternion, order: EulerOrder) -> Vec3 {
    euler_from_matrix(&q.to_rotation_matrix(), order)
}

fn euler_from_matrix(r: &[[f64; 3]; 3], order: EulerOrder) -> Vec3 {
    let [i, j, k] = order.axes();
    let s = order.parity();
    let sb = (s * r[i][k]).clamp(-1.0, 1.0);
    if sb.abs() > GIMBAL_THRESHOLD {
        let a = (s * r[k][j]).atan2(r[j][j]);
        [a, sb.signum() * FRAC_PI_2, 0.0]
    } else {
        let a = (-s * r[j][k]).atan2(r[k][k]);
        let c = (-s * r[i][j]).atan2(r[i][i]);
        [a, sb.asin(), c]
    }
}

/// Partial derivatives of the rotation-matrix entries with respect to `(w, x, y, z)`.
fn rotation_matrix_jacobian(q: Quaternion) -> [[[f64; 4]; 3]; 3] {
    let Quaternion { w, x, y, z } = q;
    [
        [
            [0.0, 0.0, -4.0 * y, -4.0 * z],
            [-2.0 * z, 2.0 * y, 2.0 * x, -2.0 * w],
            [2.0 * y, 2.0 * z, 2.0 * w, 2.0 * x],
        ],
        [
            [2.0 * z, 2.0 * y, 2.0 * x, 2.0 * w],
            [0.0, -4.0 * x, 0.0, -4.0 * z],
            [-2.0 * x, -2.0 * w, 2.0 * z, 2.0 * y],
        ],
        [
            [-2.0 * y, 2.0 * z, -2.0 * w, 2.0 * x],
            [2.0 * x, 2.0 * w, 2.0 * z, 2.0 * y],
            [0.0, -4.0 * x, -4.0 * y, 0.0],
        ],
    ]
}

/// Euler angles together with their 3×4 Jacobian with respect to `(w, x, y, z)`.
///
/// The angles are the composition of [`Quaternion::to_rotation_matrix`] and the
/// matrix decomposition, so the Jacobian is exact for non-unit input as well.
/// Derivatives through the gimbal-lock branch are taken as zero for the pinned
/// angles.
pub fn quat_to_euler_jacobian(q: Quaternion, order: EulerOrder) -> (Vec3, [[f64; 4]; 3]) {
    let r = q.to_rotation_matrix();
    let dr = rotation_matrix_jacobian(q);
    let [i, j, k] = order.axes();
    let s = order.parity();
    let mut jac = [[0.0; 4]; 3];

    let atan2_grad = |ny: f64, dy: &[f64; 4], nx: f64, dx: &[f64; 4]| {
        let d = nx * nx + ny * ny;
        let mut g = [0.0; 4];
        if d > 0.0 {
            for c in 0..4 {
                g[c] = (nx * dy[c] - ny * dx[c]) / d;
            }
        }
        g
    };
    let scaled = |v: &[f64; 4], f: f64| [v[0] * f, v[1] * f, v[2] * f, v[3] * f];

    let raw_sb = s * r[i][k];
    let sb = raw_sb.clamp(-1.0, 1.0);
    if sb.abs() > GIMBAL_THRESHOLD {
        let a = (s * r[k][j]).atan2(r[j][j]);
        jac[0] = atan2_grad(s * r[k][j], &scaled(&dr[k][j], s), r[j][j], &dr[j][j]);
        return ([a, sb.signum() * FRAC_PI_2, 0.0], jac);
    }
    let a = (-s * r[j][k]).atan2(r[k][k]);
    let c = (-s * r[i][j]).atan2(r[i][i]);
    jac[0] = atan2_grad(-s * r[j][k], &scaled(&dr[j][k], -s), r[k][k], &dr[k][k]);
    let inv = 1.0 / (1.0 - sb * sb).sqrt();
    jac[1] = scaled(&dr[i][k], s * inv);
    jac[2] = atan2_grad(-s * r[i][j], &scaled(&dr[i][j], -s), r[i][i], &dr[i][i]);
    ([a, sb.asin(), c], jac)
}

/// Wraps an angle difference into `(−π, π]`.
pub fn wrap_angle(d: f64) -> f64 {
    d - TAU * ((d - PI) / TAU).ceil()
}

/// `min over integer k of |d + 2πk|`.
///
/// The candidate `k` from the wrap is refined against its neighbours so the
/// result is the exact floating-point minimum of `|d + 2πk|`.
pub fn periodic_abs_diff(d: f64) -> f64 {
    let k0 = -((d - PI) / TAU).ceil();
    let mut best = (d + TAU * k0).abs();
    for k in [k0 - 1.0, k0 + 1.0] {
        let v = (d + TAU * k).abs();
        if v < best {
            best = v;
        }
    }
    best
}

/// Smallest rotation taking direction `a` onto direction `b`.
pub fn shortest_arc(a: Vec3, b: Vec3) -> Quaternion {
    let (a, b) = (scale3(a, 1.0 / norm3(a)), scale3(b, 1.0 / norm3(b)));
    let d = dot3(a, b);
    if d < -1.0 + 1e-12 {
        let helper = if a[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        return Quaternion::from_axis_angle(cross3(a, helper), PI);
    }
    let c = cross3(a, b);
    let q = Quaternion::new(1.0 + d, c[0], c[1], c[2]);
    q.scale(1.0 / q.norm())
}

pub fn scale3(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// Yaw about the vertical (+y) axis.
pub fn yaw_quat(angle: f64) -> Quaternion {
    Quaternion::about_axis(1, angle)
}

pub fn dot3(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross3(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm3(a: Vec3) -> f64 {
    dot3(a, a).sqrt()
}

pub fn add3(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub3(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unit(rng: &mut impl Rng) -> Quaternion {
        loop {
            let q = Quaternion::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            if q.norm() > 0.1 {
                return q.normalized().unwrap();
            }
        }
    }

    fn close(a: Quaternion, b: Quaternion, tol: f64) -> bool {
        (a.w - b.w).abs() <= tol
            && (a.x - b.x).abs() <= tol
            && (a.y - b.y).abs() <= tol
            && (a.z - b.z).abs() <= tol
    }

    #[test]
    fn identity_and_k_squared() {
        let q = Quaternion::new(0.3, -0.2, 0.9, 0.1);
        assert_eq!(Quaternion::IDENTITY * q, q);
        let k = Quaternion::new(0.0, 0.0, 0.0, 1.0);
        assert_eq!(k * k, Quaternion::new(-1.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn unit_product_stays_unit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let p = random_unit(&mut rng) * random_unit(&mut rng);
            assert!((p.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn normalize_cases() {
        assert_eq!(
            qnormalize(Quaternion::new(2.0, 0.0, 0.0, 0.0)).unwrap(),
            Quaternion::IDENTITY
        );
        assert!(matches!(
            qnormalize(Quaternion::new(0.0, 0.0, 0.0, 0.0)),
            Err(Error::DegenerateQuaternion { .. })
        ));
    }

    #[test]
    fn rotate_half_turn_about_z() {
        let q = Quaternion::from_axis_angle([0.0, 0.0, 1.0], PI);
        let v = q.rotate([1.0, 0.0, 0.0]);
        assert!((v[0] + 1.0).abs() < 1e-15 && v[1].abs() < 1e-15 && v[2].abs() < 1e-15);
    }

    #[test]
    fn expmap_cases() {
        assert_eq!(expmap_to_quat([0.0; 3]), Quaternion::IDENTITY);
        let q = expmap_to_quat([PI, 0.0, 0.0]);
        assert!(close(q, Quaternion::new(0.0, 1.0, 0.0, 0.0), 1e-15));
    }

    #[test]
    fn expmap_continuous_at_origin() {
        let a = expmap_to_quat([1e-9, 0.0, 0.0]);
        let b = expmap_to_quat([1e-7, 0.0, 0.0]);
        assert!(close(a, b, 1e-7));
    }

    #[test]
    fn expmap_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let q = random_unit(&mut rng);
            let back = expmap_to_quat(quat_to_expmap(q));
            assert!(back.dot(q).abs() > 1.0 - 1e-12);
        }
    }

    #[test]
    fn euler_simple_cases() {
        for order in EulerOrder::ALL {
            let e = quat_to_euler(Quaternion::IDENTITY, order);
            assert!(e.iter().all(|a| a.abs() < 1e-15), "{order}: {e:?}");
        }
        let q90z = Quaternion::about_axis(2, FRAC_PI_2);
        let e = quat_to_euler(q90z, EulerOrder::Zyx);
        assert!((e[0] - FRAC_PI_2).abs() < 1e-12 && e[1].abs() < 1e-12 && e[2].abs() < 1e-12);
    }

    #[test]
    fn euler_roundtrip_all_orders() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for order in EulerOrder::ALL {
            for _ in 0..10_000 {
                let q = random_unit(&mut rng);
                let back = euler_to_quat(quat_to_euler(q, order), order);
                assert!(back.dot(q).abs() >= 1.0 - 1e-9, "{order}");
            }
        }
    }

    #[test]
    fn euler_gimbal_lock_convention() {
        for order in EulerOrder::ALL {
            let ax = order.axes();
            let q = Quaternion::about_axis(ax[0], 0.4)
                * Quaternion::about_axis(ax[1], FRAC_PI_2)
                * Quaternion::about_axis(ax[2], 0.3);
            let e = quat_to_euler(q, order);
            assert_eq!(e[2], 0.0);
            let back = euler_to_quat(e, order);
            assert!(back.dot(q).abs() > 1.0 - 1e-9, "{order}: {e:?}");
        }
    }

    #[test]
    fn order_parsing() {
        for order in EulerOrder::ALL {
            assert_eq!(order.as_str().parse::<EulerOrder>().unwrap(), order);
        }
        assert!("XXY".parse::<EulerOrder>().is_err());
    }

    #[test]
    fn antipodal_fix_cases() {
        let q = Quaternion::new(0.5, 0.5, 0.5, 0.5);
        assert_eq!(fix_antipodal(&[q, -q, q]), vec![q, q, q]);
        let smooth = [q, Quaternion::IDENTITY, q];
        assert_eq!(fix_antipodal(&smooth), smooth.to_vec());
    }

    #[test]
    fn antipodal_flat_matches_sequence_version() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let seq: Vec<Quaternion> = (0..50)
            .map(|_| {
                let q = random_unit(&mut rng);
                if rng.gen_bool(0.5) {
                    -q
                } else {
                    q
                }
            })
            .collect();
        let mut flat: Vec<f64> = seq.iter().flat_map(|q| q.to_array()).collect();
        fix_antipodal_flat(&mut flat, 1);
        let fixed = fix_antipodal(&seq);
        let expect: Vec<f64> = fixed.iter().flat_map(|q| q.to_array()).collect();
        assert_eq!(flat, expect);
    }

    #[test]
    fn angle_distance_cases() {
        let a = Quaternion::new(0.5, 0.5, -0.5, 0.5);
        assert!(quat_angle_distance(a, a) < 1e-7);
        assert!(quat_angle_distance(a, -a) < 1e-7);
        let r = Quaternion::from_axis_angle([1.0, 2.0, 3.0], FRAC_PI_2);
        assert!((quat_angle_distance(Quaternion::IDENTITY, r) - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn wrap_and_periodic_diff() {
        assert!((periodic_abs_diff((PI - 0.1) - (-PI + 0.1)) - 0.2).abs() < 1e-12);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert_eq!(wrap_angle(0.25), 0.25);
    }

    #[test]
    fn euler_jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = 1e-6;
        for order in EulerOrder::ALL {
            for _ in 0..100 {
                let q = random_unit(&mut rng);
                let (e, jac) = quat_to_euler_jacobian(q, order);
                assert_eq!(e, quat_to_euler(q, order));
                for c in 0..4 {
                    let mut p = q.to_array();
                    let mut m = q.to_array();
                    p[c] += h;
                    m[c] -= h;
                    let ep = quat_to_euler(Quaternion::from_array(p), order);
                    let em = quat_to_euler(Quaternion::from_array(m), order);
                    for a in 0..3 {
                        let fd = wrap_angle(ep[a] - em[a]) / (2.0 * h);
                        assert!(
                            (fd - jac[a][c]).abs() < 1e-4 * (1.0 + fd.abs()),
                            "{order} angle {a} comp {c}: fd {fd} vs {}",
                            jac[a][c]
                        );
                    }
                }
            }
        }
    }
}

//! Geometry of a single hyperbolic plane in the Poincare disk and upper
//! half-plane models.
//!
//! Isometries are stored as real `SL(2, R)` matrices acting on the half-plane
//! (plus an orientation flag); their disk action is the conjugate by the Cayley
//! transform `C(z) = i(1 + z)/(1 - z)`, which is the only Cayley convention
//! used anywhere in this crate. Under it a boundary angle `theta` maps to
//! `-cot(theta/2)`, and a uniform angle maps to a standard Cauchy variable.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Points closer than this to the ideal boundary are rejected.
pub const BOUNDARY_GUARD: f64 = 1e-14;

/// `kernel_halfplane(C(z), C(theta)) / kernel_disk(z, theta)`; the modified
/// half-plane kernel is normalized so that this is exactly one.
pub const CAYLEY_KERNEL_CONSTANT: f64 = 1.0;

const I: C64 = C64::new(0.0, 1.0);

/// Interior point of the Poincare disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiskPoint(C64);

impl DiskPoint {
    pub const ORIGIN: DiskPoint = DiskPoint(C64::new(0.0, 0.0));

    pub fn new(z: C64) -> Result<Self> {
        if !(z.norm() < 1.0 - BOUNDARY_GUARD) {
            return Err(Error::OutsideDisk(format!("{z}")));
        }
        Ok(Self(z))
    }

    /// Point at hyperbolic distance `dist` from the origin in direction `angle`.
    pub fn from_polar(dist: f64, angle: f64) -> Result<Self> {
        Self::new(C64::from_polar((0.5 * dist).tanh(), angle))
    }

    pub fn z(self) -> C64 {
        self.0
    }

    /// Hyperbolic distance to the origin.
    pub fn radius(self) -> f64 {
        2.0 * self.0.norm().atanh()
    }
}

/// Interior point of the upper half-plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfPlanePoint(C64);

impl HalfPlanePoint {
    pub const I: HalfPlanePoint = HalfPlanePoint(I);

    pub fn new(w: C64) -> Result<Self> {
        if !(w.im > BOUNDARY_GUARD) || !w.re.is_finite() || !w.im.is_finite() {
            return Err(Error::OutsideHalfPlane(format!("{w}")));
        }
        Ok(Self(w))
    }

    pub fn w(self) -> C64 {
        self.0
    }
}

/// Point of the boundary circle, stored as an angle in `[-pi, pi)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct BoundaryAngle(f64);

impl BoundaryAngle {
    pub fn new(theta: f64) -> Self {
        let two_pi = 2.0 * PI;
        let mut t = theta - two_pi * ((theta + PI) / two_pi).floor();
        if t >= PI {
            t -= two_pi;
        }
        if t < -PI {
            t = -PI;
        }
        Self(t)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn unit(self) -> C64 {
        C64::from_polar(1.0, self.0)
    }

    /// Arc-length distance on the unit circle, in `[0, pi]`.
    pub fn circular_distance(self, other: BoundaryAngle) -> f64 {
        let d = (self.0 - other.0).abs();
        d.min(2.0 * PI - d)
    }
}

impl fmt::Display for BoundaryAngle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Boundary point of the half-plane model: a real number or `infinity`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ExtendedReal {
    Finite(f64),
    Infinity,
}

impl ExtendedReal {
    pub fn finite(self) -> Option<f64> {
        match self {
            ExtendedReal::Finite(x) => Some(x),
            ExtendedReal::Infinity => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, ExtendedReal::Infinity)
    }
}

/// Hyperbolic distance in the disk model.
pub fn dist_disk(p: DiskPoint, q: DiskPoint) -> f64 {
    let num = (p.0 - q.0).norm();
    let den = (C64::new(1.0, 0.0) - q.0.conj() * p.0).norm();
    2.0 * (num / den).min(1.0).atanh()
}

/// Hyperbolic distance in the half-plane model.
pub fn dist_halfplane(p: HalfPlanePoint, q: HalfPlanePoint) -> f64 {
    let chord = (p.0 - q.0).norm();
    2.0 * (chord / (2.0 * (p.0.im * q.0.im).sqrt())).asinh()
}

/// Poisson kernel of the disk, normalized against the uniform probability
/// measure on angles: `(1 - |z|^2) / |z - e^{i theta}|^2`.
pub fn kernel_disk(z: DiskPoint, theta: BoundaryAngle) -> f64 {
    let rho = z.0.norm();
    let tau = if rho > 0.0 { z.0.arg() } else { 0.0 };
    let s = (0.5 * (theta.0 - tau)).sin();
    let gap = 1.0 - rho;
    gap * (1.0 + rho) / (gap * gap + 4.0 * rho * s * s)
}

/// Largest value of [`kernel_disk`] over all boundary angles.
pub fn kernel_disk_max(z: DiskPoint) -> f64 {
    let rho = z.0.norm();
    (1.0 + rho) / (1.0 - rho)
}

/// Modified Poisson kernel of the half-plane: `(1 + x^2) Im w / |w - x|^2`,
/// and `Im w` at infinity. Equal to one at `w = i` for every `x`.
pub fn kernel_halfplane(w: HalfPlanePoint, x: ExtendedReal) -> f64 {
    match x {
        ExtendedReal::Infinity => w.0.im,
        ExtendedReal::Finite(x) => {
            let du = w.0.re - x;
            (1.0 + x * x) * w.0.im / (du * du + w.0.im * w.0.im)
        }
    }
}

/// Largest value of [`kernel_halfplane`] over the extended real line.
pub fn kernel_halfplane_max(w: HalfPlanePoint) -> f64 {
    let rho = (w.0 - I).norm() / (w.0 + I).norm();
    (1.0 + rho) / (1.0 - rho)
}

/// Cayley transform of an interior point.
pub fn cayley(z: DiskPoint) -> Result<HalfPlanePoint> {
    let one = C64::new(1.0, 0.0);
    HalfPlanePoint::new(I * (one + z.0) / (one - z.0))
}

/// Inverse Cayley transform `(w - i)/(w + i)`.
pub fn cayley_inverse(w: HalfPlanePoint) -> Result<DiskPoint> {
    DiskPoint::new((w.0 - I) / (w.0 + I))
}

/// Boundary Cayley map (stereographic projection): `theta -> -cot(theta/2)`.
pub fn stereographic(theta: BoundaryAngle) -> ExtendedReal {
    if theta.0 == 0.0 {
        return ExtendedReal::Infinity;
    }
    let half = 0.5 * theta.0;
    ExtendedReal::Finite(-half.cos() / half.sin())
}

/// Inverse of [`stereographic`].
pub fn stereographic_inverse(x: ExtendedReal) -> BoundaryAngle {
    match x {
        ExtendedReal::Infinity => BoundaryAngle(0.0),
        ExtendedReal::Finite(x) => BoundaryAngle::new(2.0 * (-1.0f64).atan2(x)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    Preserving,
    Reversing,
}

/// Isometry of the hyperbolic plane.
///
/// Half-plane action: `w -> m(w)` when orientation preserving and
/// `w -> m(-conj(w))` when reversing, where `m` is the fractional linear map of
/// the unit-determinant real matrix `[[a, b], [c, d]]`. In the disk the
/// reflection `w -> -conj(w)` becomes complex conjugation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mobius {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    orientation: Orientation,
}

impl Mobius {
    pub const IDENTITY: Mobius = Mobius {
        a: 1.0,
        b: 0.0,
        c: 0.0,
        d: 1.0,
        orientation: Orientation::Preserving,
    };

    /// Map `w -> (a w + b)/(c w + d)` if `ad - bc > 0`, and
    /// `w -> (a conj(w) + b)/(c conj(w) + d)` if `ad - bc < 0`.
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        let det = a * d - b * c;
        if det == 0.0 || !det.is_finite() {
            return Err(Error::DegenerateMobius);
        }
        if det > 0.0 {
            let s = det.sqrt();
            Ok(Self {
                a: a / s,
                b: b / s,
                c: c / s,
                d: d / s,
                orientation: Orientation::Preserving,
            })
        } else {
            let s = (-det).sqrt();
            Ok(Self {
                a: -a / s,
                b: b / s,
                c: -c / s,
                d: d / s,
                orientation: Orientation::Reversing,
            })
        }
    }

    pub fn translation(t: f64) -> Self {
        Self { b: t, ..Self::IDENTITY }
    }

    /// `w -> k w`, `k > 0`.
    pub fn dilation(k: f64) -> Result<Self> {
        if !(k > 0.0) {
            return Err(Error::DegenerateMobius);
        }
        Self::new(k, 0.0, 0.0, 1.0)
    }

    /// Elliptic element fixing `i` (rotation by `2 alpha` in the disk).
    pub fn rotation_about_i(alpha: f64) -> Self {
        let (s, c) = alpha.sin_cos();
        Self {
            a: c,
            b: s,
            c: -s,
            d: c,
            orientation: Orientation::Preserving,
        }
    }

    /// Reflection `w -> -conj(w)` (complex conjugation in the disk).
    pub fn reflection() -> Self {
        Self {
            orientation: Orientation::Reversing,
            ..Self::IDENTITY
        }
    }

    /// Disk automorphism `z -> e^{i psi} (z - p)/(1 - conj(p) z)`.
    pub fn disk_automorphism(psi: f64, p: C64) -> Result<Self> {
        let n2 = p.norm_sqr();
        if !(n2 < 1.0) {
            return Err(Error::OutsideDisk(format!("{p}")));
        }
        let s = (1.0 - n2).sqrt();
        let half = C64::from_polar(1.0, 0.5 * psi);
        let alpha = half / s;
        let beta = -p * half / s;
        Ok(Self {
            a: alpha.re + beta.re,
            b: alpha.im - beta.im,
            c: -alpha.im - beta.im,
            d: alpha.re - beta.re,
            orientation: Orientation::Preserving,
        })
    }

    /// Orientation-preserving map sending half-plane point `w` to `i`.
    pub fn halfplane_to_i(w: HalfPlanePoint) -> Self {
        let (x, y) = (w.0.re, w.0.im);
        let s = y.sqrt();
        Self {
            a: 1.0 / s,
            b: -x / s,
            c: 0.0,
            d: s,
            orientation: Orientation::Preserving,
        }
    }

    /// Orientation-preserving map sending disk point `z` to the origin.
    pub fn disk_to_origin(z: DiskPoint) -> Self {
        Self::disk_automorphism(0.0, z.0).expect("interior point")
    }

    pub fn matrix(&self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    /// `R m R` where `R` is the reflection.
    fn conjugated_by_reflection(&self) -> Self {
        Self {
            a: self.a,
            b: -self.b,
            c: -self.c,
            d: self.d,
            orientation: self.orientation,
        }
    }

    fn matrix_mul(&self, o: &Self) -> (f64, f64, f64, f64) {
        (
            self.a * o.a + self.b * o.c,
            self.a * o.b + self.b * o.d,
            self.c * o.a + self.d * o.c,
            self.c * o.b + self.d * o.d,
        )
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Mobius) -> Mobius {
        // (m1 R^e1)(m2 R^e2) = m1 (R^e1 m2 R^e1) R^(e1+e2)
        let inner = match self.orientation {
            Orientation::Preserving => *other,
            Orientation::Reversing => other.conjugated_by_reflection(),
        };
        let (a, b, c, d) = self.matrix_mul(&inner);
        let orientation = if self.orientation == other.orientation {
            Orientation::Preserving
        } else {
            Orientation::Reversing
        };
        Mobius {
            a,
            b,
            c,
            d,
            orientation,
        }
    }

    pub fn inverse(&self) -> Mobius {
        let inv = Mobius {
            a: self.d,
            b: -self.b,
            c: -self.c,
            d: self.a,
            orientation: Orientation::Preserving,
        };
        match self.orientation {
            Orientation::Preserving => inv,
            // (m R)^-1 = R m^-1 = (R m^-1 R) R
            Orientation::Reversing => Mobius {
                orientation: Orientation::Reversing,
                ..inv.conjugated_by_reflection()
            },
        }
    }

    /// SU(1,1) coefficients `(alpha, beta)` of the disk action
    /// `z -> (alpha z + beta)/(conj(beta) z + conj(alpha))`.
    pub fn disk_coefficients(&self) -> (C64, C64) {
        let alpha = C64::new(0.5 * (self.a + self.d), 0.5 * (self.b - self.c));
        let beta = C64::new(0.5 * (self.a - self.d), -0.5 * (self.b + self.c));
        (alpha, beta)
    }

    fn disk_map(&self, z: C64) -> C64 {
        let z = match self.orientation {
            Orientation::Preserving => z,
            Orientation::Reversing => z.conj(),
        };
        let (alpha, beta) = self.disk_coefficients();
        (alpha * z + beta) / (beta.conj() * z + alpha.conj())
    }

    pub fn apply_disk(&self, z: DiskPoint) -> Result<DiskPoint> {
        DiskPoint::new(self.disk_map(z.0))
    }

    pub fn apply_halfplane(&self, w: HalfPlanePoint) -> Result<HalfPlanePoint> {
        let w = match self.orientation {
            Orientation::Preserving => w.0,
            Orientation::Reversing => -w.0.conj(),
        };
        HalfPlanePoint::new((self.a * w + self.b) / (self.c * w + self.d))
    }

    pub fn apply_angle(&self, theta: BoundaryAngle) -> BoundaryAngle {
        let image = self.disk_map(theta.unit());
        BoundaryAngle::new(image.arg())
    }

    pub fn apply_line(&self, x: ExtendedReal) -> ExtendedReal {
        let x = match (self.orientation, x) {
            (Orientation::Reversing, ExtendedReal::Finite(v)) => ExtendedReal::Finite(-v),
            (_, x) => x,
        };
        match x {
            ExtendedReal::Infinity => {
                if self.c == 0.0 {
                    ExtendedReal::Infinity
                } else {
                    ExtendedReal::Finite(self.a / self.c)
                }
            }
            ExtendedReal::Finite(v) => {
                let den = self.c * v + self.d;
                if den == 0.0 {
                    ExtendedReal::Infinity
                } else {
                    ExtendedReal::Finite((self.a * v + self.b) / den)
                }
            }
        }
    }

    /// Conformal derivative `|phi'(theta)|` of the boundary circle map.
    pub fn boundary_derivative(&self, theta: BoundaryAngle) -> f64 {
        let u = match self.orientation {
            Orientation::Preserving => theta.unit(),
            Orientation::Reversing => theta.unit().conj(),
        };
        let (alpha, beta) = self.disk_coefficients();
        1.0 / (beta.conj() * u + alpha.conj()).norm_sqr()
    }
}

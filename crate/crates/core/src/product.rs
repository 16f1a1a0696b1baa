//! The product space `H2 x H2` with the L1 metric: distance, ball volume,
//! Poisson sampling of the volume measure and the isometry group.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::hyperbolic::{
    cayley, cayley_inverse, dist_disk, dist_halfplane, DiskPoint, HalfPlanePoint, Mobius,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Model {
    Disk,
    HalfPlane,
}

/// Point of `H2 x H2`; both factors always share a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ProductPoint {
    Disk(DiskPoint, DiskPoint),
    HalfPlane(HalfPlanePoint, HalfPlanePoint),
}

impl ProductPoint {
    /// The base point: `(0, 0)` in the disk model, `(i, i)` in the half-plane.
    pub fn origin(model: Model) -> Self {
        match model {
            Model::Disk => ProductPoint::Disk(DiskPoint::ORIGIN, DiskPoint::ORIGIN),
            Model::HalfPlane => ProductPoint::HalfPlane(HalfPlanePoint::I, HalfPlanePoint::I),
        }
    }

    pub fn model(&self) -> Model {
        match self {
            ProductPoint::Disk(..) => Model::Disk,
            ProductPoint::HalfPlane(..) => Model::HalfPlane,
        }
    }

    /// Same point in the other model, factorwise Cayley transform.
    pub fn to_model(self, model: Model) -> Result<Self> {
        match (self, model) {
            (p, m) if p.model() == m => Ok(p),
            (ProductPoint::Disk(a, b), _) => Ok(ProductPoint::HalfPlane(cayley(a)?, cayley(b)?)),
            (ProductPoint::HalfPlane(a, b), _) => {
                Ok(ProductPoint::Disk(cayley_inverse(a)?, cayley_inverse(b)?))
            }
        }
    }

    pub fn swapped(self) -> Self {
        match self {
            ProductPoint::Disk(a, b) => ProductPoint::Disk(b, a),
            ProductPoint::HalfPlane(a, b) => ProductPoint::HalfPlane(b, a),
        }
    }
}

/// Factor distances `(d(x1, y1), d(x2, y2))`.
pub fn factor_distances(x: &ProductPoint, y: &ProductPoint) -> Result<(f64, f64)> {
    match (x, y) {
        (ProductPoint::Disk(a1, a2), ProductPoint::Disk(b1, b2)) => {
            Ok((dist_disk(*a1, *b1), dist_disk(*a2, *b2)))
        }
        (ProductPoint::HalfPlane(a1, a2), ProductPoint::HalfPlane(b1, b2)) => {
            Ok((dist_halfplane(*a1, *b1), dist_halfplane(*a2, *b2)))
        }
        _ => Err(Error::ModelMismatch("dist_l1 needs both points in one model")),
    }
}

/// L1 product distance.
pub fn dist_l1(x: &ProductPoint, y: &ProductPoint) -> Result<f64> {
    factor_distances(x, y).map(|(a, b)| a + b)
}

/// Circumference of a hyperbolic circle of radius `rho`.
pub fn circle_length(rho: f64) -> f64 {
    2.0 * PI * rho.sinh()
}

/// Volume of the L1 ball of radius `r`: `2 pi^2 (r cosh r - sinh r)`.
pub fn ball_volume(r: f64) -> Result<f64> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(invalid("r", format!("radius must be finite and >= 0, got {r}")));
    }
    Ok(ball_volume_unchecked(r))
}

pub(crate) fn ball_volume_unchecked(r: f64) -> f64 {
    if r < 1.0 {
        // r cosh r - sinh r = sum_{k>=1} 2k r^(2k+1) / (2k+1)!
        let r2 = r * r;
        let mut term = r; // r^(2k+1)/(2k+1)! at k = 0
        let mut sum = 0.0;
        for k in 1..30 {
            term *= r2 / ((2 * k) as f64 * (2 * k + 1) as f64);
            sum += 2.0 * k as f64 * term;
            if term < 1e-18 * sum {
                break;
            }
        }
        2.0 * PI * PI * sum
    } else {
        2.0 * PI * PI * (r * r.cosh() - r.sinh())
    }
}

/// Independent route to the ball volume: composite 8-point Gauss-Legendre
/// quadrature of the convolution `int_0^r f(rho) f(r - rho) d rho` with
/// `f = circle_length`.
pub fn ball_volume_quadrature(r: f64, panels: usize) -> f64 {
    const NODES: [f64; 4] = [
        0.183_434_642_495_649_8,
        0.525_532_409_916_329,
        0.796_666_477_413_626_7,
        0.960_289_856_497_536_3,
    ];
    const WEIGHTS: [f64; 4] = [
        0.362_683_783_378_362,
        0.313_706_645_877_887_3,
        0.222_381_034_453_374_5,
        0.101_228_536_290_376_3,
    ];
    let h = r / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * h;
        for (x, w) in NODES.iter().zip(WEIGHTS) {
            for s in [-1.0, 1.0] {
                let rho = mid + s * x * 0.5 * h;
                total += w * circle_length(rho) * circle_length(r - rho);
            }
        }
    }
    total * 0.5 * h
}

/// Point of a volume-measure Poisson sample together with its exact radii.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallPoint {
    pub point: ProductPoint,
    /// L1 distance to the origin.
    pub radius: f64,
    /// Hyperbolic distance of the first factor to its origin.
    pub first_radius: f64,
}

/// Inverse of `r -> ball_volume(r)` at `target` on `[0, r_max]`: Newton
/// steps on the derivative `2 pi^2 r sinh r`, falling back to bisection of
/// the maintained bracket, to absolute tolerance 1e-12.
fn radius_for_volume(target: f64, r_max: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, r_max);
    let mut r = 0.5 * r_max;
    for _ in 0..200 {
        let f = ball_volume_unchecked(r) - target;
        if f < 0.0 {
            lo = r;
        } else {
            hi = r;
        }
        let slope = 2.0 * PI * PI * r * r.sinh();
        let mut next = r - f / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - r).abs() < 1e-12 || hi - lo < 1e-12 {
            return next;
        }
        r = next;
    }
    r
}

/// First-factor radius of a point at total radius `r`: density proportional
/// to `sinh(rho) sinh(r - rho)` on `[0, r]`, by rejection from a uniform
/// envelope of height `sinh(r/2)^2`.
pub fn sample_split<R: Rng + ?Sized>(r: f64, rng: &mut R) -> f64 {
    let top = (0.5 * r).sinh().powi(2);
    loop {
        let rho = r * rng.random::<f64>();
        if rng.random::<f64>() * top <= rho.sinh() * (r - rho).sinh() {
            return rho;
        }
    }
}

/// Poisson process of intensity `lambda * Vol` restricted to the L1 ball of
/// radius `r_max` about the origin (disk model), sorted by distance.
pub fn sample_ppp_ball<R: Rng + ?Sized>(lambda: f64, r_max: f64, rng: &mut R) -> Result<Vec<BallPoint>> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(invalid("lambda", format!("must be > 0, got {lambda}")));
    }
    if !(r_max > 0.0) || !r_max.is_finite() {
        return Err(invalid("r_max", format!("must be > 0, got {r_max}")));
    }
    let total = ball_volume_unchecked(r_max);
    let mean = lambda * total;
    let count = if mean > 0.0 {
        Poisson::new(mean)
            .map_err(|e| invalid("lambda", e.to_string()))?
            .sample(rng) as usize
    } else {
        0
    };
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let radius = radius_for_volume(total * rng.random::<f64>(), r_max);
        let first_radius = sample_split(radius, rng);
        let z1 = DiskPoint::from_polar(first_radius, rng.random_range(-PI..PI))?;
        let z2 = DiskPoint::from_polar(radius - first_radius, rng.random_range(-PI..PI))?;
        out.push(BallPoint {
            point: ProductPoint::Disk(z1, z2),
            radius,
            first_radius,
        });
    }
    out.sort_by(|a, b| a.radius.total_cmp(&b.radius));
    Ok(out)
}

/// Isometry `(z1, z2) -> (g1 z1, g2 z2)`, followed by a factor swap when
/// `swap` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductIsometry {
    pub g1: Mobius,
    pub g2: Mobius,
    pub swap: bool,
}

impl ProductIsometry {
    pub const IDENTITY: ProductIsometry = ProductIsometry {
        g1: Mobius::IDENTITY,
        g2: Mobius::IDENTITY,
        swap: false,
    };

    pub fn new(g1: Mobius, g2: Mobius, swap: bool) -> Self {
        Self { g1, g2, swap }
    }

    pub fn swap() -> Self {
        Self {
            swap: true,
            ..Self::IDENTITY
        }
    }

    /// An isometry sending `x` to the origin of its model.
    pub fn to_origin(x: &ProductPoint) -> Self {
        match x {
            ProductPoint::Disk(a, b) => Self::new(Mobius::disk_to_origin(*a), Mobius::disk_to_origin(*b), false),
            ProductPoint::HalfPlane(a, b) => {
                Self::new(Mobius::halfplane_to_i(*a), Mobius::halfplane_to_i(*b), false)
            }
        }
    }

    pub fn apply(&self, x: &ProductPoint) -> Result<ProductPoint> {
        let y = match x {
            ProductPoint::Disk(a, b) => ProductPoint::Disk(self.g1.apply_disk(*a)?, self.g2.apply_disk(*b)?),
            ProductPoint::HalfPlane(a, b) => {
                ProductPoint::HalfPlane(self.g1.apply_halfplane(*a)?, self.g2.apply_halfplane(*b)?)
            }
        };
        Ok(if self.swap { y.swapped() } else { y })
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &ProductIsometry) -> ProductIsometry {
        if other.swap {
            ProductIsometry::new(self.g2.compose(&other.g1), self.g1.compose(&other.g2), !self.swap)
        } else {
            ProductIsometry::new(self.g1.compose(&other.g1), self.g2.compose(&other.g2), self.swap)
        }
    }

    pub fn inverse(&self) -> ProductIsometry {
        if self.swap {
            ProductIsometry::new(self.g2.inverse(), self.g1.inverse(), true)
        } else {
            ProductIsometry::new(self.g1.inverse(), self.g2.inverse(), false)
        }
    }
}

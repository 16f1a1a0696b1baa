//! The corona `dH2 x dH2 x R+`: its Poisson process, separations, the
//! isometry action, cell membership and no-man's-land sets.
//!
//! Angles of the corona measure are uniform *probability* measures on each
//! boundary circle, so radii form a unit-rate Poisson process on `R+`.

use std::f64::consts::PI;
use std::io;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::hyperbolic::{
    kernel_disk, kernel_disk_max, kernel_halfplane, kernel_halfplane_max, stereographic,
    stereographic_inverse, BoundaryAngle, DiskPoint, ExtendedReal, C64,
};
use crate::product::{Model, ProductIsometry, ProductPoint};

/// Default relative tolerance of [`nml_predicate`].
pub const NML_TOLERANCE: f64 = 1e-9;

/// Boundary point in either model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BoundaryPoint {
    Circle(BoundaryAngle),
    Line(ExtendedReal),
}

impl BoundaryPoint {
    fn model(&self) -> Model {
        match self {
            BoundaryPoint::Circle(_) => Model::Disk,
            BoundaryPoint::Line(_) => Model::HalfPlane,
        }
    }

    fn to_model(self, model: Model) -> Self {
        match (self, model) {
            (BoundaryPoint::Circle(a), Model::HalfPlane) => BoundaryPoint::Line(stereographic(a)),
            (BoundaryPoint::Line(x), Model::Disk) => BoundaryPoint::Circle(stereographic_inverse(x)),
            (p, _) => p,
        }
    }

    pub fn angle(&self) -> Option<BoundaryAngle> {
        match self {
            BoundaryPoint::Circle(a) => Some(*a),
            BoundaryPoint::Line(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoronaPoint {
    pub theta: BoundaryPoint,
    pub phi: BoundaryPoint,
    pub r: f64,
}

fn check_radius(r: f64) -> Result<()> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(invalid("r", format!("corona radius must be finite and > 0, got {r}")));
    }
    Ok(())
}

impl CoronaPoint {
    pub fn disk(theta: f64, phi: f64, r: f64) -> Result<Self> {
        check_radius(r)?;
        Ok(Self {
            theta: BoundaryPoint::Circle(BoundaryAngle::new(theta)),
            phi: BoundaryPoint::Circle(BoundaryAngle::new(phi)),
            r,
        })
    }

    pub fn halfplane(theta: ExtendedReal, phi: ExtendedReal, r: f64) -> Result<Self> {
        check_radius(r)?;
        Ok(Self {
            theta: BoundaryPoint::Line(theta),
            phi: BoundaryPoint::Line(phi),
            r,
        })
    }

    pub fn model(&self) -> Result<Model> {
        let m = self.theta.model();
        if m != self.phi.model() {
            return Err(Error::ModelMismatch("corona point mixes boundary models"));
        }
        Ok(m)
    }

    /// Same corona point in the other model (the radius is model independent
    /// because the two kernels agree under the Cayley transform).
    pub fn to_model(self, model: Model) -> Self {
        Self {
            theta: self.theta.to_model(model),
            phi: self.phi.to_model(model),
            r: self.r,
        }
    }

    pub fn scaled(self, c: f64) -> Self {
        Self { r: self.r * c, ..self }
    }

    /// Disk-model angles `(theta, phi)`.
    pub fn angles(&self) -> (BoundaryAngle, BoundaryAngle) {
        let p = self.to_model(Model::Disk);
        (p.theta.angle().unwrap(), p.phi.angle().unwrap())
    }
}

/// Corona points with `r <= r_cutoff`, sorted by strictly increasing radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoronaSample {
    points: Vec<CoronaPoint>,
    r_cutoff: f64,
}

impl CoronaSample {
    pub fn new(mut points: Vec<CoronaPoint>, r_cutoff: f64) -> Result<Self> {
        check_radius(r_cutoff)?;
        points.sort_by(|a, b| a.r.total_cmp(&b.r));
        if points.windows(2).any(|w| w[0].r >= w[1].r) {
            return Err(invalid("points", "radii must be distinct"));
        }
        if points.last().is_some_and(|p| p.r > r_cutoff) {
            return Err(invalid("points", "radius above r_cutoff"));
        }
        Ok(Self { points, r_cutoff })
    }

    pub fn points(&self) -> &[CoronaPoint] {
        &self.points
    }

    pub fn r_cutoff(&self) -> f64 {
        self.r_cutoff
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The sub-sample with `r <= r_cutoff`; again an exact sample.
    pub fn truncated(&self, r_cutoff: f64) -> Result<Self> {
        check_radius(r_cutoff)?;
        let keep = self.points.partition_point(|p| p.r <= r_cutoff);
        Ok(Self {
            points: self.points[..keep].to_vec(),
            r_cutoff: r_cutoff.min(self.r_cutoff),
        })
    }

    pub fn to_model(&self, model: Model) -> Self {
        Self {
            points: self.points.iter().map(|p| p.to_model(model)).collect(),
            r_cutoff: self.r_cutoff,
        }
    }

    /// CSV with header `theta,phi,r` (disk angles in radians), ordered by `r`.
    pub fn write_csv<W: io::Write>(&self, writer: W) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["theta", "phi", "r"])?;
        for p in &self.points {
            let (t, f) = p.angles();
            w.write_record([t.value().to_string(), f.value().to_string(), p.r.to_string()])?;
        }
        w.flush()
    }

    pub fn read_csv<R: io::Read>(reader: R, r_cutoff: f64) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(reader);
        let headers = rd.headers().map_err(|e| invalid("csv", e.to_string()))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["theta", "phi", "r"] {
            return Err(invalid("csv", format!("expected header theta,phi,r, got {headers:?}")));
        }
        let mut points = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(|e| invalid("csv", e.to_string()))?;
            let num = |i: usize| -> Result<f64> {
                rec[i].parse().map_err(|_| invalid("csv", format!("bad number `{}`", &rec[i])))
            };
            points.push(CoronaPoint::disk(num(0)?, num(1)?, num(2)?)?);
        }
        Self::new(points, r_cutoff)
    }
}

/// Exact sample of the corona process below `r_cutoff` (disk model).
pub fn sample_corona<R: Rng + ?Sized>(r_cutoff: f64, rng: &mut R) -> Result<CoronaSample> {
    if !(r_cutoff > 0.0) || !r_cutoff.is_finite() {
        return Err(invalid("r_cutoff", format!("must be > 0, got {r_cutoff}")));
    }
    let poisson = Poisson::new(r_cutoff).map_err(|e| invalid("r_cutoff", e.to_string()))?;
    loop {
        let n = poisson.sample(rng) as usize;
        let mut points: Vec<CoronaPoint> = (0..n)
            .map(|_| CoronaPoint {
                theta: BoundaryPoint::Circle(BoundaryAngle::new(rng.random_range(-PI..PI))),
                phi: BoundaryPoint::Circle(BoundaryAngle::new(rng.random_range(-PI..PI))),
                r: r_cutoff * (1.0 - rng.random::<f64>()),
            })
            .collect();
        points.sort_by(|a, b| a.r.total_cmp(&b.r));
        // ties have probability zero; resample if one occurs
        if points.windows(2).all(|w| w[0].r < w[1].r) {
            return Ok(CoronaSample { points, r_cutoff });
        }
    }
}

/// `(K(z1, theta), K(z2, phi))` in the model of `z`.
pub fn kernel_pair(z: &ProductPoint, p: &CoronaPoint) -> Result<(f64, f64)> {
    match (z, p.theta, p.phi) {
        (ProductPoint::Disk(a, b), BoundaryPoint::Circle(t), BoundaryPoint::Circle(f)) => {
            Ok((kernel_disk(*a, t), kernel_disk(*b, f)))
        }
        (ProductPoint::HalfPlane(a, b), BoundaryPoint::Line(t), BoundaryPoint::Line(f)) => {
            Ok((kernel_halfplane(*a, t), kernel_halfplane(*b, f)))
        }
        _ => Err(Error::ModelMismatch("separation needs z and the corona point in one model")),
    }
}

/// Separation `r / (K(z1, theta) K(z2, phi))`.
pub fn separation(z: &ProductPoint, p: &CoronaPoint) -> Result<f64> {
    let (k1, k2) = kernel_pair(z, p)?;
    Ok(p.r / (k1 * k2))
}

/// Smallest possible value of `1 / (K(z1, .) K(z2, .))` over all angles.
pub fn min_inverse_kernel_product(z: &ProductPoint) -> f64 {
    match z {
        ProductPoint::Disk(a, b) => 1.0 / (kernel_disk_max(*a) * kernel_disk_max(*b)),
        ProductPoint::HalfPlane(a, b) => 1.0 / (kernel_halfplane_max(*a) * kernel_halfplane_max(*b)),
    }
}

/// Action of a product isometry on the corona (disk model):
/// `(g1 theta, g2 phi, r / (K(g1^-1 o, theta) K(g2^-1 o, phi)))`, followed by
/// exchanging the two angles when the isometry swaps factors.
pub fn corona_isometry_apply(g: &ProductIsometry, p: &CoronaPoint) -> Result<CoronaPoint> {
    let (BoundaryPoint::Circle(theta), BoundaryPoint::Circle(phi)) = (p.theta, p.phi) else {
        return Err(Error::ModelMismatch("corona isometry action is defined in the disk model"));
    };
    let o1 = g.g1.inverse().apply_disk(DiskPoint::ORIGIN)?;
    let o2 = g.g2.inverse().apply_disk(DiskPoint::ORIGIN)?;
    let r = p.r / (kernel_disk(o1, theta) * kernel_disk(o2, phi));
    let t = BoundaryPoint::Circle(g.g1.apply_angle(theta));
    let f = BoundaryPoint::Circle(g.g2.apply_angle(phi));
    Ok(if g.swap {
        CoronaPoint { theta: f, phi: t, r }
    } else {
        CoronaPoint { theta: t, phi: f, r }
    })
}

/// Result of [`cell_assign`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellAssignment {
    pub index: usize,
    pub separation: f64,
    /// Separation gap to the best other sampled point (infinite if none).
    pub margin: f64,
    /// True when no corona point beyond the sample's cutoff can beat the
    /// winner: `separation < r_cutoff * min 1/(K K)`.
    pub certified: bool,
}

/// Index of the corona point with the smallest separation from `z`.
pub fn cell_assign(z: &ProductPoint, sample: &CoronaSample) -> Result<CellAssignment> {
    if sample.is_empty() {
        return Err(Error::Empty("cell_assign needs a nonempty corona sample"));
    }
    let (mut best, mut best_sep, mut second) = (0usize, f64::INFINITY, f64::INFINITY);
    for (i, p) in sample.points.iter().enumerate() {
        let s = separation(z, p)?;
        if s < best_sep {
            second = best_sep;
            best_sep = s;
            best = i;
        } else if s < second {
            second = s;
        }
    }
    let bound = sample.r_cutoff * min_inverse_kernel_product(z);
    Ok(CellAssignment {
        index: best,
        separation: best_sep,
        margin: second - best_sep,
        certified: best_sep < bound,
    })
}

/// Whether `z` is at equal separation from `p` and `q` up to relative `tol`.
pub fn nml_predicate(z: &ProductPoint, p: &CoronaPoint, q: &CoronaPoint, tol: f64) -> Result<bool> {
    let (a, b) = (separation(z, p)?, separation(z, q)?);
    Ok((a - b).abs() <= tol * a.max(b))
}

fn finite_line(p: BoundaryPoint, what: &'static str) -> Result<f64> {
    match p {
        BoundaryPoint::Line(ExtendedReal::Finite(x)) => Ok(x),
        _ => Err(invalid(what, "expected a finite half-plane boundary coordinate")),
    }
}

/// Closed-form no-man's-land between `(inf, inf, r1)` and `q` (half-plane):
/// returns `lhs / rhs - 1` for
/// `|z1 - theta|^2 |z2 - phi|^2 = (r1/r)(1 + theta^2)(1 + phi^2)`.
pub fn nml_residual_inf_inf(z: &ProductPoint, r1: f64, q: &CoronaPoint) -> Result<f64> {
    let ProductPoint::HalfPlane(z1, z2) = z else {
        return Err(Error::ModelMismatch("closed-form no-man's-land uses the half-plane model"));
    };
    let (t, f) = (finite_line(q.theta, "theta")?, finite_line(q.phi, "phi")?);
    let lhs = (z1.w() - t).norm_sqr() * (z2.w() - f).norm_sqr();
    let rhs = r1 / q.r * (1.0 + t * t) * (1.0 + f * f);
    Ok(lhs / rhs - 1.0)
}

/// Closed-form no-man's-land between `(inf, y, r1)` and `q` (half-plane):
/// returns `lhs / rhs - 1` for
/// `|z1 - theta|^2 |z2 - phi|^2 / |z2 - y|^2 = (r1/r)(1 + theta^2)(1 + phi^2)/(1 + y^2)`.
pub fn nml_residual_inf_y(z: &ProductPoint, y: f64, r1: f64, q: &CoronaPoint) -> Result<f64> {
    let ProductPoint::HalfPlane(z1, z2) = z else {
        return Err(Error::ModelMismatch("closed-form no-man's-land uses the half-plane model"));
    };
    let (t, f) = (finite_line(q.theta, "theta")?, finite_line(q.phi, "phi")?);
    let lhs = (z1.w() - t).norm_sqr() * (z2.w() - f).norm_sqr() / (z2.w() - y).norm_sqr();
    let rhs = r1 / q.r * (1.0 + t * t) * (1.0 + f * f) / (1.0 + y * y);
    Ok(lhs / rhs - 1.0)
}

/// Search patch around the traveling point: a product of two hyperbolic
/// disks of radius `radius / 2`, i.e. contained in the L1 ball of `radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub radius: f64,
    pub n_radial: usize,
    pub n_angular: usize,
}

impl Default for Patch {
    fn default() -> Self {
        Self {
            radius: 6.0,
            n_radial: 12,
            n_angular: 24,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub z: ProductPoint,
    /// `log sep(z, p) - log sep(z, q)` at the witness.
    pub log_ratio: f64,
    /// L1 distance between the final bisection bracket endpoints.
    pub bracket: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeStep {
    pub t: f64,
    pub witness: Option<Witness>,
}

/// Traveling point `tanh(t/2) (1, 1)` of the disk model.
pub fn traveler(t: f64) -> Result<ProductPoint> {
    let x = DiskPoint::new(C64::new((0.5 * t).tanh(), 0.0))?;
    Ok(ProductPoint::Disk(x, x))
}

fn log_kernel_gap(z: DiskPoint, a: BoundaryAngle, b: BoundaryAngle) -> f64 {
    kernel_disk(z, b).ln() - kernel_disk(z, a).ln()
}

/// Searches, for each `t` in `t_grid`, the patch around `traveler(t)` for a
/// point at equal separation from `p` and `q`.
///
/// `log sep(z, p) - log sep(z, q)` splits into a constant plus one term per
/// factor, so its range over the patch grid is found factorwise; when it
/// changes sign, the zero is located by bisection on the segment (in patch
/// coordinates) between the grid minimizer and maximizer.
pub fn nml_unbounded_probe(
    p: &CoronaPoint,
    q: &CoronaPoint,
    t_grid: &[f64],
    patch: Patch,
) -> Result<Vec<ProbeStep>> {
    let (tp, fp) = p.angles();
    let (tq, fq) = q.angles();
    if p == q {
        return Err(invalid("q", "the two corona points must differ"));
    }
    if patch.n_radial == 0 || patch.n_angular == 0 || !(patch.radius > 0.0) {
        return Err(invalid("patch", "radius and resolution must be positive"));
    }
    let constant = (p.r / q.r).ln();
    let w_max = (0.25 * patch.radius).tanh();
    // patch coordinates: w in the disk of Euclidean radius w_max
    let mut offsets = vec![C64::new(0.0, 0.0)];
    for i in 1..=patch.n_radial {
        let s = w_max * i as f64 / patch.n_radial as f64;
        for j in 0..patch.n_angular {
            offsets.push(C64::from_polar(s, 2.0 * PI * j as f64 / patch.n_angular as f64));
        }
    }
    let mut steps = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let x = (0.5 * t).tanh();
        let place = |w: C64| DiskPoint::new((w + x) / (1.0 + x * w));
        // factor terms: -log K(z1, tp) + log K(z1, tq) and -log K(z2, fp) + log K(z2, fq)
        let g1 = |z: DiskPoint| log_kernel_gap(z, tp, tq);
        let g2 = |z: DiskPoint| log_kernel_gap(z, fp, fq);
        let (mut lo1, mut hi1) = ((f64::INFINITY, offsets[0]), (f64::NEG_INFINITY, offsets[0]));
        let (mut lo2, mut hi2) = (lo1, hi1);
        for &w in &offsets {
            let z = place(w)?;
            let (a, b) = (g1(z), g2(z));
            if a < lo1.0 {
                lo1 = (a, w);
            }
            if a > hi1.0 {
                hi1 = (a, w);
            }
            if b < lo2.0 {
                lo2 = (b, w);
            }
            if b > hi2.0 {
                hi2 = (b, w);
            }
        }
        let f = |w1: C64, w2: C64| -> Result<f64> { Ok(constant + g1(place(w1)?) + g2(place(w2)?)) };
        let (fmin, fmax) = (constant + lo1.0 + lo2.0, constant + hi1.0 + hi2.0);
        let witness = if fmin <= 0.0 && fmax >= 0.0 {
            let (start, end) = ((lo1.1, lo2.1), (hi1.1, hi2.1));
            let at = |s: f64| (start.0 + (end.0 - start.0) * s, start.1 + (end.1 - start.1) * s);
            let (mut a, mut b) = (0.0, 1.0);
            for _ in 0..80 {
                let m = 0.5 * (a + b);
                let (w1, w2) = at(m);
                if f(w1, w2)? <= 0.0 {
                    a = m;
                } else {
                    b = m;
                }
            }
            let (wa, wb) = (at(a), at(b));
            let za = ProductPoint::Disk(place(wa.0)?, place(wa.1)?);
            let zb = ProductPoint::Disk(place(wb.0)?, place(wb.1)?);
            let (wm1, wm2) = at(0.5 * (a + b));
            Some(Witness {
                z: ProductPoint::Disk(place(wm1)?, place(wm2)?),
                log_ratio: f(wm1, wm2)?,
                bracket: crate::product::dist_l1(&za, &zb)?,
            })
        } else {
            None
        };
        steps.push(ProbeStep { t, witness });
    }
    Ok(steps)
}

/// The conditioned first two corona points used with the traveling point:
/// `(0, Phi1, R1)` and `(Theta2, 0, R2)` with uniform `Phi1, Theta2`,
/// `R1 ~ Exp(1)` and `R2 - R1 ~ Exp(1)`.
pub fn conditioned_pair<R: Rng + ?Sized>(rng: &mut R) -> (CoronaPoint, CoronaPoint) {
    let e1: f64 = rng.sample(rand_distr::Exp1);
    let e2: f64 = rng.sample(rand_distr::Exp1);
    let phi1 = rng.random_range(-PI..PI);
    let theta2 = rng.random_range(-PI..PI);
    (
        CoronaPoint::disk(0.0, phi1, e1).expect("positive radius"),
        CoronaPoint::disk(theta2, 0.0, e1 + e2).expect("positive radius"),
    )
}

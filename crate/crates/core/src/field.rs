//! The separation landscape seen from a point traveling to the corner
//! `(1, 1)` of the bidisk: expansion of the separation, the rescaled
//! corona field, its limit, the tie-break constant and the end-of-cell probe.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corona::{cell_assign, separation, CoronaPoint, CoronaSample};
use crate::error::{invalid, Error, Result};
use crate::hyperbolic::{kernel_disk, BoundaryAngle, DiskPoint, C64};
use crate::product::ProductPoint;
use crate::rng::rng_stream;
use crate::stats::Estimate;

/// Rate of the limit field in `y` per unit length, with the corona angles
/// carrying probability measures.
pub const LIMIT_RATE: f64 = 1.0;

/// `1/2 + 2/pi^2`.
pub const TIEBREAK_CONSTANT: f64 = 0.5 + 2.0 / (PI * PI);

/// Traveling point `rho (1, 1)` with `rho = tanh(t/2)` and `epsilon = 1 - rho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TravelerState {
    pub t: f64,
    pub epsilon: f64,
    pub position: ProductPoint,
}

impl TravelerState {
    pub fn from_time(t: f64) -> Result<Self> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(invalid("t", format!("must be finite and >= 0, got {t}")));
        }
        Self::build(t, (0.5 * t).tanh())
    }

    pub fn from_epsilon(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(invalid("epsilon", format!("must lie in (0, 1], got {epsilon}")));
        }
        let rho = 1.0 - epsilon;
        Self::build(2.0 * rho.atanh(), rho)
    }

    fn build(t: f64, rho: f64) -> Result<Self> {
        let x = DiskPoint::new(C64::new(rho, 0.0))?;
        Ok(Self {
            t,
            // recomputed from the stored rho so that expansion and kernels agree
            epsilon: 1.0 - rho,
            position: ProductPoint::Disk(x, x),
        })
    }

    pub fn rho(&self) -> f64 {
        1.0 - self.epsilon
    }
}

/// `(f1, f2, f3)` with `f1 = (e/(2-e))^2`, `f2 = (1-e)/(2-e)^2` and
/// `f3 = (1-e)^2 / (e^2 (2-e)^2)`.
pub fn expansion_coefficients(epsilon: f64) -> Result<(f64, f64, f64)> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(invalid("epsilon", format!("expansion needs epsilon in (0, 1), got {epsilon}")));
    }
    let d = 2.0 - epsilon;
    Ok((
        (epsilon / d).powi(2),
        (1.0 - epsilon) / (d * d),
        ((1.0 - epsilon) / (epsilon * d)).powi(2),
    ))
}

/// `1 - cos x` without cancellation.
fn versine(x: f64) -> f64 {
    2.0 * (0.5 * x).sin().powi(2)
}

/// `r [f1 + 2 f2 (2 - cos theta - cos phi) + 4 f3 (1 - cos theta)(1 - cos phi)]`.
pub fn separation_expansion(state: &TravelerState, theta: BoundaryAngle, phi: BoundaryAngle, r: f64) -> Result<f64> {
    let (f1, f2, f3) = expansion_coefficients(state.epsilon)?;
    let (a, b) = (versine(theta.value()), versine(phi.value()));
    Ok(r * (f1 + 2.0 * f2 * (a + b) + 4.0 * f3 * a * b))
}

/// An atom of the separation field: rescaled angles and separation value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationSample {
    pub theta_hat: f64,
    pub phi_hat: f64,
    pub y: f64,
}

/// Corona point `(eps theta_hat, eps phi_hat, r_hat / eps^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RescaledCoronaPoint {
    pub theta_hat: f64,
    pub phi_hat: f64,
    pub r_hat: f64,
}

impl RescaledCoronaPoint {
    pub fn from_corona(p: &CoronaPoint, epsilon: f64) -> Self {
        let (t, f) = p.angles();
        Self {
            theta_hat: t.value() / epsilon,
            phi_hat: f.value() / epsilon,
            r_hat: p.r * epsilon * epsilon,
        }
    }

    pub fn to_corona(&self, epsilon: f64) -> Result<CoronaPoint> {
        CoronaPoint::disk(self.theta_hat * epsilon, self.phi_hat * epsilon, self.r_hat / (epsilon * epsilon))
    }
}

/// Piecewise-constant bound `h(theta) >= K(rho, theta)` on bins of `|theta|`.
struct Envelope {
    edges: Vec<f64>,
    heights: Vec<f64>,
    cumulative: Vec<f64>,
}

impl Envelope {
    fn new(point: DiskPoint, epsilon: f64) -> Self {
        // linear bins across the peak (width ~ epsilon), geometric beyond
        let mut edges: Vec<f64> = (0..=20).map(|k| epsilon * k as f64 / 20.0).filter(|&e| e < PI).collect();
        let mut e = *edges.last().unwrap();
        while e * 1.1 < PI {
            e *= 1.1;
            edges.push(e);
        }
        edges.push(PI);
        // K decreases in |theta|, so each bin is bounded by its left edge
        let heights: Vec<f64> = edges[..edges.len() - 1]
            .iter()
            .map(|&a| kernel_disk(point, BoundaryAngle::new(a)) * (1.0 + 1e-12))
            .collect();
        let mut cumulative = Vec::with_capacity(heights.len());
        let mut acc = 0.0;
        for (k, h) in heights.iter().enumerate() {
            // both signs of theta, measure dtheta / 2 pi
            acc += h * (edges[k + 1] - edges[k]) / PI;
            cumulative.push(acc);
        }
        Self { edges, heights, cumulative }
    }

    /// `int h dtheta / 2 pi`.
    fn mass(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let u = rng.random::<f64>() * self.mass();
        let k = self.cumulative.partition_point(|&c| c <= u).min(self.heights.len() - 1);
        let a = rng.random_range(self.edges[k]..self.edges[k + 1]);
        let theta = if rng.random::<bool>() { a } else { -a };
        (theta, self.heights[k])
    }
}

fn check_field_args(state: &TravelerState, y_max: f64) -> Result<()> {
    if !(y_max > 0.0) || !y_max.is_finite() {
        return Err(invalid("y_max", format!("must be > 0, got {y_max}")));
    }
    if !(state.epsilon > 0.0 && state.epsilon < 1.0) {
        return Err(invalid("epsilon", "field sampling needs epsilon in (0, 1)"));
    }
    Ok(())
}

fn field_atom(state: &TravelerState, p: &CoronaPoint, y_max: f64) -> Result<Option<SeparationSample>> {
    let y = separation(&state.position, p)?;
    if y > y_max {
        return Ok(None);
    }
    let (t, f) = p.angles();
    Ok(Some(SeparationSample {
        theta_hat: t.value() / state.epsilon,
        phi_hat: f.value() / state.epsilon,
        y,
    }))
}

/// All atoms with separation `<= y_max`, sorted by `y`.
///
/// Corona points are drawn exactly in the region
/// `{r <= y_max h(theta) h(phi)}`, which contains `{sep <= y_max}` because
/// `sep = r / (K K)` and `h >= K`; their separations are then computed from
/// the kernels and atoms above `y_max` are dropped.
pub fn rescaled_field_sample<R: Rng + ?Sized>(state: &TravelerState, y_max: f64, rng: &mut R) -> Result<Vec<SeparationSample>> {
    check_field_args(state, y_max)?;
    let ProductPoint::Disk(x, _) = state.position else {
        unreachable!()
    };
    let env = Envelope::new(x, state.epsilon);
    let mean = y_max * env.mass() * env.mass();
    let n = Poisson::new(mean).map_err(|e| invalid("y_max", e.to_string()))?.sample(rng) as usize;
    let mut out = Vec::new();
    for _ in 0..n {
        let (theta, h1) = env.sample(rng);
        let (phi, h2) = env.sample(rng);
        let r = y_max * h1 * h2 * (1.0 - rng.random::<f64>());
        if let Some(a) = field_atom(state, &CoronaPoint::disk(theta, phi, r)?, y_max)? {
            out.push(a);
        }
    }
    out.sort_by(|a, b| a.y.total_cmp(&b.y));
    Ok(out)
}

/// Same law by brute force: every corona point with `r <= y_max / f1` (the
/// bracket is at least `f1`). Only practical for moderate epsilon.
pub fn rescaled_field_sample_naive<R: Rng + ?Sized>(state: &TravelerState, y_max: f64, rng: &mut R) -> Result<Vec<SeparationSample>> {
    check_field_args(state, y_max)?;
    let (f1, _, _) = expansion_coefficients(state.epsilon)?;
    let r_cut = y_max / f1;
    if r_cut > 1e8 {
        return Err(invalid("epsilon", format!("brute-force cutoff {r_cut:.3e} too large")));
    }
    let sample = crate::corona::sample_corona(r_cut, rng)?;
    let mut out = Vec::new();
    for p in sample.points() {
        if let Some(a) = field_atom(state, p, y_max)? {
            out.push(a);
        }
    }
    out.sort_by(|a, b| a.y.total_cmp(&b.y));
    Ok(out)
}

fn cauchy<R: Rng + ?Sized>(location: f64, scale: f64, rng: &mut R) -> f64 {
    location + scale * (PI * (rng.random::<f64>() - 0.5)).tan()
}

/// Limit field with offsets `eta, xi`: `y` a rate-`LIMIT_RATE` process on
/// `[0, y_max]`, `theta_hat ~ Cauchy(-Im eta, Re eta)` and
/// `phi_hat ~ Cauchy(-Im xi, Re xi)`, all independent.
pub fn limit_field_sample<R: Rng + ?Sized>(eta: C64, xi: C64, y_max: f64, rng: &mut R) -> Result<Vec<SeparationSample>> {
    if !(eta.re > 0.0) || !(xi.re > 0.0) {
        return Err(invalid("eta", format!("offsets need positive real parts, got {eta} and {xi}")));
    }
    if !(y_max > 0.0) || !y_max.is_finite() {
        return Err(invalid("y_max", format!("must be > 0, got {y_max}")));
    }
    let n = Poisson::new(LIMIT_RATE * y_max)
        .map_err(|e| invalid("y_max", e.to_string()))?
        .sample(rng) as usize;
    let mut out: Vec<SeparationSample> = (0..n)
        .map(|_| SeparationSample {
            theta_hat: cauchy(-eta.im, eta.re, rng),
            phi_hat: cauchy(-xi.im, xi.re, rng),
            y: y_max * rng.random::<f64>(),
        })
        .collect();
    out.sort_by(|a, b| a.y.total_cmp(&b.y));
    Ok(out)
}

/// Rate of the field in `y` measured over independent replicas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub epsilon: f64,
    pub y_max: f64,
    pub replicas: u64,
    /// Atoms per unit `y`.
    pub count_rate: Estimate,
    /// Rate of the exponential law of the smallest atom (censored at `y_max`).
    pub void_rate: Estimate,
}

pub fn field_rate(epsilon: f64, y_max: f64, replicas: u64, seed: u64) -> Result<RateReport> {
    if replicas < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: replicas as usize });
    }
    let state = TravelerState::from_epsilon(epsilon)?;
    let per: Vec<(f64, Option<f64>)> = (0..replicas)
        .into_par_iter()
        .map(|k| {
            let atoms = rescaled_field_sample(&state, y_max, &mut rng_stream(seed, k))?;
            Ok((atoms.len() as f64 / y_max, atoms.first().map(|a| a.y)))
        })
        .collect::<Result<_>>()?;
    let counts: Vec<f64> = per.iter().map(|p| p.0).collect();
    // censored exponential: rate = events / exposure, se = rate / sqrt(events)
    let events = per.iter().filter(|p| p.1.is_some()).count() as f64;
    let exposure: f64 = per.iter().map(|p| p.1.unwrap_or(y_max)).sum();
    let rate = events / exposure;
    Ok(RateReport {
        epsilon,
        y_max,
        replicas,
        count_rate: Estimate::from_samples(&counts),
        void_rate: Estimate {
            mean: rate,
            std_err: rate / events.sqrt(),
            n: replicas,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TiebreakMethod {
    /// `P(U B1 / B2 <= 1)` with `B = (1 - cos V)/2`, `V` uniform.
    DirectZ,
    /// `P(R1 (1 - cos Phi1) <= R2 (1 - cos Theta2))` for the two smallest
    /// corona radii.
    CoronaLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiebreakEstimate {
    pub method: TiebreakMethod,
    pub estimate: Estimate,
    pub interval: (f64, f64),
    pub target: f64,
}

const TIEBREAK_CHUNK: u64 = 1 << 18;

fn tiebreak_trial<R: Rng + ?Sized>(method: TiebreakMethod, rng: &mut R) -> bool {
    match method {
        TiebreakMethod::DirectZ => {
            let u = rng.random::<f64>();
            let b1 = 0.5 * (1.0 - rng.random_range(-PI..PI).cos());
            let b2 = 0.5 * (1.0 - rng.random_range(-PI..PI).cos());
            u * b1 <= b2
        }
        TiebreakMethod::CoronaLimit => {
            let e1: f64 = rng.sample(Exp1);
            let e2: f64 = rng.sample(Exp1);
            let phi1 = rng.random_range(-PI..PI);
            let theta2 = rng.random_range(-PI..PI);
            e1 * versine(phi1) <= (e1 + e2) * versine(theta2)
        }
    }
}

/// Monte Carlo estimate of the tie-break constant from `n` trials, run in
/// fixed chunks with one stream each.
pub fn tiebreak_estimate(method: TiebreakMethod, n: u64, seed: u64) -> Result<TiebreakEstimate> {
    if n < 10_000 {
        return Err(Error::TooFewSamples { needed: 10_000, got: n as usize });
    }
    let chunks = n.div_ceil(TIEBREAK_CHUNK);
    let hits: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng_stream(seed, c);
            let len = TIEBREAK_CHUNK.min(n - c * TIEBREAK_CHUNK);
            (0..len).filter(|_| tiebreak_trial(method, &mut rng)).count() as u64
        })
        .sum();
    let estimate = Estimate::proportion(hits, n);
    Ok(TiebreakEstimate {
        method,
        estimate,
        interval: estimate.interval(1.96),
        target: TIEBREAK_CONSTANT,
    })
}

/// Ray `tanh(t/2) (e^{i tau1}, e^{i tau2})`.
pub fn ray_point(tau1: BoundaryAngle, tau2: BoundaryAngle, t: f64) -> Result<ProductPoint> {
    let rho = (0.5 * t).tanh();
    Ok(ProductPoint::Disk(
        DiskPoint::new(tau1.unit() * rho)?,
        DiskPoint::new(tau2.unit() * rho)?,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayStep {
    pub t: f64,
    pub index: usize,
    pub certified: bool,
}

/// Certified cell assignment along the ray toward `(tau1, tau2)`.
pub fn ray_assignments(sample: &CoronaSample, tau1: BoundaryAngle, tau2: BoundaryAngle, t_grid: &[f64]) -> Result<Vec<RayStep>> {
    t_grid
        .iter()
        .map(|&t| {
            let a = cell_assign(&ray_point(tau1, tau2, t)?, sample)?;
            Ok(RayStep {
                t,
                index: a.index,
                certified: a.certified,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndProbeVerdict {
    pub tau1: f64,
    pub tau2: f64,
    /// First `t` with a certified winner other than the zero cell's point.
    pub exit_t: Option<f64>,
    /// Largest `t` at which the assignment was still certified.
    pub last_certified_t: Option<f64>,
}

impl EndProbeVerdict {
    pub fn exits(&self) -> bool {
        self.exit_t.is_some()
    }
}

/// Follows the ray toward `(tau1, tau2)` over the increasing `t_grid` and
/// reports whether it leaves the cell of the smallest-radius point.
/// Directions within `delta` (circular distance) of that point's end are
/// rejected.
pub fn end_of_cell_probe(
    sample: &CoronaSample,
    tau1: BoundaryAngle,
    tau2: BoundaryAngle,
    t_grid: &[f64],
    delta: f64,
) -> Result<EndProbeVerdict> {
    if sample.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: sample.len() });
    }
    if t_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Unsorted("t_grid must be increasing"));
    }
    let (t1, f1) = sample.points()[0].angles();
    if tau1.circular_distance(t1) <= delta || tau2.circular_distance(f1) <= delta {
        return Err(invalid("tau", format!("direction within {delta} of the end of the first cell")));
    }
    let mut last_certified_t = None;
    for &t in t_grid {
        let a = cell_assign(&ray_point(tau1, tau2, t)?, sample)?;
        if !a.certified {
            // along a ray from the origin every separation times e^{2t} is
            // nondecreasing while the certificate bound times e^{2t} is
            // constant, so no later step can be certified
            break;
        }
        last_certified_t = Some(t);
        if a.index != 0 {
            return Ok(EndProbeVerdict {
                tau1: tau1.value(),
                tau2: tau2.value(),
                exit_t: Some(t),
                last_certified_t,
            });
        }
    }
    Ok(EndProbeVerdict {
        tau1: tau1.value(),
        tau2: tau2.value(),
        exit_t: None,
        last_certified_t,
    })
}

/// Uniform direction whose circular distances to the end angles both
/// exceed `delta`.
pub fn off_end_direction<R: Rng + ?Sized>(end: (BoundaryAngle, BoundaryAngle), delta: f64, rng: &mut R) -> (BoundaryAngle, BoundaryAngle) {
    let pick = |base: BoundaryAngle, rng: &mut R| {
        BoundaryAngle::new(base.value() + delta + rng.random::<f64>() * (2.0 * PI - 2.0 * delta))
    };
    (pick(end.0, rng), pick(end.1, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corona::sample_corona;
    use crate::hyperbolic::Mobius;
    use crate::stats::{fit_line, ks_statistic, ks_two_sample};
    use proptest::prelude::*;
    use rand::Rng;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs())
    }

    fn cauchy_cdf(x: f64) -> f64 {
        0.5 + x.atan() / PI
    }

    #[test]
    fn traveler_state() {
        let s = TravelerState::from_time(2.0).unwrap();
        assert!((s.epsilon - (1.0 - 1f64.tanh())).abs() < 1e-15);
        let e = TravelerState::from_epsilon(1e-3).unwrap();
        assert!((e.epsilon - 1e-3).abs() < 1e-15);
        assert!(TravelerState::from_time(-1.0).is_err());
        assert!(TravelerState::from_epsilon(0.0).is_err());
        assert!(expansion_coefficients(1.0).is_err());
    }

    #[test]
    fn expansion_examples() {
        let s = TravelerState::from_epsilon(0.5).unwrap();
        let z = BoundaryAngle::new(0.0);
        assert!((separation_expansion(&s, z, z, 1.0).unwrap() - 1.0 / 9.0).abs() < 1e-15);
        let (f1, f2, _) = expansion_coefficients(0.5).unwrap();
        let phi = BoundaryAngle::new(1.3);
        let want = 2.0 * (f1 + 2.0 * f2 * (1.0 - 1.3f64.cos()));
        assert!(rel(separation_expansion(&s, z, phi, 2.0).unwrap(), want) < 1e-14);
    }

    fn random_case(rng: &mut impl Rng) -> (TravelerState, BoundaryAngle, BoundaryAngle, f64) {
        let eps = 10f64.powf(rng.random_range(-6.0..-0.01));
        let s = TravelerState::from_epsilon(eps).unwrap();
        // angles on the scale of epsilon half the time
        fn ang(rng: &mut impl Rng, eps: f64) -> f64 {
            if rng.random::<bool>() {
                rng.random_range(-PI..PI)
            } else {
                eps * rng.random_range(-20.0..20.0)
            }
        }
        let (t, f) = (ang(rng, eps), ang(rng, eps));
        (s, BoundaryAngle::new(t), BoundaryAngle::new(f), rng.random_range(0.01..10.0))
    }

    #[test]
    fn expansion_matches_kernels() {
        let mut rng = rng_stream(70, 0);
        let mut worst = 0.0f64;
        for _ in 0..100_000 {
            let (s, t, f, r) = random_case(&mut rng);
            let a = separation_expansion(&s, t, f, r).unwrap();
            let b = separation(&s.position, &CoronaPoint::disk(t.value(), f.value(), r).unwrap()).unwrap();
            worst = worst.max(rel(a, b));
        }
        assert!(worst < 1e-10, "{worst}");
    }

    #[test]
    fn alternative_cross_coefficient_disagrees() {
        // cross coefficient (1-e)/(2 e^2 (2-e)^2) in place of (1-e)^2/(e^2 (2-e)^2)
        let mut rng = rng_stream(71, 0);
        let mut failures = 0;
        for _ in 0..1000 {
            let (s, t, f, r) = random_case(&mut rng);
            let e = s.epsilon;
            let (f1, f2, _) = expansion_coefficients(e).unwrap();
            let alt = (1.0 - e) / (2.0 * e * e * (2.0 - e).powi(2));
            let (a, b) = (versine(t.value()), versine(f.value()));
            let v = r * (f1 + 2.0 * f2 * (a + b) + 4.0 * alt * a * b);
            let k = separation(&s.position, &CoronaPoint::disk(t.value(), f.value(), r).unwrap()).unwrap();
            if rel(v, k) > 1e-10 {
                failures += 1;
            }
        }
        assert!(failures > 500, "{failures}");
    }

    proptest! {
        #[test]
        fn bracket_positive(eps in 1e-8..0.999f64, t in -PI..PI, f in -PI..PI) {
            let s = TravelerState::from_epsilon(eps).unwrap();
            let v = separation_expansion(&s, BoundaryAngle::new(t), BoundaryAngle::new(f), 1.0).unwrap();
            prop_assert!(v > 0.0);
        }

        #[test]
        fn expansion_increasing_in_r(eps in 1e-6..0.9f64, t in -PI..PI, f in -PI..PI, r in 0.01..10.0f64) {
            let s = TravelerState::from_epsilon(eps).unwrap();
            let (t, f) = (BoundaryAngle::new(t), BoundaryAngle::new(f));
            prop_assert!(separation_expansion(&s, t, f, r * 1.001).unwrap() > separation_expansion(&s, t, f, r).unwrap());
        }
    }

    #[test]
    fn envelope_dominates_kernel() {
        for eps in [0.5, 1e-2, 1e-4, 1e-6] {
            let s = TravelerState::from_epsilon(eps).unwrap();
            let ProductPoint::Disk(x, _) = s.position else { unreachable!() };
            let env = Envelope::new(x, eps);
            for k in 0..env.heights.len() {
                for j in 0..=50 {
                    let a = env.edges[k] + (env.edges[k + 1] - env.edges[k]) * j as f64 / 50.0;
                    assert!(kernel_disk(x, BoundaryAngle::new(a)) <= env.heights[k]);
                }
            }
            // efficiency stays reasonable
            assert!(env.mass() < 1.3, "{}", env.mass());
        }
    }

    fn pooled<F>(reps: u64, seed: u64, f: F) -> Vec<SeparationSample>
    where
        F: Fn(&mut crate::rng::Stream) -> Vec<SeparationSample> + Sync,
    {
        (0..reps)
            .into_par_iter()
            .flat_map_iter(|k| f(&mut rng_stream(seed, k)))
            .collect()
    }

    fn sorted(xs: impl Iterator<Item = f64>) -> Vec<f64> {
        let mut v: Vec<f64> = xs.collect();
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn envelope_and_naive_samplers_agree() {
        let s = TravelerState::from_epsilon(1e-2).unwrap();
        let a = pooled(300, 72, |r| rescaled_field_sample(&s, 5.0, r).unwrap());
        let b = pooled(300, 73, |r| rescaled_field_sample_naive(&s, 5.0, r).unwrap());
        for pick in 0..3 {
            let get = |v: &Vec<SeparationSample>| {
                sorted(v.iter().map(|x| match pick {
                    0 => x.theta_hat,
                    1 => x.phi_hat,
                    _ => x.y,
                }))
            };
            let ks = ks_two_sample(&get(&a), &get(&b)).unwrap();
            assert!(ks.passes(0.01), "{pick}: {ks:?}");
        }
        let (na, nb) = (a.len() as f64, b.len() as f64);
        assert!((na - nb).abs() < 3.0 * (na + nb).sqrt());
    }

    #[test]
    fn field_angles_follow_harmonic_measure() {
        // push the uniform law on the circle forward by the automorphism
        // taking 0 to the traveler: that is the exact angle law of atoms
        let eps = 1e-3;
        let s = TravelerState::from_epsilon(eps).unwrap();
        let g = Mobius::disk_automorphism(0.0, C64::new(s.rho(), 0.0)).unwrap().inverse();
        let mut rng = rng_stream(74, 0);
        let direct = sorted((0..20_000).map(|_| g.apply_angle(BoundaryAngle::new(rng.random_range(-PI..PI))).value() / eps));
        let atoms = pooled(2000, 75, |r| rescaled_field_sample(&s, 10.0, r).unwrap());
        let field = sorted(atoms.iter().map(|a| a.theta_hat));
        assert!(ks_two_sample(&direct, &field).unwrap().passes(0.01));
        assert!(ks_statistic(&field, cauchy_cdf).unwrap().passes(0.01));
    }

    #[test]
    fn field_counts_are_linear_in_y() {
        let s = TravelerState::from_epsilon(1e-3).unwrap();
        let reps = 2000;
        let atoms = pooled(reps, 76, |r| rescaled_field_sample(&s, 10.0, r).unwrap());
        let ys: Vec<f64> = (1..=10).map(|k| k as f64).collect();
        let counts: Vec<f64> = ys.iter().map(|&y| atoms.iter().filter(|a| a.y <= y).count() as f64 / reps as f64).collect();
        let fit = fit_line(&ys, &counts, None).unwrap();
        assert!(fit.r_squared > 0.999, "{fit:?}");
        assert!((fit.slope - LIMIT_RATE).abs() < 0.05, "{fit:?}");
    }

    #[test]
    fn field_rate_is_stable() {
        let rates: Vec<RateReport> = [1e-2, 1e-3, 1e-4].iter().map(|&e| field_rate(e, 5.0, 4000, 77).unwrap()).collect();
        for r in &rates {
            assert!((r.count_rate.mean - 1.0).abs() < 4.0 * r.count_rate.std_err, "{r:?}");
            assert!((r.void_rate.mean - 1.0).abs() < 4.0 * r.void_rate.std_err, "{r:?}");
        }
        let c: Vec<f64> = rates.iter().map(|r| r.void_rate.mean).collect();
        let spread = (c.iter().cloned().fold(f64::MIN, f64::max) - c.iter().cloned().fold(f64::MAX, f64::min)) / c[0];
        assert!(spread < 0.05, "{c:?}");
    }

    #[test]
    fn limit_field_examples() {
        let mut rng = rng_stream(78, 0);
        assert!(limit_field_sample(C64::new(0.0, 1.0), C64::new(1.0, 0.0), 1.0, &mut rng).is_err());
        assert!(limit_field_sample(C64::new(1.0, 0.0), C64::new(-1.0, 0.0), 1.0, &mut rng).is_err());
        let atoms = limit_field_sample(C64::new(2.0, 0.0), C64::new(1.0, 0.5), 50_000.0, &mut rng).unwrap();
        let inside = atoms.iter().filter(|a| a.theta_hat.abs() <= 2.0).count() as u64;
        let p = Estimate::proportion(inside, atoms.len() as u64);
        assert!((p.mean - 0.5).abs() < 3.0 * p.std_err);
        let phis = sorted(atoms.iter().map(|a| a.phi_hat));
        assert!(ks_statistic(&phis, |x| cauchy_cdf(x + 0.5)).unwrap().passes(0.01));
        // stationarity in y
        let lo = atoms.iter().filter(|a| a.y <= 25_000.0).count() as f64;
        let hi = atoms.len() as f64 - lo;
        assert!((lo - hi).abs() < 3.0 * (lo + hi).sqrt());
    }

    #[test]
    fn tiebreak_examples() {
        assert!(tiebreak_estimate(TiebreakMethod::DirectZ, 9_999, 1).is_err());
        assert!((TIEBREAK_CONSTANT - 0.70264).abs() < 1e-5);
        let a = tiebreak_estimate(TiebreakMethod::DirectZ, 1_000_000, 79).unwrap();
        let b = tiebreak_estimate(TiebreakMethod::CoronaLimit, 1_000_000, 80).unwrap();
        assert!(a.estimate.joint_z(&b.estimate) < 3.0);
        assert!((a.estimate.mean - TIEBREAK_CONSTANT).abs() < 4.0 * a.estimate.std_err);
        assert_eq!(a, tiebreak_estimate(TiebreakMethod::DirectZ, 1_000_000, 79).unwrap());
        // without U the ratio of two exchangeable variables is <= 1 half the time
        let mut rng = rng_stream(81, 0);
        let n = 200_000u64;
        let hits = (0..n)
            .filter(|_| versine(rng.random_range(-PI..PI)) <= versine(rng.random_range(-PI..PI)))
            .count() as u64;
        let p = Estimate::proportion(hits, n);
        assert!((p.mean - 0.5).abs() < 3.0 * p.std_err);
    }

    #[test]
    fn ray_to_own_corner_never_leaves() {
        for rep in 0..20 {
            let s = sample_corona(200.0, &mut rng_stream(82, rep)).unwrap();
            let (t, f) = s.points()[0].angles();
            let grid: Vec<f64> = (0..=60).map(|k| k as f64 * 0.25).collect();
            for step in ray_assignments(&s, t, f, &grid).unwrap() {
                assert_eq!(step.index, 0);
            }
            assert!(end_of_cell_probe(&s, t, f, &grid, 0.1).is_err());
        }
    }

    #[test]
    fn certified_exits_survive_larger_cutoff() {
        let grid: Vec<f64> = (0..=60).map(|k| k as f64 * 0.1).collect();
        for rep in 0..30 {
            let mut rng = rng_stream(83, rep);
            let big = sample_corona(400.0, &mut rng).unwrap();
            let small = big.truncated(200.0).unwrap();
            let end = small.points()[0].angles();
            for _ in 0..10 {
                let (a, b) = off_end_direction(end, 0.25, &mut rng);
                let v = end_of_cell_probe(&small, a, b, &grid, 0.25).unwrap();
                if let Some(t) = v.exit_t {
                    let w = ray_assignments(&big, a, b, &[t]).unwrap()[0];
                    assert!(w.certified && w.index != 0);
                }
            }
        }
    }

    #[test]
    fn certificate_lapses_for_good() {
        let grid: Vec<f64> = (0..=80).map(|k| k as f64 * 0.1).collect();
        for rep in 0..20 {
            let mut rng = rng_stream(85, rep);
            let s = sample_corona(300.0, &mut rng).unwrap();
            let (a, b) = off_end_direction(s.points()[0].angles(), 0.2, &mut rng);
            let steps = ray_assignments(&s, a, b, &grid).unwrap();
            let first_gap = steps.iter().position(|x| !x.certified).unwrap_or(steps.len());
            assert!(steps[first_gap..].iter().all(|x| !x.certified));
        }
    }

    #[test]
    fn off_end_directions_respect_delta() {
        let mut rng = rng_stream(84, 0);
        let end = (BoundaryAngle::new(3.0), BoundaryAngle::new(-3.1));
        for _ in 0..10_000 {
            let (a, b) = off_end_direction(end, 0.3, &mut rng);
            assert!(a.circular_distance(end.0) > 0.3 - 1e-12);
            assert!(b.circular_distance(end.1) > 0.3 - 1e-12);
        }
    }
}

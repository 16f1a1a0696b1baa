//! Finite-intensity Poisson-Voronoi diagrams on the product space and the
//! low-intensity behaviour of their proto-delays.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::product::{ball_volume_unchecked, dist_l1, sample_ppp_ball, Model, ProductPoint};
use crate::rng::rng_stream;
use crate::stats::{ks_statistic, Estimate, KsResult};

/// Extra radius sampled beyond the delay window.
pub const DEFAULT_MARGIN: f64 = 2.0;

/// Default intensities for convergence studies.
pub const DEFAULT_LAMBDAS: [f64; 4] = [1e-3, 1e-4, 1e-5, 1e-6];

/// `log(1/lambda) - log log(1/lambda)`, the distance that maps to delay 0.
pub fn delay_offset(lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) || lambda >= (-1.0f64).exp() {
        return Err(invalid("lambda", format!("delays need 0 < lambda < 1/e, got {lambda}")));
    }
    let l = -lambda.ln();
    Ok(l - l.ln())
}

/// Nuclei of intensity `lambda` inside the L1 ball of radius `r_max`, sorted
/// by distance to the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NucleiSet {
    points: Vec<ProductPoint>,
    radii: Vec<f64>,
    lambda: f64,
    r_max: f64,
}

impl NucleiSet {
    pub fn new(points: Vec<ProductPoint>, lambda: f64, r_max: f64) -> Result<Self> {
        if !(lambda > 0.0) || !(r_max > 0.0) {
            return Err(invalid("lambda", "lambda and r_max must be positive"));
        }
        let mut pairs = Vec::with_capacity(points.len());
        for p in points {
            let o = ProductPoint::origin(p.model());
            pairs.push((dist_l1(&p, &o)?, p));
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (radii, points) = pairs.into_iter().unzip();
        Ok(Self { points, radii, lambda, r_max })
    }

    /// Sample with `r_max = delay_offset(lambda) + s_max + margin`.
    pub fn sample<R: Rng + ?Sized>(lambda: f64, s_max: f64, margin: f64, rng: &mut R) -> Result<Self> {
        let r_max = delay_offset(lambda)? + s_max + margin;
        let pts = sample_ppp_ball(lambda, r_max, rng)?;
        Ok(Self {
            radii: pts.iter().map(|b| b.radius).collect(),
            points: pts.into_iter().map(|b| b.point).collect(),
            lambda,
            r_max,
        })
    }

    pub fn points(&self) -> &[ProductPoint] {
        &self.points
    }

    /// L1 distances to the origin, nondecreasing.
    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Index of the nearest nucleus, lowest index on ties.
///
/// Nuclei are scanned outward; the scan stops once `d(X_i, o) - d(z, o)`
/// exceeds the best distance found, which bounds every later `d(z, X_i)`.
pub fn voronoi_assign(z: &ProductPoint, nuclei: &NucleiSet) -> Result<usize> {
    if nuclei.is_empty() {
        return Err(Error::Empty("voronoi_assign needs at least one nucleus"));
    }
    let dz = dist_l1(z, &ProductPoint::origin(z.model()))?;
    let (mut best, mut best_d) = (0, f64::INFINITY);
    for (i, (p, &r)) in nuclei.points.iter().zip(&nuclei.radii).enumerate() {
        if r - dz > best_d {
            break;
        }
        let d = dist_l1(z, p)?;
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    Ok(best)
}

/// Plain scan over all nuclei; reference for [`voronoi_assign`].
pub fn voronoi_assign_brute(z: &ProductPoint, nuclei: &NucleiSet) -> Result<usize> {
    if nuclei.is_empty() {
        return Err(Error::Empty("voronoi_assign needs at least one nucleus"));
    }
    let mut best = (0, f64::INFINITY);
    for (i, p) in nuclei.points.iter().enumerate() {
        let d = dist_l1(z, p)?;
        if d < best.1 {
            best = (i, d);
        }
    }
    Ok(best.0)
}

/// Proto-delays `d(X_i, o) - log(1/lambda) + log log(1/lambda)`.
pub fn delays(nuclei: &NucleiSet) -> Result<Vec<f64>> {
    let off = delay_offset(nuclei.lambda)?;
    Ok(nuclei.radii.iter().map(|r| r - off).collect())
}

/// Limit intensity of delays integrated over `[a, b]`: `pi^2 (e^b - e^a)`.
pub fn limit_bin_mass(a: f64, b: f64) -> f64 {
    PI * PI * (b.exp() - a.exp())
}

/// Exact expected number of delays in `[a, b]` at intensity `lambda`.
pub fn finite_bin_mass(lambda: f64, a: f64, b: f64) -> Result<f64> {
    let off = delay_offset(lambda)?;
    let vol = |s: f64| ball_volume_unchecked((off + s).max(0.0));
    Ok(lambda * (vol(b) - vol(a)))
}

/// `P(D_1 <= s)` in the limit.
pub fn limit_first_delay_cdf(s: f64) -> f64 {
    -(-PI * PI * s.exp()).exp_m1()
}

/// `P(D_1 <= s)` at intensity `lambda`.
pub fn finite_first_delay_cdf(lambda: f64, s: f64) -> Result<f64> {
    let off = delay_offset(lambda)?;
    Ok(-(-lambda * ball_volume_unchecked((off + s).max(0.0))).exp_m1())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinReport {
    pub lo: f64,
    pub hi: f64,
    pub observed_mean: f64,
    pub std_err: f64,
    pub expected_limit: f64,
    pub z_limit: f64,
    pub expected_finite: f64,
    pub z_finite: f64,
}

/// Outcome of [`delay_convergence_test`]. `pass` refers to the limit
/// intensity; the `*_finite` fields compare with the exact law at this
/// `lambda` and separate sampler error from slow convergence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayReport {
    pub lambda: f64,
    pub replicas: u64,
    pub seed: u64,
    pub r_max: f64,
    pub bins: Vec<BinReport>,
    pub fraction_bins_within_3: f64,
    pub fraction_bins_within_3_finite: f64,
    pub ks_first_delay: KsResult,
    pub ks_first_delay_finite: KsResult,
    pub first_delay_positive: Estimate,
    pub pass: bool,
    pub pass_finite: bool,
}

/// Counts per bin summed over replicas; merging is exact (integer sums), so
/// the result does not depend on how replicas are grouped.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DelayTally {
    pub replicas: u64,
    pub counts: Vec<u64>,
    pub squares: Vec<u64>,
    pub first_delays: Vec<f64>,
}

impl DelayTally {
    fn single(delays: &[f64], edges: &[f64]) -> Self {
        let mut counts = vec![0u64; edges.len() - 1];
        for &d in delays {
            if d >= edges[0] && d < edges[edges.len() - 1] {
                let k = edges.partition_point(|&e| e <= d) - 1;
                counts[k] += 1;
            }
        }
        Self {
            replicas: 1,
            squares: counts.iter().map(|c| c * c).collect(),
            counts,
            first_delays: delays.first().copied().into_iter().collect(),
        }
    }

    pub fn merge(mut self, other: Self) -> Self {
        if self.counts.is_empty() {
            return other;
        }
        if other.counts.is_empty() {
            return self;
        }
        self.replicas += other.replicas;
        for k in 0..self.counts.len() {
            self.counts[k] += other.counts[k];
            self.squares[k] += other.squares[k];
        }
        self.first_delays.extend(other.first_delays);
        self
    }
}

/// Checks binned delay counts against `pi^2 e^s ds` and the first delay
/// against `1 - exp(-pi^2 e^s)` over `replicas` independent samples at
/// intensity `lambda`. `edges` partitions `[s_min, s_max]`.
pub fn delay_convergence_test(lambda: f64, replicas: u64, edges: &[f64], seed: u64) -> Result<DelayReport> {
    if replicas < 100 {
        return Err(Error::TooFewSamples { needed: 100, got: replicas as usize });
    }
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid("edges", "need at least two strictly increasing bin edges"));
    }
    let s_max = edges[edges.len() - 1];
    let r_max = delay_offset(lambda)? + s_max + DEFAULT_MARGIN;
    let tally = (0..replicas)
        .into_par_iter()
        .map(|k| -> Result<DelayTally> {
            let mut rng = rng_stream(seed, k);
            let nuclei = NucleiSet::sample(lambda, s_max, DEFAULT_MARGIN, &mut rng)?;
            Ok(DelayTally::single(&delays(&nuclei)?, edges))
        })
        .try_reduce(DelayTally::default, |a, b| Ok(a.merge(b)))?;
    let n = tally.replicas as f64;
    let mut bins = Vec::with_capacity(edges.len() - 1);
    for k in 0..edges.len() - 1 {
        let mean = tally.counts[k] as f64 / n;
        let var = (tally.squares[k] as f64 - n * mean * mean) / (n - 1.0);
        let std_err = (var.max(0.0) / n).sqrt();
        let expected_limit = limit_bin_mass(edges[k], edges[k + 1]);
        let expected_finite = finite_bin_mass(lambda, edges[k], edges[k + 1])?;
        // a bin with no observations has zero sample variance; fall back to
        // the Poisson standard error of the hypothesis
        let se = |expected: f64| if std_err > 0.0 { std_err } else { (expected / n).sqrt() };
        bins.push(BinReport {
            lo: edges[k],
            hi: edges[k + 1],
            observed_mean: mean,
            std_err,
            expected_limit,
            z_limit: (mean - expected_limit) / se(expected_limit),
            expected_finite,
            z_finite: (mean - expected_finite) / se(expected_finite),
        });
    }
    let within = |f: fn(&BinReport) -> f64| bins.iter().filter(|b| f(b).abs() <= 3.0).count() as f64 / bins.len() as f64;
    let fraction_bins_within_3 = within(|b| b.z_limit);
    let fraction_bins_within_3_finite = within(|b| b.z_finite);
    // replicas without any nucleus have D_1 > s_max + margin; censor them there
    let mut firsts = tally.first_delays.clone();
    let censored = s_max + DEFAULT_MARGIN;
    firsts.resize(tally.replicas as usize, censored);
    firsts.sort_by(f64::total_cmp);
    let ks_first_delay = ks_statistic(&firsts, limit_first_delay_cdf)?;
    let ks_first_delay_finite = ks_statistic(&firsts, |s| finite_first_delay_cdf(lambda, s).unwrap_or(0.0))?;
    let positive = firsts.iter().filter(|&&d| d > 0.0).count() as u64;
    Ok(DelayReport {
        lambda,
        replicas: tally.replicas,
        seed,
        r_max,
        pass: fraction_bins_within_3 >= 0.95 && ks_first_delay.passes(0.01),
        pass_finite: fraction_bins_within_3_finite >= 0.95 && ks_first_delay_finite.passes(0.01),
        bins,
        fraction_bins_within_3,
        fraction_bins_within_3_finite,
        ks_first_delay,
        ks_first_delay_finite,
        first_delay_positive: Estimate::proportion(positive, tally.replicas),
    })
}

/// Factor directions and radii of one nucleus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscapeRecord {
    pub theta: f64,
    pub phi: f64,
    pub rho1: f64,
    pub rho2: f64,
    /// `|rho1 - rho2| / (rho1 + rho2)`.
    pub imbalance: f64,
}

/// Directions and distance imbalance of the first `k` nuclei.
pub fn boundary_escape_stat(nuclei: &NucleiSet, k: usize) -> Result<Vec<EscapeRecord>> {
    if k > nuclei.len() {
        return Err(Error::OutOfRange { index: k, len: nuclei.len() });
    }
    nuclei.points[..k]
        .iter()
        .map(|p| {
            let ProductPoint::Disk(a, b) = p.to_model(Model::Disk)? else {
                unreachable!()
            };
            let (rho1, rho2) = (a.radius(), b.radius());
            let total = rho1 + rho2;
            Ok(EscapeRecord {
                theta: a.z().arg(),
                phi: b.z().arg(),
                rho1,
                rho2,
                imbalance: if total > 0.0 { (rho1 - rho2).abs() / total } else { 0.0 },
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyperbolic::{DiskPoint, C64};
    use crate::product::tests::{random_isometry, random_point};
    use crate::stats::ks_statistic;

    #[test]
    fn delay_offset_domain() {
        assert!(delay_offset(0.5).is_err());
        assert!(delay_offset((-1.0f64).exp()).is_err());
        assert!(delay_offset(0.0).is_err());
        let l = 1e6f64.ln();
        assert!((delay_offset(1e-6).unwrap() - (l - l.ln())).abs() < 1e-15);
    }

    #[test]
    fn delay_zero_at_offset() {
        let lambda = 1e-4;
        let off = delay_offset(lambda).unwrap();
        let z = ProductPoint::Disk(DiskPoint::from_polar(off, 0.3).unwrap(), DiskPoint::ORIGIN);
        let n = NucleiSet::new(vec![z], lambda, off + 1.0).unwrap();
        assert!(delays(&n).unwrap()[0].abs() < 1e-12);
    }

    #[test]
    fn bin_masses() {
        assert!((limit_bin_mass(-1.0, 0.0) - 6.23878).abs() < 1e-5);
        assert!((limit_first_delay_cdf(0.0) - (1.0 - (-PI * PI).exp())).abs() < 1e-15);
        assert!(((-PI * PI).exp() - 5.17e-5).abs() < 1e-7);
        // finite-lambda masses approach the limit, slowly
        let gaps: Vec<f64> = [1e-3, 1e-6, 1e-12, 1e-24, 1e-48]
            .iter()
            .map(|&l| (finite_bin_mass(l, -1.0, 0.0).unwrap() / limit_bin_mass(-1.0, 0.0) - 1.0).abs())
            .collect();
        assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
        assert!(gaps[1] > 0.2, "at 1e-6 the finite mass is still far off: {gaps:?}");
    }

    #[test]
    fn voronoi_examples() {
        let a = ProductPoint::Disk(DiskPoint::from_polar(1.0, 0.0).unwrap(), DiskPoint::ORIGIN);
        let b = ProductPoint::Disk(DiskPoint::from_polar(1.0, PI).unwrap(), DiskPoint::ORIGIN);
        let c = ProductPoint::Disk(DiskPoint::ORIGIN, DiskPoint::from_polar(2.0, 1.0).unwrap());
        let n = NucleiSet::new(vec![c, b, a], 1e-3, 5.0).unwrap();
        let ia = n.points().iter().position(|p| *p == a).unwrap();
        assert_eq!(voronoi_assign(&a, &n).unwrap(), ia);
        assert_eq!(voronoi_assign(&ProductPoint::origin(Model::Disk), &n).unwrap(), 0);
        assert_eq!(voronoi_assign_brute(&ProductPoint::origin(Model::Disk), &n).unwrap(), 0);
        let empty = NucleiSet::new(vec![], 1e-3, 5.0).unwrap();
        assert!(voronoi_assign(&a, &empty).is_err());
    }

    #[test]
    fn pruned_scan_matches_brute_force() {
        let mut rng = rng_stream(50, 0);
        let n = NucleiSet::sample(1e-3, 1.0, DEFAULT_MARGIN, &mut rng).unwrap();
        assert!(n.len() > 20);
        for _ in 0..10_000 {
            let z = random_point(&mut rng, 8.0);
            assert_eq!(voronoi_assign(&z, &n).unwrap(), voronoi_assign_brute(&z, &n).unwrap());
        }
    }

    #[test]
    fn voronoi_isometry_invariant() {
        let mut rng = rng_stream(51, 0);
        let n = NucleiSet::sample(1e-3, 1.0, DEFAULT_MARGIN, &mut rng).unwrap();
        for _ in 0..200 {
            let g = random_isometry(&mut rng, 2.0);
            let moved: Vec<ProductPoint> = n.points().iter().map(|p| g.apply(p).unwrap()).collect();
            let m = NucleiSet::new(moved.clone(), n.lambda(), n.r_max()).unwrap();
            let z = random_point(&mut rng, 5.0);
            let a = voronoi_assign_brute(&z, &n).unwrap();
            let b = voronoi_assign_brute(&g.apply(&z).unwrap(), &m).unwrap();
            assert_eq!(m.points()[b], moved[a]);
        }
    }

    #[test]
    fn delays_monotone() {
        let n = NucleiSet::sample(1e-4, 1.0, DEFAULT_MARGIN, &mut rng_stream(52, 0)).unwrap();
        let d = delays(&n).unwrap();
        assert!(d.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(d.len(), n.len());
    }

    #[test]
    fn sampler_window_is_exact() {
        // counts inside the window match lambda * volume
        let lambda = 1e-3;
        let reps = 4000u64;
        let off = delay_offset(lambda).unwrap();
        let counts: Vec<f64> = (0..reps)
            .map(|k| {
                let n = NucleiSet::sample(lambda, 0.0, DEFAULT_MARGIN, &mut rng_stream(53, k)).unwrap();
                n.radii().iter().filter(|&&r| r <= off).count() as f64
            })
            .collect();
        let est = Estimate::from_samples(&counts);
        let expected = lambda * ball_volume_unchecked(off);
        assert!((est.mean - expected).abs() < 3.0 * est.std_err, "{est:?} vs {expected}");
    }

    #[test]
    fn first_delay_matches_finite_law() {
        let lambda = 1e-3;
        let mut firsts: Vec<f64> = (0..2000)
            .map(|k| {
                let n = NucleiSet::sample(lambda, 1.0, DEFAULT_MARGIN, &mut rng_stream(54, k)).unwrap();
                delays(&n).unwrap()[0]
            })
            .collect();
        firsts.sort_by(f64::total_cmp);
        let ks = ks_statistic(&firsts, |s| finite_first_delay_cdf(lambda, s).unwrap()).unwrap();
        assert!(ks.passes(0.01), "{ks:?}");
    }

    #[test]
    fn convergence_test_rejects_few_replicas() {
        assert!(matches!(
            delay_convergence_test(1e-3, 99, &[-1.0, 0.0], 1),
            Err(Error::TooFewSamples { .. })
        ));
        assert!(delay_convergence_test(1e-3, 100, &[0.0], 1).is_err());
    }

    #[test]
    fn tally_merge_is_order_free() {
        let edges = [-1.0, 0.0, 1.0];
        let a = DelayTally::single(&[-0.5, 0.2, 0.3], &edges);
        let b = DelayTally::single(&[0.9], &edges);
        let c = DelayTally::single(&[-0.9, -0.1], &edges);
        let x = a.clone().merge(b.clone()).merge(c.clone());
        let y = c.merge(a.merge(b));
        assert_eq!(x.counts, y.counts);
        assert_eq!(x.squares, y.squares);
        assert_eq!(x.replicas, 3);
    }

    #[test]
    fn convergence_report_is_reproducible() {
        let edges: Vec<f64> = (0..=4).map(|k| -2.0 + 0.5 * k as f64).collect();
        let a = delay_convergence_test(1e-3, 200, &edges, 9).unwrap();
        let b = delay_convergence_test(1e-3, 200, &edges, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.bins.iter().all(|b| b.z_finite.abs() < 5.0), "{:?}", a.bins);
    }

    #[test]
    fn escape_examples() {
        let d = DiskPoint::from_polar(2.0, 0.5).unwrap();
        let n = NucleiSet::new(vec![ProductPoint::Disk(d, d)], 1e-3, 5.0).unwrap();
        let rec = boundary_escape_stat(&n, 1).unwrap();
        assert!(rec[0].imbalance < 1e-12);
        assert!((rec[0].theta - 0.5).abs() < 1e-12);
        assert!(boundary_escape_stat(&n, 2).is_err());
        let _ = C64::new(0.0, 0.0);
    }

    fn first_nucleus_records(lambda: f64, reps: u64, seed: u64) -> Vec<EscapeRecord> {
        (0..reps)
            .into_par_iter()
            .map(|k| {
                // the window reaches delay 1; P(D_1 > 1) is about 2e-12
                let n = NucleiSet::sample(lambda, -1.0, DEFAULT_MARGIN, &mut rng_stream(seed, k)).unwrap();
                boundary_escape_stat(&n, 1).unwrap()[0]
            })
            .collect()
    }

    #[test]
    fn escape_trend() {
        // a fixed imbalance threshold does not go to zero (the split of the
        // radius is asymptotically uniform); the mass with one factor
        // bounded does
        let reps = 20_000;
        let mut bounded = Vec::new();
        for (j, lambda) in [1e-3, 1e-5, 1e-7].into_iter().enumerate() {
            let recs = first_nucleus_records(lambda, reps, 55 + j as u64);
            let hits = recs.iter().filter(|r| r.rho1.min(r.rho2) < 1.0).count() as u64;
            bounded.push(Estimate::proportion(hits, reps));
            let high = Estimate::proportion(recs.iter().filter(|r| r.imbalance > 0.99).count() as u64, reps);
            assert!((high.mean - 0.01).abs() < 0.01, "{high:?}");
        }
        assert!(bounded[0].mean > bounded[1].mean + 3.0 * bounded[1].std_err);
        assert!(bounded[1].mean > bounded[2].mean + 3.0 * bounded[2].std_err);
    }

    #[test]
    fn escape_angles_uniform() {
        let recs = first_nucleus_records(1e-4, 5000, 58);
        for pick in [0, 1] {
            let mut xs: Vec<f64> = recs.iter().map(|r| if pick == 0 { r.theta } else { r.phi }).collect();
            xs.sort_by(f64::total_cmp);
            let ks = ks_statistic(&xs, |x| (x + PI) / (2.0 * PI)).unwrap();
            assert!(ks.passes(0.01), "{ks:?}");
        }
    }
}

use std::f64::consts::PI;

use ipvt_core::corona::{
    conditioned_pair, corona_isometry_apply, kernel_pair, nml_unbounded_probe, sample_corona, separation, CoronaPoint, Patch,
};
use ipvt_core::crosses::{
    ball_model_intensity_check, coverage_run, inscribed_disk, mushroom_contains, mushroom_region, sample_deposition,
    sample_deposition_from_corona, CoverageGrid, CoverageMode, DepositionEvent,
};
use ipvt_core::field::{
    end_of_cell_probe, field_rate, limit_field_sample, off_end_direction, rescaled_field_sample, tiebreak_estimate,
    RescaledCoronaPoint, SeparationSample, TiebreakMethod, TravelerState, TIEBREAK_CONSTANT,
};
use ipvt_core::finite::delay_convergence_test;
use ipvt_core::hyperbolic::{kernel_disk_max, DiskPoint, Mobius, C64};
use ipvt_core::product::{ball_volume, ball_volume_quadrature, ProductIsometry, ProductPoint};
use ipvt_core::rng::rng_stream;
use ipvt_core::stats::{ks_statistic, ks_two_sample, Estimate};
use rand::Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::plot::{self, Frame};
use crate::{Check, Experiment, Outcome, Params, Result, Sink};

pub(crate) fn dispatch(exp: Experiment, p: Params, seed: u64, sink: &Sink) -> Result<Outcome> {
    match exp {
        Experiment::Volume => volume(p, sink),
        Experiment::Delays => delays(p, seed, sink),
        Experiment::CoronaPortrait => corona_portrait(p, seed, sink),
        Experiment::Coverage => coverage(p, seed, sink),
        Experiment::Mushroom => mushroom(p, seed, sink),
        Experiment::Field => field(p, seed, sink),
        Experiment::Tiebreak => tiebreak(p, seed, sink),
        Experiment::EndProbe => end_probe(p, seed, sink),
        Experiment::NmlProbe => nml_probe(p, seed, sink),
        Experiment::IsometryCheck => isometry_check(p, seed, sink),
    }
}

fn check(name: &str, pass: bool, detail: String) -> Check {
    Check {
        name: name.to_string(),
        pass,
        detail,
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

fn sorted(xs: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = xs.collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Regular grid `0, dt, ..., t_max`.
fn grid(t_max: f64, dt: f64) -> Vec<f64> {
    let n = (t_max / dt).round() as usize;
    (0..=n).map(|k| k as f64 * dt).collect()
}

fn volume(mut p: Params, sink: &Sink) -> Result<Outcome> {
    let radii = p.list("radii", "0.1,0.5,1,2,5,10")?;
    let panels = p.count("panels", 64)? as usize;
    let tolerance = p.positive("tolerance", 1e-8)?;
    let parameters = p.finish()?;
    let (mut w, csv_name) = sink.csv(".csv")?;
    w.write_record(["r", "closed_form", "quadrature", "relative_error"])?;
    let mut worst = 0.0f64;
    let mut curve = Vec::new();
    for &r in &radii {
        let (exact, quad) = (ball_volume(r)?, ball_volume_quadrature(r, panels));
        let e = rel(exact, quad);
        worst = worst.max(e);
        curve.push((r, exact.ln()));
        w.serialize((r, exact, quad, e))?;
    }
    w.flush().map_err(csv::Error::from)?;
    let frame = Frame::fit(&curve);
    let doc = plot::canvas(&frame, "ball volume", "r", "log V(r)").add(plot::lines(&frame, &[curve]));
    let svg_name = sink.svg(".svg", &doc)?;
    Ok(Outcome {
        parameters,
        statistics: json!({ "max_relative_error": worst }),
        checks: vec![check("closed form matches quadrature", worst < tolerance, format!("max relative error {worst:.3e}"))],
        artifacts: vec![csv_name, svg_name],
    })
}

fn delays(mut p: Params, seed: u64, sink: &Sink) -> Result<Outcome> {
    let lambda = p.positive("lambda", 1e-6)?;
    let replicas = p.count("replicas", 10_000)?;
    let s_min = p.f64("s_min", -3.0)?;
    let s_max = p.f64("s_max", 1.0)?;
    let bins = p.count("bins", 8)? as usize;
    let parameters = p.finish()?;
    let edges: Vec<f64> = (0..=bins).map(|k| s_min + (s_max - s_min) * k as f64 / bins as f64).collect();
    let rep = delay_convergence_test(lambda, replicas, &edges, seed)?;
    let (mut w, csv_name) = sink.csv(".csv")?;
    for b in &rep.bins {
        w.serialize(b)?;
    }
    w.flush().map_err(csv::Error::from)?;
    let frame = Frame::fit(rep.bins.iter().flat_map(|b| [(b.lo, b.observed_mean), (b.hi, b.expected_limit)]).collect::<Vec<_>>().iter());
    let step = |f: &dyn Fn(&ipvt_core::finite::BinReport) -> f64| -> Vec<(f64, f64)> {
        rep.bins.iter().flat_map(|b| [(b.lo, f(b)), (b.hi, f(b))]).collect()
    };
    let doc = plot::canvas(&frame, "mean delay count per bin: observed, limit, finite lambda", "s", "count").add(plot::lines(
        &frame,
        &[step(&|b| b.observed_mean), step(&|b| b.expected_limit), step(&|b| b.expected_finite)],
    ));
    let svg_name = sink.svg(".svg", &doc)?;
    let checks = vec![
        check(
            "bins within 3 standard errors of the limit law",
            rep.fraction_bins_within_3 >= 0.95,
            format!("{:.0}% of bins", 100.0 * rep.fraction_bins_within_3),
        ),
        check(
            "first delay matches the limit law (KS 1%)",
            rep.ks_first_delay.passes(0.01),
            format!("p = {:.3e}", rep.ks_first_delay.p_value),
        ),
    ];
    Ok(Outcome {
        parameters,
        statistics: serde_json::to_value(&rep)?,
        checks,
        artifacts: vec![csv_name, svg_name],
    })
}

fn corona_portrait(mut p: Params, seed: u64, sink: &Sink) -> Result<Outcome> {
    let r_cutoff = p.positive("r_cutoff", 1000.0)?;
    let scale = p.positive("scale", 1.0)?;
    let parameters = p.finish()?;
    let s = sample_corona(r_cutoff, &mut rng_stream(seed, 0))?;
    let (path, csv_name) = sink.path(".csv");
    let file = std::fs::File::create(&path).map_err(|source| crate::CliError::Output { path, source })?;
    s.write_csv(std::io::BufWriter::new(file)).map_err(csv::Error::from)?;
    let uniform = |x: f64| ((x + PI) / (2.0 * PI)).clamp(0.0, 1.0);
    let angles: Vec<(f64, f64)> = s.points().iter().map(|q| {
        let (t, f) = q.angles();
        (t.value(), f.value())
    }).collect();
    let ks_t = ks_statistic(&sorted(angles.iter().map(|a| a.0)), uniform)?;
    let ks_f = ks_statistic(&sorted(angles.iter().map(|a| a.1)), uniform)?;
    let ks_r = ks_statistic(&sorted(s.points().iter().map(|q| q.r)), |r| (r / r_cutoff).clamp(0.0, 1.0))?;
    let n = s.len() as f64;
    let z_count = (n - r_cutoff) / r_cutoff.sqrt();
    let frame = Frame::new((-PI, PI), (-PI, PI));
    let r_top = s.points().last().map_or(1.0, |q| q.r);
    let dots: Vec<(f64, f64, f64)> = s.points().iter().zip(&angles).map(|(q, a)| (a.0, a.1, scale * (0.5 + 6.0 * q.r / r_top))).collect();
    let doc = plot::canvas(&frame, "corona process", "theta", "phi").add(plot::discs(&frame, &dots, plot::color(0)));
    let svg_name = sink.svg(".svg", &doc)?;
    Ok(Outcome {
        parameters,
        statistics: json!({
            "points": s.len(),
            "count_z": z_count,
            "ks_theta": ks_t,
            "ks_phi": ks_f,
            "ks_r": ks_r,
        }),
        checks: vec![
            check("point count is Poisson(r_cutoff)", z_count.abs() <= 3.0, format!("{} points, z = {z_count:.2}", s.len())),
            check("theta uniform (KS 1%)", ks_t.passes(0.01), format!("p = {:.3}", ks_t.p_value)),
            check("phi uniform (KS 1%)", ks_f.passes(0.01), format!("p = {:.3}", ks_f.p_value)),
            check("r uniform on [0, r_cutoff] (KS 1%)", ks_r.passes(0.01), format!("p = {:.3}", ks_r.p_value)),
        ],
        artifacts: vec![csv_name, svg_name],
    })
}

struct CoverageRun {
    r1: f64,
    events: Vec<DepositionEvent>,
    crosses: Vec<f64>,
    disks: Vec<f64>,
    dominated: bool,
}

fn coverage(mut p: Params, seed: u64, sink: &Sink) -> Result<Outcome> {
    let half_width = p.positive("half_width", 10.0)?;
    let resolution = p.count("resolution", 512)? as usize;
    let events = p.count("events", 100_000)? as usize;
    let replicas = p.count("replicas", 50)?;
    let r1_fixed = p.positive("r1", 1.0)?;
    let source = p.choice("source", "fixed", &["fixed", "corona"])?;
    let target = p.positive("target", 0.999)?;
    let ball_samples = p.count("ball_samples", 100_000)? as usize;
    let portrait = p.count("portrait_events", 30)? as usize;
    let parameters = p.finish()?;
    let runs: Vec<CoverageRun> = (0..replicas)
        .into_par_iter()
        .map(|k| {
            let (r1, ev) = if source == "fixed" {
                (r1_fixed, sample_deposition(events, rng_seed(seed, k))?)
            } else {
                sample_deposition_from_corona(events, &mut rng_stream(seed, k))?
            };
            let mut gc = CoverageGrid::new(half_width, resolution)?;
            let mut gd = CoverageGrid::new(half_width, resolution)?;
            let crosses = coverage_run(&mut gc, r1, &ev, CoverageMode::Crosses)?;
            let disks = coverage_run(&mut gd, r1, &ev, CoverageMode::InscribedDisks)?;
            let dominated = crosses.iter().zip(&disks).all(|(c, d)| d <= c) && gc.mask().iter().zip(gd.mask()).all(|(c, d)| !d || *c);
            Ok(CoverageRun {
                r1,
                events: if k == 0 { ev } else { Vec::new() },
                crosses,
                disks,
                dominated,
            })
        })
        .collect::<ipvt_core::Result<_>>()?;
    let dominated = runs.iter().filter(|r| r.dominated).count();
    let monotone = runs.iter().filter(|r| r.crosses.windows(2).all(|w| w[0] <= w[1])).count();
    let hits: Vec<Option<usize>> = runs.iter().map(|r| r.crosses.iter().position(|&f| f > target).map(|i| i + 1)).collect();
    let reached = hits.iter().flatten().count();
    let mut sorted_hits: Vec<usize> = hits.iter().flatten().copied().collect();
    sorted_hits.sort_unstable();
    let median = sorted_hits.get(sorted_hits.len() / 2).copied();
    let ball = ball_model_intensity_check(r1_fixed, ball_samples, seed)?;

    let first = &runs[0];
    let (mut w, csv_name) = sink.csv(".csv")?;
    w.write_record(["event_index", "t", "coverage_fraction", "disk_coverage_fraction"])?;
    for (i, ev) in first.events.iter().enumerate() {
        w.serialize((i + 1, ev.t, first.crosses[i], first.disks[i]))?;
        if first.crosses[i] >= 1.0 {
            break;
        }
    }
    w.flush().map_err(csv::Error::from)?;

    // portrait of the first events: crosses by scanline, inscribed disks as circles
    let frame = Frame::new((-half_width, half_width), (-half_width, half_width));
    let rows = 400;
    let h = 2.0 * half_width / rows as f64;
    let mut doc = plot::canvas(&frame, "first deposited crosses and inscribed disks", "x", "y");
    for (k, ev) in first.events.iter().take(portrait).enumerate() {
        let hc = ev.cross(first.r1);
        let mut spans = Vec::new();
        for row in 0..rows {
            let y = -half_width + (row as f64 + 0.5) * h;
            // |x - a| |y - b| <= sqrt(bound)
            let reach = hc.bound().sqrt() / (y - hc.b).abs();
            let (lo, hi) = ((hc.a - reach).max(-half_width), (hc.a + reach).min(half_width));
            if lo < hi {
                spans.push((y - h / 2.0, y + h / 2.0, lo, hi));
            }
        }
        doc = doc.add(plot::runs(&frame, &spans, plot::color(k)));
        let ((a, b), r) = inscribed_disk(&hc);
        doc = doc.add(
            plot::discs(&frame, &[(a, b, r * frame.scale_x())], "none")
                .set("stroke", "black")
                .set("fill-opacity", 0),
        );
    }
    let svg_name = sink.svg(".svg", &doc)?;

    let checks = vec![
        check("inscribed disks never exceed crosses", dominated as u64 == replicas, format!("{dominated}/{replicas} replicas")),
        check("coverage is monotone", monotone as u64 == replicas, format!("{monotone}/{replicas} replicas")),
        check(
            "crosses cover the window",
            reached as f64 >= 0.9 * replicas as f64,
            format!("{reached}/{replicas} replicas exceed {target} (median events {median:?})"),
        ),
        check(
            "ball-model intensity profile",
            ball.pass,
            format!("exponent {:.3} +- {:.3}, violations {}", ball.fit.slope, ball.fit.slope_std_err, ball.violations),
        ),
    ];
    Ok(Outcome {
        parameters,
        statistics: json!({
            "replicas": replicas,
            "dominated": dominated,
            "monotone": monotone,
            "events_to_target": hits,
            "fraction_reaching_target": Estimate::proportion(reached as u64, replicas),
            "median_events_to_target": median,
            "final_cross_coverage": runs.iter().map(|r| r.crosses.last().copied().unwrap_or(0.0)).collect::<Vec<_>>(),
            "final_disk_coverage": runs.iter().map(|r| r.disks.last().copied().unwrap_or(0.0)).collect::<Vec<_>>(),
            "ball_model": ball,
        }),
        checks,
        artifacts: vec![csv_name, svg_name],
    })
}

/// Per-replica seed for samplers that take a seed rather than a stream.
fn rng_seed(seed: u64, k: u64) -> u64 {
    rng_stream(seed, k).random()
}

fn mushroom(mut p: Params, seed: u64, sink: &Sink) -> Result<Outcome> {
    let theta = p.f64("theta", 0.5)?;
    let phi = p.f64("phi", 2.0)?;
    let r_i = p.positive("r_i", 1.5)?;
    let r1 = p.positive("r1", 1.0)?;
    let y = p.f64("y", -1.0)?;
    let half_width = p.positive("half_width", 10.0)?;
    let resolution = p.count("resolution", 512)? as usize;
    let configurations = p.count("configurations", 1000)?;
    let parameters = p.finish()?;
    let rep = mushroom_region(theta, phi, r_i, r1, y, half_width, resolution)?;
    let (mut w, csv_name) = sink.csv(".csv")?;
    w.write_record(["x1", "member"])?;
    let h = 2.0 * half_width / resolution as f64;
    for j in 0..resolution {
        let x1 = -half_width + (j as f64 + 0.5) * h;
        w.serialize((x1, u8::from(mushroom_contains(theta, phi, r_i, r1, y, x1, y))))?;
    }
    w.flush().map_err(csv::Error::from)?;
    let frame = Frame::new((-half_width, half_width), (-half_width, half_width));
    let doc = plot::canvas(&frame, "no-man's-land region", "x1", "x2")
        .add(plot::runs(&frame, &plot::mask_runs(&rep.mask, resolution, half_width), plot::color(0)))
        .add(plot::hline(&frame, y, "black"));
    let svg_name = sink.svg(".svg", &doc)?;
    let mut rng = rng_stream(seed, 0);
    let mut clean = 0u64;
    for _ in 0..configurations {
        let (th, ph, yy) = (rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0));
        let rr1 = rng.random_range(0.05..3.0);
        let ri = rr1 + rng.random_range(0.01..5.0);
        if mushroom_region(th, ph, ri, rr1, yy, half_width, resolution)?.line_members_outside == 0 {
            clean += 1;
        }
    }
    Ok(Outcome {
        parameters,
        statistics: json!({
            "covered_fraction": rep.mask.iter().filter(|&&m| m).count() as f64 / rep.mask.len() as f64,
            "line_members": rep.line_members,
            "line_members_outside": rep.line_members_outside,
            "touches_edges": rep.touches_edges,
            "random_configurations_clean": clean,
        }),
        checks: vec![
            check(
                "line x2 = y meets the region only at x1 = theta",
                rep.line_members_outside == 0,
                format!("{} line members, {} away from theta", rep.line_members, rep.line_members_outside),
            ),
            check("same for random configurations", clean == configurations, format!("{clean}/{configurations}")),
        ],
        artifacts: vec![csv_name, svg_name],
    })
}

fn field(mut p: Params, seed: u64, sink: &Sink) -> Result<Outcome> {
    let epsilons = p.list("epsilons", "1e-2,1e-3,1e-4")?;
    let y_max = p.positive("y_max", 5.0)?;
    let replicas = p.count("replicas", 2000)?;
    let rate_replicas = p.count("rate_replicas", 4000)?;
    let atoms_plotted = p.count("atoms_plotted", 8)? as usize;
    let parameters = p.finish()?;
    if epsilons.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return Err(crate::CliError::InvalidParameter {
            key: "epsilons".into(),
            value: parameters["epsilons"].clone(),
            reason: "each epsilon must lie in (0, 1)".into(),
        });
    }
    let eps_min = epsilons.iter().cloned().fold(f64::INFINITY, f64::min);
    let state = TravelerState::from_epsilon(eps_min)?;
    let pre: Vec<Vec<SeparationSample>> = (0..replicas)
        .into_par_iter()
        .map(|k| rescaled_field_sample(&state, y_max, &mut rng_stream(seed, k)))
        .collect::<ipvt_core::Result<_>>()?;
    let one = C64::new(1.0, 0.0);
    let lim: Vec<SeparationSample> = (0..replicas)
        .into_par_iter()
        .map(|k| limit_field_sample(one, one, y_max, &mut rng_stream(seed, replicas + k)))
        .collect::<ipvt_core::Result<Vec<_>>>()?
        .concat();
    let (mut w, csv_name) = sink.csv(".csv")?;
    for a in pre.iter().flatten() {
        w.serialize(a)?;
    }
    w.flush().map_err(csv::Error::from)?;
    let flat: Vec<SeparationSample> = pre.iter().flatten().copied().collect();
    let marginal = |v: &[SeparationSample], pick: usize| {
        sorted(v.iter().map(|a| [a.theta_hat, a.phi_hat, a.y][pick]))
    };
    let ks: Vec<_> = (0..3).map(|i| ks_two_sample(&marginal(&flat, i), &marginal(&lim, i))).collect::<ipvt_core::Result<_>>()?;
    let rates: Vec<_> = epsilons
        .iter()
        .enumerate()
        .map(|(i, &e)| field_rate(e, y_max, rate_replicas, seed.wrapping_add(1 + i as u64)))
        .collect::<ipvt_core::Result<_>>()?;
    let c: Vec<f64> = rates.iter().map(|r| r.count_rate.mean).collect();
    let spread = (c.iter().cloned().fold(f64::MIN, f64::max) - c.iter().cloned().fold(f64::MAX, f64::min))
        / rates.iter().min_by(|a, b| a.epsilon.total_cmp(&b.epsilon)).map_or(1.0, |r| r.count_rate.mean);

    // trajectories of the lowest atoms of replica 0 at fixed rescaled coordinates
    let eps_grid: Vec<f64> = (0..=40).map(|k| 10f64.powf(-1.0 + (eps_min.log10() + 1.0) * k as f64 / 40.0)).collect();
    let mut series = Vec::new();
    for a in pre[0].iter().take(atoms_plotted) {
        let probe = CoronaPoint::disk(a.theta_hat * eps_min, a.phi_hat * eps_min, 1.0)?;
        let (k1, k2) = kernel_pair(&state.position, &probe)?;
        let atom = RescaledCoronaPoint::from_corona(&CoronaPoint { r: a.y * k1 * k2, ..probe }, eps_min);
        let mut s = Vec::new();
        for &e in &eps_grid {
            let st = TravelerState::from_epsilon(e)?;
            s.push((-e.ln(), separation(&st.position, &atom.to_corona(e)?)?));
        }
        series.push(s);
    }
    let frame = Frame::fit(series.iter().flatten());
    let doc = plot::canvas(&frame, "separation of rescaled atoms along the traveler", "-log eps", "sep").add(plot::lines(&frame, &series));
    let svg_name = sink.svg(".svg", &doc)?;
    let names = ["theta_hat", "phi_hat", "y"];
    let mut checks: Vec<Check> = ks
        .iter()
        .zip(names)
        .map(|(k, n)| check(&format!("{n} marginal matches the limit field (KS 1%)"), k.passes(0.01), format!("p = {:.3}", k.p_value)))
        .collect();
    checks.push(check("rate stable across epsilon", spread <= 0.05, format!("spread {:.2}%", 100.0 * spread)));
    Ok(Outcome {
        parameters,
        statistics: json!({
            "atoms": flat.len(),
            "limit_atoms": lim.len(),
            "ks": names.iter().zip(&ks).map(|(n, k)| (n.to_string(), serde_json::to_value(k).unwrap())).collect::<serde_json::Map<_, _>>(),
            "rates": rates,
            "rate_spread": spread,
        }),
        checks,
        artifacts: vec![csv_name, svg_name],
    })
}

fn tiebreak(mut p: Params, seed: u64, sink: &Sink) -> Result<Outcome> {
    let n = p.count("n", 10_000_000)?;
    let tolerance = p.positive("tolerance", 1e-3)?;
    let parameters = p.finish()?;
    let a = tiebreak_estimate(TiebreakMethod::DirectZ, n, seed)?;
    let b = tiebreak_estimate(TiebreakMethod::CoronaLimit, n, seed.wrapping_add(1))?;
    let (mut w, csv_name) = sink.csv(".csv")?;
    w.write_record(["method", "estimate", "std_err", "n", "lo", "hi", "target"])?;
    for (name, e) in [("direct_z", &a), ("corona_limit", &b)] {
        w.serialize((name, e.estimate.mean, e.estimate.std_err, e.estimate.n, e.interval.0, e.interval.1, e.target))?;
    }
    w.flush().map_err(csv::Error::from)?;
    let z = a.estimate.joint_z(&b.estimate);
    let close = |e: f64| (e - TIEBREAK_CONSTANT).abs() <= tolerance;
    Ok(Outcome {
        parameters,
        statistics: json!({ "direct_z": a, "corona_limit": b, "joint_z": z }),
        checks: vec![
            check("direct estimate near target", close(a.estimate.mean), format!("{:.5} vs {TIEBREAK_CONSTANT:.5}", a.estimate.mean)),
            check("corona estimate near target", close(b.estimate.mean), format!("{:.5} vs {TIEBREAK_CONSTANT:.5}", b.estimate.mean)),
            check("estimates agree", z <= 3.0, format!("joint z {z:.2}")),
        ],
        artifacts: vec![csv_name],
    })
}

fn end_probe(mut p: Params, seed: u64, sink: &Sink) -> Result<Outcome> {
    let replicas = p.count("replicas", 100)?;
    let directions = p.count("directions", 100)?;
    let r_cutoff = p.positive("r_cutoff", 1000.0)?;
    let delta = p.positive("delta", 0.25)?;
    let t_max = p.positive("t_max", 15.0)?;
    let dt = p.positive("dt", 0.1)?;
    let parameters = p.finish()?;
    let t_grid = grid(t_max, dt);
    let rows: Vec<Vec<(u64, u64, f64, f64, Option<f64>)>> = (0..replicas)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng_stream(seed, k);
            let s = sample_corona(r_cutoff, &mut rng)?;
            let end = s.points()[0].angles();
            (0..directions)
                .map(|d| {
                    let (a, b) = off_end_direction(end, delta, &mut rng);
                    let v = end_of_cell_probe(&s, a, b, &t_grid, delta)?;
                    Ok((k, d, v.tau1, v.tau2, v.exit_t))
                })
                .collect()
        })
        .collect::<ipvt_core::Result<_>>()?;
    let (mut w, csv_name) = sink.csv(".csv")?;
    w.write_record(["replica", "direction", "tau1", "tau2", "exit_t"])?;
    for r in rows.iter().flatten() {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    let total = replicas * directions;
    let exits = rows.iter().flatten().filter(|r| r.4.is_some()).count() as u64;
    let exit_times = sorted(rows.iter().flatten().filter_map(|r| r.4));
    Ok(Outcome {
        parameters,
        statistics: json!({
            "directions": total,
            "exits": exits,
            "exit_fraction": Estimate::proportion(exits, total),
            "median_exit_t": exit_times.get(exit_times.len() / 2),
        }),
        checks: vec![check(
            "off-end rays leave the origin cell",
            exits as f64 >= 0.95 * total as f64,
            format!("{exits}/{total} exit by t = {t_max}"),
        )],
        artifacts: vec![csv_name],
    })
}

fn nml_probe(mut p: Params, seed: u64, sink: &Sink) -> Result<Outcome> {
    let replicas = p.count("replicas", 100)?;
    let t_max = p.positive("t_max", 10.0)?;
    let dt = p.positive("dt", 0.5)?;
    let patch = Patch {
        radius: p.positive("patch_radius", Patch::default().radius)?,
        n_radial: p.count("n_radial", Patch::default().n_radial as u64)? as usize,
        n_angular: p.count("n_angular", Patch::default().n_angular as u64)? as usize,
    };
    let parameters = p.finish()?;
    let t_grid = grid(t_max, dt);
    let steps: Vec<_> = (0..replicas)
        .into_par_iter()
        .map(|k| {
            let (a, b) = conditioned_pair(&mut rng_stream(seed, k));
            nml_unbounded_probe(&a, &b, &t_grid, patch)
        })
        .collect::<ipvt_core::Result<_>>()?;
    let (mut w, csv_name) = sink.csv(".csv")?;
    w.write_record(["replica", "t", "found", "log_ratio", "bracket"])?;
    for (k, run) in steps.iter().enumerate() {
        for s in run {
            let (lr, br) = s.witness.map_or((None, None), |x| (Some(x.log_ratio), Some(x.bracket)));
            w.serialize((k, s.t, u8::from(s.witness.is_some()), lr, br))?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    let found = steps.iter().filter(|run| run.iter().all(|s| s.witness.is_some())).count() as u64;
    let per_t: Vec<usize> = (0..t_grid.len()).map(|i| steps.iter().filter(|run| run[i].witness.is_some()).count()).collect();
    let series = vec![t_grid.iter().zip(&per_t).map(|(&t, &c)| (t, c as f64 / replicas as f64)).collect::<Vec<_>>()];
    let frame = Frame::new((0.0, t_max), (0.0, 1.0));
    let doc = plot::canvas(&frame, "fraction of replicas with a witness", "t", "fraction").add(plot::lines(&frame, &series));
    let svg_name = sink.svg(".svg", &doc)?;
    Ok(Outcome {
        parameters,
        statistics: json!({
            "replicas_with_all_witnesses": found,
            "fraction_with_all_witnesses": Estimate::proportion(found, replicas),
            "witnesses_per_t": per_t,
        }),
        checks: vec![check(
            "no-man's-land reached at every probed time",
            found as f64 >= 0.95 * replicas as f64,
            format!("{found}/{replicas} replicas"),
        )],
        artifacts: vec![csv_name, svg_name],
    })
}

fn random_isometry(rng: &mut impl Rng) -> ProductIsometry {
    let factor = |rng: &mut dyn rand::RngCore| {
        let p = C64::from_polar(rng.random_range(0.0..0.9), rng.random_range(-PI..PI));
        let m = Mobius::disk_automorphism(rng.random_range(-PI..PI), p).expect("point inside the disk");
        if rng.random::<bool>() {
            m.compose(&Mobius::reflection())
        } else {
            m
        }
    };
    let (g1, g2) = (factor(rng), factor(rng));
    ProductIsometry::new(g1, g2, rng.random::<bool>())
}

fn isometry_check(mut p: Params, seed: u64, sink: &Sink) -> Result<Outcome> {
    let triples = p.count("triples", 10_000)?;
    let replicas = p.count("replicas", 10_000)?;
    let r_cutoff = p.positive("r_cutoff", 20.0)?;
    let tolerance = p.positive("tolerance", 1e-10)?;
    let parameters = p.finish()?;
    let mut rng = rng_stream(seed, 0);
    let (mut w, csv_name) = sink.csv(".csv")?;
    w.write_record(["index", "separation", "transported_separation", "relative_residual"])?;
    let mut worst = 0.0f64;
    for k in 0..triples {
        let g = random_isometry(&mut rng);
        let z = ProductPoint::Disk(
            DiskPoint::from_polar(rng.random_range(0.0..3.0), rng.random_range(-PI..PI))?,
            DiskPoint::from_polar(rng.random_range(0.0..3.0), rng.random_range(-PI..PI))?,
        );
        let q = CoronaPoint::disk(rng.random_range(-PI..PI), rng.random_range(-PI..PI), rng.random_range(0.1..5.0))?;
        let a = separation(&z, &q)?;
        let b = separation(&g.apply(&z)?, &corona_isometry_apply(&g, &q)?)?;
        worst = worst.max(rel(a, b));
        w.serialize((k, a, b, rel(a, b)))?;
    }
    w.flush().map_err(csv::Error::from)?;
    let g = random_isometry(&mut rng_stream(seed, 1));
    let k_max = |m: &Mobius| -> ipvt_core::Result<f64> { Ok(kernel_disk_max(m.inverse().apply_disk(DiskPoint::ORIGIN)?)) };
    let r_box = r_cutoff / (k_max(&g.g1)? * k_max(&g.g2)?);
    let (t0, t1, f0, f1) = (-1.0, 1.5, 0.5, 2.5);
    let expected = (t1 - t0) * (f1 - f0) / (4.0 * PI * PI) * r_box;
    let counts: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|k| {
            let s = sample_corona(r_cutoff, &mut rng_stream(seed, 2 + k))?;
            let mut c = 0.0;
            for q in s.points() {
                let q = corona_isometry_apply(&g, q)?;
                let (t, f) = q.angles();
                if (t0..t1).contains(&t.value()) && (f0..f1).contains(&f.value()) && q.r <= r_box {
                    c += 1.0;
                }
            }
            Ok(c)
        })
        .collect::<ipvt_core::Result<_>>()?;
    let est = Estimate::from_samples(&counts);
    let z = (est.mean - expected) / est.std_err;
    Ok(Outcome {
        parameters,
        statistics: json!({ "max_relative_residual": worst, "box_count": est, "box_expected": expected, "box_z": z }),
        checks: vec![
            check("separation is isometry invariant", worst < tolerance, format!("max relative residual {worst:.2e}")),
            check("transported process has the same box counts", z.abs() <= 3.0, format!("{:.4} vs {expected:.4}, z = {z:.2}", est.mean)),
        ],
        artifacts: vec![csv_name],
    })
}

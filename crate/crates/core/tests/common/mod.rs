//! Reference implementations and fixtures shared by the integration tests.
//! Each oracle is written independently of the library code it checks.
#![allow(dead_code)]

use actseq_core::geometry::Point2;
use actseq_core::inference::ActionDistribution;
use actseq_core::labeling::{compact, ActionLabel, OrderedActionSequence};
use actseq_core::map::{GraphMap, GraphMapBuilder, SegmentId, Turn};
use actseq_core::matching::{Lattice, TransitionWeights};
use actseq_core::pipeline::label_track;
use actseq_core::raster::{
    context_track, render_stack, render_with_frame, target_frame, Channel, Frame, RenderConfig,
    Scene,
};
use actseq_core::smoothing::{smooth_track, Horizon, SmoothedTrack, SmootherConfig};
use actseq_core::synth::{make_map, make_trajectory, SynthKind, SynthSpec, TURN_RADIUS};
use actseq_core::trajectory::{Track, TrackSample, T0_INDEX};
use actseq_core::PipelineConfig;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------- viterbi

/// Random valid map over ids `1..=n`: random successor edges plus a random
/// set of left/right neighbour pairs. Geometry is irrelevant to decoding.
pub fn random_graph<R: Rng>(rng: &mut R, n: u64) -> GraphMap {
    let mut b = GraphMapBuilder::new();
    for id in 1..=n {
        let y = id as f64 * 4.0;
        b.add_segment(actseq_core::map::LaneSegment {
            id: SegmentId(id),
            centerline: vec![Point2::new(0.0, y), Point2::new(10.0, y)],
            turn: Turn::None,
        });
    }
    for a in 1..=n {
        for c in 1..=n {
            if a != c && rng.random_bool(0.2) {
                b.add_successor(SegmentId(a), SegmentId(c));
            }
        }
    }
    let mut ids: Vec<u64> = (1..=n).collect();
    ids.shuffle(rng);
    for pair in ids.chunks_exact(2) {
        if rng.random_bool(0.6) {
            b.add_left_neighbor(SegmentId(pair[0]), SegmentId(pair[1]));
        }
    }
    b.build().expect("random graph is consistent")
}

/// Random lattice with at most `max_paths` state sequences. With
/// `quantized`, emissions take few distinct values so ties are common.
pub fn random_lattice<R: Rng>(
    rng: &mut R,
    n_ids: u64,
    max_steps: usize,
    max_paths: usize,
    quantized: bool,
) -> Lattice {
    let steps = rng.random_range(1..=max_steps);
    let mut budget = max_paths;
    let mut out = Vec::with_capacity(steps);
    for t in 0..steps {
        let remaining = steps - t;
        // Leave room for at least one candidate per remaining step.
        let cap = (budget as f64).powf(1.0 / remaining as f64).floor() as usize;
        let cap = cap.clamp(1, n_ids as usize).min(budget.max(1));
        let size = rng.random_range(1..=cap.max(1));
        let mut ids: Vec<u64> = (1..=n_ids).collect();
        ids.shuffle(rng);
        let step = ids[..size]
            .iter()
            .map(|&id| {
                let e = if quantized {
                    -(rng.random_range(0..4) as f64) * 0.5
                } else {
                    -rng.random_range(0.0..6.0)
                };
                (SegmentId(id), e)
            })
            .collect();
        budget /= size;
        out.push(step);
    }
    Lattice::from_emissions(out)
}

/// Exhaustive enumeration. Scores are summed left to right in the same
/// order the recursion accumulates them, so optimal scores compare exactly.
/// Among optimal paths the one that is smallest when compared from the last
/// step backwards is returned. `None` when every path scores `-inf`.
pub fn brute_force_decode(
    lattice: &Lattice,
    score_fn: impl Fn(SegmentId, SegmentId) -> f64,
) -> Option<(Vec<SegmentId>, f64)> {
    let steps = lattice.steps();
    let mut best: Option<(Vec<SegmentId>, f64)> = None;
    let mut path = Vec::with_capacity(steps.len());

    fn rec(
        steps: &[Vec<actseq_core::matching::Candidate>],
        t: usize,
        acc: f64,
        path: &mut Vec<SegmentId>,
        best: &mut Option<(Vec<SegmentId>, f64)>,
        score_fn: &dyn Fn(SegmentId, SegmentId) -> f64,
    ) {
        if t == steps.len() {
            if acc == f64::NEG_INFINITY {
                return;
            }
            let better = match best {
                None => true,
                Some((bp, bs)) => {
                    acc > *bs || (acc == *bs && path.iter().rev().lt(bp.iter().rev()))
                }
            };
            if better {
                *best = Some((path.clone(), acc));
            }
            return;
        }
        for c in &steps[t] {
            let s = if t == 0 {
                c.log_emission
            } else {
                acc + score_fn(path[t - 1], c.segment) + c.log_emission
            };
            path.push(c.segment);
            rec(steps, t + 1, s, path, best, score_fn);
            path.pop();
        }
    }
    rec(steps, 0, 0.0, &mut path, &mut best, &score_fn);
    best
}

pub fn map_scorer<'a>(
    map: &'a GraphMap,
    w: &'a TransitionWeights,
) -> impl Fn(SegmentId, SegmentId) -> f64 + 'a {
    move |a, b| w.log_weight(map.relation(a, b))
}

// ---------------------------------------------------------------- smoother

pub struct OracleStates {
    pub position: Vec<[f64; 2]>,
    pub velocity: Vec<[f64; 2]>,
    pub acceleration: Vec<[f64; 2]>,
}

/// Textbook forward Kalman filter plus Rauch-Tung-Striebel backward pass on
/// the full 6-state model `[x, y, vx, vy, ax, ay]` with a 0.1 s step and
/// continuous white-jerk process noise. Uses the plain covariance update and
/// explicit inverses.
pub fn rts_oracle(z: &[[f64; 2]], cfg: &SmootherConfig) -> OracleStates {
    let n = z.len();
    let h: f64 = 0.1;
    let q = cfg.sigma_jerk * cfg.sigma_jerk;
    let r = cfg.sigma_meas * cfg.sigma_meas;

    let mut f = DMatrix::<f64>::identity(6, 6);
    let mut qm = DMatrix::<f64>::zeros(6, 6);
    let f1 = [[1.0, h, h * h / 2.0], [0.0, 1.0, h], [0.0, 0.0, 1.0]];
    let q1 = [
        [h.powi(5) / 20.0, h.powi(4) / 8.0, h.powi(3) / 6.0],
        [h.powi(4) / 8.0, h.powi(3) / 3.0, h.powi(2) / 2.0],
        [h.powi(3) / 6.0, h.powi(2) / 2.0, h],
    ];
    for i in 0..3 {
        for j in 0..3 {
            for axis in 0..2 {
                f[(2 * i + axis, 2 * j + axis)] = f1[i][j];
                qm[(2 * i + axis, 2 * j + axis)] = q1[i][j] * q;
            }
        }
    }
    let mut hm = DMatrix::<f64>::zeros(2, 6);
    hm[(0, 0)] = 1.0;
    hm[(1, 1)] = 1.0;
    let rm = DMatrix::<f64>::identity(2, 2) * r;
    let eye = DMatrix::<f64>::identity(6, 6);

    let zv = |k: usize| DVector::from_vec(vec![z[k][0], z[k][1]]);
    let mut x = DVector::<f64>::zeros(6);
    x[0] = z[0][0];
    x[1] = z[0][1];
    x[2] = (z[1][0] - z[0][0]) / h;
    x[3] = (z[1][1] - z[0][1]) / h;
    let mut p = DMatrix::<f64>::identity(6, 6) * 100.0;

    let mut xf = Vec::new();
    let mut pf = Vec::new();
    let mut xp_all = Vec::new();
    let mut pp_all = Vec::new();
    for k in 0..n {
        let (xp, pp) = if k == 0 {
            (x.clone(), p.clone())
        } else {
            (&f * &x, &f * &p * f.transpose() + &qm)
        };
        let s = &hm * &pp * hm.transpose() + &rm;
        let k_gain = &pp * hm.transpose() * s.try_inverse().unwrap();
        x = &xp + &k_gain * (zv(k) - &hm * &xp);
        p = (&eye - &k_gain * &hm) * &pp;
        xf.push(x.clone());
        pf.push(p.clone());
        xp_all.push(xp);
        pp_all.push(pp);
    }
    let mut xs = xf.clone();
    for k in (0..n - 1).rev() {
        let c = &pf[k] * f.transpose() * pp_all[k + 1].clone().try_inverse().unwrap();
        xs[k] = &xf[k] + &c * (&xs[k + 1] - &xp_all[k + 1]);
    }
    OracleStates {
        position: xs.iter().map(|v| [v[0], v[1]]).collect(),
        velocity: xs.iter().map(|v| [v[2], v[3]]).collect(),
        acceleration: xs.iter().map(|v| [v[4], v[5]]).collect(),
    }
}

/// Constant-acceleration track with Gaussian noise (Box-Muller on uniforms).
pub fn noisy_ca_track<R: Rng>(rng: &mut R, n: usize, sigma: f64) -> (Track, Vec<[f64; 2]>) {
    let p0 = [
        rng.random_range(-100.0..100.0),
        rng.random_range(-100.0..100.0),
    ];
    let v0 = [rng.random_range(-15.0..15.0), rng.random_range(-15.0..15.0)];
    let a = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
    let mut truth = Vec::with_capacity(n);
    let mut samples = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 * 0.1;
        let c = [
            p0[0] + v0[0] * t + 0.5 * a[0] * t * t,
            p0[1] + v0[1] * t + 0.5 * a[1] * t * t,
        ];
        truth.push(c);
        samples.push(TrackSample::new(
            k as i64,
            c[0] + sigma * gauss(rng),
            c[1] + sigma * gauss(rng),
        ));
    }
    (Track::new("t", "agent", samples), truth)
}

pub fn gauss<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

// ---------------------------------------------------------------- evaluation

/// AP from an explicit threshold sweep: for each distinct score, from high to
/// low, everything scored at or above it is predicted positive.
pub fn pr_curve_ap(scores: &[f64], positives: &[bool]) -> f64 {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let total = positives.iter().filter(|&&p| p).count() as f64;
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for th in thresholds {
        let mut tp = 0.0;
        let mut predicted = 0.0;
        for (s, &p) in scores.iter().zip(positives) {
            if *s >= th {
                predicted += 1.0;
                if p {
                    tp += 1.0;
                }
            }
        }
        let recall = tp / total;
        ap += (recall - prev_recall) * (tp / predicted);
        prev_recall = recall;
    }
    ap
}

pub fn random_distribution<R: Rng>(rng: &mut R) -> ActionDistribution {
    let rows = (0..30)
        .map(|_| {
            let mut row = [0.0; 5];
            for v in &mut row {
                *v = rng.random::<f64>();
            }
            let s: f64 = row.iter().sum();
            row.map(|v| v / s)
        })
        .collect();
    ActionDistribution::new(rows).unwrap()
}

/// Exhaustive scoring of the five singles and twenty ordered pairs,
/// ranked by score (descending) then class ids.
pub fn blocks_oracle(dist: &ActionDistribution) -> Vec<(Vec<ActionLabel>, f64, Option<usize>)> {
    let rows = dist.rows();
    let t_len = rows.len();
    let mut out = Vec::new();
    for a in ActionLabel::ALL {
        let mut m = f64::INFINITY;
        for row in rows {
            if row[a.id()] < m {
                m = row[a.id()];
            }
        }
        out.push((vec![a], m, None));
    }
    for a1 in ActionLabel::ALL {
        for a2 in ActionLabel::ALL {
            if a1 == a2 {
                continue;
            }
            let mut best = f64::NEG_INFINITY;
            let mut best_ts = 0;
            for ts in 0..t_len - 1 {
                let mut m1 = f64::INFINITY;
                for row in &rows[..=ts] {
                    m1 = m1.min(row[a1.id()]);
                }
                let mut m2 = f64::INFINITY;
                for row in &rows[ts + 1..] {
                    m2 = m2.min(row[a2.id()]);
                }
                if m1 * m2 > best {
                    best = m1 * m2;
                    best_ts = ts;
                }
            }
            out.push((vec![a1, a2], best, Some(best_ts)));
        }
    }
    out.sort_by(|x, y| {
        y.1.partial_cmp(&x.1)
            .unwrap()
            .then_with(|| x.0.iter().map(|a| a.id()).cmp(y.0.iter().map(|a| a.id())))
    });
    out
}

pub fn ordered(labels: &[ActionLabel]) -> OrderedActionSequence {
    OrderedActionSequence::from_labels(labels)
}

/// Spec of `kind` with speed and timing drawn so the maneuver sits well
/// inside the 5 s window.
pub fn random_spec<R: Rng>(rng: &mut R, kind: SynthKind, noise: f64, seed: u64) -> SynthSpec {
    let mut spec = SynthSpec {
        noise,
        seed,
        ..SynthSpec::new(kind)
    };
    match kind {
        SynthKind::Cruise => spec.speed = rng.random_range(3.0..20.0),
        SynthKind::LaneChangeLeft | SynthKind::LaneChangeRight => {
            spec.speed = rng.random_range(5.0..20.0);
            spec.maneuver_time = rng.random_range(1.5..3.4);
        }
        SynthKind::TurnLeft | SynthKind::TurnRight => {
            spec.speed = rng.random_range(6.0..12.0);
            let half = TURN_RADIUS * std::f64::consts::FRAC_PI_2 / spec.speed / 2.0;
            spec.maneuver_time = rng.random_range(half + 0.5..4.4 - half);
        }
        SynthKind::Compound => {}
    }
    spec.validate().expect("drawn spec fits");
    spec
}

/// Smoothed observed history of a random synthetic target plus a few
/// context agents scattered around it, some entering late or leaving early.
pub struct RasterFixture {
    pub map: GraphMap,
    pub target: SmoothedTrack,
    pub others: Vec<SmoothedTrack>,
}

pub fn random_raster_fixture<R: Rng>(rng: &mut R, seed: u64) -> RasterFixture {
    let kind = SynthKind::ALL[rng.random_range(0..5)];
    let spec = random_spec(rng, kind, 0.3, seed);
    let scenario = make_trajectory(&spec).unwrap();
    let cfg = SmootherConfig::default();
    let target = smooth_track(&scenario.track, &cfg, Horizon::Observed).unwrap();
    let t0 = target.ticks[T0_INDEX];
    let p0 = target.position[T0_INDEX];
    let mut others = Vec::new();
    for k in 0..rng.random_range(0..8) {
        let start = p0 + Point2::new(rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0));
        let v = Point2::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
        let first = rng.random_range(0..t0 + 1);
        let last = rng.random_range(first..t0 + 10);
        let samples = (first..=last)
            .filter(|_| rng.random_bool(0.9))
            .map(|tick| {
                let p = start + v * (tick as f64 * 0.1);
                TrackSample::new(tick, p.x, p.y)
            })
            .collect::<Vec<_>>();
        if samples.is_empty() {
            continue;
        }
        let track = Track::new(format!("o{k}"), "agent", samples);
        if let Some(s) = context_track(&track, &cfg, t0).unwrap() {
            others.push(s);
        }
    }
    RasterFixture {
        map: make_map(kind),
        target,
        others,
    }
}

fn rotate_track(t: &SmoothedTrack, center: Point2, angle: f64) -> SmoothedTrack {
    SmoothedTrack {
        position: t
            .position
            .iter()
            .map(|&p| center + (p - center).rotated(angle))
            .collect(),
        velocity: t.velocity.iter().map(|v| v.rotated(angle)).collect(),
        ..t.clone()
    }
}

/// Rendering with augmentation `theta` against a plain render of the
/// pre-rotated world in the unaugmented frame.
pub fn check_rotation(fx: &RasterFixture, cfg: &RenderConfig, theta: f64) -> Result<(), String> {
    let got =
        render_stack(&fx.map, &fx.target, &fx.others, cfg, theta).map_err(|e| e.to_string())?;
    let (frame, _) = target_frame(&fx.target).map_err(|e| e.to_string())?;
    let p0 = frame.origin;
    let map = fx
        .map
        .map_points(|p| p0 + (p - p0).rotated(-theta))
        .map_err(|e| e.to_string())?;
    let target = rotate_track(&fx.target, p0, -theta);
    let others: Vec<_> = fx
        .others
        .iter()
        .map(|o| rotate_track(o, p0, -theta))
        .collect();
    let scene = Scene::collect(&map, &target, &others, p0, cfg).map_err(|e| e.to_string())?;
    let want = render_with_frame(&scene, &frame, cfg);
    if got
        .stack
        .data()
        .iter()
        .zip(want.data())
        .any(|(a, b)| a.to_bits() != b.to_bits())
    {
        return Err(format!(
            "rotation by {theta} differs from the pre-rotated render"
        ));
    }
    Ok(())
}

/// Map constancy, indicator/velocity consistency and the target pixel
/// predicted from the frame transform.
pub fn check_channels(fx: &RasterFixture, cfg: &RenderConfig, theta: f64) -> Result<(), String> {
    let stack = render_stack(&fx.map, &fx.target, &fx.others, cfg, theta)
        .map_err(|e| e.to_string())?
        .stack;
    let (frame, _) = target_frame(&fx.target).map_err(|e| e.to_string())?;
    let frame = Frame {
        heading: frame.heading + theta,
        ..frame
    };
    let n = cfg.grid;
    let map0 = stack.plane(0, Channel::Map);
    for f in 0..stack.frames() {
        if stack.plane(f, Channel::Map) != map0 {
            return Err(format!("map channel of frame {f} differs"));
        }
        for (ind, vx, vy) in [
            (Channel::Target, Channel::TargetVx, Channel::TargetVy),
            (Channel::Other, Channel::OtherVx, Channel::OtherVy),
        ] {
            let (i, x, y) = (stack.plane(f, ind), stack.plane(f, vx), stack.plane(f, vy));
            for p in 0..n * n {
                if (x[p] != 0.0 || y[p] != 0.0) && i[p] == 0.0 {
                    return Err(format!("velocity without indicator at frame {f} pixel {p}"));
                }
                if i[p] != 0.0 && i[p] != 1.0 {
                    return Err(format!("indicator value {} at frame {f}", i[p]));
                }
            }
        }
        // Latest target state at or before the frame tick, else the first one.
        let tick = fx.target.ticks[T0_INDEX] + (cfg.offsets[f] / 0.1).round() as i64;
        let k = (0..=T0_INDEX)
            .rev()
            .find(|&k| fx.target.ticks[k] <= tick)
            .unwrap_or(0);
        let (r, c) = frame.to_pixel(fx.target.position[k], cfg);
        let (r, c) = (r.round(), c.round());
        let inside = r >= 0.0 && c >= 0.0 && r < n as f64 && c < n as f64;
        let lit: Vec<usize> = (0..n * n)
            .filter(|&p| stack.plane(f, Channel::Target)[p] != 0.0)
            .collect();
        let expected: Vec<usize> = if inside {
            vec![r as usize * n + c as usize]
        } else {
            vec![]
        };
        if lit != expected {
            return Err(format!(
                "frame {f}: target pixels {lit:?}, expected {expected:?}"
            ));
        }
        if let Some(&p) = lit.first() {
            let v = fx.target.velocity[k].rotated(-theta);
            if stack.plane(f, Channel::TargetVx)[p] != v.x as f32
                || stack.plane(f, Channel::TargetVy)[p] != v.y as f32
            {
                return Err(format!("frame {f}: target velocity mismatch"));
            }
        }
    }
    let centre = (n / 2) * n + n / 2;
    if stack.plane(stack.frames() - 1, Channel::Target)[centre] != 1.0 {
        return Err("target not at the frame centre at t0".into());
    }
    Ok(())
}

fn dyadic(v: f64) -> f64 {
    (v * 1048576.0).round() / 1048576.0
}

fn dyadic_track(t: &SmoothedTrack) -> SmoothedTrack {
    SmoothedTrack {
        position: t
            .position
            .iter()
            .map(|p| Point2::new(dyadic(p.x), dyadic(p.y)))
            .collect(),
        ..t.clone()
    }
}

/// Shift by `offset` on coordinates snapped to a 2^-20 m grid, where every
/// sum and difference is exact.
pub fn check_translation(
    fx: &RasterFixture,
    cfg: &RenderConfig,
    offset: Point2,
) -> Result<(), String> {
    let offset = Point2::new(
        (offset.x * 1024.0).round() / 1024.0,
        (offset.y * 1024.0).round() / 1024.0,
    );
    let map = fx
        .map
        .map_points(|p| Point2::new(dyadic(p.x), dyadic(p.y)))
        .map_err(|e| e.to_string())?;
    let target = dyadic_track(&fx.target);
    let others: Vec<_> = fx.others.iter().map(dyadic_track).collect();
    let a = render_stack(&map, &target, &others, cfg, 0.0).map_err(|e| e.to_string())?;
    let moved_map = map.map_points(|p| p + offset).map_err(|e| e.to_string())?;
    let moved_others: Vec<_> = others.iter().map(|o| o.translated(offset)).collect();
    let b = render_stack(
        &moved_map,
        &target.translated(offset),
        &moved_others,
        cfg,
        0.0,
    )
    .map_err(|e| e.to_string())?;
    if a.stack
        .data()
        .iter()
        .zip(b.stack.data())
        .any(|(x, y)| x.to_bits() != y.to_bits())
    {
        return Err(format!("shift by {offset:?} changed the stack"));
    }
    Ok(())
}

/// A centerline ending 25 m ahead of a target driving along +x must reach
/// row 0 of the centre column.
pub fn check_resolution_anchor(cfg: &RenderConfig) -> Result<(), String> {
    if cfg.resolution() != 0.390625 {
        return Err(format!("resolution {}", cfg.resolution()));
    }
    let track = Track::new(
        "t",
        "agent",
        (0..20)
            .map(|k| TrackSample::new(k, 5.0 * k as f64 * 0.1, 0.0))
            .collect(),
    );
    let target = smooth_track(&track, &SmootherConfig::default(), Horizon::Observed).unwrap();
    let p0 = target.position[T0_INDEX];
    let map = GraphMapBuilder::new()
        .segment(1, Turn::None, vec![p0, p0 + Point2::new(25.0, 0.0)])
        .build()
        .unwrap();
    let (frame, _) = target_frame(&target).unwrap();
    let (r, c) = frame.to_pixel(p0 + Point2::new(25.0, 0.0), cfg);
    if (r - 0.0).abs() > 1e-6 || (c - 64.0).abs() > 1e-6 {
        return Err(format!("25 m ahead maps to ({r}, {c})"));
    }
    let stack = render_stack(&map, &target, &[], cfg, 0.0).unwrap().stack;
    let (row_top, col) = (0, 64);
    if stack.get(0, Channel::Map, row_top, col) != 1.0 || stack.get(0, Channel::Map, 64, col) != 1.0
    {
        return Err("centerline does not span rows 0..=64".into());
    }
    Ok(())
}

#[derive(Debug, Default, Clone)]
pub struct RecoveryStats {
    pub cases: usize,
    pub ordered_ok: usize,
    pub path_exact: usize,
    pub steps_agree: usize,
    pub steps_total: usize,
    pub failures: Vec<String>,
}

impl RecoveryStats {
    pub fn ordered_rate(&self) -> f64 {
        self.ordered_ok as f64 / self.cases as f64
    }

    pub fn step_rate(&self) -> f64 {
        self.steps_agree as f64 / self.steps_total as f64
    }

    pub fn merge(&mut self, other: RecoveryStats) {
        self.cases += other.cases;
        self.ordered_ok += other.ordered_ok;
        self.path_exact += other.path_exact;
        self.steps_agree += other.steps_agree;
        self.steps_total += other.steps_total;
        self.failures.extend(other.failures);
    }
}

/// Labels `n` random scenarios of `kind` and scores them against the
/// generator's ground truth.
pub fn synth_recovery(kind: SynthKind, noise: f64, n: usize, seed: u64) -> RecoveryStats {
    use rayon::prelude::*;
    let cfg = PipelineConfig::default();
    let per_case: Vec<RecoveryStats> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i << 8) ^ kind as u64);
            let spec = random_spec(
                &mut rng,
                kind,
                noise,
                seed.wrapping_mul(1000).wrapping_add(i),
            );
            let sc = make_trajectory(&spec).unwrap();
            let res = label_track(&sc.track, &make_map(kind), &cfg).unwrap();
            let mut st = RecoveryStats {
                cases: 1,
                steps_total: sc.truth.labels.len(),
                ..Default::default()
            };
            if res
                .path
                .as_ref()
                .is_some_and(|p| p.segments == sc.truth_path.segments)
            {
                st.path_exact = 1;
            }
            match res.outcome.sequence() {
                Some(seq) => {
                    st.steps_agree = seq
                        .labels
                        .iter()
                        .zip(&sc.truth.labels)
                        .filter(|(a, b)| a == b)
                        .count();
                    if compact(seq) == compact(&sc.truth) {
                        st.ordered_ok = 1;
                    } else {
                        st.failures
                            .push(format!("{spec:?}: got {}", compact(seq).display_name()));
                    }
                }
                None => st.failures.push(format!("{spec:?}: {:?}", res.outcome)),
            }
            st
        })
        .collect();
    let mut total = RecoveryStats::default();
    for s in per_case {
        total.merge(s);
    }
    total
}

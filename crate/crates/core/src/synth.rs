//! Synthetic maps and target trajectories with known actions and lane
//! assignments.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::geometry::Point2;
use crate::labeling::{ActionLabel, ActionSequence, LabelSource};
use crate::map::{GraphMap, GraphMapBuilder, SegmentId, Turn};
use crate::matching::LanePath;
use crate::trajectory::{Track, TrackSample, SAMPLE_PERIOD, SCENARIO_LEN};

pub const LANE_WIDTH: f64 = 3.5;
pub const TURN_RADIUS: f64 = 12.0;
/// Time for the lateral blend to go from 1% to 99% of the lane width (s).
pub const BLEND_DURATION: f64 = 2.0;
pub const MAX_SPEED: f64 = 25.0;
pub const TARGET_ID: &str = "1";

const ARC_POINTS: usize = 33;
const LAST_TIME: f64 = (SCENARIO_LEN - 1) as f64 * SAMPLE_PERIOD;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SynthKind {
    Cruise,
    LaneChangeLeft,
    LaneChangeRight,
    TurnLeft,
    TurnRight,
    /// Right turn followed by a left lane change on the exit road.
    Compound,
}

impl SynthKind {
    pub const ALL: [SynthKind; 6] = [
        SynthKind::Cruise,
        SynthKind::LaneChangeLeft,
        SynthKind::LaneChangeRight,
        SynthKind::TurnLeft,
        SynthKind::TurnRight,
        SynthKind::Compound,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SynthKind::Cruise => "cruise",
            SynthKind::LaneChangeLeft => "lane_change_left",
            SynthKind::LaneChangeRight => "lane_change_right",
            SynthKind::TurnLeft => "turn_left",
            SynthKind::TurnRight => "turn_right",
            SynthKind::Compound => "compound",
        }
    }
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SynthKind {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SynthKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| SynthError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("unknown scenario kind {0:?}")]
    UnknownKind(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("maneuver does not fit the 5 s window: {0}")]
    DoesNotFit(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub kind: SynthKind,
    /// Constant speed along the route (m/s).
    pub speed: f64,
    /// Centre of the maneuver (s). For turns this is the midpoint of the arc;
    /// for the compound kind it places the turn, and the lane change starts
    /// when the turn ends.
    pub maneuver_time: f64,
    /// Standard deviation of the position noise (m).
    pub noise: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(kind: SynthKind) -> Self {
        let (speed, maneuver_time) = match kind {
            SynthKind::Compound => (10.0, 1.5),
            _ => (8.0, 2.5),
        };
        Self {
            kind,
            speed,
            maneuver_time,
            noise: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.speed > 0.0 && self.speed <= MAX_SPEED) {
            return Err(SynthError::InvalidSpec(format!(
                "speed must be in (0, {MAX_SPEED}] m/s, got {}",
                self.speed
            )));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(SynthError::InvalidSpec(format!(
                "noise must be >= 0, got {}",
                self.noise
            )));
        }
        if !(0.0..=LAST_TIME).contains(&self.maneuver_time) {
            return Err(SynthError::DoesNotFit(format!(
                "maneuver time {} s outside [0, {LAST_TIME}]",
                self.maneuver_time
            )));
        }
        let half_blend = BLEND_DURATION / 2.0;
        let check = |from: f64, to: f64, what: &str| {
            if from < 0.0 || to > LAST_TIME {
                Err(SynthError::DoesNotFit(format!(
                    "{what} spans [{from:.2}, {to:.2}] s"
                )))
            } else {
                Ok(())
            }
        };
        let arc_time = arc_length() / self.speed;
        match self.kind {
            SynthKind::Cruise => Ok(()),
            SynthKind::LaneChangeLeft | SynthKind::LaneChangeRight => check(
                self.maneuver_time - half_blend,
                self.maneuver_time + half_blend,
                "lane change",
            ),
            SynthKind::TurnLeft | SynthKind::TurnRight => check(
                self.maneuver_time - arc_time / 2.0,
                self.maneuver_time + arc_time / 2.0,
                "turn",
            ),
            SynthKind::Compound => check(
                self.maneuver_time - arc_time / 2.0,
                self.maneuver_time + arc_time / 2.0 + BLEND_DURATION,
                "turn and lane change",
            ),
        }
    }
}

fn arc_length() -> f64 {
    TURN_RADIUS * FRAC_PI_2
}

/// Logistic rate reaching 1% and 99% at `BLEND_DURATION / 2` from the centre.
fn blend_rate() -> f64 {
    99f64.ln() / (BLEND_DURATION / 2.0)
}

fn blend(t: f64, center: f64) -> f64 {
    LANE_WIDTH / (1.0 + (-blend_rate() * (t - center)).exp())
}

/// Times at which the blend is 0.5 m from the old and from the new lane.
pub fn blend_crossings(center: f64, threshold: f64) -> (f64, f64) {
    let d = ((LANE_WIDTH - threshold) / threshold).ln() / blend_rate();
    (center - d, center + d)
}

fn straight(a: Point2, b: Point2) -> Vec<Point2> {
    vec![a, b]
}

/// Quarter arc starting at the origin heading +x; `side` is +1 for left.
fn arc(side: f64) -> Vec<Point2> {
    (0..ARC_POINTS)
        .map(|i| {
            let phi = FRAC_PI_2 * i as f64 / (ARC_POINTS - 1) as f64;
            Point2::new(
                TURN_RADIUS * phi.sin(),
                side * TURN_RADIUS * (1.0 - phi.cos()),
            )
        })
        .collect()
}

fn arc_point(s: f64, side: f64) -> Point2 {
    let phi = s / TURN_RADIUS;
    Point2::new(
        TURN_RADIUS * phi.sin(),
        side * TURN_RADIUS * (1.0 - phi.cos()),
    )
}

fn turn_side(kind: SynthKind) -> f64 {
    match kind {
        SynthKind::TurnLeft => 1.0,
        _ => -1.0,
    }
}

pub fn make_map(kind: SynthKind) -> GraphMap {
    let p = Point2::new;
    let b = GraphMapBuilder::new();
    let b = match kind {
        SynthKind::Cruise => b.segment(1, Turn::None, straight(p(-50.0, 0.0), p(200.0, 0.0))),
        SynthKind::LaneChangeLeft => b
            .segment(1, Turn::None, straight(p(-50.0, 0.0), p(200.0, 0.0)))
            .segment(
                2,
                Turn::None,
                straight(p(-50.0, LANE_WIDTH), p(200.0, LANE_WIDTH)),
            )
            .left_neighbor(1, 2),
        SynthKind::LaneChangeRight => b
            .segment(1, Turn::None, straight(p(-50.0, 0.0), p(200.0, 0.0)))
            .segment(
                2,
                Turn::None,
                straight(p(-50.0, -LANE_WIDTH), p(200.0, -LANE_WIDTH)),
            )
            .left_neighbor(2, 1),
        SynthKind::TurnLeft | SynthKind::TurnRight | SynthKind::Compound => {
            let side = turn_side(kind);
            let (turn, exit) = if side > 0.0 {
                (Turn::Left, p(TURN_RADIUS, TURN_RADIUS))
            } else {
                (Turn::Right, p(TURN_RADIUS, -TURN_RADIUS))
            };
            let b = b
                .segment(1, Turn::None, straight(p(-150.0, 0.0), p(0.0, 0.0)))
                .segment(2, turn, arc(side))
                .segment(3, Turn::None, straight(exit, exit + p(0.0, side * 100.0)))
                .successor(1, 2)
                .successor(2, 3);
            if kind == SynthKind::Compound {
                // Exit heads -y, so its left side is +x.
                let start = exit + p(LANE_WIDTH, 0.0);
                b.segment(4, Turn::None, straight(start, start + p(0.0, -100.0)))
                    .left_neighbor(3, 4)
            } else {
                b
            }
        }
    };
    b.build().expect("synthetic maps are valid")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthScenario {
    pub track: Track,
    pub truth: ActionSequence,
    /// Lane occupied at each sample; the score is left at zero.
    pub truth_path: LanePath,
}

struct Sample {
    position: Point2,
    segment: u64,
    label: ActionLabel,
}

fn lane_change_label(t: f64, center: f64, left: bool) -> Option<ActionLabel> {
    let (t1, t2) = blend_crossings(center, 0.5);
    let i = (t / SAMPLE_PERIOD).round();
    let start = (t1 / SAMPLE_PERIOD).floor();
    let end = (t2 / SAMPLE_PERIOD).ceil();
    (i >= start && i <= end).then_some(if left {
        ActionLabel::LaneChangeLeft
    } else {
        ActionLabel::LaneChangeRight
    })
}

fn noiseless_sample(spec: &SynthSpec, t: f64) -> Sample {
    let v = spec.speed;
    let tm = spec.maneuver_time;
    match spec.kind {
        SynthKind::Cruise => Sample {
            position: Point2::new(v * t, 0.0),
            segment: 1,
            label: ActionLabel::Cruise,
        },
        SynthKind::LaneChangeLeft | SynthKind::LaneChangeRight => {
            let left = spec.kind == SynthKind::LaneChangeLeft;
            let sign = if left { 1.0 } else { -1.0 };
            Sample {
                position: Point2::new(v * t, sign * blend(t, tm)),
                segment: if t > tm { 2 } else { 1 },
                label: lane_change_label(t, tm, left).unwrap_or(ActionLabel::Cruise),
            }
        }
        SynthKind::TurnLeft | SynthKind::TurnRight | SynthKind::Compound => {
            let side = turn_side(spec.kind);
            let len = arc_length();
            let s = v * (t - tm) + len / 2.0;
            let turn_label = if side > 0.0 {
                ActionLabel::TurnLeft
            } else {
                ActionLabel::TurnRight
            };
            if s <= 0.0 {
                return Sample {
                    position: Point2::new(s, 0.0),
                    segment: 1,
                    label: ActionLabel::Cruise,
                };
            }
            if s <= len {
                return Sample {
                    position: arc_point(s, side),
                    segment: 2,
                    label: turn_label,
                };
            }
            let exit =
                Point2::new(TURN_RADIUS, side * TURN_RADIUS) + Point2::new(0.0, side * (s - len));
            if spec.kind != SynthKind::Compound {
                return Sample {
                    position: exit,
                    segment: 3,
                    label: ActionLabel::Cruise,
                };
            }
            let tc = tm + len / (2.0 * v) + BLEND_DURATION / 2.0;
            Sample {
                position: exit + Point2::new(blend(t, tc), 0.0),
                segment: if t > tc { 4 } else { 3 },
                label: lane_change_label(t, tc, true).unwrap_or(ActionLabel::Cruise),
            }
        }
    }
}

/// 50-sample target track for `spec` with its ground truth. Deterministic in
/// the seed.
pub fn make_trajectory(spec: &SynthSpec) -> Result<SynthScenario, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = (spec.noise > 0.0).then(|| Normal::new(0.0, spec.noise).expect("valid sigma"));

    let mut samples = Vec::with_capacity(SCENARIO_LEN);
    let mut labels = Vec::with_capacity(SCENARIO_LEN);
    let mut segments = Vec::with_capacity(SCENARIO_LEN);
    for i in 0..SCENARIO_LEN {
        let s = noiseless_sample(spec, i as f64 * SAMPLE_PERIOD);
        let mut p = s.position;
        if let Some(n) = &normal {
            p.x += n.sample(&mut rng);
            p.y += n.sample(&mut rng);
        }
        samples.push(TrackSample::new(i as i64, p.x, p.y));
        labels.push(s.label);
        segments.push(SegmentId(s.segment));
    }

    let map = make_map(spec.kind);
    let transitions = segments
        .windows(2)
        .map(|w| map.relation(w[0], w[1]))
        .collect();
    Ok(SynthScenario {
        track: Track::new(TARGET_ID, "agent", samples),
        truth: ActionSequence {
            labels,
            source: LabelSource::Manual,
        },
        truth_path: LanePath {
            segments,
            transitions,
            score: 0.0,
        },
    })
}

//! Lane assignment as HMM decoding over the graph map.
//!
//! Hidden states are lane segments near each smoothed position; the emission
//! score is an unnormalized Gaussian in point-to-centerline distance and the
//! transition score comes from the map relation between consecutive segments.
//! Transition weights are costs, not probabilities: rows are not normalized.

use std::io::Write;

use thiserror::Error;

use crate::geometry::{point_polyline_distance, Point2};
use crate::map::{GraphMap, SegmentId, TransitionKind};

/// Radius for candidate lane segments, in meters.
pub const DEFAULT_CANDIDATE_RADIUS: f64 = 5.0;

#[derive(Debug, Error, PartialEq)]
pub enum MatchError {
    #[error("no lane segment within {radius} m of sample {step}")]
    OffMap { step: usize, radius: f64 },
    #[error("no path through the lattice avoids unconnected transitions")]
    NoValidPath,
    #[error("lattice is empty")]
    EmptyLattice,
    #[error("invalid matching config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionWeights {
    pub successor: f64,
    pub predecessor: f64,
    pub neighbor: f64,
    pub self_loop: f64,
    /// Skew weight for transitions between unconnected segments.
    pub alpha: f64,
}

impl Default for TransitionWeights {
    fn default() -> Self {
        Self {
            successor: 1.0,
            predecessor: 0.5,
            neighbor: 0.3,
            self_loop: 1.0,
            alpha: 0.001,
        }
    }
}

impl TransitionWeights {
    pub fn validate(&self) -> Result<(), MatchError> {
        for (name, w) in [
            ("successor", self.successor),
            ("predecessor", self.predecessor),
            ("neighbor", self.neighbor),
            ("self", self.self_loop),
        ] {
            if !(w > 0.0 && w <= 1.0) {
                return Err(MatchError::Config(format!(
                    "{name} weight must be in (0, 1], got {w}"
                )));
            }
        }
        if !(self.alpha >= 0.0 && self.alpha <= 1.0) {
            return Err(MatchError::Config(format!(
                "alpha must be in [0, 1], got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    pub fn weight(&self, kind: TransitionKind) -> f64 {
        match kind {
            TransitionKind::SelfLoop => self.self_loop,
            TransitionKind::Successor => self.successor,
            TransitionKind::Predecessor => self.predecessor,
            TransitionKind::NeighborLeft | TransitionKind::NeighborRight => self.neighbor,
            TransitionKind::Unconnected => self.alpha,
        }
    }

    /// Natural log of [`Self::weight`]; `-inf` for a zero weight.
    pub fn log_weight(&self, kind: TransitionKind) -> f64 {
        self.weight(kind).ln()
    }

    /// Every weight multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            successor: self.successor * c,
            predecessor: self.predecessor * c,
            neighbor: self.neighbor * c,
            self_loop: self.self_loop * c,
            alpha: self.alpha * c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmissionModel {
    /// Lateral standard deviation around the centerline (m).
    pub sigma: f64,
}

impl Default for EmissionModel {
    fn default() -> Self {
        Self { sigma: 1.0 }
    }
}

impl EmissionModel {
    pub fn validate(&self) -> Result<(), MatchError> {
        if self.sigma > 0.0 && self.sigma.is_finite() {
            Ok(())
        } else {
            Err(MatchError::Config(format!(
                "emission sigma must be > 0, got {}",
                self.sigma
            )))
        }
    }

    pub fn log_weight(&self, distance: f64) -> f64 {
        -(distance * distance) / (2.0 * self.sigma * self.sigma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub segment: SegmentId,
    pub log_emission: f64,
}

/// Candidate states per step, each step sorted by ascending segment id.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    steps: Vec<Vec<Candidate>>,
}

impl Lattice {
    /// Builds a lattice from raw `(segment, log_emission)` lists. Panics if a
    /// step is empty or lists a segment twice.
    pub fn from_emissions(steps: Vec<Vec<(SegmentId, f64)>>) -> Self {
        let steps = steps
            .into_iter()
            .map(|mut step| {
                assert!(!step.is_empty(), "lattice step without candidates");
                step.sort_by_key(|c| c.0);
                assert!(
                    step.windows(2).all(|w| w[0].0 != w[1].0),
                    "duplicate candidate in lattice step"
                );
                step.into_iter()
                    .map(|(segment, log_emission)| Candidate {
                        segment,
                        log_emission,
                    })
                    .collect()
            })
            .collect();
        Self { steps }
    }

    pub fn steps(&self) -> &[Vec<Candidate>] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Copy with `segment` removed from every step (steps it would empty are kept).
    pub fn without(&self, segment: SegmentId) -> Lattice {
        let steps = self
            .steps
            .iter()
            .map(|step| {
                let kept: Vec<Candidate> = step
                    .iter()
                    .copied()
                    .filter(|c| c.segment != segment)
                    .collect();
                if kept.is_empty() {
                    step.clone()
                } else {
                    kept
                }
            })
            .collect();
        Lattice { steps }
    }
}

/// Candidate segments within `radius` of each position, with emission scores.
pub fn build_lattice(
    map: &GraphMap,
    positions: &[Point2],
    radius: f64,
    emission: &EmissionModel,
) -> Result<Lattice, MatchError> {
    if positions.is_empty() {
        return Err(MatchError::EmptyLattice);
    }
    let mut steps = Vec::with_capacity(positions.len());
    for (step, &p) in positions.iter().enumerate() {
        let ids = map.segments_within(p, radius);
        if ids.is_empty() {
            return Err(MatchError::OffMap { step, radius });
        }
        steps.push(
            ids.into_iter()
                .map(|id| {
                    let seg = map.segment(id).expect("id from map query");
                    Candidate {
                        segment: id,
                        log_emission: emission
                            .log_weight(point_polyline_distance(p, &seg.centerline)),
                    }
                })
                .collect(),
        );
    }
    Ok(Lattice { steps })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LanePath {
    pub segments: Vec<SegmentId>,
    /// `transitions[i]` is the relation from sample `i` to sample `i + 1`.
    pub transitions: Vec<TransitionKind>,
    pub score: f64,
}

impl LanePath {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn has_unconnected(&self) -> bool {
        self.transitions.contains(&TransitionKind::Unconnected)
    }

    /// Predecessor moves are legal but unusual (reversing or map artifacts).
    pub fn has_predecessor(&self) -> bool {
        self.transitions.contains(&TransitionKind::Predecessor)
    }

    /// Debug dump: `PATH <sample_index> <segment_id> <transition_kind>`, where
    /// the kind is the transition into the sample (`start` for the first).
    pub fn write_lines<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (i, seg) in self.segments.iter().enumerate() {
            let kind = if i == 0 {
                "start"
            } else {
                self.transitions[i - 1].as_str()
            };
            writeln!(out, "PATH {i} {seg} {kind}")?;
        }
        Ok(())
    }
}

/// Max-product decoding with transition scores taken from the map relation.
pub fn viterbi_decode(
    lattice: &Lattice,
    map: &GraphMap,
    weights: &TransitionWeights,
) -> Result<LanePath, MatchError> {
    decode_with(lattice, |from, to| {
        let kind = map.relation(from, to);
        (kind, weights.log_weight(kind))
    })
}

/// Viterbi over `lattice` with an arbitrary transition scorer returning the
/// transition kind and its log weight.
///
/// Ties at a backpointer go to the predecessor with the smaller segment id;
/// ties at the final step go to the smaller segment id.
pub fn decode_with<F>(lattice: &Lattice, mut transition: F) -> Result<LanePath, MatchError>
where
    F: FnMut(SegmentId, SegmentId) -> (TransitionKind, f64),
{
    let steps = &lattice.steps;
    let first = steps.first().ok_or(MatchError::EmptyLattice)?;
    let mut score: Vec<f64> = first.iter().map(|c| c.log_emission).collect();
    let mut back: Vec<Vec<(usize, TransitionKind)>> = Vec::with_capacity(steps.len());
    back.push(Vec::new());

    for t in 1..steps.len() {
        let prev = &steps[t - 1];
        let mut next_score = Vec::with_capacity(steps[t].len());
        let mut pointers = Vec::with_capacity(steps[t].len());
        for cand in &steps[t] {
            let mut best = f64::NEG_INFINITY;
            let mut best_ptr = (0, TransitionKind::Unconnected);
            let mut found = false;
            for (i, p) in prev.iter().enumerate() {
                let (kind, logw) = transition(p.segment, cand.segment);
                let s = score[i] + logw;
                if !found || s > best {
                    best = s;
                    best_ptr = (i, kind);
                    found = true;
                }
            }
            next_score.push(best + cand.log_emission);
            pointers.push(best_ptr);
        }
        score = next_score;
        back.push(pointers);
    }

    let (mut idx, &best) = score
        .iter()
        .enumerate()
        .fold(None::<(usize, &f64)>, |acc, (i, s)| match acc {
            Some((_, b)) if *s <= *b => acc,
            _ => Some((i, s)),
        })
        .expect("non-empty step");
    if best == f64::NEG_INFINITY {
        return Err(MatchError::NoValidPath);
    }

    let n = steps.len();
    let mut segments = vec![SegmentId(0); n];
    let mut transitions = vec![TransitionKind::SelfLoop; n - 1];
    for t in (0..n).rev() {
        segments[t] = steps[t][idx].segment;
        if t > 0 {
            let (prev, kind) = back[t][idx];
            transitions[t - 1] = kind;
            idx = prev;
        }
    }
    Ok(LanePath {
        segments,
        transitions,
        score: best,
    })
}

//! Rule-based action extraction from decoded lane paths, ordered-sequence
//! compaction, dataset statistics, and the label file format.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use thiserror::Error;

use crate::map::{GraphMap, SegmentId, TransitionKind, Turn};
use crate::matching::LanePath;
use crate::smoothing::SmoothedTrack;
use crate::trajectory::{FUTURE_LEN, OBSERVED_LEN, SAMPLE_PERIOD, SCENARIO_LEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ActionLabel {
    Cruise = 0,
    TurnLeft = 1,
    TurnRight = 2,
    LaneChangeLeft = 3,
    LaneChangeRight = 4,
}

pub const NUM_CLASSES: usize = 5;

impl ActionLabel {
    pub const ALL: [ActionLabel; NUM_CLASSES] = [
        ActionLabel::Cruise,
        ActionLabel::TurnLeft,
        ActionLabel::TurnRight,
        ActionLabel::LaneChangeLeft,
        ActionLabel::LaneChangeRight,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<ActionLabel> {
        Self::ALL.get(id).copied()
    }

    pub fn abbrev(self) -> &'static str {
        match self {
            ActionLabel::Cruise => "c",
            ActionLabel::TurnLeft => "tl",
            ActionLabel::TurnRight => "tr",
            ActionLabel::LaneChangeLeft => "ll",
            ActionLabel::LaneChangeRight => "lr",
        }
    }

    pub fn is_lane_change(self) -> bool {
        matches!(
            self,
            ActionLabel::LaneChangeLeft | ActionLabel::LaneChangeRight
        )
    }

    pub fn is_turn(self) -> bool {
        matches!(self, ActionLabel::TurnLeft | ActionLabel::TurnRight)
    }
}

impl fmt::Display for ActionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.abbrev())
    }
}

impl FromStr for ActionLabel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ActionLabel::ALL
            .into_iter()
            .find(|a| a.abbrev() == s)
            .ok_or_else(|| format!("unknown action `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelSource {
    #[default]
    Auto,
    Manual,
}

/// One action label per track sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSequence {
    pub labels: Vec<ActionLabel>,
    pub source: LabelSource,
}

impl ActionSequence {
    pub fn auto(labels: Vec<ActionLabel>) -> Self {
        Self {
            labels,
            source: LabelSource::Auto,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Action order with consecutive duplicates removed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OrderedActionSequence(Vec<ActionLabel>);

impl OrderedActionSequence {
    /// Compacts `labels`; the result never has two equal neighbours.
    pub fn from_labels(labels: &[ActionLabel]) -> Self {
        let mut out: Vec<ActionLabel> = Vec::with_capacity(labels.len().min(8));
        for &l in labels {
            if out.last() != Some(&l) {
                out.push(l);
            }
        }
        Self(out)
    }

    pub fn labels(&self) -> &[ActionLabel] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Human-readable form, e.g. `ll, c`.
    pub fn display_name(&self) -> String {
        self.0
            .iter()
            .map(|a| a.abbrev())
            .collect::<Vec<_>>()
            .join(", ")
    }
}

impl fmt::Display for OrderedActionSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display_name())
    }
}

pub fn compact(seq: &ActionSequence) -> OrderedActionSequence {
    OrderedActionSequence::from_labels(&seq.labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnlabelableReason {
    UnconnectedTransition,
    OffMap,
}

impl UnlabelableReason {
    pub fn as_str(self) -> &'static str {
        match self {
            UnlabelableReason::UnconnectedTransition => "unconnected_transition",
            UnlabelableReason::OffMap => "off_map",
        }
    }
}

impl FromStr for UnlabelableReason {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unconnected_transition" => Ok(UnlabelableReason::UnconnectedTransition),
            "off_map" => Ok(UnlabelableReason::OffMap),
            _ => Err(format!("unknown unlabelable reason `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelingOutcome {
    Labeled(ActionSequence),
    Unlabelable(UnlabelableReason),
}

impl LabelingOutcome {
    pub fn sequence(&self) -> Option<&ActionSequence> {
        match self {
            LabelingOutcome::Labeled(s) => Some(s),
            LabelingOutcome::Unlabelable(_) => None,
        }
    }
}

/// Thresholds for locating the start and end of a lane change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManeuverConfig {
    /// Lateral offset (m) below which the vehicle counts as on a centerline.
    pub offset_threshold: f64,
    /// Consecutive samples within the threshold needed to count as stabilized.
    pub stable_samples: usize,
    /// Maximum extent of the interval on either side of the transition (s).
    pub clip_seconds: f64,
    /// Half-width of the fallback interval for degenerate geometry (s).
    pub fallback_seconds: f64,
}

impl Default for ManeuverConfig {
    fn default() -> Self {
        Self {
            offset_threshold: 0.5,
            stable_samples: 3,
            clip_seconds: 1.5,
            fallback_seconds: 0.5,
        }
    }
}

impl ManeuverConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.offset_threshold > 0.0) {
            return Err(format!(
                "maneuver offset threshold must be > 0, got {}",
                self.offset_threshold
            ));
        }
        if self.stable_samples == 0 {
            return Err("maneuver stable samples must be >= 1".into());
        }
        if !(self.clip_seconds > 0.0) || !(self.fallback_seconds > 0.0) {
            return Err("maneuver clip and fallback durations must be > 0".into());
        }
        Ok(())
    }

    fn samples(seconds: f64) -> usize {
        (seconds / SAMPLE_PERIOD).round() as usize
    }
}

/// Sample interval `[start, end]` (inclusive) of a lane change whose first
/// sample on `new_segment` is `transition_index`.
///
/// `start` is the last sample before the transition still within the offset
/// threshold of the old centerline; `end` is the first sample from the
/// transition on that is within the threshold of the new centerline and stays
/// there for `stable_samples` samples. Both searches are limited to the clip
/// window. If either search fails, or the vehicle is never observed between
/// the lanes, the fallback window around the transition is returned.
pub fn maneuver_interval(
    smoothed: &SmoothedTrack,
    map: &GraphMap,
    old_segment: SegmentId,
    new_segment: SegmentId,
    transition_index: usize,
    cfg: &ManeuverConfig,
) -> (usize, usize) {
    let n = smoothed.len();
    assert!(
        transition_index > 0 && transition_index < n,
        "transition index out of range"
    );
    let offset = |seg: SegmentId, i: usize| {
        map.distance_to_segment(smoothed.position[i], seg)
            .expect("path segments exist in the map")
    };
    let old: Vec<f64> = (0..n).map(|i| offset(old_segment, i)).collect();
    let new: Vec<f64> = (0..n).map(|i| offset(new_segment, i)).collect();
    interval_from_offsets(&old, &new, transition_index, cfg)
}

/// [`maneuver_interval`] on precomputed lateral offsets.
pub fn interval_from_offsets(
    old_offsets: &[f64],
    new_offsets: &[f64],
    k: usize,
    cfg: &ManeuverConfig,
) -> (usize, usize) {
    let n = old_offsets.len();
    let clip = ManeuverConfig::samples(cfg.clip_seconds);
    let lo = k.saturating_sub(clip);
    let hi = (k + clip).min(n - 1);
    let thr = cfg.offset_threshold;

    let start = (lo..k).rev().find(|&j| old_offsets[j] <= thr);
    let end = (k..=hi).find(|&j| {
        let run_end = (j + cfg.stable_samples).min(n);
        new_offsets[j..run_end].iter().all(|&d| d <= thr)
    });
    match (start, end) {
        (Some(s), Some(e)) if e > s + 1 => (s, e),
        _ => {
            let fb = ManeuverConfig::samples(cfg.fallback_seconds);
            (k.saturating_sub(fb), (k + fb).min(n - 1))
        }
    }
}

/// Per-sample labels: turns from segment annotations, lane changes over
/// their maneuver interval (taking precedence over turns), cruise elsewhere.
pub fn extract_actions(
    path: &LanePath,
    smoothed: &SmoothedTrack,
    map: &GraphMap,
    cfg: &ManeuverConfig,
) -> LabelingOutcome {
    assert_eq!(
        path.len(),
        smoothed.len(),
        "lane path and track must be aligned"
    );
    if path.has_unconnected() {
        return LabelingOutcome::Unlabelable(UnlabelableReason::UnconnectedTransition);
    }
    let mut labels: Vec<ActionLabel> = path
        .segments
        .iter()
        .map(|&id| match map.segment(id).map(|s| s.turn) {
            Some(Turn::Left) => ActionLabel::TurnLeft,
            Some(Turn::Right) => ActionLabel::TurnRight,
            _ => ActionLabel::Cruise,
        })
        .collect();
    for (i, kind) in path.transitions.iter().enumerate() {
        let label = match kind {
            TransitionKind::NeighborLeft => ActionLabel::LaneChangeLeft,
            TransitionKind::NeighborRight => ActionLabel::LaneChangeRight,
            _ => continue,
        };
        let k = i + 1;
        let (start, end) =
            maneuver_interval(smoothed, map, path.segments[i], path.segments[k], k, cfg);
        for l in &mut labels[start..=end] {
            *l = label;
        }
    }
    LabelingOutcome::Labeled(ActionSequence::auto(labels))
}

#[derive(Debug, Error, PartialEq)]
pub enum LabelError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("expected a {expected}-step sequence, got {found}")]
    WrongLength { expected: usize, found: usize },
    #[error("cannot mix per-step and ordered sequences in one statistic")]
    MixedKinds,
    #[error("no label sequences given")]
    Empty,
    #[error("{0}")]
    Io(String),
}

/// The 30 future labels (indices 20..=49) of a full-length sequence.
pub fn future_horizon(seq: &ActionSequence) -> Result<Vec<ActionLabel>, LabelError> {
    if seq.len() != SCENARIO_LEN {
        return Err(LabelError::WrongLength {
            expected: SCENARIO_LEN,
            found: seq.len(),
        });
    }
    Ok(seq.labels[OBSERVED_LEN..OBSERVED_LEN + FUTURE_LEN].to_vec())
}

/// A sequence for statistics: per-step (auto labels) or ordered (annotations).
#[derive(Debug, Clone, PartialEq)]
pub enum LabelRecord {
    PerStep(ActionSequence),
    Ordered(OrderedActionSequence),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetStats {
    /// Class proportions indexed by [`ActionLabel::id`].
    pub proportions: [f64; NUM_CLASSES],
    pub sequences: usize,
}

/// Class proportions. Per-step records count every sample; ordered records
/// give each element `1 / len` of the sequence's unit weight.
pub fn dataset_statistics(records: &[LabelRecord]) -> Result<DatasetStats, LabelError> {
    let first = records.first().ok_or(LabelError::Empty)?;
    let mut mass = [0.0f64; NUM_CLASSES];
    match first {
        LabelRecord::PerStep(_) => {
            let mut counts = [0u64; NUM_CLASSES];
            for r in records {
                let LabelRecord::PerStep(seq) = r else {
                    return Err(LabelError::MixedKinds);
                };
                for l in &seq.labels {
                    counts[l.id()] += 1;
                }
            }
            let total: u64 = counts.iter().sum();
            if total == 0 {
                return Err(LabelError::Empty);
            }
            for (m, c) in mass.iter_mut().zip(counts) {
                *m = c as f64 / total as f64;
            }
        }
        LabelRecord::Ordered(_) => {
            for r in records {
                let LabelRecord::Ordered(seq) = r else {
                    return Err(LabelError::MixedKinds);
                };
                if seq.is_empty() {
                    return Err(LabelError::Empty);
                }
                let w = 1.0 / seq.len() as f64;
                for l in seq.labels() {
                    mass[l.id()] += w;
                }
            }
            let n = records.len() as f64;
            for m in &mut mass {
                *m /= n;
            }
        }
    }
    Ok(DatasetStats {
        proportions: mass,
        sequences: records.len(),
    })
}

/// One line of a label file.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelLine {
    pub scenario_id: String,
    pub entry: LabelEntry,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LabelEntry {
    /// `OK` followed by 50 class ids.
    Labeled(ActionSequence),
    /// `UNLABELABLE` followed by the reason.
    Unlabelable(UnlabelableReason),
    /// `ORDERED` followed by one or more class ids (manual annotations).
    Ordered(OrderedActionSequence),
}

impl LabelLine {
    pub fn from_outcome(scenario_id: impl Into<String>, outcome: &LabelingOutcome) -> Self {
        let entry = match outcome {
            LabelingOutcome::Labeled(seq) => LabelEntry::Labeled(seq.clone()),
            LabelingOutcome::Unlabelable(r) => LabelEntry::Unlabelable(*r),
        };
        Self {
            scenario_id: scenario_id.into(),
            entry,
        }
    }
}

pub fn write_label_line<W: Write>(line: &LabelLine, mut out: W) -> std::io::Result<()> {
    write!(out, "{}", line.scenario_id)?;
    match &line.entry {
        LabelEntry::Labeled(seq) => {
            write!(out, " OK")?;
            for l in &seq.labels {
                write!(out, " {}", l.id())?;
            }
        }
        LabelEntry::Unlabelable(r) => write!(out, " UNLABELABLE {}", r.as_str())?,
        LabelEntry::Ordered(seq) => {
            write!(out, " ORDERED")?;
            for l in seq.labels() {
                write!(out, " {}", l.id())?;
            }
        }
    }
    writeln!(out)
}

pub fn write_label_file<W: Write>(lines: &[LabelLine], mut out: W) -> std::io::Result<()> {
    for l in lines {
        write_label_line(l, &mut out)?;
    }
    Ok(())
}

pub fn read_label_file<R: BufRead>(reader: R) -> Result<Vec<LabelLine>, LabelError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| LabelError::Io(e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let perr = |message: String| LabelError::Parse {
            line: lineno,
            message,
        };
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() < 3 {
            return Err(perr("expected `<scenario_id> <status> ...`".into()));
        }
        let ids = || {
            fields[2..]
                .iter()
                .map(|s| {
                    s.parse::<usize>()
                        .ok()
                        .and_then(ActionLabel::from_id)
                        .ok_or_else(|| perr(format!("invalid class id `{s}`")))
                })
                .collect::<Result<Vec<_>, _>>()
        };
        let entry = match fields[1] {
            "OK" => {
                let labels = ids()?;
                if labels.len() != SCENARIO_LEN {
                    return Err(perr(format!(
                        "OK line needs {SCENARIO_LEN} class ids, got {}",
                        labels.len()
                    )));
                }
                LabelEntry::Labeled(ActionSequence::auto(labels))
            }
            "UNLABELABLE" => {
                if fields.len() != 3 {
                    return Err(perr("UNLABELABLE line takes exactly one reason".into()));
                }
                LabelEntry::Unlabelable(fields[2].parse().map_err(perr)?)
            }
            "ORDERED" => {
                let labels = ids()?;
                let seq = OrderedActionSequence::from_labels(&labels);
                if seq.len() != labels.len() {
                    return Err(perr(
                        "ORDERED sequence repeats an action consecutively".into(),
                    ));
                }
                LabelEntry::Ordered(seq)
            }
            other => return Err(perr(format!("unknown status `{other}`"))),
        };
        out.push(LabelLine {
            scenario_id: fields[0].to_string(),
            entry,
        });
    }
    Ok(out)
}

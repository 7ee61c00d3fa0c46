//! k-nearest-neighbour baseline: neighbours are found on agent-frame observed
//! positions and their future action labels are averaged per step.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::geometry::Point2;
use crate::inference::ActionDistribution;
use crate::labeling::{future_horizon, ActionLabel, LabelingOutcome, NUM_CLASSES};
use crate::smoothing::SmoothedTrack;
use crate::trajectory::{FUTURE_LEN, OBSERVED_LEN, T0_INDEX};

pub const FEATURE_LEN: usize = 2 * OBSERVED_LEN;

/// Neighbour counts offered by the CLI.
pub const K_CHOICES: [usize; 3] = [9, 50, 100];

#[derive(Debug, Error, PartialEq)]
pub enum KnnError {
    #[error("no labeled scenarios to index")]
    EmptyIndex,
    #[error("k = {k} outside [1, {size}]")]
    KOutOfRange { k: usize, size: usize },
    #[error("observed track has {0} samples, need {OBSERVED_LEN}")]
    ShortObservation(usize),
    #[error("feature is not finite")]
    NonFinite,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Io(String),
}

/// Observed positions in the agent frame: origin at the last observed
/// position, +x along the heading there. Layout `[x0, y0, x1, y1, ...]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryFeature(pub [f64; FEATURE_LEN]);

impl TrajectoryFeature {
    /// Builds the feature from an observed-window smoothed track. A missing
    /// heading falls back to the map +x axis.
    pub fn from_observed(observed: &SmoothedTrack) -> Result<Self, KnnError> {
        if observed.len() < OBSERVED_LEN {
            return Err(KnnError::ShortObservation(observed.len()));
        }
        let origin = observed.position[T0_INDEX];
        let heading = observed.heading[T0_INDEX].unwrap_or(0.0);
        let mut out = [0.0; FEATURE_LEN];
        for (i, p) in observed.position[..OBSERVED_LEN].iter().enumerate() {
            let local = (*p - origin).rotated(-heading);
            out[2 * i] = local.x;
            out[2 * i + 1] = local.y;
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(KnnError::NonFinite);
        }
        Ok(Self(out))
    }

    pub fn point(&self, i: usize) -> Point2 {
        Point2::new(self.0[2 * i], self.0[2 * i + 1])
    }

    fn distance2(&self, other: &TrajectoryFeature) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingIndex {
    features: Vec<TrajectoryFeature>,
    targets: Vec<[ActionLabel; FUTURE_LEN]>,
}

impl TrainingIndex {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn push(&mut self, feature: TrajectoryFeature, target: [ActionLabel; FUTURE_LEN]) {
        self.features.push(feature);
        self.targets.push(target);
    }

    pub fn features(&self) -> &[TrajectoryFeature] {
        &self.features
    }

    pub fn targets(&self) -> &[[ActionLabel; FUTURE_LEN]] {
        &self.targets
    }
}

/// Indexes every labeled scenario; returns the index and the number of
/// unlabelable scenarios skipped.
pub fn build_index<'a, I>(scenarios: I) -> Result<(TrainingIndex, usize), KnnError>
where
    I: IntoIterator<Item = (TrajectoryFeature, &'a LabelingOutcome)>,
{
    let mut index = TrainingIndex::default();
    let mut skipped = 0;
    for (feature, outcome) in scenarios {
        match outcome {
            LabelingOutcome::Labeled(seq) => {
                let future = future_horizon(seq).map_err(|e| KnnError::Io(e.to_string()))?;
                let target: [ActionLabel; FUTURE_LEN] =
                    future.try_into().expect("future horizon length");
                index.push(feature, target);
            }
            LabelingOutcome::Unlabelable(_) => skipped += 1,
        }
    }
    if index.is_empty() {
        return Err(KnnError::EmptyIndex);
    }
    Ok((index, skipped))
}

/// Indices of the `k` nearest features; equal distances keep insertion order.
pub fn nearest(
    index: &TrainingIndex,
    query: &TrajectoryFeature,
    k: usize,
) -> Result<Vec<usize>, KnnError> {
    if k == 0 || k > index.len() {
        return Err(KnnError::KOutOfRange {
            k,
            size: index.len(),
        });
    }
    let mut order: Vec<(f64, usize)> = index
        .features
        .iter()
        .enumerate()
        .map(|(i, f)| (f.distance2(query), i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(order.into_iter().take(k).map(|(_, i)| i).collect())
}

pub fn predict(
    index: &TrainingIndex,
    query: &TrajectoryFeature,
    k: usize,
) -> Result<ActionDistribution, KnnError> {
    let neighbours = nearest(index, query, k)?;
    let mut counts = [[0usize; NUM_CLASSES]; FUTURE_LEN];
    for &i in &neighbours {
        for (t, label) in index.targets[i].iter().enumerate() {
            counts[t][label.id()] += 1;
        }
    }
    let rows = counts
        .iter()
        .map(|row| row.map(|c| c as f64 / k as f64))
        .collect();
    Ok(ActionDistribution::new(rows).expect("neighbour frequencies form distributions"))
}

/// `KNN1 <n>` header, then one line per record: 40 feature values and 30 class ids.
pub fn write_index<W: Write>(index: &TrainingIndex, mut out: W) -> std::io::Result<()> {
    writeln!(out, "KNN1 {}", index.len())?;
    for (f, t) in index.features.iter().zip(&index.targets) {
        let mut fields: Vec<String> = f.0.iter().map(|v| v.to_string()).collect();
        fields.extend(t.iter().map(|l| l.id().to_string()));
        writeln!(out, "{}", fields.join(" "))?;
    }
    Ok(())
}

pub fn read_index<R: BufRead>(reader: R) -> Result<TrainingIndex, KnnError> {
    let mut lines = reader.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, Ok(l))) if l.trim().is_empty() => continue,
            Some((_, Ok(l))) => break l,
            Some((_, Err(e))) => return Err(KnnError::Io(e.to_string())),
            None => {
                return Err(KnnError::Parse {
                    line: 1,
                    message: "missing `KNN1 <n>` header".into(),
                })
            }
        }
    };
    let count: usize = header
        .trim()
        .strip_prefix("KNN1 ")
        .and_then(|n| n.trim().parse().ok())
        .ok_or_else(|| KnnError::Parse {
            line: 1,
            message: format!("expected `KNN1 <n>`, found `{header}`"),
        })?;
    let mut index = TrainingIndex::default();
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line.map_err(|e| KnnError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let perr = |message: String| KnnError::Parse {
            line: lineno,
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != FEATURE_LEN + FUTURE_LEN {
            return Err(perr(format!(
                "expected {} fields, got {}",
                FEATURE_LEN + FUTURE_LEN,
                fields.len()
            )));
        }
        let mut feature = [0.0; FEATURE_LEN];
        for (dst, s) in feature.iter_mut().zip(&fields[..FEATURE_LEN]) {
            *dst = s
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| perr(format!("invalid feature value `{s}`")))?;
        }
        let mut target = [ActionLabel::Cruise; FUTURE_LEN];
        for (dst, s) in target.iter_mut().zip(&fields[FEATURE_LEN..]) {
            *dst = s
                .parse::<usize>()
                .ok()
                .and_then(ActionLabel::from_id)
                .ok_or_else(|| perr(format!("invalid class id `{s}`")))?;
        }
        index.push(TrajectoryFeature(feature), target);
    }
    if index.len() != count {
        return Err(KnnError::Parse {
            line: 1,
            message: format!("header declares {count} records, found {}", index.len()),
        });
    }
    Ok(index)
}

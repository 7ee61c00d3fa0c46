//! Sequence probabilities from per-step class distributions and extraction of
//! the most likely ordered sequences of at most two actions.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::labeling::{ActionLabel, OrderedActionSequence, NUM_CLASSES};
use crate::trajectory::FUTURE_LEN;

const ROW_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum InferenceError {
    #[error("distribution needs {expected} rows, got {found}")]
    RowCount { expected: usize, found: usize },
    #[error("row {row}: {message}")]
    InvalidRow { row: usize, message: String },
    #[error("sequence has {found} labels, distribution has {expected} steps")]
    LengthMismatch { expected: usize, found: usize },
    #[error("transition step {t_s} outside [0, {max}]")]
    InvalidSplit { t_s: usize, max: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Io(String),
}

/// Per-step class probabilities over the 30-step future horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    rows: Vec<[f64; NUM_CLASSES]>,
}

impl ActionDistribution {
    pub fn new(rows: Vec<[f64; NUM_CLASSES]>) -> Result<Self, InferenceError> {
        if rows.len() != FUTURE_LEN {
            return Err(InferenceError::RowCount {
                expected: FUTURE_LEN,
                found: rows.len(),
            });
        }
        for (row, r) in rows.iter().enumerate() {
            if let Some(p) = r.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(InferenceError::InvalidRow {
                    row,
                    message: format!("probability {p} outside [0, 1]"),
                });
            }
            let sum: f64 = r.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(InferenceError::InvalidRow {
                    row,
                    message: format!("row sums to {sum}"),
                });
            }
        }
        Ok(Self { rows })
    }

    /// Every row puts all mass on the corresponding label.
    pub fn one_hot(labels: &[ActionLabel]) -> Result<Self, InferenceError> {
        let rows = labels
            .iter()
            .map(|l| {
                let mut r = [0.0; NUM_CLASSES];
                r[l.id()] = 1.0;
                r
            })
            .collect();
        Self::new(rows)
    }

    pub fn rows(&self) -> &[[f64; NUM_CLASSES]] {
        &self.rows
    }

    pub fn steps(&self) -> usize {
        self.rows.len()
    }

    pub fn prob(&self, t: usize, a: ActionLabel) -> f64 {
        self.rows[t][a.id()]
    }
}

/// Product of per-step probabilities of `seq`, accumulated in the log domain.
pub fn prob_independent(
    dist: &ActionDistribution,
    seq: &[ActionLabel],
) -> Result<f64, InferenceError> {
    if seq.len() != dist.steps() {
        return Err(InferenceError::LengthMismatch {
            expected: dist.steps(),
            found: seq.len(),
        });
    }
    let log: f64 = seq
        .iter()
        .enumerate()
        .map(|(t, &a)| dist.prob(t, a).ln())
        .sum();
    Ok(log.exp().clamp(0.0, 1.0))
}

/// Block probability of `a1` on steps `0..=t_s` followed by `a2` on the rest:
/// the minimum probability within each block, multiplied.
pub fn block_prob(
    dist: &ActionDistribution,
    a1: ActionLabel,
    a2: ActionLabel,
    t_s: usize,
) -> Result<f64, InferenceError> {
    let max = dist.steps() - 2;
    if t_s > max {
        return Err(InferenceError::InvalidSplit { t_s, max });
    }
    let first = (0..=t_s)
        .map(|t| dist.prob(t, a1))
        .fold(f64::INFINITY, f64::min);
    let second = (t_s + 1..dist.steps())
        .map(|t| dist.prob(t, a2))
        .fold(f64::INFINITY, f64::min);
    Ok(first * second)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedSequence {
    pub sequence: OrderedActionSequence,
    pub score: f64,
    /// Last step of the first block, for two-action sequences.
    pub t_s: Option<usize>,
}

/// Ordered sequences with non-increasing scores.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RankedSequences(pub Vec<RankedSequence>);

impl RankedSequences {
    pub fn entries(&self) -> &[RankedSequence] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn top(&self, n: usize) -> impl Iterator<Item = &OrderedActionSequence> {
        self.0.iter().take(n).map(|r| &r.sequence)
    }
}

/// The `n` best ordered sequences of at most two actions.
///
/// Singles score `min_t p_t^a`; pairs `a1 != a2` score the best block
/// probability over all split steps (earliest split on ties). Equal scores
/// are ordered by the class ids of the sequence.
pub fn best_blocks(dist: &ActionDistribution, n: usize) -> RankedSequences {
    let steps = dist.steps();
    // prefix[a][t] = min_{u <= t} p_u^a, suffix[a][t] = min_{u >= t} p_u^a
    let mut prefix = [[0.0; FUTURE_LEN]; NUM_CLASSES];
    let mut suffix = [[0.0; FUTURE_LEN]; NUM_CLASSES];
    for a in ActionLabel::ALL {
        let i = a.id();
        let mut m = f64::INFINITY;
        for t in 0..steps {
            m = m.min(dist.prob(t, a));
            prefix[i][t] = m;
        }
        let mut m = f64::INFINITY;
        for t in (0..steps).rev() {
            m = m.min(dist.prob(t, a));
            suffix[i][t] = m;
        }
    }

    let mut ranked = Vec::with_capacity(NUM_CLASSES * NUM_CLASSES);
    for a in ActionLabel::ALL {
        ranked.push(RankedSequence {
            sequence: OrderedActionSequence::from_labels(&[a]),
            score: prefix[a.id()][steps - 1],
            t_s: None,
        });
    }
    for a1 in ActionLabel::ALL {
        for a2 in ActionLabel::ALL {
            if a1 == a2 {
                continue;
            }
            let (mut best, mut best_t) = (f64::NEG_INFINITY, 0);
            for t_s in 0..steps - 1 {
                let p = prefix[a1.id()][t_s] * suffix[a2.id()][t_s + 1];
                if p > best {
                    best = p;
                    best_t = t_s;
                }
            }
            ranked.push(RankedSequence {
                sequence: OrderedActionSequence::from_labels(&[a1, a2]),
                score: best,
                t_s: Some(best_t),
            });
        }
    }
    ranked.sort_by(|x, y| {
        y.score
            .total_cmp(&x.score)
            .then_with(|| x.sequence.cmp(&y.sequence))
    });
    ranked.truncate(n);
    RankedSequences(ranked)
}

/// One `PRED <scenario_id>` block of a prediction file.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub scenario_id: String,
    pub dist: ActionDistribution,
}

pub fn write_predictions<W: Write>(preds: &[Prediction], mut out: W) -> std::io::Result<()> {
    for p in preds {
        writeln!(out, "PRED {}", p.scenario_id)?;
        for row in p.dist.rows() {
            let cols: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", cols.join(" "))?;
        }
    }
    Ok(())
}

pub fn read_predictions<R: BufRead>(reader: R) -> Result<Vec<Prediction>, InferenceError> {
    let mut out = Vec::new();
    let mut current: Option<(String, usize, Vec<[f64; NUM_CLASSES]>)> = None;
    let finish =
        |cur: (String, usize, Vec<[f64; NUM_CLASSES]>)| -> Result<Prediction, InferenceError> {
            let (id, line, rows) = cur;
            let dist = ActionDistribution::new(rows).map_err(|e| InferenceError::Parse {
                line,
                message: format!("PRED {id}: {e}"),
            })?;
            Ok(Prediction {
                scenario_id: id,
                dist,
            })
        };
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| InferenceError::Io(e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let perr = |message: String| InferenceError::Parse {
            line: lineno,
            message,
        };
        if let Some(rest) = trimmed.strip_prefix("PRED") {
            let id = rest.trim();
            if id.is_empty()
                || id.contains(char::is_whitespace)
                || !rest.starts_with(char::is_whitespace)
            {
                return Err(perr("expected `PRED <scenario_id>`".into()));
            }
            if let Some(cur) = current.take() {
                out.push(finish(cur)?);
            }
            current = Some((id.to_string(), lineno, Vec::with_capacity(FUTURE_LEN)));
            continue;
        }
        let Some((_, _, rows)) = current.as_mut() else {
            return Err(perr("probability row before any `PRED` header".into()));
        };
        let vals = trimmed
            .split_whitespace()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| perr(format!("invalid probability `{s}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let row: [f64; NUM_CLASSES] = vals.try_into().map_err(|v: Vec<f64>| {
            perr(format!("expected {NUM_CLASSES} columns, got {}", v.len()))
        })?;
        rows.push(row);
    }
    if let Some(cur) = current.take() {
        out.push(finish(cur)?);
    }
    Ok(out)
}

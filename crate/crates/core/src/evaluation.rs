//! Evaluation protocols: per-step average precision and top-N ordered
//! sequence accuracy with confusion matrices.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use thiserror::Error;

use crate::inference::{ActionDistribution, RankedSequences};
use crate::labeling::{ActionLabel, OrderedActionSequence, NUM_CLASSES};

/// N values reported by [`topn_report`].
pub const TOP_N: [usize; 3] = [1, 2, 3];

/// Sequence types with fewer samples are left out of the text table.
pub const MIN_DISPLAY_COUNT: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("average precision is undefined without positives")]
    NoPositives,
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("{predictions} predictions for {truths} ground-truth sequences")]
    MissingPredictions { predictions: usize, truths: usize },
    #[error("scenario {index}: ground truth has {found} steps, prediction has {expected}")]
    HorizonMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("scenario {index}: {found} ranked sequences, need at least {needed}")]
    TooFewRanked {
        index: usize,
        found: usize,
        needed: usize,
    },
}

/// Area under the precision-recall curve. Samples with equal scores form one
/// block and precision is evaluated at the end of each block.
pub fn average_precision(scores: &[f64], positives: &[bool]) -> Result<f64, EvalError> {
    if scores.len() != positives.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            labels: positives.len(),
        });
    }
    let total_pos = positives.iter().filter(|&&p| p).count();
    if total_pos == 0 {
        return Err(EvalError::NoPositives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let (mut tp, mut seen) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            tp += positives[order[i]] as usize;
            seen += 1;
            i += 1;
        }
        let recall = tp as f64 / total_pos as f64;
        let precision = tp as f64 / seen as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApReport {
    /// AP per class (by [`ActionLabel::id`]); `None` when the class never occurs.
    pub per_class: [Option<f64>; NUM_CLASSES],
    /// Unweighted mean over the defined classes.
    pub mean: Option<f64>,
}

impl ApReport {
    pub fn undefined(&self) -> Vec<ActionLabel> {
        ActionLabel::ALL
            .into_iter()
            .filter(|a| self.per_class[a.id()].is_none())
            .collect()
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<6} {:>8}", "class", "AP [%]");
        for a in ActionLabel::ALL {
            let v =
                self.per_class[a.id()].map_or("n/a".to_string(), |v| format!("{:.1}", 100.0 * v));
            let _ = writeln!(s, "{:<6} {:>8}", a.abbrev(), v);
        }
        let m = self
            .mean
            .map_or("n/a".to_string(), |v| format!("{:.1}", 100.0 * v));
        let _ = writeln!(s, "{:<6} {:>8}", "mean", m);
        s
    }

    /// `class,ap` rows; undefined classes have an empty value.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["class", "ap"])?;
        for a in ActionLabel::ALL {
            let v = self.per_class[a.id()].map_or(String::new(), |v| v.to_string());
            w.write_record([a.abbrev().to_string(), v])?;
        }
        w.write_record([
            "mean".to_string(),
            self.mean.map_or(String::new(), |v| v.to_string()),
        ])?;
        w.flush()?;
        Ok(())
    }
}

/// One-vs-rest AP per class, pooling every step of every scenario.
pub fn direct_report(
    predictions: &[ActionDistribution],
    truths: &[Vec<ActionLabel>],
) -> Result<ApReport, EvalError> {
    if predictions.len() != truths.len() {
        return Err(EvalError::MissingPredictions {
            predictions: predictions.len(),
            truths: truths.len(),
        });
    }
    for (index, (p, t)) in predictions.iter().zip(truths).enumerate() {
        if p.steps() != t.len() {
            return Err(EvalError::HorizonMismatch {
                index,
                expected: p.steps(),
                found: t.len(),
            });
        }
    }
    let per_class: Vec<Option<f64>> = ActionLabel::ALL
        .par_iter()
        .map(|&a| {
            let mut scores = Vec::new();
            let mut positives = Vec::new();
            for (p, t) in predictions.iter().zip(truths) {
                for (step, &label) in t.iter().enumerate() {
                    scores.push(p.prob(step, a));
                    positives.push(label == a);
                }
            }
            match average_precision(&scores, &positives) {
                Ok(ap) => Some(ap),
                Err(_) => {
                    log::warn!("class {a} has no positive samples; AP undefined and excluded from the mean");
                    None
                }
            }
        })
        .collect();
    let per_class: [Option<f64>; NUM_CLASSES] = per_class.try_into().expect("five classes");
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    let mean = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    Ok(ApReport { per_class, mean })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupAccuracy {
    pub sequence: OrderedActionSequence,
    pub count: usize,
    /// Accuracy in percent for each entry of [`TOP_N`].
    pub accuracy: [f64; 3],
}

/// Rows are ground-truth types, columns predicted types; cells in percent of
/// the row's sample count.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    pub rows: Vec<OrderedActionSequence>,
    pub cols: Vec<OrderedActionSequence>,
    pub cells: Vec<Vec<f64>>,
}

impl ConfusionMatrix {
    pub fn row_sum(&self, r: usize) -> f64 {
        self.cells[r].iter().sum()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["truth\\prediction".to_string()];
        header.extend(self.cols.iter().map(|c| c.display_name()));
        w.write_record(&header)?;
        for (r, row) in self.rows.iter().zip(&self.cells) {
            let mut rec = vec![r.display_name()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopNReport {
    pub scenarios: usize,
    /// Overall accuracy in percent for each entry of [`TOP_N`].
    pub total: [f64; 3],
    /// Per ground-truth type, by descending count (ties by sequence order).
    pub groups: Vec<GroupAccuracy>,
    pub confusion_top1: ConfusionMatrix,
    pub confusion_top2: ConfusionMatrix,
}

impl TopNReport {
    pub fn to_table(&self, min_count: usize) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<10} {:>6} {:>7} {:>7} {:>7}",
            "sequence", "count", "top-1", "top-2", "top-3"
        );
        let _ = writeln!(
            s,
            "{:<10} {:>6} {:>7.1} {:>7.1} {:>7.1}",
            "total", self.scenarios, self.total[0], self.total[1], self.total[2]
        );
        for g in self.groups.iter().filter(|g| g.count >= min_count) {
            let _ = writeln!(
                s,
                "{:<10} {:>6} {:>7.1} {:>7.1} {:>7.1}",
                g.sequence.display_name(),
                g.count,
                g.accuracy[0],
                g.accuracy[1],
                g.accuracy[2]
            );
        }
        s
    }

    /// `sequence,top1,top2,top3` rows, starting with the `total` row.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["sequence", "top1", "top2", "top3"])?;
        let row = |name: String, acc: &[f64; 3]| {
            let mut r = vec![name];
            r.extend(acc.iter().map(|v| v.to_string()));
            r
        };
        w.write_record(row("total".into(), &self.total))?;
        for g in &self.groups {
            w.write_record(row(g.sequence.display_name(), &g.accuracy))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A scenario is a hit at N when its ground truth (at most two actions) is
/// among the first N ranked sequences. Longer ground truths never hit.
pub fn topn_report(
    ranked: &[RankedSequences],
    truths: &[OrderedActionSequence],
) -> Result<TopNReport, EvalError> {
    if ranked.len() != truths.len() {
        return Err(EvalError::MissingPredictions {
            predictions: ranked.len(),
            truths: truths.len(),
        });
    }
    let needed = *TOP_N.iter().max().unwrap();
    if let Some((index, r)) = ranked.iter().enumerate().find(|(_, r)| r.len() < needed) {
        return Err(EvalError::TooFewRanked {
            index,
            found: r.len(),
            needed,
        });
    }

    let hits: Vec<[bool; 3]> = ranked
        .iter()
        .zip(truths)
        .map(|(r, t)| TOP_N.map(|n| t.len() <= 2 && r.top(n).any(|s| s == t)))
        .collect();

    let mut by_type: HashMap<&OrderedActionSequence, (usize, [usize; 3])> = HashMap::new();
    for (t, h) in truths.iter().zip(&hits) {
        let e = by_type.entry(t).or_default();
        e.0 += 1;
        for (c, &hit) in e.1.iter_mut().zip(h) {
            *c += hit as usize;
        }
    }
    let mut groups: Vec<GroupAccuracy> = by_type
        .into_iter()
        .map(|(seq, (count, h))| GroupAccuracy {
            sequence: seq.clone(),
            count,
            accuracy: h.map(|x| percent(x, count)),
        })
        .collect();
    groups.sort_by(|a, b| {
        b.count
            .cmp(&a.count)
            .then_with(|| a.sequence.cmp(&b.sequence))
    });

    let n = truths.len();
    let total = [0, 1, 2].map(|i| percent(hits.iter().filter(|h| h[i]).count(), n));

    let rows: Vec<OrderedActionSequence> = groups.iter().map(|g| g.sequence.clone()).collect();
    let mut cols = rows.clone();
    let mut extra: Vec<OrderedActionSequence> = ranked
        .iter()
        .flat_map(|r| r.top(2).cloned())
        .filter(|s| !rows.contains(s))
        .collect();
    extra.sort();
    extra.dedup();
    cols.extend(extra);

    let confusion = |depth: usize| {
        let row_of: HashMap<&OrderedActionSequence, usize> =
            rows.iter().enumerate().map(|(i, s)| (s, i)).collect();
        let col_of: HashMap<&OrderedActionSequence, usize> =
            cols.iter().enumerate().map(|(i, s)| (s, i)).collect();
        let mut counts = vec![vec![0usize; cols.len()]; rows.len()];
        for (r, t) in ranked.iter().zip(truths) {
            let ri = row_of[t];
            for pred in r.top(depth) {
                counts[ri][col_of[pred]] += 1;
            }
        }
        let cells = counts
            .iter()
            .zip(&groups)
            .map(|(row, g)| row.iter().map(|&c| percent(c, g.count)).collect())
            .collect();
        ConfusionMatrix {
            rows: rows.clone(),
            cols: cols.clone(),
            cells,
        }
    };

    Ok(TopNReport {
        scenarios: n,
        total,
        confusion_top1: confusion(1),
        confusion_top2: confusion(2),
        groups,
    })
}

fn percent(count: usize, of: usize) -> f64 {
    if of == 0 {
        0.0
    } else {
        100.0 * count as f64 / of as f64
    }
}

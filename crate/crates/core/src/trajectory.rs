//! Trajectory CSV ingestion and scenario assembly.
//!
//! Timestamps are stored as integer ticks of 100 ms, so equality and ordering
//! on the sampling grid are exact.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::geometry::Point2;
use crate::map::GraphMap;

/// Sampling period of every track, in seconds.
pub const SAMPLE_PERIOD: f64 = 0.1;
/// Samples in a full scenario (5 s).
pub const SCENARIO_LEN: usize = 50;
/// Samples in the observed window (indices 0..=19).
pub const OBSERVED_LEN: usize = 20;
/// Index of the last observed sample.
pub const T0_INDEX: usize = OBSERVED_LEN - 1;
/// Samples in the future window (indices 20..=49).
pub const FUTURE_LEN: usize = SCENARIO_LEN - OBSERVED_LEN;

const GRID_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackSample {
    /// Time in units of [`SAMPLE_PERIOD`].
    pub tick: i64,
    pub position: Point2,
}

impl TrackSample {
    pub fn new(tick: i64, x: f64, y: f64) -> Self {
        Self {
            tick,
            position: Point2::new(x, y),
        }
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * SAMPLE_PERIOD
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: String,
    pub object_type: String,
    pub samples: Vec<TrackSample>,
}

impl Track {
    pub fn new(
        id: impl Into<String>,
        object_type: impl Into<String>,
        samples: Vec<TrackSample>,
    ) -> Self {
        Self {
            id: id.into(),
            object_type: object_type.into(),
            samples,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn positions(&self) -> Vec<Point2> {
        self.samples.iter().map(|s| s.position).collect()
    }

    pub fn first_tick(&self) -> Option<i64> {
        self.samples.first().map(|s| s.tick)
    }

    pub fn last_tick(&self) -> Option<i64> {
        self.samples.last().map(|s| s.tick)
    }

    pub fn is_agent(&self) -> bool {
        self.object_type.eq_ignore_ascii_case("agent")
    }

    /// Copy of the track with every position shifted by `offset`.
    pub fn translated(&self, offset: Point2) -> Track {
        let samples = self
            .samples
            .iter()
            .map(|s| TrackSample {
                tick: s.tick,
                position: s.position + offset,
            })
            .collect();
        Track::new(self.id.clone(), self.object_type.clone(), samples)
    }
}

#[derive(Debug, Error)]
pub enum TrackError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: duplicate sample for track `{track_id}` at t={time}")]
    DuplicateSample {
        line: u64,
        track_id: String,
        time: String,
    },
    #[error("line {line}: timestamp {time} is not on the 0.1 s grid")]
    OffGrid { line: u64, time: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("target track `{0}` not found")]
    TargetMissing(String),
    #[error("target track `{id}` has {found} samples, need {expected}")]
    TargetTooShort {
        id: String,
        found: usize,
        expected: usize,
    },
    #[error("target track `{id}` has {found} samples, expected exactly {expected}")]
    TargetTooLong {
        id: String,
        found: usize,
        expected: usize,
    },
    #[error("target track `{id}` is not contiguous at sample {index}")]
    TargetGap { id: String, index: usize },
    #[error("no track of type `agent` to use as target")]
    NoAgent,
    #[error("{0} tracks of type `agent`; pass the target id explicitly")]
    AmbiguousAgent(usize),
}

/// Parses the trajectory CSV at `path`.
pub fn parse_trajectories(path: impl AsRef<Path>) -> Result<Vec<Track>, TrackError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| TrackError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_trajectories(file)
}

/// Reads trajectory CSV data. Columns are located by (case-insensitive) name,
/// extra columns are ignored, and only rows of object type `agent` or `others`
/// are kept. Tracks are returned sorted by id, samples sorted by time.
pub fn read_trajectories<R: Read>(reader: R) -> Result<Vec<Track>, TrackError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| TrackError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let column = |name: &str| -> Result<usize, TrackError> {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| TrackError::Parse {
                line: 1,
                message: format!("missing column `{name}`"),
            })
    };
    let (c_t, c_id, c_type, c_x, c_y) = (
        column("timestamp")?,
        column("track_id")?,
        column("object_type")?,
        column("x")?,
        column("y")?,
    );

    let mut tracks: BTreeMap<String, (String, Vec<(TrackSample, u64)>)> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| TrackError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).unwrap_or("");
        let object_type = field(c_type);
        if !(object_type.eq_ignore_ascii_case("agent")
            || object_type.eq_ignore_ascii_case("others"))
        {
            continue;
        }
        let number = |i: usize, what: &str| -> Result<f64, TrackError> {
            let s = field(i);
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| TrackError::Parse {
                    line,
                    message: format!("invalid {what} `{s}`"),
                })
        };
        let t = number(c_t, "timestamp")?;
        let scaled = t / SAMPLE_PERIOD;
        let tick = scaled.round();
        if (scaled - tick).abs() > GRID_TOLERANCE {
            return Err(TrackError::OffGrid {
                line,
                time: field(c_t).to_string(),
            });
        }
        let sample = TrackSample::new(tick as i64, number(c_x, "x")?, number(c_y, "y")?);
        let track_id = field(c_id).to_string();
        if track_id.is_empty() {
            return Err(TrackError::Parse {
                line,
                message: "empty track_id".into(),
            });
        }
        tracks
            .entry(track_id)
            .or_insert_with(|| (object_type.to_string(), Vec::new()))
            .1
            .push((sample, line));
    }

    let mut out = Vec::with_capacity(tracks.len());
    for (id, (object_type, mut samples)) in tracks {
        samples.sort_by_key(|(s, line)| (s.tick, *line));
        if let Some(w) = samples.windows(2).find(|w| w[0].0.tick == w[1].0.tick) {
            return Err(TrackError::DuplicateSample {
                line: w[1].1,
                track_id: id,
                time: format_tick(w[1].0.tick),
            });
        }
        out.push(Track::new(
            id,
            object_type,
            samples.into_iter().map(|(s, _)| s).collect(),
        ));
    }
    Ok(out)
}

/// Writes tracks in the trajectory CSV format.
pub fn write_trajectories<W: Write>(tracks: &[Track], out: W) -> std::io::Result<()> {
    let mut rows: Vec<(i64, &Track, &TrackSample)> = tracks
        .iter()
        .flat_map(|t| t.samples.iter().map(move |s| (s.tick, t, s)))
        .collect();
    rows.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.id.cmp(&b.1.id)));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["timestamp", "track_id", "object_type", "x", "y"])?;
    for (tick, track, s) in rows {
        w.write_record([
            format_tick(tick),
            track.id.clone(),
            track.object_type.clone(),
            s.position.x.to_string(),
            s.position.y.to_string(),
        ])?;
    }
    w.flush()
}

fn format_tick(tick: i64) -> String {
    let sign = if tick < 0 { "-" } else { "" };
    let a = tick.unsigned_abs();
    format!("{sign}{}.{}", a / 10, a % 10)
}

/// A 5 s multi-agent snippet centred on one target track.
#[derive(Debug, Clone)]
pub struct Scenario<'m> {
    pub id: String,
    pub target: Track,
    pub others: Vec<Track>,
    pub map: &'m GraphMap,
}

impl Scenario<'_> {
    pub fn t0_index(&self) -> usize {
        T0_INDEX
    }

    pub fn t0_tick(&self) -> i64 {
        self.target.samples[T0_INDEX].tick
    }

    pub fn observed(&self) -> &[TrackSample] {
        &self.target.samples[..OBSERVED_LEN]
    }

    pub fn future(&self) -> &[TrackSample] {
        &self.target.samples[OBSERVED_LEN..]
    }
}

/// Picks the unique `agent` track.
pub fn find_agent(tracks: &[Track]) -> Result<&str, ScenarioError> {
    let agents: Vec<&Track> = tracks.iter().filter(|t| t.is_agent()).collect();
    match agents.as_slice() {
        [] => Err(ScenarioError::NoAgent),
        [one] => Ok(one.id.as_str()),
        many => Err(ScenarioError::AmbiguousAgent(many.len())),
    }
}

/// Builds a scenario around `target_id`; every other track whose time span
/// overlaps the target's is attached unchanged.
pub fn assemble_scenario<'m>(
    tracks: &[Track],
    target_id: &str,
    map: &'m GraphMap,
) -> Result<Scenario<'m>, ScenarioError> {
    let target = tracks
        .iter()
        .find(|t| t.id == target_id)
        .ok_or_else(|| ScenarioError::TargetMissing(target_id.to_string()))?;
    if target.len() < SCENARIO_LEN {
        return Err(ScenarioError::TargetTooShort {
            id: target.id.clone(),
            found: target.len(),
            expected: SCENARIO_LEN,
        });
    }
    if target.len() > SCENARIO_LEN {
        return Err(ScenarioError::TargetTooLong {
            id: target.id.clone(),
            found: target.len(),
            expected: SCENARIO_LEN,
        });
    }
    if let Some(i) = target
        .samples
        .windows(2)
        .position(|w| w[1].tick != w[0].tick + 1)
    {
        return Err(ScenarioError::TargetGap {
            id: target.id.clone(),
            index: i + 1,
        });
    }
    let (start, end) = (
        target.samples[0].tick,
        target.samples[SCENARIO_LEN - 1].tick,
    );
    let others = tracks
        .iter()
        .filter(|t| t.id != target_id && !t.is_empty())
        .filter(|t| t.first_tick().unwrap() <= end && t.last_tick().unwrap() >= start)
        .cloned()
        .collect();
    Ok(Scenario {
        id: target_id.to_string(),
        target: target.clone(),
        others,
        map,
    })
}

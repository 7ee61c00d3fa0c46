//! Lane-centerline graph map.
//!
//! Each node is a lane segment (a centerline polyline plus a turn annotation).
//! Edges carry the semantic relation between segments: successor/predecessor
//! and left/right neighbor. Predecessors and right neighbors are derived from
//! the stored successor and left-neighbor edges, so the inverse relations hold
//! by construction for every map that passes [`GraphMapBuilder::build`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use thiserror::Error;

use crate::geometry::{point_polyline_distance, Aabb, Point2};

/// Cell edge length of the uniform grid used for radius queries.
pub const GRID_CELL_SIZE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SegmentId(pub u64);

impl fmt::Display for SegmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Turn {
    #[default]
    None,
    Left,
    Right,
}

impl Turn {
    fn code(self) -> char {
        match self {
            Turn::None => 'N',
            Turn::Left => 'L',
            Turn::Right => 'R',
        }
    }

    fn parse(s: &str) -> Option<Turn> {
        match s {
            "N" => Some(Turn::None),
            "L" => Some(Turn::Left),
            "R" => Some(Turn::Right),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaneSegment {
    pub id: SegmentId,
    pub centerline: Vec<Point2>,
    pub turn: Turn,
}

/// How the map relates two consecutive lane assignments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransitionKind {
    SelfLoop,
    Successor,
    Predecessor,
    NeighborLeft,
    NeighborRight,
    Unconnected,
}

impl TransitionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TransitionKind::SelfLoop => "self",
            TransitionKind::Successor => "successor",
            TransitionKind::Predecessor => "predecessor",
            TransitionKind::NeighborLeft => "neighbor_left",
            TransitionKind::NeighborRight => "neighbor_right",
            TransitionKind::Unconnected => "unconnected",
        }
    }

    pub fn is_lane_change(self) -> bool {
        matches!(
            self,
            TransitionKind::NeighborLeft | TransitionKind::NeighborRight
        )
    }
}

impl fmt::Display for TransitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum MapError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate segment id {0}")]
    DuplicateSegment(SegmentId),
    #[error("segment {id}: {reason}")]
    InvalidSegment { id: SegmentId, reason: String },
    #[error("{context} references unknown segment {id}")]
    UnknownSegment { id: SegmentId, context: String },
    #[error("successor edge {from} -> {to} has no matching predecessor edge {to} -> {from}")]
    MissingPredecessor { from: SegmentId, to: SegmentId },
    #[error("predecessor edge {from} -> {to} has no matching successor edge {to} -> {from}")]
    MissingSuccessor { from: SegmentId, to: SegmentId },
    #[error("neighbor edges between {a} and {b} are not symmetric")]
    AsymmetricNeighbor { a: SegmentId, b: SegmentId },
    #[error("segment {id} has conflicting {side} neighbors {first} and {second}")]
    ConflictingNeighbor {
        id: SegmentId,
        side: &'static str,
        first: SegmentId,
        second: SegmentId,
    },
    #[error("segment {0} cannot be its own neighbor")]
    SelfNeighbor(SegmentId),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Collects segments and edges; [`GraphMapBuilder::build`] validates them.
///
/// Explicit predecessor / right-neighbor edges are optional. When any are
/// supplied they must mirror the successor / left-neighbor edges exactly.
#[derive(Debug, Default, Clone)]
pub struct GraphMapBuilder {
    segments: Vec<LaneSegment>,
    successors: Vec<(SegmentId, SegmentId)>,
    left_neighbors: Vec<(SegmentId, SegmentId)>,
    predecessors: Option<Vec<(SegmentId, SegmentId)>>,
    right_neighbors: Option<Vec<(SegmentId, SegmentId)>>,
}

impl GraphMapBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn segment(mut self, id: u64, turn: Turn, centerline: Vec<Point2>) -> Self {
        self.add_segment(LaneSegment {
            id: SegmentId(id),
            centerline,
            turn,
        });
        self
    }

    pub fn successor(mut self, from: u64, to: u64) -> Self {
        self.add_successor(SegmentId(from), SegmentId(to));
        self
    }

    /// `left` is the left neighbor of `of`.
    pub fn left_neighbor(mut self, of: u64, left: u64) -> Self {
        self.add_left_neighbor(SegmentId(of), SegmentId(left));
        self
    }

    pub fn add_segment(&mut self, seg: LaneSegment) {
        self.segments.push(seg);
    }

    pub fn add_successor(&mut self, from: SegmentId, to: SegmentId) {
        self.successors.push((from, to));
    }

    pub fn add_left_neighbor(&mut self, of: SegmentId, left: SegmentId) {
        self.left_neighbors.push((of, left));
    }

    pub fn add_predecessor(&mut self, of: SegmentId, pred: SegmentId) {
        self.predecessors
            .get_or_insert_with(Vec::new)
            .push((of, pred));
    }

    pub fn add_right_neighbor(&mut self, of: SegmentId, right: SegmentId) {
        self.right_neighbors
            .get_or_insert_with(Vec::new)
            .push((of, right));
    }

    pub fn build(self) -> Result<GraphMap, MapError> {
        let mut segments = self.segments;
        segments.sort_by_key(|s| s.id);
        for w in segments.windows(2) {
            if w[0].id == w[1].id {
                return Err(MapError::DuplicateSegment(w[0].id));
            }
        }
        for seg in &segments {
            validate_centerline(seg)?;
        }
        let index: HashMap<SegmentId, usize> = segments
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id, i))
            .collect();
        let check = |id: SegmentId, context: &str| -> Result<(), MapError> {
            if index.contains_key(&id) {
                Ok(())
            } else {
                Err(MapError::UnknownSegment {
                    id,
                    context: context.to_string(),
                })
            }
        };

        let mut successors: BTreeMap<SegmentId, BTreeSet<SegmentId>> = BTreeMap::new();
        let mut predecessors: BTreeMap<SegmentId, BTreeSet<SegmentId>> = BTreeMap::new();
        for &(a, b) in &self.successors {
            check(a, &format!("successor edge {a} -> {b}"))?;
            check(b, &format!("successor edge {a} -> {b}"))?;
            successors.entry(a).or_default().insert(b);
            predecessors.entry(b).or_default().insert(a);
        }
        if let Some(explicit) = &self.predecessors {
            let mut given: BTreeSet<(SegmentId, SegmentId)> = BTreeSet::new();
            for &(of, pred) in explicit {
                check(of, &format!("predecessor edge {of} -> {pred}"))?;
                check(pred, &format!("predecessor edge {of} -> {pred}"))?;
                given.insert((of, pred));
            }
            for (&a, succ) in &successors {
                for &b in succ {
                    if !given.contains(&(b, a)) {
                        return Err(MapError::MissingPredecessor { from: a, to: b });
                    }
                }
            }
            for &(of, pred) in &given {
                if !successors.get(&pred).is_some_and(|s| s.contains(&of)) {
                    return Err(MapError::MissingSuccessor { from: of, to: pred });
                }
            }
        }

        let mut neighbor_left: HashMap<SegmentId, SegmentId> = HashMap::new();
        let mut neighbor_right: HashMap<SegmentId, SegmentId> = HashMap::new();
        for &(of, left) in &self.left_neighbors {
            let ctx = format!("left-neighbor edge {of} -> {left}");
            check(of, &ctx)?;
            check(left, &ctx)?;
            if of == left {
                return Err(MapError::SelfNeighbor(of));
            }
            insert_unique(&mut neighbor_left, of, left, "left")?;
            insert_unique(&mut neighbor_right, left, of, "right")?;
        }
        if let Some(explicit) = &self.right_neighbors {
            let mut given: HashMap<SegmentId, SegmentId> = HashMap::new();
            for &(of, right) in explicit {
                let ctx = format!("right-neighbor edge {of} -> {right}");
                check(of, &ctx)?;
                check(right, &ctx)?;
                if of == right {
                    return Err(MapError::SelfNeighbor(of));
                }
                insert_unique(&mut given, of, right, "right")?;
            }
            for (&of, &right) in &given {
                if neighbor_right.get(&of) != Some(&right) {
                    return Err(MapError::AsymmetricNeighbor { a: of, b: right });
                }
            }
            for (&of, &right) in &neighbor_right {
                if given.get(&of) != Some(&right) {
                    return Err(MapError::AsymmetricNeighbor { a: right, b: of });
                }
            }
        }

        let grid = SpatialGrid::build(&segments, GRID_CELL_SIZE);
        Ok(GraphMap {
            segments,
            index,
            successors,
            predecessors,
            neighbor_left,
            neighbor_right,
            grid,
        })
    }
}

fn insert_unique(
    map: &mut HashMap<SegmentId, SegmentId>,
    key: SegmentId,
    value: SegmentId,
    side: &'static str,
) -> Result<(), MapError> {
    match map.insert(key, value) {
        Some(prev) if prev != value => Err(MapError::ConflictingNeighbor {
            id: key,
            side,
            first: prev.min(value),
            second: prev.max(value),
        }),
        _ => Ok(()),
    }
}

fn validate_centerline(seg: &LaneSegment) -> Result<(), MapError> {
    let invalid = |reason: String| MapError::InvalidSegment { id: seg.id, reason };
    if seg.centerline.len() < 2 {
        return Err(invalid(format!(
            "centerline needs at least 2 points, got {}",
            seg.centerline.len()
        )));
    }
    if let Some(i) = seg.centerline.iter().position(|p| !p.is_finite()) {
        return Err(invalid(format!("point {i} is not finite")));
    }
    if let Some(i) = seg.centerline.windows(2).position(|w| w[0] == w[1]) {
        return Err(invalid(format!("points {i} and {} coincide", i + 1)));
    }
    Ok(())
}

/// Uniform grid over the bounding boxes of centerline edges.
#[derive(Debug, Clone)]
struct SpatialGrid {
    cell: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl SpatialGrid {
    fn build(segments: &[LaneSegment], cell: f64) -> Self {
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (idx, seg) in segments.iter().enumerate() {
            for edge in seg.centerline.windows(2) {
                let bb = Aabb::of_points(edge).expect("edge has two points");
                let (x0, y0) = cell_of(bb.min, cell);
                let (x1, y1) = cell_of(bb.max, cell);
                for cx in x0..=x1 {
                    for cy in y0..=y1 {
                        let bucket = cells.entry((cx, cy)).or_default();
                        if bucket.last() != Some(&idx) {
                            bucket.push(idx);
                        }
                    }
                }
            }
        }
        Self { cell, cells }
    }

    fn candidates(&self, p: Point2, radius: f64) -> Vec<usize> {
        let (x0, y0) = cell_of(Point2::new(p.x - radius, p.y - radius), self.cell);
        let (x1, y1) = cell_of(Point2::new(p.x + radius, p.y + radius), self.cell);
        let mut out = Vec::new();
        for cx in x0..=x1 {
            for cy in y0..=y1 {
                if let Some(bucket) = self.cells.get(&(cx, cy)) {
                    out.extend_from_slice(bucket);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

fn cell_of(p: Point2, cell: f64) -> (i64, i64) {
    ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64)
}

/// Immutable, validated graph map.
#[derive(Debug, Clone)]
pub struct GraphMap {
    segments: Vec<LaneSegment>,
    index: HashMap<SegmentId, usize>,
    successors: BTreeMap<SegmentId, BTreeSet<SegmentId>>,
    predecessors: BTreeMap<SegmentId, BTreeSet<SegmentId>>,
    neighbor_left: HashMap<SegmentId, SegmentId>,
    neighbor_right: HashMap<SegmentId, SegmentId>,
    grid: SpatialGrid,
}

static EMPTY: BTreeSet<SegmentId> = BTreeSet::new();

impl GraphMap {
    /// Same graph with every centerline point passed through `f`.
    pub fn map_points(&self, f: impl Fn(Point2) -> Point2) -> Result<GraphMap, MapError> {
        let mut b = GraphMapBuilder::new();
        for s in &self.segments {
            b.add_segment(LaneSegment {
                id: s.id,
                centerline: s.centerline.iter().map(|&p| f(p)).collect(),
                turn: s.turn,
            });
            for &to in self.successors(s.id) {
                b.add_successor(s.id, to);
            }
            if let Some(left) = self.neighbor_left(s.id) {
                b.add_left_neighbor(s.id, left);
            }
        }
        b.build()
    }

    /// Segments in ascending id order.
    pub fn segments(&self) -> &[LaneSegment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn segment(&self, id: SegmentId) -> Option<&LaneSegment> {
        self.index.get(&id).map(|&i| &self.segments[i])
    }

    pub fn contains(&self, id: SegmentId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn successors(&self, id: SegmentId) -> &BTreeSet<SegmentId> {
        self.successors.get(&id).unwrap_or(&EMPTY)
    }

    pub fn predecessors(&self, id: SegmentId) -> &BTreeSet<SegmentId> {
        self.predecessors.get(&id).unwrap_or(&EMPTY)
    }

    pub fn neighbor_left(&self, id: SegmentId) -> Option<SegmentId> {
        self.neighbor_left.get(&id).copied()
    }

    pub fn neighbor_right(&self, id: SegmentId) -> Option<SegmentId> {
        self.neighbor_right.get(&id).copied()
    }

    /// Distance from `p` to the centerline of segment `id`.
    pub fn distance_to_segment(&self, p: Point2, id: SegmentId) -> Result<f64, MapError> {
        let seg = self.segment(id).ok_or_else(|| MapError::UnknownSegment {
            id,
            context: "distance query".to_string(),
        })?;
        Ok(point_polyline_distance(p, &seg.centerline))
    }

    /// Ids (ascending) of all segments whose centerline lies within `radius` of `p`.
    pub fn segments_within(&self, p: Point2, radius: f64) -> Vec<SegmentId> {
        self.grid
            .candidates(p, radius)
            .into_iter()
            .filter(|&i| point_polyline_distance(p, &self.segments[i].centerline) <= radius)
            .map(|i| self.segments[i].id)
            .collect()
    }

    /// Classifies a transition between consecutive lane assignments.
    ///
    /// Lane changes onto the neighbor of a successor (or onto the successor of
    /// a neighbor) are classified as neighbor transitions of that side.
    pub fn relation(&self, from: SegmentId, to: SegmentId) -> TransitionKind {
        if from == to {
            return TransitionKind::SelfLoop;
        }
        if self.successors(from).contains(&to) {
            return TransitionKind::Successor;
        }
        if self.predecessors(from).contains(&to) {
            return TransitionKind::Predecessor;
        }
        if self.neighbor_left(from) == Some(to) {
            return TransitionKind::NeighborLeft;
        }
        if self.neighbor_right(from) == Some(to) {
            return TransitionKind::NeighborRight;
        }
        let via_successor = |side: fn(&GraphMap, SegmentId) -> Option<SegmentId>| {
            self.successors(from)
                .iter()
                .any(|&s| side(self, s) == Some(to))
                || side(self, from).is_some_and(|n| self.successors(n).contains(&to))
        };
        if via_successor(GraphMap::neighbor_left) {
            return TransitionKind::NeighborLeft;
        }
        if via_successor(GraphMap::neighbor_right) {
            return TransitionKind::NeighborRight;
        }
        TransitionKind::Unconnected
    }
}

/// Reads a map in the line-oriented `MAPV1` format.
pub fn load_map(path: impl AsRef<Path>) -> Result<GraphMap, MapError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| MapError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_map(BufReader::new(file))
}

pub fn parse_map<R: BufRead>(reader: R) -> Result<GraphMap, MapError> {
    let mut builder = GraphMapBuilder::new();
    let mut saw_header = false;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| MapError::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let perr = |message: String| MapError::Parse {
            line: lineno,
            message,
        };
        let mut fields = trimmed.split_whitespace();
        let kind = fields.next().expect("non-empty line");
        if !saw_header {
            if kind != "MAPV1" || fields.next().is_some() {
                return Err(perr(format!("expected header `MAPV1`, found `{trimmed}`")));
            }
            saw_header = true;
            continue;
        }
        let rest: Vec<&str> = fields.collect();
        match kind {
            "SEG" => {
                if rest.len() < 3 {
                    return Err(perr("SEG record needs <id> <turn> <n> ...".into()));
                }
                let id = parse_id(rest[0], "segment id").map_err(perr)?;
                let turn = Turn::parse(rest[1])
                    .ok_or_else(|| perr(format!("turn must be N, L or R, found `{}`", rest[1])))?;
                let n: usize = rest[2]
                    .parse()
                    .map_err(|_| perr(format!("invalid point count `{}`", rest[2])))?;
                if rest.len() != 3 + 2 * n {
                    return Err(perr(format!(
                        "SEG {id} declares {n} points but has {} coordinates",
                        rest.len() - 3
                    )));
                }
                let coords = rest[3..]
                    .iter()
                    .map(|s| {
                        s.parse::<f64>()
                            .map_err(|_| perr(format!("invalid coordinate `{s}`")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let centerline = coords
                    .chunks_exact(2)
                    .map(|c| Point2::new(c[0], c[1]))
                    .collect();
                builder.add_segment(LaneSegment {
                    id,
                    centerline,
                    turn,
                });
            }
            "SUC" | "PRE" | "NBL" | "NBR" => {
                if rest.len() != 2 {
                    return Err(perr(format!("{kind} record needs exactly two ids")));
                }
                let a = parse_id(rest[0], "edge endpoint").map_err(perr)?;
                let b = parse_id(rest[1], "edge endpoint").map_err(perr)?;
                match kind {
                    "SUC" => builder.add_successor(a, b),
                    "PRE" => builder.add_predecessor(a, b),
                    "NBL" => builder.add_left_neighbor(a, b),
                    _ => builder.add_right_neighbor(a, b),
                }
            }
            other => return Err(perr(format!("unknown record type `{other}`"))),
        }
    }
    if !saw_header {
        return Err(MapError::Parse {
            line: 1,
            message: "missing `MAPV1` header".into(),
        });
    }
    builder.build()
}

fn parse_id(s: &str, what: &str) -> Result<SegmentId, String> {
    s.parse::<u64>()
        .map(SegmentId)
        .map_err(|_| format!("invalid {what} `{s}`"))
}

/// Writes a map in `MAPV1` format (segments, `SUC` and `NBL` records only).
pub fn write_map<W: Write>(map: &GraphMap, mut out: W) -> std::io::Result<()> {
    writeln!(out, "MAPV1")?;
    for seg in map.segments() {
        write!(
            out,
            "SEG {} {} {}",
            seg.id,
            seg.turn.code(),
            seg.centerline.len()
        )?;
        for p in &seg.centerline {
            write!(out, " {} {}", p.x, p.y)?;
        }
        writeln!(out)?;
    }
    for (a, succ) in &map.successors {
        for b in succ {
            writeln!(out, "SUC {a} {b}")?;
        }
    }
    let mut left: Vec<_> = map.neighbor_left.iter().collect();
    left.sort();
    for (a, b) in left {
        writeln!(out, "NBL {a} {b}")?;
    }
    Ok(())
}

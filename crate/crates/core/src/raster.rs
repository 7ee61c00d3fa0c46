//! Agent-centred raster stacks (map, target and other agents over the last
//! two seconds) and their binary export for external trainers.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use thiserror::Error;

use crate::geometry::Point2;
use crate::labeling::ActionLabel;
use crate::map::GraphMap;
use crate::smoothing::{smooth_samples, SmoothError, SmoothedTrack, SmootherConfig};
use crate::trajectory::{Track, FUTURE_LEN, SAMPLE_PERIOD, T0_INDEX};

pub const CHANNELS: usize = 7;
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const DATA_FILE: &str = "data.bin";

/// Channel order inside a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Map = 0,
    Target = 1,
    TargetVx = 2,
    TargetVy = 3,
    Other = 4,
    OtherVx = 5,
    OtherVy = 6,
}

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("invalid render config: {0}")]
    Config(String),
    #[error("augmentation angle {theta} rad exceeds the configured range of ±{max} rad")]
    AugmentOutOfRange { theta: f64, max: f64 },
    #[error("target track has {0} smoothed samples, the observed window needs {T0_INDEX_PLUS_ONE}", T0_INDEX_PLUS_ONE = T0_INDEX + 1)]
    ShortTarget(usize),
    #[error("scenario id {0:?} cannot be exported (empty or contains whitespace)")]
    InvalidId(String),
    #[error("record {id}: expected {expected} future labels, got {found}")]
    FutureLength {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("stack shape {found:?} does not match the dataset shape {expected:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RasterError + '_ {
    move |source| RasterError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderConfig {
    /// Pixels per side.
    pub grid: usize,
    /// Side length of the covered square (m).
    pub extent: f64,
    /// Frame times relative to the last observation (s), ascending, ending at 0.
    pub offsets: Vec<f64>,
    /// Largest augmentation angle magnitude (degrees).
    pub max_augment_deg: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            grid: 128,
            extent: 50.0,
            offsets: vec![-2.0, -1.5, -1.0, -0.5, 0.0],
            max_augment_deg: 5.0,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<(), RasterError> {
        let bad = |m: String| Err(RasterError::Config(m));
        if self.grid == 0 {
            return bad("grid must have at least one pixel".into());
        }
        if !(self.extent > 0.0 && self.extent.is_finite()) {
            return bad(format!("extent must be positive, got {}", self.extent));
        }
        if self.offsets.last() != Some(&0.0) {
            return bad("observation offsets must end at 0".into());
        }
        if self.offsets.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("observation offsets must be strictly ascending".into());
        }
        if !(self.max_augment_deg >= 0.0 && self.max_augment_deg < 180.0) {
            return bad(format!(
                "augmentation range must be in [0, 180) degrees, got {}",
                self.max_augment_deg
            ));
        }
        Ok(())
    }

    /// Metres per pixel.
    pub fn resolution(&self) -> f64 {
        self.extent / self.grid as f64
    }

    pub fn frames(&self) -> usize {
        self.offsets.len()
    }

    pub fn max_augment_rad(&self) -> f64 {
        self.max_augment_deg.to_radians()
    }

    /// Map lookups cover the whole square around the target.
    fn query_radius(&self) -> f64 {
        0.75 * self.extent
    }

    fn offset_ticks(&self) -> impl Iterator<Item = i64> + '_ {
        self.offsets
            .iter()
            .map(|o| (o / SAMPLE_PERIOD).round() as i64)
    }
}

/// Uniform augmentation angle in radians.
pub fn sample_augmentation<R: Rng + ?Sized>(rng: &mut R, cfg: &RenderConfig) -> f64 {
    let max = cfg.max_augment_rad();
    if max == 0.0 {
        0.0
    } else {
        rng.random_range(-max..=max)
    }
}

/// `[frame][channel][row][col]` tensor of `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterStack {
    frames: usize,
    size: usize,
    data: Vec<f32>,
}

impl RasterStack {
    pub fn zeros(frames: usize, size: usize) -> Self {
        Self {
            frames,
            size,
            data: vec![0.0; frames * CHANNELS * size * size],
        }
    }

    pub fn from_data(frames: usize, size: usize, data: Vec<f32>) -> Option<Self> {
        (data.len() == frames * CHANNELS * size * size).then_some(Self { frames, size, data })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn byte_len(&self) -> usize {
        self.data.len() * 4
    }

    pub fn plane(&self, frame: usize, channel: Channel) -> &[f32] {
        let n = self.size * self.size;
        let start = (frame * CHANNELS + channel as usize) * n;
        &self.data[start..start + n]
    }

    fn plane_mut(&mut self, frame: usize, channel: Channel) -> &mut [f32] {
        let n = self.size * self.size;
        let start = (frame * CHANNELS + channel as usize) * n;
        &mut self.data[start..start + n]
    }

    pub fn get(&self, frame: usize, channel: Channel, row: usize, col: usize) -> f32 {
        self.plane(frame, channel)[row * self.size + col]
    }
}

/// Origin and forward direction of a raster; forward points up (row 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub origin: Point2,
    pub heading: f64,
}

impl Frame {
    /// Continuous `(row, col)`; the origin sits at the centre of pixel
    /// `(grid/2, grid/2)`, left of the heading is towards column 0.
    pub fn to_pixel(&self, p: Point2, cfg: &RenderConfig) -> (f64, f64) {
        let local = (p - self.origin).rotated(-self.heading);
        let res = cfg.resolution();
        let c = (cfg.grid / 2) as f64;
        (c - local.x / res, c - local.y / res)
    }

    fn pixel_index(&self, p: Point2, cfg: &RenderConfig) -> Option<(usize, usize)> {
        let (r, c) = self.to_pixel(p, cfg);
        let (r, c) = (r.round(), c.round());
        let n = cfg.grid as f64;
        (r >= 0.0 && r < n && c >= 0.0 && c < n).then_some((r as usize, c as usize))
    }
}

/// Frame at the target's last observed sample. Without a defined heading the
/// map +x axis is used and the returned flag is set.
pub fn target_frame(target: &SmoothedTrack) -> Result<(Frame, bool), RasterError> {
    if target.len() <= T0_INDEX {
        return Err(RasterError::ShortTarget(target.len()));
    }
    let origin = target.position[T0_INDEX];
    Ok(match target.heading[T0_INDEX] {
        Some(heading) => (Frame { origin, heading }, false),
        None => (
            Frame {
                origin,
                heading: 0.0,
            },
            true,
        ),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub tick: i64,
    pub position: Point2,
    pub velocity: Point2,
}

/// Parametric scene content needed for one raster stack.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub t0_tick: i64,
    pub centerlines: Vec<Vec<Point2>>,
    pub target: Vec<AgentState>,
    pub others: Vec<Vec<AgentState>>,
}

fn states_until(track: &SmoothedTrack, t0_tick: i64) -> Vec<AgentState> {
    (0..track.len())
        .filter(|&i| track.ticks[i] <= t0_tick)
        .map(|i| AgentState {
            tick: track.ticks[i],
            position: track.position[i],
            velocity: track.velocity[i],
        })
        .collect()
}

impl Scene {
    /// Gathers centerlines near `center` and all agent states up to the
    /// target's last observed tick.
    pub fn collect(
        map: &GraphMap,
        target: &SmoothedTrack,
        others: &[SmoothedTrack],
        center: Point2,
        cfg: &RenderConfig,
    ) -> Result<Scene, RasterError> {
        if target.len() <= T0_INDEX {
            return Err(RasterError::ShortTarget(target.len()));
        }
        let t0_tick = target.ticks[T0_INDEX];
        let centerlines = map
            .segments_within(center, cfg.query_radius())
            .into_iter()
            .map(|id| {
                map.segment(id)
                    .expect("id from map query")
                    .centerline
                    .clone()
            })
            .collect();
        Ok(Scene {
            t0_tick,
            centerlines,
            target: states_until(target, t0_tick),
            others: others.iter().map(|o| states_until(o, t0_tick)).collect(),
        })
    }

    /// Rotates positions about `center` and velocities by `angle`.
    pub fn rotated_about(&self, center: Point2, angle: f64) -> Scene {
        if angle == 0.0 {
            return self.clone();
        }
        let rot = |p: Point2| center + (p - center).rotated(angle);
        let rot_state = |s: &AgentState| AgentState {
            tick: s.tick,
            position: rot(s.position),
            velocity: s.velocity.rotated(angle),
        };
        Scene {
            t0_tick: self.t0_tick,
            centerlines: self
                .centerlines
                .iter()
                .map(|l| l.iter().map(|&p| rot(p)).collect())
                .collect(),
            target: self.target.iter().map(rot_state).collect(),
            others: self
                .others
                .iter()
                .map(|o| o.iter().map(rot_state).collect())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub stack: RasterStack,
    /// The target had no defined heading; the frame uses the map +x axis.
    pub heading_fallback: bool,
}

/// Renders the observation stack for `target`, with the frame rotated by the
/// augmentation angle `theta` (radians) relative to the target's heading.
///
/// Augmentation is realised by rotating the parametric scene by `-theta`
/// about the target before rendering, so map geometry and velocities rotate
/// together and nothing is resampled.
pub fn render_stack(
    map: &GraphMap,
    target: &SmoothedTrack,
    others: &[SmoothedTrack],
    cfg: &RenderConfig,
    theta: f64,
) -> Result<Rendered, RasterError> {
    cfg.validate()?;
    let max = cfg.max_augment_rad();
    if !(theta.abs() <= max) {
        return Err(RasterError::AugmentOutOfRange { theta, max });
    }
    let (frame, heading_fallback) = target_frame(target)?;
    let scene =
        Scene::collect(map, target, others, frame.origin, cfg)?.rotated_about(frame.origin, -theta);
    Ok(Rendered {
        stack: render_with_frame(&scene, &frame, cfg),
        heading_fallback,
    })
}

/// Renders `scene` in an explicit frame.
pub fn render_with_frame(scene: &Scene, frame: &Frame, cfg: &RenderConfig) -> RasterStack {
    let n = cfg.grid;
    let mut stack = RasterStack::zeros(cfg.frames(), n);

    let mut map_plane = vec![0.0f32; n * n];
    for line in &scene.centerlines {
        for w in line.windows(2) {
            draw_line(
                &mut map_plane,
                n,
                frame.to_pixel(w[0], cfg),
                frame.to_pixel(w[1], cfg),
            );
        }
    }

    for (f, dt) in cfg.offset_ticks().enumerate() {
        stack.plane_mut(f, Channel::Map).copy_from_slice(&map_plane);
        let tick = scene.t0_tick + dt;

        // Earliest available sample stands in for frames before the track starts.
        let target = scene
            .target
            .iter()
            .rev()
            .find(|s| s.tick <= tick)
            .or(scene.target.first());
        if let Some(s) = target {
            if let Some((r, c)) = frame.pixel_index(s.position, cfg) {
                let i = r * n + c;
                stack.plane_mut(f, Channel::Target)[i] = 1.0;
                stack.plane_mut(f, Channel::TargetVx)[i] = s.velocity.x as f32;
                stack.plane_mut(f, Channel::TargetVy)[i] = s.velocity.y as f32;
            }
        }

        let target_pos = target.map(|s| s.position).unwrap_or(frame.origin);
        let mut present: Vec<(f64, usize, &AgentState)> = scene
            .others
            .iter()
            .enumerate()
            .filter_map(|(k, o)| {
                let s = o.iter().find(|s| s.tick == tick)?;
                Some((s.position.distance(target_pos), k, s))
            })
            .collect();
        present.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (_, _, s) in present {
            let Some((r, c)) = frame.pixel_index(s.position, cfg) else {
                continue;
            };
            let i = r * n + c;
            if stack.plane(f, Channel::Other)[i] != 0.0 {
                continue;
            }
            stack.plane_mut(f, Channel::Other)[i] = 1.0;
            stack.plane_mut(f, Channel::OtherVx)[i] = s.velocity.x as f32;
            stack.plane_mut(f, Channel::OtherVy)[i] = s.velocity.y as f32;
        }
    }
    stack
}

/// Clips the segment to `[lo, hi]²` (Liang-Barsky).
fn clip(a: (f64, f64), b: (f64, f64), lo: f64, hi: f64) -> Option<((f64, f64), (f64, f64))> {
    let (d0, d1) = (b.0 - a.0, b.1 - a.1);
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (p, q) in [
        (-d0, a.0 - lo),
        (d0, hi - a.0),
        (-d1, a.1 - lo),
        (d1, hi - a.1),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                if r > t1 {
                    return None;
                }
                t0 = t0.max(r);
            } else {
                if r < t0 {
                    return None;
                }
                t1 = t1.min(r);
            }
        }
    }
    Some((
        (a.0 + t0 * d0, a.1 + t0 * d1),
        (a.0 + t1 * d0, a.1 + t1 * d1),
    ))
}

/// One-pixel line between continuous `(row, col)` endpoints, clipped to the
/// grid and walked with integer Bresenham steps.
fn draw_line(plane: &mut [f32], n: usize, a: (f64, f64), b: (f64, f64)) {
    let Some((a, b)) = clip(a, b, -0.5, n as f64 - 0.5) else {
        return;
    };
    if !(a.0.is_finite() && a.1.is_finite() && b.0.is_finite() && b.1.is_finite()) {
        return;
    }
    let px = |v: f64| (v.round() as i64).clamp(0, n as i64 - 1);
    let (mut r, mut c) = (px(a.0), px(a.1));
    let (r1, c1) = (px(b.0), px(b.1));
    let dc = (c1 - c).abs();
    let dr = -(r1 - r).abs();
    let sc = if c < c1 { 1 } else { -1 };
    let sr = if r < r1 { 1 } else { -1 };
    let mut err = dc + dr;
    loop {
        plane[r as usize * n + c as usize] = 1.0;
        if r == r1 && c == c1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dr {
            err += dr;
            c += sc;
        }
        if e2 <= dc {
            err += dc;
            r += sr;
        }
    }
}

/// Smoothed history of a context agent up to `t0_tick`. A lone sample gets
/// zero velocity; agents without samples in the window yield `None`.
pub fn context_track(
    track: &Track,
    cfg: &SmootherConfig,
    t0_tick: i64,
) -> Result<Option<SmoothedTrack>, SmoothError> {
    let samples: Vec<_> = track
        .samples
        .iter()
        .copied()
        .filter(|s| s.tick <= t0_tick)
        .collect();
    match samples.len() {
        0 => Ok(None),
        1 => Ok(Some(SmoothedTrack {
            ticks: vec![samples[0].tick],
            position: vec![samples[0].position],
            velocity: vec![Point2::new(0.0, 0.0)],
            acceleration: vec![Point2::new(0.0, 0.0)],
            heading: vec![None],
        })),
        _ => smooth_samples(&samples, cfg).map(Some),
    }
}

/// Training weight of a future: 10 with any lane change, else 3 with any
/// turn, else 1.
pub fn sample_weight(future: &[ActionLabel]) -> u32 {
    if future.iter().any(|a| a.is_lane_change()) {
        10
    } else if future.iter().any(|a| a.is_turn()) {
        3
    } else {
        1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportRecord {
    pub scenario_id: String,
    pub weight: u32,
    pub future: Vec<ActionLabel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub record: ExportRecord,
    pub byte_offset: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn record_bytes(&self) -> u64 {
        (self.frames * CHANNELS * self.height * self.width * 4) as u64
    }
}

/// Streams stacks into `data.bin`; the manifest is written by [`finish`](Self::finish).
pub struct DatasetWriter {
    dir: PathBuf,
    data: BufWriter<File>,
    frames: usize,
    size: usize,
    entries: Vec<ManifestEntry>,
    offset: u64,
}

impl DatasetWriter {
    pub fn create(dir: impl AsRef<Path>, frames: usize, size: usize) -> Result<Self, RasterError> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let path = dir.join(DATA_FILE);
        let data = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
        Ok(Self {
            dir,
            data,
            frames,
            size,
            entries: Vec::new(),
            offset: 0,
        })
    }

    pub fn push(&mut self, record: ExportRecord, stack: &RasterStack) -> Result<(), RasterError> {
        if record.scenario_id.is_empty() || record.scenario_id.chars().any(char::is_whitespace) {
            return Err(RasterError::InvalidId(record.scenario_id));
        }
        if record.future.len() != FUTURE_LEN {
            return Err(RasterError::FutureLength {
                id: record.scenario_id,
                expected: FUTURE_LEN,
                found: record.future.len(),
            });
        }
        if (stack.frames, stack.size) != (self.frames, self.size) {
            return Err(RasterError::ShapeMismatch {
                expected: (self.frames, self.size),
                found: (stack.frames, stack.size),
            });
        }
        let path = self.dir.join(DATA_FILE);
        let mut bytes = Vec::with_capacity(stack.byte_len());
        for v in &stack.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        self.data.write_all(&bytes).map_err(io_err(&path))?;
        self.entries.push(ManifestEntry {
            record,
            byte_offset: self.offset,
        });
        self.offset += bytes.len() as u64;
        Ok(())
    }

    /// Flushes the payload and writes the manifest; returns the record count.
    pub fn finish(mut self) -> Result<usize, RasterError> {
        let data_path = self.dir.join(DATA_FILE);
        self.data.flush().map_err(io_err(&data_path))?;
        let path = self.dir.join(MANIFEST_FILE);
        let mut out = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
        let mut text = format!(
            "RAST1 {} {} {} {} {}\n",
            self.entries.len(),
            self.frames,
            CHANNELS,
            self.size,
            self.size
        );
        for e in &self.entries {
            text.push_str(&format!(
                "{} {} {}",
                e.record.scenario_id, e.byte_offset, e.record.weight
            ));
            for a in &e.record.future {
                text.push_str(&format!(" {}", a.id()));
            }
            text.push('\n');
        }
        out.write_all(text.as_bytes()).map_err(io_err(&path))?;
        out.flush().map_err(io_err(&path))?;
        Ok(self.entries.len())
    }
}

pub fn export_dataset<'a, I>(
    dir: impl AsRef<Path>,
    cfg: &RenderConfig,
    items: I,
) -> Result<usize, RasterError>
where
    I: IntoIterator<Item = (ExportRecord, &'a RasterStack)>,
{
    let mut w = DatasetWriter::create(dir, cfg.frames(), cfg.grid)?;
    for (record, stack) in items {
        w.push(record, stack)?;
    }
    w.finish()
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest, RasterError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    let fmt = |line: usize, message: String| RasterError::Format {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| fmt(1, "empty manifest".into()))?
        .map_err(io_err(path))?;
    let h: Vec<&str> = header.split_whitespace().collect();
    let nums: Vec<usize> = match h.as_slice() {
        ["RAST1", rest @ ..] if rest.len() == 5 => rest
            .iter()
            .map(|s| {
                s.parse()
                    .map_err(|_| fmt(1, format!("bad header field {s:?}")))
            })
            .collect::<Result<_, _>>()?,
        _ => return Err(fmt(1, "expected `RAST1 <count> <T> <C> <H> <W>`".into())),
    };
    if nums[2] != CHANNELS {
        return Err(fmt(
            1,
            format!("expected {CHANNELS} channels, got {}", nums[2]),
        ));
    }
    let mut entries = Vec::with_capacity(nums[0]);
    for (i, line) in lines.enumerate() {
        let no = i + 2;
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 3 + FUTURE_LEN {
            return Err(fmt(
                no,
                format!("expected {} fields, got {}", 3 + FUTURE_LEN, f.len()),
            ));
        }
        let byte_offset = f[1]
            .parse()
            .map_err(|_| fmt(no, format!("bad offset {:?}", f[1])))?;
        let weight = f[2]
            .parse()
            .map_err(|_| fmt(no, format!("bad weight {:?}", f[2])))?;
        let future = f[3..]
            .iter()
            .map(|s| {
                s.parse::<usize>()
                    .ok()
                    .and_then(ActionLabel::from_id)
                    .ok_or_else(|| fmt(no, format!("bad class id {s:?}")))
            })
            .collect::<Result<_, _>>()?;
        entries.push(ManifestEntry {
            record: ExportRecord {
                scenario_id: f[0].to_string(),
                weight,
                future,
            },
            byte_offset,
        });
    }
    if entries.len() != nums[0] {
        return Err(fmt(
            1,
            format!(
                "header announces {} records, found {}",
                nums[0],
                entries.len()
            ),
        ));
    }
    Ok(Manifest {
        frames: nums[1],
        height: nums[3],
        width: nums[4],
        entries,
    })
}

/// Reads a dataset directory written by [`export_dataset`].
pub fn read_dataset(dir: impl AsRef<Path>) -> Result<(Manifest, Vec<RasterStack>), RasterError> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir.join(MANIFEST_FILE))?;
    if manifest.height != manifest.width {
        return Err(RasterError::Format {
            path: dir.join(MANIFEST_FILE),
            line: 1,
            message: "only square frames are supported".into(),
        });
    }
    let path = dir.join(DATA_FILE);
    let mut bytes = Vec::new();
    File::open(&path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(io_err(&path))?;
    let rec = manifest.record_bytes() as usize;
    let mut stacks = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        let start = e.byte_offset as usize;
        let chunk = bytes
            .get(start..start + rec)
            .ok_or_else(|| RasterError::Format {
                path: path.clone(),
                line: 0,
                message: format!(
                    "record {} extends past the end of the payload",
                    e.record.scenario_id
                ),
            })?;
        let data = chunk
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        stacks.push(
            RasterStack::from_data(manifest.frames, manifest.width, data)
                .expect("sized by manifest"),
        );
    }
    Ok((manifest, stacks))
}

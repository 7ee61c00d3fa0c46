//! End-to-end per-scenario steps built from the individual modules.

use thiserror::Error;

use crate::config::PipelineConfig;
use crate::knn::{KnnError, TrajectoryFeature};
use crate::labeling::{extract_actions, LabelingOutcome, UnlabelableReason};
use crate::map::GraphMap;
use crate::matching::{build_lattice, viterbi_decode, LanePath, MatchError};
use crate::raster::{context_track, render_stack, RasterError, Rendered};
use crate::smoothing::{smooth_track, Horizon, SmoothError, SmoothedTrack};
use crate::trajectory::{Scenario, Track};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Smooth(#[from] SmoothError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Knn(#[from] KnnError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone)]
pub struct LabelResult {
    pub outcome: LabelingOutcome,
    /// Decoded lanes; absent when no lattice or path could be built.
    pub path: Option<LanePath>,
    pub smoothed: SmoothedTrack,
}

/// Smooths the whole track, matches it to lanes and extracts actions.
pub fn label_track(
    track: &Track,
    map: &GraphMap,
    cfg: &PipelineConfig,
) -> Result<LabelResult, PipelineError> {
    let smoothed = smooth_track(track, &cfg.smoother, Horizon::Full)?;
    let lattice = match build_lattice(map, &smoothed.position, cfg.radius, &cfg.emission) {
        Ok(l) => l,
        Err(MatchError::OffMap { .. }) => {
            return Ok(LabelResult {
                outcome: LabelingOutcome::Unlabelable(UnlabelableReason::OffMap),
                path: None,
                smoothed,
            })
        }
        Err(e) => return Err(e.into()),
    };
    let path = match viterbi_decode(&lattice, map, &cfg.weights) {
        Ok(p) => p,
        Err(MatchError::NoValidPath) => {
            return Ok(LabelResult {
                outcome: LabelingOutcome::Unlabelable(UnlabelableReason::UnconnectedTransition),
                path: None,
                smoothed,
            })
        }
        Err(e) => return Err(e.into()),
    };
    let outcome = extract_actions(&path, &smoothed, map, &cfg.maneuver);
    Ok(LabelResult {
        outcome,
        path: Some(path),
        smoothed,
    })
}

pub fn label_scenario(
    scenario: &Scenario<'_>,
    cfg: &PipelineConfig,
) -> Result<LabelResult, PipelineError> {
    label_track(&scenario.target, scenario.map, cfg)
}

/// k-NN query feature from the observed window only.
pub fn observed_feature(
    track: &Track,
    cfg: &PipelineConfig,
) -> Result<TrajectoryFeature, PipelineError> {
    let smoothed = smooth_track(track, &cfg.smoother, Horizon::Observed)?;
    Ok(TrajectoryFeature::from_observed(&smoothed)?)
}

/// Raster stack from observed data only: the target smoothed over its
/// observed window and every other agent up to the same instant.
pub fn render_scenario(
    scenario: &Scenario<'_>,
    cfg: &PipelineConfig,
    theta: f64,
) -> Result<Rendered, PipelineError> {
    let target = smooth_track(&scenario.target, &cfg.smoother, Horizon::Observed)?;
    let t0 = scenario.t0_tick();
    let mut others = Vec::new();
    for o in &scenario.others {
        if let Some(s) = context_track(o, &cfg.smoother, t0)? {
            others.push(s);
        }
    }
    Ok(render_stack(
        scenario.map,
        &target,
        &others,
        &cfg.render,
        theta,
    )?)
}

/// Runs `f` on a pool of `workers` threads (0 = one per core).
pub fn with_workers<R: Send>(
    workers: usize,
    f: impl FnOnce() -> R + Send,
) -> Result<R, PipelineError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| PipelineError::Pool(e.to_string()))?;
    Ok(pool.install(f))
}

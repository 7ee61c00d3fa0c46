use std::collections::BTreeSet;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use actseq_core::labeling::{read_label_file, LabelLine};
use actseq_core::trajectory::{find_agent, parse_trajectories, Track};
use anyhow::{bail, Context, Result};
use rayon::prelude::*;

/// One trajectory file: all of its tracks plus the chosen target id.
pub struct ScenarioInput {
    pub id: String,
    pub tracks: Vec<Track>,
    pub target_id: String,
}

impl ScenarioInput {
    pub fn target(&self) -> &Track {
        self.tracks
            .iter()
            .find(|t| t.id == self.target_id)
            .expect("target checked on load")
    }
}

/// Expands directories to their `*.csv` files; the result is sorted by path.
pub fn expand_paths(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            for entry in std::fs::read_dir(p)
                .with_context(|| format!("reading directory {}", p.display()))?
            {
                let path = entry?.path();
                if path.extension().is_some_and(|e| e == "csv") {
                    out.push(path);
                }
            }
        } else {
            out.push(p.clone());
        }
    }
    out.sort();
    out.dedup();
    if out.is_empty() {
        bail!("no trajectory files found; pass CSV files or directories with --traj");
    }
    Ok(out)
}

fn scenario_id(path: &Path) -> Result<String> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .with_context(|| format!("{}: file name is not valid UTF-8", path.display()))?;
    if stem.is_empty() || stem.contains(char::is_whitespace) {
        bail!(
            "{}: scenario id {stem:?} must be non-empty without whitespace",
            path.display()
        );
    }
    Ok(stem.to_string())
}

/// Parses every file in parallel; scenario ids are file stems.
pub fn load_scenarios(paths: &[PathBuf], target_id: Option<&str>) -> Result<Vec<ScenarioInput>> {
    let files = expand_paths(paths)?;
    let mut seen = BTreeSet::new();
    for f in &files {
        let id = scenario_id(f)?;
        if !seen.insert(id.clone()) {
            bail!(
                "duplicate scenario id {id:?} ({}); file stems must be unique",
                f.display()
            );
        }
    }
    files
        .par_iter()
        .map(|path| {
            let tracks =
                parse_trajectories(path).with_context(|| format!("reading {}", path.display()))?;
            let target = match target_id {
                Some(t) => t.to_string(),
                None => find_agent(&tracks)
                    .with_context(|| path.display().to_string())?
                    .to_string(),
            };
            if !tracks.iter().any(|t| t.id == target) {
                bail!("{}: target track {target:?} not found", path.display());
            }
            Ok(ScenarioInput {
                id: scenario_id(path)?,
                tracks,
                target_id: target,
            })
        })
        .collect()
}

pub fn load_labels(path: &Path) -> Result<Vec<LabelLine>> {
    let file =
        File::open(path).with_context(|| format!("opening label file {}", path.display()))?;
    read_label_file(BufReader::new(file))
        .with_context(|| format!("reading label file {}", path.display()))
}

pub fn create(path: &Path) -> Result<std::io::BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(std::io::BufWriter::new(file))
}

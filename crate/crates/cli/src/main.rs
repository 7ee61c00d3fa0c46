mod input;

use std::collections::HashMap;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use actseq_core::evaluation::{direct_report, topn_report, MIN_DISPLAY_COUNT};
use actseq_core::inference::{
    best_blocks, read_predictions, write_predictions, ActionDistribution, Prediction,
};
use actseq_core::knn::{build_index, predict, read_index, write_index};
use actseq_core::labeling::{
    dataset_statistics, future_horizon, write_label_file, ActionLabel, LabelEntry, LabelLine,
    LabelRecord, LabelingOutcome, OrderedActionSequence,
};
use actseq_core::map::{load_map, write_map, GraphMap};
use actseq_core::pipeline::{label_scenario, observed_feature, render_scenario, with_workers};
use actseq_core::raster::{sample_augmentation, sample_weight, DatasetWriter, ExportRecord};
use actseq_core::synth::{make_map, make_trajectory, SynthKind, SynthSpec};
use actseq_core::trajectory::{assemble_scenario, write_trajectories, FUTURE_LEN};
use actseq_core::PipelineConfig;
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use input::{create, load_labels, load_scenarios, ScenarioInput};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

#[derive(Parser)]
#[command(
    name = "actseq",
    version,
    about = "Label, predict and evaluate driving action sequences"
)]
struct Cli {
    /// Config file of `key = value` lines.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one config key; may be repeated.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads (0 = one per core); overrides the config.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decode lanes and write per-step action labels.
    Label {
        #[arg(long)]
        map: PathBuf,
        /// Trajectory CSV files or directories of them.
        #[arg(long, required = true, num_args = 1..)]
        traj: Vec<PathBuf>,
        /// Target track id; defaults to the single `agent` track of each file.
        #[arg(long)]
        target_id: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the decoded lane path of every labeled scenario.
        #[arg(long, value_name = "FILE")]
        paths: Option<PathBuf>,
    },
    /// Class proportions of one or more label files.
    Stats {
        #[arg(long, required = true, num_args = 1..)]
        labels: Vec<PathBuf>,
        /// Count only the 30-step future of per-step labels.
        #[arg(long)]
        future: bool,
    },
    /// Build a k-NN index from labeled trajectories.
    KnnBuild {
        #[arg(long, required = true, num_args = 1..)]
        traj: Vec<PathBuf>,
        #[arg(long)]
        target_id: Option<String>,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict action distributions with a k-NN index.
    KnnPredict {
        #[arg(long)]
        index: PathBuf,
        #[arg(long, required = true, num_args = 1..)]
        traj: Vec<PathBuf>,
        #[arg(long)]
        target_id: Option<String>,
        /// Neighbour count; overrides `knn.k`.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-class average precision of predicted distributions.
    EvalDirect {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, value_name = "FILE")]
        csv: Option<PathBuf>,
    },
    /// Top-N accuracy of ordered sequences extracted from predictions.
    EvalTopn {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, value_name = "FILE")]
        csv: Option<PathBuf>,
        /// Directory for the top-1 and top-2 confusion matrices.
        #[arg(long, value_name = "DIR")]
        confusion: Option<PathBuf>,
        /// Hide ground-truth types with fewer scenarios from the table.
        #[arg(long, default_value_t = MIN_DISPLAY_COUNT)]
        min_count: usize,
    },
    /// Render observation stacks and export them with future labels.
    Render {
        #[arg(long)]
        map: PathBuf,
        #[arg(long, required = true, num_args = 1..)]
        traj: Vec<PathBuf>,
        #[arg(long)]
        target_id: Option<String>,
        #[arg(long)]
        labels: PathBuf,
        /// Output directory for the manifest and data files.
        #[arg(long)]
        out: PathBuf,
        /// Rotate each frame by a random angle within the configured range.
        #[arg(long)]
        augment: bool,
    },
    /// Write a synthetic map and trajectory with ground-truth labels.
    Synth {
        #[arg(long)]
        kind: SynthKind,
        /// Position noise standard deviation (m).
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Noise seed; defaults to the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        speed: Option<f64>,
        /// Centre of the maneuver (s).
        #[arg(long)]
        maneuver_time: Option<f64>,
        #[arg(long)]
        map_out: PathBuf,
        #[arg(long)]
        traj_out: PathBuf,
        /// Ground-truth label file.
        #[arg(long, value_name = "FILE")]
        truth_out: Option<PathBuf>,
    },
}

fn resolve_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    for o in &cli.overrides {
        let (key, value) = o
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got {o:?}"))?;
        cfg.set(key.trim(), value)?;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    cfg.validate().context("invalid configuration")?;
    Ok(cfg)
}

fn load_graph(path: &Path) -> Result<GraphMap> {
    load_map(path).with_context(|| format!("loading map {}", path.display()))
}

fn labels_by_id(lines: Vec<LabelLine>, path: &Path) -> Result<HashMap<String, LabelEntry>> {
    let mut out = HashMap::with_capacity(lines.len());
    for l in lines {
        if out.insert(l.scenario_id.clone(), l.entry).is_some() {
            bail!(
                "{}: scenario {:?} listed twice",
                path.display(),
                l.scenario_id
            );
        }
    }
    Ok(out)
}

fn future_of(entry: &LabelEntry, id: &str) -> Result<Option<Vec<ActionLabel>>> {
    match entry {
        LabelEntry::Labeled(seq) => Ok(Some(
            future_horizon(seq).with_context(|| format!("scenario {id}"))?,
        )),
        LabelEntry::Unlabelable(_) => Ok(None),
        LabelEntry::Ordered(_) => {
            bail!("scenario {id}: per-step labels required, found an ORDERED annotation")
        }
    }
}

fn cmd_label(
    cfg: &PipelineConfig,
    map: &Path,
    traj: &[PathBuf],
    target: Option<&str>,
    out: &Path,
    paths: Option<&Path>,
) -> Result<()> {
    let map = load_graph(map)?;
    let inputs = load_scenarios(traj, target)?;
    let results = inputs
        .par_iter()
        .map(|inp| {
            let sc = assemble_scenario(&inp.tracks, &inp.target_id, &map)
                .with_context(|| format!("scenario {}", inp.id))?;
            label_scenario(&sc, cfg).with_context(|| format!("scenario {}", inp.id))
        })
        .collect::<Result<Vec<_>>>()?;

    let lines: Vec<LabelLine> = inputs
        .iter()
        .zip(&results)
        .map(|(inp, r)| LabelLine::from_outcome(inp.id.clone(), &r.outcome))
        .collect();
    let mut w = create(out)?;
    write_label_file(&lines, &mut w)?;
    w.flush()?;

    if let Some(p) = paths {
        let mut w = create(p)?;
        for (inp, r) in inputs.iter().zip(&results) {
            let Some(path) = &r.path else { continue };
            writeln!(w, "# {}", inp.id)?;
            for (i, seg) in path.segments.iter().enumerate() {
                let kind = if i == 0 {
                    "start"
                } else {
                    path.transitions[i - 1].as_str()
                };
                writeln!(w, "PATH {i} {seg} {kind}")?;
            }
        }
        w.flush()?;
    }
    let bad = results
        .iter()
        .filter(|r| matches!(r.outcome, LabelingOutcome::Unlabelable(_)))
        .count();
    log::info!(
        "labeled {} scenarios, {bad} unlabelable",
        results.len() - bad
    );
    Ok(())
}

fn cmd_stats(labels: &[PathBuf], future: bool) -> Result<()> {
    let mut records = Vec::new();
    let mut unlabelable = 0;
    for path in labels {
        for line in load_labels(path)? {
            match line.entry {
                LabelEntry::Labeled(seq) if future => {
                    let f = future_horizon(&seq)
                        .with_context(|| format!("scenario {}", line.scenario_id))?;
                    records.push(LabelRecord::PerStep(actseq_core::ActionSequence {
                        labels: f,
                        ..seq
                    }));
                }
                LabelEntry::Labeled(seq) => records.push(LabelRecord::PerStep(seq)),
                LabelEntry::Ordered(seq) => records.push(LabelRecord::Ordered(seq)),
                LabelEntry::Unlabelable(_) => unlabelable += 1,
            }
        }
    }
    let stats = dataset_statistics(&records)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "{:<6} {:>9}", "class", "share [%]")?;
    for a in ActionLabel::ALL {
        writeln!(
            out,
            "{:<6} {:>9.1}",
            a.abbrev(),
            100.0 * stats.proportions[a.id()]
        )?;
    }
    writeln!(
        out,
        "sequences {}, unlabelable {unlabelable}",
        stats.sequences
    )?;
    Ok(())
}

fn cmd_knn_build(
    cfg: &PipelineConfig,
    traj: &[PathBuf],
    target: Option<&str>,
    labels: &Path,
    out: &Path,
) -> Result<()> {
    let entries = labels_by_id(load_labels(labels)?, labels)?;
    let inputs = load_scenarios(traj, target)?;
    let features = inputs
        .par_iter()
        .map(|inp| {
            observed_feature(inp.target(), cfg).with_context(|| format!("scenario {}", inp.id))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut outcomes = Vec::with_capacity(inputs.len());
    for inp in &inputs {
        let entry = entries
            .get(&inp.id)
            .with_context(|| format!("scenario {} has no entry in {}", inp.id, labels.display()))?;
        outcomes.push(match entry {
            LabelEntry::Labeled(seq) => LabelingOutcome::Labeled(seq.clone()),
            LabelEntry::Unlabelable(r) => LabelingOutcome::Unlabelable(*r),
            LabelEntry::Ordered(_) => bail!("scenario {}: index needs per-step labels", inp.id),
        });
    }
    let (index, skipped) = build_index(features.into_iter().zip(&outcomes))?;
    let mut w = create(out)?;
    write_index(&index, &mut w)?;
    w.flush()?;
    log::info!(
        "indexed {} scenarios, skipped {skipped} unlabelable",
        index.len()
    );
    Ok(())
}

fn cmd_knn_predict(
    cfg: &PipelineConfig,
    index: &Path,
    traj: &[PathBuf],
    target: Option<&str>,
    k: Option<usize>,
    out: &Path,
) -> Result<()> {
    let k = k.unwrap_or(cfg.k);
    if k == 0 {
        bail!("--k must be >= 1");
    }
    let file =
        std::fs::File::open(index).with_context(|| format!("opening index {}", index.display()))?;
    let idx = read_index(BufReader::new(file))
        .with_context(|| format!("reading index {}", index.display()))?;
    let inputs = load_scenarios(traj, target)?;
    let preds = inputs
        .par_iter()
        .map(|inp| {
            let f = observed_feature(inp.target(), cfg)
                .with_context(|| format!("scenario {}", inp.id))?;
            Ok(Prediction {
                scenario_id: inp.id.clone(),
                dist: predict(&idx, &f, k)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut w = create(out)?;
    write_predictions(&preds, &mut w)?;
    w.flush()?;
    Ok(())
}

fn load_predictions(path: &Path) -> Result<HashMap<String, ActionDistribution>> {
    let file = std::fs::File::open(path)
        .with_context(|| format!("opening predictions {}", path.display()))?;
    let preds = read_predictions(BufReader::new(file))
        .with_context(|| format!("reading predictions {}", path.display()))?;
    let mut out = HashMap::with_capacity(preds.len());
    for p in preds {
        if p.dist.steps() != FUTURE_LEN {
            bail!(
                "{}: scenario {} has {} steps, expected {FUTURE_LEN}",
                path.display(),
                p.scenario_id,
                p.dist.steps()
            );
        }
        if out.insert(p.scenario_id.clone(), p.dist).is_some() {
            bail!(
                "{}: scenario {:?} predicted twice",
                path.display(),
                p.scenario_id
            );
        }
    }
    Ok(out)
}

fn prediction_for<'a>(
    preds: &'a HashMap<String, ActionDistribution>,
    id: &str,
    path: &Path,
) -> Result<&'a ActionDistribution> {
    preds
        .get(id)
        .with_context(|| format!("no prediction for scenario {id} in {}", path.display()))
}

fn cmd_eval_direct(pred: &Path, truth: &Path, csv: Option<&Path>) -> Result<()> {
    let preds = load_predictions(pred)?;
    let mut dists = Vec::new();
    let mut truths = Vec::new();
    for line in load_labels(truth)? {
        let Some(future) = future_of(&line.entry, &line.scenario_id)? else {
            continue;
        };
        dists.push(prediction_for(&preds, &line.scenario_id, pred)?.clone());
        truths.push(future);
    }
    let report = direct_report(&dists, &truths)?;
    print!("{}", report.to_table());
    if let Some(p) = csv {
        report.write_csv(create(p)?)?;
    }
    Ok(())
}

fn cmd_eval_topn(
    pred: &Path,
    truth: &Path,
    csv: Option<&Path>,
    confusion: Option<&Path>,
    min_count: usize,
) -> Result<()> {
    let preds = load_predictions(pred)?;
    let mut ids = Vec::new();
    let mut truths: Vec<OrderedActionSequence> = Vec::new();
    for line in load_labels(truth)? {
        let t = match &line.entry {
            LabelEntry::Ordered(seq) => seq.clone(),
            LabelEntry::Labeled(seq) => {
                let f = future_horizon(seq)
                    .with_context(|| format!("scenario {}", line.scenario_id))?;
                OrderedActionSequence::from_labels(&f)
            }
            LabelEntry::Unlabelable(_) => continue,
        };
        prediction_for(&preds, &line.scenario_id, pred)?;
        ids.push(line.scenario_id);
        truths.push(t);
    }
    let ranked: Vec<_> = ids
        .par_iter()
        .map(|id| best_blocks(&preds[id], 3))
        .collect();
    let report = topn_report(&ranked, &truths)?;
    print!("{}", report.to_table(min_count));
    if let Some(p) = csv {
        report.write_csv(create(p)?)?;
    }
    if let Some(dir) = confusion {
        report
            .confusion_top1
            .write_csv(create(&dir.join("confusion_top1.csv"))?)?;
        report
            .confusion_top2
            .write_csv(create(&dir.join("confusion_top2.csv"))?)?;
    }
    Ok(())
}

/// Scenarios are rendered in parallel chunks and written in input order.
const RENDER_CHUNK: usize = 64;

fn cmd_render(
    cfg: &PipelineConfig,
    map: &Path,
    traj: &[PathBuf],
    target: Option<&str>,
    labels: &Path,
    out: &Path,
    augment: bool,
) -> Result<()> {
    let map = load_graph(map)?;
    let entries = labels_by_id(load_labels(labels)?, labels)?;
    let inputs = load_scenarios(traj, target)?;
    let mut jobs: Vec<(usize, &ScenarioInput, Vec<ActionLabel>)> = Vec::new();
    for (i, inp) in inputs.iter().enumerate() {
        let entry = entries
            .get(&inp.id)
            .with_context(|| format!("scenario {} has no entry in {}", inp.id, labels.display()))?;
        match future_of(entry, &inp.id)? {
            Some(f) => jobs.push((i, inp, f)),
            None => log::info!("skipping unlabelable scenario {}", inp.id),
        }
    }

    let mut writer = DatasetWriter::create(out, cfg.render.frames(), cfg.render.grid)?;
    for chunk in jobs.chunks(RENDER_CHUNK) {
        let stacks = chunk
            .par_iter()
            .map(|(i, inp, _)| {
                // One stream per input position keeps angles independent of scheduling.
                let theta = if augment {
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                    rng.set_stream(*i as u64);
                    sample_augmentation(&mut rng, &cfg.render)
                } else {
                    0.0
                };
                let sc = assemble_scenario(&inp.tracks, &inp.target_id, &map)
                    .with_context(|| format!("scenario {}", inp.id))?;
                let r = render_scenario(&sc, cfg, theta)
                    .with_context(|| format!("scenario {}", inp.id))?;
                if r.heading_fallback {
                    log::warn!(
                        "scenario {}: target heading undefined, frame uses the map x axis",
                        inp.id
                    );
                }
                Ok(r.stack)
            })
            .collect::<Result<Vec<_>>>()?;
        for ((_, inp, future), stack) in chunk.iter().zip(&stacks) {
            let record = ExportRecord {
                scenario_id: inp.id.clone(),
                weight: sample_weight(future),
                future: future.clone(),
            };
            writer.push(record, stack)?;
        }
    }
    let n = writer.finish()?;
    log::info!("exported {n} stacks to {}", out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_synth(
    cfg: &PipelineConfig,
    kind: SynthKind,
    noise: f64,
    seed: Option<u64>,
    speed: Option<f64>,
    maneuver_time: Option<f64>,
    map_out: &Path,
    traj_out: &Path,
    truth_out: Option<&Path>,
) -> Result<()> {
    let mut spec = SynthSpec::new(kind);
    spec.noise = noise;
    spec.seed = seed.unwrap_or(cfg.seed);
    if let Some(v) = speed {
        spec.speed = v;
    }
    if let Some(t) = maneuver_time {
        spec.maneuver_time = t;
    }
    let sc = make_trajectory(&spec)?;
    let mut w = create(map_out)?;
    write_map(&make_map(kind), &mut w)?;
    w.flush()?;
    let mut w = create(traj_out)?;
    write_trajectories(std::slice::from_ref(&sc.track), &mut w)?;
    w.flush()?;
    if let Some(p) = truth_out {
        let id = traj_out
            .file_stem()
            .and_then(|s| s.to_str())
            .context("trajectory output needs a UTF-8 file name")?;
        let line = LabelLine {
            scenario_id: id.to_string(),
            entry: LabelEntry::Labeled(sc.truth),
        };
        let mut w = create(p)?;
        write_label_file(&[line], &mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli)?;
    with_workers(cfg.workers, || match &cli.command {
        Command::Label {
            map,
            traj,
            target_id,
            out,
            paths,
        } => cmd_label(&cfg, map, traj, target_id.as_deref(), out, paths.as_deref()),
        Command::Stats { labels, future } => cmd_stats(labels, *future),
        Command::KnnBuild {
            traj,
            target_id,
            labels,
            out,
        } => cmd_knn_build(&cfg, traj, target_id.as_deref(), labels, out),
        Command::KnnPredict {
            index,
            traj,
            target_id,
            k,
            out,
        } => cmd_knn_predict(&cfg, index, traj, target_id.as_deref(), *k, out),
        Command::EvalDirect { pred, truth, csv } => cmd_eval_direct(pred, truth, csv.as_deref()),
        Command::EvalTopn {
            pred,
            truth,
            csv,
            confusion,
            min_count,
        } => cmd_eval_topn(
            pred,
            truth,
            csv.as_deref(),
            confusion.as_deref(),
            *min_count,
        ),
        Command::Render {
            map,
            traj,
            target_id,
            labels,
            out,
            augment,
        } => cmd_render(&cfg, map, traj, target_id.as_deref(), labels, out, *augment),
        Command::Synth {
            kind,
            noise,
            seed,
            speed,
            maneuver_time,
            map_out,
            traj_out,
            truth_out,
        } => cmd_synth(
            &cfg,
            *kind,
            *noise,
            *seed,
            *speed,
            *maneuver_time,
            map_out,
            traj_out,
            truth_out.as_deref(),
        ),
    })?
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

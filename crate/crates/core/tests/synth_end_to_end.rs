mod common;

use actseq_core::geometry::Point2;
use actseq_core::labeling::{compact, maneuver_interval, ActionLabel, ManeuverConfig};
use actseq_core::pipeline::label_track;
use actseq_core::smoothing::SmoothedTrack;
use actseq_core::synth::{blend_crossings, make_map, make_trajectory, SynthKind, SynthSpec};
use actseq_core::PipelineConfig;
use common::{ordered, random_spec, synth_recovery};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ActionLabel::*;

/// Inclusive first and last index of the lane-change labels.
fn lane_change_span(labels: &[ActionLabel]) -> Option<(usize, usize)> {
    let first = labels.iter().position(|a| a.is_lane_change())?;
    let last = labels.iter().rposition(|a| a.is_lane_change())?;
    Some((first, last))
}

#[test]
fn noiseless_paths_match_truth_away_from_lane_boundaries() {
    let cfg = PipelineConfig::default();
    let (mut exact, mut total) = (0, 0);
    for (k, kind) in SynthKind::ALL[..5].iter().enumerate() {
        for i in 0..200u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 * k as u64 + i);
            let spec = random_spec(&mut rng, *kind, 0.0, i);
            let sc = make_trajectory(&spec).unwrap();
            let path = label_track(&sc.track, &make_map(*kind), &cfg)
                .unwrap()
                .path
                .unwrap();
            let truth = &sc.truth_path.segments;
            let changes: Vec<usize> = (1..truth.len())
                .filter(|&j| truth[j] != truth[j - 1])
                .collect();
            total += 1;
            if path.segments == *truth {
                exact += 1;
                continue;
            }
            // A sample where both lanes are equally plausible may go either way.
            let wrong: Vec<usize> = (0..truth.len())
                .filter(|&j| path.segments[j] != truth[j])
                .collect();
            assert!(
                wrong.len() <= changes.len(),
                "{spec:?}: mismatches {wrong:?}"
            );
            for &j in &wrong {
                assert!(
                    changes.iter().any(|&c| j + 1 == c || j == c),
                    "{spec:?}: mismatch at {j} away from transitions {changes:?}"
                );
            }
        }
    }
    assert!(
        exact as f64 / total as f64 >= 0.75,
        "{exact}/{total} exact paths"
    );
}

#[test]
fn noiseless_labels_agree_per_step() {
    let mut pooled = synth_recovery(SynthKind::Cruise, 0.0, 200, 3);
    for kind in &SynthKind::ALL[1..5] {
        pooled.merge(synth_recovery(*kind, 0.0, 200, 3));
    }
    assert_eq!(pooled.ordered_rate(), 1.0, "{:?}", pooled.failures);
    assert!(
        pooled.step_rate() >= 0.95,
        "per-step agreement {}",
        pooled.step_rate()
    );
}

#[test]
fn noisy_lane_change_yields_cruise_ll_cruise() {
    let cfg = PipelineConfig::default();
    for seed in 0..20 {
        let spec = SynthSpec {
            noise: 0.3,
            seed,
            ..SynthSpec::new(SynthKind::LaneChangeLeft)
        };
        let sc = make_trajectory(&spec).unwrap();
        let res = label_track(&sc.track, &make_map(spec.kind), &cfg).unwrap();
        let seq = res.outcome.sequence().unwrap();
        assert_eq!(
            compact(seq),
            ordered(&[Cruise, LaneChangeLeft, Cruise]),
            "seed {seed}"
        );

        let got = lane_change_span(&seq.labels).unwrap();
        let want = lane_change_span(&sc.truth.labels).unwrap();
        let inter = got.1.min(want.1) as i64 - got.0.max(want.0) as i64 + 1;
        let union = got.1.max(want.1) - got.0.min(want.0) + 1;
        assert!(
            inter as f64 / union as f64 >= 0.5,
            "seed {seed}: {got:?} vs {want:?}"
        );
        assert!(seq.labels[..got.0]
            .iter()
            .chain(&seq.labels[got.1 + 1..])
            .all(|&a| a == Cruise));
    }
}

#[test]
fn interval_on_exact_blend_brackets_crossings() {
    let cfg = ManeuverConfig::default();
    for (kind, tm) in [
        (SynthKind::LaneChangeLeft, 2.5),
        (SynthKind::LaneChangeLeft, 1.83),
        (SynthKind::LaneChangeRight, 3.17),
        (SynthKind::LaneChangeRight, 2.5),
    ] {
        let spec = SynthSpec {
            maneuver_time: tm,
            ..SynthSpec::new(kind)
        };
        let sc = make_trajectory(&spec).unwrap();
        let n = sc.track.len();
        let exact = SmoothedTrack {
            ticks: sc.track.samples.iter().map(|s| s.tick).collect(),
            position: sc.track.samples.iter().map(|s| s.position).collect(),
            velocity: vec![Point2::new(spec.speed, 0.0); n],
            acceleration: vec![Point2::new(0.0, 0.0); n],
            heading: vec![Some(0.0); n],
        };
        let segs = &sc.truth_path.segments;
        let k = (1..n).find(|&j| segs[j] != segs[j - 1]).unwrap();
        let (start, end) =
            maneuver_interval(&exact, &make_map(kind), segs[k - 1], segs[k], k, &cfg);
        let (t1, t2) = blend_crossings(tm, 0.5);
        assert!(
            (start as f64 - t1 / 0.1).abs() <= 2.0,
            "{kind} start {start} vs {t1}"
        );
        assert!(
            (end as f64 - t2 / 0.1).abs() <= 2.0,
            "{kind} end {end} vs {t2}"
        );
    }
}

#[test]
fn default_smoother_widens_interval_by_at_most_three_samples() {
    let cfg = PipelineConfig::default();
    for (k, kind) in [SynthKind::LaneChangeLeft, SynthKind::LaneChangeRight]
        .iter()
        .enumerate()
    {
        for i in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(77 + 1000 * k as u64 + i);
            let spec = random_spec(&mut rng, *kind, 0.0, i);
            let sc = make_trajectory(&spec).unwrap();
            let res = label_track(&sc.track, &make_map(*kind), &cfg).unwrap();
            let got = lane_change_span(&res.outcome.sequence().unwrap().labels).unwrap();
            let want = lane_change_span(&sc.truth.labels).unwrap();
            assert!(
                got.0.abs_diff(want.0) <= 3 && got.1.abs_diff(want.1) <= 3,
                "{spec:?}: {got:?} vs {want:?}"
            );
        }
    }
}

#[test]
fn compound_turn_then_lane_change() {
    let cfg = PipelineConfig::default();
    for seed in 0..10 {
        let spec = SynthSpec {
            noise: if seed % 2 == 0 { 0.0 } else { 0.3 },
            seed,
            ..SynthSpec::new(SynthKind::Compound)
        };
        let sc = make_trajectory(&spec).unwrap();
        let res = label_track(&sc.track, &make_map(spec.kind), &cfg).unwrap();
        assert_eq!(
            compact(res.outcome.sequence().unwrap()),
            compact(&sc.truth),
            "seed {seed}"
        );
    }
}

#[test]
fn generation_is_bit_repeatable() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for kind in SynthKind::ALL {
        let spec = if kind == SynthKind::Compound {
            SynthSpec {
                noise: 0.3,
                seed: 9,
                ..SynthSpec::new(kind)
            }
        } else {
            random_spec(&mut rng, kind, 0.3, 9)
        };
        let a = make_trajectory(&spec).unwrap();
        let b = make_trajectory(&spec).unwrap();
        for (x, y) in a.track.samples.iter().zip(&b.track.samples) {
            assert_eq!(x.position.x.to_bits(), y.position.x.to_bits());
            assert_eq!(x.position.y.to_bits(), y.position.y.to_bits());
        }
        assert_eq!(a, b);
    }
}

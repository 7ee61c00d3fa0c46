mod common;

use actseq_core::evaluation::{average_precision, direct_report, topn_report};
use actseq_core::inference::{
    best_blocks, block_prob, prob_independent, ActionDistribution, RankedSequence, RankedSequences,
};
use actseq_core::labeling::ActionLabel;
use common::{blocks_oracle, ordered, pr_curve_ap, random_distribution};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Rows drawn from a coarse grid so block scores tie often.
fn quantized_distribution<R: Rng>(rng: &mut R) -> ActionDistribution {
    let rows = (0..30)
        .map(|_| {
            let mut counts = [0u32; 5];
            for _ in 0..4 {
                counts[rng.random_range(0..5)] += 1;
            }
            counts.map(|c| c as f64 / 4.0)
        })
        .collect();
    ActionDistribution::new(rows).unwrap()
}

#[test]
fn best_blocks_equals_exhaustive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for i in 0..600 {
        let d = if i % 2 == 0 {
            random_distribution(&mut rng)
        } else {
            quantized_distribution(&mut rng)
        };
        let got = best_blocks(&d, 25);
        let want = blocks_oracle(&d);
        assert_eq!(got.len(), 25);
        for (g, w) in got.entries().iter().zip(&want) {
            assert_eq!(g.sequence.labels(), &w.0[..]);
            assert_eq!(g.score, w.1);
            assert_eq!(g.t_s, w.2);
        }
    }
}

#[test]
fn block_model_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..200 {
        let d = random_distribution(&mut rng);
        let ranked = best_blocks(&d, 3);
        let best_single = ActionLabel::ALL
            .iter()
            .map(|&a| (0..30).map(|t| d.prob(t, a)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max);
        assert!(ranked.entries()[0].score >= best_single);
        assert!(ranked
            .entries()
            .windows(2)
            .all(|w| w[0].score >= w[1].score));

        let a1 = ActionLabel::from_id(rng.random_range(0..5)).unwrap();
        let a2 = ActionLabel::from_id(rng.random_range(0..5)).unwrap();
        let ts = rng.random_range(0..29);
        let max_of = |a| (0..30).map(|t| d.prob(t, a)).fold(0.0, f64::max);
        assert!(block_prob(&d, a1, a2, ts).unwrap() <= max_of(a1).min(max_of(a2)));
    }
}

#[test]
fn class_permutation_equivariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for _ in 0..100 {
        let d = random_distribution(&mut rng);
        let mut perm: Vec<usize> = (0..5).collect();
        perm.shuffle(&mut rng);
        let rows = d
            .rows()
            .iter()
            .map(|r| {
                let mut out = [0.0; 5];
                for c in 0..5 {
                    out[perm[c]] = r[c];
                }
                out
            })
            .collect();
        let dp = ActionDistribution::new(rows).unwrap();
        let p = |a: ActionLabel| ActionLabel::from_id(perm[a.id()]).unwrap();
        for a1 in ActionLabel::ALL {
            for a2 in ActionLabel::ALL {
                for ts in [0, 7, 28] {
                    assert_eq!(
                        block_prob(&d, a1, a2, ts).unwrap(),
                        block_prob(&dp, p(a1), p(a2), ts).unwrap()
                    );
                }
            }
        }
    }
}

#[test]
fn independent_probability_matches_naive_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    for _ in 0..200 {
        let d = random_distribution(&mut rng);
        let seq: Vec<ActionLabel> = (0..30)
            .map(|_| ActionLabel::from_id(rng.random_range(0..5)).unwrap())
            .collect();
        let naive: f64 = seq.iter().enumerate().map(|(t, &a)| d.prob(t, a)).product();
        let got = prob_independent(&d, &seq).unwrap();
        assert!(((got - naive) / naive).abs() < 1e-12);
    }
    let uniform = ActionDistribution::new(vec![[0.2; 5]; 30]).unwrap();
    let p = prob_independent(&uniform, &[ActionLabel::Cruise; 30]).unwrap();
    assert!(((p - 0.2f64.powi(30)) / p).abs() < 1e-12);
}

#[test]
fn ap_matches_pr_curve_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    for i in 0..500 {
        let n = 50;
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                if i % 2 == 0 {
                    rng.random()
                } else {
                    rng.random_range(0..6) as f64 / 5.0
                }
            })
            .collect();
        let mut pos: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
        pos[0] = true;
        let ap = average_precision(&scores, &pos).unwrap();
        assert!((ap - pr_curve_ap(&scores, &pos)).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&ap));
    }
}

#[test]
fn ap_invariant_under_monotone_maps() {
    let mut rng = ChaCha8Rng::seed_from_u64(36);
    for _ in 0..200 {
        let scores: Vec<f64> = (0..60)
            .map(|_| rng.random_range(0..20) as f64 / 19.0)
            .collect();
        let mut pos: Vec<bool> = (0..60).map(|_| rng.random_bool(0.4)).collect();
        pos[5] = true;
        let base = average_precision(&scores, &pos).unwrap();
        let maps: [fn(f64) -> f64; 3] = [|x| x.exp(), |x| 3.0 * x - 7.0, |x| x * x * x + x];
        for m in maps {
            let mapped: Vec<f64> = scores.iter().map(|&s| m(s)).collect();
            assert_eq!(average_precision(&mapped, &pos).unwrap(), base);
        }
    }
}

#[test]
fn constant_scores_give_prevalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    for _ in 0..100 {
        let n = rng.random_range(1..200);
        let mut pos: Vec<bool> = (0..n).map(|_| rng.random_bool(0.2)).collect();
        pos[0] = true;
        let k = pos.iter().filter(|&&p| p).count();
        assert_eq!(
            average_precision(&vec![0.5; n], &pos).unwrap(),
            k as f64 / n as f64
        );
    }
}

#[test]
fn direct_report_matches_oracle_on_planted_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(38);
    let mut preds = Vec::new();
    let mut truths = Vec::new();
    for _ in 0..100 {
        let truth: Vec<ActionLabel> = (0..30)
            .map(|_| ActionLabel::from_id(rng.random_range(0..5)).unwrap())
            .collect();
        let rows = truth
            .iter()
            .map(|a| {
                let mut row = [0.0; 5];
                for v in &mut row {
                    *v = rng.random::<f64>() * 0.5;
                }
                row[a.id()] += rng.random::<f64>();
                let s: f64 = row.iter().sum();
                row.map(|v| v / s)
            })
            .collect();
        preds.push(ActionDistribution::new(rows).unwrap());
        truths.push(truth);
    }
    let rep = direct_report(&preds, &truths).unwrap();
    for a in ActionLabel::ALL {
        let scores: Vec<f64> = preds
            .iter()
            .flat_map(|p| (0..30).map(move |t| p.prob(t, a)))
            .collect();
        let pos: Vec<bool> = truths
            .iter()
            .flat_map(|t| t.iter().map(move |&x| x == a))
            .collect();
        assert!((rep.per_class[a.id()].unwrap() - pr_curve_ap(&scores, &pos)).abs() < 1e-12);
    }
    let mean = rep.per_class.iter().map(|v| v.unwrap()).sum::<f64>() / 5.0;
    assert!((rep.mean.unwrap() - mean).abs() < 1e-15);

    // Constant rows: mean AP equals the mean class prevalence.
    let constant: Vec<ActionDistribution> = (0..100)
        .map(|_| ActionDistribution::new(vec![[0.2; 5]; 30]).unwrap())
        .collect();
    let rep = direct_report(&constant, &truths).unwrap();
    let total = 3000.0;
    let prevalences: Vec<f64> = ActionLabel::ALL
        .iter()
        .map(|&a| truths.iter().flatten().filter(|&&x| x == a).count() as f64 / total)
        .collect();
    for a in ActionLabel::ALL {
        assert_eq!(rep.per_class[a.id()].unwrap(), prevalences[a.id()]);
    }
    assert!((rep.mean.unwrap() - prevalences.iter().sum::<f64>() / 5.0).abs() < 1e-15);
}

#[test]
fn topn_properties_on_random_fixtures() {
    let mut rng = ChaCha8Rng::seed_from_u64(39);
    let vocab: Vec<Vec<ActionLabel>> = {
        let mut v: Vec<Vec<ActionLabel>> = ActionLabel::ALL.iter().map(|&a| vec![a]).collect();
        for a in ActionLabel::ALL {
            for b in ActionLabel::ALL {
                if a != b {
                    v.push(vec![a, b]);
                }
            }
        }
        v
    };
    for _ in 0..50 {
        let n = rng.random_range(5..80);
        let mut ranked = Vec::new();
        let mut truths = Vec::new();
        for _ in 0..n {
            let mut picks = vocab.clone();
            picks.shuffle(&mut rng);
            ranked.push(RankedSequences(
                picks[..3]
                    .iter()
                    .enumerate()
                    .map(|(i, s)| RankedSequence {
                        sequence: ordered(s),
                        score: 1.0 - i as f64 * 0.1,
                        t_s: None,
                    })
                    .collect(),
            ));
            let truth = match rng.random_range(0..4) {
                0 => vec![
                    ActionLabel::Cruise,
                    ActionLabel::LaneChangeLeft,
                    ActionLabel::Cruise,
                ],
                1 => picks[rng.random_range(0..3)].clone(),
                _ => vocab[rng.random_range(0..vocab.len())].clone(),
            };
            truths.push(ordered(&truth));
        }
        let rep = topn_report(&ranked, &truths).unwrap();
        assert!(rep.total[0] <= rep.total[1] && rep.total[1] <= rep.total[2]);
        for g in &rep.groups {
            assert!(g.accuracy[0] <= g.accuracy[1] && g.accuracy[1] <= g.accuracy[2]);
            if g.sequence.len() > 2 {
                assert_eq!(g.accuracy, [0.0; 3]);
            }
        }
        for r in 0..rep.groups.len() {
            assert!((rep.confusion_top1.row_sum(r) - 100.0).abs() <= 0.1);
            assert!((rep.confusion_top2.row_sum(r) - 200.0).abs() <= 0.1);
        }
        assert!(rep.groups.windows(2).all(|w| w[0].count >= w[1].count));
    }
}

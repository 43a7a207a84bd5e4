//! Resampling preprocessing: highest-weight single-action paths through a
//! distribution trace, roulette-wheel resampled into a one-hot corpus.

use std::cmp::Ordering;

use rand::Rng;

use crate::corpus::{DistributionTrace, ObservationStep, PlanCorpus};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPath {
    pub actions: Vec<usize>,
    /// Product of the chosen confidences.
    pub weight: f64,
}

/// Descending weight, then lexicographically smallest action sequence.
fn rank(a: &WeightedPath, b: &WeightedPath) -> Ordering {
    b.weight
        .total_cmp(&a.weight)
        .then_with(|| a.actions.cmp(&b.actions))
}

/// The exact top-`n` paths by weight.
///
/// A width-`n` beam over prefixes is exact: every full path extends its prefix
/// by a suffix whose weight multiplies all prefixes alike, so a prefix outside
/// the top `n` can never yield a top-`n` path.
pub fn top_n_paths(trace: &DistributionTrace, n: usize) -> Result<Vec<WeightedPath>> {
    if n == 0 {
        return Err(Error::Config("number of paths must be positive".into()));
    }
    let mut beam = vec![WeightedPath {
        actions: Vec::with_capacity(trace.len()),
        weight: 1.0,
    }];
    for (step, s) in trace.steps().iter().enumerate() {
        let ObservationStep::Known(d) = s else {
            return Err(Error::MissingStep { trace: 0, step });
        };
        let mut next = Vec::with_capacity(beam.len() * d.len());
        for prefix in &beam {
            for &(a, c) in d.entries() {
                let mut actions = prefix.actions.clone();
                actions.push(a);
                next.push(WeightedPath {
                    actions,
                    weight: prefix.weight * c,
                });
            }
        }
        if next.len() > n {
            next.select_nth_unstable_by(n - 1, rank);
            next.truncate(n);
        }
        beam = next;
    }
    beam.sort_by(rank);
    Ok(beam)
}

/// `n_out` independent draws with replacement, each path with probability
/// proportional to its weight.
pub fn roulette_resample<R: Rng + ?Sized>(
    paths: &[WeightedPath],
    n_out: usize,
    rng: &mut R,
) -> Result<Vec<WeightedPath>> {
    Ok(roulette_indices(paths, n_out, rng)?
        .into_iter()
        .map(|i| paths[i].clone())
        .collect())
}

/// Index form of [`roulette_resample`].
pub fn roulette_indices<R: Rng + ?Sized>(
    paths: &[WeightedPath],
    n_out: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if paths.is_empty() {
        return Err(Error::Config("nothing to resample".into()));
    }
    if paths.iter().any(|p| !(p.weight >= 0.0 && p.weight.is_finite())) {
        return Err(Error::Config("path weights must be finite and nonnegative".into()));
    }
    let mut cumulative = Vec::with_capacity(paths.len());
    let mut total = 0.0;
    for p in paths {
        total += p.weight;
        cumulative.push(total);
    }
    if total <= 0.0 {
        return Err(Error::ZeroWeights);
    }
    Ok((0..n_out)
        .map(|_| {
            let u = rng.gen::<f64>() * total;
            // first slot whose cumulative weight exceeds u; zero-weight slots are never hit
            cumulative
                .partition_point(|&c| c <= u)
                .min(paths.len() - 1)
        })
        .collect())
}

/// Top-`n_top` paths of every trace, resampled to `n_out` one-hot traces each.
/// Trace `i` draws from its own stream derived from `(seed, i)`.
pub fn rbm_prepare(
    corpus: &PlanCorpus,
    n_top: usize,
    n_out: usize,
    seed: u64,
) -> Result<PlanCorpus> {
    if n_out == 0 {
        return Err(Error::Config("resample count must be positive".into()));
    }
    let mut out = Vec::with_capacity(corpus.len() * n_out);
    for (ti, trace) in corpus.traces().iter().enumerate() {
        let paths = top_n_paths(trace, n_top).map_err(|e| match e {
            Error::MissingStep { step, .. } => Error::MissingStep { trace: ti, step },
            other => other,
        })?;
        let mut rng = rng::stream(seed, "resampling", ti as u64);
        for i in roulette_indices(&paths, n_out, &mut rng)? {
            out.push(DistributionTrace::from_actions(&paths[i].actions)?);
        }
    }
    Ok(PlanCorpus::new(corpus.vocab().clone(), out)?.recount())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_corpus, ActionDistribution};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn trace(steps: &[&[(usize, f64)]]) -> DistributionTrace {
        DistributionTrace::new(
            steps
                .iter()
                .map(|s| ObservationStep::Known(ActionDistribution::new(s.to_vec()).unwrap()))
                .collect(),
        )
        .unwrap()
    }

    fn brute_force(t: &DistributionTrace) -> Vec<WeightedPath> {
        let mut all = vec![WeightedPath {
            actions: vec![],
            weight: 1.0,
        }];
        for s in t.steps() {
            let d = s.known().unwrap();
            all = all
                .iter()
                .flat_map(|p| {
                    d.entries().iter().map(move |&(a, c)| {
                        let mut actions = p.actions.clone();
                        actions.push(a);
                        WeightedPath {
                            actions,
                            weight: p.weight * c,
                        }
                    })
                })
                .collect();
        }
        all.sort_by(rank);
        all
    }

    #[test]
    fn two_step_example() {
        // a=0 b=1 c=2 d=3
        let t = trace(&[&[(0, 0.6), (1, 0.4)], &[(2, 0.7), (3, 0.3)]]);
        let top = top_n_paths(&t, 4).unwrap();
        let weights: Vec<f64> = top.iter().map(|p| p.weight).collect();
        let expected = [0.42, 0.28, 0.18, 0.12];
        for (w, e) in weights.iter().zip(expected) {
            assert!((w - e).abs() < 1e-12);
        }
        assert_eq!(top[0].actions, vec![0, 2]);
        assert_eq!(top[1].actions, vec![1, 2]);
        assert_eq!(top[2].actions, vec![0, 3]);
        assert_eq!(top[3].actions, vec![1, 3]);
        assert_eq!(top_n_paths(&t, 10).unwrap().len(), 4);
    }

    #[test]
    fn single_path_is_argmax() {
        let t = trace(&[&[(0, 0.2), (1, 0.8)], &[(2, 0.5), (3, 0.5)], &[(4, 1.0)]]);
        assert_eq!(top_n_paths(&t, 1).unwrap()[0].actions, vec![1, 2, 4]);
    }

    #[test]
    fn matches_brute_force_on_random_traces() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let len = rng.gen_range(1..=5);
            let steps: Vec<Vec<(usize, f64)>> = (0..len)
                .map(|_| {
                    let k = rng.gen_range(1..=3);
                    let ids = rand::seq::index::sample(&mut rng, 5, k).into_vec();
                    let w: Vec<f64> = (0..k).map(|_| rng.gen_range(1..5) as f64).collect();
                    let s: f64 = w.iter().sum();
                    ids.into_iter().zip(w.into_iter().map(|x| x / s)).collect()
                })
                .collect();
            let refs: Vec<&[(usize, f64)]> = steps.iter().map(Vec::as_slice).collect();
            let t = trace(&refs);
            let all = brute_force(&t);
            for n in [1, 2, 3, 7, 50] {
                let top = top_n_paths(&t, n).unwrap();
                assert_eq!(top.len(), n.min(all.len()));
                for (p, q) in top.iter().zip(&all) {
                    assert_eq!(p.actions, q.actions);
                }
            }
        }
    }

    #[test]
    fn missing_step_is_an_error() {
        let c = parse_corpus(r#"[[["a",1.0]],null]"#).unwrap();
        assert!(matches!(
            top_n_paths(&c.traces()[0], 2),
            Err(Error::MissingStep { step: 1, .. })
        ));
    }

    fn path(w: f64, a: usize) -> WeightedPath {
        WeightedPath {
            actions: vec![a],
            weight: w,
        }
    }

    #[test]
    fn roulette_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = roulette_resample(&[path(0.3, 7)], 5, &mut rng).unwrap();
        assert_eq!(out, vec![path(0.3, 7); 5]);

        let idx = roulette_indices(&[path(0.5, 0), path(0.5, 1)], 10_000, &mut rng).unwrap();
        let first = idx.iter().filter(|&&i| i == 0).count();
        assert!((4700..=5300).contains(&first), "{first}");

        let idx = roulette_indices(&[path(0.9, 0), path(0.1, 1)], 10_000, &mut rng).unwrap();
        let first = idx.iter().filter(|&&i| i == 0).count();
        assert!((8860..=9140).contains(&first), "{first}");

        assert!(matches!(
            roulette_indices(&[path(0.0, 0), path(0.0, 1)], 3, &mut rng),
            Err(Error::ZeroWeights)
        ));
    }

    #[test]
    fn rbm_prepare_examples() {
        let one_hot = parse_corpus(
            "[[[\"a\",1.0]],[[\"b\",1.0]],[[\"c\",1.0]]]\n[[[\"c\",1.0]],[[\"a\",1.0]]]",
        )
        .unwrap();
        let out = rbm_prepare(&one_hot, 4, 3, 9).unwrap();
        assert_eq!(out.len(), 6);
        for (i, t) in out.traces().iter().enumerate() {
            assert_eq!(t, &one_hot.traces()[i / 3]);
        }

        let noisy = parse_corpus(
            "[[[\"a\",0.7],[\"b\",0.3]],[[\"b\",0.6],[\"c\",0.4]]]\n[[[\"c\",0.5],[\"a\",0.5]]]",
        )
        .unwrap();
        let out = rbm_prepare(&noisy, 1, 1, 3).unwrap();
        assert_eq!(out.traces(), noisy.argmax_reduced().traces());
        assert_eq!(rbm_prepare(&noisy, 5, 4, 3).unwrap().len(), 8);
        assert_eq!(
            rbm_prepare(&noisy, 3, 7, 11).unwrap(),
            rbm_prepare(&noisy, 3, 7, 11).unwrap()
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn brute(trace: &DistributionTrace) -> Vec<WeightedPath> {
            let mut all = vec![WeightedPath { actions: vec![], weight: 1.0 }];
            for s in trace.steps() {
                let d = s.known().unwrap();
                all = all
                    .iter()
                    .flat_map(|p| {
                        d.entries().iter().map(move |&(a, c)| {
                            let mut actions = p.actions.clone();
                            actions.push(a);
                            WeightedPath { actions, weight: p.weight * c }
                        })
                    })
                    .collect();
            }
            all.sort_by(rank);
            all
        }

        fn arb_trace() -> impl Strategy<Value = DistributionTrace> {
            proptest::collection::vec(proptest::collection::vec(1u32..10, 1..4), 1..6).prop_map(|steps| {
                let steps = steps
                    .into_iter()
                    .map(|w| {
                        let s: u32 = w.iter().sum();
                        let entries = w.iter().enumerate().map(|(a, &x)| (a, x as f64 / s as f64)).collect();
                        ObservationStep::Known(ActionDistribution::new(entries).unwrap())
                    })
                    .collect();
                DistributionTrace::new(steps).unwrap()
            })
        }

        proptest! {
            #[test]
            fn beam_matches_enumeration(trace in arb_trace(), n in 1usize..30) {
                let all = brute(&trace);
                let top = top_n_paths(&trace, n).unwrap();
                prop_assert_eq!(top.len(), n.min(all.len()));
                for (got, want) in top.iter().zip(&all) {
                    prop_assert!((got.weight - want.weight).abs() < 1e-12);
                }
            }

            #[test]
            fn roulette_skips_zero_weights(
                weights in proptest::collection::vec(prop_oneof![Just(0.0), 0.01f64..1.0], 1..10),
                seed in any::<u64>(),
            ) {
                prop_assume!(weights.iter().any(|&w| w > 0.0));
                let paths: Vec<WeightedPath> = weights
                    .iter()
                    .map(|&weight| WeightedPath { actions: vec![0], weight })
                    .collect();
                let picks = roulette_indices(&paths, 50, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
                prop_assert_eq!(picks.len(), 50);
                prop_assert!(picks.iter().all(|&i| weights[i] > 0.0));
            }
        }
    }
}

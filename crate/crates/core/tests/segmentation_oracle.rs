use proptest::prelude::*;
use toc_core::segmentation::{stitch, ShotBoundarySet};

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Tries every merge-decision vector and keeps those where each decision
/// agrees with comparing the running clip embedding against the next shot.
/// Returns the clip spans of the unique consistent vector.
fn brute_force(set: &ShotBoundarySet, tau: f64) -> Vec<(f64, f64)> {
    let n = set.embeddings.len();
    let dur = |i: usize| set.boundaries_s[i + 1] - set.boundaries_s[i];
    let mut consistent = Vec::new();
    for mask in 0u32..(1 << (n - 1)) {
        let mut ok = true;
        let mut spans = vec![(set.boundaries_s[0], set.boundaries_s[1])];
        let mut acc: Vec<f64> = unit(&set.embeddings[0])
            .iter()
            .map(|x| x * dur(0))
            .collect();
        for i in 1..n {
            let merge = mask & (1 << (i - 1)) != 0;
            let sim = dot(&unit(&acc), &unit(&set.embeddings[i]));
            if merge != (sim >= tau) {
                ok = false;
                break;
            }
            let e = unit(&set.embeddings[i]);
            if merge {
                spans.last_mut().unwrap().1 = set.boundaries_s[i + 1];
                for (a, x) in acc.iter_mut().zip(&e) {
                    *a += x * dur(i);
                }
            } else {
                spans.push((set.boundaries_s[i], set.boundaries_s[i + 1]));
                acc = e.iter().map(|x| x * dur(i)).collect();
            }
        }
        if ok {
            consistent.push(spans);
        }
    }
    assert_eq!(consistent.len(), 1, "exactly one greedy trace");
    consistent.pop().unwrap()
}

fn spans(set: &ShotBoundarySet, tau: f64) -> Vec<(f64, f64)> {
    stitch(set, tau)
        .unwrap()
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            assert_eq!(c.index, i);
            (c.start_s, c.end_s)
        })
        .collect()
}

#[test]
fn cosines_point_nine_then_point_three() {
    let s0 = vec![1.0, 0.0, 0.0];
    let s1 = vec![0.9, (1.0f64 - 0.81).sqrt(), 0.0];
    let s2 = {
        let b = 0.3 / (1.0f64 - 0.81).sqrt();
        vec![0.0, b, (1.0 - b * b).sqrt()]
    };
    assert!((dot(&s0, &s1) - 0.9).abs() < 1e-12);
    assert!((dot(&s1, &s2) - 0.3).abs() < 1e-12);
    let set = ShotBoundarySet {
        video_id: "v".into(),
        boundaries_s: vec![0.0, 2.0, 5.0, 9.0],
        embeddings: vec![s0, s1, s2],
    };
    let got = spans(&set, 0.85);
    assert_eq!(got, vec![(0.0, 5.0), (5.0, 9.0)]);
    assert_eq!(got, brute_force(&set, 0.85));
}

fn shot_set() -> impl Strategy<Value = ShotBoundarySet> {
    (1usize..=8, 1usize..=4).prop_flat_map(|(n, dim)| {
        (
            prop::collection::vec(0.1f64..10.0, n),
            prop::collection::vec(
                prop::collection::vec(prop_oneof![Just(0.0), -1.0f64..1.0], dim)
                    .prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3)),
                n,
            ),
        )
            .prop_map(|(durs, embeddings)| {
                let mut b = vec![0.0];
                for d in durs {
                    b.push(b.last().unwrap() + d);
                }
                ShotBoundarySet {
                    video_id: "v".into(),
                    boundaries_s: b,
                    embeddings,
                }
            })
    })
}

proptest! {
    #[test]
    fn stitch_agrees_with_exhaustive_simulation(set in shot_set(), tau in 0.05f64..=1.0) {
        prop_assert_eq!(spans(&set, tau), brute_force(&set, tau));
    }
}

mod common;

use common::*;
use groundspeech::evaluation::*;
use groundspeech::Error;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn perfect_and_worst_retrieval() {
    let e = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
    assert_eq!(rank_images(&e, &e, &[0, 1, 2]).unwrap(), vec![1, 1, 1]);

    // gold image antipodal to every query, the others orthogonal
    let q = vec![vec![1.0, 0.0, 0.0, 0.0]; 3];
    let imgs = vec![
        vec![0.0, 1.0, 0.0, 0.0],
        vec![0.0, 0.0, 1.0, 0.0],
        vec![0.0, 0.0, 0.0, 1.0],
        vec![-1.0, 0.0, 0.0, 0.0],
    ];
    assert_eq!(rank_images(&q, &imgs, &[3, 3, 3]).unwrap(), vec![4, 4, 4]);
}

#[test]
fn ranks_match_sort_oracle() {
    let mut r = rng(300);
    for _ in 0..100 {
        let u = random_unit_rows(&mut r, 20, 8);
        let i = random_unit_rows(&mut r, 20, 8);
        let gold: Vec<usize> = (0..20).map(|_| r.random_range(0..20)).collect();
        let got = rank_images(&u, &i, &gold).unwrap();
        assert_eq!(got, ranks_by_sort(&u, &i, &gold));
        let s = summarize(&got).unwrap();
        for (k, c) in RECALL_CUTOFFS.iter().enumerate() {
            let want = got.iter().filter(|&&x| x <= *c).count() as f64 / 20.0;
            assert_eq!(s.recall_at[k], want);
        }
        let mut sorted = got.clone();
        sorted.sort();
        assert_eq!(s.median_rank, (sorted[9] + sorted[10]) as f64 / 2.0);
    }
}

#[test]
fn ties_resolve_by_index() {
    let q = vec![vec![1.0, 0.0]];
    let imgs = vec![vec![0.0, 1.0], vec![0.0, 1.0], vec![0.0, -1.0]];
    assert_eq!(rank_images(&q, &imgs, &[0]).unwrap(), vec![1]);
    assert_eq!(rank_images(&q, &imgs, &[1]).unwrap(), vec![2]);
    assert_eq!(rank_images(&q, &imgs, &[2]).unwrap(), vec![3]);
}

#[test]
fn summary_examples_and_errors() {
    let s = summarize(&[1, 1, 2, 50]).unwrap();
    assert_eq!(s.recall_at, [0.5, 0.75, 0.75]);
    assert_eq!(s.median_rank, 1.5);
    let s = summarize(&[1; 7]).unwrap();
    assert_eq!((s.r1(), s.r5(), s.r10(), s.median_rank), (1.0, 1.0, 1.0, 1.0));
    assert!(matches!(summarize(&[]), Err(Error::EmptySequence(_))));

    // published full-scale row, used only to fix the record layout
    let row = RetrievalResult {
        recall_at: [0.111, 0.310, 0.444],
        median_rank: 13.0,
        per_query_rank: vec![],
    };
    assert_eq!(row.to_string(), "0.111,0.31,0.444,13");

    let e = vec![vec![1.0, 0.0]];
    assert!(matches!(rank_images(&e, &e, &[1]), Err(Error::OutOfRange { .. })));
    assert!(matches!(rank_images(&e, &e, &[0, 0]), Err(Error::Dimension { .. })));
    assert!(matches!(rank_images(&[vec![1.0, 0.0, 0.0]], &e, &[0]), Err(Error::Dimension { .. })));
}

#[test]
fn rank_dump_lines() {
    let mut out = Vec::new();
    write_rank_dump(&mut out, &["a".into(), "b".into()], &[3, 1]).unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), "a,3\nb,1\n");
}

proptest! {
    #[test]
    fn duplicate_gold_never_helps(seed in 0u64..10_000, n in 2usize..12) {
        let mut r = rng(seed);
        let u = random_unit_rows(&mut r, 4, 5);
        let mut imgs = random_unit_rows(&mut r, n, 5);
        let gold: Vec<usize> = (0..4).map(|_| r.random_range(0..n)).collect();
        let before = rank_images(&u, &imgs, &gold).unwrap();
        let dup = imgs[gold[0]].clone();
        let at = r.random_range(0..=n);
        imgs.insert(at, dup);
        let shifted: Vec<usize> = gold.iter().map(|&g| if g >= at { g + 1 } else { g }).collect();
        let after = rank_images(&u, &imgs, &shifted).unwrap();
        prop_assert!(after[0] >= before[0]);
    }

    #[test]
    fn recall_is_monotone(ranks in proptest::collection::vec(1usize..40, 1..50)) {
        let s = summarize(&ranks).unwrap();
        prop_assert!(s.r1() <= s.r5() && s.r5() <= s.r10());
        prop_assert!(s.median_rank >= 1.0 && s.median_rank <= 39.0);
    }
}

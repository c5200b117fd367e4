mod common;

use approx::assert_abs_diff_eq;
use groundspeech::audiofeat::FeatureMatrix;
use groundspeech::model::{Model, ModelConfig};
use groundspeech::probes::*;
use groundspeech::Error;
use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

/// Normal equations on an explicit intercept column with an unpenalized
/// intercept, solved by LU.
fn ridge_oracle(x: &[Vec<f64>], y: &[f64], alpha: f64) -> (Vec<f64>, f64) {
    let (n, d) = (x.len(), x[0].len());
    let a = DMatrix::from_fn(n, d + 1, |i, j| if j == 0 { 1.0 } else { x[i][j - 1] });
    let mut gram = a.transpose() * &a;
    for j in 1..=d {
        gram[(j, j)] += alpha;
    }
    let beta = gram.lu().solve(&(a.transpose() * DVector::from_column_slice(y))).unwrap();
    (beta.iter().skip(1).copied().collect(), beta[0])
}

#[test]
fn ridge_matches_normal_equations() {
    let mut r = common::rng(1);
    for trial in 0..20 {
        let (n, d) = (30 + trial, 1 + trial % 6);
        let x = common::random_matrix(&mut r, n, d, 2.0);
        let y: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
        let fit = ridge_fit_predict(&x, &y, &x, None, 1.0).unwrap();
        let (w, b) = ridge_oracle(&x, &y, 1.0);
        for (a, o) in fit.weights.iter().zip(&w) {
            assert_abs_diff_eq!(*a, *o, epsilon = 1e-8);
        }
        assert_abs_diff_eq!(fit.intercept, b, epsilon = 1e-8);
    }
}

#[test]
fn ridge_dual_form_matches_oracle() {
    let mut r = common::rng(2);
    let x = common::random_matrix(&mut r, 8, 20, 1.0);
    let y: Vec<f64> = (0..8).map(|_| r.random_range(-1.0..1.0)).collect();
    let fit = ridge_fit_predict(&x, &y, &[], None, 1.0).unwrap();
    let (w, b) = ridge_oracle(&x, &y, 1.0);
    for (a, o) in fit.weights.iter().zip(&w) {
        assert_abs_diff_eq!(*a, *o, epsilon = 1e-8);
    }
    assert_abs_diff_eq!(fit.intercept, b, epsilon = 1e-8);
}

#[test]
fn ridge_examples() {
    let mut r = common::rng(3);
    let x: Vec<Vec<f64>> = (0..100).map(|_| vec![r.random_range(-50.0..50.0)]).collect();
    let y: Vec<f64> = x.iter().map(|v| 3.0 * v[0]).collect();
    let fit = ridge_fit_predict(&x[..80], &y[..80], &x[80..], Some(&y[80..]), 1.0).unwrap();
    assert!(fit.r2.unwrap() >= 0.99);

    let flat = vec![2.0; 100];
    let fit = ridge_fit_predict(&x[..80], &flat[..80], &x[80..], Some(&flat[80..]), 1.0).unwrap();
    assert_eq!(fit.r2, Some(0.0));

    let fit = ridge_fit_predict(&x, &y, &x, Some(&y), 1e-9).unwrap();
    assert!(fit.r2.unwrap() > 1.0 - 1e-12);

    assert!(matches!(
        ridge_fit_predict(&x[..1], &y[..1], &x, None, 1.0),
        Err(Error::InsufficientData(_))
    ));
}

fn features_with_timesteps(r: &mut impl Rng, t: usize) -> ProbeFeatures {
    ProbeFeatures {
        avg_input: (0..4).map(|_| r.random_range(-1.0..1.0)).collect(),
        avg_layers: vec![(0..3).map(|_| r.random_range(-1.0..1.0)).collect(); 2],
        embedding: (0..3).map(|_| r.random_range(-1.0..1.0)).collect(),
        timestep_count: t,
    }
}

#[test]
fn length_probe_recovers_linear_timesteps() {
    let mut r = common::rng(4);
    let steps: Vec<usize> = (0..500).map(|_| r.random_range(20..400)).collect();
    let feats: Vec<ProbeFeatures> = steps.iter().map(|&t| features_with_timesteps(&mut r, t)).collect();
    let words: Vec<f64> = steps.iter().map(|&t| t as f64 / 25.0 + 1.0).collect();
    let refs: Vec<&ProbeFeatures> = feats.iter().collect();
    let report = probe_length(&refs, &words, 0).unwrap();
    assert!(report.find("length", "timesteps", "r2").unwrap().value > 0.99);
    assert!(report.find("length", "avg_input", "r2").unwrap().value < 0.1);

    let mut shuffled = words.clone();
    shuffled.shuffle(&mut r);
    let report = probe_length(&refs, &shuffled, 0).unwrap();
    for row in &report.rows {
        assert!(row.value.abs() < 0.1, "{row:?}");
    }
    assert!(matches!(probe_length(&refs[..9], &words[..9], 0), Err(Error::InsufficientData(_))));
}

#[test]
fn report_has_one_row_per_feature_set() {
    let mut r = common::rng(5);
    let feats: Vec<ProbeFeatures> = (0..20).map(|t| features_with_timesteps(&mut r, t + 5)).collect();
    let refs: Vec<&ProbeFeatures> = feats.iter().collect();
    let lengths: Vec<f64> = (0..20).map(f64::from).collect();
    let report = probe_length(&refs, &lengths, 1).unwrap();
    let text = report.to_string();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], REPORT_HEADER);
    let sets: Vec<(&str, Option<usize>)> = report
        .rows
        .iter()
        .map(|r| (r.feature_set.as_str(), r.layer))
        .collect();
    assert_eq!(
        sets,
        [
            ("avg_input", Some(0)),
            ("layer1", Some(1)),
            ("layer2", Some(2)),
            ("utt_emb", Some(3)),
            ("timesteps", None)
        ]
    );
    assert_eq!(text, probe_length(&refs, &lengths, 1).unwrap().to_string());
}

#[test]
fn probe_features_match_recompute_oracle() {
    let mut r = common::rng(6);
    let model = Model::init(ModelConfig::micro(), &mut r).unwrap();
    let rows: Vec<Vec<f32>> = (0..17)
        .map(|_| (0..13).map(|_| r.random_range(-1.0..1.0)).collect())
        .collect();
    let feats = FeatureMatrix::from_rows(&rows).unwrap();
    let p = extract_probe_features(&model, &feats).unwrap();
    let enc = model.encode_utterance(&feats, None).unwrap();
    assert_eq!(p.avg_layers.len(), 2);
    assert_eq!(p.timestep_count, enc.valid_steps);
    assert_eq!(p.embedding, enc.embedding);
    for j in 0..13 {
        let mean = rows.iter().map(|row| f64::from(row[j])).sum::<f64>() / 17.0;
        assert_abs_diff_eq!(f64::from(p.avg_input[j]), mean, epsilon = 1e-6);
    }
    for (avg, layer) in p.avg_layers.iter().zip(&enc.layers) {
        let (t, h) = layer.dims2().unwrap();
        let mean: Vec<f64> = (0..h)
            .map(|j| (0..t).map(|i| f64::from(layer.row(i)[j])).sum::<f64>() / t as f64)
            .collect();
        let want = common::normalize(&mean);
        for (a, w) in avg.iter().zip(&want) {
            assert_abs_diff_eq!(f64::from(*a), *w, epsilon = 1e-6);
        }
    }
}

#[test]
fn single_frame_average_is_that_frame() {
    let mut r = common::rng(7);
    let model = Model::init(ModelConfig::micro(), &mut r).unwrap();
    let row: Vec<f32> = (0..13).map(|_| r.random_range(-1.0..1.0)).collect();
    let feats = FeatureMatrix::from_rows(std::slice::from_ref(&row)).unwrap();
    let p = extract_probe_features(&model, &feats).unwrap();
    assert_eq!(p.avg_input, row);
    let enc = model.encode_utterance(&feats, None).unwrap();
    let l1 = &enc.layers[0];
    if l1.rows() == 1 {
        let want = common::normalize(&l1.row(0).iter().map(|&v| f64::from(v)).collect::<Vec<_>>());
        for (a, w) in p.avg_layers[0].iter().zip(&want) {
            assert_abs_diff_eq!(f64::from(*a), *w, epsilon = 1e-6);
        }
    }
}

#[test]
fn levenshtein_examples() {
    assert_eq!(levenshtein_similarity("abc", "abc"), 1.0);
    assert_eq!(levenshtein_similarity("", "abc"), 0.0);
    assert_eq!(levenshtein_similarity("", ""), 1.0);
    assert_abs_diff_eq!(levenshtein_similarity("kitten", "sitting"), 1.0 - 3.0 / 7.0, epsilon = 1e-15);
}

/// Full-table recursion over prefixes.
fn edit_oracle(a: &[char], b: &[char]) -> usize {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in t.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in t[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let cost = if a[i - 1] == b[j - 1] { 0 } else { 1 };
            t[i][j] = (t[i - 1][j] + 1).min(t[i][j - 1] + 1).min(t[i - 1][j - 1] + cost);
        }
    }
    t[a.len()][b.len()]
}

#[test]
fn levenshtein_matches_dp_oracle() {
    let mut r = common::rng(8);
    let alphabet: Vec<char> = "abcdé ".chars().collect();
    for _ in 0..1000 {
        let word = |r: &mut rand_chacha::ChaCha8Rng| -> String {
            let n = r.random_range(0..12);
            (0..n).map(|_| alphabet[r.random_range(0..alphabet.len())]).collect()
        };
        let (a, b) = (word(&mut r), word(&mut r));
        let ac: Vec<char> = a.chars().collect();
        let bc: Vec<char> = b.chars().collect();
        let d = edit_oracle(&ac, &bc);
        assert_eq!(levenshtein(&a, &b), d);
        let longest = ac.len().max(bc.len());
        let want = if longest == 0 { 1.0 } else { 1.0 - d as f64 / longest as f64 };
        assert_eq!(levenshtein_similarity(&a, &b), want);
    }
}

#[test]
fn pearson_examples() {
    let x = [1.0, 2.0, 3.0, 4.0];
    let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
    assert_abs_diff_eq!(pearson_r(&x, &y).unwrap(), 1.0, epsilon = 1e-15);
    let neg: Vec<f64> = x.iter().map(|v| -v).collect();
    assert_abs_diff_eq!(pearson_r(&x, &neg).unwrap(), -1.0, epsilon = 1e-15);
    assert_abs_diff_eq!(pearson_r(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap(), 0.5, epsilon = 1e-15);
    assert!(matches!(pearson_r(&x, &[1.0; 4]), Err(Error::UndefinedCorrelation(_))));
    assert!(matches!(pearson_r(&x, &x[..3]), Err(Error::Dimension { .. })));
}

#[test]
fn bootstrap_of_identical_lists_has_zero_spread() {
    let mut r = common::rng(9);
    let x: Vec<f64> = (0..40).map(|_| r.random_range(0.0..1.0)).collect();
    let b = bootstrap_pearson(&x, &x, 1000, &mut common::rng(1)).unwrap();
    assert_abs_diff_eq!(b.estimate, 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(b.min, 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(b.max, 1.0, epsilon = 1e-12);
}

#[test]
fn bootstrap_is_reproducible_and_brackets_the_estimate() {
    let mut r = common::rng(10);
    let x: Vec<f64> = (0..60).map(|_| r.random_range(0.0..1.0)).collect();
    let y: Vec<f64> = x.iter().map(|v| v + r.random_range(-0.5..0.5)).collect();
    let a = bootstrap_pearson(&x, &y, BOOTSTRAP_ITERATIONS, &mut common::rng(3)).unwrap();
    let b = bootstrap_pearson(&x, &y, BOOTSTRAP_ITERATIONS, &mut common::rng(3)).unwrap();
    assert_eq!(a.samples.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.samples.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_eq!(a.samples.len(), BOOTSTRAP_ITERATIONS);
    assert!(a.min <= a.estimate && a.estimate <= a.max);
    assert!(a.ci_low <= a.ci_high);
}

#[test]
fn similarity_follows_constructed_ratings() {
    // Pair k joins a random unit vector with a mix of it and an orthogonal
    // direction, at a cosine that is linear in the rating.
    let mut r = common::rng(11);
    let (n, dim) = (60, 500);
    let gauss = |r: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        common::normalize(&(0..dim).map(|_| r.random_range(-1.0..1.0)).collect::<Vec<f64>>())
    };
    let ratings: Vec<f64> = (0..n).map(|_| r.random_range(1.0..5.0)).collect();
    let mut vectors = Vec::new();
    let mut pairs = Vec::new();
    for &rating in &ratings {
        let a = gauss(&mut r);
        let e = gauss(&mut r);
        let proj = common::dot(&a, &e);
        let ortho = common::normalize(&e.iter().zip(&a).map(|(x, y)| x - proj * y).collect::<Vec<_>>());
        let cos = (rating - 3.0) / 2.5;
        let sin = (1.0 - cos * cos).sqrt();
        let b: Vec<f64> = a.iter().zip(&ortho).map(|(x, o)| cos * x + sin * o).collect();
        pairs.push((vectors.len(), vectors.len() + 1));
        vectors.push(a);
        vectors.push(b);
    }
    let sentences: Vec<String> = (0..vectors.len()).map(|k| format!("s{k}")).collect();
    let data = SimilarityData {
        pairs: &pairs,
        ratings: &ratings,
        sentences: &sentences,
        text_embeddings: None,
    };
    let cos = pair_cosines(&vectors, &pairs).unwrap();
    assert!(pearson_r(&cos, &ratings).unwrap() > 0.99);
    let out = similarity_correlations(&vectors, &data, 200, 0, "x").unwrap();
    assert_eq!(out[0].0, "r_human");
    assert!(out[0].1.estimate > 0.99);
    assert_eq!(out.last().unwrap().0, "r_edit");
}

#[test]
fn zscore_leaves_constant_columns_centered() {
    let z = zscore_columns(&[vec![1.0, 5.0], vec![3.0, 5.0]]);
    assert_eq!(z, vec![vec![-1.0, 0.0], vec![1.0, 0.0]]);
}

fn lexicon(entries: &[(&str, &str)]) -> IndexMap<String, String> {
    entries.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
}

fn counts(entries: &[(&str, usize)]) -> IndexMap<String, usize> {
    entries.iter().map(|(a, b)| (a.to_string(), *b)).collect()
}

#[test]
fn homonym_mining_conditions() {
    let lex = lexicon(&[("suite", "swit"), ("sweet", "swit"), ("theater", "θiətər"), ("theatre", "θiətər"), ("two", "tu"), ("too", "tu"), ("tail", "teil")]);
    let stop = default_stopwords();
    let kept = mine_homonyms(&lex, &counts(&[("suite", 25), ("sweet", 40)]), stop, VARIANT_SPELLINGS);
    assert_eq!(kept, vec![("suite".to_string(), "sweet".to_string())]);

    let dominated = mine_homonyms(&lex, &counts(&[("suite", 25), ("sweet", 3000)]), stop, VARIANT_SPELLINGS);
    assert!(dominated.is_empty());
    let rare = mine_homonyms(&lex, &counts(&[("suite", 20), ("sweet", 40)]), stop, VARIANT_SPELLINGS);
    assert!(rare.is_empty());
    let variants = mine_homonyms(&lex, &counts(&[("theater", 50), ("theatre", 50)]), stop, VARIANT_SPELLINGS);
    assert!(variants.is_empty());
    let stopped = mine_homonyms(&lex, &counts(&[("two", 500), ("too", 500)]), stop, VARIANT_SPELLINGS);
    assert!(stopped.is_empty());
    assert!(mine_homonyms(&lex, &counts(&[]), stop, &[]).is_empty());
}

fn separable(r: &mut impl Rng, n_a: usize, n_b: usize) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (n, sign, label) in [(n_a, 1.0, false), (n_b, -1.0, true)] {
        for _ in 0..n {
            x.push(vec![sign * r.random_range(0.5..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]);
            y.push(label);
        }
    }
    (x, y)
}

#[test]
fn homonym_rer_is_one_when_separable() {
    let (x, y) = separable(&mut common::rng(12), 25, 40);
    let err = homonym_errors(&x, &y, 0, "sep").unwrap();
    assert_eq!(err.model, 0.0);
    assert_abs_diff_eq!(err.majority, 25.0 / 65.0, epsilon = 1e-12);
    assert_eq!(err.rer(), 1.0);
}

#[test]
fn homonym_rer_is_zero_for_constant_features() {
    let x = vec![vec![0.3, -0.2, 0.5]; 65];
    let y: Vec<bool> = (0..65).map(|i| i >= 25).collect();
    let err = homonym_errors(&x, &y, 0, "const").unwrap();
    assert_eq!(err.model, err.majority);
    assert_eq!(err.rer(), 0.0);
}

#[test]
fn homonym_rer_near_zero_for_identical_distributions() {
    let mut total = 0.0;
    for seed in 0..10 {
        let mut r = common::rng(100 + seed);
        let x: Vec<Vec<f64>> = (0..200).map(|_| (0..8).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let y: Vec<bool> = (0..200).map(|i| i % 5 < 3).collect();
        let rer = homonym_errors(&x, &y, seed, "same").unwrap().rer();
        total += rer;
    }
    assert!((total / 10.0).abs() < 0.15, "mean RER {}", total / 10.0);
}

#[test]
fn stratified_folds_balance_classes() {
    let y: Vec<bool> = (0..65).map(|i| i >= 25).collect();
    let folds = stratified_folds(&y, 10, &mut common::rng(13)).unwrap();
    for f in 0..10 {
        let members: Vec<usize> = (0..65).filter(|&i| folds[i] == f).collect();
        let pos = members.iter().filter(|&&i| y[i]).count();
        assert!(pos >= 4 && members.len() - pos >= 2, "fold {f}");
    }
    assert!(matches!(
        stratified_folds(&y[20..], 10, &mut common::rng(0)),
        Err(Error::InsufficientData(_))
    ));
}

#[test]
fn homonym_items_exclude_ambiguous_utterances() {
    let words: Vec<Vec<String>> = [vec!["suite", "room"], vec!["sweet", "cake"], vec!["suite", "sweet"], vec!["dog"]]
        .iter()
        .map(|u| u.iter().map(|w| w.to_string()).collect())
        .collect();
    let items = homonym_items(&("suite".into(), "sweet".into()), &words);
    assert_eq!(items, vec![(0, false), (1, true)]);
}

#[test]
fn presence_instances_are_balanced_and_valid() {
    let mut r = common::rng(14);
    let vocab: Vec<String> = (0..12).map(|k| format!("w{k}")).collect();
    let words: Vec<Vec<String>> = (0..50)
        .map(|_| {
            let mut u: Vec<String> = vocab.choose_multiple(&mut r, 3).cloned().collect();
            u.push("the".into());
            u
        })
        .collect();
    let stop = default_stopwords();
    let inst = presence_instances(&words, |w| !stop.contains(&w), &mut r).unwrap();
    assert_eq!(inst.len(), 100);
    for p in &inst {
        assert_eq!(words[p.utterance].contains(&p.word), p.present);
        assert_ne!(p.word, "the");
    }
    let positives: Vec<&String> = inst.iter().filter(|p| p.present).map(|p| &p.word).collect();
    assert!(inst.iter().filter(|p| !p.present).all(|p| positives.contains(&&p.word)));

    let same = vec![vec!["dog".to_string()]; 5];
    assert!(matches!(
        presence_instances(&same, |_| true, &mut r),
        Err(Error::InsufficientData(_))
    ));
}

/// Instances where the word vector is a block of the utterance vector when
/// the word is present.
fn block_task(r: &mut impl Rng, n: usize, dim: usize) -> (Vec<Vec<f64>>, Vec<bool>) {
    let words: Vec<Vec<f64>> = (0..20).map(|_| (0..dim).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for k in 0..n {
        let present = k % 2 == 0;
        let target = r.random_range(0..words.len());
        let mut block = r.random_range(0..words.len());
        if present {
            block = target;
        } else if block == target {
            block = (block + 1) % words.len();
        }
        let mut row = words[block].clone();
        row.extend(words[target].iter().copied());
        x.push(row);
        y.push(present);
    }
    (x, y)
}

#[test]
fn mlp_learns_separable_presence_task() {
    let mut r = common::rng(15);
    let (x, y) = block_task(&mut r, 1000, 4);
    let cfg = MlpConfig {
        hidden: 256,
        ..MlpConfig::default()
    };
    let clf = MlpClassifier::fit(&x[..800], &y[..800], &cfg, &mut common::rng(1)).unwrap();
    let acc = clf.accuracy(&x[800..], &y[800..]).unwrap();
    assert!(acc >= 0.95, "accuracy {acc}");
}

#[test]
fn mlp_is_at_chance_on_shuffled_labels() {
    let mut r = common::rng(16);
    let (x, mut y) = block_task(&mut r, 2000, 4);
    y.shuffle(&mut r);
    let cfg = MlpConfig {
        hidden: 256,
        ..MlpConfig::default()
    };
    let clf = MlpClassifier::fit(&x[..1600], &y[..1600], &cfg, &mut common::rng(1)).unwrap();
    let acc = clf.accuracy(&x[1600..], &y[1600..]).unwrap();
    assert!((acc - 0.5).abs() <= 0.05, "accuracy {acc}");
}

#[test]
fn report_rejects_non_finite_values() {
    let mut report = ProbeReport::new();
    let row = ProbeRow {
        task: "t".into(),
        feature_set: "f".into(),
        layer: None,
        metric: "m".into(),
        value: f64::NAN,
        ci: None,
    };
    assert!(report.push(row).is_err());
    assert!(report.rows.is_empty());
}

proptest! {
    #[test]
    fn levenshtein_is_symmetric(a in "[a-c]{0,8}", b in "[a-c]{0,8}") {
        prop_assert_eq!(levenshtein_similarity(&a, &b), levenshtein_similarity(&b, &a));
        prop_assert_eq!(levenshtein_similarity(&a, &b) == 1.0, a == b);
    }

    #[test]
    fn pearson_is_affine_invariant(
        xs in prop::collection::vec(-10.0f64..10.0, 3..30),
        noise in prop::collection::vec(-10.0f64..10.0, 30),
        a in 0.1f64..10.0, b in -10.0f64..10.0, c in 0.1f64..10.0, d in -10.0f64..10.0,
    ) {
        let ys: Vec<f64> = noise[..xs.len()].to_vec();
        if let Ok(r) = pearson_r(&xs, &ys) {
            let xt: Vec<f64> = xs.iter().map(|v| a * v + b).collect();
            let yt: Vec<f64> = ys.iter().map(|v| c * v + d).collect();
            let rt = pearson_r(&xt, &yt).unwrap();
            prop_assert!((r - rt).abs() < 1e-12, "{} vs {}", r, rt);
        }
    }
}

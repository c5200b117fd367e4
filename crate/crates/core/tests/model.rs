mod common;

use common::*;
use groundspeech::audiofeat::FeatureMatrix;
use groundspeech::model::{
    attention_pool, encode_text, encode_utterance, rhn_layer, rhn_microstep, rhn_stack, Model, ModelConfig,
    ModelKind, RhnLayerNodes, SpeechNodes, TextNodes,
};
use groundspeech::numcore::{Graph, NodeId, Params, Tensor};
use groundspeech::Error;
use rand::Rng;

fn scalar_layer(g: &mut Graph<f64>, microsteps: usize, w: (f64, f64), u: &[(f64, f64)], b: &[(f64, f64)]) -> RhnLayerNodes {
    let m = |g: &mut Graph<f64>, v: f64| g.constant(Tensor::matrix(1, 1, vec![v]).unwrap());
    let v = |g: &mut Graph<f64>, x: f64| g.constant(Tensor::vector(vec![x]));
    RhnLayerNodes {
        w_h: m(g, w.0),
        w_t: m(g, w.1),
        u_h: (0..microsteps).map(|l| m(g, u[l].0)).collect(),
        u_t: (0..microsteps).map(|l| m(g, u[l].1)).collect(),
        b_h: (0..microsteps).map(|l| v(g, b[l].0)).collect(),
        b_t: (0..microsteps).map(|l| v(g, b[l].1)).collect(),
    }
}

fn micro_params(cfg: &ModelConfig, seed: u64) -> Params<f64> {
    let model = Model::init(cfg.clone(), &mut rng(seed)).unwrap();
    let mut p = model.params().cast::<f64>();
    // nonzero biases so every term of the recurrence is exercised
    let mut r = rng(seed + 1);
    for (_, t) in p.iter_mut() {
        if t.rank() == 1 {
            for v in t.data_mut() {
                *v += r.random_range(-0.3..0.3);
            }
        }
    }
    p
}

fn features(rng: &mut rand_chacha::ChaCha8Rng, frames: usize, dim: usize) -> Tensor<f64> {
    Tensor::from_rows(&random_matrix(rng, frames, dim, 1.0)).unwrap()
}

#[test]
fn image_encoder_examples() {
    let mut cfg = ModelConfig::micro();
    cfg.hidden_size = 2;
    cfg.image_dim = 2;
    let mut model = Model::init(cfg, &mut rng(0)).unwrap();
    *model.params_mut().get_mut("img.A").unwrap() = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    *model.params_mut().get_mut("img.b").unwrap() = Tensor::vector(vec![0.0, 0.0]);
    let e = model.encode_image(&[3.0, 4.0]).unwrap();
    assert!((e[0] - 0.6).abs() < 1e-7 && (e[1] - 0.8).abs() < 1e-7);

    *model.params_mut().get_mut("img.A").unwrap() = Tensor::zeros(&[2, 2]);
    *model.params_mut().get_mut("img.b").unwrap() = Tensor::vector(vec![1.0, 0.0]);
    assert_eq!(model.encode_image(&[-9.0, 2.5]).unwrap(), vec![1.0, 0.0]);
    assert!(matches!(model.encode_image(&[1.0]), Err(Error::Dimension { .. })));
}

#[test]
fn image_encoder_matches_matmul_oracle() {
    let cfg = ModelConfig::micro();
    let p = micro_params(&cfg, 3);
    let mut r = rng(4);
    let i: Vec<f64> = (0..cfg.image_dim).map(|_| r.random_range(-1.0..1.0)).collect();
    let expected = encode_image_ref(&p, &i);
    let mut g = Graph::new();
    let b = p.bind_constants(&mut g);
    let inode = g.constant(Tensor::vector(i));
    let out = groundspeech::model::encode_image(&mut g, groundspeech::model::ImageNodes::from_bound(&b).unwrap(), inode).unwrap();
    for (a, e) in g.value(out).data().iter().zip(&expected) {
        assert!((a - e).abs() < 1e-12);
    }
}

#[test]
fn conv_matches_brute_force_oracle() {
    let mut r = rng(8);
    for (s, stride, frames) in [(2, 1, 5), (3, 2, 7), (6, 3, 10), (6, 2, 1), (4, 5, 3)] {
        let x = random_matrix(&mut r, frames, 3, 1.0);
        let k = Tensor::new(vec![s, 3, 2], (0..s * 6).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
        let b = vec![0.1, -0.2];
        let expected = conv_ref(&x, &k, &b, stride);
        let mut g = Graph::new();
        let xn = g.constant(Tensor::from_rows(&x).unwrap());
        let kn = g.constant(k.clone());
        let bn = g.constant(Tensor::vector(b.clone()));
        let y = g.conv1d_full(xn, kn, bn, stride).unwrap();
        assert_eq!(to_rows(g.value(y)).len(), expected.len());
        for (a, e) in to_rows(g.value(y)).iter().zip(&expected) {
            for (x, y) in a.iter().zip(e) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn microstep_examples() {
    let mut g = Graph::new();
    let zero = scalar_layer(&mut g, 1, (0.0, 0.0), &[(0.0, 0.0)], &[(0.0, 0.0)]);
    let s = g.constant(Tensor::vector(vec![0.8]));
    let x = g.constant(Tensor::vector(vec![3.0]));
    let out = rhn_microstep(&mut g, &zero, 0, Some(x), s).unwrap();
    assert_eq!(g.value(out).data(), &[0.4]);

    let closed = scalar_layer(&mut g, 1, (0.7, 0.2), &[(0.5, 0.1)], &[(0.3, -30.0)]);
    let out = rhn_microstep(&mut g, &closed, 0, Some(x), s).unwrap();
    assert!((g.value(out).data()[0] - 0.8).abs() < 1e-12);

    // hand evaluation of h, t and the highway mix
    let layer = scalar_layer(&mut g, 2, (0.3, -0.4), &[(0.2, 0.5), (-0.6, 0.25)], &[(0.1, -0.2), (0.05, 0.3)]);
    let out = rhn_microstep(&mut g, &layer, 0, Some(x), s).unwrap();
    let h = (0.3 * 3.0 + 0.2 * 0.8 + 0.1f64).tanh();
    let t = sigmoid(-0.4 * 3.0 + 0.5 * 0.8 - 0.2);
    let expected = h * t + 0.8 * (1.0 - t);
    assert!((g.value(out).data()[0] - expected).abs() < 1e-14);
    let out2 = rhn_microstep(&mut g, &layer, 1, Some(x), out).unwrap();
    let h2 = (-0.6 * expected + 0.05f64).tanh();
    let t2 = sigmoid(0.25 * expected + 0.3);
    assert!((g.value(out2).data()[0] - (h2 * t2 + expected * (1.0 - t2))).abs() < 1e-14);
    assert!(matches!(rhn_microstep(&mut g, &layer, 2, None, s), Err(Error::OutOfRange { .. })));
}

#[test]
fn rhn_layer_examples() {
    let mut g = Graph::new();
    let layer = scalar_layer(&mut g, 2, (0.9, -0.3), &[(0.4, 0.6), (-0.5, 0.2)], &[(0.0, 0.1), (0.2, -0.4)]);
    let s0 = g.constant(Tensor::vector(vec![0.0]));

    // T = 1 equals L chained microsteps
    let x1 = g.constant(Tensor::matrix(1, 1, vec![0.7]).unwrap());
    let y = rhn_layer(&mut g, &layer, x1, s0).unwrap();
    let xv = g.constant(Tensor::vector(vec![0.7]));
    let a = rhn_microstep(&mut g, &layer, 0, Some(xv), s0).unwrap();
    let b = rhn_microstep(&mut g, &layer, 1, None, a).unwrap();
    assert_eq!(g.value(y).data(), g.value(b).data());

    // T = 3, L = 2 unrolled by hand
    let xs = [0.5, -1.0, 2.0];
    let x3 = g.constant(Tensor::matrix(3, 1, xs.to_vec()).unwrap());
    let y = rhn_layer(&mut g, &layer, x3, s0).unwrap();
    let mut s = 0.0f64;
    let mut expected = Vec::new();
    for &x in &xs {
        let h = (0.9 * x + 0.4 * s).tanh();
        let t = sigmoid(-0.3 * x + 0.6 * s + 0.1);
        s = h * t + s * (1.0 - t);
        let h = (-0.5 * s + 0.2).tanh();
        let t = sigmoid(0.2 * s - 0.4);
        s = h * t + s * (1.0 - t);
        expected.push(s);
    }
    for (a, e) in g.value(y).data().iter().zip(&expected) {
        assert!((a - e).abs() < 1e-14);
    }

    // gate forced open: plain tanh recurrence
    let open = scalar_layer(&mut g, 1, (0.8, 0.0), &[(0.5, 0.0)], &[(0.0, 40.0)]);
    let y = rhn_layer(&mut g, &open, x3, s0).unwrap();
    let mut s = 0.0f64;
    for (t, &x) in xs.iter().enumerate() {
        s = (0.8 * x + 0.5 * s).tanh();
        assert!((g.value(y).data()[t] - s).abs() < 1e-12);
    }
}

#[test]
fn residual_stack_identities() {
    let mut cfg = ModelConfig::micro();
    cfg.conv_size = cfg.hidden_size;
    let p = micro_params(&cfg, 21);
    let mut r = rng(22);
    for _ in 0..20 {
        let frames = r.random_range(1..9);
        let x = features(&mut r, frames, cfg.hidden_size);
        let mut g = Graph::new();
        let b = p.bind_constants(&mut g);
        let nodes = SpeechNodes::from_bound(&b, &cfg).unwrap();
        let xn = g.constant(x.clone());
        let plain = rhn_stack(&mut g, &nodes.layers[..1], xn, false).unwrap()[0];
        let res = rhn_stack(&mut g, &nodes.layers[..1], xn, true).unwrap()[0];
        for ((r, p), x) in g.value(res).data().iter().zip(g.value(plain).data()).zip(x.data()) {
            assert_eq!(*r, p + x);
        }
        // k = 1 equals one layer from a zero state
        let s0 = g.constant(Tensor::zeros(&[cfg.hidden_size]));
        let single = rhn_layer(&mut g, &nodes.layers[0], xn, s0).unwrap();
        assert_eq!(g.value(single).data(), g.value(plain).data());
        // k = 2 equals two composed layer oracles
        let two = rhn_stack(&mut g, &nodes.layers, xn, true).unwrap();
        let mut cfg2 = cfg.clone();
        cfg2.rhn_layers = 2;
        let expected = rhn_stack_ref(&p, &cfg2, &to_rows(&x));
        for (layer, exp) in two.iter().zip(&expected) {
            for (a, e) in to_rows(g.value(*layer)).iter().zip(exp) {
                for (u, v) in a.iter().zip(e) {
                    assert!((u - v).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn residual_width_mismatch_above_first_layer_is_an_error() {
    let mut cfg = ModelConfig::micro();
    cfg.rhn_layers = 1;
    let p = micro_params(&cfg, 5);
    let mut g = Graph::new();
    let b = p.bind_constants(&mut g);
    let nodes = SpeechNodes::from_bound(&b, &cfg).unwrap();
    let layers = vec![nodes.layers[0].clone(), nodes.layers[0].clone()];
    let x = g.constant(Tensor::zeros(&[3, cfg.conv_size]));
    assert!(matches!(rhn_stack(&mut g, &layers, x, true), Err(Error::Dimension { .. })));
}

fn attention_nodes(g: &mut Graph<f64>, w: Vec<f64>, u: Vec<f64>, width: usize) -> (NodeId, NodeId) {
    let hidden = u.len();
    (
        g.constant(Tensor::matrix(hidden, width, w).unwrap()),
        g.constant(Tensor::matrix(1, hidden, u).unwrap()),
    )
}

#[test]
fn attention_examples() {
    let mut g = Graph::new();
    let h = g.constant(Tensor::matrix(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 9.0]).unwrap());
    let (w, u) = attention_nodes(&mut g, vec![0.0; 4], vec![1.0, -2.0], 2);
    let (pooled, alpha) = attention_pool(&mut g, w, u, h, &[true; 3]).unwrap();
    assert!(g.value(alpha).data().iter().all(|a| (a - 1.0 / 3.0).abs() < 1e-15));
    assert!((g.value(pooled).data()[0] - 3.0).abs() < 1e-12);
    assert!((g.value(pooled).data()[1] - 5.0).abs() < 1e-12);

    let one = g.constant(Tensor::matrix(1, 2, vec![0.3, -0.1]).unwrap());
    let (w1, u1) = attention_nodes(&mut g, vec![0.4, 0.9], vec![1.3], 2);
    let (pooled, alpha) = attention_pool(&mut g, w1, u1, one, &[true]).unwrap();
    assert_eq!(g.value(alpha).data(), &[1.0]);
    assert_eq!(g.value(pooled).data(), &[0.3, -0.1]);

    // logits [0, ln 2]: W picks the first coordinate, U rescales tanh
    let a = 0.5f64;
    let two = g.constant(Tensor::matrix(2, 2, vec![0.0, 7.0, a, -1.0]).unwrap());
    let (w2, u2) = attention_nodes(&mut g, vec![1.0, 0.0], vec![2f64.ln() / a.tanh()], 2);
    let (pooled, _) = attention_pool(&mut g, w2, u2, two, &[true, true]).unwrap();
    let expected = [(0.0 + 2.0 * a) / 3.0, (7.0 - 2.0) / 3.0];
    for (p, e) in g.value(pooled).data().iter().zip(expected) {
        assert!((p - e).abs() < 1e-12);
    }
    assert!(matches!(
        attention_pool(&mut g, w2, u2, two, &[false, false]),
        Err(Error::EmptySequence(_))
    ));
}

#[test]
fn speech_encoder_matches_stage_oracle() {
    let cfg = ModelConfig {
        conv_length: 2,
        conv_size: 3,
        conv_stride: 1,
        rhn_layers: 2,
        microsteps: 2,
        hidden_size: 3,
        attn_hidden: 3,
        ..ModelConfig::micro()
    };
    let p = micro_params(&cfg, 31);
    let mut r = rng(32);
    for frames in [1, 2, 7, 15] {
        let x = features(&mut r, frames, cfg.input_dim);
        let (expected, expected_layers) = encode_utterance_ref(&p, &cfg, &to_rows(&x));
        let mut g = Graph::new();
        let b = p.bind_constants(&mut g);
        let nodes = SpeechNodes::from_bound(&b, &cfg).unwrap();
        let out = encode_utterance(&mut g, &nodes, &x, None).unwrap();
        for (a, e) in g.value(out.embedding).data().iter().zip(&expected) {
            assert!((a - e).abs() < 1e-12, "{frames} frames");
        }
        // first layer: conv width 3 equals hidden width 3, so it is residual too
        for (layer, exp) in out.layers.iter().zip(&expected_layers) {
            for (row, e) in to_rows(g.value(*layer)).iter().zip(exp) {
                for (u, v) in row.iter().zip(e) {
                    assert!((u - v).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn speech_encoder_contracts() {
    let cfg = ModelConfig::micro();
    let model = Model::init(cfg.clone(), &mut rng(40)).unwrap();
    let mut r = rng(41);
    for _ in 0..20 {
        let frames = r.random_range(1..30);
        let rows: Vec<Vec<f32>> = (0..frames)
            .map(|_| (0..13).map(|_| r.random_range(-5.0..5.0)).collect())
            .collect();
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let enc = model.encode_utterance(&x, None).unwrap();
        let norm: f32 = enc.embedding.iter().map(|v| v * v).sum::<f32>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
        assert_eq!(enc.layers.len(), 2);
        assert_eq!(enc.valid_steps, frames + cfg.conv_length - 1);
        let again = model.encode_utterance(&x, None).unwrap();
        assert_eq!(enc.embedding, again.embedding);
    }
}

#[test]
fn text_encoder_examples() {
    // scalar hidden, 3-word vocabulary, one microstep
    let mut g = Graph::new();
    let layer = scalar_layer(&mut g, 1, (1.2, -0.7), &[(0.5, 0.3)], &[(0.1, 0.2)]);
    let e = [0.3, -0.8, 1.5];
    let nodes = TextNodes {
        embedding: g.constant(Tensor::matrix(3, 1, e.to_vec()).unwrap()),
        layers: vec![layer],
        residual: false,
    };
    let tokens = [2, 0, 1];
    let (emb, _) = encode_text(&mut g, &nodes, &tokens).unwrap();
    let mut s = 0.0f64;
    for &tok in &tokens {
        let h = (1.2 * e[tok] + 0.5 * s + 0.1).tanh();
        let t = sigmoid(-0.7 * e[tok] + 0.3 * s + 0.2);
        s = h * t + s * (1.0 - t);
    }
    assert_eq!(g.value(emb).data(), &[s.signum()]);

    // vector case: single token is the normalized first state
    let cfg = ModelConfig {
        kind: ModelKind::Text,
        embed_dim: 4,
        vocab_size: 5,
        hidden_size: 6,
        rhn_layers: 1,
        microsteps: 1,
        ..ModelConfig::micro()
    };
    let model = Model::init(cfg.clone(), &mut rng(50)).unwrap();
    let p = model.params().cast::<f64>();
    let (emb, _) = model.encode_text(&[3]).unwrap();
    let x = vec![p.get("emb.E").unwrap().row(3).to_vec()];
    let expected = normalize(&rhn_layer_ref(&p, 1, 1, &x)[0]);
    for (a, b) in emb.iter().zip(&expected) {
        assert!((f64::from(*a) - b).abs() < 1e-6);
    }
    let mut r = rng(51);
    for _ in 0..20 {
        let toks: Vec<usize> = (0..r.random_range(1..8)).map(|_| r.random_range(0..5)).collect();
        let (emb, _) = model.encode_text(&toks).unwrap();
        let norm: f32 = emb.iter().map(|v| v * v).sum::<f32>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
    }
    assert!(matches!(model.encode_text(&[5]), Err(Error::Vocabulary { id: 5, size: 5 })));
    assert!(matches!(model.encode_text(&[]), Err(Error::EmptySequence(_))));
}

#[test]
fn checkpoint_round_trip_and_shape_validation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bin");
    let model = Model::init(ModelConfig::micro(), &mut rng(60)).unwrap();
    model.save(&path).unwrap();
    let back = Model::load(&path).unwrap();
    assert_eq!(back, model);
    let names: Vec<&str> = model.params().names().collect();
    for n in ["img.A", "img.b", "conv.K", "conv.b", "rhn1.H.W", "rhn1.H.U1", "rhn1.H.b2", "rhn2.T.U2", "attn.W", "attn.U"] {
        assert!(names.contains(&n), "{n}");
    }
    assert!(!names.contains(&"rhn1.H.W2"));

    let mut c = model.to_container();
    c.insert("conv.b", Tensor::vector(vec![0.0f32; 3]));
    assert!(matches!(Model::from_container(&c), Err(Error::Dimension { .. })));
}

#[test]
fn initialization_biases() {
    let model = Model::init(ModelConfig::micro(), &mut rng(70)).unwrap();
    for (name, t) in model.params().iter() {
        if name.contains(".T.b") {
            assert!(t.data().iter().all(|&v| v == -1.0));
        } else if t.rank() == 1 {
            assert!(t.data().iter().all(|&v| v == 0.0), "{name}");
        } else {
            let (r, c) = match t.shape() {
                [s, d, o] => (*o, s * d),
                [r, c] => (*r, *c),
                _ => unreachable!(),
            };
            let bound = (6.0 / (r + c) as f64).sqrt() as f32;
            assert!(t.data().iter().all(|v| v.abs() <= bound), "{name}");
        }
    }
}

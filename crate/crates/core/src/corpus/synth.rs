use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use indexmap::IndexMap;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::manifest::{save_manifest, EntryRef, ManifestRecord, Source, Split};
use super::Sample;
use crate::audiofeat::{featurize, quantize, write_wav, AudioSignal, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::model::Utterance;
use crate::numcore::{Container, Tensor};
use crate::rng::substream;

/// Function words mixed into synthetic utterances. They carry no image
/// content and are all on the default stopword list.
pub const FUNCTION_WORDS: [&str; 4] = ["the", "a", "on", "with"];

const SILENCE_MS: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub n_utterances: usize,
    /// Content words, homonym forms included.
    pub vocab_size: usize,
    pub homonym_pairs: usize,
    /// Occurrences of the two forms of every homonym pair.
    pub homonym_counts: (usize, usize),
    pub min_words: usize,
    pub max_words: usize,
    pub image_dim: usize,
    /// Standard deviation of the Gaussian noise added to audio and images.
    pub noise: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub similarity_pairs: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_utterances: 200,
            vocab_size: 24,
            homonym_pairs: 1,
            homonym_counts: (25, 40),
            min_words: 2,
            max_words: 4,
            image_dim: 64,
            noise: 0.0,
            val_fraction: 0.1,
            test_fraction: 0.1,
            similarity_pairs: 100,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// `n` training pairs without homonyms, splits or similarity pairs.
    pub fn pairs(n: usize, seed: u64) -> Self {
        Self {
            n_utterances: n,
            homonym_pairs: 0,
            val_fraction: 0.0,
            test_fraction: 0.0,
            similarity_pairs: 0,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_utterances == 0 || self.vocab_size == 0 || self.image_dim == 0 {
            return bad("n_utterances, vocab_size and image_dim must be positive".into());
        }
        if self.min_words == 0 || self.min_words > self.max_words {
            return bad(format!("bad word range {}..={}", self.min_words, self.max_words));
        }
        if self.vocab_size < 2 * self.homonym_pairs + 2 {
            return bad(format!(
                "vocab_size {} too small for {} homonym pairs",
                self.vocab_size, self.homonym_pairs
            ));
        }
        let (a, b) = self.homonym_counts;
        if self.homonym_pairs > 0 && (a == 0 || b == 0) {
            return bad("homonym counts must be positive".into());
        }
        if self.homonym_pairs * (a + b) > self.n_utterances {
            return bad(format!(
                "{} homonym occurrences do not fit in {} utterances",
                self.homonym_pairs * (a + b),
                self.n_utterances
            ));
        }
        if !(0.0..1.0).contains(&(self.val_fraction + self.test_fraction)) || self.val_fraction < 0.0 || self.test_fraction < 0.0 {
            return bad("split fractions must be non-negative and sum below 1".into());
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise must be a non-negative number".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthUtterance {
    pub id: String,
    pub words: Vec<String>,
    /// 16 kHz samples on the 16-bit PCM grid.
    pub audio: Vec<f32>,
    pub image_id: String,
    pub image: Vec<f32>,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityPair {
    pub a: String,
    pub b: String,
    pub rating: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCorpus {
    pub utterances: Vec<SynthUtterance>,
    /// Word to pronunciation; homonym forms share one pronunciation.
    pub lexicon: IndexMap<String, String>,
    pub counts: IndexMap<String, usize>,
    /// Isolated audio of every word, function words included.
    pub word_audio: IndexMap<String, Vec<f32>>,
    pub homonyms: Vec<(String, String)>,
    pub similarity: Vec<SimilarityPair>,
}

#[derive(Clone, Copy, Debug)]
struct Template {
    f1: f64,
    f2: f64,
    phase: f64,
    samples: usize,
}

impl Template {
    fn random<R: Rng>(rng: &mut R) -> Self {
        let ms = rng.random_range(200..=400);
        Self {
            f1: rng.random_range(250.0..1500.0),
            f2: rng.random_range(1500.0..4500.0),
            phase: rng.random_range(0.0..std::f64::consts::TAU),
            samples: ms * SAMPLE_RATE as usize / 1000,
        }
    }

    fn render(&self, out: &mut Vec<f32>) {
        let sr = f64::from(SAMPLE_RATE);
        let n = self.samples as f64;
        out.extend((0..self.samples).map(|k| {
            let t = k as f64 / sr;
            let env = (std::f64::consts::PI * k as f64 / n).sin();
            let tau = std::f64::consts::TAU;
            (env * (0.25 * (tau * self.f1 * t).sin() + 0.2 * (tau * self.f2 * t + self.phase).sin())) as f32
        }));
    }
}

fn silence(out: &mut Vec<f32>) {
    out.extend(std::iter::repeat_n(0.0, SILENCE_MS * SAMPLE_RATE as usize / 1000));
}

fn random_word<R: Rng>(rng: &mut R, taken: &HashSet<String>) -> String {
    const C: &[u8] = b"bdfgklmnprstvz";
    const V: &[u8] = b"aeiou";
    loop {
        let syllables = rng.random_range(2..=3);
        let w: String = (0..syllables)
            .flat_map(|_| [*C.choose(rng).unwrap() as char, *V.choose(rng).unwrap() as char])
            .collect();
        if !taken.contains(&w) {
            return w;
        }
    }
}

/// A second spelling of `w`: the last vowel is replaced.
fn variant_spelling<R: Rng>(rng: &mut R, w: &str, taken: &HashSet<String>) -> String {
    let mut chars: Vec<char> = w.chars().collect();
    let last = chars.len() - 1;
    loop {
        let v = *b"aeiouy".choose(rng).unwrap() as char;
        chars[last] = v;
        let s: String = chars.iter().collect();
        if !taken.contains(&s) {
            return s;
        }
        chars.push('h');
        let s: String = chars.iter().collect();
        if !taken.contains(&s) {
            return s;
        }
        chars.pop();
    }
}

struct Plan {
    content: Vec<usize>,
    function: Option<usize>,
}

/// Deterministic synthetic corpus for desk-scale runs.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SyntheticCorpus> {
    cfg.validate()?;
    let mut wrng = substream(cfg.seed, "words");
    let mut taken: HashSet<String> = FUNCTION_WORDS.iter().map(|s| s.to_string()).collect();
    taken.extend(crate::probes::default_stopwords().iter().map(|s| s.to_string()));

    // content words: homonym forms first (pairs at 2p, 2p+1), then the rest
    let mut words: Vec<String> = Vec::with_capacity(cfg.vocab_size);
    let mut homonyms = Vec::new();
    for _ in 0..cfg.homonym_pairs {
        let a = random_word(&mut wrng, &taken);
        taken.insert(a.clone());
        let b = variant_spelling(&mut wrng, &a, &taken);
        taken.insert(b.clone());
        homonyms.push((a.clone(), b.clone()));
        words.push(a);
        words.push(b);
    }
    while words.len() < cfg.vocab_size {
        let w = random_word(&mut wrng, &taken);
        taken.insert(w.clone());
        words.push(w);
    }

    let mut trng = substream(cfg.seed, "templates");
    let mut lexicon = IndexMap::new();
    let mut templates: IndexMap<String, Template> = IndexMap::new();
    for (k, w) in words.iter().enumerate() {
        let canonical = if k < 2 * cfg.homonym_pairs { &words[k - k % 2] } else { w };
        let t = match templates.get(canonical) {
            Some(t) => *t,
            None => Template::random(&mut trng),
        };
        templates.insert(w.clone(), t);
        lexicon.insert(w.clone(), format!("/{canonical}/"));
    }
    for f in FUNCTION_WORDS {
        templates.insert(f.to_string(), Template::random(&mut trng));
        lexicon.insert(f.to_string(), format!("/{f}/"));
    }

    let mut urng = substream(cfg.seed, "utterances");
    let plain: Vec<usize> = (2 * cfg.homonym_pairs..cfg.vocab_size).collect();
    let (ctx_a, ctx_b) = plain.split_at(plain.len() / 2);
    let mut plans = Vec::with_capacity(cfg.n_utterances);
    let with_function = |rng: &mut rand_chacha::ChaCha8Rng, content: Vec<usize>| Plan {
        function: rng.random_bool(0.5).then(|| rng.random_range(0..FUNCTION_WORDS.len())),
        content,
    };
    for p in 0..cfg.homonym_pairs {
        for (form, count, ctx) in [(2 * p, cfg.homonym_counts.0, ctx_a), (2 * p + 1, cfg.homonym_counts.1, ctx_b)] {
            for _ in 0..count {
                let k = urng.random_range(cfg.min_words..=cfg.max_words).min(ctx.len() + 1);
                let mut content = vec![form];
                content.extend(ctx.choose_multiple(&mut urng, k - 1).copied());
                content.shuffle(&mut urng);
                plans.push(with_function(&mut urng, content));
            }
        }
    }
    let mut bags: BTreeSet<Vec<usize>> = BTreeSet::new();
    while plans.len() < cfg.n_utterances {
        // distinct bags keep matched images strictly closest when noise is 0
        let mut content = Vec::new();
        for attempt in 0..100 {
            let k = urng.random_range(cfg.min_words..=cfg.max_words).min(plain.len());
            content = plain.choose_multiple(&mut urng, k).copied().collect();
            let mut bag = content.clone();
            bag.sort_unstable();
            if bags.insert(bag) || attempt == 99 {
                break;
            }
        }
        content.shuffle(&mut urng);
        plans.push(with_function(&mut urng, content));
    }
    plans.shuffle(&mut urng);

    let mut irng = substream(cfg.seed, "images");
    let scale = 1.0 / (cfg.image_dim as f64).sqrt();
    let projection: Vec<Vec<f64>> = (0..cfg.image_dim)
        .map(|_| {
            (0..cfg.vocab_size)
                .map(|_| scale * Distribution::<f64>::sample(&StandardNormal, &mut irng))
                .collect()
        })
        .collect();

    let mut nrng = substream(cfg.seed, "noise");
    let mut utterances = Vec::with_capacity(plans.len());
    let mut counts: IndexMap<String, usize> = words
        .iter()
        .map(|w| (w.clone(), 0))
        .chain(FUNCTION_WORDS.iter().map(|f| (f.to_string(), 0)))
        .collect();
    for (k, plan) in plans.iter().enumerate() {
        let mut tokens: Vec<String> = plan.content.iter().map(|&c| words[c].clone()).collect();
        if let Some(f) = plan.function {
            let at = urng.random_range(0..=tokens.len());
            tokens.insert(at, FUNCTION_WORDS[f].to_string());
        }
        let mut audio = Vec::new();
        silence(&mut audio);
        for t in &tokens {
            templates[t.as_str()].render(&mut audio);
            silence(&mut audio);
            *counts.get_mut(t.as_str()).expect("known word") += 1;
        }
        for s in audio.iter_mut() {
            let n: f64 = StandardNormal.sample(&mut nrng);
            *s = quantize(*s + (cfg.noise * n) as f32);
        }
        let image: Vec<f32> = projection
            .iter()
            .map(|row| {
                let clean: f64 = plan.content.iter().map(|&c| row[c]).sum();
                let n: f64 = StandardNormal.sample(&mut irng);
                (clean + cfg.noise * n) as f32
            })
            .collect();
        utterances.push(SynthUtterance {
            id: format!("utt{k:05}"),
            words: tokens,
            audio,
            image_id: format!("img{k:05}"),
            image,
            split: Split::Train,
        });
    }

    let mut srng = substream(cfg.seed, "split");
    let mut order: Vec<usize> = (0..utterances.len()).collect();
    order.shuffle(&mut srng);
    let n = utterances.len() as f64;
    let n_test = (n * cfg.test_fraction).round() as usize;
    let n_val = (n * cfg.val_fraction).round() as usize;
    for (pos, &k) in order.iter().enumerate() {
        utterances[k].split = if pos < n_test {
            Split::Test
        } else if pos < n_test + n_val {
            Split::Val
        } else {
            Split::Train
        };
    }

    let mut prng = substream(cfg.seed, "similarity");
    let mut similarity = Vec::with_capacity(cfg.similarity_pairs);
    if utterances.len() >= 2 {
        for _ in 0..cfg.similarity_pairs {
            let a = prng.random_range(0..utterances.len());
            let mut b = prng.random_range(0..utterances.len() - 1);
            if b >= a {
                b += 1;
            }
            let set = |k: usize| -> HashSet<&str> {
                plans[k].content.iter().map(|&c| words[c].as_str()).collect()
            };
            let (sa, sb) = (set(a), set(b));
            let jaccard = sa.intersection(&sb).count() as f64 / sa.union(&sb).count() as f64;
            similarity.push(SimilarityPair {
                a: utterances[a].id.clone(),
                b: utterances[b].id.clone(),
                rating: 1.0 + 4.0 * jaccard,
            });
        }
    }

    let word_audio = templates
        .iter()
        .map(|(w, t)| {
            let mut a = Vec::new();
            silence(&mut a);
            t.render(&mut a);
            silence(&mut a);
            a.iter_mut().for_each(|s| *s = quantize(*s));
            (w.clone(), a)
        })
        .collect();

    Ok(SyntheticCorpus {
        utterances,
        lexicon,
        counts,
        word_audio,
        homonyms,
        similarity,
    })
}

pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const IMAGES_FILE: &str = "images.bin";
pub const LEXICON_FILE: &str = "lexicon.tsv";
pub const COUNTS_FILE: &str = "counts.tsv";
pub const SIMILARITY_FILE: &str = "similarity.tsv";
pub const HOMONYMS_FILE: &str = "homonyms.tsv";

impl SyntheticCorpus {
    pub fn manifest(&self) -> Vec<ManifestRecord> {
        self.utterances
            .iter()
            .map(|u| ManifestRecord {
                utt_id: u.id.clone(),
                source: Source::Audio(format!("audio/{}.wav", u.id).into()),
                transcript: u.words.clone(),
                image_id: u.image_id.clone(),
                image_ref: EntryRef {
                    file: IMAGES_FILE.into(),
                    entry: u.image_id.clone(),
                },
                split: u.split,
            })
            .collect()
    }

    /// Writes the corpus as files under `dir` and returns its manifest.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<Vec<ManifestRecord>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir.join("audio"))?;
        std::fs::create_dir_all(dir.join("words"))?;
        for u in &self.utterances {
            let sig = AudioSignal::new(u.audio.clone(), SAMPLE_RATE)?;
            write_wav(dir.join(format!("audio/{}.wav", u.id)), &sig)?;
        }
        for (w, a) in &self.word_audio {
            write_wav(dir.join(format!("words/{w}.wav")), &AudioSignal::new(a.clone(), SAMPLE_RATE)?)?;
        }
        let images: Container = self
            .utterances
            .iter()
            .map(|u| (u.image_id.clone(), Tensor::vector(u.image.clone())))
            .collect();
        images.save(dir.join(IMAGES_FILE))?;
        let tsv = |rows: Vec<String>| rows.concat();
        std::fs::write(
            dir.join(LEXICON_FILE),
            tsv(self.lexicon.iter().map(|(w, p)| format!("{w}\t{p}\n")).collect()),
        )?;
        std::fs::write(
            dir.join(COUNTS_FILE),
            tsv(self.counts.iter().map(|(w, c)| format!("{w}\t{c}\n")).collect()),
        )?;
        std::fs::write(
            dir.join(SIMILARITY_FILE),
            tsv(self
                .similarity
                .iter()
                .map(|p| format!("{}\t{}\t{}\n", p.a, p.b, p.rating))
                .collect()),
        )?;
        std::fs::write(
            dir.join(HOMONYMS_FILE),
            tsv(self.homonyms.iter().map(|(a, b)| format!("{a}\t{b}\n")).collect()),
        )?;
        let manifest = self.manifest();
        save_manifest(dir.join(MANIFEST_FILE), &manifest)?;
        Ok(manifest)
    }

    /// Featurized speech samples, in corpus order.
    pub fn samples(&self, with_deltas: bool, truncate_ms: Option<u32>) -> Result<Vec<Sample>> {
        self.utterances
            .par_iter()
            .map(|u| {
                let sig = AudioSignal::new(u.audio.clone(), SAMPLE_RATE)?;
                Ok(Sample {
                    id: u.id.clone(),
                    image_id: u.image_id.clone(),
                    words: u.words.clone(),
                    utterance: Utterance::Speech(featurize(&sig, with_deltas, truncate_ms)?),
                    image: u.image.clone(),
                })
            })
            .collect()
    }
}

//! Regenerates the checked-in test fixtures.
//!
//! `cargo run -p promptbank --example make_fixtures -- crates/promptbank/tests/fixtures`
//!
//! Embeddings come from a bag-of-concepts stand-in encoder: each content
//! word owns a concept axis plus a small word-specific offset, stop words
//! carry only the offset, and a text embeds as the sum of its words. Video
//! frames are the concept mix of the video's topic plus seeded jitter.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use promptbank::io::captions::write_captions;
use promptbank::io::json::write_json;
use promptbank::io::{mgpb, mgpv};
use promptbank_core::banks::emit_sg_candidates;
use promptbank_core::corpus::{Caption, CaptionCorpus, EmbeddingBank, FrameMatrix, Triple, VideoFeatureStore};
use promptbank_core::rng::{derive_seed, derive_seed_for, SplitMix64};
use promptbank_core::taxonomy::{CategoryFile, DEFAULT_TAXONOMY};

const DIM: usize = 16;
const CONCEPTS: usize = 8;
const FRAMES: usize = 6;

/// Concept axes: sport, cooking, animal, music, person, place, object, group.
const LEXICON: &[(&str, usize)] = &[
    ("basketball", 0), ("ball", 0), ("hoop", 0), ("hoops", 0), ("court", 0), ("game", 0), ("gym", 0), ("shoots", 0), ("dribbles", 0),
    ("tomato", 1), ("tomatoes", 1), ("kitchen", 1), ("slicing", 1), ("cuts", 1), ("vegetables", 1), ("salad", 1), ("cooking", 1),
    ("food", 1), ("cooks", 1), ("restaurant", 1), ("pan", 1), ("chef", 1), ("knife", 1), ("board", 1),
    ("dog", 2), ("dogs", 2), ("puppy", 2), ("animal", 2), ("grass", 2), ("stick", 2), ("fence", 2), ("running", 2), ("chase", 2), ("fetch", 2),
    ("guitar", 3), ("stage", 3), ("song", 3), ("music", 3), ("concert", 3), ("band", 3), ("musician", 3), ("sings", 3),
    ("strums", 3), ("crowd", 3), ("audience", 3),
    ("boy", 4), ("man", 4), ("woman", 4), ("lady", 4), ("child", 4), ("kids", 4), ("someone", 4), ("he", 4), ("she", 4),
    ("people", 4), ("guy", 4),
    ("park", 5), ("outside", 5), ("room", 5),
    ("two", 7), ("some", 7), ("group", 7),
];

const STOP: &[&str] = &["a", "an", "the", "is", "in", "on", "of", "with", "to", "his", "her", "into", "at", "for", "across", "over", "are"];

fn fnv(text: &str, salt: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ salt;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn word_vector(word: &str, salt: u64) -> [f64; DIM] {
    let mut v = [0.0; DIM];
    let mut rng = SplitMix64::new(fnv(word, salt));
    let offset = if STOP.contains(&word) { 0.05 } else { 0.35 };
    for x in v.iter_mut().skip(CONCEPTS) {
        *x = offset * (rng.next_f64() * 2.0 - 1.0);
    }
    match LEXICON.iter().find(|(w, _)| *w == word) {
        Some(&(_, axis)) => v[axis] += 1.0,
        None if !STOP.contains(&word) => v[6] += 0.5,
        None => {}
    }
    v
}

fn embed(text: &str, salt: u64) -> Vec<f32> {
    let mut sum = [0.0f64; DIM];
    for word in text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
        let w = word_vector(&word.to_lowercase(), salt);
        for (s, x) in sum.iter_mut().zip(w) {
            *s += x;
        }
    }
    sum.iter().map(|&x| x as f32).collect()
}

fn bank<S: AsRef<str>>(keys: &[S], salt: u64) -> EmbeddingBank {
    EmbeddingBank::from_rows(DIM, keys.iter().map(|k| (k.as_ref().to_string(), embed(k.as_ref(), salt)))).expect("unique keys")
}

struct Spec {
    id: &'static str,
    video: &'static str,
    text: &'static str,
    /// (phrase, category index into the fixture taxonomy)
    phrases: &'static [(&'static str, usize)],
    triples: &'static [(&'static str, &'static str, &'static str)],
}

/// Topic mix of each video: (axis, weight).
type Topic = (&'static str, &'static [(usize, f64)]);

struct Fixture {
    captions: &'static [Spec],
    topics: &'static [Topic],
    taxonomy: &'static [&'static str],
    seed: u64,
}

// Category indices into the default taxonomy.
const OVERALL: usize = 0;
const PLURAL: usize = 2;
const OBJECT: usize = 4;
const PLACE: usize = 5;
const SINGULAR: usize = 6;

const TOY_CAPTIONS: &[Spec] = &[
    Spec { id: "v1c1", video: "v1", text: "a boy in a blue jersey is playing basketball in a gym", phrases: &[("a boy in a blue jersey", SINGULAR), ("basketball", OBJECT), ("a gym", PLACE)], triples: &[("boy", "play", "basketball"), ("boy", "in", "gym")] },
    Spec { id: "v1c2", video: "v1", text: "a boy in a red jersey dribbles the basketball", phrases: &[("a boy in a red jersey", SINGULAR), ("the basketball", OBJECT)], triples: &[("boy", "dribble", "basketball")] },
    Spec { id: "v1c3", video: "v1", text: "the boy throws the ball into the hoop", phrases: &[("the boy", SINGULAR), ("the ball", OBJECT), ("the hoop", OBJECT)], triples: &[("boy", "throw", "ball"), ("ball", "into", "hoop")] },
    Spec { id: "v1c4", video: "v1", text: "two kids play a game of basketball", phrases: &[("two kids", PLURAL), ("a game of basketball", OVERALL)], triples: &[("kids", "play", "game")] },
    Spec { id: "v1c5", video: "v1", text: "a child shoots hoops on a court", phrases: &[("a child", SINGULAR), ("hoops", OBJECT), ("a court", PLACE)], triples: &[("child", "shoot", "hoops"), ("child", "on", "court")] },
    Spec { id: "v2c1", video: "v2", text: "a woman in a red apron is slicing a tomato in the kitchen", phrases: &[("a woman in a red apron", SINGULAR), ("a tomato", OBJECT), ("the kitchen", PLACE)], triples: &[("woman", "slice", "tomato"), ("woman", "in", "kitchen")] },
    Spec { id: "v2c2", video: "v2", text: "a woman in a white apron is slicing a red tomato", phrases: &[("a woman in a white apron", SINGULAR), ("a red tomato", OBJECT)], triples: &[("woman", "slice", "tomato")] },
    Spec { id: "v2c3", video: "v2", text: "the chef cuts vegetables on a board", phrases: &[("the chef", SINGULAR), ("vegetables", OBJECT), ("a board", OBJECT)], triples: &[("chef", "cut", "vegetables"), ("vegetables", "on", "board")] },
    Spec { id: "v2c4", video: "v2", text: "two cooks prepare a salad in a restaurant", phrases: &[("two cooks", PLURAL), ("a salad", OBJECT), ("a restaurant", PLACE)], triples: &[("cooks", "prepare", "salad")] },
    Spec { id: "v2c5", video: "v2", text: "a cooking show about food", phrases: &[("a cooking show", OVERALL), ("food", OBJECT)], triples: &[] },
    Spec { id: "v3c1", video: "v3", text: "a dog with a red collar is running across the grass in a park", phrases: &[("a dog with a red collar", SINGULAR), ("the grass", PLACE), ("a park", PLACE)], triples: &[("dog", "run", "grass"), ("dog", "in", "park")] },
    Spec { id: "v3c2", video: "v3", text: "a dog with a blue collar is running in the park", phrases: &[("a dog with a blue collar", SINGULAR), ("the park", PLACE)], triples: &[("dog", "run", "park")] },
    Spec { id: "v3c3", video: "v3", text: "two dogs chase a ball outside", phrases: &[("two dogs", PLURAL), ("a ball", OBJECT)], triples: &[("dogs", "chase", "ball")] },
    Spec { id: "v3c4", video: "v3", text: "a puppy plays with a stick", phrases: &[("a puppy", SINGULAR), ("a stick", OBJECT)], triples: &[("puppy", "play", "stick")] },
    Spec { id: "v3c5", video: "v3", text: "a video of a dog playing fetch", phrases: &[("a video of a dog", OVERALL), ("fetch", OBJECT)], triples: &[("dog", "play", "fetch")] },
    Spec { id: "v4c1", video: "v4", text: "a man in a black shirt is playing an electric guitar on stage", phrases: &[("a man in a black shirt", SINGULAR), ("an electric guitar", OBJECT), ("stage", PLACE)], triples: &[("man", "play", "guitar"), ("man", "on", "stage")] },
    Spec { id: "v4c2", video: "v4", text: "a man in a white shirt is playing the electric guitar", phrases: &[("a man in a white shirt", SINGULAR), ("the electric guitar", OBJECT)], triples: &[("man", "play", "guitar")] },
    Spec { id: "v4c3", video: "v4", text: "the musician sings a song to the crowd", phrases: &[("the musician", SINGULAR), ("a song", OBJECT), ("the crowd", PLURAL)], triples: &[("musician", "sing", "song")] },
    Spec { id: "v4c4", video: "v4", text: "a band performs music at a concert", phrases: &[("a band", PLURAL), ("music", OBJECT), ("a concert", OVERALL)], triples: &[("band", "perform", "music"), ("band", "at", "concert")] },
    Spec { id: "v4c5", video: "v4", text: "he strums his guitar for an audience", phrases: &[("he", SINGULAR), ("his guitar", OBJECT), ("an audience", PLURAL)], triples: &[("he", "strum", "guitar")] },
];

const TOY_TOPICS: &[Topic] = &[
    ("v1", &[(0, 1.0), (4, 0.5), (5, 0.2)]),
    ("v2", &[(1, 1.0), (4, 0.5), (5, 0.2)]),
    ("v3", &[(2, 1.0), (5, 0.4), (0, 0.2)]),
    ("v4", &[(3, 1.0), (4, 0.6), (7, 0.2)]),
];

/// The two-video example used for the in-domain statistics walk-through.
const WORKED_CAPTIONS: &[Spec] = &[
    Spec { id: "w1", video: "video1", text: "a man kicks a ball", phrases: &[("a man", 0), ("a ball", 1)], triples: &[("man", "kick", "ball")] },
    Spec { id: "w2", video: "video1", text: "a man runs", phrases: &[("a man", 0)], triples: &[] },
    Spec { id: "w3", video: "video2", text: "a dog sleeps", phrases: &[("a dog", 1)], triples: &[] },
];

const WORKED_TOPICS: &[Topic] = &[("video1", &[(0, 1.0), (4, 0.8)]), ("video2", &[(2, 1.0)])];

const TOY: Fixture = Fixture { captions: TOY_CAPTIONS, topics: TOY_TOPICS, taxonomy: &DEFAULT_TAXONOMY, seed: 7 };

const WORKED: Fixture = Fixture { captions: WORKED_CAPTIONS, topics: WORKED_TOPICS, taxonomy: &["People", "Object"], seed: 11 };

fn corpus(specs: &[Spec]) -> CaptionCorpus {
    let captions = specs
        .iter()
        .map(|s| Caption {
            id: s.id.into(),
            video_id: s.video.into(),
            text: s.text.into(),
            noun_phrases: s.phrases.iter().map(|(p, _)| p.to_string()).collect(),
            triples: s.triples.iter().map(|&(a, p, b)| Triple::new(a, p, b)).collect(),
        })
        .collect();
    CaptionCorpus::new(captions).expect("fixture ids are unique")
}

fn videos(topics: &[Topic], seed: u64) -> VideoFeatureStore {
    let mut store = VideoFeatureStore::new(DIM);
    for (id, mix) in topics {
        let mut rng = SplitMix64::new(derive_seed_for(seed, id));
        let mut data = Vec::with_capacity(FRAMES * DIM);
        for _ in 0..FRAMES {
            let mut frame = [0.0f64; DIM];
            for &(axis, w) in mix.iter() {
                frame[axis] += w;
            }
            for x in frame.iter_mut() {
                *x += 0.08 * rng.next_normal();
            }
            data.extend(frame.iter().map(|&x| x as f32));
        }
        store.insert(*id, FrameMatrix::new(DIM, data).expect("whole frames")).expect("unique videos");
    }
    store
}

fn write(fixture: &Fixture, dir: &Path) -> promptbank::Result<()> {
    let corpus = corpus(fixture.captions);
    write_captions(&dir.join("captions.jsonl"), &corpus)?;
    let mut assignments: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for &(phrase, category) in fixture.captions.iter().flat_map(|s| s.phrases) {
        let list = assignments.entry(fixture.taxonomy[category].to_string()).or_default();
        if !list.iter().any(|p| p == phrase) {
            list.push(phrase.to_string());
        }
    }
    let file = CategoryFile { taxonomy: fixture.taxonomy.iter().map(|s| s.to_string()).collect(), assignments };
    write_json(&dir.join("categories.json"), &file)?;
    let strings = emit_sg_candidates(&corpus).strings;
    let sentence_salt = derive_seed(fixture.seed, 1);
    let joint_salt = derive_seed(fixture.seed, 2);
    mgpb::write(&dir.join("bge.mgpb"), &bank(&strings, sentence_salt))?;
    mgpb::write(&dir.join("clip_text.mgpb"), &bank(&strings, joint_salt))?;
    let caption_rows = corpus.captions().iter().map(|c| (c.id.clone(), embed(&c.text, joint_salt)));
    mgpb::write(&dir.join("clip_captions.mgpb"), &EmbeddingBank::from_rows(DIM, caption_rows)?)?;
    mgpv::write(&dir.join("video_features.mgpv"), &videos(fixture.topics, derive_seed(fixture.seed, 3)))?;
    Ok(())
}

const METRIC_WORDS: &[&str] = &[
    "a", "man", "is", "playing", "guitar", "the", "dog", "runs", "in", "park", "woman", "cooking", "food", "on", "stage", "two",
    "people", "are", "dancing", "ball",
];

fn sentence(rng: &mut SplitMix64, min: usize, max: usize) -> Vec<&'static str> {
    let len = min + rng.next_index(max - min + 1);
    (0..len).map(|_| METRIC_WORDS[rng.next_index(METRIC_WORDS.len())]).collect()
}

/// Copies `base` with about a third of its words replaced, dropped or
/// doubled, so references overlap their candidate partially.
fn paraphrase(rng: &mut SplitMix64, base: &[&'static str]) -> Vec<&'static str> {
    let mut out = Vec::with_capacity(base.len() + 2);
    for &w in base {
        match rng.next_index(9) {
            0 => out.push(METRIC_WORDS[rng.next_index(METRIC_WORDS.len())]),
            1 => {}
            2 => out.extend([w, w]),
            _ => out.push(w),
        }
    }
    if out.is_empty() {
        out.push(base[0]);
    }
    out
}

#[derive(serde::Serialize)]
struct MetricSet {
    candidates: Vec<String>,
    references: Vec<Vec<String>>,
}

/// Twenty candidate/reference sets with 2 to 6 items each.
fn metric_sets(seed: u64) -> Vec<MetricSet> {
    let mut rng = SplitMix64::new(seed);
    (0..20)
        .map(|_| {
            let items = 2 + rng.next_index(5);
            let mut set = MetricSet { candidates: Vec::new(), references: Vec::new() };
            for _ in 0..items {
                let base = sentence(&mut rng, 2, 11);
                let refs = 1 + rng.next_index(4);
                let references = (0..refs)
                    .map(|_| if rng.next_index(5) == 0 { sentence(&mut rng, 3, 10) } else { paraphrase(&mut rng, &base) })
                    .map(|r| r.join(" "))
                    .collect();
                set.candidates.push(base.join(" "));
                set.references.push(references);
            }
            set
        })
        .collect()
}

fn main() -> promptbank::Result<()> {
    let root = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("crates/promptbank/tests/fixtures"));
    write(&TOY, &root.join("toy"))?;
    write(&WORKED, &root.join("worked"))?;
    write_json(&root.join("metric_sets.json"), &metric_sets(23))?;
    println!("fixtures written to {}", root.display());
    Ok(())
}

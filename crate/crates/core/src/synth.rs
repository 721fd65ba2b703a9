//! Deterministic synthetic corpus generation.
//!
//! Sentences are bags of words drawn from a topic mixture: every
//! sentence picks one of a fixed set of topics, then mixes shared
//! high-frequency function words with Zipf-distributed content words
//! private to that topic. Because each content word belongs to exactly
//! one topic, its contexts are coherent — except for one deliberately
//! ambiguous marker word ("apple") that lives in both the fruit and the
//! tech topic and therefore sees two unrelated context distributions.
//!
//! Within a topic, words are not exchangeable: every word carries a
//! fixed random set of collocation partners, and each sentence is built
//! around one anchor word whose partners dominate its content slots.
//! Without this second-order structure all words of a topic would see
//! literally identical context distributions and their embeddings would
//! collapse onto a single direction per topic.
//!
//! The same ground truth that drives generation also yields a
//! contextual-similarity fixture in the tab-separated rated-pairs
//! format: same-topic pairs get high human-style ratings, cross-topic
//! pairs low ones, and pairs involving the ambiguous marker are rated
//! by which of its two topics the context comes from.

use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use rand::distributions::{Distribution, Uniform, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The one word generated with two unrelated context distributions.
pub const AMBIGUOUS_MARKER: &str = "apple";

/// Shared topic-neutral words; kept few and frequent so all of them sit
/// in the head of the frequency ranking, well above mid-band ranks.
const FUNCTION_WORDS: &[&str] = &[
    "the", "of", "and", "a", "to", "in", "is", "was", "it", "for", "on", "are", "as", "with",
    "his", "they", "be", "at", "one", "have", "this", "from", "or", "had", "by", "but", "not",
    "what", "all", "were", "we", "when", "your", "can", "said", "there", "each", "which", "she",
];

/// Real seed words per topic; they take the lowest in-topic ranks and
/// so the highest frequencies. The remaining topic slots are filled
/// with pronounceable generated fillers.
const TOPIC_SEEDS: &[(&str, &[&str])] = &[
    (
        "fruit",
        &[
            "fruit", "pear", "cherry", "mango", "juice", "peach", "plum", "cider", "apples",
            "tomato", "orange", "bean", "pie", "banana", "grape", "lemon", "melon", "berry",
            "ripe", "orchard",
        ],
    ),
    (
        "tech",
        &[
            "microsoft", "intel", "dell", "ipad", "macintosh", "ipod", "iphone", "google",
            "computer", "imac", "hardware", "software", "releases", "new", "device", "screen",
            "tablet", "ipads", "laptop", "keyboard",
        ],
    ),
    (
        "water",
        &[
            "river", "lake", "stream", "wave", "shore", "tide", "pond", "creek", "flood",
            "marsh", "depth", "ripple", "waterfall", "basin", "delta", "reservoir", "dam",
            "canal", "gulf", "rapids",
        ],
    ),
    (
        "animals",
        &[
            "dog", "cat", "horse", "bird", "wolf", "bear", "lion", "tiger", "deer", "fox",
            "rabbit", "mouse", "snake", "eagle", "hawk", "owl", "sheep", "goat", "cow", "pig",
        ],
    ),
    (
        "music",
        &[
            "music", "song", "guitar", "piano", "drum", "melody", "rhythm", "chord", "band",
            "concert", "singer", "violin", "trumpet", "flute", "harmony", "tune", "bass",
            "tempo", "choir", "opera",
        ],
    ),
    (
        "sports",
        &[
            "game", "team", "player", "ball", "score", "coach", "league", "match", "goal",
            "field", "stadium", "tennis", "soccer", "hockey", "golf", "sprint", "marathon",
            "referee", "tournament", "champion",
        ],
    ),
    (
        "cooking",
        &[
            "bread", "butter", "salt", "sugar", "flour", "oven", "recipe", "soup", "spice",
            "onion", "garlic", "pepper", "sauce", "roast", "bake", "grill", "kitchen", "knife",
            "bowl", "plate",
        ],
    ),
    (
        "weather",
        &[
            "storm", "wind", "cloud", "snow", "frost", "thunder", "lightning", "fog", "breeze",
            "hail", "sunshine", "drizzle", "climate", "forecast", "humidity", "blizzard",
            "chill", "warmth", "season", "temperature",
        ],
    ),
    (
        "house",
        &[
            "door", "window", "roof", "wall", "floor", "ceiling", "garage", "attic", "cellar",
            "hallway", "porch", "chimney", "brick", "fence", "lawn", "curtain", "sofa",
            "carpet", "stair", "bedroom",
        ],
    ),
    (
        "vehicles",
        &[
            "car", "truck", "engine", "wheel", "road", "highway", "driver", "tire", "brake",
            "gear", "motor", "bus", "train", "wagon", "cargo", "fuel", "diesel", "traffic",
            "bumper", "van",
        ],
    ),
    (
        "science",
        &[
            "atom", "molecule", "energy", "physics", "theory", "experiment", "laboratory",
            "electron", "proton", "quantum", "gravity", "particle", "formula", "hypothesis",
            "microscope", "chemistry", "biology", "equation", "neutron", "isotope",
        ],
    ),
    (
        "finance",
        &[
            "money", "price", "market", "stock", "trade", "profit", "loan", "debt", "credit",
            "currency", "invest", "budget", "tax", "income", "salary", "wealth", "fund",
            "broker", "dividend", "mortgage",
        ],
    ),
    (
        "clothing",
        &[
            "shirt", "coat", "dress", "shoe", "hat", "glove", "scarf", "button", "fabric",
            "cotton", "wool", "silk", "sleeve", "collar", "jacket", "sweater", "boot",
            "sandal", "zipper", "pocket",
        ],
    ),
    (
        "garden",
        &[
            "tree", "flower", "leaf", "root", "branch", "garden", "soil", "grass", "rose",
            "tulip", "daisy", "fern", "moss", "vine", "shrub", "blossom", "petal", "stem",
            "pollen", "seed",
        ],
    ),
    (
        "medicine",
        &[
            "doctor", "nurse", "hospital", "medicine", "patient", "surgery", "fever", "pill",
            "bandage", "clinic", "symptom", "diagnosis", "therapy", "vaccine", "pulse",
            "muscle", "bone", "nerve", "lung", "heart",
        ],
    ),
    (
        "school",
        &[
            "school", "teacher", "student", "lesson", "classroom", "homework", "exam", "grade",
            "pencil", "textbook", "professor", "lecture", "campus", "diploma", "semester",
            "library", "chalk", "desk", "notebook", "quiz",
        ],
    ),
    (
        "military",
        &[
            "army", "soldier", "war", "battle", "weapon", "rifle", "tank", "general", "troop",
            "fortress", "siege", "armor", "cavalry", "infantry", "regiment", "commander",
            "barracks", "ammunition", "grenade", "patrol",
        ],
    ),
    (
        "ocean",
        &[
            "whale", "dolphin", "coral", "reef", "sailor", "ship", "harbor", "anchor",
            "voyage", "island", "seaweed", "shark", "sail", "mast", "deck", "compass",
            "lighthouse", "buoy", "fish", "lagoon",
        ],
    ),
    (
        "space",
        &[
            "star", "moon", "planet", "orbit", "rocket", "galaxy", "comet", "asteroid",
            "telescope", "astronaut", "nebula", "cosmos", "satellite", "lunar", "solar",
            "eclipse", "meteor", "crater", "universe", "sky",
        ],
    ),
    (
        "tools",
        &[
            "hammer", "nail", "saw", "drill", "wrench", "screwdriver", "blade", "chisel",
            "plank", "lumber", "workshop", "toolbox", "bolt", "screw", "hinge", "ladder",
            "pliers", "anvil", "forge", "timber",
        ],
    ),
];

#[derive(Debug, Clone)]
pub struct SynthConfig {
    /// Generation stops at the first sentence boundary at or past this.
    pub tokens: u64,
    pub topics: usize,
    pub words_per_topic: usize,
    /// Probability that a sentence slot is a function word.
    pub function_word_share: f64,
    /// How many distinct function-word types carry that share (a prefix
    /// of the built-in list). Fewer types keep each one frequent enough
    /// to rank far above the mid-band even at small shares, and a small
    /// total function mass keeps the negative-sampling table from being
    /// dominated by words whose output vectors all point the same way —
    /// which would drag every embedding into one shared cone.
    pub function_types: usize,
    /// Probability that a content slot draws from the sentence anchor's
    /// partner set rather than the topic background.
    pub partner_share: f64,
    /// Collocation partners per word.
    pub partners_per_word: usize,
    pub sentence_min: usize,
    pub sentence_max: usize,
    /// Inject [`AMBIGUOUS_MARKER`] near the top of both the fruit and
    /// the tech topic; off for single-sense control corpora.
    pub ambiguous_marker: bool,
    /// Words with a fully private context: each isolate owns a closed
    /// pool of collocates that appear nowhere else, and sentences built
    /// around an isolate draw only from that pool. Their embeddings keep
    /// genuinely unrelated directions however long training runs, which
    /// keeps the mid-frequency band supplied with low-cosine word pairs.
    pub isolates: usize,
    /// Probability that a sentence is an isolate sentence.
    pub isolate_share: f64,
    /// Pool words per isolate.
    pub pool_size: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            tokens: 15_000_000,
            topics: 20,
            words_per_topic: 300,
            function_word_share: 0.1,
            function_types: FUNCTION_WORDS.len(),
            partner_share: 0.6,
            partners_per_word: 12,
            sentence_min: 12,
            sentence_max: 28,
            ambiguous_marker: true,
            isolates: 60,
            isolate_share: 0.04,
            pool_size: 12,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Topic {
    pub name: String,
    /// In-topic frequency order: index 0 is the most frequent.
    pub words: Vec<String>,
    /// Fixed collocation partners per word (indices into `words`).
    pub partners: Vec<Vec<u16>>,
}

/// A word whose sentences draw content only from its private pool.
#[derive(Debug, Clone)]
pub struct Isolate {
    pub word: String,
    pub pool: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct TopicVocabulary {
    pub function_words: Vec<String>,
    pub topics: Vec<Topic>,
    pub isolates: Vec<Isolate>,
}

impl TopicVocabulary {
    pub fn topic_index(&self, name: &str) -> Option<usize> {
        self.topics.iter().position(|t| t.name == name)
    }
}

/// Pronounceable filler word: three or four consonant+vowel syllables.
fn filler_word(rng: &mut ChaCha8Rng) -> String {
    const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
    const VOWELS: &[u8] = b"aeiou";
    let syllables = rng.gen_range(3..=4);
    let mut w = String::with_capacity(2 * syllables);
    for _ in 0..syllables {
        w.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())] as char);
        w.push(VOWELS[rng.gen_range(0..VOWELS.len())] as char);
    }
    w
}

/// Build the word lists deterministically from the config seed. Every
/// word belongs to exactly one list; only the ambiguous marker (when
/// enabled) is inserted near the top of two topics.
pub fn build_topics(cfg: &SynthConfig) -> TopicVocabulary {
    assert!(cfg.topics >= 2, "topics must be >= 2");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(0);
    let mut taken: HashSet<String> = FUNCTION_WORDS.iter().map(|w| w.to_string()).collect();
    taken.insert(AMBIGUOUS_MARKER.to_string());
    for (_, seeds) in &TOPIC_SEEDS[..cfg.topics.min(TOPIC_SEEDS.len())] {
        for w in *seeds {
            taken.insert(w.to_string());
        }
    }
    let mut topics = Vec::with_capacity(cfg.topics);
    for i in 0..cfg.topics {
        // topics beyond the curated seed lists are built from fillers only
        let (name, seeds): (String, &[&str]) = match TOPIC_SEEDS.get(i) {
            Some((name, seeds)) => (name.to_string(), seeds),
            None => (format!("t{i}"), &[]),
        };
        let mut words: Vec<String> = seeds
            .iter()
            .take(cfg.words_per_topic)
            .map(|w| w.to_string())
            .collect();
        while words.len() < cfg.words_per_topic {
            let w = filler_word(&mut rng);
            if taken.insert(w.clone()) {
                words.push(w);
            }
        }
        topics.push(Topic {
            name,
            words,
            partners: Vec::new(),
        });
    }
    if cfg.ambiguous_marker {
        for name in ["fruit", "tech"] {
            let i = topics.iter().position(|t| t.name == name).unwrap();
            topics[i].words.insert(1, AMBIGUOUS_MARKER.to_string());
        }
    }
    // collocation partners: uniform draws from the same topic, so the
    // partner sets of two words are almost disjoint and every word sees
    // a context signature of its own
    for t in &mut topics {
        let n = t.words.len();
        t.partners = (0..n)
            .map(|i| {
                let mut set = Vec::with_capacity(cfg.partners_per_word);
                let mut guard = 0;
                while set.len() < cfg.partners_per_word.min(n - 1) && guard < 10_000 {
                    guard += 1;
                    let p = rng.gen_range(0..n) as u16;
                    if p as usize != i && !set.contains(&p) {
                        set.push(p);
                    }
                }
                set
            })
            .collect();
    }
    // isolates and their private pools come last so their fillers never
    // collide with topic words
    let mut fresh = |taken: &mut HashSet<String>| loop {
        let w = filler_word(&mut rng);
        if taken.insert(w.clone()) {
            return w;
        }
    };
    let isolates = (0..cfg.isolates)
        .map(|_| Isolate {
            word: fresh(&mut taken),
            pool: (0..cfg.pool_size).map(|_| fresh(&mut taken)).collect(),
        })
        .collect();
    let n_func = cfg.function_types.clamp(1, FUNCTION_WORDS.len());
    TopicVocabulary {
        function_words: FUNCTION_WORDS[..n_func].iter().map(|w| w.to_string()).collect(),
        topics,
        isolates,
    }
}

/// Zipf weights for a list of `n` ranked items (exponent 1).
fn zipf_weights(n: usize) -> Vec<f64> {
    (0..n).map(|i| 1.0 / (i + 1) as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenSummary {
    pub tokens: u64,
    pub sentences: u64,
    pub marker_occurrences: u64,
}

/// Stream a corpus to `out`, one sentence per line, lowercase tokens
/// separated by single spaces. Deterministic for a fixed config.
pub fn generate_corpus<W: Write>(cfg: &SynthConfig, out: &mut W) -> io::Result<GenSummary> {
    let tv = build_topics(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let function_dist = WeightedIndex::new(zipf_weights(tv.function_words.len())).unwrap();
    let topic_dists: Vec<WeightedIndex<f64>> = tv
        .topics
        .iter()
        .map(|t| WeightedIndex::new(zipf_weights(t.words.len())).unwrap())
        .collect();
    let len_dist = Uniform::new_inclusive(cfg.sentence_min, cfg.sentence_max);
    let mut summary = GenSummary {
        tokens: 0,
        sentences: 0,
        marker_occurrences: 0,
    };
    let mut line = String::with_capacity(cfg.sentence_max * 8);
    while summary.tokens < cfg.tokens {
        let len = len_dist.sample(&mut rng);
        line.clear();
        if !tv.isolates.is_empty() && rng.gen::<f64>() < cfg.isolate_share {
            // isolate sentence: the word plus draws from its private pool,
            // nothing shared with the rest of the corpus
            let iso = &tv.isolates[rng.gen_range(0..tv.isolates.len())];
            for i in 0..len {
                let w = if i == 0 || rng.gen::<f64>() < 0.15 {
                    &iso.word
                } else {
                    &iso.pool[rng.gen_range(0..iso.pool.len())]
                };
                if i > 0 {
                    line.push(' ');
                }
                line.push_str(w);
            }
            line.push('\n');
            out.write_all(line.as_bytes())?;
            summary.tokens += len as u64;
            summary.sentences += 1;
            continue;
        }
        let topic = rng.gen_range(0..tv.topics.len());
        let t = &tv.topics[topic];
        let anchor = topic_dists[topic].sample(&mut rng);
        let mut first_content = true;
        for i in 0..len {
            let w = if rng.gen::<f64>() < cfg.function_word_share {
                &tv.function_words[function_dist.sample(&mut rng)]
            } else if first_content {
                first_content = false;
                &t.words[anchor]
            } else if !t.partners[anchor].is_empty()
                && rng.gen::<f64>() < cfg.partner_share
            {
                let ps = &t.partners[anchor];
                &t.words[ps[rng.gen_range(0..ps.len())] as usize]
            } else {
                &t.words[topic_dists[topic].sample(&mut rng)]
            };
            if w == AMBIGUOUS_MARKER {
                summary.marker_occurrences += 1;
            }
            if i > 0 {
                line.push(' ');
            }
            line.push_str(w);
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
        summary.tokens += len as u64;
        summary.sentences += 1;
    }
    Ok(summary)
}

pub fn generate_corpus_file(cfg: &SynthConfig, path: &Path) -> io::Result<GenSummary> {
    let mut out = BufWriter::new(File::create(path)?);
    let summary = generate_corpus(cfg, &mut out)?;
    out.flush()?;
    Ok(summary)
}

/// How many rated pairs of each kind the fixture contains.
#[derive(Debug, Clone)]
pub struct ScwsFixtureConfig {
    pub same_topic: usize,
    pub cross_topic: usize,
    /// Pairs whose first member is the ambiguous marker, rated by
    /// whether its context topic matches the partner's topic.
    pub ambiguous: usize,
    pub seed: u64,
}

impl Default for ScwsFixtureConfig {
    fn default() -> Self {
        ScwsFixtureConfig {
            same_topic: 40,
            cross_topic: 40,
            ambiguous: 40,
            seed: 7,
        }
    }
}

/// Words eligible as fixture targets: the most frequent few of each
/// topic, which all rank far above the mid-frequency band and so are
/// never touched by pseudoword substitution.
const FIXTURE_TOP_RANKS: usize = 6;

fn context_sentence(
    tv: &TopicVocabulary,
    topic: usize,
    target: &str,
    function_dist: &WeightedIndex<f64>,
    topic_dist: &WeightedIndex<f64>,
    cfg: &SynthConfig,
    rng: &mut ChaCha8Rng,
) -> String {
    // the target acts as the sentence anchor: its partners fill most
    // content slots, exactly as in corpus generation
    let t = &tv.topics[topic];
    let anchor = t
        .words
        .iter()
        .position(|w| w == target)
        .expect("target must belong to the context topic");
    let len = rng.gen_range(10..=18);
    let insert_at = rng.gen_range(0..len);
    let mut s = String::new();
    for i in 0..len {
        if i > 0 {
            s.push(' ');
        }
        if i == insert_at {
            s.push_str("<b>");
            s.push_str(target);
            s.push_str("</b>");
        } else if rng.gen::<f64>() < cfg.function_word_share {
            s.push_str(&tv.function_words[function_dist.sample(rng)]);
        } else if !t.partners[anchor].is_empty() && rng.gen::<f64>() < cfg.partner_share {
            let ps = &t.partners[anchor];
            s.push_str(&t.words[ps[rng.gen_range(0..ps.len())] as usize]);
        } else {
            s.push_str(&t.words[topic_dist.sample(rng)]);
        }
    }
    s
}

/// Generate rated word pairs in the 18-column tab-separated format
/// (`id w1 pos w2 pos ctx1 ctx2 avg r1..r10`) from the generator's own
/// ground truth. Requires `cfg.ambiguous_marker` when `fx.ambiguous > 0`.
pub fn generate_scws_fixture(cfg: &SynthConfig, fx: &ScwsFixtureConfig) -> Vec<String> {
    assert!(
        fx.ambiguous == 0 || cfg.ambiguous_marker,
        "ambiguous fixture pairs need the marker enabled"
    );
    let tv = build_topics(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(fx.seed);
    rng.set_stream(2);
    let function_dist = WeightedIndex::new(zipf_weights(tv.function_words.len())).unwrap();
    let topic_dists: Vec<WeightedIndex<f64>> = tv
        .topics
        .iter()
        .map(|t| WeightedIndex::new(zipf_weights(t.words.len())).unwrap())
        .collect();
    // frequent single-topic words only
    let top_words = |t: usize| -> Vec<&str> {
        tv.topics[t].words[..FIXTURE_TOP_RANKS]
            .iter()
            .map(String::as_str)
            .filter(|w| *w != AMBIGUOUS_MARKER)
            .collect()
    };
    let mut lines = Vec::new();
    let mut id = 0usize;
    let push = |rng: &mut ChaCha8Rng,
                    lines: &mut Vec<String>,
                    id: &mut usize,
                    w1: &str,
                    t1: usize,
                    w2: &str,
                    t2: usize,
                    base: f64| {
        let c1 = context_sentence(&tv, t1, w1, &function_dist, &topic_dists[t1], cfg, rng);
        let c2 = context_sentence(&tv, t2, w2, &function_dist, &topic_dists[t2], cfg, rng);
        let center = (base + rng.gen_range(-1.0..1.0)).clamp(0.0, 10.0);
        let ratings: Vec<f64> = (0..10)
            .map(|_| (center + rng.gen_range(-1.5..1.5)).clamp(0.0, 10.0))
            .collect();
        let avg = ratings.iter().sum::<f64>() / 10.0;
        let mut line = format!("{}\t{w1}\tn\t{w2}\tn\t{c1}\t{c2}\t{avg:.3}", *id + 1);
        for r in &ratings {
            line.push_str(&format!("\t{r:.2}"));
        }
        lines.push(line);
        *id += 1;
    };
    for _ in 0..fx.same_topic {
        let t = rng.gen_range(0..tv.topics.len());
        let words = top_words(t);
        let i = rng.gen_range(0..words.len());
        let mut j = rng.gen_range(0..words.len());
        while j == i {
            j = rng.gen_range(0..words.len());
        }
        push(&mut rng, &mut lines, &mut id, words[i], t, words[j], t, 8.0);
    }
    for _ in 0..fx.cross_topic {
        let t1 = rng.gen_range(0..tv.topics.len());
        let mut t2 = rng.gen_range(0..tv.topics.len());
        while t2 == t1 {
            t2 = rng.gen_range(0..tv.topics.len());
        }
        let w1s = top_words(t1);
        let w2s = top_words(t2);
        let w1 = w1s[rng.gen_range(0..w1s.len())];
        let w2 = w2s[rng.gen_range(0..w2s.len())];
        push(&mut rng, &mut lines, &mut id, w1, t1, w2, t2, 1.5);
    }
    if fx.ambiguous > 0 {
        let fruit = tv.topic_index("fruit").unwrap();
        let tech = tv.topic_index("tech").unwrap();
        for k in 0..fx.ambiguous {
            // cycle: marker-in-fruit vs fruit word (high), vs tech word
            // (low), marker-in-tech vs tech word (high), vs fruit word (low)
            let (ctx_topic, partner_topic, base) = match k % 4 {
                0 => (fruit, fruit, 8.0),
                1 => (fruit, tech, 1.5),
                2 => (tech, tech, 8.0),
                _ => (tech, fruit, 1.5),
            };
            let partners = top_words(partner_topic);
            let partner = partners[rng.gen_range(0..partners.len())];
            push(
                &mut rng,
                &mut lines,
                &mut id,
                AMBIGUOUS_MARKER,
                ctx_topic,
                partner,
                partner_topic,
                base,
            );
        }
    }
    lines
}

pub fn write_scws_fixture(
    cfg: &SynthConfig,
    fx: &ScwsFixtureConfig,
    path: &Path,
) -> io::Result<usize> {
    let lines = generate_scws_fixture(cfg, fx);
    let mut out = BufWriter::new(File::create(path)?);
    for l in &lines {
        out.write_all(l.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(lines.len())
}

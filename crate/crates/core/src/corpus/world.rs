use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::KnowledgeTriple;
use crate::util::derived_rng;
use crate::{Error, Result};

pub const WORLD_SPEC_VERSION: u32 = 1;

/// A relation and the question template used to ask about it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSchema {
    pub name: String,
    /// Question text with a single `{s}` slot for the subject.
    pub template: String,
}

impl RelationSchema {
    pub fn new(name: impl Into<String>, template: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            template: template.into(),
        }
    }

    pub fn question(&self, subject: &str) -> String {
        self.template.replace("{s}", subject)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FrequencyLaw {
    /// Head triples get `imbalance_ratio` times the tail frequency.
    TwoLevel,
    /// Rank-`r` triple gets `max(1, round(ratio * tail / r^exponent))`.
    Zipf { exponent: f64 },
}

/// Generative recipe for a synthetic imbalanced corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub spec_version: u32,
    /// Relation schemas. When empty, the first `num_categories` built-in
    /// schemas are used.
    #[serde(default)]
    pub categories: Vec<RelationSchema>,
    #[serde(default)]
    pub num_categories: Option<usize>,
    pub subjects_per_category: usize,
    pub head_fraction: f64,
    pub imbalance_ratio: f64,
    pub frequency_law: FrequencyLaw,
    #[serde(default = "one")]
    pub tail_frequency: u32,
    /// Every relation asks about the same subject entities.
    #[serde(default = "yes")]
    pub shared_subjects: bool,
    /// Log-normal spread of the external popularity proxy around the true
    /// corpus frequency of each object.
    #[serde(default)]
    pub popularity_noise: f64,
    pub seed: u64,
}

fn one() -> u32 {
    1
}

fn yes() -> bool {
    true
}

impl WorldSpec {
    pub fn two_level(
        num_categories: usize,
        subjects_per_category: usize,
        head_fraction: f64,
        imbalance_ratio: f64,
        seed: u64,
    ) -> Self {
        Self {
            spec_version: WORLD_SPEC_VERSION,
            categories: Vec::new(),
            num_categories: Some(num_categories),
            subjects_per_category,
            head_fraction,
            imbalance_ratio,
            frequency_law: FrequencyLaw::TwoLevel,
            tail_frequency: 1,
            shared_subjects: true,
            popularity_noise: 0.0,
            seed,
        }
    }

    pub fn resolved_categories(&self) -> Result<Vec<RelationSchema>> {
        if !self.categories.is_empty() {
            return Ok(self.categories.clone());
        }
        let n = self.num_categories.unwrap_or(0);
        let builtin = default_categories();
        if n == 0 || n > builtin.len() {
            return Err(Error::InvalidSpec(format!(
                "num_categories must be in 1..={} when no categories are listed",
                builtin.len()
            )));
        }
        Ok(builtin.into_iter().take(n).collect())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.spec_version != WORLD_SPEC_VERSION {
            return bad(format!("unsupported spec_version {}", self.spec_version));
        }
        if self.subjects_per_category < 2 {
            return bad("subjects_per_category must be at least 2".into());
        }
        if !(self.head_fraction > 0.0 && self.head_fraction < 1.0) {
            return bad(format!("head_fraction {} outside (0, 1)", self.head_fraction));
        }
        if !(self.imbalance_ratio >= 1.0) || !self.imbalance_ratio.is_finite() {
            return bad(format!("imbalance_ratio {} must be >= 1", self.imbalance_ratio));
        }
        if self.tail_frequency == 0 {
            return bad("tail_frequency must be >= 1".into());
        }
        if let FrequencyLaw::Zipf { exponent } = self.frequency_law {
            if !(exponent > 0.0) {
                return bad(format!("zipf exponent {exponent} must be positive"));
            }
        }
        if !(self.popularity_noise >= 0.0) {
            return bad("popularity_noise must be non-negative".into());
        }
        let cats = self.resolved_categories()?;
        let mut seen = HashSet::new();
        for c in &cats {
            if c.template.matches("{s}").count() != 1 {
                return bad(format!("template {:?} needs exactly one {{s}} slot", c.template));
            }
            if !seen.insert(c.name.as_str()) {
                return bad(format!("duplicate category {:?}", c.name));
            }
        }
        Ok(())
    }

    pub fn head_count(&self) -> usize {
        (self.head_fraction * self.subjects_per_category as f64).ceil() as usize
    }

    fn frequency_at_rank(&self, rank: usize, is_head: bool) -> u32 {
        let tail = self.tail_frequency as f64;
        match self.frequency_law {
            FrequencyLaw::TwoLevel => {
                if is_head {
                    (self.imbalance_ratio * tail).round() as u32
                } else {
                    self.tail_frequency
                }
            }
            FrequencyLaw::Zipf { exponent } => {
                let f = self.imbalance_ratio * tail / (rank as f64).powf(exponent);
                f.round().max(1.0) as u32
            }
        }
    }
}

/// Relation schemas drawn from public long-tail QA benchmarks.
pub fn default_categories() -> Vec<RelationSchema> {
    [
        ("capital", "What is the capital of {s}?"),
        ("occupation", "What is {s}'s occupation?"),
        ("father", "Who is the father of {s}?"),
        ("country", "In what country is {s}?"),
        ("director", "Who was the director of {s}?"),
        ("composer", "Who was the composer of {s}?"),
        ("place of birth", "In what city was {s} born?"),
        ("color", "What color is {s}?"),
        ("religion", "What is the religion of {s}?"),
        ("capital of", "What is {s} the capital of?"),
        ("producer", "Who was the producer of {s}?"),
        ("author", "Who is the author of {s}?"),
        ("genre", "What genre is {s}?"),
        ("screenwriter", "Who was the screenwriter for {s}?"),
        ("mother", "Who is the mother of {s}?"),
        ("industry", "What is the industry of {s}?"),
        ("location", "What is the location of {s}?"),
        ("material", "What is the material of {s}?"),
        ("shape", "What is the shape of {s}?"),
        ("founder", "Who founded {s}?"),
    ]
    .into_iter()
    .map(|(n, t)| RelationSchema::new(n, t))
    .collect()
}

/// A generated world: its triples plus the bookkeeping needed by probes and
/// baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub spec: WorldSpec,
    pub categories: Vec<RelationSchema>,
    pub triples: Vec<KnowledgeTriple>,
    /// Designated head object of each category.
    pub head_objects: BTreeMap<String, String>,
    pub head_triples: BTreeSet<String>,
    /// External popularity proxy per object.
    pub popularity: BTreeMap<String, f64>,
}

impl World {
    pub fn is_head(&self, triple: &KnowledgeTriple) -> bool {
        self.head_triples.contains(&triple.id)
    }

    pub fn tail_triples(&self) -> impl Iterator<Item = &KnowledgeTriple> {
        self.triples.iter().filter(|t| !self.is_head(t))
    }

    pub fn category_triples<'a>(&'a self, category: &'a str) -> impl Iterator<Item = &'a KnowledgeTriple> {
        self.triples.iter().filter(move |t| t.category == category)
    }
}

struct NameGen {
    used: HashSet<String>,
}

const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "dr", "kr", "st",
    "tr", "sh", "th",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];
const CODAS: &[&str] = &["", "", "", "n", "r", "l", "s"];

impl NameGen {
    fn new() -> Self {
        Self {
            used: HashSet::new(),
        }
    }

    fn reserve(&mut self, word: &str) {
        self.used.insert(word.to_lowercase());
    }

    fn fresh<R: Rng>(&mut self, rng: &mut R) -> String {
        loop {
            let syllables = rng.random_range(2..=3);
            let mut name = String::new();
            for _ in 0..syllables {
                name.push_str(ONSETS[rng.random_range(0..ONSETS.len())]);
                name.push_str(VOWELS[rng.random_range(0..VOWELS.len())]);
            }
            name.push_str(CODAS[rng.random_range(0..CODAS.len())]);
            let mut chars = name.chars();
            let first = chars.next().expect("non-empty name").to_ascii_uppercase();
            let name: String = std::iter::once(first).chain(chars).collect();
            if self.used.insert(name.to_lowercase()) {
                return name;
            }
        }
    }
}

fn slug(name: &str) -> String {
    name.split_whitespace().collect::<Vec<_>>().join("_")
}

/// Generates the triples of a synthetic world. Deterministic in `spec.seed`.
///
/// Per category, `ceil(head_fraction * n)` triples share one head object and
/// receive the head frequency; every other triple gets its own object.
pub fn generate_world(spec: &WorldSpec) -> Result<World> {
    spec.validate()?;
    let categories = spec.resolved_categories()?;
    let n = spec.subjects_per_category;
    let n_head = spec.head_count();

    let mut names = NameGen::new();
    for c in &categories {
        for w in c.template.split(|ch: char| !ch.is_alphanumeric()) {
            if !w.is_empty() {
                names.reserve(w);
            }
        }
    }
    let mut name_rng = derived_rng(spec.seed, "names");
    let shared: Vec<String> = if spec.shared_subjects {
        (0..n).map(|_| names.fresh(&mut name_rng)).collect()
    } else {
        Vec::new()
    };

    let mut triples = Vec::with_capacity(n * categories.len());
    let mut head_objects = BTreeMap::new();
    let mut head_triples = BTreeSet::new();
    for cat in &categories {
        let subjects: Vec<String> = if spec.shared_subjects {
            shared.clone()
        } else {
            (0..n).map(|_| names.fresh(&mut name_rng)).collect()
        };
        let head_object = names.fresh(&mut name_rng);
        let tail_objects: Vec<String> = (n_head..n).map(|_| names.fresh(&mut name_rng)).collect();

        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut derived_rng(spec.seed, &format!("order/{}", cat.name)));

        let mut cat_triples = Vec::with_capacity(n);
        for (rank0, &subject_idx) in order.iter().enumerate() {
            let is_head = rank0 < n_head;
            let object = if is_head {
                head_object.clone()
            } else {
                tail_objects[rank0 - n_head].clone()
            };
            let subject = &subjects[subject_idx];
            let id = format!("{}-{:05}", slug(&cat.name), subject_idx);
            if is_head {
                head_triples.insert(id.clone());
            }
            cat_triples.push((
                subject_idx,
                KnowledgeTriple {
                    id,
                    subject: subject.clone(),
                    predicate: cat.name.clone(),
                    object_aliases: BTreeSet::from([object.clone()]),
                    object,
                    category: cat.name.clone(),
                    frequency: spec.frequency_at_rank(rank0 + 1, is_head),
                    question: cat.question(subject),
                },
            ));
        }
        cat_triples.sort_by_key(|(i, _)| *i);
        triples.extend(cat_triples.into_iter().map(|(_, t)| t));
        head_objects.insert(cat.name.clone(), head_object);
    }

    let mut counts: BTreeMap<String, f64> = BTreeMap::new();
    for t in &triples {
        *counts.entry(t.object.clone()).or_default() += t.frequency as f64;
    }
    let mut pop_rng = derived_rng(spec.seed, "popularity");
    let popularity = counts
        .into_iter()
        .map(|(obj, c)| {
            let z: f64 = StandardNormal.sample(&mut pop_rng);
            (obj, c * (spec.popularity_noise * z).exp())
        })
        .collect();

    Ok(World {
        spec: spec.clone(),
        categories,
        triples,
        head_objects,
        head_triples,
        popularity,
    })
}

//! Deterministic toy inflection languages in the corpus file format.
//!
//! Each language has a set of feature bundles, each realised by one
//! string rule applied to randomly generated lemmas. Train and test use
//! disjoint lemma sets.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::corpus::TransformationPair;
use crate::numkit::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Morphology {
    /// Suffixes only.
    Suffixing,
    /// Prefixes and circumfixes.
    Prefixing,
    /// Stem-final replacement, vowel change and reduplication as well as affixes.
    Fusional,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Rule {
    Suffix(String),
    Prefix(String),
    Circumfix(String, String),
    /// Drop the last character, then append.
    ReplaceFinal(String),
    /// Replace the last vowel, then append.
    Ablaut(char, String),
    /// Copy the first two characters in front.
    Reduplicate,
}

impl Rule {
    fn apply(&self, lemma: &str) -> String {
        match self {
            Rule::Suffix(s) => format!("{lemma}{s}"),
            Rule::Prefix(p) => format!("{p}{lemma}"),
            Rule::Circumfix(p, s) => format!("{p}{lemma}{s}"),
            Rule::ReplaceFinal(s) => {
                let mut chars: Vec<char> = lemma.chars().collect();
                chars.pop();
                chars.into_iter().collect::<String>() + s
            }
            Rule::Ablaut(v, s) => {
                let mut chars: Vec<char> = lemma.chars().collect();
                if let Some(i) = chars.iter().rposition(|c| VOWELS.contains(c)) {
                    chars[i] = *v;
                }
                chars.into_iter().collect::<String>() + s
            }
            Rule::Reduplicate => {
                let head: String = lemma.chars().take(2).collect();
                format!("{head}{lemma}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticLanguage {
    pub name: String,
    pub seed: u64,
    pub morphology: Morphology,
    pub bundles: usize,
    pub train_lemmas: usize,
    pub test_lemmas: usize,
}

const VOWELS: &[char] = &['a', 'e', 'i', 'o', 'u'];
const CONSONANTS: &[char] = &['b', 'd', 'f', 'g', 'k', 'l', 'm', 'n', 'p', 'r', 's', 't', 'v', 'z'];

fn syllable(rng: &mut Rng) -> String {
    let c = CONSONANTS.choose(rng).unwrap();
    let v = VOWELS.choose(rng).unwrap();
    format!("{c}{v}")
}

fn affix(rng: &mut Rng, max_syllables: usize) -> String {
    let n = rng.gen_range(1..=max_syllables);
    (0..n).map(|_| syllable(rng)).collect()
}

impl SyntheticLanguage {
    pub fn new(name: &str, seed: u64, morphology: Morphology) -> Self {
        SyntheticLanguage {
            name: name.to_string(),
            seed,
            morphology,
            bundles: 6,
            train_lemmas: 40,
            test_lemmas: 12,
        }
    }

    fn rules(&self, rng: &mut Rng) -> Vec<Rule> {
        let mut rules = Vec::with_capacity(self.bundles);
        while rules.len() < self.bundles {
            let kind = match self.morphology {
                Morphology::Suffixing => 0,
                Morphology::Prefixing => rng.gen_range(1..3),
                Morphology::Fusional => rng.gen_range(0..6),
            };
            let rule = match kind {
                0 => Rule::Suffix(affix(rng, 2)),
                1 => Rule::Prefix(affix(rng, 2)),
                2 => Rule::Circumfix(affix(rng, 1), affix(rng, 1)),
                3 => Rule::ReplaceFinal(affix(rng, 2)),
                4 => Rule::Ablaut(*VOWELS.choose(rng).unwrap(), affix(rng, 1)),
                _ => Rule::Reduplicate,
            };
            if !rules.contains(&rule) {
                rules.push(rule);
            }
        }
        rules
    }

    fn lemmas(&self, rng: &mut Rng) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        while out.len() < self.train_lemmas + self.test_lemmas {
            let n = rng.gen_range(2..=3);
            let mut w: String = (0..n).map(|_| syllable(rng)).collect();
            if rng.gen_bool(0.5) {
                w.push(*CONSONANTS.choose(rng).unwrap());
            }
            if seen.insert(w.clone()) {
                out.push(w);
            }
        }
        out
    }

    /// `(train, test)` corpus lines, one per (lemma, bundle), grouped by lemma.
    pub fn generate(&self) -> (Vec<TransformationPair>, Vec<TransformationPair>) {
        let mut rng = Rng::new(self.seed, &format!("synthetic/{}", self.name));
        let rules = self.rules(&mut rng);
        let lemmas = self.lemmas(&mut rng);
        let lines = |ls: &[String]| -> Vec<TransformationPair> {
            ls.iter()
                .flat_map(|l| {
                    rules.iter().enumerate().map(move |(k, r)| TransformationPair {
                        source: l.clone(),
                        features: format!("pos=V,slot={k}"),
                        target: r.apply(l),
                    })
                })
                .collect()
        };
        let (train, test) = lemmas.split_at(self.train_lemmas);
        (lines(train), lines(test))
    }
}

/// Three languages with different morphological profiles.
pub fn standard_languages(seed: u64) -> Vec<SyntheticLanguage> {
    vec![
        SyntheticLanguage::new("suffixal", seed, Morphology::Suffixing),
        SyntheticLanguage::new("prefixal", seed, Morphology::Prefixing),
        SyntheticLanguage::new("fusional", seed, Morphology::Fusional),
    ]
}

//! Inflection corpora, analogy extraction, splits and inventories.
//!
//! Corpus files hold one `source \t features \t target` triple per line.
//! Two lines sharing a feature bundle license the analogy
//! `source : target :: source' : target'`.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numkit::Rng;

#[derive(Debug, Error, PartialEq)]
pub enum CorpusError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("input is not valid UTF-8: {0}")]
    Decode(#[from] std::str::Utf8Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TransformationPair {
    pub source: String,
    pub features: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Quadruple {
    pub a: String,
    pub b: String,
    pub c: String,
    pub d: String,
}

impl Quadruple {
    pub fn new(a: impl Into<String>, b: impl Into<String>, c: impl Into<String>, d: impl Into<String>) -> Self {
        Quadruple {
            a: a.into(),
            b: b.into(),
            c: c.into(),
            d: d.into(),
        }
    }

    pub fn words(&self) -> [&str; 4] {
        [&self.a, &self.b, &self.c, &self.d]
    }

    /// Builds `q[slots[0]] : q[slots[1]] :: q[slots[2]] : q[slots[3]]`.
    pub fn permuted(&self, slots: [usize; 4]) -> Quadruple {
        let w = self.words();
        Quadruple::new(w[slots[0]], w[slots[1]], w[slots[2]], w[slots[3]])
    }
}

impl fmt::Display for Quadruple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}::{}:{}", self.a, self.b, self.c, self.d)
    }
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.split('\n')
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !l.is_empty())
}

fn split_fields(line_no: usize, line: &str, expected: usize) -> Result<Vec<&str>, CorpusError> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != expected {
        return Err(CorpusError::Parse {
            line: line_no,
            reason: format!("expected {expected} tab-separated fields, found {}", fields.len()),
        });
    }
    Ok(fields)
}

fn require_word(line_no: usize, word: &str, which: &str) -> Result<(), CorpusError> {
    if word.is_empty() {
        Err(CorpusError::Parse {
            line: line_no,
            reason: format!("empty {which} word"),
        })
    } else {
        Ok(())
    }
}

pub fn parse_inflection_file(bytes: &[u8]) -> Result<Vec<TransformationPair>, CorpusError> {
    let text = std::str::from_utf8(bytes)?;
    lines(text)
        .map(|(no, line)| {
            let f = split_fields(no, line, 3)?;
            require_word(no, f[0], "source")?;
            require_word(no, f[2], "target")?;
            Ok(TransformationPair {
                source: f[0].to_string(),
                features: f[1].to_string(),
                target: f[2].to_string(),
            })
        })
        .collect()
}

pub fn write_inflection(pairs: &[TransformationPair]) -> String {
    let mut out = String::new();
    for p in pairs {
        out.push_str(&format!("{}\t{}\t{}\n", p.source, p.features, p.target));
    }
    out
}

pub fn parse_quadruples(bytes: &[u8]) -> Result<Vec<Quadruple>, CorpusError> {
    let text = std::str::from_utf8(bytes)?;
    lines(text)
        .map(|(no, line)| {
            let f = split_fields(no, line, 4)?;
            for (w, name) in f.iter().zip(["A", "B", "C", "D"]) {
                require_word(no, w, name)?;
            }
            Ok(Quadruple::new(f[0], f[1], f[2], f[3]))
        })
        .collect()
}

pub fn write_quadruples(quads: &[Quadruple]) -> String {
    let mut out = String::new();
    for q in quads {
        out.push_str(&format!("{}\t{}\t{}\t{}\n", q.a, q.b, q.c, q.d));
    }
    out
}

/// Number of field columns on the first nonempty line, used to tell corpus
/// files (3) from quadruple dumps (4).
pub fn sniff_columns(bytes: &[u8]) -> Result<Option<usize>, CorpusError> {
    let text = std::str::from_utf8(bytes)?;
    Ok(lines(text).next().map(|(_, l)| l.split('\t').count()))
}

/// Members of each feature bundle, groups ordered by first appearance and
/// members in file order.
fn feature_groups(pairs: &[TransformationPair]) -> Vec<Vec<&TransformationPair>> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut groups: Vec<Vec<&TransformationPair>> = Vec::new();
    for p in pairs {
        let g = *index.entry(p.features.as_str()).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(p);
    }
    groups
}

/// Total number of base analogies before capping: `Σ g(g+1)/2`.
pub fn count_analogies(pairs: &[TransformationPair]) -> u64 {
    feature_groups(pairs)
        .iter()
        .map(|g| {
            let g = g.len() as u64;
            g * (g + 1) / 2
        })
        .sum()
}

/// Extracts one base analogy per unordered pair (i ≤ j) of corpus lines
/// sharing a feature bundle. If more than `cap` exist, a uniform subset of
/// size `cap` is kept, in extraction order.
pub fn extract_analogies(pairs: &[TransformationPair], cap: usize, seed: u64) -> Vec<Quadruple> {
    let groups = feature_groups(pairs);
    let total: u64 = groups.iter().map(|g| (g.len() as u64) * (g.len() as u64 + 1) / 2).sum();
    let keep: Option<Vec<u64>> = if total > cap as u64 {
        let mut rng = Rng::new(seed, "cap");
        let mut picked: Vec<u64> = index::sample(&mut rng, total as usize, cap)
            .into_iter()
            .map(|i| i as u64)
            .collect();
        picked.sort_unstable();
        Some(picked)
    } else {
        None
    };

    let mut out = Vec::with_capacity(keep.as_ref().map_or(total as usize, |k| k.len()));
    let mut position = 0u64;
    let mut next = 0usize;
    for group in &groups {
        for i in 0..group.len() {
            for j in i..group.len() {
                let wanted = match &keep {
                    None => true,
                    Some(k) => k.get(next) == Some(&position),
                };
                if wanted {
                    let (x, y) = (group[i], group[j]);
                    out.push(Quadruple::new(&x.source, &x.target, &y.source, &y.target));
                    next += 1;
                }
                position += 1;
            }
            if keep.as_ref().is_some_and(|k| next == k.len()) {
                return out;
            }
        }
    }
    out
}

/// Uniform subsample without replacement, keeping input order.
pub fn cap_quadruples(quads: Vec<Quadruple>, cap: usize, seed: u64) -> Vec<Quadruple> {
    if quads.len() <= cap {
        return quads;
    }
    let mut rng = Rng::new(seed, "cap");
    let mut picked = index::sample(&mut rng, quads.len(), cap).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| quads[i].clone()).collect()
}

/// Shuffles deterministically and puts the first `⌊ratio·N⌋` items in train.
pub fn random_split<T: Clone>(items: &[T], ratio: f64, seed: u64) -> (Vec<T>, Vec<T>) {
    assert!(ratio > 0.0 && ratio < 1.0, "split ratio must be in (0, 1)");
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut Rng::new(seed, "split"));
    let cut = (ratio * items.len() as f64).floor() as usize;
    let train = order[..cut].iter().map(|&i| items[i].clone()).collect();
    let test = order[cut..].iter().map(|&i| items[i].clone()).collect();
    (train, test)
}

/// Character-to-id mapping. Ids 0..4 are reserved for padding,
/// begin-of-word, end-of-word and unknown; corpus characters follow in
/// code-point order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharIndex {
    chars: Vec<char>,
    ids: HashMap<char, usize>,
}

impl CharIndex {
    pub const PAD: usize = 0;
    pub const BOW: usize = 1;
    pub const EOW: usize = 2;
    pub const UNK: usize = 3;
    pub const RESERVED: usize = 4;

    pub fn from_chars(chars: impl IntoIterator<Item = char>) -> Self {
        let set: BTreeSet<char> = chars.into_iter().collect();
        let chars: Vec<char> = set.into_iter().collect();
        let ids = chars
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, i + Self::RESERVED))
            .collect();
        CharIndex { chars, ids }
    }

    /// Corpus characters in id order, reserved ids excluded.
    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    /// Total number of ids, reserved included.
    pub fn len(&self) -> usize {
        self.chars.len() + Self::RESERVED
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, ch: char) -> usize {
        self.ids.get(&ch).copied().unwrap_or(Self::UNK)
    }

    pub fn contains(&self, ch: char) -> bool {
        self.ids.contains_key(&ch)
    }

    /// Character ids of `word` and how many characters fell back to UNK.
    pub fn encode(&self, word: &str) -> (Vec<usize>, usize) {
        let mut unknown = 0;
        let ids = word
            .chars()
            .map(|c| {
                let id = self.id(c);
                if id == Self::UNK {
                    unknown += 1;
                }
                id
            })
            .collect();
        (ids, unknown)
    }
}

pub fn build_charset<'a>(words: impl IntoIterator<Item = &'a str>) -> CharIndex {
    CharIndex::from_chars(words.into_iter().flat_map(str::chars))
}

/// Every word form of a quadruple list.
pub fn quad_words(quads: &[Quadruple]) -> impl Iterator<Item = &str> {
    quads.iter().flat_map(|q| q.words())
}

/// Deduplicated word forms in code-point order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
}

impl Vocabulary {
    pub fn from_words<'a>(words: impl IntoIterator<Item = &'a str>) -> Self {
        let set: BTreeSet<&str> = words.into_iter().collect();
        Vocabulary {
            words: set.into_iter().map(str::to_string).collect(),
        }
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.binary_search_by(|w| w.as_str().cmp(word)).is_ok()
    }
}

pub fn build_vocabulary(train: &[Quadruple], test: &[Quadruple]) -> Vocabulary {
    Vocabulary::from_words(quad_words(train).chain(quad_words(test)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(s: &str, f: &str, t: &str) -> TransformationPair {
        TransformationPair {
            source: s.into(),
            features: f.into(),
            target: t.into(),
        }
    }

    #[test]
    fn parses_finnish_example() {
        let got = parse_inflection_file("lenkkitossut\tpos=N,case=ON+ESS,num=PL\tlenkkitossuilla".as_bytes()).unwrap();
        assert_eq!(
            got,
            vec![pair("lenkkitossut", "pos=N,case=ON+ESS,num=PL", "lenkkitossuilla")]
        );
    }

    #[test]
    fn empty_file_and_blank_lines() {
        assert!(parse_inflection_file(b"").unwrap().is_empty());
        let got = parse_inflection_file(b"\na\tF\tb\r\n\r\nc\tF\td\n").unwrap();
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].target, "b");
    }

    #[test]
    fn malformed_lines_report_line_number() {
        assert_eq!(
            parse_inflection_file(b"a\tb"),
            Err(CorpusError::Parse {
                line: 1,
                reason: "expected 3 tab-separated fields, found 2".into()
            })
        );
        match parse_inflection_file(b"x\tF\ty\n\tF\tz\n") {
            Err(CorpusError::Parse { line: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_inflection_file(&[0x61, 0x09, 0xff, 0x09, 0x62]),
            Err(CorpusError::Decode(_))
        ));
    }

    #[test]
    fn extraction_small_example() {
        let pairs = vec![
            pair("do", "F1", "doing"),
            pair("eat", "F1", "eating"),
            pair("cat", "F2", "cats"),
        ];
        let got = extract_analogies(&pairs, 100, 0);
        assert_eq!(
            got,
            vec![
                Quadruple::new("do", "doing", "do", "doing"),
                Quadruple::new("do", "doing", "eat", "eating"),
                Quadruple::new("eat", "eating", "eat", "eating"),
                Quadruple::new("cat", "cats", "cat", "cats"),
            ]
        );
        assert_eq!(count_analogies(&pairs), 4);
    }

    #[test]
    fn single_pair_gives_reflexive_analogy() {
        let got = extract_analogies(&[pair("a", "F", "b")], 100, 1);
        assert_eq!(got, vec![Quadruple::new("a", "b", "a", "b")]);
    }

    #[test]
    fn capping_is_deterministic_and_sized() {
        let pairs: Vec<_> = (0..30).map(|i| pair(&format!("w{i}"), "F", &format!("v{i}"))).collect();
        let a = extract_analogies(&pairs, 50, 9);
        let b = extract_analogies(&pairs, 50, 9);
        assert_eq!(a.len(), 50);
        assert_eq!(a, b);
        let c = extract_analogies(&pairs, 50, 10);
        assert_ne!(a, c);
        assert!(extract_analogies(&pairs, 0, 9).is_empty());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let items: Vec<u32> = (0..10).collect();
        let (tr, te) = random_split(&items, 0.7, 3);
        assert_eq!((tr.len(), te.len()), (7, 3));
        let mut all: Vec<u32> = tr.iter().chain(&te).copied().collect();
        all.sort();
        assert_eq!(all, items);
        assert_eq!(random_split(&items, 0.7, 3), (tr, te));
    }

    #[test]
    fn charset_and_vocabulary() {
        let cs = build_charset(["ab", "ba"]);
        assert_eq!(cs.len(), 6);
        assert_eq!(cs.id('a'), 4);
        assert_eq!(cs.id('b'), 5);
        assert_eq!(cs.encode("abz"), (vec![4, 5, CharIndex::UNK], 1));

        let x = vec![Quadruple::new("x", "x", "x", "x")];
        let v = build_vocabulary(&x, &x);
        assert_eq!(v.words(), &["x".to_string()]);
    }

    #[test]
    fn vocabulary_is_code_point_ordered() {
        let v = Vocabulary::from_words(["é", "z", "a", "Z", "a"]);
        assert_eq!(v.words(), &["Z", "a", "z", "é"]);
        assert!(v.contains("z"));
        assert!(!v.contains("y"));
    }

    /// Brute-force pairing: all (i, j) with i <= j sharing features.
    fn brute_force(pairs: &[TransformationPair]) -> Vec<Quadruple> {
        let mut out = Vec::new();
        for i in 0..pairs.len() {
            for j in i..pairs.len() {
                if pairs[i].features == pairs[j].features {
                    out.push(Quadruple::new(
                        &pairs[i].source,
                        &pairs[i].target,
                        &pairs[j].source,
                        &pairs[j].target,
                    ));
                }
            }
        }
        out.sort();
        out
    }

    fn arb_pairs() -> impl Strategy<Value = Vec<TransformationPair>> {
        prop::collection::vec(("[a-c]{1,3}", 0u8..4, "[a-c]{1,3}"), 0..50)
            .prop_map(|v| v.into_iter().map(|(s, f, t)| pair(&s, &format!("F{f}"), &t)).collect())
    }

    proptest! {
        #[test]
        fn extraction_matches_brute_force(pairs in arb_pairs()) {
            let mut got = extract_analogies(&pairs, usize::MAX, 0);
            prop_assert_eq!(got.len() as u64, count_analogies(&pairs));
            got.sort();
            prop_assert_eq!(got, brute_force(&pairs));
        }

        #[test]
        fn extraction_never_emits_both_orientations(pairs in arb_pairs()) {
            // Pairs are made distinct by index so that duplicate lines do not
            // alias each other.
            let pairs: Vec<_> = pairs.into_iter().enumerate()
                .map(|(i, p)| pair(&format!("{}{i}", p.source), &p.features, &format!("{}{i}", p.target)))
                .collect();
            let got = extract_analogies(&pairs, usize::MAX, 0);
            let set: std::collections::HashSet<_> = got.iter().cloned().collect();
            for q in &got {
                if (q.a.as_str(), q.b.as_str()) != (q.c.as_str(), q.d.as_str()) {
                    prop_assert!(!set.contains(&Quadruple::new(&q.c, &q.d, &q.a, &q.b)));
                }
            }
        }

        #[test]
        fn cap_at_or_above_total_is_identity(pairs in arb_pairs(), extra in 0usize..5) {
            let total = count_analogies(&pairs) as usize;
            prop_assert_eq!(
                extract_analogies(&pairs, total + extra, 1),
                extract_analogies(&pairs, usize::MAX, 2)
            );
        }

        #[test]
        fn capped_output_is_subsequence(pairs in arb_pairs(), cap in 0usize..20, seed in any::<u64>()) {
            let full = extract_analogies(&pairs, usize::MAX, 0);
            let capped = extract_analogies(&pairs, cap, seed);
            prop_assert_eq!(capped.len(), cap.min(full.len()));
            let mut it = full.iter();
            for q in &capped {
                prop_assert!(it.any(|f| f == q));
            }
        }

        #[test]
        fn inflection_round_trip(pairs in prop::collection::vec(("[a-zé]{1,6}", "[A-Z=,;]{0,8}", "[a-zé]{1,6}"), 0..20)) {
            let pairs: Vec<_> = pairs.iter().map(|(s, f, t)| pair(s, f, t)).collect();
            let text = write_inflection(&pairs);
            prop_assert_eq!(&parse_inflection_file(text.as_bytes()).unwrap(), &pairs);
            prop_assert_eq!(write_inflection(&parse_inflection_file(text.as_bytes()).unwrap()), text);
        }
    }
}

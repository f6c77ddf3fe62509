//! Equivalent and contradicting forms of a base analogy.
//!
//! From `A:B::C:D`, symmetry and central permutation give eight equivalent
//! valid forms. Each of those yields three invalid forms (swap the first
//! pair, swap the outer terms of the first three, repeat the first term).
//! Candidates that textually coincide with a valid form are dropped so a
//! quadruple never carries both labels.

use std::collections::HashSet;

use rand::seq::index;
use rand::Rng as _;

use crate::corpus::Quadruple;
use crate::numkit::Rng;

/// Slot permutations of the eight valid forms, in canonical order:
/// `A:B::C:D, A:C::B:D, D:B::C:A, C:A::D:B, C:D::A:B, B:A::D:C, D:C::B:A, B:D::A:C`.
pub const VALID_PERMUTATIONS: [[usize; 4]; 8] = [
    [0, 1, 2, 3],
    [0, 2, 1, 3],
    [3, 1, 2, 0],
    [2, 0, 3, 1],
    [2, 3, 0, 1],
    [1, 0, 3, 2],
    [3, 2, 1, 0],
    [1, 3, 0, 2],
];

/// From a form `W:X::Y:Z`: `X:W::Y:Z`, `Y:X::W:Z`, `W:W::Y:Z`.
pub const INVALID_TEMPLATES: [[usize; 4]; 3] = [[1, 0, 2, 3], [2, 1, 0, 3], [0, 0, 2, 3]];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Invalid = 0,
    Valid = 1,
}

impl Label {
    pub fn as_f32(self) -> f32 {
        self as u8 as f32
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabeledQuadruple {
    pub quad: Quadruple,
    pub label: Label,
}

/// Which invalid forms accompany the eight valid ones during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum InvalidSetting {
    /// The three invalid forms of the base form only.
    BaseOnly,
    /// Eight sampled from all invalid forms.
    Sampled,
    /// Every invalid form.
    All,
}

impl InvalidSetting {
    pub fn from_count(n: u32) -> Option<Self> {
        match n {
            3 => Some(InvalidSetting::BaseOnly),
            8 => Some(InvalidSetting::Sampled),
            24 => Some(InvalidSetting::All),
            _ => None,
        }
    }

    pub fn count(self) -> u32 {
        match self {
            InvalidSetting::BaseOnly => 3,
            InvalidSetting::Sampled => 8,
            InvalidSetting::All => 24,
        }
    }
}

pub fn valid_forms(q: &Quadruple) -> Vec<Quadruple> {
    VALID_PERMUTATIONS.iter().map(|&p| q.permuted(p)).collect()
}

fn invalid_candidates(q: &Quadruple, forms: &[[usize; 4]]) -> Vec<LabeledQuadruple> {
    let valid: HashSet<Quadruple> = valid_forms(q).into_iter().collect();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for form in forms {
        let base = q.permuted(*form);
        for t in INVALID_TEMPLATES {
            let cand = base.permuted(t);
            if !valid.contains(&cand) && seen.insert(cand.clone()) {
                out.push(LabeledQuadruple {
                    quad: cand,
                    label: Label::Invalid,
                });
            }
        }
    }
    out
}

/// Up to 24 invalid forms; fewer when candidates collide with a valid form
/// or with each other.
pub fn invalid_forms(q: &Quadruple) -> Vec<LabeledQuadruple> {
    invalid_candidates(q, &VALID_PERMUTATIONS)
}

/// The (at most three) invalid forms derived from the base form alone.
pub fn base_invalid_forms(q: &Quadruple) -> Vec<LabeledQuadruple> {
    invalid_candidates(q, &VALID_PERMUTATIONS[..1])
}

/// Number of the 24 invalid candidates of `q` removed by collision or
/// duplicate filtering.
pub fn dropped_invalid_count(q: &Quadruple) -> usize {
    24 - invalid_forms(q).len()
}

/// `k` invalid forms drawn uniformly without replacement. When fewer than `k`
/// exist, all of them are kept and the rest are drawn with replacement; when
/// none exist the result is empty.
pub fn sample_invalid(q: &Quadruple, k: usize, rng: &mut Rng) -> Vec<LabeledQuadruple> {
    let pool = invalid_forms(q);
    if pool.is_empty() || k == 0 {
        return Vec::new();
    }
    if pool.len() >= k {
        return index::sample(rng, pool.len(), k)
            .into_iter()
            .map(|i| pool[i].clone())
            .collect();
    }
    let mut out = pool.clone();
    while out.len() < k {
        out.push(pool[rng.gen_range(0..pool.len())].clone());
    }
    out
}

fn label_valid(q: &Quadruple) -> Vec<LabeledQuadruple> {
    valid_forms(q)
        .into_iter()
        .map(|quad| LabeledQuadruple {
            quad,
            label: Label::Valid,
        })
        .collect()
}

/// Eight valid forms plus eight sampled invalid forms.
pub fn augment_for_classification(q: &Quadruple, rng: &mut Rng) -> Vec<LabeledQuadruple> {
    augment_with(q, InvalidSetting::Sampled, rng)
}

/// Eight valid forms plus invalid forms chosen by `setting`.
pub fn augment_with(q: &Quadruple, setting: InvalidSetting, rng: &mut Rng) -> Vec<LabeledQuadruple> {
    let mut out = label_valid(q);
    out.extend(match setting {
        InvalidSetting::BaseOnly => base_invalid_forms(q),
        InvalidSetting::Sampled => sample_invalid(q, 8, rng),
        InvalidSetting::All => invalid_forms(q),
    });
    out
}

/// Eight valid forms plus every invalid form, as used for evaluation.
pub fn augment_for_evaluation(q: &Quadruple) -> Vec<LabeledQuadruple> {
    let mut out = label_valid(q);
    out.extend(invalid_forms(q));
    out
}

pub fn augment_for_regression(q: &Quadruple) -> Vec<Quadruple> {
    valid_forms(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Rng;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn q(a: &str, b: &str, c: &str, d: &str) -> Quadruple {
        Quadruple::new(a, b, c, d)
    }

    #[test]
    fn eight_valid_forms_in_order() {
        let got = valid_forms(&q("a", "b", "c", "d"));
        let want = [
            "a:b::c:d", "a:c::b:d", "d:b::c:a", "c:a::d:b", "c:d::a:b", "b:a::d:c", "d:c::b:a", "b:d::a:c",
        ];
        assert_eq!(got.iter().map(|x| x.to_string()).collect::<Vec<_>>(), want);
        assert_eq!(valid_forms(&q("a", "a", "a", "a")), vec![q("a", "a", "a", "a"); 8]);
    }

    /// Closure of {A:B::C:D} under symmetry and central permutation.
    fn postulate_closure(base: &Quadruple) -> BTreeSet<Quadruple> {
        let mut seen = BTreeSet::from([base.clone()]);
        let mut frontier = vec![base.clone()];
        while let Some(x) = frontier.pop() {
            let symmetric = q(&x.c, &x.d, &x.a, &x.b);
            let central = q(&x.a, &x.c, &x.b, &x.d);
            for y in [symmetric, central] {
                if seen.insert(y.clone()) {
                    frontier.push(y);
                }
            }
        }
        seen
    }

    #[test]
    fn valid_forms_equal_postulate_closure() {
        let base = q("a", "b", "c", "d");
        let closure = postulate_closure(&base);
        let forms: BTreeSet<_> = valid_forms(&base).into_iter().collect();
        assert_eq!(closure.len(), 8);
        assert_eq!(forms, closure);
    }

    #[test]
    fn twenty_four_invalid_for_distinct_words() {
        let inv = invalid_forms(&q("a", "b", "c", "d"));
        assert_eq!(inv.len(), 24);
        assert_eq!(inv[0].quad, q("b", "a", "c", "d"));
        assert_eq!(inv[1].quad, q("c", "b", "a", "d"));
        assert_eq!(inv[2].quad, q("a", "a", "c", "d"));
        assert!(inv.iter().all(|x| x.label == Label::Invalid));
        assert_eq!(base_invalid_forms(&q("a", "b", "c", "d")).len(), 3);
    }

    #[test]
    fn reflexive_analogy_loses_colliding_forms() {
        let base = q("a", "b", "a", "b");
        let inv = invalid_forms(&base);
        assert!(inv.len() < 24);
        // C:B::A:D of the base form is a:b::a:b itself
        assert!(!inv.iter().any(|x| x.quad == base));

        // Enumerate the 24 raw candidates and intersect with the valid set.
        let valid: BTreeSet<_> = valid_forms(&base).into_iter().collect();
        let mut raw = BTreeSet::new();
        for f in valid_forms(&base) {
            for t in INVALID_TEMPLATES {
                raw.insert(f.permuted(t));
            }
        }
        let expected: BTreeSet<_> = raw.difference(&valid).cloned().collect();
        let got: BTreeSet<_> = inv.into_iter().map(|x| x.quad).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn fixed_point_has_no_invalid_forms() {
        assert!(invalid_forms(&q("a", "a", "a", "a")).is_empty());
        let mut rng = Rng::new(0, "sample");
        assert!(sample_invalid(&q("a", "a", "a", "a"), 8, &mut rng).is_empty());
    }

    #[test]
    fn sampling_properties() {
        let base = q("w", "x", "y", "z");
        let pool: BTreeSet<_> = invalid_forms(&base).into_iter().collect();
        let mut rng = Rng::new(4, "sample");
        let s = sample_invalid(&base, 8, &mut rng);
        assert_eq!(s.len(), 8);
        let distinct: BTreeSet<_> = s.iter().map(|x| x.quad.clone()).collect();
        assert_eq!(distinct.len(), 8);
        assert!(s.iter().all(|x| pool.iter().any(|p| p == x)));
        assert!(sample_invalid(&base, 0, &mut rng).is_empty());

        let a = sample_invalid(&base, 8, &mut Rng::new(9, "sample"));
        let b = sample_invalid(&base, 8, &mut Rng::new(9, "sample"));
        assert_eq!(a, b);
    }

    #[test]
    fn sampling_tops_up_small_pools() {
        let base = q("a", "b", "a", "b");
        let pool_len = invalid_forms(&base).len();
        let s = sample_invalid(&base, pool_len + 5, &mut Rng::new(1, "sample"));
        assert_eq!(s.len(), pool_len + 5);
    }

    #[test]
    fn augmentation_sizes() {
        let base = q("do", "doing", "eat", "eating");
        let mut rng = Rng::new(0, "sample");
        let clf = augment_for_classification(&base, &mut rng);
        assert_eq!(clf.iter().filter(|x| x.label == Label::Valid).count(), 8);
        assert_eq!(clf.iter().filter(|x| x.label == Label::Invalid).count(), 8);
        let eval = augment_for_evaluation(&base);
        assert_eq!(eval.iter().filter(|x| x.label == Label::Invalid).count(), 24);
        let all = augment_with(&base, InvalidSetting::All, &mut rng);
        let three = augment_with(&base, InvalidSetting::BaseOnly, &mut rng);
        assert_eq!((all.len() - 8, three.len() - 8), (24, 3));
        assert_eq!(augment_for_regression(&base).len(), 8);
    }

    /// Symbolic check: asserting an invalid candidate together with the base
    /// form must allow deriving something that breaks the postulates. With
    /// distinct symbols, the closure of the candidate must not meet the
    /// closure of the base form.
    #[test]
    fn invalid_candidates_are_not_derivable() {
        let base = q("A", "B", "C", "D");
        let valid = postulate_closure(&base);
        for inv in invalid_forms(&base) {
            let c = postulate_closure(&inv.quad);
            assert!(c.is_disjoint(&valid), "{} is derivable", inv.quad);
        }
    }

    fn arb_quad() -> impl Strategy<Value = Quadruple> {
        ("[ab]{1,2}", "[ab]{1,2}", "[ab]{1,2}", "[ab]{1,2}").prop_map(|(a, b, c, d)| q(&a, &b, &c, &d))
    }

    proptest! {
        #[test]
        fn valid_forms_closed(base in arb_quad()) {
            let set: BTreeSet<_> = valid_forms(&base).into_iter().collect();
            for f in valid_forms(&base) {
                let again: BTreeSet<_> = valid_forms(&f).into_iter().collect();
                prop_assert_eq!(&again, &set);
            }
        }

        #[test]
        fn invalid_and_valid_disjoint(base in arb_quad()) {
            let valid: BTreeSet<_> = valid_forms(&base).into_iter().collect();
            let inv = invalid_forms(&base);
            prop_assert!(inv.len() <= 24);
            for x in &inv {
                prop_assert!(!valid.contains(&x.quad));
            }
        }

        #[test]
        fn distinct_words_give_exactly_24(a in "[a-z]{1,4}", b in "[a-z]{1,4}", c in "[a-z]{1,4}", d in "[a-z]{1,4}") {
            let ws = [&a, &b, &c, &d];
            let distinct: BTreeSet<_> = ws.iter().collect();
            prop_assume!(distinct.len() == 4);
            prop_assert_eq!(invalid_forms(&q(&a, &b, &c, &d)).len(), 24);
        }
    }
}

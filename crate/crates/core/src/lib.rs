//! Morphological analogy detection and solving.
//!
//! Words are embedded with a character-level CNN. A convolutional head scores
//! whether a quadruple `A:B::C:D` is a valid analogy, and a dense head
//! predicts the embedding of `D` from `A`, `B` and `C`.

pub mod annc;
pub mod annr;
pub mod augment;
pub mod baselines;
pub mod cli;
pub mod corpus;
pub mod embedder;
pub mod evaluator;
pub mod numkit;
pub mod synthetic;
pub mod trainer;

//! Points, labels and the labeled batches that Algorithm 1 accumulates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::splitmix64;

/// A point of the instance space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Point {
    /// Index into a discrete domain.
    Atom(usize),
    /// A point of `[0, 1]`.
    Real(f64),
    /// A raw feature vector.
    Vector(Vec<f64>),
}

/// Binary label in `{-1, +1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn value(self) -> f64 {
        match self {
            Label::Negative => -1.0,
            Label::Positive => 1.0,
        }
    }

    /// Label of a real score under `sign(0) = +1`.
    pub fn of_score(score: f64) -> Self {
        if score >= 0.0 {
            Label::Positive
        } else {
            Label::Negative
        }
    }
}

/// A labeled example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Labeled {
    pub x: Point,
    pub y: Label,
}

impl Labeled {
    pub fn new(x: Point, y: Label) -> Self {
        Self { x, y }
    }
}

/// One queried example together with its stream position and Rademacher bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchEntry {
    pub index: u64,
    pub example: Labeled,
    pub xi: Label,
}

/// Queried examples in stream order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabeledBatch {
    entries: Vec<BatchEntry>,
}

impl LabeledBatch {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends an example, drawing its Rademacher bit from `(seed, index)`.
    pub fn push(&mut self, seed: u64, index: u64, example: Labeled) -> Result<()> {
        self.push_with_bit(index, example, rademacher_bit(seed, index))
    }

    /// Appends an example with an explicit Rademacher bit.
    pub fn push_with_bit(&mut self, index: u64, example: Labeled, xi: Label) -> Result<()> {
        if let Some(last) = self.entries.last() {
            if index <= last.index {
                return Err(Error::NonIncreasingIndex {
                    prev: last.index,
                    next: index,
                });
            }
        }
        self.entries.push(BatchEntry { index, example, xi });
        Ok(())
    }

    /// Builds a batch from examples indexed `1..=len` with explicit bits.
    pub fn from_examples(examples: Vec<Labeled>, bits: &[Label]) -> Self {
        assert_eq!(examples.len(), bits.len(), "one bit per example");
        let entries = examples
            .into_iter()
            .zip(bits)
            .enumerate()
            .map(|(k, (example, &xi))| BatchEntry {
                index: k as u64 + 1,
                example,
                xi,
            })
            .collect();
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[BatchEntry] {
        &self.entries
    }

    pub fn examples(&self) -> impl Iterator<Item = &Labeled> + '_ {
        self.entries.iter().map(|e| &e.example)
    }
}

/// Rademacher bit for stream position `index`, reproducible from `(seed, index)` alone.
pub fn rademacher_bit(seed: u64, index: u64) -> Label {
    let h = splitmix64(splitmix64(seed ^ 0xA5A5_5A5A_C3C3_3C3C) ^ index);
    if h >> 63 == 0 {
        Label::Negative
    } else {
        Label::Positive
    }
}

/// Independent seed for sub-stream `stream` of a master seed.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64(stream.wrapping_add(0x1234_5678)))
}

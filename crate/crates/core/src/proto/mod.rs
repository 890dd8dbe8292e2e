//! Class/hop prototypes and their wire format.

mod client;
mod scorer;

use std::collections::BTreeMap;

use crate::error::{FedError, Result};

pub use client::{
    add_prototype_noise, naive_local_prototypes, pseudo_annotate, topology_aware_prototypes, Neighborhoods,
    Normalization, PrototypeTape,
};
pub use scorer::{AttentionScorer, ScorerGrads};

/// Index of the largest entry; ties go to the lowest index.
pub(crate) fn client_argmax(row: &[f64]) -> usize {
    client::argmax(row).0
}

/// Bytes of the fixed per-prototype header: class `u16`, hop `u16`, support `u32`.
pub const PROTOTYPE_HEADER_BYTES: usize = 8;

/// A class/hop prototype vector and the number of anchors that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Prototype {
    pub class: usize,
    pub hop: usize,
    pub vector: Vec<f64>,
    pub support: usize,
}

impl Prototype {
    pub fn wire_size(&self) -> usize {
        PROTOTYPE_HEADER_BYTES + 8 * self.vector.len()
    }
}

/// Prototypes keyed by `(class, hop)`, iterated in lexicographic order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PrototypeSet {
    map: BTreeMap<(usize, usize), Prototype>,
}

impl PrototypeSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, p: Prototype) {
        self.map.insert((p.class, p.hop), p);
    }

    pub fn get(&self, class: usize, hop: usize) -> Option<&Prototype> {
        self.map.get(&(class, hop))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Prototype> {
        self.map.values()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Prototype> {
        self.map.values_mut()
    }

    pub fn keys(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.map.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn contains(&self, class: usize, hop: usize) -> bool {
        self.map.contains_key(&(class, hop))
    }

    /// Total encoded size in bytes.
    pub fn wire_size(&self) -> usize {
        self.iter().map(Prototype::wire_size).sum()
    }

    /// Concatenated little-endian records in `(class, hop)` order.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.wire_size());
        for p in self.iter() {
            out.extend_from_slice(&(p.class as u16).to_le_bytes());
            out.extend_from_slice(&(p.hop as u16).to_le_bytes());
            out.extend_from_slice(&(p.support as u32).to_le_bytes());
            for x in &p.vector {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    /// Inverse of [`encode`](Self::encode) for prototype dimension `dim`.
    pub fn decode(bytes: &[u8], dim: usize) -> Result<Self> {
        let rec = PROTOTYPE_HEADER_BYTES + 8 * dim;
        if rec == 0 || !bytes.len().is_multiple_of(rec) {
            return Err(FedError::InvalidArgument(format!(
                "{} bytes is not a whole number of {rec}-byte prototype records",
                bytes.len()
            )));
        }
        let mut set = PrototypeSet::new();
        for chunk in bytes.chunks_exact(rec) {
            let class = u16::from_le_bytes([chunk[0], chunk[1]]) as usize;
            let hop = u16::from_le_bytes([chunk[2], chunk[3]]) as usize;
            let support = u32::from_le_bytes([chunk[4], chunk[5], chunk[6], chunk[7]]) as usize;
            let vector = chunk[PROTOTYPE_HEADER_BYTES..]
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect();
            set.insert(Prototype {
                class,
                hop,
                vector,
                support,
            });
        }
        Ok(set)
    }
}

impl FromIterator<Prototype> for PrototypeSet {
    fn from_iter<I: IntoIterator<Item = Prototype>>(iter: I) -> Self {
        let mut set = PrototypeSet::new();
        for p in iter {
            set.insert(p);
        }
        set
    }
}

use std::fmt;

use serde::ser::{Serialize, SerializeSeq, Serializer};

use super::AffineMap;

/// Activation record of one layer. ReLU: per-unit "strictly positive" flag.
/// Maxout: per-unit winning piece, 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LayerActivation {
    Relu(Vec<bool>),
    Maxout(Vec<usize>),
}

impl LayerActivation {
    pub fn len(&self) -> usize {
        match self {
            LayerActivation::Relu(a) => a.len(),
            LayerActivation::Maxout(w) => w.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of units that pass a nonzero linear signal: active ReLUs, or
    /// every maxout unit.
    pub fn active_count(&self) -> usize {
        match self {
            LayerActivation::Relu(a) => a.iter().filter(|&&on| on).count(),
            LayerActivation::Maxout(w) => w.len(),
        }
    }

    /// 1-based indices of the active ReLUs, or 1-based maxout winners.
    pub fn one_based(&self) -> Vec<usize> {
        match self {
            LayerActivation::Relu(a) => a
                .iter()
                .enumerate()
                .filter_map(|(i, &on)| on.then_some(i + 1))
                .collect(),
            LayerActivation::Maxout(w) => w.iter().map(|j| j + 1).collect(),
        }
    }

    /// Applies σ (zero inactive rows) or φ (pick the winning piece's row) to
    /// the preactivation map of the layer.
    pub(crate) fn select(&self, pre: AffineMap, rank: usize) -> AffineMap {
        match self {
            LayerActivation::Relu(active) => {
                let AffineMap { mut matrix, mut offset } = pre;
                for (i, &on) in active.iter().enumerate() {
                    if !on {
                        matrix[i].iter_mut().for_each(|v| *v = 0.0);
                        offset[i] = 0.0;
                    }
                }
                AffineMap { matrix, offset }
            }
            LayerActivation::Maxout(winners) => {
                let matrix = winners
                    .iter()
                    .enumerate()
                    .map(|(i, &j)| pre.matrix[i * rank + j].clone())
                    .collect();
                let offset = winners
                    .iter()
                    .enumerate()
                    .map(|(i, &j)| pre.offset[i * rank + j])
                    .collect();
                AffineMap { matrix, offset }
            }
        }
    }
}

/// Per-layer activation records `(S^1, ..., S^l)`; identifies a linear region.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActivationPattern {
    layers: Vec<LayerActivation>,
}

impl ActivationPattern {
    pub fn new(layers: Vec<LayerActivation>) -> Self {
        ActivationPattern { layers }
    }

    pub fn layers(&self) -> &[LayerActivation] {
        &self.layers
    }

    /// Number of layers covered.
    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn push(&mut self, layer: LayerActivation) {
        self.layers.push(layer);
    }

    /// Pattern restricted to the first `n` layers.
    pub fn truncated(&self, n: usize) -> Self {
        ActivationPattern {
            layers: self.layers[..n.min(self.layers.len())].to_vec(),
        }
    }
}

impl fmt::Display for ActivationPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (l, layer) in self.layers.iter().enumerate() {
            if l > 0 {
                write!(f, ", ")?;
            }
            let items: Vec<String> = layer.one_based().iter().map(usize::to_string).collect();
            match layer {
                LayerActivation::Relu(_) => write!(f, "{{{}}}", items.join(","))?,
                LayerActivation::Maxout(_) => write!(f, "[{}]", items.join(","))?,
            }
        }
        write!(f, ")")
    }
}

// Serialized as a list of 1-based index lists, one per layer.
impl Serialize for ActivationPattern {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.layers.len()))?;
        for layer in &self.layers {
            seq.serialize_element(&layer.one_based())?;
        }
        seq.end()
    }
}

//! JSON network documents.
//!
//! ```json
//! {"input_dim": 2,
//!  "layers": [{"type": "relu", "weights": [[-1, 1], [1, 1]], "bias": [0, -4]},
//!             {"type": "maxout", "rank": 2, "weights": [W1, W2], "bias": [b1, b2]}],
//!  "output": {"weights": [[1, 0]], "bias": [0]}}
//! ```
//!
//! Numbers are written with the shortest representation that round-trips, so
//! a write/read cycle is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Layer, LinearOutput, Matrix, Network, ViolationKind};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkDoc {
    input_dim: usize,
    layers: Vec<LayerDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output: Option<OutputDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum LayerDoc {
    Relu {
        weights: Matrix,
        bias: Vec<f64>,
    },
    Maxout {
        rank: usize,
        weights: Vec<Matrix>,
        bias: Vec<Vec<f64>>,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputDoc {
    weights: Matrix,
    bias: Vec<f64>,
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.into(),
        message: message.into(),
    }
}

pub fn from_json_str(text: &str) -> Result<Network> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: NetworkDoc = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if inner.is_syntax() || inner.is_eof() {
            Error::Json(inner)
        } else {
            schema(path, inner.to_string())
        }
    })?;

    let mut layers = Vec::with_capacity(doc.layers.len());
    for (i, layer) in doc.layers.into_iter().enumerate() {
        layers.push(match layer {
            LayerDoc::Relu { weights, bias } => Layer::Relu { weights, bias },
            LayerDoc::Maxout { rank, weights, bias } => {
                if rank < 2 {
                    return Err(schema(format!("layers[{i}].rank"), "rank must be ≥ 2"));
                }
                if weights.len() != rank || bias.len() != rank {
                    return Err(schema(
                        format!("layers[{i}]"),
                        format!(
                            "rank {rank} needs {rank} weight matrices and bias vectors, found {} and {}",
                            weights.len(),
                            bias.len()
                        ),
                    ));
                }
                Layer::Maxout { weights, bias }
            }
        });
    }
    let net = Network {
        input_dim: doc.input_dim,
        layers,
        output: doc.output.map(|o| LinearOutput {
            weights: o.weights,
            bias: o.bias,
        }),
    };
    if let Some(v) = net.validate().into_iter().next() {
        let path = match v.layer {
            Some(l) => format!("layers[{}]", l - 1),
            None if v.kind == ViolationKind::Empty => "input_dim".to_string(),
            None => "output".to_string(),
        };
        return Err(schema(path, v.message));
    }
    Ok(net)
}

pub fn to_json_string(net: &Network) -> Result<String> {
    let doc = NetworkDoc {
        input_dim: net.input_dim,
        layers: net
            .layers
            .iter()
            .map(|l| match l {
                Layer::Relu { weights, bias } => LayerDoc::Relu {
                    weights: weights.clone(),
                    bias: bias.clone(),
                },
                Layer::Maxout { weights, bias } => LayerDoc::Maxout {
                    rank: weights.len(),
                    weights: weights.clone(),
                    bias: bias.clone(),
                },
            })
            .collect(),
        output: net.output.as_ref().map(|o| OutputDoc {
            weights: o.weights.clone(),
            bias: o.bias.clone(),
        }),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn read_network(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    from_json_str(&text)
}

pub fn write_network(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = to_json_string(net)?;
    text.push('\n');
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

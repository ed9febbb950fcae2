//! Small hand-specified networks used as regression fixtures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::network::{Layer, LinearOutput, Network};

/// Two inputs, three ReLU layers of width two:
/// `h_a = max{0, -x1 + x2}`, `h_b = max{0, x1 + x2 - 4}`,
/// `h_c = max{0, -h_a - 3h_b + 4}`, `h_d = max{0, -3h_a - h_b + 4}`,
/// `h_e = max{0, h_c + 3h_d - 4}`, `h_f = max{0, 3h_c + h_d - 4}`.
/// Partitions the plane into 20 regions.
pub fn three_layer_2d() -> Network {
    Network::new(
        2,
        vec![
            Layer::relu(vec![vec![-1.0, 1.0], vec![1.0, 1.0]], vec![0.0, -4.0]),
            Layer::relu(vec![vec![-1.0, -3.0], vec![-3.0, -1.0]], vec![4.0, 4.0]),
            Layer::relu(vec![vec![1.0, 3.0], vec![3.0, 1.0]], vec![-4.0, -4.0]),
        ],
    )
}

/// One input: `h_a = max{0, x}`, `h_b = max{0, -x + 1}`,
/// `h_c = max{0, 4h_a + 2h_b - 3}`. The boundary of `c` is disconnected
/// (at -1/2 and 1/2), giving breakpoints -1/2, 0, 1/2, 1.
pub fn disconnected_boundary_1d() -> Network {
    Network::new(
        1,
        vec![
            Layer::relu(vec![vec![1.0], vec![-1.0]], vec![0.0, 1.0]),
            Layer::relu(vec![vec![4.0, 2.0]], vec![-3.0]),
        ],
    )
}

/// The literally printed four-unit zigzag layer:
/// `h1 = max{0, -27/2 x + 3/2}`, `h2 = max{0, 9x - 3}`, `h3 = max{0, 9x - 5}`,
/// `h4 = max{0, 9x}`, read out as `[-1, 1, -1, 1] · h + 5`.
pub fn printed_zigzag4() -> Network {
    Network::new(
        1,
        vec![Layer::relu(
            vec![vec![-13.5], vec![9.0], vec![9.0], vec![9.0]],
            vec![1.5, -3.0, -5.0, 0.0],
        )],
    )
    .with_output(LinearOutput {
        weights: vec![vec![-1.0, 1.0, -1.0, 1.0]],
        bias: vec![5.0],
    })
}

/// A single ReLU `max{0, x}` on one input.
pub fn single_neuron() -> Network {
    Network::new(1, vec![Layer::relu(vec![vec![1.0]], vec![0.0])])
}

/// A single rank-2 maxout unit computing `|x| = max{x, -x}`.
pub fn abs_maxout() -> Network {
    Network::new(
        1,
        vec![Layer::maxout(
            vec![vec![vec![1.0]], vec![vec![-1.0]]],
            vec![vec![0.0], vec![0.0]],
        )],
    )
}

/// A single rank-3 maxout unit `max{x, 0, -x}`; the constant piece never
/// strictly wins.
pub fn degenerate_maxout3() -> Network {
    Network::new(
        1,
        vec![Layer::maxout(
            vec![vec![vec![1.0]], vec![vec![0.0]], vec![vec![-1.0]]],
            vec![vec![0.0], vec![0.0], vec![0.0]],
        )],
    )
}

/// No hidden layers: the identity map on `dim` inputs.
pub fn affine_only(dim: usize) -> Network {
    Network::new(dim, Vec::new())
}

/// ReLU network with weights and biases uniform in `[-1, 1]`.
pub fn random_relu(input_dim: usize, widths: &[usize], seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prev = input_dim;
    let mut layers = Vec::with_capacity(widths.len());
    for &n in widths {
        let weights = (0..n).map(|_| uniform_vec(&mut rng, prev)).collect();
        layers.push(Layer::relu(weights, uniform_vec(&mut rng, n)));
        prev = n;
    }
    Network::new(input_dim, layers)
}

/// Rank-`rank` maxout network with weights and biases uniform in `[-1, 1]`.
pub fn random_maxout(input_dim: usize, widths: &[usize], rank: usize, seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prev = input_dim;
    let mut layers = Vec::with_capacity(widths.len());
    for &n in widths {
        let weights = (0..rank)
            .map(|_| (0..n).map(|_| uniform_vec(&mut rng, prev)).collect())
            .collect();
        let bias = (0..rank).map(|_| uniform_vec(&mut rng, n)).collect();
        layers.push(Layer::maxout(weights, bias));
        prev = n;
    }
    Network::new(input_dim, layers)
}

fn uniform_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

//! Small dense feed-forward networks: tanh hidden layers, identity output.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{all_finite, Matrix};
use crate::{Error, Result};

/// One dense layer: `y = W x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Ordered stack of dense layers. Hidden activations are tanh; the output
/// layer is linear. The smooth activation keeps central differences
/// well-behaved for gradient checking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<DenseLayer>,
}

impl MlpParams {
    /// Initialize with weights drawn uniformly from
    /// `[-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))]` and zero
    /// biases. `dims` lists layer widths, e.g. `[8, 16, 4]` for 8 -> 16 -> 4.
    pub fn init<R: Rng>(dims: &[usize], rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "mlp needs at least input and output dims");
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut weight = Matrix::zeros(fan_out, fan_in);
            for v in weight.data.iter_mut() {
                *v = rng.random_range(-bound..=bound);
            }
            layers.push(DenseLayer {
                weight,
                bias: vec![0.0; fan_out],
            });
        }
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("mlp has layers").weight.rows
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.data.len() + l.bias.len())
            .sum()
    }

    /// Flatten all parameters, layer by layer, weights before biases.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weight.data);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Inverse of [`flatten`](Self::flatten); shapes must match.
    pub fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::Shape(format!(
                "flat parameter vector has length {}, expected {}",
                flat.len(),
                self.n_params()
            )));
        }
        let mut off = 0;
        for l in self.layers.iter_mut() {
            let nw = l.weight.data.len();
            l.weight.data.copy_from_slice(&flat[off..off + nw]);
            off += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&flat[off..off + nb]);
            off += nb;
        }
        Ok(())
    }
}

/// Forward pass. Rejects inputs whose length does not match the first
/// layer, naming the offending layer for interior mismatches.
pub fn mlp_apply(params: &MlpParams, input: &[f64]) -> Result<Vec<f64>> {
    if !all_finite(input) {
        return Err(Error::NonFinite("mlp input".into()));
    }
    let n_layers = params.layers.len();
    let mut x = input.to_vec();
    for (i, layer) in params.layers.iter().enumerate() {
        if x.len() != layer.weight.cols {
            return Err(Error::Shape(format!(
                "layer {i}: input length {} does not match weight columns {}",
                x.len(),
                layer.weight.cols
            )));
        }
        let mut y = layer.weight.matvec(&x);
        for (v, b) in y.iter_mut().zip(layer.bias.iter()) {
            *v += b;
        }
        if i + 1 < n_layers {
            for v in y.iter_mut() {
                *v = v.tanh();
            }
        }
        x = y;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_layer(weight: Matrix, bias: Vec<f64>) -> MlpParams {
        MlpParams {
            layers: vec![DenseLayer { weight, bias }],
        }
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let p = single_layer(Matrix::identity(2), vec![0.0, 0.0]);
        assert_eq!(mlp_apply(&p, &[1.5, -2.0]).unwrap(), vec![1.5, -2.0]);
    }

    #[test]
    fn zero_weight_layer_returns_bias() {
        let p = single_layer(Matrix::zeros(2, 3), vec![0.3, 0.7]);
        assert_eq!(mlp_apply(&p, &[4.0, -1.0, 9.9]).unwrap(), vec![0.3, 0.7]);
    }

    #[test]
    fn two_layer_matches_reference_evaluation() {
        // Reference value computed by direct expression evaluation, not via
        // mlp_apply.
        let w1 = Matrix::from_rows(&[vec![0.5, -0.25], vec![0.1, 0.2]]).unwrap();
        let b1 = vec![0.1, -0.1];
        let w2 = Matrix::from_rows(&[vec![1.5, -0.5]]).unwrap();
        let b2 = vec![0.25];
        let p = MlpParams {
            layers: vec![
                DenseLayer { weight: w1, bias: b1 },
                DenseLayer { weight: w2, bias: b2 },
            ],
        };
        let x = [1.5, -2.0];
        let h0 = (0.5 * 1.5 + (-0.25) * (-2.0) + 0.1_f64).tanh();
        let h1 = (0.1 * 1.5 + 0.2 * (-2.0) + (-0.1_f64)).tanh();
        let expected = 1.5 * h0 - 0.5 * h1 + 0.25;
        let got = mlp_apply(&p, &x).unwrap();
        assert_eq!(got.len(), 1);
        assert!((got[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_names_layer() {
        let p = single_layer(Matrix::zeros(2, 3), vec![0.0, 0.0]);
        let err = mlp_apply(&p, &[1.0, 2.0]).unwrap_err();
        assert!(err.to_string().contains("layer 0"));
    }

    #[test]
    fn flatten_round_trip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        use rand::SeedableRng;
        let p = MlpParams::init(&[4, 5, 2], &mut rng);
        let flat = p.flatten();
        assert_eq!(flat.len(), p.n_params());
        let mut q = p.clone();
        q.load_flat(&flat).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn init_biases_zero_weights_bounded() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let p = MlpParams::init(&[6, 3], &mut rng);
        let bound = (6.0 / 9.0_f64).sqrt();
        assert!(p.layers[0].bias.iter().all(|b| *b == 0.0));
        assert!(p.layers[0].weight.data.iter().all(|w| w.abs() <= bound));
    }
}

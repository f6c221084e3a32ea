//! Affine layers, the two-layer Tanh fusion MLP, and loss primitives.

use ndarray::{Array1, Array2};

/// Dense layer `y = W x + b`, weights `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct AffineGrads {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Affine {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Affine {
            w: Array2::zeros((out_dim, in_dim)),
            b: Array1::zeros(out_dim),
        }
    }

    pub fn zero_grads(&self) -> AffineGrads {
        AffineGrads {
            w: Array2::zeros(self.w.raw_dim()),
            b: Array1::zeros(self.b.raw_dim()),
        }
    }

    pub fn forward(&self, x: &Array1<f64>) -> Array1<f64> {
        self.w.dot(x) + &self.b
    }

    /// Accumulates grads for `d_out` at input `x`; returns `dL/dx`.
    pub fn backward(&self, x: &Array1<f64>, d_out: &Array1<f64>, grads: &mut AffineGrads) -> Array1<f64> {
        let cols = x.len();
        let g = grads.w.as_slice_mut().expect("contiguous grad");
        let xs = x.as_slice().expect("contiguous input");
        for (r, &dv) in d_out.iter().enumerate() {
            let row = &mut g[r * cols..(r + 1) * cols];
            for (slot, &xv) in row.iter_mut().zip(xs) {
                *slot += dv * xv;
            }
        }
        grads.b += d_out;
        self.w.t().dot(d_out)
    }
}

/// Two affine layers with a Tanh between them.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionMlp {
    pub l1: Affine,
    pub l2: Affine,
}

#[derive(Debug, Clone)]
pub struct FusionMlpGrads {
    pub l1: AffineGrads,
    pub l2: AffineGrads,
}

pub struct FusionMlpCache {
    pub x: Array1<f64>,
    pub h1: Array1<f64>,
}

impl FusionMlp {
    pub fn zeros(in_dim: usize, hidden: usize, out_dim: usize) -> Self {
        FusionMlp {
            l1: Affine::zeros(hidden, in_dim),
            l2: Affine::zeros(out_dim, hidden),
        }
    }

    pub fn zero_grads(&self) -> FusionMlpGrads {
        FusionMlpGrads {
            l1: self.l1.zero_grads(),
            l2: self.l2.zero_grads(),
        }
    }

    pub fn forward(&self, x: Array1<f64>) -> (Array1<f64>, FusionMlpCache) {
        let h1 = self.l1.forward(&x).mapv(f64::tanh);
        let out = self.l2.forward(&h1);
        (out, FusionMlpCache { x, h1 })
    }

    pub fn backward(
        &self,
        cache: &FusionMlpCache,
        d_out: &Array1<f64>,
        grads: &mut FusionMlpGrads,
    ) -> Array1<f64> {
        let dh1 = self.l2.backward(&cache.h1, d_out, &mut grads.l2);
        let da1 = &dh1 * &cache.h1.mapv(|h| 1.0 - h * h);
        self.l1.backward(&cache.x, &da1, &mut grads.l1)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn affine_forward_matches_hand_math() {
        let layer = Affine {
            w: array![[1.0, 2.0], [0.5, -1.0]],
            b: array![0.25, -0.25],
        };
        let out = layer.forward(&array![3.0, 4.0]);
        assert_eq!(out, array![11.25, -2.75]);
    }

    #[test]
    fn mlp_zero_weights_give_bias_path() {
        let mut mlp = FusionMlp::zeros(3, 4, 2);
        mlp.l2.b = array![0.5, -0.5];
        let (out, _) = mlp.forward(array![1.0, 2.0, 3.0]);
        assert_eq!(out, array![0.5, -0.5]);
    }

    #[test]
    fn sigmoid_is_stable_in_the_tails() {
        assert!(sigmoid(800.0) <= 1.0);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
    }
}

//! Two-layer masked LSTM used as the temporal head for audio and vision.
//!
//! Masked (padded) steps do not update state and do not read their input
//! row, so padding is exactly neutral. The head's output is the top layer's
//! hidden state after the last valid step; an all-padding chunk maps to the
//! zero vector.

use ndarray::{Array1, Array2};

use crate::windowing::ChunkView;

/// Gate order inside every `4H` block: input, forget, cell, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    pub input_dim: usize,
    pub hidden: usize,
    /// Input weights, `4H x D`.
    pub w: Array2<f64>,
    /// Recurrent weights, `4H x H`.
    pub u: Array2<f64>,
    /// Gate biases, `4H`.
    pub b: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct LstmLayerGrads {
    pub w: Array2<f64>,
    pub u: Array2<f64>,
    pub b: Array1<f64>,
}

/// Per-valid-step forward state needed by backprop.
struct StepCache {
    x: Array1<f64>,
    gate_i: Array1<f64>,
    gate_f: Array1<f64>,
    gate_g: Array1<f64>,
    gate_o: Array1<f64>,
    tanh_c: Array1<f64>,
    h_prev: Array1<f64>,
    c_prev: Array1<f64>,
}

pub struct LstmLayerCache {
    steps: Vec<StepCache>,
    hidden: usize,
}

impl LstmLayerCache {
    /// Hidden state after each valid step (inputs to the next layer).
    pub fn hidden_sequence(&self) -> Vec<Array1<f64>> {
        self.steps
            .iter()
            .map(|s| &s.gate_o * &s.tanh_c)
            .collect()
    }

    pub fn final_hidden(&self) -> Array1<f64> {
        match self.steps.last() {
            Some(s) => &s.gate_o * &s.tanh_c,
            None => Array1::zeros(self.hidden),
        }
    }

    pub fn num_steps(&self) -> usize {
        self.steps.len()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `grad += a (outer) b`
fn axpy_outer(grad: &mut Array2<f64>, a: &Array1<f64>, b: &Array1<f64>) {
    let cols = b.len();
    let g = grad.as_slice_mut().expect("contiguous grad");
    let bs = b.as_slice().expect("contiguous rhs");
    for (r, &av) in a.iter().enumerate() {
        let row = &mut g[r * cols..(r + 1) * cols];
        for (slot, &bv) in row.iter_mut().zip(bs) {
            *slot += av * bv;
        }
    }
}

impl LstmLayer {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        LstmLayer {
            input_dim,
            hidden,
            w: Array2::zeros((4 * hidden, input_dim)),
            u: Array2::zeros((4 * hidden, hidden)),
            b: Array1::zeros(4 * hidden),
        }
    }

    pub fn zero_grads(&self) -> LstmLayerGrads {
        LstmLayerGrads {
            w: Array2::zeros(self.w.raw_dim()),
            u: Array2::zeros(self.u.raw_dim()),
            b: Array1::zeros(self.b.raw_dim()),
        }
    }

    /// Runs the recurrence over the valid steps of `inputs` (one entry per
    /// valid step, in order), caching what backward needs.
    fn forward_steps(&self, inputs: Vec<Array1<f64>>) -> LstmLayerCache {
        let h = self.hidden;
        let mut hidden_state = Array1::zeros(h);
        let mut cell = Array1::zeros(h);
        let mut steps = Vec::with_capacity(inputs.len());
        for x in inputs {
            let z = self.w.dot(&x) + self.u.dot(&hidden_state) + &self.b;
            let mut gate_i = Array1::zeros(h);
            let mut gate_f = Array1::zeros(h);
            let mut gate_g = Array1::zeros(h);
            let mut gate_o = Array1::zeros(h);
            for k in 0..h {
                gate_i[k] = sigmoid(z[k]);
                gate_f[k] = sigmoid(z[h + k]);
                gate_g[k] = z[2 * h + k].tanh();
                gate_o[k] = sigmoid(z[3 * h + k]);
            }
            let c_prev = cell.clone();
            let h_prev = hidden_state.clone();
            let c = &gate_f * &c_prev + &gate_i * &gate_g;
            let tanh_c = c.mapv(f64::tanh);
            hidden_state = &gate_o * &tanh_c;
            cell = c;
            steps.push(StepCache {
                x,
                gate_i,
                gate_f,
                gate_g,
                gate_o,
                tanh_c,
                h_prev,
                c_prev,
            });
        }
        LstmLayerCache { steps, hidden: h }
    }

    /// Backward over the cached steps. `d_hidden[v]` is the external gradient
    /// flowing into the hidden state emitted at valid step `v`. Returns the
    /// gradient w.r.t. each step's input.
    fn backward_steps(
        &self,
        cache: &LstmLayerCache,
        d_hidden: &[Array1<f64>],
        grads: &mut LstmLayerGrads,
    ) -> Vec<Array1<f64>> {
        let h = self.hidden;
        let n = cache.steps.len();
        let mut dxs = vec![Array1::zeros(self.input_dim); n];
        let mut dh_next: Array1<f64> = Array1::zeros(h);
        let mut dc_next: Array1<f64> = Array1::zeros(h);
        for v in (0..n).rev() {
            let step = &cache.steps[v];
            let dh = &d_hidden[v] + &dh_next;
            let mut dz = Array1::zeros(4 * h);
            let mut dc_prev = Array1::zeros(h);
            for k in 0..h {
                let d_out_gate = dh[k] * step.tanh_c[k];
                let dct = dc_next[k] + dh[k] * step.gate_o[k] * (1.0 - step.tanh_c[k] * step.tanh_c[k]);
                let d_forget = dct * step.c_prev[k];
                let d_input = dct * step.gate_g[k];
                let d_cell = dct * step.gate_i[k];
                dz[k] = d_input * step.gate_i[k] * (1.0 - step.gate_i[k]);
                dz[h + k] = d_forget * step.gate_f[k] * (1.0 - step.gate_f[k]);
                dz[2 * h + k] = d_cell * (1.0 - step.gate_g[k] * step.gate_g[k]);
                dz[3 * h + k] = d_out_gate * step.gate_o[k] * (1.0 - step.gate_o[k]);
                dc_prev[k] = dct * step.gate_f[k];
            }
            axpy_outer(&mut grads.w, &dz, &step.x);
            axpy_outer(&mut grads.u, &dz, &step.h_prev);
            grads.b += &dz;
            dxs[v] = self.w.t().dot(&dz);
            dh_next = self.u.t().dot(&dz);
            dc_next = dc_prev;
        }
        dxs
    }
}

/// The two-layer recurrent head.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm2 {
    pub layer1: LstmLayer,
    pub layer2: LstmLayer,
}

#[derive(Debug, Clone)]
pub struct Lstm2Grads {
    pub layer1: LstmLayerGrads,
    pub layer2: LstmLayerGrads,
}

pub struct Lstm2Cache {
    layer1: LstmLayerCache,
    layer2: LstmLayerCache,
}

impl Lstm2 {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Lstm2 {
            layer1: LstmLayer::zeros(input_dim, hidden),
            layer2: LstmLayer::zeros(hidden, hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.layer1.hidden
    }

    pub fn zero_grads(&self) -> Lstm2Grads {
        Lstm2Grads {
            layer1: self.layer1.zero_grads(),
            layer2: self.layer2.zero_grads(),
        }
    }

    /// Runs both layers over the chunk's valid rows and returns the final
    /// top-layer hidden state plus the backprop cache.
    pub fn forward(&self, chunk: &ChunkView) -> (Array1<f64>, Lstm2Cache) {
        let valid_inputs: Vec<Array1<f64>> = chunk
            .mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m == 1)
            .map(|(row, _)| chunk.values.row(row).mapv(|v| v as f64))
            .collect();
        let layer1 = self.layer1.forward_steps(valid_inputs);
        let layer2 = self.layer2.forward_steps(layer1.hidden_sequence());
        let out = layer2.final_hidden();
        (out, Lstm2Cache { layer1, layer2 })
    }

    /// Backprop from a gradient on the final output vector.
    pub fn backward(&self, cache: &Lstm2Cache, d_out: &Array1<f64>, grads: &mut Lstm2Grads) {
        let n = cache.layer2.num_steps();
        if n == 0 {
            return;
        }
        let mut d_hidden2 = vec![Array1::zeros(self.hidden()); n];
        d_hidden2[n - 1] = d_out.clone();
        let d_layer1_outputs = self
            .layer2
            .backward_steps(&cache.layer2, &d_hidden2, &mut grads.layer2);
        self.layer1
            .backward_steps(&cache.layer1, &d_layer1_outputs, &mut grads.layer1);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn chunk(rows: usize, dim: usize, mask: Vec<u8>) -> ChunkView {
        let mut values = Array2::zeros((rows, dim));
        for r in 0..rows {
            if mask[r] == 1 {
                for d in 0..dim {
                    values[[r, d]] = (r * dim + d) as f32 * 0.1;
                }
            }
        }
        ChunkView {
            values,
            mask,
            center_index: rows / 2,
        }
    }

    #[test]
    fn all_padding_chunk_maps_to_zero_vector() {
        let lstm = Lstm2::zeros(3, 4);
        let c = chunk(5, 3, vec![0; 5]);
        let (out, _) = lstm.forward(&c);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_parameters_single_step_gives_zero() {
        let lstm = Lstm2::zeros(3, 4);
        let c = chunk(1, 3, vec![1]);
        let (out, _) = lstm.forward(&c);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn masked_rows_are_exactly_neutral() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut lstm = Lstm2::zeros(2, 3);
        for v in lstm
            .layer1
            .w
            .iter_mut()
            .chain(lstm.layer1.u.iter_mut())
            .chain(lstm.layer2.w.iter_mut())
            .chain(lstm.layer2.u.iter_mut())
        {
            *v = rng.gen_range(-0.5..0.5);
        }
        let mask = vec![0, 1, 1, 0, 1, 0];
        let base = chunk(6, 2, mask.clone());
        let (out_base, _) = lstm.forward(&base);

        let mut scribbled = base.clone();
        for r in 0..6 {
            if mask[r] == 0 {
                for d in 0..2 {
                    scribbled.values[[r, d]] = rng.gen_range(-100.0..100.0);
                }
            }
        }
        let (out_scribbled, _) = lstm.forward(&scribbled);
        for (a, b) in out_base.iter().zip(out_scribbled.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}

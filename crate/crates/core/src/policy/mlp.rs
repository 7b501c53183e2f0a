//! Fully connected tanh network over a flat parameter slice, with
//! reverse-mode (vector-Jacobian) and forward-mode (Jacobian-vector)
//! products written out by hand.

use rand::Rng;

/// Layer widths `[input, hidden..., output]`; hidden layers use `tanh`,
/// the output layer is linear.
///
/// Parameters are laid out layer by layer as a row-major weight matrix
/// `(out x in)` followed by the bias vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    sizes: Vec<usize>,
}

/// Activations recorded by a forward pass: `layers[0]` is the input,
/// `layers[k]` the output of layer `k` (post-`tanh` for hidden layers).
#[derive(Debug, Clone)]
pub struct Tape {
    layers: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.layers.last().expect("tape has at least the input layer")
    }
}

impl Mlp {
    pub fn new(sizes: Vec<usize>) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output widths");
        Self { sizes }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Fan-in scaled uniform weights, zero biases; the output layer is
    /// additionally scaled by `output_scale`.
    pub fn init_params<R: Rng + ?Sized>(&self, output_scale: f64, rng: &mut R) -> Vec<f64> {
        let mut params = Vec::with_capacity(self.n_params());
        let last = self.n_layers() - 1;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let scale = if l == last { output_scale } else { 1.0 };
            params.extend((0..fan_in * fan_out).map(|_| scale * rng.random_range(-bound..bound)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        params
    }

    pub fn forward(&self, params: &[f64], input: &[f64]) -> Tape {
        debug_assert_eq!(params.len(), self.n_params());
        debug_assert_eq!(input.len(), self.input_dim());
        let mut layers = Vec::with_capacity(self.sizes.len());
        layers.push(input.to_vec());
        let mut offset = 0;
        let last = self.n_layers() - 1;
        for l in 0..self.n_layers() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &params[offset..offset + n_in * n_out];
            let b = &params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let h = &layers[l];
            let mut z: Vec<f64> = (0..n_out)
                .map(|o| b[o] + w[o * n_in..(o + 1) * n_in].iter().zip(h).map(|(a, x)| a * x).sum::<f64>())
                .collect();
            if l != last {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            layers.push(z);
            offset += n_in * n_out + n_out;
        }
        Tape { layers }
    }

    /// Accumulate `grad_params += J^T grad_output` for the recorded pass.
    pub fn backward(&self, params: &[f64], tape: &Tape, grad_output: &[f64], grad_params: &mut [f64]) {
        let n_layers = self.n_layers();
        let mut offsets = Vec::with_capacity(n_layers);
        let mut offset = 0;
        for w in self.sizes.windows(2) {
            offsets.push(offset);
            offset += w[0] * w[1] + w[1];
        }
        let mut delta = grad_output.to_vec();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let h = &tape.layers[l];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad_params[off + o * n_in..off + (o + 1) * n_in];
                for (g, x) in row.iter_mut().zip(h) {
                    *g += d * x;
                }
                grad_params[off + n_in * n_out + o] += d;
            }
            if l > 0 {
                let w = &params[off..off + n_in * n_out];
                let mut prev = vec![0.0; n_in];
                for o in 0..n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    for (p, a) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *p += d * a;
                    }
                }
                for (p, x) in prev.iter_mut().zip(h) {
                    *p *= 1.0 - x * x;
                }
                delta = prev;
            }
        }
    }

    /// Directional derivative of the output along parameter tangent `v`.
    pub fn jvp(&self, params: &[f64], tape: &Tape, v: &[f64]) -> Vec<f64> {
        let mut tangent = vec![0.0; self.input_dim()];
        let mut offset = 0;
        let last = self.n_layers() - 1;
        for l in 0..self.n_layers() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &params[offset..offset + n_in * n_out];
            let dw = &v[offset..offset + n_in * n_out];
            let db = &v[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let h = &tape.layers[l];
            let out = &tape.layers[l + 1];
            let mut next = Vec::with_capacity(n_out);
            for o in 0..n_out {
                let row = o * n_in..(o + 1) * n_in;
                let mut dz = db[o];
                for ((dwi, wi), (hi, ti)) in dw[row.clone()].iter().zip(&w[row]).zip(h.iter().zip(&tangent)) {
                    dz += dwi * hi + wi * ti;
                }
                if l != last {
                    dz *= 1.0 - out[o] * out[o];
                }
                next.push(dz);
            }
            tangent = next;
            offset += n_in * n_out + n_out;
        }
        tangent
    }
}

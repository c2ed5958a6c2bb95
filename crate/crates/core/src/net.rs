//! Fully-connected Q-network with hand-written forward, backward, and
//! RMSProp update passes. Everything is `f64`; layer widths come from the
//! configuration (default 15-100-70-50-70-100-4, leaky-ReLU hidden layers,
//! linear output).

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Negative slope of the leaky-ReLU hidden activation.
pub const LEAKY_SLOPE: f64 = 0.01;

#[inline]
fn leaky(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        LEAKY_SLOPE * z
    }
}

/// Derivative of the activation, recovered from the post-activation value
/// (the sign is preserved by leaky-ReLU, so the pre-activation is not needed).
#[inline]
fn leaky_deriv(activation: f64) -> f64 {
    if activation > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    let (a4, a_rest) = a.split_at(chunks * 4);
    let (b4, b_rest) = b.split_at(chunks * 4);
    for (ca, cb) in a4.chunks_exact(4).zip(b4.chunks_exact(4)) {
        acc[0] += ca[0] * cb[0];
        acc[1] += ca[1] * cb[1];
        acc[2] += ca[2] * cb[2];
        acc[3] += ca[3] * cb[3];
    }
    let mut tail = 0.0;
    for (x, y) in a_rest.iter().zip(b_rest) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// One dense layer: weights are row-major `[n_out][n_in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub n_in: usize,
    pub n_out: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl DenseLayer {
    fn zeros(n_in: usize, n_out: usize) -> DenseLayer {
        DenseLayer {
            n_in,
            n_out,
            w: vec![0.0; n_in * n_out],
            b: vec![0.0; n_out],
        }
    }

    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.reserve(self.n_out);
        for (row, bias) in self.w.chunks_exact(self.n_in).zip(&self.b) {
            out.push(bias + dot(row, x));
        }
    }
}

/// Network parameters. The same shape doubles as the container for
/// per-parameter gradients and optimizer accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    pub layers: Vec<DenseLayer>,
}

/// Activations cached by [`QNetwork::forward_trace`]:
/// `activations[0]` is the input, `activations[k]` for hidden layers is the
/// post-leaky output, and the last entry is the linear network output.
pub struct ForwardTrace {
    pub activations: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace has layers")
    }
}

impl QNetwork {
    /// All-zero parameters for the given node counts.
    pub fn zeros(sizes: &[usize]) -> QNetwork {
        assert!(sizes.len() >= 2, "need input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|w| DenseLayer::zeros(w[0], w[1]))
            .collect();
        QNetwork { layers }
    }

    /// He-uniform initialization: weights uniform in
    /// `[-sqrt(6 / fan_in), +sqrt(6 / fan_in)]`, biases zero. Identical seeds
    /// produce identical parameters.
    pub fn init_he_uniform(sizes: &[usize], seed: u64) -> QNetwork {
        let mut net = QNetwork::zeros(sizes);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut net.layers {
            let bound = (6.0 / layer.n_in as f64).sqrt();
            for w in &mut layer.w {
                *w = rng.random_range(-bound..=bound);
            }
        }
        net
    }

    /// Same-shaped zero container, used for gradients and accumulators.
    pub fn zeros_like(&self) -> QNetwork {
        let layers = self
            .layers
            .iter()
            .map(|l| DenseLayer::zeros(l.n_in, l.n_out))
            .collect();
        QNetwork { layers }
    }

    pub fn input_len(&self) -> usize {
        self.layers.first().expect("nonempty").n_in
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().expect("nonempty").n_out
    }

    /// Total number of weights and biases.
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.n_in * l.n_out + l.n_out)
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(&l.b).all(|v| v.is_finite()))
    }

    /// Q-values for all actions. Read-only with respect to the parameters.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.input_len(), "input length mismatch");
        let last = self.layers.len() - 1;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for (k, layer) in self.layers.iter().enumerate() {
            layer.affine(&cur, &mut next);
            if k < last {
                for v in &mut next {
                    *v = leaky(*v);
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    /// Forward pass that keeps every layer's activations for backprop.
    pub fn forward_trace(&self, x: &[f64]) -> ForwardTrace {
        assert_eq!(x.len(), self.input_len(), "input length mismatch");
        let last = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_vec());
        for (k, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::new();
            layer.affine(activations.last().unwrap(), &mut out);
            if k < last {
                for v in &mut out {
                    *v = leaky(*v);
                }
            }
            activations.push(out);
        }
        ForwardTrace { activations }
    }

    /// Accumulate parameter gradients into `acc` given the loss gradient with
    /// respect to the network output. `trace` must come from
    /// [`QNetwork::forward_trace`] on the same parameters and input.
    pub fn backward_into(&self, trace: &ForwardTrace, out_grad: &[f64], acc: &mut QNetwork) {
        assert_eq!(out_grad.len(), self.output_len(), "output grad length mismatch");
        assert_eq!(acc.layers.len(), self.layers.len(), "gradient shape mismatch");
        let mut delta = out_grad.to_vec();
        let mut prev = Vec::new();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let grads = &mut acc.layers[k];
            debug_assert_eq!(grads.n_in, layer.n_in);
            debug_assert_eq!(grads.n_out, layer.n_out);
            let a_in = &trace.activations[k];
            if k > 0 {
                prev.clear();
                prev.resize(layer.n_in, 0.0);
            }
            for (o, &d) in delta.iter().enumerate() {
                grads.b[o] += d;
                let row = &layer.w[o * layer.n_in..(o + 1) * layer.n_in];
                let grow = &mut grads.w[o * layer.n_in..(o + 1) * layer.n_in];
                if k > 0 {
                    for i in 0..layer.n_in {
                        grow[i] += d * a_in[i];
                        prev[i] += d * row[i];
                    }
                } else {
                    for i in 0..layer.n_in {
                        grow[i] += d * a_in[i];
                    }
                }
            }
            if k > 0 {
                // a_in holds the post-activation values of the upstream
                // hidden layer, which determine the activation derivative.
                for (p, &a) in prev.iter_mut().zip(a_in.iter()) {
                    *p *= leaky_deriv(a);
                }
                std::mem::swap(&mut delta, &mut prev);
            }
        }
    }

    /// Fresh gradients for a single (input, output-gradient) pair.
    pub fn backward(&self, input: &[f64], out_grad: &[f64]) -> QNetwork {
        let trace = self.forward_trace(input);
        let mut grads = self.zeros_like();
        self.backward_into(&trace, out_grad, &mut grads);
        grads
    }
}

/// RMSProp state: a running mean of squared gradients per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp {
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub acc: QNetwork,
}

impl RmsProp {
    pub fn new(learning_rate: f64, rho: f64, epsilon: f64, shape: &QNetwork) -> RmsProp {
        RmsProp {
            learning_rate,
            rho,
            epsilon,
            acc: shape.zeros_like(),
        }
    }

    /// `acc <- rho * acc + (1 - rho) * g^2`,
    /// `theta <- theta - lr * g / (sqrt(acc) + eps)`, elementwise.
    pub fn step(&mut self, params: &mut QNetwork, grads: &QNetwork) {
        assert_eq!(params.layers.len(), grads.layers.len(), "shape mismatch");
        let one_minus_rho = 1.0 - self.rho;
        for ((p, g), a) in params
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.acc.layers)
        {
            for ((pw, gw), aw) in p
                .w
                .iter_mut()
                .chain(p.b.iter_mut())
                .zip(g.w.iter().chain(g.b.iter()))
                .zip(a.w.iter_mut().chain(a.b.iter_mut()))
            {
                *aw = self.rho * *aw + one_minus_rho * gw * gw;
                *pw -= self.learning_rate * gw / (aw.sqrt() + self.epsilon);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEFAULT_SIZES: [usize; 7] = [15, 100, 70, 50, 70, 100, 4];

    #[test]
    fn default_architecture_parameter_count() {
        let net = QNetwork::zeros(&DEFAULT_SIZES);
        let by_hand = 15 * 100 + 100
            + 100 * 70 + 70
            + 70 * 50 + 50
            + 50 * 70 + 70
            + 70 * 100 + 100
            + 100 * 4 + 4;
        assert_eq!(net.param_count(), by_hand);
        assert_eq!(net.param_count(), 23_294);
    }

    #[test]
    fn init_biases_are_zero_and_weights_bounded() {
        let net = QNetwork::init_he_uniform(&DEFAULT_SIZES, 3);
        for layer in &net.layers {
            let bound = (6.0 / layer.n_in as f64).sqrt();
            assert!(layer.b.iter().all(|&b| b == 0.0));
            assert!(layer.w.iter().all(|&w| w.abs() <= bound));
        }
    }

    #[test]
    fn init_is_deterministic() {
        let a = QNetwork::init_he_uniform(&DEFAULT_SIZES, 3);
        let b = QNetwork::init_he_uniform(&DEFAULT_SIZES, 3);
        assert_eq!(a, b);
        let c = QNetwork::init_he_uniform(&DEFAULT_SIZES, 4);
        assert_ne!(a, c);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = QNetwork::zeros(&DEFAULT_SIZES);
        let out = net.forward(&vec![0.3; 15]);
        assert_eq!(out, vec![0.0; 4]);
    }

    #[test]
    fn single_neuron_hand_case() {
        // Hidden neuron w=2, b=1 on x=-1 gives pre-activation -1, leaky -0.01,
        // passed through an identity output layer.
        let mut net = QNetwork::zeros(&[1, 1, 1]);
        net.layers[0].w[0] = 2.0;
        net.layers[0].b[0] = 1.0;
        net.layers[1].w[0] = 1.0;
        let out = net.forward(&[-1.0]);
        assert!((out[0] - (-0.01)).abs() < 1e-15);
    }

    // Plain nested-loop re-implementation used as the forward oracle.
    fn forward_oracle(net: &QNetwork, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        for (k, layer) in net.layers.iter().enumerate() {
            let mut next = vec![0.0; layer.n_out];
            for o in 0..layer.n_out {
                let mut z = layer.b[o];
                for i in 0..layer.n_in {
                    z += layer.w[o * layer.n_in + i] * cur[i];
                }
                next[o] = if k + 1 < net.layers.len() && z <= 0.0 {
                    0.01 * z
                } else {
                    z
                };
            }
            cur = next;
        }
        cur
    }

    #[test]
    fn forward_matches_straight_line_oracle() {
        use rand::Rng;
        let net = QNetwork::init_he_uniform(&DEFAULT_SIZES, 17);
        let mut rng = crate::seeds::rng(17, 93, 0);
        for _ in 0..20 {
            let x: Vec<f64> = (0..15).map(|_| rng.random_range(-1.0..1.0)).collect();
            let got = net.forward(&x);
            let want = forward_oracle(&net, &x);
            for (g, w) in got.iter().zip(&want) {
                let rel = (g - w).abs() / w.abs().max(1e-12);
                assert!(rel < 1e-12, "{g} vs {w}");
            }
        }
    }

    #[test]
    fn forward_is_continuous_across_activation_boundary() {
        let mut net = QNetwork::zeros(&[1, 1, 1]);
        net.layers[0].w[0] = 1.0;
        net.layers[1].w[0] = 1.0;
        let below = net.forward(&[-1e-12])[0];
        let above = net.forward(&[1e-12])[0];
        assert!((below - above).abs() < 3e-12);
    }

    #[test]
    fn zero_output_grad_gives_zero_gradients() {
        let net = QNetwork::init_he_uniform(&DEFAULT_SIZES, 5);
        let grads = net.backward(&vec![0.5; 15], &[0.0; 4]);
        for layer in &grads.layers {
            assert!(layer.w.iter().all(|&g| g == 0.0));
            assert!(layer.b.iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn linear_layer_gradient_is_outer_product() {
        let mut net = QNetwork::zeros(&[3, 2]);
        net.layers[0].w.copy_from_slice(&[0.1, -0.2, 0.3, 0.4, 0.5, -0.6]);
        let input = [1.0, 2.0, -3.0];
        let out_grad = [0.7, -0.9];
        let grads = net.backward(&input, &out_grad);
        for o in 0..2 {
            assert_eq!(grads.layers[0].b[o], out_grad[o]);
            for i in 0..3 {
                assert_eq!(grads.layers[0].w[o * 3 + i], out_grad[o] * input[i]);
            }
        }
    }

    fn param_slot(net: &mut QNetwork, layer: usize, weight: bool, idx: usize) -> &mut f64 {
        if weight {
            &mut net.layers[layer].w[idx]
        } else {
            &mut net.layers[layer].b[idx]
        }
    }

    // Central-difference gradient of x -> dot(forward(x), out_grad) with
    // respect to one parameter.
    fn fd_grad(net: &mut QNetwork, layer: usize, weight: bool, idx: usize, x: &[f64], og: &[f64]) -> f64 {
        let h = 1e-5;
        fn loss(net: &QNetwork, x: &[f64], og: &[f64]) -> f64 {
            net.forward(x).iter().zip(og).map(|(o, g)| o * g).sum()
        }
        let orig = *param_slot(net, layer, weight, idx);
        *param_slot(net, layer, weight, idx) = orig + h;
        let up = loss(net, x, og);
        *param_slot(net, layer, weight, idx) = orig - h;
        let down = loss(net, x, og);
        *param_slot(net, layer, weight, idx) = orig;
        (up - down) / (2.0 * h)
    }

    #[test]
    fn backward_matches_finite_differences_on_small_net() {
        use rand::Rng;
        let sizes = [4, 6, 5, 3];
        let mut net = QNetwork::init_he_uniform(&sizes, 21);
        let mut rng = crate::seeds::rng(21, 94, 0);
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let og: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let grads = net.backward(&x, &og);
        for layer in 0..sizes.len() - 1 {
            for idx in 0..grads.layers[layer].w.len() {
                let fd = fd_grad(&mut net, layer, true, idx, &x, &og);
                let bp = grads.layers[layer].w[idx];
                assert!(
                    (fd - bp).abs() <= 1e-5 * fd.abs().max(bp.abs()) + 1e-10,
                    "layer {layer} w[{idx}]: fd {fd} bp {bp}"
                );
            }
            for idx in 0..grads.layers[layer].b.len() {
                let fd = fd_grad(&mut net, layer, false, idx, &x, &og);
                let bp = grads.layers[layer].b[idx];
                assert!(
                    (fd - bp).abs() <= 1e-5 * fd.abs().max(bp.abs()) + 1e-10,
                    "layer {layer} b[{idx}]: fd {fd} bp {bp}"
                );
            }
        }
    }

    #[test]
    fn rmsprop_zero_gradient_is_a_no_op() {
        let mut net = QNetwork::init_he_uniform(&[3, 4, 4], 8);
        let before = net.clone();
        let grads = net.zeros_like();
        let mut opt = RmsProp::new(0.0005, 0.9, 1e-8, &net);
        opt.step(&mut net, &grads);
        assert_eq!(net, before);
    }

    #[test]
    fn rmsprop_scalar_update_vs_hand_value() {
        let mut net = QNetwork::zeros(&[1, 1]);
        let mut grads = net.zeros_like();
        grads.layers[0].w[0] = 1.0;
        let mut opt = RmsProp::new(0.0005, 0.9, 1e-8, &net);
        opt.step(&mut net, &grads);
        assert!((opt.acc.layers[0].w[0] - 0.1).abs() < 1e-15);
        assert!((net.layers[0].w[0] - (-0.0015811)).abs() < 1e-7);
    }

    #[test]
    fn rmsprop_step_size_approaches_learning_rate() {
        let mut net = QNetwork::zeros(&[1, 1]);
        let mut grads = net.zeros_like();
        grads.layers[0].w[0] = 1.0;
        let mut opt = RmsProp::new(0.0005, 0.9, 1e-8, &net);
        let mut prev = net.layers[0].w[0];
        let mut last_step = 0.0;
        for _ in 0..2000 {
            opt.step(&mut net, &grads);
            last_step = prev - net.layers[0].w[0];
            prev = net.layers[0].w[0];
        }
        assert!((last_step - 0.0005).abs() < 1e-8, "step {last_step}");
    }
}

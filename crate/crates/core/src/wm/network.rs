use std::ops::Range;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::input::WINDOW_FRAMES;
use super::loss::logit_gradient;
use crate::error::{check_len, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_size: usize,
    pub hidden_sizes: Vec<usize>,
    pub output_size: usize,
    pub dropout: f64,
}

impl Architecture {
    /// Default architecture for `dof` joints: 10-frame input, hidden [256, 256, 64].
    pub fn for_dof(dof: usize) -> Self {
        Self { input_size: WINDOW_FRAMES * dof, hidden_sizes: vec![256, 256, 64], output_size: dof, dropout: 0.1 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || self.output_size == 0 || self.hidden_sizes.is_empty() {
            return Err(Error::InvalidArgument("network sizes must be positive".into()));
        }
        if self.hidden_sizes.contains(&0) {
            return Err(Error::InvalidArgument("hidden sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct LayerSlots {
    input: usize,
    hidden: usize,
    wx: usize,
    wh: usize,
    b: usize,
}

/// Named parameter block inside the flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGroup {
    pub name: String,
    pub range: Range<usize>,
}

/// Stacked LSTM (gate order i, f, g, o) followed by an affine sigmoid head.
/// All weights live in one flat vector.
#[derive(Clone, Debug, PartialEq)]
pub struct WmNetwork {
    arch: Architecture,
    params: Vec<f64>,
    layers: Vec<LayerSlots>,
    out_w: usize,
    out_b: usize,
}

/// Recurrent state for step-by-step evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Vec<Array1<f64>>,
    pub c: Vec<Array1<f64>>,
}

impl LstmState {
    pub fn reset(&mut self) {
        self.h.iter_mut().chain(self.c.iter_mut()).for_each(|v| v.fill(0.0));
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl WmNetwork {
    pub fn zeroed(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let mut offset = 0;
        let mut layers = Vec::with_capacity(arch.hidden_sizes.len());
        let mut input = arch.input_size;
        for &hidden in &arch.hidden_sizes {
            let wx = offset;
            let wh = wx + 4 * hidden * input;
            let b = wh + 4 * hidden * hidden;
            offset = b + 4 * hidden;
            layers.push(LayerSlots { input, hidden, wx, wh, b });
            input = hidden;
        }
        let out_w = offset;
        let out_b = out_w + arch.output_size * input;
        let total = out_b + arch.output_size;
        Ok(Self { arch, params: vec![0.0; total], layers, out_w, out_b })
    }

    /// Uniform(±1/√fan_in) weights, zero biases except forget gates at 1.
    pub fn init<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeroed(arch)?;
        for l in 0..net.layers.len() {
            let LayerSlots { input, hidden, wx, wh, b } = net.layers[l];
            let (bx, bh) = (1.0 / (input as f64).sqrt(), 1.0 / (hidden as f64).sqrt());
            for p in &mut net.params[wx..wh] {
                *p = rng.gen_range(-bx..bx);
            }
            for p in &mut net.params[wh..b] {
                *p = rng.gen_range(-bh..bh);
            }
            net.params[b + hidden..b + 2 * hidden].fill(1.0);
        }
        let last = *net.arch.hidden_sizes.last().unwrap();
        let bo = 1.0 / (last as f64).sqrt();
        let (ow, ob) = (net.out_w, net.out_b);
        for p in &mut net.params[ow..ob] {
            *p = rng.gen_range(-bo..bo);
        }
        Ok(net)
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeroed(arch)?;
        check_len("parameter vector", net.params.len(), params.len())?;
        net.params = params;
        Ok(net)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn param_groups(&self) -> Vec<ParamGroup> {
        let mut out = Vec::new();
        for (l, s) in self.layers.iter().enumerate() {
            out.push(ParamGroup { name: format!("lstm{l}.w_x"), range: s.wx..s.wh });
            out.push(ParamGroup { name: format!("lstm{l}.w_h"), range: s.wh..s.b });
            out.push(ParamGroup { name: format!("lstm{l}.bias"), range: s.b..s.b + 4 * s.hidden });
        }
        out.push(ParamGroup { name: "head.w".into(), range: self.out_w..self.out_b });
        out.push(ParamGroup { name: "head.bias".into(), range: self.out_b..self.params.len() });
        out
    }

    fn wx(&self, l: usize) -> ArrayView2<'_, f64> {
        let s = self.layers[l];
        ArrayView2::from_shape((4 * s.hidden, s.input), &self.params[s.wx..s.wh]).unwrap()
    }

    fn wh(&self, l: usize) -> ArrayView2<'_, f64> {
        let s = self.layers[l];
        ArrayView2::from_shape((4 * s.hidden, s.hidden), &self.params[s.wh..s.b]).unwrap()
    }

    fn bias(&self, l: usize) -> ArrayView1<'_, f64> {
        let s = self.layers[l];
        ArrayView1::from(&self.params[s.b..s.b + 4 * s.hidden])
    }

    fn head_w(&self) -> ArrayView2<'_, f64> {
        let h = self.layers.last().unwrap().hidden;
        ArrayView2::from_shape((self.arch.output_size, h), &self.params[self.out_w..self.out_b]).unwrap()
    }

    fn head_b(&self) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.params[self.out_b..])
    }

    pub fn zero_state(&self) -> LstmState {
        let z = |s: &LayerSlots| Array1::zeros(s.hidden);
        LstmState { h: self.layers.iter().map(z).collect(), c: self.layers.iter().map(z).collect() }
    }

    /// One time step. With `training`, inverted dropout is drawn from `rng`
    /// between stacked layers.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        x: &[f64],
        state: &mut LstmState,
        training: bool,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        check_len("network input", self.arch.input_size, x.len())?;
        if state.h.len() != self.layers.len() || state.c.len() != self.layers.len() {
            return Err(Error::dims("state layers", self.layers.len(), state.h.len()));
        }
        let mut inp = Array1::from(x.to_vec());
        let keep = 1.0 - self.arch.dropout;
        for l in 0..self.layers.len() {
            let hsz = self.layers[l].hidden;
            check_len("state width", hsz, state.h[l].len())?;
            let a = self.wx(l).dot(&inp) + self.wh(l).dot(&state.h[l]) + self.bias(l);
            let c = &mut state.c[l];
            let h = &mut state.h[l];
            for j in 0..hsz {
                let i = sigmoid(a[j]);
                let f = sigmoid(a[hsz + j]);
                let g = a[2 * hsz + j].tanh();
                let o = sigmoid(a[3 * hsz + j]);
                c[j] = f * c[j] + i * g;
                h[j] = o * c[j].tanh();
            }
            inp = h.clone();
            if training && l + 1 < self.layers.len() && self.arch.dropout > 0.0 {
                inp.mapv_inplace(|v| if rng.gen::<f64>() < keep { v / keep } else { 0.0 });
            }
        }
        let z = self.head_w().dot(&inp) + self.head_b();
        Ok(z.iter().map(|&v| sigmoid(v)).collect())
    }

    /// Draws inverted-dropout masks for a batched sequence pass.
    pub fn sample_masks<R: Rng + ?Sized>(&self, steps: usize, batch: usize, rng: &mut R) -> DropoutMasks {
        let keep = 1.0 - self.arch.dropout;
        let masks = self.layers[..self.layers.len() - 1]
            .iter()
            .map(|s| {
                Array2::from_shape_fn((steps * batch, s.hidden), |_| {
                    if self.arch.dropout == 0.0 || rng.gen::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                })
            })
            .collect();
        DropoutMasks(masks)
    }

    /// Batched pass from zero state. Row `t * batch + b` of `inputs` is step `t`
    /// of sample `b`.
    pub fn forward_sequence(
        &self,
        inputs: &Array2<f64>,
        steps: usize,
        batch: usize,
        masks: Option<&DropoutMasks>,
    ) -> Result<ForwardTrace> {
        let rows = steps * batch;
        if inputs.nrows() != rows {
            return Err(Error::dims("input rows", rows, inputs.nrows()));
        }
        check_len("input width", self.arch.input_size, inputs.ncols())?;
        if let Some(m) = masks {
            check_len("dropout masks", self.layers.len() - 1, m.0.len())?;
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut x = inputs.clone();
        for l in 0..self.layers.len() {
            let hsz = self.layers[l].hidden;
            let mut gates = Array2::zeros((rows, 4 * hsz));
            general_mat_mul(1.0, &x, &self.wx(l).t(), 0.0, &mut gates);
            gates += &self.bias(l);
            let mut cells = Array2::<f64>::zeros((rows, hsz));
            let mut hs = Array2::<f64>::zeros((rows, hsz));
            let mut tanh_c = Array2::<f64>::zeros((rows, hsz));
            for t in 0..steps {
                let cur = t * batch..(t + 1) * batch;
                if t > 0 {
                    let prev = (t - 1) * batch..t * batch;
                    let hp = hs.slice(s![prev, ..]);
                    let mut g = gates.slice_mut(s![cur.clone(), ..]);
                    general_mat_mul(1.0, &hp, &self.wh(l).t(), 1.0, &mut g);
                }
                for r in cur {
                    let mut grow = gates.row_mut(r);
                    let c_prev: Option<Vec<f64>> = (t > 0).then(|| cells.row(r - batch).to_vec());
                    for j in 0..hsz {
                        let i = sigmoid(grow[j]);
                        let f = sigmoid(grow[hsz + j]);
                        let g = grow[2 * hsz + j].tanh();
                        let o = sigmoid(grow[3 * hsz + j]);
                        grow[j] = i;
                        grow[hsz + j] = f;
                        grow[2 * hsz + j] = g;
                        grow[3 * hsz + j] = o;
                        let cp = c_prev.as_ref().map_or(0.0, |c| c[j]);
                        let c = f * cp + i * g;
                        let tc = c.tanh();
                        cells[[r, j]] = c;
                        tanh_c[[r, j]] = tc;
                        hs[[r, j]] = o * tc;
                    }
                }
            }
            let next = match masks {
                Some(m) if l + 1 < self.layers.len() => &hs * &m.0[l],
                _ => hs.clone(),
            };
            layers.push(LayerTrace { input: x, gates, cells, tanh_c, hs });
            x = next;
        }
        let mut logits = Array2::zeros((rows, self.arch.output_size));
        general_mat_mul(1.0, &x, &self.head_w().t(), 0.0, &mut logits);
        logits += &self.head_b();
        let outputs = logits.mapv(sigmoid);
        Ok(ForwardTrace { steps, batch, layers, top: x, outputs, masks: masks.cloned() })
    }

    /// Exact BPTT for a recorded pass, given dLoss/dlogits. Returns a gradient
    /// with the same layout as [`params`](Self::params).
    pub fn backward_logits(&self, trace: &ForwardTrace, d_logits: &Array2<f64>) -> Result<Vec<f64>> {
        let (steps, batch) = (trace.steps, trace.batch);
        let rows = steps * batch;
        if d_logits.dim() != (rows, self.arch.output_size) {
            return Err(Error::dims("logit gradient rows", rows, d_logits.nrows()));
        }
        let mut grad = vec![0.0; self.params.len()];
        let last = self.layers.last().unwrap().hidden;
        {
            let mut gw = ArrayViewMut2::from_shape((self.arch.output_size, last), &mut grad[self.out_w..self.out_b])
                .unwrap();
            general_mat_mul(1.0, &d_logits.t(), &trace.top, 0.0, &mut gw);
        }
        for (g, s) in grad[self.out_b..].iter_mut().zip(d_logits.sum_axis(Axis(0))) {
            *g = s;
        }
        let mut d_h = d_logits.dot(&self.head_w());

        for l in (0..self.layers.len()).rev() {
            let slots = self.layers[l];
            let hsz = slots.hidden;
            let lt = &trace.layers[l];
            let mut d_a = Array2::<f64>::zeros((rows, 4 * hsz));
            let mut dh_next = Array2::<f64>::zeros((batch, hsz));
            let mut dc_next = Array2::<f64>::zeros((batch, hsz));
            let wh = self.wh(l);
            for t in (0..steps).rev() {
                for bi in 0..batch {
                    let r = t * batch + bi;
                    for j in 0..hsz {
                        let i = lt.gates[[r, j]];
                        let f = lt.gates[[r, hsz + j]];
                        let g = lt.gates[[r, 2 * hsz + j]];
                        let o = lt.gates[[r, 3 * hsz + j]];
                        let tc = lt.tanh_c[[r, j]];
                        let cp = if t > 0 { lt.cells[[r - batch, j]] } else { 0.0 };
                        let dh = d_h[[r, j]] + dh_next[[bi, j]];
                        let dc = dh * o * (1.0 - tc * tc) + dc_next[[bi, j]];
                        d_a[[r, j]] = dc * g * i * (1.0 - i);
                        d_a[[r, hsz + j]] = dc * cp * f * (1.0 - f);
                        d_a[[r, 2 * hsz + j]] = dc * i * (1.0 - g * g);
                        d_a[[r, 3 * hsz + j]] = dh * tc * o * (1.0 - o);
                        dc_next[[bi, j]] = dc * f;
                    }
                }
                let da_t = d_a.slice(s![t * batch..(t + 1) * batch, ..]);
                general_mat_mul(1.0, &da_t, &wh, 0.0, &mut dh_next);
            }
            {
                let mut gwx =
                    ArrayViewMut2::from_shape((4 * hsz, slots.input), &mut grad[slots.wx..slots.wh]).unwrap();
                general_mat_mul(1.0, &d_a.t(), &lt.input, 0.0, &mut gwx);
            }
            if steps > 1 {
                let mut gwh = ArrayViewMut2::from_shape((4 * hsz, hsz), &mut grad[slots.wh..slots.b]).unwrap();
                let da_tail = d_a.slice(s![batch.., ..]);
                let h_head = lt.hs.slice(s![..rows - batch, ..]);
                general_mat_mul(1.0, &da_tail.t(), &h_head, 0.0, &mut gwh);
            }
            for (g, s) in grad[slots.b..slots.b + 4 * hsz].iter_mut().zip(d_a.sum_axis(Axis(0))) {
                *g = s;
            }
            if l > 0 {
                let mut d_x = d_a.dot(&self.wx(l));
                if let Some(m) = &trace.masks {
                    Zip::from(&mut d_x).and(&m.0[l - 1]).for_each(|d, &k| *d *= k);
                }
                d_h = d_x;
            }
        }
        Ok(grad)
    }
}

/// Per-boundary inverted-dropout masks, `(steps * batch, hidden)` each.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMasks(pub Vec<Array2<f64>>);

#[derive(Clone, Debug)]
struct LayerTrace {
    input: Array2<f64>,
    /// Post-activation gates.
    gates: Array2<f64>,
    cells: Array2<f64>,
    tanh_c: Array2<f64>,
    hs: Array2<f64>,
}

/// Activations recorded by [`WmNetwork::forward_sequence`].
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    steps: usize,
    batch: usize,
    layers: Vec<LayerTrace>,
    top: Array2<f64>,
    outputs: Array2<f64>,
    masks: Option<DropoutMasks>,
}

impl ForwardTrace {
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Sigmoid outputs, row `t * batch + b`.
    pub fn outputs(&self) -> &Array2<f64> {
        &self.outputs
    }

    /// Output sequence of one sample.
    pub fn sample_outputs(&self, b: usize) -> Vec<Vec<f64>> {
        (0..self.steps).map(|t| self.outputs.row(t * self.batch + b).to_vec()).collect()
    }
}

/// Pairs a forward recording with its backward pass.
pub struct BpttSession<'a> {
    net: &'a WmNetwork,
    trace: Option<ForwardTrace>,
}

impl<'a> BpttSession<'a> {
    pub fn new(net: &'a WmNetwork) -> Self {
        Self { net, trace: None }
    }

    /// Runs and records a forward pass over one sequence (`inputs[t]` is x_t).
    pub fn forward(&mut self, inputs: &[Vec<f64>], masks: Option<&DropoutMasks>) -> Result<Vec<Vec<f64>>> {
        let k = self.net.arch.input_size;
        let mut x = Array2::zeros((inputs.len(), k));
        for (t, row) in inputs.iter().enumerate() {
            check_len("network input", k, row.len())?;
            x.row_mut(t).assign(&ArrayView1::from(row.as_slice()));
        }
        let trace = self.net.forward_sequence(&x, inputs.len(), 1, masks)?;
        let out = trace.sample_outputs(0);
        self.trace = Some(trace);
        Ok(out)
    }

    /// Loss and its parameter gradient for the recorded pass.
    pub fn backward(&self, targets: &[Vec<f64>], lambda: f64) -> Result<(f64, Vec<f64>)> {
        let trace = self.trace.as_ref().ok_or(Error::NoRecordedForward)?;
        let mut y = Array2::zeros(trace.outputs.dim());
        check_len("target frames", trace.steps, targets.len())?;
        for (t, row) in targets.iter().enumerate() {
            check_len("target width", self.net.arch.output_size, row.len())?;
            y.row_mut(t).assign(&ArrayView1::from(row.as_slice()));
        }
        let (loss, _, d) = logit_gradient(&trace.outputs, &y, trace.steps, trace.batch, lambda)?;
        Ok((loss, self.net.backward_logits(trace, &d)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> WmNetwork {
        let arch = Architecture { input_size: 6, hidden_sizes: vec![5, 4], output_size: 3, dropout: 0.0 };
        WmNetwork::init(arch, &mut ChaCha8Rng::seed_from_u64(1)).unwrap()
    }

    #[test]
    fn parameter_count_matches_layout() {
        let net = WmNetwork::zeroed(Architecture::for_dof(23)).unwrap();
        let lstm = |i: usize, h: usize| 4 * h * (i + h + 1);
        assert_eq!(net.param_count(), lstm(230, 256) + lstm(256, 256) + lstm(256, 64) + 23 * 64 + 23);
        let groups = net.param_groups();
        assert_eq!(groups.last().unwrap().range.end, net.param_count());
        assert!(groups.windows(2).all(|w| w[0].range.end == w[1].range.start));
    }

    #[test]
    fn forget_bias_starts_at_one() {
        let net = small();
        let b = net.bias(0);
        assert!(b.slice(s![5..10]).iter().all(|&v| v == 1.0));
        assert!(b.slice(s![0..5]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn batched_sequence_matches_step_loop() {
        let net = small();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (steps, batch) = (7, 3);
        let x = Array2::from_shape_fn((steps * batch, 6), |_| rng.gen_range(-1.0..1.0));
        let trace = net.forward_sequence(&x, steps, batch, None).unwrap();
        for b in 0..batch {
            let mut st = net.zero_state();
            for t in 0..steps {
                let row = x.row(t * batch + b).to_vec();
                let y = net.forward(&row, &mut st, false, &mut rng).unwrap();
                for (a, e) in y.iter().zip(trace.outputs.row(t * batch + b)) {
                    assert!((a - e).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn outputs_in_unit_interval() {
        let net = small();
        let mut st = net.zero_state();
        let y = net.forward(&[100.0, -100.0, 3.0, 0.0, 1.0, -2.0], &mut st, false, &mut rand::thread_rng()).unwrap();
        assert!(y.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn backward_without_forward_errors() {
        let net = small();
        let s = BpttSession::new(&net);
        assert!(matches!(s.backward(&[vec![0.0; 3]], 0.1), Err(Error::NoRecordedForward)));
    }

    #[test]
    fn wrong_input_width_rejected() {
        let net = small();
        let mut st = net.zero_state();
        assert!(net.forward(&[0.0; 5], &mut st, false, &mut rand::thread_rng()).is_err());
    }
}

//! LSTM encoder-decoder that reconstructs a window of derived sensors.
//!
//! The encoder consumes the window `z_1..z_l` front to back. Its final state
//! seeds the decoder, which emits the window back to front: the seeded state
//! produces `z'_l` directly, then each later decoder step consumes a value and
//! predicts the preceding point. During training the consumed value is the
//! true `z_t` (teacher forcing); at inference it is the decoder's own
//! previous prediction. Both paths run through [`LstmParams::step`].

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One LSTM layer: the affine map from `[input; hidden]` to the stacked
/// pre-activations of the input, forget and output gates and the candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub input_dim: usize,
    pub hidden: usize,
    /// `4n × (m + n)`, gate blocks in the order i, f, o, g.
    pub weight: Matrix,
    /// Length `4n`.
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub hidden: Vec<f64>,
    pub cell: Vec<f64>,
}

impl LstmState {
    pub fn zeros(n: usize) -> Self {
        Self {
            hidden: vec![0.0; n],
            cell: vec![0.0; n],
        }
    }
}

/// Everything the backward pass needs from one forward step.
struct StepCache {
    x: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    o: Vec<f64>,
    g: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            input_dim,
            hidden,
            weight: Matrix::zeros(4 * hidden, input_dim + hidden),
            bias: vec![0.0; 4 * hidden],
        }
    }

    /// Uniform weights in `±1/√(m+n)`, forget-gate bias 1, other biases 0.
    pub fn init<R: Rng>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(input_dim, hidden);
        let bound = 1.0 / ((input_dim + hidden) as f64).sqrt();
        for w in p.weight.as_mut_slice() {
            *w = rng.random_range(-bound..bound);
        }
        p.bias[hidden..2 * hidden].iter_mut().for_each(|b| *b = 1.0);
        p
    }

    /// One step of the recurrence.
    pub fn step(&self, input: &[f64], prev: &LstmState) -> Result<LstmState> {
        if input.len() != self.input_dim {
            return Err(Error::Dimension {
                context: "lstm_step input",
                expected: self.input_dim,
                found: input.len(),
            });
        }
        if prev.hidden.len() != self.hidden || prev.cell.len() != self.hidden {
            return Err(Error::Dimension {
                context: "lstm_step state",
                expected: self.hidden,
                found: prev.hidden.len().min(prev.cell.len()),
            });
        }
        Ok(self.step_cached(input, prev).0)
    }

    fn step_cached(&self, input: &[f64], prev: &LstmState) -> (LstmState, StepCache) {
        let n = self.hidden;
        let mut x = Vec::with_capacity(self.input_dim + n);
        x.extend_from_slice(input);
        x.extend_from_slice(&prev.hidden);
        let pre: Vec<f64> = self
            .weight
            .iter_rows()
            .zip(&self.bias)
            .map(|(row, b)| dot(row, &x) + b)
            .collect();
        let i: Vec<f64> = pre[..n].iter().copied().map(sigmoid).collect();
        let f: Vec<f64> = pre[n..2 * n].iter().copied().map(sigmoid).collect();
        let o: Vec<f64> = pre[2 * n..3 * n].iter().copied().map(sigmoid).collect();
        let g: Vec<f64> = pre[3 * n..].iter().map(|v| v.tanh()).collect();
        let cell: Vec<f64> = (0..n).map(|k| f[k] * prev.cell[k] + i[k] * g[k]).collect();
        let tanh_c: Vec<f64> = cell.iter().map(|c| c.tanh()).collect();
        let hidden: Vec<f64> = (0..n).map(|k| o[k] * tanh_c[k]).collect();
        let cache = StepCache {
            x,
            c_prev: prev.cell.clone(),
            i,
            f,
            o,
            g,
            tanh_c,
        };
        (LstmState { hidden, cell }, cache)
    }

    /// Backpropagates `(dh, dc)` through one step, accumulating into `grad`,
    /// and returns the gradient with respect to the previous state.
    fn step_backward(
        &self,
        cache: &StepCache,
        dh: &[f64],
        dc: &[f64],
        grad: &mut LstmParams,
    ) -> (Vec<f64>, Vec<f64>) {
        let n = self.hidden;
        let m = self.input_dim;
        let mut dpre = vec![0.0; 4 * n];
        let mut dc_prev = vec![0.0; n];
        for k in 0..n {
            let tc = cache.tanh_c[k];
            let (i, f, o, g) = (cache.i[k], cache.f[k], cache.o[k], cache.g[k]);
            let d_o = dh[k] * tc;
            let dct = dc[k] + dh[k] * o * (1.0 - tc * tc);
            dc_prev[k] = dct * f;
            dpre[k] = dct * g * i * (1.0 - i);
            dpre[n + k] = dct * cache.c_prev[k] * f * (1.0 - f);
            dpre[2 * n + k] = d_o * o * (1.0 - o);
            dpre[3 * n + k] = dct * i * (1.0 - g * g);
        }
        let mut dx = vec![0.0; m + n];
        for (r, &d) in dpre.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            grad.bias[r] += d;
            for (gw, &xv) in grad.weight.row_mut(r).iter_mut().zip(&cache.x) {
                *gw += d * xv;
            }
            for (acc, &w) in dx.iter_mut().zip(self.weight.row(r)) {
                *acc += d * w;
            }
        }
        (dx.split_off(m), dc_prev)
    }
}

/// Encoder, decoder and the linear read-out `z' = wᵀa + b`.
///
/// The same struct also carries gradients: [`LstmEdModel::grad_bptt`]
/// returns one whose parameters are the partial derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmEdModel {
    pub encoder: LstmParams,
    pub decoder: LstmParams,
    /// `c × p`.
    pub out_weight: Matrix,
    /// Length `p`.
    pub out_bias: Vec<f64>,
    pub hidden_units: usize,
    pub window_len: usize,
    pub input_dim: usize,
}

impl LstmEdModel {
    pub fn zeros(input_dim: usize, hidden_units: usize, window_len: usize) -> Self {
        Self {
            encoder: LstmParams::zeros(input_dim, hidden_units),
            decoder: LstmParams::zeros(input_dim, hidden_units),
            out_weight: Matrix::zeros(hidden_units, input_dim),
            out_bias: vec![0.0; input_dim],
            hidden_units,
            window_len,
            input_dim,
        }
    }

    pub fn init<R: Rng>(input_dim: usize, hidden_units: usize, window_len: usize, rng: &mut R) -> Self {
        let encoder = LstmParams::init(input_dim, hidden_units, rng);
        let decoder = LstmParams::init(input_dim, hidden_units, rng);
        let mut out_weight = Matrix::zeros(hidden_units, input_dim);
        let bound = 1.0 / (hidden_units as f64).sqrt();
        for w in out_weight.as_mut_slice() {
            *w = rng.random_range(-bound..bound);
        }
        Self {
            encoder,
            decoder,
            out_weight,
            out_bias: vec![0.0; input_dim],
            hidden_units,
            window_len,
            input_dim,
        }
    }

    /// Parameter blocks in a fixed order: encoder W, encoder b, decoder W,
    /// decoder b, output w, output b.
    pub fn param_slices(&self) -> [&[f64]; 6] {
        [
            self.encoder.weight.as_slice(),
            &self.encoder.bias,
            self.decoder.weight.as_slice(),
            &self.decoder.bias,
            self.out_weight.as_slice(),
            &self.out_bias,
        ]
    }

    pub fn param_slices_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.encoder.weight.as_mut_slice(),
            &mut self.encoder.bias,
            self.decoder.weight.as_mut_slice(),
            &mut self.decoder.bias,
            self.out_weight.as_mut_slice(),
            &mut self.out_bias,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim, self.hidden_units, self.window_len)
    }

    fn check_window(&self, window: &Matrix) -> Result<()> {
        if window.rows() != self.window_len {
            return Err(Error::Dimension {
                context: "window length",
                expected: self.window_len,
                found: window.rows(),
            });
        }
        if window.cols() != self.input_dim {
            return Err(Error::Dimension {
                context: "window width",
                expected: self.input_dim,
                found: window.cols(),
            });
        }
        Ok(())
    }

    fn check_state(&self, state: &LstmState) -> Result<()> {
        if state.hidden.len() != self.hidden_units || state.cell.len() != self.hidden_units {
            return Err(Error::Dimension {
                context: "decoder initial state",
                expected: self.hidden_units,
                found: state.hidden.len().min(state.cell.len()),
            });
        }
        Ok(())
    }

    fn read_out(&self, hidden: &[f64]) -> Vec<f64> {
        let mut y = self.out_bias.clone();
        for (&a, row) in hidden.iter().zip(self.out_weight.iter_rows()) {
            for (yj, &w) in y.iter_mut().zip(row) {
                *yj += a * w;
            }
        }
        y
    }

    /// Final encoder state after consuming the window from a zero state.
    pub fn encode(&self, window: &Matrix) -> Result<LstmState> {
        self.check_window(window)?;
        let mut state = LstmState::zeros(self.hidden_units);
        for row in window.iter_rows() {
            state = self.encoder.step_cached(row, &state).0;
        }
        Ok(state)
    }

    /// Teacher-forced reconstruction; row `t` of the result predicts row `t`
    /// of `window`.
    pub fn decode_train(&self, window: &Matrix, enc_final: &LstmState) -> Result<Matrix> {
        self.check_window(window)?;
        self.check_state(enc_final)?;
        let l = self.window_len;
        let mut out = Matrix::zeros(l, self.input_dim);
        let mut state = enc_final.clone();
        out.row_mut(l - 1).copy_from_slice(&self.read_out(&state.hidden));
        for t in (1..l).rev() {
            state = self.decoder.step_cached(window.row(t), &state).0;
            out.row_mut(t - 1).copy_from_slice(&self.read_out(&state.hidden));
        }
        Ok(out)
    }

    /// Autoregressive reconstruction of `steps` points, returned in time order.
    pub fn decode_infer(&self, enc_final: &LstmState, steps: usize) -> Result<Matrix> {
        if steps == 0 {
            return Err(Error::invalid("decode_infer needs at least one step"));
        }
        self.check_state(enc_final)?;
        let mut out = Matrix::zeros(steps, self.input_dim);
        let mut state = enc_final.clone();
        let mut pred = self.read_out(&state.hidden);
        out.row_mut(steps - 1).copy_from_slice(&pred);
        for t in (0..steps - 1).rev() {
            state = self.decoder.step_cached(&pred, &state).0;
            pred = self.read_out(&state.hidden);
            out.row_mut(t).copy_from_slice(&pred);
        }
        Ok(out)
    }

    /// Encode then reconstruct autoregressively.
    pub fn reconstruct(&self, window: &Matrix) -> Result<Matrix> {
        let state = self.encode(window)?;
        self.decode_infer(&state, self.window_len)
    }

    /// Teacher-forced loss for one window.
    pub fn window_loss(&self, window: &Matrix) -> Result<f64> {
        let state = self.encode(window)?;
        loss(&self.decode_train(window, &state)?, window)
    }

    /// Teacher-forced loss and its exact gradient for every parameter.
    pub fn grad_bptt(&self, window: &Matrix) -> Result<(f64, LstmEdModel)> {
        let mut grad = self.zeros_like();
        let loss = self.accumulate_grad(window, &mut grad)?;
        Ok((loss, grad))
    }

    /// Summed loss and gradient over several windows, accumulated in order.
    pub fn batch_gradient<'a, I>(&self, windows: I) -> Result<(f64, LstmEdModel)>
    where
        I: IntoIterator<Item = &'a Matrix>,
    {
        let mut grad = self.zeros_like();
        let mut total = 0.0;
        for w in windows {
            total += self.accumulate_grad(w, &mut grad)?;
        }
        Ok((total, grad))
    }

    fn accumulate_grad(&self, window: &Matrix, grad: &mut LstmEdModel) -> Result<f64> {
        self.check_window(window)?;
        let l = self.window_len;
        let n = self.hidden_units;

        let mut enc_caches = Vec::with_capacity(l);
        let mut state = LstmState::zeros(n);
        for row in window.iter_rows() {
            let (next, cache) = self.encoder.step_cached(row, &state);
            enc_caches.push(cache);
            state = next;
        }

        // hiddens[t] is the decoder state that predicts z_t; dec_caches[t]
        // is the step that consumed z_t (t >= 1) to produce hiddens[t - 1].
        let mut hiddens = vec![Vec::new(); l];
        let mut dec_caches: Vec<Option<StepCache>> = (0..l).map(|_| None).collect();
        hiddens[l - 1] = state.hidden.clone();
        for t in (1..l).rev() {
            let (next, cache) = self.decoder.step_cached(window.row(t), &state);
            dec_caches[t] = Some(cache);
            hiddens[t - 1] = next.hidden.clone();
            state = next;
        }

        let mut loss = 0.0;
        let mut dh = vec![0.0; n];
        let mut dc = vec![0.0; n];
        for t in 0..l {
            let y = self.read_out(&hiddens[t]);
            let dy: Vec<f64> = y
                .iter()
                .zip(window.row(t))
                .map(|(a, b)| {
                    loss += (a - b) * (a - b);
                    2.0 * (a - b)
                })
                .collect();
            for (gb, d) in grad.out_bias.iter_mut().zip(&dy) {
                *gb += d;
            }
            for (k, &a) in hiddens[t].iter().enumerate() {
                let wrow = self.out_weight.row(k);
                dh[k] += dot(wrow, &dy);
                for (gw, d) in grad.out_weight.row_mut(k).iter_mut().zip(&dy) {
                    *gw += a * d;
                }
            }
            if let Some(cache) = dec_caches.get(t + 1).and_then(Option::as_ref) {
                let (h, c) = self.decoder.step_backward(cache, &dh, &dc, &mut grad.decoder);
                dh = h;
                dc = c;
            }
        }
        for cache in enc_caches.iter().rev() {
            let (h, c) = self.encoder.step_backward(cache, &dh, &dc, &mut grad.encoder);
            dh = h;
            dc = c;
        }
        Ok(loss)
    }
}

/// Sum over points of the squared Euclidean reconstruction error.
pub fn loss(predictions: &Matrix, targets: &Matrix) -> Result<f64> {
    if predictions.rows() != targets.rows() || predictions.cols() != targets.cols() {
        return Err(Error::Dimension {
            context: "loss shape",
            expected: targets.rows() * targets.cols(),
            found: predictions.rows() * predictions.cols(),
        });
    }
    Ok(predictions
        .as_slice()
        .iter()
        .zip(targets.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub grad_clip_norm: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            max_epochs: 500,
            batch_size: 32,
            grad_clip_norm: 10.0,
            patience: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !(self.grad_clip_norm > 0.0) {
            return Err(Error::invalid("learning rate and clip norm must be positive"));
        }
        if self.max_epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::invalid("epochs, batch size and patience must be positive"));
        }
        Ok(())
    }
}

/// Losses are means over windows of the teacher-forced window loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    /// Parameters with the lowest validation loss seen, the initial ones included.
    pub model: LstmEdModel,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(len: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            lr,
        }
    }

    fn update(&mut self, model: &mut LstmEdModel, grad: &LstmEdModel, scale: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        let mut idx = 0;
        for (p, g) in model.param_slices_mut().into_iter().zip(grad.param_slices()) {
            for (w, &gi) in p.iter_mut().zip(g) {
                let gi = gi * scale;
                self.m[idx] = Self::BETA1 * self.m[idx] + (1.0 - Self::BETA1) * gi;
                self.v[idx] = Self::BETA2 * self.v[idx] + (1.0 - Self::BETA2) * gi * gi;
                let mh = self.m[idx] / c1;
                let vh = self.v[idx] / c2;
                *w -= self.lr * mh / (vh.sqrt() + Self::EPS);
                idx += 1;
            }
        }
    }
}

fn mean_loss(model: &LstmEdModel, windows: &[Matrix]) -> Result<f64> {
    let mut total = 0.0;
    for w in windows {
        total += model.window_loss(w)?;
    }
    Ok(total / windows.len() as f64)
}

/// Mini-batch training of a freshly initialized model with early stopping on
/// the validation windows.
pub fn train(
    windows: &[Matrix],
    config: &TrainConfig,
    validation: &[Matrix],
    hidden_units: usize,
) -> Result<TrainedModel> {
    config.validate()?;
    let first = windows.first().ok_or(Error::EmptyInput("training windows"))?;
    if validation.is_empty() {
        return Err(Error::EmptyInput("validation windows"));
    }
    if hidden_units == 0 {
        return Err(Error::invalid("hidden units must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let model = LstmEdModel::init(first.cols(), hidden_units, first.rows(), &mut rng);
    train_from(model, windows, config, validation, &mut rng)
}

/// Continues training from `model`.
pub fn train_from(
    mut model: LstmEdModel,
    windows: &[Matrix],
    config: &TrainConfig,
    validation: &[Matrix],
    rng: &mut ChaCha8Rng,
) -> Result<TrainedModel> {
    config.validate()?;
    for w in windows.iter().chain(validation) {
        model.check_window(w)?;
    }
    let mut adam = Adam::new(model.param_count(), config.learning_rate);
    let mut history = vec![EpochRecord {
        epoch: 0,
        train_loss: mean_loss(&model, windows)?,
        validation_loss: mean_loss(&model, validation)?,
    }];
    let mut best = model.clone();
    let mut best_epoch = 0;
    let mut best_val = history[0].validation_loss;
    let mut order: Vec<usize> = (0..windows.len()).collect();

    for epoch in 1..=config.max_epochs {
        order.shuffle(rng);
        for batch in order.chunks(config.batch_size) {
            let (_, grad) = model.batch_gradient(batch.iter().map(|&i| &windows[i]))?;
            let norm = grad
                .param_slices()
                .iter()
                .flat_map(|s| s.iter())
                .map(|g| g * g)
                .sum::<f64>()
                .sqrt();
            let scale = if norm > config.grad_clip_norm {
                config.grad_clip_norm / norm
            } else {
                1.0
            };
            adam.update(&mut model, &grad, scale);
        }
        let record = EpochRecord {
            epoch,
            train_loss: mean_loss(&model, windows)?,
            validation_loss: mean_loss(&model, validation)?,
        };
        history.push(record);
        if !record.validation_loss.is_finite() {
            break;
        }
        if record.validation_loss < best_val {
            best_val = record.validation_loss;
            best = model.clone();
            best_epoch = epoch;
        } else if epoch - best_epoch >= config.patience {
            break;
        }
    }
    Ok(TrainedModel {
        model: best,
        best_epoch,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_model(p: usize, c: usize, l: usize, seed: u64) -> LstmEdModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = LstmEdModel::init(p, c, l, &mut rng);
        for b in m.param_slices_mut() {
            for v in b.iter_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
        }
        m
    }

    fn random_window(l: usize, p: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..l * p).map(|_| rng.random_range(-1.5..1.5)).collect();
        Matrix::from_vec(l, p, v).unwrap()
    }

    #[test]
    fn zero_step_gives_half_gates() {
        let p = LstmParams::zeros(3, 4);
        let s = p.step(&[0.0; 3], &LstmState::zeros(4)).unwrap();
        assert_eq!(s.hidden, vec![0.0; 4]);
        assert_eq!(s.cell, vec![0.0; 4]);
        let (_, cache) = p.step_cached(&[0.0; 3], &LstmState::zeros(4));
        assert!(cache.i.iter().chain(&cache.f).chain(&cache.o).all(|&g| g == 0.5));
        assert!(cache.g.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn saturated_forget_gate_keeps_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = LstmParams::init(2, 3, &mut rng);
        for b in &mut p.bias[3..6] {
            *b = 50.0;
        }
        let prev = LstmState {
            hidden: vec![0.1, -0.2, 0.3],
            cell: vec![0.5, -1.0, 2.0],
        };
        let input = [0.4, -0.7];
        let (next, cache) = p.step_cached(&input, &prev);
        for k in 0..3 {
            let expect = prev.cell[k] + cache.i[k] * cache.g[k];
            assert!((next.cell[k] - expect).abs() < 1e-8);
        }
    }

    #[test]
    fn step_dimension_errors() {
        let p = LstmParams::zeros(2, 3);
        assert!(p.step(&[0.0; 3], &LstmState::zeros(3)).is_err());
        assert!(p.step(&[0.0; 2], &LstmState::zeros(2)).is_err());
    }

    #[test]
    fn hidden_is_bounded() {
        let m = random_model(2, 5, 6, 11);
        let mut s = LstmState::zeros(5);
        for t in 0..50 {
            let x = [10.0 * (t as f64).sin(), -30.0 + t as f64];
            s = m.encoder.step(&x, &s).unwrap();
            assert!(s.hidden.iter().all(|h| h.abs() < 1.0));
        }
    }

    #[test]
    fn zero_model_encode_and_decode() {
        let mut m = LstmEdModel::zeros(2, 3, 4);
        m.out_bias = vec![0.25, -1.5];
        let w = random_window(4, 2, 1);
        let s = m.encode(&w).unwrap();
        assert_eq!(s, LstmState::zeros(3));
        let train = m.decode_train(&w, &s).unwrap();
        let infer = m.decode_infer(&s, 4).unwrap();
        for r in 0..4 {
            assert_eq!(train.row(r), &[0.25, -1.5]);
            assert_eq!(infer.row(r), &[0.25, -1.5]);
        }
    }

    #[test]
    fn encode_single_step_and_order_sensitivity() {
        let m1 = random_model(2, 4, 1, 5);
        let w = random_window(1, 2, 9);
        let s = m1.encode(&w).unwrap();
        let direct = m1.encoder.step(w.row(0), &LstmState::zeros(4)).unwrap();
        assert_eq!(s, direct);

        let m = random_model(2, 4, 3, 5);
        let w = random_window(3, 2, 9);
        let mut swapped = w.clone();
        swapped.row_mut(0).copy_from_slice(w.row(1));
        swapped.row_mut(1).copy_from_slice(w.row(0));
        assert_ne!(m.encode(&w).unwrap(), m.encode(&swapped).unwrap());
        assert!(m.encode(&random_window(2, 2, 1)).is_err());
    }

    #[test]
    fn decoder_first_prediction_uses_encoder_state() {
        let m = random_model(2, 4, 1, 8);
        let w = random_window(1, 2, 2);
        let s = m.encode(&w).unwrap();
        let train = m.decode_train(&w, &s).unwrap();
        let infer = m.decode_infer(&s, 1).unwrap();
        assert_eq!(train, infer);
        assert_eq!(train.row(0), m.read_out(&s.hidden).as_slice());
    }

    #[test]
    fn decode_outputs_align_with_input_order() {
        // the last row comes straight from the encoder state; the row before
        // it is the decoder's response to the true last input
        let m = random_model(2, 3, 3, 21);
        let w = random_window(3, 2, 4);
        let s = m.encode(&w).unwrap();
        let out = m.decode_train(&w, &s).unwrap();
        assert_eq!(out.rows(), 3);
        assert_eq!(out.row(2), m.read_out(&s.hidden).as_slice());
        let s1 = m.decoder.step(w.row(2), &s).unwrap();
        assert_eq!(out.row(1), m.read_out(&s1.hidden).as_slice());
    }

    #[test]
    fn infer_differs_from_teacher_forcing() {
        let m = random_model(2, 4, 5, 13);
        let w = random_window(5, 2, 6);
        let s = m.encode(&w).unwrap();
        assert_ne!(m.decode_train(&w, &s).unwrap(), m.decode_infer(&s, 5).unwrap());
        assert!(m.decode_infer(&s, 0).is_err());
    }

    #[test]
    fn loss_cases() {
        let a = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        let z = Matrix::zeros(1, 2);
        assert_eq!(loss(&a, &a).unwrap(), 0.0);
        assert_eq!(loss(&z, &a).unwrap(), 5.0);
        assert!(loss(&Matrix::zeros(2, 2), &a).is_err());
    }

    #[test]
    fn output_gradient_zero_at_perfect_fit() {
        // predictions are all b; make the targets equal b
        let mut m = LstmEdModel::zeros(2, 3, 4);
        m.out_bias = vec![0.3, -0.6];
        let w = Matrix::from_rows(&[[0.3, -0.6]; 4]).unwrap();
        let (l, g) = m.grad_bptt(&w).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.out_weight.as_slice().iter().all(|&v| v == 0.0));
        assert!(g.out_bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn duplicated_window_doubles_gradient() {
        let m = random_model(2, 3, 4, 2);
        let w = random_window(4, 2, 3);
        let (l1, g1) = m.grad_bptt(&w).unwrap();
        let (l2, g2) = m.batch_gradient([&w, &w]).unwrap();
        assert!((l2 - 2.0 * l1).abs() < 1e-12);
        for (a, b) in g1.param_slices().iter().zip(g2.param_slices()) {
            for (x, y) in a.iter().zip(b) {
                assert!((2.0 * x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn grad_loss_matches_teacher_forced_loss() {
        let m = random_model(3, 4, 5, 7);
        let w = random_window(5, 3, 8);
        let (l, _) = m.grad_bptt(&w).unwrap();
        assert!((l - m.window_loss(&w).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn train_rejects_empty() {
        let cfg = TrainConfig::default();
        assert!(train(&[], &cfg, &[Matrix::zeros(2, 1)], 3).is_err());
        assert!(train(&[Matrix::zeros(2, 1)], &cfg, &[], 3).is_err());
    }
}

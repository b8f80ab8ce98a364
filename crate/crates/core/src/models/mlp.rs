//! Fully connected regressor: tanh hidden layers, identity output, trained by
//! full-batch gradient descent on `L = 1/(2n) * sum (f(x) - y)^2` with early
//! stopping on validation MSE.

use rand::RngCore;
use rayon::prelude::*;

use super::{check_xy, ModelError, Row};
use crate::features::N_FEATURES;
use crate::rng::{self, Stream};

/// Rows per gradient chunk. Chunk partial sums are combined in chunk order,
/// so the gradient is independent of the thread count.
const CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub max_iter: usize,
    /// Iterations without a new best validation loss before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            hidden: vec![5, 5, 10, 3],
            learning_rate: 0.01,
            max_iter: 5000,
            patience: 200,
            seed: 0,
        }
    }
}

impl MlpParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.hidden.contains(&0) {
            return Err(ModelError::InvalidParams("hidden widths must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ModelError::InvalidParams("learning rate must be positive".into()));
        }
        if self.max_iter == 0 || self.patience == 0 {
            return Err(ModelError::InvalidParams("max_iter and patience must be positive".into()));
        }
        Ok(())
    }
}

/// Dense layer; `weights` is `n_out x n_in`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub(crate) layers: Vec<Layer>,
}

impl Mlp {
    /// LeCun-uniform weights `U(-sqrt(3/fan_in), sqrt(3/fan_in))`, zero biases.
    pub fn init<R: RngCore + ?Sized>(n_in: usize, hidden: &[usize], rng: &mut R) -> Self {
        let widths: Vec<usize> = std::iter::once(n_in).chain(hidden.iter().copied()).chain([1]).collect();
        let layers = widths
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let limit = (3.0 / n_in as f64).sqrt();
                Layer {
                    n_in,
                    n_out,
                    weights: (0..n_in * n_out).map(|_| (2.0 * rng::unit(rng) - 1.0) * limit).collect(),
                    bias: vec![0.0; n_out],
                }
            })
            .collect();
        Mlp { layers }
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self, ModelError> {
        if layers.is_empty() {
            return Err(ModelError::UnfittedModel);
        }
        let mut expected_in = N_FEATURES;
        for l in &layers {
            if l.n_in != expected_in || l.weights.len() != l.n_in * l.n_out || l.bias.len() != l.n_out || l.n_out == 0 {
                return Err(ModelError::CorruptModel("inconsistent layer shapes".into()));
            }
            expected_in = l.n_out;
        }
        if expected_in != 1 {
            return Err(ModelError::CorruptModel("output layer must have width 1".into()));
        }
        Ok(Mlp { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Parameters flattened layer by layer, weights before biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_params());
        let mut k = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&flat[k..k + nw]);
            k += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&flat[k..k + nb]);
            k += nb;
        }
    }

    /// Buffers for the post-activation values of every layer, input first.
    fn scratch(&self) -> Vec<Vec<f64>> {
        std::iter::once(N_FEATURES)
            .chain(self.layers.iter().map(|l| l.n_out))
            .map(|w| vec![0.0; w])
            .collect()
    }

    /// Fills `acts` and returns the network output.
    fn forward(&self, x: &Row, acts: &mut [Vec<f64>]) -> f64 {
        acts[0].copy_from_slice(x);
        let last = self.layers.len() - 1;
        for (li, l) in self.layers.iter().enumerate() {
            let (head, tail) = acts.split_at_mut(li + 1);
            let input = &head[li];
            let out = &mut tail[0];
            for o in 0..l.n_out {
                let w = &l.weights[o * l.n_in..(o + 1) * l.n_in];
                let z = l.bias[o] + w.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
                out[o] = if li == last { z } else { z.tanh() };
            }
        }
        acts[last + 1][0]
    }

    pub fn predict(&self, x: &Row) -> f64 {
        self.forward(x, &mut self.scratch())
    }

    /// Adds `d(0.5 * (f(x) - y)^2)/d(params)` into `grad` and returns the
    /// squared error.
    fn accumulate(&self, x: &Row, y: f64, grad: &mut [f64], offsets: &[usize], buf: &mut Buffers) -> f64 {
        let err = self.forward(x, &mut buf.acts) - y;
        buf.delta.clear();
        buf.delta.push(err);
        for li in (0..self.layers.len()).rev() {
            let l = &self.layers[li];
            let input = &buf.acts[li];
            let base = offsets[li];
            for o in 0..l.n_out {
                let d = buf.delta[o];
                let row = &mut grad[base + o * l.n_in..base + (o + 1) * l.n_in];
                for (g, a) in row.iter_mut().zip(input) {
                    *g += d * a;
                }
                grad[base + l.weights.len() + o] += d;
            }
            if li > 0 {
                buf.next.clear();
                for i in 0..l.n_in {
                    let back: f64 = (0..l.n_out).map(|o| l.weights[o * l.n_in + i] * buf.delta[o]).sum();
                    buf.next.push(back * (1.0 - input[i] * input[i]));
                }
                std::mem::swap(&mut buf.delta, &mut buf.next);
            }
        }
        err * err
    }

    fn offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut k = 0;
        for l in &self.layers {
            offsets.push(k);
            k += l.weights.len() + l.bias.len();
        }
        offsets
    }

    /// Loss `1/(2n) * sum (f(x) - y)^2` and its gradient in [`Mlp::params`] order.
    pub fn loss_and_gradient(&self, x: &[Row], y: &[f64]) -> (f64, Vec<f64>) {
        let offsets = self.offsets();
        let p = self.n_params();
        let parts: Vec<(f64, Vec<f64>)> = x
            .par_chunks(CHUNK)
            .zip(y.par_chunks(CHUNK))
            .map(|(xc, yc)| {
                let mut g = vec![0.0; p];
                let mut buf = Buffers {
                    acts: self.scratch(),
                    delta: Vec::new(),
                    next: Vec::new(),
                };
                let mut sse = 0.0;
                for (r, &t) in xc.iter().zip(yc) {
                    sse += self.accumulate(r, t, &mut g, &offsets, &mut buf);
                }
                (sse, g)
            })
            .collect();
        let mut sse = 0.0;
        let mut grad = vec![0.0; p];
        for (s, g) in parts {
            sse += s;
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        let n = x.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        (sse / (2.0 * n), grad)
    }

    pub fn mse(&self, x: &[Row], y: &[f64]) -> f64 {
        let parts: Vec<f64> = x
            .par_chunks(CHUNK)
            .zip(y.par_chunks(CHUNK))
            .map(|(xc, yc)| {
                let mut acts = self.scratch();
                xc.iter().zip(yc).map(|(r, t)| (self.forward(r, &mut acts) - t).powi(2)).sum::<f64>()
            })
            .collect();
        parts.iter().sum::<f64>() / x.len() as f64
    }
}

struct Buffers {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    next: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpFit {
    /// Snapshot with the lowest validation MSE.
    pub model: Mlp,
    /// Training objective per iteration.
    pub train_loss: Vec<f64>,
    /// Validation MSE per iteration.
    pub val_loss: Vec<f64>,
    pub best_iteration: usize,
    pub stopped_early: bool,
}

/// Full-batch gradient descent from a seeded initialization. With an empty
/// validation set the training MSE drives early stopping.
pub fn fit_mlp(x: &[Row], y: &[f64], val_x: &[Row], val_y: &[f64], params: &MlpParams) -> Result<MlpFit, ModelError> {
    check_xy(x, y)?;
    if val_x.len() != val_y.len() {
        return Err(ModelError::LengthMismatch {
            features: val_x.len(),
            labels: val_y.len(),
        });
    }
    params.validate()?;
    let mut rng = rng::stream(params.seed, Stream::Mlp, 0);
    let mut model = Mlp::init(N_FEATURES, &params.hidden, &mut rng);
    let mut flat = model.params();

    let mut best = (f64::INFINITY, model.clone(), 0usize);
    let mut train_loss = Vec::new();
    let mut val_loss = Vec::new();
    let mut since_best = 0;
    let mut stopped_early = false;
    for it in 0..params.max_iter {
        let (loss, grad) = model.loss_and_gradient(x, y);
        let monitored = if val_x.is_empty() { 2.0 * loss } else { model.mse(val_x, val_y) };
        if !loss.is_finite() || !monitored.is_finite() {
            return Err(ModelError::NonFiniteLoss { iteration: it });
        }
        train_loss.push(loss);
        val_loss.push(monitored);
        if monitored < best.0 {
            best = (monitored, model.clone(), it);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= params.patience {
                stopped_early = true;
                break;
            }
        }
        for (w, g) in flat.iter_mut().zip(&grad) {
            *w -= params.learning_rate * g;
        }
        model.set_params(&flat);
    }
    Ok(MlpFit {
        model: best.1,
        train_loss,
        val_loss,
        best_iteration: best.2,
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_target_is_learned_by_bias() {
        let x = vec![[0.0; 5]; 40];
        let y = vec![0.5; 40];
        let fit = fit_mlp(&x, &y, &x[..10], &y[..10], &MlpParams { seed: 2, ..Default::default() }).unwrap();
        assert!((fit.model.predict(&[0.0; 5]) - 0.5).abs() < 1e-3);
    }

    #[test]
    fn deterministic_per_seed() {
        let mut rng = rng::stream(1, Stream::Synth, 0);
        let x: Vec<Row> = (0..64).map(|_| std::array::from_fn(|_| rng::unit(&mut rng))).collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] * r[1]).collect();
        let params = MlpParams { max_iter: 50, seed: 9, ..Default::default() };
        let a = fit_mlp(&x, &y, &x[..16], &y[..16], &params).unwrap();
        let b = fit_mlp(&x, &y, &x[..16], &y[..16], &params).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.train_loss.len(), 50);
    }

    #[test]
    fn training_reduces_loss() {
        let mut rng = rng::stream(4, Stream::Synth, 0);
        let x: Vec<Row> = (0..200).map(|_| std::array::from_fn(|_| 2.0 * rng::unit(&mut rng) - 1.0)).collect();
        let y: Vec<f64> = x.iter().map(|r| 0.5 + 0.3 * r[0] - 0.2 * r[4]).collect();
        let params = MlpParams { max_iter: 2000, learning_rate: 0.05, seed: 1, ..Default::default() };
        let fit = fit_mlp(&x, &y, &[], &[], &params).unwrap();
        assert!(fit.train_loss.last().unwrap() < &(fit.train_loss[0] * 0.1));
    }

    #[test]
    fn divergence_is_reported() {
        let x: Vec<Row> = (0..20).map(|k| [k as f64 * 100.0; 5]).collect();
        let y: Vec<f64> = (0..20).map(|k| k as f64 * 1e3).collect();
        let params = MlpParams { learning_rate: 1e3, max_iter: 500, ..Default::default() };
        assert!(matches!(fit_mlp(&x, &y, &[], &[], &params), Err(ModelError::NonFiniteLoss { .. })));
    }

    #[test]
    fn params_round_trip_and_shapes() {
        let mut rng = rng::stream(0, Stream::Mlp, 0);
        let mut m = Mlp::init(5, &[5, 5, 10, 3], &mut rng);
        assert_eq!(m.n_params(), 30 + 30 + 60 + 33 + 4);
        let mut p = m.params();
        p[0] = 42.0;
        m.set_params(&p);
        assert_eq!(m.layers()[0].weights[0], 42.0);
        assert!(Mlp::from_layers(m.layers().to_vec()).is_ok());
        assert!(Mlp::from_layers(m.layers()[3..].to_vec()).is_err());
    }

    #[test]
    fn invalid_params() {
        let x = vec![[0.0; 5]];
        for p in [
            MlpParams { hidden: vec![3, 0], ..Default::default() },
            MlpParams { learning_rate: -1.0, ..Default::default() },
            MlpParams { patience: 0, ..Default::default() },
        ] {
            assert!(matches!(fit_mlp(&x, &[0.0], &[], &[], &p), Err(ModelError::InvalidParams(_))));
        }
    }
}

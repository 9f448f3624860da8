//! Variational autoencoder over flattened agent trajectories.
//!
//! Encoder `D -> h -> h -> (mu, logvar)` and decoder `H -> h -> h -> D`
//! with tanh hidden units, unit-variance Gaussian reconstruction and a
//! standard normal prior. All weights live in one flat vector; each dense
//! layer stores its `out x in` weight matrix row-major followed by its bias.
//!
//! The weights CSV has header `tensor,row,col,value` with tensors `enc1`,
//! `enc2`, `mu`, `logvar`, `dec1`, `dec2`, `out` (suffix `.w` or `.b`) and
//! the per-attribute normalization bounds `norm.min`, `norm.max`.

use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, CalibError, Result};
use crate::rng::rng_from_seed;
use crate::stats::LN_2PI;
use crate::trace::AgentTrace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VaeConfig {
    pub hidden: usize,
    pub latent: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Epochs without improvement before the learning rate is halved.
    pub plateau_patience: usize,
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            latent: 4,
            epochs: 200,
            batch_size: 32,
            learning_rate: 1e-3,
            plateau_patience: 10,
        }
    }
}

const LAYER_NAMES: [&str; 7] = ["enc1", "enc2", "mu", "logvar", "dec1", "dec2", "out"];
const MIN_LR: f64 = 1e-6;
const NAN_RETRIES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Dense {
    input: usize,
    output: usize,
    offset: usize,
}

impl Dense {
    fn size(&self) -> usize {
        self.output * (self.input + 1)
    }

    fn bias(&self) -> usize {
        self.offset + self.output * self.input
    }

    fn forward(&self, p: &[f64], x: &[f64], y: &mut [f64]) {
        for o in 0..self.output {
            let row = &p[self.offset + o * self.input..self.offset + (o + 1) * self.input];
            y[o] = p[self.bias() + o] + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
        }
    }

    /// Accumulates parameter gradients and writes `dL/dx` into `dx` when given.
    fn backward(&self, p: &[f64], x: &[f64], dy: &[f64], grad: &mut [f64], dx: Option<&mut [f64]>) {
        for o in 0..self.output {
            let base = self.offset + o * self.input;
            for i in 0..self.input {
                grad[base + i] += dy[o] * x[i];
            }
            grad[self.bias() + o] += dy[o];
        }
        if let Some(dx) = dx {
            dx.fill(0.0);
            for o in 0..self.output {
                let base = self.offset + o * self.input;
                for i in 0..self.input {
                    dx[i] += p[base + i] * dy[o];
                }
            }
        }
    }
}

fn layers(input: usize, hidden: usize, latent: usize) -> [Dense; 7] {
    let dims = [
        (input, hidden),
        (hidden, hidden),
        (hidden, latent),
        (hidden, latent),
        (latent, hidden),
        (hidden, hidden),
        (hidden, input),
    ];
    let mut offset = 0;
    dims.map(|(i, o)| {
        let d = Dense {
            input: i,
            output: o,
            offset,
        };
        offset += d.size();
        d
    })
}

/// Trained encoder/decoder pair plus the normalization it was trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeModel {
    pub input_dim: usize,
    pub hidden: usize,
    pub latent: usize,
    pub attrs: Vec<String>,
    pub horizon: usize,
    pub norm_min: Vec<f64>,
    pub norm_max: Vec<f64>,
    pub params: Vec<f64>,
    /// Epoch-averaged ELBO per training epoch.
    pub elbo_history: Vec<f64>,
}

/// Per-sample quantities kept from the forward pass for backprop.
struct Pass {
    a1: Vec<f64>,
    a2: Vec<f64>,
    mu: Vec<f64>,
    logvar: Vec<f64>,
    z: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
    xhat: Vec<f64>,
}

/// `KL(N(mu, exp(logvar)) || N(0, I)) = 0.5 sum(mu^2 + exp(logvar) - 1 - logvar)`.
pub fn kl_standard_normal(mu: &[f64], logvar: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(m, lv)| m * m + lv.exp() - 1.0 - lv)
        .sum::<f64>()
}

impl VaeModel {
    /// Untrained model with Glorot-uniform weights and zero biases.
    pub fn new(input_dim: usize, hidden: usize, latent: usize, seed: u64) -> Self {
        let ls = layers(input_dim, hidden, latent);
        let total: usize = ls.iter().map(Dense::size).sum();
        let mut params = vec![0.0; total];
        let mut rng = rng_from_seed(seed);
        for l in &ls {
            let limit = (6.0 / (l.input + l.output) as f64).sqrt();
            for w in &mut params[l.offset..l.bias()] {
                *w = rng.random_range(-limit..limit);
            }
        }
        Self {
            input_dim,
            hidden,
            latent,
            attrs: Vec::new(),
            horizon: 0,
            norm_min: Vec::new(),
            norm_max: Vec::new(),
            params,
            elbo_history: Vec::new(),
        }
    }

    fn layers(&self) -> [Dense; 7] {
        layers(self.input_dim, self.hidden, self.latent)
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn forward(&self, p: &[f64], x: &[f64], eps: &[f64]) -> Pass {
        let [enc1, enc2, lmu, llv, dec1, dec2, out] = self.layers();
        let (h, k) = (self.hidden, self.latent);
        let mut a1 = vec![0.0; h];
        enc1.forward(p, x, &mut a1);
        a1.iter_mut().for_each(|v| *v = v.tanh());
        let mut a2 = vec![0.0; h];
        enc2.forward(p, &a1, &mut a2);
        a2.iter_mut().for_each(|v| *v = v.tanh());
        let mut mu = vec![0.0; k];
        lmu.forward(p, &a2, &mut mu);
        let mut logvar = vec![0.0; k];
        llv.forward(p, &a2, &mut logvar);
        let z: Vec<f64> = (0..k).map(|j| mu[j] + (0.5 * logvar[j]).exp() * eps[j]).collect();
        let mut d1 = vec![0.0; h];
        dec1.forward(p, &z, &mut d1);
        d1.iter_mut().for_each(|v| *v = v.tanh());
        let mut d2 = vec![0.0; h];
        dec2.forward(p, &d1, &mut d2);
        d2.iter_mut().for_each(|v| *v = v.tanh());
        let mut xhat = vec![0.0; self.input_dim];
        out.forward(p, &d2, &mut xhat);
        Pass {
            a1,
            a2,
            mu,
            logvar,
            z,
            d1,
            d2,
            xhat,
        }
    }

    fn sample_loss(&self, x: &[f64], pass: &Pass) -> f64 {
        let rec: f64 = 0.5 * x.iter().zip(&pass.xhat).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            + 0.5 * self.input_dim as f64 * LN_2PI;
        rec + kl_standard_normal(&pass.mu, &pass.logvar)
    }

    /// Mean negative ELBO over the rows of `x` (normalized inputs) for the
    /// given reparameterization noise, and its gradient.
    pub fn loss_and_grad(&self, params: &[f64], x: &DMatrix<f64>, eps: &DMatrix<f64>) -> (f64, Vec<f64>) {
        let [enc1, enc2, lmu, llv, dec1, dec2, out] = self.layers();
        let (h, k) = (self.hidden, self.latent);
        let n = x.nrows();
        let mut grad = vec![0.0; params.len()];
        let mut loss = 0.0;
        let mut dxhat = vec![0.0; self.input_dim];
        let (mut dd2, mut dd1, mut dz) = (vec![0.0; h], vec![0.0; h], vec![0.0; k]);
        let (mut da2, mut da1, mut tmp) = (vec![0.0; h], vec![0.0; h], vec![0.0; h]);
        for r in 0..n {
            let xr: Vec<f64> = x.row(r).iter().copied().collect();
            let er: Vec<f64> = eps.row(r).iter().copied().collect();
            let pass = self.forward(params, &xr, &er);
            loss += self.sample_loss(&xr, &pass);
            for (d, (xh, xi)) in dxhat.iter_mut().zip(pass.xhat.iter().zip(&xr)) {
                *d = xh - xi;
            }
            out.backward(params, &pass.d2, &dxhat, &mut grad, Some(&mut dd2));
            for (d, a) in dd2.iter_mut().zip(&pass.d2) {
                *d *= 1.0 - a * a;
            }
            dec2.backward(params, &pass.d1, &dd2, &mut grad, Some(&mut dd1));
            for (d, a) in dd1.iter_mut().zip(&pass.d1) {
                *d *= 1.0 - a * a;
            }
            dec1.backward(params, &pass.z, &dd1, &mut grad, Some(&mut dz));
            let dmu: Vec<f64> = (0..k).map(|j| dz[j] + pass.mu[j]).collect();
            let dlv: Vec<f64> = (0..k)
                .map(|j| {
                    let s = (0.5 * pass.logvar[j]).exp();
                    dz[j] * er[j] * 0.5 * s + 0.5 * (s * s - 1.0)
                })
                .collect();
            lmu.backward(params, &pass.a2, &dmu, &mut grad, Some(&mut da2));
            llv.backward(params, &pass.a2, &dlv, &mut grad, Some(&mut tmp));
            for ((d, t), a) in da2.iter_mut().zip(&tmp).zip(&pass.a2) {
                *d = (*d + t) * (1.0 - a * a);
            }
            enc2.backward(params, &pass.a1, &da2, &mut grad, Some(&mut da1));
            for (d, a) in da1.iter_mut().zip(&pass.a1) {
                *d *= 1.0 - a * a;
            }
            enc1.backward(params, &xr, &da1, &mut grad, None);
        }
        let scale = 1.0 / n as f64;
        grad.iter_mut().for_each(|g| *g *= scale);
        (loss * scale, grad)
    }

    /// Min-max normalized A x (Att*T) design matrix using the stored bounds.
    pub fn normalize(&self, traces: &AgentTrace) -> Result<DMatrix<f64>> {
        check_dim("VAE attribute count", self.attrs.len(), traces.attrs.len())?;
        check_dim("VAE horizon", self.horizon, traces.horizon())?;
        let raw = traces.flattened();
        check_dim("VAE input dimension", self.input_dim, raw.ncols())?;
        let t = self.horizon;
        Ok(DMatrix::from_fn(raw.nrows(), raw.ncols(), |a, j| {
            let att = j / t;
            let span = self.norm_max[att] - self.norm_min[att];
            if span > 0.0 {
                (raw[(a, j)] - self.norm_min[att]) / span
            } else {
                0.0
            }
        }))
    }

    /// Posterior means of the codes, A x H. No sampling.
    pub fn encode(&self, traces: &AgentTrace) -> Result<DMatrix<f64>> {
        let x = self.normalize(traces)?;
        let zeros = vec![0.0; self.latent];
        let mut codes = DMatrix::zeros(x.nrows(), self.latent);
        for a in 0..x.nrows() {
            let xr: Vec<f64> = x.row(a).iter().copied().collect();
            let pass = self.forward(&self.params, &xr, &zeros);
            for j in 0..self.latent {
                codes[(a, j)] = pass.mu[j];
            }
        }
        Ok(codes)
    }

    /// Decoder output for each code row, in normalized units.
    pub fn decode(&self, codes: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim("VAE code dimension", self.latent, codes.ncols())?;
        let [_, _, _, _, dec1, dec2, out] = self.layers();
        let h = self.hidden;
        let mut recon = DMatrix::zeros(codes.nrows(), self.input_dim);
        let (mut d1, mut d2, mut xh) = (vec![0.0; h], vec![0.0; h], vec![0.0; self.input_dim]);
        for r in 0..codes.nrows() {
            let z: Vec<f64> = codes.row(r).iter().copied().collect();
            dec1.forward(&self.params, &z, &mut d1);
            d1.iter_mut().for_each(|v| *v = v.tanh());
            dec2.forward(&self.params, &d1, &mut d2);
            d2.iter_mut().for_each(|v| *v = v.tanh());
            out.forward(&self.params, &d2, &mut xh);
            for j in 0..self.input_dim {
                recon[(r, j)] = xh[j];
            }
        }
        Ok(recon)
    }

    pub fn write_weights_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["tensor", "row", "col", "value"])?;
        for (l, name) in self.layers().iter().zip(LAYER_NAMES) {
            for o in 0..l.output {
                for i in 0..l.input {
                    let v = self.params[l.offset + o * l.input + i];
                    w.write_record([format!("{name}.w"), o.to_string(), i.to_string(), format!("{v:e}")])?;
                }
            }
            for o in 0..l.output {
                let v = self.params[l.bias() + o];
                w.write_record([format!("{name}.b"), o.to_string(), "0".into(), format!("{v:e}")])?;
            }
        }
        for (tensor, vals) in [("norm.min", &self.norm_min), ("norm.max", &self.norm_max)] {
            for (i, v) in vals.iter().enumerate() {
                w.write_record([tensor.to_string(), i.to_string(), "0".into(), format!("{v:e}")])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Loads weights written by [`VaeModel::write_weights_csv`] into a model
    /// of matching shape.
    pub fn read_weights_csv(&mut self, path: &Path) -> Result<()> {
        let mut r = csv::Reader::from_path(path)?;
        let ls = self.layers();
        let mut seen = vec![false; self.params.len()];
        let n_att = self.norm_min.len();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let parse_err = |m: String| CalibError::Parse { line: line + 2, message: m };
            let tensor = rec.get(0).unwrap_or_default();
            let idx = |k: usize| -> Result<usize> {
                rec.get(k)
                    .unwrap_or_default()
                    .parse()
                    .map_err(|e| parse_err(format!("index: {e}")))
            };
            let (row, col) = (idx(1)?, idx(2)?);
            let value: f64 = rec
                .get(3)
                .unwrap_or_default()
                .parse()
                .map_err(|e| parse_err(format!("value: {e}")))?;
            let target = match tensor.split_once('.') {
                Some(("norm", "min")) if row < n_att => {
                    self.norm_min[row] = value;
                    continue;
                }
                Some(("norm", "max")) if row < n_att => {
                    self.norm_max[row] = value;
                    continue;
                }
                Some((layer, kind)) => {
                    let l = LAYER_NAMES
                        .iter()
                        .position(|n| *n == layer)
                        .map(|i| ls[i])
                        .ok_or_else(|| parse_err(format!("unknown tensor {tensor}")))?;
                    match kind {
                        "w" if row < l.output && col < l.input => l.offset + row * l.input + col,
                        "b" if row < l.output => l.bias() + row,
                        _ => return Err(parse_err(format!("index out of range for {tensor}"))),
                    }
                }
                None => return Err(parse_err(format!("unknown tensor {tensor}"))),
            };
            self.params[target] = value;
            seen[target] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(CalibError::InvalidInput("weights file does not cover every parameter".into()));
        }
        Ok(())
    }
}

/// Per-attribute minimum and maximum over all agents and timesteps.
fn attribute_bounds(traces: &AgentTrace) -> (Vec<f64>, Vec<f64>) {
    let n_att = traces.attrs.len();
    let mut lo = vec![f64::INFINITY; n_att];
    let mut hi = vec![f64::NEG_INFINITY; n_att];
    for m in &traces.agents {
        for att in 0..n_att {
            for v in m.row(att).iter() {
                lo[att] = lo[att].min(*v);
                hi[att] = hi[att].max(*v);
            }
        }
    }
    (lo, hi)
}

fn train_once(x: &DMatrix<f64>, model: &mut VaeModel, cfg: &VaeConfig, seed: u64) -> std::result::Result<(), f64> {
    let mut rng = rng_from_seed(seed);
    let n = x.nrows();
    let np = model.params.len();
    let (mut m1, mut m2) = (vec![0.0; np], vec![0.0; np]);
    let (b1, b2, eps_adam) = (0.9f64, 0.999f64, 1e-8);
    let mut step = 0i32;
    let mut lr = cfg.learning_rate;
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let mut order: Vec<usize> = (0..n).collect();
    model.elbo_history.clear();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let xb = DMatrix::from_fn(chunk.len(), x.ncols(), |r, j| x[(chunk[r], j)]);
            let eb = DMatrix::from_fn(chunk.len(), model.latent, |_, _| rng.sample::<f64, _>(StandardNormal));
            let (loss, grad) = model.loss_and_grad(&model.params, &xb, &eb);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(loss);
            }
            epoch_loss += loss * chunk.len() as f64;
            step += 1;
            let c1 = 1.0 - b1.powi(step);
            let c2 = 1.0 - b2.powi(step);
            for (i, g) in grad.iter().enumerate() {
                m1[i] = b1 * m1[i] + (1.0 - b1) * g;
                m2[i] = b2 * m2[i] + (1.0 - b2) * g * g;
                model.params[i] -= lr * (m1[i] / c1) / ((m2[i] / c2).sqrt() + eps_adam);
            }
        }
        let mean_loss = epoch_loss / n as f64;
        model.elbo_history.push(-mean_loss);
        if mean_loss < best - 1e-4 * best.abs() {
            best = mean_loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.plateau_patience {
                lr = (lr * 0.5).max(MIN_LR);
                stale = 0;
            }
        }
    }
    Ok(())
}

/// Trains a VAE on min-max normalized agent trajectories. A non-finite loss
/// restarts training with half the learning rate, at most twice.
pub fn train_vae(traces: &AgentTrace, cfg: &VaeConfig, seed: u64) -> Result<VaeModel> {
    let a = traces.num_agents();
    if cfg.latent == 0 || cfg.hidden == 0 || cfg.epochs == 0 {
        return Err(CalibError::InvalidInput("VAE sizes and epochs must be positive".into()));
    }
    if a < 2 * cfg.latent {
        return Err(CalibError::InvalidInput(format!(
            "VAE needs at least {} agents for a {}-dimensional code, got {a}",
            2 * cfg.latent,
            cfg.latent
        )));
    }
    let input_dim = traces.attrs.len() * traces.horizon();
    if input_dim == 0 {
        return Err(CalibError::InvalidInput("agent traces are empty".into()));
    }
    let (lo, hi) = attribute_bounds(traces);
    let mut cfg = *cfg;
    let mut last = f64::NAN;
    for attempt in 0..=NAN_RETRIES {
        let mut model = VaeModel::new(input_dim, cfg.hidden, cfg.latent, seed);
        model.attrs = traces.attrs.clone();
        model.horizon = traces.horizon();
        model.norm_min = lo.clone();
        model.norm_max = hi.clone();
        let x = model.normalize(traces)?;
        match train_once(&x, &mut model, &cfg, seed ^ attempt as u64) {
            Ok(()) => return Ok(model),
            Err(loss) => {
                last = loss;
                cfg.learning_rate *= 0.5;
            }
        }
    }
    Err(CalibError::Diverged(format!(
        "VAE loss became non-finite ({last}) after {NAN_RETRIES} learning-rate halvings; final rate {}",
        cfg.learning_rate * 2.0
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand_distr::{Distribution, Normal};

    fn traces_from(rows: &DMatrix<f64>) -> AgentTrace {
        AgentTrace {
            attrs: vec!["x".into()],
            agents: (0..rows.nrows())
                .map(|a| DMatrix::from_fn(1, rows.ncols(), |_, t| rows[(a, t)]))
                .collect(),
        }
    }

    /// Two archetypes: rising vs falling trajectories with small noise.
    fn archetypes(n_each: usize, t: usize, seed: u64) -> (AgentTrace, Vec<usize>) {
        let mut rng = rng_from_seed(seed);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let rows = DMatrix::from_fn(2 * n_each, t, |a, j| {
            let s = j as f64 / (t - 1) as f64;
            let base = if a < n_each { s } else { 1.0 - s };
            10.0 * base + noise.sample(&mut rng)
        });
        let labels = (0..2 * n_each).map(|a| usize::from(a >= n_each)).collect();
        (traces_from(&rows), labels)
    }

    #[test]
    fn kl_closed_form_values() {
        assert_eq!(kl_standard_normal(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert_relative_eq!(kl_standard_normal(&[1.0, 0.0], &[0.0, 0.0]), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn kl_matches_monte_carlo() {
        // E_q[ln q(z) - ln p(z)] by sampling, on random (mu, sigma)
        let mut rng = rng_from_seed(17);
        for _ in 0..5 {
            // |mu| >= 0.5 keeps the KL large enough for a 2% relative check
            let mu: Vec<f64> = (0..3)
                .map(|_| rng.random_range(0.5..1.5) * if rng.random::<bool>() { 1.0 } else { -1.0 })
                .collect();
            let lv: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let n = 2_000_000;
            let mut acc = 0.0;
            for _ in 0..n {
                for j in 0..3 {
                    let s = (0.5 * lv[j]).exp();
                    let e: f64 = rng.sample(StandardNormal);
                    let z = mu[j] + s * e;
                    acc += -0.5 * e * e - s.ln() + 0.5 * z * z;
                }
            }
            let mc = acc / n as f64;
            let exact = kl_standard_normal(&mu, &lv);
            assert!((mc - exact).abs() <= 0.02 * exact, "mc {mc} exact {exact}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = rng_from_seed(5);
        let model = VaeModel::new(12, 8, 3, 3);
        let x = DMatrix::from_fn(4, 12, |_, _| rng.random::<f64>());
        let eps = DMatrix::from_fn(4, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let (_, grad) = model.loss_and_grad(&model.params, &x, &eps);
        let mut p = model.params.clone();
        for _ in 0..100 {
            let i = rng.random_range(0..p.len());
            let h = 1e-5;
            let orig = p[i];
            p[i] = orig + h;
            let (up, _) = model.loss_and_grad(&p, &x, &eps);
            p[i] = orig - h;
            let (down, _) = model.loss_and_grad(&p, &x, &eps);
            p[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6);
            assert!(rel < 1e-4, "param {i}: fd {fd} analytic {}", grad[i]);
        }
    }

    #[test]
    fn training_improves_elbo_and_separates_archetypes() {
        let (traces, labels) = archetypes(30, 20, 1);
        let cfg = VaeConfig::default();
        let model = train_vae(&traces, &cfg, 2).unwrap();
        let h = &model.elbo_history;
        assert_eq!(h.len(), cfg.epochs);
        assert!(h[h.len() - 1] >= h[0]);
        // 5-epoch moving average never dips by more than 5%
        let ma: Vec<f64> = h.windows(5).map(|w| w.iter().sum::<f64>() / 5.0).collect();
        let mut best = ma[0];
        for v in &ma {
            assert!(*v >= best - 0.05 * best.abs(), "{v} after {best}");
            best = best.max(*v);
        }
        let codes = model.encode(&traces).unwrap();
        let centroid = |g: usize| -> Vec<f64> {
            (0..cfg.latent)
                .map(|j| {
                    let (s, n) = labels
                        .iter()
                        .enumerate()
                        .filter(|(_, l)| **l == g)
                        .fold((0.0, 0.0), |acc, (a, _)| (acc.0 + codes[(a, j)], acc.1 + 1.0));
                    s / n
                })
                .collect()
        };
        let (c0, c1) = (centroid(0), centroid(1));
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let spread: f64 = (0..labels.len())
            .map(|a| {
                let row: Vec<f64> = codes.row(a).iter().copied().collect();
                dist(&row, if labels[a] == 0 { &c0 } else { &c1 })
            })
            .sum::<f64>()
            / labels.len() as f64;
        assert!(dist(&c0, &c1) >= 2.0 * spread, "sep {} spread {spread}", dist(&c0, &c1));
    }

    #[test]
    fn identical_agents_share_codes_near_origin() {
        let rows = DMatrix::from_fn(10, 8, |_, t| t as f64);
        let traces = traces_from(&rows);
        let model = train_vae(&traces, &VaeConfig::default(), 0).unwrap();
        let codes = model.encode(&traces).unwrap();
        for a in 1..10 {
            assert_eq!(codes.row(a), codes.row(0));
        }
        assert!(codes.row(0).norm() < 1.0);
        assert_eq!(model.encode(&traces).unwrap(), codes);
    }

    #[test]
    fn rejects_too_few_agents_and_mismatched_inputs() {
        let rows = DMatrix::from_fn(5, 8, |a, t| (a + t) as f64);
        assert!(train_vae(&traces_from(&rows), &VaeConfig::default(), 0).is_err());
        let rows = DMatrix::from_fn(10, 8, |a, t| (a * t) as f64);
        let model = train_vae(&traces_from(&rows), &VaeConfig { epochs: 2, ..Default::default() }, 0).unwrap();
        let other = traces_from(&DMatrix::from_fn(10, 9, |a, t| (a + t) as f64));
        assert!(model.encode(&other).is_err());
    }

    #[test]
    fn weights_round_trip_through_csv() {
        let rows = DMatrix::from_fn(10, 6, |a, t| (a * t) as f64);
        let traces = traces_from(&rows);
        let model = train_vae(&traces, &VaeConfig { epochs: 3, ..Default::default() }, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        model.write_weights_csv(&path).unwrap();
        let mut fresh = VaeModel::new(model.input_dim, model.hidden, model.latent, 99);
        fresh.attrs = model.attrs.clone();
        fresh.horizon = model.horizon;
        fresh.norm_min = vec![0.0];
        fresh.norm_max = vec![0.0];
        fresh.read_weights_csv(&path).unwrap();
        assert_eq!(fresh.params, model.params);
        assert_eq!(fresh.norm_max, model.norm_max);
        assert_eq!(fresh.encode(&traces).unwrap(), model.encode(&traces).unwrap());
    }
}

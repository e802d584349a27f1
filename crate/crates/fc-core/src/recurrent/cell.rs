//! Single-layer LSTM and GRU cells with a dense sigmoid head, plus manual
//! backpropagation through time.
//!
//! Gate equations, LSTM:
//!   i_t = sigma(W_i x_t + W_hi h_{t-1} + b_i)
//!   f_t = sigma(W_f x_t + W_hf h_{t-1} + b_f)
//!   o_t = sigma(W_o x_t + W_ho h_{t-1} + b_o)
//!   c~_t = tanh(W_c x_t + W_hc h_{t-1} + b_c)
//!   c_t = f_t . c_{t-1} + i_t . c~_t
//!   h_t = o_t . tanh(c_t)
//!
//! GRU:
//!   r_t = sigma(W_r x_t + W_hr h_{t-1} + b_r)
//!   u_t = sigma(W_u x_t + W_hu h_{t-1} + b_u)
//!   c~_t = tanh(W_c x_t + W_hc (r_t . h_{t-1}) + b_c)
//!   h_t = (1 - u_t) . h_{t-1} + u_t . c~_t

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classical::sigmoid;
use crate::error::{Error, Result};

const PROB_CLAMP: f64 = 1e-12;

/// Uniform access to every parameter tensor as flat slices; optimizers and
/// finite-difference checks walk parameters through this.
pub trait ParamTensors {
    fn flat_views(&self) -> Vec<&[f64]>;
    fn flat_views_mut(&mut self) -> Vec<&mut [f64]>;

    fn param_count(&self) -> usize {
        self.flat_views().iter().map(|s| s.len()).sum()
    }
}

fn uniform(rng: &mut ChaCha8Rng, scale: f64) -> f64 {
    rng.gen_range(-scale..scale)
}

/// Full LSTM weight set plus the dense sigmoid head.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LstmParams {
    pub w_i: Array2<f64>,
    pub w_f: Array2<f64>,
    pub w_o: Array2<f64>,
    pub w_c: Array2<f64>,
    pub w_hi: Array2<f64>,
    pub w_hf: Array2<f64>,
    pub w_ho: Array2<f64>,
    pub w_hc: Array2<f64>,
    pub b_i: Array1<f64>,
    pub b_f: Array1<f64>,
    pub b_o: Array1<f64>,
    pub b_c: Array1<f64>,
    pub head_w: Array1<f64>,
    pub head_b: Array1<f64>,
}

impl LstmParams {
    pub fn zeros(k: usize, d: usize) -> Self {
        LstmParams {
            w_i: Array2::zeros((d, k)),
            w_f: Array2::zeros((d, k)),
            w_o: Array2::zeros((d, k)),
            w_c: Array2::zeros((d, k)),
            w_hi: Array2::zeros((d, d)),
            w_hf: Array2::zeros((d, d)),
            w_ho: Array2::zeros((d, d)),
            w_hc: Array2::zeros((d, d)),
            b_i: Array1::zeros(d),
            b_f: Array1::zeros(d),
            b_o: Array1::zeros(d),
            b_c: Array1::zeros(d),
            head_w: Array1::zeros(d),
            head_b: Array1::zeros(1),
        }
    }

    /// Seeded init: input weights uniform in +-1/sqrt(k), recurrent and head
    /// weights uniform in +-1/sqrt(d), biases zero.
    pub fn init(k: usize, d: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let si = 1.0 / (k as f64).sqrt();
        let sh = 1.0 / (d as f64).sqrt();
        let mut p = Self::zeros(k, d);
        for w in [&mut p.w_i, &mut p.w_f, &mut p.w_o, &mut p.w_c] {
            w.mapv_inplace(|_| uniform(&mut rng, si));
        }
        for w in [&mut p.w_hi, &mut p.w_hf, &mut p.w_ho, &mut p.w_hc] {
            w.mapv_inplace(|_| uniform(&mut rng, sh));
        }
        p.head_w.mapv_inplace(|_| uniform(&mut rng, sh));
        p
    }

    pub fn input_width(&self) -> usize {
        self.w_i.ncols()
    }

    pub fn hidden_size(&self) -> usize {
        self.w_i.nrows()
    }
}

impl ParamTensors for LstmParams {
    fn flat_views(&self) -> Vec<&[f64]> {
        vec![
            self.w_i.as_slice().unwrap(),
            self.w_f.as_slice().unwrap(),
            self.w_o.as_slice().unwrap(),
            self.w_c.as_slice().unwrap(),
            self.w_hi.as_slice().unwrap(),
            self.w_hf.as_slice().unwrap(),
            self.w_ho.as_slice().unwrap(),
            self.w_hc.as_slice().unwrap(),
            self.b_i.as_slice().unwrap(),
            self.b_f.as_slice().unwrap(),
            self.b_o.as_slice().unwrap(),
            self.b_c.as_slice().unwrap(),
            self.head_w.as_slice().unwrap(),
            self.head_b.as_slice().unwrap(),
        ]
    }

    fn flat_views_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w_i.as_slice_mut().unwrap(),
            self.w_f.as_slice_mut().unwrap(),
            self.w_o.as_slice_mut().unwrap(),
            self.w_c.as_slice_mut().unwrap(),
            self.w_hi.as_slice_mut().unwrap(),
            self.w_hf.as_slice_mut().unwrap(),
            self.w_ho.as_slice_mut().unwrap(),
            self.w_hc.as_slice_mut().unwrap(),
            self.b_i.as_slice_mut().unwrap(),
            self.b_f.as_slice_mut().unwrap(),
            self.b_o.as_slice_mut().unwrap(),
            self.b_c.as_slice_mut().unwrap(),
            self.head_w.as_slice_mut().unwrap(),
            self.head_b.as_slice_mut().unwrap(),
        ]
    }
}

/// GRU weights plus the dense sigmoid head. `w_hc` applies to
/// r_t . h_{t-1}.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GruParams {
    pub w_r: Array2<f64>,
    pub w_u: Array2<f64>,
    pub w_c: Array2<f64>,
    pub w_hr: Array2<f64>,
    pub w_hu: Array2<f64>,
    pub w_hc: Array2<f64>,
    pub b_r: Array1<f64>,
    pub b_u: Array1<f64>,
    pub b_c: Array1<f64>,
    pub head_w: Array1<f64>,
    pub head_b: Array1<f64>,
}

impl GruParams {
    pub fn zeros(k: usize, d: usize) -> Self {
        GruParams {
            w_r: Array2::zeros((d, k)),
            w_u: Array2::zeros((d, k)),
            w_c: Array2::zeros((d, k)),
            w_hr: Array2::zeros((d, d)),
            w_hu: Array2::zeros((d, d)),
            w_hc: Array2::zeros((d, d)),
            b_r: Array1::zeros(d),
            b_u: Array1::zeros(d),
            b_c: Array1::zeros(d),
            head_w: Array1::zeros(d),
            head_b: Array1::zeros(1),
        }
    }

    pub fn init(k: usize, d: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let si = 1.0 / (k as f64).sqrt();
        let sh = 1.0 / (d as f64).sqrt();
        let mut p = Self::zeros(k, d);
        for w in [&mut p.w_r, &mut p.w_u, &mut p.w_c] {
            w.mapv_inplace(|_| uniform(&mut rng, si));
        }
        for w in [&mut p.w_hr, &mut p.w_hu, &mut p.w_hc] {
            w.mapv_inplace(|_| uniform(&mut rng, sh));
        }
        p.head_w.mapv_inplace(|_| uniform(&mut rng, sh));
        p
    }

    pub fn input_width(&self) -> usize {
        self.w_r.ncols()
    }

    pub fn hidden_size(&self) -> usize {
        self.w_r.nrows()
    }
}

impl ParamTensors for GruParams {
    fn flat_views(&self) -> Vec<&[f64]> {
        vec![
            self.w_r.as_slice().unwrap(),
            self.w_u.as_slice().unwrap(),
            self.w_c.as_slice().unwrap(),
            self.w_hr.as_slice().unwrap(),
            self.w_hu.as_slice().unwrap(),
            self.w_hc.as_slice().unwrap(),
            self.b_r.as_slice().unwrap(),
            self.b_u.as_slice().unwrap(),
            self.b_c.as_slice().unwrap(),
            self.head_w.as_slice().unwrap(),
            self.head_b.as_slice().unwrap(),
        ]
    }

    fn flat_views_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w_r.as_slice_mut().unwrap(),
            self.w_u.as_slice_mut().unwrap(),
            self.w_c.as_slice_mut().unwrap(),
            self.w_hr.as_slice_mut().unwrap(),
            self.w_hu.as_slice_mut().unwrap(),
            self.w_hc.as_slice_mut().unwrap(),
            self.b_r.as_slice_mut().unwrap(),
            self.b_u.as_slice_mut().unwrap(),
            self.b_c.as_slice_mut().unwrap(),
            self.head_w.as_slice_mut().unwrap(),
            self.head_b.as_slice_mut().unwrap(),
        ]
    }
}

fn check_input(k: usize, x: &Array1<f64>) -> Result<()> {
    if x.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "input width {} does not match cell width {k}",
            x.len()
        )));
    }
    Ok(())
}

/// One LSTM step; returns (h_t, c_t).
pub fn lstm_step(
    p: &LstmParams,
    x: &Array1<f64>,
    h_prev: &Array1<f64>,
    c_prev: &Array1<f64>,
) -> Result<(Array1<f64>, Array1<f64>)> {
    check_input(p.input_width(), x)?;
    let d = p.hidden_size();
    if h_prev.len() != d || c_prev.len() != d {
        return Err(Error::DimensionMismatch("state width mismatch".into()));
    }
    let gates = lstm_gates(p, x, h_prev);
    let c = &gates.f * c_prev + &gates.i * &gates.c_tilde;
    let h = &gates.o * &c.mapv(f64::tanh);
    Ok((h, c))
}

struct LstmGates {
    i: Array1<f64>,
    f: Array1<f64>,
    o: Array1<f64>,
    c_tilde: Array1<f64>,
}

fn lstm_gates(p: &LstmParams, x: &Array1<f64>, h_prev: &Array1<f64>) -> LstmGates {
    let i = (p.w_i.dot(x) + p.w_hi.dot(h_prev) + &p.b_i).mapv(sigmoid);
    let f = (p.w_f.dot(x) + p.w_hf.dot(h_prev) + &p.b_f).mapv(sigmoid);
    let o = (p.w_o.dot(x) + p.w_ho.dot(h_prev) + &p.b_o).mapv(sigmoid);
    let c_tilde = (p.w_c.dot(x) + p.w_hc.dot(h_prev) + &p.b_c).mapv(f64::tanh);
    LstmGates { i, f, o, c_tilde }
}

/// One GRU step; returns h_t.
pub fn gru_step(p: &GruParams, x: &Array1<f64>, h_prev: &Array1<f64>) -> Result<Array1<f64>> {
    check_input(p.input_width(), x)?;
    if h_prev.len() != p.hidden_size() {
        return Err(Error::DimensionMismatch("state width mismatch".into()));
    }
    let r = (p.w_r.dot(x) + p.w_hr.dot(h_prev) + &p.b_r).mapv(sigmoid);
    let u = (p.w_u.dot(x) + p.w_hu.dot(h_prev) + &p.b_u).mapv(sigmoid);
    let rh = &r * h_prev;
    let c_tilde = (p.w_c.dot(x) + p.w_hc.dot(&rh) + &p.b_c).mapv(f64::tanh);
    Ok((1.0 - &u) * h_prev + &u * &c_tilde)
}

struct LstmStepCache {
    x: Array1<f64>,
    h_prev: Array1<f64>,
    c_prev: Array1<f64>,
    i: Array1<f64>,
    f: Array1<f64>,
    o: Array1<f64>,
    c_tilde: Array1<f64>,
    tanh_c: Array1<f64>,
}

/// LSTM forward over a sequence (rows of `seq` are time steps), caching the
/// activations BPTT needs. Returns the final hidden state alongside.
pub struct LstmRun {
    pub h_final: Array1<f64>,
    steps: Vec<LstmStepCache>,
}

pub fn lstm_forward(p: &LstmParams, seq: &Array2<f64>) -> Result<LstmRun> {
    if seq.nrows() == 0 {
        return Err(Error::invalid("sequence must be nonempty"));
    }
    let d = p.hidden_size();
    let mut h = Array1::<f64>::zeros(d);
    let mut c = Array1::<f64>::zeros(d);
    let mut steps = Vec::with_capacity(seq.nrows());
    for row in seq.rows() {
        let x = row.to_owned();
        check_input(p.input_width(), &x)?;
        let gates = lstm_gates(p, &x, &h);
        let c_new = &gates.f * &c + &gates.i * &gates.c_tilde;
        let tanh_c = c_new.mapv(f64::tanh);
        let h_new = &gates.o * &tanh_c;
        steps.push(LstmStepCache {
            x,
            h_prev: h,
            c_prev: c,
            i: gates.i,
            f: gates.f,
            o: gates.o,
            c_tilde: gates.c_tilde,
            tanh_c,
        });
        h = h_new;
        c = c_new;
    }
    Ok(LstmRun { h_final: h, steps })
}

struct GruStepCache {
    x: Array1<f64>,
    h_prev: Array1<f64>,
    r: Array1<f64>,
    u: Array1<f64>,
    c_tilde: Array1<f64>,
}

pub struct GruRun {
    pub h_final: Array1<f64>,
    steps: Vec<GruStepCache>,
}

pub fn gru_forward(p: &GruParams, seq: &Array2<f64>) -> Result<GruRun> {
    if seq.nrows() == 0 {
        return Err(Error::invalid("sequence must be nonempty"));
    }
    let d = p.hidden_size();
    let mut h = Array1::<f64>::zeros(d);
    let mut steps = Vec::with_capacity(seq.nrows());
    for row in seq.rows() {
        let x = row.to_owned();
        check_input(p.input_width(), &x)?;
        let r = (p.w_r.dot(&x) + p.w_hr.dot(&h) + &p.b_r).mapv(sigmoid);
        let u = (p.w_u.dot(&x) + p.w_hu.dot(&h) + &p.b_u).mapv(sigmoid);
        let rh = &r * &h;
        let c_tilde = (p.w_c.dot(&x) + p.w_hc.dot(&rh) + &p.b_c).mapv(f64::tanh);
        let h_new = (1.0 - &u) * &h + &u * &c_tilde;
        steps.push(GruStepCache {
            x,
            h_prev: h,
            r,
            u,
            c_tilde,
        });
        h = h_new;
    }
    Ok(GruRun { h_final: h, steps })
}

/// Mean binary cross-entropy of the sigmoid head over final hidden states.
/// Probabilities are clamped to [1e-12, 1 - 1e-12] before the log.
fn bce(p: f64, y: f64) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

fn outer_add(acc: &mut Array2<f64>, a: &Array1<f64>, b: &Array1<f64>) {
    for (r, &av) in a.iter().enumerate() {
        if av == 0.0 {
            continue;
        }
        let mut row = acc.row_mut(r);
        row.scaled_add(av, b);
    }
}

/// Mean BCE loss and full parameter gradients for a batch of sequences, by
/// backpropagation through time.
pub fn lstm_loss_and_grads(
    p: &LstmParams,
    batch: &[Array2<f64>],
    labels: &[u8],
) -> Result<(f64, LstmParams)> {
    if batch.is_empty() || batch.len() != labels.len() {
        return Err(Error::invalid(
            "batch and labels must be nonempty and aligned",
        ));
    }
    let d = p.hidden_size();
    let k = p.input_width();
    let scale = 1.0 / batch.len() as f64;
    let mut grads = LstmParams::zeros(k, d);
    let mut loss = 0.0;

    for (seq, &label) in batch.iter().zip(labels) {
        let run = lstm_forward(p, seq)?;
        let y = f64::from(label);
        let logit = p.head_w.dot(&run.h_final) + p.head_b[0];
        let prob = sigmoid(logit);
        loss += bce(prob, y) * scale;

        let dlogit = (prob - y) * scale;
        grads.head_w.scaled_add(dlogit, &run.h_final);
        grads.head_b[0] += dlogit;

        let mut dh = &p.head_w * dlogit;
        let mut dc_next = Array1::<f64>::zeros(d);
        for step in run.steps.iter().rev() {
            let dtanh = 1.0 - &step.tanh_c * &step.tanh_c;
            let dc = &dc_next + &(&dh * &step.o * &dtanh);
            let do_ = &dh * &step.tanh_c;
            let di = &dc * &step.c_tilde;
            let df = &dc * &step.c_prev;
            let dct = &dc * &step.i;

            let da_i = &di * &step.i * &(1.0 - &step.i);
            let da_f = &df * &step.f * &(1.0 - &step.f);
            let da_o = &do_ * &step.o * &(1.0 - &step.o);
            let da_c = &dct * &(1.0 - &step.c_tilde * &step.c_tilde);

            outer_add(&mut grads.w_i, &da_i, &step.x);
            outer_add(&mut grads.w_f, &da_f, &step.x);
            outer_add(&mut grads.w_o, &da_o, &step.x);
            outer_add(&mut grads.w_c, &da_c, &step.x);
            outer_add(&mut grads.w_hi, &da_i, &step.h_prev);
            outer_add(&mut grads.w_hf, &da_f, &step.h_prev);
            outer_add(&mut grads.w_ho, &da_o, &step.h_prev);
            outer_add(&mut grads.w_hc, &da_c, &step.h_prev);
            grads.b_i += &da_i;
            grads.b_f += &da_f;
            grads.b_o += &da_o;
            grads.b_c += &da_c;

            dh = p.w_hi.t().dot(&da_i)
                + p.w_hf.t().dot(&da_f)
                + p.w_ho.t().dot(&da_o)
                + p.w_hc.t().dot(&da_c);
            dc_next = &dc * &step.f;
        }
    }
    Ok((loss, grads))
}

/// GRU counterpart of [`lstm_loss_and_grads`].
pub fn gru_loss_and_grads(
    p: &GruParams,
    batch: &[Array2<f64>],
    labels: &[u8],
) -> Result<(f64, GruParams)> {
    if batch.is_empty() || batch.len() != labels.len() {
        return Err(Error::invalid(
            "batch and labels must be nonempty and aligned",
        ));
    }
    let d = p.hidden_size();
    let k = p.input_width();
    let scale = 1.0 / batch.len() as f64;
    let mut grads = GruParams::zeros(k, d);
    let mut loss = 0.0;

    for (seq, &label) in batch.iter().zip(labels) {
        let run = gru_forward(p, seq)?;
        let y = f64::from(label);
        let logit = p.head_w.dot(&run.h_final) + p.head_b[0];
        let prob = sigmoid(logit);
        loss += bce(prob, y) * scale;

        let dlogit = (prob - y) * scale;
        grads.head_w.scaled_add(dlogit, &run.h_final);
        grads.head_b[0] += dlogit;

        let mut dh = &p.head_w * dlogit;
        for step in run.steps.iter().rev() {
            let du = &dh * &(&step.c_tilde - &step.h_prev);
            let dct = &dh * &step.u;
            let mut dh_prev = &dh * &(1.0 - &step.u);

            let da_c = &dct * &(1.0 - &step.c_tilde * &step.c_tilde);
            let rh = &step.r * &step.h_prev;
            outer_add(&mut grads.w_c, &da_c, &step.x);
            outer_add(&mut grads.w_hc, &da_c, &rh);
            grads.b_c += &da_c;

            let drh = p.w_hc.t().dot(&da_c);
            let dr = &drh * &step.h_prev;
            dh_prev += &(&drh * &step.r);

            let da_r = &dr * &step.r * &(1.0 - &step.r);
            let da_u = &du * &step.u * &(1.0 - &step.u);
            outer_add(&mut grads.w_r, &da_r, &step.x);
            outer_add(&mut grads.w_hr, &da_r, &step.h_prev);
            grads.b_r += &da_r;
            outer_add(&mut grads.w_u, &da_u, &step.x);
            outer_add(&mut grads.w_hu, &da_u, &step.h_prev);
            grads.b_u += &da_u;

            dh = dh_prev + p.w_hr.t().dot(&da_r) + p.w_hu.t().dot(&da_u);
        }
    }
    Ok((loss, grads))
}

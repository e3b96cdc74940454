//! Negative-sampling objective shared by skip-gram and paragraph vectors.

use super::matrix::SharedMatrix;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(x)` without overflow for large |x|.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Reusable buffers for one training thread.
#[derive(Debug, Default)]
pub struct Scratch {
    pub(crate) h: Vec<f64>,
    pub(crate) grad: Vec<f64>,
    pub(crate) rows: Vec<f64>,
    pub(crate) ctx: Vec<u32>,
    pub(crate) neg: Vec<u32>,
}

impl Scratch {
    pub fn new(dim: usize) -> Self {
        Scratch { h: vec![0.0; dim], grad: vec![0.0; dim], ..Default::default() }
    }
}

/// Loss `−ln σ(u_t·h) − Σ ln σ(−u_n·h)` for hidden vector `h`. Adds `∂L/∂h`
/// into `grad_h`. When `out_lr` is given, output rows take a gradient step;
/// all rows are read before any is written, so repeated ids get the exact
/// summed gradient.
pub(crate) fn ns_objective(
    h: &[f64],
    target: u32,
    negatives: &[u32],
    output: &SharedMatrix,
    out_lr: Option<f64>,
    grad_h: &mut [f64],
    rows: &mut Vec<f64>,
) -> f64 {
    let dim = h.len();
    let n = 1 + negatives.len();
    rows.resize(n * dim, 0.0);
    let ids = || std::iter::once(target).chain(negatives.iter().copied());
    for (j, id) in ids().enumerate() {
        output.read_row(id as usize, &mut rows[j * dim..(j + 1) * dim]);
    }
    let mut loss = 0.0;
    for (j, id) in ids().enumerate() {
        let u = &rows[j * dim..(j + 1) * dim];
        let s = dot(u, h);
        let (l, g) = if j == 0 { (-log_sigmoid(s), sigmoid(s) - 1.0) } else { (-log_sigmoid(-s), sigmoid(s)) };
        loss += l;
        for (gh, uv) in grad_h.iter_mut().zip(u) {
            *gh += g * uv;
        }
        if let Some(lr) = out_lr {
            output.add_scaled(id as usize, h, -lr * g);
        }
    }
    loss
}

pub(crate) fn sgns_step_with(
    input: &SharedMatrix,
    output: &SharedMatrix,
    center: u32,
    context: u32,
    negatives: &[u32],
    lr: f64,
    s: &mut Scratch,
) -> f64 {
    let dim = input.dim();
    s.h.resize(dim, 0.0);
    s.grad.clear();
    s.grad.resize(dim, 0.0);
    input.read_row(center as usize, &mut s.h);
    let loss = ns_objective(&s.h, context, negatives, output, Some(lr), &mut s.grad, &mut s.rows);
    input.add_scaled(center as usize, &s.grad, -lr);
    loss
}

/// One skip-gram update: the center's input vector predicts `context` against
/// `negatives`. Returns the loss before the update.
pub fn sgns_step(
    input: &SharedMatrix,
    output: &SharedMatrix,
    center: u32,
    context: u32,
    negatives: &[u32],
    lr: f64,
) -> f64 {
    sgns_step_with(input, output, center, context, negatives, lr, &mut Scratch::new(input.dim()))
}

/// Hidden vector for PV-DM: mean of the document vector and the context word
/// vectors. Returns the number of averaged vectors.
pub(crate) fn pvdm_hidden(doc: &[f64], ctx: &[u32], word_in: &SharedMatrix, h: &mut [f64], tmp: &mut Vec<f64>) -> usize {
    h.copy_from_slice(doc);
    tmp.resize(h.len(), 0.0);
    for &w in ctx {
        word_in.read_row(w as usize, tmp);
        for (a, b) in h.iter_mut().zip(tmp.iter()) {
            *a += b;
        }
    }
    let m = 1 + ctx.len();
    let inv = 1.0 / m as f64;
    h.iter_mut().for_each(|x| *x *= inv);
    m
}

/// One PV-DM (mean) update for document row `doc` predicting `center` from
/// context words `ctx`. Returns the loss before the update.
#[allow(clippy::too_many_arguments)]
pub fn pvdm_step(
    docs: &SharedMatrix,
    word_in: &SharedMatrix,
    word_out: &SharedMatrix,
    doc: usize,
    ctx: &[u32],
    center: u32,
    negatives: &[u32],
    lr: f64,
) -> f64 {
    pvdm_step_with(docs, word_in, word_out, doc, ctx, center, negatives, lr, &mut Scratch::new(docs.dim()))
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn pvdm_step_with(
    docs: &SharedMatrix,
    word_in: &SharedMatrix,
    word_out: &SharedMatrix,
    doc: usize,
    ctx: &[u32],
    center: u32,
    negatives: &[u32],
    lr: f64,
    s: &mut Scratch,
) -> f64 {
    let dim = docs.dim();
    let d = docs.row(doc);
    s.h.resize(dim, 0.0);
    let mut tmp = std::mem::take(&mut s.rows);
    let m = pvdm_hidden(&d, ctx, word_in, &mut s.h, &mut tmp);
    s.rows = tmp;
    s.grad.clear();
    s.grad.resize(dim, 0.0);
    let loss = ns_objective(&s.h, center, negatives, word_out, Some(lr), &mut s.grad, &mut s.rows);
    let scale = -lr / m as f64;
    docs.add_scaled(doc, &s.grad, scale);
    for &w in ctx {
        word_in.add_scaled(w as usize, &s.grad, scale);
    }
    loss
}

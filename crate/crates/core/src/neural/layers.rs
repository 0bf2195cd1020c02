//! LSTM cell, tanh dense layer and additive attention, each with the
//! exact backward pass over cached forward state.

use super::linalg::{add_acc, dot, matvec, matvec_acc, matvec_t_acc, outer_acc, sigmoid, softmax};
use super::Scalar;

pub(super) struct LstmWeights<'a, S> {
    pub w_x: &'a [S],
    pub w_h: &'a [S],
    pub b: &'a [S],
    pub input: usize,
    pub hidden: usize,
}

pub(super) struct LstmGrads<'a, S> {
    pub w_x: &'a mut [S],
    pub w_h: &'a mut [S],
    pub b: &'a mut [S],
}

/// Forward state of one LSTM step (gate order i, f, g, o).
#[derive(Debug, Clone)]
pub(super) struct LstmStepCache<S> {
    pub x: Vec<S>,
    pub h_prev: Vec<S>,
    pub c_prev: Vec<S>,
    pub i: Vec<S>,
    pub f: Vec<S>,
    pub g: Vec<S>,
    pub o: Vec<S>,
    pub tanh_c: Vec<S>,
    pub c: Vec<S>,
    pub h: Vec<S>,
}

#[derive(Debug, Clone)]
pub(super) struct LstmRun<S> {
    pub steps: Vec<LstmStepCache<S>>,
    pub hidden: usize,
}

impl<S: Scalar> LstmRun<S> {
    pub fn last_h(&self) -> &[S] {
        &self.steps.last().expect("non-empty run").h
    }
}

pub(super) fn lstm_step<S: Scalar>(
    w: &LstmWeights<S>,
    x: Vec<S>,
    h_prev: Vec<S>,
    c_prev: Vec<S>,
) -> LstmStepCache<S> {
    let h = w.hidden;
    let mut a = vec![S::zero(); 4 * h];
    matvec(w.w_x, 4 * h, w.input, &x, &mut a);
    matvec_acc(w.w_h, 4 * h, w.hidden, &h_prev, &mut a);
    add_acc(&mut a, w.b);

    let i: Vec<S> = a[..h].iter().map(|&v| sigmoid(v)).collect();
    let f: Vec<S> = a[h..2 * h].iter().map(|&v| sigmoid(v)).collect();
    let g: Vec<S> = a[2 * h..3 * h].iter().map(|&v| v.tanh()).collect();
    let o: Vec<S> = a[3 * h..4 * h].iter().map(|&v| sigmoid(v)).collect();

    let c: Vec<S> = (0..h).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
    let tanh_c: Vec<S> = c.iter().map(|&v| v.tanh()).collect();
    let h_out: Vec<S> = (0..h).map(|k| o[k] * tanh_c[k]).collect();

    LstmStepCache {
        x,
        h_prev,
        c_prev,
        i,
        f,
        g,
        o,
        tanh_c,
        c,
        h: h_out,
    }
}

/// Run over a step sequence from the zero state.
pub(super) fn lstm_forward<S: Scalar>(w: &LstmWeights<S>, xs: Vec<Vec<S>>) -> LstmRun<S> {
    let h = w.hidden;
    let mut steps = Vec::with_capacity(xs.len());
    let mut h_prev = vec![S::zero(); h];
    let mut c_prev = vec![S::zero(); h];
    for x in xs {
        let step = lstm_step(w, x, h_prev, c_prev);
        h_prev = step.h.clone();
        c_prev = step.c.clone();
        steps.push(step);
    }
    LstmRun { steps, hidden: h }
}

/// Backpropagation through time. `dh_steps[t]` is the external cotangent
/// arriving at step `t`'s hidden state; returns the input cotangent per
/// step. Parameter gradients accumulate into `grads`.
pub(super) fn lstm_backward<S: Scalar>(
    w: &LstmWeights<S>,
    grads: &mut LstmGrads<S>,
    run: &LstmRun<S>,
    dh_steps: &[Vec<S>],
) -> Vec<Vec<S>> {
    let h = run.hidden;
    let n = run.steps.len();
    debug_assert_eq!(dh_steps.len(), n);
    let mut dx_steps = vec![Vec::new(); n];
    let mut dh_next = vec![S::zero(); h];
    let mut dc_next = vec![S::zero(); h];
    let one = S::one();

    for t in (0..n).rev() {
        let s = &run.steps[t];
        let mut da = vec![S::zero(); 4 * h];
        for k in 0..h {
            let dh = dh_steps[t][k] + dh_next[k];
            let do_ = dh * s.tanh_c[k];
            let dc = dc_next[k] + dh * s.o[k] * (one - s.tanh_c[k] * s.tanh_c[k]);
            let di = dc * s.g[k];
            let df = dc * s.c_prev[k];
            let dg = dc * s.i[k];
            dc_next[k] = dc * s.f[k];
            da[k] = di * s.i[k] * (one - s.i[k]);
            da[h + k] = df * s.f[k] * (one - s.f[k]);
            da[2 * h + k] = dg * (one - s.g[k] * s.g[k]);
            da[3 * h + k] = do_ * s.o[k] * (one - s.o[k]);
        }
        outer_acc(grads.w_x, &da, &s.x);
        outer_acc(grads.w_h, &da, &s.h_prev);
        add_acc(grads.b, &da);

        let mut dx = vec![S::zero(); w.input];
        matvec_t_acc(w.w_x, 4 * h, w.input, &da, &mut dx);
        dx_steps[t] = dx;

        dh_next.fill(S::zero());
        matvec_t_acc(w.w_h, 4 * h, w.hidden, &da, &mut dh_next);
    }
    dx_steps
}

/// tanh dense layer cache.
#[derive(Debug, Clone)]
pub(super) struct DenseCache<S> {
    pub x: Vec<S>,
    pub out: Vec<S>,
    /// Skip the weight outer product on backward when the input was zero.
    pub x_is_zero: bool,
}

pub(super) fn dense_tanh_forward<S: Scalar>(
    weight: &[S],
    bias: &[S],
    x: Vec<S>,
) -> DenseCache<S> {
    let rows = bias.len();
    let cols = x.len();
    let x_is_zero = x.iter().all(|&v| v == S::zero());
    let mut pre = bias.to_vec();
    if !x_is_zero {
        matvec_acc(weight, rows, cols, &x, &mut pre);
    }
    let out: Vec<S> = pre.into_iter().map(|v| v.tanh()).collect();
    DenseCache { x, out, x_is_zero }
}

/// Returns the input cotangent.
pub(super) fn dense_tanh_backward<S: Scalar>(
    weight: &[S],
    gw: &mut [S],
    gb: &mut [S],
    cache: &DenseCache<S>,
    dout: &[S],
) -> Vec<S> {
    let rows = cache.out.len();
    let cols = cache.x.len();
    let one = S::one();
    let dpre: Vec<S> = dout
        .iter()
        .zip(&cache.out)
        .map(|(&d, &y)| d * (one - y * y))
        .collect();
    if !cache.x_is_zero {
        outer_acc(gw, &dpre, &cache.x);
    }
    add_acc(gb, &dpre);
    let mut dx = vec![S::zero(); cols];
    matvec_t_acc(weight, rows, cols, &dpre, &mut dx);
    dx
}

/// Additive self-attention over a hidden-state sequence:
/// `e_w = v' tanh(W h_w + b)`, `u = softmax(e)`, `out = sum_w u_w h_w`.
#[derive(Debug, Clone)]
pub(super) struct AttnCache<S> {
    pub ts: Vec<Vec<S>>,
    pub u: Vec<S>,
    pub out: Vec<S>,
}

pub(super) fn attention_forward<S: Scalar>(
    weight: &[S],
    bias: &[S],
    v: &[S],
    hs: &[Vec<S>],
) -> AttnCache<S> {
    let a = bias.len();
    let width = hs[0].len();
    let mut ts = Vec::with_capacity(hs.len());
    let mut energies = Vec::with_capacity(hs.len());
    for h in hs {
        let mut s = bias.to_vec();
        matvec_acc(weight, a, width, h, &mut s);
        let t: Vec<S> = s.into_iter().map(|x| x.tanh()).collect();
        energies.push(dot(v, &t));
        ts.push(t);
    }
    let u = softmax(&energies);
    let mut out = vec![S::zero(); width];
    for (uw, h) in u.iter().zip(hs) {
        for (o, &hv) in out.iter_mut().zip(h) {
            *o += *uw * hv;
        }
    }
    AttnCache { ts, u, out }
}

/// Returns the cotangent of each attended hidden state.
pub(super) fn attention_backward<S: Scalar>(
    weight: &[S],
    v: &[S],
    gw: &mut [S],
    gb: &mut [S],
    gv: &mut [S],
    cache: &AttnCache<S>,
    hs: &[Vec<S>],
    dout: &[S],
) -> Vec<Vec<S>> {
    let n = hs.len();
    let a = gb.len();
    let width = hs[0].len();
    let one = S::one();

    let du: Vec<S> = hs.iter().map(|h| dot(dout, h)).collect();
    let mut dh: Vec<Vec<S>> = cache
        .u
        .iter()
        .map(|&uw| dout.iter().map(|&d| uw * d).collect())
        .collect();

    // softmax backward
    let mix: S = cache
        .u
        .iter()
        .zip(&du)
        .map(|(&uw, &dw)| uw * dw)
        .fold(S::zero(), |x, y| x + y);
    let de: Vec<S> = cache
        .u
        .iter()
        .zip(&du)
        .map(|(&uw, &dw)| uw * (dw - mix))
        .collect();

    for w in 0..n {
        let ts = &cache.ts[w];
        // dv += de_w * ts_w ; ds = de_w * v (*) tanh'
        let mut ds = vec![S::zero(); a];
        for k in 0..a {
            gv[k] += de[w] * ts[k];
            ds[k] = de[w] * v[k] * (one - ts[k] * ts[k]);
        }
        outer_acc(gw, &ds, &hs[w]);
        add_acc(gb, &ds);
        matvec_t_acc(weight, a, width, &ds, &mut dh[w]);
    }
    dh
}

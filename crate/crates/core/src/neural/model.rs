//! Variant wiring: forward pass, cross-entropy loss and exact backward.
//!
//! Leading steps that carry no information at all (UNKNOWN previous crop
//! and a zero RS placeholder) are skipped, so a sequence padded with extra
//! empty history produces bit-identical logits. Zero RS placeholders inside
//! the informative span are still encoded; in a batch the window encoder
//! runs on the zero block once and its backward pass is deferred and run
//! once per chunk with the summed cotangent (backpropagation is linear in
//! the output cotangent for fixed forward state).

use rayon::prelude::*;

use super::layers::{
    attention_backward, attention_forward, dense_tanh_backward, dense_tanh_forward,
    lstm_backward, lstm_forward, AttnCache, DenseCache, LstmGrads, LstmRun, LstmWeights,
};
use super::linalg::{add_acc, log_sum_exp, matvec, matvec_t_acc, outer_acc, softmax};
use super::{Gradients, ModelParams, Scalar};
use crate::error::{Error, Result};

/// Batch elements per deterministic gradient chunk.
const GRAD_CHUNK: usize = 16;

/// One step of a model input sequence.
#[derive(Debug, Clone)]
pub struct ModelStep<S> {
    /// Previous-season crop code; `v` is the UNKNOWN token.
    pub prev_crop: u32,
    /// Flattened `n_windows x window_feats` block; `None` = zero placeholder.
    pub rs: Option<Vec<S>>,
}

/// A sequence plus context, ready for the network.
#[derive(Debug, Clone)]
pub struct ModelInput<S> {
    pub steps: Vec<ModelStep<S>>,
    /// Crop distribution context, length `v`.
    pub dist: Vec<S>,
    /// Fine label of the final step.
    pub label: u32,
}

impl<S: Scalar> ModelStep<S> {
    fn is_pad(&self, unknown: u32) -> bool {
        self.prev_crop == unknown
            && match &self.rs {
                None => true,
                Some(b) => b.iter().all(|&x| x == S::zero()),
            }
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOutput<S> {
    pub logits: Vec<S>,
    pub probs: Vec<S>,
    /// Index of the first processed step.
    pub first_step: usize,
    /// Attention weights per processed step (window variants only).
    pub attention: Vec<Option<Vec<S>>>,
}

/// Resolved tensor indices of one variant's layers.
struct Wiring {
    embed: Option<usize>,
    rs_dense: Option<usize>,
    win_fwd: Option<usize>,
    win_bwd: Option<usize>,
    attn: Option<usize>,
    year: Vec<usize>,
    fuse: Option<usize>,
    out: usize,
}

impl Wiring {
    fn resolve<S: Scalar>(p: &ModelParams<S>) -> Wiring {
        let year = (0..p.dims.year_layers as usize)
            .map(|l| p.tensor_index(&format!("year{l}.w_x")).expect("year layer"))
            .collect();
        Wiring {
            embed: p.tensor_index("embed.weight"),
            rs_dense: p.tensor_index("rs_dense.weight"),
            win_fwd: p.tensor_index("win_fwd.w_x"),
            win_bwd: p.tensor_index("win_bwd.w_x"),
            attn: p.tensor_index("attn.weight"),
            year,
            fuse: p.tensor_index("fuse1.weight"),
            out: p.tensor_index("out.weight").expect("out layer"),
        }
    }
}

fn lstm_w<'a, S: Scalar>(
    p: &'a ModelParams<S>,
    base: usize,
    input: usize,
    hidden: usize,
) -> LstmWeights<'a, S> {
    let t = p.tensors();
    LstmWeights {
        w_x: &t[base].data,
        w_h: &t[base + 1].data,
        b: &t[base + 2].data,
        input,
        hidden,
    }
}

fn lstm_g<S: Scalar>(g: &mut Gradients<S>, base: usize) -> LstmGrads<'_, S> {
    let (_, tail) = g.tensors.split_at_mut(base);
    let (wx, tail) = tail.split_first_mut().unwrap();
    let (wh, tail) = tail.split_first_mut().unwrap();
    let (b, _) = tail.split_first_mut().unwrap();
    LstmGrads {
        w_x: &mut wx.data,
        w_h: &mut wh.data,
        b: &mut b.data,
    }
}

/// (weight grad, bias grad) of a dense layer stored at `base`, `base + 1`.
fn dense_g<S: Scalar>(g: &mut Gradients<S>, base: usize) -> (&mut [S], &mut [S]) {
    let (_, tail) = g.tensors.split_at_mut(base);
    let (w, tail) = tail.split_first_mut().unwrap();
    let (b, _) = tail.split_first_mut().unwrap();
    (&mut w.data, &mut b.data)
}

/// Window biLSTM + attention encoding of one season's feature block.
struct WindowEnc<S> {
    fwd: LstmRun<S>,
    bwd: LstmRun<S>,
    hcat: Vec<Vec<S>>,
    attn: AttnCache<S>,
}

fn window_encode<S: Scalar>(
    p: &ModelParams<S>,
    w: &Wiring,
    flat: &[S],
) -> WindowEnc<S> {
    let dims = &p.dims;
    let n = dims.n_windows as usize;
    let wf = dims.window_feats as usize;
    let dw = dims.window_hidden as usize;
    let fwd_w = lstm_w(p, w.win_fwd.unwrap(), wf, dw);
    let bwd_w = lstm_w(p, w.win_bwd.unwrap(), wf, dw);

    let xs_fwd: Vec<Vec<S>> = (0..n).map(|i| flat[i * wf..(i + 1) * wf].to_vec()).collect();
    let xs_bwd: Vec<Vec<S>> = (0..n)
        .map(|i| {
            let j = n - 1 - i;
            flat[j * wf..(j + 1) * wf].to_vec()
        })
        .collect();
    let fwd = lstm_forward(&fwd_w, xs_fwd);
    let bwd = lstm_forward(&bwd_w, xs_bwd);

    let hcat: Vec<Vec<S>> = (0..n)
        .map(|i| {
            let mut h = Vec::with_capacity(2 * dw);
            h.extend_from_slice(&fwd.steps[i].h);
            h.extend_from_slice(&bwd.steps[n - 1 - i].h);
            h
        })
        .collect();

    let t = p.tensors();
    let ai = w.attn.unwrap();
    let attn = attention_forward(&t[ai].data, &t[ai + 1].data, &t[ai + 2].data, &hcat);
    WindowEnc {
        fwd,
        bwd,
        hcat,
        attn,
    }
}

fn window_encode_backward<S: Scalar>(
    p: &ModelParams<S>,
    w: &Wiring,
    g: &mut Gradients<S>,
    enc: &WindowEnc<S>,
    dout: &[S],
) {
    let dims = &p.dims;
    let n = dims.n_windows as usize;
    let wf = dims.window_feats as usize;
    let dw = dims.window_hidden as usize;
    let t = p.tensors();
    let ai = w.attn.unwrap();

    let dh = {
        let (_, tail) = g.tensors.split_at_mut(ai);
        let (gw, tail) = tail.split_first_mut().unwrap();
        let (gb, tail) = tail.split_first_mut().unwrap();
        let (gv, _) = tail.split_first_mut().unwrap();
        attention_backward(
            &t[ai].data,
            &t[ai + 2].data,
            &mut gw.data,
            &mut gb.data,
            &mut gv.data,
            &enc.attn,
            &enc.hcat,
            dout,
        )
    };

    let dh_fwd: Vec<Vec<S>> = dh.iter().map(|d| d[..dw].to_vec()).collect();
    let dh_bwd: Vec<Vec<S>> = (0..n).map(|b| dh[n - 1 - b][dw..].to_vec()).collect();

    let fwd_w = lstm_w(p, w.win_fwd.unwrap(), wf, dw);
    lstm_backward(&fwd_w, &mut lstm_g(g, w.win_fwd.unwrap()), &enc.fwd, &dh_fwd);
    let bwd_w = lstm_w(p, w.win_bwd.unwrap(), wf, dw);
    lstm_backward(&bwd_w, &mut lstm_g(g, w.win_bwd.unwrap()), &enc.bwd, &dh_bwd);
}

/// Per-step RS encoding cache.
enum RsCache<S> {
    None,
    Dense(DenseCache<S>),
    Win(Box<WindowEnc<S>>),
    /// Zero placeholder encoded via the shared zero-block context.
    WinZero,
}

struct SeqCache<S> {
    first_step: usize,
    rs: Vec<RsCache<S>>,
    year: Vec<LstmRun<S>>,
    fuse: Option<(DenseCache<S>, DenseCache<S>)>,
    logits: Vec<S>,
    probs: Vec<S>,
}

fn validate_input<S: Scalar>(p: &ModelParams<S>, input: &ModelInput<S>) -> Result<()> {
    let dims = &p.dims;
    let v = dims.v;
    if input.steps.is_empty() {
        return Err(Error::Data("empty input sequence".into()));
    }
    if input.label >= v {
        return Err(Error::Data(format!(
            "label {} out of range (V = {v})",
            input.label
        )));
    }
    for s in &input.steps {
        if s.prev_crop > v {
            return Err(Error::Data(format!(
                "crop token {} exceeds UNKNOWN token {v}",
                s.prev_crop
            )));
        }
        if let Some(rs) = &s.rs {
            if rs.len() != dims.flat_rs() {
                return Err(Error::Data(format!(
                    "feature block has {} values, expected {}",
                    rs.len(),
                    dims.flat_rs()
                )));
            }
        }
    }
    if p.variant.uses_dist() && input.dist.len() != v as usize {
        return Err(Error::Data(format!(
            "distribution vector has {} entries, expected {v}",
            input.dist.len()
        )));
    }
    Ok(())
}

fn year_inputs<S: Scalar>(
    p: &ModelParams<S>,
    w: &Wiring,
    input: &ModelInput<S>,
    first_step: usize,
    zero_enc: Option<&WindowEnc<S>>,
    rs_caches: &mut Vec<RsCache<S>>,
) -> Vec<Vec<S>> {
    let dims = &p.dims;
    let variant = p.variant;
    let e = dims.embed as usize;
    let mut xs = Vec::with_capacity(input.steps.len() - first_step);
    for step in &input.steps[first_step..] {
        let mut x: Vec<S> = Vec::with_capacity(variant.year_input(dims));
        if variant.uses_crop() {
            let emb = &p.tensors()[w.embed.unwrap()];
            let row = step.prev_crop as usize;
            x.extend_from_slice(&emb.data[row * e..(row + 1) * e]);
        }
        if variant.uses_rs_dense() {
            let ri = w.rs_dense.unwrap();
            let flat = step
                .rs
                .clone()
                .unwrap_or_else(|| vec![S::zero(); dims.flat_rs()]);
            let cache = dense_tanh_forward(
                &p.tensors()[ri].data,
                &p.tensors()[ri + 1].data,
                flat,
            );
            x.extend_from_slice(&cache.out);
            rs_caches.push(RsCache::Dense(cache));
        } else if variant.uses_window_net() {
            match (&step.rs, zero_enc) {
                (Some(flat), _) => {
                    let enc = window_encode(p, w, flat);
                    x.extend_from_slice(&enc.attn.out);
                    rs_caches.push(RsCache::Win(Box::new(enc)));
                }
                (None, Some(shared)) => {
                    x.extend_from_slice(&shared.attn.out);
                    rs_caches.push(RsCache::WinZero);
                }
                (None, None) => {
                    let zeros = vec![S::zero(); dims.flat_rs()];
                    let enc = window_encode(p, w, &zeros);
                    x.extend_from_slice(&enc.attn.out);
                    rs_caches.push(RsCache::Win(Box::new(enc)));
                }
            }
        } else {
            rs_caches.push(RsCache::None);
        }
        xs.push(x);
    }
    xs
}

fn forward_cached<S: Scalar>(
    p: &ModelParams<S>,
    w: &Wiring,
    input: &ModelInput<S>,
    zero_enc: Option<&WindowEnc<S>>,
) -> Result<SeqCache<S>> {
    validate_input(p, input)?;
    let dims = &p.dims;
    let variant = p.variant;
    let dy = dims.year_hidden as usize;
    let unknown = dims.v;

    let mut rs_caches = Vec::new();
    let (first_step, xs) = if variant.is_year_sequence() {
        let first = input
            .steps
            .iter()
            .position(|s| !s.is_pad(unknown))
            .unwrap_or(input.steps.len() - 1);
        let xs = year_inputs(p, w, input, first, zero_enc, &mut rs_caches);
        (first, xs)
    } else {
        // year-independent baseline: the target season's windows are the steps
        let n = dims.n_windows as usize;
        let wf = dims.window_feats as usize;
        let target = input.steps.last().unwrap();
        let flat = target
            .rs
            .clone()
            .unwrap_or_else(|| vec![S::zero(); dims.flat_rs()]);
        let xs = (0..n).map(|i| flat[i * wf..(i + 1) * wf].to_vec()).collect();
        (input.steps.len() - 1, xs)
    };

    let mut year_runs: Vec<LstmRun<S>> = Vec::with_capacity(w.year.len());
    let mut layer_in = xs;
    for (l, &base) in w.year.iter().enumerate() {
        let in_dim = if l == 0 {
            variant.year_input(dims)
        } else {
            dy
        };
        let weights = lstm_w(p, base, in_dim, dy);
        let run = lstm_forward(&weights, layer_in);
        layer_in = run.steps.iter().map(|s| s.h.clone()).collect();
        year_runs.push(run);
    }
    let h_final = year_runs.last().unwrap().last_h().to_vec();

    let fuse = if variant.uses_dist() {
        let fi = w.fuse.unwrap();
        let mut cat = Vec::with_capacity(dy + dims.v as usize);
        cat.extend_from_slice(&h_final);
        cat.extend_from_slice(&input.dist);
        let t = p.tensors();
        let c1 = dense_tanh_forward(&t[fi].data, &t[fi + 1].data, cat);
        let c2 = dense_tanh_forward(&t[fi + 2].data, &t[fi + 3].data, c1.out.clone());
        Some((c1, c2))
    } else {
        None
    };
    let head = match &fuse {
        Some((_, c2)) => &c2.out,
        None => &h_final,
    };

    let t = p.tensors();
    let v = dims.v as usize;
    let mut logits = t[w.out + 1].data.clone();
    matvec_t_add(&t[w.out].data, v, dy, head, &mut logits);
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite logits in forward pass".into()));
    }
    let probs = softmax(&logits);
    Ok(SeqCache {
        first_step,
        rs: rs_caches,
        year: year_runs,
        fuse,
        logits,
        probs,
    })
}

// out = W head + out (bias preloaded); thin wrapper keeping call sites tidy
fn matvec_t_add<S: Scalar>(w: &[S], rows: usize, cols: usize, x: &[S], out: &mut [S]) {
    let mut tmp = vec![S::zero(); rows];
    matvec(w, rows, cols, x, &mut tmp);
    add_acc(out, &tmp);
}

/// Backward for one sequence. `dlogits` must already carry the batch
/// scaling. Zero-placeholder window cotangents accumulate into `zero_dh`.
fn backward_cached<S: Scalar>(
    p: &ModelParams<S>,
    w: &Wiring,
    input: &ModelInput<S>,
    cache: &SeqCache<S>,
    dlogits: &[S],
    g: &mut Gradients<S>,
    zero_dh: &mut Option<Vec<S>>,
) {
    let dims = &p.dims;
    let variant = p.variant;
    let dy = dims.year_hidden as usize;
    let v = dims.v as usize;
    let e = dims.embed as usize;
    let t = p.tensors();

    // classifier head
    let head: &[S] = match &cache.fuse {
        Some((_, c2)) => &c2.out,
        None => cache.year.last().unwrap().last_h(),
    };
    let mut dhead = vec![S::zero(); dy];
    {
        let (gw, gb) = dense_g(g, w.out);
        outer_acc(gw, dlogits, head);
        add_acc(gb, dlogits);
    }
    matvec_t_acc(&t[w.out].data, v, dy, dlogits, &mut dhead);

    // distribution fusion
    let mut dh_final = dhead;
    if let Some((c1, c2)) = &cache.fuse {
        let fi = w.fuse.unwrap();
        let dz1 = {
            let (gw, gb) = dense_g(g, fi + 2);
            dense_tanh_backward(&t[fi + 2].data, gw, gb, c2, &dh_final)
        };
        let dcat = {
            let (gw, gb) = dense_g(g, fi);
            dense_tanh_backward(&t[fi].data, gw, gb, c1, &dz1)
        };
        dh_final = dcat[..dy].to_vec(); // dist cotangent is dropped (input data)
    }

    // year stack, top down
    let n_steps = cache.year[0].steps.len();
    let mut dh_steps: Vec<Vec<S>> = vec![vec![S::zero(); dy]; n_steps];
    *dh_steps.last_mut().unwrap() = dh_final;
    let mut dx_steps = Vec::new();
    for (l, &base) in w.year.iter().enumerate().rev() {
        let in_dim = if l == 0 {
            variant.year_input(dims)
        } else {
            dy
        };
        let weights = lstm_w(p, base, in_dim, dy);
        dx_steps = lstm_backward(&weights, &mut lstm_g(g, base), &cache.year[l], &dh_steps);
        if l > 0 {
            dh_steps = dx_steps.clone();
        }
    }

    if !variant.is_year_sequence() {
        return; // window inputs are data, nothing further to reach
    }

    // split layer-0 input cotangents into embedding and RS parts
    for (k, dx) in dx_steps.iter().enumerate() {
        let step = &input.steps[cache.first_step + k];
        let mut offset = 0;
        if variant.uses_crop() {
            let ei = w.embed.unwrap();
            let row = step.prev_crop as usize;
            let grow = &mut g.tensors[ei].data[row * e..(row + 1) * e];
            add_acc(grow, &dx[..e]);
            offset = e;
        }
        match &cache.rs[k] {
            RsCache::None => {}
            RsCache::Dense(c) => {
                let ri = w.rs_dense.unwrap();
                let (gw, gb) = dense_g(g, ri);
                dense_tanh_backward(&t[ri].data, gw, gb, c, &dx[offset..]);
            }
            RsCache::Win(enc) => {
                window_encode_backward(p, w, g, enc, &dx[offset..]);
            }
            RsCache::WinZero => {
                let acc = zero_dh.get_or_insert_with(|| {
                    vec![S::zero(); 2 * dims.window_hidden as usize]
                });
                add_acc(acc, &dx[offset..]);
            }
        }
    }
}

/// Forward pass without gradient bookkeeping.
pub fn predict_probs<S: Scalar>(
    params: &ModelParams<S>,
    input: &ModelInput<S>,
) -> Result<ForwardOutput<S>> {
    let wiring = Wiring::resolve(params);
    let cache = forward_cached(params, &wiring, input, None)?;
    let attention = cache
        .rs
        .iter()
        .map(|c| match c {
            RsCache::Win(enc) => Some(enc.attn.u.clone()),
            _ => None,
        })
        .collect();
    Ok(ForwardOutput {
        logits: cache.logits,
        probs: cache.probs,
        first_step: cache.first_step,
        attention,
    })
}

/// Mean cross-entropy over the batch plus exact gradients.
///
/// Work is split into fixed 16-element chunks processed in parallel and
/// reduced in chunk order, so results do not depend on the worker count.
pub fn loss_and_backward<S: Scalar>(
    params: &ModelParams<S>,
    batch: &[ModelInput<S>],
    grads: &mut Gradients<S>,
) -> Result<S> {
    if batch.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    grads.clear();
    let wiring = Wiring::resolve(params);
    let needs_zero_enc = params.variant.uses_window_net()
        && params.variant.is_year_sequence()
        && batch.iter().any(|b| b.steps.iter().any(|s| s.rs.is_none()));
    let zero_enc = if needs_zero_enc {
        let zeros = vec![S::zero(); params.dims.flat_rs()];
        Some(window_encode(params, &wiring, &zeros))
    } else {
        None
    };

    let inv_n = S::from_f64(1.0 / batch.len() as f64);
    let chunk_results: Result<Vec<(f64, Gradients<S>)>> = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut local = Gradients::zeros_like(params);
            let mut loss_sum = 0.0f64;
            let mut zero_dh: Option<Vec<S>> = None;
            for input in chunk {
                let cache = forward_cached(params, &wiring, input, zero_enc.as_ref())?;
                let lse = log_sum_exp(&cache.logits);
                loss_sum += (lse - cache.logits[input.label as usize]).to_f64();
                let mut dlogits = cache.probs.clone();
                dlogits[input.label as usize] -= S::one();
                for d in dlogits.iter_mut() {
                    *d *= inv_n;
                }
                backward_cached(
                    params,
                    &wiring,
                    input,
                    &cache,
                    &dlogits,
                    &mut local,
                    &mut zero_dh,
                );
            }
            if let (Some(dh), Some(enc)) = (&zero_dh, zero_enc.as_ref()) {
                window_encode_backward(params, &wiring, &mut local, enc, dh);
            }
            Ok((loss_sum, local))
        })
        .collect();

    let mut total = 0.0f64;
    for (loss_sum, local) in chunk_results? {
        total += loss_sum;
        grads.accumulate(&local);
    }
    let mean = total / batch.len() as f64;
    if !mean.is_finite() {
        return Err(Error::Numerical(format!("divergent loss: {mean}")));
    }
    Ok(S::from_f64(mean))
}

#[cfg(test)]
mod tests {
    use super::super::{init_params, Dims, Variant};
    use super::*;
    use crate::rng::substream;
    use rand::Rng;

    fn rand_block(dims: &Dims, seed: u64) -> Vec<f64> {
        let mut rng = substream(seed, 0xF00D, 0);
        (0..dims.flat_rs())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect()
    }

    fn input_with_history(dims: &Dims, t: usize, pads: usize) -> ModelInput<f64> {
        let steps: Vec<ModelStep<f64>> = (0..t)
            .map(|k| {
                if k < pads {
                    ModelStep {
                        prev_crop: dims.v,
                        rs: None,
                    }
                } else {
                    ModelStep {
                        prev_crop: (k as u32) % dims.v,
                        rs: Some(rand_block(dims, 100 + (k - pads) as u64)),
                    }
                }
            })
            .collect();
        ModelInput {
            steps,
            dist: vec![1.0 / dims.v as f64; dims.v as usize],
            label: 2 % dims.v,
        }
    }

    #[test]
    fn probs_sum_to_one_for_every_variant() {
        let dims = Dims::tiny();
        for variant in Variant::ALL {
            let p = init_params::<f64>(variant, dims, 5).unwrap();
            let input = input_with_history(&dims, 3, 1);
            let out = predict_probs(&p, &input).unwrap();
            let sum: f64 = out.probs.iter().sum();
            assert!((sum - 1.0).abs() < 1e-6, "{}: {sum}", variant.name());
            assert_eq!(out.probs.len(), dims.v as usize);
        }
    }

    #[test]
    fn forward_is_pure() {
        let dims = Dims::tiny();
        let p = init_params::<f64>(Variant::Final, dims, 8).unwrap();
        let input = input_with_history(&dims, 4, 1);
        let a = predict_probs(&p, &input).unwrap();
        let b = predict_probs(&p, &input).unwrap();
        assert_eq!(a.logits, b.logits);
    }

    #[test]
    fn leading_pads_do_not_change_logits() {
        let dims = Dims::tiny();
        for variant in Variant::ALL {
            let p = init_params::<f64>(variant, dims, 11).unwrap();
            // same informative tail, different amounts of leading padding
            let short = input_with_history(&dims, 3, 0);
            let mut long = ModelInput {
                steps: vec![
                    ModelStep {
                        prev_crop: dims.v,
                        rs: None,
                    };
                    4
                ],
                dist: short.dist.clone(),
                label: short.label,
            };
            long.steps.extend(short.steps.iter().cloned());
            let a = predict_probs(&p, &short).unwrap();
            let b = predict_probs(&p, &long).unwrap();
            assert_eq!(a.logits, b.logits, "{}", variant.name());
            if variant.is_year_sequence() {
                assert_eq!(b.first_step, 4, "{}", variant.name());
            }
        }
    }

    #[test]
    fn final_ignores_dist_when_fusion_columns_are_zero() {
        let dims = Dims::tiny();
        let mut p = init_params::<f64>(Variant::Final, dims, 3).unwrap();
        // zero the fuse1 columns that multiply the distribution vector
        let fi = p.tensor_index("fuse1.weight").unwrap();
        let dy = dims.year_hidden as usize;
        let v = dims.v as usize;
        {
            let t = &mut p.tensors_mut()[fi];
            for r in 0..dy {
                for c in dy..dy + v {
                    t.data[r * (dy + v) + c] = 0.0;
                }
            }
        }
        let mut a = input_with_history(&dims, 3, 0);
        let mut b = a.clone();
        a.dist = vec![0.0; v];
        a.dist[0] = 1.0;
        b.dist = vec![0.0; v];
        b.dist[v - 1] = 1.0;
        let pa = predict_probs(&p, &a).unwrap();
        let pb = predict_probs(&p, &b).unwrap();
        assert_eq!(pa.probs, pb.probs);
    }

    #[test]
    fn uniform_logits_loss_is_ln_v() {
        let dims = Dims::tiny();
        // zero-seeded params with zeroed output layer give uniform logits
        let mut p = init_params::<f64>(Variant::LstmCrop, dims, 1).unwrap();
        let oi = p.tensor_index("out.weight").unwrap();
        p.tensors_mut()[oi].fill(0.0);
        p.tensors_mut()[oi + 1].fill(0.0);
        let batch = vec![input_with_history(&dims, 3, 0)];
        let mut grads = Gradients::zeros_like(&p);
        let loss = loss_and_backward(&p, &batch, &mut grads).unwrap();
        assert!((loss - (dims.v as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn attention_weights_are_reported_for_window_variants() {
        let dims = Dims::tiny();
        let p = init_params::<f64>(Variant::HierMm, dims, 4).unwrap();
        let input = input_with_history(&dims, 3, 0);
        let out = predict_probs(&p, &input).unwrap();
        let traces: Vec<&Vec<f64>> = out.attention.iter().flatten().collect();
        assert_eq!(traces.len(), 3);
        for u in traces {
            assert_eq!(u.len(), dims.n_windows as usize);
            assert!((u.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn embedding_gradient_touches_only_seen_rows() {
        let dims = Dims::tiny();
        let p = init_params::<f64>(Variant::LstmCrop, dims, 6).unwrap();
        let input = ModelInput {
            steps: vec![
                ModelStep {
                    prev_crop: 1,
                    rs: None,
                },
                ModelStep {
                    prev_crop: 4,
                    rs: None,
                },
            ],
            dist: vec![0.0; dims.v as usize],
            label: 0,
        };
        let mut grads = Gradients::zeros_like(&p);
        loss_and_backward(&p, &[input], &mut grads).unwrap();
        let ei = p.tensor_index("embed.weight").unwrap();
        let e = dims.embed as usize;
        for row in 0..=dims.v as usize {
            let touched = grads.tensors[ei].data[row * e..(row + 1) * e]
                .iter()
                .any(|&g| g != 0.0);
            assert_eq!(touched, row == 1 || row == 4, "row {row}");
        }
    }

    #[test]
    fn batch_gradients_independent_of_worker_count() {
        let dims = Dims::tiny();
        let p = init_params::<f32>(Variant::Final, dims, 13).unwrap();
        let batch: Vec<ModelInput<f32>> = (0..40)
            .map(|i| {
                let inp = input_with_history(&dims, 3, (i % 3) as usize);
                ModelInput {
                    steps: inp
                        .steps
                        .iter()
                        .map(|s| ModelStep {
                            prev_crop: s.prev_crop,
                            rs: s.rs.as_ref().map(|r| r.iter().map(|&x| x as f32).collect()),
                        })
                        .collect(),
                    dist: inp.dist.iter().map(|&x| x as f32).collect(),
                    label: (i % dims.v) as u32,
                }
            })
            .collect();
        let mut g1 = Gradients::zeros_like(&p);
        let mut g2 = Gradients::zeros_like(&p);
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool2 = rayon::ThreadPoolBuilder::new().num_threads(2).build().unwrap();
        let l1 = pool1.install(|| loss_and_backward(&p, &batch, &mut g1)).unwrap();
        let l2 = pool2.install(|| loss_and_backward(&p, &batch, &mut g2)).unwrap();
        assert_eq!(l1, l2);
        for (a, b) in g1.tensors.iter().zip(&g2.tensors) {
            assert_eq!(a.data, b.data);
        }
    }
}

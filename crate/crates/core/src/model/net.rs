//! Forward and backward passes for the ranking network.
//!
//! The graph is fixed: bucket embeddings -> per-field squeeze/excitation ->
//! linear compression -> scenario/card gated modulation -> one extraction
//! level of shared plus task experts -> per-task towers whose hidden
//! pre-activations are rescaled by the profile adapter -> sigmoid click head
//! and softmax duration head. The raw-dense input mode (used by the plain
//! multi-expert baseline) feeds standardized counts plus context embeddings
//! and profile straight into the experts.
//!
//! `forward_trace` caches every intermediate; `backward` walks the same
//! stages in reverse and accumulates into one flat gradient vector aligned
//! with the parameter layout.

use crate::dense2sparse::DenseEncoder;
use crate::error::{Error, Result};
use crate::feature_store::{restricted_indices, SampleRow, PROFILE_FEATURES, TENSOR_CELLS};
use crate::nn::{
    affine_backward, affine_forward, bce_grad_wrt_logit, concat_cols, elu_backward, elu_forward,
    embedding_backward, embedding_forward, mul_forward, reduce_mean_per_field_backward,
    reduce_mean_per_field_forward, sigmoid_backward, sigmoid_forward, softmax_ce_grad_wrt_logit,
    softmax_rows_backward, softmax_rows_forward, split_cols, Tensor2D,
};

use super::layout::ParamLayout;
use super::{FeatureSet, FrozenTransform, InputMode, ModelConfig, N_TASKS, TASK_CLICK, TASK_DURATION};

/// Model-ready encoding of a slice of sample rows.
pub(crate) struct BatchInput {
    pub n: usize,
    /// Binned mode: global row ids into the feature embedding table,
    /// `field * table_rows + bucket`, row-major per sample.
    pub field_ids: Vec<usize>,
    /// Raw mode: standardized dense features.
    pub dense: Option<Tensor2D>,
    pub card_ids: Vec<usize>,
    pub scen_ids: Vec<usize>,
    pub profile: Tensor2D,
    pub labels_click: Vec<f64>,
    pub labels_duration: Vec<usize>,
}

pub(crate) fn build_batch(
    config: &ModelConfig,
    transform: &FrozenTransform,
    rows: &[SampleRow],
    indices: &[usize],
) -> Result<BatchInput> {
    let n = indices.len();
    let field_count = config.field_count();
    let table_rows = config.bucket_table_rows();
    let mut field_ids = Vec::new();
    let mut dense = None;
    if config.input_mode == InputMode::BinnedEmbeddings {
        field_ids.reserve(n * field_count);
    } else {
        dense = Some(Tensor2D::zeros(n, field_count));
    }
    let mut card_ids = Vec::with_capacity(n);
    let mut scen_ids = Vec::with_capacity(n);
    let mut profile = Tensor2D::zeros(n, PROFILE_FEATURES);
    let mut labels_click = Vec::with_capacity(n);
    let mut labels_duration = Vec::with_capacity(n);

    let mut raw = vec![0.0f64; field_count];
    for (slot, &ri) in indices.iter().enumerate() {
        let row = &rows[ri];
        if row.dense_features.len() != TENSOR_CELLS {
            return Err(Error::contract(format!(
                "sample row has {} dense features, expected the full {TENSOR_CELLS}",
                row.dense_features.len()
            )));
        }
        match config.feature_set {
            FeatureSet::Full => {
                for (r, &c) in raw.iter_mut().zip(&row.dense_features) {
                    *r = c as f64;
                }
            }
            FeatureSet::TargetOnly => {
                let keep = restricted_indices(row.context_scenario, row.context_card_type);
                for (r, &i) in raw.iter_mut().zip(keep.iter()) {
                    *r = row.dense_features[i] as f64;
                }
            }
        }
        match transform {
            FrozenTransform::Binned(enc) => {
                let ids = enc.encode(&raw)?;
                for (f, &id) in ids.iter().enumerate() {
                    let id = id as usize;
                    if id >= table_rows {
                        return Err(Error::contract(format!(
                            "bucket id {id} out of table range {table_rows}"
                        )));
                    }
                    field_ids.push(f * table_rows + id);
                }
            }
            FrozenTransform::Standardized(stats) => {
                if stats.n_features() != field_count {
                    return Err(Error::contract(format!(
                        "normalizer covers {} features, model expects {field_count}",
                        stats.n_features()
                    )));
                }
                let d = dense.as_mut().expect("raw mode allocates dense");
                for (f, &x) in raw.iter().enumerate() {
                    d.set(slot, f, stats.normalize(f, x));
                }
            }
        }
        card_ids.push(row.context_card_type.index());
        scen_ids.push(row.context_scenario.index());
        profile.row_mut(slot).copy_from_slice(&row.profile_features);
        labels_click.push(row.label_click as u8 as f64);
        let dur = row.label_duration_class as usize;
        if dur >= config.duration_classes {
            return Err(Error::contract(format!(
                "duration class {dur} out of range {}",
                config.duration_classes
            )));
        }
        labels_duration.push(dur);
    }

    Ok(BatchInput {
        n,
        field_ids,
        dense,
        card_ids,
        scen_ids,
        profile,
        labels_click,
        labels_duration,
    })
}

/// scaled[b, f*dim + d] = emb[b, f*dim + d] * exc[b, f].
pub(crate) fn scale_fields_forward(emb: &Tensor2D, exc: &Tensor2D, dim: usize) -> Tensor2D {
    let mut out = emb.clone();
    for r in 0..emb.rows {
        let e = exc.row(r);
        let row = out.row_mut(r);
        for f in 0..e.len() {
            for v in &mut row[f * dim..(f + 1) * dim] {
                *v *= e[f];
            }
        }
    }
    out
}

/// Returns (d_emb, d_exc) for [`scale_fields_forward`].
fn scale_fields_backward(
    emb: &Tensor2D,
    exc: &Tensor2D,
    grad_scaled: &Tensor2D,
    dim: usize,
) -> (Tensor2D, Tensor2D) {
    let mut d_emb = grad_scaled.clone();
    let mut d_exc = Tensor2D::zeros(exc.rows, exc.cols);
    for r in 0..emb.rows {
        let e = exc.row(r);
        let emb_row = emb.row(r);
        let g_row = grad_scaled.row(r);
        let de_row = d_exc.row_mut(r);
        let demb_row = d_emb.row_mut(r);
        for f in 0..e.len() {
            let mut acc = 0.0;
            for d in 0..dim {
                let i = f * dim + d;
                acc += g_row[i] * emb_row[i];
                demb_row[i] *= e[f];
            }
            de_row[f] = acc;
        }
    }
    (d_emb, d_exc)
}

/// mix = sum_k alpha[:, k] * experts[k], column weight broadcast over width.
fn mix_experts_forward(alpha: &Tensor2D, experts: &[&Tensor2D]) -> Tensor2D {
    let width = experts[0].cols;
    let mut out = Tensor2D::zeros(alpha.rows, width);
    for r in 0..alpha.rows {
        let a = alpha.row(r);
        let o = out.row_mut(r);
        for (k, e) in experts.iter().enumerate() {
            let w = a[k];
            for (slot, &x) in o.iter_mut().zip(e.row(r)) {
                *slot += w * x;
            }
        }
    }
    out
}

/// Returns (d_alpha, per-expert gradients) for [`mix_experts_forward`].
fn mix_experts_backward(
    alpha: &Tensor2D,
    experts: &[&Tensor2D],
    grad_mix: &Tensor2D,
) -> (Tensor2D, Vec<Tensor2D>) {
    let mut d_alpha = Tensor2D::zeros(alpha.rows, alpha.cols);
    let mut d_experts: Vec<Tensor2D> = experts
        .iter()
        .map(|e| Tensor2D::zeros(e.rows, e.cols))
        .collect();
    for r in 0..alpha.rows {
        let a = alpha.row(r);
        let g = grad_mix.row(r);
        for (k, e) in experts.iter().enumerate() {
            let er = e.row(r);
            let mut dot = 0.0;
            let de = d_experts[k].row_mut(r);
            for i in 0..g.len() {
                dot += g[i] * er[i];
                de[i] = a[k] * g[i];
            }
            d_alpha.set(r, k, dot);
        }
    }
    (d_alpha, d_experts)
}

/// Expert index order inside the parameter layout: shared experts first,
/// then click-task experts, then duration-task experts.
pub(crate) fn expert_block_names(config: &ModelConfig) -> Vec<String> {
    let mut names = Vec::new();
    for i in 0..config.n_shared_experts {
        names.push(format!("expert_shared{i}"));
    }
    for i in 0..config.n_task_experts {
        names.push(format!("expert_click{i}"));
    }
    for i in 0..config.n_task_experts {
        names.push(format!("expert_dur{i}"));
    }
    names
}

/// Global expert indices mixed by a task's gate: shared first, own second.
fn gate_expert_selection(config: &ModelConfig, task: usize) -> Vec<usize> {
    let s = config.n_shared_experts;
    let t = config.n_task_experts;
    let mut sel: Vec<usize> = (0..s).collect();
    let own_start = s + task * t;
    sel.extend(own_start..own_start + t);
    sel
}

pub(crate) struct Trace {
    // Binned-path intermediates (empty tensors in raw mode).
    pub emb: Tensor2D,
    pub squeeze: Tensor2D,
    pub exc_hidden: Tensor2D,
    pub excitation: Tensor2D,
    pub scaled: Tensor2D,
    pub compressed: Tensor2D,
    // Context.
    pub card_e: Tensor2D,
    pub scen_e: Tensor2D,
    pub ctx: Tensor2D,
    // Scenario gate.
    pub gate_hidden: Tensor2D,
    pub gate_sig: Tensor2D,
    /// Expert input: gated compressed vector, or the raw concat in dense mode.
    pub expert_input: Tensor2D,
    pub expert_out: Vec<Tensor2D>,
    pub ple_alpha: Vec<Tensor2D>,
    pub task_mix: Vec<Tensor2D>,
    // Towers: per task, per layer.
    pub tower_pre: Vec<Vec<Tensor2D>>,
    pub adapter_ctx: Tensor2D,
    pub adapter_hidden: Vec<Vec<Tensor2D>>,
    pub adapter_sig: Vec<Vec<Tensor2D>>,
    pub tower_post: Vec<Vec<Tensor2D>>,
    // Heads.
    pub click_logit: Tensor2D,
    pub p_click: Vec<f64>,
    pub dur_probs: Tensor2D,
}

pub(crate) fn forward_trace(
    config: &ModelConfig,
    layout: &ParamLayout,
    params: &[f64],
    input: &BatchInput,
) -> Result<Trace> {
    let n = input.n;
    let dim = config.embedding_dim;
    let empty = Tensor2D::zeros(0, 0);

    // Context embeddings are used by both input modes.
    let card_table = layout.tensor(params, "card_emb")?;
    let scen_table = layout.tensor(params, "scen_emb")?;
    let card_e = embedding_forward(&card_table, &input.card_ids, "card_emb")?;
    let scen_e = embedding_forward(&scen_table, &input.scen_ids, "scen_emb")?;
    let ctx = concat_cols(&[&card_e, &scen_e])?;

    let (emb, squeeze, exc_hidden, excitation, scaled, compressed);
    let (gate_hidden, gate_sig);
    let expert_input;
    match config.input_mode {
        InputMode::BinnedEmbeddings => {
            let table = layout.tensor(params, "feat_emb")?;
            let gathered = embedding_forward(&table, &input.field_ids, "feat_emb")?;
            // (n*fields, dim) row-major is exactly (n, fields*dim).
            emb = Tensor2D::from_vec(n, config.field_count() * dim, gathered.data)?;

            squeeze = reduce_mean_per_field_forward(&emb, dim)?;
            let w1 = layout.tensor(params, "senet_w1")?;
            let b1 = layout.slice(params, "senet_b1")?;
            exc_hidden = elu_forward(&affine_forward(&squeeze, &w1, b1, "senet_excite_hidden")?);
            let w2 = layout.tensor(params, "senet_w2")?;
            let b2 = layout.slice(params, "senet_b2")?;
            excitation = sigmoid_forward(&affine_forward(&exc_hidden, &w2, b2, "senet_excite_out")?);

            scaled = scale_fields_forward(&emb, &excitation, dim);
            let pw = layout.tensor(params, "proj_w")?;
            let pb = layout.slice(params, "proj_b")?;
            compressed = affine_forward(&scaled, &pw, pb, "compression_projection")?;

            if config.use_scenario_gate {
                let gw1 = layout.tensor(params, "gate_w1")?;
                let gb1 = layout.slice(params, "gate_b1")?;
                gate_hidden = elu_forward(&affine_forward(&ctx, &gw1, gb1, "scenario_gate_hidden")?);
                let gw2 = layout.tensor(params, "gate_w2")?;
                let gb2 = layout.slice(params, "gate_b2")?;
                gate_sig = sigmoid_forward(&affine_forward(&gate_hidden, &gw2, gb2, "scenario_gate_out")?);
                let g = gate_sig.map(|s| 2.0 * s);
                expert_input = mul_forward(&compressed, &g)?;
            } else {
                gate_hidden = empty.clone();
                gate_sig = empty.clone();
                expert_input = compressed.clone();
            }
        }
        InputMode::RawDense => {
            let dense = input
                .dense
                .as_ref()
                .ok_or_else(|| Error::contract("raw-dense mode needs a dense batch"))?;
            emb = empty.clone();
            squeeze = empty.clone();
            exc_hidden = empty.clone();
            excitation = empty.clone();
            scaled = empty.clone();
            compressed = empty.clone();
            gate_hidden = empty.clone();
            gate_sig = empty.clone();
            expert_input = concat_cols(&[dense, &card_e, &scen_e, &input.profile])?;
        }
    }

    // Experts.
    let mut expert_out = Vec::new();
    for name in expert_block_names(config) {
        let w = layout.tensor(params, &format!("{name}_w"))?;
        let b = layout.slice(params, &format!("{name}_b"))?;
        expert_out.push(elu_forward(&affine_forward(&expert_input, &w, b, &name)?));
    }

    // Per-task gates and mixes.
    let mut ple_alpha = Vec::new();
    let mut task_mix = Vec::new();
    for task in 0..N_TASKS {
        let gate_name = if task == TASK_CLICK { "ple_gate_click" } else { "ple_gate_dur" };
        let w = layout.tensor(params, &format!("{gate_name}_w"))?;
        let b = layout.slice(params, &format!("{gate_name}_b"))?;
        let alpha = softmax_rows_forward(&affine_forward(&expert_input, &w, b, gate_name)?);
        let sel = gate_expert_selection(config, task);
        let refs: Vec<&Tensor2D> = sel.iter().map(|&i| &expert_out[i]).collect();
        task_mix.push(mix_experts_forward(&alpha, &refs));
        ple_alpha.push(alpha);
    }

    // Towers with the profile adapter.
    let adapter_ctx = if config.use_profile_adapter {
        concat_cols(&[&input.profile, &card_e, &scen_e])?
    } else {
        empty.clone()
    };
    let mut tower_pre = vec![Vec::new(), Vec::new()];
    let mut adapter_hidden = vec![Vec::new(), Vec::new()];
    let mut adapter_sig = vec![Vec::new(), Vec::new()];
    let mut tower_post = vec![Vec::new(), Vec::new()];
    let mut tower_top = Vec::new();
    for task in 0..N_TASKS {
        let tname = if task == TASK_CLICK { "click" } else { "dur" };
        let mut h = task_mix[task].clone();
        for l in 0..config.tower_widths.len() {
            let w = layout.tensor(params, &format!("tower_{tname}_l{l}_w"))?;
            let b = layout.slice(params, &format!("tower_{tname}_l{l}_b"))?;
            let pre = affine_forward(&h, &w, b, &format!("tower_{tname}_l{l}"))?;
            let adapted = if config.use_profile_adapter {
                let aw1 = layout.tensor(params, &format!("adapter_{tname}_l{l}_w1"))?;
                let ab1 = layout.slice(params, &format!("adapter_{tname}_l{l}_b1"))?;
                let ah = elu_forward(&affine_forward(&adapter_ctx, &aw1, ab1, "adapter_hidden")?);
                let aw2 = layout.tensor(params, &format!("adapter_{tname}_l{l}_w2"))?;
                let ab2 = layout.slice(params, &format!("adapter_{tname}_l{l}_b2"))?;
                let asig = sigmoid_forward(&affine_forward(&ah, &aw2, ab2, "adapter_out")?);
                let a = asig.map(|s| 2.0 * s);
                let adapted = mul_forward(&pre, &a)?;
                adapter_hidden[task].push(ah);
                adapter_sig[task].push(asig);
                adapted
            } else {
                pre.clone()
            };
            h = elu_forward(&adapted);
            tower_pre[task].push(pre);
            tower_post[task].push(h.clone());
        }
        tower_top.push(h);
    }

    // Heads.
    let chw = layout.tensor(params, "click_head_w")?;
    let chb = layout.slice(params, "click_head_b")?;
    let click_logit = affine_forward(&tower_top[TASK_CLICK], &chw, chb, "click_head")?;
    let p_click: Vec<f64> = sigmoid_forward(&click_logit).data;
    let dhw = layout.tensor(params, "dur_head_w")?;
    let dhb = layout.slice(params, "dur_head_b")?;
    let dur_probs = softmax_rows_forward(&affine_forward(&tower_top[TASK_DURATION], &dhw, dhb, "dur_head")?);

    Ok(Trace {
        emb,
        squeeze,
        exc_hidden,
        excitation,
        scaled,
        compressed,
        card_e,
        scen_e,
        ctx,
        gate_hidden,
        gate_sig,
        expert_input,
        expert_out,
        ple_alpha,
        task_mix,
        tower_pre,
        adapter_ctx,
        adapter_hidden,
        adapter_sig,
        tower_post,
        click_logit,
        p_click,
        dur_probs,
    })
}

/// Mean click BCE and duration CE of a trace against the batch labels.
pub(crate) fn trace_losses(config: &ModelConfig, input: &BatchInput, trace: &Trace) -> (f64, f64) {
    let bce = crate::nn::bce_loss(&trace.p_click, &input.labels_click);
    let ce = crate::nn::softmax_ce_loss(
        &trace.dur_probs.data,
        config.duration_classes,
        &input.labels_duration,
    );
    (bce, ce)
}

pub(crate) fn backward(
    config: &ModelConfig,
    layout: &ParamLayout,
    params: &[f64],
    input: &BatchInput,
    trace: &Trace,
) -> Result<Vec<f64>> {
    let dim = config.embedding_dim;
    let mut grads = vec![0.0; layout.total];

    let mut acc = |grads: &mut Vec<f64>, name: &str, data: &[f64]| -> Result<()> {
        layout.accumulate(grads, name, data)
    };

    // Loss gradients at the logits.
    let dz_click = Tensor2D::from_vec(
        input.n,
        1,
        bce_grad_wrt_logit(&trace.p_click, &input.labels_click),
    )?;
    let mut dz_dur_data = softmax_ce_grad_wrt_logit(
        &trace.dur_probs.data,
        config.duration_classes,
        &input.labels_duration,
    );
    for g in dz_dur_data.iter_mut() {
        *g *= config.duration_loss_weight;
    }
    let dz_dur = Tensor2D::from_vec(input.n, config.duration_classes, dz_dur_data)?;

    // Heads.
    let last = config.tower_widths.len() - 1;
    let chw = layout.tensor(params, "click_head_w")?;
    let (dh_click, dw, db) = affine_backward(&trace.tower_post[TASK_CLICK][last], &chw, &dz_click)?;
    acc(&mut grads, "click_head_w", &dw.data)?;
    acc(&mut grads, "click_head_b", &db)?;
    let dhw = layout.tensor(params, "dur_head_w")?;
    let (dh_dur, dw, db) = affine_backward(&trace.tower_post[TASK_DURATION][last], &dhw, &dz_dur)?;
    acc(&mut grads, "dur_head_w", &dw.data)?;
    acc(&mut grads, "dur_head_b", &db)?;

    // Towers, reversed; adapter context gradient accumulates across layers.
    let mut d_adapter_ctx = if config.use_profile_adapter {
        Tensor2D::zeros(trace.adapter_ctx.rows, trace.adapter_ctx.cols)
    } else {
        Tensor2D::zeros(0, 0)
    };
    let mut d_mix = Vec::new();
    for task in 0..N_TASKS {
        let tname = if task == TASK_CLICK { "click" } else { "dur" };
        let mut dh = if task == TASK_CLICK { dh_click.clone() } else { dh_dur.clone() };
        for l in (0..config.tower_widths.len()).rev() {
            let d_adapted = elu_backward(&trace.tower_post[task][l], &dh);
            let pre = &trace.tower_pre[task][l];
            let d_pre = if config.use_profile_adapter {
                let asig = &trace.adapter_sig[task][l];
                let a = asig.map(|s| 2.0 * s);
                let d_pre = mul_forward(&d_adapted, &a)?;
                let d_a = mul_forward(&d_adapted, pre)?;
                // a = 2 sigma(z): da/dz = 2 sigma (1 - sigma).
                let mut d_az = d_a;
                for (g, &s) in d_az.data.iter_mut().zip(&asig.data) {
                    *g *= 2.0 * s * (1.0 - s);
                }
                let aw2 = layout.tensor(params, &format!("adapter_{tname}_l{l}_w2"))?;
                let (d_ah, dw2, db2) = affine_backward(&trace.adapter_hidden[task][l], &aw2, &d_az)?;
                acc(&mut grads, &format!("adapter_{tname}_l{l}_w2"), &dw2.data)?;
                acc(&mut grads, &format!("adapter_{tname}_l{l}_b2"), &db2)?;
                let d_ah_pre = elu_backward(&trace.adapter_hidden[task][l], &d_ah);
                let aw1 = layout.tensor(params, &format!("adapter_{tname}_l{l}_w1"))?;
                let (d_ctx_part, dw1, db1) = affine_backward(&trace.adapter_ctx, &aw1, &d_ah_pre)?;
                acc(&mut grads, &format!("adapter_{tname}_l{l}_w1"), &dw1.data)?;
                acc(&mut grads, &format!("adapter_{tname}_l{l}_b1"), &db1)?;
                for (slot, &g) in d_adapter_ctx.data.iter_mut().zip(&d_ctx_part.data) {
                    *slot += g;
                }
                d_pre
            } else {
                d_adapted
            };
            let w = layout.tensor(params, &format!("tower_{tname}_l{l}_w"))?;
            let below = if l == 0 { &trace.task_mix[task] } else { &trace.tower_post[task][l - 1] };
            let (d_below, dw, db) = affine_backward(below, &w, &d_pre)?;
            acc(&mut grads, &format!("tower_{tname}_l{l}_w"), &dw.data)?;
            acc(&mut grads, &format!("tower_{tname}_l{l}_b"), &db)?;
            dh = d_below;
        }
        d_mix.push(dh);
    }

    // PLE mixing and gates.
    let mut d_expert_out: Vec<Tensor2D> = trace
        .expert_out
        .iter()
        .map(|e| Tensor2D::zeros(e.rows, e.cols))
        .collect();
    let mut d_expert_input = Tensor2D::zeros(trace.expert_input.rows, trace.expert_input.cols);
    for task in 0..N_TASKS {
        let gate_name = if task == TASK_CLICK { "ple_gate_click" } else { "ple_gate_dur" };
        let sel = gate_expert_selection(config, task);
        let refs: Vec<&Tensor2D> = sel.iter().map(|&i| &trace.expert_out[i]).collect();
        let (d_alpha, d_sel) = mix_experts_backward(&trace.ple_alpha[task], &refs, &d_mix[task]);
        for (k, &i) in sel.iter().enumerate() {
            for (slot, &g) in d_expert_out[i].data.iter_mut().zip(&d_sel[k].data) {
                *slot += g;
            }
        }
        let d_logits = softmax_rows_backward(&trace.ple_alpha[task], &d_alpha);
        let w = layout.tensor(params, &format!("{gate_name}_w"))?;
        let (d_in, dw, db) = affine_backward(&trace.expert_input, &w, &d_logits)?;
        acc(&mut grads, &format!("{gate_name}_w"), &dw.data)?;
        acc(&mut grads, &format!("{gate_name}_b"), &db)?;
        for (slot, &g) in d_expert_input.data.iter_mut().zip(&d_in.data) {
            *slot += g;
        }
    }

    // Experts.
    for (i, name) in expert_block_names(config).into_iter().enumerate() {
        let d_post = elu_backward(&trace.expert_out[i], &d_expert_out[i]);
        let w = layout.tensor(params, &format!("{name}_w"))?;
        let (d_in, dw, db) = affine_backward(&trace.expert_input, &w, &d_post)?;
        acc(&mut grads, &format!("{name}_w"), &dw.data)?;
        acc(&mut grads, &format!("{name}_b"), &db)?;
        for (slot, &g) in d_expert_input.data.iter_mut().zip(&d_in.data) {
            *slot += g;
        }
    }

    // Context embedding gradients accumulate from several places.
    let mut d_card_e = Tensor2D::zeros(trace.card_e.rows, trace.card_e.cols);
    let mut d_scen_e = Tensor2D::zeros(trace.scen_e.rows, trace.scen_e.cols);
    if config.use_profile_adapter {
        let parts = split_cols(&d_adapter_ctx, &[PROFILE_FEATURES, dim, dim])?;
        add_into(&mut d_card_e, &parts[1]);
        add_into(&mut d_scen_e, &parts[2]);
    }

    match config.input_mode {
        InputMode::BinnedEmbeddings => {
            // Scenario gate.
            let d_compressed = if config.use_scenario_gate {
                let g = trace.gate_sig.map(|s| 2.0 * s);
                let d_compressed = mul_forward(&d_expert_input, &g)?;
                let d_g = mul_forward(&d_expert_input, &trace.compressed)?;
                let mut d_gz = d_g;
                for (gr, &s) in d_gz.data.iter_mut().zip(&trace.gate_sig.data) {
                    *gr *= 2.0 * s * (1.0 - s);
                }
                let gw2 = layout.tensor(params, "gate_w2")?;
                let (d_gh, dw2, db2) = affine_backward(&trace.gate_hidden, &gw2, &d_gz)?;
                acc(&mut grads, "gate_w2", &dw2.data)?;
                acc(&mut grads, "gate_b2", &db2)?;
                let d_gh_pre = elu_backward(&trace.gate_hidden, &d_gh);
                let gw1 = layout.tensor(params, "gate_w1")?;
                let (d_ctx, dw1, db1) = affine_backward(&trace.ctx, &gw1, &d_gh_pre)?;
                acc(&mut grads, "gate_w1", &dw1.data)?;
                acc(&mut grads, "gate_b1", &db1)?;
                let parts = split_cols(&d_ctx, &[dim, dim])?;
                add_into(&mut d_card_e, &parts[0]);
                add_into(&mut d_scen_e, &parts[1]);
                d_compressed
            } else {
                d_expert_input
            };

            // Compression projection.
            let pw = layout.tensor(params, "proj_w")?;
            let (d_scaled, dw, db) = affine_backward(&trace.scaled, &pw, &d_compressed)?;
            acc(&mut grads, "proj_w", &dw.data)?;
            acc(&mut grads, "proj_b", &db)?;

            // Excitation scaling.
            let (mut d_emb, d_exc) = scale_fields_backward(&trace.emb, &trace.excitation, &d_scaled, dim);
            let d_exc_z = sigmoid_backward(&trace.excitation, &d_exc);
            let sw2 = layout.tensor(params, "senet_w2")?;
            let (d_eh, dw2, db2) = affine_backward(&trace.exc_hidden, &sw2, &d_exc_z)?;
            acc(&mut grads, "senet_w2", &dw2.data)?;
            acc(&mut grads, "senet_b2", &db2)?;
            let d_eh_pre = elu_backward(&trace.exc_hidden, &d_eh);
            let sw1 = layout.tensor(params, "senet_w1")?;
            let (d_squeeze, dw1, db1) = affine_backward(&trace.squeeze, &sw1, &d_eh_pre)?;
            acc(&mut grads, "senet_w1", &dw1.data)?;
            acc(&mut grads, "senet_b1", &db1)?;

            // Squeeze broadcast.
            add_into(&mut d_emb, &reduce_mean_per_field_backward(&d_squeeze, dim));

            // Scatter into the feature embedding table: (n, fields*dim)
            // reads as (n*fields, dim) rows aligned with field_ids.
            let table_block = layout.block("feat_emb")?;
            let mut d_table = Tensor2D::zeros(table_block.rows, table_block.cols);
            let d_emb_rows = Tensor2D::from_vec(input.field_ids.len(), dim, d_emb.data)?;
            embedding_backward(&mut d_table, &input.field_ids, &d_emb_rows);
            acc(&mut grads, "feat_emb", &d_table.data)?;
        }
        InputMode::RawDense => {
            // dense input and profile take no gradient; context embeddings do.
            let parts = split_cols(
                &d_expert_input,
                &[config.field_count(), dim, dim, PROFILE_FEATURES],
            )?;
            add_into(&mut d_card_e, &parts[1]);
            add_into(&mut d_scen_e, &parts[2]);
        }
    }

    // Context embedding tables.
    let card_block = layout.block("card_emb")?;
    let mut d_card_table = Tensor2D::zeros(card_block.rows, card_block.cols);
    embedding_backward(&mut d_card_table, &input.card_ids, &d_card_e);
    acc(&mut grads, "card_emb", &d_card_table.data)?;
    let scen_block = layout.block("scen_emb")?;
    let mut d_scen_table = Tensor2D::zeros(scen_block.rows, scen_block.cols);
    embedding_backward(&mut d_scen_table, &input.scen_ids, &d_scen_e);
    acc(&mut grads, "scen_emb", &d_scen_table.data)?;

    Ok(grads)
}

fn add_into(dst: &mut Tensor2D, src: &Tensor2D) {
    debug_assert_eq!(dst.data.len(), src.data.len());
    for (d, &s) in dst.data.iter_mut().zip(&src.data) {
        *d += s;
    }
}

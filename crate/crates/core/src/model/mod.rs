//! The scenario-gated multi-task ranking model and its training loop.
//!
//! A checkpoint is self-contained: it carries the frozen feature transform
//! (normalizer and bin boundaries), every parameter block, the optimizer
//! state, and lineage metadata, so inference needs nothing else.

mod io;
mod layout;
mod net;

pub use layout::{ParamBlock, ParamLayout};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dense2sparse::DenseEncoder;
use crate::error::{Error, Result};
use crate::feature_store::{RESTRICTED_CELLS, TENSOR_CELLS};
use crate::nn::{AdamHyperParams, AdamState, Tensor2D};
use crate::synthgen::SECONDS_PER_DAY;

pub(crate) const N_TASKS: usize = 2;
pub(crate) const TASK_CLICK: usize = 0;
pub(crate) const TASK_DURATION: usize = 1;

/// Which behavior cells feed the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    /// The full cross-scenario tensor (120 fields).
    Full,
    /// Only the cells matching the row's own scenario and card (8 fields).
    TargetOnly,
}

/// How dense counts enter the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    /// Standardize, bin, and embed each field (the full dense-to-sparse path).
    BinnedEmbeddings,
    /// Standardized raw counts straight into the experts (baseline path).
    RawDense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub schema_version: u32,
    pub embedding_dim: usize,
    pub senet_reduction: usize,
    /// Bucket count for equal-frequency binning.
    pub n_buckets: usize,
    pub expert_width: usize,
    pub n_shared_experts: usize,
    pub n_task_experts: usize,
    pub tower_widths: Vec<usize>,
    pub duration_classes: usize,
    pub duration_loss_weight: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub gate_hidden: usize,
    pub adapter_hidden: usize,
    pub feature_set: FeatureSet,
    pub input_mode: InputMode,
    pub use_scenario_gate: bool,
    pub use_profile_adapter: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            schema_version: 1,
            embedding_dim: 8,
            senet_reduction: 16,
            n_buckets: 16,
            expert_width: 128,
            n_shared_experts: 2,
            n_task_experts: 2,
            tower_widths: vec![128, 64],
            duration_classes: 4,
            duration_loss_weight: 0.3,
            batch_size: 1024,
            learning_rate: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-6,
            gate_hidden: 32,
            adapter_hidden: 32,
            feature_set: FeatureSet::Full,
            input_mode: InputMode::BinnedEmbeddings,
            use_scenario_gate: true,
            use_profile_adapter: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 {
            return Err(Error::config("embedding_dim must be >= 1"));
        }
        if self.senet_reduction == 0 {
            return Err(Error::config("senet_reduction must be >= 1"));
        }
        if self.n_buckets < 2 {
            return Err(Error::config("n_buckets must be >= 2"));
        }
        if self.expert_width == 0 {
            return Err(Error::config("expert_width must be >= 1"));
        }
        if self.n_task_experts == 0 {
            return Err(Error::config("each task needs at least one expert"));
        }
        if self.tower_widths.is_empty() || self.tower_widths.contains(&0) {
            return Err(Error::config("tower_widths must be non-empty and positive"));
        }
        if self.duration_classes < 2 {
            return Err(Error::config("duration_classes must be >= 2"));
        }
        if self.duration_loss_weight < 0.0 {
            return Err(Error::config("duration_loss_weight must be >= 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::config("learning_rate must be > 0"));
        }
        if self.gate_hidden == 0 || self.adapter_hidden == 0 {
            return Err(Error::config("gate and adapter hidden widths must be >= 1"));
        }
        Ok(())
    }

    pub fn field_count(&self) -> usize {
        match self.feature_set {
            FeatureSet::Full => TENSOR_CELLS,
            FeatureSet::TargetOnly => RESTRICTED_CELLS,
        }
    }

    /// Rows per field in the bucket embedding table: ids run 0..=n_buckets
    /// (the reserved zero bucket plus up to B quantile buckets).
    pub fn bucket_table_rows(&self) -> usize {
        self.n_buckets + 1
    }

    pub fn senet_hidden(&self) -> usize {
        (self.field_count() / self.senet_reduction).max(1)
    }

    /// One-third compression of the concatenated field embeddings.
    pub fn compressed_dim(&self) -> usize {
        (self.field_count() * self.embedding_dim / 3).max(1)
    }

    /// Width of the expert input vector.
    pub fn expert_input_dim(&self) -> usize {
        match self.input_mode {
            InputMode::BinnedEmbeddings => self.compressed_dim(),
            InputMode::RawDense => {
                self.field_count()
                    + 2 * self.embedding_dim
                    + crate::feature_store::PROFILE_FEATURES
            }
        }
    }

    pub fn adam_hyper_params(&self) -> AdamHyperParams {
        AdamHyperParams {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
        }
    }
}

/// Hex-truncated SHA-256 of the canonical config JSON.
pub fn config_hash(config: &ModelConfig) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    let digest = Sha256::digest(json.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// The frozen feature transform a checkpoint carries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FrozenTransform {
    Binned(DenseEncoder),
    Standardized(crate::dense2sparse::NormStats),
}

impl FrozenTransform {
    pub fn n_features(&self) -> usize {
        match self {
            FrozenTransform::Binned(enc) => enc.n_features(),
            FrozenTransform::Standardized(stats) => stats.n_features(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lineage {
    /// Day index the training data ended on; -1 for a fresh initialization.
    pub created_day: i64,
    pub parent_id: String,
    pub accepted: bool,
}

impl Lineage {
    pub fn root() -> Lineage {
        Lineage {
            created_day: -1,
            parent_id: "none".into(),
            accepted: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub p_click: f64,
    pub duration_probs: Vec<f64>,
}

/// Complete model state: parameters, optimizer state, frozen transform, and
/// lineage.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub layout: ParamLayout,
    pub params: Vec<f64>,
    pub adam: AdamState,
    pub transform: FrozenTransform,
    pub lineage: Lineage,
}

fn build_layout(config: &ModelConfig) -> ParamLayout {
    let mut l = ParamLayout::default();
    let f = config.field_count();
    let d = config.embedding_dim;
    let c = config.compressed_dim();
    let ein = config.expert_input_dim();

    if config.input_mode == InputMode::BinnedEmbeddings {
        l.push("feat_emb", f * config.bucket_table_rows(), d);
    }
    l.push("card_emb", crate::domain::CardType::COUNT, d);
    l.push("scen_emb", crate::domain::Scenario::ALL.len(), d);
    if config.input_mode == InputMode::BinnedEmbeddings {
        let h = config.senet_hidden();
        l.push("senet_w1", f, h);
        l.push("senet_b1", 1, h);
        l.push("senet_w2", h, f);
        l.push("senet_b2", 1, f);
        l.push("proj_w", f * d, c);
        l.push("proj_b", 1, c);
        if config.use_scenario_gate {
            l.push("gate_w1", 2 * d, config.gate_hidden);
            l.push("gate_b1", 1, config.gate_hidden);
            l.push("gate_w2", config.gate_hidden, c);
            l.push("gate_b2", 1, c);
        }
    }
    for name in net::expert_block_names(config) {
        l.push(format!("{name}_w"), ein, config.expert_width);
        l.push(format!("{name}_b"), 1, config.expert_width);
    }
    let gate_cols = config.n_shared_experts + config.n_task_experts;
    l.push("ple_gate_click_w", ein, gate_cols);
    l.push("ple_gate_click_b", 1, gate_cols);
    l.push("ple_gate_dur_w", ein, gate_cols);
    l.push("ple_gate_dur_b", 1, gate_cols);
    for (task, tname) in [(TASK_CLICK, "click"), (TASK_DURATION, "dur")] {
        let _ = task;
        let mut input = config.expert_width;
        for (i, &w) in config.tower_widths.iter().enumerate() {
            l.push(format!("tower_{tname}_l{i}_w"), input, w);
            l.push(format!("tower_{tname}_l{i}_b"), 1, w);
            if config.use_profile_adapter {
                let a_in = crate::feature_store::PROFILE_FEATURES + 2 * d;
                l.push(format!("adapter_{tname}_l{i}_w1"), a_in, config.adapter_hidden);
                l.push(format!("adapter_{tname}_l{i}_b1"), 1, config.adapter_hidden);
                l.push(format!("adapter_{tname}_l{i}_w2"), config.adapter_hidden, w);
                l.push(format!("adapter_{tname}_l{i}_b2"), 1, w);
            }
            input = w;
        }
    }
    let last = *config.tower_widths.last().expect("validated non-empty");
    l.push("click_head_w", last, 1);
    l.push("click_head_b", 1, 1);
    l.push("dur_head_w", last, config.duration_classes);
    l.push("dur_head_b", 1, config.duration_classes);
    l
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum InitKind {
    Embedding,
    Zero,
    Glorot,
}

fn init_kind(name: &str) -> InitKind {
    if name.ends_with("_b") || name.ends_with("_b1") || name.ends_with("_b2") {
        return InitKind::Zero;
    }
    // Gate networks start as the identity: zero pre-activation makes every
    // multiplicative gate exactly one.
    if name == "gate_w2" || (name.starts_with("adapter_") && name.ends_with("_w2")) {
        return InitKind::Zero;
    }
    if name.ends_with("emb") {
        return InitKind::Embedding;
    }
    InitKind::Glorot
}

/// Deterministic initialization: embeddings N(0, 0.01), affine weights
/// Glorot-uniform, biases zero, gate/adapter output layers zero.
pub fn init_model(config: &ModelConfig, transform: FrozenTransform, seed: u64) -> Result<Checkpoint> {
    config.validate()?;
    if transform.n_features() != config.field_count() {
        return Err(Error::config(format!(
            "transform covers {} features, model expects {}",
            transform.n_features(),
            config.field_count()
        )));
    }
    if matches!(
        (&transform, config.input_mode),
        (FrozenTransform::Standardized(_), InputMode::BinnedEmbeddings)
            | (FrozenTransform::Binned(_), InputMode::RawDense)
    ) {
        return Err(Error::config("frozen transform kind does not match the input mode"));
    }
    let layout = build_layout(config);
    let mut params = vec![0.0; layout.total];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let emb_dist = Normal::new(0.0, 0.01).expect("embedding init distribution");
    for block in &layout.blocks {
        match init_kind(&block.name) {
            InitKind::Zero => {}
            InitKind::Embedding => {
                for slot in &mut params[block.range()] {
                    *slot = emb_dist.sample(&mut rng);
                }
            }
            InitKind::Glorot => {
                let bound = (6.0 / (block.rows + block.cols) as f64).sqrt();
                for slot in &mut params[block.range()] {
                    *slot = rng.gen_range(-bound..bound);
                }
            }
        }
    }
    let adam = AdamState::new(layout.total);
    Ok(Checkpoint {
        config: config.clone(),
        layout,
        params,
        adam,
        transform,
        lineage: Lineage::root(),
    })
}

impl Checkpoint {
    pub fn config_hash(&self) -> String {
        config_hash(&self.config)
    }

    /// Stable identifier used in decision logs and checkpoint file names.
    pub fn id(&self) -> String {
        let hash = self.config_hash();
        if self.lineage.created_day < 0 {
            format!("init-{hash}")
        } else {
            format!(
                "d{}-{}-{}",
                self.lineage.created_day,
                hash,
                if self.lineage.accepted { "acc" } else { "rej" }
            )
        }
    }

    pub fn n_params(&self) -> usize {
        self.layout.total
    }

    /// Full forward pass over sample rows (always the full-width rows from
    /// the feature store; target restriction happens internally when the
    /// config asks for it). Rows are encoded with the checkpoint's own
    /// frozen transform.
    pub fn forward(&self, rows: &[crate::feature_store::SampleRow]) -> Result<Vec<Prediction>> {
        let mut out = Vec::with_capacity(rows.len());
        let chunk = self.config.batch_size.max(1);
        let mut indices: Vec<usize> = Vec::new();
        let mut start = 0;
        while start < rows.len() {
            let end = (start + chunk).min(rows.len());
            indices.clear();
            indices.extend(start..end);
            let input = net::build_batch(&self.config, &self.transform, rows, &indices)?;
            let trace = net::forward_trace(&self.config, &self.layout, &self.params, &input)?;
            for (i, &p) in trace.p_click.iter().enumerate() {
                out.push(Prediction {
                    p_click: p,
                    duration_probs: trace.dur_probs.row(i).to_vec(),
                });
            }
            start = end;
        }
        Ok(out)
    }

    /// Click probabilities only (the ranking/calibration surface).
    pub fn predict_ctr(&self, rows: &[crate::feature_store::SampleRow]) -> Result<Vec<f64>> {
        Ok(self.forward(rows)?.into_iter().map(|p| p.p_click).collect())
    }

    /// Squeeze-excitation reweighting plus the one-third linear compression.
    /// `field_embeddings` is `(batch, field_count * embedding_dim)` with each
    /// field's block contiguous.
    pub fn senet_compress(&self, field_embeddings: &Tensor2D) -> Result<Tensor2D> {
        use crate::nn::*;
        let d = self.config.embedding_dim;
        if field_embeddings.cols != self.config.field_count() * d {
            return Err(Error::contract(format!(
                "senet_compress expects {} columns, got {}",
                self.config.field_count() * d,
                field_embeddings.cols
            )));
        }
        let squeeze = reduce_mean_per_field_forward(field_embeddings, d)?;
        let w1 = self.layout.tensor(&self.params, "senet_w1")?;
        let b1 = self.layout.slice(&self.params, "senet_b1")?;
        let hidden = elu_forward(&affine_forward(&squeeze, &w1, b1, "senet_excite_hidden")?);
        let w2 = self.layout.tensor(&self.params, "senet_w2")?;
        let b2 = self.layout.slice(&self.params, "senet_b2")?;
        let excitation = sigmoid_forward(&affine_forward(&hidden, &w2, b2, "senet_excite_out")?);
        let scaled = net::scale_fields_forward(field_embeddings, &excitation, d);
        let pw = self.layout.tensor(&self.params, "proj_w")?;
        let pb = self.layout.slice(&self.params, "proj_b")?;
        affine_forward(&scaled, &pw, pb, "compression_projection")
    }

    /// Card/scenario gated modulation: g = 2 sigmoid(mlp(card ++ scenario)),
    /// output = g ⊙ compressed. Every gate value is strictly inside (0, 2).
    pub fn scenario_gate(
        &self,
        compressed: &Tensor2D,
        card_emb: &Tensor2D,
        scen_emb: &Tensor2D,
    ) -> Result<Tensor2D> {
        use crate::nn::*;
        if !self.config.use_scenario_gate {
            return Ok(compressed.clone());
        }
        let ctx = concat_cols(&[card_emb, scen_emb])?;
        let w1 = self.layout.tensor(&self.params, "gate_w1")?;
        let b1 = self.layout.slice(&self.params, "gate_b1")?;
        let hidden = elu_forward(&affine_forward(&ctx, &w1, b1, "scenario_gate_hidden")?);
        let w2 = self.layout.tensor(&self.params, "gate_w2")?;
        let b2 = self.layout.slice(&self.params, "gate_b2")?;
        let sig = sigmoid_forward(&affine_forward(&hidden, &w2, b2, "scenario_gate_out")?);
        mul_forward(compressed, &sig.map(|s| 2.0 * s))
    }

    /// One extraction level: shared experts feed both tasks, task experts
    /// feed their own, and a per-task softmax gate mixes them. Returns one
    /// representation per task (click, duration).
    pub fn ple_layer(&self, gated: &Tensor2D) -> Result<Vec<Tensor2D>> {
        use crate::nn::*;
        let mut experts = Vec::new();
        for name in net::expert_block_names(&self.config) {
            let w = self.layout.tensor(&self.params, &format!("{name}_w"))?;
            let b = self.layout.slice(&self.params, &format!("{name}_b"))?;
            experts.push(elu_forward(&affine_forward(gated, &w, b, &name)?));
        }
        let mut out = Vec::new();
        for (task, gate_name) in [(TASK_CLICK, "ple_gate_click"), (TASK_DURATION, "ple_gate_dur")] {
            let w = self.layout.tensor(&self.params, &format!("{gate_name}_w"))?;
            let b = self.layout.slice(&self.params, &format!("{gate_name}_b"))?;
            let alpha = softmax_rows_forward(&affine_forward(gated, &w, b, gate_name)?);
            let s = self.config.n_shared_experts;
            let t = self.config.n_task_experts;
            let mut mixed = Tensor2D::zeros(gated.rows, self.config.expert_width);
            for k in 0..s + t {
                let expert = if k < s { &experts[k] } else { &experts[s + task * t + (k - s)] };
                for r in 0..mixed.rows {
                    let a = alpha.get(r, k);
                    for (slot, &x) in mixed.row_mut(r).iter_mut().zip(expert.row(r)) {
                        *slot += a * x;
                    }
                }
            }
            out.push(mixed);
        }
        Ok(out)
    }

    /// Profile-adapter multiplier for one tower layer:
    /// a = 2 sigmoid(mlp(profile ++ card ++ scenario)), applied to the
    /// layer's pre-activation.
    pub fn profile_adapt(
        &self,
        task: usize,
        layer: usize,
        hidden_pre: &Tensor2D,
        profile: &Tensor2D,
        card_emb: &Tensor2D,
        scen_emb: &Tensor2D,
    ) -> Result<Tensor2D> {
        use crate::nn::*;
        if !self.config.use_profile_adapter {
            return Ok(hidden_pre.clone());
        }
        let tname = if task == TASK_CLICK { "click" } else { "dur" };
        let ctx = concat_cols(&[profile, card_emb, scen_emb])?;
        let w1 = self.layout.tensor(&self.params, &format!("adapter_{tname}_l{layer}_w1"))?;
        let b1 = self.layout.slice(&self.params, &format!("adapter_{tname}_l{layer}_b1"))?;
        let hidden = elu_forward(&affine_forward(&ctx, &w1, b1, "adapter_hidden")?);
        let w2 = self.layout.tensor(&self.params, &format!("adapter_{tname}_l{layer}_w2"))?;
        let b2 = self.layout.slice(&self.params, &format!("adapter_{tname}_l{layer}_b2"))?;
        let sig = sigmoid_forward(&affine_forward(&hidden, &w2, b2, "adapter_out")?);
        mul_forward(hidden_pre, &sig.map(|s| 2.0 * s))
    }

    /// A copy of this checkpoint with the scenario gate and profile adapter
    /// removed; every parameter block both variants share is copied as-is.
    pub fn strip_gates(&self) -> Result<Checkpoint> {
        let mut cfg = self.config.clone();
        cfg.use_scenario_gate = false;
        cfg.use_profile_adapter = false;
        let mut stripped = init_model(&cfg, self.transform.clone(), 0)?;
        for block in &stripped.layout.blocks.clone() {
            if self.layout.find(&block.name).is_some() {
                let src = self.layout.slice(&self.params, &block.name)?.to_vec();
                stripped
                    .layout
                    .slice_mut(&mut stripped.params, &block.name)?
                    .copy_from_slice(&src);
            }
        }
        stripped.lineage = self.lineage.clone();
        Ok(stripped)
    }

    /// Day index covering the given timestamp; used to tag lineage.
    pub fn day_of_timestamp(ts: i64) -> i64 {
        ts.div_euclid(SECONDS_PER_DAY)
    }
}

/// Outcome of a training run: the new checkpoint plus the per-epoch mean
/// loss (click BCE + weighted duration CE).
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub checkpoint: Checkpoint,
    pub epoch_losses: Vec<f64>,
}

fn shuffle_seed(seed: u64, epoch: usize) -> u64 {
    // splitmix-style mix so each epoch gets an independent permutation.
    let mut x = seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x ^= x >> 27;
    x
}

/// Minimizes mean BCE(click) + weight * CE(duration) with Adam, shuffling
/// rows deterministically per (seed, epoch). The returned checkpoint's
/// lineage parent is the initial checkpoint; zero epochs returns an exact
/// copy.
pub fn train(
    rows: &[crate::feature_store::SampleRow],
    init: &Checkpoint,
    epochs: usize,
    seed: u64,
) -> Result<TrainRun> {
    if rows.is_empty() && epochs > 0 {
        return Err(Error::contract("train needs at least one row"));
    }
    let mut ckpt = init.clone();
    ckpt.lineage = Lineage {
        created_day: init.lineage.created_day,
        parent_id: init.id(),
        accepted: false,
    };
    let hp = ckpt.config.adam_hyper_params();
    let lambda = ckpt.config.duration_loss_weight;
    let mut epoch_losses = Vec::with_capacity(epochs);
    let mut indices: Vec<usize> = (0..rows.len()).collect();
    for epoch in 0..epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed(seed, epoch));
        indices.shuffle(&mut rng);
        let mut loss_acc = 0.0;
        let mut n_acc = 0usize;
        for (batch_idx, batch) in indices.chunks(ckpt.config.batch_size).enumerate() {
            let step = || -> Result<f64> {
                let input = net::build_batch(&ckpt.config, &ckpt.transform, rows, batch)?;
                let trace = net::forward_trace(&ckpt.config, &ckpt.layout, &ckpt.params, &input)?;
                let (bce, ce) = net::trace_losses(&ckpt.config, &input, &trace);
                let grads = net::backward(&ckpt.config, &ckpt.layout, &ckpt.params, &input, &trace)?;
                ckpt.adam.step(&mut ckpt.params, &grads, &hp)?;
                Ok(bce + lambda * ce)
            };
            let loss = step().map_err(|e| match e {
                Error::Numeric { layer, detail } => Error::Numeric {
                    layer,
                    detail: format!("epoch {epoch} batch {batch_idx}: {detail}"),
                },
                other => other,
            })?;
            loss_acc += loss * batch.len() as f64;
            n_acc += batch.len();
        }
        epoch_losses.push(loss_acc / n_acc.max(1) as f64);
    }
    Ok(TrainRun {
        checkpoint: ckpt,
        epoch_losses,
    })
}

/// Closed-form parameter count for a config; checked against the layout in
/// tests and useful for sizing.
pub fn expected_param_count(config: &ModelConfig) -> usize {
    build_layout(config).total
}

/// Fits the frozen transform the config calls for on training rows: counts
/// are restricted per the feature set, then standardized, then (in binned
/// mode) equal-frequency binned with the reserved zero bucket.
pub fn fit_transform(
    rows: &[crate::feature_store::SampleRow],
    config: &ModelConfig,
) -> Result<FrozenTransform> {
    use crate::feature_store::restricted_indices;
    if rows.is_empty() {
        return Err(Error::Fit("cannot fit a transform on zero rows".into()));
    }
    let field_count = config.field_count();
    let mut matrix = Vec::with_capacity(rows.len());
    for row in rows {
        if row.dense_features.len() != TENSOR_CELLS {
            return Err(Error::contract(
                "fit_transform expects full-width rows from the feature store",
            ));
        }
        let mut raw = vec![0.0f64; field_count];
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
        matrix.push(raw);
    }
    match config.input_mode {
        InputMode::BinnedEmbeddings => Ok(FrozenTransform::Binned(DenseEncoder::fit(
            &matrix,
            config.n_buckets,
            true,
        )?)),
        InputMode::RawDense => Ok(FrozenTransform::Standardized(
            crate::dense2sparse::fit_normalizer(&matrix)?,
        )),
    }
}

// Test hooks used by the gradient and identity suites.
#[doc(hidden)]
pub mod testing {
    use super::*;

    /// Mean total loss (BCE + weighted CE) of a checkpoint on rows.
    pub fn batch_loss(ckpt: &Checkpoint, rows: &[crate::feature_store::SampleRow]) -> Result<f64> {
        let indices: Vec<usize> = (0..rows.len()).collect();
        let input = net::build_batch(&ckpt.config, &ckpt.transform, rows, &indices)?;
        let trace = net::forward_trace(&ckpt.config, &ckpt.layout, &ckpt.params, &input)?;
        let (bce, ce) = net::trace_losses(&ckpt.config, &input, &trace);
        Ok(bce + ckpt.config.duration_loss_weight * ce)
    }

    /// Analytic gradient of [`batch_loss`] with respect to every parameter.
    pub fn batch_grads(ckpt: &Checkpoint, rows: &[crate::feature_store::SampleRow]) -> Result<Vec<f64>> {
        let indices: Vec<usize> = (0..rows.len()).collect();
        let input = net::build_batch(&ckpt.config, &ckpt.transform, rows, &indices)?;
        let trace = net::forward_trace(&ckpt.config, &ckpt.layout, &ckpt.params, &input)?;
        net::backward(&ckpt.config, &ckpt.layout, &ckpt.params, &input, &trace)
    }

    /// Stage intermediates of the trace forward, for consistency checks
    /// against the public sub-operations.
    pub struct StageCapture {
        pub field_embeddings: Tensor2D,
        pub compressed: Tensor2D,
        pub card_e: Tensor2D,
        pub scen_e: Tensor2D,
        pub expert_input: Tensor2D,
        pub task_mix: Vec<Tensor2D>,
    }

    pub fn capture_stages(ckpt: &Checkpoint, rows: &[crate::feature_store::SampleRow]) -> Result<StageCapture> {
        let indices: Vec<usize> = (0..rows.len()).collect();
        let input = net::build_batch(&ckpt.config, &ckpt.transform, rows, &indices)?;
        let trace = net::forward_trace(&ckpt.config, &ckpt.layout, &ckpt.params, &input)?;
        Ok(StageCapture {
            field_embeddings: trace.emb.clone(),
            compressed: trace.compressed.clone(),
            card_e: trace.card_e.clone(),
            scen_e: trace.scen_e.clone(),
            expert_input: trace.expert_input.clone(),
            task_mix: trace.task_mix.clone(),
        })
    }
}

//! Two-stage training driver. Stage one teacher-forces both routers —
//! the labeled camera view is attached and the labeled skill expert
//! fires — while cross-entropies teach the routers to imitate the
//! annotations. Stage two hands control to the routers, perturbing their
//! logits with exploration noise and adding a load-balance penalty whose
//! per-expert routing fractions are measured over the whole batch in a
//! selection-only pre-pass, so gradient accumulation order cannot change
//! the result. All randomness is re-derived from (seed, purpose, stage,
//! epoch, batch, slot) tags, which makes checkpoint resume bit-exact:
//! the checkpoint stores counters, never generator state.

use std::fs;
use std::io::{BufWriter, Read, Write as IoWrite};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use expertdrive_numerics::{
    AdamOptimizer, Array, DetRng, Graph, OptimizerConfig, ParamStore, Precision,
};
use serde::{Deserialize, Serialize};

use crate::action_moe::top_k_lower_tie;
use crate::data::TrainSample;
use crate::error::{PolicyError, Result};
use crate::model::{
    DriveModel, GateMode, LossPlan, LossWeights, ModelConfig, ViewPlan,
};
use crate::planner::{make_flow_sample, FlowSample, TrajectoryNormalizer};
use crate::vision_moe::argmax_lower_tie;

/// Checkpoint file magic.
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"XCKP";
/// Current checkpoint format version.
pub const CHECKPOINT_VERSION: u32 = 1;

const TAG_INIT: u64 = 0;
const TAG_SHUFFLE: u64 = 1;
const TAG_FLOW: u64 = 2;
const TAG_GATE_NOISE: u64 = 3;
const TAG_VIEW_NOISE: u64 = 4;
const TAG_EVAL: u64 = 6;

/// Training hyperparameters and bookkeeping knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// 1 = teacher-forced routing, 2 = live routing.
    pub stage: u8,
    /// Master seed for initialization, shuffling, and every noise draw.
    pub seed: u64,
    /// Samples per optimizer step.
    pub batch_size: usize,
    /// Accumulation chunk size; 0 processes the batch in one chunk.
    /// Chunking never changes the result — batch statistics are computed
    /// before any gradient work — it only bounds peak liveness.
    pub micro_batch: usize,
    /// Peak learning rate.
    pub learning_rate: f64,
    /// Linear warmup steps from zero.
    pub warmup_steps: usize,
    /// Global gradient-norm clip.
    pub clip_norm: f64,
    /// Fraction of episodes held out for validation.
    pub val_fraction: f64,
    /// Tick stride between training samples.
    pub frame_stride: usize,
    /// Apply the load-balance penalty.
    pub use_balance_loss: bool,
    /// Emit a metrics record every this many optimizer steps.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            stage: 1,
            seed: 7,
            batch_size: 16,
            micro_batch: 0,
            learning_rate: 5e-5,
            warmup_steps: 100,
            clip_norm: 1.0,
            val_fraction: 0.05,
            frame_stride: crate::data::DEFAULT_FRAME_STRIDE,
            use_balance_loss: true,
            log_every: 10,
        }
    }
}

impl TrainConfig {
    fn loss_weights(&self) -> LossWeights {
        let mut w = if self.stage == 2 { LossWeights::stage2() } else { LossWeights::stage1() };
        if !self.use_balance_loss {
            w.balance = 0.0;
        }
        w
    }
}

/// Aggregated scalar results of one optimizer step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepStats {
    /// Optimizer step index after this update.
    pub step: usize,
    /// Batch-mean weighted total loss.
    pub total: f64,
    /// Batch-mean flow-matching term (unweighted).
    pub flow: f64,
    /// Batch-mean skill-router cross-entropy (unweighted).
    pub action_ce: Option<f64>,
    /// Batch-mean view-router loss (weight folded in).
    pub vision_weighted: Option<f64>,
    /// Batch-mean load-balance term (unweighted).
    pub balance: Option<f64>,
    /// Fraction of samples whose clean view routing matched the label.
    pub vision_acc: Option<f64>,
    /// Fraction of samples whose clean skill routing matched the label.
    pub action_acc: Option<f64>,
    /// Per-layer routing fractions used for the balance penalty.
    pub gate_fractions: Option<Vec<Vec<f64>>>,
    /// Entropy (nats) of the batch-mean clean gate probabilities,
    /// averaged over layers.
    pub gate_entropy: Option<f64>,
    /// Learning rate applied by this step.
    pub learning_rate: f64,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
}

/// Validation metrics over a held-out sample set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValStats {
    pub flow: f64,
    pub vision_acc: Option<f64>,
    pub action_acc: Option<f64>,
}

/// One line of the JSONL metrics stream.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRecord {
    /// "step" or "epoch".
    pub kind: String,
    pub epoch: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<StepStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val: Option<ValStats>,
}

/// Append-only JSONL metrics writer; records are also kept in memory so
/// callers can inspect them.
pub struct MetricsLogger {
    writer: Option<BufWriter<fs::File>>,
    pub records: Vec<MetricsRecord>,
}

impl MetricsLogger {
    /// Logger that only collects in memory.
    pub fn in_memory() -> Self {
        Self { writer: None, records: Vec::new() }
    }

    /// Logger that also appends JSON lines to `path`.
    pub fn to_file(path: &Path) -> Result<Self> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let file = fs::OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { writer: Some(BufWriter::new(file)), records: Vec::new() })
    }

    pub fn log(&mut self, record: MetricsRecord) -> Result<()> {
        if let Some(w) = &mut self.writer {
            serde_json::to_writer(&mut *w, &record)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        self.records.push(record);
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    model_config: ModelConfig,
    train_config: TrainConfig,
    normalizer: TrajectoryNormalizer,
    step: usize,
    epoch: usize,
    optimizer_steps: usize,
    params: Vec<ParamEntry>,
}

/// Pre-drawn per-sample randomness for one batch pass.
struct SampleDraws {
    flow: FlowSample,
    view_noise: Option<[f64; expertdrive_sim::NUM_VIEWS]>,
    gate_noise: Option<Vec<Vec<f64>>>,
}

/// The training driver: model, parameters, optimizer, and counters.
pub struct Trainer {
    pub model: DriveModel,
    pub store: ParamStore,
    pub optimizer: AdamOptimizer,
    pub normalizer: TrajectoryNormalizer,
    pub config: TrainConfig,
    /// Completed optimizer steps.
    pub step: usize,
    /// Completed epochs (within the current stage).
    pub epoch: usize,
    normalizer_fitted: bool,
}

impl Trainer {
    /// Fresh trainer with parameters initialized from the training seed.
    pub fn new(model_config: ModelConfig, config: TrainConfig) -> Self {
        let mut store = ParamStore::new();
        let mut rng = DetRng::derive(config.seed, &[TAG_INIT]);
        let model = DriveModel::new(model_config, &mut store, &mut rng);
        let optimizer = AdamOptimizer::new(
            OptimizerConfig {
                learning_rate: config.learning_rate,
                warmup_steps: config.warmup_steps,
                clip_norm: config.clip_norm,
                ..OptimizerConfig::default()
            },
            Precision::Double,
            &store,
        );
        Self {
            model,
            store,
            optimizer,
            normalizer: TrajectoryNormalizer::identity(),
            config,
            step: 0,
            epoch: 0,
            normalizer_fitted: false,
        }
    }

    /// Fit the trajectory normalizer on the training split. Called
    /// automatically by [`Trainer::train`] on a fresh run; checkpoints
    /// carry the fitted transform.
    pub fn fit_normalizer(&mut self, samples: &[TrainSample]) -> Result<()> {
        self.normalizer = TrajectoryNormalizer::fit(samples.iter().map(|s| &s.future))?;
        self.normalizer_fitted = true;
        Ok(())
    }

    fn rng(&self, purpose: u64, tags: &[u64]) -> DetRng {
        let mut all = vec![purpose, self.config.stage as u64];
        all.extend_from_slice(tags);
        DetRng::derive(self.config.seed, &all)
    }

    fn draws_for_sample(
        &self,
        sample: &TrainSample,
        epoch: usize,
        batch: usize,
        slot: usize,
    ) -> SampleDraws {
        let target = self.normalizer.normalize(&sample.future);
        let mut flow_rng = self.rng(TAG_FLOW, &[epoch as u64, batch as u64, slot as u64]);
        let flow = make_flow_sample(&mut flow_rng, &target);
        let routed = self.config.stage == 2;
        let sigma = self.model.config.router_noise_std;
        let view_noise = (routed && self.model.config.use_vision_moe).then(|| {
            let mut rng = self.rng(TAG_VIEW_NOISE, &[epoch as u64, batch as u64, slot as u64]);
            let v = rng.normal_vec(expertdrive_sim::NUM_VIEWS, sigma);
            let mut arr = [0.0; expertdrive_sim::NUM_VIEWS];
            arr.copy_from_slice(&v);
            arr
        });
        let gate_noise = (routed && self.model.config.use_action_moe).then(|| {
            let mut rng = self.rng(TAG_GATE_NOISE, &[epoch as u64, batch as u64, slot as u64]);
            (0..self.model.config.decoder_blocks)
                .map(|_| rng.normal_vec(self.model.config.num_action_experts, sigma))
                .collect()
        });
        SampleDraws { flow, view_noise, gate_noise }
    }

    fn loss_plan<'a>(
        &self,
        sample: &TrainSample,
        draws: &'a SampleDraws,
        balance_f: Option<&'a [Vec<f64>]>,
    ) -> LossPlan<'a> {
        let weights = self.config.loss_weights();
        let moe_vision = self.model.config.use_vision_moe;
        let moe_action = self.model.config.use_action_moe;
        let view = if !moe_vision {
            ViewPlan::None
        } else if self.config.stage == 2 {
            ViewPlan::Routed { noise: draws.view_noise }
        } else {
            ViewPlan::Forced(sample.view_label)
        };
        let gate = if !moe_action {
            GateMode::Dense
        } else if self.config.stage == 2 {
            GateMode::Routed { noise: draws.gate_noise.as_deref() }
        } else {
            GateMode::Forced(sample.skill_label)
        };
        LossPlan {
            view,
            gate,
            view_label: moe_vision.then_some(sample.view_label),
            skill_label: moe_action.then_some(sample.skill_label),
            balance_f,
            weights,
        }
    }

    /// Measure per-layer routing fractions over the whole batch without
    /// touching gradients. Stage one derives them from the labels; stage
    /// two replays the exact forward the gradient pass will take (same
    /// noised trajectory, same exploration noise) and counts selections.
    fn batch_fractions(
        &self,
        batch: &[&TrainSample],
        draws: &[SampleDraws],
    ) -> Result<Option<Vec<Vec<f64>>>> {
        if !self.model.config.use_action_moe || !self.config.use_balance_loss {
            return Ok(None);
        }
        let layers = self.model.config.decoder_blocks;
        let experts = self.model.config.num_action_experts;
        let mut counts = vec![vec![0usize; experts]; layers];
        if self.config.stage == 1 {
            for sample in batch {
                for layer in counts.iter_mut() {
                    layer[sample.skill_label] += 1;
                }
            }
        } else {
            for (sample, draw) in batch.iter().zip(draws) {
                let inputs = sample_inputs(sample);
                let mut g = Graph::inference(Precision::Double);
                let plan = self.loss_plan(sample, draw, None);
                let prefix = self.model.prefix_pass(&mut g, &self.store, &inputs, plan.view)?;
                let pass = self.model.decode_pass(
                    &mut g,
                    &self.store,
                    crate::model::PrefixSource::Node(prefix.prefix),
                    &draw.flow.x_tau,
                    draw.flow.tau,
                    plan.gate,
                )?;
                for (layer, eval) in counts.iter_mut().zip(&pass.layer_evals) {
                    for &k in &eval.selected {
                        layer[k] += 1;
                    }
                }
            }
        }
        let b = batch.len() as f64;
        Ok(Some(
            counts
                .into_iter()
                .map(|layer| layer.into_iter().map(|c| c as f64 / b).collect())
                .collect(),
        ))
    }

    /// Run one optimizer step over a batch. Gradients accumulate per
    /// sample in batch order regardless of `micro_batch`, so any chunking
    /// of the same batch produces the same update.
    pub fn train_step(&mut self, batch: &[&TrainSample], batch_idx: usize) -> Result<StepStats> {
        assert!(!batch.is_empty(), "empty batch");
        let b = batch.len() as f64;
        let epoch = self.epoch;
        let draws: Vec<SampleDraws> = batch
            .iter()
            .enumerate()
            .map(|(slot, s)| self.draws_for_sample(s, epoch, batch_idx, slot))
            .collect();
        let fractions = self.batch_fractions(batch, &draws)?;

        self.store.zero_grads();
        let mut total = 0.0;
        let mut flow = 0.0;
        let mut action_ce = 0.0;
        let mut vision_weighted = 0.0;
        let mut balance = 0.0;
        let mut vision_hits = 0usize;
        let mut action_hits = 0usize;
        let mut prob_sums: Vec<Vec<f64>> = Vec::new();

        let chunk = if self.config.micro_batch == 0 { batch.len() } else { self.config.micro_batch };
        for (chunk_idx, chunk_samples) in batch.chunks(chunk).enumerate() {
            let base = chunk_idx * chunk;
            for (off, sample) in chunk_samples.iter().enumerate() {
                let slot = base + off;
                let draw = &draws[slot];
                let plan = self.loss_plan(sample, draw, fractions.as_deref());
                let inputs = sample_inputs(sample);
                let mut g = Graph::new(Precision::Double);
                let losses = self.model.sample_losses(
                    &mut g,
                    &self.store,
                    &inputs,
                    &draw.flow.x_tau,
                    draw.flow.tau,
                    &draw.flow.velocity,
                    &plan,
                )?;
                let scaled = g.scale(losses.total, 1.0 / b);
                g.backprop(scaled, &mut self.store)?;

                total += g.scalar(losses.total) / b;
                flow += g.scalar(losses.flow) / b;
                if let Some(node) = losses.action_ce {
                    action_ce += g.scalar(node) / b;
                }
                if let Some(node) = losses.vision_ce {
                    vision_weighted += g.scalar(node) / b;
                }
                if let Some(node) = losses.balance {
                    balance += g.scalar(node) / b;
                }
                if let Some(logits) = losses.vision_logits {
                    if argmax_lower_tie(g.value(logits).data()) == sample.view_label {
                        vision_hits += 1;
                    }
                }
                if !losses.layer_evals.is_empty() {
                    if prob_sums.is_empty() {
                        prob_sums = vec![
                            vec![0.0; self.model.config.num_action_experts];
                            losses.layer_evals.len()
                        ];
                    }
                    let mut mean_probs = vec![0.0; self.model.config.num_action_experts];
                    for (layer, eval) in losses.layer_evals.iter().enumerate() {
                        let p = g.value(eval.clean_probs);
                        for (k, acc) in mean_probs.iter_mut().enumerate() {
                            *acc += p.at(0, k);
                            prob_sums[layer][k] += p.at(0, k) / b;
                        }
                    }
                    let top = top_k_lower_tie(&mean_probs, 1)[0];
                    if top == sample.skill_label {
                        action_hits += 1;
                    }
                }
            }
        }

        let grad_norm = self.store.global_grad_norm();
        let learning_rate = {
            // The optimizer reports the rate it will apply on the next step.
            self.optimizer.effective_learning_rate()
        };
        self.optimizer.step(&mut self.store);
        self.step += 1;

        let moe_action = self.model.config.use_action_moe;
        let moe_vision = self.model.config.use_vision_moe;
        let gate_entropy = (!prob_sums.is_empty()).then(|| {
            let mut total_h = 0.0;
            for layer in &prob_sums {
                let h: f64 = layer
                    .iter()
                    .filter(|&&p| p > 0.0)
                    .map(|&p| -p * p.ln())
                    .sum();
                total_h += h;
            }
            total_h / prob_sums.len() as f64
        });
        Ok(StepStats {
            step: self.step,
            total,
            flow,
            action_ce: moe_action.then_some(action_ce),
            vision_weighted: moe_vision.then_some(vision_weighted),
            balance: fractions.is_some().then_some(balance),
            vision_acc: moe_vision.then_some(vision_hits as f64 / b),
            action_acc: moe_action.then_some(action_hits as f64 / b),
            gate_fractions: fractions,
            gate_entropy,
            learning_rate,
            grad_norm,
        })
    }

    /// Deterministic validation: flow loss under eval-keyed noise draws
    /// plus clean routing accuracies.
    pub fn evaluate(&self, samples: &[TrainSample]) -> Result<ValStats> {
        if samples.is_empty() {
            return Ok(ValStats { flow: 0.0, vision_acc: None, action_acc: None });
        }
        let mut flow_total = 0.0;
        let mut vision_hits = 0usize;
        let mut action_hits = 0usize;
        let moe_vision = self.model.config.use_vision_moe;
        let moe_action = self.model.config.use_action_moe;
        for (idx, sample) in samples.iter().enumerate() {
            let target = self.normalizer.normalize(&sample.future);
            let mut rng = DetRng::derive(self.config.seed, &[TAG_EVAL, idx as u64]);
            let flow = make_flow_sample(&mut rng, &target);
            let inputs = sample_inputs(sample);
            let mut g = Graph::inference(Precision::Double);
            let view = if moe_vision { ViewPlan::Routed { noise: None } } else { ViewPlan::None };
            let gate = if moe_action {
                GateMode::Routed { noise: None }
            } else {
                GateMode::Dense
            };
            let prefix = self.model.prefix_pass(&mut g, &self.store, &inputs, view)?;
            let pass = self.model.decode_pass(
                &mut g,
                &self.store,
                crate::model::PrefixSource::Node(prefix.prefix),
                &flow.x_tau,
                flow.tau,
                gate,
            )?;
            let target_node = g.constant(flow.velocity.clone());
            let loss = crate::planner::flow_matching_loss(&mut g, pass.velocity, target_node);
            flow_total += g.scalar(loss);
            if let Some(logits) = prefix.vision_logits {
                if argmax_lower_tie(g.value(logits).data()) == sample.view_label {
                    vision_hits += 1;
                }
            }
            if !pass.layer_evals.is_empty() {
                let mut mean_probs = vec![0.0; self.model.config.num_action_experts];
                for eval in &pass.layer_evals {
                    let p = g.value(eval.clean_probs);
                    for (k, acc) in mean_probs.iter_mut().enumerate() {
                        *acc += p.at(0, k);
                    }
                }
                if top_k_lower_tie(&mean_probs, 1)[0] == sample.skill_label {
                    action_hits += 1;
                }
            }
        }
        let n = samples.len() as f64;
        Ok(ValStats {
            flow: flow_total / n,
            vision_acc: moe_vision.then_some(vision_hits as f64 / n),
            action_acc: moe_action.then_some(action_hits as f64 / n),
        })
    }

    /// Train until `target_epochs` epochs have completed (continuing from
    /// the current counter), checkpointing after each epoch when a
    /// directory is given. Partial trailing batches are dropped so every
    /// optimizer step sees identical batch statistics.
    pub fn train(
        &mut self,
        train: &[TrainSample],
        val: &[TrainSample],
        target_epochs: usize,
        logger: &mut MetricsLogger,
        checkpoint_dir: Option<&Path>,
    ) -> Result<()> {
        if train.is_empty() {
            return Err(PolicyError::EmptyDataset { detail: "no training samples".into() });
        }
        if !self.normalizer_fitted && self.step == 0 {
            self.fit_normalizer(train)?;
        }
        while self.epoch < target_epochs {
            let epoch = self.epoch;
            let mut order: Vec<usize> = (0..train.len()).collect();
            let mut rng = self.rng(TAG_SHUFFLE, &[epoch as u64]);
            rng.shuffle(&mut order);

            for (batch_idx, chunk) in order.chunks(self.config.batch_size).enumerate() {
                if chunk.len() < self.config.batch_size {
                    break;
                }
                let batch: Vec<&TrainSample> = chunk.iter().map(|&i| &train[i]).collect();
                let stats = self.train_step(&batch, batch_idx)?;
                if self.step % self.config.log_every == 0 {
                    logger.log(MetricsRecord {
                        kind: "step".into(),
                        epoch,
                        step: Some(stats),
                        val: None,
                    })?;
                }
            }

            self.epoch += 1;
            let val_stats = self.evaluate(val)?;
            logger.log(MetricsRecord {
                kind: "epoch".into(),
                epoch,
                step: None,
                val: Some(val_stats),
            })?;
            if let Some(dir) = checkpoint_dir {
                self.save_checkpoint(&checkpoint_path(dir, self.config.stage, self.epoch))?;
            }
        }
        Ok(())
    }

    /// Serialize everything needed to resume bit-exactly: configs, the
    /// normalizer, counters, parameter values, and optimizer moments.
    /// The write is atomic (temp file, then rename).
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let header = CheckpointHeader {
            model_config: self.model.config.clone(),
            train_config: self.config.clone(),
            normalizer: self.normalizer,
            step: self.step,
            epoch: self.epoch,
            optimizer_steps: self.optimizer.step_count(),
            params: self
                .store
                .iter()
                .map(|p| ParamEntry {
                    name: p.name.clone(),
                    rows: p.value.rows(),
                    cols: p.value.cols(),
                })
                .collect(),
        };
        let header_bytes = serde_json::to_vec(&header)?;
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let tmp = path.with_extension("tmp");
        {
            let mut w = BufWriter::new(fs::File::create(&tmp)?);
            w.write_all(CHECKPOINT_MAGIC)?;
            w.write_u32::<LittleEndian>(CHECKPOINT_VERSION)?;
            w.write_u64::<LittleEndian>(header_bytes.len() as u64)?;
            w.write_all(&header_bytes)?;
            for p in self.store.iter() {
                for &v in p.value.data() {
                    w.write_f64::<LittleEndian>(v)?;
                }
            }
            let (m, v) = self.optimizer.moments();
            for arr in m.iter().chain(v.iter()) {
                for &x in arr.data() {
                    w.write_f64::<LittleEndian>(x)?;
                }
            }
            w.flush()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    /// Rebuild a trainer from a checkpoint file.
    pub fn load_checkpoint(path: &Path) -> Result<Trainer> {
        let mut reader = std::io::BufReader::new(fs::File::open(path)?);
        let mut magic = [0u8; 4];
        reader.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(PolicyError::MalformedCheckpoint {
                detail: format!("bad magic {magic:?}"),
            });
        }
        let version = reader.read_u32::<LittleEndian>()?;
        if version != CHECKPOINT_VERSION {
            return Err(PolicyError::CheckpointVersion {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let header_len = reader.read_u64::<LittleEndian>()? as usize;
        let mut header_bytes = vec![0u8; header_len];
        reader.read_exact(&mut header_bytes)?;
        let header: CheckpointHeader = serde_json::from_slice(&header_bytes)?;

        let mut trainer = Trainer::new(header.model_config, header.train_config);
        let expected: Vec<ParamEntry> = trainer
            .store
            .iter()
            .map(|p| ParamEntry { name: p.name.clone(), rows: p.value.rows(), cols: p.value.cols() })
            .collect();
        if expected.len() != header.params.len() {
            return Err(PolicyError::MalformedCheckpoint {
                detail: format!(
                    "parameter count mismatch: file has {}, model has {}",
                    header.params.len(),
                    expected.len()
                ),
            });
        }
        for (e, h) in expected.iter().zip(&header.params) {
            if e.name != h.name || e.rows != h.rows || e.cols != h.cols {
                return Err(PolicyError::MalformedCheckpoint {
                    detail: format!(
                        "parameter mismatch: file has {} [{}x{}], model has {} [{}x{}]",
                        h.name, h.rows, h.cols, e.name, e.rows, e.cols
                    ),
                });
            }
        }

        let ids: Vec<_> = trainer.store.ids().collect();
        for id in &ids {
            let n = trainer.store.get(*id).value.len();
            let mut buf = vec![0.0f64; n];
            reader.read_f64_into::<LittleEndian>(&mut buf)?;
            trainer.store.get_mut(*id).value.data_mut().copy_from_slice(&buf);
        }
        let mut read_moments = || -> Result<Vec<Array>> {
            let mut out = Vec::with_capacity(ids.len());
            for id in &ids {
                let shape = trainer.store.get(*id).value.shape().to_vec();
                let n: usize = shape.iter().product();
                let mut buf = vec![0.0f64; n];
                reader.read_f64_into::<LittleEndian>(&mut buf)?;
                out.push(Array::from_vec(&shape, buf).expect("shape matches buffer"));
            }
            Ok(out)
        };
        let m = read_moments()?;
        let v = read_moments()?;
        trainer.optimizer.restore(header.optimizer_steps, m, v);
        trainer.step = header.step;
        trainer.epoch = header.epoch;
        trainer.normalizer = header.normalizer;
        trainer.normalizer_fitted = true;
        Ok(trainer)
    }
}

/// Conventional checkpoint filename for a stage and epoch.
pub fn checkpoint_path(dir: &Path, stage: u8, epoch: usize) -> PathBuf {
    dir.join(format!("stage{stage}_epoch{epoch:04}.ckpt"))
}

/// View a training sample as model inputs.
pub fn sample_inputs(sample: &TrainSample) -> crate::model::ModelInputs<'_> {
    crate::model::ModelInputs {
        views: &sample.views,
        front_prev: &sample.front_prev,
        state: &sample.state,
        goal: &sample.goal,
    }
}

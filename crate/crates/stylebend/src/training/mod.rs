//! End-to-end optimization loop: per iteration, one discriminator update and
//! one generator update over a graph that translates a source batch toward a
//! randomly drawn anchor, blends anchor styles with the learned weights, and
//! refines with the conditioned residual; plus run orchestration (metrics
//! log, checkpoints, resume) and ablation-aware inference.

pub mod ablation;
pub mod config;

pub use ablation::{ComponentMask, ABLATION_FLAGS};
pub use config::TrainConfig;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use ndarray::{Array1, ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{Checkpoint, CheckpointMeta, RngState};
use crate::data::{load_domain, sample_batch, DomainDataset, ImageBatch, Role, SampleState};
use crate::losses::{
    adv_loss_d_t, adv_loss_g_t, assemble, patch_loss_d_t, patch_loss_g_t,
    reconstruction_losses_t, sample_patch_plan, style_loss_t, LossReport, LossWeights,
};
use crate::manifold::{broadcast_style, Manifold, StyleBank};
use crate::metrics::MetricsWriter;
use crate::networks::Networks;
use crate::residual::{
    compose_t, exemplar_conditioning, general_conditioning, resolve_conditioning,
    translate_styled, ConditioningMode,
};
use crate::tensor::{Adam, ParamId, PatchSpec, Tape, Var};
use crate::{Error, Result, Scalar};

/// Distinct stream ids so the loop and patch RNGs never overlap parameter
/// initialization draws.
const LOOP_STREAM: u64 = 0x10;
const PATCH_STREAM: u64 = 0x11;

/// Loaded training datasets: one per anchor (index 0 is the source domain)
/// plus the few-shot target set, with their sampling cursors.
pub struct TrainData<S: Scalar> {
    anchors: Vec<DomainDataset<S>>,
    fewshot: DomainDataset<S>,
    anchor_states: Vec<SampleState>,
    fewshot_state: SampleState,
}

impl<S: Scalar> TrainData<S> {
    /// Loads datasets under `root`: `source/` for the `id` anchor, one
    /// directory per remaining anchor name, and `fewshot/` (capped at the
    /// configured few-shot count).
    pub fn load(cfg: &TrainConfig, root: &Path) -> Result<Self> {
        let mut anchors = Vec::with_capacity(cfg.anchors.len());
        for (i, name) in cfg.anchors.iter().enumerate() {
            let dir = if name == "id" {
                root.join("source")
            } else {
                root.join(name)
            };
            let role = if i == 0 { Role::Source } else { Role::Anchor };
            anchors.push(load_domain(&dir, role, cfg.resolution, None)?);
        }
        let fewshot = load_domain(
            &root.join("fewshot"),
            Role::Fewshot,
            cfg.resolution,
            Some(cfg.fewshot_count),
        )?;
        Self::from_datasets(anchors, fewshot)
    }

    /// Wraps already-loaded datasets (used by tests and synthetic runs).
    pub fn from_datasets(
        anchors: Vec<DomainDataset<S>>,
        fewshot: DomainDataset<S>,
    ) -> Result<Self> {
        if anchors.len() < 2 {
            return Err(Error::Config(
                "training needs at least two anchor datasets".into(),
            ));
        }
        if fewshot.role != Role::Fewshot {
            return Err(Error::Config(
                "the few-shot dataset must carry the fewshot role".into(),
            ));
        }
        let anchor_states = anchors.iter().map(SampleState::new).collect();
        let fewshot_state = SampleState::new(&fewshot);
        Ok(TrainData {
            anchors,
            fewshot,
            anchor_states,
            fewshot_state,
        })
    }

    pub fn num_anchors(&self) -> usize {
        self.anchors.len()
    }

    pub fn anchor(&self, i: usize) -> &DomainDataset<S> {
        &self.anchors[i]
    }

    pub fn fewshot(&self) -> &DomainDataset<S> {
        &self.fewshot
    }

    /// Draws one iteration's batches. Draw order: source batch, then one
    /// batch per anchor in index order, then the single few-shot exemplar.
    pub fn draw_step(&mut self, n: usize, rng: &mut ChaCha8Rng) -> StepBatch<S> {
        let source = sample_batch(&self.anchors[0], &mut self.anchor_states[0], n, rng);
        let anchors: Vec<ImageBatch<S>> = (0..self.anchors.len())
            .map(|i| sample_batch(&self.anchors[i], &mut self.anchor_states[i], n, rng))
            .collect();
        let exemplar = sample_batch(&self.fewshot, &mut self.fewshot_state, 1, rng);
        StepBatch {
            source,
            anchors,
            exemplar,
        }
    }
}

/// One iteration's data: a source batch, one batch per anchor (index 0 =
/// source domain), and a single few-shot exemplar.
pub struct StepBatch<S: Scalar> {
    pub source: ImageBatch<S>,
    pub anchors: Vec<ImageBatch<S>>,
    pub exemplar: ImageBatch<S>,
}

/// Per-iteration random choices, drawn once and shared by the discriminator
/// and generator updates.
pub struct IterationDraws<S: Scalar> {
    /// Anchor receiving this iteration's branch translation.
    pub anchor: usize,
    /// Exemplar mode (statistics conditioning) vs general mode (noise).
    pub exemplar_mode: bool,
    /// Residual conditioning vector; `None` when refinement is disabled.
    pub conditioning: Option<Array1<S>>,
    pub real_patches: Vec<PatchSpec>,
    pub fake_patches_d: Vec<PatchSpec>,
    pub fake_patches_g: Vec<PatchSpec>,
}

struct ForwardPass<'t, S: Scalar> {
    source: Var<'t, S>,
    content: Var<'t, S>,
    anchor_style: Var<'t, S>,
    anchor_fake: Var<'t, S>,
    full_fake: Var<'t, S>,
}

/// The full optimization state of a run.
pub struct Trainer<S: Scalar> {
    pub cfg: TrainConfig,
    pub mask: ComponentMask,
    pub nets: Networks<S>,
    pub manifold: Manifold,
    pub weights: LossWeights<S>,
    opt_g: Adam<S>,
    opt_d: Adam<S>,
    step: u64,
    exemplar_steps: u64,
    loop_rng: ChaCha8Rng,
    patch_rng: ChaCha8Rng,
}

impl<S: Scalar> Trainer<S> {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mask = ComponentMask::parse(&cfg.ablation)?;
        let mut nets = Networks::new(cfg.net_config(), cfg.seed)?;
        let manifold = Manifold::new(&mut nets.store, &cfg.anchors)?;
        let opt_g = Adam::new(
            &nets.store,
            nets.generator_ids(),
            cfg.lr,
            cfg.beta1,
            cfg.beta2,
        );
        let opt_d = Adam::new(
            &nets.store,
            nets.discriminator_ids(),
            cfg.lr,
            cfg.beta1,
            cfg.beta2,
        );
        let mut loop_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        loop_rng.set_stream(LOOP_STREAM);
        let mut patch_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        patch_rng.set_stream(PATCH_STREAM);
        let weights = cfg.loss_weights();
        Ok(Trainer {
            cfg,
            mask,
            nets,
            manifold,
            weights,
            opt_g,
            opt_d,
            step: 0,
            exemplar_steps: 0,
            loop_rng,
            patch_rng,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn exemplar_steps(&self) -> u64 {
        self.exemplar_steps
    }

    /// Draws the next iteration's batches from the datasets.
    pub fn next_batch(&mut self, data: &mut TrainData<S>) -> StepBatch<S> {
        data.draw_step(self.cfg.batch_size, &mut self.loop_rng)
    }

    fn validate_batch(&self, batch: &StepBatch<S>) -> Result<()> {
        if batch.anchors.len() != self.manifold.num_anchors() {
            return Err(Error::Shape(format!(
                "expected {} anchor batches, got {}",
                self.manifold.num_anchors(),
                batch.anchors.len()
            )));
        }
        if batch.exemplar.len() != 1 {
            return Err(Error::Shape(format!(
                "the iteration exemplar must be a single image, got {}",
                batch.exemplar.len()
            )));
        }
        if batch.source.is_empty() {
            return Err(Error::Shape("source batch must be non-empty".into()));
        }
        Ok(())
    }

    /// Draws the per-iteration randomness: anchor choice and mode from the
    /// loop stream (then noise, in general mode), patch layouts from the
    /// patch stream in the order real, discriminator-fake, generator-fake.
    pub fn draw_iteration(&mut self, batch: &StepBatch<S>) -> Result<IterationDraws<S>> {
        self.validate_batch(batch)?;
        let anchor = self.loop_rng.gen_range(0..self.manifold.num_anchors());
        let exemplar_mode =
            self.mask.germ_on() && self.loop_rng.gen_bool(self.cfg.exemplar_prob);
        let conditioning = if self.mask.germ_on() {
            Some(if exemplar_mode {
                exemplar_conditioning(&self.nets, &batch.exemplar)?
            } else {
                general_conditioning(self.nets.phi.conditioning_dim(), &mut self.loop_rng)
            })
        } else {
            None
        };
        let (real_patches, fake_patches_d, fake_patches_g) = if self.mask.patch_on() {
            let size = self.cfg.effective_patch_size();
            let count = self.cfg.patch_count;
            let (h, w) = (batch.source.height(), batch.source.width());
            let real = sample_patch_plan(
                batch.exemplar.len(),
                batch.exemplar.height(),
                batch.exemplar.width(),
                count,
                size,
                &mut self.patch_rng,
            )?;
            let fake_d =
                sample_patch_plan(batch.source.len(), h, w, count, size, &mut self.patch_rng)?;
            let fake_g =
                sample_patch_plan(batch.source.len(), h, w, count, size, &mut self.patch_rng)?;
            (real, fake_d, fake_g)
        } else {
            (Vec::new(), Vec::new(), Vec::new())
        };
        Ok(IterationDraws {
            anchor,
            exemplar_mode,
            conditioning,
            real_patches,
            fake_patches_d,
            fake_patches_g,
        })
    }

    fn forward<'t>(
        &self,
        tape: &'t Tape<S>,
        batch: &StepBatch<S>,
        draws: &IterationDraws<S>,
    ) -> ForwardPass<'t, S> {
        let source = tape.constant(batch.source.data().clone());
        let content = self.nets.encode_content_t(tape, source);
        let styles: Vec<Var<'t, S>> = batch
            .anchors
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let imgs = tape.constant(b.data().clone());
                self.nets.encode_style_t(tape, imgs, i)
            })
            .collect();
        let anchor_style = styles[draws.anchor];
        let anchor_fake = self.nets.decode_t(tape, content, anchor_style);
        let base = if self.mask.wmi_on() {
            let z_w = self
                .manifold
                .interpolate_style_t(tape, &self.nets.store, &styles);
            self.nets.decode_t(tape, content, z_w)
        } else {
            anchor_fake
        };
        let full_fake = match &draws.conditioning {
            Some(cond) => {
                let c = tape.constant(broadcast_style(cond, batch.source.len()));
                let r = self.nets.residual_t(tape, content, c);
                compose_t(base, r)
            }
            None => base,
        };
        ForwardPass {
            source,
            content,
            anchor_style,
            anchor_fake,
            full_fake,
        }
    }

    /// Discriminator update. Returns `(adv_D, patch_D, total_D)`.
    pub fn update_d(
        &mut self,
        batch: &StepBatch<S>,
        draws: &IterationDraws<S>,
    ) -> Result<(S, S, S)> {
        let (scalars, grads) = {
            let tape = Tape::new();
            let f = self.forward(&tape, batch, draws);
            let zero = || tape.constant(ArrayD::from_elem(IxDyn(&[]), S::zero()));
            let adv_d = if self.mask.adv_on() {
                let real = tape.constant(batch.anchors[draws.anchor].data().clone());
                adv_loss_d_t(&self.nets, &tape, real, f.anchor_fake, draws.anchor)
            } else {
                zero()
            };
            let patch_d = if self.mask.patch_on() {
                let real = tape.constant(batch.exemplar.data().clone());
                patch_loss_d_t(
                    &self.nets,
                    &tape,
                    real,
                    &draws.real_patches,
                    f.full_fake,
                    &draws.fake_patches_d,
                    self.cfg.effective_patch_size(),
                )
            } else {
                zero()
            };
            let total = self.weights.combine_d_t(adv_d, patch_d);
            let grads = tape.backward(total);
            ((adv_d.scalar(), patch_d.scalar(), total.scalar()), grads)
        };
        self.opt_d.step(&mut self.nets.store, &grads);
        Ok(scalars)
    }

    /// Generator update. Returns
    /// `(style, patch_G, adv_G, recon_image, recon_content, recon_style, total_G)`.
    #[allow(clippy::type_complexity)]
    pub fn update_g(
        &mut self,
        batch: &StepBatch<S>,
        draws: &IterationDraws<S>,
    ) -> Result<(S, S, S, S, S, S, S)> {
        let target_stats = self.nets.extract_statistics(&batch.exemplar)?;
        let (scalars, grads) = {
            let tape = Tape::new();
            let f = self.forward(&tape, batch, draws);
            let zero = || tape.constant(ArrayD::from_elem(IxDyn(&[]), S::zero()));
            let style = if self.mask.style_on() {
                style_loss_t(&self.nets, &tape, f.full_fake, &target_stats)
            } else {
                zero()
            };
            let patch_g = if self.mask.patch_on() {
                patch_loss_g_t(
                    &self.nets,
                    &tape,
                    f.full_fake,
                    &draws.fake_patches_g,
                    self.cfg.effective_patch_size(),
                )
            } else {
                zero()
            };
            let adv_g = if self.mask.adv_on() {
                adv_loss_g_t(&self.nets, &tape, f.anchor_fake, draws.anchor)
            } else {
                zero()
            };
            let (ri, rc, rs) = if self.mask.recon_on() {
                reconstruction_losses_t(
                    &self.nets,
                    &tape,
                    f.source,
                    f.content,
                    f.anchor_fake,
                    f.anchor_style,
                    draws.anchor,
                )
            } else {
                (zero(), zero(), zero())
            };
            let total = self.weights.combine_g_t(style, patch_g, adv_g, ri, rc, rs);
            let grads = tape.backward(total);
            (
                (
                    style.scalar(),
                    patch_g.scalar(),
                    adv_g.scalar(),
                    ri.scalar(),
                    rc.scalar(),
                    rs.scalar(),
                    total.scalar(),
                ),
                grads,
            )
        };
        self.opt_g.step(&mut self.nets.store, &grads);
        Ok(scalars)
    }

    /// One full iteration: discriminator update, then generator update, then
    /// the validated loss report. A non-finite loss aborts (naming the term)
    /// before the step counter moves.
    pub fn train_step(&mut self, batch: &StepBatch<S>) -> Result<LossReport<S>> {
        let draws = self.draw_iteration(batch)?;
        let (adv_d, patch_d, total_d) = self.update_d(batch, &draws)?;
        let (style, patch_g, adv_g, ri, rc, rs, total_g) = self.update_g(batch, &draws)?;
        let report = assemble(
            style, patch_g, patch_d, adv_g, adv_d, ri, rc, rs, total_g, total_d,
        )?;
        self.step += 1;
        if draws.exemplar_mode {
            self.exemplar_steps += 1;
        }
        Ok(report)
    }

    /// Mean style codes over the full anchor datasets, for checkpointing.
    pub fn reference_style_bank(&self, data: &TrainData<S>) -> Result<StyleBank<S>> {
        let mut batches = Vec::with_capacity(data.num_anchors());
        for i in 0..data.num_anchors() {
            batches.push(data.anchor(i).all()?);
        }
        StyleBank::compute(&self.nets, &batches)
    }

    /// Writes the complete run state: every parameter, optimizer moments,
    /// reference mean styles, counters, and RNG positions.
    pub fn save_checkpoint(&self, path: &Path, data: &TrainData<S>) -> Result<()> {
        let bank = self.reference_style_bank(data)?;
        let mut arrays: Vec<(String, ArrayD<S>)> = Vec::new();
        for id in self.nets.store.ids() {
            arrays.push((
                self.nets.store.name(id).to_string(),
                self.nets.store.value(id).as_ref().clone(),
            ));
        }
        for (name, arr) in self.opt_g.state(&self.nets.store) {
            arrays.push((format!("opt_g.{name}"), arr));
        }
        for (name, arr) in self.opt_d.state(&self.nets.store) {
            arrays.push((format!("opt_d.{name}"), arr));
        }
        for (i, style) in bank.styles.iter().enumerate() {
            arrays.push((format!("mean_style.{i}"), style.clone().into_dyn()));
        }
        let meta = CheckpointMeta {
            dtype: S::DTYPE.to_string(),
            net: self.nets.cfg.clone(),
            anchors: self.manifold.anchor_names().to_vec(),
            ablation: self.mask.canonical(),
            step: self.step,
            exemplar_steps: self.exemplar_steps,
            opt_g_steps: self.opt_g.step_count(),
            opt_d_steps: self.opt_d.step_count(),
            rng_loop: Some(RngState::capture(&self.loop_rng)),
            rng_patch: Some(RngState::capture(&self.patch_rng)),
            config_text: self.cfg.to_text(),
        };
        Checkpoint { meta, arrays }.save(path)
    }

    /// Restores a trainer (parameters, optimizer moments, counters, RNG
    /// positions) from a checkpoint written by [`Trainer::save_checkpoint`].
    pub fn from_checkpoint(path: &Path) -> Result<Self> {
        let ck = Checkpoint::<S>::load(path)?;
        Self::restore(&ck)
    }

    fn restore(ck: &Checkpoint<S>) -> Result<Self> {
        let cfg = TrainConfig::parse(&ck.meta.config_text)?;
        let mut t = Trainer::new(cfg)?;
        if ck.meta.net != t.nets.cfg {
            return Err(Error::Checkpoint(
                "checkpoint architecture disagrees with its own configuration".into(),
            ));
        }
        let lookup: HashMap<&str, &ArrayD<S>> = ck
            .arrays
            .iter()
            .map(|(n, a)| (n.as_str(), a))
            .collect();
        let named: Vec<(ParamId, String)> = t
            .nets
            .store
            .ids()
            .map(|id| (id, t.nets.store.name(id).to_string()))
            .collect();
        for (id, name) in named {
            let arr = *lookup.get(name.as_str()).ok_or_else(|| {
                Error::Checkpoint(format!("checkpoint is missing parameter `{name}`"))
            })?;
            if arr.shape() != t.nets.store.value(id).shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{name}` has shape {:?}, expected {:?}",
                    arr.shape(),
                    t.nets.store.value(id).shape()
                )));
            }
            t.nets.store.set_value(id, arr.clone());
        }
        let (store, opt_g, opt_d) = (&t.nets.store, &mut t.opt_g, &mut t.opt_d);
        opt_g.load_state(
            store,
            &mut |name| lookup.get(format!("opt_g.{name}").as_str()).map(|a| (*a).clone()),
            ck.meta.opt_g_steps,
        )?;
        opt_d.load_state(
            store,
            &mut |name| lookup.get(format!("opt_d.{name}").as_str()).map(|a| (*a).clone()),
            ck.meta.opt_d_steps,
        )?;
        t.step = ck.meta.step;
        t.exemplar_steps = ck.meta.exemplar_steps;
        if let Some(s) = &ck.meta.rng_loop {
            t.loop_rng = s.restore();
        }
        if let Some(s) = &ck.meta.rng_patch {
            t.patch_rng = s.restore();
        }
        Ok(t)
    }
}

/// Outcome of a [`fit`] run.
pub struct FitOutcome {
    pub final_checkpoint: PathBuf,
    pub metrics_path: PathBuf,
    pub steps_run: u64,
}

/// Runs training to the configured iteration count: draws batches, steps,
/// appends every loss report to `metrics.tsv`, checkpoints on the configured
/// cadence, and writes `checkpoint_final.sbnd` plus the resolved config.
pub fn fit<S: Scalar>(
    trainer: &mut Trainer<S>,
    data: &mut TrainData<S>,
    out_dir: &Path,
) -> Result<FitOutcome> {
    if data.num_anchors() != trainer.manifold.num_anchors() {
        return Err(Error::Config(format!(
            "configuration names {} anchors but {} datasets were loaded",
            trainer.manifold.num_anchors(),
            data.num_anchors()
        )));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    trainer.cfg.save(&out_dir.join("config.resolved.txt"))?;
    let metrics_path = out_dir.join("metrics.tsv");
    let mut metrics = if trainer.step == 0 {
        MetricsWriter::create(&metrics_path)?
    } else {
        MetricsWriter::append(&metrics_path)?
    };
    let mut steps_run = 0;
    while trainer.step < trainer.cfg.iterations {
        let batch = trainer.next_batch(data);
        let report = trainer.train_step(&batch)?;
        steps_run += 1;
        metrics.record(trainer.step, &report)?;
        if trainer.step % trainer.cfg.log_every == 0 || trainer.step == trainer.cfg.iterations {
            log::info!(
                "step {}/{} total_G {:.4} total_D {:.4}",
                trainer.step,
                trainer.cfg.iterations,
                report.total_g.as_f64(),
                report.total_d.as_f64()
            );
        }
        if trainer.cfg.checkpoint_every > 0
            && trainer.step % trainer.cfg.checkpoint_every == 0
            && trainer.step < trainer.cfg.iterations
        {
            let p = out_dir.join(format!("checkpoint_{:06}.sbnd", trainer.step));
            trainer.save_checkpoint(&p, data)?;
        }
    }
    metrics.flush()?;
    let final_checkpoint = out_dir.join("checkpoint_final.sbnd");
    trainer.save_checkpoint(&final_checkpoint, data)?;
    Ok(FitOutcome {
        final_checkpoint,
        metrics_path,
        steps_run,
    })
}

/// A checkpoint opened for inference: networks, anchor manifold, persisted
/// mean styles, and the run's ablation mask.
pub struct LoadedModel<S: Scalar> {
    pub cfg: TrainConfig,
    pub mask: ComponentMask,
    pub nets: Networks<S>,
    pub manifold: Manifold,
    pub bank: StyleBank<S>,
    pub step: u64,
}

/// Opens a checkpoint for inference (no optimizer state required beyond what
/// the trainer restore already checks).
pub fn load_model<S: Scalar>(path: &Path) -> Result<LoadedModel<S>> {
    let ck = Checkpoint::<S>::load(path)?;
    let trainer = Trainer::restore(&ck)?;
    let mut styles = Vec::with_capacity(trainer.manifold.num_anchors());
    for i in 0..trainer.manifold.num_anchors() {
        let arr = ck.array(&format!("mean_style.{i}")).ok_or_else(|| {
            Error::Checkpoint(format!("checkpoint is missing `mean_style.{i}`"))
        })?;
        if arr.ndim() != 1 {
            return Err(Error::Checkpoint(format!(
                "mean_style.{i} must be a vector, got shape {:?}",
                arr.shape()
            )));
        }
        styles.push(Array1::from_iter(arr.iter().copied()));
    }
    let Trainer {
        cfg,
        mask,
        nets,
        manifold,
        step,
        ..
    } = trainer;
    Ok(LoadedModel {
        cfg,
        mask,
        nets,
        manifold,
        bank: StyleBank { styles },
        step,
    })
}

/// Ablation-aware inference translation. The full model blends anchor styles
/// with the learned weights and adds the conditioned residual; `no_wmi` (and
/// `lgfs_only`) instead decode with the first non-source anchor's mean style;
/// disabled refinement (`no_germ`, `lgfs_only`) forbids exemplar mode and
/// omits the residual.
pub fn translate_masked<S: Scalar>(
    nets: &Networks<S>,
    manifold: &Manifold,
    bank: &StyleBank<S>,
    mask: ComponentMask,
    source: &ImageBatch<S>,
    mode: ConditioningMode,
    exemplar: Option<&ImageBatch<S>>,
    rng: &mut ChaCha8Rng,
) -> Result<ImageBatch<S>> {
    if mode == ConditioningMode::Exemplar && !mask.exemplar_allowed() {
        return Err(Error::Config(
            "exemplar mode is disabled for this model (refinement module ablated)".into(),
        ));
    }
    let style = if mask.wmi_on() {
        manifold.interpolate_style(&nets.store, &bank.styles)?
    } else {
        bank.styles
            .get(1)
            .cloned()
            .ok_or_else(|| Error::Config("style bank has no non-source anchor".into()))?
    };
    let conditioning = if mask.germ_on() {
        Some(resolve_conditioning(nets, mode, exemplar, rng)?)
    } else {
        if exemplar.is_some() {
            return Err(Error::Config(
                "general conditioning takes no exemplar image".into(),
            ));
        }
        None
    };
    translate_styled(nets, source, &style, conditioning.as_ref())
}

impl<S: Scalar> LoadedModel<S> {
    /// Translates with this model's own mask and persisted mean styles.
    pub fn translate(
        &self,
        source: &ImageBatch<S>,
        mode: ConditioningMode,
        exemplar: Option<&ImageBatch<S>>,
        rng: &mut ChaCha8Rng,
    ) -> Result<ImageBatch<S>> {
        translate_masked(
            &self.nets,
            &self.manifold,
            &self.bank,
            self.mask,
            source,
            mode,
            exemplar,
            rng,
        )
    }
}

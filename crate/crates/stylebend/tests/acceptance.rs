//! Release gate: every acceptance criterion in one integration run. Each
//! criterion prints a single `[PASS]`/`[FAIL]` line (run with
//! `cargo test --test acceptance -- --nocapture` to watch); the test fails
//! at the end if any criterion failed.
//!
//! The training-dependent criteria share four small runs on the synthetic
//! corpus, trained inside the test at reduced width so the whole gate stays
//! in CPU-minutes territory.

use std::path::Path;
use std::time::Instant;

use ndarray::{Array1, Array2, ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use stylebend::data::toy::{generate_toy_corpus, read_manifest, sky_masks, ToySpec, MANIFEST};
use stylebend::data::{DomainDataset, ImageBatch, Role};
use stylebend::evaluation::{
    anchor_based_translate, anchor_cycle_uncorrected, consistency_probe, exemplar_fidelity,
    frechet_distance, gaussian_frechet_oracle, EmbeddingSet,
};
use stylebend::losses::{sample_patch_plan, style_loss_t};
use stylebend::networks::{adain, NetConfig, Networks};
use stylebend::residual::ConditioningMode;
use stylebend::tensor::{ParamId, PatchSpec, Tape};
use stylebend::training::{
    fit, load_model, translate_masked, ComponentMask, TrainConfig, TrainData, Trainer,
};
use stylebend::DefaultScalar;

/// Iterations for the comparative toy runs (full, lgfs_only, no_style).
const TOY_ITERS: u64 = 1500;
/// Style-loss weight for the toy runs: statistics pressure is the dominant
/// learning signal at this scale, so it gets extra weight over the defaults.
const TOY_STYLE_WEIGHT: f64 = 2.0;
/// Iterations for the one-shot completion run.
const ONE_SHOT_ITERS: u64 = 200;
/// Images taken from the source pool for per-pair measurements.
const PAIR_COUNT: usize = 10;

struct Gate {
    results: Vec<(String, bool)>,
    started: Instant,
}

impl Gate {
    fn new() -> Self {
        Gate {
            results: Vec::new(),
            started: Instant::now(),
        }
    }

    fn check(&mut self, name: &str, pass: bool, detail: String) {
        println!(
            "[{}] {name}: {detail} (t={:.0}s)",
            if pass { "PASS" } else { "FAIL" },
            self.started.elapsed().as_secs_f64()
        );
        self.results.push((name.to_string(), pass));
    }

    fn finish(self) {
        let failed: Vec<&str> = self
            .results
            .iter()
            .filter(|(_, p)| !p)
            .map(|(n, _)| n.as_str())
            .collect();
        println!(
            "acceptance: {}/{} criteria passed",
            self.results.len() - failed.len(),
            self.results.len()
        );
        assert!(failed.is_empty(), "failed criteria: {}", failed.join(", "));
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// Criterion group 1: numerical oracles
// ---------------------------------------------------------------------------

/// Statistic re-imposition against a naive loop reference, 100 random cases.
fn oracle_stat_imposition(gate: &mut Gate) {
    let mut r = rng(1001);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (n, c, h, w) = (
            r.gen_range(1..=3usize),
            r.gen_range(1..=6usize),
            r.gen_range(2..=7usize),
            r.gen_range(2..=7usize),
        );
        let x = ArrayD::<f64>::from_shape_fn(IxDyn(&[n, c, h, w]), |_| r.gen_range(-2.0..2.0));
        let mu = Array1::from_shape_fn(c, |_| r.gen_range(-1.0..1.0));
        let sigma = Array1::from_shape_fn(c, |_| r.gen_range(0.0..2.0));
        let got = adain(&x, &mu, &sigma).unwrap();

        // Independent reference: per (sample, channel), normalize by the
        // population statistics with the documented epsilon, then re-scale.
        for ni in 0..n {
            for ci in 0..c {
                let mut mean = 0.0;
                for y in 0..h {
                    for xx in 0..w {
                        mean += x[[ni, ci, y, xx]];
                    }
                }
                mean /= (h * w) as f64;
                let mut var = 0.0;
                for y in 0..h {
                    for xx in 0..w {
                        let d = x[[ni, ci, y, xx]] - mean;
                        var += d * d;
                    }
                }
                var /= (h * w) as f64;
                let denom = var.sqrt() + 1e-5;
                for y in 0..h {
                    for xx in 0..w {
                        let want = sigma[ci] * (x[[ni, ci, y, xx]] - mean) / denom + mu[ci];
                        worst = worst.max((got[[ni, ci, y, xx]] - want).abs());
                    }
                }
            }
        }
    }
    gate.check(
        "stat-imposition-oracle",
        worst < 1e-4,
        format!("max |module - reference| = {worst:.2e} over 100 cases (tol 1e-4)"),
    );
}

fn gaussian_rows(n: usize, mean: &Array1<f64>, seed: u64) -> EmbeddingSet {
    let mut r = rng(seed);
    let d = mean.len();
    EmbeddingSet::from_rows(Array2::from_shape_fn((n, d), |(_, j)| {
        let z: f64 = r.sample(StandardNormal);
        mean[j] + z
    }))
    .unwrap()
}

/// Distribution distance against the closed-form Gaussian value, plus
/// self-distance.
fn oracle_distribution_distance(gate: &mut Gate) {
    let d = 4;
    let zero = Array1::<f64>::zeros(d);
    let shift = Array1::from_vec(vec![1.0; d]);
    let ones = Array1::from_vec(vec![1.0; d]);
    let x = gaussian_rows(10_000, &zero, 1101);
    let y = gaussian_rows(10_000, &shift, 1102);
    let dist = frechet_distance(&x, &y).unwrap();
    let oracle = gaussian_frechet_oracle(&zero, &ones, &shift, &ones);
    let rel = (dist - oracle).abs() / oracle;
    let self_dist = frechet_distance(&x, &x).unwrap();
    gate.check(
        "distribution-distance-oracle",
        rel < 0.05 && self_dist.abs() < 1e-6,
        format!(
            "sampled {dist:.4} vs closed form {oracle:.4} (rel {rel:.3}, tol 0.05); self-distance {self_dist:.2e} (tol 1e-6)"
        ),
    );
}

/// Analytic style-loss gradient against central finite differences on a 4x4
/// image, every pixel, relative error under 1e-3.
fn oracle_style_gradient(gate: &mut Gate) {
    let cfg = NetConfig {
        width: 4,
        levels: 2,
        style_dim: 4,
        num_domains: 2,
        phi_widths: vec![4, 6],
        phi_seed: 21,
    };
    let mut nets = Networks::<f64>::new(cfg, 77).unwrap();
    let mut r = rng(1201);
    let img = ArrayD::<f64>::from_shape_fn(IxDyn(&[1, 3, 4, 4]), |_| r.gen_range(-0.9..0.9));
    let target = ImageBatch::new(ArrayD::from_shape_fn(IxDyn(&[2, 3, 4, 4]), |_| {
        r.gen_range(-0.9..0.9)
    }))
    .unwrap();
    let stats = nets.extract_statistics(&target).unwrap();

    let value = |nets: &Networks<f64>, x: &ArrayD<f64>| -> f64 {
        let tape = Tape::new();
        let v = tape.constant(x.clone());
        style_loss_t(nets, &tape, v, &stats).scalar()
    };

    // The probe image lives in the networks' own store: a tape resolves
    // parameters by id, so every param on one tape must come from one store.
    let id = nets.store.add("probe", img.clone(), true);
    let analytic = {
        let tape = Tape::new();
        let v = tape.param(&nets.store, id);
        let loss = style_loss_t(&nets, &tape, v, &stats);
        let grads = tape.backward(loss);
        grads.param_grad(id).unwrap().clone()
    };

    let h = 1e-5;
    let mut worst_rel = 0.0f64;
    for c in 0..3 {
        for y in 0..4 {
            for x in 0..4 {
                let mut plus = img.clone();
                plus[[0, c, y, x]] += h;
                let mut minus = img.clone();
                minus[[0, c, y, x]] -= h;
                let fd = (value(&nets, &plus) - value(&nets, &minus)) / (2.0 * h);
                let g = analytic[[0, c, y, x]];
                let rel = (fd - g).abs() / g.abs().max(1e-6);
                worst_rel = worst_rel.max(rel);
            }
        }
    }
    gate.check(
        "style-gradient-oracle",
        worst_rel < 1e-3,
        format!("max relative error {worst_rel:.2e} over all 48 pixels (tol 1e-3)"),
    );
}

/// Patch sampling: each quarter-turn appears with frequency 0.25 +- 0.02
/// over ten thousand draws, and rotation permutes pixels without changing
/// their multiset.
fn oracle_patch_rotation(gate: &mut Gate) {
    let mut r = rng(1301);
    let specs = sample_patch_plan(1, 64, 64, 10_000, 8, &mut r).unwrap();
    let mut counts = [0usize; 4];
    for s in &specs {
        counts[s.rot as usize] += 1;
    }
    let freqs: Vec<f64> = counts.iter().map(|&c| c as f64 / 10_000.0).collect();
    let freq_ok = freqs.iter().all(|f| (f - 0.25).abs() <= 0.02);

    let mut r2 = rng(1302);
    let imgs = ArrayD::<f64>::from_shape_fn(IxDyn(&[1, 3, 16, 16]), |_| r2.gen_range(-1.0..1.0));
    let mut multiset_ok = true;
    for rot in 0..4u8 {
        let tape = Tape::<f64>::new();
        let v = tape.constant(imgs.clone());
        let straight = v.extract_patches(
            &[PatchSpec {
                image: 0,
                top: 3,
                left: 5,
                rot: 0,
            }],
            8,
        );
        let turned = tape.constant(imgs.clone()).extract_patches(
            &[PatchSpec {
                image: 0,
                top: 3,
                left: 5,
                rot,
            }],
            8,
        );
        let mut a: Vec<f64> = straight.value().iter().copied().collect();
        let mut b: Vec<f64> = turned.value().iter().copied().collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        if a != b {
            multiset_ok = false;
        }
    }
    gate.check(
        "patch-rotation-oracle",
        freq_ok && multiset_ok,
        format!(
            "rotation frequencies {:?} (tol 0.25 +- 0.02); pixel multisets exact: {multiset_ok}",
            freqs.iter().map(|f| format!("{f:.3}")).collect::<Vec<_>>()
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion group 2: structural invariants
// ---------------------------------------------------------------------------

fn tiny_cfg() -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.seed = 21;
    cfg.resolution = 16;
    cfg.width = 4;
    cfg.levels = 2;
    cfg.style_dim = 4;
    cfg.phi_widths = vec![4];
    cfg.phi_seed = 3;
    cfg.batch_size = 1;
    cfg.iterations = 4;
    cfg.patch_size = 4;
    cfg.patch_count = 2;
    cfg.fewshot_count = 3;
    cfg.checkpoint_every = 0;
    cfg.log_every = 1;
    cfg
}

fn synthetic_image(res: usize, seed: u64) -> ImageBatch<f64> {
    let mut r = rng(seed);
    ImageBatch::new(ArrayD::from_shape_fn(IxDyn(&[1, 3, res, res]), |_| {
        r.gen_range(-1.0..1.0)
    }))
    .unwrap()
}

fn tiny_data(seed: u64) -> TrainData<f64> {
    let mk = |role, count: usize, base: u64| {
        DomainDataset::from_images(
            (0..count)
                .map(|i| synthetic_image(16, base + i as u64))
                .collect(),
            role,
        )
    };
    TrainData::from_datasets(
        vec![mk(Role::Source, 4, seed * 100), mk(Role::Anchor, 4, seed * 100 + 50)],
        mk(Role::Fewshot, 3, seed * 100 + 90),
    )
    .unwrap()
}

/// Blend weights stay on the simplex through 100 optimizer steps and move
/// away from their uniform start.
fn structural_simplex(gate: &mut Gate) {
    let mut cfg = tiny_cfg();
    cfg.iterations = 100;
    let mut t = Trainer::<f64>::new(cfg).unwrap();
    let mut data = tiny_data(31);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let batch = t.next_batch(&mut data);
        t.train_step(&batch).unwrap();
        let w = t.manifold.weights(&t.nets.store);
        worst = worst.max((w.iter().sum::<f64>() - 1.0).abs());
    }
    let logits = t.nets.store.value(t.manifold.logits);
    let moved = logits.iter().any(|&v| v != 0.0);
    gate.check(
        "simplex-invariant",
        worst < 1e-6 && moved,
        format!("max |sum(weights) - 1| = {worst:.2e} over 100 steps (tol 1e-6); logits updated: {moved}"),
    );
}

/// A freshly initialized refinement head contributes exactly nothing.
fn structural_zero_residual(gate: &mut Gate) {
    let t = Trainer::<f64>::new(tiny_cfg()).unwrap();
    let data = tiny_data(32);
    let bank = t.reference_style_bank(&data).unwrap();
    let src = synthetic_image(16, 3200);
    let with = translate_masked(
        &t.nets,
        &t.manifold,
        &bank,
        ComponentMask::default(),
        &src,
        ConditioningMode::General,
        None,
        &mut rng(1),
    )
    .unwrap();
    let without = translate_masked(
        &t.nets,
        &t.manifold,
        &bank,
        ComponentMask::parse(&["no_germ".to_string()]).unwrap(),
        &src,
        ConditioningMode::General,
        None,
        &mut rng(1),
    )
    .unwrap();
    let exact = with.data() == without.data();
    gate.check(
        "zero-residual-exact",
        exact,
        format!("fresh refinement output bitwise equals the unrefined path: {exact}"),
    );
}

/// The feature extractor never moves, and each optimizer touches only its
/// own parameter group (checksum comparison).
fn structural_frozen_and_exclusive(gate: &mut Gate) {
    let mut t = Trainer::<f64>::new(tiny_cfg()).unwrap();
    let mut data = tiny_data(33);
    let all_ids: Vec<ParamId> = t.nets.store.ids().collect();
    let phi_ids: Vec<ParamId> = all_ids
        .iter()
        .copied()
        .filter(|&id| t.nets.store.name(id).starts_with("phi."))
        .collect();
    let gen_ids = t.nets.generator_ids();
    let disc_ids = t.nets.discriminator_ids();

    let phi0 = t.nets.store.fingerprint(&phi_ids);
    let batch = t.next_batch(&mut data);
    let draws = t.draw_iteration(&batch).unwrap();
    let g0 = t.nets.store.fingerprint(&gen_ids);
    t.update_d(&batch, &draws).unwrap();
    let gen_still = t.nets.store.fingerprint(&gen_ids) == g0;
    let d1 = t.nets.store.fingerprint(&disc_ids);
    t.update_g(&batch, &draws).unwrap();
    let disc_still = t.nets.store.fingerprint(&disc_ids) == d1;
    for _ in 0..3 {
        let batch = t.next_batch(&mut data);
        t.train_step(&batch).unwrap();
    }
    let phi_still = t.nets.store.fingerprint(&phi_ids) == phi0;
    gate.check(
        "frozen-extractor-and-update-exclusivity",
        phi_still && gen_still && disc_still,
        format!(
            "extractor checksum stable: {phi_still}; discriminator step left generator: {gen_still}; generator step left discriminator: {disc_still}"
        ),
    );
}

/// Two runs from the same seed produce byte-identical metrics and identical
/// parameter checksums.
fn structural_reproducibility(gate: &mut Gate) {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let mut t = Trainer::<f64>::new(tiny_cfg()).unwrap();
        let mut data = tiny_data(34);
        let out = dir.path().join(name);
        let outcome = fit(&mut t, &mut data, &out).unwrap();
        let ids: Vec<ParamId> = t.nets.store.ids().collect();
        (
            t.nets.store.fingerprint(&ids),
            std::fs::read(outcome.metrics_path).unwrap(),
        )
    };
    let (f1, m1) = run("a");
    let (f2, m2) = run("b");
    gate.check(
        "bitwise-reproducibility",
        f1 == f2 && m1 == m2,
        format!(
            "parameter checksums equal: {}; metrics logs byte-identical: {}",
            f1 == f2,
            m1 == m2
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion group 3-5: toy end-to-end runs
// ---------------------------------------------------------------------------

fn toy_cfg(corpus: &Path, out: &Path, ablation: &[&str], iters: u64, fewshot: usize) -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.seed = 7;
    cfg.resolution = 64;
    cfg.width = 16;
    cfg.levels = 2;
    cfg.style_dim = 8;
    cfg.batch_size = 1;
    cfg.iterations = iters;
    cfg.patch_count = 4;
    cfg.fewshot_count = fewshot;
    cfg.lambda_style = TOY_STYLE_WEIGHT;
    cfg.log_every = 100;
    cfg.checkpoint_every = 0;
    cfg.ablation = ablation.iter().map(|s| s.to_string()).collect();
    cfg.data_root = corpus.display().to_string();
    cfg.out_dir = out.display().to_string();
    cfg
}

struct ToyRun {
    trainer: Trainer<DefaultScalar>,
    data: TrainData<DefaultScalar>,
    checkpoint: std::path::PathBuf,
}

fn train_toy(corpus: &Path, out: &Path, ablation: &[&str], iters: u64, fewshot: usize) -> ToyRun {
    let cfg = toy_cfg(corpus, out, ablation, iters, fewshot);
    let mut trainer = Trainer::<DefaultScalar>::new(cfg).unwrap();
    let mut data = TrainData::load(&trainer.cfg, corpus).unwrap();
    let outcome = fit(&mut trainer, &mut data, out).unwrap();
    ToyRun {
        trainer,
        data,
        checkpoint: outcome.final_checkpoint,
    }
}

fn embed(nets: &Networks<DefaultScalar>, images: &ImageBatch<DefaultScalar>) -> EmbeddingSet {
    EmbeddingSet::compute(nets, images).unwrap()
}

fn rows(ds: &DomainDataset<DefaultScalar>, k: usize) -> Vec<ImageBatch<DefaultScalar>> {
    (0..k.min(ds.len())).map(|i| ds.image(i).clone()).collect()
}

#[allow(clippy::too_many_lines)]
fn toy_criteria(gate: &mut Gate) {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let spec = ToySpec::default(); // 64x64, 40 source, 40 anchor, 10 few-shot
    generate_toy_corpus(&corpus, &spec).unwrap();
    println!("toy corpus ready; training 4 runs x {TOY_ITERS}/{ONE_SHOT_ITERS} iterations...");

    let full = train_toy(&corpus, &dir.path().join("run_full"), &[], TOY_ITERS, 10);
    println!("full run trained (t={:.0}s)", gate.started.elapsed().as_secs_f64());
    let lgfs = train_toy(
        &corpus,
        &dir.path().join("run_lgfs"),
        &["lgfs_only"],
        TOY_ITERS,
        10,
    );
    println!("lgfs_only run trained (t={:.0}s)", gate.started.elapsed().as_secs_f64());
    let nostyle = train_toy(
        &corpus,
        &dir.path().join("run_nostyle"),
        &["no_style"],
        TOY_ITERS,
        10,
    );
    println!("no_style run trained (t={:.0}s)", gate.started.elapsed().as_secs_f64());

    let model_full = load_model::<DefaultScalar>(&full.checkpoint).unwrap();
    let model_lgfs = load_model::<DefaultScalar>(&lgfs.checkpoint).unwrap();
    let model_nostyle = load_model::<DefaultScalar>(&nostyle.checkpoint).unwrap();

    let sources = full.data.anchor(0).all().unwrap();
    let fewshot = full.data.fewshot().all().unwrap();
    let emb_target = embed(&model_full.nets, &fewshot);
    let emb_sources = embed(&model_full.nets, &sources);
    let fre_src = frechet_distance(&emb_sources, &emb_target).unwrap();

    // 3a: training must at least halve the distance achieved by the same
    // architecture with untrained weights, and beat the raw sources.
    let fre_untrained = {
        let fresh = Trainer::<DefaultScalar>::new(toy_cfg(
            &corpus,
            &dir.path().join("unused"),
            &[],
            TOY_ITERS,
            10,
        ))
        .unwrap();
        let bank = fresh.reference_style_bank(&full.data).unwrap();
        let outs = translate_masked(
            &fresh.nets,
            &fresh.manifold,
            &bank,
            fresh.mask,
            &sources,
            ConditioningMode::General,
            None,
            &mut rng(41),
        )
        .unwrap();
        // The frozen extractor is identical across trainers (same seed), so
        // embeddings live in the same space as the trained model's.
        frechet_distance(&embed(&fresh.nets, &outs), &emb_target).unwrap()
    };
    let out_full = model_full
        .translate(&sources, ConditioningMode::General, None, &mut rng(41))
        .unwrap();
    let fre_full = frechet_distance(&embed(&model_full.nets, &out_full), &emb_target).unwrap();
    gate.check(
        "toy-distance-drop",
        fre_full <= 0.5 * fre_untrained && fre_full < fre_src,
        format!(
            "trained {fre_full:.3} vs untrained-network {fre_untrained:.3} (need <= 50%) and raw-source {fre_src:.3} (need strictly lower)"
        ),
    );

    // 3b: matched exemplar conditioning beats mismatched by >= 20%.
    let src_rows = rows(full.data.anchor(0), PAIR_COUNT);
    let few_rows = rows(full.data.fewshot(), PAIR_COUNT);
    let k = src_rows.len().min(few_rows.len());
    let mut out_rows = Vec::with_capacity(k);
    for i in 0..k {
        out_rows.push(
            model_full
                .translate(
                    &src_rows[i],
                    ConditioningMode::Exemplar,
                    Some(&few_rows[i]),
                    &mut rng(42),
                )
                .unwrap(),
        );
    }
    let refs: Vec<ImageBatch<DefaultScalar>> = few_rows[..k].to_vec();
    let matched = exemplar_fidelity(&model_full.nets, &out_rows, &refs).unwrap();
    let mismatched = {
        let mut acc = 0.0;
        let mut n = 0usize;
        for (i, out) in out_rows.iter().enumerate() {
            for (j, r) in refs.iter().enumerate() {
                if i != j {
                    acc +=
                        exemplar_fidelity(&model_full.nets, &[out.clone()], &[r.clone()]).unwrap();
                    n += 1;
                }
            }
        }
        acc / n as f64
    };
    gate.check(
        "toy-exemplar-fidelity",
        matched <= 0.8 * mismatched,
        format!("matched {matched:.4} vs cross-pair mean {mismatched:.4} (need matched <= 80%)"),
    );

    // 3c: without adversarial/global machinery, region consistency degrades.
    let manifest = read_manifest(&corpus.join(MANIFEST)).unwrap();
    let source_entries: Vec<_> = manifest
        .iter()
        .filter(|e| e.domain == "source")
        .take(PAIR_COUNT)
        .cloned()
        .collect();
    let masks = sky_masks(&source_entries, 64);
    let probe_sources = rows(full.data.anchor(0), PAIR_COUNT);
    let general_rows = |model: &stylebend::training::LoadedModel<DefaultScalar>| {
        probe_sources
            .iter()
            .map(|s| {
                model
                    .translate(s, ConditioningMode::General, None, &mut rng(43))
                    .unwrap()
            })
            .collect::<Vec<_>>()
    };
    let probe_full =
        consistency_probe(&general_rows(&model_full), &probe_sources, &masks).unwrap();
    let probe_lgfs =
        consistency_probe(&general_rows(&model_lgfs), &probe_sources, &masks).unwrap();
    gate.check(
        "toy-consistency-ordering",
        probe_lgfs > probe_full,
        format!("feature-stats-only probe {probe_lgfs:.5} vs full model {probe_full:.5} (need strictly higher)"),
    );

    // 3d: removing the feature-statistics loss hurts the target distance.
    let out_nostyle = model_nostyle
        .translate(&sources, ConditioningMode::General, None, &mut rng(44))
        .unwrap();
    let fre_nostyle =
        frechet_distance(&embed(&model_nostyle.nets, &out_nostyle), &emb_target).unwrap();
    gate.check(
        "toy-style-loss-matters",
        fre_nostyle > fre_full,
        format!("no_style distance {fre_nostyle:.3} vs full {fre_full:.3} (need strictly higher)"),
    );

    // 3e: a single-exemplar target set still trains and changes the input.
    let one = train_toy(
        &corpus,
        &dir.path().join("run_oneshot"),
        &[],
        ONE_SHOT_ITERS,
        1,
    );
    let model_one = load_model::<DefaultScalar>(&one.checkpoint).unwrap();
    let one_sources = ImageBatch::stack(&rows(one.data.anchor(0), PAIR_COUNT)).unwrap();
    let out_one = model_one
        .translate(&one_sources, ConditioningMode::General, None, &mut rng(45))
        .unwrap();
    let mean_change = {
        let a = out_one.data();
        let b = one_sources.data();
        let mut acc = 0.0f64;
        for (x, y) in a.iter().zip(b.iter()) {
            acc += (x - y).abs() as f64;
        }
        acc / a.len() as f64
    };
    gate.check(
        "toy-one-shot-completes",
        mean_change > 0.02,
        format!("|T| = 1 run finished {ONE_SHOT_ITERS} iterations; mean |out - src| = {mean_change:.4} (need > 0.02)"),
    );

    // 4: the learned residual moves cycled anchors toward the target set.
    let anchor_imgs = full.data.anchor(1).all().unwrap();
    let corrected = anchor_based_translate(
        &model_full.nets,
        &model_full.bank,
        model_full.mask,
        &anchor_imgs,
        1,
        ConditioningMode::General,
        None,
        &mut rng(46),
    )
    .unwrap();
    let uncorrected =
        anchor_cycle_uncorrected(&model_full.nets, &model_full.bank, &anchor_imgs, 1).unwrap();
    let fre_corrected =
        frechet_distance(&embed(&model_full.nets, &corrected), &emb_target).unwrap();
    let fre_uncorrected =
        frechet_distance(&embed(&model_full.nets, &uncorrected), &emb_target).unwrap();
    gate.check(
        "anchor-residual-direction",
        fre_corrected < fre_uncorrected,
        format!("corrected {fre_corrected:.3} vs uncorrected {fre_uncorrected:.3} (need strictly lower)"),
    );

    // 5: checkpoint round trip reproduces live outputs within 1e-6.
    let bank = full.trainer.reference_style_bank(&full.data).unwrap();
    let mut worst = 0.0f64;
    for i in 0..10 {
        let probe = {
            let mut r = rng(4700 + i);
            ImageBatch::<DefaultScalar>::new(ArrayD::from_shape_fn(
                IxDyn(&[1, 3, 64, 64]),
                |_| r.gen_range(-1.0..1.0),
            ))
            .unwrap()
        };
        let live = translate_masked(
            &full.trainer.nets,
            &full.trainer.manifold,
            &bank,
            full.trainer.mask,
            &probe,
            ConditioningMode::General,
            None,
            &mut rng(4800 + i),
        )
        .unwrap();
        let loaded = model_full
            .translate(&probe, ConditioningMode::General, None, &mut rng(4800 + i))
            .unwrap();
        for (a, b) in live.data().iter().zip(loaded.data().iter()) {
            worst = worst.max((a - b).abs() as f64);
        }
    }
    gate.check(
        "checkpoint-round-trip",
        worst <= 1e-6,
        format!("max |live - restored| = {worst:.2e} over 10 random inputs (tol 1e-6)"),
    );
}

#[test]
fn acceptance() {
    let mut gate = Gate::new();

    oracle_stat_imposition(&mut gate);
    oracle_distribution_distance(&mut gate);
    oracle_style_gradient(&mut gate);
    oracle_patch_rotation(&mut gate);

    structural_simplex(&mut gate);
    structural_zero_residual(&mut gate);
    structural_frozen_and_exclusive(&mut gate);
    structural_reproducibility(&mut gate);

    toy_criteria(&mut gate);

    gate.finish();
}

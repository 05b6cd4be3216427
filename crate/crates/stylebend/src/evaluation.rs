//! Quality measurement for trained models: an embedding-space distribution
//! distance, exemplar-conditioned fidelity, a spatial-consistency probe,
//! anchor-based translation, and a run-level report with a contact sheet.
//!
//! Everything here is a pure function of (checkpoint, data, seed): repeated
//! evaluation of the same run reproduces every byte.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayD, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::toy::{read_manifest, sky_masks, MANIFEST};
use crate::data::{load_domain, save_png, ImageBatch, Role};
use crate::losses::style_loss;
use crate::manifold::StyleBank;
use crate::networks::Networks;
use crate::residual::{translate_styled, ConditioningMode};
use crate::training::{load_model, ComponentMask, LoadedModel};
use crate::{Error, Result, Scalar};

/// Covariance regularizer added to both covariance matrices so the matrix
/// square root is well-conditioned even for degenerate sample sets.
const COV_EPSILON: f64 = 1e-6;

/// Shift applied to unit-range intensities before forming output/input
/// ratios, keeping them finite and positive.
const RATIO_SHIFT: f64 = 0.05;

/// RNG stream for evaluation-time noise draws (distinct from training).
const EVAL_STREAM: u64 = 0x20;

// ---------------------------------------------------------------------------
// Embeddings
// ---------------------------------------------------------------------------

/// A set of image embeddings, one row per image. Statistics are always
/// accumulated in `f64` regardless of the model scalar.
#[derive(Clone, Debug)]
pub struct EmbeddingSet {
    data: Array2<f64>,
}

impl EmbeddingSet {
    /// Embeds a batch: deepest extractor stage, globally average-pooled.
    pub fn compute<S: Scalar>(nets: &Networks<S>, images: &ImageBatch<S>) -> Result<Self> {
        let e = nets.embed(images)?;
        Ok(EmbeddingSet {
            data: e.mapv(|v| v.as_f64()),
        })
    }

    /// Wraps raw embedding rows (used by tests and oracles).
    pub fn from_rows(data: Array2<f64>) -> Result<Self> {
        if data.nrows() < 2 {
            return Err(Error::Data(
                "an embedding set needs at least two rows for covariance".into(),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical {
                term: "embedding".into(),
            });
        }
        Ok(EmbeddingSet { data })
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    /// Column means.
    pub fn mean(&self) -> Array1<f64> {
        let n = self.data.nrows() as f64;
        let mut mu = Array1::<f64>::zeros(self.data.ncols());
        for row in self.data.rows() {
            mu = mu + row.to_owned();
        }
        mu / n
    }

    /// Unbiased sample covariance (divides by `n - 1`).
    pub fn covariance(&self) -> Array2<f64> {
        let (n, d) = (self.data.nrows(), self.data.ncols());
        let mu = self.mean();
        let mut cov = Array2::<f64>::zeros((d, d));
        for row in self.data.rows() {
            let c = row.to_owned() - &mu;
            for i in 0..d {
                for j in 0..d {
                    cov[[i, j]] += c[i] * c[j];
                }
            }
        }
        cov / (n as f64 - 1.0)
    }
}

// ---------------------------------------------------------------------------
// Symmetric eigendecomposition (cyclic Jacobi) and the PSD matrix square root
// ---------------------------------------------------------------------------

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors in columns, so
/// `A = V diag(w) V^T`. The input is symmetrized first; asymmetry beyond
/// round-off is a caller bug, not detected here.
pub fn symmetric_eigen(a: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let d = a.nrows();
    if a.ncols() != d {
        return Err(Error::Shape(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            d,
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            term: "symmetric_eigen".into(),
        });
    }
    let mut m = Array2::<f64>::zeros((d, d));
    for i in 0..d {
        for j in 0..d {
            m[[i, j]] = 0.5 * (a[[i, j]] + a[[j, i]]);
        }
    }
    let mut v = Array2::<f64>::eye(d);
    if d <= 1 {
        return Ok((m.diag().to_owned(), v));
    }

    let frob: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-14 * frob.max(1.0);
    for _sweep in 0..100 {
        let off: f64 = {
            let mut s = 0.0;
            for p in 0..d {
                for q in (p + 1)..d {
                    s += m[[p, q]] * m[[p, q]];
                }
            }
            s.sqrt()
        };
        if off <= tol {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = m[[p, q]];
                if apq.abs() <= tol / (d as f64) {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // Rotate rows/columns p and q of the (symmetric) working
                // matrix and accumulate the rotation into the eigenvectors.
                for k in 0..d {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..d {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..d {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    Ok((m.diag().to_owned(), v))
}

/// Symmetric positive-semidefinite square root: eigenvalues are clamped at
/// zero before the root, so slightly indefinite inputs (round-off) are fine.
pub fn sqrtm_psd(a: &Array2<f64>) -> Result<Array2<f64>> {
    let (w, v) = symmetric_eigen(a)?;
    let d = a.nrows();
    let mut out = Array2::<f64>::zeros((d, d));
    for k in 0..d {
        let s = w[k].max(0.0).sqrt();
        for i in 0..d {
            for j in 0..d {
                out[[i, j]] += s * v[[i, k]] * v[[j, k]];
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Distribution distance
// ---------------------------------------------------------------------------

/// Squared 2-Wasserstein distance between Gaussian fits of two embedding
/// sets: `||mu_x - mu_y||^2 + tr(Cx + Cy - 2 (Cx Cy)^{1/2})`, with both
/// covariances regularized by `COV_EPSILON * I` before any spectral work.
/// The cross term is evaluated through the symmetric form
/// `tr((Cx^{1/2} Cy Cx^{1/2})^{1/2})`.
pub fn frechet_distance(x: &EmbeddingSet, y: &EmbeddingSet) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::Shape(format!(
            "embedding dimensions differ: {} vs {}",
            x.dim(),
            y.dim()
        )));
    }
    if x.len() < 2 || y.len() < 2 {
        return Err(Error::Data(
            "distribution distance needs at least two embeddings per side".into(),
        ));
    }
    let d = x.dim();
    let (mx, my) = (x.mean(), y.mean());
    let mut cx = x.covariance();
    let mut cy = y.covariance();
    for i in 0..d {
        cx[[i, i]] += COV_EPSILON;
        cy[[i, i]] += COV_EPSILON;
    }

    let mean_term: f64 = mx
        .iter()
        .zip(my.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let root_cx = sqrtm_psd(&cx)?;
    // m = Cx^{1/2} Cy Cx^{1/2}, symmetric PSD up to round-off.
    let tmp = root_cx.dot(&cy);
    let m = tmp.dot(&root_cx);
    let (w, _) = symmetric_eigen(&m)?;
    let tr_cross: f64 = w.iter().map(|&l| l.max(0.0).sqrt()).sum();
    let tr_cx: f64 = cx.diag().sum();
    let tr_cy: f64 = cy.diag().sum();
    let dist = mean_term + tr_cx + tr_cy - 2.0 * tr_cross;
    if !dist.is_finite() {
        return Err(Error::Numerical {
            term: "frechet_distance".into(),
        });
    }
    Ok(dist)
}

/// Closed-form value of the same distance for two Gaussians given exactly —
/// the independent oracle used to validate [`frechet_distance`] on sampled
/// data. Covariances must be diagonal (`diag_x`, `diag_y`).
pub fn gaussian_frechet_oracle(
    mean_x: &Array1<f64>,
    diag_x: &Array1<f64>,
    mean_y: &Array1<f64>,
    diag_y: &Array1<f64>,
) -> f64 {
    let mean_term: f64 = mean_x
        .iter()
        .zip(mean_y.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let cov_term: f64 = diag_x
        .iter()
        .zip(diag_y.iter())
        .map(|(&a, &b)| a + b - 2.0 * (a * b).sqrt())
        .sum();
    mean_term + cov_term
}

// ---------------------------------------------------------------------------
// Exemplar fidelity
// ---------------------------------------------------------------------------

/// Mean feature-statistics distance between outputs and their paired
/// reference images. Matched pairs from an exemplar-conditioned model should
/// score lower than deliberately mismatched pairs.
pub fn exemplar_fidelity<S: Scalar>(
    nets: &Networks<S>,
    outputs: &[ImageBatch<S>],
    references: &[ImageBatch<S>],
) -> Result<f64> {
    if outputs.is_empty() || outputs.len() != references.len() {
        return Err(Error::Data(format!(
            "fidelity needs equal non-empty lists, got {} outputs and {} references",
            outputs.len(),
            references.len()
        )));
    }
    let mut acc = 0.0;
    for (out, target) in outputs.iter().zip(references) {
        acc += style_loss(nets, out, target)?.as_f64();
    }
    Ok(acc / outputs.len() as f64)
}

// ---------------------------------------------------------------------------
// Spatial-consistency probe
// ---------------------------------------------------------------------------

/// Measures how uniformly a translation treats coherent regions: for each
/// image, per-pixel intensity ratios `output / input` are collected inside
/// each region of a boolean mask (the `true` region and the `false` region),
/// the population variance is taken per region, and everything is averaged.
/// Uniform recoloring scores near zero; spatially incoherent edits score
/// high. Intensities are unit-range luminances shifted by a small constant so
/// ratios stay finite.
pub fn consistency_probe<S: Scalar>(
    outputs: &[ImageBatch<S>],
    sources: &[ImageBatch<S>],
    masks: &[Array2<bool>],
) -> Result<f64> {
    if outputs.is_empty() || outputs.len() != sources.len() || outputs.len() != masks.len() {
        return Err(Error::Data(format!(
            "consistency probe needs equal non-empty lists, got {} outputs, {} sources, {} masks",
            outputs.len(),
            sources.len(),
            masks.len()
        )));
    }
    let mut total = 0.0;
    let mut region_count = 0usize;
    for ((out, src), mask) in outputs.iter().zip(sources).zip(masks) {
        if out.len() != 1 || src.len() != 1 {
            return Err(Error::Shape(
                "consistency probe expects single-image batches".into(),
            ));
        }
        let (h, w) = (src.height(), src.width());
        if out.height() != h || out.width() != w || mask.dim() != (h, w) {
            return Err(Error::Shape(
                "output, source, and mask resolutions must agree".into(),
            ));
        }
        let lum = |b: &ImageBatch<S>, y: usize, x: usize| -> f64 {
            let d = b.data();
            let mut s = 0.0;
            for c in 0..3 {
                s += (d[[0, c, y, x]].as_f64() + 1.0) * 0.5;
            }
            s / 3.0 + RATIO_SHIFT
        };
        for region in [true, false] {
            let mut ratios = Vec::new();
            for y in 0..h {
                for x in 0..w {
                    if mask[[y, x]] == region {
                        ratios.push(lum(out, y, x) / lum(src, y, x));
                    }
                }
            }
            if ratios.len() < 2 {
                continue;
            }
            let n = ratios.len() as f64;
            let mean = ratios.iter().sum::<f64>() / n;
            let var = ratios.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
            total += var;
            region_count += 1;
        }
    }
    if region_count == 0 {
        return Err(Error::Data(
            "no region held at least two pixels; nothing to probe".into(),
        ));
    }
    Ok(total / region_count as f64)
}

// ---------------------------------------------------------------------------
// Anchor-based translation
// ---------------------------------------------------------------------------

fn check_anchor_index<S: Scalar>(bank: &StyleBank<S>, anchor_index: usize) -> Result<()> {
    if anchor_index == 0 || anchor_index >= bank.styles.len() {
        return Err(Error::Config(format!(
            "anchor index must name a non-source anchor in 1..{}, got {anchor_index}",
            bank.styles.len()
        )));
    }
    Ok(())
}

/// Projects anchor-domain images through the source domain and back toward
/// their anchor without refinement: encode, decode with the source mean
/// style, re-encode, decode with the anchor mean style.
pub fn anchor_cycle_uncorrected<S: Scalar>(
    nets: &Networks<S>,
    bank: &StyleBank<S>,
    anchors: &ImageBatch<S>,
    anchor_index: usize,
) -> Result<ImageBatch<S>> {
    check_anchor_index(bank, anchor_index)?;
    let cycled = translate_styled(nets, anchors, &bank.styles[0], None)?;
    translate_styled(nets, &cycled, &bank.styles[anchor_index], None)
}

/// The same cycle with the learned residual applied on the way back, so the
/// result lands near the few-shot target rather than the anchor. Requires
/// the refinement module; a model trained without it rejects the call.
#[allow(clippy::too_many_arguments)]
pub fn anchor_based_translate<S: Scalar>(
    nets: &Networks<S>,
    bank: &StyleBank<S>,
    mask: ComponentMask,
    anchors: &ImageBatch<S>,
    anchor_index: usize,
    mode: ConditioningMode,
    exemplar: Option<&ImageBatch<S>>,
    rng: &mut ChaCha8Rng,
) -> Result<ImageBatch<S>> {
    if !mask.germ_on() {
        return Err(Error::Config(
            "anchor-based translation needs the refinement module, which this model ablates"
                .into(),
        ));
    }
    check_anchor_index(bank, anchor_index)?;
    let cond = crate::residual::resolve_conditioning(nets, mode, exemplar, rng)?;
    let cycled = translate_styled(nets, anchors, &bank.styles[0], None)?;
    translate_styled(nets, &cycled, &bank.styles[anchor_index], Some(&cond))
}

// ---------------------------------------------------------------------------
// Run-level evaluation
// ---------------------------------------------------------------------------

/// Contact-sheet column layout, left to right.
pub const SHEET_COLUMNS: [&str; 4] = ["source", "general", "exemplar", "exemplar-reference"];

/// Named measurements from one evaluation pass.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalSummary {
    pub entries: Vec<(String, f64)>,
}

impl EvalSummary {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| *v)
    }
}

/// Artifacts written by [`evaluate_run`].
pub struct EvalOutcome {
    pub summary: EvalSummary,
    pub metrics_path: PathBuf,
    pub sheet_path: PathBuf,
}

fn horizontal_strip<S: Scalar>(row: &[ImageBatch<S>]) -> ImageBatch<S> {
    let (h, w) = (row[0].height(), row[0].width());
    let cols = row.len();
    let data = ArrayD::from_shape_fn(IxDyn(&[1, 3, h, cols * w]), |idx| {
        let (c, y, x) = (idx[1], idx[2], idx[3]);
        row[x / w].data()[[0, c, y, x % w]]
    });
    ImageBatch::new(data).expect("strip values stay in range")
}

/// Stacks single-image batches into a grid image: one row per example, one
/// column per entry of [`SHEET_COLUMNS`].
pub fn contact_sheet<S: Scalar>(rows: &[Vec<ImageBatch<S>>]) -> Result<ImageBatch<S>> {
    if rows.is_empty() || rows.iter().any(|r| r.len() != SHEET_COLUMNS.len()) {
        return Err(Error::Data(format!(
            "a contact sheet needs rows of exactly {} images",
            SHEET_COLUMNS.len()
        )));
    }
    let strips: Vec<ImageBatch<S>> = rows.iter().map(|r| horizontal_strip(r)).collect();
    let (h, w) = (strips[0].height(), strips[0].width());
    if strips.iter().any(|s| s.height() != h || s.width() != w) {
        return Err(Error::Shape("contact sheet rows must share a size".into()));
    }
    let data = ArrayD::from_shape_fn(IxDyn(&[1, 3, strips.len() * h, w]), |idx| {
        let (c, y, x) = (idx[1], idx[2], idx[3]);
        strips[y / h].data()[[0, c, y % h, x]]
    });
    ImageBatch::new(data)
}

fn single<S: Scalar>(batch: &ImageBatch<S>, i: usize) -> ImageBatch<S> {
    let (h, w) = (batch.height(), batch.width());
    let data = ArrayD::from_shape_fn(IxDyn(&[1, 3, h, w]), |idx| {
        batch.data()[[i, idx[1], idx[2], idx[3]]]
    });
    ImageBatch::new(data).expect("slice of a valid batch is valid")
}

/// Evaluates a checkpoint against a dataset root and writes a key-value
/// metrics file plus a contact sheet (`source | general | exemplar |
/// exemplar-reference`) under `out_dir`. Pure function of its arguments:
/// the same checkpoint, data, and seed reproduce identical artifacts.
///
/// Reported entries:
/// - `frechet_source_to_target`: distance from untranslated sources to the
///   few-shot set (the do-nothing baseline);
/// - `frechet_general_to_target` and, when the refinement module is present,
///   `frechet_exemplar_to_target`: the same distance for translated outputs;
/// - `exemplar_fidelity_matched` / `exemplar_fidelity_mismatched`: mean
///   feature-statistics distance to the conditioning exemplar vs. the
///   cross-pairing mean over every non-conditioning reference (omitted when
///   a single reference leaves no mismatched pairs);
/// - `consistency_probe`: region-uniformity of the general translation
///   (only when the dataset root carries a manifest with region data);
/// - `exemplar_available`, `steps`, `eval_count`.
pub fn evaluate_run<S: Scalar>(
    checkpoint: &Path,
    data_root: &Path,
    out_dir: &Path,
    seed: u64,
    eval_count: usize,
) -> Result<EvalOutcome> {
    if eval_count < 2 {
        return Err(Error::Config(
            "evaluation needs at least two examples".into(),
        ));
    }
    let model: LoadedModel<S> = load_model(checkpoint)?;
    let res = model.cfg.resolution;
    let sources = load_domain::<S>(&data_root.join("source"), Role::Source, res, None)?;
    let fewshot = load_domain::<S>(
        &data_root.join("fewshot"),
        Role::Fewshot,
        res,
        Some(model.cfg.fewshot_count),
    )?;
    let k = eval_count.min(sources.len());
    if k < 2 {
        return Err(Error::Data(
            "evaluation needs at least two source images".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(EVAL_STREAM);

    let source_rows: Vec<ImageBatch<S>> = (0..k).map(|i| sources.image(i).clone()).collect();
    let source_batch = ImageBatch::stack(&source_rows)?;
    let fewshot_batch = fewshot.all()?;

    // General-mode translation of the whole panel at once (one shared noise
    // draw, deterministic under the fixed seed).
    let general_batch =
        model.translate(&source_batch, ConditioningMode::General, None, &mut rng)?;
    let general_rows: Vec<ImageBatch<S>> = (0..k).map(|i| single(&general_batch, i)).collect();

    // Exemplar-mode translation pairs source i with few-shot image i (mod).
    let exemplar_ok = model.mask.exemplar_allowed();
    let references: Vec<ImageBatch<S>> = (0..k)
        .map(|i| fewshot.image(i % fewshot.len()).clone())
        .collect();
    let exemplar_rows: Vec<ImageBatch<S>> = if exemplar_ok {
        source_rows
            .iter()
            .zip(&references)
            .map(|(s, r)| model.translate(s, ConditioningMode::Exemplar, Some(r), &mut rng))
            .collect::<Result<_>>()?
    } else {
        general_rows.clone()
    };

    // Distribution distances against the few-shot target set.
    let emb_target = EmbeddingSet::compute(&model.nets, &fewshot_batch)?;
    let emb_source = EmbeddingSet::compute(&model.nets, &source_batch)?;
    let emb_general = EmbeddingSet::compute(&model.nets, &general_batch)?;
    let mut entries: Vec<(String, f64)> = vec![
        (
            "frechet_source_to_target".into(),
            frechet_distance(&emb_source, &emb_target)?,
        ),
        (
            "frechet_general_to_target".into(),
            frechet_distance(&emb_general, &emb_target)?,
        ),
    ];
    if exemplar_ok {
        let emb_exemplar =
            EmbeddingSet::compute(&model.nets, &ImageBatch::stack(&exemplar_rows)?)?;
        entries.push((
            "frechet_exemplar_to_target".into(),
            frechet_distance(&emb_exemplar, &emb_target)?,
        ));
        entries.push((
            "exemplar_fidelity_matched".into(),
            exemplar_fidelity(&model.nets, &exemplar_rows, &references)?,
        ));
        // Cross-pairing baseline: each output against every reference it was
        // NOT conditioned on.
        let mut crossed = 0.0;
        let mut n_crossed = 0usize;
        let n_few = fewshot.len();
        for (i, out) in exemplar_rows.iter().enumerate() {
            for (j, r) in references.iter().enumerate() {
                if i % n_few != j % n_few {
                    crossed += exemplar_fidelity(&model.nets, &[out.clone()], &[r.clone()])?;
                    n_crossed += 1;
                }
            }
        }
        if n_crossed > 0 {
            entries.push((
                "exemplar_fidelity_mismatched".into(),
                crossed / n_crossed as f64,
            ));
        }
    }

    // Region-consistency probe, when the corpus carries region data.
    let manifest_path = data_root.join(MANIFEST);
    if manifest_path.exists() {
        let manifest = read_manifest(&manifest_path)?;
        let wanted: Vec<_> = (0..k)
            .filter_map(|i| {
                let rel = sources.files[i]
                    .strip_prefix(data_root)
                    .ok()?
                    .to_string_lossy()
                    .into_owned();
                manifest.iter().find(|e| e.file == rel).cloned()
            })
            .collect();
        if wanted.len() == k {
            let masks = sky_masks(&wanted, res);
            entries.push((
                "consistency_probe".into(),
                consistency_probe(&general_rows, &source_rows, &masks)?,
            ));
        }
    }

    entries.push(("exemplar_available".into(), if exemplar_ok { 1.0 } else { 0.0 }));
    entries.push(("steps".into(), model.step as f64));
    entries.push(("eval_count".into(), k as f64));

    // Artifacts.
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let sheet_rows: Vec<Vec<ImageBatch<S>>> = (0..k)
        .map(|i| {
            vec![
                source_rows[i].clone(),
                general_rows[i].clone(),
                exemplar_rows[i].clone(),
                references[i].clone(),
            ]
        })
        .collect();
    let sheet = contact_sheet(&sheet_rows)?;
    let sheet_path = out_dir.join("contact_sheet.png");
    save_png(&sheet, 0, &sheet_path)?;

    let metrics_path = out_dir.join("evaluation.tsv");
    let mut f = std::fs::File::create(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
    for (name, value) in &entries {
        writeln!(f, "{name}\t{value:.9e}").map_err(|e| Error::io(&metrics_path, e))?;
    }

    Ok(EvalOutcome {
        summary: EvalSummary { entries },
        metrics_path,
        sheet_path,
    })
}

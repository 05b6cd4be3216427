//! Procedural landscape corpus: a source domain, one strongly shifted anchor
//! domain, and a small "target" family of warm-graded variants.
//!
//! Every image is derived from a per-image RNG stream keyed by
//! `(seed, domain, index)`, so regeneration is bit-identical and the manifest
//! records the exact parameters used for each file.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

use super::{save_png, ImageBatch};

/// Parameters of the generated corpus.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct ToySpec {
    pub seed: u64,
    pub size: usize,
    pub n_source: usize,
    pub n_anchor: usize,
    pub n_fewshot: usize,
}

impl Default for ToySpec {
    fn default() -> Self {
        ToySpec {
            seed: 17,
            size: 64,
            n_source: 40,
            n_anchor: 40,
            n_fewshot: 10,
        }
    }
}

pub const DIR_SOURCE: &str = "source";
pub const DIR_ANCHOR: &str = "anchor_m";
pub const DIR_FEWSHOT: &str = "fewshot";
pub const MANIFEST: &str = "manifest.tsv";

/// One manifest row.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub file: String,
    pub domain: String,
    pub sky_row: usize,
    /// Grading parameters applied after scene synthesis, as `key=value` pairs.
    pub params: Vec<(String, f64)>,
}

impl ManifestEntry {
    pub fn param(&self, key: &str) -> Option<f64> {
        self.params.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }
}

fn image_rng(seed: u64, domain_code: u64, index: u64) -> ChaCha8Rng {
    let mixed = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(domain_code.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(index.wrapping_mul(0x94D0_49BB_1331_11EB));
    ChaCha8Rng::seed_from_u64(mixed)
}

/// Scene in `[0, 1]` plus the sky/ground boundary row.
fn draw_scene(rng: &mut ChaCha8Rng, size: usize) -> (ArrayD<f64>, usize) {
    let mut img = ArrayD::<f64>::zeros(IxDyn(&[3, size, size]));
    let sky_row = rng.gen_range((size * 35 / 100)..(size * 65 / 100));

    let sky_top = [
        0.45 + rng.gen_range(-0.15..0.15),
        0.55 + rng.gen_range(-0.15..0.15),
        0.80 + rng.gen_range(-0.12..0.12),
    ];
    let ground = [
        0.38 + rng.gen_range(-0.12..0.12),
        0.32 + rng.gen_range(-0.10..0.10),
        0.20 + rng.gen_range(-0.08..0.08),
    ];

    for y in 0..size {
        if y < sky_row {
            // Sky brightens toward the horizon.
            let t = y as f64 / sky_row.max(1) as f64;
            for c in 0..3 {
                let v = sky_top[c] + t * 0.18;
                for x in 0..size {
                    img[[c, y, x]] = v;
                }
            }
        } else {
            // Ground darkens with depth.
            let t = (y - sky_row) as f64 / (size - sky_row).max(1) as f64;
            for c in 0..3 {
                let v = ground[c] * (1.0 - 0.35 * t);
                for x in 0..size {
                    img[[c, y, x]] = v;
                }
            }
        }
    }

    // Opaque props scattered mostly on the ground.
    let n_shapes = rng.gen_range(3..=6);
    for _ in 0..n_shapes {
        let color = [
            rng.gen_range(0.10..0.90),
            rng.gen_range(0.10..0.90),
            rng.gen_range(0.10..0.90),
        ];
        let half = rng.gen_range(size / 16..=size / 6).max(1);
        let cy = rng.gen_range((sky_row.saturating_sub(size / 10))..size);
        let cx = rng.gen_range(0..size);
        let disc = rng.gen_bool(0.5);
        let y0 = cy.saturating_sub(half);
        let y1 = (cy + half).min(size - 1);
        let x0 = cx.saturating_sub(half);
        let x1 = (cx + half).min(size - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                if disc {
                    let dy = y as i64 - cy as i64;
                    let dx = x as i64 - cx as i64;
                    if dy * dy + dx * dx > (half * half) as i64 {
                        continue;
                    }
                }
                for c in 0..3 {
                    img[[c, y, x]] = color[c];
                }
            }
        }
    }
    (img, sky_row)
}

/// Anchor grading: strong cool cast plus brightened sky.
fn apply_anchor(img: &mut ArrayD<f64>, sky_row: usize) -> Vec<(String, f64)> {
    let gains = [0.60, 0.70, 1.00];
    let sky_gamma = 0.5;
    let size = img.shape()[1];
    for c in 0..3 {
        for y in 0..size {
            for x in 0..size {
                let mut v = img[[c, y, x]] * gains[c];
                if y < sky_row {
                    v = v.max(0.0).powf(sky_gamma);
                }
                img[[c, y, x]] = v.clamp(0.0, 1.0);
            }
        }
    }
    vec![
        ("r_gain".into(), gains[0]),
        ("g_gain".into(), gains[1]),
        ("b_gain".into(), gains[2]),
        ("sky_gamma".into(), sky_gamma),
        ("gamma".into(), 1.0),
    ]
}

/// Few-shot grading family: warm gains and a gamma lift, drawn per image.
/// The ranges are deliberately wide so images of this domain differ markedly
/// in global statistics — exemplar-conditioned translation has something to
/// reproduce per image, not just a family mean.
fn apply_fewshot(img: &mut ArrayD<f64>, rng: &mut ChaCha8Rng) -> Vec<(String, f64)> {
    let g_gain = rng.gen_range(0.40..0.90);
    let b_gain = rng.gen_range(0.05..0.60);
    let gamma = rng.gen_range(1.0..2.1);
    let gains = [1.0, g_gain, b_gain];
    for (c, &gain) in gains.iter().enumerate() {
        let size = img.shape()[1];
        for y in 0..size {
            for x in 0..size {
                let v = (img[[c, y, x]] * gain).clamp(0.0, 1.0);
                img[[c, y, x]] = v.powf(gamma);
            }
        }
    }
    vec![
        ("r_gain".into(), 1.0),
        ("g_gain".into(), g_gain),
        ("b_gain".into(), b_gain),
        ("sky_gamma".into(), 1.0),
        ("gamma".into(), gamma),
    ]
}

fn unit_to_batch(img: &ArrayD<f64>) -> ImageBatch<f64> {
    let mapped = img.mapv(|v| (v.clamp(0.0, 1.0)) * 2.0 - 1.0);
    let data = mapped.insert_axis(ndarray::Axis(0));
    ImageBatch::new(data).expect("generated scene is in range")
}

fn generate_domain(
    out_dir: &Path,
    spec: &ToySpec,
    domain: &str,
    domain_code: u64,
    count: usize,
    manifest: &mut Vec<ManifestEntry>,
) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.to_path_buf(), e))?;
    for i in 0..count {
        let mut rng = image_rng(spec.seed, domain_code, i as u64);
        let (mut img, sky_row) = draw_scene(&mut rng, spec.size);
        let params = match domain {
            DIR_ANCHOR => apply_anchor(&mut img, sky_row),
            DIR_FEWSHOT => apply_fewshot(&mut img, &mut rng),
            _ => vec![
                ("r_gain".into(), 1.0),
                ("g_gain".into(), 1.0),
                ("b_gain".into(), 1.0),
                ("sky_gamma".into(), 1.0),
                ("gamma".into(), 1.0),
            ],
        };
        let file = format!("{i:04}.png");
        let batch = unit_to_batch(&img);
        save_png(&batch, 0, &out_dir.join(&file))?;
        manifest.push(ManifestEntry {
            file: format!("{domain}/{file}"),
            domain: domain.to_string(),
            sky_row,
            params,
        });
    }
    Ok(())
}

/// Generates the corpus under `out_root` and writes `manifest.tsv`.
/// Re-running with the same spec reproduces every byte.
pub fn generate_toy_corpus(out_root: &Path, spec: &ToySpec) -> Result<Vec<ManifestEntry>> {
    let mut manifest = Vec::new();
    generate_domain(
        &out_root.join(DIR_SOURCE),
        spec,
        DIR_SOURCE,
        1,
        spec.n_source,
        &mut manifest,
    )?;
    generate_domain(
        &out_root.join(DIR_ANCHOR),
        spec,
        DIR_ANCHOR,
        2,
        spec.n_anchor,
        &mut manifest,
    )?;
    generate_domain(
        &out_root.join(DIR_FEWSHOT),
        spec,
        DIR_FEWSHOT,
        3,
        spec.n_fewshot,
        &mut manifest,
    )?;

    let manifest_path = out_root.join(MANIFEST);
    let mut f = std::fs::File::create(&manifest_path)
        .map_err(|e| Error::io(manifest_path.clone(), e))?;
    writeln!(f, "# file\tdomain\tsky_row\tparams").map_err(|e| Error::io(manifest_path.clone(), e))?;
    for e in &manifest {
        let params = e
            .params
            .iter()
            .map(|(k, v)| format!("{k}={v:.17}"))
            .collect::<Vec<_>>()
            .join(",");
        writeln!(f, "{}\t{}\t{}\t{}", e.file, e.domain, e.sky_row, params)
            .map_err(|err| Error::io(manifest_path.clone(), err))?;
    }
    Ok(manifest)
}

/// Parses a manifest written by [`generate_toy_corpus`].
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.to_path_buf(), e))?;
    let mut out = Vec::new();
    for line in text.lines() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(Error::Data(format!("malformed manifest line: {line}")));
        }
        let sky_row: usize = cols[2]
            .parse()
            .map_err(|_| Error::Data(format!("bad sky_row in: {line}")))?;
        let mut params = Vec::new();
        for pair in cols[3].split(',') {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Error::Data(format!("bad param `{pair}`")))?;
            let v: f64 = v
                .parse()
                .map_err(|_| Error::Data(format!("bad param value `{pair}`")))?;
            params.push((k.to_string(), v));
        }
        out.push(ManifestEntry {
            file: cols[0].to_string(),
            domain: cols[1].to_string(),
            sky_row,
            params,
        });
    }
    Ok(out)
}

/// Boolean sky masks (true above the horizon) for a set of manifest entries.
pub fn sky_masks(entries: &[ManifestEntry], size: usize) -> Vec<Array2<bool>> {
    entries
        .iter()
        .map(|e| Array2::from_shape_fn((size, size), |(y, _)| y < e.sky_row))
        .collect()
}

/// Paths of the three domain directories under a corpus root.
pub fn corpus_dirs(root: &Path) -> (PathBuf, PathBuf, PathBuf) {
    (
        root.join(DIR_SOURCE),
        root.join(DIR_ANCHOR),
        root.join(DIR_FEWSHOT),
    )
}

//! Dataset ingestion and the procedural toy corpus.
//!
//! Images live in memory as `(N, 3, H, W)` arrays normalized to `[-1, 1]`.
//! On disk everything is 8-bit RGB PNG; loading resizes bilinearly to the
//! requested resolution.

pub mod toy;

use std::path::{Path, PathBuf};

use image::RgbImage;
use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result, Scalar};

/// Batch of normalized RGB images.
#[derive(Clone, Debug)]
pub struct ImageBatch<S: Scalar> {
    data: ArrayD<S>,
}

impl<S: Scalar> ImageBatch<S> {
    /// Validates shape `(N, 3, H, W)`, finiteness, and the `[-1, 1]` range.
    pub fn new(data: ArrayD<S>) -> Result<Self> {
        if data.ndim() != 4 {
            return Err(Error::Shape(format!(
                "image batch must be rank 4, got {:?}",
                data.shape()
            )));
        }
        if data.shape()[1] != 3 {
            return Err(Error::Shape(format!(
                "image batch must have 3 channels, got {}",
                data.shape()[1]
            )));
        }
        let one = S::one();
        for &v in data.iter() {
            if !v.is_finite() || v < -one || v > one {
                return Err(Error::Shape(format!(
                    "image values must be finite and in [-1, 1], found {v}"
                )));
            }
        }
        Ok(ImageBatch { data })
    }

    pub fn data(&self) -> &ArrayD<S> {
        &self.data
    }

    pub fn into_data(self) -> ArrayD<S> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn height(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn width(&self) -> usize {
        self.data.shape()[3]
    }

    /// Single-image sub-batch `(1, 3, H, W)`.
    pub fn image(&self, i: usize) -> ImageBatch<S> {
        assert!(i < self.len(), "image index out of range");
        let view = self.data.index_axis(ndarray::Axis(0), i);
        let data = view.insert_axis(ndarray::Axis(0)).to_owned();
        ImageBatch { data }
    }

    /// Stacks single-image rows of identical resolution.
    pub fn stack(parts: &[ImageBatch<S>]) -> Result<ImageBatch<S>> {
        if parts.is_empty() {
            return Err(Error::Shape("cannot stack zero batches".into()));
        }
        let views: Vec<_> = parts.iter().map(|p| p.data.view()).collect();
        let data = ndarray::concatenate(ndarray::Axis(0), &views)
            .map_err(|e| Error::Shape(format!("stack: {e}")))?;
        Ok(ImageBatch { data })
    }
}

/// `[-1,1] -> [0,255]` with rounding; the inverse stays within 1/255.
fn to_u8<S: Scalar>(v: S) -> u8 {
    let x = (v.as_f64() + 1.0) * 0.5 * 255.0;
    x.round().clamp(0.0, 255.0) as u8
}

fn from_u8<S: Scalar>(b: u8) -> S {
    S::cast(b as f64 / 255.0 * 2.0 - 1.0)
}

/// Writes image `i` of the batch as an 8-bit RGB PNG.
pub fn save_png<S: Scalar>(batch: &ImageBatch<S>, i: usize, path: &Path) -> Result<()> {
    let (h, w) = (batch.height(), batch.width());
    let mut img = RgbImage::new(w as u32, h as u32);
    let data = batch.data();
    for y in 0..h {
        for x in 0..w {
            let px = image::Rgb([
                to_u8(data[[i, 0, y, x]]),
                to_u8(data[[i, 1, y, x]]),
                to_u8(data[[i, 2, y, x]]),
            ]);
            img.put_pixel(x as u32, y as u32, px);
        }
    }
    img.save(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

/// Loads one PNG as a `(1, 3, R, R)` batch, resizing bilinearly when needed.
pub fn load_png<S: Scalar>(path: &Path, resolution: usize) -> Result<ImageBatch<S>> {
    let img = image::open(path)
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?
        .to_rgb8();
    let img = if img.width() as usize == resolution && img.height() as usize == resolution {
        img
    } else {
        image::imageops::resize(
            &img,
            resolution as u32,
            resolution as u32,
            image::imageops::FilterType::Triangle,
        )
    };
    let mut data = ArrayD::zeros(IxDyn(&[1, 3, resolution, resolution]));
    for y in 0..resolution {
        for x in 0..resolution {
            let px = img.get_pixel(x as u32, y as u32);
            for c in 0..3 {
                data[[0, c, y, x]] = from_u8(px.0[c]);
            }
        }
    }
    ImageBatch::new(data)
}

/// Dataset role; the few-shot role changes sampling and size limits.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Role {
    Source,
    Anchor,
    Fewshot,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Source => "source",
            Role::Anchor => "anchor",
            Role::Fewshot => "fewshot",
        }
    }
}

/// Eagerly loaded, lexicographically ordered image directory.
#[derive(Clone)]
pub struct DomainDataset<S: Scalar> {
    pub root: PathBuf,
    pub files: Vec<PathBuf>,
    pub role: Role,
    pub resolution: usize,
    images: Vec<ImageBatch<S>>,
}

/// Loads every PNG under `root`, sorted by file name. For the few-shot role,
/// `max_files` caps the set: extra files are dropped from the tail of the
/// sorted order with a warning, so runs on oversized directories stay
/// comparable.
pub fn load_domain<S: Scalar>(
    root: &Path,
    role: Role,
    resolution: usize,
    max_files: Option<usize>,
) -> Result<DomainDataset<S>> {
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root.display().to_string(), e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .map(|e| e.eq_ignore_ascii_case("png"))
                .unwrap_or(false)
        })
        .collect();
    files.sort_by_key(|p| p.file_name().map(|n| n.to_os_string()));
    if files.is_empty() {
        return Err(Error::Data(format!(
            "no PNG images found in {}",
            root.display()
        )));
    }
    if role == Role::Fewshot {
        if let Some(cap) = max_files {
            if files.len() > cap {
                log::warn!(
                    "few-shot directory {} has {} images, keeping the first {} (lexicographic)",
                    root.display(),
                    files.len(),
                    cap
                );
                files.truncate(cap);
            }
        }
    }
    let mut images = Vec::with_capacity(files.len());
    for f in &files {
        images.push(load_png(f, resolution)?);
    }
    Ok(DomainDataset {
        root: root.to_path_buf(),
        files,
        role,
        resolution,
        images,
    })
}

impl<S: Scalar> DomainDataset<S> {
    /// In-memory dataset, used by tests and synthetic pipelines.
    pub fn from_images(images: Vec<ImageBatch<S>>, role: Role) -> Self {
        assert!(!images.is_empty(), "dataset needs at least one image");
        let resolution = images[0].height();
        DomainDataset {
            root: PathBuf::new(),
            files: Vec::new(),
            role,
            resolution,
            images,
        }
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn image(&self, i: usize) -> &ImageBatch<S> {
        &self.images[i]
    }

    pub fn all(&self) -> Result<ImageBatch<S>> {
        ImageBatch::stack(&self.images)
    }
}

/// Sampling cursor: few-shot datasets draw uniformly with replacement, all
/// other roles run shuffled epochs without replacement.
pub struct SampleState {
    order: Vec<usize>,
    pos: usize,
    with_replacement: bool,
}

impl SampleState {
    pub fn new<S: Scalar>(dataset: &DomainDataset<S>) -> Self {
        SampleState {
            order: (0..dataset.len()).collect(),
            pos: dataset.len(),
            with_replacement: dataset.role == Role::Fewshot,
        }
    }

    fn next_index(&mut self, len: usize, rng: &mut ChaCha8Rng) -> usize {
        if self.with_replacement {
            return rng.gen_range(0..len);
        }
        if self.pos >= self.order.len() {
            // Each epoch shuffles from the identity order, so the epoch
            // permutation depends only on the RNG state. A training run
            // resumed at an epoch boundary then draws the same sequence an
            // uninterrupted run would.
            for (i, slot) in self.order.iter_mut().enumerate() {
                *slot = i;
            }
            for i in (1..self.order.len()).rev() {
                let j = rng.gen_range(0..=i);
                self.order.swap(i, j);
            }
            self.pos = 0;
        }
        let idx = self.order[self.pos];
        self.pos += 1;
        idx
    }
}

/// Draws `n` images according to the dataset's sampling policy.
pub fn sample_batch<S: Scalar>(
    dataset: &DomainDataset<S>,
    state: &mut SampleState,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> ImageBatch<S> {
    assert!(n >= 1, "batch size must be at least 1");
    let rows: Vec<ImageBatch<S>> = (0..n)
        .map(|_| dataset.image(state.next_index(dataset.len(), rng)).clone())
        .collect();
    ImageBatch::stack(&rows).expect("dataset rows share resolution")
}

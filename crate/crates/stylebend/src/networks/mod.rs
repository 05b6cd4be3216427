//! The full network bundle: content encoder, multi-branch style encoder,
//! style-conditioned decoder, residual refinement generator, two
//! discriminators, and a fixed feature extractor — all registered in one
//! shared parameter store.

pub mod layers;
pub mod phi;

use ndarray::{Array1, Array2, ArrayD, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::ImageBatch;
use crate::tensor::{ParamId, ParamStore, Tape, Var};
use crate::{Error, Result, Scalar};

use layers::{
    adain_affine, instance_normalize, split_affines, Conv2d, Init, InstanceNorm2d, LayerNorm2d,
    Mlp, ResBlock, StyledResBlock,
};
use phi::Phi;

/// Name prefixes of parameter groups updated by the generator optimizer.
pub const GEN_PREFIXES: [&str; 5] = ["enc.", "senc.", "dec.", "res.", "wmi."];
/// Name prefixes of parameter groups updated by the discriminator optimizer.
pub const DISC_PREFIXES: [&str; 2] = ["dmt.", "dfs."];

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NetConfig {
    /// Base channel width.
    pub width: usize,
    /// Number of stride-2 downsampling levels in the content path.
    pub levels: usize,
    /// Dimension of style codes.
    pub style_dim: usize,
    /// Number of domain branches (style-encoder and discriminator heads).
    pub num_domains: usize,
    /// Stage widths of the fixed feature extractor.
    pub phi_widths: Vec<usize>,
    /// Seed for the fixed feature extractor's weights.
    pub phi_seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            width: 32,
            levels: 2,
            style_dim: 8,
            num_domains: 2,
            phi_widths: phi::DEFAULT_WIDTHS.to_vec(),
            phi_seed: 500,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width < 2 || self.width % 2 != 0 {
            return Err(Error::Config(format!(
                "width must be even and at least 2, got {}",
                self.width
            )));
        }
        if self.levels < 1 {
            return Err(Error::Config("levels must be at least 1".into()));
        }
        if (2 * self.width) % (1 << self.levels) != 0 || (2 * self.width) < (1 << self.levels) {
            return Err(Error::Config(format!(
                "2*width ({}) must be a positive multiple of 2^levels ({})",
                2 * self.width,
                1 << self.levels
            )));
        }
        if self.style_dim < 1 {
            return Err(Error::Config("style_dim must be at least 1".into()));
        }
        if !(2..=6).contains(&self.num_domains) {
            return Err(Error::Config(format!(
                "num_domains must be between 2 and 6, got {}",
                self.num_domains
            )));
        }
        if self.phi_widths.is_empty() {
            return Err(Error::Config("phi_widths must be non-empty".into()));
        }
        Ok(())
    }

    /// Channel count of content features.
    pub fn content_channels(&self) -> usize {
        self.width << self.levels
    }

    /// Spatial downsampling factor of the content path.
    pub fn down_factor(&self) -> usize {
        1 << self.levels
    }
}

/// Per-stage batch-averaged channel statistics of the fixed extractor.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStatistics<S: Scalar> {
    pub mu: Vec<Array1<S>>,
    pub sigma: Vec<Array1<S>>,
}

impl<S: Scalar> FeatureStatistics<S> {
    pub fn stages(&self) -> usize {
        self.mu.len()
    }

    /// Concatenated `[mu_0, sigma_0, mu_1, sigma_1, ...]` vector.
    pub fn flatten(&self) -> Array1<S> {
        let total: usize = self.mu.iter().chain(&self.sigma).map(|a| a.len()).sum();
        let mut out = Array1::zeros(total);
        let mut off = 0;
        for (m, s) in self.mu.iter().zip(&self.sigma) {
            for &v in m.iter() {
                out[off] = v;
                off += 1;
            }
            for &v in s.iter() {
                out[off] = v;
                off += 1;
            }
        }
        out
    }
}

struct ContentEncoder {
    stem: Conv2d,
    stem_norm: InstanceNorm2d,
    downs: Vec<(Conv2d, InstanceNorm2d)>,
    blocks: Vec<ResBlock>,
}

impl ContentEncoder {
    fn new<S: Scalar>(store: &mut ParamStore<S>, rng: &mut ChaCha8Rng, cfg: &NetConfig) -> Self {
        let w = cfg.width;
        let stem = Conv2d::new(store, rng, "enc.stem", 3, w, 7, 1, 3, Init::He, true);
        let stem_norm = InstanceNorm2d::new(store, "enc.stem_norm", w);
        let mut downs = Vec::new();
        for l in 0..cfg.levels {
            let cin = w << l;
            let cout = w << (l + 1);
            downs.push((
                Conv2d::new(
                    store,
                    rng,
                    &format!("enc.down{l}"),
                    cin,
                    cout,
                    4,
                    2,
                    1,
                    Init::He,
                    true,
                ),
                InstanceNorm2d::new(store, &format!("enc.down{l}_norm"), cout),
            ));
        }
        let top = cfg.content_channels();
        let blocks = (0..2)
            .map(|i| ResBlock::new(store, rng, &format!("enc.res{i}"), top))
            .collect();
        ContentEncoder {
            stem,
            stem_norm,
            downs,
            blocks,
        }
    }

    fn forward<'t, S: Scalar>(
        &self,
        tape: &'t Tape<S>,
        store: &ParamStore<S>,
        x: Var<'t, S>,
    ) -> Var<'t, S> {
        let mut h = self
            .stem_norm
            .forward(tape, store, self.stem.forward(tape, store, x))
            .relu();
        for (conv, norm) in &self.downs {
            h = norm
                .forward(tape, store, conv.forward(tape, store, h))
                .relu();
        }
        for block in &self.blocks {
            h = block.forward(tape, store, h);
        }
        h
    }
}

struct StyleEncoder {
    stem: Conv2d,
    downs: Vec<Conv2d>,
    heads: Vec<layers::Linear>,
}

impl StyleEncoder {
    fn new<S: Scalar>(store: &mut ParamStore<S>, rng: &mut ChaCha8Rng, cfg: &NetConfig) -> Self {
        let w = cfg.width;
        let stem = Conv2d::new(store, rng, "senc.stem", 3, w, 7, 1, 3, Init::He, true);
        let downs = (0..cfg.levels)
            .map(|l| {
                Conv2d::new(
                    store,
                    rng,
                    &format!("senc.down{l}"),
                    w << l,
                    w << (l + 1),
                    4,
                    2,
                    1,
                    Init::He,
                    true,
                )
            })
            .collect();
        let top = cfg.content_channels();
        let heads = (0..cfg.num_domains)
            .map(|d| {
                layers::Linear::new(
                    store,
                    rng,
                    &format!("senc.head{d}"),
                    top,
                    cfg.style_dim,
                    Init::Xavier,
                )
            })
            .collect();
        StyleEncoder { stem, downs, heads }
    }

    fn forward<'t, S: Scalar>(
        &self,
        tape: &'t Tape<S>,
        store: &ParamStore<S>,
        x: Var<'t, S>,
        domain: usize,
    ) -> Var<'t, S> {
        let mut h = self.stem.forward(tape, store, x).relu();
        for conv in &self.downs {
            h = conv.forward(tape, store, h).relu();
        }
        let pooled = h.spatial_mean();
        self.heads[domain].forward(tape, store, pooled)
    }
}

struct Decoder {
    style_mlp: Mlp,
    blocks: Vec<StyledResBlock>,
    ups: Vec<(Conv2d, LayerNorm2d)>,
    out: Conv2d,
    site_channels: Vec<usize>,
}

impl Decoder {
    fn new<S: Scalar>(store: &mut ParamStore<S>, rng: &mut ChaCha8Rng, cfg: &NetConfig) -> Self {
        let top = cfg.content_channels();
        let site_channels = vec![top; 4];
        let affine_dim: usize = site_channels.iter().map(|c| 2 * c).sum();
        let style_mlp = Mlp::new(
            store,
            rng,
            "dec.style_mlp",
            &[cfg.style_dim, 128, 128, affine_dim],
        );
        let blocks = (0..2)
            .map(|i| StyledResBlock::new(store, rng, &format!("dec.res{i}"), top))
            .collect();
        let mut ups = Vec::new();
        let mut c = top;
        for l in 0..cfg.levels {
            ups.push((
                Conv2d::new(
                    store,
                    rng,
                    &format!("dec.up{l}"),
                    c,
                    c / 2,
                    3,
                    1,
                    1,
                    Init::He,
                    true,
                ),
                LayerNorm2d::new(store, &format!("dec.up{l}_norm"), c / 2),
            ));
            c /= 2;
        }
        let out = Conv2d::new(store, rng, "dec.out", c, 3, 7, 1, 3, Init::Xavier, true);
        Decoder {
            style_mlp,
            blocks,
            ups,
            out,
            site_channels,
        }
    }

    fn forward<'t, S: Scalar>(
        &self,
        tape: &'t Tape<S>,
        store: &ParamStore<S>,
        content: Var<'t, S>,
        style: Var<'t, S>,
    ) -> Var<'t, S> {
        let params = self.style_mlp.forward(tape, store, style);
        let affines = split_affines(params, &self.site_channels);
        let mut h = content;
        for (i, block) in self.blocks.iter().enumerate() {
            h = block.forward(
                tape,
                store,
                h,
                [affines[2 * i].clone(), affines[2 * i + 1].clone()],
            );
        }
        for (conv, norm) in &self.ups {
            h = norm
                .forward(tape, store, conv.forward(tape, store, h.upsample2()))
                .relu();
        }
        self.out.forward(tape, store, h).tanh()
    }
}

struct ResidualGenerator {
    cond_mlp: Mlp,
    entry: Conv2d,
    blocks: Vec<StyledResBlock>,
    ups: Vec<(Conv2d, LayerNorm2d)>,
    out: Conv2d,
    site_channels: Vec<usize>,
}

impl ResidualGenerator {
    fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        rng: &mut ChaCha8Rng,
        cfg: &NetConfig,
        conditioning_dim: usize,
    ) -> Self {
        let top = cfg.content_channels();
        let mid = 2 * cfg.width;
        let site_channels = vec![mid; 5];
        let affine_dim: usize = site_channels.iter().map(|c| 2 * c).sum();
        let cond_mlp = Mlp::new(
            store,
            rng,
            "res.cond_mlp",
            &[conditioning_dim, 128, 128, affine_dim],
        );
        let entry = Conv2d::new(store, rng, "res.entry", top, mid, 3, 1, 1, Init::He, true);
        let blocks = (0..2)
            .map(|i| StyledResBlock::new(store, rng, &format!("res.block{i}"), mid))
            .collect();
        let mut ups = Vec::new();
        let mut c = mid;
        for l in 0..cfg.levels {
            ups.push((
                Conv2d::new(
                    store,
                    rng,
                    &format!("res.up{l}"),
                    c,
                    c / 2,
                    3,
                    1,
                    1,
                    Init::He,
                    true,
                ),
                LayerNorm2d::new(store, &format!("res.up{l}_norm"), c / 2),
            ));
            c /= 2;
        }
        // Zero-initialized head: the refinement starts as an exact no-op.
        let out = Conv2d::new(store, rng, "res.out", c, 3, 7, 1, 3, Init::Zero, true);
        ResidualGenerator {
            cond_mlp,
            entry,
            blocks,
            ups,
            out,
            site_channels,
        }
    }

    fn forward<'t, S: Scalar>(
        &self,
        tape: &'t Tape<S>,
        store: &ParamStore<S>,
        content: Var<'t, S>,
        conditioning: Var<'t, S>,
    ) -> Var<'t, S> {
        let params = self.cond_mlp.forward(tape, store, conditioning);
        let affines = split_affines(params, &self.site_channels);
        let mut h = self.entry.forward(tape, store, content);
        h = adain_affine(h, affines[0].0, affines[0].1).relu();
        for (i, block) in self.blocks.iter().enumerate() {
            h = block.forward(
                tape,
                store,
                h,
                [affines[1 + 2 * i].clone(), affines[2 + 2 * i].clone()],
            );
        }
        for (conv, norm) in &self.ups {
            h = norm
                .forward(tape, store, conv.forward(tape, store, h.upsample2()))
                .relu();
        }
        self.out.forward(tape, store, h).tanh()
    }
}

struct MultiTargetDisc {
    convs: Vec<Conv2d>,
    heads: Vec<Conv2d>,
}

impl MultiTargetDisc {
    fn new<S: Scalar>(store: &mut ParamStore<S>, rng: &mut ChaCha8Rng, cfg: &NetConfig) -> Self {
        let w = cfg.width;
        let chans = [3, w, 2 * w, 4 * w];
        let convs = (0..3)
            .map(|i| {
                Conv2d::new(
                    store,
                    rng,
                    &format!("dmt.conv{i}"),
                    chans[i],
                    chans[i + 1],
                    4,
                    2,
                    1,
                    Init::He,
                    true,
                )
            })
            .collect();
        let heads = (0..cfg.num_domains)
            .map(|d| {
                Conv2d::new(
                    store,
                    rng,
                    &format!("dmt.head{d}"),
                    4 * w,
                    1,
                    1,
                    1,
                    0,
                    Init::Xavier,
                    true,
                )
            })
            .collect();
        MultiTargetDisc { convs, heads }
    }

    fn forward<'t, S: Scalar>(
        &self,
        tape: &'t Tape<S>,
        store: &ParamStore<S>,
        x: Var<'t, S>,
        domain: usize,
    ) -> Var<'t, S> {
        let mut h = x;
        for conv in &self.convs {
            h = conv.forward(tape, store, h).leaky_relu(S::cast(0.2));
        }
        self.heads[domain].forward(tape, store, h)
    }
}

struct PatchDisc {
    convs: Vec<Conv2d>,
}

impl PatchDisc {
    fn new<S: Scalar>(store: &mut ParamStore<S>, rng: &mut ChaCha8Rng, cfg: &NetConfig) -> Self {
        let w = cfg.width;
        let convs = vec![
            Conv2d::new(store, rng, "dfs.conv0", 3, w, 4, 2, 1, Init::He, true),
            Conv2d::new(store, rng, "dfs.conv1", w, 2 * w, 4, 2, 1, Init::He, true),
            Conv2d::new(store, rng, "dfs.conv2", 2 * w, 1, 3, 1, 1, Init::Xavier, true),
        ];
        PatchDisc { convs }
    }

    fn forward<'t, S: Scalar>(
        &self,
        tape: &'t Tape<S>,
        store: &ParamStore<S>,
        x: Var<'t, S>,
    ) -> Var<'t, S> {
        let mut h = x;
        for (i, conv) in self.convs.iter().enumerate() {
            h = conv.forward(tape, store, h);
            if i + 1 < self.convs.len() {
                h = h.leaky_relu(S::cast(0.2));
            }
        }
        h.per_sample_mean()
    }
}

/// All networks of a run, sharing one parameter store.
pub struct Networks<S: Scalar> {
    pub cfg: NetConfig,
    pub store: ParamStore<S>,
    enc: ContentEncoder,
    style_enc: StyleEncoder,
    dec: Decoder,
    resgen: ResidualGenerator,
    d_mt: MultiTargetDisc,
    d_fs: PatchDisc,
    pub phi: Phi,
}

impl<S: Scalar> Networks<S> {
    /// Builds and initializes every network deterministically from `seed`
    /// (the fixed extractor uses `cfg.phi_seed` instead).
    pub fn new(cfg: NetConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = Phi::from_seed(&mut store, &cfg.phi_widths, cfg.phi_seed);
        let enc = ContentEncoder::new(&mut store, &mut rng, &cfg);
        let style_enc = StyleEncoder::new(&mut store, &mut rng, &cfg);
        let dec = Decoder::new(&mut store, &mut rng, &cfg);
        let resgen = ResidualGenerator::new(&mut store, &mut rng, &cfg, phi.conditioning_dim());
        let d_mt = MultiTargetDisc::new(&mut store, &mut rng, &cfg);
        let d_fs = PatchDisc::new(&mut store, &mut rng, &cfg);
        Ok(Networks {
            cfg,
            store,
            enc,
            style_enc,
            dec,
            resgen,
            d_mt,
            d_fs,
            phi,
        })
    }

    /// Replaces the fixed extractor's single stage with an exact identity
    /// (center-tap delta). Requires `phi_widths == [3]`; used to calibrate
    /// feature statistics against raw image statistics.
    pub fn calibrate_identity_extractor(&mut self) -> Result<()> {
        if self.cfg.phi_widths != vec![3] {
            return Err(Error::Config(
                "identity calibration requires phi_widths == [3]".into(),
            ));
        }
        let wid = self
            .store
            .id_of("phi.stage0.weight")
            .expect("extractor registered");
        let bid = self
            .store
            .id_of("phi.stage0.bias")
            .expect("extractor registered");
        let mut w = ArrayD::<S>::zeros(IxDyn(&[3, 3, 3, 3]));
        for c in 0..3 {
            w[[c, c, 1, 1]] = S::one();
        }
        self.store.set_value(wid, w);
        self.store.set_value(bid, ArrayD::zeros(IxDyn(&[3])));
        Ok(())
    }

    fn check_domain(&self, domain: usize) -> Result<()> {
        if domain >= self.cfg.num_domains {
            return Err(Error::UnknownDomain(format!(
                "{domain} (have {} branches)",
                self.cfg.num_domains
            )));
        }
        Ok(())
    }

    fn check_resolution(&self, shape: &[usize], factor: usize, what: &str) -> Result<()> {
        let (h, w) = (shape[2], shape[3]);
        if h < factor || w < factor || h % factor != 0 || w % factor != 0 {
            return Err(Error::Shape(format!(
                "{what} needs spatial dims that are positive multiples of {factor}, got {h}x{w}"
            )));
        }
        Ok(())
    }

    // ----- tape-level ops -------------------------------------------------

    pub fn encode_content_t<'t>(&self, tape: &'t Tape<S>, x: Var<'t, S>) -> Var<'t, S> {
        self.enc.forward(tape, &self.store, x)
    }

    pub fn encode_style_t<'t>(&self, tape: &'t Tape<S>, x: Var<'t, S>, domain: usize) -> Var<'t, S> {
        self.style_enc.forward(tape, &self.store, x, domain)
    }

    pub fn decode_t<'t>(
        &self,
        tape: &'t Tape<S>,
        content: Var<'t, S>,
        style: Var<'t, S>,
    ) -> Var<'t, S> {
        self.dec.forward(tape, &self.store, content, style)
    }

    /// Residual image from content features and a conditioning vector.
    pub fn residual_t<'t>(
        &self,
        tape: &'t Tape<S>,
        content: Var<'t, S>,
        conditioning: Var<'t, S>,
    ) -> Var<'t, S> {
        self.resgen.forward(tape, &self.store, content, conditioning)
    }

    pub fn discriminate_multitarget_t<'t>(
        &self,
        tape: &'t Tape<S>,
        x: Var<'t, S>,
        domain: usize,
    ) -> Var<'t, S> {
        self.d_mt.forward(tape, &self.store, x, domain)
    }

    pub fn discriminate_patches_t<'t>(&self, tape: &'t Tape<S>, patches: Var<'t, S>) -> Var<'t, S> {
        self.d_fs.forward(tape, &self.store, patches)
    }

    /// Per-stage `(mu, sigma)` statistic vars of the fixed extractor.
    pub fn statistics_t<'t>(&self, tape: &'t Tape<S>, x: Var<'t, S>) -> Vec<(Var<'t, S>, Var<'t, S>)> {
        self.phi.stats_vars(tape, &self.store, x)
    }

    pub fn embed_t<'t>(&self, tape: &'t Tape<S>, x: Var<'t, S>) -> Var<'t, S> {
        self.phi.embed_var(tape, &self.store, x)
    }

    // ----- array-level ops ------------------------------------------------

    /// Content features `(N, C, H/2^L, W/2^L)`.
    pub fn encode_content(&self, images: &ImageBatch<S>) -> Result<ArrayD<S>> {
        self.check_resolution(images.data().shape(), self.cfg.down_factor(), "encode_content")?;
        let tape = Tape::new();
        let x = tape.constant(images.data().clone());
        Ok(self.encode_content_t(&tape, x).value().as_ref().clone())
    }

    /// Style codes `(N, style_dim)` from the branch for `domain`.
    pub fn encode_style(&self, images: &ImageBatch<S>, domain: usize) -> Result<ArrayD<S>> {
        self.check_domain(domain)?;
        self.check_resolution(images.data().shape(), self.cfg.down_factor(), "encode_style")?;
        let tape = Tape::new();
        let x = tape.constant(images.data().clone());
        Ok(self
            .encode_style_t(&tape, x, domain)
            .value()
            .as_ref()
            .clone())
    }

    /// Image batch from content features and style codes.
    pub fn decode(&self, content: &ArrayD<S>, style: &ArrayD<S>) -> Result<ImageBatch<S>> {
        if content.ndim() != 4 || content.shape()[1] != self.cfg.content_channels() {
            return Err(Error::Shape(format!(
                "decode expects content (N, {}, h, w), got {:?}",
                self.cfg.content_channels(),
                content.shape()
            )));
        }
        if style.ndim() != 2 || style.shape()[1] != self.cfg.style_dim {
            return Err(Error::Shape(format!(
                "decode expects style (N, {}), got {:?}",
                self.cfg.style_dim,
                style.shape()
            )));
        }
        if content.shape()[0] != style.shape()[0] {
            return Err(Error::Shape(format!(
                "decode batch mismatch: content N={}, style N={}",
                content.shape()[0],
                style.shape()[0]
            )));
        }
        let tape = Tape::new();
        let c = tape.constant(content.clone());
        let s = tape.constant(style.clone());
        let y = self.decode_t(&tape, c, s).value().as_ref().clone();
        ImageBatch::new(y)
    }

    /// Per-pixel realism map `(N, 1, H/8, W/8)` from the branch for `domain`.
    pub fn discriminate_multitarget(
        &self,
        images: &ImageBatch<S>,
        domain: usize,
    ) -> Result<ArrayD<S>> {
        self.check_domain(domain)?;
        self.check_resolution(images.data().shape(), 8, "discriminate_multitarget")?;
        let tape = Tape::new();
        let x = tape.constant(images.data().clone());
        Ok(self
            .discriminate_multitarget_t(&tape, x, domain)
            .value()
            .as_ref()
            .clone())
    }

    /// Per-patch realism scores `(N,)`.
    pub fn discriminate_patches(&self, patches: &ArrayD<S>) -> Result<ArrayD<S>> {
        if patches.ndim() != 4 || patches.shape()[1] != 3 {
            return Err(Error::Shape(format!(
                "discriminate_patches expects (N, 3, p, p), got {:?}",
                patches.shape()
            )));
        }
        self.check_resolution(patches.shape(), 4, "discriminate_patches")?;
        let tape = Tape::new();
        let x = tape.constant(patches.clone());
        Ok(self
            .discriminate_patches_t(&tape, x)
            .value()
            .as_ref()
            .clone())
    }

    /// Batch-averaged per-stage feature statistics.
    pub fn extract_statistics(&self, images: &ImageBatch<S>) -> Result<FeatureStatistics<S>> {
        if images.is_empty() {
            return Err(Error::Shape(
                "extract_statistics needs a non-empty batch".into(),
            ));
        }
        let tape = Tape::new();
        let x = tape.constant(images.data().clone());
        let stats = self.statistics_t(&tape, x);
        let mut mu = Vec::with_capacity(stats.len());
        let mut sigma = Vec::with_capacity(stats.len());
        for (m, s) in stats {
            mu.push(
                m.value()
                    .as_ref()
                    .clone()
                    .into_dimensionality::<ndarray::Ix1>()
                    .expect("stage mean is rank 1"),
            );
            sigma.push(
                s.value()
                    .as_ref()
                    .clone()
                    .into_dimensionality::<ndarray::Ix1>()
                    .expect("stage sigma is rank 1"),
            );
        }
        Ok(FeatureStatistics { mu, sigma })
    }

    /// Embedding coordinates `(N, embed_dim)` used for distribution
    /// distances.
    pub fn embed(&self, images: &ImageBatch<S>) -> Result<Array2<S>> {
        let tape = Tape::new();
        let x = tape.constant(images.data().clone());
        let e = self.embed_t(&tape, x).value().as_ref().clone();
        Ok(e.into_dimensionality::<ndarray::Ix2>()
            .expect("embedding is rank 2"))
    }

    // ----- parameter groups -------------------------------------------------

    fn ids_with_prefixes(&self, prefixes: &[&str]) -> Vec<ParamId> {
        self.store
            .trainable_ids()
            .into_iter()
            .filter(|&id| {
                let name = self.store.name(id);
                prefixes.iter().any(|p| name.starts_with(p))
            })
            .collect()
    }

    /// Trainable parameters updated by the generator optimizer.
    pub fn generator_ids(&self) -> Vec<ParamId> {
        self.ids_with_prefixes(&GEN_PREFIXES)
    }

    /// Trainable parameters updated by the discriminator optimizer.
    pub fn discriminator_ids(&self) -> Vec<ParamId> {
        self.ids_with_prefixes(&DISC_PREFIXES)
    }
}

/// Re-normalizes `features` per sample and channel, then imposes the given
/// per-channel statistics: `sigma_c * normalized + mu_c`. `sigma` must be
/// non-negative.
pub fn adain<S: Scalar>(
    features: &ArrayD<S>,
    mu: &Array1<S>,
    sigma: &Array1<S>,
) -> Result<ArrayD<S>> {
    if features.ndim() != 4 {
        return Err(Error::Shape(format!(
            "adain expects (N, C, H, W), got {:?}",
            features.shape()
        )));
    }
    let c = features.shape()[1];
    if mu.len() != c || sigma.len() != c {
        return Err(Error::Shape(format!(
            "adain channel mismatch: features have {c}, mu has {}, sigma has {}",
            mu.len(),
            sigma.len()
        )));
    }
    if sigma.iter().any(|&s| !s.is_finite() || s < S::zero()) {
        return Err(Error::Shape(
            "adain requires finite, non-negative sigma".into(),
        ));
    }
    let (n, h, w) = (
        features.shape()[0],
        features.shape()[2],
        features.shape()[3],
    );
    let tape = Tape::new();
    let x = tape.constant(features.clone());
    let mu_v = tape.constant(mu.clone().into_dyn()).bc_c(n, h, w);
    let sigma_v = tape.constant(sigma.clone().into_dyn()).bc_c(n, h, w);
    let y = instance_normalize(x) * sigma_v + mu_v;
    Ok(y.value().as_ref().clone())
}

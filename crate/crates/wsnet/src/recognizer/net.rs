//! The line recognizer: four convolutional blocks, a three-scale
//! bidirectional LSTM stack, and a 1-D convolution head over the charset plus
//! blank. Five normalization sites; depending on the conditioning mode, one
//! (after the last conv block), all five, or none are embedding-conditioned.

use crate::charset::Charset;
use crate::error::{Error, Result};
use crate::nn::conv::{hpool2_backward, hpool2_forward, Conv1d, Conv1dCtx, Conv2d, Conv2dCtx};
use crate::nn::init::param_rng;
use crate::nn::lstm::{BiLstm, BiLstmCtx};
use crate::nn::norm::{InstanceNorm, NormCtx};
use crate::nn::param::{GradStore, ParamStore};
use crate::nn::{
    relu, relu_backward, seq_avg_pool, seq_avg_pool_backward, seq_repeat_upsample,
    seq_repeat_upsample_backward,
};
use crate::wsb::{AdaInCtx, AdaInLayer, InitSpec};
use ndarray::{Array1, Array2, Array3, ArrayView1};
use serde::{Deserialize, Serialize};

/// Width reduction of the convolutional front-end; frame count is
/// ceil(width / 4) for every input.
pub const WIDTH_SUBSAMPLING: usize = 4;

/// Normalization sites: one after each conv block, one after the recurrent stack.
pub const NORM_SITES: usize = 5;

/// Width downsampling factor of each recurrent branch (scales 1, 0.5, 0.25).
pub const BRANCH_FACTORS: [usize; 3] = [1, 2, 4];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditioningMode {
    Baseline,
    SingleAdain,
    AllAdain,
}

impl ConditioningMode {
    pub fn is_conditioned(self) -> bool {
        !matches!(self, ConditioningMode::Baseline)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    /// Output channels of the four conv blocks.
    pub conv_channels: Vec<usize>,
    pub conv_layers_per_block: usize,
    /// Input line height; must be a positive multiple of 16.
    pub height: usize,
    /// Hidden size per LSTM direction.
    pub rnn_hidden: usize,
    pub rnn_layers_per_branch: usize,
    pub final_rnn_layers: usize,
    pub head_kernel: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            conv_channels: vec![64, 128, 256, 512],
            conv_layers_per_block: 2,
            height: 64,
            rnn_hidden: 256,
            rnn_layers_per_branch: 2,
            final_rnn_layers: 1,
            head_kernel: 3,
        }
    }
}

impl NetConfig {
    /// Small configuration that trains in minutes on one machine.
    pub fn desk() -> Self {
        NetConfig {
            conv_channels: vec![8, 16, 32, 48],
            conv_layers_per_block: 2,
            height: 32,
            rnn_hidden: 32,
            rnn_layers_per_branch: 2,
            final_rnn_layers: 1,
            head_kernel: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.conv_channels.len() != 4 {
            return Err(Error::Config(format!(
                "expected 4 conv blocks, got {}",
                self.conv_channels.len()
            )));
        }
        if self.conv_layers_per_block == 0 || self.rnn_layers_per_branch == 0 {
            return Err(Error::Config("layer counts must be positive".into()));
        }
        if self.final_rnn_layers == 0 {
            return Err(Error::Config("final_rnn_layers must be positive".into()));
        }
        if self.height == 0 || self.height % 16 != 0 {
            return Err(Error::Config(format!(
                "line height must be a positive multiple of 16, got {}",
                self.height
            )));
        }
        if self.head_kernel % 2 == 0 {
            return Err(Error::Config("head kernel must be odd".into()));
        }
        if self.conv_channels.iter().any(|&c| c == 0) || self.rnn_hidden == 0 {
            return Err(Error::Config("channel sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn frames_for_width(width: usize) -> usize {
        width.div_ceil(WIDTH_SUBSAMPLING)
    }

    /// Feature height remaining after the per-block height pools.
    fn residual_height(&self) -> usize {
        let mut h = self.height;
        for _ in 0..4 {
            if h % 2 == 0 && h > 1 {
                h /= 2;
            }
        }
        h
    }

    /// Feature dimension entering the recurrent stack.
    pub fn seq_features(&self) -> usize {
        self.conv_channels[3] * self.residual_height()
    }
}

#[derive(Clone)]
struct ConvBlock {
    convs: Vec<Conv2d>,
    pool: bool,
}

#[derive(Clone)]
enum NormSite {
    Plain(InstanceNorm),
    Ada(AdaInLayer),
}

impl NormSite {
    fn is_ada(&self) -> bool {
        matches!(self, NormSite::Ada(_))
    }
}

enum SiteCtx {
    Plain(NormCtx),
    Ada(AdaInCtx),
}

/// One sample, one network pass worth of backward context.
pub struct Tape {
    trunk: TrunkTape,
    upper: UpperTape,
}

pub struct TrunkTape {
    blocks: Vec<BlockTape>,
    sites: Vec<(SiteCtx, (usize, usize, usize))>, // ctx + [C,H,W] dims at the site
}

struct BlockTape {
    convs: Vec<(Conv2dCtx, Array3<f32>)>, // ctx + relu output
    pool_arg: Option<Array3<u8>>,
}

pub struct UpperTape {
    site3: (SiteCtx, (usize, usize, usize)),
    collapse_dims: (usize, usize, usize),
    branches: Vec<BranchTape>,
    t_len: usize,
    final_rnn: Vec<BiLstmCtx>,
    site4: SiteCtx,
    head: Conv1dCtx,
}

struct BranchTape {
    pooled_len: usize,
    layers: Vec<BiLstmCtx>,
}

/// The recognizer network. Parameters live in `store`; the writer embedding
/// table is a separate artifact passed in at call sites.
#[derive(Clone)]
pub struct Recognizer {
    pub cfg: NetConfig,
    pub mode: ConditioningMode,
    pub ed: usize,
    pub charset: Charset,
    pub store: ParamStore,
    blocks: Vec<ConvBlock>,
    sites: Vec<NormSite>,
    branches: Vec<Vec<BiLstm>>,
    final_rnn: Vec<BiLstm>,
    head: Conv1d,
}

impl Recognizer {
    /// Builds the network. Conditioned modes require the embedding dimension
    /// of the table that will drive the adaptive sites.
    pub fn build(
        cfg: NetConfig,
        mode: ConditioningMode,
        ed: usize,
        charset: Charset,
        seed: u64,
        init: InitSpec,
    ) -> Result<Self> {
        cfg.validate()?;
        if mode.is_conditioned() && ed == 0 {
            return Err(Error::Config(
                "conditioned modes need an embedding source (ed > 0)".into(),
            ));
        }

        let mut store = ParamStore::new();
        let mut blocks = Vec::new();
        let mut height = cfg.height;
        let mut c_in = 1usize;
        for (b, &c_out) in cfg.conv_channels.iter().enumerate() {
            let mut convs = Vec::new();
            for l in 0..cfg.conv_layers_per_block {
                let last = l + 1 == cfg.conv_layers_per_block;
                // stride-2 width subsampling lives in blocks 2 and 3
                let stride_w = if last && (b == 1 || b == 2) { 2 } else { 1 };
                let name = format!("block{b}.conv{l}");
                let mut rng = param_rng(seed, &name);
                convs.push(Conv2d::new(
                    &mut store,
                    &name,
                    if l == 0 { c_in } else { c_out },
                    c_out,
                    (3, 3),
                    (1, stride_w),
                    &mut rng,
                ));
            }
            let pool = height % 2 == 0 && height > 1;
            if pool {
                height /= 2;
            }
            blocks.push(ConvBlock { convs, pool });
            c_in = c_out;
        }

        let final_out = 2 * cfg.rnn_hidden;
        let site_channels: Vec<usize> = cfg
            .conv_channels
            .iter()
            .copied()
            .chain(std::iter::once(final_out))
            .collect();
        let mut sites = Vec::new();
        for (i, &ch) in site_channels.iter().enumerate() {
            let ada = match mode {
                ConditioningMode::Baseline => false,
                ConditioningMode::SingleAdain => i == 3,
                ConditioningMode::AllAdain => true,
            };
            let name = format!("site{i}");
            if ada {
                let mut rng = param_rng(seed, &format!("{name}.ada"));
                sites.push(NormSite::Ada(AdaInLayer::new(
                    &mut store, &name, ch, ed, init, &mut rng,
                )));
            } else {
                sites.push(NormSite::Plain(InstanceNorm::new(
                    &mut store,
                    &name,
                    ch,
                    crate::wsb::DEFAULT_EPS,
                )));
            }
        }

        let feat = cfg.seq_features();
        let mut branches = Vec::new();
        for (bi, _) in BRANCH_FACTORS.iter().enumerate() {
            let mut layers = Vec::new();
            let mut d_in = feat;
            for l in 0..cfg.rnn_layers_per_branch {
                let name = format!("branch{bi}.lstm{l}");
                let mut rng = param_rng(seed, &name);
                layers.push(BiLstm::new(&mut store, &name, d_in, cfg.rnn_hidden, &mut rng));
                d_in = 2 * cfg.rnn_hidden;
            }
            branches.push(layers);
        }
        let mut final_rnn = Vec::new();
        let mut d_in = 2 * cfg.rnn_hidden;
        for l in 0..cfg.final_rnn_layers {
            let name = format!("final.lstm{l}");
            let mut rng = param_rng(seed, &name);
            final_rnn.push(BiLstm::new(&mut store, &name, d_in, cfg.rnn_hidden, &mut rng));
            d_in = 2 * cfg.rnn_hidden;
        }

        let head_name = "head";
        let mut rng = param_rng(seed, head_name);
        let head = Conv1d::new(
            &mut store,
            head_name,
            final_out,
            charset.len() + 1,
            cfg.head_kernel,
            &mut rng,
        );

        Ok(Recognizer {
            cfg,
            mode,
            ed,
            charset,
            store,
            blocks,
            sites,
            branches,
            final_rnn,
            head,
        })
    }

    pub fn adain_site_count(&self) -> usize {
        self.sites.iter().filter(|s| s.is_ada()).count()
    }

    pub fn adain_sites(&self) -> Vec<&AdaInLayer> {
        self.sites
            .iter()
            .filter_map(|s| match s {
                NormSite::Ada(l) => Some(l),
                NormSite::Plain(_) => None,
            })
            .collect()
    }

    /// Zeroes every conditioned site's projections (used by equivalence checks).
    pub fn zero_adain_projections(&mut self) {
        let layers: Vec<AdaInLayer> = self
            .sites
            .iter()
            .filter_map(|s| match s {
                NormSite::Ada(l) => Some(l.clone()),
                NormSite::Plain(_) => None,
            })
            .collect();
        for l in layers {
            l.zero_projections(&mut self.store);
        }
    }

    fn require_e<'a>(&self, e: Option<&'a ArrayView1<'a, f32>>) -> Result<Option<&'a ArrayView1<'a, f32>>> {
        if !self.mode.is_conditioned() {
            return Ok(None); // baseline ignores the embedding entirely
        }
        match e {
            None => Err(Error::MissingWsi),
            Some(v) if v.len() != self.ed => Err(Error::DimensionMismatch(format!(
                "embedding dimension {} does not match network ed {}",
                v.len(),
                self.ed
            ))),
            Some(v) => Ok(Some(v)),
        }
    }

    fn site_forward(
        &self,
        idx: usize,
        x2: &Array2<f32>,
        e: Option<&ArrayView1<f32>>,
    ) -> (Array2<f32>, SiteCtx) {
        match &self.sites[idx] {
            NormSite::Plain(n) => {
                let (y, ctx) = n.forward(&self.store, x2);
                (y, SiteCtx::Plain(ctx))
            }
            NormSite::Ada(l) => {
                let e = e.expect("conditioned site requires an embedding");
                let (y, ctx) = l.forward(&self.store, x2, e);
                (y, SiteCtx::Ada(ctx))
            }
        }
    }

    fn site_backward(
        &self,
        idx: usize,
        ctx: &SiteCtx,
        grad: &Array2<f32>,
        grads: &mut GradStore,
        de: &mut Option<Array1<f32>>,
    ) -> Array2<f32> {
        match (&self.sites[idx], ctx) {
            (NormSite::Plain(n), SiteCtx::Plain(c)) => n.backward(c, grad, grads),
            (NormSite::Ada(l), SiteCtx::Ada(c)) => {
                let (dx, d_emb) = l.backward(&self.store, c, grad, grads);
                match de {
                    Some(acc) => *acc += &d_emb,
                    None => *de = Some(d_emb),
                }
                dx
            }
            _ => unreachable!("site ctx kind mismatch"),
        }
    }

    /// Convolutional trunk: blocks 1-4 with norm sites 1-3 applied, stopping
    /// before site 4. Independent of the embedding unless every site is
    /// conditioned, which makes the output cacheable for embedding search.
    pub fn trunk_forward(
        &self,
        image: &Array2<f32>,
        e: Option<&ArrayView1<f32>>,
    ) -> Result<(Array3<f32>, TrunkTape)> {
        // only the all-conditioned mode has conditioned sites in the trunk;
        // otherwise trunk activations are a pure function of the image
        let e = match self.mode {
            ConditioningMode::AllAdain => self.require_e(e)?,
            _ => None,
        };
        let (h, w) = image.dim();
        if h != self.cfg.height {
            return Err(Error::DimensionMismatch(format!(
                "image height {h} does not match configured height {}",
                self.cfg.height
            )));
        }
        if w == 0 {
            return Err(Error::DimensionMismatch("image width must be >= 1".into()));
        }

        let mut x = image
            .to_owned()
            .into_shape_with_order((1, h, w))
            .unwrap();
        let mut blocks_tape = Vec::new();
        let mut sites_tape = Vec::new();
        for (b, block) in self.blocks.iter().enumerate() {
            let mut convs_tape = Vec::new();
            for conv in &block.convs {
                let (y, ctx) = conv.forward(&self.store, &x);
                let dims = y.dim();
                let y2 = relu(&y.into_shape_with_order((dims.0, dims.1 * dims.2)).unwrap());
                let y3 = y2.into_shape_with_order(dims).unwrap();
                convs_tape.push((ctx, y3.clone()));
                x = y3;
            }
            let pool_arg = if block.pool {
                let (p, arg) = hpool2_forward(&x);
                x = p;
                Some(arg)
            } else {
                None
            };
            blocks_tape.push(BlockTape {
                convs: convs_tape,
                pool_arg,
            });
            if b < 3 {
                let dims = x.dim();
                let flat = x
                    .into_shape_with_order((dims.0, dims.1 * dims.2))
                    .unwrap();
                let (y, ctx) = self.site_forward(b, &flat, e);
                sites_tape.push((ctx, dims));
                x = y.into_shape_with_order(dims).unwrap();
            }
        }
        Ok((
            x,
            TrunkTape {
                blocks: blocks_tape,
                sites: sites_tape,
            },
        ))
    }

    /// Everything above the trunk: norm site 4, height collapse, the three
    /// scaled recurrent branches, the final recurrent layer, norm site 5 and
    /// the output head.
    pub fn upper_forward(
        &self,
        feat: &Array3<f32>,
        e: Option<&ArrayView1<f32>>,
    ) -> Result<(Array2<f32>, UpperTape)> {
        let e = self.require_e(e)?;
        let dims = feat.dim();
        let flat = feat
            .to_owned()
            .into_shape_with_order((dims.0, dims.1 * dims.2))
            .unwrap();
        let (y, site3_ctx) = self.site_forward(3, &flat, e);
        let x = y.into_shape_with_order(dims).unwrap();

        // [C, Hr, W] -> [T = W, F = C * Hr]
        let (c, hr, t_len) = x.dim();
        let mut seq = Array2::<f32>::zeros((t_len, c * hr));
        for ci in 0..c {
            for hi in 0..hr {
                for t in 0..t_len {
                    seq[[t, ci * hr + hi]] = x[[ci, hi, t]];
                }
            }
        }

        let mut summed = Array2::<f32>::zeros((t_len, 2 * self.cfg.rnn_hidden));
        let mut branch_tapes = Vec::new();
        for (bi, factor) in BRANCH_FACTORS.iter().enumerate() {
            let mut h = seq_avg_pool(&seq, *factor);
            let pooled_len = h.nrows();
            let mut layer_ctxs = Vec::new();
            for layer in &self.branches[bi] {
                let (y, ctx) = layer.forward(&self.store, &h);
                layer_ctxs.push(ctx);
                h = y;
            }
            let up = seq_repeat_upsample(&h, *factor, t_len);
            summed += &up;
            branch_tapes.push(BranchTape {
                pooled_len,
                layers: layer_ctxs,
            });
        }

        let mut h = summed;
        let mut final_ctxs = Vec::new();
        for layer in &self.final_rnn {
            let (y, ctx) = layer.forward(&self.store, &h);
            final_ctxs.push(ctx);
            h = y;
        }

        // site 5 normalizes channels over time: [T, F] -> [F, T]
        let ht = h.t().to_owned();
        let (yn, site4_ctx) = self.site_forward(4, &ht, e);
        let h = yn.t().to_owned();

        let (logits, head_ctx) = self.head.forward(&self.store, &h);
        Ok((
            logits,
            UpperTape {
                site3: (site3_ctx, dims),
                collapse_dims: (c, hr, t_len),
                branches: branch_tapes,
                t_len,
                final_rnn: final_ctxs,
                site4: site4_ctx,
                head: head_ctx,
            },
        ))
    }

    /// Full forward pass; logits are [T, charset + 1].
    pub fn forward(
        &self,
        image: &Array2<f32>,
        e: Option<&ArrayView1<f32>>,
    ) -> Result<(Array2<f32>, Tape)> {
        let (feat, trunk) = self.trunk_forward(image, e)?;
        let (logits, upper) = self.upper_forward(&feat, e)?;
        Ok((logits, Tape { trunk, upper }))
    }

    /// Forward without keeping backward context.
    pub fn forward_logits(
        &self,
        image: &Array2<f32>,
        e: Option<&ArrayView1<f32>>,
    ) -> Result<Array2<f32>> {
        self.forward(image, e).map(|(l, _)| l)
    }

    /// Backward through the upper stage only. Returns the gradient w.r.t. the
    /// trunk output and (for conditioned nets) the embedding.
    pub fn upper_backward(
        &self,
        tape: &UpperTape,
        dlogits: &Array2<f32>,
        grads: &mut GradStore,
    ) -> (Array3<f32>, Option<Array1<f32>>) {
        let mut de = None;

        let dh = self.head.backward(&self.store, &tape.head, dlogits, grads);
        let dht = dh.t().to_owned();
        let dyn_ = self.site_backward(4, &tape.site4, &dht, grads, &mut de);
        let mut dh = dyn_.t().to_owned();

        for (layer, ctx) in self.final_rnn.iter().zip(tape.final_rnn.iter()).rev() {
            dh = layer.backward(&self.store, ctx, &dh, grads);
        }

        let (c, hr, t_len) = tape.collapse_dims;
        let mut dseq = Array2::<f32>::zeros((t_len, c * hr));
        for (bi, factor) in BRANCH_FACTORS.iter().enumerate() {
            let tape_b = &tape.branches[bi];
            let mut g = seq_repeat_upsample_backward(&dh, tape_b.pooled_len, *factor);
            for (layer, ctx) in self.branches[bi].iter().zip(tape_b.layers.iter()).rev() {
                g = layer.backward(&self.store, ctx, &g, grads);
            }
            dseq += &seq_avg_pool_backward(&g, tape.t_len, *factor);
        }

        // un-collapse [T, C*Hr] -> [C, Hr, T]
        let mut dx = Array3::<f32>::zeros((c, hr, t_len));
        for ci in 0..c {
            for hi in 0..hr {
                for t in 0..t_len {
                    dx[[ci, hi, t]] = dseq[[t, ci * hr + hi]];
                }
            }
        }

        let dims = tape.site3.1;
        let flat = dx
            .into_shape_with_order((dims.0, dims.1 * dims.2))
            .unwrap();
        let dfeat = self.site_backward(3, &tape.site3.0, &flat, grads, &mut de);
        (dfeat.into_shape_with_order(dims).unwrap(), de)
    }

    /// Full backward pass; accumulates parameter gradients and returns the
    /// embedding gradient when the net is conditioned.
    pub fn backward(
        &self,
        tape: &Tape,
        dlogits: &Array2<f32>,
        grads: &mut GradStore,
    ) -> Option<Array1<f32>> {
        let (dfeat, mut de) = self.upper_backward(&tape.upper, dlogits, grads);

        let mut dx = dfeat;
        for b in (0..self.blocks.len()).rev() {
            if b < 3 {
                let (ctx, dims) = &tape.trunk.sites[b];
                let dims = *dims;
                let flat = dx
                    .into_shape_with_order((dims.0, dims.1 * dims.2))
                    .unwrap();
                let g = self.site_backward(b, ctx, &flat, grads, &mut de);
                dx = g.into_shape_with_order(dims).unwrap();
            }
            let block = &self.blocks[b];
            let tape_b = &tape.trunk.blocks[b];
            if let Some(arg) = &tape_b.pool_arg {
                dx = hpool2_backward(&dx, arg);
            }
            for (conv, (ctx, fwd_out)) in block.convs.iter().zip(tape_b.convs.iter()).rev() {
                let dims = dx.dim();
                let flat = dx
                    .into_shape_with_order((dims.0, dims.1 * dims.2))
                    .unwrap();
                let fwd_dims = fwd_out.dim();
                let fwd_flat = fwd_out
                    .view()
                    .into_shape_with_order((fwd_dims.0, fwd_dims.1 * fwd_dims.2))
                    .unwrap();
                let masked = relu_backward(&flat, &fwd_flat.to_owned());
                let g = masked.into_shape_with_order(dims).unwrap();
                dx = conv.backward(&self.store, ctx, &g, grads);
            }
        }
        de
    }
}

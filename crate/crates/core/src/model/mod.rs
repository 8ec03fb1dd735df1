//! VGG16 encoder with a bilinear-upsampling, summation-skip decoder.
//!
//! Encoder stages (channels x convs): 64x2, 128x2, 256x3, 512x3, 512x3, each
//! conv followed by batch norm and ReLU, a 2x2 max-pool closing every stage.
//! The pre-pool activation of each stage is kept as a skip. The decoder
//! mirrors this five times: upsample x2, conv block, add the matching skip,
//! conv block. A final 3x3 conv maps to the class channels, then tanh.

pub mod checkpoint;
mod layers;
mod optim;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{decode_checkpoint, load_checkpoint, load_checkpoint_for, save_checkpoint, Checkpoint};
pub use layers::{BatchNorm2d, BlockTape, Conv2d, ConvBlock};
pub use optim::Adam;

use crate::error::{Error, Result};
use crate::labels::LabelMap;
use crate::nn::{
    add, maxpool2, maxpool2_backward, tanh_act, tanh_backward, upsample_bilinear2x,
    upsample_bilinear2x_backward, Mode, Parameter, Tensor,
};
use crate::scalar::Scalar;

/// Full-width encoder schedule: (output channels, number of convs) per stage.
pub const ENCODER_SCHEDULE: [(usize, usize); 5] = [(64, 2), (128, 2), (256, 3), (512, 3), (512, 3)];

/// Total down-sampling factor of the five pooling stages.
pub const DOWNSAMPLE: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub in_channels: usize,
    pub num_classes: usize,
    pub width_multiplier: f64,
    pub input_size: usize,
}

impl Default for ArchitectureSpec {
    fn default() -> Self {
        ArchitectureSpec {
            in_channels: 4,
            num_classes: 4,
            width_multiplier: 1.0,
            input_size: 224,
        }
    }
}

impl ArchitectureSpec {
    pub fn with_width(width_multiplier: f64, input_size: usize) -> Self {
        ArchitectureSpec {
            width_multiplier,
            input_size,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width_multiplier > 0.0 && self.width_multiplier <= 1.0) {
            return Err(Error::invalid(format!(
                "width_multiplier must lie in (0, 1], got {}",
                self.width_multiplier
            )));
        }
        if self.input_size == 0 || self.input_size % DOWNSAMPLE != 0 {
            return Err(Error::invalid(format!(
                "input_size must be a positive multiple of {DOWNSAMPLE}, got {}",
                self.input_size
            )));
        }
        if self.in_channels == 0 || self.num_classes == 0 {
            return Err(Error::invalid("in_channels and num_classes must be positive"));
        }
        Ok(())
    }

    /// Full-width channel count scaled by the width multiplier, rounded to nearest, at least 1.
    pub fn channels(&self, full: usize) -> usize {
        ((full as f64 * self.width_multiplier).round() as usize).max(1)
    }

    /// Scaled output channels of each encoder stage (equal to the skip widths).
    pub fn stage_channels(&self) -> Vec<usize> {
        ENCODER_SCHEDULE.iter().map(|&(c, _)| self.channels(c)).collect()
    }

    /// Every conv as `(name, in, out)` in forward order.
    pub fn conv_layout(&self) -> Vec<(String, usize, usize)> {
        let mut out = Vec::new();
        let mut cin = self.in_channels;
        for (s, &(c, n)) in ENCODER_SCHEDULE.iter().enumerate() {
            let cout = self.channels(c);
            for i in 0..n {
                out.push((format!("enc{}.conv{}", s + 1, i + 1), cin, cout));
                cin = cout;
            }
        }
        let skips = self.stage_channels();
        for s in (0..skips.len()).rev() {
            let cout = skips[s];
            out.push((format!("dec{}.conv1", s + 1), cin, cout));
            out.push((format!("dec{}.conv2", s + 1), cout, cout));
            cin = cout;
        }
        out.push(("head".to_string(), cin, self.num_classes));
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
struct EncoderStage<T> {
    blocks: Vec<ConvBlock<T>>,
}

#[derive(Clone, Debug, PartialEq)]
struct DecoderStage<T> {
    pre: ConvBlock<T>,
    post: ConvBlock<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentationModel<T> {
    spec: ArchitectureSpec,
    encoder: Vec<EncoderStage<T>>,
    decoder: Vec<DecoderStage<T>>,
    head: Conv2d<T>,
    mode: Mode,
}

struct EncoderTape<T> {
    blocks: Vec<BlockTape<T>>,
    pool_argmax: Vec<u32>,
    pool_input_shape: Vec<usize>,
}

struct DecoderTape<T> {
    up_input_shape: Vec<usize>,
    pre: BlockTape<T>,
    post: BlockTape<T>,
}

/// Intermediate values of a train-mode forward pass, consumed by
/// [`SegmentationModel::backward`].
pub struct Tape<T> {
    encoder: Vec<EncoderTape<T>>,
    decoder: Vec<DecoderTape<T>>,
    head_input: Tensor<T>,
    output: Tensor<T>,
}

impl<T: Scalar> SegmentationModel<T> {
    /// Builds the network with deterministic seeded initialization.
    pub fn build(spec: ArchitectureSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut encoder = Vec::new();
        let mut cin = spec.in_channels;
        for (s, &(c, n)) in ENCODER_SCHEDULE.iter().enumerate() {
            let cout = spec.channels(c);
            let blocks = (0..n)
                .map(|i| {
                    ConvBlock::new(
                        &format!("enc{}.conv{}", s + 1, i + 1),
                        &format!("enc{}.bn{}", s + 1, i + 1),
                        if i == 0 { cin } else { cout },
                        cout,
                        &mut rng,
                    )
                })
                .collect();
            encoder.push(EncoderStage { blocks });
            cin = cout;
        }
        let skips = spec.stage_channels();
        let mut decoder = Vec::new();
        for s in (0..skips.len()).rev() {
            let cout = skips[s];
            let pre = ConvBlock::new(
                &format!("dec{}.conv1", s + 1),
                &format!("dec{}.bn1", s + 1),
                cin,
                cout,
                &mut rng,
            );
            let post = ConvBlock::new(
                &format!("dec{}.conv2", s + 1),
                &format!("dec{}.bn2", s + 1),
                cout,
                cout,
                &mut rng,
            );
            // the summation needs the decoder path and the skip to agree
            if pre.conv.out_channels() != skips[s] {
                return Err(Error::shape(format!(
                    "decoder stage {} produces {} channels, skip has {}",
                    s + 1,
                    pre.conv.out_channels(),
                    skips[s]
                )));
            }
            decoder.push(DecoderStage { pre, post });
            cin = cout;
        }
        let head = Conv2d::new("head", cin, spec.num_classes, &mut rng);
        Ok(SegmentationModel {
            spec,
            encoder,
            decoder,
            head,
            mode: Mode::Train,
        })
    }

    pub fn spec(&self) -> &ArchitectureSpec {
        &self.spec
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let (_, c, h, w) = x.dims4()?;
        let s = self.spec.input_size;
        if c != self.spec.in_channels || h != s || w != s {
            return Err(Error::shape(format!(
                "model expects [B,{},{s},{s}] input, got {:?}",
                self.spec.in_channels,
                x.shape()
            )));
        }
        Ok(())
    }

    /// Forward pass honoring the current mode. In train mode batch statistics
    /// are used and the running statistics are updated.
    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self.mode {
            Mode::Eval => self.infer(x),
            Mode::Train => Ok(self.forward_train(x)?.0),
        }
    }

    /// Eval-mode forward on an immutable model.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut skips = Vec::with_capacity(self.encoder.len());
        let mut h = x.clone();
        for stage in &self.encoder {
            for block in &stage.blocks {
                h = block.forward_eval(&h)?;
            }
            let pooled = maxpool2(&h)?.output;
            skips.push(h);
            h = pooled;
        }
        for (stage, skip) in self.decoder.iter().zip(skips.iter().rev()) {
            let up = upsample_bilinear2x(&h)?;
            let a = stage.pre.forward_eval(&up)?;
            let merged = add(&a, skip)?;
            h = stage.post.forward_eval(&merged)?;
        }
        Ok(tanh_act(&self.head.forward(&h)?))
    }

    /// Train-mode forward recording everything the backward pass needs.
    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<(Tensor<T>, Tape<T>)> {
        self.check_input(x)?;
        let mut skips = Vec::with_capacity(self.encoder.len());
        let mut enc_tapes = Vec::with_capacity(self.encoder.len());
        let mut h = x.clone();
        for stage in &mut self.encoder {
            let mut blocks = Vec::with_capacity(stage.blocks.len());
            for block in &mut stage.blocks {
                let (y, tape) = block.forward_train(h)?;
                blocks.push(tape);
                h = y;
            }
            let pool = maxpool2(&h)?;
            enc_tapes.push(EncoderTape {
                blocks,
                pool_argmax: pool.argmax,
                pool_input_shape: h.shape().to_vec(),
            });
            skips.push(h);
            h = pool.output;
        }
        let mut dec_tapes = Vec::with_capacity(self.decoder.len());
        for (stage, skip) in self.decoder.iter_mut().zip(skips.iter().rev()) {
            let up_input_shape = h.shape().to_vec();
            let up = upsample_bilinear2x(&h)?;
            let (a, pre) = stage.pre.forward_train(up)?;
            let merged = add(&a, skip)?;
            let (y, post) = stage.post.forward_train(merged)?;
            dec_tapes.push(DecoderTape {
                up_input_shape,
                pre,
                post,
            });
            h = y;
        }
        let output = tanh_act(&self.head.forward(&h)?);
        let tape = Tape {
            encoder: enc_tapes,
            decoder: dec_tapes,
            head_input: h,
            output: output.clone(),
        };
        Ok((output, tape))
    }

    /// Back-propagates `grad_output` (gradient w.r.t. the tanh output),
    /// accumulating into parameter gradients. Returns the input gradient.
    pub fn backward(&mut self, tape: Tape<T>, grad_output: &Tensor<T>) -> Result<Tensor<T>> {
        tape.output.expect_same_shape(grad_output, "model backward")?;
        let g = tanh_backward(&tape.output, grad_output)?;
        let mut g = self.head.backward(&tape.head_input, &g)?;

        let mut skip_grads = Vec::with_capacity(self.decoder.len());
        for (stage, dt) in self.decoder.iter_mut().zip(tape.decoder).rev() {
            let d_merged = stage.post.backward(dt.post, &g)?;
            let d_up = stage.pre.backward(dt.pre, &d_merged)?;
            skip_grads.push(d_merged);
            g = upsample_bilinear2x_backward(&dt.up_input_shape, &d_up)?;
        }
        // skip_grads[i] belongs to encoder stage i (decoder walked in reverse)
        for ((stage, et), d_skip) in self
            .encoder
            .iter_mut()
            .zip(tape.encoder)
            .zip(skip_grads)
            .rev()
        {
            let mut d = maxpool2_backward(&et.pool_argmax, &et.pool_input_shape, &g)?;
            d.add_assign(&d_skip)?;
            for (block, bt) in stage.blocks.iter_mut().zip(et.blocks).rev() {
                d = block.backward(bt, &d)?;
            }
            g = d;
        }
        Ok(g)
    }

    pub fn parameters(&self) -> Vec<&Parameter<T>> {
        let mut out = Vec::new();
        for stage in &self.encoder {
            for b in &stage.blocks {
                out.extend(b.parameters());
            }
        }
        for stage in &self.decoder {
            out.extend(stage.pre.parameters());
            out.extend(stage.post.parameters());
        }
        out.push(&self.head.weight);
        out.push(&self.head.bias);
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut out = Vec::new();
        for stage in &mut self.encoder {
            for b in &mut stage.blocks {
                out.extend(b.parameters_mut());
            }
        }
        for stage in &mut self.decoder {
            out.extend(stage.pre.parameters_mut());
            out.extend(stage.post.parameters_mut());
        }
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }

    fn batch_norms(&self) -> Vec<&BatchNorm2d<T>> {
        let mut out = Vec::new();
        for stage in &self.encoder {
            out.extend(stage.blocks.iter().map(|b| &b.bn));
        }
        for stage in &self.decoder {
            out.push(&stage.pre.bn);
            out.push(&stage.post.bn);
        }
        out
    }

    /// All persistent tensors (learnable parameters, then batch-norm running
    /// statistics) in canonical order.
    pub fn state(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out: Vec<(String, &Tensor<T>)> = self
            .parameters()
            .into_iter()
            .map(|p| (p.name.clone(), &p.value))
            .collect();
        for bn in self.batch_norms() {
            out.push((format!("{}.running_mean", bn.name), &bn.running_mean));
            out.push((format!("{}.running_var", bn.name), &bn.running_var));
        }
        out
    }

    pub fn state_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut params = Vec::new();
        let mut stats = Vec::new();
        for stage in &mut self.encoder {
            for b in &mut stage.blocks {
                split_block(b, &mut params, &mut stats);
            }
        }
        for stage in &mut self.decoder {
            split_block(&mut stage.pre, &mut params, &mut stats);
            split_block(&mut stage.post, &mut params, &mut stats);
        }
        let head = &mut self.head;
        params.push((head.weight.name.clone(), &mut head.weight.value));
        params.push((head.bias.name.clone(), &mut head.bias.value));
        params.extend(stats);
        params
    }

    pub fn num_parameters(&self) -> usize {
        self.parameters().iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.parameters_mut() {
            p.zero_grad();
        }
    }

    /// Learnable parameters flattened in canonical order.
    pub fn flat_parameters(&self) -> Vec<f64> {
        self.parameters()
            .iter()
            .flat_map(|p| p.value.data().iter().map(|v| v.as_f64()))
            .collect()
    }

    pub fn flat_gradients(&self) -> Vec<f64> {
        self.parameters()
            .iter()
            .flat_map(|p| p.grad.data().iter().map(|v| v.as_f64()))
            .collect()
    }

    pub fn set_flat_parameters(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_parameters() {
            return Err(Error::shape(format!(
                "expected {} parameter values, got {}",
                self.num_parameters(),
                flat.len()
            )));
        }
        let mut offset = 0;
        for p in self.parameters_mut() {
            for v in p.value.data_mut() {
                *v = T::of(flat[offset]);
                offset += 1;
            }
        }
        Ok(())
    }

    /// Converts every persistent tensor to another scalar type.
    pub fn cast<U: Scalar>(&self) -> SegmentationModel<U> {
        let mut out = SegmentationModel::<U>::build(self.spec.clone(), 0)
            .expect("spec was validated when this model was built");
        for ((_, dst), (_, src)) in out.state_mut().into_iter().zip(self.state()) {
            *dst = src.cast();
        }
        out.mode = self.mode;
        out
    }
}

type NamedMut<'a, T> = Vec<(String, &'a mut Tensor<T>)>;

fn split_block<'a, T>(
    block: &'a mut ConvBlock<T>,
    params: &mut NamedMut<'a, T>,
    stats: &mut NamedMut<'a, T>,
) {
    let ConvBlock { conv, bn } = block;
    params.push((conv.weight.name.clone(), &mut conv.weight.value));
    params.push((conv.bias.name.clone(), &mut conv.bias.value));
    params.push((bn.gamma.name.clone(), &mut bn.gamma.value));
    params.push((bn.beta.name.clone(), &mut bn.beta.value));
    stats.push((format!("{}.running_mean", bn.name), &mut bn.running_mean));
    stats.push((format!("{}.running_var", bn.name), &mut bn.running_var));
}

/// Per-pixel argmax over the class axis; the lowest class index wins ties.
pub fn predict_labels<T: Scalar>(pred: &Tensor<T>) -> Result<LabelMap> {
    let (b, c, h, w) = pred.dims4()?;
    if c > u8::MAX as usize {
        return Err(Error::shape("too many classes for u8 labels"));
    }
    let hw = h * w;
    let data = pred.data();
    let mut out = Vec::with_capacity(b * hw);
    for item in 0..b {
        let base = item * c * hw;
        for p in 0..hw {
            let mut best = 0usize;
            let mut best_v = data[base + p];
            for k in 1..c {
                let v = data[base + k * hw + p];
                if v > best_v {
                    best = k;
                    best_v = v;
                }
            }
            out.push(best as u8);
        }
    }
    LabelMap::new(b, h, w, out)
}

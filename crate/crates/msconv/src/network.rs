//! Backbone builders (SRResNet- and CARN-style) over multi-scale units,
//! plain forward inference, and depth search against a compute target.
//!
//! Networks are an ordered node list with explicit skip edges; values
//! flowing between nodes are either a single full-scale tensor or a
//! multi-scale feature pyramid. Bodies are built from variant units, so
//! swapping the variant never changes the I/O contract.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::pilot::{build_pilot_case, PilotCase, PipelineFn};
use crate::scalar::Scalar;
use crate::tensor::{concat_channels, dedup_parameters, Parameter, Shape, Tensor};
use crate::unit::{
    build_variant, diagonal_unit, split_channels, FirstConv, LastConv, MsConvUnit, ScaleFeatures,
    VariantName,
};
use crate::{Error, Result};

/// Backbone family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backbone {
    Srresnet,
    Carn,
}

impl Backbone {
    pub fn as_str(&self) -> &'static str {
        match self {
            Backbone::Srresnet => "srresnet",
            Backbone::Carn => "carn",
        }
    }
}

/// Declarative network description.
///
/// `num_blocks` counts residual blocks for the SRResNet backbone and
/// blocks per cascading group for CARN. `variant = standard` is the
/// single-scale baseline and forces `branches = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub backbone: Backbone,
    pub variant: VariantName,
    pub num_blocks: usize,
    pub width: usize,
    pub branches: usize,
    pub upscale: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            backbone: Backbone::Srresnet,
            variant: VariantName::Standard,
            num_blocks: 0, // filled by normalize() per backbone
            width: 64,
            branches: 0,
            upscale: 4,
        }
    }
}

impl ModelConfig {
    /// Default depth per backbone: 20 residual blocks for SRResNet, 4
    /// blocks per group for CARN.
    pub fn default_blocks(backbone: Backbone) -> usize {
        match backbone {
            Backbone::Srresnet => 20,
            Backbone::Carn => 4,
        }
    }

    /// Fill unset (zero) fields with per-backbone defaults and check
    /// consistency.
    pub fn normalize(mut self) -> Result<Self> {
        if self.num_blocks == 0 && !matches!(self.backbone, _ if false) {
            self.num_blocks = Self::default_blocks(self.backbone);
        }
        if self.branches == 0 {
            self.branches = if self.variant == VariantName::Standard { 1 } else { 2 };
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 {
            return Err(Error::invalid("width must be positive"));
        }
        if self.upscale == 0 || !self.upscale.is_power_of_two() {
            return Err(Error::invalid(format!(
                "upscale {} must be a power of two (repeated x2 shuffle stages)",
                self.upscale
            )));
        }
        if self.variant == VariantName::Standard && self.branches != 1 {
            return Err(Error::invalid("the baseline (standard) variant forces branches = 1"));
        }
        if self.branches == 0 {
            return Err(Error::invalid("branches must be at least 1"));
        }
        Ok(())
    }

    /// Per-scale channel widths of the body.
    pub fn scale_widths(&self) -> Vec<usize> {
        split_channels(self.width, self.branches)
    }

    /// Input spatial dims must be divisible by this (pooling depth of the
    /// scale pyramid).
    pub fn input_multiple(&self) -> usize {
        1 << (self.branches.saturating_sub(1))
    }

    pub fn upsample_stages(&self) -> usize {
        self.upscale.trailing_zeros() as usize
    }
}

/// Value flowing along a network edge.
#[derive(Debug, Clone)]
pub enum Value<T: Scalar> {
    Single(Tensor<T>),
    Multi(ScaleFeatures<T>),
}

impl<T: Scalar> Value<T> {
    pub fn as_single(&self) -> Result<&Tensor<T>> {
        match self {
            Value::Single(t) => Ok(t),
            Value::Multi(_) => Err(Error::shape("expected a single-scale value")),
        }
    }

    pub fn as_multi(&self) -> Result<&ScaleFeatures<T>> {
        match self {
            Value::Multi(m) => Ok(m),
            Value::Single(_) => Err(Error::shape("expected a multi-scale value")),
        }
    }
}

/// Network node operation.
#[derive(Debug, Clone)]
pub enum LayerOp<T: Scalar> {
    Input,
    First(FirstConv<T>),
    Unit(MsConvUnit<T>),
    Last(LastConv<T>),
    Conv { p: Parameter<T>, stride: usize, dilation: usize, padding: usize },
    Relu,
    /// Elementwise sum of two inputs (per scale for pyramids).
    Add,
    /// Channel concatenation of all inputs (per scale for pyramids).
    Concat,
    PixelShuffle(usize),
    /// Pilot pipeline substituted for a body convolution.
    Pipeline(PipelineFn<T>),
}

#[derive(Debug, Clone)]
pub struct Node<T: Scalar> {
    pub name: String,
    pub inputs: Vec<usize>,
    pub op: LayerOp<T>,
}

/// Ordered layer list with explicit skip edges; node inputs always
/// precede the node.
#[derive(Debug, Clone)]
pub struct Network<T: Scalar> {
    pub cfg: ModelConfig,
    nodes: Vec<Node<T>>,
}

struct NetBuilder<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> NetBuilder<T> {
    fn new() -> Self {
        NetBuilder { nodes: vec![Node { name: "input".into(), inputs: vec![], op: LayerOp::Input }] }
    }

    fn push(&mut self, name: impl Into<String>, inputs: Vec<usize>, op: LayerOp<T>) -> usize {
        self.nodes.push(Node { name: name.into(), inputs, op });
        self.nodes.len() - 1
    }
}

impl<T: Scalar> Network<T> {
    pub fn nodes(&self) -> &[Node<T>] {
        &self.nodes
    }

    /// Parameter handles with stable per-use-site names, in node order.
    pub fn named_parameters(&self) -> Vec<(String, Parameter<T>)> {
        let mut out = Vec::new();
        for node in &self.nodes {
            match &node.op {
                LayerOp::First(f) => {
                    for (i, p) in f.parameters().into_iter().enumerate() {
                        out.push((format!("{}.s{}", node.name, i), p));
                    }
                }
                LayerOp::Last(l) => {
                    for (i, p) in l.parameters().into_iter().enumerate() {
                        out.push((format!("{}.s{}", node.name, i), p));
                    }
                }
                LayerOp::Unit(u) => {
                    let s = u.scales();
                    for i in 0..s {
                        for j in 0..s {
                            if let Some(p) = &u.entry(i, j).param {
                                out.push((format!("{}.e{}{}", node.name, i, j), p.clone()));
                            }
                        }
                    }
                }
                LayerOp::Conv { p, .. } => out.push((node.name.clone(), p.clone())),
                LayerOp::Pipeline(f) => {
                    for (bi, branch) in f.atoms().iter().enumerate() {
                        for (ai, atom) in branch.iter().enumerate() {
                            if let crate::pilot::PilotAtom::Conv { p, .. } = atom {
                                out.push((format!("{}.b{}a{}", node.name, bi, ai), p.clone()));
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        out
    }

    /// Distinct parameters (by share id), in first-use order.
    pub fn parameters(&self) -> Vec<Parameter<T>> {
        let all: Vec<Parameter<T>> =
            self.named_parameters().into_iter().map(|(_, p)| p).collect();
        dedup_parameters(&all)
    }

    pub fn zero_grads(&self) {
        for p in self.parameters() {
            p.zero_grad();
        }
    }

    /// Validate an input image against the network contract, reporting
    /// the padding needed on failure.
    pub fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let s = x.shape();
        if s.c != 3 {
            return Err(Error::shape(format!("expected a 3-channel image, got {} channels", s.c)));
        }
        let m = self.cfg.input_multiple();
        if s.h % m != 0 || s.w % m != 0 {
            let pad_h = (m - s.h % m) % m;
            let pad_w = (m - s.w % m) % m;
            return Err(Error::shape(format!(
                "input {}x{} must be divisible by {m}; pad by {pad_h} rows and {pad_w} columns (reflective padding plus crop-back)",
                s.h, s.w
            )));
        }
        Ok(())
    }

    /// Forward pass: low-resolution image in, upscaled image out.
    pub fn forward(&self, lr: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(lr)?;
        let mut values: Vec<Option<Value<T>>> = vec![None; self.nodes.len()];
        for (idx, node) in self.nodes.iter().enumerate() {
            let value = match &node.op {
                LayerOp::Input => Value::Single(lr.clone()),
                LayerOp::First(f) => {
                    let x = values[node.inputs[0]].as_ref().unwrap().as_single()?;
                    Value::Multi(f.forward(x)?)
                }
                LayerOp::Unit(u) => {
                    let x = values[node.inputs[0]].as_ref().unwrap();
                    match x {
                        Value::Multi(m) => Value::Multi(u.forward(m)?),
                        Value::Single(t) => {
                            let m = ScaleFeatures::single(t.clone());
                            let y = u.forward(&m)?;
                            Value::Single(y.group(0).clone())
                        }
                    }
                }
                LayerOp::Last(l) => {
                    let x = values[node.inputs[0]].as_ref().unwrap();
                    match x {
                        Value::Multi(m) => Value::Single(l.forward(m)?),
                        Value::Single(t) => {
                            Value::Single(l.forward(&ScaleFeatures::single(t.clone()))?)
                        }
                    }
                }
                LayerOp::Conv { p, stride, dilation, padding } => {
                    let x = values[node.inputs[0]].as_ref().unwrap().as_single()?;
                    Value::Single(x.conv2d(p, *stride, *dilation, *padding)?)
                }
                LayerOp::Relu => match values[node.inputs[0]].as_ref().unwrap() {
                    Value::Single(t) => Value::Single(t.relu()?),
                    Value::Multi(m) => Value::Multi(m.relu()?),
                },
                LayerOp::Add => {
                    let a = values[node.inputs[0]].as_ref().unwrap();
                    let b = values[node.inputs[1]].as_ref().unwrap();
                    match (a, b) {
                        (Value::Single(x), Value::Single(y)) => Value::Single(x.add(y)?),
                        (Value::Multi(x), Value::Multi(y)) => Value::Multi(x.add(y)?),
                        _ => return Err(Error::shape("add over mixed value kinds")),
                    }
                }
                LayerOp::Concat => {
                    let vals: Vec<&Value<T>> =
                        node.inputs.iter().map(|&i| values[i].as_ref().unwrap()).collect();
                    match vals[0] {
                        Value::Single(_) => {
                            let ts: Vec<&Tensor<T>> =
                                vals.iter().map(|v| v.as_single()).collect::<Result<_>>()?;
                            Value::Single(concat_channels(&ts)?)
                        }
                        Value::Multi(first) => {
                            let scales = first.scales();
                            let mut groups = Vec::with_capacity(scales);
                            for s in 0..scales {
                                let gs: Vec<&Tensor<T>> = vals
                                    .iter()
                                    .map(|v| v.as_multi().map(|m| m.group(s)))
                                    .collect::<Result<_>>()?;
                                groups.push(concat_channels(&gs)?);
                            }
                            Value::Multi(ScaleFeatures::new(groups)?)
                        }
                    }
                }
                LayerOp::PixelShuffle(r) => {
                    let x = values[node.inputs[0]].as_ref().unwrap().as_single()?;
                    Value::Single(x.pixel_shuffle(*r)?)
                }
                LayerOp::Pipeline(f) => {
                    let x = values[node.inputs[0]].as_ref().unwrap().as_single()?;
                    Value::Single(f.forward(x)?)
                }
            };
            values[idx] = Some(value);
        }
        match values.pop().unwrap().unwrap() {
            Value::Single(t) => Ok(t),
            Value::Multi(_) => Err(Error::shape("network output is not a single tensor")),
        }
    }
}

/// How body convolution sites are filled.
enum BodyKind {
    Variant,
    Pilot(PilotCase),
}

fn make_body_op<T: Scalar>(
    kind: &BodyKind,
    cfg: &ModelConfig,
    widths: &[usize],
    rng: &mut impl Rng,
) -> Result<LayerOp<T>> {
    match kind {
        BodyKind::Variant => Ok(LayerOp::Unit(build_variant(
            cfg.variant,
            cfg.branches,
            widths,
            rng,
        )?)),
        BodyKind::Pilot(case) => Ok(LayerOp::Pipeline(build_pilot_case(*case, cfg.width, rng))),
    }
}

fn push_reconstruction<T: Scalar>(
    b: &mut NetBuilder<T>,
    cfg: &ModelConfig,
    mut cur: usize,
    rng: &mut impl Rng,
) -> usize {
    for stage in 0..cfg.upsample_stages() {
        let p = Parameter::conv_init(cfg.width * 4, cfg.width, 1, rng);
        cur = b.push(
            format!("up{stage}.conv"),
            vec![cur],
            LayerOp::Conv { p, stride: 1, dilation: 1, padding: 0 },
        );
        cur = b.push(format!("up{stage}.shuffle"), vec![cur], LayerOp::PixelShuffle(2));
        cur = b.push(format!("up{stage}.relu"), vec![cur], LayerOp::Relu);
    }
    let tail = Parameter::conv_init(3, cfg.width, 3, rng);
    b.push("tail", vec![cur], LayerOp::Conv { p: tail, stride: 1, dilation: 1, padding: 1 })
}

fn build_srresnet_kind<T: Scalar>(
    cfg: &ModelConfig,
    kind: BodyKind,
    rng: &mut impl Rng,
) -> Result<Network<T>> {
    cfg.validate()?;
    let widths = cfg.scale_widths();
    let mut b = NetBuilder::new();
    let first = b.push("first", vec![0], LayerOp::First(FirstConv::init(3, &widths, rng)));
    let mut cur = first;
    for blk in 0..cfg.num_blocks {
        let block_in = cur;
        let u1 = make_body_op(&kind, cfg, &widths, rng)?;
        cur = b.push(format!("block{blk:02}.u1"), vec![cur], u1);
        cur = b.push(format!("block{blk:02}.relu"), vec![cur], LayerOp::Relu);
        let u2 = make_body_op(&kind, cfg, &widths, rng)?;
        cur = b.push(format!("block{blk:02}.u2"), vec![cur], u2);
        cur = b.push(format!("block{blk:02}.skip"), vec![block_in, cur], LayerOp::Add);
    }
    cur = b.push("global_skip", vec![first, cur], LayerOp::Add);
    cur = b.push("last", vec![cur], LayerOp::Last(LastConv::init(&widths, cfg.width, rng)));
    push_reconstruction(&mut b, cfg, cur, rng);
    Ok(Network { cfg: *cfg, nodes: b.nodes })
}

/// SRResNet-style backbone: split head, residual blocks of two variant
/// units with a relu between and a block skip, one global skip from the
/// post-head features, aggregate tail, then conv + sub-pixel shuffle
/// reconstruction.
pub fn build_srresnet<T: Scalar>(cfg: &ModelConfig, rng: &mut impl Rng) -> Result<Network<T>> {
    if cfg.backbone != Backbone::Srresnet {
        return Err(Error::invalid("build_srresnet requires the srresnet backbone"));
    }
    build_srresnet_kind(cfg, BodyKind::Variant, rng)
}

/// SRResNet topology with every body convolution replaced by a pilot
/// case pipeline (single-scale only).
pub fn build_srresnet_pilot<T: Scalar>(
    cfg: &ModelConfig,
    case: PilotCase,
    rng: &mut impl Rng,
) -> Result<Network<T>> {
    if cfg.branches != 1 || cfg.variant != VariantName::Standard {
        return Err(Error::invalid("pilot bodies substitute the single-scale baseline"));
    }
    build_srresnet_kind(cfg, BodyKind::Pilot(case), rng)
}

/// CARN-style backbone: cascading groups whose block outputs are
/// concatenated with all previous outputs and fused by pointwise
/// convolutions, at both block and group level.
pub fn build_carn<T: Scalar>(cfg: &ModelConfig, rng: &mut impl Rng) -> Result<Network<T>> {
    if cfg.backbone != Backbone::Carn {
        return Err(Error::invalid("build_carn requires the carn backbone"));
    }
    cfg.validate()?;
    let widths = cfg.scale_widths();
    let groups = 3usize;
    let mut b = NetBuilder::new();
    let first = b.push("first", vec![0], LayerOp::First(FirstConv::init(3, &widths, rng)));

    let mut group_outputs = vec![first];
    let mut cur = first;
    for g in 0..groups {
        let mut cascade = vec![cur];
        for blk in 0..cfg.num_blocks {
            let block_in = cur;
            let name = format!("g{g}b{blk}");
            let u1 = make_body_op(&BodyKind::Variant, cfg, &widths, rng)?;
            cur = b.push(format!("{name}.u1"), vec![cur], u1);
            cur = b.push(format!("{name}.relu"), vec![cur], LayerOp::Relu);
            let u2 = make_body_op(&BodyKind::Variant, cfg, &widths, rng)?;
            cur = b.push(format!("{name}.u2"), vec![cur], u2);
            cur = b.push(format!("{name}.skip"), vec![block_in, cur], LayerOp::Add);
            cascade.push(cur);
            cur = b.push(format!("{name}.cat"), cascade.clone(), LayerOp::Concat);
            let cat_widths: Vec<usize> = widths.iter().map(|w| w * cascade.len()).collect();
            let fuse = diagonal_unit(1, &cat_widths, &widths, rng)?;
            cur = b.push(format!("{name}.fuse"), vec![cur], LayerOp::Unit(fuse));
        }
        group_outputs.push(cur);
        cur = b.push(format!("g{g}.cat"), group_outputs.clone(), LayerOp::Concat);
        let cat_widths: Vec<usize> = widths.iter().map(|w| w * group_outputs.len()).collect();
        let fuse = diagonal_unit(1, &cat_widths, &widths, rng)?;
        cur = b.push(format!("g{g}.fuse"), vec![cur], LayerOp::Unit(fuse));
    }
    cur = b.push("last", vec![cur], LayerOp::Last(LastConv::init(&widths, cfg.width, rng)));
    push_reconstruction(&mut b, cfg, cur, rng);
    Ok(Network { cfg: *cfg, nodes: b.nodes })
}

/// Build the configured backbone.
pub fn build_network<T: Scalar>(cfg: &ModelConfig, rng: &mut impl Rng) -> Result<Network<T>> {
    match cfg.backbone {
        Backbone::Srresnet => build_srresnet(cfg, rng),
        Backbone::Carn => build_carn(cfg, rng),
    }
}

/// Increase depth until the multiply-add count at `lr_size` is maximal
/// without exceeding `target_flops`.
pub fn deepen_to_target(
    cfg: &ModelConfig,
    target_flops: u64,
    lr_size: (usize, usize),
) -> Result<ModelConfig> {
    let flops_at = |blocks: usize| -> Result<u64> {
        let mut probe = *cfg;
        probe.num_blocks = blocks;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        use rand::SeedableRng;
        let net: Network<f32> = build_network(&probe, &mut rng)?;
        Ok(crate::complexity::count_flops(&net, lr_size)?)
    };
    let current = flops_at(cfg.num_blocks)?;
    if current > target_flops {
        return Err(Error::Unreachable(format!(
            "network already needs {current} multiply-adds, above the target {target_flops}"
        )));
    }
    let mut blocks = cfg.num_blocks;
    loop {
        let next = flops_at(blocks + 1)?;
        if next > target_flops {
            break;
        }
        blocks += 1;
        if blocks > 10_000 {
            return Err(Error::Unreachable("depth search exceeded 10000 blocks".into()));
        }
    }
    let mut out = *cfg;
    out.num_blocks = blocks;
    Ok(out)
}

/// Reflect-pad (without repeating the edge sample) so both spatial dims
/// are multiples of `m`; returns the padded tensor and the applied
/// (rows, cols) padding.
pub fn reflect_pad_to_multiple<T: Scalar>(x: &Tensor<T>, m: usize) -> Result<(Tensor<T>, (usize, usize))> {
    let s = x.shape();
    let pad_h = (m - s.h % m) % m;
    let pad_w = (m - s.w % m) % m;
    if pad_h == 0 && pad_w == 0 {
        return Ok((x.clone(), (0, 0)));
    }
    if pad_h >= s.h || pad_w >= s.w {
        return Err(Error::shape(format!("image {s} too small to reflect-pad to multiple {m}")));
    }
    let out = Shape::new(s.n, s.c, s.h + pad_h, s.w + pad_w);
    let mut data = vec![T::zero(); out.len()];
    for n in 0..s.n {
        for c in 0..s.c {
            for i in 0..out.h {
                let si = if i < s.h { i } else { 2 * (s.h - 1) - i };
                for j in 0..out.w {
                    let sj = if j < s.w { j } else { 2 * (s.w - 1) - j };
                    data[((n * s.c + c) * out.h + i) * out.w + j] = x.at(n, c, si, sj);
                }
            }
        }
    }
    Ok((Tensor::from_vec(out, data)?, (pad_h, pad_w)))
}

/// Crop the top-left (h, w) window (used to undo padding after x-scale
/// inference).
pub fn crop<T: Scalar>(x: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    if h > s.h || w > s.w {
        return Err(Error::shape(format!("crop {h}x{w} larger than tensor {s}")));
    }
    let out = Shape::new(s.n, s.c, h, w);
    let mut data = vec![T::zero(); out.len()];
    for n in 0..s.n {
        for c in 0..s.c {
            for i in 0..h {
                for j in 0..w {
                    data[((n * s.c + c) * h + i) * w + j] = x.at(n, c, i, j);
                }
            }
        }
    }
    Tensor::from_vec(out, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn cfg(variant: VariantName, branches: usize, blocks: usize) -> ModelConfig {
        ModelConfig {
            backbone: Backbone::Srresnet,
            variant,
            num_blocks: blocks,
            width: 16,
            branches,
            upscale: 4,
        }
    }

    #[test]
    fn forward_shape_law_x4() {
        let mut r = rng(1);
        let net: Network<f64> = build_srresnet(&cfg(VariantName::Standard, 1, 2), &mut r).unwrap();
        let x = Tensor::random_uniform(Shape::new(1, 3, 24, 24), 0.0, 1.0, &mut r);
        let y = net.forward(&x).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 3, 96, 96));
    }

    #[test]
    fn variants_accept_the_same_inputs() {
        let mut r = rng(2);
        for (v, s) in [
            (VariantName::Ms, 2),
            (VariantName::Ms2, 2),
            (VariantName::Ms3, 2),
            (VariantName::Unet, 2),
            (VariantName::Multigrid, 3),
        ] {
            let net: Network<f64> = build_srresnet(&cfg(v, s, 1), &mut r).unwrap();
            let x = Tensor::random_uniform(Shape::new(1, 3, 8, 8), 0.0, 1.0, &mut r);
            let y = net.forward(&x).unwrap();
            assert_eq!(y.shape(), Shape::new(1, 3, 32, 32), "variant {v}");
            assert!(y.data().iter().all(|a| a.is_finite()));
        }
    }

    #[test]
    fn zero_depth_network_still_maps_lr_to_hr() {
        let mut r = rng(3);
        let net: Network<f64> = build_srresnet(&cfg(VariantName::Standard, 1, 0), &mut r).unwrap();
        let x = Tensor::random_uniform(Shape::new(2, 3, 6, 10), 0.0, 1.0, &mut r);
        let y = net.forward(&x).unwrap();
        assert_eq!(y.shape(), Shape::new(2, 3, 24, 40));
    }

    #[test]
    fn zero_input_through_zeroed_tail_gives_zero_output() {
        let mut r = rng(4);
        let net: Network<f64> = build_srresnet(&cfg(VariantName::Ms3, 2, 1), &mut r).unwrap();
        let (_, tail) = net
            .named_parameters()
            .into_iter()
            .find(|(name, _)| name == "tail")
            .unwrap();
        tail.set_weight(&vec![0.0; tail.wshape().len()]);
        tail.set_bias(&vec![0.0; tail.c_out()]);
        let y = net.forward(&Tensor::zeros(Shape::new(1, 3, 8, 8))).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn divisibility_violation_reports_required_padding() {
        let mut r = rng(5);
        let net: Network<f64> = build_srresnet(&cfg(VariantName::Ms, 2, 1), &mut r).unwrap();
        let x = Tensor::<f64>::zeros(Shape::new(1, 3, 9, 8));
        let err = net.forward(&x).unwrap_err().to_string();
        assert!(err.contains("pad by 1 rows and 0 columns"), "got: {err}");
    }

    #[test]
    fn ms3_body_has_one_distinct_diagonal_parameter_per_unit() {
        let mut r = rng(6);
        let blocks = 3;
        let net: Network<f64> = build_srresnet(&cfg(VariantName::Ms3, 2, blocks), &mut r).unwrap();
        let mut diag_ids = std::collections::HashSet::new();
        for node in net.nodes() {
            if let LayerOp::Unit(u) = &node.op {
                for i in 0..u.scales() {
                    if let Some(p) = &u.entry(i, i).param {
                        diag_ids.insert(p.share_id());
                    }
                }
            }
        }
        // Two units per block, one shared diagonal parameter per unit.
        assert_eq!(diag_ids.len(), 2 * blocks);
    }

    #[test]
    fn carn_builds_and_runs_at_degenerate_depth() {
        let mut r = rng(7);
        let c = ModelConfig {
            backbone: Backbone::Carn,
            variant: VariantName::Ms3,
            num_blocks: 1,
            width: 16,
            branches: 2,
            upscale: 4,
        };
        let net: Network<f64> = build_carn(&c, &mut r).unwrap();
        let x = Tensor::random_uniform(Shape::new(1, 3, 8, 8), 0.0, 1.0, &mut r);
        let y = net.forward(&x).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 3, 32, 32));
        assert!(y.data().iter().all(|a| a.is_finite()));
    }

    #[test]
    fn reflect_pad_and_crop_round_trip() {
        let mut r = rng(8);
        let x = Tensor::<f64>::random_uniform(Shape::new(1, 3, 7, 9), 0.0, 1.0, &mut r);
        let (padded, (ph, pw)) = reflect_pad_to_multiple(&x, 4).unwrap();
        assert_eq!((ph, pw), (1, 3));
        assert_eq!(padded.shape(), Shape::new(1, 3, 8, 12));
        // Reflection excludes the edge sample.
        assert_eq!(padded.at(0, 0, 7, 0), x.at(0, 0, 5, 0));
        assert_eq!(padded.at(0, 0, 0, 9), x.at(0, 0, 0, 7));
        let back = crop(&padded, 7, 9).unwrap();
        assert_eq!(back.data(), x.data());
    }

    #[test]
    fn config_normalization_and_validation() {
        let c = ModelConfig { variant: VariantName::Ms3, ..ModelConfig::default() }
            .normalize()
            .unwrap();
        assert_eq!(c.branches, 2);
        assert_eq!(c.num_blocks, 20);
        let bad = ModelConfig { upscale: 3, ..ModelConfig::default() }.normalize();
        assert!(bad.is_err());
        let bad2 =
            ModelConfig { variant: VariantName::Standard, branches: 2, ..ModelConfig::default() }
                .normalize();
        assert!(bad2.is_err());
    }
}

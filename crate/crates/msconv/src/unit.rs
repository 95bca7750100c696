//! Multi-scale convolution units.
//!
//! A unit is an S×S matrix of transformation entries over scale-indexed
//! feature groups: output group `i` is the sum over `j` of entry `(i, j)`
//! applied to input group `j`. Diagonal entries propagate features within
//! a scale; off-diagonal entries communicate across scales and compose a
//! convolution with |i - j| factor-2 resampling steps. The named variants
//! are specific fillings of the matrix, including the share-weight form
//! where all diagonal convolutions alias one parameter block.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::tensor::{Parameter, Shape, Tensor};
use crate::{Error, Result};

/// Feature groups at successively halved scales (group i sits at the
/// full resolution divided by 2^i, except for unfolded same-scale
/// groups).
#[derive(Debug, Clone)]
pub struct ScaleFeatures<T: Scalar> {
    groups: Vec<Tensor<T>>,
}

impl<T: Scalar> ScaleFeatures<T> {
    pub fn new(groups: Vec<Tensor<T>>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::invalid("ScaleFeatures requires at least one group"));
        }
        let n = groups[0].shape().n;
        if groups.iter().any(|g| g.shape().n != n) {
            return Err(Error::shape("all scale groups must share the batch size"));
        }
        Ok(ScaleFeatures { groups })
    }

    pub fn single(t: Tensor<T>) -> Self {
        ScaleFeatures { groups: vec![t] }
    }

    pub fn scales(&self) -> usize {
        self.groups.len()
    }

    pub fn group(&self, i: usize) -> &Tensor<T> {
        &self.groups[i]
    }

    pub fn groups(&self) -> &[Tensor<T>] {
        &self.groups
    }

    pub fn into_groups(self) -> Vec<Tensor<T>> {
        self.groups
    }

    pub fn channels(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.shape().c).collect()
    }

    pub fn relu(&self) -> Result<Self> {
        let groups = self.groups.iter().map(|g| g.relu()).collect::<Result<_>>()?;
        Ok(ScaleFeatures { groups })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.scales() != other.scales() {
            return Err(Error::shape("scale count mismatch in add"));
        }
        let groups = self
            .groups
            .iter()
            .zip(&other.groups)
            .map(|(a, b)| a.add(b))
            .collect::<Result<_>>()?;
        Ok(ScaleFeatures { groups })
    }
}

/// Pooling flavor of a downward cross-scale path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DownKind {
    Avg,
    Max,
    Nearest,
}

/// One entry of the transformation matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryKind {
    Zero,
    Identity,
    /// Same-scale convolution.
    Conv { k: usize, dilation: usize },
    /// Convolve at the (coarser) source scale, then upsample to the
    /// target scale.
    ConvThenUp { k: usize },
    /// Upsample to the (finer) target scale, then convolve there.
    UpThenConv { k: usize },
    /// Pool down to the (coarser) target scale, then convolve there.
    DownThenConv { down: DownKind, k: usize },
}

/// Entry kind plus its parameter block (absent for Zero/Identity).
#[derive(Debug, Clone)]
pub struct TransformEntry<T: Scalar> {
    pub kind: EntryKind,
    pub param: Option<Parameter<T>>,
}

impl<T: Scalar> TransformEntry<T> {
    pub fn zero() -> Self {
        TransformEntry { kind: EntryKind::Zero, param: None }
    }

    pub fn identity() -> Self {
        TransformEntry { kind: EntryKind::Identity, param: None }
    }
}

/// The executable S×S matrix: `entries[i][j]` transforms input scale `j`
/// to output scale `i`.
#[derive(Debug, Clone)]
pub struct TransformSpec<T: Scalar> {
    pub entries: Vec<Vec<TransformEntry<T>>>,
    pub in_channels: Vec<usize>,
    pub out_channels: Vec<usize>,
}

/// A multi-scale convolution layer: a [`TransformSpec`] bound to
/// parameter blocks, with optional cross-scale sharing of the diagonal.
#[derive(Debug, Clone)]
pub struct MsConvUnit<T: Scalar> {
    spec: TransformSpec<T>,
    shared: bool,
}

impl<T: Scalar> MsConvUnit<T> {
    pub fn new(spec: TransformSpec<T>, shared: bool) -> Result<Self> {
        let unit = MsConvUnit { spec, shared };
        unit.validate()?;
        Ok(unit)
    }

    fn validate(&self) -> Result<()> {
        let s = self.spec.in_channels.len();
        if s == 0 || self.spec.out_channels.len() != s {
            return Err(Error::invalid("channel widths must cover every scale"));
        }
        if self.spec.entries.len() != s || self.spec.entries.iter().any(|row| row.len() != s) {
            return Err(Error::invalid("transformation matrix must be a total SxS grid"));
        }
        for (i, row) in self.spec.entries.iter().enumerate() {
            let mut any = false;
            for (j, e) in row.iter().enumerate() {
                match (&e.kind, &e.param) {
                    (EntryKind::Zero, None) => continue,
                    (EntryKind::Identity, None) => {
                        if i != j || self.spec.in_channels[j] != self.spec.out_channels[i] {
                            return Err(Error::invalid(format!(
                                "identity entry ({i},{j}) must stay on the diagonal with equal widths"
                            )));
                        }
                    }
                    (EntryKind::Zero | EntryKind::Identity, Some(_)) => {
                        return Err(Error::invalid("Zero/Identity entries carry no parameters"));
                    }
                    (kind, None) => {
                        return Err(Error::invalid(format!(
                            "entry ({i},{j}) of kind {kind:?} is missing its parameter"
                        )));
                    }
                    (kind, Some(p)) => {
                        // Plain Conv entries may sit anywhere (unfolded
                        // same-scale matrices fill the whole grid);
                        // resampling entries must point the right way.
                        let (k, ok_dir) = match kind {
                            EntryKind::Conv { k, .. } => (*k, true),
                            EntryKind::ConvThenUp { k } | EntryKind::UpThenConv { k } => (*k, i < j),
                            EntryKind::DownThenConv { k, .. } => (*k, i > j),
                            _ => unreachable!(),
                        };
                        if !ok_dir {
                            return Err(Error::invalid(format!(
                                "entry ({i},{j}) kind {kind:?} points the wrong way"
                            )));
                        }
                        if k % 2 == 0 {
                            return Err(Error::invalid("kernels must be odd for same-size padding"));
                        }
                        if p.kernel() != k
                            || p.c_in() != self.spec.in_channels[j]
                            || p.c_out() != self.spec.out_channels[i]
                        {
                            return Err(Error::shape(format!(
                                "entry ({i},{j}) parameter {} does not map {} -> {} channels with k={k}",
                                p.wshape(),
                                self.spec.in_channels[j],
                                self.spec.out_channels[i]
                            )));
                        }
                    }
                }
                any = true;
            }
            if !any {
                return Err(Error::invalid(format!("output scale {i} receives no input")));
            }
        }
        if self.shared {
            // Diagonals with equal signatures must alias one parameter.
            let diag: Vec<_> = (0..s)
                .filter_map(|i| self.spec.entries[i][i].param.as_ref().map(|p| (i, p)))
                .collect();
            for (a, pa) in &diag {
                for (b, pb) in &diag {
                    if a < b
                        && pa.wshape() == pb.wshape()
                        && pa.share_id() != pb.share_id()
                    {
                        return Err(Error::invalid(format!(
                            "share-weights unit has unshared equal-signature diagonals {a} and {b}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn scales(&self) -> usize {
        self.spec.in_channels.len()
    }

    pub fn spec(&self) -> &TransformSpec<T> {
        &self.spec
    }

    pub fn is_shared(&self) -> bool {
        self.shared
    }

    pub fn in_channels(&self) -> &[usize] {
        &self.spec.in_channels
    }

    pub fn out_channels(&self) -> &[usize] {
        &self.spec.out_channels
    }

    pub fn entry(&self, i: usize, j: usize) -> &TransformEntry<T> {
        &self.spec.entries[i][j]
    }

    /// All parameter handles in row-major entry order (shared parameters
    /// appear once per use site; deduplicate by share id).
    pub fn parameters(&self) -> Vec<Parameter<T>> {
        self.spec
            .entries
            .iter()
            .flatten()
            .filter_map(|e| e.param.clone())
            .collect()
    }

    /// Contribution of entry (i, j) to output scale `i` given input group
    /// `j`; `None` for Zero entries.
    pub fn apply_entry(&self, i: usize, j: usize, xj: &Tensor<T>) -> Result<Option<Tensor<T>>> {
        let e = &self.spec.entries[i][j];
        let steps = i.abs_diff(j);
        let out = match &e.kind {
            EntryKind::Zero => None,
            EntryKind::Identity => Some(xj.clone()),
            EntryKind::Conv { k, dilation } => {
                let p = e.param.as_ref().expect("validated");
                Some(xj.conv2d(p, 1, *dilation, dilation * (k - 1) / 2)?)
            }
            EntryKind::ConvThenUp { k } => {
                let p = e.param.as_ref().expect("validated");
                let mut y = xj.conv2d(p, 1, 1, (k - 1) / 2)?;
                for _ in 0..steps {
                    y = y.nearest_upsample2()?;
                }
                Some(y)
            }
            EntryKind::UpThenConv { k } => {
                let p = e.param.as_ref().expect("validated");
                let mut y = xj.clone();
                for _ in 0..steps {
                    y = y.nearest_upsample2()?;
                }
                Some(y.conv2d(p, 1, 1, (k - 1) / 2)?)
            }
            EntryKind::DownThenConv { down, k } => {
                let p = e.param.as_ref().expect("validated");
                let mut y = xj.clone();
                for _ in 0..steps {
                    y = match down {
                        DownKind::Avg => y.avg_pool2()?,
                        DownKind::Max => y.max_pool2()?,
                        DownKind::Nearest => y.nearest_subsample2()?,
                    };
                }
                Some(y.conv2d(p, 1, 1, (k - 1) / 2)?)
            }
        };
        Ok(out)
    }

    /// Y_i = sum over j of entry (i, j) applied to X_j.
    pub fn forward(&self, x: &ScaleFeatures<T>) -> Result<ScaleFeatures<T>> {
        let s = self.scales();
        if x.scales() != s {
            return Err(Error::shape(format!(
                "unit expects {} scales, input has {}",
                s,
                x.scales()
            )));
        }
        if x.channels() != self.spec.in_channels {
            return Err(Error::shape(format!(
                "unit expects channels {:?}, input has {:?}",
                self.spec.in_channels,
                x.channels()
            )));
        }
        let mut out = Vec::with_capacity(s);
        for i in 0..s {
            let mut acc: Option<Tensor<T>> = None;
            for j in 0..s {
                if let Some(y) = self.apply_entry(i, j, x.group(j))? {
                    acc = Some(match acc {
                        None => y,
                        Some(a) => a.add(&y)?,
                    });
                }
            }
            out.push(acc.expect("validated: no all-zero rows"));
        }
        ScaleFeatures::new(out)
    }
}

/// Stable vocabulary for unit variants, shared by config files and the
/// CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantName {
    Standard,
    Unet,
    Octave,
    Multigrid,
    Ms,
    Ms2,
    Ms2NoLh,
    Ms2NoHl,
    Ms3,
    Ms3Large,
}

impl VariantName {
    pub const ALL: [VariantName; 10] = [
        VariantName::Standard,
        VariantName::Unet,
        VariantName::Octave,
        VariantName::Multigrid,
        VariantName::Ms,
        VariantName::Ms2,
        VariantName::Ms2NoLh,
        VariantName::Ms2NoHl,
        VariantName::Ms3,
        VariantName::Ms3Large,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            VariantName::Standard => "standard",
            VariantName::Unet => "unet",
            VariantName::Octave => "octave",
            VariantName::Multigrid => "multigrid",
            VariantName::Ms => "ms",
            VariantName::Ms2 => "ms2",
            VariantName::Ms2NoLh => "ms2_no_lh",
            VariantName::Ms2NoHl => "ms2_no_hl",
            VariantName::Ms3 => "ms3",
            VariantName::Ms3Large => "ms3_large",
        }
    }
}

impl fmt::Display for VariantName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for VariantName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        VariantName::ALL
            .iter()
            .copied()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown variant `{s}`")))
    }
}

fn conv_entry<T: Scalar>(
    kind: EntryKind,
    c_out: usize,
    c_in: usize,
    k: usize,
    rng: &mut impl Rng,
) -> TransformEntry<T> {
    TransformEntry { kind, param: Some(Parameter::conv_init(c_out, c_in, k, rng)) }
}

/// Two-scale matrix shaped like octave convolution: 3x3 everywhere, low
/// to high as conv-then-upsample, high to low as avg-pool-then-conv.
fn two_scale_full<T: Scalar>(
    channels: &[usize],
    zero_lh: bool,
    zero_hl: bool,
    rng: &mut impl Rng,
) -> Result<MsConvUnit<T>> {
    let (ch, cl) = (channels[0], channels[1]);
    let lh = if zero_lh {
        TransformEntry::zero()
    } else {
        conv_entry(EntryKind::ConvThenUp { k: 3 }, ch, cl, 3, rng)
    };
    let hl = if zero_hl {
        TransformEntry::zero()
    } else {
        conv_entry(EntryKind::DownThenConv { down: DownKind::Avg, k: 3 }, cl, ch, 3, rng)
    };
    let entries = vec![
        vec![conv_entry(EntryKind::Conv { k: 3, dilation: 1 }, ch, ch, 3, rng), lh],
        vec![hl, conv_entry(EntryKind::Conv { k: 3, dilation: 1 }, cl, cl, 3, rng)],
    ];
    MsConvUnit::new(
        TransformSpec { entries, in_channels: channels.to_vec(), out_channels: channels.to_vec() },
        false,
    )
}

/// All-pairs communication with a shared 3x3 diagonal: off-diagonal
/// entries are `off_k` convolutions composed with |i - j| resampling
/// steps (conv first then upsampling upward, avg pooling first then conv
/// downward). Diagonals with equal channel signatures alias one
/// parameter.
fn all_pairs_shared<T: Scalar>(
    channels: &[usize],
    off_k: usize,
    rng: &mut impl Rng,
) -> Result<MsConvUnit<T>> {
    let s = channels.len();
    let mut shared_by_width: Vec<(usize, Parameter<T>)> = Vec::new();
    let mut entries: Vec<Vec<TransformEntry<T>>> = Vec::with_capacity(s);
    for i in 0..s {
        let mut row = Vec::with_capacity(s);
        for j in 0..s {
            if i == j {
                let w = channels[i];
                let param = match shared_by_width.iter().find(|(cw, _)| *cw == w) {
                    Some((_, p)) => p.clone(),
                    None => {
                        let p = Parameter::conv_init(w, w, 3, rng);
                        shared_by_width.push((w, p.clone()));
                        p
                    }
                };
                row.push(TransformEntry {
                    kind: EntryKind::Conv { k: 3, dilation: 1 },
                    param: Some(param),
                });
            } else if i < j {
                row.push(conv_entry(
                    EntryKind::ConvThenUp { k: off_k },
                    channels[i],
                    channels[j],
                    off_k,
                    rng,
                ));
            } else {
                row.push(conv_entry(
                    EntryKind::DownThenConv { down: DownKind::Avg, k: off_k },
                    channels[i],
                    channels[j],
                    off_k,
                    rng,
                ));
            }
        }
        entries.push(row);
    }
    MsConvUnit::new(
        TransformSpec { entries, in_channels: channels.to_vec(), out_channels: channels.to_vec() },
        true,
    )
}

/// Diagonal-only matrix (no cross-scale paths) with per-scale in/out
/// widths; also the degenerate S=1 "standard" unit and the 1x1 fusion
/// unit used by cascading backbones.
pub fn diagonal_unit<T: Scalar>(
    k: usize,
    in_channels: &[usize],
    out_channels: &[usize],
    rng: &mut impl Rng,
) -> Result<MsConvUnit<T>> {
    let s = in_channels.len();
    if out_channels.len() != s {
        return Err(Error::invalid("diagonal unit needs matching width lists"));
    }
    let entries = (0..s)
        .map(|i| {
            (0..s)
                .map(|j| {
                    if i == j {
                        conv_entry(EntryKind::Conv { k, dilation: 1 }, out_channels[i], in_channels[j], k, rng)
                    } else {
                        TransformEntry::zero()
                    }
                })
                .collect()
        })
        .collect();
    MsConvUnit::new(
        TransformSpec {
            entries,
            in_channels: in_channels.to_vec(),
            out_channels: out_channels.to_vec(),
        },
        false,
    )
}

/// Build a named variant over `channels` (one width per scale).
pub fn build_variant<T: Scalar>(
    name: VariantName,
    s: usize,
    channels: &[usize],
    rng: &mut impl Rng,
) -> Result<MsConvUnit<T>> {
    if channels.len() != s || s == 0 {
        return Err(Error::invalid(format!(
            "variant {name} at S={s} needs exactly {s} channel widths, got {}",
            channels.len()
        )));
    }
    let need = |want: usize| -> Result<()> {
        if s != want {
            Err(Error::invalid(format!("variant {name} requires S={want}, got {s}")))
        } else {
            Ok(())
        }
    };
    match name {
        VariantName::Standard => {
            need(1)?;
            diagonal_unit(3, channels, channels, rng)
        }
        VariantName::Unet => {
            need(2)?;
            let entries = vec![
                vec![TransformEntry::identity(), TransformEntry::zero()],
                vec![
                    TransformEntry::zero(),
                    conv_entry(EntryKind::Conv { k: 3, dilation: 1 }, channels[1], channels[1], 3, rng),
                ],
            ];
            MsConvUnit::new(
                TransformSpec {
                    entries,
                    in_channels: channels.to_vec(),
                    out_channels: channels.to_vec(),
                },
                false,
            )
        }
        VariantName::Octave | VariantName::Ms2 => {
            need(2)?;
            two_scale_full(channels, false, false, rng)
        }
        VariantName::Ms2NoLh => {
            need(2)?;
            two_scale_full(channels, true, false, rng)
        }
        VariantName::Ms2NoHl => {
            need(2)?;
            two_scale_full(channels, false, true, rng)
        }
        VariantName::Multigrid => {
            need(3)?;
            let c = channels;
            let entries = vec![
                vec![
                    conv_entry(EntryKind::Conv { k: 3, dilation: 1 }, c[0], c[0], 3, rng),
                    conv_entry(EntryKind::UpThenConv { k: 3 }, c[0], c[1], 3, rng),
                    TransformEntry::zero(),
                ],
                vec![
                    conv_entry(EntryKind::DownThenConv { down: DownKind::Max, k: 3 }, c[1], c[0], 3, rng),
                    conv_entry(EntryKind::Conv { k: 3, dilation: 1 }, c[1], c[1], 3, rng),
                    conv_entry(EntryKind::UpThenConv { k: 3 }, c[1], c[2], 3, rng),
                ],
                vec![
                    TransformEntry::zero(),
                    conv_entry(EntryKind::DownThenConv { down: DownKind::Max, k: 3 }, c[2], c[1], 3, rng),
                    conv_entry(EntryKind::Conv { k: 3, dilation: 1 }, c[2], c[2], 3, rng),
                ],
            ];
            MsConvUnit::new(
                TransformSpec {
                    entries,
                    in_channels: c.to_vec(),
                    out_channels: c.to_vec(),
                },
                false,
            )
        }
        VariantName::Ms => diagonal_unit(3, channels, channels, rng),
        VariantName::Ms3 => {
            if !(1..=4).contains(&s) {
                return Err(Error::invalid(format!("variant ms3 supports S in 1..=4, got {s}")));
            }
            all_pairs_shared(channels, 1, rng)
        }
        VariantName::Ms3Large => {
            if !(1..=4).contains(&s) {
                return Err(Error::invalid(format!("variant ms3_large supports S in 1..=4, got {s}")));
            }
            all_pairs_shared(channels, 3, rng)
        }
    }
}

/// Split `total_channels` across scales: floor(total / S) per scale with
/// the remainder assigned to scale 0.
pub fn split_channels(total_channels: usize, s: usize) -> Vec<usize> {
    let base = total_channels / s;
    let rem = total_channels % s;
    (0..s).map(|i| if i == 0 { base + rem } else { base }).collect()
}

/// All-pairs share-weight unit over an equal channel split of
/// `total_channels` (1 <= S <= 4).
pub fn build_multibranch_ms3<T: Scalar>(
    s: usize,
    total_channels: usize,
    rng: &mut impl Rng,
) -> Result<MsConvUnit<T>> {
    if !(1..=4).contains(&s) {
        return Err(Error::invalid(format!("multibranch units support S in 1..=4, got {s}")));
    }
    let channels = split_channels(total_channels, s);
    build_variant(VariantName::Ms3, s, &channels, rng)
}

/// Unfold a standard convolution into a full matrix of same-scale
/// branches. Entry (i, j) convolves with the (out-block i, in-block j)
/// sub-block of `w`; each bias block rides on the diagonal entry so that
/// forward on split inputs, concatenated, reproduces conv2d with `w`.
pub fn unfold_standard<T: Scalar>(w: &Parameter<T>, split: &[usize]) -> Result<MsConvUnit<T>> {
    let total: usize = split.iter().sum();
    if split.is_empty() || split.iter().any(|&c| c == 0) {
        return Err(Error::invalid("unfold split must be non-empty positive widths"));
    }
    if total != w.c_in() || total != w.c_out() {
        return Err(Error::shape(format!(
            "unfold split sums to {total}, weight maps {} -> {} channels",
            w.c_in(),
            w.c_out()
        )));
    }
    let k = w.kernel();
    let weight = w.weight();
    let bias = w.bias();
    let c_in = w.c_in();
    let offsets: Vec<usize> = split
        .iter()
        .scan(0usize, |acc, &c| {
            let off = *acc;
            *acc += c;
            Some(off)
        })
        .collect();
    let s = split.len();
    let mut entries = Vec::with_capacity(s);
    for i in 0..s {
        let mut row = Vec::with_capacity(s);
        for j in 0..s {
            let mut sub = Vec::with_capacity(split[i] * split[j] * k * k);
            for co in offsets[i]..offsets[i] + split[i] {
                for ci in offsets[j]..offsets[j] + split[j] {
                    let start = (co * c_in + ci) * k * k;
                    sub.extend_from_slice(&weight[start..start + k * k]);
                }
            }
            let sub_bias = if i == j {
                bias[offsets[i]..offsets[i] + split[i]].to_vec()
            } else {
                vec![T::zero(); split[i]]
            };
            let param = Parameter::from_values(split[i], split[j], k, sub, sub_bias)?;
            row.push(TransformEntry { kind: EntryKind::Conv { k, dilation: 1 }, param: Some(param) });
        }
        entries.push(row);
    }
    MsConvUnit::new(
        TransformSpec { entries, in_channels: split.to_vec(), out_channels: split.to_vec() },
        false,
    )
}

/// Split a full-scale tensor into per-scale channel groups by indexing
/// (no parameters); groups stay at the same scale. Used to feed unfolded
/// units.
pub fn split_same_scale<T: Scalar>(x: &Tensor<T>, split: &[usize]) -> Result<ScaleFeatures<T>> {
    let s = x.shape();
    let total: usize = split.iter().sum();
    if total != s.c {
        return Err(Error::shape(format!("split sums to {total}, tensor has {} channels", s.c)));
    }
    let hw = s.h * s.w;
    let mut groups = Vec::with_capacity(split.len());
    let mut off = 0;
    for &c in split {
        let gshape = Shape::new(s.n, c, s.h, s.w);
        let mut data = vec![T::zero(); gshape.len()];
        for n in 0..s.n {
            data[n * c * hw..][..c * hw]
                .copy_from_slice(&x.data()[(n * s.c + off) * hw..][..c * hw]);
        }
        groups.push(Tensor::from_vec(gshape, data)?);
        off += c;
    }
    ScaleFeatures::new(groups)
}

/// The split-to-scales head: per-scale 3x3 convolutions where scale `i`
/// applies `i` average-pooling steps before its convolution.
#[derive(Debug, Clone)]
pub struct FirstConv<T: Scalar> {
    convs: Vec<Parameter<T>>,
}

impl<T: Scalar> FirstConv<T> {
    pub fn init(in_channels: usize, channels: &[usize], rng: &mut impl Rng) -> Self {
        FirstConv {
            convs: channels.iter().map(|&c| Parameter::conv_init(c, in_channels, 3, rng)).collect(),
        }
    }

    pub fn scales(&self) -> usize {
        self.convs.len()
    }

    pub fn parameters(&self) -> Vec<Parameter<T>> {
        self.convs.clone()
    }

    pub fn conv(&self, i: usize) -> &Parameter<T> {
        &self.convs[i]
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<ScaleFeatures<T>> {
        let mut groups = Vec::with_capacity(self.convs.len());
        let mut cur = x.clone();
        for (i, p) in self.convs.iter().enumerate() {
            if i > 0 {
                cur = cur.avg_pool2()?;
            }
            groups.push(cur.conv2d(p, 1, 1, 1)?);
        }
        ScaleFeatures::new(groups)
    }
}

/// The aggregate-to-single tail: per-scale upsampling to full scale
/// followed by a 3x3 convolution to a common width, summed.
#[derive(Debug, Clone)]
pub struct LastConv<T: Scalar> {
    convs: Vec<Parameter<T>>,
}

impl<T: Scalar> LastConv<T> {
    pub fn init(channels: &[usize], out_channels: usize, rng: &mut impl Rng) -> Self {
        LastConv {
            convs: channels.iter().map(|&c| Parameter::conv_init(out_channels, c, 3, rng)).collect(),
        }
    }

    pub fn scales(&self) -> usize {
        self.convs.len()
    }

    pub fn parameters(&self) -> Vec<Parameter<T>> {
        self.convs.clone()
    }

    pub fn conv(&self, i: usize) -> &Parameter<T> {
        &self.convs[i]
    }

    pub fn forward(&self, x: &ScaleFeatures<T>) -> Result<Tensor<T>> {
        if x.scales() != self.convs.len() {
            return Err(Error::shape(format!(
                "aggregate expects {} scales, input has {}",
                self.convs.len(),
                x.scales()
            )));
        }
        let mut acc: Option<Tensor<T>> = None;
        for (i, p) in self.convs.iter().enumerate() {
            let mut g = x.group(i).clone();
            for _ in 0..i {
                g = g.nearest_upsample2()?;
            }
            let y = g.conv2d(p, 1, 1, 1)?;
            acc = Some(match acc {
                None => y,
                Some(a) => a.add(&y)?,
            });
        }
        Ok(acc.expect("at least one scale"))
    }
}

//! Analytic multiply-add and parameter counting over networks.
//!
//! Convolutions count c_out * c_in * k^2 * h_out * w_out multiply-adds
//! per sample (bias adds excluded); resampling and elementwise work
//! counts zero. Parameters are counted once per distinct block (shared
//! weights never double-count), independent of input size.

use std::collections::HashSet;
use std::fmt;

use crate::network::{LayerOp, Network};
use crate::pilot::{PilotAtom, PipelineFn};
use crate::scalar::Scalar;
use crate::tensor::{conv_out_extent, Parameter, ShareId};
use crate::unit::{EntryKind, MsConvUnit};
use crate::{Error, Result};

/// One reported layer (or one output scale of a multi-scale layer).
#[derive(Debug, Clone)]
pub struct LayerRow {
    pub name: String,
    pub scale: Option<usize>,
    pub flops: u64,
    pub params: u64,
}

/// Per-layer multiply-add and parameter counts at a given input size.
#[derive(Debug, Clone)]
pub struct ComplexityReport {
    pub rows: Vec<LayerRow>,
    pub total_flops: u64,
    pub total_params: u64,
    pub input_size: (usize, usize),
}

impl ComplexityReport {
    /// Aligned plain-text table.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "# multiply-adds per sample at {}x{} input; bias adds, resampling and elementwise ops excluded\n",
            self.input_size.0, self.input_size.1
        ));
        let name_w = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(5).max(5);
        out.push_str(&format!("{:<name_w$}  {:>5}  {:>14}  {:>12}\n", "layer", "scale", "flops", "params"));
        for r in &self.rows {
            let scale = r.scale.map(|s| s.to_string()).unwrap_or_else(|| "-".into());
            out.push_str(&format!(
                "{:<name_w$}  {:>5}  {:>14}  {:>12}\n",
                r.name, scale, r.flops, r.params
            ));
        }
        out.push_str(&format!(
            "{:<name_w$}  {:>5}  {:>14}  {:>12}\n",
            "total", "-", self.total_flops, self.total_params
        ));
        out
    }

    /// Machine-readable form, one `key=value` record per row.
    pub fn render_records(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let scale = r.scale.map(|s| s.to_string()).unwrap_or_else(|| "-".into());
            out.push_str(&format!(
                "name={} scale={} flops={} params={}\n",
                r.name, scale, r.flops, r.params
            ));
        }
        out.push_str(&format!(
            "name=total scale=- flops={} params={}\n",
            self.total_flops, self.total_params
        ));
        out
    }
}

impl fmt::Display for ComplexityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render_table())
    }
}

#[derive(Debug, Clone)]
enum VShape {
    Single { c: usize, h: usize, w: usize },
    Multi(Vec<(usize, usize, usize)>),
}

fn conv_flops(c_out: usize, c_in: usize, k: usize, oh: usize, ow: usize) -> u64 {
    (c_out as u64) * (c_in as u64) * (k as u64) * (k as u64) * (oh as u64) * (ow as u64)
}

fn halve(h: usize, w: usize, op: &str) -> Result<(usize, usize)> {
    if h % 2 != 0 || w % 2 != 0 || h == 0 || w == 0 {
        return Err(Error::shape(format!("{op} needs even spatial dims, got {h}x{w}")));
    }
    Ok((h / 2, w / 2))
}

fn param_count(p: &Parameter<impl Scalar>, seen: &mut HashSet<ShareId>) -> u64 {
    if seen.insert(p.share_id()) {
        p.value_count() as u64
    } else {
        0
    }
}

/// Multiply-add counts per entry of a unit's matrix, given the per-scale
/// input dims. Entry (i, j) convolves at the source scale for
/// conv-then-upsample paths and at the target scale otherwise.
pub fn unit_entry_flops<T: Scalar>(
    unit: &MsConvUnit<T>,
    in_dims: &[(usize, usize)],
) -> Result<Vec<Vec<u64>>> {
    let s = unit.scales();
    if in_dims.len() != s {
        return Err(Error::shape("unit_entry_flops needs one (h, w) per scale"));
    }
    let mut m = vec![vec![0u64; s]; s];
    for i in 0..s {
        for j in 0..s {
            let e = unit.entry(i, j);
            let (k, site) = match e.kind {
                EntryKind::Zero | EntryKind::Identity => continue,
                EntryKind::Conv { k, .. } => (k, j),
                EntryKind::ConvThenUp { k } => (k, j),
                EntryKind::UpThenConv { k } => (k, i),
                EntryKind::DownThenConv { k, .. } => (k, i),
            };
            let (h, w) = in_dims[site.min(in_dims.len() - 1)];
            let p = e.param.as_ref().expect("validated entry");
            m[i][j] = conv_flops(p.c_out(), p.c_in(), k, h, w);
        }
    }
    Ok(m)
}

/// Multiply-adds on the diagonal (feature propagation) paths of a unit.
pub fn unit_diagonal_flops<T: Scalar>(
    unit: &MsConvUnit<T>,
    in_dims: &[(usize, usize)],
) -> Result<u64> {
    let m = unit_entry_flops(unit, in_dims)?;
    Ok((0..unit.scales()).map(|i| m[i][i]).sum())
}

fn pipeline_flops<T: Scalar>(
    f: &PipelineFn<T>,
    c: usize,
    h0: usize,
    w0: usize,
) -> Result<(u64, usize, usize)> {
    let mut total = 0u64;
    let mut out_dims = (h0, w0);
    for branch in f.atoms() {
        let (mut h, mut w) = (h0, w0);
        for atom in branch {
            match atom {
                PilotAtom::Conv { p, .. } => {
                    total += conv_flops(p.c_out(), p.c_in(), p.kernel(), h, w);
                }
                PilotAtom::Down2 | PilotAtom::Pool2 => (h, w) = halve(h, w, "pipeline pool")?,
                PilotAtom::Up2 => (h, w) = (h * 2, w * 2),
                PilotAtom::PoolS1 => {}
            }
        }
        out_dims = (h, w);
    }
    let _ = c;
    Ok((total, out_dims.0, out_dims.1))
}

/// Walk the network at the given low-resolution input size, producing
/// per-layer rows and totals.
pub fn analyze<T: Scalar>(net: &Network<T>, lr_size: (usize, usize)) -> Result<ComplexityReport> {
    let (ih, iw) = lr_size;
    if ih == 0 || iw == 0 {
        return Err(Error::invalid("input size must be positive"));
    }
    let mut seen = HashSet::new();
    let mut rows: Vec<LayerRow> = Vec::new();
    let mut shapes: Vec<Option<VShape>> = vec![None; net.nodes().len()];

    for (idx, node) in net.nodes().iter().enumerate() {
        let shape = match &node.op {
            LayerOp::Input => VShape::Single { c: 3, h: ih, w: iw },
            LayerOp::First(f) => {
                let VShape::Single { c, h, w } = shapes[node.inputs[0]].clone().unwrap() else {
                    return Err(Error::shape("split head needs a single-scale input"));
                };
                let mut dims = Vec::new();
                let (mut ch, mut cw) = (h, w);
                for i in 0..f.scales() {
                    if i > 0 {
                        (ch, cw) = halve(ch, cw, "split head pooling")?;
                    }
                    let p = f.conv(i);
                    rows.push(LayerRow {
                        name: node.name.clone(),
                        scale: Some(i),
                        flops: conv_flops(p.c_out(), c, p.kernel(), ch, cw),
                        params: param_count(p, &mut seen),
                    });
                    dims.push((p.c_out(), ch, cw));
                }
                VShape::Multi(dims)
            }
            LayerOp::Unit(u) => {
                let dims: Vec<(usize, usize, usize)> = match shapes[node.inputs[0]].clone().unwrap() {
                    VShape::Multi(d) => d,
                    VShape::Single { c, h, w } => vec![(c, h, w)],
                };
                let hw: Vec<(usize, usize)> = dims.iter().map(|&(_, h, w)| (h, w)).collect();
                let entry_flops = unit_entry_flops(u, &hw)?;
                let s = u.scales();
                let mut out_dims = Vec::with_capacity(s);
                for i in 0..s {
                    let mut params = 0u64;
                    for j in 0..s {
                        if let Some(p) = &u.entry(i, j).param {
                            params += param_count(p, &mut seen);
                        }
                    }
                    rows.push(LayerRow {
                        name: node.name.clone(),
                        scale: if s > 1 { Some(i) } else { None },
                        flops: entry_flops[i].iter().sum(),
                        params,
                    });
                    out_dims.push((u.out_channels()[i], dims[i].1, dims[i].2));
                }
                if matches!(shapes[node.inputs[0]].as_ref().unwrap(), VShape::Single { .. }) {
                    VShape::Single { c: out_dims[0].0, h: out_dims[0].1, w: out_dims[0].2 }
                } else {
                    VShape::Multi(out_dims)
                }
            }
            LayerOp::Last(l) => {
                let dims: Vec<(usize, usize, usize)> = match shapes[node.inputs[0]].clone().unwrap() {
                    VShape::Multi(d) => d,
                    VShape::Single { c, h, w } => vec![(c, h, w)],
                };
                let (full_h, full_w) = (dims[0].1, dims[0].2);
                let mut out_c = 0;
                for i in 0..l.scales() {
                    let p = l.conv(i);
                    rows.push(LayerRow {
                        name: node.name.clone(),
                        scale: Some(i),
                        flops: conv_flops(p.c_out(), p.c_in(), p.kernel(), full_h, full_w),
                        params: param_count(p, &mut seen),
                    });
                    out_c = p.c_out();
                }
                VShape::Single { c: out_c, h: full_h, w: full_w }
            }
            LayerOp::Conv { p, stride, dilation, padding } => {
                let VShape::Single { c, h, w } = shapes[node.inputs[0]].clone().unwrap() else {
                    return Err(Error::shape("conv needs a single-scale input"));
                };
                if c != p.c_in() {
                    return Err(Error::shape(format!(
                        "layer {} expects {} channels, input has {c}",
                        node.name,
                        p.c_in()
                    )));
                }
                let oh = conv_out_extent(h, p.kernel(), *stride, *dilation, *padding)
                    .ok_or_else(|| Error::shape(format!("layer {} output collapses", node.name)))?;
                let ow = conv_out_extent(w, p.kernel(), *stride, *dilation, *padding)
                    .ok_or_else(|| Error::shape(format!("layer {} output collapses", node.name)))?;
                rows.push(LayerRow {
                    name: node.name.clone(),
                    scale: None,
                    flops: conv_flops(p.c_out(), p.c_in(), p.kernel(), oh, ow),
                    params: param_count(p, &mut seen),
                });
                VShape::Single { c: p.c_out(), h: oh, w: ow }
            }
            LayerOp::Relu => shapes[node.inputs[0]].clone().unwrap(),
            LayerOp::Add => {
                let a = shapes[node.inputs[0]].clone().unwrap();
                a
            }
            LayerOp::Concat => {
                let parts: Vec<VShape> =
                    node.inputs.iter().map(|&i| shapes[i].clone().unwrap()).collect();
                match &parts[0] {
                    VShape::Single { h, w, .. } => {
                        let mut c = 0;
                        for p in &parts {
                            let VShape::Single { c: pc, .. } = p else {
                                return Err(Error::shape("mixed concat"));
                            };
                            c += pc;
                        }
                        VShape::Single { c, h: *h, w: *w }
                    }
                    VShape::Multi(first) => {
                        let mut dims = first.clone();
                        for p in &parts[1..] {
                            let VShape::Multi(d) = p else {
                                return Err(Error::shape("mixed concat"));
                            };
                            for (acc, extra) in dims.iter_mut().zip(d) {
                                acc.0 += extra.0;
                            }
                        }
                        VShape::Multi(dims)
                    }
                }
            }
            LayerOp::PixelShuffle(r) => {
                let VShape::Single { c, h, w } = shapes[node.inputs[0]].clone().unwrap() else {
                    return Err(Error::shape("pixel shuffle needs a single-scale input"));
                };
                if c % (r * r) != 0 {
                    return Err(Error::shape(format!(
                        "layer {}: {c} channels not divisible by {}",
                        node.name,
                        r * r
                    )));
                }
                VShape::Single { c: c / (r * r), h: h * r, w: w * r }
            }
            LayerOp::Pipeline(f) => {
                let VShape::Single { c, h, w } = shapes[node.inputs[0]].clone().unwrap() else {
                    return Err(Error::shape("pipelines need a single-scale input"));
                };
                let (flops, oh, ow) = pipeline_flops(f, c, h, w)?;
                let params =
                    f.parameters().iter().map(|p| param_count(p, &mut seen)).sum::<u64>();
                rows.push(LayerRow { name: node.name.clone(), scale: None, flops, params });
                VShape::Single { c, h: oh, w: ow }
            }
        };
        shapes[idx] = Some(shape);
    }

    let total_flops = rows.iter().map(|r| r.flops).sum();
    let total_params = rows.iter().map(|r| r.params).sum();
    Ok(ComplexityReport { rows, total_flops, total_params, input_size: lr_size })
}

/// Total parameter count (distinct blocks, biases included); independent
/// of input size.
pub fn count_params<T: Scalar>(net: &Network<T>) -> u64 {
    net.parameters().iter().map(|p| p.value_count() as u64).sum()
}

/// Total multiply-adds per sample at the given low-resolution input size.
pub fn count_flops<T: Scalar>(net: &Network<T>, lr_size: (usize, usize)) -> Result<u64> {
    Ok(analyze(net, lr_size)?.total_flops)
}

/// Find the input size whose multiply-add count best matches `target`.
/// Counts are affine in the pixel count for these fully-convolutional
/// networks, so solve for the pixel count and report the most square
/// (h, w) pair compatible with the network's pooling structure.
pub fn calibrate_input_size<T: Scalar>(net: &Network<T>, target_flops: u64) -> Result<(usize, usize)> {
    if target_flops == 0 {
        return Err(Error::Unreachable("target of zero multiply-adds".into()));
    }
    let m = net.cfg.input_multiple().max(2);
    let probe = (8 * m, 8 * m);
    let probe_flops = count_flops(net, probe)? as f64;
    let per_pixel = probe_flops / (probe.0 * probe.1) as f64;
    let target_pixels = target_flops as f64 / per_pixel;
    if target_pixels < (m * m) as f64 / 2.0 {
        return Err(Error::Unreachable(format!(
            "target {target_flops} lies below the smallest valid input ({m}x{m})"
        )));
    }

    let h_max = ((target_pixels.sqrt() * 2.0) as usize).max(m);
    let mut best: Option<((usize, usize), u64, usize)> = None;
    let mut h = m;
    while h <= h_max {
        let ideal_w = (target_pixels / h as f64 / m as f64).round() as usize * m;
        for w in [ideal_w.saturating_sub(m), ideal_w, ideal_w + m] {
            if w < m {
                continue;
            }
            let flops = count_flops(net, (h, w))?;
            let err = flops.abs_diff(target_flops);
            let skew = h.abs_diff(w);
            let better = match &best {
                None => true,
                Some((_, be, bs)) => (err, skew, h) < (*be, *bs, best.unwrap().0 .0),
            };
            if better {
                best = Some(((h, w), err, skew));
            }
        }
        h += m;
    }
    best.map(|(hw, _, _)| hw)
        .ok_or_else(|| Error::Unreachable("no feasible input size found".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_srresnet, Backbone, ModelConfig};
    use crate::unit::{build_variant, VariantName};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn cfg(variant: VariantName, branches: usize, blocks: usize, width: usize) -> ModelConfig {
        ModelConfig {
            backbone: Backbone::Srresnet,
            variant,
            num_blocks: blocks,
            width,
            branches,
            upscale: 4,
        }
    }

    #[test]
    fn single_conv_closed_forms() {
        // 3x3 conv 64 -> 64 with bias: 36,928 parameters; on a 10x10
        // output: 3,686,400 multiply-adds.
        assert_eq!(conv_flops(64, 64, 3, 10, 10), 3_686_400);
        let mut r = rng(1);
        let p = crate::tensor::Parameter::<f64>::conv_init(64, 64, 3, &mut r);
        assert_eq!(p.value_count(), 36_928);
    }

    #[test]
    fn ms3_unit_param_count_closed_form() {
        let mut r = rng(2);
        let u = build_variant::<f64>(VariantName::Ms3, 2, &[32, 32], &mut r).unwrap();
        let total: usize = crate::tensor::dedup_parameters(&u.parameters())
            .iter()
            .map(|p| p.value_count())
            .sum();
        // shared 3x3 (9,248) + two pointwise blocks (1,056 each)
        assert_eq!(total, 11_360);
    }

    #[test]
    fn totals_equal_row_sums_and_shared_params_count_once() {
        let mut r = rng(3);
        let net = build_srresnet::<f64>(&cfg(VariantName::Ms3, 2, 3, 16), &mut r).unwrap();
        let rep = analyze(&net, (16, 16)).unwrap();
        assert_eq!(rep.total_flops, rep.rows.iter().map(|x| x.flops).sum::<u64>());
        assert_eq!(rep.total_params, rep.rows.iter().map(|x| x.params).sum::<u64>());
        assert_eq!(rep.total_params, count_params(&net));
        // Distinct-parameter counting equals a manual dedup.
        let manual: u64 = net.parameters().iter().map(|p| p.value_count() as u64).sum();
        assert_eq!(rep.total_params, manual);
    }

    #[test]
    fn params_are_input_size_independent() {
        let mut r = rng(4);
        let net = build_srresnet::<f64>(&cfg(VariantName::Ms2, 2, 2, 16), &mut r).unwrap();
        let a = analyze(&net, (16, 16)).unwrap();
        let b = analyze(&net, (32, 48)).unwrap();
        assert_eq!(a.total_params, b.total_params);
        assert!(b.total_flops > a.total_flops);
    }

    #[test]
    fn flops_ratios_are_size_invariant() {
        let mut r = rng(5);
        let base = build_srresnet::<f64>(&cfg(VariantName::Standard, 1, 4, 32), &mut r).unwrap();
        let ms = build_srresnet::<f64>(&cfg(VariantName::Ms, 2, 4, 32), &mut r).unwrap();
        let mut prev: Option<f64> = None;
        for size in [(16, 16), (32, 32), (24, 40), (64, 64)] {
            let ratio = count_flops(&ms, size).unwrap() as f64
                / count_flops(&base, size).unwrap() as f64;
            if let Some(p) = prev {
                assert!((ratio - p).abs() < 1e-9, "ratio drifted: {ratio} vs {p}");
            }
            prev = Some(ratio);
        }
    }

    #[test]
    fn doubling_pixels_doubles_flops() {
        let mut r = rng(6);
        let net = build_srresnet::<f64>(&cfg(VariantName::Ms3, 2, 2, 16), &mut r).unwrap();
        let one = count_flops(&net, (16, 16)).unwrap();
        let two = count_flops(&net, (16, 32)).unwrap();
        assert_eq!(two, 2 * one);
    }

    #[test]
    fn sharing_saves_memory_not_compute() {
        let mut r = rng(7);
        let dims = [(16, 16), (8, 8)];
        let ms2 = build_variant::<f64>(VariantName::Ms2, 2, &[32, 32], &mut r).unwrap();
        let ms3 = build_variant::<f64>(VariantName::Ms3, 2, &[32, 32], &mut r).unwrap();
        let p2: usize =
            crate::tensor::dedup_parameters(&ms2.parameters()).iter().map(|p| p.value_count()).sum();
        let p3: usize =
            crate::tensor::dedup_parameters(&ms3.parameters()).iter().map(|p| p.value_count()).sum();
        assert!(p3 < p2);
        assert_eq!(
            unit_diagonal_flops(&ms2, &dims).unwrap(),
            unit_diagonal_flops(&ms3, &dims).unwrap()
        );
    }

    #[test]
    fn calibration_round_trips_and_prefers_square() {
        let mut r = rng(8);
        let net = build_srresnet::<f64>(&cfg(VariantName::Standard, 1, 2, 16), &mut r).unwrap();
        let target = count_flops(&net, (48, 48)).unwrap();
        assert_eq!(calibrate_input_size(&net, target).unwrap(), (48, 48));

        let ms = build_srresnet::<f64>(&cfg(VariantName::Ms, 2, 2, 16), &mut r).unwrap();
        let t2 = count_flops(&ms, (8, 12)).unwrap();
        assert_eq!(calibrate_input_size(&ms, t2).unwrap(), (8, 12));

        assert!(calibrate_input_size(&net, 1).is_err());
    }

    #[test]
    fn report_renders_both_forms() {
        let mut r = rng(9);
        let net = build_srresnet::<f64>(&cfg(VariantName::Ms3, 2, 1, 16), &mut r).unwrap();
        let rep = analyze(&net, (16, 16)).unwrap();
        let table = rep.render_table();
        assert!(table.contains("layer"));
        assert!(table.contains("total"));
        let records = rep.render_records();
        assert!(records.lines().all(|l| l.contains("name=") && l.contains("flops=")));
    }
}

//! Named invariant checks grouped into runnable suites.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::gradcheck::{fd_param_grad, max_rel_err, FD_STEP, GRAD_TOL};
use super::oracle;
use crate::complexity;
use crate::network::{build_srresnet, Backbone, ModelConfig, Network};
use crate::pilot::check_rearrangement_identity;
use crate::tensor::{backward, dedup_parameters, Parameter, Shape, Tape, Tensor};
use crate::unit::{
    build_variant, split_channels, unfold_standard, MsConvUnit, ScaleFeatures, TransformEntry,
    TransformSpec, VariantName,
};

/// Suite a check belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    /// Kernel-vs-oracle equalities, serialization, complexity counting.
    Core,
    /// Exact algebraic identities and sharing invariants.
    Equiv,
    /// Analytic-vs-finite-difference gradient soundness.
    Grad,
}

impl Suite {
    pub fn as_str(&self) -> &'static str {
        match self {
            Suite::Core => "core",
            Suite::Equiv => "equiv",
            Suite::Grad => "grad",
        }
    }
}

pub struct Check {
    pub name: &'static str,
    pub suite: Suite,
    pub run: fn() -> std::result::Result<(), String>,
}

pub struct CheckOutcome {
    pub name: &'static str,
    pub suite: Suite,
    pub error: Option<String>,
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rand_t(shape: Shape, r: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::random_uniform(shape, -1.0, 1.0, r)
}

fn pyramid(channels: &[usize], h: usize, w: usize, r: &mut ChaCha8Rng) -> ScaleFeatures<f64> {
    let groups = channels
        .iter()
        .enumerate()
        .map(|(i, &c)| rand_t(Shape::new(1, c, h >> i, w >> i), r))
        .collect();
    ScaleFeatures::new(groups).expect("pyramid")
}

fn ensure(cond: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

// ---------------------------------------------------------------- core

fn check_conv_oracle() -> std::result::Result<(), String> {
    let mut r = rng(101);
    for k in [1usize, 3, 5] {
        for s in [1usize, 2] {
            for d in [1usize, 2] {
                for p in [0usize, 1, 2] {
                    let x = rand_t(Shape::new(2, 2, 10, 9), &mut r);
                    let w = Parameter::<f64>::conv_init(3, 2, k, &mut r);
                    let y = x
                        .conv2d(&w, s, d, p)
                        .map_err(|e| format!("k={k} s={s} d={d} p={p}: {e}"))?;
                    let (want, _) =
                        oracle::conv2d_reference(&x, &w.weight(), &w.bias(), w.wshape(), s, d, p);
                    let dev = oracle::max_abs_diff(&y, &want);
                    ensure(dev < 1e-12, format!("conv deviates {dev} at k={k} s={s} d={d} p={p}"))?;
                }
            }
        }
    }
    Ok(())
}

fn check_resampling_oracles() -> std::result::Result<(), String> {
    let mut r = rng(102);
    let x = rand_t(Shape::new(2, 3, 6, 8), &mut r);
    ensure(
        oracle::max_abs_diff(&x.avg_pool2().unwrap(), &oracle::avg_pool2_reference(&x)) == 0.0,
        "avg_pool2 deviates from the sliding-window oracle",
    )?;
    let (want, _) = oracle::max_pool2_reference(&x);
    ensure(
        oracle::max_abs_diff(&x.max_pool2().unwrap(), &want) == 0.0,
        "max_pool2 deviates from the per-block oracle",
    )?;
    ensure(
        oracle::max_abs_diff(&x.nearest_upsample2().unwrap(), &oracle::upsample2_reference(&x))
            == 0.0,
        "nearest_upsample2 deviates from the replication oracle",
    )?;
    ensure(
        oracle::max_abs_diff(&x.nearest_subsample2().unwrap(), &oracle::subsample2_reference(&x))
            == 0.0,
        "nearest_subsample2 deviates from the stride-2 indexing oracle",
    )?;
    let t = rand_t(Shape::new(1, 8, 3, 3), &mut r);
    ensure(
        oracle::max_abs_diff(&t.pixel_shuffle(2).unwrap(), &oracle::pixel_shuffle_reference(&t, 2))
            == 0.0,
        "pixel_shuffle deviates from the index-remap oracle",
    )?;
    Ok(())
}

fn check_tensor_dump_round_trip() -> std::result::Result<(), String> {
    let mut r = rng(103);
    let t = rand_t(Shape::new(2, 3, 4, 5), &mut r);
    let mut buf = Vec::new();
    crate::tensor::write_tensor(&mut buf, &t).map_err(|e| e.to_string())?;
    let back: Tensor<f64> =
        crate::tensor::read_tensor(&mut buf.as_slice()).map_err(|e| e.to_string())?;
    ensure(back.shape() == t.shape(), "dump round trip changed the shape")?;
    ensure(
        back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits()),
        "dump round trip is not bit-exact",
    )
}

fn check_flops_ratio_invariance() -> std::result::Result<(), String> {
    let mut r = rng(104);
    let mk = |variant, branches| ModelConfig {
        backbone: Backbone::Srresnet,
        variant,
        num_blocks: 4,
        width: 32,
        branches,
        upscale: 4,
    };
    let base: Network<f64> =
        build_srresnet(&mk(VariantName::Standard, 1), &mut r).map_err(|e| e.to_string())?;
    for variant in [VariantName::Ms, VariantName::Ms2, VariantName::Ms3] {
        let net: Network<f64> =
            build_srresnet(&mk(variant, 2), &mut r).map_err(|e| e.to_string())?;
        let mut prev: Option<f64> = None;
        for size in [(16, 16), (32, 32), (24, 40)] {
            let ratio = complexity::count_flops(&net, size).map_err(|e| e.to_string())? as f64
                / complexity::count_flops(&base, size).map_err(|e| e.to_string())? as f64;
            if let Some(p) = prev {
                ensure(
                    (ratio - p).abs() < 1e-9,
                    format!("{variant}: flops ratio varies with input size ({ratio} vs {p})"),
                )?;
            }
            prev = Some(ratio);
        }
    }
    Ok(())
}

fn check_sharing_economics() -> std::result::Result<(), String> {
    let mut r = rng(105);
    let dims = [(16usize, 16usize), (8, 8)];
    let ms2: MsConvUnit<f64> =
        build_variant(VariantName::Ms2, 2, &[32, 32], &mut r).map_err(|e| e.to_string())?;
    let ms3: MsConvUnit<f64> =
        build_variant(VariantName::Ms3, 2, &[32, 32], &mut r).map_err(|e| e.to_string())?;
    let count = |u: &MsConvUnit<f64>| -> usize {
        dedup_parameters(&u.parameters()).iter().map(|p| p.value_count()).sum()
    };
    ensure(count(&ms3) < count(&ms2), "share-weights unit must hold strictly fewer parameters")?;
    let d2 = complexity::unit_diagonal_flops(&ms2, &dims).map_err(|e| e.to_string())?;
    let d3 = complexity::unit_diagonal_flops(&ms3, &dims).map_err(|e| e.to_string())?;
    ensure(d2 == d3, "sharing must not change diagonal-path multiply-adds")
}

fn check_flops_against_counting_oracle() -> std::result::Result<(), String> {
    let mut r = rng(106);
    let x = rand_t(Shape::new(1, 3, 6, 6), &mut r);
    let w = Parameter::<f64>::conv_init(4, 3, 3, &mut r);
    let (_, muls) = oracle::conv2d_reference(&x, &w.weight(), &w.bias(), w.wshape(), 1, 1, 1);
    ensure(muls == 4 * 3 * 9 * 36, format!("instrumented oracle counted {muls} multiplies"))
}

// --------------------------------------------------------------- equiv

fn check_unfold_identity() -> std::result::Result<(), String> {
    let mut r = rng(201);
    let mut cases = 0;
    for c in [4usize, 6, 8] {
        for k in [1usize, 3] {
            for _ in 0..4 {
                let w = Parameter::<f64>::conv_init(c, c, k, &mut r);
                let x = rand_t(Shape::new(2, c, 6, 6), &mut r);
                // random partition of c
                let mut split = Vec::new();
                let mut left = c;
                while left > 0 {
                    let take = r.gen_range(1..=left);
                    split.push(take);
                    left -= take;
                }
                let direct = x.conv2d(&w, 1, 1, (k - 1) / 2).map_err(|e| e.to_string())?;
                let unit = unfold_standard(&w, &split).map_err(|e| e.to_string())?;
                let groups = crate::unit::split_same_scale(&x, &split).map_err(|e| e.to_string())?;
                let y = unit.forward(&groups).map_err(|e| e.to_string())?;
                let refs: Vec<&Tensor<f64>> = y.groups().iter().collect();
                let merged = crate::tensor::concat_channels(&refs).map_err(|e| e.to_string())?;
                let dev = oracle::max_abs_diff(&merged, &direct);
                ensure(dev < 1e-12, format!("unfold deviates {dev} for split {split:?}"))?;
                cases += 1;
            }
        }
    }
    ensure(cases >= 20, "expected at least 20 unfold cases")
}

fn check_matrix_summation() -> std::result::Result<(), String> {
    let mut r = rng(202);
    for (name, s) in [
        (VariantName::Ms2, 2usize),
        (VariantName::Multigrid, 3),
        (VariantName::Ms3, 2),
        (VariantName::Ms3Large, 2),
    ] {
        let channels = split_channels(12, s);
        let unit: MsConvUnit<f64> =
            build_variant(name, s, &channels, &mut r).map_err(|e| e.to_string())?;
        let x = pyramid(&channels, 16, 16, &mut r);
        let y = unit.forward(&x).map_err(|e| e.to_string())?;
        for i in 0..s {
            let mut acc: Option<Tensor<f64>> = None;
            for j in 0..s {
                if let Some(c) = unit.apply_entry(i, j, x.group(j)).map_err(|e| e.to_string())? {
                    acc = Some(match acc {
                        None => c,
                        Some(a) => a.add(&c).map_err(|e| e.to_string())?,
                    });
                }
            }
            let dev = oracle::max_abs_diff(y.group(i), &acc.expect("row has entries"));
            ensure(dev < 1e-12, format!("{name}: row {i} deviates {dev} from entry summation"))?;
        }
    }
    Ok(())
}

fn check_rearrangement_grid() -> std::result::Result<(), String> {
    let mut r = rng(203);
    for (h, w) in [(8usize, 8usize), (16, 16), (8, 12)] {
        for k in [1usize, 3, 5] {
            let x = rand_t(Shape::new(1, 2, h, w), &mut r);
            let p = Parameter::<f64>::conv_init(3, 2, k, &mut r);
            let dev = check_rearrangement_identity(&p, &x).map_err(|e| e.to_string())?;
            ensure(dev <= 1e-12, format!("rearrangement deviates {dev} at {h}x{w} k={k}"))?;
        }
    }
    Ok(())
}

fn check_subsample_inverts_upsample() -> std::result::Result<(), String> {
    let mut r = rng(204);
    let x = rand_t(Shape::new(2, 3, 5, 7), &mut r);
    let round = x
        .nearest_upsample2()
        .and_then(|u| u.nearest_subsample2())
        .map_err(|e| e.to_string())?;
    ensure(oracle::max_abs_diff(&round, &x) == 0.0, "down2 after up2 must be the identity")
}

fn check_sharing_invariants() -> std::result::Result<(), String> {
    let mut r = rng(205);
    let unit: MsConvUnit<f64> =
        build_variant(VariantName::Ms3, 2, &[8, 8], &mut r).map_err(|e| e.to_string())?;
    let d0 = unit.entry(0, 0).param.clone().expect("diag");
    let d1 = unit.entry(1, 1).param.clone().expect("diag");
    ensure(d0.share_id() == d1.share_id(), "diagonals of a share-weights unit must alias")?;
    let distinct = dedup_parameters(&[d0.clone(), d1.clone()]).len();
    ensure(distinct == 1, "share-weights unit must hold exactly one diagonal parameter")?;

    // An update through the optimizer path keeps the diagonal bitwise
    // identical across both use sites.
    d0.update(|_, v, _| v * 1.5 + 0.01);
    let a = d0.weight();
    let b = d1.weight();
    ensure(
        a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()),
        "diagonal values diverged across aliases after an update",
    )?;

    // Ablated path: with zero biases the low branch sees nothing from
    // the high branch when the high-to-low entry is removed.
    let ab: MsConvUnit<f64> =
        build_variant(VariantName::Ms2NoHl, 2, &[4, 4], &mut r).map_err(|e| e.to_string())?;
    let x_h = rand_t(Shape::new(1, 4, 8, 8), &mut r);
    let x_l = Tensor::zeros(Shape::new(1, 4, 4, 4));
    let y = ab
        .forward(&ScaleFeatures::new(vec![x_h, x_l]).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    ensure(
        y.group(1).data().iter().all(|&v| v == 0.0),
        "zeroed high-to-low path must isolate the low branch",
    )
}

// ---------------------------------------------------------------- grad

/// Probe-weighted scalar loss over all output groups.
fn unit_loss(unit: &MsConvUnit<f64>, x: &ScaleFeatures<f64>, probes: &[Tensor<f64>]) -> f64 {
    let y = unit.forward(x).expect("unit forward");
    let mut acc = 0.0;
    for (g, p) in y.groups().iter().zip(probes) {
        acc += g.mul(p).unwrap().sum().unwrap().item().unwrap();
    }
    acc
}

/// Max relative error of every parameter gradient of `unit` against
/// central finite differences.
pub fn gradcheck_unit(unit: &MsConvUnit<f64>, channels: &[usize], seed: u64) -> std::result::Result<f64, String> {
    let mut r = rng(seed);
    let x = pyramid(channels, 8, 8, &mut r);
    let probes: Vec<Tensor<f64>> = (0..unit.scales())
        .map(|i| rand_t(Shape::new(1, unit.out_channels()[i], 8 >> i, 8 >> i), &mut r))
        .collect();

    // Analytic gradients via one recorded forward.
    let params = dedup_parameters(&unit.parameters());
    for p in &params {
        p.zero_grad();
    }
    let tape = Tape::new();
    let watched = ScaleFeatures::new(
        x.groups().iter().map(|g| tape.watch(g)).collect(),
    )
    .map_err(|e| e.to_string())?;
    let y = unit.forward(&watched).map_err(|e| e.to_string())?;
    let mut loss: Option<Tensor<f64>> = None;
    for (g, p) in y.groups().iter().zip(&probes) {
        let term = g.mul(p).and_then(|m| m.sum()).map_err(|e| e.to_string())?;
        loss = Some(match loss {
            None => term,
            Some(acc) => acc.add(&term).map_err(|e| e.to_string())?,
        });
    }
    backward(&loss.expect("loss")).map_err(|e| e.to_string())?;

    let mut worst = 0.0f64;
    for p in &params {
        let mut eval = || unit_loss(unit, &x, &probes);
        let (wg, bg) = fd_param_grad(&mut eval, p, FD_STEP);
        worst = worst.max(max_rel_err(&p.wgrad(), &wg));
        worst = worst.max(max_rel_err(&p.bgrad(), &bg));
    }
    Ok(worst)
}

fn check_op_gradients() -> std::result::Result<(), String> {
    use super::gradcheck::fd_tensor_grad;
    let mut r = rng(301);
    let x = rand_t(Shape::new(1, 2, 4, 4), &mut r).add(&Tensor::filled(Shape::new(1, 2, 4, 4), 0.29)).unwrap();
    type OpFn = fn(&Tensor<f64>) -> Tensor<f64>;
    let ops: Vec<(&str, OpFn, Shape)> = vec![
        ("relu", |t| t.relu().unwrap(), Shape::new(1, 2, 4, 4)),
        ("scale", |t| t.scale(-1.3).unwrap(), Shape::new(1, 2, 4, 4)),
        ("avg_pool2", |t| t.avg_pool2().unwrap(), Shape::new(1, 2, 2, 2)),
        ("max_pool2", |t| t.max_pool2().unwrap(), Shape::new(1, 2, 2, 2)),
        ("nearest_subsample2", |t| t.nearest_subsample2().unwrap(), Shape::new(1, 2, 2, 2)),
        ("nearest_upsample2", |t| t.nearest_upsample2().unwrap(), Shape::new(1, 2, 8, 8)),
        ("avg_filter2", |t| t.avg_filter2().unwrap(), Shape::new(1, 2, 4, 4)),
    ];
    for (name, f, out_shape) in ops {
        let probe = rand_t(out_shape, &mut r);
        let tape = Tape::new();
        let xt = tape.watch(&x);
        let loss = f(&xt).mul(&probe).unwrap().sum().unwrap();
        backward(&loss).map_err(|e| e.to_string())?;
        let analytic = tape.grad(&xt).unwrap().expect("gradient reached the leaf");
        let mut eval = |t: &Tensor<f64>| f(t).mul(&probe).unwrap().sum().unwrap().item().unwrap();
        let numeric = fd_tensor_grad(&mut eval, &x, FD_STEP);
        let err = max_rel_err(analytic.data(), &numeric);
        ensure(err < GRAD_TOL, format!("{name}: input gradient error {err}"))?;
    }

    // pixel_shuffle needs a channel count divisible by r^2.
    let x8 = rand_t(Shape::new(1, 8, 4, 4), &mut r);
    let probe = rand_t(Shape::new(1, 2, 8, 8), &mut r);
    let tape = Tape::new();
    let xt = tape.watch(&x8);
    let loss = xt.pixel_shuffle(2).unwrap().mul(&probe).unwrap().sum().unwrap();
    backward(&loss).map_err(|e| e.to_string())?;
    let analytic = tape.grad(&xt).unwrap().expect("gradient");
    let mut eval =
        |t: &Tensor<f64>| t.pixel_shuffle(2).unwrap().mul(&probe).unwrap().sum().unwrap().item().unwrap();
    let numeric = fd_tensor_grad(&mut eval, &x8, FD_STEP);
    ensure(
        max_rel_err(analytic.data(), &numeric) < GRAD_TOL,
        "pixel_shuffle: input gradient error above tolerance",
    )?;

    // conv2d: input, weight and bias gradients, plain and dilated.
    for (s, d, p) in [(1usize, 1usize, 1usize), (1, 2, 2), (2, 1, 1)] {
        let w = Parameter::<f64>::conv_init(3, 2, 3, &mut r);
        let y_shape = crate::tensor::Tensor::zeros(x.shape()).conv2d(&w, s, d, p).unwrap().shape();
        let probe = rand_t(y_shape, &mut r);
        w.zero_grad();
        let tape = Tape::new();
        let xt = tape.watch(&x);
        let loss = xt.conv2d(&w, s, d, p).unwrap().mul(&probe).unwrap().sum().unwrap();
        backward(&loss).map_err(|e| e.to_string())?;
        let analytic = tape.grad(&xt).unwrap().expect("gradient");
        let mut eval = |t: &Tensor<f64>| {
            t.conv2d(&w, s, d, p).unwrap().mul(&probe).unwrap().sum().unwrap().item().unwrap()
        };
        let numeric = fd_tensor_grad(&mut eval, &x, FD_STEP);
        ensure(
            max_rel_err(analytic.data(), &numeric) < GRAD_TOL,
            format!("conv2d(s={s},d={d},p={p}): input gradient error"),
        )?;
        let mut eval_p =
            || x.conv2d(&w, s, d, p).unwrap().mul(&probe).unwrap().sum().unwrap().item().unwrap();
        let (wg, bg) = fd_param_grad(&mut eval_p, &w, FD_STEP);
        ensure(
            max_rel_err(&w.wgrad(), &wg) < GRAD_TOL && max_rel_err(&w.bgrad(), &bg) < GRAD_TOL,
            format!("conv2d(s={s},d={d},p={p}): parameter gradient error"),
        )?;
    }
    Ok(())
}

fn check_variant_unit_gradients() -> std::result::Result<(), String> {
    let mut r = rng(302);
    let cases: Vec<(VariantName, usize)> = vec![
        (VariantName::Standard, 1),
        (VariantName::Unet, 2),
        (VariantName::Octave, 2),
        (VariantName::Ms, 2),
        (VariantName::Ms2, 2),
        (VariantName::Ms2NoLh, 2),
        (VariantName::Ms2NoHl, 2),
        (VariantName::Ms3, 2),
        (VariantName::Ms3Large, 2),
        (VariantName::Multigrid, 3),
    ];
    for (name, s) in cases {
        let channels = split_channels(4 * s, s);
        let unit: MsConvUnit<f64> =
            build_variant(name, s, &channels, &mut r).map_err(|e| e.to_string())?;
        let err = gradcheck_unit(&unit, &channels, 1000 + s as u64)?;
        ensure(err < GRAD_TOL, format!("{name}: unit gradient error {err}"))?;
    }
    Ok(())
}

/// Shared diagonal gradient equals the sum of per-site finite-difference
/// gradients, probed on an unshared twin holding identical values.
fn check_shared_gradient_sums_sites() -> std::result::Result<(), String> {
    let mut r = rng(303);
    let channels = [4usize, 4];
    let shared: MsConvUnit<f64> =
        build_variant(VariantName::Ms3, 2, &channels, &mut r).map_err(|e| e.to_string())?;

    // Unshared twin: independent diagonal parameters with the same values.
    let diag = shared.entry(0, 0).param.clone().expect("diag");
    let copy_param = |p: &Parameter<f64>| {
        Parameter::from_values(p.c_out(), p.c_in(), p.kernel(), p.weight(), p.bias()).unwrap()
    };
    let twin_diag0 = copy_param(&diag);
    let twin_diag1 = copy_param(&diag);
    let mut entries: Vec<Vec<TransformEntry<f64>>> = Vec::new();
    for i in 0..2 {
        let mut row = Vec::new();
        for j in 0..2 {
            let e = shared.entry(i, j);
            if i == j {
                row.push(TransformEntry {
                    kind: e.kind,
                    param: Some(if i == 0 { twin_diag0.clone() } else { twin_diag1.clone() }),
                });
            } else {
                row.push(TransformEntry {
                    kind: e.kind,
                    param: e.param.as_ref().map(copy_param),
                });
            }
        }
        entries.push(row);
    }
    let twin = MsConvUnit::new(
        TransformSpec { entries, in_channels: channels.to_vec(), out_channels: channels.to_vec() },
        false,
    )
    .map_err(|e| e.to_string())?;

    let x = pyramid(&channels, 8, 8, &mut r);
    let probes: Vec<Tensor<f64>> =
        (0..2).map(|i| rand_t(Shape::new(1, channels[i], 8 >> i, 8 >> i), &mut r)).collect();

    // Analytic gradient of the shared parameter.
    diag.zero_grad();
    let tape = Tape::new();
    let watched =
        ScaleFeatures::new(x.groups().iter().map(|g| tape.watch(g)).collect()).unwrap();
    let y = shared.forward(&watched).map_err(|e| e.to_string())?;
    let mut loss: Option<Tensor<f64>> = None;
    for (g, p) in y.groups().iter().zip(&probes) {
        let term = g.mul(p).and_then(|m| m.sum()).map_err(|e| e.to_string())?;
        loss = Some(match loss {
            None => term,
            Some(acc) => acc.add(&term).map_err(|e| e.to_string())?,
        });
    }
    backward(&loss.unwrap()).map_err(|e| e.to_string())?;
    let analytic = diag.wgrad();

    // Per-site finite differences on the twin, summed.
    let mut eval = || unit_loss(&twin, &x, &probes);
    let (g0, _) = fd_param_grad(&mut eval, &twin_diag0, FD_STEP);
    let (g1, _) = fd_param_grad(&mut eval, &twin_diag1, FD_STEP);
    let summed: Vec<f64> = g0.iter().zip(&g1).map(|(a, b)| a + b).collect();
    let err = max_rel_err(&analytic, &summed);
    ensure(
        err < GRAD_TOL,
        format!("shared gradient differs from the per-site sum (error {err})"),
    )
}

use rand::Rng;

/// All registered checks.
pub fn all_checks() -> Vec<Check> {
    vec![
        Check { name: "conv2d matches the direct-convolution oracle", suite: Suite::Core, run: check_conv_oracle },
        Check { name: "resampling ops match their index oracles", suite: Suite::Core, run: check_resampling_oracles },
        Check { name: "tensor dump round-trips bit-exactly", suite: Suite::Core, run: check_tensor_dump_round_trip },
        Check { name: "flops ratios are input-size invariant", suite: Suite::Core, run: check_flops_ratio_invariance },
        Check { name: "weight sharing saves parameters, not multiply-adds", suite: Suite::Core, run: check_sharing_economics },
        Check { name: "flops formula matches the instrumented oracle", suite: Suite::Core, run: check_flops_against_counting_oracle },
        Check { name: "unfolding reproduces the standard convolution", suite: Suite::Equiv, run: check_unfold_identity },
        Check { name: "matrix forward equals per-entry summation", suite: Suite::Equiv, run: check_matrix_summation },
        Check { name: "rearrangement identity holds exactly", suite: Suite::Equiv, run: check_rearrangement_grid },
        Check { name: "down2 inverts up2", suite: Suite::Equiv, run: check_subsample_inverts_upsample },
        Check { name: "sharing and ablation invariants", suite: Suite::Equiv, run: check_sharing_invariants },
        Check { name: "op gradients match finite differences", suite: Suite::Grad, run: check_op_gradients },
        Check { name: "variant unit gradients match finite differences", suite: Suite::Grad, run: check_variant_unit_gradients },
        Check { name: "shared gradients sum over use sites", suite: Suite::Grad, run: check_shared_gradient_sums_sites },
    ]
}

/// Run one suite (or all of them), returning per-check outcomes.
pub fn run_suite(which: Option<Suite>) -> Vec<CheckOutcome> {
    all_checks()
        .into_iter()
        .filter(|c| which.map_or(true, |s| c.suite == s))
        .map(|c| CheckOutcome { name: c.name, suite: c.suite, error: (c.run)().err() })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_registered_check_passes() {
        for outcome in run_suite(None) {
            assert!(
                outcome.error.is_none(),
                "[{}] {}: {}",
                outcome.suite.as_str(),
                outcome.name,
                outcome.error.unwrap()
            );
        }
    }
}

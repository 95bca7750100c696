//! Pipelines of convolution and resampling atoms, the five pilot case
//! constructions, and the exact rearrangement identity that links a
//! convolution on subsampled features to a dilated convolution on the
//! full-resolution features.

use std::fmt;

use rand::Rng;

use crate::scalar::Scalar;
use crate::tensor::{dedup_parameters, Parameter, Tensor};
use crate::{Error, Result};

/// One stage of a pipeline. Convolutions pad to keep the spatial size
/// (zero padding of dilation*(k-1)/2); resampling atoms are parameter
/// free.
#[derive(Debug, Clone)]
pub enum PilotAtom<T: Scalar> {
    Conv { p: Parameter<T>, dilation: usize },
    /// Nearest-neighbor downsampler (top-left phase).
    Down2,
    /// Nearest-neighbor upsampler.
    Up2,
    /// 2x2 average pooling, stride 2.
    Pool2,
    /// 2x2 mean window at stride 1 (zero padded), size preserving.
    PoolS1,
}

impl<T: Scalar> PilotAtom<T> {
    fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            PilotAtom::Conv { p, dilation } => {
                x.conv2d(p, 1, *dilation, dilation * (p.kernel() - 1) / 2)
            }
            PilotAtom::Down2 => x.nearest_subsample2(),
            PilotAtom::Up2 => x.nearest_upsample2(),
            PilotAtom::Pool2 => x.avg_pool2(),
            PilotAtom::PoolS1 => x.avg_filter2(),
        }
    }

    fn describe(&self) -> String {
        match self {
            PilotAtom::Conv { p, dilation } => {
                format!("conv{}x{}(d={dilation})", p.kernel(), p.kernel())
            }
            PilotAtom::Down2 => "down2".into(),
            PilotAtom::Up2 => "up2".into(),
            PilotAtom::Pool2 => "pool(s=2)".into(),
            PilotAtom::PoolS1 => "pool(s=1)".into(),
        }
    }
}

/// An ordered composition of atoms, generalized to parallel branches
/// whose outputs are summed (a single branch is a plain chain).
#[derive(Debug, Clone)]
pub struct PipelineFn<T: Scalar> {
    branches: Vec<Vec<PilotAtom<T>>>,
}

impl<T: Scalar> PipelineFn<T> {
    pub fn chain(atoms: Vec<PilotAtom<T>>) -> Self {
        PipelineFn { branches: vec![atoms] }
    }

    pub fn branches(branches: Vec<Vec<PilotAtom<T>>>) -> Self {
        PipelineFn { branches }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut acc: Option<Tensor<T>> = None;
        for branch in &self.branches {
            let mut cur = x.clone();
            for atom in branch {
                cur = atom.apply(&cur)?;
            }
            acc = Some(match acc {
                None => cur,
                Some(a) => a.add(&cur)?,
            });
        }
        acc.ok_or_else(|| Error::invalid("pipeline with no branches"))
    }

    /// Parameter handles in order of use (shared ones repeat).
    pub fn parameters(&self) -> Vec<Parameter<T>> {
        self.branches
            .iter()
            .flatten()
            .filter_map(|a| match a {
                PilotAtom::Conv { p, .. } => Some(p.clone()),
                _ => None,
            })
            .collect()
    }

    pub fn distinct_parameter_count(&self) -> usize {
        dedup_parameters(&self.parameters()).len()
    }

    pub fn atoms(&self) -> &[Vec<PilotAtom<T>>] {
        &self.branches
    }
}

impl<T: Scalar> fmt::Display for PipelineFn<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let chains: Vec<String> = self
            .branches
            .iter()
            .map(|b| b.iter().map(|a| a.describe()).collect::<Vec<_>>().join(" > "))
            .collect();
        if chains.len() == 1 {
            f.write_str(&chains[0])
        } else {
            write!(f, "sum[{}]", chains.join(" | "))
        }
    }
}

/// The five pilot constructions over a width-preserving 3x3 convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PilotCase {
    A,
    B,
    C,
    D,
    E,
}

impl PilotCase {
    pub const ALL: [PilotCase; 5] =
        [PilotCase::A, PilotCase::B, PilotCase::C, PilotCase::D, PilotCase::E];

    pub fn id(&self) -> char {
        match self {
            PilotCase::A => 'a',
            PilotCase::B => 'b',
            PilotCase::C => 'c',
            PilotCase::D => 'd',
            PilotCase::E => 'e',
        }
    }
}

impl std::str::FromStr for PilotCase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a" => Ok(PilotCase::A),
            "b" => Ok(PilotCase::B),
            "c" => Ok(PilotCase::C),
            "d" => Ok(PilotCase::D),
            "e" => Ok(PilotCase::E),
            other => Err(Error::invalid(format!("unknown pilot case `{other}`"))),
        }
    }
}

/// Build one pilot case over `width` channels:
/// (a) a plain convolution; (b) a dilation-2 convolution; (c) two
/// branches at dilations 1 and 2 sharing one parameter, summed; (d) the
/// dilation-2 convolution followed by the lossy down/up pair; (e) as (d)
/// with a stride-1 mean pre-filter.
pub fn build_pilot_case<T: Scalar>(
    case: PilotCase,
    width: usize,
    rng: &mut impl Rng,
) -> PipelineFn<T> {
    let p = Parameter::conv_init(width, width, 3, rng);
    match case {
        PilotCase::A => PipelineFn::chain(vec![PilotAtom::Conv { p, dilation: 1 }]),
        PilotCase::B => PipelineFn::chain(vec![PilotAtom::Conv { p, dilation: 2 }]),
        PilotCase::C => PipelineFn::branches(vec![
            vec![PilotAtom::Conv { p: p.clone(), dilation: 1 }],
            vec![PilotAtom::Conv { p, dilation: 2 }],
        ]),
        PilotCase::D => PipelineFn::chain(vec![
            PilotAtom::Conv { p, dilation: 2 },
            PilotAtom::Down2,
            PilotAtom::Up2,
        ]),
        PilotCase::E => PipelineFn::chain(vec![
            PilotAtom::PoolS1,
            PilotAtom::Conv { p, dilation: 2 },
            PilotAtom::Down2,
            PilotAtom::Up2,
        ]),
    }
}

/// Maximum absolute deviation between `conv_{d=1}(down2(x))` and
/// `down2(conv_{d=2}(x))` for the same weight `w`. With zero padding of
/// (k-1)/2 at dilation 1 and (k-1) at dilation 2 and the top-left
/// subsampling phase, the two sides sample identical input positions and
/// the identity holds exactly.
pub fn check_rearrangement_identity<T: Scalar>(w: &Parameter<T>, x: &Tensor<T>) -> Result<f64> {
    let s = x.shape();
    if s.h % 2 != 0 || s.w % 2 != 0 {
        return Err(Error::shape(format!("identity check needs even spatial dims, got {s}")));
    }
    let k = w.kernel();
    let lhs = x.nearest_subsample2()?.conv2d(w, 1, 1, (k - 1) / 2)?;
    let rhs = x.conv2d(w, 1, 2, k - 1)?.nearest_subsample2()?;
    Ok(crate::verify::oracle::max_abs_diff(&lhs, &rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;
    use crate::verify::oracle::max_abs_diff;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn case_a_is_a_plain_convolution() {
        let mut r = rng(1);
        let f: PipelineFn<f64> = build_pilot_case(PilotCase::A, 3, &mut r);
        let x = Tensor::random_uniform(Shape::new(1, 3, 6, 6), -1.0, 1.0, &mut r);
        let y = f.forward(&x).unwrap();
        let p = f.parameters()[0].clone();
        let direct = x.conv2d(&p, 1, 1, 1).unwrap();
        assert_eq!(max_abs_diff(&y, &direct), 0.0);
    }

    #[test]
    fn case_c_shares_one_parameter_across_branches() {
        let mut r = rng(2);
        let f: PipelineFn<f64> = build_pilot_case(PilotCase::C, 4, &mut r);
        let params = f.parameters();
        assert_eq!(params.len(), 2);
        assert_eq!(params[0].share_id(), params[1].share_id());
        assert_eq!(f.distinct_parameter_count(), 1);
    }

    #[test]
    fn cases_a_and_d_have_equal_parameter_counts() {
        let mut r = rng(3);
        let a: PipelineFn<f64> = build_pilot_case(PilotCase::A, 4, &mut r);
        let d: PipelineFn<f64> = build_pilot_case(PilotCase::D, 4, &mut r);
        let count = |f: &PipelineFn<f64>| -> usize {
            dedup_parameters(&f.parameters()).iter().map(|p| p.value_count()).sum()
        };
        assert_eq!(count(&a), count(&d));
    }

    #[test]
    fn rearrangement_identity_exact_over_shape_grid() {
        let mut r = rng(4);
        for (h, w) in [(8, 8), (16, 16), (8, 12)] {
            for k in [1usize, 3, 5] {
                let x = Tensor::<f64>::random_uniform(Shape::new(1, 2, h, w), -1.0, 1.0, &mut r);
                let p = Parameter::<f64>::conv_init(3, 2, k, &mut r);
                let dev = check_rearrangement_identity(&p, &x).unwrap();
                assert!(dev <= 1e-12, "deviation {dev} at {h}x{w}, k={k}");
            }
        }
    }

    #[test]
    fn rearrangement_identity_zero_for_mean_zero_kernel_on_constant_input() {
        // A mean-zero kernel annihilates constant inputs away from the
        // border; the zero padding is sampled identically on both sides.
        let x = Tensor::<f64>::filled(Shape::new(1, 1, 8, 8), 0.7);
        let mut weight = vec![1.0; 9];
        weight[4] = -8.0;
        let p = Parameter::from_values(1, 1, 3, weight, vec![0.0]).unwrap();
        assert_eq!(check_rearrangement_identity(&p, &x).unwrap(), 0.0);
        let interior = x.conv2d(&p, 1, 1, 1).unwrap();
        assert!(interior.at(0, 0, 4, 4).abs() < 1e-14);
    }

    #[test]
    fn full_pipeline_equality_with_upsampler_appended() {
        let mut r = rng(5);
        let x = Tensor::<f64>::random_uniform(Shape::new(1, 2, 10, 14), -1.0, 1.0, &mut r);
        let p = Parameter::<f64>::conv_init(2, 2, 3, &mut r);
        let lhs = x
            .nearest_subsample2()
            .unwrap()
            .conv2d(&p, 1, 1, 1)
            .unwrap()
            .nearest_upsample2()
            .unwrap();
        let rhs = x
            .conv2d(&p, 1, 2, 2)
            .unwrap()
            .nearest_subsample2()
            .unwrap()
            .nearest_upsample2()
            .unwrap();
        assert!(max_abs_diff(&lhs, &rhs) <= 1e-12);
    }

    #[test]
    fn down_up_projection_is_idempotent() {
        let mut r = rng(6);
        let x = Tensor::<f64>::random_uniform(Shape::new(1, 1, 8, 8), -1.0, 1.0, &mut r);
        let once = x.nearest_subsample2().unwrap().nearest_upsample2().unwrap();
        let twice = once.nearest_subsample2().unwrap().nearest_upsample2().unwrap();
        assert_eq!(max_abs_diff(&once, &twice), 0.0);
        // down2 after up2 recovers the input exactly.
        let round = x.nearest_upsample2().unwrap().nearest_subsample2().unwrap();
        assert_eq!(max_abs_diff(&round, &x), 0.0);
    }

    #[test]
    fn stride1_pool_then_down_equals_stride2_pool() {
        // The top-left anchoring makes pool(s=1) followed by down2 equal
        // pool(s=2) exactly on even inputs; this keeps case (e) the
        // rearranged form of the popular pool-conv-up structure.
        let mut r = rng(7);
        let x = Tensor::<f64>::random_uniform(Shape::new(1, 2, 8, 10), -1.0, 1.0, &mut r);
        let lhs = x.avg_filter2().unwrap().nearest_subsample2().unwrap();
        let rhs = x.avg_pool2().unwrap();
        assert_eq!(max_abs_diff(&lhs, &rhs), 0.0);
    }

    #[test]
    fn case_e_is_case_d_with_the_pre_filter() {
        // On an impulse input the two cases differ exactly by the
        // stride-1 mean pre-filter pushed through the shared tail.
        let mut r = rng(8);
        let mut data = vec![0.0; 64];
        data[3 * 8 + 4] = 1.0;
        let x = Tensor::<f64>::from_vec(Shape::new(1, 1, 8, 8), data).unwrap();
        let p = Parameter::<f64>::conv_init(1, 1, 3, &mut r);
        let tail = |t: &Tensor<f64>| {
            t.conv2d(&p, 1, 2, 2)
                .unwrap()
                .nearest_subsample2()
                .unwrap()
                .nearest_upsample2()
                .unwrap()
        };
        let d = tail(&x);
        let e = tail(&x.avg_filter2().unwrap());
        assert!(max_abs_diff(&d, &e) > 0.0);
        let smoothed = x.avg_filter2().unwrap();
        assert_eq!(max_abs_diff(&e, &tail(&smoothed)), 0.0);
    }

    #[test]
    fn pipeline_display_names_the_atoms() {
        let mut r = rng(9);
        let e: PipelineFn<f64> = build_pilot_case(PilotCase::E, 2, &mut r);
        assert_eq!(e.to_string(), "pool(s=1) > conv3x3(d=2) > down2 > up2");
        let c: PipelineFn<f64> = build_pilot_case(PilotCase::C, 2, &mut r);
        assert_eq!(c.to_string(), "sum[conv3x3(d=1) | conv3x3(d=2)]");
    }
}

/// Desk-scale pilot training setup: a shallow single-scale backbone
/// whose body convolutions are replaced by one case function, trained
/// briefly on the synthetic toy family.
#[derive(Debug, Clone)]
pub struct PilotConfig {
    pub width: usize,
    pub blocks: usize,
    pub upscale: usize,
    pub hr_patch: usize,
    pub iters: u64,
    pub batch: usize,
    pub seed: u64,
    pub toy_images: usize,
    pub toy_size: usize,
}

impl Default for PilotConfig {
    fn default() -> Self {
        PilotConfig {
            width: 16,
            blocks: 4,
            upscale: 4,
            hr_patch: 48,
            iters: 2000,
            batch: 4,
            seed: 0,
            toy_images: 8,
            toy_size: 96,
        }
    }
}

/// Outcome of one pilot case.
#[derive(Debug, Clone)]
pub struct PilotCaseResult {
    pub case: PilotCase,
    pub function: String,
    pub distinct_params: usize,
    pub param_values: usize,
    pub psnr: f64,
    pub bicubic_psnr: f64,
    pub smoothed_first_loss: f64,
    pub smoothed_final_loss: f64,
}

/// Train each of the five case constructions at desk scale and report
/// per-case metrics. Cases run sequentially from identical seeds so the
/// comparison is deterministic.
pub fn run_pilot_suite(cfg: &PilotConfig) -> Result<Vec<PilotCaseResult>> {
    use crate::network::{build_srresnet_pilot, Backbone, LayerOp, ModelConfig};
    use crate::pipeline::{toy_dataset, train_loop, TrainConfig};
    use rand::SeedableRng;

    let model = ModelConfig {
        backbone: Backbone::Srresnet,
        variant: crate::unit::VariantName::Standard,
        num_blocks: cfg.blocks,
        width: cfg.width,
        branches: 1,
        upscale: cfg.upscale,
    };
    let tcfg = TrainConfig {
        batch: cfg.batch,
        hr_patch: cfg.hr_patch,
        total_iters: cfg.iters,
        halve_every: (cfg.iters / 2).max(1),
        seed: cfg.seed,
        augment: true,
        ..TrainConfig::default()
    };
    let train_set = toy_dataset::<f64>(cfg.toy_images, cfg.toy_size, cfg.seed);
    let eval_set = toy_dataset::<f64>(cfg.toy_images / 2 + 1, cfg.toy_size, cfg.seed ^ 0x5bd1);

    let mut out = Vec::new();
    for case in PilotCase::ALL {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(7));
        let net = build_srresnet_pilot::<f64>(&model, case, &mut rng)?;
        let sample: PipelineFn<f64> = net
            .nodes()
            .iter()
            .find_map(|n| match &n.op {
                LayerOp::Pipeline(f) => Some(f.clone()),
                _ => None,
            })
            .expect("pilot body present");
        let body_params = net
            .nodes()
            .iter()
            .flat_map(|n| match &n.op {
                LayerOp::Pipeline(f) => f.parameters(),
                _ => Vec::new(),
            })
            .collect::<Vec<_>>();
        let distinct = crate::tensor::dedup_parameters(&body_params);
        let record = train_loop(&net, &train_set, &eval_set, &tcfg, None)?;
        let (first, last) = record.smoothed_endpoints(100);
        out.push(PilotCaseResult {
            case,
            function: sample.to_string(),
            distinct_params: distinct.len(),
            param_values: distinct.iter().map(|p| p.value_count()).sum(),
            psnr: record.final_psnr,
            bicubic_psnr: record.bicubic_psnr,
            smoothed_first_loss: first,
            smoothed_final_loss: last,
        });
    }
    Ok(out)
}

/// Plain-text table of pilot results.
pub fn render_pilot_report(results: &[PilotCaseResult]) -> String {
    let mut out = String::new();
    let fw = results.iter().map(|r| r.function.len()).max().unwrap_or(8).max(8);
    out.push_str(&format!(
        "{:<4}  {:<fw$}  {:>10}  {:>8}  {:>8}\n",
        "case", "function", "params", "psnr", "bicubic"
    ));
    for r in results {
        out.push_str(&format!(
            "{:<4}  {:<fw$}  {:>10}  {:>8.3}  {:>8.3}\n",
            r.case.id(),
            r.function,
            r.param_values,
            r.psnr,
            r.bicubic_psnr
        ));
    }
    out
}

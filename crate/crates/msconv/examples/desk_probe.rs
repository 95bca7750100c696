use msconv::network::{build_network, Backbone, ModelConfig, Network};
use msconv::pipeline::{toy_dataset, train_loop, TrainConfig};
use msconv::unit::VariantName;
use rand::SeedableRng;
use std::time::Instant;

fn main() {
    let variant: VariantName = std::env::args().nth(1).unwrap_or("ms3".into()).parse().unwrap();
    let iters: u64 = std::env::args().nth(2).unwrap_or("2000".into()).parse().unwrap();
    let branches = if variant == VariantName::Standard { 1 } else { 2 };
    let model = ModelConfig {
        backbone: Backbone::Srresnet,
        variant,
        num_blocks: 4,
        width: 16,
        branches,
        upscale: 4,
    };
    let tcfg = TrainConfig {
        batch: 4,
        hr_patch: 48,
        total_iters: iters,
        halve_every: (iters / 2).max(1),
        seed: 0,
        augment: true,
        ..TrainConfig::default()
    };
    let train = toy_dataset::<f64>(8, 96, 42);
    let eval = toy_dataset::<f64>(4, 96, 43);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let net: Network<f64> = build_network(&model, &mut rng).unwrap();
    let t0 = Instant::now();
    let rec = train_loop(&net, &train, &eval, &tcfg, None).unwrap();
    let (first, last) = rec.smoothed_endpoints(100);
    println!(
        "{variant}: {:.1}s  loss {first:.5} -> {last:.5}  psnr {:.3} vs bicubic {:.3}  (margin {:+.3} dB)",
        t0.elapsed().as_secs_f64(),
        rec.final_psnr,
        rec.bicubic_psnr,
        rec.final_psnr - rec.bicubic_psnr
    );
}

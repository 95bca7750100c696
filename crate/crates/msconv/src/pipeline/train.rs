//! Seeded training loop: sample aligned patch batches, minimize the L1
//! reconstruction error with Adam under the halving schedule, record the
//! loss curve, and periodically evaluate and checkpoint. The run is a
//! pure function of (network initialization, data seed, config).

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::bicubic::bicubic_resize;
use super::data::{sample_patch, stack_batch};
use super::optim::{lr_at, Adam, TrainConfig};
use super::psnr::psnr_y;
use crate::checkpoint::{
    bytes_to_tensor, checkpoint_from_network, network_from_checkpoint, tensor_to_bytes,
    tensor_to_u64, u64_to_tensor, Checkpoint,
};
use crate::network::Network;
use crate::scalar::Scalar;
use crate::tensor::{backward, Tape, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct IterRecord {
    pub iter: u64,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct EvalRecord {
    pub iter: u64,
    pub psnr: f64,
}

/// Everything a training run produced.
#[derive(Debug, Clone, Default)]
pub struct RunRecord {
    pub iters: Vec<IterRecord>,
    pub evals: Vec<EvalRecord>,
    pub bicubic_psnr: f64,
    pub final_psnr: f64,
}

impl RunRecord {
    /// Mean loss over the first and last `window` iterations.
    pub fn smoothed_endpoints(&self, window: usize) -> (f64, f64) {
        let w = window.min(self.iters.len()).max(1);
        let head: f64 = self.iters[..w].iter().map(|r| r.loss).sum::<f64>() / w as f64;
        let tail: f64 =
            self.iters[self.iters.len() - w..].iter().map(|r| r.loss).sum::<f64>() / w as f64;
        (head, tail)
    }

    /// Line-oriented structured text: one `iter= lr= loss=` record per
    /// iteration plus `eval iter= psnr=` lines.
    pub fn render_log(&self, seed: u64) -> String {
        let mut out = format!("# seed={seed}\n");
        for r in &self.iters {
            out.push_str(&format!("iter={} lr={:.8e} loss={:.10e}\n", r.iter, r.lr, r.loss));
        }
        for e in &self.evals {
            out.push_str(&format!("eval iter={} psnr={:.6}\n", e.iter, e.psnr));
        }
        out.push_str(&format!("bicubic_psnr={:.6}\n", self.bicubic_psnr));
        out.push_str(&format!("final_psnr={:.6}\n", self.final_psnr));
        out
    }
}

/// Mean Y-channel PSNR of the network over held-out images, degrading
/// each by 1/upscale first.
pub fn eval_psnr<T: Scalar>(net: &Network<T>, eval_hr: &[Tensor<T>], border: usize) -> Result<f64> {
    let upscale = net.cfg.upscale;
    let mut acc = 0.0;
    for hr in eval_hr {
        let lr = bicubic_resize(hr, 1.0 / upscale as f64)?;
        let sr = net.forward(&lr)?;
        acc += psnr_y(&sr, hr, border)?;
    }
    Ok(acc / eval_hr.len() as f64)
}

/// Mean Y-channel PSNR of plain bicubic up-scaling over the same images;
/// the baseline any trained model is expected to beat.
pub fn bicubic_baseline_psnr<T: Scalar>(
    eval_hr: &[Tensor<T>],
    upscale: usize,
    border: usize,
) -> Result<f64> {
    let mut acc = 0.0;
    for hr in eval_hr {
        let lr = bicubic_resize(hr, 1.0 / upscale as f64)?;
        let up = bicubic_resize(&lr, upscale as f64)?;
        acc += psnr_y(&up, hr, border)?;
    }
    Ok(acc / eval_hr.len() as f64)
}

fn state_into_checkpoint<T: Scalar>(
    ck: &mut Checkpoint<T>,
    iter: u64,
    adam: &Adam<T>,
    rng: &ChaCha8Rng,
) {
    ck.push("state.iter", u64_to_tensor(iter));
    ck.push("state.adam.t", u64_to_tensor(adam.step_count()));
    for (i, (m, v)) in adam.moments().iter().enumerate() {
        ck.push(
            format!("state.adam.m{i}"),
            Tensor::from_vec(crate::tensor::Shape::new(1, 1, 1, m.len()), m.clone())
                .expect("moment shape"),
        );
        ck.push(
            format!("state.adam.v{i}"),
            Tensor::from_vec(crate::tensor::Shape::new(1, 1, 1, v.len()), v.clone())
                .expect("moment shape"),
        );
    }
    ck.push("state.rng.seed", bytes_to_tensor(&rng.get_seed()));
    let pos = rng.get_word_pos();
    ck.push("state.rng.word_pos", bytes_to_tensor(&pos.to_le_bytes()));
}

fn state_from_checkpoint<T: Scalar>(
    ck: &Checkpoint<T>,
    adam: &mut Adam<T>,
) -> Result<(u64, ChaCha8Rng)> {
    let iter = tensor_to_u64(
        ck.get("state.iter").ok_or_else(|| Error::Format("checkpoint lacks state.iter".into()))?,
    )?;
    let t = tensor_to_u64(
        ck.get("state.adam.t")
            .ok_or_else(|| Error::Format("checkpoint lacks state.adam.t".into()))?,
    )?;
    let mut moments = Vec::new();
    for i in 0.. {
        let (m, v) = match (ck.get(&format!("state.adam.m{i}")), ck.get(&format!("state.adam.v{i}"))) {
            (Some(m), Some(v)) => (m, v),
            _ => break,
        };
        moments.push((m.data().to_vec(), v.data().to_vec()));
    }
    adam.restore(t, moments)?;
    let seed_bytes = tensor_to_bytes(
        ck.get("state.rng.seed")
            .ok_or_else(|| Error::Format("checkpoint lacks state.rng.seed".into()))?,
    );
    let pos_bytes = tensor_to_bytes(
        ck.get("state.rng.word_pos")
            .ok_or_else(|| Error::Format("checkpoint lacks state.rng.word_pos".into()))?,
    );
    let seed: [u8; 32] =
        seed_bytes.try_into().map_err(|_| Error::Format("rng seed must be 32 bytes".into()))?;
    let pos_arr: [u8; 16] =
        pos_bytes.try_into().map_err(|_| Error::Format("rng position must be 16 bytes".into()))?;
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_word_pos(u128::from_le_bytes(pos_arr));
    Ok((iter, rng))
}

fn run_training<T: Scalar>(
    net: &Network<T>,
    train_hr: &[Tensor<T>],
    eval_hr: &[Tensor<T>],
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
    start_iter: u64,
    mut adam: Adam<T>,
    mut rng: ChaCha8Rng,
) -> Result<RunRecord> {
    cfg.validate()?;
    if train_hr.is_empty() || eval_hr.is_empty() {
        return Err(Error::invalid("training needs non-empty train and eval sets"));
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let border = net.cfg.upscale;
    let mut record = RunRecord {
        bicubic_psnr: bicubic_baseline_psnr(eval_hr, net.cfg.upscale, border)?,
        ..RunRecord::default()
    };

    for iter in start_iter..cfg.total_iters {
        let lr = lr_at(iter, cfg);
        let mut lr_items = Vec::with_capacity(cfg.batch);
        let mut hr_items = Vec::with_capacity(cfg.batch);
        for _ in 0..cfg.batch {
            let idx = rng.gen_range(0..train_hr.len());
            let (lr_p, hr_p) =
                sample_patch(&train_hr[idx], cfg.hr_patch, net.cfg.upscale, cfg.augment, &mut rng)?;
            lr_items.push(lr_p);
            hr_items.push(hr_p);
        }
        let lr_batch = stack_batch(&lr_items)?;
        let hr_batch = stack_batch(&hr_items)?;

        let tape = Tape::new();
        let x = tape.watch(&lr_batch);
        let loss = (|| -> Result<Tensor<T>> {
            let sr = net.forward(&x)?;
            sr.l1_loss(&hr_batch)
        })()
        .map_err(|e| match e {
            Error::NonFinite { .. } => Error::Diverged { iter, loss: f64::NAN },
            other => other,
        })?;
        let loss_v = loss.item()?.as_f64();
        if !loss_v.is_finite() {
            return Err(Error::Diverged { iter, loss: loss_v });
        }
        backward(&loss)?;
        adam.step(lr);
        adam.zero_grads();
        record.iters.push(IterRecord { iter, lr, loss: loss_v });

        let done = iter + 1;
        if cfg.eval_every > 0 && done % cfg.eval_every == 0 && done < cfg.total_iters {
            record.evals.push(EvalRecord { iter: done, psnr: eval_psnr(net, eval_hr, border)? });
        }
        if let Some(dir) = out_dir {
            if cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 {
                let mut ck = checkpoint_from_network(net);
                state_into_checkpoint(&mut ck, done, &adam, &rng);
                ck.save(&dir.join(format!("ckpt_{done:07}.msck")))?;
            }
        }
    }

    record.final_psnr = eval_psnr(net, eval_hr, border)?;
    record.evals.push(EvalRecord { iter: cfg.total_iters, psnr: record.final_psnr });
    if let Some(dir) = out_dir {
        let mut ck = checkpoint_from_network(net);
        state_into_checkpoint(&mut ck, cfg.total_iters, &adam, &rng);
        ck.save(&dir.join("final.msck"))?;
        std::fs::write(dir.join("run.log"), record.render_log(cfg.seed))?;
    }
    Ok(record)
}

/// Train from the network's current (usually fresh) parameters.
pub fn train_loop<T: Scalar>(
    net: &Network<T>,
    train_hr: &[Tensor<T>],
    eval_hr: &[Tensor<T>],
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<RunRecord> {
    let adam = Adam::new(&net.parameters(), cfg);
    let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    run_training(net, train_hr, eval_hr, cfg, out_dir, 0, adam, rng)
}

/// Resume from a checkpoint that carries training state; continues to
/// `cfg.total_iters` and reproduces the uninterrupted run exactly.
pub fn resume_training<T: Scalar>(
    ck: &Checkpoint<T>,
    train_hr: &[Tensor<T>],
    eval_hr: &[Tensor<T>],
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<(Network<T>, RunRecord)> {
    let net = network_from_checkpoint(ck)?;
    let mut adam = Adam::new(&net.parameters(), cfg);
    let (iter, rng) = state_from_checkpoint(ck, &mut adam)?;
    let record = run_training(&net, train_hr, eval_hr, cfg, out_dir, iter, adam, rng)?;
    Ok((net, record))
}

use rand::Rng;

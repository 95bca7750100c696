//! Desk-scale super-resolution pipeline: bicubic degradation, dataset
//! preparation and augmentation, L1/Adam training with the halving
//! schedule, and Y-channel PSNR evaluation.

pub mod bicubic;
pub mod data;
pub mod image_io;
pub mod optim;
pub mod psnr;
pub mod train;

pub use bicubic::bicubic_resize;
pub use data::{sample_patch, toy_dataset, DataSource, DatasetSpec};
pub use optim::{lr_at, Adam, TrainConfig};
pub use psnr::psnr_y;
pub use train::{
    bicubic_baseline_psnr, eval_psnr, resume_training, train_loop, RunRecord,
};

//! Dataset preparation: directory loading, sub-image cropping, seeded
//! patch sampling with flip/rotation augmentation, and the synthetic toy
//! family used for desk-scale training runs.

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::bicubic::bicubic_resize;
use super::image_io::load_image;
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};
use crate::{Error, Result};

/// Where training images come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// Directory of P6/P5 images.
    Dir,
    /// Seeded synthetic toy images.
    Toy,
}

/// Dataset description: a high-resolution image source cut into
/// sub-images, plus the degradation factor.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub source: DataSource,
    pub dir: Option<PathBuf>,
    /// Sub-image side cut from each source image.
    pub sub_size: usize,
    /// Stride between sub-image origins.
    pub stride: usize,
    pub upscale: usize,
    /// Toy source: number of training images and their side length.
    pub toy_train_images: usize,
    pub toy_eval_images: usize,
    pub toy_size: usize,
    pub toy_seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            source: DataSource::Toy,
            dir: None,
            sub_size: 480,
            stride: 240,
            upscale: 4,
            toy_train_images: 8,
            toy_eval_images: 4,
            toy_size: 96,
            toy_seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sub_size == 0 || self.stride == 0 {
            return Err(Error::Config("sub_size and stride must be positive".into()));
        }
        if self.upscale == 0 {
            return Err(Error::Config("upscale must be positive".into()));
        }
        if self.sub_size % self.upscale != 0 {
            return Err(Error::Config(format!(
                "sub_size {} must be divisible by upscale {}",
                self.sub_size, self.upscale
            )));
        }
        if self.source == DataSource::Dir && self.dir.is_none() {
            return Err(Error::Config("dir source needs a directory path".into()));
        }
        Ok(())
    }

    /// Load (train, eval) image sets.
    pub fn load<T: Scalar>(&self) -> Result<(Vec<Tensor<T>>, Vec<Tensor<T>>)> {
        self.validate()?;
        match self.source {
            DataSource::Toy => {
                let train = toy_dataset(self.toy_train_images, self.toy_size, self.toy_seed);
                let eval = toy_dataset(self.toy_eval_images, self.toy_size, self.toy_seed ^ 0x9e37_79b9);
                Ok((train, eval))
            }
            DataSource::Dir => {
                let dir = self.dir.as_ref().expect("validated");
                let images = load_hr_dir(dir)?;
                let subs = crop_sub_images(&images, self.sub_size, self.stride);
                if subs.is_empty() {
                    return Err(Error::Config(format!(
                        "no {}x{} sub-images could be cut from {}",
                        self.sub_size,
                        self.sub_size,
                        dir.display()
                    )));
                }
                // Hold out every eighth sub-image for evaluation.
                let mut train = Vec::new();
                let mut eval = Vec::new();
                for (i, s) in subs.into_iter().enumerate() {
                    if i % 8 == 7 {
                        eval.push(s);
                    } else {
                        train.push(s);
                    }
                }
                if eval.is_empty() {
                    eval.push(train[0].clone());
                }
                Ok((train, eval))
            }
        }
    }
}

/// Read every P6/P5 image in a directory, sorted by file name.
pub fn load_hr_dir<T: Scalar>(dir: &Path) -> Result<Vec<Tensor<T>>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("ppm") | Some("pgm")
            )
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!("no .ppm/.pgm images in {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let img = load_image::<T>(p)?;
            // Grayscale sources are replicated to three channels.
            if img.shape().c == 1 {
                let refs = [&img, &img, &img];
                crate::tensor::concat_channels(&refs)
            } else {
                Ok(img)
            }
        })
        .collect()
}

/// Cut each image into sub_size x sub_size tiles at the given stride.
pub fn crop_sub_images<T: Scalar>(images: &[Tensor<T>], sub: usize, stride: usize) -> Vec<Tensor<T>> {
    let mut out = Vec::new();
    for img in images {
        let s = img.shape();
        if s.h < sub || s.w < sub {
            continue;
        }
        let mut y = 0;
        while y + sub <= s.h {
            let mut x = 0;
            while x + sub <= s.w {
                out.push(crop_at(img, y, x, sub, sub));
                x += stride;
            }
            y += stride;
        }
    }
    out
}

fn crop_at<T: Scalar>(img: &Tensor<T>, oy: usize, ox: usize, h: usize, w: usize) -> Tensor<T> {
    let s = img.shape();
    let mut data = vec![T::zero(); s.n * s.c * h * w];
    for n in 0..s.n {
        for c in 0..s.c {
            for y in 0..h {
                for x in 0..w {
                    data[((n * s.c + c) * h + y) * w + x] = img.at(n, c, oy + y, ox + x);
                }
            }
        }
    }
    Tensor::from_vec(Shape::new(s.n, s.c, h, w), data).expect("crop shape")
}

pub fn flip_h<T: Scalar>(img: &Tensor<T>) -> Tensor<T> {
    let s = img.shape();
    let mut data = vec![T::zero(); s.len()];
    for n in 0..s.n {
        for c in 0..s.c {
            for y in 0..s.h {
                for x in 0..s.w {
                    data[((n * s.c + c) * s.h + y) * s.w + x] = img.at(n, c, y, s.w - 1 - x);
                }
            }
        }
    }
    Tensor::from_vec(s, data).expect("flip shape")
}

pub fn flip_v<T: Scalar>(img: &Tensor<T>) -> Tensor<T> {
    let s = img.shape();
    let mut data = vec![T::zero(); s.len()];
    for n in 0..s.n {
        for c in 0..s.c {
            for y in 0..s.h {
                for x in 0..s.w {
                    data[((n * s.c + c) * s.h + y) * s.w + x] = img.at(n, c, s.h - 1 - y, x);
                }
            }
        }
    }
    Tensor::from_vec(s, data).expect("flip shape")
}

/// Quarter-turn counterclockwise; requires a square image.
pub fn rot90<T: Scalar>(img: &Tensor<T>) -> Tensor<T> {
    let s = img.shape();
    assert_eq!(s.h, s.w, "rot90 needs square patches");
    let mut data = vec![T::zero(); s.len()];
    for n in 0..s.n {
        for c in 0..s.c {
            for y in 0..s.h {
                for x in 0..s.w {
                    data[((n * s.c + c) * s.h + y) * s.w + x] = img.at(n, c, x, s.w - 1 - y);
                }
            }
        }
    }
    Tensor::from_vec(s, data).expect("rot shape")
}

/// Randomly crop an aligned HR/LR training pair: the HR patch is cut and
/// (optionally) flip/rotation augmented, then bicubic-degraded by
/// 1/upscale. Both sides of the pair see the identical transform.
pub fn sample_patch<T: Scalar>(
    hr: &Tensor<T>,
    hr_patch: usize,
    upscale: usize,
    augment: bool,
    rng: &mut impl Rng,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let s = hr.shape();
    if s.h < hr_patch || s.w < hr_patch {
        return Err(Error::shape(format!(
            "source {}x{} smaller than the {hr_patch} patch",
            s.h, s.w
        )));
    }
    if hr_patch % upscale != 0 {
        return Err(Error::invalid(format!(
            "patch {hr_patch} must be divisible by upscale {upscale}"
        )));
    }
    let oy = rng.gen_range(0..=s.h - hr_patch);
    let ox = rng.gen_range(0..=s.w - hr_patch);
    let mut patch = crop_at(hr, oy, ox, hr_patch, hr_patch);
    if augment {
        if rng.gen_bool(0.5) {
            patch = flip_h(&patch);
        }
        if rng.gen_bool(0.5) {
            patch = flip_v(&patch);
        }
        if rng.gen_bool(0.5) {
            patch = rot90(&patch);
        }
    }
    let lr = bicubic_resize(&patch, 1.0 / upscale as f64)?;
    Ok((lr, patch))
}

/// Stack single-sample tensors along the batch axis.
pub fn stack_batch<T: Scalar>(items: &[Tensor<T>]) -> Result<Tensor<T>> {
    let first = items.first().ok_or_else(|| Error::invalid("empty batch"))?;
    let s = first.shape();
    let out = Shape::new(items.len(), s.c, s.h, s.w);
    let mut data = Vec::with_capacity(out.len());
    for t in items {
        if t.shape() != s {
            return Err(Error::shape("batch members must share a shape"));
        }
        data.extend_from_slice(t.data());
    }
    Tensor::from_vec(out, data)
}

/// Synthetic toy family: a soft gradient background, a handful of
/// axis-aligned rectangles, and one stripe texture patch. Sharp edges and
/// near-Nyquist stripes are exactly what plain bicubic upscaling renders
/// poorly, so the family leaves headroom a small trained network can
/// exploit.
pub fn toy_dataset<T: Scalar>(count: usize, size: usize, seed: u64) -> Vec<Tensor<T>> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| toy_image(size, &mut rng)).collect()
}

fn toy_image<T: Scalar>(size: usize, rng: &mut impl Rng) -> Tensor<T> {
    let mut luma = vec![0.0f64; size * size];
    let base = rng.gen_range(0.25..0.65);
    let gx = rng.gen_range(-0.15..0.15) / size as f64;
    let gy = rng.gen_range(-0.15..0.15) / size as f64;
    for y in 0..size {
        for x in 0..size {
            luma[y * size + x] = base + gx * x as f64 + gy * y as f64;
        }
    }
    // Axis-aligned rectangles with sharp edges.
    let rects = rng.gen_range(4..8);
    for _ in 0..rects {
        let rw = rng.gen_range(size / 8..size / 2);
        let rh = rng.gen_range(size / 8..size / 2);
        let oy = rng.gen_range(0..size - rh);
        let ox = rng.gen_range(0..size - rw);
        let v = rng.gen_range(0.08..0.92);
        for y in oy..oy + rh {
            for x in ox..ox + rw {
                luma[y * size + x] = v;
            }
        }
    }
    // One stripe patch near the representable limit of the degraded grid.
    let period = 8.0;
    let sw = rng.gen_range(size / 3..(3 * size) / 4);
    let sh = rng.gen_range(size / 3..(3 * size) / 4);
    let oy = rng.gen_range(0..size - sh);
    let ox = rng.gen_range(0..size - sw);
    let vertical = rng.gen_bool(0.5);
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let amp = rng.gen_range(0.15..0.25);
    for y in oy..oy + sh {
        for x in ox..ox + sw {
            let t = if vertical { x as f64 } else { y as f64 };
            luma[y * size + x] +=
                amp * (std::f64::consts::TAU * t / period + phase).sin();
        }
    }
    // Mild fixed chroma tint keeps the image 3-channel without hiding
    // the luminance structure.
    let gains = [0.95, 1.0, 1.05];
    let mut data = vec![T::zero(); 3 * size * size];
    for (c, gain) in gains.iter().enumerate() {
        for i in 0..size * size {
            data[c * size * size + i] = T::from_f64((luma[i] * gain).clamp(0.0, 1.0));
        }
    }
    Tensor::from_vec(Shape::new(1, 3, size, size), data).expect("toy shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::oracle::max_abs_diff;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn patch_sampling_is_deterministic_under_a_seed() {
        let hr = toy_dataset::<f64>(1, 64, 3)[0].clone();
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        let (lr1, hr1) = sample_patch(&hr, 32, 4, false, &mut r1).unwrap();
        let (lr2, hr2) = sample_patch(&hr, 32, 4, false, &mut r2).unwrap();
        assert_eq!(lr1.data(), lr2.data());
        assert_eq!(hr1.data(), hr2.data());
        assert_eq!(lr1.shape(), Shape::new(1, 3, 8, 8));
    }

    #[test]
    fn augmentation_commutes_with_degradation() {
        // Flips and quarter turns are exact symmetries of the separable
        // kernel, so degrading the augmented patch equals augmenting the
        // degraded patch.
        let hr = toy_dataset::<f64>(1, 64, 5)[0].clone();
        let patch = crop_at(&hr, 8, 8, 32, 32);
        let lr = bicubic_resize(&patch, 0.25).unwrap();
        for (aug_hr, aug_lr) in [
            (flip_h(&patch), flip_h(&lr)),
            (flip_v(&patch), flip_v(&lr)),
            (rot90(&patch), rot90(&lr)),
        ] {
            let degraded = bicubic_resize(&aug_hr, 0.25).unwrap();
            assert!(max_abs_diff(&degraded, &aug_lr) < 1e-9);
        }
    }

    #[test]
    fn undersized_source_is_rejected() {
        let hr = toy_dataset::<f64>(1, 16, 1)[0].clone();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_patch(&hr, 32, 4, false, &mut rng).is_err());
        assert!(sample_patch(&hr, 10, 4, false, &mut rng).is_err());
    }

    #[test]
    fn sub_image_cropping_counts() {
        let img = Tensor::<f64>::zeros(Shape::new(1, 3, 100, 70));
        let subs = crop_sub_images(&[img], 40, 30);
        // y origins: 0, 30, 60 -> 3; x origins: 0, 30 -> 2
        assert_eq!(subs.len(), 6);
        assert!(subs.iter().all(|s| s.shape() == Shape::new(1, 3, 40, 40)));
    }

    #[test]
    fn toy_images_are_in_range_and_seeded() {
        let a = toy_dataset::<f64>(3, 32, 7);
        let b = toy_dataset::<f64>(3, 32, 7);
        let c = toy_dataset::<f64>(3, 32, 8);
        for img in &a {
            assert!(img.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
        assert_eq!(a[0].data(), b[0].data());
        assert_ne!(a[0].data(), c[0].data());
    }

    #[test]
    fn batch_stacking() {
        let a = Tensor::<f64>::filled(Shape::new(1, 3, 2, 2), 1.0);
        let b = Tensor::<f64>::filled(Shape::new(1, 3, 2, 2), 2.0);
        let batch = stack_batch(&[a, b]).unwrap();
        assert_eq!(batch.shape(), Shape::new(2, 3, 2, 2));
        assert_eq!(batch.at(0, 0, 0, 0), 1.0);
        assert_eq!(batch.at(1, 2, 1, 1), 2.0);
    }
}

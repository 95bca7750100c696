//! Configuration files: a TOML document with `[model]`, `[train]` and
//! `[data]` sections. Unknown keys are rejected with line/column
//! locations; every omitted key falls back to the documented default.
//!
//! ```toml
//! [model]
//! backbone = "srresnet"      # srresnet | carn
//! variant = "ms3"            # standard|unet|octave|multigrid|ms|ms2|
//!                            # ms2_no_lh|ms2_no_hl|ms3|ms3_large
//!                            # ("baseline" is accepted for standard)
//! num_blocks = 20            # CARN default: 4 blocks per group
//! width = 64
//! branches = 2               # 1 is forced for the baseline
//! upscale = 4
//!
//! [train]
//! batch = 16
//! hr_patch = 128
//! lr = 2e-4
//! beta1 = 0.9
//! beta2 = 0.999
//! eps = 1e-8
//! halve_every = 250000
//! total_iters = 1000000
//! seed = 0
//! augment = true
//!
//! [data]
//! source = "toy"             # toy | dir
//! # dir = "path/to/hr-images"
//! sub_size = 480
//! stride = 240
//! upscale = 4
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::network::ModelConfig;
use crate::pipeline::{DatasetSpec, TrainConfig};
use crate::unit::VariantName;
use crate::{Error, Result};

/// Parsed configuration document.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFile {
    pub model: ModelSection,
    pub train: TrainConfig,
    pub data: DatasetSpec,
}

/// The `[model]` section; like [`ModelConfig`] but with the `baseline`
/// spelling accepted and defaults resolved per backbone.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub backbone: crate::network::Backbone,
    pub variant: String,
    pub num_blocks: usize,
    pub width: usize,
    pub branches: usize,
    pub upscale: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            backbone: crate::network::Backbone::Srresnet,
            variant: "baseline".into(),
            num_blocks: 0,
            width: 64,
            branches: 0,
            upscale: 4,
        }
    }
}

impl ModelSection {
    pub fn resolve(&self) -> Result<ModelConfig> {
        let variant: VariantName = if self.variant == "baseline" {
            VariantName::Standard
        } else {
            self.variant.parse()?
        };
        ModelConfig {
            backbone: self.backbone,
            variant,
            num_blocks: self.num_blocks,
            width: self.width,
            branches: self.branches,
            upscale: self.upscale,
        }
        .normalize()
    }
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ConfigFile =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        // Cross-section consistency: the dataset degrades by the model's
        // upscale factor.
        if cfg.data.upscale != cfg.model.upscale {
            return Err(Error::Config(format!(
                "data.upscale ({}) must equal model.upscale ({})",
                cfg.data.upscale, cfg.model.upscale
            )));
        }
        cfg.train.validate()?;
        cfg.data.validate()?;
        cfg.model.resolve()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn model(&self) -> Result<ModelConfig> {
        self.model.resolve()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Backbone;

    #[test]
    fn defaults_match_the_published_protocol() {
        let cfg = ConfigFile::parse("").unwrap();
        assert_eq!(cfg.train.batch, 16);
        assert_eq!(cfg.train.hr_patch, 128);
        assert_eq!(cfg.train.lr, 2e-4);
        assert_eq!(cfg.train.beta1, 0.9);
        assert_eq!(cfg.train.beta2, 0.999);
        assert_eq!(cfg.train.eps, 1e-8);
        assert_eq!(cfg.train.halve_every, 250_000);
        assert_eq!(cfg.train.total_iters, 1_000_000);
        assert_eq!(cfg.data.sub_size, 480);
        assert_eq!(cfg.data.stride, 240);
        let model = cfg.model().unwrap();
        assert_eq!(model.width, 64);
        assert_eq!(model.upscale, 4);
        assert_eq!(model.branches, 1);
    }

    #[test]
    fn baseline_spelling_resolves_to_standard() {
        let cfg = ConfigFile::parse("[model]\nvariant = \"baseline\"\n").unwrap();
        let model = cfg.model().unwrap();
        assert_eq!(model.variant, VariantName::Standard);
        assert_eq!(model.branches, 1);
    }

    #[test]
    fn variant_defaults_to_two_branches() {
        let cfg = ConfigFile::parse("[model]\nvariant = \"ms3\"\n").unwrap();
        let model = cfg.model().unwrap();
        assert_eq!(model.variant, VariantName::Ms3);
        assert_eq!(model.branches, 2);
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let err = ConfigFile::parse("[model]\nwdith = 64\n").unwrap_err().to_string();
        assert!(err.contains("wdith"), "{err}");
        assert!(err.contains("line 2"), "should carry a location: {err}");
        let err2 = ConfigFile::parse("[extra]\nx = 1\n").unwrap_err().to_string();
        assert!(err2.contains("extra"), "{err2}");
    }

    #[test]
    fn carn_gets_its_own_depth_default() {
        let cfg = ConfigFile::parse("[model]\nbackbone = \"carn\"\n").unwrap();
        assert_eq!(cfg.model().unwrap().num_blocks, 4);
        let cfg2 = ConfigFile::parse("[model]\nbackbone = \"srresnet\"\n").unwrap();
        assert_eq!(cfg2.model().unwrap().num_blocks, 20);
    }

    #[test]
    fn cross_section_upscale_mismatch_is_rejected() {
        let err = ConfigFile::parse("[model]\nupscale = 2\n").unwrap_err().to_string();
        assert!(err.contains("upscale"), "{err}");
        assert!(ConfigFile::parse("[model]\nupscale = 2\n[data]\nupscale = 2\n").is_ok());
    }

    #[test]
    fn backbone_strings() {
        assert_eq!(Backbone::Srresnet.as_str(), "srresnet");
        assert_eq!(Backbone::Carn.as_str(), "carn");
    }
}

//! Depth-sweep rows for efficiency curves (multiply-adds and parameters
//! per variant and depth), rendered as a table and as tab-separated
//! plot data.

use rand::SeedableRng;

use crate::complexity::{count_flops, count_params};
use crate::network::{build_network, ModelConfig, Network};
use crate::unit::VariantName;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ParetoRow {
    pub variant: String,
    pub blocks: usize,
    pub flops: u64,
    pub params: u64,
    pub psnr: Option<f64>,
}

/// Sweep depths for each variant at a fixed input size. Rows come back
/// sorted by multiply-adds ascending within each variant.
pub fn sweep_depth(
    base: &ModelConfig,
    variants: &[VariantName],
    depths: &[usize],
    lr_size: (usize, usize),
) -> Result<Vec<ParetoRow>> {
    let mut rows = Vec::new();
    for &variant in variants {
        let mut group = Vec::new();
        for &blocks in depths {
            let cfg = ModelConfig {
                variant,
                num_blocks: blocks,
                branches: if variant == VariantName::Standard { 1 } else { base.branches.max(2) },
                ..*base
            };
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
            let net: Network<f32> = build_network(&cfg, &mut rng)?;
            group.push(ParetoRow {
                variant: variant.to_string(),
                blocks,
                flops: count_flops(&net, lr_size)?,
                params: count_params(&net),
                psnr: None,
            });
        }
        group.sort_by_key(|r| r.flops);
        rows.extend(group);
    }
    Ok(rows)
}

/// Tab-separated plot data; the psnr column stays empty when absent.
pub fn render_tsv(rows: &[ParetoRow]) -> String {
    let mut out = String::from("variant\tblocks\tflops\tparams\tpsnr\n");
    for r in rows {
        let psnr = r.psnr.map(|p| format!("{p:.6}")).unwrap_or_default();
        out.push_str(&format!("{}\t{}\t{}\t{}\t{}\n", r.variant, r.blocks, r.flops, r.params, psnr));
    }
    out
}

pub fn parse_tsv(text: &str) -> Result<Vec<ParetoRow>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Format("empty plot data".into()))?;
    if header != "variant\tblocks\tflops\tparams\tpsnr" {
        return Err(Error::Format(format!("unexpected plot-data header `{header}`")));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 5 {
            return Err(Error::Format(format!("row {}: expected 5 columns", i + 2)));
        }
        let parse = |s: &str, what: &str| -> Result<u64> {
            s.parse().map_err(|_| Error::Format(format!("row {}: bad {what} `{s}`", i + 2)))
        };
        rows.push(ParetoRow {
            variant: parts[0].to_string(),
            blocks: parse(parts[1], "blocks")? as usize,
            flops: parse(parts[2], "flops")?,
            params: parse(parts[3], "params")?,
            psnr: if parts[4].is_empty() {
                None
            } else {
                Some(
                    parts[4]
                        .parse()
                        .map_err(|_| Error::Format(format!("row {}: bad psnr", i + 2)))?,
                )
            },
        });
    }
    Ok(rows)
}

/// Aligned table for terminal output.
pub fn render_table(rows: &[ParetoRow]) -> String {
    let mut out = format!("{:<12} {:>7} {:>14} {:>12} {:>8}\n", "variant", "blocks", "flops", "params", "psnr");
    for r in rows {
        let psnr = r.psnr.map(|p| format!("{p:.3}")).unwrap_or_else(|| "-".into());
        out.push_str(&format!(
            "{:<12} {:>7} {:>14} {:>12} {:>8}\n",
            r.variant, r.blocks, r.flops, r.params, psnr
        ));
    }
    out
}

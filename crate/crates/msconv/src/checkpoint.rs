//! Checkpoint container: header (magic `MSCK`, version, a structured-text
//! model-config blob) followed by a named tensor table in the raw tensor
//! dump format. Round-trips are bit-exact.
//!
//! Training state rides in the same table under reserved `state.` names
//! (optimizer moments, data-stream position, iteration counter) so a run
//! can resume exactly.

use std::io::{Read, Write};
use std::path::Path;

use crate::network::{build_network, ModelConfig, Network};
use crate::scalar::Scalar;
use crate::tensor::{read_tensor, write_tensor, Shape, Tensor};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MSCK";
pub const VERSION: u32 = 1;

/// Reserved prefix for non-model entries.
pub const STATE_PREFIX: &str = "state.";

#[derive(Debug, Clone)]
pub struct Checkpoint<T: Scalar> {
    pub cfg: ModelConfig,
    pub tensors: Vec<(String, Tensor<T>)>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor<T>) {
        self.tensors.push((name.into(), t));
    }

    pub fn write_to(&self, out: &mut impl Write) -> Result<()> {
        let blob = toml::to_string(&self.cfg)
            .map_err(|e| Error::Format(format!("config blob: {e}")))?;
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(blob.len() as u32).to_le_bytes())?;
        out.write_all(blob.as_bytes())?;
        out.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, t) in &self.tensors {
            let bytes = name.as_bytes();
            if bytes.len() > u16::MAX as usize {
                return Err(Error::Format(format!("tensor name too long: {name}")));
            }
            out.write_all(&(bytes.len() as u16).to_le_bytes())?;
            out.write_all(bytes)?;
            write_tensor(out, t)?;
        }
        Ok(())
    }

    pub fn read_from(input: &mut impl Read) -> Result<Self> {
        let mut head = [0u8; 12];
        input
            .read_exact(&mut head)
            .map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
        if &head[0..4] != MAGIC {
            return Err(Error::Format("bad checkpoint magic (expected MSCK)".into()));
        }
        let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let blob_len = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
        let mut blob = vec![0u8; blob_len];
        input.read_exact(&mut blob).map_err(|e| Error::Format(format!("config blob: {e}")))?;
        let cfg: ModelConfig = toml::from_str(
            std::str::from_utf8(&blob).map_err(|e| Error::Format(format!("config blob: {e}")))?,
        )
        .map_err(|e| Error::Format(format!("config blob: {e}")))?;
        let mut count_buf = [0u8; 4];
        input
            .read_exact(&mut count_buf)
            .map_err(|e| Error::Format(format!("tensor count: {e}")))?;
        let count = u32::from_le_bytes(count_buf) as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let mut len_buf = [0u8; 2];
            input
                .read_exact(&mut len_buf)
                .map_err(|e| Error::Format(format!("tensor name: {e}")))?;
            let mut name = vec![0u8; u16::from_le_bytes(len_buf) as usize];
            input
                .read_exact(&mut name)
                .map_err(|e| Error::Format(format!("tensor name: {e}")))?;
            let name = String::from_utf8(name).map_err(|e| Error::Format(e.to_string()))?;
            tensors.push((name, read_tensor(input)?));
        }
        Ok(Checkpoint { cfg, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut f)
    }
}

/// Snapshot the model parameters of a network.
pub fn checkpoint_from_network<T: Scalar>(net: &Network<T>) -> Checkpoint<T> {
    let mut tensors = Vec::new();
    for (name, p) in net.named_parameters() {
        let ws = p.wshape();
        tensors.push((
            format!("{name}.w"),
            Tensor::from_vec(ws, p.weight()).expect("weight shape"),
        ));
        tensors.push((
            format!("{name}.b"),
            Tensor::from_vec(Shape::new(p.c_out(), 1, 1, 1), p.bias()).expect("bias shape"),
        ));
    }
    Checkpoint { cfg: net.cfg, tensors }
}

/// Rebuild the network described by a checkpoint and load its weights.
/// `state.`-prefixed entries are ignored here; unknown model entries are
/// rejected.
pub fn network_from_checkpoint<T: Scalar>(ck: &Checkpoint<T>) -> Result<Network<T>> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let net: Network<T> = build_network(&ck.cfg, &mut rng)?;
    let mut known: std::collections::HashSet<String> = std::collections::HashSet::new();
    for (name, p) in net.named_parameters() {
        let wname = format!("{name}.w");
        let bname = format!("{name}.b");
        let wt = ck
            .get(&wname)
            .ok_or_else(|| Error::Format(format!("checkpoint is missing tensor {wname}")))?;
        if wt.shape() != p.wshape() {
            return Err(Error::Format(format!(
                "tensor {wname} has shape {}, expected {}",
                wt.shape(),
                p.wshape()
            )));
        }
        p.set_weight(wt.data());
        let bt = ck
            .get(&bname)
            .ok_or_else(|| Error::Format(format!("checkpoint is missing tensor {bname}")))?;
        if bt.data().len() != p.c_out() {
            return Err(Error::Format(format!("tensor {bname} has the wrong length")));
        }
        p.set_bias(bt.data());
        known.insert(wname);
        known.insert(bname);
    }
    for (name, _) in &ck.tensors {
        if !name.starts_with(STATE_PREFIX) && !known.contains(name) {
            return Err(Error::Format(format!("checkpoint holds an unknown tensor {name}")));
        }
    }
    Ok(net)
}

/// Encode raw bytes as a byte-valued tensor (for RNG state blobs).
pub fn bytes_to_tensor<T: Scalar>(bytes: &[u8]) -> Tensor<T> {
    Tensor::from_vec(
        Shape::new(1, 1, 1, bytes.len()),
        bytes.iter().map(|&b| T::from_f64(b as f64)).collect(),
    )
    .expect("byte tensor")
}

pub fn tensor_to_bytes<T: Scalar>(t: &Tensor<T>) -> Vec<u8> {
    t.data().iter().map(|v| v.as_f64() as u8).collect()
}

/// Encode a u64 exactly (two 32-bit halves, each exact in any float).
pub fn u64_to_tensor<T: Scalar>(v: u64) -> Tensor<T> {
    Tensor::from_vec(
        Shape::new(1, 1, 1, 2),
        vec![T::from_f64((v >> 32) as f64), T::from_f64((v & 0xffff_ffff) as f64)],
    )
    .expect("u64 tensor")
}

pub fn tensor_to_u64<T: Scalar>(t: &Tensor<T>) -> Result<u64> {
    if t.data().len() != 2 {
        return Err(Error::Format("expected a two-element counter tensor".into()));
    }
    let hi = t.data()[0].as_f64() as u64;
    let lo = t.data()[1].as_f64() as u64;
    Ok((hi << 32) | lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Backbone, ModelConfig};
    use crate::unit::VariantName;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg() -> ModelConfig {
        ModelConfig {
            backbone: Backbone::Srresnet,
            variant: VariantName::Ms3,
            num_blocks: 2,
            width: 8,
            branches: 2,
            upscale: 2,
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net: Network<f64> = build_network(&small_cfg(), &mut rng).unwrap();
        let ck = checkpoint_from_network(&net);
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        let back: Checkpoint<f64> = Checkpoint::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back.cfg, net.cfg);
        assert_eq!(back.tensors.len(), ck.tensors.len());
        for ((na, ta), (nb, tb)) in ck.tensors.iter().zip(&back.tensors) {
            assert_eq!(na, nb);
            assert!(ta
                .data()
                .iter()
                .zip(tb.data())
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        let net2 = network_from_checkpoint(&back).unwrap();
        let x = Tensor::random_uniform(Shape::new(1, 3, 8, 8), 0.0, 1.0, &mut rng);
        let y1 = net.forward(&x).unwrap();
        let y2 = net2.forward(&x).unwrap();
        assert!(y1.data().iter().zip(y2.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn unknown_and_missing_tensors_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net: Network<f64> = build_network(&small_cfg(), &mut rng).unwrap();
        let mut ck = checkpoint_from_network(&net);
        ck.push("bogus.w", Tensor::zeros(Shape::new(1, 1, 1, 1)));
        assert!(network_from_checkpoint(&ck).is_err());

        let mut ck2 = checkpoint_from_network(&net);
        ck2.tensors.remove(0);
        assert!(network_from_checkpoint(&ck2).is_err());

        // state.* entries are tolerated.
        let mut ck3 = checkpoint_from_network(&net);
        ck3.push("state.iter", u64_to_tensor(7));
        assert!(network_from_checkpoint(&ck3).is_ok());
    }

    #[test]
    fn counter_and_byte_encodings_round_trip() {
        for v in [0u64, 1, u32::MAX as u64, u64::MAX] {
            let t: Tensor<f64> = u64_to_tensor(v);
            assert_eq!(tensor_to_u64(&t).unwrap(), v);
        }
        let bytes: Vec<u8> = (0..=255).collect();
        let t: Tensor<f32> = bytes_to_tensor(&bytes);
        assert_eq!(tensor_to_bytes(&t), bytes);
    }
}

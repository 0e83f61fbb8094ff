//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "SITADDA\0"
//! version    u32      FORMAT_VERSION
//! header_len u64
//! header     JSON     architecture, scalar type, stage, ordered block specs
//! params     raw      every parameter tensor in block order, scalar LE
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::block::{BlockSpec, ConvBlock};
use super::discriminator::{DiscriminatorConfig, DiscriminatorModel};
use super::generator::{GeneratorConfig, GeneratorModel};
use super::Network;
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MAGIC: &[u8; 8] = b"SITADDA\0";
pub const FORMAT_VERSION: u32 = 1;

/// Pipeline stage that produced a set of weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Initial,
    Source,
    Adapted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Architecture {
    Generator(GeneratorConfig),
    Discriminator(DiscriminatorConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub scalar: String,
    pub stage: Stage,
    pub architecture: Architecture,
    pub blocks: Vec<BlockSpec>,
    pub param_count: usize,
}

fn encode<T: Real, N: Network<T>>(net: &N, architecture: Architecture, stage: Stage) -> Result<Vec<u8>> {
    let header = Header {
        scalar: T::NAME.to_string(),
        stage,
        architecture,
        blocks: net.blocks().iter().map(|b| b.spec.clone()).collect(),
        param_count: net.param_count(),
    };
    let header = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(24 + header.len() + net.param_count() * T::BYTES);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for block in net.blocks() {
        for tensor in &block.params {
            tensor.iter().for_each(|v| v.write_le(&mut out));
        }
    }
    Ok(out)
}

fn decode<T: Real>(bytes: &[u8]) -> Result<(Header, Vec<ConvBlock<T>>)> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body = bytes.get(20..20 + header_len).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(body)?;
    if header.scalar != T::NAME {
        return Err(Error::Checkpoint(format!(
            "checkpoint stores {} parameters, requested {}",
            header.scalar,
            T::NAME
        )));
    }
    let mut cursor = 20 + header_len;
    let expected: usize = header.blocks.iter().map(BlockSpec::param_count).sum();
    if expected != header.param_count || bytes.len() != cursor + expected * T::BYTES {
        return Err(bad("parameter payload size does not match header"));
    }
    let mut blocks = Vec::with_capacity(header.blocks.len());
    for spec in &header.blocks {
        let mut params = Vec::new();
        for len in spec.param_lens() {
            let tensor = (0..len)
                .map(|i| T::read_le(&bytes[cursor + i * T::BYTES..]))
                .collect::<Vec<_>>();
            cursor += len * T::BYTES;
            params.push(tensor);
        }
        blocks.push(ConvBlock::from_spec(spec.clone(), params));
    }
    Ok((header, blocks))
}

pub fn generator_to_bytes<T: Real>(model: &GeneratorModel<T>, stage: Stage) -> Result<Vec<u8>> {
    encode(model, Architecture::Generator(model.config().clone()), stage)
}

pub fn generator_from_bytes<T: Real>(bytes: &[u8]) -> Result<(GeneratorModel<T>, Stage)> {
    let (header, blocks) = decode::<T>(bytes)?;
    match header.architecture {
        Architecture::Generator(cfg) => Ok((GeneratorModel::from_blocks(cfg, blocks)?, header.stage)),
        Architecture::Discriminator(_) => Err(Error::Checkpoint("checkpoint holds a discriminator".into())),
    }
}

pub fn discriminator_to_bytes<T: Real>(model: &DiscriminatorModel<T>, stage: Stage) -> Result<Vec<u8>> {
    encode(model, Architecture::Discriminator(model.config().clone()), stage)
}

pub fn discriminator_from_bytes<T: Real>(bytes: &[u8]) -> Result<DiscriminatorModel<T>> {
    let (header, blocks) = decode::<T>(bytes)?;
    match header.architecture {
        Architecture::Discriminator(cfg) => {
            let mut model = DiscriminatorModel::constant(cfg, T::zero())?;
            if model.blocks().iter().zip(&blocks).any(|(a, b)| a.spec != b.spec) {
                return Err(Error::ArchitectureMismatch("discriminator block specs differ".into()));
            }
            for (dst, src) in model.blocks_mut().iter_mut().zip(blocks) {
                *dst = src;
            }
            Ok(model)
        }
        Architecture::Generator(_) => Err(Error::Checkpoint("checkpoint holds a generator".into())),
    }
}

pub fn save_generator<T: Real>(model: &GeneratorModel<T>, stage: Stage, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, generator_to_bytes(model, stage)?)?;
    Ok(())
}

pub fn load_generator<T: Real>(path: impl AsRef<Path>) -> Result<(GeneratorModel<T>, Stage)> {
    generator_from_bytes(&std::fs::read(path)?)
}

/// Header of a checkpoint without decoding its parameters.
pub fn read_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body = bytes
        .get(20..20 + header_len)
        .ok_or_else(|| Error::Checkpoint("truncated header".into()))?;
    Ok(serde_json::from_slice(body)?)
}

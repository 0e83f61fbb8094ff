//! Block registry of the translator and the trainability masks over it.

use serde::{Deserialize, Serialize};

use super::block::BlockKind;
use super::generator::GeneratorModel;
use super::Network;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisteredBlock {
    /// 1-based position `f_i` in forward order.
    pub index: usize,
    pub name: String,
    pub kind: BlockKind,
    pub param_count: usize,
}

/// Ordered blocks `f_1 .. f_n`: encoder from the input towards the
/// bottleneck, then decoder from the bottleneck towards the output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerRegistry {
    pub blocks: Vec<RegisteredBlock>,
}

impl LayerRegistry {
    pub fn of<T: Real>(model: &GeneratorModel<T>) -> Self {
        let blocks = model
            .blocks()
            .iter()
            .enumerate()
            .map(|(i, b)| RegisteredBlock {
                index: i + 1,
                name: b.spec.name.clone(),
                kind: b.spec.kind,
                param_count: b.param_count(),
            })
            .collect();
        LayerRegistry { blocks }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn total_params(&self) -> usize {
        self.blocks.iter().map(|b| b.param_count).sum()
    }

    /// Parameters selected by a trainability mask.
    pub fn trainable_params(&self, mask: &[bool]) -> usize {
        self.blocks.iter().zip(mask).filter(|(_, &t)| t).map(|(b, _)| b.param_count).sum()
    }
}

/// Which blocks of the target translator may change during adaptation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "k", rename_all = "snake_case")]
pub enum FreezeSchedule {
    /// `f_1 .. f_k` trainable. `n` is full adaptation, `0` freezes everything.
    TrainablePrefix(usize),
    /// `f_{n-k+1} .. f_n` trainable.
    TrainableSuffix(usize),
    /// Only `f_k` (1-based) trainable.
    TrainableSingle(usize),
    /// Explicit mask, used verbatim.
    Mask(Vec<bool>),
}

impl FreezeSchedule {
    /// Freeze `f_1 .. f_k`, train the rest.
    pub fn freeze_first(k: usize, n: usize) -> Result<Self> {
        if k > n {
            return Err(Error::Index { index: k, max: n });
        }
        Ok(FreezeSchedule::TrainableSuffix(n - k))
    }

    /// Freeze the last `k` blocks, train the earlier ones.
    pub fn freeze_last(k: usize, n: usize) -> Result<Self> {
        if k > n {
            return Err(Error::Index { index: k, max: n });
        }
        Ok(FreezeSchedule::TrainablePrefix(n - k))
    }

    pub fn resolve(&self, registry: &LayerRegistry) -> Result<Vec<bool>> {
        self.resolve_len(registry.len())
    }

    pub fn resolve_len(&self, n: usize) -> Result<Vec<bool>> {
        match *self {
            FreezeSchedule::TrainablePrefix(k) => {
                check(k, n)?;
                Ok((0..n).map(|i| i < k).collect())
            }
            FreezeSchedule::TrainableSuffix(k) => {
                check(k, n)?;
                Ok((0..n).map(|i| i >= n - k).collect())
            }
            FreezeSchedule::TrainableSingle(k) => {
                if k == 0 || k > n {
                    return Err(Error::Index { index: k, max: n });
                }
                Ok((0..n).map(|i| i + 1 == k).collect())
            }
            FreezeSchedule::Mask(ref mask) => {
                if mask.len() != n {
                    return Err(Error::Shape(format!("mask length {} != registry length {n}", mask.len())));
                }
                Ok(mask.clone())
            }
        }
    }

    /// Compact label used in reports, e.g. `prefix:3`.
    pub fn label(&self) -> String {
        match self {
            FreezeSchedule::TrainablePrefix(k) => format!("prefix:{k}"),
            FreezeSchedule::TrainableSuffix(k) => format!("suffix:{k}"),
            FreezeSchedule::TrainableSingle(k) => format!("single:{k}"),
            FreezeSchedule::Mask(m) => {
                let bits: String = m.iter().map(|&b| if b { '1' } else { '0' }).collect();
                format!("mask:{bits}")
            }
        }
    }

    /// Inverse of [`FreezeSchedule::label`].
    pub fn parse(label: &str) -> Result<Self> {
        let (kind, arg) = label
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("schedule `{label}` must look like prefix:3")))?;
        let num = || {
            arg.parse::<usize>()
                .map_err(|_| Error::Config(format!("bad schedule index in `{label}`")))
        };
        match kind {
            "prefix" => Ok(FreezeSchedule::TrainablePrefix(num()?)),
            "suffix" => Ok(FreezeSchedule::TrainableSuffix(num()?)),
            "single" => Ok(FreezeSchedule::TrainableSingle(num()?)),
            "mask" => arg
                .chars()
                .map(|c| match c {
                    '1' => Ok(true),
                    '0' => Ok(false),
                    _ => Err(Error::Config(format!("bad mask bit in `{label}`"))),
                })
                .collect::<Result<Vec<_>>>()
                .map(FreezeSchedule::Mask),
            _ => Err(Error::Config(format!("unknown schedule kind `{kind}`"))),
        }
    }
}

fn check(k: usize, n: usize) -> Result<()> {
    if k > n {
        Err(Error::Index { index: k, max: n })
    } else {
        Ok(())
    }
}

/// Mask-resolution helper matching the library-level operation name.
pub fn resolve_freeze(schedule: &FreezeSchedule, registry: &LayerRegistry) -> Result<Vec<bool>> {
    schedule.resolve(registry)
}

//! Three continuous simulated domain families with hand-coded option
//! controllers. Each emits both a problem-space state and an egocentric
//! observation whose dimension is fixed per family.

pub mod corridor;
pub mod oracle;
pub mod rodblock;
pub mod treasure;

use crate::env::Environment;
use crate::error::{Error, Result};
use oracle::DomainOracle;

/// An environment that also exposes its analytic ground truth.
pub trait OracleEnvironment: Environment + DomainOracle {}
impl<T: Environment + DomainOracle> OracleEnvironment for T {}

/// Task descriptor usable from the CLI and from config files.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum TaskDescriptor {
    Corridor {
        #[serde(default)]
        offset: [f64; 2],
        #[serde(default)]
        seed: u64,
    },
    Rodblock {
        num_blocks: usize,
        #[serde(default)]
        seed: u64,
    },
    Treasure {
        level: usize,
        #[serde(default)]
        seed: u64,
    },
}

impl TaskDescriptor {
    /// Parse `key=value` pairs such as `offset_x=2,offset_y=1,seed=4` for a
    /// given family name.
    pub fn from_flags(family: &str, flags: &str) -> Result<Self> {
        let mut map = std::collections::BTreeMap::new();
        if !flags.trim().is_empty() {
            for pair in flags.split(',') {
                let (k, v) = pair.split_once('=').ok_or_else(|| {
                    Error::InvalidTask(format!("expected key=value, found `{pair}`"))
                })?;
                map.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        let get_f64 = |map: &std::collections::BTreeMap<String, String>, k: &str| -> Result<f64> {
            map.get(k)
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|e| Error::InvalidTask(format!("bad {k}: {e}")))
                })
                .transpose()
                .map(|o| o.unwrap_or(0.0))
        };
        let get_u64 = |map: &std::collections::BTreeMap<String, String>, k: &str| -> Result<u64> {
            map.get(k)
                .map(|v| {
                    v.parse::<u64>()
                        .map_err(|e| Error::InvalidTask(format!("bad {k}: {e}")))
                })
                .transpose()
                .map(|o| o.unwrap_or(0))
        };
        match family {
            "corridor" => Ok(TaskDescriptor::Corridor {
                offset: [get_f64(&map, "offset_x")?, get_f64(&map, "offset_y")?],
                seed: get_u64(&map, "seed")?,
            }),
            "rodblock" => Ok(TaskDescriptor::Rodblock {
                num_blocks: map
                    .get("num_blocks")
                    .map(|v| {
                        v.parse::<usize>()
                            .map_err(|e| Error::InvalidTask(format!("bad num_blocks: {e}")))
                    })
                    .transpose()?
                    .unwrap_or(3),
                seed: get_u64(&map, "seed")?,
            }),
            "treasure" => Ok(TaskDescriptor::Treasure {
                level: map
                    .get("level")
                    .map(|v| {
                        v.parse::<usize>()
                            .map_err(|e| Error::InvalidTask(format!("bad level: {e}")))
                    })
                    .transpose()?
                    .unwrap_or(0),
                seed: get_u64(&map, "seed")?,
            }),
            other => Err(Error::InvalidTask(format!("unknown family `{other}`"))),
        }
    }

    pub fn build(&self) -> Result<Box<dyn OracleEnvironment>> {
        match self {
            TaskDescriptor::Corridor { offset, seed } => {
                Ok(Box::new(corridor::make_corridor(*offset, *seed)))
            }
            TaskDescriptor::Rodblock { num_blocks, seed } => {
                Ok(Box::new(rodblock::make_rod_block(*num_blocks, *seed)?))
            }
            TaskDescriptor::Treasure { level, seed } => {
                Ok(Box::new(treasure::make_treasure_seeded(*level, *seed)?))
            }
        }
    }
}

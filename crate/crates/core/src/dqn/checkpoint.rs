use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::DqnConfig;
use crate::error::{Error, Result};
use crate::neural::{MlpParams, RmsPropState};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferStats {
    pub len: usize,
    pub capacity: usize,
    pub min_size: usize,
}

/// Everything needed to reload a trained agent's networks for analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DqnCheckpoint {
    pub format_version: u32,
    pub state_dim: usize,
    pub num_actions: usize,
    pub hidden_sizes: Vec<usize>,
    /// Last decision step the agent observed.
    pub step: u64,
    pub updates: u64,
    pub config: DqnConfig,
    pub online: MlpParams,
    pub target: MlpParams,
    pub optimizer: RmsPropState,
    pub buffer: BufferStats,
}

impl DqnCheckpoint {
    pub fn validate(&self) -> Result<()> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {}",
                self.format_version
            )));
        }
        let mut sizes = vec![self.state_dim];
        sizes.extend(&self.hidden_sizes);
        sizes.push(self.num_actions);
        for (name, net) in [
            ("online", &self.online),
            ("target", &self.target),
            ("optimizer", &self.optimizer.mean_square),
        ] {
            if net.sizes() != sizes {
                return Err(Error::Format(format!(
                    "{name} network has layer sizes {:?}, header declares {sizes:?}",
                    net.sizes()
                )));
            }
        }
        Ok(())
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer(out, self)?;
        Ok(())
    }

    pub fn read_json<R: Read>(input: R) -> Result<Self> {
        let c: Self = serde_json::from_reader(input)?;
        c.validate()?;
        Ok(c)
    }
}

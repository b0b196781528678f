use serde::{Deserialize, Serialize};

use crate::error::{Result, VipError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenGroup {
    Cls,
    Registers,
    Patches,
}

impl std::str::FromStr for TokenGroup {
    type Err = VipError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cls" => Ok(Self::Cls),
            "registers" | "register" => Ok(Self::Registers),
            "patches" | "patch" => Ok(Self::Patches),
            other => Err(VipError::invalid(format!("unknown token group `{other}`"))),
        }
    }
}

/// Token positions in sequence order `[CLS, registers…, patches…]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenLayout {
    pub cls_index: usize,
    pub register_indices: Vec<usize>,
    pub patch_indices: Vec<usize>,
    /// Patch grid `(rows, cols)`.
    pub grid: (usize, usize),
}

impl TokenLayout {
    pub fn new(num_registers: usize, grid: (usize, usize)) -> Self {
        let patches = grid.0 * grid.1;
        Self {
            cls_index: 0,
            register_indices: (1..=num_registers).collect(),
            patch_indices: (1 + num_registers..1 + num_registers + patches).collect(),
            grid,
        }
    }

    pub fn num_tokens(&self) -> usize {
        1 + self.register_indices.len() + self.patch_indices.len()
    }

    pub fn num_registers(&self) -> usize {
        self.register_indices.len()
    }

    pub fn indices(&self, group: TokenGroup) -> &[usize] {
        match group {
            TokenGroup::Cls => std::slice::from_ref(&self.cls_index),
            TokenGroup::Registers => &self.register_indices,
            TokenGroup::Patches => &self.patch_indices,
        }
    }

    pub fn group_of(&self, index: usize) -> Option<TokenGroup> {
        let r = self.num_registers();
        match index {
            0 => Some(TokenGroup::Cls),
            i if i <= r => Some(TokenGroup::Registers),
            i if i < self.num_tokens() => Some(TokenGroup::Patches),
            _ => None,
        }
    }

    pub fn check_tokens(&self, tokens: usize) -> Result<()> {
        if tokens != self.num_tokens() {
            return Err(VipError::invalid(format!(
                "layout covers {} tokens but trace has {tokens}",
                self.num_tokens()
            )));
        }
        Ok(())
    }
}

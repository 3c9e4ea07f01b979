use crate::error::{Result, VdnError};
use crate::util::fnv1a64;
use crate::{HIDDEN, NUM_ACTIONS, NUM_AGENTS, OBS_LEN};

/// Architecture flag set. The nine benchmark rows:
///
/// | # | flags          | description                                |
/// |---|----------------|--------------------------------------------|
/// | 1 | —              | independent learners                       |
/// | 2 | V              | value decomposition                        |
/// | 3 | V,S            | + shared weights                           |
/// | 4 | V,S,Id         | + role one-hot at the first layer          |
/// | 5 | V,S,Id,L       | + low-level channel (post-first-layer)     |
/// | 6 | V,S,Id,H       | + high-level channel (post-LSTM)           |
/// | 7 | V,S,Id,L,H     | + both channels                            |
/// | 8 | V,C            | centralized trunk, per-agent heads, summed |
/// | 9 | C              | centralized, joint 64-action head          |
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AgentSpec {
    pub value_decomposition: bool,
    pub shared_weights: bool,
    pub role_info: bool,
    pub low_comm: bool,
    pub high_comm: bool,
    pub centralized: bool,
}

const fn preset_flags(v: bool, s: bool, id: bool, l: bool, h: bool, c: bool) -> AgentSpec {
    AgentSpec {
        value_decomposition: v,
        shared_weights: s,
        role_info: id,
        low_comm: l,
        high_comm: h,
        centralized: c,
    }
}

pub const PRESETS: [AgentSpec; 9] = [
    preset_flags(false, false, false, false, false, false),
    preset_flags(true, false, false, false, false, false),
    preset_flags(true, true, false, false, false, false),
    preset_flags(true, true, true, false, false, false),
    preset_flags(true, true, true, true, false, false),
    preset_flags(true, true, true, false, true, false),
    preset_flags(true, true, true, true, true, false),
    preset_flags(true, false, false, false, false, true),
    preset_flags(false, false, false, false, false, true),
];

impl AgentSpec {
    /// Looks up preset `n` (1-based).
    pub fn preset(n: u8) -> Result<AgentSpec> {
        if (1..=9).contains(&n) {
            Ok(PRESETS[n as usize - 1])
        } else {
            Err(VdnError::Config(format!("architecture preset {n} out of range 1..=9")))
        }
    }

    /// The preset number this flag set corresponds to, if any.
    pub fn preset_number(self) -> Option<u8> {
        PRESETS.iter().position(|p| *p == self).map(|i| i as u8 + 1)
    }

    /// Rejects flag combinations outside the nine presets. Construct
    /// non-preset combinations only through [`AgentSpec::with_override`].
    pub fn ensure_preset(self) -> Result<AgentSpec> {
        if self.preset_number().is_some() {
            Ok(self)
        } else {
            Err(VdnError::Config(format!(
                "flag set [{}] is not one of the nine presets \
                 (1: none; 2: V; 3: V,S; 4: V,S,Id; 5: V,S,Id,L; 6: V,S,Id,H; \
                 7: V,S,Id,L,H; 8: V,C; 9: C); pass the explicit override to build it anyway",
                self.flag_string()
            )))
        }
    }

    /// Escape hatch for experiments outside the benchmark grid: accepts any
    /// flag set except nonsensical centralized+shared/channel mixes.
    pub fn with_override(self) -> Result<AgentSpec> {
        if self.centralized && (self.shared_weights || self.low_comm || self.high_comm) {
            return Err(VdnError::Config(format!(
                "flag set [{}] mixes the centralized trunk with per-agent wiring flags",
                self.flag_string()
            )));
        }
        Ok(self)
    }

    /// Canonical short form, e.g. `V,S,Id` (empty set prints `none`).
    pub fn flag_string(self) -> String {
        let mut out = Vec::new();
        if self.value_decomposition {
            out.push("V");
        }
        if self.shared_weights {
            out.push("S");
        }
        if self.role_info {
            out.push("Id");
        }
        if self.low_comm {
            out.push("L");
        }
        if self.high_comm {
            out.push("H");
        }
        if self.centralized {
            out.push("C");
        }
        if out.is_empty() {
            "none".to_string()
        } else {
            out.join(",")
        }
    }

    /// Stable hash embedded in checkpoint headers: any wiring change (and so
    /// any parameter-layout change) produces a different value.
    pub fn spec_hash(self) -> u64 {
        let canon = format!(
            "arch|V={}|S={}|Id={}|L={}|H={}|C={}|obs={}|hidden={}|actions={}",
            self.value_decomposition as u8,
            self.shared_weights as u8,
            self.role_info as u8,
            self.low_comm as u8,
            self.high_comm as u8,
            self.centralized as u8,
            OBS_LEN,
            HIDDEN,
            NUM_ACTIONS,
        );
        fnv1a64(canon.as_bytes())
    }

    /// Width of the first linear layer's input: the flattened observation
    /// plus a d-dim role one-hot when identity is switched on.
    pub fn input_width(self) -> usize {
        OBS_LEN + if self.role_info { NUM_AGENTS } else { 0 }
    }

    /// Width of the LSTM input: 64 after a concatenation (centralized trunks
    /// and the low-level channel), else the plain 32.
    pub fn lstm_input_width(self) -> usize {
        if self.centralized || self.low_comm {
            2 * HIDDEN
        } else {
            HIDDEN
        }
    }

    /// Width of the dueling head input: 64 for the high-level channel.
    pub fn head_input_width(self) -> usize {
        if self.high_comm && !self.centralized {
            2 * HIDDEN
        } else {
            HIDDEN
        }
    }

    /// Actions per head: 8 per agent, or the 64 joint combinations for the
    /// purely centralized spec (no value decomposition to split it).
    pub fn head_actions(self) -> usize {
        if self.joint_head() {
            NUM_ACTIONS * NUM_ACTIONS
        } else {
            NUM_ACTIONS
        }
    }

    /// True for the combinatorial centralized baseline (one 64-way head).
    pub fn joint_head(self) -> bool {
        self.centralized && !self.value_decomposition
    }
}

impl std::fmt::Display for AgentSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.preset_number() {
            Some(n) => write!(f, "{n} [{}]", self.flag_string()),
            None => write!(f, "custom [{}]", self.flag_string()),
        }
    }
}

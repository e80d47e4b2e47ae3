use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Node classification.
    Nc,
    /// Link prediction.
    Lp,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Nc => "nc",
            Task::Lp => "lp",
        })
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nc" => Ok(Task::Nc),
            "lp" => Ok(Task::Lp),
            other => Err(format!("unknown task {other:?} (expected nc or lp)")),
        }
    }
}

/// Training stage. Stage 1 bootstraps tool use with a coverage bonus; stage 2
/// optimizes search efficiency with the retrospective trigger and the
/// reasoning-depth term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Stage {
    #[default]
    Bootstrap,
    Mso,
}

impl Stage {
    pub fn number(self) -> u8 {
        match self {
            Stage::Bootstrap => 1,
            Stage::Mso => 2,
        }
    }

    pub fn from_number(n: u64) -> Option<Self> {
        match n {
            1 => Some(Stage::Bootstrap),
            2 => Some(Stage::Mso),
            _ => None,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "1" | "bootstrap" => Ok(Stage::Bootstrap),
            "2" | "mso" => Ok(Stage::Mso),
            other => Err(format!("unknown stage {other:?} (expected 1 or 2)")),
        }
    }
}

// On the wire a stage is the integer 1 or 2.
impl Serialize for Stage {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.number())
    }
}

impl<'de> Deserialize<'de> for Stage {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let n = u64::deserialize(d)?;
        Stage::from_number(n)
            .ok_or_else(|| serde::de::Error::custom(format!("stage must be 1 or 2, got {n}")))
    }
}

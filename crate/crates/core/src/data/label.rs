use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tissue class. Codes are fixed: NT=0, NVT=1, VT=2, NVR=3.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ClassLabel {
    #[serde(rename = "NT")]
    Nt,
    #[serde(rename = "NVT")]
    Nvt,
    #[serde(rename = "VT")]
    Vt,
    #[serde(rename = "NVR")]
    Nvr,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 4] = [ClassLabel::Nt, ClassLabel::Nvt, ClassLabel::Vt, ClassLabel::Nvr];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<ClassLabel> {
        Self::ALL.get(code).copied()
    }

    /// Directory and display name.
    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::Nt => "NT",
            ClassLabel::Nvt => "NVT",
            ClassLabel::Vt => "VT",
            ClassLabel::Nvr => "NVR",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown class {s:?} (expected NT, NVT, VT or NVR)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::Usage(format!("unknown split {s:?} (expected train, val or test)"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_are_stable() {
        let codes: Vec<_> = ClassLabel::ALL.iter().map(|c| (c.name(), c.code())).collect();
        assert_eq!(codes, [("NT", 0), ("NVT", 1), ("VT", 2), ("NVR", 3)]);
        assert_eq!("NVR".parse::<ClassLabel>().unwrap(), ClassLabel::Nvr);
        assert_eq!(serde_json::to_string(&ClassLabel::Vt).unwrap(), "\"VT\"");
        assert!("holdout".parse::<Split>().is_err());
    }
}

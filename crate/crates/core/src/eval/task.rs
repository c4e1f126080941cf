use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::ClassLabel;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Binary,
    ThreeClass,
    FourClass,
}

/// A classification task: an ordered subset of the four labels.
///
/// Subsets keep code order, so the binary task is `[NT, VT]` with VT as the
/// positive class (index 1).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub classes: Vec<ClassLabel>,
}

impl TaskSpec {
    pub fn new(kind: TaskKind) -> Self {
        use ClassLabel::*;
        let classes = match kind {
            TaskKind::Binary => vec![Nt, Vt],
            TaskKind::ThreeClass => vec![Nt, Nvt, Vt],
            TaskKind::FourClass => vec![Nt, Nvt, Vt, Nvr],
        };
        TaskSpec { kind, classes }
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name().to_string()).collect()
    }

    /// Index of the positive class for binary reporting.
    pub fn positive_index(&self) -> Option<usize> {
        (self.kind == TaskKind::Binary).then(|| self.classes.iter().position(|&c| c == ClassLabel::Vt).unwrap())
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            TaskKind::Binary => "binary",
            TaskKind::ThreeClass => "three",
            TaskKind::FourClass => "four",
        }
    }

    /// Human-readable class list, e.g. `VT vs. NT`.
    pub fn title(&self) -> String {
        self.classes.iter().rev().map(|c| c.name()).collect::<Vec<_>>().join(" vs. ")
    }

    /// Task whose class list is `names`, if any.
    pub fn from_class_names(names: &[String]) -> Option<TaskSpec> {
        [TaskKind::Binary, TaskKind::ThreeClass, TaskKind::FourClass]
            .into_iter()
            .map(TaskSpec::new)
            .find(|t| t.class_names() == names)
    }
}

impl fmt::Display for TaskSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let kind = match s {
            "binary" | "two" => TaskKind::Binary,
            "three" | "three_class" => TaskKind::ThreeClass,
            "four" | "four_class" => TaskKind::FourClass,
            _ => return Err(Error::Usage(format!("unknown task {s:?} (expected binary, three or four)"))),
        };
        Ok(TaskSpec::new(kind))
    }
}

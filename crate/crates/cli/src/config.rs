//! Run configuration: defaults, then a TOML file, then flags.
//!
//! A config file may set any top-level key of [`RunConfig`] and partial
//! `[model]`, `[train]`, `[branch.cnn]` and `[branch.vit]` tables; missing
//! keys keep the preset values. The resolved `config.toml` written into a
//! run directory is itself a valid config file.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use osteo::data::DEFAULT_FRACTIONS;
use osteo::eval::TaskSpec;
use osteo::models::{ArchName, ArchSpec, Scale};
use osteo::train::{NumericMode, TrainConfig};
use osteo::{Error, Result};

#[derive(Args, Debug, Default, Clone)]
pub struct TrainArgs {
    /// cnn, vit, resnet50 or hybrid.
    #[arg(long)]
    pub arch: Option<String>,
    /// Dataset root with NT/NVT/VT/NVR folders, or a manifest JSON file.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// binary, three or four.
    #[arg(long)]
    pub task: Option<String>,
    /// paper or tiny.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seed of the stratified split; defaults to --seed.
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// Run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// TOML file with run settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Initial weights. For the hybrid give the CNN and ViT checkpoints.
    #[arg(long)]
    pub init_from: Vec<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// f32 or f64.
    #[arg(long)]
    pub numeric_mode: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    arch: Option<String>,
    task: Option<String>,
    preset: Option<String>,
    seed: Option<u64>,
    split_seed: Option<u64>,
    fractions: Option<[f64; 3]>,
    data: Option<PathBuf>,
    out: Option<PathBuf>,
    init_from: Option<Vec<PathBuf>>,
    model: Option<toml::Table>,
    train: Option<toml::Table>,
    branch: Option<FileBranches>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileBranches {
    cnn: Option<toml::Table>,
    vit: Option<toml::Table>,
}

/// Training recipes of the two hybrid branches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchConfigs {
    pub cnn: TrainConfig,
    pub vit: TrainConfig,
}

/// Fully resolved settings of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub arch: ArchName,
    pub task: String,
    pub preset: Scale,
    pub seed: u64,
    pub split_seed: u64,
    pub fractions: [f64; 3],
    pub data: PathBuf,
    pub out: PathBuf,
    pub init_from: Vec<PathBuf>,
    pub model: ArchSpec,
    pub train: TrainConfig,
    pub branch: Option<BranchConfigs>,
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn overlay<T: Serialize + DeserializeOwned>(base: &T, over: Option<toml::Table>, what: &str) -> Result<T> {
    let mut table = toml::Table::try_from(base).map_err(|e| Error::Config(format!("{what}: {e}")))?;
    if let Some(over) = over {
        merge(&mut table, over);
    }
    table.try_into().map_err(|e: toml::de::Error| Error::Config(format!("[{what}] {}", e.message())))
}

fn read_file(path: &Path) -> Result<FileConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| Error::Usage(format!("--{flag} is required (flag or config file)")))
}

impl TrainArgs {
    fn apply(&self, cfg: &mut TrainConfig, seed: u64, numeric: Option<NumericMode>) {
        cfg.seed = seed;
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(b) = self.batch_size {
            cfg.batch_size = b;
        }
        if let Some(lr) = self.learning_rate {
            cfg.learning_rate = lr;
        }
        if let Some(m) = numeric {
            cfg.numeric_mode = m;
        }
    }
}

fn parse_numeric(s: &str) -> Result<NumericMode> {
    match s {
        "f32" => Ok(NumericMode::F32),
        "f64" => Ok(NumericMode::F64),
        _ => Err(Error::Usage(format!("unknown numeric mode {s:?} (expected f32 or f64)"))),
    }
}

/// Resolves defaults, the optional config file and flags into one config.
pub fn resolve(args: &TrainArgs) -> Result<RunConfig> {
    let file = match &args.config {
        Some(p) => read_file(p)?,
        None => FileConfig::default(),
    };
    let arch: ArchName = required(args.arch.clone().or(file.arch), "arch")?.parse()?;
    let task: TaskSpec = required(args.task.clone().or(file.task), "task")?.parse()?;
    let preset: Scale = args.preset.clone().or(file.preset).unwrap_or_else(|| "paper".into()).parse()?;
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let split_seed = args.split_seed.or(file.split_seed).unwrap_or(seed);
    for s in [seed, split_seed] {
        if s > i64::MAX as u64 {
            return Err(Error::Usage(format!("seed {s} exceeds 2^63 - 1")));
        }
    }
    let fractions = file.fractions.unwrap_or(DEFAULT_FRACTIONS);
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
        return Err(Error::Config(format!("split fractions {fractions:?} must be in [0,1] and sum to 1")));
    }
    let data = required(args.data.clone().or(file.data), "data")?;
    let out = required(args.out.clone().or(file.out), "out")?;
    let init_from = if args.init_from.is_empty() { file.init_from.unwrap_or_default() } else { args.init_from.clone() };
    let numeric = args.numeric_mode.as_deref().map(parse_numeric).transpose()?;

    let model = overlay(&ArchSpec::preset(arch, preset, task.num_classes()), file.model, "model")?;
    if model.name != arch {
        return Err(Error::Config(format!("[model] name {} contradicts arch {arch}", model.name)));
    }
    if model.num_classes != task.num_classes() {
        return Err(Error::Config(format!("[model] num_classes {} but the {task} task has {}", model.num_classes, task.num_classes())));
    }
    model.validate()?;

    let mut train = overlay(&TrainConfig::preset(arch, preset), file.train, "train")?;
    args.apply(&mut train, seed, numeric);
    train.validate()?;
    let branch = if arch == ArchName::Hybrid {
        let branches = file.branch.unwrap_or_default();
        let stage = |name: ArchName, over: Option<toml::Table>| -> Result<TrainConfig> {
            let mut c = overlay(&TrainConfig::preset(name, preset), over, &format!("branch.{name}"))?;
            args.apply(&mut c, seed, Some(numeric.unwrap_or(train.numeric_mode)));
            c.validate()?;
            Ok(c)
        };
        Some(BranchConfigs { cnn: stage(ArchName::Cnn, branches.cnn)?, vit: stage(ArchName::Vit, branches.vit)? })
    } else {
        None
    };
    Ok(RunConfig { arch, task: task.name().into(), preset, seed, split_seed, fractions, data, out, init_from, model, train, branch })
}

impl RunConfig {
    pub fn task(&self) -> Result<TaskSpec> {
        self.task.parse()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("cannot serialise config: {e}")))
    }
}

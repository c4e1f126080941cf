use std::fs::OpenOptions;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Summary of one training epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub seconds: f64,
}

pub const LOG_HEADER: [&str; 5] = ["epoch", "train_loss", "val_loss", "val_acc", "seconds"];

/// Appends records as CSV rows, writing the header when the file is new or empty.
pub fn epoch_log(records: &[EpochRecord], path: &Path) -> Result<()> {
    let io = |e| Error::io(path, e);
    let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
    let fresh = file.metadata().map_err(io)?.len() == 0;
    let mut w = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| Error::io(path, std::io::Error::other(e.to_string()));
    if fresh {
        w.write_record(LOG_HEADER).map_err(csv_err)?;
    }
    for r in records {
        w.write_record([
            r.epoch.to_string(),
            format!("{:.6}", r.train_loss),
            format!("{:.6}", r.val_loss),
            format!("{:.6}", r.val_acc),
            format!("{:.3}", r.seconds),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(io)
}

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One generator update and the critic updates before it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub iter: u64,
    /// Mean critic loss over the critic updates.
    pub critic_loss: f64,
    pub gen_loss: f64,
    /// Mean `D(S_r) − D(S_g)` over the critic updates.
    pub wasserstein_estimate: f64,
    pub penalty: f64,
    /// Mean global gradient norm over every update of the iteration.
    pub grad_norm_mean: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wallclock: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub records: Vec<MetricsRecord>,
}

impl MetricsLog {
    pub fn push(&mut self, r: MetricsRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if r.iter <= last.iter {
                return Err(Error::Config(format!("metrics iter {} after {}", r.iter, last.iter)));
            }
        }
        self.records.push(r);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut log = MetricsLog::default();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let r: MetricsRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
            log.push(r)?;
        }
        Ok(log)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_jsonl()?).map_err(|e| Error::io(path, e))
    }

    pub fn all_finite(&self) -> bool {
        self.records.iter().all(|r| {
            [r.critic_loss, r.gen_loss, r.wasserstein_estimate, r.penalty, r.grad_norm_mean]
                .iter()
                .all(|x| x.is_finite())
        })
    }
}

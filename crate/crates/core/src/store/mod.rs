//! In-memory object store standing in for S3.
//!
//! Tracks PUT/GET counts and bytes per issuer, models transfer time from a
//! per-stream throughput, and fires prefix-count triggers that the round
//! driver turns into aggregator invocations.

mod key;

use std::collections::{BTreeMap, VecDeque};
use std::ops::Range;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use key::{ObjectKey, Role};

use crate::accumulate::PartialSum;
use crate::error::{Error, Result};
use crate::tensor::{mb_of_bytes, write_golden, GradientTensor};

/// Per-stream S3 transfer model. Concurrent streams do not contend.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransferModel {
    /// MB/s per stream.
    pub read_throughput: f64,
    /// MB/s per stream.
    pub write_throughput: f64,
    /// Seconds added to every PUT and GET.
    pub per_op_latency: f64,
}

impl Default for TransferModel {
    fn default() -> Self {
        Self {
            read_throughput: 50.0,
            write_throughput: 50.0,
            per_op_latency: 0.05,
        }
    }
}

impl TransferModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("read_throughput", self.read_throughput),
            ("write_throughput", self.write_throughput),
            ("per_op_latency", self.per_op_latency),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "transfer.{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn read_seconds(&self, bytes: u64) -> f64 {
        self.per_op_latency + mb_of_bytes(bytes) / self.read_throughput
    }

    pub fn write_seconds(&self, bytes: u64) -> f64 {
        self.per_op_latency + mb_of_bytes(bytes) / self.write_throughput
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreStats {
    pub puts: u64,
    pub gets: u64,
    pub bytes_written: u64,
    pub bytes_read: u64,
}

impl StoreStats {
    pub fn ops(&self) -> u64 {
        self.puts + self.gets
    }

    fn add(&mut self, other: &StoreStats) {
        self.puts += other.puts;
        self.gets += other.gets;
        self.bytes_written += other.bytes_written;
        self.bytes_read += other.bytes_read;
    }
}

/// Who issued an operation; lets client and aggregator traffic be reported apart.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Issuer {
    ClientUpload,
    Aggregator,
    ClientReadback,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssuerStats {
    pub client_upload: StoreStats,
    pub aggregator: StoreStats,
    pub client_readback: StoreStats,
}

impl IssuerStats {
    pub fn total(&self) -> StoreStats {
        let mut t = StoreStats::default();
        t.add(&self.client_upload);
        t.add(&self.aggregator);
        t.add(&self.client_readback);
        t
    }

    fn slot(&mut self, issuer: Issuer) -> &mut StoreStats {
        match issuer {
            Issuer::ClientUpload => &mut self.client_upload,
            Issuer::Aggregator => &mut self.aggregator,
            Issuer::ClientReadback => &mut self.client_readback,
        }
    }
}

#[derive(Clone, Debug)]
pub enum Blob {
    Gradient(GradientTensor),
    Partial(PartialSum),
}

impl Blob {
    pub fn byte_size(&self) -> u64 {
        match self {
            Blob::Gradient(g) => g.byte_size(),
            Blob::Partial(p) => p.byte_size(),
        }
    }

    fn tensor(&self) -> &GradientTensor {
        match self {
            Blob::Gradient(g) => g,
            Blob::Partial(p) => &p.sum,
        }
    }
}

/// Matches keys of one round and role, optionally narrowed to one shard index
/// and a range of client ids (client roles) or level indices (partial roles).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyPattern {
    pub round: u32,
    pub role: Role,
    pub shard_index: Option<u32>,
    pub id_range: Option<Range<u32>>,
}

impl KeyPattern {
    pub fn matches(&self, key: &ObjectKey) -> bool {
        if key.round() != self.round || key.role() != self.role {
            return false;
        }
        if self.shard_index.is_some() && key.shard_index() != self.shard_index {
            return false;
        }
        match (&self.id_range, key.client_id().or(key.level_index())) {
            (Some(r), Some(id)) => r.contains(&id),
            (Some(_), None) => false,
            (None, _) => true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Trigger {
    pub pattern: KeyPattern,
    pub required_count: usize,
    /// Opaque invocation id handed back by [`ObjectStore::drain_fired`].
    pub action: usize,
}

#[derive(Debug)]
struct Armed {
    trigger: Trigger,
    seen: usize,
    fired: bool,
}

#[derive(Debug, Default)]
pub struct ObjectStore {
    objects: BTreeMap<ObjectKey, Arc<Blob>>,
    transfer: TransferModel,
    stats: IssuerStats,
    triggers: Vec<Armed>,
    fired: VecDeque<usize>,
    mirror_dir: Option<PathBuf>,
}

impl ObjectStore {
    pub fn new(transfer: TransferModel) -> Self {
        Self {
            transfer,
            ..Default::default()
        }
    }

    /// Also writes every materialized blob under `dir` at its canonical path.
    pub fn with_mirror_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.mirror_dir = Some(dir.into());
        self
    }

    pub fn transfer(&self) -> &TransferModel {
        &self.transfer
    }

    pub fn contains(&self, key: &ObjectKey) -> bool {
        self.objects.contains_key(key)
    }

    /// Stores `blob` and returns the simulated write time in seconds.
    pub fn put(&mut self, key: ObjectKey, blob: Blob, issuer: Issuer) -> Result<f64> {
        if self.objects.contains_key(&key) {
            return Err(Error::DuplicateKey(key));
        }
        let bytes = blob.byte_size();
        if let Some(dir) = &self.mirror_dir {
            if let Ok(values) = blob.tensor().values() {
                let path = dir.join(format!("{key}.bin"));
                if let Some(parent) = path.parent() {
                    std::fs::create_dir_all(parent)?;
                }
                write_golden(path, values)?;
            }
        }
        let s = self.stats.slot(issuer);
        s.puts += 1;
        s.bytes_written += bytes;
        for armed in &mut self.triggers {
            if !armed.fired && armed.trigger.pattern.matches(&key) {
                armed.seen += 1;
                if armed.seen >= armed.trigger.required_count {
                    armed.fired = true;
                    self.fired.push_back(armed.trigger.action);
                }
            }
        }
        self.objects.insert(key, Arc::new(blob));
        Ok(self.transfer.write_seconds(bytes))
    }

    /// Fetches a blob and the simulated read time in seconds.
    pub fn get(&mut self, key: &ObjectKey, issuer: Issuer) -> Result<(Arc<Blob>, f64)> {
        let blob = self
            .objects
            .get(key)
            .cloned()
            .ok_or_else(|| Error::NotFound(key.clone()))?;
        let bytes = blob.byte_size();
        let s = self.stats.slot(issuer);
        s.gets += 1;
        s.bytes_read += bytes;
        Ok((blob, self.transfer.read_seconds(bytes)))
    }

    pub fn register_trigger(&mut self, trigger: Trigger) -> Result<()> {
        if trigger.required_count < 1 {
            return Err(Error::InvalidArgument(
                "trigger required_count must be >= 1".into(),
            ));
        }
        if let Some(r) = &trigger.pattern.id_range {
            if r.is_empty() {
                return Err(Error::InvalidArgument("trigger id range is empty".into()));
            }
        }
        if self
            .triggers
            .iter()
            .any(|a| a.trigger.pattern == trigger.pattern)
        {
            return Err(Error::InvalidArgument(format!(
                "a trigger is already armed on {:?}",
                trigger.pattern
            )));
        }
        let seen = self
            .objects
            .keys()
            .filter(|k| trigger.pattern.matches(k))
            .count();
        let fired = seen >= trigger.required_count;
        if fired {
            self.fired.push_back(trigger.action);
        }
        self.triggers.push(Armed {
            trigger,
            seen,
            fired,
        });
        Ok(())
    }

    /// Invocation ids whose triggers fired since the last drain, in firing order.
    pub fn drain_fired(&mut self) -> Vec<usize> {
        self.fired.drain(..).collect()
    }

    pub fn stats(&self) -> StoreStats {
        self.stats.total()
    }

    pub fn issuer_stats(&self) -> IssuerStats {
        self.stats
    }

    pub fn reset_stats(&mut self) {
        self.stats = IssuerStats::default();
    }
}

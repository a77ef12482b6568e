//! Base-learner snapshot files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! 8 bytes   magic "SEBAYSNP"
//! u32       format version (1)
//! u32       header length H
//! H bytes   UTF-8 JSON header (SnapshotHeader)
//! sections  per layer, in order: weight μ, weight raw σ, weight σ,
//!           bias μ, bias raw σ, bias σ, and for gated layers gate logits,
//!           gate γ, frozen mask (1.0 / 0.0, empty when not frozen).
//!           Each section is a u64 element count followed by that many f64.
//! ```
//!
//! Realized σ and γ are stored alongside their raw parameters so a loaded
//! learner evaluates bit-identically.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Normalization;
use crate::error::{Error, Result};
use crate::layers::{NodeGate, PriorConfig, VariationalTensor};
use crate::model::{Network, NetworkSpec};

pub const MAGIC: &[u8; 8] = b"SEBAYSNP";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    /// 1-based learner index.
    pub learner: usize,
    pub mode: String,
    /// First and last (inclusive, 0-based) epochs of the learner's
    /// exploitation phase.
    pub epoch_start: usize,
    pub epoch_end: usize,
    pub final_lr: f64,
    pub temperature: f64,
    pub spec: NetworkSpec,
    pub prior: PriorConfig,
    pub normalization: Option<Normalization>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub header: SnapshotHeader,
    pub network: Network,
}

fn put(out: &mut Vec<u8>, values: &[f64]) {
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode(snap: &Snapshot) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&snap.header).map_err(|e| Error::Snapshot(e.to_string()))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for l in &snap.network.layers {
        for t in [&l.weights, &l.bias] {
            put(&mut out, t.mu());
            put(&mut out, t.sigma_raw());
            put(&mut out, t.sigma());
        }
        if let Some(g) = &l.gate {
            put(&mut out, g.logits());
            put(&mut out, g.gammas());
            let mask: Vec<f64> = g.mask().map_or(Vec::new(), |m| m.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect());
            put(&mut out, &mask);
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| Error::Snapshot(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn section(&mut self, expected: usize, what: &str) -> Result<Vec<f64>> {
        let n = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")) as usize;
        if n != expected {
            return Err(Error::Snapshot(format!("section {what}: expected {expected} values, found {n}")));
        }
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Snapshot("section too large".into()))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }

    fn any_section(&mut self, allowed: &[usize], what: &str) -> Result<Vec<f64>> {
        let save = self.pos;
        let n = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")) as usize;
        self.pos = save;
        if !allowed.contains(&n) {
            return Err(Error::Snapshot(format!("section {what}: unexpected length {n}")));
        }
        self.section(n, what)
    }
}

pub fn decode(bytes: &[u8]) -> Result<Snapshot> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8).ok() != Some(&MAGIC[..]) {
        return Err(Error::Snapshot("not a snapshot file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Snapshot(format!("unsupported snapshot version {version}")));
    }
    let hlen = r.u32()? as usize;
    let header: SnapshotHeader = serde_json::from_slice(r.take(hlen)?).map_err(|e| Error::Snapshot(format!("header: {e}")))?;
    let mut network = Network::new(header.spec.clone(), header.prior, header.temperature).map_err(|e| Error::Snapshot(format!("header network: {e}")))?;
    for (i, l) in network.layers.iter_mut().enumerate() {
        for (name, t) in [("weight", &mut l.weights), ("bias", &mut l.bias)] {
            let n = t.len();
            let what = format!("layer{i}.{name}");
            let mu = r.section(n, &what)?;
            let raw = r.section(n, &what)?;
            let sigma = r.section(n, &what)?;
            *t = VariationalTensor::from_parts(t.rows(), t.cols(), mu, raw, sigma).ok_or_else(|| Error::Snapshot(format!("{what}: invalid σ")))?;
        }
        if let Some(g) = &mut l.gate {
            let n = g.len();
            let what = format!("layer{i}.gate");
            let logits = r.section(n, &what)?;
            let gammas = r.section(n, &what)?;
            if gammas.iter().any(|x| !(*x >= 0.0 && *x <= 1.0)) {
                return Err(Error::Snapshot(format!("{what}: γ outside [0, 1]")));
            }
            let mask = r.any_section(&[0, n], &what)?;
            let mask = (!mask.is_empty()).then(|| mask.iter().map(|&v| v != 0.0).collect());
            *g = NodeGate::from_parts(logits, gammas, g.temperature(), mask);
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Snapshot(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(Snapshot { header, network })
}

pub fn save(path: &Path, snap: &Snapshot) -> Result<()> {
    fs::write(path, encode(snap)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Snapshot> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        Error::Snapshot(m) => Error::Snapshot(format!("{}: {m}", path.display())),
        e => e,
    })
}

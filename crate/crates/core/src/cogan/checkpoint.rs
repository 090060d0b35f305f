//! `COG1` tensor container and model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "COG1" | u32 format version | u32 tensor count
//! per tensor: u32 name length | name (UTF-8) | u8 dtype tag (1 = f64)
//!             | u32 rank | rank x u64 extents | f64 payload
//! ```
//!
//! A model checkpoint stores every parameter under every id (tied ones
//! twice, so a reader can verify the ties), BatchNorm running statistics and
//! both Adam states. Run metadata lives in a `key = value` text sidecar next
//! to the container.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::cogan::{build_cogan, verify_ties_in, ArchPreset, CoGan, PresetName};
use crate::error::{Error, Result};
use crate::nn::{ParamId, ParamStore};
use crate::optim::{Adam, AdamConfig};
use crate::rng::{stream, Stream};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"COG1";
pub const FORMAT_VERSION: u32 = 1;
const DTYPE_F64: u8 = 1;

pub fn encode_tensors(tensors: &BTreeMap<String, Tensor>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(DTYPE_F64);
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| Error::Parse {
            offset: self.pos,
            detail: format!("truncated {what}: need {n} bytes, {} left", self.bytes.len() - self.pos),
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_tensors(bytes: &[u8]) -> Result<BTreeMap<String, Tensor>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Parse { offset: 0, detail: "not a COG1 container".into() });
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Parse { offset: 4, detail: format!("unsupported container version {version}") });
    }
    let count = r.u32("tensor count")?;
    let mut out = BTreeMap::new();
    for _ in 0..count {
        let len = r.u32("name length")? as usize;
        let at = r.pos;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| Error::Parse { offset: at, detail: "tensor name is not UTF-8".into() })?
            .to_string();
        let at = r.pos;
        let tag = r.take(1, "dtype")?[0];
        if tag != DTYPE_F64 {
            return Err(Error::Parse { offset: at, detail: format!("{name}: unknown dtype tag {tag}") });
        }
        let rank = r.u32("rank")? as usize;
        let shape = (0..rank).map(|_| r.u64("extent").map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(8).unwrap_or(usize::MAX), "payload")?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        out.insert(name, Tensor::new(shape, data)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Parse { offset: r.pos, detail: "trailing bytes after last tensor".into() });
    }
    Ok(out)
}

pub fn write_tensors(path: &Path, tensors: &BTreeMap<String, Tensor>) -> Result<()> {
    std::fs::write(path, encode_tensors(tensors)).map_err(|e| Error::io(path, e))
}

pub fn read_tensors(path: &Path) -> Result<BTreeMap<String, Tensor>> {
    decode_tensors(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Ordered `key = value` run metadata.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Sidecar(pub BTreeMap<String, String>);

impl Sidecar {
    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.0.insert(key.to_string(), value.to_string());
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.get(key).ok_or_else(|| Error::Config(format!("metadata is missing `{key}`")))?;
        raw.parse().map_err(|_| Error::Config(format!("metadata `{key}` has invalid value `{raw}`")))
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.0 {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("metadata line {}: expected `key = value`", i + 1)))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Sidecar(map))
    }
}

pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Sidecar entries describing a model.
pub fn model_metadata(model: &CoGan, seed: u64) -> Sidecar {
    let c = model.opt_d.config;
    let mut m = Sidecar::default();
    m.set("format", FORMAT_VERSION)
        .set("preset", model.preset.name)
        .set("width_divisor", model.preset.width_divisor)
        .set("k", model.k)
        .set("l", model.l)
        .set("seed", seed)
        .set("iteration", model.iteration)
        .set("lr", c.lr)
        .set("beta1", c.beta1)
        .set("beta2", c.beta2)
        .set("eps", c.eps)
        .set("gen_loss", model.gen_loss.as_str())
        .set("init_std", crate::nn::network::INIT_STD)
        .set("rng", crate::rng::ALGORITHM)
        .set("code_version", env!("CARGO_PKG_VERSION"));
    m
}

fn adam_tensors(out: &mut BTreeMap<String, Tensor>, tag: &str, opt: &Adam, store: &ParamStore) {
    let (t, rows) = opt.state();
    out.insert(format!("adam.{tag}.t"), Tensor::scalar(t as f64));
    for (slot, m, v) in rows {
        let owner = store.owners(slot)[0].to_string();
        out.insert(format!("adam.{tag}.m.{owner}"), m);
        out.insert(format!("adam.{tag}.v.{owner}"), v);
    }
}

pub fn model_tensors(model: &CoGan) -> BTreeMap<String, Tensor> {
    let mut out: BTreeMap<String, Tensor> =
        model.snapshot().into_iter().map(|(k, v)| (format!("param.{k}"), v)).collect();
    for net in model.networks() {
        for (name, t) in net.running_stats() {
            out.insert(format!("stat.{name}"), t);
        }
    }
    adam_tensors(&mut out, "d", &model.opt_d, &model.store);
    adam_tensors(&mut out, "g", &model.opt_g, &model.store);
    out
}

/// Writes the container and its sidecar. `extra` entries are added to the
/// sidecar.
pub fn save_model(path: &Path, model: &CoGan, seed: u64, extra: &Sidecar) -> Result<()> {
    write_tensors(path, &model_tensors(model))?;
    let mut meta = model_metadata(model, seed);
    for (k, v) in &extra.0 {
        meta.set(k, v);
    }
    let side = sidecar_path(path);
    std::fs::write(&side, meta.render()).map_err(|e| Error::io(side, e))
}

fn restore_adam(tensors: &BTreeMap<String, Tensor>, tag: &str, store: &ParamStore, cfg: AdamConfig) -> Result<Adam> {
    let mut opt = Adam::new(cfg);
    let t = tensors.get(&format!("adam.{tag}.t")).map(|t| t.data()[0] as u64).unwrap_or(0);
    let mut rows = Vec::new();
    let prefix = format!("adam.{tag}.m.");
    for (name, m) in tensors.range(prefix.clone()..) {
        let Some(owner) = name.strip_prefix(&prefix) else { break };
        let slot = store
            .slot_of(&ParamId::new(owner))
            .ok_or_else(|| Error::Config(format!("optimizer state for unknown parameter {owner}")))?;
        let v = tensors
            .get(&format!("adam.{tag}.v.{owner}"))
            .ok_or_else(|| Error::Config(format!("missing second moment for {owner}")))?;
        rows.push((slot, m.clone(), v.clone()));
    }
    opt.restore(t, rows);
    Ok(opt)
}

/// Rebuilds a model from a container and sidecar. Tied parameters must
/// agree bitwise in the file.
pub fn load_model(path: &Path) -> Result<(CoGan, Sidecar)> {
    let side = sidecar_path(path);
    let meta = Sidecar::parse(&std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?)?;
    let tensors = read_tensors(path)?;
    let name: PresetName = meta.require::<String>("preset")?.parse()?;
    let preset = ArchPreset::new(name, meta.require("width_divisor")?)?;
    let cfg = AdamConfig {
        lr: meta.require("lr")?,
        beta1: meta.require("beta1")?,
        beta2: meta.require("beta2")?,
        eps: meta.require("eps")?,
    };
    let mut model = build_cogan(&preset, meta.require("k")?, meta.require("l")?, cfg, &mut stream(0, Stream::Init))?;
    let params: BTreeMap<String, Tensor> = tensors
        .iter()
        .filter_map(|(k, v)| k.strip_prefix("param.").map(|id| (id.to_string(), v.clone())))
        .collect();
    if let Some(d) = verify_ties_in(&model.ties, &params).first() {
        return Err(Error::Config(format!(
            "{}: tied parameters {} and {} differ by {}",
            path.display(),
            d.a,
            d.b,
            d.max_abs_diff
        )));
    }
    let ids: Vec<ParamId> = model.store.ids().map(|(id, _)| id.clone()).collect();
    for id in ids {
        let t = params
            .get(id.as_str())
            .ok_or_else(|| Error::Config(format!("{}: missing parameter {id}", path.display())))?;
        model.store.set(&id, t.clone())?;
    }
    for (name, t) in tensors.iter().filter_map(|(k, v)| k.strip_prefix("stat.").map(|n| (n, v))) {
        let mut found = false;
        for net in [&mut model.g1, &mut model.g2, &mut model.f1, &mut model.f2] {
            found |= net.set_running_stat(name, t)?;
        }
        if !found {
            return Err(Error::Config(format!("{}: unknown statistic {name}", path.display())));
        }
    }
    model.opt_d = restore_adam(&tensors, "d", &model.store, cfg)?;
    model.opt_g = restore_adam(&tensors, "g", &model.store, cfg)?;
    model.iteration = meta.require("iteration")?;
    model.gen_loss = meta.get("gen_loss").unwrap_or("minimax").parse()?;
    Ok((model, meta))
}

/// Errors when a checkpoint was written for a different preset.
pub fn expect_preset(meta: &Sidecar, expected: PresetName, path: &Path) -> Result<()> {
    let found = meta.get("preset").unwrap_or("<none>");
    if found != expected.as_str() {
        return Err(Error::Config(format!(
            "checkpoint {} holds preset `{found}` but the configuration asks for `{expected}`",
            path.display()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn container_round_trip_is_exact() {
        let mut m = BTreeMap::new();
        m.insert("a".to_string(), Tensor::new([2, 1], vec![1.5, -0.0]).unwrap());
        m.insert("b".to_string(), Tensor::scalar(f64::MIN_POSITIVE));
        let back = decode_tensors(&encode_tensors(&m)).unwrap();
        assert_eq!(back.len(), 2);
        for (k, v) in &m {
            assert!(back[k].bit_eq(v));
        }
    }

    #[test]
    fn corrupt_containers_are_rejected() {
        let mut m = BTreeMap::new();
        m.insert("w".to_string(), Tensor::zeros([3]));
        let bytes = encode_tensors(&m);
        assert!(decode_tensors(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_tensors(&bad), Err(Error::Parse { offset: 0, .. })));
        let mut long = bytes;
        long.push(0);
        assert!(decode_tensors(&long).is_err());
    }

    #[test]
    fn sidecar_round_trip() {
        let mut s = Sidecar::default();
        s.set("k", 4).set("preset", "digit-conv");
        let back = Sidecar::parse(&s.render()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.require::<usize>("k").unwrap(), 4);
        assert!(back.require::<usize>("l").is_err());
    }
}

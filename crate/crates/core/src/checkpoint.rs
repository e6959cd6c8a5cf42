//! The GBX1 checkpoint container.
//!
//! ```text
//! GBX1\n
//! <header byte length, decimal>\n
//! <JSON header>\n
//! <raw little-endian f64 blocks>
//! ```
//!
//! The header records the architecture, seed, epoch and free-form metadata,
//! then a list of named sections. Each section carries its own metadata and
//! a block manifest of `(name, shape, offset)`; offsets count bytes from the
//! start of the raw data and blocks are stored back to back in manifest
//! order. Sections are `parameters`, then `templates.<i>` and
//! `filter_states.<i>` for every interpretable layer.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::interp::FilterState;
use crate::net::{ArchitectureSpec, Network};
use crate::tensor::Tensor;

pub const MAGIC: &str = "GBX1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub name: String,
    pub meta: Value,
    pub blocks: Vec<BlockEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub architecture: ArchitectureSpec,
    pub seed: u64,
    pub epoch: usize,
    pub meta: Value,
    pub sections: Vec<Section>,
}

/// What a checkpoint says beyond the network itself.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointInfo {
    pub seed: u64,
    pub epoch: usize,
    pub meta: Value,
}

struct Writer {
    data: Vec<u8>,
}

impl Writer {
    fn block(&mut self, name: impl Into<String>, shape: &[usize], values: &[f64]) -> BlockEntry {
        let offset = self.data.len();
        for v in values {
            self.data.extend_from_slice(&v.to_le_bytes());
        }
        BlockEntry {
            name: name.into(),
            shape: shape.to_vec(),
            offset,
        }
    }
}

/// Serializes `net` with its template banks and filter states.
pub fn encode(net: &Network, epoch: usize, meta: Value) -> Vec<u8> {
    let mut w = Writer { data: Vec::new() };
    let mut sections = Vec::new();
    let blocks = net
        .params()
        .iter()
        .zip(net.param_names())
        .map(|(p, name)| w.block(name.clone(), p.shape(), p.data()))
        .collect();
    sections.push(Section {
        name: "parameters".into(),
        meta: json!({ "count": net.params().len() }),
        blocks,
    });
    for (i, layer) in net.interp.iter().enumerate() {
        let b = &layer.bank;
        let n = b.n();
        let neg = vec![b.negative_value(); n * n];
        let blocks = vec![
            w.block("positives", &[n * n, n, n], b.positives_raw()),
            w.block("negative", &[n, n], &neg),
            w.block("prior", &[b.components()], b.prior()),
        ];
        sections.push(Section {
            name: format!("templates.{i}"),
            meta: serde_json::to_value(b.params()).expect("template params serialize"),
            blocks,
        });
        let m = layer.states.len();
        let comps = b.components();
        let log_z: Vec<f64> = layer.states.iter().flat_map(|s| s.log_z().iter().copied()).collect();
        let log_px: Vec<f64> = layer.states.iter().map(FilterState::log_px).collect();
        let blocks = vec![w.block("log_z", &[m, comps], &log_z), w.block("log_px", &[m], &log_px)];
        let states: Vec<Value> = layer
            .states
            .iter()
            .map(|s| {
                json!({
                    "target_category": s.target_category(),
                    "update_count": s.update_count(),
                    "decay": s.decay(),
                })
            })
            .collect();
        sections.push(Section {
            name: format!("filter_states.{i}"),
            meta: json!({ "mask_layer": layer.mask_layer, "filters": states }),
            blocks,
        });
    }
    let header = Header {
        format: MAGIC.into(),
        architecture: net.spec().clone(),
        seed: net.seed(),
        epoch,
        meta,
        sections,
    };
    let text = serde_json::to_string(&header).expect("header serializes");
    let mut out = format!("{MAGIC}\n{}\n{text}\n", text.len()).into_bytes();
    out.extend_from_slice(&w.data);
    out
}

fn bad(detail: impl Into<String>) -> Error {
    Error::format("GBX1 checkpoint", detail)
}

fn read_line(bytes: &[u8], at: usize) -> Result<(&str, usize)> {
    let end = bytes[at..]
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("truncated preamble"))?;
    let line = std::str::from_utf8(&bytes[at..at + end]).map_err(|_| bad("preamble is not UTF-8"))?;
    Ok((line, at + end + 1))
}

/// Splits a checkpoint into its header and raw data region.
pub fn decode_header(bytes: &[u8]) -> Result<(Header, &[u8])> {
    let (magic, at) = read_line(bytes, 0)?;
    if magic != MAGIC {
        return Err(bad(format!("magic {magic:?}, expected {MAGIC:?}")));
    }
    let (len, at) = read_line(bytes, at)?;
    let len: usize = len.parse().map_err(|_| bad(format!("header length {len:?}")))?;
    if bytes.len() < at + len + 1 || bytes[at + len] != b'\n' {
        return Err(bad("header length does not match contents"));
    }
    let header: Header = serde_json::from_slice(&bytes[at..at + len]).map_err(|e| bad(format!("header: {e}")))?;
    if header.format != MAGIC {
        return Err(bad(format!("header format {:?}", header.format)));
    }
    Ok((header, &bytes[at + len + 1..]))
}

fn block_values(data: &[u8], b: &BlockEntry) -> Result<Vec<f64>> {
    let count: usize = b.shape.iter().product();
    let end = b.offset + count * 8;
    if end > data.len() {
        return Err(bad(format!("block {} runs past the end of the data", b.name)));
    }
    Ok(data[b.offset..end]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

fn section<'a>(header: &'a Header, name: &str) -> Result<&'a Section> {
    header
        .sections
        .iter()
        .find(|s| s.name == name)
        .ok_or_else(|| bad(format!("missing section {name}")))
}

fn block<'a>(s: &'a Section, name: &str) -> Result<&'a BlockEntry> {
    s.blocks
        .iter()
        .find(|b| b.name == name)
        .ok_or_else(|| bad(format!("section {} lacks block {name}", s.name)))
}

/// Rebuilds a network from checkpoint bytes.
pub fn decode(bytes: &[u8]) -> Result<(Network, CheckpointInfo)> {
    let (header, data) = decode_header(bytes)?;
    let mut net = Network::new(header.architecture.clone(), header.seed)?;
    let params = section(&header, "parameters")?;
    if params.blocks.len() != net.params().len() {
        return Err(bad(format!(
            "{} parameter blocks, architecture needs {}",
            params.blocks.len(),
            net.params().len()
        )));
    }
    let tensors = params
        .blocks
        .iter()
        .map(|b| Tensor::new(&b.shape, block_values(data, b)?).map_err(|e| bad(format!("{}: {e}", b.name))))
        .collect::<Result<Vec<_>>>()?;
    net.set_params(tensors)?;
    for i in 0..net.interp.len() {
        let t = section(&header, &format!("templates.{i}"))?;
        let stored = block_values(data, block(t, "positives")?)?;
        if stored != net.interp[i].bank.positives_raw() {
            return Err(bad(format!("templates.{i} differ from the architecture's templates")));
        }
        let s = section(&header, &format!("filter_states.{i}"))?;
        let layer = &net.interp[i];
        let (m, comps) = (layer.states.len(), layer.bank.components());
        let log_z = block_values(data, block(s, "log_z")?)?;
        let log_px = block_values(data, block(s, "log_px")?)?;
        let metas = s.meta["filters"].as_array().ok_or_else(|| bad("filter state metadata"))?;
        if log_z.len() != m * comps || log_px.len() != m || metas.len() != m {
            return Err(bad(format!("filter_states.{i} sized for a different layer")));
        }
        let states = (0..m)
            .map(|f| {
                let meta = &metas[f];
                let target = match &meta["target_category"] {
                    Value::Null => None,
                    v => Some(v.as_u64().ok_or_else(|| bad("target category"))? as usize),
                };
                let count = meta["update_count"].as_u64().ok_or_else(|| bad("update count"))?;
                let decay = meta["decay"].as_f64().ok_or_else(|| bad("decay"))?;
                FilterState::from_parts(log_z[f * comps..(f + 1) * comps].to_vec(), log_px[f], target, count, decay)
            })
            .collect::<Result<Vec<_>>>()?;
        net.interp[i].states = states;
    }
    Ok((
        net,
        CheckpointInfo {
            seed: header.seed,
            epoch: header.epoch,
            meta: header.meta,
        },
    ))
}

pub fn save(path: &Path, net: &Network, epoch: usize, meta: Value) -> Result<()> {
    std::fs::write(path, encode(net, epoch, meta)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(Network, CheckpointInfo)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

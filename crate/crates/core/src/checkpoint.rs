//! Versioned text checkpoints: a header line, `meta key=value` lines, then
//! named blocks with their shapes and base-10 values.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{MmmError, Result};
use crate::model::{Ablation, ModelConfig, ModelParams};
use crate::tensor::Tensor;
use crate::train::HyperParams;

pub const CHECKPOINT_MAGIC: &str = "MMMCKPT1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub hyper: HyperParams,
    pub ablation: Ablation,
    pub epoch: usize,
}

fn config_entries(c: &ModelConfig) -> [(&'static str, usize); 4] {
    [
        ("n_dx", c.n_dx),
        ("n_px", c.n_px),
        ("n_drugs", c.n_drugs),
        ("n_substructures", c.n_substructures),
    ]
}

pub fn render_checkpoint(ck: &Checkpoint) -> String {
    let mut s = String::new();
    writeln!(s, "{CHECKPOINT_MAGIC}").unwrap();
    writeln!(s, "meta ablation={}", ck.ablation).unwrap();
    writeln!(s, "meta epoch={}", ck.epoch).unwrap();
    for (k, v) in config_entries(&ck.params.config) {
        writeln!(s, "meta {k}={v}").unwrap();
    }
    for (k, v) in ck.hyper.entries() {
        writeln!(s, "meta {k}={v}").unwrap();
    }
    for (name, _, t) in ck.params.blocks() {
        let shape: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
        writeln!(s, "block {name} {}", shape.join(" ")).unwrap();
        let cols = t.cols().max(1);
        for row in t.data().chunks(cols) {
            let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(s, "{}", vals.join(" ")).unwrap();
        }
    }
    s.push_str("end\n");
    s
}

pub fn parse_checkpoint(text: &str, context: &str) -> Result<Checkpoint> {
    let bad = |m: String| MmmError::format(context, m);
    let mut lines = text.lines().enumerate().peekable();
    match lines.next() {
        Some((_, CHECKPOINT_MAGIC)) => {}
        Some((_, other)) => return Err(bad(format!("expected header {CHECKPOINT_MAGIC}, found {other:?}"))),
        None => return Err(bad("empty checkpoint".into())),
    }
    let mut meta = BTreeMap::new();
    while let Some((_, line)) = lines.peek() {
        let Some(rest) = line.strip_prefix("meta ") else { break };
        let (k, v) = rest
            .split_once('=')
            .ok_or_else(|| bad(format!("malformed meta line {line:?}")))?;
        meta.insert(k.to_string(), v.to_string());
        lines.next();
    }
    let take = |meta: &mut BTreeMap<String, String>, k: &str| {
        meta.remove(k).ok_or_else(|| bad(format!("missing meta {k}")))
    };
    let ablation: Ablation = take(&mut meta, "ablation")?.parse()?;
    let epoch = take(&mut meta, "epoch")?
        .parse()
        .map_err(|_| bad("bad epoch".into()))?;
    let mut dims = [0usize; 4];
    for (slot, key) in dims.iter_mut().zip(["n_dx", "n_px", "n_drugs", "n_substructures"]) {
        *slot = take(&mut meta, key)?
            .parse()
            .map_err(|_| bad(format!("bad {key}")))?;
    }
    let mut hyper = HyperParams::default();
    for (k, v) in &meta {
        hyper.set(k, v).map_err(|e| bad(e.to_string()))?;
    }
    let config = ModelConfig {
        n_dx: dims[0],
        n_px: dims[1],
        n_drugs: dims[2],
        n_substructures: dims[3],
        emb_dim: hyper.emb_dim,
        dim: hyper.dim,
        feat_dim: hyper.feat_dim,
        patch_size: hyper.patch_size,
        channels: hyper.channels,
    };
    let mut params = ModelParams::zeros(config).map_err(|e| bad(e.to_string()))?;
    for (name, _, slot) in params.blocks_mut() {
        let (n, header) = lines
            .next()
            .ok_or_else(|| bad(format!("missing block {name}")))?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("block") || parts.next() != Some(name.as_str()) {
            return Err(bad(format!("line {}: expected block {name}, found {header:?}", n + 1)));
        }
        let shape: Vec<usize> = parts
            .map(|p| p.parse().map_err(|_| bad(format!("line {}: bad shape", n + 1))))
            .collect::<Result<_>>()?;
        if shape != slot.shape() {
            return Err(MmmError::Shape(format!(
                "{context}: block {name} has shape {shape:?}, model expects {:?}",
                slot.shape()
            )));
        }
        let mut data = Vec::with_capacity(slot.len());
        while data.len() < slot.len() {
            let (n, row) = lines
                .next()
                .ok_or_else(|| bad(format!("block {name} is truncated")))?;
            for tok in row.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| bad(format!("line {}: bad value {tok:?}", n + 1)))?;
                if !v.is_finite() {
                    return Err(MmmError::Numeric(format!("{context}: non-finite value in {name}")));
                }
                data.push(v);
            }
        }
        if data.len() != slot.len() {
            return Err(bad(format!("block {name} has {} values, expected {}", data.len(), slot.len())));
        }
        *slot = Tensor::from_vec(&shape, data)?;
    }
    match lines.next() {
        Some((_, "end")) => {}
        _ => return Err(bad("missing end marker".into())),
    }
    if let Some((n, _)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(bad(format!("trailing data at line {}", n + 1)));
    }
    Ok(Checkpoint {
        params,
        hyper,
        ablation,
        epoch,
    })
}

pub fn write_checkpoint(path: impl AsRef<Path>, ck: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| MmmError::io(parent, e))?;
    }
    fs::write(path, render_checkpoint(ck)).map_err(|e| MmmError::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(MmmError::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| MmmError::io(path, e))?;
    parse_checkpoint(&text, &path.display().to_string())
}

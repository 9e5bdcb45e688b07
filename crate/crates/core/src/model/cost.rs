//! Parameter and multiply-accumulate accounting.
//!
//! Conv params are `Cout·(Cin/groups)·kh·kw` (no bias), linear params `O·F+O`,
//! batch norm contributes `2C` affine params plus `2C` running-stat buffers.
//! Conv MACs are `Cout·(Cin/groups)·kh·kw·Hout·Wout`, linear MACs `O·F`;
//! batch norm, ReLU, pooling and shuffles cost nothing.

use serde::Serialize;

use super::graph::ConvBn;
use super::{container_size, Layer, ModelGraph, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayerCost {
    pub name: String,
    /// `conv`, `bn`, `linear`, `maxpool`, `shuffle` or `gap`.
    pub kind: &'static str,
    pub params: u64,
    pub buffers: u64,
    pub macs: u64,
    /// Output `(C, H, W)`.
    pub output: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CostReport {
    pub input_size: usize,
    pub layers: Vec<LayerCost>,
    pub total_params: u64,
    pub total_buffers: u64,
    pub total_macs: u64,
    pub file_size_bytes: u64,
}

impl CostReport {
    pub fn params_millions(&self) -> f64 {
        self.total_params as f64 / 1e6
    }

    pub fn mmacs(&self) -> f64 {
        self.total_macs as f64 / 1e6
    }

    pub fn file_size_mb(&self) -> f64 {
        self.file_size_bytes as f64 / (1024.0 * 1024.0)
    }

    /// Rows whose name starts with `prefix`.
    pub fn rows<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a LayerCost> + 'a {
        self.layers.iter().filter(move |l| l.name.starts_with(prefix))
    }
}

struct Walker {
    rows: Vec<LayerCost>,
}

impl Walker {
    fn unit(&mut self, u: &ConvBn, [c, h, w]: [usize; 3]) -> Result<[usize; 3]> {
        debug_assert_eq!(c, u.spec.in_channels);
        let (oh, ow) = u.spec.output_hw(h, w)?;
        let [o, i, kh, kw] = u.spec.weight_shape();
        let params = (o * i * kh * kw) as u64;
        let out = [o, oh, ow];
        self.rows.push(LayerCost {
            name: format!("{}.conv", u.name),
            kind: "conv",
            params,
            buffers: 0,
            macs: params * (oh * ow) as u64,
            output: out,
        });
        self.rows.push(LayerCost {
            name: format!("{}.bn", u.name),
            kind: "bn",
            params: 2 * o as u64,
            buffers: 2 * o as u64,
            macs: 0,
            output: out,
        });
        Ok(out)
    }

    fn free(&mut self, name: String, kind: &'static str, output: [usize; 3]) {
        self.rows.push(LayerCost {
            name,
            kind,
            params: 0,
            buffers: 0,
            macs: 0,
            output,
        });
    }
}

/// Per-primitive costs for a square `input_size` RGB input.
pub fn count_macs(model: &ModelGraph, input_size: usize) -> Result<CostReport> {
    let mut walker = Walker { rows: Vec::new() };
    let mut shape = [3, input_size, input_size];
    for layer in model.layers() {
        shape = match layer {
            Layer::Stem(u) | Layer::FinalConv(u) => walker.unit(u, shape)?,
            Layer::MaxPool(spec) => {
                let (oh, ow) = spec.output_hw(shape[1], shape[2])?;
                let out = [shape[0], oh, ow];
                walker.free("maxpool".into(), "maxpool", out);
                out
            }
            Layer::Block(b) => {
                let half = match &b.proj {
                    Some([dw, pw]) => {
                        let s = walker.unit(dw, shape)?;
                        walker.unit(pw, s)?
                    }
                    None => [shape[0] / 2, shape[1], shape[2]],
                };
                let main_in = if b.downsample { shape } else { half };
                let mut s = main_in;
                for u in &b.main {
                    s = walker.unit(u, s)?;
                }
                let out = [b.out_channels, s[1], s[2]];
                walker.free(format!("{}.shuffle", b.name), "shuffle", out);
                out
            }
            Layer::GlobalPool => {
                let out = [shape[0], 1, 1];
                walker.free("gap".into(), "gap", out);
                out
            }
            Layer::Linear(l) => {
                let (o, f) = (l.out_features as u64, l.in_features as u64);
                let out = [l.out_features, 1, 1];
                walker.rows.push(LayerCost {
                    name: l.name.clone(),
                    kind: "linear",
                    params: o * f + o,
                    buffers: 0,
                    macs: o * f,
                    output: out,
                });
                out
            }
        };
    }
    let rows = walker.rows;
    Ok(CostReport {
        input_size,
        total_params: rows.iter().map(|r| r.params).sum(),
        total_buffers: rows.iter().map(|r| r.buffers).sum(),
        total_macs: rows.iter().map(|r| r.macs).sum(),
        file_size_bytes: container_size(model),
        layers: rows,
    })
}

/// Costs at the model's configured input size.
pub fn count_params(model: &ModelGraph) -> CostReport {
    profile(model)
}

/// Costs at the model's configured input size.
pub fn profile(model: &ModelGraph) -> CostReport {
    count_macs(model, model.config().input_size).expect("validated graph fits its configured input")
}

//! Checkpoint files.
//!
//! Layout: the magic bytes `SDN1`; a little-endian `u32` byte length followed
//! by that many bytes of UTF-8 header; then every parameter of every stack as
//! little-endian IEEE-754 `f32`, stacks in header order, per layer weights
//! then biases. The header is line oriented:
//!
//! ```text
//! regime=contrastive
//! meta.preset=small
//! stack=descriptor
//! input=1,38,38,18
//! layer=conv3d filters=8 kernel=5,5,5 stride=1,1,1
//! layer=maxpool3d pool=2,2,2
//! layer=dense units=64
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::layer::LayerSpec;
use super::stack::LayerStack;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SDN1";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub regime: String,
    pub meta: Vec<(String, String)>,
    pub stacks: Vec<(String, LayerStack)>,
}

impl Checkpoint {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn stack(&self, name: &str) -> Option<&LayerStack> {
        self.stacks.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }
}

fn join(v: &[usize]) -> String {
    v.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
}

fn spec_line(spec: &LayerSpec) -> String {
    match spec {
        LayerSpec::Conv3d {
            filters,
            kernel,
            stride,
        } => format!(
            "layer=conv3d filters={filters} kernel={} stride={}",
            join(kernel),
            join(stride)
        ),
        LayerSpec::MaxPool3d { pool } => format!("layer=maxpool3d pool={}", join(pool)),
        LayerSpec::Dense { units } => format!("layer=dense units={units}"),
        LayerSpec::Dropout { rate } => format!("layer=dropout rate={rate}"),
        other => format!("layer={}", other.kind()),
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn parse_dims(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|d| {
            d.trim()
                .parse::<usize>()
                .map_err(|_| bad(format!("bad dimension list `{s}`")))
        })
        .collect()
}

fn parse_triple(s: &str) -> Result<[usize; 3]> {
    let v = parse_dims(s)?;
    v.try_into()
        .map_err(|_| bad(format!("expected three dimensions, got `{s}`")))
}

fn parse_spec(line: &str) -> Result<LayerSpec> {
    let mut parts = line.split_whitespace();
    let kind = parts.next().unwrap_or_default();
    let mut args = std::collections::HashMap::new();
    for p in parts {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| bad(format!("bad layer argument `{p}`")))?;
        args.insert(k, v);
    }
    let arg = |k: &str| {
        args.get(k)
            .copied()
            .ok_or_else(|| bad(format!("{kind}: missing `{k}`")))
    };
    Ok(match kind {
        "conv3d" => LayerSpec::Conv3d {
            filters: arg("filters")?.parse().map_err(|_| bad("conv3d: bad filters"))?,
            kernel: parse_triple(arg("kernel")?)?,
            stride: parse_triple(arg("stride")?)?,
        },
        "maxpool3d" => LayerSpec::MaxPool3d {
            pool: parse_triple(arg("pool")?)?,
        },
        "dense" => LayerSpec::Dense {
            units: arg("units")?.parse().map_err(|_| bad("dense: bad units"))?,
        },
        "dropout" => LayerSpec::Dropout {
            rate: arg("rate")?.parse().map_err(|_| bad("dropout: bad rate"))?,
        },
        "relu" => LayerSpec::Relu,
        "sigmoid" => LayerSpec::Sigmoid,
        "softmax" => LayerSpec::Softmax,
        "flatten" => LayerSpec::Flatten,
        other => return Err(bad(format!("unknown layer kind `{other}`"))),
    })
}

pub fn write_checkpoint<W: Write>(mut w: W, ckpt: &Checkpoint) -> Result<()> {
    let mut header = format!("regime={}\n", ckpt.regime);
    for (k, v) in &ckpt.meta {
        if k.contains(['=', '\n']) || v.contains('\n') {
            return Err(bad(format!("metadata `{k}` cannot be encoded")));
        }
        header.push_str(&format!("meta.{k}={v}\n"));
    }
    for (name, stack) in &ckpt.stacks {
        header.push_str(&format!("stack={name}\ninput={}\n", join(stack.input_shape())));
        for l in stack.layers() {
            header.push_str(&spec_line(&l.spec));
            header.push('\n');
        }
    }
    w.write_all(MAGIC)?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(header.as_bytes())?;
    let mut buf = Vec::new();
    for (_, stack) in &ckpt.stacks {
        for v in stack.param_values() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(bad("missing SDN1 magic"));
    }
    let hlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let header = bytes
        .get(8..8 + hlen)
        .ok_or_else(|| bad("header extends past end of file"))?;
    let header = std::str::from_utf8(header).map_err(|_| bad("header is not UTF-8"))?;

    let mut regime = None;
    let mut meta = Vec::new();
    let mut decls: Vec<(String, Vec<usize>, Vec<LayerSpec>)> = Vec::new();
    for line in header.lines().filter(|l| !l.trim().is_empty()) {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("bad header line `{line}`")))?;
        match key {
            "regime" => regime = Some(value.to_string()),
            "stack" => decls.push((value.to_string(), Vec::new(), Vec::new())),
            "input" => {
                let d = decls.last_mut().ok_or_else(|| bad("input before stack"))?;
                d.1 = parse_dims(value)?;
            }
            "layer" => {
                let d = decls.last_mut().ok_or_else(|| bad("layer before stack"))?;
                d.2.push(parse_spec(value)?);
            }
            k if k.starts_with("meta.") => meta.push((k["meta.".len()..].to_string(), value.to_string())),
            other => return Err(bad(format!("unknown header key `{other}`"))),
        }
    }

    let mut stacks = Vec::new();
    for (name, input, specs) in decls {
        let stack = LayerStack::new(&input, specs, 0).map_err(|e| bad(format!("stack `{name}`: {e}")))?;
        stacks.push((name, stack));
    }
    let expected: usize = stacks.iter().map(|(_, s)| s.param_count()).sum();
    let payload = &bytes[8 + hlen..];
    if payload.len() != expected * 4 {
        return Err(bad(format!(
            "parameter payload has {} bytes, declared stacks need {}",
            payload.len(),
            expected * 4
        )));
    }
    let mut values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64);
    for (_, stack) in &mut stacks {
        for layer in stack.layers_mut() {
            for w in layer.weight.iter_mut().chain(layer.bias.iter_mut()) {
                *w = values.next().expect("payload length checked");
            }
        }
    }
    Ok(Checkpoint {
        regime: regime.ok_or_else(|| bad("missing regime"))?,
        meta,
        stacks,
    })
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        write_checkpoint(std::io::BufWriter::new(f), self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_checkpoint(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerSpec as L;

    fn sample() -> Checkpoint {
        let a = LayerStack::new(
            &[1, 6, 6, 4],
            vec![
                L::conv3d(2, 3),
                L::maxpool3d(2),
                L::Relu,
                L::Flatten,
                L::dense(4),
                L::Dropout { rate: 0.25 },
                L::Sigmoid,
            ],
            1,
        )
        .unwrap();
        let b = LayerStack::new(&[4], vec![L::dense(3), L::Softmax], 2).unwrap();
        Checkpoint {
            regime: "group".into(),
            meta: vec![("preset".into(), "small".into()), ("classes".into(), "3,5,9".into())],
            stacks: vec![("descriptor".into(), a), ("head".into(), b)],
        }
    }

    #[test]
    fn round_trip_preserves_structure_and_f32_values() {
        let ck = sample();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &ck).unwrap();
        assert_eq!(&buf[..4], b"SDN1");
        let back = read_checkpoint(&buf[..]).unwrap();
        assert_eq!(back.regime, "group");
        assert_eq!(back.meta("classes"), Some("3,5,9"));
        for ((_, s0), (_, s1)) in ck.stacks.iter().zip(&back.stacks) {
            assert_eq!(s0.specs(), s1.specs());
            for (a, b) in s0.param_values().zip(s1.param_values()) {
                assert_eq!(a as f32, b as f32);
            }
        }
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &sample()).unwrap();
        buf.pop();
        assert!(read_checkpoint(&buf[..]).is_err());
        assert!(read_checkpoint(&b"SDN2\0\0\0\0"[..]).is_err());
    }
}

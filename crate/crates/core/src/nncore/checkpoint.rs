//! Model checkpoint container.
//!
//! Layout: the ASCII line `resmatch-ckpt-v1\n`, a little-endian `u64` byte
//! count, a JSON header of that length (model kind, configuration, layer
//! specs, parameter names and shapes, optional training history), then every
//! parameter value as little-endian `f64` in header order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layers::LayerSpec;
use super::param::ParamSet;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "resmatch-ckpt-v1";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub kind: String,
    pub config: serde_json::Value,
    pub layers: Vec<LayerSpec>,
    pub params: Vec<ParamEntry>,
    #[serde(default)]
    pub history: serde_json::Value,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub values: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn from_params(
        kind: &str,
        config: serde_json::Value,
        layers: Vec<LayerSpec>,
        params: &ParamSet,
        history: serde_json::Value,
    ) -> Self {
        let values: Vec<(String, Tensor)> = params
            .iter()
            .map(|p| {
                let mut t = p.value.clone();
                t.clear_grad();
                (p.name.clone(), t)
            })
            .collect();
        let entries = values
            .iter()
            .map(|(n, t)| ParamEntry {
                name: n.clone(),
                shape: t.shape().to_vec(),
            })
            .collect();
        Checkpoint {
            header: CheckpointHeader {
                kind: kind.into(),
                config,
                layers,
                params: entries,
                history,
            },
            values,
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC.as_bytes())?;
        w.write_all(b"\n")?;
        let header = serde_json::to_vec(&self.header).map_err(|e| Error::Format(e.to_string()))?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        for (_, t) in &self.values {
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = vec![0u8; CHECKPOINT_MAGIC.len() + 1];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Format("truncated checkpoint".into()))?;
        if &magic[..CHECKPOINT_MAGIC.len()] != CHECKPOINT_MAGIC.as_bytes() || magic[magic.len() - 1] != b'\n' {
            return Err(Error::Format("not a resmatch-ckpt-v1 checkpoint".into()));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        if len > 1 << 30 {
            return Err(Error::Format("implausible header length".into()));
        }
        let mut header = vec![0u8; len];
        r.read_exact(&mut header)?;
        let header: CheckpointHeader = serde_json::from_slice(&header).map_err(|e| Error::Format(e.to_string()))?;
        let mut values = Vec::with_capacity(header.params.len());
        for p in &header.params {
            let n: usize = p.shape.iter().product();
            let mut buf = vec![0u8; n * 8];
            r.read_exact(&mut buf)
                .map_err(|_| Error::Format(format!("truncated data for {}", p.name)))?;
            let data = buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            values.push((p.name.clone(), Tensor::new(p.shape.clone(), data)?));
        }
        Ok(Checkpoint { header, values })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.header.kind != kind {
            return Err(Error::Format(format!(
                "expected a {kind} checkpoint, found {}",
                self.header.kind
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_bits() {
        let mut set = ParamSet::new();
        set.add(
            "a",
            Tensor::new(vec![2, 2], vec![1.0, -0.0, f64::MIN_POSITIVE, 3.5]).unwrap(),
        );
        set.add_lambda("lambda");
        let ck = Checkpoint::from_params(
            "test",
            serde_json::json!({"x": 1}),
            vec![LayerSpec::Relu],
            &set,
            serde_json::Value::Null,
        );
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        assert!(buf.starts_with(b"resmatch-ckpt-v1\n"));
        let back = Checkpoint::read_from(buf.as_slice()).unwrap();
        assert_eq!(back.header.kind, "test");
        for ((n1, t1), (n2, t2)) in ck.values.iter().zip(&back.values) {
            assert_eq!(n1, n2);
            let b1: Vec<u64> = t1.data().iter().map(|v| v.to_bits()).collect();
            let b2: Vec<u64> = t2.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(b1, b2);
        }
    }

    #[test]
    fn rejects_foreign_files() {
        assert!(matches!(Checkpoint::read_from(&b"PNG....."[..]), Err(Error::Format(_))));
    }
}

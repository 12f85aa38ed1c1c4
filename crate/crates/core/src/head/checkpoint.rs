use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::params::{HeadParams, FIELD_NAMES};
use crate::error::{Error, Result};
use crate::tensor::{read_tensor_from, write_tensor_to, Tensor};

/// Archive magic. The body is a `u32` record count followed by records of
/// `u16` name length, UTF-8 name and one embedded tensor container.
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SPCKPT01";

/// Parameters plus optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: HeadParams,
    pub velocity: HeadParams,
    pub step: u64,
}

impl TrainState {
    pub fn new(params: HeadParams) -> Self {
        let velocity = params.zeros_like();
        Self {
            params,
            velocity,
            step: 0,
        }
    }

    fn records(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::with_capacity(15);
        for (prefix, p) in [("", &self.params), ("velocity.", &self.velocity)] {
            for ((name, data), shape) in FIELD_NAMES.iter().zip(p.fields()).zip(p.field_shapes()) {
                let t = Tensor::new(shape, data.to_vec()).expect("field shapes are consistent");
                out.push((format!("{prefix}{name}"), t));
            }
        }
        out.push(("step".into(), Tensor::vector(vec![self.step as f64])));
        out
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let records = self.records();
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&(records.len() as u32).to_le_bytes())?;
        for (name, t) in &records {
            w.write_all(&(name.len() as u16).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            write_tensor_to(w, t)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        read_exact(r, &mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::BadMagic {
                expected: String::from_utf8_lossy(CHECKPOINT_MAGIC).into_owned(),
                found: magic.to_vec(),
            });
        }
        let mut b4 = [0u8; 4];
        read_exact(r, &mut b4)?;
        let count = u32::from_le_bytes(b4);
        let mut records = std::collections::BTreeMap::new();
        for _ in 0..count {
            let mut b2 = [0u8; 2];
            read_exact(r, &mut b2)?;
            let mut name = vec![0u8; u16::from_le_bytes(b2) as usize];
            read_exact(r, &mut name)?;
            let name = String::from_utf8(name)
                .map_err(|_| Error::Format("record name is not UTF-8".into()))?;
            let t = read_tensor_from(r)?;
            records.insert(name, t);
        }
        let mut take = |name: &str| {
            records
                .remove(name)
                .ok_or_else(|| Error::Format(format!("checkpoint lacks record {name}")))
        };
        let mut load = |prefix: &str| -> Result<HeadParams> {
            let mut fields = Vec::with_capacity(7);
            for name in FIELD_NAMES {
                fields.push(take(&format!("{prefix}{name}"))?);
            }
            HeadParams::from_fields(fields.try_into().expect("seven fields"))
        };
        let params = load("")?;
        let velocity = load("velocity.")?;
        let step_t = take("step")?;
        let step = match step_t.data() {
            [s] if *s >= 0.0 && s.fract() == 0.0 => *s as u64,
            _ => return Err(Error::Format("bad step record".into())),
        };
        if velocity.field_shapes() != params.field_shapes() {
            return Err(Error::Format(
                "velocity shapes differ from parameters".into(),
            ));
        }
        Ok(Self {
            params,
            velocity,
            step,
        })
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Truncated {
            needed: buf.len(),
            found: 0,
        },
        _ => Error::Stream(e),
    })
}

pub fn save_checkpoint(path: impl AsRef<Path>, state: &TrainState) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    state.write_to(&mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TrainState> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    TrainState::read_from(&mut BufReader::new(file))
}

//! Binary checkpoint format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic            4 bytes  "ZSAQ"
//! version          u16      currently 1
//! config hash      32 bytes SHA-256 of the producing configuration
//! net count        u32
//! per net:
//!   name length    u32      then that many UTF-8 bytes
//!   shape count    u32
//!   per shape:     rank u32, then rank × u64 dims
//!   value count    u64      then that many f64 weights
//! student flag     u8       0 = none, 1 = quantized student record follows
//! if student:
//!   bits           u8
//!   scale          f64
//!   grain          f64      must equal scale for this scheme
//!   code count     u64      then that many i32 codes
//! ```
//!
//! Structural damage (bad magic, unknown version, truncation, trailing
//! bytes, inconsistent counts) reads as an I/O failure; semantic
//! disagreements with the present run (config hash, architecture) are the
//! caller's to diagnose, so loading only reports them.

use std::path::Path;

use zsaq_core::{ParamVector, QuantScheme, QuantizedVector};

use crate::error::{CliError, Result};

pub const MAGIC: [u8; 4] = *b"ZSAQ";
pub const VERSION: u16 = 1;

/// One named parameter block: a flat weight vector plus its layer shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct NetRecord {
    pub name: String,
    pub shapes: Vec<Vec<usize>>,
    pub params: ParamVector<f64>,
}

impl NetRecord {
    pub fn new(name: impl Into<String>, shapes: Vec<Vec<usize>>, params: ParamVector<f64>) -> Self {
        NetRecord { name: name.into(), shapes, params }
    }
}

/// The quantized student codes with their scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentRecord {
    pub quant: QuantizedVector<f64>,
}

/// Everything one checkpoint file carries.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_hash: [u8; 32],
    pub nets: Vec<NetRecord>,
    pub student: Option<StudentRecord>,
}

impl Checkpoint {
    /// The named net, if present.
    pub fn net(&self, name: &str) -> Option<&NetRecord> {
        self.nets.iter().find(|n| n.name == name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.config_hash);
        out.extend_from_slice(&(self.nets.len() as u32).to_le_bytes());
        for net in &self.nets {
            out.extend_from_slice(&(net.name.len() as u32).to_le_bytes());
            out.extend_from_slice(net.name.as_bytes());
            out.extend_from_slice(&(net.shapes.len() as u32).to_le_bytes());
            for shape in &net.shapes {
                out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
                for &dim in shape {
                    out.extend_from_slice(&(dim as u64).to_le_bytes());
                }
            }
            let values = net.params.as_slice();
            out.extend_from_slice(&(values.len() as u64).to_le_bytes());
            for &v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        match &self.student {
            None => out.push(0),
            Some(st) => {
                out.push(1);
                out.push(st.quant.scheme.bits());
                out.extend_from_slice(&st.quant.scheme.scale().to_le_bytes());
                out.extend_from_slice(&st.quant.scheme.grain().to_le_bytes());
                out.extend_from_slice(&(st.quant.codes.len() as u64).to_le_bytes());
                for &c in &st.quant.codes {
                    out.extend_from_slice(&c.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(CliError::Io("bad magic: not a checkpoint file".into()));
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(CliError::Io(format!(
                "unsupported checkpoint version {version} (this build reads {VERSION})"
            )));
        }
        let mut config_hash = [0u8; 32];
        config_hash.copy_from_slice(r.take(32)?);

        let net_count = r.u32()? as usize;
        if net_count > 1024 {
            return Err(CliError::Io(format!("implausible net count {net_count}")));
        }
        let mut nets = Vec::with_capacity(net_count);
        for _ in 0..net_count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| CliError::Io("net name is not UTF-8".into()))?
                .to_string();
            let shape_count = r.u32()? as usize;
            let mut shapes = Vec::with_capacity(shape_count);
            let mut expect = 0usize;
            for _ in 0..shape_count {
                let rank = r.u32()? as usize;
                let mut shape = Vec::with_capacity(rank);
                for _ in 0..rank {
                    shape.push(r.u64()? as usize);
                }
                expect += shape.iter().product::<usize>();
                shapes.push(shape);
            }
            let count = r.u64()? as usize;
            if count != expect {
                return Err(CliError::Io(format!(
                    "net \"{name}\" stores {count} values but its shapes hold {expect}"
                )));
            }
            let mut values = Vec::with_capacity(count);
            for _ in 0..count {
                values.push(r.f64()?);
            }
            nets.push(NetRecord { name, shapes, params: ParamVector::new(values) });
        }

        let student = match r.u8()? {
            0 => None,
            1 => {
                let bits = r.u8()?;
                let scale = r.f64()?;
                let grain = r.f64()?;
                if grain != scale {
                    return Err(CliError::Io(format!(
                        "student grain {grain} disagrees with scale {scale}"
                    )));
                }
                let scheme = QuantScheme::new(bits, scale)
                    .map_err(|e| CliError::Io(format!("student scheme: {e}")))?;
                let count = r.u64()? as usize;
                let mut codes = Vec::with_capacity(count);
                for _ in 0..count {
                    codes.push(r.i32()?);
                }
                Some(StudentRecord { quant: QuantizedVector { codes, scheme } })
            }
            flag => {
                return Err(CliError::Io(format!("student flag must be 0 or 1, got {flag}")))
            }
        };

        if r.pos != bytes.len() {
            return Err(CliError::Io(format!(
                "trailing bytes: {} past the end of the checkpoint",
                bytes.len() - r.pos
            )));
        }
        Ok(Checkpoint { config_hash, nets, student })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())
            .map_err(|e| CliError::io(format!("writing checkpoint {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::io(format!("reading checkpoint {}", path.display()), e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            CliError::Io(msg) => CliError::Io(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

/// Forward-only cursor; every read checks the remaining length.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(CliError::Io("truncated checkpoint".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let quant = QuantizedVector {
            codes: vec![-3, 0, 7, 1],
            scheme: QuantScheme::new(4, 0.25).unwrap(),
        };
        Checkpoint {
            config_hash: [7u8; 32],
            nets: vec![
                NetRecord::new(
                    "teacher",
                    vec![vec![2, 3], vec![3]],
                    ParamVector::new(vec![0.5, -1.25, 3.0, 0.0, 9.5, -2.0, 1.0, 2.0, 3.0]),
                ),
                NetRecord::new("gen", vec![vec![2]], ParamVector::new(vec![f64::MIN, f64::MAX])),
            ],
            student: Some(StudentRecord { quant }),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn corruption_modes_are_distinguished() {
        let bytes = sample().to_bytes();

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        let err = Checkpoint::from_bytes(&bad_magic).unwrap_err();
        assert!(err.to_string().contains("bad magic"), "{err}");

        let mut bad_version = bytes.clone();
        bad_version[4] = 99;
        let err = Checkpoint::from_bytes(&bad_version).unwrap_err();
        assert!(err.to_string().contains("unsupported checkpoint version"), "{err}");

        let err = Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");

        let mut trailing = bytes.clone();
        trailing.push(0);
        let err = Checkpoint::from_bytes(&trailing).unwrap_err();
        assert!(err.to_string().contains("trailing"), "{err}");
    }

    #[test]
    fn all_corruption_errors_exit_with_the_io_status() {
        let bytes = sample().to_bytes();
        for mutate in [
            Box::new(|b: &mut Vec<u8>| b[0] = 0) as Box<dyn Fn(&mut Vec<u8>)>,
            Box::new(|b: &mut Vec<u8>| b[4] = 2),
            Box::new(|b: &mut Vec<u8>| {
                b.truncate(10);
            }),
        ] {
            let mut b = bytes.clone();
            mutate(&mut b);
            let err = Checkpoint::from_bytes(&b).unwrap_err();
            assert_eq!(err.exit_code(), 4);
        }
    }
}

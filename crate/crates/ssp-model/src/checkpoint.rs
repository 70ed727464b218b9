//! Checkpoint serialization, format `SSPC1`.
//!
//! Layout of a checkpoint file, all integers little-endian u64 unless noted:
//!
//! ```text
//! magic                b"SSPC1" (5 bytes)
//! config length        u64, then that many bytes of UTF-8 key=value lines
//! extras length        u64, then that many bytes of UTF-8 key=value lines
//! tensor count         u64
//! per tensor:
//!   name length        u64, then that many bytes of UTF-8
//!   complex flag       u8 (0 real, 1 complex)
//!   rank               u64
//!   dims               rank × u64
//!   values             product(dims) f64 (×2 when complex, re then im
//!                      interleaved per entry), little-endian
//! ```
//!
//! Parameter tensors are stored under their canonical slot names in the
//! canonical walk order (see [`crate::params::Layout`]); other tensors (for
//! example optimizer moments) may follow under caller-chosen names, and the
//! parameter loader ignores them.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ssp_core::{Error, Result};

use crate::config::ModelConfig;
use crate::params::{ParamSet, SlotMut, SlotRef};

/// File magic including the format version.
pub const MAGIC: &[u8; 5] = b"SSPC1";

/// One named tensor in a checkpoint. `dims` are the logical dimensions; for
/// complex tensors `data` holds interleaved real/imaginary pairs, so its
/// length is twice the element count.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorEntry {
    pub name: String,
    pub dims: Vec<usize>,
    pub complex: bool,
    pub data: Vec<f64>,
}

impl TensorEntry {
    fn element_count(&self) -> usize {
        self.dims.iter().product()
    }

    fn expected_len(&self) -> usize {
        self.element_count() * if self.complex { 2 } else { 1 }
    }
}

/// Everything a checkpoint holds: the model configuration, free-form
/// key=value extras (epoch counters and the like), and named tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointData {
    pub config: ModelConfig,
    pub extras: Vec<(String, String)>,
    pub tensors: Vec<TensorEntry>,
}

impl CheckpointData {
    /// Looks up one extras value.
    pub fn extra(&self, key: &str) -> Option<&str> {
        self.extras.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Looks up one tensor by name.
    pub fn tensor(&self, name: &str) -> Option<&TensorEntry> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

/// Flattens a parameter set into named tensors in the canonical walk order.
pub fn params_to_tensors(params: &ParamSet) -> Vec<TensorEntry> {
    let mut out = Vec::new();
    params.for_each_slot(&mut |name, shape, slot| {
        let (complex, data) = match slot {
            SlotRef::Real(vals) => (false, vals.to_vec()),
            SlotRef::Cplx(vals) => {
                let mut flat = Vec::with_capacity(vals.len() * 2);
                for v in vals {
                    flat.push(v.re);
                    flat.push(v.im);
                }
                (true, flat)
            }
        };
        out.push(TensorEntry { name, dims: shape, complex, data });
    });
    out
}

/// Rebuilds a parameter set from checkpoint tensors, validating every slot's
/// presence, flavor, and shape against the configuration. Tensors with names
/// that are not parameter slots are ignored.
pub fn tensors_to_params(config: &ModelConfig, tensors: &[TensorEntry]) -> Result<ParamSet> {
    let mut params = ParamSet::zeros(config)?;
    let mut missing = Vec::new();
    params.for_each_slot_mut(&mut |name, shape, slot| {
        let Some(entry) = tensors.iter().find(|t| t.name == name) else {
            missing.push(format!("missing tensor {name:?}"));
            return;
        };
        if entry.dims != shape {
            missing.push(format!(
                "tensor {name:?} has shape {:?}, the configuration requires {:?}",
                entry.dims, shape
            ));
            return;
        }
        match slot {
            SlotMut::Real(vals) => {
                if entry.complex || entry.data.len() != vals.len() {
                    missing.push(format!("tensor {name:?} is not a real tensor of the right size"));
                    return;
                }
                vals.copy_from_slice(&entry.data);
            }
            SlotMut::Cplx(vals) => {
                if !entry.complex || entry.data.len() != vals.len() * 2 {
                    missing.push(format!(
                        "tensor {name:?} is not a complex tensor of the right size"
                    ));
                    return;
                }
                for (v, pair) in vals.iter_mut().zip(entry.data.chunks_exact(2)) {
                    v.re = pair[0];
                    v.im = pair[1];
                }
            }
        }
    });
    if let Some(first) = missing.first() {
        return Err(Error::format(format!(
            "checkpoint does not match the configuration: {first} ({} problem(s) total)",
            missing.len()
        )));
    }
    Ok(params)
}

fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_text(w: &mut impl Write, text: &str) -> Result<()> {
    write_u64(w, text.len() as u64)?;
    w.write_all(text.as_bytes())?;
    Ok(())
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)
        .map_err(|_| Error::format("checkpoint truncated while reading a length".to_owned()))?;
    Ok(u64::from_le_bytes(buf))
}

fn read_text(r: &mut impl Read, what: &str) -> Result<String> {
    let len = read_u64(r)? as usize;
    if len > 1 << 30 {
        return Err(Error::format(format!("{what} block length {len} is implausible")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)
        .map_err(|_| Error::format(format!("checkpoint truncated inside the {what} block")))?;
    String::from_utf8(buf).map_err(|_| Error::format(format!("{what} block is not UTF-8")))
}

/// Writes a checkpoint file.
pub fn write_checkpoint(path: &Path, data: &CheckpointData) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    write_text(&mut w, &data.config.to_metadata())?;
    let extras: String = data
        .extras
        .iter()
        .map(|(k, v)| format!("{k}={v}\n"))
        .collect();
    write_text(&mut w, &extras)?;
    write_u64(&mut w, data.tensors.len() as u64)?;
    for t in &data.tensors {
        if t.data.len() != t.expected_len() {
            return Err(Error::config(format!(
                "tensor {:?} carries {} values but its dims {:?} require {}",
                t.name,
                t.data.len(),
                t.dims,
                t.expected_len()
            )));
        }
        write_text(&mut w, &t.name)?;
        w.write_all(&[u8::from(t.complex)])?;
        write_u64(&mut w, t.dims.len() as u64)?;
        for &d in &t.dims {
            write_u64(&mut w, d as u64)?;
        }
        for &v in &t.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint file, validating the magic and internal structure.
pub fn read_checkpoint(path: &Path) -> Result<CheckpointData> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)
        .map_err(|_| Error::format("file is too short to be a checkpoint".to_owned()))?;
    if &magic != MAGIC {
        return Err(Error::format(format!(
            "bad checkpoint magic {magic:?}, expected {MAGIC:?}"
        )));
    }
    let config = ModelConfig::from_metadata(&read_text(&mut r, "configuration")?)?;
    let extras_text = read_text(&mut r, "extras")?;
    let extras = extras_text
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_owned(), v.to_owned()))
        .collect();
    let count = read_u64(&mut r)? as usize;
    if count > 1 << 20 {
        return Err(Error::format(format!("tensor count {count} is implausible")));
    }
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name = read_text(&mut r, "tensor name")?;
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)
            .map_err(|_| Error::format(format!("checkpoint truncated at tensor {name:?}")))?;
        let complex = match flag[0] {
            0 => false,
            1 => true,
            other => {
                return Err(Error::format(format!(
                    "tensor {name:?} has invalid flavor byte {other}"
                )))
            }
        };
        let rank = read_u64(&mut r)? as usize;
        if rank > 8 {
            return Err(Error::format(format!("tensor {name:?} rank {rank} is implausible")));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(read_u64(&mut r)? as usize);
        }
        let entry_shell = TensorEntry { name, dims, complex, data: Vec::new() };
        let len = entry_shell.expected_len();
        if len > 1 << 28 {
            return Err(Error::format(format!(
                "tensor {:?} would hold {len} values, which is implausible",
                entry_shell.name
            )));
        }
        let mut data = Vec::with_capacity(len);
        let mut buf = [0u8; 8];
        for _ in 0..len {
            r.read_exact(&mut buf).map_err(|_| {
                Error::format(format!(
                    "checkpoint truncated inside tensor {:?}",
                    entry_shell.name
                ))
            })?;
            data.push(f64::from_le_bytes(buf));
        }
        tensors.push(TensorEntry { data, ..entry_shell });
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).unwrap_or(0) != 0 {
        return Err(Error::format("checkpoint has trailing bytes after the last tensor".to_owned()));
    }
    Ok(CheckpointData { config, extras, tensors })
}

/// Convenience: writes configuration, extras, and the parameter tensors.
pub fn save_params(
    path: &Path,
    config: &ModelConfig,
    extras: &[(String, String)],
    params: &ParamSet,
    extra_tensors: &[TensorEntry],
) -> Result<()> {
    let mut tensors = params_to_tensors(params);
    tensors.extend_from_slice(extra_tensors);
    write_checkpoint(
        path,
        &CheckpointData { config: config.clone(), extras: extras.to_vec(), tensors },
    )
}

/// Convenience: reads a checkpoint and rebuilds the parameters it holds.
pub fn load_params(path: &Path) -> Result<(CheckpointData, ParamSet)> {
    let data = read_checkpoint(path)?;
    let params = tensors_to_params(&data.config, &data.tensors)?;
    Ok((data, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{BackboneMode, EncoderKind, ModelConfig};

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("ssp-checkpoint-tests");
        std::fs::create_dir_all(&dir).expect("temp dir is writable");
        dir.join(name)
    }

    fn bitwise_equal(a: &ParamSet, b: &ParamSet) -> bool {
        let (fa, fb) = (a.to_flat(), b.to_flat());
        fa.len() == fb.len()
            && fa.iter().zip(fb.iter()).all(|(x, y)| x.to_bits() == y.to_bits())
    }

    #[test]
    fn round_trip_preserves_everything_bitwise() {
        for (idx, config) in [
            ModelConfig::default(),
            ModelConfig { r: 2, encoder: EncoderKind::TimeToChannel, ..ModelConfig::default() },
            ModelConfig { backbone: BackboneMode::Identity, ..ModelConfig::default() },
        ]
        .into_iter()
        .enumerate()
        {
            let params = ParamSet::init(&config, 100 + idx as u64).unwrap();
            let extras = vec![
                ("epoch".to_owned(), "7".to_owned()),
                ("step".to_owned(), "1234".to_owned()),
            ];
            let moments = TensorEntry {
                name: "adam.step".to_owned(),
                dims: vec![1],
                complex: false,
                data: vec![42.0],
            };
            let path = tmp(&format!("roundtrip-{idx}.sspc"));
            save_params(&path, &config, &extras, &params, std::slice::from_ref(&moments))
                .unwrap();
            let (data, loaded) = load_params(&path).unwrap();
            assert_eq!(data.config, config, "configuration must survive the round trip");
            assert_eq!(data.extra("epoch"), Some("7"));
            assert_eq!(data.extra("step"), Some("1234"));
            assert_eq!(data.tensor("adam.step"), Some(&moments));
            assert!(bitwise_equal(&params, &loaded), "weights must survive bitwise");
        }
    }

    #[test]
    fn tensor_order_matches_the_canonical_layout() {
        let config = ModelConfig::default();
        let params = ParamSet::init(&config, 103).unwrap();
        let tensors = params_to_tensors(&params);
        let layout = crate::params::Layout::of(&config).unwrap();
        let names: Vec<&str> = tensors.iter().map(|t| t.name.as_str()).collect();
        let expect: Vec<&str> = layout.slots.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, expect, "checkpoint tensor order must follow the layout");
    }

    #[test]
    fn bad_magic_and_truncation_are_format_errors() {
        let config = ModelConfig::default();
        let params = ParamSet::init(&config, 104).unwrap();
        let path = tmp("corrupt.sspc");
        save_params(&path, &config, &[], &params, &[]).unwrap();

        let bytes = std::fs::read(&path).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        std::fs::write(&path, &bad).unwrap();
        let err = read_checkpoint(&path).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "bad magic must be a format error, got {err}");

        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        let err = read_checkpoint(&path).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "truncation must be a format error, got {err}");

        std::fs::write(&path, [bytes.clone(), vec![0u8; 3]].concat()).unwrap();
        let err = read_checkpoint(&path).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "trailing bytes must fail, got {err}");
    }

    #[test]
    fn loading_against_a_different_configuration_fails() {
        let config = ModelConfig::default();
        let params = ParamSet::init(&config, 105).unwrap();
        let tensors = params_to_tensors(&params);
        let other = ModelConfig { c_s: config.c_s * 2, ..config };
        let err = tensors_to_params(&other, &tensors).unwrap_err();
        assert!(
            matches!(err, Error::Format(_)),
            "shape mismatch must be a format error, got {err}"
        );
    }

    #[test]
    fn missing_tensors_are_reported_by_name() {
        let config = ModelConfig::default();
        let params = ParamSet::init(&config, 106).unwrap();
        let mut tensors = params_to_tensors(&params);
        tensors.retain(|t| t.name != "prop.kbar");
        let err = tensors_to_params(&config, &tensors).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("prop.kbar"),
            "the error should name the missing tensor, got: {msg}"
        );
    }
}

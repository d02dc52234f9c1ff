//! Checkpoint archive: named `f64` tensors with shape headers in one binary
//! file, plus a JSON sidecar (`<path>.json`) carrying hyperparameters, the
//! epoch counter, and a config hash. The sidecar is versioned with
//! `"schema": 1`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{ArrayD, IxDyn};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FDT1";
pub const SCHEMA_VERSION: u64 = 1;

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".json");
    PathBuf::from(os)
}

pub fn save(
    path: &Path,
    tensors: &[(String, ArrayD<f64>)],
    mut sidecar: serde_json::Value,
) -> Result<()> {
    let f = File::create(path)?;
    let mut w = BufWriter::new(f);
    w.write_all(MAGIC)?;
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, t) in tensors {
        let nb = name.as_bytes();
        w.write_all(&(nb.len() as u32).to_le_bytes())?;
        w.write_all(nb)?;
        w.write_all(&(t.ndim() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in t.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;

    if let Some(obj) = sidecar.as_object_mut() {
        obj.insert("schema".into(), serde_json::json!(SCHEMA_VERSION));
    } else {
        return Err(Error::config("checkpoint sidecar must be a JSON object"));
    }
    std::fs::write(
        sidecar_path(path),
        serde_json::to_string_pretty(&sidecar).expect("sidecar serialization"),
    )?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(HashMap<String, ArrayD<f64>>, serde_json::Value)> {
    let f = File::open(path).map_err(|e| {
        Error::data(format!("cannot open checkpoint {}: {e}", path.display()))
    })?;
    let mut r = BufReader::new(f);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::format("checkpoint truncated before magic"))?;
    if &magic != MAGIC {
        return Err(Error::format("bad checkpoint magic"));
    }
    let count = read_u32(&mut r)? as usize;
    let mut tensors = HashMap::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let mut nb = vec![0u8; name_len];
        r.read_exact(&mut nb)
            .map_err(|_| Error::format("checkpoint truncated in tensor name"))?;
        let name = String::from_utf8(nb)
            .map_err(|_| Error::format("checkpoint tensor name is not utf-8"))?;
        let ndim = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(read_u64(&mut r)? as usize);
        }
        let n: usize = shape.iter().product();
        let mut vals = Vec::with_capacity(n);
        let mut buf = [0u8; 8];
        for _ in 0..n {
            r.read_exact(&mut buf)
                .map_err(|_| Error::format("checkpoint truncated in tensor data"))?;
            vals.push(f64::from_le_bytes(buf));
        }
        tensors.insert(name, ArrayD::from_shape_vec(IxDyn(&shape), vals).unwrap());
    }

    let sc_path = sidecar_path(path);
    let sidecar: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(&sc_path).map_err(|e| {
            Error::data(format!("cannot read sidecar {}: {e}", sc_path.display()))
        })?,
    )
    .map_err(|e| Error::format(format!("sidecar is not valid JSON: {e}")))?;
    let schema = sidecar.get("schema").and_then(|v| v.as_u64());
    if schema != Some(SCHEMA_VERSION) {
        return Err(Error::format(format!(
            "unsupported checkpoint schema {schema:?}"
        )));
    }
    Ok((tensors, sidecar))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::format("checkpoint truncated"))?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)
        .map_err(|_| Error::format("checkpoint truncated"))?;
    Ok(u64::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let tensors = vec![
            (
                "a/w".to_string(),
                ArrayD::from_shape_vec(IxDyn(&[2, 3]), vec![1.0, 2.0, 3.0, -4.5, 0.0, 1e-9])
                    .unwrap(),
            ),
            ("b".to_string(), ArrayD::from_elem(IxDyn(&[1]), 7.0)),
        ];
        save(&path, &tensors, serde_json::json!({"epoch": 3})).unwrap();
        let (loaded, sidecar) = load(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded["a/w"], tensors[0].1);
        assert_eq!(sidecar["epoch"], 3);
        assert_eq!(sidecar["schema"], 1);
    }

    #[test]
    fn bad_magic_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        std::fs::write(&path, b"nope").unwrap();
        assert!(matches!(load(&path), Err(Error::Format(_))));
    }
}

//! Single-file dataset archive.
//!
//! Layout: the 8-byte magic `WDMPAIRS`, a little-endian `u64` header length,
//! the JSON [`CacheHeader`], then `x` and `y` as little-endian `f32` and `z`
//! as little-endian `u32`, all row-major.

use super::{DatasetSpec, PairDataset};
use crate::error::{Error, Result};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"WDMPAIRS";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheHeader {
    pub format_version: u32,
    pub spec: DatasetSpec,
    pub seed: u64,
    pub mi_certificate: f64,
    pub n_samples: usize,
    pub image_shape: [usize; 3],
    pub factor_cardinalities: Vec<usize>,
}

pub fn save_dataset(path: impl AsRef<Path>, spec: &DatasetSpec, data: &PairDataset) -> Result<()> {
    data.validate()?;
    let header = CacheHeader {
        format_version: FORMAT_VERSION,
        spec: spec.clone(),
        seed: spec.seed(),
        mi_certificate: data.mi_certificate,
        n_samples: data.len(),
        image_shape: data.image_shape,
        factor_cardinalities: data.factor_cardinalities.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for v in data.x.iter().chain(data.y.iter()) {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in data.z.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<(CacheHeader, PairDataset)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a dataset archive".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let header: CacheHeader = serde_json::from_slice(&json)?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format_version {}", header.format_version)));
    }
    let n = header.n_samples;
    let dim: usize = header.image_shape.iter().product();
    let k = header.factor_cardinalities.len();
    let mut buf = [0u8; 4];
    let mut read_f32 = |count: usize, r: &mut BufReader<File>| -> Result<Vec<f32>> {
        (0..count)
            .map(|_| {
                r.read_exact(&mut buf)?;
                Ok(f32::from_le_bytes(buf))
            })
            .collect()
    };
    let x = read_f32(n * dim, &mut r)?;
    let y = read_f32(n * dim, &mut r)?;
    let mut z = Vec::with_capacity(n * k);
    let mut b = [0u8; 4];
    for _ in 0..n * k {
        r.read_exact(&mut b)?;
        z.push(u32::from_le_bytes(b));
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes", rest.len())));
    }
    let shape_err = |e: ndarray::ShapeError| Error::Format(e.to_string());
    let data = PairDataset {
        x: Array2::from_shape_vec((n, dim), x).map_err(shape_err)?,
        y: Array2::from_shape_vec((n, dim), y).map_err(shape_err)?,
        z: Array2::from_shape_vec((n, k), z).map_err(shape_err)?,
        image_shape: header.image_shape,
        mi_certificate: header.mi_certificate,
        factor_cardinalities: header.factor_cardinalities.clone(),
    };
    data.validate()?;
    Ok((header, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::GlyphDatasetSpec;

    #[test]
    fn archive_round_trip() {
        let spec = DatasetSpec::Glyph(GlyphDatasetSpec::stacked(vec![5, 7], 6, 8, 3).with_jitter(0.05));
        let data = spec.generate().unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("d.wdm");
        save_dataset(&path, &spec, &data).unwrap();
        let (header, back) = load_dataset(&path).unwrap();
        assert_eq!(back, data);
        assert_eq!(header.spec, spec);
        assert_eq!(header.format_version, 1);
    }

    #[test]
    fn rejects_foreign_files() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("junk");
        std::fs::write(&path, b"not a dataset at all").unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::Format(_))));
    }
}

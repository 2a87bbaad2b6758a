//! On-disk dataset format.
//!
//! One directory per volume (`vol_000`, `vol_001`, ...), each holding
//! `meta.json` (version, coils, height, width, anatomy, seed, slice count)
//! and `slices.bin` (little-endian interleaved complex float32, layout
//! `[slice][coil][ky][kx]`, row-major).
//!
//! Per-slice seeds are derived from the volume seed and slice index with
//! [`crate::seeds::split_index`], so a round trip reproduces both samples and
//! seeds bit-exactly.

use super::{KSpaceSlice, SliceMeta};
use crate::error::{Error, Result};
use crate::seeds;
use num_complex::Complex32;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VolumeMeta {
    version: u32,
    coils: usize,
    height: usize,
    width: usize,
    anatomy: String,
    seed: u64,
    slices: usize,
}

/// One volume: homogeneous slices sharing anatomy, geometry and a volume seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub anatomy: String,
    pub seed: u64,
    pub slices: Vec<KSpaceSlice>,
}

impl Volume {
    pub fn coils(&self) -> usize {
        self.slices[0].coils()
    }
    pub fn height(&self) -> usize {
        self.slices[0].height()
    }
    pub fn width(&self) -> usize {
        self.slices[0].width()
    }
}

/// A collection of volumes, in directory order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub volumes: Vec<Volume>,
}

impl Dataset {
    /// All slices across volumes, in (volume, slice) order.
    pub fn slices(&self) -> impl Iterator<Item = &KSpaceSlice> {
        self.volumes.iter().flat_map(|v| v.slices.iter())
    }

    pub fn num_slices(&self) -> usize {
        self.volumes.iter().map(|v| v.slices.len()).sum()
    }

    /// Whether any volume (same anatomy and volume seed) appears in both
    /// datasets; used to reject overlapping experiment splits.
    pub fn overlaps(&self, other: &Dataset) -> bool {
        self.volumes
            .iter()
            .any(|a| other.volumes.iter().any(|b| a.seed == b.seed && a.anatomy == b.anatomy))
    }
}

/// The canonical per-slice seed for a slice of a volume.
pub fn slice_seed(volume_seed: u64, slice_index: u32) -> u64 {
    seeds::split_index(volume_seed, "slice", slice_index as u64)
}

/// Write a dataset; one subdirectory per volume.
pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    fs::create_dir_all(path)?;
    for (vi, vol) in dataset.volumes.iter().enumerate() {
        if vol.slices.is_empty() {
            return Err(Error::Dataset(format!("volume {vi} has no slices")));
        }
        let (coils, h, w) = (vol.coils(), vol.height(), vol.width());
        for s in &vol.slices {
            if s.coils() != coils || s.height() != h || s.width() != w {
                return Err(Error::Shape(format!(
                    "volume {vi} mixes slice geometries"
                )));
            }
        }
        let dir = path.join(format!("vol_{vi:03}"));
        fs::create_dir_all(&dir)?;
        let meta = VolumeMeta {
            version: DATASET_VERSION,
            coils,
            height: h,
            width: w,
            anatomy: vol.anatomy.clone(),
            seed: vol.seed,
            slices: vol.slices.len(),
        };
        fs::write(dir.join("meta.json"), serde_json::to_vec_pretty(&meta)?)?;
        let mut bin = fs::File::create(dir.join("slices.bin"))?;
        let mut buf = Vec::with_capacity(vol.slices.len() * coils * h * w * 8);
        for s in &vol.slices {
            for z in s.samples() {
                buf.extend_from_slice(&z.re.to_le_bytes());
                buf.extend_from_slice(&z.im.to_le_bytes());
            }
        }
        bin.write_all(&buf)?;
    }
    Ok(())
}

/// Read a dataset written by [`write_dataset`].
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let mut dirs: Vec<_> = fs::read_dir(path)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir() && p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("vol_")))
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Dataset(format!("no volumes under {}", path.display())));
    }
    let mut volumes = Vec::with_capacity(dirs.len());
    for (vi, dir) in dirs.iter().enumerate() {
        let meta: VolumeMeta = serde_json::from_slice(&fs::read(dir.join("meta.json"))?)?;
        if meta.version != DATASET_VERSION {
            return Err(Error::Dataset(format!(
                "unsupported dataset version {} (expected {DATASET_VERSION})",
                meta.version
            )));
        }
        let mut bin = Vec::new();
        fs::File::open(dir.join("slices.bin"))?.read_to_end(&mut bin)?;
        let per_slice = meta.coils * meta.height * meta.width;
        let expect = meta.slices * per_slice * 8;
        if bin.len() != expect {
            return Err(Error::Dataset(format!(
                "payload length {} disagrees with metadata shape (expected {expect})",
                bin.len()
            )));
        }
        let mut slices = Vec::with_capacity(meta.slices);
        for si in 0..meta.slices {
            let mut data = Vec::with_capacity(per_slice);
            let base = si * per_slice * 8;
            for i in 0..per_slice {
                let o = base + i * 8;
                let re = f32::from_le_bytes(bin[o..o + 4].try_into().unwrap());
                let im = f32::from_le_bytes(bin[o + 4..o + 8].try_into().unwrap());
                data.push(Complex32::new(re, im));
            }
            let sm = SliceMeta::new(
                &meta.anatomy,
                vi as u32,
                si as u32,
                slice_seed(meta.seed, si as u32),
            );
            slices.push(KSpaceSlice::new(meta.coils, meta.height, meta.width, data, sm)?);
        }
        volumes.push(Volume { anatomy: meta.anatomy, seed: meta.seed, slices });
    }
    Ok(Dataset { volumes })
}

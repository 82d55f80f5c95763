//! `RPAH` dataset container.
//!
//! Layout: a 64-byte header, a `u32`-length-prefixed UTF-8 block holding the
//! generating [`SystemConfig`] as TOML, then the raw payload of `count`
//! tensors, interleaved re/im, row-major over `(sample, g, u, m, mode)`.
//! Every multi-byte field is little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::emcsi::{build_emcsi, EmCsiTensor};
use super::geometry::ArrayGeometry;
use super::paths::sample_path_set;
use super::pattern::PatternCodebook;
use crate::config::SystemConfig;
use crate::error::{Error, Result};

pub const DATASET_MAGIC: [u8; 4] = *b"RPAH";
pub const DATASET_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 64;
/// Default cap on the payload size written by [`generate_dataset`].
pub const DEFAULT_MAX_BYTES: u64 = 4 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FloatWidth {
    F32,
    F64,
}

impl FloatWidth {
    pub fn bytes(self) -> usize {
        match self {
            FloatWidth::F32 => 4,
            FloatWidth::F64 => 8,
        }
    }

    fn from_byte(b: u8) -> Result<Self> {
        match b {
            4 => Ok(FloatWidth::F32),
            8 => Ok(FloatWidth::F64),
            other => Err(Error::Format(format!("unsupported float width {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetHeader {
    pub version: u32,
    pub float_width: FloatWidth,
    pub num_subcarriers: u32,
    pub num_users: u32,
    pub num_antennas: u32,
    pub num_patterns: u32,
    pub count: u64,
    pub seed: u64,
}

impl DatasetHeader {
    pub fn tensor_len(&self) -> usize {
        (self.num_subcarriers * self.num_users * self.num_antennas * self.num_patterns) as usize
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(&DATASET_MAGIC);
        b[4..8].copy_from_slice(&self.version.to_le_bytes());
        b[8] = self.float_width.bytes() as u8;
        b[9] = 0;
        b[10..14].copy_from_slice(&self.num_subcarriers.to_le_bytes());
        b[14..18].copy_from_slice(&self.num_users.to_le_bytes());
        b[18..22].copy_from_slice(&self.num_antennas.to_le_bytes());
        b[22..26].copy_from_slice(&self.num_patterns.to_le_bytes());
        b[26..34].copy_from_slice(&self.count.to_le_bytes());
        b[34..42].copy_from_slice(&self.seed.to_le_bytes());
        b
    }

    pub fn from_bytes(b: &[u8; HEADER_LEN]) -> Result<Self> {
        if b[0..4] != DATASET_MAGIC {
            return Err(Error::Format("missing RPAH magic".into()));
        }
        let u32_at = |i: usize| u32::from_le_bytes(b[i..i + 4].try_into().unwrap());
        let u64_at = |i: usize| u64::from_le_bytes(b[i..i + 8].try_into().unwrap());
        let version = u32_at(4);
        if version != DATASET_VERSION {
            return Err(Error::Format(format!("unsupported dataset version {version}")));
        }
        if b[9] != 0 {
            return Err(Error::Format(format!("unsupported endianness flag {}", b[9])));
        }
        Ok(Self {
            version,
            float_width: FloatWidth::from_byte(b[8])?,
            num_subcarriers: u32_at(10),
            num_users: u32_at(14),
            num_antennas: u32_at(18),
            num_patterns: u32_at(22),
            count: u64_at(26),
            seed: u64_at(34),
        })
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub config: SystemConfig,
    pub samples: Vec<EmCsiTensor>,
}

#[derive(Debug, Clone, Copy)]
pub struct GenerateOptions {
    pub float_width: FloatWidth,
    pub max_bytes: u64,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self {
            float_width: FloatWidth::F64,
            max_bytes: DEFAULT_MAX_BYTES,
        }
    }
}

/// Sample `index` of the stream seeded by `seed`. Each sample owns an
/// independent ChaCha stream so generation order does not matter.
pub fn sample_emcsi(
    cfg: &SystemConfig,
    geom: &ArrayGeometry,
    codebook: &PatternCodebook,
    seed: u64,
    index: u64,
) -> Result<EmCsiTensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let paths: Vec<_> = (0..cfg.num_users).map(|_| sample_path_set(cfg, &mut rng)).collect();
    build_emcsi(cfg, geom, codebook, &paths)
}

/// `count` independent tensors, generated in parallel.
pub fn generate_samples(cfg: &SystemConfig, count: usize, seed: u64) -> Result<Vec<EmCsiTensor>> {
    cfg.validate()?;
    let geom = ArrayGeometry::from_config(cfg);
    let codebook = PatternCodebook::from_config(cfg)?;
    (0..count as u64)
        .into_par_iter()
        .map(|i| sample_emcsi(cfg, &geom, &codebook, seed, i))
        .collect()
}

/// Generates `count` samples and writes them to `path`.
pub fn generate_dataset(
    cfg: &SystemConfig,
    count: usize,
    seed: u64,
    path: &Path,
    opts: GenerateOptions,
) -> Result<DatasetHeader> {
    cfg.validate()?;
    let per_sample = (cfg.num_subcarriers * cfg.num_users * cfg.num_antennas * cfg.num_patterns) as u128
        * 2
        * opts.float_width.bytes() as u128;
    let needed = per_sample * count as u128;
    if needed > opts.max_bytes as u128 {
        return Err(Error::Overflow { needed, cap: opts.max_bytes });
    }
    let samples = generate_samples(cfg, count, seed)?;
    write_dataset(path, cfg, seed, opts.float_width, &samples)
}

pub fn write_dataset(
    path: &Path,
    cfg: &SystemConfig,
    seed: u64,
    float_width: FloatWidth,
    samples: &[EmCsiTensor],
) -> Result<DatasetHeader> {
    let mut w = BufWriter::new(File::create(path)?);
    let header = write_dataset_to(&mut w, cfg, seed, float_width, samples)?;
    w.flush()?;
    Ok(header)
}

pub fn write_dataset_to<W: Write>(
    w: &mut W,
    cfg: &SystemConfig,
    seed: u64,
    float_width: FloatWidth,
    samples: &[EmCsiTensor],
) -> Result<DatasetHeader> {
    for s in samples {
        s.check_config(cfg)?;
    }
    let header = DatasetHeader {
        version: DATASET_VERSION,
        float_width,
        num_subcarriers: cfg.num_subcarriers as u32,
        num_users: cfg.num_users as u32,
        num_antennas: cfg.num_antennas as u32,
        num_patterns: cfg.num_patterns as u32,
        count: samples.len() as u64,
        seed,
    };
    w.write_all(&header.to_bytes())?;
    let meta = cfg.to_toml();
    w.write_all(&(meta.len() as u32).to_le_bytes())?;
    w.write_all(meta.as_bytes())?;
    for s in samples {
        for z in s.data() {
            match float_width {
                FloatWidth::F64 => {
                    w.write_all(&z.re.to_le_bytes())?;
                    w.write_all(&z.im.to_le_bytes())?;
                }
                FloatWidth::F32 => {
                    w.write_all(&(z.re as f32).to_le_bytes())?;
                    w.write_all(&(z.im as f32).to_le_bytes())?;
                }
            }
        }
    }
    Ok(header)
}

pub fn read_header(path: &Path) -> Result<DatasetHeader> {
    let mut r = BufReader::new(File::open(path)?);
    let mut b = [0u8; HEADER_LEN];
    r.read_exact(&mut b)?;
    DatasetHeader::from_bytes(&b)
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    read_dataset_from(&mut BufReader::new(File::open(path)?))
}

pub fn read_dataset_from<R: Read>(r: &mut R) -> Result<Dataset> {
    let mut b = [0u8; HEADER_LEN];
    r.read_exact(&mut b)?;
    let header = DatasetHeader::from_bytes(&b)?;
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut meta = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut meta)?;
    let meta = String::from_utf8(meta).map_err(|_| Error::Format("metadata is not UTF-8".into()))?;
    let config = SystemConfig::from_toml(&meta)?;
    let dims = [
        header.num_subcarriers as usize,
        header.num_users as usize,
        header.num_antennas as usize,
        header.num_patterns as usize,
    ];
    if dims != [config.num_subcarriers, config.num_users, config.num_antennas, config.num_patterns] {
        return Err(Error::Format("header dimensions disagree with embedded configuration".into()));
    }
    let n = header.tensor_len();
    let width = header.float_width.bytes();
    let freqs = config.subcarrier_freqs();
    let mut buf = vec![0u8; n * 2 * width];
    let mut samples = Vec::with_capacity(header.count as usize);
    for _ in 0..header.count {
        r.read_exact(&mut buf)?;
        let data: Vec<Complex64> = buf
            .chunks_exact(2 * width)
            .map(|c| match header.float_width {
                FloatWidth::F64 => Complex64::new(
                    f64::from_le_bytes(c[0..8].try_into().unwrap()),
                    f64::from_le_bytes(c[8..16].try_into().unwrap()),
                ),
                FloatWidth::F32 => Complex64::new(
                    f32::from_le_bytes(c[0..4].try_into().unwrap()) as f64,
                    f32::from_le_bytes(c[4..8].try_into().unwrap()) as f64,
                ),
            })
            .collect();
        samples.push(EmCsiTensor::from_parts(dims, data, freqs.clone())?);
    }
    Ok(Dataset { header, config, samples })
}

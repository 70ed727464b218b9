//! Trajectory collections and the `SSPD1` on-disk format.
//!
//! Layout of an `SSPD1` file, all integers little-endian:
//!
//! ```text
//! bytes 0..4    magic "SSPD"
//! bytes 4..8    format version (u32), currently 1
//! bytes 8..16   reserved, zero
//! bytes 16..24  metadata byte length (u64)
//! ...           UTF-8 metadata, one key=value per line
//! ...           float64 frames, trajectory-major, then time, channel, row-major
//! ```
//!
//! The metadata block records the equation spec, grid, counts, per-trajectory
//! seeds, and the split tag, so a loaded dataset reconstructs everything the
//! generator knew. Loaders reject unknown versions outright.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array4;
use ssp_core::{Error, GridField, Result};

use crate::init::random_initial_condition;
use crate::solver::advance_frame;
use crate::spec::{PdeKind, PdeSpec};

const MAGIC: &[u8; 4] = b"SSPD";
const VERSION: u32 = 1;

/// One simulated trajectory; the batch axis of `states` is time, so the shape
/// is `(l_total, channels, nx, ny)`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: GridField,
    pub seed: u64,
}

impl Trajectory {
    /// View of frame `t` as a `(1, channels, nx, ny)` slice.
    pub fn frame(&self, t: usize) -> ndarray::ArrayView4<'_, f64> {
        self.states.data().slice(ndarray::s![t..t + 1, .., .., ..])
    }

    pub fn len(&self) -> usize {
        self.states.batch()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A set of trajectories generated under one equation spec, plus the metadata
/// needed to regenerate or validate them.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub spec: PdeSpec,
    /// Split tag, conventionally "train" or "test".
    pub split: String,
    /// Spectral decay used for the initial conditions.
    pub decay: f64,
    pub trajectories: Vec<Trajectory>,
}

impl Dataset {
    pub fn n_traj(&self) -> usize {
        self.trajectories.len()
    }

    pub fn l_total(&self) -> usize {
        self.trajectories.first().map_or(0, |t| t.len())
    }

    pub fn channels(&self) -> usize {
        self.trajectories.first().map_or(0, |t| t.states.channels())
    }

    pub fn resolution(&self) -> (usize, usize) {
        self.trajectories
            .first()
            .map_or((0, 0), |t| (t.states.nx(), t.states.ny()))
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.trajectories.iter().map(|t| t.seed).collect()
    }
}

/// True when the two datasets share no trajectory seeds — the guard that keeps
/// train and test splits honest.
pub fn seeds_disjoint(a: &Dataset, b: &Dataset) -> bool {
    let sa: std::collections::HashSet<u64> = a.seeds().into_iter().collect();
    b.seeds().iter().all(|s| !sa.contains(s))
}

/// Simulates `n_traj` trajectories of `l_total` frames each and writes them to
/// `out_path`. Trajectory `t` uses seed `seed_base + t`, so separate splits
/// stay disjoint by spacing their seed bases at least `n_traj` apart.
#[allow(clippy::too_many_arguments)]
pub fn generate_dataset(
    spec: &PdeSpec,
    n_traj: usize,
    l_total: usize,
    resolution: (usize, usize),
    seed_base: u64,
    decay: f64,
    split: &str,
    out_path: &Path,
) -> Result<Dataset> {
    spec.validate()?;
    if n_traj == 0 {
        return Err(Error::config("dataset needs at least one trajectory"));
    }
    if l_total < 2 {
        return Err(Error::config(format!(
            "trajectory length {l_total} too short: need at least an initial and one evolved frame"
        )));
    }
    let channels = spec.channels();
    let (nx, ny) = resolution;

    let mut trajectories = Vec::with_capacity(n_traj);
    for t in 0..n_traj {
        let seed = seed_base + t as u64;
        let mut state = random_initial_condition(seed, resolution, channels, decay)?;
        let mut frames = Array4::zeros((l_total, channels, nx, ny));
        frames
            .slice_mut(ndarray::s![0..1, .., .., ..])
            .assign(state.data());
        for f in 1..l_total {
            state = advance_frame(&state, spec)?;
            if !state.is_finite() {
                return Err(Error::divergence(format!(
                    "trajectory seed {seed} diverged at frame {f}"
                )));
            }
            frames
                .slice_mut(ndarray::s![f..f + 1, .., .., ..])
                .assign(state.data());
        }
        trajectories.push(Trajectory { states: GridField::new(frames)?, seed });
    }

    let dataset = Dataset {
        spec: spec.clone(),
        split: split.to_string(),
        decay,
        trajectories,
    };
    write_dataset(&dataset, out_path)?;
    Ok(dataset)
}

fn metadata_text(ds: &Dataset) -> String {
    let (nx, ny) = ds.resolution();
    let seeds: Vec<String> = ds.seeds().iter().map(|s| s.to_string()).collect();
    let s = &ds.spec;
    format!(
        "kind={}\nnu={}\ncx={}\ncy={}\ndiff_u={}\ndiff_v={}\ncoupling={}\n\
         reaction_strength={}\ndt={}\nsubsteps={}\nnx={nx}\nny={ny}\nchannels={}\n\
         n_traj={}\nl_total={}\ndecay={}\nsplit={}\nseeds={}\n",
        s.kind.tag(),
        s.nu,
        s.velocity.0,
        s.velocity.1,
        s.diff_u,
        s.diff_v,
        s.coupling,
        s.reaction_strength,
        s.dt,
        s.substeps,
        ds.channels(),
        ds.n_traj(),
        ds.l_total(),
        ds.decay,
        ds.split,
        seeds.join(",")
    )
}

/// Writes a dataset to `path` in the `SSPD1` format.
pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[0u8; 8])?;
    let meta = metadata_text(ds);
    w.write_all(&(meta.len() as u64).to_le_bytes())?;
    w.write_all(meta.as_bytes())?;
    for traj in &ds.trajectories {
        // Standard layout makes iteration order = (time, channel, row, col).
        for v in traj.states.data().iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

struct Meta<'a>(BTreeMap<&'a str, &'a str>);

impl<'a> Meta<'a> {
    fn parse(text: &'a str) -> Self {
        let mut map = BTreeMap::new();
        for line in text.lines() {
            if let Some((k, v)) = line.split_once('=') {
                map.insert(k.trim(), v.trim());
            }
        }
        Meta(map)
    }

    fn str(&self, key: &str) -> Result<&'a str> {
        self.0
            .get(key)
            .copied()
            .ok_or_else(|| Error::format(format!("dataset metadata missing key {key:?}")))
    }

    fn num<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.str(key)?;
        raw.parse().map_err(|_| {
            Error::format(format!("dataset metadata key {key:?} has unparsable value {raw:?}"))
        })
    }
}

/// Reads a dataset written by [`write_dataset`], validating header, version,
/// and payload size.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if &header[0..4] != MAGIC {
        return Err(Error::format(format!(
            "{} is not an SSPD dataset (bad magic)",
            path.display()
        )));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::format(format!(
            "unsupported SSPD version {version}; this build reads version {VERSION}"
        )));
    }
    let mut len_bytes = [0u8; 8];
    r.read_exact(&mut len_bytes)?;
    let meta_len = u64::from_le_bytes(len_bytes) as usize;
    let mut meta_raw = vec![0u8; meta_len];
    r.read_exact(&mut meta_raw)?;
    let meta_text = String::from_utf8(meta_raw)
        .map_err(|_| Error::format("dataset metadata is not valid UTF-8"))?;
    let meta = Meta::parse(&meta_text);

    let kind = PdeKind::from_tag(meta.str("kind")?)?;
    let spec = PdeSpec {
        kind,
        nu: meta.num("nu")?,
        velocity: (meta.num("cx")?, meta.num("cy")?),
        diff_u: meta.num("diff_u")?,
        diff_v: meta.num("diff_v")?,
        coupling: meta.num("coupling")?,
        reaction_strength: meta.num("reaction_strength")?,
        dt: meta.num("dt")?,
        substeps: meta.num("substeps")?,
    };
    spec.validate()?;

    let nx: usize = meta.num("nx")?;
    let ny: usize = meta.num("ny")?;
    let channels: usize = meta.num("channels")?;
    let n_traj: usize = meta.num("n_traj")?;
    let l_total: usize = meta.num("l_total")?;
    let decay: f64 = meta.num("decay")?;
    let split = meta.str("split")?.to_string();
    let seeds: Vec<u64> = {
        let raw = meta.str("seeds")?;
        let parsed: std::result::Result<Vec<u64>, _> =
            raw.split(',').map(|s| s.trim().parse()).collect();
        parsed.map_err(|_| Error::format(format!("unparsable seed list {raw:?}")))?
    };
    if seeds.len() != n_traj {
        return Err(Error::format(format!(
            "metadata lists {} seeds for {n_traj} trajectories",
            seeds.len()
        )));
    }

    let frame_len = channels * nx * ny;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let expect_bytes = n_traj * l_total * frame_len * 8;
    if payload.len() != expect_bytes {
        return Err(Error::format(format!(
            "dataset payload is {} bytes, expected {expect_bytes} \
             ({n_traj} trajectories x {l_total} frames x {frame_len} samples x 8)",
            payload.len()
        )));
    }

    let mut trajectories = Vec::with_capacity(n_traj);
    let mut offset = 0usize;
    for &seed in &seeds {
        let mut values = Vec::with_capacity(l_total * frame_len);
        for _ in 0..l_total * frame_len {
            let bytes: [u8; 8] = payload[offset..offset + 8].try_into().expect("8 bytes");
            values.push(f64::from_le_bytes(bytes));
            offset += 8;
        }
        let frames = Array4::from_shape_vec((l_total, channels, nx, ny), values)
            .map_err(|e| Error::format(format!("frame block has wrong shape: {e}")))?;
        trajectories.push(Trajectory { states: GridField::new(frames)?, seed });
    }

    Ok(Dataset { spec, split, decay, trajectories })
}

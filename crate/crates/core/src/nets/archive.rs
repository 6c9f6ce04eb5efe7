//! Named parameter storage and its on-disk checkpoint format.
//!
//! A checkpoint is a directory:
//!
//! ```text
//! metadata.json        stage, config hash, seed, step, tensor index
//! config.toml          the run config the parameters belong to
//! tensors/<name>.bin   one blob per parameter
//! optimizer/<name>.m.bin, optimizer/<name>.v.bin   (optional) Adam moments
//! ```
//!
//! A blob is the magic `PSTB`, a little-endian `u32` rank, one `u64` per
//! dimension, then the row-major `f32` values.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::params::{Group, Init, ParamSpec, Params};
use super::param_specs;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::seed::{seed_all, STREAM_INIT};
use crate::tensor::Element;

pub const ARCHIVE_SCHEMA_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"PSTB";

#[derive(Clone, Debug, PartialEq)]
pub struct ParamTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchiveMeta {
    /// 0 = freshly initialized, 1 = after stage 1, 2 = after stage 2.
    pub stage: u8,
    pub config_hash: String,
    pub seed: u64,
    pub step: u64,
}

/// Adam first and second moments for the parameters being optimized.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct OptimizerState {
    pub step: u64,
    pub m: BTreeMap<String, Vec<f32>>,
    pub v: BTreeMap<String, Vec<f32>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParameterArchive {
    pub meta: ArchiveMeta,
    pub config: RunConfig,
    pub tensors: BTreeMap<String, ParamTensor>,
    pub optimizer: Option<OptimizerState>,
}

#[derive(Serialize, Deserialize)]
struct MetadataFile {
    schema_version: u32,
    #[serde(flatten)]
    meta: ArchiveMeta,
    tensors: Vec<TensorIndex>,
    optimizer_step: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct TensorIndex {
    name: String,
    shape: Vec<usize>,
}

fn sample(spec: &ParamSpec, seed: u64) -> Vec<f32> {
    match spec.init {
        Init::Zeros => vec![0.0; spec.numel()],
        Init::Ones => vec![1.0; spec.numel()],
        Init::Normal { fan_in } => {
            let std = 1.0 / (fan_in as f64).sqrt();
            let mut rng = seed_all(seed).stream(&format!("{STREAM_INIT}/{}", spec.name));
            (0..spec.numel())
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (z * std) as f32
                })
                .collect()
        }
    }
}

impl ParameterArchive {
    /// Fresh parameters: scaled-normal weights, zero biases, unit norm
    /// gains, and exact zeros on the pose-guider projection and motion
    /// output projections. Every tensor draws from its own named stream.
    pub fn init(cfg: &RunConfig, seed: u64) -> Self {
        let tensors = param_specs(cfg)
            .iter()
            .map(|s| (s.name.clone(), ParamTensor { shape: s.shape.clone(), data: sample(s, seed) }))
            .collect();
        ParameterArchive {
            meta: ArchiveMeta { stage: 0, config_hash: cfg.hash(), seed, step: 0 },
            config: cfg.clone(),
            tensors,
            optimizer: None,
        }
    }

    pub fn num_params(&self) -> usize {
        self.tensors.values().map(|t| t.data.len()).sum()
    }

    pub fn group_params(&self, g: Group) -> usize {
        self.tensors
            .iter()
            .filter(|(n, _)| Group::of(n) == Some(g))
            .map(|(_, t)| t.data.len())
            .sum()
    }

    /// SHA-256 over the names and raw bytes of one group's tensors.
    pub fn group_digest(&self, g: Group) -> String {
        let mut h = Sha256::new();
        for (n, t) in self.tensors.iter().filter(|(n, _)| Group::of(n) == Some(g)) {
            h.update(n.as_bytes());
            for v in &t.data {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(&h.finalize()[..])
    }

    /// Builds tensors for a forward pass; `trainable` groups become leaves.
    pub fn to_params<T: Element>(&self, trainable: &[Group]) -> Params<T> {
        Params::from_values(
            self.tensors.iter().map(|(n, t)| {
                let data: Vec<T> = t.data.iter().map(|&v| T::from_f32(v).expect("f32 fits")).collect();
                (n, t.shape.as_slice(), data)
            }),
            trainable,
        )
    }

    /// Names and shapes must match what `cfg` declares.
    pub fn check_against(&self, cfg: &RunConfig) -> Result<()> {
        let specs = param_specs(cfg);
        let missing: Vec<String> = specs
            .iter()
            .filter(|s| !self.tensors.contains_key(&s.name))
            .map(|s| s.name.clone())
            .collect();
        if !missing.is_empty() {
            return Err(Error::KeyMismatch { missing });
        }
        if self.tensors.len() != specs.len() {
            let known: Vec<&str> = specs.iter().map(|s| s.name.as_str()).collect();
            let extra: Vec<String> = self.tensors.keys().filter(|k| !known.contains(&k.as_str())).cloned().collect();
            return Err(Error::CorruptArchive(format!("unexpected parameters {extra:?}")));
        }
        for s in &specs {
            let t = &self.tensors[&s.name];
            if t.shape != s.shape {
                return Err(Error::CorruptArchive(format!(
                    "{} has shape {:?}, config declares {:?}",
                    s.name, t.shape, s.shape
                )));
            }
        }
        Ok(())
    }

    /// Writes to `<dir>.partial` and renames, replacing any previous
    /// checkpoint at `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let partial = PathBuf::from(format!("{}.partial", dir.display()));
        if partial.exists() {
            fs::remove_dir_all(&partial).map_err(|e| Error::io(&partial, e))?;
        }
        let tdir = partial.join("tensors");
        fs::create_dir_all(&tdir).map_err(|e| Error::io(&tdir, e))?;
        for (name, t) in &self.tensors {
            write_blob(&tdir.join(format!("{name}.bin")), &t.shape, &t.data)?;
        }
        if let Some(opt) = &self.optimizer {
            let odir = partial.join("optimizer");
            fs::create_dir_all(&odir).map_err(|e| Error::io(&odir, e))?;
            for (name, m) in &opt.m {
                write_blob(&odir.join(format!("{name}.m.bin")), &[m.len()], m)?;
                write_blob(&odir.join(format!("{name}.v.bin")), &[m.len()], &opt.v[name])?;
            }
        }
        let meta = MetadataFile {
            schema_version: ARCHIVE_SCHEMA_VERSION,
            meta: self.meta.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|(n, t)| TensorIndex { name: n.clone(), shape: t.shape.clone() })
                .collect(),
            optimizer_step: self.optimizer.as_ref().map(|o| o.step),
        };
        let mpath = partial.join("metadata.json");
        fs::write(&mpath, serde_json::to_string_pretty(&meta).expect("metadata serializes"))
            .map_err(|e| Error::io(&mpath, e))?;
        self.config.save(&partial.join("config.toml"))?;
        if dir.exists() {
            fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::rename(&partial, dir).map_err(|e| Error::io(dir, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mpath = dir.join("metadata.json");
        let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let meta: MetadataFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
            what: "archive metadata".into(),
            message: e.to_string(),
        })?;
        if meta.schema_version != ARCHIVE_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                what: "archive",
                found: meta.schema_version,
                expected: ARCHIVE_SCHEMA_VERSION,
            });
        }
        let config = crate::config::load_config(&dir.join("config.toml"))?;
        if config.hash() != meta.meta.config_hash {
            return Err(Error::CorruptArchive("config.toml does not match the recorded config hash".into()));
        }
        let mut tensors = BTreeMap::new();
        for idx in &meta.tensors {
            let (shape, data) = read_blob(&dir.join("tensors").join(format!("{}.bin", idx.name)))?;
            if shape != idx.shape {
                return Err(Error::CorruptArchive(format!(
                    "{}: blob shape {shape:?} disagrees with metadata {:?}",
                    idx.name, idx.shape
                )));
            }
            tensors.insert(idx.name.clone(), ParamTensor { shape, data });
        }
        let optimizer = match meta.optimizer_step {
            None => None,
            Some(step) => {
                let odir = dir.join("optimizer");
                let mut st = OptimizerState { step, ..Default::default() };
                let entries = fs::read_dir(&odir).map_err(|e| Error::io(&odir, e))?;
                for e in entries {
                    let e = e.map_err(|err| Error::io(&odir, err))?;
                    let fname = e.file_name().to_string_lossy().into_owned();
                    let (_, data) = read_blob(&e.path())?;
                    if let Some(n) = fname.strip_suffix(".m.bin") {
                        st.m.insert(n.to_string(), data);
                    } else if let Some(n) = fname.strip_suffix(".v.bin") {
                        st.v.insert(n.to_string(), data);
                    }
                }
                for (n, m) in &st.m {
                    let ok = st.v.get(n).is_some_and(|v| v.len() == m.len())
                        && tensors.get(n).is_some_and(|t| t.data.len() == m.len());
                    if !ok {
                        return Err(Error::CorruptArchive(format!("optimizer state for {n} is inconsistent")));
                    }
                }
                Some(st)
            }
        };
        let archive = ParameterArchive { meta: meta.meta, config, tensors, optimizer };
        archive.check_against(&archive.config)?;
        Ok(archive)
    }
}

fn write_blob(path: &Path, shape: &[usize], data: &[f32]) -> Result<()> {
    let mut buf = Vec::with_capacity(8 + 8 * shape.len() + 4 * data.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for &d in shape {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn read_blob(path: &Path) -> Result<(Vec<usize>, Vec<f32>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let corrupt = |what: &str| Error::CorruptArchive(format!("{}: {what}", path.display()));
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(corrupt("bad header"));
    }
    let ndim = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let header = 8 + 8 * ndim;
    if bytes.len() < header {
        return Err(corrupt("truncated shape"));
    }
    let shape: Vec<usize> = (0..ndim)
        .map(|i| u64::from_le_bytes(bytes[8 + 8 * i..16 + 8 * i].try_into().unwrap()) as usize)
        .collect();
    let n: usize = shape.iter().product();
    if bytes.len() != header + 4 * n {
        return Err(corrupt(&format!("expected {} data bytes, found {}", 4 * n, bytes.len() - header)));
    }
    let data = bytes[header..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((shape, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_load_round_trip_is_exact() {
        let cfg = RunConfig::micro();
        let mut a = ParameterArchive::init(&cfg, 3);
        a.meta.stage = 1;
        a.meta.step = 17;
        let mut opt = OptimizerState { step: 17, ..Default::default() };
        opt.m.insert("motion.down.1.attn.q.weight".into(), a.tensors["motion.down.1.attn.q.weight"].data.clone());
        opt.v.insert("motion.down.1.attn.q.weight".into(), vec![0.5; opt.m["motion.down.1.attn.q.weight"].len()]);
        a.optimizer = Some(opt);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt");
        a.save(&path).unwrap();
        let b = ParameterArchive::load(&path).unwrap();
        assert_eq!(a, b);
        // Overwriting an existing checkpoint works too.
        b.save(&path).unwrap();
    }

    #[test]
    fn truncated_blob_is_corrupt() {
        let cfg = RunConfig::micro();
        let a = ParameterArchive::init(&cfg, 1);
        let dir = tempfile::tempdir().unwrap();
        a.save(dir.path()).unwrap();
        let blob = dir.path().join("tensors/denoiser.conv_in.weight.bin");
        let bytes = fs::read(&blob).unwrap();
        fs::write(&blob, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(ParameterArchive::load(dir.path()), Err(Error::CorruptArchive(_))));
    }

    #[test]
    fn future_schema_is_rejected() {
        let a = ParameterArchive::init(&RunConfig::micro(), 1);
        let dir = tempfile::tempdir().unwrap();
        a.save(dir.path()).unwrap();
        let mpath = dir.path().join("metadata.json");
        let text = fs::read_to_string(&mpath).unwrap().replace("\"schema_version\": 1", "\"schema_version\": 9");
        fs::write(&mpath, text).unwrap();
        assert!(matches!(ParameterArchive::load(dir.path()), Err(Error::SchemaVersion { found: 9, .. })));
    }

    #[test]
    fn init_is_seeded_and_zero_inits_are_exact() {
        let cfg = RunConfig::micro();
        let a = ParameterArchive::init(&cfg, 5);
        assert_eq!(a, ParameterArchive::init(&cfg, 5));
        assert_ne!(a.tensors, ParameterArchive::init(&cfg, 6).tensors);
        for (n, t) in &a.tensors {
            if n.starts_with("pose_guider.proj") || (n.starts_with("motion.") && n.contains(".out.")) {
                assert!(t.data.iter().all(|&v| v == 0.0), "{n} not zero");
            }
        }
        let w = &a.tensors["denoiser.conv_in.weight"];
        let fan_in = (w.shape[1] * 9) as f64;
        let var = w.data.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / w.data.len() as f64;
        assert!((var * fan_in - 1.0).abs() < 0.35, "empirical var*fan_in = {}", var * fan_in);
    }

    #[test]
    fn missing_parameter_is_key_mismatch() {
        let cfg = RunConfig::micro();
        let mut a = ParameterArchive::init(&cfg, 1);
        a.tensors.remove("codec.dec.out.bias");
        assert!(matches!(a.check_against(&cfg), Err(Error::KeyMismatch { missing }) if missing == vec!["codec.dec.out.bias".to_string()]));
    }
}

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use ndarray::Array3;
use serde::{Serialize, Serializer};

use super::image::{lpips, psnr, ssim, subject_consistency, FeatureExtractor};
use crate::dataset::imageio::load_rgba;
use crate::dataset::{composite_background, WHITE};
use crate::error::{Error, Result};

fn finite_or_inf<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if v.is_nan() {
        s.serialize_str("nan")
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

/// Mean and population standard deviation of the finite values; infinite
/// values are counted in `excluded_infinite` instead.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricSummary {
    #[serde(serialize_with = "finite_or_inf")]
    pub mean: f64,
    #[serde(serialize_with = "finite_or_inf")]
    pub std: f64,
    pub count: usize,
    pub excluded_infinite: usize,
}

impl MetricSummary {
    pub fn from_values(values: &[f64]) -> Self {
        let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        let excluded = values.len() - finite.len();
        if finite.is_empty() {
            let mean = if excluded > 0 { f64::INFINITY } else { f64::NAN };
            return MetricSummary { mean, std: 0.0, count: 0, excluded_infinite: excluded };
        }
        let n = finite.len() as f64;
        let mean = finite.iter().sum::<f64>() / n;
        let var = finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        MetricSummary { mean, std: var.sqrt(), count: finite.len(), excluded_infinite: excluded }
    }
}

impl fmt::Display for MetricSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.mean.is_infinite() {
            return f.write_str("inf");
        }
        write!(f, "{:.3} ± {:.3}", self.mean, self.std)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub sequences: usize,
    pub frames: usize,
    pub ssim: MetricSummary,
    pub psnr: MetricSummary,
    pub lpips: MetricSummary,
    /// Absent when no sequence has two or more frames.
    pub subject_consistency: Option<MetricSummary>,
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// A plain-text table, one metric per row.
    pub fn to_table(&self) -> String {
        let sc = self.subject_consistency.as_ref().map_or("n/a".to_string(), |s| s.to_string());
        let mut out = String::new();
        out.push_str(&format!("{:<24} {}\n", "metric", "value"));
        out.push_str(&format!("{:<24} {}\n", "SSIM (higher better)", self.ssim));
        let psnr = if self.psnr.excluded_infinite > 0 {
            format!("{} ({} identical excluded)", self.psnr, self.psnr.excluded_infinite)
        } else {
            self.psnr.to_string()
        };
        out.push_str(&format!("{:<24} {}\n", "PSNR dB (higher better)", psnr));
        out.push_str(&format!("{:<24} {}\n", "LPIPS (lower better)", self.lpips));
        out.push_str(&format!("{:<24} {}\n", "Subject consistency", sc));
        out.push_str(&format!("{:<24} {} frames / {} sequences\n", "evaluated", self.frames, self.sequences));
        out
    }
}

type FrameTree = BTreeMap<(String, String), BTreeMap<usize, std::path::PathBuf>>;

fn subdirs(p: &Path) -> Result<Vec<(String, std::path::PathBuf)>> {
    let mut out = Vec::new();
    for e in fs::read_dir(p).map_err(|e| Error::io(p, e))? {
        let e = e.map_err(|err| Error::io(p, err))?;
        if e.path().is_dir() {
            out.push((e.file_name().to_string_lossy().into_owned(), e.path()));
        }
    }
    out.sort();
    Ok(out)
}

/// `<character>/<action>/frame_<k>.png` files under `root`.
fn frame_tree(root: &Path) -> Result<FrameTree> {
    let mut tree = FrameTree::new();
    for (c, cdir) in subdirs(root)? {
        for (a, adir) in subdirs(&cdir)? {
            let mut frames = BTreeMap::new();
            for e in fs::read_dir(&adir).map_err(|e| Error::io(&adir, e))? {
                let e = e.map_err(|err| Error::io(&adir, err))?;
                let name = e.file_name().to_string_lossy().into_owned();
                if let Some(k) = name.strip_prefix("frame_").and_then(|s| s.strip_suffix(".png")).and_then(|s| s.parse().ok()) {
                    frames.insert(k, e.path());
                }
            }
            if !frames.is_empty() {
                tree.insert((c.clone(), a), frames);
            }
        }
    }
    Ok(tree)
}

fn load_rgb(p: &Path) -> Result<Array3<f64>> {
    Ok(composite_background(&load_rgba(p)?, WHITE))
}

/// Compares every generated frame against the target frame at the same
/// relative path. Targets may hold more sequences than were generated;
/// each generated sequence must match its target frame indices exactly.
pub fn evaluate_run(generated: &Path, targets: &Path, fx: &dyn FeatureExtractor) -> Result<MetricReport> {
    let gen = frame_tree(generated)?;
    if gen.is_empty() {
        return Err(Error::Empty(format!("no generated frames under {}", generated.display())));
    }
    let tgt = frame_tree(targets)?;
    let (mut s, mut p, mut l, mut sc) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut frames = 0;
    for (key, gframes) in &gen {
        let tframes = tgt
            .get(key)
            .ok_or_else(|| Error::EvalMismatch(format!("no target sequence {}/{}", key.0, key.1)))?;
        if gframes.keys().ne(tframes.keys()) {
            let names = |a: &BTreeMap<usize, std::path::PathBuf>, b: &BTreeMap<usize, std::path::PathBuf>| {
                a.keys().filter(|k| !b.contains_key(k)).map(|k| format!("{}/{}/frame_{k}.png", key.0, key.1)).collect::<Vec<_>>()
            };
            return Err(Error::EvalMismatch(format!(
                "missing generated frames {:?}, extra generated frames {:?}",
                names(tframes, gframes),
                names(gframes, tframes)
            )));
        }
        let mut seq = Vec::new();
        for (k, gp) in gframes {
            let g = load_rgb(gp)?;
            let t = load_rgb(&tframes[k])?;
            if g.dim() != t.dim() {
                return Err(Error::EvalMismatch(format!("{}: size {:?} vs target {:?}", gp.display(), g.dim(), t.dim())));
            }
            s.push(ssim(&g, &t)?);
            p.push(psnr(&g, &t)?);
            l.push(lpips(&g, &t, fx)?);
            seq.push(g);
            frames += 1;
        }
        if seq.len() >= 2 {
            sc.push(subject_consistency(&seq, fx)?);
        }
    }
    Ok(MetricReport {
        sequences: gen.len(),
        frames,
        ssim: MetricSummary::from_values(&s),
        psnr: MetricSummary::from_values(&p),
        lpips: MetricSummary::from_values(&l),
        subject_consistency: (!sc.is_empty()).then(|| MetricSummary::from_values(&sc)),
    })
}

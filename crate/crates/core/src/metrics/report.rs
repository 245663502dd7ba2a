use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::losses::{charbonnier, cidaut_composite_auto, fft_l1, CompositeLoss};
use super::quality::{psnr_8bit, ssim_gray};
use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::io::{read_tiff16, GT_FILE};

/// Epsilon for the Charbonnier diagnostic.
pub const CHARBONNIER_EPS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossDiagnostics {
    pub charbonnier: f64,
    pub fft_l1: f64,
    pub composite: CompositeLoss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMetrics {
    pub id: String,
    pub psnr_db: f64,
    pub ssim: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub losses: Option<LossDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenes: Vec<SceneMetrics>,
    pub mean_psnr_db: f64,
    pub mean_ssim: f64,
    pub n_scenes: usize,
    pub bit_depth: u8,
}

impl MetricsReport {
    /// Means are plain arithmetic means of the per-scene values.
    pub fn from_scenes(mut scenes: Vec<SceneMetrics>) -> Self {
        scenes.sort_by(|a, b| a.id.cmp(&b.id));
        let n = scenes.len();
        let mean = |f: fn(&SceneMetrics) -> f64| {
            if n == 0 {
                0.0
            } else {
                scenes.iter().map(f).sum::<f64>() / n as f64
            }
        };
        Self {
            mean_psnr_db: mean(|s| s.psnr_db),
            mean_ssim: mean(|s| s.ssim),
            n_scenes: n,
            bit_depth: 8,
            scenes,
        }
    }

    /// Plain-text table with the leaderboard's column order. Params, FLOPs and
    /// time apply to the whole method and are printed on the mean row.
    pub fn to_table(&self, params: Option<u64>, flops: Option<f64>, seconds: Option<f64>) -> String {
        let mut s = format!("{:<24} {:>8} {:>7} {:>10} {:>10} {:>9}\n", "Scene", "PSNR", "SSIM", "Params", "FLOPs", "Time");
        for sc in &self.scenes {
            s += &format!("{:<24} {:>8.2} {:>7.3} {:>10} {:>10} {:>9}\n", sc.id, sc.psnr_db, sc.ssim, "", "", "");
        }
        let p = params.map_or("-".into(), |v| format!("{:.3}M", v as f64 / 1e6));
        let f = flops.map_or("-".into(), |v| format!("{:.3}T", v / 1e12));
        let t = seconds.map_or("-".into(), |v| format!("{v:.2}s"));
        s += &format!("{:<24} {:>8.2} {:>7.3} {:>10} {:>10} {:>9}\n", "mean", self.mean_psnr_db, self.mean_ssim, p, f, t);
        s
    }
}

pub fn evaluate_pair(id: &str, pred: &RgbImage, gt: &RgbImage, losses: bool) -> Result<SceneMetrics> {
    let losses = if losses {
        Some(LossDiagnostics {
            charbonnier: charbonnier(pred, gt, CHARBONNIER_EPS)?,
            fft_l1: fft_l1(pred, gt)?,
            composite: cidaut_composite_auto(pred, gt)?,
        })
    } else {
        None
    };
    Ok(SceneMetrics {
        id: id.to_string(),
        psnr_db: psnr_8bit(pred, gt)?,
        ssim: ssim_gray(pred, gt)?,
        losses,
    })
}

/// Images in `dir` keyed by scene ID: `<id>.tif` files and `<id>/gt.tif`
/// inside scene subdirectories.
pub fn discover_images(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in rd {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            let gt = path.join(GT_FILE);
            if gt.is_file() {
                out.insert(entry.file_name().to_string_lossy().into_owned(), gt);
            }
        } else if path.extension().is_some_and(|e| e == "tif" || e == "tiff") {
            if let Some(stem) = path.file_stem() {
                out.insert(stem.to_string_lossy().into_owned(), path);
            }
        }
    }
    Ok(out)
}

/// Per-scene PSNR/SSIM over matching IDs, evaluated in parallel and
/// reported in ID order.
pub fn evaluate_set(pred_dir: &Path, gt_dir: &Path, losses: bool) -> Result<MetricsReport> {
    let pred = discover_images(pred_dir)?;
    let gt = discover_images(gt_dir)?;
    let missing: Vec<String> = gt.keys().filter(|k| !pred.contains_key(*k)).cloned().collect();
    let extra: Vec<String> = pred.keys().filter(|k| !gt.contains_key(*k)).cloned().collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Error::Incomplete { missing, extra });
    }
    let scenes = gt
        .par_iter()
        .map(|(id, gpath)| {
            let g = read_tiff16(gpath)?.into_rgb()?;
            let p = read_tiff16(&pred[id])?.into_rgb()?;
            evaluate_pair(id, &p, &g, losses)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsReport::from_scenes(scenes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sm(id: &str, psnr: f64, ssim: f64) -> SceneMetrics {
        SceneMetrics {
            id: id.into(),
            psnr_db: psnr,
            ssim,
            losses: None,
        }
    }

    #[test]
    fn means_and_order() {
        let r = MetricsReport::from_scenes(vec![sm("b", 30.0, 0.9), sm("a", 40.0, 0.7)]);
        assert_eq!(r.scenes[0].id, "a");
        assert_eq!(r.mean_psnr_db, 35.0);
        assert!((r.mean_ssim - 0.8).abs() < 1e-15);
        assert_eq!(r.n_scenes, 2);
    }

    #[test]
    fn table_has_leaderboard_columns() {
        let r = MetricsReport::from_scenes(vec![sm("a", 43.22, 0.992)]);
        let t = r.to_table(Some(29_051_000), Some(3.965e12), None);
        let header = t.lines().next().unwrap();
        let cols: Vec<&str> = header.split_whitespace().collect();
        assert_eq!(cols, ["Scene", "PSNR", "SSIM", "Params", "FLOPs", "Time"]);
        let last = t.lines().last().unwrap();
        assert!(last.contains("43.22") && last.contains("0.992"));
        assert!(last.contains("29.051M") && last.contains("3.965T"));
    }
}

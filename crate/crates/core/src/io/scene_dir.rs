use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::tiff::{read_tiff16, write_tiff16, TiffImage};
use crate::cfa::{CfaPattern, ExposureGroup, RawFrame};
use crate::error::{Error, Result};
use crate::synth::{BlurKernel, BurstScene, FrameSpec, NoiseParams, RigidTransform, SceneSpec, FRAME_COUNT};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const GT_FILE: &str = "gt.tif";
pub const FORMAT_VERSION: &str = "1.0";
const FORMAT_MAJOR: u32 = 1;

pub fn frame_file(k: usize) -> String {
    format!("frame_{k}.tif")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub file: String,
    pub exposure_group: ExposureGroup,
    pub gain: f64,
    /// Absent in opaque scenes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<RigidTransform>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blur: Option<BlurKernel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub format_version: String,
    pub scene_id: String,
    pub cfa: CfaPattern,
    pub gains: [f64; 3],
    pub headroom: f64,
    pub frames: Vec<FrameEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl SceneManifest {
    pub fn from_scene(scene: &BurstScene, opaque: bool) -> Self {
        let spec = if opaque { None } else { scene.spec.as_ref() };
        let frames = scene
            .frames
            .iter()
            .enumerate()
            .map(|(k, f)| FrameEntry {
                file: frame_file(k),
                exposure_group: f.exposure_group,
                gain: f.exposure_gain,
                transform: spec.map(|s| s.frames[k].transform),
                blur: spec.map(|s| s.frames[k].blur),
            })
            .collect();
        let noise = if opaque { None } else { scene.frames[0].noise };
        Self {
            format_version: FORMAT_VERSION.into(),
            scene_id: scene.id.clone(),
            cfa: scene.cfa(),
            gains: scene.gains,
            headroom: scene.headroom,
            frames,
            noise,
            seed: spec.map(|s| s.seed),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Manifest(m));
        let major = self
            .format_version
            .split('.')
            .next()
            .and_then(|s| s.parse::<u32>().ok());
        match major {
            Some(FORMAT_MAJOR) => {}
            Some(m) if m > FORMAT_MAJOR => {
                return bad(format!("format_version {} is newer than supported {FORMAT_VERSION}", self.format_version))
            }
            _ => return bad(format!("unrecognized format_version {:?}", self.format_version)),
        }
        if self.frames.len() != FRAME_COUNT {
            return bad(format!("expected {FRAME_COUNT} frame entries, got {}", self.frames.len()));
        }
        for g in [ExposureGroup::Low, ExposureGroup::Mid, ExposureGroup::High] {
            let n = self.frames.iter().filter(|f| f.exposure_group == g).count();
            if n != 3 {
                return bad(format!("exposure group {g:?} has {n} frames, expected 3"));
            }
        }
        let [lo, mid, hi] = self.gains;
        if !(lo > 0.0 && lo < mid && mid < hi && hi.is_finite()) {
            return bad(format!("gains must satisfy 0 < low < mid < high, got {:?}", self.gains));
        }
        for (k, f) in self.frames.iter().enumerate() {
            let want = match f.exposure_group {
                ExposureGroup::Low => lo,
                ExposureGroup::Mid => mid,
                ExposureGroup::High => hi,
            };
            if f.gain != want {
                return bad(format!("frame {k} gain {} does not match its group gain {want}", f.gain));
            }
            if let Some(t) = f.transform {
                RigidTransform::new(t.theta, t.tx, t.ty).map_err(|e| Error::Manifest(format!("frame {k}: {e}")))?;
            }
        }
        let f0 = &self.frames[0];
        if f0.transform.is_some_and(|t| !t.is_identity()) || f0.blur.is_some_and(|b| !b.is_identity()) {
            return bad("frame 0 is the reference and must have identity transform and blur".into());
        }
        if !(self.headroom > 0.0 && self.headroom.is_finite()) {
            return bad(format!("headroom must be > 0, got {}", self.headroom));
        }
        Ok(())
    }

    /// Degradation parameters, when the manifest carries all of them.
    pub fn spec(&self) -> Option<SceneSpec> {
        let frames = self
            .frames
            .iter()
            .map(|f| {
                Some(FrameSpec {
                    group: f.exposure_group,
                    transform: f.transform?,
                    blur: f.blur?,
                })
            })
            .collect::<Option<Vec<_>>>()?;
        Some(SceneSpec {
            seed: self.seed?,
            gains: self.gains,
            frames,
            noise: self.noise?,
            cfa: self.cfa,
        })
    }
}

/// Write frames, ground truth and manifest. With `opaque` the manifest omits
/// per-frame transforms and blur, the noise profile and the seed.
pub fn save_scene(scene: &BurstScene, dir: &Path, opaque: bool) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = SceneManifest::from_scene(scene, opaque);
    manifest.validate()?;
    for (k, f) in scene.frames.iter().enumerate() {
        write_tiff16(&TiffImage::Gray(f.plane.clone()), &dir.join(frame_file(k)))?;
    }
    write_tiff16(&TiffImage::Rgb(scene.gt.clone()), &dir.join(GT_FILE))?;
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })
}

pub fn load_manifest(dir: &Path) -> Result<SceneManifest> {
    let text = read_text(&dir.join(MANIFEST_FILE))?;
    let m: SceneManifest = serde_json::from_str(&text).map_err(|e| Error::Manifest(e.to_string()))?;
    m.validate()?;
    Ok(m)
}

pub fn load_scene(dir: &Path) -> Result<BurstScene> {
    let m = load_manifest(dir)?;
    let paths: Vec<PathBuf> = m.frames.iter().map(|f| dir.join(&f.file)).collect();
    for p in paths.iter().chain(std::iter::once(&dir.join(GT_FILE))) {
        if !p.is_file() {
            return Err(Error::MissingFile(p.clone()));
        }
    }
    let mut frames = Vec::with_capacity(FRAME_COUNT);
    for (f, p) in m.frames.iter().zip(&paths) {
        let plane = read_tiff16(p)?.into_gray()?;
        frames.push(RawFrame::new(plane, m.cfa, f.gain, f.exposure_group, m.noise)?);
    }
    let dims = frames[0].plane.dims();
    if frames.iter().any(|f| f.plane.dims() != dims) {
        return Err(Error::MalformedScene("frames differ in size".into()));
    }
    let gt = read_tiff16(&dir.join(GT_FILE))?.into_rgb()?;
    if gt.dims() != dims {
        return Err(Error::MalformedScene(format!(
            "ground truth is {:?} but frames are {dims:?}",
            gt.dims()
        )));
    }
    Ok(BurstScene {
        id: m.scene_id.clone(),
        frames,
        gt,
        spec: m.spec(),
        gains: m.gains,
        headroom: m.headroom,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{procedural_hdr, synth_scene, SynthOptions};

    fn small_scene(seed: u64) -> BurstScene {
        let opts = SynthOptions::default().with_size(32, 24);
        let hdr = procedural_hdr(seed, 32, 24).unwrap();
        synth_scene(&hdr, &SceneSpec::randomized(seed, &opts)).unwrap()
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let scene = small_scene(3);
        save_scene(&scene, dir.path(), false).unwrap();
        let back = load_scene(dir.path()).unwrap();
        assert_eq!(back, scene);
    }

    #[test]
    fn opaque_strips_parameters() {
        let dir = tempfile::tempdir().unwrap();
        let scene = small_scene(4);
        save_scene(&scene, dir.path(), true).unwrap();
        let back = load_scene(dir.path()).unwrap();
        assert!(back.spec.is_none());
        assert!(back.frames.iter().all(|f| f.noise.is_none()));
        assert_eq!(back.frames[3].plane, scene.frames[3].plane);
        let text = std::fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
        assert!(!text.contains("transform") && !text.contains("read_sigma"));
    }

    #[test]
    fn missing_frame_is_named() {
        let dir = tempfile::tempdir().unwrap();
        save_scene(&small_scene(5), dir.path(), false).unwrap();
        std::fs::remove_file(dir.path().join("frame_4.tif")).unwrap();
        match load_scene(dir.path()) {
            Err(Error::MissingFile(p)) => assert!(p.ends_with("frame_4.tif")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rotated_reference_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_scene(&small_scene(6), dir.path(), false).unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let mut m: SceneManifest = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        m.frames[0].transform = Some(RigidTransform { theta: 0.1, tx: 0.0, ty: 0.0 });
        std::fs::write(&path, serde_json::to_string(&m).unwrap()).unwrap();
        assert!(matches!(load_scene(dir.path()), Err(Error::Manifest(_))));
    }

    #[test]
    fn future_major_version_rejected() {
        let mut m = SceneManifest::from_scene(&small_scene(7), false);
        m.format_version = "2.0".into();
        assert!(m.validate().is_err());
        m.format_version = "1.3".into();
        assert!(m.validate().is_ok());
    }

    #[test]
    fn noiseless_full_well_serializes_as_null() {
        let mut scene = small_scene(8);
        for f in &mut scene.frames {
            f.noise = Some(NoiseParams::noiseless());
        }
        if let Some(s) = scene.spec.as_mut() {
            s.noise = NoiseParams::noiseless();
        }
        let m = SceneManifest::from_scene(&scene, false);
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.contains("\"shot_fullwell\":null"));
        let back: SceneManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back.noise.unwrap().shot_fullwell, f64::INFINITY);
    }
}

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    camera_from_orbit, prepare_background, render_scene, sample_scene, BackgroundInfo,
    CameraModel, SceneConfig, SceneSpec, SpriteInfo, DEFAULT_ALTITUDE_M, DEFAULT_GSD_M,
};
use crate::annotation::Annotation;
use crate::datasetio::{self, DatasetManifest, ManifestEntry};
use crate::error::{Error, Result};
use crate::raster::{load_frame, load_sprite, save_frame, Band, BitDepth, Frame, Kernel, Sprite};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraConfig {
    pub gsd_m: f64,
    pub altitude_m: f64,
    pub width_px: usize,
    pub height_px: usize,
    pub band: Band,
}

impl Default for CameraConfig {
    fn default() -> Self {
        let cam = CameraModel::default();
        CameraConfig {
            gsd_m: DEFAULT_GSD_M,
            altitude_m: DEFAULT_ALTITUDE_M,
            width_px: cam.width_px,
            height_px: cam.height_px,
            band: Band::Lwir,
        }
    }
}

impl CameraConfig {
    pub fn to_model(&self) -> Result<CameraModel> {
        let mut cam = camera_from_orbit(self.gsd_m, self.altitude_m, self.width_px, self.height_px)?;
        cam.band = self.band;
        Ok(cam)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundAsset {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub path: PathBuf,
    /// Source raster resolution, meters per pixel.
    pub gsd_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpriteAsset {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub path: PathBuf,
    /// Separate alpha mask; the image's own alpha channel is used otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<PathBuf>,
    /// Meters per pixel of the sprite capture. No default exists.
    pub native_gsd_m: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AssetsConfig {
    pub backgrounds: Vec<BackgroundAsset>,
    pub sprites: Vec<SpriteAsset>,
}

fn asset_id(id: &Option<String>, path: &Path) -> String {
    id.clone().unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string())
    })
}

fn default_class_names() -> Vec<String> {
    vec!["spacecraft".to_string()]
}

fn default_bit_depth() -> u8 {
    16
}

/// Full description of a synthesis run. Loadable from JSON or TOML, with the
/// scene keys at the top level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "DatasetConfigFile", into = "DatasetConfigFile")]
pub struct DatasetConfig {
    pub camera: CameraConfig,
    pub scene: SceneConfig,
    pub assets: AssetsConfig,
    pub seed: u64,
    pub class_names: Vec<String>,
    /// Grayscale PNG depth for LWIR output, 8 or 16.
    pub bit_depth: u8,
}

// Flat on-disk layout. Kept free of `flatten` so parse errors keep their
// source positions.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetConfigFile {
    #[serde(default)]
    camera: CameraConfig,
    #[serde(default = "default_distance_range")]
    distance_range_m: (f64, f64),
    #[serde(default = "default_p_multiply")]
    p_multiply: f64,
    #[serde(default = "default_jitter")]
    contrast_jitter_range: Option<(f64, f64)>,
    #[serde(default)]
    kernel: Kernel,
    #[serde(default = "default_crop_extent")]
    crop_extent_m: (f64, f64),
    #[serde(default = "default_true")]
    random_crop: bool,
    #[serde(default)]
    allow_partial: bool,
    #[serde(default)]
    class_id: u32,
    assets: AssetsConfig,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_class_names")]
    class_names: Vec<String>,
    #[serde(default = "default_bit_depth")]
    bit_depth: u8,
}

fn default_distance_range() -> (f64, f64) {
    SceneConfig::default().distance_range_m
}

fn default_p_multiply() -> f64 {
    SceneConfig::default().p_multiply
}

fn default_jitter() -> Option<(f64, f64)> {
    SceneConfig::default().contrast_jitter_range
}

fn default_crop_extent() -> (f64, f64) {
    SceneConfig::default().crop_extent_m
}

fn default_true() -> bool {
    true
}

impl From<DatasetConfigFile> for DatasetConfig {
    fn from(f: DatasetConfigFile) -> Self {
        DatasetConfig {
            camera: f.camera,
            scene: SceneConfig {
                distance_range_m: f.distance_range_m,
                p_multiply: f.p_multiply,
                contrast_jitter_range: f.contrast_jitter_range,
                kernel: f.kernel,
                crop_extent_m: f.crop_extent_m,
                random_crop: f.random_crop,
                allow_partial: f.allow_partial,
                class_id: f.class_id,
            },
            assets: f.assets,
            seed: f.seed,
            class_names: f.class_names,
            bit_depth: f.bit_depth,
        }
    }
}

impl From<DatasetConfig> for DatasetConfigFile {
    fn from(c: DatasetConfig) -> Self {
        let s = c.scene;
        DatasetConfigFile {
            camera: c.camera,
            distance_range_m: s.distance_range_m,
            p_multiply: s.p_multiply,
            contrast_jitter_range: s.contrast_jitter_range,
            kernel: s.kernel,
            crop_extent_m: s.crop_extent_m,
            random_crop: s.random_crop,
            allow_partial: s.allow_partial,
            class_id: s.class_id,
            assets: c.assets,
            seed: c.seed,
            class_names: c.class_names,
            bit_depth: c.bit_depth,
        }
    }
}

impl DatasetConfig {
    pub fn new(assets: AssetsConfig) -> Self {
        DatasetConfig {
            camera: CameraConfig::default(),
            scene: SceneConfig::default(),
            assets,
            seed: 0,
            class_names: default_class_names(),
            bit_depth: default_bit_depth(),
        }
    }

    /// Parses a `.json` or `.toml` config and resolves relative asset paths
    /// against the config's directory.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let what = path.display().to_string();
        let mut cfg = if path.extension().is_some_and(|e| e == "toml") {
            Self::from_toml_str(&text, &what)?
        } else {
            serde_json::from_str(&text).map_err(|e| Error::json(what, &e))?
        };
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str, what: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let (line, column) = e
                .span()
                .map(|s| line_col(text, s.start))
                .unwrap_or((0, 0));
            Error::Parse {
                what: what.to_string(),
                line,
                column,
                message: e.message().to_string(),
            }
        })
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for bg in &mut self.assets.backgrounds {
            fix(&mut bg.path);
        }
        for sp in &mut self.assets.sprites {
            fix(&mut sp.path);
            if let Some(a) = sp.alpha.as_mut() {
                fix(a);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.camera.to_model()?;
        if self.assets.backgrounds.is_empty() || self.assets.sprites.is_empty() {
            return Err(Error::invalid("config needs at least one background and one sprite"));
        }
        if self.class_names.is_empty() || self.scene.class_id as usize >= self.class_names.len() {
            return Err(Error::invalid(format!(
                "class_id {} does not index class_names {:?}",
                self.scene.class_id, self.class_names
            )));
        }
        if !matches!(self.bit_depth, 8 | 16) {
            return Err(Error::invalid(format!("bit_depth must be 8 or 16, got {}", self.bit_depth)));
        }
        Ok(())
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Decoded assets plus the geometry the sampler needs.
pub struct LoadedAssets {
    pub camera: CameraModel,
    backgrounds: Vec<(BackgroundInfo, Frame)>,
    sprites: Vec<(SpriteInfo, Sprite)>,
}

impl LoadedAssets {
    pub fn load(config: &DatasetConfig) -> Result<Self> {
        config.validate()?;
        let camera = config.camera.to_model()?;
        let band = config.camera.band;
        let backgrounds = config
            .assets
            .backgrounds
            .iter()
            .map(|a| {
                let frame = load_frame(&a.path, band)?;
                let info = BackgroundInfo {
                    id: asset_id(&a.id, &a.path),
                    width_px: frame.width(),
                    height_px: frame.height(),
                    gsd_m: a.gsd_m,
                };
                Ok((info, frame))
            })
            .collect::<Result<Vec<_>>>()?;
        let sprites = config
            .assets
            .sprites
            .iter()
            .map(|a| {
                let sprite = load_sprite(&a.path, a.alpha.as_deref(), band, a.native_gsd_m)?;
                let info = SpriteInfo {
                    id: asset_id(&a.id, &a.path),
                    width_px: sprite.image.width(),
                    height_px: sprite.image.height(),
                    native_gsd_m: a.native_gsd_m,
                };
                Ok((info, sprite))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LoadedAssets {
            camera,
            backgrounds,
            sprites,
        })
    }

    /// Builds a catalog from in-memory assets.
    pub fn from_parts(
        camera: CameraModel,
        backgrounds: Vec<(String, Frame, f64)>,
        sprites: Vec<(String, Sprite)>,
    ) -> Self {
        LoadedAssets {
            camera,
            backgrounds: backgrounds
                .into_iter()
                .map(|(id, frame, gsd_m)| {
                    let info = BackgroundInfo {
                        id,
                        width_px: frame.width(),
                        height_px: frame.height(),
                        gsd_m,
                    };
                    (info, frame)
                })
                .collect(),
            sprites: sprites
                .into_iter()
                .map(|(id, sprite)| {
                    let info = SpriteInfo {
                        id,
                        width_px: sprite.image.width(),
                        height_px: sprite.image.height(),
                        native_gsd_m: sprite.native_gsd_m,
                    };
                    (info, sprite)
                })
                .collect(),
        }
    }

    pub fn background_infos(&self) -> Vec<BackgroundInfo> {
        self.backgrounds.iter().map(|(i, _)| i.clone()).collect()
    }

    pub fn sprite_infos(&self) -> Vec<SpriteInfo> {
        self.sprites.iter().map(|(i, _)| i.clone()).collect()
    }

    pub fn sample(&self, master_seed: u64, index: u64, config: &SceneConfig) -> Result<SceneSpec> {
        sample_scene(
            master_seed,
            index,
            config,
            &self.camera,
            &self.background_infos(),
            &self.sprite_infos(),
        )
    }

    /// Replays a spec against these assets.
    pub fn render_spec(&self, spec: &SceneSpec, config: &SceneConfig) -> Result<(Frame, Annotation)> {
        let (bg_info, bg) = self
            .backgrounds
            .iter()
            .find(|(i, _)| i.id == spec.background_id)
            .ok_or_else(|| Error::invalid(format!("unknown background `{}`", spec.background_id)))?;
        let (_, sprite) = self
            .sprites
            .iter()
            .find(|(i, _)| i.id == spec.sprite_id)
            .ok_or_else(|| Error::invalid(format!("unknown sprite `{}`", spec.sprite_id)))?;
        let background = prepare_background(bg, bg_info.gsd_m, spec, config, &self.camera)?;
        render_scene(spec, &background, sprite, &self.camera, config)
    }

    /// Samples and renders scene `index`.
    pub fn render(
        &self,
        master_seed: u64,
        index: u64,
        config: &SceneConfig,
    ) -> Result<(SceneSpec, Frame, Annotation)> {
        let spec = self.sample(master_seed, index, config)?;
        let (frame, ann) = self.render_spec(&spec, config)?;
        Ok((spec, frame, ann))
    }
}

/// Renders `n_scenes` composites into `out_dir`:
///
/// ```text
/// images/NNNNNN.png    composites
/// labels/NNNNNN.txt    YOLO boxes
/// annotations.json     COCO boxes + RLE masks
/// manifest.jsonl       one SceneSpec per line
/// ```
///
/// Scenes render on `jobs` workers (0 picks one per core); every output is
/// independent of `jobs`.
pub fn generate_dataset(
    config: &DatasetConfig,
    n_scenes: usize,
    master_seed: u64,
    out_dir: impl AsRef<Path>,
    jobs: usize,
) -> Result<DatasetManifest> {
    if n_scenes == 0 {
        return Err(Error::invalid("n_scenes must be at least 1"));
    }
    let assets = LoadedAssets::load(config)?;
    let out_dir = out_dir.as_ref();
    let images_dir = out_dir.join("images");
    fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;
    let depth = if config.bit_depth == 8 {
        BitDepth::Eight
    } else {
        BitDepth::Sixteen
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::invalid(format!("cannot build worker pool: {e}")))?;
    let entries = pool.install(|| {
        (0..n_scenes as u64)
            .into_par_iter()
            .map(|index| {
                let (spec, frame, ann) = assets.render(master_seed, index, &config.scene)?;
                let rel = format!("images/{}.png", spec.image_id());
                save_frame(out_dir.join(&rel), &frame, depth)?;
                Ok(ManifestEntry {
                    image_id: spec.image_id(),
                    image_path: rel,
                    width: frame.width() as u32,
                    height: frame.height() as u32,
                    annotations: vec![ann],
                    scene_spec: Some(spec),
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let manifest = DatasetManifest::new(config.class_names.clone(), entries)?;
    datasetio::write_coco_file(&manifest, out_dir.join("annotations.json"))?;
    datasetio::write_yolo(&manifest, out_dir)?;
    datasetio::write_scene_manifest(&manifest, out_dir.join("manifest.jsonl"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_and_toml_configs_parse() {
        let json = r#"{
            "camera": {"gsd_m": 156, "altitude_m": 456000, "width_px": 641, "height_px": 512},
            "distance_range_m": [20, 150],
            "p_multiply": 0.3,
            "assets": {
                "backgrounds": [{"path": "bg.png", "gsd_m": 100}],
                "sprites": [{"path": "sc.png", "native_gsd_m": 0.005}]
            },
            "seed": 9
        }"#;
        let cfg: DatasetConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.scene.p_multiply, 0.3);
        assert_eq!(cfg.scene.contrast_jitter_range, Some((0.8, 1.2)));
        assert_eq!(cfg.seed, 9);
        cfg.validate().unwrap();

        let toml_text = r#"
            seed = 3
            p_multiply = 0.5
            distance_range_m = [30.0, 90.0]
            [camera]
            gsd_m = 156.0
            altitude_m = 456000.0
            [[assets.backgrounds]]
            path = "bg.tif"
            gsd_m = 30.0
            [[assets.sprites]]
            path = "sc.png"
            native_gsd_m = 0.01
        "#;
        let cfg = DatasetConfig::from_toml_str(toml_text, "t").unwrap();
        assert_eq!(cfg.scene.distance_range_m, (30.0, 90.0));
        assert_eq!(cfg.camera.width_px, 641);
    }

    #[test]
    fn toml_errors_carry_position() {
        let err = DatasetConfig::from_toml_str("seed = 1\np_multiply = \"x\"\n", "cfg.toml").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let mut cfg = DatasetConfig::new(AssetsConfig {
            backgrounds: vec![BackgroundAsset {
                id: None,
                path: "a/bg.png".into(),
                gsd_m: 1.0,
            }],
            sprites: vec![SpriteAsset {
                id: None,
                path: "/abs/sc.png".into(),
                alpha: Some("m.png".into()),
                native_gsd_m: 0.1,
            }],
        });
        cfg.resolve_paths(Path::new("/data"));
        assert_eq!(cfg.assets.backgrounds[0].path, PathBuf::from("/data/a/bg.png"));
        assert_eq!(cfg.assets.sprites[0].path, PathBuf::from("/abs/sc.png"));
        assert_eq!(cfg.assets.sprites[0].alpha.as_deref(), Some(Path::new("/data/m.png")));
    }
}

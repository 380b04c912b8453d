use std::fs;
use std::path::{Path, PathBuf};

use super::DatasetManifest;
use crate::annotation::{Annotation, PixelBox};
use crate::error::{Error, Result};

/// `class cx cy w h`, normalized by the image size, 6 decimals.
pub fn yolo_line(class_id: u32, bbox: &PixelBox, width: u32, height: u32) -> String {
    let (w, h) = (width as f64, height as f64);
    let cx = (bbox.x_min + bbox.x_max) as f64 / (2.0 * w);
    let cy = (bbox.y_min + bbox.y_max) as f64 / (2.0 * h);
    let bw = bbox.width() as f64 / w;
    let bh = bbox.height() as f64 / h;
    format!("{class_id} {cx:.6} {cy:.6} {bw:.6} {bh:.6}")
}

/// Label path mirroring the image path: `images/x.png` -> `labels/x.txt`.
fn label_path(image_path: &str) -> PathBuf {
    let p = Path::new(image_path);
    let rel = p.strip_prefix("images").unwrap_or(p);
    Path::new("labels").join(rel).with_extension("txt")
}

/// Writes one label file per image under `out_dir/labels/`. Images without
/// annotations get an empty file.
pub fn write_yolo(manifest: &DatasetManifest, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let out_dir = out_dir.as_ref();
    let mut written = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        if e.width == 0 || e.height == 0 {
            return Err(Error::invalid(format!("image `{}` has no dimensions", e.image_id)));
        }
        let mut text = String::new();
        for a in &e.annotations {
            text.push_str(&yolo_line(a.class_id, &a.bbox, e.width, e.height));
            text.push('\n');
        }
        let path = out_dir.join(label_path(&e.image_path));
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|err| Error::io(dir, err))?;
        }
        fs::write(&path, text).map_err(|err| Error::io(&path, err))?;
        written.push(path);
    }
    Ok(written)
}

/// Reads YOLO labels back into `template`, replacing its annotations. Boxes
/// are denormalized and rounded to whole pixels; masks are not representable.
pub fn read_yolo(template: &DatasetManifest, dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    let dir = dir.as_ref();
    let mut out = template.clone();
    for e in &mut out.entries {
        let path = dir.join(label_path(&e.image_path));
        let text = fs::read_to_string(&path).map_err(|err| Error::io(&path, err))?;
        let (w, h) = (e.width as f64, e.height as f64);
        let mut anns = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| Error::Parse {
                what: path.display().to_string(),
                line: i + 1,
                column: 0,
                message,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 5 {
                return Err(bad(format!("expected 5 fields, found {}", fields.len())));
            }
            let class_id: u32 = fields[0].parse().map_err(|e| bad(format!("class id: {e}")))?;
            let mut v = [0.0f64; 4];
            for (slot, f) in v.iter_mut().zip(&fields[1..]) {
                *slot = f.parse().map_err(|e| bad(format!("`{f}`: {e}")))?;
            }
            let [cx, cy, bw, bh] = v;
            let x0 = ((cx - bw / 2.0) * w).round();
            let x1 = ((cx + bw / 2.0) * w).round();
            let y0 = ((cy - bh / 2.0) * h).round();
            let y1 = ((cy + bh / 2.0) * h).round();
            if x0 < 0.0 || y0 < 0.0 {
                return Err(bad("box extends past the image origin".into()));
            }
            let bbox = PixelBox::new(x0 as u32, y0 as u32, x1 as u32, y1 as u32)
                .map_err(|e| bad(e.to_string()))?;
            anns.push(Annotation {
                image_id: e.image_id.clone(),
                class_id,
                bbox,
                mask: None,
            });
        }
        e.annotations = anns;
    }
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasetio::ManifestEntry;

    #[test]
    fn full_frame_box() {
        let b = PixelBox::new(0, 0, 641, 512).unwrap();
        assert_eq!(yolo_line(0, &b, 641, 512), "0 0.500000 0.500000 1.000000 1.000000");
    }

    #[test]
    fn hand_computed_line() {
        let b = PixelBox::new(10, 20, 110, 220).unwrap();
        assert_eq!(yolo_line(0, &b, 641, 512), "0 0.093604 0.234375 0.156006 0.390625");
    }

    #[test]
    fn label_paths_mirror_images() {
        assert_eq!(label_path("images/000001.png"), PathBuf::from("labels/000001.txt"));
        assert_eq!(label_path("frame.tif"), PathBuf::from("labels/frame.txt"));
    }

    #[test]
    fn unannotated_image_gets_empty_file_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let m = DatasetManifest::new(
            vec!["a".into(), "b".into()],
            vec![
                ManifestEntry {
                    image_id: "x".into(),
                    image_path: "images/x.png".into(),
                    width: 641,
                    height: 512,
                    annotations: vec![],
                    scene_spec: None,
                },
                ManifestEntry {
                    image_id: "y".into(),
                    image_path: "images/y.png".into(),
                    width: 641,
                    height: 512,
                    annotations: vec![Annotation {
                        image_id: "y".into(),
                        class_id: 1,
                        bbox: PixelBox::new(3, 4, 640, 511).unwrap(),
                        mask: None,
                    }],
                    scene_spec: None,
                },
            ],
        )
        .unwrap();
        let files = write_yolo(&m, dir.path()).unwrap();
        assert_eq!(fs::read_to_string(&files[0]).unwrap(), "");
        assert_eq!(read_yolo(&m, dir.path()).unwrap(), m);
    }

    #[test]
    fn missing_dims_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let m = DatasetManifest::new(
            vec!["a".into()],
            vec![ManifestEntry {
                image_id: "x".into(),
                image_path: "images/x.png".into(),
                width: 0,
                height: 0,
                annotations: vec![],
                scene_spec: None,
            }],
        )
        .unwrap();
        assert!(write_yolo(&m, dir.path()).is_err());
    }
}

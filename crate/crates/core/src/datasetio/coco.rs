use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{DatasetManifest, ManifestEntry};
use crate::annotation::{Annotation, PixelBox, Rle};
use crate::error::{Error, Result};
use crate::scenegen::SceneSpec;

#[derive(Serialize, Deserialize)]
struct CocoFile {
    images: Vec<CocoImage>,
    annotations: Vec<CocoAnnotation>,
    categories: Vec<CocoCategory>,
}

#[derive(Serialize, Deserialize)]
struct CocoImage {
    id: u64,
    file_name: String,
    width: u32,
    height: u32,
    /// String image id; falls back to the numeric id when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scene_spec: Option<SceneSpec>,
}

#[derive(Serialize, Deserialize)]
struct CocoAnnotation {
    id: u64,
    image_id: u64,
    category_id: i64,
    /// `[x, y, width, height]`
    bbox: [f64; 4],
    #[serde(default)]
    area: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    segmentation: Option<Value>,
    #[serde(default)]
    iscrowd: u8,
}

#[derive(Serialize, Deserialize)]
struct CocoCategory {
    id: i64,
    name: String,
}

/// Serializes a manifest as COCO-style JSON with uncompressed RLE masks.
/// Category ids equal class ids.
pub fn write_coco(manifest: &DatasetManifest) -> String {
    let mut images = Vec::with_capacity(manifest.entries.len());
    let mut annotations = Vec::new();
    for (i, e) in manifest.entries.iter().enumerate() {
        let image_num = i as u64 + 1;
        images.push(CocoImage {
            id: image_num,
            file_name: e.image_path.clone(),
            width: e.width,
            height: e.height,
            name: Some(e.image_id.clone()),
            scene_spec: e.scene_spec.clone(),
        });
        for a in &e.annotations {
            let b = a.bbox;
            annotations.push(CocoAnnotation {
                id: annotations.len() as u64 + 1,
                image_id: image_num,
                category_id: a.class_id as i64,
                bbox: [b.x_min as f64, b.y_min as f64, b.width() as f64, b.height() as f64],
                area: a.mask.as_ref().map_or(b.area(), Rle::area) as f64,
                segmentation: a
                    .mask
                    .as_ref()
                    .map(|m| serde_json::to_value(m).expect("RLE serializes")),
                iscrowd: 0,
            });
        }
    }
    let categories = manifest
        .class_names
        .iter()
        .enumerate()
        .map(|(i, n)| CocoCategory {
            id: i as i64,
            name: n.clone(),
        })
        .collect();
    let file = CocoFile {
        images,
        annotations,
        categories,
    };
    serde_json::to_string_pretty(&file).expect("COCO file serializes")
}

pub fn write_coco_file(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_coco(manifest)).map_err(|e| Error::io(path, e))
}

/// Parses COCO-style JSON. Unknown fields are ignored; polygon and
/// compressed-RLE segmentations are dropped (the box is kept).
pub fn read_coco(text: &str) -> Result<DatasetManifest> {
    let file: CocoFile = serde_json::from_str(text).map_err(|e| Error::json("COCO file", &e))?;
    let parse_err = |message: String| Error::Parse {
        what: "COCO file".into(),
        line: 0,
        column: 0,
        message,
    };

    let mut cats: Vec<&CocoCategory> = file.categories.iter().collect();
    cats.sort_by_key(|c| c.id);
    let class_of: BTreeMap<i64, u32> = cats.iter().enumerate().map(|(i, c)| (c.id, i as u32)).collect();
    let class_names = cats.iter().map(|c| c.name.clone()).collect();

    let mut index_of = BTreeMap::new();
    let mut entries: Vec<ManifestEntry> = Vec::with_capacity(file.images.len());
    for img in file.images {
        let image_id = img.name.clone().unwrap_or_else(|| img.id.to_string());
        if index_of.insert(img.id, entries.len()).is_some() {
            return Err(parse_err(format!("duplicate image id {}", img.id)));
        }
        entries.push(ManifestEntry {
            image_id,
            image_path: img.file_name,
            width: img.width,
            height: img.height,
            annotations: Vec::new(),
            scene_spec: img.scene_spec,
        });
    }

    for a in file.annotations {
        let idx = *index_of
            .get(&a.image_id)
            .ok_or_else(|| parse_err(format!("annotation {} references unknown image {}", a.id, a.image_id)))?;
        let class_id = *class_of
            .get(&a.category_id)
            .ok_or_else(|| parse_err(format!("annotation {} has unknown category {}", a.id, a.category_id)))?;
        let [x, y, w, h] = a.bbox;
        if !(w > 0.0 && h > 0.0 && x >= 0.0 && y >= 0.0) {
            return Err(parse_err(format!("annotation {} has degenerate bbox {:?}", a.id, a.bbox)));
        }
        let x0 = x.round() as u32;
        let y0 = y.round() as u32;
        let bbox = PixelBox::new(x0, y0, (x + w).round() as u32, (y + h).round() as u32)
            .map_err(|e| parse_err(e.to_string()))?;
        let mask = match a.segmentation {
            Some(v @ Value::Object(_)) if v.get("counts").is_some_and(Value::is_array) => Some(
                serde_json::from_value::<Rle>(v)
                    .map_err(|e| parse_err(format!("annotation {}: bad RLE: {e}", a.id)))?,
            ),
            _ => None,
        };
        let entry = &mut entries[idx];
        entry.annotations.push(Annotation {
            image_id: entry.image_id.clone(),
            class_id,
            bbox,
            mask,
        });
    }
    DatasetManifest::new(class_names, entries)
}

pub fn read_coco_file(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_coco(&text).map_err(|e| match e {
        Error::Parse {
            line,
            column,
            message,
            ..
        } => Error::Parse {
            what: path.display().to_string(),
            line,
            column,
            message,
        },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::BinaryMask;

    fn manifest_with(ann: Vec<Annotation>) -> DatasetManifest {
        DatasetManifest::new(
            vec!["spacecraft".into()],
            vec![ManifestEntry {
                image_id: "000000".into(),
                image_path: "images/000000.png".into(),
                width: 641,
                height: 512,
                annotations: ann,
                scene_spec: None,
            }],
        )
        .unwrap()
    }

    #[test]
    fn empty_manifest_round_trips() {
        let m = DatasetManifest::new(vec![], vec![]).unwrap();
        let text = write_coco(&m);
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["annotations"].as_array().unwrap().len(), 0);
        assert_eq!(read_coco(&text).unwrap(), m);
    }

    #[test]
    fn single_box_round_trips() {
        let ann = Annotation {
            image_id: "000000".into(),
            class_id: 0,
            bbox: PixelBox::new(10, 20, 110, 220).unwrap(),
            mask: None,
        };
        let m = manifest_with(vec![ann]);
        let back = read_coco(&write_coco(&m)).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.entries[0].annotations[0].bbox, PixelBox::new(10, 20, 110, 220).unwrap());
    }

    #[test]
    fn mask_pixels_survive() {
        let mut mask = BinaryMask::new(641, 512);
        let pixels: Vec<(usize, usize)> = (0..17).map(|i| (30 + (i * 7) % 13, 40 + i / 3)).collect();
        for (x, y) in &pixels {
            mask.set(*x, *y, true);
        }
        assert_eq!(mask.count(), 17);
        let ann = Annotation::from_mask("000000", 0, &mask).unwrap();
        let back = read_coco(&write_coco(&manifest_with(vec![ann]))).unwrap();
        let decoded = back.entries[0].annotations[0].mask.as_ref().unwrap().decode().unwrap();
        let mut got: Vec<(usize, usize)> = (0..512)
            .flat_map(|y| (0..641).map(move |x| (x, y)))
            .filter(|(x, y)| decoded.get(*x, *y))
            .collect();
        let mut want = pixels.clone();
        got.sort();
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn foreign_coco_is_tolerated() {
        let text = r#"{
            "info": {"year": 2024},
            "images": [{"id": 7, "file_name": "a.jpg", "width": 100, "height": 80, "license": 1}],
            "annotations": [
                {"id": 1, "image_id": 7, "category_id": 3, "bbox": [1.0, 2.0, 10.0, 20.0],
                 "area": 200, "segmentation": [[1, 2, 11, 2, 11, 22]], "iscrowd": 0}
            ],
            "categories": [{"id": 3, "name": "sat", "supercategory": "thing"}]
        }"#;
        let m = read_coco(text).unwrap();
        assert_eq!(m.class_names, vec!["sat".to_string()]);
        let a = &m.entries[0].annotations[0];
        assert_eq!(m.entries[0].image_id, "7");
        assert_eq!(a.class_id, 0);
        assert_eq!(a.bbox, PixelBox::new(1, 2, 11, 22).unwrap());
        assert!(a.mask.is_none());
    }

    #[test]
    fn malformed_json_reports_position() {
        let err = read_coco("{\n  \"images\": [,]\n}").unwrap_err();
        match err {
            Error::Parse { line, column, .. } => {
                assert_eq!(line, 2);
                assert!(column > 0);
            }
            other => panic!("{other:?}"),
        }
    }
}

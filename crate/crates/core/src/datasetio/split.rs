use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DatasetManifest;
use crate::error::{Error, Result};

/// Train / validation / test proportions.
pub const DEFAULT_RATIOS: (f64, f64, f64) = (0.75, 0.20, 0.05);

/// Stream for the subsampling permutation, distinct from the split shuffle.
const SUBSAMPLE_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    /// Share of the full training split that `train` holds.
    pub fraction_used: f64,
    pub seed: u64,
}

impl SplitAssignment {
    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `true` when no id appears in more than one list (or twice in one).
    pub fn is_disjoint(&self) -> bool {
        let mut seen = HashSet::new();
        self.train
            .iter()
            .chain(&self.val)
            .chain(&self.test)
            .all(|id| seen.insert(id.as_str()))
    }
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5 + 1e-9).floor().max(0.0) as usize
}

/// Splits the manifest's images by a seeded permutation of their ids.
pub fn split_dataset(
    manifest: &DatasetManifest,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<SplitAssignment> {
    split_ids(&manifest.image_ids(), ratios, seed)
}

/// Test and validation sizes are `round(ratio * N)` (half up, at least one
/// each when their ratio is positive); training takes the remainder.
pub fn split_ids(ids: &[String], ratios: (f64, f64, f64), seed: u64) -> Result<SplitAssignment> {
    let (r_train, r_val, r_test) = ratios;
    if [r_train, r_val, r_test].iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(Error::invalid(format!("split ratios must be non-negative, got {ratios:?}")));
    }
    if (r_train + r_val + r_test - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split ratios must sum to 1, got {}",
            r_train + r_val + r_test
        )));
    }
    let n = ids.len();
    if n < 3 {
        return Err(Error::invalid(format!("need at least 3 images to split, got {n}")));
    }
    let mut n_test = round_half_up(r_test * n as f64);
    let mut n_val = round_half_up(r_val * n as f64);
    if r_test > 0.0 {
        n_test = n_test.max(1);
    }
    if r_val > 0.0 {
        n_val = n_val.max(1);
    }
    let min_train = usize::from(r_train > 0.0);
    if n_test + n_val + min_train > n {
        return Err(Error::invalid(format!(
            "cannot populate splits of {n} images with ratios {ratios:?}"
        )));
    }

    let mut perm: Vec<String> = ids.to_vec();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = perm[..n_test].to_vec();
    let val = perm[n_test..n_test + n_val].to_vec();
    let train = perm[n_test + n_val..].to_vec();
    Ok(SplitAssignment {
        train,
        val,
        test,
        fraction_used: 1.0,
        seed,
    })
}

/// Keeps `ceil(fraction * |train|)` training ids. For a fixed seed the kept
/// sets are nested: a smaller fraction always selects a prefix of what a
/// larger one selects.
pub fn subsample_train(split: &SplitAssignment, fraction: f64, seed: u64) -> Result<SplitAssignment> {
    if !(fraction.is_finite() && fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("fraction must be in (0, 1], got {fraction}")));
    }
    let mut perm = split.train.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SUBSAMPLE_STREAM);
    perm.shuffle(&mut rng);
    let keep = ((fraction * perm.len() as f64) - 1e-9).ceil().max(0.0) as usize;
    perm.truncate(keep.min(split.train.len()));
    Ok(SplitAssignment {
        train: perm,
        val: split.val.clone(),
        test: split.test.clone(),
        fraction_used: split.fraction_used * fraction,
        seed: split.seed,
    })
}

/// Writes `train.json`, `val.json`, `test.json` (id lists) and `split.json`
/// (the whole assignment).
pub fn write_split_files(split: &SplitAssignment, out_dir: impl AsRef<Path>) -> Result<()> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let write = |name: &str, text: String| {
        let p = out_dir.join(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    let list = |ids: &Vec<String>| serde_json::to_string_pretty(ids).expect("ids serialize");
    write("train.json", list(&split.train))?;
    write("val.json", list(&split.val))?;
    write("test.json", list(&split.test))?;
    write(
        "split.json",
        serde_json::to_string_pretty(split).expect("split serializes"),
    )
}

pub fn read_split_file(path: impl AsRef<Path>) -> Result<SplitAssignment> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), &e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{i:06}")).collect()
    }

    fn sizes(s: &SplitAssignment) -> (usize, usize, usize) {
        (s.train.len(), s.val.len(), s.test.len())
    }

    #[test]
    fn split_sizes() {
        assert_eq!(sizes(&split_ids(&ids(301), DEFAULT_RATIOS, 7).unwrap()), (226, 60, 15));
        assert_eq!(sizes(&split_ids(&ids(100), DEFAULT_RATIOS, 7).unwrap()), (75, 20, 5));
        assert_eq!(sizes(&split_ids(&ids(1804), DEFAULT_RATIOS, 7).unwrap()), (1353, 361, 90));
        assert_eq!(sizes(&split_ids(&ids(3), DEFAULT_RATIOS, 7).unwrap()), (1, 1, 1));
    }

    #[test]
    fn split_partitions_and_is_deterministic() {
        let all = ids(301);
        let a = split_ids(&all, DEFAULT_RATIOS, 11).unwrap();
        assert!(a.is_disjoint());
        assert_eq!(a.len(), 301);
        assert_eq!(a, split_ids(&all, DEFAULT_RATIOS, 11).unwrap());
        assert_ne!(a.train, split_ids(&all, DEFAULT_RATIOS, 12).unwrap().train);
    }

    #[test]
    fn split_preconditions() {
        assert!(split_ids(&ids(2), DEFAULT_RATIOS, 0).is_err());
        assert!(split_ids(&ids(10), (0.5, 0.2, 0.2), 0).is_err());
        assert!(split_ids(&ids(10), (1.2, -0.1, -0.1), 0).is_err());
    }

    #[test]
    fn subsample_sizes_and_nesting() {
        let split = split_ids(&ids(301), DEFAULT_RATIOS, 3).unwrap();
        assert_eq!(split.train.len(), 226);
        assert_eq!(subsample_train(&split, 1.0, 5).unwrap().train.len(), 226);
        let s75 = subsample_train(&split, 0.75, 5).unwrap();
        let s50 = subsample_train(&split, 0.5, 5).unwrap();
        let s125 = subsample_train(&split, 0.125, 5).unwrap();
        assert_eq!(s50.train.len(), 113);
        assert_eq!(s125.train.len(), 29);
        assert_eq!(s75.train.len(), 170);
        let set75: HashSet<_> = s75.train.iter().collect();
        assert!(s50.train.iter().all(|id| set75.contains(id)));
        let set50: HashSet<_> = s50.train.iter().collect();
        assert!(s125.train.iter().all(|id| set50.contains(id)));
        assert_eq!(s50.val, split.val);
        assert_eq!(s50.test, split.test);
        assert_eq!(s50.fraction_used, 0.5);
    }

    #[test]
    fn subsample_rejects_bad_fraction() {
        let split = split_ids(&ids(10), DEFAULT_RATIOS, 3).unwrap();
        assert!(subsample_train(&split, 0.0, 1).is_err());
        assert!(subsample_train(&split, -0.5, 1).is_err());
        assert!(subsample_train(&split, 1.5, 1).is_err());
    }

    #[test]
    fn split_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let split = split_ids(&ids(20), DEFAULT_RATIOS, 3).unwrap();
        write_split_files(&split, dir.path()).unwrap();
        assert_eq!(read_split_file(dir.path().join("split.json")).unwrap(), split);
        let train: Vec<String> =
            serde_json::from_str(&fs::read_to_string(dir.path().join("train.json")).unwrap()).unwrap();
        assert_eq!(train, split.train);
    }
}

//! Dataset directories: `manifest.jsonl` plus one chip file per modality and sample.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{class_names, load_chip, save_chip, DatasetSplit, SamplePair, SplitName, CLASS_NAMES};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const CHIP_DIR: &str = "chips";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub class: String,
    pub lat: f64,
    pub lon: f64,
    pub chip_a: String,
    pub chip_b: String,
    pub split: SplitName,
}

fn class_index(name: &str) -> Option<usize> {
    CLASS_NAMES
        .iter()
        .position(|&c| c == name)
        .or_else(|| name.strip_prefix("class")?.parse().ok())
}

fn chip_file(id: &str, modality: char) -> String {
    let safe: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{CHIP_DIR}/{safe}_{modality}.fchp")
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestRecord>> {
    let path = dir.join(MANIFEST_FILE);
    let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ManifestRecord = serde_json::from_str(&line)
            .map_err(|e| Error::format(&path, format!("line {}: {e}", n + 1)))?;
        if class_index(&rec.class).is_none() {
            return Err(Error::format(&path, format!("line {}: unknown class '{}'", n + 1, rec.class)));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_manifest(dir: &Path, records: &[ManifestRecord]) -> Result<()> {
    let path = dir.join(MANIFEST_FILE);
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r).expect("manifest record serialises"));
        text.push('\n');
    }
    let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(&path, e))
}

fn record(s: &SamplePair, names: &[String], split: SplitName) -> ManifestRecord {
    ManifestRecord {
        id: s.id.clone(),
        class: names[s.class_index].clone(),
        lat: s.lat,
        lon: s.lon,
        chip_a: chip_file(&s.id, 'a'),
        chip_b: chip_file(&s.id, 'b'),
        split,
    }
}

/// Writes chips and the manifest; splits are listed train, val, test.
pub fn write_dataset(dir: &Path, split: &DatasetSplit) -> Result<()> {
    fs::create_dir_all(dir.join(CHIP_DIR)).map_err(|e| Error::io(dir, e))?;
    let mut records = Vec::new();
    for which in [SplitName::Train, SplitName::Val, SplitName::Test] {
        for s in split.get(which) {
            let rec = record(s, &split.class_names, which);
            save_chip(&dir.join(&rec.chip_a), &s.chip_a)?;
            save_chip(&dir.join(&rec.chip_b), &s.chip_b)?;
            records.push(rec);
        }
    }
    write_manifest(dir, &records)
}

/// Rewrites only the split column of an existing manifest.
pub fn rewrite_splits(dir: &Path, split: &DatasetSplit) -> Result<()> {
    let mut records = Vec::new();
    for which in [SplitName::Train, SplitName::Val, SplitName::Test] {
        records.extend(split.get(which).iter().map(|s| record(s, &split.class_names, which)));
    }
    write_manifest(dir, &records)
}

pub fn load_dataset(dir: &Path) -> Result<DatasetSplit> {
    let records = read_manifest(dir)?;
    if records.is_empty() {
        return Err(Error::format(dir.join(MANIFEST_FILE), "manifest lists no samples"));
    }
    let indices: Vec<usize> = records.iter().map(|r| class_index(&r.class).unwrap()).collect();
    let classes = if records.iter().all(|r| CLASS_NAMES.contains(&r.class.as_str())) {
        CLASS_NAMES.len()
    } else {
        indices.iter().max().unwrap() + 1
    };
    let mut out = DatasetSplit {
        class_names: class_names(classes),
        ..Default::default()
    };
    for (rec, class) in records.into_iter().zip(indices) {
        let sample = SamplePair::new(
            rec.id,
            rec.lat,
            rec.lon,
            class,
            classes,
            load_chip(&dir.join(&rec.chip_a))?,
            load_chip(&dir.join(&rec.chip_b))?,
        )?;
        match rec.split {
            SplitName::Train => out.train.push(sample),
            SplitName::Val => out.val.push(sample),
            SplitName::Test => out.test.push(sample),
        }
    }
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mk = |id: &str, c: usize| {
            SamplePair::new(
                id.into(),
                41.9,
                12.5,
                c,
                5,
                Tensor::filled(&[4, 4, 2], c as f32),
                Tensor::filled(&[4, 4, 3], -(c as f32)),
            )
            .unwrap()
        };
        let split = DatasetSplit {
            train: vec![mk("a", 0), mk("b", 4)],
            val: vec![mk("c", 2)],
            test: vec![mk("d", 3)],
            class_names: class_names(5),
        };
        write_dataset(dir.path(), &split).unwrap();
        let text = fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
        let first = text.lines().next().unwrap();
        assert_eq!(
            first,
            r#"{"id":"a","class":"city","lat":41.9,"lon":12.5,"chip_a":"chips/a_a.fchp","chip_b":"chips/a_b.fchp","split":"train"}"#
        );
        assert_eq!(load_dataset(dir.path()).unwrap(), split);
    }

    #[test]
    fn unknown_class_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join(MANIFEST_FILE),
            r#"{"id":"a","class":"desert","lat":0,"lon":0,"chip_a":"x","chip_b":"y","split":"train"}"#,
        )
        .unwrap();
        assert!(read_manifest(dir.path()).is_err());
    }
}

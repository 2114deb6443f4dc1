//! Slide manifests: the CSV schema tying slide ids, class labels, centers,
//! and bag files together.
//!
//! Format: UTF-8 CSV with header `slide_id,label,center,bag_path`. An
//! optional first line `#classes=a,b,c` pins the class order; otherwise
//! classes are the lexicographically sorted distinct labels.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use crate::{Error, Result};

pub const MANIFEST_HEADER: [&str; 4] = ["slide_id", "label", "center", "bag_path"];

#[derive(Clone, Debug, PartialEq)]
pub struct SlideRecord {
    pub slide_id: String,
    /// Index into the manifest's class list.
    pub label: usize,
    /// Acquisition center tag (e.g. "HCUV", "HUSC").
    pub center: String,
    /// Bag file location; relative paths resolve against the manifest's
    /// directory.
    pub bag_path: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub classes: Vec<String>,
    pub records: Vec<SlideRecord>,
}

impl Manifest {
    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn class_name(&self, label: usize) -> &str {
        &self.classes[label]
    }

    /// Records per class, indexed by label.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.classes.len()];
        for r in &self.records {
            counts[r.label] += 1;
        }
        counts
    }

    pub fn resolve_bag_path(&self, base_dir: &Path, record: &SlideRecord) -> PathBuf {
        if record.bag_path.is_absolute() {
            record.bag_path.clone()
        } else {
            base_dir.join(&record.bag_path)
        }
    }
}

fn parse_classes_line(line: &str) -> Result<Vec<String>> {
    let spec = line.trim_start_matches("#classes=");
    let classes: Vec<String> = spec
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect();
    if classes.is_empty() {
        return Err(Error::parse(1, "empty #classes= declaration"));
    }
    let mut seen = std::collections::HashSet::new();
    for c in &classes {
        if !seen.insert(c.as_str()) {
            return Err(Error::parse(1, format!("duplicate class '{c}' in #classes=")));
        }
    }
    Ok(classes)
}

/// Parse a manifest file. Errors carry the 1-based line number of the
/// offending row.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.trim().is_empty() {
        return Err(Error::parse(1, "empty manifest file"));
    }

    let declared_classes = match text.lines().next() {
        Some(first) if first.starts_with("#classes=") => Some(parse_classes_line(first)?),
        _ => None,
    };

    // csv skips '#' comment lines itself, which keeps reported line numbers
    // aligned with the file.
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    {
        let headers = reader
            .headers()
            .map_err(|e| Error::parse(1, format!("cannot read header: {e}")))?;
        let got: Vec<&str> = headers.iter().collect();
        if got != MANIFEST_HEADER {
            let missing: Vec<&str> = MANIFEST_HEADER
                .iter()
                .filter(|h| !got.contains(h))
                .copied()
                .collect();
            let detail = if missing.is_empty() {
                format!("header must be exactly {:?}, got {:?}", MANIFEST_HEADER, got)
            } else {
                format!("missing column(s) {:?} in header {:?}", missing, got)
            };
            return Err(Error::parse(if declared_classes.is_some() { 2 } else { 1 }, detail));
        }
    }

    struct RawRow {
        line: u64,
        slide_id: String,
        label: String,
        center: String,
        bag_path: String,
    }

    let mut rows = Vec::new();
    let mut seen_ids: HashMap<String, u64> = HashMap::new();
    for result in reader.records() {
        let record = result.map_err(|e| {
            let line = e.position().map_or(0, csv::Position::line);
            Error::parse(line, format!("malformed row: {e}"))
        })?;
        let line = record.position().map_or(0, csv::Position::line);
        if record.len() != 4 {
            return Err(Error::parse(
                line,
                format!("expected 4 fields, got {}", record.len()),
            ));
        }
        let slide_id = record[0].to_string();
        if slide_id.is_empty() {
            return Err(Error::parse(line, "empty slide_id"));
        }
        if let Some(prev) = seen_ids.insert(slide_id.clone(), line) {
            return Err(Error::parse(
                line,
                format!("duplicate slide_id '{slide_id}' (first seen at line {prev})"),
            ));
        }
        if record[1].is_empty() {
            return Err(Error::parse(line, "empty label"));
        }
        if record[3].is_empty() {
            return Err(Error::parse(line, "empty bag_path"));
        }
        rows.push(RawRow {
            line,
            slide_id,
            label: record[1].to_string(),
            center: record[2].to_string(),
            bag_path: record[3].to_string(),
        });
    }

    if rows.is_empty() {
        return Err(Error::parse(1, "manifest declares no slides"));
    }

    let classes = match declared_classes {
        Some(c) => c,
        None => {
            let mut names: Vec<String> = rows.iter().map(|r| r.label.clone()).collect();
            names.sort();
            names.dedup();
            names
        }
    };
    if classes.len() < 2 {
        return Err(Error::Config(format!(
            "fewer than 2 classes in manifest ({} found)",
            classes.len()
        )));
    }
    let index: HashMap<&str, usize> = classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();

    let mut records = Vec::with_capacity(rows.len());
    for row in rows {
        let label = *index.get(row.label.as_str()).ok_or_else(|| {
            Error::parse(
                row.line,
                format!("label '{}' not in declared class list", row.label),
            )
        })?;
        records.push(SlideRecord {
            slide_id: row.slide_id,
            label,
            center: row.center,
            bag_path: PathBuf::from(row.bag_path),
        });
    }

    Ok(Manifest { classes, records })
}

/// Write a manifest with an explicit `#classes=` line so the class order
/// survives the round trip.
pub fn write_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("#classes=");
    out.push_str(&manifest.classes.join(","));
    out.push('\n');
    out.push_str(&MANIFEST_HEADER.join(","));
    out.push('\n');
    for r in &manifest.records {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.slide_id,
            manifest.classes[r.label],
            r.center,
            r.bag_path.display()
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(content: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.csv");
        std::fs::write(&path, content).unwrap();
        (dir, path)
    }

    #[test]
    fn parses_and_sorts_classes_lexicographically() {
        let (_d, p) = write_tmp(
            "slide_id,label,center,bag_path\n\
             s1,melanoma,HCUV,bags/s1.bag\n\
             s2,dermatofibroma,HUSC,bags/s2.bag\n\
             s3,melanoma,HCUV,bags/s3.bag\n",
        );
        let m = load_manifest(&p).unwrap();
        assert_eq!(m.classes, ["dermatofibroma", "melanoma"]);
        assert_eq!(m.records[0].label, 1);
        assert_eq!(m.records[1].label, 0);
        assert_eq!(m.class_counts(), [1, 2]);
    }

    #[test]
    fn explicit_class_order_wins() {
        let (_d, p) = write_tmp(
            "#classes=melanoma,dermatofibroma\n\
             slide_id,label,center,bag_path\n\
             s1,melanoma,HCUV,a.bag\n\
             s2,dermatofibroma,HUSC,b.bag\n",
        );
        let m = load_manifest(&p).unwrap();
        assert_eq!(m.classes, ["melanoma", "dermatofibroma"]);
        assert_eq!(m.records[0].label, 0);
    }

    #[test]
    fn single_class_is_rejected() {
        let (_d, p) = write_tmp("slide_id,label,center,bag_path\ns1,only,HCUV,a.bag\n");
        let err = load_manifest(&p).unwrap_err();
        assert!(err.to_string().contains("fewer than 2 classes"), "{err}");
    }

    #[test]
    fn duplicate_slide_id_cites_its_line() {
        // duplicate lands on line 7
        let (_d, p) = write_tmp(
            "slide_id,label,center,bag_path\n\
             s1,a,HCUV,1.bag\n\
             s2,b,HCUV,2.bag\n\
             s3,a,HCUV,3.bag\n\
             s4,b,HCUV,4.bag\n\
             s5,a,HCUV,5.bag\n\
             s2,b,HCUV,6.bag\n",
        );
        let err = load_manifest(&p).unwrap_err();
        match err {
            Error::Parse { line, ref msg } => {
                assert_eq!(line, 7, "{msg}");
                assert!(msg.contains("s2"));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn empty_file_and_missing_column_are_parse_errors() {
        let (_d, p) = write_tmp("");
        assert!(matches!(load_manifest(&p), Err(Error::Parse { .. })));

        let (_d2, p2) = write_tmp("slide_id,label,bag_path\ns1,a,x.bag\n");
        let err = load_manifest(&p2).unwrap_err();
        assert!(err.to_string().contains("center"), "{err}");
    }

    #[test]
    fn label_outside_declared_classes_is_rejected() {
        let (_d, p) = write_tmp(
            "#classes=a,b\nslide_id,label,center,bag_path\ns1,c,HCUV,x.bag\n",
        );
        let err = load_manifest(&p).unwrap_err();
        assert!(err.to_string().contains("'c'"), "{err}");
    }

    #[test]
    fn write_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = Manifest {
            classes: vec!["z".into(), "a".into()],
            records: vec![
                SlideRecord {
                    slide_id: "s1".into(),
                    label: 0,
                    center: "HCUV".into(),
                    bag_path: "bags/s1.bag".into(),
                },
                SlideRecord {
                    slide_id: "s2".into(),
                    label: 1,
                    center: "HUSC".into(),
                    bag_path: "bags/s2.bag".into(),
                },
            ],
        };
        write_manifest(&m, &path).unwrap();
        let back = load_manifest(&path).unwrap();
        assert_eq!(back, m);
    }
}

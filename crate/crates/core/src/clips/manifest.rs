//! Manifest format.
//!
//! UTF-8 text, one record per line, six tab-separated fields in this order:
//!
//! ```text
//! video_id  frame_dir  label  domain  split  frame_count
//! ```
//!
//! `label` is `0` (real) or `1` (fake); `split` is `train`, `val` or `test`.
//! Blank lines and lines starting with `#` are ignored. A relative
//! `frame_dir` is resolved against the directory containing the manifest.

use std::fmt::Write as _;
use std::path::Path;

use super::{ClipRecord, Label, Split};
use crate::error::{Error, Result};

pub const MANIFEST_HEADER: &str = "# video_id\tframe_dir\tlabel\tdomain\tsplit\tframe_count";

pub fn load_manifest(path: &Path) -> Result<Vec<ClipRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    let bad = |line: usize, msg: String| Error::Manifest {
        path: path.to_owned(),
        line,
        msg,
    };

    let mut records = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 6 {
            return Err(bad(
                lineno,
                format!("expected 6 tab-separated fields, got {}", fields.len()),
            ));
        }
        if fields[0].is_empty() || fields[1].is_empty() || fields[3].is_empty() {
            return Err(bad(lineno, "video_id, frame_dir and domain must be non-empty".into()));
        }
        let label: Label = fields[2].parse().map_err(|e| bad(lineno, e))?;
        let split: Split = fields[4].parse().map_err(|e| bad(lineno, e))?;
        let frame_count: usize = fields[5].parse().map_err(|_| {
            bad(
                lineno,
                format!("frame_count {:?} is not a non-negative integer", fields[5]),
            )
        })?;
        records.push(ClipRecord {
            video_id: fields[0].to_owned(),
            frame_dir: base.join(fields[1]),
            label,
            domain: fields[3].to_owned(),
            split,
            frame_count,
        });
    }
    Ok(records)
}

/// Write records with their `frame_dir` made relative to the manifest's directory where possible.
pub fn write_manifest(path: &Path, records: &[ClipRecord]) -> Result<()> {
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    let mut out = String::new();
    out.push_str(MANIFEST_HEADER);
    out.push('\n');
    for r in records {
        let dir = r.frame_dir.strip_prefix(base).unwrap_or(&r.frame_dir);
        for field in [&r.video_id, &r.domain] {
            if field.contains(['\t', '\n']) {
                return Err(Error::InvalidInput(format!(
                    "field {field:?} contains a tab or newline"
                )));
            }
        }
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.video_id,
            dir.display(),
            r.label as u8,
            r.domain,
            r.split,
            r.frame_count
        )
        .expect("writing to a String");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, body: &str) -> std::path::PathBuf {
        let p = dir.join("manifest.tsv");
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn preserves_order_and_resolves_dirs() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "# header\nv2\tvideos/v2\t1\tA\ttrain\t10\nv0\tvideos/v0\t0\tB\tval\t20\nv1\t/abs/v1\t0\tA\ttest\t30\n",
        );
        let recs = load_manifest(&p).unwrap();
        let ids: Vec<_> = recs.iter().map(|r| r.video_id.as_str()).collect();
        assert_eq!(ids, ["v2", "v0", "v1"]);
        assert_eq!(recs[0].frame_dir, dir.path().join("videos/v2"));
        assert_eq!(recs[2].frame_dir, Path::new("/abs/v1"));
        assert_eq!(recs[1].split, Split::Val);
        assert_eq!(recs[2].frame_count, 30);
    }

    #[test]
    fn bad_label_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "v0\td\t0\tA\ttrain\t5\nv1\td\t2\tA\ttrain\t5\n");
        let err = load_manifest(&p).unwrap_err();
        match &err {
            Error::Manifest { line, .. } => assert_eq!(*line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn unknown_split_and_short_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "v0\td\t0\tA\tdev\t5\n");
        assert!(matches!(load_manifest(&p), Err(Error::Manifest { line: 1, .. })));
        let p = write(dir.path(), "v0\td\t0\tA\n");
        assert!(matches!(load_manifest(&p), Err(Error::Manifest { line: 1, .. })));
    }

    #[test]
    fn empty_file_is_empty_list() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "");
        assert!(load_manifest(&p).unwrap().is_empty());
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_manifest(Path::new("/nonexistent/manifest.tsv")).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn write_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let recs = vec![ClipRecord {
            video_id: "A_real_0000".into(),
            frame_dir: dir.path().join("videos/A_real_0000"),
            label: Label::Real,
            domain: "A".into(),
            split: Split::Train,
            frame_count: 16,
        }];
        let p = dir.path().join("manifest.tsv");
        write_manifest(&p, &recs).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains("\tvideos/A_real_0000\t"));
        assert_eq!(load_manifest(&p).unwrap(), recs);
    }
}

use std::fs::File;
use std::io::Write;
use std::path::Path;

use super::{Dataset, LabeledExample, ObjectRef, Rating, RatingExample};
use crate::error::{Error, Result};
use crate::metric::FeatureVec;

pub const FEATURES_FILE: &str = "features.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const RATINGS_FILE: &str = "ratings.csv";

fn parse_err(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, msg: msg.into() }
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| parse_err(path, 0, format!("cannot open: {e}")))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn expect_header(path: &Path, rdr: &mut csv::Reader<File>, expected: &[&str]) -> Result<usize> {
    let header = rdr.headers().map_err(|e| parse_err(path, 1, e.to_string()))?;
    let cols: Vec<&str> = header.iter().collect();
    let ok = if expected.len() == 1 {
        cols.first() == Some(&expected[0])
    } else {
        cols == expected
    };
    if !ok {
        return Err(parse_err(
            path,
            1,
            format!("unexpected header {:?}, expected {:?}", cols, expected),
        ));
    }
    Ok(cols.len())
}

/// Reads `features.csv`, `labels.csv` and `ratings.csv`.
///
/// The class count is the largest class label found. Objects without a label
/// row are unlabelled.
pub fn load_dataset(features: &Path, labels: &Path, ratings: &Path) -> Result<Dataset> {
    let mut rdr = reader(features)?;
    let width = expect_header(features, &mut rdr, &["object_id"])?;
    if width < 2 {
        return Err(parse_err(features, 1, "no feature columns"));
    }
    let mut objects = Vec::new();
    let mut index = std::collections::HashMap::new();
    for (row, rec) in rdr.records().enumerate() {
        let line = row as u64 + 2;
        let rec = rec.map_err(|e| parse_err(features, line, e.to_string()))?;
        if rec.len() != width {
            return Err(parse_err(
                features,
                line,
                format!("expected {width} columns, found {}", rec.len()),
            ));
        }
        let id = ObjectRef::new(&rec[0]).map_err(|e| parse_err(features, line, e.to_string()))?;
        let values = rec
            .iter()
            .skip(1)
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| parse_err(features, line, format!("bad feature value: {e}")))?;
        let x = FeatureVec::new(values).map_err(|e| parse_err(features, line, e.to_string()))?;
        if index.insert(id.clone(), objects.len()).is_some() {
            return Err(parse_err(features, line, format!("duplicate object id {id}")));
        }
        objects.push((id, x));
    }

    let resolve = |path: &Path, line: u64, id: &str| -> Result<usize> {
        index
            .get(id)
            .copied()
            .ok_or_else(|| parse_err(path, line, format!("unknown object id {id:?}")))
    };

    let mut rdr = reader(labels)?;
    expect_header(labels, &mut rdr, &["object_id", "class"])?;
    let mut label_rows = Vec::new();
    let mut m = 0usize;
    for (row, rec) in rdr.records().enumerate() {
        let line = row as u64 + 2;
        let rec = rec.map_err(|e| parse_err(labels, line, e.to_string()))?;
        let object = resolve(labels, line, &rec[0])?;
        let class: usize = rec[1]
            .trim()
            .parse()
            .map_err(|e| parse_err(labels, line, format!("bad class: {e}")))?;
        if class == 0 {
            return Err(parse_err(labels, line, "classes are 1-based"));
        }
        m = m.max(class);
        label_rows.push(LabeledExample { object, class: class - 1 });
    }

    let mut rdr = reader(ratings)?;
    expect_header(ratings, &mut rdr, &["object_id_a", "object_id_b", "rating"])?;
    let mut rating_rows = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let line = row as u64 + 2;
        let rec = rec.map_err(|e| parse_err(ratings, line, e.to_string()))?;
        let a = resolve(ratings, line, &rec[0])?;
        let b = resolve(ratings, line, &rec[1])?;
        let value: u8 = rec[2]
            .trim()
            .parse()
            .map_err(|e| parse_err(ratings, line, format!("bad rating: {e}")))?;
        let rating = Rating::try_from(value).map_err(|e| parse_err(ratings, line, e.to_string()))?;
        if a == b {
            return Err(parse_err(ratings, line, "object rated against itself"));
        }
        rating_rows.push(RatingExample { a, b, rating });
    }

    Dataset::new(objects, label_rows, rating_rows, m)
}

/// Writes the three CSV files into `dir` (created if missing).
///
/// Reals use the shortest representation that parses back to the same value.
pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut out = std::io::BufWriter::new(File::create(dir.join(FEATURES_FILE))?);
    write!(out, "object_id")?;
    for k in 1..=ds.num_features() {
        write!(out, ",f{k}")?;
    }
    writeln!(out)?;
    for (id, x) in ds.ids().iter().zip(ds.features()) {
        write!(out, "{}", csv_field(id.as_str()))?;
        for v in x.iter() {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;

    let mut out = std::io::BufWriter::new(File::create(dir.join(LABELS_FILE))?);
    writeln!(out, "object_id,class")?;
    for l in ds.labels() {
        writeln!(out, "{},{}", csv_field(ds.ids()[l.object].as_str()), l.class + 1)?;
    }
    out.flush()?;

    let mut out = std::io::BufWriter::new(File::create(dir.join(RATINGS_FILE))?);
    writeln!(out, "object_id_a,object_id_b,rating")?;
    for r in ds.ratings() {
        writeln!(
            out,
            "{},{},{}",
            csv_field(ds.ids()[r.a].as_str()),
            csv_field(ds.ids()[r.b].as_str()),
            r.rating.value()
        )?;
    }
    out.flush()?;
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write_fixture(dir: &Path, ratings: &str) {
        fs::write(dir.join(FEATURES_FILE), "object_id,f1,f2\na,0,1\nb,1.5,-2\nc,3,0.25\n").unwrap();
        fs::write(dir.join(LABELS_FILE), "object_id,class\na,1\nc,2\n").unwrap();
        fs::write(dir.join(RATINGS_FILE), ratings).unwrap();
    }

    fn load(dir: &Path) -> Result<Dataset> {
        load_dataset(&dir.join(FEATURES_FILE), &dir.join(LABELS_FILE), &dir.join(RATINGS_FILE))
    }

    #[test]
    fn loads_hand_written_fixture() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture(dir.path(), "object_id_a,object_id_b,rating\na,b,3\nb,c,1\n");
        let ds = load(dir.path()).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.labels().len(), 2);
        assert_eq!(ds.ratings().len(), 2);
        assert_eq!(ds.num_features(), 2);
        assert_eq!(ds.num_classes(), 2);
        assert_eq!(ds.features()[1].as_slice(), &[1.5, -2.0]);
    }

    #[test]
    fn rating_out_of_domain_names_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture(dir.path(), "object_id_a,object_id_b,rating\na,b,3\nb,c,4\n");
        match load(dir.path()) {
            Err(Error::Parse { path, line, .. }) => {
                assert!(path.ends_with(RATINGS_FILE));
                assert_eq!(line, 3);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_object_reference_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture(dir.path(), "object_id_a,object_id_b,rating\na,zz,3\n");
        let err = load(dir.path()).unwrap_err();
        assert!(err.to_string().contains("unknown object id"), "{err}");
    }

    #[test]
    fn inconsistent_feature_count_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture(dir.path(), "object_id_a,object_id_b,rating\n");
        fs::write(dir.path().join(FEATURES_FILE), "object_id,f1,f2\na,0,1\nb,1\n").unwrap();
        assert!(matches!(load(dir.path()), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn save_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture(dir.path(), "object_id_a,object_id_b,rating\na,b,3\nb,a,2\nb,c,1\n");
        let ds = load(dir.path()).unwrap();
        let out = tempfile::tempdir().unwrap();
        save_dataset(&ds, out.path()).unwrap();
        assert_eq!(load(out.path()).unwrap(), ds);
    }
}

//! JSONL bag files: a header line followed by one bag per line.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{round_sig9, Bag, Dataset, Instance, Origin};
use crate::error::{MilError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    feature_dim: usize,
    #[serde(default)]
    provenance: String,
}

#[derive(Serialize)]
struct BagOut<'a> {
    bag_id: &'a str,
    label: u8,
    origin: Origin,
    instances: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct BagIn {
    bag_id: String,
    label: u8,
    #[serde(default = "natural")]
    origin: Origin,
    instances: Vec<Vec<f64>>,
}

fn natural() -> Origin {
    Origin::Natural
}

fn bag_line<T: Scalar>(bag: &Bag<T>) -> Result<String> {
    let out = BagOut {
        bag_id: &bag.bag_id,
        label: bag.label,
        origin: bag.origin,
        instances: bag
            .instances
            .iter()
            .map(|i| i.features.iter().map(|x| round_sig9(x.as_f64())).collect())
            .collect(),
    };
    Ok(serde_json::to_string(&out)?)
}

pub fn write_bags<T: Scalar, W: Write>(dataset: &Dataset<T>, mut w: W) -> Result<()> {
    let header = Header {
        feature_dim: dataset.feature_dim,
        provenance: dataset.provenance.clone(),
    };
    let io_err = |e| MilError::io("<writer>", e);
    writeln!(w, "{}", serde_json::to_string(&header)?).map_err(io_err)?;
    for bag in dataset.bags() {
        writeln!(w, "{}", bag_line(bag)?).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_bags<T: Scalar, R: BufRead>(r: R) -> Result<Dataset<T>> {
    let mut header: Option<Header> = None;
    let mut bags = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| MilError::io("<reader>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |e: serde_json::Error| MilError::Parse {
            line: line_no,
            reason: e.to_string(),
        };
        let Some(h) = &header else {
            header = Some(serde_json::from_str(&line).map_err(parse_err)?);
            continue;
        };
        let raw: BagIn = serde_json::from_str(&line).map_err(parse_err)?;
        if let Some(bad) = raw.instances.iter().position(|i| i.len() != h.feature_dim) {
            return Err(MilError::Dimension(format!(
                "line {line_no}, bag {}: instance {bad} has dim {} but header declares {}",
                raw.bag_id,
                raw.instances[bad].len(),
                h.feature_dim
            )));
        }
        let instances = raw
            .instances
            .into_iter()
            .map(|v| Instance::new(v.into_iter().map(T::of).collect()))
            .collect();
        let bag = Bag::new(raw.bag_id, raw.label, instances, raw.origin).map_err(|e| {
            MilError::Parse {
                line: line_no,
                reason: e.to_string(),
            }
        })?;
        bags.push(bag);
    }
    let header = header.ok_or(MilError::EmptyDataset)?;
    Dataset::new(header.feature_dim, header.provenance, bags)
}

pub fn save_bags<T: Scalar>(dataset: &Dataset<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| MilError::io(path, e))?;
    write_bags(dataset, BufWriter::new(file)).map_err(|e| relabel_io(e, path))
}

pub fn load_bags<T: Scalar>(path: impl AsRef<Path>) -> Result<Dataset<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| MilError::io(path, e))?;
    read_bags(BufReader::new(file)).map_err(|e| relabel_io(e, path))
}

/// Appends one bag, writing a header first when the file is new or empty.
pub fn append_bag<T: Scalar>(path: impl AsRef<Path>, bag: &Bag<T>, provenance: &str) -> Result<()> {
    let path = path.as_ref();
    let existing = path.exists()
        && std::fs::metadata(path)
            .map(|m| m.len() > 0)
            .unwrap_or(false);
    if existing {
        let file = File::open(path).map_err(|e| MilError::io(path, e))?;
        let mut first = String::new();
        BufReader::new(file)
            .read_line(&mut first)
            .map_err(|e| MilError::io(path, e))?;
        let header: Header = serde_json::from_str(&first).map_err(|e| MilError::Parse {
            line: 1,
            reason: e.to_string(),
        })?;
        if header.feature_dim != bag.dim() {
            return Err(MilError::Dimension(format!(
                "bag {} has dim {} but {} declares {}",
                bag.bag_id,
                bag.dim(),
                path.display(),
                header.feature_dim
            )));
        }
    }
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| MilError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| MilError::io(path, e);
    if !existing {
        let header = Header {
            feature_dim: bag.dim(),
            provenance: provenance.to_string(),
        };
        writeln!(w, "{}", serde_json::to_string(&header)?).map_err(io_err)?;
    }
    writeln!(w, "{}", bag_line(bag)?).map_err(io_err)?;
    w.flush().map_err(io_err)
}

fn relabel_io(e: MilError, path: &Path) -> MilError {
    match e {
        MilError::Io { source, .. } => MilError::io(path, source),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small() -> Dataset<f64> {
        let bags = vec![
            Bag::new(
                "b001",
                1,
                vec![
                    Instance::new(vec![0.12, -1.3]),
                    Instance::new(vec![2.0, 3.5]),
                ],
                Origin::Natural,
            )
            .unwrap(),
            Bag::new(
                "b002",
                0,
                vec![Instance::new(vec![0.0, 1e-7])],
                Origin::GeneratedSb,
            )
            .unwrap(),
            Bag::new(
                "b003",
                0,
                vec![Instance::new(vec![123456.789, -0.5]); 3],
                Origin::GeneratedFmb,
            )
            .unwrap(),
        ];
        Dataset::new(2, "unit", bags).unwrap()
    }

    #[test]
    fn round_trip_three_bags() {
        let ds = small();
        let mut buf = Vec::new();
        write_bags(&ds, &mut buf).unwrap();
        let back: Dataset<f64> = read_bags(buf.as_slice()).unwrap();
        assert_eq!(back, ds);
        let text = String::from_utf8(buf).unwrap();
        assert!(text
            .lines()
            .nth(1)
            .unwrap()
            .contains(r#""origin":"natural""#));
    }

    #[test]
    fn mixed_dims_is_a_dimension_error() {
        let text = "{\"feature_dim\": 2, \"provenance\": \"x\"}\n\
            {\"bag_id\":\"a\",\"label\":0,\"origin\":\"natural\",\"instances\":[[1,2]]}\n\
            {\"bag_id\":\"b\",\"label\":1,\"origin\":\"natural\",\"instances\":[[1,2],[3]]}\n";
        match read_bags::<f64, _>(text.as_bytes()) {
            Err(MilError::Dimension(msg)) => assert!(msg.contains("bag b"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text =
            "{\"feature_dim\": 1}\n{\"bag_id\":\"a\",\"label\":0,\"instances\":[[1]]}\n{not json\n";
        assert!(matches!(
            read_bags::<f64, _>(text.as_bytes()),
            Err(MilError::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn empty_file() {
        assert!(matches!(
            read_bags::<f64, _>("".as_bytes()),
            Err(MilError::EmptyDataset)
        ));
        assert!(matches!(
            read_bags::<f64, _>("{\"feature_dim\": 3}\n".as_bytes()),
            Err(MilError::EmptyDataset)
        ));
    }

    #[test]
    fn append_creates_header_then_checks_dim() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bags.jsonl");
        let ds = small();
        append_bag(&path, &ds.bags()[0], "img").unwrap();
        append_bag(&path, &ds.bags()[1], "img").unwrap();
        let back: Dataset<f64> = load_bags(&path).unwrap();
        assert_eq!(back.bags(), &ds.bags()[..2]);
        let wide = Bag::new("w", 0, vec![Instance::new(vec![1.0; 3])], Origin::Natural).unwrap();
        assert!(matches!(
            append_bag(&path, &wide, "img"),
            Err(MilError::Dimension(_))
        ));
    }

    proptest! {
        #[test]
        fn lossless_at_nine_digits(values in proptest::collection::vec(-1e6f64..1e6, 1..40)) {
            let rounded: Vec<f64> = values.iter().map(|&v| round_sig9(v)).collect();
            let bag = Bag::new("p", 1, vec![Instance::new(rounded)], Origin::Natural).unwrap();
            let ds = Dataset::new(values.len(), "prop", vec![bag]).unwrap();
            let mut buf = Vec::new();
            write_bags(&ds, &mut buf).unwrap();
            prop_assert_eq!(read_bags::<f64, _>(buf.as_slice()).unwrap(), ds);
        }

        #[test]
        fn f32_survives_nine_digits(values in proptest::collection::vec(-1e4f32..1e4, 1..20)) {
            let bag = Bag::new("p", 0, vec![Instance::new(values.clone())], Origin::Natural).unwrap();
            let ds = Dataset::new(values.len(), "prop", vec![bag]).unwrap();
            let mut buf = Vec::new();
            write_bags(&ds, &mut buf).unwrap();
            prop_assert_eq!(read_bags::<f32, _>(buf.as_slice()).unwrap(), ds);
        }
    }
}

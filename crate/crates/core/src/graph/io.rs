//! On-disk dataset directory: `meta.json`, `features.bin`, `edges.csv`, `labels.csv`.
//!
//! `features.bin` is the 8-byte magic `FGGCD1\0\0`, little-endian `u64` rows and
//! columns, then row-major little-endian `f32` values.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{FggcdError, Result};
use crate::numeric::DenseMatrix;

pub const FEATURES_MAGIC: [u8; 8] = *b"FGGCD1\0\0";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub num_nodes: usize,
    pub num_features: usize,
    pub num_classes: usize,
    pub class_names: Vec<String>,
}

#[derive(Debug, Deserialize, Serialize)]
struct EdgeRecord {
    src: usize,
    dst: usize,
}

#[derive(Debug, Deserialize, Serialize)]
struct LabelRecord {
    node: usize,
    label: usize,
}

pub fn load_graph(dir: impl AsRef<Path>) -> Result<Graph> {
    let dir = dir.as_ref();
    let meta_path = dir.join("meta.json");
    let meta: DatasetMeta = serde_json::from_reader(BufReader::new(
        File::open(&meta_path).map_err(|e| FggcdError::dataset(&meta_path, e.to_string()))?,
    ))
    .map_err(|e| FggcdError::dataset(&meta_path, e.to_string()))?;

    let features = read_features(&dir.join("features.bin"))?;
    let feat_path = dir.join("features.bin");
    if features.shape() != (meta.num_nodes, meta.num_features) {
        return Err(FggcdError::dataset(
            feat_path,
            format!(
                "shape {:?} disagrees with meta ({}, {})",
                features.shape(),
                meta.num_nodes,
                meta.num_features
            ),
        ));
    }

    let labels_path = dir.join("labels.csv");
    let mut labels = vec![None; meta.num_nodes];
    let mut rdr = csv::Reader::from_path(&labels_path)?;
    for (line, rec) in rdr.deserialize::<LabelRecord>().enumerate() {
        let rec = rec?;
        if rec.node >= meta.num_nodes {
            return Err(FggcdError::dataset(
                &labels_path,
                format!("record {}: node {} out of range", line + 1, rec.node),
            ));
        }
        if rec.label >= meta.num_classes {
            return Err(FggcdError::dataset(
                &labels_path,
                format!(
                    "record {}: label {} out of range for {} classes",
                    line + 1,
                    rec.label,
                    meta.num_classes
                ),
            ));
        }
        labels[rec.node] = Some(rec.label);
    }
    let labels = labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| l.ok_or_else(|| FggcdError::dataset(&labels_path, format!("node {i} has no label"))))
        .collect::<Result<Vec<_>>>()?;

    let edges_path = dir.join("edges.csv");
    let mut edges = Vec::new();
    let mut rdr = csv::Reader::from_path(&edges_path)?;
    for (line, rec) in rdr.deserialize::<EdgeRecord>().enumerate() {
        let rec = rec?;
        if rec.src >= meta.num_nodes || rec.dst >= meta.num_nodes {
            return Err(FggcdError::dataset(
                &edges_path,
                format!("record {}: edge ({}, {}) out of range", line + 1, rec.src, rec.dst),
            ));
        }
        edges.push((rec.src, rec.dst));
    }

    let mut g = Graph::new(meta.name.clone(), features, edges, labels, meta.num_classes)?;
    if meta.class_names.len() == meta.num_classes {
        g.class_names = meta.class_names;
    }
    Ok(g)
}

fn read_features(path: &Path) -> Result<DenseMatrix> {
    let mut bytes = Vec::new();
    File::open(path)
        .map_err(|e| FggcdError::dataset(path, e.to_string()))?
        .read_to_end(&mut bytes)?;
    if bytes.len() < 24 || bytes[..8] != FEATURES_MAGIC {
        return Err(FggcdError::dataset(path, "bad magic bytes"));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let cols = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes")) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(24));
    if expected != Some(bytes.len()) {
        return Err(FggcdError::dataset(
            path,
            format!("header says {rows}x{cols} but file holds {} bytes", bytes.len()),
        ));
    }
    let data = bytes[24..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect::<Vec<_>>();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(FggcdError::dataset(path, "non-finite feature value"));
    }
    DenseMatrix::from_vec(rows, cols, data)
}

/// Writes `g` in the dataset directory format. Each undirected edge is written once.
pub fn save_graph(g: &Graph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let meta = DatasetMeta {
        name: g.name.clone(),
        num_nodes: g.num_nodes(),
        num_features: g.num_features(),
        num_classes: g.num_classes(),
        class_names: g.class_names.clone(),
    };
    serde_json::to_writer_pretty(File::create(dir.join("meta.json"))?, &meta)?;

    let mut w = BufWriter::new(File::create(dir.join("features.bin"))?);
    w.write_all(&FEATURES_MAGIC)?;
    w.write_all(&(g.num_nodes() as u64).to_le_bytes())?;
    w.write_all(&(g.num_features() as u64).to_le_bytes())?;
    for v in g.features().as_slice() {
        w.write_all(&(*v as f32).to_le_bytes())?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("edges.csv"))?;
    for &(src, dst) in g.edges() {
        w.serialize(EdgeRecord { src, dst })?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("labels.csv"))?;
    for (node, &label) in g.labels().iter().enumerate() {
        w.serialize(LabelRecord { node, label })?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Graph {
        let features = DenseMatrix::from_rows(&[[0.5, 1.0], [-2.0, 0.25], [0.0, 3.0]]).unwrap();
        Graph::new("sample", features, [(0, 1), (1, 2)], vec![0, 1, 1], 2).unwrap()
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = sample();
        save_graph(&g, dir.path()).unwrap();
        let back = load_graph(dir.path()).unwrap();
        assert_eq!(back.features(), g.features());
        assert_eq!(back.edges(), g.edges());
        assert_eq!(back.labels(), g.labels());
        assert_eq!(back.name, "sample");
    }

    #[test]
    fn loader_symmetrises_directed_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let g = Graph::new("two", DenseMatrix::zeros(2, 1), [(0, 1)], vec![0, 0], 1).unwrap();
        save_graph(&g, dir.path()).unwrap();
        fs::write(dir.path().join("edges.csv"), "src,dst\n0,1\n1,0\n").unwrap();
        assert_eq!(load_graph(dir.path()).unwrap().edges(), &[(0, 1)]);
    }

    #[test]
    fn bad_magic_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        save_graph(&sample(), dir.path()).unwrap();
        let path = dir.path().join("features.bin");
        let mut bytes = fs::read(&path).unwrap();
        bytes[0] = b'X';
        fs::write(&path, bytes).unwrap();
        let err = load_graph(dir.path()).unwrap_err().to_string();
        assert!(err.contains("magic"), "{err}");
    }

    #[test]
    fn truncated_features_fail_shape_check() {
        let dir = tempfile::tempdir().unwrap();
        save_graph(&sample(), dir.path()).unwrap();
        let path = dir.path().join("features.bin");
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        let err = load_graph(dir.path()).unwrap_err().to_string();
        assert!(err.contains("header says"), "{err}");
    }

    #[test]
    fn label_out_of_range_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        save_graph(&sample(), dir.path()).unwrap();
        fs::write(dir.path().join("labels.csv"), "node,label\n0,0\n1,2\n2,1\n").unwrap();
        let err = load_graph(dir.path()).unwrap_err().to_string();
        assert!(err.contains("out of range"), "{err}");
    }
}

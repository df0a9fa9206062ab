//! Dataset bundle directory I/O and the citation-file converter.
//!
//! Bundle layout (all UTF-8, LF):
//! - `meta.json`     {"n_nodes": N, "n_classes": C, "n_features": F}
//! - `graph.edges`   one `u v` pair per line, 0-based
//! - `features.csv`  N lines of F comma-separated floats
//! - `labels.txt`    N lines, one integer class id (-1 = unknown)
//! - `split.json`    {"train": [...], "val": [...], "test": [...]} (optional)

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{PclError, Result};
use crate::graph::{mask_nodes, GraphBundle};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    n_nodes: usize,
    n_classes: usize,
    n_features: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitFile {
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| PclError::io(path.display().to_string(), e))
}

fn file_name(path: &Path) -> String {
    path.display().to_string()
}

/// Loads and validates a bundle directory.
pub fn load_bundle<S: Scalar>(dir: &Path) -> Result<GraphBundle<S>> {
    let meta_path = dir.join("meta.json");
    let meta: Meta = serde_json::from_str(&read_to_string(&meta_path)?)
        .map_err(|e| PclError::load(file_name(&meta_path), None, e.to_string()))?;

    let feat_path = dir.join("features.csv");
    let feat_text = read_to_string(&feat_path)?;
    let mut data: Vec<S> = Vec::with_capacity(meta.n_nodes * meta.n_features);
    let mut n_lines = 0;
    for (lineno, line) in feat_text.lines().enumerate() {
        n_lines += 1;
        let mut n_vals = 0;
        for field in line.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| {
                PclError::load(
                    file_name(&feat_path),
                    Some(lineno + 1),
                    format!("bad float {field:?}"),
                )
            })?;
            data.push(S::of(v));
            n_vals += 1;
        }
        if n_vals != meta.n_features {
            return Err(PclError::load(
                file_name(&feat_path),
                Some(lineno + 1),
                format!("{n_vals} values, expected {}", meta.n_features),
            ));
        }
    }
    if n_lines != meta.n_nodes {
        return Err(PclError::load(
            file_name(&feat_path),
            None,
            format!("{n_lines} rows, meta declares {}", meta.n_nodes),
        ));
    }
    let features = Tensor::from_vec(meta.n_nodes, meta.n_features, data).expect("feature shape");

    let label_path = dir.join("labels.txt");
    let label_text = read_to_string(&label_path)?;
    let mut labels = Vec::with_capacity(meta.n_nodes);
    for (lineno, line) in label_text.lines().enumerate() {
        let l: i32 = line.trim().parse().map_err(|_| {
            PclError::load(
                file_name(&label_path),
                Some(lineno + 1),
                format!("bad label {line:?}"),
            )
        })?;
        if l < -1 || l >= meta.n_classes as i32 {
            return Err(PclError::load(
                file_name(&label_path),
                Some(lineno + 1),
                format!("label {l} outside [-1, {})", meta.n_classes),
            ));
        }
        labels.push(l);
    }
    if labels.len() != meta.n_nodes {
        return Err(PclError::load(
            file_name(&label_path),
            None,
            format!("{} rows, meta declares {}", labels.len(), meta.n_nodes),
        ));
    }

    let edge_path = dir.join("graph.edges");
    let edge_text = read_to_string(&edge_path)?;
    let mut edges = Vec::new();
    for (lineno, line) in edge_text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let (u, v) = match (it.next(), it.next(), it.next()) {
            (Some(u), Some(v), None) => (u, v),
            _ => {
                return Err(PclError::load(
                    file_name(&edge_path),
                    Some(lineno + 1),
                    "expected exactly two node ids",
                ))
            }
        };
        let parse = |s: &str| -> Result<usize> {
            let id: usize = s.parse().map_err(|_| {
                PclError::load(
                    file_name(&edge_path),
                    Some(lineno + 1),
                    format!("bad node id {s:?}"),
                )
            })?;
            if id >= meta.n_nodes {
                return Err(PclError::load(
                    file_name(&edge_path),
                    Some(lineno + 1),
                    format!("node id {id} >= {}", meta.n_nodes),
                ));
            }
            Ok(id)
        };
        edges.push((parse(u)?, parse(v)?));
    }

    let bundle = GraphBundle::from_parts(features, &edges, labels, meta.n_classes)?;

    let split_path = dir.join("split.json");
    if split_path.exists() {
        let split: SplitFile = serde_json::from_str(&read_to_string(&split_path)?)
            .map_err(|e| PclError::load(file_name(&split_path), None, e.to_string()))?;
        bundle
            .with_masks(&split.train, &split.val, &split.test)
            .map_err(|e| PclError::load(file_name(&split_path), None, e.to_string()))
    } else {
        Ok(bundle)
    }
}

/// Writes a bundle directory; `load_bundle(save_bundle(b)) == b` bit-for-bit.
pub fn save_bundle<S: Scalar>(bundle: &GraphBundle<S>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| PclError::io(dir.display().to_string(), e))?;
    let write = |name: &str, text: String| -> Result<()> {
        let path = dir.join(name);
        let mut f =
            fs::File::create(&path).map_err(|e| PclError::io(path.display().to_string(), e))?;
        f.write_all(text.as_bytes())
            .map_err(|e| PclError::io(path.display().to_string(), e))
    };

    let meta = Meta {
        n_nodes: bundle.n_nodes(),
        n_classes: bundle.n_classes(),
        n_features: bundle.n_features(),
    };
    write("meta.json", serde_json::to_string_pretty(&meta).unwrap() + "\n")?;

    let mut edges = String::new();
    for &(u, v) in bundle.edges() {
        edges.push_str(&format!("{u} {v}\n"));
    }
    write("graph.edges", edges)?;

    let mut feats = String::new();
    for i in 0..bundle.n_nodes() {
        let row = bundle.features().row(i);
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                feats.push(',');
            }
            feats.push_str(&format!("{}", v.to_f64_lossy()));
        }
        feats.push('\n');
    }
    write("features.csv", feats)?;

    let mut labels = String::new();
    for &l in bundle.labels() {
        labels.push_str(&format!("{l}\n"));
    }
    write("labels.txt", labels)?;

    if bundle.has_split() {
        let split = SplitFile {
            train: mask_nodes(bundle.train_mask()),
            val: mask_nodes(bundle.val_mask()),
            test: mask_nodes(bundle.test_mask()),
        };
        write("split.json", serde_json::to_string(&split).unwrap() + "\n")?;
    }
    Ok(())
}

/// What the citation converter dropped or skipped.
#[derive(Debug, Default, Clone, Copy)]
pub struct ConvertStats {
    /// Citation lines referencing an id absent from the content file.
    pub skipped_citations: usize,
    pub dropped_self_loops: usize,
    pub dropped_duplicate_edges: usize,
}

/// Converts a citation dataset in the two-file text layout (a `.content`
/// file of `id feature... label` lines and a `.cites` file of `cited citing`
/// pairs) into a [`GraphBundle`]. Node order follows the content file; class
/// ids follow the sorted distinct label strings; citations mentioning unknown
/// ids are skipped and counted.
pub fn convert_linqs<S: Scalar>(
    content_path: &Path,
    cites_path: &Path,
) -> Result<(GraphBundle<S>, ConvertStats)> {
    let content = read_to_string(content_path)?;
    let mut ids: Vec<&str> = Vec::new();
    let mut index = std::collections::HashMap::new();
    let mut rows: Vec<Vec<S>> = Vec::new();
    let mut label_names: Vec<String> = Vec::new();
    let mut n_features = None;

    for (lineno, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 3 {
            return Err(PclError::load(
                file_name(content_path),
                Some(lineno + 1),
                "expected id, features, label",
            ));
        }
        let id = fields[0];
        let label = fields[fields.len() - 1];
        let feats = &fields[1..fields.len() - 1];
        match n_features {
            None => n_features = Some(feats.len()),
            Some(f) if f != feats.len() => {
                return Err(PclError::load(
                    file_name(content_path),
                    Some(lineno + 1),
                    format!("{} features, expected {f}", feats.len()),
                ));
            }
            _ => {}
        }
        if index.insert(id.to_owned(), ids.len()).is_some() {
            return Err(PclError::load(
                file_name(content_path),
                Some(lineno + 1),
                format!("duplicate node id {id:?}"),
            ));
        }
        ids.push(id);
        let mut row = Vec::with_capacity(feats.len());
        for f in feats {
            let v: f64 = f.parse().map_err(|_| {
                PclError::load(
                    file_name(content_path),
                    Some(lineno + 1),
                    format!("bad feature value {f:?}"),
                )
            })?;
            row.push(S::of(v));
        }
        rows.push(row);
        label_names.push(label.to_owned());
    }
    let n = ids.len();
    if n == 0 {
        return Err(PclError::load(file_name(content_path), None, "empty file"));
    }
    let n_features = n_features.unwrap();

    let mut classes: Vec<String> = label_names.clone();
    classes.sort();
    classes.dedup();
    let labels: Vec<i32> = label_names
        .iter()
        .map(|l| classes.iter().position(|c| c == l).unwrap() as i32)
        .collect();

    let cites = read_to_string(cites_path)?;
    let mut stats = ConvertStats::default();
    let mut edges = Vec::new();
    for (lineno, line) in cites.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let (a, b) = match (it.next(), it.next()) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(PclError::load(
                    file_name(cites_path),
                    Some(lineno + 1),
                    "expected two node ids",
                ))
            }
        };
        match (index.get(a), index.get(b)) {
            (Some(&u), Some(&v)) => edges.push((u, v)),
            _ => stats.skipped_citations += 1,
        }
    }

    let mut data = Vec::with_capacity(n * n_features);
    for row in rows {
        data.extend(row);
    }
    let features = Tensor::from_vec(n, n_features, data).expect("feature shape");
    let bundle = GraphBundle::from_parts(features, &edges, labels, classes.len())?;
    stats.dropped_self_loops = bundle.dropped_self_loops();
    stats.dropped_duplicate_edges = bundle.dropped_duplicate_edges();
    Ok((bundle, stats))
}

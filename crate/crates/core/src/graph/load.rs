use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    /// `<name>.content` rows `id f1 .. fd label`, `<name>.cites` rows `cited citing`.
    Citation,
    /// `src,dst` rows with optional `id,f1..fd` feature and `id,label` label files.
    Edgelist,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataSource {
    pub format: DataFormat,
    /// Content file (citation) or feature file (edge list).
    pub content: Option<PathBuf>,
    pub edges: PathBuf,
    pub labels: Option<PathBuf>,
}

struct Row<'a> {
    line: usize,
    tokens: Vec<&'a str>,
}

fn rows(text: &str) -> impl Iterator<Item = Row<'_>> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.trim();
        if l.is_empty() || l.starts_with('#') {
            return None;
        }
        let tokens = l
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .collect();
        Some(Row { line: i + 1, tokens })
    })
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_features(path: &Path, row: &Row<'_>, tokens: &[&str]) -> Result<Vec<f64>> {
    tokens
        .iter()
        .map(|t| {
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(path, row.line, format!("bad feature value `{t}`")))
        })
        .collect()
}

/// Maps label names to dense indices in sorted name order.
fn index_labels(names: &[String]) -> (Vec<usize>, Vec<String>) {
    let classes: Vec<String> = names.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let lookup: HashMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    (names.iter().map(|n| lookup[n.as_str()]).collect(), classes)
}

struct FeatureTable {
    ids: Vec<String>,
    lookup: HashMap<String, usize>,
    values: Vec<f64>,
    dim: usize,
    labels: Option<Vec<String>>,
}

/// Reads `id f1 .. fd [label]` rows.
fn read_feature_table(path: &Path, with_label: bool) -> Result<FeatureTable> {
    let text = fs::read_to_string(path)?;
    let mut table = FeatureTable {
        ids: Vec::new(),
        lookup: HashMap::new(),
        values: Vec::new(),
        dim: 0,
        labels: with_label.then(Vec::new),
    };
    let min_tokens = if with_label { 2 } else { 1 };
    let mut width = None;
    for row in rows(&text) {
        let n = row.tokens.len();
        if n < min_tokens {
            return Err(parse_err(path, row.line, "row too short"));
        }
        match width {
            None => width = Some(n),
            Some(w) if w != n => {
                return Err(parse_err(path, row.line, format!("expected {w} fields, found {n}")));
            }
            _ => {}
        }
        let id = row.tokens[0].to_string();
        let feat_end = if with_label { n - 1 } else { n };
        let feats = parse_features(path, &row, &row.tokens[1..feat_end])?;
        if table.lookup.insert(id.clone(), table.ids.len()).is_some() {
            return Err(parse_err(path, row.line, format!("duplicate node id `{id}`")));
        }
        table.dim = feats.len();
        table.values.extend(feats);
        table.ids.push(id);
        if let Some(labels) = &mut table.labels {
            labels.push(row.tokens[n - 1].to_string());
        }
    }
    Ok(table)
}

fn read_pairs(path: &Path) -> Result<Vec<(usize, String, String)>> {
    let text = fs::read_to_string(path)?;
    rows(&text)
        .map(|row| {
            if row.tokens.len() != 2 {
                return Err(parse_err(
                    path,
                    row.line,
                    format!("expected 2 fields, found {}", row.tokens.len()),
                ));
            }
            Ok((row.line, row.tokens[0].to_string(), row.tokens[1].to_string()))
        })
        .collect()
}

fn resolve_edges(path: &Path, pairs: &[(usize, String, String)], lookup: &HashMap<String, usize>) -> Result<Vec<(usize, usize)>> {
    pairs
        .iter()
        .map(|(line, a, b)| {
            let find = |id: &String| {
                lookup.get(id).copied().ok_or_else(|| Error::Reference {
                    path: path.to_path_buf(),
                    line: *line,
                    id: id.clone(),
                })
            };
            Ok((find(a)?, find(b)?))
        })
        .collect()
}

/// Loads a graph; node ids are reindexed densely in file order.
pub fn load_graph(source: &DataSource) -> Result<Graph> {
    match source.format {
        DataFormat::Citation => {
            let content = source
                .content
                .as_deref()
                .ok_or_else(|| Error::Config("citation format needs a content file".into()))?;
            let table = read_feature_table(content, true)?;
            let pairs = read_pairs(&source.edges)?;
            let edges = resolve_edges(&source.edges, &pairs, &table.lookup)?;
            let features = Tensor::matrix(table.ids.len(), table.dim, table.values)?;
            let labels = table.labels.as_deref().map(index_labels);
            let mut g = Graph::new(table.ids, &edges, features, labels)?;
            g.edge_rows = pairs.len();
            Ok(g)
        }
        DataFormat::Edgelist => {
            let pairs = read_pairs(&source.edges)?;
            let (ids, lookup, features) = match &source.content {
                Some(path) => {
                    let t = read_feature_table(path, false)?;
                    let f = Tensor::matrix(t.ids.len(), t.dim, t.values)?;
                    (t.ids, t.lookup, f)
                }
                None => {
                    let mut ids = Vec::new();
                    let mut lookup = HashMap::new();
                    for (_, a, b) in &pairs {
                        for id in [a, b] {
                            if !lookup.contains_key(id) {
                                lookup.insert(id.clone(), ids.len());
                                ids.push(id.clone());
                            }
                        }
                    }
                    // featureless graphs get one-hot identity features
                    let f = Tensor::identity(ids.len());
                    (ids, lookup, f)
                }
            };
            let edges = resolve_edges(&source.edges, &pairs, &lookup)?;
            let labels = match &source.labels {
                Some(path) => Some(read_labels(path, &ids, &lookup)?),
                None => None,
            };
            let mut g = Graph::new(ids, &edges, features, labels)?;
            g.edge_rows = pairs.len();
            Ok(g)
        }
    }
}

fn read_labels(path: &Path, ids: &[String], lookup: &HashMap<String, usize>) -> Result<(Vec<usize>, Vec<String>)> {
    let mut names: Vec<Option<String>> = vec![None; ids.len()];
    for (line, id, label) in read_pairs(path)? {
        let node = *lookup.get(&id).ok_or_else(|| Error::Reference {
            path: path.to_path_buf(),
            line,
            id: id.clone(),
        })?;
        names[node] = Some(label);
    }
    let names: Vec<String> = names
        .into_iter()
        .enumerate()
        .map(|(i, n)| n.ok_or_else(|| parse_err(path, 0, format!("no label for node `{}`", ids[i]))))
        .collect::<Result<_>>()?;
    Ok(index_labels(&names))
}

/// Detects the layout of a data directory: a `*.content`/`*.cites` pair, or
/// `edges.csv` (or `edges.tsv`) with optional `features.csv` and `labels.csv`.
pub fn detect_source(dir: &Path) -> Result<DataSource> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
    entries.sort();
    let with_ext = |ext: &str| entries.iter().find(|p| p.extension().is_some_and(|e| e == ext)).cloned();
    if let (Some(content), Some(cites)) = (with_ext("content"), with_ext("cites")) {
        return Ok(DataSource {
            format: DataFormat::Citation,
            content: Some(content),
            edges: cites,
            labels: None,
        });
    }
    let existing = |names: &[&str]| names.iter().map(|n| dir.join(n)).find(|p| p.is_file());
    let edges = existing(&["edges.csv", "edges.tsv"]).ok_or_else(|| {
        Error::Config(format!(
            "{}: no *.content/*.cites pair and no edges.csv",
            dir.display()
        ))
    })?;
    Ok(DataSource {
        format: DataFormat::Edgelist,
        content: existing(&["features.csv", "features.tsv"]),
        edges,
        labels: existing(&["labels.csv", "labels.tsv"]),
    })
}

pub fn load_dir(dir: &Path) -> Result<Graph> {
    load_graph(&detect_source(dir)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn citation_files() {
        let dir = tempfile::tempdir().unwrap();
        let content = write(
            dir.path(),
            "toy.content",
            "31336\t0\t1\t0\tNeural_Networks\n1061127\t1\t0\t0\tRule_Learning\n1106406\t0\t0\t1\tNeural_Networks\n",
        );
        let cites = write(dir.path(), "toy.cites", "31336\t1061127\n1061127\t31336\n1106406\t31336\n");
        let g = load_graph(&DataSource {
            format: DataFormat::Citation,
            content: Some(content),
            edges: cites,
            labels: None,
        })
        .unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_rows(), 3);
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.feature_dim(), 3);
        assert_eq!(g.class_names(), &["Neural_Networks", "Rule_Learning"]);
        assert_eq!(g.labels().unwrap(), &[0, 1, 0]);
        assert_eq!(g.original_id(2), "1106406");
        let detected = load_dir(dir.path()).unwrap();
        assert_eq!(detected.edges(), g.edges());
    }

    #[test]
    fn malformed_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let content = write(dir.path(), "x.content", "a 1 0 L\nb 1 L\n");
        let cites = write(dir.path(), "x.cites", "");
        let err = load_graph(&DataSource {
            format: DataFormat::Citation,
            content: Some(content),
            edges: cites,
            labels: None,
        })
        .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn dangling_endpoint_is_reference_error() {
        let dir = tempfile::tempdir().unwrap();
        let content = write(dir.path(), "x.content", "a 1 L\nb 0 L\n");
        let cites = write(dir.path(), "x.cites", "a b\n\nb zz\n");
        let err = load_graph(&DataSource {
            format: DataFormat::Citation,
            content: Some(content),
            edges: cites,
            labels: None,
        })
        .unwrap_err();
        match err {
            Error::Reference { line, id, .. } => {
                assert_eq!(line, 3);
                assert_eq!(id, "zz");
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn edgelist_with_side_files() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "edges.csv", "# src,dst\n0,1\n1,0\n1,1\n");
        write(dir.path(), "features.csv", "0,0.5,1\n1,2,3\n");
        write(dir.path(), "labels.csv", "1,b\n0,a\n");
        let g = load_dir(dir.path()).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edges(), &[(0, 1)]);
        assert_eq!(g.features().row(1), &[2.0, 3.0]);
        assert_eq!(g.labels().unwrap(), &[0, 1]);
    }

    #[test]
    fn featureless_edgelist_gets_identity_features() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "edges.csv", "x\ty\ny\tz\n");
        let g = load_dir(dir.path()).unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.features(), &Tensor::identity(3));
    }
}

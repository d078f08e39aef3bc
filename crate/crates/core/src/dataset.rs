//! Graph classification datasets in the TU multi-file text format.
//!
//! For a dataset `NAME` the directory holds:
//!
//! - `NAME_A.txt`: one `i, j` line per directed edge, 1-indexed global node ids
//! - `NAME_graph_indicator.txt`: graph id (1-indexed) of node `i` on line `i`
//! - `NAME_graph_labels.txt`: class label of graph `g` on line `g`
//! - `NAME_node_labels.txt` (optional): label of node `i` on line `i`
//!
//! Edge weights and attribute files are ignored; all edges get weight 1.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;

#[derive(Clone, Debug)]
pub struct Dataset {
    pub name: String,
    pub graphs: Vec<Graph>,
    /// Class index per graph, into `class_values`.
    pub labels: Vec<usize>,
    /// Raw class label values, ascending.
    pub class_values: Vec<i64>,
    /// Per graph, per vertex node-label index into `node_label_values`.
    pub node_labels: Option<Vec<Vec<usize>>>,
    /// Raw node label values, ascending.
    pub node_label_values: Vec<i64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn label_alphabet(&self) -> usize {
        self.node_label_values.len()
    }

    pub fn class_count(&self) -> usize {
        self.class_values.len()
    }

    /// Number of graphs in each class, indexed like `class_values`.
    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.class_count()];
        for &c in &self.labels {
            sizes[c] += 1;
        }
        sizes
    }

    /// The graphs at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            graphs: indices.iter().map(|&i| self.graphs[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_values: self.class_values.clone(),
            node_labels: self
                .node_labels
                .as_ref()
                .map(|nl| indices.iter().map(|&i| nl[i].clone()).collect()),
            node_label_values: self.node_label_values.clone(),
        }
    }

    /// `count` graphs drawn uniformly without replacement, kept in their
    /// original order.
    pub fn subsample(&self, count: usize, seed: u64) -> Result<Dataset> {
        if count > self.len() {
            return Err(Error::SampleTooLarge {
                requested: count,
                available: self.len(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = index::sample(&mut rng, self.len(), count).into_vec();
        picked.sort_unstable();
        Ok(self.select(&picked))
    }
}

/// Contents of the dataset files, for parsing without touching the disk.
#[derive(Clone, Copy, Debug)]
pub struct TuFiles<'a> {
    pub edges: &'a str,
    pub graph_indicator: &'a str,
    pub graph_labels: &'a str,
    pub node_labels: Option<&'a str>,
}

/// Non-empty lines as `(1-based line number, first comma-separated field(s))`.
fn int_rows<'a>(file: &'a str, text: &'a str) -> impl Iterator<Item = Result<(usize, Vec<i64>)>> + 'a {
    text.lines().enumerate().filter_map(move |(i, raw)| {
        let line = raw.trim();
        if line.is_empty() {
            return None;
        }
        let parsed = line
            .split(',')
            .map(|tok| {
                tok.trim().parse::<i64>().map_err(|_| Error::Parse {
                    file: file.to_string(),
                    line: i + 1,
                    message: format!("not an integer: {:?}", tok.trim()),
                })
            })
            .collect::<Result<Vec<i64>>>();
        Some(parsed.map(|v| (i + 1, v)))
    })
}

fn parse_column(file: &str, text: &str) -> Result<Vec<(usize, i64)>> {
    int_rows(file, text).map(|r| r.map(|(line, v)| (line, v[0]))).collect()
}

/// Sorted distinct values and the index of each input value among them.
fn dense_index(values: &[i64]) -> (Vec<i64>, Vec<usize>) {
    let distinct: Vec<i64> = values.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let idx = values
        .iter()
        .map(|v| distinct.binary_search(v).expect("value is present"))
        .collect();
    (distinct, idx)
}

pub fn parse_tu_dataset(name: &str, files: TuFiles<'_>) -> Result<Dataset> {
    let f_ind = format!("{name}_graph_indicator.txt");
    let f_a = format!("{name}_A.txt");
    let f_gl = format!("{name}_graph_labels.txt");
    let f_nl = format!("{name}_node_labels.txt");

    let indicator = parse_column(&f_ind, files.graph_indicator)?;
    let n_nodes = indicator.len();
    let mut graph_of = Vec::with_capacity(n_nodes);
    let mut local = Vec::with_capacity(n_nodes);
    let mut sizes: Vec<usize> = Vec::new();
    for &(line, gid) in &indicator {
        if gid < 1 || gid as u64 > n_nodes as u64 {
            return Err(Error::Parse {
                file: f_ind.clone(),
                line,
                message: format!("graph id {gid} outside 1..={n_nodes}"),
            });
        }
        let g = (gid - 1) as usize;
        if g >= sizes.len() {
            sizes.resize(g + 1, 0);
        }
        graph_of.push(g);
        local.push(sizes[g]);
        sizes[g] += 1;
    }
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::Parse {
            file: f_ind,
            line: 0,
            message: format!("graph {} has no nodes", empty + 1),
        });
    }
    let m = sizes.len();

    let mut edge_sets: Vec<BTreeSet<(usize, usize)>> = vec![BTreeSet::new(); m];
    let mut self_loops = 0usize;
    for row in int_rows(&f_a, files.edges) {
        let (line, v) = row?;
        let err = |message: String| Error::Parse {
            file: f_a.clone(),
            line,
            message,
        };
        if v.len() < 2 {
            return Err(err("expected two node ids".into()));
        }
        let mut ends = [0usize; 2];
        for (k, &id) in v[..2].iter().enumerate() {
            if id < 1 || id as u64 > n_nodes as u64 {
                return Err(err(format!("node id {id} outside 1..={n_nodes}")));
            }
            ends[k] = (id - 1) as usize;
        }
        let (a, b) = (ends[0], ends[1]);
        if graph_of[a] != graph_of[b] {
            return Err(err(format!(
                "edge joins node {} of graph {} with node {} of graph {}",
                a + 1,
                graph_of[a] + 1,
                b + 1,
                graph_of[b] + 1
            )));
        }
        let (la, lb) = (local[a], local[b]);
        if la == lb {
            self_loops += 1;
            continue;
        }
        edge_sets[graph_of[a]].insert((la.min(lb), la.max(lb)));
    }
    if self_loops > 0 {
        log::warn!("{name}: dropped {self_loops} self-loop lines");
    }

    let graph_labels = parse_column(&f_gl, files.graph_labels)?;
    if graph_labels.len() != m {
        return Err(Error::Parse {
            file: f_gl,
            line: graph_labels.last().map_or(0, |r| r.0),
            message: format!("{} graph labels for {m} graphs", graph_labels.len()),
        });
    }
    let raw: Vec<i64> = graph_labels.iter().map(|r| r.1).collect();
    let (class_values, labels) = dense_index(&raw);

    let (node_labels, node_label_values) = match files.node_labels {
        None => (None, Vec::new()),
        Some(text) => {
            let col = parse_column(&f_nl, text)?;
            if col.len() != n_nodes {
                return Err(Error::Parse {
                    file: f_nl,
                    line: col.last().map_or(0, |r| r.0),
                    message: format!("{} node labels for {n_nodes} nodes", col.len()),
                });
            }
            let raw: Vec<i64> = col.iter().map(|r| r.1).collect();
            let (values, idx) = dense_index(&raw);
            let mut per_graph: Vec<Vec<usize>> = sizes.iter().map(|&s| vec![0; s]).collect();
            for (node, &l) in idx.iter().enumerate() {
                per_graph[graph_of[node]][local[node]] = l;
            }
            (Some(per_graph), values)
        }
    };

    let graphs = edge_sets
        .into_iter()
        .enumerate()
        .map(|(g, edges)| {
            let pairs: Vec<(usize, usize)> = edges.into_iter().collect();
            Ok(Graph::from_pairs(sizes[g], &pairs)?.with_id(format!("{name}#{}", g + 1)))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Dataset {
        name: name.to_string(),
        graphs,
        labels,
        class_values,
        node_labels,
        node_label_values,
    })
}

pub fn load_tu_dataset(dir: &Path, name: &str) -> Result<Dataset> {
    let read = |suffix: &str| -> Result<String> {
        let path = dir.join(format!("{name}_{suffix}.txt"));
        if !path.is_file() {
            return Err(Error::MissingFile(path));
        }
        Ok(fs::read_to_string(path)?)
    };
    let edges = read("A")?;
    let graph_indicator = read("graph_indicator")?;
    let graph_labels = read("graph_labels")?;
    let node_labels = match read("node_labels") {
        Ok(t) => Some(t),
        Err(Error::MissingFile(_)) => None,
        Err(e) => return Err(e),
    };
    parse_tu_dataset(
        name,
        TuFiles {
            edges: &edges,
            graph_indicator: &graph_indicator,
            graph_labels: &graph_labels,
            node_labels: node_labels.as_deref(),
        },
    )
}

/// Serialized file contents: `(A, graph_indicator, graph_labels, node_labels)`.
pub fn to_tu_strings(ds: &Dataset) -> (String, String, String, Option<String>) {
    let (mut a, mut ind, mut gl) = (String::new(), String::new(), String::new());
    let mut offset = 0;
    for (g, graph) in ds.graphs.iter().enumerate() {
        for _ in 0..graph.vertex_count() {
            let _ = writeln!(ind, "{}", g + 1);
        }
        for &(i, j, _) in graph.edges() {
            let _ = writeln!(a, "{}, {}", offset + i + 1, offset + j + 1);
            let _ = writeln!(a, "{}, {}", offset + j + 1, offset + i + 1);
        }
        let _ = writeln!(gl, "{}", ds.class_values[ds.labels[g]]);
        offset += graph.vertex_count();
    }
    let nl = ds.node_labels.as_ref().map(|per_graph| {
        let mut s = String::new();
        for l in per_graph.iter().flatten() {
            let _ = writeln!(s, "{}", ds.node_label_values[*l]);
        }
        s
    });
    (a, ind, gl, nl)
}

pub fn write_tu_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let (a, ind, gl, nl) = to_tu_strings(ds);
    let name = &ds.name;
    fs::write(dir.join(format!("{name}_A.txt")), a)?;
    fs::write(dir.join(format!("{name}_graph_indicator.txt")), ind)?;
    fs::write(dir.join(format!("{name}_graph_labels.txt")), gl)?;
    if let Some(nl) = nl {
        fs::write(dir.join(format!("{name}_node_labels.txt")), nl)?;
    }
    Ok(())
}

/// Attaches a one-hot row of width `label_alphabet` to every vertex.
pub fn one_hot_features(ds: &Dataset) -> Result<Dataset> {
    let labels = ds
        .node_labels
        .as_ref()
        .ok_or_else(|| Error::invalid(format!("{} has no node labels", ds.name)))?;
    let width = ds.label_alphabet();
    let graphs = ds
        .graphs
        .iter()
        .zip(labels)
        .map(|(g, l)| {
            let f = DMatrix::from_fn(g.vertex_count(), width, |v, c| if l[v] == c { 1.0 } else { 0.0 });
            g.clone().with_features(f)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        graphs,
        ..ds.clone()
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetStats {
    pub name: String,
    pub size: usize,
    /// `(raw class value, graph count)`.
    pub classes: Vec<(i64, usize)>,
    pub label_alphabet: usize,
    pub mean_nodes: f64,
    /// Undirected edges per graph.
    pub mean_edges: f64,
    /// Directed edge lines per graph, i.e. twice `mean_edges`.
    pub mean_directed_edges: f64,
    pub mean_diameter: f64,
}

/// Largest finite hop distance between any two vertices.
pub fn diameter(g: &Graph) -> usize {
    (0..g.vertex_count())
        .map(|s| g.hop_distances(s).into_iter().flatten().max().unwrap_or(0))
        .max()
        .unwrap_or(0)
}

pub fn dataset_stats(ds: &Dataset) -> DatasetStats {
    let m = ds.len().max(1) as f64;
    let mean = |f: &dyn Fn(&Graph) -> f64| ds.graphs.iter().map(f).sum::<f64>() / m;
    let mean_edges = mean(&|g| g.edge_count() as f64);
    DatasetStats {
        name: ds.name.clone(),
        size: ds.len(),
        classes: ds.class_values.iter().copied().zip(ds.class_sizes()).collect(),
        label_alphabet: ds.label_alphabet(),
        mean_nodes: mean(&|g| g.vertex_count() as f64),
        mean_edges,
        mean_directed_edges: 2.0 * mean_edges,
        mean_diameter: mean(&|g| diameter(g) as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> Dataset {
        parse_tu_dataset(
            "T",
            TuFiles {
                edges: "1, 2\n2, 1\n2, 3\n3, 2\n3, 1\n1, 3\n",
                graph_indicator: "1\n1\n1\n",
                graph_labels: "1\n",
                node_labels: Some("0\n1\n2\n"),
            },
        )
        .unwrap()
    }

    #[test]
    fn triangle_fixture() {
        let ds = triangle();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.graphs[0].vertex_count(), 3);
        assert_eq!(ds.graphs[0].edge_count(), 3);
        let s = dataset_stats(&ds);
        assert_eq!((s.mean_nodes, s.mean_edges, s.mean_diameter), (3.0, 3.0, 1.0));
    }

    #[test]
    fn crlf_whitespace_and_single_direction_edges() {
        let ds = parse_tu_dataset(
            "P",
            TuFiles {
                edges: "1,2 \r\n2,3\r\n3 , 4\r\n\r\n",
                graph_indicator: "1\r\n1\r\n1\r\n1\r\n",
                graph_labels: "-1\r\n",
                node_labels: None,
            },
        )
        .unwrap();
        assert_eq!(ds.graphs[0].edge_count(), 3);
        assert_eq!(diameter(&ds.graphs[0]), 3);
        assert_eq!(ds.class_values, vec![-1]);
        assert!(ds.node_labels.is_none());
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = |edges: &str, ind: &str, gl: &str| {
            parse_tu_dataset(
                "X",
                TuFiles {
                    edges,
                    graph_indicator: ind,
                    graph_labels: gl,
                    node_labels: None,
                },
            )
            .unwrap_err()
        };
        match bad("1, 2\n1, x\n", "1\n1\n", "0\n") {
            Error::Parse { line: 2, file, .. } => assert_eq!(file, "X_A.txt"),
            e => panic!("{e:?}"),
        }
        assert!(matches!(bad("1, 3\n", "1\n1\n2\n", "0\n1\n"), Error::Parse { line: 1, .. }));
        assert!(matches!(bad("1, 9\n", "1\n1\n", "0\n"), Error::Parse { line: 1, .. }));
        assert!(matches!(bad("", "1\n3\n", "0\n0\n0\n"), Error::Parse { .. }));
        assert!(matches!(bad("", "1\n", "0\n1\n"), Error::Parse { .. }));
        assert!(matches!(bad("", "99999999999\n", "0\n"), Error::Parse { line: 1, .. }));
    }

    #[test]
    fn one_hot_rows() {
        let ds = one_hot_features(&triangle()).unwrap();
        let f = ds.graphs[0].features().unwrap();
        assert_eq!(f.row(1).iter().copied().collect::<Vec<_>>(), vec![0.0, 1.0, 0.0]);
        let no_labels = Dataset {
            node_labels: None,
            ..triangle()
        };
        assert!(one_hot_features(&no_labels).is_err());
    }

    #[test]
    fn round_trip_strings() {
        let ds = triangle();
        let (a, ind, gl, nl) = to_tu_strings(&ds);
        let back = parse_tu_dataset(
            "T",
            TuFiles {
                edges: &a,
                graph_indicator: &ind,
                graph_labels: &gl,
                node_labels: nl.as_deref(),
            },
        )
        .unwrap();
        assert_eq!(back.graphs[0].edges(), ds.graphs[0].edges());
        assert_eq!(back.node_labels, ds.node_labels);
    }

    #[test]
    fn missing_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_tu_dataset(dir.path(), "NONE"), Err(Error::MissingFile(_))));
    }
}

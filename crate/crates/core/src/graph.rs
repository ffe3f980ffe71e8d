//! Road graph type, invariants, and JSON serialization.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point;
use crate::scalar::Scalar;

/// Undirected road-network graph in continuous pixel coordinates.
///
/// Invariants, enforced by [`RoadGraph::new`] and the deserializer:
/// finite vertex coordinates, edge indices in range, no self loops, and
/// no duplicate edges (unordered). Isolated vertices are allowed; zero
/// vertices is a valid (empty) graph.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadGraph<S> {
    vertices: Vec<Point<S>>,
    edges: Vec<[u32; 2]>,
}

impl<S: Scalar> RoadGraph<S> {
    pub fn new(vertices: Vec<Point<S>>, edges: Vec<[u32; 2]>) -> Result<Self> {
        let g = RoadGraph { vertices, edges };
        g.validate()?;
        Ok(g)
    }

    pub fn empty() -> Self {
        RoadGraph { vertices: Vec::new(), edges: Vec::new() }
    }

    /// Graph with the given vertices and no edges.
    pub fn with_vertices(vertices: Vec<Point<S>>) -> Result<Self> {
        Self::new(vertices, Vec::new())
    }

    fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if n > u32::MAX as usize {
            return Err(Error::Contract(format!("too many vertices: {n}")));
        }
        for (i, v) in self.vertices.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Contract(format!("vertex {i} has non-finite coordinates")));
            }
        }
        let mut seen = HashSet::with_capacity(self.edges.len());
        for (k, &[a, b]) in self.edges.iter().enumerate() {
            if a as usize >= n || b as usize >= n {
                return Err(Error::Contract(format!("edge {k} references missing vertex")));
            }
            if a == b {
                return Err(Error::Contract(format!("edge {k} is a self loop at vertex {a}")));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(Error::Contract(format!("duplicate edge ({a}, {b})")));
            }
        }
        Ok(())
    }

    pub fn vertices(&self) -> &[Point<S>] {
        &self.vertices
    }

    pub fn edges(&self) -> &[[u32; 2]] {
        &self.edges
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edge_length(&self, k: usize) -> S {
        let [a, b] = self.edges[k];
        self.vertices[a as usize].dist(self.vertices[b as usize])
    }

    pub fn total_length(&self) -> S {
        (0..self.edges.len()).map(|k| self.edge_length(k)).sum()
    }

    pub fn degrees(&self) -> Vec<u32> {
        let mut deg = vec![0u32; self.vertices.len()];
        for &[a, b] in &self.edges {
            deg[a as usize] += 1;
            deg[b as usize] += 1;
        }
        deg
    }

    /// Adjacency lists of `(neighbor, edge length)` per vertex.
    pub fn adjacency(&self) -> Vec<Vec<(u32, S)>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for (k, &[a, b]) in self.edges.iter().enumerate() {
            let len = self.edge_length(k);
            adj[a as usize].push((b, len));
            adj[b as usize].push((a, len));
        }
        adj
    }

    /// Adjacency lists of `(neighbor, edge index)` per vertex.
    pub fn incidence(&self) -> Vec<Vec<(u32, u32)>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for (k, &[a, b]) in self.edges.iter().enumerate() {
            adj[a as usize].push((b, k as u32));
            adj[b as usize].push((a, k as u32));
        }
        adj
    }

    /// Connected-component label per vertex plus the component count.
    pub fn components(&self) -> (Vec<u32>, usize) {
        let n = self.vertices.len();
        let adj = self.incidence();
        let mut comp = vec![u32::MAX; n];
        let mut count = 0usize;
        let mut stack = Vec::new();
        for start in 0..n {
            if comp[start] != u32::MAX {
                continue;
            }
            comp[start] = count as u32;
            stack.push(start);
            while let Some(v) = stack.pop() {
                for &(w, _) in &adj[v] {
                    if comp[w as usize] == u32::MAX {
                        comp[w as usize] = count as u32;
                        stack.push(w as usize);
                    }
                }
            }
            count += 1;
        }
        (comp, count)
    }

    /// Restriction to the component with the most vertices. Vertex order
    /// is preserved; indices are remapped.
    pub fn largest_component(&self) -> Self {
        let (comp, count) = self.components();
        if count <= 1 {
            return self.clone();
        }
        let mut sizes = vec![0usize; count];
        for &c in &comp {
            sizes[c as usize] += 1;
        }
        let best = sizes.iter().enumerate().max_by_key(|(_, &s)| s).map(|(i, _)| i as u32).unwrap();
        let mut remap = vec![u32::MAX; self.vertices.len()];
        let mut vertices = Vec::new();
        for (i, &c) in comp.iter().enumerate() {
            if c == best {
                remap[i] = vertices.len() as u32;
                vertices.push(self.vertices[i]);
            }
        }
        let edges = self
            .edges
            .iter()
            .filter(|&&[a, b]| comp[a as usize] == best && comp[b as usize] == best)
            .map(|&[a, b]| [remap[a as usize], remap[b as usize]])
            .collect();
        RoadGraph { vertices, edges }
    }

    /// Indices of bridge edges (removal disconnects their component).
    pub fn bridges(&self) -> Vec<usize> {
        let n = self.vertices.len();
        let adj = self.incidence();
        let mut disc = vec![0u32; n];
        let mut low = vec![0u32; n];
        let mut visited = vec![false; n];
        let mut timer = 1u32;
        let mut bridges = Vec::new();
        // Iterative DFS: (vertex, incoming edge index, next adjacency slot).
        let mut stack: Vec<(u32, u32, usize)> = Vec::new();
        for root in 0..n {
            if visited[root] {
                continue;
            }
            visited[root] = true;
            disc[root] = timer;
            low[root] = timer;
            timer += 1;
            stack.push((root as u32, u32::MAX, 0));
            while let Some(&mut (v, in_edge, ref mut slot)) = stack.last_mut() {
                if *slot < adj[v as usize].len() {
                    let (w, e) = adj[v as usize][*slot];
                    *slot += 1;
                    if e == in_edge {
                        continue;
                    }
                    if visited[w as usize] {
                        low[v as usize] = low[v as usize].min(disc[w as usize]);
                    } else {
                        visited[w as usize] = true;
                        disc[w as usize] = timer;
                        low[w as usize] = timer;
                        timer += 1;
                        stack.push((w, e, 0));
                    }
                } else {
                    stack.pop();
                    if let Some(&mut (parent, _, _)) = stack.last_mut() {
                        low[parent as usize] = low[parent as usize].min(low[v as usize]);
                        if low[v as usize] > disc[parent as usize] {
                            bridges.push(in_edge as usize);
                        }
                    }
                }
            }
        }
        bridges
    }

    /// Copy with one edge removed.
    pub fn without_edge(&self, k: usize) -> Self {
        let mut edges = self.edges.clone();
        edges.remove(k);
        RoadGraph { vertices: self.vertices.clone(), edges }
    }

    pub fn cast<T: Scalar>(&self) -> RoadGraph<T> {
        RoadGraph {
            vertices: self.vertices.iter().map(|p| p.cast()).collect(),
            edges: self.edges.clone(),
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let file = GraphFile {
            vertices: self.vertices.iter().map(|p| [p.x.to_f64_lossy(), p.y.to_f64_lossy()]).collect(),
            edges: self.edges.clone(),
        };
        let text = serde_json::to_string(&file)
            .map_err(|e| Error::Format(format!("graph serialization failed: {e}")))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GraphFile =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("bad graph JSON: {e}")))?;
        let vertices = file.vertices.iter().map(|&[x, y]| Point::new(S::of(x), S::of(y))).collect();
        Self::new(vertices, file.edges)
    }

    pub fn to_json(&self) -> String {
        let file = GraphFile {
            vertices: self.vertices.iter().map(|p| [p.x.to_f64_lossy(), p.y.to_f64_lossy()]).collect(),
            edges: self.edges.clone(),
        };
        serde_json::to_string(&file).expect("graph JSON serialization cannot fail")
    }
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    vertices: Vec<[f64; 2]>,
    edges: Vec<[u32; 2]>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_graph(n: usize) -> RoadGraph<f64> {
        let vertices = (0..n).map(|i| Point::new(i as f64 * 10.0, 0.0)).collect();
        let edges = (0..n - 1).map(|i| [i as u32, i as u32 + 1]).collect();
        RoadGraph::new(vertices, edges).unwrap()
    }

    #[test]
    fn rejects_invalid_edges() {
        let vs = vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0)];
        assert!(matches!(
            RoadGraph::new(vs.clone(), vec![[0, 2]]),
            Err(Error::Contract(_))
        ));
        assert!(matches!(RoadGraph::new(vs.clone(), vec![[1, 1]]), Err(Error::Contract(_))));
        assert!(matches!(
            RoadGraph::new(vs.clone(), vec![[0, 1], [1, 0]]),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            RoadGraph::new(vec![Point::new(f64::NAN, 0.0)], vec![]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn empty_graph_is_valid() {
        let g: RoadGraph<f64> = RoadGraph::empty();
        assert_eq!(g.vertex_count(), 0);
        assert_eq!(g.total_length(), 0.0);
        let (_, count) = g.components();
        assert_eq!(count, 0);
    }

    #[test]
    fn degrees_and_length() {
        let g = path_graph(4);
        assert_eq!(g.degrees(), vec![1, 2, 2, 1]);
        assert_eq!(g.total_length(), 30.0);
    }

    #[test]
    fn components_and_largest() {
        let vs = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(50.0, 50.0),
        ];
        let g = RoadGraph::new(vs, vec![[0, 1], [1, 2]]).unwrap();
        let (comp, count) = g.components();
        assert_eq!(count, 2);
        assert_eq!(comp[0], comp[2]);
        assert_ne!(comp[0], comp[3]);
        let big = g.largest_component();
        assert_eq!(big.vertex_count(), 3);
        assert_eq!(big.edge_count(), 2);
    }

    #[test]
    fn bridges_on_path_and_cycle() {
        let g = path_graph(4);
        let mut b = g.bridges();
        b.sort_unstable();
        assert_eq!(b, vec![0, 1, 2]);

        let vs: Vec<Point<f64>> = (0..4)
            .map(|i| {
                let a = i as f64 * std::f64::consts::FRAC_PI_2;
                Point::new(a.cos(), a.sin())
            })
            .collect();
        let cycle = RoadGraph::new(vs, vec![[0, 1], [1, 2], [2, 3], [3, 0]]).unwrap();
        assert!(cycle.bridges().is_empty());
    }

    #[test]
    fn json_round_trip_preserves_bits() {
        let g = RoadGraph::new(
            vec![Point::new(0.1 + 0.2, 17.25), Point::new(1e-17, 123456.789)],
            vec![[0, 1]],
        )
        .unwrap();
        let text = g.to_json();
        let back: RoadGraph<f64> = RoadGraph::from_json(&text).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn json_shape_matches_contract() {
        let g = RoadGraph::new(
            vec![Point::new(1.0, 2.0), Point::new(3.0, 4.0)],
            vec![[0, 1]],
        )
        .unwrap();
        let v: serde_json::Value = serde_json::from_str(&g.to_json()).unwrap();
        assert_eq!(v["vertices"][1][0], 3.0);
        assert_eq!(v["edges"][0][1], 1);
    }

    #[test]
    fn rejects_malformed_json() {
        assert!(matches!(
            RoadGraph::<f64>::from_json("{\"vertices\": [[0, 0]]}"),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            RoadGraph::<f64>::from_json("{\"vertices\": [[0, 0]], \"edges\": [[0, 5]]}"),
            Err(Error::Contract(_))
        ));
    }
}

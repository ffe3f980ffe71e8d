//! Teacher-forcing sample generation: subdivide ground-truth edges,
//! emulate the vertex detector with random scores plus the real NMS,
//! label source/target pairs by bounded graph connectivity, and build
//! perturbed decoder samples. Also the patch augmentations (rotation,
//! continuous graph crop) used to diversify training windows.

use std::collections::hash_map::Entry;
use std::collections::{BinaryHeap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::ExtractionConfig;
use crate::error::{Error, Result};
use crate::geom::{clip_segment_to_rect, Point};
use crate::graph::RoadGraph;
use crate::nms::{nms_tagged, ScoredPoint};
use crate::scalar::Scalar;
use crate::toponet::TopoSample;

/// Split every edge longer than `max_seg` into equal parts no longer
/// than `max_seg`. Original vertices keep their indices; split points
/// are appended in edge order, so edge `(a, b)` becomes the chain
/// `a, p1, .., p_{n-1}, b`. Total length is preserved.
pub fn subdivide<S: Scalar>(graph: &RoadGraph<S>, max_seg: f64) -> Result<RoadGraph<S>> {
    if !(max_seg > 0.0) {
        return Err(Error::Contract(format!("max_seg = {max_seg} must be positive")));
    }
    let mut vertices = graph.vertices().to_vec();
    let mut edges = Vec::with_capacity(graph.edge_count());
    for &[a, b] in graph.edges() {
        let pa = vertices[a as usize];
        let pb = vertices[b as usize];
        let len = pa.dist(pb).to_f64_lossy();
        if len <= max_seg {
            edges.push([a, b]);
            continue;
        }
        let parts = (len / max_seg).ceil() as usize;
        let mut prev = a;
        for i in 1..parts {
            let t = S::of(i as f64 / parts as f64);
            let idx = vertices.len() as u32;
            vertices.push(pa.lerp(pb, t));
            edges.push([prev, idx]);
            prev = idx;
        }
        edges.push([prev, b]);
    }
    RoadGraph::new(vertices, edges)
}

/// Emulate the vertex detector on a ground-truth graph: every vertex
/// gets an independent `U(0, 1)` score and the same greedy NMS used on
/// real masks keeps a `d_v`-separated subset. Returns kept vertex
/// indices in suppression order, deterministic in `seed`.
pub fn emulate_vertex_prediction<S: Scalar>(
    graph: &RoadGraph<S>,
    d_v: f64,
    seed: u64,
) -> Result<Vec<u32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let candidates: Vec<(ScoredPoint<S>, u32)> = graph
        .vertices()
        .iter()
        .enumerate()
        .map(|(i, &point)| {
            (ScoredPoint { point, score: S::of(rng.random::<f64>()) }, i as u32)
        })
        .collect();
    Ok(nms_tagged(candidates, d_v)?.into_iter().map(|(_, tag)| tag).collect())
}

#[derive(PartialEq)]
struct HeapEntry<S> {
    dist: S,
    node: u32,
}

impl<S: Scalar> Eq for HeapEntry<S> {}

impl<S: Scalar> Ord for HeapEntry<S> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Reversed so the max-heap pops the smallest distance;
        // distances are finite and non-negative by construction.
        other.dist.partial_cmp(&self.dist).unwrap().then(other.node.cmp(&self.node))
    }
}

impl<S: Scalar> PartialOrd for HeapEntry<S> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Connectivity labels for one source against its target anchors:
/// `label[k]` is true iff `targets[k]` is reachable from `source`
/// along the graph within geodesic distance `r_nbr` (inclusive) by a
/// path whose interior avoids every other target anchor. A detected
/// vertex sitting between the pair therefore claims the connection,
/// and the decoder learns to link only directly adjacent vertices.
///
/// Implemented as one Dijkstra sweep in which target anchors terminate
/// expansion: a settled target is never relaxed through.
pub fn connectivity_labels<S: Scalar>(
    graph: &RoadGraph<S>,
    source: u32,
    targets: &[u32],
    r_nbr: f64,
) -> Result<Vec<bool>> {
    let n = graph.vertex_count();
    for &t in targets.iter().chain(std::iter::once(&source)) {
        if t as usize >= n {
            return Err(Error::Contract(format!("vertex {t} out of range for {n} vertices")));
        }
    }
    if !(r_nbr > 0.0) {
        return Err(Error::Contract(format!("r_nbr = {r_nbr} must be positive")));
    }
    let mut slot_of: HashMap<u32, Vec<usize>> = HashMap::new();
    for (k, &t) in targets.iter().enumerate() {
        slot_of.entry(t).or_default().push(k);
    }
    let adjacency = graph.adjacency();
    let bound = S::of(r_nbr);
    let mut dist = vec![S::infinity(); n];
    let mut labels = vec![false; targets.len()];
    let mut heap = BinaryHeap::new();
    dist[source as usize] = S::zero();
    heap.push(HeapEntry { dist: S::zero(), node: source });
    while let Some(HeapEntry { dist: d, node }) = heap.pop() {
        if d > dist[node as usize] {
            continue;
        }
        if let Some(slots) = slot_of.get(&node) {
            for &k in slots {
                labels[k] = true;
            }
            if node != source {
                continue; // terminate at target anchors, never through
            }
        }
        for &(next, w) in &adjacency[node as usize] {
            let nd = d + w;
            if nd <= bound && nd < dist[next as usize] {
                dist[next as usize] = nd;
                heap.push(HeapEntry { dist: nd, node: next });
            }
        }
    }
    Ok(labels)
}

/// Assemble the slot layout for one source over a detected vertex
/// list: targets are the other detected vertices within `r_nbr`
/// (inclusive, straight-line), nearest first with index order breaking
/// ties, capped at `n_nbr`; remaining slots are padding anchored at
/// the source point. Labels start at zero. Also returns, per valid
/// slot, the index into `points` it refers to.
pub fn build_sample<S: Scalar>(
    points: &[Point<S>],
    source: usize,
    cfg: &ExtractionConfig,
) -> Result<(TopoSample<S>, Vec<usize>)> {
    cfg.validate()?;
    let src = *points
        .get(source)
        .ok_or_else(|| Error::Contract(format!("source {source} out of range")))?;
    let r_sq = S::of(cfg.r_nbr * cfg.r_nbr);
    let mut nearby: Vec<(S, usize)> = points
        .iter()
        .enumerate()
        .filter(|&(i, p)| i != source && p.dist_sq(src) <= r_sq)
        .map(|(i, p)| (p.dist_sq(src), i))
        .collect();
    nearby.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    nearby.truncate(cfg.n_nbr);

    let slot_points: Vec<usize> = nearby.iter().map(|&(_, i)| i).collect();
    let mut targets: Vec<Point<S>> = slot_points.iter().map(|&i| points[i]).collect();
    let mut valid = vec![true; targets.len()];
    let mut labels = vec![S::zero(); targets.len()];
    targets.resize(cfg.n_nbr, src);
    valid.resize(cfg.n_nbr, false);
    labels.resize(cfg.n_nbr, S::zero());
    Ok((TopoSample { source: src, targets, valid, labels }, slot_points))
}

/// Full teacher-forcing pipeline for one window graph (vertices inside
/// `[0, width-1] x [0, height-1]`): subdivide, emulate detection,
/// draw up to `n_sample` sources without replacement, label slots by
/// [`connectivity_labels`] on the clean geometry, then perturb the
/// detected vertex list once with `N(0, sigma_perturb^2)` per
/// coordinate (clamped to the window) and rebuild every sample's
/// coordinates from the shared perturbed list. `sigma_perturb = 0`
/// draws nothing and keeps coordinates exact.
pub fn make_topo_samples<S: Scalar>(
    graph: &RoadGraph<S>,
    width: usize,
    height: usize,
    cfg: &ExtractionConfig,
    seed: u64,
) -> Result<Vec<TopoSample<S>>> {
    cfg.validate()?;
    let (w_max, h_max) = (S::of((width - 1) as f64), S::of((height - 1) as f64));
    for &p in graph.vertices() {
        if p.x < S::zero() || p.x > w_max || p.y < S::zero() || p.y > h_max {
            return Err(Error::Contract(format!(
                "vertex ({}, {}) outside window {width}x{height}",
                p.x, p.y
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sub = subdivide(graph, cfg.max_segment())?;
    let detected = emulate_vertex_prediction(&sub, cfg.d_v, rng.random())?;
    if detected.is_empty() {
        return Ok(Vec::new());
    }
    let det_points: Vec<Point<S>> = detected.iter().map(|&i| sub.vertices()[i as usize]).collect();

    // Partial Fisher-Yates: the first `n_sources` entries become a
    // uniform draw without replacement.
    let mut order: Vec<usize> = (0..det_points.len()).collect();
    let n_sources = cfg.n_sample.min(order.len());
    for i in 0..n_sources {
        let j = rng.random_range(i..order.len());
        order.swap(i, j);
    }

    let mut samples = Vec::with_capacity(n_sources);
    let mut slot_maps = Vec::with_capacity(n_sources);
    for &src in &order[..n_sources] {
        let (mut sample, slot_points) = build_sample(&det_points, src, cfg)?;
        let anchors: Vec<u32> = slot_points.iter().map(|&i| detected[i]).collect();
        let labels = connectivity_labels(&sub, detected[src], &anchors, cfg.r_nbr)?;
        for (slot, reached) in labels.iter().enumerate() {
            sample.labels[slot] = if *reached { S::one() } else { S::zero() };
        }
        samples.push(sample);
        slot_maps.push((src, slot_points));
    }

    if cfg.sigma_perturb > 0.0 {
        let normal = Normal::new(0.0, cfg.sigma_perturb)
            .map_err(|e| Error::Contract(format!("bad perturbation sigma: {e}")))?;
        let perturbed: Vec<Point<S>> = det_points
            .iter()
            .map(|p| {
                let dx = S::of(normal.sample(&mut rng));
                let dy = S::of(normal.sample(&mut rng));
                Point::new(
                    (p.x + dx).max(S::zero()).min(w_max),
                    (p.y + dy).max(S::zero()).min(h_max),
                )
            })
            .collect();
        for (sample, (src, slot_points)) in samples.iter_mut().zip(&slot_maps) {
            sample.source = perturbed[*src];
            for (slot, &det_idx) in slot_points.iter().enumerate() {
                sample.targets[slot] = perturbed[det_idx];
            }
            for slot in slot_points.len()..sample.targets.len() {
                sample.targets[slot] = perturbed[*src];
            }
        }
    }
    Ok(samples)
}

/// Rotate a graph a quarter turn clockwise inside a `width x height`
/// pixel patch: `(x, y)` maps to `(height - 1 - y, x)` and the patch
/// becomes `height x width`.
pub fn rot90_graph<S: Scalar>(
    graph: &RoadGraph<S>,
    width: usize,
    height: usize,
) -> Result<RoadGraph<S>> {
    let (w_max, h_max) = (S::of((width - 1) as f64), S::of((height - 1) as f64));
    let vertices = graph
        .vertices()
        .iter()
        .map(|p| {
            if p.x < S::zero() || p.x > w_max || p.y < S::zero() || p.y > h_max {
                return Err(Error::Contract(format!(
                    "vertex ({}, {}) outside patch {width}x{height}",
                    p.x, p.y
                )));
            }
            Ok(Point::new(h_max - p.y, p.x))
        })
        .collect::<Result<Vec<_>>>()?;
    RoadGraph::new(vertices, graph.edges().to_vec())
}

/// Rotate a mask a quarter turn clockwise; a `W x H` mask becomes
/// `H x W` with `out(H - 1 - y, x) = in(x, y)`.
pub fn rot90_mask<S: Scalar>(mask: &crate::mask::ProbMask<S>) -> crate::mask::ProbMask<S> {
    let (w, h) = (mask.width(), mask.height());
    let mut out = crate::mask::ProbMask::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..2 {
                out.set(h - 1 - y, x, ch, mask.get(x, y, ch));
            }
        }
    }
    out
}

/// Crop a graph to the pixel rectangle with integer origin `(x0, y0)`
/// and size `width x height`, translating into crop-local coordinates.
/// Edges are clipped continuously against `[0, width-1] x [0,
/// height-1]`; clip points become new boundary vertices (deduplicated
/// per exact position), so roads crossing the crop edge stay roads
/// instead of disappearing.
pub fn crop_graph<S: Scalar>(
    graph: &RoadGraph<S>,
    x0: usize,
    y0: usize,
    width: usize,
    height: usize,
) -> Result<RoadGraph<S>> {
    if width == 0 || height == 0 {
        return Err(Error::Contract("crop size must be positive".into()));
    }
    let min = Point::new(S::zero(), S::zero());
    let max = Point::new(S::of((width - 1) as f64), S::of((height - 1) as f64));
    let shift = Point::new(S::of(x0 as f64), S::of(y0 as f64));

    let mut vertices: Vec<Point<S>> = Vec::new();
    let mut index_of_old: HashMap<u32, u32> = HashMap::new();
    let mut index_of_cut: HashMap<(u64, u64), u32> = HashMap::new();
    let mut edges = Vec::new();

    let inside = |p: Point<S>| {
        p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y
    };
    for &[a, b] in graph.edges() {
        let pa = Point::new(graph.vertices()[a as usize].x - shift.x, graph.vertices()[a as usize].y - shift.y);
        let pb = Point::new(graph.vertices()[b as usize].x - shift.x, graph.vertices()[b as usize].y - shift.y);
        let Some((ca, cb, t0, t1)) = clip_segment_to_rect(pa, pb, min, max) else {
            continue;
        };
        if ca == cb {
            continue; // grazing contact, no usable edge
        }
        let mut endpoint = |old: u32, clipped: Point<S>, t: S, t_keep: S, vertices: &mut Vec<Point<S>>| {
            if t == t_keep {
                *index_of_old.entry(old).or_insert_with(|| {
                    vertices.push(clipped);
                    (vertices.len() - 1) as u32
                })
            } else {
                let key = (
                    clipped.x.to_f64_lossy().to_bits(),
                    clipped.y.to_f64_lossy().to_bits(),
                );
                match index_of_cut.entry(key) {
                    Entry::Occupied(e) => *e.get(),
                    Entry::Vacant(e) => {
                        vertices.push(clipped);
                        *e.insert((vertices.len() - 1) as u32)
                    }
                }
            }
        };
        let ia = endpoint(a, ca, t0, S::zero(), &mut vertices);
        let ib = endpoint(b, cb, t1, S::one(), &mut vertices);
        if ia != ib {
            edges.push([ia.min(ib), ia.max(ib)]);
        }
    }
    // Interior vertices whose edges were all dropped (or isolated
    // vertices) still belong to the crop.
    for (i, &p) in graph.vertices().iter().enumerate() {
        let local = Point::new(p.x - shift.x, p.y - shift.y);
        if inside(local) && !index_of_old.contains_key(&(i as u32)) {
            index_of_old.insert(i as u32, vertices.len() as u32);
            vertices.push(local);
        }
    }
    edges.sort();
    edges.dedup();
    RoadGraph::new(vertices, edges)
}

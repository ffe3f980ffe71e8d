//! Greedy non-maximum suppression and mask-to-vertex extraction.

use crate::config::ExtractionConfig;
use crate::error::{Error, Result};
use crate::geom::{Point, PointGrid};
use crate::graph::RoadGraph;
use crate::mask::{ProbMask, CH_INTERSECTION, CH_ROAD};
use crate::scalar::Scalar;

/// Candidate or kept point with its probability score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredPoint<S> {
    pub point: Point<S>,
    pub score: S,
}

/// Greedy NMS over scored points: sort by descending score (ties by
/// ascending `(y, x)`, further ties by input order), then traverse; a
/// point is kept unless it lies strictly within `d_v` of an already
/// kept point. Suppressed points never suppress others. Kept points
/// are returned in traversal order, so pairwise distances among them
/// are at least `d_v`.
pub fn nms_scored<S: Scalar>(
    candidates: Vec<ScoredPoint<S>>,
    d_v: f64,
) -> Result<Vec<ScoredPoint<S>>> {
    let tagged: Vec<(ScoredPoint<S>, u32)> =
        candidates.into_iter().zip(0u32..).collect();
    Ok(nms_tagged(tagged, d_v)?.into_iter().map(|(c, _)| c).collect())
}

/// [`nms_scored`] keeping a caller-supplied tag per candidate (for
/// example a vertex index), so kept points stay identifiable even when
/// coordinates collide.
pub fn nms_tagged<S: Scalar>(
    mut candidates: Vec<(ScoredPoint<S>, u32)>,
    d_v: f64,
) -> Result<Vec<(ScoredPoint<S>, u32)>> {
    if !(d_v > 0.0) {
        return Err(Error::Contract(format!("d_v = {d_v} must be positive")));
    }
    for (c, _) in &candidates {
        if !c.score.is_finite() || !c.point.is_finite() {
            return Err(Error::Contract("non-finite NMS candidate".into()));
        }
    }
    candidates.sort_by(|(a, _), (b, _)| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then(a.point.y.partial_cmp(&b.point.y).unwrap())
            .then(a.point.x.partial_cmp(&b.point.x).unwrap())
    });
    let dv = S::of(d_v);
    let dv_sq = dv * dv;
    let mut kept: Vec<(ScoredPoint<S>, u32)> = Vec::new();
    let mut grid = PointGrid::new(d_v);
    for (c, tag) in candidates {
        let mut suppressed = false;
        grid.for_each_candidate(c.point, d_v, |id| {
            if !suppressed && kept[id as usize].0.point.dist_sq(c.point) < dv_sq {
                suppressed = true;
            }
        });
        if !suppressed {
            grid.insert(kept.len() as u32, c.point);
            kept.push((c, tag));
        }
    }
    Ok(kept)
}

/// [`nms_scored`] returning only the kept coordinates.
pub fn nms_points<S: Scalar>(candidates: &[(Point<S>, S)], d_v: f64) -> Result<Vec<Point<S>>> {
    let scored = candidates.iter().map(|&(point, score)| ScoredPoint { point, score }).collect();
    Ok(nms_scored(scored, d_v)?.into_iter().map(|s| s.point).collect())
}

fn channel_candidates<S: Scalar>(mask: &ProbMask<S>, channel: usize, t: f64) -> Vec<ScoredPoint<S>> {
    let threshold = S::of(t);
    let mut out = Vec::new();
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            let v = mask.get(x, y, channel);
            if v > threshold {
                out.push(ScoredPoint { point: Point::new(S::of(x as f64), S::of(y as f64)), score: v });
            }
        }
    }
    out
}

/// Score boost that ranks every intersection vertex above every road
/// vertex in the joint suppression pass (road scores stay within `(t, 1]`).
pub const INTERSECTION_PRIORITY: f64 = 2.0;

/// Extract graph vertices from a two-channel probability mask:
/// suppress each channel separately at radius `d_v`, then suppress the
/// union with intersection scores lifted by [`INTERSECTION_PRIORITY`]
/// so junction vertices win over nearby road vertices. Vertices land on
/// pixel centers; the returned graph has no edges.
pub fn extract_vertices<S: Scalar>(mask: &ProbMask<S>, cfg: &ExtractionConfig) -> Result<RoadGraph<S>> {
    cfg.validate()?;
    let road = nms_scored(channel_candidates(mask, CH_ROAD, cfg.t), cfg.d_v)?;
    let inter = nms_scored(channel_candidates(mask, CH_INTERSECTION, cfg.t), cfg.d_v)?;
    let mut joined = Vec::with_capacity(road.len() + inter.len());
    joined.extend(road);
    joined.extend(inter.into_iter().map(|s| ScoredPoint {
        point: s.point,
        score: s.score + S::of(INTERSECTION_PRIORITY),
    }));
    let kept = nms_scored(joined, cfg.d_v)?;
    RoadGraph::with_vertices(kept.into_iter().map(|s| s.point).collect())
}

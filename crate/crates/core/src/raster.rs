//! Graph-to-mask rasterization, Gaussian blur, and window fusion.

use crate::error::{Error, Result};
use crate::geom::{dist_point_segment, Point};
use crate::graph::RoadGraph;
use crate::mask::{ProbMask, CH_INTERSECTION, CH_ROAD};
use crate::scalar::Scalar;

/// Half-width of the rasterized road stroke: pixels whose center lies
/// within this distance of an edge segment are road pixels (a 3-px
/// stroke with round caps).
pub const STROKE_RADIUS: f64 = 1.5;

/// Radius of the disc drawn around every vertex whose degree is not 2.
pub const INTERSECTION_RADIUS: f64 = 3.0;

/// Binary road channel: pixel centers within [`STROKE_RADIUS`] of any
/// edge. Row-major `width * height` plane.
pub fn rasterize_road_channel<S: Scalar>(
    graph: &RoadGraph<S>,
    width: usize,
    height: usize,
) -> Vec<S> {
    let mut plane = vec![S::zero(); width * height];
    let vs = graph.vertices();
    for &[a, b] in graph.edges() {
        let pa = vs[a as usize];
        let pb = vs[b as usize];
        stamp_segment(&mut plane, width, height, pa, pb, STROKE_RADIUS);
    }
    plane
}

/// Binary intersection channel: discs of [`INTERSECTION_RADIUS`] around
/// vertices whose degree differs from 2 (junctions, dead ends, isolated
/// vertices).
pub fn rasterize_intersection_channel<S: Scalar>(
    graph: &RoadGraph<S>,
    width: usize,
    height: usize,
) -> Vec<S> {
    let mut plane = vec![S::zero(); width * height];
    let degrees = graph.degrees();
    for (v, &deg) in degrees.iter().enumerate() {
        if deg != 2 {
            stamp_disc(&mut plane, width, height, graph.vertices()[v], INTERSECTION_RADIUS);
        }
    }
    plane
}

/// Both label channels as a [`ProbMask`].
pub fn rasterize_mask<S: Scalar>(graph: &RoadGraph<S>, width: usize, height: usize) -> ProbMask<S> {
    let road = rasterize_road_channel(graph, width, height);
    let inter = rasterize_intersection_channel(graph, width, height);
    let mut mask = ProbMask::zeros(width, height);
    for y in 0..height {
        for x in 0..width {
            mask.set(x, y, CH_ROAD, road[y * width + x]);
            mask.set(x, y, CH_INTERSECTION, inter[y * width + x]);
        }
    }
    mask
}

fn stamp_segment<S: Scalar>(
    plane: &mut [S],
    width: usize,
    height: usize,
    a: Point<S>,
    b: Point<S>,
    radius: f64,
) {
    let (x0, x1) = pixel_range(a.x.to_f64_lossy(), b.x.to_f64_lossy(), radius, width);
    let (y0, y1) = pixel_range(a.y.to_f64_lossy(), b.y.to_f64_lossy(), radius, height);
    let r = S::of(radius);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let p = Point::new(S::of(x as f64), S::of(y as f64));
            if dist_point_segment(p, a, b) <= r {
                plane[y * width + x] = S::one();
            }
        }
    }
}

fn stamp_disc<S: Scalar>(plane: &mut [S], width: usize, height: usize, c: Point<S>, radius: f64) {
    let (x0, x1) = pixel_range(c.x.to_f64_lossy(), c.x.to_f64_lossy(), radius, width);
    let (y0, y1) = pixel_range(c.y.to_f64_lossy(), c.y.to_f64_lossy(), radius, height);
    let r = S::of(radius);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let p = Point::new(S::of(x as f64), S::of(y as f64));
            if p.dist(c) <= r {
                plane[y * width + x] = S::one();
            }
        }
    }
}

/// Inclusive pixel index range covered by `[lo, hi]` inflated by
/// `radius`, clamped to the raster; empty ranges collapse to (1, 0).
fn pixel_range(a: f64, b: f64, radius: f64, extent: usize) -> (usize, usize) {
    let lo = (a.min(b) - radius).ceil();
    let hi = (a.max(b) + radius).floor();
    if extent == 0 || hi < 0.0 || lo > (extent - 1) as f64 {
        return (1, 0);
    }
    (lo.max(0.0) as usize, hi.min((extent - 1) as f64) as usize)
}

/// Separable Gaussian blur of a single plane. The kernel is truncated
/// at `ceil(3 sigma)` taps per side and renormalized against the
/// in-bounds weight sum at the borders. `sigma = 0` returns the input.
pub fn gaussian_blur_plane<S: Scalar>(plane: &[S], width: usize, height: usize, sigma: f64) -> Vec<S> {
    assert_eq!(plane.len(), width * height, "plane length mismatch");
    if sigma <= 0.0 {
        return plane.to_vec();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<S> = (-radius..=radius)
        .map(|i| S::of((-(i as f64).powi(2) / (2.0 * sigma * sigma)).exp()))
        .collect();
    let mut tmp = vec![S::zero(); width * height];
    // Horizontal pass.
    for y in 0..height {
        for x in 0..width {
            let mut acc = S::zero();
            let mut norm = S::zero();
            for (ki, &kv) in kernel.iter().enumerate() {
                let sx = x as isize + ki as isize - radius;
                if sx >= 0 && (sx as usize) < width {
                    acc += kv * plane[y * width + sx as usize];
                    norm += kv;
                }
            }
            tmp[y * width + x] = acc / norm;
        }
    }
    // Vertical pass.
    let mut out = vec![S::zero(); width * height];
    for y in 0..height {
        for x in 0..width {
            let mut acc = S::zero();
            let mut norm = S::zero();
            for (ki, &kv) in kernel.iter().enumerate() {
                let sy = y as isize + ki as isize - radius;
                if sy >= 0 && (sy as usize) < height {
                    acc += kv * tmp[sy as usize * width + x];
                    norm += kv;
                }
            }
            out[y * width + x] = acc / norm;
        }
    }
    out
}

/// Per-pixel running mean over overlapping window observations. Both
/// channels share one observation count per pixel, since a window
/// always covers a pixel in full.
#[derive(Debug, Clone)]
pub struct FusionAccumulator<S> {
    width: usize,
    height: usize,
    sum: Vec<S>,
    count: Vec<u32>,
}

impl<S: Scalar> FusionAccumulator<S> {
    pub fn new(width: usize, height: usize) -> Self {
        FusionAccumulator {
            width,
            height,
            sum: vec![S::zero(); width * height * 2],
            count: vec![0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Add one window observation with its top-left pixel at
    /// `(origin_x, origin_y)`.
    pub fn accumulate_window(
        &mut self,
        origin_x: usize,
        origin_y: usize,
        mask: &ProbMask<S>,
    ) -> Result<()> {
        if origin_x + mask.width() > self.width || origin_y + mask.height() > self.height {
            return Err(Error::Contract(format!(
                "window {}x{} at ({origin_x}, {origin_y}) exceeds image {}x{}",
                mask.width(),
                mask.height(),
                self.width,
                self.height
            )));
        }
        for wy in 0..mask.height() {
            let y = origin_y + wy;
            for wx in 0..mask.width() {
                let x = origin_x + wx;
                let base = (y * self.width + x) * 2;
                self.sum[base] += mask.get(wx, wy, CH_ROAD);
                self.sum[base + 1] += mask.get(wx, wy, CH_INTERSECTION);
                self.count[y * self.width + x] += 1;
            }
        }
        Ok(())
    }

    /// Fold another accumulator over the same image into this one.
    /// Accumulation is commutative, so merge order only affects float
    /// rounding.
    pub fn merge(&mut self, other: &FusionAccumulator<S>) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::Shape(format!(
                "cannot merge {}x{} accumulator into {}x{}",
                other.width, other.height, self.width, self.height
            )));
        }
        for (a, &b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, &b) in self.count.iter_mut().zip(&other.count) {
            *a += b;
        }
        Ok(())
    }

    pub fn observation_count(&self, x: usize, y: usize) -> u32 {
        self.count[y * self.width + x]
    }

    /// Per-pixel mean of the observations; pixels never observed fuse
    /// to zero. Output is clamped into `[0, 1]` to absorb rounding.
    pub fn finalize(&self) -> ProbMask<S> {
        let mut mask = ProbMask::zeros(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let n = self.count[y * self.width + x];
                if n == 0 {
                    continue;
                }
                let n = S::of(n as f64);
                let base = (y * self.width + x) * 2;
                let road = (self.sum[base] / n).max(S::zero()).min(S::one());
                let inter = (self.sum[base + 1] / n).max(S::zero()).min(S::one());
                mask.set(x, y, CH_ROAD, road);
                mask.set(x, y, CH_INTERSECTION, inter);
            }
        }
        mask
    }
}

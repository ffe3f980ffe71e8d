//! Probability masks and feature maps, with bilinear feature sampling.

use crate::error::{Error, Result};
use crate::geom::Point;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Channel index of road probabilities in a [`ProbMask`].
pub const CH_ROAD: usize = 0;
/// Channel index of intersection probabilities in a [`ProbMask`].
pub const CH_INTERSECTION: usize = 1;

/// Two-channel per-pixel probability raster, stored `(H, W, 2)` with
/// channels interleaved. All values lie in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMask<S> {
    width: usize,
    height: usize,
    data: Vec<S>,
}

impl<S: Scalar> ProbMask<S> {
    pub fn new(width: usize, height: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != width * height * 2 {
            return Err(Error::Shape(format!(
                "mask data length {} does not match {width}x{height}x2",
                data.len()
            )));
        }
        for (i, &v) in data.iter().enumerate() {
            if !(v >= S::zero() && v <= S::one()) {
                return Err(Error::Contract(format!(
                    "mask value {v} at flat index {i} outside [0, 1]"
                )));
            }
        }
        Ok(ProbMask { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        ProbMask { width, height, data: vec![S::zero(); width * height * 2] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, channel: usize) -> S {
        debug_assert!(x < self.width && y < self.height && channel < 2);
        self.data[(y * self.width + x) * 2 + channel]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, channel: usize, v: S) {
        debug_assert!(x < self.width && y < self.height && channel < 2);
        self.data[(y * self.width + x) * 2 + channel] = v;
    }

    /// Copy of the `width x height` sub-window at integer origin `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(Error::Contract(format!(
                "crop {width}x{height}+{x0}+{y0} exceeds mask {}x{}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(width * height * 2);
        for y in 0..height {
            let row = ((y0 + y) * self.width + x0) * 2;
            data.extend_from_slice(&self.data[row..row + width * 2]);
        }
        Ok(ProbMask { width, height, data })
    }

    pub fn to_tensor(&self) -> Tensor<S> {
        Tensor::new(vec![self.height, self.width, 2], self.data.clone()).unwrap()
    }

    pub fn from_tensor(t: &Tensor<S>) -> Result<Self> {
        match t.dims() {
            &[h, w, 2] => ProbMask::new(w, h, t.data().to_vec()),
            dims => Err(Error::Shape(format!("expected (H, W, 2) mask tensor, got {dims:?}"))),
        }
    }

    pub fn cast<T: Scalar>(&self) -> ProbMask<T> {
        ProbMask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| T::of(v.to_f64_lossy())).collect(),
        }
    }
}

/// Dense feature raster at `1/scale` of pixel resolution, stored
/// `(Hf, Wf, D)`. Cell `(cx, cy)` is centered at pixel coordinates
/// `((cx + 0.5) * scale, (cy + 0.5) * scale)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<S> {
    width_cells: usize,
    height_cells: usize,
    channels: usize,
    scale: u32,
    data: Vec<S>,
}

impl<S: Scalar> FeatureMap<S> {
    pub fn new(
        width_cells: usize,
        height_cells: usize,
        channels: usize,
        scale: u32,
        data: Vec<S>,
    ) -> Result<Self> {
        if width_cells == 0 || height_cells == 0 || channels == 0 || scale == 0 {
            return Err(Error::Shape("feature map dimensions must be positive".into()));
        }
        if data.len() != width_cells * height_cells * channels {
            return Err(Error::Shape(format!(
                "feature data length {} does not match {width_cells}x{height_cells}x{channels}",
                data.len()
            )));
        }
        Ok(FeatureMap { width_cells, height_cells, channels, scale, data })
    }

    pub fn zeros(width_cells: usize, height_cells: usize, channels: usize, scale: u32) -> Self {
        FeatureMap {
            width_cells,
            height_cells,
            channels,
            scale,
            data: vec![S::zero(); width_cells * height_cells * channels],
        }
    }

    pub fn width_cells(&self) -> usize {
        self.width_cells
    }

    pub fn height_cells(&self) -> usize {
        self.height_cells
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn scale(&self) -> u32 {
        self.scale
    }

    /// Covered window extent in pixels.
    pub fn width_px(&self) -> usize {
        self.width_cells * self.scale as usize
    }

    pub fn height_px(&self) -> usize {
        self.height_cells * self.scale as usize
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    #[inline]
    pub fn cell(&self, cx: usize, cy: usize) -> &[S] {
        let base = (cy * self.width_cells + cx) * self.channels;
        &self.data[base..base + self.channels]
    }

    #[inline]
    pub fn cell_mut(&mut self, cx: usize, cy: usize) -> &mut [S] {
        let base = (cy * self.width_cells + cx) * self.channels;
        &mut self.data[base..base + self.channels]
    }

    /// Whether `p` lies inside the covered window footprint. Pixel `i`
    /// spans `[i - 0.5, i + 0.5]`, so the footprint is
    /// `[-0.5, extent - 0.5]` per axis.
    pub fn contains(&self, p: Point<S>) -> bool {
        let half = S::of(0.5);
        p.is_finite()
            && p.x >= -half
            && p.x <= S::of(self.width_px() as f64) - half
            && p.y >= -half
            && p.y <= S::of(self.height_px() as f64) - half
    }

    /// Bilinear sample of all channels at pixel coordinates `p`,
    /// interpolating between cell centers and clamping to border cells.
    /// `out` must have `channels` elements. Errors when `p` lies outside
    /// the window footprint.
    pub fn sample_into(&self, p: Point<S>, out: &mut [S]) -> Result<()> {
        if out.len() != self.channels {
            return Err(Error::Shape(format!(
                "sample buffer has {} slots, feature map has {} channels",
                out.len(),
                self.channels
            )));
        }
        if !self.contains(p) {
            return Err(Error::Contract(format!(
                "point ({}, {}) outside feature window {}x{} px",
                p.x,
                p.y,
                self.width_px(),
                self.height_px()
            )));
        }
        let scale = S::of(self.scale as f64);
        let half = S::of(0.5);
        let u = p.x / scale - half;
        let v = p.y / scale - half;
        let (cx0, cx1, fu) = clamp_axis(u, self.width_cells);
        let (cy0, cy1, fv) = clamp_axis(v, self.height_cells);
        let w00 = (S::one() - fu) * (S::one() - fv);
        let w10 = fu * (S::one() - fv);
        let w01 = (S::one() - fu) * fv;
        let w11 = fu * fv;
        let c00 = self.cell(cx0, cy0);
        let c10 = self.cell(cx1, cy0);
        let c01 = self.cell(cx0, cy1);
        let c11 = self.cell(cx1, cy1);
        for ch in 0..self.channels {
            out[ch] = w00 * c00[ch] + w10 * c10[ch] + w01 * c01[ch] + w11 * c11[ch];
        }
        Ok(())
    }

    pub fn sample(&self, p: Point<S>) -> Result<Vec<S>> {
        let mut out = vec![S::zero(); self.channels];
        self.sample_into(p, &mut out)?;
        Ok(out)
    }

    pub fn to_tensor(&self) -> Tensor<S> {
        Tensor::new(vec![self.height_cells, self.width_cells, self.channels], self.data.clone())
            .unwrap()
    }

    pub fn from_tensor(t: &Tensor<S>, scale: u32) -> Result<Self> {
        match *t.dims() {
            [h, w, d] => FeatureMap::new(w, h, d, scale, t.data().to_vec()),
            ref dims => {
                Err(Error::Shape(format!("expected (Hf, Wf, D) feature tensor, got {dims:?}")))
            }
        }
    }

    pub fn cast<T: Scalar>(&self) -> FeatureMap<T> {
        FeatureMap {
            width_cells: self.width_cells,
            height_cells: self.height_cells,
            channels: self.channels,
            scale: self.scale,
            data: self.data.iter().map(|&v| T::of(v.to_f64_lossy())).collect(),
        }
    }
}

/// Map a cell-space coordinate to the two bracketing cell indices and
/// the interpolation fraction, clamping at the borders (replicate).
fn clamp_axis<S: Scalar>(u: S, cells: usize) -> (usize, usize, S) {
    let last = cells - 1;
    if u <= S::zero() {
        return (0, 0, S::zero());
    }
    if u >= S::of(last as f64) {
        return (last, last, S::zero());
    }
    let i0 = u.floor();
    let f = u - i0;
    let i0 = i0.to_f64_lossy() as usize;
    (i0, (i0 + 1).min(last), f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn map_2x2() -> FeatureMap<f64> {
        FeatureMap::new(2, 2, 1, 16, vec![0.0, 1.0, 2.0, 3.0]).unwrap()
    }

    #[test]
    fn mask_validates_shape_and_range() {
        assert!(ProbMask::<f64>::new(2, 2, vec![0.0; 7]).is_err());
        assert!(matches!(
            ProbMask::<f64>::new(1, 1, vec![0.5, 1.5]),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            ProbMask::<f64>::new(1, 1, vec![f64::NAN, 0.0]),
            Err(Error::Contract(_))
        ));
        let m = ProbMask::<f64>::new(2, 1, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(m.get(1, 0, CH_ROAD), 0.3);
        assert_eq!(m.get(1, 0, CH_INTERSECTION), 0.4);
    }

    #[test]
    fn mask_crop_copies_window() {
        let mut m = ProbMask::<f64>::zeros(4, 4);
        m.set(2, 1, CH_ROAD, 0.7);
        let c = m.crop(1, 1, 3, 2).unwrap();
        assert_eq!(c.get(1, 0, CH_ROAD), 0.7);
        assert!(m.crop(2, 2, 3, 3).is_err());
    }

    #[test]
    fn constant_map_samples_constant() {
        let fm = FeatureMap::new(3, 3, 2, 16, vec![0.25; 18]).unwrap();
        for &(x, y) in &[(0.0, 0.0), (24.0, 24.0), (47.4, 0.2), (-0.5, 47.5)] {
            let s = fm.sample(Point::new(x, y)).unwrap();
            assert_eq!(s, vec![0.25, 0.25]);
        }
    }

    #[test]
    fn cell_center_returns_cell_value() {
        let fm = map_2x2();
        assert_eq!(fm.sample(Point::new(8.0, 8.0)).unwrap(), vec![0.0]);
        assert_eq!(fm.sample(Point::new(24.0, 8.0)).unwrap(), vec![1.0]);
        assert_eq!(fm.sample(Point::new(8.0, 24.0)).unwrap(), vec![2.0]);
        assert_eq!(fm.sample(Point::new(24.0, 24.0)).unwrap(), vec![3.0]);
    }

    #[test]
    fn midpoint_averages_four_cells() {
        let fm = map_2x2();
        assert_eq!(fm.sample(Point::new(16.0, 16.0)).unwrap(), vec![1.5]);
    }

    #[test]
    fn outside_window_is_an_error() {
        let fm = map_2x2();
        assert!(matches!(fm.sample(Point::new(32.0, 8.0)), Err(Error::Contract(_))));
        assert!(matches!(fm.sample(Point::new(8.0, -1.0)), Err(Error::Contract(_))));
        assert!(matches!(
            fm.sample(Point::new(f64::NAN, 8.0)),
            Err(Error::Contract(_))
        ));
        // Footprint corners are inside.
        assert!(fm.sample(Point::new(-0.5, 31.5)).is_ok());
    }

    #[test]
    fn interpolation_is_lipschitz() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let scale = 8u32;
        for _ in 0..50 {
            let data: Vec<f64> = (0..4 * 4).map(|_| rng.random::<f64>()).collect();
            let lo = data.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lipschitz = 2.0 * (hi - lo) / scale as f64;
            let fm = FeatureMap::new(4, 4, 1, scale, data).unwrap();
            for _ in 0..40 {
                let p = Point::new(rng.random::<f64>() * 30.0, rng.random::<f64>() * 30.0);
                let q = Point::new(
                    (p.x + rng.random::<f64>() * 2.0 - 1.0).clamp(0.0, 31.0),
                    (p.y + rng.random::<f64>() * 2.0 - 1.0).clamp(0.0, 31.0),
                );
                let fp = fm.sample(p).unwrap()[0];
                let fq = fm.sample(q).unwrap()[0];
                assert!((fp - fq).abs() <= lipschitz * p.dist(q) + 1e-9);
            }
        }
    }

    #[test]
    fn tensor_round_trip() {
        let fm = map_2x2();
        let back = FeatureMap::from_tensor(&fm.to_tensor(), 16).unwrap();
        assert_eq!(fm, back);
        let m = ProbMask::<f32>::new(2, 1, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(ProbMask::from_tensor(&m.to_tensor()).unwrap(), m);
    }
}

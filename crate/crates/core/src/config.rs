//! Extraction configuration and sliding-window placement.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tunables shared by vertex extraction, sample building, training, and
/// inference. Distances are in pixels of the full-resolution image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    /// Probability threshold: only mask values strictly above `t` become
    /// vertex candidates.
    pub t: f64,
    /// Non-maximum-suppression radius; kept vertices are pairwise at
    /// least `d_v` apart.
    pub d_v: f64,
    /// Neighborhood radius for candidate edges and connectivity labels.
    pub r_nbr: f64,
    /// Fixed number of target slots per source vertex.
    pub n_nbr: usize,
    /// Minimum averaged probability for an edge to be kept.
    pub edge_threshold: f64,
    /// Std of the Gaussian jitter applied to teacher-forcing inputs.
    pub sigma_perturb: f64,
    /// Source vertices drawn per training patch.
    pub n_sample: usize,
    /// Sliding-window size in pixels.
    pub window_size: usize,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            t: 0.5,
            d_v: 8.0,
            r_nbr: 64.0,
            n_nbr: 16,
            edge_threshold: 0.5,
            sigma_perturb: 1.0,
            n_sample: 512,
            window_size: 512,
        }
    }
}

impl ExtractionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t >= 0.0 && self.t < 1.0) {
            return Err(Error::Contract(format!("t = {} outside [0, 1)", self.t)));
        }
        if !(self.d_v > 0.0) {
            return Err(Error::Contract(format!("d_v = {} must be positive", self.d_v)));
        }
        if !(self.r_nbr > 0.0) {
            return Err(Error::Contract(format!("r_nbr = {} must be positive", self.r_nbr)));
        }
        if self.n_nbr == 0 {
            return Err(Error::Contract("n_nbr must be at least 1".into()));
        }
        if !(self.edge_threshold >= 0.0 && self.edge_threshold <= 1.0) {
            return Err(Error::Contract(format!(
                "edge_threshold = {} outside [0, 1]",
                self.edge_threshold
            )));
        }
        if !(self.sigma_perturb >= 0.0) {
            return Err(Error::Contract(format!(
                "sigma_perturb = {} must be non-negative",
                self.sigma_perturb
            )));
        }
        if self.n_sample == 0 {
            return Err(Error::Contract("n_sample must be at least 1".into()));
        }
        if self.window_size == 0 {
            return Err(Error::Contract("window_size must be at least 1".into()));
        }
        Ok(())
    }

    /// Subdivision limit for teacher forcing (`d_v / 4`).
    pub fn max_segment(&self) -> f64 {
        self.d_v / 4.0
    }
}

/// Placement of `count_x x count_y` windows of `window_size` pixels over
/// an image, first window at origin 0, last flush with the far edge,
/// and the rest evenly spaced (rounded to integer pixels).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowGrid {
    pub image_width: usize,
    pub image_height: usize,
    pub window_size: usize,
    pub count_x: usize,
    pub count_y: usize,
}

impl WindowGrid {
    pub fn new(
        image_width: usize,
        image_height: usize,
        window_size: usize,
        count_x: usize,
        count_y: usize,
    ) -> Result<Self> {
        let grid = WindowGrid { image_width, image_height, window_size, count_x, count_y };
        grid.validate()?;
        Ok(grid)
    }

    fn validate(&self) -> Result<()> {
        if self.count_x == 0 || self.count_y == 0 {
            return Err(Error::Contract("window counts must be at least 1".into()));
        }
        if self.window_size == 0 {
            return Err(Error::Contract("window_size must be at least 1".into()));
        }
        if self.window_size > self.image_width || self.window_size > self.image_height {
            return Err(Error::Contract(format!(
                "window size {} exceeds image {}x{}",
                self.window_size, self.image_width, self.image_height
            )));
        }
        for (extent, count, axis) in [
            (self.image_width, self.count_x, "x"),
            (self.image_height, self.count_y, "y"),
        ] {
            let origins = Self::axis_origins(extent, self.window_size, count);
            for pair in origins.windows(2) {
                if pair[1] > pair[0] + self.window_size {
                    return Err(Error::Contract(format!(
                        "windows leave uncovered pixels along {axis}: origins {} and {} with size {}",
                        pair[0], pair[1], self.window_size
                    )));
                }
            }
        }
        Ok(())
    }

    fn axis_origins(extent: usize, window: usize, count: usize) -> Vec<usize> {
        if count == 1 {
            return vec![0];
        }
        let span = (extent - window) as f64;
        (0..count).map(|k| (k as f64 * span / (count - 1) as f64).round() as usize).collect()
    }

    pub fn origins_x(&self) -> Vec<usize> {
        Self::axis_origins(self.image_width, self.window_size, self.count_x)
    }

    pub fn origins_y(&self) -> Vec<usize> {
        Self::axis_origins(self.image_height, self.window_size, self.count_y)
    }

    /// All windows as `(ix, iy, origin_x, origin_y)` in row-major order.
    pub fn windows(&self) -> Vec<(usize, usize, usize, usize)> {
        let xs = self.origins_x();
        let ys = self.origins_y();
        let mut out = Vec::with_capacity(xs.len() * ys.len());
        for (iy, &oy) in ys.iter().enumerate() {
            for (ix, &ox) in xs.iter().enumerate() {
                out.push((ix, iy, ox, oy));
            }
        }
        out
    }

    pub fn window_count(&self) -> usize {
        self.count_x * self.count_y
    }

    /// Smallest overlap between adjacent windows, or `None` when a
    /// single window covers each axis (no seams). Planners warn when
    /// this falls below `r_nbr`, since edges spanning a seam can then
    /// go unobserved.
    pub fn min_overlap(&self) -> Option<usize> {
        let mut min: Option<usize> = None;
        for origins in [self.origins_x(), self.origins_y()] {
            for pair in origins.windows(2) {
                let overlap = self.window_size - (pair[1] - pair[0]);
                min = Some(min.map_or(overlap, |m| m.min(overlap)));
            }
        }
        min
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        ExtractionConfig::default().validate().unwrap();
        assert_eq!(ExtractionConfig::default().max_segment(), 2.0);
    }

    #[test]
    fn config_rejects_bad_values() {
        let mut c = ExtractionConfig::default();
        c.t = 1.0;
        assert!(c.validate().is_err());
        let mut c = ExtractionConfig::default();
        c.d_v = 0.0;
        assert!(c.validate().is_err());
        let mut c = ExtractionConfig::default();
        c.n_nbr = 0;
        assert!(c.validate().is_err());
        let mut c = ExtractionConfig::default();
        c.sigma_perturb = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn four_by_four_origins_have_stride_512() {
        let g = WindowGrid::new(2048, 2048, 512, 4, 4).unwrap();
        assert_eq!(g.origins_x(), vec![0, 512, 1024, 1536]);
        assert_eq!(g.origins_y(), vec![0, 512, 1024, 1536]);
        assert_eq!(g.min_overlap(), Some(0));
    }

    #[test]
    fn sixteen_grid_spans_first_to_last() {
        let g = WindowGrid::new(2048, 2048, 512, 16, 16).unwrap();
        let xs = g.origins_x();
        assert_eq!(xs.len(), 16);
        assert_eq!(xs[0], 0);
        assert_eq!(*xs.last().unwrap(), 1536);
        // Evenly spaced at stride 102.4, rounded per window.
        for (k, &x) in xs.iter().enumerate() {
            assert_eq!(x, (k as f64 * 102.4).round() as usize);
        }
        assert_eq!(g.min_overlap(), Some(512 - 103));
    }

    #[test]
    fn single_window_sits_at_origin() {
        let g = WindowGrid::new(512, 512, 512, 1, 1).unwrap();
        assert_eq!(g.windows(), vec![(0, 0, 0, 0)]);
        assert_eq!(g.min_overlap(), None);
    }

    #[test]
    fn rejects_oversized_window_and_gaps() {
        assert!(WindowGrid::new(256, 256, 512, 2, 2).is_err());
        // Two windows of 100 px cannot cover 1000 px.
        assert!(matches!(
            WindowGrid::new(1000, 100, 100, 2, 1),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn coverage_holds_for_valid_grids() {
        let g = WindowGrid::new(512, 512, 256, 4, 4).unwrap();
        let xs = g.origins_x();
        assert_eq!(xs, vec![0, 85, 171, 256]);
        let mut covered = vec![false; 512];
        for &x in &xs {
            for p in covered.iter_mut().skip(x).take(256) {
                *p = true;
            }
        }
        assert!(covered.iter().all(|&c| c));
    }
}

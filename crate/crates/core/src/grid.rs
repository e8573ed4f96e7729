use crate::error::{Error, Result};

/// Row-major raster of `f64` values.
///
/// Used both for images (linear intensity in `[0, 1]`) and for scalar maps
/// (log-intensity changes, event counts, residuals). The interpretation is
/// documented at each call site; the storage is the same.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

/// Grayscale image, values in `[0, 1]` linear intensity.
pub type Image = Grid;

/// Scalar field over the sensor grid (log-intensity, counts, residuals).
pub type ScalarMap = Grid;

impl Grid {
    pub fn zeros(width: usize, height: usize) -> Self {
        Grid {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Grid {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "grid {}x{} needs {} values, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        Ok(Grid {
            width,
            height,
            data,
        })
    }

    /// Build from a function of (x, y).
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Grid {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn check_same_shape(&self, other: &Grid, what: &str) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::Dimension(format!(
                "{}: {}x{} vs {}x{}",
                what, self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn at_mut(&mut self, x: usize, y: usize) -> &mut f64 {
        &mut self.data[y * self.width + x]
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    #[inline]
    pub fn row_mut(&mut self, y: usize) -> &mut [f64] {
        &mut self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Grid {
        self.map(|v| v * c)
    }

    pub fn add(&self, other: &Grid) -> Grid {
        debug_assert!(self.same_shape(other));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Grid {
            width: self.width,
            height: self.height,
            data,
        }
    }

    pub fn sub(&self, other: &Grid) -> Grid {
        debug_assert!(self.same_shape(other));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Grid {
            width: self.width,
            height: self.height,
            data,
        }
    }

    pub fn add_assign(&mut self, other: &Grid) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale_assign(&mut self, c: f64) {
        for v in &mut self.data {
            *v *= c;
        }
    }

    pub fn fill(&mut self, value: f64) {
        self.data.fill(value);
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.sum() / self.data.len() as f64
        }
    }

    /// Global L2 norm, sum convention: sqrt(sum of squares).
    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Mean of squared values.
    pub fn mean_square(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.data.iter().map(|v| v * v).sum::<f64>() / self.data.len() as f64
        }
    }

    /// Population variance over all cells (zeros included).
    pub fn variance(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        let mean = self.mean();
        self.data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / self.data.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.data.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn clamp_values(&self, lo: f64, hi: f64) -> Grid {
        self.map(|v| v.clamp(lo, hi))
    }

    /// Bilinear sample at a fractional position with clamp-to-border
    /// semantics: taps outside the grid read `border`, so the value fades
    /// continuously to `border` over the last pixel and positions more than
    /// one pixel outside return `border` exactly. Continuity matters for
    /// threshold-crossing event synthesis.
    pub fn sample_bilinear(&self, x: f64, y: f64, border: f64) -> f64 {
        let (w, h) = (self.width as f64, self.height as f64);
        if !(x > -1.0 && x < w && y > -1.0 && y < h) {
            return border;
        }
        let x0f = x.floor();
        let y0f = y.floor();
        let fx = x - x0f;
        let fy = y - y0f;
        let x0 = x0f as isize;
        let y0 = y0f as isize;
        let tap = |xi: isize, yi: isize| -> f64 {
            if xi >= 0 && (xi as usize) < self.width && yi >= 0 && (yi as usize) < self.height {
                self.data[yi as usize * self.width + xi as usize]
            } else {
                border
            }
        };
        tap(x0, y0) * (1.0 - fx) * (1.0 - fy)
            + tap(x0 + 1, y0) * fx * (1.0 - fy)
            + tap(x0, y0 + 1) * (1.0 - fx) * fy
            + tap(x0 + 1, y0 + 1) * fx * fy
    }

    /// Bilinear splat: distribute `value` over the four neighbors of (x, y).
    /// Returns false (and deposits nothing) when (x, y) lies outside
    /// `[0, w-1] x [0, h-1]`.
    pub fn splat_bilinear(&mut self, x: f64, y: f64, value: f64) -> bool {
        let (w, h) = (self.width as f64, self.height as f64);
        if !(x >= 0.0 && x <= w - 1.0 && y >= 0.0 && y <= h - 1.0) {
            return false;
        }
        let x0f = x.floor();
        let y0f = y.floor();
        let fx = x - x0f;
        let fy = y - y0f;
        let x0 = x0f as usize;
        let y0 = y0f as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        *self.at_mut(x0, y0) += value * (1.0 - fx) * (1.0 - fy);
        if fx > 0.0 {
            *self.at_mut(x1, y0) += value * fx * (1.0 - fy);
        }
        if fy > 0.0 {
            *self.at_mut(x0, y1) += value * (1.0 - fx) * fy;
        }
        if fx > 0.0 && fy > 0.0 {
            *self.at_mut(x1, y1) += value * fx * fy;
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn bilinear_sample_matches_corners_and_center() {
        let g = Grid::from_fn(2, 2, |x, y| (x + 2 * y) as f64);
        assert_eq!(g.sample_bilinear(0.0, 0.0, -1.0), 0.0);
        assert_eq!(g.sample_bilinear(1.0, 1.0, -1.0), 3.0);
        assert_relative_eq!(g.sample_bilinear(0.5, 0.5, -1.0), 1.5);
        // Border fades in over the outermost pixel and is exact beyond it.
        assert_relative_eq!(g.sample_bilinear(-0.5, 0.0, -1.0), 0.5 * 0.0 + 0.5 * -1.0);
        assert_eq!(g.sample_bilinear(-1.0, 0.0, -1.0), -1.0);
        assert_eq!(g.sample_bilinear(2.0, 0.0, -1.0), -1.0);
        assert_relative_eq!(g.sample_bilinear(1.5, 1.0, -1.0), 0.5 * 3.0 + 0.5 * -1.0);
    }

    #[test]
    fn splat_conserves_mass_in_bounds() {
        let mut g = Grid::zeros(4, 4);
        assert!(g.splat_bilinear(1.25, 2.75, 2.0));
        assert_relative_eq!(g.sum(), 2.0, max_relative = 1e-12);
        assert!(!g.splat_bilinear(-0.5, 0.0, 1.0));
        assert_relative_eq!(g.sum(), 2.0, max_relative = 1e-12);
    }

    #[test]
    fn splat_at_last_row_col_keeps_mass() {
        let mut g = Grid::zeros(3, 3);
        assert!(g.splat_bilinear(2.0, 2.0, 1.0));
        assert_relative_eq!(g.sum(), 1.0, max_relative = 1e-12);
        assert_relative_eq!(g.at(2, 2), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn variance_of_constant_is_zero() {
        let g = Grid::filled(5, 5, 3.25);
        assert_eq!(g.variance(), 0.0);
    }
}

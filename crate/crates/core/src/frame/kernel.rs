use super::FrameError;

/// A normalized, square, isotropic Gaussian kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel {
    size: usize,
    sigma: f64,
    weights: Vec<f64>,
}

impl GaussianKernel {
    pub const DEFAULT_SIZE: usize = 5;
    pub const DEFAULT_SIGMA: f64 = 1.0;

    /// Samples `exp(-(dx² + dy²) / 2σ²)` on a `size`x`size` grid centred on
    /// the middle cell and normalizes the grid to unit sum.
    pub fn new(size: usize, sigma: f64) -> Result<Self, FrameError> {
        if size < 3 || size.is_multiple_of(2) {
            return Err(FrameError::Kernel(format!(
                "size must be odd and at least 3, got {size}"
            )));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(FrameError::Kernel(format!(
                "sigma must be positive and finite, got {sigma}"
            )));
        }

        let c = (size / 2) as f64;
        let denom = 2.0 * sigma * sigma;
        let mut weights = Vec::with_capacity(size * size);
        for y in 0..size {
            for x in 0..size {
                let dx = x as f64 - c;
                let dy = y as f64 - c;
                weights.push((-(dx * dx + dy * dy) / denom).exp());
            }
        }
        let sum: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= sum);

        Ok(Self { size, sigma, weights })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Row-major weights, `size * size` entries.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, x: usize, y: usize) -> f64 {
        self.weights[y * self.size + x]
    }
}

impl Default for GaussianKernel {
    fn default() -> Self {
        Self::new(Self::DEFAULT_SIZE, Self::DEFAULT_SIGMA).expect("default kernel is valid")
    }
}

use super::{GeometryError, Pixel};

const MAX_ITERATIONS: usize = 20;

/// Two-coefficient polynomial radial distortion.
///
/// `observed = c + (1 + k1·ρ² + k2·ρ⁴)·(ideal − c)` where `c` is the
/// distortion center and `ρ = |ideal − c| / norm_radius`. The normalization
/// radius is the image diagonal, which keeps `k1`, `k2` dimensionless and of
/// order one regardless of sensor resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialDistortion {
    pub center: Pixel,
    pub k1: f64,
    pub k2: f64,
    pub norm_radius: f64,
}

impl RadialDistortion {
    pub fn new(center: Pixel, k1: f64, k2: f64, image_size: (u32, u32)) -> Self {
        Self {
            center,
            k1,
            k2,
            norm_radius: image_diagonal(image_size),
        }
    }

    /// Zero distortion centered on the image.
    pub fn none(image_size: (u32, u32)) -> Self {
        let center = Pixel::new(image_size.0 as f64 / 2.0, image_size.1 as f64 / 2.0);
        Self::new(center, 0.0, 0.0, image_size)
    }

    pub fn is_identity(&self) -> bool {
        self.k1 == 0.0 && self.k2 == 0.0
    }

    fn gain(&self, rho: f64) -> f64 {
        let r2 = rho * rho;
        1.0 + self.k1 * r2 + self.k2 * r2 * r2
    }

    /// Map an ideal (pinhole) pixel to where the lens actually images it.
    pub fn apply(&self, ideal: &Pixel) -> Pixel {
        if self.is_identity() {
            return *ideal;
        }
        let d = ideal - self.center;
        let rho = d.norm() / self.norm_radius;
        self.center + d * self.gain(rho)
    }

    /// Invert [`apply`](Self::apply) by Newton iteration on the radius.
    ///
    /// The mapping is purely radial, so only the scalar equation
    /// `r·(1 + k1 r² + k2 r⁴) = r_observed` needs solving.
    pub fn correct(&self, observed: &Pixel) -> Result<Pixel, GeometryError> {
        if self.is_identity() {
            return Ok(*observed);
        }
        let d = observed - self.center;
        let rd = d.norm() / self.norm_radius;
        if rd == 0.0 {
            return Ok(*observed);
        }
        let tol = 1e-12 / self.norm_radius;
        let mut r = rd;
        for _ in 0..MAX_ITERATIONS {
            let r2 = r * r;
            let g = r * (1.0 + self.k1 * r2 + self.k2 * r2 * r2) - rd;
            let dg = 1.0 + 3.0 * self.k1 * r2 + 5.0 * self.k2 * r2 * r2;
            if dg <= 0.0 || !dg.is_finite() {
                // past the fold of the polynomial; no unique inverse here
                return Err(GeometryError::NoConvergence);
            }
            let step = g / dg;
            r -= step;
            if !r.is_finite() || r < 0.0 {
                return Err(GeometryError::NoConvergence);
            }
            if step.abs() <= tol {
                return Ok(self.center + d * (r / rd));
            }
        }
        Err(GeometryError::NoConvergence)
    }
}

pub(crate) fn image_diagonal(image_size: (u32, u32)) -> f64 {
    (image_size.0 as f64).hypot(image_size.1 as f64)
}

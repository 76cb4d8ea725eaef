use super::{FeatureError, Frame};

/// How a pixel's difference from the background is judged significant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    /// fixed luminance delta
    Absolute(f64),
    /// `k` standard deviations of the per-pixel background, but never less
    /// than `floor`
    Sigma { k: f64, floor: f64 },
}

/// Per-pixel running Gaussian estimate of the static scene.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundModel {
    width: u32,
    height: u32,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// blend a frame into the model only when `frame_number % update_interval == 0`
    pub update_interval: u64,
    /// blend weight of the new frame at each update event
    pub learning_rate: f64,
    pub threshold: Threshold,
}

impl BackgroundModel {
    pub const DEFAULT_UPDATE_INTERVAL: u64 = 500;
    pub const DEFAULT_LEARNING_RATE: f64 = 0.5;
    pub const DEFAULT_THRESHOLD: f64 = 10.0;

    /// Model with a uniform mean and zero variance.
    pub fn uniform(width: u32, height: u32, mean: f64) -> Self {
        let n = width as usize * height as usize;
        Self {
            width,
            height,
            mean: vec![mean; n],
            variance: vec![0.0; n],
            update_interval: Self::DEFAULT_UPDATE_INTERVAL,
            learning_rate: Self::DEFAULT_LEARNING_RATE,
            threshold: Threshold::Absolute(Self::DEFAULT_THRESHOLD),
        }
    }

    /// Model initialized from one frame of the empty scene.
    pub fn from_frame(frame: &Frame) -> Self {
        let mut m = Self::uniform(frame.width, frame.height, 0.0);
        for (dst, &src) in m.mean.iter_mut().zip(&frame.pixels) {
            *dst = src as f64;
        }
        m
    }

    pub fn size(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub(crate) fn check(&self, frame: &Frame) -> Result<(), FeatureError> {
        if frame.size() != self.size() {
            return Err(FeatureError::DimensionMismatch {
                expected: self.size(),
                got: frame.size(),
            });
        }
        Ok(())
    }

    /// Threshold in luminance units for pixel index `i`.
    #[inline]
    pub(crate) fn threshold_at(&self, i: usize) -> f64 {
        match self.threshold {
            Threshold::Absolute(t) => t,
            Threshold::Sigma { k, floor } => (k * self.variance[i].sqrt()).max(floor),
        }
    }

    /// In-place form of [`update_background`].
    pub fn update(&mut self, frame: &Frame) -> Result<(), FeatureError> {
        self.check(frame)?;
        if self.update_interval == 0 || frame.frame_number % self.update_interval != 0 {
            return Ok(());
        }
        let a = self.learning_rate;
        for ((mean, var), &px) in self
            .mean
            .iter_mut()
            .zip(self.variance.iter_mut())
            .zip(&frame.pixels)
        {
            let x = px as f64;
            *mean = (1.0 - a) * *mean + a * x;
            let d = x - *mean;
            *var = (1.0 - a) * *var + a * d * d;
        }
        Ok(())
    }
}

/// Blend `frame` into the model if its frame number falls on an update
/// event; otherwise return the model unchanged.
pub fn update_background(
    model: &BackgroundModel,
    frame: &Frame,
) -> Result<BackgroundModel, FeatureError> {
    let mut next = model.clone();
    next.update(frame)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(n: u64, value: u8) -> Frame {
        Frame::new("c", n, n as f64 / 100.0, 4, 3, vec![value; 12]).unwrap()
    }

    #[test]
    fn off_interval_frame_leaves_model_unchanged() {
        let m = BackgroundModel::uniform(4, 3, 17.0);
        let next = update_background(&m, &frame(250, 200)).unwrap();
        assert_eq!(next, m);
    }

    #[test]
    fn single_blend_step() {
        let m = BackgroundModel::uniform(4, 3, 0.0);
        let next = update_background(&m, &frame(500, 255)).unwrap();
        assert!(next.mean.iter().all(|&v| v == 127.5));
        assert!(next.variance.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn constant_scene_converges() {
        let mut m = BackgroundModel::uniform(4, 3, 0.0);
        for k in 1..=10 {
            m = update_background(&m, &frame(500 * k, 180)).unwrap();
        }
        // geometric series: residual 180 * 0.5^10
        assert!(m.mean.iter().all(|&v| (v - 180.0).abs() < 1.0));
    }

    #[test]
    fn dimension_mismatch() {
        let m = BackgroundModel::uniform(5, 3, 0.0);
        assert!(matches!(
            update_background(&m, &frame(0, 1)),
            Err(FeatureError::DimensionMismatch { .. })
        ));
    }
}

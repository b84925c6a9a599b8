use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::grid::RealGrid;

/// One fusion instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair<T> {
    pub pan: RealGrid<T>,
    pub lrms: RealGrid<T>,
    pub gt: Option<RealGrid<T>>,
    /// Output / LR-MS resolution ratio; fixes the fused grid size.
    pub scale: f64,
    /// Relative PAN size perturbation applied after degradation (0 when the
    /// PAN sits exactly on the output grid).
    pub pan_jitter: f64,
}

/// `round(scale * n)`, at least 1.
pub fn scaled_len(n: usize, scale: f64) -> usize {
    ((n as f64 * scale).round() as usize).max(1)
}

impl<T: Scalar> SamplePair<T> {
    pub fn new(pan: RealGrid<T>, lrms: RealGrid<T>, gt: Option<RealGrid<T>>, scale: f64) -> Result<Self> {
        let s = Self {
            pan,
            lrms,
            gt,
            scale,
            pan_jitter: 0.0,
        };
        s.validate()?;
        Ok(s)
    }

    /// Spatial size of the fused output.
    pub fn target_dims(&self) -> (usize, usize) {
        (
            scaled_len(self.lrms.height(), self.scale),
            scaled_len(self.lrms.width(), self.scale),
        )
    }

    pub fn bands(&self) -> usize {
        self.lrms.channels()
    }

    pub fn cast<U: Scalar>(&self) -> SamplePair<U> {
        SamplePair {
            pan: self.pan.cast(),
            lrms: self.lrms.cast(),
            gt: self.gt.as_ref().map(|g| g.cast()),
            scale: self.scale,
            pan_jitter: self.pan_jitter,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale.is_finite() && self.scale >= 1.0) {
            return Err(Error::config(format!("sample scale must be >= 1, got {}", self.scale)));
        }
        if self.pan.channels() != 1 {
            return Err(Error::shape(format!(
                "PAN must have one channel, got {}",
                self.pan.channels()
            )));
        }
        let (th, tw) = self.target_dims();
        if self.pan_jitter == 0.0 && (self.pan.height(), self.pan.width()) != (th, tw) {
            return Err(Error::shape(format!(
                "PAN is {}x{} but scale {} of {}x{} LR-MS needs {th}x{tw}",
                self.pan.height(),
                self.pan.width(),
                self.scale,
                self.lrms.height(),
                self.lrms.width()
            )));
        }
        if let Some(gt) = &self.gt {
            if (gt.height(), gt.width()) != (th, tw) || gt.channels() != self.bands() {
                return Err(Error::shape(format!(
                    "ground truth is {:?}, expected {th}x{tw}x{}",
                    gt.dims(),
                    self.bands()
                )));
            }
        }
        Ok(())
    }
}

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Real-valued `height x width x channels` array stored row-major in
/// `(h, w, c)` order. Carries images and latent feature maps.
#[derive(Debug, Clone, PartialEq)]
pub struct RealGrid<T> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Scalar> RealGrid<T> {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, T::zero())
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: T) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Dimension(format!(
                "grid dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::shape(format!(
                "grid {height}x{width}x{channels} needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for h in 0..height {
            for w in 0..width {
                for c in 0..channels {
                    data.push(f(h, w, c));
                }
            }
        }
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    #[inline]
    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, h: usize, w: usize, c: usize) -> usize {
        (h * self.width + w) * self.channels + c
    }

    #[inline]
    pub fn at(&self, h: usize, w: usize, c: usize) -> T {
        self.data[self.index(h, w, c)]
    }

    #[inline]
    pub fn set(&mut self, h: usize, w: usize, c: usize, v: T) {
        let i = self.index(h, w, c);
        self.data[i] = v;
    }

    pub fn same_dims(&self, other: &Self) -> bool {
        self.dims() == other.dims()
    }

    pub fn ensure_same_dims(&self, other: &Self, what: &str) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            Err(Error::shape(format!(
                "{what}: {:?} vs {:?}",
                self.dims(),
                other.dims()
            )))
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.ensure_same_dims(other, "elementwise op")?;
        Ok(Self {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Extract channel `c` as a contiguous `height x width` plane.
    pub fn channel_plane(&self, c: usize) -> Vec<T> {
        self.data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect()
    }

    pub fn set_channel_plane(&mut self, c: usize, plane: &[T]) {
        debug_assert_eq!(plane.len(), self.pixels());
        for (dst, &src) in self.data.iter_mut().skip(c).step_by(self.channels).zip(plane) {
            *dst = src;
        }
    }

    /// Concatenate along the channel axis.
    pub fn concat_channels(parts: &[&Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat of zero grids"))?;
        let (h, w) = (first.height, first.width);
        if parts.iter().any(|p| p.height != h || p.width != w) {
            return Err(Error::shape("concat: spatial dims differ"));
        }
        let channels: usize = parts.iter().map(|p| p.channels).sum();
        let mut data = Vec::with_capacity(h * w * channels);
        for px in 0..h * w {
            for p in parts {
                data.extend_from_slice(&p.data[px * p.channels..(px + 1) * p.channels]);
            }
        }
        Ok(Self {
            height: h,
            width: w,
            channels,
            data,
        })
    }

    /// Split along the channel axis into consecutive groups.
    pub fn split_channels(&self, sizes: &[usize]) -> Result<Vec<Self>> {
        if sizes.iter().sum::<usize>() != self.channels {
            return Err(Error::shape("split: channel sizes do not sum to total"));
        }
        let mut out: Vec<Self> = sizes
            .iter()
            .map(|&c| Self::zeros(self.height, self.width, c))
            .collect();
        for px in 0..self.pixels() {
            let mut off = px * self.channels;
            for part in out.iter_mut() {
                let c = part.channels;
                part.data[px * c..(px + 1) * c].copy_from_slice(&self.data[off..off + c]);
                off += c;
            }
        }
        Ok(out)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    pub fn clamp(&self, lo: T, hi: T) -> Self {
        self.map(|v| v.max(lo).min(hi))
    }

    pub fn cast<U: Scalar>(&self) -> RealGrid<U> {
        RealGrid {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|v| v.as_f64()).sum::<f64>() / self.data.len() as f64
    }
}

/// Frequency-domain grid in Cartesian form.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGrid<T> {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub re: Vec<T>,
    pub im: Vec<T>,
}

impl<T: Scalar> ComplexGrid<T> {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        let n = height * width * channels;
        Self {
            height,
            width,
            channels,
            re: vec![T::zero(); n],
            im: vec![T::zero(); n],
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    #[inline]
    pub fn index(&self, h: usize, w: usize, c: usize) -> usize {
        (h * self.width + w) * self.channels + c
    }

    pub fn ensure_same_dims(&self, other: &Self, what: &str) -> Result<()> {
        if self.dims() == other.dims() {
            Ok(())
        } else {
            Err(Error::shape(format!(
                "{what}: {:?} vs {:?}",
                self.dims(),
                other.dims()
            )))
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.ensure_same_dims(other, "complex sub")?;
        Ok(Self {
            height: self.height,
            width: self.width,
            channels: self.channels,
            re: self.re.iter().zip(&other.re).map(|(&a, &b)| a - b).collect(),
            im: self.im.iter().zip(&other.im).map(|(&a, &b)| a - b).collect(),
        })
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            height: self.height,
            width: self.width,
            channels: self.channels,
            re: self.re.iter().map(|&a| a * s).collect(),
            im: self.im.iter().map(|&a| a * s).collect(),
        }
    }

    /// Concatenate along the channel axis.
    pub fn concat_channels(a: &Self, b: &Self) -> Result<Self> {
        if a.height != b.height || a.width != b.width {
            return Err(Error::shape("complex concat: spatial dims differ"));
        }
        let channels = a.channels + b.channels;
        let n = a.height * a.width;
        let mut re = Vec::with_capacity(n * channels);
        let mut im = Vec::with_capacity(n * channels);
        for px in 0..n {
            let (sa, sb) = (px * a.channels, px * b.channels);
            re.extend_from_slice(&a.re[sa..sa + a.channels]);
            re.extend_from_slice(&b.re[sb..sb + b.channels]);
            im.extend_from_slice(&a.im[sa..sa + a.channels]);
            im.extend_from_slice(&b.im[sb..sb + b.channels]);
        }
        Ok(Self {
            height: a.height,
            width: a.width,
            channels,
            re,
            im,
        })
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        let re = self
            .re
            .iter()
            .zip(&other.re)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()));
        let im = self
            .im
            .iter()
            .zip(&other.im)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()));
        re.max(im)
    }
}

/// Frequency-domain grid in polar form: `z = magnitude * exp(i * phase)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarGrid<T> {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub magnitude: Vec<T>,
    pub phase: Vec<T>,
}

impl<T: Scalar> PolarGrid<T> {
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn magnitude_grid(&self) -> RealGrid<T> {
        RealGrid::from_vec(self.height, self.width, self.channels, self.magnitude.clone())
            .expect("polar grid dims are valid")
    }

    pub fn phase_grid(&self) -> RealGrid<T> {
        RealGrid::from_vec(self.height, self.width, self.channels, self.phase.clone())
            .expect("polar grid dims are valid")
    }

    pub fn from_parts(magnitude: &RealGrid<T>, phase: &RealGrid<T>) -> Result<Self> {
        magnitude.ensure_same_dims(phase, "polar parts")?;
        let (height, width, channels) = magnitude.dims();
        Ok(Self {
            height,
            width,
            channels,
            magnitude: magnitude.data().to_vec(),
            phase: phase.data().to_vec(),
        })
    }
}

/// Dense parameter block (weights, kernels, biases) with an explicit shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    dims: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(dims: &[usize]) -> Self {
        let n = dims.iter().product();
        Self {
            dims: dims.to_vec(),
            data: vec![T::zero(); n],
        }
    }

    pub fn scalar(v: T) -> Self {
        Self {
            dims: vec![1],
            data: vec![v],
        }
    }

    pub fn from_vec(dims: &[usize], data: Vec<T>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::shape(format!(
                "tensor {dims:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            dims: dims.to_vec(),
            data,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }
}

use crate::scalar::Real;

/// Channel-major activation volume `channels x height x width` for a single sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Tensor { channels, height, width, data: vec![T::zero(); channels * height * width] }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), channels * height * width, "tensor buffer size");
        Tensor { channels, height, width, data }
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    /// Stack along the channel axis.
    pub fn concat(&self, other: &Tensor<T>) -> Tensor<T> {
        assert_eq!((self.height, self.width), (other.height, other.width), "concat spatial size");
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Tensor { channels: self.channels + other.channels, height: self.height, width: self.width, data }
    }

    /// Inverse of [`Tensor::concat`]: first `channels` planes, then the rest.
    pub fn split(mut self, channels: usize) -> (Tensor<T>, Tensor<T>) {
        let at = channels * self.plane();
        let tail = self.data.split_off(at);
        let rest = self.channels - channels;
        (
            Tensor { channels, height: self.height, width: self.width, data: self.data },
            Tensor { channels: rest, height: self.height, width: self.width, data: tail },
        )
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) {
        assert_eq!(self.data.len(), other.data.len());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

use crate::error::{Error, Result};
use rand::Rng;

/// A dense `(batch, channels, height, width)` array, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    dims: [usize; 4],
    pub data: Vec<f64>,
}

impl Tensor4 {
    pub fn new(dims: [usize; 4], data: Vec<f64>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!("dims {dims:?} need {n} values, got {}", data.len())));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: [usize; 4]) -> Self {
        Self { dims, data: vec![0.0; dims.iter().product()] }
    }

    pub fn filled(dims: [usize; 4], value: f64) -> Self {
        Self { dims, data: vec![value; dims.iter().product()] }
    }

    /// Uniform values in `[-bound, bound)`.
    pub fn uniform(dims: [usize; 4], bound: f64, rng: &mut impl Rng) -> Self {
        let n = dims.iter().product();
        Self { dims, data: (0..n).map(|_| rng.random_range(-bound..bound)).collect() }
    }

    #[inline]
    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    #[inline]
    pub fn batch(&self) -> usize {
        self.dims[0]
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.dims[1]
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.dims[2]
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.dims[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Elements per batch entry.
    #[inline]
    pub fn item_len(&self) -> usize {
        self.dims[1] * self.dims[2] * self.dims[3]
    }

    #[inline]
    pub fn plane(&self) -> usize {
        self.dims[2] * self.dims[3]
    }

    #[inline]
    pub fn index(&self, b: usize, c: usize, y: usize, x: usize) -> usize {
        ((b * self.dims[1] + c) * self.dims[2] + y) * self.dims[3] + x
    }

    #[inline]
    pub fn at(&self, b: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(b, c, y, x)]
    }

    pub fn item(&self, b: usize) -> &[f64] {
        let n = self.item_len();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &Tensor4) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn add_assign(&mut self, other: &Tensor4) {
        debug_assert_eq!(self.dims, other.dims);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Concatenates two tensors along the channel axis.
    pub fn concat_channels(a: &Tensor4, b: &Tensor4) -> Result<Tensor4> {
        let [n, ca, h, w] = a.dims;
        let [nb, cb, hb, wb] = b.dims;
        if (n, h, w) != (nb, hb, wb) {
            return Err(Error::Shape(format!("cannot concatenate {:?} and {:?}", a.dims, b.dims)));
        }
        let mut data = Vec::with_capacity(a.len() + b.len());
        for i in 0..n {
            data.extend_from_slice(a.item(i));
            data.extend_from_slice(b.item(i));
        }
        Ok(Tensor4 { dims: [n, ca + cb, h, w], data })
    }

    /// Splits along the channel axis after the first `first` channels.
    pub fn split_channels(&self, first: usize) -> (Tensor4, Tensor4) {
        let [n, c, h, w] = self.dims;
        let hw = h * w;
        let mut a = Vec::with_capacity(n * first * hw);
        let mut b = Vec::with_capacity(n * (c - first) * hw);
        for i in 0..n {
            let item = self.item(i);
            a.extend_from_slice(&item[..first * hw]);
            b.extend_from_slice(&item[first * hw..]);
        }
        (Tensor4 { dims: [n, first, h, w], data: a }, Tensor4 { dims: [n, c - first, h, w], data: b })
    }
}

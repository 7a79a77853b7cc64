//! Dense row-major `f32` tensors.
//!
//! Feature maps use the `[N, H, W, C]` axis order throughout the crate.
//! A tensor is immutable once built; clones share the underlying buffer.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f32>>,
}

impl Tensor {
    /// Builds a tensor from a shape and a row-major buffer.
    ///
    /// An empty shape denotes a scalar holding a single element.
    pub fn new(shape: &[usize], data: Vec<f32>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::Shape {
                shape: shape.to_vec(),
                reason: "extents must be at least 1".into(),
            });
        }
        let numel = checked_numel(shape)?;
        if numel != data.len() {
            return Err(Error::Shape {
                shape: shape.to_vec(),
                reason: format!("expects {numel} elements, buffer holds {}", data.len()),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: Arc::new(data),
        })
    }

    /// Internal constructor for kernels whose output shape is already validated.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f32>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            shape,
            data: Arc::new(data),
        }
    }

    pub fn full(shape: &[usize], value: f32) -> Result<Self> {
        let n = checked_numel(shape)?;
        Tensor::new(shape, vec![value; n])
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Tensor::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Result<Self> {
        Tensor::full(shape, 1.0)
    }

    pub fn scalar(value: f32) -> Self {
        Tensor::from_parts(Vec::new(), vec![value])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Returns the buffer, copying only if it is shared.
    pub fn into_vec(self) -> Vec<f32> {
        Arc::try_unwrap(self.data).unwrap_or_else(|shared| (*shared).clone())
    }

    /// Value of a 1-element tensor.
    pub fn item(&self) -> Result<f32> {
        if self.numel() != 1 {
            return Err(Error::Contract(format!(
                "item() on tensor of shape {:?}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    pub fn offset(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.shape.len() {
            return Err(Error::dim("index", index, &self.shape));
        }
        let mut off = 0;
        for (&i, &d) in index.iter().zip(&self.shape) {
            if i >= d {
                return Err(Error::dim("index", index, &self.shape));
            }
            off = off * d + i;
        }
        Ok(off)
    }

    pub fn get(&self, index: &[usize]) -> Result<f32> {
        Ok(self.data[self.offset(index)?])
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if shape.contains(&0) || checked_numel(shape)? != self.numel() {
            return Err(Error::dim("reshape", &self.shape, shape));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: Arc::clone(&self.data),
        })
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor::from_parts(self.shape.clone(), self.data.iter().map(|&x| f(x)).collect())
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f32, f32) -> f32) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::dim("zip_map", &self.shape, &other.shape));
        }
        Ok(Tensor::from_parts(
            self.shape.clone(),
            self.data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    /// Unpacks a rank-4 `[N, H, W, C]` shape.
    pub fn dims4(&self) -> Result<[usize; 4]> {
        match *self.shape.as_slice() {
            [n, h, w, c] => Ok([n, h, w, c]),
            _ => Err(Error::Shape {
                shape: self.shape.clone(),
                reason: "expected rank-4 NHWC tensor".into(),
            }),
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&x| x as f64).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f32> {
        if self.shape != other.shape {
            return Err(Error::dim("max_abs_diff", &self.shape, &other.shape));
        }
        Ok(self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Copies rows `start..start + len` of the leading axis.
    pub fn batch_slice(&self, start: usize, len: usize) -> Result<Tensor> {
        let n = *self.shape.first().ok_or_else(|| Error::Shape {
            shape: self.shape.clone(),
            reason: "batch_slice needs a leading axis".into(),
        })?;
        if len == 0 || start + len > n {
            return Err(Error::Contract(format!(
                "batch slice {start}..{} out of range for batch {n}",
                start + len
            )));
        }
        let inner = self.numel() / n;
        let mut shape = self.shape.clone();
        shape[0] = len;
        Ok(Tensor::from_parts(
            shape,
            self.data[start * inner..(start + len) * inner].to_vec(),
        ))
    }

    /// Stacks tensors along the leading axis; trailing extents must agree.
    pub fn concat_batch(parts: &[Tensor]) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
        let tail = &first.shape[1..];
        let mut n = 0;
        let mut data = Vec::with_capacity(parts.iter().map(Tensor::numel).sum());
        for p in parts {
            if p.rank() == 0 || &p.shape[1..] != tail {
                return Err(Error::dim("concat_batch", &first.shape, &p.shape));
            }
            n += p.shape[0];
            data.extend_from_slice(&p.data);
        }
        let mut shape = first.shape.clone();
        shape[0] = n;
        Ok(Tensor::from_parts(shape, data))
    }

    /// Gathers batch rows by index.
    pub fn gather_batch(&self, indices: &[usize]) -> Result<Tensor> {
        let n = *self.shape.first().ok_or_else(|| Error::Shape {
            shape: self.shape.clone(),
            reason: "gather needs a leading axis".into(),
        })?;
        if indices.is_empty() {
            return Err(Error::Contract("gather of zero rows".into()));
        }
        let inner = self.numel() / n;
        let mut data = Vec::with_capacity(indices.len() * inner);
        for &i in indices {
            if i >= n {
                return Err(Error::Contract(format!("row {i} out of range for batch {n}")));
            }
            data.extend_from_slice(&self.data[i * inner..(i + 1) * inner]);
        }
        let mut shape = self.shape.clone();
        shape[0] = indices.len();
        Ok(Tensor::from_parts(shape, data))
    }
}

pub(crate) fn checked_numel(shape: &[usize]) -> Result<usize> {
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Shape {
            shape: shape.to_vec(),
            reason: "element count overflows usize".into(),
        })
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const PREVIEW: usize = 8;
        write!(f, "Tensor{:?} ", self.shape)?;
        if self.numel() <= PREVIEW {
            write!(f, "{:?}", &self.data[..])
        } else {
            write!(f, "{:?}..", &self.data[..PREVIEW])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_mismatched_buffer() {
        assert!(Tensor::new(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(&[2, 0], vec![]).is_err());
    }

    #[test]
    fn scalar_has_one_element() {
        let s = Tensor::new(&[], vec![3.5]).unwrap();
        assert_eq!(s.numel(), 1);
        assert_eq!(s.item().unwrap(), 3.5);
    }

    #[test]
    fn row_major_indexing() {
        let t = Tensor::new(&[2, 3, 4], (0..24).map(|x| x as f32).collect()).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                for k in 0..4 {
                    assert_eq!(t.get(&[i, j, k]).unwrap(), (i * 12 + j * 4 + k) as f32);
                }
            }
        }
        assert!(t.get(&[2, 0, 0]).is_err());
        assert!(t.get(&[0, 0]).is_err());
    }

    #[test]
    fn reshape_shares_buffer() {
        let t = Tensor::new(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let r = t.reshape(&[4]).unwrap();
        assert_eq!(r.data(), t.data());
        assert!(t.reshape(&[3]).is_err());
    }

    #[test]
    fn batch_helpers() {
        let t = Tensor::new(&[3, 2], vec![0., 1., 2., 3., 4., 5.]).unwrap();
        let s = t.batch_slice(1, 2).unwrap();
        assert_eq!(s.data(), &[2., 3., 4., 5.]);
        let g = t.gather_batch(&[2, 0]).unwrap();
        assert_eq!(g.data(), &[4., 5., 0., 1.]);
        let c = Tensor::concat_batch(&[s, g]).unwrap();
        assert_eq!(c.shape(), &[4, 2]);
    }
}

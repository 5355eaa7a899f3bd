use crate::error::{Error, Result};

/// Dense row-major array of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape("tensor data", &[n], &[data.len()]));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Number of columns of a matrix (the last dimension).
    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap_or(&1)
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn squared_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    /// `self += k * other`.
    pub fn add_scaled(&mut self, other: &Tensor, k: f64) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += k * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `out = self · x + bias` for a matrix of shape `[rows, cols]`.
    pub fn affine(&self, x: &[f64], bias: &[f64]) -> Vec<f64> {
        let cols = self.cols();
        debug_assert_eq!(x.len(), cols);
        self.data
            .chunks_exact(cols)
            .zip(bias)
            .map(|(row, b)| b + dot(row, x))
            .collect()
    }

    /// `out += selfᵀ · dy`.
    pub fn add_transposed_product(&self, dy: &[f64], out: &mut [f64]) {
        let cols = self.cols();
        for (row, d) in self.data.chunks_exact(cols).zip(dy) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * d;
            }
        }
    }

    /// `self += dy · xᵀ` (rank-one update of a matrix gradient).
    pub fn add_outer(&mut self, dy: &[f64], x: &[f64]) {
        let cols = self.cols();
        debug_assert_eq!(x.len(), cols);
        for (row, d) in self.data.chunks_exact_mut(cols).zip(dy) {
            for (g, xi) in row.iter_mut().zip(x) {
                *g += d * xi;
            }
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 5]).is_err());
        assert_eq!(Tensor::from_vec(&[2, 3], vec![0.0; 6]).unwrap().cols(), 3);
    }

    #[test]
    fn affine_and_transpose() {
        let w = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(w.affine(&[1.0, 0.0, -1.0], &[0.5, 0.0]), vec![-1.5, -2.0]);
        let mut out = vec![0.0; 3];
        w.add_transposed_product(&[1.0, 1.0], &mut out);
        assert_eq!(out, vec![5.0, 7.0, 9.0]);
        let mut g = Tensor::zeros(&[2, 3]);
        g.add_outer(&[1.0, 2.0], &[1.0, 0.0, 3.0]);
        assert_eq!(g.data(), &[1.0, 0.0, 3.0, 2.0, 0.0, 6.0]);
    }
}

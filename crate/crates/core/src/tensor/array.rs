use super::Real;
use crate::error::{shape_err, Result};

/// Dense row-major matrix. Vectors are stored as `1 x n` rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Array<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Array<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows * cols != data.len() {
            return shape_err(
                "Array::new",
                format!("{rows}x{cols} needs {} elements, got {}", rows * cols, data.len()),
            );
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, T::zero())
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn row_vector(data: Vec<T>) -> Self {
        Self {
            rows: 1,
            cols: data.len(),
            data,
        }
    }

    pub fn column_vector(data: Vec<T>) -> Self {
        Self {
            rows: data.len(),
            cols: 1,
            data,
        }
    }

    pub fn scalar(value: T) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![value],
        }
    }

    pub fn from_f64(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Self::new(rows, cols, data.iter().map(|&v| T::of(v)).collect())
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
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

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// The single element of a `1 x 1` array.
    pub fn item(&self) -> T {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect()
    }

    pub fn cast<U: Real>(&self) -> Array<U> {
        Array {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|v| U::of(v.to_f64().unwrap_or(f64::NAN)))
                .collect(),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        debug_assert_eq!(self.shape(), other.shape());
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v)
    }

    pub fn transpose(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                data.push(self.data[r * self.cols + c]);
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    pub fn reshape(&self, rows: usize, cols: usize) -> Result<Self> {
        if rows * cols != self.data.len() {
            return shape_err(
                "reshape",
                format!("{:?} -> {rows}x{cols}", self.shape()),
            );
        }
        Ok(Self {
            rows,
            cols,
            data: self.data.clone(),
        })
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return shape_err(
                "matmul",
                format!("{:?} x {:?}", self.shape(), other.shape()),
            );
        }
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![T::zero(); n * m];
        for i in 0..n {
            let out_row = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == T::zero() {
                    continue;
                }
                let b_row = &other.data[p * m..(p + 1) * m];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o = *o + a * b;
                }
            }
        }
        Ok(Self {
            rows: n,
            cols: m,
            data: out,
        })
    }

    /// `self^T * other` without materialising the transpose.
    pub fn t_matmul(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return shape_err(
                "t_matmul",
                format!("{:?}^T x {:?}", self.shape(), other.shape()),
            );
        }
        let (k, n, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![T::zero(); n * m];
        for p in 0..k {
            let a_row = &self.data[p * n..(p + 1) * n];
            let b_row = &other.data[p * m..(p + 1) * m];
            for (i, &a) in a_row.iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                let out_row = &mut out[i * m..(i + 1) * m];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o = *o + a * b;
                }
            }
        }
        Ok(Self {
            rows: n,
            cols: m,
            data: out,
        })
    }

    /// `self * other^T` without materialising the transpose.
    pub fn matmul_t(&self, other: &Self) -> Result<Self> {
        if self.cols != other.cols {
            return shape_err(
                "matmul_t",
                format!("{:?} x {:?}^T", self.shape(), other.shape()),
            );
        }
        let (n, k, m) = (self.rows, self.cols, other.rows);
        let mut out = Vec::with_capacity(n * m);
        for i in 0..n {
            let a_row = &self.data[i * k..(i + 1) * k];
            for j in 0..m {
                let b_row = &other.data[j * k..(j + 1) * k];
                let dot = a_row
                    .iter()
                    .zip(b_row)
                    .fold(T::zero(), |acc, (&a, &b)| acc + a * b);
                out.push(dot);
            }
        }
        Ok(Self {
            rows: n,
            cols: m,
            data: out,
        })
    }
}

use crate::error::{param, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Copy> Matrix<T> {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> impl Iterator<Item = T> + '_ {
        (0..self.rows).map(move |r| self.get(r, c))
    }

    pub fn flatten(&self) -> Vec<T> {
        self.data.clone()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }
}

/// Row-major reshape of a length-`N1*L1` sequence into an `N1 x L1` matrix.
pub fn reshape_to_matrix<T: Copy>(values: &[T], period_len: usize) -> Result<Matrix<T>> {
    if period_len == 0 || values.len() % period_len != 0 {
        return Err(param(format!(
            "sequence length {} is not a multiple of L1 = {period_len}",
            values.len()
        )));
    }
    Ok(Matrix {
        rows: values.len() / period_len,
        cols: period_len,
        data: values.to_vec(),
    })
}

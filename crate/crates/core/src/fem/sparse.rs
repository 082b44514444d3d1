use rayon::prelude::*;

/// Compressed-row sparse matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    symmetric: bool,
}

impl CsrMatrix {
    /// Empty matrix with the sparsity pattern given by `rows[i]` (sorted, deduplicated).
    pub fn with_pattern(rows: Vec<Vec<usize>>, symmetric: bool) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut cols = Vec::new();
        for mut r in rows {
            r.sort_unstable();
            r.dedup();
            cols.extend_from_slice(&r);
            row_ptr.push(cols.len());
        }
        let vals = vec![0.0; cols.len()];
        CsrMatrix { n, row_ptr, cols, vals, symmetric }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            n,
            row_ptr: (0..=n).collect(),
            cols: (0..n).collect(),
            vals: vec![1.0; n],
            symmetric: true,
        }
    }

    pub fn from_dense(a: &[Vec<f64>]) -> Self {
        let n = a.len();
        let rows = (0..n).map(|i| (0..n).filter(|&j| a[i][j] != 0.0 || i == j).collect()).collect();
        let mut m = CsrMatrix::with_pattern(rows, false);
        for i in 0..n {
            for j in 0..n {
                if a[i][j] != 0.0 {
                    m.add(i, j, a[i][j]);
                }
            }
        }
        m.symmetric = m.max_asymmetry() == 0.0;
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let row = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        row.binary_search(&j).ok().map(|k| self.row_ptr[i] + k)
    }

    /// Adds `v` to entry `(i, j)`, which must be in the pattern.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.position(i, j).unwrap_or_else(|| panic!("entry ({i}, {j}) not in pattern"));
        self.vals[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |k| self.vals[k])
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let body = |(i, yi): (usize, &mut f64)| {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            *yi = s;
        };
        if self.n > 20_000 {
            y.par_iter_mut().enumerate().for_each(body);
        } else {
            y.iter_mut().enumerate().for_each(body);
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.mul(y);
        x.iter().zip(&ay).map(|(a, b)| a * b).sum()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn scaled(&self, s: f64) -> CsrMatrix {
        let mut m = self.clone();
        m.vals.iter_mut().for_each(|v| *v *= s);
        m
    }

    /// `self + s * other`; both must share one sparsity pattern.
    pub fn axpy_same_pattern(&self, s: f64, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.row_ptr, other.row_ptr, "patterns differ");
        assert_eq!(self.cols, other.cols, "patterns differ");
        let mut m = self.clone();
        for (a, b) in m.vals.iter_mut().zip(&other.vals) {
            *a += s * b;
        }
        m.symmetric = self.symmetric && other.symmetric;
        m
    }

    /// Principal submatrix on the indices with `keep[i]`, and the map from
    /// kept indices to original ones.
    pub fn principal_submatrix(&self, keep: &[bool]) -> (CsrMatrix, Vec<usize>) {
        let mut new_index = vec![usize::MAX; self.n];
        let mut kept = Vec::new();
        for i in 0..self.n {
            if keep[i] {
                new_index[i] = kept.len();
                kept.push(i);
            }
        }
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for &i in &kept {
            for (j, v) in self.row(i) {
                if keep[j] {
                    cols.push(new_index[j]);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        let sub = CsrMatrix { n: kept.len(), row_ptr, cols, vals, symmetric: self.symmetric };
        (sub, kept)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; self.n]; self.n];
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                a[i][j] += v;
            }
        }
        a
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pattern_add_and_matvec() {
        let mut m = CsrMatrix::with_pattern(vec![vec![1, 0], vec![0, 1]], true);
        m.add(0, 0, 2.0);
        m.add(0, 1, -1.0);
        m.add(1, 0, -1.0);
        m.add(1, 1, 2.0);
        assert_eq!(m.mul(&[1.0, 1.0]), vec![1.0, 1.0]);
        assert_eq!(m.max_asymmetry(), 0.0);
        let (sub, kept) = m.principal_submatrix(&[false, true]);
        assert_eq!(kept, vec![1]);
        assert_eq!(sub.get(0, 0), 2.0);
    }

    #[test]
    fn dense_round_trip() {
        let a = vec![vec![4.0, 1.0, 0.0], vec![1.0, 3.0, 0.5], vec![0.0, 0.5, 2.0]];
        let m = CsrMatrix::from_dense(&a);
        assert!(m.is_symmetric());
        assert_eq!(m.to_dense(), a);
    }
}

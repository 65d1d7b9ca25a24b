//! Minimal compressed-row storage for the assembled interaction weights.

#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    nrows: usize,
    ncols: usize,
    ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    /// Builds from row-major rows of `(col, value)`; each row must be sorted by column.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let nrows = rows.len();
        let mut ptr = Vec::with_capacity(nrows + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        ptr.push(0);
        for row in rows {
            debug_assert!(row.windows(2).all(|w| w[0].0 < w[1].0));
            for (c, v) in row {
                debug_assert!(c < ncols);
                cols.push(c);
                vals.push(v);
            }
            ptr.push(cols.len());
        }
        Self {
            nrows,
            ncols,
            ptr,
            cols,
            vals,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.ptr[i], self.ptr[i + 1]);
        self.cols[a..b]
            .iter()
            .copied()
            .zip(self.vals[a..b].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.ptr[i], self.ptr[i + 1]);
        match self.cols[a..b].binary_search(&j) {
            Ok(k) => self.vals[a + k],
            Err(_) => 0.0,
        }
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).map(|(_, v)| v).sum()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn get_and_matvec() {
        let m = Csr::from_rows(3, vec![vec![(0, 1.0), (2, 2.0)], vec![], vec![(1, -1.0)]]);
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(0, 2), 2.0);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.mul_vec(&[1.0, 2.0, 3.0]), vec![7.0, 0.0, -2.0]);
        assert_eq!(m.row_sum(0), 3.0);
        assert_eq!(m.to_dense()[2], vec![0.0, -1.0, 0.0]);
    }
}

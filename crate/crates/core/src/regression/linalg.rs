//! Dense column-major matrices and a Householder QR factorization.

/// Column-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from row slices; all rows must share one length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let n = rows.len();
        let p = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut m = Self::zeros(n, p);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            assert_eq!(row.len(), p, "ragged rows");
            for (j, v) in row.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    fn column_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        let mut out = vec![0.0; self.rows];
        for (j, &vj) in v.iter().enumerate() {
            for (o, x) in out.iter_mut().zip(self.column(j)) {
                *o += x * vj;
            }
        }
        out
    }

    /// Xᵀv.
    pub fn tr_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows);
        (0..self.cols).map(|j| dot(self.column(j), v)).collect()
    }

    pub fn scale_column(&mut self, j: usize, c: f64) {
        self.column_mut(j).iter_mut().for_each(|x| *x *= c);
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[j * self.rows + i]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[j * self.rows + i]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Thin QR of an n×p matrix (n ≥ p) without pivoting.
#[derive(Debug, Clone)]
pub struct Qr {
    /// Upper-triangular p×p factor, row-major.
    pub r: Vec<Vec<f64>>,
    /// Qᵀy for the vector passed to [`Qr::factor`].
    pub qty: Vec<f64>,
}

impl Qr {
    /// Factors `x` with Householder reflections, applying them to `y` as well.
    pub fn factor(x: &Matrix, y: &[f64]) -> Self {
        let n = x.rows();
        let p = x.cols();
        assert!(n >= p, "QR needs at least as many rows as columns");
        assert_eq!(y.len(), n);
        let mut a = x.clone();
        let mut qty = y.to_vec();
        for j in 0..p {
            let col = &a.column(j)[j..];
            let alpha_norm = norm(col);
            if alpha_norm == 0.0 {
                continue;
            }
            let alpha = if col[0] > 0.0 { -alpha_norm } else { alpha_norm };
            let mut v: Vec<f64> = col.to_vec();
            v[0] -= alpha;
            let vv = dot(&v, &v);
            if vv == 0.0 {
                continue;
            }
            for k in j..p {
                let c = &mut a.column_mut(k)[j..];
                let s = 2.0 * dot(&v, c) / vv;
                c.iter_mut().zip(&v).for_each(|(ci, vi)| *ci -= s * vi);
            }
            let tail = &mut qty[j..];
            let s = 2.0 * dot(&v, tail) / vv;
            tail.iter_mut().zip(&v).for_each(|(ti, vi)| *ti -= s * vi);
            // exact zeros below the diagonal
            a.column_mut(j)[j + 1..].iter_mut().for_each(|x| *x = 0.0);
        }
        let r = (0..p)
            .map(|i| (0..p).map(|j| if j >= i { a[(i, j)] } else { 0.0 }).collect())
            .collect();
        Qr { r, qty }
    }
}

/// Solves R z = b for upper-triangular R (row-major); `None` on a zero pivot.
pub fn solve_upper(r: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let p = b.len();
    let mut z = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = b[i];
        for k in i + 1..p {
            s -= r[i][k] * z[k];
        }
        if r[i][i] == 0.0 {
            return None;
        }
        z[i] = s / r[i][i];
    }
    Some(z)
}

/// Inverse of an upper-triangular matrix, row-major.
pub fn invert_upper(r: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let p = r.len();
    let mut inv = vec![vec![0.0; p]; p];
    for j in 0..p {
        let mut e = vec![0.0; p];
        e[j] = 1.0;
        let col = solve_upper(r, &e)?;
        for i in 0..p {
            inv[i][j] = col[i];
        }
    }
    Some(inv)
}

/// Singular values of a small square matrix by one-sided Jacobi rotations.
pub fn singular_values(m: &[Vec<f64>]) -> Vec<f64> {
    let p = m.len();
    // work on columns
    let mut cols: Vec<Vec<f64>> = (0..p).map(|j| m.iter().map(|row| row[j]).collect()).collect();
    for _sweep in 0..60 {
        let mut rotated = false;
        for i in 0..p {
            for j in i + 1..p {
                let alpha = dot(&cols[i], &cols[i]);
                let beta = dot(&cols[j], &cols[j]);
                let gamma = dot(&cols[i], &cols[j]);
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                #[allow(clippy::needless_range_loop)]
                for k in 0..p {
                    let a = cols[i][k];
                    let b = cols[j][k];
                    cols[i][k] = c * a - s * b;
                    cols[j][k] = s * a + c * b;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = cols.iter().map(|c| norm(c)).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

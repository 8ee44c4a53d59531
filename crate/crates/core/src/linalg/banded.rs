use crate::error::{Error, Result};

/// Symmetric matrix stored as its lower band, column by column.
///
/// Entry `(i, j)` with `j <= i <= j + bw` lives at `j * (bw + 1) + (i - j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BandedSym {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedSym {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        j * (self.bw + 1) + (i - j)
    }

    /// Length of the stored part of column `j` (diagonal included).
    #[inline]
    fn col_len(&self, j: usize) -> usize {
        (self.bw + 1).min(self.n - j)
    }

    /// Value at `(i, j)`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    /// Adds `v` at `(i, j)` (and implicitly `(j, i)`).
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    /// `self = Σ coef · m` over matrices of identical shape.
    pub fn set_combination(&mut self, terms: &[(f64, &BandedSym)]) {
        for v in self.data.iter_mut() {
            *v = 0.0;
        }
        for (coef, m) in terms {
            assert_eq!(m.n, self.n);
            assert_eq!(m.bw, self.bw);
            for (d, s) in self.data.iter_mut().zip(&m.data) {
                *d += coef * s;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.data.iter_mut() {
            *v *= s;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let w = self.bw + 1;
        let mut out = vec![0.0; self.n];
        for j in 0..self.n {
            let col = &self.data[j * w..j * w + self.col_len(j)];
            out[j] += col[0] * x[j];
            for (t, a) in col.iter().enumerate().skip(1) {
                out[j + t] += a * x[j];
                out[j] += a * x[j + t];
            }
        }
        out
    }

    /// In-place lower Cholesky factorisation of the band (right-looking).
    pub fn cholesky(mut self) -> Result<BandedCholesky> {
        let n = self.n;
        let w = self.bw + 1;
        for k in 0..n {
            let len = self.col_len(k);
            let (head, tail) = self.data.split_at_mut((k + 1) * w);
            let colk = &mut head[k * w..k * w + len];
            let d = colk[0];
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Numeric(format!(
                    "matrix not positive definite at pivot {k} (value {d:e})"
                )));
            }
            let d = d.sqrt();
            colk[0] = d;
            for v in colk[1..].iter_mut() {
                *v /= d;
            }
            for t in 1..len {
                let ljk = colk[t];
                let off = (t - 1) * w;
                let colj = &mut tail[off..off + (len - t)];
                for (a, b) in colj.iter_mut().zip(&colk[t..len]) {
                    *a -= ljk * b;
                }
            }
        }
        Ok(BandedCholesky { l: self })
    }
}

/// Dot product with four independent accumulators.
#[inline]
pub(crate) fn dot4(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[2]) + (acc[1] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// Lower-triangular banded Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct BandedCholesky {
    l: BandedSym,
}

impl BandedCholesky {
    pub fn dim(&self) -> usize {
        self.l.n
    }

    fn col(&self, k: usize) -> &[f64] {
        let w = self.l.bw + 1;
        &self.l.data[k * w..k * w + self.l.col_len(k)]
    }

    pub fn log_det(&self) -> f64 {
        (0..self.l.n).map(|k| 2.0 * self.col(k)[0].ln()).sum()
    }

    /// Solves `L y = b` in place.
    pub fn forward(&self, b: &mut [f64]) {
        for k in 0..self.l.n {
            let col = self.col(k);
            let y = b[k] / col[0];
            b[k] = y;
            for (dst, l) in b[k + 1..k + col.len()].iter_mut().zip(&col[1..]) {
                *dst -= l * y;
            }
        }
    }

    /// Solves `Lᵀ x = b` in place.
    pub fn backward(&self, b: &mut [f64]) {
        for k in (0..self.l.n).rev() {
            let col = self.col(k);
            let s = b[k] - dot4(&col[1..], &b[k + 1..k + col.len()]);
            b[k] = s / col[0];
        }
    }

    /// `Lᵀ x`.
    pub fn mul_lt(&self, x: &[f64]) -> Vec<f64> {
        (0..self.l.n)
            .map(|k| {
                let col = self.col(k);
                dot4(col, &x[k..k + col.len()])
            })
            .collect()
    }
}

/// Cholesky factor of the arrow-structured SPD matrix
///
/// ```text
/// H = [ A   B ]
///     [ Bᵀ  C ]
/// ```
///
/// with `A` banded (`n × n`), `B` dense (`n × p`) and `C` dense (`p × p`).
#[derive(Clone, Debug)]
pub struct BorderedFactor {
    band: BandedCholesky,
    /// `L_A⁻¹ B`, column-major (`p` columns of length `n`).
    x: Vec<Vec<f64>>,
    /// Dense lower factor of the Schur complement, row-major `p × p`.
    ls: Vec<f64>,
    p: usize,
}

impl BorderedFactor {
    /// Factorises `H`. `border` holds the `p` columns of `B`; `corner` is `C` row-major.
    pub fn new(a: BandedSym, border: Vec<Vec<f64>>, corner: &[f64]) -> Result<Self> {
        let p = border.len();
        assert_eq!(corner.len(), p * p);
        let band = a.cholesky()?;
        let mut x = border;
        for col in x.iter_mut() {
            band.forward(col);
        }
        let mut s = corner.to_vec();
        for i in 0..p {
            for j in 0..=i {
                let dot: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| a * b).sum();
                s[i * p + j] -= dot;
            }
        }
        let ls = dense_cholesky(&s, p)?;
        Ok(Self { band, x, ls, p })
    }

    pub fn dim(&self) -> usize {
        self.band.dim() + self.p
    }

    pub fn band_dim(&self) -> usize {
        self.band.dim()
    }

    pub fn log_det(&self) -> f64 {
        let dense: f64 = (0..self.p).map(|i| 2.0 * self.ls[i * self.p + i].ln()).sum();
        self.band.log_det() + dense
    }

    /// Solves `H v = r` for `r` laid out as `[band part, border part]`.
    pub fn solve(&self, r: &[f64]) -> Vec<f64> {
        let n = self.band.dim();
        let p = self.p;
        let mut y1 = r[..n].to_vec();
        self.band.forward(&mut y1);
        let mut y2: Vec<f64> = (0..p)
            .map(|j| r[n + j] - dot(&self.x[j], &y1))
            .collect();
        dense_forward(&self.ls, p, &mut y2);
        dense_backward(&self.ls, p, &mut y2);
        for (j, v2) in y2.iter().enumerate() {
            for (a, xv) in y1.iter_mut().zip(&self.x[j]) {
                *a -= xv * v2;
            }
        }
        self.band.backward(&mut y1);
        y1.extend_from_slice(&y2);
        y1
    }

    /// Returns `L⁻ᵀ z`; with `z ~ N(0, I)` this is a draw from `N(0, H⁻¹)`.
    pub fn solve_lt(&self, z: &[f64]) -> Vec<f64> {
        let n = self.band.dim();
        let p = self.p;
        let mut v2 = z[n..].to_vec();
        dense_backward(&self.ls, p, &mut v2);
        let mut v1 = z[..n].to_vec();
        for (j, b) in v2.iter().enumerate() {
            for (a, xv) in v1.iter_mut().zip(&self.x[j]) {
                *a -= xv * b;
            }
        }
        self.band.backward(&mut v1);
        v1.extend_from_slice(&v2);
        v1
    }

    /// `vᵀ H v` computed as `‖Lᵀ v‖²`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        let n = self.band.dim();
        let p = self.p;
        let mut w1 = self.band.mul_lt(&v[..n]);
        for (j, vj) in v[n..].iter().enumerate() {
            for (a, xv) in w1.iter_mut().zip(&self.x[j]) {
                *a += xv * vj;
            }
        }
        let mut acc: f64 = w1.iter().map(|a| a * a).sum();
        for j in 0..p {
            let mut s = 0.0;
            for i in j..p {
                s += self.ls[i * p + j] * v[n + i];
            }
            acc += s * s;
        }
        acc
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dense_cholesky(a: &[f64], p: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return Err(Error::Numeric(format!(
                        "Schur complement not positive definite at {i}"
                    )));
                }
                l[i * p + i] = s.sqrt();
            } else {
                l[i * p + j] = s / l[j * p + j];
            }
        }
    }
    Ok(l)
}

fn dense_forward(l: &[f64], p: usize, b: &mut [f64]) {
    for i in 0..p {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * p + k] * b[k];
        }
        b[i] = s / l[i * p + i];
    }
}

fn dense_backward(l: &[f64], p: usize, b: &mut [f64]) {
    for i in (0..p).rev() {
        let mut s = b[i];
        for k in i + 1..p {
            s -= l[k * p + i] * b[k];
        }
        b[i] = s / l[i * p + i];
    }
}

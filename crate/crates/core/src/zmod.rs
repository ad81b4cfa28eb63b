//! Linear algebra over Z/2^q.
//!
//! [`Elimination`] diagonalises a matrix with unimodular row and column
//! operations, always pivoting on an entry of least 2-adic valuation in the
//! remaining block. The result `U·A·V = D` decides solvability of `A·x = b`
//! for any right-hand side and yields generators of the kernel.

use crate::ring::Modulus;

/// Dense row-major matrix over Z/2^q.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ZMatrix {
    modulus: Modulus,
    rows: usize,
    cols: usize,
    data: Vec<u32>,
}

impl ZMatrix {
    pub fn zeros(modulus: Modulus, rows: usize, cols: usize) -> Self {
        ZMatrix { modulus, rows, cols, data: vec![0; rows * cols] }
    }

    pub fn identity(modulus: Modulus, n: usize) -> Self {
        let mut m = Self::zeros(modulus, n, n);
        for i in 0..n {
            m.set(i, i, 1);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn modulus(&self) -> Modulus {
        self.modulus
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u32 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: u32) {
        self.data[r * self.cols + c] = v & self.modulus.mask();
    }

    pub fn mul_vec(&self, x: &[u32]) -> Vec<u32> {
        assert_eq!(x.len(), self.cols);
        let m = self.modulus;
        (0..self.rows)
            .map(|r| {
                let mut acc = 0u64;
                for c in 0..self.cols {
                    acc = acc.wrapping_add(self.get(r, c) as u64 * x[c] as u64);
                }
                m.reduce(acc)
            })
            .collect()
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a != b {
            for c in 0..self.cols {
                self.data.swap(a * self.cols + c, b * self.cols + c);
            }
        }
    }

    fn swap_cols(&mut self, a: usize, b: usize) {
        if a != b {
            for r in 0..self.rows {
                self.data.swap(r * self.cols + a, r * self.cols + b);
            }
        }
    }

    fn scale_row(&mut self, r: usize, s: u32) {
        let m = self.modulus;
        for c in 0..self.cols {
            let v = m.mul(self.get(r, c), s);
            self.set(r, c, v);
        }
    }

    /// row[dst] -= f * row[src]
    fn sub_row(&mut self, dst: usize, src: usize, f: u32) {
        let m = self.modulus;
        for c in 0..self.cols {
            let v = m.sub(self.get(dst, c), m.mul(f, self.get(src, c)));
            self.set(dst, c, v);
        }
    }

    /// col[dst] -= f * col[src]
    fn sub_col(&mut self, dst: usize, src: usize, f: u32) {
        let m = self.modulus;
        for r in 0..self.rows {
            let v = m.sub(self.get(r, dst), m.mul(f, self.get(r, src)));
            self.set(r, dst, v);
        }
    }
}

/// Diagonal form `U·A·V = D` of a matrix over Z/2^q.
///
/// The first `rank` diagonal entries of `D` are `2^valuations[i]` with
/// `valuations[i] < q`; all other entries of `D` vanish.
#[derive(Clone, Debug)]
pub struct Elimination {
    modulus: Modulus,
    rows: usize,
    cols: usize,
    u: ZMatrix,
    v: ZMatrix,
    valuations: Vec<u32>,
}

impl Elimination {
    pub fn new(a: &ZMatrix) -> Self {
        let m = a.modulus;
        let (rows, cols) = (a.rows, a.cols);
        let mut d = a.clone();
        let mut u = ZMatrix::identity(m, rows);
        let mut v = ZMatrix::identity(m, cols);
        let mut valuations = Vec::new();
        let mut s = 0;
        while s < rows.min(cols) {
            let mut best: Option<(u32, usize, usize)> = None;
            for r in s..rows {
                for c in s..cols {
                    let val = m.valuation(d.get(r, c));
                    if val < m.q() && best.is_none_or(|b| val < b.0) {
                        best = Some((val, r, c));
                        if val == 0 {
                            break;
                        }
                    }
                }
                if best.is_some_and(|b| b.0 == 0) {
                    break;
                }
            }
            let Some((val, pr, pc)) = best else { break };
            d.swap_rows(s, pr);
            u.swap_rows(s, pr);
            d.swap_cols(s, pc);
            v.swap_cols(s, pc);
            let unit = d.get(s, s) >> val;
            let inv = m.unit_inverse(unit).expect("pivot quotient is odd");
            d.scale_row(s, inv);
            u.scale_row(s, inv);
            for r in 0..rows {
                if r != s {
                    let f = d.get(r, s) >> val;
                    if f != 0 {
                        d.sub_row(r, s, f);
                        u.sub_row(r, s, f);
                    }
                }
            }
            for c in (s + 1)..cols {
                let f = d.get(s, c) >> val;
                if f != 0 {
                    d.sub_col(c, s, f);
                    v.sub_col(c, s, f);
                }
            }
            valuations.push(val);
            s += 1;
        }
        Elimination { modulus: m, rows, cols, u, v, valuations }
    }

    pub fn rank(&self) -> usize {
        self.valuations.len()
    }

    pub fn valuations(&self) -> &[u32] {
        &self.valuations
    }

    /// Some solution of `A·x = b`, or `None` when the system is inconsistent.
    pub fn solve(&self, b: &[u32]) -> Option<Vec<u32>> {
        assert_eq!(b.len(), self.rows);
        let c = self.u.mul_vec(b);
        let mut y = vec![0u32; self.cols];
        for (i, &val) in self.valuations.iter().enumerate() {
            if self.modulus.valuation(c[i]) < val {
                return None;
            }
            y[i] = c[i] >> val;
        }
        if c[self.rank()..].iter().any(|&x| x != 0) {
            return None;
        }
        Some(self.v.mul_vec(&y))
    }

    /// Generators of the kernel `{x : A·x = 0}` as a Z/2^q-module.
    pub fn kernel(&self) -> Vec<Vec<u32>> {
        let m = self.modulus;
        let column = |j: usize, scale: u32| -> Vec<u32> {
            (0..self.cols).map(|r| m.mul(self.v.get(r, j), scale)).collect()
        };
        let mut gens = Vec::new();
        for (i, &val) in self.valuations.iter().enumerate() {
            if val > 0 {
                gens.push(column(i, 1 << (m.q() - val)));
            }
        }
        for j in self.rank()..self.cols {
            gens.push(column(j, 1));
        }
        gens
    }

    /// log2 of the kernel's cardinality.
    pub fn kernel_order_log2(&self) -> u32 {
        let free = (self.cols - self.rank()) as u32 * self.modulus.q();
        free + self.valuations.iter().sum::<u32>()
    }
}

//! Banded LU factorisation with partial pivoting, in LAPACK `gbtrf` layout.

/// A square matrix with `kl` sub- and `ku` super-diagonals. Storage is
/// column-major with `2 kl + ku + 1` rows per column; the top `kl` rows hold
/// fill-in created by pivoting.
#[derive(Clone, Debug)]
pub struct Banded {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Singular(pub usize);

impl Banded {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        Banded { n, kl, ku, ldab, ab: vec![0.0; ldab * n], ipiv: vec![0; n] }
    }

    pub fn clear(&mut self) {
        self.ab.iter_mut().for_each(|v| *v = 0.0);
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        self.kl + self.ku + i - j + j * self.ldab
    }

    /// Adds `v` to entry `(i, j)`, which must lie inside the band.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i <= j + self.kl && j <= i + self.ku, "({i}, {j}) outside band");
        let k = self.idx(i, j);
        self.ab[k] += v;
    }

    pub fn factor(&mut self) -> Result<(), Singular> {
        let (n, kl, kv) = (self.n, self.kl, self.kl + self.ku);
        let ld = self.ldab;
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let col = j * ld;
            let mut jp = 0;
            let mut best = self.ab[col + kv].abs();
            for p in 1..=km {
                let v = self.ab[col + kv + p].abs();
                if v > best {
                    best = v;
                    jp = p;
                }
            }
            self.ipiv[j] = j + jp;
            if best == 0.0 || !best.is_finite() {
                return Err(Singular(j));
            }
            ju = ju.max((j + self.ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let a = kv + j - c + c * ld;
                    let b = kv + j + jp - c + c * ld;
                    self.ab.swap(a, b);
                }
            }
            let piv = self.ab[col + kv];
            for p in 1..=km {
                self.ab[col + kv + p] /= piv;
            }
            for c in j + 1..=ju {
                let a = self.ab[kv + j - c + c * ld];
                if a == 0.0 {
                    continue;
                }
                for p in 1..=km {
                    let l = self.ab[col + kv + p];
                    self.ab[kv + j + p - c + c * ld] -= l * a;
                }
            }
        }
        Ok(())
    }

    /// Solves in place after [`Banded::factor`].
    pub fn solve(&self, b: &mut [f64]) {
        let (n, kl, kv) = (self.n, self.kl, self.kl + self.ku);
        let ld = self.ldab;
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
            let km = kl.min(n - 1 - j);
            let bj = b[j];
            for q in 1..=km {
                b[j + q] -= self.ab[j * ld + kv + q] * bj;
            }
        }
        for j in (0..n).rev() {
            b[j] /= self.ab[j * ld + kv];
            let bj = b[j];
            for i in j.saturating_sub(kv)..j {
                b[i] -= self.ab[kv + i - j + j * ld] * bj;
            }
        }
    }
}

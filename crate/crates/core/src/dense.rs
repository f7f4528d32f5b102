//! Small dense kernels for the per-face `n × n` systems (`n` is the species
//! count, at most ~10). Matrices are row-major slices.

/// Packed LU with partial pivoting; `false` if a pivot is exactly zero.
pub(crate) fn factor_in_place(n: usize, lu: &mut [f64], perm: &mut [usize]) -> bool {
    for (k, p) in perm.iter_mut().enumerate() {
        *p = k;
    }
    for k in 0..n {
        let mut pivot_row = k;
        let mut pivot_abs = lu[k * n + k].abs();
        for r in k + 1..n {
            let v = lu[r * n + k].abs();
            if v > pivot_abs {
                pivot_abs = v;
                pivot_row = r;
            }
        }
        if pivot_abs == 0.0 {
            return false;
        }
        if pivot_row != k {
            for c in 0..n {
                lu.swap(k * n + c, pivot_row * n + c);
            }
            perm.swap(k, pivot_row);
        }
        let pivot = lu[k * n + k];
        for r in k + 1..n {
            let factor = lu[r * n + k] / pivot;
            lu[r * n + k] = factor;
            for c in k + 1..n {
                lu[r * n + c] -= factor * lu[k * n + c];
            }
        }
    }
    true
}

pub(crate) fn solve_into(n: usize, lu: &[f64], perm: &[usize], rhs: &[f64], x: &mut [f64]) {
    for (xi, &p) in x.iter_mut().zip(perm) {
        *xi = rhs[p];
    }
    for r in 0..n {
        let mut acc = x[r];
        for c in 0..r {
            acc -= lu[r * n + c] * x[c];
        }
        x[r] = acc;
    }
    for r in (0..n).rev() {
        let mut acc = x[r];
        for c in r + 1..n {
            acc -= lu[r * n + c] * x[c];
        }
        x[r] = acc / lu[r * n + r];
    }
}

/// `‖M⁻¹‖₁` from a packed factorization; `scratch` holds at least `2n` values.
pub(crate) fn inverse_norm1(n: usize, lu: &[f64], perm: &[usize], scratch: &mut [f64]) -> f64 {
    let (unit, col) = scratch.split_at_mut(n);
    let mut best = 0.0_f64;
    for j in 0..n {
        unit.iter_mut().for_each(|v| *v = 0.0);
        unit[j] = 1.0;
        solve_into(n, lu, perm, unit, &mut col[..n]);
        best = best.max(col[..n].iter().map(|v| v.abs()).sum());
    }
    best
}

/// Maximum absolute column sum.
pub(crate) fn norm1(n: usize, matrix: &[f64]) -> f64 {
    (0..n)
        .map(|j| (0..n).map(|i| matrix[i * n + j].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub(crate) fn mat_vec(n: usize, matrix: &[f64], v: &[f64]) -> Vec<f64> {
    (0..n)
        .map(|i| {
            matrix[i * n..(i + 1) * n]
                .iter()
                .zip(v)
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Double-double number `hi + lo`, about 32 significant digits. Used where
/// heavy cancellation would otherwise swamp the result.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct Dd {
    pub hi: f64,
    pub lo: f64,
}

fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd { hi: s, lo: b - (s - a) }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

impl Dd {
    pub fn new(v: f64) -> Self {
        Dd { hi: v, lo: 0.0 }
    }

    pub fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let r = quick_two_sum(s, e + t);
        quick_two_sum(r.hi, r.lo + f)
    }

    pub fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    pub fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    pub fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        quick_two_sum(p, e + (self.hi * o.lo + self.lo * o.hi))
    }

    pub fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul(Dd::new(q1)));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul(Dd::new(q2)));
        let q3 = r.hi / o.hi;
        let q = quick_two_sum(q1, q2);
        q.add(Dd::new(q3))
    }

    pub fn sqrt(self) -> Dd {
        if self.hi <= 0.0 {
            return Dd::default();
        }
        let x = self.hi.sqrt();
        let r = self.sub(Dd::new(x).mul(Dd::new(x)));
        quick_two_sum(x, r.hi / (2.0 * x))
    }
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

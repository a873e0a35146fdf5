//! Small numerical helpers shared across modules: compensated summation,
//! dense pivoted solves for tiny systems, and a few scalar functions.

/// Neumaier-compensated accumulator. Summation order is the order of `add`
/// calls, so results are bit-stable for a fixed input order.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl std::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Compensated sum of an iterator, in iteration order.
pub fn stable_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + exp(x))` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Round-half-up of a nonnegative real to an integer count.
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

/// Outcome of [`solve_pivoted`].
#[derive(Debug, Clone, PartialEq)]
pub struct PivotedSolution {
    pub x: Vec<f64>,
    /// Number of pivots above the rank tolerance.
    pub rank: usize,
}

/// Solves the square system `a x = b` by Gaussian elimination with complete
/// pivoting. Pivots with magnitude below `rank_tol * max|a|` are treated as
/// zero and the corresponding unknowns set to zero, which yields a basic
/// solution when the system is consistent but rank deficient. Callers that
/// need full rank check `rank`.
pub fn solve_pivoted(a: &[Vec<f64>], b: &[f64], rank_tol: f64) -> PivotedSolution {
    let n = b.len();
    debug_assert!(a.len() == n && a.iter().all(|row| row.len() == n));
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut rhs = b.to_vec();
    let mut col_perm: Vec<usize> = (0..n).collect();
    let scale = m
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    let threshold = rank_tol * scale.max(f64::MIN_POSITIVE);
    let mut rank = 0;

    for k in 0..n {
        let (mut pr, mut pc, mut best) = (k, k, 0.0);
        for (r, row) in m.iter().enumerate().skip(k) {
            for (c, v) in row.iter().enumerate().skip(k) {
                if v.abs() > best {
                    best = v.abs();
                    pr = r;
                    pc = c;
                }
            }
        }
        if best <= threshold {
            break;
        }
        m.swap(k, pr);
        rhs.swap(k, pr);
        if pc != k {
            for row in m.iter_mut() {
                row.swap(k, pc);
            }
            col_perm.swap(k, pc);
        }
        rank += 1;
        for r in (k + 1)..n {
            let factor = m[r][k] / m[k][k];
            if factor == 0.0 {
                continue;
            }
            let (pivot_rows, rest) = m.split_at_mut(r);
            for (x, p) in rest[0][k..].iter_mut().zip(&pivot_rows[k][k..]) {
                *x -= factor * p;
            }
            rhs[r] -= factor * rhs[k];
        }
    }

    let mut y = vec![0.0; n];
    for k in (0..rank).rev() {
        let mut acc = rhs[k];
        for c in (k + 1)..rank {
            acc -= m[k][c] * y[c];
        }
        y[k] = acc / m[k][k];
    }
    let mut x = vec![0.0; n];
    for (k, &orig) in col_perm.iter().enumerate() {
        x[orig] = y[k];
    }
    PivotedSolution { x, rank }
}

//! Small dense linear algebra over GF(2) on `u128` bit vectors.

/// Row-echelon basis that remembers, for each stored row, which inserted
/// vectors were combined to produce it.
#[derive(Clone, Debug, Default)]
pub(crate) struct Echelon {
    rows: Vec<(u128, u128)>,
}

fn pivot(v: u128) -> u128 {
    1u128 << (127 - v.leading_zeros())
}

impl Echelon {
    pub fn new() -> Self {
        Self::default()
    }

    #[cfg(test)]
    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    /// Reduces `v` against the basis; returns the residual and the
    /// combination mask of basis vectors that were XORed in.
    pub fn reduce(&self, mut v: u128) -> (u128, u128) {
        let mut mask = 0u128;
        for &(row, m) in &self.rows {
            if v & pivot(row) != 0 {
                v ^= row;
                mask ^= m;
            }
        }
        (v, mask)
    }

    /// Inserts `v` tagged with `tag` if it is independent of the basis.
    pub fn insert(&mut self, v: u128, tag: u128) -> bool {
        let (r, m) = self.reduce(v);
        if r == 0 {
            return false;
        }
        self.rows.push((r, m ^ tag));
        true
    }

    pub fn pop(&mut self) {
        self.rows.pop();
    }
}

/// Solves `rows[i] · x = rhs[i]` (dot product over GF(2)) for `x` with
/// `nbits` unknowns. Returns `None` when inconsistent.
pub(crate) fn solve(rows: &[u128], rhs: &[bool], nbits: usize) -> Option<u128> {
    let mut aug: Vec<(u128, bool)> = rows.iter().copied().zip(rhs.iter().copied()).collect();
    let mut pivots = Vec::new();
    let mut r = 0;
    for col in 0..nbits {
        let bit = 1u128 << col;
        let Some(p) = (r..aug.len()).find(|&i| aug[i].0 & bit != 0) else {
            continue;
        };
        aug.swap(r, p);
        let (prow, prhs) = aug[r];
        for (i, row) in aug.iter_mut().enumerate() {
            if i != r && row.0 & bit != 0 {
                row.0 ^= prow;
                row.1 ^= prhs;
            }
        }
        pivots.push(col);
        r += 1;
    }
    if aug[r..].iter().any(|&(_, b)| b) {
        return None;
    }
    let mut x = 0u128;
    for (i, &col) in pivots.iter().enumerate() {
        if aug[i].1 {
            x |= 1u128 << col;
        }
    }
    Some(x)
}

/// Basis of `{x : rows[i] · x = 0 ∀i}` over `nbits` unknowns.
pub(crate) fn nullspace(rows: &[u128], nbits: usize) -> Vec<u128> {
    let mut m: Vec<u128> = rows.to_vec();
    let mut pivot_cols = Vec::new();
    let mut r = 0;
    for col in 0..nbits {
        let bit = 1u128 << col;
        let Some(p) = (r..m.len()).find(|&i| m[i] & bit != 0) else {
            continue;
        };
        m.swap(r, p);
        let prow = m[r];
        for (i, row) in m.iter_mut().enumerate() {
            if i != r && *row & bit != 0 {
                *row ^= prow;
            }
        }
        pivot_cols.push(col);
        r += 1;
    }
    let mut basis = Vec::new();
    for free in (0..nbits).filter(|c| !pivot_cols.contains(c)) {
        let mut x = 1u128 << free;
        for (i, &pc) in pivot_cols.iter().enumerate() {
            if m[i] & (1u128 << free) != 0 {
                x |= 1u128 << pc;
            }
        }
        basis.push(x);
    }
    basis
}

#[inline]
pub(crate) fn dot(a: u128, b: u128) -> bool {
    (a & b).count_ones() & 1 == 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echelon_tracks_combinations() {
        let mut e = Echelon::new();
        assert!(e.insert(0b011, 0b001));
        assert!(e.insert(0b110, 0b010));
        assert!(!e.insert(0b101, 0));
        let (r, m) = e.reduce(0b101);
        assert_eq!(r, 0);
        assert_eq!(m, 0b011);
        assert_eq!(e.rank(), 2);
    }

    #[test]
    fn solve_and_nullspace() {
        let rows = [0b0011u128, 0b0110];
        let x = solve(&rows, &[true, false], 4).unwrap();
        assert!(dot(rows[0], x));
        assert!(!dot(rows[1], x));
        let ns = nullspace(&rows, 4);
        assert_eq!(ns.len(), 2);
        for v in ns {
            assert!(rows.iter().all(|&r| !dot(r, v)));
            assert_ne!(v, 0);
        }
        assert!(solve(&[0b1, 0b1], &[true, false], 1).is_none());
    }
}

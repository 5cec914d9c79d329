//! Cholesky factors of active-set Gram matrices with column add/drop updates.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Relative pivot tolerance: a squared pivot at or below `PIVOT_TOL` times the
/// corresponding Gram diagonal entry is treated as rank deficiency.
pub const PIVOT_TOL: f64 = 1e-10;

/// Lower-triangular `L` with `L·Lᵀ` equal to the Gram matrix of the columns
/// listed in `active_order`, in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct CholFactor {
    l: Array2<f64>,
    active_order: Vec<usize>,
}

impl Default for CholFactor {
    fn default() -> Self {
        Self::empty()
    }
}

impl CholFactor {
    pub fn empty() -> Self {
        CholFactor {
            l: Array2::zeros((0, 0)),
            active_order: Vec::new(),
        }
    }

    /// Factors a symmetric positive-definite matrix. Columns are labelled `0..k`.
    pub fn factor(gram: ArrayView2<f64>) -> Result<Self> {
        let k = gram.nrows();
        if k == 0 || gram.ncols() != k {
            return Err(Error::InvalidInput(format!(
                "cannot factor a {}x{} matrix",
                gram.nrows(),
                gram.ncols()
            )));
        }
        let scale = gram.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..k {
            for j in 0..i {
                if (gram[[i, j]] - gram[[j, i]]).abs() > 1e-10 * (1.0 + scale) {
                    return Err(Error::InvalidInput(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let mut l = Array2::<f64>::zeros((k, k));
        for j in 0..k {
            let mut d = gram[[j, j]];
            for c in 0..j {
                d -= l[[j, c]] * l[[j, c]];
            }
            if d <= PIVOT_TOL * gram[[j, j]].abs().max(f64::MIN_POSITIVE) {
                return Err(Error::RankDeficient { index: j, pivot: d });
            }
            let djj = d.sqrt();
            l[[j, j]] = djj;
            for i in (j + 1)..k {
                let mut s = gram[[i, j]];
                for c in 0..j {
                    s -= l[[i, c]] * l[[j, c]];
                }
                l[[i, j]] = s / djj;
            }
        }
        Ok(CholFactor {
            l,
            active_order: (0..k).collect(),
        })
    }

    /// Appends column `index` given its cross products with the current
    /// columns (`cross[i] = x_newᵀ x_{active_order[i]}`) and its squared norm.
    pub fn add_column(mut self, index: usize, cross: ArrayView1<f64>, self_dot: f64) -> Result<Self> {
        let k = self.len();
        if cross.len() != k {
            return Err(Error::InvalidInput(format!(
                "cross-product vector has length {} for a {k}-column factor",
                cross.len()
            )));
        }
        let w = self.forward(cross.to_owned());
        let d = self_dot - w.dot(&w);
        if d <= PIVOT_TOL * self_dot.abs().max(f64::MIN_POSITIVE) {
            return Err(Error::RankDeficient { index, pivot: d });
        }
        let mut l = Array2::zeros((k + 1, k + 1));
        l.slice_mut(ndarray::s![..k, ..k]).assign(&self.l);
        l.slice_mut(ndarray::s![k, ..k]).assign(&w);
        l[[k, k]] = d.sqrt();
        self.l = l;
        self.active_order.push(index);
        Ok(self)
    }

    /// Removes the column at `position` in `active_order` and re-triangularizes
    /// the trailing block with Givens rotations.
    pub fn drop_column(mut self, position: usize) -> Result<Self> {
        let k = self.len();
        if position >= k {
            return Err(Error::InvalidInput(format!(
                "position {position} out of range for a {k}-column factor"
            )));
        }
        // Deleting row `position` leaves a (k-1)×k matrix M with M·Mᵀ equal to the
        // reduced Gram; rows at and below `position` carry one superdiagonal entry.
        let mut m = Array2::<f64>::zeros((k - 1, k));
        for (dst, src) in (0..k).filter(|&r| r != position).enumerate() {
            m.row_mut(dst).assign(&self.l.row(src));
        }
        for j in position..(k - 1) {
            let a = m[[j, j]];
            let b = m[[j, j + 1]];
            let r = a.hypot(b);
            let (c, s) = if r == 0.0 { (1.0, 0.0) } else { (a / r, b / r) };
            for i in j..(k - 1) {
                let u = m[[i, j]];
                let v = m[[i, j + 1]];
                m[[i, j]] = c * u + s * v;
                m[[i, j + 1]] = -s * u + c * v;
            }
        }
        self.l = m.slice(ndarray::s![.., ..k - 1]).to_owned();
        self.active_order.remove(position);
        Ok(self)
    }

    /// Solves `(L·Lᵀ)·v = rhs`.
    pub fn solve(&self, rhs: ArrayView1<f64>) -> Array1<f64> {
        assert_eq!(rhs.len(), self.len(), "rhs length must match factor size");
        let w = self.forward(rhs.to_owned());
        self.backward(w)
    }

    fn forward(&self, mut b: Array1<f64>) -> Array1<f64> {
        let k = self.len();
        for i in 0..k {
            let mut s = b[i];
            for c in 0..i {
                s -= self.l[[i, c]] * b[c];
            }
            b[i] = s / self.l[[i, i]];
        }
        b
    }

    fn backward(&self, mut b: Array1<f64>) -> Array1<f64> {
        let k = self.len();
        for i in (0..k).rev() {
            let mut s = b[i];
            for r in (i + 1)..k {
                s -= self.l[[r, i]] * b[r];
            }
            b[i] = s / self.l[[i, i]];
        }
        b
    }

    pub fn len(&self) -> usize {
        self.active_order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active_order.is_empty()
    }

    pub fn lower(&self) -> ArrayView2<'_, f64> {
        self.l.view()
    }

    pub fn active_order(&self) -> &[usize] {
        &self.active_order
    }

    /// `L·Lᵀ`.
    pub fn reconstruct(&self) -> Array2<f64> {
        self.l.dot(&self.l.t())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Axis};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_columns(n: usize, k: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, k), |_| rng.random_range(-1.0..1.0))
    }

    fn gram_of(x: &Array2<f64>, cols: &[usize]) -> Array2<f64> {
        let sub = x.select(Axis(1), cols);
        sub.t().dot(&sub)
    }

    fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        (a - b).iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    #[test]
    fn identity_factors_to_identity() {
        let f = CholFactor::factor(Array2::eye(3).view()).unwrap();
        assert_eq!(f.lower(), Array2::<f64>::eye(3));
    }

    #[test]
    fn two_by_two_by_hand() {
        let g = array![[4.0, 2.0], [2.0, 5.0]];
        let f = CholFactor::factor(g.view()).unwrap();
        assert_abs_diff_eq!(f.lower().to_owned(), array![[2.0, 0.0], [1.0, 2.0]], epsilon = 1e-15);
        let v = f.solve(array![4.0, 6.0].view());
        assert_abs_diff_eq!(v, array![0.5, 1.0], epsilon = 1e-15);
    }

    #[test]
    fn singular_gram_is_rank_deficient() {
        let g = array![[1.0, 1.0], [1.0, 1.0]];
        assert!(matches!(
            CholFactor::factor(g.view()),
            Err(Error::RankDeficient { index: 1, .. })
        ));
    }

    #[test]
    fn add_orthogonal_column() {
        let f = CholFactor::factor(Array2::eye(2).view()).unwrap();
        let f = f.add_column(7, array![0.0, 0.0].view(), 1.0).unwrap();
        assert_eq!(f.lower(), Array2::<f64>::eye(3));
        assert_eq!(f.active_order(), &[0, 1, 7]);
    }

    #[test]
    fn add_duplicate_column_fails() {
        let x = random_columns(10, 3, 1);
        let g = gram_of(&x, &[0, 1, 2]);
        let f = CholFactor::factor(g.view()).unwrap();
        let cross = g.row(1).to_owned();
        assert!(matches!(
            f.add_column(3, cross.view(), g[[1, 1]]),
            Err(Error::RankDeficient { index: 3, .. })
        ));
    }

    #[test]
    fn random_growth_matches_refactorization() {
        let x = random_columns(20, 5, 2);
        let mut f = CholFactor::factor(gram_of(&x, &[0]).view()).unwrap();
        for j in 1..5 {
            let cross: Array1<f64> = f
                .active_order()
                .iter()
                .map(|&i| x.column(i).dot(&x.column(j)))
                .collect();
            f = f.add_column(j, cross.view(), x.column(j).dot(&x.column(j))).unwrap();
        }
        let direct = CholFactor::factor(gram_of(&x, &[0, 1, 2, 3, 4]).view()).unwrap();
        assert!(max_abs_diff(&f.lower().to_owned(), &direct.lower().to_owned()) <= 1e-9);
    }

    #[test]
    fn drop_only_column() {
        let f = CholFactor::factor(array![[2.0]].view()).unwrap();
        let f = f.drop_column(0).unwrap();
        assert!(f.is_empty());
        assert_eq!(f.lower().dim(), (0, 0));
    }

    #[test]
    fn drop_last_truncates() {
        let x = random_columns(12, 4, 3);
        let f = CholFactor::factor(gram_of(&x, &[0, 1, 2, 3]).view()).unwrap();
        let l = f.lower().to_owned();
        let g = f.drop_column(3).unwrap();
        assert_eq!(g.lower(), l.slice(ndarray::s![..3, ..3]));
    }

    #[test]
    fn drop_interior_matches_refactorization() {
        let x = random_columns(15, 5, 4);
        let f = CholFactor::factor(gram_of(&x, &[0, 1, 2, 3, 4]).view()).unwrap();
        let f = f.drop_column(2).unwrap();
        assert_eq!(f.active_order(), &[0, 1, 3, 4]);
        let direct = CholFactor::factor(gram_of(&x, &[0, 1, 3, 4]).view()).unwrap();
        assert!(max_abs_diff(&f.lower().to_owned(), &direct.lower().to_owned()) <= 1e-9);
        assert!(f.lower().diag().iter().all(|&d| d > 0.0));
    }

    #[test]
    fn drop_out_of_range() {
        let f = CholFactor::factor(Array2::eye(2).view()).unwrap();
        assert!(f.drop_column(2).is_err());
    }

    #[test]
    fn solve_residual_random() {
        let x = random_columns(30, 6, 5);
        let g = gram_of(&x, &[0, 1, 2, 3, 4, 5]);
        let f = CholFactor::factor(g.view()).unwrap();
        let rhs = array![1.0, -2.0, 0.5, 3.0, -1.5, 0.25];
        let v = f.solve(rhs.view());
        let resid = g.dot(&v) - &rhs;
        assert!(resid.iter().all(|r| r.abs() <= 1e-9 * (1.0 + 3.0)));
    }

    fn random_spd(k: usize, seed: u64) -> Array2<f64> {
        let x = random_columns(k + 5, k, seed);
        x.t().dot(&x)
    }

    proptest! {
        #[test]
        fn factor_reconstructs(k in 1usize..=12, seed in any::<u64>()) {
            let g = random_spd(k, seed);
            let f = CholFactor::factor(g.view()).unwrap();
            let err = (&f.reconstruct() - &g).iter().map(|v| v * v).sum::<f64>().sqrt();
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(err <= 1e-10 * norm);
        }

        #[test]
        fn solve_residual_bound(k in 1usize..=12, seed in any::<u64>()) {
            let g = random_spd(k, seed);
            let f = CholFactor::factor(g.view()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x55);
            let rhs = Array1::from_shape_fn(k, |_| rng.random_range(-5.0..5.0));
            let v = f.solve(rhs.view());
            let inf = rhs.iter().fold(0.0f64, |m, r| m.max(r.abs()));
            let resid = g.dot(&v) - &rhs;
            prop_assert!(resid.iter().all(|r| r.abs() <= 1e-9 * (1.0 + inf)));
        }

        #[test]
        fn add_drop_sequences_match_refactorization(
            ops in proptest::collection::vec(any::<u8>(), 1..=20),
            seed in any::<u64>(),
        ) {
            let total = 12;
            let x = random_columns(40, total, seed);
            let mut f = CholFactor::empty();
            for op in ops {
                let active = f.active_order().to_vec();
                let inactive: Vec<usize> = (0..total).filter(|j| !active.contains(j)).collect();
                let grow = active.is_empty() || (op % 2 == 0 && !inactive.is_empty());
                if grow {
                    let j = inactive[(op as usize / 2) % inactive.len()];
                    let cross: Array1<f64> = active.iter().map(|&i| x.column(i).dot(&x.column(j))).collect();
                    f = f.add_column(j, cross.view(), x.column(j).dot(&x.column(j))).unwrap();
                } else {
                    f = f.drop_column((op as usize / 2) % active.len()).unwrap();
                }
                if !f.is_empty() {
                    let g = gram_of(&x, f.active_order());
                    let direct = CholFactor::factor(g.view()).unwrap();
                    prop_assert!(max_abs_diff(&f.lower().to_owned(), &direct.lower().to_owned()) <= 1e-8);
                }
            }
        }
    }
}

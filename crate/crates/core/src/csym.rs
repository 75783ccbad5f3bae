//! Column-symmetric ("c-symmetric") matrices.
//!
//! An `m × n^q` matrix `M` is c-symmetric when `M(e_{i_1} ⊗ … ⊗ e_{i_q})`
//! does not depend on the order of the indices. Derivative tensors `D^q g`
//! are always of this kind, and a c-symmetric matrix is determined by its
//! action `x ↦ M x^q` on Kronecker powers.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matkron::{kron, kron_pow, KronIndex, Mat};
use crate::scalar::{lit, norm_inf, Real};

/// Largest order handled by [`polarize`].
pub const MAX_POLARIZE_ORDER: usize = 3;

/// Number of sample directions used by [`extract_linear_form`].
pub const LINEAR_FORM_SAMPLES: usize = 20;
const LINEAR_FORM_SEED: u64 = 0x5eed_c0de;

/// A matrix tagged with the base dimension and order it acts on.
#[derive(Debug, Clone, PartialEq)]
pub struct CSymSpec<T = f64> {
    pub n: usize,
    pub q: usize,
    pub m: Mat<T>,
}

impl<T: Real> CSymSpec<T> {
    pub fn new(m: Mat<T>, n: usize, q: usize) -> Result<Self> {
        check_cols(&m, n, q)?;
        Ok(Self { n, q, m })
    }

    /// Projects onto the c-symmetric subspace.
    pub fn symmetrized(m: Mat<T>, n: usize, q: usize) -> Result<Self> {
        let m = csym_project(&m, n, q)?;
        Ok(Self { n, q, m })
    }

    pub fn apply_power(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.n {
            return Err(Error::Dimension {
                expected: self.n,
                got: x.len(),
            });
        }
        Ok(self.m.mul_vec(&kron_pow(x, self.q)?))
    }
}

fn check_cols<T: Real>(m: &Mat<T>, n: usize, q: usize) -> Result<()> {
    let expected = n.checked_pow(q as u32).unwrap_or(usize::MAX);
    if m.cols() != expected {
        return Err(Error::Shape(format!(
            "expected {expected} columns (n = {n}, q = {q}), found {}",
            m.cols()
        )));
    }
    Ok(())
}

/// Groups flat column positions by their sorted multi-index.
fn orbits(n: usize, q: usize) -> BTreeMap<Vec<usize>, Vec<usize>> {
    let idx = KronIndex::new(n, q);
    let mut out: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for f in 0..idx.len() {
        let mut key = idx.multi(f);
        key.sort_unstable();
        out.entry(key).or_default().push(f);
    }
    out
}

/// Checks column symmetry entrywise, returning the verdict and the largest
/// absolute disagreement between permuted columns.
pub fn is_csymmetric<T: Real>(m: &Mat<T>, n: usize, q: usize, tol: T) -> Result<(bool, T)> {
    check_cols(m, n, q)?;
    let mut worst = T::zero();
    for cols in orbits(n, q).values() {
        let base = cols[0];
        for &c in &cols[1..] {
            for i in 0..m.rows() {
                worst = worst.max((m[(i, c)] - m[(i, base)]).abs());
            }
        }
    }
    Ok((worst <= tol, worst))
}

/// The unique c-symmetric matrix with the same action on every `x^q`,
/// obtained by averaging each column over its index permutations.
pub fn csym_project<T: Real>(m: &Mat<T>, n: usize, q: usize) -> Result<Mat<T>> {
    check_cols(m, n, q)?;
    let mut out = m.clone();
    for cols in orbits(n, q).values() {
        let k: T = lit(cols.len() as f64);
        for i in 0..m.rows() {
            let avg = cols.iter().map(|&c| m[(i, c)]).sum::<T>() / k;
            for &c in cols {
                out[(i, c)] = avg;
            }
        }
    }
    Ok(out)
}

/// Recovers the c-symmetric `M` from the map `x ↦ M x^q` (`1 ≤ q ≤ 3`).
///
/// Uses the polarization identity
/// `M(v_1 ⊗ … ⊗ v_q) = (1/q!) Σ_{S ⊆ {1..q}} (−1)^{q−|S|} p(Σ_{s∈S} v_s)`,
/// evaluated once per sorted index tuple. If `oracle` is not a homogeneous
/// map of this form the result is meaningless.
pub fn polarize<T: Real, F>(mut oracle: F, n: usize, q: usize) -> Result<Mat<T>>
where
    F: FnMut(&[T]) -> Vec<T>,
{
    if !(1..=MAX_POLARIZE_ORDER).contains(&q) {
        return Err(Error::OrderUnsupported {
            order: q,
            min: 1,
            max: MAX_POLARIZE_ORDER,
        });
    }
    let factorial: T = lit((1..=q).product::<usize>() as f64);
    let groups = orbits(n, q);
    let mut columns: Vec<(Vec<usize>, Vec<T>)> = Vec::with_capacity(groups.len());
    let mut m_rows = None;
    for key in groups.keys() {
        let mut acc: Option<Vec<T>> = None;
        // non-empty subsets of the q slots; the empty subset contributes p(0) = 0
        for mask in 1u32..(1 << q) {
            let mut x = vec![T::zero(); n];
            for (slot, &i) in key.iter().enumerate() {
                if mask & (1 << slot) != 0 {
                    x[i] += T::one();
                }
            }
            let y = oracle(&x);
            let sign = if (q as u32 - mask.count_ones()) % 2 == 0 {
                T::one()
            } else {
                -T::one()
            };
            let acc = acc.get_or_insert_with(|| vec![T::zero(); y.len()]);
            assert_eq!(acc.len(), y.len(), "oracle output length changed");
            for (a, v) in acc.iter_mut().zip(&y) {
                *a += sign * *v;
            }
        }
        let col: Vec<T> = acc.unwrap().into_iter().map(|v| v / factorial).collect();
        m_rows.get_or_insert(col.len());
        columns.push((key.clone(), col));
    }
    let rows = m_rows.unwrap_or(0);
    let mut out = Mat::zeros(rows, KronIndex::new(n, q).len());
    for (key, col) in &columns {
        for &c in &groups[key] {
            out.set_col(c, col);
        }
    }
    Ok(out)
}

/// `aᵀ ⊗ E + E ⊗ aᵀ`, the `n × n²` c-symmetric matrix with `x ↦ 2(aᵀx)x`.
pub fn linear_form_tensor<T: Real>(a: &[T]) -> Mat<T> {
    let n = a.len();
    let at = Mat::row(a);
    let e = Mat::identity(n);
    &kron(&at, &e) + &kron(&e, &at)
}

fn sample_directions<T: Real>(n: usize) -> Vec<Vec<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(LINEAR_FORM_SEED ^ n as u64);
    (0..LINEAR_FORM_SAMPLES)
        .map(|_| (0..n).map(|_| lit(rng.gen_range(-2.0..2.0))).collect())
        .collect()
}

/// Finds `a` with `C h² = (aᵀh) h` for every `h`, if it exists.
///
/// Candidate `a_i = [C(e_i ⊗ e_i)]_i` is checked on a fixed seeded sample of
/// directions. When `C` is itself c-symmetric the stronger structural
/// identity `C = ½(aᵀ ⊗ E + E ⊗ aᵀ)` must also hold.
pub fn extract_linear_form<T: Real>(c: &Mat<T>, tol: T) -> Option<Vec<T>> {
    let n = c.rows();
    if n == 0 || c.cols() != n * n {
        return None;
    }
    let a: Vec<T> = (0..n).map(|i| c[(i, i * n + i)]).collect();
    for h in sample_directions::<T>(n) {
        let ch2 = c.mul_vec(&kron_pow(&h, 2).ok()?);
        let ah: T = a.iter().zip(&h).map(|(x, y)| *x * *y).sum();
        let hn = norm_inf(&h);
        let bound = tol * (T::one() + hn * hn);
        if ch2.iter().zip(&h).any(|(v, hi)| (*v - ah * *hi).abs() > bound) {
            return None;
        }
    }
    if let Ok((true, _)) = is_csymmetric(c, n, 2, tol) {
        let half: T = lit(0.5);
        let structured = linear_form_tensor(&a).scale(half);
        if (&structured - c).max_abs() > tol {
            return None;
        }
    }
    Some(a)
}

/// Finds `c` with `w = c ⊗ c`, normalised so its first nonzero entry is
/// positive.
pub fn kron_square_root<T: Real>(w: &[T], tol: T) -> Option<Vec<T>> {
    let n = (w.len() as f64).sqrt().round() as usize;
    if n * n != w.len() {
        return None;
    }
    // W[j, i] = w[i n + j]; c ⊗ c gives W = c cᵀ
    let wm = Mat::from_fn(n, n, |j, i| w[i * n + j]);
    let scale = wm.max_abs().max(T::one());
    let eps = tol * scale;
    if (&wm - &wm.transpose()).max_abs() > eps {
        return None;
    }
    let (k, wkk) = (0..n)
        .map(|i| (i, wm[(i, i)]))
        .fold((0, -T::infinity()), |b, c| if c.1 > b.1 { c } else { b });
    if wkk <= eps {
        return if wm.max_abs() <= eps {
            Some(vec![T::zero(); n])
        } else {
            None
        };
    }
    let root = wkk.sqrt();
    let mut c: Vec<T> = wm.col(k).into_iter().map(|x| x / root).collect();
    let outer = Mat::from_fn(n, n, |i, j| c[i] * c[j]);
    if (&outer - &wm).max_abs() > eps {
        return None;
    }
    let lead = tol * root.max(T::one());
    if let Some(first) = c.iter().find(|x| x.abs() > lead) {
        if *first < T::zero() {
            c.iter_mut().for_each(|x| *x = -*x);
        }
    }
    Some(c)
}

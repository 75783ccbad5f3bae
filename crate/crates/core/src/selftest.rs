//! Seeded randomized checks of the Kronecker, star-product and
//! c-symmetry rules the jet algebra is built on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::csym::{csym_project, polarize};
use crate::matkron::{kron, kron_pow, kron_pow_mat, kron_vec, kron_vecs, star, swap_matrix, Lu, Mat};

/// Result of one family of randomized checks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlgebraCheck {
    pub name: &'static str,
    pub instances: usize,
    /// Largest `max|x − y| / max(1, max|y|)` seen.
    pub max_rel_dev: f64,
    pub tol: f64,
    pub passed: bool,
}

fn rel_dev(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "compared objects differ in size");
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let size = b.iter().fold(1.0f64, |m, y| m.max(y.abs()));
    diff / size
}

fn mat_dev(a: &Mat, b: &Mat) -> f64 {
    assert_eq!(a.shape(), b.shape(), "compared matrices differ in shape");
    rel_dev(a.as_slice(), b.as_slice())
}

struct Gen(ChaCha8Rng);

impl Gen {
    fn dim(&mut self) -> usize {
        self.0.gen_range(1..=4)
    }

    fn vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.0.gen_range(-1.0..=1.0)).collect()
    }

    fn mat(&mut self, r: usize, c: usize) -> Mat {
        Mat::from_fn(r, c, |_, _| self.0.gen_range(-1.0..=1.0))
    }

    fn csym(&mut self, m: usize, n: usize, q: usize) -> Mat {
        let raw = self.mat(m, n.pow(q as u32));
        csym_project(&raw, n, q).expect("q within supported range")
    }

    /// Strictly diagonally dominant, hence nonsingular.
    fn nonsingular(&mut self, n: usize) -> Mat {
        &self.mat(n, n) + &Mat::identity(n).scale(2.0 * n as f64)
    }
}

fn family(
    name: &'static str,
    instances: usize,
    tol: f64,
    g: &mut Gen,
    mut one: impl FnMut(&mut Gen) -> f64,
) -> AlgebraCheck {
    let worst = (0..instances).fold(0.0f64, |m, _| m.max(one(g)));
    AlgebraCheck {
        name,
        instances,
        max_rel_dev: worst,
        tol,
        passed: worst <= tol,
    }
}

/// `[∂₁M … ∂ₛM]` of the affine matrix function `M(x) = M₀ + Σ xₖMₖ` by
/// central differences with unit step; exact up to rounding for functions
/// of degree at most two.
fn central_d(eval: impl Fn(&[f64]) -> Mat, x: &[f64]) -> Mat {
    let blocks: Vec<Mat> = (0..x.len())
        .map(|k| {
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[k] += 1.0;
            m[k] -= 1.0;
            (&eval(&p) - &eval(&m)).scale(0.5)
        })
        .collect();
    Mat::hcat(&blocks).expect("blocks share row count")
}

struct Affine {
    base: Mat,
    slopes: Vec<Mat>,
}

impl Affine {
    fn random(g: &mut Gen, r: usize, c: usize, s: usize) -> Self {
        Self {
            base: g.mat(r, c),
            slopes: (0..s).map(|_| g.mat(r, c)).collect(),
        }
    }

    fn at(&self, x: &[f64]) -> Mat {
        x.iter().zip(&self.slopes).fold(self.base.clone(), |acc, (xi, m)| &acc + &m.scale(*xi))
    }

    fn d(&self) -> Mat {
        Mat::hcat(&self.slopes).expect("blocks share row count")
    }
}

/// Runs every algebra family with `instances` random draws each.
pub fn run_algebra_suite(seed: u64, instances: usize, tol: f64) -> Vec<AlgebraCheck> {
    let mut g = Gen(ChaCha8Rng::seed_from_u64(seed));
    let mut out = Vec::new();

    out.push(family("kron_product_rule", instances, tol, &mut g, |g| {
        let (m, n, p, q, r, s) = (g.dim(), g.dim(), g.dim(), g.dim(), g.dim(), g.dim());
        let (a, b, c, d) = (g.mat(m, n), g.mat(p, q), g.mat(n, r), g.mat(q, s));
        mat_dev(&kron(&a, &b).matmul(&kron(&c, &d)), &kron(&a.matmul(&c), &b.matmul(&d)))
    }));

    out.push(family("kron_column_rules", instances, tol, &mut g, |g| {
        let (n, m) = (g.dim(), g.dim());
        let (a, b, c) = (g.vec(n), g.vec(n), g.vec(n));
        let cm = g.mat(m, n);
        let at = Mat::row(&a);
        let bc = Mat::column(&b);
        let ac = Mat::column(&a);
        let r1 = kron(&at, &bc).mul_vec(&c);
        let dot: f64 = a.iter().zip(&c).map(|(x, y)| x * y).sum();
        let e1: Vec<f64> = b.iter().map(|v| dot * v).collect();
        let r2 = kron(&ac, &cm).mul_vec(&b);
        let e2 = kron_vec(&a, &cm.mul_vec(&b));
        let r3 = kron(&cm, &ac).mul_vec(&b);
        let e3 = kron_vec(&cm.mul_vec(&b), &a);
        rel_dev(&r1, &e1).max(rel_dev(&r2, &e2)).max(rel_dev(&r3, &e3))
    }));

    out.push(family("csym_factor_swap", instances, tol, &mut g, |g| {
        let (m, n, p) = (g.dim(), g.dim(), g.dim());
        let mm = g.csym(m, n, 2);
        let a = g.mat(n, p);
        let b = Mat::column(&g.vec(n));
        mat_dev(&mm.matmul(&kron(&a, &b)), &mm.matmul(&kron(&b, &a)))
    }));

    out.push(family("csym_embedded_swap", instances, tol, &mut g, |g| {
        let (m, n) = (g.dim(), g.dim());
        let mm = g.csym(m, n, 2);
        let e = Mat::identity(n);
        let (a, b, c) = (g.vec(n), g.vec(n), g.vec(n));
        let left = kron(&mm, &e);
        let right = kron(&e, &mm);
        let d1 = rel_dev(&left.mul_vec(&kron_vecs(&[&a, &b, &c])), &left.mul_vec(&kron_vecs(&[&b, &a, &c])));
        let d2 = rel_dev(&right.mul_vec(&kron_vecs(&[&a, &b, &c])), &right.mul_vec(&kron_vecs(&[&a, &c, &b])));
        d1.max(d2)
    }));

    out.push(family("symmetric_pair_injective", instances, tol, &mut g, |g| {
        // a ⊗ b + b ⊗ a determines b when a ≠ 0, and the square case
        // a ⊗ b + b ⊗ a = c² holds for c = αa, b = α²a/2
        let n = g.dim();
        let a = g.vec(n);
        let b = g.vec(n);
        let e = Mat::identity(n);
        let ac = Mat::column(&a);
        let op = &kron(&ac, &e) + &kron(&e, &ac);
        let s: Vec<f64> = kron_vec(&a, &b).iter().zip(kron_vec(&b, &a)).map(|(x, y)| x + y).collect();
        let gram = op.transpose().matmul(&op);
        let rec = Lu::factor(&gram)
            .map(|lu| lu.solve_vec(&op.transpose().mul_vec(&s)))
            .unwrap_or_else(|_| vec![f64::INFINITY; n]);
        let alpha = g.0.gen_range(-2.0..=2.0);
        let c: Vec<f64> = a.iter().map(|v| alpha * v).collect();
        let b2: Vec<f64> = a.iter().map(|v| 0.5 * alpha * alpha * v).collect();
        let lhs: Vec<f64> = kron_vec(&a, &b2).iter().zip(kron_vec(&b2, &a)).map(|(x, y)| x + y).collect();
        rel_dev(&rec, &b).max(rel_dev(&lhs, &kron_vec(&c, &c)))
    }));

    out.push(family("star_directional", instances, tol, &mut g, |g| {
        let (m, n) = (g.dim(), g.dim());
        let a = g.mat(m, n);
        let c = g.mat(n, n);
        let b = g.mat(n, n * n);
        let h = g.vec(n);
        let h2 = kron_pow(&h, 2).unwrap();
        let h3 = kron_pow(&h, 3).unwrap();
        let ah = a.mul_vec(&h);
        let r1 = star(&a, &c, n).unwrap().mul_vec(&h2);
        let r2 = star(&a, &b, n).unwrap().mul_vec(&h3);
        rel_dev(&r1, &kron_vec(&ah, &c.mul_vec(&h))).max(rel_dev(&r2, &kron_vec(&ah, &b.mul_vec(&h2))))
    }));

    out.push(family("derivative_product_rules", instances, tol, &mut g, |g| {
        let (s, m, n, q) = (g.dim(), g.dim(), g.dim(), g.dim());
        let p = n;
        let fa = Affine::random(g, m, n, s);
        let fb = Affine::random(g, p, q, s);
        let (r, c) = (g.dim(), g.dim());
        let fc = Affine::random(g, r, c, s);
        let x = g.vec(s);
        let (a, b, c) = (fa.at(&x), fb.at(&x), fc.at(&x));
        let (da, db, dc) = (fa.d(), fb.d(), fc.d());

        let d_ab = central_d(|y| fa.at(y).matmul(&fb.at(y)), &x);
        let rule33 = &a.matmul(&db) + &da.matmul(&kron(&Mat::identity(s), &b));

        let d_ac = central_d(|y| kron(&fa.at(y), &fc.at(y)), &x);
        let rule34 = &star(&a, &dc, s).unwrap() + &kron(&da, &c);
        let qc = c.cols();
        let f = swap_matrix::<f64>(s, n);
        let remark = &kron(&a, &dc).matmul(&kron(&f, &Mat::identity(qc))) + &kron(&da, &c);
        mat_dev(&d_ab, &rule33).max(mat_dev(&d_ac, &rule34)).max(mat_dev(&d_ac, &remark))
    }));

    out.push(family("block_rules", instances, tol, &mut g, |g| {
        let (m, n, p, s) = (g.dim(), g.dim(), g.dim(), g.dim());
        let a = g.mat(m, n);
        let bs: Vec<Mat> = (0..s).map(|_| g.mat(n, p)).collect();
        let r74 = a.matmul(&Mat::hcat(&bs).unwrap());
        let e74 = Mat::hcat(&bs.iter().map(|b| a.matmul(b)).collect::<Vec<_>>()).unwrap();
        let as_: Vec<Mat> = (0..s).map(|_| g.mat(m, n)).collect();
        let b = g.mat(n, p);
        let cat = Mat::hcat(&as_).unwrap();
        let r75 = kron(&cat, &b);
        let e75 = Mat::hcat(&as_.iter().map(|ai| kron(ai, &b)).collect::<Vec<_>>()).unwrap();
        let r76 = cat.matmul(&kron(&Mat::identity(s), &b));
        let e76 = Mat::hcat(&as_.iter().map(|ai| ai.matmul(&b)).collect::<Vec<_>>()).unwrap();
        mat_dev(&r74, &e74).max(mat_dev(&r75, &e75)).max(mat_dev(&r76, &e76))
    }));

    out.push(family("block_kron_identity", instances, tol, &mut g, |g| {
        let (m, n, p, q) = (g.dim(), g.dim(), g.dim(), g.dim());
        let as_: Vec<Mat> = (0..p).map(|_| g.mat(m, n)).collect();
        let b = g.mat(p, q);
        let lhs = Mat::hcat(&as_).unwrap().matmul(&kron(&b, &Mat::identity(n)));
        let rhs = (0..p).fold(Mat::zeros(m, n * q), |acc, k| {
            let row: Vec<Mat> = (0..q).map(|j| as_[k].scale(b[(k, j)])).collect();
            &acc + &Mat::hcat(&row).unwrap()
        });
        mat_dev(&lhs, &rhs)
    }));

    out
}

/// Polarization round trips: recovery of random c-symmetric `M` from
/// `x ↦ Mx^q`, recovery of `M·A^{⊗q}` from `x ↦ M(Ax)^q`, and a planted
/// nonzero tensor never recovered as zero.
pub fn run_polarize_suite(seed: u64, instances: usize, tol: f64) -> Vec<AlgebraCheck> {
    let mut g = Gen(ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9));
    let mut out = Vec::new();
    let draw = |g: &mut Gen| {
        let (m, n) = (g.dim(), g.dim());
        let q = g.0.gen_range(1..=3);
        (m, n, q, g.csym(m, n, q))
    };

    out.push(family("polarize_roundtrip", instances, tol, &mut g, |g| {
        let (_, n, q, m) = draw(g);
        let rec = polarize(|x: &[f64]| m.mul_vec(&kron_pow(x, q).unwrap()), n, q).unwrap();
        mat_dev(&rec, &m)
    }));

    out.push(family("polarize_nonsingular_change", instances, tol, &mut g, |g| {
        let (_, n, q, m) = draw(g);
        let a = g.nonsingular(n);
        let rec = polarize(|x: &[f64]| m.mul_vec(&kron_pow(&a.mul_vec(x), q).unwrap()), n, q).unwrap();
        let expect = m.matmul(&kron_pow_mat(&a, q).unwrap());
        let zero_mismatch = (rec.max_abs() == 0.0) != (m.max_abs() == 0.0);
        if zero_mismatch {
            f64::INFINITY
        } else {
            mat_dev(&rec, &expect)
        }
    }));

    out.push(family("polarize_planted_nonzero", instances, tol, &mut g, |g| {
        let (rows, n, q, _) = draw(g);
        let idx = g.0.gen_range(0..n.pow(q as u32));
        let raw = Mat::from_fn(rows, n.pow(q as u32), |r, c| if r == 0 && c == idx { 1e-3 } else { 0.0 });
        let m = csym_project(&raw, n, q).unwrap();
        let rec = polarize(|x: &[f64]| m.mul_vec(&kron_pow(x, q).unwrap()), n, q).unwrap();
        if rec.max_abs() == 0.0 {
            f64::INFINITY
        } else {
            mat_dev(&rec, &m)
        }
    }));

    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_pass_on_small_runs() {
        for c in run_algebra_suite(7, 40, 1e-12).into_iter().chain(run_polarize_suite(7, 40, 1e-10)) {
            assert!(c.passed, "{} deviated by {:e}", c.name, c.max_rel_dev);
        }
    }

    #[test]
    fn suite_is_deterministic() {
        assert_eq!(run_algebra_suite(3, 10, 1e-12), run_algebra_suite(3, 10, 1e-12));
    }

    #[test]
    fn wrong_rule_is_detected() {
        // swapping the factors of a c-symmetric product is fine, swapping
        // the factors of a generic product is not
        let mut g = Gen(ChaCha8Rng::seed_from_u64(1));
        let a = g.mat(2, 2);
        let b = g.mat(2, 2);
        assert!(mat_dev(&kron(&a, &b), &kron(&b, &a)) > 1e-3);
    }
}

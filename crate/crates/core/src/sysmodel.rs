//! Polynomial right-hand sides `f(t, x) = a(t) + B(t)x + ½C(t)x² + ⅙T(t)x³`
//! with exact derivative tensors, plus the vector Riccati coefficient form
//! `x′ = a(t) + B(t)x + (cᵀ(t)x)x`.

use serde::{Deserialize, Serialize};

use crate::csym::{csym_project, extract_linear_form, linear_form_tensor};
use crate::error::{Error, Result};
use crate::matkron::{kron_pow, Mat};
use crate::scalar::{lit, to_f64, Real};

/// Polynomial in `t`, coefficients in ascending powers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PolyT<T = f64> {
    coeffs: Vec<T>,
}

impl<T: Real> PolyT<T> {
    pub fn new(coeffs: Vec<T>) -> Self {
        Self { coeffs }
    }

    pub fn constant(c: T) -> Self {
        Self { coeffs: vec![c] }
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn eval(&self, t: T) -> T {
        self.coeffs.iter().rev().fold(T::zero(), |acc, &c| acc * t + c)
    }

    pub fn is_zero_within(&self, tol: T) -> bool {
        self.coeffs.iter().all(|c| c.abs() <= tol)
    }

    /// Number of stored coefficients (degree + 1, possibly with trailing zeros).
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeff(&self, k: usize) -> T {
        self.coeffs.get(k).copied().unwrap_or_else(T::zero)
    }

    /// Coefficient-wise comparison, ignoring trailing zeros.
    pub fn approx_eq(&self, other: &Self, tol: T) -> bool {
        let len = self.len().max(other.len());
        (0..len).all(|k| (self.coeff(k) - other.coeff(k)).abs() <= tol)
    }

    fn cast<U: Real>(&self) -> PolyT<U> {
        PolyT::new(self.coeffs.iter().map(|&c| lit(to_f64(c))).collect())
    }
}

/// Matrix whose entries are polynomials in `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyMat<T = f64> {
    rows: usize,
    cols: usize,
    entries: Vec<PolyT<T>>,
}

impl<T: Real> PolyMat<T> {
    pub fn new(rows: usize, cols: usize, entries: Vec<PolyT<T>>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} polynomial entries for a {rows}×{cols} matrix",
                entries.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            entries,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![PolyT::zero(); rows * cols],
        }
    }

    pub fn constant(m: &Mat<T>) -> Self {
        Self {
            rows: m.rows(),
            cols: m.cols(),
            entries: m.as_slice().iter().map(|&v| PolyT::constant(v)).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entry(&self, i: usize, j: usize) -> &PolyT<T> {
        &self.entries[i * self.cols + j]
    }

    pub fn entries(&self) -> &[PolyT<T>] {
        &self.entries
    }

    pub fn eval(&self, t: T) -> Mat<T> {
        Mat::from_fn(self.rows, self.cols, |i, j| self.entry(i, j).eval(t))
    }

    fn degree_len(&self) -> usize {
        self.entries.iter().map(PolyT::len).max().unwrap_or(0)
    }

    /// Coefficient matrix of `t^k`.
    pub fn coeff_mat(&self, k: usize) -> Mat<T> {
        Mat::from_fn(self.rows, self.cols, |i, j| self.entry(i, j).coeff(k))
    }

    /// Rebuilds from per-degree coefficient matrices.
    fn from_coeff_mats(rows: usize, cols: usize, mats: &[Mat<T>]) -> Self {
        let entries = (0..rows * cols)
            .map(|e| PolyT::new(mats.iter().map(|m| m.as_slice()[e]).collect()))
            .collect();
        Self {
            rows,
            cols,
            entries,
        }
    }

    fn is_zero_within(&self, tol: T) -> bool {
        self.entries.iter().all(|p| p.is_zero_within(tol))
    }

    fn csym_projected(&self, n: usize, q: usize) -> Result<Self> {
        let mats = (0..self.degree_len())
            .map(|k| csym_project(&self.coeff_mat(k), n, q))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_coeff_mats(self.rows, self.cols, &mats))
    }

    fn cast<U: Real>(&self) -> PolyMat<U> {
        PolyMat {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(PolyT::cast).collect(),
        }
    }
}

/// Polynomial system in Taylor form; `C` and `T3` are kept c-symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct PolySystem<T = f64> {
    n: usize,
    a: Vec<PolyT<T>>,
    b: PolyMat<T>,
    c: PolyMat<T>,
    t3: PolyMat<T>,
}

impl<T: Real> PolySystem<T> {
    /// Validates shapes and c-symmetrizes `C` and `T3` coefficient-wise.
    pub fn new(
        a: Vec<PolyT<T>>,
        b: PolyMat<T>,
        c: PolyMat<T>,
        t3: PolyMat<T>,
    ) -> Result<Self> {
        let n = a.len();
        if n == 0 {
            return Err(Error::Shape("system dimension must be positive".into()));
        }
        let want = [(&b, n), (&c, n * n), (&t3, n * n * n)];
        for (name, (m, cols)) in ["B", "C", "T3"].iter().zip(want) {
            if m.rows() != n || m.cols() != cols {
                return Err(Error::Shape(format!(
                    "{name} must be {n}×{cols}, found {}×{}",
                    m.rows(),
                    m.cols()
                )));
            }
        }
        let all_finite = a
            .iter()
            .chain(b.entries())
            .chain(c.entries())
            .chain(t3.entries())
            .all(|p| p.coeffs().iter().all(|x| x.is_finite()));
        if !all_finite {
            return Err(Error::NonFinite("system coefficients"));
        }
        let c = c.csym_projected(n, 2)?;
        let t3 = t3.csym_projected(n, 3)?;
        Ok(Self { n, a, b, c, t3 })
    }

    /// Time-independent system from constant coefficient matrices.
    pub fn constant(a: &[T], b: &Mat<T>, c: &Mat<T>, t3: &Mat<T>) -> Result<Self> {
        Self::new(
            a.iter().map(|&v| PolyT::constant(v)).collect(),
            PolyMat::constant(b),
            PolyMat::constant(c),
            PolyMat::constant(t3),
        )
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn a(&self) -> &[PolyT<T>] {
        &self.a
    }

    pub fn b(&self) -> &PolyMat<T> {
        &self.b
    }

    pub fn c(&self) -> &PolyMat<T> {
        &self.c
    }

    pub fn t3(&self) -> &PolyMat<T> {
        &self.t3
    }

    fn check_x(&self, x: &[T]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::Dimension {
                expected: self.n,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `f(t, x)`.
    pub fn eval_f(&self, t: T, x: &[T]) -> Result<Vec<T>> {
        self.check_x(x)?;
        let half: T = lit(0.5);
        let sixth: T = lit(1.0 / 6.0);
        let b = self.b.eval(t).mul_vec(x);
        let c = self.c.eval(t).mul_vec(&kron_pow(x, 2)?);
        let t3 = self.t3.eval(t).mul_vec(&kron_pow(x, 3)?);
        Ok((0..self.n)
            .map(|i| self.a[i].eval(t) + b[i] + half * c[i] + sixth * t3[i])
            .collect())
    }

    /// `Df = B + C(x ⊗ E) + ½T3(x² ⊗ E)`.
    pub fn eval_df(&self, t: T, x: &[T]) -> Result<Mat<T>> {
        self.check_x(x)?;
        let half: T = lit(0.5);
        let mut df = self.b.eval(t);
        df += &self.c.eval(t).contract_leading(x);
        df += &self
            .t3
            .eval(t)
            .contract_leading(x)
            .contract_leading(x)
            .scale(half);
        Ok(df)
    }

    /// `D²f = C + T3(x ⊗ E_{n²})`.
    pub fn eval_d2f(&self, t: T, x: &[T]) -> Result<Mat<T>> {
        self.check_x(x)?;
        let mut d2 = self.c.eval(t);
        d2 += &self.t3.eval(t).contract_leading(x);
        Ok(d2)
    }

    /// `D³f = T3`, independent of `x`.
    pub fn eval_d3f(&self, t: T) -> Mat<T> {
        self.t3.eval(t)
    }

    /// All three derivative tensors in one evaluation of the coefficients.
    pub fn derivatives(&self, t: T, x: &[T]) -> Result<Derivatives<T>> {
        self.check_x(x)?;
        let half: T = lit(0.5);
        let b = self.b.eval(t);
        let c = self.c.eval(t);
        let t3 = self.t3.eval(t);
        let t3x = t3.contract_leading(x);
        let mut df = b;
        df += &c.contract_leading(x);
        df += &t3x.contract_leading(x).scale(half);
        let mut d2f = c;
        d2f += &t3x;
        Ok(Derivatives {
            df,
            d2f,
            d3f: t3,
        })
    }

    pub fn cast<U: Real>(&self) -> PolySystem<U> {
        PolySystem {
            n: self.n,
            a: self.a.iter().map(PolyT::cast).collect(),
            b: self.b.cast(),
            c: self.c.cast(),
            t3: self.t3.cast(),
        }
    }
}

/// `Df`, `D²f`, `D³f` at one point.
#[derive(Debug, Clone)]
pub struct Derivatives<T> {
    pub df: Mat<T>,
    pub d2f: Mat<T>,
    pub d3f: Mat<T>,
}

/// Coefficients of `x′ = a(t) + B(t)x + (cᵀ(t)x)x`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiCoeffs<T = f64> {
    n: usize,
    a: Vec<PolyT<T>>,
    b: PolyMat<T>,
    c: Vec<PolyT<T>>,
}

impl<T: Real> RiccatiCoeffs<T> {
    pub fn new(a: Vec<PolyT<T>>, b: PolyMat<T>, c: Vec<PolyT<T>>) -> Result<Self> {
        let n = a.len();
        if n == 0 {
            return Err(Error::Shape("Riccati dimension must be positive".into()));
        }
        if b.rows() != n || b.cols() != n {
            return Err(Error::Shape(format!(
                "B must be {n}×{n}, found {}×{}",
                b.rows(),
                b.cols()
            )));
        }
        if c.len() != n {
            return Err(Error::Shape(format!("c must have {n} entries, found {}", c.len())));
        }
        let all_finite = a
            .iter()
            .chain(b.entries())
            .chain(&c)
            .all(|p| p.coeffs().iter().all(|x| x.is_finite()));
        if !all_finite {
            return Err(Error::NonFinite("Riccati coefficients"));
        }
        Ok(Self { n, a, b, c })
    }

    pub fn constant(a: &[T], b: &Mat<T>, c: &[T]) -> Result<Self> {
        Self::new(
            a.iter().map(|&v| PolyT::constant(v)).collect(),
            PolyMat::constant(b),
            c.iter().map(|&v| PolyT::constant(v)).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn a(&self) -> &[PolyT<T>] {
        &self.a
    }

    pub fn b(&self) -> &PolyMat<T> {
        &self.b
    }

    pub fn c(&self) -> &[PolyT<T>] {
        &self.c
    }

    pub fn a_at(&self, t: T) -> Vec<T> {
        self.a.iter().map(|p| p.eval(t)).collect()
    }

    pub fn b_at(&self, t: T) -> Mat<T> {
        self.b.eval(t)
    }

    pub fn c_at(&self, t: T) -> Vec<T> {
        self.c.iter().map(|p| p.eval(t)).collect()
    }

    /// Coefficient-wise comparison.
    pub fn approx_eq(&self, other: &Self, tol: T) -> bool {
        self.n == other.n
            && self.a.iter().zip(&other.a).all(|(p, q)| p.approx_eq(q, tol))
            && self
                .b
                .entries()
                .iter()
                .zip(other.b.entries())
                .all(|(p, q)| p.approx_eq(q, tol))
            && self.c.iter().zip(&other.c).all(|(p, q)| p.approx_eq(q, tol))
    }

    pub fn cast<U: Real>(&self) -> RiccatiCoeffs<U> {
        RiccatiCoeffs {
            n: self.n,
            a: self.a.iter().map(PolyT::cast).collect(),
            b: self.b.cast(),
            c: self.c.iter().map(PolyT::cast).collect(),
        }
    }
}

/// Embeds a vector Riccati equation as a polynomial system with
/// `C(t) = cᵀ(t) ⊗ E + E ⊗ cᵀ(t)` and `T3 = 0`.
pub fn riccati_to_system<T: Real>(rc: &RiccatiCoeffs<T>) -> PolySystem<T> {
    let n = rc.n;
    let len = rc.c.iter().map(PolyT::len).max().unwrap_or(0);
    let mats: Vec<Mat<T>> = (0..len)
        .map(|k| {
            let ck: Vec<T> = rc.c.iter().map(|p| p.coeff(k)).collect();
            linear_form_tensor(&ck)
        })
        .collect();
    let c = PolyMat::from_coeff_mats(n, n * n, &mats);
    PolySystem {
        n,
        a: rc.a.clone(),
        b: rc.b.clone(),
        c,
        t3: PolyMat::zeros(n, n * n * n),
    }
}

/// Recovers Riccati coefficients when `T3 ≡ 0` and every coefficient of
/// `½C(t)` has the form `½(cᵀ ⊗ E + E ⊗ cᵀ)`.
///
/// Because `C` is polynomial in `t`, testing each coefficient matrix covers
/// every `t` at once.
pub fn system_to_riccati<T: Real>(sys: &PolySystem<T>, tol: T) -> Option<RiccatiCoeffs<T>> {
    if !sys.t3.is_zero_within(tol) {
        return None;
    }
    let n = sys.n;
    let half: T = lit(0.5);
    let len = sys.c.degree_len();
    let mut per_degree = Vec::with_capacity(len);
    for k in 0..len {
        per_degree.push(extract_linear_form(&sys.c.coeff_mat(k).scale(half), tol)?);
    }
    let c = (0..n)
        .map(|i| PolyT::new(per_degree.iter().map(|ck| ck[i]).collect()))
        .collect();
    RiccatiCoeffs::new(sys.a.clone(), sys.b.clone(), c).ok()
}

pub const SYSTEM_FORMAT: &str = "varjet-sys/1";
pub const RICCATI_FORMAT: &str = "varjet-ric/1";

/// A polynomial written either as a coefficient list or a bare constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolyDoc {
    Constant(f64),
    Coeffs(Vec<f64>),
}

impl PolyDoc {
    fn to_poly<T: Real>(&self) -> PolyT<T> {
        match self {
            PolyDoc::Constant(c) => PolyT::constant(lit(*c)),
            PolyDoc::Coeffs(v) => PolyT::new(v.iter().map(|&c| lit(c)).collect()),
        }
    }

    fn from_poly<T: Real>(p: &PolyT<T>) -> Self {
        PolyDoc::Coeffs(p.coeffs().iter().map(|&c| to_f64(c)).collect())
    }
}

/// On-disk form of a [`PolySystem`] (`"format": "varjet-sys/1"`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDoc {
    pub format: String,
    pub n: usize,
    pub a: Vec<PolyDoc>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<PolyDoc>>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<Vec<PolyDoc>>>,
    #[serde(rename = "T3", default, skip_serializing_if = "Option::is_none")]
    pub t3: Option<Vec<Vec<PolyDoc>>>,
}

/// On-disk form of [`RiccatiCoeffs`] (`"format": "varjet-ric/1"`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiccatiDoc {
    pub format: String,
    pub n: usize,
    pub a: Vec<PolyDoc>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<PolyDoc>>,
    pub c: Vec<PolyDoc>,
}

/// 1-based line of the first `"field":` key in `text`, for error messages.
fn line_of_field(text: &str, field: &str) -> Option<usize> {
    let key = format!("\"{field}\"");
    let mut offset = 0;
    while let Some(pos) = text[offset..].find(&key) {
        let at = offset + pos;
        let rest = text[at + key.len()..].trim_start();
        if rest.starts_with(':') {
            return Some(text[..at].matches('\n').count() + 1);
        }
        offset = at + key.len();
    }
    None
}

struct FieldCtx<'a> {
    text: &'a str,
}

impl FieldCtx<'_> {
    fn err(&self, field: &str, msg: String) -> Error {
        match line_of_field(self.text, field) {
            Some(l) => Error::Parse(format!("field `{field}` (line {l}): {msg}")),
            None => Error::Parse(format!("field `{field}`: {msg}")),
        }
    }

    fn vector<T: Real>(&self, field: &str, v: &[PolyDoc], n: usize) -> Result<Vec<PolyT<T>>> {
        if v.len() != n {
            return Err(self.err(field, format!("expected {n} entries, found {}", v.len())));
        }
        Ok(v.iter().map(PolyDoc::to_poly).collect())
    }

    fn matrix<T: Real>(
        &self,
        field: &str,
        rows: &[Vec<PolyDoc>],
        n: usize,
        cols: usize,
    ) -> Result<PolyMat<T>> {
        if rows.len() != n {
            return Err(self.err(field, format!("expected {n} rows, found {}", rows.len())));
        }
        let mut entries = Vec::with_capacity(n * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(self.err(
                    field,
                    format!("row {} has {} entries, expected {cols}", i + 1, row.len()),
                ));
            }
            entries.extend(row.iter().map(PolyDoc::to_poly));
        }
        PolyMat::new(n, cols, entries)
    }
}

fn check_format(ctx: &FieldCtx<'_>, found: &str, expected: &str) -> Result<()> {
    if found != expected {
        return Err(ctx.err(
            "format",
            format!("expected \"{expected}\", found \"{found}\""),
        ));
    }
    Ok(())
}

fn json_error(e: serde_json::Error) -> Error {
    Error::Parse(e.to_string())
}

impl<T: Real> PolySystem<T> {
    /// Parses a `varjet-sys/1` document.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SystemDoc = serde_json::from_str(text).map_err(json_error)?;
        let ctx = FieldCtx { text };
        check_format(&ctx, &doc.format, SYSTEM_FORMAT)?;
        let n = doc.n;
        if n == 0 || n > 8 {
            return Err(ctx.err("n", format!("dimension {n} outside 1..=8")));
        }
        let a = ctx.vector("a", &doc.a, n)?;
        let b = ctx.matrix("B", &doc.b, n, n)?;
        let c = match &doc.c {
            Some(c) => ctx.matrix("C", c, n, n * n)?,
            None => PolyMat::zeros(n, n * n),
        };
        let t3 = match &doc.t3 {
            Some(t3) => ctx.matrix("T3", t3, n, n * n * n)?,
            None => PolyMat::zeros(n, n * n * n),
        };
        Self::new(a, b, c, t3).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_doc(&self) -> SystemDoc {
        let rows = |m: &PolyMat<T>| -> Vec<Vec<PolyDoc>> {
            (0..m.rows())
                .map(|i| (0..m.cols()).map(|j| PolyDoc::from_poly(m.entry(i, j))).collect())
                .collect()
        };
        SystemDoc {
            format: SYSTEM_FORMAT.to_string(),
            n: self.n,
            a: self.a.iter().map(PolyDoc::from_poly).collect(),
            b: rows(&self.b),
            c: Some(rows(&self.c)),
            t3: Some(rows(&self.t3)),
        }
    }
}

impl<T: Real> RiccatiCoeffs<T> {
    /// Parses a `varjet-ric/1` document.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: RiccatiDoc = serde_json::from_str(text).map_err(json_error)?;
        let ctx = FieldCtx { text };
        check_format(&ctx, &doc.format, RICCATI_FORMAT)?;
        let n = doc.n;
        if n == 0 || n > 8 {
            return Err(ctx.err("n", format!("dimension {n} outside 1..=8")));
        }
        let a = ctx.vector("a", &doc.a, n)?;
        let b = ctx.matrix("B", &doc.b, n, n)?;
        let c = ctx.vector("c", &doc.c, n)?;
        Self::new(a, b, c).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_doc(&self) -> RiccatiDoc {
        RiccatiDoc {
            format: RICCATI_FORMAT.to_string(),
            n: self.n,
            a: self.a.iter().map(PolyDoc::from_poly).collect(),
            b: (0..self.n)
                .map(|i| (0..self.n).map(|j| PolyDoc::from_poly(self.b.entry(i, j))).collect())
                .collect(),
            c: self.c.iter().map(PolyDoc::from_poly).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csym::is_csymmetric;

    fn scalar(c: f64, t3: f64) -> PolySystem {
        PolySystem::constant(
            &[0.0],
            &Mat::zeros(1, 1),
            &Mat::from_vec(1, 1, vec![c]).unwrap(),
            &Mat::from_vec(1, 1, vec![t3]).unwrap(),
        )
        .unwrap()
    }

    fn rotation() -> PolySystem {
        let b = Mat::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap();
        PolySystem::constant(&[0.0, 0.0], &b, &Mat::zeros(2, 4), &Mat::zeros(2, 8)).unwrap()
    }

    #[test]
    fn poly_horner() {
        let p = PolyT::new(vec![1.0, -2.0, 3.0]);
        assert_eq!(p.eval(2.0), 1.0 - 4.0 + 12.0);
        assert_eq!(PolyT::<f64>::zero().eval(5.0), 0.0);
        assert!(p.approx_eq(&PolyT::new(vec![1.0, -2.0, 3.0, 0.0]), 0.0));
    }

    #[test]
    fn eval_examples() {
        assert_eq!(scalar(2.0, 0.0).eval_f(0.3, &[3.0]).unwrap(), vec![9.0]);
        assert_eq!(rotation().eval_f(0.0, &[1.0, 0.0]).unwrap(), vec![0.0, -1.0]);
        let rc = RiccatiCoeffs::constant(&[1.0, 0.0], &Mat::zeros(2, 2), &[1.0, 1.0]).unwrap();
        let sys = riccati_to_system(&rc);
        assert_eq!(sys.eval_f(0.0, &[1.0, 2.0]).unwrap(), vec![4.0, 6.0]);
    }

    #[test]
    fn eval_wrong_dimension() {
        assert!(matches!(
            rotation().eval_f(0.0, &[1.0]),
            Err(Error::Dimension { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn scalar_derivatives() {
        let sq = scalar(2.0, 0.0);
        assert_eq!(sq.eval_df(0.0, &[1.5]).unwrap().into_vec(), vec![3.0]);
        assert_eq!(sq.eval_d2f(0.0, &[1.5]).unwrap().into_vec(), vec![2.0]);
        assert_eq!(sq.eval_d3f(0.0).into_vec(), vec![0.0]);
        let cube = scalar(0.0, 6.0);
        assert_eq!(cube.eval_f(0.0, &[5.0]).unwrap(), vec![125.0]);
        assert_eq!(cube.eval_d2f(0.0, &[5.0]).unwrap().into_vec(), vec![30.0]);
        assert_eq!(cube.eval_d3f(0.0).into_vec(), vec![6.0]);
    }

    #[test]
    fn construction_symmetrizes() {
        let c = Mat::from_rows(&[vec![0.0, 2.0, 0.0, 0.0], vec![0.0; 4]]).unwrap();
        let sys =
            PolySystem::constant(&[0.0, 0.0], &Mat::zeros(2, 2), &c, &Mat::zeros(2, 8)).unwrap();
        let cc = sys.c().eval(0.0);
        assert_eq!(cc.row_slice(0), &[0.0, 1.0, 1.0, 0.0]);
        assert!(is_csymmetric(&cc, 2, 2, 0.0).unwrap().0);
    }

    #[test]
    fn shape_validation() {
        let r = PolySystem::constant(&[0.0, 0.0], &Mat::zeros(2, 2), &Mat::zeros(2, 3), &Mat::zeros(2, 8));
        assert!(matches!(r, Err(Error::Shape(_))));
    }

    #[test]
    fn scalar_riccati_embedding() {
        let rc = RiccatiCoeffs::new(
            vec![PolyT::new(vec![0.5, 1.0])],
            PolyMat::constant(&Mat::from_vec(1, 1, vec![-1.0]).unwrap()),
            vec![PolyT::constant(1.0)],
        )
        .unwrap();
        let sys = riccati_to_system(&rc);
        assert_eq!(sys.c().eval(0.0).into_vec(), vec![2.0]);
        let t: f64 = 0.7;
        let x: f64 = 1.3;
        let f = sys.eval_f(t, &[x]).unwrap()[0];
        assert!((f - (0.5 + t - x + x * x)).abs() < 1e-14);
    }

    #[test]
    fn riccati_embedding_matches_closed_form() {
        let b = Mat::from_rows(&[vec![0.3, -1.0], vec![2.0, 0.1]]).unwrap();
        let rc = RiccatiCoeffs::constant(&[0.2, -0.4], &b, &[1.0, 0.0]).unwrap();
        let sys = riccati_to_system(&rc);
        for k in 0..10 {
            let x = [(k as f64).sin(), (k as f64 * 1.7).cos()];
            let bx = b.mul_vec(&x);
            let expect = [0.2 + bx[0] + x[0] * x[0], -0.4 + bx[1] + x[0] * x[1]];
            let got = sys.eval_f(0.1 * k as f64, &x).unwrap();
            assert!((got[0] - expect[0]).abs() < 1e-14 && (got[1] - expect[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_c_gives_linear_system() {
        let rc = RiccatiCoeffs::constant(&[1.0, 2.0], &Mat::identity(2), &[0.0, 0.0]).unwrap();
        let sys = riccati_to_system(&rc);
        assert_eq!(sys.c().eval(3.0).max_abs(), 0.0);
    }

    #[test]
    fn riccati_round_trip() {
        let rc = RiccatiCoeffs::new(
            vec![PolyT::new(vec![1.0, 0.5]), PolyT::constant(0.0)],
            PolyMat::constant(&Mat::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap()),
            vec![PolyT::new(vec![1.0, -0.25]), PolyT::new(vec![-1.0, 0.0, 2.0])],
        )
        .unwrap();
        let back = system_to_riccati(&riccati_to_system(&rc), 1e-12).unwrap();
        assert!(back.approx_eq(&rc, 1e-14));
    }

    #[test]
    fn structural_negatives() {
        let c = Mat::from_rows(&[vec![2.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, 0.0, 2.0]]).unwrap();
        let quad =
            PolySystem::constant(&[0.0, 0.0], &Mat::zeros(2, 2), &c, &Mat::zeros(2, 8)).unwrap();
        assert!(system_to_riccati(&quad, 1e-9).is_none());
        assert!(system_to_riccati(&scalar(0.0, 6.0), 1e-9).is_none());
        assert!(system_to_riccati(&scalar(2.0, 0.0), 1e-9).is_some());
    }

    #[test]
    fn json_round_trip_and_errors() {
        let text = r#"{
  "format": "varjet-sys/1",
  "n": 1,
  "a": [0],
  "B": [[[0, 1]]],
  "C": [[2]]
}"#;
        let sys = PolySystem::<f64>::from_json(text).unwrap();
        assert_eq!(sys.eval_f(2.0, &[3.0]).unwrap(), vec![2.0 * 3.0 + 9.0]);
        let again = serde_json::to_string(&sys.to_doc()).unwrap();
        assert_eq!(PolySystem::<f64>::from_json(&again).unwrap(), sys);

        let bad = "{\n  \"format\": \"varjet-sys/1\",\n  \"n\": 2,\n  \"a\": [0],\n  \"B\": [[0,0],[0,0]]\n}";
        let msg = PolySystem::<f64>::from_json(bad).unwrap_err().to_string();
        assert!(msg.contains("`a`") && msg.contains("line 4"), "{msg}");

        let tag = r#"{"format": "varjet-ric/1", "n": 1, "a": [0], "B": [[0]]}"#;
        let msg = PolySystem::<f64>::from_json(tag).unwrap_err().to_string();
        assert!(msg.contains("format"), "{msg}");

        let missing = "{\n\"format\": \"varjet-sys/1\",\n\"a\": [0]\n}";
        let msg = PolySystem::<f64>::from_json(missing).unwrap_err().to_string();
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn riccati_json() {
        let text = r#"{"format": "varjet-ric/1", "n": 2, "a": [1, 0],
            "B": [[0, 1], [-1, 0]], "c": [1, -1]}"#;
        let rc = RiccatiCoeffs::<f64>::from_json(text).unwrap();
        assert_eq!(rc.c_at(0.0), vec![1.0, -1.0]);
        let again = serde_json::to_string(&rc.to_doc()).unwrap();
        assert_eq!(RiccatiCoeffs::<f64>::from_json(&again).unwrap(), rc);
    }
}

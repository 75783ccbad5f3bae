//! Both sides of the integral identities satisfied by the flow jets.
//!
//! The third-order vector identity reads, with `u_k = d^kφ`,
//!
//! ```text
//! u3⊗u1 + u1⊗u3 − 3 u2⊗u2 = (Dφ⊗Dφ)(I1 + 3 I2)
//! ```
//!
//! where `I1`, `I2` are the accumulators of [`DirJet3`]. The second-order
//! identity is `D²φ = Dφ ∫ Ψ D²f (Dφ⊗Dφ) ds` with `Ψ = (Dφ)⁻¹`.

use crate::error::{Error, Result};
use crate::matkron::{apply_kron_pair, kron, kron_vec, Mat};
use crate::riccati::FracLin;
use crate::scalar::{dot, lit, norm_inf, Real};
use crate::sysmodel::PolySystem;
use crate::varflow::{flow_inverse, propagate, DirJet3, IntegratorConfig, Jet3, Trajectory};

/// Per-sample sides of the third-order identity.
#[derive(Debug, Clone, PartialEq)]
pub struct AllwrightReport<T = f64> {
    pub t: Vec<T>,
    pub lhs: Vec<Vec<T>>,
    pub rhs: Vec<Vec<T>>,
    /// `‖lhs − rhs‖∞`
    pub residual_norm: Vec<T>,
    /// `‖lhs‖∞ + ‖rhs‖∞`
    pub scale: Vec<T>,
    /// `‖I2‖∞`, zero whenever `n = 1`.
    pub i2_norm: Vec<T>,
}

impl<T: Real> AllwrightReport<T> {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// `max residual / (1 + scale)` over the samples.
    pub fn max_normalized(&self) -> T {
        self.residual_norm
            .iter()
            .zip(&self.scale)
            .fold(T::zero(), |m, (r, s)| m.max(*r / (T::one() + *s)))
    }

    pub fn max_residual(&self) -> T {
        self.residual_norm.iter().fold(T::zero(), |m, r| m.max(*r))
    }

    pub fn max_scale(&self) -> T {
        self.scale.iter().fold(T::zero(), |m, s| m.max(*s))
    }

    pub fn max_i2(&self) -> T {
        self.i2_norm.iter().fold(T::zero(), |m, s| m.max(*s))
    }
}

/// `u3⊗u1 + u1⊗u3 − 3 u2⊗u2`.
pub fn allwright_lhs<T: Real>(u1: &[T], u2: &[T], u3: &[T]) -> Vec<T> {
    let three: T = lit(3.0);
    kron_vec(u3, u1)
        .into_iter()
        .zip(kron_vec(u1, u3))
        .zip(kron_vec(u2, u2))
        .map(|((a, b), c)| a + b - three * c)
        .collect()
}

/// `‖u3⊗u1‖∞ + ‖u1⊗u3‖∞ + 3‖u2⊗u2‖∞`, the magnitude of the terms of
/// [`allwright_lhs`] before cancellation.
pub fn allwright_term_scale<T: Real>(u1: &[T], u2: &[T], u3: &[T]) -> T {
    let a = norm_inf(u3) * norm_inf(u1);
    let b = norm_inf(u2) * norm_inf(u2);
    a + a + lit::<T>(3.0) * b
}

pub fn allwright_sides<T: Real>(traj: &Trajectory<DirJet3<T>, T>) -> AllwrightReport<T> {
    let three: T = lit(3.0);
    let mut rep = AllwrightReport {
        t: Vec::with_capacity(traj.len()),
        lhs: Vec::with_capacity(traj.len()),
        rhs: Vec::with_capacity(traj.len()),
        residual_norm: Vec::with_capacity(traj.len()),
        scale: Vec::with_capacity(traj.len()),
        i2_norm: Vec::with_capacity(traj.len()),
    };
    for s in &traj.samples {
        let lhs = allwright_lhs(&s.u1, &s.u2, &s.u3);
        let acc: Vec<T> = s.i1.iter().zip(&s.i2).map(|(a, b)| *a + three * *b).collect();
        let rhs = apply_kron_pair(&s.dphi, &s.dphi, &acc);
        let res = lhs.iter().zip(&rhs).fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()));
        rep.t.push(s.t);
        rep.residual_norm.push(res);
        rep.scale.push(norm_inf(&lhs) + norm_inf(&rhs));
        rep.i2_norm.push(norm_inf(&s.i2));
        rep.lhs.push(lhs);
        rep.rhs.push(rhs);
    }
    rep
}

/// Per-sample relative residual of the second-order identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Eq8Report<T = f64> {
    pub t: Vec<T>,
    /// `‖D²φ − Dφ·Acc‖∞ / (1 + ‖D²φ‖∞)`
    pub residual: Vec<T>,
    /// `‖D²φ‖∞`
    pub scale: Vec<T>,
}

impl<T: Real> Eq8Report<T> {
    pub fn max(&self) -> T {
        self.residual.iter().fold(T::zero(), |m, r| m.max(*r))
    }
}

/// Re-integrates `(φ, Dφ, Acc)` with `Acc′ = Ψ D²f (Dφ⊗Dφ)` on the grid of
/// `traj` and compares `Dφ·Acc` with the variational `D²φ` of each sample.
pub fn eq8_check<T: Real>(traj: &Trajectory<Jet3<T>, T>, sys: &PolySystem<T>) -> Result<Eq8Report<T>> {
    let n = sys.dim();
    let n2 = n * n;
    let Some(first) = traj.samples.first() else {
        return Ok(Eq8Report {
            t: vec![],
            residual: vec![],
            scale: vec![],
        });
    };
    if first.phi.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: first.phi.len(),
        });
    }
    let tau = first.t;
    let t_end = traj.last().t;
    let steps = traj.len() - 1;
    let step = if steps == 0 {
        T::one()
    } else {
        (t_end - tau).abs() / lit(steps as f64)
    };
    let cfg = IntegratorConfig {
        step,
        max_norm: T::max_value(),
        richardson: false,
    };
    let mut y0 = vec![T::zero(); n + n2 + n * n2];
    y0[..n].copy_from_slice(&first.phi);
    for i in 0..n {
        y0[n + i * n + i] = T::one();
    }
    let prop = propagate(
        |t, y, out| {
            let phi = &y[..n];
            let dphi = Mat::from_fn(n, n, |i, j| y[n + i * n + j]);
            let der = sys.derivatives(t, phi)?;
            let psi = flow_inverse(&dphi, t)?;
            let integrand = psi.matmul(&der.d2f).matmul(&kron(&dphi, &dphi));
            out[..n].copy_from_slice(&sys.eval_f(t, phi)?);
            out[n..n + n2].copy_from_slice(der.df.matmul(&dphi).as_slice());
            out[n + n2..].copy_from_slice(integrand.as_slice());
            Ok(())
        },
        y0,
        tau,
        t_end,
        &cfg,
        n,
    )?;
    if prop.states.len() != traj.len() {
        return Err(Error::Shape(format!(
            "trajectory grid has {} samples, re-integration produced {}",
            traj.len(),
            prop.states.len()
        )));
    }
    let mut rep = Eq8Report {
        t: Vec::with_capacity(traj.len()),
        residual: Vec::with_capacity(traj.len()),
        scale: Vec::with_capacity(traj.len()),
    };
    for (s, y) in traj.samples.iter().zip(&prop.states) {
        let dphi = Mat::from_fn(n, n, |i, j| y[n + i * n + j]);
        let acc = Mat::from_fn(n, n2, |i, j| y[n + n2 + i * n2 + j]);
        let predicted = dphi.matmul(&acc);
        let scale = s.d2phi.norm_inf();
        let res = (&s.d2phi - &predicted).norm_inf() / (T::one() + scale);
        rep.t.push(s.t);
        rep.residual.push(res);
        rep.scale.push(scale);
    }
    Ok(rep)
}

/// Scalar quantities at one time for an `n = 1` system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarFormulas<T = f64> {
    pub t: T,
    pub phi: T,
    /// `φ′ = ∂φ/∂ξ` from the variational equations.
    pub dphi: T,
    pub d2phi: T,
    pub d3phi: T,
    /// `exp ∫ f′ ds`
    pub phi1: T,
    /// `phi1 · ∫ f″ exp(∫ f′) ds`
    pub phi2: T,
    /// `φ‴/φ′ − (3/2)(φ″/φ′)²`
    pub schwarzian_lhs: T,
    /// `∫ f‴ exp(2∫ f′) ds`
    pub schwarzian_rhs: T,
    /// `2φ′φ‴ − 3(φ″)²`
    pub eq4_lhs: T,
    /// `2(φ′)² ∫ f‴ (φ′)² ds`
    pub eq4_rhs: T,
}

impl<T: Real> ScalarFormulas<T> {
    /// `2(φ′)²·{φ, ξ}`, algebraically equal to `eq4_lhs`.
    pub fn scaled_schwarzian(&self) -> T {
        lit::<T>(2.0) * self.dphi * self.dphi * self.schwarzian_lhs
    }

    /// `2|φ′φ‴| + 3(φ″)²`, the size of the terms cancelling in `eq4_lhs`.
    pub fn eq4_scale(&self) -> T {
        lit::<T>(2.0) * (self.dphi * self.d3phi).abs() + lit::<T>(3.0) * self.d2phi * self.d2phi
    }
}

/// Integrates `(φ, φ′, φ″, φ‴, L, Q2, Q3)` to `t`, where `L = ∫f′`,
/// `Q2 = ∫ f″e^L` and `Q3 = ∫ f‴e^{2L}`.
pub fn scalar_formulas<T: Real>(
    sys: &PolySystem<T>,
    tau: T,
    xi: T,
    t: T,
    cfg: &IntegratorConfig<T>,
) -> Result<ScalarFormulas<T>> {
    if sys.dim() != 1 {
        return Err(Error::Dimension {
            expected: 1,
            got: sys.dim(),
        });
    }
    if !xi.is_finite() {
        return Err(Error::NonFinite("initial data"));
    }
    let three: T = lit(3.0);
    let y0 = vec![xi, T::one(), T::zero(), T::zero(), T::zero(), T::zero(), T::zero()];
    let prop = propagate(
        |s, y, out| {
            let der = sys.derivatives(s, &y[..1])?;
            let (f1, f2, f3) = (der.df[(0, 0)], der.d2f[(0, 0)], der.d3f[(0, 0)]);
            let (p1, p2, p3) = (y[1], y[2], y[3]);
            let el = y[4].exp();
            out[0] = sys.eval_f(s, &y[..1])?[0];
            out[1] = f1 * p1;
            out[2] = f1 * p2 + f2 * p1 * p1;
            out[3] = f1 * p3 + three * f2 * p1 * p2 + f3 * p1 * p1 * p1;
            out[4] = f1;
            out[5] = f2 * el;
            out[6] = f3 * el * el;
            Ok(())
        },
        y0,
        tau,
        t,
        cfg,
        1,
    )?;
    let y = prop.states.last().unwrap();
    let (dphi, d2phi, d3phi) = (y[1], y[2], y[3]);
    let phi1 = y[4].exp();
    let two: T = lit(2.0);
    let ratio2 = d2phi / dphi;
    Ok(ScalarFormulas {
        t,
        phi: y[0],
        dphi,
        d2phi,
        d3phi,
        phi1,
        phi2: phi1 * y[5],
        schwarzian_lhs: d3phi / dphi - lit::<T>(1.5) * ratio2 * ratio2,
        schwarzian_rhs: y[6],
        eq4_lhs: two * dphi * d3phi - three * d2phi * d2phi,
        eq4_rhs: two * dphi * dphi * y[6],
    })
}

/// Denominators at or below this magnitude are treated as a pole.
pub const POLE_TOL: f64 = 1e-12;

/// `(dg, d²g, d³g)` of a fractional-linear map at `x` along `h`.
pub fn fraclin_differentials<T: Real>(g: &FracLin<T>, x: &[T], h: &[T]) -> Result<[Vec<T>; 3]> {
    let n = g.dim();
    for v in [x, h] {
        if v.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: v.len(),
            });
        }
    }
    let den = g.denominator(x);
    if to_f64_abs(den) <= POLE_TOL {
        return Err(Error::Pole {
            denominator: to_f64_abs(den),
        });
    }
    let value = g.eval(x)?;
    let gh = dot(&g.gamma, h);
    let ah = g.a.mul_vec(h);
    let dg: Vec<T> = ah.iter().zip(&value).map(|(a, v)| (*a - *v * gh) / den).collect();
    let s = gh / den;
    let c2 = lit::<T>(-2.0) * s;
    let c3 = lit::<T>(6.0) * s * s;
    let d2g = dg.iter().map(|v| c2 * *v).collect();
    let d3g = dg.iter().map(|v| c3 * *v).collect();
    Ok([dg, d2g, d3g])
}

fn to_f64_abs<T: Real>(v: T) -> f64 {
    crate::scalar::to_f64(v.abs())
}

/// `d1⊗d3 − (3/2) d2⊗d2`.
pub fn differential_residual<T: Real>(d1: &[T], d2: &[T], d3: &[T]) -> Vec<T> {
    let c: T = lit(1.5);
    kron_vec(d1, d3)
        .into_iter()
        .zip(kron_vec(d2, d2))
        .map(|(a, b)| a - c * b)
        .collect()
}

/// `‖d1⊗d3‖∞ + (3/2)‖d2⊗d2‖∞`
pub fn differential_scale<T: Real>(d1: &[T], d2: &[T], d3: &[T]) -> T {
    norm_inf(d1) * norm_inf(d3) + lit::<T>(1.5) * norm_inf(d2) * norm_inf(d2)
}

/// `[Dg⊗D³g − (3/2)(D²g)^{⊗2}]·x⁴`, which vanishes for fractional-linear `g`.
pub fn remark2_residual<T: Real>(g: &FracLin<T>, x: &[T]) -> Result<Vec<T>> {
    let [d1, d2, d3] = fraclin_differentials(g, x, x)?;
    Ok(differential_residual(&d1, &d2, &d3))
}

/// [`remark2_residual`] as `‖r‖∞ / (1 + scale)`.
pub fn remark2_normalized<T: Real>(g: &FracLin<T>, x: &[T]) -> Result<T> {
    let [d1, d2, d3] = fraclin_differentials(g, x, x)?;
    let r = differential_residual(&d1, &d2, &d3);
    Ok(norm_inf(&r) / (T::one() + differential_scale(&d1, &d2, &d3)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::varflow::{integrate_directional, integrate_jets};

    fn sys1(b: f64, c: f64, t3: f64) -> PolySystem {
        PolySystem::constant(
            &[0.0],
            &Mat::from_vec(1, 1, vec![b]).unwrap(),
            &Mat::from_vec(1, 1, vec![c]).unwrap(),
            &Mat::from_vec(1, 1, vec![t3]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn linear_sides_vanish() {
        let b = Mat::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap();
        let sys = PolySystem::constant(&[0.0, 0.0], &b, &Mat::zeros(2, 4), &Mat::zeros(2, 8)).unwrap();
        let cfg = IntegratorConfig::with_step(1e-2);
        let traj = integrate_directional(&sys, 0.0, &[1.0, 0.5], &[0.3, 1.0], 1.0, &cfg).unwrap();
        let rep = allwright_sides(&traj);
        assert_eq!(rep.max_scale(), 0.0);
        let jets = integrate_jets(&sys, 0.0, &[1.0, 0.5], 1.0, &cfg).unwrap();
        assert_eq!(eq8_check(&jets, &sys).unwrap().max(), 0.0);
    }

    #[test]
    fn scalar_square_second_order_identity() {
        let sys = sys1(0.0, 2.0, 0.0);
        let jets = integrate_jets(&sys, 0.0, &[1.0], 0.5, &IntegratorConfig::default()).unwrap();
        let rep = eq8_check(&jets, &sys).unwrap();
        assert!(rep.max() < 1e-7, "{}", rep.max());
        assert!((jets.last().d2phi[(0, 0)] - 8.0).abs() < 1e-6);
    }

    #[test]
    fn scalar_i2_vanishes() {
        let sys = sys1(0.0, 0.0, 6.0);
        let traj = integrate_directional(&sys, 0.0, &[1.0], &[1.0], 0.3, &IntegratorConfig::default()).unwrap();
        let rep = allwright_sides(&traj);
        assert!(rep.max_i2() < 1e-14 * rep.max_scale());
        assert!(rep.max_normalized() < 1e-9);
        assert!(rep.max_scale() > 1e-2);
    }

    #[test]
    fn scalar_formulas_square_closed_form() {
        let sys = sys1(0.0, 2.0, 0.0);
        let s = scalar_formulas(&sys, 0.0, 1.0, 0.5, &IntegratorConfig::default()).unwrap();
        assert!((s.phi1 - 4.0).abs() < 1e-9);
        assert!((s.phi2 - 8.0).abs() < 1e-8);
        assert!(s.schwarzian_lhs.abs() < 1e-9);
        assert_eq!(s.schwarzian_rhs, 0.0);
    }

    #[test]
    fn scalar_formulas_linear_and_cubic() {
        let s = scalar_formulas(&sys1(1.0, 0.0, 0.0), 0.0, 2.0, 1.0, &IntegratorConfig::default()).unwrap();
        assert_eq!(s.schwarzian_lhs, 0.0);
        assert_eq!(s.schwarzian_rhs, 0.0);
        let s = scalar_formulas(&sys1(0.0, 0.0, 6.0), 0.0, 1.0, 0.3, &IntegratorConfig::default()).unwrap();
        assert!(s.schwarzian_rhs > 0.1);
        assert!((s.schwarzian_lhs - s.schwarzian_rhs).abs() < 1e-6 * s.schwarzian_rhs);
        assert!((s.eq4_lhs - s.scaled_schwarzian()).abs() < 1e-9 * s.eq4_lhs.abs());
    }

    #[test]
    fn scalar_formulas_reject_vector_system() {
        let sys = PolySystem::constant(&[0.0, 0.0], &Mat::identity(2), &Mat::zeros(2, 4), &Mat::zeros(2, 8)).unwrap();
        assert!(matches!(
            scalar_formulas(&sys, 0.0, 1.0, 1.0, &IntegratorConfig::default()),
            Err(Error::Dimension { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn reciprocal_differentials() {
        let g = FracLin::new(Mat::zeros(1, 1), vec![1.0], vec![1.0], 1.0).unwrap();
        let [d1, d2, d3] = fraclin_differentials(&g, &[0.0], &[1.0]).unwrap();
        assert_eq!((d1[0], d2[0], d3[0]), (-1.0, 2.0, -6.0));
        assert!(matches!(
            fraclin_differentials(&g, &[-1.0], &[1.0]),
            Err(Error::Pole { .. })
        ));
    }

    #[test]
    fn affine_differentials_vanish() {
        let a = Mat::from_rows(&[vec![1.0, 2.0], vec![-0.5, 3.0]]).unwrap();
        let g = FracLin::new(a, vec![0.1, 0.2], vec![0.0, 0.0], 1.0).unwrap();
        let [_, d2, d3] = fraclin_differentials(&g, &[0.4, -0.3], &[1.0, 1.0]).unwrap();
        assert!(d2.iter().chain(&d3).all(|v| *v == 0.0));
        assert!(remark2_residual(&g, &[0.4, -0.3]).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn perturbed_map_breaks_remark2() {
        let a = Mat::from_rows(&[vec![1.0, 0.3], vec![0.2, 0.8]]).unwrap();
        let g = FracLin::new(a, vec![0.1, -0.2], vec![0.2, 0.1], 1.0).unwrap();
        let x = [1.0, 1.0];
        let [d1, d2, d3] = fraclin_differentials(&g, &x, &x).unwrap();
        assert!(remark2_normalized(&g, &x).unwrap() < 1e-12);
        // g + x₁²e₁ along h = x adds 2x₁², 2x₁², 0
        let bump = 2.0 * x[0] * x[0];
        let p1 = vec![d1[0] + bump, d1[1]];
        let p2 = vec![d2[0] + bump, d2[1]];
        let r = differential_residual(&p1, &p2, &d3);
        assert!(norm_inf(&r) > 1e-3);
    }
}

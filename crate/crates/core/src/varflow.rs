//! Fixed-step propagation of the flow `φ(t, τ, ξ)` together with its
//! derivative tensors with respect to `ξ`.
//!
//! Two augmented systems are integrated with the classical four-stage
//! Runge–Kutta scheme:
//!
//! * the full jet `(φ, Dφ, D²φ, D³φ)`,
//! * the directional jet `(φ, Dφ, dφ, d²φ, d³φ)` for a fixed direction `h`,
//!   carrying two accumulators whose integrands are the right-hand side
//!   terms of the third-order identity checked in [`crate::identities`].
//!
//! Accumulators are part of the state, so they share the step grid and the
//! discretisation error of the jets they are compared against.

use crate::error::{Error, Result};
use crate::matkron::{apply_kron_inv_pair, inverse_with_cond, kron, kron_pow, kron_pow_mat, kron_vec, star, KronIndex, Mat};
use crate::scalar::{is_finite_slice, lit, norm_inf, to_f64, Real};
use crate::sysmodel::PolySystem;

/// Condition number of `Dφ` above which the flow is reported ill-conditioned.
pub const MAX_FLOW_CONDITION: f64 = 1e12;

/// Step-size and guard settings for the fixed-step integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig<T = f64> {
    /// Nominal step per unit time; the actual step divides the span evenly.
    pub step: T,
    /// `‖φ‖∞` beyond which the solution is treated as escaping.
    pub max_norm: T,
    /// Also integrate with half the step and report a Richardson estimate.
    pub richardson: bool,
}

impl<T: Real> Default for IntegratorConfig<T> {
    fn default() -> Self {
        Self {
            step: lit(1e-3),
            max_norm: lit(1e8),
            richardson: false,
        }
    }
}

impl<T: Real> IntegratorConfig<T> {
    pub fn with_step(step: T) -> Self {
        Self {
            step,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > T::zero()) || !self.step.is_finite() {
            return Err(Error::Config(format!("step must be positive, got {}", self.step)));
        }
        if !(self.max_norm > T::zero()) {
            return Err(Error::Config(format!(
                "max_norm must be positive, got {}",
                self.max_norm
            )));
        }
        Ok(())
    }
}

/// Full third-order jet of the flow at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet3<T = f64> {
    pub t: T,
    pub phi: Vec<T>,
    pub dphi: Mat<T>,
    pub d2phi: Mat<T>,
    pub d3phi: Mat<T>,
}

/// Directional jet for a fixed direction `h` plus the two integral
/// accumulators of the third-order identity.
#[derive(Debug, Clone, PartialEq)]
pub struct DirJet3<T = f64> {
    pub t: T,
    pub phi: Vec<T>,
    /// `dφ = Dφ h`
    pub u1: Vec<T>,
    /// `d²φ = D²φ h²`
    pub u2: Vec<T>,
    /// `d³φ = D³φ h³`
    pub u3: Vec<T>,
    pub dphi: Mat<T>,
    /// `∫ (Ψ⊗Ψ)(D³f⊗E + E⊗D³f)(dφ)⁴ ds`
    pub i1: Vec<T>,
    /// `∫ (Ψ⊗Ψ)(D²f⊗E − E⊗D²f)(d²φ⊗(dφ)² − (dφ)²⊗d²φ) ds`
    pub i2: Vec<T>,
}

/// Samples at every grid point, endpoints included.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S, T = f64> {
    pub samples: Vec<S>,
    /// `‖y_h − y_{h/2}‖∞ / 15` at the endpoint, when requested.
    pub richardson_error: Option<T>,
}

impl<S, T> Trajectory<S, T> {
    pub fn last(&self) -> &S {
        self.samples.last().expect("trajectory has at least one sample")
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Raw output of [`propagate`].
pub(crate) struct Propagation<T> {
    pub times: Vec<T>,
    pub states: Vec<Vec<T>>,
    pub richardson_error: Option<T>,
}

/// Uniform grid from `tau` to `t_end` with spacing at most `step`.
pub(crate) fn grid<T: Real>(tau: T, t_end: T, step: T) -> Vec<T> {
    let span = t_end - tau;
    if span == T::zero() {
        return vec![tau];
    }
    let ratio = to_f64(span.abs() / step);
    let steps = ((ratio - 1e-9).ceil() as usize).max(1);
    let h = span / lit(steps as f64);
    let mut out: Vec<T> = (0..steps).map(|k| tau + h * lit(k as f64)).collect();
    out.push(t_end);
    out
}

fn rk4_step<T, F>(rhs: &mut F, t: T, y: &[T], h: T) -> Result<Vec<T>>
where
    T: Real,
    F: FnMut(T, &[T], &mut [T]) -> Result<()>,
{
    let len = y.len();
    let half: T = lit(0.5);
    let two: T = lit(2.0);
    let sixth: T = lit(1.0 / 6.0);
    let mut k1 = vec![T::zero(); len];
    let mut k2 = vec![T::zero(); len];
    let mut k3 = vec![T::zero(); len];
    let mut k4 = vec![T::zero(); len];
    rhs(t, y, &mut k1)?;
    let y2: Vec<T> = y.iter().zip(&k1).map(|(a, k)| *a + half * h * *k).collect();
    rhs(t + half * h, &y2, &mut k2)?;
    let y3: Vec<T> = y.iter().zip(&k2).map(|(a, k)| *a + half * h * *k).collect();
    rhs(t + half * h, &y3, &mut k3)?;
    let y4: Vec<T> = y.iter().zip(&k3).map(|(a, k)| *a + h * *k).collect();
    rhs(t + h, &y4, &mut k4)?;
    Ok((0..len)
        .map(|i| y[i] + sixth * h * (k1[i] + two * k2[i] + two * k3[i] + k4[i]))
        .collect())
}

fn escaped<T: Real>(y: &[T], guard_len: usize, max_norm: T) -> bool {
    !is_finite_slice(y) || norm_inf(&y[..guard_len]) > max_norm
}

fn run_grid<T, F>(
    rhs: &mut F,
    y0: &[T],
    times: &[T],
    guard_len: usize,
    max_norm: T,
) -> Result<Vec<Vec<T>>>
where
    T: Real,
    F: FnMut(T, &[T], &mut [T]) -> Result<()>,
{
    let mut states = Vec::with_capacity(times.len());
    states.push(y0.to_vec());
    for w in times.windows(2) {
        let (t, t_next) = (w[0], w[1]);
        let y = states.last().unwrap();
        let h = t_next - t;
        let next = rk4_step(rhs, t, y, h);
        let blown = match &next {
            Ok(v) => escaped(v, guard_len, max_norm),
            Err(_) => false,
        };
        if blown {
            let escape = bisect_escape(rhs, t, y, h, guard_len, max_norm);
            return Err(Error::BlowUp {
                t_last: to_f64(t),
                escape_time: to_f64(escape),
            });
        }
        states.push(next?);
    }
    Ok(states)
}

/// Refines the escape time inside a failing step by bisection on the
/// partial step length.
fn bisect_escape<T, F>(rhs: &mut F, t: T, y: &[T], h: T, guard_len: usize, max_norm: T) -> T
where
    T: Real,
    F: FnMut(T, &[T], &mut [T]) -> Result<()>,
{
    let half: T = lit(0.5);
    let (mut lo, mut hi) = (T::zero(), T::one());
    for _ in 0..40 {
        let mid = half * (lo + hi);
        let ok = matches!(rk4_step(rhs, t, y, h * mid), Ok(v) if !escaped(&v, guard_len, max_norm));
        if ok {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    t + h * half * (lo + hi)
}

/// Integrates `y′ = rhs(t, y)` on the uniform grid from `tau` to `t_end`.
/// The first `guard_len` components are monitored by the blow-up guard.
pub(crate) fn propagate<T, F>(
    mut rhs: F,
    y0: Vec<T>,
    tau: T,
    t_end: T,
    cfg: &IntegratorConfig<T>,
    guard_len: usize,
) -> Result<Propagation<T>>
where
    T: Real,
    F: FnMut(T, &[T], &mut [T]) -> Result<()>,
{
    cfg.validate()?;
    if !tau.is_finite() || !t_end.is_finite() {
        return Err(Error::Config("time bounds must be finite".into()));
    }
    let times = grid(tau, t_end, cfg.step);
    let states = run_grid(&mut rhs, &y0, &times, guard_len, cfg.max_norm)?;
    let richardson_error = if cfg.richardson && times.len() > 1 {
        let fine = grid(tau, t_end, cfg.step * lit(0.5));
        let fine_states = run_grid(&mut rhs, &y0, &fine, guard_len, cfg.max_norm)?;
        let a = states.last().unwrap();
        let b = fine_states.last().unwrap();
        let d = a.iter().zip(b).fold(T::zero(), |m, (x, y)| m.max((*x - *y).abs()));
        Some(d / lit(15.0))
    } else {
        None
    };
    Ok(Propagation {
        times,
        states,
        richardson_error,
    })
}

fn check_xi<T: Real>(sys: &PolySystem<T>, v: &[T]) -> Result<()> {
    if v.len() != sys.dim() {
        return Err(Error::Dimension {
            expected: sys.dim(),
            got: v.len(),
        });
    }
    if !is_finite_slice(v) {
        return Err(Error::NonFinite("initial data"));
    }
    Ok(())
}

fn mat_from<T: Real>(rows: usize, cols: usize, s: &[T]) -> Mat<T> {
    Mat::from_fn(rows, cols, |i, j| s[i * cols + j])
}

/// Only `φ` itself; used by the finite-difference oracle.
pub fn flow_endpoint<T: Real>(
    sys: &PolySystem<T>,
    tau: T,
    xi: &[T],
    t_end: T,
    cfg: &IntegratorConfig<T>,
) -> Result<Vec<T>> {
    check_xi(sys, xi)?;
    let cfg = IntegratorConfig {
        richardson: false,
        ..*cfg
    };
    let n = sys.dim();
    let prop = propagate(
        |t, y, out| {
            out.copy_from_slice(&sys.eval_f(t, y)?);
            Ok(())
        },
        xi.to_vec(),
        tau,
        t_end,
        &cfg,
        n,
    )?;
    Ok(prop.states.into_iter().last().unwrap())
}

/// Right-hand side of the full jet system.
fn jet_rhs<T: Real>(sys: &PolySystem<T>, t: T, y: &[T], out: &mut [T]) -> Result<()> {
    let n = sys.dim();
    let (n2, n3, n4) = (n * n, n * n * n, n * n * n * n);
    let phi = &y[..n];
    let dphi = mat_from(n, n, &y[n..n + n2]);
    let d2 = mat_from(n, n2, &y[n + n2..n + n2 + n3]);
    let d3 = mat_from(n, n3, &y[n + n2 + n3..n + n2 + n3 + n4]);
    let der = sys.derivatives(t, phi)?;
    let f = sys.eval_f(t, phi)?;

    let ddphi = der.df.matmul(&dphi);
    let pair = kron(&dphi, &dphi);
    let mut dd2 = der.df.matmul(&d2);
    dd2 += &der.d2f.matmul(&pair);

    let mut mixed = kron(&dphi, &d2);
    mixed += &star(&dphi, &d2, n)?;
    mixed += &kron(&d2, &dphi);
    let mut dd3 = der.df.matmul(&d3);
    dd3 += &der.d2f.matmul(&mixed);
    dd3 += &der.d3f.matmul(&kron_pow_mat(&dphi, 3)?);

    out[..n].copy_from_slice(&f);
    out[n..n + n2].copy_from_slice(ddphi.as_slice());
    out[n + n2..n + n2 + n3].copy_from_slice(dd2.as_slice());
    out[n + n2 + n3..].copy_from_slice(dd3.as_slice());
    Ok(())
}

/// Integrates `(φ, Dφ, D²φ, D³φ)` from `(τ, ξ)` to `t_end` with
/// `Dφ(τ) = E`, `D²φ(τ) = D³φ(τ) = 0`.
pub fn integrate_jets<T: Real>(
    sys: &PolySystem<T>,
    tau: T,
    xi: &[T],
    t_end: T,
    cfg: &IntegratorConfig<T>,
) -> Result<Trajectory<Jet3<T>, T>> {
    check_xi(sys, xi)?;
    let n = sys.dim();
    let (n2, n3, n4) = (n * n, n * n * n, n * n * n * n);
    let mut y0 = vec![T::zero(); n + n2 + n3 + n4];
    y0[..n].copy_from_slice(xi);
    for i in 0..n {
        y0[n + i * n + i] = T::one();
    }
    let prop = propagate(|t, y, out| jet_rhs(sys, t, y, out), y0, tau, t_end, cfg, n)?;
    let samples = prop
        .times
        .iter()
        .zip(&prop.states)
        .map(|(&t, y)| Jet3 {
            t,
            phi: y[..n].to_vec(),
            dphi: mat_from(n, n, &y[n..n + n2]),
            d2phi: mat_from(n, n2, &y[n + n2..n + n2 + n3]),
            d3phi: mat_from(n, n3, &y[n + n2 + n3..]),
        })
        .collect();
    Ok(Trajectory {
        samples,
        richardson_error: prop.richardson_error,
    })
}

/// `Ψ = (Dφ)⁻¹`, rejecting ill-conditioned fundamental matrices.
pub(crate) fn flow_inverse<T: Real>(dphi: &Mat<T>, t: T) -> Result<Mat<T>> {
    match inverse_with_cond(dphi) {
        Ok((inv, cond)) if to_f64(cond) <= MAX_FLOW_CONDITION => Ok(inv),
        Ok((_, cond)) => Err(Error::IllConditioned {
            t: to_f64(t),
            cond_estimate: to_f64(cond),
        }),
        Err(Error::Singular { cond_estimate }) => Err(Error::IllConditioned {
            t: to_f64(t),
            cond_estimate,
        }),
        Err(e) => Err(e),
    }
}

/// Integrands of the two accumulators, computed through the product rule
/// `(M ⊗ E)(a ⊗ b) = (Ma) ⊗ b` instead of forming `D^k f ⊗ E`.
pub(crate) fn accumulator_integrands<T: Real>(
    psi: &Mat<T>,
    d2f: &Mat<T>,
    d3f: &Mat<T>,
    u1: &[T],
    u2: &[T],
) -> (Vec<T>, Vec<T>) {
    let u1_2 = kron_vec(u1, u1);
    let u1_3 = kron_vec(&u1_2, u1);
    let t3 = d3f.mul_vec(&u1_3);
    let i1: Vec<T> = kron_vec(&t3, u1)
        .iter()
        .zip(kron_vec(u1, &t3))
        .map(|(a, b)| *a + b)
        .collect();

    let q21 = d2f.mul_vec(&kron_vec(u2, u1));
    let q12 = d2f.mul_vec(&kron_vec(u1, u2));
    let q11 = d2f.mul_vec(&u1_2);
    let i2: Vec<T> = kron_vec(&q21, u1)
        .into_iter()
        .zip(kron_vec(&q11, u2))
        .zip(kron_vec(u2, &q11))
        .zip(kron_vec(u1, &q12))
        .map(|(((a, b), c), d)| a - b - c + d)
        .collect();
    (apply_kron_inv_pair(psi, &i1), apply_kron_inv_pair(psi, &i2))
}

fn directional_rhs<T: Real>(sys: &PolySystem<T>, t: T, y: &[T], out: &mut [T]) -> Result<()> {
    let n = sys.dim();
    let n2 = n * n;
    let phi = &y[..n];
    let dphi = mat_from(n, n, &y[n..n + n2]);
    let o = n + n2;
    let (u1, u2, u3) = (&y[o..o + n], &y[o + n..o + 2 * n], &y[o + 2 * n..o + 3 * n]);
    let der = sys.derivatives(t, phi)?;
    let psi = flow_inverse(&dphi, t)?;
    let three: T = lit(3.0);

    let f = sys.eval_f(t, phi)?;
    let ddphi = der.df.matmul(&dphi);
    let du1 = der.df.mul_vec(u1);
    let u1_2 = kron_vec(u1, u1);
    let du2: Vec<T> = der
        .df
        .mul_vec(u2)
        .into_iter()
        .zip(der.d2f.mul_vec(&u1_2))
        .map(|(a, b)| a + b)
        .collect();
    let d2_21 = der.d2f.mul_vec(&kron_vec(u2, u1));
    let d3_111 = der.d3f.mul_vec(&kron_vec(&u1_2, u1));
    let du3: Vec<T> = der
        .df
        .mul_vec(u3)
        .into_iter()
        .zip(d2_21)
        .zip(d3_111)
        .map(|((a, b), c)| a + three * b + c)
        .collect();
    let (di1, di2) = accumulator_integrands(&psi, &der.d2f, &der.d3f, u1, u2);

    out[..n].copy_from_slice(&f);
    out[n..o].copy_from_slice(ddphi.as_slice());
    out[o..o + n].copy_from_slice(&du1);
    out[o + n..o + 2 * n].copy_from_slice(&du2);
    out[o + 2 * n..o + 3 * n].copy_from_slice(&du3);
    let p = o + 3 * n;
    out[p..p + n2].copy_from_slice(&di1);
    out[p + n2..p + 2 * n2].copy_from_slice(&di2);
    Ok(())
}

/// Integrates the directional jet along `h` together with the two
/// accumulators.
pub fn integrate_directional<T: Real>(
    sys: &PolySystem<T>,
    tau: T,
    xi: &[T],
    h: &[T],
    t_end: T,
    cfg: &IntegratorConfig<T>,
) -> Result<Trajectory<DirJet3<T>, T>> {
    check_xi(sys, xi)?;
    check_xi(sys, h)?;
    let n = sys.dim();
    let n2 = n * n;
    let o = n + n2;
    let mut y0 = vec![T::zero(); o + 3 * n + 2 * n2];
    y0[..n].copy_from_slice(xi);
    for i in 0..n {
        y0[n + i * n + i] = T::one();
    }
    y0[o..o + n].copy_from_slice(h);
    let prop = propagate(
        |t, y, out| directional_rhs(sys, t, y, out),
        y0,
        tau,
        t_end,
        cfg,
        n,
    )?;
    let p = o + 3 * n;
    let samples = prop
        .times
        .iter()
        .zip(&prop.states)
        .map(|(&t, y)| DirJet3 {
            t,
            phi: y[..n].to_vec(),
            dphi: mat_from(n, n, &y[n..o]),
            u1: y[o..o + n].to_vec(),
            u2: y[o + n..o + 2 * n].to_vec(),
            u3: y[o + 2 * n..p].to_vec(),
            i1: y[p..p + n2].to_vec(),
            i2: y[p + n2..].to_vec(),
        })
        .collect();
    Ok(Trajectory {
        samples,
        richardson_error: prop.richardson_error,
    })
}

/// Finite-difference approximations of `Dφ`, `D²φ`, `D³φ` at `t_end`.
#[derive(Debug, Clone, PartialEq)]
pub struct FdJets<T = f64> {
    pub dphi: Mat<T>,
    pub d2phi: Mat<T>,
    pub d3phi: Mat<T>,
}

/// Central differences of `ξ ↦ φ(t_end, τ, ξ)`, one plain flow integration
/// per stencil point. Steps are `eps` (first order), `eps^(2/3)` (second)
/// and `eps^(1/2)` (third); mixed partials use nested central stencils.
pub fn fd_jets<T: Real>(
    sys: &PolySystem<T>,
    tau: T,
    xi: &[T],
    t_end: T,
    cfg: &IntegratorConfig<T>,
    eps: T,
) -> Result<FdJets<T>> {
    if !(eps > T::zero()) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {eps}")));
    }
    check_xi(sys, xi)?;
    let n = sys.dim();
    let eval = |offsets: &[(usize, T)]| -> Result<Vec<T>> {
        let mut x = xi.to_vec();
        for &(i, d) in offsets {
            x[i] += d;
        }
        flow_endpoint(sys, tau, &x, t_end, cfg)
    };
    let signs = [T::one(), -T::one()];

    let h1 = eps;
    let mut dphi = Mat::zeros(n, n);
    for j in 0..n {
        let p = eval(&[(j, h1)])?;
        let m = eval(&[(j, -h1)])?;
        let col: Vec<T> = p.iter().zip(&m).map(|(a, b)| (*a - *b) / (lit::<T>(2.0) * h1)).collect();
        dphi.set_col(j, &col);
    }

    let h2 = eps.powf(lit(2.0 / 3.0));
    let idx2 = KronIndex::new(n, 2);
    let mut d2phi = Mat::zeros(n, n * n);
    for i in 0..n {
        for j in i..n {
            let mut acc = vec![T::zero(); n];
            for &si in &signs {
                for &sj in &signs {
                    let v = eval(&[(i, si * h2), (j, sj * h2)])?;
                    for (a, x) in acc.iter_mut().zip(&v) {
                        *a += si * sj * *x;
                    }
                }
            }
            let denom = lit::<T>(4.0) * h2 * h2;
            let col: Vec<T> = acc.into_iter().map(|a| a / denom).collect();
            d2phi.set_col(idx2.flat(&[i, j]), &col);
            d2phi.set_col(idx2.flat(&[j, i]), &col);
        }
    }

    let h3 = eps.sqrt();
    let idx3 = KronIndex::new(n, 3);
    let mut d3phi = Mat::zeros(n, n * n * n);
    for i in 0..n {
        for j in i..n {
            for k in j..n {
                let mut acc = vec![T::zero(); n];
                for &si in &signs {
                    for &sj in &signs {
                        for &sk in &signs {
                            let v = eval(&[(i, si * h3), (j, sj * h3), (k, sk * h3)])?;
                            for (a, x) in acc.iter_mut().zip(&v) {
                                *a += si * sj * sk * *x;
                            }
                        }
                    }
                }
                let denom = lit::<T>(8.0) * h3 * h3 * h3;
                let col: Vec<T> = acc.into_iter().map(|a| a / denom).collect();
                for perm in [[i, j, k], [i, k, j], [j, i, k], [j, k, i], [k, i, j], [k, j, i]] {
                    d3phi.set_col(idx3.flat(&perm), &col);
                }
            }
        }
    }
    Ok(FdJets { dphi, d2phi, d3phi })
}

/// `D^k φ h^k` for `k = 1, 2, 3` from a full jet.
pub fn directional_from_jet<T: Real>(jet: &Jet3<T>, h: &[T]) -> Result<[Vec<T>; 3]> {
    Ok([
        jet.dphi.mul_vec(h),
        jet.d2phi.mul_vec(&kron_pow(h, 2)?),
        jet.d3phi.mul_vec(&kron_pow(h, 3)?),
    ])
}

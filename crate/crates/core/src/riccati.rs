//! Vector Riccati systems `x′ = a + Bx + (cᵀx)x`: the linear lift, the
//! fractional-linear solution map and a sampled detector based on the
//! third-order identity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::identities::{allwright_lhs, allwright_term_scale, fraclin_differentials, POLE_TOL};
use crate::matkron::Mat;
use crate::scalar::{dot, lit, norm_inf, rel_diff, to_f64, Real};
use crate::sysmodel::{riccati_to_system, PolySystem, RiccatiCoeffs};
use crate::varflow::{flow_endpoint, integrate_directional, propagate, IntegratorConfig};

/// `x ↦ (A x + β) / (γᵀx + δ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FracLin<T = f64> {
    pub a: Mat<T>,
    pub beta: Vec<T>,
    pub gamma: Vec<T>,
    pub delta: T,
}

impl<T: Real> FracLin<T> {
    pub fn new(a: Mat<T>, beta: Vec<T>, gamma: Vec<T>, delta: T) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n || beta.len() != n || gamma.len() != n {
            return Err(Error::Shape(format!(
                "fractional-linear map needs A n×n, β and γ of length n; got A {}×{}, |β| = {}, |γ| = {}",
                a.rows(),
                a.cols(),
                beta.len(),
                gamma.len()
            )));
        }
        if delta == T::zero() && gamma.iter().all(|g| *g == T::zero()) {
            return Err(Error::Config("[γᵀ δ] must not vanish".into()));
        }
        Ok(Self { a, beta, gamma, delta })
    }

    /// Blocks `[[A, β], [γᵀ, δ]]` of an `(n+1)×(n+1)` matrix.
    pub fn from_blocks(m: &Mat<T>) -> Result<Self> {
        let n1 = m.rows();
        if n1 < 2 || m.cols() != n1 {
            return Err(Error::Shape(format!("block matrix must be square with n ≥ 1, got {}×{}", m.rows(), m.cols())));
        }
        let n = n1 - 1;
        Self::new(
            Mat::from_fn(n, n, |i, j| m[(i, j)]),
            (0..n).map(|i| m[(i, n)]).collect(),
            (0..n).map(|j| m[(n, j)]).collect(),
            m[(n, n)],
        )
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    pub fn denominator(&self, x: &[T]) -> T {
        dot(&self.gamma, x) + self.delta
    }

    pub fn eval(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let den = self.denominator(x);
        if to_f64(den.abs()) <= POLE_TOL {
            return Err(Error::Pole {
                denominator: to_f64(den.abs()),
            });
        }
        Ok(self
            .a
            .mul_vec(x)
            .into_iter()
            .zip(&self.beta)
            .map(|(ax, b)| (ax + *b) / den)
            .collect())
    }
}

/// `[[B(t), a(t)], [−cᵀ(t), 0]]`.
pub fn lift_matrix<T: Real>(rc: &RiccatiCoeffs<T>, t: T) -> Mat<T> {
    let n = rc.dim();
    let a = rc.a_at(t);
    let b = rc.b_at(t);
    let c = rc.c_at(t);
    Mat::from_fn(n + 1, n + 1, |i, j| match (i < n, j < n) {
        (true, true) => b[(i, j)],
        (true, false) => a[i],
        (false, true) => -c[j],
        (false, false) => T::zero(),
    })
}

/// Fundamental matrix samples of the lift and the denominator for one `ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftTrajectory<T = f64> {
    pub t: Vec<T>,
    pub phi: Vec<Mat<T>>,
    /// `γᵀ(t)ξ + δ(t)`
    pub rho: Vec<T>,
}

fn lift_rhs<T: Real>(rc: &RiccatiCoeffs<T>, t: T, y: &[T], out: &mut [T]) -> Result<()> {
    let n1 = rc.dim() + 1;
    let l = lift_matrix(rc, t);
    let phi = Mat::from_fn(n1, n1, |i, j| y[i * n1 + j]);
    out.copy_from_slice(l.matmul(&phi).as_slice());
    Ok(())
}

fn rho_of<T: Real>(phi: &Mat<T>, xi: &[T]) -> T {
    let n = xi.len();
    (0..n).fold(phi[(n, n)], |acc, j| acc + phi[(n, j)] * xi[j])
}

/// Integrates `Φ′ = L(t)Φ`, `Φ(τ) = E`, without checking the denominator.
pub fn integrate_lift<T: Real>(
    rc: &RiccatiCoeffs<T>,
    tau: T,
    xi: &[T],
    t_end: T,
    cfg: &IntegratorConfig<T>,
) -> Result<LiftTrajectory<T>> {
    let n = rc.dim();
    if xi.len() != n {
        return Err(Error::Dimension { expected: n, got: xi.len() });
    }
    let n1 = n + 1;
    let cfg = IntegratorConfig {
        richardson: false,
        ..*cfg
    };
    let prop = propagate(
        |t, y, out| lift_rhs(rc, t, y, out),
        Mat::<T>::identity(n1).into_vec(),
        tau,
        t_end,
        &cfg,
        n1 * n1,
    )?;
    let phi: Vec<Mat<T>> = prop
        .states
        .into_iter()
        .map(|y| Mat::from_fn(n1, n1, |i, j| y[i * n1 + j]))
        .collect();
    let rho = phi.iter().map(|p| rho_of(p, xi)).collect();
    Ok(LiftTrajectory {
        t: prop.times,
        phi,
        rho,
    })
}

/// `|ρ|` at or below this value counts as reaching the pole.
pub const RHO_TOL: f64 = 1e-10;

/// Fractional-linear solution samples on `[τ, t_end]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FracSolution<T = f64> {
    pub t: Vec<T>,
    pub maps: Vec<FracLin<T>>,
    pub phi: Vec<Vec<T>>,
    pub rho: Vec<T>,
}

/// Locates the first sign change or near-zero of `ρ` and refines it by
/// bisection on a partial step from the last admissible sample.
fn find_pole<T: Real>(
    rc: &RiccatiCoeffs<T>,
    xi: &[T],
    lift: &LiftTrajectory<T>,
) -> Option<(T, T, T)> {
    let r0 = lift.rho[0];
    let k = lift
        .rho
        .iter()
        .position(|r| to_f64(r.abs()) <= RHO_TOL || r.signum() != r0.signum())?;
    let (t_lo, t_hi) = (lift.t[k - 1], lift.t[k]);
    if to_f64(lift.rho[k].abs()) <= RHO_TOL {
        return Some((t_lo, t_hi, t_hi));
    }
    let n1 = rc.dim() + 1;
    let start = lift.phi[k - 1].as_slice().to_vec();
    let half: T = lit(0.5);
    let (mut lo, mut hi) = (t_lo, t_hi);
    for _ in 0..60 {
        let mid = half * (lo + hi);
        let cfg = IntegratorConfig {
            step: (mid - t_lo).abs().max(T::min_positive_value()),
            max_norm: T::max_value(),
            richardson: false,
        };
        let Ok(prop) = propagate(|t, y, out| lift_rhs(rc, t, y, out), start.clone(), t_lo, mid, &cfg, n1 * n1) else {
            break;
        };
        let y = prop.states.last().unwrap();
        let phi = Mat::from_fn(n1, n1, |i, j| y[i * n1 + j]);
        if rho_of(&phi, xi).signum() == r0.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some((t_lo, t_hi, half * (lo + hi)))
}

/// `φ(t) = (A_block ξ + β)/(γᵀξ + δ)` from the lift blocks at every grid
/// point. Fails with [`Error::PoleCrossed`] when `ρ` reaches zero before
/// `t_end`.
pub fn frac_solution<T: Real>(
    rc: &RiccatiCoeffs<T>,
    tau: T,
    xi: &[T],
    t_end: T,
    cfg: &IntegratorConfig<T>,
) -> Result<FracSolution<T>> {
    let lift = integrate_lift(rc, tau, xi, t_end, cfg)?;
    if let Some((t_lo, t_hi, t_pole)) = find_pole(rc, xi, &lift) {
        return Err(Error::PoleCrossed {
            t_lo: to_f64(t_lo),
            t_hi: to_f64(t_hi),
            t_pole: to_f64(t_pole),
        });
    }
    let mut maps = Vec::with_capacity(lift.t.len());
    let mut phi = Vec::with_capacity(lift.t.len());
    for m in &lift.phi {
        let g = FracLin::from_blocks(m)?;
        phi.push(g.eval(xi)?);
        maps.push(g);
    }
    Ok(FracSolution {
        t: lift.t,
        maps,
        phi,
        rho: lift.rho,
    })
}

/// Ends of an estimated maximal interval `J(τ, ξ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExistenceWindow<T = f64> {
    pub lo: T,
    pub hi: T,
    /// `lo` is a located pole rather than the end of the search.
    pub lo_pole: bool,
    pub hi_pole: bool,
}

/// Searches up to `horizon` on either side of `τ` for a zero of `ρ`. A
/// side without a pole ends at `τ ± horizon`, or earlier where the lift
/// itself exceeds `cfg.max_norm`.
pub fn existence_window<T: Real>(
    rc: &RiccatiCoeffs<T>,
    tau: T,
    xi: &[T],
    horizon: T,
    cfg: &IntegratorConfig<T>,
) -> Result<ExistenceWindow<T>> {
    let mut ends = [(tau - horizon, false), (tau + horizon, false)];
    for (end, pole) in &mut ends {
        let mut lift = None;
        for _ in 0..4 {
            match integrate_lift(rc, tau, xi, *end, cfg) {
                Ok(l) => {
                    lift = Some(l);
                    break;
                }
                Err(Error::BlowUp { t_last, .. }) => *end = lit(t_last),
                Err(e) => return Err(e),
            }
        }
        let Some(lift) = lift else {
            return Err(Error::BlowUp {
                t_last: to_f64(*end),
                escape_time: to_f64(*end),
            });
        };
        if let Some((_, _, t_pole)) = find_pole(rc, xi, &lift) {
            *end = t_pole;
            *pole = true;
        }
    }
    Ok(ExistenceWindow {
        lo: ends[0].0,
        hi: ends[1].0,
        lo_pole: ends[0].1,
        hi_pole: ends[1].1,
    })
}

/// `(lo, hi)` of [`existence_window`].
pub fn estimate_existence_window<T: Real>(
    rc: &RiccatiCoeffs<T>,
    tau: T,
    xi: &[T],
    horizon: T,
    cfg: &IntegratorConfig<T>,
) -> Result<(T, T)> {
    let w = existence_window(rc, tau, xi, horizon, cfg)?;
    Ok((w.lo, w.hi))
}

/// Settings of [`detect_flow`].
#[derive(Debug, Clone, PartialEq)]
pub struct DetectConfig<T = f64> {
    pub windows: Vec<(T, T)>,
    /// Number of `ξ` draws and, separately, of `h` draws.
    pub sample_count: usize,
    pub tol: T,
    pub seed: u64,
    pub integrator: IntegratorConfig<T>,
}

impl<T: Real> DetectConfig<T> {
    /// Window `τ ± 0.3`, 8 × 8 samples, tolerance `1e-7`.
    pub fn around(tau: T) -> Self {
        let w: T = lit(0.3);
        Self {
            windows: vec![(tau - w, tau + w)],
            sample_count: 8,
            tol: lit(1e-7),
            seed: 0,
            integrator: IntegratorConfig::default(),
        }
    }
}

/// Outcome of [`detect_flow`].
#[derive(Debug, Clone, PartialEq)]
pub struct FlowDetection<T = f64> {
    pub riccati_consistent: bool,
    pub max_normalized: T,
    /// Windows actually covered after shrinking around escapes.
    pub windows: Vec<(T, T)>,
    pub samples: usize,
}

/// Draws `ξ ∈ [−1, 1]ⁿ` uniformly.
fn draw_box<T: Real>(rng: &mut ChaCha8Rng, n: usize) -> Vec<T> {
    (0..n).map(|_| lit(rng.gen_range(-1.0..=1.0))).collect()
}

/// Draws `h` uniformly on the unit sphere by rejection from the cube.
fn draw_sphere<T: Real>(rng: &mut ChaCha8Rng, n: usize) -> Vec<T> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r > 1e-3 && r <= 1.0 {
            return v.into_iter().map(|x| lit(x / r)).collect();
        }
    }
}

/// Samples `‖u3⊗u1 + u1⊗u3 − 3u2⊗u2‖∞ / (1 + Σ|terms|)` over seeded
/// `(ξ, h)` and every grid time in the windows.
///
/// A vanishing maximum is necessary for a vector Riccati system, so the
/// verdict can refute Riccati structure but only ever corroborate it.
pub fn detect_flow<T: Real>(sys: &PolySystem<T>, tau: T, cfg: &DetectConfig<T>) -> Result<FlowDetection<T>> {
    if cfg.sample_count == 0 {
        return Err(Error::Config("sample_count must be at least 1".into()));
    }
    let n = sys.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let xis: Vec<Vec<T>> = (0..cfg.sample_count).map(|_| draw_box(&mut rng, n)).collect();
    let hs: Vec<Vec<T>> = (0..cfg.sample_count).map(|_| draw_sphere(&mut rng, n)).collect();
    let mut covered = cfg.windows.clone();
    let mut worst = T::zero();
    let mut samples = 0;
    for (w, &(lo, hi)) in cfg.windows.iter().enumerate() {
        if !(lo <= hi) {
            return Err(Error::Config(format!("window [{lo}, {hi}] is empty")));
        }
        for xi in &xis {
            for h in &hs {
                for end in [lo, hi] {
                    let mut target = end;
                    let traj = loop {
                        match integrate_directional(sys, tau, xi, h, target, &cfg.integrator) {
                            Ok(traj) => break traj,
                            Err(Error::BlowUp { escape_time, .. }) => {
                                target = tau + lit::<T>(0.5) * (lit::<T>(escape_time) - tau);
                            }
                            Err(Error::IllConditioned { t, .. }) => {
                                target = tau + lit::<T>(0.5) * (lit::<T>(t) - tau);
                            }
                            Err(e) => return Err(e),
                        }
                    };
                    let span = &mut covered[w];
                    if end == lo {
                        span.0 = span.0.max(target.min(tau));
                    } else {
                        span.1 = span.1.min(target.max(tau));
                    }
                    for s in traj.samples.iter().filter(|s| s.t >= lo && s.t <= hi) {
                        let lhs = allwright_lhs(&s.u1, &s.u2, &s.u3);
                        let scale = allwright_term_scale(&s.u1, &s.u2, &s.u3);
                        worst = worst.max(norm_inf(&lhs) / (T::one() + scale));
                        samples += 1;
                    }
                }
            }
        }
    }
    Ok(FlowDetection {
        riccati_consistent: worst <= cfg.tol,
        max_normalized: worst,
        windows: covered,
        samples,
    })
}

/// Maxima of the two round-trip checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundTripReport<T = f64> {
    /// Relative gap between the fractional-linear solution and direct
    /// integration of the nonlinear system.
    pub solution_residual: T,
    /// Normalized left side of the third-order identity for the solution
    /// maps, evaluated through their closed-form differentials.
    pub lhs_residual: T,
    pub comparisons: usize,
}

/// For each `ξ` and `t`: compares `frac_solution` with the direct flow and
/// evaluates the third-order left side of `ξ ↦ φ(t, τ, ξ)` along `h = e_j`
/// and `h = (1, …, 1)`.
pub fn roundtrip_theorem61<T: Real>(
    rc: &RiccatiCoeffs<T>,
    tau: T,
    xi_set: &[Vec<T>],
    t_grid: &[T],
    cfg: &IntegratorConfig<T>,
) -> Result<RoundTripReport<T>> {
    let n = rc.dim();
    let sys = riccati_to_system(rc);
    let mut dirs: Vec<Vec<T>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { T::one() } else { T::zero() }).collect())
        .collect();
    dirs.push(vec![T::one(); n]);
    let mut rep = RoundTripReport {
        solution_residual: T::zero(),
        lhs_residual: T::zero(),
        comparisons: 0,
    };
    for xi in xi_set {
        for &t in t_grid {
            let frac = frac_solution(rc, tau, xi, t, cfg)?;
            let direct = flow_endpoint(&sys, tau, xi, t, cfg)?;
            let phi = frac.phi.last().unwrap();
            rep.solution_residual = rep.solution_residual.max(rel_diff(phi, &direct));
            let g = frac.maps.last().unwrap();
            for h in &dirs {
                let [d1, d2, d3] = fraclin_differentials(g, xi, h)?;
                let lhs = allwright_lhs(&d1, &d2, &d3);
                let scale = allwright_term_scale(&d1, &d2, &d3);
                rep.lhs_residual = rep.lhs_residual.max(norm_inf(&lhs) / (T::one() + scale));
            }
            rep.comparisons += 1;
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysmodel::{PolyMat, PolyT};

    fn scalar_square() -> RiccatiCoeffs {
        RiccatiCoeffs::constant(&[0.0], &Mat::zeros(1, 1), &[1.0]).unwrap()
    }

    #[test]
    fn lift_of_scalar_square() {
        let l = lift_matrix(&scalar_square(), 0.0);
        assert_eq!(l.as_slice(), &[0.0, 0.0, -1.0, 0.0]);
        let rc = RiccatiCoeffs::constant(&[1.0, 2.0], &Mat::identity(2), &[0.0, 0.0]).unwrap();
        let l = lift_matrix(&rc, 0.0);
        assert!(l.row_slice(2).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn scalar_square_fundamental_matrix() {
        let lift = integrate_lift(&scalar_square(), 0.0, &[1.0], 0.5, &IntegratorConfig::default()).unwrap();
        let last = lift.phi.last().unwrap();
        assert!((last[(1, 0)] + 0.5).abs() < 1e-14);
        assert!((last[(0, 0)] - 1.0).abs() < 1e-14);
        assert_eq!(lift.rho[0], 1.0);
    }

    #[test]
    fn pole_crossing_is_reported() {
        let cfg = IntegratorConfig::default();
        match frac_solution(&scalar_square(), 0.0, &[1.0], 1.5, &cfg) {
            Err(Error::PoleCrossed { t_pole, .. }) => assert!((t_pole - 1.0).abs() < 2e-3),
            other => panic!("expected pole, got {other:?}"),
        }
        let (lo, hi) = estimate_existence_window(&scalar_square(), 0.0, &[1.0], 3.0, &cfg).unwrap();
        assert_eq!(lo, -3.0);
        assert!((hi - 1.0).abs() < 2e-3);
        let w = existence_window(&scalar_square(), 0.0, &[1.0], 3.0, &cfg).unwrap();
        assert!(w.hi_pole && !w.lo_pole);
    }

    #[test]
    fn window_search_stops_where_the_lift_grows_too_large() {
        // x′ = t·x: no pole, lift norm e^{t²/2} reaches 1e8 at |t| = √(2 ln 1e8)
        let rc = RiccatiCoeffs::new(
            vec![PolyT::constant(0.0)],
            PolyMat::new(1, 1, vec![PolyT::new(vec![0.0, 1.0])]).unwrap(),
            vec![PolyT::constant(0.0)],
        )
        .unwrap();
        let cfg = IntegratorConfig::default();
        let w = existence_window(&rc, 0.0, &[1.0], 10.0, &cfg).unwrap();
        let reach = (2.0 * 1e8f64.ln()).sqrt();
        assert!(!w.lo_pole && !w.hi_pole);
        assert!((w.hi - reach).abs() < 2e-3, "{}", w.hi);
        assert!((w.lo + reach).abs() < 2e-3, "{}", w.lo);
    }

    #[test]
    fn frac_solution_starts_at_xi() {
        let rc = RiccatiCoeffs::constant(
            &[1.0, 0.0],
            &Mat::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap(),
            &[1.0, -1.0],
        )
        .unwrap();
        let sol = frac_solution(&rc, 0.0, &[0.1, 0.2], 0.5, &IntegratorConfig::default()).unwrap();
        assert_eq!(sol.phi[0], vec![0.1, 0.2]);
        assert_eq!(sol.rho[0], 1.0);
    }

    #[test]
    fn fraclin_rejects_degenerate_denominator() {
        assert!(FracLin::new(Mat::identity(1), vec![0.0], vec![0.0], 0.0).is_err());
    }
}

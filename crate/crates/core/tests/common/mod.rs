#![allow(dead_code)]

use varjet::sysmodel::riccati_to_system;
use varjet::{Mat, PolyMat, PolySystem, PolyT, RiccatiCoeffs};

pub struct Fixture {
    pub name: &'static str,
    pub sys: PolySystem,
    /// Coefficients when the system is a vector Riccati system.
    pub riccati: Option<RiccatiCoeffs>,
    /// A point well inside its existence interval: (τ, ξ, h, t).
    pub point: (f64, Vec<f64>, Vec<f64>, f64),
}

pub fn system(a: &[f64], b: Vec<Vec<f64>>, c: Vec<Vec<f64>>, t3: Vec<Vec<f64>>) -> PolySystem {
    let n = a.len();
    let mat = |rows: Vec<Vec<f64>>, cols: usize| {
        if rows.is_empty() {
            Mat::zeros(n, cols)
        } else {
            Mat::from_rows(&rows).unwrap()
        }
    };
    PolySystem::constant(a, &mat(b, n), &mat(c, n * n), &mat(t3, n * n * n)).unwrap()
}

pub fn linear() -> Fixture {
    let rc = RiccatiCoeffs::constant(
        &[0.3, -0.1],
        &Mat::from_rows(&[vec![-0.2, 1.0], vec![-1.0, 0.1]]).unwrap(),
        &[0.0, 0.0],
    )
    .unwrap();
    Fixture {
        name: "linear",
        sys: riccati_to_system(&rc),
        riccati: Some(rc),
        point: (0.0, vec![0.4, -0.7], vec![1.0, 0.5], 0.8),
    }
}

pub fn scalar_square() -> Fixture {
    let rc = RiccatiCoeffs::constant(&[0.0], &Mat::zeros(1, 1), &[1.0]).unwrap();
    Fixture {
        name: "scalar-riccati",
        sys: riccati_to_system(&rc),
        riccati: Some(rc),
        point: (0.0, vec![1.0], vec![1.0], 0.5),
    }
}

/// `x′ = 1/2 + t·x + x²` with a time-dependent linear coefficient.
pub fn scalar_timevarying() -> Fixture {
    let rc = RiccatiCoeffs::new(
        vec![PolyT::constant(0.5)],
        PolyMat::new(1, 1, vec![PolyT::new(vec![0.0, 1.0])]).unwrap(),
        vec![PolyT::constant(1.0)],
    )
    .unwrap();
    Fixture {
        name: "scalar-riccati-t",
        sys: riccati_to_system(&rc),
        riccati: Some(rc),
        point: (0.1, vec![0.3], vec![1.0], 0.6),
    }
}

pub fn riccati2() -> Fixture {
    let rc = RiccatiCoeffs::constant(
        &[1.0, 0.0],
        &Mat::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap(),
        &[1.0, -1.0],
    )
    .unwrap();
    Fixture {
        name: "riccati-2",
        sys: riccati_to_system(&rc),
        riccati: Some(rc),
        point: (0.0, vec![0.1, 0.2], vec![1.0, 1.0], 0.5),
    }
}

/// `(x₁², x₂²)`: quadratic, two decoupled scalar Riccati equations, but not
/// a vector Riccati system.
pub fn quadratic() -> Fixture {
    Fixture {
        name: "quadratic",
        sys: system(
            &[0.0, 0.0],
            vec![],
            vec![vec![2.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, 0.0, 2.0]],
            vec![],
        ),
        riccati: None,
        point: (0.0, vec![1.0, 0.0], vec![1.0, 1.0], 0.3),
    }
}

pub fn cubic() -> Fixture {
    Fixture {
        name: "cubic",
        sys: system(&[0.0], vec![vec![0.0]], vec![vec![0.0]], vec![vec![6.0]]),
        riccati: None,
        point: (0.0, vec![1.0], vec![1.0], 0.3),
    }
}

pub fn all() -> Vec<Fixture> {
    vec![linear(), scalar_square(), scalar_timevarying(), riccati2(), quadratic(), cubic()]
}

/// `max|a − b| / max(1, max|b|)`
pub fn rel(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let d = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    d / b.iter().fold(1.0f64, |m, y| m.max(y.abs()))
}

/// Seeded `(ξ, h)` pairs, `ξ ∈ [−r, r]ⁿ`, `h ∈ [−1, 1]ⁿ`.
pub fn pairs(n: usize, count: usize, r: f64, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let xi = (0..n).map(|_| rng.gen_range(-r..=r)).collect();
            let h = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            (xi, h)
        })
        .collect()
}

//! Test functions with their domains, known constraints and certified minima.

use std::f64::consts::{E, PI};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::bo::Problem;
use crate::bounds::Bounds;
use crate::error::{Error, Result};
use crate::gp::{Dataset, KernelParams};
use crate::linalg::cholesky_with_jitter;
use crate::model::{KnownConstraint, LinearConstraint, Sense};

#[derive(Debug, Clone)]
pub struct BenchmarkFn {
    pub name: &'static str,
    pub bounds: Bounds,
    pub f: fn(&[f64]) -> f64,
    /// Constraints `g(x) (sense) rhs` over the input coordinates.
    pub constraints: Vec<KnownConstraint>,
    /// Global minimum value and a minimizer.
    pub reference_min: Option<(f64, Vec<f64>)>,
    /// A point satisfying every constraint.
    pub feasible_witness: Vec<f64>,
}

impl BenchmarkFn {
    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    /// Value at `x`; points outside the domain are rejected.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        for d in 0..self.dim() {
            let slack = 1e-9 * (1.0 + self.bounds.width(d));
            if x[d] < self.bounds.lower()[d] - slack || x[d] > self.bounds.upper()[d] + slack {
                return Err(Error::OutOfBounds { index: 0, coord: d });
            }
        }
        Ok((self.f)(x))
    }

    /// `f(x) + lambda * (sum of constraint violations)`.
    pub fn penalized(&self, x: &[f64], lambda: f64) -> Result<f64> {
        Ok(self.eval(x)? + lambda * self.constraints.iter().map(|c| c.violation(x)).sum::<f64>())
    }

    pub fn problem(&self) -> Problem {
        let f = self.f;
        let bounds = self.bounds.clone();
        Problem {
            objective: Arc::new(move |x: &[f64]| {
                if bounds.contains(x, 1e-9) {
                    Ok(f(x))
                } else {
                    Err(format!("point {x:?} outside the domain"))
                }
            }),
            bounds: self.bounds.clone(),
            known: self.constraints.clone(),
            known_optimum: self.reference_min.as_ref().map(|r| r.0),
        }
    }
}

/// Whether `x` satisfies every constraint within `tol`, and the largest
/// violation.
pub fn constraint_checker(bench: &BenchmarkFn, x: &[f64], tol: f64) -> (bool, f64) {
    let worst = bench.constraints.iter().map(|c| c.violation(x)).fold(0.0, f64::max);
    (worst <= tol, worst)
}

pub fn eval_bumpy(x: &[f64]) -> f64 {
    -(1..=6).map(|i| i as f64 * ((i as f64 + 1.0) * x[0] + i as f64).sin()).sum::<f64>()
}

pub fn eval_multimodal(x: &[f64]) -> f64 {
    x[0].sin() + (10.0 * x[0] / 3.0).sin()
}

pub fn eval_ackley(x: &[f64]) -> f64 {
    let sq = 0.5 * (x[0] * x[0] + x[1] * x[1]);
    let cs = 0.5 * ((2.0 * PI * x[0]).cos() + (2.0 * PI * x[1]).cos());
    -20.0 * (-0.2 * sq.sqrt()).exp() - cs.exp() + 20.0 + E
}

pub fn eval_branin(x: &[f64]) -> f64 {
    let (a, b, c, r, s, t) = (1.0, 5.1 / (4.0 * PI * PI), 5.0 / PI, 6.0, 10.0, 1.0 / (8.0 * PI));
    a * (x[1] - b * x[0] * x[0] + c * x[0] - r).powi(2) + s * (1.0 - t) * x[0].cos() + s
}

pub fn eval_rosenbrock(x: &[f64]) -> f64 {
    (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
}

pub const HARTMANN_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
pub const HARTMANN_A: [[f64; 3]; 4] = [[3.0, 10.0, 30.0], [0.1, 10.0, 35.0], [3.0, 10.0, 30.0], [0.1, 10.0, 35.0]];
pub const HARTMANN_P: [[f64; 3]; 4] = [
    [3689e-4, 1170e-4, 2673e-4],
    [4699e-4, 4387e-4, 7470e-4],
    [1091e-4, 8732e-4, 5547e-4],
    [381e-4, 5743e-4, 8828e-4],
];

pub fn eval_hartmann(x: &[f64]) -> f64 {
    -(0..4)
        .map(|i| {
            let e: f64 = (0..3).map(|j| HARTMANN_A[i][j] * (x[j] - HARTMANN_P[i][j]).powi(2)).sum();
            HARTMANN_ALPHA[i] * (-e).exp()
        })
        .sum::<f64>()
}

pub fn eval_michalewicz(x: &[f64]) -> f64 {
    -x.iter()
        .enumerate()
        .map(|(i, v)| v.sin() * ((i as f64 + 1.0) * v * v / PI).sin().powi(20))
        .sum::<f64>()
}

pub fn eval_ks224(x: &[f64]) -> f64 {
    2.0 * x[0] * x[0] + x[1] * x[1] - 48.0 * x[0] - 40.0 * x[1]
}

fn ks224_constraints() -> Vec<KnownConstraint> {
    let lin = |name: &str, a: f64, b: f64, rhs: f64| {
        KnownConstraint::Linear(LinearConstraint::new(name, vec![(0, a), (1, b)], Sense::Le, rhs))
    };
    vec![
        lin("ks224_c1", -1.0, -3.0, 0.0),
        lin("ks224_c2", 1.0, 3.0, 18.0),
        lin("ks224_c3", -1.0, -1.0, 0.0),
        lin("ks224_c4", 1.0, 1.0, 8.0),
    ]
}

fn boxed(lo: &[f64], hi: &[f64]) -> Bounds {
    Bounds::new(lo.to_vec(), hi.to_vec()).expect("valid benchmark box")
}

pub const NAMES: [&str; 8] = ["bumpy", "multimodal", "ackley", "branin", "rosenbrock", "hartmann3", "michalewicz5", "ks224"];

/// Looks a benchmark up by name (case-insensitive).
pub fn get(name: &str) -> Result<BenchmarkFn> {
    let plain = |name, bounds: Bounds, f, min: f64, arg: Vec<f64>, witness: Vec<f64>| BenchmarkFn {
        name,
        bounds,
        f,
        constraints: Vec::new(),
        reference_min: Some((min, arg)),
        feasible_witness: witness,
    };
    Ok(match name.to_ascii_lowercase().as_str() {
        "bumpy" => plain("bumpy", boxed(&[-10.0], &[10.0]), eval_bumpy, -16.532_194_721_073_317, vec![-0.558_099_787_101_745_2], vec![0.0]),
        "multimodal" => plain(
            "multimodal",
            boxed(&[-2.7], &[7.5]),
            eval_multimodal,
            -1.899_599_349_152_113_7,
            vec![5.145_735_286_583_931],
            vec![0.0],
        ),
        "ackley" => plain("ackley", boxed(&[-32.0, -32.0], &[16.0, 16.0]), eval_ackley, 0.0, vec![0.0, 0.0], vec![0.0, 0.0]),
        "branin" => plain(
            "branin",
            boxed(&[-5.0, 0.0], &[10.0, 15.0]),
            eval_branin,
            5.0 / (4.0 * PI),
            vec![PI, 2.275],
            vec![0.0, 0.0],
        ),
        "rosenbrock" => plain("rosenbrock", boxed(&[-2.0, -1.0], &[2.0, 3.0]), eval_rosenbrock, 0.0, vec![1.0, 1.0], vec![0.0, 0.0]),
        "hartmann3" | "hartmann" => plain(
            "hartmann3",
            Bounds::unit(3),
            eval_hartmann,
            -3.862_779_787_332_663,
            vec![0.114_588_875_168_986_15, 0.555_648_895_729_244_9, 0.852_546_983_420_541_7],
            vec![0.5; 3],
        ),
        "michalewicz5" | "michalewicz" => plain(
            "michalewicz5",
            boxed(&[0.0; 5], &[PI; 5]),
            eval_michalewicz,
            -4.687_658_179_088_149_5,
            vec![2.202_905_520_255_737_5, PI / 2.0, 1.284_991_571_436_434_8, 1.923_058_470_408_687_7, 1.720_469_772_536_909_4],
            vec![1.0; 5],
        ),
        "ks224" => BenchmarkFn {
            name: "ks224",
            bounds: boxed(&[0.0, 0.0], &[6.0, 6.0]),
            f: eval_ks224,
            constraints: ks224_constraints(),
            reference_min: Some((-304.0, vec![4.0, 4.0])),
            feasible_witness: vec![1.0, 1.0],
        },
        _ => return Err(Error::UnknownBenchmark(name.to_string())),
    })
}

/// `n` uniform inputs in the unit cube with targets drawn jointly from the
/// GP prior `N(0, K + noise I)`.
pub fn gp_prior_sample(dim: usize, n: usize, params: &KernelParams, seed: u64) -> Result<Dataset> {
    if dim == 0 || n == 0 {
        return Err(Error::InvalidInput("prior sample needs dim >= 1 and n >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect();
    let k = DMatrix::from_fn(n, n, |i, j| {
        params.kernel(&x[i], &x[j]) + if i == j { params.noise } else { 0.0 }
    });
    let (chol, _) = cholesky_with_jitter(&k)?;
    let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = chol.l() * z;
    Dataset::new(x, y.iter().copied().collect())
}

//! Least-squares fits of flood-time curves to the bound's functional forms.
//!
//! Both forms are linear in `c1`, so `c1` is solved in closed form for any
//! value of the remaining parameters and Nelder-Mead only searches over the
//! logarithms of those. Logarithms inside the forms are natural.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngSeed;

/// Multi-start count for the simplex search.
pub const STARTS: usize = 20;
/// Range of the log-uniform starting values.
pub const START_RANGE: (f64, f64) = (1e-3, 1e3);
/// Relative SS_res gap between the two best starts above which the fit is
/// reported as not converged.
pub const AGREEMENT_TOLERANCE: f64 = 0.01;
/// Bound on `|ln c|` for the searched parameters. Along flat directions of
/// the objective (a large `c3` is absorbed into `c1`) the simplex would
/// otherwise drift towards overflow.
pub const LOG_PARAM_BOUND: f64 = 30.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundForm {
    /// `c1 / M * ln(c2 M) * ln(c3 M)`, flood time against agent count.
    AgentSweep,
    /// `c1 * N^2 * (ln N + c2)`, flood time against grid side.
    GridSweep,
}

impl BoundForm {
    pub fn param_count(self) -> usize {
        match self {
            BoundForm::AgentSweep => 3,
            BoundForm::GridSweep => 2,
        }
    }

    /// Value of the form at `x` with parameters `c`.
    pub fn eval(self, c: &[f64], x: f64) -> f64 {
        c[0] * self.shape(&c[1..], x)
    }

    /// The form divided by `c1`.
    fn shape(self, rest: &[f64], x: f64) -> f64 {
        match self {
            BoundForm::AgentSweep => (rest[0] * x).ln() * (rest[1] * x).ln() / x,
            BoundForm::GridSweep => x * x * (x.ln() + rest[0]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub form: BoundForm,
    pub params: Vec<f64>,
    pub r_squared: f64,
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub points: Vec<(f64, f64)>,
}

impl FitResult {
    pub fn ss_res(&self) -> f64 {
        self.residuals.iter().map(|r| r * r).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RSquared {
    pub value: f64,
    /// Observations have zero total variance; `value` is then 0.
    pub zero_variance: bool,
}

/// Coefficient of determination `1 - SS_res / SS_tot`.
pub fn r_squared(observed: &[f64], predicted: &[f64]) -> Result<RSquared> {
    if observed.len() != predicted.len() || observed.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "r_squared needs two equal-length series of at least 2 values, got {} and {}",
            observed.len(),
            predicted.len()
        )));
    }
    let mean = observed.iter().sum::<f64>() / observed.len() as f64;
    let ss_tot: f64 = observed.iter().map(|o| (o - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Ok(RSquared {
            value: 0.0,
            zero_variance: true,
        });
    }
    let ss_res: f64 = observed
        .iter()
        .zip(predicted)
        .map(|(o, p)| (o - p).powi(2))
        .sum();
    Ok(RSquared {
        value: 1.0 - ss_res / ss_tot,
        zero_variance: false,
    })
}

fn unlog(z: &[f64]) -> Vec<f64> {
    z.iter()
        .map(|v| v.clamp(-LOG_PARAM_BOUND, LOG_PARAM_BOUND).exp())
        .collect()
}

/// Best `c1 > 0` for fixed remaining parameters, with its SS_res.
fn profile(form: BoundForm, rest: &[f64], points: &[(f64, f64)]) -> (f64, f64) {
    let (mut gy, mut gg) = (0.0, 0.0);
    for &(x, y) in points {
        let g = form.shape(rest, x);
        gy += g * y;
        gg += g * g;
    }
    let c1 = if gg > 0.0 && gy > 0.0 {
        gy / gg
    } else {
        f64::MIN_POSITIVE
    };
    let ss = points
        .iter()
        .map(|&(x, y)| (y - c1 * form.shape(rest, x)).powi(2))
        .sum::<f64>();
    (c1, if ss.is_finite() { ss } else { f64::INFINITY })
}

/// Nelder-Mead minimisation from `x0` with initial step `step`.
fn nelder_mead(
    f: &dyn Fn(&[f64]) -> f64,
    x0: &[f64],
    step: f64,
    max_evals: usize,
) -> (Vec<f64>, f64) {
    let d = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..d {
        let mut v = x0.to_vec();
        v[i] += step;
        simplex.push(v);
    }
    let mut vals: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    let mut evals = d + 1;
    while evals < max_evals {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let spread = (vals[d] - vals[0]).abs();
        let size = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread <= 1e-15 * vals[0].abs().max(1e-300) && size < 1e-10 {
            break;
        }
        if size < 1e-12 {
            break;
        }

        let centroid: Vec<f64> = (0..d)
            .map(|j| simplex[..d].iter().map(|v| v[j]).sum::<f64>() / d as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[d])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let xr = along(1.0);
        let fr = f(&xr);
        evals += 1;
        if fr < vals[0] {
            let xe = along(2.0);
            let fe = f(&xe);
            evals += 1;
            if fe < fr {
                simplex[d] = xe;
                vals[d] = fe;
            } else {
                simplex[d] = xr;
                vals[d] = fr;
            }
        } else if fr < vals[d - 1] {
            simplex[d] = xr;
            vals[d] = fr;
        } else {
            let (xc, fc) = if fr < vals[d] {
                let xc = along(0.5);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(-0.5);
                let fc = f(&xc);
                (xc, fc)
            };
            evals += 1;
            if fc < vals[d].min(fr) {
                simplex[d] = xc;
                vals[d] = fc;
            } else {
                for i in 1..=d {
                    let v: Vec<f64> = simplex[0]
                        .iter()
                        .zip(&simplex[i])
                        .map(|(b, x)| b + 0.5 * (x - b))
                        .collect();
                    vals[i] = f(&v);
                    simplex[i] = v;
                }
                evals += d;
            }
        }
    }
    let best = (0..=d)
        .min_by(|&a, &b| vals[a].total_cmp(&vals[b]))
        .unwrap();
    (simplex[best].clone(), vals[best])
}

/// Fits `form` to `points` (x, mean flood time) by multi-start Nelder-Mead.
pub fn fit_form(form: BoundForm, points: &[(f64, f64)], seed: RngSeed) -> Result<FitResult> {
    if points.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "fit needs at least 4 points, got {}",
            points.len()
        )));
    }
    for (i, &(x, y)) in points.iter().enumerate() {
        if !(x > 0.0 && x.is_finite() && y.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "point {i} ({x}, {y}): x must be positive and both values finite"
            )));
        }
        if points[..i].iter().any(|&(px, _)| px == x) {
            return Err(Error::InvalidConfig(format!("duplicate x value {x}")));
        }
    }
    let observed: Vec<f64> = points.iter().map(|p| p.1).collect();
    let free = form.param_count() - 1;
    let objective = |z: &[f64]| -> f64 { profile(form, &unlog(z), points).1 };

    let (lo, hi) = (START_RANGE.0.ln(), START_RANGE.1.ln());
    let mut runs: Vec<(usize, Vec<f64>, f64)> = (0..STARTS)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed.derive(&[i as u64]).rng();
            let z0: Vec<f64> = (0..free).map(|_| rng.random_range(lo..hi)).collect();
            let (z, _) = nelder_mead(&objective, &z0, 1.0, 4000);
            // restart at the optimum to escape a collapsed simplex
            let (z, v) = nelder_mead(&objective, &z, 0.1, 4000);
            (i, z, v)
        })
        .collect();
    runs.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)));

    let (_, z, ss1) = &runs[0];
    let rest = unlog(z);
    let (c1, _) = profile(form, &rest, points);
    let mut params = vec![c1];
    params.extend(&rest);
    let predicted: Vec<f64> = points.iter().map(|&(x, _)| form.eval(&params, x)).collect();
    let residuals: Vec<f64> = observed
        .iter()
        .zip(&predicted)
        .map(|(o, p)| o - p)
        .collect();
    let r2 = r_squared(&observed, &predicted)?;

    let mean = observed.iter().sum::<f64>() / observed.len() as f64;
    let ss_tot: f64 = observed.iter().map(|o| (o - mean).powi(2)).sum();
    let ss2 = runs[1].2;
    let agree = (ss2 - ss1).abs() <= AGREEMENT_TOLERANCE * ss1 + 1e-9 * ss_tot;
    Ok(FitResult {
        form,
        params,
        r_squared: r2.value,
        residuals,
        converged: agree && !r2.zero_variance && ss1.is_finite(),
        points: points.to_vec(),
    })
}

//! Equilibrium maps `x ↦ r*(x)` with `r* = σ(W r* + U x + c)`.
//!
//! The Jacobian of the equilibrium follows from implicit differentiation:
//! `J = (I − D W)^{-1} D U` with `D = diag σ'(W r* + U x + c)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{matrix_to_rows, rows_to_matrix, Activation, DifferentiableMap};
use crate::error::{Error, Result};
use crate::spd::check_dims;

const SINGULAR_CONDITION: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iter: usize,
    pub tol: f64,
    /// Initial Picard damping `α` in `r ← (1−α) r + α σ(W r + u)`.
    pub damping: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iter: 10_000,
            tol: 1e-12,
            damping: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixedPointSolution {
    pub state: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixedPointMap {
    recurrent: DMatrix<f64>,
    drive_weight: DMatrix<f64>,
    drive_bias: Vec<f64>,
    activation: Activation,
    solver: SolverConfig,
    contraction_bound: f64,
}

impl FixedPointMap {
    pub fn new(
        recurrent: DMatrix<f64>,
        drive_weight: DMatrix<f64>,
        drive_bias: Vec<f64>,
        activation: Activation,
        solver: SolverConfig,
    ) -> Result<Self> {
        let n = recurrent.nrows();
        check_dims(n, recurrent.ncols())?;
        check_dims(n, drive_weight.nrows())?;
        check_dims(n, drive_bias.len())?;
        if !(solver.tol > 0.0) || !(solver.damping > 0.0 && solver.damping <= 1.0) {
            return Err(Error::InvalidArgument(
                "solver needs tol > 0 and damping in (0, 1]".into(),
            ));
        }
        let op_norm = recurrent
            .clone()
            .svd(false, false)
            .singular_values
            .iter()
            .fold(0.0f64, |m, s| m.max(*s));
        Ok(Self {
            contraction_bound: op_norm * activation.max_slope(),
            recurrent,
            drive_weight,
            drive_bias,
            activation,
            solver,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.recurrent.nrows()
    }

    /// `‖W‖_op · sup|σ'|`; below one the Picard iteration is a contraction.
    pub fn contraction_bound(&self) -> f64 {
        self.contraction_bound
    }

    pub fn is_contractive(&self) -> bool {
        self.contraction_bound < 1.0
    }

    pub fn solver(&self) -> SolverConfig {
        self.solver
    }

    pub fn with_solver(mut self, solver: SolverConfig) -> Self {
        self.solver = solver;
        self
    }

    fn drive(&self, x: &[f64]) -> Result<DVector<f64>> {
        check_dims(self.drive_weight.ncols(), x.len())?;
        Ok(&self.drive_weight * DVector::from_column_slice(x) + DVector::from_column_slice(&self.drive_bias))
    }

    fn step(&self, r: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (&self.recurrent * r + u).map(|z| self.activation.value(z))
    }

    /// Damped Picard iteration from `r = 0`. The damping is halved whenever
    /// the residual grows.
    pub fn solve(&self, x: &[f64]) -> Result<FixedPointSolution> {
        let u = self.drive(x)?;
        let mut r = DVector::zeros(self.state_dim());
        let mut alpha = self.solver.damping;
        let mut image = self.step(&r, &u);
        let mut residual = (&image - &r).amax();
        for iteration in 0..self.solver.max_iter {
            if residual <= self.solver.tol {
                return Ok(FixedPointSolution {
                    state: r.iter().copied().collect(),
                    iterations: iteration,
                    residual,
                });
            }
            let candidate = &r * (1.0 - alpha) + &image * alpha;
            let candidate_image = self.step(&candidate, &u);
            let candidate_residual = (&candidate_image - &candidate).amax();
            if candidate_residual > residual && alpha > 1e-6 {
                alpha *= 0.5;
            }
            r = candidate;
            image = candidate_image;
            residual = candidate_residual;
        }
        if residual <= self.solver.tol {
            return Ok(FixedPointSolution {
                state: r.iter().copied().collect(),
                iterations: self.solver.max_iter,
                residual,
            });
        }
        Err(Error::NoConvergence {
            iterations: self.solver.max_iter,
            residual,
        })
    }

    /// `∂r*/∂x`, an `N×d` matrix.
    pub fn implicit_jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        check_dims(self.input_dim(), x.len())?;
        self.implicit_solve(x, &DMatrix::identity(x.len(), x.len()))
    }

    /// `(I − D W)^{-1} D U P` for a `d×k` matrix `P`.
    fn implicit_solve(&self, x: &[f64], p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dims(self.drive_weight.ncols(), p.nrows())?;
        let solution = self.solve(x)?;
        let u = self.drive(x)?;
        let r = DVector::from_vec(solution.state);
        let pre = &self.recurrent * r + u;
        let slopes: Vec<f64> = pre.iter().map(|&z| self.activation.derivative(z)).collect();
        let n = self.state_dim();

        let mut lhs = DMatrix::identity(n, n);
        let mut rhs = &self.drive_weight * p;
        for i in 0..n {
            for j in 0..n {
                lhs[(i, j)] -= slopes[i] * self.recurrent[(i, j)];
            }
            for j in 0..rhs.ncols() {
                rhs[(i, j)] *= slopes[i];
            }
        }

        let lu = lhs.clone().lu();
        let inverse = lu.try_inverse().ok_or(Error::SingularLinearization {
            condition: f64::INFINITY,
        })?;
        let condition = one_norm(&lhs) * one_norm(&inverse);
        if !condition.is_finite() || condition > SINGULAR_CONDITION {
            return Err(Error::SingularLinearization { condition });
        }
        lhs.lu()
            .solve(&rhs)
            .ok_or(Error::SingularLinearization { condition })
    }
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

impl DifferentiableMap for FixedPointMap {
    fn input_dim(&self) -> usize {
        self.drive_weight.ncols()
    }

    fn output_dim(&self) -> usize {
        self.state_dim()
    }

    fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.solve(x)?.state)
    }

    fn jvp(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        check_dims(self.input_dim(), v.len())?;
        let col = self.implicit_solve(x, &DMatrix::from_column_slice(v.len(), 1, v))?;
        Ok(col.iter().copied().collect())
    }

    fn jacobian_columns(&self, x: &[f64], basis: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.implicit_solve(x, basis)
    }
}

#[derive(Serialize, Deserialize)]
struct FixedPointRepr {
    #[serde(rename = "W")]
    recurrent: Vec<Vec<f64>>,
    #[serde(rename = "U")]
    drive_weight: Vec<Vec<f64>>,
    #[serde(rename = "c")]
    drive_bias: Vec<f64>,
    #[serde(rename = "fn")]
    activation: Activation,
    #[serde(default)]
    solver: Option<SolverConfig>,
}

impl Serialize for FixedPointMap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FixedPointRepr {
            recurrent: matrix_to_rows(&self.recurrent),
            drive_weight: matrix_to_rows(&self.drive_weight),
            drive_bias: self.drive_bias.clone(),
            activation: self.activation,
            solver: Some(self.solver),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for FixedPointMap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = FixedPointRepr::deserialize(d)?;
        let build = || -> Result<Self> {
            FixedPointMap::new(
                rows_to_matrix(&repr.recurrent)?,
                rows_to_matrix(&repr.drive_weight)?,
                repr.drive_bias.clone(),
                repr.activation,
                repr.solver.unwrap_or_default(),
            )
        };
        build().map_err(D::Error::custom)
    }
}

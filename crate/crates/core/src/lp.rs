//! Small linear-programming layer on top of `microlp`, indexed by plain `usize` variables.

use microlp::{ComparisonOp, OptimizationDirection, Problem, Variable};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("linear program solver failure: {0}")]
    Solver(String),
}

pub struct LinearProgram {
    problem: Problem,
    vars: Vec<Variable>,
}

pub struct LpSolution {
    pub objective: f64,
    pub values: Vec<f64>,
}

impl LinearProgram {
    pub fn minimize() -> Self {
        Self {
            problem: Problem::new(OptimizationDirection::Minimize),
            vars: Vec::new(),
        }
    }

    pub fn maximize() -> Self {
        Self {
            problem: Problem::new(OptimizationDirection::Maximize),
            vars: Vec::new(),
        }
    }

    pub fn var(&mut self, objective: f64, lower: f64, upper: f64) -> usize {
        self.vars
            .push(self.problem.add_var(objective, (lower, upper)));
        self.vars.len() - 1
    }

    pub fn nonneg(&mut self, objective: f64) -> usize {
        self.var(objective, 0.0, f64::INFINITY)
    }

    pub fn free(&mut self, objective: f64) -> usize {
        self.var(objective, f64::NEG_INFINITY, f64::INFINITY)
    }

    fn constraint(&mut self, terms: &[(usize, f64)], op: ComparisonOp, rhs: f64) {
        let expr: Vec<(Variable, f64)> = terms
            .iter()
            .filter(|(_, coef)| *coef != 0.0)
            .map(|&(v, coef)| (self.vars[v], coef))
            .collect();
        self.problem.add_constraint(expr.as_slice(), op, rhs);
    }

    pub fn eq(&mut self, terms: &[(usize, f64)], rhs: f64) {
        self.constraint(terms, ComparisonOp::Eq, rhs);
    }

    pub fn le(&mut self, terms: &[(usize, f64)], rhs: f64) {
        self.constraint(terms, ComparisonOp::Le, rhs);
    }

    pub fn ge(&mut self, terms: &[(usize, f64)], rhs: f64) {
        self.constraint(terms, ComparisonOp::Ge, rhs);
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        match self.problem.solve() {
            Ok(sol) => Ok(LpSolution {
                objective: sol.objective(),
                values: self.vars.iter().map(|v| *sol.var_value(*v)).collect(),
            }),
            Err(microlp::Error::Infeasible) => Err(LpError::Infeasible),
            Err(microlp::Error::Unbounded) => Err(LpError::Unbounded),
            Err(e) => Err(LpError::Solver(e.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_maximization() {
        // max x + y, x + 2y <= 4, 3x + y <= 6
        let mut lp = LinearProgram::maximize();
        let x = lp.nonneg(1.0);
        let y = lp.nonneg(1.0);
        lp.le(&[(x, 1.0), (y, 2.0)], 4.0);
        lp.le(&[(x, 3.0), (y, 1.0)], 6.0);
        let s = lp.solve().unwrap();
        assert!((s.objective - 2.8).abs() < 1e-12);
        assert!((s.values[0] - 1.6).abs() < 1e-12);
    }

    #[test]
    fn infeasible_is_reported() {
        let mut lp = LinearProgram::minimize();
        let x = lp.nonneg(1.0);
        lp.eq(&[(x, 1.0)], -1.0);
        assert_eq!(lp.solve().err(), Some(LpError::Infeasible));
    }
}

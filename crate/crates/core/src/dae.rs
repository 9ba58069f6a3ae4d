//! Semi-explicit index-1 DAE interface shared by the power-system model and
//! the small test systems used to check the numerical machinery.

use serde::{Deserialize, Serialize};

/// `x' = f(x, y, u)`, `0 = g(x, y, u)`, `z = h(x, y, u)`.
pub trait DaeModel {
    fn state_labels(&self) -> &[String];
    fn algebraic_labels(&self) -> &[String];
    fn input_labels(&self) -> &[String];
    fn output_labels(&self) -> &[String];

    /// Writes `f` (length n) and `g` (length m).
    fn residuals(&self, x: &[f64], y: &[f64], u: &[f64], f: &mut [f64], g: &mut [f64]);

    /// Output number `index` of [`DaeModel::output_labels`].
    fn output(&self, index: usize, x: &[f64], y: &[f64], u: &[f64]) -> f64;

    /// Names of non-smooth elements sitting on a limit at `(x, y, u)`.
    fn active_limiters(&self, _x: &[f64], _y: &[f64], _u: &[f64]) -> Vec<String> {
        Vec::new()
    }

    fn n_states(&self) -> usize {
        self.state_labels().len()
    }
    fn n_algebraic(&self) -> usize {
        self.algebraic_labels().len()
    }
    fn n_inputs(&self) -> usize {
        self.input_labels().len()
    }

    fn state_index(&self, label: &str) -> Option<usize> {
        self.state_labels().iter().position(|l| l == label)
    }
    fn input_index(&self, label: &str) -> Option<usize> {
        self.input_labels().iter().position(|l| l == label)
    }
    fn output_index(&self, label: &str) -> Option<usize> {
        self.output_labels().iter().position(|l| l == label)
    }

    /// Convenience allocation of both residual vectors.
    fn eval(&self, x: &[f64], y: &[f64], u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut f = vec![0.0; self.n_states()];
        let mut g = vec![0.0; self.n_algebraic()];
        self.residuals(x, y, u, &mut f, &mut g);
        (f, g)
    }
}

/// A point `(x, y, u)` of a [`DaeModel`], normally an equilibrium.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub u: Vec<f64>,
}

impl Equilibrium {
    /// Largest absolute entry of `f` and `g` at this point.
    pub fn residual_norm<D: DaeModel + ?Sized>(&self, dae: &D) -> f64 {
        let (f, g) = dae.eval(&self.x, &self.y, &self.u);
        crate::numeric::inf_norm(&f).max(crate::numeric::inf_norm(&g))
    }
}

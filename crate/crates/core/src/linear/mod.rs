//! Numerical linearisation of a DAE into a reduced state-space model.
//!
//! Jacobians are formed by central differences with step
//! `h_i = 1e-6 * max(1, |v_i|)` and the algebraic variables are eliminated by
//! a dense LU of `g_y`:
//!
//! ```text
//! A = f_x - f_y g_y^-1 g_x      B = f_u - f_y g_y^-1 g_u
//! C = h_x - h_y g_y^-1 g_x      D = h_u - h_y g_y^-1 g_u
//! ```

mod io;

use nalgebra::DMatrix;

use crate::dae::{DaeModel, Equilibrium};
use crate::error::{Error, Result};
use crate::grid::{DaeOptions, OperatingPoint, PowerSystemDae, PowerSystemModel};

pub use io::{read_state_space, write_state_space};

/// Relative finite-difference step.
pub const FD_STEP: f64 = 1e-6;

/// An equilibrium with a residual above this is refused.
pub const EQUILIBRIUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub state_labels: Vec<String>,
    pub input_labels: Vec<String>,
    pub output_labels: Vec<String>,
}

impl StateSpaceModel {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        state_labels: Vec<String>,
        input_labels: Vec<String>,
        output_labels: Vec<String>,
    ) -> Result<Self> {
        let ss = Self { a, b, c, d, state_labels, input_labels, output_labels };
        ss.validate()?;
        Ok(ss)
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, r, s) = (self.state_labels.len(), self.input_labels.len(), self.output_labels.len());
        let dims_ok = self.a.shape() == (n, n)
            && self.b.shape() == (n, r)
            && self.c.shape() == (s, n)
            && self.d.shape() == (s, r);
        if !dims_ok {
            return Err(Error::Dimension(format!(
                "A {:?}, B {:?}, C {:?}, D {:?} inconsistent with {n} states, {r} inputs, {s} outputs",
                self.a.shape(),
                self.b.shape(),
                self.c.shape(),
                self.d.shape()
            )));
        }
        for labels in [&self.state_labels, &self.input_labels, &self.output_labels] {
            for (i, l) in labels.iter().enumerate() {
                if labels[..i].contains(l) {
                    return Err(Error::Dimension(format!("duplicate label `{l}`")));
                }
            }
        }
        Ok(())
    }

    pub fn input_index(&self, label: &str) -> Result<usize> {
        self.input_labels.iter().position(|l| l == label).ok_or_else(|| Error::UnknownLabel(label.into()))
    }

    pub fn output_index(&self, label: &str) -> Result<usize> {
        self.output_labels.iter().position(|l| l == label).ok_or_else(|| Error::UnknownLabel(label.into()))
    }

    pub fn state_index(&self, label: &str) -> Option<usize> {
        self.state_labels.iter().position(|l| l == label)
    }

    /// Column of B, row of C and the feedthrough for one input/output pair.
    pub fn siso(&self, input: &str, output: &str) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        let (i, o) = (self.input_index(input)?, self.output_index(output)?);
        Ok((self.b.column(i).iter().copied().collect(), self.c.row(o).iter().copied().collect(), self.d[(o, i)]))
    }
}

/// All partial derivatives of `f`, `g` and the selected outputs.
#[derive(Debug, Clone)]
pub struct Jacobians {
    pub fx: DMatrix<f64>,
    pub fy: DMatrix<f64>,
    pub fu: DMatrix<f64>,
    pub gx: DMatrix<f64>,
    pub gy: DMatrix<f64>,
    pub gu: DMatrix<f64>,
    pub hx: DMatrix<f64>,
    pub hy: DMatrix<f64>,
    pub hu: DMatrix<f64>,
}

fn step(value: f64, scale: f64) -> f64 {
    scale * value.abs().max(1.0)
}

/// Central-difference Jacobians with relative step `step_scale`.
pub fn jacobians<D: DaeModel + ?Sized>(
    dae: &D,
    eq: &Equilibrium,
    inputs: &[usize],
    outputs: &[usize],
    step_scale: f64,
) -> Jacobians {
    let (n, m) = (dae.n_states(), dae.n_algebraic());
    let (r, s) = (inputs.len(), outputs.len());
    let mut jac = Jacobians {
        fx: DMatrix::zeros(n, n),
        fy: DMatrix::zeros(n, m),
        fu: DMatrix::zeros(n, r),
        gx: DMatrix::zeros(m, n),
        gy: DMatrix::zeros(m, m),
        gu: DMatrix::zeros(m, r),
        hx: DMatrix::zeros(s, n),
        hy: DMatrix::zeros(s, m),
        hu: DMatrix::zeros(s, r),
    };
    let mut fp = vec![0.0; n];
    let mut gp = vec![0.0; m];
    let mut fm = vec![0.0; n];
    let mut gm = vec![0.0; m];
    let (mut x, mut y, mut u) = (eq.x.clone(), eq.y.clone(), eq.u.clone());

    // `which`: 0 = state, 1 = algebraic, 2 = input
    let mut column = |which: usize, idx: usize, col: usize, x: &mut Vec<f64>, y: &mut Vec<f64>, u: &mut Vec<f64>| {
        let var: &mut f64 = match which {
            0 => &mut x[idx],
            1 => &mut y[idx],
            _ => &mut u[idx],
        };
        let base = *var;
        let h = step(base, step_scale);
        *var = base + h;
        dae.residuals(x, y, u, &mut fp, &mut gp);
        let hp: Vec<f64> = outputs.iter().map(|&o| dae.output(o, x, y, u)).collect();
        let var: &mut f64 = match which {
            0 => &mut x[idx],
            1 => &mut y[idx],
            _ => &mut u[idx],
        };
        *var = base - h;
        dae.residuals(x, y, u, &mut fm, &mut gm);
        let hm: Vec<f64> = outputs.iter().map(|&o| dae.output(o, x, y, u)).collect();
        let var: &mut f64 = match which {
            0 => &mut x[idx],
            1 => &mut y[idx],
            _ => &mut u[idx],
        };
        *var = base;
        let (fcol, gcol, hcol) = match which {
            0 => (&mut jac.fx, &mut jac.gx, &mut jac.hx),
            1 => (&mut jac.fy, &mut jac.gy, &mut jac.hy),
            _ => (&mut jac.fu, &mut jac.gu, &mut jac.hu),
        };
        for i in 0..n {
            fcol[(i, col)] = (fp[i] - fm[i]) / (2.0 * h);
        }
        for i in 0..m {
            gcol[(i, col)] = (gp[i] - gm[i]) / (2.0 * h);
        }
        for i in 0..s {
            hcol[(i, col)] = (hp[i] - hm[i]) / (2.0 * h);
        }
    };
    for j in 0..n {
        column(0, j, j, &mut x, &mut y, &mut u);
    }
    for j in 0..m {
        column(1, j, j, &mut x, &mut y, &mut u);
    }
    for (c, &j) in inputs.iter().enumerate() {
        column(2, j, c, &mut x, &mut y, &mut u);
    }
    jac
}

/// Eliminates the algebraic variables.
pub fn reduce(
    jac: &Jacobians,
    state_labels: Vec<String>,
    input_labels: Vec<String>,
    output_labels: Vec<String>,
    algebraic_labels: &[String],
) -> Result<StateSpaceModel> {
    let m = jac.gy.nrows();
    if m == 0 {
        return StateSpaceModel::new(
            jac.fx.clone(),
            jac.fu.clone(),
            jac.hx.clone(),
            jac.hu.clone(),
            state_labels,
            input_labels,
            output_labels,
        );
    }
    let singular = || {
        let svd = jac.gy.clone().svd(false, true);
        let k = svd.singular_values.imin();
        let vt = svd.v_t.as_ref().unwrap();
        let row = vt.row(k);
        let peak = row.amax();
        let names: Vec<String> = (0..m)
            .filter(|&i| row[i].abs() >= 0.1 * peak)
            .map(|i| algebraic_labels.get(i).cloned().unwrap_or_else(|| format!("y[{i}]")))
            .collect();
        Error::SingularAlgebraic(names.join(", "))
    };
    let svals = jac.gy.singular_values();
    if svals.min() <= 1e-12 * svals.max().max(1.0) {
        return Err(singular());
    }
    let lu = jac.gy.clone().lu();
    let gx_s = lu.solve(&jac.gx).ok_or_else(singular)?;
    let gu_s = lu.solve(&jac.gu).ok_or_else(singular)?;
    let a = &jac.fx - &jac.fy * &gx_s;
    let b = &jac.fu - &jac.fy * &gu_s;
    let c = &jac.hx - &jac.hy * &gx_s;
    let d = &jac.hu - &jac.hy * &gu_s;
    StateSpaceModel::new(a, b, c, d, state_labels, input_labels, output_labels)
}

fn resolve(labels: &[&str], lookup: impl Fn(&str) -> Option<usize>) -> Result<Vec<usize>> {
    labels.iter().map(|l| lookup(l).ok_or_else(|| Error::UnknownLabel((*l).to_string()))).collect()
}

/// Linearises any DAE at `eq` with the default step.
pub fn linearize_dae<D: DaeModel + ?Sized>(
    dae: &D,
    eq: &Equilibrium,
    inputs: &[&str],
    outputs: &[&str],
) -> Result<StateSpaceModel> {
    linearize_dae_with_step(dae, eq, inputs, outputs, FD_STEP)
}

pub fn linearize_dae_with_step<D: DaeModel + ?Sized>(
    dae: &D,
    eq: &Equilibrium,
    inputs: &[&str],
    outputs: &[&str],
    step_scale: f64,
) -> Result<StateSpaceModel> {
    if eq.x.len() != dae.n_states() || eq.y.len() != dae.n_algebraic() || eq.u.len() != dae.n_inputs() {
        return Err(Error::Dimension("equilibrium vectors do not match the model".into()));
    }
    let inputs_idx = resolve(inputs, |l| dae.input_index(l))?;
    let outputs_idx = resolve(outputs, |l| dae.output_index(l))?;
    let residual = eq.residual_norm(dae);
    if !(residual <= EQUILIBRIUM_TOLERANCE) {
        return Err(Error::NotEquilibrium(residual));
    }
    let active = dae.active_limiters(&eq.x, &eq.y, &eq.u);
    if !active.is_empty() {
        return Err(Error::LimiterActive(active.join(", ")));
    }
    let jac = jacobians(dae, eq, &inputs_idx, &outputs_idx, step_scale);
    reduce(
        &jac,
        dae.state_labels().to_vec(),
        inputs.iter().map(|s| s.to_string()).collect(),
        outputs.iter().map(|s| s.to_string()).collect(),
        dae.algebraic_labels(),
    )
}

/// Linearises the power-system model at its operating point.
pub fn linearize(
    model: &PowerSystemModel,
    op: &OperatingPoint,
    inputs: &[&str],
    outputs: &[&str],
) -> Result<StateSpaceModel> {
    let (dae, eq) = PowerSystemDae::new(model, op, DaeOptions { ignore_limits: true, ..Default::default() })?;
    linearize_dae(&dae, &eq, inputs, outputs)
}

/// `V_ref -> P` model of `gen` with every rotor angle and speed held fixed.
pub fn frozen_shaft_linearize(model: &PowerSystemModel, op: &OperatingPoint, gen: &str) -> Result<StateSpaceModel> {
    let k = model
        .machine_index(gen)
        .ok_or_else(|| Error::InvalidModel(format!("{gen} is not a synchronous machine")))?;
    if model.machines[k].avr.is_none() {
        return Err(Error::InvalidModel(format!("{gen} has no exciter")));
    }
    let (dae, eq) = PowerSystemDae::new(model, op, DaeOptions { frozen_shaft: true, ignore_limits: true })?;
    let input = format!("{gen}.vref");
    let output = format!("{gen}.P");
    linearize_dae(&dae, &eq, &[&input], &[&output])
}

#[cfg(test)]
mod tests {
    use super::*;

    /// x' = A x + B u + E y, 0 = y - (G x + H u), z = C x + D u + F y
    struct LinearDae {
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        e: DMatrix<f64>,
        g: DMatrix<f64>,
        h: DMatrix<f64>,
        f: DMatrix<f64>,
        labels: [Vec<String>; 4],
    }

    impl LinearDae {
        fn new() -> Self {
            let a = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, -3.0, -0.5]);
            let b = DMatrix::from_row_slice(2, 1, &[1.0, 0.25]);
            let c = DMatrix::from_row_slice(1, 2, &[0.5, -1.0]);
            let d = DMatrix::from_row_slice(1, 1, &[0.1]);
            let e = DMatrix::from_row_slice(2, 1, &[0.3, -0.2]);
            let g = DMatrix::from_row_slice(1, 2, &[1.5, 0.7]);
            let h = DMatrix::from_row_slice(1, 1, &[-0.4]);
            let f = DMatrix::from_row_slice(1, 1, &[2.0]);
            let labels = [
                vec!["x1".into(), "x2".into()],
                vec!["y1".into()],
                vec!["u1".into()],
                vec!["z1".into()],
            ];
            Self { a, b, c, d, e, g, h, f, labels }
        }
        fn expected(&self) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
            (
                &self.a + &self.e * &self.g,
                &self.b + &self.e * &self.h,
                &self.c + &self.f * &self.g,
                &self.d + &self.f * &self.h,
            )
        }
    }

    impl DaeModel for LinearDae {
        fn state_labels(&self) -> &[String] {
            &self.labels[0]
        }
        fn algebraic_labels(&self) -> &[String] {
            &self.labels[1]
        }
        fn input_labels(&self) -> &[String] {
            &self.labels[2]
        }
        fn output_labels(&self) -> &[String] {
            &self.labels[3]
        }
        fn residuals(&self, x: &[f64], y: &[f64], u: &[f64], f: &mut [f64], g: &mut [f64]) {
            let (xv, yv, uv) =
                (DMatrix::from_column_slice(2, 1, x), DMatrix::from_column_slice(1, 1, y), DMatrix::from_column_slice(1, 1, u));
            let fx = &self.a * &xv + &self.b * &uv + &self.e * &yv;
            let gx = &yv - (&self.g * &xv + &self.h * &uv);
            f.copy_from_slice(fx.as_slice());
            g.copy_from_slice(gx.as_slice());
        }
        fn output(&self, _: usize, x: &[f64], y: &[f64], u: &[f64]) -> f64 {
            self.c[(0, 0)] * x[0] + self.c[(0, 1)] * x[1] + self.d[(0, 0)] * u[0] + self.f[(0, 0)] * y[0]
        }
    }

    #[test]
    fn linear_dae_is_recovered_exactly() {
        let dae = LinearDae::new();
        let eq = Equilibrium { x: vec![0.0, 0.0], y: vec![0.0], u: vec![0.0] };
        let ss = linearize_dae(&dae, &eq, &["u1"], &["z1"]).unwrap();
        let (a, b, c, d) = dae.expected();
        assert!((ss.a - a).amax() < 1e-9);
        assert!((ss.b - b).amax() < 1e-9);
        assert!((ss.c - c).amax() < 1e-9);
        assert!((ss.d - d).amax() < 1e-9);
    }

    #[test]
    fn unknown_label_is_rejected() {
        let dae = LinearDae::new();
        let eq = Equilibrium { x: vec![0.0, 0.0], y: vec![0.0], u: vec![0.0] };
        assert!(matches!(linearize_dae(&dae, &eq, &["nope"], &["z1"]), Err(Error::UnknownLabel(_))));
    }

    #[test]
    fn non_equilibrium_is_refused() {
        let dae = LinearDae::new();
        let eq = Equilibrium { x: vec![1.0, 0.0], y: vec![1.5], u: vec![0.0] };
        assert!(matches!(linearize_dae(&dae, &eq, &["u1"], &["z1"]), Err(Error::NotEquilibrium(_))));
    }

    #[test]
    fn singular_algebraic_block_is_named() {
        let mut dae = LinearDae::new();
        // 0 = 0*y - G x: g_y vanishes
        struct Degenerate(LinearDae);
        impl DaeModel for Degenerate {
            fn state_labels(&self) -> &[String] {
                self.0.state_labels()
            }
            fn algebraic_labels(&self) -> &[String] {
                self.0.algebraic_labels()
            }
            fn input_labels(&self) -> &[String] {
                self.0.input_labels()
            }
            fn output_labels(&self) -> &[String] {
                self.0.output_labels()
            }
            fn residuals(&self, x: &[f64], y: &[f64], u: &[f64], f: &mut [f64], g: &mut [f64]) {
                self.0.residuals(x, y, u, f, g);
                g[0] -= y[0];
            }
            fn output(&self, i: usize, x: &[f64], y: &[f64], u: &[f64]) -> f64 {
                self.0.output(i, x, y, u)
            }
        }
        dae.labels[1] = vec!["V_bus9".into()];
        let dae = Degenerate(dae);
        let eq = Equilibrium { x: vec![0.0, 0.0], y: vec![0.0], u: vec![0.0] };
        match linearize_dae(&dae, &eq, &["u1"], &["z1"]) {
            Err(Error::SingularAlgebraic(s)) => assert!(s.contains("V_bus9")),
            other => panic!("{other:?}"),
        }
    }
}

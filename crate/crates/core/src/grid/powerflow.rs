//! Full Newton power flow in polar coordinates from a flat start.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::model::{BusKind, PowerSystemModel};
use crate::error::{Error, Result};

pub const PF_TOLERANCE: f64 = 1e-10;
pub const PF_MAX_ITER: usize = 50;

/// Bus admittance matrix including line charging and shunt banks.
pub fn admittance_matrix(model: &PowerSystemModel) -> DMatrix<Complex64> {
    let n = model.buses.len();
    let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for br in &model.branches {
        let (i, j) = (model.bus_index(br.from_bus).unwrap(), model.bus_index(br.to_bus).unwrap());
        let ys = 1.0 / Complex64::new(br.r, br.x);
        let ysh = Complex64::new(0.0, br.b / 2.0);
        y[(i, i)] += ys + ysh;
        y[(j, j)] += ys + ysh;
        y[(i, j)] -= ys;
        y[(j, i)] -= ys;
    }
    for (i, b) in model.buses.iter().enumerate() {
        y[(i, i)] += Complex64::new(0.0, b.shunt_susceptance);
    }
    y
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceInjection {
    pub id: String,
    pub bus: u32,
    pub p: f64,
    pub q: f64,
}

/// Solved steady state of the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub bus_ids: Vec<u32>,
    pub vm: Vec<f64>,
    pub va: Vec<f64>,
    /// Net injected power per bus (generation minus load).
    pub p_inj: Vec<f64>,
    pub q_inj: Vec<f64>,
    pub devices: Vec<DeviceInjection>,
    pub iterations: usize,
    pub mismatch: f64,
}

impl OperatingPoint {
    pub fn voltage(&self, idx: usize) -> Complex64 {
        Complex64::from_polar(self.vm[idx], self.va[idx])
    }

    pub fn device(&self, id: &str) -> Option<&DeviceInjection> {
        self.devices.iter().find(|d| d.id == id)
    }

    /// Active power flowing from `from` towards `to` summed over all parallel
    /// branches between the two buses.
    pub fn branch_flow(&self, model: &PowerSystemModel, from: u32, to: u32) -> f64 {
        let (i, j) = match (model.bus_index(from), model.bus_index(to)) {
            (Some(i), Some(j)) => (i, j),
            _ => return 0.0,
        };
        let (vi, vj) = (self.voltage(i), self.voltage(j));
        model
            .branches
            .iter()
            .filter(|br| (br.from_bus, br.to_bus) == (from, to) || (br.from_bus, br.to_bus) == (to, from))
            .map(|br| {
                let ys = 1.0 / Complex64::new(br.r, br.x);
                let cur = (vi - vj) * ys + Complex64::new(0.0, br.b / 2.0) * vi;
                (vi * cur.conj()).re
            })
            .sum()
    }
}

fn calc_injections(y: &DMatrix<Complex64>, vm: &[f64], va: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = vm.len();
    let v: Vec<Complex64> = (0..n).map(|i| Complex64::from_polar(vm[i], va[i])).collect();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for i in 0..n {
        let mut cur = Complex64::new(0.0, 0.0);
        for k in 0..n {
            cur += y[(i, k)] * v[k];
        }
        let s = v[i] * cur.conj();
        p[i] = s.re;
        q[i] = s.im;
    }
    (p, q)
}

/// Solves the power flow. Loads are held at their nominal power; devices at
/// PV buses inject their dispatch and whatever reactive power holds voltage.
pub fn solve_power_flow(model: &PowerSystemModel) -> Result<OperatingPoint> {
    model.validate()?;
    let n = model.buses.len();
    let y = admittance_matrix(model);

    let mut p_spec = vec![0.0; n];
    let mut q_spec = vec![0.0; n];
    for m in &model.machines {
        p_spec[model.bus_index(m.bus).unwrap()] += m.p_set;
    }
    for c in &model.converters {
        p_spec[model.bus_index(c.bus).unwrap()] += c.p_set;
    }
    for l in &model.loads {
        let i = model.bus_index(l.bus).unwrap();
        p_spec[i] -= l.p * l.scale_factor;
        q_spec[i] -= l.q * l.scale_factor;
    }

    // Flat start with slack angle and PV magnitudes.
    let slack_angle = model.buses.iter().find(|b| b.kind == BusKind::Slack).unwrap().voltage_angle;
    let mut vm: Vec<f64> =
        model.buses.iter().map(|b| if b.kind == BusKind::Pq { 1.0 } else { b.voltage_magnitude }).collect();
    let mut va = vec![slack_angle; n];

    let ang_idx: Vec<usize> = (0..n).filter(|&i| model.buses[i].kind != BusKind::Slack).collect();
    let mag_idx: Vec<usize> = (0..n).filter(|&i| model.buses[i].kind == BusKind::Pq).collect();
    let nv = ang_idx.len() + mag_idx.len();

    let mismatch = |vm: &[f64], va: &[f64]| -> (DVector<f64>, f64) {
        let (pc, qc) = calc_injections(&y, vm, va);
        let mut f = DVector::zeros(nv);
        for (r, &i) in ang_idx.iter().enumerate() {
            f[r] = p_spec[i] - pc[i];
        }
        for (r, &i) in mag_idx.iter().enumerate() {
            f[ang_idx.len() + r] = q_spec[i] - qc[i];
        }
        let norm = f.amax();
        (f, norm)
    };

    let mut iterations = 0;
    let (mut f, mut norm) = mismatch(&vm, &va);
    while norm > PF_TOLERANCE {
        if iterations == PF_MAX_ITER {
            return Err(Error::PowerFlowDiverged { iterations, mismatch: norm });
        }
        let jac = jacobian(&y, &vm, &va, &ang_idx, &mag_idx);
        let lu = jac.clone().lu();
        let dx = match lu.solve(&f) {
            Some(dx) if dx.iter().all(|v| v.is_finite()) => dx,
            _ => {
                let u = lu.u();
                let scale = jac.amax().max(1.0);
                let col = (0..nv).find(|&k| u[(k, k)].abs() <= 1e-12 * scale).unwrap_or(0);
                let bus = if col < ang_idx.len() { ang_idx[col] } else { mag_idx[col - ang_idx.len()] };
                return Err(Error::SingularJacobian { bus: model.buses[bus].id });
            }
        };
        for (r, &i) in ang_idx.iter().enumerate() {
            va[i] += dx[r];
        }
        for (r, &i) in mag_idx.iter().enumerate() {
            vm[i] += dx[ang_idx.len() + r];
        }
        iterations += 1;
        (f, norm) = mismatch(&vm, &va);
        if !norm.is_finite() {
            return Err(Error::PowerFlowDiverged { iterations, mismatch: norm });
        }
    }

    let (p_inj, q_inj) = calc_injections(&y, &vm, &va);
    let mut devices = Vec::new();
    let mut push = |id: &str, bus: u32, p_set: f64| {
        let i = model.bus_index(bus).unwrap();
        let (p, q) = match model.buses[i].kind {
            BusKind::Pq => (p_set, 0.0),
            kind => {
                let load_p: f64 =
                    model.loads.iter().filter(|l| l.bus == bus).map(|l| l.p * l.scale_factor).sum();
                let load_q: f64 =
                    model.loads.iter().filter(|l| l.bus == bus).map(|l| l.q * l.scale_factor).sum();
                let p = if kind == BusKind::Slack { p_inj[i] + load_p } else { p_set };
                (p, q_inj[i] + load_q)
            }
        };
        devices.push(DeviceInjection { id: id.into(), bus, p, q });
    };
    for m in &model.machines {
        push(&m.id, m.bus, m.p_set);
    }
    for c in &model.converters {
        push(&c.id, c.bus, c.p_set);
    }
    for (k, d) in devices.iter().enumerate() {
        let shared = devices.iter().skip(k + 1).any(|o| o.bus == d.bus);
        let kind = model.buses[model.bus_index(d.bus).unwrap()].kind;
        if shared && kind != BusKind::Pq {
            return Err(Error::InvalidModel(format!("more than one voltage-controlling device at bus {}", d.bus)));
        }
    }

    Ok(OperatingPoint {
        bus_ids: model.buses.iter().map(|b| b.id).collect(),
        vm,
        va,
        p_inj,
        q_inj,
        devices,
        iterations,
        mismatch: norm,
    })
}

fn jacobian(
    y: &DMatrix<Complex64>,
    vm: &[f64],
    va: &[f64],
    ang_idx: &[usize],
    mag_idx: &[usize],
) -> DMatrix<f64> {
    let n = vm.len();
    let (pc, qc) = calc_injections(y, vm, va);
    // dP_i/dth_k, dP_i/dV_k, dQ_i/dth_k, dQ_i/dV_k
    let d = |i: usize, k: usize| -> (f64, f64, f64, f64) {
        let (g, b) = (y[(i, k)].re, y[(i, k)].im);
        if i == k {
            let dp_dth = -qc[i] - b * vm[i] * vm[i];
            let dp_dv = pc[i] / vm[i] + g * vm[i];
            let dq_dth = pc[i] - g * vm[i] * vm[i];
            let dq_dv = qc[i] / vm[i] - b * vm[i];
            (dp_dth, dp_dv, dq_dth, dq_dv)
        } else {
            let th = va[i] - va[k];
            let (s, c) = th.sin_cos();
            let dp_dth = vm[i] * vm[k] * (g * s - b * c);
            let dp_dv = vm[i] * (g * c + b * s);
            let dq_dth = -vm[i] * vm[k] * (g * c + b * s);
            let dq_dv = vm[i] * (g * s - b * c);
            (dp_dth, dp_dv, dq_dth, dq_dv)
        }
    };
    let na = ang_idx.len();
    let nv = na + mag_idx.len();
    let mut j = DMatrix::zeros(nv, nv);
    let _ = n;
    for (r, &i) in ang_idx.iter().enumerate() {
        for (c, &k) in ang_idx.iter().enumerate() {
            j[(r, c)] = d(i, k).0;
        }
        for (c, &k) in mag_idx.iter().enumerate() {
            j[(r, na + c)] = d(i, k).1;
        }
    }
    for (r, &i) in mag_idx.iter().enumerate() {
        for (c, &k) in ang_idx.iter().enumerate() {
            j[(na + r, c)] = d(i, k).2;
        }
        for (c, &k) in mag_idx.iter().enumerate() {
            j[(na + r, na + c)] = d(i, k).3;
        }
    }
    j
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::model::*;

    fn two_bus(load_p: f64, x: f64) -> PowerSystemModel {
        PowerSystemModel {
            name: "two-bus".into(),
            base_mva: 100.0,
            frequency_hz: 60.0,
            buses: vec![
                Bus { id: 1, kind: BusKind::Slack, voltage_magnitude: 1.0, voltage_angle: 0.0, shunt_susceptance: 0.0, area: 1 },
                Bus { id: 2, kind: BusKind::Pq, voltage_magnitude: 1.0, voltage_angle: 0.0, shunt_susceptance: 0.0, area: 1 },
            ],
            branches: vec![Branch { from_bus: 1, to_bus: 2, r: 0.0, x, b: 0.0 }],
            loads: vec![Load { bus: 2, p: load_p, q: 0.0, scale_factor: 1.0 }],
            machines: vec![],
            converters: vec![],
        }
    }

    #[test]
    fn unloaded_two_bus_is_flat() {
        let op = solve_power_flow(&two_bus(0.0, 0.1)).unwrap();
        assert_eq!(op.vm, vec![1.0, 1.0]);
        assert_eq!(op.va, vec![0.0, 0.0]);
        assert!(op.p_inj.iter().all(|p| p.abs() < 1e-12));
    }

    /// Gauss-Seidel on V2 = (S2*/V2* - Y21 V1) / Y22.
    fn gauss_seidel_v2(load_p: f64, x: f64) -> Complex64 {
        let y = 1.0 / Complex64::new(0.0, x);
        let (y22, y21) = (y, -y);
        let v1 = Complex64::new(1.0, 0.0);
        let s2 = Complex64::new(-load_p, 0.0);
        let mut v2 = Complex64::new(1.0, 0.0);
        for _ in 0..10_000 {
            let next = (s2.conj() / v2.conj() - y21 * v1) / y22;
            if (next - v2).norm() < 1e-15 {
                v2 = next;
                break;
            }
            v2 = next;
        }
        v2
    }

    #[test]
    fn two_bus_matches_gauss_seidel() {
        let op = solve_power_flow(&two_bus(1.0, 0.1)).unwrap();
        let gs = gauss_seidel_v2(1.0, 0.1);
        assert!((op.voltage(1) - gs).norm() < 1e-6, "{:?} vs {gs}", op.voltage(1));
        assert!(op.mismatch <= 1e-8);
    }

    #[test]
    fn overloaded_line_does_not_converge() {
        // Maximum transfer over x = 0.1 at unity voltage is 5 pu.
        match solve_power_flow(&two_bus(20.0, 0.1)) {
            Err(Error::PowerFlowDiverged { .. }) | Err(Error::SingularJacobian { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn islanded_bus_names_the_bus() {
        let mut m = two_bus(0.5, 0.1);
        m.buses.push(Bus { id: 7, kind: BusKind::Pq, voltage_magnitude: 1.0, voltage_angle: 0.0, shunt_susceptance: 0.0, area: 1 });
        match solve_power_flow(&m) {
            Err(Error::SingularJacobian { bus }) => assert_eq!(bus, 7),
            other => panic!("expected singular jacobian, got {other:?}"),
        }
    }
}

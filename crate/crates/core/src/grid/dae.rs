//! Nonlinear DAE of a [`PowerSystemModel`] and its steady-state initialisation.
//!
//! Algebraic variables are the rectangular bus voltages. The network frame
//! rotates with the first synchronous machine (the reference machine), whose
//! rotor angle is therefore a constant rather than a state; this removes the
//! structural zero eigenvalue of the angle reference.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::model::{Governor, PowerSystemModel, PssParams};
use super::powerflow::{admittance_matrix, OperatingPoint};
use crate::dae::{DaeModel, Equilibrium};
use crate::error::{Error, Result};

/// Limiter detection margin used for the operating-point check.
const LIMIT_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DaeOptions {
    /// Hold every rotor angle and speed at its operating-point value and drop
    /// the shaft states from the state vector.
    pub frozen_shaft: bool,
    /// Evaluate every limiter on its linear branch. Used for linearisation,
    /// where the limiters are inactive but finite-difference probes could
    /// otherwise cross them.
    pub ignore_limits: bool,
}

#[derive(Debug, Clone)]
struct MachineSlots {
    bus: usize,
    scale: f64,
    delta: Option<usize>,
    dw: Option<usize>,
    eqp: usize,
    edp: usize,
    eqpp: usize,
    edpp: usize,
    vm: Option<usize>,
    tgr: Option<usize>,
    pv: Option<usize>,
    rh: Option<usize>,
    pss_w: Option<usize>,
    pss_1: Option<usize>,
    pss_2: Option<usize>,
    u_vref: Option<usize>,
    u_pref: usize,
    delta0: f64,
    efd0: f64,
    gamma_d: f64,
    gamma_q: f64,
}

#[derive(Debug, Clone)]
struct ConverterSlots {
    bus: usize,
    scale: f64,
    theta: usize,
    xpll: usize,
    xp: usize,
    xq: usize,
    id: usize,
    iq: usize,
    u_pset: usize,
    u_qset: usize,
    v_set: f64,
    t_current: f64,
}

#[derive(Debug, Clone)]
struct LoadSlots {
    bus: usize,
    u_scale: usize,
    v0: f64,
}

#[derive(Debug, Clone, Copy)]
enum OutputKind {
    MachineSpeed(usize),
    MachineAngle(usize),
    MachineP(usize),
    MachineQ(usize),
    MachineV(usize),
    MachineEfd(usize),
    MachinePm(usize),
    MachineVpss(usize),
    ConverterP(usize),
    ConverterQ(usize),
    ConverterFreq(usize),
    BusV(usize),
    BusAngle(usize),
}

/// Per-machine quantities derived from states and bus voltage.
struct MachineEval {
    delta: f64,
    dw: f64,
    id: f64,
    iq: f64,
    vd: f64,
    vq: f64,
    vt: f64,
    efd: f64,
    vpss: f64,
    pm: f64,
}

/// Nonlinear DAE of a power system at a given operating point.
#[derive(Debug, Clone)]
pub struct PowerSystemDae {
    model: PowerSystemModel,
    options: DaeOptions,
    omega_b: f64,
    ybus: DMatrix<Complex64>,
    machines: Vec<MachineSlots>,
    converters: Vec<ConverterSlots>,
    loads: Vec<LoadSlots>,
    reference: Option<usize>,
    state_labels: Vec<String>,
    algebraic_labels: Vec<String>,
    input_labels: Vec<String>,
    output_labels: Vec<String>,
    outputs: Vec<OutputKind>,
}

/// Builds the DAE and its steady-state initial condition at `op`.
pub fn init_dynamic_states(model: &PowerSystemModel, op: &OperatingPoint) -> Result<(PowerSystemDae, Equilibrium)> {
    PowerSystemDae::new(model, op, DaeOptions::default())
}

fn stages(p: &PssParams) -> (bool, bool) {
    (p.t1 != p.t2, p.t3 != p.t4)
}

impl PowerSystemDae {
    pub fn new(model: &PowerSystemModel, op: &OperatingPoint, options: DaeOptions) -> Result<(Self, Equilibrium)> {
        model.validate()?;
        if op.vm.len() != model.buses.len() {
            return Err(Error::Dimension(format!(
                "operating point has {} buses, model has {}",
                op.vm.len(),
                model.buses.len()
            )));
        }
        let omega_b = model.omega_base();
        let mut xs: Vec<f64> = Vec::new();
        let mut sl: Vec<String> = Vec::new();
        let mut us: Vec<f64> = Vec::new();
        let mut il: Vec<String> = Vec::new();
        let mut push_state = |label: String, value: f64, xs: &mut Vec<f64>| {
            sl.push(label);
            xs.push(value);
            xs.len() - 1
        };
        let mut push_input = |label: String, value: f64, us: &mut Vec<f64>| {
            il.push(label);
            us.push(value);
            us.len() - 1
        };

        let reference = if model.machines.is_empty() { None } else { Some(0) };
        let mut machines = Vec::new();
        for (k, m) in model.machines.iter().enumerate() {
            let bus = model.bus_index(m.bus).unwrap();
            let scale = m.mva / model.base_mva;
            let inj = op
                .device(&m.id)
                .ok_or_else(|| Error::InvalidModel(format!("operating point lacks device {}", m.id)))?;
            let v = op.voltage(bus);
            let s = Complex64::new(inj.p, inj.q) / scale;
            let i = (s / v).conj();
            let eq = v + Complex64::new(m.ra, m.xq) * i;
            let delta = eq.arg();
            let (sd, cd) = delta.sin_cos();
            let id = i.re * sd - i.im * cd;
            let iq = i.re * cd + i.im * sd;
            let vd = v.re * sd - v.im * cd;
            let vq = v.re * cd + v.im * sd;
            let gamma_d = m.td0_pp * m.xd_pp * (m.xd - m.xd_p) / (m.td0_p * m.xd_p);
            let gamma_q = m.tq0_pp * m.xq_pp * (m.xq - m.xq_p) / (m.tq0_p * m.xq_p);
            let edpp = vd + m.ra * id - m.xq_pp * iq;
            let eqpp = vq + m.ra * iq + m.xd_pp * id;
            let edp = (m.xq - m.xq_p - gamma_q) * iq;
            let eqp = eqpp + (m.xd_p - m.xd_pp + gamma_d) * id;
            let efd = eqp + (m.xd - m.xd_p - gamma_d) * id;
            let te = vd * id + vq * iq + m.ra * (id * id + iq * iq);
            let vt = v.norm();

            let shaft = !options.frozen_shaft;
            let delta_slot = if shaft && reference != Some(k) {
                Some(push_state(format!("{}.delta", m.id), delta, &mut xs))
            } else {
                None
            };
            let dw_slot = if shaft { Some(push_state(format!("{}.dw", m.id), 0.0, &mut xs)) } else { None };
            let eqp_s = push_state(format!("{}.eq_p", m.id), eqp, &mut xs);
            let edp_s = push_state(format!("{}.ed_p", m.id), edp, &mut xs);
            let eqpp_s = push_state(format!("{}.eq_pp", m.id), eqpp, &mut xs);
            let edpp_s = push_state(format!("{}.ed_pp", m.id), edpp, &mut xs);

            let (mut vm_s, mut tgr_s, mut u_vref) = (None, None, None);
            if let Some(a) = &m.avr {
                if efd <= a.efd_min + LIMIT_MARGIN || efd >= a.efd_max - LIMIT_MARGIN {
                    return Err(Error::InitOutOfLimits {
                        device: m.id.clone(),
                        detail: format!("field voltage {efd:.4} outside [{}, {}]", a.efd_min, a.efd_max),
                    });
                }
                let verr = efd / a.ka;
                vm_s = Some(push_state(format!("{}.vm", m.id), vt, &mut xs));
                if a.tb > 0.0 {
                    tgr_s = Some(push_state(format!("{}.tgr", m.id), verr, &mut xs));
                }
                u_vref = Some(push_input(format!("{}.vref", m.id), verr + vt, &mut us));
            }
            let (mut pv_s, mut rh_s) = (None, None);
            if let Some(g) = &m.governor {
                if te < g.p_min - LIMIT_MARGIN || te > g.p_max + LIMIT_MARGIN {
                    return Err(Error::InitOutOfLimits {
                        device: m.id.clone(),
                        detail: format!("mechanical power {te:.4} outside [{}, {}]", g.p_min, g.p_max),
                    });
                }
                pv_s = Some(push_state(format!("{}.pv", m.id), te, &mut xs));
                rh_s = Some(push_state(format!("{}.rh", m.id), te, &mut xs));
            }
            let u_pref = push_input(format!("{}.pref", m.id), te, &mut us);
            let (mut pss_w, mut pss_1, mut pss_2) = (None, None, None);
            if let Some(slot) = m.pss.as_ref().filter(|p| p.enabled) {
                pss_w = Some(push_state(format!("{}.xw", slot.name), 0.0, &mut xs));
                let (s1, s2) = stages(&slot.params);
                if s1 {
                    pss_1 = Some(push_state(format!("{}.x1", slot.name), 0.0, &mut xs));
                }
                if s2 {
                    pss_2 = Some(push_state(format!("{}.x2", slot.name), 0.0, &mut xs));
                }
            }
            machines.push(MachineSlots {
                bus,
                scale,
                delta: delta_slot,
                dw: dw_slot,
                eqp: eqp_s,
                edp: edp_s,
                eqpp: eqpp_s,
                edpp: edpp_s,
                vm: vm_s,
                tgr: tgr_s,
                pv: pv_s,
                rh: rh_s,
                pss_w,
                pss_1,
                pss_2,
                u_vref,
                u_pref,
                delta0: delta,
                efd0: efd,
                gamma_d,
                gamma_q,
            });
        }

        let mut converters = Vec::new();
        for c in &model.converters {
            let bus = model.bus_index(c.bus).unwrap();
            let scale = c.mva / model.base_mva;
            let inj = op
                .device(&c.id)
                .ok_or_else(|| Error::InvalidModel(format!("operating point lacks device {}", c.id)))?;
            let v = op.voltage(bus);
            let vmag = v.norm();
            let (p, q) = (inj.p / scale, inj.q / scale);
            let id = p / vmag;
            let iq = -q / vmag;
            if id.hypot(iq) >= c.i_max - LIMIT_MARGIN {
                return Err(Error::InitOutOfLimits {
                    device: c.id.clone(),
                    detail: format!("current {:.4} exceeds limit {}", id.hypot(iq), c.i_max),
                });
            }
            let theta = push_state(format!("{}.theta", c.id), v.arg(), &mut xs);
            let xpll = push_state(format!("{}.xpll", c.id), 0.0, &mut xs);
            let xp = push_state(format!("{}.xp", c.id), id, &mut xs);
            let xq = push_state(format!("{}.xq", c.id), -iq, &mut xs);
            let id_s = push_state(format!("{}.id", c.id), id, &mut xs);
            let iq_s = push_state(format!("{}.iq", c.id), iq, &mut xs);
            let u_pset = push_input(format!("{}.pset", c.id), p, &mut us);
            let u_qset = push_input(format!("{}.qset", c.id), q, &mut us);
            converters.push(ConverterSlots {
                bus,
                scale,
                theta,
                xpll,
                xp,
                xq,
                id: id_s,
                iq: iq_s,
                u_pset,
                u_qset,
                v_set: vmag,
                t_current: c.current_time_constant(omega_b),
            });
        }

        let mut loads = Vec::new();
        for (k, l) in model.loads.iter().enumerate() {
            let bus = model.bus_index(l.bus).unwrap();
            let dup = model.loads[..k].iter().filter(|o| o.bus == l.bus).count();
            let label = if dup == 0 { format!("L{}.scale", l.bus) } else { format!("L{}_{}.scale", l.bus, dup) };
            let u_scale = push_input(label, l.scale_factor, &mut us);
            loads.push(LoadSlots { bus, u_scale, v0: op.vm[bus] });
        }

        let mut ys = Vec::new();
        let mut al = Vec::new();
        for (i, b) in model.buses.iter().enumerate() {
            let v = op.voltage(i);
            ys.push(v.re);
            ys.push(v.im);
            al.push(format!("B{}.vr", b.id));
            al.push(format!("B{}.vi", b.id));
        }

        let mut output_labels = Vec::new();
        let mut outputs = Vec::new();
        for (k, m) in model.machines.iter().enumerate() {
            let entries = [
                ("dw", OutputKind::MachineSpeed(k)),
                ("delta", OutputKind::MachineAngle(k)),
                ("P", OutputKind::MachineP(k)),
                ("Q", OutputKind::MachineQ(k)),
                ("V", OutputKind::MachineV(k)),
                ("efd", OutputKind::MachineEfd(k)),
                ("pm", OutputKind::MachinePm(k)),
                ("vpss", OutputKind::MachineVpss(k)),
            ];
            for (name, kind) in entries {
                output_labels.push(format!("{}.{name}", m.id));
                outputs.push(kind);
            }
        }
        for (k, c) in model.converters.iter().enumerate() {
            for (name, kind) in
                [("P", OutputKind::ConverterP(k)), ("Q", OutputKind::ConverterQ(k)), ("freq", OutputKind::ConverterFreq(k))]
            {
                output_labels.push(format!("{}.{name}", c.id));
                outputs.push(kind);
            }
        }
        for (i, b) in model.buses.iter().enumerate() {
            output_labels.push(format!("B{}.V", b.id));
            outputs.push(OutputKind::BusV(i));
            output_labels.push(format!("B{}.angle", b.id));
            outputs.push(OutputKind::BusAngle(i));
        }

        let dae = PowerSystemDae {
            model: model.clone(),
            options,
            omega_b,
            ybus: admittance_matrix(model),
            machines,
            converters,
            loads,
            reference,
            state_labels: sl,
            algebraic_labels: al,
            input_labels: il,
            output_labels,
            outputs,
        };
        let eq = Equilibrium { x: xs, y: ys, u: us };
        let active = dae.active_limiters(&eq.x, &eq.y, &eq.u);
        if let Some(first) = active.first() {
            return Err(Error::InitOutOfLimits { device: first.clone(), detail: "limiter active at initialisation".into() });
        }
        Ok((dae, eq))
    }

    pub fn model(&self) -> &PowerSystemModel {
        &self.model
    }

    pub fn options(&self) -> DaeOptions {
        self.options
    }

    fn reference_speed(&self, x: &[f64]) -> f64 {
        match self.reference {
            Some(r) => self.machines[r].dw.map_or(0.0, |i| x[i]),
            None => 0.0,
        }
    }

    fn pss_output(params: &PssParams, s: &MachineSlots, dw: f64, x: &[f64], limits: bool) -> (f64, f64) {
        let Some(w) = s.pss_w else { return (0.0, 0.0) };
        let input = params.k * dw;
        let yw = input - x[w];
        let y1 = match s.pss_1 {
            Some(i) => x[i] + params.t1 / params.t2 * (yw - x[i]),
            None => yw,
        };
        let y2 = match s.pss_2 {
            Some(i) => x[i] + params.t3 / params.t4 * (y1 - x[i]),
            None => y1,
        };
        (y2, if limits { y2.clamp(params.v_min, params.v_max) } else { y2 })
    }

    fn eval_machine(&self, k: usize, x: &[f64], y: &[f64], u: &[f64]) -> MachineEval {
        let m = &self.model.machines[k];
        let s = &self.machines[k];
        let delta = s.delta.map_or(s.delta0, |i| x[i]);
        let dw = s.dw.map_or(0.0, |i| x[i]);
        let (vr, vi) = (y[2 * s.bus], y[2 * s.bus + 1]);
        let (sd, cd) = delta.sin_cos();
        let vd = vr * sd - vi * cd;
        let vq = vr * cd + vi * sd;
        let a = x[s.edpp] - vd;
        let b = x[s.eqpp] - vq;
        let det = m.ra * m.ra + m.xd_pp * m.xq_pp;
        let id = (m.ra * a + m.xq_pp * b) / det;
        let iq = (m.ra * b - m.xd_pp * a) / det;
        let vt = vr.hypot(vi);

        let vpss = m
            .pss
            .as_ref()
            .filter(|p| p.enabled)
            .map_or(0.0, |p| Self::pss_output(&p.params, s, dw, x, self.limits()).1);
        let efd = match (&m.avr, s.vm, s.u_vref) {
            (Some(avr), Some(vm), Some(uv)) => {
                let verr = u[uv] - x[vm] + vpss;
                let lead = match s.tgr {
                    Some(t) => x[t] + avr.tc / avr.tb * (verr - x[t]),
                    None => verr,
                };
                let efd = avr.ka * lead;
                if self.limits() { efd.clamp(avr.efd_min, avr.efd_max) } else { efd }
            }
            _ => s.efd0,
        };
        let pm = match (&m.governor, s.pv, s.rh) {
            (Some(g), Some(pv), Some(rh)) => g.f_hp * self.valve(g, x[pv]) + (1.0 - g.f_hp) * x[rh],
            _ => u[s.u_pref],
        };
        MachineEval { delta, dw, id, iq, vd, vq, vt, efd, vpss, pm }
    }

    fn converter_frame(&self, k: usize, x: &[f64], y: &[f64]) -> (f64, f64, f64, f64) {
        let s = &self.converters[k];
        let (vr, vi) = (y[2 * s.bus], y[2 * s.bus + 1]);
        let (st, ct) = x[s.theta].sin_cos();
        let vd = vr * ct + vi * st;
        let vq = -vr * st + vi * ct;
        (vd, vq, vr.hypot(vi), x[s.theta])
    }

    fn limits(&self) -> bool {
        !self.options.ignore_limits
    }

    fn valve(&self, gov: &Governor, pv: f64) -> f64 {
        if self.limits() {
            pv.clamp(gov.p_min, gov.p_max)
        } else {
            pv
        }
    }

    /// Current references before and after limiting plus the limit flag.
    fn converter_refs(&self, k: usize, x: &[f64], y: &[f64], u: &[f64]) -> ((f64, f64), bool, f64, f64) {
        let c = &self.model.converters[k];
        let s = &self.converters[k];
        let (vd, vq, vmag, _) = self.converter_frame(k, x, y);
        let p = vd * x[s.id] + vq * x[s.iq];
        let q = vq * x[s.id] - vd * x[s.iq];
        let ep = u[s.u_pset] - p;
        let qref = u[s.u_qset] + c.v_droop * (s.v_set - vmag);
        let eq = qref - q;
        let id_ref = c.p_kp * ep + x[s.xp];
        let iq_ref = -(c.q_kp * eq + x[s.xq]);
        let mag = id_ref.hypot(iq_ref);
        if mag > c.i_max && self.limits() {
            let r = c.i_max / mag;
            ((id_ref * r, iq_ref * r), true, ep, eq)
        } else {
            ((id_ref, iq_ref), false, ep, eq)
        }
    }

    /// The operating-point voltage reference of every load, in model order.
    pub fn load_reference_voltages(&self) -> Vec<f64> {
        self.loads.iter().map(|l| l.v0).collect()
    }
}

impl DaeModel for PowerSystemDae {
    fn state_labels(&self) -> &[String] {
        &self.state_labels
    }
    fn algebraic_labels(&self) -> &[String] {
        &self.algebraic_labels
    }
    fn input_labels(&self) -> &[String] {
        &self.input_labels
    }
    fn output_labels(&self) -> &[String] {
        &self.output_labels
    }

    fn residuals(&self, x: &[f64], y: &[f64], u: &[f64], f: &mut [f64], g: &mut [f64]) {
        let nb = self.model.buses.len();
        let mut inj = vec![Complex64::new(0.0, 0.0); nb];
        let dw_ref = self.reference_speed(x);

        for (k, m) in self.model.machines.iter().enumerate() {
            let s = &self.machines[k];
            let e = self.eval_machine(k, x, y, u);
            let (sd, cd) = e.delta.sin_cos();
            inj[s.bus] += Complex64::new(e.id * sd + e.iq * cd, -e.id * cd + e.iq * sd) * s.scale;

            if let Some(i) = s.delta {
                f[i] = self.omega_b * (e.dw - dw_ref);
            }
            if let Some(i) = s.dw {
                let te = e.vd * e.id + e.vq * e.iq + m.ra * (e.id * e.id + e.iq * e.iq);
                f[i] = (e.pm - te - m.d * e.dw) / (2.0 * m.h);
            }
            let (gd, gq) = (s.gamma_d, s.gamma_q);
            f[s.eqp] = (-x[s.eqp] - (m.xd - m.xd_p - gd) * e.id + e.efd) / m.td0_p;
            f[s.edp] = (-x[s.edp] + (m.xq - m.xq_p - gq) * e.iq) / m.tq0_p;
            f[s.eqpp] = (-x[s.eqpp] + x[s.eqp] - (m.xd_p - m.xd_pp + gd) * e.id) / m.td0_pp;
            f[s.edpp] = (-x[s.edpp] + x[s.edp] + (m.xq_p - m.xq_pp + gq) * e.iq) / m.tq0_pp;

            if let (Some(avr), Some(vm)) = (&m.avr, s.vm) {
                f[vm] = (e.vt - x[vm]) / avr.tr;
                if let (Some(t), Some(uv)) = (s.tgr, s.u_vref) {
                    let verr = u[uv] - x[vm] + e.vpss;
                    f[t] = (verr - x[t]) / avr.tb;
                }
            }
            if let (Some(gov), Some(pv), Some(rh)) = (&m.governor, s.pv, s.rh) {
                let mut dpv = (u[s.u_pref] - e.dw / gov.droop - x[pv]) / gov.t_servo;
                if self.limits() && ((x[pv] >= gov.p_max && dpv > 0.0) || (x[pv] <= gov.p_min && dpv < 0.0)) {
                    dpv = 0.0;
                }
                f[pv] = dpv;
                f[rh] = (self.valve(gov, x[pv]) - x[rh]) / gov.t_reheat;
            }
            if let (Some(slot), Some(w)) = (m.pss.as_ref(), s.pss_w) {
                let p = &slot.params;
                let input = p.k * e.dw;
                f[w] = (input - x[w]) / p.tw;
                let yw = input - x[w];
                let y1 = match s.pss_1 {
                    Some(i) => {
                        f[i] = (yw - x[i]) / p.t2;
                        x[i] + p.t1 / p.t2 * (yw - x[i])
                    }
                    None => yw,
                };
                if let Some(i) = s.pss_2 {
                    f[i] = (y1 - x[i]) / p.t4;
                }
            }
        }

        for (k, c) in self.model.converters.iter().enumerate() {
            let s = &self.converters[k];
            let (_, vq, _, theta) = self.converter_frame(k, x, y);
            f[s.theta] = self.omega_b * (c.pll_kp * vq + x[s.xpll] - dw_ref);
            f[s.xpll] = c.pll_ki * vq;
            let ((id_ref, iq_ref), limited, ep, eq) = self.converter_refs(k, x, y, u);
            f[s.xp] = if limited { 0.0 } else { c.p_ki * ep };
            f[s.xq] = if limited { 0.0 } else { c.q_ki * eq };
            f[s.id] = (id_ref - x[s.id]) / s.t_current;
            f[s.iq] = (iq_ref - x[s.iq]) / s.t_current;
            let (st, ct) = theta.sin_cos();
            let (id, iq) = (x[s.id], x[s.iq]);
            inj[s.bus] += Complex64::new(id * ct - iq * st, id * st + iq * ct) * s.scale;
        }

        for (k, l) in self.model.loads.iter().enumerate() {
            let s = &self.loads[k];
            let (vr, vi) = (y[2 * s.bus], y[2 * s.bus + 1]);
            let v2 = vr * vr + vi * vi;
            let ratio = v2.sqrt() / s.v0;
            let p = u[s.u_scale] * l.p * ratio;
            let q = u[s.u_scale] * l.q * ratio * ratio;
            inj[s.bus] -= Complex64::new((p * vr + q * vi) / v2, (p * vi - q * vr) / v2);
        }

        for i in 0..nb {
            let mut cur = inj[i];
            for j in 0..nb {
                let yij = self.ybus[(i, j)];
                if yij.re != 0.0 || yij.im != 0.0 {
                    cur -= yij * Complex64::new(y[2 * j], y[2 * j + 1]);
                }
            }
            g[2 * i] = cur.re;
            g[2 * i + 1] = cur.im;
        }
    }

    fn output(&self, index: usize, x: &[f64], y: &[f64], u: &[f64]) -> f64 {
        match self.outputs[index] {
            OutputKind::MachineSpeed(k) => self.eval_machine(k, x, y, u).dw,
            OutputKind::MachineAngle(k) => self.eval_machine(k, x, y, u).delta,
            OutputKind::MachineP(k) => {
                let e = self.eval_machine(k, x, y, u);
                (e.vd * e.id + e.vq * e.iq) * self.machines[k].scale
            }
            OutputKind::MachineQ(k) => {
                let e = self.eval_machine(k, x, y, u);
                (e.vq * e.id - e.vd * e.iq) * self.machines[k].scale
            }
            OutputKind::MachineV(k) => self.eval_machine(k, x, y, u).vt,
            OutputKind::MachineEfd(k) => self.eval_machine(k, x, y, u).efd,
            OutputKind::MachinePm(k) => self.eval_machine(k, x, y, u).pm * self.machines[k].scale,
            OutputKind::MachineVpss(k) => self.eval_machine(k, x, y, u).vpss,
            OutputKind::ConverterP(k) | OutputKind::ConverterQ(k) => {
                let s = &self.converters[k];
                let (vd, vq, _, _) = self.converter_frame(k, x, y);
                let value = if matches!(self.outputs[index], OutputKind::ConverterP(_)) {
                    vd * x[s.id] + vq * x[s.iq]
                } else {
                    vq * x[s.id] - vd * x[s.iq]
                };
                value * s.scale
            }
            OutputKind::ConverterFreq(k) => {
                let (_, vq, _, _) = self.converter_frame(k, x, y);
                self.model.converters[k].pll_kp * vq + x[self.converters[k].xpll]
            }
            OutputKind::BusV(i) => y[2 * i].hypot(y[2 * i + 1]),
            OutputKind::BusAngle(i) => y[2 * i + 1].atan2(y[2 * i]),
        }
    }

    fn active_limiters(&self, x: &[f64], y: &[f64], u: &[f64]) -> Vec<String> {
        let mut active = Vec::new();
        for (k, m) in self.model.machines.iter().enumerate() {
            let s = &self.machines[k];
            let e = self.eval_machine(k, x, y, u);
            if let Some(a) = &m.avr {
                if e.efd <= a.efd_min + LIMIT_MARGIN || e.efd >= a.efd_max - LIMIT_MARGIN {
                    active.push(format!("{} field voltage limit", m.id));
                }
            }
            if let (Some(gov), Some(pv)) = (&m.governor, s.pv) {
                if x[pv] >= gov.p_max - LIMIT_MARGIN || x[pv] <= gov.p_min + LIMIT_MARGIN {
                    active.push(format!("{} governor valve limit", m.id));
                }
            }
            if let Some(slot) = m.pss.as_ref().filter(|p| p.enabled) {
                let (raw, _) = Self::pss_output(&slot.params, s, e.dw, x, false);
                if raw <= slot.params.v_min || raw >= slot.params.v_max {
                    active.push(format!("{} output limit", slot.name));
                }
            }
        }
        for (k, c) in self.model.converters.iter().enumerate() {
            let ((id_ref, iq_ref), _, _, _) = self.converter_refs(k, x, y, u);
            if id_ref.hypot(iq_ref) >= c.i_max - LIMIT_MARGIN {
                active.push(format!("{} current limit", c.id));
            }
        }
        active
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::presets::{build_two_area, IbrShare};
    use crate::grid::powerflow::solve_power_flow;

    fn setup(share: IbrShare) -> (PowerSystemDae, Equilibrium) {
        let model = build_two_area(share);
        let op = solve_power_flow(&model).unwrap();
        init_dynamic_states(&model, &op).unwrap()
    }

    #[test]
    fn equilibrium_residuals_vanish() {
        for share in [IbrShare::Zero, IbrShare::Fifty] {
            let (dae, eq) = setup(share);
            let r = eq.residual_norm(&dae);
            assert!(r < 1e-8, "{share:?}: residual {r:e}");
        }
    }

    #[test]
    fn machine_torque_balances_at_equilibrium() {
        let (dae, eq) = setup(IbrShare::Zero);
        for k in 0..4 {
            let e = dae.eval_machine(k, &eq.x, &eq.y, &eq.u);
            let m = &dae.model.machines[k];
            let te = e.vd * e.id + e.vq * e.iq + m.ra * (e.id * e.id + e.iq * e.iq);
            assert!((te - e.pm).abs() < 1e-8);
        }
    }

    #[test]
    fn converter_tracks_setpoint_at_equilibrium() {
        let (dae, eq) = setup(IbrShare::Fifty);
        for c in &dae.model.converters {
            let p = dae.output(dae.output_index(&format!("{}.P", c.id)).unwrap(), &eq.x, &eq.y, &eq.u);
            let pset = eq.u[dae.input_index(&format!("{}.pset", c.id)).unwrap()] * c.mva / 100.0;
            assert!((p - pset).abs() < 1e-8);
        }
    }

    #[test]
    fn frozen_shaft_drops_rotor_states() {
        let model = build_two_area(IbrShare::Zero);
        let op = solve_power_flow(&model).unwrap();
        let (dae, eq) = PowerSystemDae::new(&model, &op, DaeOptions { frozen_shaft: true, ..Default::default() }).unwrap();
        assert!(dae.state_labels().iter().all(|l| !l.ends_with(".delta") && !l.ends_with(".dw")));
        assert!(eq.residual_norm(&dae) < 1e-8);
    }

    #[test]
    fn washout_output_is_zero_at_equilibrium() {
        let (dae, eq) = setup(IbrShare::Zero);
        for m in ["G1", "G2", "G3", "G4"] {
            let v = dae.output(dae.output_index(&format!("{m}.vpss")).unwrap(), &eq.x, &eq.y, &eq.u);
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn exciter_limit_violation_is_reported() {
        let mut model = build_two_area(IbrShare::Zero);
        model.machines[1].avr.as_mut().unwrap().efd_max = 1.0;
        let op = solve_power_flow(&model).unwrap();
        match init_dynamic_states(&model, &op) {
            Err(Error::InitOutOfLimits { device, .. }) => assert_eq!(device, "G2"),
            other => panic!("expected limit error, got {:?}", other.map(|_| ())),
        }
    }
}

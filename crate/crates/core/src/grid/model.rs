//! Network and device data. All network quantities are per unit on the
//! system base; machine and converter parameters are per unit on the device
//! rating (`mva`) and converted when the DAE is assembled.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: u32,
    pub kind: BusKind,
    /// Setpoint for slack/PV buses, initial guess otherwise.
    pub voltage_magnitude: f64,
    /// Radians. Reference angle for the slack bus.
    #[serde(default)]
    pub voltage_angle: f64,
    /// Shunt capacitor banks, pu on system base.
    #[serde(default)]
    pub shunt_susceptance: f64,
    #[serde(default = "default_area")]
    pub area: u8,
}

fn default_area() -> u8 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from_bus: u32,
    pub to_bus: u32,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance.
    #[serde(default)]
    pub b: f64,
}

/// Static load: active power scales with V (constant current), reactive power
/// with V^2 (constant impedance), both relative to the operating-point voltage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub bus: u32,
    pub p: f64,
    pub q: f64,
    #[serde(default = "one")]
    pub scale_factor: f64,
}

fn one() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

impl Load {
    pub const P_EXPONENT: i32 = 1;
    pub const Q_EXPONENT: i32 = 2;

    /// Complex power drawn at voltage magnitude `v` given reference `v0`.
    pub fn power_at(&self, v: f64, v0: f64) -> (f64, f64) {
        let r = v / v0;
        (
            self.scale_factor * self.p * r.powi(Self::P_EXPONENT),
            self.scale_factor * self.q * r.powi(Self::Q_EXPONENT),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExciterAvr {
    pub ka: f64,
    /// Terminal voltage transducer time constant.
    pub tr: f64,
    /// Transient gain reduction lead/lag; `tb == 0` disables it.
    #[serde(default)]
    pub tc: f64,
    #[serde(default)]
    pub tb: f64,
    pub efd_min: f64,
    pub efd_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Governor {
    pub droop: f64,
    pub t_servo: f64,
    pub t_reheat: f64,
    /// High-pressure turbine fraction.
    pub f_hp: f64,
    pub p_min: f64,
    pub p_max: f64,
}

/// Stabilizer parameters in the usual column order `K, T_W, T_1 .. T_4`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PssParams {
    pub k: f64,
    pub tw: f64,
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub t4: f64,
    #[serde(default = "default_vmin")]
    pub v_min: f64,
    #[serde(default = "default_vmax")]
    pub v_max: f64,
}

fn default_vmin() -> f64 {
    -0.1
}
fn default_vmax() -> f64 {
    0.1
}

impl PssParams {
    pub fn new(k: f64, tw: f64, t1: f64, t2: f64, t3: f64, t4: f64) -> Self {
        Self { k, tw, t1, t2, t3, t4, v_min: default_vmin(), v_max: default_vmax() }
    }

    pub fn with_gain(&self, k: f64) -> Self {
        Self { k, ..self.clone() }
    }

    /// Transfer function `K sTw/(1+sTw) (1+sT1)/(1+sT2) (1+sT3)/(1+sT4)`.
    pub fn transfer(&self, s: num_complex::Complex64) -> num_complex::Complex64 {
        self.k * self.shape(s)
    }

    /// Transfer function without the gain.
    pub fn shape(&self, s: num_complex::Complex64) -> num_complex::Complex64 {
        let washout = s * self.tw / (1.0 + s * self.tw);
        washout * (1.0 + s * self.t1) / (1.0 + s * self.t2) * (1.0 + s * self.t3) / (1.0 + s * self.t4)
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidModel(format!("{name}: {m}")));
        for (n, v) in [("T1", self.t1), ("T2", self.t2), ("T3", self.t3), ("T4", self.t4)] {
            if !(v > 0.0) {
                return bad(&format!("{n} must be positive"));
            }
        }
        if !(1.0..=20.0).contains(&self.tw) {
            return bad("washout T_W must lie in [1, 20] s");
        }
        if !(self.v_min < 0.0 && self.v_max > 0.0) {
            return bad("output limits must satisfy V_min < 0 < V_max");
        }
        if !(self.k >= 0.0) {
            return bad("gain must be non-negative");
        }
        Ok(())
    }
}

/// A stabilizer installed on a machine. A disabled slot contributes no states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PssSlot {
    pub name: String,
    pub params: PssParams,
    #[serde(default = "default_true")]
    pub enabled: bool,
}

/// Sixth-order two-axis synchronous machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncMachine {
    pub id: String,
    pub bus: u32,
    pub mva: f64,
    /// Active power dispatch on the system base (ignored at the slack bus).
    pub p_set: f64,
    pub h: f64,
    #[serde(default)]
    pub d: f64,
    pub ra: f64,
    pub xd: f64,
    pub xq: f64,
    pub xd_p: f64,
    pub xq_p: f64,
    pub xd_pp: f64,
    pub xq_pp: f64,
    pub td0_p: f64,
    pub tq0_p: f64,
    pub td0_pp: f64,
    pub tq0_pp: f64,
    #[serde(default)]
    pub avr: Option<ExciterAvr>,
    #[serde(default)]
    pub governor: Option<Governor>,
    #[serde(default)]
    pub pss: Option<PssSlot>,
}

/// Grid-following converter: PLL, active-power and reactive-power/voltage
/// support loops, and a current-controlled RL coupling reactor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GflConverter {
    pub id: String,
    pub bus: u32,
    pub mva: f64,
    /// Active power dispatch on the system base (ignored at the slack bus).
    pub p_set: f64,
    pub pll_kp: f64,
    pub pll_ki: f64,
    pub p_kp: f64,
    pub p_ki: f64,
    pub q_kp: f64,
    pub q_ki: f64,
    /// Reactive power support per pu voltage deviation.
    pub v_droop: f64,
    pub r: f64,
    pub x: f64,
    /// Proportional gain of the reactor current controller.
    pub current_kp: f64,
    pub i_max: f64,
}

impl GflConverter {
    /// Closed-loop current tracking time constant set by the reactor
    /// inductance and the current controller gain.
    pub fn current_time_constant(&self, omega_base: f64) -> f64 {
        self.x / (omega_base * self.current_kp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSystemModel {
    pub name: String,
    #[serde(default = "default_base")]
    pub base_mva: f64,
    #[serde(default = "default_freq")]
    pub frequency_hz: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    #[serde(default)]
    pub loads: Vec<Load>,
    #[serde(default)]
    pub machines: Vec<SyncMachine>,
    #[serde(default)]
    pub converters: Vec<GflConverter>,
}

fn default_base() -> f64 {
    100.0
}
fn default_freq() -> f64 {
    60.0
}

impl PowerSystemModel {
    pub fn omega_base(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.frequency_hz
    }

    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn machine_index(&self, id: &str) -> Option<usize> {
        self.machines.iter().position(|m| m.id == id)
    }

    /// Index of the machine carrying the stabilizer slot `name`.
    pub fn pss_host(&self, name: &str) -> Option<usize> {
        self.machines
            .iter()
            .position(|m| m.pss.as_ref().is_some_and(|p| p.name == name))
    }

    pub fn pss_slot_names(&self) -> Vec<String> {
        self.machines.iter().filter_map(|m| m.pss.as_ref().map(|p| p.name.clone())).collect()
    }

    pub fn pss_slot_mut(&mut self, name: &str) -> Option<&mut PssSlot> {
        self.machines.iter_mut().filter_map(|m| m.pss.as_mut()).find(|p| p.name == name)
    }

    pub fn pss_slot(&self, name: &str) -> Option<&PssSlot> {
        self.machines.iter().filter_map(|m| m.pss.as_ref()).find(|p| p.name == name)
    }

    /// Sets every installed stabilizer to `params`.
    pub fn set_all_pss(&mut self, params: &PssParams) {
        for slot in self.machines.iter_mut().filter_map(|m| m.pss.as_mut()) {
            slot.params = params.clone();
            slot.enabled = true;
        }
    }

    /// Total active generation dispatch on the system base.
    pub fn total_generation_setpoint(&self) -> f64 {
        self.machines.iter().map(|m| m.p_set).sum::<f64>()
            + self.converters.iter().map(|c| c.p_set).sum::<f64>()
    }

    /// Multiplies every machine inertia by `factor`.
    pub fn scale_inertia(&mut self, factor: f64) {
        for m in &mut self.machines {
            m.h *= factor;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidModel(m));
        if self.buses.is_empty() {
            return bad("model has no buses".into());
        }
        let slack = self.buses.iter().filter(|b| b.kind == BusKind::Slack).count();
        if slack != 1 {
            return bad(format!("expected exactly one slack bus, found {slack}"));
        }
        for (i, b) in self.buses.iter().enumerate() {
            if !(b.voltage_magnitude > 0.0) {
                return bad(format!("bus {} voltage magnitude must be positive", b.id));
            }
            if self.buses[..i].iter().any(|o| o.id == b.id) {
                return bad(format!("duplicate bus id {}", b.id));
            }
        }
        for br in &self.branches {
            if br.from_bus == br.to_bus {
                return bad(format!("branch {}-{} connects a bus to itself", br.from_bus, br.to_bus));
            }
            if br.r == 0.0 && br.x == 0.0 {
                return bad(format!("branch {}-{} has zero impedance", br.from_bus, br.to_bus));
            }
            for id in [br.from_bus, br.to_bus] {
                if self.bus_index(id).is_none() {
                    return bad(format!("branch references unknown bus {id}"));
                }
            }
        }
        for l in &self.loads {
            if self.bus_index(l.bus).is_none() {
                return bad(format!("load references unknown bus {}", l.bus));
            }
            if !(l.scale_factor > 0.0) {
                return bad(format!("load at bus {} must have a positive scale factor", l.bus));
            }
        }
        let mut ids: Vec<&str> = Vec::new();
        for m in &self.machines {
            if self.bus_index(m.bus).is_none() {
                return bad(format!("{} references unknown bus {}", m.id, m.bus));
            }
            let ok_d = m.xd >= m.xd_p && m.xd_p >= m.xd_pp && m.xd_pp > 0.0;
            let ok_q = m.xq >= m.xq_p && m.xq_p >= m.xq_pp && m.xq_pp > 0.0;
            if !ok_d || !ok_q {
                return bad(format!("{}: reactances must satisfy X >= X' >= X'' > 0", m.id));
            }
            if [m.td0_p, m.tq0_p, m.td0_pp, m.tq0_pp, m.h, m.mva].iter().any(|v| !(*v > 0.0)) {
                return bad(format!("{}: time constants, inertia and rating must be positive", m.id));
            }
            if let Some(a) = &m.avr {
                if !(a.efd_min < a.efd_max) || !(a.ka > 0.0) || !(a.tr > 0.0) || a.tb < 0.0 {
                    return bad(format!("{}: invalid exciter parameters", m.id));
                }
            }
            if let Some(g) = &m.governor {
                let ok = g.droop > 0.0
                    && g.p_min < g.p_max
                    && g.t_servo > 0.0
                    && g.t_reheat > 0.0
                    && (0.0..=1.0).contains(&g.f_hp);
                if !ok {
                    return bad(format!("{}: invalid governor parameters", m.id));
                }
            }
            if let Some(p) = &m.pss {
                if m.avr.is_none() {
                    return bad(format!("{}: stabilizer requires an exciter", m.id));
                }
                p.params.validate(&p.name)?;
                if ids.contains(&p.name.as_str()) {
                    return bad(format!("duplicate stabilizer slot {}", p.name));
                }
                ids.push(&p.name);
            }
        }
        for c in &self.converters {
            if self.bus_index(c.bus).is_none() {
                return bad(format!("{} references unknown bus {}", c.id, c.bus));
            }
            if !(c.pll_kp > 0.0 && c.pll_ki > 0.0) {
                return bad(format!("{}: PLL gains must be positive", c.id));
            }
            if !(c.i_max > 0.0 && c.x > 0.0 && c.current_kp > 0.0 && c.mva > 0.0) {
                return bad(format!("{}: current limit, reactance and rating must be positive", c.id));
            }
        }
        let mut dev_ids: Vec<&str> = self.machines.iter().map(|m| m.id.as_str()).collect();
        dev_ids.extend(self.converters.iter().map(|c| c.id.as_str()));
        for (i, id) in dev_ids.iter().enumerate() {
            if dev_ids[..i].contains(id) {
                return bad(format!("duplicate device id {id}"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn load_voltage_dependence_is_exact() {
        let l = Load { bus: 1, p: 2.0, q: 1.0, scale_factor: 1.0 };
        let (p, q) = l.power_at(0.5, 1.0);
        assert_eq!(p, 1.0);
        assert_eq!(q, 0.25);
    }

    #[test]
    fn pss_validation_rejects_bad_washout() {
        let mut p = PssParams::new(20.0, 10.0, 0.5, 0.1, 0.5, 0.1);
        assert!(p.validate("P").is_ok());
        p.tw = 25.0;
        assert!(p.validate("P").is_err());
        p.tw = 10.0;
        p.v_min = 0.05;
        assert!(p.validate("P").is_err());
    }
}

//! The two-area, four-machine benchmark and its 50 % grid-following variant.
//!
//! Machine, exciter and network data follow the classic two-area benchmark
//! (900 MVA machines, 230 kV tie, heavy transfer from area 1 to area 2).
//! Converter gains are not published for this case. The defaults below are
//! declared values (PLL about 20 Hz, active power loop about 5 Hz, 1 Hz
//! reactive power loop with light voltage droop, 0.15 pu reactor) and can be
//! overridden through a scenario file.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::model::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IbrShare {
    /// Four synchronous machines.
    Zero,
    /// Machines at buses 1 and 3 replaced by grid-following converters.
    Fifty,
}

/// Legacy stabilizer parameters "Set A".
pub fn legacy_set_a() -> PssParams {
    PssParams::new(20.0, 10.0, 0.4863, 0.1415, 0.4863, 0.1415)
}

/// Legacy stabilizer parameters "Set B".
pub fn legacy_set_b() -> PssParams {
    PssParams::new(40.0, 10.0, 0.2460, 0.0352, 0.2460, 0.0352)
}

pub fn default_exciter() -> ExciterAvr {
    ExciterAvr { ka: 200.0, tr: 0.01, tc: 2.0, tb: 5.0, efd_min: -6.4, efd_max: 7.0 }
}

pub fn default_governor() -> Governor {
    Governor { droop: 0.05, t_servo: 0.2, t_reheat: 7.0, f_hp: 0.3, p_min: 0.0, p_max: 1.0 }
}

fn machine(id: &str, bus: u32, h: f64, p_set: f64, pss: &str) -> SyncMachine {
    SyncMachine {
        id: id.into(),
        bus,
        mva: 900.0,
        p_set,
        h,
        d: 0.0,
        ra: 0.0025,
        xd: 1.8,
        xq: 1.7,
        xd_p: 0.3,
        xq_p: 0.55,
        xd_pp: 0.25,
        xq_pp: 0.25,
        td0_p: 8.0,
        tq0_p: 0.4,
        td0_pp: 0.03,
        tq0_pp: 0.05,
        avr: Some(default_exciter()),
        governor: Some(default_governor()),
        pss: Some(PssSlot { name: pss.into(), params: legacy_set_a(), enabled: true }),
    }
}

/// Default grid-following converter rated like the machine it replaces.
pub fn default_converter(id: &str, bus: u32, p_set: f64) -> GflConverter {
    let omega_base = 2.0 * PI * 60.0;
    // Second-order PLL, zeta = 0.7, natural frequency 20 Hz.
    let wn = 2.0 * PI * 20.0;
    let zeta = 0.7;
    GflConverter {
        id: id.into(),
        bus,
        mva: 900.0,
        p_set,
        pll_kp: 2.0 * zeta * wn / omega_base,
        pll_ki: wn * wn / omega_base,
        p_kp: 0.1,
        p_ki: 2.0 * PI * 5.0,
        q_kp: 0.1,
        q_ki: 2.0 * PI * 1.0,
        v_droop: 0.5,
        r: 0.005,
        x: 0.15,
        current_kp: 0.2,
        i_max: 1.2,
    }
}

fn line(from: u32, to: u32, km: f64, circuits: f64) -> Branch {
    // 230 kV line constants per km on 100 MVA.
    Branch { from_bus: from, to_bus: to, r: 1e-4 * km / circuits, x: 1e-3 * km / circuits, b: 1.75e-3 * km * circuits }
}

fn transformer(from: u32, to: u32) -> Branch {
    Branch { from_bus: from, to_bus: to, r: 0.0, x: 0.15 * 100.0 / 900.0, b: 0.0 }
}

/// Builds the two-area system for the requested converter share.
pub fn build_two_area(share: IbrShare) -> PowerSystemModel {
    let bus = |id, kind, v: f64, deg: f64, b, area| Bus {
        id,
        kind,
        voltage_magnitude: v,
        voltage_angle: deg.to_radians(),
        shunt_susceptance: b,
        area,
    };
    let buses = vec![
        bus(1, BusKind::Pv, 1.03, 0.0, 0.0, 1),
        bus(2, BusKind::Pv, 1.01, 0.0, 0.0, 1),
        bus(3, BusKind::Slack, 1.03, -6.8, 0.0, 2),
        bus(4, BusKind::Pv, 1.01, 0.0, 0.0, 2),
        bus(5, BusKind::Pq, 1.0, 0.0, 0.0, 1),
        bus(6, BusKind::Pq, 1.0, 0.0, 0.0, 1),
        bus(7, BusKind::Pq, 1.0, 0.0, 2.0, 1),
        bus(8, BusKind::Pq, 1.0, 0.0, 0.0, 1),
        bus(9, BusKind::Pq, 1.0, 0.0, 3.5, 2),
        bus(10, BusKind::Pq, 1.0, 0.0, 0.0, 2),
        bus(11, BusKind::Pq, 1.0, 0.0, 0.0, 2),
    ];
    let branches = vec![
        transformer(1, 5),
        transformer(2, 6),
        transformer(3, 11),
        transformer(4, 10),
        line(5, 6, 25.0, 1.0),
        line(6, 7, 10.0, 1.0),
        line(7, 8, 110.0, 2.0),
        line(8, 9, 110.0, 2.0),
        line(9, 10, 10.0, 1.0),
        line(10, 11, 25.0, 1.0),
    ];
    let loads = vec![
        Load { bus: 7, p: 9.67, q: 1.0, scale_factor: 1.0 },
        Load { bus: 9, p: 17.67, q: 1.0, scale_factor: 1.0 },
    ];
    let g1 = machine("G1", 1, 6.5, 7.0, "PSS1");
    let g2 = machine("G2", 2, 6.5, 7.0, "PSS2");
    let g3 = machine("G3", 3, 6.175, 7.19, "PSS3");
    let g4 = machine("G4", 4, 6.175, 7.0, "PSS4");
    let (machines, converters, name) = match share {
        IbrShare::Zero => (vec![g1, g2, g3, g4], vec![], "two-area-0ibr"),
        IbrShare::Fifty => (
            vec![g2, g4],
            vec![default_converter("C1", 1, g1.p_set), default_converter("C3", 3, g3.p_set)],
            "two-area-50ibr",
        ),
    };
    PowerSystemModel {
        name: name.into(),
        base_mva: 100.0,
        frequency_hz: 60.0,
        buses,
        branches,
        loads,
        machines,
        converters,
    }
}

//! Network and device models, power flow, and the nonlinear power-system DAE.

mod dae;
pub mod model;
mod powerflow;
pub mod presets;

pub use dae::{init_dynamic_states, DaeOptions, PowerSystemDae};
pub use model::*;
pub use powerflow::{admittance_matrix, solve_power_flow, DeviceInjection, OperatingPoint, PF_MAX_ITER, PF_TOLERANCE};
pub use presets::{build_two_area, legacy_set_a, legacy_set_b, IbrShare};

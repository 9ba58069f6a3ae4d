//! Mode classes from frequency and the dominant participating state group.

use serde::{Deserialize, Serialize};

use super::{participation_factors, Mode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeClass {
    InterArea,
    Local,
    Control,
    Other,
}

impl ModeClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ModeClass::InterArea => "inter-area",
            ModeClass::Local => "local",
            ModeClass::Control => "control",
            ModeClass::Other => "other",
        }
    }
}

impl std::fmt::Display for ModeClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateKind {
    Rotor,
    Flux,
    Controller,
    Other,
}

/// Group of a state from the suffix of its label (`G1.dw`, `PSS2.x1`, ...).
pub fn state_kind(label: &str) -> StateKind {
    let suffix = label.rsplit('.').next().unwrap_or(label);
    if !label.contains('.') {
        return StateKind::Other;
    }
    match suffix {
        "delta" | "dw" => StateKind::Rotor,
        "eq_p" | "ed_p" | "eq_pp" | "ed_pp" => StateKind::Flux,
        "vm" | "tgr" | "pv" | "rh" | "xw" | "x1" | "x2" | "theta" | "xpll" | "xp" | "xq" | "id" | "iq" => {
            StateKind::Controller
        }
        _ => StateKind::Other,
    }
}

/// Class of one mode given its normalised participation column.
///
/// Rotor-dominated oscillations between 0.1 and 0.7 Hz are inter-area,
/// between 0.7 and 2.0 Hz local; modes dominated by control states are
/// control modes.
pub fn mode_class(mode: &Mode, participation: &[f64], labels: &[String]) -> ModeClass {
    let mut sums = [0.0f64; 4];
    for (p, l) in participation.iter().zip(labels) {
        let k = match state_kind(l) {
            StateKind::Rotor => 0,
            StateKind::Flux => 1,
            StateKind::Controller => 2,
            StateKind::Other => 3,
        };
        sums[k] += p;
    }
    let dominant = (0..4).fold(0, |best, k| if sums[k] > sums[best] { k } else { best });
    let f = mode.frequency_hz();
    match dominant {
        0 if mode.is_oscillatory() && (0.1..=0.7).contains(&f) => ModeClass::InterArea,
        0 if mode.is_oscillatory() && f > 0.7 && f <= 2.0 => ModeClass::Local,
        2 => ModeClass::Control,
        _ => ModeClass::Other,
    }
}

/// Sets [`Mode::class`] on every mode.
pub fn classify_modes(modes: &mut [Mode], labels: &[String]) {
    let p = participation_factors(modes);
    for (j, m) in modes.iter_mut().enumerate() {
        let col: Vec<f64> = p.column(j).iter().copied().collect();
        m.class = mode_class(m, &col, labels);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::C64;
    use nalgebra::DVector;

    fn mode(f: f64) -> Mode {
        let w = 2.0 * std::f64::consts::PI * f;
        Mode {
            eigenvalue: C64::new(-0.1, w),
            right: DVector::zeros(2),
            left: DVector::zeros(2),
            class: ModeClass::Other,
        }
    }

    #[test]
    fn frequency_bands() {
        let labels = vec!["G1.dw".to_string(), "G1.vm".to_string()];
        assert_eq!(mode_class(&mode(0.55), &[1.0, 0.2], &labels), ModeClass::InterArea);
        assert_eq!(mode_class(&mode(1.1), &[1.0, 0.2], &labels), ModeClass::Local);
        assert_eq!(mode_class(&mode(0.55), &[0.2, 1.0], &labels), ModeClass::Control);
        assert_eq!(mode_class(&mode(3.0), &[1.0, 0.2], &labels), ModeClass::Other);
    }

    #[test]
    fn kinds_from_labels() {
        assert_eq!(state_kind("G3.delta"), StateKind::Rotor);
        assert_eq!(state_kind("PSS1.xw"), StateKind::Controller);
        assert_eq!(state_kind("C1.xpll"), StateKind::Controller);
        assert_eq!(state_kind("G1.ed_pp"), StateKind::Flux);
        assert_eq!(state_kind("x1"), StateKind::Other);
    }
}

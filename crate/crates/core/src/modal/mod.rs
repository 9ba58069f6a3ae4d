//! Eigen-decomposition of the state matrix, participation factors,
//! residues and transfer-function evaluation.
//!
//! Right eigenvectors are obtained by inverse iteration on the Schur
//! eigenvalues, normalised to unit length with their largest entry real and
//! positive; the left eigenvectors are the rows of `V^-1`, so `w_i v_i = 1`.
//! Conjugate eigenvalues carry exactly conjugate eigenvectors.

mod classify;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear::StateSpaceModel;
use crate::numeric::{angle_deg_positive, damping_ratio, C64};

pub use classify::{classify_modes, mode_class, state_kind, ModeClass, StateKind};

/// Eigenbasis condition number above which the modal transform is refused.
pub const MAX_CONDITION: f64 = 1e10;

/// Normalised participation of a rotor state (angle or speed) at or above
/// which an oscillatory mode counts as rotor-participating.
pub const ROTOR_PARTICIPATION: f64 = 0.2;

/// Relative size of the imaginary part below which an eigenvalue is real.
const REAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct Mode {
    pub eigenvalue: C64,
    pub right: DVector<C64>,
    pub left: DVector<C64>,
    pub class: ModeClass,
}

impl Mode {
    pub fn frequency_hz(&self) -> f64 {
        self.eigenvalue.im.abs() / (2.0 * std::f64::consts::PI)
    }

    pub fn damping_ratio(&self) -> f64 {
        damping_ratio(self.eigenvalue)
    }

    pub fn is_oscillatory(&self) -> bool {
        self.eigenvalue.im.abs() > REAL_TOL * self.eigenvalue.norm().max(1.0)
    }

    /// Upper-half-plane member of a conjugate pair, or a real mode.
    pub fn is_representative(&self) -> bool {
        self.eigenvalue.im >= 0.0
    }
}

/// Result of [`eigen_modes`].
#[derive(Debug, Clone)]
pub struct ModalSet {
    pub modes: Vec<Mode>,
    pub state_labels: Vec<String>,
    /// `||V|| ||V^-1||` in the 1-norm.
    pub condition: f64,
}

impl ModalSet {
    /// True when every eigenvalue has a negative real part.
    pub fn is_stable(&self) -> bool {
        self.modes.iter().all(|m| m.eigenvalue.re < 0.0)
    }

    pub fn eigenvalues(&self) -> Vec<C64> {
        self.modes.iter().map(|m| m.eigenvalue).collect()
    }

    pub fn participation(&self) -> DMatrix<f64> {
        participation_factors(&self.modes)
    }

    /// Largest normalised participation of a rotor state in every mode.
    pub fn rotor_participation(&self) -> Vec<f64> {
        let p = self.participation();
        let rotor: Vec<usize> = (0..self.state_labels.len())
            .filter(|&k| state_kind(&self.state_labels[k]) == StateKind::Rotor)
            .collect();
        (0..self.modes.len()).map(|j| rotor.iter().map(|&k| p[(k, j)]).fold(0.0, f64::max)).collect()
    }

    /// Indices of oscillatory upper-half-plane modes with rotor participation
    /// of at least [`ROTOR_PARTICIPATION`].
    pub fn rotor_modes(&self) -> Vec<usize> {
        let rp = self.rotor_participation();
        (0..self.modes.len())
            .filter(|&j| {
                let m = &self.modes[j];
                m.is_oscillatory() && m.eigenvalue.im > 0.0 && rp[j] >= ROTOR_PARTICIPATION
            })
            .collect()
    }

    /// Least-damped rotor mode as `(index, damping ratio)`.
    pub fn least_damped_rotor_mode(&self) -> Option<(usize, f64)> {
        self.rotor_modes()
            .into_iter()
            .map(|j| (j, self.modes[j].damping_ratio()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Rotor mode with the largest real part; it outlasts the others in a
    /// time response.
    pub fn slowest_rotor_mode(&self) -> Option<usize> {
        self.rotor_modes().into_iter().max_by(|&a, &b| self.modes[a].eigenvalue.re.total_cmp(&self.modes[b].eigenvalue.re))
    }

    /// Mode with the largest real part, if any.
    pub fn rightmost(&self) -> Option<&Mode> {
        self.modes.iter().max_by(|a, b| a.eigenvalue.re.total_cmp(&b.eigenvalue.re))
    }

    /// The `count` states with the highest participation in mode `j`.
    pub fn top_states(&self, j: usize, count: usize) -> Vec<(String, f64)> {
        let p = self.participation();
        let mut all: Vec<(String, f64)> =
            (0..p.nrows()).map(|k| (self.state_labels[k].clone(), p[(k, j)])).collect();
        all.sort_by(|a, b| b.1.total_cmp(&a.1));
        all.truncate(count);
        all
    }
}

fn norm1(m: &DMatrix<C64>) -> f64 {
    (0..m.ncols()).map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
}

fn inverse_iteration(a: &DMatrix<C64>, lambda: C64) -> Option<DVector<C64>> {
    let n = a.nrows();
    let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    let shift = lambda + C64::new(scale * 1e-13, scale * 1e-13);
    let mut m = a.clone();
    for i in 0..n {
        m[(i, i)] -= shift;
    }
    let lu = m.lu();
    let mut v = DVector::from_fn(n, |i, _| C64::new(1.0 + 0.37 * (i as f64 * 1.3).sin(), 0.11 * (i as f64).cos()));
    for _ in 0..4 {
        let next = lu.solve(&v)?;
        let norm = next.norm();
        if !norm.is_finite() || norm == 0.0 {
            return None;
        }
        v = next / C64::new(norm, 0.0);
    }
    Some(v)
}

fn normalize_phase(v: &mut DVector<C64>) {
    let (mut k, mut best) = (0, -1.0);
    for (i, z) in v.iter().enumerate() {
        if z.norm() > best {
            best = z.norm();
            k = i;
        }
    }
    let rot = v[k].conj() / v[k].norm();
    let norm = v.norm();
    for z in v.iter_mut() {
        *z = *z * rot / norm;
    }
    v[k] = C64::new(v[k].re, 0.0);
}

/// All modes of `ss.a`, ordered by decreasing real part with each conjugate
/// pair adjacent (upper member first).
pub fn eigen_modes(ss: &StateSpaceModel) -> Result<ModalSet> {
    eigen_modes_of(&ss.a, &ss.state_labels)
}

pub fn eigen_modes_of(a: &DMatrix<f64>, state_labels: &[String]) -> Result<ModalSet> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension("state matrix is not square".into()));
    }
    if n == 0 {
        return Ok(ModalSet { modes: vec![], state_labels: state_labels.to_vec(), condition: 1.0 });
    }
    let raw = crate::numeric::eigenvalues(a).ok_or_else(|| Error::Eigen("Schur iteration did not converge".into()))?;

    // Representatives: real eigenvalues and upper-half-plane members.
    let mut reps: Vec<C64> = Vec::new();
    for z in &raw {
        if z.im.abs() <= REAL_TOL * z.norm().max(1.0) {
            reps.push(C64::new(z.re, 0.0));
        } else if z.im > 0.0 {
            reps.push(*z);
        }
    }
    let n_pairs = reps.iter().filter(|z| z.im > 0.0).count();
    if reps.len() + n_pairs != n {
        return Err(Error::Eigen("eigenvalues do not pair into conjugates".into()));
    }
    reps.sort_by(|x, y| y.re.partial_cmp(&x.re).unwrap_or(std::cmp::Ordering::Equal).then(y.im.partial_cmp(&x.im).unwrap_or(std::cmp::Ordering::Equal)));

    let ac: DMatrix<C64> = a.map(|v| C64::new(v, 0.0));
    let mut values = Vec::with_capacity(n);
    let mut vectors: Vec<DVector<C64>> = Vec::with_capacity(n);
    for lam in reps {
        let mut v = inverse_iteration(&ac, lam).ok_or_else(|| Error::Eigen(format!("inverse iteration failed at {lam}")))?;
        normalize_phase(&mut v);
        if lam.im == 0.0 {
            v.iter_mut().for_each(|z| z.im = 0.0);
            let norm = v.norm();
            v.iter_mut().for_each(|z| *z /= norm);
            values.push(lam);
            vectors.push(v);
        } else {
            let vc = v.map(|z| z.conj());
            values.push(lam);
            vectors.push(v);
            values.push(lam.conj());
            vectors.push(vc);
        }
    }
    let vmat = DMatrix::from_columns(&vectors);
    let wmat = vmat.clone().try_inverse().ok_or_else(|| Error::Eigen("eigenvector matrix is singular (defective A)".into()))?;
    let condition = norm1(&vmat) * norm1(&wmat);
    if !(condition <= MAX_CONDITION) {
        return Err(Error::Eigen(format!("eigenbasis condition {condition:.3e} exceeds {MAX_CONDITION:e}; A is defective or nearly so")));
    }
    let modes = (0..n)
        .map(|i| Mode {
            eigenvalue: values[i],
            right: vectors[i].clone(),
            left: wmat.row(i).transpose(),
            class: ModeClass::Other,
        })
        .collect();
    Ok(ModalSet { modes, state_labels: state_labels.to_vec(), condition })
}

/// `|v_ki w_ik|` with every mode's column scaled so its largest entry is 1.
/// Rows are states, columns are modes.
pub fn participation_factors(modes: &[Mode]) -> DMatrix<f64> {
    let n = modes.first().map_or(0, |m| m.right.len());
    let mut p = DMatrix::zeros(n, modes.len());
    for (i, m) in modes.iter().enumerate() {
        let mut peak: f64 = 0.0;
        for k in 0..n {
            let v = (m.right[k] * m.left[k]).norm();
            p[(k, i)] = v;
            peak = peak.max(v);
        }
        if peak > 0.0 {
            for k in 0..n {
                p[(k, i)] /= peak;
            }
        }
    }
    p
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidueInfo {
    pub mode_index: usize,
    pub eigenvalue: C64,
    pub residue: C64,
    pub magnitude: f64,
    /// Degrees on [0, 360).
    pub angle_deg: f64,
    pub input: String,
    pub output: String,
    pub controllability: C64,
    pub observability: C64,
    /// True when the conjugate mode carries the conjugate residue.
    pub paired: bool,
}

/// Residues of every representative mode (real modes and the upper member of
/// each conjugate pair) for one input/output pair.
pub fn residues(ss: &StateSpaceModel, input: &str, output: &str) -> Result<Vec<ResidueInfo>> {
    let modes = eigen_modes(ss)?;
    residues_with(&modes, ss, input, output)
}

pub fn residues_with(modes: &ModalSet, ss: &StateSpaceModel, input: &str, output: &str) -> Result<Vec<ResidueInfo>> {
    let (b, c, _) = ss.siso(input, output)?;
    Ok(modes
        .modes
        .iter()
        .enumerate()
        .filter(|(_, m)| m.is_representative())
        .map(|(i, m)| {
            let ctrl: C64 = m.left.iter().zip(&b).map(|(w, bk)| w * bk).sum();
            let obs: C64 = m.right.iter().zip(&c).map(|(v, ck)| v * ck).sum();
            let r = obs * ctrl;
            ResidueInfo {
                mode_index: i,
                eigenvalue: m.eigenvalue,
                residue: r,
                magnitude: r.norm(),
                angle_deg: angle_deg_positive(r),
                input: input.into(),
                output: output.into(),
                controllability: ctrl,
                observability: obs,
                paired: m.is_oscillatory(),
            }
        })
        .collect())
}

/// `d + sum R_i/(s - lambda_i)` over all modes, restoring conjugate partners.
pub fn residue_sum(residues: &[ResidueInfo], d: f64, s: C64) -> C64 {
    let mut acc = C64::new(d, 0.0);
    for r in residues {
        acc += r.residue / (s - r.eigenvalue);
        if r.paired {
            acc += r.residue.conj() / (s - r.eigenvalue.conj());
        }
    }
    acc
}

/// A single-input single-output view that evaluates `c (sI - A)^-1 b + d`.
#[derive(Debug, Clone)]
pub struct Siso {
    a: DMatrix<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    d: f64,
    poles: Vec<C64>,
}

impl Siso {
    pub fn new(ss: &StateSpaceModel, input: &str, output: &str) -> Result<Self> {
        let (b, c, d) = ss.siso(input, output)?;
        let poles = crate::numeric::eigenvalues(&ss.a).ok_or_else(|| Error::Eigen("Schur iteration did not converge".into()))?;
        Ok(Self { a: ss.a.clone(), b, c, d, poles })
    }

    pub fn eval(&self, s: C64) -> Result<C64> {
        if let Some(p) = self.poles.iter().find(|p| (s - **p).norm() <= 1e-9) {
            return Err(Error::NearPole(format!("s = {s} (pole {p})")));
        }
        let n = self.a.nrows();
        if n == 0 {
            return Ok(C64::new(self.d, 0.0));
        }
        let mut m: DMatrix<C64> = self.a.map(|v| C64::new(-v, 0.0));
        for i in 0..n {
            m[(i, i)] += s;
        }
        let rhs = DVector::from_iterator(n, self.b.iter().map(|v| C64::new(*v, 0.0)));
        let x = m.lu().solve(&rhs).ok_or_else(|| Error::NearPole(format!("s = {s}")))?;
        Ok(x.iter().zip(&self.c).map(|(xi, ci)| xi * ci).sum::<C64>() + self.d)
    }

    /// Phase in degrees and magnitude at `freq_hz`.
    pub fn frequency_response(&self, freq_hz: f64) -> Result<(f64, f64)> {
        let g = self.eval(C64::new(0.0, 2.0 * std::f64::consts::PI * freq_hz))?;
        Ok((g.arg().to_degrees(), g.norm()))
    }
}

/// `c (sI - A)^-1 b + d` by a direct linear solve.
pub fn tf_eval(ss: &StateSpaceModel, input: &str, output: &str, s: C64) -> Result<C64> {
    Siso::new(ss, input, output)?.eval(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ss(a: &[f64], n: usize, b: &[f64], c: &[f64], d: f64) -> StateSpaceModel {
        StateSpaceModel::new(
            DMatrix::from_row_slice(n, n, a),
            DMatrix::from_column_slice(n, 1, b),
            DMatrix::from_row_slice(1, n, c),
            DMatrix::from_element(1, 1, d),
            (0..n).map(|i| format!("x{i}")).collect(),
            vec!["u".into()],
            vec!["z".into()],
        )
        .unwrap()
    }

    #[test]
    fn diagonal_modes() {
        let m = eigen_modes(&ss(&[-1.0, 0.0, 0.0, -2.0], 2, &[1.0, 1.0], &[1.0, 1.0], 0.0)).unwrap();
        let mut ev: Vec<f64> = m.eigenvalues().iter().map(|z| z.re).collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(ev, vec![-2.0, -1.0]);
        assert!(m.is_stable());
        let p = m.participation();
        // identity pattern up to ordering: each column has a single unit entry
        for j in 0..2 {
            let col: Vec<f64> = p.column(j).iter().copied().collect();
            assert!(col.iter().filter(|v| (**v - 1.0).abs() < 1e-12).count() == 1);
            assert!(col.iter().filter(|v| v.abs() < 1e-12).count() == 1);
        }
    }

    #[test]
    fn undamped_oscillator() {
        let w0 = 3.0;
        let m = eigen_modes(&ss(&[0.0, 1.0, -w0 * w0, 0.0], 2, &[0.0, 1.0], &[1.0, 0.0], 0.0)).unwrap();
        let up = &m.modes[0];
        assert!((up.eigenvalue - C64::new(0.0, w0)).norm() < 1e-12);
        assert!(up.damping_ratio().abs() < 1e-12);
        assert!(!m.is_stable());
    }

    #[test]
    fn diagonal_residues_are_unity() {
        let s = ss(&[-1.0, 0.0, 0.0, -2.0], 2, &[1.0, 1.0], &[1.0, 1.0], 0.0);
        let r = residues(&s, "u", "z").unwrap();
        assert_eq!(r.len(), 2);
        for ri in &r {
            assert!((ri.residue - C64::new(1.0, 0.0)).norm() < 1e-12);
        }
        let g0 = tf_eval(&s, "u", "z", C64::new(0.0, 0.0)).unwrap();
        assert!((g0 - C64::new(1.5, 0.0)).norm() < 1e-12);
        let ginf = tf_eval(&s, "u", "z", C64::new(1e9, 0.0)).unwrap();
        assert!(ginf.norm() < 1e-8);
    }

    #[test]
    fn unobservable_mode_has_zero_residue() {
        let s = ss(&[-1.0, 0.0, 0.0, -2.0], 2, &[1.0, 1.0], &[0.0, 1.0], 0.0);
        let r = residues(&s, "u", "z").unwrap();
        let at_minus_one = r.iter().find(|ri| (ri.eigenvalue.re + 1.0).abs() < 1e-12).unwrap();
        assert!(at_minus_one.residue.norm() < 1e-14);
    }

    #[test]
    fn pole_evaluation_is_refused() {
        let s = ss(&[-1.0, 0.0, 0.0, -2.0], 2, &[1.0, 1.0], &[1.0, 1.0], 0.0);
        assert!(matches!(tf_eval(&s, "u", "z", C64::new(-1.0, 0.0)), Err(Error::NearPole(_))));
    }

    #[test]
    fn jordan_block_is_rejected() {
        let s = ss(&[-1.0, 1.0, 0.0, -1.0], 2, &[1.0, 1.0], &[1.0, 1.0], 0.0);
        assert!(matches!(eigen_modes(&s), Err(Error::Eigen(_))));
    }

    #[test]
    fn symmetric_two_machine_participation() {
        // Two identical machines tied together and to ground: states (d1, w1, d2, w2)
        let (k, kc, m) = (1.0, 0.5, 2.0);
        #[rustfmt::skip]
        let a = [
            0.0, 1.0, 0.0, 0.0,
            -(k + kc) / m, -0.05, kc / m, 0.0,
            0.0, 0.0, 0.0, 1.0,
            kc / m, 0.0, -(k + kc) / m, -0.05,
        ];
        let s = ss(&a, 4, &[0.0, 1.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0], 0.0);
        let set = eigen_modes(&s).unwrap();
        let p = set.participation();
        // anti-phase mode has the higher frequency sqrt((k+2kc)/m)
        let w_anti = ((k + 2.0 * kc) / m - 0.05f64.powi(2) / 4.0).sqrt();
        let j = set.modes.iter().position(|md| (md.eigenvalue.im - w_anti).abs() < 1e-9).unwrap();
        assert!((p[(0, j)] - p[(2, j)]).abs() < 1e-8);
    }
}

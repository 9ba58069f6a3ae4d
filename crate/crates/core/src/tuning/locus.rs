//! Root locus over a stabilizer gain and the gain-selection rule.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{OperatingPoint, PowerSystemModel, PssParams};
use crate::linear::{linearize, StateSpaceModel};
use crate::modal::{eigen_modes, ModalSet};
use crate::numeric::{damping_ratio, eigenvalues, match_by_continuity, C64};

/// Closed-loop small-signal picture of a model.
#[derive(Debug, Clone)]
pub struct Assessment {
    pub modes: ModalSet,
    /// Least damping ratio over rotor modes, or over unstable modes when lower.
    pub score: f64,
    pub min_rotor_damping: f64,
    pub stable: bool,
    pub max_real: f64,
}

impl Assessment {
    pub fn from_modes(modes: ModalSet) -> Self {
        let min_rotor_damping = modes.least_damped_rotor_mode().map_or(1.0, |(_, xi)| xi);
        let max_real = modes.rightmost().map_or(f64::NEG_INFINITY, |m| m.eigenvalue.re);
        let stable = max_real < 0.0;
        Self { score: damping_score(&modes), modes, min_rotor_damping, stable, max_real }
    }
}

/// Full-model linearisation and modal assessment.
pub fn assess(model: &PowerSystemModel, op: &OperatingPoint) -> Result<Assessment> {
    let ss = linearize(model, op, &[], &[])?;
    Ok(Assessment::from_modes(eigen_modes(&ss)?))
}

/// Minimum damping ratio over rotor modes and over modes in the right half
/// plane; the quantity maximised when selecting a gain.
pub fn damping_score(modes: &ModalSet) -> f64 {
    let rotor = modes.rotor_modes().into_iter().map(|j| modes.modes[j].damping_ratio());
    let unstable = modes.modes.iter().filter(|m| m.eigenvalue.re >= 0.0).map(|m| m.damping_ratio());
    rotor.chain(unstable).fold(1.0, f64::min)
}

/// Fallback score from eigenvalues alone: electromechanical band plus
/// unstable eigenvalues.
fn eigen_score(values: &[C64]) -> f64 {
    values
        .iter()
        .filter(|z| {
            let f = z.im.abs() / (2.0 * std::f64::consts::PI);
            z.re >= 0.0 || (z.im > 0.0 && (0.1..=2.0).contains(&f))
        })
        .map(|z| damping_ratio(*z))
        .fold(1.0, f64::min)
}

#[derive(Debug, Clone, Serialize)]
pub struct RootLocus {
    pub slot: String,
    /// Stabilizer without its gain.
    pub candidate: PssParams,
    /// Ascending; the first point is normally zero.
    pub gains: Vec<f64>,
    /// Eigenvalues per gain, ordered so that index `i` follows one branch.
    pub poles: Vec<Vec<C64>>,
    pub scores: Vec<f64>,
    /// Plant poles with the slot disabled plus the stabilizer's own poles.
    pub open_loop: Vec<C64>,
    /// Finite zeros of plant times stabilizer shape.
    pub zeros: Vec<C64>,
}

impl RootLocus {
    /// Union of two loci over the same slot and candidate, re-sorted by gain.
    pub fn merge(&self, other: &RootLocus) -> RootLocus {
        let mut pts: Vec<(f64, Vec<C64>, f64)> = self
            .gains
            .iter()
            .zip(&self.poles)
            .zip(&self.scores)
            .chain(other.gains.iter().zip(&other.poles).zip(&other.scores))
            .map(|((g, p), s)| (*g, p.clone(), *s))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts.dedup_by(|a, b| a.0 == b.0);
        let mut out = RootLocus { gains: vec![], poles: vec![], scores: vec![], ..self.clone() };
        for (g, p, s) in pts {
            let p = match out.poles.last() {
                Some(prev) if prev.len() == p.len() => match_by_continuity(prev, &p),
                _ => p,
            };
            out.gains.push(g);
            out.poles.push(p);
            out.scores.push(s);
        }
        out
    }

    pub fn index_of(&self, gain: f64) -> Option<usize> {
        self.gains.iter().position(|g| *g == gain)
    }
}

/// Poles contributed by the washout and the active lead-lag stages.
pub fn stabilizer_poles(p: &PssParams) -> Vec<C64> {
    let mut v = vec![C64::new(-1.0 / p.tw, 0.0)];
    if p.t1 != p.t2 {
        v.push(C64::new(-1.0 / p.t2, 0.0));
    }
    if p.t3 != p.t4 {
        v.push(C64::new(-1.0 / p.t4, 0.0));
    }
    v
}

fn stabilizer_zeros(p: &PssParams) -> Vec<C64> {
    let mut v = vec![C64::new(0.0, 0.0)];
    if p.t1 != p.t2 {
        v.push(C64::new(-1.0 / p.t1, 0.0));
    }
    if p.t3 != p.t4 {
        v.push(C64::new(-1.0 / p.t3, 0.0));
    }
    v
}

/// Finite transmission zeros of a SISO model with zero feedthrough.
///
/// With relative degree `r` the zeros are the eigenvalues of
/// `(I - b (c A^{r-1} b)^-1 c A^{r-1}) A` other than its `r` null ones.
pub fn siso_zeros(a: &DMatrix<f64>, b: &[f64], c: &[f64]) -> Vec<C64> {
    let n = a.nrows();
    let b = nalgebra::DVector::from_column_slice(b);
    let c = nalgebra::RowDVector::from_row_slice(c);
    let scale = a.norm().max(1.0);
    let mut row = c.clone();
    for r in 1..=n {
        let markov = (&row * &b)[0];
        if markov.abs() > 1e-9 * row.norm() * b.norm().max(1e-300) {
            let proj = DMatrix::identity(n, n) - &b * &row / markov;
            let az = proj * a;
            let mut ev = match eigenvalues(&az) {
                Some(ev) => ev,
                None => return vec![],
            };
            ev.sort_by(|x, y| x.norm().total_cmp(&y.norm()));
            return ev.into_iter().skip(r).filter(|z| z.norm() < 1e6 * scale).collect();
        }
        row = &row * a;
    }
    vec![]
}

fn closed_loop_eigs(model: &PowerSystemModel, op: &OperatingPoint, slot: &str, params: &PssParams) -> Result<(Vec<C64>, f64)> {
    let mut m = model.clone();
    let s = m.pss_slot_mut(slot).ok_or_else(|| Error::UnknownLabel(format!("stabilizer {slot}")))?;
    s.params = params.clone();
    s.enabled = true;
    let ss = linearize(&m, op, &[], &[])?;
    let values = eigenvalues(&ss.a).ok_or_else(|| Error::Eigen(format!("gain {}: Schur iteration failed", params.k)))?;
    let score = match eigen_modes(&ss) {
        Ok(set) => damping_score(&set),
        Err(_) => eigen_score(&values),
    };
    Ok((values, score))
}

/// Model with `slot` disabled, linearised from the host's `vref` to its
/// speed.
pub fn open_loop_plant(model: &PowerSystemModel, op: &OperatingPoint, slot: &str) -> Result<(StateSpaceModel, String, String)> {
    let host = model.pss_host(slot).ok_or_else(|| Error::UnknownLabel(format!("stabilizer {slot}")))?;
    let gen = &model.machines[host].id;
    let mut m = model.clone();
    m.pss_slot_mut(slot).expect("slot exists").enabled = false;
    let (input, output) = (format!("{gen}.vref"), format!("{gen}.dw"));
    let ss = linearize(&m, op, &[&input], &[&output])?;
    Ok((ss, input, output))
}

/// Eigenvalues of the closed loop for every gain in `gains` with the slot's
/// time constants taken from `candidate`. A zero gain reproduces the
/// disabled-slot spectrum together with the stabilizer's own poles.
pub fn root_locus(
    model: &PowerSystemModel,
    op: &OperatingPoint,
    slot: &str,
    candidate: &PssParams,
    gains: &[f64],
) -> Result<RootLocus> {
    check_gains(gains)?;
    let (plant, input, output) = open_loop_plant(model, op, slot)?;
    locus_from(slot, &plant, &input, &output, candidate, gains, &|p| closed_loop_eigs(model, op, slot, p))
}

/// Root locus of an imported open-loop model with the stabilizer fed from
/// `output` back into `input`.
pub fn root_locus_state_space(
    plant: &StateSpaceModel,
    input: &str,
    output: &str,
    slot: &str,
    candidate: &PssParams,
    gains: &[f64],
) -> Result<RootLocus> {
    check_gains(gains)?;
    locus_from(slot, plant, input, output, candidate, gains, &|p| {
        let ss = close_loop(plant, input, output, p, slot)?;
        let values = eigenvalues(&ss.a).ok_or_else(|| Error::Eigen(format!("gain {}: Schur iteration failed", p.k)))?;
        let score = match eigen_modes(&ss) {
            Ok(set) => damping_score(&set),
            Err(_) => eigen_score(&values),
        };
        Ok((values, score))
    })
}

fn check_gains(gains: &[f64]) -> Result<()> {
    if gains.windows(2).any(|w| !(w[0] < w[1])) || gains.iter().any(|g| !(*g >= 0.0)) {
        return Err(Error::OutOfRange("gain grid must be non-negative and strictly ascending".into()));
    }
    Ok(())
}

type ClosedLoop<'a> = dyn Fn(&PssParams) -> Result<(Vec<C64>, f64)> + 'a;

fn locus_from(
    slot: &str,
    plant: &StateSpaceModel,
    input: &str,
    output: &str,
    candidate: &PssParams,
    gains: &[f64],
    closed: &ClosedLoop,
) -> Result<RootLocus> {
    let plant_modes = eigen_modes(plant)?;
    let mut open_loop = plant_modes.eigenvalues();
    open_loop.extend(stabilizer_poles(candidate));
    let (b, c, _) = plant.siso(input, output)?;
    let mut zeros = siso_zeros(&plant.a, &b, &c);
    zeros.extend(stabilizer_zeros(candidate));

    let mut locus = RootLocus {
        slot: slot.to_string(),
        candidate: candidate.with_gain(0.0),
        gains: vec![],
        poles: vec![],
        scores: vec![],
        open_loop: open_loop.clone(),
        zeros,
    };
    for &k in gains {
        let (values, score) = if k == 0.0 {
            (open_loop.clone(), damping_score(&plant_modes))
        } else {
            closed(&candidate.with_gain(k))?
        };
        let values = match locus.poles.last() {
            Some(prev) if prev.len() == values.len() => match_by_continuity(prev, &values),
            _ => values,
        };
        locus.gains.push(k);
        locus.poles.push(values);
        locus.scores.push(score);
    }
    Ok(locus)
}

/// State-space form of the linear stabilizer (limiter ignored): washout,
/// then each lead-lag stage with distinct time constants, then the gain.
/// Returns `(A, B, C, D)` and the state names.
pub fn stabilizer_state_space(p: &PssParams) -> (DMatrix<f64>, Vec<f64>, Vec<f64>, f64, Vec<&'static str>) {
    // stages as (pole time constant, direct term, state term)
    let mut stages = vec![(p.tw, 1.0, -1.0)];
    let mut names = vec!["xw"];
    for (t_num, t_den, name) in [(p.t1, p.t2, "x1"), (p.t3, p.t4, "x2")] {
        if t_num != t_den {
            stages.push((t_den, t_num / t_den, 1.0 - t_num / t_den));
            names.push(name);
        }
    }
    // x_i' = (u_i - x_i)/T_i, u_{i+1} = d_i u_i + e_i x_i
    let n = stages.len();
    let mut a = DMatrix::zeros(n, n);
    let mut b = vec![0.0; n];
    // u_i = in_gain[i] u + sum_j in_state[i][j] x_j
    let mut in_gain = 1.0;
    let mut in_state = vec![0.0; n];
    for (i, (t, d, e)) in stages.iter().enumerate() {
        b[i] = in_gain / t;
        for j in 0..n {
            a[(i, j)] = in_state[j] / t;
        }
        a[(i, i)] -= 1.0 / t;
        in_gain *= d;
        for v in in_state.iter_mut() {
            *v *= d;
        }
        in_state[i] += e;
    }
    let c = in_state.iter().map(|v| p.k * v).collect();
    (a, b, c, p.k * in_gain, names)
}

/// Plant with the stabilizer closing the loop from `output` to `input`.
/// The stabilizer states are labelled `<slot>.xw`, `<slot>.x1`, ...
pub fn close_loop(plant: &StateSpaceModel, input: &str, output: &str, p: &PssParams, slot: &str) -> Result<StateSpaceModel> {
    let (b, c, d) = plant.siso(input, output)?;
    let (ap, bp, cp, dp, names) = stabilizer_state_space(p);
    let den = 1.0 - dp * d;
    if den.abs() < 1e-12 {
        return Err(Error::OutOfRange("algebraic loop through the feedthrough terms".into()));
    }
    let (n, m) = (plant.n_states(), ap.nrows());
    // u = kx x + kp xp, y = c x + d u
    let kx: Vec<f64> = c.iter().map(|v| dp * v / den).collect();
    let kp: Vec<f64> = cp.iter().map(|v| v / den).collect();
    let yx: Vec<f64> = c.iter().zip(&kx).map(|(ci, k)| ci + d * k).collect();
    let yp: Vec<f64> = kp.iter().map(|k| d * k).collect();
    let mut a = DMatrix::zeros(n + m, n + m);
    a.view_mut((0, 0), (n, n)).copy_from(&plant.a);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] += b[i] * kx[j];
        }
        for j in 0..m {
            a[(i, n + j)] = b[i] * kp[j];
        }
    }
    for i in 0..m {
        for j in 0..n {
            a[(n + i, j)] = bp[i] * yx[j];
        }
        for j in 0..m {
            a[(n + i, n + j)] = ap[(i, j)] + bp[i] * yp[j];
        }
    }
    let mut labels = plant.state_labels.clone();
    labels.extend(names.iter().map(|s| format!("{slot}.{s}")));
    StateSpaceModel::new(
        a,
        DMatrix::zeros(n + m, 0),
        DMatrix::zeros(0, n + m),
        DMatrix::zeros(0, 0),
        labels,
        vec![],
        vec![],
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GainSelection {
    pub gain: f64,
    pub min_damping: f64,
    pub stabilizable: bool,
}

/// Gain with the largest score, the smaller gain on ties. Zero gains are
/// never selected when a positive gain exists.
pub fn select_gain(locus: &RootLocus) -> Result<GainSelection> {
    let mut best: Option<(f64, f64)> = None;
    for (g, s) in locus.gains.iter().zip(&locus.scores) {
        if *g == 0.0 && locus.gains.len() > 1 {
            continue;
        }
        if best.is_none_or(|(_, bs)| *s > bs) {
            best = Some((*g, *s));
        }
    }
    let (gain, min_damping) = best.ok_or_else(|| Error::Tuning { slot: locus.slot.clone(), reason: "empty gain grid".into() })?;
    Ok(GainSelection { gain, min_damping, stabilizable: min_damping > 0.0 })
}

/// Coarse grid, then a finer grid between the neighbours of the best point.
pub fn locus_with_refinement(
    model: &PowerSystemModel,
    op: &OperatingPoint,
    slot: &str,
    candidate: &PssParams,
    cfg: &super::TuningConfig,
) -> Result<(RootLocus, GainSelection)> {
    refine(cfg, &|g| root_locus(model, op, slot, candidate, g))
}

/// [`locus_with_refinement`] for an imported open-loop model.
pub fn state_space_locus_with_refinement(
    plant: &StateSpaceModel,
    input: &str,
    output: &str,
    slot: &str,
    candidate: &PssParams,
    cfg: &super::TuningConfig,
) -> Result<(RootLocus, GainSelection)> {
    refine(cfg, &|g| root_locus_state_space(plant, input, output, slot, candidate, g))
}

fn refine(cfg: &super::TuningConfig, locus: &dyn Fn(&[f64]) -> Result<RootLocus>) -> Result<(RootLocus, GainSelection)> {
    let mut grid = vec![0.0];
    grid.extend(cfg.gain_grid());
    let coarse = locus(&grid)?;
    let sel = select_gain(&coarse)?;
    let i = coarse.index_of(sel.gain).unwrap_or(1);
    let lo = coarse.gains[i.saturating_sub(1).max(1)];
    let hi = coarse.gains[(i + 1).min(coarse.gains.len() - 1)];
    if cfg.refine_points == 0 || !(hi > lo) {
        return Ok((coarse, sel));
    }
    let fine: Vec<f64> = crate::numeric::logspace(lo, hi, cfg.refine_points + 2)
        .into_iter()
        .filter(|g| !coarse.gains.contains(g))
        .collect();
    let refined = locus(&fine)?;
    let merged = coarse.merge(&refined);
    let sel = select_gain(&merged)?;
    Ok((merged, sel))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeros_of_known_plant() {
        // (s + 2)/((s + 1)(s + 3)(s + 4)) in controllable canonical form
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, -12.0, -19.0, -8.0]);
        let z = siso_zeros(&a, &[0.0, 0.0, 1.0], &[2.0, 1.0, 0.0]);
        assert_eq!(z.len(), 1);
        assert!((z[0] - C64::new(-2.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn selection_prefers_smaller_gain_on_ties() {
        let locus = RootLocus {
            slot: "P".into(),
            candidate: PssParams::new(0.0, 10.0, 1.0, 1.0, 1.0, 1.0),
            gains: vec![0.0, 1.0, 2.0, 3.0],
            poles: vec![vec![]; 4],
            scores: vec![-0.1, 0.2, 0.2, 0.1],
            open_loop: vec![],
            zeros: vec![],
        };
        let s = select_gain(&locus).unwrap();
        assert_eq!(s.gain, 1.0);
        assert!(s.stabilizable);
    }
}

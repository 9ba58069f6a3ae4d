//! Damped-sinusoid fitting of simulated channels and the stability verdict.
//!
//! The post-disturbance signal is decimated and decomposed into exponential
//! components with the matrix-pencil method; the dominant oscillation is then
//! refined by Gauss-Newton on its `(sigma, omega)` with all amplitudes solved
//! linearly at every iterate.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::Trajectory;
use crate::error::{Error, Result};
use crate::numeric::{eigenvalues, C64};

/// Growth rate above which a channel is growing; its negative bounds decay.
pub const GROWING_SIGMA: f64 = 0.005;

/// Oscillations slower than this are treated as drifts.
const MIN_OSC_HZ: f64 = 0.05;
const SAMPLE_INTERVAL: f64 = 0.025;
const MAX_SAMPLES: usize = 600;
const MAX_COMPONENTS: usize = 40;
const RANK_TOL: f64 = 1e-7;
const RESIDUAL_TOL: f64 = 1e-4;
const SIGNIFICANCE: f64 = 1e-3;
/// Components claiming more than this multiple of the observed span are
/// cancellation artefacts of the decomposition.
const MAX_PEAK_RATIO: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FittedMode {
    pub sigma: f64,
    /// Zero for a real exponential.
    pub freq_hz: f64,
    /// Initial amplitude (of the real signal for a conjugate pair).
    pub amplitude: f64,
    /// Largest absolute contribution over the fitted window.
    pub peak: f64,
}

impl FittedMode {
    pub fn is_oscillatory(&self) -> bool {
        self.freq_hz >= MIN_OSC_HZ
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StabilityClass {
    Decaying,
    Sustained,
    Growing,
}

impl StabilityClass {
    pub fn from_sigma(sigma: f64) -> Self {
        if sigma > GROWING_SIGMA {
            StabilityClass::Growing
        } else if sigma < -GROWING_SIGMA {
            StabilityClass::Decaying
        } else {
            StabilityClass::Sustained
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StabilityClass::Decaying => "decaying",
            StabilityClass::Sustained => "sustained",
            StabilityClass::Growing => "growing",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityVerdict {
    pub class: StabilityClass,
    pub sigma: f64,
    pub freq_hz: f64,
    pub channel: String,
    /// False when no oscillatory component was found.
    pub oscillatory: bool,
    /// True when the verdict came from the envelope fallback.
    pub fallback: bool,
    pub components: Vec<FittedMode>,
}

fn basis(t: &[f64], poles: &[(f64, f64)]) -> DMatrix<f64> {
    let cols: usize = 1 + poles.iter().map(|p| if p.1 > 0.0 { 2 } else { 1 }).sum::<usize>();
    let mut b = DMatrix::zeros(t.len(), cols);
    for (i, &ti) in t.iter().enumerate() {
        b[(i, 0)] = 1.0;
        let mut c = 1;
        for &(s, w) in poles {
            let e = (s * ti).exp();
            if w > 0.0 {
                b[(i, c)] = e * (w * ti).cos();
                b[(i, c + 1)] = e * (w * ti).sin();
                c += 2;
            } else {
                b[(i, c)] = e;
                c += 1;
            }
        }
    }
    b
}

fn linear_fit(t: &[f64], y: &DVector<f64>, poles: &[(f64, f64)]) -> Option<(DVector<f64>, f64)> {
    let b = basis(t, poles);
    let coef = b.clone().svd(true, true).solve(y, 1e-13).ok()?;
    let r = &b * &coef - y;
    Some((coef, r.norm_squared()))
}

fn decimate(dt: f64, y: &[f64]) -> (Vec<f64>, f64) {
    let mut stride = ((SAMPLE_INTERVAL / dt).floor() as usize).max(1);
    while y.len() / stride > MAX_SAMPLES {
        stride += 1;
    }
    (y.iter().step_by(stride).copied().collect(), dt * stride as f64)
}

/// Continuous-time poles `(sigma, omega >= 0)` of a pencil of order `order`.
fn pencil_poles(v: &DMatrix<f64>, order: usize, l: usize, h: f64) -> Option<Vec<(f64, f64)>> {
    let vm = v.columns(0, order);
    let v1 = vm.rows(0, l).into_owned();
    let v2 = vm.rows(1, l).into_owned();
    let pencil = v1.pseudo_inverse(1e-14).ok()? * v2;
    let z = eigenvalues(&pencil)?;
    let mut poles = Vec::new();
    for zk in z {
        if zk.norm() < 1e-12 {
            continue;
        }
        let s: C64 = zk.ln() / h;
        if s.im < -1e-9 {
            continue;
        }
        let w = if s.im.abs() <= 1e-9 { 0.0 } else { s.im };
        if s.re.abs() < 1e-6 && w == 0.0 {
            continue; // the offset, already in the basis
        }
        poles.push((s.re, w));
    }
    Some(poles)
}

/// Exponential components of `y` sampled every `dt` from `t = 0`, strongest
/// first. A constant offset is removed and not reported. The model order is
/// the smallest one that reproduces the samples to `RESIDUAL_TOL` of their
/// RMS deviation from the mean.
pub fn fit_damped_modes(dt: f64, y: &[f64]) -> Result<Vec<FittedMode>> {
    let (ys, h) = decimate(dt, y);
    let n = ys.len();
    if n < 20 {
        return Err(Error::OutOfRange("too few samples to fit".into()));
    }
    let t: Vec<f64> = (0..n).map(|k| k as f64 * h).collect();
    let mean = ys.iter().sum::<f64>() / n as f64;
    let scale = (ys.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    if scale == 0.0 {
        return Ok(vec![]);
    }

    let l = n / 3;
    let hankel = DMatrix::from_fn(n - l, l + 1, |i, j| ys[i + j]);
    let svd = hankel.svd(false, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let max_order = svd.singular_values.iter().filter(|s| **s > RANK_TOL * smax).count().clamp(1, MAX_COMPONENTS);
    let v = svd.v_t.ok_or_else(|| Error::Eigen("pencil SVD failed".into()))?.transpose();
    let yv = DVector::from_column_slice(&ys);

    let mut best: Option<(Vec<(f64, f64)>, DVector<f64>, f64)> = None;
    for order in 1..=max_order {
        let Some(poles) = pencil_poles(&v, order, l, h) else { continue };
        let Some((coef, cost)) = linear_fit(&t, &yv, &poles) else { continue };
        let rel = (cost / n as f64).sqrt() / scale;
        let better = best.as_ref().is_none_or(|b| rel < b.2);
        if better {
            best = Some((poles, coef, rel));
        }
        if rel <= RESIDUAL_TOL {
            break;
        }
    }
    let (poles, coef, _) = best.ok_or_else(|| Error::Eigen("matrix pencil failed".into()))?;
    let t_end = *t.last().unwrap();
    let mut out = Vec::with_capacity(poles.len());
    let mut c = 1;
    for &(s, w) in &poles {
        let amplitude = if w > 0.0 {
            let a = coef[c].hypot(coef[c + 1]);
            c += 2;
            a
        } else {
            let a = coef[c].abs();
            c += 1;
            a
        };
        let peak = amplitude * (s * t_end).exp().max(1.0);
        out.push(FittedMode { sigma: s, freq_hz: w / (2.0 * std::f64::consts::PI), amplitude, peak });
    }
    out.sort_by(|a, b| b.peak.total_cmp(&a.peak));
    Ok(out)
}

/// Gauss-Newton refinement of component `k` with the others held fixed.
fn refine(t: &[f64], y: &DVector<f64>, comps: &[FittedMode], k: usize) -> FittedMode {
    let mut poles: Vec<(f64, f64)> =
        comps.iter().map(|c| (c.sigma, 2.0 * std::f64::consts::PI * c.freq_hz)).collect();
    let Some((_, mut cost)) = linear_fit(t, y, &poles) else { return comps[k] };
    let residual = |p: &[(f64, f64)]| -> Option<DVector<f64>> {
        let b = basis(t, p);
        let coef = b.clone().svd(true, true).solve(y, 1e-13).ok()?;
        Some(&b * coef - y)
    };
    for _ in 0..10 {
        let Some(r0) = residual(&poles) else { break };
        let mut jac = DMatrix::zeros(t.len(), 2);
        for d in 0..2 {
            let mut p = poles.clone();
            let step = 1e-6 * (1.0 + if d == 0 { poles[k].0.abs() } else { poles[k].1 });
            if d == 0 {
                p[k].0 += step;
            } else {
                p[k].1 += step;
            }
            let Some(r) = residual(&p) else { return comps[k] };
            jac.set_column(d, &((r - &r0) / step));
        }
        let Ok(delta) = jac.clone().svd(true, true).solve(&(-&r0), 1e-12) else { break };
        let mut trial = poles.clone();
        trial[k].0 += delta[0];
        trial[k].1 += delta[1];
        match linear_fit(t, y, &trial) {
            Some((_, c)) if c < cost && trial[k].1 > 0.0 => {
                let done = (cost - c) <= 1e-12 * cost.max(1e-300);
                poles = trial;
                cost = c;
                if done {
                    break;
                }
            }
            _ => break,
        }
    }
    FittedMode { sigma: poles[k].0, freq_hz: poles[k].1 / (2.0 * std::f64::consts::PI), ..comps[k] }
}

fn envelope_verdict(channel: &str, t: &[f64], y: &[f64]) -> StabilityVerdict {
    let n = y.len();
    let third = (n / 3).max(1);
    let mean = y.iter().sum::<f64>() / n as f64;
    let head = y[..third].iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    let tail = y[n - third..].iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    let span = t[n - 1] - t[0];
    let sigma = if head > 0.0 && tail > 0.0 { (tail / head).ln() / (span * 2.0 / 3.0) } else { f64::NEG_INFINITY };
    StabilityVerdict {
        class: StabilityClass::from_sigma(sigma),
        sigma,
        freq_hz: 0.0,
        channel: channel.into(),
        oscillatory: false,
        fallback: true,
        components: vec![],
    }
}

/// Verdict for `channel` from the first sample that departs from the
/// initial value onwards.
pub fn classify_stability(traj: &Trajectory, channel: &str) -> Result<StabilityVerdict> {
    let y = traj.channel(channel).ok_or_else(|| Error::UnknownLabel(format!("channel {channel}")))?;
    if y.is_empty() {
        return Err(Error::OutOfRange("empty trajectory".into()));
    }
    let y0 = y[0];
    let start = y.iter().position(|v| (v - y0).abs() > 1e-10 * y0.abs().max(1.0));
    let quiet = StabilityVerdict {
        class: StabilityClass::Decaying,
        sigma: f64::NEG_INFINITY,
        freq_hz: 0.0,
        channel: channel.into(),
        oscillatory: false,
        fallback: false,
        components: vec![],
    };
    let Some(start) = start else { return Ok(quiet) };
    let seg = &y[start..];
    let span = seg.iter().copied().fold(f64::NEG_INFINITY, f64::max) - seg.iter().copied().fold(f64::INFINITY, f64::min);
    if span <= 1e-12 * y0.abs().max(1.0) {
        return Ok(quiet);
    }
    // An oscillation that grows into a limiter ends as a limit cycle; its
    // growth is judged on the stretch before the envelope levels off.
    if let Some(g) = growth_segment(traj.dt, y0, seg) {
        let lead_span = g.lead.iter().copied().fold(f64::NEG_INFINITY, f64::max) - g.lead.iter().copied().fold(f64::INFINITY, f64::min);
        let v = fit_segment(channel, traj.dt, g.lead, lead_span);
        if v.class == StabilityClass::Growing && v.sigma <= 3.0 * g.sigma {
            return Ok(v);
        }
        let full = fit_segment(channel, traj.dt, seg, span);
        if full.class == StabilityClass::Growing {
            return Ok(full);
        }
        return Ok(StabilityVerdict {
            class: StabilityClass::from_sigma(g.sigma),
            sigma: g.sigma,
            freq_hz: 0.0,
            channel: channel.into(),
            oscillatory: false,
            fallback: true,
            components: v.components,
        });
    }
    Ok(fit_segment(channel, traj.dt, seg, span))
}

/// Stretch of a rising oscillation before it levels off at a limiter.
struct Growth<'a> {
    lead: &'a [f64],
    /// Growth rate of the deviation envelope up to saturation.
    sigma: f64,
}

/// Uses the running maximum of the deviation from `y0`. Growth shows as a
/// tenfold rise of that maximum after the first second, and saturation as
/// that maximum levelling off before the last fifth of the run. The lead runs from
/// the onset until the deviation reaches 2 % of its final value, and at
/// least one second.
fn growth_segment(dt: f64, y0: f64, seg: &[f64]) -> Option<Growth<'_>> {
    let k1 = ((1.0 / dt).round() as usize).max(1);
    if seg.len() < 4 * k1 {
        return None;
    }
    let reach: Vec<f64> = seg
        .iter()
        .scan(0.0f64, |m, v| {
            *m = m.max((v - y0).abs());
            Some(*m)
        })
        .collect();
    let top = *reach.last()?;
    if !(reach[k1] > 0.0) || top < 10.0 * reach[k1] {
        return None;
    }
    let settled = reach.iter().position(|r| *r >= 0.9 * top)?;
    if 5 * settled > 4 * seg.len() {
        return None;
    }
    let sigma = (reach[settled] / reach[k1]).ln() / ((settled - k1) as f64 * dt);
    let end = reach.iter().skip(k1).position(|r| *r >= 0.02 * top).map_or(seg.len(), |i| k1 + i + 1);
    Some(Growth { lead: &seg[..end], sigma })
}

fn fit_segment(channel: &str, dt: f64, seg: &[f64], span: f64) -> StabilityVerdict {
    let tseg: Vec<f64> = (0..seg.len()).map(|k| k as f64 * dt).collect();
    let comps = match fit_damped_modes(dt, seg) {
        Ok(c) => c,
        Err(_) => return envelope_verdict(channel, &tseg, seg),
    };
    let significant: Vec<FittedMode> =
        comps.iter().copied().filter(|c| c.peak >= SIGNIFICANCE * span && c.peak <= MAX_PEAK_RATIO * span).collect();
    if significant.is_empty() {
        return envelope_verdict(channel, &tseg, seg);
    }
    let window = tseg.last().copied().unwrap_or(0.0);
    let at_end = |c: &FittedMode| c.amplitude * (c.sigma * window).exp();
    // The oscillation that is largest when the window closes is the one the
    // trajectory settles into.
    let dominant = significant
        .iter()
        .enumerate()
        .filter(|(_, c)| c.is_oscillatory())
        .max_by(|a, b| at_end(a.1).total_cmp(&at_end(b.1)))
        .map(|(i, _)| i);
    // A real exponential that is slow against the window or small against
    // the swing cannot be told from drift.
    let growing_real = significant
        .iter()
        .filter(|c| !c.is_oscillatory() && c.sigma * window >= 1.0 && at_end(c) >= 0.25 * span)
        .filter(|c| dominant.is_none_or(|i| at_end(c) >= at_end(&significant[i])))
        .map(|c| c.sigma)
        .fold(f64::NEG_INFINITY, f64::max);

    let (sigma, freq, oscillatory) = match dominant {
        Some(i) => {
            let (ys, h) = decimate(dt, seg);
            let ts: Vec<f64> = (0..ys.len()).map(|k| k as f64 * h).collect();
            let c = significant[i];
            let r = refine(&ts, &DVector::from_vec(ys), &significant, i);
            let close = (r.sigma - c.sigma).abs() <= 0.05 + 0.5 * c.sigma.abs() && (r.freq_hz - c.freq_hz).abs() <= 0.1 * c.freq_hz;
            if close { (r.sigma, r.freq_hz, true) } else { (c.sigma, c.freq_hz, true) }
        }
        None => (growing_real, 0.0, false),
    };
    let worst = if growing_real > sigma && growing_real > GROWING_SIGMA { growing_real } else { sigma };
    StabilityVerdict {
        class: StabilityClass::from_sigma(worst),
        sigma,
        freq_hz: freq,
        channel: channel.into(),
        oscillatory,
        fallback: false,
        components: significant,
    }
}

//! Small numeric helpers shared across modules.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type C64 = Complex64;

/// `count` points spaced logarithmically from `lo` to `hi` inclusive.
pub fn logspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && count >= 2);
    let (a, b) = (lo.log10(), hi.log10());
    (0..count)
        .map(|i| {
            if i == count - 1 {
                hi
            } else {
                10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64)
            }
        })
        .collect()
}

/// Wraps an angle in degrees to (-180, 180].
pub fn wrap_deg(angle: f64) -> f64 {
    let mut a = angle % 360.0;
    if a <= -180.0 {
        a += 360.0;
    } else if a > 180.0 {
        a -= 360.0;
    }
    a
}

/// Angle of `z` in degrees on [0, 360).
pub fn angle_deg_positive(z: C64) -> f64 {
    let a = z.arg().to_degrees();
    if a < 0.0 {
        let w = a + 360.0;
        if w >= 360.0 {
            0.0
        } else {
            w
        }
    } else {
        a
    }
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Damping ratio of the eigenvalue `lambda`; 1 for the origin.
pub fn damping_ratio(lambda: C64) -> f64 {
    let mag = lambda.norm();
    if mag == 0.0 {
        1.0
    } else {
        -lambda.re / mag
    }
}

/// Diagonal similarity `D^-1 A D` with power-of-two entries that evens out
/// row and column norms. Returns the balanced matrix and `diag(D)`.
pub fn balance(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let n = a.nrows();
    let mut b = a.clone();
    let mut d = vec![1.0; n];
    let mut converged = false;
    while !converged {
        converged = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += b[(j, i)].abs();
                    r += b[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let total = c + r;
            let (mut f, mut cs, mut rs) = (1.0, c, r);
            while cs < rs / 2.0 {
                cs *= 2.0;
                rs /= 2.0;
                f *= 2.0;
            }
            while cs >= rs * 2.0 {
                cs /= 2.0;
                rs *= 2.0;
                f /= 2.0;
            }
            if cs + rs < 0.95 * total {
                converged = false;
                d[i] *= f;
                for j in 0..n {
                    b[(i, j)] /= f;
                    b[(j, i)] *= f;
                }
            }
        }
    }
    (b, d)
}

/// Eigenvalues of a real square matrix via the real Schur form of the
/// balanced matrix.
pub fn eigenvalues(a: &DMatrix<f64>) -> Option<Vec<C64>> {
    if a.nrows() == 0 {
        return Some(Vec::new());
    }
    let (b, _) = balance(a);
    let schur = nalgebra::Schur::try_new(b, f64::EPSILON, 10_000)?;
    let eig = schur.complex_eigenvalues();
    Some(eig.iter().copied().collect())
}

/// Sorts eigenvalues by real part, then imaginary part, for stable reporting.
pub fn sort_eigenvalues(values: &mut [C64]) {
    values.sort_by(|a, b| {
        a.re.partial_cmp(&b.re)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.im.partial_cmp(&b.im).unwrap_or(std::cmp::Ordering::Equal))
    });
}

/// Greedy nearest-neighbour matching of `next` onto `prev`. Returns `next`
/// reordered so that element `i` continues `prev[i]`.
pub fn match_by_continuity(prev: &[C64], next: &[C64]) -> Vec<C64> {
    let n = prev.len().min(next.len());
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(prev.len() * next.len());
    for (i, p) in prev.iter().enumerate() {
        for (j, q) in next.iter().enumerate() {
            pairs.push(((p - q).norm(), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut out = vec![C64::new(f64::NAN, f64::NAN); prev.len()];
    let mut used_prev = vec![false; prev.len()];
    let mut used_next = vec![false; next.len()];
    let mut assigned = 0;
    for (_, i, j) in pairs {
        if assigned == n {
            break;
        }
        if !used_prev[i] && !used_next[j] {
            out[i] = next[j];
            used_prev[i] = true;
            used_next[j] = true;
            assigned += 1;
        }
    }
    out
}

//! Unit-circle polynomial machinery: weighted least-squares Fourier fits,
//! Laurent polynomial rooting through a balanced companion matrix, and
//! selection of the roots nearest the unit circle.

use faer::Mat;

use crate::error::{invalid, Error, Result};
use crate::linalg::{cis, eigenvalues, lstsq, wrap_centered, C64, TAU};

/// Samples `values[m] = D(exp(j angles[m]))` of a function on the unit circle.
#[derive(Debug, Clone)]
pub struct UnitCircleSamples {
    pub angles: Vec<f64>,
    pub values: Vec<C64>,
}

impl UnitCircleSamples {
    /// `count` angles `-π + 2πm/count`.
    pub fn uniform_angles(count: usize) -> Vec<f64> {
        (0..count)
            .map(|m| -std::f64::consts::PI + TAU * m as f64 / count as f64)
            .collect()
    }

    pub fn validate(&self, order: usize) -> Result<()> {
        if self.angles.len() != self.values.len() {
            return Err(invalid("sample angles and values differ in length"));
        }
        if self.angles.len() < 2 * order + 1 {
            return Err(invalid("Q_sample >= 2G + 1"));
        }
        if self.angles.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("sample angles must be strictly increasing"));
        }
        Ok(())
    }
}

/// Truncated Fourier series `Σ_{g=-G}^{G} f_g z^g`, stored at index `g + G`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierPoly {
    pub coeffs: Vec<C64>,
    pub order: usize,
}

impl FourierPoly {
    pub fn coeff(&self, g: isize) -> C64 {
        self.coeffs[(g + self.order as isize) as usize]
    }

    pub fn eval(&self, z: C64) -> C64 {
        let g = self.order as i32;
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| c * z.powi(i as i32 - g))
            .sum()
    }
}

/// Weighted least-squares fit `min Σ γ_m |d_m - Σ_g f_g e^{j φ_m g}|²` with
/// `γ_m = 1 / (|d_m| + ε)`, `ε = eps_rel · max|d|`.
///
/// Mathematically `(Φ^H Γ Φ)^{-1} Φ^H Γ d`; solved by QR of `Γ^{1/2} Φ`.
pub fn wls_fourier_fit(samples: &UnitCircleSamples, order: usize, eps_rel: f64) -> Result<FourierPoly> {
    samples.validate(order)?;
    let q = samples.values.len();
    let width = 2 * order + 1;
    let peak = samples.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let eps = eps_rel * peak;
    let sqrt_w: Vec<f64> = samples
        .values
        .iter()
        .map(|v| {
            let w = 1.0 / (v.norm() + eps);
            if w.is_finite() {
                w.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    if sqrt_w.iter().all(|&w| w == 0.0) {
        return Err(Error::IllConditioned("all WLS weights vanish".into()));
    }
    let phi = Mat::from_fn(q, width, |m, g| {
        cis(samples.angles[m] * (g as f64 - order as f64)) * sqrt_w[m]
    });
    let rhs = Mat::from_fn(q, 1, |m, _| samples.values[m] * sqrt_w[m]);

    let qr = phi.qr();
    let r = qr.thin_R();
    let diag: Vec<f64> = (0..width).map(|i| r[(i, i)].norm()).collect();
    let rmax = diag.iter().cloned().fold(0.0, f64::max);
    let rmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if rmin.is_nan() || rmin <= 1e-13 * rmax {
        return Err(Error::IllConditioned(format!(
            "WLS normal matrix is singular (|R| range {rmin:e}..{rmax:e})"
        )));
    }
    let sol = lstsq(phi.as_ref(), rhs.as_ref());
    Ok(FourierPoly {
        coeffs: (0..width).map(|i| sol[(i, 0)]).collect(),
        order,
    })
}

/// Scales rows/columns of `a` by powers of two to equalize their norms.
fn balance(a: &mut Mat<C64>) {
    const RADIX: f64 = 2.0;
    let n = a.nrows();
    let l1 = |v: C64| v.re.abs() + v.im.abs();
    loop {
        let mut done = true;
        for i in 0..n {
            let (mut c, mut r) = (0.0, 0.0);
            for j in 0..n {
                if j != i {
                    c += l1(a[(j, i)]);
                    r += l1(a[(i, j)]);
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / RADIX;
            while c < g {
                f *= RADIX;
                c *= RADIX * RADIX;
            }
            g = r * RADIX;
            while c > g {
                f /= RADIX;
                c /= RADIX * RADIX;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                for j in 0..n {
                    a[(i, j)] /= f;
                    a[(j, i)] *= f;
                }
            }
        }
        if done {
            break;
        }
    }
}

/// Roots of `Σ_k c_k z^k` (ascending coefficients) as eigenvalues of the
/// balanced companion matrix. Negligible leading coefficients (below `1e-12`
/// of the largest) are trimmed first.
pub fn polynomial_roots(ascending: &[C64]) -> Result<Vec<C64>> {
    let peak = ascending.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return Err(Error::ZeroPolynomial);
    }
    let mut top = ascending.len() - 1;
    while ascending[top].norm() < 1e-12 * peak {
        top -= 1;
    }
    if top == 0 {
        return Ok(Vec::new());
    }
    // exact zero trailing coefficients are roots at the origin
    let low = ascending.iter().position(|c| *c != C64::new(0.0, 0.0)).unwrap();
    let degree = top - low;
    let mut roots = vec![C64::new(0.0, 0.0); low];
    if degree == 0 {
        return Ok(roots);
    }
    let lead = ascending[top];
    let mut comp = Mat::<C64>::zeros(degree, degree);
    for j in 0..degree {
        comp[(0, j)] = -ascending[top - 1 - j] / lead;
    }
    for i in 1..degree {
        comp[(i, i - 1)] = C64::new(1.0, 0.0);
    }
    balance(&mut comp);
    roots.extend(eigenvalues(comp.as_ref())?);
    Ok(roots)
}

/// Roots of the Laurent polynomial `Σ_{g=-G}^{G} f_g z^g`, i.e. of the
/// degree-`2G` polynomial `z^G · Σ f_g z^g`. `coeffs[g + G] = f_g`.
/// Negligible coefficients at either end are trimmed, so a constant yields
/// no roots.
pub fn laurent_roots(coeffs: &[C64], order: usize) -> Result<Vec<C64>> {
    if coeffs.len() != 2 * order + 1 {
        return Err(invalid("Laurent coefficient vector must have length 2G + 1"));
    }
    let peak = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return Err(Error::ZeroPolynomial);
    }
    // negligible trailing terms only shift the z^G factor; they are not roots
    let low = coeffs.iter().position(|c| c.norm() >= 1e-12 * peak).unwrap();
    polynomial_roots(&coeffs[low..])
}

#[derive(Debug, Clone, PartialEq)]
pub struct RootSelection {
    pub roots: Vec<C64>,
    /// The angular separation rule had to be dropped to reach `count`.
    pub relaxed: bool,
    /// Fewer than `count` roots lie inside the unit circle.
    pub shortfall: bool,
}

fn angle_gap(a: C64, b: C64) -> f64 {
    wrap_centered(a.arg() - b.arg(), TAU).abs()
}

/// Picks up to `count` roots strictly inside the unit circle, closest to it
/// first, skipping any root within `min_angle_sep` radians of one already
/// kept. If the separation rule leaves fewer than `count`, the remaining
/// slots are filled in closeness order without it.
pub fn select_inside_roots(roots: &[C64], count: usize, min_angle_sep: f64) -> RootSelection {
    let mut inside: Vec<C64> = roots.iter().copied().filter(|z| z.norm() < 1.0).collect();
    inside.sort_by(|a, b| b.norm().total_cmp(&a.norm()));

    let mut taken = vec![false; inside.len()];
    let mut kept: Vec<C64> = Vec::with_capacity(count);
    for (i, &z) in inside.iter().enumerate() {
        if kept.len() == count {
            break;
        }
        if kept.iter().all(|&k| angle_gap(z, k) >= min_angle_sep) {
            kept.push(z);
            taken[i] = true;
        }
    }
    let mut relaxed = false;
    if kept.len() < count {
        for (i, &z) in inside.iter().enumerate() {
            if kept.len() == count {
                break;
            }
            if !taken[i] {
                kept.push(z);
                taken[i] = true;
                relaxed = true;
            }
        }
    }
    RootSelection {
        shortfall: kept.len() < count,
        roots: kept,
        relaxed,
    }
}

//! Power-law fits in log-log coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_DECADES: f64 = 1.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub window: [f64; 2],
    /// Root-mean-square residual of `ln y` about the fitted line.
    pub rms_residual: f64,
    pub samples: usize,
}

impl DecayFit {
    pub fn eval(&self, t: f64) -> f64 {
        self.prefactor * t.powf(self.exponent)
    }
}

/// Least-squares line through `(ln t, ln y)` over `window` (whole series if `None`).
pub fn fit_decay(series: &[(f64, f64)], window: Option<(f64, f64)>) -> Result<DecayFit> {
    let (lo, hi) = window.unwrap_or_else(|| {
        let lo = series.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let hi = series.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    });
    let pts: Vec<(f64, f64)> = series.iter().copied().filter(|(t, _)| *t >= lo && *t <= hi).collect();
    if pts.len() < 3 {
        return Err(Error::Fit(format!("only {} samples in window [{lo}, {hi}]", pts.len())));
    }
    if let Some((t, y)) = pts.iter().find(|(t, y)| !(*t > 0.0 && *y > 0.0 && y.is_finite())) {
        return Err(Error::Fit(format!("nonpositive sample ({t}, {y}) in window")));
    }
    let t_lo = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let t_hi = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let decades = (t_hi / t_lo).log10();
    if decades < MIN_DECADES - 1e-9 {
        return Err(Error::Fit(format!("window [{t_lo:.3e}, {t_hi:.3e}] spans {decades:.2} < {MIN_DECADES} decades")));
    }
    let n = pts.len() as f64;
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let rms = (xs.iter().zip(&ys).map(|(x, y)| (y - icpt - slope * x).powi(2)).sum::<f64>() / n).sqrt();
    Ok(DecayFit { exponent: slope, prefactor: icpt.exp(), window: [t_lo, t_hi], rms_residual: rms, samples: pts.len() })
}

/// Maximum of `|y|` over logarithmically spaced bins, placed at each bin's
/// arg-max. Turns oscillating series into upper envelopes.
pub fn log_binned_envelope(series: &[(f64, f64)], bins_per_decade: usize) -> Vec<(f64, f64)> {
    let pos: Vec<(f64, f64)> = series.iter().copied().filter(|(t, _)| *t > 0.0).collect();
    if pos.is_empty() {
        return vec![];
    }
    let t0 = pos[0].0.ln();
    let width = std::f64::consts::LN_10 / bins_per_decade as f64;
    let mut out: Vec<(f64, f64)> = vec![];
    let mut current: Option<(i64, f64, f64)> = None;
    for (t, y) in pos {
        let b = ((t.ln() - t0) / width).floor() as i64;
        match current {
            Some((cb, ct, cy)) if cb == b => {
                if y.abs() > cy {
                    current = Some((cb, t, y.abs()));
                } else {
                    current = Some((cb, ct, cy));
                }
            }
            Some((_, ct, cy)) => {
                out.push((ct, cy));
                current = Some((b, t, y.abs()));
            }
            None => current = Some((b, t, y.abs())),
        }
    }
    if let Some((_, ct, cy)) = current {
        out.push((ct, cy));
    }
    out
}

/// Fit `y = y_inf + C t^p` by least squares in `y`: for each trial `p` the
/// pair `(y_inf, C)` is linear, so only `p` is scanned (then refined).
/// Returns the log-log fit of `|y - y_inf|` at the optimum and `y_inf`.
pub fn fit_decay_with_offset(series: &[(f64, f64)], window: (f64, f64)) -> Result<(DecayFit, f64)> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|(t, y)| *t >= window.0 && *t <= window.1 && *t > 0.0 && y.is_finite())
        .collect();
    if pts.len() < 4 {
        return Err(Error::Fit("too few samples for offset fit".into()));
    }
    // returns (sse, y_inf, c)
    let solve = |p: f64| -> (f64, f64, f64) {
        let n = pts.len() as f64;
        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        for (t, y) in &pts {
            let x = t.powf(p);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        let det = n * sxx - sx * sx;
        if det.abs() <= 1e-300 {
            return (f64::INFINITY, sy / n, 0.0);
        }
        let c = (n * sxy - sx * sy) / det;
        let y0 = (sy - c * sx) / n;
        let sse = pts.iter().map(|(t, y)| (y - y0 - c * t.powf(p)).powi(2)).sum();
        (sse, y0, c)
    };
    let (p_lo, p_hi) = (-4.0f64, -0.02f64);
    let steps = 200;
    let mut best = (f64::INFINITY, p_hi);
    for i in 0..=steps {
        let p = p_lo + (p_hi - p_lo) * i as f64 / steps as f64;
        let sse = solve(p).0;
        if sse < best.0 {
            best = (sse, p);
        }
    }
    let h = (p_hi - p_lo) / steps as f64;
    let (mut a, mut b) = ((best.1 - h).max(p_lo), (best.1 + h).min(p_hi));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let m1 = b - g * (b - a);
        let m2 = a + g * (b - a);
        if solve(m1).0 < solve(m2).0 {
            b = m2;
        } else {
            a = m1;
        }
    }
    let (_, y_inf, c) = solve(0.5 * (a + b));
    if !(y_inf.is_finite() && c != 0.0) {
        return Err(Error::Fit("offset fit degenerate".into()));
    }
    let shifted: Vec<(f64, f64)> = pts.iter().map(|(t, y)| (*t, (y - y_inf).abs())).collect();
    let fit = fit_decay(&shifted, None)?;
    Ok((fit, y_inf))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let s: Vec<(f64, f64)> = (0..50).map(|i| {
            let t = 10f64.powf(i as f64 / 10.0);
            (t, 3.0 * t.powf(-0.5))
        }).collect();
        let f = fit_decay(&s, None).unwrap();
        assert!((f.exponent + 0.5).abs() < 1e-12);
        assert!((f.prefactor - 3.0).abs() < 1e-10);
    }

    #[test]
    fn short_window_refused() {
        let s: Vec<(f64, f64)> = (1..20).map(|i| (i as f64, 1.0 / i as f64)).collect();
        assert!(fit_decay(&s, None).is_err());
    }

    #[test]
    fn nonpositive_refused() {
        let s = vec![(1.0, 1.0), (10.0, 0.0), (100.0, 0.1)];
        assert!(matches!(fit_decay(&s, None), Err(Error::Fit(_))));
    }

    #[test]
    fn envelope_of_oscillation() {
        let s: Vec<(f64, f64)> = (1..20000).map(|i| {
            let t = i as f64 * 0.1;
            (t, t.powf(-1.0) * (3.0 * t).cos())
        }).collect();
        let env = log_binned_envelope(&s, 10);
        let f = fit_decay(&env, Some((10.0, 2000.0))).unwrap();
        assert!((f.exponent + 1.0).abs() < 0.02);
    }
}

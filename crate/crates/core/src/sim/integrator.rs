//! Explicit Runge–Kutta steppers.

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method {
    /// Classical RK4 with a fixed step.
    Rk4 { dt: f64 },
    /// Dormand–Prince 5(4) with step-size control.
    Rk45 { rtol: f64, atol: f64, dt_min: f64, dt_init: f64, dt_max: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegratorConfig {
    pub method: Method,
    pub t0: f64,
    pub t_end: f64,
    /// Log every `log_stride`-th accepted step (the final state is always logged).
    pub log_stride: usize,
    /// Zero-order hold: evaluate the controller once per step instead of at
    /// every stage.
    pub hold: bool,
}

impl IntegratorConfig {
    pub fn rk4(dt: f64, t0: f64, t_end: f64, log_stride: usize) -> Self {
        Self { method: Method::Rk4 { dt }, t0, t_end, log_stride, hold: false }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > self.t0) || !self.t0.is_finite() || !self.t_end.is_finite() {
            return Err(Error::config(format!("horizon [{}, {}] is empty", self.t0, self.t_end)));
        }
        if self.log_stride == 0 {
            return Err(Error::config("log_stride must be at least 1"));
        }
        match self.method {
            Method::Rk4 { dt } if !(dt > 0.0 && dt.is_finite()) => {
                Err(Error::config(format!("dt must be positive, got {dt}")))
            }
            Method::Rk45 { rtol, atol, dt_min, dt_init, dt_max }
                if !(rtol > 0.0 && atol > 0.0 && dt_min > 0.0 && dt_init >= dt_min && dt_max >= dt_init) =>
            {
                Err(Error::config("rk45 needs rtol, atol > 0 and 0 < dt_min <= dt_init <= dt_max"))
            }
            _ => Ok(()),
        }
    }

    /// Nominal step used for sizing (fixed dt or the initial adaptive step).
    pub fn nominal_dt(&self) -> f64 {
        match self.method {
            Method::Rk4 { dt } => dt,
            Method::Rk45 { dt_init, .. } => dt_init,
        }
    }
}

fn check_finite(t: f64, v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        None => Ok(()),
        Some(i) => Err(Error::NonFinite { t, what: format!("stage derivative component {i}") }),
    }
}

fn axpy(x: &[f64], terms: &[(f64, &[f64])]) -> Vec<f64> {
    let mut out = x.to_vec();
    for (c, k) in terms {
        for (o, v) in out.iter_mut().zip(k.iter()) {
            *o += c * v;
        }
    }
    out
}

/// One classical RK4 step.
pub fn rk4_step<F>(rhs: &mut F, t: f64, x: &[f64], dt: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = x.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let h = dt;
    rhs(t, x, &mut k1)?;
    check_finite(t, &k1)?;
    rhs(t + 0.5 * h, &axpy(x, &[(0.5 * h, &k1)]), &mut k2)?;
    check_finite(t + 0.5 * h, &k2)?;
    rhs(t + 0.5 * h, &axpy(x, &[(0.5 * h, &k2)]), &mut k3)?;
    check_finite(t + 0.5 * h, &k3)?;
    rhs(t + h, &axpy(x, &[(h, &k3)]), &mut k4)?;
    check_finite(t + h, &k4)?;
    Ok((0..n)
        .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One Dormand–Prince step. Returns the 5th-order solution and the scaled
/// RMS error estimate (accept when `<= 1`).
pub fn dopri5_step<F>(rhs: &mut F, t: f64, x: &[f64], dt: f64, rtol: f64, atol: f64) -> Result<(Vec<f64>, f64)>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = x.len();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    for s in 0..7 {
        let mut probe = x.to_vec();
        for (j, a) in A[s].iter().enumerate().take(s) {
            if *a != 0.0 {
                for (p, kv) in probe.iter_mut().zip(&k[j]) {
                    *p += dt * a * kv;
                }
            }
        }
        let ts = t + C[s] * dt;
        rhs(ts, &probe, &mut k[s])?;
        check_finite(ts, &k[s])?;
    }
    let mut x5 = x.to_vec();
    let mut err_sq = 0.0;
    for i in 0..n {
        let mut hi = 0.0;
        let mut lo = 0.0;
        for s in 0..7 {
            hi += B5[s] * k[s][i];
            lo += B4[s] * k[s][i];
        }
        x5[i] += dt * hi;
        let scale = atol + rtol * x[i].abs().max(x5[i].abs());
        err_sq += (dt * (hi - lo) / scale).powi(2);
    }
    Ok((x5, (err_sq / n.max(1) as f64).sqrt()))
}

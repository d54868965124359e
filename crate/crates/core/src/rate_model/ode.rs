//! Adaptive Dormand-Prince 5(4) integration of `dp/dt = M p`. Used as an
//! independent check on the matrix-exponential propagator. The system is
//! autonomous, so the stage times are not needed.

use nalgebra::{DMatrix, DVector};

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
const B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

/// Integrates the linear system from 0 to `t` with mixed tolerance
/// `atol + rtol |p|` per component.
pub fn integrate_linear(m: &DMatrix<f64>, p0: &DVector<f64>, t: f64, rtol: f64, atol: f64) -> DVector<f64> {
    let mut y = p0.clone();
    if t <= 0.0 {
        return y;
    }
    let scale = m.abs().max().max(1e-300);
    let mut h = (0.01 / scale).min(t);
    let mut time = 0.0;
    let mut k: Vec<DVector<f64>> = vec![DVector::zeros(y.len()); 7];
    while time < t {
        if time + h > t {
            h = t - time;
        }
        for s in 0..7 {
            let mut ys = y.clone();
            for j in 0..s {
                if A[s][j] != 0.0 {
                    ys.axpy(h * A[s][j], &k[j], 1.0);
                }
            }
            k[s] = m * ys;
        }
        let mut y5 = y.clone();
        let mut y4 = y.clone();
        for s in 0..7 {
            y5.axpy(h * B5[s], &k[s], 1.0);
            y4.axpy(h * B4[s], &k[s], 1.0);
        }
        let err = (0..y.len())
            .map(|i| {
                let sc = atol + rtol * y[i].abs().max(y5[i].abs());
                ((y5[i] - y4[i]) / sc).powi(2)
            })
            .sum::<f64>()
            / y.len() as f64;
        let err = err.sqrt();
        if err <= 1.0 {
            time += h;
            y = y5;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h < 1e-14 * t {
            h = 1e-14 * t;
        }
    }
    y
}

//! Reference computations for the acceptance suite.
//!
//! Everything here is written independently of the library's own linear
//! algebra and cell code: plain nested vectors, straight-line formulas and
//! textbook algorithms, so that agreement with the library is evidence rather
//! than a tautology.

#![allow(clippy::needless_range_loop)]

use ncgru_core::cells::{CellParams, SequenceTarget, Variant};
use ncgru_core::linalg::Matrix;

pub type Dense = Vec<Vec<f64>>;

pub fn dense(m: &Matrix) -> Dense {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

pub fn identity(n: usize) -> Dense {
    (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect()
}

pub fn transpose(a: &Dense) -> Dense {
    let (r, c) = (a.len(), a[0].len());
    (0..c).map(|j| (0..r).map(|i| a[i][j]).collect()).collect()
}

pub fn mul(a: &Dense, b: &Dense) -> Dense {
    let (r, k, c) = (a.len(), b.len(), b[0].len());
    assert_eq!(a[0].len(), k);
    let mut out = vec![vec![0.0; c]; r];
    for i in 0..r {
        for (p, brow) in b.iter().enumerate() {
            let aip = a[i][p];
            for j in 0..c {
                out[i][j] += aip * brow[j];
            }
        }
    }
    out
}

pub fn mat_vec(a: &Dense, x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

pub fn fro(a: &Dense) -> f64 {
    a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn sub(a: &Dense, b: &Dense) -> Dense {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q).collect()).collect()
}

/// Gauss–Jordan elimination with partial pivoting; `None` if singular.
pub fn inverse(a: &Dense) -> Option<Dense> {
    let n = a.len();
    let mut m: Dense = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| f64::from(u8::from(i == j))));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        let d = m[col][col];
        m[col].iter_mut().for_each(|v| *v /= d);
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for c in 0..2 * n {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
    }
    Some(m.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// `(I + A)⁻¹ (I − A) D`.
pub fn cayley(a: &Dense, d: &[f64]) -> Dense {
    let n = a.len();
    let plus: Dense = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j)) + a[i][j]).collect()).collect();
    let minus: Dense = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j)) - a[i][j]).collect()).collect();
    let mut u = mul(&inverse(&plus).expect("I + A is nonsingular for skew A"), &minus);
    for row in &mut u {
        row.iter_mut().zip(d).for_each(|(v, s)| *v *= s);
    }
    u
}

/// `‖UᵀU − I‖_F`.
pub fn orthogonality_defect(u: &Dense) -> f64 {
    fro(&sub(&mul(&transpose(u), u), &identity(u.len())))
}

/// `‖Ã (I + A) − I‖_F`.
pub fn inverse_defect(a_tilde: &Dense, a: &Dense) -> f64 {
    let n = a.len();
    let plus: Dense = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j)) + a[i][j]).collect()).collect();
    fro(&sub(&mul(a_tilde, &plus), &identity(n)))
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn symmetric_eigenvalues(s: &Dense) -> Vec<f64> {
    let n = s.len();
    let mut a = s.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>().max(f64::MIN_POSITIVE);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

/// Largest singular value, from the eigenvalues of `MᵀM`.
pub fn spectral_norm(m: &Dense) -> f64 {
    let g = mul(&transpose(m), m);
    symmetric_eigenvalues(&g).into_iter().fold(0.0, f64::max).sqrt()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Intermediate values of one straight-line cell step.
#[derive(Debug, Clone)]
pub struct Step {
    pub r: Vec<f64>,
    pub u: Vec<f64>,
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

/// One GRU or NC-GRU step written directly from the cell equations.
pub fn cell_step(p: &CellParams, x: &[f64], h: &[f64]) -> Step {
    let n = p.hidden();
    let lin = |w: &Matrix, u: &Matrix, hv: &[f64], i: usize| -> f64 {
        w.row(i).iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + u.row(i).iter().zip(hv).map(|(a, b)| a * b).sum::<f64>()
    };
    let r: Vec<f64> = (0..n).map(|i| sigmoid(lin(&p.w_r, &p.u_r, h, i) + p.b_r[i])).collect();
    let u: Vec<f64> = (0..n).map(|i| sigmoid(lin(&p.w_u, &p.u_u, h, i) + p.b_u[i])).collect();
    let rh: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();
    let c: Vec<f64> = (0..n)
        .map(|i| {
            let z = lin(&p.w_c, &p.u_c, &rh, i);
            match p.variant {
                Variant::Gru => (z + p.b_c[i]).tanh(),
                Variant::NcGru => {
                    let m = z.abs() + p.b_c[i];
                    if m > 0.0 {
                        z.signum() * m
                    } else {
                        0.0
                    }
                }
            }
        })
        .collect();
    let h_new = (0..n).map(|i| (1.0 - u[i]) * h[i] + u[i] * c[i]).collect();
    Step { r, u, c, h: h_new }
}

/// Readout logits `W h + b`.
pub fn readout(w: &Matrix, b: &[f64], h: &[f64]) -> Vec<f64> {
    (0..w.rows()).map(|i| b[i] + w.row(i).iter().zip(h).map(|(a, c)| a * c).sum::<f64>()).collect()
}

fn xent(y: &[f64], class: usize) -> f64 {
    let m = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = y.iter().map(|v| (v - m).exp()).sum();
    m + z.ln() - y[class]
}

/// Loss of one sequence from `h_0 = 0`: mean squared error on the last
/// output, cross-entropy on the last output, or cross-entropy averaged over
/// every step.
pub fn sequence_loss(p: &CellParams, w: &Matrix, b: &[f64], inputs: &Matrix, target: &SequenceTarget) -> f64 {
    let steps = inputs.rows();
    let mut h = vec![0.0; p.hidden()];
    let mut loss = 0.0;
    for t in 0..steps {
        h = cell_step(p, inputs.row(t), &h).h;
        let y = readout(w, b, &h);
        match target {
            SequenceTarget::Classes(cs) => loss += xent(&y, cs[t]) / steps as f64,
            SequenceTarget::FinalClass(c) if t + 1 == steps => loss += xent(&y, *c),
            SequenceTarget::Regression(v) if t + 1 == steps => {
                loss += y.iter().zip(v.iter()).map(|(a, c)| (a - c) * (a - c)).sum::<f64>() / y.len() as f64
            }
            _ => {}
        }
    }
    loss
}

/// Central difference of `f` along one coordinate.
pub fn central_difference(mut f: impl FnMut(f64) -> f64, step: f64) -> f64 {
    (f(step) - f(-step)) / (2.0 * step)
}

/// `‖a − b‖ / (‖a‖ + ‖b‖)`, zero when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let den = norm(a) + norm(b);
    if den == 0.0 {
        0.0
    } else {
        norm(&diff) / den
    }
}

/// `max |M + Mᵀ|` of a square matrix stored row-major.
pub fn skew_defect(data: &[f64], n: usize) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((data[i * n + j] + data[j * n + i]).abs());
        }
    }
    worst
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / k, ly.iter().sum::<f64>() / k);
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    cov / var
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_and_cayley_on_hand_cases() {
        let a = vec![vec![0.0, 1.0], vec![-1.0, 0.0]];
        let u = cayley(&a, &[1.0, 1.0]);
        let want = [[0.0, -1.0], [1.0, 0.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((u[i][j] - want[i][j]).abs() < 1e-15);
            }
        }
        assert!(inverse(&vec![vec![1.0, 2.0], vec![2.0, 4.0]]).is_none());
    }

    #[test]
    fn jacobi_matches_known_spectrum() {
        let s = vec![vec![2.0, 1.0, 0.0], vec![1.0, 2.0, 0.0], vec![0.0, 0.0, 5.0]];
        let mut e = symmetric_eigenvalues(&s);
        e.sort_by(f64::total_cmp);
        for (got, want) in e.iter().zip([1.0, 3.0, 5.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((spectral_norm(&vec![vec![3.0, 0.0], vec![4.0, 0.0]]) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn slope_of_a_power_law() {
        let xs = [1.0, 0.5, 0.25, 0.125];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 7.0 * x.powi(3)).collect();
        assert!((log_log_slope(&xs, &ys) - 3.0).abs() < 1e-12);
    }
}

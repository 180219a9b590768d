//! Restarted GMRES for `(I - A) y = b` on large sparse models.

use super::Csr;

#[derive(Clone, Debug)]
pub struct GmresOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// Final `‖b - (I - A) y‖ / ‖b‖`.
    pub relative_residual: f64,
}

fn apply(a: &Csr, x: &[f64], out: &mut [f64]) {
    a.matvec(x, out);
    for (o, xi) in out.iter_mut().zip(x) {
        *o = xi - *o;
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// GMRES(`restart`) on `I - A`, stopping at relative residual `tol` or
/// after `max_iter` inner steps.
pub fn gmres(a: &Csr, b: &[f64], tol: f64, restart: usize, max_iter: usize) -> GmresOutcome {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return GmresOutcome {
            solution: x,
            iterations: 0,
            relative_residual: 0.0,
        };
    }
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut total = 0;
    let mut rel = 1.0;
    while total < max_iter {
        apply(a, &x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let rnorm = norm(&r);
        rel = rnorm / bnorm;
        if rel <= tol {
            break;
        }
        let m = restart.min(n).max(1);
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|x| x / rnorm).collect()];
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = rnorm;
        let mut used = 0;
        for j in 0..m {
            apply(a, &v[j], &mut w);
            for i in 0..=j {
                let c: f64 = w.iter().zip(&v[i]).map(|(p, q)| p * q).sum();
                h[i][j] = c;
                for (wk, vk) in w.iter_mut().zip(&v[i]) {
                    *wk -= c * vk;
                }
            }
            let hn = norm(&w);
            h[j + 1][j] = hn;
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let d = h[j][j].hypot(h[j + 1][j]);
            cs[j] = h[j][j] / d;
            sn[j] = h[j + 1][j] / d;
            h[j][j] = d;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            used = j + 1;
            total += 1;
            if g[j + 1].abs() / bnorm <= tol * 0.1 || hn == 0.0 || total >= max_iter {
                break;
            }
            v.push(w.iter().map(|x| x / hn).collect());
        }
        let mut coef = vec![0.0; used];
        for i in (0..used).rev() {
            let s: f64 = (i + 1..used).map(|k| h[i][k] * coef[k]).sum();
            coef[i] = (g[i] - s) / h[i][i];
        }
        for (c, vi) in coef.iter().zip(&v) {
            for (xk, vk) in x.iter_mut().zip(vi) {
                *xk += c * vk;
            }
        }
    }
    if total >= max_iter {
        apply(a, &x, &mut r);
        rel = r.iter().zip(b).map(|(ri, bi)| (bi - ri).powi(2)).sum::<f64>().sqrt() / bnorm;
    }
    GmresOutcome {
        solution: x,
        iterations: total,
        relative_residual: rel,
    }
}

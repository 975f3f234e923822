//! Least squares via the normal equations and F tails via quadrature.

pub struct Fit {
    pub beta: Vec<f64>,
    pub std_err: Vec<f64>,
    pub rss: f64,
    pub r2: f64,
}

/// Solves `a x = b` by Gauss-Jordan elimination with partial pivoting and
/// returns the inverse of `a` alongside.
fn solve(mut a: Vec<Vec<f64>>, b: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let p = a.len();
    let mut inv: Vec<Vec<f64>> = (0..p).map(|i| (0..p).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    let mut rhs = b.to_vec();
    for col in 0..p {
        let piv = (col..p).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        inv.swap(col, piv);
        rhs.swap(col, piv);
        let d = a[col][col];
        for j in 0..p {
            a[col][j] /= d;
            inv[col][j] /= d;
        }
        rhs[col] /= d;
        for i in 0..p {
            if i != col {
                let f = a[i][col];
                for j in 0..p {
                    a[i][j] -= f * a[col][j];
                    inv[i][j] -= f * inv[col][j];
                }
                rhs[i] -= f * rhs[col];
            }
        }
    }
    (rhs, inv)
}

pub fn normal_equations(x: &[Vec<f64>], y: &[f64]) -> Fit {
    let (n, p) = (x.len(), x[0].len());
    let xtx: Vec<Vec<f64>> = (0..p)
        .map(|i| (0..p).map(|j| (0..n).map(|r| x[r][i] * x[r][j]).sum()).collect())
        .collect();
    let xty: Vec<f64> = (0..p).map(|i| (0..n).map(|r| x[r][i] * y[r]).sum()).collect();
    let (beta, inv) = solve(xtx, &xty);
    let rss: f64 = (0..n)
        .map(|r| {
            let fit: f64 = (0..p).map(|j| x[r][j] * beta[j]).sum();
            (y[r] - fit).powi(2)
        })
        .sum();
    let mean = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let sigma2 = rss / (n - p) as f64;
    Fit {
        std_err: (0..p).map(|j| (sigma2 * inv[j][j]).sqrt()).collect(),
        beta,
        rss,
        r2: if tss > 0.0 { 1.0 - rss / tss } else { 0.0 },
    }
}

fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(&f, a, b, fa, fm, fb, whole, 1e-15, 60)
}

/// Upper tail of F(df1, df2) at `f`, from the beta-distributed
/// `z = df1 f / (df1 f + df2)`, integrated in `t = sqrt(z)` below one half
/// and `s = sqrt(1 - z)` above it.
pub fn f_tail_quadrature(f: f64, df1: f64, df2: f64) -> f64 {
    let (a, b) = (df1 / 2.0, df2 / 2.0);
    let lower = |t: f64| 2.0 * t.powf(2.0 * a - 1.0) * (1.0 - t * t).powf(b - 1.0);
    let upper = |s: f64| 2.0 * s.powf(2.0 * b - 1.0) * (1.0 - s * s).powf(a - 1.0);
    let half = 0.5f64.sqrt();
    let total = integrate(lower, 0.0, half) + integrate(upper, 0.0, half);
    let z0 = df1 * f / (df1 * f + df2);
    let tail = if z0 >= 0.5 {
        integrate(upper, 0.0, (1.0 - z0).sqrt())
    } else {
        integrate(lower, z0.sqrt(), half) + integrate(upper, 0.0, half)
    };
    tail / total
}

//! Independent reference implementations used by the integration tests.
//! None of these call into the library's numerical code.

#![allow(dead_code)]

/// Largest Lyapunov exponent of the Lorenz flow by tangent-space
/// integration with periodic renormalization (Benettin et al.).
pub fn benettin_lorenz(sigma: f64, rho: f64, beta: f64, dt: f64, transient: usize, steps: usize) -> f64 {
    // State (x, y, z) and tangent (dx, dy, dz) advanced together by RK4.
    let f = |s: &[f64; 6]| -> [f64; 6] {
        let (x, y, z, dx, dy, dz) = (s[0], s[1], s[2], s[3], s[4], s[5]);
        [
            sigma * (y - x),
            x * (rho - z) - y,
            x * y - beta * z,
            sigma * (dy - dx),
            (rho - z) * dx - dy - x * dz,
            y * dx + x * dy - beta * dz,
        ]
    };
    let step = |s: &mut [f64; 6]| {
        let add = |a: &[f64; 6], b: &[f64; 6], h: f64| -> [f64; 6] { std::array::from_fn(|i| a[i] + h * b[i]) };
        let k1 = f(s);
        let k2 = f(&add(s, &k1, dt / 2.0));
        let k3 = f(&add(s, &k2, dt / 2.0));
        let k4 = f(&add(s, &k3, dt));
        for i in 0..6 {
            s[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    };
    let mut s = [1.0, 1.0, 1.0, 1.0, 0.0, 0.0];
    for _ in 0..transient {
        step(&mut s);
    }
    let norm = |s: &[f64; 6]| (s[3] * s[3] + s[4] * s[4] + s[5] * s[5]).sqrt();
    let n0 = norm(&s);
    for v in &mut s[3..] {
        *v /= n0;
    }
    let mut log_sum = 0.0;
    for _ in 0..steps {
        step(&mut s);
        let n = norm(&s);
        log_sum += n.ln();
        for v in &mut s[3..] {
            *v /= n;
        }
    }
    log_sum / (steps as f64 * dt)
}

/// Inverse by Gauss–Jordan elimination with partial pivoting.
pub fn gauss_jordan_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
        m.swap(col, piv);
        let p = m[col][col];
        assert!(p != 0.0, "singular matrix");
        for v in &mut m[col] {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let factor = m[r][col];
                if factor != 0.0 {
                    let pivot_row = m[col].clone();
                    for (v, p) in m[r].iter_mut().zip(&pivot_row) {
                        *v -= factor * p;
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Ridge readout `P = ((XᵀX + βI)⁻¹ XᵀY)ᵀ` from explicit normal equations.
/// `x` holds one feature row per sample, `y` one target row per sample.
pub fn ridge_oracle(x: &[Vec<f64>], y: &[Vec<f64>], beta: f64) -> Vec<Vec<f64>> {
    let f = x[0].len();
    let d = y[0].len();
    let mut gram = vec![vec![0.0; f]; f];
    let mut xty = vec![vec![0.0; d]; f];
    for (xr, yr) in x.iter().zip(y) {
        for i in 0..f {
            for j in 0..f {
                gram[i][j] += xr[i] * xr[j];
            }
            for k in 0..d {
                xty[i][k] += xr[i] * yr[k];
            }
        }
    }
    for (i, row) in gram.iter_mut().enumerate() {
        row[i] += beta;
    }
    let inv = gauss_jordan_inverse(&gram);
    (0..d).map(|k| (0..f).map(|i| (0..f).map(|j| inv[i][j] * xty[j][k]).sum()).collect()).collect()
}

/// Reservoir features `[r; r²]` and next-sample targets, recomputed from
/// the dense matrices with `r ← tanh(A r + W_in u)`.
pub fn reservoir_features(
    a: &[Vec<f64>],
    w_in: &[Vec<f64>],
    data: &[Vec<f64>],
    t_w: usize,
    t_t: usize,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut r = vec![0.0; n];
    let mut feats = Vec::new();
    let mut targets = Vec::new();
    for k in 0..t_w + t_t {
        r = (0..n)
            .map(|i| {
                let ar: f64 = (0..n).map(|j| a[i][j] * r[j]).sum();
                let wu: f64 = w_in[i].iter().zip(&data[k]).map(|(w, u)| w * u).sum();
                (ar + wu).tanh()
            })
            .collect();
        if k >= t_w {
            let mut f = r.clone();
            f.extend(r.iter().map(|v| v * v));
            feats.push(f);
            targets.push(data[k + 1].clone());
        }
    }
    (feats, targets)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct C64 {
    pub re: f64,
    pub im: f64,
}

impl C64 {
    pub fn new(re: f64, im: f64) -> Self {
        C64 { re, im }
    }
    pub fn add(self, o: C64) -> C64 {
        C64::new(self.re + o.re, self.im + o.im)
    }
    pub fn sub(self, o: C64) -> C64 {
        C64::new(self.re - o.re, self.im - o.im)
    }
    pub fn mul(self, o: C64) -> C64 {
        C64::new(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)
    }
    pub fn div(self, o: C64) -> C64 {
        let d = o.re * o.re + o.im * o.im;
        C64::new((self.re * o.re + self.im * o.im) / d, (self.im * o.re - self.re * o.im) / d)
    }
    pub fn abs(self) -> f64 {
        self.re.hypot(self.im)
    }
}

/// Coefficients `c[0..=n]` of `det(λI − A) = Σ c[k] λ^(n−k)`, `c[0] = 1`,
/// by the Faddeev–LeVerrier recursion.
pub fn char_poly(a: &[Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    let matmul = |x: &[Vec<f64>], y: &[Vec<f64>]| -> Vec<Vec<f64>> {
        (0..n).map(|i| (0..n).map(|j| (0..n).map(|k| x[i][k] * y[k][j]).sum()).collect()).collect()
    };
    let mut c = vec![1.0];
    let mut m = vec![vec![0.0; n]; n];
    for k in 1..=n {
        // M_k = A·M_{k−1} + c_{k−1} I,  c_k = −tr(A·M_k)/k
        let mut next = matmul(a, &m);
        for (i, row) in next.iter_mut().enumerate() {
            row[i] += c[k - 1];
        }
        m = next;
        let am = matmul(a, &m);
        let tr: f64 = (0..n).map(|i| am[i][i]).sum();
        c.push(-tr / k as f64);
    }
    c
}

/// All complex roots of the monic polynomial `Σ c[k] z^(n−k)` by
/// Durand–Kerner iteration.
pub fn poly_roots(c: &[f64]) -> Vec<C64> {
    let n = c.len() - 1;
    let eval = |z: C64| c.iter().fold(C64::new(0.0, 0.0), |acc, &ck| acc.mul(z).add(C64::new(ck, 0.0)));
    let bound = 1.0 + c[1..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let seed = C64::new(0.4, 0.9);
    let mut z: Vec<C64> = (0..n)
        .map(|k| {
            let mut p = C64::new(1.0, 0.0);
            for _ in 0..k {
                p = p.mul(seed);
            }
            C64::new(p.re * bound, p.im * bound)
        })
        .collect();
    for _ in 0..5000 {
        let mut delta = 0.0f64;
        for i in 0..n {
            let mut den = C64::new(1.0, 0.0);
            for j in 0..n {
                if i != j {
                    den = den.mul(z[i].sub(z[j]));
                }
            }
            let step = eval(z[i]).div(den);
            z[i] = z[i].sub(step);
            delta = delta.max(step.abs());
        }
        if delta < 1e-15 {
            break;
        }
    }
    z
}

/// Spectral radius from the characteristic polynomial's roots.
pub fn spectral_radius_oracle(a: &[Vec<f64>]) -> f64 {
    poly_roots(&char_poly(a)).iter().map(|z| z.abs()).fold(0.0, f64::max)
}

/// Fraction of ordered pairs `(i, j)`, `i ≠ j`, closer than `r`.
pub fn brute_correlation_integral(points: &[Vec<f64>], r: f64) -> f64 {
    let n = points.len();
    let mut close = 0usize;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let d: f64 = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                if d < r {
                    close += 1;
                }
            }
        }
    }
    close as f64 / (n * (n - 1)) as f64
}

/// Small deterministic generator for test inputs (SplitMix64).
pub struct TestRng(pub u64);

impl TestRng {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * ((self.next_u64() >> 11) as f64 / (1u64 << 53) as f64)
    }
}

pub fn rel_frobenius(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (ra, rb) in a.iter().zip(b) {
        for (x, y) in ra.iter().zip(rb) {
            num += (x - y) * (x - y);
            den += y * y;
        }
    }
    (num / den).sqrt()
}

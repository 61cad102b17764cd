//! Small fixed-size linear algebra used by the dynamics and stability code:
//! 4x4 real matrix arithmetic, eigenvalues via the characteristic
//! polynomial, and a pivoted 16x16 solver for the vectorized steady-state
//! equation. Everything is stack-allocated.

use num_complex::Complex64;

pub(crate) type M4 = [[f64; 4]; 4];

pub(crate) const ZERO: M4 = [[0.0; 4]; 4];

pub(crate) fn identity() -> M4 {
    let mut m = ZERO;
    for i in 0..4 {
        m[i][i] = 1.0;
    }
    m
}

pub(crate) fn mul(a: &M4, b: &M4) -> M4 {
    let mut out = ZERO;
    for i in 0..4 {
        for k in 0..4 {
            let aik = a[i][k];
            for j in 0..4 {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

pub(crate) fn add_scaled(a: &M4, b: &M4, s: f64) -> M4 {
    let mut out = *a;
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] += s * b[i][j];
        }
    }
    out
}

pub(crate) fn symmetrize(a: &M4) -> M4 {
    let mut out = ZERO;
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = 0.5 * (a[i][j] + a[j][i]);
        }
    }
    out
}

pub(crate) fn max_abs(a: &M4) -> f64 {
    let mut m = 0.0_f64;
    for row in a {
        for &x in row {
            m = m.max(x.abs());
        }
    }
    m
}

// determinant via pivoted elimination: on matrices whose entries span many
// scales (squeezed covariances) this loses far fewer digits than a minor
// expansion, which cancels products much larger than the result
pub(crate) fn det4(m: &M4) -> f64 {
    let mut a = *m;
    let mut det = 1.0;
    for col in 0..4 {
        let mut best = col;
        for row in col + 1..4 {
            if a[row][col].abs() > a[best][col].abs() {
                best = row;
            }
        }
        if a[best][col] == 0.0 {
            return 0.0;
        }
        if best != col {
            a.swap(col, best);
            det = -det;
        }
        det *= a[col][col];
        let inv = 1.0 / a[col][col];
        for row in col + 1..4 {
            let f = a[row][col] * inv;
            for k in col + 1..4 {
                a[row][k] -= f * a[col][k];
            }
        }
    }
    det
}

type C4 = [[Complex64; 4]; 4];

fn cmul(a: &C4, b: &C4) -> C4 {
    let mut out = [[Complex64::new(0.0, 0.0); 4]; 4];
    for i in 0..4 {
        for k in 0..4 {
            let aik = a[i][k];
            for j in 0..4 {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

fn ctrace(a: &C4) -> Complex64 {
    a[0][0] + a[1][1] + a[2][2] + a[3][3]
}

/// Coefficients `c` of the monic characteristic polynomial
/// `z^4 + c[0] z^3 + c[1] z^2 + c[2] z + c[3]`, by trace identities
/// (Faddeev-LeVerrier in Newton form).
fn char_poly(m: &C4) -> [Complex64; 4] {
    let m2 = cmul(m, m);
    let m3 = cmul(&m2, m);
    let m4 = cmul(&m3, m);
    let p1 = ctrace(m);
    let p2 = ctrace(&m2);
    let p3 = ctrace(&m3);
    let p4 = ctrace(&m4);
    let e1 = p1;
    let e2 = (e1 * p1 - p2) / 2.0;
    let e3 = (e2 * p1 - e1 * p2 + p3) / 3.0;
    let e4 = (e3 * p1 - e2 * p2 + e1 * p3 - p4) / 4.0;
    [-e1, e2, -e3, e4]
}

/// All roots of a monic quartic by Durand-Kerner iteration. Quadratic
/// convergence for simple roots; the tolerance is on the update size.
fn quartic_roots(c: &[Complex64; 4]) -> [Complex64; 4] {
    let eval = |z: Complex64| (((z + c[0]) * z + c[1]) * z + c[2]) * z + c[3];
    let seed = Complex64::new(0.4, 0.9);
    let mut r = [seed, seed * seed, seed * seed * seed, seed * seed * seed * seed];
    for _ in 0..200 {
        let mut worst = 0.0_f64;
        let mut scale = 1.0_f64;
        for i in 0..4 {
            let mut den = Complex64::new(1.0, 0.0);
            for j in 0..4 {
                if j != i {
                    den *= r[i] - r[j];
                }
            }
            if den.norm_sqr() == 0.0 {
                r[i] += Complex64::new(1e-8, 1e-8);
                worst = f64::INFINITY;
                continue;
            }
            let dz = eval(r[i]) / den;
            r[i] -= dz;
            worst = worst.max(dz.norm());
            scale = scale.max(r[i].norm());
        }
        if worst < 1e-15 * scale {
            break;
        }
    }
    r
}

fn scaled_roots(c: &C4, scale: f64) -> [Complex64; 4] {
    let mut m = *c;
    for row in m.iter_mut() {
        for x in row.iter_mut() {
            *x /= scale;
        }
    }
    let mut roots = quartic_roots(&char_poly(&m));
    for r in roots.iter_mut() {
        *r *= scale;
    }
    roots
}

/// Eigenvalues of a real 4x4 matrix.
pub(crate) fn eigenvalues(a: &M4) -> [Complex64; 4] {
    let scale = max_abs(a);
    if scale == 0.0 {
        return [Complex64::new(0.0, 0.0); 4];
    }
    let mut c = [[Complex64::new(0.0, 0.0); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            c[i][j] = Complex64::new(a[i][j], 0.0);
        }
    }
    scaled_roots(&c, scale)
}

/// Smallest eigenvalue of the Hermitian matrix `re + i*im` (with `re`
/// symmetric and `im` antisymmetric). The spectrum is real, so the roots of
/// the characteristic polynomial land on the real axis up to roundoff.
pub(crate) fn hermitian_min_eigenvalue(re: &M4, im: &M4) -> f64 {
    let mut scale = max_abs(re).max(max_abs(im));
    if scale == 0.0 {
        return 0.0;
    }
    let mut c = [[Complex64::new(0.0, 0.0); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            c[i][j] = Complex64::new(re[i][j], im[i][j]);
        }
    }
    scale = scale.max(1e-300);
    let roots = scaled_roots(&c, scale);
    let mut min = f64::INFINITY;
    for r in roots {
        min = min.min(r.re);
    }
    min
}

/// LU factorization with partial pivoting of a dense 16x16 system, kept
/// around so the steady-state solver can do cheap repeat solves for
/// iterative refinement and condition estimation.
pub(crate) struct Lu16 {
    lu: [[f64; 16]; 16],
    piv: [usize; 16],
}

impl Lu16 {
    pub(crate) fn factor(m: &[[f64; 16]; 16]) -> Option<Self> {
        let mut lu = *m;
        let mut piv = [0usize; 16];
        for col in 0..16 {
            let mut best = col;
            let mut best_abs = lu[col][col].abs();
            for row in col + 1..16 {
                let a = lu[row][col].abs();
                if a > best_abs {
                    best = row;
                    best_abs = a;
                }
            }
            if best_abs == 0.0 || !best_abs.is_finite() {
                return None;
            }
            piv[col] = best;
            if best != col {
                lu.swap(col, best);
            }
            let inv = 1.0 / lu[col][col];
            for row in col + 1..16 {
                let f = lu[row][col] * inv;
                lu[row][col] = f;
                for k in col + 1..16 {
                    lu[row][k] -= f * lu[col][k];
                }
            }
        }
        Some(Lu16 { lu, piv })
    }

    pub(crate) fn solve(&self, b: &[f64; 16]) -> [f64; 16] {
        let mut x = *b;
        // the multipliers were stored after full-row swaps, so the whole
        // permutation must hit the right-hand side before substitution
        for col in 0..16 {
            x.swap(col, self.piv[col]);
        }
        for col in 0..16 {
            let xc = x[col];
            if xc != 0.0 {
                for row in col + 1..16 {
                    x[row] -= self.lu[row][col] * xc;
                }
            }
        }
        for col in (0..16).rev() {
            x[col] /= self.lu[col][col];
            let xc = x[col];
            if xc != 0.0 {
                for row in 0..col {
                    x[row] -= self.lu[row][col] * xc;
                }
            }
        }
        x
    }
}

pub(crate) fn inf_norm16(m: &[[f64; 16]; 16]) -> f64 {
    let mut worst = 0.0_f64;
    for row in m {
        let mut s = 0.0;
        for &x in row {
            s += x.abs();
        }
        worst = worst.max(s);
    }
    worst
}

//! Dense matrix exponential by scaling and squaring with a diagonal Padé
//! core (Higham 2005 degree selection).

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const THETA: [(usize, f64); 5] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
    (13, 5.371920351148152e0),
];

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `exp(t A)` for a dense square `A`.
pub fn expm(a: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::InvalidInput(format!(
            "matrix exponential needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    let ta = a * t;
    if !ta.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("non-finite entry in exponent".into()));
    }
    let eye = DMatrix::<f64>::identity(n, n);
    let nrm = norm1(&ta);
    if nrm == 0.0 {
        return Ok(eye);
    }

    for &(deg, theta) in &THETA[..4] {
        if nrm <= theta {
            let (u, v) = pade_low(&ta, deg, &eye);
            return solve_pade(u, v);
        }
    }

    let s = ((nrm / THETA[4].1).log2().ceil()).max(0.0) as i32;
    let scaled = ta * 2f64.powi(-s);
    let (u, v) = pade13(&scaled, &eye);
    let mut r = solve_pade(u, v)?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

fn pade_low(a: &DMatrix<f64>, deg: usize, eye: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let b: &[f64] = match deg {
        3 => &B3,
        5 => &B5,
        7 => &B7,
        _ => &B9,
    };
    let a2 = a * a;
    // Powers A^0, A^2, A^4, ...
    let mut pows = vec![eye.clone(), a2.clone()];
    while pows.len() <= deg / 2 {
        let next = pows.last().unwrap() * &a2;
        pows.push(next);
    }
    let mut u_inner = DMatrix::zeros(a.nrows(), a.ncols());
    let mut v = DMatrix::zeros(a.nrows(), a.ncols());
    for (k, p) in pows.iter().enumerate() {
        if 2 * k + 1 <= deg {
            u_inner += p * b[2 * k + 1];
        }
        v += p * b[2 * k];
    }
    (a * u_inner, v)
}

fn pade13(a: &DMatrix<f64>, eye: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let b = &B13;
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_hi = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = a * (u_hi + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + eye * b[1]);
    let v_hi = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = v_hi + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + eye * b[0];
    (u, v)
}

fn solve_pade(u: DMatrix<f64>, v: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = &v + &u;
    let q = v - u;
    q.lu()
        .solve(&p)
        .ok_or(Error::SingularSolve("Padé denominator"))
}

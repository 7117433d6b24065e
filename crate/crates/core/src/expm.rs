//! Dense matrix exponential by scaling and squaring with Padé approximants
//! (Higham 2005), and its Fréchet derivative through the block identity
//!
//! ```text
//! exp([[A, E], [0, A]]) = [[exp(A), L(A, E)], [0, exp(A)]]
//! ```
//!
//! The optimizer hot path never calls into this module; gate matrices are
//! built from cached spectral decompositions (see `gates`). This is the
//! general-purpose route and the reference the spectral route is checked
//! against.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fock::{FockOperator, C64, ZERO};

const THETA: [(usize, f64); 4] = [
    (3, 1.495_585_217_958_292e-2),
    (5, 2.539_398_330_063_230e-1),
    (7, 9.504_178_996_162_932e-1),
    (9, 2.097_847_961_257_068),
];
const THETA_13: f64 = 5.371_920_351_148_152;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17_297_280.0,
    8_648_640.0,
    1_995_840.0,
    277_200.0,
    25_200.0,
    1_512.0,
    56.0,
    1.0,
];
const B9: [f64; 10] = [
    17_643_225_600.0,
    8_821_612_800.0,
    2_075_673_600.0,
    302_702_400.0,
    30_270_240.0,
    2_162_160.0,
    110_880.0,
    3_960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

fn one_norm(a: &DMatrix<C64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn scale(a: &DMatrix<C64>, s: f64) -> DMatrix<C64> {
    a * C64::from(s)
}

/// Low-degree Padé numerator/denominator pieces `(U, V)`.
fn pade_low(a: &DMatrix<C64>, b: &[f64]) -> (DMatrix<C64>, DMatrix<C64>) {
    let n = a.nrows();
    let ident = DMatrix::<C64>::identity(n, n);
    let a2 = a * a;
    let mut power = ident.clone();
    let mut u_inner = DMatrix::<C64>::zeros(n, n);
    let mut v = DMatrix::<C64>::zeros(n, n);
    for k in (0..b.len()).step_by(2) {
        if k > 0 {
            power = &power * &a2;
        }
        v += scale(&power, b[k]);
        if k + 1 < b.len() {
            u_inner += scale(&power, b[k + 1]);
        }
    }
    (a * u_inner, v)
}

fn pade_13(a: &DMatrix<C64>) -> (DMatrix<C64>, DMatrix<C64>) {
    let n = a.nrows();
    let b = &B13;
    let ident = DMatrix::<C64>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_hi = scale(&a6, b[13]) + scale(&a4, b[11]) + scale(&a2, b[9]);
    let u_lo = scale(&a6, b[7]) + scale(&a4, b[5]) + scale(&a2, b[3]) + scale(&ident, b[1]);
    let u = a * (&a6 * u_hi + u_lo);
    let v_hi = scale(&a6, b[12]) + scale(&a4, b[10]) + scale(&a2, b[8]);
    let v_lo = scale(&a6, b[6]) + scale(&a4, b[4]) + scale(&a2, b[2]) + scale(&ident, b[0]);
    let v = &a6 * v_hi + v_lo;
    (u, v)
}

/// `exp(A)` for a square complex matrix.
pub fn expm(a: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    if !a.is_square() {
        return Err(Error::InvalidOperator(format!(
            "expm needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    if n == 0 {
        return Ok(a.clone());
    }
    if a.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::Numeric("expm of a matrix with non-finite entries".into()));
    }
    let norm = one_norm(a);

    let (u, v, squarings) = match THETA.iter().find(|(_, theta)| norm <= *theta) {
        Some(&(3, _)) => {
            let (u, v) = pade_low(a, &B3);
            (u, v, 0)
        }
        Some(&(5, _)) => {
            let (u, v) = pade_low(a, &B5);
            (u, v, 0)
        }
        Some(&(7, _)) => {
            let (u, v) = pade_low(a, &B7);
            (u, v, 0)
        }
        Some(_) => {
            let (u, v) = pade_low(a, &B9);
            (u, v, 0)
        }
        None => {
            let s = if norm > THETA_13 {
                (norm / THETA_13).log2().ceil().max(0.0) as i32
            } else {
                0
            };
            let (u, v) = pade_13(&scale(a, 0.5f64.powi(s)));
            (u, v, s)
        }
    };

    let p = &v + &u;
    let q = &v - &u;
    let mut result = q
        .lu()
        .solve(&p)
        .ok_or_else(|| Error::Numeric("singular Padé denominator".into()))?;
    for _ in 0..squarings {
        result = &result * &result;
    }
    Ok(result)
}

/// `exp(A)` together with the Fréchet derivative `L(A, E_k)` for each
/// direction `E_k`.
pub fn expm_with_frechet(
    a: &FockOperator,
    directions: &[FockOperator],
) -> Result<(FockOperator, Vec<FockOperator>)> {
    let (exp, derivs) = expm_frechet_dense(
        a.matrix(),
        &directions.iter().map(|d| d.matrix()).collect::<Vec<_>>(),
    )?;
    Ok((
        FockOperator::new(exp)?,
        derivs
            .into_iter()
            .map(FockOperator::new)
            .collect::<Result<_>>()?,
    ))
}

pub(crate) fn expm_frechet_dense(
    a: &DMatrix<C64>,
    directions: &[&DMatrix<C64>],
) -> Result<(DMatrix<C64>, Vec<DMatrix<C64>>)> {
    let n = a.nrows();
    for e in directions {
        if e.nrows() != n || e.ncols() != n {
            return Err(Error::Dimension {
                expected: n,
                found: e.nrows().max(e.ncols()),
            });
        }
    }
    if directions.is_empty() {
        return Ok((expm(a)?, Vec::new()));
    }
    let mut exp_a = None;
    let mut derivs = Vec::with_capacity(directions.len());
    for e in directions {
        let mut block = DMatrix::from_element(2 * n, 2 * n, ZERO);
        block.view_mut((0, 0), (n, n)).copy_from(a);
        block.view_mut((n, n), (n, n)).copy_from(a);
        block.view_mut((0, n), (n, n)).copy_from(*e);
        let big = expm(&block)?;
        if exp_a.is_none() {
            exp_a = Some(big.view((0, 0), (n, n)).into_owned());
        }
        derivs.push(big.view((0, n), (n, n)).into_owned());
    }
    Ok((exp_a.expect("at least one direction"), derivs))
}

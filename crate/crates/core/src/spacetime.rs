//! Golden constellation, its concatenation with an outer lattice code, and
//! Alamouti pairing for the relay phase of the decode-and-forward protocol.
//!
//! Golden layout: the generator maps `u = (u1, u2, u3, u4)` to four
//! symbols in frame-major order `(x_{1,1}, x_{2,1}, x_{1,2}, x_{2,2})`, where
//! `x_{s,k}` is slot `s` of cooperation frame `k`. Rows 1 and 3 of the
//! generator are slot 1, rows 2 and 4 slot 2. As a 2x2 codeword matrix
//! (slots down, frames across) the layout is `[[x1, x3], [x2, x4]]`.
//!
//! With the `1/sqrt(5)` factor the generator is unitary, so the constellation
//! keeps the energy of its input.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::mathkit::{embed_complex, CMat, RMat};

/// `(1 + sqrt 5) / 2`.
pub fn theta() -> f64 {
    (1.0 + 5f64.sqrt()) / 2.0
}

/// The 4x4 complex Golden generator.
pub fn golden_generator() -> CMat {
    let t = theta();
    let tb = 1.0 - t;
    let i = Complex64::i();
    let alpha = Complex64::new(1.0, tb);
    let alpha_b = Complex64::new(1.0, t);
    let z = Complex64::new(0.0, 0.0);
    let s = 1.0 / 5f64.sqrt();
    CMat::from_rows(&[
        vec![alpha, alpha * t, z, z],
        vec![z, z, i * alpha_b, i * alpha_b * tb],
        vec![z, z, alpha, alpha * t],
        vec![alpha_b, alpha_b * tb, z, z],
    ])
    .expect("constant shape")
    .scaled(Complex64::new(s, 0.0))
}

/// 8x8 real embedding of the Golden generator.
pub fn golden_generator_real() -> RMat {
    embed_complex(&golden_generator())
}

/// Encodes four complex QAM symbols into two cooperation frames.
pub fn golden_encode(u: &[Complex64; 4]) -> [Complex64; 4] {
    let x = golden_generator().mul_vec(u).expect("4x4 times 4");
    [x[0], x[1], x[2], x[3]]
}

/// Determinant of the 2x2 codeword matrix of a frame-major Golden block.
pub fn codeword_determinant(x: &[Complex64; 4]) -> Complex64 {
    x[0] * x[3] - x[2] * x[1]
}

/// `G'_gc G_cc` with `G'_gc = I_{N/2} (x) embed(G_gc)`, for `frames` (N)
/// cooperation frames; `cc` must have `4N` rows.
pub fn concat_generator(cc: &RMat, frames: usize) -> Result<RMat> {
    if frames == 0 || !frames.is_multiple_of(2) {
        return Err(Error::InvalidConfig(format!(
            "number of frames must be even and positive, got {frames}"
        )));
    }
    if cc.rows() != 4 * frames {
        return Err(Error::DimensionMismatch(format!(
            "outer generator has {} rows, expected {}",
            cc.rows(),
            4 * frames
        )));
    }
    let block = golden_generator_real();
    let outer = RMat::block_diag(&vec![block; frames / 2]);
    outer.mul(cc)
}

/// Relay transmissions `(x*_{k+1}, -x*_k)` for the source pair `(x_k, x_{k+1})`.
pub fn alamouti_retransmit(xk: Complex64, xk1: Complex64) -> (Complex64, Complex64) {
    (xk1.conj(), -xk.conj())
}

/// Combines the destination pair
/// `y_k = g1 x_k + g2 x*_{k+1} + v_k`, `y_{k+1} = g1 x_{k+1} - g2 x*_k + v_{k+1}`
/// into `sqrt(|g1|^2 + |g2|^2) (x_k, x_{k+1})` plus white noise of the input
/// variance.
pub fn alamouti_combine(
    yk: Complex64,
    yk1: Complex64,
    g1: Complex64,
    g2: Complex64,
) -> Result<(Complex64, Complex64)> {
    let n = (g1.norm_sqr() + g2.norm_sqr()).sqrt();
    if n == 0.0 {
        return Err(Error::ZeroChannel);
    }
    let a = (g1.conj() * yk - g2 * yk1.conj()) / n;
    let b = (g2.conj() * yk + g1 * yk1.conj()).conj() / n;
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn cn(rng: &mut ChaCha8Rng) -> Complex64 {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        c(a, b) * std::f64::consts::FRAC_1_SQRT_2
    }

    #[test]
    fn first_entry() {
        let g = golden_generator();
        let expect = c(1.0, 1.0 - theta()) / 5f64.sqrt();
        assert!((g[(0, 0)] - expect).norm() < 1e-15);
        assert!((theta() - 1.618033988749895).abs() < 1e-15);
    }

    #[test]
    fn golden_ratio_identity() {
        let t = theta();
        assert!((t * (1.0 - t) + 1.0).abs() < 1e-15);
        assert!((t * t - t - 1.0).abs() < 1e-14);
    }

    #[test]
    fn generator_is_unitary() {
        let g = golden_generator();
        let gram = g.adjoint().mul(&g).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - c(e, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn encode_linearity() {
        let z = c(0.0, 0.0);
        assert_eq!(golden_encode(&[z; 4]), [z; 4]);
        let g = golden_generator();
        for k in 0..4 {
            let mut u = [z; 4];
            u[k] = c(1.0, 0.0);
            let x = golden_encode(&u);
            for i in 0..4 {
                assert!((x[i] - g[(i, k)]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn qam_energy_is_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts = [c(1.0, 1.0), c(1.0, -1.0), c(-1.0, 1.0), c(-1.0, -1.0)];
        let (mut ein, mut eout) = (0.0, 0.0);
        for _ in 0..20_000 {
            let u: [Complex64; 4] = std::array::from_fn(|_| pts[rng.random_range(0..4)]);
            ein += u.iter().map(|z| z.norm_sqr()).sum::<f64>();
            eout += golden_encode(&u).iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
        assert!((eout / ein - 1.0).abs() < 1e-12);
    }

    /// Smallest `|det|` over nonzero differences of `Z[i]` QAM points whose
    /// components range over `-span..=span`.
    fn min_det(span: i32) -> f64 {
        let vals: Vec<Complex64> = (-span..=span)
            .flat_map(|a| (-span..=span).map(move |b| c(a as f64, b as f64)))
            .collect();
        let g = golden_generator();
        let mut best = f64::INFINITY;
        for a in &vals {
            for b in &vals {
                for d in &vals {
                    for e in &vals {
                        let u = [*a, *b, *d, *e];
                        if u.iter().all(|z| z.norm_sqr() == 0.0) {
                            continue;
                        }
                        let x = g.mul_vec(&u).unwrap();
                        let det = codeword_determinant(&[x[0], x[1], x[2], x[3]]).norm();
                        best = best.min(det);
                    }
                }
            }
        }
        best
    }

    #[test]
    fn determinant_does_not_vanish_on_small_differences() {
        let d = min_det(1);
        assert!(d > 1e-3, "min det {d}");
    }

    #[test]
    fn real_integer_differences_have_nonzero_determinant() {
        let g = golden_generator();
        let mut best = f64::INFINITY;
        for a in -3..=3 {
            for b in -3..=3 {
                for d in -3..=3 {
                    for e in -3..=3 {
                        if a == 0 && b == 0 && d == 0 && e == 0 {
                            continue;
                        }
                        let u = [a, b, d, e].map(|v| c(v as f64, 0.0));
                        let x = g.mul_vec(&u).unwrap();
                        best = best.min(codeword_determinant(&[x[0], x[1], x[2], x[3]]).norm());
                    }
                }
            }
        }
        assert!(best > 1e-3);
    }

    #[test]
    fn concat_with_identity_is_golden() {
        let g = concat_generator(&RMat::identity(8), 2).unwrap();
        assert_eq!(g, golden_generator_real());
        assert!(concat_generator(&RMat::identity(12), 3).is_err());
        assert!(concat_generator(&RMat::identity(8), 4).is_err());
    }

    #[test]
    fn concat_is_block_diagonal_and_matches_dense_product() {
        let g = concat_generator(&RMat::identity(16), 4).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                if i / 8 != j / 8 {
                    assert_eq!(g[(i, j)], 0.0);
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cc = RMat::from_fn(16, 16, |_, _| rng.random_range(-3..=3) as f64);
        let got = concat_generator(&cc, 4).unwrap();
        let gr = golden_generator_real();
        for i in 0..16 {
            for j in 0..16 {
                let b = i / 8;
                let expect: f64 = (0..8).map(|k| gr[(i % 8, k)] * cc[(8 * b + k, j)]).sum();
                assert!((got[(i, j)] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn concat_commutes_with_embedding() {
        // Complex outer code acting on complex symbols, embedded afterwards.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let outer = CMat::from_fn(8, 8, |_, _| c(rng.random_range(-2..=2) as f64, rng.random_range(-2..=2) as f64));
        let g = golden_generator();
        let big = CMat::from_fn(8, 8, |i, j| if i / 4 == j / 4 { g[(i % 4, j % 4)] } else { c(0.0, 0.0) });
        let lhs = embed_complex(&big.mul(&outer).unwrap());
        let rhs = concat_generator(&embed_complex(&outer), 4).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                assert!((lhs[(i, j)] - rhs[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn retransmit_examples() {
        assert_eq!(alamouti_retransmit(c(1.0, 0.0), c(0.0, 1.0)), (c(0.0, -1.0), c(-1.0, 0.0)));
        let z = c(0.0, 0.0);
        let (a, b) = alamouti_retransmit(z, z);
        assert_eq!(a.norm(), 0.0);
        assert_eq!(b.norm(), 0.0);
    }

    #[test]
    fn retransmit_reproduces_destination_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let (g1, g2, xk, xk1) = (cn(&mut rng), cn(&mut rng), cn(&mut rng), cn(&mut rng));
            let (t1, t2) = alamouti_retransmit(xk, xk1);
            let yk = g1 * xk + g2 * t1;
            let yk1 = g1 * xk1 + g2 * t2;
            assert!((yk - (g1 * xk + g2 * xk1.conj())).norm() < 1e-14);
            assert!((yk1 - (g1 * xk1 - g2 * xk.conj())).norm() < 1e-14);
        }
    }

    #[test]
    fn combine_examples() {
        let (g1, g2) = (c(1.0, 0.0), c(1.0, 0.0));
        let (xk, xk1) = (c(1.0, 0.0), c(0.0, 1.0));
        let yk = g1 * xk + g2 * xk1.conj();
        let yk1 = g1 * xk1 - g2 * xk.conj();
        let (a, b) = alamouti_combine(yk, yk1, g1, g2).unwrap();
        let r2 = 2f64.sqrt();
        assert!((a - c(r2, 0.0)).norm() < 1e-14);
        assert!((b - c(0.0, r2)).norm() < 1e-14);

        let g1 = c(0.6, -0.8) * 2.0;
        let y = c(0.3, 0.7);
        let (a, _) = alamouti_combine(y, c(0.0, 0.0), g1, c(0.0, 0.0)).unwrap();
        assert!((a - g1.conj() / g1.norm() * y).norm() < 1e-14);

        let z = c(0.0, 0.0);
        assert_eq!(alamouti_combine(y, y, z, z), Err(Error::ZeroChannel));
    }

    #[test]
    fn combine_gain_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let (g1, g2, xk, xk1) = (cn(&mut rng), cn(&mut rng), cn(&mut rng), cn(&mut rng));
            let (t1, t2) = alamouti_retransmit(xk, xk1);
            let (a, b) = alamouti_combine(g1 * xk + g2 * t1, g1 * xk1 + g2 * t2, g1, g2).unwrap();
            let n = (g1.norm_sqr() + g2.norm_sqr()).sqrt();
            assert!((a - n * xk).norm() < 1e-12);
            assert!((b - n * xk1).norm() < 1e-12);
        }
    }

    #[test]
    fn combined_noise_is_white() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (g1, g2) = (c(0.3, -1.1), c(-0.7, 0.4));
        let n = 100_000;
        let (mut s11, mut s22, mut s12) = (0.0, 0.0, c(0.0, 0.0));
        let mut s12c = c(0.0, 0.0);
        for _ in 0..n {
            let (a, b) = alamouti_combine(cn(&mut rng), cn(&mut rng), g1, g2).unwrap();
            s11 += a.norm_sqr();
            s22 += b.norm_sqr();
            s12 += a * b.conj();
            s12c += a * b;
        }
        let n = n as f64;
        assert!((s11 / n - 1.0).abs() < 0.02);
        assert!((s22 / n - 1.0).abs() < 0.02);
        assert!((s12 / n).norm() < 0.02);
        assert!((s12c / n).norm() < 0.02);
    }
}

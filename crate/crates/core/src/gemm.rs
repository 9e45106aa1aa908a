//! Dense matrix product kernel.
//!
//! Every output element is accumulated as `((0 + a0*b0) + a1*b1) + ...` in increasing
//! inner index order, the same order as a textbook triple loop. Vectorization happens
//! across output columns only, so results are bit-identical to the naive loop on every
//! instruction set (Rust never contracts `a * b + c` into a fused multiply-add).

const MR: usize = 4;

/// `c[m x n] = a[m x k] * b[k x n]`, all row-major, `c` overwritten.
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.fill(0.0);
        return;
    }
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx512f") {
            // SAFETY: the required CPU feature was detected at runtime.
            unsafe { gemm_avx512(m, k, n, a, b, c) };
            return;
        }
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: as above.
            unsafe { gemm_avx2(m, k, n, a, b, c) };
            return;
        }
    }
    gemm_tiled::<4>(m, k, n, a, b, c);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
unsafe fn gemm_avx512(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    gemm_tiled::<16>(m, k, n, a, b, c);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn gemm_avx2(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    gemm_tiled::<8>(m, k, n, a, b, c);
}

#[inline(always)]
fn gemm_tiled<const NR: usize>(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    let mut panel = vec![0.0f64; k * NR];
    let mut col0 = 0;
    while col0 < n {
        let width = NR.min(n - col0);
        // pack b[.., col0..col0+width] as k rows of NR, zero padded
        for p in 0..k {
            let src = &b[p * n + col0..p * n + col0 + width];
            let dst = &mut panel[p * NR..p * NR + NR];
            dst[..width].copy_from_slice(src);
            dst[width..].fill(0.0);
        }
        let mut row0 = 0;
        while row0 + MR <= m {
            let acc = kernel::<MR, NR>(k, a, row0, &panel);
            store(&acc, c, n, row0, col0, width);
            row0 += MR;
        }
        while row0 < m {
            let acc = kernel::<1, NR>(k, a, row0, &panel);
            store(&acc, c, n, row0, col0, width);
            row0 += 1;
        }
        col0 += NR;
    }
}

#[inline(always)]
fn kernel<const R: usize, const NR: usize>(
    k: usize,
    a: &[f64],
    row0: usize,
    panel: &[f64],
) -> [[f64; NR]; R] {
    let mut acc = [[0.0f64; NR]; R];
    let rows: [&[f64]; R] = std::array::from_fn(|r| &a[(row0 + r) * k..(row0 + r + 1) * k]);
    for (p, bv) in panel.chunks_exact(NR).enumerate() {
        let bv: &[f64; NR] = bv.try_into().unwrap();
        for r in 0..R {
            // SAFETY: p < k because the panel holds exactly k chunks, and each row has len k.
            let av = unsafe { *rows[r].get_unchecked(p) };
            for j in 0..NR {
                acc[r][j] += av * bv[j];
            }
        }
    }
    acc
}

#[inline(always)]
fn store<const R: usize, const NR: usize>(
    acc: &[[f64; NR]; R],
    c: &mut [f64],
    n: usize,
    row0: usize,
    col0: usize,
    width: usize,
) {
    for (r, row) in acc.iter().enumerate() {
        let dst = &mut c[(row0 + r) * n + col0..(row0 + r) * n + col0 + width];
        dst.copy_from_slice(&row[..width]);
    }
}

/// Row-major transpose of an `rows x cols` matrix.
pub(crate) fn transpose(rows: usize, cols: usize, src: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    const B: usize = 32;
    for i0 in (0..rows).step_by(B) {
        for j0 in (0..cols).step_by(B) {
            for i in i0..(i0 + B).min(rows) {
                for j in j0..(j0 + B).min(cols) {
                    out[j * rows + i] = src[i * cols + j];
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for p in 0..k {
                    acc += a[i * k + p] * b[p * n + j];
                }
                c[i * n + j] = acc;
            }
        }
        c
    }

    #[test]
    fn matches_triple_loop_bit_for_bit() {
        let mut rng = Rng::new(1);
        for _ in 0..200 {
            let m = 1 + rng.below(13) as usize;
            let k = 1 + rng.below(40) as usize;
            let n = 1 + rng.below(37) as usize;
            let a: Vec<f64> = (0..m * k).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
            let b: Vec<f64> = (0..k * n).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
            let mut c = vec![f64::NAN; m * n];
            gemm(m, k, n, &a, &b, &mut c);
            let expect = naive(m, k, n, &a, &b);
            assert!(c.iter().zip(&expect).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn portable_path_agrees_with_dispatch() {
        let mut rng = Rng::new(2);
        let (m, k, n) = (9, 33, 21);
        let a: Vec<f64> = (0..m * k).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..k * n).map(|_| rng.normal()).collect();
        let mut c1 = vec![0.0; m * n];
        let mut c2 = vec![0.0; m * n];
        gemm(m, k, n, &a, &b, &mut c1);
        gemm_tiled::<4>(m, k, n, &a, &b, &mut c2);
        assert_eq!(c1, c2);
    }

    #[test]
    fn transpose_round_trip() {
        let src: Vec<f64> = (0..35).map(f64::from).collect();
        let t = transpose(5, 7, &src);
        assert_eq!(t[5], src[1]);
        assert_eq!(transpose(7, 5, &t), src);
    }
}

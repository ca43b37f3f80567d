//! Hot loops: the three dense-layer products and the Adam update. All
//! matrices are row-major.
//!
//! Dot products accumulate in four interleaved lanes that are summed in a
//! fixed order, so a row's result is the same whether it is computed alone or
//! inside a batch. Each body is compiled twice, once with AVX2 enabled; no
//! fused multiply-add is emitted, so both builds round identically.

const LANES: usize = 4;
const ROW_BLOCK: usize = 8;
const COL_BLOCK: usize = 8;
/// Columns per cache tile; a multiple of both `LANES` and `COL_BLOCK`.
const K_TILE: usize = 512;

/// Emits `$name`, which runs an AVX2 build of `$body` when the CPU supports
/// it and the baseline build otherwise.
macro_rules! dispatch {
    ($(#[$doc:meta])* $name:ident, $avx:ident, $body:ident ($($arg:ident : $ty:ty),*)) => {
        $(#[$doc])*
        pub(crate) fn $name($($arg: $ty),*) {
            #[cfg(target_arch = "x86_64")]
            if std::arch::is_x86_feature_detected!("avx2") {
                // SAFETY: AVX2 support was just checked.
                return unsafe { $avx($($arg),*) };
            }
            $body($($arg),*)
        }

        #[cfg(target_arch = "x86_64")]
        #[target_feature(enable = "avx2")]
        unsafe fn $avx($($arg: $ty),*) {
            $body($($arg),*)
        }
    };
}

/// Adds the products of `R` rows of `x` (row stride `k`) with `w` over
/// columns `lo..hi` into per-lane accumulators.
#[inline(always)]
fn dot_rows_partial<const R: usize>(x: &[f64], k: usize, w: &[f64], lo: usize, hi: usize, acc: &mut [[f64; LANES]]) {
    assert!(x.len() >= R * k && w.len() == k && acc.len() == R && hi <= k && (hi - lo) % LANES == 0);
    let mut local: [[f64; LANES]; R] = std::array::from_fn(|r| acc[r]);
    let mut i = lo;
    while i < hi {
        for (r, lanes) in local.iter_mut().enumerate() {
            for l in 0..LANES {
                // SAFETY: i + l < hi <= k and r < R, so both indices are in bounds
                // given the assertion above.
                unsafe {
                    lanes[l] += *x.get_unchecked(r * k + i + l) * *w.get_unchecked(i + l);
                }
            }
        }
        i += LANES;
    }
    acc.copy_from_slice(&local);
}

/// [`dot_rows_partial`] with explicit AVX2 loads; separate multiply and add
/// keep the rounding identical.
///
/// # Safety
/// The CPU must support AVX2.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
#[inline]
unsafe fn dot_rows_partial_avx2<const R: usize>(
    x: &[f64],
    k: usize,
    w: &[f64],
    lo: usize,
    hi: usize,
    acc: &mut [[f64; LANES]],
) {
    use std::arch::x86_64::{__m256d, _mm256_add_pd, _mm256_loadu_pd, _mm256_mul_pd, _mm256_storeu_pd};
    assert!(x.len() >= R * k && w.len() == k && acc.len() == R && hi <= k && (hi - lo) % LANES == 0);
    // SAFETY: every load reads LANES values at column i < hi <= k of a row
    // r < R, in bounds by the assertion; AVX2 is guaranteed by the caller.
    unsafe {
        let mut v: [__m256d; R] = [_mm256_loadu_pd(acc[0].as_ptr()); R];
        for r in 1..R {
            v[r] = _mm256_loadu_pd(acc[r].as_ptr());
        }
        let (xp, wp) = (x.as_ptr(), w.as_ptr());
        let mut i = lo;
        while i < hi {
            let wv = _mm256_loadu_pd(wp.add(i));
            for r in 0..R {
                v[r] = _mm256_add_pd(v[r], _mm256_mul_pd(_mm256_loadu_pd(xp.add(r * k + i)), wv));
            }
            i += LANES;
        }
        for r in 0..R {
            _mm256_storeu_pd(acc[r].as_mut_ptr(), v[r]);
        }
    }
}

#[inline(always)]
fn affine_tile<const R: usize, const AVX: bool>(
    x: &[f64],
    b: &[f64],
    k: usize,
    n: usize,
    lo: usize,
    hi: usize,
    acc: &mut [[f64; LANES]],
) {
    // `acc` holds R×n lane groups, row-major.
    let mut block = [[0.0; LANES]; R];
    for (j, w) in b.chunks_exact(k).enumerate() {
        for r in 0..R {
            block[r] = acc[r * n + j];
        }
        #[cfg(target_arch = "x86_64")]
        if AVX {
            // SAFETY: AVX is only set by the dispatcher after detecting AVX2.
            unsafe { dot_rows_partial_avx2::<R>(x, k, w, lo, hi, &mut block) };
        } else {
            dot_rows_partial::<R>(x, k, w, lo, hi, &mut block);
        }
        #[cfg(not(target_arch = "x86_64"))]
        dot_rows_partial::<R>(x, k, w, lo, hi, &mut block);
        for r in 0..R {
            acc[r * n + j] = block[r];
        }
    }
}

#[inline(always)]
fn affine_rows_impl<const AVX: bool>(a: &[f64], b: &[f64], bias: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), n * k);
    assert_eq!(bias.len(), n);
    assert_eq!(out.len(), m * n);
    // Columns are processed in tiles so the rows being multiplied stay in
    // cache while every weight row passes over them. Lane sums carry across
    // tiles, so the result does not depend on the tile size or on R.
    let full = k / LANES * LANES;
    let mut acc = vec![[0.0; LANES]; m * n];
    let mut lo = 0;
    while lo < full {
        let hi = (lo + K_TILE).min(full);
        let mut r = 0;
        while r + ROW_BLOCK <= m {
            affine_tile::<ROW_BLOCK, AVX>(&a[r * k..], b, k, n, lo, hi, &mut acc[r * n..(r + ROW_BLOCK) * n]);
            r += ROW_BLOCK;
        }
        for r in r..m {
            affine_tile::<1, AVX>(&a[r * k..], b, k, n, lo, hi, &mut acc[r * n..(r + 1) * n]);
        }
        lo = hi;
    }
    for r in 0..m {
        let xr = &a[r * k..(r + 1) * k];
        for (j, w) in b.chunks_exact(k).enumerate() {
            let l = &acc[r * n + j];
            let tail = xr[full..].iter().zip(&w[full..]).fold(0.0, |s, (p, q)| s + p * q);
            out[r * n + j] = bias[j] + (((l[0] + l[1]) + (l[2] + l[3])) + tail);
        }
    }
}

fn affine_rows_body(a: &[f64], b: &[f64], bias: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    affine_rows_impl::<false>(a, b, bias, m, k, n, out)
}

/// `out (m×n) = bias-broadcast + a (m×k) · bᵀ`, where `b` is stored `n×k`.
pub(crate) fn affine_rows(a: &[f64], b: &[f64], bias: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: AVX2 support was just checked.
        return unsafe { affine_rows_avx2(a, b, bias, m, k, n, out) };
    }
    affine_rows_body(a, b, bias, m, k, n, out)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn affine_rows_avx2(a: &[f64], b: &[f64], bias: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    affine_rows_impl::<true>(a, b, bias, m, k, n, out)
}

#[inline(always)]
fn at_b_body(a: &[f64], b: &[f64], m: usize, n: usize, k: usize, out: &mut [f64]) {
    assert_eq!(a.len(), m * n);
    assert_eq!(b.len(), m * k);
    assert_eq!(out.len(), n * k);
    let rows: Vec<&[f64]> = b.chunks_exact(k).collect();
    let coef: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|r| a[r * n + j]).collect()).collect();
    let blocks = k / COL_BLOCK * COL_BLOCK;
    // Tiled over columns so the rows of `b` stay in cache across all `n`
    // output rows. Each entry is still one sum over the rows in order.
    let mut lo = 0;
    while lo < blocks {
        let hi = (lo + K_TILE).min(blocks);
        for (row, coef) in out.chunks_exact_mut(k).zip(&coef) {
            let mut c0 = lo;
            while c0 < hi {
                row[c0..c0 + COL_BLOCK].copy_from_slice(&column_block(&rows, coef, c0));
                c0 += COL_BLOCK;
            }
        }
        lo = hi;
    }
    for (row, coef) in out.chunks_exact_mut(k).zip(&coef) {
        for c in blocks..k {
            row[c] = rows.iter().zip(coef).fold(0.0, |s, (br, alpha)| s + alpha * br[c]);
        }
    }
}

/// `Σ_r coef[r] · rows[r][c0..c0 + COL_BLOCK]`, summed over `r` in order.
#[inline(always)]
fn column_block(rows: &[&[f64]], coef: &[f64], c0: usize) -> [f64; COL_BLOCK] {
    let mut acc = [0.0; COL_BLOCK];
    for (br, &alpha) in rows.iter().zip(coef) {
        let br: &[f64; COL_BLOCK] = br[c0..c0 + COL_BLOCK].try_into().expect("column block");
        for l in 0..COL_BLOCK {
            acc[l] += alpha * br[l];
        }
    }
    acc
}

dispatch!(
    /// `out (n×k) = aᵀ · b`, where `a` is `m×n` and `b` is `m×k`.
    at_b, at_b_avx2, at_b_body(a: &[f64], b: &[f64], m: usize, n: usize, k: usize, out: &mut [f64])
);

#[inline(always)]
fn a_b_body(a: &[f64], b: &[f64], m: usize, n: usize, k: usize, out: &mut [f64]) {
    assert_eq!(a.len(), m * n);
    assert_eq!(b.len(), n * k);
    assert_eq!(out.len(), m * k);
    for (ar, row) in a.chunks_exact(n).zip(out.chunks_exact_mut(k)) {
        row.fill(0.0);
        for (alpha, br) in ar.iter().zip(b.chunks_exact(k)) {
            for (y, x) in row.iter_mut().zip(br) {
                *y += alpha * x;
            }
        }
    }
}

dispatch!(
    /// `out (m×k) = a (m×n) · b (n×k)`.
    a_b, a_b_avx2, a_b_body(a: &[f64], b: &[f64], m: usize, n: usize, k: usize, out: &mut [f64])
);

/// Scalars shared by every element of one Adam update.
#[derive(Debug, Clone, Copy)]
pub(crate) struct AdamScalars {
    pub beta1: f64,
    pub beta2: f64,
    pub bias1: f64,
    pub bias2: f64,
    pub epsilon: f64,
    pub lr: f64,
}

#[inline(always)]
fn adam_scalar(p: &mut f64, g: f64, m: &mut f64, v: &mut f64, s: AdamScalars) {
    *m = s.beta1 * *m + (1.0 - s.beta1) * g;
    *v = s.beta2 * *v + (1.0 - s.beta2) * g * g;
    let m_hat = *m / s.bias1;
    let v_hat = *v / s.bias2;
    *p -= s.lr * m_hat / (v_hat.sqrt() + s.epsilon);
}

#[inline(always)]
fn adam_update_body(params: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], s: AdamScalars) {
    assert!(params.len() == g.len() && g.len() == m.len() && m.len() == v.len());
    for (((p, g), m), v) in params.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
        adam_scalar(p, *g, m, v, s);
    }
}

dispatch!(
    /// One bias-corrected Adam update over a flat tensor.
    adam_update, adam_update_avx2, adam_update_body(params: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], s: AdamScalars)
);

/// Adam update of an `n×k` weight matrix whose gradient is `aᵀ · b`, with
/// `a` of shape `rows×n` and `b` of shape `rows×k`. Each gradient entry is
/// summed exactly as [`at_b`] sums it.
#[allow(clippy::too_many_arguments)]
#[inline(always)]
fn adam_outer_update_body(
    params: &mut [f64],
    a: &[f64],
    b: &[f64],
    rows: usize,
    n: usize,
    k: usize,
    m: &mut [f64],
    v: &mut [f64],
    s: AdamScalars,
) {
    assert_eq!(a.len(), rows * n);
    assert_eq!(b.len(), rows * k);
    assert!(params.len() == n * k && m.len() == n * k && v.len() == n * k);
    let brows: Vec<&[f64]> = b.chunks_exact(k).collect();
    let coef: Vec<Vec<f64>> = (0..n).map(|j| (0..rows).map(|r| a[r * n + j]).collect()).collect();
    let blocks = k / COL_BLOCK * COL_BLOCK;
    let mut lo = 0;
    while lo < blocks {
        let hi = (lo + K_TILE).min(blocks);
        let per_row = params.chunks_exact_mut(k).zip(m.chunks_exact_mut(k)).zip(v.chunks_exact_mut(k));
        for (((prow, mrow), vrow), coef) in per_row.zip(&coef) {
            let mut c0 = lo;
            while c0 < hi {
                let g = column_block(&brows, coef, c0);
                let p: &mut [f64; COL_BLOCK] = (&mut prow[c0..c0 + COL_BLOCK]).try_into().expect("column block");
                let mm: &mut [f64; COL_BLOCK] = (&mut mrow[c0..c0 + COL_BLOCK]).try_into().expect("column block");
                let vv: &mut [f64; COL_BLOCK] = (&mut vrow[c0..c0 + COL_BLOCK]).try_into().expect("column block");
                for l in 0..COL_BLOCK {
                    adam_scalar(&mut p[l], g[l], &mut mm[l], &mut vv[l], s);
                }
                c0 += COL_BLOCK;
            }
        }
        lo = hi;
    }
    let per_row = params.chunks_exact_mut(k).zip(m.chunks_exact_mut(k)).zip(v.chunks_exact_mut(k));
    for (((prow, mrow), vrow), coef) in per_row.zip(&coef) {
        for c in blocks..k {
            let g = brows.iter().zip(coef).fold(0.0, |acc, (br, alpha)| acc + alpha * br[c]);
            adam_scalar(&mut prow[c], g, &mut mrow[c], &mut vrow[c], s);
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn adam_outer_update(
    params: &mut [f64],
    a: &[f64],
    b: &[f64],
    rows: usize,
    n: usize,
    k: usize,
    m: &mut [f64],
    v: &mut [f64],
    s: AdamScalars,
) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: AVX2 support was just checked.
        return unsafe { adam_outer_update_avx2(params, a, b, rows, n, k, m, v, s) };
    }
    adam_outer_update_body(params, a, b, rows, n, k, m, v, s)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
#[allow(clippy::too_many_arguments)]
unsafe fn adam_outer_update_avx2(
    params: &mut [f64],
    a: &[f64],
    b: &[f64],
    rows: usize,
    n: usize,
    k: usize,
    m: &mut [f64],
    v: &mut [f64],
    s: AdamScalars,
) {
    adam_outer_update_body(params, a, b, rows, n, k, m, v, s)
}

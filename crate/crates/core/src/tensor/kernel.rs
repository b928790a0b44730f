/// `C (+)= A B` for an `m x k` matrix `A` and a `k x n` matrix `B`.
///
/// Strides are in elements (`rs*` between rows, `cs*` between columns), so a
/// transposed operand is passed by swapping its strides. `C` is dense
/// row-major `m x n`; when `accumulate` is false it is overwritten.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    c: &mut [f64],
    accumulate: bool,
) {
    assert!(c.len() >= m * n, "output buffer too small");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c[..m * n].iter_mut().for_each(|x| *x = 0.0);
        }
        return;
    }
    assert!(a.len() > (m - 1) * rsa + (k - 1) * csa, "lhs buffer too small");
    assert!(b.len() > (k - 1) * rsb + (n - 1) * csb, "rhs buffer too small");
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: bounds of all three operands are asserted above and the
    // output does not alias the inputs (distinct borrows).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

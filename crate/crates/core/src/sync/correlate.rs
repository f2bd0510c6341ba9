use crate::protocol::SyncString;

/// Cyclic cross-correlation `C[d] = sum_m x[m] s[(m + d) mod L]`, computed directly.
pub fn direct_correlation(x: &[i8], s: &[i8]) -> Vec<i64> {
    let l = s.len();
    assert_eq!(x.len(), l, "sequence lengths differ");
    let mut out = vec![0i64; l];
    for (m, &v) in x.iter().enumerate() {
        if v == 0 {
            continue;
        }
        let v = i64::from(v);
        for (d, acc) in out.iter_mut().enumerate() {
            let j = m + d;
            *acc += v * i64::from(s[if j >= l { j - l } else { j }]);
        }
    }
    out
}

/// The same correlation against a factored code, in two stages. For a lag
/// `d = k L1 + e` the received matrix is first correlated column-wise with
/// the base block at shift `e` (splitting the rows that wrap into the next
/// period), then row-wise with the row code at shift `k`.
pub fn matrix_correlation(x: &[i8], code: &SyncString) -> Vec<i64> {
    let l1 = code.period_len();
    let n1 = code.periods();
    let b = code.base_block();
    let g = code.row_code();
    assert_eq!(x.len(), l1 * n1, "sequence length differs from the code");

    let nonzero: Vec<(usize, usize, i32)> = x
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0)
        .map(|(m, &v)| (m / l1, m % l1, i32::from(v)))
        .collect();
    let mut rows: Vec<usize> = nonzero.iter().map(|&(r, _, _)| r).collect();
    rows.dedup();

    let mut out = vec![0i64; l1 * n1];
    let mut head = vec![0i32; n1];
    let mut tail = vec![0i32; n1];
    for e in 0..l1 {
        for &r in &rows {
            head[r] = 0;
            tail[r] = 0;
        }
        for &(r, c, v) in &nonzero {
            let j = c + e;
            if j < l1 {
                head[r] += v * i32::from(b[j]);
            } else {
                tail[r] += v * i32::from(b[j - l1]);
            }
        }
        for k in 0..n1 {
            let mut acc = 0i64;
            for &r in &rows {
                let a = (r + k) % n1;
                let c = if a + 1 == n1 { 0 } else { a + 1 };
                acc += i64::from(head[r]) * i64::from(g[a]) + i64::from(tail[r]) * i64::from(g[c]);
            }
            out[k * l1 + e] = acc;
        }
    }
    out
}

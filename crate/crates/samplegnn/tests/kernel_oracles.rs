//! Property tests pinning the sparse and approximate kernels against
//! independent straight-line oracles.

use proptest::prelude::*;

use samplegnn::approx::{self, TopKSelection};
use samplegnn::dense::{self, DenseMatrix};
use samplegnn::rng::{self, Purpose};
use samplegnn::sparse::{self, CsrMatrix};

/// Textbook triple loop, kept deliberately naive.
fn triple_loop_mm(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    assert_eq!(a.n_cols, b.n_rows);
    let mut out = DenseMatrix::zeros(a.n_rows, b.n_cols);
    for i in 0..a.n_rows {
        for j in 0..b.n_cols {
            let mut acc = 0.0;
            for k in 0..a.n_cols {
                acc += a.get(i, k) * b.get(k, j);
            }
            out.set(i, j, acc);
        }
    }
    out
}

fn rel_frob(x: &DenseMatrix, want: &DenseMatrix) -> f64 {
    let num: f64 = x
        .data
        .iter()
        .zip(&want.data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let den = dense::frobenius_norm(want);
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

fn spmm_case() -> impl Strategy<Value = (CsrMatrix, DenseMatrix)> {
    (1usize..12, 1usize..12, 1usize..6).prop_flat_map(|(n, m, d)| {
        let entries = prop::collection::vec((0..n, 0..m, -10.0f64..10.0), 0..=(n * m).min(48));
        let dense_vals = prop::collection::vec(-10.0f64..10.0, m * d);
        (entries, dense_vals).prop_map(move |(e, v)| {
            (
                CsrMatrix::from_coo(n, m, &e).unwrap(),
                DenseMatrix::from_vec(m, d, v),
            )
        })
    })
}

fn csr_case() -> impl Strategy<Value = CsrMatrix> {
    (1usize..14, 1usize..14).prop_flat_map(|(n, m)| {
        prop::collection::vec((0..n, 0..m, -10.0f64..10.0), 0..=(n * m).min(60))
            .prop_map(move |e| CsrMatrix::from_coo(n, m, &e).unwrap())
    })
}

proptest! {
    #[test]
    fn spmm_matches_triple_loop((a, b) in spmm_case()) {
        let got = sparse::spmm(&a, &b);
        let want = triple_loop_mm(&a.to_dense(), &b);
        prop_assert!(rel_frob(&got, &want) <= 1e-12);
    }

    #[test]
    fn spmm_mean_matches_entry_oracle((a, b) in spmm_case()) {
        // Oracle sums stored entries row by row and divides by the stored
        // count, zeros included, mirroring the declared semantics.
        let mut want = DenseMatrix::zeros(a.n_rows, b.n_cols);
        for r in 0..a.n_rows {
            let (cols, vals) = a.row(r);
            if cols.is_empty() {
                continue;
            }
            for j in 0..b.n_cols {
                let mut acc = 0.0;
                for (c, v) in cols.iter().zip(vals) {
                    acc += v * b.get(*c, j);
                }
                want.set(r, j, acc / cols.len() as f64);
            }
        }
        let got = sparse::spmm_mean(&a, &b);
        prop_assert!(rel_frob(&got, &want) <= 1e-12);
    }

    #[test]
    fn transpose_is_an_involution(a in csr_case()) {
        let t = sparse::csr_transpose(&a);
        let tt = sparse::csr_transpose(&t);
        prop_assert_eq!(&a.rowptr, &tt.rowptr);
        prop_assert_eq!(&a.col, &tt.col);
        prop_assert_eq!(&a.val, &tt.val);
        // And the transpose really swaps indices.
        let d = a.to_dense();
        let td = t.to_dense();
        for i in 0..a.n_rows {
            for j in 0..a.n_cols {
                prop_assert_eq!(d.get(i, j), td.get(j, i));
            }
        }
    }

    #[test]
    fn column_nnz_sums_to_total(a in csr_case()) {
        let nnz = sparse::csr_column_nnz(&a);
        prop_assert_eq!(nnz.iter().sum::<usize>(), a.nnz());
        prop_assert_eq!(nnz.len(), a.n_cols);
    }

    #[test]
    fn kept_and_dropped_pairs_sum_to_the_product(
        (a, b) in spmm_case(),
        mask in prop::collection::vec(any::<bool>(), 12),
    ) {
        let kept: Vec<usize> = (0..a.n_cols).filter(|&i| mask[i]).collect();
        let dropped: Vec<usize> = (0..a.n_cols).filter(|&i| !mask[i]).collect();
        let full = sparse::spmm(&a, &b);
        let head = approx::approx_spmm_topk(&a, &b, &TopKSelection { indices: kept });
        let mut tail = approx::approx_spmm_topk(&a, &b, &TopKSelection { indices: dropped });
        tail.add_assign(&head);
        prop_assert!(rel_frob(&tail, &full) <= 1e-12);
    }

    #[test]
    fn dropped_tail_bounds_truncation_error((a, b) in spmm_case()) {
        let stats = approx::pair_stats(&a, &b);
        let k = a.n_cols.div_ceil(2);
        let sel = approx::topk_indices(&stats, k).unwrap();
        let full = sparse::spmm(&a, &b);
        let approx_out = approx::approx_spmm_topk(&a, &b, &sel);
        let err: f64 = full
            .data
            .iter()
            .zip(&approx_out.data)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        let tail: f64 = (0..a.n_cols)
            .filter(|i| !sel.indices.contains(i))
            .map(|i| stats.products[i])
            .sum();
        prop_assert!(err <= tail + 1e-9, "err {err} > tail mass {tail}");
    }

    #[test]
    fn probabilities_ignore_dense_rescaling((a, b) in spmm_case(), scale in 0.1f64..50.0) {
        let base = approx::pair_stats(&a, &b);
        let mut scaled_b = b.clone();
        scaled_b.scale(scale);
        let scaled = approx::pair_stats(&a, &scaled_b);
        for (p, q) in base.probs.iter().zip(&scaled.probs) {
            prop_assert!((p - q).abs() <= 1e-12);
        }
    }

    #[test]
    fn parallel_and_sequential_kernels_agree_bitwise((a, b) in spmm_case()) {
        let bits = |m: &DenseMatrix| m.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&sparse::spmm(&a, &b)), bits(&sparse::spmm_seq(&a, &b)));
        prop_assert_eq!(
            bits(&sparse::spmm_mean(&a, &b)),
            bits(&sparse::spmm_mean_seq(&a, &b))
        );
        let ad = a.to_dense();
        prop_assert_eq!(bits(&dense::matmul(&ad, &b)), bits(&dense::matmul_seq(&ad, &b)));
    }
}

/// Row-echelon rank with partial pivoting, as an independent rank oracle.
fn elimination_rank(x: &DenseMatrix, tol: f64) -> usize {
    let mut m: Vec<Vec<f64>> = (0..x.n_rows).map(|i| x.row(i).to_vec()).collect();
    let (rows, cols) = (x.n_rows, x.n_cols);
    let mut rank = 0;
    for c in 0..cols {
        let pivot = (rank..rows).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()));
        let Some(p) = pivot else { break };
        if m[p][c].abs() <= tol {
            continue;
        }
        m.swap(rank, p);
        for r in 0..rows {
            if r != rank && m[r][c].abs() > 0.0 {
                let f = m[r][c] / m[rank][c];
                let pivot_row = m[rank].clone();
                for (cc, entry) in m[r].iter_mut().enumerate() {
                    *entry -= f * pivot_row[cc];
                }
            }
        }
        rank += 1;
        if rank == rows {
            break;
        }
    }
    rank
}

#[test]
fn stable_rank_never_exceeds_elimination_rank() {
    for case in 0..30u64 {
        let mut rng = rng::substream(2024, Purpose::Probe, case);
        let n = 3 + (case % 6) as usize;
        let m = 2 + (case % 5) as usize;
        let r = 1 + (case % 4) as usize;
        // X = U V has rank at most r by construction.
        let u = dense::xavier_init(n, r, &mut rng);
        let v = dense::xavier_init(r, m, &mut rng);
        let x = dense::matmul(&u, &v);
        let srank = dense::stable_rank(&x).unwrap();
        let ge = elimination_rank(&x, 1e-9) as f64;
        assert!(
            srank <= ge + 1e-6,
            "case {case}: stable rank {srank} above rank {ge}"
        );
        assert!(srank >= 1.0 - 1e-9, "case {case}: stable rank {srank} below 1");
    }
}

#[test]
fn stable_rank_of_orthogonal_columns_is_the_count() {
    // Identity blocks: every singular value is 1, so the ratio is the rank.
    for n in [2usize, 5, 9] {
        let mut x = DenseMatrix::zeros(n, n);
        for i in 0..n {
            x.set(i, i, 1.0);
        }
        let srank = dense::stable_rank(&x).unwrap();
        assert!((srank - n as f64).abs() <= 1e-4, "n={n} got {srank}");
    }
}

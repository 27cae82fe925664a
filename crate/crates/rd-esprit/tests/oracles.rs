//! Frozen expected values, computed by hand from the closed forms before the
//! implementation existed. These pin the numerical contract of the library:
//! if one of these moves, the math changed, not the tolerance.

use num_complex::Complex64 as C64;
use rd_esprit::mse::{
    efficiency_ls, efficiency_sls, single_source_crb, single_source_ls_mse,
    single_source_sls_mse, sls_closed_form_internals,
};
use rd_esprit::model::steering_vector;
use rd_esprit::tensor::{commutation_matrix, ComplexTensor};

const TOL: f64 = 1e-12;

#[test]
fn steering_vector_frozen_entries() {
    // mu = 0, M = 3 -> all ones
    let a = steering_vector(0.0, 3);
    for i in 0..3 {
        assert!((a[(i, 0)] - C64::new(1.0, 0.0)).norm() < TOL);
    }
    // mu = pi, M = 2 -> [1, -1]
    let a = steering_vector(std::f64::consts::PI, 2);
    assert!((a[(0, 0)] - C64::new(1.0, 0.0)).norm() < TOL);
    assert!((a[(1, 0)] - C64::new(-1.0, 0.0)).norm() < TOL);
    // squared norm == M
    let a = steering_vector(0.7321, 9);
    let norm_sq: f64 = (0..9).map(|i| a[(i, 0)].norm_sqr()).sum();
    assert!((norm_sq - 9.0).abs() < TOL);
}

#[test]
fn commutation_matrix_frozen() {
    // K_{m x 1} = I_m
    let k = commutation_matrix(4, 1);
    for i in 0..4 {
        for j in 0..4 {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((k[(i, j)].re - want).abs() < TOL && k[(i, j)].im.abs() < TOL);
        }
    }
    // K_{2x2} swaps the middle two entries of a length-4 vector
    let k = commutation_matrix(2, 2);
    let expect = [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ];
    for i in 0..4 {
        for j in 0..4 {
            assert!((k[(i, j)].re - expect[i][j]).abs() < TOL);
        }
    }
}

#[test]
fn unfold_index_map_brute_force() {
    // 2x3x4 tensor with entry value 100*i1 + 10*i2 + i3 (zero-based indices).
    // The cyclic unfolding puts entry (i1,i2,i3) of the mode-r unfolding at
    // row i_r and a column that ranges over the remaining modes in the order
    // (r+1, ..., P, 1, ..., r-1), earliest slowest.
    let t = ComplexTensor::from_fn(&[2, 3, 4], |idx| {
        C64::new((100 * idx[0] + 10 * idx[1] + idx[2]) as f64, 0.0)
    });

    // mode 1: rows i1 (2), columns over (i2, i3) with i2 slowest -> 12 cols
    let u1 = t.unfold(1).unwrap();
    assert_eq!((u1.nrows(), u1.ncols()), (2, 12));
    for i1 in 0..2 {
        for i2 in 0..3 {
            for i3 in 0..4 {
                let col = i2 * 4 + i3;
                let want = (100 * i1 + 10 * i2 + i3) as f64;
                assert!((u1[(i1, col)].re - want).abs() < TOL);
            }
        }
    }

    // mode 2: rows i2 (3), columns over (i3, i1) with i3 slowest -> 8 cols
    let u2 = t.unfold(2).unwrap();
    assert_eq!((u2.nrows(), u2.ncols()), (3, 8));
    for i1 in 0..2 {
        for i2 in 0..3 {
            for i3 in 0..4 {
                let col = i3 * 2 + i1;
                let want = (100 * i1 + 10 * i2 + i3) as f64;
                assert!((u2[(i2, col)].re - want).abs() < TOL);
            }
        }
    }

    // mode 3: rows i3 (4), columns over (i1, i2) with i1 slowest -> 6 cols
    let u3 = t.unfold(3).unwrap();
    assert_eq!((u3.nrows(), u3.ncols()), (4, 6));
    for i1 in 0..2 {
        for i2 in 0..3 {
            for i3 in 0..4 {
                let col = i1 * 3 + i2;
                let want = (100 * i1 + 10 * i2 + i3) as f64;
                assert!((u3[(i3, col)].re - want).abs() < TOL);
            }
        }
    }
}

#[test]
fn single_source_mse_frozen() {
    // 1-D, M = 4, effective SNR 100: MSE = 1/(100 * 9)
    let mse = single_source_ls_mse(&[4], 100.0);
    assert!((mse[0] - 1.0 / 900.0).abs() < 1e-15);

    // 2-D, M1 = M2 = 3, effective SNR 100: per-mode MSE = M_r/(M (M_r-1)^2)/rho
    // = 3/(9*4)/100 each; sum = 1/600
    let mse = single_source_ls_mse(&[3, 3], 100.0);
    let total: f64 = mse.iter().sum();
    assert!((total - 1.0 / 600.0).abs() < 1e-15);
}

#[test]
fn single_source_crb_frozen() {
    // 1-D, M = 4, effective SNR 1: CRB = 6/(4*15) = 0.1
    let crb = single_source_crb(&[4], 1.0);
    assert!((crb[0] - 0.1).abs() < 1e-15);

    // 2-D, M1 = M2 = 3, effective SNR 100: sum = 2 * 6/(9*8)/100 = 1/600
    let crb = single_source_crb(&[3, 3], 100.0);
    let total: f64 = crb.iter().sum();
    assert!((total - 1.0 / 600.0).abs() < 1e-15);
}

#[test]
fn sls_mse_frozen() {
    // M = 5, effective SNR 1:
    // numerator polynomial 625 - 250 + 600 - 110 + 23 = 888
    // MSE = 6 * 888 / (5 * 36^2 * 16) = 5328/103680
    let mse = single_source_sls_mse(5, 1.0);
    assert!((mse - 5328.0 / 103680.0).abs() < 1e-15);
}

#[test]
fn efficiency_frozen() {
    assert!((efficiency_ls(2) - 1.0).abs() < 1e-15);
    assert!((efficiency_ls(3) - 1.0).abs() < 1e-15);
    assert!((efficiency_ls(5) - 0.8).abs() < 1e-15);
    assert!((efficiency_ls(10) - 54.0 / 110.0).abs() < 1e-15);
    assert!((efficiency_sls(5) - 36.0 / 37.0).abs() < 1e-12);
}

#[test]
fn sls_internals_frozen() {
    // M = 4: gamma = 3*4*5/27 = 20/9; g_D = 6(2m - 5)/27 for m = 1..4
    let r = sls_closed_form_internals(4);
    assert!((r.gamma - 20.0 / 9.0).abs() < 1e-12);
    let g_d_want = [-18.0 / 27.0, -6.0 / 27.0, 6.0 / 27.0, 18.0 / 27.0];
    assert_eq!(r.g_d.len(), 4);
    for (got, want) in r.g_d.iter().zip(g_d_want) {
        assert!((got - want).abs() < 1e-12);
    }

    // M = 3: G = [[7/3, -2/3], [-2/3, 7/3]], G^{-1} = [[7/15, 2/15], [2/15, 7/15]]
    let r = sls_closed_form_internals(3);
    let g_want = [[7.0 / 3.0, -2.0 / 3.0], [-2.0 / 3.0, 7.0 / 3.0]];
    let ginv_want = [[7.0 / 15.0, 2.0 / 15.0], [2.0 / 15.0, 7.0 / 15.0]];
    for i in 0..2 {
        for j in 0..2 {
            assert!((r.g[(i, j)] - g_want[i][j]).abs() < 1e-12);
            assert!((r.g_inverse[(i, j)] - ginv_want[i][j]).abs() < 1e-12);
        }
    }
}

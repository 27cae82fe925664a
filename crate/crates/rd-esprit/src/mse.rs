//! Analytical mean square errors, single-source closed forms, and the
//! deterministic Cramér-Rao bound.
//!
//! The centerpiece is the quadratic form
//! `MSE = ½(r_kᴴ·W*·R_nnᵀ·Wᵀ·r_k − Re{r_kᵀ·W·C_nn·Wᵀ·r_k})`,
//! where `W` maps the vectorized noise onto the vectorized subspace error
//! (`W_mat` for the SVD-based estimators, the three-term `W_ten` for the
//! 2-D tensor estimators) and `r_k^(r)` collects the frequency-selection
//! row of the first-order expansion. Forward-backward averaging is handled
//! by literal substitution: FBA subspaces plus the block-extended noise
//! covariance and pseudo-covariance.
//!
//! For a single source on a uniform grid everything collapses to closed
//! forms in `M` and the effective SNR `ρ̂ = N·P̂_T/σ²`:
//! least-squares MSE `M_r/(M·(M_r−1)²·ρ̂)` per mode, the structured-least-
//! squares polynomial expression, the bound `6/(M·(M_r²−1)·ρ̂)`, and the
//! asymptotic efficiencies they imply.

use crate::esprit::Variant;
use crate::model::{steering_matrix, steering_vector, Scenario};
use crate::perturb::ExactModel;
use crate::subspace::{SubspaceSet, TensorSubspaceSet};
use crate::tensor::{commutation_matrix, eye, kron};
use crate::{C64, CMat, Error, RMat, Result};
use faer::linalg::solvers::Solve;

/// Analytical second-order error report.
#[derive(Debug, Clone)]
pub struct MseReport {
    pub variant: Variant,
    /// `mse[k][r]`: first-order MSE of source `k`, mode `r`.
    pub mse: Vec<Vec<f64>>,
    /// Deterministic Cramér-Rao bound per `(k, r)` when available.
    pub crb: Option<Vec<Vec<f64>>>,
    /// `crb/mse` elementwise when both are present.
    pub efficiency: Option<Vec<Vec<f64>>>,
    /// Effective SNR `ρ̂ = N·P̂_T/σ²` when the noise is white.
    pub effective_snr: Option<f64>,
    /// Row vectors of the error expansion, `r_vectors[k][r]` of length `d·M`
    /// (for SLS: `r_{k,SLS}`, one mode).
    pub r_vectors: Vec<Vec<CMat>>,
    /// The subspace-error weighting matrix the MSE was computed with.
    pub w: Option<CMat>,
}

/// `W_mat = (Σs⁻¹·Vsᵀ) ⊗ (Un·Unᴴ)`: maps `vec(N)` to `vec(ΔUs)`.
pub fn build_w_mat(sub: &SubspaceSet) -> Result<CMat> {
    let d = sub.us.ncols();
    if sub.sigma_s.iter().any(|&s| s <= 0.0) {
        return Err(Error::IllPosed("noise-free observation has rank below d".into()));
    }
    let mut svt = CMat::zeros(d, sub.vs.nrows());
    for i in 0..d {
        let inv = C64::new(1.0 / sub.sigma_s[i], 0.0);
        for j in 0..sub.vs.nrows() {
            svt[(i, j)] = sub.vs[(j, i)] * inv;
        }
    }
    let proj = sub.noise_projector();
    Ok(kron(&svt, &proj))
}

/// `W_ten` for two spatial modes: maps `vec(N)` to the vectorized
/// HOSVD-based subspace error. The three terms are the projected SVD error
/// and one mode-subspace correction per spatial dimension; the mode-1 term
/// needs a commutation matrix to reorder its unfolding back into `vec(N)`
/// order.
pub fn build_w_ten(ts: &TensorSubspaceSet) -> Result<CMat> {
    if ts.mode_sets.len() != 2 {
        return Err(Error::UnsupportedVariant(
            "the tensor MSE weighting matrix is derived for two spatial modes only".into(),
        ));
    }
    let m1 = ts.mode_sets[0].us.nrows();
    let m2 = ts.mode_sets[1].us.nrows();
    let m = m1 * m2;
    let n = ts.matrix_set.vs.nrows();
    let d = ts.matrix_set.us.ncols();
    // term 1: (Σs⁻¹Vsᵀ) ⊗ ([T₁⊗T₂]·Un·Unᴴ)
    let mut svt = CMat::zeros(d, n);
    for i in 0..d {
        let inv = C64::new(1.0 / ts.matrix_set.sigma_s[i], 0.0);
        for j in 0..n {
            svt[(i, j)] = ts.matrix_set.vs[(j, i)] * inv;
        }
    }
    let t12 = kron(&ts.projections[0], &ts.projections[1]);
    let proj_n = ts.matrix_set.noise_projector();
    let mut w = kron(&svt, &(&t12 * &proj_n).to_owned());
    // (Usᵀ ⊗ I_M), shared by both mode terms
    let left = kron(&ts.matrix_set.us.transpose().to_owned(), &eye(m));
    // mode-1 term: (Usᵀ⊗I_M)·T̄₂·(U₁^[s]*Σ₁⁻¹V₁^[s]ᵀ ⊗ U₁^[n]U₁^[n]ᴴ)·K_{M₂×(M₁N)}
    if ts.mode_sets[0].un.ncols() > 0 {
        let t_bar2 = {
            let t2 = &ts.projections[1];
            let mut stack = CMat::zeros(m1 * m2 * m2, m1);
            for mm in 0..m2 {
                let col = CMat::from_fn(m2, 1, |i, _| t2[(i, mm)]);
                let blk = kron(&eye(m1), &col);
                for i in 0..m1 * m2 {
                    for j in 0..m1 {
                        stack[(mm * m1 * m2 + i, j)] = blk[(i, j)];
                    }
                }
            }
            kron(&eye(m1), &stack)
        };
        w = (&w + &left * &t_bar2 * &mode_factor(&ts.mode_sets[0])
            * commutation_matrix(m1 * n, m2))
        .to_owned();
    }
    // mode-2 term: (Usᵀ⊗I_M)·T̄₁·(U₂^[s]*Σ₂⁻¹V₂^[s]ᵀ ⊗ U₂^[n]U₂^[n]ᴴ)
    if ts.mode_sets[1].un.ncols() > 0 {
        let t_bar1 = {
            let t1 = &ts.projections[0];
            let mut stack = CMat::zeros(m2 * m1 * m1, m2);
            for mm in 0..m1 {
                let col = CMat::from_fn(m1, 1, |i, _| t1[(i, mm)]);
                let blk = kron(&eye(m2), &col);
                for i in 0..m1 * m2 {
                    for j in 0..m2 {
                        stack[(mm * m1 * m2 + i, j)] = blk[(i, j)];
                    }
                }
            }
            kron(&stack, &eye(m2))
        };
        w = (&w + &left * &t_bar1 * &mode_factor(&ts.mode_sets[1])).to_owned();
    }
    Ok(w)
}

/// `U_r^[s]*·Σ_r⁻¹·V_r^[s]ᵀ ⊗ U_r^[n]·U_r^[n]ᴴ` for one spatial mode.
fn mode_factor(set: &SubspaceSet) -> CMat {
    let p = set.us.ncols();
    let mut usv = CMat::zeros(set.us.nrows(), set.vs.nrows());
    for i in 0..set.us.nrows() {
        for j in 0..set.vs.nrows() {
            let mut acc = C64::new(0.0, 0.0);
            for l in 0..p {
                acc += set.us[(i, l)].conj() * set.vs[(j, l)] / set.sigma_s[l];
            }
            usv[(i, j)] = acc;
        }
    }
    let proj = set.noise_projector();
    kron(&usv, &proj)
}

/// Noise second-order description in vectorized (matrix-view, column-major)
/// coordinates. `White` keeps the identity structure implicit.
enum NoiseMoments {
    White { variance: f64 },
    General { r_nn: CMat, c_nn: CMat },
}

/// Analytical MSE for one linearized estimator and a noise description.
pub fn analytical_mse(model: &ExactModel, noise: &crate::model::NoiseSpec) -> Result<MseReport> {
    let s = &model.scenario;
    let d = s.d;
    let m = s.m_total();
    let fba = model.subspace.vs.nrows() != s.n_snapshots;
    let w = match &model.tensor_subspace {
        Some(ts) => build_w_ten(ts)?,
        None => build_w_mat(&model.subspace)?,
    };
    let moments = match noise {
        crate::model::NoiseSpec::WhiteCircular { variance } => {
            if *variance <= 0.0 {
                return Err(Error::Config("noise variance must be positive".into()));
            }
            NoiseMoments::White { variance: *variance }
        }
        crate::model::NoiseSpec::General { r_nn, c_nn } => {
            let (mut r, mut c) = (r_nn.clone(), c_nn.clone());
            if fba {
                let (rf, cf) = fba_noise_moments(&r, &c);
                r = rf;
                c = cf;
            }
            NoiseMoments::General { r_nn: r, c_nn: c }
        }
    };
    if let NoiseMoments::General { r_nn, .. } = &moments {
        if r_nn.nrows() != w.ncols() {
            return Err(Error::Dimension(format!(
                "noise covariance is {}x{}, expected {}",
                r_nn.nrows(),
                r_nn.ncols(),
                w.ncols()
            )));
        }
    }
    let r_modes = if model.variant == Variant::Sls { 1 } else { s.r() };
    let mut mse = vec![vec![0.0; r_modes]; d];
    let mut r_vectors: Vec<Vec<CMat>> = vec![Vec::with_capacity(r_modes); d];
    for k in 0..d {
        for mode in 0..r_modes {
            let rk = if model.variant == Variant::Sls {
                let rows = model.sls_row_vectors().expect("SLS rows exist");
                CMat::from_fn(d * m, 1, |i, _| rows[(k, i)])
            } else {
                // r_k = q_k ⊗ (row factor k)ᵀ
                let rows = model.row_factor(mode);
                CMat::from_fn(d * m, 1, |i, _| model.q[(i / m, k)] * rows[(k, i % m)])
            };
            let z = (w.transpose() * &rk).to_owned(); // length MN (or 2MN)
            let val = match &moments {
                NoiseMoments::White { variance } => {
                    let norm2: f64 = (0..z.nrows()).map(|i| z[(i, 0)].norm_sqr()).sum();
                    let term1 = variance * norm2;
                    let term2 = if fba {
                        // C^(fba) = σ²·Π: zᵀ·Π·z pairs entry i with its mirror
                        let l = z.nrows();
                        let mut acc = C64::new(0.0, 0.0);
                        for i in 0..l {
                            acc += z[(i, 0)] * z[(l - 1 - i, 0)];
                        }
                        variance * acc.re
                    } else {
                        0.0
                    };
                    0.5 * (term1 - term2)
                }
                NoiseMoments::General { r_nn, c_nn } => {
                    let mut term1 = C64::new(0.0, 0.0);
                    let mut term2 = C64::new(0.0, 0.0);
                    for i in 0..z.nrows() {
                        for j in 0..z.nrows() {
                            // zᴴ·R_nnᵀ·z and zᵀ·C_nn·z
                            term1 += z[(i, 0)].conj() * r_nn[(j, i)] * z[(j, 0)];
                            term2 += z[(i, 0)] * c_nn[(i, j)] * z[(j, 0)];
                        }
                    }
                    0.5 * (term1.re - term2.re)
                }
            };
            mse[k][mode] = val;
            r_vectors[k].push(rk);
        }
    }
    Ok(MseReport {
        variant: model.variant,
        mse,
        crb: None,
        efficiency: None,
        effective_snr: None,
        r_vectors,
        w: Some(w),
    })
}

/// Block-extend noise moments for forward-backward averaging:
/// the virtual snapshots are conjugated and doubly flipped copies, so their
/// moments are mirror images of the originals.
pub fn fba_noise_moments(r_nn: &CMat, c_nn: &CMat) -> (CMat, CMat) {
    let l = r_nn.nrows();
    let mirror = |i: usize| l - 1 - i;
    let r = CMat::from_fn(2 * l, 2 * l, |i, j| match (i < l, j < l) {
        (true, true) => r_nn[(i, j)],
        (true, false) => c_nn[(i, mirror(j - l))],
        (false, true) => c_nn[(mirror(i - l), j)].conj(),
        (false, false) => r_nn[(mirror(i - l), mirror(j - l))].conj(),
    });
    let c = CMat::from_fn(2 * l, 2 * l, |i, j| match (i < l, j < l) {
        (true, true) => c_nn[(i, j)],
        (true, false) => r_nn[(i, mirror(j - l))],
        (false, true) => r_nn[(mirror(i - l), j)].conj(),
        (false, false) => c_nn[(mirror(i - l), mirror(j - l))].conj(),
    });
    (r, c)
}

/// Per-mode single-source least-squares MSE `M_r/(M·(M_r−1)²·ρ̂)`.
pub fn single_source_ls_mse(m: &[usize], rho_hat: f64) -> Vec<f64> {
    let m_total: usize = m.iter().product();
    m.iter()
        .map(|&mr| (mr as f64) / ((m_total as f64) * ((mr - 1) as f64).powi(2) * rho_hat))
        .collect()
}

/// Single-source structured-least-squares MSE for an `M`-element uniform
/// linear array: `6(M⁴−2M³+24M²−22M+23)/(M(M²+11)²(M−1)²·ρ̂)`.
pub fn single_source_sls_mse(m: usize, rho_hat: f64) -> f64 {
    let mf = m as f64;
    let num = 6.0 * (mf.powi(4) - 2.0 * mf.powi(3) + 24.0 * mf * mf - 22.0 * mf + 23.0);
    let den = mf * (mf * mf + 11.0).powi(2) * (mf - 1.0).powi(2);
    num / (den * rho_hat)
}

/// Per-mode single-source deterministic Cramér-Rao bound
/// `6/(M·(M_r²−1)·ρ̂)`.
pub fn single_source_crb(m: &[usize], rho_hat: f64) -> Vec<f64> {
    let m_total: usize = m.iter().product();
    m.iter()
        .map(|&mr| 6.0 / ((m_total as f64) * ((mr * mr - 1) as f64) * rho_hat))
        .collect()
}

/// Asymptotic efficiency of single-source least squares: `6(M−1)/(M(M+1))`.
pub fn efficiency_ls(m: usize) -> f64 {
    let mf = m as f64;
    6.0 * (mf - 1.0) / (mf * (mf + 1.0))
}

/// Asymptotic efficiency of single-source structured least squares:
/// `(M²+11)²(M−1)/((M+1)(M⁴−2M³+24M²−22M+23))`.
pub fn efficiency_sls(m: usize) -> f64 {
    let mf = m as f64;
    let num = (mf * mf + 11.0).powi(2) * (mf - 1.0);
    let den = (mf + 1.0) * (mf.powi(4) - 2.0 * mf.powi(3) + 24.0 * mf * mf - 22.0 * mf + 23.0);
    num / den
}

/// Intermediate quantities of the structured-least-squares closed form.
#[derive(Debug, Clone)]
pub struct SlsClosedFormInternals {
    /// `γ(M) = (M−1)M(M+1)/(M²+11)`.
    pub gamma: f64,
    /// `g_{D,m} = 6(2m−M−1)/(M²+11)` for `m = 1..M`.
    pub g_d: Vec<f64>,
    /// `(M−1)×(M−1)` normal matrix `G = (1/M)·11ᵀ + 2I − shift − shiftᵀ`.
    pub g: RMat,
    /// Closed-form inverse of `G`.
    pub g_inverse: RMat,
}

/// Closed-form internals of the single-source SLS analysis for subarray
/// size `M−1` on an `M`-element uniform linear array.
pub fn sls_closed_form_internals(m: usize) -> SlsClosedFormInternals {
    assert!(m >= 2, "need at least two sensors");
    let mf = m as f64;
    let denom = mf * mf + 11.0;
    let gamma = (mf - 1.0) * mf * (mf + 1.0) / denom;
    let g_d: Vec<f64> = (1..=m).map(|mm| 6.0 * (2.0 * mm as f64 - mf - 1.0) / denom).collect();
    let msub = m - 1;
    let mut g = RMat::zeros(msub, msub);
    for i in 0..msub {
        for j in 0..msub {
            let mut v = 1.0 / mf;
            if i == j {
                v += 2.0;
            }
            if i + 1 == j || j + 1 == i {
                v -= 1.0;
            }
            g[(i, j)] = v;
        }
    }
    let mut g_inverse = RMat::zeros(msub, msub);
    for i in 0..msub {
        for j in 0..msub {
            // closed form, 1-based indices with m1 >= m2
            let (m1, m2) = if i >= j { ((i + 1) as f64, (j + 1) as f64) } else {
                ((j + 1) as f64, (i + 1) as f64)
            };
            g_inverse[(i, j)] =
                ((mf - m1) * m2 - 3.0 * m1 * (mf - m1) * m2 * (mf - m2) / denom) / mf;
        }
    }
    SlsClosedFormInternals { gamma, g_d, g, g_inverse }
}

/// Single-source closed forms packaged as a report: per-mode MSE, bound and
/// efficiency for uniform line/rectangular geometries.
pub fn single_source_closed_forms(
    s: &Scenario,
    variant: Variant,
    rho_hat: f64,
) -> Result<MseReport> {
    if s.d != 1 {
        return Err(Error::UnsupportedVariant(
            "closed forms exist for a single source only".into(),
        ));
    }
    let mse_modes: Vec<f64> = match variant {
        Variant::Standard | Variant::Unitary | Variant::StandardTensor | Variant::UnitaryTensor => {
            single_source_ls_mse(&s.m, rho_hat)
        }
        Variant::Sls => {
            if s.r() != 1 {
                return Err(Error::UnsupportedVariant(
                    "the structured-least-squares closed form is one-dimensional".into(),
                ));
            }
            vec![single_source_sls_mse(s.m[0], rho_hat)]
        }
    };
    let crb_modes = single_source_crb(&s.m, rho_hat);
    let crb_used: Vec<f64> = crb_modes[..mse_modes.len()].to_vec();
    let eff: Vec<f64> = crb_used.iter().zip(&mse_modes).map(|(c, m)| c / m).collect();
    Ok(MseReport {
        variant,
        mse: vec![mse_modes],
        crb: Some(vec![crb_used]),
        efficiency: Some(vec![eff]),
        effective_snr: Some(rho_hat),
        r_vectors: Vec::new(),
        w: None,
    })
}

/// Deterministic Cramér-Rao bound
/// `C = σ²/(2N)·Re{[D^ᴴ·P⊥_A·D] ⊙ (1_{R×R} ⊗ R̂_Sᵀ)}⁻¹` for a concrete
/// symbol realization; the `(k, r)` variance sits at diagonal index
/// `r·d + k`.
pub fn crb_deterministic(s: &Scenario, symbols: &CMat, sigma2: f64) -> Result<MseReport> {
    s.validate()?;
    if sigma2 <= 0.0 {
        return Err(Error::Config("noise variance must be positive".into()));
    }
    let d = s.d;
    let r_modes = s.r();
    let m = s.m_total();
    let n = s.n_snapshots;
    let a = steering_matrix(s);
    // P⊥_A = I − A(AᴴA)⁻¹Aᴴ
    let aha = (a.adjoint() * &a).to_owned();
    let sol = aha.partial_piv_lu().solve((a.adjoint() * eye(m)).to_owned());
    let p_perp = (eye(m) - &a * &sol).to_owned();
    // derivative matrix: column r·d + k is ∂a(μ_k)/∂μ_k^(r)
    let mut deriv = CMat::zeros(m, d * r_modes);
    for r in 0..r_modes {
        for k in 0..d {
            let mut col: Option<CMat> = None;
            for mode in 0..r_modes {
                let blk = if mode == r {
                    let mr = s.m[mode];
                    CMat::from_fn(mr, 1, |i, _| {
                        C64::new(0.0, i as f64) * C64::from_polar(1.0, i as f64 * s.mu[k][mode])
                    })
                } else {
                    steering_vector(s.mu[k][mode], s.m[mode])
                };
                col = Some(match col {
                    None => blk,
                    Some(c) => kron(&c, &blk),
                });
            }
            let col = col.unwrap();
            for i in 0..m {
                deriv[(i, r * d + k)] = col[(i, 0)];
            }
        }
    }
    let core = (deriv.adjoint() * &p_perp * &deriv).to_owned();
    let rs = (symbols * symbols.adjoint()).to_owned(); // N·R̂_S
    let mut fisher = RMat::zeros(d * r_modes, d * r_modes);
    for i in 0..d * r_modes {
        for j in 0..d * r_modes {
            // Hadamard mask: (1_{R×R} ⊗ R̂_Sᵀ), i.e. R̂_S[(j mod d, i mod d)]
            let mask = rs[(j % d, i % d)] / C64::new(n as f64, 0.0);
            fisher[(i, j)] = (core[(i, j)] * mask).re;
        }
    }
    let inv = {
        let lu = fisher.partial_piv_lu();
        lu.solve(RMat::from_fn(d * r_modes, d * r_modes, |i, j| {
            if i == j { 1.0 } else { 0.0 }
        }))
    };
    let scale = sigma2 / (2.0 * n as f64);
    let mut crb = vec![vec![0.0; r_modes]; d];
    for r in 0..r_modes {
        for k in 0..d {
            let v = scale * inv[(r * d + k, r * d + k)];
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::IllPosed("singular Fisher information".into()));
            }
            crb[k][r] = v;
        }
    }
    let p_t = symbols.norm_l2() * symbols.norm_l2() / n as f64;
    Ok(MseReport {
        variant: Variant::Standard,
        mse: crb.clone(),
        crb: Some(crb),
        efficiency: None,
        effective_snr: Some(n as f64 * p_t / sigma2),
        r_vectors: Vec::new(),
        w: None,
    })
}

/// Elementwise efficiency `crb/mse` of a report carrying both.
pub fn efficiency(report: &MseReport) -> Result<Vec<Vec<f64>>> {
    let crb = report
        .crb
        .as_ref()
        .ok_or_else(|| Error::Config("report carries no bound".into()))?;
    let mut out = Vec::with_capacity(report.mse.len());
    for (mrow, crow) in report.mse.iter().zip(crb) {
        let mut row = Vec::with_capacity(mrow.len());
        for (&m, &c) in mrow.iter().zip(crow) {
            if m <= 0.0 {
                return Err(Error::IllPosed("efficiency undefined for zero MSE".into()));
            }
            row.push(c / m);
        }
        out.push(row);
    }
    Ok(out)
}

/// Effective SNR `ρ̂ = N·P̂_T/σ²` with the realized total power
/// `P̂_T = ‖S‖²_F/N`.
pub fn effective_snr(symbols: &CMat, sigma2: f64) -> f64 {
    let n = symbols.ncols() as f64;
    let p_t = symbols.norm_l2() * symbols.norm_l2() / n;
    n * p_t / sigma2
}

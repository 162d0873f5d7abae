//! Eigenvalues, numerical rank, rank-of-iterates sweeps, invariant-subspace
//! extraction, and cross-section spectrum consistency.
//!
//! The central object is the rank sweep: numerical ranks of DP^m for
//! m = 1..n_max, the index at which they stabilize, and an orthonormal basis
//! of the stabilized range. The stabilized rank r is the dimension of the
//! attracting invariant subsystem transverse to the orbit's phase; the basis
//! spans its tangent space at the fixed point to linear order. Exact
//! integer-arithmetic counterparts of the two rank identities this relies on
//! live in [`exact`].

pub mod exact;

use crate::error::{Error, Result};
use crate::flow::StepperConfig;
use crate::poincare::{
    find_fixed_point, jacobian_fd, return_map, FdScheme, FixedPointOpts, SectionDef,
};
use crate::system::{HybridSystemDef, PeriodicOrbitResult, StateVec};
use nalgebra::{Complex, DMatrix};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Default relative singular-value threshold for numerical rank of
/// finite-difference Jacobians: the FD noise floor is around 1e-9..1e-8
/// relative, leaving two orders of margin.
pub const DEFAULT_RANK_RTOL: f64 = 1e-6;

/// Default modulus below which a multiplier counts as zero in stability and
/// section-consistency decisions. Deliberately looser than the rank rtol:
/// eigenvalues of near-defective blocks move like the k-th root of a matrix
/// perturbation.
pub const DEFAULT_ZERO_TOL: f64 = 1e-4;

/// A complex value in serializable form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexVal {
    pub re: f64,
    pub im: f64,
}

impl ComplexVal {
    pub fn modulus(&self) -> f64 {
        (self.re * self.re + self.im * self.im).sqrt()
    }
}

impl From<Complex<f64>> for ComplexVal {
    fn from(c: Complex<f64>) -> Self {
        Self { re: c.re, im: c.im }
    }
}

/// All eigenvalues of a small dense real matrix, with multiplicity.
///
/// Closed form for dimensions up to 2; Hessenberg reduction with shifted QR
/// iteration (a Schur decomposition) otherwise. Complex eigenvalues of real
/// input are returned in conjugate pairs, which is asserted on output.
pub fn eigenvalues(matrix: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let d = matrix.nrows();
    if d != matrix.ncols() {
        return Err(Error::Invalid(format!(
            "eigenvalues need a square matrix, got {}x{}",
            d,
            matrix.ncols()
        )));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("matrix has non-finite entries".into()));
    }
    let mut eigs = match d {
        0 => Vec::new(),
        1 => vec![Complex::new(matrix[(0, 0)], 0.0)],
        2 => {
            let (a, b, c, dd) = (
                matrix[(0, 0)],
                matrix[(0, 1)],
                matrix[(1, 0)],
                matrix[(1, 1)],
            );
            let tr = a + dd;
            let det = a * dd - b * c;
            let disc = tr * tr - 4.0 * det;
            if disc >= 0.0 {
                let s = disc.sqrt();
                vec![
                    Complex::new((tr + s) / 2.0, 0.0),
                    Complex::new((tr - s) / 2.0, 0.0),
                ]
            } else {
                let s = (-disc).sqrt() / 2.0;
                vec![Complex::new(tr / 2.0, s), Complex::new(tr / 2.0, -s)]
            }
        }
        _ => {
            let schur = nalgebra::linalg::Schur::try_new(matrix.clone(), f64::EPSILON, 100_000)
                .ok_or(Error::NoConvergenceQr { dim: d })?;
            schur.complex_eigenvalues().iter().copied().collect()
        }
    };

    // sort deterministically and check conjugate pairing
    eigs.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    let scale = eigs.iter().map(|e| e.norm()).fold(1.0, f64::max);
    let mut claimed = vec![false; eigs.len()];
    for i in 0..eigs.len() {
        if claimed[i] || eigs[i].im == 0.0 {
            continue;
        }
        let partner = (0..eigs.len()).find(|&j| {
            j != i
                && !claimed[j]
                && (eigs[j].re - eigs[i].re).abs() <= 1e-9 * scale
                && (eigs[j].im + eigs[i].im).abs() <= 1e-9 * scale
        });
        match partner {
            Some(j) => {
                claimed[i] = true;
                claimed[j] = true;
            }
            None => {
                return Err(Error::Invalid(format!(
                    "unpaired complex eigenvalue {} + {}i of a real matrix",
                    eigs[i].re, eigs[i].im
                )))
            }
        }
    }
    Ok(eigs)
}

/// Numerical rank: the count of singular values above `rtol * sigma_max`
/// (rank 0 when sigma_max = 0), plus the singular values in descending order.
pub fn numerical_rank(matrix: &DMatrix<f64>, rtol: f64) -> Result<(usize, Vec<f64>)> {
    let svd = nalgebra::linalg::SVD::try_new(matrix.clone(), false, false, f64::EPSILON, 0)
        .ok_or(Error::NoConvergenceSvd {
            rows: matrix.nrows(),
            cols: matrix.ncols(),
        })?;
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let sigma_max = sv.first().copied().unwrap_or(0.0);
    let rank = if sigma_max == 0.0 {
        0
    } else {
        sv.iter().filter(|&&s| s > rtol * sigma_max).count()
    };
    Ok((rank, sv))
}

/// Numerical ranks of DP^m for m = 1..n_max with the stabilization point and
/// an orthonormal basis of the stabilized range.
#[derive(Clone, Debug, Serialize)]
pub struct RankSweep {
    /// ranks[m-1] = numerical rank of DP^m.
    pub ranks: Vec<usize>,
    /// Smallest power (1-based) from which the ranks are all equal.
    pub stabilization_index: usize,
    /// The stabilized rank.
    pub r: usize,
    /// Orthonormal columns spanning range(DP^{stabilization_index}).
    pub basis: Vec<Vec<f64>>,
    /// Relative singular-value threshold used for every rank decision.
    pub rtol: f64,
    /// Largest singular value of each power before renormalization; their
    /// running product reconstructs the true power's scale.
    pub scales: Vec<f64>,
    /// Singular values (descending) of each renormalized power.
    pub singular_values: Vec<Vec<f64>>,
}

impl RankSweep {
    pub fn basis_matrix(&self) -> DMatrix<f64> {
        let d = self.basis.first().map(|c| c.len()).unwrap_or(0);
        DMatrix::from_fn(d, self.basis.len(), |i, j| self.basis[j][i])
    }
}

/// Compute the rank-of-iterates sweep of a square matrix.
///
/// Powers are formed by repeated multiplication with per-power
/// renormalization (each power is divided by its largest singular value
/// before the next multiplication) so singular-value ratios stay meaningful
/// for ranks. The rank sequence must be non-increasing; an increase reports
/// an error since it indicates an unusable `rtol`. If the ranks are still
/// strictly decreasing at `n_max` the sweep fails with `NoStabilization`.
pub fn rank_sweep(dp: &DMatrix<f64>, n_max: usize, rtol: f64) -> Result<RankSweep> {
    if dp.nrows() != dp.ncols() {
        return Err(Error::Invalid(format!(
            "rank sweep needs a square matrix, got {}x{}",
            dp.nrows(),
            dp.ncols()
        )));
    }
    if n_max < 1 {
        return Err(Error::Invalid("n_max must be at least 1".into()));
    }
    let d = dp.nrows();

    let mut ranks: Vec<usize> = Vec::with_capacity(n_max);
    let mut scales: Vec<f64> = Vec::with_capacity(n_max);
    let mut all_sv: Vec<Vec<f64>> = Vec::with_capacity(n_max);
    let mut bases: Vec<DMatrix<f64>> = Vec::with_capacity(n_max);

    let mut current = dp.clone();
    for m in 1..=n_max {
        let svd = nalgebra::linalg::SVD::try_new(current.clone(), true, false, f64::EPSILON, 0)
            .ok_or(Error::NoConvergenceSvd { rows: d, cols: d })?;
        let u = svd.u.as_ref().expect("u requested");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
        let sigma_max = sv.first().copied().unwrap_or(0.0);
        let rank = if sigma_max == 0.0 {
            0
        } else {
            sv.iter().filter(|&&s| s > rtol * sigma_max).count()
        };
        if let Some(&prev) = ranks.last() {
            if rank > prev {
                return Err(Error::RankNotMonotone {
                    power: m,
                    previous: prev,
                    current: rank,
                    rtol,
                });
            }
        }
        ranks.push(rank);
        scales.push(sigma_max);
        all_sv.push(sv);
        bases.push(DMatrix::from_fn(d, rank, |i, j| u[(i, order[j])]));

        if m < n_max {
            if sigma_max > 0.0 {
                current /= sigma_max;
            }
            current = &current * dp;
        }
    }

    // stabilization: start of the trailing constant run, which must have
    // length at least two
    let last = ranks[n_max - 1];
    let mut start = n_max - 1;
    while start > 0 && ranks[start - 1] == last {
        start -= 1;
    }
    if n_max - start < 2 {
        return Err(Error::NoStabilization {
            n_max,
            ranks: ranks.clone(),
        });
    }
    let stabilization_index = start + 1; // 1-based power
    let r = ranks[start];
    let basis_mat = &bases[start];
    let basis: Vec<Vec<f64>> = (0..r).map(|j| basis_mat.column(j).iter().copied().collect()).collect();

    Ok(RankSweep {
        ranks,
        stabilization_index,
        r,
        basis,
        rtol,
        scales,
        singular_values: all_sv,
    })
}

/// Options for the constancy-of-rank probe.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RankProfileOpts {
    pub rtol: f64,
    pub delta_rel: f64,
    pub seed: u64,
}

impl Default for RankProfileOpts {
    fn default() -> Self {
        Self {
            rtol: DEFAULT_RANK_RTOL,
            delta_rel: 1e-5,
            seed: 0,
        }
    }
}

/// Verdict of [`rank_profile`].
#[derive(Clone, Debug, Serialize)]
pub enum RankProfile {
    ConstantRank(usize),
    NonConstant {
        /// (sample point, observed rank) for every probed point.
        details: Vec<(Vec<f64>, usize)>,
    },
}

/// Probe whether D(map^m) has constant numerical rank near `u_star`.
///
/// Samples `n_samples` points uniformly in the infinity-ball of the given
/// radius about `u_star` (the center itself is always included) and compares
/// the numerical ranks of finite-difference Jacobians of the m-fold
/// composition of `map`.
pub fn rank_profile<F>(
    map: F,
    u_star: &[f64],
    iterate_m: usize,
    radius: f64,
    n_samples: usize,
    opts: &RankProfileOpts,
) -> Result<RankProfile>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if iterate_m < 1 {
        return Err(Error::Invalid("iterate_m must be at least 1".into()));
    }
    let composed = |u: &[f64]| -> Result<Vec<f64>> {
        let mut v = u.to_vec();
        for _ in 0..iterate_m {
            v = map(&v)?;
        }
        Ok(v)
    };

    let d = u_star.len();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut points = vec![u_star.to_vec()];
    for _ in 1..n_samples.max(1) {
        let p: Vec<f64> = (0..d)
            .map(|i| u_star[i] + rng.random_range(-radius..=radius))
            .collect();
        points.push(p);
    }

    let mut details = Vec::with_capacity(points.len());
    for p in points {
        let jac = jacobian_fd(&composed, &p, opts.delta_rel, FdScheme::Central)?;
        let (rank, _) = numerical_rank(&jac, opts.rtol)?;
        details.push((p, rank));
    }
    let first = details[0].1;
    if details.iter().all(|(_, r)| *r == first) {
        Ok(RankProfile::ConstantRank(first))
    } else {
        Ok(RankProfile::NonConstant { details })
    }
}

/// Full stability report at a periodic orbit's fixed point.
#[derive(Clone, Debug, Serialize)]
pub struct FloquetReport {
    pub fixed_point: Vec<f64>,
    pub residual: f64,
    pub period: f64,
    /// Finite-difference Jacobian of the return map, row major.
    pub jacobian: Vec<Vec<f64>>,
    /// All eigenvalues of the Jacobian, with multiplicity.
    pub multipliers: Vec<ComplexVal>,
    pub sweep: RankSweep,
    /// True iff every multiplier with modulus above `zero_tol` lies strictly
    /// inside the unit disc.
    pub stable: bool,
    pub zero_tol: f64,
}

/// Options for [`floquet_report`] and [`section_consistency`].
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SpectralOpts {
    pub fixed_point: FixedPointOpts,
    /// Relative displacement for the return-map Jacobian.
    pub delta_rel: f64,
    pub rtol: f64,
    pub zero_tol: f64,
    /// Power cap for the rank sweep.
    pub n_max: usize,
}

impl Default for SpectralOpts {
    fn default() -> Self {
        Self {
            fixed_point: FixedPointOpts::default(),
            delta_rel: 1e-5,
            rtol: DEFAULT_RANK_RTOL,
            zero_tol: DEFAULT_ZERO_TOL,
            n_max: 6,
        }
    }
}

/// Locate the fixed point from `u0`, linearize the return map there, and
/// package multipliers, rank sweep, and the stability verdict.
pub fn floquet_report(
    system: &HybridSystemDef,
    section: &SectionDef,
    u0: &[f64],
    cfg: &StepperConfig,
    opts: &SpectralOpts,
) -> Result<FloquetReport> {
    let (u_star, residual) = find_fixed_point(system, section, u0, cfg, &opts.fixed_point)?;
    let period = return_map(system, section, &u_star, cfg, opts.fixed_point.max_time)?.return_time;
    let jac = jacobian_fd(
        |v| Ok(return_map(system, section, v, cfg, opts.fixed_point.max_time)?.u_out),
        &u_star,
        opts.delta_rel,
        FdScheme::Central,
    )?;
    let eigs = eigenvalues(&jac)?;
    debug_assert_eq!(eigs.len(), u_star.len());
    let sweep = rank_sweep(&jac, opts.n_max, opts.rtol)?;
    let stable = eigs
        .iter()
        .filter(|e| e.norm() > opts.zero_tol)
        .all(|e| e.norm() < 1.0);
    Ok(FloquetReport {
        fixed_point: u_star,
        residual,
        period,
        jacobian: (0..jac.nrows())
            .map(|i| jac.row(i).iter().copied().collect())
            .collect(),
        multipliers: eigs.into_iter().map(ComplexVal::from).collect(),
        sweep,
        stable,
        zero_tol: opts.zero_tol,
    })
}

/// Per-section outcome inside a [`SectionConsistencyReport`].
#[derive(Clone, Debug, Serialize)]
pub struct SectionSpectrum {
    pub domain: String,
    pub fixed_point: Vec<f64>,
    pub residual: f64,
    /// Eigenvalues of DP^m at this section's fixed point.
    pub eigenvalues: Vec<ComplexVal>,
    /// The subset with modulus above `zero_tol`, sorted.
    pub nonzero: Vec<ComplexVal>,
}

/// Cross-section comparison of the nonzero return-map spectrum.
#[derive(Clone, Debug, Serialize)]
pub struct SectionConsistencyReport {
    pub power: usize,
    pub zero_tol: f64,
    pub sections: Vec<SectionSpectrum>,
    /// True iff every section reports the same number of nonzero eigenvalues.
    pub counts_agree: bool,
    /// Maximum componentwise distance between matched nonzero eigenvalues
    /// over all section pairs.
    pub max_mismatch: f64,
}

fn sort_complex(vals: &mut [ComplexVal]) {
    vals.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

/// Compare the nonzero spectrum of DP^m across several sections of the same
/// orbit.
///
/// For each section, a seed point is found by flowing from the orbit's first
/// entry point until the section is crossed; the section's own fixed point
/// is then located from that seed, the return map linearized there, raised
/// to the m-th power, and its eigenvalues with modulus above `zero_tol`
/// compared across sections.
pub fn section_consistency(
    system: &HybridSystemDef,
    sections: &[SectionDef],
    orbit: &PeriodicOrbitResult,
    cfg: &StepperConfig,
    power: usize,
    opts: &SpectralOpts,
) -> Result<SectionConsistencyReport> {
    if sections.is_empty() {
        return Err(Error::Invalid("need at least one section".into()));
    }
    if power < 1 {
        return Err(Error::Invalid("power must be at least 1".into()));
    }
    let (start_domain, start_state) = if orbit.entry_points.is_empty() {
        (orbit.section_domain.clone(), (sections[0].lift)(&orbit.fixed_point))
    } else {
        (orbit.domain_sequence[0].clone(), orbit.entry_points[0].clone())
    };

    let mut out = Vec::with_capacity(sections.len());
    for section in sections {
        let crossing = first_crossing(
            system,
            section,
            &start_domain,
            &start_state,
            cfg,
            2.0 * opts.fixed_point.max_time,
        )?;
        let u0 = (section.coords)(&crossing);
        let (u_star, residual) = find_fixed_point(system, section, &u0, cfg, &opts.fixed_point)?;
        let jac = jacobian_fd(
            |v| Ok(return_map(system, section, v, cfg, opts.fixed_point.max_time)?.u_out),
            &u_star,
            opts.delta_rel,
            FdScheme::Central,
        )?;
        let mut powered = jac.clone();
        for _ in 1..power {
            powered = &powered * &jac;
        }
        let eigs = eigenvalues(&powered)?;
        let mut nonzero: Vec<ComplexVal> = eigs
            .iter()
            .filter(|e| e.norm() > opts.zero_tol)
            .map(|&e| ComplexVal::from(e))
            .collect();
        sort_complex(&mut nonzero);
        out.push(SectionSpectrum {
            domain: section.domain.clone(),
            fixed_point: u_star,
            residual,
            eigenvalues: eigs.into_iter().map(ComplexVal::from).collect(),
            nonzero,
        });
    }

    let counts_agree = out.windows(2).all(|w| w[0].nonzero.len() == w[1].nonzero.len());
    let mut max_mismatch: f64 = 0.0;
    if counts_agree {
        for i in 0..out.len() {
            for j in i + 1..out.len() {
                for (a, b) in out[i].nonzero.iter().zip(&out[j].nonzero) {
                    max_mismatch = max_mismatch
                        .max((a.re - b.re).abs())
                        .max((a.im - b.im).abs());
                }
            }
        }
    } else {
        max_mismatch = f64::INFINITY;
    }

    Ok(SectionConsistencyReport {
        power,
        zero_tol: opts.zero_tol,
        sections: out,
        counts_agree,
        max_mismatch,
    })
}

/// Flow from an arbitrary state until `section` is first crossed, returning
/// the crossing state. Used to seed per-section fixed-point searches.
pub fn first_crossing(
    system: &HybridSystemDef,
    section: &SectionDef,
    start_domain: &str,
    start_state: &[f64],
    cfg: &StepperConfig,
    max_time: f64,
) -> Result<StateVec> {
    use crate::flow::{flow_arc, ArcEnd, DomainFlow, SectionWatch};

    let mut armed = false;
    let mut t = 0.0;
    let mut domain_id = start_domain.to_string();
    let mut state = start_state.to_vec();
    loop {
        let remaining = max_time - t;
        if remaining <= 0.0 {
            return Err(Error::NoReturn {
                max_time,
                termination: crate::exec::Termination::TimeLimit,
            });
        }
        let domain = system
            .domain(&domain_id)
            .ok_or_else(|| Error::Invalid(format!("unknown domain `{domain_id}`")))?;
        let guards = system.guards_from(&domain_id);
        let df = DomainFlow::new(domain, cfg);
        let mut watch;
        let watch_ref = if domain_id == section.domain {
            watch = SectionWatch {
                id: "section",
                event: &section.event,
                armed: &mut armed,
            };
            Some(&mut watch)
        } else {
            None
        };
        let arc = flow_arc(&df, &guards, watch_ref, &state, remaining, false)?;
        match arc.end {
            ArcEnd::SectionHit { state: hit, .. } => return Ok(hit),
            ArcEnd::Impact {
                guard_idx,
                eta,
                state: exit_state,
            } => {
                let guard = guards[guard_idx];
                t += eta;
                state = (guard.reset)(&exit_state);
                domain_id = guard.dst.clone();
                if domain_id == section.domain
                    && t > 0.0
                    && (section.event)(&state).abs() <= cfg.event_tol_g
                {
                    return Ok(state);
                }
            }
            ArcEnd::TimeLimit { .. } => {
                return Err(Error::NoReturn {
                    max_time,
                    termination: crate::exec::Termination::TimeLimit,
                });
            }
        }
    }
}

/// Component of `v` orthogonal to the span of orthonormal `basis` columns.
pub fn orthogonal_component(basis: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    let x = nalgebra::DVector::from_column_slice(v);
    let proj = basis * (basis.transpose() * &x);
    (x - proj).iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn mat(rows: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
    }

    #[test]
    fn nilpotent_two_by_two_has_double_zero() {
        let eigs = eigenvalues(&mat(&[&[0.0, 1.0], &[0.0, 0.0]])).unwrap();
        assert_eq!(eigs.len(), 2);
        for e in eigs {
            assert_eq!(e, Complex::new(0.0, 0.0));
        }
    }

    #[test]
    fn rotation_scaling_block_has_the_expected_pair() {
        let eigs = eigenvalues(&mat(&[&[-0.25, 0.70], &[-0.70, -0.25]])).unwrap();
        assert_abs_diff_eq!(eigs[0].re, -0.25, epsilon = 1e-14);
        assert_abs_diff_eq!(eigs[0].im, -0.70, epsilon = 1e-14);
        assert_abs_diff_eq!(eigs[1].re, -0.25, epsilon = 1e-14);
        assert_abs_diff_eq!(eigs[1].im, 0.70, epsilon = 1e-14);
    }

    #[test]
    fn companion_matrix_eigenvalues() {
        // companion of (x-1)(x-2)(x-3) = x^3 - 6x^2 + 11x - 6
        let m = mat(&[&[6.0, -11.0, 6.0], &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
        let eigs = eigenvalues(&m).unwrap();
        let mut res: Vec<f64> = eigs.iter().map(|e| e.re).collect();
        res.sort_by(f64::total_cmp);
        assert_abs_diff_eq!(res[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(res[1], 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(res[2], 3.0, epsilon = 1e-9);
        assert!(eigs.iter().all(|e| e.im.abs() < 1e-9));
    }

    #[test]
    fn four_dim_complex_pairs_are_conjugate() {
        // block diag of two rotation-scalings
        let m = mat(&[
            &[0.5, 0.3, 0.0, 0.0],
            &[-0.3, 0.5, 0.0, 0.0],
            &[0.0, 0.0, -0.1, 0.9],
            &[0.0, 0.0, -0.9, -0.1],
        ]);
        let eigs = eigenvalues(&m).unwrap();
        let sum_im: f64 = eigs.iter().map(|e| e.im).sum();
        assert_abs_diff_eq!(sum_im, 0.0, epsilon = 1e-12);
        let trace: f64 = eigs.iter().map(|e| e.re).sum();
        assert_abs_diff_eq!(trace, 0.8, epsilon = 1e-9);
    }

    #[test]
    fn zero_matrix_has_rank_zero() {
        let (rank, sv) = numerical_rank(&DMatrix::zeros(3, 3), 1e-6).unwrap();
        assert_eq!(rank, 0);
        assert!(sv.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn squaring_pair_jacobian_has_rank_one() {
        let (rank, _) = numerical_rank(&mat(&[&[0.0, 0.0], &[1.0, 0.0]]), 1e-6).unwrap();
        assert_eq!(rank, 1);
    }

    #[test]
    fn identity_sweep_is_flat() {
        let sweep = rank_sweep(&DMatrix::identity(4, 4), 5, 1e-6).unwrap();
        assert_eq!(sweep.ranks, vec![4, 4, 4, 4, 4]);
        assert_eq!(sweep.stabilization_index, 1);
        assert_eq!(sweep.r, 4);
        assert_eq!(sweep.basis.len(), 4);
    }

    #[test]
    fn block_nilpotent_sweep_stabilizes_at_two() {
        // diag(c I2, c J2) with J2 the nilpotent Jordan block: ranks 3, 2, 2...
        let c = (-1.0_f64).exp();
        let m = mat(&[
            &[c, 0.0, 0.0, 0.0],
            &[0.0, c, 0.0, 0.0],
            &[0.0, 0.0, 0.0, c],
            &[0.0, 0.0, 0.0, 0.0],
        ]);
        let sweep = rank_sweep(&m, 6, 1e-6).unwrap();
        assert_eq!(sweep.ranks, vec![3, 2, 2, 2, 2, 2]);
        assert_eq!(sweep.stabilization_index, 2);
        assert_eq!(sweep.r, 2);
        // stabilized range is the x-block
        let basis = sweep.basis_matrix();
        for col in 0..2 {
            assert!(basis[(2, col)].abs() < 1e-12);
            assert!(basis[(3, col)].abs() < 1e-12);
        }
    }

    #[test]
    fn strictly_decreasing_ranks_fail_to_stabilize() {
        let mut j4 = DMatrix::zeros(4, 4);
        for i in 0..3 {
            j4[(i, i + 1)] = 1.0;
        }
        let err = rank_sweep(&j4, 3, 1e-6).unwrap_err();
        assert!(matches!(err, Error::NoStabilization { .. }));
        // with n_max = 4 the zero tail stabilizes
        let sweep = rank_sweep(&j4, 5, 1e-6).unwrap();
        assert_eq!(sweep.ranks, vec![3, 2, 1, 0, 0]);
        assert_eq!(sweep.r, 0);
        assert!(sweep.basis.is_empty());
    }

    #[test]
    fn basis_is_orthonormal_and_invariant() {
        let c = 0.6_f64;
        let m = mat(&[
            &[c, 0.1, 0.0, 0.0],
            &[-0.2, c, 0.0, 0.0],
            &[0.0, 0.0, 0.0, c],
            &[0.0, 0.0, 0.0, 0.0],
        ]);
        let sweep = rank_sweep(&m, 6, 1e-6).unwrap();
        let b = sweep.basis_matrix();
        let gram = b.transpose() * &b;
        for i in 0..sweep.r {
            for j in 0..sweep.r {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - want).abs() <= 1e-12);
            }
        }
        // range invariance: || M B - B (B^T M B) || <= rtol * ||M||
        let mb = &m * &b;
        let compressed = &b * (b.transpose() * &mb);
        let defect = (&mb - &compressed).norm();
        assert!(defect <= sweep.rtol * m.norm(), "defect {defect}");
    }

    #[test]
    fn rank_profile_flags_the_squaring_pair_map() {
        let map = |u: &[f64]| Ok(vec![u[0] * u[0], u[0]]);
        let profile = rank_profile(
            map,
            &[0.0, 0.0],
            2,
            0.1,
            12,
            &RankProfileOpts::default(),
        )
        .unwrap();
        match profile {
            RankProfile::NonConstant { details } => {
                assert_eq!(details[0].1, 0, "rank at the origin");
                assert!(details.iter().any(|(_, r)| *r == 1));
            }
            RankProfile::ConstantRank(r) => panic!("expected NonConstant, got rank {r}"),
        }
    }

    #[test]
    fn rank_profile_of_linear_map_is_constant() {
        let map = |u: &[f64]| Ok(vec![0.3 * u[0] + u[1], 0.5 * u[1]]);
        let profile = rank_profile(
            map,
            &[0.2, -0.7],
            3,
            0.5,
            8,
            &RankProfileOpts::default(),
        )
        .unwrap();
        assert!(matches!(profile, RankProfile::ConstantRank(2)));
    }

    #[test]
    fn orthogonal_component_strips_the_span() {
        let b = mat(&[&[1.0, 0.0], &[0.0, 1.0], &[0.0, 0.0], &[0.0, 0.0]]);
        let v = [3.0, -2.0, 5.0, 7.0];
        let orth = orthogonal_component(&b, &v);
        assert_eq!(orth, vec![0.0, 0.0, 5.0, 7.0]);
    }
}

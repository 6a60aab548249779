use super::brute::split_sweep;
use super::*;
use crate::prob::{DistortionMatrix, JointTable, ProbVec};

fn uniform_binary() -> RdpProblem {
    RdpProblem::unconditional(&ProbVec::uniform(2), DistortionMatrix::hamming(2)).unwrap()
}

fn biased_binary(p: f64) -> RdpProblem {
    RdpProblem::unconditional(
        &ProbVec::new(vec![p, 1.0 - p]).unwrap(),
        DistortionMatrix::hamming(2),
    )
    .unwrap()
}

fn conditional_binary() -> RdpProblem {
    // correlated (x, z): z biases x toward itself
    let source = JointTable::new(vec![2, 2], vec![0.33, 0.12, 0.07, 0.48]).unwrap();
    RdpProblem::new(source, DistortionMatrix::hamming(2)).unwrap()
}

fn hb(p: f64) -> f64 {
    let q = 1.0 - p;
    -(p * p.log2() + q * q.log2())
}

#[test]
fn uniform_binary_rate_anchors() {
    let prob = uniform_binary();
    let opts = SolverOptions::default();
    for delta in [0.05, 0.11, 0.25, 0.3] {
        let sol = solve_conditional_rd(&prob, delta, &opts).unwrap();
        let want = 1.0 - hb(delta);
        assert!(
            (sol.rate - want).abs() < 1e-6,
            "delta {delta}: {} vs {want}",
            sol.rate
        );
        assert!(sol.distortion <= delta + opts.constraint_tol);
        assert!(sol.converged, "gap {} at delta {delta}", sol.gap);
    }
}

#[test]
fn plain_rd_is_the_unit_perception_path() {
    let prob = conditional_binary();
    let opts = SolverOptions::default();
    let a = solve_conditional_rd(&prob, 0.1, &opts).unwrap();
    let b = solve_empirical_rdp(&prob, 0.1, 1.0, &opts).unwrap();
    assert_eq!(a.rate, b.rate);
    assert_eq!(a.distortion, b.distortion);
}

#[test]
fn perfect_realism_free_for_symmetric_sources() {
    // the optimal plain-RD kernel already reproduces a uniform marginal
    let prob = uniform_binary();
    let opts = SolverOptions::default();
    let rd = solve_conditional_rd(&prob, 0.11, &opts).unwrap();
    let pr = solve_perfect_realism(&prob, 0.11, &opts).unwrap();
    assert!((pr.rate - rd.rate).abs() < 1e-6, "{} vs {}", pr.rate, rd.rate);
    assert!(pr.perception <= opts.constraint_tol);
}

#[test]
fn perfect_realism_biased_binary_matches_coupling_optimum() {
    // X ~ (0.3, 0.7), Hamming budget 0.15, output marginal pinned to the
    // source: the optimal coupling puts 0.225 on the (0,0) cell
    let prob = biased_binary(0.3);
    let opts = SolverOptions::default();
    let sol = solve_perfect_realism(&prob, 0.15, &opts).unwrap();
    assert!(
        (sol.rate - 0.294_041_322_615_919_7).abs() < 1e-5,
        "rate {}",
        sol.rate
    );
    assert!(sol.perception <= opts.constraint_tol, "tv {}", sol.perception);
    assert!(sol.distortion <= 0.15 + opts.constraint_tol);

    // and realism costs strictly more than the plain budgeted rate
    let rd = solve_conditional_rd(&prob, 0.15, &opts).unwrap();
    assert!((rd.rate - 0.271_450_594_514_292_3).abs() < 1e-5, "{}", rd.rate);
    assert!(sol.rate > rd.rate + 0.02);
}

#[test]
fn strong_variant_dominates_empirical() {
    let prob = biased_binary(0.35);
    let opts = SolverOptions::default();
    for (delta, pi) in [(0.1, 0.5), (0.15, 0.02), (0.2, 1.0), (0.12, 0.0)] {
        let strong = solve_strong_rdp(&prob, delta, pi, &opts).unwrap();
        let weak = solve_empirical_rdp(&prob, delta, pi, &opts).unwrap();
        assert!(
            strong.rate >= weak.rate - 1e-6,
            "(d={delta}, p={pi}): strong {} < weak {}",
            strong.rate,
            weak.rate
        );
    }
}

#[test]
fn rate_is_monotone_in_both_budgets() {
    let prob = conditional_binary();
    let opts = SolverOptions::default();
    let mut prev = f64::INFINITY;
    for delta in [0.02, 0.05, 0.1, 0.2, 0.35] {
        let r = solve_empirical_rdp(&prob, delta, 0.1, &opts).unwrap().rate;
        assert!(r <= prev + 1e-7, "delta {delta}: {r} > {prev}");
        prev = r;
    }
    prev = f64::INFINITY;
    for pi in [0.0, 0.01, 0.05, 0.2, 1.0] {
        let r = solve_empirical_rdp(&prob, 0.1, pi, &opts).unwrap().rate;
        assert!(r <= prev + 1e-7, "pi {pi}: {r} > {prev}");
        prev = r;
    }
}

#[test]
fn infeasible_budgets_are_reported() {
    let d = DistortionMatrix::new(2, 2, vec![0.2, 1.0, 1.0, 0.2]).unwrap();
    let prob = RdpProblem::unconditional(&ProbVec::uniform(2), d).unwrap();
    assert!((prob.distortion_floor() - 0.2).abs() < 1e-15);
    let err = solve_conditional_rd(&prob, 0.1, &SolverOptions::default()).unwrap_err();
    assert!(matches!(err, crate::Error::Infeasible(_)), "{err}");
}

#[test]
fn certificates_bracket_the_rate() {
    let prob = conditional_binary();
    let opts = SolverOptions::default();
    let sol = solve_empirical_rdp(&prob, 0.08, 0.03, &opts).unwrap();
    assert!(sol.gap >= 0.0);
    // tolerance-relaxed feasibility lets the reported rate undershoot the
    // exact optimum by the tolerance times the local multiplier scale, so
    // the certificate may land above it by that same margin
    let slack = opts.constraint_tol * (1.0 + 2.0 * (sol.lambda + sol.nu));
    assert!(
        sol.dual_bound <= sol.rate + slack,
        "bound {} rate {}",
        sol.dual_bound,
        sol.rate
    );
    assert!(sol.converged, "gap {}", sol.gap);
    assert!(sol.rate - sol.dual_bound <= opts.gap_target + opts.constraint_tol);
}

#[test]
fn kernel_reproduces_reported_statistics() {
    let prob = conditional_binary();
    let opts = SolverOptions::default();
    let sol = solve_empirical_rdp(&prob, 0.1, 0.05, &opts).unwrap();
    let joint = crate::prob::compose(prob.source(), &sol.kernel).unwrap();
    let i = crate::prob::conditional_mutual_information(
        &joint.marginalize(&[0, 2, 1]).unwrap(),
    )
    .unwrap();
    assert!(
        (i + opts.constraint_tol - sol.rate).abs() < 1e-12,
        "{i} vs {}",
        sol.rate
    );
    let xy = joint.marginalize(&[0, 2]).unwrap();
    let ed = crate::prob::expected_distortion(&xy, prob.distortion()).unwrap();
    assert!((ed - sol.distortion).abs() < 1e-12);
}

#[test]
fn brute_uniform_binary_hits_the_anchor() {
    let prob = uniform_binary();
    // 0.11 sits exactly on the grid at this resolution
    let b = brute_force_rdp(&prob, 0.11, 1.0, 200).unwrap();
    assert!((b.rate - (1.0 - hb(0.11))).abs() < 1e-3, "{}", b.rate);
    assert!(b.distortion <= 0.11 + 1e-12);
}

#[test]
fn split_sweep_equals_direct_enumeration() {
    let prob = conditional_binary();
    for (delta, pi) in [(0.1, 1.0), (0.15, 0.05), (0.25, 0.0), (0.05, 0.3)] {
        let direct = brute_force_rdp(&prob, delta, pi, 12).unwrap();
        let swept = split_sweep(&prob, delta, pi.min(1.0), 12).unwrap();
        assert!(
            (direct.rate - swept.rate).abs() < 1e-12,
            "(d={delta}, p={pi}): {} vs {}",
            direct.rate,
            swept.rate
        );
        assert!((direct.distortion - swept.distortion).abs() < 1e-12);
        assert!((direct.perception - swept.perception).abs() < 1e-12);
    }
}

#[test]
fn solver_and_oracle_agree_with_certificates() {
    let prob = conditional_binary();
    let opts = SolverOptions::default();
    for (delta, pi) in [(0.1, 1.0), (0.12, 0.04), (0.2, 0.0)] {
        let sol = solve_empirical_rdp(&prob, delta, pi, &opts).unwrap();
        let b = brute_force_rdp(&prob, delta, pi, 60).unwrap();
        // the grid is a subset of kernels, so its optimum can never
        // undercut a certified lower bound
        assert!(
            b.rate >= sol.dual_bound - 1e-9,
            "(d={delta}, p={pi}): grid {} under bound {}",
            b.rate,
            sol.dual_bound
        );
        assert!(
            (b.rate - sol.rate).abs() < 2e-2,
            "(d={delta}, p={pi}): grid {} vs solver {}",
            b.rate,
            sol.rate
        );
    }
}

#[test]
fn split_sweep_handles_infeasible_windows() {
    // every reconstruction costs at least 0.2, so a 0.1 budget leaves no
    // admissible window anywhere in the sweep
    let source = JointTable::new(vec![2, 2], vec![0.33, 0.12, 0.07, 0.48]).unwrap();
    let dist = DistortionMatrix::new(2, 2, vec![0.2, 1.0, 1.0, 0.2]).unwrap();
    let prob = RdpProblem::new(source, dist).unwrap();
    let err = split_sweep(&prob, 0.1, 0.5, 50);
    match err {
        Err(crate::Error::Infeasible(_)) => {}
        other => panic!("expected infeasible, got {other:?}"),
    }
}

#[test]
fn region_membership_verdicts() {
    let prob = uniform_binary();
    let opts = SolverOptions::default();
    let inside =
        check_region_membership(&prob, 0.6, 0.11, 1.0, 1e-6, &opts).unwrap();
    assert!(inside.inside && inside.feasible);
    assert!((inside.required_rate - 0.500084).abs() < 1e-4);
    let outside =
        check_region_membership(&prob, 0.4, 0.11, 1.0, 1e-6, &opts).unwrap();
    assert!(!outside.inside && outside.feasible);
    assert!(outside.margin < 0.0);

    let d = DistortionMatrix::new(2, 2, vec![0.5, 1.0, 1.0, 0.5]).unwrap();
    let hard = RdpProblem::unconditional(&ProbVec::uniform(2), d).unwrap();
    let report = check_region_membership(&hard, 2.0, 0.1, 1.0, 1e-6, &opts).unwrap();
    assert!(!report.feasible && !report.inside);
    assert!(report.required_rate.is_infinite());
}

#[test]
fn curve_sweep_is_monotone() {
    let prob = biased_binary(0.3);
    let opts = SolverOptions::default();
    let deltas = [0.05, 0.15, 0.25];
    let pis = [0.0, 0.1, 1.0];
    let pts = rdp_curve(&prob, &deltas, &pis, &opts).unwrap();
    assert_eq!(pts.len(), 9);
    // nonincreasing along each axis
    for d in 0..3 {
        for p in 0..2 {
            assert!(pts[d * 3 + p].rate >= pts[d * 3 + p + 1].rate - 1e-7);
        }
    }
    for p in 0..3 {
        for d in 0..2 {
            assert!(pts[d * 3 + p].rate >= pts[(d + 1) * 3 + p].rate - 1e-7);
        }
    }
}

#[test]
fn rejects_bad_budgets() {
    let prob = uniform_binary();
    let opts = SolverOptions::default();
    assert!(matches!(
        solve_empirical_rdp(&prob, -0.1, 0.5, &opts),
        Err(crate::Error::InvalidParameter(_))
    ));
    assert!(matches!(
        solve_empirical_rdp(&prob, 0.1, f64::NAN, &opts),
        Err(crate::Error::InvalidParameter(_))
    ));
}

use super::*;
use crate::prob::ProbVec;
use crate::solver::{solve_empirical_rdp, RdpProblem, SolverOptions};

fn binary_symmetric_scheme(eps: f64) -> SchemeSpec {
    let p_xz = JointTable::new(vec![2, 1], vec![0.5, 0.5]).unwrap();
    let u_given_z = Channel::new(vec![1], 2, vec![0.5, 0.5]).unwrap();
    let x_given_zu =
        Channel::new(vec![1, 2], 2, vec![1.0 - eps, eps, eps, 1.0 - eps]).unwrap();
    let y_given_zu = Channel::new(vec![1, 2], 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    SchemeSpec::new(
        p_xz,
        u_given_z,
        x_given_zu,
        y_given_zu,
        DistortionMatrix::hamming(2),
    )
    .unwrap()
}

/// Copy scheme: the description determines the source symbol exactly.
fn identity_scheme() -> SchemeSpec {
    binary_symmetric_scheme(0.0)
}

/// Source and description are independent; the reconstruction copies the
/// description, so the output is pure noise with the right marginal.
fn independent_scheme() -> SchemeSpec {
    let p_xz = JointTable::new(vec![2, 1], vec![0.5, 0.5]).unwrap();
    let u_given_z = Channel::new(vec![1], 2, vec![0.5, 0.5]).unwrap();
    let x_given_zu = Channel::new(vec![1, 2], 2, vec![0.5, 0.5, 0.5, 0.5]).unwrap();
    let y_given_zu = Channel::new(vec![1, 2], 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    SchemeSpec::new(
        p_xz,
        u_given_z,
        x_given_zu,
        y_given_zu,
        DistortionMatrix::hamming(2),
    )
    .unwrap()
}

/// Two-symbol side information with asymmetric channels everywhere.
fn rich_scheme() -> SchemeSpec {
    let p_xz = JointTable::new(vec![2, 2], vec![0.3, 0.2, 0.1, 0.4]).unwrap();
    let u_given_z = Channel::new(vec![2], 2, vec![0.7, 0.3, 0.4, 0.6]).unwrap();
    let x_given_zu = Channel::new(
        vec![2, 2],
        2,
        vec![0.9, 0.1, 0.4, 0.6, 0.5, 0.5, 2.0 / 9.0, 7.0 / 9.0],
    )
    .unwrap();
    let y_given_zu = Channel::new(
        vec![2, 2],
        2,
        vec![0.95, 0.05, 0.1, 0.9, 0.85, 0.15, 0.05, 0.95],
    )
    .unwrap();
    SchemeSpec::new(
        p_xz,
        u_given_z,
        x_given_zu,
        y_given_zu,
        DistortionMatrix::hamming(2),
    )
    .unwrap()
}

fn config(n: usize, rate: f64, r0: f64, master_seed: u64, trials: usize) -> CodeConfig {
    CodeConfig {
        n,
        rate,
        r0,
        master_seed,
        trials,
    }
}

#[test]
fn scheme_validation_rejects_broken_factorization() {
    let p_xz = JointTable::new(vec![2, 1], vec![0.9, 0.1]).unwrap();
    let u_given_z = Channel::new(vec![1], 2, vec![0.5, 0.5]).unwrap();
    // routes to a uniform source marginal, not (0.9, 0.1)
    let x_given_zu = Channel::new(vec![1, 2], 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let y_given_zu = Channel::new(vec![1, 2], 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let err = SchemeSpec::new(
        p_xz,
        u_given_z,
        x_given_zu,
        y_given_zu,
        DistortionMatrix::hamming(2),
    );
    assert!(matches!(err, Err(Error::ShapeMismatch { .. })));
}

#[test]
fn single_letter_keeps_conditional_independence() {
    let scheme = rich_scheme();
    let joint = scheme.single_letter().unwrap();
    let zu = joint.marginalize(&[0, 1]).unwrap();
    let zux = joint.marginalize(&[0, 1, 2]).unwrap();
    let zuy = joint.marginalize(&[0, 1, 3]).unwrap();
    let (ku, kx, ky) = (2, 2, 2);
    for z in 0..2 {
        for u in 0..ku {
            for x in 0..kx {
                for y in 0..ky {
                    let full = joint.as_slice()[((z * ku + u) * kx + x) * ky + y];
                    let lhs = full * zu.as_slice()[z * ku + u];
                    let rhs = zux.as_slice()[(z * ku + u) * kx + x]
                        * zuy.as_slice()[(z * ku + u) * ky + y];
                    assert!((lhs - rhs).abs() <= 1e-12, "markov residual at {z}{u}{x}{y}");
                }
            }
        }
    }
}

#[test]
fn thresholds_match_closed_form_for_symmetric_scheme() {
    let eps = 0.178;
    let scheme = binary_symmetric_scheme(eps);
    let hb = -eps * eps.log2() - (1.0 - eps) * (1.0 - eps).log2();
    let msg = scheme.message_threshold().unwrap();
    assert!((msg - (1.0 - hb)).abs() <= 1e-12, "got {msg}");
    // the reconstruction copies the description, so the joint threshold is
    // the full description entropy
    let total = scheme.total_threshold().unwrap();
    assert!((total - 1.0).abs() <= 1e-12, "got {total}");
    assert!((scheme.expected_distortion().unwrap() - eps).abs() <= 1e-12);
}

#[test]
fn from_solution_reproduces_solver_operating_point() {
    let px = ProbVec::new(vec![0.5, 0.5]).unwrap();
    let prob = RdpProblem::unconditional(&px, DistortionMatrix::hamming(2)).unwrap();
    let opts = SolverOptions::default();
    let sol = solve_empirical_rdp(&prob, 0.11, 1.0, &opts).unwrap();
    assert!(sol.converged);
    let scheme =
        SchemeSpec::from_solution(prob.source(), &sol.kernel, prob.distortion()).unwrap();
    let ed = scheme.expected_distortion().unwrap();
    assert!((ed - sol.distortion).abs() <= 1e-9, "{ed} vs {}", sol.distortion);
    // with the reconstruction promoted to the description, the message
    // threshold is exactly the solved information rate
    let msg = scheme.message_threshold().unwrap();
    assert!(
        (msg - (sol.rate - opts.constraint_tol)).abs() <= 1e-9,
        "{msg} vs {}",
        sol.rate
    );
    assert!(scheme.total_threshold().unwrap() >= msg - 1e-12);
}

#[test]
fn codeword_is_deterministic_and_tracks_point_mass() {
    let p_xz = JointTable::new(vec![2, 1], vec![0.5, 0.5]).unwrap();
    let u_given_z = Channel::new(vec![1], 3, vec![0.0, 1.0, 0.0]).unwrap();
    let x_given_zu =
        Channel::new(vec![1, 3], 2, vec![0.5, 0.5, 0.5, 0.5, 0.5, 0.5]).unwrap();
    let y_given_zu =
        Channel::new(vec![1, 3], 2, vec![0.5, 0.5, 0.5, 0.5, 0.5, 0.5]).unwrap();
    let scheme = SchemeSpec::new(
        p_xz,
        u_given_z,
        x_given_zu,
        y_given_zu,
        DistortionMatrix::hamming(2),
    )
    .unwrap();
    let cb = Codebook::new(&scheme, config(16, 0.5, 0.25, 11, 1), 42).unwrap();
    let zs = vec![0; 16];
    let us = cb.codeword(&zs, 3, 1).unwrap();
    assert_eq!(us, vec![1; 16], "point-mass description admits one codeword");
    assert_eq!(us, cb.codeword(&zs, 3, 1).unwrap());
}

#[test]
fn codeword_type_tracks_description_law() {
    let p_xz = JointTable::new(vec![2, 1], vec![0.5, 0.5]).unwrap();
    let u_given_z = Channel::new(vec![1], 3, vec![0.25, 0.5, 0.25]).unwrap();
    let flat = vec![0.5, 0.5];
    let x_given_zu = Channel::new(vec![1, 3], 2, flat.repeat(3)).unwrap();
    let y_given_zu = Channel::new(vec![1, 3], 2, flat.repeat(3)).unwrap();
    let scheme = SchemeSpec::new(
        p_xz,
        u_given_z,
        x_given_zu,
        y_given_zu,
        DistortionMatrix::hamming(2),
    )
    .unwrap();
    let n = 10_000;
    let cb = Codebook::new(&scheme, config(n, 0.001, 0.0, 5, 1), 7).unwrap();
    let us = cb.codeword(&vec![0; n], 0, 0).unwrap();
    let ty = EmpiricalDist::from_sequence(&us, 3).unwrap();
    let target = ProbVec::new(vec![0.25, 0.5, 0.25]).unwrap();
    let tv = crate::prob::tv_distance(&ty.to_prob_vec().unwrap(), &target).unwrap();
    assert!(tv < 0.03, "empirical codeword type off by {tv}");
}

#[test]
fn exhaustive_codebook_requires_full_cover() {
    let scheme = identity_scheme();
    // 2^(3*1) = 8 = |U|^3
    assert!(Codebook::exhaustive(&scheme, config(3, 1.0, 0.0, 1, 1)).is_ok());
    assert!(Codebook::exhaustive(&scheme, config(3, 0.5, 0.0, 1, 1)).is_err());
    assert!(Codebook::exhaustive(&scheme, config(3, 1.0, 0.5, 1, 1)).is_err());
    let cb = Codebook::exhaustive(&scheme, config(3, 1.0, 0.0, 1, 1)).unwrap();
    assert_eq!(cb.codeword(&[0, 0, 0], 6, 0).unwrap(), vec![1, 1, 0]);
}

#[test]
fn likelihood_encoder_matches_weight_ratio() {
    let scheme = binary_symmetric_scheme(0.25);
    // single-letter exhaustive book: message 0 is codeword u=0, message 1
    // is u=1, and x=0 weighs them 3:1
    let cb = Codebook::exhaustive(&scheme, config(1, 1.0, 0.0, 0, 1)).unwrap();
    let mut zero = 0usize;
    let trials = 10_000;
    for t in 0..trials {
        if cb.likelihood_encode(&[0], &[0], 0, t).unwrap() == 0 {
            zero += 1;
        }
    }
    let frac = zero as f64 / trials as f64;
    assert!((frac - 0.75).abs() < 0.02, "3:1 weights selected at {frac}");

    // a zero-rate book has a single message
    let cb0 = Codebook::new(&scheme, config(4, 0.0, 0.0, 0, 1), 9).unwrap();
    assert_eq!(cb0.likelihood_encode(&[0, 1, 0, 1], &[0; 4], 0, 3).unwrap(), 0);
}

#[test]
fn likelihood_encoder_finds_unique_match() {
    let scheme = identity_scheme();
    let cb = Codebook::exhaustive(&scheme, config(6, 1.0, 0.0, 0, 1)).unwrap();
    let xs = [1, 0, 1, 1, 0, 1];
    let zs = [0; 6];
    // only the codeword equal to the block has positive weight, and its
    // message index is the block read as binary digits
    let m = cb.likelihood_encode(&xs, &zs, 0, 77).unwrap();
    assert_eq!(m, 0b101101);
    assert_eq!(cb.codeword(&zs, m, 0).unwrap(), xs.to_vec());
}

#[test]
fn decode_is_deterministic() {
    let scheme = rich_scheme();
    let cb = Codebook::new(&scheme, config(12, 0.5, 0.25, 3, 1), 21).unwrap();
    let zs: Vec<usize> = (0..12).map(|i| i % 2).collect();
    let a = cb.decode(4, &zs, 1, 100).unwrap();
    let b = cb.decode(4, &zs, 1, 100).unwrap();
    assert_eq!(a, b);
}

#[test]
fn identity_scheme_round_trips_exactly() {
    let scheme = identity_scheme();
    let cb = Codebook::exhaustive(&scheme, config(8, 1.0, 0.0, 31, 50)).unwrap();
    for t in 0..10 {
        let r = run_trial(&cb, t).unwrap();
        assert_eq!(r.distortion, 0.0);
        assert_eq!(r.empirical_tv, 0.0);
    }
    let report = monte_carlo(&cb).unwrap();
    assert_eq!(report.mean_distortion, 0.0);
    assert_eq!(report.mean_empirical_tv, 0.0);
    assert_eq!(report.ci95_distortion, 0.0);
    assert_eq!(report.ci95_tv, 0.0);
    assert_eq!(report.trials, 50);
    assert_eq!(report.encoding_failures, 0);
}

#[test]
fn run_trial_is_deterministic() {
    let scheme = rich_scheme();
    let cb = Codebook::new(&scheme, config(10, 0.4, 0.2, 17, 1), 5).unwrap();
    let a = run_trial(&cb, 4).unwrap();
    let b = run_trial(&cb, 4).unwrap();
    assert_eq!(a, b);
    let cb2 = Codebook::new(&scheme, config(10, 0.4, 0.2, 17, 1), 5).unwrap();
    assert_eq!(a, run_trial(&cb2, 4).unwrap());
}

#[test]
fn independent_coupling_distorts_at_chance_level() {
    let scheme = independent_scheme();
    let cb = Codebook::new(&scheme, config(1000, 0.002, 0.0, 23, 400), 13).unwrap();
    let report = monte_carlo(&cb).unwrap();
    assert!(
        (report.mean_distortion - 0.5).abs() < 0.05,
        "independent reconstruction should miss half the time, got {}",
        report.mean_distortion
    );
    // both block types hover around the uniform law
    assert!(report.mean_empirical_tv < 0.05);
    assert_eq!(report.encoding_failures, 0);
}

#[test]
fn monte_carlo_counts_unencodable_blocks() {
    let scheme = identity_scheme();
    // two random codewords rarely cover a 4-symbol block
    let cb = Codebook::new(&scheme, config(4, 0.25, 0.0, 29, 200), 3).unwrap();
    let report = monte_carlo(&cb).unwrap();
    assert!(report.encoding_failures > 0);
    assert_eq!(report.trials + report.encoding_failures, 200);
    // a success is an exact cover
    assert_eq!(report.mean_distortion, 0.0);
    assert_eq!(report.mean_empirical_tv, 0.0);
}

#[test]
fn monte_carlo_errors_when_nothing_encodes() {
    let scheme = identity_scheme();
    // covering 30 symbols with two codewords has vanishing probability,
    // and the run is deterministic for a fixed master seed
    let cb = Codebook::new(&scheme, config(30, 1.0 / 30.0, 0.0, 7, 3), 3).unwrap();
    assert!(matches!(monte_carlo(&cb), Err(Error::AllTrialsFailed)));
    let few = Codebook::new(&scheme, config(4, 0.25, 0.0, 29, 1), 3).unwrap();
    assert!(matches!(monte_carlo(&few), Err(Error::InvalidParameter(_))));
}

#[test]
fn monte_carlo_report_is_reproducible() {
    let scheme = rich_scheme();
    let cb = Codebook::new(&scheme, config(64, 0.25, 0.125, 41, 60), 19).unwrap();
    let a = monte_carlo(&cb).unwrap();
    let b = monte_carlo(&cb).unwrap();
    assert_eq!(a.mean_distortion, b.mean_distortion);
    assert_eq!(a.mean_empirical_tv, b.mean_empirical_tv);
    assert_eq!(a.ci95_distortion, b.ci95_distortion);
    assert_eq!(a.ci95_tv, b.ci95_tv);
}

#[test]
fn confidence_interval_shrinks_with_trials() {
    let scheme = independent_scheme();
    let small = Codebook::new(&scheme, config(100, 0.02, 0.0, 47, 200), 1).unwrap();
    let large = Codebook::new(&scheme, config(100, 0.02, 0.0, 47, 800), 1).unwrap();
    let a = monte_carlo(&small).unwrap();
    let b = monte_carlo(&large).unwrap();
    let ratio = a.ci95_distortion / b.ci95_distortion;
    assert!(
        (1.6..=2.4).contains(&ratio),
        "quadrupling trials should halve the half-width, ratio {ratio}"
    );
}

#[test]
fn trial_rows_cover_every_trial_in_order() {
    let scheme = rich_scheme();
    let cb = Codebook::new(&scheme, config(16, 0.25, 0.0, 53, 25), 2).unwrap();
    let rows = trial_rows(&cb).unwrap();
    assert_eq!(rows.len(), 25);
    for (i, (t, r)) in rows.iter().enumerate() {
        assert_eq!(*t, i as u64);
        assert_eq!(*r, run_trial(&cb, *t).unwrap());
    }
}

#[test]
fn single_codeword_selection_follows_description_law() {
    // one message: the race has a single entrant drawn straight from the
    // codeword law, so selected symbols must match it in frequency
    let p_xz = JointTable::new(vec![2, 1], vec![0.495, 0.505]).unwrap();
    let u_given_z = Channel::new(vec![1], 2, vec![0.3, 0.7]).unwrap();
    let x_given_zu = Channel::new(vec![1, 2], 2, vec![0.6, 0.4, 0.45, 0.55]).unwrap();
    let y_given_zu = Channel::new(vec![1, 2], 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let scheme = SchemeSpec::new(
        p_xz,
        u_given_z,
        x_given_zu,
        y_given_zu,
        DistortionMatrix::hamming(2),
    )
    .unwrap();
    let n = 60;
    let cb = Codebook::new(&scheme, config(n, 0.0, 0.0, 1, 1), 1).unwrap();
    let xs: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let zs = vec![0; n];
    let trials = 3000u64;
    let mut ones = 0usize;
    for t in 0..trials {
        let us = averaged_selection(&cb, &xs, &zs, mix(100, t)).unwrap();
        ones += us.iter().filter(|&&u| u == 1).count();
    }
    let freq = ones as f64 / (trials as usize * n) as f64;
    assert!((freq - 0.7).abs() < 0.005, "selection frequency {freq}");
}

#[test]
fn saturated_codebook_selection_follows_tilted_posterior() {
    let scheme = binary_symmetric_scheme(0.2);
    let n = 60;
    // far beyond enumeration, every count profile is represented and the
    // winner follows the posterior tilt toward the observed block
    let cb = Codebook::new(&scheme, config(n, 3.0, 0.0, 1, 1), 1).unwrap();
    let xs = vec![0; n];
    let zs = vec![0; n];
    let trials = 3000u64;
    let mut match_count = 0usize;
    for t in 0..trials {
        let us = averaged_selection(&cb, &xs, &zs, mix(200, t)).unwrap();
        match_count += us.iter().filter(|&&u| u == 0).count();
    }
    let freq = match_count as f64 / (trials as usize * n) as f64;
    assert!((freq - 0.8).abs() < 0.005, "posterior match frequency {freq}");
}

#[test]
fn averaged_race_agrees_with_explicit_selection() {
    let scheme = binary_symmetric_scheme(0.2);
    let n = 30;
    let cfg = config(n, 0.1, 0.0, 1, 1);
    let xs: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let zs = vec![0; n];
    let trials = 2500u64;

    // explicit route: fresh codebook per trial, likelihood encoder
    let mut fa = Vec::with_capacity(trials as usize);
    for t in 0..trials {
        let cb = Codebook::new(&scheme, cfg, mix(300, t)).unwrap();
        let m = cb.likelihood_encode(&xs, &zs, 0, mix(301, t)).unwrap();
        let us = cb.codeword(&zs, m, 0).unwrap();
        fa.push(us.iter().filter(|&&u| u == 1).count() as f64 / n as f64);
    }
    // averaged route: the race integrates the codebook out
    let cb = Codebook::new(&scheme, cfg, 0).unwrap();
    let mut fb = Vec::with_capacity(trials as usize);
    for t in 0..trials {
        let us = averaged_selection(&cb, &xs, &zs, mix(302, t)).unwrap();
        fb.push(us.iter().filter(|&&u| u == 1).count() as f64 / n as f64);
    }

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let var = |v: &[f64], m: f64| {
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
    };
    let (ma, mb) = (mean(&fa), mean(&fb));
    let se = (var(&fa, ma) / fa.len() as f64 + var(&fb, mb) / fb.len() as f64).sqrt();
    assert!(
        (ma - mb).abs() <= 4.0 * se + 1e-3,
        "explicit mean {ma}, averaged mean {mb}, se {se}"
    );
}

#[test]
fn codebook_rate_controls_distortion() {
    let eps = 0.178;
    let scheme = binary_symmetric_scheme(eps);
    let threshold = scheme.message_threshold().unwrap();
    let n = 600;

    // saturated: posterior sampling lands on the design distortion
    let rich = Codebook::new(&scheme, config(n, threshold + 0.3, 0.0, 71, 60), 1).unwrap();
    let fed = monte_carlo(&rich).unwrap();
    assert!(
        fed.mean_distortion < eps + 0.05,
        "saturated codebook distorts at {}",
        fed.mean_distortion
    );

    // starved: 2^16 codewords cannot track a 600-symbol block
    let starved = Codebook::new(&scheme, config(n, 16.0 / n as f64, 0.0, 73, 60), 1).unwrap();
    let lean = monte_carlo(&starved).unwrap();
    assert!(
        lean.mean_distortion > eps + 0.05,
        "starved codebook distorts at {}",
        lean.mean_distortion
    );
    assert!(lean.mean_distortion > fed.mean_distortion + 0.05);
}

#[test]
fn exact_laws_normalize_and_collapse_for_flat_weights() {
    // when the source ignores the description the encoder has no
    // preference, so the induced and uniform-choice laws coincide
    let scheme = independent_scheme();
    let cb = Codebook::new(&scheme, config(3, 0.7, 0.4, 3, 1), 11).unwrap();
    let laws = exact_joint_law(&cb).unwrap();
    let tv = tv_tables(&laws.induced_xy, &laws.auxiliary_xy).unwrap();
    assert!(tv <= 1e-12, "flat weights still moved the law by {tv}");
    for table in [&laws.induced_xy, &laws.auxiliary_xy, &laws.product_xy] {
        let mass: f64 = table.as_slice().iter().sum();
        assert!((mass - 1.0).abs() <= 1e-9);
    }
}

#[test]
fn exact_law_expectations_match_simulation() {
    let scheme = rich_scheme();
    let cfg = config(2, 1.0, 0.5, 97, 4000);
    let cb = Codebook::new(&scheme, cfg, 23).unwrap();
    let laws = exact_joint_law(&cb).unwrap();

    // exact per-trial expectations from the induced block law
    let d = scheme.distortion();
    let mut ed = 0.0;
    let mut etv = 0.0;
    let xseqs: Vec<Vec<usize>> = sequences(2, 2).collect();
    for (xf, xseq) in xseqs.iter().enumerate() {
        for (yf, yseq) in sequences(2, 2).enumerate() {
            let p = laws.induced_xy.as_slice()[xf * 4 + yf];
            if p == 0.0 {
                continue;
            }
            let dist: f64 = xseq
                .iter()
                .zip(yseq.iter())
                .map(|(&x, &y)| d.get(x, y))
                .sum::<f64>()
                / 2.0;
            let tx = EmpiricalDist::from_sequence(xseq, 2).unwrap();
            let ty = EmpiricalDist::from_sequence(&yseq, 2).unwrap();
            ed += p * dist;
            etv += p * tv_empirical(&tx, &ty).unwrap();
        }
    }

    let report = monte_carlo(&cb).unwrap();
    assert_eq!(report.encoding_failures, 0);
    let d_band = 2.5 * report.ci95_distortion;
    let t_band = 2.5 * report.ci95_tv;
    assert!(
        (report.mean_distortion - ed).abs() <= d_band,
        "simulated {} vs exact {ed}",
        report.mean_distortion
    );
    assert!(
        (report.mean_empirical_tv - etv).abs() <= t_band,
        "simulated {} vs exact {etv}",
        report.mean_empirical_tv
    );
}

#[test]
fn proof_diagnostics_decay_with_blocklength() {
    let scheme = binary_symmetric_scheme(0.25);
    let threshold = scheme.message_threshold().unwrap();
    let rate = threshold + 0.45;
    let r0 = 1.0 - threshold; // total clears the description entropy
    let seeds: Vec<u64> = (0..12).collect();
    let mut last = f64::INFINITY;
    for n in 1..=3 {
        let rec = mean_diagnostics(&scheme, config(n, rate, r0, 1, 1), &seeds).unwrap();
        for v in [
            rec.tv_induced_auxiliary,
            rec.tv_auxiliary_product_yz,
            rec.tv_induced_product,
            rec.strong_tv,
        ] {
            assert!((0.0..=1.0).contains(&v), "distance {v} out of range at n={n}");
        }
        assert!(
            rec.tv_induced_product <= last + 0.05,
            "block-law distance rose from {last} to {} at n={n}",
            rec.tv_induced_product
        );
        last = rec.tv_induced_product;
    }
    assert!(last < 0.5, "distance should be shrinking, still at {last}");
}

#[test]
fn codebook_rejects_bad_configs_and_indices() {
    let scheme = rich_scheme();
    assert!(Codebook::new(&scheme, config(0, 1.0, 0.0, 1, 1), 1).is_err());
    assert!(Codebook::new(&scheme, config(4, -0.5, 0.0, 1, 1), 1).is_err());
    assert!(Codebook::new(&scheme, config(4, 1.0, f64::NAN, 1, 1), 1).is_err());
    let cb = Codebook::new(&scheme, config(4, 0.5, 0.0, 1, 1), 1).unwrap();
    // 2^(4*0.5) = 4 messages
    assert_eq!(cb.message_count(), Some(4));
    assert!(cb.codeword(&[0, 1, 0, 1], 4, 0).is_err());
    assert!(cb.codeword(&[0, 1, 0], 0, 0).is_err());
    assert!(cb.codeword(&[0, 1, 0, 2], 0, 0).is_err());
    assert!(cb.codeword(&[0, 1, 0, 1], 0, 1).is_err());
}

use polyopf_core::moments::binomial;
use polyopf_core::{
    build_opf_rank_relaxation, build_poly_opf, build_poly_opf_with, build_rank_relaxation,
    build_relaxation, multi_index_set, parse_case, point_moments, FormulationError, NetworkCase,
    PolyOptions, PolyProblem, SparsePolynomial,
};
use polyopf_sdp::{solve, Mat, SolveStatus, SolverOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;

fn data(name: &str) -> NetworkCase {
    let path = format!("{}/../../data/{name}", env!("CARGO_MANIFEST_DIR"));
    parse_case(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn mono(nvars: usize, alpha: &[u32], c: f64) -> SparsePolynomial {
    let mut p = SparsePolynomial::zero(nvars);
    p.add_term(alpha.to_vec(), c);
    p
}

fn random_poly(rng: &mut ChaCha8Rng, nvars: usize, deg: usize, terms: usize) -> SparsePolynomial {
    let basis = multi_index_set(nvars, deg);
    let mut p = SparsePolynomial::zero(nvars);
    for _ in 0..terms {
        let a = &basis.members()[rng.gen_range(0..basis.len())];
        p.add_term(a.clone(), rng.gen_range(-1.0..1.0));
    }
    p
}

fn relax_value(prob: &PolyProblem, d: usize) -> f64 {
    let sdp = build_relaxation(prob, d).unwrap();
    let sol = solve(&sdp.to_sdp(), &SolverOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    sol.primal_obj
}

#[test]
fn cardinalities() {
    let s = multi_index_set(2, 1);
    let got: HashSet<Vec<u32>> = s.members().iter().cloned().collect();
    let want: HashSet<Vec<u32>> = [vec![0, 0], vec![1, 0], vec![0, 1]].into_iter().collect();
    assert_eq!(got, want);
    assert_eq!(multi_index_set(9, 2).len(), 55);
    assert_eq!(multi_index_set(3, 2).len(), 10);
    // growth of the 3-variable localizing sizes
    assert_eq!(
        (2..=4).map(|q| multi_index_set(3, q).len()).collect::<Vec<_>>(),
        [10, 20, 35]
    );

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let p = rng.gen_range(1..7);
        let q = rng.gen_range(0..6);
        let s = multi_index_set(p, q);
        assert_eq!(s.len(), binomial(p + q, q));
        let uniq: HashSet<&Vec<u32>> = s.members().iter().collect();
        assert_eq!(uniq.len(), s.len());
        let degs: Vec<u32> = s.members().iter().map(|a| a.iter().sum()).collect();
        assert!(degs.windows(2).all(|w| w[0] <= w[1]));
        assert!(degs.iter().all(|&d| d as usize <= q));
        for k in 0..=q {
            assert_eq!(s.prefix_len(k), binomial(p + k, k));
            assert_eq!(degs[..s.prefix_len(k)].iter().filter(|&&d| d as usize > k).count(), 0);
        }
        for (i, a) in s.members().iter().enumerate() {
            assert_eq!(s.position(a), Some(i));
        }
        if q >= 1 {
            for i in 0..p {
                let a = &s.members()[s.unit(i)];
                assert_eq!(a[i], 1);
                assert_eq!(a.iter().sum::<u32>(), 1);
            }
        }
    }
}

#[test]
fn localizing_block_of_a_sign_constraint() {
    let mut prob = PolyProblem::new(mono(3, &[1, 0, 0], 1.0));
    prob.push(mono(3, &[0, 1, 0], 1.0), "x2 >= 0");
    let ix = |s: &polyopf_core::MultiIndexSet, a: [u32; 3]| s.position(&a).unwrap();

    let r1 = build_relaxation(&prob, 1).unwrap();
    let b = &r1.blocks[1];
    assert_eq!(b.size, 1);
    assert_eq!(b.entries, vec![(0, 0, ix(&r1.basis, [0, 1, 0]), 1.0)]);

    let r2 = build_relaxation(&prob, 2).unwrap();
    let b = &r2.blocks[1];
    assert_eq!(b.size, 4);
    let mut row: Vec<(usize, usize)> = b
        .entries
        .iter()
        .filter(|e| e.0 == 0)
        .map(|e| (e.1, e.2))
        .collect();
    row.sort();
    let want = [[0, 1, 0], [1, 1, 0], [0, 2, 0], [0, 1, 1]];
    assert_eq!(
        row,
        want.iter().enumerate().map(|(j, a)| (j, ix(&r2.basis, *a))).collect::<Vec<_>>()
    );
}

/// Problem in three variables with a known feasible point `xh`.
fn random_problem(rng: &mut ChaCha8Rng, xh: &[f64]) -> PolyProblem {
    let p = xh.len();
    let mut prob = PolyProblem::new(random_poly(rng, p, 4, 8));
    for k in 0..rng.gen_range(1..4) {
        let deg = rng.gen_range(1..=4);
        let g = random_poly(rng, p, deg, 5);
        let shift = rng.gen_range(0.0..0.5) - g.eval(xh);
        prob.push(g.add(&SparsePolynomial::constant(p, shift)), format!("g{k}"));
    }
    let m = xh.iter().map(|v| v * v).sum::<f64>() + 1.0;
    let mut ball = SparsePolynomial::constant(p, m);
    for i in 0..p {
        ball = ball.add(&SparsePolynomial::var(p, i).mul(&SparsePolynomial::var(p, i)).scale(-1.0));
    }
    prob.push(ball, "ball");
    prob
}

#[test]
fn point_evaluation_is_feasible() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let xh: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let prob = random_problem(&mut rng, &xh);
        let d = prob.min_order().max(rng.gen_range(1..=3));
        let sdp = build_relaxation(&prob, d).unwrap();
        let y = point_moments(&sdp.basis, &xh);
        for b in &sdp.blocks {
            let m = b.value(&y);
            let scale = 1.0 + m.frobenius_norm();
            assert!(m.min_eigenvalue() >= -1e-10 * scale, "{}", b.label);
        }
        let f0 = prob.objective.eval(&xh);
        assert!((sdp.objective_value(&y) - f0).abs() < 1e-12 * (1.0 + f0.abs()));
    }
}

#[test]
fn blocks_reconstruct_constraint_times_outer_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..100 {
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let prob = random_problem(&mut rng, &x);
        let d = prob.min_order() + rng.gen_range(0..2);
        let sdp = build_relaxation(&prob, d).unwrap();
        let y = point_moments(&sdp.basis, &x);
        let fs: Vec<SparsePolynomial> = std::iter::once(SparsePolynomial::constant(3, 1.0))
            .chain(prob.constraints.iter().cloned())
            .collect();
        for (b, f) in sdp.blocks.iter().zip(&fs) {
            let bx: Vec<f64> = sdp.basis.members()[..b.size]
                .iter()
                .map(|a| a.iter().zip(&x).map(|(&e, v)| v.powi(e as i32)).product())
                .collect();
            let fx = f.eval(&x);
            let want = Mat::from_fn(b.size, b.size, |i, j| fx * bx[i] * bx[j]);
            let got = b.value(&y);
            for i in 0..b.size {
                for j in 0..b.size {
                    assert!((got[(i, j)] - want[(i, j)]).abs() < 1e-10 * (1.0 + want[(i, j)].abs()));
                }
            }
        }
    }
}

#[test]
fn largest_block_side() {
    for (name, p) in [("wb2.m", 3), ("lmbm3.m", 5), ("wb5.m", 9)] {
        let prob = build_poly_opf(&data(name)).unwrap();
        assert_eq!(prob.nvars, p);
        for d in prob.min_order()..=3 {
            if p == 9 && d == 3 {
                continue;
            }
            let sdp = build_relaxation(&prob, d).unwrap();
            let largest = sdp.blocks.iter().map(|b| b.size).max().unwrap();
            assert_eq!(largest, binomial(p + d, d));
            assert_eq!(sdp.blocks[0].size, largest);
            assert_eq!(sdp.blocks.len(), prob.constraints.len() + 1);
        }
    }
}

#[test]
fn order_below_half_degree_is_rejected() {
    let prob = build_poly_opf(&data("lmbm3.m")).unwrap();
    assert!(matches!(
        build_relaxation(&prob, 1),
        Err(FormulationError::OrderTooSmall { d: 1, v: 2, .. })
    ));
    assert!(build_relaxation(&prob, 2).is_ok());
}

#[test]
fn scalar_rank_relaxation() {
    let mut prob = PolyProblem::new(mono(1, &[2], 1.0));
    prob.push(mono(1, &[2], 1.0).add(&SparsePolynomial::constant(1, -1.0)), "x^2 >= 1");
    let lifted = build_rank_relaxation(&prob).unwrap();
    assert_eq!(lifted.nvars(), 1);
    let sol = solve(&lifted.to_sdp(), &SolverOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.primal_obj - 1.0).abs() < 1e-8);
    assert!((relax_value(&prob, 1) - 1.0).abs() < 1e-8);
}

#[test]
fn rank_relaxation_rejects_higher_degrees() {
    let prob = build_poly_opf(&data("lmbm3.m")).unwrap();
    assert!(matches!(build_rank_relaxation(&prob), Err(FormulationError::NotQuadratic(_))));
}

/// Random QCQP in homogeneous quadratic forms plus constants.
fn random_qcqp(rng: &mut ChaCha8Rng, p: usize) -> PolyProblem {
    let quad = |rng: &mut ChaCha8Rng| {
        let mut f = SparsePolynomial::zero(p);
        for i in 0..p {
            for j in i..p {
                let mut a = vec![0u32; p];
                a[i] += 1;
                a[j] += 1;
                f.add_term(a, rng.gen_range(-1.0..1.0));
            }
        }
        f
    };
    let mut prob = PolyProblem::new(quad(rng));
    for k in 0..3 {
        let f = quad(rng).scale(0.3);
        prob.push(f.add(&SparsePolynomial::constant(p, 1.0)), format!("q{k}"));
    }
    let mut ball = SparsePolynomial::constant(p, 2.0);
    for i in 0..p {
        let mut a = vec![0u32; p];
        a[i] = 2;
        ball.add_term(a, -1.0);
    }
    prob.push(ball, "ball");
    prob
}

#[test]
fn order_one_equals_rank_relaxation() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..10 {
        let prob = random_qcqp(&mut rng, 3);
        let lifted = build_rank_relaxation(&prob).unwrap();
        let r = solve(&lifted.to_sdp(), &SolverOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        let m = relax_value(&prob, 1);
        assert!((m - r.primal_obj).abs() <= 1e-6 * (1.0 + m.abs()), "{m} vs {}", r.primal_obj);
    }
}

#[test]
fn rank_relaxation_bounds_sampled_feasible_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..5 {
        let prob = random_qcqp(&mut rng, 3);
        let r = solve(&build_rank_relaxation(&prob).unwrap().to_sdp(), &SolverOptions::default()).unwrap();
        let mut found = 0;
        while found < 1000 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.5..1.5)).collect();
            if prob.max_violation(&x) > 0.0 {
                continue;
            }
            found += 1;
            assert!(r.primal_obj <= prob.objective.eval(&x) + 1e-8);
        }
    }
}

#[test]
fn hierarchy_is_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..5 {
        let xh: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut prob = PolyProblem::new(random_poly(&mut rng, 2, 4, 6));
        let g = random_poly(&mut rng, 2, 2, 4);
        let shift = 0.2 - g.eval(&xh);
        prob.push(g.add(&SparsePolynomial::constant(2, shift)), "g");
        let mut ball = SparsePolynomial::constant(2, 3.0);
        ball.add_term(vec![2, 0], -1.0);
        ball.add_term(vec![0, 2], -1.0);
        prob.push(ball, "ball");
        let f = prob.objective.eval(&xh);
        let v2 = relax_value(&prob, 2);
        let v3 = relax_value(&prob, 3);
        assert!(v3 >= v2 - 1e-7);
        assert!(v3 <= f + 1e-7 && v2 <= f + 1e-7);
    }
}

#[test]
fn wb2_unfixed_order_one_matches_rank_relaxation() {
    let mut case = data("wb2.m");
    case.bus_mut(2).unwrap().v_max = 1.022;
    let prob = build_poly_opf_with(&case, &PolyOptions { fix_phase: false, ball: true }).unwrap();
    assert_eq!(prob.nvars, 4);
    let v1 = relax_value(&prob, 1);
    assert!((v1 - 888.08).abs() < 0.01, "{v1}");
    let rank = solve(&build_opf_rank_relaxation(&case).unwrap(), &SolverOptions::default()).unwrap();
    assert!((rank.primal_obj - 888.08).abs() < 0.01);
    let lifted = solve(&build_rank_relaxation(&prob).unwrap().to_sdp(), &SolverOptions::default()).unwrap();
    assert!((lifted.primal_obj - v1).abs() < 1e-6 * v1);
    // the phase-fixed order-1 relaxation is weaker
    assert!(relax_value(&build_poly_opf(&case).unwrap(), 1) < 888.0);
}

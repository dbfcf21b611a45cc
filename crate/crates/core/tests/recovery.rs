use linkreg::estimators::objective;
use linkreg::matching::{detect_mismatches, recover_permutation, recover_permutation_scores, two_stage_correct, MismatchRule};
use linkreg::simlab::{generate_permutation_blocks, generate_permutation_ksparse, replication_rng, sample_response};
use linkreg::{fit_glm, fit_penalized_constrained, BlockPartition, Family, PenalizedOptions};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

/// Failure rate of sorting with known means over `reps` shuffles.
fn failure_rate(family: &Family, mu: &DVector<f64>, reps: usize, seed: u64) -> f64 {
    let n = mu.len();
    let eta = mu.map(|m| family.linear_predictor(m).unwrap());
    let mut failures = 0;
    for rep in 0..reps {
        let mut rng = replication_rng(seed, rep);
        let mut pi: Vec<usize> = (0..n).collect();
        pi.shuffle(&mut rng);
        let shuffled = DVector::from_fn(n, |i, _| eta[pi[i]]);
        let y = sample_response(family, &shuffled, &mut rng).unwrap();
        if recover_permutation_scores(mu, &y, None).unwrap().pi_hat != pi {
            failures += 1;
        }
    }
    failures as f64 / reps as f64
}

#[test]
fn poisson_recovery_under_root_spacing() {
    let (n, delta) = (30usize, 0.1f64);
    let gap = 1.05 * (((n - 1) as f64) / delta).ln().sqrt();
    let mu = DVector::from_fn(n, |i, _| (1.0 + i as f64 * gap).powi(2));
    let rate = failure_rate(&Family::poisson(), &mu, 400, 21);
    assert!(rate <= delta, "failure rate {rate}");
}

#[test]
fn gamma_recovery_under_ratio_spacing() {
    let (n, delta, nu) = (8usize, 0.1f64, 30.0f64);
    let ratio = 1.05 * 4.0 * (((n - 1) as f64) / delta).powf(1.0 / nu);
    let mu = DVector::from_fn(n, |i, _| ratio.powi(i as i32));
    let rate = failure_rate(&Family::gamma_log(nu), &mu, 400, 22);
    assert!(rate <= delta, "failure rate {rate}");
}

#[test]
fn recovery_fails_without_separation() {
    let n = 30;
    let mu = DVector::from_fn(n, |i, _| i as f64 * 0.1);
    let rate = failure_rate(&Family::gaussian(1.0), &mu, 50, 23);
    assert!(rate > 0.9);
}

#[test]
fn blocking_makes_recovery_easier() {
    let n = 60;
    let f = Family::gaussian(1.0);
    let mu = DVector::from_fn(n, |i, _| (i % 3) as f64 * 4.0 + (i / 3) as f64 * 0.01);
    let blocks = BlockPartition::from_keys(&(0..n).map(|i| i / 3).collect::<Vec<_>>());
    let mut exact = 0;
    for rep in 0..100 {
        let mut rng = replication_rng(24, rep);
        let pi = generate_permutation_blocks(&blocks, &mut rng);
        let y = sample_response(&f, &DVector::from_fn(n, |i, _| mu[pi[i]]), &mut rng).unwrap();
        if recover_permutation_scores(&mu, &y, Some(&blocks)).unwrap().pi_hat == pi {
            exact += 1;
        }
    }
    assert!(exact >= 95, "{exact} of 100");
}

#[test]
fn planted_mismatches_are_flagged_and_undone() {
    let n = 200;
    let f = Family::poisson();
    let mut rng = replication_rng(31, 0);
    let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { -2.0 + 4.0 * i as f64 / n as f64 });
    let beta = DVector::from_vec(vec![2.0, 1.0]);
    let y_star = sample_response(&f, &(&x * &beta), &mut rng).unwrap();
    // Swap a few rows from the two ends of the covariate range.
    let mut pi: Vec<usize> = (0..n).collect();
    for k in 0..5 {
        pi.swap(k, n - 1 - k);
    }
    let y = DVector::from_fn(n, |i, _| y_star[pi[i]]);
    let report = detect_mismatches(&f, &x, &y, &beta, MismatchRule::TopK(10)).unwrap();
    let planted: Vec<usize> = (0..5).chain(n - 5..n).collect();
    assert_eq!(report.selected, planted);
    let fixed = two_stage_correct(&f, &x, &y, &beta, MismatchRule::TopK(10), None).unwrap();
    for (i, (&got, &truth)) in fixed.pi_hat.iter().zip(&pi).enumerate() {
        if !planted.contains(&i) {
            assert_eq!(got, i);
        } else {
            // Neighbouring means are nearly equal, so only the end is identifiable.
            assert_eq!(got < n / 2, truth < n / 2, "row {i}");
        }
    }
    assert!((&fixed.corrected_y - &y_star).norm() < 0.2 * (&y - &y_star).norm());
}

#[test]
fn sorting_with_estimated_coefficients_reduces_mismatch() {
    let n = 400;
    let f = Family::poisson();
    let mut rng = replication_rng(32, 0);
    let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { (i as f64 / n as f64) * 3.0 });
    let y_star = sample_response(&f, &(&x * DVector::from_vec(vec![1.0, 1.0])), &mut rng).unwrap();
    let pi = generate_permutation_ksparse(n, 80, &mut rng).unwrap();
    let y = DVector::from_fn(n, |i, _| y_star[pi[i]]);
    let blocks = BlockPartition::contiguous(n, 40);
    let pi_blocked = generate_permutation_blocks(&blocks, &mut rng);
    let yb = DVector::from_fn(n, |i, _| y_star[pi_blocked[i]]);
    let lambda = 0.02;
    let fit = fit_penalized_constrained(&f, &x, &yb, lambda, &blocks, &PenalizedOptions::default()).unwrap();
    let est = recover_permutation(&x, &yb, &fit.beta, Some(&blocks)).unwrap();
    let before = (&yb - &y_star).norm();
    let after = (&est.corrected_y - &y_star).norm();
    assert!(after < before, "{after} vs {before}");
    assert!(fit_glm(&f, &x, &y, None, &Default::default()).unwrap().converged);
}

/// Sum-zero offsets against an enumeration of sign patterns (Gaussian).
#[test]
fn constrained_fit_reaches_the_enumerated_optimum() {
    let f = Family::gaussian(1.0);
    let n = 7;
    let blocks = BlockPartition::from_groups(n, vec![vec![0, 1, 2], vec![3], vec![4, 5, 6]]).unwrap();
    for seed in 0..4u64 {
        let mut rng = replication_rng(40 + seed, 0);
        let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { i as f64 - 3.0 });
        let y_star = sample_response(&f, &(&x * DVector::from_vec(vec![0.0, 1.5])), &mut rng).unwrap();
        let pi = generate_permutation_blocks(&blocks, &mut rng);
        let y = DVector::from_fn(n, |i, _| y_star[pi[i]]);
        let lambda = 0.05 + 0.1 * seed as f64;
        let fit = fit_penalized_constrained(&f, &x, &y, lambda, &blocks, &PenalizedOptions::default()).unwrap();
        let got = objective(&f, &x, &y, &fit.beta, &fit.xi, lambda).unwrap();
        let best = enumerate(&f, &x, &y, &blocks, lambda);
        assert!((got - best).abs() < 1e-7, "seed {seed}: {got} vs {best}");
        assert_eq!(fit.xi[3], 0.0);
    }
}

fn enumerate(f: &Family, x: &DMatrix<f64>, y: &DVector<f64>, blocks: &BlockPartition, lambda: f64) -> f64 {
    let n = y.len();
    let free: Vec<usize> = (0..n).filter(|&i| blocks.sizes()[blocks.block_of(i)] > 1).collect();
    let mut best = f64::INFINITY;
    for code in 0..3usize.pow(free.len() as u32) {
        let mut c = code;
        let mut s = vec![0.0; n];
        for &i in &free {
            s[i] = [0.0, 1.0, -1.0][c % 3];
            c /= 3;
        }
        let act: Vec<usize> = (0..n).filter(|&i| s[i] != 0.0).collect();
        let m = act.len();
        let sqn = (n as f64).sqrt();
        let a = DMatrix::from_fn(n, 2 + m, |r, k| if k < 2 { x[(r, k)] } else if act[k - 2] == r { sqn } else { 0.0 });
        let rows: Vec<Vec<usize>> = blocks
            .groups()
            .iter()
            .map(|g| (0..m).filter(|&k| g.contains(&act[k])).collect::<Vec<_>>())
            .filter(|v| !v.is_empty())
            .collect();
        let p = 2 + m + rows.len();
        let mut kkt = DMatrix::zeros(p, p);
        kkt.view_mut((0, 0), (2 + m, 2 + m)).copy_from(&(a.transpose() * &a / n as f64));
        let mut rhs = DVector::zeros(p);
        rhs.rows_mut(0, 2 + m).copy_from(&(a.transpose() * y / n as f64));
        for k in 0..m {
            rhs[2 + k] -= lambda * s[act[k]];
        }
        for (r, ks) in rows.iter().enumerate() {
            for &k in ks {
                kkt[(2 + m + r, 2 + k)] = 1.0;
                kkt[(2 + k, 2 + m + r)] = 1.0;
            }
        }
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        let mut xi = DVector::zeros(n);
        let mut ok = true;
        for k in 0..m {
            ok &= sol[2 + k] * s[act[k]] >= -1e-12;
            xi[act[k]] = sol[2 + k];
        }
        if ok {
            best = best.min(objective(f, x, y, &sol.rows(0, 2).into_owned(), &xi, lambda).unwrap());
        }
    }
    best
}

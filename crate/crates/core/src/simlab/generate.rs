//! Random designs, coefficients, linkage permutations and responses.

use nalgebra::{DMatrix, DVector};
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{Family, FamilyKind};
use crate::matching::BlockPartition;

/// Distribution of the design entries; all have unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    StdNormal,
    /// Uniform on `[-√3, √3]`.
    #[default]
    UniformSqrt3,
    /// Student t with 5 degrees of freedom scaled by `√(3/5)`.
    RescaledT5,
}

/// An `n × d` matrix of i.i.d. entries, with a leading column of ones when `intercept`.
pub fn generate_design<R: Rng + ?Sized>(design: Design, n: usize, d: usize, intercept: bool, rng: &mut R) -> DMatrix<f64> {
    let off = usize::from(intercept);
    let mut x = DMatrix::zeros(n, d + off);
    if intercept {
        x.column_mut(0).fill(1.0);
    }
    let s3 = 3f64.sqrt();
    let t5 = StudentT::new(5.0).expect("valid dof");
    let scale_t = (3.0f64 / 5.0).sqrt();
    // Row-major fill so that a prefix of rows does not depend on `n`.
    for i in 0..n {
        for j in 0..d {
            x[(i, j + off)] = match design {
                Design::StdNormal => rng.sample(StandardNormal),
                Design::UniformSqrt3 => rng.random_range(-s3..=s3),
                Design::RescaledT5 => t5.sample(rng) * scale_t,
            };
        }
    }
    x
}

/// A direction uniform on the sphere in `R^d`, scaled to Euclidean norm `norm`.
pub fn generate_beta<R: Rng + ?Sized>(d: usize, norm: f64, rng: &mut R) -> DVector<f64> {
    if d == 0 || norm == 0.0 {
        return DVector::zeros(d);
    }
    loop {
        let v = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let len = v.norm();
        if len > 0.0 {
            return v * (norm / len);
        }
    }
}

/// A uniformly random map moving exactly `k` indices: a random `k`-subset is
/// shuffled, and shuffles with a fixed point are redrawn.
pub fn generate_permutation_ksparse<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    if k > n {
        return Err(Error::invalid(format!("cannot move {k} of {n} indices")));
    }
    if k == 1 {
        return Err(Error::invalid("a permutation cannot move exactly one index"));
    }
    let mut pi: Vec<usize> = (0..n).collect();
    if k == 0 {
        return Ok(pi);
    }
    let mut subset = index::sample(rng, n, k).into_vec();
    subset.sort_unstable();
    let mut image = subset.clone();
    loop {
        image.shuffle(rng);
        if image.iter().zip(&subset).all(|(a, b)| a != b) {
            break;
        }
    }
    for (&i, &j) in subset.iter().zip(&image) {
        pi[i] = j;
    }
    Ok(pi)
}

/// Independent uniform shuffles within each block.
pub fn generate_permutation_blocks<R: Rng + ?Sized>(blocks: &BlockPartition, rng: &mut R) -> Vec<usize> {
    let mut pi: Vec<usize> = (0..blocks.n()).collect();
    for g in blocks.groups() {
        if g.len() < 2 {
            continue;
        }
        let mut image = g.clone();
        image.shuffle(rng);
        for (&i, &j) in g.iter().zip(&image) {
            pi[i] = j;
        }
    }
    pi
}

/// One draw of `y_i` given linear predictor `eta_i` for every row.
pub fn sample_response<R: Rng + ?Sized>(family: &Family, eta: &DVector<f64>, rng: &mut R) -> Result<DVector<f64>> {
    let mut y = DVector::zeros(eta.len());
    for (i, &e) in eta.iter().enumerate() {
        let mu = family.mean(e)?;
        y[i] = match family.kind() {
            FamilyKind::Gaussian => {
                Normal::new(mu, family.dispersion().sqrt()).map_err(|e| Error::Numeric(e.to_string()))?.sample(rng)
            }
            FamilyKind::Poisson => {
                if mu <= 0.0 {
                    0.0
                } else {
                    Poisson::new(mu).map_err(|e| Error::Numeric(e.to_string()))?.sample(rng)
                }
            }
            FamilyKind::Binomial | FamilyKind::Bernoulli => {
                let p = mu / family.trials() as f64;
                (0..family.trials()).filter(|_| rng.random_bool(p.clamp(0.0, 1.0))).count() as f64
            }
            FamilyKind::Gamma => {
                let nu = 1.0 / family.dispersion();
                Gamma::new(nu, mu / nu).map_err(|e| Error::Numeric(e.to_string()))?.sample(rng)
            }
        };
    }
    Ok(y)
}


#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn designs_have_unit_variance() {
        for design in [Design::StdNormal, Design::UniformSqrt3, Design::RescaledT5] {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let x = generate_design(design, 1000, 4, true, &mut rng);
            assert!(x.column(0).iter().all(|&v| v == 1.0));
            for j in 1..5 {
                let c = x.column(j);
                let m = c.mean();
                let v = c.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / 999.0;
                assert!((0.85..=1.15).contains(&v), "{design:?} column {j}: {v}");
            }
            if design == Design::UniformSqrt3 {
                assert!(x.columns(1, 4).iter().all(|v| v.abs() <= 3f64.sqrt()));
            }
        }
        let a = generate_design(Design::StdNormal, 20, 3, false, &mut ChaCha8Rng::seed_from_u64(5));
        let b = generate_design(Design::StdNormal, 20, 3, false, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }

    #[test]
    fn beta_has_requested_norm_and_uniform_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((generate_beta(7, 2.0, &mut rng).norm() - 2.0).abs() < 1e-12);
        assert_eq!(generate_beta(4, 0.0, &mut rng), DVector::zeros(4));
        let mut acc = DVector::zeros(5);
        for _ in 0..1000 {
            acc += generate_beta(5, 1.0, &mut rng);
        }
        assert!((acc / 1000.0).norm() < 0.1);
    }

    #[test]
    fn ksparse_moves_exactly_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(generate_permutation_ksparse(10, 0, &mut rng).unwrap(), (0..10).collect::<Vec<_>>());
        assert!(generate_permutation_ksparse(10, 1, &mut rng).is_err());
        for k in [2, 3, 7, 20] {
            for _ in 0..250 {
                let p = generate_permutation_ksparse(20, k, &mut rng).unwrap();
                assert!(crate::estimators::is_permutation(&p));
                assert_eq!(p.iter().enumerate().filter(|(i, &j)| *i != j).count(), k);
            }
        }
        let p = generate_permutation_ksparse(9, 2, &mut rng).unwrap();
        let moved: Vec<usize> = (0..9).filter(|&i| p[i] != i).collect();
        assert_eq!(p[moved[0]], moved[1]);
        assert_eq!(p[moved[1]], moved[0]);
    }

    #[test]
    fn block_permutation_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let single = BlockPartition::singletons(5);
        assert_eq!(generate_permutation_blocks(&single, &mut rng), vec![0, 1, 2, 3, 4]);
        let pair = BlockPartition::single(2);
        let swaps = (0..1000).filter(|_| generate_permutation_blocks(&pair, &mut rng)[0] == 1).count();
        assert!((swaps as f64 / 1000.0 - 0.5).abs() < 0.05);
        // Expected moved fraction: Σ_j (n_j − 1)/n over blocks of size ≥ 2 (one fixed point on average).
        let b = BlockPartition::from_groups(10, vec![vec![0, 1, 2, 3], vec![4, 5, 6], vec![7], vec![8, 9]]).unwrap();
        let expect = (3.0 + 2.0 + 1.0) / 10.0;
        let mut moved = 0usize;
        for _ in 0..4000 {
            moved += generate_permutation_blocks(&b, &mut rng).iter().enumerate().filter(|(i, &j)| *i != j).count();
        }
        assert!((moved as f64 / 40000.0 - expect).abs() < 0.02);
    }

    #[test]
    fn gamma_draws_match_variance() {
        let f = Family::gamma_log(50.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let eta = DVector::from_element(1_000_000, 10f64.ln());
        let y = sample_response(&f, &eta, &mut rng).unwrap();
        let m = y.mean();
        let v = y.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (y.len() - 1) as f64;
        assert!((v / 2.0 - 1.0).abs() < 0.01, "{v}");
    }

    #[test]
    fn response_means_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for f in [Family::gaussian(2.0), Family::poisson(), Family::binomial(25), Family::bernoulli(), Family::gamma_log(5.0)] {
            let eta = DVector::from_fn(4000, |i, _| ((i % 7) as f64 - 3.0) * 0.3);
            let y = sample_response(&f, &eta, &mut rng).unwrap();
            let (mut resid, mut var) = (0.0, 0.0);
            for i in 0..eta.len() {
                resid += y[i] - f.mean_unchecked(eta[i]);
                var += f.variance_unchecked(eta[i]);
            }
            assert!(resid.abs() < 4.0 * var.sqrt(), "{f:?}");
            assert!(y.iter().all(|&v| f.in_support(v)));
        }
    }
}

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::calibrate::{deviance_between_means, lambda_base, lambda_grid, sigma_y_data, sigma_y_known};
use super::generate::{
    generate_beta, generate_design, generate_permutation_blocks, generate_permutation_ksparse, sample_response, Design,
};
use crate::baselines::{fit_chambers, fit_ll, EstimatingEquationFit, NewtonOptions};
use crate::error::{Error, Result};
use crate::estimators::{fit_glm, fit_penalized_constrained_from, fit_penalized_from, GlmOptions, PenalizedFit, PenalizedOptions};
use crate::family::Family;
use crate::matching::{hamming_distance, recover_permutation, BlockPartition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Naive,
    Oracle,
    Proposed,
    Constrained,
    Ll,
    Chambers,
}

impl Method {
    pub const ALL: [Method; 6] =
        [Method::Naive, Method::Oracle, Method::Proposed, Method::Constrained, Method::Ll, Method::Chambers];

    /// Whether the method is fitted once per grid λ.
    pub fn uses_lambda(self) -> bool {
        matches!(self, Method::Proposed | Method::Constrained)
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Naive => "naive",
            Method::Oracle => "oracle",
            Method::Proposed => "proposed",
            Method::Constrained => "constrained",
            Method::Ll => "ll",
            Method::Chambers => "chambers",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PermutationScheme {
    /// Exactly `round(n·mismatch_fraction)` moved indices, anywhere.
    KSparse,
    /// Uniform shuffles within consecutive blocks of `block_size` rows.
    BlockUniform { block_size: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaMode {
    /// From the normal approximation of the linear predictor; fixed across replications.
    #[default]
    KnownBeta,
    /// From the variance function at the observed responses.
    DataOnly,
}

fn default_permutation() -> PermutationScheme {
    PermutationScheme::KSparse
}

fn default_methods() -> Vec<Method> {
    vec![Method::Naive, Method::Oracle, Method::Proposed]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationScenario {
    pub family: Family,
    pub n: usize,
    /// Covariates besides the intercept.
    pub d: usize,
    pub beta_norm: f64,
    pub intercept: f64,
    #[serde(default)]
    pub mismatch_fraction: f64,
    #[serde(default)]
    pub design: Design,
    #[serde(default = "default_permutation")]
    pub permutation: PermutationScheme,
    pub prefactors: Vec<f64>,
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sigma_mode: SigmaMode,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
}

impl SimulationScenario {
    /// Number of moved indices under the k-sparse scheme.
    pub fn k(&self) -> usize {
        (self.n as f64 * self.mismatch_fraction).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| Err(Error::invalid(format!("{field}: {why}")));
        if self.n < self.d + 2 {
            return bad("n", format!("need n >= d + 2, got n={} d={}", self.n, self.d));
        }
        if !(self.beta_norm.is_finite() && self.beta_norm >= 0.0) {
            return bad("beta_norm", format!("must be finite and non-negative, got {}", self.beta_norm));
        }
        if !self.intercept.is_finite() {
            return bad("intercept", "must be finite".into());
        }
        if !(0.0..1.0).contains(&self.mismatch_fraction) {
            return bad("mismatch_fraction", format!("must lie in [0, 1), got {}", self.mismatch_fraction));
        }
        match self.permutation {
            PermutationScheme::KSparse if self.k() == 1 => {
                return bad("mismatch_fraction", "rounds to k = 1, which no permutation can realize".into())
            }
            PermutationScheme::BlockUniform { block_size: 0 } => {
                return bad("permutation.block_size", "must be at least 1".into())
            }
            _ => {}
        }
        if self.prefactors.is_empty() || self.prefactors.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return bad("prefactors", "need at least one positive finite pre-factor".into());
        }
        if self.replications == 0 {
            return bad("replications", "must be at least 1".into());
        }
        if self.methods.is_empty() {
            return bad("methods", "must list at least one method".into());
        }
        Ok(())
    }

    /// The partition used by the constrained and estimating-equation methods.
    pub fn blocks(&self) -> BlockPartition {
        match self.permutation {
            PermutationScheme::KSparse => BlockPartition::single(self.n),
            PermutationScheme::BlockUniform { block_size } => BlockPartition::contiguous(self.n, block_size),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub method: Method,
    pub prefactor: Option<f64>,
    pub lambda: Option<f64>,
    /// `‖β̂ − β*‖₂`, intercept included; `None` when the fit failed.
    pub beta_error: Option<f64>,
    /// `‖θ̂ − θ*‖₂` with `θ = [β; ξ]` and `ξ̂ = 0` for unpenalized methods.
    pub theta_error: Option<f64>,
    pub deviance: Option<f64>,
    /// Hamming distance to `π*` of the sorting estimate under `β̂`.
    pub hamming: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub nonzero_offsets: usize,
    pub runtime_ms: Option<f64>,
    pub note: Option<String>,
}

impl MethodOutcome {
    fn failed(method: Method, prefactor: Option<f64>, lambda: Option<f64>, note: String) -> Self {
        MethodOutcome {
            method,
            prefactor,
            lambda,
            beta_error: None,
            theta_error: None,
            deviance: None,
            hamming: None,
            converged: false,
            iterations: 0,
            nonzero_offsets: 0,
            runtime_ms: None,
            note: Some(note),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationResult {
    pub replication: usize,
    /// Realized number of indices with `π*(i) ≠ i`.
    pub mismatches: usize,
    pub sigma_y: f64,
    pub lambda_base: f64,
    pub outcomes: Vec<MethodOutcome>,
}

impl ReplicationResult {
    pub fn outcomes_of(&self, method: Method) -> impl Iterator<Item = &MethodOutcome> {
        self.outcomes.iter().filter(move |o| o.method == method)
    }

    pub fn first(&self, method: Method) -> Option<&MethodOutcome> {
        self.outcomes_of(method).next()
    }

    /// Grid point with the smallest `‖θ̂ − θ*‖₂` (oracle choice of λ).
    pub fn best(&self, method: Method) -> Option<&MethodOutcome> {
        self.outcomes_of(method)
            .filter(|o| o.theta_error.is_some())
            .min_by(|a, b| a.theta_error.unwrap().total_cmp(&b.theta_error.unwrap()))
    }
}

/// Everything drawn for one replication.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub x: DMatrix<f64>,
    pub beta_star: DVector<f64>,
    pub pi_star: Vec<usize>,
    pub y_star: DVector<f64>,
    pub y: DVector<f64>,
}

impl SimulatedData {
    /// `θ*` offsets: `ξ*_i = (x_{π*(i)} − x_i)ᵀβ*/√n`.
    pub fn xi_star(&self) -> DVector<f64> {
        let eta = &self.x * &self.beta_star;
        let sqn = (self.y.len() as f64).sqrt();
        DVector::from_fn(self.y.len(), |i, _| (eta[self.pi_star[i]] - eta[i]) / sqn)
    }
}

/// The seeded generator for replication `rep`: one ChaCha stream per replication.
pub fn replication_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    rng
}

/// Draw design, coefficients, linkage and responses for replication `rep`.
pub fn simulate_data(s: &SimulationScenario, rep: usize) -> Result<SimulatedData> {
    let mut rng = replication_rng(s.seed, rep);
    let x = generate_design(s.design, s.n, s.d, true, &mut rng);
    let free = generate_beta(s.d, s.beta_norm, &mut rng);
    let mut beta_star = DVector::zeros(s.d + 1);
    beta_star[0] = s.intercept;
    beta_star.rows_mut(1, s.d).copy_from(&free);
    let pi_star = match s.permutation {
        PermutationScheme::KSparse => generate_permutation_ksparse(s.n, s.k(), &mut rng)?,
        PermutationScheme::BlockUniform { .. } => generate_permutation_blocks(&s.blocks(), &mut rng),
    };
    let y_star = sample_response(&s.family, &(&x * &beta_star), &mut rng)?;
    let y = DVector::from_fn(s.n, |i, _| y_star[pi_star[i]]);
    Ok(SimulatedData { x, beta_star, pi_star, y_star, y })
}

/// Run every replication in parallel; results are ordered by replication index.
pub fn run_replications(s: &SimulationScenario) -> Result<Vec<ReplicationResult>> {
    s.validate()?;
    let fixed_sigma = match s.sigma_mode {
        SigmaMode::KnownBeta => Some(sigma_y_known(&s.family, s.intercept, s.beta_norm)?),
        SigmaMode::DataOnly => None,
    };
    (0..s.replications).into_par_iter().map(|rep| run_one(s, rep, fixed_sigma)).collect()
}

fn run_one(s: &SimulationScenario, rep: usize, fixed_sigma: Option<f64>) -> Result<ReplicationResult> {
    let data = simulate_data(s, rep)?;
    let family = &s.family;
    let sigma_y = fixed_sigma.unwrap_or_else(|| sigma_y_data(family, &data.y));
    let base = lambda_base(sigma_y, s.n, s.d);
    let grid = lambda_grid(&s.prefactors, base);
    let blocks = s.blocks();
    let ctx = Ctx { family, data: &data, xi_star: data.xi_star(), blocks: &blocks };

    let glm_opts = GlmOptions::default();
    let pen_opts = PenalizedOptions::default();
    let t0 = Instant::now();
    let naive = fit_glm(family, &data.x, &data.y, None, &glm_opts);
    let naive_ms = ms(t0);

    let mut outcomes = Vec::new();
    for &method in &s.methods {
        match method {
            Method::Naive => outcomes.push(match &naive {
                Ok(f) => ctx.outcome(method, None, None, &f.beta, None, f.converged, f.iterations, naive_ms),
                Err(e) => MethodOutcome::failed(method, None, None, e.to_string()),
            }),
            Method::Oracle => {
                let t = Instant::now();
                outcomes.push(match fit_glm(family, &data.x, &data.y_star, None, &glm_opts) {
                    Ok(f) => ctx.outcome(method, None, None, &f.beta, None, f.converged, f.iterations, ms(t)),
                    Err(e) => MethodOutcome::failed(method, None, None, e.to_string()),
                });
            }
            Method::Proposed | Method::Constrained => {
                for (&c, &lam) in s.prefactors.iter().zip(&grid) {
                    let Ok(nf) = &naive else {
                        outcomes.push(MethodOutcome::failed(method, Some(c), Some(lam), "naive fit failed".into()));
                        continue;
                    };
                    let t = Instant::now();
                    let fit = if method == Method::Proposed {
                        fit_penalized_from(family, &data.x, &data.y, lam, &nf.beta, &pen_opts)
                    } else {
                        fit_penalized_constrained_from(family, &data.x, &data.y, lam, &blocks, &nf.beta, &pen_opts)
                    };
                    outcomes.push(match fit {
                        Ok(f) => ctx.penalized_outcome(method, c, &f, ms(t)),
                        Err(e) => MethodOutcome::failed(method, Some(c), Some(lam), e.to_string()),
                    });
                }
            }
            Method::Ll | Method::Chambers => {
                let t = Instant::now();
                let fit = if method == Method::Ll {
                    fit_ll(family, &data.x, &data.y, &blocks, &NewtonOptions::default())
                } else {
                    fit_chambers(family, &data.x, &data.y, &blocks, None, &NewtonOptions::default())
                };
                outcomes.push(match fit {
                    Ok(f) => ctx.equation_outcome(method, &f, ms(t)),
                    Err(e) => MethodOutcome::failed(method, None, None, e.to_string()),
                });
            }
        }
    }
    let mismatches = data.pi_star.iter().enumerate().filter(|(i, &j)| *i != j).count();
    Ok(ReplicationResult { replication: rep, mismatches, sigma_y, lambda_base: base, outcomes })
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

struct Ctx<'a> {
    family: &'a Family,
    data: &'a SimulatedData,
    xi_star: DVector<f64>,
    blocks: &'a BlockPartition,
}

impl Ctx<'_> {
    #[allow(clippy::too_many_arguments)]
    fn outcome(
        &self,
        method: Method,
        prefactor: Option<f64>,
        lambda: Option<f64>,
        beta: &DVector<f64>,
        xi: Option<&DVector<f64>>,
        converged: bool,
        iterations: usize,
        runtime: f64,
    ) -> MethodOutcome {
        let d = self.data;
        let beta_err = (beta - &d.beta_star).norm();
        let xi_err = match xi {
            Some(x) => (x - &self.xi_star).norm(),
            None => self.xi_star.norm(),
        };
        let mu_star = (&d.x * &d.beta_star).map(|e| self.family.mean_unchecked(e));
        let mu_hat = (&d.x * beta).map(|e| self.family.clamp_mean(self.family.mean_unchecked(e)).0);
        let deviance = deviance_between_means(self.family, &mu_star, &mu_hat).ok();
        let hamming = recover_permutation(&d.x, &d.y, beta, Some(self.blocks))
            .ok()
            .map(|p| hamming_distance(&p.pi_hat, &d.pi_star));
        MethodOutcome {
            method,
            prefactor,
            lambda,
            beta_error: Some(beta_err),
            theta_error: Some(beta_err.hypot(xi_err)),
            deviance,
            hamming,
            converged,
            iterations,
            nonzero_offsets: xi.map_or(0, |x| x.iter().filter(|v| **v != 0.0).count()),
            runtime_ms: Some(runtime),
            note: None,
        }
    }

    fn penalized_outcome(&self, method: Method, c: f64, f: &PenalizedFit, runtime: f64) -> MethodOutcome {
        self.outcome(method, Some(c), Some(f.lambda), &f.beta, Some(&f.xi), f.converged, f.iterations, runtime)
    }

    fn equation_outcome(&self, method: Method, f: &EstimatingEquationFit, runtime: f64) -> MethodOutcome {
        if !f.converged {
            let mut o = MethodOutcome::failed(method, None, None, format!("{:?}", f.status));
            o.iterations = f.newton_iterations;
            o.runtime_ms = Some(runtime);
            return o;
        }
        let mut o = self.outcome(method, None, None, &f.beta, None, true, f.newton_iterations, runtime);
        if f.worse_than_null {
            o.note = Some("deviance exceeds the intercept-only model".into());
        }
        o
    }
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let (mut va, mut vb) = (0.0, 0.0);
    for i in 0..a.len() {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma).powi(2);
        vb += (rb[i] - mb).powi(2);
    }
    cov / (va * vb).sqrt()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

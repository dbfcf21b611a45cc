//! The four subcommands. Each returns its records and summary; the caller writes them.

use std::collections::BTreeMap;

use linkreg::baselines::{fit_chambers, fit_ll, EstimatingEquationFit, NewtonOptions};
use linkreg::estimators::{fit_penalized_constrained_from, fit_penalized_from};
use linkreg::matching::{correspondence_l2, hamming_distance, recover_permutation};
use linkreg::simlab::{
    lambda_base, replication_rng, run_replications, sigma_y_data, to_records, write_ndtext, Method, Record,
};
use linkreg::{fit_glm, BlockPartition, Family, GlmFit, GlmOptions, MergedDataset, PenalizedFit, PenalizedOptions};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{field, LambdaSpec, RunConfig};
use crate::ingest::{ingest_csv, Ingested};
use crate::output::{mean_se, ndtext, num, opt, Tsv};
use crate::pipeline::{
    complement, deviance_on, inject_mismatch, inject_mismatch_with, numeric, select_entries, select_lambda_validation,
    select_rows, validation_rows, LambdaSelection,
};
use crate::{CliError, SCHEMA_VERSION};

/// What a command produced, before it is written out.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub records: String,
    pub summary: Tsv,
    /// Additional `(file name, contents)` pairs.
    pub extra: Vec<(String, String)>,
}

// ---------------------------------------------------------------- simulate

pub fn simulate(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let s = cfg.simulate.as_ref().ok_or_else(|| field("simulate", "missing"))?;
    let results = run_replications(s).map_err(|e| match e {
        linkreg::Error::InvalidInput(m) => CliError::Config(format!("simulate.{m}")),
        other => CliError::Numeric(other.to_string()),
    })?;
    let records = to_records(&results, &s.prefactors, cfg.output.runtime);
    Ok(Artifacts { records: write_ndtext(&records), summary: simulate_summary(&records), extra: Vec::new() })
}

fn simulate_summary(records: &[Record]) -> Tsv {
    let mut t = Tsv::new(&[
        "method",
        "prefactor",
        "mean_lambda",
        "replications",
        "mean_beta_error",
        "se_beta_error",
        "mean_theta_error",
        "se_theta_error",
        "mean_deviance",
        "mean_hamming",
        "converged_fraction",
        "mean_mismatches",
    ]);
    let mut groups: BTreeMap<(Method, u64), Vec<&Record>> = BTreeMap::new();
    let mut order: Vec<(Method, u64)> = Vec::new();
    let mut seen_free: Vec<(usize, Method)> = Vec::new();
    for r in records {
        if r.lambda_free {
            if seen_free.contains(&(r.replication, r.method)) {
                continue;
            }
            seen_free.push((r.replication, r.method));
        }
        let key = (r.method, if r.lambda_free { u64::MAX } else { r.prefactor.to_bits() });
        if !groups.contains_key(&key) {
            order.push(key);
        }
        groups.entry(key).or_default().push(r);
    }
    for key in order {
        let g = &groups[&key];
        let (be, be_se, _) = mean_se(g.iter().map(|r| r.beta_error));
        let (te, te_se, _) = mean_se(g.iter().map(|r| r.theta_error));
        let (dev, _, _) = mean_se(g.iter().map(|r| r.deviance));
        let (ham, _, _) = mean_se(g.iter().map(|r| r.hamming));
        let (lam, _, _) = mean_se(g.iter().map(|r| Some(r.lambda)));
        let k = g.len() as f64;
        let conv = g.iter().filter(|r| r.converged).count() as f64 / k;
        let moved = g.iter().map(|r| r.mismatches as f64).sum::<f64>() / k;
        t.push(vec![
            key.0.name().to_string(),
            if g[0].lambda_free { "NA".into() } else { num(g[0].prefactor) },
            if g[0].lambda_free { "NA".into() } else { opt(lam) },
            g.len().to_string(),
            opt(be),
            opt(be_se),
            opt(te),
            opt(te_se),
            opt(dev),
            opt(ham),
            num(conv),
            num(moved),
        ]);
    }
    t
}

// ---------------------------------------------------------------- shared

struct Prepared {
    family: Family,
    ingested: Ingested,
    data: MergedDataset,
}

fn prepare(cfg: &RunConfig) -> Result<Prepared, CliError> {
    let family = *cfg.family()?;
    let dc = cfg.data()?;
    let ingested = ingest_csv(&dc.path, dc, &family)?;
    let data = if dc.inject_mismatch {
        inject_mismatch(&ingested.dataset, &ingested.blocks, cfg.seed())?.0
    } else {
        ingested.dataset.clone()
    };
    Ok(Prepared { family, ingested, data })
}

fn free_terms(terms: &[String]) -> usize {
    terms.iter().filter(|t| *t != "(intercept)").count()
}

/// `(prefactor, λ)` pairs for the penalized methods.
fn lambda_grid(cfg: &RunConfig, family: &Family, y: &DVector<f64>, d: usize) -> Vec<(Option<f64>, f64)> {
    match cfg.method.lambda_spec() {
        LambdaSpec::Fixed(ls) => ls.into_iter().map(|l| (None, l)).collect(),
        LambdaSpec::Prefactors(cs) => {
            let base = lambda_base(sigma_y_data(family, y), y.len(), d);
            cs.into_iter().map(|c| (Some(c), c * base)).collect()
        }
    }
}

fn penalized_fit(
    family: &Family,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    blocks: Option<&BlockPartition>,
    start: &DVector<f64>,
) -> linkreg::Result<PenalizedFit> {
    let opts = PenalizedOptions::default();
    match blocks {
        Some(b) => fit_penalized_constrained_from(family, x, y, lambda, b, start, &opts),
        None => fit_penalized_from(family, x, y, lambda, start, &opts),
    }
}

fn equation_fit(
    method: Method,
    family: &Family,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    blocks: &BlockPartition,
) -> linkreg::Result<EstimatingEquationFit> {
    let opts = NewtonOptions::default();
    if method == Method::Ll {
        fit_ll(family, x, y, blocks, &opts)
    } else {
        fit_chambers(family, x, y, blocks, None, &opts)
    }
}

/// Validation rows (mismatch-free responses) and training rows.
struct Split {
    train: Vec<usize>,
    x_val: DMatrix<f64>,
    y_val: DVector<f64>,
}

fn split(data: &MergedDataset, blocks: &BlockPartition, fraction: f64, rng: &mut impl rand::Rng) -> Result<Split, CliError> {
    let rows = validation_rows(blocks, fraction, rng);
    let train = complement(data.n(), &rows);
    if train.len() < data.d() || rows.is_empty() {
        return Err(CliError::Config("method.validation_fraction: leaves too few training or validation rows".into()));
    }
    let y_true = data.truth.as_ref().map_or(&data.y, |t| &t.y_star);
    Ok(Split { x_val: select_rows(&data.x, &rows), y_val: select_entries(y_true, &rows), train })
}

fn select(
    family: &Family,
    data: &MergedDataset,
    s: &Split,
    grid: &[f64],
    blocks: Option<&BlockPartition>,
) -> Result<LambdaSelection, CliError> {
    let xt = select_rows(&data.x, &s.train);
    let yt = select_entries(&data.y, &s.train);
    let bt = blocks.map(|b| b.restrict(&s.train));
    select_lambda_validation(family, (&xt, &yt), (&s.x_val, &s.y_val), grid, bt.as_ref(), &PenalizedOptions::default())
}

// ---------------------------------------------------------------- fit

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitRecord {
    pub schema_version: u32,
    pub method: Method,
    pub prefactor: Option<f64>,
    pub lambda: Option<f64>,
    /// Chosen by validation among the grid; `None` when no choice was made.
    pub selected: Option<bool>,
    pub validation_deviance: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub nonzero_offsets: Option<usize>,
    /// Deviance of `β̂` on the merged responses.
    pub deviance_merged: Option<f64>,
    /// Deviance of `β̂` on the correctly linked responses, when known.
    pub deviance_true: Option<f64>,
    pub beta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl FitRecord {
    fn new(method: Method, beta: &DVector<f64>, converged: bool, iterations: usize) -> Self {
        FitRecord {
            schema_version: SCHEMA_VERSION,
            method,
            prefactor: None,
            lambda: None,
            selected: None,
            validation_deviance: None,
            converged,
            iterations,
            nonzero_offsets: None,
            deviance_merged: None,
            deviance_true: None,
            beta: beta.iter().copied().collect(),
            note: None,
        }
    }
}

pub fn fit(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let p = prepare(cfg)?;
    let (family, data) = (&p.family, &p.data);
    let (x, y) = (&data.x, &data.y);
    let blocks = &p.ingested.blocks;
    let y_true = data.truth.as_ref().map(|t| &t.y_star);
    let naive = fit_glm(family, x, y, None, &GlmOptions::default()).map_err(numeric)?;
    let grid = lambda_grid(cfg, family, y, free_terms(&p.ingested.terms));
    let lambdas: Vec<f64> = grid.iter().map(|g| g.1).collect();
    let validate = cfg.method.validation_fraction > 0.0 && grid.len() > 1;
    let split = if validate {
        Some(split(data, blocks, cfg.method.validation_fraction, &mut replication_rng(cfg.seed(), 1))?)
    } else {
        None
    };

    let finish = |mut r: FitRecord, beta: &DVector<f64>| -> FitRecord {
        r.deviance_merged = deviance_on(family, x, y, beta).ok();
        r.deviance_true = y_true.and_then(|yt| deviance_on(family, x, yt, beta).ok());
        r
    };
    let mut out: Vec<FitRecord> = Vec::new();
    for &method in &cfg.method.methods {
        match method {
            Method::Naive => out.push(finish(FitRecord::new(method, &naive.beta, naive.converged, naive.iterations), &naive.beta)),
            Method::Oracle => {
                let yt = y_true.ok_or_else(|| field("method.methods", "`oracle` needs ground truth; set data.inject_mismatch"))?;
                let f = fit_glm(family, x, yt, None, &GlmOptions::default()).map_err(numeric)?;
                out.push(finish(FitRecord::new(method, &f.beta, f.converged, f.iterations), &f.beta));
            }
            Method::Proposed | Method::Constrained => {
                let b = (method == Method::Constrained).then_some(blocks);
                let sel = match &split {
                    Some(s) => Some(select(family, data, s, &lambdas, b)?),
                    None => None,
                };
                for (k, &(c, lam)) in grid.iter().enumerate() {
                    let f = penalized_fit(family, x, y, lam, b, &naive.beta).map_err(numeric)?;
                    let mut r = FitRecord::new(method, &f.beta, f.converged, f.iterations);
                    r.prefactor = c;
                    r.lambda = Some(lam);
                    r.nonzero_offsets = Some(f.support().len());
                    if let Some(s) = &sel {
                        r.selected = Some(s.index == k);
                        r.validation_deviance = s.deviances[k];
                    }
                    out.push(finish(r, &f.beta));
                }
            }
            Method::Ll | Method::Chambers => {
                let f = equation_fit(method, family, x, y, blocks).map_err(numeric)?;
                let mut r = FitRecord::new(method, &f.beta, f.converged, f.newton_iterations);
                if !f.is_usable() {
                    r.note = Some(if f.converged {
                        "deviance exceeds the intercept-only model".into()
                    } else {
                        format!("{:?}", f.status)
                    });
                }
                out.push(finish(r, &f.beta));
            }
        }
    }

    let mut cols: Vec<String> = [
        "method",
        "prefactor",
        "lambda",
        "selected",
        "converged",
        "iterations",
        "nonzero_offsets",
        "deviance_merged",
        "deviance_true",
        "validation_deviance",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    cols.extend(p.ingested.terms.iter().cloned());
    let mut t = Tsv::new(&cols);
    for r in &out {
        let mut row = vec![
            r.method.name().to_string(),
            opt(r.prefactor),
            opt(r.lambda),
            r.selected.map_or("NA".into(), |b| b.to_string()),
            r.converged.to_string(),
            r.iterations.to_string(),
            r.nonzero_offsets.map_or("NA".into(), |v| v.to_string()),
            opt(r.deviance_merged),
            opt(r.deviance_true),
            opt(r.validation_deviance),
        ];
        row.extend(r.beta.iter().map(|&b| num(b)));
        t.push(row);
    }
    Ok(Artifacts { records: ndtext(&out), summary: t, extra: Vec::new() })
}

// ---------------------------------------------------------------- recover

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverRecord {
    pub schema_version: u32,
    pub method: Method,
    pub lambda: f64,
    pub blocks: usize,
    /// Rows whose response the sorting step reassigns.
    pub rows_moved: usize,
    pub mismatches_true: Option<usize>,
    /// Fraction of rows where the recovered map differs from the true one.
    pub hamming_to_truth: Option<f64>,
    pub l2_before: Option<f64>,
    pub l2_after: Option<f64>,
    pub beta: Vec<f64>,
    pub refit_beta: Option<Vec<f64>>,
    pub refit_deviance_true: Option<f64>,
}

pub fn recover(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let rc = cfg.recover.clone().unwrap_or_default();
    let p = prepare(cfg)?;
    let (family, data) = (&p.family, &p.data);
    let (x, y) = (&data.x, &data.y);
    let blocks = &p.ingested.blocks;
    let b = (rc.method == Method::Constrained).then_some(blocks);
    let grid = lambda_grid(cfg, family, y, free_terms(&p.ingested.terms));
    let lambda = if grid.len() == 1 {
        grid[0].1
    } else if cfg.method.validation_fraction > 0.0 {
        let s = split(data, blocks, cfg.method.validation_fraction, &mut replication_rng(cfg.seed(), 1))?;
        let lambdas: Vec<f64> = grid.iter().map(|g| g.1).collect();
        select(family, data, &s, &lambdas, b)?.lambda
    } else {
        return Err(field("method.validation_fraction", "must be positive to pick one λ from a grid; or set method.lambda"));
    };
    let naive = fit_glm(family, x, y, None, &GlmOptions::default()).map_err(numeric)?;
    let f = penalized_fit(family, x, y, lambda, b, &naive.beta).map_err(numeric)?;
    let est = recover_permutation(x, y, &f.beta, Some(blocks)).map_err(numeric)?;
    let refit: Option<GlmFit> =
        if rc.refit { Some(fit_glm(family, x, &est.corrected_y, None, &GlmOptions::default()).map_err(numeric)?) } else { None };
    let truth = data.truth.as_ref();
    let rec = RecoverRecord {
        schema_version: SCHEMA_VERSION,
        method: rc.method,
        lambda,
        blocks: blocks.len(),
        rows_moved: est.pi_hat.iter().enumerate().filter(|(i, &j)| *i != j).count(),
        mismatches_true: truth.map(|t| t.pi_star.iter().enumerate().filter(|(i, &j)| *i != j).count()),
        hamming_to_truth: truth.map(|t| hamming_distance(&est.pi_hat, &t.pi_star)),
        l2_before: truth.map(|t| correspondence_l2(y, &t.y_star)),
        l2_after: truth.map(|t| correspondence_l2(&est.corrected_y, &t.y_star)),
        beta: f.beta.iter().copied().collect(),
        refit_beta: refit.as_ref().map(|r| r.beta.iter().copied().collect()),
        refit_deviance_true: match (truth, &refit) {
            (Some(t), Some(r)) => deviance_on(family, x, &t.y_star, &r.beta).ok(),
            _ => None,
        },
    };

    let mut t = Tsv::new(&["method", "lambda", "blocks", "rows_moved", "mismatches_true", "hamming_to_truth", "l2_before", "l2_after"]);
    t.push(vec![
        rec.method.name().into(),
        num(rec.lambda),
        rec.blocks.to_string(),
        rec.rows_moved.to_string(),
        rec.mismatches_true.map_or("NA".into(), |v| v.to_string()),
        opt(rec.hamming_to_truth),
        opt(rec.l2_before),
        opt(rec.l2_after),
    ]);
    let mut corrected = String::from("line\ty\tcorrected_y\tunit\n");
    for i in 0..y.len() {
        corrected.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            p.ingested.table.lines[i], y[i], est.corrected_y[i], est.pi_hat[i]
        ));
    }
    Ok(Artifacts { records: ndtext(&[rec]), summary: t, extra: vec![("corrected.tsv".into(), corrected)] })
}

// ---------------------------------------------------------------- casestudy

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseRecord {
    pub schema_version: u32,
    pub replication: usize,
    pub method: String,
    /// Index into `casestudy.blocking_sets`; `None` for methods that ignore blocks.
    pub blocking: Option<usize>,
    pub blocks: Option<usize>,
    pub mismatch_fraction: f64,
    pub lambda: Option<f64>,
    /// Deviance of `β̂` on the correctly linked file.
    pub deviance: Option<f64>,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Method labels emitted by `casestudy`.
pub const CASE_METHODS: [&str; 9] = [
    "oracle",
    "intercept_only",
    "naive",
    "proposed_oracle",
    "proposed_validation",
    "ll",
    "chambers",
    "constrained_oracle",
    "constrained_validation",
];

pub fn casestudy(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let cs = cfg.casestudy.as_ref().ok_or_else(|| field("casestudy", "missing"))?;
    let family = *cfg.family()?;
    let dc = cfg.data()?;
    let ing = ingest_csv(&dc.path, dc, &family)?;
    let partitions: Vec<BlockPartition> =
        cs.blocking_sets.iter().map(|s| ing.table.blocks(s)).collect::<Result<_, _>>()?;
    let clean = &ing.dataset;
    let (x, y_star) = (&clean.x, &clean.y);
    let n = clean.n();
    let grid: Vec<f64> = {
        let base = lambda_base(sigma_y_data(&family, y_star), n, free_terms(&ing.terms));
        cs.prefactors.iter().map(|c| c * base).collect()
    };
    let glm = GlmOptions::default();
    let oracle = fit_glm(&family, x, y_star, None, &glm).map_err(numeric)?;
    let oracle_dev = deviance_on(&family, x, y_star, &oracle.beta)?;
    let ones = DMatrix::from_element(n, 1, 1.0);
    let null = fit_glm(&family, &ones, y_star, None, &glm).map_err(numeric)?;
    let null_dev = deviance_on(&family, &ones, y_star, &null.beta)?;

    let per_rep: Vec<Vec<CaseRecord>> = (0..cs.replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replication_rng(cfg.seed(), rep);
            let (merged, frac) = inject_mismatch_with(clean, &partitions[0], &mut rng)?;
            let sp = split(&merged, &partitions[0], cs.validation_fraction, &mut rng)?;
            Ok(case_replication(&family, &merged, frac, &sp, &partitions, &grid, rep, (oracle_dev, null_dev)))
        })
        .collect::<Result<_, CliError>>()?;
    let records: Vec<CaseRecord> = per_rep.into_iter().flatten().collect();

    let mut t = Tsv::new(&[
        "method",
        "blocking",
        "columns",
        "blocks",
        "n",
        "replications",
        "available",
        "mean_mismatch_fraction",
        "mean_deviance",
        "se_deviance",
    ]);
    let mut keys: Vec<(String, Option<usize>)> = Vec::new();
    for r in &records {
        let k = (r.method.clone(), r.blocking);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    for (m, b) in keys {
        let g: Vec<&CaseRecord> = records.iter().filter(|r| r.method == m && r.blocking == b).collect();
        let (dev, se, avail) = mean_se(g.iter().map(|r| r.deviance));
        let (frac, _, _) = mean_se(g.iter().map(|r| Some(r.mismatch_fraction)));
        t.push(vec![
            m,
            b.map_or("NA".into(), |j| j.to_string()),
            b.map_or("NA".into(), |j| cs.blocking_sets[j].join("+")),
            b.map_or("NA".into(), |j| partitions[j].len().to_string()),
            n.to_string(),
            g.len().to_string(),
            avail.to_string(),
            opt(frac),
            opt(dev),
            opt(se),
        ]);
    }
    Ok(Artifacts { records: ndtext(&records), summary: t, extra: Vec::new() })
}

#[allow(clippy::too_many_arguments)]
fn case_replication(
    family: &Family,
    merged: &MergedDataset,
    frac: f64,
    sp: &Split,
    partitions: &[BlockPartition],
    grid: &[f64],
    rep: usize,
    (oracle_dev, null_dev): (f64, f64),
) -> Vec<CaseRecord> {
    let (x, y) = (&merged.x, &merged.y);
    let y_star = &merged.truth.as_ref().expect("injected data carries truth").y_star;
    let rec = |method: &str, blocking: Option<usize>, lambda: Option<f64>, deviance: Option<f64>, converged: bool, note: Option<String>| {
        CaseRecord {
            schema_version: SCHEMA_VERSION,
            replication: rep,
            method: method.to_string(),
            blocking,
            blocks: blocking.map(|j| partitions[j].len()),
            mismatch_fraction: frac,
            lambda,
            deviance,
            converged,
            note,
        }
    };
    let dev = |beta: &DVector<f64>| deviance_on(family, x, y_star, beta).ok();
    let mut out = vec![
        rec("oracle", None, None, Some(oracle_dev), true, None),
        rec("intercept_only", None, None, Some(null_dev), true, None),
    ];
    let naive = match fit_glm(family, x, y, None, &GlmOptions::default()) {
        Ok(f) => f,
        Err(e) => {
            out.push(rec("naive", None, None, None, false, Some(e.to_string())));
            return out;
        }
    };
    out.push(rec("naive", None, None, dev(&naive.beta), naive.converged, None));

    // λ path on the full merged file, then oracle and validation choices along it.
    let mut path = |label: &str, blocking: Option<usize>| {
        let b = blocking.map(|j| &partitions[j]);
        let fits: Vec<Option<(f64, bool)>> = grid
            .iter()
            .map(|&lam| penalized_fit(family, x, y, lam, b, &naive.beta).ok().and_then(|f| dev(&f.beta).map(|d| (d, f.converged))))
            .collect();
        let best = fits
            .iter()
            .enumerate()
            .filter_map(|(k, f)| f.map(|(d, _)| (k, d)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
        match best {
            Some((k, d)) => out.push(rec(&format!("{label}_oracle"), blocking, Some(grid[k]), Some(d), fits[k].unwrap().1, None)),
            None => out.push(rec(&format!("{label}_oracle"), blocking, None, None, false, Some("every fit failed".into()))),
        }
        let chosen = {
            let xt = select_rows(x, &sp.train);
            let yt = select_entries(y, &sp.train);
            let bt = b.map(|p| p.restrict(&sp.train));
            select_lambda_validation(family, (&xt, &yt), (&sp.x_val, &sp.y_val), grid, bt.as_ref(), &PenalizedOptions::default())
        };
        match chosen {
            Ok(s) => {
                let f = fits[s.index];
                out.push(rec(
                    &format!("{label}_validation"),
                    blocking,
                    Some(s.lambda),
                    f.map(|v| v.0),
                    f.is_some_and(|v| v.1),
                    None,
                ))
            }
            Err(e) => out.push(rec(&format!("{label}_validation"), blocking, None, None, false, Some(e.to_string()))),
        }
    };
    path("proposed", None);
    for j in 0..partitions.len() {
        path("constrained", Some(j));
    }
    for (j, part) in partitions.iter().enumerate() {
        for method in [Method::Ll, Method::Chambers] {
            let label = method.name();
            match equation_fit(method, family, x, y, part) {
                Ok(f) if f.is_usable() => out.push(rec(label, Some(j), None, dev(&f.beta), true, None)),
                Ok(f) => {
                    let why = if f.converged { "deviance exceeds the intercept-only model".into() } else { format!("{:?}", f.status) };
                    out.push(rec(label, Some(j), None, None, false, Some(why)))
                }
                Err(e) => out.push(rec(label, Some(j), None, None, false, Some(e.to_string()))),
            }
        }
    }
    out
}

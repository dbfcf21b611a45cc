//! Delimited text to design matrix, response and blocks.

use std::collections::HashMap;
use std::path::Path;

use linkreg::{BlockPartition, Family, MergedDataset};
use nalgebra::{DMatrix, DVector};

use crate::config::{DataConfig, FilterOp, Transform};
use crate::CliError;

/// The raw table after derived columns and filters.
#[derive(Debug, Clone)]
pub struct Table {
    pub header: Vec<String>,
    /// Cell text, row-major.
    pub rows: Vec<Vec<String>>,
    /// 1-based line number of each row in the source file.
    pub lines: Vec<usize>,
}

impl Table {
    pub fn column(&self, name: &str) -> Result<usize, CliError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Data(format!("column `{name}` not found; header has {:?}", self.header)))
    }

    pub fn numeric(&self, name: &str) -> Result<Vec<f64>, CliError> {
        let j = self.column(name)?;
        self.rows
            .iter()
            .zip(&self.lines)
            .map(|(r, &line)| parse_cell(&r[j], name, line))
            .collect()
    }

    /// Equivalence classes of equal values in `columns`; one block if empty.
    pub fn blocks(&self, columns: &[String]) -> Result<BlockPartition, CliError> {
        if self.rows.is_empty() {
            return Err(CliError::Data("no rows to block".into()));
        }
        if columns.is_empty() {
            return Ok(BlockPartition::single(self.rows.len()));
        }
        let idx: Vec<usize> = columns.iter().map(|c| self.column(c)).collect::<Result<_, _>>()?;
        let keys: Vec<Vec<&str>> = self.rows.iter().map(|r| idx.iter().map(|&j| r[j].trim()).collect()).collect();
        Ok(BlockPartition::from_keys(&keys))
    }
}

fn parse_cell(cell: &str, column: &str, line: usize) -> Result<f64, CliError> {
    let t = cell.trim();
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(CliError::Data(format!("row {line}, column `{column}`: cannot parse `{t}` as a number"))),
    }
}

/// Everything the estimators need from one file.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub dataset: MergedDataset,
    pub blocks: BlockPartition,
    /// Names of the design columns, intercept first when present.
    pub terms: Vec<String>,
    pub table: Table,
}

pub fn read_table(path: &Path, delimiter: char) -> Result<Table, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    read_table_from(file, delimiter)
}

pub fn read_table_from<R: std::io::Read>(reader: R, delimiter: char) -> Result<Table, CliError> {
    if !delimiter.is_ascii() {
        return Err(CliError::Config("data.delimiter: must be a single ASCII character".into()));
    }
    let mut rdr = csv::ReaderBuilder::new().delimiter(delimiter as u8).has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::Data(format!("cannot read header: {e}")))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.iter().all(|h| h.is_empty()) {
        return Err(CliError::Data("header row is empty".into()));
    }
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Data(format!("row {}: {e}", k + 2)))?;
        let line = rec.position().map_or(k + 2, |p| p.line() as usize);
        rows.push(rec.iter().map(str::to_string).collect());
        lines.push(line);
    }
    Ok(Table { header, rows, lines })
}

fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

fn apply_derived(table: &mut Table, cfg: &DataConfig) -> Result<(), CliError> {
    for d in &cfg.derived {
        if table.header.contains(&d.name) {
            return Err(CliError::Config(format!("data.derived: `{}` already exists", d.name)));
        }
        let src = table.numeric(&d.column)?;
        for (row, v) in table.rows.iter_mut().zip(src) {
            let mut x = d.scale * v;
            if d.round {
                x = x.round();
            }
            row.push(fmt_num(x));
        }
        table.header.push(d.name.clone());
    }
    Ok(())
}

fn apply_filters(table: &mut Table, cfg: &DataConfig) -> Result<(), CliError> {
    for f in &cfg.filters {
        let j = table.column(&f.column)?;
        let mut keep = Vec::with_capacity(table.rows.len());
        for (row, &line) in table.rows.iter().zip(&table.lines) {
            let cell = row[j].trim();
            let ok = match f.op {
                FilterOp::In => f.values.iter().any(|v| v == cell),
                FilterOp::NotIn => !f.values.iter().any(|v| v == cell),
                op => {
                    let x = parse_cell(cell, &f.column, line)?;
                    let v = f.value.unwrap_or(f64::NAN);
                    match op {
                        FilterOp::Eq => x == v,
                        FilterOp::Ne => x != v,
                        FilterOp::Lt => x < v,
                        FilterOp::Le => x <= v,
                        FilterOp::Gt => x > v,
                        FilterOp::Ge => x >= v,
                        FilterOp::In | FilterOp::NotIn => unreachable!(),
                    }
                }
            };
            keep.push(ok);
        }
        let mut it = keep.iter();
        table.rows.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        table.lines.retain(|_| *it.next().unwrap());
    }
    if table.rows.is_empty() {
        return Err(CliError::Data("no rows left after filters".into()));
    }
    Ok(())
}

/// Sorted distinct levels; numeric order when every level parses as a number.
fn levels(table: &Table, column: &str) -> Result<Vec<String>, CliError> {
    let j = table.column(column)?;
    let mut lv: Vec<String> = table.rows.iter().map(|r| r[j].trim().to_string()).collect();
    lv.sort();
    lv.dedup();
    if lv.iter().all(|l| l.parse::<f64>().is_ok()) {
        lv.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
    }
    Ok(lv)
}

type Term = (String, Vec<f64>);

fn build_terms(table: &Table, cfg: &DataConfig) -> Result<Vec<Term>, CliError> {
    let n = table.rows.len();
    let mut terms: Vec<Term> = Vec::new();
    // Term groups addressable by interactions.
    let mut groups: HashMap<String, Vec<usize>> = HashMap::new();
    let push = |terms: &mut Vec<Term>, groups: &mut HashMap<String, Vec<usize>>, key: &str, t: Term| {
        groups.entry(key.to_string()).or_default().push(terms.len());
        if t.0 != key {
            groups.entry(t.0.clone()).or_default().push(terms.len());
        }
        terms.push(t);
    };

    for c in &cfg.covariates {
        let v = table.numeric(c)?;
        push(&mut terms, &mut groups, c, (c.clone(), v));
    }
    for (i, cat) in cfg.categorical.iter().enumerate() {
        let j = table.column(&cat.column)?;
        let lv = levels(table, &cat.column)?;
        let reference = match &cat.reference {
            Some(r) if lv.contains(r) => r.clone(),
            Some(r) => {
                return Err(CliError::Config(format!(
                    "data.categorical[{i}].reference: level `{r}` does not occur in `{}`",
                    cat.column
                )))
            }
            None => lv[0].clone(),
        };
        for l in lv.iter().filter(|l| **l != reference) {
            let v = table.rows.iter().map(|r| f64::from(u8::from(r[j].trim() == l))).collect();
            push(&mut terms, &mut groups, &cat.column, (format!("{}={l}", cat.column), v));
        }
    }
    for ind in &cfg.indicators {
        let j = table.column(&ind.column)?;
        let v = table.rows.iter().map(|r| f64::from(u8::from(ind.levels.iter().any(|l| l == r[j].trim())))).collect();
        push(&mut terms, &mut groups, &ind.name, (ind.name.clone(), v));
    }
    for (i, [a, b]) in cfg.interactions.iter().enumerate() {
        let lookup = |name: &str| -> Result<Vec<usize>, CliError> {
            groups.get(name).cloned().ok_or_else(|| {
                CliError::Config(format!("data.interactions[{i}]: `{name}` is not a declared term or categorical column"))
            })
        };
        let (ga, gb) = (lookup(a)?, lookup(b)?);
        for &p in &ga {
            for &q in &gb {
                let v: Vec<f64> = (0..n).map(|r| terms[p].1[r] * terms[q].1[r]).collect();
                terms.push((format!("{}:{}", terms[p].0, terms[q].0), v));
            }
        }
    }
    Ok(terms)
}

/// Read, derive, filter, expand and block.
pub fn ingest_csv(path: &Path, cfg: &DataConfig, family: &Family) -> Result<Ingested, CliError> {
    let table = read_table(path, cfg.delimiter)?;
    ingest_table(table, cfg, family)
}

pub fn ingest_table(mut table: Table, cfg: &DataConfig, family: &Family) -> Result<Ingested, CliError> {
    apply_derived(&mut table, cfg)?;
    apply_filters(&mut table, cfg)?;
    let mut y = table.numeric(&cfg.response)?;
    if cfg.transform == Transform::Sqrt {
        for (v, &line) in y.iter_mut().zip(&table.lines) {
            if *v < 0.0 {
                return Err(CliError::Data(format!("row {line}: negative response {v} under sqrt transform")));
            }
            *v = v.sqrt();
        }
    }
    for (&v, &line) in y.iter().zip(&table.lines) {
        if !family.in_support(v) {
            return Err(CliError::Data(format!("row {line}: response {v} is outside the family's support")));
        }
    }
    let terms = build_terms(&table, cfg)?;
    let n = table.rows.len();
    let mut names = Vec::new();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    if cfg.intercept {
        names.push("(intercept)".to_string());
        cols.push(vec![1.0; n]);
    }
    for (name, v) in terms {
        names.push(name);
        cols.push(v);
    }
    let x = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
    let blocks = table.blocks(&cfg.blocking)?;
    let dataset = MergedDataset::new(family, x, DVector::from_vec(y)).map_err(|e| CliError::Data(e.to_string()))?;
    Ok(Ingested { dataset, blocks, terms: names, table })
}

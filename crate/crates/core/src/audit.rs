//! Audit pipeline: load data, classify the graph around the sensitive and
//! outcome variables, and compute every applicable bias two ways.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::closed_forms::{
    self, BinaryParams, BiasBreakdown, ConcurrentSpec, ErrorMechanism, MeasurementParams, Target,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::{CausalGraph, Role, StructureTags};
use crate::linear::{self, Convention, CovMatrix, InteractionLinearSpec, PathModel, PathStructure};
use crate::scm::{
    self, BinaryInteractionSpec, BinaryMeasurementSpec, BinaryNetwork, ScmSpec, Structure, SweepConfig,
};
use crate::table::JointTable;

/// Version of the report and sweep file formats.
pub const FORMAT_VERSION: &str = "1";

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasKind {
    Conf,
    Sel,
    Meas,
    Int,
}

impl std::str::FromStr for BiasKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "conf" => Ok(BiasKind::Conf),
            "sel" => Ok(BiasKind::Sel),
            "meas" => Ok(BiasKind::Meas),
            "int" => Ok(BiasKind::Int),
            other => Err(Error::InvalidQuery(format!(
                "unknown bias `{other}`; expected conf, sel, meas or int"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasSelection {
    Auto,
    Explicit(Vec<BiasKind>),
}

impl std::str::FromStr for BiasSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim() == "auto" {
            return Ok(BiasSelection::Auto);
        }
        let mut kinds = s.split(',').map(str::parse).collect::<Result<Vec<BiasKind>>>()?;
        kinds.sort();
        kinds.dedup();
        Ok(BiasSelection::Explicit(kinds))
    }
}

/// Adjust for each confounder separately or for all of them jointly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjustMode {
    Each,
    All,
}

impl std::str::FromStr for AdjustMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "each" => Ok(AdjustMode::Each),
            "all" => Ok(AdjustMode::All),
            other => Err(Error::InvalidQuery(format!("unknown adjustment mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Csv(PathBuf),
    Model { structure: Structure, n: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditConfig {
    pub data: DataSource,
    pub graph: CausalGraph,
    /// One or two sensitive variables; empty means every node with role
    /// `sensitive`, in graph order.
    pub sensitive: Vec<String>,
    /// Defaults to the unique node with role `outcome`.
    pub outcome: Option<String>,
    pub biases: BiasSelection,
    pub adjust: AdjustMode,
    /// CSV column -> graph node renames.
    pub map: Vec<(String, String)>,
    pub seed: u64,
    /// Tolerance for entries whose two routes are algebraically identical.
    pub exact_tolerance: f64,
    /// Multiplier of 1/sqrt(n) used as tolerance for entries whose routes
    /// agree only up to sampling error.
    pub mc_multiplier: f64,
    /// Largest |P(a,b) - P(a)P(b)| accepted for the individual interaction
    /// decomposition on estimated tables.
    pub independence_tolerance: f64,
    /// Error mechanism P(t1|z0), P(t0|z1) used for measurement bias when the
    /// latent confounder is not in the data.
    pub error_mechanism: Option<ErrorMechanism>,
}

impl AuditConfig {
    pub fn new(data: DataSource, graph: CausalGraph) -> Self {
        AuditConfig {
            data,
            graph,
            sensitive: Vec::new(),
            outcome: None,
            biases: BiasSelection::Auto,
            adjust: AdjustMode::Each,
            map: Vec::new(),
            seed: 0,
            exact_tolerance: 1e-9,
            mc_multiplier: 3.0,
            independence_tolerance: 0.01,
            error_mechanism: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Binary,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasEntry {
    pub kind: BiasKind,
    /// What was adjusted for, e.g. `Z` or `Z1,Z2`, or the interaction scope.
    pub label: String,
    pub closed_form_value: Option<f64>,
    pub oracle_value: Option<f64>,
    pub abs_diff: Option<f64>,
    pub tolerance: Option<f64>,
    pub within_tolerance: Option<bool>,
    /// Closed-form identifier.
    pub formula: String,
    /// Oracle expression.
    pub oracle: String,
    pub parameters: BTreeMap<String, f64>,
    pub note: Option<String>,
}

impl BiasEntry {
    fn new(kind: BiasKind, label: &str, formula: &str, oracle: &str) -> Self {
        BiasEntry {
            kind,
            label: label.to_string(),
            closed_form_value: None,
            oracle_value: None,
            abs_diff: None,
            tolerance: None,
            within_tolerance: None,
            formula: formula.to_string(),
            oracle: oracle.to_string(),
            parameters: BTreeMap::new(),
            note: None,
        }
    }

    fn finish(mut self, closed: Option<f64>, oracle: Option<f64>, tolerance: f64) -> Self {
        self.closed_form_value = closed;
        self.oracle_value = oracle;
        if let (Some(c), Some(o)) = (closed, oracle) {
            let d = (c - o).abs();
            self.abs_diff = Some(d);
            self.tolerance = Some(tolerance);
            self.within_tolerance = Some(d <= tolerance);
        }
        self
    }

    /// The closed-form value when available, else the oracle value.
    pub fn value(&self) -> Option<f64> {
        self.closed_form_value.or(self.oracle_value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetadata {
    pub tool: String,
    pub tool_version: String,
    pub seed: u64,
    pub samples: usize,
    pub data: String,
    /// Only set when `SOURCE_DATE_EPOCH` is, so reports stay byte-stable.
    pub timestamp: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasReport {
    pub format_version: String,
    pub metadata: RunMetadata,
    pub mode: Mode,
    pub outcome: String,
    pub sensitive: Vec<String>,
    pub adjust: AdjustMode,
    pub structure: StructureTags,
    pub entries: Vec<BiasEntry>,
    pub concurrent: Option<BiasBreakdown>,
}

impl BiasReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn entry(&self, kind: BiasKind, label: &str) -> Option<&BiasEntry> {
        self.entries.iter().find(|e| e.kind == kind && e.label == label)
    }

    pub fn all_within_tolerance(&self) -> bool {
        self.entries.iter().all(|e| e.within_tolerance != Some(false))
    }
}

fn load_data(config: &AuditConfig) -> Result<(Dataset, String)> {
    let (mut data, label) = match &config.data {
        DataSource::Csv(path) => (Dataset::read_csv(path)?, path.display().to_string()),
        DataSource::Model { structure, n } => {
            let spec = ScmSpec::new(structure.clone(), *n, config.seed)?;
            (scm::simulate(&spec)?, "simulated".to_string())
        }
    };
    for (from, to) in &config.map {
        data.rename(from, to)?;
    }
    Ok((data, label))
}

fn require_columns(data: &Dataset, names: &[&str]) -> Result<()> {
    for n in names {
        if data.index(n).is_err() {
            return Err(Error::InvalidData(format!(
                "graph variable `{n}` has no column in the data (use --map to rename columns)"
            )));
        }
    }
    Ok(())
}

/// Runs the audit described by `config`.
pub fn run_audit(config: &AuditConfig) -> Result<BiasReport> {
    let report = config.graph.validate();
    if !report.is_valid() {
        let msgs: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
        return Err(Error::InvalidGraph(msgs.join("; ")));
    }
    let outcome = match &config.outcome {
        Some(y) => y.clone(),
        None => {
            let ys = config.graph.nodes_with_role(Role::Outcome);
            match ys.as_slice() {
                [y] => y.to_string(),
                [] => return Err(Error::InvalidQuery("the graph has no outcome node".into())),
                _ => return Err(Error::InvalidQuery("several outcome nodes; pass --outcome".into())),
            }
        }
    };
    let sensitive: Vec<String> = if config.sensitive.is_empty() {
        config
            .graph
            .nodes_with_role(Role::Sensitive)
            .into_iter()
            .map(str::to_string)
            .collect()
    } else {
        config.sensitive.clone()
    };
    if sensitive.is_empty() || sensitive.len() > 2 {
        return Err(Error::InvalidQuery(format!(
            "need one or two sensitive variables, got {}",
            sensitive.len()
        )));
    }
    for v in sensitive.iter().chain([&outcome]) {
        if config.graph.node(v).is_none() {
            return Err(Error::UnknownVariable(v.clone()));
        }
    }
    let a = sensitive[0].as_str();
    let y = outcome.as_str();
    let mut tags = config.graph.classify_structure(a, y)?;
    if let Some(b) = sensitive.get(1) {
        if !tags.second_sensitive.contains(b) {
            tags.second_sensitive = vec![b.clone()];
        }
    }
    tags.second_sensitive.truncate(1);

    let kinds: Vec<BiasKind> = match &config.biases {
        BiasSelection::Auto => {
            let mut k = Vec::new();
            if !tags.confounders.is_empty() {
                k.push(BiasKind::Conf);
            }
            if !tags.colliders.is_empty() {
                k.push(BiasKind::Sel);
            }
            if !tags.proxies.is_empty() {
                k.push(BiasKind::Meas);
            }
            if !tags.second_sensitive.is_empty() {
                k.push(BiasKind::Int);
            }
            if k.is_empty() {
                return Err(Error::Structure(format!(
                    "the graph has no confounder, conditioned collider, proxy or second \
                     sensitive variable around ({a}, {y})"
                )));
            }
            k
        }
        BiasSelection::Explicit(k) => {
            for kind in k {
                let missing = match kind {
                    BiasKind::Conf => tags.confounders.is_empty().then_some("observed confounder"),
                    BiasKind::Sel => tags.colliders.is_empty().then_some("conditioned collider"),
                    BiasKind::Meas => tags.proxies.is_empty().then_some("proxy of a latent confounder"),
                    BiasKind::Int => tags.second_sensitive.is_empty().then_some("second sensitive variable"),
                };
                if let Some(what) = missing {
                    return Err(Error::Structure(format!(
                        "{kind:?} bias requested but the graph has no {what} for ({a}, {y})"
                    )));
                }
            }
            k.clone()
        }
    };

    let (data, data_label) = load_data(config)?;
    let mut needed: Vec<&str> = vec![a, y];
    for k in &kinds {
        match k {
            BiasKind::Conf => needed.extend(tags.confounders.iter().map(String::as_str)),
            BiasKind::Sel => needed.extend(tags.colliders.iter().map(String::as_str)),
            BiasKind::Meas => needed.extend(tags.proxies.iter().map(|(t, _)| t.as_str())),
            BiasKind::Int => needed.extend(tags.second_sensitive.iter().map(String::as_str)),
        }
    }
    needed.sort();
    needed.dedup();
    require_columns(&data, &needed)?;
    let mut binary = true;
    for n in &needed {
        binary &= data.is_binary(n)?;
    }
    let mode = if binary { Mode::Binary } else { Mode::Linear };

    let mut ctx = Ctx {
        data: &data,
        config,
        tags: &tags,
        a,
        y,
        entries: Vec::new(),
        mc_tol: config.mc_multiplier / (data.n_rows() as f64).sqrt(),
    };
    let concurrent = match mode {
        Mode::Binary => ctx.binary(&kinds)?,
        Mode::Linear => {
            ctx.linear(&kinds)?;
            None
        }
    };
    let entries = ctx.entries;

    Ok(BiasReport {
        format_version: FORMAT_VERSION.to_string(),
        metadata: RunMetadata {
            tool: "causal-bias".to_string(),
            tool_version: TOOL_VERSION.to_string(),
            seed: config.seed,
            samples: data.n_rows(),
            data: data_label,
            timestamp: std::env::var("SOURCE_DATE_EPOCH").ok(),
        },
        mode,
        outcome,
        sensitive,
        adjust: config.adjust,
        structure: tags,
        entries,
        concurrent,
    })
}

struct Ctx<'c> {
    data: &'c Dataset,
    config: &'c AuditConfig,
    tags: &'c StructureTags,
    a: &'c str,
    y: &'c str,
    entries: Vec<BiasEntry>,
    mc_tol: f64,
}

fn params_map(p: &BinaryParams) -> BTreeMap<String, f64> {
    [
        ("alpha", p.alpha),
        ("beta", p.beta),
        ("gamma", p.gamma),
        ("delta", p.delta),
        ("epsilon", p.epsilon),
        ("tau", p.tau),
        ("lambda", p.lambda),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

impl<'c> Ctx<'c> {
    fn adjustment_sets(&self) -> Vec<Vec<&'c str>> {
        let z: Vec<&str> = self.tags.confounders.iter().map(String::as_str).collect();
        match self.config.adjust {
            AdjustMode::Each => z.into_iter().map(|v| vec![v]).collect(),
            AdjustMode::All => vec![z],
        }
    }

    fn binary(&mut self, kinds: &[BiasKind]) -> Result<Option<BiasBreakdown>> {
        let (a, y) = (self.a, self.y);
        let mut vars: Vec<&str> = vec![a, y];
        vars.extend(self.tags.confounders.iter().map(String::as_str));
        vars.extend(self.tags.colliders.iter().map(String::as_str));
        for (t, z) in &self.tags.proxies {
            vars.push(t);
            if self.data.index(z).is_ok() {
                vars.push(z);
            }
        }
        vars.extend(self.tags.second_sensitive.iter().map(String::as_str));
        vars.sort();
        vars.dedup();
        let table = JointTable::from_samples(self.data, &vars, 0.0)?;
        let exact = self.config.exact_tolerance;
        let sd = table.stat_disp(y, a)?;

        if kinds.contains(&BiasKind::Conf) {
            for set in self.adjustment_sets() {
                let label = set.join(",");
                let oracle = sd - table.stat_disp_adjusted(y, a, &set)?;
                let mut e = BiasEntry::new(
                    BiasKind::Conf,
                    &label,
                    "conf_bias_binary",
                    "StatDisp - StatDisp_Z",
                );
                let closed = if let [z] = set.as_slice() {
                    let p = BinaryParams::from_table(&table, y, a, z)?;
                    e.parameters = params_map(&p);
                    Some(closed_forms::conf_bias_binary(&p))
                } else {
                    e.formula = "none (joint adjustment)".into();
                    None
                };
                self.entries.push(e.finish(closed, Some(oracle), exact));
            }
        }
        if kinds.contains(&BiasKind::Sel) {
            for w in &self.tags.colliders {
                let oracle = table.stat_disp_adjusted(y, a, &[w])? - sd;
                let p = BinaryParams::from_table(&table, y, a, w)?;
                let mut e = BiasEntry::new(BiasKind::Sel, w, "sel_bias_binary", "StatDisp_W - StatDisp");
                e.parameters = params_map(&p);
                self.entries
                    .push(e.finish(Some(closed_forms::sel_bias_binary_general(&p)), Some(oracle), exact));
            }
        }
        if kinds.contains(&BiasKind::Meas) {
            for (t, z) in &self.tags.proxies {
                let observed = BinaryParams::from_table(&table, y, a, t)?;
                let z_present = table.has(z);
                let mech = if z_present {
                    ErrorMechanism::new(
                        table.cond_prob(&[(t, 1)], &[(z, 0)])?,
                        table.cond_prob(&[(t, 0)], &[(z, 1)])?,
                    )?
                } else if let Some(m) = self.config.error_mechanism {
                    m
                } else {
                    return Err(Error::Structure(format!(
                        "measurement bias needs the latent `{z}` in the data or an error mechanism"
                    )));
                };
                let mut e = BiasEntry::new(
                    BiasKind::Meas,
                    &format!("{t}~{z}"),
                    "meas_bias_binary (effect restoration)",
                    "StatDisp_T - StatDisp_Z",
                );
                e.parameters = params_map(&observed);
                e.parameters.insert("p_t1_given_z0".into(), mech.false_positive);
                e.parameters.insert("p_t0_given_z1".into(), mech.false_negative);
                let closed = closed_forms::meas_bias_binary(&MeasurementParams::new(observed, mech))?;
                let oracle = if z_present {
                    Some(table.stat_disp_adjusted(y, a, &[t])? - table.stat_disp_adjusted(y, a, &[z])?)
                } else {
                    e.note = Some(format!("`{z}` not observed; oracle unavailable"));
                    None
                };
                // Restoring from an estimated P(T|Z) is exact only when the
                // sample satisfies T independent of (A, Y) given Z.
                let tol = match table.source() {
                    crate::table::Source::Parametric => exact,
                    crate::table::Source::Estimated { .. } => self.mc_tol,
                };
                self.entries.push(e.finish(Some(closed), oracle, tol));
            }
        }
        if kinds.contains(&BiasKind::Int) {
            let b = self.tags.second_sensitive[0].as_str();
            let int = table.interaction_term(y, a, b)?;
            let sd_a = table.sd_no_interaction(y, a, b)?;
            let sd_b = table.sd_no_interaction(y, b, a)?;
            let jd = table.joint_disparity(y, a, b)?;
            let e = BiasEntry::new(
                BiasKind::Int,
                &format!("{a}{b}"),
                "int_bias_intersectional",
                "StatDisp(Y,AB) - SD_noInt(Y,A) - SD_noInt(Y,B)",
            );
            self.entries.push(e.finish(Some(int), Some(jd - sd_a - sd_b), exact));
            for (target, name, other, sd_t) in [(Target::A, a, b, sd_a), (Target::B, b, a, sd_b)] {
                let mut e = BiasEntry::new(
                    BiasKind::Int,
                    name,
                    "int_bias_individual",
                    "StatDisp(Y,target) - SD_noInt(Y,target)",
                );
                let oracle = table.stat_disp(y, name)? - sd_t;
                e.parameters
                    .insert(format!("p_{other}1"), table.prob(&[(other, 1)])?);
                let closed = match closed_forms::int_bias_individual(
                    &table,
                    y,
                    a,
                    b,
                    target,
                    Some(self.config.independence_tolerance),
                ) {
                    Ok(v) => Some(v),
                    Err(Error::Dependence(msg)) => {
                        e.note = Some(msg);
                        None
                    }
                    Err(other) => return Err(other),
                };
                let tol = self.config.independence_tolerance.max(exact);
                self.entries.push(e.finish(closed, Some(oracle), tol));
            }
        }

        let present = [
            !self.tags.confounders.is_empty(),
            !self.tags.colliders.is_empty(),
            self.tags.proxies.iter().any(|(_, z)| table.has(z)),
            !self.tags.second_sensitive.is_empty(),
        ];
        if present.iter().filter(|p| **p).count() >= 2 && !self.tags.confounders.is_empty() {
            let mut confounders = self.tags.confounders.clone();
            let mut proxy = None;
            if let Some((t, z)) = self.tags.proxies.iter().find(|(_, z)| table.has(z)) {
                proxy = Some(t.clone());
                if !confounders.contains(z) {
                    confounders = vec![z.clone()];
                }
            }
            let spec = ConcurrentSpec {
                outcome: y.to_string(),
                sensitive: a.to_string(),
                confounders,
                collider: self.tags.colliders.first().cloned(),
                proxy,
                second_sensitive: self.tags.second_sensitive.first().cloned(),
            };
            return Ok(Some(closed_forms::concurrent_bias(&table, &spec)?));
        }
        Ok(None)
    }

    fn beta_ols(&self, controls: &[&str]) -> Result<f64> {
        let mut preds = vec![self.a];
        preds.extend_from_slice(controls);
        linear::ols_fit(self.data, self.y, &preds, None)?.coefficient(self.a)
    }

    fn linear(&mut self, kinds: &[BiasKind]) -> Result<()> {
        let (a, y) = (self.a, self.y);
        let mut cols: Vec<&str> = vec![a, y];
        cols.extend(self.tags.confounders.iter().map(String::as_str));
        cols.extend(self.tags.colliders.iter().map(String::as_str));
        for (t, z) in &self.tags.proxies {
            cols.push(t);
            if self.data.index(z).is_ok() {
                cols.push(z);
            }
        }
        cols.extend(self.tags.second_sensitive.iter().map(String::as_str));
        cols.sort();
        cols.dedup();
        let cov = CovMatrix::sample_moments(&self.data.select(&cols)?, Convention::Sample)?;
        let exact = self.config.exact_tolerance;
        let b_ya = self.beta_ols(&[])?;

        if kinds.contains(&BiasKind::Conf) {
            for set in self.adjustment_sets() {
                let label = set.join(",");
                let oracle = b_ya - self.beta_ols(&set)?;
                let (formula, closed) = match set.as_slice() {
                    [z] => ("conf_bias_linear (covariance form)", Some(linear::conf_bias_from_cov(&cov, y, a, z)?)),
                    [z, w] => (
                        "beta_ya - beta_ya.zw (cofactor form)",
                        Some(linear::beta(&cov, y, a)? - linear::beta_partial2(&cov, y, a, z, w)?),
                    ),
                    _ => ("none (more than two confounders)", None),
                };
                let e = BiasEntry::new(BiasKind::Conf, &label, formula, "OLS beta_ya - beta_ya.Z");
                self.entries.push(e.finish(closed, Some(oracle), exact));
            }
        }
        if kinds.contains(&BiasKind::Sel) {
            for w in &self.tags.colliders {
                let oracle = self.beta_ols(&[w])? - b_ya;
                let closed = linear::sel_bias_from_cov(&cov, y, a, w)?;
                let e = BiasEntry::new(
                    BiasKind::Sel,
                    w,
                    "sel_bias_linear (covariance form)",
                    "OLS beta_ya.w - beta_ya",
                );
                self.entries.push(e.finish(Some(closed), Some(oracle), exact));
            }
        }
        if kinds.contains(&BiasKind::Meas) {
            for (t, z) in &self.tags.proxies {
                let mut e = BiasEntry::new(
                    BiasKind::Meas,
                    &format!("{t}~{z}"),
                    "meas_bias_linear (coefficient form, plug-in)",
                    "OLS beta_ya.t - beta_ya.z",
                );
                if cov.index(z).is_err() {
                    return Err(Error::Structure(format!(
                        "linear measurement bias needs the latent `{z}` in the data"
                    )));
                }
                let closed = linear::meas_bias_from_cov(&cov, y, a, z, t)?;
                let oracle = self.beta_ols(&[t])? - self.beta_ols(&[z])?;
                e.parameters.insert("beta_za".into(), cov.cov(z, a)? / cov.var(z)?);
                e.parameters.insert("lambda_zt".into(), cov.cov(z, t)? / cov.var(z)?);
                self.entries.push(e.finish(Some(closed), Some(oracle), self.mc_tol));
            }
        }
        if kinds.contains(&BiasKind::Int) {
            let b = self.tags.second_sensitive[0].as_str();
            for v in [a, b] {
                if !self.data.is_binary(v)? {
                    return Err(Error::InvalidData(format!(
                        "interaction bias needs binary sensitive variables; `{v}` is not"
                    )));
                }
            }
            let with = linear::ols_fit(self.data, y, &[a, b], Some((a, b)))?;
            let without = linear::ols_fit(self.data, y, &[a, b], None)?;
            let n = self.data.n_rows() as f64;
            let p_a1 = self.data.column(a)?.iter().sum::<f64>() / n;
            let p_b1 = self.data.column(b)?.iter().sum::<f64>() / n;
            let spec = InteractionLinearSpec::new(
                [
                    with.intercept,
                    with.coefficient(a)?,
                    with.coefficient(b)?,
                    with.coefficient(&format!("{a}*{b}"))?,
                    0.0,
                ],
                p_a1,
                p_b1,
            )?;
            let mut params = BTreeMap::new();
            params.insert("beta3".to_string(), spec.beta3);
            params.insert(format!("p_{a}1"), p_a1);
            params.insert(format!("p_{b}1"), p_b1);
            let d1 = without.coefficient(a)? - with.coefficient(a)?;
            let d2 = without.coefficient(b)? - with.coefficient(b)?;
            // Cell means of the four (A, B) groups, independent of the fit.
            let (ya, aa, bb) = (self.data.column(y)?, self.data.column(a)?, self.data.column(b)?);
            let mut sums = [[0.0f64; 2]; 2];
            let mut counts = [[0usize; 2]; 2];
            for i in 0..ya.len() {
                let (ia, ib) = (aa[i] as usize, bb[i] as usize);
                sums[ia][ib] += ya[i];
                counts[ia][ib] += 1;
            }
            let mut mean = [[0.0f64; 2]; 2];
            for ia in 0..2 {
                for ib in 0..2 {
                    if counts[ia][ib] == 0 {
                        return Err(Error::Positivity(format!("{a}={ia}, {b}={ib}")));
                    }
                    mean[ia][ib] = sums[ia][ib] / counts[ia][ib] as f64;
                }
            }
            let joint = (mean[1][1] - mean[0][0]) - (mean[1][0] - mean[0][0]) - (mean[0][1] - mean[0][0]);
            let rows: [(String, linear::InteractionScope, f64, &str, f64); 3] = [
                (
                    format!("{a}{b}"),
                    linear::InteractionScope::Intersectional,
                    joint,
                    "cell means: E[Y|a1,b1] - E[Y|a0,b0] - SD_noInt(A) - SD_noInt(B)",
                    self.config.exact_tolerance,
                ),
                (a.to_string(), linear::InteractionScope::Individual(Target::A), d1, "OLS beta'_1 - beta_1", self.mc_tol),
                (b.to_string(), linear::InteractionScope::Individual(Target::B), d2, "OLS beta'_2 - beta_2", self.mc_tol),
            ];
            for (label, scope, oracle, oracle_def, tol) in rows {
                let mut e = BiasEntry::new(BiasKind::Int, &label, "int_bias_linear", oracle_def);
                e.parameters = params.clone();
                let closed = linear::int_bias_linear(&spec, scope);
                self.entries.push(e.finish(Some(closed), Some(oracle), tol));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Model specs from key=value parameters
// ---------------------------------------------------------------------------

/// Parses `k=v,k=v`.
pub fn parse_assignments(text: &str) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::InvalidParams(format!("`{part}` is not key=value")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidParams(format!("`{part}`: value is not a number")))?;
        if out.insert(k.trim().to_string(), v).is_some() {
            return Err(Error::InvalidParams(format!("parameter `{}` given twice", k.trim())));
        }
    }
    Ok(out)
}

/// Names of the built-in generative models.
pub const MODELS: &[&str] = &[
    "linear-confounding",
    "linear-two-confounder",
    "linear-colliding",
    "linear-measurement",
    "linear-interaction",
    "binary-confounding",
    "binary-selection",
    "binary-measurement",
    "binary-interaction",
];

/// Builds a generative model from its name and parameters. Missing
/// parameters of the binary measurement model are drawn from `seed`.
pub fn model_from_params(name: &str, params: &BTreeMap<String, f64>, seed: u64) -> Result<Structure> {
    let allowed: &[&str] = match name {
        "linear-confounding" => &["alpha", "beta", "gamma", "std"],
        "linear-two-confounder" => &["alpha", "beta", "gamma", "delta", "lambda", "std"],
        "linear-colliding" => &["alpha", "eta", "epsilon", "std"],
        "linear-measurement" => &["alpha", "beta", "gamma", "lambda", "std"],
        "linear-interaction" => &["beta0", "beta1", "beta2", "beta3", "beta4", "p_a1", "p_b1"],
        "binary-confounding" | "binary-selection" => {
            &["alpha", "beta", "gamma", "delta", "epsilon", "tau", "lambda"]
        }
        "binary-measurement" => &[
            "p_z1", "a_z0", "a_z1", "t_z0", "t_z1", "y_a0z0", "y_a0z1", "y_a1z0", "y_a1z1",
        ],
        "binary-interaction" => &["p_a1", "p_b1", "y_a0b0", "y_a0b1", "y_a1b0", "y_a1b1"],
        other => {
            return Err(Error::InvalidParams(format!(
                "unknown model `{other}`; expected one of {}",
                MODELS.join(", ")
            )))
        }
    };
    if let Some(k) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(Error::InvalidParams(format!(
            "model `{name}` has no parameter `{k}`; expected {}",
            allowed.join(", ")
        )));
    }
    let get = |k: &str, default: Option<f64>| {
        params
            .get(k)
            .copied()
            .or(default)
            .ok_or_else(|| Error::InvalidParams(format!("model `{name}` needs parameter `{k}`")))
    };
    let std = get("std", Some(0.0))? != 0.0;
    let linear = |s: PathStructure| -> Result<Structure> {
        let model = if std {
            PathModel::standardized(s)?
        } else {
            PathModel::unit_noise(s)?
        };
        Ok(Structure::Linear { model })
    };
    match name {
        "linear-confounding" => linear(PathStructure::Confounding {
            alpha: get("alpha", Some(0.0))?,
            beta: get("beta", None)?,
            gamma: get("gamma", None)?,
        }),
        "linear-two-confounder" => linear(PathStructure::TwoConfounder {
            alpha: get("alpha", Some(0.0))?,
            beta: get("beta", None)?,
            gamma: get("gamma", None)?,
            delta: get("delta", None)?,
            lambda: get("lambda", None)?,
        }),
        "linear-colliding" => linear(PathStructure::Colliding {
            alpha: get("alpha", None)?,
            eta: get("eta", None)?,
            epsilon: get("epsilon", None)?,
        }),
        "linear-measurement" => linear(PathStructure::Measurement {
            alpha: get("alpha", Some(0.0))?,
            beta: get("beta", None)?,
            gamma: get("gamma", None)?,
            lambda: get("lambda", None)?,
        }),
        "linear-interaction" => Ok(Structure::LinearInteraction {
            spec: InteractionLinearSpec::new(
                [
                    get("beta0", Some(0.0))?,
                    get("beta1", None)?,
                    get("beta2", None)?,
                    get("beta3", None)?,
                    get("beta4", Some(0.0))?,
                ],
                get("p_a1", Some(0.5))?,
                get("p_b1", Some(0.5))?,
            )?,
        }),
        "binary-confounding" | "binary-selection" => {
            let p = BinaryParams::new(
                get("alpha", None)?,
                get("beta", None)?,
                get("gamma", None)?,
                get("delta", None)?,
                get("epsilon", None)?,
                get("tau", None)?,
                get("lambda", Some(0.5))?,
            )?;
            Ok(if name == "binary-confounding" {
                Structure::BinaryConfounding { params: p }
            } else {
                Structure::BinarySelection { params: p }
            })
        }
        "binary-measurement" => {
            let r = BinaryMeasurementSpec::randomize(seed);
            let d = BinaryMeasurementSpec::DEFAULT_OUTCOME;
            let spec = BinaryMeasurementSpec {
                p_z1: get("p_z1", Some(r.p_z1))?,
                a_given_z: [get("a_z0", Some(r.a_given_z[0]))?, get("a_z1", Some(r.a_given_z[1]))?],
                t_given_z: [get("t_z0", Some(r.t_given_z[0]))?, get("t_z1", Some(r.t_given_z[1]))?],
                y_given_az: [
                    get("y_a0z0", Some(d[0]))?,
                    get("y_a0z1", Some(d[1]))?,
                    get("y_a1z0", Some(d[2]))?,
                    get("y_a1z1", Some(d[3]))?,
                ],
            };
            spec.network()?;
            Ok(Structure::BinaryMeasurement { spec })
        }
        _ => {
            let spec = BinaryInteractionSpec {
                p_a1: get("p_a1", Some(0.5))?,
                p_b1: get("p_b1", Some(0.5))?,
                y_given_ab: [
                    get("y_a0b0", None)?,
                    get("y_a0b1", None)?,
                    get("y_a1b0", None)?,
                    get("y_a1b1", None)?,
                ],
            };
            spec.network()?;
            Ok(Structure::BinaryInteraction { spec })
        }
    }
}

// ---------------------------------------------------------------------------
// Sweep files
// ---------------------------------------------------------------------------

/// Hold values of the slice files written next to every grid.
pub const SLICE_HOLDS: [f64; 2] = [0.5, -1.0];

fn slice_path(out: &Path, hold: f64) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("grid");
    let ext = out.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    out.with_file_name(format!("{stem}.hold_{hold}.{ext}"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepOutput {
    pub files: Vec<PathBuf>,
    pub cells: usize,
    pub singular: Vec<scm::SingularCell>,
}

/// Writes the grid CSV to `out` and one slice CSV per hold value in
/// [`SLICE_HOLDS`] beside it.
pub fn run_sweep(config: &SweepConfig, out: &Path) -> Result<SweepOutput> {
    let grid = scm::sweep(config)?;
    std::fs::write(out, grid.to_csv()).map_err(|e| Error::Io(format!("{}: {e}", out.display())))?;
    let mut files = vec![out.to_path_buf()];
    for hold in SLICE_HOLDS {
        let path = slice_path(out, hold);
        std::fs::write(&path, scm::slices_csv(config, hold)?)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        files.push(path);
    }
    Ok(SweepOutput {
        files,
        cells: grid.values.len(),
        singular: grid.singular,
    })
}

// ---------------------------------------------------------------------------
// Self-test
// ---------------------------------------------------------------------------

/// Closed form under test in the confounding battery; replaceable so a
/// deliberately wrong formula can be shown to fail.
pub type ConfFormula = fn(&BinaryParams) -> f64;

#[derive(Debug, Clone, Copy)]
pub struct SelftestOptions {
    pub seed: u64,
    pub draws: usize,
    pub mc_samples: usize,
    pub conf_formula: ConfFormula,
}

impl SelftestOptions {
    pub fn new(seed: u64) -> Self {
        SelftestOptions {
            seed,
            draws: 1000,
            mc_samples: 200_000,
            conf_formula: closed_forms::conf_bias_binary,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub draws: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelftestReport {
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "selftest seed={}", self.seed);
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{} {:<34} draws={:<5} max_dev={:.3e} tol={:.1e}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.draws,
                c.max_deviation,
                c.tolerance
            );
        }
        let _ = writeln!(s, "{}", if self.passed() { "all checks passed" } else { "FAILED" });
        s
    }
}

struct Battery {
    name: &'static str,
    tolerance: f64,
    draws: usize,
    worst: f64,
}

impl Battery {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Battery {
            name,
            tolerance,
            draws: 0,
            worst: 0.0,
        }
    }

    fn record(&mut self, deviation: f64) {
        self.draws += 1;
        // NaN must fail the check.
        self.worst = if deviation.is_nan() { f64::INFINITY } else { self.worst.max(deviation) };
    }

    fn finish(self) -> Check {
        Check {
            name: self.name.to_string(),
            draws: self.draws,
            max_deviation: self.worst,
            tolerance: self.tolerance,
            passed: self.draws > 0 && self.worst <= self.tolerance,
        }
    }
}

fn failed(name: &str, e: &Error) -> Check {
    Check {
        name: format!("{name} ({e})"),
        draws: 0,
        max_deviation: f64::INFINITY,
        tolerance: 0.0,
        passed: false,
    }
}

/// Runs the oracle-equivalence batteries.
pub fn run_selftest(opts: &SelftestOptions) -> SelftestReport {
    let mut checks = Vec::new();
    for (name, f) in [
        ("binary confounding", selftest_conf as fn(&SelftestOptions, &mut ChaCha8Rng) -> Result<Check>),
        ("binary balanced confounding", selftest_balanced),
        ("binary selection", selftest_sel),
        ("binary measurement", selftest_meas),
        ("effect restoration", selftest_restoration),
        ("interaction decomposition", selftest_interaction),
        ("linear closed forms", selftest_linear_exact),
        ("partial regression", selftest_partial),
        ("linear monte carlo", selftest_linear_mc),
    ] {
        // Independent stream per battery so adding one does not shift others.
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ fxhash(name));
        checks.push(f(opts, &mut rng).unwrap_or_else(|e| failed(name, &e)));
    }
    SelftestReport {
        seed: opts.seed,
        checks,
    }
}

fn fxhash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

fn selftest_conf(opts: &SelftestOptions, rng: &mut ChaCha8Rng) -> Result<Check> {
    let mut b = Battery::new("binary confounding", 1e-12);
    for _ in 0..opts.draws {
        let p = BinaryParams::random(rng);
        let t = scm::enumerate_joint(&Structure::BinaryConfounding { params: p })?;
        let oracle = t.stat_disp("Y", "A")? - t.stat_disp_adjusted("Y", "A", &["Z"])?;
        b.record(((opts.conf_formula)(&p) - oracle).abs());
    }
    Ok(b.finish())
}

fn selftest_balanced(opts: &SelftestOptions, rng: &mut ChaCha8Rng) -> Result<Check> {
    let mut b = Battery::new("binary balanced confounding", 1e-12);
    for _ in 0..opts.draws {
        let p = BinaryParams::random_balanced(rng);
        b.record((closed_forms::conf_bias_binary_balanced(&p)? - closed_forms::conf_bias_binary(&p)).abs());
    }
    Ok(b.finish())
}

fn selftest_sel(opts: &SelftestOptions, rng: &mut ChaCha8Rng) -> Result<Check> {
    let mut b = Battery::new("binary selection", 1e-12);
    for _ in 0..opts.draws {
        let p = BinaryParams::random_balanced(rng);
        let t = scm::enumerate_joint(&Structure::BinarySelection { params: p })?;
        let oracle = t.stat_disp_adjusted("Y", "A", &["W"])? - t.stat_disp("Y", "A")?;
        b.record((closed_forms::sel_bias_binary(&p)? - oracle).abs());
    }
    Ok(b.finish())
}

/// Random full generative measurement model with an informative proxy.
pub fn random_measurement_network<R: rand::Rng + ?Sized>(rng: &mut R) -> Result<BinaryNetwork> {
    loop {
        let net = BinaryNetwork::random(
            &[("Z", &[]), ("A", &["Z"]), ("T", &["Z"]), ("Y", &["A", "Z"])],
            rng,
        )?;
        let t = &net.nodes()[2].cpt;
        // Keep away from the unidentified T independent of Z case.
        if (t[1] - t[0]).abs() > 0.05 {
            return Ok(net);
        }
    }
}

/// Observed (A, T, Y) parameters and error mechanism of a measurement network.
pub fn measurement_params_of(table: &JointTable) -> Result<MeasurementParams> {
    let observed = BinaryParams::from_table(table, "Y", "A", "T")?;
    let mech = ErrorMechanism::new(
        table.cond_prob(&[("T", 1)], &[("Z", 0)])?,
        table.cond_prob(&[("T", 0)], &[("Z", 1)])?,
    )?;
    Ok(MeasurementParams::new(observed, mech))
}

fn selftest_meas(opts: &SelftestOptions, rng: &mut ChaCha8Rng) -> Result<Check> {
    let mut b = Battery::new("binary measurement", 1e-9);
    for _ in 0..opts.draws.min(200) {
        let t = random_measurement_network(rng)?.enumerate()?;
        let oracle = t.stat_disp_adjusted("Y", "A", &["T"])? - t.stat_disp_adjusted("Y", "A", &["Z"])?;
        b.record((closed_forms::meas_bias_binary(&measurement_params_of(&t)?)? - oracle).abs());
    }
    Ok(b.finish())
}

fn selftest_restoration(opts: &SelftestOptions, rng: &mut ChaCha8Rng) -> Result<Check> {
    let mut b = Battery::new("effect restoration", 1e-9);
    for _ in 0..opts.draws.min(200) {
        let t = random_measurement_network(rng)?.enumerate()?;
        let mech = measurement_params_of(&t)?.error;
        let obs = t.marginal(&["A", "T", "Y"])?;
        let restored = closed_forms::effect_restoration_do(&obs, "Y", "A", "T", &mech, 1)?
            - closed_forms::effect_restoration_do(&obs, "Y", "A", "T", &mech, 0)?;
        b.record((restored - t.stat_disp_adjusted("Y", "A", &["Z"])?).abs());
    }
    Ok(b.finish())
}

fn selftest_interaction(opts: &SelftestOptions, rng: &mut ChaCha8Rng) -> Result<Check> {
    let mut b = Battery::new("interaction decomposition", 1e-12);
    for _ in 0..opts.draws {
        let t = BinaryNetwork::random(&[("A", &[]), ("B", &[]), ("Y", &["A", "B"])], rng)?.enumerate()?;
        let int = t.interaction_term("Y", "A", "B")?;
        let jd = t.joint_disparity("Y", "A", "B")?;
        let sd_a = t.sd_no_interaction("Y", "A", "B")?;
        let sd_b = t.sd_no_interaction("Y", "B", "A")?;
        b.record((jd - sd_a - sd_b - int).abs());
        let ind = closed_forms::int_bias_individual(&t, "Y", "A", "B", Target::A, None)?;
        b.record((t.stat_disp("Y", "A")? - sd_a - ind).abs());
    }
    Ok(b.finish())
}

fn random_coefficient<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random_range(-1.0..1.0)
}

fn selftest_linear_exact(opts: &SelftestOptions, rng: &mut ChaCha8Rng) -> Result<Check> {
    let mut b = Battery::new("linear closed forms", 1e-10);
    for _ in 0..opts.draws {
        let mut c = || random_coefficient(rng);
        let structures = [
            PathStructure::Confounding {
                alpha: c(),
                beta: c(),
                gamma: c(),
            },
            PathStructure::TwoConfounder {
                alpha: c(),
                beta: c(),
                gamma: c(),
                delta: c(),
                lambda: c(),
            },
            PathStructure::Colliding {
                alpha: c(),
                eta: c(),
                epsilon: c(),
            },
            PathStructure::Measurement {
                alpha: c(),
                beta: c(),
                gamma: c(),
                lambda: c(),
            },
        ];
        for s in structures {
            let m = PathModel::unit_noise(s)?;
            b.record((m.closed_form_bias()? - m.regression_bias()?).abs());
        }
    }
    Ok(b.finish())
}

/// Random covariance matrix B B^T + 0.1 I over `names`.
pub fn random_covariance<R: rand::Rng + ?Sized>(names: &[&str], rng: &mut R) -> Result<CovMatrix> {
    let k = names.len();
    let m = nalgebra::DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
    let s = &m * m.transpose() + nalgebra::DMatrix::identity(k, k) * 0.1;
    CovMatrix::new(names.iter().map(|s| s.to_string()).collect(), s, None)
}

fn selftest_partial(opts: &SelftestOptions, rng: &mut ChaCha8Rng) -> Result<Check> {
    let mut b = Battery::new("partial regression", 1e-10);
    for _ in 0..opts.draws.min(500) {
        let c = random_covariance(&["Y", "A", "Z", "W"], rng)?;
        let ols = linear::regression_coefficients(&c, "Y", &["A", "Z", "W"])?;
        b.record((linear::beta_partial2(&c, "Y", "A", "Z", "W")? - ols[0]).abs());
        let ols1 = linear::regression_coefficients(&c, "Y", &["A", "Z"])?;
        b.record((linear::beta_partial1(&c, "Y", "A", "Z")? - ols1[0]).abs());
    }
    Ok(b.finish())
}

fn selftest_linear_mc(opts: &SelftestOptions, rng: &mut ChaCha8Rng) -> Result<Check> {
    let tol = 10.0 / (opts.mc_samples as f64).sqrt();
    let mut b = Battery::new("linear monte carlo", tol);
    for s in [
        PathStructure::Confounding {
            alpha: 0.3,
            beta: 0.5,
            gamma: 0.5,
        },
        PathStructure::Colliding {
            alpha: 0.5,
            eta: 0.3,
            epsilon: 0.6,
        },
        PathStructure::Measurement {
            alpha: 0.3,
            beta: 0.5,
            gamma: 0.5,
            lambda: 1.0,
        },
    ] {
        let m = PathModel::unit_noise(s)?;
        let data = scm::simulate_linear(&m.graph(), opts.mc_samples, rng)?;
        let cov = CovMatrix::sample_moments(&data, Convention::Sample)?;
        b.record((m.closed_form_bias()? - m.regression_bias_on(&cov)?).abs());
    }
    Ok(b.finish())
}

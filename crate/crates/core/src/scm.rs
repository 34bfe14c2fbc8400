//! Seeded generators for the synthetic models, exact enumeration of binary
//! networks, and closed-form sweep grids.
//!
//! Every random draw comes from `ChaCha8Rng` seeded with the spec's 64-bit
//! seed. Gaussian noise uses the ziggurat sampler of `rand_distr`
//! (`StandardNormal`). Rows are bit-identical for identical specs within one
//! build.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::closed_forms::{BinaryParams, ConfoundParams, ErrorMechanism, SelectionParams};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::CausalGraph;
use crate::linear::{self, InteractionLinearSpec, PathModel, PathStructure};
use crate::table::JointTable;

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// Binary networks
// ---------------------------------------------------------------------------

/// A binary variable with its conditional probability table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinaryNode {
    pub name: String,
    pub parents: Vec<String>,
    /// P(node = 1 | parents), indexed by the parent values read as binary
    /// digits with the first parent most significant.
    pub cpt: Vec<f64>,
}

impl BinaryNode {
    pub fn new(name: &str, parents: &[&str], cpt: Vec<f64>) -> Self {
        BinaryNode {
            name: name.to_string(),
            parents: parents.iter().map(|s| s.to_string()).collect(),
            cpt,
        }
    }
}

/// Bayesian network over binary variables, nodes listed parents-first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinaryNetwork {
    nodes: Vec<BinaryNode>,
}

impl BinaryNetwork {
    pub fn new(nodes: Vec<BinaryNode>) -> Result<Self> {
        if nodes.is_empty() || nodes.len() > crate::table::MAX_VARIABLES {
            return Err(Error::InvalidParams(format!(
                "a binary network needs 1 to {} nodes",
                crate::table::MAX_VARIABLES
            )));
        }
        let mut seen = HashSet::new();
        for node in &nodes {
            for p in &node.parents {
                if !seen.contains(p.as_str()) {
                    return Err(Error::InvalidParams(format!(
                        "parent `{p}` of `{}` must be listed before it",
                        node.name
                    )));
                }
            }
            if !seen.insert(node.name.as_str()) {
                return Err(Error::InvalidParams(format!("duplicate node `{}`", node.name)));
            }
            if node.cpt.len() != 1 << node.parents.len() {
                return Err(Error::InvalidParams(format!(
                    "`{}` has {} parents and needs {} table entries, got {}",
                    node.name,
                    node.parents.len(),
                    1usize << node.parents.len(),
                    node.cpt.len()
                )));
            }
            if let Some(p) = node.cpt.iter().find(|p| !(p.is_finite() && (0.0..=1.0).contains(*p))) {
                return Err(Error::InvalidParams(format!(
                    "`{}` has conditional probability {p} outside [0, 1]",
                    node.name
                )));
            }
        }
        Ok(BinaryNetwork { nodes })
    }

    /// Network with the given parent structure and uniform random tables.
    pub fn random<R: Rng + ?Sized>(structure: &[(&str, &[&str])], rng: &mut R) -> Result<Self> {
        let nodes = structure
            .iter()
            .map(|(name, parents)| {
                let cpt = (0..1usize << parents.len()).map(|_| rng.random::<f64>()).collect();
                BinaryNode::new(name, parents, cpt)
            })
            .collect();
        BinaryNetwork::new(nodes)
    }

    pub fn nodes(&self) -> &[BinaryNode] {
        &self.nodes
    }

    pub fn names(&self) -> Vec<&str> {
        self.nodes.iter().map(|n| n.name.as_str()).collect()
    }

    fn parent_indices(&self) -> Vec<Vec<usize>> {
        let index: HashMap<&str, usize> = self.nodes.iter().enumerate().map(|(i, n)| (n.name.as_str(), i)).collect();
        self.nodes
            .iter()
            .map(|n| n.parents.iter().map(|p| index[p.as_str()]).collect())
            .collect()
    }

    /// Exact joint table by the chain rule, variables in node order.
    pub fn enumerate(&self) -> Result<JointTable> {
        let k = self.nodes.len();
        let parents = self.parent_indices();
        let mut probs = vec![0.0; 1 << k];
        let mut values = vec![0usize; k];
        for (cell, slot) in probs.iter_mut().enumerate() {
            for (j, v) in values.iter_mut().enumerate() {
                *v = (cell >> (k - 1 - j)) & 1;
            }
            let mut p = 1.0;
            for (j, node) in self.nodes.iter().enumerate() {
                let row = parents[j].iter().fold(0, |acc, &q| (acc << 1) | values[q]);
                let p1 = node.cpt[row];
                p *= if values[j] == 1 { p1 } else { 1.0 - p1 };
            }
            *slot = p;
        }
        JointTable::parametric(&self.names(), probs)
    }

    /// `n` independent rows by ancestral sampling.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Dataset> {
        let k = self.nodes.len();
        let parents = self.parent_indices();
        let mut columns = vec![Vec::with_capacity(n); k];
        let mut values = vec![0usize; k];
        for _ in 0..n {
            for j in 0..k {
                let row = parents[j].iter().fold(0, |acc, &q| (acc << 1) | values[q]);
                let u: f64 = rng.random();
                values[j] = usize::from(u < self.nodes[j].cpt[row]);
                columns[j].push(values[j] as f64);
            }
        }
        Dataset::new(self.names().iter().map(|s| s.to_string()).collect(), columns)
    }
}

/// Confounding network Z -> A, Z -> Y, A -> Y realizing `p`.
pub fn confounding_network(p: &ConfoundParams) -> Result<BinaryNetwork> {
    let z1_a1 = p.x1_given_a1();
    let z1_a0 = p.x1_given_a0();
    // Bayes: P(a1 | z) = P(z | a1) P(a1) / P(z).
    let a1_z0 = (1.0 - z1_a1) * p.lambda / (1.0 - p.epsilon);
    let a1_z1 = z1_a1 * p.lambda / p.epsilon;
    debug_assert!((z1_a1 * p.lambda + z1_a0 * (1.0 - p.lambda) - p.epsilon).abs() < 1e-12);
    BinaryNetwork::new(vec![
        BinaryNode::new("Z", &[], vec![p.epsilon]),
        BinaryNode::new("A", &["Z"], vec![a1_z0.clamp(0.0, 1.0), a1_z1.clamp(0.0, 1.0)]),
        BinaryNode::new("Y", &["A", "Z"], vec![p.alpha, p.beta, p.gamma, p.delta]),
    ])
}

/// Joint of (A, W, Y) realizing selection parameters. The outcome is
/// tabulated given (A, W), so the network is a factorization, not a causal
/// order.
pub fn selection_network(p: &SelectionParams) -> Result<BinaryNetwork> {
    BinaryNetwork::new(vec![
        BinaryNode::new("A", &[], vec![p.lambda]),
        BinaryNode::new("W", &["A"], vec![p.x1_given_a0(), p.x1_given_a1()]),
        BinaryNode::new("Y", &["A", "W"], vec![p.alpha, p.beta, p.gamma, p.delta]),
    ])
}

/// Z -> A, Z -> T, Z -> Y, A -> Y with binary Bernoulli variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BinaryMeasurementSpec {
    /// P(z1).
    pub p_z1: f64,
    /// P(a1 | z) for z = 0, 1.
    pub a_given_z: [f64; 2],
    /// P(t1 | z) for z = 0, 1.
    pub t_given_z: [f64; 2],
    /// P(y1 | a, z) in the order a0z0, a0z1, a1z0, a1z1.
    pub y_given_az: [f64; 4],
}

impl BinaryMeasurementSpec {
    /// Outcome probability 0.5 z + 0.5 a.
    pub const DEFAULT_OUTCOME: [f64; 4] = [0.0, 0.5, 0.5, 1.0];

    /// Uniform random P(z1), P(a1 | z) and P(t1 | z); default outcome table.
    pub fn randomize(seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        BinaryMeasurementSpec {
            p_z1: rng.random(),
            a_given_z: [rng.random(), rng.random()],
            t_given_z: [rng.random(), rng.random()],
            y_given_az: Self::DEFAULT_OUTCOME,
        }
    }

    pub fn error_mechanism(&self) -> Result<ErrorMechanism> {
        ErrorMechanism::new(self.t_given_z[0], 1.0 - self.t_given_z[1])
    }

    pub fn network(&self) -> Result<BinaryNetwork> {
        BinaryNetwork::new(vec![
            BinaryNode::new("Z", &[], vec![self.p_z1]),
            BinaryNode::new("A", &["Z"], self.a_given_z.to_vec()),
            BinaryNode::new("T", &["Z"], self.t_given_z.to_vec()),
            BinaryNode::new("Y", &["A", "Z"], self.y_given_az.to_vec()),
        ])
    }
}

/// Independent A, B and outcome Y | A, B.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BinaryInteractionSpec {
    pub p_a1: f64,
    pub p_b1: f64,
    /// P(y1 | a, b) in the order a0b0, a0b1, a1b0, a1b1.
    pub y_given_ab: [f64; 4],
}

impl BinaryInteractionSpec {
    pub fn network(&self) -> Result<BinaryNetwork> {
        BinaryNetwork::new(vec![
            BinaryNode::new("A", &[], vec![self.p_a1]),
            BinaryNode::new("B", &[], vec![self.p_b1]),
            BinaryNode::new("Y", &["A", "B"], self.y_given_ab.to_vec()),
        ])
    }
}

// ---------------------------------------------------------------------------
// Specs and simulation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Structure {
    /// Linear Gaussian structural model.
    Linear { model: PathModel },
    LinearInteraction { spec: InteractionLinearSpec },
    BinaryConfounding { params: ConfoundParams },
    BinarySelection { params: SelectionParams },
    BinaryMeasurement { spec: BinaryMeasurementSpec },
    BinaryInteraction { spec: BinaryInteractionSpec },
    BinaryNetwork { network: BinaryNetwork },
}

impl Structure {
    pub fn is_binary(&self) -> bool {
        !matches!(self, Structure::Linear { .. } | Structure::LinearInteraction { .. })
    }

    pub fn network(&self) -> Result<BinaryNetwork> {
        match self {
            Structure::BinaryConfounding { params } => confounding_network(params),
            Structure::BinarySelection { params } => selection_network(params),
            Structure::BinaryMeasurement { spec } => spec.network(),
            Structure::BinaryInteraction { spec } => spec.network(),
            Structure::BinaryNetwork { network } => Ok(network.clone()),
            _ => Err(Error::InvalidParams("not a binary structure".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScmSpec {
    pub structure: Structure,
    pub n: usize,
    pub seed: u64,
}

impl ScmSpec {
    pub fn new(structure: Structure, n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParams("sample count must be at least 1".into()));
        }
        Ok(ScmSpec { structure, n, seed })
    }
}

/// Draws `spec.n` rows.
pub fn simulate(spec: &ScmSpec) -> Result<Dataset> {
    if spec.n == 0 {
        return Err(Error::InvalidParams("sample count must be at least 1".into()));
    }
    let mut rng = rng_from_seed(spec.seed);
    match &spec.structure {
        Structure::Linear { model } => simulate_linear(&model.graph(), spec.n, &mut rng),
        Structure::LinearInteraction { spec: s } => simulate_linear_interaction(s, spec.n, &mut rng),
        other => other.network()?.sample(spec.n, &mut rng),
    }
}

/// Exact joint table of a binary structure; independent of any seed.
pub fn enumerate_joint(structure: &Structure) -> Result<JointTable> {
    structure.network()?.enumerate()
}

/// Samples a linear graph: each node is the coefficient-weighted sum of its
/// parents plus independent Gaussian noise with the node's exogenous
/// variance.
pub fn simulate_linear<R: Rng + ?Sized>(graph: &CausalGraph, n: usize, rng: &mut R) -> Result<Dataset> {
    if !graph.is_linear() {
        return Err(Error::InvalidGraph("simulation needs coefficients on every edge".into()));
    }
    let order: Vec<String> = graph.topological_order()?.iter().map(|s| s.to_string()).collect();
    let names: Vec<String> = graph.nodes().iter().map(|n| n.name.clone()).collect();
    let pos: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let plan: Vec<(usize, f64, Vec<(usize, f64)>)> = order
        .iter()
        .map(|v| {
            let node = graph.node(v).expect("node from topological order");
            let sd = node.variance.unwrap_or(crate::graph::DEFAULT_EXOGENOUS_VARIANCE).sqrt();
            let parents = graph
                .edges()
                .iter()
                .filter(|e| e.to == *v)
                .map(|e| (pos[e.from.as_str()], e.coefficient.unwrap_or(0.0)))
                .collect();
            (pos[v.as_str()], sd, parents)
        })
        .collect();
    let mut columns = vec![Vec::with_capacity(n); names.len()];
    let mut row = vec![0.0; names.len()];
    for _ in 0..n {
        for (i, sd, parents) in &plan {
            let noise: f64 = rng.sample(StandardNormal);
            row[*i] = parents.iter().map(|(p, c)| c * row[*p]).sum::<f64>() + sd * noise;
        }
        for (c, v) in columns.iter_mut().zip(&row) {
            c.push(*v);
        }
    }
    Dataset::new(names, columns)
}

/// A ~ Bern(pA), B ~ Bern(pB), C ~ N(0, 1) independent;
/// Y = b0 + b1 A + b2 B + b3 AB + b4 C + N(0, 1).
pub fn simulate_linear_interaction<R: Rng + ?Sized>(
    s: &InteractionLinearSpec,
    n: usize,
    rng: &mut R,
) -> Result<Dataset> {
    let mut cols: Vec<Vec<f64>> = (0..4).map(|_| Vec::with_capacity(n)).collect();
    for _ in 0..n {
        let a = f64::from(u8::from(rng.random::<f64>() < s.p_a1));
        let b = f64::from(u8::from(rng.random::<f64>() < s.p_b1));
        let c: f64 = rng.sample(StandardNormal);
        let u: f64 = rng.sample(StandardNormal);
        let y = s.beta0 + s.beta1 * a + s.beta2 * b + s.beta3 * a * b + s.beta4 * c + u;
        for (col, v) in cols.iter_mut().zip([a, b, c, y]) {
            col.push(v);
        }
    }
    Dataset::new(vec!["A".into(), "B".into(), "C".into(), "Y".into()], cols)
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepBias {
    /// Parameters `beta`, `gamma`.
    Conf,
    /// Parameters `alpha`, `eta`, `epsilon`.
    Sel,
    /// Parameters `beta`, `gamma`, `lambda`.
    Meas,
}

impl SweepBias {
    pub fn parameters(self) -> &'static [&'static str] {
        match self {
            SweepBias::Conf => &["beta", "gamma"],
            SweepBias::Sel => &["alpha", "eta", "epsilon"],
            SweepBias::Meas => &["beta", "gamma", "lambda"],
        }
    }

    /// Closed-form bias at `v` (values in [`SweepBias::parameters`] order),
    /// with unit noise or on standardized variables.
    pub fn evaluate(self, v: &[f64], standardized: bool) -> Result<f64> {
        match (self, standardized) {
            (SweepBias::Conf, true) => Ok(linear::conf_bias_standardized(v[0], v[1])),
            (SweepBias::Sel, true) => linear::sel_bias_standardized(v[0], v[1], v[2]),
            (SweepBias::Meas, true) => linear::meas_bias_standardized(v[0], v[1], v[2]),
            (SweepBias::Conf, false) => PathModel::unit_noise(PathStructure::Confounding {
                alpha: 0.0,
                beta: v[0],
                gamma: v[1],
            })?
            .closed_form_bias(),
            (SweepBias::Sel, false) => PathModel::unit_noise(PathStructure::Colliding {
                alpha: v[0],
                eta: v[1],
                epsilon: v[2],
            })?
            .closed_form_bias(),
            (SweepBias::Meas, false) => PathModel::unit_noise(PathStructure::Measurement {
                alpha: 0.0,
                beta: v[0],
                gamma: v[1],
                lambda: v[2],
            })?
            .closed_form_bias(),
        }
    }
}

impl std::str::FromStr for SweepBias {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conf" => Ok(SweepBias::Conf),
            "sel" => Ok(SweepBias::Sel),
            "meas" => Ok(SweepBias::Meas),
            other => Err(Error::InvalidParams(format!("unknown sweep bias `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Axis {
    pub name: String,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Axis {
    pub fn new(name: &str, start: f64, stop: f64, step: f64) -> Result<Self> {
        if !(start.is_finite() && stop.is_finite() && step.is_finite() && step > 0.0 && stop >= start) {
            return Err(Error::InvalidParams(format!(
                "axis `{name}` needs finite start <= stop and step > 0"
            )));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        if count > 100_000 {
            return Err(Error::InvalidParams(format!("axis `{name}` has {count} points")));
        }
        Ok(Axis {
            name: name.to_string(),
            start,
            stop,
            step,
        })
    }

    /// Parses `name=start:stop:step`.
    pub fn parse(text: &str) -> Result<Self> {
        let (name, range) = text
            .split_once('=')
            .ok_or_else(|| Error::InvalidParams(format!("axis `{text}` is not name=start:stop:step")))?;
        let parts: Vec<&str> = range.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::InvalidParams(format!("axis `{text}` is not name=start:stop:step")));
        }
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidParams(format!("axis `{text}`: `{s}` is not a number")))
        };
        Axis::new(name.trim(), num(parts[0])?, num(parts[1])?, num(parts[2])?)
    }

    /// Grid points, computed as start + i * step and rounded to 9 decimals
    /// so printed coordinates are clean.
    pub fn values(&self) -> Vec<f64> {
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|i| {
                let v = ((self.start + i as f64 * self.step) * 1e9).round() / 1e9;
                if v == 0.0 {
                    0.0
                } else {
                    v
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    pub bias: SweepBias,
    pub axes: Vec<Axis>,
    /// Value of every parameter not on an axis.
    pub hold: f64,
    pub standardized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingularCell {
    pub index: usize,
    pub coordinates: Vec<f64>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepGrid {
    pub bias: SweepBias,
    pub standardized: bool,
    pub axis_names: Vec<String>,
    pub fixed: BTreeMap<String, f64>,
    /// Coordinates per cell, first axis varying slowest.
    pub coordinates: Vec<Vec<f64>>,
    /// Bias per cell; NaN where the closed form is singular.
    pub values: Vec<f64>,
    pub singular: Vec<SingularCell>,
}

/// Evaluates the closed form at every grid point. Cells are evaluated in
/// parallel and written in row-major order, so the result does not depend
/// on scheduling.
pub fn sweep(config: &SweepConfig) -> Result<SweepGrid> {
    let params = config.bias.parameters();
    if config.axes.is_empty() {
        return Err(Error::InvalidParams("a sweep needs at least one axis".into()));
    }
    let mut seen = HashSet::new();
    for axis in &config.axes {
        if !params.contains(&axis.name.as_str()) {
            return Err(Error::InvalidParams(format!(
                "`{}` is not a parameter of this bias; expected one of {}",
                axis.name,
                params.join(", ")
            )));
        }
        if !seen.insert(axis.name.as_str()) {
            return Err(Error::InvalidParams(format!("axis `{}` given twice", axis.name)));
        }
    }
    if !config.hold.is_finite() {
        return Err(Error::InvalidParams("hold value must be finite".into()));
    }
    let fixed: BTreeMap<String, f64> = params
        .iter()
        .filter(|p| !seen.contains(**p))
        .map(|p| (p.to_string(), config.hold))
        .collect();
    let axis_values: Vec<Vec<f64>> = config.axes.iter().map(Axis::values).collect();
    let total: usize = axis_values.iter().map(Vec::len).product();
    let coordinates: Vec<Vec<f64>> = (0..total)
        .map(|mut idx| {
            let mut c = vec![0.0; axis_values.len()];
            for (j, vals) in axis_values.iter().enumerate().rev() {
                c[j] = vals[idx % vals.len()];
                idx /= vals.len();
            }
            c
        })
        .collect();
    let slots: Vec<usize> = params
        .iter()
        .map(|p| config.axes.iter().position(|a| a.name == *p).map_or(usize::MAX, |i| i))
        .collect();
    let results: Vec<std::result::Result<f64, String>> = coordinates
        .par_iter()
        .map(|c| {
            let v: Vec<f64> = slots
                .iter()
                .map(|&s| if s == usize::MAX { config.hold } else { c[s] })
                .collect();
            match config.bias.evaluate(&v, config.standardized) {
                Ok(x) if x.is_finite() => Ok(x),
                Ok(x) => Err(format!("non-finite value {x}")),
                Err(e) => Err(e.to_string()),
            }
        })
        .collect();
    let mut values = Vec::with_capacity(total);
    let mut singular = Vec::new();
    for (index, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => values.push(v),
            Err(message) => {
                values.push(f64::NAN);
                singular.push(SingularCell {
                    index,
                    coordinates: coordinates[index].clone(),
                    message,
                });
            }
        }
    }
    Ok(SweepGrid {
        bias: config.bias,
        standardized: config.standardized,
        axis_names: config.axes.iter().map(|a| a.name.clone()).collect(),
        fixed,
        coordinates,
        values,
        singular,
    })
}

impl SweepGrid {
    /// Headered CSV: one column per axis, then `bias`.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str(&self.axis_names.join(","));
        s.push_str(",bias\n");
        for (c, v) in self.coordinates.iter().zip(&self.values) {
            for x in c {
                let _ = write!(s, "{x},");
            }
            // Adding 0.0 turns -0 into 0.
            let _ = writeln!(s, "{}", *v + 0.0);
        }
        s
    }

    pub fn value_at(&self, coords: &[f64]) -> Option<f64> {
        self.coordinates
            .iter()
            .position(|c| c.iter().zip(coords).all(|(a, b)| (a - b).abs() < 1e-12))
            .map(|i| self.values[i])
    }
}

/// One-parameter slices with every other parameter held at `hold`, for each
/// axis of `config`. CSV columns: `parameter,value,bias`.
pub fn slices_csv(config: &SweepConfig, hold: f64) -> Result<String> {
    let mut s = String::from("parameter,value,bias\n");
    for axis in &config.axes {
        let grid = sweep(&SweepConfig {
            bias: config.bias,
            axes: vec![axis.clone()],
            hold,
            standardized: config.standardized,
        })?;
        for (c, v) in grid.coordinates.iter().zip(&grid.values) {
            let _ = writeln!(s, "{},{},{}", axis.name, c[0], *v + 0.0);
        }
    }
    Ok(s)
}

/// Convenience used by the CLI: binary parameters named as in
/// [`BinaryParams`].
pub fn binary_params_from_map(map: &BTreeMap<String, f64>) -> Result<BinaryParams> {
    let get = |k: &str| {
        map.get(k)
            .copied()
            .ok_or_else(|| Error::InvalidParams(format!("missing parameter `{k}`")))
    };
    BinaryParams::new(
        get("alpha")?,
        get("beta")?,
        get("gamma")?,
        get("delta")?,
        get("epsilon")?,
        get("tau")?,
        map.get("lambda").copied().unwrap_or(0.5),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_confounding_table() {
        let p = BinaryParams::new(0.9, 0.1, 0.8, 0.2, 0.4, 0.3, 0.5).unwrap();
        let t = enumerate_joint(&Structure::BinaryConfounding { params: p }).unwrap();
        let p_a1 = t.cond_prob(&[("Y", 1)], &[("A", 1)]).unwrap();
        let p_a0 = t.cond_prob(&[("Y", 1)], &[("A", 0)]).unwrap();
        assert!((p_a1 - 0.74).abs() < 1e-12, "{p_a1}");
        assert!((p_a0 - 0.34).abs() < 1e-12, "{p_a0}");
        assert!((t.stat_disp_adjusted("Y", "A", &["Z"]).unwrap() + 0.02).abs() < 1e-12);
        assert!((t.prob(&[("A", 1)]).unwrap() - 0.5).abs() < 1e-12);
        assert!((t.prob(&[("Z", 1)]).unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn zero_rows_rejected_and_single_row_reproducible() {
        let p = BinaryParams::new(0.9, 0.1, 0.8, 0.2, 0.4, 0.3, 0.5).unwrap();
        let s = Structure::BinaryConfounding { params: p };
        assert!(ScmSpec::new(s.clone(), 0, 1).is_err());
        let spec = ScmSpec::new(s, 1, 7).unwrap();
        assert_eq!(simulate(&spec).unwrap(), simulate(&spec).unwrap());
    }

    #[test]
    fn perfect_proxy_copies_confounder() {
        let spec = BinaryMeasurementSpec {
            t_given_z: [0.0, 1.0],
            ..BinaryMeasurementSpec::randomize(3)
        };
        let d = simulate(&ScmSpec::new(Structure::BinaryMeasurement { spec }, 1000, 3).unwrap()).unwrap();
        assert_eq!(d.column("T").unwrap(), d.column("Z").unwrap());
        assert_eq!(spec.error_mechanism().unwrap(), ErrorMechanism::PERFECT);
    }

    #[test]
    fn network_validation() {
        assert!(BinaryNetwork::new(vec![BinaryNode::new("A", &["Z"], vec![0.5, 0.5])]).is_err());
        assert!(BinaryNetwork::new(vec![BinaryNode::new("A", &[], vec![1.5])]).is_err());
        assert!(BinaryNetwork::new(vec![BinaryNode::new("A", &[], vec![0.5, 0.5])]).is_err());
    }

    #[test]
    fn axis_values_are_clean() {
        let a = Axis::parse("beta=-1:1:0.1").unwrap();
        let v = a.values();
        assert_eq!(v.len(), 21);
        assert_eq!(v[10], 0.0);
        assert_eq!(v[13], 0.3);
        assert_eq!(v[20], 1.0);
        assert!(Axis::parse("beta=1:0:0.1").is_err());
        assert!(Axis::parse("beta=0:1").is_err());
    }

    #[test]
    fn conf_sweep_small_grid() {
        let config = SweepConfig {
            bias: SweepBias::Conf,
            axes: vec![Axis::parse("beta=-1:1:1").unwrap(), Axis::parse("gamma=-1:1:1").unwrap()],
            hold: 0.5,
            standardized: true,
        };
        let g = sweep(&config).unwrap();
        assert_eq!(g.values.len(), 9);
        for (c, v) in g.coordinates.iter().zip(&g.values) {
            if c[0] == 0.0 || c[1] == 0.0 {
                assert_eq!(*v, 0.0);
            }
        }
        assert_eq!(g.value_at(&[1.0, 1.0]), Some(1.0));
        assert!(g.to_csv().starts_with("beta,gamma,bias\n-1,-1,1\n"));
    }

    #[test]
    fn sweep_rejects_unknown_axis() {
        let config = SweepConfig {
            bias: SweepBias::Conf,
            axes: vec![Axis::parse("eta=-1:1:1").unwrap()],
            hold: 0.5,
            standardized: false,
        };
        assert!(sweep(&config).is_err());
    }

    #[test]
    fn singular_cells_become_nan() {
        // Standardized colliding structure is singular at eta + alpha epsilon = 1.
        let config = SweepConfig {
            bias: SweepBias::Sel,
            axes: vec![Axis::parse("eta=0:1:0.5").unwrap()],
            hold: 1.0,
            standardized: true,
        };
        let g = sweep(&config).unwrap();
        assert!(g.values[0].is_nan());
        assert_eq!(g.singular.len(), 1);
        assert_eq!(g.singular[0].index, 0);
    }
}

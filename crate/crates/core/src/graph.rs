//! Causal DAGs with variable roles and optional linear path coefficients.
//!
//! A [`CausalGraph`] is a plain value: it may hold an invalid structure, and
//! [`CausalGraph::validate`] reports what is wrong with it. Every query that
//! needs a well-formed DAG validates first and fails with
//! [`Error::InvalidGraph`] otherwise.
//!
//! The text format is line based:
//!
//! ```text
//! # comment
//! node Z role=covariate var=1.0
//! node A role=sensitive
//! node Y role=outcome
//! node W role=covariate conditioned
//! edge Z -> A coef=0.5
//! ```

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear::CovMatrix;

/// Largest graph for which Wright's rule enumerates simple paths.
pub const MAX_PATH_ENUMERATION_NODES: usize = 12;

/// Default exogenous variance when a node carries no `var=` annotation.
pub const DEFAULT_EXOGENOUS_VARIANCE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Sensitive,
    Outcome,
    Covariate,
    Proxy,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Sensitive => "sensitive",
            Role::Outcome => "outcome",
            Role::Covariate => "covariate",
            Role::Proxy => "proxy",
        })
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "sensitive" => Ok(Role::Sensitive),
            "outcome" => Ok(Role::Outcome),
            "covariate" => Ok(Role::Covariate),
            "proxy" => Ok(Role::Proxy),
            other => Err(format!("unknown role `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub name: String,
    pub role: Role,
    pub latent: bool,
    /// Selection node: the data were generated conditionally on it.
    pub conditioned: bool,
    /// Exogenous (noise) variance. For root nodes this is the total variance.
    pub variance: Option<f64>,
}

impl Node {
    pub fn new(name: impl Into<String>, role: Role) -> Self {
        Node {
            name: name.into(),
            role,
            latent: false,
            conditioned: false,
            variance: None,
        }
    }

    pub fn latent(mut self) -> Self {
        self.latent = true;
        self
    }

    pub fn conditioned(mut self) -> Self {
        self.conditioned = true;
        self
    }

    pub fn with_variance(mut self, variance: f64) -> Self {
        self.variance = Some(variance);
        self
    }

    fn exogenous_variance(&self) -> f64 {
        self.variance.unwrap_or(DEFAULT_EXOGENOUS_VARIANCE)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
    pub coefficient: Option<f64>,
}

impl Edge {
    pub fn new(from: impl Into<String>, to: impl Into<String>) -> Self {
        Edge {
            from: from.into(),
            to: to.into(),
            coefficient: None,
        }
    }

    pub fn linear(from: impl Into<String>, to: impl Into<String>, coefficient: f64) -> Self {
        Edge {
            from: from.into(),
            to: to.into(),
            coefficient: Some(coefficient),
        }
    }
}

/// One problem found by [`CausalGraph::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Cycle(Vec<String>),
    DanglingEdge { from: String, to: String, missing: String },
    DuplicateNode(String),
    DuplicateEdge { from: String, to: String },
    MixedCoefficients,
    InvalidVariance(String),
    InvalidCoefficient { from: String, to: String },
}

impl Violation {
    pub fn kind(&self) -> &'static str {
        match self {
            Violation::Cycle(_) => "cycle",
            Violation::DanglingEdge { .. } => "dangling edge",
            Violation::DuplicateNode(_) => "duplicate name",
            Violation::DuplicateEdge { .. } => "duplicate edge",
            Violation::MixedCoefficients => "mixed coefficient annotation",
            Violation::InvalidVariance(_) => "invalid variance",
            Violation::InvalidCoefficient { .. } => "invalid coefficient",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Cycle(nodes) => write!(f, "cycle through {}", nodes.join(", ")),
            Violation::DanglingEdge { from, to, missing } => {
                write!(f, "dangling edge {from} -> {to}: node `{missing}` is not declared")
            }
            Violation::DuplicateNode(name) => write!(f, "duplicate name `{name}`"),
            Violation::DuplicateEdge { from, to } => write!(f, "duplicate edge {from} -> {to}"),
            Violation::MixedCoefficients => {
                f.write_str("mixed coefficient annotation: either all edges carry coef= or none")
            }
            Violation::InvalidVariance(name) => {
                write!(f, "variance of `{name}` must be finite and positive")
            }
            Violation::InvalidCoefficient { from, to } => {
                write!(f, "coefficient on {from} -> {to} must be finite")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: &str) -> bool {
        self.violations.iter().any(|v| v.kind() == kind)
    }
}

/// Structural roles of the nodes around one (sensitive, outcome) pair.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StructureTags {
    /// Observed common causes of the sensitive variable and the outcome.
    pub confounders: Vec<String>,
    pub latent_confounders: Vec<String>,
    /// Conditioned common descendants of the sensitive variable and the outcome.
    pub colliders: Vec<String>,
    /// `(proxy, latent confounder it measures)`.
    pub proxies: Vec<(String, String)>,
    pub second_sensitive: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CausalGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

/// Index-based adjacency of a validated graph.
struct Dag<'g> {
    graph: &'g CausalGraph,
    index: HashMap<&'g str, usize>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
}

impl<'g> Dag<'g> {
    fn id(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    fn name(&self, id: usize) -> &'g str {
        &self.graph.nodes[id].name
    }

    fn ancestors_of(&self, seeds: &[usize]) -> HashSet<usize> {
        let mut seen: HashSet<usize> = seeds.iter().copied().collect();
        let mut queue: VecDeque<usize> = seeds.iter().copied().collect();
        while let Some(v) = queue.pop_front() {
            for &p in &self.parents[v] {
                if seen.insert(p) {
                    queue.push_back(p);
                }
            }
        }
        seen
    }

    /// Strict descendants of `start`, never expanding through `blocked`.
    fn descendants_avoiding(&self, start: usize, blocked: Option<usize>) -> HashSet<usize> {
        let mut seen = HashSet::new();
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &c in &self.children[v] {
                if Some(c) == blocked {
                    continue;
                }
                if seen.insert(c) {
                    queue.push_back(c);
                }
            }
        }
        seen
    }

    fn topological_order(&self) -> Vec<usize> {
        let n = self.parents.len();
        let mut indegree: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &c in &self.children[v] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        order
    }
}

impl CausalGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_parts(nodes: Vec<Node>, edges: Vec<Edge>) -> Self {
        CausalGraph { nodes, edges }
    }

    pub fn with_node(mut self, node: Node) -> Self {
        self.nodes.push(node);
        self
    }

    pub fn with_edge(mut self, edge: Edge) -> Self {
        self.edges.push(edge);
        self
    }

    pub fn add_node(&mut self, node: Node) {
        self.nodes.push(node);
    }

    pub fn add_edge(&mut self, edge: Edge) {
        self.edges.push(edge);
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node(&self, name: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn node_mut(&mut self, name: &str) -> Option<&mut Node> {
        self.nodes.iter_mut().find(|n| n.name == name)
    }

    /// Returns a copy without the edge `from -> to` (no-op if absent).
    pub fn without_edge(&self, from: &str, to: &str) -> Self {
        let mut g = self.clone();
        g.edges.retain(|e| !(e.from == from && e.to == to));
        g
    }

    pub fn nodes_with_role(&self, role: Role) -> Vec<&str> {
        self.nodes
            .iter()
            .filter(|n| n.role == role)
            .map(|n| n.name.as_str())
            .collect()
    }

    /// True when every edge carries a coefficient.
    pub fn is_linear(&self) -> bool {
        self.edges.iter().all(|e| e.coefficient.is_some())
    }

    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();

        let mut seen = HashSet::new();
        for node in &self.nodes {
            if !seen.insert(node.name.as_str()) {
                violations.push(Violation::DuplicateNode(node.name.clone()));
            }
            if let Some(v) = node.variance {
                if !(v.is_finite() && v > 0.0) {
                    violations.push(Violation::InvalidVariance(node.name.clone()));
                }
            }
        }

        let mut edge_set = HashSet::new();
        for edge in &self.edges {
            for end in [&edge.from, &edge.to] {
                if !seen.contains(end.as_str()) {
                    violations.push(Violation::DanglingEdge {
                        from: edge.from.clone(),
                        to: edge.to.clone(),
                        missing: end.clone(),
                    });
                }
            }
            if !edge_set.insert((edge.from.as_str(), edge.to.as_str())) {
                violations.push(Violation::DuplicateEdge {
                    from: edge.from.clone(),
                    to: edge.to.clone(),
                });
            }
            if matches!(edge.coefficient, Some(c) if !c.is_finite()) {
                violations.push(Violation::InvalidCoefficient {
                    from: edge.from.clone(),
                    to: edge.to.clone(),
                });
            }
        }

        let annotated = self.edges.iter().filter(|e| e.coefficient.is_some()).count();
        if annotated != 0 && annotated != self.edges.len() {
            violations.push(Violation::MixedCoefficients);
        }

        // Kahn's algorithm over the declared nodes; whatever never reaches
        // indegree zero lies on (or downstream of) a cycle.
        let index: HashMap<&str, usize> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.name.as_str(), i))
            .collect();
        let mut indegree = vec![0usize; self.nodes.len()];
        let mut children = vec![Vec::new(); self.nodes.len()];
        for edge in &self.edges {
            if let (Some(&f), Some(&t)) = (index.get(edge.from.as_str()), index.get(edge.to.as_str())) {
                children[f].push(t);
                indegree[t] += 1;
            }
        }
        let mut queue: VecDeque<usize> = (0..self.nodes.len()).filter(|&v| indegree[v] == 0).collect();
        let mut removed = 0;
        while let Some(v) = queue.pop_front() {
            removed += 1;
            for &c in &children[v] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        if removed < self.nodes.len() {
            let stuck = (0..self.nodes.len())
                .filter(|&v| indegree[v] > 0)
                .map(|v| self.nodes[v].name.clone())
                .collect();
            violations.push(Violation::Cycle(stuck));
        }

        ValidationReport { violations }
    }

    fn dag(&self) -> Result<Dag<'_>> {
        let report = self.validate();
        if !report.is_valid() {
            let msg = report
                .violations
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; ");
            return Err(Error::InvalidGraph(msg));
        }
        let index: HashMap<&str, usize> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.name.as_str(), i))
            .collect();
        let mut parents = vec![Vec::new(); self.nodes.len()];
        let mut children = vec![Vec::new(); self.nodes.len()];
        for edge in &self.edges {
            let f = index[edge.from.as_str()];
            let t = index[edge.to.as_str()];
            parents[t].push(f);
            children[f].push(t);
        }
        Ok(Dag {
            graph: self,
            index,
            parents,
            children,
        })
    }

    pub fn parents(&self, name: &str) -> Result<Vec<&str>> {
        let dag = self.dag()?;
        let v = dag.id(name)?;
        Ok(dag.parents[v].iter().map(|&p| dag.name(p)).collect())
    }

    pub fn children(&self, name: &str) -> Result<Vec<&str>> {
        let dag = self.dag()?;
        let v = dag.id(name)?;
        Ok(dag.children[v].iter().map(|&c| dag.name(c)).collect())
    }

    /// Node names in a topological order (parents before children).
    pub fn topological_order(&self) -> Result<Vec<&str>> {
        let dag = self.dag()?;
        Ok(dag.topological_order().into_iter().map(|v| dag.name(v)).collect())
    }

    /// d-separation of `x` and `y` given `given`, by Bayes-ball reachability.
    pub fn d_separated(&self, x: &str, y: &str, given: &[&str]) -> Result<bool> {
        let dag = self.dag()?;
        let xs = dag.id(x)?;
        let ys = dag.id(y)?;
        if xs == ys {
            return Err(Error::InvalidQuery(format!("d-separation of `{x}` from itself")));
        }
        let mut observed = HashSet::new();
        for g in given {
            let id = dag.id(g)?;
            if id == xs || id == ys {
                return Err(Error::InvalidQuery(format!(
                    "`{g}` is both an endpoint and in the conditioning set"
                )));
            }
            observed.insert(id);
        }
        let observed_ancestors = dag.ancestors_of(&observed.iter().copied().collect::<Vec<_>>());

        // (node, arrived_from_child): "up" traversals move against edges.
        let mut visited: HashSet<(usize, bool)> = HashSet::new();
        let mut queue = VecDeque::from([(xs, true)]);
        while let Some((v, up)) = queue.pop_front() {
            if !visited.insert((v, up)) {
                continue;
            }
            if v == ys && !observed.contains(&v) {
                return Ok(false);
            }
            let is_observed = observed.contains(&v);
            if up {
                if !is_observed {
                    queue.extend(dag.parents[v].iter().map(|&p| (p, true)));
                    queue.extend(dag.children[v].iter().map(|&c| (c, false)));
                }
            } else {
                if !is_observed {
                    queue.extend(dag.children[v].iter().map(|&c| (c, false)));
                }
                // A collider opens when it or one of its descendants is observed.
                if observed_ancestors.contains(&v) {
                    queue.extend(dag.parents[v].iter().map(|&p| (p, true)));
                }
            }
        }
        Ok(true)
    }

    fn require_linear(&self) -> Result<()> {
        if self.edges.iter().any(|e| e.coefficient.is_none()) {
            return Err(Error::InvalidParams(
                "linear computation requires a coefficient on every edge".into(),
            ));
        }
        Ok(())
    }

    /// Total (model-implied) variances of every node, in node order.
    ///
    /// Each node's variance is its exogenous variance plus the variance
    /// transmitted by its parents, with parent covariances taken from
    /// [`CausalGraph::wright_covariance`].
    pub fn total_variances(&self) -> Result<Vec<f64>> {
        self.require_linear()?;
        let dag = self.dag()?;
        self.total_variances_of(&dag)
    }

    fn total_variances_of(&self, dag: &Dag<'_>) -> Result<Vec<f64>> {
        if self.nodes.len() > MAX_PATH_ENUMERATION_NODES {
            return Err(Error::InvalidGraph(format!(
                "path enumeration is limited to {MAX_PATH_ENUMERATION_NODES} nodes, graph has {}",
                self.nodes.len()
            )));
        }
        let coef: HashMap<(usize, usize), f64> = self
            .edges
            .iter()
            .map(|e| ((dag.index[e.from.as_str()], dag.index[e.to.as_str()]), e.coefficient.unwrap_or(0.0)))
            .collect();
        let mut var = vec![f64::NAN; self.nodes.len()];
        for v in dag.topological_order() {
            let mut total = self.nodes[v].exogenous_variance();
            let parents = &dag.parents[v];
            for &p in parents {
                for &q in parents {
                    let cpq = if p == q {
                        var[p]
                    } else {
                        wright_paths(dag, &coef, &var, p, q)
                    };
                    total += coef[&(p, v)] * coef[&(q, v)] * cpq;
                }
            }
            var[v] = total;
        }
        Ok(var)
    }

    /// Covariance of `x` and `y` by Wright's path rule: the sum over all
    /// simple collider-free paths of the product of their coefficients,
    /// weighted by the total variance of the path's source node.
    pub fn wright_covariance(&self, x: &str, y: &str) -> Result<f64> {
        self.require_linear()?;
        let dag = self.dag()?;
        let xs = dag.id(x)?;
        let ys = dag.id(y)?;
        if xs == ys {
            return Err(Error::InvalidQuery(
                "Wright covariance of a variable with itself; use total_variances".into(),
            ));
        }
        let var = self.total_variances_of(&dag)?;
        let coef: HashMap<(usize, usize), f64> = self
            .edges
            .iter()
            .map(|e| ((dag.index[e.from.as_str()], dag.index[e.to.as_str()]), e.coefficient.unwrap_or(0.0)))
            .collect();
        Ok(wright_paths(&dag, &coef, &var, xs, ys))
    }

    /// Model-implied covariance matrix by forward recursion in topological
    /// order: cov(i, j) = sum over parents p of j of b_pj * cov(i, p).
    ///
    /// Independent of the path enumeration in [`CausalGraph::wright_covariance`].
    pub fn implied_covariance(&self) -> Result<CovMatrix> {
        self.require_linear()?;
        let dag = self.dag()?;
        let n = self.nodes.len();
        let order = dag.topological_order();
        let mut cov = vec![vec![0.0; n]; n];
        let coef: HashMap<(usize, usize), f64> = self
            .edges
            .iter()
            .map(|e| ((dag.index[e.from.as_str()], dag.index[e.to.as_str()]), e.coefficient.unwrap_or(0.0)))
            .collect();
        for (pos, &j) in order.iter().enumerate() {
            for &i in &order[..pos] {
                let c: f64 = dag.parents[j].iter().map(|&p| coef[&(p, j)] * cov[i][p]).sum();
                cov[i][j] = c;
                cov[j][i] = c;
            }
            let var: f64 = self.nodes[j].exogenous_variance()
                + dag.parents[j]
                    .iter()
                    .map(|&p| coef[&(p, j)] * cov[p][j])
                    .sum::<f64>();
            cov[j][j] = var;
        }
        let names = self.nodes.iter().map(|n| n.name.clone()).collect();
        CovMatrix::from_rows(names, cov, None)
    }

    /// Tags the confounders, colliders, proxies and additional sensitive
    /// variables around the pair (`a`, `y`).
    pub fn classify_structure(&self, a: &str, y: &str) -> Result<StructureTags> {
        let dag = self.dag()?;
        let av = dag.id(a)?;
        let yv = dag.id(y)?;
        if self.nodes[av].role != Role::Sensitive {
            return Err(Error::Structure(format!(
                "`{a}` has role {} but must be sensitive",
                self.nodes[av].role
            )));
        }
        if self.nodes[yv].role != Role::Outcome {
            return Err(Error::Structure(format!(
                "`{y}` has role {} but must be the outcome",
                self.nodes[yv].role
            )));
        }

        let ancestors_of_a = dag.ancestors_of(&[av]);
        let desc_a = dag.descendants_avoiding(av, None);
        let desc_y = dag.descendants_avoiding(yv, None);

        let mut tags = StructureTags::default();
        let mut latent = BTreeSet::new();
        for v in 0..self.nodes.len() {
            if v == av || v == yv {
                continue;
            }
            let node = &self.nodes[v];
            // Common cause: ancestor of A with a directed path to Y avoiding A.
            if ancestors_of_a.contains(&v) && dag.descendants_avoiding(v, Some(av)).contains(&yv) {
                if node.latent {
                    latent.insert(v);
                    tags.latent_confounders.push(node.name.clone());
                } else {
                    tags.confounders.push(node.name.clone());
                }
            }
            if node.conditioned && desc_a.contains(&v) && desc_y.contains(&v) {
                tags.colliders.push(node.name.clone());
            }
            if node.role == Role::Sensitive {
                tags.second_sensitive.push(node.name.clone());
            }
        }
        for v in 0..self.nodes.len() {
            if self.nodes[v].role != Role::Proxy {
                continue;
            }
            if let Some(&z) = dag.parents[v].iter().find(|p| latent.contains(p)) {
                tags.proxies
                    .push((self.nodes[v].name.clone(), self.nodes[z].name.clone()));
            }
        }
        Ok(tags)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut graph = CausalGraph::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                line: line_no,
                message,
            };
            let mut tokens = line.split_whitespace();
            match tokens.next() {
                Some("node") => {
                    let name = tokens
                        .next()
                        .ok_or_else(|| err("node declaration without a name".into()))?;
                    let mut role = None;
                    let mut node = Node::new(name, Role::Covariate);
                    for tok in tokens {
                        match tok.split_once('=') {
                            Some(("role", r)) => {
                                role = Some(r.parse::<Role>().map_err(err)?);
                            }
                            Some(("var", v)) => {
                                let v: f64 = v
                                    .parse()
                                    .map_err(|_| err(format!("invalid variance `{v}`")))?;
                                node.variance = Some(v);
                            }
                            Some((key, _)) => return Err(err(format!("unknown attribute `{key}`"))),
                            None => match tok {
                                "latent" => node.latent = true,
                                "conditioned" => node.conditioned = true,
                                other => return Err(err(format!("unknown flag `{other}`"))),
                            },
                        }
                    }
                    node.role = role.ok_or_else(|| err(format!("node `{name}` has no role=")))?;
                    graph.add_node(node);
                }
                Some("edge") => {
                    let from = tokens.next().ok_or_else(|| err("edge without source".into()))?;
                    match tokens.next() {
                        Some("->") => {}
                        other => {
                            return Err(err(format!(
                                "expected `->` after `{from}`, found `{}`",
                                other.unwrap_or("end of line")
                            )))
                        }
                    }
                    let to = tokens.next().ok_or_else(|| err("edge without target".into()))?;
                    let mut edge = Edge::new(from, to);
                    for tok in tokens {
                        match tok.split_once('=') {
                            Some(("coef", c)) => {
                                let c: f64 = c
                                    .parse()
                                    .map_err(|_| err(format!("invalid coefficient `{c}`")))?;
                                edge.coefficient = Some(c);
                            }
                            _ => return Err(err(format!("unknown edge attribute `{tok}`"))),
                        }
                    }
                    graph.add_edge(edge);
                }
                Some(other) => return Err(err(format!("unknown directive `{other}`"))),
                None => {}
            }
        }
        Ok(graph)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            out.push_str(&format!("node {} role={}", n.name, n.role));
            if n.latent {
                out.push_str(" latent");
            }
            if n.conditioned {
                out.push_str(" conditioned");
            }
            if let Some(v) = n.variance {
                out.push_str(&format!(" var={v}"));
            }
            out.push('\n');
        }
        for e in &self.edges {
            out.push_str(&format!("edge {} -> {}", e.from, e.to));
            if let Some(c) = e.coefficient {
                out.push_str(&format!(" coef={c}"));
            }
            out.push('\n');
        }
        out
    }
}

impl FromStr for CausalGraph {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CausalGraph::parse(s)
    }
}

/// Depth-first enumeration of simple paths from `x` to `y` in the skeleton,
/// skipping any path with a collider at an interior node.
fn wright_paths(
    dag: &Dag<'_>,
    coef: &HashMap<(usize, usize), f64>,
    var: &[f64],
    x: usize,
    y: usize,
) -> f64 {
    struct Walk<'a, 'g> {
        dag: &'a Dag<'g>,
        coef: &'a HashMap<(usize, usize), f64>,
        var: &'a [f64],
        target: usize,
        on_path: Vec<bool>,
        total: f64,
    }

    impl Walk<'_, '_> {
        // `entered_forward`: the last edge was traversed along its direction
        // (we arrived at `v` through an arrowhead). `source` is the path's
        // root once the path has turned forward.
        fn step(&mut self, v: usize, product: f64, entered_forward: Option<bool>, source: usize) {
            if v == self.target {
                self.total += product * self.var[source];
                return;
            }
            let dag = self.dag;
            // Backward move (to a parent) is only allowed while we have not
            // yet gone forward; going forward then backward forms a collider.
            if entered_forward != Some(true) {
                for &p in &dag.parents[v] {
                    if !self.on_path[p] {
                        self.on_path[p] = true;
                        self.step(p, product * self.coef[&(p, v)], Some(false), p);
                        self.on_path[p] = false;
                    }
                }
            }
            for &c in &dag.children[v] {
                if !self.on_path[c] {
                    self.on_path[c] = true;
                    self.step(c, product * self.coef[&(v, c)], Some(true), source);
                    self.on_path[c] = false;
                }
            }
        }
    }

    let mut walk = Walk {
        dag,
        coef,
        var,
        target: y,
        on_path: vec![false; dag.parents.len()],
        total: 0.0,
    };
    walk.on_path[x] = true;
    walk.step(x, 1.0, None, x);
    walk.total
}

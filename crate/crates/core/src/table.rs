//! Exact joint distributions over binary variables.
//!
//! Cells are stored densely. The cell index of an assignment reads the
//! variables as binary digits with the first variable most significant, so
//! for `(A, Y)` the order is `a0y0, a0y1, a1y0, a1y1`.

use std::collections::HashSet;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Dense representation bound.
pub const MAX_VARIABLES: usize = 20;

/// Default tolerance for the independence checks of interaction formulas on
/// parametric tables.
pub const INDEPENDENCE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Parametric,
    Estimated { samples: usize },
}

/// An assignment of values to some of a table's variables.
pub type Assignment<'a> = [(&'a str, u8)];

#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    variables: Vec<String>,
    probs: Vec<f64>,
    source: Source,
}

fn sum_tolerance(len: usize) -> f64 {
    1e-12_f64.max(len as f64 * 1e-15)
}

fn describe(assignment: &Assignment<'_>) -> String {
    assignment
        .iter()
        .map(|(v, x)| format!("{v}={x}"))
        .collect::<Vec<_>>()
        .join(", ")
}

impl JointTable {
    pub fn new(variables: Vec<String>, probs: Vec<f64>, source: Source) -> Result<Self> {
        let k = variables.len();
        if k == 0 || k > MAX_VARIABLES {
            return Err(Error::InvalidData(format!(
                "a joint table needs 1 to {MAX_VARIABLES} variables, got {k}"
            )));
        }
        let mut seen = HashSet::new();
        for v in &variables {
            if !seen.insert(v.as_str()) {
                return Err(Error::InvalidData(format!("duplicate variable `{v}`")));
            }
        }
        if probs.len() != 1 << k {
            return Err(Error::InvalidData(format!(
                "{k} variables need {} cells, got {}",
                1usize << k,
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::InvalidData(format!("cell probability {p} is not a non-negative number")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > sum_tolerance(probs.len()) {
            return Err(Error::InvalidData(format!("cell probabilities sum to {total}, not 1")));
        }
        Ok(JointTable {
            variables,
            probs,
            source,
        })
    }

    pub fn parametric(variables: &[&str], probs: Vec<f64>) -> Result<Self> {
        JointTable::new(variables.iter().map(|s| s.to_string()).collect(), probs, Source::Parametric)
    }

    /// Maximum-likelihood cell frequencies of the binary columns `variables`
    /// of `data`. A positive `pseudo_count` adds that count to every cell.
    pub fn from_samples(data: &Dataset, variables: &[&str], pseudo_count: f64) -> Result<Self> {
        let n = data.n_rows();
        if n == 0 {
            return Err(Error::InvalidData("no rows to estimate a table from".into()));
        }
        if !(pseudo_count.is_finite() && pseudo_count >= 0.0) {
            return Err(Error::InvalidParams(format!("pseudo-count {pseudo_count} must be >= 0")));
        }
        let k = variables.len();
        if k == 0 || k > MAX_VARIABLES {
            return Err(Error::InvalidData(format!(
                "a joint table needs 1 to {MAX_VARIABLES} variables, got {k}"
            )));
        }
        let cols = variables
            .iter()
            .map(|v| data.column(v))
            .collect::<Result<Vec<_>>>()?;
        let mut counts = vec![0u64; 1 << k];
        for r in 0..n {
            let mut idx = 0usize;
            for (c, col) in cols.iter().enumerate() {
                let bit = match col[r] {
                    0.0 => 0,
                    1.0 => 1,
                    v => {
                        return Err(Error::InvalidData(format!(
                            "column `{}` row {} has value {v}, expected 0 or 1",
                            variables[c],
                            r + 1
                        )))
                    }
                };
                idx = (idx << 1) | bit;
            }
            counts[idx] += 1;
        }
        let denom = n as f64 + pseudo_count * counts.len() as f64;
        let probs = counts.iter().map(|&c| (c as f64 + pseudo_count) / denom).collect();
        JointTable::new(
            variables.iter().map(|s| s.to_string()).collect(),
            probs,
            Source::Estimated { samples: n },
        )
    }

    /// A table with independent uniform cell weights, normalized.
    pub fn random(variables: &[&str], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..1usize << variables.len())
            .map(|_| rng.random::<f64>() + 1e-3)
            .collect();
        let total: f64 = w.iter().sum();
        JointTable::parametric(variables, w.iter().map(|x| x / total).collect())
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn has(&self, var: &str) -> bool {
        self.variables.iter().any(|v| v == var)
    }

    fn position(&self, var: &str) -> Result<usize> {
        self.variables
            .iter()
            .position(|v| v == var)
            .ok_or_else(|| Error::UnknownVariable(var.to_string()))
    }

    fn bit(&self, var: &str) -> Result<usize> {
        Ok(self.variables.len() - 1 - self.position(var)?)
    }

    /// Value of `var` in cell `idx`.
    pub fn value_in_cell(&self, idx: usize, var: &str) -> Result<u8> {
        Ok(((idx >> self.bit(var)?) & 1) as u8)
    }

    fn mask(&self, assignment: &Assignment<'_>) -> Result<(usize, usize)> {
        let mut mask = 0;
        let mut value = 0;
        for &(var, x) in assignment {
            if x > 1 {
                return Err(Error::InvalidQuery(format!("`{var}` = {x} is not binary")));
            }
            let b = 1 << self.bit(var)?;
            if mask & b != 0 {
                if (value & b != 0) != (x == 1) {
                    return Ok((b, usize::MAX));
                }
                continue;
            }
            mask |= b;
            if x == 1 {
                value |= b;
            }
        }
        Ok((mask, value))
    }

    /// Marginal probability of an assignment.
    pub fn prob(&self, assignment: &Assignment<'_>) -> Result<f64> {
        let (mask, value) = self.mask(assignment)?;
        Ok(self
            .probs
            .iter()
            .enumerate()
            .filter(|(i, _)| i & mask == value)
            .map(|(_, p)| p)
            .sum())
    }

    /// P(event | given).
    pub fn cond_prob(&self, event: &Assignment<'_>, given: &Assignment<'_>) -> Result<f64> {
        let event_vars: HashSet<&str> = event.iter().map(|(v, _)| *v).collect();
        if let Some((v, _)) = given.iter().find(|(v, _)| event_vars.contains(v)) {
            return Err(Error::InvalidQuery(format!("`{v}` appears in both event and condition")));
        }
        let pg = self.prob(given)?;
        if pg <= 0.0 {
            return Err(Error::NullEvent(describe(given)));
        }
        let joint: Vec<(&str, u8)> = event.iter().chain(given).copied().collect();
        Ok(self.prob(&joint)? / pg)
    }

    /// P(y=1 | given), failing with a positivity error naming the stratum.
    fn p_y(&self, y: &str, given: &Assignment<'_>) -> Result<f64> {
        let pg = self.prob(given)?;
        if pg <= 0.0 {
            return Err(Error::Positivity(describe(given)));
        }
        let mut joint: Vec<(&str, u8)> = given.to_vec();
        joint.push((y, 1));
        Ok(self.prob(&joint)? / pg)
    }

    /// Table over a subset of the variables, in the order given.
    pub fn marginal(&self, vars: &[&str]) -> Result<JointTable> {
        let bits = vars.iter().map(|v| self.bit(v)).collect::<Result<Vec<_>>>()?;
        let mut probs = vec![0.0; 1 << vars.len()];
        for (i, p) in self.probs.iter().enumerate() {
            let j = bits.iter().fold(0, |acc, &b| (acc << 1) | ((i >> b) & 1));
            probs[j] += p;
        }
        JointTable::new(vars.iter().map(|s| s.to_string()).collect(), probs, self.source)
    }

    /// Every assignment of `vars`, in cell order.
    pub fn assignments<'v>(vars: &[&'v str]) -> Vec<Vec<(&'v str, u8)>> {
        let k = vars.len();
        (0..1usize << k)
            .map(|i| {
                vars.iter()
                    .enumerate()
                    .map(|(j, v)| (*v, ((i >> (k - 1 - j)) & 1) as u8))
                    .collect()
            })
            .collect()
    }

    fn check_distinct(&self, roles: &[&str]) -> Result<()> {
        let mut seen = HashSet::new();
        for r in roles {
            self.position(r)?;
            if !seen.insert(*r) {
                return Err(Error::InvalidQuery(format!("`{r}` is used twice in one query")));
            }
        }
        Ok(())
    }

    /// Averages `f(stratum)` over the strata of `adj` weighted by P(stratum).
    /// Strata of probability zero are skipped.
    fn stratified<F>(&self, adj: &[&str], mut f: F) -> Result<f64>
    where
        F: FnMut(&[(&str, u8)]) -> Result<f64>,
    {
        let mut total = 0.0;
        for s in JointTable::assignments(adj) {
            let ps = self.prob(&s)?;
            if ps > 0.0 {
                total += f(&s)? * ps;
            }
        }
        Ok(total)
    }

    /// P(y1 | a1) - P(y1 | a0).
    pub fn stat_disp(&self, y: &str, a: &str) -> Result<f64> {
        self.stat_disp_adjusted(y, a, &[])
    }

    /// sum_s (P(y1 | a1, s) - P(y1 | a0, s)) P(s).
    pub fn stat_disp_adjusted(&self, y: &str, a: &str, adj: &[&str]) -> Result<f64> {
        let mut roles = vec![y, a];
        roles.extend_from_slice(adj);
        self.check_distinct(&roles)?;
        self.stratified(adj, |s| {
            let with = |x: u8| {
                let mut g = vec![(a, x)];
                g.extend_from_slice(s);
                g
            };
            Ok(self.p_y(y, &with(1))? - self.p_y(y, &with(0))?)
        })
    }

    /// P(y1|a1,b1) - P(y1|a0,b1) - P(y1|a1,b0) + P(y1|a0,b0).
    pub fn interaction_term(&self, y: &str, a: &str, b: &str) -> Result<f64> {
        self.interaction_adjusted(y, a, b, &[])
    }

    /// The interaction term averaged over the strata of `adj`.
    pub fn interaction_adjusted(&self, y: &str, a: &str, b: &str, adj: &[&str]) -> Result<f64> {
        let mut roles = vec![y, a, b];
        roles.extend_from_slice(adj);
        self.check_distinct(&roles)?;
        self.stratified(adj, |s| {
            let p = |x: u8, w: u8| {
                let mut g = vec![(a, x), (b, w)];
                g.extend_from_slice(s);
                self.p_y(y, &g)
            };
            Ok(p(1, 1)? - p(0, 1)? - p(1, 0)? + p(0, 0)?)
        })
    }

    /// Effect of `target` on `y` with the other sensitive variable held at 0:
    /// P(y1 | t1, o0) - P(y1 | t0, o0).
    pub fn sd_no_interaction(&self, y: &str, target: &str, other: &str) -> Result<f64> {
        self.sd_no_interaction_adjusted(y, target, other, &[])
    }

    pub fn sd_no_interaction_adjusted(&self, y: &str, target: &str, other: &str, adj: &[&str]) -> Result<f64> {
        let mut roles = vec![y, target, other];
        roles.extend_from_slice(adj);
        self.check_distinct(&roles)?;
        self.stratified(adj, |s| {
            let p = |x: u8| {
                let mut g = vec![(target, x), (other, 0)];
                g.extend_from_slice(s);
                self.p_y(y, &g)
            };
            Ok(p(1)? - p(0)?)
        })
    }

    /// Table restricted to the two joint groups (a1, b1) and (a0, b0), with
    /// `a` and `b` merged into one variable `name` (1 for the first group).
    /// `stat_disp(y, name)` on the result is the joint-group disparity.
    pub fn joint_group(&self, a: &str, b: &str, name: &str) -> Result<JointTable> {
        self.check_distinct(&[a, b])?;
        if self.variables.iter().any(|v| v == name && v != a && v != b) {
            return Err(Error::InvalidQuery(format!("variable `{name}` already exists")));
        }
        let (ba, bb) = (self.bit(a)?, self.bit(b)?);
        let mut variables: Vec<String> = Vec::with_capacity(self.variables.len() - 1);
        for v in &self.variables {
            if v == a {
                variables.push(name.to_string());
            } else if v != b {
                variables.push(v.clone());
            }
        }
        let keep: Vec<usize> = (0..self.variables.len())
            .rev()
            .filter(|&bit| bit != bb)
            .collect();
        let mut probs = vec![0.0; 1 << variables.len()];
        let mut mass = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            if (i >> ba) & 1 != (i >> bb) & 1 {
                continue;
            }
            let j = keep.iter().fold(0, |acc, &bit| (acc << 1) | ((i >> bit) & 1));
            probs[j] += p;
            mass += p;
        }
        if mass <= 0.0 {
            return Err(Error::Positivity(format!("{a}={b} has zero probability")));
        }
        probs.iter_mut().for_each(|p| *p /= mass);
        JointTable::new(variables, probs, self.source)
    }

    /// P(y1 | a1, b1) - P(y1 | a0, b0).
    pub fn joint_disparity(&self, y: &str, a: &str, b: &str) -> Result<f64> {
        self.joint_disparity_adjusted(y, a, b, &[])
    }

    /// sum_s (P(y1 | a1, b1, s) - P(y1 | a0, b0, s)) P(s).
    pub fn joint_disparity_adjusted(&self, y: &str, a: &str, b: &str, adj: &[&str]) -> Result<f64> {
        let mut roles = vec![y, a, b];
        roles.extend_from_slice(adj);
        self.check_distinct(&roles)?;
        self.stratified(adj, |s| {
            let p = |x: u8| {
                let mut g = vec![(a, x), (b, x)];
                g.extend_from_slice(s);
                self.p_y(y, &g)
            };
            Ok(p(1)? - p(0)?)
        })
    }

    /// Largest |P(u, v) - P(u) P(v)| over the four cells of (u, v).
    pub fn dependence(&self, u: &str, v: &str) -> Result<f64> {
        self.check_distinct(&[u, v])?;
        let mut worst: f64 = 0.0;
        for x in 0..2 {
            for w in 0..2 {
                let joint = self.prob(&[(u, x), (v, w)])?;
                let prod = self.prob(&[(u, x)])? * self.prob(&[(v, w)])?;
                worst = worst.max((joint - prod).abs());
            }
        }
        Ok(worst)
    }

    /// Largest cellwise absolute difference to a table over the same variables.
    pub fn max_abs_diff(&self, other: &JointTable) -> Result<f64> {
        if self.variables != other.variables {
            return Err(Error::InvalidQuery("tables have different variables".into()));
        }
        Ok(self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

impl fmt::Display for JointTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.variables.join(" "))?;
        for (i, p) in self.probs.iter().enumerate() {
            let bits: Vec<String> = (0..self.variables.len())
                .map(|j| ((i >> (self.variables.len() - 1 - j)) & 1).to_string())
                .collect();
            writeln!(f, "{}  {p}", bits.join(" "))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(names: &[&str], rows: &[Vec<f64>]) -> Dataset {
        Dataset::from_rows(names.iter().map(|s| s.to_string()).collect(), rows).unwrap()
    }

    /// Table over (A, B, Y) with A, B independent fair coins and the given
    /// P(y1 | a, b) in the order a0b0, a0b1, a1b0, a1b1.
    fn ab_table(py: [f64; 4]) -> JointTable {
        let mut probs = Vec::new();
        for cell in py {
            probs.push(0.25 * (1.0 - cell));
            probs.push(0.25 * cell);
        }
        JointTable::parametric(&["A", "B", "Y"], probs).unwrap()
    }

    #[test]
    fn uniform_from_samples() {
        let d = rows(
            &["A", "Y"],
            &[vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]],
        );
        let t = JointTable::from_samples(&d, &["A", "Y"], 0.0).unwrap();
        assert_eq!(t.probs(), &[0.25; 4]);
        assert_eq!(t.source(), Source::Estimated { samples: 4 });
        assert_eq!(t.cond_prob(&[("Y", 1)], &[("A", 1)]).unwrap(), 0.5);
    }

    #[test]
    fn identical_rows() {
        let d = rows(&["A", "Y"], &vec![vec![1.0, 1.0]; 10]);
        let t = JointTable::from_samples(&d, &["A", "Y"], 0.0).unwrap();
        assert_eq!(t.probs(), &[0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(t.stat_disp("Y", "A"), Err(Error::Positivity(s)) if s == "A=0"));
        assert!(matches!(
            t.cond_prob(&[("Y", 1)], &[("A", 0)]),
            Err(Error::NullEvent(_))
        ));
    }

    #[test]
    fn smoothing_is_opt_in() {
        let d = rows(&["A", "Y"], &vec![vec![1.0, 1.0]; 10]);
        let t = JointTable::from_samples(&d, &["A", "Y"], 1.0).unwrap();
        assert_eq!(t.probs(), &[1.0 / 14.0, 1.0 / 14.0, 1.0 / 14.0, 11.0 / 14.0]);
    }

    #[test]
    fn non_binary_and_empty_rejected() {
        let d = rows(&["A", "Y"], &[vec![0.0, 2.0]]);
        assert!(JointTable::from_samples(&d, &["A", "Y"], 0.0).is_err());
        let empty = Dataset::new(vec!["A".into()], vec![vec![]]).unwrap();
        assert!(JointTable::from_samples(&empty, &["A"], 0.0).is_err());
    }

    #[test]
    fn construction_checks() {
        assert!(JointTable::parametric(&["A"], vec![0.5, 0.6]).is_err());
        assert!(JointTable::parametric(&["A"], vec![1.5, -0.5]).is_err());
        assert!(JointTable::parametric(&["A", "A"], vec![0.25; 4]).is_err());
        assert!(JointTable::parametric(&["A"], vec![1.0]).is_err());
    }

    #[test]
    fn cell_order_is_first_variable_most_significant() {
        let t = JointTable::parametric(&["A", "Y"], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert!((t.prob(&[("A", 1)]).unwrap() - 0.7).abs() < 1e-15);
        assert!((t.prob(&[("Y", 1)]).unwrap() - 0.6).abs() < 1e-15);
        let m = t.marginal(&["Y", "A"]).unwrap();
        assert_eq!(m.probs(), &[0.1, 0.3, 0.2, 0.4]);
    }

    #[test]
    fn contradictory_assignment_has_zero_probability() {
        let t = JointTable::parametric(&["A", "Y"], vec![0.25; 4]).unwrap();
        assert_eq!(t.prob(&[("A", 1), ("A", 0)]).unwrap(), 0.0);
        assert!(t.cond_prob(&[("A", 1)], &[("A", 1)]).is_err());
    }

    #[test]
    fn extreme_disparity() {
        let t = JointTable::parametric(&["A", "Y"], vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        assert_eq!(t.stat_disp("Y", "A").unwrap(), 1.0);
    }

    #[test]
    fn interaction_examples() {
        let t = ab_table([0.1, 0.2, 0.3, 0.8]);
        assert!((t.interaction_term("Y", "A", "B").unwrap() - 0.4).abs() < 1e-15);
        assert!((t.sd_no_interaction("Y", "A", "B").unwrap() - 0.2).abs() < 1e-15);
        let additive = ab_table([0.1, 0.4, 0.3, 0.6]);
        assert!(additive.interaction_term("Y", "A", "B").unwrap().abs() < 1e-15);
        assert!((additive.sd_no_interaction("Y", "A", "B").unwrap() - 0.2).abs() < 1e-15);
        let flat = ab_table([0.3, 0.5, 0.3, 0.5]);
        assert!(flat.interaction_term("Y", "A", "B").unwrap().abs() < 1e-15);
        assert_eq!(flat.sd_no_interaction("Y", "A", "B").unwrap(), 0.0);
    }

    #[test]
    fn joint_group_table_matches_direct_disparity() {
        let t = JointTable::random(&["Z", "A", "B", "Y"], 5).unwrap();
        let g = t.joint_group("A", "B", "G").unwrap();
        assert_eq!(g.variables(), &["Z".to_string(), "G".to_string(), "Y".to_string()]);
        let via_table = g.stat_disp("Y", "G").unwrap();
        let direct = t.joint_disparity("Y", "A", "B").unwrap();
        assert!((via_table - direct).abs() < 1e-14);
    }

    #[test]
    fn queries_reject_reused_variables() {
        let t = JointTable::random(&["A", "Y"], 1).unwrap();
        assert!(t.stat_disp_adjusted("Y", "A", &["A"]).is_err());
        assert!(t.stat_disp("Y", "Q").is_err());
    }

    #[test]
    fn degenerate_adjustment_stratum_is_skipped() {
        // P(z1) = 1: adjustment reduces to the z1 stratum.
        let base = JointTable::random(&["A", "B", "Y"], 9).unwrap();
        let mut probs = vec![0.0; 8];
        probs.extend_from_slice(base.probs());
        let t = JointTable::parametric(&["Z", "A", "B", "Y"], probs).unwrap();
        let i_z = t.interaction_adjusted("Y", "A", "B", &["Z"]).unwrap();
        assert!((i_z - base.interaction_term("Y", "A", "B").unwrap()).abs() < 1e-15);
    }
}

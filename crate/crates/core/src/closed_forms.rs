//! Closed-form binary biases from scalar parameterizations, effect
//! restoration through a noisy proxy, interaction biases and the concurrent
//! bias breakdown.
//!
//! Parameter naming follows one convention throughout: for a sensitive
//! variable `A`, a binary third variable `X` (confounder, collider or proxy)
//! and outcome `Y`,
//!
//! | field   | meaning            |
//! |---------|--------------------|
//! | `alpha` | P(y1 \| a0, x0)    |
//! | `beta`  | P(y1 \| a0, x1)    |
//! | `gamma` | P(y1 \| a1, x0)    |
//! | `delta` | P(y1 \| a1, x1)    |
//! | `epsilon` | P(x1)            |
//! | `tau`   | P(x0 \| a0)        |
//! | `lambda` | P(a1)             |

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::table::{JointTable, INDEPENDENCE_TOLERANCE};

/// Threshold below which a closed-form denominator counts as zero.
pub const SINGULAR_THRESHOLD: f64 = 1e-12;

/// Slack allowed when checking that a reconstructed probability is in [0, 1].
const RESTORE_SLACK: f64 = 1e-9;

fn check_prob(name: &str, p: f64) -> Result<()> {
    if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
        return Err(Error::InvalidParams(format!("{name} = {p} is not in [0, 1]")));
    }
    Ok(())
}

fn check_open(name: &str, p: f64) -> Result<()> {
    if !(p.is_finite() && p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParams(format!("{name} = {p} is not in (0, 1)")));
    }
    Ok(())
}

/// The shared (alpha..lambda) parameterization of a binary three-variable
/// model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BinaryParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub tau: f64,
    pub lambda: f64,
}

impl BinaryParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64, delta: f64, epsilon: f64, tau: f64, lambda: f64) -> Result<Self> {
        let p = BinaryParams {
            alpha,
            beta,
            gamma,
            delta,
            epsilon,
            tau,
            lambda,
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        check_prob("alpha", self.alpha)?;
        check_prob("beta", self.beta)?;
        check_prob("gamma", self.gamma)?;
        check_prob("delta", self.delta)?;
        check_prob("tau", self.tau)?;
        check_open("epsilon", self.epsilon)?;
        check_open("lambda", self.lambda)?;
        let x1_a1 = self.x1_given_a1();
        if !(0.0..=1.0).contains(&x1_a1) {
            return Err(Error::InvalidParams(format!(
                "derived P(x1 | a1) = {x1_a1} is not a probability; \
                 epsilon, tau and lambda are inconsistent"
            )));
        }
        Ok(())
    }

    /// P(x1 | a0) = 1 - tau.
    pub fn x1_given_a0(&self) -> f64 {
        1.0 - self.tau
    }

    /// P(x1 | a1) = (epsilon - (1 - tau)(1 - lambda)) / lambda.
    pub fn x1_given_a1(&self) -> f64 {
        (self.epsilon - (1.0 - self.tau) * (1.0 - self.lambda)) / self.lambda
    }

    /// P(y1 | a, x) by index.
    pub fn outcome(&self, a: u8, x: u8) -> f64 {
        match (a, x) {
            (0, 0) => self.alpha,
            (0, _) => self.beta,
            (_, 0) => self.gamma,
            _ => self.delta,
        }
    }

    /// Reads the parameters off a table over `y`, `a` and a binary `x`.
    pub fn from_table(table: &JointTable, y: &str, a: &str, x: &str) -> Result<Self> {
        let py = |av: u8, xv: u8| {
            table
                .cond_prob(&[(y, 1)], &[(a, av), (x, xv)])
                .map_err(|_| Error::Positivity(format!("{a}={av}, {x}={xv}")))
        };
        BinaryParams::new(
            py(0, 0)?,
            py(0, 1)?,
            py(1, 0)?,
            py(1, 1)?,
            table.prob(&[(x, 1)])?,
            table.cond_prob(&[(x, 0)], &[(a, 0)])?,
            table.prob(&[(a, 1)])?,
        )
    }

    /// Draws uniform parameters until the derived conditionals are valid.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let p = BinaryParams {
                alpha: rng.random(),
                beta: rng.random(),
                gamma: rng.random(),
                delta: rng.random(),
                epsilon: rng.random(),
                tau: rng.random(),
                lambda: rng.random(),
            };
            if p.validate().is_ok() {
                return p;
            }
        }
    }

    /// Same draw with lambda fixed at 1/2.
    pub fn random_balanced<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let p = BinaryParams {
                lambda: 0.5,
                ..BinaryParams::random(rng)
            };
            if p.validate().is_ok() {
                return p;
            }
        }
    }

    /// Relabels the levels of the third variable.
    pub fn swap_levels(&self) -> Result<Self> {
        BinaryParams::new(
            self.beta,
            self.alpha,
            self.delta,
            self.gamma,
            1.0 - self.epsilon,
            1.0 - self.tau,
            self.lambda,
        )
    }
}

/// Confounder `Z`: P(y1 | a, z), P(z1), P(z0 | a0), P(a1).
pub type ConfoundParams = BinaryParams;

/// Collider `W` under selection: P(y1 | a, w), P(w1), P(w0 | a0), P(a1).
pub type SelectionParams = BinaryParams;

/// Confounding bias StatDisp - StatDisp_Z for any P(a1).
pub fn conf_bias_binary(p: &ConfoundParams) -> f64 {
    let l = p.lambda;
    (1.0 - p.tau - p.epsilon) * (p.alpha - p.beta - p.gamma + p.delta + p.gamma / l - p.delta / l)
}

/// Confounding bias when P(a0) = P(a1) = 1/2.
pub fn conf_bias_binary_balanced(p: &ConfoundParams) -> Result<f64> {
    if p.lambda != 0.5 {
        return Err(Error::InvalidParams(format!(
            "balanced form requires P(a1) = 0.5, got {}",
            p.lambda
        )));
    }
    Ok((1.0 - p.tau - p.epsilon) * (p.alpha - p.beta + p.gamma - p.delta))
}

/// Selection bias StatDisp_W - StatDisp when P(a0) = P(a1) = 1/2.
pub fn sel_bias_binary(p: &SelectionParams) -> Result<f64> {
    if p.lambda != 0.5 {
        return Err(Error::InvalidParams(format!(
            "balanced form requires P(a1) = 0.5, got {}",
            p.lambda
        )));
    }
    Ok((1.0 - p.tau - p.epsilon) * (-p.alpha + p.beta - p.gamma + p.delta))
}

/// Selection bias for any P(a1).
pub fn sel_bias_binary_general(p: &SelectionParams) -> f64 {
    -conf_bias_binary(p)
}

// ---------------------------------------------------------------------------
// Measurement
// ---------------------------------------------------------------------------

/// Misclassification probabilities of a proxy `T` for a confounder `Z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorMechanism {
    /// P(t1 | z0).
    pub false_positive: f64,
    /// P(t0 | z1).
    pub false_negative: f64,
}

impl ErrorMechanism {
    pub fn new(false_positive: f64, false_negative: f64) -> Result<Self> {
        check_prob("P(t1 | z0)", false_positive)?;
        check_prob("P(t0 | z1)", false_negative)?;
        Ok(ErrorMechanism {
            false_positive,
            false_negative,
        })
    }

    pub const PERFECT: ErrorMechanism = ErrorMechanism {
        false_positive: 0.0,
        false_negative: 0.0,
    };

    /// 1 - P(t1 | z0) - P(t0 | z1): zero exactly when T carries no
    /// information about Z.
    pub fn informativeness(&self) -> f64 {
        1.0 - self.false_positive - self.false_negative
    }
}

/// Observed (A, T, Y) parameters plus the error mechanism P(T | Z).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeasurementParams {
    /// Parameters of Y given (A, T) with `epsilon` = P(t1), `tau` = P(t0 | a0).
    pub observed: BinaryParams,
    pub error: ErrorMechanism,
}

impl MeasurementParams {
    pub fn new(observed: BinaryParams, error: ErrorMechanism) -> Self {
        MeasurementParams { observed, error }
    }

    /// StatDisp_T = epsilon (delta - beta) + (1 - epsilon)(gamma - alpha).
    pub fn proxy_adjusted_disparity(&self) -> f64 {
        let p = &self.observed;
        p.epsilon * (p.delta - p.beta) + (1.0 - p.epsilon) * (p.gamma - p.alpha)
    }
}

/// The latent-confounder distribution reconstructed from the observed
/// parameters and the error mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RestoredConfounder {
    /// P(z1).
    pub p_z1: f64,
    /// P(z1 | a) for a = 0, 1.
    pub z1_given_a: [f64; 2],
    /// P(y1 | a, z) indexed `[a][z]`; `None` for strata of zero probability.
    pub outcome: [[Option<f64>; 2]; 2],
}

impl RestoredConfounder {
    /// StatDisp_Z = sum_z (P(y1 | a1, z) - P(y1 | a0, z)) P(z).
    pub fn adjusted_disparity(&self) -> Result<f64> {
        let mut total = 0.0;
        for (z, pz) in [(0, 1.0 - self.p_z1), (1, self.p_z1)] {
            if pz <= 0.0 {
                continue;
            }
            match (self.outcome[1][z], self.outcome[0][z]) {
                (Some(r1), Some(r0)) => total += (r1 - r0) * pz,
                _ => {
                    return Err(Error::Positivity(format!(
                        "restored stratum z={z} is empty for one level of the sensitive variable"
                    )))
                }
            }
        }
        Ok(total)
    }
}

/// Inverts the error mechanism inside each stratum of A.
pub fn restore_confounder(p: &MeasurementParams) -> Result<RestoredConfounder> {
    let o = &p.observed;
    let e = p.error.false_positive;
    let d = p.error.false_negative;
    let k = p.error.informativeness();
    if k.abs() <= SINGULAR_THRESHOLD {
        return Err(Error::singular(
            "1 - P(t1|z0) - P(t0|z1)",
            "the proxy is independent of the confounder, so the confounder distribution is not identified",
        ));
    }
    let t1_given_a = [o.x1_given_a0(), o.x1_given_a1()];
    let mut z1_given_a = [0.0; 2];
    let mut outcome = [[None; 2]; 2];
    for a in 0..2 {
        let s = t1_given_a[a];
        let (p0, p1) = (o.outcome(a as u8, 0), o.outcome(a as u8, 1));
        let q1 = (s - e) / k;
        let q0 = (1.0 - d - s) / k;
        let u1 = ((1.0 - e) * s * p1 - e * (1.0 - s) * p0) / k;
        let u0 = ((1.0 - d) * (1.0 - s) * p0 - d * s * p1) / k;
        for (name, v) in [("P(z1|a)", q1), ("P(z0|a)", q0), ("P(y1,z1|a)", u1), ("P(y1,z0|a)", u0)] {
            if !(-RESTORE_SLACK..=1.0 + RESTORE_SLACK).contains(&v) {
                return Err(Error::InvalidParams(format!(
                    "error mechanism is inconsistent with the observed distribution: \
                     restored {name} = {v} at a={a}"
                )));
            }
        }
        z1_given_a[a] = q1.clamp(0.0, 1.0);
        for (z, u, q) in [(0, u0, q0), (1, u1, q1)] {
            if q.abs() > SINGULAR_THRESHOLD {
                let r = u / q;
                if !(-RESTORE_SLACK..=1.0 + RESTORE_SLACK).contains(&r) {
                    return Err(Error::InvalidParams(format!(
                        "error mechanism is inconsistent with the observed distribution: \
                         restored P(y1|a={a},z={z}) = {r}"
                    )));
                }
                outcome[a][z] = Some(r);
            }
        }
    }
    let p_z1 = (o.epsilon - e) / k;
    Ok(RestoredConfounder {
        p_z1,
        z1_given_a,
        outcome,
    })
}

/// Measurement bias StatDisp_T - StatDisp_Z, with StatDisp_Z restored from
/// the observed (A, T, Y) parameters and P(T | Z).
///
/// With e = P(t1|z0), d = P(t0|z1), k = 1 - e - d and s_a = P(t1|a):
///
/// ```text
/// P(y1|a,z1) = ((1-e) s_a P(y1|a,t1) - e (1-s_a) P(y1|a,t0)) / (s_a - e)
/// P(y1|a,z0) = ((1-d)(1-s_a) P(y1|a,t0) - d s_a P(y1|a,t1)) / (1 - s_a - d)
/// P(z1) = (epsilon - e) / k
/// ```
pub fn meas_bias_binary(p: &MeasurementParams) -> Result<f64> {
    let restored = restore_confounder(p)?;
    for a in 0..2 {
        for z in 0..2 {
            let pz = if z == 1 { restored.p_z1 } else { 1.0 - restored.p_z1 };
            if pz > SINGULAR_THRESHOLD && restored.outcome[a][z].is_none() {
                let term = if z == 1 { "P(t1|a) - P(t1|z0)" } else { "1 - P(t1|a) - P(t0|z1)" };
                return Err(Error::singular(term, format!("restored stratum a={a}, z={z} is empty")));
            }
        }
    }
    Ok(p.proxy_adjusted_disparity() - restored.adjusted_disparity()?)
}

/// The Q/R/Phi/Psi expression for the balanced case. It coincides with
/// [`meas_bias_binary`] at a perfect proxy but not in general; kept for
/// comparison.
pub fn meas_bias_binary_qr(p: &MeasurementParams) -> Result<f64> {
    let o = &p.observed;
    let (al, be, ga, de, eps, tau) = (o.alpha, o.beta, o.gamma, o.delta, o.epsilon, o.tau);
    let e = p.error.false_positive;
    let d = p.error.false_negative;
    let ratio = |name: &str, num: f64, den: f64| {
        if den.abs() <= SINGULAR_THRESHOLD {
            Err(Error::singular(name, "denominator vanishes"))
        } else {
            Ok(num / den)
        }
    };
    let q = ratio("Q", 1.0 - d / eps, 1.0 - d / (2.0 * eps))?;
    let r = ratio("R", 1.0 - e / (1.0 - eps), 1.0 - e / (2.0 - 2.0 * eps))?;
    let phi = ratio("Phi", eps + tau / 2.0 - 1.0, eps + tau / 2.0 - 0.5)?;
    let psi = ratio("Psi", 1.0 - tau, tau)?;
    let inv_phi = ratio("1/Phi", 1.0, phi)?;
    let inv_psi = ratio("1/Psi", 1.0, psi)?;
    Ok(eps * (de - be) + (1.0 - eps) * (ga - al)
        - eps * (de - be + 4.0 * e * (be - de + ga * phi + ga * psi)) * q
        - (1.0 - eps) * (ga - al + 4.0 * d * (al - ga + de + de * inv_psi + be * inv_phi)) * r)
}

/// P(y1 | do(a)) recovered from an observed table over (A, T, Y) and the
/// error mechanism of the proxy T:
///
/// ```text
/// sum_t  (P(y1,a,t) - e_t P(y1,a)) (P(t) - e_t) / (k (P(a,t) - e_t P(a)))
/// ```
///
/// where e_t1 = P(t1|z0), e_t0 = P(t0|z1) and k = 1 - e_t1 - e_t0.
pub fn effect_restoration_do(
    table: &JointTable,
    y: &str,
    a: &str,
    t: &str,
    error: &ErrorMechanism,
    a_value: u8,
) -> Result<f64> {
    let k = error.informativeness();
    if k.abs() <= SINGULAR_THRESHOLD {
        return Err(Error::singular(
            "1 - P(t1|z0) - P(t0|z1)",
            "the proxy carries no information about the confounder",
        ));
    }
    let pa = table.prob(&[(a, a_value)])?;
    let pya = table.prob(&[(y, 1), (a, a_value)])?;
    if pa <= 0.0 {
        return Err(Error::Positivity(format!("{a}={a_value}")));
    }
    let mut total = 0.0;
    for (tv, e_t) in [(0u8, error.false_negative), (1u8, error.false_positive)] {
        let pt = table.prob(&[(t, tv)])?;
        if pt <= 0.0 {
            return Err(Error::singular(
                format!("P({t}={tv})"),
                "the proxy is degenerate (one level never occurs)",
            ));
        }
        let weight = pt - e_t;
        if weight.abs() <= SINGULAR_THRESHOLD {
            // The restored confounder level has probability zero.
            continue;
        }
        let den = k * (table.prob(&[(a, a_value), (t, tv)])? - e_t * pa);
        if den.abs() <= SINGULAR_THRESHOLD {
            return Err(Error::singular(
                format!("P({a}={a_value},{t}={tv}) - e_t P({a}={a_value})"),
                "restored stratum is empty",
            ));
        }
        let num = table.prob(&[(y, 1), (a, a_value), (t, tv)])? - e_t * pya;
        total += num * weight / den;
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// Interaction
// ---------------------------------------------------------------------------

pub use crate::linear::Target;

/// Bias of the joint-group disparity relative to the sum of the individual
/// effects: the additive interaction term.
pub fn int_bias_intersectional(table: &JointTable, y: &str, a: &str, b: &str) -> Result<f64> {
    table.interaction_term(y, a, b)
}

/// Bias of one attribute's disparity from ignoring the interaction,
/// P(other1) * Interaction. Requires A and B independent within `tolerance`.
pub fn int_bias_individual(
    table: &JointTable,
    y: &str,
    a: &str,
    b: &str,
    target: Target,
    tolerance: Option<f64>,
) -> Result<f64> {
    let tol = tolerance.unwrap_or(INDEPENDENCE_TOLERANCE);
    let gap = table.dependence(a, b)?;
    if gap > tol {
        return Err(Error::Dependence(format!(
            "the interaction decomposition requires `{a}` independent of `{b}`; \
             max |P({a},{b}) - P({a})P({b})| = {gap:.3e} exceeds {tol:.1e}"
        )));
    }
    let other = match target {
        Target::A => b,
        Target::B => a,
    };
    Ok(table.prob(&[(other, 1)])? * table.interaction_term(y, a, b)?)
}

// ---------------------------------------------------------------------------
// Concurrent biases
// ---------------------------------------------------------------------------

/// Variables available for a concurrent breakdown around (`a`, `y`).
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConcurrentSpec {
    pub outcome: String,
    pub sensitive: String,
    pub confounders: Vec<String>,
    pub collider: Option<String>,
    pub proxy: Option<String>,
    pub second_sensitive: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasComponent {
    pub name: String,
    pub value: f64,
    /// Disparity expression the value was computed from.
    pub definition: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BiasBreakdown {
    pub components: Vec<BiasComponent>,
}

impl BiasBreakdown {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.components.iter().find(|c| c.name == name).map(|c| c.value)
    }

    fn push(&mut self, name: &str, value: f64, definition: impl Into<String>) {
        self.components.push(BiasComponent {
            name: name.to_string(),
            value,
            definition: definition.into(),
        });
    }
}

/// Computes every component supported by the variables named in `spec`.
///
/// | component | value |
/// |---|---|
/// | `conf` | StatDisp - StatDisp_Z |
/// | `sel` | StatDisp_W - StatDisp |
/// | `meas` | StatDisp_T - StatDisp_Z |
/// | `conf+sel` | StatDisp_W - StatDisp_Z |
/// | `conf+meas` | StatDisp - StatDisp_T |
/// | `sel+meas`, `conf+sel+meas` | StatDisp_TW - StatDisp_Z |
///
/// With a second sensitive variable B and confounders, also the
/// interaction-free and interaction parts of the confounding bias, for A
/// alone and for the intersectional group (A, B).
pub fn concurrent_bias(table: &JointTable, spec: &ConcurrentSpec) -> Result<BiasBreakdown> {
    let y = spec.outcome.as_str();
    let a = spec.sensitive.as_str();
    for v in [y, a]
        .into_iter()
        .chain(spec.confounders.iter().map(String::as_str))
        .chain(spec.collider.as_deref())
        .chain(spec.proxy.as_deref())
        .chain(spec.second_sensitive.as_deref())
    {
        if !table.has(v) {
            return Err(Error::Structure(format!("variable `{v}` is not in the table")));
        }
    }
    let z: Vec<&str> = spec.confounders.iter().map(String::as_str).collect();
    let zs = z.join(",");
    let mut out = BiasBreakdown::default();
    let sd = table.stat_disp(y, a)?;

    let sd_z = if z.is_empty() {
        None
    } else {
        let v = table.stat_disp_adjusted(y, a, &z)?;
        out.push("conf", sd - v, format!("StatDisp - StatDisp_{{{zs}}}"));
        Some(v)
    };
    let sd_w = match spec.collider.as_deref() {
        Some(w) => {
            let v = table.stat_disp_adjusted(y, a, &[w])?;
            out.push("sel", v - sd, format!("StatDisp_{{{w}}} - StatDisp"));
            if let Some(sz) = sd_z {
                out.push("conf+sel", v - sz, format!("StatDisp_{{{w}}} - StatDisp_{{{zs}}}"));
            }
            Some(v)
        }
        None => None,
    };
    if let (Some(t), Some(sz)) = (spec.proxy.as_deref(), sd_z) {
        let sd_t = table.stat_disp_adjusted(y, a, &[t])?;
        out.push("meas", sd_t - sz, format!("StatDisp_{{{t}}} - StatDisp_{{{zs}}}"));
        out.push("conf+meas", sd - sd_t, format!("StatDisp - StatDisp_{{{t}}}"));
        if let (Some(w), Some(_)) = (spec.collider.as_deref(), sd_w) {
            let sd_tw = table.stat_disp_adjusted(y, a, &[t, w])?;
            let def = format!("StatDisp_{{{t},{w}}} - StatDisp_{{{zs}}}");
            out.push("sel+meas", sd_tw - sz, def.clone());
            out.push("conf+sel+meas", sd_tw - sz, def);
        }
    }
    if let (Some(b), Some(_)) = (spec.second_sensitive.as_deref(), sd_z) {
        let d_sd_a = table.sd_no_interaction(y, a, b)? - table.sd_no_interaction_adjusted(y, a, b, &z)?;
        let d_sd_b = table.sd_no_interaction(y, b, a)? - table.sd_no_interaction_adjusted(y, b, a, &z)?;
        let d_int = table.interaction_term(y, a, b)? - table.interaction_adjusted(y, a, b, &z)?;
        let p_b1 = table.prob(&[(b, 1)])?;
        out.push(
            "conf.no_interaction",
            d_sd_a,
            format!("SD_noInt({y},{a}) - SD_noInt_{{{zs}}}({y},{a})"),
        );
        out.push(
            "conf.interaction",
            p_b1 * d_int,
            format!("P({b}=1) (Interaction({a},{b}) - Interaction_{{{zs}}}({a},{b}))"),
        );
        let jd = table.joint_disparity(y, a, b)?;
        let jd_z = table.joint_disparity_adjusted(y, a, b, &z)?;
        out.push(
            "conf.intersectional",
            jd - jd_z,
            format!("StatDisp({y},{a}{b}) - StatDisp_{{{zs}}}({y},{a}{b})"),
        );
        out.push(
            "conf.intersectional.interaction",
            d_int,
            format!("Interaction({a},{b}) - Interaction_{{{zs}}}({a},{b})"),
        );
        out.push(
            "conf.intersectional.second_sensitive",
            d_sd_b,
            format!("SD_noInt({y},{b}) - SD_noInt_{{{zs}}}({y},{b})"),
        );
    }
    Ok(out)
}

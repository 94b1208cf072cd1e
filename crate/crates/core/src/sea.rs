//! Credibility gate between a learned and a rule-based solution, and a
//! randomized harness for the error bound that the gate implies.
//!
//! With `c = |C_L - C_R| / C_R <= d` and a rule whose relative error
//! `|C_R - C_*| / C_*` is at most `eps`, the learned solution satisfies
//! `|C_L - C_*| / C_* <= d (1 + eps) + eps`. The harness checks the general
//! triangle-inequality form, so both `C_L < C_R` and `C_L > C_R` are covered,
//! as well as maximization instances where `C_R` undershoots `C_*`.

use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Slack for comparing ratios that are already relative quantities.
pub const TOLERANCE: f64 = 1e-9;

fn within(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs + TOLERANCE * rhs.max(1.0)
}

pub fn credibility(c_learned: f64, c_rule: f64) -> Result<f64> {
    if !(c_rule > 0.0) {
        return Err(Error::invalid("c_rule", format!("must be > 0, got {c_rule}")));
    }
    Ok((c_learned - c_rule).abs() / c_rule)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Chosen {
    Learned,
    Rule,
}

impl fmt::Display for Chosen {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Chosen::Learned => "learned",
            Chosen::Rule => "rule",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CredibilityDecision {
    pub c_learned: f64,
    pub c_rule: f64,
    pub credibility: f64,
    pub d: f64,
    pub chosen: Chosen,
}

impl CredibilityDecision {
    pub fn solution(&self) -> f64 {
        match self.chosen {
            Chosen::Learned => self.c_learned,
            Chosen::Rule => self.c_rule,
        }
    }
}

/// Keeps the learned solution only when `credibility < d` (strict).
/// `d = f64::INFINITY` disables the gate.
pub fn choose(c_learned: f64, c_rule: f64, d: f64) -> Result<CredibilityDecision> {
    if !(d >= 0.0) {
        return Err(Error::invalid("d", format!("must be >= 0, got {d}")));
    }
    let c = credibility(c_learned, c_rule)?;
    let chosen = if c < d { Chosen::Learned } else { Chosen::Rule };
    Ok(CredibilityDecision {
        c_learned,
        c_rule,
        credibility: c,
        d,
        chosen,
    })
}

pub fn theorem_bound(d: f64, eps_cap: f64) -> f64 {
    d * (1.0 + eps_cap) + eps_cap
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    /// The rule overshoots: `C_R = C_* (1 + eps_n)`.
    Minimize,
    /// The rule undershoots: `C_R = C_* (1 - eps_n)`.
    Maximize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundInstance {
    pub c_star: f64,
    pub eps_n: f64,
    pub eps_cap: f64,
    pub d: f64,
    pub objective: Objective,
}

impl BoundInstance {
    pub fn new(c_star: f64, eps_n: f64, eps_cap: f64, d: f64, objective: Objective) -> Result<Self> {
        if !(c_star > 0.0) {
            return Err(Error::invalid("c_star", "must be > 0"));
        }
        if !(eps_n >= 0.0 && eps_n <= eps_cap) {
            return Err(Error::invalid("eps_n", "must lie in [0, eps_cap]"));
        }
        if !(d >= 0.0) {
            return Err(Error::invalid("d", "must be >= 0"));
        }
        if objective == Objective::Maximize && eps_n >= 1.0 {
            return Err(Error::invalid("eps_n", "must be < 1 for maximization"));
        }
        Ok(BoundInstance {
            c_star,
            eps_n,
            eps_cap,
            d,
            objective,
        })
    }

    pub fn c_rule(&self) -> f64 {
        match self.objective {
            Objective::Minimize => self.c_star * (1.0 + self.eps_n),
            Objective::Maximize => self.c_star * (1.0 - self.eps_n),
        }
    }

    /// `|C_L - C_*| / C_*`
    pub fn learned_error(&self, c_learned: f64) -> f64 {
        (c_learned - self.c_star).abs() / self.c_star
    }
}

/// Checks the bound for a learned solution that passed the gate.
pub fn verify_bound_instance(inst: &BoundInstance, c_learned: f64) -> Result<bool> {
    let c = credibility(c_learned, inst.c_rule())?;
    if !within(c, inst.d) {
        return Err(Error::NotGated {
            credibility: c,
            d: inst.d,
        });
    }
    Ok(within(
        inst.learned_error(c_learned),
        theorem_bound(inst.d, inst.eps_cap),
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TheoremCase {
    pub instance: BoundInstance,
    pub c_learned: f64,
    pub lhs: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Randomized check of the bound: `C_*` in `[1, 1e6]`, `eps` and `d` in
/// `[0, 1]`, `C_L` anywhere in the credibility ball around `C_R`. The first
/// case is the tight minimization instance `C_* = 100, eps = 0.2, d = 0.1,
/// C_L = 132`.
pub fn verify_theorem(instances: usize, seed: u64) -> Result<Vec<TheoremCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::with_capacity(instances);
    let mut push = |inst: BoundInstance, c_learned: f64| -> Result<()> {
        let lhs = inst.learned_error(c_learned);
        let bound = theorem_bound(inst.d, inst.eps_cap);
        let holds = verify_bound_instance(&inst, c_learned)?;
        cases.push(TheoremCase {
            instance: inst,
            c_learned,
            lhs,
            bound,
            holds,
        });
        Ok(())
    };
    if instances > 0 {
        push(BoundInstance::new(100.0, 0.2, 0.2, 0.1, Objective::Minimize)?, 132.0)?;
    }
    for i in 1..instances {
        let c_star = rng.random_range(1.0..=1e6);
        let eps_cap: f64 = rng.random_range(0.0..=1.0);
        let objective = if i % 4 == 3 {
            Objective::Maximize
        } else {
            Objective::Minimize
        };
        let eps_hi = match objective {
            Objective::Minimize => eps_cap,
            Objective::Maximize => eps_cap.min(0.999),
        };
        let eps_n = rng.random_range(0.0..=eps_hi);
        let d = rng.random_range(0.0..=1.0);
        let inst = BoundInstance::new(c_star, eps_n, eps_cap, d, objective)?;
        // Position in the ball: uniform in [-1, 1], with the extremes forced
        // now and then so the worst case is exercised.
        let u = match i % 10 {
            0 => 1.0,
            1 => -1.0,
            _ => rng.random_range(-1.0..=1.0),
        };
        let c_learned = inst.c_rule() * (1.0 + u * d);
        push(inst, c_learned)?;
    }
    Ok(cases)
}

pub fn write_theorem_report<W: Write>(cases: &[TheoremCase], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "id",
        "objective",
        "c_star",
        "eps_n",
        "eps_cap",
        "d",
        "c_rule",
        "c_learned",
        "lhs",
        "bound",
        "holds",
    ])?;
    for (i, c) in cases.iter().enumerate() {
        let inst = &c.instance;
        out.write_record([
            i.to_string(),
            match inst.objective {
                Objective::Minimize => "min".into(),
                Objective::Maximize => "max".into(),
            },
            inst.c_star.to_string(),
            inst.eps_n.to_string(),
            inst.eps_cap.to_string(),
            inst.d.to_string(),
            inst.c_rule().to_string(),
            c.c_learned.to_string(),
            c.lhs.to_string(),
            c.bound.to_string(),
            c.holds.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Audit rows: `task_id,c_learned,c_rule,credibility,d,chosen`.
pub fn write_decision_log<W: Write>(decisions: &[(u64, CredibilityDecision)], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["task_id", "c_learned", "c_rule", "credibility", "d", "chosen"])?;
    for (id, dec) in decisions {
        out.write_record([
            id.to_string(),
            dec.c_learned.to_string(),
            dec.c_rule.to_string(),
            dec.credibility.to_string(),
            dec.d.to_string(),
            dec.chosen.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

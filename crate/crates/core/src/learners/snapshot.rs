//! Learner snapshots in the flat `key = value` format.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use super::{AdaptiveScaler, Hyper, Learner, LearnerState, Link, Rule, ScalerMode, TraceMode};
use crate::error::{Error, Result};
use crate::kv::{self, format_vector, Entry};

impl fmt::Display for TraceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraceMode::Standard => "standard",
            TraceMode::Literal => "literal",
        })
    }
}

impl FromStr for TraceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(TraceMode::Standard),
            "literal" => Ok(TraceMode::Literal),
            _ => Err(Error::Parse(format!(
                "expected `standard` or `literal`, got {s:?}"
            ))),
        }
    }
}

impl fmt::Display for ScalerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScalerMode::Features => "features",
            ScalerMode::Gradient => "gradient",
        })
    }
}

impl FromStr for ScalerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "features" => Ok(ScalerMode::Features),
            "gradient" => Ok(ScalerMode::Gradient),
            _ => Err(Error::Parse(format!(
                "expected `features` or `gradient`, got {s:?}"
            ))),
        }
    }
}

impl Learner {
    pub fn to_text(&self) -> String {
        let s = &self.state;
        let h = &s.hyper;
        let mut out = String::from("# learner snapshot\n");
        writeln!(out, "rule = {}", self.rule.name()).unwrap();
        match &self.rule {
            Rule::Mirror { link, .. } => writeln!(out, "link = {link}").unwrap(),
            Rule::Composite(sc) => writeln!(out, "scaler = {} {}", sc.mode, sc.eta).unwrap(),
            Rule::Td => {}
        }
        writeln!(out, "t = {}", s.t).unwrap();
        writeln!(out, "alpha = {}", h.alpha).unwrap();
        writeln!(out, "lambda = {}", h.lambda).unwrap();
        writeln!(out, "gamma = {}", h.gamma).unwrap();
        writeln!(out, "beta = {}", h.beta).unwrap();
        writeln!(out, "p = {}", h.p).unwrap();
        writeln!(out, "epsilon = {}", h.epsilon).unwrap();
        writeln!(out, "trace = {}", h.trace).unwrap();
        writeln!(out, "map = {}", s.map).unwrap();
        writeln!(out, "w = {}", format_vector(&s.w)).unwrap();
        writeln!(out, "theta = {}", format_vector(&s.theta)).unwrap();
        writeln!(out, "e = {}", format_vector(&s.e)).unwrap();
        if let Some(split) = &s.split {
            writeln!(out, "split = {}", format_vector(split)).unwrap();
        }
        if let Rule::Composite(sc) = &self.rule {
            writeln!(out, "g = {}", format_vector(&sc.g)).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let entries = kv::parse(text)?;
        let mut take = Fields { entries };
        let rule_name: String = take.req("rule")?.parse()?;
        let link = take.opt("link").map(|e| e.parse::<Link>()).transpose()?;
        let scaler = take.opt("scaler");
        let t = take.req("t")?.parse()?;
        let hyper = Hyper {
            alpha: take.req("alpha")?.parse()?,
            lambda: take.req("lambda")?.parse()?,
            gamma: take.req("gamma")?.parse()?,
            beta: take.req("beta")?.parse()?,
            p: take.req("p")?.parse()?,
            epsilon: take.req("epsilon")?.parse()?,
            trace: take.req("trace")?.parse()?,
        };
        hyper.validate()?;
        let map = take.req("map")?.parse()?;
        let w = take.req("w")?.vector()?;
        let theta = take.req("theta")?.vector()?;
        let e = take.req("e")?.vector()?;
        let split = take.opt("split").map(|e| e.vector()).transpose()?;
        let g = take.opt("g").map(|e| e.vector()).transpose()?;
        if let Some(extra) = take.entries.first() {
            return Err(Error::Config {
                line: extra.line,
                message: format!("unknown snapshot key `{}`", extra.key),
            });
        }
        let rule = match (rule_name.as_str(), link) {
            ("td", None) => Rule::Td,
            ("mirror", Some(link)) => Rule::Mirror {
                link,
                sparse: false,
            },
            ("sparse_mirror", Some(link)) => Rule::Mirror { link, sparse: true },
            ("composite", None) => {
                let sc = scaler
                    .ok_or_else(|| Error::Parse("composite snapshot lacks `scaler`".into()))?;
                let (mode, eta) = sc
                    .value
                    .split_once(' ')
                    .ok_or_else(|| Error::Parse("scaler needs `<mode> <eta>`".into()))?;
                let eta: f64 = eta
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad eta {eta:?}")))?;
                let mut scaler = AdaptiveScaler::new(0, eta, mode.parse()?)?;
                scaler.g = g.ok_or_else(|| Error::Parse("composite snapshot lacks `g`".into()))?;
                Rule::Composite(scaler)
            }
            (other, _) => {
                return Err(Error::Parse(format!(
                    "inconsistent rule {other:?} and link"
                )))
            }
        };
        let d = w.len();
        let dual_len = if split.is_some() { 2 * d } else { d };
        if e.len() != d
            || theta.len() != dual_len
            || split.as_ref().is_some_and(|s| s.len() != 2 * d)
        {
            return Err(Error::Parse(
                "snapshot vectors have inconsistent lengths".into(),
            ));
        }
        Ok(Learner {
            state: LearnerState {
                w,
                theta,
                e,
                t,
                hyper,
                split,
                map,
            },
            rule,
        })
    }
}

struct Fields {
    entries: Vec<Entry>,
}

impl Fields {
    fn opt(&mut self, key: &str) -> Option<Entry> {
        let i = self.entries.iter().position(|e| e.key == key)?;
        Some(self.entries.remove(i))
    }

    fn req(&mut self, key: &str) -> Result<Entry> {
        self.opt(key)
            .ok_or_else(|| Error::Parse(format!("snapshot lacks `{key}`")))
    }
}

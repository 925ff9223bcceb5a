//! Scenario files.
//!
//! A scenario is a small INI document: `[section]` headers, `key = value`
//! lines and full-line comments starting with `#` or `;`. Keys are unique
//! within a section, except `phase` in `[losses]` and the keys of `[checks]`,
//! which may repeat and keep their order. The README documents every key.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use omdlab_core::Regularizer;

use crate::error::{CliError, Result};

/// Environment variable that replaces the seeds of any scenario.
pub const SEED_ENV: &str = "OMDLAB_SEED";

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub runners: Vec<Runner>,
    pub seeds: Vec<u64>,
    pub horizon: usize,
    pub eta: f64,
    /// One cell group per entry.
    pub eps: Vec<EpsSpec>,
    /// Lower clamp applied to every resolved epsilon.
    pub eps_floor: Option<f64>,
    pub outputs: Vec<OutputKind>,
    pub domain: DomainSpec,
    pub regularizers: Vec<RegSpec>,
    pub losses: LossConfig,
    pub params: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
}

macro_rules! keyword_enum {
    ($(#[$m:meta])* $name:ident { $($(#[$vm:meta])* $variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum $name { $($(#[$vm])* $variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(format!(
                        "unknown {} {s:?} (expected one of: {})",
                        stringify!($name).to_lowercase(),
                        [$($text),+].join(", ")
                    )),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

keyword_enum!(Runner {
    Exact => "exact",
    HonestTight => "honest_tight",
    HonestSaturating => "honest_saturating",
    Ftrl => "ftrl",
    SmoothStuck => "adversarial_smooth_stuck",
    EntropyStuck => "adversarial_entropy_stuck",
    DimensionStuck => "adversarial_dimension_stuck",
    DoubleSwitch => "adversarial_double_switch",
    PolytopeStuck => "adversarial_polytope_stuck",
});

impl Runner {
    /// Constructions that build their own losses and ignore the seed.
    pub fn is_scripted(self) -> bool {
        matches!(
            self,
            Runner::SmoothStuck | Runner::EntropyStuck | Runner::DimensionStuck | Runner::DoubleSwitch
        )
    }
}

keyword_enum!(OutputKind {
    TraceCsv => "trace_csv",
    SummaryCsv => "summary_csv",
    RegretSvg => "regret_svg",
});

keyword_enum!(
    /// Closed-form epsilon values evaluated at run time from the scenario.
    EpsFormula {
        EntropyStuck => "entropy_stuck",
        EntropyRobust => "entropy_robust",
        BarrierRobust => "barrier_robust",
        StochasticRobust => "stochastic_robust",
        DimensionStuck => "dimension_stuck",
        DoubleSwitch => "double_switch",
    }
);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsSpec {
    Value(f64),
    Formula(EpsFormula),
}

impl fmt::Display for EpsSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EpsSpec::Value(x) => f.write_str(&num(*x)),
            EpsSpec::Formula(k) => f.write_str(k.as_str()),
        }
    }
}

impl FromStr for EpsSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.parse::<f64>() {
            Ok(x) => Ok(EpsSpec::Value(x)),
            Err(_) => s.parse().map(EpsSpec::Formula),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DomainSpec {
    Simplex { dim: usize },
    Interval { lo: f64, hi: f64 },
    /// The hard polytope family with block size `m` (dimension `5m+2`).
    HardPolytope { m: usize },
}

impl DomainSpec {
    pub fn dim(&self) -> usize {
        match *self {
            DomainSpec::Simplex { dim } => dim,
            DomainSpec::Interval { .. } => 1,
            DomainSpec::HardPolytope { m } => 5 * m + 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegSpec {
    NegEntropy,
    LogBarrier,
    Tsallis { q: f64 },
    Euclidean { beta: f64 },
}

impl RegSpec {
    pub fn build(&self) -> omdlab_core::Result<Regularizer> {
        match *self {
            RegSpec::NegEntropy => Ok(Regularizer::NegEntropy),
            RegSpec::LogBarrier => Ok(Regularizer::LogBarrier),
            RegSpec::Tsallis { q } => Regularizer::tsallis(q),
            RegSpec::Euclidean { beta } => Regularizer::euclidean(beta),
        }
    }
}

impl fmt::Display for RegSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegSpec::NegEntropy => f.write_str("neg_entropy"),
            RegSpec::LogBarrier => f.write_str("log_barrier"),
            RegSpec::Tsallis { q } => write!(f, "tsallis({})", num(*q)),
            RegSpec::Euclidean { beta } => write!(f, "euclidean({})", num(*beta)),
        }
    }
}

impl FromStr for RegSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (head, arg) = match s.split_once('(') {
            Some((h, rest)) => {
                let a = rest.strip_suffix(')').ok_or_else(|| format!("missing ')' in {s:?}"))?;
                (h.trim(), Some(parse_f64(a.trim())?))
            }
            None => (s, None),
        };
        match (head, arg) {
            ("neg_entropy", None) => Ok(RegSpec::NegEntropy),
            ("log_barrier", None) => Ok(RegSpec::LogBarrier),
            ("tsallis", Some(q)) => Ok(RegSpec::Tsallis { q }),
            ("euclidean", Some(beta)) => Ok(RegSpec::Euclidean { beta }),
            _ => Err(format!(
                "unknown regularizer {s:?} (expected neg_entropy, log_barrier, tsallis(q) or euclidean(beta))"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LossConfig {
    /// Losses come from the adversarial runner itself.
    Construction,
    Constant(Vec<f64>),
    Switching(Vec<(usize, Vec<f64>)>),
    IidUniform { lo: f64, hi: f64 },
    /// Gaussian losses of the hard polytope family.
    GaussianPolytope,
}

impl LossConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            LossConfig::Construction => "construction",
            LossConfig::Constant(_) => "constant",
            LossConfig::Switching(_) => "switching",
            LossConfig::IidUniform { .. } => "iid_uniform",
            LossConfig::GaussianPolytope => "gaussian_polytope",
        }
    }
}

/// Reference value a check compares against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Value(f64),
    Named(TargetName),
}

keyword_enum!(TargetName {
    /// `D_R(w*, w1)/eta + 2 eta T + 2 T D sqrt(beta eps)/eta`.
    Smooth => "smooth_bound",
    /// `D_R(u, w1)/eta + 8 eta T`, with `u` smoothed towards `w1` for barriers.
    Robust => "robust_bound",
    Stochastic => "stochastic_bound",
    Ftrl => "ftrl_bound",
    /// Regret of the entropy stuck construction in closed form.
    StuckClosedForm => "stuck_closed_form",
    /// `T sqrt(eta d) / d`.
    PolytopeRate => "polytope_rate",
    Psi => "psi",
});

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Value(x) => f.write_str(&num(*x)),
            Target::Named(n) => f.write_str(n.as_str()),
        }
    }
}

impl FromStr for Target {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.parse::<f64>() {
            Ok(x) => Ok(Target::Value(x)),
            Err(_) => s.parse().map(Target::Named),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CheckKind {
    RegretEquals { value: f64, tol: f64 },
    SlackEquals { value: f64, tol: f64 },
    /// At least `fraction` of the cells satisfy `regret <= target`.
    RegretAtMost { target: Target, fraction: f64 },
    /// Every cell satisfies `regret >= factor * target`.
    RegretAtLeast { target: Target, factor: f64 },
    MeanRegretAtLeast { target: Target, factor: f64 },
    MinCoordAtLeast { target: Target },
    Certified,
    FrozenStuck,
    PolytopeShape,
    EventRateAtLeast { rate: f64 },
}

impl CheckKind {
    pub fn key(&self) -> &'static str {
        match self {
            CheckKind::RegretEquals { .. } => "regret_equals",
            CheckKind::SlackEquals { .. } => "slack_equals",
            CheckKind::RegretAtMost { .. } => "regret_at_most",
            CheckKind::RegretAtLeast { .. } => "regret_at_least",
            CheckKind::MeanRegretAtLeast { .. } => "mean_regret_at_least",
            CheckKind::MinCoordAtLeast { .. } => "min_coord_at_least",
            CheckKind::Certified => "certified",
            CheckKind::FrozenStuck => "frozen_stuck",
            CheckKind::PolytopeShape => "polytope_shape",
            CheckKind::EventRateAtLeast { .. } => "event_rate_at_least",
        }
    }

    fn args(&self) -> String {
        match *self {
            CheckKind::RegretEquals { value, tol } | CheckKind::SlackEquals { value, tol } => {
                format!("{}, {}", num(value), num(tol))
            }
            CheckKind::RegretAtMost { target, fraction } => format!("{target}, {}", num(fraction)),
            CheckKind::RegretAtLeast { target, factor } | CheckKind::MeanRegretAtLeast { target, factor } => {
                format!("{target}, {}", num(factor))
            }
            CheckKind::MinCoordAtLeast { target } => target.to_string(),
            CheckKind::Certified | CheckKind::FrozenStuck | CheckKind::PolytopeShape => String::new(),
            CheckKind::EventRateAtLeast { rate } => num(rate),
        }
    }

    fn parse(key: &str, value: &str) -> std::result::Result<Self, String> {
        let args: Vec<&str> = if value.is_empty() { Vec::new() } else { value.split(',').map(str::trim).collect() };
        let want = |n: usize| {
            if args.len() == n {
                Ok(())
            } else {
                Err(format!("{key} takes {n} argument(s), got {}", args.len()))
            }
        };
        let pair = |default: f64| -> std::result::Result<(Target, f64), String> {
            match args.len() {
                1 => Ok((args[0].parse()?, default)),
                2 => Ok((args[0].parse()?, parse_f64(args[1])?)),
                n => Err(format!("{key} takes 1 or 2 arguments, got {n}")),
            }
        };
        Ok(match key {
            "regret_equals" | "slack_equals" => {
                want(2)?;
                let (value, tol) = (parse_f64(args[0])?, parse_f64(args[1])?);
                if key == "regret_equals" {
                    CheckKind::RegretEquals { value, tol }
                } else {
                    CheckKind::SlackEquals { value, tol }
                }
            }
            "regret_at_most" => {
                let (target, fraction) = pair(1.0)?;
                CheckKind::RegretAtMost { target, fraction }
            }
            "regret_at_least" => {
                let (target, factor) = pair(1.0)?;
                CheckKind::RegretAtLeast { target, factor }
            }
            "mean_regret_at_least" => {
                let (target, factor) = pair(1.0)?;
                CheckKind::MeanRegretAtLeast { target, factor }
            }
            "min_coord_at_least" => {
                want(1)?;
                CheckKind::MinCoordAtLeast { target: args[0].parse()? }
            }
            "certified" | "frozen_stuck" | "polytope_shape" => {
                want(0)?;
                match key {
                    "certified" => CheckKind::Certified,
                    "frozen_stuck" => CheckKind::FrozenStuck,
                    _ => CheckKind::PolytopeShape,
                }
            }
            "event_rate_at_least" => {
                want(1)?;
                CheckKind::EventRateAtLeast { rate: parse_f64(args[0])? }
            }
            _ => return Err(format!("unknown check {key:?}")),
        })
    }
}

/// A check, optionally restricted to one runner's cells (`key@runner = args`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Check {
    pub kind: CheckKind,
    pub scope: Option<Runner>,
}

impl Check {
    pub fn all(kind: CheckKind) -> Self {
        Check { kind, scope: None }
    }

    pub fn only(kind: CheckKind, runner: Runner) -> Self {
        Check { kind, scope: Some(runner) }
    }

    pub fn label(&self) -> String {
        let args = self.kind.args();
        let key = match self.scope {
            Some(r) => format!("{}@{r}", self.kind.key()),
            None => self.kind.key().to_string(),
        };
        if args.is_empty() {
            key
        } else {
            format!("{key} {args}")
        }
    }
}

/// Shortest representation that parses back to the same value.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

fn parse_f64(s: &str) -> std::result::Result<f64, String> {
    s.parse::<f64>().map_err(|_| format!("not a number: {s:?}"))
}

/// Parses `1, 4, 10..20` (ranges are half-open).
pub fn parse_seeds(s: &str) -> std::result::Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim).filter(|x| !x.is_empty()) {
        let int = |x: &str| x.trim().parse::<u64>().map_err(|_| format!("not a seed: {x:?}"));
        match item.split_once("..") {
            Some((a, b)) => {
                let (a, b) = (int(a)?, int(b)?);
                if a >= b {
                    return Err(format!("empty seed range {item:?}"));
                }
                out.extend(a..b);
            }
            None => out.push(int(item)?),
        }
    }
    Ok(out)
}

fn format_seeds(seeds: &[u64]) -> String {
    let mut parts = Vec::new();
    let mut i = 0;
    while i < seeds.len() {
        let mut j = i;
        while j + 1 < seeds.len() && seeds[j].checked_add(1) == Some(seeds[j + 1]) {
            j += 1;
        }
        if j - i >= 2 {
            parts.push(format!("{}..{}", seeds[i], seeds[j] + 1));
        } else {
            parts.extend(seeds[i..=j].iter().map(u64::to_string));
        }
        i = j + 1;
    }
    parts.join(", ")
}

fn parse_list<T: FromStr<Err = String>>(s: &str) -> std::result::Result<Vec<T>, String> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(str::parse).collect()
}

fn parse_vector(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',').map(|x| parse_f64(x.trim())).collect()
}

fn join<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

fn vector(xs: &[f64]) -> String {
    xs.iter().map(|x| num(*x)).collect::<Vec<_>>().join(", ")
}

// ---- raw INI layer ----

#[derive(Debug)]
struct Entry {
    key: String,
    value: String,
    line: usize,
}

#[derive(Debug)]
struct Section {
    name: String,
    line: usize,
    entries: Vec<Entry>,
}

fn parse_ini(text: &str) -> Result<Vec<Section>> {
    let mut sections: Vec<Section> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let s = raw.trim();
        if s.is_empty() || s.starts_with('#') || s.starts_with(';') {
            continue;
        }
        if let Some(rest) = s.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| CliError::config(line, "section header without ']'"))?
                .trim();
            if name.is_empty() {
                return Err(CliError::config(line, "empty section name"));
            }
            if let Some(prev) = sections.iter().find(|x| x.name == name) {
                return Err(CliError::config(line, format!("section [{name}] already opened on line {}", prev.line)));
            }
            sections.push(Section { name: name.to_string(), line, entries: Vec::new() });
            continue;
        }
        let (key, value) = s
            .split_once('=')
            .ok_or_else(|| CliError::config(line, format!("expected 'key = value', got {s:?}")))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(CliError::config(line, "empty key"));
        }
        let section = sections
            .last_mut()
            .ok_or_else(|| CliError::config(line, "key outside of any section"))?;
        section.entries.push(Entry { key: key.to_string(), value: value.trim().to_string(), line });
    }
    Ok(sections)
}

/// Typed access to one section that rejects unknown and duplicated keys.
struct Fields<'a> {
    section: &'a Section,
    used: Vec<bool>,
}

impl<'a> Fields<'a> {
    fn new(section: &'a Section) -> Self {
        Fields { section, used: vec![false; section.entries.len()] }
    }

    fn get(&mut self, key: &str) -> Result<Option<&'a Entry>> {
        let mut found: Option<&'a Entry> = None;
        for (i, e) in self.section.entries.iter().enumerate() {
            if e.key == key {
                if let Some(first) = found {
                    return Err(CliError::config(
                        e.line,
                        format!("duplicate key {key:?} (first set on line {})", first.line),
                    ));
                }
                self.used[i] = true;
                found = Some(e);
            }
        }
        Ok(found)
    }

    fn req(&mut self, key: &str) -> Result<&'a Entry> {
        self.get(key)?.ok_or_else(|| {
            CliError::config(self.section.line, format!("[{}] is missing key {key:?}", self.section.name))
        })
    }

    fn parsed<T, F>(&mut self, key: &str, f: F) -> Result<T>
    where
        F: FnOnce(&str) -> std::result::Result<T, String>,
    {
        let e = self.req(key)?;
        f(&e.value).map_err(|m| CliError::config(e.line, m))
    }

    fn repeated(&mut self, key: &str) -> Vec<&'a Entry> {
        let mut out = Vec::new();
        for (i, e) in self.section.entries.iter().enumerate() {
            if e.key == key {
                self.used[i] = true;
                out.push(e);
            }
        }
        out
    }

    fn finish(self) -> Result<()> {
        match self.used.iter().position(|u| !u) {
            Some(i) => {
                let e = &self.section.entries[i];
                Err(CliError::config(e.line, format!("unknown key {:?} in [{}]", e.key, self.section.name)))
            }
            None => Ok(()),
        }
    }
}

fn num_of(s: &str) -> std::result::Result<f64, String> {
    parse_f64(s)
}

fn usize_of(s: &str) -> std::result::Result<usize, String> {
    s.parse::<usize>().map_err(|_| format!("not a non-negative integer: {s:?}"))
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario> {
        let sections = parse_ini(text)?;
        const KNOWN: [&str; 6] = ["scenario", "domain", "regularizer", "losses", "params", "checks"];
        if let Some(s) = sections.iter().find(|s| !KNOWN.contains(&s.name.as_str())) {
            return Err(CliError::config(s.line, format!("unknown section [{}]", s.name)));
        }
        let find = |name: &str| sections.iter().find(|s| s.name == name);
        let need = |name: &str| find(name).ok_or_else(|| CliError::config(0, format!("missing section [{name}]")));

        let mut f = Fields::new(need("scenario")?);
        let name = f.req("name")?.value.clone();
        let runners = f.parsed("runners", parse_list)?;
        let seeds = f.parsed("seeds", parse_seeds)?;
        let horizon = f.parsed("horizon", usize_of)?;
        let eta = f.parsed("eta", num_of)?;
        let eps = f.parsed("eps", parse_list)?;
        let eps_floor = match f.get("eps_floor")? {
            Some(e) => Some(parse_f64(&e.value).map_err(|m| CliError::config(e.line, m))?),
            None => None,
        };
        let outputs = f.parsed("outputs", parse_list)?;
        f.finish()?;

        let mut f = Fields::new(need("domain")?);
        let kind = f.req("kind")?;
        let domain = match kind.value.as_str() {
            "simplex" => DomainSpec::Simplex { dim: f.parsed("dim", usize_of)? },
            "interval" => DomainSpec::Interval { lo: f.parsed("lo", num_of)?, hi: f.parsed("hi", num_of)? },
            "hard_polytope" => DomainSpec::HardPolytope { m: f.parsed("m", usize_of)? },
            other => {
                return Err(CliError::config(
                    kind.line,
                    format!("unknown domain kind {other:?} (expected simplex, interval or hard_polytope)"),
                ))
            }
        };
        f.finish()?;

        let mut f = Fields::new(need("regularizer")?);
        let regularizers = f.parsed("kinds", parse_list)?;
        f.finish()?;

        let mut f = Fields::new(need("losses")?);
        let kind = f.req("kind")?;
        let losses = match kind.value.as_str() {
            "construction" => LossConfig::Construction,
            "gaussian_polytope" => LossConfig::GaussianPolytope,
            "constant" => LossConfig::Constant(f.parsed("vector", parse_vector)?),
            "iid_uniform" => LossConfig::IidUniform { lo: f.parsed("lo", num_of)?, hi: f.parsed("hi", num_of)? },
            "switching" => {
                let mut phases = Vec::new();
                for e in f.repeated("phase") {
                    let (len, v) = e
                        .value
                        .split_once(':')
                        .ok_or_else(|| CliError::config(e.line, "phase must look like 'LENGTH: v1, v2, ...'"))?;
                    let len = usize_of(len.trim()).map_err(|m| CliError::config(e.line, m))?;
                    let v = parse_vector(v.trim()).map_err(|m| CliError::config(e.line, m))?;
                    phases.push((len, v));
                }
                if phases.is_empty() {
                    return Err(CliError::config(kind.line, "switching losses need at least one 'phase' line"));
                }
                LossConfig::Switching(phases)
            }
            other => {
                return Err(CliError::config(
                    kind.line,
                    format!(
                        "unknown loss kind {other:?} (expected construction, constant, switching, iid_uniform or gaussian_polytope)"
                    ),
                ))
            }
        };
        f.finish()?;

        let mut params = BTreeMap::new();
        if let Some(s) = find("params") {
            for e in &s.entries {
                let v = parse_f64(&e.value).map_err(|m| CliError::config(e.line, m))?;
                if params.insert(e.key.clone(), v).is_some() {
                    return Err(CliError::config(e.line, format!("duplicate key {:?}", e.key)));
                }
            }
        }

        let mut checks = Vec::new();
        if let Some(s) = find("checks") {
            for e in &s.entries {
                let (key, scope) = match e.key.split_once('@') {
                    Some((k, r)) => (k.trim(), Some(r.trim().parse().map_err(|m| CliError::config(e.line, m))?)),
                    None => (e.key.as_str(), None),
                };
                let kind = CheckKind::parse(key, &e.value).map_err(|m| CliError::config(e.line, m))?;
                checks.push(Check { kind, scope });
            }
        }

        Ok(Scenario {
            name,
            runners,
            seeds,
            horizon,
            eta,
            eps,
            eps_floor,
            outputs,
            domain,
            regularizers,
            losses,
            params,
            checks,
        })
    }

    /// Replaces the seed list with the value of [`SEED_ENV`] (same grammar as `seeds`).
    pub fn override_seeds(&mut self, text: &str) -> Result<()> {
        let seeds = parse_seeds(text).map_err(|m| CliError::Validation(format!("{SEED_ENV}: {m}")))?;
        if seeds.is_empty() {
            return Err(CliError::Validation(format!("{SEED_ENV} is set but names no seeds")));
        }
        self.seeds = seeds;
        Ok(())
    }

    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: &str| {
            if v.is_empty() {
                s.push_str(&format!("{k} =\n"));
            } else {
                s.push_str(&format!("{k} = {v}\n"));
            }
        };
        kv("[scenario]", "");
        kv("name", &self.name);
        kv("runners", &join(&self.runners));
        kv("seeds", &format_seeds(&self.seeds));
        kv("horizon", &self.horizon.to_string());
        kv("eta", &num(self.eta));
        kv("eps", &join(&self.eps));
        if let Some(x) = self.eps_floor {
            kv("eps_floor", &num(x));
        }
        kv("outputs", &join(&self.outputs));
        let mut out = s.replace("[scenario] =\n", "[scenario]\n");

        out.push_str("\n[domain]\n");
        match self.domain {
            DomainSpec::Simplex { dim } => out.push_str(&format!("kind = simplex\ndim = {dim}\n")),
            DomainSpec::Interval { lo, hi } => {
                out.push_str(&format!("kind = interval\nlo = {}\nhi = {}\n", num(lo), num(hi)))
            }
            DomainSpec::HardPolytope { m } => out.push_str(&format!("kind = hard_polytope\nm = {m}\n")),
        }

        out.push_str(&format!("\n[regularizer]\nkinds = {}\n", join(&self.regularizers)));

        out.push_str(&format!("\n[losses]\nkind = {}\n", self.losses.kind()));
        match &self.losses {
            LossConfig::Constant(v) => out.push_str(&format!("vector = {}\n", vector(v))),
            LossConfig::Switching(phases) => {
                for (len, v) in phases {
                    out.push_str(&format!("phase = {len}: {}\n", vector(v)));
                }
            }
            LossConfig::IidUniform { lo, hi } => out.push_str(&format!("lo = {}\nhi = {}\n", num(*lo), num(*hi))),
            LossConfig::Construction | LossConfig::GaussianPolytope => {}
        }

        if !self.params.is_empty() {
            out.push_str("\n[params]\n");
            for (k, v) in &self.params {
                out.push_str(&format!("{k} = {}\n", num(*v)));
            }
        }
        if !self.checks.is_empty() {
            out.push_str("\n[checks]\n");
            for c in &self.checks {
                let key = match c.scope {
                    Some(r) => format!("{}@{r}", c.kind.key()),
                    None => c.kind.key().to_string(),
                };
                let args = c.kind.args();
                if args.is_empty() {
                    out.push_str(&format!("{key} =\n"));
                } else {
                    out.push_str(&format!("{key} = {args}\n"));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# comment
[scenario]
name = demo
runners = honest_tight, exact
seeds = 3, 0..4, 9
horizon = 50
eta = 0.1
eps = 1e-6, entropy_robust
eps_floor = 1e-12
outputs = trace_csv, summary_csv

[domain]
kind = simplex
dim = 2

[regularizer]
kinds = neg_entropy, tsallis(0.5)

[losses]
kind = switching
phase = 20: 1, 0
phase = 30: 0, 1

[params]
alpha = 20

[checks]
regret_at_most = robust_bound, 0.95
regret_at_least@exact = 1.5
certified =
";

    #[test]
    fn parses_sample() {
        let s = Scenario::parse(SAMPLE).unwrap();
        assert_eq!(s.seeds, vec![3, 0, 1, 2, 3, 9]);
        assert_eq!(s.runners, vec![Runner::HonestTight, Runner::Exact]);
        assert_eq!(s.eps, vec![EpsSpec::Value(1e-6), EpsSpec::Formula(EpsFormula::EntropyRobust)]);
        assert_eq!(s.regularizers[1], RegSpec::Tsallis { q: 0.5 });
        assert_eq!(s.losses, LossConfig::Switching(vec![(20, vec![1.0, 0.0]), (30, vec![0.0, 1.0])]));
        assert_eq!(s.checks.len(), 3);
        assert_eq!(s.checks[1].scope, Some(Runner::Exact));
        assert_eq!(
            s.checks[0].kind,
            CheckKind::RegretAtMost { target: Target::Named(TargetName::Robust), fraction: 0.95 }
        );
    }

    #[test]
    fn round_trips() {
        let s = Scenario::parse(SAMPLE).unwrap();
        let text = s.serialize();
        assert_eq!(Scenario::parse(&text).unwrap(), s);
        assert_eq!(Scenario::parse(&text).unwrap().serialize(), text);
    }

    #[test]
    fn seeds_compress_to_ranges() {
        assert_eq!(format_seeds(&[0, 1, 2, 3, 7, 8]), "0..4, 7, 8");
        assert_eq!(parse_seeds("0..4, 7, 8").unwrap(), vec![0, 1, 2, 3, 7, 8]);
        assert!(parse_seeds("4..4").is_err());
        assert_eq!(parse_seeds("").unwrap(), Vec::<u64>::new());
    }

    fn line_of(err: CliError) -> usize {
        match err {
            CliError::Config { line, .. } => line,
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = SAMPLE.replace("dim = 2", "dim = two");
        assert_eq!(line_of(Scenario::parse(&bad).unwrap_err()), 14);
        let bad = SAMPLE.replace("alpha = 20", "alpha = 20\nalpha = 3");
        assert_eq!(line_of(Scenario::parse(&bad).unwrap_err()), 26);
        let bad = SAMPLE.replace("horizon = 50", "horizon = 50\ncolour = red");
        assert_eq!(line_of(Scenario::parse(&bad).unwrap_err()), 7);
        let bad = SAMPLE.replace("certified =", "certified = yes");
        assert_eq!(line_of(Scenario::parse(&bad).unwrap_err()), 30);
    }

    #[test]
    fn rejects_structure_errors() {
        assert!(Scenario::parse("name = x").is_err());
        assert!(Scenario::parse("[scenario\nname = x").is_err());
        assert!(Scenario::parse(&SAMPLE.replace("[params]", "[extra]")).is_err());
        assert!(Scenario::parse(&SAMPLE.replace("kinds = neg_entropy", "kinds = entropy")).is_err());
    }
}

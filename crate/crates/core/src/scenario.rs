//! Plain-text scenario files.
//!
//! ```text
//! [plant]
//! sample_time = 0.2
//! gap = 20
//! leader = 100, 12
//! followers = 65,10; 40,8
//!
//! [topology]
//! n = 2
//! pinning = 1,0
//! edge 1 2
//!
//! [gain]
//! xi = 0.99
//!
//! [trigger]
//! scheme = static
//!
//! [sim]
//! horizon = 500
//! ```
//!
//! Sections `[switch]` and `[attack]` are optional. Unknown keys are errors.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::attack::{random_schedule, AttackBudget, AttackInterval, AttackSchedule};
use crate::error::{PlatoonError, Result};
use crate::gain::{Gain, GainDesign, DEFAULT_MARI_MAX_ITER, DEFAULT_MARI_TOL};
use crate::graph::{apply_topology_line, build_from_parts, BuiltinTopology, Topology};
use crate::linalg::Matrix;
use crate::plant::{PlantModel, VehicleState};
use crate::sim::{Scenario, TopologySwitch, DEFAULT_THRESHOLD};
use crate::trigger::{
    compute_s_constants, DynamicTriggerParams, StaticTriggerParams, TriggerScheme, DEFAULT_PARTIAL, DEFAULT_W1_FRACTION,
};

pub const DEFAULT_XI: f64 = 0.99;
pub const DEFAULT_TAIL_STEPS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub enum TopologySpec {
    Builtin(BuiltinTopology),
    Custom(Topology),
}

impl TopologySpec {
    pub fn topology(&self) -> Topology {
        match self {
            Self::Builtin(b) => b.topology(),
            Self::Custom(t) => t.clone(),
        }
    }

    fn write(&self, out: &mut String) {
        match self {
            Self::Builtin(b) => {
                let _ = writeln!(out, "builtin = {}", b.name());
            }
            Self::Custom(t) => out.push_str(&t.to_text().replace("n=", "n = ").replace("pinning=", "pinning = ")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Spacing {
    /// Follower `i` sits `gap·i` behind the leader.
    Gap(f64),
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SchemeConfig {
    Static,
    Dynamic { rho: f64, vartheta: f64, theta: f64, mu0: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttackSource {
    None,
    /// `(h, τ)` pairs in seconds.
    Explicit(Vec<(f64, f64)>),
    Random {
        seed: u64,
    },
}

/// Parsed scenario before gain synthesis and schedule sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub sample_time: f64,
    pub spacing: Spacing,
    pub leader: VehicleState<f64>,
    pub followers: Vec<VehicleState<f64>>,
    pub topology: TopologySpec,
    pub candidates: Vec<BuiltinTopology>,
    pub switch: Option<(f64, TopologySpec)>,
    pub xi: f64,
    pub seed_residual: Matrix<f64>,
    pub gain_override: Option<Gain<f64>>,
    pub attacked_kv: Option<f64>,
    pub mari_tol: f64,
    pub mari_max_iter: usize,
    pub scheme: SchemeConfig,
    pub partial: f64,
    pub beta: Option<f64>,
    pub w1_fraction: f64,
    pub g_tilde_v: f64,
    /// Attacked followers, zero-based.
    pub targets: Vec<usize>,
    pub budget: Option<AttackBudget>,
    pub attacks: AttackSource,
    pub horizon: usize,
    pub threshold: f64,
    pub tail_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Section {
    Plant,
    Topology,
    Switch,
    Gain,
    Trigger,
    Attack,
    Sim,
}

impl Section {
    fn name(self) -> &'static str {
        match self {
            Self::Plant => "plant",
            Self::Topology => "topology",
            Self::Switch => "switch",
            Self::Gain => "gain",
            Self::Trigger => "trigger",
            Self::Attack => "attack",
            Self::Sim => "sim",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [Self::Plant, Self::Topology, Self::Switch, Self::Gain, Self::Trigger, Self::Attack, Self::Sim]
            .into_iter()
            .find(|sec| sec.name() == s)
    }
}

const REQUIRED: [Section; 5] = [Section::Plant, Section::Topology, Section::Gain, Section::Trigger, Section::Sim];

#[derive(Default)]
struct TopoParts {
    builtin: Option<BuiltinTopology>,
    n: Option<usize>,
    pinning: Option<Vec<bool>>,
    edges: Vec<(usize, usize)>,
    line: usize,
}

impl TopoParts {
    fn finish(self, section: &str) -> Result<TopologySpec> {
        let custom = self.n.is_some() || self.pinning.is_some() || !self.edges.is_empty();
        match (self.builtin, custom) {
            (Some(b), false) => Ok(TopologySpec::Builtin(b)),
            (Some(_), true) => Err(PlatoonError::Parse {
                line: self.line,
                message: format!("[{section}] mixes `builtin` with an explicit graph"),
            }),
            (None, _) => build_from_parts(self.n, self.pinning, &self.edges, self.line)
                .map(TopologySpec::Custom)
                .map_err(|e| match e {
                    PlatoonError::Parse { line, message } => {
                        PlatoonError::Parse { line, message: format!("[{section}] {message}") }
                    }
                    other => other,
                }),
        }
    }
}

fn perr(line: usize, message: impl Into<String>) -> PlatoonError {
    PlatoonError::Parse { line, message: message.into() }
}

fn num<T: FromStr>(v: &str, line: usize, key: &str) -> Result<T> {
    v.trim().parse().map_err(|_| perr(line, format!("`{key}`: cannot parse `{}`", v.trim())))
}

fn list(v: &str, sep: char, line: usize, key: &str) -> Result<Vec<f64>> {
    v.split(sep).map(str::trim).filter(|t| !t.is_empty()).map(|t| num(t, line, key)).collect()
}

fn pair(v: &str, line: usize, key: &str) -> Result<(f64, f64)> {
    match list(v, ',', line, key)?.as_slice() {
        &[a, b] => Ok((a, b)),
        _ => Err(perr(line, format!("`{key}` expects two comma-separated numbers"))),
    }
}

fn kv_args<'a>(rest: &'a str, line: usize, keys: &[&str]) -> Result<Vec<&'a str>> {
    let mut found = vec![None; keys.len()];
    for tok in rest.split_whitespace() {
        let (k, v) = tok.split_once('=').ok_or_else(|| perr(line, format!("expected key=value, got `{tok}`")))?;
        let idx = keys.iter().position(|&x| x == k).ok_or_else(|| perr(line, format!("unknown argument `{k}`")))?;
        found[idx] = Some(v);
    }
    found.into_iter().zip(keys).map(|(v, k)| v.ok_or_else(|| perr(line, format!("missing `{k}=`")))).collect()
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut seen_sections: HashSet<Section> = HashSet::new();
        let mut seen_keys: HashSet<(Section, String)> = HashSet::new();
        let mut section: Option<Section> = None;

        let mut sample_time = None;
        let mut gap = None;
        let mut spacing = None;
        let mut leader = None;
        let mut followers = None;
        let mut topo = TopoParts::default();
        let mut switch_topo = TopoParts::default();
        let mut switch_time = None;
        let mut candidates = Vec::new();
        let mut xi = DEFAULT_XI;
        let mut seed_residual = Matrix::identity(2);
        let mut gain_override = None;
        let mut attacked_kv = None;
        let mut mari_tol = DEFAULT_MARI_TOL;
        let mut mari_max_iter = DEFAULT_MARI_MAX_ITER;
        let mut scheme_name: Option<(String, usize)> = None;
        let mut partial = DEFAULT_PARTIAL;
        let mut beta = None;
        let mut w1_fraction = DEFAULT_W1_FRACTION;
        let mut dyn_keys: [Option<f64>; 4] = [None; 4];
        let mut dyn_line = 0;
        let mut g_tilde_v = 0.0;
        let mut targets: Option<Vec<usize>> = None;
        let mut budget_keys: [Option<f64>; 4] = [None; 4];
        let mut budget_line = 0;
        let mut explicit_attacks = Vec::new();
        let mut random_seed = None;
        let mut horizon = None;
        let mut threshold = DEFAULT_THRESHOLD;
        let mut tail_steps = DEFAULT_TAIL_STEPS;

        for (idx, raw) in text.lines().enumerate() {
            let ln = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let sec = Section::parse(name.trim())
                    .ok_or_else(|| perr(ln, format!("unknown section [{}]", name.trim())))?;
                if !seen_sections.insert(sec) {
                    return Err(perr(ln, format!("duplicate section [{}]", sec.name())));
                }
                section = Some(sec);
                continue;
            }
            let sec = section.ok_or_else(|| perr(ln, "key outside of any section"))?;

            if matches!(sec, Section::Topology | Section::Switch) && line.starts_with("edge") && !line.contains('=') {
                let parts = if sec == Section::Topology { &mut topo } else { &mut switch_topo };
                parts.line = ln;
                apply_topology_line(line, ln, &mut parts.n, &mut parts.pinning, &mut parts.edges)?;
                continue;
            }
            if sec == Section::Attack {
                if let Some(rest) = line.strip_prefix("attack-random") {
                    if random_seed.is_some() {
                        return Err(perr(ln, "duplicate `attack-random` directive"));
                    }
                    random_seed = Some(num::<u64>(kv_args(rest, ln, &["seed"])?[0], ln, "seed")?);
                    continue;
                }
                if let Some(rest) = line.strip_prefix("attack ") {
                    let a = kv_args(rest, ln, &["h", "tau"])?;
                    let (h, tau) = (num::<f64>(a[0], ln, "h")?, num::<f64>(a[1], ln, "tau")?);
                    AttackInterval::from_seconds(h, tau, 1.0).map_err(|e| perr(ln, e.to_string()))?;
                    explicit_attacks.push((h, tau));
                    continue;
                }
            }

            let (key, value) =
                line.split_once('=').ok_or_else(|| perr(ln, format!("expected key = value, got `{line}`")))?;
            let key = key.trim();
            let value = value.trim();
            if !seen_keys.insert((sec, key.to_string())) {
                return Err(perr(ln, format!("duplicate key `{key}` in [{}]", sec.name())));
            }
            let unknown = || perr(ln, format!("unknown key `{key}` in [{}]", sec.name()));
            match sec {
                Section::Plant => match key {
                    "sample_time" => sample_time = Some(num::<f64>(value, ln, key)?),
                    "gap" => gap = Some((num::<f64>(value, ln, key)?, ln)),
                    "spacing" => spacing = Some((list(value, ',', ln, key)?, ln)),
                    "leader" => {
                        let (p, v) = pair(value, ln, key)?;
                        leader = Some(VehicleState::new(p, v));
                    }
                    "followers" => {
                        let states = value
                            .split(';')
                            .map(str::trim)
                            .filter(|s| !s.is_empty())
                            .map(|s| pair(s, ln, key).map(|(p, v)| VehicleState::new(p, v)))
                            .collect::<Result<Vec<_>>>()?;
                        followers = Some(states);
                    }
                    _ => return Err(unknown()),
                },
                Section::Topology | Section::Switch => {
                    let parts = if sec == Section::Topology { &mut topo } else { &mut switch_topo };
                    parts.line = ln;
                    match key {
                        "builtin" => parts.builtin = Some(value.parse()?),
                        "n" | "pinning" => {
                            apply_topology_line(
                                &format!("{key}={value}"),
                                ln,
                                &mut parts.n,
                                &mut parts.pinning,
                                &mut parts.edges,
                            )?;
                        }
                        "candidates" if sec == Section::Topology => {
                            candidates = value
                                .split(',')
                                .map(str::trim)
                                .filter(|s| !s.is_empty())
                                .map(BuiltinTopology::from_str)
                                .collect::<Result<Vec<_>>>()?;
                        }
                        "time" if sec == Section::Switch => switch_time = Some(num::<f64>(value, ln, key)?),
                        _ => return Err(unknown()),
                    }
                }
                Section::Gain => match key {
                    "xi" => xi = num(value, ln, key)?,
                    "seed_residual" => {
                        let rows: Vec<Vec<f64>> =
                            value.split(';').map(|r| list(r, ',', ln, key)).collect::<Result<_>>()?;
                        if rows.len() != 2 || rows.iter().any(|r| r.len() != 2) {
                            return Err(perr(ln, "`seed_residual` expects a 2x2 matrix `a,b; c,d`"));
                        }
                        seed_residual = Matrix::from_rows(&rows);
                    }
                    "k" => {
                        let (kp, kv) = pair(value, ln, key)?;
                        gain_override = Some(Gain::new(kp, kv));
                    }
                    "attacked_kv" => attacked_kv = Some(num(value, ln, key)?),
                    "mari_tol" => mari_tol = num(value, ln, key)?,
                    "mari_max_iter" => mari_max_iter = num(value, ln, key)?,
                    _ => return Err(unknown()),
                },
                Section::Trigger => match key {
                    "scheme" => scheme_name = Some((value.to_ascii_lowercase(), ln)),
                    "partial" => partial = num(value, ln, key)?,
                    "beta" => beta = Some(num(value, ln, key)?),
                    "w1_fraction" => w1_fraction = num(value, ln, key)?,
                    "rho" | "vartheta" | "theta" | "mu0" => {
                        let idx = ["rho", "vartheta", "theta", "mu0"].iter().position(|&k| k == key).unwrap_or(0);
                        dyn_keys[idx] = Some(num(value, ln, key)?);
                        dyn_line = ln;
                    }
                    _ => return Err(unknown()),
                },
                Section::Attack => match key {
                    "g_tilde_v" => g_tilde_v = num(value, ln, key)?,
                    "targets" => {
                        targets = Some(if value.eq_ignore_ascii_case("all") {
                            Vec::new()
                        } else {
                            value
                                .split(',')
                                .map(|t| match num::<usize>(t, ln, key)? {
                                    0 => Err(perr(ln, "targets are follower indices starting at 1")),
                                    i => Ok(i - 1),
                                })
                                .collect::<Result<_>>()?
                        });
                    }
                    "zeta0" | "tau0" | "F0" | "f0" => {
                        let idx = ["zeta0", "tau0", "F0", "f0"].iter().position(|&k| k == key).unwrap_or(0);
                        budget_keys[idx] = Some(num(value, ln, key)?);
                        budget_line = ln;
                    }
                    _ => return Err(unknown()),
                },
                Section::Sim => match key {
                    "horizon" => horizon = Some(num(value, ln, key)?),
                    "threshold" => threshold = num(value, ln, key)?,
                    "tail_steps" => tail_steps = num(value, ln, key)?,
                    _ => return Err(unknown()),
                },
            }
        }

        let end = text.lines().count();
        for sec in REQUIRED {
            if !seen_sections.contains(&sec) {
                return Err(perr(end, format!("missing section [{}]", sec.name())));
            }
        }
        let need =
            |v: Option<f64>, sec: &str, key: &str| v.ok_or_else(|| perr(end, format!("[{sec}] missing `{key}`")));

        let followers = followers.ok_or_else(|| perr(end, "[plant] missing `followers`"))?;
        let spacing = match (gap, spacing) {
            (Some((g, _)), None) => Spacing::Gap(g),
            (None, Some((s, ln))) => {
                if s.len() != followers.len() {
                    return Err(perr(
                        ln,
                        format!("`spacing` has {} entries for {} followers", s.len(), followers.len()),
                    ));
                }
                Spacing::Explicit(s)
            }
            (Some(_), Some((_, ln))) => return Err(perr(ln, "give either `gap` or `spacing`, not both")),
            (None, None) => return Err(perr(end, "[plant] missing `gap` or `spacing`")),
        };
        let topology = topo.finish("topology")?;
        let switch = match (seen_sections.contains(&Section::Switch), switch_time) {
            (false, _) => None,
            (true, Some(t)) => Some((t, switch_topo.finish("switch")?)),
            (true, None) => return Err(perr(end, "[switch] missing `time`")),
        };

        let (scheme_name, scheme_line) = scheme_name.ok_or_else(|| perr(end, "[trigger] missing `scheme`"))?;
        let scheme = match scheme_name.as_str() {
            "static" => {
                if dyn_keys.iter().any(Option::is_some) {
                    return Err(perr(dyn_line, "rho/vartheta/theta/mu0 require `scheme = dynamic`"));
                }
                SchemeConfig::Static
            }
            "dynamic" => SchemeConfig::Dynamic {
                rho: need(dyn_keys[0], "trigger", "rho")?,
                vartheta: need(dyn_keys[1], "trigger", "vartheta")?,
                theta: need(dyn_keys[2], "trigger", "theta")?,
                mu0: need(dyn_keys[3], "trigger", "mu0")?,
            },
            other => return Err(perr(scheme_line, format!("unknown scheme `{other}` (static | dynamic)"))),
        };

        let budget = if budget_keys.iter().any(Option::is_some) {
            let b = AttackBudget::new(
                need(budget_keys[0], "attack", "zeta0")?,
                need(budget_keys[1], "attack", "tau0")?,
                need(budget_keys[2], "attack", "F0")?,
                need(budget_keys[3], "attack", "f0")?,
            )
            .map_err(|e| perr(budget_line, e.to_string()))?;
            Some(b)
        } else {
            None
        };
        let attacks = match (explicit_attacks.is_empty(), random_seed) {
            (true, None) => AttackSource::None,
            (false, None) => AttackSource::Explicit(explicit_attacks),
            (true, Some(seed)) => {
                if budget.is_none() {
                    return Err(perr(end, "`attack-random` needs a budget (zeta0, tau0, F0, f0)"));
                }
                AttackSource::Random { seed }
            }
            (false, Some(_)) => return Err(perr(end, "use either `attack` lines or `attack-random`, not both")),
        };
        let targets = match targets {
            Some(t) if !t.is_empty() => t,
            _ => (0..followers.len()).collect(),
        };
        if let Some(&bad) = targets.iter().find(|&&i| i >= followers.len()) {
            return Err(perr(end, format!("attack target {} exceeds the {} followers", bad + 1, followers.len())));
        }

        Ok(Self {
            sample_time: sample_time.ok_or_else(|| perr(end, "[plant] missing `sample_time`"))?,
            spacing,
            leader: leader.ok_or_else(|| perr(end, "[plant] missing `leader`"))?,
            followers,
            topology,
            candidates,
            switch,
            xi,
            seed_residual,
            gain_override,
            attacked_kv,
            mari_tol,
            mari_max_iter,
            scheme,
            partial,
            beta,
            w1_fraction,
            g_tilde_v,
            targets,
            budget,
            attacks,
            horizon: horizon.ok_or_else(|| perr(end, "[sim] missing `horizon`"))?,
            threshold,
            tail_steps,
        })
    }

    pub fn serialize(&self) -> String {
        let mut o = String::new();
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(", ");
        let _ = writeln!(o, "[plant]\nsample_time = {}", self.sample_time);
        match &self.spacing {
            Spacing::Gap(g) => {
                let _ = writeln!(o, "gap = {g}");
            }
            Spacing::Explicit(s) => {
                let _ = writeln!(o, "spacing = {}", join(s));
            }
        }
        let _ = writeln!(o, "leader = {}, {}", self.leader.position, self.leader.velocity);
        let fs: Vec<String> = self.followers.iter().map(|x| format!("{},{}", x.position, x.velocity)).collect();
        let _ = writeln!(o, "followers = {}", fs.join("; "));

        o.push_str("\n[topology]\n");
        self.topology.write(&mut o);
        if !self.candidates.is_empty() {
            let names: Vec<&str> = self.candidates.iter().map(|c| c.name()).collect();
            let _ = writeln!(o, "candidates = {}", names.join(", "));
        }
        if let Some((t, spec)) = &self.switch {
            let _ = writeln!(o, "\n[switch]\ntime = {t}");
            spec.write(&mut o);
        }

        let _ = writeln!(o, "\n[gain]\nxi = {}", self.xi);
        let r = &self.seed_residual;
        let _ = writeln!(o, "seed_residual = {},{}; {},{}", r[(0, 0)], r[(0, 1)], r[(1, 0)], r[(1, 1)]);
        if let Some(k) = self.gain_override {
            let _ = writeln!(o, "k = {}, {}", k.kp, k.kv);
        }
        if let Some(kv) = self.attacked_kv {
            let _ = writeln!(o, "attacked_kv = {kv}");
        }
        let _ = writeln!(o, "mari_tol = {}\nmari_max_iter = {}", self.mari_tol, self.mari_max_iter);

        o.push_str("\n[trigger]\n");
        match self.scheme {
            SchemeConfig::Static => o.push_str("scheme = static\n"),
            SchemeConfig::Dynamic { rho, vartheta, theta, mu0 } => {
                let _ =
                    writeln!(o, "scheme = dynamic\nrho = {rho}\nvartheta = {vartheta}\ntheta = {theta}\nmu0 = {mu0}");
            }
        }
        let _ = writeln!(o, "partial = {}", self.partial);
        if let Some(b) = self.beta {
            let _ = writeln!(o, "beta = {b}");
        }
        let _ = writeln!(o, "w1_fraction = {}", self.w1_fraction);

        let _ = writeln!(o, "\n[attack]\ng_tilde_v = {}", self.g_tilde_v);
        let ts: Vec<String> = self.targets.iter().map(|i| (i + 1).to_string()).collect();
        let _ = writeln!(o, "targets = {}", ts.join(","));
        if let Some(b) = self.budget {
            let _ = writeln!(o, "zeta0 = {}\ntau0 = {}\nF0 = {}\nf0 = {}", b.zeta0, b.tau0, b.big_f0, b.f0);
        }
        match &self.attacks {
            AttackSource::None => {}
            AttackSource::Explicit(list) => {
                for (h, tau) in list {
                    let _ = writeln!(o, "attack h={h} tau={tau}");
                }
            }
            AttackSource::Random { seed } => {
                let _ = writeln!(o, "attack-random seed={seed}");
            }
        }

        let _ = writeln!(
            o,
            "\n[sim]\nhorizon = {}\nthreshold = {}\ntail_steps = {}",
            self.horizon, self.threshold, self.tail_steps
        );
        o
    }

    /// Replaces the random-schedule seed and horizon, as the command line does.
    pub fn with_overrides(&self, seed: Option<u64>, horizon: Option<usize>) -> Self {
        let mut c = self.clone();
        if let (Some(s), AttackSource::Random { seed }) = (seed, &mut c.attacks) {
            *seed = s;
        }
        if let Some(h) = horizon {
            c.horizon = h;
        }
        c
    }

    pub fn plant(&self) -> Result<PlantModel<f64>> {
        match &self.spacing {
            Spacing::Gap(g) => PlantModel::with_uniform_gap(self.sample_time, *g, self.followers.len()),
            Spacing::Explicit(s) => PlantModel::new(self.sample_time, s.clone()),
        }
    }

    fn step_of(&self, seconds: f64) -> usize {
        (seconds / self.sample_time).round().max(0.0) as usize
    }

    /// Synthesizes the gain, derives trigger constants and samples the attack schedule.
    pub fn resolve(&self) -> Result<Resolved> {
        let n = self.followers.len();
        let plant = self.plant()?;
        let topology = self.topology.topology();
        if topology.n_followers() != n {
            return Err(PlatoonError::Dimension(format!(
                "topology has {} followers, [plant] lists {n}",
                topology.n_followers()
            )));
        }
        let design =
            GainDesign::synthesize(&plant, &topology, self.xi, &self.seed_residual, self.mari_tol, self.mari_max_iter)?;
        let gain = self.gain_override.unwrap_or(design.gain);
        let w1 = design.w.scale(self.w1_fraction);
        let s = compute_s_constants(&topology.h_matrix(), &design.p, &plant.a(), &plant.b(), gain, &w1)?;
        let static_params = StaticTriggerParams::new(self.partial, self.beta, self.w1_fraction, s)?;
        let scheme = match self.scheme {
            SchemeConfig::Static => TriggerScheme::Static,
            SchemeConfig::Dynamic { rho, vartheta, theta, mu0 } => {
                TriggerScheme::Dynamic(DynamicTriggerParams::new(rho, vartheta, theta, mu0)?)
            }
        };

        let g_tilde_v = match self.attacked_kv {
            Some(kv) => kv - gain.kv,
            None => self.g_tilde_v,
        };
        let mut mask = vec![false; n];
        for &i in &self.targets {
            mask[i] = true;
        }
        let attack = match &self.attacks {
            AttackSource::None => AttackSchedule::new(Vec::new(), g_tilde_v, mask)?,
            AttackSource::Explicit(list) => {
                let ivs = list
                    .iter()
                    .map(|&(h, tau)| AttackInterval::from_seconds(h, tau, self.sample_time))
                    .collect::<Result<Vec<_>>>()?;
                AttackSchedule::new(ivs, g_tilde_v, mask)?
            }
            AttackSource::Random { seed } => {
                let budget =
                    self.budget.ok_or_else(|| PlatoonError::InvalidParameter("random attacks need a budget".into()))?;
                random_schedule(*seed, &budget, g_tilde_v, mask, self.horizon, self.sample_time)?
            }
        };

        let switch =
            self.switch.as_ref().map(|(t, spec)| TopologySwitch { topology: spec.topology(), step: self.step_of(*t) });
        let mut candidates: Vec<Topology> = if self.candidates.is_empty() {
            let mut c = vec![topology.clone()];
            c.extend(switch.iter().map(|s| s.topology.clone()));
            if n == BuiltinTopology::FOLLOWERS {
                c.extend([BuiltinTopology::Bd, BuiltinTopology::Switched].map(BuiltinTopology::topology));
            }
            c
        } else {
            self.candidates.iter().map(|b| b.topology()).collect()
        };
        let mut seen = Vec::new();
        candidates.retain(|t| {
            let fresh = !seen.contains(t);
            seen.push(t.clone());
            fresh
        });

        let scenario = Scenario {
            plant,
            topology,
            switch,
            leader: self.leader,
            followers: self.followers.clone(),
            gain,
            p: design.p.clone(),
            w: design.w.clone(),
            static_params,
            explicit_beta: self.beta.is_some(),
            scheme,
            attack,
            horizon: self.horizon,
            threshold: self.threshold,
            tail_steps: self.tail_steps,
        };
        Ok(Resolved { scenario, design, candidates, budget: self.budget })
    }
}

/// Scenario ready to simulate, with the synthesis by-products the
/// certificate checks need.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub scenario: Scenario,
    pub design: GainDesign<f64>,
    pub candidates: Vec<Topology>,
    pub budget: Option<AttackBudget>,
}

/// Bundled scenario files by name.
pub const BUNDLED: [(&str, &str); 4] = [
    ("example1_static", include_str!("../scenarios/example1_static.scn")),
    ("example1_dynamic", include_str!("../scenarios/example1_dynamic.scn")),
    ("example2_switch", include_str!("../scenarios/example2_switch.scn")),
    ("example2_noswitch", include_str!("../scenarios/example2_noswitch.scn")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

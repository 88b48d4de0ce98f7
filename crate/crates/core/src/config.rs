//! Component architectures: types, instances, bindings and the commands that
//! change them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

pub type CapabilityProfile = BTreeSet<String>;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ComponentType {
    pub name: String,
    pub provides: BTreeSet<String>,
    pub requires: BTreeSet<String>,
    pub params: BTreeMap<String, String>,
}

impl ComponentType {
    pub fn new(name: &str, provides: &[&str], requires: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            provides: provides.iter().map(|s| s.to_string()).collect(),
            requires: requires.iter().map(|s| s.to_string()).collect(),
            params: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Status {
    Active,
    Inactive,
    /// Inactive but bound; only ever reported, never stored.
    Connected,
    Killed,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Active => "active",
            Status::Inactive => "inactive",
            Status::Connected => "connected",
            Status::Killed => "killed",
        }
    }

    pub fn parse(s: &str) -> Option<Status> {
        Some(match s {
            "active" => Status::Active,
            "inactive" => Status::Inactive,
            "connected" => Status::Connected,
            "killed" => Status::Killed,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Instance {
    pub id: String,
    pub ctype: ComponentType,
    pub status: Status,
    pub params: BTreeMap<String, String>,
}

/// `from` requires `tag`, served by `to`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Binding {
    pub from: String,
    pub tag: String,
    pub to: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Configuration {
    pub instances: BTreeMap<String, Instance>,
    pub bindings: BTreeSet<Binding>,
    /// Pool of types that may be added, with remaining spare counts.
    pub pool: BTreeMap<String, (ComponentType, usize)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StatusReport {
    pub instance: String,
    pub status: Status,
    pub bindings: usize,
}

impl StatusReport {
    /// Observation label consumed by reconfiguration strategies.
    pub fn label(&self) -> String {
        format!("st({},{},{})", self.instance, self.status.as_str(), self.bindings)
    }
}

pub const CMD_FAIL: &str = "cfg.cmd_fail";

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ReconfigCommand {
    Activate(String),
    Add(String),
    Bind {
        inst: String,
        tag: String,
        provider: String,
    },
    Passivate(String),
    Remove(String),
    SetParam {
        inst: String,
        key: String,
        value: String,
    },
    Unbind {
        inst: String,
        tag: String,
    },
}

impl fmt::Display for ReconfigCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReconfigCommand::Activate(i) => write!(f, "cfg.activate({i})"),
            ReconfigCommand::Add(t) => write!(f, "cfg.add({t})"),
            ReconfigCommand::Bind { inst, tag, provider } => write!(f, "cfg.bind({inst}.{tag},{provider})"),
            ReconfigCommand::Passivate(i) => write!(f, "cfg.passivate({i})"),
            ReconfigCommand::Remove(i) => write!(f, "cfg.remove({i})"),
            ReconfigCommand::SetParam { inst, key, value } => write!(f, "cfg.setparam({inst}.{key}={value})"),
            ReconfigCommand::Unbind { inst, tag } => write!(f, "cfg.unbind({inst}.{tag})"),
        }
    }
}

impl ReconfigCommand {
    pub fn parse(s: &str) -> Option<ReconfigCommand> {
        let rest = s.strip_prefix("cfg.")?;
        let open = rest.find('(')?;
        let name = &rest[..open];
        let arg = rest[open + 1..].strip_suffix(')')?;
        let dotted = |a: &str| a.split_once('.').map(|(x, y)| (x.to_string(), y.to_string()));
        Some(match name {
            "activate" => ReconfigCommand::Activate(arg.to_string()),
            "add" => ReconfigCommand::Add(arg.to_string()),
            "passivate" => ReconfigCommand::Passivate(arg.to_string()),
            "remove" => ReconfigCommand::Remove(arg.to_string()),
            "bind" => {
                let (lhs, provider) = arg.split_once(',')?;
                let (inst, tag) = dotted(lhs)?;
                ReconfigCommand::Bind {
                    inst,
                    tag,
                    provider: provider.to_string(),
                }
            }
            "unbind" => {
                let (inst, tag) = dotted(arg)?;
                ReconfigCommand::Unbind { inst, tag }
            }
            "setparam" => {
                let (lhs, value) = arg.split_once('=')?;
                let (inst, key) = dotted(lhs)?;
                ReconfigCommand::SetParam {
                    inst,
                    key,
                    value: value.to_string(),
                }
            }
            _ => return None,
        })
    }

    /// The instance whose status the command reports.
    pub fn subject(&self) -> Option<&str> {
        match self {
            ReconfigCommand::Add(_) => None,
            ReconfigCommand::Activate(i)
            | ReconfigCommand::Passivate(i)
            | ReconfigCommand::Remove(i)
            | ReconfigCommand::Bind { inst: i, .. }
            | ReconfigCommand::Unbind { inst: i, .. }
            | ReconfigCommand::SetParam { inst: i, .. } => Some(i),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CommandError {
    #[error("unknown instance `{0}`")]
    UnknownInstance(String),
    #[error("no spare of type `{0}`")]
    NoSpare(String),
    #[error("instance `{0}` is killed")]
    Killed(String),
    #[error("instance `{0}` is not quiescent")]
    NotQuiescent(String),
    #[error("invalid binding")]
    InvalidBinding,
    #[error("unknown parameter")]
    UnknownParam,
}

impl Configuration {
    pub fn add_instance(&mut self, id: &str, ctype: ComponentType, status: Status) {
        let params = ctype.params.clone();
        self.instances.insert(
            id.to_string(),
            Instance {
                id: id.to_string(),
                ctype,
                status,
                params,
            },
        );
    }

    pub fn binding_count(&self, inst: &str) -> usize {
        self.bindings.iter().filter(|b| b.from == inst || b.to == inst).count()
    }

    pub fn is_bound(&self, inst: &str, tag: &str) -> bool {
        self.bindings.iter().any(|b| b.from == inst && b.tag == tag)
    }

    pub fn report(&self, inst: &str) -> StatusReport {
        let bindings = self.binding_count(inst);
        let status = match self.instances.get(inst).map(|i| i.status) {
            Some(Status::Inactive) if bindings > 0 => Status::Connected,
            Some(s) => s,
            None => Status::Inactive,
        };
        StatusReport {
            instance: inst.to_string(),
            status,
            bindings,
        }
    }

    /// Fresh id for a new instance of type `t`: `t`, then `t#2`, `t#3`...
    pub fn fresh_id(&self, t: &str) -> String {
        if !self.instances.contains_key(t) {
            return t.to_string();
        }
        (2..)
            .map(|n| format!("{t}#{n}"))
            .find(|id| !self.instances.contains_key(id))
            .expect("unbounded")
    }

    /// Binds every unbound required tag of a live instance to the first
    /// healthy provider.
    pub fn autowire(&mut self) {
        let ids: Vec<String> = self.instances.keys().cloned().collect();
        for id in &ids {
            if self.instances[id].status == Status::Killed {
                continue;
            }
            let requires = self.instances[id].ctype.requires.clone();
            for tag in requires {
                if self.is_bound(id, &tag) {
                    continue;
                }
                let provider = ids.iter().find(|p| {
                    *p != id
                        && self.instances[*p].status != Status::Killed
                        && self.instances[*p].ctype.provides.contains(&tag)
                });
                if let Some(p) = provider {
                    self.bindings.insert(Binding {
                        from: id.clone(),
                        tag,
                        to: p.clone(),
                    });
                }
            }
        }
    }

    /// Marks an instance killed and drops its bindings.
    pub fn kill(&mut self, inst: &str) -> bool {
        match self.instances.get_mut(inst) {
            Some(i) => {
                i.status = Status::Killed;
                self.bindings.retain(|b| b.from != inst && b.to != inst);
                true
            }
            None => false,
        }
    }

    /// Executes one command with system-level checks. The report concerns
    /// the command's subject (the new instance for `add`).
    pub fn apply(&mut self, cmd: &ReconfigCommand) -> Result<StatusReport, CommandError> {
        let exists = |c: &Configuration, i: &str| {
            c.instances
                .get(i)
                .map(|x| x.status)
                .ok_or_else(|| CommandError::UnknownInstance(i.to_string()))
        };
        let subject = match cmd {
            ReconfigCommand::Add(t) => {
                let (ctype, spares) = self.pool.get_mut(t).ok_or_else(|| CommandError::NoSpare(t.clone()))?;
                if *spares == 0 {
                    return Err(CommandError::NoSpare(t.clone()));
                }
                *spares -= 1;
                let ctype = ctype.clone();
                let id = self.fresh_id(t);
                self.add_instance(&id, ctype, Status::Inactive);
                id
            }
            ReconfigCommand::Remove(i) => {
                let st = exists(self, i)?;
                if st == Status::Active || self.binding_count(i) > 0 {
                    return Err(CommandError::NotQuiescent(i.clone()));
                }
                self.instances.remove(i);
                return Ok(StatusReport {
                    instance: i.clone(),
                    status: Status::Inactive,
                    bindings: 0,
                });
            }
            ReconfigCommand::Activate(i) => {
                if exists(self, i)? == Status::Killed {
                    return Err(CommandError::Killed(i.clone()));
                }
                self.instances.get_mut(i).expect("checked").status = Status::Active;
                i.clone()
            }
            ReconfigCommand::Passivate(i) => {
                if exists(self, i)? != Status::Killed {
                    self.instances.get_mut(i).expect("checked").status = Status::Inactive;
                }
                i.clone()
            }
            ReconfigCommand::Bind { inst, tag, provider } => {
                let a = exists(self, inst)?;
                let b = exists(self, provider)?;
                if a == Status::Killed || b == Status::Killed {
                    return Err(CommandError::InvalidBinding);
                }
                let ok = inst != provider
                    && self.instances[inst].ctype.requires.contains(tag)
                    && self.instances[provider].ctype.provides.contains(tag)
                    && !self.is_bound(inst, tag);
                if !ok {
                    return Err(CommandError::InvalidBinding);
                }
                self.bindings.insert(Binding {
                    from: inst.clone(),
                    tag: tag.clone(),
                    to: provider.clone(),
                });
                inst.clone()
            }
            ReconfigCommand::Unbind { inst, tag } => {
                exists(self, inst)?;
                let before = self.bindings.len();
                self.bindings.retain(|b| !(b.from == *inst && b.tag == *tag));
                if self.bindings.len() == before {
                    return Err(CommandError::InvalidBinding);
                }
                inst.clone()
            }
            ReconfigCommand::SetParam { inst, key, value } => {
                if exists(self, inst)? == Status::Killed {
                    return Err(CommandError::Killed(inst.clone()));
                }
                let i = self.instances.get_mut(inst).expect("checked");
                if !i.ctype.params.contains_key(key) {
                    return Err(CommandError::UnknownParam);
                }
                i.params.insert(key.clone(), value.clone());
                inst.clone()
            }
        };
        Ok(self.report(&subject))
    }
}

/// Tags provided by active instances whose every requirement is bound to a
/// working provider. Computed as a least fixpoint, so requirement cycles
/// provide nothing.
pub fn capability_profile(c: &Configuration) -> CapabilityProfile {
    let mut working: BTreeSet<&str> = BTreeSet::new();
    loop {
        let mut grew = false;
        for (id, inst) in &c.instances {
            if inst.status != Status::Active || working.contains(id.as_str()) {
                continue;
            }
            let served = inst.ctype.requires.iter().all(|tag| {
                c.bindings
                    .iter()
                    .any(|b| b.from == *id && b.tag == *tag && working.contains(b.to.as_str()))
            });
            if served {
                working.insert(id);
                grew = true;
            }
        }
        if !grew {
            break;
        }
    }
    working
        .iter()
        .flat_map(|id| c.instances[*id].ctype.provides.iter().cloned())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StructuralConstraint {
    AlwaysPresent(String),
    /// Instance id or type name that must stay active.
    NeverDisabled(String),
    MaxActive(usize),
    /// Active instances of this type must have every requirement bound.
    RequireBound(String),
}

impl fmt::Display for StructuralConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StructuralConstraint::AlwaysPresent(t) => write!(f, "always_present {t}"),
            StructuralConstraint::NeverDisabled(i) => write!(f, "never_disabled {i}"),
            StructuralConstraint::MaxActive(n) => write!(f, "max_active {n}"),
            StructuralConstraint::RequireBound(t) => write!(f, "require_bound {t}"),
        }
    }
}

impl StructuralConstraint {
    pub fn parse(line: &str) -> Option<StructuralConstraint> {
        let mut w = line.split_whitespace();
        let kind = w.next()?;
        let arg = w.next()?;
        if w.next().is_some() {
            return None;
        }
        Some(match kind {
            "always_present" => StructuralConstraint::AlwaysPresent(arg.to_string()),
            "never_disabled" => StructuralConstraint::NeverDisabled(arg.to_string()),
            "max_active" => StructuralConstraint::MaxActive(arg.parse().ok()?),
            "require_bound" => StructuralConstraint::RequireBound(arg.to_string()),
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstraintViolation {
    pub constraint: StructuralConstraint,
    pub instances: Vec<String>,
}

pub fn check_invariants(c: &Configuration, cs: &[StructuralConstraint]) -> Vec<ConstraintViolation> {
    let mut out = Vec::new();
    for k in cs {
        let offending: Option<Vec<String>> = match k {
            StructuralConstraint::AlwaysPresent(tag) => (!capability_profile(c).contains(tag)).then(Vec::new),
            StructuralConstraint::NeverDisabled(x) => {
                let matching: Vec<&Instance> = c
                    .instances
                    .values()
                    .filter(|i| i.id == *x || i.ctype.name == *x)
                    .collect();
                let off: Vec<String> = matching
                    .iter()
                    .filter(|i| i.status != Status::Active)
                    .map(|i| i.id.clone())
                    .collect();
                (matching.is_empty() || !off.is_empty()).then_some(off)
            }
            StructuralConstraint::MaxActive(n) => {
                let active: Vec<String> = c
                    .instances
                    .values()
                    .filter(|i| i.status == Status::Active)
                    .map(|i| i.id.clone())
                    .collect();
                (active.len() > *n).then_some(active)
            }
            StructuralConstraint::RequireBound(t) => {
                let off: Vec<String> = c
                    .instances
                    .values()
                    .filter(|i| i.ctype.name == *t && i.status == Status::Active)
                    .filter(|i| i.ctype.requires.iter().any(|tag| !c.is_bound(&i.id, tag)))
                    .map(|i| i.id.clone())
                    .collect();
                (!off.is_empty()).then_some(off)
            }
        };
        if let Some(instances) = offending {
            out.push(ConstraintViolation {
                constraint: k.clone(),
                instances,
            });
        }
    }
    out
}

/// A partially specified configuration to reach.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TargetSpec {
    pub required: BTreeSet<String>,
    pub forbidden: BTreeSet<String>,
    /// (instance, parameter) -> value.
    pub params: BTreeMap<(String, String), String>,
}

impl TargetSpec {
    pub fn requiring(tags: impl IntoIterator<Item = String>) -> Self {
        Self {
            required: tags.into_iter().collect(),
            ..Self::default()
        }
    }

    pub fn satisfied_by(&self, c: &Configuration) -> bool {
        let profile = capability_profile(c);
        self.required.is_subset(&profile)
            && self.forbidden.iter().all(|i| !c.instances.contains_key(i))
            && self
                .params
                .iter()
                .all(|((i, k), v)| c.instances.get(i).and_then(|x| x.params.get(k)) == Some(v))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {msg}")]
pub struct PoolParseError {
    pub line: usize,
    pub msg: String,
}

/// Parses `type <name> provides <tags> requires <tags> param <k>=<v>...` and
/// `spare <type> <n>` records. Tag lists are comma-separated; `-` is empty.
pub fn parse_pool(text: &str) -> Result<BTreeMap<String, (ComponentType, usize)>, PoolParseError> {
    let mut pool: BTreeMap<String, (ComponentType, usize)> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: &str| PoolParseError {
            line: i + 1,
            msg: msg.to_string(),
        };
        let words: Vec<&str> = line.split_whitespace().collect();
        match words[0] {
            "type" => {
                let name = *words.get(1).ok_or_else(|| err("missing type name"))?;
                if pool.contains_key(name) {
                    return Err(err("duplicate type name"));
                }
                let mut t = ComponentType::new(name, &[], &[]);
                let mut k = 2;
                while k < words.len() {
                    let tags = |w: Option<&&str>| -> Result<BTreeSet<String>, PoolParseError> {
                        let w = w.ok_or_else(|| err("missing tag list"))?;
                        Ok(w.split(',')
                            .filter(|s| !s.is_empty() && *s != "-")
                            .map(str::to_string)
                            .collect())
                    };
                    match words[k] {
                        "provides" => {
                            t.provides = tags(words.get(k + 1))?;
                            k += 2;
                        }
                        "requires" => {
                            t.requires = tags(words.get(k + 1))?;
                            k += 2;
                        }
                        "param" => {
                            k += 1;
                            while k < words.len() && words[k].contains('=') {
                                let (a, b) = words[k].split_once('=').expect("contains =");
                                t.params.insert(a.to_string(), b.to_string());
                                k += 1;
                            }
                        }
                        _ => return Err(err("unexpected word in type record")),
                    }
                }
                pool.insert(name.to_string(), (t, 0));
            }
            "spare" if words.len() == 3 => {
                let n: usize = words[2].parse().map_err(|_| err("bad spare count"))?;
                pool.get_mut(words[1]).ok_or_else(|| err("spare for unknown type"))?.1 = n;
            }
            _ => return Err(err("unrecognised record")),
        }
    }
    Ok(pool)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> Configuration {
        let mut c = Configuration::default();
        c.add_instance("gps", ComponentType::new("gps", &["positioning"], &[]), Status::Active);
        c.add_instance(
            "hybrid",
            ComponentType::new("hybrid", &["positioning"], &["wifi_sig"]),
            Status::Active,
        );
        c.add_instance("wifi", ComponentType::new("wifi", &["wifi_sig"], &[]), Status::Inactive);
        c.autowire();
        c
    }

    #[test]
    fn profile_requires_active_dependencies() {
        let mut c = cfg();
        c.kill("gps");
        assert!(capability_profile(&c).is_empty());
        c.apply(&ReconfigCommand::Activate("wifi".into())).unwrap();
        assert_eq!(
            capability_profile(&c),
            ["positioning".to_string(), "wifi_sig".to_string()].into()
        );
        assert!(capability_profile(&Configuration::default()).is_empty());
    }

    #[test]
    fn invariants() {
        let mut c = cfg();
        c.add_instance(
            "attitude",
            ComponentType::new("attitude", &["attitude"], &[]),
            Status::Inactive,
        );
        let v = check_invariants(
            &c,
            &[
                StructuralConstraint::NeverDisabled("attitude".into()),
                StructuralConstraint::MaxActive(1),
            ],
        );
        assert_eq!(v.len(), 2);
        assert_eq!(v[1].instances.len(), 2);
        assert!(check_invariants(&c, &[]).is_empty());
    }

    #[test]
    fn remove_requires_quiescence() {
        let mut c = cfg();
        assert_eq!(
            c.apply(&ReconfigCommand::Remove("wifi".into())),
            Err(CommandError::NotQuiescent("wifi".into()))
        );
        c.apply(&ReconfigCommand::Unbind {
            inst: "hybrid".into(),
            tag: "wifi_sig".into(),
        })
        .unwrap();
        assert!(c.apply(&ReconfigCommand::Remove("wifi".into())).is_ok());
        c.kill("gps");
        assert_eq!(
            c.apply(&ReconfigCommand::Activate("gps".into())),
            Err(CommandError::Killed("gps".into()))
        );
    }

    #[test]
    fn command_text_roundtrip() {
        for s in [
            "cfg.add(wifi)",
            "cfg.bind(hybrid.wifi_sig,wifi)",
            "cfg.unbind(hybrid.wifi_sig)",
            "cfg.setparam(gps.rate=5)",
            "cfg.remove(gps#2)",
        ] {
            assert_eq!(ReconfigCommand::parse(s).unwrap().to_string(), s);
        }
    }

    #[test]
    fn pool_parse() {
        let p =
            parse_pool("type hybrid provides positioning requires wifi_sig,bt_sig param mode=fast\nspare hybrid 2\n")
                .unwrap();
        let (t, n) = &p["hybrid"];
        assert_eq!(t.requires.len(), 2);
        assert_eq!(t.params["mode"], "fast");
        assert_eq!(*n, 2);
    }
}

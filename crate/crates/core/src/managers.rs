//! Middle layer: stores the portfolio, negotiates a consistent
//! (behaviour, reconfiguration) pair and hot-swaps strategies.

use std::collections::BTreeSet;
use std::fmt;

use crate::config::{capability_profile, CapabilityProfile, Configuration};
use crate::enactment::{BehaviourEnactor, ExceptionKind, ExceptionRecord};
use crate::goal_manager::{BehaviourEntry, Portfolio, CURRENT};
use crate::planner::replay;
use crate::strategy::StrategyAutomaton;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Trigger {
    Deploy,
    Portfolio,
    /// A knowledge-repository notification, by kind.
    Knowledge(String),
    Exception(ExceptionKind),
}

impl Trigger {
    pub fn channel(&self) -> &'static str {
        match self {
            Trigger::Deploy => "deploy",
            Trigger::Portfolio => "portfolio",
            Trigger::Knowledge(_) => "knowledge",
            Trigger::Exception(_) => "exception",
        }
    }
}

impl fmt::Display for Trigger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Trigger::Knowledge(k) => write!(f, "knowledge:{k}"),
            Trigger::Exception(k) => write!(f, "exception:{k}"),
            t => f.write_str(t.channel()),
        }
    }
}

/// Profiles the reconfiguration side can deliver, `current` first.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ProfileOffer {
    pub entries: Vec<(String, CapabilityProfile)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Selection {
    pub behaviour: String,
    pub required: CapabilityProfile,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    OfferRequest,
    ProfileOffer(ProfileOffer),
    Selection(Selection),
    Stage(String),
    Commit,
    Abort(String),
}

pub fn join_tags(p: &CapabilityProfile) -> String {
    if p.is_empty() {
        "-".into()
    } else {
        p.iter().cloned().collect::<Vec<_>>().join("+")
    }
}

impl Message {
    pub fn name(&self) -> &'static str {
        match self {
            Message::OfferRequest => "offer_request",
            Message::ProfileOffer(_) => "profile_offer",
            Message::Selection(_) => "selection",
            Message::Stage(_) => "stage",
            Message::Commit => "commit",
            Message::Abort(_) => "abort",
        }
    }

    /// Detail fields for the trace.
    pub fn fields(&self) -> Vec<(&'static str, String)> {
        match self {
            Message::OfferRequest | Message::Commit => Vec::new(),
            Message::ProfileOffer(o) => vec![(
                "offers",
                o.entries
                    .iter()
                    .map(|(id, p)| format!("{id}:{}", join_tags(p)))
                    .collect::<Vec<_>>()
                    .join(";"),
            )],
            Message::Selection(s) => vec![("behaviour", s.behaviour.clone()), ("profile", join_tags(&s.required))],
            Message::Stage(r) => vec![("reconfig", r.clone())],
            Message::Abort(why) => vec![("reason", why.clone())],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NegotiationTranscript {
    pub trigger: Trigger,
    pub messages: Vec<Message>,
    /// Deployed pair after a Commit.
    pub committed: Option<(String, String)>,
}

impl NegotiationTranscript {
    /// Message order: request, offer, selection, stage, commit; or an abort
    /// after the offer.
    pub fn well_ordered(&self) -> bool {
        let names: Vec<&str> = self.messages.iter().map(Message::name).collect();
        names == ["offer_request", "profile_offer", "selection", "stage", "commit"]
            || names == ["offer_request", "profile_offer", "abort"]
    }
}

#[derive(Clone, Debug, Default)]
pub struct StrategyManagers {
    pub portfolio: Option<Portfolio>,
    pub deployed: Option<(String, String)>,
}

impl StrategyManagers {
    pub fn install(&mut self, p: Portfolio) {
        self.portfolio = Some(p);
    }

    /// `current` plus every stored plan whose happy path replays from the
    /// live configuration, with the profile that replay ends in.
    pub fn offer_achievable_profiles(&self, current: &Configuration) -> ProfileOffer {
        let mut entries = vec![(CURRENT.to_string(), capability_profile(current))];
        if let Some(p) = &self.portfolio {
            for (id, r) in &p.reconfigs {
                if let Ok(after) = replay(current, &r.plan) {
                    entries.push((id.clone(), capability_profile(&after)));
                }
            }
        }
        ProfileOffer { entries }
    }

    /// Highest-ranked viable behaviour (its assumptions hold) and whose required
    /// profile some consistent offer covers; ties by id. Returns the
    /// selection and the offer entry to stage.
    pub fn select_behaviour_strategy(
        &self,
        viable: &dyn Fn(&BehaviourEntry) -> bool,
        offer: &ProfileOffer,
    ) -> Option<(Selection, String)> {
        let p = self.portfolio.as_ref()?;
        let mut best: Option<(usize, &str, &str)> = None;
        for (id, e) in &p.behaviours {
            if !viable(e) {
                continue;
            }
            let stage = offer
                .entries
                .iter()
                .find(|(rid, prof)| p.consistency.contains(&(id.clone(), rid.clone())) && e.required.is_subset(prof));
            if let Some((rid, _)) = stage {
                let key = (e.rank, id.as_str(), rid.as_str());
                if best.map_or(true, |b| (key.0, key.1) < (b.0, b.1)) {
                    best = Some(key);
                }
            }
        }
        best.map(|(_, id, rid)| {
            (
                Selection {
                    behaviour: id.to_string(),
                    required: p.behaviours[id].required.clone(),
                },
                rid.to_string(),
            )
        })
    }

    pub fn negotiate(
        &mut self,
        viable: &dyn Fn(&BehaviourEntry) -> bool,
        current: &Configuration,
        trigger: Trigger,
    ) -> NegotiationTranscript {
        let mut messages = vec![Message::OfferRequest];
        let offer = self.offer_achievable_profiles(current);
        messages.push(Message::ProfileOffer(offer.clone()));
        let committed = match self.select_behaviour_strategy(viable, &offer) {
            Some((sel, stage)) => {
                let pair = (sel.behaviour.clone(), stage.clone());
                messages.push(Message::Selection(sel));
                messages.push(Message::Stage(stage));
                messages.push(Message::Commit);
                self.deployed = Some(pair.clone());
                Some(pair)
            }
            None => {
                messages.push(Message::Abort("no_viable".into()));
                None
            }
        };
        NegotiationTranscript {
            trigger,
            messages,
            committed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SwapResult {
    pub old: String,
    pub new: String,
    pub entry: String,
    pub commands: Vec<String>,
}

/// Loads `strategy` at the unique state whose entry predicate holds on
/// `facts`.
pub fn hot_swap(
    live: &mut BehaviourEnactor,
    strategy: &StrategyAutomaton,
    facts: &BTreeSet<String>,
    tick: u64,
) -> Result<SwapResult, ExceptionRecord> {
    let matches = strategy.matching_entries(facts);
    if matches.len() != 1 {
        return Err(ExceptionRecord {
            kind: ExceptionKind::SwapFailure,
            tick,
            observed: format!("{}_entry_matches", matches.len()),
            strategy: strategy.id.clone(),
            state: "-".into(),
        });
    }
    let old = live.strategy_id().to_string();
    let entry = strategy.states[matches[0]].name.clone();
    let commands = live.load(strategy.clone(), matches[0]);
    Ok(SwapResult {
        old,
        new: strategy.id.clone(),
        entry,
        commands,
    })
}

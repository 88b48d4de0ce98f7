//! Random arenas and a turn-based reference solver.
//!
//! Each arena state becomes a controller node. Every controllable move `t`
//! becomes an environment node whose successors are `t` together with all
//! uncontrollable successors (the environment may race). A state with
//! uncontrollable moves also gets a "wait" environment node over just
//! those. Goals are then solved by textbook fixpoints and, for Büchi with
//! fairness, by Zielonka's parity algorithm.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const CTRL: [&str; 3] = ["c0", "c1", "c2"];
pub const UNCTRL: [&str; 3] = ["u0", "u1", "u2"];

#[derive(Clone, Debug)]
pub struct RandArena {
    pub props: Vec<Vec<&'static str>>,
    /// (from, label index into CTRL ++ UNCTRL, to)
    pub edges: Vec<(usize, usize, usize)>,
}

impl RandArena {
    pub fn generate(rng: &mut ChaCha8Rng, max_states: usize) -> RandArena {
        let n = rng.gen_range(2..=max_states);
        let mut props = Vec::with_capacity(n);
        for _ in 0..n {
            let mut p = Vec::new();
            if rng.gen_bool(0.25) {
                p.push("g");
            }
            if rng.gen_bool(0.1) {
                p.push("bad");
            }
            if rng.gen_bool(0.5) {
                p.push("fair");
            }
            props.push(p);
        }
        let mut edges = Vec::new();
        for s in 0..n {
            if rng.gen_bool(0.08) {
                continue;
            }
            for l in 0..6 {
                let p = if l < 3 { 0.45 } else { 0.3 };
                if rng.gen_bool(p) {
                    // Mostly local edges so that long paths and cycles appear.
                    let t = if rng.gen_bool(0.7) {
                        (s + rng.gen_range(0..4)) % n
                    } else {
                        rng.gen_range(0..n)
                    };
                    edges.push((s, l, t));
                }
            }
        }
        RandArena { props, edges }
    }

    pub fn len(&self) -> usize {
        self.props.len()
    }

    pub fn label(l: usize) -> &'static str {
        if l < 3 {
            CTRL[l]
        } else {
            UNCTRL[l - 3]
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("ctrl {}\nunctrl {}\n", CTRL.join(" "), UNCTRL.join(" "));
        for (i, p) in self.props.iter().enumerate() {
            out.push_str(&format!("state s{i}"));
            for x in p {
                out.push(' ');
                out.push_str(x);
            }
            out.push('\n');
        }
        out.push_str("init s0\n");
        for (f, l, t) in &self.edges {
            out.push_str(&format!("t s{f} {} s{t}\n", Self::label(*l)));
        }
        out
    }

    pub fn has(&self, s: usize, prop: &str) -> bool {
        self.props[s].contains(&prop)
    }
}

/// Turn-based game. Nodes `0..n` are the controller's arena states.
pub struct TurnGame {
    pub n: usize,
    pub controller: Vec<bool>,
    pub succ: Vec<Vec<usize>>,
}

impl TurnGame {
    pub fn unfold(a: &RandArena) -> TurnGame {
        let n = a.len();
        let mut controller = vec![true; n];
        let mut succ = vec![Vec::new(); n];
        for s in 0..n {
            let unc: Vec<usize> = a.edges.iter().filter(|e| e.0 == s && e.1 >= 3).map(|e| e.2).collect();
            let ctl: Vec<usize> = a.edges.iter().filter(|e| e.0 == s && e.1 < 3).map(|e| e.2).collect();
            for t in ctl {
                let mut out = vec![t];
                out.extend(&unc);
                succ[s].push(controller.len());
                controller.push(false);
                succ.push(out);
            }
            if !unc.is_empty() {
                succ[s].push(controller.len());
                controller.push(false);
                succ.push(unc);
            }
        }
        TurnGame { n, controller, succ }
    }

    fn nodes(&self) -> usize {
        self.controller.len()
    }

    /// Greatest fixpoint: never visit `bad`; stopping in a deadlock is fine.
    pub fn safety(&self, bad: &[bool]) -> Vec<bool> {
        let mut win = vec![true; self.nodes()];
        for (s, b) in bad.iter().enumerate() {
            win[s] = !b;
        }
        loop {
            let mut changed = false;
            for v in 0..self.nodes() {
                if !win[v] {
                    continue;
                }
                let keep = if self.controller[v] {
                    self.succ[v].is_empty() || self.succ[v].iter().any(|&w| win[w])
                } else {
                    self.succ[v].iter().all(|&w| win[w])
                };
                if !keep {
                    win[v] = false;
                    changed = true;
                }
            }
            if !changed {
                return win;
            }
        }
    }

    /// Reach `target` while staying forever inside the safe region of `bad`.
    pub fn reach(&self, target: &[bool], bad: &[bool]) -> Vec<bool> {
        let safe = self.safety(bad);
        let mut win = vec![false; self.nodes()];
        for s in 0..self.n {
            win[s] = safe[s] && target[s];
        }
        loop {
            let mut changed = false;
            for v in 0..self.nodes() {
                if win[v] || !safe[v] {
                    continue;
                }
                let add = if self.controller[v] {
                    self.succ[v].iter().any(|&w| win[w])
                } else {
                    self.succ[v].iter().all(|&w| win[w])
                };
                if add {
                    win[v] = true;
                    changed = true;
                }
            }
            if !changed {
                return win;
            }
        }
    }

    /// Visit `acc` infinitely often and never `bad`, unless the play visits
    /// `fair` only finitely often. Deadlocks lose.
    pub fn buchi(&self, acc: &[bool], bad: &[bool], fair: Option<&[bool]>) -> Vec<bool> {
        let sink = self.nodes();
        let mut succ = self.succ.clone();
        let mut controller = self.controller.clone();
        let mut prio = vec![0u8; self.nodes()];
        for s in 0..self.n {
            if bad[s] || succ[s].is_empty() {
                succ[s] = vec![sink];
            }
            prio[s] = if acc[s] && !bad[s] {
                2
            } else if fair.map_or(true, |f| f[s]) {
                1
            } else {
                0
            };
        }
        succ.push(vec![sink]);
        controller.push(true);
        prio.push(1);
        let pg = Parity { controller, succ, prio };
        let all = vec![true; pg.prio.len()];
        let (w0, _) = pg.zielonka(&all);
        w0[..self.nodes()].to_vec()
    }
}

/// Max-parity game; player 0 (the controller) wins on even priorities.
struct Parity {
    controller: Vec<bool>,
    succ: Vec<Vec<usize>>,
    prio: Vec<u8>,
}

impl Parity {
    fn attractor(&self, within: &[bool], target: &[bool], player0: bool) -> Vec<bool> {
        let mut attr: Vec<bool> = target.iter().zip(within).map(|(t, w)| *t && *w).collect();
        loop {
            let mut changed = false;
            for v in 0..attr.len() {
                if attr[v] || !within[v] {
                    continue;
                }
                let mut inside = self.succ[v].iter().filter(|&&w| within[w]);
                let own = self.controller[v] == player0;
                let add = if own {
                    inside.any(|&w| attr[w])
                } else {
                    inside.all(|&w| attr[w])
                };
                if add {
                    attr[v] = true;
                    changed = true;
                }
            }
            if !changed {
                return attr;
            }
        }
    }

    fn zielonka(&self, sub: &[bool]) -> (Vec<bool>, Vec<bool>) {
        let size = sub.len();
        let Some(p) = (0..size).filter(|&v| sub[v]).map(|v| self.prio[v]).max() else {
            return (vec![false; size], vec![false; size]);
        };
        let even = p % 2 == 0;
        let top: Vec<bool> = (0..size).map(|v| sub[v] && self.prio[v] == p).collect();
        let a = self.attractor(sub, &top, even);
        let rest: Vec<bool> = (0..size).map(|v| sub[v] && !a[v]).collect();
        let (w0, w1) = self.zielonka(&rest);
        let opp = if even { &w1 } else { &w0 };
        if !opp.iter().any(|&x| x) {
            let full = sub.to_vec();
            let none = vec![false; size];
            return if even { (full, none) } else { (none, full) };
        }
        let b = self.attractor(sub, opp, !even);
        let rest: Vec<bool> = (0..size).map(|v| sub[v] && !b[v]).collect();
        let (mut w0, mut w1) = self.zielonka(&rest);
        let grow = if even { &mut w1 } else { &mut w0 };
        for v in 0..size {
            if b[v] {
                grow[v] = true;
            }
        }
        (w0, w1)
    }
}

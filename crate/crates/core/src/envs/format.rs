//! The conventional plaintext POMDP model format.
//!
//! Supported: `discount:`, `values: reward|cost`, `states:`, `actions:`,
//! `observations:` (a count or a list of names), `start:` (probability
//! list, `uniform`, a single state, or `start include:` / `start exclude:`
//! state lists), and `T:` / `O:` / `R:` entries in their single-value, row
//! and matrix forms with `*` wildcards. `T:` and `O:` matrices also accept
//! `uniform` and `identity`. `#` starts a comment that runs to end of line.
//!
//! Rewards in the file may depend on `(a, s, s', o)`; the model keeps
//! `R(s, a)`, so they are reduced to `Σ_{s',o} T(s,a,s') Ω(o|s',a) r`.
//! When an `(a, s)` block is constant the constant is used as-is.

use crate::model::{Belief, ModelError, Pomdp, PomdpTables};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid model: {detail}")]
    Validation {
        detail: String,
        #[source]
        source: ModelError,
    },
    #[error("invalid belief set: {0}")]
    BeliefSet(String),
}

#[derive(Debug, Clone)]
struct Token {
    text: String,
    line: usize,
    column: usize,
}

fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        let mut start: Option<usize> = None;
        let push = |tokens: &mut Vec<Token>, from: usize, to: usize| {
            tokens.push(Token {
                text: line[from..to].to_string(),
                line: ln + 1,
                column: line[..from].chars().count() + 1,
            })
        };
        for (i, c) in line.char_indices() {
            if c.is_whitespace() || c == ':' {
                if let Some(s) = start.take() {
                    push(&mut tokens, s, i);
                }
                if c == ':' {
                    push(&mut tokens, i, i + 1);
                }
            } else if start.is_none() {
                start = Some(i);
            }
        }
        if let Some(s) = start {
            push(&mut tokens, s, line.len());
        }
    }
    tokens
}

#[derive(Debug, Clone, Copy)]
enum Sel {
    All,
    One(usize),
}

impl Sel {
    fn indices(self, n: usize) -> std::ops::Range<usize> {
        match self {
            Sel::All => 0..n,
            Sel::One(i) => i..i + 1,
        }
    }
}

enum Start {
    Probs(Vec<f64>),
    Uniform,
    State(usize),
    Include(Vec<usize>),
    Exclude(Vec<usize>),
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    eof: (usize, usize),
    discount: Option<f64>,
    cost: bool,
    states: Option<Vec<String>>,
    actions: Option<Vec<String>>,
    observations: Option<Vec<String>>,
    start: Option<Start>,
    tables: Option<Tables>,
}

/// Dense tables filled while reading entries.
struct Tables {
    ns: usize,
    na: usize,
    no: usize,
    /// `[s][a][s']`
    transition: Vec<f64>,
    /// `[a][s'][o]`
    sensor: Vec<f64>,
    /// `[a][s][s'][o]`
    reward: Vec<f64>,
}

impl Tables {
    fn t(&mut self, s: usize, a: usize, n: usize) -> &mut f64 {
        &mut self.transition[(s * self.na + a) * self.ns + n]
    }

    fn o(&mut self, a: usize, n: usize, o: usize) -> &mut f64 {
        &mut self.sensor[(a * self.ns + n) * self.no + o]
    }

    fn r(&mut self, a: usize, s: usize, n: usize, o: usize) -> &mut f64 {
        &mut self.reward[((a * self.ns + s) * self.ns + n) * self.no + o]
    }
}

type PResult<T> = Result<T, EnvError>;

impl Parser {
    fn new(text: &str) -> Self {
        let tokens = tokenize(text);
        let lines = text.lines().count();
        Self {
            tokens,
            pos: 0,
            eof: (lines.max(1), 1),
            discount: None,
            cost: false,
            states: None,
            actions: None,
            observations: None,
            start: None,
            tables: None,
        }
    }

    fn error_at(&self, tok: Option<&Token>, message: impl Into<String>) -> EnvError {
        let (line, column) = tok.map_or(self.eof, |t| (t.line, t.column));
        EnvError::Parse {
            line,
            column,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_is(&self, text: &str) -> bool {
        self.peek().is_some_and(|t| t.text == text)
    }

    fn next(&mut self, what: &str) -> PResult<Token> {
        match self.tokens.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(t.clone())
            }
            None => Err(self.error_at(None, format!("unexpected end of input, expected {what}"))),
        }
    }

    fn expect_colon(&mut self) -> PResult<()> {
        let t = self.next("`:`")?;
        if t.text != ":" {
            return Err(self.error_at(Some(&t), format!("expected `:`, found `{}`", t.text)));
        }
        Ok(())
    }

    fn number(&mut self) -> PResult<f64> {
        let t = self.next("a number")?;
        parse_number(&t.text).ok_or_else(|| {
            self.error_at(Some(&t), format!("expected a number, found `{}`", t.text))
        })
    }

    fn numbers(&mut self, count: usize) -> PResult<Vec<f64>> {
        (0..count).map(|_| self.number()).collect()
    }

    /// Tokens on the same line as the previous token.
    fn rest_of_line(&mut self) -> Vec<Token> {
        let line = match self.pos.checked_sub(1).and_then(|p| self.tokens.get(p)) {
            Some(t) => t.line,
            None => return Vec::new(),
        };
        let mut out = Vec::new();
        while let Some(t) = self.peek() {
            if t.line != line {
                break;
            }
            out.push(t.clone());
            self.pos += 1;
        }
        out
    }

    fn parse(mut self) -> PResult<Pomdp> {
        while let Some(tok) = self.peek().cloned() {
            self.pos += 1;
            match tok.text.as_str() {
                "discount" => {
                    self.expect_colon()?;
                    self.discount = Some(self.number()?);
                }
                "values" => {
                    self.expect_colon()?;
                    let t = self.next("`reward` or `cost`")?;
                    self.cost = match t.text.as_str() {
                        "reward" => false,
                        "cost" => true,
                        other => {
                            return Err(self.error_at(
                                Some(&t),
                                format!("expected `reward` or `cost`, found `{other}`"),
                            ))
                        }
                    };
                }
                "states" => {
                    self.expect_colon()?;
                    self.states = Some(self.name_list(&tok, "states")?);
                }
                "actions" => {
                    self.expect_colon()?;
                    self.actions = Some(self.name_list(&tok, "actions")?);
                }
                "observations" => {
                    self.expect_colon()?;
                    self.observations = Some(self.name_list(&tok, "observations")?);
                }
                "start" => self.start_stanza(&tok)?,
                "T" => {
                    self.ensure_tables(&tok)?;
                    self.expect_colon()?;
                    self.transition_entry()?;
                }
                "O" => {
                    self.ensure_tables(&tok)?;
                    self.expect_colon()?;
                    self.sensor_entry()?;
                }
                "R" => {
                    self.ensure_tables(&tok)?;
                    self.expect_colon()?;
                    self.reward_entry()?;
                }
                other => {
                    return Err(self.error_at(Some(&tok), format!("unexpected `{other}`")));
                }
            }
        }
        self.finish()
    }

    fn name_list(&mut self, head: &Token, what: &str) -> PResult<Vec<String>> {
        let items = self.rest_of_line();
        if items.is_empty() {
            return Err(self.error_at(Some(head), format!("`{what}:` needs a count or names")));
        }
        if items.len() == 1 {
            if let Ok(n) = items[0].text.parse::<usize>() {
                if n == 0 {
                    return Err(self.error_at(Some(&items[0]), format!("`{what}:` count is zero")));
                }
                return Ok((0..n).map(|i| i.to_string()).collect());
            }
        }
        let mut names: Vec<String> = Vec::with_capacity(items.len());
        for t in items {
            if names.contains(&t.text) {
                return Err(self.error_at(Some(&t), format!("duplicate name `{}`", t.text)));
            }
            if t.text == "*" || parse_number(&t.text).is_some() {
                return Err(self.error_at(Some(&t), format!("`{}` is not a valid name", t.text)));
            }
            names.push(t.text);
        }
        Ok(names)
    }

    fn start_stanza(&mut self, head: &Token) -> PResult<()> {
        let states = self
            .states
            .clone()
            .ok_or_else(|| self.error_at(Some(head), "`start:` before `states:`"))?;
        let mode = if self.peek_is("include") || self.peek_is("exclude") {
            Some(self.next("include/exclude")?.text)
        } else {
            None
        };
        self.expect_colon()?;
        let start = match mode.as_deref() {
            Some(kind) => {
                let items = self.rest_of_line();
                if items.is_empty() {
                    return Err(self.error_at(Some(head), "empty `start` state list"));
                }
                let mut idx = Vec::new();
                for t in &items {
                    idx.push(self.resolve_one(t, &states, "state")?);
                }
                if kind == "include" {
                    Start::Include(idx)
                } else {
                    Start::Exclude(idx)
                }
            }
            None => {
                if self.peek_is("uniform") {
                    self.pos += 1;
                    Start::Uniform
                } else if states.len() > 1
                    && self.peek().is_some_and(|t| parse_number(&t.text).is_some())
                {
                    Start::Probs(self.numbers(states.len())?)
                } else if states.len() == 1 {
                    let t = self.next("a start distribution")?;
                    match parse_number(&t.text) {
                        Some(p) => Start::Probs(vec![p]),
                        None => Start::State(self.resolve_one(&t, &states, "state")?),
                    }
                } else {
                    let t = self.next("a start distribution")?;
                    Start::State(self.resolve_one(&t, &states, "state")?)
                }
            }
        };
        self.start = Some(start);
        Ok(())
    }

    fn ensure_tables(&mut self, at: &Token) -> PResult<()> {
        if self.tables.is_some() {
            return Ok(());
        }
        let missing = [
            ("states", self.states.is_none()),
            ("actions", self.actions.is_none()),
            ("observations", self.observations.is_none()),
        ]
        .into_iter()
        .find(|(_, m)| *m);
        if let Some((name, _)) = missing {
            return Err(self.error_at(
                Some(at),
                format!("missing `{name}:` stanza before `{}:` entries", at.text),
            ));
        }
        let ns = self.states.as_ref().unwrap().len();
        let na = self.actions.as_ref().unwrap().len();
        let no = self.observations.as_ref().unwrap().len();
        self.tables = Some(Tables {
            ns,
            na,
            no,
            transition: vec![0.0; ns * na * ns],
            sensor: vec![0.0; na * ns * no],
            reward: vec![0.0; na * ns * ns * no],
        });
        Ok(())
    }

    fn resolve_one(&self, tok: &Token, names: &[String], kind: &str) -> PResult<usize> {
        match self.resolve(tok, names, kind)? {
            Sel::One(i) => Ok(i),
            Sel::All => Err(self.error_at(Some(tok), format!("wildcard not allowed for {kind}"))),
        }
    }

    fn resolve(&self, tok: &Token, names: &[String], kind: &str) -> PResult<Sel> {
        if tok.text == "*" {
            return Ok(Sel::All);
        }
        if let Some(i) = names.iter().position(|n| *n == tok.text) {
            return Ok(Sel::One(i));
        }
        match tok.text.parse::<usize>() {
            Ok(i) if i < names.len() => Ok(Sel::One(i)),
            Ok(i) => Err(self.error_at(
                Some(tok),
                format!("{kind} index {i} out of range (have {})", names.len()),
            )),
            Err(_) => Err(self.error_at(Some(tok), format!("unknown {kind} `{}`", tok.text))),
        }
    }

    /// Reads `x [: y [: z [: w]]]` index selectors, at most `max` of them.
    fn selectors(&mut self, kinds: &[(&str, &[String])]) -> PResult<Vec<Sel>> {
        let mut out = Vec::new();
        for (i, (kind, names)) in kinds.iter().enumerate() {
            if i > 0 {
                if !self.peek_is(":") {
                    break;
                }
                self.pos += 1;
            }
            let t = self.next(kind)?;
            out.push(self.resolve(&t, names, kind)?);
        }
        Ok(out)
    }

    /// Either a keyword (`uniform`/`identity`) or `count` numbers.
    fn keyword_or_numbers(&mut self, count: usize, allow_identity: bool) -> PResult<Block> {
        if self.peek_is("uniform") {
            self.pos += 1;
            return Ok(Block::Uniform);
        }
        if allow_identity && self.peek_is("identity") {
            let t = self.next("identity")?;
            return Ok(Block::Identity(t));
        }
        Ok(Block::Values(self.numbers(count)?))
    }

    fn transition_entry(&mut self) -> PResult<()> {
        let states = self.states.clone().unwrap();
        let actions = self.actions.clone().unwrap();
        let sel =
            self.selectors(&[("action", &actions), ("state", &states), ("state", &states)])?;
        let tb = self.tables.as_ref().unwrap();
        let (ns, na) = (tb.ns, tb.na);
        match sel.as_slice() {
            [a, s, n] => {
                let p = self.number()?;
                let tb = self.tables.as_mut().unwrap();
                for a in a.indices(na) {
                    for s in s.indices(ns) {
                        for n in n.indices(ns) {
                            *tb.t(s, a, n) = p;
                        }
                    }
                }
            }
            [a, s] => {
                let row = match self.keyword_or_numbers(ns, false)? {
                    Block::Uniform => vec![1.0 / ns as f64; ns],
                    Block::Values(v) => v,
                    Block::Identity(_) => unreachable!(),
                };
                let tb = self.tables.as_mut().unwrap();
                for a in a.indices(na) {
                    for s in s.indices(ns) {
                        for (n, p) in row.iter().enumerate() {
                            *tb.t(s, a, n) = *p;
                        }
                    }
                }
            }
            [a] => {
                let block = self.keyword_or_numbers(ns * ns, true)?;
                let tb = self.tables.as_mut().unwrap();
                for a in a.indices(na) {
                    for s in 0..ns {
                        for n in 0..ns {
                            *tb.t(s, a, n) = match &block {
                                Block::Uniform => 1.0 / ns as f64,
                                Block::Identity(_) => f64::from(u8::from(s == n)),
                                Block::Values(v) => v[s * ns + n],
                            };
                        }
                    }
                }
            }
            _ => unreachable!(),
        }
        Ok(())
    }

    fn sensor_entry(&mut self) -> PResult<()> {
        let states = self.states.clone().unwrap();
        let actions = self.actions.clone().unwrap();
        let obs = self.observations.clone().unwrap();
        let sel = self.selectors(&[
            ("action", &actions),
            ("state", &states),
            ("observation", &obs),
        ])?;
        let tb = self.tables.as_ref().unwrap();
        let (ns, na, no) = (tb.ns, tb.na, tb.no);
        match sel.as_slice() {
            [a, n, o] => {
                let p = self.number()?;
                let tb = self.tables.as_mut().unwrap();
                for a in a.indices(na) {
                    for n in n.indices(ns) {
                        for o in o.indices(no) {
                            *tb.o(a, n, o) = p;
                        }
                    }
                }
            }
            [a, n] => {
                let row = match self.keyword_or_numbers(no, false)? {
                    Block::Uniform => vec![1.0 / no as f64; no],
                    Block::Values(v) => v,
                    Block::Identity(_) => unreachable!(),
                };
                let tb = self.tables.as_mut().unwrap();
                for a in a.indices(na) {
                    for n in n.indices(ns) {
                        for (o, p) in row.iter().enumerate() {
                            *tb.o(a, n, o) = *p;
                        }
                    }
                }
            }
            [a] => {
                let block = self.keyword_or_numbers(ns * no, true)?;
                if let Block::Identity(t) = &block {
                    if ns != no {
                        return Err(self.error_at(
                            Some(t),
                            "`identity` sensor needs as many observations as states",
                        ));
                    }
                }
                let tb = self.tables.as_mut().unwrap();
                for a in a.indices(na) {
                    for n in 0..ns {
                        for o in 0..no {
                            *tb.o(a, n, o) = match &block {
                                Block::Uniform => 1.0 / no as f64,
                                Block::Identity(_) => f64::from(u8::from(n == o)),
                                Block::Values(v) => v[n * no + o],
                            };
                        }
                    }
                }
            }
            _ => unreachable!(),
        }
        Ok(())
    }

    fn reward_entry(&mut self) -> PResult<()> {
        let states = self.states.clone().unwrap();
        let actions = self.actions.clone().unwrap();
        let obs = self.observations.clone().unwrap();
        let head = self.peek().cloned();
        let sel = self.selectors(&[
            ("action", &actions),
            ("state", &states),
            ("state", &states),
            ("observation", &obs),
        ])?;
        let tb = self.tables.as_ref().unwrap();
        let (ns, na, no) = (tb.ns, tb.na, tb.no);
        let (a, s, rest) = match sel.as_slice() {
            [_] => {
                return Err(self.error_at(head.as_ref(), "`R:` entries need at least a start state"))
            }
            [a, s, rest @ ..] => (*a, *s, rest.to_vec()),
            _ => unreachable!(),
        };
        // values indexed by (s', o)
        let (next_sel, obs_sel, values): (Sel, Sel, Vec<f64>) = match rest.as_slice() {
            [n, o] => (*n, *o, vec![self.number()?]),
            [n] => (*n, Sel::All, self.numbers(no)?),
            [] => (Sel::All, Sel::All, self.numbers(ns * no)?),
            _ => unreachable!(),
        };
        let tb = self.tables.as_mut().unwrap();
        for a in a.indices(na) {
            for s in s.indices(ns) {
                for (ni, n) in next_sel.indices(ns).enumerate() {
                    for (oi, o) in obs_sel.indices(no).enumerate() {
                        let v = match values.len() {
                            1 => values[0],
                            len if len == no => values[oi],
                            _ => values[ni * no + oi],
                        };
                        *tb.r(a, s, n, o) = v;
                    }
                }
            }
        }
        Ok(())
    }

    fn finish(self) -> PResult<Pomdp> {
        for (name, missing) in [
            ("discount", self.discount.is_none()),
            ("states", self.states.is_none()),
            ("actions", self.actions.is_none()),
            ("observations", self.observations.is_none()),
        ] {
            if missing {
                return Err(self.error_at(None, format!("missing `{name}:` stanza")));
            }
        }
        let states = self.states.unwrap();
        let actions = self.actions.unwrap();
        let observations = self.observations.unwrap();
        let (ns, na, no) = (states.len(), actions.len(), observations.len());
        let mut tb = self.tables.unwrap_or(Tables {
            ns,
            na,
            no,
            transition: vec![0.0; ns * na * ns],
            sensor: vec![0.0; na * ns * no],
            reward: vec![0.0; na * ns * ns * no],
        });

        let sign = if self.cost { -1.0 } else { 1.0 };
        let mut reward = vec![0.0; ns * na];
        for s in 0..ns {
            for a in 0..na {
                let first = *tb.r(a, s, 0, 0);
                let block_start = (a * ns + s) * ns * no;
                let block = &tb.reward[block_start..block_start + ns * no];
                let r = if block.iter().all(|v| *v == first) {
                    first
                } else {
                    let mut acc = 0.0;
                    for n in 0..ns {
                        for o in 0..no {
                            acc += tb.transition[(s * na + a) * ns + n]
                                * tb.sensor[(a * ns + n) * no + o]
                                * block[n * no + o];
                        }
                    }
                    acc
                };
                reward[s * na + a] = sign * r;
            }
        }

        let initial_belief = match self.start {
            None | Some(Start::Uniform) => None,
            Some(Start::Probs(p)) => Some(p),
            Some(Start::State(i)) => Some(Belief::one_hot(ns, i).probs().to_vec()),
            Some(Start::Include(idx)) => {
                let mut w = vec![0.0; ns];
                for i in idx {
                    w[i] = 1.0;
                }
                Some(w)
            }
            Some(Start::Exclude(idx)) => {
                let mut w = vec![1.0; ns];
                for i in idx {
                    w[i] = 0.0;
                }
                Some(w)
            }
        };
        let initial_belief = match initial_belief {
            None => None,
            Some(p) if p.len() == ns && (p.iter().sum::<f64>() - 1.0).abs() <= 1e-9 => {
                Some(Belief::new(p).map_err(|e| validation(e, &states, &actions, &observations))?)
            }
            Some(p) => Some(
                Belief::from_weights(p)
                    .map_err(|e| validation(e, &states, &actions, &observations))?,
            ),
        };

        let tables = PomdpTables {
            num_states: ns,
            num_actions: na,
            num_obs: no,
            transition: std::mem::take(&mut tb.transition),
            sensor: std::mem::take(&mut tb.sensor),
            reward,
            discount: self.discount.unwrap(),
            initial_belief,
            state_names: states.clone(),
            action_names: actions.clone(),
            obs_names: observations.clone(),
        };
        Pomdp::new(tables).map_err(|e| validation(e, &states, &actions, &observations))
    }
}

enum Block {
    Uniform,
    Identity(Token),
    Values(Vec<f64>),
}

fn parse_number(text: &str) -> Option<f64> {
    let first = text.chars().next()?;
    if !(first.is_ascii_digit() || matches!(first, '-' | '+' | '.')) {
        return None;
    }
    text.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn validation(err: ModelError, states: &[String], actions: &[String], obs: &[String]) -> EnvError {
    let detail = match &err {
        ModelError::TransitionRow { state, action, sum } => format!(
            "T row for state `{}`, action `{}` sums to {sum}",
            states[*state], actions[*action]
        ),
        ModelError::SensorRow {
            action,
            next_state,
            sum,
        } => format!(
            "O row for action `{}`, state `{}` sums to {sum}",
            actions[*action], states[*next_state]
        ),
        ModelError::ProbabilityOutOfRange { .. } if obs.is_empty() => err.to_string(),
        other => other.to_string(),
    };
    EnvError::Validation {
        detail,
        source: err,
    }
}

pub fn parse_pomdp(text: &str) -> Result<Pomdp, EnvError> {
    Parser::new(text).parse()
}

/// 17 significant digits, enough to round-trip any `f64`.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn names_or_count(names: &[String]) -> String {
    let numeric = names.iter().enumerate().all(|(i, n)| *n == i.to_string());
    if numeric {
        names.len().to_string()
    } else {
        names.join(" ")
    }
}

/// Writes `model` in the plaintext format. Names must be free of
/// whitespace, `:` and `#`.
pub fn serialize_pomdp(model: &Pomdp) -> String {
    let (ns, na, no) = (model.num_states(), model.num_actions(), model.num_obs());
    let mut out = String::new();
    let _ = writeln!(out, "discount: {}", num(model.discount()));
    let _ = writeln!(out, "values: reward");
    let _ = writeln!(out, "states: {}", names_or_count(model.state_names()));
    let _ = writeln!(out, "actions: {}", names_or_count(model.action_names()));
    let _ = writeln!(out, "observations: {}", names_or_count(model.obs_names()));
    let start: Vec<String> = model
        .initial_belief()
        .probs()
        .iter()
        .map(|p| num(*p))
        .collect();
    let _ = writeln!(out, "start: {}", start.join(" "));
    let action = |a: usize| &model.action_names()[a];
    for a in 0..na {
        let _ = writeln!(out, "\nT: {}", action(a));
        for s in 0..ns {
            let row: Vec<String> = model.transition_row(s, a).iter().map(|p| num(*p)).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
    }
    for a in 0..na {
        let _ = writeln!(out, "\nO: {}", action(a));
        for n in 0..ns {
            let row: Vec<String> = (0..no).map(|o| num(model.sensor(a, n, o))).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
    }
    out.push('\n');
    for a in 0..na {
        for s in 0..ns {
            let _ = writeln!(
                out,
                "R: {} : {} : * : * {}",
                action(a),
                model.state_names()[s],
                num(model.reward(s, a))
            );
        }
    }
    out
}

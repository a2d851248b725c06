use super::ast::*;
use super::lexer::{Lexer, Tok, Token};
use super::CqlError;
use crate::privacy::{ClientSelector, PolicyRule, PropertySelector, RuleKind};

pub(crate) const KEYWORDS: &[&str] = &[
    "FIND", "WHERE", "AND", "AS", "SENSE", "FROM", "DELTA", "ERROR", "PERIOD", "DEADLINE", "CARDINALITY",
    "ACTUATE", "ON", "PARAMS", "EVENT", "WHEN", "EVERY", "DO", "DENATURE", "SENSOR", "DELETE", "SUMMARIZE",
    "PROPERTY", "ALLOW", "BLOCK", "IMPORT", "GATEWAY", "TOKEN", "MS", "SECS", "MINS", "HRS", "ALL",
];

const STATEMENTS: &[&str] = &["FIND", "SENSE", "ACTUATE", "EVENT", "DENATURE", "IMPORT"];

fn keyword_of(word: &str) -> Option<&'static str> {
    KEYWORDS.iter().copied().find(|k| k.eq_ignore_ascii_case(word))
}

pub fn is_keyword(word: &str) -> bool {
    keyword_of(word).is_some()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Modifier {
    Delta,
    Error,
    Period,
    Deadline,
    Cardinality,
    Params,
}

impl Modifier {
    const ALL: [Modifier; 6] = [
        Modifier::Delta,
        Modifier::Error,
        Modifier::Period,
        Modifier::Deadline,
        Modifier::Cardinality,
        Modifier::Params,
    ];

    fn keyword(self) -> &'static str {
        match self {
            Modifier::Delta => "DELTA",
            Modifier::Error => "ERROR",
            Modifier::Period => "PERIOD",
            Modifier::Deadline => "DEADLINE",
            Modifier::Cardinality => "CARDINALITY",
            Modifier::Params => "PARAMS",
        }
    }
}

#[derive(Default)]
struct Modifiers {
    delta: Option<(u64, usize)>,
    error: Option<f64>,
    period: Option<(u64, usize)>,
    deadline: Option<u64>,
    cardinality: Option<u32>,
    params: Option<Vec<(String, String)>>,
    seen: Vec<Modifier>,
}

struct Parser {
    lexer: Lexer,
    cur: Token,
}

/// Parses one CQL statement.
pub fn parse_query(text: &str) -> Result<Query, CqlError> {
    let mut lexer = Lexer::new(text);
    let cur = lexer.next_token();
    let mut p = Parser { lexer, cur };
    let query = p.statement()?;
    p.expect_eof()?;
    Ok(query)
}

impl Parser {
    fn bump(&mut self) -> Token {
        let next = self.lexer.next_token();
        std::mem::replace(&mut self.cur, next)
    }

    fn offset(&self) -> usize {
        self.cur.start + 1
    }

    fn syntax<T>(&self, expected: &[&str]) -> Result<T, CqlError> {
        Err(CqlError::Syntax {
            offset: self.offset(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.cur.tok.describe(),
        })
    }

    fn validation<T>(offset: usize, message: impl Into<String>) -> Result<T, CqlError> {
        Err(CqlError::Validation {
            offset,
            message: message.into(),
        })
    }

    fn keyword(&self) -> Option<&'static str> {
        match &self.cur.tok {
            Tok::Word(w) => keyword_of(w),
            _ => None,
        }
    }

    fn at_kw(&self, kw: &str) -> bool {
        self.keyword() == Some(kw)
    }

    fn expect_kw(&mut self, kw: &'static str) -> Result<usize, CqlError> {
        if self.at_kw(kw) {
            Ok(self.bump().start + 1)
        } else {
            self.syntax(&[kw])
        }
    }

    fn expect_eof(&self) -> Result<(), CqlError> {
        if self.cur.tok == Tok::Eof {
            Ok(())
        } else {
            self.syntax(&["end of statement"])
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, CqlError> {
        match &self.cur.tok {
            Tok::Word(w) if !is_keyword(w) => {
                let w = w.clone();
                self.bump();
                Ok(w)
            }
            _ => self.syntax(&[what]),
        }
    }

    fn number(&mut self, what: &str) -> Result<(f64, usize), CqlError> {
        match &self.cur.tok {
            Tok::Number(n) => {
                let v: f64 = n.parse().expect("lexer produces valid numbers");
                let at = self.bump().start + 1;
                Ok((v, at))
            }
            _ => self.syntax(&[what]),
        }
    }

    fn duration(&mut self) -> Result<(u64, usize), CqlError> {
        let (amount, at) = self.number("duration")?;
        let factor = match self.keyword() {
            Some("MS") => 1.0,
            Some("SECS") => 1_000.0,
            Some("MINS") => 60_000.0,
            Some("HRS") => 3_600_000.0,
            _ => return self.syntax(&["MS", "SECS", "MINS", "HRS"]),
        };
        self.bump();
        let ms = amount * factor;
        if ms < 0.0 {
            return Self::validation(at, "duration must not be negative");
        }
        if (ms - ms.round()).abs() > 1e-6 {
            return Self::validation(at, "duration must be a whole number of milliseconds");
        }
        Ok((ms.round() as u64, at))
    }

    fn value(&mut self) -> Result<String, CqlError> {
        match &self.cur.tok {
            Tok::Word(w) | Tok::Number(w) | Tok::Str(w) => {
                let v = w.clone();
                self.bump();
                Ok(v)
            }
            _ => self.syntax(&["value"]),
        }
    }

    fn key_value_list(&mut self) -> Result<Vec<(String, String)>, CqlError> {
        let mut out: Vec<(String, String)> = Vec::new();
        loop {
            let at = self.offset();
            let key = self.ident("parameter name")?;
            if !matches!(self.cur.tok, Tok::Eq) {
                return self.syntax(&["'='"]);
            }
            self.bump();
            let value = self.value()?;
            if out.iter().any(|(k, _)| *k == key) {
                return Self::validation(at, format!("duplicate parameter {key}"));
            }
            out.push((key, value));
            if matches!(self.cur.tok, Tok::Comma) {
                self.bump();
            } else {
                return Ok(out);
            }
        }
    }

    fn statement(&mut self) -> Result<Query, CqlError> {
        match self.keyword() {
            Some("FIND") => self.find().map(Query::Find),
            Some("SENSE") => self.sense().map(Query::Sense),
            Some("ACTUATE") => self.actuate().map(Query::Actuate),
            Some("EVENT") => self.event().map(Query::Event),
            Some("DENATURE") => self.denature().map(Query::Denature),
            Some("IMPORT") => self.import().map(Query::GatewayImport),
            _ => self.syntax(STATEMENTS),
        }
    }

    fn modifiers(&mut self, statement: &str, granted: &[Modifier]) -> Result<Modifiers, CqlError> {
        let mut mods = Modifiers::default();
        loop {
            if self.cur.tok == Tok::Eof {
                return Ok(mods);
            }
            let found = self
                .keyword()
                .and_then(|kw| Modifier::ALL.into_iter().find(|m| m.keyword() == kw));
            let Some(modifier) = found else {
                let mut expected: Vec<&str> = granted.iter().map(|m| m.keyword()).collect();
                expected.push("end of statement");
                return self.syntax(&expected);
            };
            let at = self.offset();
            if !granted.contains(&modifier) {
                return Self::validation(at, format!("{} is not allowed on {statement}", modifier.keyword()));
            }
            if mods.seen.contains(&modifier) {
                return Self::validation(at, format!("duplicate {} modifier", modifier.keyword()));
            }
            mods.seen.push(modifier);
            self.bump();
            match modifier {
                Modifier::Delta => {
                    let (d, vat) = self.duration()?;
                    if d == 0 {
                        return Self::validation(vat, "DELTA must be positive");
                    }
                    mods.delta = Some((d, at));
                }
                Modifier::Period => {
                    let (d, vat) = self.duration()?;
                    if d == 0 {
                        return Self::validation(vat, "PERIOD must be positive");
                    }
                    mods.period = Some((d, at));
                }
                Modifier::Deadline => {
                    let (d, vat) = self.duration()?;
                    if d == 0 {
                        return Self::validation(vat, "DEADLINE must be positive");
                    }
                    mods.deadline = Some(d);
                }
                Modifier::Error => {
                    let (e, vat) = self.number("error tolerance")?;
                    if e < 0.0 {
                        return Self::validation(vat, "ERROR must be nonnegative");
                    }
                    mods.error = Some(e);
                }
                Modifier::Cardinality => {
                    let (c, vat) = self.number("cardinality")?;
                    if c < 1.0 || c.fract() != 0.0 || c > u32::MAX as f64 {
                        return Self::validation(vat, "CARDINALITY must be a positive integer");
                    }
                    mods.cardinality = Some(c as u32);
                }
                Modifier::Params => mods.params = Some(self.key_value_list()?),
            }
        }
    }

    fn find(&mut self) -> Result<FindSpec, CqlError> {
        self.expect_kw("FIND")?;
        let devtype = self.ident("device type")?;
        let mut predicates = Vec::new();
        let mut alias = None;
        let mut saw_where = false;
        loop {
            let at = self.offset();
            match self.keyword() {
                Some("WHERE") => {
                    if saw_where {
                        return Self::validation(at, "duplicate WHERE clause");
                    }
                    saw_where = true;
                    self.bump();
                    loop {
                        let attribute = self.ident("attribute name")?;
                        if !matches!(self.cur.tok, Tok::Eq) {
                            return self.syntax(&["'='"]);
                        }
                        self.bump();
                        let value = self.value()?;
                        predicates.push(Predicate { attribute, value });
                        if self.at_kw("AND") || matches!(self.cur.tok, Tok::Comma) {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                }
                Some("AS") => {
                    if alias.is_some() {
                        return Self::validation(at, "duplicate AS clause");
                    }
                    self.bump();
                    alias = Some(self.ident("alias")?);
                }
                _ if self.cur.tok == Tok::Eof => match alias {
                    Some(alias) => {
                        return Ok(FindSpec {
                            devtype,
                            predicates,
                            alias,
                        })
                    }
                    None => return self.syntax(&["WHERE", "AS"]),
                },
                _ => {
                    let expected: &[&str] = if alias.is_some() {
                        &["WHERE", "end of statement"]
                    } else {
                        &["WHERE", "AS"]
                    };
                    return self.syntax(expected);
                }
            }
        }
    }

    fn sense(&mut self) -> Result<SenseSpec, CqlError> {
        self.expect_kw("SENSE")?;
        let property = self.ident("property")?;
        self.expect_kw("FROM")?;
        let target = self.ident("device set")?;
        let mods = self.modifiers(
            "SENSE",
            &[
                Modifier::Delta,
                Modifier::Error,
                Modifier::Period,
                Modifier::Deadline,
                Modifier::Cardinality,
            ],
        )?;
        if let (Some((delta, _)), Some((period, period_at))) = (mods.delta, mods.period) {
            if period > delta {
                return Self::validation(period_at, format!("PERIOD {period} ms exceeds DELTA {delta} ms"));
            }
        }
        Ok(SenseSpec {
            property,
            target,
            delta: mods.delta.map(|d| d.0),
            error: mods.error,
            period: mods.period.map(|p| p.0),
            deadline: mods.deadline,
            cardinality: mods.cardinality.unwrap_or(1),
        })
    }

    fn actuate(&mut self) -> Result<ActuateSpec, CqlError> {
        self.expect_kw("ACTUATE")?;
        let action = self.ident("action")?;
        self.expect_kw("ON")?;
        let target = self.ident("device set")?;
        let mods = self.modifiers(
            "ACTUATE",
            &[Modifier::Params, Modifier::Period, Modifier::Deadline, Modifier::Cardinality],
        )?;
        Ok(ActuateSpec {
            action,
            target,
            params: mods.params.unwrap_or_default(),
            period: mods.period.map(|p| p.0),
            deadline: mods.deadline,
            cardinality: mods.cardinality.unwrap_or(1),
        })
    }

    fn comparator(&mut self) -> Result<Comparator, CqlError> {
        let c = match self.cur.tok {
            Tok::Lt => Comparator::Lt,
            Tok::Gt => Comparator::Gt,
            Tok::Le => Comparator::Le,
            Tok::Ge => Comparator::Ge,
            Tok::EqEq => Comparator::Eq,
            _ => return self.syntax(&["<", ">", "<=", ">=", "=="]),
        };
        self.bump();
        Ok(c)
    }

    fn event(&mut self) -> Result<EventSpec, CqlError> {
        self.expect_kw("EVENT")?;
        let name = self.ident("event name")?;
        let trigger = match self.keyword() {
            Some("WHEN") => {
                self.bump();
                let property = self.ident("property")?;
                let comparator = self.comparator()?;
                let (threshold, _) = self.number("threshold")?;
                self.expect_kw("FROM")?;
                let target = self.ident("device set")?;
                Trigger::Condition {
                    property,
                    comparator,
                    threshold,
                    target,
                }
            }
            Some("EVERY") => {
                self.bump();
                let (period, at) = self.duration()?;
                if period == 0 {
                    return Self::validation(at, "EVERY period must be positive");
                }
                Trigger::Periodic { period }
            }
            _ => return self.syntax(&["WHEN", "EVERY"]),
        };
        self.expect_kw("DO")?;
        match self.keyword() {
            Some("ACTUATE") => {}
            Some(kw) if STATEMENTS.contains(&kw) => {
                return Self::validation(self.offset(), format!("EVENT body must be ACTUATE, not {kw}"));
            }
            _ => return self.syntax(&["ACTUATE"]),
        }
        let body = self.actuate()?;
        Ok(EventSpec { name, trigger, body })
    }

    fn client_list(&mut self) -> Result<Vec<String>, CqlError> {
        let mut out = vec![self.ident("client id")?];
        while matches!(self.cur.tok, Tok::Comma) {
            self.bump();
            out.push(self.ident("client id")?);
        }
        Ok(out)
    }

    fn rule(&mut self) -> Result<PolicyRule, CqlError> {
        let at = self.offset();
        let kind = match self.keyword() {
            Some("DELETE") => RuleKind::Delete,
            Some("DENATURE") => RuleKind::Denature,
            Some("SUMMARIZE") => RuleKind::Summarize,
            _ => return self.syntax(&["DELETE", "DENATURE", "SUMMARIZE"]),
        };
        self.bump();
        let mut rule = PolicyRule::new(kind);
        let (mut saw_prop, mut saw_clients, mut saw_params) = (false, false, false);
        loop {
            let mat = self.offset();
            match self.keyword() {
                Some("PROPERTY") => {
                    if saw_prop {
                        return Self::validation(mat, "duplicate PROPERTY");
                    }
                    saw_prop = true;
                    self.bump();
                    rule.property = if self.at_kw("ALL") {
                        self.bump();
                        PropertySelector::All
                    } else {
                        PropertySelector::Named(self.ident("property")?)
                    };
                }
                Some(kw @ ("ALLOW" | "BLOCK")) => {
                    if saw_clients {
                        return Self::validation(mat, "ALLOW and BLOCK are mutually exclusive and may appear once");
                    }
                    saw_clients = true;
                    self.bump();
                    let list = self.client_list()?;
                    rule.clients = if kw == "ALLOW" {
                        ClientSelector::Allow(list)
                    } else {
                        ClientSelector::Block(list)
                    };
                }
                Some("PARAMS") => {
                    if saw_params {
                        return Self::validation(mat, "duplicate PARAMS");
                    }
                    saw_params = true;
                    self.bump();
                    rule.params = self.key_value_list()?;
                }
                _ if matches!(self.cur.tok, Tok::Eof | Tok::Semi) => break,
                _ => return self.syntax(&["PROPERTY", "ALLOW", "BLOCK", "PARAMS", "';'", "end of statement"]),
            }
        }
        if let Err(msg) = rule.validate() {
            return Self::validation(at, msg);
        }
        Ok(rule)
    }

    fn denature(&mut self) -> Result<DenatureSpec, CqlError> {
        self.expect_kw("DENATURE")?;
        self.expect_kw("SENSOR")?;
        let sensor_id = self.ident("sensor id")?;
        let mut rules = vec![self.rule()?];
        while matches!(self.cur.tok, Tok::Semi) {
            self.bump();
            rules.push(self.rule()?);
        }
        Ok(DenatureSpec { sensor_id, rules })
    }

    fn raw(&mut self, what: &str) -> Result<(String, usize), CqlError> {
        let at = self.offset();
        match &self.cur.tok {
            Tok::Str(s) => {
                let s = s.clone();
                self.bump();
                Ok((s, at))
            }
            Tok::Eof => self.syntax(&[what]),
            _ => {
                self.lexer.rewind(self.cur.start);
                let word = self.lexer.raw_word().expect("non-eof token has text");
                self.cur = self.lexer.next_token();
                match word.tok {
                    Tok::Word(w) => Ok((w, at)),
                    _ => unreachable!(),
                }
            }
        }
    }

    fn import(&mut self) -> Result<GatewaySpec, CqlError> {
        self.expect_kw("IMPORT")?;
        self.expect_kw("GATEWAY")?;
        let (url, at) = self.raw("gateway url")?;
        if !(url.starts_with("http://") || url.starts_with("https://")) || url.len() <= "http://".len() {
            return Self::validation(at, format!("{url:?} is not an http url"));
        }
        let mut token = None;
        if self.at_kw("TOKEN") {
            self.bump();
            token = Some(self.raw("token")?.0);
        }
        Ok(GatewaySpec { url, token })
    }
}

//! Parser for the activation specification grammar used in config files:
//!
//! ```text
//! tanh
//! sin(beta=0.25)
//! abu(candidates=[sin,tanh,gelu,swish,softplus], gate=softmax, slopes=true, granularity=layer)
//! slaf(order=5)
//! pau(m=5, n=4)
//! acon
//! ```
//!
//! Errors carry the byte offset of the offending token.

use crate::error::{Error, Result};

use super::{default_candidates, ActivationSpec, GateKind, Granularity, StandardKind};

#[derive(Debug, Clone)]
enum Val {
    Num(f64),
    Bool(bool),
    Word(String, Vec<(String, Val)>),
    List(Vec<Val>),
}

struct Parser<'a> {
    s: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, msg: impl std::fmt::Display) -> Error {
        Error::config(format!("activation parse error at byte {}: {}", self.pos, msg))
    }

    fn ws(&mut self) {
        while self.pos < self.s.len() && self.s.as_bytes()[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.s.as_bytes().get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> Result<()> {
        self.ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected '{}'", c as char)))
        }
    }

    fn ident(&mut self) -> Result<String> {
        self.ws();
        let start = self.pos;
        while self
            .peek()
            .map(|c| c.is_ascii_alphanumeric() || c == b'_')
            .unwrap_or(false)
        {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.err("expected identifier"));
        }
        Ok(self.s[start..self.pos].to_ascii_lowercase())
    }

    fn number(&mut self) -> Result<f64> {
        self.ws();
        let start = self.pos;
        while self
            .peek()
            .map(|c| c.is_ascii_digit() || matches!(c, b'.' | b'-' | b'+' | b'e' | b'E'))
            .unwrap_or(false)
        {
            self.pos += 1;
        }
        self.s[start..self.pos]
            .parse()
            .map_err(|_| self.err("expected number"))
    }

    fn value(&mut self) -> Result<Val> {
        self.ws();
        match self.peek() {
            Some(b'[') => {
                self.eat(b'[')?;
                let mut items = Vec::new();
                self.ws();
                if self.peek() != Some(b']') {
                    loop {
                        items.push(self.value()?);
                        self.ws();
                        if self.peek() == Some(b',') {
                            self.pos += 1;
                        } else {
                            break;
                        }
                    }
                }
                self.eat(b']')?;
                Ok(Val::List(items))
            }
            Some(c) if c.is_ascii_digit() || c == b'-' || c == b'.' || c == b'+' => {
                Ok(Val::Num(self.number()?))
            }
            _ => {
                let word = self.ident()?;
                match word.as_str() {
                    "true" => Ok(Val::Bool(true)),
                    "false" => Ok(Val::Bool(false)),
                    _ => {
                        let args = self.maybe_args()?;
                        Ok(Val::Word(word, args))
                    }
                }
            }
        }
    }

    fn maybe_args(&mut self) -> Result<Vec<(String, Val)>> {
        self.ws();
        if self.peek() != Some(b'(') {
            return Ok(Vec::new());
        }
        self.eat(b'(')?;
        let mut args = Vec::new();
        self.ws();
        if self.peek() != Some(b')') {
            loop {
                let key = self.ident()?;
                self.eat(b'=')?;
                let val = self.value()?;
                args.push((key, val));
                self.ws();
                if self.peek() == Some(b',') {
                    self.pos += 1;
                } else {
                    break;
                }
            }
        }
        self.eat(b')')?;
        Ok(args)
    }
}

fn standard_from(word: &str, args: &[(String, Val)], p: &Parser) -> Result<Option<StandardKind>> {
    let beta = |default: f64| -> Result<f64> {
        let mut b = default;
        for (k, v) in args {
            match (k.as_str(), v) {
                ("beta", Val::Num(x)) => b = *x,
                _ => return Err(p.err(format!("unknown argument '{k}' for {word}"))),
            }
        }
        Ok(b)
    };
    let no_args = || -> Result<()> {
        if args.is_empty() {
            Ok(())
        } else {
            Err(p.err(format!("{word} takes no arguments")))
        }
    };
    Ok(Some(match word {
        "sin" => StandardKind::Sin { beta: beta(1.0)? },
        "cos" => StandardKind::Cos { beta: beta(1.0)? },
        "exp" => StandardKind::Exp { beta: beta(1.0)? },
        "softplus" => StandardKind::Softplus { beta: beta(1.0)? },
        "tanh" => {
            no_args()?;
            StandardKind::Tanh
        }
        "sigmoid" => {
            no_args()?;
            StandardKind::Sigmoid
        }
        "elu" => {
            no_args()?;
            StandardKind::Elu
        }
        "gelu" => {
            no_args()?;
            StandardKind::Gelu
        }
        "swish" => {
            no_args()?;
            StandardKind::Swish
        }
        _ => return Ok(None),
    }))
}

fn granularity_from(v: &Val, p: &Parser) -> Result<Granularity> {
    match v {
        Val::Word(w, args) if args.is_empty() && w == "layer" => Ok(Granularity::LayerWise),
        Val::Word(w, args) if args.is_empty() && w == "neuron" => Ok(Granularity::NeuronWise),
        _ => Err(p.err("granularity must be 'layer' or 'neuron'")),
    }
}

fn usize_from(v: &Val, p: &Parser, what: &str) -> Result<usize> {
    match v {
        Val::Num(x) if *x >= 0.0 && x.fract() == 0.0 => Ok(*x as usize),
        _ => Err(p.err(format!("{what} must be a non-negative integer"))),
    }
}

/// Parse an activation specification string.
pub fn parse_activation(s: &str) -> Result<ActivationSpec> {
    let mut p = Parser { s, pos: 0 };
    let name = p.ident()?;
    let args = p.maybe_args()?;
    p.ws();
    if p.pos != s.len() {
        return Err(p.err("trailing input"));
    }

    if let Some(kind) = standard_from(&name, &args, &p)? {
        return Ok(ActivationSpec::Standard(kind));
    }

    let spec = match name.as_str() {
        "abu" => {
            let mut candidates = default_candidates();
            let mut gate = GateKind::Softmax;
            let mut slopes = false;
            let mut granularity = Granularity::LayerWise;
            for (k, v) in &args {
                match k.as_str() {
                    "candidates" => {
                        let Val::List(items) = v else {
                            return Err(p.err("candidates must be a list"));
                        };
                        candidates = items
                            .iter()
                            .map(|item| match item {
                                Val::Word(w, a) => standard_from(w, a, &p)?.ok_or_else(|| {
                                    p.err(format!("unknown candidate '{w}'"))
                                }),
                                _ => Err(p.err("candidate entries must be function names")),
                            })
                            .collect::<Result<Vec<_>>>()?;
                    }
                    "gate" => {
                        gate = match v {
                            Val::Word(w, a) if a.is_empty() => match w.as_str() {
                                "softmax" => GateKind::Softmax,
                                "sigmoid" => GateKind::Sigmoid,
                                "identity" => GateKind::Identity,
                                "l1norm" | "l1" => GateKind::L1Norm,
                                _ => return Err(p.err(format!("unknown gate '{w}'"))),
                            },
                            _ => return Err(p.err("gate must be a name")),
                        };
                    }
                    "slopes" => {
                        let Val::Bool(b) = v else {
                            return Err(p.err("slopes must be true or false"));
                        };
                        slopes = *b;
                    }
                    "granularity" => granularity = granularity_from(v, &p)?,
                    _ => return Err(p.err(format!("unknown argument '{k}' for abu"))),
                }
            }
            ActivationSpec::Abu { candidates, gate, slopes, granularity }
        }
        "slaf" => {
            let mut order = 5;
            let mut granularity = Granularity::LayerWise;
            for (k, v) in &args {
                match k.as_str() {
                    "order" => order = usize_from(v, &p, "order")?,
                    "granularity" => granularity = granularity_from(v, &p)?,
                    _ => return Err(p.err(format!("unknown argument '{k}' for slaf"))),
                }
            }
            ActivationSpec::Slaf { order, granularity }
        }
        "pau" => {
            let mut num_order = 5;
            let mut den_order = 4;
            let mut granularity = Granularity::LayerWise;
            for (k, v) in &args {
                match k.as_str() {
                    "m" => num_order = usize_from(v, &p, "m")?,
                    "n" => den_order = usize_from(v, &p, "n")?,
                    "granularity" => granularity = granularity_from(v, &p)?,
                    _ => return Err(p.err(format!("unknown argument '{k}' for pau"))),
                }
            }
            ActivationSpec::Pau { num_order, den_order, granularity }
        }
        "acon" => {
            let mut granularity = Granularity::LayerWise;
            for (k, v) in &args {
                match k.as_str() {
                    "granularity" => granularity = granularity_from(v, &p)?,
                    _ => return Err(p.err(format!("unknown argument '{k}' for acon"))),
                }
            }
            ActivationSpec::Acon { granularity }
        }
        _ => return Err(p.err(format!("unknown activation '{name}'"))),
    };
    spec.validate()?;
    Ok(spec)
}

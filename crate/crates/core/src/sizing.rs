//! Codebook sizes given either as integers or as rate expressions such as
//! `"I(X_B;R|X_A)+3delta2"`, resolved to `⌈2^{n·rate}⌉`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rates::RateQuantities;

/// A size knob: explicit count or rate expression in bits per copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SizeSpec {
    Fixed(u64),
    Rate(String),
}

impl Default for SizeSpec {
    fn default() -> Self {
        SizeSpec::Fixed(1)
    }
}

impl From<u64> for SizeSpec {
    fn from(v: u64) -> Self {
        SizeSpec::Fixed(v)
    }
}

impl From<&str> for SizeSpec {
    fn from(v: &str) -> Self {
        SizeSpec::Rate(v.to_string())
    }
}

/// Values available to rate expressions.
#[derive(Debug, Clone, Copy)]
pub struct RateContext {
    pub quantities: RateQuantities,
    pub delta: f64,
    pub delta2: f64,
}

impl RateContext {
    fn symbol(&self, name: &str) -> Option<f64> {
        let q = &self.quantities;
        let compact: String = name.chars().filter(|c| !c.is_whitespace()).collect();
        Some(match compact.as_str() {
            "I(X_A;R)" => q.i_xa_r,
            "I(X_A,X_B;R)" | "I(X_B,X_A;R)" | "I(X_AX_B;R)" => q.i_xaxb_r,
            "I(X_B;R|X_A)" => q.i_xb_r_given_xa,
            "I(X_B;R,X_A)" | "I(X_B;X_A,R)" | "I(X_B;RX_A)" => q.i_xb_rxa,
            "I(X_A;X_B)" | "I(X_B;X_A)" => q.i_xa_xb,
            "I(X_B;R)" => q.i_xb_r,
            "H(X_A)" => q.h_xa,
            "H(X_B)" => q.h_xb,
            "H(X_B|X_A)" => q.h_xb_given_xa,
            "H(R)" => q.h_r,
            "H(R|X_A)" => q.h_r_given_xa,
            "delta" | "δ" => self.delta,
            "delta2" | "δ''" | "δ2" => self.delta2,
            _ => return None,
        })
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    ctx: &'a RateContext,
}

impl<'a> Parser<'a> {
    fn err(&self, msg: &str) -> Error {
        Error::RateExpression(format!("{msg} at offset {} in {:?}", self.pos, self.src))
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.rest().chars().next() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.rest().chars().next()
    }

    fn expr(&mut self) -> Result<f64> {
        let mut acc = self.term()?;
        while let Some(c) = self.peek() {
            match c {
                '+' => {
                    self.pos += 1;
                    acc += self.term()?;
                }
                '-' | '−' => {
                    self.pos += c.len_utf8();
                    acc -= self.term()?;
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<f64> {
        let mut acc = self.factor()?;
        loop {
            match self.peek() {
                Some('*') => {
                    self.pos += 1;
                    acc *= self.factor()?;
                }
                // Implicit product, as in "3delta2".
                Some(c) if c.is_alphabetic() || c == '(' => acc *= self.factor()?,
                _ => break,
            }
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<f64> {
        match self.peek() {
            None => Err(self.err("unexpected end")),
            Some('(') => {
                self.pos += 1;
                let v = self.expr()?;
                if self.peek() != Some(')') {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(v)
            }
            Some('-') => {
                self.pos += 1;
                Ok(-self.factor()?)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => {
                let len = self
                    .rest()
                    .find(|c: char| !(c.is_ascii_digit() || c == '.' || c == 'e'))
                    .unwrap_or(self.rest().len());
                let text = &self.rest()[..len];
                let v = text.parse::<f64>().map_err(|_| self.err("bad number"))?;
                self.pos += len;
                Ok(v)
            }
            Some(_) => self.symbol(),
        }
    }

    fn symbol(&mut self) -> Result<f64> {
        let rest = self.rest();
        // Information quantities: letter followed by a parenthesized argument.
        if (rest.starts_with("I(") || rest.starts_with("H(")) && rest.contains(')') {
            let end = rest.find(')').unwrap() + 1;
            let name = &rest[..end];
            let v = self.ctx.symbol(name).ok_or_else(|| self.err(&format!("unknown quantity {name}")))?;
            self.pos += end;
            return Ok(v);
        }
        let len = rest
            .find(|c: char| !(c.is_alphanumeric() || c == '\'' || c == '_'))
            .unwrap_or(rest.len());
        let name = &rest[..len];
        let v = self.ctx.symbol(name).ok_or_else(|| self.err(&format!("unknown symbol {name:?}")))?;
        self.pos += len;
        Ok(v)
    }
}

/// Evaluates a rate expression in bits per copy.
pub fn evaluate_rate(expr: &str, ctx: &RateContext) -> Result<f64> {
    let mut p = Parser { src: expr, pos: 0, ctx };
    let v = p.expr()?;
    if p.peek().is_some() {
        return Err(p.err("trailing input"));
    }
    Ok(v)
}

/// Resolves a size to an integer `≥ 1`; rates become `⌈2^{n·rate}⌉`.
pub fn resolve_size(spec: &SizeSpec, n: usize, ctx: &RateContext, cap: u64) -> Result<u64> {
    let size = match spec {
        SizeSpec::Fixed(v) => *v,
        SizeSpec::Rate(expr) => {
            let rate = evaluate_rate(expr, ctx)?;
            let raw = (n as f64 * rate).exp2().ceil();
            if !raw.is_finite() || raw > cap as f64 {
                return Err(Error::SizeLimitExceeded {
                    size: if raw.is_finite() { raw as usize } else { usize::MAX },
                    cap: cap as usize,
                });
            }
            raw as u64
        }
    };
    if size == 0 {
        return Err(Error::InvalidParameter("codebook and randomness sizes must be at least 1".into()));
    }
    if size > cap {
        return Err(Error::SizeLimitExceeded {
            size: size as usize,
            cap: cap as usize,
        });
    }
    Ok(size)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> RateContext {
        RateContext {
            quantities: RateQuantities {
                i_xaxb_r: 1.5,
                i_xb_r_given_xa: 0.5,
                i_xb_rxa: 0.7,
                h_xb_given_xa: 0.3,
                h_xb: 1.0,
                h_xa: 1.0,
                i_xa_r: 1.0,
                i_xb_r: 0.2,
                i_xa_xb: 0.2,
                h_r: 1.0,
                h_r_given_xa: 0.4,
                chain_rule_gap: 0.0,
            },
            delta: 0.5,
            delta2: 0.25,
        }
    }

    #[test]
    fn expressions() {
        let c = ctx();
        assert_eq!(evaluate_rate("I(X_B;R|X_A)+3delta2", &c).unwrap(), 1.25);
        assert_eq!(evaluate_rate("I(X_B;R|X_A) + 3*δ''", &c).unwrap(), 1.25);
        assert_eq!(evaluate_rate("I(X_A;X_B)+I(X_B;R|X_A)+delta+3delta2", &c).unwrap(), 1.95);
        assert_eq!(evaluate_rate("2*(H(X_A)-I(X_A;R))", &c).unwrap(), 0.0);
        assert!(evaluate_rate("I(Y;R)", &c).is_err());
        assert!(evaluate_rate("1 +", &c).is_err());
    }

    #[test]
    fn sizes() {
        let c = ctx();
        assert_eq!(resolve_size(&SizeSpec::Fixed(4), 2, &c, 1 << 20).unwrap(), 4);
        // 2^{2·1.25} = 5.66 → 6.
        assert_eq!(resolve_size(&"I(X_B;R|X_A)+3delta2".into(), 2, &c, 1 << 20).unwrap(), 6);
        assert!(resolve_size(&SizeSpec::Fixed(0), 2, &c, 10).is_err());
        assert!(matches!(
            resolve_size(&"40".into(), 2, &c, 1 << 20),
            Err(Error::SizeLimitExceeded { .. })
        ));
        let json: SizeSpec = serde_json::from_str("\"H(X_A)\"").unwrap();
        assert_eq!(json, SizeSpec::Rate("H(X_A)".into()));
        let json: SizeSpec = serde_json::from_str("8").unwrap();
        assert_eq!(json, SizeSpec::Fixed(8));
    }
}

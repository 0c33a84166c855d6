use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rates::RateQuantities;
use crate::sizing::{resolve_size, RateContext, SizeSpec};

/// Upper bound on any codebook or randomness size.
pub const SIZE_CAP: u64 = 1 << 24;

/// How Bob's codewords are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum CodebookCase {
    /// Shared list drawn from the marginal pruned law; each `x_Aⁿ` selects the
    /// first `s_B` jointly typical entries.
    Shared,
    /// Separate lists per `x_Aⁿ` drawn from the conditional pruned law.
    Conditional,
}

impl TryFrom<u8> for CodebookCase {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(CodebookCase::Shared),
            2 => Ok(CodebookCase::Conditional),
            _ => Err(format!("case must be 1 or 2, got {v}")),
        }
    }
}

impl From<CodebookCase> for u8 {
    fn from(c: CodebookCase) -> u8 {
        match c {
            CodebookCase::Shared => 1,
            CodebookCase::Conditional => 2,
        }
    }
}

impl CodebookCase {
    pub fn number(self) -> u8 {
        self.into()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Bob learns `(j_A, m_A)` as well as his own index.
    #[default]
    WithAliceRandomness,
    /// Bob receives only `j'_B`; requires the shared-list codebook.
    Without,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::WithAliceRandomness => "with_alice_randomness",
            Mode::Without => "without",
        }
    }
}

fn default_delta() -> f64 {
    0.5
}
fn default_delta2() -> f64 {
    0.25
}
fn default_eps() -> f64 {
    0.1
}
fn default_case() -> CodebookCase {
    CodebookCase::Conditional
}
fn default_s_a() -> SizeSpec {
    SizeSpec::Rate("I(X_A;R)+3delta2".into())
}
fn default_s_b() -> SizeSpec {
    SizeSpec::Rate("I(X_B;R|X_A)+3delta2".into())
}
fn default_s_b_prime() -> SizeSpec {
    SizeSpec::Rate("I(X_A;X_B)+I(X_B;R|X_A)+delta+3delta2".into())
}

/// Protocol knobs as written in a config; sizes may be rate expressions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSpec {
    pub n: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_delta2")]
    pub delta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(rename = "sA", default = "default_s_a")]
    pub s_a: SizeSpec,
    #[serde(rename = "sB", default = "default_s_b")]
    pub s_b: SizeSpec,
    #[serde(rename = "sBprime", default = "default_s_b_prime")]
    pub s_b_prime: SizeSpec,
    #[serde(rename = "MA", default)]
    pub m_a: SizeSpec,
    #[serde(rename = "MB", default)]
    pub m_b: SizeSpec,
    #[serde(default = "default_case")]
    pub case: CodebookCase,
    #[serde(default)]
    pub seed: u64,
    /// Replace every typical projector by the identity.
    #[serde(default)]
    pub trivial_projectors: bool,
}

impl ProtocolSpec {
    pub fn with_n(n: usize) -> Self {
        ProtocolSpec {
            n,
            delta: default_delta(),
            delta2: default_delta2(),
            eps: default_eps(),
            s_a: default_s_a(),
            s_b: default_s_b(),
            s_b_prime: default_s_b_prime(),
            m_a: SizeSpec::Fixed(1),
            m_b: SizeSpec::Fixed(1),
            case: default_case(),
            seed: 0,
            trivial_projectors: false,
        }
    }

    pub fn resolve(&self, mode: Mode, quantities: &RateQuantities, dim_cap: usize) -> Result<ProtocolParams> {
        let ctx = RateContext {
            quantities: *quantities,
            delta: self.delta,
            delta2: self.delta2,
        };
        let size = |s: &SizeSpec| resolve_size(s, self.n, &ctx, SIZE_CAP);
        let p = ProtocolParams {
            n: self.n,
            delta: self.delta,
            delta2: self.delta2,
            eps: self.eps,
            s_a: size(&self.s_a)?,
            s_b: size(&self.s_b)?,
            s_b_prime: match self.case {
                CodebookCase::Shared => size(&self.s_b_prime)?,
                CodebookCase::Conditional => size(&self.s_b_prime).unwrap_or(1),
            },
            m_a: size(&self.m_a)?,
            m_b: size(&self.m_b)?,
            case: self.case,
            mode,
            seed: self.seed,
            trivial_projectors: self.trivial_projectors,
            dim_cap,
        };
        p.validate()?;
        Ok(p)
    }
}

/// Fully resolved protocol parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub n: usize,
    pub delta: f64,
    pub delta2: f64,
    pub eps: f64,
    #[serde(rename = "sA")]
    pub s_a: u64,
    #[serde(rename = "sB")]
    pub s_b: u64,
    #[serde(rename = "sBprime")]
    pub s_b_prime: u64,
    #[serde(rename = "MA")]
    pub m_a: u64,
    #[serde(rename = "MB")]
    pub m_b: u64,
    pub case: CodebookCase,
    pub mode: Mode,
    pub seed: u64,
    pub trivial_projectors: bool,
    pub dim_cap: usize,
}

impl ProtocolParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        for (name, v) in [("delta", self.delta), ("delta2", self.delta2), ("eps", self.eps)] {
            if !v.is_finite() || v < 0.0 {
                return bad(format!("{name} must be a nonnegative number, got {v}"));
            }
        }
        for (name, v) in [
            ("sA", self.s_a),
            ("sB", self.s_b),
            ("sBprime", self.s_b_prime),
            ("MA", self.m_a),
            ("MB", self.m_b),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.case == CodebookCase::Shared && self.s_b > self.s_b_prime {
            return bad(format!("case 1 needs sB <= sBprime, got {} > {}", self.s_b, self.s_b_prime));
        }
        if self.mode == Mode::Without && self.case != CodebookCase::Shared {
            return bad("mode \"without\" requires case 1".into());
        }
        Ok(())
    }

    /// `log₂(s_A)/n`.
    pub fn bits_to_alice(&self) -> f64 {
        (self.s_a as f64).log2() / self.n as f64
    }

    /// With Alice's randomness Bob also needs `j_A`; otherwise he gets `j'_B` only.
    pub fn bits_to_bob(&self) -> f64 {
        let n = self.n as f64;
        match self.mode {
            Mode::WithAliceRandomness => ((self.s_a as f64).log2() + (self.s_b as f64).log2()) / n,
            Mode::Without => (self.s_b_prime as f64).log2() / n,
        }
    }

    /// The rate Bob's communication is compared against.
    pub fn bob_target(&self, q: &RateQuantities) -> f64 {
        match self.mode {
            Mode::WithAliceRandomness => q.i_xaxb_r,
            Mode::Without => q.i_xb_rxa,
        }
    }

    /// `S / ((1+ε) s M)`, the prefactor of every sampled operator.
    pub fn prefactor(&self, normalizer: f64, size: u64, randomness: u64) -> f64 {
        normalizer / ((1.0 + self.eps) * size as f64 * randomness as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q() -> RateQuantities {
        serde_json::from_str(
            r#"{"iXAXB_R":1.0,"iXB_R_given_XA":0.0,"iXB_RXA":1.0,"hXB_given_XA":0.0,"hXB":1.0,
                "hXA":1.0,"iXA_R":1.0,"iXB_R":1.0,"iXAXB":1.0,"hR":1.0,"hR_given_XA":0.0,"chain_rule_gap":0.0}"#,
        )
        .unwrap()
    }

    #[test]
    fn defaults_resolve() {
        let p = ProtocolSpec::with_n(2).resolve(Mode::WithAliceRandomness, &q(), 4096).unwrap();
        // 2^{2(1+0.75)} = 11.3 → 12; 2^{2·0.75} = 2.83 → 3.
        assert_eq!((p.s_a, p.s_b, p.m_a, p.m_b), (12, 3, 1, 1));
        assert_eq!(p.case, CodebookCase::Conditional);
    }

    #[test]
    fn validation() {
        let mut s = ProtocolSpec::with_n(2);
        assert!(s.resolve(Mode::Without, &q(), 4096).is_err());
        s.case = CodebookCase::Shared;
        s.s_b = SizeSpec::Fixed(8);
        s.s_b_prime = SizeSpec::Fixed(4);
        assert!(s.resolve(Mode::Without, &q(), 4096).is_err());
        s.s_b_prime = SizeSpec::Fixed(16);
        let p = s.resolve(Mode::Without, &q(), 4096).unwrap();
        assert_eq!(p.bits_to_bob(), 2.0);
        s.m_b = SizeSpec::Fixed(0);
        assert!(s.resolve(Mode::Without, &q(), 4096).is_err());
    }

    #[test]
    fn spec_json() {
        let s: ProtocolSpec = serde_json::from_str(r#"{"n":2,"sB":4,"MB":"1","case":1}"#).unwrap();
        assert_eq!(s.s_b, SizeSpec::Fixed(4));
        assert_eq!(s.case, CodebookCase::Shared);
        assert!(serde_json::from_str::<ProtocolSpec>(r#"{"n":2,"case":3}"#).is_err());
        assert!(serde_json::from_str::<ProtocolSpec>(r#"{"n":2,"bogus":3}"#).is_err());
    }
}

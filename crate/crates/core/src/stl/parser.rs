//! Recursive-descent parser for the textual formula syntax.
//!
//! ```text
//! formula  := or
//! or       := and ("|" and)*
//! and      := until ("&" until)*
//! until    := unary ("U" interval unary)?
//! unary    := ("G"|"F") interval "(" formula ")" | "!" unary | "(" formula ")" | atom
//! interval := "[" bound "," (bound | "inf") "]" | <empty>
//! bound    := number | param
//! atom     := ident cmp (number | param)
//! cmp      := ">=" | "<=" | ">" | "<"
//! param    := "?" ident "{" number "," number "}"
//! ```
//!
//! All times are minutes. An omitted interval means `[0,inf]`. `G`, `F` and
//! `U` are keywords only where an operator can appear: `G`/`F` when followed
//! by `[` or `(`, `U` directly after an operand.
//!
//! `a U[l,h] b` holds at `t` iff some grid point `t'` in `[t+l, t+h]`
//! satisfies `b` and `a` holds at every grid point in `[t, t')`; the witness
//! point itself is not required to satisfy `a`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use super::ast::{Comparator, Formula, Interval, Param, Value, VariableId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("unexpected {found}, expected {expected}")]
    Unexpected { found: String, expected: String },
    #[error("unknown operator `{0}`")]
    UnknownOperator(String),
    #[error("malformed interval: {0}")]
    MalformedInterval(String),
    #[error("invalid number `{0}`")]
    InvalidNumber(String),
    #[error("parameter `{0}` declared more than once")]
    DuplicateParameter(String),
    #[error("parameter `{name}` has an invalid range: {reason}")]
    InvalidParamRange { name: String, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    Cmp(Comparator),
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Comma,
    Amp,
    Pipe,
    Bang,
    Question,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Number(n) => write!(f, "number `{n}`"),
            Tok::Cmp(c) => write!(f, "`{c}`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::LBracket => f.write_str("`[`"),
            Tok::RBracket => f.write_str("`]`"),
            Tok::LBrace => f.write_str("`{`"),
            Tok::RBrace => f.write_str("`}`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Amp => f.write_str("`&`"),
            Tok::Pipe => f.write_str("`|`"),
            Tok::Bang => f.write_str("`!`"),
            Tok::Question => f.write_str("`?`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(text: &str) -> Result<Vec<Spanned>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut column) = (0usize, 1usize, 1usize);
    let err = |line, column, kind| ParseError { line, column, kind };
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            column = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            column += 1;
            continue;
        }
        let start_col = column;
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '[' => Some(Tok::LBracket),
            ']' => Some(Tok::RBracket),
            '{' => Some(Tok::LBrace),
            '}' => Some(Tok::RBrace),
            ',' => Some(Tok::Comma),
            '&' => Some(Tok::Amp),
            '|' => Some(Tok::Pipe),
            '?' => Some(Tok::Question),
            '∧' => Some(Tok::Amp),
            '∨' => Some(Tok::Pipe),
            '¬' => Some(Tok::Bang),
            '≥' => Some(Tok::Cmp(Comparator::Ge)),
            '≤' => Some(Tok::Cmp(Comparator::Le)),
            _ => None,
        };
        if let Some(tok) = single {
            out.push(Spanned { tok, line, column: start_col });
            i += 1;
            column += 1;
            continue;
        }
        if c == '>' || c == '<' || c == '=' || c == '!' {
            let mut j = i + 1;
            while j < chars.len() && matches!(chars[j], '>' | '<' | '=') {
                j += 1;
            }
            let op: String = chars[i..j].iter().collect();
            let tok = match op.as_str() {
                ">=" => Tok::Cmp(Comparator::Ge),
                "<=" => Tok::Cmp(Comparator::Le),
                ">" => Tok::Cmp(Comparator::Gt),
                "<" => Tok::Cmp(Comparator::Lt),
                "!" => Tok::Bang,
                _ => return Err(err(line, start_col, ParseErrorKind::UnknownOperator(op))),
            };
            out.push(Spanned { tok, line, column: start_col });
            column += j - i;
            i = j;
            continue;
        }
        if c.is_ascii_digit() || c == '.' || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit() || *d == '.')) {
            let mut j = i + 1;
            while j < chars.len() {
                let d = chars[j];
                let exponent_sign = (d == '-' || d == '+') && matches!(chars[j - 1], 'e' | 'E');
                if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exponent_sign {
                    j += 1;
                } else {
                    break;
                }
            }
            let text: String = chars[i..j].iter().collect();
            let value: f64 = text
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| err(line, start_col, ParseErrorKind::InvalidNumber(text.clone())))?;
            out.push(Spanned { tok: Tok::Number(value), line, column: start_col });
            column += j - i;
            i = j;
            continue;
        }
        if c.is_ascii_alphabetic() {
            let mut j = i + 1;
            while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                j += 1;
            }
            let ident: String = chars[i..j].iter().collect();
            out.push(Spanned { tok: Tok::Ident(ident), line, column: start_col });
            column += j - i;
            i = j;
            continue;
        }
        return Err(err(line, start_col, ParseErrorKind::UnknownOperator(c.to_string())));
    }
    out.push(Spanned { tok: Tok::Eof, line, column });
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    param_names: BTreeSet<String>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        let idx = (self.pos + offset).min(self.toks.len() - 1);
        &self.toks[idx].tok
    }

    fn advance(&mut self) -> Tok {
        let tok = self.toks[self.pos].tok.clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        tok
    }

    fn error_here(&self, kind: ParseErrorKind) -> ParseError {
        let s = &self.toks[self.pos];
        ParseError { line: s.line, column: s.column, kind }
    }

    fn unexpected(&self, expected: &str) -> ParseError {
        self.error_here(ParseErrorKind::Unexpected {
            found: self.peek().to_string(),
            expected: expected.to_string(),
        })
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.advance();
            Ok(())
        } else {
            Err(self.unexpected(expected))
        }
    }

    fn formula(&mut self) -> Result<Formula, ParseError> {
        let mut left = self.conjunction()?;
        while *self.peek() == Tok::Pipe {
            self.advance();
            let right = self.conjunction()?;
            left = Formula::or(left, right);
        }
        Ok(left)
    }

    fn conjunction(&mut self) -> Result<Formula, ParseError> {
        let mut left = self.until()?;
        while *self.peek() == Tok::Amp {
            self.advance();
            let right = self.until()?;
            left = Formula::and(left, right);
        }
        Ok(left)
    }

    fn until(&mut self) -> Result<Formula, ParseError> {
        let left = self.unary()?;
        if matches!(self.peek(), Tok::Ident(s) if s == "U") {
            self.advance();
            let interval = self.interval()?;
            let right = self.unary()?;
            return Ok(Formula::until(interval, left, right));
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        match self.peek().clone() {
            Tok::Ident(op)
                if (op == "G" || op == "F")
                    && matches!(self.peek_at(1), Tok::LBracket | Tok::LParen) =>
            {
                self.advance();
                let interval = self.interval()?;
                self.expect(Tok::LParen, "`(`")?;
                let child = self.formula()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(if op == "G" {
                    Formula::always(interval, child)
                } else {
                    Formula::eventually(interval, child)
                })
            }
            Tok::Bang => {
                self.advance();
                Ok(Formula::not(self.unary()?))
            }
            Tok::LParen => {
                self.advance();
                let inner = self.formula()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Ident(_) => self.atom(),
            _ => Err(self.unexpected("a formula")),
        }
    }

    fn atom(&mut self) -> Result<Formula, ParseError> {
        let name = match self.advance() {
            Tok::Ident(name) => name,
            _ => unreachable!("atom called on identifier"),
        };
        let variable = VariableId::new(name).expect("lexer only produces valid identifiers");
        let cmp = match self.peek() {
            Tok::Cmp(c) => *c,
            _ => return Err(self.unexpected("a comparator (>=, <=, >, <)")),
        };
        self.advance();
        let threshold = self.value("a threshold")?;
        Ok(Formula::Predicate { variable, cmp, threshold })
    }

    fn value(&mut self, expected: &str) -> Result<Value, ParseError> {
        match self.peek() {
            Tok::Number(n) => {
                let n = *n;
                self.advance();
                Ok(Value::Const(n))
            }
            Tok::Question => self.param().map(Value::Param),
            _ => Err(self.unexpected(expected)),
        }
    }

    fn param(&mut self) -> Result<Param, ParseError> {
        self.expect(Tok::Question, "`?`")?;
        let name = match self.peek() {
            Tok::Ident(name) => name.clone(),
            _ => return Err(self.unexpected("a parameter name")),
        };
        let name_err = self.error_here(ParseErrorKind::DuplicateParameter(name.clone()));
        self.advance();
        self.expect(Tok::LBrace, "`{`")?;
        let min = self.number()?;
        self.expect(Tok::Comma, "`,`")?;
        let max = self.number()?;
        self.expect(Tok::RBrace, "`}`")?;
        if min > max {
            return Err(ParseError {
                kind: ParseErrorKind::InvalidParamRange { name, reason: format!("{min} > {max}") },
                ..name_err
            });
        }
        if !self.param_names.insert(name.clone()) {
            return Err(name_err);
        }
        Ok(Param { name, min, max })
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        match self.peek() {
            Tok::Number(n) => {
                let n = *n;
                self.advance();
                Ok(n)
            }
            _ => Err(self.unexpected("a number")),
        }
    }

    fn interval(&mut self) -> Result<Interval, ParseError> {
        if *self.peek() != Tok::LBracket {
            return Ok(Interval::unbounded());
        }
        let open = self.pos;
        self.advance();
        let lo = self.value("an interval bound")?;
        self.expect(Tok::Comma, "`,`")?;
        let hi = match self.peek() {
            Tok::Ident(s) if s == "inf" => {
                self.advance();
                Value::Const(f64::INFINITY)
            }
            _ => self.value("an interval bound or `inf`")?,
        };
        self.expect(Tok::RBracket, "`]`")?;
        let at_open = |kind| ParseError { line: self.toks[open].line, column: self.toks[open].column, kind };
        if let Some(l) = lo.as_const() {
            if l < 0.0 {
                return Err(at_open(ParseErrorKind::MalformedInterval(format!("negative lower bound {l}"))));
            }
        }
        if let (Some(l), Some(h)) = (lo.as_const(), hi.as_const()) {
            if l > h {
                return Err(at_open(ParseErrorKind::MalformedInterval(format!("lower bound {l} exceeds upper bound {h}"))));
            }
        }
        Ok(Interval { lo, hi })
    }
}

/// Parses formula text into a (possibly parametric) formula.
pub fn parse(text: &str) -> Result<Formula, ParseError> {
    let mut parser = Parser { toks: lex(text)?, pos: 0, param_names: BTreeSet::new() };
    let formula = parser.formula()?;
    if *parser.peek() != Tok::Eof {
        return Err(parser.unexpected("end of input"));
    }
    Ok(formula)
}

impl FromStr for Formula {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(v: &str, c: Comparator, t: f64) -> Formula {
        Formula::predicate(v, c, t)
    }

    #[test]
    fn accepts_unicode_operators() {
        assert_eq!(parse("G[0,60](x ≥ 1 ∧ ¬(y ≤ 2) ∨ z ≥ 0)").unwrap(), parse("G[0,60](x >= 1 & !(y <= 2) | z >= 0)").unwrap());
    }

    #[test]
    fn parses_band() {
        let f = parse("G[0,60](cgm >= 70 & cgm <= 180)").unwrap();
        assert_eq!(
            f,
            Formula::always(
                Interval::new(0.0, 60.0),
                Formula::and(pred("cgm", Comparator::Ge, 70.0), pred("cgm", Comparator::Le, 180.0))
            )
        );
        assert!(f.is_ground());
    }

    #[test]
    fn parses_eventually_with_fractional_bounds() {
        let f = parse("F[18.02,19.62](meal <= 65 & meal >= 10)").unwrap();
        assert_eq!(
            f,
            Formula::eventually(
                Interval::new(18.02, 19.62),
                Formula::and(pred("meal", Comparator::Le, 65.0), pred("meal", Comparator::Ge, 10.0))
            )
        );
    }

    #[test]
    fn parses_parameter() {
        let f = parse("G[0,0](x >= ?a{0,100})").unwrap();
        assert_eq!(
            f,
            Formula::always(
                Interval::new(0.0, 0.0),
                Formula::predicate("x", Comparator::Ge, Value::Param(Param::new("a", 0.0, 100.0)))
            )
        );
        assert!(!f.is_ground());
    }

    #[test]
    fn omitted_interval_is_unbounded() {
        let f = parse("G(cgm >= 70)").unwrap();
        assert_eq!(f, Formula::always(Interval::unbounded(), pred("cgm", Comparator::Ge, 70.0)));
        assert_eq!(f.to_string(), "G[0,inf](cgm >= 70)");
    }

    #[test]
    fn parses_until_and_not() {
        let f = parse("(basalBolus <= 0.04) U[495,708] (corrBolus >= 0.459)").unwrap();
        assert!(matches!(f, Formula::Until(..)));
        let g = parse("!(x > 1) | y < 2").unwrap();
        assert_eq!(
            g,
            Formula::or(Formula::not(pred("x", Comparator::Gt, 1.0)), pred("y", Comparator::Lt, 2.0))
        );
        let h = parse("a >= 1 U b >= 2").unwrap();
        assert_eq!(h, Formula::until(Interval::unbounded(), pred("a", Comparator::Ge, 1.0), pred("b", Comparator::Ge, 2.0)));
    }

    #[test]
    fn conjunction_binds_tighter_than_disjunction() {
        let f = parse("a > 1 | b > 2 & c > 3").unwrap();
        assert_eq!(
            f,
            Formula::or(
                pred("a", Comparator::Gt, 1.0),
                Formula::and(pred("b", Comparator::Gt, 2.0), pred("c", Comparator::Gt, 3.0))
            )
        );
    }

    #[test]
    fn variables_named_like_operators() {
        let f = parse("G >= 1 & F < 2").unwrap();
        assert_eq!(f, Formula::and(pred("G", Comparator::Ge, 1.0), pred("F", Comparator::Lt, 2.0)));
    }

    #[test]
    fn inverted_interval_is_rejected() {
        let err = parse("G[60,0](cgm>=70)").unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::MalformedInterval(_)), "{err}");
        assert_eq!((err.line, err.column), (1, 2));
    }

    #[test]
    fn unknown_operator_is_reported_with_position() {
        let err = parse("G[0,60](cgm == 70)").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnknownOperator("==".into()));
        assert_eq!((err.line, err.column), (1, 13));
        let err = parse("x >= 1 &\n  y ~ 2").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnknownOperator("~".into()));
        assert_eq!((err.line, err.column), (2, 5));
    }

    #[test]
    fn syntax_errors() {
        assert!(parse("").is_err());
        assert!(parse("G[0,60](cgm >= 70").is_err());
        assert!(parse("cgm >= ").is_err());
        assert!(parse("cgm 70").is_err());
        assert!(parse("x >= 1 y >= 2").is_err());
        assert!(parse("G[inf,2](x > 1)").is_err());
    }

    #[test]
    fn duplicate_parameters_are_rejected() {
        let err = parse("x >= ?a{0,1} & y <= ?a{0,1}").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::DuplicateParameter("a".into()));
        assert!(matches!(
            parse("x >= ?a{5,1}").unwrap_err().kind,
            ParseErrorKind::InvalidParamRange { .. }
        ));
    }

    #[test]
    fn render_round_trips_nested_shapes() {
        for text in [
            "G[0,60](cgm >= ?a{0,400} & cgm <= ?b{0,400})",
            "F[?u{0,60},?v{0,60}](meal <= ?k{0,200} & hr >= ?l{0,220})",
            "(G[540,661](basalBolus <= 0.072)) U[550,661] (activityLevel >= 4)",
            "(a > 1 | b > 2) & !(c < -3.5)",
            "a > 1 & (b > 2 & c > 3)",
            "(a > 1 U[0,5] b > 2) U[1,2] (c > 0)",
        ] {
            let f = parse(text).unwrap();
            assert_eq!(parse(&f.to_string()).unwrap(), f, "{text} -> {f}");
        }
    }
}

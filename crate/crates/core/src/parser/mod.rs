//! Concrete syntax: a Granule-flavoured ASCII surface language.
//!
//! A program is a sequence of top-level items. An item starts at a token in
//! column 1 (or after `;`) and is one of
//!
//! ```text
//! #semiring nat|nat-leq|interval      -- first line only
//! type Name = A                        -- type abbreviation, expanded on parse
//! name : A                             -- signature
//! name x y = t                         -- equation
//! ```

mod lexer;
mod print;

use std::collections::HashMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use thiserror::Error;

use crate::ast::{PermExpr, Prim, ResKind, Scheme, Term, Type};
use crate::grade::{Grade, Permission, Semiring};
use lexer::{Tok, Token};

pub use print::{print_program, print_scheme, print_term, print_type};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {message}")]
pub struct SyntaxError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl SyntaxError {
    pub fn new(line: usize, col: usize, message: impl Into<String>) -> SyntaxError {
        SyntaxError { line, col, message: message.into() }
    }
}

/// A top-level definition: signature plus equation.
#[derive(Debug, Clone, PartialEq)]
pub struct Definition {
    pub name: String,
    pub scheme: Scheme,
    pub body: Term,
    pub line: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceProgram {
    pub semiring: Semiring,
    pub defs: Vec<Definition>,
}

impl SourceProgram {
    pub fn get(&self, name: &str) -> Option<&Definition> {
        self.defs.iter().find(|d| d.name == name)
    }

    pub fn main(&self) -> Option<&Definition> {
        self.get("main")
    }
}

const KEYWORDS: [&str; 20] = [
    "let", "in", "pack", "unpack", "withBorrow", "split", "join", "push", "pull", "share", "clone", "as", "forall",
    "exists", "type", "Unit", "Nat", "Float", "Array", "Ref",
];

fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s) || Prim::from_name(s).is_some()
}

pub fn parse_program(text: &str) -> Result<SourceProgram, SyntaxError> {
    parse_program_in(text, None)
}

/// Parses with `semiring` in place of the file's `#semiring` pragma.
pub fn parse_program_as(text: &str, semiring: Semiring) -> Result<SourceProgram, SyntaxError> {
    parse_program_in(text, Some(semiring))
}

fn parse_program_in(text: &str, forced: Option<Semiring>) -> Result<SourceProgram, SyntaxError> {
    let (pragma, body, first_line) = read_pragma(text)?;
    let semiring = forced.unwrap_or(pragma);
    let tokens = lexer::lex(body, first_line)?;

    let mut items: Vec<Vec<Token>> = Vec::new();
    let mut after_semi = true;
    for tok in tokens {
        if tok.tok == Tok::Sym(";") {
            after_semi = true;
            continue;
        }
        if after_semi || tok.col == 1 {
            items.push(Vec::new());
        }
        after_semi = false;
        items.last_mut().expect("item started above").push(tok);
    }

    let mut aliases: HashMap<String, Type> = HashMap::new();
    let mut sigs: Vec<(String, Scheme, usize, usize)> = Vec::new();
    let mut eqns: Vec<(String, Term, usize, usize)> = Vec::new();
    for item in items {
        let (line, col) = (item[0].line, item[0].col);
        let mut p = Parser::new(item, semiring, &aliases);
        match (p.peek_ident(0), p.peek(1)) {
            (Some("type"), _) => {
                p.bump();
                let name = p.ident()?;
                p.expect("=")?;
                let ty = p.ty()?;
                p.finish()?;
                if aliases.insert(name.clone(), ty).is_some() {
                    return Err(SyntaxError::new(line, col, format!("type `{name}` is defined twice")));
                }
            }
            (Some(_), Some(Tok::Sym(":"))) => {
                let name = p.ident()?;
                p.expect(":")?;
                let scheme = p.scheme()?;
                p.finish()?;
                if sigs.iter().any(|s| s.0 == name) {
                    return Err(SyntaxError::new(line, col, format!("duplicate signature for `{name}`")));
                }
                sigs.push((name, scheme, line, col));
            }
            (Some(_), _) => {
                let name = p.ident()?;
                let mut params = Vec::new();
                while !p.at("=") {
                    params.push(p.binder()?);
                }
                p.expect("=")?;
                let body = p.term()?;
                p.finish()?;
                let body = params.into_iter().rev().fold(body, |b, (x, ty)| Term::Abs(x, ty, Box::new(b)));
                if eqns.iter().any(|e| e.0 == name) {
                    return Err(SyntaxError::new(line, col, format!("`{name}` is defined twice")));
                }
                eqns.push((name, body, line, col));
            }
            (None, _) => return Err(p.error_here("expected a definition")),
        }
    }

    for (name, _, line, col) in &sigs {
        if !eqns.iter().any(|e| &e.0 == name) {
            return Err(SyntaxError::new(*line, *col, format!("signature for `{name}` has no equation")));
        }
    }
    let mut defs = Vec::new();
    for (name, body, line, col) in eqns {
        let Some(idx) = sigs.iter().position(|s| s.0 == name) else {
            return Err(SyntaxError::new(line, col, format!("`{name}` has no type signature")));
        };
        let scheme = sigs[idx].1.clone();
        defs.push(Definition { name, scheme, body, line, col });
    }
    Ok(SourceProgram { semiring, defs })
}

fn read_pragma(text: &str) -> Result<(Semiring, &str, usize), SyntaxError> {
    let mut offset = 0;
    for (i, line) in text.split_inclusive('\n').enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with("--") {
            offset += line.len();
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("#semiring") {
            let name = rest.split("--").next().unwrap_or("").trim();
            let semiring = Semiring::from_name(name)
                .ok_or_else(|| SyntaxError::new(i + 1, 1, format!("unknown semiring `{name}`")))?;
            return Ok((semiring, &text[offset + line.len()..], i + 2));
        }
        break;
    }
    Ok((Semiring::default(), text, 1))
}

/// Parses a single term (no top-level items).
pub fn parse_term(text: &str, semiring: Semiring) -> Result<Term, SyntaxError> {
    let aliases = HashMap::new();
    let mut p = Parser::new(lexer::lex(text, 1)?, semiring, &aliases);
    let t = p.term()?;
    p.finish()?;
    Ok(t)
}

/// Parses a type scheme.
pub fn parse_scheme(text: &str, semiring: Semiring) -> Result<Scheme, SyntaxError> {
    let aliases = HashMap::new();
    let mut p = Parser::new(lexer::lex(text, 1)?, semiring, &aliases);
    let s = p.scheme()?;
    p.finish()?;
    Ok(s)
}

pub fn parse_type(text: &str, semiring: Semiring) -> Result<Type, SyntaxError> {
    let aliases = HashMap::new();
    let mut p = Parser::new(lexer::lex(text, 1)?, semiring, &aliases);
    let t = p.ty()?;
    p.finish()?;
    Ok(t)
}

struct Parser<'a> {
    toks: Vec<Token>,
    pos: usize,
    semiring: Semiring,
    aliases: &'a HashMap<String, Type>,
}

impl<'a> Parser<'a> {
    fn new(toks: Vec<Token>, semiring: Semiring, aliases: &'a HashMap<String, Type>) -> Parser<'a> {
        Parser { toks, pos: 0, semiring, aliases }
    }

    fn peek(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k).map(|t| &t.tok)
    }

    fn peek_ident(&self, k: usize) -> Option<&str> {
        match self.peek(k) {
            Some(Tok::Ident(s)) => Some(s),
            _ => None,
        }
    }

    fn at(&self, sym: &str) -> bool {
        matches!(self.peek(0), Some(Tok::Sym(s)) if *s == sym)
    }

    fn at_kw(&self, kw: &str) -> bool {
        self.peek_ident(0) == Some(kw)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn here(&self) -> (usize, usize) {
        match self.toks.get(self.pos).or_else(|| self.toks.last()) {
            Some(t) if self.pos < self.toks.len() => (t.line, t.col),
            Some(t) => (t.line, t.col + 1),
            None => (1, 1),
        }
    }

    fn error_here(&self, msg: impl Into<String>) -> SyntaxError {
        let (line, col) = self.here();
        let found = match self.peek(0) {
            Some(Tok::Ident(s)) => format!("`{s}`"),
            Some(Tok::Nat(n)) => format!("`{n}`"),
            Some(Tok::Float(x)) => format!("`{x}`"),
            Some(Tok::Sym(s)) => format!("`{s}`"),
            None => "end of input".to_string(),
        };
        SyntaxError::new(line, col, format!("{}, found {found}", msg.into()))
    }

    fn expect(&mut self, sym: &str) -> Result<(), SyntaxError> {
        if self.at(sym) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error_here(format!("expected `{sym}`")))
        }
    }

    /// Expects a closing delimiter, reporting the unclosed opener otherwise.
    fn close(&mut self, sym: &str, open: (usize, usize), opener: &str) -> Result<(), SyntaxError> {
        if self.at(sym) {
            self.pos += 1;
            Ok(())
        } else {
            let (l, c) = open;
            Err(SyntaxError::new(l, c, format!("unclosed `{opener}`")))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), SyntaxError> {
        if self.at_kw(kw) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error_here(format!("expected `{kw}`")))
        }
    }

    fn finish(&self) -> Result<(), SyntaxError> {
        if self.pos >= self.toks.len() {
            Ok(())
        } else {
            Err(self.error_here("unexpected token"))
        }
    }

    fn ident(&mut self) -> Result<String, SyntaxError> {
        match self.peek_ident(0) {
            Some(s) if !is_keyword(s) => {
                let s = s.to_string();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.error_here("expected an identifier")),
        }
    }

    fn nat(&mut self) -> Result<u64, SyntaxError> {
        match self.peek(0) {
            Some(Tok::Nat(n)) => {
                let n = *n;
                self.pos += 1;
                Ok(n)
            }
            _ => Err(self.error_here("expected a natural number")),
        }
    }

    // ---- types ----

    fn scheme(&mut self) -> Result<Scheme, SyntaxError> {
        let mut perm_vars = Vec::new();
        let mut name_vars = Vec::new();
        if self.at_kw("forall") {
            self.bump();
            while self.at("{") {
                let open = self.here();
                self.bump();
                loop {
                    let v = self.ident()?;
                    self.expect(":")?;
                    match self.peek_ident(0) {
                        Some("Permission") => perm_vars.push(v),
                        Some("Name") => name_vars.push(v),
                        _ => return Err(self.error_here("expected `Permission` or `Name`")),
                    }
                    self.bump();
                    if self.at(",") {
                        self.bump();
                    } else {
                        break;
                    }
                }
                self.close("}", open, "{")?;
            }
            self.expect(".")?;
        }
        let ty = self.ty()?;
        Ok(Scheme { perm_vars, name_vars, ty })
    }

    fn ty(&mut self) -> Result<Type, SyntaxError> {
        if self.at_kw("exists") {
            self.bump();
            let id = self.ident()?;
            self.expect(".")?;
            return Ok(Type::exists(id, self.ty()?));
        }
        let a = self.tensor_ty()?;
        if self.at("-o") {
            self.bump();
            let b = self.ty()?;
            return Ok(Type::fun(a, b));
        }
        Ok(a)
    }

    fn tensor_ty(&mut self) -> Result<Type, SyntaxError> {
        let a = self.prefix_ty()?;
        if self.at("*") {
            self.bump();
            let b = self.tensor_ty()?;
            return Ok(Type::tensor(a, b));
        }
        Ok(a)
    }

    fn prefix_ty(&mut self) -> Result<Type, SyntaxError> {
        if self.at("*") {
            self.bump();
            return Ok(Type::unique(self.prefix_ty()?));
        }
        if self.at("&") {
            self.bump();
            let p = self.perm()?;
            return Ok(Type::Borrow(p, Box::new(self.prefix_ty()?)));
        }
        if self.at_kw("exists") {
            return self.ty();
        }
        let mut a = self.atom_ty()?;
        while self.at("[") {
            let open = self.here();
            self.bump();
            let r = self.grade()?;
            self.close("]", open, "[")?;
            a = Type::graded(r, a);
        }
        Ok(a)
    }

    fn atom_ty(&mut self) -> Result<Type, SyntaxError> {
        if self.at("(") {
            let open = self.here();
            self.bump();
            let t = self.ty()?;
            self.close(")", open, "(")?;
            return Ok(t);
        }
        let Some(name) = self.peek_ident(0).map(str::to_string) else {
            return Err(self.error_here("expected a type"));
        };
        self.bump();
        match name.as_str() {
            "Unit" => Ok(Type::Unit),
            "Nat" => Ok(Type::Nat),
            "Float" => Ok(Type::Float),
            "Array" => {
                let id = self.ident()?;
                if !self.at_kw("Float") {
                    return Err(self.error_here("arrays hold `Float`"));
                }
                self.bump();
                Ok(Type::array(id))
            }
            "Ref" => {
                let id = self.ident()?;
                let a = self.atom_ty()?;
                Ok(Type::Res(ResKind::Ref, id, Box::new(a)))
            }
            other => match self.aliases.get(other) {
                Some(t) => Ok(t.clone()),
                None => {
                    self.pos -= 1;
                    Err(self.error_here("unknown type"))
                }
            },
        }
    }

    fn perm(&mut self) -> Result<PermExpr, SyntaxError> {
        if self.at("*") {
            self.bump();
            return Ok(PermExpr::star());
        }
        if let Some(Tok::Nat(_)) = self.peek(0) {
            let (line, col) = self.here();
            let n = self.nat()?;
            let d = if self.at("/") {
                self.bump();
                self.nat()?
            } else {
                1
            };
            if d == 0 {
                return Err(SyntaxError::new(line, col, "permission denominator is zero"));
            }
            let q = BigRational::new(BigInt::from(n), BigInt::from(d));
            return Permission::from_rational(q)
                .map(PermExpr::Lit)
                .map_err(|e| SyntaxError::new(line, col, e.to_string()));
        }
        Ok(PermExpr::Var(self.ident()?))
    }

    fn grade(&mut self) -> Result<Grade, SyntaxError> {
        let (line, col) = self.here();
        let lo = self.nat()?;
        if self.at("..") {
            self.bump();
            let hi = self.nat()?;
            return self.semiring.interval(lo, hi).map_err(|e| SyntaxError::new(line, col, e.to_string()));
        }
        Ok(self.semiring.nat(lo))
    }

    // ---- terms ----

    fn binder(&mut self) -> Result<(String, Option<Type>), SyntaxError> {
        if self.at("(") {
            let open = self.here();
            self.bump();
            let x = self.ident()?;
            self.expect(":")?;
            let ty = self.ty()?;
            self.close(")", open, "(")?;
            return Ok((x, Some(ty)));
        }
        Ok((self.ident()?, None))
    }

    fn term(&mut self) -> Result<Term, SyntaxError> {
        if self.at("\\") {
            self.bump();
            let mut binders = vec![self.binder()?];
            while !self.at("->") {
                binders.push(self.binder()?);
            }
            self.expect("->")?;
            let body = self.term()?;
            return Ok(binders.into_iter().rev().fold(body, |b, (x, ty)| Term::Abs(x, ty, Box::new(b))));
        }
        if self.at_kw("let") {
            return self.let_term();
        }
        if self.at_kw("unpack") {
            self.bump();
            let open = self.here();
            self.expect("<")?;
            let id = self.ident()?;
            self.expect(",")?;
            let x = self.ident()?;
            self.close(">", open, "<")?;
            self.expect("=")?;
            let t1 = self.term()?;
            self.expect_kw("in")?;
            let t2 = self.term()?;
            return Ok(Term::unpack(id, x, t1, t2));
        }
        self.app_term()
    }

    fn let_term(&mut self) -> Result<Term, SyntaxError> {
        self.expect_kw("let")?;
        // `let (x, y) =` and `let () =`
        if self.at("(") {
            let open = self.here();
            self.bump();
            if self.at(")") {
                self.bump();
                self.expect("=")?;
                let t1 = self.term()?;
                self.expect_kw("in")?;
                return Ok(Term::let_unit(t1, self.term()?));
            }
            let x = self.ident()?;
            self.expect(",")?;
            let y = self.ident()?;
            self.close(")", open, "(")?;
            self.expect("=")?;
            let t1 = self.term()?;
            self.expect_kw("in")?;
            return Ok(Term::let_pair(x, y, t1, self.term()?));
        }
        if self.at("[") {
            let open = self.here();
            self.bump();
            let x = self.ident()?;
            self.close("]", open, "[")?;
            let ann = if self.at(":") {
                self.bump();
                Some(self.ty()?)
            } else {
                None
            };
            self.expect("=")?;
            let t1 = self.term()?;
            self.expect_kw("in")?;
            return Ok(Term::let_box(x, ann, t1, self.term()?));
        }
        if self.at("*") {
            self.bump();
            let var = self.ident()?;
            self.expect("=")?;
            self.expect_kw("clone")?;
            let source = self.term()?;
            self.expect_kw("as")?;
            let open = self.here();
            self.expect("<")?;
            let mut ids = Vec::new();
            if !self.at(">") {
                ids.push(self.ident()?);
                while self.at(",") {
                    self.bump();
                    ids.push(self.ident()?);
                }
            }
            self.close(">", open, "<")?;
            self.expect_kw("in")?;
            let body = self.term()?;
            return Ok(Term::Clone { var, ids, payload: None, source: Box::new(source), body: Box::new(body) });
        }
        let x = self.ident()?;
        let ann = if self.at(":") {
            self.bump();
            Some(self.ty()?)
        } else {
            None
        };
        self.expect("=")?;
        let t1 = self.term()?;
        self.expect_kw("in")?;
        let t2 = self.term()?;
        Ok(Term::app(Term::Abs(x, ann, Box::new(t2)), t1))
    }

    fn starts_atom(&self) -> bool {
        match self.peek(0) {
            Some(Tok::Nat(_)) | Some(Tok::Float(_)) => true,
            Some(Tok::Sym(s)) => matches!(*s, "(" | "["),
            Some(Tok::Ident(s)) => s == "pack" || !is_keyword(s) || Prim::from_name(s).is_some(),
            None => false,
        }
    }

    fn app_term(&mut self) -> Result<Term, SyntaxError> {
        let mut head = match self.peek_ident(0) {
            Some("withBorrow") => {
                self.bump();
                let f = self.atom()?;
                let t = self.atom()?;
                Term::with_borrow(f, t)
            }
            Some(kw @ ("split" | "join" | "push" | "pull" | "share")) => {
                let kw = kw.to_string();
                self.bump();
                let mut t = self.atom()?;
                if kw == "join" && self.starts_atom() {
                    t = Term::pair(t, self.atom()?);
                }
                match kw.as_str() {
                    "split" => Term::split(t),
                    "join" => Term::join(t),
                    "push" => Term::push(t),
                    "pull" => Term::pull(t),
                    _ => Term::share(t),
                }
            }
            _ => self.atom()?,
        };
        while self.starts_atom() {
            let arg = self.atom()?;
            head = Term::app(head, arg);
        }
        Ok(head)
    }

    fn atom(&mut self) -> Result<Term, SyntaxError> {
        let (line, col) = self.here();
        match self.peek(0).cloned() {
            Some(Tok::Nat(n)) => {
                self.bump();
                Ok(Term::Nat(n))
            }
            Some(Tok::Float(x)) => {
                self.bump();
                Ok(Term::Float(x))
            }
            Some(Tok::Sym("(")) => {
                self.bump();
                if self.at(")") {
                    self.bump();
                    return Ok(Term::Unit);
                }
                let t = self.term()?;
                if self.at(",") {
                    self.bump();
                    let u = self.term()?;
                    self.close(")", (line, col), "(")?;
                    return Ok(Term::pair(t, u));
                }
                if self.at(":") {
                    self.bump();
                    let ty = self.ty()?;
                    self.close(")", (line, col), "(")?;
                    return Ok(Term::Ann(Box::new(t), ty));
                }
                self.close(")", (line, col), "(")?;
                Ok(t)
            }
            Some(Tok::Sym("[")) => {
                self.bump();
                let t = self.term()?;
                self.close("]", (line, col), "[")?;
                Ok(Term::promote(t))
            }
            Some(Tok::Ident(s)) if s == "pack" => {
                self.bump();
                let open = self.here();
                self.expect("<")?;
                let id = self.ident()?;
                self.expect(",")?;
                let t = self.term()?;
                self.close(">", open, "<")?;
                Ok(Term::pack(id, t))
            }
            Some(Tok::Ident(s)) => {
                if let Some(p) = Prim::from_name(&s) {
                    self.bump();
                    return Ok(Term::Prim(p));
                }
                Ok(Term::Var(self.ident()?))
            }
            _ => Err(self.error_here("expected a term")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn term(s: &str) -> Term {
        parse_term(s, Semiring::NatOrdered).unwrap()
    }

    #[test]
    fn single_definition() {
        let p = parse_program("main : Unit\nmain = ()").unwrap();
        assert_eq!(p.defs.len(), 1);
        assert_eq!(p.main().unwrap().body, Term::Unit);
        assert_eq!(p.semiring, Semiring::NatOrdered);
    }

    #[test]
    fn persimmon_shape() {
        let src = "persimmon c = withBorrow (\\b -> let (x, y) = split b   in\n  let     x' = observe x in\n  let      b = join (x', y) in b) c";
        let t = term(src.split_once('=').unwrap().1);
        let Term::WithBorrow(f, c) = t else { panic!("expected withBorrow") };
        assert_eq!(*c, Term::var("c"));
        let Term::Abs(_, _, body) = *f else { panic!("expected lambda") };
        let Term::LetPair(_, _, scrut, _) = *body else { panic!("expected let pair") };
        assert_eq!(*scrut, Term::split(Term::var("b")));
    }

    #[test]
    fn unclosed_bracket_is_reported_at_the_bracket() {
        let err = parse_term("let [x = t", Semiring::NatOrdered).unwrap_err();
        assert_eq!((err.line, err.col), (1, 5));
        assert!(err.message.contains("unclosed"));
    }

    #[test]
    fn pragma_and_intervals() {
        let p = parse_program("#semiring interval\nf : Unit [0..1] -o Unit\nf x = ()\n").unwrap();
        assert_eq!(p.semiring, Semiring::Interval);
        let Type::Fun(a, _) = &p.defs[0].scheme.ty else { panic!() };
        assert_eq!(**a, Type::graded(Semiring::Interval.interval(0, 1).unwrap(), Type::Unit));
        assert!(parse_program("f : Unit [0..1]\nf = ()").is_err());
    }

    #[test]
    fn types_and_permissions() {
        let t = parse_type("& 1/2 Nat", Semiring::NatOrdered).unwrap();
        assert_eq!(t, Type::borrow(Permission::ratio(1, 2).unwrap(), Type::Nat));
        let t = parse_type("* (Ref r Float * Array a Float)", Semiring::NatOrdered).unwrap();
        assert_eq!(t.free_ids(), vec!["r".to_string(), "a".to_string()]);
        assert!(parse_type("& 3/2 Nat", Semiring::NatOrdered).is_err());
        let s = parse_scheme("forall {p : Permission} . & p Nat -o & p Nat", Semiring::NatOrdered).unwrap();
        assert_eq!(s.perm_vars, vec!["p".to_string()]);
    }

    #[test]
    fn aliases_and_column_one_items() {
        let src = "type C = Ref r Float\nf : * C -o * C\nf c =\n  c\nmain : Unit\nmain = ()";
        let p = parse_program(src).unwrap();
        assert_eq!(p.defs.len(), 2);
        assert_eq!(p.get("f").unwrap().scheme.ty.free_ids(), vec!["r".to_string()]);
    }

    #[test]
    fn missing_pieces() {
        assert!(parse_program("f : Unit").is_err());
        assert!(parse_program("f = ()").is_err());
        assert!(parse_program("#semiring bogus\nf : Unit\nf = ()").is_err());
    }

    #[test]
    fn runtime_forms_are_not_surface_syntax() {
        assert!(parse_term("*x", Semiring::NatOrdered).is_err());
        assert!(term("unborrow x").is_user_writable());
    }
}

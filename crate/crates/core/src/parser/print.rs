use std::fmt::Write;

use crate::ast::{PermExpr, ResKind, Scheme, Term, Type};
use crate::grade::Permission;

use super::SourceProgram;

const TY_FUN: u8 = 0;
const TY_TENSOR: u8 = 1;
const TY_PREFIX: u8 = 2;
const TY_POSTFIX: u8 = 3;
const TY_ATOM: u8 = 4;

pub fn print_type(ty: &Type) -> String {
    let mut s = String::new();
    ty_at(ty, TY_FUN, &mut s);
    s
}

pub fn print_scheme(s: &Scheme) -> String {
    let mut out = String::new();
    if !s.is_mono() {
        let binders: Vec<String> = s
            .perm_vars
            .iter()
            .map(|p| format!("{p} : Permission"))
            .chain(s.name_vars.iter().map(|n| format!("{n} : Name")))
            .collect();
        write!(out, "forall {{{}}} . ", binders.join(", ")).unwrap();
    }
    out.push_str(&print_type(&s.ty));
    out
}

fn ty_level(ty: &Type) -> u8 {
    match ty {
        Type::Fun(..) | Type::Exists(..) => TY_FUN,
        Type::Tensor(..) => TY_TENSOR,
        Type::Borrow(..) => TY_PREFIX,
        Type::Graded(..) => TY_POSTFIX,
        _ => TY_ATOM,
    }
}

fn ty_at(ty: &Type, min: u8, out: &mut String) {
    if ty_level(ty) < min {
        out.push('(');
        ty_at(ty, TY_FUN, out);
        out.push(')');
        return;
    }
    match ty {
        Type::Fun(a, b) => {
            ty_at(a, TY_TENSOR, out);
            out.push_str(" -o ");
            ty_at(b, TY_FUN, out);
        }
        Type::Exists(id, a) => {
            write!(out, "exists {id} . ").unwrap();
            ty_at(a, TY_FUN, out);
        }
        Type::Tensor(a, b) => {
            ty_at(a, TY_PREFIX, out);
            out.push_str(" * ");
            ty_at(b, TY_TENSOR, out);
        }
        Type::Borrow(PermExpr::Lit(Permission::Star), a) => {
            out.push_str("* ");
            ty_at(a, TY_PREFIX, out);
        }
        Type::Borrow(p, a) => {
            write!(out, "& {p} ").unwrap();
            ty_at(a, TY_PREFIX, out);
        }
        Type::Graded(r, a) => {
            let min = if matches!(**a, Type::Graded(..)) { TY_POSTFIX } else { TY_ATOM };
            ty_at(a, min, out);
            write!(out, " [{r}]").unwrap();
        }
        Type::Unit => out.push_str("Unit"),
        Type::Nat => out.push_str("Nat"),
        Type::Float => out.push_str("Float"),
        Type::Res(ResKind::Array, id, _) => write!(out, "Array {id} Float").unwrap(),
        Type::Res(ResKind::Ref, id, a) => {
            write!(out, "Ref {id} ").unwrap();
            ty_at(a, TY_ATOM, out);
        }
    }
}

const TM_TOP: u8 = 0;
const TM_APP: u8 = 1;
const TM_ATOM: u8 = 2;

/// Prints a term on one line. Runtime forms print as `*t`, `*{p} t`,
/// `unborrow t` and `#refN`; these do not parse back.
pub fn print_term(t: &Term) -> String {
    let mut s = String::new();
    tm_at(t, TM_TOP, &mut s);
    s
}

fn tm_level(t: &Term) -> u8 {
    match t {
        Term::Abs(..) | Term::LetPair(..) | Term::LetUnit(..) | Term::LetBox(..) | Term::Unpack(..) | Term::Clone { .. } => {
            TM_TOP
        }
        Term::App(f, _) if matches!(**f, Term::Abs(..)) => TM_TOP,
        Term::App(..)
        | Term::WithBorrow(..)
        | Term::Split(_)
        | Term::Join(_)
        | Term::Push(_)
        | Term::Pull(_)
        | Term::Share(..)
        | Term::Uniq(..)
        | Term::Unborrow(_) => TM_APP,
        _ => TM_ATOM,
    }
}

fn tm_at(t: &Term, min: u8, out: &mut String) {
    if tm_level(t) < min {
        out.push('(');
        tm_at(t, TM_TOP, out);
        out.push(')');
        return;
    }
    match t {
        Term::Var(x) => out.push_str(x),
        Term::Abs(x, ty, body) => {
            out.push('\\');
            binder(x, ty.as_ref(), out);
            out.push_str(" -> ");
            tm_at(body, TM_TOP, out);
        }
        Term::App(f, a) => {
            if let Term::Abs(x, ty, body) = &**f {
                write!(out, "let {x}").unwrap();
                if let Some(ty) = ty {
                    write!(out, " : {}", print_type(ty)).unwrap();
                }
                out.push_str(" = ");
                tm_at(a, TM_TOP, out);
                out.push_str(" in ");
                tm_at(body, TM_TOP, out);
            } else {
                // `join a b` would read back as a two-argument join
                let min = if matches!(**f, Term::Join(_)) { TM_ATOM } else { TM_APP };
                tm_at(f, min, out);
                out.push(' ');
                tm_at(a, TM_ATOM, out);
            }
        }
        Term::Pair(a, b) => {
            out.push('(');
            tm_at(a, TM_TOP, out);
            out.push_str(", ");
            tm_at(b, TM_TOP, out);
            out.push(')');
        }
        Term::LetPair(x, y, t1, t2) => {
            write!(out, "let ({x}, {y}) = ").unwrap();
            tm_at(t1, TM_TOP, out);
            out.push_str(" in ");
            tm_at(t2, TM_TOP, out);
        }
        Term::Unit => out.push_str("()"),
        Term::LetUnit(t1, t2) => {
            out.push_str("let () = ");
            tm_at(t1, TM_TOP, out);
            out.push_str(" in ");
            tm_at(t2, TM_TOP, out);
        }
        Term::Promote(_, t) => {
            out.push('[');
            tm_at(t, TM_TOP, out);
            out.push(']');
        }
        Term::LetBox(x, ty, t1, t2) => {
            write!(out, "let [{x}]").unwrap();
            if let Some(ty) = ty {
                write!(out, " : {}", print_type(ty)).unwrap();
            }
            out.push_str(" = ");
            tm_at(t1, TM_TOP, out);
            out.push_str(" in ");
            tm_at(t2, TM_TOP, out);
        }
        Term::Pack(id, t) => {
            write!(out, "pack <{id}, ").unwrap();
            tm_at(t, TM_TOP, out);
            out.push('>');
        }
        Term::Unpack(id, x, t1, t2) => {
            write!(out, "unpack <{id}, {x}> = ").unwrap();
            tm_at(t1, TM_TOP, out);
            out.push_str(" in ");
            tm_at(t2, TM_TOP, out);
        }
        Term::WithBorrow(f, a) => {
            out.push_str("withBorrow ");
            tm_at(f, TM_ATOM, out);
            out.push(' ');
            tm_at(a, TM_ATOM, out);
        }
        Term::Split(a) => keyword("split", a, out),
        Term::Join(a) => keyword("join", a, out),
        Term::Push(a) => keyword("push", a, out),
        Term::Pull(a) => keyword("pull", a, out),
        Term::Share(_, a) => keyword("share", a, out),
        Term::Clone { var, ids, source, body, .. } => {
            write!(out, "let *{var} = clone ").unwrap();
            tm_at(source, TM_TOP, out);
            write!(out, " as <{}> in ", ids.join(", ")).unwrap();
            tm_at(body, TM_TOP, out);
        }
        Term::Nat(n) => write!(out, "{n}").unwrap(),
        Term::Float(x) => out.push_str(&float_literal(*x)),
        Term::Prim(p) => out.push_str(p.name()),
        Term::Ann(t, ty) => {
            out.push('(');
            tm_at(t, TM_TOP, out);
            write!(out, " : {})", print_type(ty)).unwrap();
        }
        Term::Uniq(Permission::Star, t) => {
            out.push('*');
            tm_at(t, TM_ATOM, out);
        }
        Term::Uniq(p, t) => {
            write!(out, "*{{{p}}} ").unwrap();
            tm_at(t, TM_ATOM, out);
        }
        Term::Unborrow(t) => keyword("unborrow", t, out),
        Term::Ref(r) => write!(out, "{r}").unwrap(),
    }
}

fn binder(x: &str, ty: Option<&Type>, out: &mut String) {
    match ty {
        Some(ty) => write!(out, "({x} : {})", print_type(ty)).unwrap(),
        None => out.push_str(x),
    }
}

fn keyword(kw: &str, arg: &Term, out: &mut String) {
    out.push_str(kw);
    out.push(' ');
    tm_at(arg, TM_ATOM, out);
}

fn float_literal(x: f64) -> String {
    let s = format!("{x:?}");
    if s.contains(['.', 'e', 'E']) || !x.is_finite() {
        s
    } else {
        format!("{s}.0")
    }
}

/// Canonical layout: pragma, then one block per definition.
pub fn print_program(p: &SourceProgram) -> String {
    let mut out = format!("#semiring {}\n", p.semiring.name());
    for d in &p.defs {
        writeln!(out, "\n{} : {}", d.name, print_scheme(&d.scheme)).unwrap();
        writeln!(out, "{} =\n  {}", d.name, print_term(&d.body)).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grade::Semiring;

    #[test]
    fn spec_examples() {
        assert_eq!(print_term(&Term::promote(Term::Unit)), "[()]");
        assert_eq!(print_type(&Type::borrow(Permission::ratio(1, 2).unwrap(), Type::Nat)), "& 1/2 Nat");
        assert_eq!(print_type(&Type::unique(Type::Unit)), "* Unit");
    }

    #[test]
    fn precedence() {
        let s = Semiring::NatOrdered;
        let ty = Type::fun(Type::fun(Type::Unit, Type::Unit), Type::graded(s.nat(2), Type::unique(Type::Nat)));
        assert_eq!(print_type(&ty), "(Unit -o Unit) -o (* Nat) [2]");
        let t = Term::app(Term::var("f"), Term::app(Term::var("g"), Term::var("x")));
        assert_eq!(print_term(&t), "f (g x)");
        assert_eq!(print_term(&Term::let_in("x", Term::Unit, Term::var("x"))), "let x = () in x");
    }

    #[test]
    fn runtime_forms() {
        use crate::ast::RefName;
        let t = Term::unborrow(Term::uniq(Permission::ratio(1, 2).unwrap(), Term::Ref(RefName(3))));
        assert_eq!(print_term(&t), "unborrow (*{1/2} #ref3)");
        assert_eq!(print_term(&Term::uniq(Permission::Star, Term::Ref(RefName(0)))), "*#ref0");
        assert_eq!(float_literal(2.0), "2.0");
    }
}

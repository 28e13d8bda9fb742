use super::SyntaxError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Nat(u64),
    Float(f64),
    Sym(&'static str),
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

// longest first, so that `->` wins over `-`
const SYMBOLS: [&str; 20] = [
    "->", "-o", "..", "\\", "*", "&", "(", ")", ",", "[", "]", "<", ">", "=", ":", ";", ".", "/", "{", "}",
];

fn is_ident_start(c: char) -> bool {
    c.is_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '\''
}

pub fn lex(src: &str, first_line: usize) -> Result<Vec<Token>, SyntaxError> {
    let mut out = Vec::new();
    for (i, line) in src.lines().enumerate() {
        lex_line(line, first_line + i, &mut out)?;
    }
    Ok(out)
}

fn lex_line(line: &str, lineno: usize, out: &mut Vec<Token>) -> Result<(), SyntaxError> {
    let chars: Vec<char> = line.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '-' && chars.get(i + 1) == Some(&'-') {
            break;
        }
        if is_ident_start(c) {
            let start = i;
            while i < chars.len() && is_ident_char(chars[i]) {
                i += 1;
            }
            out.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), line: lineno, col });
            continue;
        }
        if c.is_ascii_digit() {
            let (tok, next) = lex_number(&chars, i).map_err(|m| SyntaxError::new(lineno, col, m))?;
            out.push(Token { tok, line: lineno, col });
            i = next;
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            Some(s) => {
                out.push(Token { tok: Tok::Sym(s), line: lineno, col });
                i += s.len();
            }
            None => return Err(SyntaxError::new(lineno, col, format!("unexpected character `{c}`"))),
        }
    }
    Ok(())
}

fn lex_number(chars: &[char], start: usize) -> Result<(Tok, usize), String> {
    let digits = |mut i: usize| {
        while i < chars.len() && chars[i].is_ascii_digit() {
            i += 1;
        }
        i
    };
    let mut i = digits(start);
    let mut float = false;
    // a single dot followed by a digit; `..` is the interval separator
    if chars.get(i) == Some(&'.') && chars.get(i + 1).is_some_and(|c| c.is_ascii_digit()) {
        i = digits(i + 1);
        float = true;
    }
    if matches!(chars.get(i), Some('e') | Some('E')) {
        let mut j = i + 1;
        if matches!(chars.get(j), Some('+') | Some('-')) {
            j += 1;
        }
        if chars.get(j).is_some_and(|c| c.is_ascii_digit()) {
            i = digits(j);
            float = true;
        }
    }
    let text: String = chars[start..i].iter().collect();
    let tok = if float {
        Tok::Float(text.parse().map_err(|_| format!("malformed number `{text}`"))?)
    } else {
        Tok::Nat(text.parse().map_err(|_| format!("number `{text}` is too large"))?)
    };
    Ok((tok, i))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        lex(s, 1).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn numbers_and_intervals() {
        assert_eq!(toks("0..1"), vec![Tok::Nat(0), Tok::Sym(".."), Tok::Nat(1)]);
        assert_eq!(toks("0.5"), vec![Tok::Float(0.5)]);
        assert_eq!(toks("1e-3"), vec![Tok::Float(1e-3)]);
        assert_eq!(toks("1/2"), vec![Tok::Nat(1), Tok::Sym("/"), Tok::Nat(2)]);
    }

    #[test]
    fn arrows_and_comments() {
        assert_eq!(
            toks("\\x' -> x' -o y -- trailing"),
            vec![
                Tok::Sym("\\"),
                Tok::Ident("x'".into()),
                Tok::Sym("->"),
                Tok::Ident("x'".into()),
                Tok::Sym("-o"),
                Tok::Ident("y".into())
            ]
        );
    }

    #[test]
    fn positions() {
        let t = lex("a\n  b", 1).unwrap();
        assert_eq!((t[1].line, t[1].col), (2, 3));
        assert!(lex("a $ b", 1).is_err());
    }
}

//! Tokenizer for `.dl` source.

use super::ParseError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Tok {
    Ident(String),
    Var(String),
    Int(i128),
    Str(String),
    LParen,
    RParen,
    Comma,
    Dot,
    If,
    Colon,
    Plus,
    Minus,
    Star,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    Bang,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Var(s) => format!("variable `{s}`"),
            Tok::Int(i) => format!("integer `{i}`"),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Dot => "`.`".into(),
            Tok::If => "`:-`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Lt => "`<`".into(),
            Tok::Le => "`<=`".into(),
            Tok::Gt => "`>`".into(),
            Tok::Ge => "`>=`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Ne => "`!=`".into(),
            Tok::Bang => "`!`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

fn ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '\''
}

pub(crate) fn tokenize(text: &str, origin: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, col, message: String| ParseError::Syntax {
        origin: origin.to_string(),
        line,
        col,
        message,
    };
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let advance = |n: usize, i: &mut usize, col: &mut usize| {
            *i += n;
            *col += n;
        };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            advance(1, &mut i, &mut col);
            continue;
        }
        if c == '%' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let next = chars.get(i + 1).copied();
        let simple = match c {
            '(' => Some((Tok::LParen, 1)),
            ')' => Some((Tok::RParen, 1)),
            ',' => Some((Tok::Comma, 1)),
            '.' => Some((Tok::Dot, 1)),
            '+' => Some((Tok::Plus, 1)),
            '-' => Some((Tok::Minus, 1)),
            '*' => Some((Tok::Star, 1)),
            ':' if next == Some('-') => Some((Tok::If, 2)),
            ':' => Some((Tok::Colon, 1)),
            '←' => Some((Tok::If, 1)),
            '<' if next == Some('=') => Some((Tok::Le, 2)),
            '<' | '⟨' => Some((Tok::Lt, 1)),
            '>' if next == Some('=') => Some((Tok::Ge, 2)),
            '>' | '⟩' => Some((Tok::Gt, 1)),
            '=' if next == Some('<') => Some((Tok::Le, 2)),
            '=' => Some((Tok::Eq, 1)),
            '!' if next == Some('=') => Some((Tok::Ne, 2)),
            '!' | '¬' => Some((Tok::Bang, 1)),
            '≤' => Some((Tok::Le, 1)),
            '≥' => Some((Tok::Ge, 1)),
            '≠' => Some((Tok::Ne, 1)),
            _ => None,
        };
        if let Some((tok, n)) = simple {
            out.push(Token { tok, line: tl, col: tc });
            advance(n, &mut i, &mut col);
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let digits: String = chars[start..i].iter().collect();
            col += i - start;
            let value: i128 = digits
                .parse()
                .map_err(|_| err(tl, tc, format!("integer literal `{digits}` is out of range")))?;
            if value > i64::MAX as i128 + 1 {
                return Err(err(tl, tc, format!("integer literal `{digits}` is out of range")));
            }
            out.push(Token { tok: Tok::Int(value), line: tl, col: tc });
            continue;
        }
        if c == '"' {
            let mut s = String::new();
            i += 1;
            col += 1;
            loop {
                match chars.get(i) {
                    None | Some('\n') => return Err(err(tl, tc, "unterminated string".into())),
                    Some('"') => {
                        i += 1;
                        col += 1;
                        break;
                    }
                    Some('\\') => {
                        let esc = match chars.get(i + 1) {
                            Some('n') => '\n',
                            Some('t') => '\t',
                            Some('"') => '"',
                            Some('\\') => '\\',
                            _ => return Err(err(line, col, "invalid escape in string".into())),
                        };
                        s.push(esc);
                        i += 2;
                        col += 2;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        i += 1;
                        col += 1;
                    }
                }
            }
            out.push(Token { tok: Tok::Str(s), line: tl, col: tc });
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && ident_char(chars[i]) {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            col += i - start;
            let tok = if c.is_uppercase() || c == '_' {
                Tok::Var(word)
            } else {
                Tok::Ident(word)
            };
            out.push(Token { tok, line: tl, col: tc });
            continue;
        }
        return Err(err(tl, tc, format!("unexpected character `{c}`")));
    }
    out.push(Token { tok: Tok::Eof, line, col });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s, "<inline>").unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn operators_and_unicode_aliases() {
        assert_eq!(
            toks("a :- b ≤ 1, c ≥ 2, D ≠ E, ¬f."),
            vec![
                Tok::Ident("a".into()),
                Tok::If,
                Tok::Ident("b".into()),
                Tok::Le,
                Tok::Int(1),
                Tok::Comma,
                Tok::Ident("c".into()),
                Tok::Ge,
                Tok::Int(2),
                Tok::Comma,
                Tok::Var("D".into()),
                Tok::Ne,
                Tok::Var("E".into()),
                Tok::Comma,
                Tok::Bang,
                Tok::Ident("f".into()),
                Tok::Dot,
                Tok::Eof
            ]
        );
    }

    #[test]
    fn comments_and_positions() {
        let t = tokenize("% hi\n  p(X).", "<inline>").unwrap();
        assert_eq!((t[0].line, t[0].col), (2, 3));
    }

    #[test]
    fn primes_in_labels() {
        assert_eq!(toks("r2'")[0], Tok::Ident("r2'".into()));
    }
}

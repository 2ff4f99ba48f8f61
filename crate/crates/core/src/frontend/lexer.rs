use super::ast::Span;
use super::FrontendError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(u32),
    KwInt,
    KwVoid,
    KwIf,
    KwElse,
    KwFor,
    KwWhile,
    KwReturn,
    /// A `#pragma` line; holds the text after `pragma`.
    Pragma(String),
    Punct(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

// Longest first so that `<<=`-free maximal munch works with a linear scan.
const PUNCTS: &[&str] = &[
    "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "++", "--", "+=", "-=", "*=", "/=", "%=", "(", ")", "{", "}",
    "[", "]", ";", ",", "=", "<", ">", "+", "-", "*", "/", "%", "!", "~", "&", "|", "^",
];

pub fn tokenize(src: &str) -> Result<Vec<Token>, FrontendError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line = 1u32;
    let mut line_start = 0usize;
    let mut at_line_start = true;
    while i < bytes.len() {
        let c = bytes[i];
        let span = Span::new(line, (i - line_start + 1) as u32);
        match c {
            b'\n' => {
                line += 1;
                i += 1;
                line_start = i;
                at_line_start = true;
                continue;
            }
            b' ' | b'\t' | b'\r' => {
                i += 1;
                continue;
            }
            b'/' if bytes.get(i + 1) == Some(&b'/') => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
                continue;
            }
            b'/' if bytes.get(i + 1) == Some(&b'*') => {
                i += 2;
                loop {
                    if i + 1 >= bytes.len() {
                        return Err(FrontendError::syntax(span, "unterminated comment"));
                    }
                    if bytes[i] == b'*' && bytes[i + 1] == b'/' {
                        i += 2;
                        break;
                    }
                    if bytes[i] == b'\n' {
                        line += 1;
                        line_start = i + 1;
                    }
                    i += 1;
                }
                continue;
            }
            b'#' => {
                if !at_line_start {
                    return Err(FrontendError::syntax(span, "`#` must start a line"));
                }
                let end = src[i..].find('\n').map_or(bytes.len(), |n| i + n);
                let text = src[i + 1..end].trim();
                let rest = text.strip_prefix("pragma").filter(|r| r.is_empty() || r.starts_with(char::is_whitespace));
                match rest {
                    Some(rest) => out.push(Token { tok: Tok::Pragma(rest.trim().to_string()), span }),
                    None => {
                        let word = text.split_whitespace().next().unwrap_or("");
                        return Err(FrontendError::UnknownDirective {
                            line: span.line,
                            col: span.col,
                            name: format!("#{word}"),
                        });
                    }
                }
                i = end;
                continue;
            }
            _ => {}
        }
        at_line_start = false;
        if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let text = &src[start..i];
            let value: u32 =
                text.parse().map_err(|_| FrontendError::syntax(span, format!("integer literal `{text}` too large")))?;
            out.push(Token { tok: Tok::Int(value), span });
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            let tok = match &src[start..i] {
                "int" => Tok::KwInt,
                "void" => Tok::KwVoid,
                "if" => Tok::KwIf,
                "else" => Tok::KwElse,
                "for" => Tok::KwFor,
                "while" => Tok::KwWhile,
                "return" => Tok::KwReturn,
                word => Tok::Ident(word.to_string()),
            };
            out.push(Token { tok, span });
            continue;
        }
        match PUNCTS.iter().find(|p| src[i..].starts_with(**p)) {
            Some(p) => {
                out.push(Token { tok: Tok::Punct(p), span });
                i += p.len();
            }
            None => {
                let ch = src[i..].chars().next().unwrap_or('?');
                return Err(FrontendError::syntax(span, format!("unexpected character `{ch}`")));
            }
        }
    }
    let eof = Span::new(line, (i - line_start + 1) as u32);
    out.push(Token { tok: Tok::Eof, span: eof });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(src: &str) -> Vec<Tok> {
        tokenize(src).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn basic_tokens() {
        assert_eq!(
            toks("int x = a<<2; // hi\n/* c */ y++;"),
            vec![
                Tok::KwInt,
                Tok::Ident("x".into()),
                Tok::Punct("="),
                Tok::Ident("a".into()),
                Tok::Punct("<<"),
                Tok::Int(2),
                Tok::Punct(";"),
                Tok::Ident("y".into()),
                Tok::Punct("++"),
                Tok::Punct(";"),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn pragma_line() {
        let t = tokenize("  #pragma omp critical\nx = 1;").unwrap();
        assert_eq!(t[0].tok, Tok::Pragma("omp critical".into()));
        assert_eq!(t[1].span.line, 2);
    }

    #[test]
    fn preprocessor_rejected() {
        let err = tokenize("#include <stdio.h>\n").unwrap_err();
        assert!(matches!(err, FrontendError::UnknownDirective { line: 1, .. }));
    }

    #[test]
    fn spans_track_lines() {
        let t = tokenize("a\n  b").unwrap();
        assert_eq!((t[1].span.line, t[1].span.col), (2, 3));
    }
}

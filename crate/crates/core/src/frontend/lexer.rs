//! Tokenizer for the analyzed scripting-language subset.
//!
//! Indentation-sensitive: emits `Indent`/`Dedent` tokens from the leading
//! whitespace of each logical line. Newlines inside brackets are suppressed,
//! which is how multi-line call argument lists stay one logical line.

use crate::error::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Number(String),
    Str(String),
    Newline,
    Indent,
    Dedent,
    Eof,

    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Comma,
    Colon,
    Dot,

    Assign,
    PlusEq,
    MinusEq,
    StarEq,
    SlashEq,

    Plus,
    Minus,
    Star,
    Slash,
    DoubleSlash,
    Percent,
    DoubleStar,

    EqEq,
    NotEq,
    Lt,
    Gt,
    Le,
    Ge,

    KwDef,
    KwClass,
    KwIf,
    KwElif,
    KwElse,
    KwFor,
    KwWhile,
    KwReturn,
    KwPass,
    KwBreak,
    KwContinue,
    KwImport,
    KwFrom,
    KwAs,
    KwIn,
    KwIs,
    KwNot,
    KwAnd,
    KwOr,
    KwTrue,
    KwFalse,
    KwNone,

    /// Keywords recognized but outside the subset; the parser rejects them
    /// with the construct name.
    Unsupported(&'static str),
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub line: u32,
}

fn keyword(word: &str) -> Option<Tok> {
    Some(match word {
        "def" => Tok::KwDef,
        "class" => Tok::KwClass,
        "if" => Tok::KwIf,
        "elif" => Tok::KwElif,
        "else" => Tok::KwElse,
        "for" => Tok::KwFor,
        "while" => Tok::KwWhile,
        "return" => Tok::KwReturn,
        "pass" => Tok::KwPass,
        "break" => Tok::KwBreak,
        "continue" => Tok::KwContinue,
        "import" => Tok::KwImport,
        "from" => Tok::KwFrom,
        "as" => Tok::KwAs,
        "in" => Tok::KwIn,
        "is" => Tok::KwIs,
        "not" => Tok::KwNot,
        "and" => Tok::KwAnd,
        "or" => Tok::KwOr,
        "True" => Tok::KwTrue,
        "False" => Tok::KwFalse,
        "None" => Tok::KwNone,
        "lambda" => Tok::Unsupported("lambda"),
        "try" => Tok::Unsupported("try/except"),
        "except" => Tok::Unsupported("try/except"),
        "finally" => Tok::Unsupported("try/finally"),
        "raise" => Tok::Unsupported("raise"),
        "with" => Tok::Unsupported("with"),
        "yield" => Tok::Unsupported("yield"),
        "del" => Tok::Unsupported("del"),
        "global" => Tok::Unsupported("global"),
        "nonlocal" => Tok::Unsupported("nonlocal"),
        "assert" => Tok::Unsupported("assert"),
        _ => return None,
    })
}

pub fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let mut indents: Vec<usize> = vec![0];
    let mut depth = 0usize; // bracket nesting
    let bytes: Vec<char> = text.chars().collect();
    let mut i = 0usize;
    let mut line: u32 = 1;
    let mut at_line_start = true;

    macro_rules! push {
        ($t:expr) => {
            out.push(Token { tok: $t, line })
        };
    }

    while i < bytes.len() {
        if at_line_start && depth == 0 {
            // Measure indentation; skip blank and comment-only lines.
            let mut j = i;
            let mut col = 0usize;
            while j < bytes.len() && (bytes[j] == ' ' || bytes[j] == '\t') {
                col += if bytes[j] == '\t' { 8 } else { 1 };
                j += 1;
            }
            if j >= bytes.len() {
                break;
            }
            if bytes[j] == '\n' {
                i = j + 1;
                line += 1;
                continue;
            }
            if bytes[j] == '#' {
                while j < bytes.len() && bytes[j] != '\n' {
                    j += 1;
                }
                i = j;
                continue;
            }
            let current = *indents.last().unwrap();
            if col > current {
                indents.push(col);
                push!(Tok::Indent);
            } else if col < current {
                while *indents.last().unwrap() > col {
                    indents.pop();
                    push!(Tok::Dedent);
                }
                if *indents.last().unwrap() != col {
                    return Err(ParseError::BadIndent { line });
                }
            }
            i = j;
            at_line_start = false;
            continue;
        }

        let c = bytes[i];
        match c {
            '\n' => {
                if depth == 0 {
                    push!(Tok::Newline);
                    at_line_start = true;
                }
                line += 1;
                i += 1;
            }
            ' ' | '\t' | '\r' => {
                i += 1;
            }
            '#' => {
                while i < bytes.len() && bytes[i] != '\n' {
                    i += 1;
                }
            }
            '\\' if i + 1 < bytes.len() && bytes[i + 1] == '\n' => {
                // explicit line continuation
                line += 1;
                i += 2;
            }
            '(' => {
                depth += 1;
                push!(Tok::LParen);
                i += 1;
            }
            ')' => {
                depth = depth.saturating_sub(1);
                push!(Tok::RParen);
                i += 1;
            }
            '[' => {
                depth += 1;
                push!(Tok::LBracket);
                i += 1;
            }
            ']' => {
                depth = depth.saturating_sub(1);
                push!(Tok::RBracket);
                i += 1;
            }
            '{' => {
                depth += 1;
                push!(Tok::LBrace);
                i += 1;
            }
            '}' => {
                depth = depth.saturating_sub(1);
                push!(Tok::RBrace);
                i += 1;
            }
            ',' => {
                push!(Tok::Comma);
                i += 1;
            }
            ':' => {
                if i + 1 < bytes.len() && bytes[i + 1] == '=' {
                    return Err(ParseError::SyntaxOutsideSubset {
                        line,
                        construct: "walrus operator".into(),
                    });
                }
                push!(Tok::Colon);
                i += 1;
            }
            '.' => {
                push!(Tok::Dot);
                i += 1;
            }
            '@' => {
                return Err(ParseError::SyntaxOutsideSubset {
                    line,
                    construct: "decorator".into(),
                });
            }
            ';' => {
                return Err(ParseError::SyntaxOutsideSubset {
                    line,
                    construct: "semicolon statement separator".into(),
                });
            }
            '=' => {
                if i + 1 < bytes.len() && bytes[i + 1] == '=' {
                    push!(Tok::EqEq);
                    i += 2;
                } else {
                    push!(Tok::Assign);
                    i += 1;
                }
            }
            '!' => {
                if i + 1 < bytes.len() && bytes[i + 1] == '=' {
                    push!(Tok::NotEq);
                    i += 2;
                } else {
                    return Err(ParseError::Malformed {
                        line,
                        detail: "stray `!`".into(),
                    });
                }
            }
            '<' => {
                if i + 1 < bytes.len() && bytes[i + 1] == '=' {
                    push!(Tok::Le);
                    i += 2;
                } else {
                    push!(Tok::Lt);
                    i += 1;
                }
            }
            '>' => {
                if i + 1 < bytes.len() && bytes[i + 1] == '=' {
                    push!(Tok::Ge);
                    i += 2;
                } else {
                    push!(Tok::Gt);
                    i += 1;
                }
            }
            '+' => {
                if i + 1 < bytes.len() && bytes[i + 1] == '=' {
                    push!(Tok::PlusEq);
                    i += 2;
                } else {
                    push!(Tok::Plus);
                    i += 1;
                }
            }
            '-' => {
                if i + 1 < bytes.len() && bytes[i + 1] == '=' {
                    push!(Tok::MinusEq);
                    i += 2;
                } else {
                    push!(Tok::Minus);
                    i += 1;
                }
            }
            '*' => {
                if i + 1 < bytes.len() && bytes[i + 1] == '=' {
                    push!(Tok::StarEq);
                    i += 2;
                } else if i + 1 < bytes.len() && bytes[i + 1] == '*' {
                    push!(Tok::DoubleStar);
                    i += 2;
                } else {
                    push!(Tok::Star);
                    i += 1;
                }
            }
            '/' => {
                if i + 1 < bytes.len() && bytes[i + 1] == '=' {
                    push!(Tok::SlashEq);
                    i += 2;
                } else if i + 1 < bytes.len() && bytes[i + 1] == '/' {
                    push!(Tok::DoubleSlash);
                    i += 2;
                } else {
                    push!(Tok::Slash);
                    i += 1;
                }
            }
            '%' => {
                push!(Tok::Percent);
                i += 1;
            }
            '\'' | '"' => {
                let (s, consumed, newlines) = lex_string(&bytes[i..], line)?;
                push!(Tok::Str(s));
                line += newlines;
                i += consumed;
            }
            c if c.is_ascii_digit() => {
                let mut j = i;
                let mut seen_dot = false;
                while j < bytes.len()
                    && (bytes[j].is_ascii_digit()
                        || (bytes[j] == '.' && !seen_dot && j + 1 < bytes.len() && bytes[j + 1] != '.'))
                {
                    if bytes[j] == '.' {
                        seen_dot = true;
                    }
                    j += 1;
                }
                // exponent
                if j < bytes.len() && (bytes[j] == 'e' || bytes[j] == 'E') {
                    let mut k = j + 1;
                    if k < bytes.len() && (bytes[k] == '+' || bytes[k] == '-') {
                        k += 1;
                    }
                    if k < bytes.len() && bytes[k].is_ascii_digit() {
                        while k < bytes.len() && bytes[k].is_ascii_digit() {
                            k += 1;
                        }
                        j = k;
                    }
                }
                let text: String = bytes[i..j].iter().collect();
                push!(Tok::Number(text));
                i = j;
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_alphanumeric() || bytes[j] == '_') {
                    j += 1;
                }
                let word: String = bytes[i..j].iter().collect();
                // f-string / raw-string / byte-string prefixes
                if j < bytes.len()
                    && (bytes[j] == '\'' || bytes[j] == '"')
                    && matches!(word.as_str(), "f" | "F" | "rb" | "br" | "b" | "B" | "r" | "R" | "fr" | "rf")
                {
                    return Err(ParseError::SyntaxOutsideSubset {
                        line,
                        construct: format!("{}-prefixed string literal", word),
                    });
                }
                match keyword(&word) {
                    Some(Tok::Unsupported(name)) => {
                        return Err(ParseError::SyntaxOutsideSubset {
                            line,
                            construct: name.into(),
                        })
                    }
                    Some(t) => push!(t),
                    None => push!(Tok::Ident(word)),
                }
                i = j;
            }
            other => {
                return Err(ParseError::Malformed {
                    line,
                    detail: format!("unexpected character `{}`", other),
                });
            }
        }
    }

    if out.last().map(|t| t.tok != Tok::Newline).unwrap_or(false) {
        out.push(Token {
            tok: Tok::Newline,
            line,
        });
    }
    while indents.len() > 1 {
        indents.pop();
        out.push(Token {
            tok: Tok::Dedent,
            line,
        });
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
    });
    Ok(out)
}

/// Lex a string literal starting at `chars[0]` (a quote). Returns the string
/// content, chars consumed, and newline count (triple-quoted strings span
/// lines).
fn lex_string(chars: &[char], line: u32) -> Result<(String, usize, u32), ParseError> {
    let quote = chars[0];
    let triple = chars.len() >= 3 && chars[1] == quote && chars[2] == quote;
    let mut s = String::new();
    let mut newlines = 0u32;
    let mut i = if triple { 3 } else { 1 };
    loop {
        if i >= chars.len() {
            return Err(ParseError::Malformed {
                line,
                detail: "unterminated string literal".into(),
            });
        }
        let c = chars[i];
        if triple {
            if c == quote && i + 2 < chars.len() + 1 && chars.get(i + 1) == Some(&quote) && chars.get(i + 2) == Some(&quote) {
                return Ok((s, i + 3, newlines));
            }
            if c == '\n' {
                newlines += 1;
            }
            s.push(c);
            i += 1;
        } else {
            if c == quote {
                return Ok((s, i + 1, newlines));
            }
            if c == '\n' {
                return Err(ParseError::Malformed {
                    line,
                    detail: "newline in string literal".into(),
                });
            }
            if c == '\\' && i + 1 < chars.len() {
                let esc = chars[i + 1];
                s.push(match esc {
                    'n' => '\n',
                    't' => '\t',
                    '\\' => '\\',
                    '\'' => '\'',
                    '"' => '"',
                    other => other,
                });
                i += 2;
            } else {
                s.push(c);
                i += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indentation_tokens() {
        let toks = lex("def f(x):\n    return x\n").unwrap();
        let kinds: Vec<&Tok> = toks.iter().map(|t| &t.tok).collect();
        assert!(kinds.contains(&&Tok::Indent));
        assert!(kinds.contains(&&Tok::Dedent));
    }

    #[test]
    fn newline_suppressed_in_brackets() {
        let toks = lex("x = f(a,\n      b)\n").unwrap();
        let newlines = toks.iter().filter(|t| t.tok == Tok::Newline).count();
        assert_eq!(newlines, 1);
    }

    #[test]
    fn decorator_rejected_with_line() {
        let err = lex("x = 1\n@wrap\ndef f():\n    pass\n").unwrap_err();
        match err {
            ParseError::SyntaxOutsideSubset { line, construct } => {
                assert_eq!(line, 2);
                assert_eq!(construct, "decorator");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn fstring_rejected() {
        assert!(matches!(
            lex("x = f\"{y}\"\n"),
            Err(ParseError::SyntaxOutsideSubset { .. })
        ));
    }

    #[test]
    fn triple_quoted_string() {
        let toks = lex("s = '''a\nb'''\n").unwrap();
        assert!(toks
            .iter()
            .any(|t| matches!(&t.tok, Tok::Str(s) if s == "a\nb")));
    }
}

//! Tokenizer for the Python subset understood by the stub interpreter.

use super::value::PyErr;

#[derive(Debug, Clone, PartialEq)]
pub enum FPart {
    Lit(String),
    /// Expression source plus optional `!r` conversion and format spec.
    Expr {
        src: String,
        repr: bool,
        spec: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Name(String),
    Int(i64),
    Float(f64),
    Str(String),
    FStr(Vec<FPart>),
    Op(&'static str),
    Newline,
    Indent,
    Dedent,
    Eof,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
}

const OPS: [&str; 39] = [
    "**=", "//=", "==", "!=", "<=", ">=", "+=", "-=", "*=", "/=", "%=", "**", "//", "->", "(", ")", "[", "]", "{", "}",
    ",", ":", ".", ";", "=", "+", "-", "*", "/", "%", "<", ">", "@", "&", "|", "^", "~", "!", "\\",
];

pub fn syntax_error(line: usize, detail: &str) -> PyErr {
    PyErr::new("SyntaxError", format!("{detail} (line {line})"))
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, PyErr> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut indents = vec![0usize];
    let mut depth = 0usize;
    let mut i = 0;
    let mut line = 1;
    let mut at_line_start = true;

    while i < chars.len() {
        if at_line_start && depth == 0 {
            let mut col = 0;
            let mut j = i;
            while j < chars.len() && (chars[j] == ' ' || chars[j] == '\t') {
                col += if chars[j] == '\t' { 8 - col % 8 } else { 1 };
                j += 1;
            }
            // Blank and comment-only lines do not affect indentation.
            if j >= chars.len() || chars[j] == '\n' || chars[j] == '#' || chars[j] == '\r' {
                while j < chars.len() && chars[j] != '\n' {
                    j += 1;
                }
                i = j;
                if i < chars.len() {
                    i += 1;
                    line += 1;
                }
                continue;
            }
            let top = *indents.last().expect("indent stack");
            if col > top {
                indents.push(col);
                out.push(Token { tok: Tok::Indent, line });
            } else {
                while col < *indents.last().expect("indent stack") {
                    indents.pop();
                    out.push(Token { tok: Tok::Dedent, line });
                }
                if col != *indents.last().expect("indent stack") {
                    return Err(PyErr::new(
                        "IndentationError",
                        format!("unindent does not match any outer indentation level (line {line})"),
                    ));
                }
            }
            i = j;
            at_line_start = false;
        }

        let c = chars[i];
        match c {
            '\n' => {
                if depth == 0 {
                    out.push(Token { tok: Tok::Newline, line });
                    at_line_start = true;
                }
                line += 1;
                i += 1;
            }
            ' ' | '\t' | '\r' => i += 1,
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '\\' if chars.get(i + 1) == Some(&'\n') => {
                i += 2;
                line += 1;
            }
            c if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) => {
                let start = i;
                let mut is_float = false;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '.' || chars[i] == '_') {
                    if chars[i] == '.' {
                        is_float = true;
                    }
                    if (chars[i] == 'e' || chars[i] == 'E') && !chars[start..i].starts_with(&['0', 'x']) {
                        is_float = true;
                        if matches!(chars.get(i + 1), Some('+') | Some('-')) {
                            i += 1;
                        }
                    }
                    i += 1;
                }
                let text: String = chars[start..i].iter().filter(|&&c| c != '_').collect();
                let tok = if let Some(hex) = text.strip_prefix("0x") {
                    i64::from_str_radix(hex, 16).map(Tok::Int).map_err(|_| syntax_error(line, "invalid number"))?
                } else if is_float {
                    text.parse::<f64>().map(Tok::Float).map_err(|_| syntax_error(line, "invalid number"))?
                } else {
                    text.parse::<i64>().map(Tok::Int).map_err(|_| syntax_error(line, "invalid number"))?
                };
                out.push(Token { tok, line });
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                let lower = word.to_ascii_lowercase();
                let is_prefix = matches!(lower.as_str(), "f" | "r" | "rf" | "fr" | "b" | "u");
                if is_prefix && matches!(chars.get(i), Some('"') | Some('\'')) {
                    let raw = lower.contains('r');
                    let (body, next, lines) = read_string(&chars, i, raw, line)?;
                    i = next;
                    let tok = if lower.contains('f') { Tok::FStr(split_fstring(&body, line)?) } else { Tok::Str(body) };
                    out.push(Token { tok, line });
                    line += lines;
                } else {
                    out.push(Token { tok: Tok::Name(word), line });
                }
            }
            '"' | '\'' => {
                let (body, next, lines) = read_string(&chars, i, false, line)?;
                i = next;
                out.push(Token { tok: Tok::Str(body), line });
                line += lines;
            }
            _ => {
                let rest: String = chars[i..chars.len().min(i + 3)].iter().collect();
                let op = OPS.iter().find(|op| rest.starts_with(**op)).copied();
                match op {
                    Some(op) => {
                        match op {
                            "(" | "[" | "{" => depth += 1,
                            ")" | "]" | "}" => depth = depth.saturating_sub(1),
                            _ => {}
                        }
                        out.push(Token { tok: Tok::Op(op), line });
                        i += op.chars().count();
                    }
                    None => return Err(syntax_error(line, &format!("invalid character '{c}'"))),
                }
            }
        }
    }
    if !matches!(out.last(), None | Some(Token { tok: Tok::Newline, .. })) {
        out.push(Token { tok: Tok::Newline, line });
    }
    while indents.len() > 1 {
        indents.pop();
        out.push(Token { tok: Tok::Dedent, line });
    }
    out.push(Token { tok: Tok::Eof, line });
    Ok(out)
}

/// Reads a quoted literal starting at `start`. Returns body, next index and
/// the number of newlines consumed.
fn read_string(chars: &[char], start: usize, raw: bool, line: usize) -> Result<(String, usize, usize), PyErr> {
    let quote = chars[start];
    let triple = chars.get(start + 1) == Some(&quote) && chars.get(start + 2) == Some(&quote);
    let mut i = start + if triple { 3 } else { 1 };
    let mut body = String::new();
    let mut lines = 0;
    loop {
        let Some(&c) = chars.get(i) else {
            return Err(syntax_error(line, "unterminated string literal"));
        };
        if triple {
            if c == quote && chars.get(i + 1) == Some(&quote) && chars.get(i + 2) == Some(&quote) {
                return Ok((body, i + 3, lines));
            }
        } else if c == quote {
            return Ok((body, i + 1, lines));
        } else if c == '\n' {
            return Err(syntax_error(line, "unterminated string literal"));
        }
        if c == '\n' {
            lines += 1;
        }
        if c == '\\' && !raw {
            let next = chars.get(i + 1).copied().unwrap_or('\\');
            i += 2;
            match next {
                'n' => body.push('\n'),
                't' => body.push('\t'),
                'r' => body.push('\r'),
                '0' => body.push('\0'),
                '\\' => body.push('\\'),
                '\'' => body.push('\''),
                '"' => body.push('"'),
                '\n' => lines += 1,
                'u' => {
                    let hex: String = chars.get(i..i + 4).map(|s| s.iter().collect()).unwrap_or_default();
                    let code = u32::from_str_radix(&hex, 16).map_err(|_| syntax_error(line, "bad \\u escape"))?;
                    body.push(char::from_u32(code).unwrap_or('\u{fffd}'));
                    i += 4;
                }
                other => {
                    body.push('\\');
                    body.push(other);
                }
            }
            continue;
        }
        if c == '\\' && raw {
            body.push('\\');
            if let Some(&n) = chars.get(i + 1) {
                body.push(n);
                i += 2;
                continue;
            }
        }
        body.push(c);
        i += 1;
    }
}

fn split_fstring(body: &str, line: usize) -> Result<Vec<FPart>, PyErr> {
    let chars: Vec<char> = body.chars().collect();
    let mut parts = Vec::new();
    let mut lit = String::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '{' && chars.get(i + 1) == Some(&'{') {
            lit.push('{');
            i += 2;
        } else if c == '}' && chars.get(i + 1) == Some(&'}') {
            lit.push('}');
            i += 2;
        } else if c == '{' {
            if !lit.is_empty() {
                parts.push(FPart::Lit(std::mem::take(&mut lit)));
            }
            let mut depth = 0;
            let mut j = i + 1;
            let mut quote: Option<char> = None;
            while j < chars.len() {
                let d = chars[j];
                match quote {
                    Some(q) if d == q => quote = None,
                    Some(_) => {}
                    None => match d {
                        '\'' | '"' => quote = Some(d),
                        '[' | '(' | '{' => depth += 1,
                        ']' | ')' => depth -= 1,
                        '}' if depth == 0 => break,
                        '}' => depth -= 1,
                        _ => {}
                    },
                }
                j += 1;
            }
            if j >= chars.len() {
                return Err(syntax_error(line, "f-string: expecting '}'"));
            }
            let inner: String = chars[i + 1..j].iter().collect();
            let (expr, spec) = split_top_level(&inner, ':');
            let (expr, repr) = match expr.strip_suffix("!r") {
                Some(e) => (e.to_string(), true),
                None => (expr.strip_suffix("!s").unwrap_or(&expr).to_string(), false),
            };
            parts.push(FPart::Expr { src: expr, repr, spec });
            i = j + 1;
        } else {
            lit.push(c);
            i += 1;
        }
    }
    if !lit.is_empty() {
        parts.push(FPart::Lit(lit));
    }
    Ok(parts)
}

/// Splits at the first `sep` outside brackets and quotes.
fn split_top_level(s: &str, sep: char) -> (String, Option<String>) {
    let mut depth = 0i32;
    let mut quote: Option<char> = None;
    for (idx, c) in s.char_indices() {
        match quote {
            Some(q) if c == q => quote = None,
            Some(_) => {}
            None => match c {
                '\'' | '"' => quote = Some(c),
                '[' | '(' | '{' => depth += 1,
                ']' | ')' | '}' => depth -= 1,
                c if c == sep && depth == 0 => {
                    // `!=` and `==` never appear as format separators.
                    return (s[..idx].to_string(), Some(s[idx + 1..].to_string()));
                }
                _ => {}
            },
        }
    }
    (s.to_string(), None)
}

//! Lexical analysis of action code: imports, definitions and references.
//!
//! The analysis is token-based and never fails. Statements are split on
//! newlines and semicolons outside brackets; compound headers are split from
//! an inline body at their colon.

use std::collections::BTreeSet;

use crate::env::TOOL_NAMES;
use crate::sandbox::stub::parser::is_keyword;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Name {
        text: String,
        attr: bool,
        kwarg: bool,
    },
    Op(String),
    /// String or number literal.
    Atom,
    Newline,
}

impl Tok {
    fn name(&self) -> Option<&str> {
        match self {
            Tok::Name { text, attr: false, .. } => Some(text),
            _ => None,
        }
    }

    fn is_op(&self, op: &str) -> bool {
        matches!(self, Tok::Op(o) if o == op)
    }

    fn is_word(&self, word: &str) -> bool {
        self.name() == Some(word)
    }
}

const OPS3: [&str; 5] = ["**=", "//=", ">>=", "<<=", "..."];
const OPS2: [&str; 20] = [
    "==", "!=", "<=", ">=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "@=", "**", "//", "->", ":=", "<<", ">>",
    "<>",
];
const AUG_OPS: [&str; 13] = ["+=", "-=", "*=", "/=", "//=", "%=", "**=", "&=", "|=", "^=", ">>=", "<<=", "@="];

fn is_ident_start(c: char) -> bool {
    c.is_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn lex(code: &str) -> Vec<Tok> {
    let chars: Vec<char> = code.chars().collect();
    let mut out = Vec::new();
    lex_into(&chars, &mut out, 0);
    out
}

fn push_name(out: &mut Vec<Tok>, text: String) {
    let attr = out.last().is_some_and(|t| t.is_op("."));
    out.push(Tok::Name { text, attr, kwarg: false });
}

/// Length of a string-literal prefix (`f`, `rb`, ...) at `i`, if a quote follows.
fn string_prefix(chars: &[char], i: usize) -> Option<usize> {
    for len in [0usize, 1, 2] {
        if i + len >= chars.len() {
            break;
        }
        let prefix: String = chars[i..i + len].iter().collect::<String>().to_ascii_lowercase();
        let ok = matches!(prefix.as_str(), "" | "r" | "b" | "u" | "f" | "rb" | "br" | "fr" | "rf");
        if ok && matches!(chars[i + len], '"' | '\'') {
            return Some(len);
        }
    }
    None
}

fn lex_into(chars: &[char], out: &mut Vec<Tok>, base_depth: usize) {
    let mut depth = base_depth;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c == '\\' && chars.get(i + 1) == Some(&'\n') {
            i += 2;
            continue;
        }
        if c == '\n' {
            if depth == 0 {
                out.push(Tok::Newline);
            }
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if let Some(plen) = string_prefix(chars, i) {
            let prefix: String = chars[i..i + plen].iter().collect::<String>().to_ascii_lowercase();
            i = lex_string(chars, i + plen, prefix.contains('f'), out);
            continue;
        }
        if is_ident_start(c) {
            let start = i;
            while i < chars.len() && is_ident_char(chars[i]) {
                i += 1;
            }
            push_name(out, chars[start..i].iter().collect());
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            while i < chars.len() && (is_ident_char(chars[i]) || chars[i] == '.') {
                i += 1;
            }
            out.push(Tok::Atom);
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 3)].iter().collect();
        let op = OPS3
            .iter()
            .find(|o| rest.starts_with(**o))
            .or_else(|| OPS2.iter().find(|o| rest.starts_with(**o)))
            .map(|o| o.to_string())
            .unwrap_or_else(|| c.to_string());
        i += op.chars().count();
        match op.as_str() {
            "(" | "[" | "{" => depth += 1,
            ")" | "]" | "}" => depth = depth.saturating_sub(1).max(base_depth),
            ";" if depth == 0 => {
                out.push(Tok::Newline);
                continue;
            }
            "=" if depth > 0 => {
                if let Some(Tok::Name { kwarg, attr: false, .. }) = out.last_mut() {
                    *kwarg = true;
                }
            }
            _ => {}
        }
        out.push(Tok::Op(op));
    }
}

/// Lexes a string literal starting at its opening quote; returns the index
/// after it. Replacement fields of f-strings are lexed as bracketed code.
fn lex_string(chars: &[char], start: usize, fstring: bool, out: &mut Vec<Tok>) -> usize {
    let q = chars[start];
    let triple = chars.get(start + 1) == Some(&q) && chars.get(start + 2) == Some(&q);
    let mut i = start + if triple { 3 } else { 1 };
    out.push(Tok::Atom);
    while i < chars.len() {
        let c = chars[i];
        if c == '\\' {
            i += 2;
            continue;
        }
        if triple {
            if c == q && chars.get(i + 1) == Some(&q) && chars.get(i + 2) == Some(&q) {
                return i + 3;
            }
        } else if c == q {
            return i + 1;
        } else if c == '\n' {
            return i;
        }
        if fstring && c == '{' {
            if chars.get(i + 1) == Some(&'{') {
                i += 2;
                continue;
            }
            let (expr_end, close) = replacement_field(chars, i + 1);
            out.push(Tok::Op("(".into()));
            lex_into(&chars[i + 1..expr_end], out, 1);
            out.push(Tok::Op(")".into()));
            i = close;
            continue;
        }
        i += 1;
    }
    i
}

/// End of the expression part of a replacement field starting at `i`, and
/// the index after the closing brace.
fn replacement_field(chars: &[char], mut i: usize) -> (usize, usize) {
    let mut depth = 0usize;
    let mut expr_end = None;
    while i < chars.len() {
        let c = chars[i];
        match c {
            '(' | '[' | '{' => depth += 1,
            ')' | ']' => depth = depth.saturating_sub(1),
            '}' if depth == 0 => return (expr_end.unwrap_or(i), i + 1),
            '}' => depth -= 1,
            ':' if depth == 0 && expr_end.is_none() => expr_end = Some(i),
            '!' if depth == 0 && expr_end.is_none() && chars.get(i + 1) != Some(&'=') => expr_end = Some(i),
            '\n' => return (expr_end.unwrap_or(i), i),
            _ => {}
        }
        i += 1;
    }
    (expr_end.unwrap_or(i), i)
}

/// Lexical facts about one code block.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LexReport {
    /// Statements of the form `import x` or `from x import y`.
    pub imports: usize,
    /// Names bound by imports.
    pub imported: BTreeSet<String>,
    /// Names bound by assignment, loop or `as` targets, `def` or `class`.
    pub definitions: BTreeSet<String>,
    /// Names read before any binding in this block.
    pub references: BTreeSet<String>,
    /// Every user-visible name occurrence.
    pub mentions: BTreeSet<String>,
}

impl LexReport {
    /// Names bound in this block by any means.
    pub fn bound(&self) -> impl Iterator<Item = &String> {
        self.definitions.iter().chain(self.imported.iter())
    }
}

#[derive(Default)]
struct Analyzer {
    report: LexReport,
    defined: BTreeSet<String>,
}

fn excluded(name: &str) -> bool {
    is_keyword(name) || TOOL_NAMES.contains(&name)
}

fn depth_delta(t: &Tok) -> isize {
    match t {
        Tok::Op(o) if matches!(o.as_str(), "(" | "[" | "{") => 1,
        Tok::Op(o) if matches!(o.as_str(), ")" | "]" | "}") => -1,
        _ => 0,
    }
}

/// Indices of tokens at bracket depth zero satisfying `pred`.
fn top_level(toks: &[Tok], pred: impl Fn(&Tok) -> bool) -> Vec<usize> {
    let mut depth = 0isize;
    let mut out = Vec::new();
    for (i, t) in toks.iter().enumerate() {
        if depth == 0 && pred(t) {
            out.push(i);
        }
        depth += depth_delta(t);
    }
    out
}

/// Names bound locally inside an expression: lambda parameters and
/// comprehension targets.
fn local_names(toks: &[Tok]) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut i = 0;
    while i < toks.len() {
        if toks[i].is_word("lambda") {
            i += 1;
            while i < toks.len() && !toks[i].is_op(":") {
                if let Some(n) = toks[i].name() {
                    out.insert(n.to_string());
                }
                i += 1;
            }
        } else if toks[i].is_word("for") {
            i += 1;
            while i < toks.len() && !toks[i].is_word("in") {
                if let Some(n) = toks[i].name() {
                    out.insert(n.to_string());
                }
                i += 1;
            }
        }
        i += 1;
    }
    out
}

impl Analyzer {
    fn mention(&mut self, name: &str) {
        if !excluded(name) {
            self.report.mentions.insert(name.to_string());
        }
    }

    fn reads(&mut self, toks: &[Tok]) {
        let locals = local_names(toks);
        for t in toks {
            if let Tok::Name { text, attr: false, kwarg: false } = t {
                if excluded(text) || locals.contains(text) {
                    continue;
                }
                self.mention(text);
                if !self.defined.contains(text) {
                    self.report.references.insert(text.clone());
                }
            }
        }
    }

    fn define(&mut self, name: &str) {
        if excluded(name) {
            return;
        }
        self.mention(name);
        self.report.definitions.insert(name.to_string());
        self.defined.insert(name.to_string());
    }

    fn import(&mut self, name: &str) {
        self.mention(name);
        self.report.imported.insert(name.to_string());
        self.defined.insert(name.to_string());
    }

    /// Binds plain-name targets; other target forms are reads.
    fn targets(&mut self, toks: &[Tok]) {
        let mut toks = toks;
        let wrapped = toks.len() >= 2
            && ((toks[0].is_op("(") && toks[toks.len() - 1].is_op(")"))
                || (toks[0].is_op("[") && toks[toks.len() - 1].is_op("]")));
        if wrapped && top_level(&toks[1..toks.len() - 1], |t| depth_delta(t) < 0).is_empty() {
            toks = &toks[1..toks.len() - 1];
        }
        let commas = top_level(toks, |t| t.is_op(","));
        let mut start = 0;
        for end in commas.into_iter().chain(std::iter::once(toks.len())) {
            let mut part = &toks[start..end];
            start = end + 1;
            if part.first().is_some_and(|t| t.is_op("*")) {
                part = &part[1..];
            }
            match part {
                [] => {}
                [t] if t.name().is_some() => self.define(t.name().unwrap()),
                _ if part.first().is_some_and(|t| t.is_op("(") || t.is_op("[")) => self.targets(part),
                _ => self.reads(part),
            }
        }
    }

    fn statement(&mut self, toks: &[Tok]) {
        let Some(first) = toks.first() else { return };
        let word = first.name().unwrap_or("");
        match word {
            "import" => self.import_stmt(&toks[1..]),
            "from" => self.import_from(toks),
            "def" | "class" => {
                if let Some(n) = toks.get(1).and_then(Tok::name) {
                    self.define(n);
                }
                if let Some(colon) = header_colon(toks) {
                    self.statement(&toks[colon + 1..]);
                }
            }
            "if" | "elif" | "while" | "else" | "try" | "finally" | "with" | "except" | "for" => {
                let colon = header_colon(toks).unwrap_or(toks.len());
                let header = &toks[1..colon];
                match word {
                    "for" => {
                        let in_at = top_level(header, |t| t.is_word("in")).first().copied().unwrap_or(header.len());
                        self.reads(&header[(in_at + 1).min(header.len())..]);
                        self.targets(&header[..in_at]);
                    }
                    "with" | "except" => {
                        let ats = top_level(header, |t| t.is_word("as"));
                        let mut from = 0;
                        for a in &ats {
                            self.reads(&header[from..*a]);
                            if let Some(n) = header.get(a + 1).and_then(Tok::name) {
                                self.define(n);
                            }
                            from = (a + 2).min(header.len());
                        }
                        self.reads(&header[from..]);
                    }
                    _ => self.reads(header),
                }
                if colon < toks.len() {
                    self.statement(&toks[colon + 1..]);
                }
            }
            "global" | "nonlocal" | "pass" | "break" | "continue" => {}
            _ => self.simple(toks),
        }
    }

    fn import_stmt(&mut self, toks: &[Tok]) {
        self.report.imports += 1;
        let mut start = 0;
        let commas = top_level(toks, |t| t.is_op(","));
        for end in commas.into_iter().chain(std::iter::once(toks.len())) {
            let part = &toks[start..end];
            start = end + 1;
            let bound = match part.iter().position(|t| t.is_word("as")) {
                Some(a) => part.get(a + 1).and_then(Tok::name),
                None => part.first().and_then(Tok::name),
            };
            if let Some(n) = bound {
                self.import(n);
            }
        }
    }

    fn import_from(&mut self, toks: &[Tok]) {
        let Some(imp) = toks.iter().position(|t| t.is_word("import")) else { return };
        self.report.imports += 1;
        let names: Vec<&Tok> = toks[imp + 1..].iter().filter(|t| !t.is_op("(") && !t.is_op(")")).collect();
        let mut i = 0;
        while i < names.len() {
            if let Some(n) = names[i].name() {
                if names.get(i + 1).is_some_and(|t| t.is_word("as")) {
                    if let Some(alias) = names.get(i + 2).and_then(|t| t.name()) {
                        self.import(alias);
                    }
                    i += 3;
                    continue;
                }
                self.import(n);
            }
            i += 1;
        }
    }

    fn simple(&mut self, toks: &[Tok]) {
        let lambda_at = top_level(toks, |t| t.is_word("lambda")).first().copied().unwrap_or(toks.len());
        let scan = &toks[..lambda_at];
        if let Some(&k) = top_level(scan, |t| matches!(t, Tok::Op(o) if AUG_OPS.contains(&o.as_str()))).first() {
            self.reads(&toks[k + 1..]);
            match &toks[..k] {
                [t] if t.name().is_some() => {
                    let n = t.name().unwrap().to_string();
                    self.reads(&toks[..k]);
                    self.define(&n);
                }
                target => self.reads(target),
            }
            return;
        }
        let eqs = top_level(scan, |t| t.is_op("="));
        if eqs.is_empty() {
            let bare_annotation = toks.len() > 1 && toks[0].name().is_some() && toks[1].is_op(":");
            if !bare_annotation {
                self.reads(toks);
            }
            return;
        }
        let last = *eqs.last().unwrap();
        self.reads(&toks[last + 1..]);
        let mut start = 0;
        for e in eqs {
            let mut seg = &toks[start..e];
            start = e + 1;
            if let Some(&c) = top_level(seg, |t| t.is_op(":")).first() {
                seg = &seg[..c];
            }
            self.targets(seg);
        }
    }
}

/// Index of the colon ending a compound-statement header.
fn header_colon(toks: &[Tok]) -> Option<usize> {
    let mut lambdas = 0usize;
    let mut depth = 0isize;
    for (i, t) in toks.iter().enumerate() {
        if depth == 0 {
            if t.is_word("lambda") {
                lambdas += 1;
            } else if t.is_op(":") {
                if lambdas == 0 {
                    return Some(i);
                }
                lambdas -= 1;
            }
        }
        depth += depth_delta(t);
    }
    None
}

pub fn lex_action(code: &str) -> LexReport {
    let toks = lex(code);
    let mut a = Analyzer::default();
    for stmt in toks.split(|t| *t == Tok::Newline) {
        a.statement(stmt);
    }
    a.report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(names: &[&str]) -> BTreeSet<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn import_then_use() {
        let r = lex_action("import json\nx = 1\nprint(x)");
        assert_eq!(r.imports, 1);
        assert_eq!(r.definitions, set(&["x"]));
        assert_eq!(r.imported, set(&["json"]));
        assert_eq!(r.references, set(&["print"]));
    }

    #[test]
    fn augmented_assignment_reads_and_binds() {
        let r = lex_action("x += 1");
        assert_eq!(r.definitions, set(&["x"]));
        assert_eq!(r.references, set(&["x"]));
    }

    #[test]
    fn empty_code() {
        assert_eq!(lex_action(""), LexReport::default());
    }

    #[test]
    fn import_forms() {
        let r = lex_action("import os.path, json as j\nfrom math import floor, ceil as c\n  import re\nx = 'import y'");
        assert_eq!(r.imports, 3);
        assert_eq!(r.imported, set(&["os", "j", "floor", "c", "re"]));
    }

    #[test]
    fn attributes_keywords_tools_excluded() {
        let r = lex_action("ids = json.loads(list_items())\nfinish()\nsorted(ids, key=len, reverse=True)");
        assert_eq!(r.references, set(&["json", "sorted", "len"]));
        assert!(!r.mentions.contains("loads") && !r.mentions.contains("reverse"));
    }

    #[test]
    fn subscript_targets_are_reads() {
        let r = lex_action("attrs[item_id] = json.loads(inspect(item_id))");
        assert!(r.definitions.is_empty());
        assert_eq!(r.references, set(&["attrs", "item_id", "json"]));
    }

    #[test]
    fn compound_targets() {
        let r = lex_action(
            "for i, (k, v) in enumerate(pairs):\n    total = total + v\ntry:\n    take_item(k)\nexcept Exception as e:\n    errs.append(e)",
        );
        assert_eq!(r.definitions, set(&["i", "k", "v", "total", "e"]));
        assert_eq!(r.references, set(&["enumerate", "pairs", "total", "Exception", "errs"]));
    }

    #[test]
    fn use_before_same_block_definition_counts() {
        let r = lex_action("print(y)\ny = 2\nprint(y)");
        assert!(r.references.contains("y"));
        let r = lex_action("y = y + 1");
        assert!(r.references.contains("y"));
    }

    #[test]
    fn def_lambda_and_comprehension_locals() {
        let r = lex_action(
            "def foo(items):\n    return items + items\nranked = sorted(attrs, key=lambda i: attrs[i][\"v\"])\nd = {k: w for k, w in src}",
        );
        assert_eq!(r.definitions, set(&["foo", "ranked", "d"]));
        assert_eq!(r.references, set(&["items", "sorted", "attrs", "src"]));
    }

    #[test]
    fn fstring_fields_are_code() {
        let r = lex_action("print(f\"Total: {total:.2f} {{literal}} {a['x']!r}\")");
        assert_eq!(r.references, set(&["print", "total", "a"]));
    }

    #[test]
    fn chained_and_annotated_assignment() {
        let r = lex_action("a = b = c\nn: int = 3\nx, *rest = seq\nif ok: flag = True");
        assert_eq!(r.definitions, set(&["a", "b", "n", "x", "rest", "flag"]));
        assert_eq!(r.references, set(&["c", "seq", "ok"]));
    }

    #[test]
    fn comments_strings_and_malformed_input() {
        let r = lex_action("# items = 1\ns = \"\"\"multi\nitems = 2\"\"\"\n)(]= ==");
        assert_eq!(r.definitions, set(&["s"]));
        assert!(r.references.is_empty());
        let _ = lex_action("x = (1,\n2\ny = 'unterminated\nz = f\"{");
    }
}

//! Recursive-descent parser producing [`Stmt`] trees.

use std::rc::Rc;

use super::ast::*;
use super::lexer::{syntax_error, tokenize, FPart, Tok, Token};
use super::value::PyErr;

/// Keyword arguments in call order.
type Kwargs = Vec<(String, Expr)>;

pub fn parse_program(src: &str) -> Result<Vec<Stmt>, PyErr> {
    let tokens = tokenize(src)?;
    let mut p = Parser { tokens, pos: 0 };
    let mut body = Vec::new();
    p.skip_newlines();
    while !p.at(&Tok::Eof) {
        body.extend(p.statement()?);
        p.skip_newlines();
    }
    Ok(body)
}

pub fn parse_expression(src: &str) -> Result<Expr, PyErr> {
    let tokens = tokenize(src.trim())?;
    let mut p = Parser { tokens, pos: 0 };
    let e = p.expr_list()?;
    p.skip_newlines();
    if !p.at(&Tok::Eof) {
        return Err(p.error("invalid syntax"));
    }
    Ok(e)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        let idx = (self.pos + offset).min(self.tokens.len() - 1);
        &self.tokens[idx].tok
    }

    fn line(&self) -> usize {
        self.tokens[self.pos].line
    }

    fn error(&self, detail: &str) -> PyErr {
        syntax_error(self.line(), detail)
    }

    fn advance(&mut self) -> Tok {
        let t = self.tokens[self.pos].tok.clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn at(&self, t: &Tok) -> bool {
        self.peek() == t
    }

    fn at_op(&self, op: &str) -> bool {
        matches!(self.peek(), Tok::Op(o) if *o == op)
    }

    fn at_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Name(n) if n == kw)
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if self.at_op(op) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.at_kw(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_op(&mut self, op: &str) -> Result<(), PyErr> {
        if self.eat_op(op) {
            Ok(())
        } else {
            Err(self.error(&format!("expected '{op}'")))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), PyErr> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.error(&format!("expected '{kw}'")))
        }
    }

    fn name(&mut self) -> Result<String, PyErr> {
        match self.advance() {
            Tok::Name(n) if !is_keyword(&n) => Ok(n),
            _ => Err(self.error("invalid syntax")),
        }
    }

    fn skip_newlines(&mut self) {
        while self.at(&Tok::Newline) || self.at_op(";") {
            self.advance();
        }
    }

    fn end_simple(&mut self) -> Result<(), PyErr> {
        if self.eat_op(";") {
            return Ok(());
        }
        match self.peek() {
            Tok::Newline => {
                self.advance();
                Ok(())
            }
            Tok::Eof | Tok::Dedent => Ok(()),
            _ => Err(self.error("invalid syntax")),
        }
    }

    fn statement(&mut self) -> Result<Vec<Stmt>, PyErr> {
        let stmt = match self.peek() {
            Tok::Name(n) => match n.as_str() {
                "if" => self.if_stmt()?,
                "for" => self.for_stmt()?,
                "while" => self.while_stmt()?,
                "try" => self.try_stmt()?,
                "def" => self.def_stmt()?,
                _ => return self.simple_line(),
            },
            Tok::Indent => {
                return Err(PyErr::new("IndentationError", format!("unexpected indent (line {})", self.line())))
            }
            _ => return self.simple_line(),
        };
        Ok(vec![stmt])
    }

    /// One physical line of `;`-separated simple statements.
    fn simple_line(&mut self) -> Result<Vec<Stmt>, PyErr> {
        let mut out = vec![self.simple_stmt()?];
        loop {
            if self.eat_op(";") {
                if matches!(self.peek(), Tok::Newline | Tok::Eof | Tok::Dedent) {
                    break;
                }
                out.push(self.simple_stmt()?);
                continue;
            }
            break;
        }
        self.end_simple()?;
        Ok(out)
    }

    fn simple_stmt(&mut self) -> Result<Stmt, PyErr> {
        if self.eat_kw("pass") {
            return Ok(Stmt::Pass);
        }
        if self.eat_kw("break") {
            return Ok(Stmt::Break);
        }
        if self.eat_kw("continue") {
            return Ok(Stmt::Continue);
        }
        if self.eat_kw("return") {
            if matches!(self.peek(), Tok::Newline | Tok::Eof | Tok::Dedent) || self.at_op(";") {
                return Ok(Stmt::Return(None));
            }
            return Ok(Stmt::Return(Some(self.expr_list()?)));
        }
        if self.eat_kw("raise") {
            if matches!(self.peek(), Tok::Newline | Tok::Eof | Tok::Dedent) {
                return Ok(Stmt::Raise(None));
            }
            return Ok(Stmt::Raise(Some(self.expr()?)));
        }
        if self.eat_kw("del") {
            let mut targets = vec![to_target(self.expr()?, self.line())?];
            while self.eat_op(",") {
                targets.push(to_target(self.expr()?, self.line())?);
            }
            return Ok(Stmt::Del(targets));
        }
        if self.eat_kw("import") {
            let mut names = Vec::new();
            loop {
                let module = self.dotted()?;
                let alias = if self.eat_kw("as") { Some(self.name()?) } else { None };
                names.push((module, alias));
                if !self.eat_op(",") {
                    break;
                }
            }
            return Ok(Stmt::Import(names));
        }
        if self.eat_kw("from") {
            let module = self.dotted()?;
            self.expect_kw("import")?;
            let paren = self.eat_op("(");
            let mut names = Vec::new();
            loop {
                let n = if self.eat_op("*") { "*".to_string() } else { self.name()? };
                let alias = if self.eat_kw("as") { Some(self.name()?) } else { None };
                names.push((n, alias));
                if !self.eat_op(",") || (paren && self.at_op(")")) {
                    break;
                }
            }
            if paren {
                self.expect_op(")")?;
            }
            return Ok(Stmt::FromImport(module, names));
        }
        if self.at_kw("global") || self.at_kw("nonlocal") {
            self.advance();
            self.name()?;
            while self.eat_op(",") {
                self.name()?;
            }
            return Ok(Stmt::Pass);
        }

        let line = self.line();
        let first = self.expr_list()?;
        for (op, bin) in AUG_OPS {
            if self.eat_op(op) {
                let value = self.expr_list()?;
                return Ok(Stmt::AugAssign(to_target(first, line)?, bin, value));
            }
        }
        if self.at_op("=") {
            let mut targets = vec![to_target(first, line)?];
            let mut value;
            loop {
                self.expect_op("=")?;
                value = self.expr_list()?;
                if self.at_op("=") {
                    targets.push(to_target(value, line)?);
                } else {
                    break;
                }
            }
            return Ok(Stmt::Assign(targets, value));
        }
        if self.at_op(":") {
            // Annotated assignment: `x: int = 3`.
            self.advance();
            self.expr()?;
            if self.eat_op("=") {
                let value = self.expr_list()?;
                return Ok(Stmt::Assign(vec![to_target(first, line)?], value));
            }
            return Ok(Stmt::Pass);
        }
        Ok(Stmt::Expr(first))
    }

    fn dotted(&mut self) -> Result<String, PyErr> {
        let mut s = self.name()?;
        while self.eat_op(".") {
            s.push('.');
            s.push_str(&self.name()?);
        }
        Ok(s)
    }

    fn block(&mut self) -> Result<Vec<Stmt>, PyErr> {
        self.expect_op(":")?;
        if self.at(&Tok::Newline) {
            self.advance();
            self.skip_newlines();
            if !self.at(&Tok::Indent) {
                return Err(PyErr::new(
                    "IndentationError",
                    format!("expected an indented block (line {})", self.line()),
                ));
            }
            self.advance();
            let mut body = Vec::new();
            self.skip_newlines();
            while !self.at(&Tok::Dedent) && !self.at(&Tok::Eof) {
                body.extend(self.statement()?);
                self.skip_newlines();
            }
            if self.at(&Tok::Dedent) {
                self.advance();
            }
            Ok(body)
        } else {
            self.simple_line()
        }
    }

    fn if_stmt(&mut self) -> Result<Stmt, PyErr> {
        self.expect_kw("if")?;
        let mut branches = Vec::new();
        let cond = self.expr()?;
        branches.push((cond, self.block()?));
        let mut orelse = Vec::new();
        loop {
            if self.eat_kw("elif") {
                let cond = self.expr()?;
                branches.push((cond, self.block()?));
            } else if self.eat_kw("else") {
                orelse = self.block()?;
                break;
            } else {
                break;
            }
        }
        Ok(Stmt::If(branches, orelse))
    }

    fn for_stmt(&mut self) -> Result<Stmt, PyErr> {
        self.expect_kw("for")?;
        let line = self.line();
        let target = to_target(self.target_list()?, line)?;
        self.expect_kw("in")?;
        let iter = self.expr_list()?;
        let body = self.block()?;
        if self.eat_kw("else") {
            self.block()?;
        }
        Ok(Stmt::For(target, iter, body))
    }

    fn while_stmt(&mut self) -> Result<Stmt, PyErr> {
        self.expect_kw("while")?;
        let cond = self.expr()?;
        Ok(Stmt::While(cond, self.block()?))
    }

    fn try_stmt(&mut self) -> Result<Stmt, PyErr> {
        self.expect_kw("try")?;
        let body = self.block()?;
        let mut handlers = Vec::new();
        while self.eat_kw("except") {
            let mut types = Vec::new();
            if !self.at_op(":") {
                if self.eat_op("(") {
                    loop {
                        types.push(self.dotted()?);
                        if !self.eat_op(",") {
                            break;
                        }
                    }
                    self.expect_op(")")?;
                } else {
                    types.push(self.dotted()?);
                }
            }
            let name = if self.eat_kw("as") { Some(self.name()?) } else { None };
            let body = self.block()?;
            handlers.push(ExceptClause { types, name, body });
        }
        let orelse = if self.eat_kw("else") { self.block()? } else { Vec::new() };
        let finally = if self.eat_kw("finally") { self.block()? } else { Vec::new() };
        if handlers.is_empty() && finally.is_empty() {
            return Err(self.error("expected 'except' or 'finally' block"));
        }
        Ok(Stmt::Try { body, handlers, orelse, finally })
    }

    fn def_stmt(&mut self) -> Result<Stmt, PyErr> {
        self.expect_kw("def")?;
        let name = self.name()?;
        self.expect_op("(")?;
        let params = self.params(")")?;
        self.expect_op(")")?;
        if self.eat_op("->") {
            self.expr()?;
        }
        let body = self.block()?;
        Ok(Stmt::Def(Rc::new(FuncDef { name, params, body: FuncBody::Block(body) })))
    }

    fn params(&mut self, close: &str) -> Result<Vec<(String, Option<Expr>)>, PyErr> {
        let mut params = Vec::new();
        while !self.at_op(close) {
            let n = self.name()?;
            if close == ")" && self.eat_op(":") {
                self.expr()?;
            }
            let default = if self.eat_op("=") { Some(self.expr()?) } else { None };
            params.push((n, default));
            if !self.eat_op(",") {
                break;
            }
        }
        Ok(params)
    }

    /// Comma-separated expressions; more than one becomes a tuple.
    fn expr_list(&mut self) -> Result<Expr, PyErr> {
        let first = self.expr()?;
        if !self.at_op(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.expr_end() {
                break;
            }
            items.push(self.expr()?);
        }
        Ok(Expr::Tuple(items))
    }

    /// for-loop targets stop before `in`.
    fn target_list(&mut self) -> Result<Expr, PyErr> {
        let first = self.arith()?;
        if !self.at_op(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.at_kw("in") {
                break;
            }
            items.push(self.arith()?);
        }
        Ok(Expr::Tuple(items))
    }

    fn expr_end(&self) -> bool {
        matches!(self.peek(), Tok::Newline | Tok::Eof | Tok::Dedent)
            || self.at_op("=")
            || self.at_op(")")
            || self.at_op("]")
            || self.at_op("}")
            || self.at_op(":")
            || self.at_op(";")
            || AUG_OPS.iter().any(|(op, _)| self.at_op(op))
    }

    fn expr(&mut self) -> Result<Expr, PyErr> {
        if self.eat_kw("lambda") {
            let params = self.params(":")?;
            self.expect_op(":")?;
            let body = self.expr()?;
            return Ok(Expr::Lambda(Rc::new(FuncDef { name: "<lambda>".into(), params, body: FuncBody::Expr(body) })));
        }
        let e = self.or_expr()?;
        if self.at_kw("if") {
            // Ternary; `x for x in y if c` is handled by the comprehension caller.
            let save = self.pos;
            self.advance();
            let cond = self.or_expr()?;
            if self.eat_kw("else") {
                let other = self.expr()?;
                return Ok(Expr::IfElse { cond: Box::new(cond), then: Box::new(e), other: Box::new(other) });
            }
            self.pos = save;
        }
        Ok(e)
    }

    fn or_expr(&mut self) -> Result<Expr, PyErr> {
        let mut e = self.and_expr()?;
        while self.eat_kw("or") {
            e = Expr::Or(Box::new(e), Box::new(self.and_expr()?));
        }
        Ok(e)
    }

    fn and_expr(&mut self) -> Result<Expr, PyErr> {
        let mut e = self.not_expr()?;
        while self.eat_kw("and") {
            e = Expr::And(Box::new(e), Box::new(self.not_expr()?));
        }
        Ok(e)
    }

    fn not_expr(&mut self) -> Result<Expr, PyErr> {
        if self.eat_kw("not") {
            return Ok(Expr::Not(Box::new(self.not_expr()?)));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Expr, PyErr> {
        let left = self.arith()?;
        let mut ops = Vec::new();
        loop {
            let op = if self.eat_op("==") {
                CmpOp::Eq
            } else if self.eat_op("!=") {
                CmpOp::Ne
            } else if self.eat_op("<=") {
                CmpOp::Le
            } else if self.eat_op(">=") {
                CmpOp::Ge
            } else if self.eat_op("<") {
                CmpOp::Lt
            } else if self.eat_op(">") {
                CmpOp::Gt
            } else if self.eat_kw("in") {
                CmpOp::In
            } else if self.at_kw("not") && matches!(self.peek_at(1), Tok::Name(n) if n == "in") {
                self.advance();
                self.advance();
                CmpOp::NotIn
            } else if self.eat_kw("is") {
                if self.eat_kw("not") {
                    CmpOp::IsNot
                } else {
                    CmpOp::Is
                }
            } else {
                break;
            };
            ops.push((op, self.arith()?));
        }
        if ops.is_empty() {
            Ok(left)
        } else {
            Ok(Expr::Compare(Box::new(left), ops))
        }
    }

    fn arith(&mut self) -> Result<Expr, PyErr> {
        let mut e = self.term()?;
        loop {
            let op = if self.eat_op("+") {
                BinOp::Add
            } else if self.eat_op("-") {
                BinOp::Sub
            } else {
                break;
            };
            e = Expr::Bin(op, Box::new(e), Box::new(self.term()?));
        }
        Ok(e)
    }

    fn term(&mut self) -> Result<Expr, PyErr> {
        let mut e = self.unary()?;
        loop {
            let op = if self.eat_op("*") {
                BinOp::Mul
            } else if self.eat_op("//") {
                BinOp::FloorDiv
            } else if self.eat_op("/") {
                BinOp::Div
            } else if self.eat_op("%") {
                BinOp::Mod
            } else {
                break;
            };
            e = Expr::Bin(op, Box::new(e), Box::new(self.unary()?));
        }
        Ok(e)
    }

    fn unary(&mut self) -> Result<Expr, PyErr> {
        if self.eat_op("-") {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat_op("+") {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, PyErr> {
        let base = self.postfix()?;
        if self.eat_op("**") {
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn postfix(&mut self) -> Result<Expr, PyErr> {
        let mut e = self.atom()?;
        loop {
            if self.eat_op("(") {
                let (args, kwargs) = self.call_args()?;
                e = Expr::Call { func: Box::new(e), args, kwargs };
            } else if self.eat_op("[") {
                let idx = self.subscript()?;
                self.expect_op("]")?;
                e = Expr::Subscript(Box::new(e), Box::new(idx));
            } else if self.eat_op(".") {
                let attr = match self.advance() {
                    Tok::Name(n) => n,
                    _ => return Err(self.error("invalid syntax")),
                };
                e = Expr::Attr(Box::new(e), attr);
            } else {
                break;
            }
        }
        Ok(e)
    }

    fn subscript(&mut self) -> Result<Expr, PyErr> {
        let lo = if self.at_op(":") { None } else { Some(Box::new(self.expr()?)) };
        if !self.eat_op(":") {
            let lo = lo.expect("index expression");
            if self.at_op(",") {
                let mut items = vec![*lo];
                while self.eat_op(",") {
                    if self.at_op("]") {
                        break;
                    }
                    items.push(self.expr()?);
                }
                return Ok(Expr::Tuple(items));
            }
            return Ok(*lo);
        }
        let hi = if self.at_op("]") || self.at_op(":") { None } else { Some(Box::new(self.expr()?)) };
        if self.eat_op(":") && !self.at_op("]") {
            return Err(self.error("slice steps are not supported"));
        }
        Ok(Expr::Slice(lo, hi))
    }

    fn call_args(&mut self) -> Result<(Vec<Expr>, Kwargs), PyErr> {
        let mut args = Vec::new();
        let mut kwargs = Vec::new();
        while !self.at_op(")") {
            if let (Tok::Name(n), Tok::Op("=")) = (self.peek().clone(), self.peek_at(1).clone()) {
                self.advance();
                self.advance();
                kwargs.push((n, self.expr()?));
            } else {
                let e = self.expr()?;
                if self.at_kw("for") {
                    let clauses = self.comp_clauses()?;
                    args.push(Expr::ListComp { elt: Box::new(e), clauses });
                } else {
                    args.push(e);
                }
            }
            if !self.eat_op(",") {
                break;
            }
        }
        self.expect_op(")")?;
        Ok((args, kwargs))
    }

    fn comp_clauses(&mut self) -> Result<Vec<CompClause>, PyErr> {
        let mut clauses = Vec::new();
        while self.eat_kw("for") {
            let line = self.line();
            let target = to_target(self.target_list()?, line)?;
            self.expect_kw("in")?;
            let iter = self.or_expr()?;
            let mut conds = Vec::new();
            while self.eat_kw("if") {
                conds.push(self.or_expr()?);
            }
            clauses.push(CompClause { target, iter, conds });
        }
        Ok(clauses)
    }

    fn atom(&mut self) -> Result<Expr, PyErr> {
        let line = self.line();
        match self.advance() {
            Tok::Int(i) => Ok(Expr::Int(i)),
            Tok::Float(f) => Ok(Expr::Float(f)),
            Tok::Str(s) => {
                let mut s = s;
                let mut parts: Option<Vec<FStrPart>> = None;
                loop {
                    match self.peek().clone() {
                        Tok::Str(more) => {
                            self.advance();
                            match &mut parts {
                                Some(p) => p.push(FStrPart::Lit(more)),
                                None => s.push_str(&more),
                            }
                        }
                        Tok::FStr(fp) => {
                            self.advance();
                            let p = parts.get_or_insert_with(|| vec![FStrPart::Lit(std::mem::take(&mut s))]);
                            p.extend(convert_fparts(fp, line)?);
                        }
                        _ => break,
                    }
                }
                Ok(match parts {
                    Some(p) => Expr::FStr(p),
                    None => Expr::Str(s),
                })
            }
            Tok::FStr(fp) => {
                let mut parts = convert_fparts(fp, line)?;
                while let Tok::Str(_) | Tok::FStr(_) = self.peek() {
                    match self.advance() {
                        Tok::Str(s) => parts.push(FStrPart::Lit(s)),
                        Tok::FStr(more) => parts.extend(convert_fparts(more, line)?),
                        _ => unreachable!(),
                    }
                }
                Ok(Expr::FStr(parts))
            }
            Tok::Name(n) => match n.as_str() {
                "None" => Ok(Expr::NoneLit),
                "True" => Ok(Expr::Bool(true)),
                "False" => Ok(Expr::Bool(false)),
                kw if is_keyword(kw) => Err(syntax_error(line, "invalid syntax")),
                _ => Ok(Expr::Name(n)),
            },
            Tok::Op("(") => {
                if self.eat_op(")") {
                    return Ok(Expr::Tuple(Vec::new()));
                }
                let first = self.expr()?;
                if self.at_kw("for") {
                    let clauses = self.comp_clauses()?;
                    self.expect_op(")")?;
                    return Ok(Expr::ListComp { elt: Box::new(first), clauses });
                }
                if self.eat_op(")") {
                    return Ok(first);
                }
                let mut items = vec![first];
                while self.eat_op(",") {
                    if self.at_op(")") {
                        break;
                    }
                    items.push(self.expr()?);
                }
                self.expect_op(")")?;
                Ok(Expr::Tuple(items))
            }
            Tok::Op("[") => {
                if self.eat_op("]") {
                    return Ok(Expr::List(Vec::new()));
                }
                let first = self.expr()?;
                if self.at_kw("for") {
                    let clauses = self.comp_clauses()?;
                    self.expect_op("]")?;
                    return Ok(Expr::ListComp { elt: Box::new(first), clauses });
                }
                let mut items = vec![first];
                while self.eat_op(",") {
                    if self.at_op("]") {
                        break;
                    }
                    items.push(self.expr()?);
                }
                self.expect_op("]")?;
                Ok(Expr::List(items))
            }
            Tok::Op("{") => {
                if self.eat_op("}") {
                    return Ok(Expr::Dict(Vec::new()));
                }
                let k = self.expr()?;
                if !self.eat_op(":") {
                    return Err(syntax_error(line, "set literals are not supported"));
                }
                let v = self.expr()?;
                if self.at_kw("for") {
                    let clauses = self.comp_clauses()?;
                    self.expect_op("}")?;
                    return Ok(Expr::DictComp { key: Box::new(k), value: Box::new(v), clauses });
                }
                let mut items = vec![(k, v)];
                while self.eat_op(",") {
                    if self.at_op("}") {
                        break;
                    }
                    let k = self.expr()?;
                    self.expect_op(":")?;
                    items.push((k, self.expr()?));
                }
                self.expect_op("}")?;
                Ok(Expr::Dict(items))
            }
            _ => Err(syntax_error(line, "invalid syntax")),
        }
    }
}

const AUG_OPS: [(&str, BinOp); 7] = [
    ("+=", BinOp::Add),
    ("-=", BinOp::Sub),
    ("*=", BinOp::Mul),
    ("/=", BinOp::Div),
    ("//=", BinOp::FloorDiv),
    ("%=", BinOp::Mod),
    ("**=", BinOp::Pow),
];

pub const KEYWORDS: [&str; 33] = [
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue", "def", "del",
    "elif", "else", "except", "finally", "for", "from", "global", "if", "import", "in", "is", "lambda", "nonlocal",
    "not", "or", "pass", "raise", "return", "try", "while",
];

pub fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s) || s == "with" || s == "yield"
}

fn convert_fparts(parts: Vec<FPart>, line: usize) -> Result<Vec<FStrPart>, PyErr> {
    parts
        .into_iter()
        .map(|p| match p {
            FPart::Lit(s) => Ok(FStrPart::Lit(s)),
            FPart::Expr { src, repr, spec } => {
                let expr =
                    parse_expression(&src).map_err(|e| syntax_error(line, &format!("f-string: {}", e.message)))?;
                Ok(FStrPart::Expr { expr, repr, spec })
            }
        })
        .collect()
}

fn to_target(e: Expr, line: usize) -> Result<Target, PyErr> {
    match e {
        Expr::Name(n) => Ok(Target::Name(n)),
        Expr::Tuple(items) | Expr::List(items) => {
            Ok(Target::Tuple(items.into_iter().map(|i| to_target(i, line)).collect::<Result<_, _>>()?))
        }
        Expr::Subscript(obj, idx) => Ok(Target::Subscript(*obj, *idx)),
        Expr::Attr(obj, name) => Ok(Target::Attr(*obj, name)),
        _ => Err(syntax_error(line, "cannot assign to expression")),
    }
}

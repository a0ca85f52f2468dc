//! Tree-walking evaluator.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::rc::Rc;
use std::time::Instant;

use indexmap::IndexMap;

use super::ast::*;
use super::parser::parse_program;
use super::value::*;
use crate::env::TOOL_NAMES;
use crate::pyjson;
use crate::sandbox::ToolHost;

/// Maximum nesting of user-level function calls.
const MAX_CALL_DEPTH: usize = 64;
/// Largest sequence `range`, `*` and friends will materialise.
const MAX_SEQUENCE: usize = 10_000_000;

const BUILTINS: [&str; 28] = [
    "print",
    "len",
    "sorted",
    "sum",
    "min",
    "max",
    "str",
    "int",
    "float",
    "bool",
    "list",
    "dict",
    "tuple",
    "range",
    "enumerate",
    "zip",
    "abs",
    "round",
    "repr",
    "any",
    "all",
    "isinstance",
    "reversed",
    "map",
    "filter",
    "divmod",
    "hasattr",
    "type",
];

const MODULES: [&str; 2] = ["json", "math"];

/// A lexical scope. The root scope holds the user globals.
#[derive(Debug, Default)]
pub struct Scope {
    pub vars: RefCell<IndexMap<String, Value>>,
    parent: Option<Rc<Scope>>,
}

impl Scope {
    pub fn root() -> Rc<Scope> {
        Rc::new(Scope::default())
    }

    fn child(parent: &Rc<Scope>) -> Rc<Scope> {
        Rc::new(Scope { vars: RefCell::default(), parent: Some(parent.clone()) })
    }

    fn lookup(&self, name: &str) -> Option<Value> {
        if let Some(v) = self.vars.borrow().get(name) {
            return Some(v.clone());
        }
        self.parent.as_ref().and_then(|p| p.lookup(name))
    }

    fn set(&self, name: &str, v: Value) {
        self.vars.borrow_mut().insert(name.to_string(), v);
    }
}

/// Outcome of running one block.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub output: String,
    pub result: Option<String>,
    pub error: Option<String>,
}

pub enum Flow {
    Raise(PyErr),
    Return(Value),
    Break,
    Continue,
    Timeout,
}

impl From<PyErr> for Flow {
    fn from(e: PyErr) -> Self {
        Flow::Raise(e)
    }
}

type R<T> = Result<T, Flow>;

fn raise<T>(kind: &str, msg: impl Into<String>) -> R<T> {
    Err(Flow::Raise(PyErr::new(kind, msg)))
}

fn type_err<T>(msg: impl Into<String>) -> R<T> {
    raise("TypeError", msg)
}

pub struct Interp<'a> {
    host: &'a mut dyn ToolHost,
    out: String,
    steps: u64,
    max_steps: u64,
    deadline: Option<Instant>,
    depth: usize,
    handling: Vec<PyErr>,
}

/// Parses and runs `src` against `globals`.
pub fn run_block(
    globals: &Rc<Scope>,
    src: &str,
    host: &mut dyn ToolHost,
    deadline: Option<Instant>,
    max_steps: u64,
) -> RunOutcome {
    let program = match parse_program(src) {
        Ok(p) => p,
        Err(e) => return RunOutcome { output: String::new(), result: None, error: Some(e.to_string()) },
    };
    let mut it = Interp { host, out: String::new(), steps: 0, max_steps, deadline, depth: 0, handling: Vec::new() };
    let (last, body) = match program.split_last() {
        Some((Stmt::Expr(e), rest)) => (Some(e), rest),
        _ => (None, &program[..]),
    };
    let mut run = || -> R<Option<String>> {
        it.exec_block(body, globals)?;
        match last {
            Some(e) => {
                let v = it.eval(e, globals)?;
                Ok(if matches!(v, Value::None) { None } else { Some(v.repr()) })
            }
            None => Ok(None),
        }
    };
    let res = run();
    let error = match &res {
        Ok(_) => None,
        Err(Flow::Raise(e)) => Some(e.to_string()),
        Err(Flow::Timeout) => Some("execution timeout".to_string()),
        Err(Flow::Return(_)) => Some("SyntaxError: 'return' outside function".to_string()),
        Err(Flow::Break) => Some("SyntaxError: 'break' outside loop".to_string()),
        Err(Flow::Continue) => Some("SyntaxError: 'continue' not properly in loop".to_string()),
    };
    RunOutcome { output: std::mem::take(&mut it.out), result: res.ok().flatten(), error }
}

impl Interp<'_> {
    fn tick(&mut self) -> R<()> {
        self.steps += 1;
        if self.steps > self.max_steps {
            return Err(Flow::Timeout);
        }
        if self.steps.is_multiple_of(1024) {
            if let Some(d) = self.deadline {
                if Instant::now() >= d {
                    return Err(Flow::Timeout);
                }
            }
        }
        Ok(())
    }

    fn exec_block(&mut self, body: &[Stmt], scope: &Rc<Scope>) -> R<()> {
        for s in body {
            self.exec(s, scope)?;
        }
        Ok(())
    }

    fn exec(&mut self, stmt: &Stmt, scope: &Rc<Scope>) -> R<()> {
        self.tick()?;
        match stmt {
            Stmt::Expr(e) => {
                self.eval(e, scope)?;
            }
            Stmt::Assign(targets, value) => {
                let v = self.eval(value, scope)?;
                for t in targets {
                    self.assign(t, v.clone(), scope)?;
                }
            }
            Stmt::AugAssign(target, op, value) => {
                let current = self.read_target(target, scope)?;
                let rhs = self.eval(value, scope)?;
                if let (BinOp::Add, Value::List(l)) = (op, &current) {
                    let extra = self.iterate(&rhs)?;
                    l.borrow_mut().extend(extra);
                    return Ok(());
                }
                let v = binop(*op, &current, &rhs)?;
                self.assign(target, v, scope)?;
            }
            Stmt::If(branches, orelse) => {
                for (cond, body) in branches {
                    if self.eval(cond, scope)?.truthy() {
                        return self.exec_block(body, scope);
                    }
                }
                self.exec_block(orelse, scope)?;
            }
            Stmt::For(target, iter, body) => {
                let iterable = self.eval(iter, scope)?;
                let items = self.iterate(&iterable)?;
                for item in items {
                    self.assign(target, item, scope)?;
                    match self.exec_block(body, scope) {
                        Ok(()) | Err(Flow::Continue) => {}
                        Err(Flow::Break) => break,
                        Err(other) => return Err(other),
                    }
                }
            }
            Stmt::While(cond, body) => {
                while self.eval(cond, scope)?.truthy() {
                    self.tick()?;
                    match self.exec_block(body, scope) {
                        Ok(()) | Err(Flow::Continue) => {}
                        Err(Flow::Break) => break,
                        Err(other) => return Err(other),
                    }
                }
            }
            Stmt::Try { body, handlers, orelse, finally } => {
                let mut res = self.exec_block(body, scope);
                if let Err(Flow::Raise(err)) = &res {
                    let err = err.clone();
                    if let Some(h) = self.find_handler(handlers, &err, scope)? {
                        if let Some(name) = &h.name {
                            scope.set(name, Value::Exception(Rc::new(err.clone())));
                        }
                        self.handling.push(err);
                        res = self.exec_block(&h.body, scope);
                        self.handling.pop();
                        if let Some(name) = &h.name {
                            scope.vars.borrow_mut().shift_remove(name);
                        }
                    }
                } else if res.is_ok() {
                    res = self.exec_block(orelse, scope);
                }
                if !finally.is_empty() {
                    if let Err(Flow::Timeout) = res {
                        return res;
                    }
                    self.exec_block(finally, scope)?;
                }
                res?;
            }
            Stmt::Import(names) => {
                for (module, alias) in names {
                    let m = module_value(module)?;
                    let bind = alias.as_deref().unwrap_or_else(|| module.split('.').next().unwrap_or(module));
                    scope.set(bind, m);
                }
            }
            Stmt::FromImport(module, names) => {
                let m = module_value(module)?;
                for (name, alias) in names {
                    if name == "*" {
                        return raise("ImportError", "wildcard imports are not supported");
                    }
                    let v = get_attr(&m, name).map_err(|_| {
                        PyErr::new("ImportError", format!("cannot import name '{name}' from '{module}'"))
                    })?;
                    scope.set(alias.as_deref().unwrap_or(name), v);
                }
            }
            Stmt::Def(def) => {
                let f = self.make_closure(def, scope)?;
                scope.set(&def.name, f);
            }
            Stmt::Return(e) => {
                let v = match e {
                    Some(e) => self.eval(e, scope)?,
                    None => Value::None,
                };
                return Err(Flow::Return(v));
            }
            Stmt::Raise(e) => {
                let err = match e {
                    None => match self.handling.last() {
                        Some(err) => err.clone(),
                        None => PyErr::new("RuntimeError", "No active exception to reraise"),
                    },
                    Some(e) => match self.eval(e, scope)? {
                        Value::ExcType(k) => PyErr::new(&k, ""),
                        Value::Exception(err) => (*err).clone(),
                        _ => PyErr::type_error("exceptions must derive from BaseException"),
                    },
                };
                return Err(Flow::Raise(err));
            }
            Stmt::Del(targets) => {
                for t in targets {
                    self.delete(t, scope)?;
                }
            }
            Stmt::Pass => {}
            Stmt::Break => return Err(Flow::Break),
            Stmt::Continue => return Err(Flow::Continue),
        }
        Ok(())
    }

    fn find_handler<'h>(
        &mut self,
        handlers: &'h [ExceptClause],
        err: &PyErr,
        scope: &Rc<Scope>,
    ) -> R<Option<&'h ExceptClause>> {
        for h in handlers {
            if h.types.is_empty() {
                return Ok(Some(h));
            }
            for t in &h.types {
                let kind = match t.rsplit('.').next() {
                    Some(k) if t.contains('.') => k.to_string(),
                    _ => match scope.lookup(t) {
                        Some(Value::ExcType(k)) => k.to_string(),
                        Some(_) => {
                            return type_err("catching classes that do not inherit from BaseException is not allowed")
                        }
                        None if exception_names().any(|n| n == t) => t.clone(),
                        None => return raise("NameError", format!("name '{t}' is not defined")),
                    },
                };
                if exc_matches(&err.kind, &kind) {
                    return Ok(Some(h));
                }
            }
        }
        Ok(None)
    }

    fn make_closure(&mut self, def: &Rc<FuncDef>, scope: &Rc<Scope>) -> R<Value> {
        let mut defaults = Vec::with_capacity(def.params.len());
        for (_, d) in &def.params {
            defaults.push(match d {
                Some(e) => Some(self.eval(e, scope)?),
                None => None,
            });
        }
        Ok(Value::Func(Rc::new(Closure { def: def.clone(), defaults, scope: scope.clone() })))
    }

    fn assign(&mut self, target: &Target, v: Value, scope: &Rc<Scope>) -> R<()> {
        match target {
            Target::Name(n) => scope.set(n, v),
            Target::Tuple(targets) => {
                let items = self.iterate(&v)?;
                if items.len() < targets.len() {
                    return raise(
                        "ValueError",
                        format!("not enough values to unpack (expected {}, got {})", targets.len(), items.len()),
                    );
                }
                if items.len() > targets.len() {
                    return raise("ValueError", format!("too many values to unpack (expected {})", targets.len()));
                }
                for (t, item) in targets.iter().zip(items) {
                    self.assign(t, item, scope)?;
                }
            }
            Target::Subscript(obj, idx) => {
                let container = self.eval(obj, scope)?;
                let key = self.eval(idx, scope)?;
                set_item(&container, key, v)?;
            }
            Target::Attr(obj, name) => {
                let o = self.eval(obj, scope)?;
                return raise("AttributeError", format!("'{}' object attribute '{name}' is read-only", o.type_name()));
            }
        }
        Ok(())
    }

    fn read_target(&mut self, target: &Target, scope: &Rc<Scope>) -> R<Value> {
        match target {
            Target::Name(n) => self.lookup(n, scope),
            Target::Subscript(obj, idx) => {
                let container = self.eval(obj, scope)?;
                let key = self.eval(idx, scope)?;
                Ok(get_item(&container, &key)?)
            }
            Target::Attr(obj, name) => {
                let o = self.eval(obj, scope)?;
                Ok(get_attr(&o, name)?)
            }
            Target::Tuple(_) => type_err("illegal expression for augmented assignment"),
        }
    }

    fn delete(&mut self, target: &Target, scope: &Rc<Scope>) -> R<()> {
        match target {
            Target::Name(n) => {
                if scope.vars.borrow_mut().shift_remove(n).is_none() {
                    return raise("NameError", format!("name '{n}' is not defined"));
                }
            }
            Target::Tuple(ts) => {
                for t in ts {
                    self.delete(t, scope)?;
                }
            }
            Target::Subscript(obj, idx) => {
                let container = self.eval(obj, scope)?;
                let key = self.eval(idx, scope)?;
                match &container {
                    Value::List(l) => {
                        let len = l.borrow().len();
                        let i = norm_index(&key, len, "list")?;
                        l.borrow_mut().remove(i);
                    }
                    Value::Dict(d) => {
                        let k = Key::from_value(&key)?;
                        if d.borrow_mut().shift_remove(&k).is_none() {
                            return raise("KeyError", key.repr());
                        }
                    }
                    other => return type_err(format!("'{}' object doesn't support item deletion", other.type_name())),
                }
            }
            Target::Attr(..) => return raise("AttributeError", "attribute deletion is not supported"),
        }
        Ok(())
    }

    fn lookup(&self, name: &str, scope: &Rc<Scope>) -> R<Value> {
        if let Some(v) = scope.lookup(name) {
            return Ok(v);
        }
        if let Some(t) = TOOL_NAMES.iter().find(|t| **t == name) {
            return Ok(Value::Tool(t));
        }
        if let Some(b) = BUILTINS.iter().find(|b| **b == name) {
            return Ok(Value::Builtin(b));
        }
        if let Some(e) = exception_names().find(|e| *e == name) {
            return Ok(Value::ExcType(Rc::from(e)));
        }
        raise("NameError", format!("name '{name}' is not defined"))
    }

    pub fn eval(&mut self, e: &Expr, scope: &Rc<Scope>) -> R<Value> {
        self.tick()?;
        Ok(match e {
            Expr::Name(n) => self.lookup(n, scope)?,
            Expr::Int(i) => Value::Int(*i),
            Expr::Float(f) => Value::Float(*f),
            Expr::Str(s) => Value::str(s),
            Expr::NoneLit => Value::None,
            Expr::Bool(b) => Value::Bool(*b),
            Expr::FStr(parts) => {
                let mut s = String::new();
                for p in parts {
                    match p {
                        FStrPart::Lit(l) => s.push_str(l),
                        FStrPart::Expr { expr, repr, spec } => {
                            let v = self.eval(expr, scope)?;
                            if *repr {
                                s.push_str(&v.repr());
                            } else {
                                s.push_str(&format_value(&v, spec.as_deref().unwrap_or(""))?);
                            }
                        }
                    }
                }
                Value::str(&s)
            }
            Expr::List(items) => {
                let mut out = Vec::with_capacity(items.len());
                for i in items {
                    out.push(self.eval(i, scope)?);
                }
                Value::list(out)
            }
            Expr::Tuple(items) => {
                let mut out = Vec::with_capacity(items.len());
                for i in items {
                    out.push(self.eval(i, scope)?);
                }
                Value::tuple(out)
            }
            Expr::Dict(pairs) => {
                let mut map = DictMap::new();
                for (k, v) in pairs {
                    let k = self.eval(k, scope)?;
                    let v = self.eval(v, scope)?;
                    dict_insert(&mut map, k, v)?;
                }
                Value::dict(map)
            }
            Expr::ListComp { elt, clauses } => {
                let inner = Scope::child(scope);
                let mut out = Vec::new();
                self.comprehend(clauses, &inner, &mut |it, s| {
                    out.push(it.eval(elt, s)?);
                    Ok(())
                })?;
                Value::list(out)
            }
            Expr::DictComp { key, value, clauses } => {
                let inner = Scope::child(scope);
                let mut map = DictMap::new();
                self.comprehend(clauses, &inner, &mut |it, s| {
                    let k = it.eval(key, s)?;
                    let v = it.eval(value, s)?;
                    dict_insert(&mut map, k, v)?;
                    Ok(())
                })?;
                Value::dict(map)
            }
            Expr::Attr(obj, name) => {
                let o = self.eval(obj, scope)?;
                get_attr(&o, name)?
            }
            Expr::Subscript(obj, idx) => {
                let o = self.eval(obj, scope)?;
                if let Expr::Slice(lo, hi) = &**idx {
                    let lo = match lo {
                        Some(e) => Some(self.eval(e, scope)?),
                        None => None,
                    };
                    let hi = match hi {
                        Some(e) => Some(self.eval(e, scope)?),
                        None => None,
                    };
                    slice(&o, lo.as_ref(), hi.as_ref())?
                } else {
                    let k = self.eval(idx, scope)?;
                    get_item(&o, &k)?
                }
            }
            Expr::Slice(..) => return type_err("slice outside subscript"),
            Expr::Call { func, args, kwargs } => {
                let f = self.eval(func, scope)?;
                let mut a = Vec::with_capacity(args.len());
                for x in args {
                    a.push(self.eval(x, scope)?);
                }
                let mut kw = Vec::with_capacity(kwargs.len());
                for (k, x) in kwargs {
                    kw.push((k.clone(), self.eval(x, scope)?));
                }
                self.call(&f, a, kw)?
            }
            Expr::Bin(op, l, r) => {
                let l = self.eval(l, scope)?;
                let r = self.eval(r, scope)?;
                binop(*op, &l, &r)?
            }
            Expr::Neg(x) => match self.eval(x, scope)? {
                Value::Int(i) => Value::Int(i.checked_neg().ok_or_else(overflow)?),
                Value::Bool(b) => Value::Int(-(b as i64)),
                Value::Float(f) => Value::Float(-f),
                other => return type_err(format!("bad operand type for unary -: '{}'", other.type_name())),
            },
            Expr::Not(x) => Value::Bool(!self.eval(x, scope)?.truthy()),
            Expr::And(l, r) => {
                let l = self.eval(l, scope)?;
                if !l.truthy() {
                    l
                } else {
                    self.eval(r, scope)?
                }
            }
            Expr::Or(l, r) => {
                let l = self.eval(l, scope)?;
                if l.truthy() {
                    l
                } else {
                    self.eval(r, scope)?
                }
            }
            Expr::Compare(first, rest) => {
                let mut left = self.eval(first, scope)?;
                for (op, e) in rest {
                    let right = self.eval(e, scope)?;
                    if !compare(*op, &left, &right)? {
                        return Ok(Value::Bool(false));
                    }
                    left = right;
                }
                Value::Bool(true)
            }
            Expr::IfElse { cond, then, other } => {
                if self.eval(cond, scope)?.truthy() {
                    self.eval(then, scope)?
                } else {
                    self.eval(other, scope)?
                }
            }
            Expr::Lambda(def) => self.make_closure(def, scope)?,
        })
    }

    fn comprehend(
        &mut self,
        clauses: &[CompClause],
        scope: &Rc<Scope>,
        f: &mut dyn FnMut(&mut Self, &Rc<Scope>) -> R<()>,
    ) -> R<()> {
        let Some((first, rest)) = clauses.split_first() else {
            return f(self, scope);
        };
        let iterable = self.eval(&first.iter, scope)?;
        'items: for item in self.iterate(&iterable)? {
            self.assign(&first.target, item, scope)?;
            for c in &first.conds {
                if !self.eval(c, scope)?.truthy() {
                    continue 'items;
                }
            }
            self.comprehend(rest, scope, f)?;
        }
        Ok(())
    }

    fn iterate(&mut self, v: &Value) -> R<Vec<Value>> {
        Ok(match v {
            Value::List(l) => l.borrow().clone(),
            Value::Tuple(t) => (**t).clone(),
            Value::Str(s) => s.chars().map(|c| Value::str(&c.to_string())).collect(),
            Value::Dict(d) => d.borrow().values().map(|(k, _)| k.clone()).collect(),
            other => return type_err(format!("'{}' object is not iterable", other.type_name())),
        })
    }

    pub fn call(&mut self, f: &Value, args: Vec<Value>, kwargs: Vec<(String, Value)>) -> R<Value> {
        self.tick()?;
        match f {
            Value::Func(c) => self.call_closure(c, args, kwargs),
            Value::Builtin(name) => self.call_builtin(name, args, kwargs),
            Value::Tool(name) => self.call_tool(name, args, kwargs),
            Value::Method(recv, name) => self.call_method(recv, name, args, kwargs),
            Value::ExcType(kind) => {
                no_kwargs(kind.as_ref(), &kwargs)?;
                let message = match args.len() {
                    0 => String::new(),
                    1 if &**kind == "KeyError" => args[0].repr(),
                    1 => args[0].to_str(),
                    _ => Value::tuple(args).repr(),
                };
                Ok(Value::Exception(Rc::new(PyErr::new(kind, message))))
            }
            other => type_err(format!("'{}' object is not callable", other.type_name())),
        }
    }

    fn call_closure(&mut self, c: &Rc<Closure>, args: Vec<Value>, kwargs: Vec<(String, Value)>) -> R<Value> {
        let def = &c.def;
        if args.len() > def.params.len() {
            return type_err(format!(
                "{}() takes {} positional argument{} but {} were given",
                def.name,
                def.params.len(),
                if def.params.len() == 1 { "" } else { "s" },
                args.len()
            ));
        }
        let frame = Scope::child(&c.scope);
        let mut bound: Vec<Option<Value>> = args.into_iter().map(Some).collect();
        bound.resize(def.params.len(), None);
        for (k, v) in kwargs {
            match def.params.iter().position(|(p, _)| *p == k) {
                Some(i) if bound[i].is_some() => {
                    return type_err(format!("{}() got multiple values for argument '{k}'", def.name))
                }
                Some(i) => bound[i] = Some(v),
                None => return type_err(format!("{}() got an unexpected keyword argument '{k}'", def.name)),
            }
        }
        for (i, (p, _)) in def.params.iter().enumerate() {
            let v = match bound[i].take().or_else(|| c.defaults[i].clone()) {
                Some(v) => v,
                None => return type_err(format!("{}() missing 1 required positional argument: '{p}'", def.name)),
            };
            frame.set(p, v);
        }
        if self.depth >= MAX_CALL_DEPTH {
            return raise("RecursionError", "maximum recursion depth exceeded");
        }
        self.depth += 1;
        let res = match &def.body {
            FuncBody::Expr(e) => self.eval(e, &frame),
            FuncBody::Block(body) => match self.exec_block(body, &frame) {
                Ok(()) => Ok(Value::None),
                Err(Flow::Return(v)) => Ok(v),
                Err(Flow::Break) | Err(Flow::Continue) => raise("SyntaxError", "'break' outside loop"),
                Err(other) => Err(other),
            },
        };
        self.depth -= 1;
        res
    }

    fn call_tool(&mut self, name: &str, args: Vec<Value>, kwargs: Vec<(String, Value)>) -> R<Value> {
        no_kwargs(name, &kwargs)?;
        let mut json_args = Vec::with_capacity(args.len());
        for a in &args {
            json_args.push(to_json(a)?);
        }
        match self.host.call_tool(name, &json_args) {
            Ok(Some(payload)) => Ok(Value::str(&payload)),
            Ok(None) => Ok(Value::None),
            Err(msg) => raise(crate::env::TOOL_EXCEPTION, msg),
        }
    }

    fn call_builtin(&mut self, name: &str, args: Vec<Value>, kwargs: Vec<(String, Value)>) -> R<Value> {
        let mut kw = Kwargs::new(name, kwargs);
        let v = match name {
            "print" => {
                let sep = kw.take_str("sep")?.unwrap_or_else(|| " ".into());
                let end = kw.take_str("end")?.unwrap_or_else(|| "\n".into());
                kw.take("file");
                kw.take("flush");
                let parts: Vec<String> = args.iter().map(Value::to_str).collect();
                self.out.push_str(&parts.join(&sep));
                self.out.push_str(&end);
                Value::None
            }
            "len" => {
                let [x] = arity::<1>(name, args)?;
                Value::Int(match &x {
                    Value::Str(s) => s.chars().count(),
                    Value::List(l) => l.borrow().len(),
                    Value::Tuple(t) => t.len(),
                    Value::Dict(d) => d.borrow().len(),
                    other => return type_err(format!("object of type '{}' has no len()", other.type_name())),
                } as i64)
            }
            "sorted" => {
                let [x] = arity::<1>(name, args)?;
                let key = kw.take("key");
                let reverse = kw.take("reverse").is_some_and(|v| v.truthy());
                let mut items = self.iterate(&x)?;
                self.sort_values(&mut items, key.as_ref(), reverse)?;
                Value::list(items)
            }
            "sum" => {
                if args.is_empty() || args.len() > 2 {
                    return type_err(format!("sum() takes at most 2 arguments ({} given)", args.len()));
                }
                let mut acc = args.get(1).cloned().or_else(|| kw.take("start")).unwrap_or(Value::Int(0));
                for v in self.iterate(&args[0])? {
                    acc = binop(BinOp::Add, &acc, &v)?;
                }
                acc
            }
            "min" | "max" => {
                let key = kw.take("key");
                let default = kw.take("default");
                let items = if args.len() == 1 { self.iterate(&args[0])? } else { args };
                if items.is_empty() {
                    return match default {
                        Some(d) => Ok(d),
                        None => raise("ValueError", format!("{name}() arg is an empty sequence")),
                    };
                }
                let want = if name == "min" { Ordering::Less } else { Ordering::Greater };
                let mut best = items[0].clone();
                let mut best_key = self.key_of(key.as_ref(), &best)?;
                for v in items.into_iter().skip(1) {
                    let k = self.key_of(key.as_ref(), &v)?;
                    if py_cmp(&k, &best_key)? == want {
                        best = v;
                        best_key = k;
                    }
                }
                best
            }
            "str" => match args.len() {
                0 => Value::str(""),
                _ => Value::str(&args[0].to_str()),
            },
            "repr" => {
                let [x] = arity::<1>(name, args)?;
                Value::str(&x.repr())
            }
            "int" => match args.first() {
                None => Value::Int(0),
                Some(Value::Int(i)) => Value::Int(*i),
                Some(Value::Bool(b)) => Value::Int(*b as i64),
                Some(Value::Float(f)) => {
                    if !f.is_finite() {
                        return raise("ValueError", "cannot convert float NaN or infinity to integer");
                    }
                    Value::Int(f.trunc() as i64)
                }
                Some(Value::Str(s)) => match s.trim().replace('_', "").parse::<i64>() {
                    Ok(i) => Value::Int(i),
                    Err(_) => {
                        return raise("ValueError", format!("invalid literal for int() with base 10: {}", str_repr(s)))
                    }
                },
                Some(other) => {
                    return type_err(format!(
                        "int() argument must be a string, a bytes-like object or a real number, not '{}'",
                        other.type_name()
                    ))
                }
            },
            "float" => match args.first() {
                None => Value::Float(0.0),
                Some(Value::Str(s)) => {
                    let t = s.trim().to_ascii_lowercase();
                    let parsed = match t.as_str() {
                        "inf" | "+inf" | "infinity" => Some(f64::INFINITY),
                        "-inf" | "-infinity" => Some(f64::NEG_INFINITY),
                        "nan" => Some(f64::NAN),
                        _ => t.parse::<f64>().ok(),
                    };
                    match parsed {
                        Some(f) => Value::Float(f),
                        None => {
                            return raise("ValueError", format!("could not convert string to float: {}", str_repr(s)))
                        }
                    }
                }
                Some(v) => match v.as_f64() {
                    Some(f) => Value::Float(f),
                    None => {
                        return type_err(format!(
                            "float() argument must be a string or a real number, not '{}'",
                            v.type_name()
                        ))
                    }
                },
            },
            "bool" => Value::Bool(args.first().is_some_and(Value::truthy)),
            "list" => match args.first() {
                None => Value::list(Vec::new()),
                Some(x) => Value::list(self.iterate(x)?),
            },
            "tuple" => match args.first() {
                None => Value::tuple(Vec::new()),
                Some(x) => Value::tuple(self.iterate(x)?),
            },
            "dict" => {
                let mut map = DictMap::new();
                if let Some(src) = args.first() {
                    if let Value::Dict(d) = src {
                        map = d.borrow().clone();
                    } else {
                        for pair in self.iterate(src)? {
                            let kv = self.iterate(&pair)?;
                            if kv.len() != 2 {
                                return raise("ValueError", "dictionary update sequence element has wrong length");
                            }
                            dict_insert(&mut map, kv[0].clone(), kv[1].clone())?;
                        }
                    }
                }
                for (k, v) in kw.drain() {
                    dict_insert(&mut map, Value::str(&k), v)?;
                }
                Value::dict(map)
            }
            "range" => {
                let ints: Vec<i64> = args
                    .iter()
                    .map(|a| {
                        a.as_int().ok_or_else(|| {
                            PyErr::type_error(format!("'{}' object cannot be interpreted as an integer", a.type_name()))
                        })
                    })
                    .collect::<Result<_, _>>()?;
                let (start, stop, step) = match ints.as_slice() {
                    [stop] => (0, *stop, 1),
                    [start, stop] => (*start, *stop, 1),
                    [start, stop, step] => (*start, *stop, *step),
                    _ => return type_err(format!("range expected at most 3 arguments, got {}", ints.len())),
                };
                if step == 0 {
                    return raise("ValueError", "range() arg 3 must not be zero");
                }
                let len = if step > 0 {
                    if stop > start {
                        ((stop - start - 1) / step + 1) as u64
                    } else {
                        0
                    }
                } else if start > stop {
                    ((start - stop - 1) / (-step) + 1) as u64
                } else {
                    0
                };
                if len as usize > MAX_SEQUENCE {
                    return raise("MemoryError", "range too large for the stub interpreter");
                }
                Value::list((0..len as i64).map(|i| Value::Int(start + i * step)).collect())
            }
            "enumerate" => {
                let start = kw
                    .take("start")
                    .and_then(|v| v.as_int())
                    .or_else(|| args.get(1).and_then(Value::as_int))
                    .unwrap_or(0);
                let Some(x) = args.first() else {
                    return type_err("enumerate() missing required argument 'iterable'");
                };
                let items = self.iterate(x)?;
                Value::list(
                    items
                        .into_iter()
                        .enumerate()
                        .map(|(i, v)| Value::tuple(vec![Value::Int(start + i as i64), v]))
                        .collect(),
                )
            }
            "zip" => {
                let mut cols = Vec::new();
                for a in &args {
                    cols.push(self.iterate(a)?);
                }
                let n = cols.iter().map(Vec::len).min().unwrap_or(0);
                Value::list((0..n).map(|i| Value::tuple(cols.iter().map(|c| c[i].clone()).collect())).collect())
            }
            "reversed" => {
                let [x] = arity::<1>(name, args)?;
                let mut items = self.iterate(&x)?;
                items.reverse();
                Value::list(items)
            }
            "map" => {
                if args.len() < 2 {
                    return type_err("map() must have at least two arguments.");
                }
                let f = args[0].clone();
                let mut cols = Vec::new();
                for a in &args[1..] {
                    cols.push(self.iterate(a)?);
                }
                let n = cols.iter().map(Vec::len).min().unwrap_or(0);
                let mut out = Vec::with_capacity(n);
                for i in 0..n {
                    out.push(self.call(&f, cols.iter().map(|c| c[i].clone()).collect(), Vec::new())?);
                }
                Value::list(out)
            }
            "filter" => {
                let [f, x] = arity::<2>(name, args)?;
                let mut out = Vec::new();
                for v in self.iterate(&x)? {
                    let keep = if matches!(f, Value::None) {
                        v.truthy()
                    } else {
                        self.call(&f, vec![v.clone()], Vec::new())?.truthy()
                    };
                    if keep {
                        out.push(v);
                    }
                }
                Value::list(out)
            }
            "abs" => {
                let [x] = arity::<1>(name, args)?;
                match x {
                    Value::Int(i) => Value::Int(i.checked_abs().ok_or_else(overflow)?),
                    Value::Bool(b) => Value::Int(b as i64),
                    Value::Float(f) => Value::Float(f.abs()),
                    other => return type_err(format!("bad operand type for abs(): '{}'", other.type_name())),
                }
            }
            "round" => {
                let x = args.first().cloned().unwrap_or(Value::None);
                let nd = args.get(1).cloned().or_else(|| kw.take("ndigits")).unwrap_or(Value::None);
                round(&x, &nd)?
            }
            "divmod" => {
                let [a, b] = arity::<2>(name, args)?;
                Value::tuple(vec![binop(BinOp::FloorDiv, &a, &b)?, binop(BinOp::Mod, &a, &b)?])
            }
            "any" | "all" => {
                let [x] = arity::<1>(name, args)?;
                let items = self.iterate(&x)?;
                Value::Bool(if name == "any" {
                    items.iter().any(Value::truthy)
                } else {
                    items.iter().all(Value::truthy)
                })
            }
            "isinstance" => {
                let [x, t] = arity::<2>(name, args)?;
                let types = match &t {
                    Value::Tuple(ts) => (**ts).clone(),
                    _ => vec![t.clone()],
                };
                let mut hit = false;
                for t in &types {
                    hit |= match t {
                        Value::Builtin(b) => match *b {
                            "int" => matches!(x, Value::Int(_) | Value::Bool(_)),
                            "float" => matches!(x, Value::Float(_)),
                            "bool" => matches!(x, Value::Bool(_)),
                            "str" => matches!(x, Value::Str(_)),
                            "list" => matches!(x, Value::List(_)),
                            "dict" => matches!(x, Value::Dict(_)),
                            "tuple" => matches!(x, Value::Tuple(_)),
                            _ => return type_err("isinstance() arg 2 must be a type or tuple of types"),
                        },
                        Value::ExcType(k) => matches!(&x, Value::Exception(e) if exc_matches(&e.kind, k)),
                        _ => return type_err("isinstance() arg 2 must be a type or tuple of types"),
                    };
                }
                Value::Bool(hit)
            }
            "hasattr" => {
                let [x, n] = arity::<2>(name, args)?;
                let Value::Str(n) = n else {
                    return type_err("hasattr(): attribute name must be string");
                };
                Value::Bool(get_attr(&x, &n).is_ok())
            }
            "type" => {
                let [x] = arity::<1>(name, args)?;
                match &x {
                    Value::Exception(e) => Value::ExcType(Rc::from(e.kind.as_str())),
                    other => match BUILTINS.iter().find(|b| **b == other.type_name()) {
                        Some(b) => Value::Builtin(b),
                        None => Value::str(other.type_name()),
                    },
                }
            }
            qualified => return self.call_module_fn(qualified, args, kw),
        };
        kw.finish()?;
        Ok(v)
    }

    fn call_module_fn(&mut self, name: &str, args: Vec<Value>, mut kw: Kwargs) -> R<Value> {
        let v = match name {
            "json.loads" => {
                let [x] = arity::<1>(name, args)?;
                let Value::Str(s) = x else {
                    return type_err(format!("the JSON object must be str, bytes or bytearray, not {}", x.type_name()));
                };
                match serde_json::from_str::<serde_json::Value>(&s) {
                    Ok(j) => from_json(&j),
                    Err(e) => {
                        let msg = if e.is_eof() && s.trim().is_empty() {
                            "Expecting value: line 1 column 1 (char 0)".to_string()
                        } else {
                            format!("{e}")
                        };
                        return raise("JSONDecodeError", msg);
                    }
                }
            }
            "json.dumps" => {
                let [x] = arity::<1>(name, args)?;
                let sort_keys = kw.take("sort_keys").is_some_and(|v| v.truthy());
                let indent = kw.take("indent").and_then(|v| v.as_int());
                kw.take("ensure_ascii");
                kw.take("default");
                let mut j = to_json(&x)?;
                if sort_keys {
                    sort_json_keys(&mut j);
                }
                Value::str(&match indent {
                    None => pyjson::dumps(&j),
                    Some(n) => pretty_json(&j, n.max(0) as usize),
                })
            }
            "math.floor" | "math.ceil" => {
                let [x] = arity::<1>(name, args)?;
                let f = num(&x, name)?;
                if let Value::Int(i) = x {
                    Value::Int(i)
                } else {
                    let r = if name == "math.floor" { f.floor() } else { f.ceil() };
                    if !r.is_finite() {
                        return raise("OverflowError", "cannot convert float infinity to integer");
                    }
                    Value::Int(r as i64)
                }
            }
            "math.sqrt" => {
                let [x] = arity::<1>(name, args)?;
                let f = num(&x, name)?;
                if f < 0.0 {
                    return raise("ValueError", "math domain error");
                }
                Value::Float(f.sqrt())
            }
            "math.log" => {
                let f = num(args.first().unwrap_or(&Value::None), name)?;
                if f <= 0.0 {
                    return raise("ValueError", "math domain error");
                }
                match args.get(1) {
                    Some(b) => Value::Float(f.ln() / num(b, name)?.ln()),
                    None => Value::Float(f.ln()),
                }
            }
            "math.exp" => {
                let [x] = arity::<1>(name, args)?;
                Value::Float(num(&x, name)?.exp())
            }
            "math.fabs" => {
                let [x] = arity::<1>(name, args)?;
                Value::Float(num(&x, name)?.abs())
            }
            "math.pow" => {
                let [x, y] = arity::<2>(name, args)?;
                Value::Float(num(&x, name)?.powf(num(&y, name)?))
            }
            "math.isclose" => {
                let [a, b] = arity::<2>(name, args)?;
                let rel = kw.take("rel_tol").and_then(|v| v.as_f64()).unwrap_or(1e-9);
                let abs = kw.take("abs_tol").and_then(|v| v.as_f64()).unwrap_or(0.0);
                let (a, b) = (num(&a, name)?, num(&b, name)?);
                Value::Bool(a == b || (a - b).abs() <= (rel * a.abs().max(b.abs())).max(abs))
            }
            other => return type_err(format!("'{other}' is not callable")),
        };
        kw.finish()?;
        Ok(v)
    }

    fn call_method(&mut self, recv: &Value, name: &str, args: Vec<Value>, kwargs: Vec<(String, Value)>) -> R<Value> {
        let mut kw = Kwargs::new(name, kwargs);
        let v = match recv {
            Value::List(l) => match name {
                "append" => {
                    let [x] = arity::<1>(name, args)?;
                    l.borrow_mut().push(x);
                    Value::None
                }
                "extend" => {
                    let [x] = arity::<1>(name, args)?;
                    let items = self.iterate(&x)?;
                    l.borrow_mut().extend(items);
                    Value::None
                }
                "insert" => {
                    let [i, x] = arity::<2>(name, args)?;
                    let len = l.borrow().len() as i64;
                    let i = i.as_int().ok_or_else(|| PyErr::type_error("list indices must be integers"))?;
                    let i = if i < 0 { (i + len).max(0) } else { i.min(len) };
                    l.borrow_mut().insert(i as usize, x);
                    Value::None
                }
                "pop" => {
                    let len = l.borrow().len();
                    if len == 0 {
                        return raise("IndexError", "pop from empty list");
                    }
                    let i = match args.first() {
                        Some(k) => norm_index(k, len, "pop")?,
                        None => len - 1,
                    };
                    l.borrow_mut().remove(i)
                }
                "remove" => {
                    let [x] = arity::<1>(name, args)?;
                    let pos = l.borrow().iter().position(|v| py_eq(v, &x));
                    match pos {
                        Some(p) => {
                            l.borrow_mut().remove(p);
                            Value::None
                        }
                        None => return raise("ValueError", "list.remove(x): x not in list"),
                    }
                }
                "index" => {
                    let [x] = arity::<1>(name, args)?;
                    match l.borrow().iter().position(|v| py_eq(v, &x)) {
                        Some(p) => Value::Int(p as i64),
                        None => return raise("ValueError", format!("{} is not in list", x.repr())),
                    }
                }
                "count" => {
                    let [x] = arity::<1>(name, args)?;
                    Value::Int(l.borrow().iter().filter(|v| py_eq(v, &x)).count() as i64)
                }
                "sort" => {
                    let key = kw.take("key");
                    let reverse = kw.take("reverse").is_some_and(|v| v.truthy());
                    let mut items = l.borrow().clone();
                    self.sort_values(&mut items, key.as_ref(), reverse)?;
                    *l.borrow_mut() = items;
                    Value::None
                }
                "reverse" => {
                    l.borrow_mut().reverse();
                    Value::None
                }
                "copy" => Value::list(l.borrow().clone()),
                "clear" => {
                    l.borrow_mut().clear();
                    Value::None
                }
                _ => return no_attr(recv, name),
            },
            Value::Dict(d) => match name {
                "get" => {
                    let k = Key::from_value(args.first().unwrap_or(&Value::None))?;
                    let default = args.get(1).cloned().unwrap_or(Value::None);
                    d.borrow().get(&k).map(|(_, v)| v.clone()).unwrap_or(default)
                }
                "keys" => Value::list(d.borrow().values().map(|(k, _)| k.clone()).collect()),
                "values" => Value::list(d.borrow().values().map(|(_, v)| v.clone()).collect()),
                "items" => {
                    Value::list(d.borrow().values().map(|(k, v)| Value::tuple(vec![k.clone(), v.clone()])).collect())
                }
                "setdefault" => {
                    let kv = args.first().cloned().unwrap_or(Value::None);
                    let k = Key::from_value(&kv)?;
                    let default = args.get(1).cloned().unwrap_or(Value::None);
                    let mut m = d.borrow_mut();
                    m.entry(k).or_insert((kv, default)).1.clone()
                }
                "pop" => {
                    let kv = args.first().cloned().unwrap_or(Value::None);
                    let k = Key::from_value(&kv)?;
                    let removed = d.borrow_mut().shift_remove(&k);
                    match (removed, args.get(1)) {
                        (Some((_, v)), _) => v,
                        (None, Some(default)) => default.clone(),
                        (None, None) => return raise("KeyError", kv.repr()),
                    }
                }
                "update" => {
                    if let Some(Value::Dict(other)) = args.first() {
                        let other = other.borrow().clone();
                        let mut m = d.borrow_mut();
                        for (k, (kv, v)) in other {
                            insert_keep_key(&mut m, k, kv, v);
                        }
                    } else if let Some(src) = args.first() {
                        for pair in self.iterate(src)? {
                            let kv = self.iterate(&pair)?;
                            if kv.len() != 2 {
                                return raise("ValueError", "dictionary update sequence element has wrong length");
                            }
                            dict_insert(&mut d.borrow_mut(), kv[0].clone(), kv[1].clone())?;
                        }
                    }
                    for (k, v) in kw.drain() {
                        dict_insert(&mut d.borrow_mut(), Value::str(&k), v)?;
                    }
                    Value::None
                }
                "copy" => Value::dict(d.borrow().clone()),
                "clear" => {
                    d.borrow_mut().clear();
                    Value::None
                }
                _ => return no_attr(recv, name),
            },
            Value::Str(s) => self.str_method(s, name, args, &mut kw)?,
            _ => return no_attr(recv, name),
        };
        kw.finish()?;
        Ok(v)
    }

    fn str_method(&mut self, s: &str, name: &str, args: Vec<Value>, kw: &mut Kwargs) -> R<Value> {
        let str_arg = |i: usize| -> Result<Option<String>, PyErr> {
            match args.get(i) {
                None | Some(Value::None) => Ok(None),
                Some(Value::Str(a)) => Ok(Some(a.to_string())),
                Some(other) => Err(PyErr::type_error(format!("must be str, not {}", other.type_name()))),
            }
        };
        Ok(match name {
            "join" => {
                let [x] = arity::<1>(name, args)?;
                let mut parts = Vec::new();
                for (i, v) in self.iterate(&x)?.into_iter().enumerate() {
                    match v {
                        Value::Str(p) => parts.push(p.to_string()),
                        other => {
                            return type_err(format!(
                                "sequence item {i}: expected str instance, {} found",
                                other.type_name()
                            ))
                        }
                    }
                }
                Value::str(&parts.join(s))
            }
            "split" => {
                let sep = str_arg(0)?;
                let parts: Vec<Value> = match sep {
                    None => s.split_whitespace().map(Value::str).collect(),
                    Some(sep) if sep.is_empty() => return raise("ValueError", "empty separator"),
                    Some(sep) => s.split(sep.as_str()).map(Value::str).collect(),
                };
                Value::list(parts)
            }
            "splitlines" => Value::list(s.lines().map(Value::str).collect()),
            "strip" | "lstrip" | "rstrip" => {
                let chars = str_arg(0)?;
                let pred = |c: char| match &chars {
                    Some(set) => set.contains(c),
                    None => c.is_whitespace(),
                };
                Value::str(match name {
                    "strip" => s.trim_matches(pred),
                    "lstrip" => s.trim_start_matches(pred),
                    _ => s.trim_end_matches(pred),
                })
            }
            "startswith" | "endswith" => {
                let prefixes: Vec<String> = match args.first() {
                    Some(Value::Str(p)) => vec![p.to_string()],
                    Some(Value::Tuple(t)) => t.iter().map(Value::to_str).collect(),
                    _ => return type_err(format!("{name} first arg must be str or a tuple of str")),
                };
                Value::Bool(prefixes.iter().any(|p| {
                    if name == "startswith" {
                        s.starts_with(p.as_str())
                    } else {
                        s.ends_with(p.as_str())
                    }
                }))
            }
            "lower" => Value::str(&s.to_lowercase()),
            "upper" => Value::str(&s.to_uppercase()),
            "replace" => {
                let (Some(a), Some(b)) = (str_arg(0)?, str_arg(1)?) else {
                    return type_err("replace expected 2 arguments");
                };
                Value::str(&s.replace(a.as_str(), &b))
            }
            "find" | "index" => {
                let Some(sub) = str_arg(0)? else {
                    return type_err(format!("{name} expected a str argument"));
                };
                match s.find(sub.as_str()) {
                    Some(b) => Value::Int(s[..b].chars().count() as i64),
                    None if name == "find" => Value::Int(-1),
                    None => return raise("ValueError", "substring not found"),
                }
            }
            "count" => {
                let Some(sub) = str_arg(0)? else {
                    return type_err("count expected a str argument");
                };
                Value::Int(if sub.is_empty() {
                    s.chars().count() as i64 + 1
                } else {
                    s.matches(sub.as_str()).count() as i64
                })
            }
            "isdigit" => Value::Bool(!s.is_empty() && s.chars().all(|c| c.is_ascii_digit())),
            "isalpha" => Value::Bool(!s.is_empty() && s.chars().all(char::is_alphabetic)),
            "format" => {
                let named: Vec<(String, Value)> = kw.drain();
                Value::str(&str_format(s, &args, &named)?)
            }
            _ => return no_attr(&Value::str(s), name),
        })
    }

    fn key_of(&mut self, key: Option<&Value>, v: &Value) -> R<Value> {
        match key {
            None | Some(Value::None) => Ok(v.clone()),
            Some(f) => self.call(f, vec![v.clone()], Vec::new()),
        }
    }

    fn sort_values(&mut self, items: &mut Vec<Value>, key: Option<&Value>, reverse: bool) -> R<()> {
        let mut keyed = Vec::with_capacity(items.len());
        for v in items.drain(..) {
            let k = self.key_of(key, &v)?;
            keyed.push((k, v));
        }
        let mut failure: Option<PyErr> = None;
        keyed.sort_by(|(a, _), (b, _)| {
            let (x, y) = if reverse { (b, a) } else { (a, b) };
            match py_cmp(x, y) {
                Ok(o) => o,
                Err(e) => {
                    failure.get_or_insert(e);
                    Ordering::Equal
                }
            }
        });
        if let Some(e) = failure {
            return Err(e.into());
        }
        items.extend(keyed.into_iter().map(|(_, v)| v));
        Ok(())
    }
}

/// Keyword arguments for a builtin; leftovers are a `TypeError`.
struct Kwargs {
    func: String,
    items: Vec<(String, Value)>,
}

impl Kwargs {
    fn new(func: &str, items: Vec<(String, Value)>) -> Self {
        Self { func: func.to_string(), items }
    }

    fn take(&mut self, name: &str) -> Option<Value> {
        let pos = self.items.iter().position(|(k, _)| k == name)?;
        Some(self.items.remove(pos).1)
    }

    fn take_str(&mut self, name: &str) -> Result<Option<String>, PyErr> {
        match self.take(name) {
            None | Some(Value::None) => Ok(None),
            Some(Value::Str(s)) => Ok(Some(s.to_string())),
            Some(other) => {
                Err(PyErr::type_error(format!("{name} must be None or a string, not {}", other.type_name())))
            }
        }
    }

    fn drain(&mut self) -> Vec<(String, Value)> {
        std::mem::take(&mut self.items)
    }

    fn finish(self) -> Result<(), PyErr> {
        match self.items.first() {
            None => Ok(()),
            Some((k, _)) => Err(PyErr::type_error(format!("{}() got an unexpected keyword argument '{k}'", self.func))),
        }
    }
}

fn no_kwargs(func: &str, kwargs: &[(String, Value)]) -> Result<(), PyErr> {
    match kwargs.first() {
        None => Ok(()),
        Some(_) => Err(PyErr::type_error(format!("{func}() takes no keyword arguments"))),
    }
}

fn arity<const N: usize>(func: &str, args: Vec<Value>) -> Result<[Value; N], PyErr> {
    let n = args.len();
    args.try_into().map_err(|_| {
        PyErr::type_error(format!("{func}() takes exactly {N} argument{} ({n} given)", if N == 1 { "" } else { "s" }))
    })
}

fn no_attr<T>(v: &Value, name: &str) -> R<T> {
    raise("AttributeError", format!("'{}' object has no attribute '{name}'", v.type_name()))
}

fn overflow() -> PyErr {
    PyErr::new("OverflowError", "integer overflow in the stub interpreter")
}

fn num(v: &Value, func: &str) -> Result<f64, PyErr> {
    v.as_f64().ok_or_else(|| PyErr::type_error(format!("{func}() requires a real number, not '{}'", v.type_name())))
}

fn module_value(name: &str) -> Result<Value, PyErr> {
    match MODULES.iter().find(|m| **m == name) {
        Some(m) => Ok(Value::Module(m)),
        None => Err(PyErr::new("ModuleNotFoundError", format!("No module named '{name}'"))),
    }
}

const MODULE_ATTRS: [&str; 11] = [
    "json.loads",
    "json.dumps",
    "math.floor",
    "math.ceil",
    "math.sqrt",
    "math.log",
    "math.exp",
    "math.fabs",
    "math.pow",
    "math.isclose",
    "json.JSONDecodeError",
];

const LIST_METHODS: [&str; 11] =
    ["append", "extend", "insert", "pop", "remove", "index", "count", "sort", "reverse", "copy", "clear"];
const DICT_METHODS: [&str; 9] = ["get", "keys", "values", "items", "setdefault", "pop", "update", "copy", "clear"];
const STR_METHODS: [&str; 17] = [
    "join",
    "split",
    "splitlines",
    "strip",
    "lstrip",
    "rstrip",
    "startswith",
    "endswith",
    "lower",
    "upper",
    "replace",
    "find",
    "index",
    "count",
    "isdigit",
    "isalpha",
    "format",
];

fn get_attr(v: &Value, name: &str) -> Result<Value, PyErr> {
    let missing = || PyErr::new("AttributeError", format!("'{}' object has no attribute '{name}'", v.type_name()));
    match v {
        Value::Module(m) => {
            let q = format!("{m}.{name}");
            match q.as_str() {
                "math.inf" => return Ok(Value::Float(f64::INFINITY)),
                "math.pi" => return Ok(Value::Float(std::f64::consts::PI)),
                "math.e" => return Ok(Value::Float(std::f64::consts::E)),
                "json.JSONDecodeError" => return Ok(Value::ExcType(Rc::from("JSONDecodeError"))),
                _ => {}
            }
            MODULE_ATTRS
                .iter()
                .find(|a| **a == q)
                .map(|a| Value::Builtin(a))
                .ok_or_else(|| PyErr::new("AttributeError", format!("module '{m}' has no attribute '{name}'")))
        }
        Value::Exception(e) if name == "args" => Ok(Value::tuple(vec![Value::str(&e.message)])),
        Value::List(_) if LIST_METHODS.contains(&name) => Ok(Value::Method(Box::new(v.clone()), Rc::from(name))),
        Value::Dict(_) if DICT_METHODS.contains(&name) => Ok(Value::Method(Box::new(v.clone()), Rc::from(name))),
        Value::Str(_) if STR_METHODS.contains(&name) => Ok(Value::Method(Box::new(v.clone()), Rc::from(name))),
        _ => Err(missing()),
    }
}

fn norm_index(k: &Value, len: usize, what: &str) -> Result<usize, PyErr> {
    let i = k.as_int().ok_or_else(|| {
        PyErr::type_error(format!("{what} indices must be integers or slices, not {}", k.type_name()))
    })?;
    let j = if i < 0 { i + len as i64 } else { i };
    if j < 0 || j >= len as i64 {
        let label =
            if what == "pop" { "pop index out of range".to_string() } else { format!("{what} index out of range") };
        return Err(PyErr::new("IndexError", label));
    }
    Ok(j as usize)
}

fn get_item(container: &Value, key: &Value) -> Result<Value, PyErr> {
    match container {
        Value::List(l) => {
            let l = l.borrow();
            Ok(l[norm_index(key, l.len(), "list")?].clone())
        }
        Value::Tuple(t) => Ok(t[norm_index(key, t.len(), "tuple")?].clone()),
        Value::Str(s) => {
            let chars: Vec<char> = s.chars().collect();
            Ok(Value::str(&chars[norm_index(key, chars.len(), "string")?].to_string()))
        }
        Value::Dict(d) => {
            let k = Key::from_value(key)?;
            d.borrow().get(&k).map(|(_, v)| v.clone()).ok_or_else(|| PyErr::new("KeyError", key.repr()))
        }
        other => Err(PyErr::type_error(format!("'{}' object is not subscriptable", other.type_name()))),
    }
}

fn set_item(container: &Value, key: Value, v: Value) -> Result<(), PyErr> {
    match container {
        Value::List(l) => {
            let len = l.borrow().len();
            let i = norm_index(&key, len, "list assignment")?;
            l.borrow_mut()[i] = v;
            Ok(())
        }
        Value::Dict(d) => dict_insert(&mut d.borrow_mut(), key, v),
        other => Err(PyErr::type_error(format!("'{}' object does not support item assignment", other.type_name()))),
    }
}

fn dict_insert(map: &mut DictMap, k: Value, v: Value) -> Result<(), PyErr> {
    let key = Key::from_value(&k)?;
    insert_keep_key(map, key, k, v);
    Ok(())
}

/// Re-assigning an existing key keeps the original key object, as CPython does.
fn insert_keep_key(map: &mut DictMap, key: Key, kv: Value, v: Value) {
    match map.get_mut(&key) {
        Some(slot) => slot.1 = v,
        None => {
            map.insert(key, (kv, v));
        }
    }
}

fn slice_bounds(len: usize, lo: Option<&Value>, hi: Option<&Value>) -> Result<(usize, usize), PyErr> {
    let conv = |v: Option<&Value>, default: i64| -> Result<i64, PyErr> {
        match v {
            None | Some(Value::None) => Ok(default),
            Some(x) => x.as_int().ok_or_else(|| PyErr::type_error("slice indices must be integers or None")),
        }
    };
    let n = len as i64;
    let clamp = |i: i64| if i < 0 { (i + n).max(0) } else { i.min(n) };
    let a = clamp(conv(lo, 0)?);
    let b = clamp(conv(hi, n)?);
    Ok((a as usize, (b.max(a)) as usize))
}

fn slice(v: &Value, lo: Option<&Value>, hi: Option<&Value>) -> Result<Value, PyErr> {
    match v {
        Value::List(l) => {
            let l = l.borrow();
            let (a, b) = slice_bounds(l.len(), lo, hi)?;
            Ok(Value::list(l[a..b].to_vec()))
        }
        Value::Tuple(t) => {
            let (a, b) = slice_bounds(t.len(), lo, hi)?;
            Ok(Value::tuple(t[a..b].to_vec()))
        }
        Value::Str(s) => {
            let chars: Vec<char> = s.chars().collect();
            let (a, b) = slice_bounds(chars.len(), lo, hi)?;
            Ok(Value::str(&chars[a..b].iter().collect::<String>()))
        }
        other => Err(PyErr::type_error(format!("'{}' object is not subscriptable", other.type_name()))),
    }
}

fn op_symbol(op: BinOp) -> &'static str {
    match op {
        BinOp::Add => "+",
        BinOp::Sub => "-",
        BinOp::Mul => "*",
        BinOp::Div => "/",
        BinOp::FloorDiv => "//",
        BinOp::Mod => "%",
        BinOp::Pow => "** or pow()",
    }
}

fn repeat(items: &[Value], n: i64) -> Result<Vec<Value>, PyErr> {
    let n = n.max(0) as usize;
    if items.len().saturating_mul(n) > MAX_SEQUENCE {
        return Err(PyErr::new("MemoryError", "sequence too large for the stub interpreter"));
    }
    Ok(items.iter().cloned().cycle().take(items.len() * n).collect())
}

pub fn binop(op: BinOp, a: &Value, b: &Value) -> Result<Value, PyErr> {
    use Value::*;
    let unsupported = || {
        PyErr::type_error(format!(
            "unsupported operand type(s) for {}: '{}' and '{}'",
            op_symbol(op),
            a.type_name(),
            b.type_name()
        ))
    };
    match (op, a, b) {
        (BinOp::Add, Str(x), Str(y)) => return Ok(Value::str(&format!("{x}{y}"))),
        (BinOp::Add, Str(_), _) => {
            return Err(PyErr::type_error(format!("can only concatenate str (not \"{}\") to str", b.type_name())))
        }
        (BinOp::Add, List(x), List(y)) => {
            let mut v = x.borrow().clone();
            v.extend(y.borrow().iter().cloned());
            return Ok(Value::list(v));
        }
        (BinOp::Add, List(_), _) => {
            return Err(PyErr::type_error(format!("can only concatenate list (not \"{}\") to list", b.type_name())))
        }
        (BinOp::Add, Tuple(x), Tuple(y)) => {
            let mut v = (**x).clone();
            v.extend(y.iter().cloned());
            return Ok(Value::tuple(v));
        }
        (BinOp::Mul, Str(s), _) | (BinOp::Mul, _, Str(s)) if a.as_int().is_some() || b.as_int().is_some() => {
            let n = a.as_int().or(b.as_int()).unwrap_or(0).max(0) as usize;
            if s.len().saturating_mul(n) > MAX_SEQUENCE {
                return Err(PyErr::new("MemoryError", "string too large for the stub interpreter"));
            }
            return Ok(Value::str(&s.repeat(n)));
        }
        (BinOp::Mul, List(l), _) if b.as_int().is_some() => {
            return Ok(Value::list(repeat(&l.borrow(), b.as_int().unwrap_or(0))?))
        }
        (BinOp::Mul, _, List(l)) if a.as_int().is_some() => {
            return Ok(Value::list(repeat(&l.borrow(), a.as_int().unwrap_or(0))?))
        }
        _ => {}
    }
    if let (Some(x), Some(y)) = (a.as_int(), b.as_int()) {
        return Ok(match op {
            BinOp::Add => Int(x.checked_add(y).ok_or_else(overflow)?),
            BinOp::Sub => Int(x.checked_sub(y).ok_or_else(overflow)?),
            BinOp::Mul => Int(x.checked_mul(y).ok_or_else(overflow)?),
            BinOp::Div => {
                if y == 0 {
                    return Err(PyErr::new("ZeroDivisionError", "division by zero"));
                }
                Float(x as f64 / y as f64)
            }
            BinOp::FloorDiv | BinOp::Mod => {
                if y == 0 {
                    return Err(PyErr::new("ZeroDivisionError", "integer division or modulo by zero"));
                }
                let q = x.div_euclid(y);
                let r = x.rem_euclid(y);
                // Python rounds toward negative infinity; remainder takes the divisor's sign.
                let (q, r) = if r != 0 && y < 0 { (q - 1, r + y) } else { (q, r) };
                if op == BinOp::FloorDiv {
                    Int(q)
                } else {
                    Int(r)
                }
            }
            BinOp::Pow => {
                if y >= 0 {
                    let e = u32::try_from(y).map_err(|_| overflow())?;
                    Int(x.checked_pow(e).ok_or_else(overflow)?)
                } else {
                    if x == 0 {
                        return Err(PyErr::new("ZeroDivisionError", "0.0 cannot be raised to a negative power"));
                    }
                    Float((x as f64).powf(y as f64))
                }
            }
        });
    }
    let (Some(x), Some(y)) = (a.as_f64(), b.as_f64()) else {
        return Err(unsupported());
    };
    Ok(Float(match op {
        BinOp::Add => x + y,
        BinOp::Sub => x - y,
        BinOp::Mul => x * y,
        BinOp::Div => {
            if y == 0.0 {
                return Err(PyErr::new("ZeroDivisionError", "float division by zero"));
            }
            x / y
        }
        BinOp::FloorDiv => {
            if y == 0.0 {
                return Err(PyErr::new("ZeroDivisionError", "float floor division by zero"));
            }
            (x / y).floor()
        }
        BinOp::Mod => {
            if y == 0.0 {
                return Err(PyErr::new("ZeroDivisionError", "float modulo"));
            }
            let r = x % y;
            if r != 0.0 && (r < 0.0) != (y < 0.0) {
                r + y
            } else {
                r
            }
        }
        BinOp::Pow => x.powf(y),
    }))
}

fn contains(container: &Value, item: &Value) -> Result<bool, PyErr> {
    match container {
        Value::List(l) => Ok(l.borrow().iter().any(|v| py_eq(v, item))),
        Value::Tuple(t) => Ok(t.iter().any(|v| py_eq(v, item))),
        Value::Str(s) => match item {
            Value::Str(sub) => Ok(s.contains(&**sub)),
            other => Err(PyErr::type_error(format!(
                "'in <string>' requires string as left operand, not {}",
                other.type_name()
            ))),
        },
        Value::Dict(d) => Ok(d.borrow().contains_key(&Key::from_value(item)?)),
        other => Err(PyErr::type_error(format!("argument of type '{}' is not iterable", other.type_name()))),
    }
}

fn identical(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::None, Value::None) => true,
        (Value::Bool(x), Value::Bool(y)) => x == y,
        (Value::Int(x), Value::Int(y)) => x == y,
        (Value::List(x), Value::List(y)) => Rc::ptr_eq(x, y),
        (Value::Dict(x), Value::Dict(y)) => Rc::ptr_eq(x, y),
        (Value::Tuple(x), Value::Tuple(y)) => Rc::ptr_eq(x, y),
        (Value::Str(x), Value::Str(y)) => Rc::ptr_eq(x, y) || x == y,
        _ => py_eq(a, b) && std::mem::discriminant(a) == std::mem::discriminant(b),
    }
}

fn compare(op: CmpOp, a: &Value, b: &Value) -> Result<bool, PyErr> {
    let ordered = |pred: fn(Ordering) -> bool, sym: &str| -> Result<bool, PyErr> {
        py_cmp(a, b).map(pred).map_err(|_| {
            PyErr::type_error(format!(
                "'{sym}' not supported between instances of '{}' and '{}'",
                a.type_name(),
                b.type_name()
            ))
        })
    };
    match op {
        CmpOp::Eq => Ok(py_eq(a, b)),
        CmpOp::Ne => Ok(!py_eq(a, b)),
        CmpOp::Lt => ordered(|o| o == Ordering::Less, "<"),
        CmpOp::Le => ordered(|o| o != Ordering::Greater, "<="),
        CmpOp::Gt => ordered(|o| o == Ordering::Greater, ">"),
        CmpOp::Ge => ordered(|o| o != Ordering::Less, ">="),
        CmpOp::In => contains(b, a),
        CmpOp::NotIn => contains(b, a).map(|x| !x),
        CmpOp::Is => Ok(identical(a, b)),
        CmpOp::IsNot => Ok(!identical(a, b)),
    }
}

fn round(x: &Value, nd: &Value) -> Result<Value, PyErr> {
    match (x, nd) {
        (Value::Int(_) | Value::Bool(_), Value::None) => Ok(Value::Int(x.as_int().unwrap_or(0))),
        (Value::Float(f), Value::None) => {
            if !f.is_finite() {
                return Err(PyErr::new("OverflowError", "cannot convert float infinity to integer"));
            }
            Ok(Value::Int(f.round_ties_even() as i64))
        }
        (Value::Int(i), Value::Int(_)) => Ok(Value::Int(*i)),
        (Value::Float(f), Value::Int(n)) => {
            if *n < 0 {
                let p = 10f64.powi(-*n as i32);
                return Ok(Value::Float((f / p).round_ties_even() * p));
            }
            let s = format!("{:.*}", *n as usize, f);
            Ok(Value::Float(s.parse().unwrap_or(*f)))
        }
        _ => Err(PyErr::type_error(format!("type {} doesn't define __round__ method", x.type_name()))),
    }
}

/// Applies a format-spec mini-language subset: `[[fill]align][sign][,][0][width][,][.prec][type]`.
pub fn format_value(v: &Value, spec: &str) -> Result<String, PyErr> {
    if spec.is_empty() {
        return Ok(v.to_str());
    }
    let chars: Vec<char> = spec.chars().collect();
    let mut i = 0;
    let mut fill = ' ';
    let mut align: Option<char> = None;
    if chars.len() >= 2 && matches!(chars[1], '<' | '>' | '^') {
        fill = chars[0];
        align = Some(chars[1]);
        i = 2;
    } else if matches!(chars[0], '<' | '>' | '^') {
        align = Some(chars[0]);
        i = 1;
    }
    let mut sign_plus = false;
    if i < chars.len() && matches!(chars[i], '+' | '-' | ' ') {
        sign_plus = chars[i] == '+';
        i += 1;
    }
    let mut zero = false;
    if i < chars.len() && chars[i] == '0' {
        zero = true;
        i += 1;
    }
    let mut width = 0usize;
    while i < chars.len() && chars[i].is_ascii_digit() {
        width = width * 10 + chars[i].to_digit(10).unwrap_or(0) as usize;
        i += 1;
    }
    let mut grouping = false;
    if i < chars.len() && chars[i] == ',' {
        grouping = true;
        i += 1;
    }
    let mut precision: Option<usize> = None;
    if i < chars.len() && chars[i] == '.' {
        i += 1;
        let mut p = 0usize;
        while i < chars.len() && chars[i].is_ascii_digit() {
            p = p * 10 + chars[i].to_digit(10).unwrap_or(0) as usize;
            i += 1;
        }
        precision = Some(p);
    }
    let ty = chars.get(i).copied();
    if i + 1 < chars.len() {
        return Err(PyErr::value_error(format!("Invalid format specifier '{spec}'")));
    }
    let bad = || {
        PyErr::value_error(format!(
            "Unknown format code '{}' for object of type '{}'",
            ty.unwrap_or(' '),
            v.type_name()
        ))
    };
    let is_num = matches!(v, Value::Int(_) | Value::Float(_) | Value::Bool(_));
    let mut body = match ty {
        Some('d') => match v.as_int() {
            Some(n) => group(&n.to_string(), grouping),
            None => return Err(bad()),
        },
        Some('f') | Some('F') => {
            let f = v.as_f64().ok_or_else(bad)?;
            group(&format!("{:.*}", precision.unwrap_or(6), f), grouping)
        }
        Some('%') => {
            let f = v.as_f64().ok_or_else(bad)?;
            format!("{}%", group(&format!("{:.*}", precision.unwrap_or(6), f * 100.0), grouping))
        }
        Some('e') => {
            let f = v.as_f64().ok_or_else(bad)?;
            let s = format!("{:.*e}", precision.unwrap_or(6), f);
            let (m, e) = s.split_once('e').unwrap_or((&s, "0"));
            let (sign, digits) = match e.strip_prefix('-') {
                Some(d) => ('-', d),
                None => ('+', e),
            };
            format!("{m}e{sign}{digits:0>2}")
        }
        Some('s') => {
            if is_num {
                return Err(bad());
            }
            let s = v.to_str();
            match precision {
                Some(p) => s.chars().take(p).collect(),
                None => s,
            }
        }
        None => match (v, precision) {
            (Value::Float(f), Some(p)) => format!("{:.*}", p, f),
            (Value::Str(s), Some(p)) => s.chars().take(p).collect(),
            (Value::Int(n), None) if grouping => group(&n.to_string(), true),
            _ => v.to_str(),
        },
        _ => return Err(bad()),
    };
    if sign_plus && is_num && !body.starts_with('-') {
        body.insert(0, '+');
    }
    let len = body.chars().count();
    if len >= width {
        return Ok(body);
    }
    let pad = width - len;
    let align = align.unwrap_or(if zero && is_num {
        '='
    } else if is_num {
        '>'
    } else {
        '<'
    });
    let fill = if zero && align == '=' { '0' } else { fill };
    let fill_str = |n: usize| fill.to_string().repeat(n);
    Ok(match align {
        '<' => format!("{body}{}", fill_str(pad)),
        '^' => format!("{}{body}{}", fill_str(pad / 2), fill_str(pad - pad / 2)),
        '=' => {
            let (sign, rest) = if body.starts_with(['-', '+']) { body.split_at(1) } else { ("", body.as_str()) };
            format!("{sign}{}{rest}", fill_str(pad))
        }
        _ => format!("{}{body}", fill_str(pad)),
    })
}

fn group(num: &str, grouping: bool) -> String {
    if !grouping {
        return num.to_string();
    }
    let (sign, rest) = if let Some(r) = num.strip_prefix('-') { ("-", r) } else { ("", num) };
    let (int, frac) = match rest.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (rest, None),
    };
    let mut out = String::new();
    for (k, c) in int.chars().enumerate() {
        if k > 0 && (int.len() - k) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    match frac {
        Some(f) => format!("{sign}{out}.{f}"),
        None => format!("{sign}{out}"),
    }
}

fn str_format(template: &str, args: &[Value], named: &[(String, Value)]) -> Result<String, PyErr> {
    let chars: Vec<char> = template.chars().collect();
    let mut out = String::new();
    let mut auto = 0usize;
    let mut i = 0;
    while i < chars.len() {
        match chars[i] {
            '{' if chars.get(i + 1) == Some(&'{') => {
                out.push('{');
                i += 2;
            }
            '}' if chars.get(i + 1) == Some(&'}') => {
                out.push('}');
                i += 2;
            }
            '{' => {
                let end = chars[i..]
                    .iter()
                    .position(|c| *c == '}')
                    .map(|p| p + i)
                    .ok_or_else(|| PyErr::value_error("Single '{' encountered in format string"))?;
                let field: String = chars[i + 1..end].iter().collect();
                let (name, spec) = field.split_once(':').unwrap_or((&field, ""));
                let v = if name.is_empty() {
                    auto += 1;
                    args.get(auto - 1)
                } else if let Ok(idx) = name.parse::<usize>() {
                    args.get(idx)
                } else {
                    named.iter().find(|(k, _)| k == name).map(|(_, v)| v)
                };
                let v = v.ok_or_else(|| PyErr::new("IndexError", format!("Replacement index {name} out of range")))?;
                out.push_str(&format_value(v, spec)?);
                i = end + 1;
            }
            c => {
                out.push(c);
                i += 1;
            }
        }
    }
    Ok(out)
}

pub fn from_json(j: &serde_json::Value) -> Value {
    match j {
        serde_json::Value::Null => Value::None,
        serde_json::Value::Bool(b) => Value::Bool(*b),
        serde_json::Value::Number(n) => match n.as_i64() {
            Some(i) => Value::Int(i),
            None => Value::Float(n.as_f64().unwrap_or(f64::NAN)),
        },
        serde_json::Value::String(s) => Value::str(s),
        serde_json::Value::Array(a) => Value::list(a.iter().map(from_json).collect()),
        serde_json::Value::Object(o) => {
            let mut map = DictMap::new();
            for (k, v) in o {
                map.insert(Key::Str(Rc::from(k.as_str())), (Value::str(k), from_json(v)));
            }
            Value::dict(map)
        }
    }
}

pub fn to_json(v: &Value) -> Result<serde_json::Value, PyErr> {
    use serde_json::Value as J;
    Ok(match v {
        Value::None => J::Null,
        Value::Bool(b) => J::Bool(*b),
        Value::Int(i) => J::from(*i),
        Value::Float(f) => serde_json::Number::from_f64(*f)
            .map(J::Number)
            .ok_or_else(|| PyErr::value_error("Out of range float values are not JSON compliant"))?,
        Value::Str(s) => J::String(s.to_string()),
        Value::List(l) => J::Array(l.borrow().iter().map(to_json).collect::<Result<_, _>>()?),
        Value::Tuple(t) => J::Array(t.iter().map(to_json).collect::<Result<_, _>>()?),
        Value::Dict(d) => {
            let mut obj = serde_json::Map::new();
            for (k, val) in d.borrow().values() {
                let key = match k {
                    Value::Str(s) => s.to_string(),
                    Value::Int(i) => i.to_string(),
                    Value::Bool(b) => b.to_string(),
                    Value::Float(f) => float_repr(*f),
                    Value::None => "null".into(),
                    other => {
                        return Err(PyErr::type_error(format!(
                            "keys must be str, int, float, bool or None, not {}",
                            other.type_name()
                        )))
                    }
                };
                obj.insert(key, to_json(val)?);
            }
            J::Object(obj)
        }
        other => {
            return Err(PyErr::type_error(format!("Object of type {} is not JSON serializable", other.type_name())))
        }
    })
}

fn sort_json_keys(j: &mut serde_json::Value) {
    match j {
        serde_json::Value::Object(o) => {
            let mut entries: Vec<_> = std::mem::take(o).into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            for (k, mut v) in entries {
                sort_json_keys(&mut v);
                o.insert(k, v);
            }
        }
        serde_json::Value::Array(a) => a.iter_mut().for_each(sort_json_keys),
        _ => {}
    }
}

fn pretty_json(j: &serde_json::Value, indent: usize) -> String {
    fn go(j: &serde_json::Value, indent: usize, level: usize, out: &mut String) {
        let pad = |l: usize| " ".repeat(indent * l);
        match j {
            serde_json::Value::Array(a) if !a.is_empty() => {
                out.push_str("[\n");
                for (i, v) in a.iter().enumerate() {
                    if i > 0 {
                        out.push_str(",\n");
                    }
                    out.push_str(&pad(level + 1));
                    go(v, indent, level + 1, out);
                }
                out.push('\n');
                out.push_str(&pad(level));
                out.push(']');
            }
            serde_json::Value::Object(o) if !o.is_empty() => {
                out.push_str("{\n");
                for (i, (k, v)) in o.iter().enumerate() {
                    if i > 0 {
                        out.push_str(",\n");
                    }
                    out.push_str(&pad(level + 1));
                    pyjson::write_str(k, out);
                    out.push_str(": ");
                    go(v, indent, level + 1, out);
                }
                out.push('\n');
                out.push_str(&pad(level));
                out.push('}');
            }
            other => out.push_str(&pyjson::dumps(other)),
        }
    }
    let mut out = String::new();
    go(j, indent, 0, &mut out);
    out
}

//! Pretty-printer producing source that parses back to the same tree.

use std::fmt::{self, Write};

use super::ast::*;

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Int(v, _) => write!(f, "{v}"),
            Expr::Var(n, _) => f.write_str(n),
            Expr::Index { name, indices, .. } => {
                f.write_str(name)?;
                indices.iter().try_for_each(|i| write!(f, "[{i}]"))
            }
            Expr::Unary(op, e, _) => match **e {
                Expr::Binary(..) | Expr::Unary(..) => write!(f, "{}({e})", op.symbol()),
                _ => write!(f, "{}{e}", op.symbol()),
            },
            Expr::Binary(op, l, r, _) => {
                write_operand(f, l)?;
                write!(f, " {} ", op.symbol())?;
                write_operand(f, r)
            }
            Expr::Call { name, args, .. } => {
                write!(f, "{name}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, e: &Expr) -> fmt::Result {
    if matches!(e, Expr::Binary(..)) {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for LValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)?;
        self.indices.iter().try_for_each(|i| write!(f, "[{i}]"))
    }
}

impl fmt::Display for VarDecl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)?;
        for d in &self.dims {
            write!(f, "[{d}]")?;
        }
        if let Some(init) = &self.init {
            write!(f, " = {init}")?;
        }
        Ok(())
    }
}

impl fmt::Display for Directive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Directive::Critical { name: None } => f.write_str("#pragma omp critical"),
            Directive::Critical { name: Some(n) } => write!(f, "#pragma omp critical ({n})"),
            Directive::ParallelFor { shared, private } => {
                f.write_str("#pragma omp parallel for")?;
                if !shared.is_empty() {
                    write!(f, " shared({})", shared.join(", "))?;
                }
                if !private.is_empty() {
                    write!(f, " private({})", private.join(", "))?;
                }
                Ok(())
            }
        }
    }
}

/// Renders a simple statement (assignment, inc/dec, call) without `;`.
pub fn simple_stmt_text(s: &Stmt) -> String {
    match s {
        Stmt::Assign { target, op, value, .. } => format!("{target} {} {value}", op.symbol()),
        Stmt::IncDec { target, increment, prefix, .. } => {
            let op = if *increment { "++" } else { "--" };
            if *prefix {
                format!("{op}{target}")
            } else {
                format!("{target}{op}")
            }
        }
        Stmt::Expr(e, _) => e.to_string(),
        other => panic!("not a simple statement: {other:?}"),
    }
}

pub(crate) fn decl_text(decls: &[VarDecl]) -> String {
    let parts: Vec<String> = decls.iter().map(|d| d.to_string()).collect();
    format!("int {};", parts.join(", "))
}

pub(crate) fn for_header(init: &Option<ForInit>, cond: &Option<Expr>, step: &Option<Box<Stmt>>) -> String {
    let init = match init {
        None => String::new(),
        Some(ForInit::Decl(d)) => format!("int {d}"),
        Some(ForInit::Assign(s)) => simple_stmt_text(s),
    };
    let cond = cond.as_ref().map(|c| c.to_string()).unwrap_or_default();
    let step = step.as_ref().map(|s| simple_stmt_text(s)).unwrap_or_default();
    format!("for ({init}; {cond}; {step})")
}

struct Printer {
    out: String,
    indent: usize,
}

impl Printer {
    fn line(&mut self, text: &str) {
        for _ in 0..self.indent {
            self.out.push_str("    ");
        }
        self.out.push_str(text);
        self.out.push('\n');
    }

    fn stmt(&mut self, s: &Stmt) {
        match s {
            Stmt::Decl(decls) => self.line(&decl_text(decls)),
            Stmt::Assign { .. } | Stmt::IncDec { .. } | Stmt::Expr(..) => {
                self.line(&format!("{};", simple_stmt_text(s)))
            }
            Stmt::If { cond, then_branch, else_branch, .. } => {
                self.line(&format!("if ({cond})"));
                self.nested(then_branch);
                if let Some(e) = else_branch {
                    self.line("else");
                    self.nested(e);
                }
            }
            Stmt::While { cond, body, .. } => {
                self.line(&format!("while ({cond})"));
                self.nested(body);
            }
            Stmt::For { init, cond, step, body, .. } => {
                self.line(&for_header(init, cond, step));
                self.nested(body);
            }
            Stmt::Return(None, _) => self.line("return;"),
            Stmt::Return(Some(e), _) => self.line(&format!("return {e};")),
            Stmt::Block(stmts, _) => {
                self.line("{");
                self.indent += 1;
                stmts.iter().for_each(|s| self.stmt(s));
                self.indent -= 1;
                self.line("}");
            }
            Stmt::Pragma { directive, body, .. } => {
                // Pragmas must begin their own line; indentation is whitespace.
                self.line(&directive.to_string());
                self.stmt(body);
            }
            Stmt::Empty(_) => self.line(";"),
        }
    }

    fn nested(&mut self, s: &Stmt) {
        if matches!(s, Stmt::Block(..)) {
            self.stmt(s);
        } else {
            self.indent += 1;
            self.stmt(s);
            self.indent -= 1;
        }
    }
}

impl fmt::Display for TranslationUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut p = Printer { out: String::new(), indent: 0 };
        for (i, item) in self.items.iter().enumerate() {
            match item {
                Item::Global(d) => p.line(&format!("int {d};")),
                Item::Function(func) => {
                    if i > 0 {
                        p.out.push('\n');
                    }
                    let params: Vec<String> = func
                        .params
                        .iter()
                        .map(|prm| {
                            let mut s = format!("int {}", prm.name);
                            for d in prm.dims.iter().flatten() {
                                match d {
                                    Some(n) => write!(s, "[{n}]").unwrap(),
                                    None => s.push_str("[]"),
                                }
                            }
                            s
                        })
                        .collect();
                    let ret = if func.returns_value { "int" } else { "void" };
                    p.line(&format!("{ret} {}({}) {{", func.name, params.join(", ")));
                    p.indent += 1;
                    func.body.iter().for_each(|s| p.stmt(s));
                    p.indent -= 1;
                    p.line("}");
                }
            }
        }
        f.write_str(&p.out)
    }
}

//! Recursive-descent parser for the workload language.

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::FrontendError;

pub fn parse_unit(src: &str) -> Result<TranslationUnit, FrontendError> {
    let tokens = tokenize(src)?;
    let mut p = Parser { tokens, pos: 0 };
    let mut items = Vec::new();
    while !p.at(&Tok::Eof) {
        items.extend(p.item()?);
    }
    Ok(TranslationUnit { items })
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, FrontendError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let idx = (self.pos + n).min(self.tokens.len() - 1);
        &self.tokens[idx].tok
    }

    fn span(&self) -> Span {
        self.tokens[self.pos].span
    }

    fn at(&self, t: &Tok) -> bool {
        self.peek() == t
    }

    fn at_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.at_punct(p) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn describe(t: &Tok) -> String {
        match t {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Int(v) => format!("integer `{v}`"),
            Tok::Pragma(s) => format!("`#pragma {s}`"),
            Tok::Punct(p) => format!("`{p}`"),
            Tok::Eof => "end of file".into(),
            kw => format!("keyword `{}`", format!("{kw:?}").trim_start_matches("Kw").to_lowercase()),
        }
    }

    fn error<T>(&self, expected: &str) -> PResult<T> {
        Err(FrontendError::syntax(self.span(), format!("expected {expected}, found {}", Self::describe(self.peek()))))
    }

    fn expect_punct(&mut self, p: &str) -> PResult<()> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            self.error(&format!("`{p}`"))
        }
    }

    fn ident(&mut self) -> PResult<(String, Span)> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                let span = self.bump().span;
                Ok((name, span))
            }
            _ => self.error("identifier"),
        }
    }

    fn int_literal(&mut self) -> PResult<u32> {
        match *self.peek() {
            Tok::Int(v) => {
                self.bump();
                Ok(v)
            }
            _ => self.error("integer literal"),
        }
    }

    fn item(&mut self) -> PResult<Vec<Item>> {
        let returns_value = match self.peek() {
            Tok::KwInt => true,
            Tok::KwVoid => false,
            _ => return self.error("`int` or `void` at top level"),
        };
        self.bump();
        let (name, span) = self.ident()?;
        if self.at_punct("(") {
            let f = self.function_rest(name, returns_value, span)?;
            return Ok(vec![Item::Function(f)]);
        }
        if !returns_value {
            return self.error("`(` after void function name");
        }
        let decls = self.declarators_rest(name, span)?;
        Ok(decls.into_iter().map(Item::Global).collect())
    }

    fn function_rest(&mut self, name: String, returns_value: bool, span: Span) -> PResult<FunctionAst> {
        self.expect_punct("(")?;
        let mut params = Vec::new();
        if self.at(&Tok::KwVoid) && self.peek_at(1) == &Tok::Punct(")") {
            self.bump();
        } else if !self.at_punct(")") {
            loop {
                params.push(self.param()?);
                if !self.eat_punct(",") {
                    break;
                }
            }
        }
        self.expect_punct(")")?;
        let body = self.block_body()?;
        Ok(FunctionAst { name, returns_value, params, body, span })
    }

    fn param(&mut self) -> PResult<ParamAst> {
        if !self.at(&Tok::KwInt) {
            return self.error("`int` parameter");
        }
        self.bump();
        let (name, span) = self.ident()?;
        let mut dims: Option<Vec<Option<u32>>> = None;
        while self.eat_punct("[") {
            let list = dims.get_or_insert_with(Vec::new);
            if self.eat_punct("]") {
                if !list.is_empty() {
                    return Err(FrontendError::syntax(span, "only the outermost array dimension may be unsized"));
                }
                list.push(None);
                continue;
            }
            let n = self.dimension()?;
            list.push(Some(n));
            self.expect_punct("]")?;
        }
        Ok(ParamAst { name, dims, span })
    }

    fn dimension(&mut self) -> PResult<u32> {
        let span = self.span();
        let n = self.int_literal()?;
        if n == 0 {
            return Err(FrontendError::syntax(span, "array dimension must be positive"));
        }
        Ok(n)
    }

    /// Parses `[dims] [= init] {, declarator}` `;` after the first name.
    fn declarators_rest(&mut self, first: String, first_span: Span) -> PResult<Vec<VarDecl>> {
        let mut out = vec![self.declarator_tail(first, first_span)?];
        while self.eat_punct(",") {
            let (name, span) = self.ident()?;
            out.push(self.declarator_tail(name, span)?);
        }
        self.expect_punct(";")?;
        Ok(out)
    }

    fn declarator_tail(&mut self, name: String, span: Span) -> PResult<VarDecl> {
        let mut dims = Vec::new();
        while self.eat_punct("[") {
            dims.push(self.dimension()?);
            self.expect_punct("]")?;
        }
        let init = if self.eat_punct("=") {
            if !dims.is_empty() {
                return Err(FrontendError::syntax(self.span(), "array initializers are not supported"));
            }
            Some(self.expr()?)
        } else {
            None
        };
        Ok(VarDecl { name, dims, init, span })
    }

    fn block_body(&mut self) -> PResult<Vec<Stmt>> {
        self.expect_punct("{")?;
        let mut stmts = Vec::new();
        while !self.at_punct("}") {
            if self.at(&Tok::Eof) {
                return self.error("`}`");
            }
            stmts.push(self.stmt()?);
        }
        self.bump();
        Ok(stmts)
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let span = self.span();
        match self.peek().clone() {
            Tok::KwInt => {
                self.bump();
                let (name, nspan) = self.ident()?;
                Ok(Stmt::Decl(self.declarators_rest(name, nspan)?))
            }
            Tok::KwIf => {
                self.bump();
                self.expect_punct("(")?;
                let cond = self.expr()?;
                self.expect_punct(")")?;
                let then_branch = Box::new(self.stmt()?);
                let else_branch = if self.at(&Tok::KwElse) {
                    self.bump();
                    Some(Box::new(self.stmt()?))
                } else {
                    None
                };
                Ok(Stmt::If { cond, then_branch, else_branch, span })
            }
            Tok::KwWhile => {
                self.bump();
                self.expect_punct("(")?;
                let cond = self.expr()?;
                self.expect_punct(")")?;
                let body = Box::new(self.stmt()?);
                Ok(Stmt::While { cond, body, span })
            }
            Tok::KwFor => self.for_stmt(),
            Tok::KwReturn => {
                self.bump();
                let value = if self.at_punct(";") { None } else { Some(self.expr()?) };
                self.expect_punct(";")?;
                Ok(Stmt::Return(value, span))
            }
            Tok::Punct("{") => Ok(Stmt::Block(self.block_body()?, span)),
            Tok::Punct(";") => {
                self.bump();
                Ok(Stmt::Empty(span))
            }
            Tok::Pragma(text) => {
                self.bump();
                let directive = parse_directive(&text, span)?;
                let body = Box::new(self.stmt()?);
                if matches!(directive, Directive::ParallelFor { .. }) && !matches!(*body, Stmt::For { .. }) {
                    return Err(FrontendError::syntax(body.span(), "`parallel for` must be followed by a `for` loop"));
                }
                Ok(Stmt::Pragma { directive, body, span })
            }
            Tok::KwElse => self.error("statement (dangling `else`)"),
            _ => {
                let s = self.simple_stmt()?;
                self.expect_punct(";")?;
                Ok(s)
            }
        }
    }

    fn for_stmt(&mut self) -> PResult<Stmt> {
        let span = self.bump().span;
        self.expect_punct("(")?;
        let init = if self.at_punct(";") {
            None
        } else if self.at(&Tok::KwInt) {
            self.bump();
            let (name, nspan) = self.ident()?;
            let decl = self.declarator_tail(name, nspan)?;
            if !decl.dims.is_empty() {
                return Err(FrontendError::syntax(nspan, "loop variable must be a scalar"));
            }
            Some(ForInit::Decl(decl))
        } else {
            Some(ForInit::Assign(Box::new(self.simple_stmt()?)))
        };
        self.expect_punct(";")?;
        let cond = if self.at_punct(";") { None } else { Some(self.expr()?) };
        self.expect_punct(";")?;
        let step = if self.at_punct(")") { None } else { Some(Box::new(self.simple_stmt()?)) };
        self.expect_punct(")")?;
        let body = Box::new(self.stmt()?);
        Ok(Stmt::For { init, cond, step, body, span })
    }

    /// Assignment, increment/decrement or call, without the trailing `;`.
    fn simple_stmt(&mut self) -> PResult<Stmt> {
        let span = self.span();
        for (p, increment) in [("++", true), ("--", false)] {
            if self.eat_punct(p) {
                let target = self.lvalue()?;
                return Ok(Stmt::IncDec { target, increment, prefix: true, span });
            }
        }
        if matches!(self.peek(), Tok::Ident(_)) && self.peek_at(1) == &Tok::Punct("(") {
            let e = self.expr()?;
            if !matches!(e, Expr::Call { .. }) {
                return Err(FrontendError::syntax(span, "expression statement must be a call"));
            }
            return Ok(Stmt::Expr(e, span));
        }
        let target = self.lvalue()?;
        let op = match self.peek() {
            Tok::Punct("=") => AssignOp::Set,
            Tok::Punct("+=") => AssignOp::Add,
            Tok::Punct("-=") => AssignOp::Sub,
            Tok::Punct("*=") => AssignOp::Mul,
            Tok::Punct("/=") => AssignOp::Div,
            Tok::Punct("%=") => AssignOp::Rem,
            Tok::Punct("++") | Tok::Punct("--") => {
                let increment = self.at_punct("++");
                self.bump();
                return Ok(Stmt::IncDec { target, increment, prefix: false, span });
            }
            _ => return self.error("assignment operator"),
        };
        self.bump();
        let value = self.expr()?;
        Ok(Stmt::Assign { target, op, value, span })
    }

    fn lvalue(&mut self) -> PResult<LValue> {
        let (name, span) = self.ident()?;
        let mut indices = Vec::new();
        while self.eat_punct("[") {
            indices.push(self.expr()?);
            self.expect_punct("]")?;
        }
        Ok(LValue { name, indices, span })
    }

    pub fn expr(&mut self) -> PResult<Expr> {
        self.binary(1)
    }

    fn binop(&self) -> Option<BinOp> {
        use BinOp::*;
        let Tok::Punct(p) = self.peek() else { return None };
        Some(match *p {
            "*" => Mul,
            "/" => Div,
            "%" => Rem,
            "+" => Add,
            "-" => Sub,
            "<<" => Shl,
            ">>" => Shr,
            "<" => Lt,
            "<=" => Le,
            ">" => Gt,
            ">=" => Ge,
            "==" => Eq,
            "!=" => Ne,
            "&" => BitAnd,
            "^" => BitXor,
            "|" => BitOr,
            "&&" => And,
            "||" => Or,
            _ => return None,
        })
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binop() {
            if op.precedence() < min_prec {
                break;
            }
            let span = self.bump().span;
            let rhs = self.binary(op.precedence() + 1)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs), span);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let span = self.span();
        let op = match self.peek() {
            Tok::Punct("-") => UnOp::Neg,
            Tok::Punct("!") => UnOp::Not,
            Tok::Punct("~") => UnOp::BitNot,
            _ => return self.primary(),
        };
        self.bump();
        Ok(Expr::Unary(op, Box::new(self.unary()?), span))
    }

    fn primary(&mut self) -> PResult<Expr> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(Expr::Int(v, span))
            }
            Tok::Punct("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                if self.eat_punct("(") {
                    let mut args = Vec::new();
                    if !self.at_punct(")") {
                        loop {
                            args.push(self.expr()?);
                            if !self.eat_punct(",") {
                                break;
                            }
                        }
                    }
                    self.expect_punct(")")?;
                    return Ok(Expr::Call { name, args, span });
                }
                if self.at_punct("[") {
                    let mut indices = Vec::new();
                    while self.eat_punct("[") {
                        indices.push(self.expr()?);
                        self.expect_punct("]")?;
                    }
                    return Ok(Expr::Index { name, indices, span });
                }
                Ok(Expr::Var(name, span))
            }
            _ => self.error("expression"),
        }
    }
}

fn parse_directive(text: &str, span: Span) -> PResult<Directive> {
    let unknown = || FrontendError::UnknownDirective {
        line: span.line,
        col: span.col,
        name: format!("#pragma {text}"),
    };
    let tokens = tokenize(text).map_err(|_| unknown())?;
    let words: Vec<&Tok> = tokens.iter().map(|t| &t.tok).collect();
    let ident = |t: &Tok, w: &str| matches!(t, Tok::Ident(s) if s == w);
    if words.len() < 2 || !ident(words[0], "omp") {
        return Err(unknown());
    }
    if ident(words[1], "critical") {
        return match &words[2..] {
            [Tok::Eof] => Ok(Directive::Critical { name: None }),
            [Tok::Punct("("), Tok::Ident(n), Tok::Punct(")"), Tok::Eof] => {
                Ok(Directive::Critical { name: Some(n.clone()) })
            }
            _ => Err(FrontendError::syntax(span, "malformed `critical` directive")),
        };
    }
    if words.len() >= 3 && ident(words[1], "parallel") && matches!(words[2], Tok::KwFor) {
        let mut shared = Vec::new();
        let mut private = Vec::new();
        let mut rest = &words[3..];
        loop {
            match rest {
                [Tok::Eof] => break,
                [Tok::Ident(clause), Tok::Punct("("), tail @ ..] if clause == "shared" || clause == "private" => {
                    let list = if clause == "shared" { &mut shared } else { &mut private };
                    let mut i = 0;
                    loop {
                        match tail.get(i) {
                            Some(Tok::Ident(n)) => list.push(n.clone()),
                            _ => return Err(FrontendError::syntax(span, format!("malformed `{clause}` clause"))),
                        }
                        match tail.get(i + 1) {
                            Some(Tok::Punct(",")) => i += 2,
                            Some(Tok::Punct(")")) => {
                                i += 2;
                                break;
                            }
                            _ => return Err(FrontendError::syntax(span, format!("malformed `{clause}` clause"))),
                        }
                    }
                    rest = &tail[i..];
                }
                [Tok::Ident(clause), ..] => {
                    return Err(FrontendError::UnknownDirective {
                        line: span.line,
                        col: span.col,
                        name: format!("clause `{clause}`"),
                    })
                }
                _ => return Err(FrontendError::syntax(span, "malformed `parallel for` directive")),
            }
        }
        return Ok(Directive::ParallelFor { shared, private });
    }
    Err(unknown())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_program() {
        let unit = parse_unit("int main() { return 0; }").unwrap();
        assert_eq!(unit.items.len(), 1);
        let Item::Function(f) = &unit.items[0] else { panic!() };
        assert_eq!(f.name, "main");
        assert!(matches!(f.body[..], [Stmt::Return(Some(Expr::Int(0, _)), _)]));
    }

    #[test]
    fn precedence_and_associativity() {
        let unit = parse_unit("int g = 1 + 2 * 3 - 4;").unwrap();
        let Item::Global(d) = &unit.items[0] else { panic!() };
        let Some(Expr::Binary(BinOp::Sub, lhs, _, _)) = &d.init else { panic!("{:?}", d.init) };
        assert!(matches!(**lhs, Expr::Binary(BinOp::Add, _, _, _)));
    }

    #[test]
    fn unbalanced_brace_names_line() {
        let err = parse_unit("int main() {\n  if (1) {\n    return 0;\n}\n").unwrap_err();
        match err {
            FrontendError::Syntax { line, .. } => assert_eq!(line, 5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn directives() {
        let src = "int main() {\n int i; int s;\n #pragma omp parallel for shared(s) private(i)\n for (i = 0; i < 4; i++) {\n #pragma omp critical\n s += 1;\n }\n return 0; }";
        let unit = parse_unit(src).unwrap();
        let Item::Function(f) = &unit.items[0] else { panic!() };
        let Stmt::Pragma { directive, body, .. } = &f.body[2] else { panic!() };
        assert_eq!(
            directive,
            &Directive::ParallelFor { shared: vec!["s".into()], private: vec!["i".into()] }
        );
        let Stmt::For { body, .. } = &**body else { panic!() };
        let Stmt::Block(inner, _) = &**body else { panic!() };
        assert!(matches!(&inner[0], Stmt::Pragma { directive: Directive::Critical { name: None }, .. }));
    }

    #[test]
    fn unknown_directive() {
        let err = parse_unit("int main() {\n#pragma omp barrier\n;\n}").unwrap_err();
        assert!(matches!(err, FrontendError::UnknownDirective { line: 2, .. }), "{err:?}");
        let err = parse_unit("int main() {\n#pragma omp parallel for schedule(dynamic)\nfor(;;);\n}").unwrap_err();
        assert!(matches!(err, FrontendError::UnknownDirective { .. }), "{err:?}");
    }

    #[test]
    fn named_critical() {
        let unit = parse_unit("int x; void f() {\n#pragma omp critical (upd)\nx++;\n}").unwrap();
        let Item::Function(f) = &unit.items[1] else { panic!() };
        assert!(matches!(&f.body[0], Stmt::Pragma { directive: Directive::Critical { name: Some(n) }, .. } if n == "upd"));
    }
}

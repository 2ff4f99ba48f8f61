//! Syntax tree of the workload language.

use std::fmt;

/// Source position. Spans never take part in AST equality, so a tree that
/// was unparsed and parsed again compares equal to the original.
#[derive(Debug, Clone, Copy, Default)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl Span {
    pub fn new(line: u32, col: u32) -> Self {
        Self { line, col }
    }
}

impl PartialEq for Span {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl Eq for Span {}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TranslationUnit {
    pub items: Vec<Item>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Item {
    Global(VarDecl),
    Function(FunctionAst),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarDecl {
    pub name: String,
    /// Array extents, outermost first; empty for a scalar.
    pub dims: Vec<u32>,
    pub init: Option<Expr>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionAst {
    pub name: String,
    pub returns_value: bool,
    pub params: Vec<ParamAst>,
    pub body: Vec<Stmt>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamAst {
    pub name: String,
    /// `None` for a scalar. For an array parameter, one entry per
    /// dimension; the outermost may be left unsized (`int a[][8]`).
    pub dims: Option<Vec<Option<u32>>>,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AssignOp {
    Set,
    Add,
    Sub,
    Mul,
    Div,
    Rem,
}

impl AssignOp {
    pub fn symbol(self) -> &'static str {
        match self {
            AssignOp::Set => "=",
            AssignOp::Add => "+=",
            AssignOp::Sub => "-=",
            AssignOp::Mul => "*=",
            AssignOp::Div => "/=",
            AssignOp::Rem => "%=",
        }
    }

    pub fn binop(self) -> Option<BinOp> {
        match self {
            AssignOp::Set => None,
            AssignOp::Add => Some(BinOp::Add),
            AssignOp::Sub => Some(BinOp::Sub),
            AssignOp::Mul => Some(BinOp::Mul),
            AssignOp::Div => Some(BinOp::Div),
            AssignOp::Rem => Some(BinOp::Rem),
        }
    }
}

/// Assignable location: a scalar or a fully indexed array element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LValue {
    pub name: String,
    pub indices: Vec<Expr>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ForInit {
    Decl(VarDecl),
    Assign(Box<Stmt>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Directive {
    ParallelFor { shared: Vec<String>, private: Vec<String> },
    Critical { name: Option<String> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stmt {
    Decl(Vec<VarDecl>),
    Assign { target: LValue, op: AssignOp, value: Expr, span: Span },
    IncDec { target: LValue, increment: bool, prefix: bool, span: Span },
    Expr(Expr, Span),
    If { cond: Expr, then_branch: Box<Stmt>, else_branch: Option<Box<Stmt>>, span: Span },
    While { cond: Expr, body: Box<Stmt>, span: Span },
    For { init: Option<ForInit>, cond: Option<Expr>, step: Option<Box<Stmt>>, body: Box<Stmt>, span: Span },
    Return(Option<Expr>, Span),
    Block(Vec<Stmt>, Span),
    Pragma { directive: Directive, body: Box<Stmt>, span: Span },
    Empty(Span),
}

impl Stmt {
    pub fn span(&self) -> Span {
        match self {
            Stmt::Decl(decls) => decls.first().map(|d| d.span).unwrap_or_default(),
            Stmt::Assign { span, .. }
            | Stmt::IncDec { span, .. }
            | Stmt::Expr(_, span)
            | Stmt::If { span, .. }
            | Stmt::While { span, .. }
            | Stmt::For { span, .. }
            | Stmt::Return(_, span)
            | Stmt::Block(_, span)
            | Stmt::Pragma { span, .. }
            | Stmt::Empty(span) => *span,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Not,
    BitNot,
}

impl UnOp {
    pub fn apply(self, v: i32) -> i32 {
        match self {
            UnOp::Neg => v.wrapping_neg(),
            UnOp::Not => (v == 0) as i32,
            UnOp::BitNot => !v,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            UnOp::Neg => "-",
            UnOp::Not => "!",
            UnOp::BitNot => "~",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Mul,
    Div,
    Rem,
    Add,
    Sub,
    Shl,
    Shr,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    BitAnd,
    BitXor,
    BitOr,
    And,
    Or,
}

impl BinOp {
    /// Evaluates with 32-bit wrapping semantics. `None` on division by zero.
    /// `&&` and `||` are evaluated eagerly here.
    pub fn apply(self, a: i32, b: i32) -> Option<i32> {
        use BinOp::*;
        Some(match self {
            Mul => a.wrapping_mul(b),
            Div if b == 0 => return None,
            Rem if b == 0 => return None,
            Div => a.wrapping_div(b),
            Rem => a.wrapping_rem(b),
            Add => a.wrapping_add(b),
            Sub => a.wrapping_sub(b),
            Shl => a.wrapping_shl(b as u32),
            Shr => a.wrapping_shr(b as u32),
            Lt => (a < b) as i32,
            Le => (a <= b) as i32,
            Gt => (a > b) as i32,
            Ge => (a >= b) as i32,
            Eq => (a == b) as i32,
            Ne => (a != b) as i32,
            BitAnd => a & b,
            BitXor => a ^ b,
            BitOr => a | b,
            And => (a != 0 && b != 0) as i32,
            Or => (a != 0 || b != 0) as i32,
        })
    }

    pub fn symbol(self) -> &'static str {
        use BinOp::*;
        match self {
            Mul => "*",
            Div => "/",
            Rem => "%",
            Add => "+",
            Sub => "-",
            Shl => "<<",
            Shr => ">>",
            Lt => "<",
            Le => "<=",
            Gt => ">",
            Ge => ">=",
            Eq => "==",
            Ne => "!=",
            BitAnd => "&",
            BitXor => "^",
            BitOr => "|",
            And => "&&",
            Or => "||",
        }
    }

    /// Binding strength; larger binds tighter. All binary operators are
    /// left-associative.
    pub fn precedence(self) -> u8 {
        use BinOp::*;
        match self {
            Mul | Div | Rem => 10,
            Add | Sub => 9,
            Shl | Shr => 8,
            Lt | Le | Gt | Ge => 7,
            Eq | Ne => 6,
            BitAnd => 5,
            BitXor => 4,
            BitOr => 3,
            And => 2,
            Or => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Int(u32, Span),
    Var(String, Span),
    /// `name[i][j]...`; fewer indices than dimensions denotes a sub-array.
    Index { name: String, indices: Vec<Expr>, span: Span },
    Unary(UnOp, Box<Expr>, Span),
    Binary(BinOp, Box<Expr>, Box<Expr>, Span),
    Call { name: String, args: Vec<Expr>, span: Span },
}

impl Expr {
    pub fn span(&self) -> Span {
        match self {
            Expr::Int(_, s) | Expr::Var(_, s) | Expr::Unary(_, _, s) | Expr::Binary(_, _, _, s) => *s,
            Expr::Index { span, .. } | Expr::Call { span, .. } => *span,
        }
    }
}

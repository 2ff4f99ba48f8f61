//! Workload frontend: parsing, control-flow graphs, block markers and the
//! basic-block characterization database.
//!
//! ```text
//! source --parse--> WorkloadProgram --build_cfg--> blocks + markers
//!                                        |
//!                     CostTable --characterize--> [BasicBlockRecord]
//!                                        ^
//!                    block database file (optional override)
//! ```

pub mod ast;
mod characterize;
mod lexer;
mod lower;
mod parser;
mod unparse;

use thiserror::Error;

pub use ast::Span;
pub use characterize::{
    apply_overrides, characterize, load_block_db, parse_block_db, write_block_db, BasicBlockRecord, CostKind,
    CostTable, CODE_BASE, INSTR_BYTES,
};
pub use unparse::simple_stmt_text;

use ast::{BinOp, TranslationUnit, UnOp};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrontendError {
    #[error("{line}:{col}: syntax error: {msg}")]
    Syntax { line: u32, col: u32, msg: String },
    #[error("{line}:{col}: unknown directive {name}")]
    UnknownDirective { line: u32, col: u32, name: String },
    #[error("{line}:{col}: undeclared identifier `{name}`")]
    Undeclared { line: u32, col: u32, name: String },
    #[error("{line}:{col}: {msg}")]
    Semantic { line: u32, col: u32, msg: String },
    #[error("block database line {line}: {msg}")]
    BlockDb { line: usize, msg: String },
    #[error("cost table line {line}: {msg}")]
    CostTable { line: usize, msg: String },
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
}

impl FrontendError {
    pub(crate) fn syntax(span: Span, msg: impl Into<String>) -> Self {
        Self::Syntax { line: span.line, col: span.col, msg: msg.into() }
    }

    pub(crate) fn semantic(span: Span, msg: impl Into<String>) -> Self {
        Self::Semantic { line: span.line, col: span.col, msg: msg.into() }
    }
}

pub type VarId = u32;
pub type FuncId = u32;
pub type BlockId = u32;
pub type LockId = u32;
pub type RegionId = u32;

/// Where a variable's storage lives in the target memory hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Placement {
    /// One copy in shared memory, visible to every core.
    Shared,
    /// One copy per core in that core's private memory.
    Private,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Global,
    Local,
    Param,
    /// Array parameter: bound at call time to an array of the caller.
    ArrayParam,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarInfo {
    pub name: String,
    /// Owning function, `None` for globals.
    pub function: Option<FuncId>,
    pub kind: VarKind,
    /// Extents, outermost first. For an array parameter the outermost
    /// extent may be 0 (unsized).
    pub dims: Vec<u32>,
    pub placement: Placement,
    /// Initial value of a global.
    pub init: i32,
    pub span: Span,
}

impl VarInfo {
    pub fn words(&self) -> u64 {
        self.dims.iter().map(|&d| d as u64).product()
    }

    pub fn is_array(&self) -> bool {
        !self.dims.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Callee {
    Function(FuncId),
    /// Built-in `print(x)`: appends `x` to the program output.
    Print,
}

/// Fully resolved scalar location: a scalar variable or an array element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Place {
    pub var: VarId,
    pub indices: Vec<IrExpr>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IrArg {
    Value(IrExpr),
    /// An array or sub-array passed by reference.
    Array { var: VarId, indices: Vec<IrExpr> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IrExpr {
    Const(i32),
    Load(Place),
    Unary(UnOp, Box<IrExpr>),
    Binary(BinOp, Box<IrExpr>, Box<IrExpr>),
    Call { callee: Callee, args: Vec<IrArg> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IrStmtKind {
    /// `place op= value`
    Assign { place: Place, op: ast::AssignOp, value: IrExpr },
    IncDec { place: Place, increment: bool },
    Eval(IrExpr),
    /// Declaration without initializer: zero-fills storage, costs nothing.
    Declare(VarId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IrStmt {
    pub kind: IrStmtKind,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Terminator {
    /// `counted` jumps are real branch instructions (loop back-edges, the
    /// jump over an `else`); the others are fall-throughs.
    Jump { target: BlockId, counted: bool },
    Branch { cond: IrExpr, then_block: BlockId, else_block: BlockId },
    Return(Option<IrExpr>),
    Acquire { lock: LockId, next: BlockId },
    Release { lock: LockId, next: BlockId },
    /// Start of a parallel region; control continues at the region's exit
    /// block after the join.
    Fork { region: RegionId },
}

impl Terminator {
    pub fn successors(&self, regions: &[ParallelRegion]) -> Vec<BlockId> {
        match self {
            Terminator::Jump { target, .. } => vec![*target],
            Terminator::Branch { then_block, else_block, .. } => vec![*then_block, *else_block],
            Terminator::Return(_) => vec![],
            Terminator::Acquire { next, .. } | Terminator::Release { next, .. } => vec![*next],
            Terminator::Fork { region } => {
                let r = &regions[*region as usize];
                vec![r.header, r.exit]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasicBlock {
    pub block_id: BlockId,
    pub function: FuncId,
    pub stmts: Vec<IrStmt>,
    pub term: Terminator,
    pub successors: Vec<BlockId>,
    pub marker_label: String,
    pub line: u32,
    /// Source line of the terminator's condition or return value.
    pub term_line: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarkerKind {
    /// Opens a basic block.
    Start,
    /// Closes the last block of a then/else, loop or critical body.
    End,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Marker {
    pub id: u32,
    pub block: BlockId,
    pub kind: MarkerKind,
    pub line: u32,
}

impl Marker {
    pub fn label(&self) -> String {
        marker_label(self.id)
    }
}

pub fn marker_label(id: u32) -> String {
    format!("b_uc_mark_{id}__")
}

/// A `parallel for` loop in canonical form `for (v = lo; v < hi; v++)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParallelRegion {
    pub id: RegionId,
    pub function: FuncId,
    /// Private iteration variable.
    pub var: VarId,
    pub lo: IrExpr,
    pub hi: IrExpr,
    /// `v <= hi` rather than `v < hi`.
    pub inclusive: bool,
    pub header: BlockId,
    pub exit: BlockId,
    /// Name of the outlined body as it appears in traces.
    pub outlined_name: String,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CriticalLock {
    pub id: LockId,
    /// `None` for the unnamed global critical lock.
    pub name: Option<String>,
}

impl CriticalLock {
    pub fn display_name(&self) -> String {
        match &self.name {
            Some(n) => format!("critical({n})"),
            None => "critical".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionDef {
    pub id: FuncId,
    pub name: String,
    pub returns_value: bool,
    pub params: Vec<VarId>,
    pub entry: BlockId,
    /// Contiguous block id range of this function.
    pub blocks: std::ops::Range<BlockId>,
    pub span: Span,
}

/// The control-flow form of a workload.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Cfg {
    pub functions: Vec<FunctionDef>,
    pub blocks: Vec<BasicBlock>,
    pub markers: Vec<Marker>,
    pub vars: Vec<VarInfo>,
    pub regions: Vec<ParallelRegion>,
    pub locks: Vec<CriticalLock>,
    pub entry: FuncId,
    /// Source listing with `asm("b_uc_mark_<id>__");` marker lines.
    pub annotated_source: String,
}

impl Cfg {
    pub fn function(&self, name: &str) -> Option<&FunctionDef> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn blocks_of(&self, f: &FunctionDef) -> &[BasicBlock] {
        &self.blocks[f.blocks.start as usize..f.blocks.end as usize]
    }
}

/// A parsed and checked workload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkloadProgram {
    pub unit: TranslationUnit,
    /// Name of the entry function.
    pub entry: String,
    /// Populated by [`build_cfg`].
    pub cfg: Option<Cfg>,
}

impl WorkloadProgram {
    /// The control-flow form. Panics if [`build_cfg`] has not run.
    pub fn cfg(&self) -> &Cfg {
        self.cfg.as_ref().expect("build_cfg has not been run on this program")
    }
}

/// Parses and checks a workload. The returned program has no CFG yet.
pub fn parse(source: &str) -> Result<WorkloadProgram, FrontendError> {
    let unit = parser::parse_unit(source)?;
    // Full semantic checking happens while lowering; run it now so that
    // every error surfaces from `parse`.
    lower::lower(&unit)?;
    Ok(WorkloadProgram { unit, entry: "main".into(), cfg: None })
}

/// Builds basic blocks, markers and the annotated listing.
pub fn build_cfg(mut program: WorkloadProgram) -> WorkloadProgram {
    let cfg = lower::lower(&program.unit).expect("program was checked by parse");
    program.cfg = Some(cfg);
    program
}

/// `parse` followed by `build_cfg`.
pub fn compile(source: &str) -> Result<WorkloadProgram, FrontendError> {
    Ok(build_cfg(parse(source)?))
}

/// Renders the syntax tree back to source text.
pub fn unparse(program: &WorkloadProgram) -> String {
    program.unit.to_string()
}

//! Static instruction counts per basic block and the block database file.

use std::fmt;
use std::path::Path;

use super::ast::{AssignOp, BinOp, UnOp};
use super::{BlockId, Callee, Cfg, FrontendError, IrArg, IrExpr, IrStmtKind, Place, Terminator};

/// Address of the first instruction of the first block.
pub const CODE_BASE: u64 = 0x8000;
/// Fixed instruction width of the modelled core.
pub const INSTR_BYTES: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CostKind {
    Assign,
    Load,
    Index,
    Add,
    Mul,
    Div,
    Compare,
    Logic,
    Branch,
    Jump,
    Call,
    Arg,
    Return,
    Critical,
    Fork,
    Decl,
}

impl CostKind {
    pub const ALL: [CostKind; 16] = [
        CostKind::Assign,
        CostKind::Load,
        CostKind::Index,
        CostKind::Add,
        CostKind::Mul,
        CostKind::Div,
        CostKind::Compare,
        CostKind::Logic,
        CostKind::Branch,
        CostKind::Jump,
        CostKind::Call,
        CostKind::Arg,
        CostKind::Return,
        CostKind::Critical,
        CostKind::Fork,
        CostKind::Decl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CostKind::Assign => "assign",
            CostKind::Load => "load",
            CostKind::Index => "index",
            CostKind::Add => "add",
            CostKind::Mul => "mul",
            CostKind::Div => "div",
            CostKind::Compare => "compare",
            CostKind::Logic => "logic",
            CostKind::Branch => "branch",
            CostKind::Jump => "jump",
            CostKind::Call => "call",
            CostKind::Arg => "arg",
            CostKind::Return => "return",
            CostKind::Critical => "critical",
            CostKind::Fork => "fork",
            CostKind::Decl => "decl",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    fn of_binop(op: BinOp) -> Self {
        use BinOp::*;
        match op {
            Mul => CostKind::Mul,
            Div | Rem => CostKind::Div,
            Add | Sub | Shl | Shr | BitAnd | BitXor | BitOr => CostKind::Add,
            Lt | Le | Gt | Ge | Eq | Ne => CostKind::Compare,
            And | Or => CostKind::Logic,
        }
    }
}

/// Instructions generated per source construct.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostTable {
    counts: [u64; CostKind::ALL.len()],
}

impl Default for CostTable {
    fn default() -> Self {
        let mut t = CostTable { counts: [1; CostKind::ALL.len()] };
        // No hardware divider: division is a library call.
        t.set(CostKind::Div, 20);
        t.set(CostKind::Compare, 2);
        t.set(CostKind::Logic, 2);
        t.set(CostKind::Call, 4);
        t.set(CostKind::Return, 2);
        t.set(CostKind::Critical, 4);
        t.set(CostKind::Fork, 8);
        t.set(CostKind::Decl, 0);
        t
    }
}

impl CostTable {
    pub fn get(&self, kind: CostKind) -> u64 {
        self.counts[kind as usize]
    }

    pub fn set(&mut self, kind: CostKind, count: u64) {
        self.counts[kind as usize] = count;
    }

    /// Parses `kind = count` lines on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, FrontendError> {
        let mut table = CostTable::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| FrontendError::CostTable { line: n + 1, msg };
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected `kind = count`, got `{line}`")))?;
            let kind = CostKind::from_name(key.trim()).ok_or_else(|| err(format!("unknown kind `{}`", key.trim())))?;
            let count = value.trim().parse().map_err(|_| err(format!("bad count `{}`", value.trim())))?;
            table.set(kind, count);
        }
        Ok(table)
    }

    pub fn expr(&self, e: &IrExpr) -> u64 {
        match e {
            IrExpr::Const(_) => 0,
            IrExpr::Load(p) => self.get(CostKind::Load) + self.place(p),
            IrExpr::Unary(op, inner) => {
                let k = if *op == UnOp::Not { CostKind::Compare } else { CostKind::Add };
                self.get(k) + self.expr(inner)
            }
            IrExpr::Binary(op, l, r) => self.get(CostKind::of_binop(*op)) + self.expr(l) + self.expr(r),
            IrExpr::Call { callee, args } => {
                let args: u64 = args
                    .iter()
                    .map(|a| match a {
                        IrArg::Value(v) => self.expr(v),
                        IrArg::Array { indices, .. } => self.indices(indices),
                    })
                    .map(|c| c + self.get(CostKind::Arg))
                    .sum();
                let call = match callee {
                    Callee::Function(_) | Callee::Print => self.get(CostKind::Call),
                };
                call + args
            }
        }
    }

    fn indices(&self, indices: &[IrExpr]) -> u64 {
        indices.iter().map(|i| self.get(CostKind::Index) + self.expr(i)).sum()
    }

    /// Address computation for a place, excluding the access itself.
    fn place(&self, p: &Place) -> u64 {
        self.indices(&p.indices)
    }

    pub fn stmt(&self, s: &IrStmtKind) -> u64 {
        match s {
            IrStmtKind::Assign { place, op: AssignOp::Set, value } => {
                self.get(CostKind::Assign) + self.place(place) + self.expr(value)
            }
            IrStmtKind::Assign { place, op, value } => {
                let k = CostKind::of_binop(op.binop().expect("compound operator"));
                self.place(place) + self.get(CostKind::Load) + self.get(k) + self.get(CostKind::Assign) + self.expr(value)
            }
            IrStmtKind::IncDec { place, .. } => {
                self.place(place) + self.get(CostKind::Load) + self.get(CostKind::Add) + self.get(CostKind::Assign)
            }
            IrStmtKind::Eval(e) => self.expr(e),
            IrStmtKind::Declare(_) => self.get(CostKind::Decl),
        }
    }

    pub fn terminator(&self, t: &Terminator, cfg: &Cfg) -> u64 {
        match t {
            Terminator::Jump { counted: true, .. } => self.get(CostKind::Jump),
            Terminator::Jump { counted: false, .. } => 0,
            Terminator::Branch { cond, .. } => self.get(CostKind::Branch) + self.expr(cond),
            Terminator::Return(v) => self.get(CostKind::Return) + v.as_ref().map_or(0, |e| self.expr(e)),
            Terminator::Acquire { .. } | Terminator::Release { .. } => self.get(CostKind::Critical),
            Terminator::Fork { region } => {
                let r = &cfg.regions[*region as usize];
                self.get(CostKind::Fork) + self.expr(&r.lo) + self.expr(&r.hi)
            }
        }
    }
}

impl fmt::Display for CostTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for k in CostKind::ALL {
            writeln!(f, "{} = {}", k.name(), self.get(k))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasicBlockRecord {
    pub block_id: BlockId,
    pub instr_count: u64,
    pub code_addr: u64,
    pub code_len_bytes: u64,
}

/// Static instruction count of every block, laid out contiguously from
/// [`CODE_BASE`] in block order. Every block has at least one instruction.
pub fn characterize(cfg: &Cfg, table: &CostTable) -> Vec<BasicBlockRecord> {
    let counts: Vec<u64> = cfg
        .blocks
        .iter()
        .map(|b| {
            let body: u64 = b.stmts.iter().map(|s| table.stmt(&s.kind)).sum();
            (body + table.terminator(&b.term, cfg)).max(1)
        })
        .collect();
    layout(&counts)
}

fn layout(counts: &[u64]) -> Vec<BasicBlockRecord> {
    let mut addr = CODE_BASE;
    counts
        .iter()
        .enumerate()
        .map(|(i, &instr_count)| {
            let r = BasicBlockRecord {
                block_id: i as BlockId,
                instr_count,
                code_addr: addr,
                code_len_bytes: instr_count * INSTR_BYTES,
            };
            addr += r.code_len_bytes;
            r
        })
        .collect()
}

/// Parses `block_id instr_count` lines. `#` starts a comment.
pub fn parse_block_db(text: &str, block_count: usize) -> Result<Vec<(BlockId, u64)>, FrontendError> {
    let mut seen = vec![false; block_count];
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| FrontendError::BlockDb { line: n + 1, msg };
        let mut fields = line.split_whitespace();
        let (Some(id), Some(count), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(err(format!("expected `block_id instr_count`, got `{line}`")));
        };
        let id: BlockId = id.parse().map_err(|_| err(format!("bad block id `{id}`")))?;
        let count: u64 = count.parse().map_err(|_| err(format!("bad instruction count `{count}`")))?;
        if id as usize >= block_count {
            return Err(err(format!("unknown block {id} (program has {block_count} blocks)")));
        }
        if count == 0 {
            return Err(err(format!("block {id} must have at least one instruction")));
        }
        if std::mem::replace(&mut seen[id as usize], true) {
            return Err(err(format!("block {id} listed twice")));
        }
        out.push((id, count));
    }
    Ok(out)
}

pub fn load_block_db(path: &Path, block_count: usize) -> Result<Vec<(BlockId, u64)>, FrontendError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| FrontendError::Io { path: path.display().to_string(), msg: e.to_string() })?;
    parse_block_db(&text, block_count)
}

pub fn write_block_db(records: &[BasicBlockRecord]) -> String {
    let mut s = String::from("# block_id instr_count\n");
    for r in records {
        s.push_str(&format!("{} {}\n", r.block_id, r.instr_count));
    }
    s
}

/// Replaces instruction counts and recomputes code addresses.
pub fn apply_overrides(records: &[BasicBlockRecord], overrides: &[(BlockId, u64)]) -> Vec<BasicBlockRecord> {
    let mut counts: Vec<u64> = records.iter().map(|r| r.instr_count).collect();
    for &(id, c) in overrides {
        counts[id as usize] = c;
    }
    layout(&counts)
}

#[cfg(test)]
mod tests {
    use super::super::compile;
    use super::*;

    #[test]
    fn loop_body_hand_count() {
        let src = "int q[8];\nint main() {\n int code = 77; int n = 5; int i;\n\
                   for (i = 0; i < n; i++) {\n q[i] = code % n;\n code /= n;\n }\n return 0;\n}";
        let p = compile(src).unwrap();
        let recs = characterize(p.cfg(), &CostTable::default());
        // header: branch 1 + compare 2 + two loads 2
        assert_eq!(recs[1].instr_count, 5);
        // q[i] = code % n: assign 1 + index 1 + load i 1 + div 20 + loads 2 = 25
        // code /= n: load 1 + div 20 + assign 1 + load n 1 = 23
        // i++: load 1 + add 1 + assign 1 = 3; back edge 1
        assert_eq!(recs[2].instr_count, 52);
        // entry: two initialized decls (1 each), one plain decl, i = 0 (1)
        assert_eq!(recs[0].instr_count, 3);
        // exit: return 0
        assert_eq!(recs[3].instr_count, 2);
    }

    #[test]
    fn addresses_are_contiguous() {
        let p = compile("int a; int main() { while (a < 3) a++; if (a) a = 0; else a = 1; }").unwrap();
        let recs = characterize(p.cfg(), &CostTable::default());
        assert_eq!(recs[0].code_addr, CODE_BASE);
        for w in recs.windows(2) {
            assert_eq!(w[1].code_addr, w[0].code_addr + w[0].code_len_bytes);
        }
        assert!(recs.iter().all(|r| r.instr_count >= 1 && r.code_len_bytes == r.instr_count * INSTR_BYTES));
    }

    #[test]
    fn block_db_round_trip_and_overrides() {
        let p = compile("int a; int main() { while (a < 3) a++; }").unwrap();
        let recs = characterize(p.cfg(), &CostTable::default());
        let db = write_block_db(&recs);
        let parsed = parse_block_db(&db, recs.len()).unwrap();
        assert_eq!(apply_overrides(&recs, &parsed), recs);
        let bumped = apply_overrides(&recs, &[(0, 100)]);
        assert_eq!(bumped[0].instr_count, 100);
        assert_eq!(bumped[1].code_addr, CODE_BASE + 400);
    }

    #[test]
    fn block_db_errors() {
        assert!(matches!(parse_block_db("0 3\n9 1\n", 3), Err(FrontendError::BlockDb { line: 2, .. })));
        assert!(matches!(parse_block_db("0 3\n0 4\n", 3), Err(FrontendError::BlockDb { line: 2, .. })));
        assert!(matches!(parse_block_db("# c\n1 x\n", 3), Err(FrontendError::BlockDb { line: 2, .. })));
    }

    #[test]
    fn cost_table_parse() {
        let t = CostTable::parse("div = 1 # hardware divider\nmul=3\n").unwrap();
        assert_eq!(t.get(CostKind::Div), 1);
        assert_eq!(t.get(CostKind::Mul), 3);
        assert_eq!(t.get(CostKind::Call), 4);
        assert_eq!(CostTable::parse(&CostTable::default().to_string()).unwrap(), CostTable::default());
        assert!(CostTable::parse("bogus = 1").is_err());
    }
}

//! Name resolution, checking and lowering of the syntax tree into basic
//! blocks. Also decides data placement for parallel regions and renders the
//! marker-annotated listing.

use std::collections::HashMap;

use super::ast::*;
use super::unparse::{decl_text, for_header, simple_stmt_text};
use super::*;

const PENDING: BlockId = BlockId::MAX;

pub(super) fn lower(unit: &TranslationUnit) -> Result<Cfg, FrontendError> {
    let mut l = Lowerer::default();
    l.collect_signatures(unit)?;
    for item in &unit.items {
        match item {
            Item::Global(d) => l.global(d)?,
            Item::Function(f) => l.function(f)?,
        }
    }
    l.finish()
}

struct Signature {
    id: FuncId,
    returns_value: bool,
    params: Vec<Option<Vec<Option<u32>>>>,
}

struct PendingBlock {
    function: FuncId,
    stmts: Vec<IrStmt>,
    term: Option<Terminator>,
    line: u32,
    term_line: u32,
    marker_label: String,
}

struct RegionCtx {
    scope_depth: usize,
}

#[derive(Default)]
struct Lowerer {
    vars: Vec<VarInfo>,
    var_depth: Vec<usize>,
    globals: HashMap<String, VarId>,
    sigs: HashMap<String, Signature>,
    scopes: Vec<HashMap<String, VarId>>,
    cur_func: FuncId,
    cur_returns_value: bool,
    functions: Vec<FunctionDef>,
    blocks: Vec<PendingBlock>,
    markers: Vec<Marker>,
    regions: Vec<ParallelRegion>,
    locks: Vec<CriticalLock>,
    cur: Option<BlockId>,
    region: Option<RegionCtx>,
    held_locks: Vec<LockId>,
    calls: Vec<(FuncId, FuncId, Span)>,
    region_count: u32,
    annot: String,
    indent: usize,
}

impl Lowerer {
    fn collect_signatures(&mut self, unit: &TranslationUnit) -> Result<(), FrontendError> {
        let mut id = 0;
        for item in &unit.items {
            if let Item::Function(f) = item {
                if f.name == "print" {
                    return Err(FrontendError::semantic(f.span, "`print` is a built-in function"));
                }
                let sig = Signature {
                    id,
                    returns_value: f.returns_value,
                    params: f.params.iter().map(|p| p.dims.clone()).collect(),
                };
                if self.sigs.insert(f.name.clone(), sig).is_some() {
                    return Err(FrontendError::semantic(f.span, format!("function `{}` defined twice", f.name)));
                }
                id += 1;
            }
        }
        Ok(())
    }

    fn line(&mut self, text: &str) {
        for _ in 0..self.indent {
            self.annot.push_str("    ");
        }
        self.annot.push_str(text);
        self.annot.push('\n');
    }

    fn marker(&mut self, block: BlockId, kind: MarkerKind, line: u32) -> String {
        let id = self.markers.len() as u32;
        self.markers.push(Marker { id, block, kind, line });
        let label = marker_label(id);
        self.line(&format!("asm(\"{label}\");"));
        label
    }

    fn start_block(&mut self, line: u32) -> BlockId {
        let id = self.blocks.len() as BlockId;
        let marker_label = self.marker(id, MarkerKind::Start, line);
        self.blocks.push(PendingBlock { function: self.cur_func, stmts: Vec::new(), term: None, line, term_line: line, marker_label });
        self.cur = Some(id);
        id
    }

    /// Starts the first block of a nested body, indented in the listing.
    fn start_inner(&mut self, line: u32) -> BlockId {
        self.indent += 1;
        let b = self.start_block(line);
        self.indent -= 1;
        b
    }

    fn close(&mut self, term: Terminator) -> BlockId {
        let id = self.cur.expect("no open block");
        let b = &self.blocks[id as usize];
        let line = b.stmts.last().map_or(b.line, |s| s.line);
        self.close_at(term, line)
    }

    fn close_at(&mut self, term: Terminator, line: u32) -> BlockId {
        let id = self.cur.take().expect("no open block");
        let b = &mut self.blocks[id as usize];
        b.term = Some(term);
        b.term_line = line;
        id
    }

    fn patch(&mut self, block: BlockId, f: impl FnOnce(&mut Terminator)) {
        f(self.blocks[block as usize].term.as_mut().expect("block not closed"));
    }

    fn push(&mut self, kind: IrStmtKind, line: u32) {
        let id = self.cur.expect("no open block");
        self.blocks[id as usize].stmts.push(IrStmt { kind, line });
    }

    fn new_var(&mut self, info: VarInfo) -> VarId {
        let id = self.vars.len() as VarId;
        self.vars.push(info);
        self.var_depth.push(self.scopes.len().saturating_sub(1));
        id
    }

    fn declare_local(&mut self, name: &str, dims: Vec<u32>, kind: VarKind, span: Span) -> Result<VarId, FrontendError> {
        if self.scopes.last().is_some_and(|s| s.contains_key(name)) {
            return Err(FrontendError::semantic(span, format!("`{name}` already declared in this scope")));
        }
        let id = self.new_var(VarInfo {
            name: name.to_string(),
            function: Some(self.cur_func),
            kind,
            dims,
            placement: Placement::Private,
            init: 0,
            span,
        });
        self.scopes.last_mut().expect("scope").insert(name.to_string(), id);
        Ok(id)
    }

    fn global(&mut self, d: &VarDecl) -> Result<(), FrontendError> {
        if self.globals.contains_key(&d.name) {
            return Err(FrontendError::semantic(d.span, format!("global `{}` declared twice", d.name)));
        }
        let init = match &d.init {
            Some(e) => const_eval(e)?,
            None => 0,
        };
        let id = self.new_var(VarInfo {
            name: d.name.clone(),
            function: None,
            kind: VarKind::Global,
            dims: d.dims.clone(),
            placement: Placement::Shared,
            init,
            span: d.span,
        });
        self.globals.insert(d.name.clone(), id);
        self.line(&format!("int {d};"));
        Ok(())
    }

    fn function(&mut self, f: &FunctionAst) -> Result<(), FrontendError> {
        let id = self.sigs[&f.name].id;
        self.cur_func = id;
        self.cur_returns_value = f.returns_value;
        self.region_count = 0;
        self.scopes = vec![HashMap::new()];
        let mut params = Vec::new();
        for p in &f.params {
            let (dims, kind) = match &p.dims {
                None => (Vec::new(), VarKind::Param),
                Some(d) => (d.iter().map(|x| x.unwrap_or(0)).collect(), VarKind::ArrayParam),
            };
            params.push(self.declare_local(&p.name, dims, kind, p.span)?);
        }
        let param_text: Vec<String> = f
            .params
            .iter()
            .map(|p| {
                let dims: String = p
                    .dims
                    .iter()
                    .flatten()
                    .map(|d| d.map_or("[]".to_string(), |n| format!("[{n}]")))
                    .collect();
                format!("int {}{dims}", p.name)
            })
            .collect();
        self.annot.push('\n');
        let ret = if f.returns_value { "int" } else { "void" };
        self.line(&format!("{ret} {}({}) {{", f.name, param_text.join(", ")));
        self.indent += 1;
        let first = self.blocks.len() as BlockId;
        let entry = self.start_block(f.span.line);
        self.stmts(&f.body)?;
        if self.cur.is_some() {
            self.close(Terminator::Return(None));
        }
        self.indent -= 1;
        self.line("}");
        self.functions.push(FunctionDef {
            id,
            name: f.name.clone(),
            returns_value: f.returns_value,
            params,
            entry,
            blocks: first..self.blocks.len() as BlockId,
            span: f.span,
        });
        Ok(())
    }

    fn stmts(&mut self, stmts: &[Stmt]) -> Result<(), FrontendError> {
        stmts.iter().try_for_each(|s| self.stmt(s))
    }

    fn scoped(&mut self, f: impl FnOnce(&mut Self) -> Result<(), FrontendError>) -> Result<(), FrontendError> {
        self.scopes.push(HashMap::new());
        let r = f(self);
        self.scopes.pop();
        r
    }

    /// Lowers a nested body (then/else/loop/critical) with braces in the listing.
    fn body(&mut self, s: &Stmt) -> Result<(), FrontendError> {
        self.indent += 1;
        let r = match s {
            Stmt::Block(stmts, _) => self.scoped(|l| l.stmts(stmts)),
            other => self.scoped(|l| l.stmt(other)),
        };
        self.indent -= 1;
        r
    }

    fn end_marker(&mut self, block: BlockId, line: u32) {
        self.indent += 1;
        self.marker(block, MarkerKind::End, line);
        self.indent -= 1;
    }

    fn stmt(&mut self, s: &Stmt) -> Result<(), FrontendError> {
        let span = s.span();
        if self.cur.is_none() {
            return Err(FrontendError::semantic(span, "unreachable statement"));
        }
        let line = span.line;
        match s {
            Stmt::Decl(decls) => {
                for d in decls {
                    let init = d.init.as_ref().map(|e| self.expr(e)).transpose()?;
                    let var = self.declare_local(&d.name, d.dims.clone(), VarKind::Local, d.span)?;
                    let kind = match init {
                        Some(value) => IrStmtKind::Assign {
                            place: Place { var, indices: vec![] },
                            op: AssignOp::Set,
                            value,
                        },
                        None => IrStmtKind::Declare(var),
                    };
                    self.push(kind, d.span.line);
                }
                self.line(&decl_text(decls));
            }
            Stmt::Assign { .. } | Stmt::IncDec { .. } | Stmt::Expr(..) => {
                let kind = self.simple(s)?;
                self.push(kind, line);
                self.line(&format!("{};", simple_stmt_text(s)));
            }
            Stmt::If { cond, then_branch, else_branch, .. } => {
                let cond = self.expr(cond)?;
                self.line(&format!("if ({}) {{", expr_of(s)));
                let test = self.close_at(Terminator::Branch { cond, then_block: PENDING, else_block: PENDING }, line);
                let then_b = self.start_inner(then_branch.span().line);
                self.patch(test, |t| set_branch(t, Some(then_b), None));
                self.body(then_branch)?;
                let then_end = match self.cur {
                    Some(b) => {
                        self.end_marker(b, then_branch.span().line);
                        Some(self.close(Terminator::Jump { target: PENDING, counted: else_branch.is_some() }))
                    }
                    None => None,
                };
                self.line("}");
                let mut else_end = None;
                if let Some(e) = else_branch {
                    self.line("else {");
                    let else_b = self.start_inner(e.span().line);
                    self.patch(test, |t| set_branch(t, None, Some(else_b)));
                    self.body(e)?;
                    if let Some(b) = self.cur {
                        self.end_marker(b, e.span().line);
                        else_end = Some(self.close(Terminator::Jump { target: PENDING, counted: false }));
                    }
                    self.line("}");
                }
                if then_end.is_none() && else_branch.is_some() && else_end.is_none() {
                    return Ok(());
                }
                let join = self.start_block(line);
                for b in [then_end, else_end].into_iter().flatten() {
                    self.patch(b, |t| set_jump(t, join));
                }
                if else_branch.is_none() {
                    self.patch(test, |t| set_branch(t, None, Some(join)));
                }
            }
            Stmt::While { cond, body, .. } => {
                let header = self.loop_header(line);
                self.line(&format!("while ({}) {{", expr_of(s)));
                let cond = self.expr(cond)?;
                self.loop_rest(header, cond, body, None, line)?;
                self.line("}");
            }
            Stmt::For { init, cond, step, body, .. } => {
                self.scoped(|l| {
                    match init {
                        None => {}
                        Some(ForInit::Decl(d)) => {
                            let value = d.init.as_ref().map(|e| l.expr(e)).transpose()?;
                            let var = l.declare_local(&d.name, vec![], VarKind::Local, d.span)?;
                            let kind = match value {
                                Some(value) => {
                                    IrStmtKind::Assign { place: Place { var, indices: vec![] }, op: AssignOp::Set, value }
                                }
                                None => IrStmtKind::Declare(var),
                            };
                            l.push(kind, line);
                        }
                        Some(ForInit::Assign(a)) => {
                            let kind = l.simple(a)?;
                            l.push(kind, line);
                        }
                    }
                    let Some(cond) = cond else {
                        return Err(FrontendError::semantic(span, "`for` loops require a condition"));
                    };
                    let header = l.loop_header(line);
                    l.line(&format!("{} {{", for_header(init, &Some(cond.clone()), step)));
                    let cond = l.expr(cond)?;
                    let step = step.as_ref().map(|st| l.simple(st)).transpose()?;
                    l.loop_rest(header, cond, body, step, line)?;
                    l.line("}");
                    Ok(())
                })?;
            }
            Stmt::Return(value, _) => {
                if self.region.is_some() {
                    return Err(FrontendError::semantic(span, "`return` inside a parallel loop"));
                }
                if !self.held_locks.is_empty() {
                    return Err(FrontendError::semantic(span, "`return` inside a critical section"));
                }
                let value = match value {
                    Some(e) if !self.cur_returns_value => {
                        return Err(FrontendError::semantic(e.span(), "void function returns a value"))
                    }
                    Some(e) => Some(self.expr(e)?),
                    None => None,
                };
                self.line(&match &value {
                    Some(_) => format!("return {};", stmt_return_text(s)),
                    None => "return;".into(),
                });
                self.close_at(Terminator::Return(value), line);
            }
            Stmt::Block(stmts, _) => {
                self.line("{");
                self.indent += 1;
                self.scoped(|l| l.stmts(stmts))?;
                self.indent -= 1;
                self.line("}");
            }
            Stmt::Empty(_) => {}
            Stmt::Pragma { directive: Directive::Critical { name }, body, .. } => {
                let lock = self.lock_for(name);
                if self.held_locks.contains(&lock) {
                    return Err(FrontendError::semantic(span, "nested critical section on the same lock"));
                }
                self.line(&Directive::Critical { name: name.clone() }.to_string());
                self.line("{");
                let before = self.close(Terminator::Acquire { lock, next: PENDING });
                let inner = self.start_inner(body.span().line);
                self.patch(before, |t| set_next(t, inner));
                self.held_locks.push(lock);
                let r = self.body(body);
                self.held_locks.pop();
                r?;
                let last = self.cur.expect("critical bodies cannot return");
                self.end_marker(last, body.span().line);
                self.close(Terminator::Release { lock, next: PENDING });
                self.line("}");
                let after = self.start_block(line);
                self.patch(last, |t| set_next(t, after));
            }
            Stmt::Pragma { directive: d @ Directive::ParallelFor { shared, private }, body, .. } => {
                if self.region.is_some() {
                    return Err(FrontendError::semantic(span, "nested `parallel for` is not supported"));
                }
                if !self.held_locks.is_empty() {
                    return Err(FrontendError::semantic(span, "`parallel for` inside a critical section"));
                }
                self.line(&d.to_string());
                let Stmt::For { init, cond, step, body: loop_body, .. } = &**body else {
                    unreachable!("parser guarantees a for loop")
                };
                self.parallel_for(shared, private, init, cond, step, loop_body, body.span())?;
            }
        }
        Ok(())
    }

    fn lock_for(&mut self, name: &Option<String>) -> LockId {
        if let Some(l) = self.locks.iter().find(|l| &l.name == name) {
            return l.id;
        }
        let id = self.locks.len() as LockId;
        self.locks.push(CriticalLock { id, name: name.clone() });
        id
    }

    /// Starts a loop header block, reusing the current block when it is empty.
    fn loop_header(&mut self, line: u32) -> BlockId {
        let cur = self.cur.expect("open block");
        if self.blocks[cur as usize].stmts.is_empty() {
            return cur;
        }
        let pre = self.close(Terminator::Jump { target: PENDING, counted: false });
        let header = self.start_block(line);
        self.patch(pre, |t| set_jump(t, header));
        header
    }

    fn loop_rest(
        &mut self,
        header: BlockId,
        cond: IrExpr,
        body: &Stmt,
        step: Option<IrStmtKind>,
        line: u32,
    ) -> Result<BlockId, FrontendError> {
        debug_assert_eq!(self.cur, Some(header));
        self.close_at(Terminator::Branch { cond, then_block: PENDING, else_block: PENDING }, line);
        let body_b = self.start_inner(body.span().line);
        self.patch(header, |t| set_branch(t, Some(body_b), None));
        self.body(body)?;
        if self.cur.is_some() {
            if let Some(step) = step {
                self.push(step, line);
            }
            let last = self.cur.expect("open block");
            self.end_marker(last, body.span().line);
            self.close(Terminator::Jump { target: header, counted: true });
        }
        let exit = self.start_block(line);
        self.patch(header, |t| set_branch(t, None, Some(exit)));
        Ok(exit)
    }

    #[allow(clippy::too_many_arguments)]
    fn parallel_for(
        &mut self,
        shared: &[String],
        private: &[String],
        init: &Option<ForInit>,
        cond: &Option<Expr>,
        step: &Option<Box<Stmt>>,
        body: &Stmt,
        span: Span,
    ) -> Result<(), FrontendError> {
        let line = span.line;
        let canon = |msg: &str| FrontendError::semantic(span, format!("`parallel for` needs a canonical loop: {msg}"));
        // Loop variable name and lower bound expression.
        let (var_name, lo_expr, declared) = match init {
            Some(ForInit::Decl(d)) => (d.name.clone(), d.init.clone().ok_or_else(|| canon("missing initial value"))?, true),
            Some(ForInit::Assign(a)) => match &**a {
                Stmt::Assign { target, op: AssignOp::Set, value, .. } if target.indices.is_empty() => {
                    (target.name.clone(), value.clone(), false)
                }
                _ => return Err(canon("initializer must be `v = expr`")),
            },
            None => return Err(canon("missing initializer")),
        };
        let (inclusive, hi_expr) = match cond {
            Some(Expr::Binary(op @ (BinOp::Lt | BinOp::Le), lhs, rhs, _))
                if matches!(&**lhs, Expr::Var(n, _) if *n == var_name) =>
            {
                (*op == BinOp::Le, (**rhs).clone())
            }
            _ => return Err(canon("condition must be `v < expr` or `v <= expr`")),
        };
        let unit_step = match step.as_deref() {
            Some(Stmt::IncDec { target, increment: true, .. }) => target.name == var_name && target.indices.is_empty(),
            Some(Stmt::Assign { target, op: AssignOp::Add, value: Expr::Int(1, _), .. }) => {
                target.name == var_name && target.indices.is_empty()
            }
            Some(Stmt::Assign { target, op: AssignOp::Set, value: Expr::Binary(BinOp::Add, l, r, _), .. }) => {
                target.name == var_name
                    && target.indices.is_empty()
                    && matches!(&**l, Expr::Var(n, _) if *n == var_name)
                    && matches!(&**r, Expr::Int(1, _))
            }
            _ => false,
        };
        if !unit_step {
            return Err(canon("step must increment the loop variable by one"));
        }
        for n in shared {
            if private.contains(n) {
                return Err(FrontendError::semantic(span, format!("`{n}` is both shared and private")));
            }
        }
        if private.contains(&var_name) && declared {
            return Err(FrontendError::semantic(span, format!("`{var_name}` is declared by the loop")));
        }

        // Bounds are evaluated by the forking core before the region starts.
        let lo = self.expr(&lo_expr)?;
        let hi = self.expr(&hi_expr)?;
        let shared_ids: Vec<VarId> =
            shared.iter().map(|n| self.resolve(n, span)).collect::<Result<_, _>>()?;

        self.scopes.push(HashMap::new());
        let region_depth = self.scopes.len() - 1;
        let result = (|| {
            for &v in &shared_ids {
                if self.vars[v as usize].function.is_some() && self.vars[v as usize].kind != VarKind::ArrayParam {
                    self.vars[v as usize].placement = Placement::Shared;
                }
            }
            let mut privatize = private.to_vec();
            if !declared && !privatize.contains(&var_name) {
                privatize.push(var_name.clone());
            }
            for n in &privatize {
                let orig = self.resolve(n, span)?;
                let info = &self.vars[orig as usize];
                if info.kind == VarKind::ArrayParam {
                    return Err(FrontendError::semantic(span, format!("array parameter `{n}` cannot be private")));
                }
                let dims = info.dims.clone();
                self.declare_local(n, dims, VarKind::Local, span)?;
            }
            let var = if declared {
                self.declare_local(&var_name, vec![], VarKind::Local, span)?
            } else {
                self.scopes.last().expect("scope")[&var_name]
            };
            self.region = Some(RegionCtx { scope_depth: region_depth });

            let id = self.regions.len() as RegionId;
            self.close(Terminator::Fork { region: id });
            let header = self.start_block(line);
            self.line(&format!("{} {{", for_header(init, cond, step)));
            let cond_ir = self.expr(cond.as_ref().expect("checked"))?;
            let step_ir = self.simple(step.as_deref().expect("checked"))?;
            let exit = self.loop_rest(header, cond_ir, body, Some(step_ir), line)?;
            self.line("}");
            let fname = self.functions_name();
            self.regions.push(ParallelRegion {
                id,
                function: self.cur_func,
                var,
                lo,
                hi,
                inclusive,
                header,
                exit,
                outlined_name: format!("{fname}._omp_fn.{}", self.region_count),
                line,
            });
            self.region_count += 1;
            Ok(())
        })();
        self.region = None;
        self.scopes.pop();
        result
    }

    fn functions_name(&self) -> String {
        self.sigs.iter().find(|(_, s)| s.id == self.cur_func).map(|(n, _)| n.clone()).expect("current function")
    }

    fn resolve(&mut self, name: &str, span: Span) -> Result<VarId, FrontendError> {
        let found = self.scopes.iter().rev().find_map(|s| s.get(name).copied()).or_else(|| self.globals.get(name).copied());
        let Some(id) = found else {
            return Err(FrontendError::Undeclared { line: span.line, col: span.col, name: name.to_string() });
        };
        if let Some(ctx) = &self.region {
            let info = &self.vars[id as usize];
            let outer = info.function == Some(self.cur_func) && self.var_depth[id as usize] < ctx.scope_depth;
            if outer && info.kind != VarKind::ArrayParam {
                self.vars[id as usize].placement = Placement::Shared;
            }
        }
        Ok(id)
    }

    fn simple(&mut self, s: &Stmt) -> Result<IrStmtKind, FrontendError> {
        Ok(match s {
            Stmt::Assign { target, op, value, .. } => {
                let value = self.expr(value)?;
                let place = self.place(target)?;
                IrStmtKind::Assign { place, op: *op, value }
            }
            Stmt::IncDec { target, increment, .. } => {
                IrStmtKind::IncDec { place: self.place(target)?, increment: *increment }
            }
            Stmt::Expr(Expr::Call { name, args, span }, _) => IrStmtKind::Eval(self.call(name, args, *span, false)?),
            other => return Err(FrontendError::semantic(other.span(), "expected assignment or call")),
        })
    }

    fn place(&mut self, lv: &LValue) -> Result<Place, FrontendError> {
        let var = self.resolve(&lv.name, lv.span)?;
        let rank = self.vars[var as usize].dims.len();
        if lv.indices.len() != rank {
            let msg = if rank == 0 {
                format!("`{}` is not an array", lv.name)
            } else {
                format!("`{}` needs {rank} indices to be assigned", lv.name)
            };
            return Err(FrontendError::semantic(lv.span, msg));
        }
        let indices = lv.indices.iter().map(|e| self.expr(e)).collect::<Result<_, _>>()?;
        Ok(Place { var, indices })
    }

    /// Lowers an expression that must produce a scalar value.
    fn expr(&mut self, e: &Expr) -> Result<IrExpr, FrontendError> {
        Ok(match e {
            Expr::Int(v, _) => IrExpr::Const(*v as i32),
            Expr::Var(name, span) => {
                let var = self.resolve(name, *span)?;
                if self.vars[var as usize].is_array() {
                    return Err(FrontendError::semantic(*span, format!("array `{name}` used as a value")));
                }
                IrExpr::Load(Place { var, indices: vec![] })
            }
            Expr::Index { name, indices, span } => {
                let var = self.resolve(name, *span)?;
                let rank = self.vars[var as usize].dims.len();
                if indices.len() != rank {
                    let msg = if rank == 0 {
                        format!("`{name}` is not an array")
                    } else if indices.len() > rank {
                        format!("too many indices for `{name}`")
                    } else {
                        format!("sub-array of `{name}` used as a value")
                    };
                    return Err(FrontendError::semantic(*span, msg));
                }
                let indices = indices.iter().map(|i| self.expr(i)).collect::<Result<_, _>>()?;
                IrExpr::Load(Place { var, indices })
            }
            Expr::Unary(op, inner, _) => IrExpr::Unary(*op, Box::new(self.expr(inner)?)),
            Expr::Binary(op, l, r, _) => IrExpr::Binary(*op, Box::new(self.expr(l)?), Box::new(self.expr(r)?)),
            Expr::Call { name, args, span } => self.call(name, args, *span, true)?,
        })
    }

    fn call(&mut self, name: &str, args: &[Expr], span: Span, need_value: bool) -> Result<IrExpr, FrontendError> {
        if name == "print" {
            if need_value {
                return Err(FrontendError::semantic(span, "`print` does not return a value"));
            }
            if args.len() != 1 {
                return Err(FrontendError::semantic(span, "`print` takes one argument"));
            }
            let v = self.expr(&args[0])?;
            return Ok(IrExpr::Call { callee: Callee::Print, args: vec![IrArg::Value(v)] });
        }
        let Some(sig) = self.sigs.get(name) else {
            return Err(FrontendError::Undeclared { line: span.line, col: span.col, name: name.to_string() });
        };
        let (callee, returns_value, params) = (sig.id, sig.returns_value, sig.params.clone());
        if need_value && !returns_value {
            return Err(FrontendError::semantic(span, format!("void function `{name}` used as a value")));
        }
        if params.len() != args.len() {
            return Err(FrontendError::semantic(
                span,
                format!("`{name}` takes {} arguments, {} given", params.len(), args.len()),
            ));
        }
        let mut lowered = Vec::new();
        for (param, arg) in params.iter().zip(args) {
            match param {
                None => lowered.push(IrArg::Value(self.expr(arg)?)),
                Some(pdims) => {
                    let (aname, aidx, aspan) = match arg {
                        Expr::Var(n, s) => (n, &[][..], *s),
                        Expr::Index { name, indices, span } => (name, &indices[..], *span),
                        other => {
                            return Err(FrontendError::semantic(other.span(), "array argument expected"));
                        }
                    };
                    let var = self.resolve(aname, aspan)?;
                    let vdims = self.vars[var as usize].dims.clone();
                    if aidx.len() >= vdims.len() || vdims.len() - aidx.len() != pdims.len() {
                        return Err(FrontendError::semantic(
                            aspan,
                            format!("argument does not match the {}-dimensional array parameter", pdims.len()),
                        ));
                    }
                    let remaining = &vdims[aidx.len()..];
                    let inner_ok = pdims
                        .iter()
                        .zip(remaining)
                        .enumerate()
                        .all(|(i, (p, &a))| match p {
                            Some(n) => *n == a || (i == 0 && a == 0),
                            None => true,
                        });
                    if !inner_ok {
                        return Err(FrontendError::semantic(aspan, "array argument extents do not match parameter"));
                    }
                    let indices = aidx.iter().map(|e| self.expr(e)).collect::<Result<_, _>>()?;
                    lowered.push(IrArg::Array { var, indices });
                }
            }
        }
        self.calls.push((self.cur_func, callee, span));
        Ok(IrExpr::Call { callee: Callee::Function(callee), args: lowered })
    }

    fn finish(self) -> Result<Cfg, FrontendError> {
        let Some(main) = self.functions.iter().find(|f| f.name == "main") else {
            return Err(FrontendError::semantic(Span::new(1, 1), "missing entry function `main`"));
        };
        if !main.params.is_empty() {
            return Err(FrontendError::semantic(main.span, "`main` takes no parameters"));
        }
        let entry = main.id;
        check_recursion(self.functions.len(), &self.calls, &self.functions)?;

        let blocks: Vec<BasicBlock> = self
            .blocks
            .into_iter()
            .enumerate()
            .map(|(i, b)| {
                let term = b.term.expect("every block is closed");
                let successors = term.successors(&self.regions);
                debug_assert!(!successors.contains(&PENDING), "unpatched terminator in block {i}: {term:?}");
                BasicBlock {
                    block_id: i as BlockId,
                    function: b.function,
                    stmts: b.stmts,
                    term,
                    successors,
                    marker_label: b.marker_label,
                    line: b.line,
                    term_line: b.term_line,
                }
            })
            .collect();
        let mut functions = self.functions;
        functions.sort_by_key(|f| f.id);
        Ok(Cfg {
            functions,
            blocks,
            markers: self.markers,
            vars: self.vars,
            regions: self.regions,
            locks: self.locks,
            entry,
            annotated_source: self.annot.trim_start().to_string(),
        })
    }
}

fn set_branch(t: &mut Terminator, then_b: Option<BlockId>, else_b: Option<BlockId>) {
    if let Terminator::Branch { then_block, else_block, .. } = t {
        if let Some(b) = then_b {
            *then_block = b;
        }
        if let Some(b) = else_b {
            *else_block = b;
        }
    } else {
        unreachable!("not a branch: {t:?}");
    }
}

fn set_jump(t: &mut Terminator, to: BlockId) {
    match t {
        Terminator::Jump { target, .. } => *target = to,
        _ => unreachable!("not a jump: {t:?}"),
    }
}

fn set_next(t: &mut Terminator, to: BlockId) {
    match t {
        Terminator::Acquire { next, .. } | Terminator::Release { next, .. } => *next = to,
        _ => unreachable!("not a lock terminator: {t:?}"),
    }
}

fn expr_of(s: &Stmt) -> String {
    match s {
        Stmt::If { cond, .. } | Stmt::While { cond, .. } => cond.to_string(),
        _ => String::new(),
    }
}

fn stmt_return_text(s: &Stmt) -> String {
    match s {
        Stmt::Return(Some(e), _) => e.to_string(),
        _ => String::new(),
    }
}

fn check_recursion(n: usize, calls: &[(FuncId, FuncId, Span)], functions: &[FunctionDef]) -> Result<(), FrontendError> {
    let mut adj: Vec<Vec<(FuncId, Span)>> = vec![Vec::new(); n];
    for &(a, b, s) in calls {
        adj[a as usize].push((b, s));
    }
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state = vec![0u8; n];
    fn dfs(
        v: usize,
        adj: &[Vec<(FuncId, Span)>],
        state: &mut [u8],
        functions: &[FunctionDef],
    ) -> Result<(), FrontendError> {
        state[v] = 1;
        for &(w, span) in &adj[v] {
            match state[w as usize] {
                1 => {
                    let name = &functions.iter().find(|f| f.id == w).expect("function").name;
                    return Err(FrontendError::semantic(span, format!("recursive call to `{name}` is not supported")));
                }
                0 => dfs(w as usize, adj, state, functions)?,
                _ => {}
            }
        }
        state[v] = 2;
        Ok(())
    }
    for v in 0..n {
        if state[v] == 0 {
            dfs(v, &adj, &mut state, functions)?;
        }
    }
    Ok(())
}

fn const_eval(e: &Expr) -> Result<i32, FrontendError> {
    Ok(match e {
        Expr::Int(v, _) => *v as i32,
        Expr::Unary(op, inner, _) => {
            op.apply(const_eval(inner)?)
        }
        Expr::Binary(op, l, r, span) => {
            let (a, b) = (const_eval(l)?, const_eval(r)?);
            op.apply(a, b)
                .ok_or_else(|| FrontendError::semantic(*span, "division by zero in constant expression"))?
        }
        other => return Err(FrontendError::semantic(other.span(), "global initializer must be a constant expression")),
    })
}

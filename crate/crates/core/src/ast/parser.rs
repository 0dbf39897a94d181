//! Recursive-descent parser for the mini-language.
//!
//! ```text
//! program        := stmt+
//! stmt           := func | block | if | while | return | expr ';'?
//! func           := 'fn' NAME '(' (NAME (',' NAME)*)? ')' block
//! block          := '{' stmt* '}'
//! if             := 'if' '(' expr ')' stmt ('else' stmt)?
//! while          := 'while' '(' expr ')' stmt
//! return         := 'return' expr? ';'?
//! expr           := or ('=' expr)?
//! or             := and ('||' and)*
//! and            := equality ('&&' equality)*
//! equality       := relational (('==' | '!=') relational)*
//! relational     := additive (('<' | '>' | '<=' | '>=') additive)*
//! additive       := multiplicative (('+' | '-') multiplicative)*
//! multiplicative := unary (('*' | '/' | '%') unary)*
//! unary          := ('-' | '!') unary | postfix
//! postfix        := primary ('(' (expr (',' expr)*)? ')')*
//! primary        := NAME | NUMBER | STRING | '(' expr ')'
//! ```
//!
//! Production names: FuncDecl, SimpleName, Parameter, BlockStmt, IfStmt,
//! WhileStmt, ReturnStmt, ExprStmt, AssignExpr, LogicalExpr, EqualityExpr,
//! RelationalExpr, AdditiveExpr, MultiplicativeExpr, UnaryExpr, CallExpr,
//! EnclosedExpr, NameExpr, Num, Str, plus Program when the source holds
//! more than one top-level statement. An expression statement without a
//! trailing `;` is represented by the expression node itself, so `a=b+5*c`
//! parses to a bare AssignExpr root.
//!
//! A node's span is the hull of its children's spans and of the keyword and
//! punctuation tokens the production consumes itself.

use super::{lex, AstError, AstNode, AstTree, NodeId, RawToken, SourceSpan, TokenKind};

struct Partial {
    node_type: &'static str,
    span: SourceSpan,
    children: Vec<Partial>,
}

impl Partial {
    fn leaf(node_type: &'static str, span: SourceSpan) -> Self {
        Partial {
            node_type,
            span,
            children: Vec::new(),
        }
    }

    fn with_children(node_type: &'static str, span: SourceSpan, children: Vec<Partial>) -> Self {
        let span = children.iter().fold(span, |acc, c| acc.hull(&c.span));
        Partial {
            node_type,
            span,
            children,
        }
    }
}

/// Nesting limit for statements and expressions; deeper input is rejected
/// instead of exhausting the stack.
pub const MAX_NESTING: usize = 256;

struct Parser<'t> {
    tokens: &'t [RawToken],
    pos: usize,
    depth: usize,
}

type PResult = Result<Partial, AstError>;

impl<'t> Parser<'t> {
    fn peek(&self) -> Option<&'t RawToken> {
        self.tokens.get(self.pos)
    }

    fn peek_text(&self) -> Option<&'t str> {
        self.peek().map(|t| t.text.as_str())
    }

    fn at(&self, text: &str) -> bool {
        self.peek().is_some_and(|t| {
            t.text == text && !matches!(t.kind, TokenKind::StringLiteral | TokenKind::Identifier)
        })
    }

    fn bump(&mut self) -> &'t RawToken {
        let t = &self.tokens[self.pos];
        self.pos += 1;
        t
    }

    fn error(&self, expected: &[&str]) -> AstError {
        let (line, col, found) = match self.peek() {
            Some(t) => (t.span.start_line, t.span.start_col, format!("{:?}", t.text)),
            None => match self.tokens.last() {
                Some(t) => (t.span.end_line, t.span.end_col + 1, "end of input".to_string()),
                None => (1, 1, "end of input".to_string()),
            },
        };
        AstError::Parse {
            line,
            col,
            found,
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn expect(&mut self, text: &str) -> Result<SourceSpan, AstError> {
        if self.at(text) {
            Ok(self.bump().span)
        } else {
            Err(self.error(&[text]))
        }
    }

    fn expect_name(&mut self) -> Result<SourceSpan, AstError> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Identifier => Ok(self.bump().span),
            _ => Err(self.error(&["identifier"])),
        }
    }

    fn program(&mut self) -> PResult {
        let mut stmts = Vec::new();
        while self.peek().is_some() {
            stmts.push(self.stmt()?);
        }
        match stmts.len() {
            0 => Err(self.error(&["statement"])),
            1 => Ok(stmts.pop().expect("one statement")),
            _ => {
                let span = stmts[0].span;
                Ok(Partial::with_children("Program", span, stmts))
            }
        }
    }

    /// Errors abort the whole parse, so callers only restore `depth` on
    /// success paths.
    fn enter(&mut self) -> Result<(), AstError> {
        self.depth += 1;
        if self.depth > MAX_NESTING {
            return Err(self.error(&["shallower nesting"]));
        }
        Ok(())
    }

    fn stmt(&mut self) -> PResult {
        self.enter()?;
        let out = self.stmt_inner()?;
        self.depth -= 1;
        Ok(out)
    }

    fn stmt_inner(&mut self) -> PResult {
        match self.peek_text() {
            Some("fn") if self.at("fn") => self.func(),
            Some("{") if self.at("{") => self.block(),
            Some("if") if self.at("if") => self.if_stmt(),
            Some("while") if self.at("while") => self.while_stmt(),
            Some("return") if self.at("return") => self.return_stmt(),
            _ => {
                let expr = self.expr()?;
                if self.at(";") {
                    let semi = self.bump().span;
                    Ok(Partial::with_children("ExprStmt", semi, vec![expr]))
                } else {
                    Ok(expr)
                }
            }
        }
    }

    fn func(&mut self) -> PResult {
        let kw = self.bump().span;
        let name = Partial::leaf("SimpleName", self.expect_name()?);
        let mut children = vec![name];
        self.expect("(")?;
        if !self.at(")") {
            loop {
                children.push(Partial::leaf("Parameter", self.expect_name()?));
                if self.at(",") {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(")")?;
        if !self.at("{") {
            return Err(self.error(&["{"]));
        }
        children.push(self.block()?);
        Ok(Partial::with_children("FuncDecl", kw, children))
    }

    fn block(&mut self) -> PResult {
        let open = self.expect("{")?;
        let mut stmts = Vec::new();
        while !self.at("}") {
            if self.peek().is_none() {
                return Err(self.error(&["}", "statement"]));
            }
            stmts.push(self.stmt()?);
        }
        let close = self.bump().span;
        Ok(Partial::with_children("BlockStmt", open.hull(&close), stmts))
    }

    fn if_stmt(&mut self) -> PResult {
        let kw = self.bump().span;
        self.expect("(")?;
        let cond = self.expr()?;
        self.expect(")")?;
        let mut children = vec![cond, self.stmt()?];
        if self.at("else") {
            self.bump();
            children.push(self.stmt()?);
        }
        Ok(Partial::with_children("IfStmt", kw, children))
    }

    fn while_stmt(&mut self) -> PResult {
        let kw = self.bump().span;
        self.expect("(")?;
        let cond = self.expr()?;
        self.expect(")")?;
        let body = self.stmt()?;
        Ok(Partial::with_children("WhileStmt", kw, vec![cond, body]))
    }

    fn return_stmt(&mut self) -> PResult {
        let mut span = self.bump().span;
        let mut children = Vec::new();
        if self.peek().is_some() && !self.at(";") && !self.at("}") {
            children.push(self.expr()?);
        }
        if self.at(";") {
            span = span.hull(&self.bump().span);
        }
        Ok(Partial::with_children("ReturnStmt", span, children))
    }

    fn expr(&mut self) -> PResult {
        self.enter()?;
        let out = self.expr_inner()?;
        self.depth -= 1;
        Ok(out)
    }

    fn expr_inner(&mut self) -> PResult {
        let lhs = self.binary(0)?;
        if self.at("=") {
            let op = self.bump().span;
            let rhs = self.expr()?;
            return Ok(Partial::with_children("AssignExpr", op, vec![lhs, rhs]));
        }
        Ok(lhs)
    }

    /// Left-associative binary levels, loosest first.
    fn binary(&mut self, level: usize) -> PResult {
        const LEVELS: &[(&str, &[&str])] = &[
            ("LogicalExpr", &["||"]),
            ("LogicalExpr", &["&&"]),
            ("EqualityExpr", &["==", "!="]),
            ("RelationalExpr", &["<", ">", "<=", ">="]),
            ("AdditiveExpr", &["+", "-"]),
            ("MultiplicativeExpr", &["*", "/", "%"]),
        ];
        let Some(&(node_type, ops)) = LEVELS.get(level) else {
            return self.unary();
        };
        let mut lhs = self.binary(level + 1)?;
        // Each fold deepens the left spine of the tree.
        let entry_depth = self.depth;
        while ops.iter().any(|op| self.at(op)) {
            self.enter()?;
            let op = self.bump().span;
            let rhs = self.binary(level + 1)?;
            lhs = Partial::with_children(node_type, op, vec![lhs, rhs]);
        }
        self.depth = entry_depth;
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult {
        if self.at("-") || self.at("!") {
            let op = self.bump().span;
            self.enter()?;
            let operand = self.unary()?;
            self.depth -= 1;
            return Ok(Partial::with_children("UnaryExpr", op, vec![operand]));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> PResult {
        let mut callee = self.primary()?;
        let entry_depth = self.depth;
        while self.at("(") {
            self.enter()?;
            self.bump();
            let mut children = vec![callee];
            if !self.at(")") {
                loop {
                    children.push(self.expr()?);
                    if self.at(",") {
                        self.bump();
                    } else {
                        break;
                    }
                }
            }
            let close = self.expect(")")?;
            callee = Partial::with_children("CallExpr", close, children);
        }
        self.depth = entry_depth;
        Ok(callee)
    }

    fn primary(&mut self) -> PResult {
        let Some(tok) = self.peek() else {
            return Err(self.error(&["identifier", "number", "string", "("]));
        };
        match tok.kind {
            TokenKind::Identifier => Ok(Partial::leaf("NameExpr", self.bump().span)),
            TokenKind::NumberLiteral => Ok(Partial::leaf("Num", self.bump().span)),
            TokenKind::StringLiteral => Ok(Partial::leaf("Str", self.bump().span)),
            _ if self.at("(") => {
                let open = self.bump().span;
                let inner = self.expr()?;
                let close = self.expect(")")?;
                Ok(Partial::with_children("EnclosedExpr", open.hull(&close), vec![inner]))
            }
            _ => Err(self.error(&["identifier", "number", "string", "("])),
        }
    }
}

/// Parses mini-language source into an [`AstTree`] with pre-order ids.
pub fn parse_mini(text: &str) -> Result<AstTree, AstError> {
    let tokens = lex(text)?;
    parse_tokens(&tokens)
}

pub(crate) fn parse_tokens(tokens: &[RawToken]) -> Result<AstTree, AstError> {
    let mut parser = Parser {
        tokens,
        pos: 0,
        depth: 0,
    };
    let root = parser.program()?;
    let mut nodes = Vec::new();
    flatten(root, None, &mut nodes);
    Ok(AstTree {
        nodes,
        root: NodeId(0),
    })
}

fn flatten(partial: Partial, parent: Option<NodeId>, out: &mut Vec<AstNode>) -> NodeId {
    let id = NodeId(out.len());
    out.push(AstNode {
        id,
        node_type: partial.node_type.to_string(),
        span: partial.span,
        parent,
        children: Vec::new(),
    });
    let children: Vec<NodeId> = partial
        .children
        .into_iter()
        .map(|c| flatten(c, Some(id), out))
        .collect();
    out[id.0].children = children;
    id
}

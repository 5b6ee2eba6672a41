//! Text form of the supported SQL subset.
//!
//! Grammar:
//!
//! ```text
//! query    := SELECT [DISTINCT] ('*' | col (',' col)*) FROM name (',' name)* [WHERE or-expr]
//! or-expr  := and-expr (OR and-expr)*
//! and-expr := not-expr (AND not-expr)*
//! not-expr := NOT not-expr | '(' or-expr ')' | atom
//! atom     := col op (col | integer)      op := '<' | '=' | '>'
//! col      := name '.' name
//! ```
//!
//! Keywords are case-insensitive; NOT binds tighter than AND, AND tighter
//! than OR. Omitting the WHERE clause expresses a tautological filter.

use crate::error::{Error, Result, SourceSpan};
use crate::query::{
    self, BoolExpr, CmpOp, JoinAtom, PredAtom, QualifiedColumn, QueryAst, SelectList,
};
use crate::store::Schema;

/// Parses a query and validates it against the schema.
pub fn parse(text: &str, schema: &Schema) -> Result<QueryAst> {
    let ast = parse_unchecked(text)?;
    query::validate(&ast, schema)?;
    Ok(ast)
}

/// Parses without schema validation. Useful for syntax-only tooling.
pub fn parse_unchecked(text: &str) -> Result<QueryAst> {
    let tokens = lex(text)?;
    let mut p = Parser { tokens, pos: 0 };
    let ast = p.query()?;
    p.expect_end()?;
    Ok(ast)
}

/// Renders an AST to its canonical text. `parse(render(q))` is structurally
/// equal to `q` for canonical ASTs (flattened connectives).
pub fn render(q: &QueryAst) -> String {
    let mut out = String::from("SELECT ");
    if q.distinct {
        out.push_str("DISTINCT ");
    }
    match &q.select {
        SelectList::Star => out.push('*'),
        SelectList::Columns(cols) => {
            let parts: Vec<String> = cols.iter().map(|c| c.to_string()).collect();
            out.push_str(&parts.join(", "));
        }
    }
    out.push_str(" FROM ");
    let tables: Vec<&str> = q.from.iter().map(|s| s.as_str()).collect();
    out.push_str(&tables.join(", "));
    if let Some(expr) = &q.where_clause {
        out.push_str(" WHERE ");
        render_expr(expr, Prec::Or, &mut out);
    }
    out
}

/// Reads a workload file: one query per line, `#` comments and blank lines
/// ignored. Returns each query with its 1-based line number.
pub fn parse_workload(text: &str, schema: &Schema) -> Result<Vec<(usize, QueryAst)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let ast = parse(trimmed, schema).map_err(|e| match e {
            Error::SyntaxError { span, message } => Error::SyntaxError {
                span,
                message: format!("line {}: {message}", i + 1),
            },
            Error::ValidationError(m) => Error::ValidationError(format!("line {}: {m}", i + 1)),
            other => other,
        })?;
        out.push((i + 1, ast));
    }
    Ok(out)
}

#[derive(Copy, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Prec {
    Or,
    And,
    Not,
}

fn render_expr(expr: &BoolExpr, ctx: Prec, out: &mut String) {
    let own = match expr {
        BoolExpr::Or(_) => Prec::Or,
        BoolExpr::And(_) => Prec::And,
        _ => Prec::Not,
    };
    let parens = own < ctx;
    if parens {
        out.push('(');
    }
    match expr {
        BoolExpr::Or(cs) => {
            for (i, c) in cs.iter().enumerate() {
                if i > 0 {
                    out.push_str(" OR ");
                }
                render_expr(c, Prec::And, out);
            }
        }
        BoolExpr::And(cs) => {
            for (i, c) in cs.iter().enumerate() {
                if i > 0 {
                    out.push_str(" AND ");
                }
                render_expr(c, Prec::Not, out);
            }
        }
        BoolExpr::Not(c) => {
            out.push_str("NOT ");
            render_expr(c, Prec::Not, out);
        }
        BoolExpr::Join(j) => {
            out.push_str(&format!("{} {} {}", j.left, j.op, j.right));
        }
        BoolExpr::Pred(p) => {
            out.push_str(&format!("{} {} {}", p.col, p.op, p.value));
        }
    }
    if parens {
        out.push(')');
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Select,
    Distinct,
    From,
    Where,
    And,
    Or,
    Not,
    Star,
    Comma,
    Dot,
    LParen,
    RParen,
    Lt,
    Eq,
    Gt,
    Ident(String),
    Int(i64),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    span: SourceSpan,
}

fn lex(text: &str) -> Result<Vec<Token>> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        let start = i;
        match b {
            b' ' | b'\t' | b'\r' | b'\n' => {
                i += 1;
            }
            b'*' | b',' | b'.' | b'(' | b')' | b'<' | b'=' | b'>' => {
                let tok = match b {
                    b'*' => Tok::Star,
                    b',' => Tok::Comma,
                    b'.' => Tok::Dot,
                    b'(' => Tok::LParen,
                    b')' => Tok::RParen,
                    b'<' => Tok::Lt,
                    b'=' => Tok::Eq,
                    _ => Tok::Gt,
                };
                i += 1;
                tokens.push(Token {
                    tok,
                    span: SourceSpan::new(start, i),
                });
            }
            b'-' | b'0'..=b'9' => {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let s = &text[start..i];
                let value: i64 = s.parse().map_err(|_| Error::SyntaxError {
                    span: SourceSpan::new(start, i),
                    message: format!("bad integer literal {s:?}"),
                })?;
                tokens.push(Token {
                    tok: Tok::Int(value),
                    span: SourceSpan::new(start, i),
                });
            }
            b'A'..=b'Z' | b'a'..=b'z' | b'_' => {
                i += 1;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                let word = &text[start..i];
                let tok = match word.to_ascii_uppercase().as_str() {
                    "SELECT" => Tok::Select,
                    "DISTINCT" => Tok::Distinct,
                    "FROM" => Tok::From,
                    "WHERE" => Tok::Where,
                    "AND" => Tok::And,
                    "OR" => Tok::Or,
                    "NOT" => Tok::Not,
                    _ => Tok::Ident(word.to_string()),
                };
                tokens.push(Token {
                    tok,
                    span: SourceSpan::new(start, i),
                });
            }
            _ => {
                return Err(Error::SyntaxError {
                    span: SourceSpan::new(start, start + 1),
                    message: format!("unexpected character {:?}", text[start..].chars().next().unwrap()),
                });
            }
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn span_here(&self) -> SourceSpan {
        self.tokens
            .get(self.pos)
            .map(|t| t.span)
            .unwrap_or_else(|| {
                let end = self.tokens.last().map(|t| t.span.end).unwrap_or(0);
                SourceSpan::new(end, end)
            })
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).map(|t| t.tok.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<()> {
        match self.peek() {
            Some(t) if *t == want => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err(format!("expected {what}"))),
        }
    }

    fn err(&self, message: String) -> Error {
        Error::SyntaxError {
            span: self.span_here(),
            message,
        }
    }

    fn expect_end(&self) -> Result<()> {
        if self.pos == self.tokens.len() {
            Ok(())
        } else {
            Err(self.err("trailing input after query".into()))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String> {
        match self.peek() {
            Some(Tok::Ident(_)) => match self.bump() {
                Some(Tok::Ident(s)) => Ok(s),
                _ => unreachable!(),
            },
            _ => Err(self.err(format!("expected {what}"))),
        }
    }

    fn qualified_column(&mut self) -> Result<QualifiedColumn> {
        let table = self.ident("table name")?;
        self.expect(Tok::Dot, "'.' after table name")?;
        let column = self.ident("column name")?;
        Ok(QualifiedColumn::new(table, column))
    }

    fn query(&mut self) -> Result<QueryAst> {
        self.expect(Tok::Select, "SELECT")?;
        let distinct = if self.peek() == Some(&Tok::Distinct) {
            self.pos += 1;
            true
        } else {
            false
        };
        let select = if self.peek() == Some(&Tok::Star) {
            self.pos += 1;
            SelectList::Star
        } else {
            let mut cols = vec![self.qualified_column().map_err(|_| {
                self.err("expected '*' or a column list after SELECT".into())
            })?];
            while self.peek() == Some(&Tok::Comma) {
                self.pos += 1;
                cols.push(self.qualified_column()?);
            }
            SelectList::Columns(cols)
        };
        self.expect(Tok::From, "FROM")?;
        let mut from = vec![self.ident("table name")?];
        while self.peek() == Some(&Tok::Comma) {
            self.pos += 1;
            from.push(self.ident("table name")?);
        }
        let where_clause = if self.peek() == Some(&Tok::Where) {
            self.pos += 1;
            Some(self.or_expr()?)
        } else {
            None
        };
        Ok(QueryAst::new(distinct, select, from, where_clause))
    }

    fn or_expr(&mut self) -> Result<BoolExpr> {
        let mut parts = vec![self.and_expr()?];
        while self.peek() == Some(&Tok::Or) {
            self.pos += 1;
            parts.push(self.and_expr()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            BoolExpr::Or(parts)
        })
    }

    fn and_expr(&mut self) -> Result<BoolExpr> {
        let mut parts = vec![self.not_expr()?];
        while self.peek() == Some(&Tok::And) {
            self.pos += 1;
            parts.push(self.not_expr()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            BoolExpr::And(parts)
        })
    }

    fn not_expr(&mut self) -> Result<BoolExpr> {
        if self.peek() == Some(&Tok::Not) {
            self.pos += 1;
            return Ok(BoolExpr::Not(Box::new(self.not_expr()?)));
        }
        if self.peek() == Some(&Tok::LParen) {
            self.pos += 1;
            let inner = self.or_expr()?;
            self.expect(Tok::RParen, "')'")?;
            // flatten so parse(render(..)) is structure-preserving
            return Ok(inner.canonicalize());
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<BoolExpr> {
        let left = self.qualified_column()?;
        let op = match self.bump() {
            Some(Tok::Lt) => CmpOp::Lt,
            Some(Tok::Eq) => CmpOp::Eq,
            Some(Tok::Gt) => CmpOp::Gt,
            _ => {
                return Err(Error::SyntaxError {
                    span: self
                        .tokens
                        .get(self.pos.saturating_sub(1))
                        .map(|t| t.span)
                        .unwrap_or_else(|| SourceSpan::new(0, 0)),
                    message: "expected comparison operator".into(),
                })
            }
        };
        match self.peek() {
            Some(Tok::Int(_)) => {
                let v = match self.bump() {
                    Some(Tok::Int(v)) => v,
                    _ => unreachable!(),
                };
                Ok(BoolExpr::Pred(PredAtom::new(left, op, v)))
            }
            Some(Tok::Ident(_)) => {
                let right = self.qualified_column()?;
                Ok(BoolExpr::Join(JoinAtom::new(left, op, right)))
            }
            _ => Err(self.err("expected integer or column after operator".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::test_fixtures::two_table_schema;

    fn col(t: &str, c: &str) -> QualifiedColumn {
        QualifiedColumn::new(t, c)
    }

    #[test]
    fn parses_distinct_single_pred() {
        let schema = two_table_schema();
        let q = parse("SELECT DISTINCT R.a FROM R WHERE R.a > 5", &schema).unwrap();
        assert!(q.distinct);
        assert_eq!(q.select, SelectList::Columns(vec![col("R", "a")]));
        assert_eq!(
            q.where_clause,
            Some(BoolExpr::Pred(PredAtom::new(col("R", "a"), CmpOp::Gt, 5)))
        );
    }

    #[test]
    fn precedence_not_and_or() {
        let schema = two_table_schema();
        let q = parse(
            "SELECT R.a FROM R WHERE NOT R.a = 5 OR R.b < 2 AND R.b > 0",
            &schema,
        )
        .unwrap();
        let expected = BoolExpr::Or(vec![
            BoolExpr::Not(Box::new(BoolExpr::Pred(PredAtom::new(
                col("R", "a"),
                CmpOp::Eq,
                5,
            )))),
            BoolExpr::And(vec![
                BoolExpr::Pred(PredAtom::new(col("R", "b"), CmpOp::Lt, 2)),
                BoolExpr::Pred(PredAtom::new(col("R", "b"), CmpOp::Gt, 0)),
            ]),
        ]);
        assert_eq!(q.where_clause, Some(expected));
    }

    #[test]
    fn select_from_is_syntax_error() {
        let err = parse_unchecked("SELECT FROM").unwrap_err();
        match err {
            Error::SyntaxError { span, .. } => {
                assert_eq!(&"SELECT FROM"[span.start..span.end], "FROM");
            }
            other => panic!("expected SyntaxError, got {other:?}"),
        }
    }

    #[test]
    fn render_single_atom() {
        let q = QueryAst::new(
            false,
            SelectList::Columns(vec![col("R", "a")]),
            ["R".to_string()],
            Some(BoolExpr::Pred(PredAtom::new(col("R", "a"), CmpOp::Gt, 5))),
        );
        assert_eq!(render(&q), "SELECT R.a FROM R WHERE R.a > 5");
    }

    #[test]
    fn render_preserves_distinct() {
        let q = QueryAst::new(
            true,
            SelectList::Columns(vec![col("R", "a")]),
            ["R".to_string()],
            None,
        );
        assert_eq!(render(&q), "SELECT DISTINCT R.a FROM R");
    }

    #[test]
    fn render_parse_round_trip_with_parens() {
        let schema = two_table_schema();
        let q = QueryAst::new(
            false,
            SelectList::Columns(vec![col("R", "a")]),
            ["R".to_string()],
            Some(BoolExpr::And(vec![
                BoolExpr::Or(vec![
                    BoolExpr::Pred(PredAtom::new(col("R", "a"), CmpOp::Eq, 1)),
                    BoolExpr::Pred(PredAtom::new(col("R", "a"), CmpOp::Eq, 2)),
                ]),
                BoolExpr::Not(Box::new(BoolExpr::Pred(PredAtom::new(
                    col("R", "b"),
                    CmpOp::Lt,
                    0,
                )))),
            ])),
        );
        let text = render(&q);
        let back = parse(&text, &schema).unwrap();
        assert_eq!(back, q, "round trip failed for {text}");
    }

    #[test]
    fn parses_negative_constants() {
        let q = parse_unchecked("SELECT R.a FROM R WHERE R.a > -17").unwrap();
        assert_eq!(
            q.where_clause,
            Some(BoolExpr::Pred(PredAtom::new(col("R", "a"), CmpOp::Gt, -17)))
        );
    }

    #[test]
    fn workload_file_skips_comments() {
        let schema = two_table_schema();
        let text = "# header\n\nSELECT R.a FROM R\nSELECT S.c FROM S WHERE S.c = 1\n";
        let ws = parse_workload(text, &schema).unwrap();
        assert_eq!(ws.len(), 2);
        assert_eq!(ws[0].0, 3);
        assert_eq!(ws[1].0, 4);
    }

    #[test]
    fn workload_error_names_line() {
        let schema = two_table_schema();
        let text = "SELECT R.a FROM R\nSELECT nope FROM R\n";
        let err = parse_workload(text, &schema).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }
}

//! Prefix text form: `(+ t1 (max (+ (max t2 t3) t4) (+ t3 t5)) t6)`.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::{AlgebraError, Expr, OpKind, VarId};

/// Bidirectional map between variable names and ids.
#[derive(Clone, Debug, Default)]
pub struct Symbols {
    names: Vec<String>,
    index: HashMap<String, VarId>,
}

impl Symbols {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut symbols = Symbols::new();
        for name in names {
            symbols.intern(name);
        }
        symbols
    }

    pub fn intern(&mut self, name: impl Into<String>) -> VarId {
        let name = name.into();
        if let Some(id) = self.index.get(&name) {
            return *id;
        }
        let id = VarId(self.names.len() as u32);
        self.index.insert(name.clone(), id);
        self.names.push(name);
        id
    }

    pub fn get(&self, name: &str) -> Option<VarId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: VarId) -> Option<&str> {
        self.names.get(id.index()).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Renders `e` in prefix form. Refuses expressions whose tree leaf count
/// exceeds `max_leaves`, since shared sub-expressions are expanded.
pub fn to_sexpr<N>(e: &Expr, name: N, max_leaves: u64) -> Result<String, AlgebraError>
where
    N: Fn(VarId) -> String,
{
    if e.leaf_count() > max_leaves {
        return Err(AlgebraError::SizeCap {
            size: e.leaf_count(),
            cap: max_leaves,
        });
    }
    let mut out = String::new();
    write_expr(e, &name, &mut out);
    Ok(out)
}

fn write_expr<N: Fn(VarId) -> String>(e: &Expr, name: &N, out: &mut String) {
    match e {
        Expr::Var(v) => out.push_str(&name(*v)),
        Expr::Const(c) => {
            let _ = write!(out, "{c}");
        }
        Expr::Op(node) => {
            out.push('(');
            out.push_str(node.kind().symbol());
            for child in node.children() {
                out.push(' ');
                write_expr(child, name, out);
            }
            out.push(')');
        }
    }
}

#[derive(Debug, PartialEq)]
enum Token<'a> {
    Open(usize),
    Close(usize),
    Atom(&'a str, usize),
}

fn tokenize(text: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, ch) in text.char_indices() {
        let delimiter = ch == '(' || ch == ')' || ch.is_whitespace();
        if delimiter {
            if let Some(s) = start.take() {
                tokens.push(Token::Atom(&text[s..i], s));
            }
            match ch {
                '(' => tokens.push(Token::Open(i)),
                ')' => tokens.push(Token::Close(i)),
                _ => {}
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        tokens.push(Token::Atom(&text[s..], s));
    }
    tokens
}

/// Parses prefix text. Symbols are mapped to ids by `resolve`.
pub fn parse_sexpr<R>(text: &str, mut resolve: R) -> Result<Expr, AlgebraError>
where
    R: FnMut(&str) -> Option<VarId>,
{
    let tokens = tokenize(text);
    let mut pos = 0;
    let e = parse_at(&tokens, &mut pos, &mut resolve)?;
    if pos != tokens.len() {
        return Err(AlgebraError::Parse {
            offset: offset_of(&tokens[pos]),
            message: "trailing input after expression".into(),
        });
    }
    Ok(e)
}

fn offset_of(t: &Token<'_>) -> usize {
    match t {
        Token::Open(o) | Token::Close(o) | Token::Atom(_, o) => *o,
    }
}

fn parse_at<R>(tokens: &[Token<'_>], pos: &mut usize, resolve: &mut R) -> Result<Expr, AlgebraError>
where
    R: FnMut(&str) -> Option<VarId>,
{
    let Some(tok) = tokens.get(*pos) else {
        return Err(AlgebraError::Parse {
            offset: usize::MAX,
            message: "unexpected end of input".into(),
        });
    };
    *pos += 1;
    match tok {
        Token::Atom(s, offset) => {
            if let Ok(c) = s.parse::<f64>() {
                return Ok(Expr::Const(c));
            }
            resolve(s)
                .map(Expr::Var)
                .ok_or_else(|| AlgebraError::UnknownSymbol {
                    name: s.to_string(),
                    offset: *offset,
                })
        }
        Token::Close(offset) => Err(AlgebraError::Parse {
            offset: *offset,
            message: "unexpected ')'".into(),
        }),
        Token::Open(offset) => {
            let kind = match tokens.get(*pos) {
                Some(Token::Atom("max", _)) => OpKind::Max,
                Some(Token::Atom("min", _)) => OpKind::Min,
                Some(Token::Atom("+", _)) => OpKind::Sum,
                _ => {
                    return Err(AlgebraError::Parse {
                        offset: *offset,
                        message: "expected operator max, min or +".into(),
                    })
                }
            };
            *pos += 1;
            let mut children = Vec::new();
            loop {
                match tokens.get(*pos) {
                    Some(Token::Close(_)) => {
                        *pos += 1;
                        break;
                    }
                    Some(_) => children.push(parse_at(tokens, pos, resolve)?),
                    None => {
                        return Err(AlgebraError::Parse {
                            offset: *offset,
                            message: "unbalanced '('".into(),
                        })
                    }
                }
            }
            if children.len() < 2 {
                return Err(AlgebraError::Parse {
                    offset: *offset,
                    message: format!("{} needs at least two operands", kind.symbol()),
                });
            }
            Ok(Expr::op(kind, children))
        }
    }
}

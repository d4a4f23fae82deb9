use super::{var_index, Bindings, Func, Node, Slice};
use crate::error::{Error, Result};

pub(super) struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    n: usize,
    bindings: &'a Bindings,
}

fn syntax(offset: usize, message: impl Into<String>) -> Error {
    Error::Syntax { offset, message: message.into() }
}

impl<'a> Parser<'a> {
    pub(super) fn new(src: &'a str, n: usize, bindings: &'a Bindings) -> Self {
        Parser { src, bytes: src.as_bytes(), pos: 0, n, bindings }
    }

    pub(super) fn parse(mut self) -> Result<Node> {
        self.skip_ws();
        if self.pos == self.bytes.len() {
            return Err(syntax(0, "empty expression"));
        }
        let node = self.expr()?;
        self.skip_ws();
        if self.pos != self.bytes.len() {
            return Err(syntax(self.pos, format!("unexpected `{}`", self.bytes[self.pos] as char)));
        }
        Ok(node)
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        match self.peek() {
            Some(b) if b == c => {
                self.pos += 1;
                Ok(())
            }
            Some(b) => Err(syntax(self.pos, format!("expected `{}`, found `{}`", c as char, b as char))),
            None => Err(syntax(self.pos, format!("expected `{}`, found end of input", c as char))),
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(b'/') => {
                    self.pos += 1;
                    lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Node> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(match self.unary()? {
                    Node::Num(v) => Node::Num(-v),
                    other => Node::Neg(Box::new(other)),
                })
            }
            Some(b'+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        let start = self.pos;
        match self.peek() {
            None => Err(syntax(self.pos, "unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
            Some(c) => Err(syntax(start.max(self.pos), format!("unexpected `{}`", c as char))),
        }
    }

    fn number(&mut self) -> Result<Node> {
        let start = self.pos;
        let b = self.bytes;
        let mut i = self.pos;
        while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'.') {
            i += 1;
        }
        if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
            let mut j = i + 1;
            if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
                j += 1;
            }
            if j < b.len() && b[j].is_ascii_digit() {
                while j < b.len() && b[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        let text = &self.src[start..i];
        let v: f64 = text
            .parse()
            .map_err(|_| syntax(start, format!("malformed number `{text}`")))?;
        self.pos = i;
        Ok(Node::Num(v))
    }

    fn identifier(&mut self) -> Result<Node> {
        let start = self.pos;
        let b = self.bytes;
        let mut i = self.pos;
        while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_') {
            i += 1;
        }
        let name = &self.src[start..i];
        self.pos = i;

        if name == "pi" {
            return Ok(Node::Num(std::f64::consts::PI));
        }
        if let Some(idx) = var_index(name, self.n) {
            return Ok(Node::Var(idx));
        }
        if name == "norm2" {
            self.expect(b'(')?;
            let arg_start = {
                self.skip_ws();
                self.pos
            };
            let slice = match self.peek() {
                Some(b'q') => Slice::Q,
                Some(b'p') => Slice::P,
                _ => return Err(syntax(arg_start, "norm2 takes `q` or `p`")),
            };
            self.pos += 1;
            if matches!(self.bytes.get(self.pos), Some(c) if c.is_ascii_alphanumeric()) {
                return Err(syntax(arg_start, "norm2 takes `q` or `p`"));
            }
            self.expect(b')')?;
            return Ok(Node::Norm2(slice));
        }
        if let Some(f) = Func::from_name(name) {
            self.expect(b'(')?;
            let arg = self.expr()?;
            self.expect(b')')?;
            return Ok(Node::Call(f, Box::new(arg)));
        }
        if let Some(bound) = self.bindings.get(name) {
            // `H` and `H(x)` both denote the bound expression at the current point.
            if self.peek() == Some(b'(') {
                self.pos += 1;
                self.skip_ws();
                let arg_start = self.pos;
                if self.bytes.get(self.pos) != Some(&b'x')
                    || matches!(self.bytes.get(self.pos + 1), Some(c) if c.is_ascii_alphanumeric())
                {
                    return Err(syntax(arg_start, format!("`{name}` may only be applied to `x`")));
                }
                self.pos += 1;
                self.expect(b')')?;
            }
            return Ok(bound.clone());
        }
        Err(Error::UnknownIdentifier { name: name.to_string(), offset: start })
    }
}

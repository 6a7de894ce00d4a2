//! Small cursor used by the hand-written parsers for haps and formulas.

use crate::agent::{AgentId, MAX_AGENTS};
use crate::error::{Error, Result};

pub(crate) struct Cursor<'a> {
    src: &'a str,
    pos: usize,
    what: &'static str,
}

impl<'a> Cursor<'a> {
    pub fn new(src: &'a str, what: &'static str) -> Self {
        Cursor { src, pos: 0, what }
    }

    pub fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            what: self.what,
            offset: self.pos,
            message: message.into(),
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    pub fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    pub fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos == self.src.len()
    }

    pub fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.rest().chars().next()
    }

    pub fn starts_with(&mut self, tok: &str) -> bool {
        self.skip_ws();
        self.rest().starts_with(tok)
    }

    pub fn eat(&mut self, tok: &str) -> bool {
        if self.starts_with(tok) {
            self.pos += tok.len();
            true
        } else {
            false
        }
    }

    pub fn expect(&mut self, tok: &str) -> Result<()> {
        if self.eat(tok) {
            Ok(())
        } else {
            let found: String = self.rest().chars().take(12).collect();
            Err(self.error(format!("expected `{tok}`, found `{found}`")))
        }
    }

    /// Identifier: a letter or `_` followed by letters, digits, `_` or `.`.
    pub fn ident(&mut self) -> Result<&'a str> {
        self.skip_ws();
        let rest = self.rest();
        let mut end = 0;
        for (k, c) in rest.char_indices() {
            let ok = if k == 0 {
                c.is_ascii_alphabetic() || c == '_'
            } else {
                c.is_ascii_alphanumeric() || c == '_' || c == '.'
            };
            if !ok {
                break;
            }
            end = k + c.len_utf8();
        }
        if end == 0 {
            return Err(self.error("expected identifier"));
        }
        self.pos += end;
        Ok(&rest[..end])
    }

    /// Peeks at an identifier without consuming it.
    pub fn peek_ident(&mut self) -> Option<&'a str> {
        let save = self.pos;
        let id = self.ident().ok();
        self.pos = save;
        id
    }

    pub fn uint(&mut self) -> Result<u64> {
        self.skip_ws();
        let rest = self.rest();
        let end = rest
            .char_indices()
            .find(|(_, c)| !c.is_ascii_digit())
            .map(|(k, _)| k)
            .unwrap_or(rest.len());
        if end == 0 {
            return Err(self.error("expected integer"));
        }
        let v = rest[..end]
            .parse()
            .map_err(|_| self.error("integer overflow"))?;
        self.pos += end;
        Ok(v)
    }

    pub fn agent(&mut self) -> Result<AgentId> {
        let v = self.uint()? as usize;
        AgentId::try_new(v).ok_or_else(|| self.error(format!("agent id {v} outside 1..={MAX_AGENTS}")))
    }

    pub fn finish(&mut self) -> Result<()> {
        if self.at_end() {
            Ok(())
        } else {
            let found: String = self.rest().chars().take(12).collect();
            Err(self.error(format!("trailing input `{found}`")))
        }
    }
}

//! Extraction of the `[dim_corr, simp, sim, "feedback"]` list from a model
//! response. The first well-formed list anywhere in the text wins; prose
//! around it is tolerated and flagged.

use super::{CriticError, CriticVerdict};

struct Cursor<'a> {
    s: &'a [u8],
    i: usize,
}

impl Cursor<'_> {
    fn ws(&mut self) {
        while self.i < self.s.len() && self.s[self.i].is_ascii_whitespace() {
            self.i += 1;
        }
    }

    fn eat(&mut self, b: u8) -> Option<()> {
        self.ws();
        if self.s.get(self.i) == Some(&b) {
            self.i += 1;
            Some(())
        } else {
            None
        }
    }

    fn digits(&mut self) -> usize {
        let start = self.i;
        while self.i < self.s.len() && self.s[self.i].is_ascii_digit() {
            self.i += 1;
        }
        self.i - start
    }

    fn number(&mut self) -> Option<f64> {
        self.ws();
        let start = self.i;
        if matches!(self.s.get(self.i), Some(b'+' | b'-')) {
            self.i += 1;
        }
        let int = self.digits();
        let mut frac = 0;
        if self.s.get(self.i) == Some(&b'.') {
            self.i += 1;
            frac = self.digits();
        }
        if int + frac == 0 {
            return None;
        }
        if matches!(self.s.get(self.i), Some(b'e' | b'E')) {
            let save = self.i;
            self.i += 1;
            if matches!(self.s.get(self.i), Some(b'+' | b'-')) {
                self.i += 1;
            }
            if self.digits() == 0 {
                self.i = save;
            }
        }
        std::str::from_utf8(&self.s[start..self.i])
            .ok()?
            .parse()
            .ok()
    }

    fn quoted(&mut self) -> Option<String> {
        self.ws();
        let quote = *self.s.get(self.i)?;
        if quote != b'"' && quote != b'\'' {
            return None;
        }
        self.i += 1;
        let mut out = Vec::new();
        while let Some(&b) = self.s.get(self.i) {
            self.i += 1;
            match b {
                b'\\' => {
                    let esc = *self.s.get(self.i)?;
                    self.i += 1;
                    out.push(match esc {
                        b'n' => b'\n',
                        b't' => b'\t',
                        other => other,
                    });
                }
                b if b == quote => return Some(String::from_utf8_lossy(&out).into_owned()),
                b => out.push(b),
            }
        }
        None
    }

    fn list(&mut self) -> Option<(f64, f64, f64, String)> {
        self.eat(b'[')?;
        let a = self.number()?;
        self.eat(b',')?;
        let b = self.number()?;
        self.eat(b',')?;
        let c = self.number()?;
        self.eat(b',')?;
        let fb = self.quoted()?;
        self.eat(b']')?;
        Some((a, b, c, fb))
    }
}

pub fn parse_verdict(raw: &str) -> Result<CriticVerdict, CriticError> {
    let bytes = raw.as_bytes();
    for start in bytes
        .iter()
        .enumerate()
        .filter_map(|(i, &b)| (b == b'[').then_some(i))
    {
        let mut cur = Cursor { s: bytes, i: start };
        if let Some((a, b, c, feedback)) = cur.list() {
            let mut v = CriticVerdict::new(a, b, c, feedback);
            let outside = raw[..start].trim().is_empty() && raw[cur.i..].trim().is_empty();
            v.flags.extra_text = !outside;
            return Ok(v);
        }
    }
    Err(CriticError::Parse {
        raw: raw.to_string(),
    })
}

/// Lossy UTF-8 front end for arbitrary bytes.
pub fn parse_verdict_bytes(raw: &[u8]) -> Result<CriticVerdict, CriticError> {
    parse_verdict(&String::from_utf8_lossy(raw))
}

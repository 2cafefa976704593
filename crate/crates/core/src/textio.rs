//! Whitespace token reader with line/column tracking, shared by the model
//! and counting-number file parsers.

pub(crate) struct Tokens<'a> {
    rest: &'a str,
    line: usize,
    col: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct TokenError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl<'a> Tokens<'a> {
    pub fn new(text: &'a str) -> Self {
        Tokens {
            rest: text,
            line: 1,
            col: 1,
        }
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.rest.chars().next() {
            if c == '\n' {
                self.line += 1;
                self.col = 1;
            } else if c.is_whitespace() {
                self.col += 1;
            } else {
                break;
            }
            self.rest = &self.rest[c.len_utf8()..];
        }
    }

    pub fn next(&mut self, what: &str) -> Result<(&'a str, usize, usize), TokenError> {
        self.skip_ws();
        if self.rest.is_empty() {
            return Err(TokenError {
                line: self.line,
                col: self.col,
                message: format!("unexpected end of input, expected {what}"),
            });
        }
        let start_line = self.line;
        let start_col = self.col;
        let end = self
            .rest
            .find(|c: char| c.is_whitespace())
            .unwrap_or(self.rest.len());
        let (tok, rest) = self.rest.split_at(end);
        self.rest = rest;
        self.col += tok.chars().count();
        Ok((tok, start_line, start_col))
    }

    pub fn usize(&mut self, what: &str) -> Result<usize, TokenError> {
        let (tok, line, col) = self.next(what)?;
        tok.parse().map_err(|_| TokenError {
            line,
            col,
            message: format!("expected {what} (an unsigned integer), got `{tok}`"),
        })
    }

    pub fn f64(&mut self, what: &str) -> Result<f64, TokenError> {
        let (tok, line, col) = self.next(what)?;
        tok.parse().map_err(|_| TokenError {
            line,
            col,
            message: format!("expected {what} (a real number), got `{tok}`"),
        })
    }

    pub fn expect_literal(&mut self, lit: &str) -> Result<(), TokenError> {
        let (tok, line, col) = self.next(lit)?;
        if tok == lit {
            Ok(())
        } else {
            Err(TokenError {
                line,
                col,
                message: format!("expected literal `{lit}`, got `{tok}`"),
            })
        }
    }

    pub fn expect_end(&mut self) -> Result<(), TokenError> {
        self.skip_ws();
        if self.rest.is_empty() {
            Ok(())
        } else {
            let preview: String = self.rest.chars().take(12).collect();
            Err(TokenError {
                line: self.line,
                col: self.col,
                message: format!("trailing content starting at `{preview}`"),
            })
        }
    }

    pub fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.rest.is_empty()
    }
}

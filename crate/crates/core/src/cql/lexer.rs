//! On-demand tokenizer. Offsets are 0-based character indices; errors report
//! them 1-based.

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Word(String),
    Number(String),
    Str(String),
    Eq,
    EqEq,
    Lt,
    Gt,
    Le,
    Ge,
    Comma,
    Semi,
    Bad(char),
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Word(w) => format!("'{w}'"),
            Tok::Number(n) => format!("number {n}"),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::Eq => "'='".into(),
            Tok::EqEq => "'=='".into(),
            Tok::Lt => "'<'".into(),
            Tok::Gt => "'>'".into(),
            Tok::Le => "'<='".into(),
            Tok::Ge => "'>='".into(),
            Tok::Comma => "','".into(),
            Tok::Semi => "';'".into(),
            Tok::Bad(c) => format!("character {c:?}"),
            Tok::Eof => "end of statement".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub start: usize,
}

pub struct Lexer {
    chars: Vec<char>,
    pos: usize,
}

pub fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

pub fn is_ident_continue(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '-'
}

impl Lexer {
    pub fn new(text: &str) -> Self {
        Self {
            chars: text.chars().collect(),
            pos: 0,
        }
    }

    fn peek_char(&self, ahead: usize) -> Option<char> {
        self.chars.get(self.pos + ahead).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek_char(0).is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    /// Resets the cursor, used when the parser switches to raw-word mode.
    pub fn rewind(&mut self, pos: usize) {
        self.pos = pos;
    }

    /// Reads a maximal run of non-whitespace characters (URLs, tokens).
    pub fn raw_word(&mut self) -> Option<Token> {
        self.skip_ws();
        let start = self.pos;
        while self.peek_char(0).is_some_and(|c| !c.is_whitespace()) {
            self.pos += 1;
        }
        (self.pos > start).then(|| Token {
            tok: Tok::Word(self.chars[start..self.pos].iter().collect()),
            start,
        })
    }

    pub fn next_token(&mut self) -> Token {
        self.skip_ws();
        let start = self.pos;
        let Some(c) = self.peek_char(0) else {
            return Token { tok: Tok::Eof, start };
        };
        let single = |tok| (tok, 1);
        let (tok, len) = match c {
            '=' if self.peek_char(1) == Some('=') => (Tok::EqEq, 2),
            '=' => single(Tok::Eq),
            '<' if self.peek_char(1) == Some('=') => (Tok::Le, 2),
            '<' => single(Tok::Lt),
            '>' if self.peek_char(1) == Some('=') => (Tok::Ge, 2),
            '>' => single(Tok::Gt),
            ',' => single(Tok::Comma),
            ';' => single(Tok::Semi),
            '"' => return self.string(start),
            c if c.is_ascii_digit()
                || ((c == '-' || c == '.') && self.peek_char(1).is_some_and(|d| d.is_ascii_digit())) =>
            {
                return self.number(start)
            }
            c if is_ident_start(c) => {
                let mut end = start + 1;
                while self.chars.get(end).copied().is_some_and(is_ident_continue) {
                    end += 1;
                }
                let word: String = self.chars[start..end].iter().collect();
                (Tok::Word(word), end - start)
            }
            other => single(Tok::Bad(other)),
        };
        self.pos += len;
        Token { tok, start }
    }

    fn number(&mut self, start: usize) -> Token {
        let mut end = start;
        if self.chars[end] == '-' {
            end += 1;
        }
        let mut seen_dot = false;
        while let Some(&c) = self.chars.get(end) {
            if c.is_ascii_digit() {
                end += 1;
            } else if c == '.' && !seen_dot && self.chars.get(end + 1).is_some_and(|d| d.is_ascii_digit()) {
                seen_dot = true;
                end += 1;
            } else {
                break;
            }
        }
        self.pos = end;
        Token {
            tok: Tok::Number(self.chars[start..end].iter().collect()),
            start,
        }
    }

    fn string(&mut self, start: usize) -> Token {
        let mut out = String::new();
        let mut i = start + 1;
        while let Some(&c) = self.chars.get(i) {
            match c {
                '"' => {
                    self.pos = i + 1;
                    return Token { tok: Tok::Str(out), start };
                }
                '\\' => {
                    if let Some(&n) = self.chars.get(i + 1) {
                        out.push(n);
                        i += 2;
                    } else {
                        break;
                    }
                }
                c => {
                    out.push(c);
                    i += 1;
                }
            }
        }
        // unterminated: point at the opening quote
        self.pos = self.chars.len();
        Token {
            tok: Tok::Bad('"'),
            start,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        let mut lx = Lexer::new(s);
        let mut out = vec![];
        loop {
            let t = lx.next_token();
            if t.tok == Tok::Eof {
                return out;
            }
            out.push(t.tok);
        }
    }

    #[test]
    fn lexes_operators_and_numbers() {
        assert_eq!(
            toks("a>=-1.5 b==2 c<3;\"x\\\"y\""),
            vec![
                Tok::Word("a".into()),
                Tok::Ge,
                Tok::Number("-1.5".into()),
                Tok::Word("b".into()),
                Tok::EqEq,
                Tok::Number("2".into()),
                Tok::Word("c".into()),
                Tok::Lt,
                Tok::Number("3".into()),
                Tok::Semi,
                Tok::Str("x\"y".into()),
            ]
        );
    }

    #[test]
    fn identifiers_may_contain_hyphens() {
        assert_eq!(toks("therm-1_a"), vec![Tok::Word("therm-1_a".into())]);
    }
}

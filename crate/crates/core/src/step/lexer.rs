use super::model::BranchStats;
use super::StepError;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum TokenKind {
    Keyword(String),
    /// `ISO-10303-21`
    StartMarker,
    /// `END-ISO-10303-21`
    EndMarker,
    EntityName(u64),
    Integer(i64),
    Real(String),
    Text(String),
    Enum(String),
    Dollar,
    Star,
    LParen,
    RParen,
    Comma,
    Semicolon,
    Equals,
    Eof,
}

impl TokenKind {
    pub(crate) fn describe(&self) -> String {
        match self {
            TokenKind::Keyword(k) => format!("keyword {k}"),
            TokenKind::StartMarker => "ISO-10303-21".into(),
            TokenKind::EndMarker => "END-ISO-10303-21".into(),
            TokenKind::EntityName(id) => format!("#{id}"),
            TokenKind::Integer(i) => format!("integer {i}"),
            TokenKind::Real(r) => format!("real {r}"),
            TokenKind::Text(_) => "string".into(),
            TokenKind::Enum(e) => format!(".{e}."),
            TokenKind::Dollar => "`$`".into(),
            TokenKind::Star => "`*`".into(),
            TokenKind::LParen => "`(`".into(),
            TokenKind::RParen => "`)`".into(),
            TokenKind::Comma => "`,`".into(),
            TokenKind::Semicolon => "`;`".into(),
            TokenKind::Equals => "`=`".into(),
            TokenKind::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub kind: TokenKind,
    pub offset: usize,
    /// Last annotation comment seen between the previous token and this one.
    pub annotation: Option<BranchStats>,
}

pub(crate) struct Lexer<'a> {
    src: &'a [u8],
    text: &'a str,
    pos: usize,
}

const ANNOTATION_PREFIX: &str = " STEPLLM branch ";

/// Parses the body of a comment (text between `/*` and `*/`) as a branch
/// annotation: ` STEPLLM branch children=<c> depth=<d> size=<s> `.
pub(crate) fn parse_annotation_body(body: &str) -> Option<BranchStats> {
    let rest = body.strip_prefix(ANNOTATION_PREFIX)?.strip_suffix(' ')?;
    let mut fields = rest.split(' ');
    let mut field = |key: &str| -> Option<usize> {
        let value = fields.next()?.strip_prefix(key)?.strip_prefix('=')?;
        if value.is_empty() || !value.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        value.parse().ok()
    };
    let stats = BranchStats {
        child_count: field("children")?,
        branch_depth: field("depth")?,
        subtree_size: field("size")?,
    };
    if fields.next().is_some() {
        return None;
    }
    Some(stats)
}

pub(crate) fn annotation_comment(stats: &BranchStats) -> String {
    format!(
        "/*{ANNOTATION_PREFIX}children={} depth={} size={} */",
        stats.child_count, stats.branch_depth, stats.subtree_size
    )
}

impl<'a> Lexer<'a> {
    pub(crate) fn new(text: &'a str) -> Self {
        Lexer {
            src: text.as_bytes(),
            text,
            pos: 0,
        }
    }

    fn peek_byte(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn error(&self, offset: usize, expected: &str, found: &str) -> StepError {
        StepError::syntax(self.text, offset, expected, found)
    }

    /// Skips whitespace and comments, returning the last annotation comment.
    fn skip_trivia(&mut self) -> Result<Option<BranchStats>, StepError> {
        let mut annotation = None;
        loop {
            match self.peek_byte() {
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(b'/') if self.src.get(self.pos + 1) == Some(&b'*') => {
                    let start = self.pos;
                    let body_start = self.pos + 2;
                    let end = self.text[body_start..]
                        .find("*/")
                        .ok_or_else(|| self.error(start, "`*/` closing the comment", "end of input"))?;
                    let body = &self.text[body_start..body_start + end];
                    if let Some(stats) = parse_annotation_body(body) {
                        annotation = Some(stats);
                    }
                    self.pos = body_start + end + 2;
                }
                _ => return Ok(annotation),
            }
        }
    }

    pub(crate) fn next_token(&mut self) -> Result<Token, StepError> {
        let annotation = self.skip_trivia()?;
        let offset = self.pos;
        let kind = match self.peek_byte() {
            None => TokenKind::Eof,
            Some(b) => match b {
                b'(' => self.single(TokenKind::LParen),
                b')' => self.single(TokenKind::RParen),
                b',' => self.single(TokenKind::Comma),
                b';' => self.single(TokenKind::Semicolon),
                b'=' => self.single(TokenKind::Equals),
                b'$' => self.single(TokenKind::Dollar),
                b'*' => self.single(TokenKind::Star),
                b'#' => self.entity_name()?,
                b'\'' => self.text_literal()?,
                b'.' => self.enumeration()?,
                b'+' | b'-' | b'0'..=b'9' => self.number()?,
                b'A'..=b'Z' | b'_' | b'!' => self.keyword()?,
                _ => {
                    let found = self.text[offset..].chars().next().unwrap_or('?');
                    return Err(self.error(offset, "a token", &format!("`{found}`")));
                }
            },
        };
        Ok(Token {
            kind,
            offset,
            annotation,
        })
    }

    fn single(&mut self, kind: TokenKind) -> TokenKind {
        self.pos += 1;
        kind
    }

    fn take_while(&mut self, pred: impl Fn(u8) -> bool) -> &'a str {
        let start = self.pos;
        while self.peek_byte().is_some_and(&pred) {
            self.pos += 1;
        }
        &self.text[start..self.pos]
    }

    fn entity_name(&mut self) -> Result<TokenKind, StepError> {
        let start = self.pos;
        self.pos += 1;
        let digits = self.take_while(|b| b.is_ascii_digit());
        match digits.parse::<u64>() {
            Ok(id) if id > 0 => Ok(TokenKind::EntityName(id)),
            _ => Err(self.error(start, "a positive entity id after `#`", &format!("`#{digits}`"))),
        }
    }

    fn text_literal(&mut self) -> Result<TokenKind, StepError> {
        let start = self.pos;
        self.pos += 1;
        let content_start = self.pos;
        loop {
            match self.peek_byte() {
                None => return Err(self.error(start, "closing `'`", "end of input")),
                Some(b'\'') => {
                    if self.src.get(self.pos + 1) == Some(&b'\'') {
                        self.pos += 2;
                    } else {
                        let content = self.text[content_start..self.pos].to_string();
                        self.pos += 1;
                        return Ok(TokenKind::Text(content));
                    }
                }
                Some(_) => self.pos += 1,
            }
        }
    }

    fn enumeration(&mut self) -> Result<TokenKind, StepError> {
        let start = self.pos;
        self.pos += 1;
        let name = self.take_while(|b| b.is_ascii_uppercase() || b.is_ascii_digit() || b == b'_');
        let valid_start = name.bytes().next().is_some_and(|b| b.is_ascii_uppercase() || b == b'_');
        if !valid_start || self.peek_byte() != Some(b'.') {
            return Err(self.error(start, "an enumeration `.NAME.`", "malformed enumeration"));
        }
        self.pos += 1;
        Ok(TokenKind::Enum(name.to_string()))
    }

    fn number(&mut self) -> Result<TokenKind, StepError> {
        let start = self.pos;
        if matches!(self.peek_byte(), Some(b'+' | b'-')) {
            self.pos += 1;
        }
        let int_digits = self.take_while(|b| b.is_ascii_digit());
        if int_digits.is_empty() {
            return Err(self.error(start, "a digit", "sign without digits"));
        }
        let mut is_real = false;
        if self.peek_byte() == Some(b'.') {
            is_real = true;
            self.pos += 1;
            self.take_while(|b| b.is_ascii_digit());
            if self.peek_byte() == Some(b'E') {
                self.pos += 1;
                if matches!(self.peek_byte(), Some(b'+' | b'-')) {
                    self.pos += 1;
                }
                if self.take_while(|b| b.is_ascii_digit()).is_empty() {
                    return Err(self.error(start, "exponent digits", "malformed real"));
                }
            }
        }
        let lexeme = &self.text[start..self.pos];
        if is_real {
            Ok(TokenKind::Real(lexeme.to_string()))
        } else {
            lexeme
                .parse::<i64>()
                .map(TokenKind::Integer)
                .map_err(|_| self.error(start, "an integer in range", lexeme))
        }
    }

    fn keyword(&mut self) -> Result<TokenKind, StepError> {
        let start = self.pos;
        if self.peek_byte() == Some(b'!') {
            self.pos += 1;
        }
        let word = self.take_while(|b| b.is_ascii_uppercase() || b.is_ascii_digit() || b == b'_' || b == b'-');
        let lexeme = &self.text[start..self.pos];
        if word.contains('-') {
            return match lexeme {
                "ISO-10303-21" => Ok(TokenKind::StartMarker),
                "END-ISO-10303-21" => Ok(TokenKind::EndMarker),
                _ => Err(self.error(start, "a keyword", &format!("`{lexeme}`"))),
            };
        }
        if word.is_empty() {
            return Err(self.error(start, "a keyword", "`!`"));
        }
        Ok(TokenKind::Keyword(lexeme.to_string()))
    }
}

use std::collections::HashSet;

use super::lexer::{Lexer, Token, TokenKind};
use super::model::{is_valid_keyword, ComplexPart, EntityInstance, HeaderRecord, ParamValue, Real, StepFile};
use super::{ParseOptions, StepError};

/// Recursive-descent parser over the token stream with one token of lookahead.
pub(crate) struct Parser<'a> {
    lexer: Lexer<'a>,
    text: &'a str,
    current: Token,
    opts: ParseOptions,
}

impl<'a> Parser<'a> {
    pub(crate) fn new(text: &'a str, opts: ParseOptions) -> Result<Self, StepError> {
        let mut lexer = Lexer::new(text);
        let current = lexer.next_token()?;
        Ok(Parser {
            lexer,
            text,
            current,
            opts,
        })
    }

    fn advance(&mut self) -> Result<Token, StepError> {
        let next = self.lexer.next_token()?;
        Ok(std::mem::replace(&mut self.current, next))
    }

    fn unexpected(&self, expected: &str) -> StepError {
        StepError::syntax(self.text, self.current.offset, expected, &self.current.kind.describe())
    }

    fn expect(&mut self, kind: TokenKind, expected: &str) -> Result<Token, StepError> {
        if self.current.kind == kind {
            self.advance()
        } else {
            Err(self.unexpected(expected))
        }
    }

    fn expect_keyword(&mut self, keyword: &str) -> Result<(), StepError> {
        match &self.current.kind {
            TokenKind::Keyword(k) if k == keyword => {
                self.advance()?;
                Ok(())
            }
            _ => Err(self.unexpected(keyword)),
        }
    }

    fn at_eof(&self) -> bool {
        self.current.kind == TokenKind::Eof
    }

    pub(crate) fn parse_file(mut self) -> Result<StepFile, StepError> {
        self.expect(TokenKind::StartMarker, "ISO-10303-21")?;
        self.expect(TokenKind::Semicolon, "`;`")?;
        let header = self.header_section()?;

        let mut entities = Vec::new();
        let mut seen = HashSet::new();
        let mut trailing_complete = false;
        loop {
            match &self.current.kind {
                TokenKind::Eof => break,
                TokenKind::EndMarker => {
                    self.advance()?;
                    self.expect(TokenKind::Semicolon, "`;`")?;
                    if !self.at_eof() {
                        return Err(self.unexpected("end of input after END-ISO-10303-21;"));
                    }
                    trailing_complete = true;
                    break;
                }
                TokenKind::Keyword(k) if k == "DATA" => {
                    self.data_section(&mut entities, &mut seen)?;
                }
                TokenKind::Keyword(k) if matches!(k.as_str(), "ANCHOR" | "REFERENCE" | "SIGNATURE") => {
                    return Err(StepError::UnsupportedSection(k.clone()));
                }
                _ => return Err(self.unexpected("DATA or END-ISO-10303-21")),
            }
        }
        Ok(StepFile {
            header,
            entities,
            trailing_complete,
        })
    }

    fn header_section(&mut self) -> Result<Vec<HeaderRecord>, StepError> {
        self.expect_keyword("HEADER")?;
        self.expect(TokenKind::Semicolon, "`;`")?;
        let mut records = Vec::new();
        loop {
            let name = match &self.current.kind {
                TokenKind::Keyword(k) if k == "ENDSEC" => {
                    self.advance()?;
                    self.expect(TokenKind::Semicolon, "`;`")?;
                    return Ok(records);
                }
                TokenKind::Keyword(k) => k.clone(),
                _ => return Err(self.unexpected("a header record or ENDSEC")),
            };
            self.advance()?;
            let params = self.param_list()?;
            self.expect(TokenKind::Semicolon, "`;`")?;
            records.push(HeaderRecord { name, params });
        }
    }

    /// Parses one DATA section. A missing ENDSEC is tolerated at end of input
    /// so truncated generations still yield the entities written so far.
    fn data_section(&mut self, entities: &mut Vec<EntityInstance>, seen: &mut HashSet<u64>) -> Result<(), StepError> {
        self.expect_keyword("DATA")?;
        if self.current.kind == TokenKind::LParen {
            // DATA section parameters (Part-21 edition 3) carry no entities.
            self.param_list()?;
        }
        self.expect(TokenKind::Semicolon, "`;`")?;
        loop {
            match &self.current.kind {
                TokenKind::Eof => return Ok(()),
                TokenKind::Keyword(k) if k == "ENDSEC" => {
                    self.advance()?;
                    self.expect(TokenKind::Semicolon, "`;`")?;
                    return Ok(());
                }
                TokenKind::EntityName(_) => {
                    let entity = self.entity()?;
                    if !seen.insert(entity.id) {
                        return Err(StepError::DuplicateId(entity.id));
                    }
                    if entities.len() >= self.opts.max_entities {
                        return Err(StepError::TooManyEntities {
                            limit: self.opts.max_entities,
                        });
                    }
                    entities.push(entity);
                }
                _ => return Err(self.unexpected("an entity instance or ENDSEC")),
            }
        }
    }

    fn entity(&mut self) -> Result<EntityInstance, StepError> {
        let name_tok = self.advance()?;
        let TokenKind::EntityName(id) = name_tok.kind else {
            unreachable!("entity() is only called on an entity name token");
        };
        self.expect(TokenKind::Equals, "`=`")?;
        let entity = match &self.current.kind {
            TokenKind::Keyword(k) => {
                let type_name = k.clone();
                self.advance()?;
                let params = self.param_list()?;
                EntityInstance {
                    id,
                    type_name,
                    params,
                    complex_parts: None,
                    annotation: name_tok.annotation,
                }
            }
            TokenKind::LParen => {
                self.advance()?;
                let mut parts = Vec::new();
                while let TokenKind::Keyword(k) = &self.current.kind {
                    let type_name = k.clone();
                    self.advance()?;
                    let params = self.param_list()?;
                    parts.push(ComplexPart { type_name, params });
                }
                if parts.is_empty() {
                    return Err(self.unexpected("a keyword inside the complex instance"));
                }
                self.expect(TokenKind::RParen, "`)` closing the complex instance")?;
                let first = parts.remove(0);
                EntityInstance {
                    id,
                    type_name: first.type_name,
                    params: first.params,
                    complex_parts: Some(parts),
                    annotation: name_tok.annotation,
                }
            }
            _ => return Err(self.unexpected("an entity keyword or `(`")),
        };
        self.expect(TokenKind::Semicolon, "`;`")?;
        Ok(entity)
    }

    /// `( [param {, param}] )`
    fn param_list(&mut self) -> Result<Vec<ParamValue>, StepError> {
        self.expect(TokenKind::LParen, "`(`")?;
        let mut params = Vec::new();
        if self.current.kind == TokenKind::RParen {
            self.advance()?;
            return Ok(params);
        }
        loop {
            params.push(self.param()?);
            match self.current.kind {
                TokenKind::Comma => {
                    self.advance()?;
                }
                TokenKind::RParen => {
                    self.advance()?;
                    return Ok(params);
                }
                _ => return Err(self.unexpected("`,` or `)`")),
            }
        }
    }

    fn param(&mut self) -> Result<ParamValue, StepError> {
        let offset = self.current.offset;
        let value = match &self.current.kind {
            TokenKind::LParen => return self.param_list().map(ParamValue::List),
            TokenKind::Keyword(k) => {
                let name = k.clone();
                self.advance()?;
                self.expect(TokenKind::LParen, "`(` after typed parameter keyword")?;
                let inner = self.param()?;
                self.expect(TokenKind::RParen, "`)` closing typed parameter")?;
                debug_assert!(is_valid_keyword(&name));
                return Ok(ParamValue::Typed(name, Box::new(inner)));
            }
            TokenKind::Real(text) => match Real::from_token(text.clone()) {
                Some(real) => ParamValue::Real(real),
                None => return Err(StepError::syntax(self.text, offset, "a finite real", text)),
            },
            TokenKind::Integer(i) => ParamValue::Integer(*i),
            TokenKind::Text(s) => ParamValue::Text(s.clone()),
            TokenKind::Enum(e) => ParamValue::Enum(e.clone()),
            TokenKind::EntityName(id) => ParamValue::Reference(*id),
            TokenKind::Dollar => ParamValue::Omitted,
            TokenKind::Star => ParamValue::Derived,
            _ => return Err(self.unexpected("a parameter")),
        };
        self.advance()?;
        Ok(value)
    }
}

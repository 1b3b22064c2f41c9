//! Recursive-descent parser for the HOCON subset used by experiment configs.
//!
//! Supported: `//` and `#` comments, `key = value`, `key : value`,
//! `key { ... }`, dotted keys, quoted and unquoted strings, integers, floats
//! (including a leading dot such as `.00001`), booleans, lists, objects, and
//! top-level `include "file"` directives. Substitutions, `+=`, and unit
//! suffixes are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use super::merge::merge;
use super::value::{ConfigTree, ConfigValue, Source};
use super::ConfigError;

/// Parses `text`, resolving includes relative to `base_dir`.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<ConfigTree, ConfigError> {
    let mut stack = Vec::new();
    parse_with(text, base_dir, Source::Inline, &mut stack, Mode::Document)
}

/// Reads and parses a config file; includes resolve relative to its directory.
pub fn parse_config_file(path: &Path) -> Result<ConfigTree, ConfigError> {
    let mut stack = Vec::new();
    parse_file_inner(path, &mut stack)
}

/// Parses a command-line override fragment: `path = value` assignments
/// separated by commas or newlines.
pub fn parse_overrides(fragment: &str) -> Result<ConfigTree, ConfigError> {
    let mut stack = Vec::new();
    parse_with(fragment, Path::new("."), Source::Override, &mut stack, Mode::Override)
}

fn parse_file_inner(path: &Path, stack: &mut Vec<PathBuf>) -> Result<ConfigTree, ConfigError> {
    let canonical = fs::canonicalize(path).map_err(|source| ConfigError::MissingInclude {
        path: path.to_path_buf(),
        source,
    })?;
    if stack.contains(&canonical) {
        let mut chain: Vec<PathBuf> = stack.clone();
        chain.push(canonical);
        return Err(ConfigError::IncludeCycle { chain });
    }
    let text = fs::read_to_string(&canonical).map_err(|source| ConfigError::MissingInclude {
        path: path.to_path_buf(),
        source,
    })?;
    let base_dir = canonical.parent().map(Path::to_path_buf).unwrap_or_default();
    stack.push(canonical);
    let result = parse_with(&text, &base_dir, Source::File(path.to_path_buf()), stack, Mode::Document);
    stack.pop();
    result
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Document,
    Override,
}

fn parse_with(
    text: &str,
    base_dir: &Path,
    source: Source,
    stack: &mut Vec<PathBuf>,
    mode: Mode,
) -> Result<ConfigTree, ConfigError> {
    let mut parser = Parser {
        chars: text.chars().collect(),
        pos: 0,
        line: 1,
        col: 1,
        base_dir,
        source,
        stack,
        mode,
    };
    parser.document()
}

enum FieldValue {
    Plain(ConfigValue),
    Object(ConfigTree),
}

struct Parser<'a> {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    col: usize,
    base_dir: &'a Path,
    source: Source,
    stack: &'a mut Vec<PathBuf>,
    mode: Mode,
}

impl Parser<'_> {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, offset: usize) -> Option<char> {
        self.chars.get(self.pos + offset).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn error(&self, message: impl Into<String>) -> ConfigError {
        ConfigError::Syntax {
            source_name: self.source.to_string(),
            line: self.line,
            column: self.col,
            message: message.into(),
        }
    }

    fn at_comment(&self) -> bool {
        matches!(self.peek(), Some('#')) || (self.peek() == Some('/') && self.peek_at(1) == Some('/'))
    }

    fn skip_comment(&mut self) {
        while let Some(c) = self.peek() {
            if c == '\n' {
                break;
            }
            self.bump();
        }
    }

    /// Skips spaces, tabs, and comments but not newlines.
    fn skip_inline_ws(&mut self) {
        loop {
            match self.peek() {
                Some(c) if c == ' ' || c == '\t' || c == '\r' || c == '\u{feff}' => {
                    self.bump();
                }
                _ if self.at_comment() => self.skip_comment(),
                _ => break,
            }
        }
    }

    /// Skips whitespace, newlines, and comments.
    fn skip_ws(&mut self) {
        loop {
            self.skip_inline_ws();
            if self.peek() == Some('\n') {
                self.bump();
            } else {
                break;
            }
        }
    }

    /// Skips whitespace plus field separators (newlines and commas).
    fn skip_separators(&mut self) {
        loop {
            self.skip_ws();
            if self.peek() == Some(',') {
                self.bump();
            } else {
                break;
            }
        }
    }

    fn document(&mut self) -> Result<ConfigTree, ConfigError> {
        self.skip_ws();
        let braced = self.mode == Mode::Document && self.peek() == Some('{');
        if braced {
            self.bump();
        }
        let tree = self.fields(ConfigTree::new(), braced, true)?;
        if braced {
            self.skip_ws();
            match self.bump() {
                Some('}') => {}
                _ => return Err(self.error("expected '}' closing the root object")),
            }
            self.skip_ws();
        }
        if self.peek().is_some() {
            return Err(self.error(format!("unexpected character {:?}", self.peek().unwrap())));
        }
        Ok(tree)
    }

    /// Parses fields until `}` (when `closed`) or end of input.
    fn fields(&mut self, mut tree: ConfigTree, closed: bool, top_level: bool) -> Result<ConfigTree, ConfigError> {
        loop {
            self.skip_separators();
            match self.peek() {
                None if closed => return Err(self.error("unterminated object, expected '}'")),
                None => return Ok(tree),
                Some('}') if closed => return Ok(tree),
                Some('}') => return Err(self.error("unexpected '}'")),
                _ => {}
            }
            if self.at_keyword("include") {
                if !top_level || self.mode == Mode::Override {
                    return Err(self.error("include is only allowed at the top level of a config file"));
                }
                let included = self.include()?;
                tree = merge(&tree, &included);
            } else {
                let (path, value) = self.field()?;
                let assignment = match value {
                    FieldValue::Plain(value) => ConfigTree::single(&path, value, self.source.clone()),
                    FieldValue::Object(inner) => inner.nested_under(&path, &self.source),
                };
                tree = merge(&tree, &assignment);
            }
            self.end_of_field(closed)?;
        }
    }

    fn end_of_field(&mut self, closed: bool) -> Result<(), ConfigError> {
        self.skip_inline_ws();
        match self.peek() {
            None | Some('\n') | Some(',') => Ok(()),
            Some('}') if closed => Ok(()),
            Some(c) => Err(self.error(format!("expected newline or ',' after value, found {c:?}"))),
        }
    }

    fn at_keyword(&self, word: &str) -> bool {
        let n = word.chars().count();
        let matches = word.chars().enumerate().all(|(i, c)| self.peek_at(i) == Some(c));
        matches && matches!(self.peek_at(n), Some(' ') | Some('\t'))
    }

    fn include(&mut self) -> Result<ConfigTree, ConfigError> {
        for _ in 0.."include".len() {
            self.bump();
        }
        self.skip_inline_ws();
        if self.peek() != Some('"') {
            return Err(self.error("include expects a quoted file name"));
        }
        let name = self.quoted_string()?;
        let path = self.base_dir.join(&name);
        parse_file_inner(&path, self.stack)
    }

    fn field(&mut self) -> Result<(Vec<String>, FieldValue), ConfigError> {
        let path = self.key_path()?;
        self.skip_inline_ws();
        match self.peek() {
            Some('=') | Some(':') => {
                self.bump();
                self.skip_ws();
                if self.peek() == Some('{') {
                    return Ok((path, FieldValue::Object(self.object()?)));
                }
                let value = self.value()?;
                Ok((path, FieldValue::Plain(value)))
            }
            Some('+') if self.peek_at(1) == Some('=') => Err(self.error("'+=' is not supported")),
            Some('{') if self.mode == Mode::Document => Ok((path, FieldValue::Object(self.object()?))),
            _ if self.mode == Mode::Override => Err(ConfigError::MalformedOverride {
                message: format!("assignment to '{}' has no '='", path.join(".")),
            }),
            Some(c) => Err(self.error(format!("expected '=', ':' or '{{' after key, found {c:?}"))),
            None => Err(self.error("expected '=', ':' or '{' after key, found end of input")),
        }
    }

    fn key_path(&mut self) -> Result<Vec<String>, ConfigError> {
        let mut path = Vec::new();
        loop {
            let segment = match self.peek() {
                Some('"') => self.quoted_string()?,
                _ => {
                    let mut key = String::new();
                    while let Some(c) = self.peek() {
                        if c.is_alphanumeric() || c == '_' || c == '-' {
                            key.push(c);
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    key
                }
            };
            if segment.is_empty() {
                if self.mode == Mode::Override {
                    return Err(ConfigError::MalformedOverride { message: "empty key path".to_string() });
                }
                return match self.peek() {
                    Some(c) => Err(self.error(format!("expected a key, found {c:?}"))),
                    None => Err(self.error("expected a key")),
                };
            }
            path.push(segment);
            if self.peek() == Some('.') {
                self.bump();
            } else {
                return Ok(path);
            }
        }
    }

    /// Parses a braced object, keeping provenance and reset points.
    fn object(&mut self) -> Result<ConfigTree, ConfigError> {
        self.bump();
        let inner = self.fields(ConfigTree::new(), true, false)?;
        self.bump();
        Ok(inner)
    }

    fn value(&mut self) -> Result<ConfigValue, ConfigError> {
        match self.peek() {
            Some('{') => Ok(ConfigValue::Object(self.object()?.root)),
            Some('[') => self.list(),
            Some('"') => {
                let s = self.quoted_string()?;
                Ok(ConfigValue::String(s))
            }
            _ => self.unquoted(),
        }
    }

    fn list(&mut self) -> Result<ConfigValue, ConfigError> {
        self.bump();
        let mut items = Vec::new();
        loop {
            self.skip_separators();
            match self.peek() {
                Some(']') => {
                    self.bump();
                    return Ok(ConfigValue::List(items));
                }
                None => return Err(self.error("unterminated list, expected ']'")),
                _ => {}
            }
            items.push(self.value()?);
            self.skip_inline_ws();
            match self.peek() {
                Some(',') | Some('\n') | Some(']') => {}
                Some(c) => return Err(self.error(format!("expected ',' or ']' in list, found {c:?}"))),
                None => return Err(self.error("unterminated list, expected ']'")),
            }
        }
    }

    fn quoted_string(&mut self) -> Result<String, ConfigError> {
        self.bump();
        let mut out = String::new();
        loop {
            match self.bump() {
                None | Some('\n') => return Err(self.error("unterminated string")),
                Some('"') => return Ok(out),
                Some('\\') => match self.bump() {
                    Some('"') => out.push('"'),
                    Some('\\') => out.push('\\'),
                    Some('/') => out.push('/'),
                    Some('n') => out.push('\n'),
                    Some('t') => out.push('\t'),
                    Some('r') => out.push('\r'),
                    Some('u') => {
                        let mut code = String::new();
                        for _ in 0..4 {
                            match self.bump() {
                                Some(c) => code.push(c),
                                None => return Err(self.error("truncated \\u escape")),
                            }
                        }
                        let ch = u32::from_str_radix(&code, 16)
                            .ok()
                            .and_then(char::from_u32)
                            .ok_or_else(|| self.error(format!("invalid \\u escape {code:?}")))?;
                        out.push(ch);
                    }
                    Some(c) => return Err(self.error(format!("invalid escape '\\{c}'"))),
                    None => return Err(self.error("unterminated string")),
                },
                Some(c) => out.push(c),
            }
        }
    }

    fn unquoted(&mut self) -> Result<ConfigValue, ConfigError> {
        let (line, col) = (self.line, self.col);
        let mut raw = String::new();
        while let Some(c) = self.peek() {
            if matches!(c, '\n' | ',' | '}' | ']') || self.at_comment() {
                break;
            }
            if matches!(c, '{' | '[' | '"' | '=') {
                return Err(self.error(format!("unexpected {c:?} in unquoted value")));
            }
            raw.push(c);
            self.bump();
        }
        let token = raw.trim();
        if token.is_empty() {
            return Err(ConfigError::Syntax {
                source_name: self.source.to_string(),
                line,
                column: col,
                message: "expected a value".to_string(),
            });
        }
        if token.starts_with("${") {
            return Err(self.error("substitutions are not supported"));
        }
        Ok(classify_unquoted(token))
    }
}

/// Numbers with `.` or an exponent are floats; other numbers are integers.
pub(crate) fn classify_unquoted(token: &str) -> ConfigValue {
    match token {
        "true" => return ConfigValue::Bool(true),
        "false" => return ConfigValue::Bool(false),
        _ => {}
    }
    if looks_numeric(token) {
        let is_float = token.contains(['.', 'e', 'E']);
        if !is_float {
            if let Ok(v) = token.parse::<i64>() {
                return ConfigValue::Int(v);
            }
        }
        if let Ok(v) = token.parse::<f64>() {
            if v.is_finite() {
                return ConfigValue::Float(v);
            }
        }
    }
    ConfigValue::String(token.to_string())
}

fn looks_numeric(token: &str) -> bool {
    let bytes = token.as_bytes();
    let mut i = 0;
    if matches!(bytes.first(), Some(b'+') | Some(b'-')) {
        i += 1;
    }
    let int_start = i;
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    let int_digits = i - int_start;
    let mut frac_digits = 0;
    if i < bytes.len() && bytes[i] == b'.' {
        i += 1;
        let frac_start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        frac_digits = i - frac_start;
    }
    if int_digits + frac_digits == 0 {
        return false;
    }
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        i += 1;
        if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
            i += 1;
        }
        let exp_start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        if i == exp_start {
            return false;
        }
    }
    i == bytes.len()
}

//! The YAML subset used by experiment configs.
//!
//! Supported: block mappings, block sequences (`- item`), `#` comments,
//! plain and quoted scalars, flow lists `[a, b]` and tuples `(16,16)`,
//! which may nest inside flow lists. Indentation must use spaces.
//! Anchors, multi-line scalars, flow mappings and documents markers are
//! not supported.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    /// `quoted` scalars are never reinterpreted as numbers or booleans.
    Scalar { text: String, quoted: bool },
    Tuple(Vec<Node>),
    List(Vec<Node>),
    Map(Vec<(String, Node)>),
}

/// A value with its 1-based line. Block values take the line of the key
/// or dash that introduces them.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub line: usize,
    pub value: Value,
}

impl Node {
    pub fn scalar(&self) -> Option<&str> {
        match &self.value {
            Value::Scalar { text, .. } => Some(text),
            _ => None,
        }
    }

    pub fn as_map(&self) -> Result<&[(String, Node)]> {
        match &self.value {
            Value::Map(m) => Ok(m),
            _ => Err(Error::config(self.line, "expected a mapping")),
        }
    }

    /// Looks up `key` in a mapping node.
    pub fn get(&self, key: &str) -> Option<&Node> {
        match &self.value {
            Value::Map(m) => m.iter().find(|(k, _)| k == key).map(|(_, v)| v),
            _ => None,
        }
    }
}

struct Line<'a> {
    number: usize,
    indent: usize,
    text: &'a str,
}

/// Removes a trailing comment, honouring quotes.
fn strip_comment(s: &str) -> &str {
    let mut quote = None;
    let mut prev_space = true;
    for (k, c) in s.char_indices() {
        match (quote, c) {
            (None, '"' | '\'') => quote = Some(c),
            (Some(q), c) if c == q => quote = None,
            (None, '#') if prev_space => return &s[..k],
            _ => {}
        }
        prev_space = c == ' ' || c == '\t';
    }
    s
}

fn logical_lines(text: &str) -> Result<Vec<Line<'_>>> {
    let mut out = Vec::new();
    for (k, raw) in text.split('\n').enumerate() {
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        let body = strip_comment(raw).trim_end();
        if body.trim().is_empty() {
            continue;
        }
        let indent = body.len() - body.trim_start_matches(' ').len();
        if body[indent..].starts_with('\t') {
            return Err(Error::config(k + 1, "tabs are not allowed in indentation"));
        }
        out.push(Line {
            number: k + 1,
            indent,
            text: &body[indent..],
        });
    }
    Ok(out)
}

/// Splits `key: rest` at the first `:` followed by a space or line end,
/// outside quotes and brackets.
fn split_key(s: &str) -> Option<(&str, &str)> {
    let bytes = s.as_bytes();
    let mut depth = 0i32;
    let mut quote = None;
    for (k, &b) in bytes.iter().enumerate() {
        match (quote, b) {
            (None, b'"' | b'\'') => quote = Some(b),
            (Some(q), b) if b == q => quote = None,
            (None, b'[' | b'(') => depth += 1,
            (None, b']' | b')') => depth -= 1,
            (None, b':') if depth == 0 && (k + 1 == bytes.len() || bytes[k + 1] == b' ') => {
                return Some((s[..k].trim(), s[k + 1..].trim()));
            }
            _ => {}
        }
    }
    None
}

fn unquote(s: &str, line: usize) -> Result<String> {
    let q = s.as_bytes()[0] as char;
    if s.len() < 2 || !s.ends_with(q) {
        return Err(Error::config(line, format!("unterminated string {s}")));
    }
    let inner = &s[1..s.len() - 1];
    if q == '\'' {
        return Ok(inner.replace("''", "'"));
    }
    let mut out = String::new();
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('n') => out.push('\n'),
                Some('t') => out.push('\t'),
                Some(c @ ('"' | '\\')) => out.push(c),
                other => return Err(Error::config(line, format!("unsupported escape \\{}", other.unwrap_or(' ')))),
            }
        } else {
            out.push(c);
        }
    }
    Ok(out)
}

/// Splits on commas at bracket depth zero.
fn split_top_level(s: &str, line: usize) -> Result<Vec<&str>> {
    let mut parts = Vec::new();
    let (mut depth, mut start, mut quote) = (0i32, 0, None);
    for (k, c) in s.char_indices() {
        match (quote, c) {
            (None, '"' | '\'') => quote = Some(c),
            (Some(q), c) if c == q => quote = None,
            (None, '[' | '(') => depth += 1,
            (None, ']' | ')') => {
                depth -= 1;
                if depth < 0 {
                    return Err(Error::config(line, format!("unbalanced {c:?}")));
                }
            }
            (None, ',') if depth == 0 => {
                parts.push(s[start..k].trim());
                start = k + 1;
            }
            _ => {}
        }
    }
    if depth != 0 || quote.is_some() {
        return Err(Error::config(line, format!("unbalanced brackets or quotes in {s:?}")));
    }
    let last = s[start..].trim();
    if !(last.is_empty() && parts.is_empty()) {
        parts.push(last);
    }
    Ok(parts)
}

fn parse_inline(s: &str, line: usize) -> Result<Node> {
    let s = s.trim();
    let delimited = |open: char, close: char| -> Result<Option<Vec<Node>>> {
        if !s.starts_with(open) {
            return Ok(None);
        }
        if !s.ends_with(close) {
            return Err(Error::config(line, format!("malformed {open}...{close} in {s:?}")));
        }
        let items = split_top_level(&s[1..s.len() - 1], line)?;
        if items.iter().any(|p| p.is_empty()) {
            return Err(Error::config(line, format!("empty element in {s:?}")));
        }
        items.into_iter().map(|p| parse_inline(p, line)).collect::<Result<_>>().map(Some)
    };
    let value = if let Some(items) = delimited('[', ']')? {
        Value::List(items)
    } else if let Some(items) = delimited('(', ')')? {
        Value::Tuple(items)
    } else if s.starts_with('"') || s.starts_with('\'') {
        Value::Scalar {
            text: unquote(s, line)?,
            quoted: true,
        }
    } else if s.ends_with(']') || s.ends_with(')') {
        return Err(Error::config(line, format!("unbalanced brackets in {s:?}")));
    } else {
        Value::Scalar {
            text: s.to_string(),
            quoted: false,
        }
    };
    Ok(Node { line, value })
}

struct Parser<'a> {
    lines: Vec<Line<'a>>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn block(&mut self, indent: usize) -> Result<Node> {
        let first = &self.lines[self.pos];
        if first.text == "-" || first.text.starts_with("- ") {
            self.sequence(indent)
        } else {
            self.mapping(indent)
        }
    }

    /// Child block of a line ending in `key:` or `-`, or an empty scalar.
    fn child(&mut self, parent_indent: usize, line: usize) -> Result<Node> {
        match self.lines.get(self.pos) {
            // `key:` may be followed by a sequence at the key's own indent
            Some(l) if l.indent > parent_indent || (l.indent == parent_indent && (l.text == "-" || l.text.starts_with("- "))) => {
                let indent = l.indent;
                let mut node = self.block(indent)?;
                node.line = line;
                Ok(node)
            }
            _ => Ok(Node {
                line,
                value: Value::Scalar {
                    text: String::new(),
                    quoted: false,
                },
            }),
        }
    }

    fn sequence(&mut self, indent: usize) -> Result<Node> {
        let start = self.lines[self.pos].number;
        let mut items = Vec::new();
        while let Some(l) = self.lines.get(self.pos) {
            let is_item = l.text == "-" || l.text.starts_with("- ");
            if l.indent < indent || (l.indent == indent && !is_item) {
                break;
            }
            if l.indent > indent {
                return Err(Error::config(l.number, "expected a sequence item"));
            }
            let number = l.number;
            let rest = l.text[1..].trim_start();
            if rest.is_empty() {
                self.pos += 1;
                items.push(self.child(indent, number)?);
            } else if split_key(rest).is_some() {
                // `- key: value` opens a mapping indented past the dash
                let inner = indent + (l.text.len() - rest.len());
                self.lines[self.pos] = Line {
                    number,
                    indent: inner,
                    text: &self.lines[self.pos].text[l.text.len() - rest.len()..],
                };
                items.push(self.mapping(inner)?);
            } else {
                self.pos += 1;
                items.push(parse_inline(rest, number)?);
            }
        }
        Ok(Node {
            line: start,
            value: Value::List(items),
        })
    }

    fn mapping(&mut self, indent: usize) -> Result<Node> {
        let start = self.lines[self.pos].number;
        let mut entries: Vec<(String, Node)> = Vec::new();
        while let Some(l) = self.lines.get(self.pos) {
            if l.indent < indent {
                break;
            }
            if l.indent > indent {
                return Err(Error::config(l.number, "unexpected indentation"));
            }
            let number = l.number;
            let (key, rest) = split_key(l.text)
                .ok_or_else(|| Error::config(number, format!("expected `key: value`, found {:?}", l.text)))?;
            let key = if key.starts_with('"') || key.starts_with('\'') {
                unquote(key, number)?
            } else {
                key.to_string()
            };
            if key.is_empty() {
                return Err(Error::config(number, "empty key"));
            }
            if entries.iter().any(|(k, _)| *k == key) {
                return Err(Error::config(number, format!("duplicate key {key:?}")));
            }
            self.pos += 1;
            let value = if rest.is_empty() {
                self.child(indent, number)?
            } else {
                parse_inline(rest, number)?
            };
            entries.push((key, value));
        }
        Ok(Node {
            line: start,
            value: Value::Map(entries),
        })
    }
}

/// Parses a document into its root node (a mapping or sequence).
pub fn parse(text: &str) -> Result<Node> {
    let lines = logical_lines(text)?;
    if lines.is_empty() {
        return Err(Error::config(1, "empty document"));
    }
    let indent = lines[0].indent;
    let mut p = Parser { lines, pos: 0 };
    let root = p.block(indent)?;
    if let Some(l) = p.lines.get(p.pos) {
        return Err(Error::config(l.number, "unexpected dedent or trailing content"));
    }
    Ok(root)
}

fn needs_quotes(s: &str) -> bool {
    s.is_empty()
        || s.trim() != s
        || s.contains(": ")
        || s.ends_with(':')
        || s.contains(" #")
        || s.contains(['\n', '\t', ',', '"'])
        || s.starts_with(['[', '(', '\'', '-', '#', '{', '&', '*', '!', '|', '>', '%', '@'])
}

fn render_inline(node: &Node, out: &mut String) {
    match &node.value {
        Value::Scalar { text, quoted } => {
            if *quoted || needs_quotes(text) {
                out.push('"');
                for c in text.chars() {
                    match c {
                        '"' => out.push_str("\\\""),
                        '\\' => out.push_str("\\\\"),
                        '\n' => out.push_str("\\n"),
                        '\t' => out.push_str("\\t"),
                        c => out.push(c),
                    }
                }
                out.push('"');
            } else {
                out.push_str(text);
            }
        }
        Value::Tuple(items) | Value::List(items) => {
            let (open, close, sep) = match node.value {
                Value::Tuple(_) => ('(', ')', ","),
                _ => ('[', ']', ", "),
            };
            out.push(open);
            for (k, item) in items.iter().enumerate() {
                if k > 0 {
                    out.push_str(sep);
                }
                render_inline(item, out);
            }
            out.push(close);
        }
        Value::Map(_) => unreachable!("mappings are rendered as blocks"),
    }
}

fn render_key(key: &str) -> String {
    if needs_quotes(key) || key.contains(':') {
        let mut s = String::new();
        render_inline(
            &Node {
                line: 0,
                value: Value::Scalar {
                    text: key.to_string(),
                    quoted: true,
                },
            },
            &mut s,
        );
        s
    } else {
        key.to_string()
    }
}

fn render_block(node: &Node, indent: usize, out: &mut String) {
    let pad = " ".repeat(indent);
    match &node.value {
        Value::Map(entries) => {
            for (k, v) in entries {
                match &v.value {
                    Value::Map(m) if !m.is_empty() => {
                        let _ = writeln!(out, "{pad}{}:", render_key(k));
                        render_block(v, indent + 2, out);
                    }
                    _ => {
                        let _ = write!(out, "{pad}{}: ", render_key(k));
                        render_inline(v, out);
                        out.push('\n');
                    }
                }
            }
        }
        _ => {
            out.push_str(&pad);
            render_inline(node, out);
            out.push('\n');
        }
    }
}

/// Canonical text: two-space indentation, lists in flow style.
pub fn render(node: &Node) -> String {
    let mut out = String::new();
    render_block(node, 0, &mut out);
    out
}

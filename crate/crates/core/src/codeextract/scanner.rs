use super::{FileStructure, StructureExtractor};
use crate::textprep::{Lexicon, SourceKind, TokenBag};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Punct(&'static str),
    /// Literals are opaque to the structural pass.
    Literal,
}

const PUNCTS: &[&str] = &[
    "...", "->", "::", "(", ")", "{", "}", "[", "]", "<", ">", ";", ",", ".", "@", "=", "?", ":",
    "+", "-", "*", "/", "%", "!", "&", "|", "^", "~",
];

/// Keywords that may precede `(` without being a call.
const NON_CALL_KEYWORDS: &[&str] = &[
    "if", "for", "while", "switch", "catch", "synchronized", "return", "try", "assert", "throw",
    "super", "this", "new", "else", "do", "case", "yield",
];

const RESERVED: &[&str] = &[
    "abstract", "assert", "boolean", "break", "byte", "case", "catch", "char", "class", "const",
    "continue", "default", "do", "double", "else", "enum", "extends", "final", "finally", "float",
    "for", "goto", "if", "implements", "import", "instanceof", "int", "interface", "long",
    "native", "new", "package", "private", "protected", "public", "return", "short", "static",
    "strictfp", "super", "switch", "synchronized", "this", "throw", "throws", "transient", "try",
    "void", "volatile", "while", "true", "false", "null", "var", "yield",
];

fn is_reserved(s: &str) -> bool {
    RESERVED.contains(&s)
}

/// Splits source into tokens and comment texts. Unterminated comments and
/// literals run to end of input.
fn lex(text: &str) -> (Vec<Tok>, Vec<String>) {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut comments = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if text[i..].starts_with("//") {
            let end = text[i..].find('\n').map_or(text.len(), |e| i + e);
            comments.push(text[i + 2..end].to_string());
            i = end;
        } else if text[i..].starts_with("/*") {
            let end = text[i + 2..].find("*/").map_or(text.len(), |e| i + 2 + e);
            comments.push(text[i + 2..end].to_string());
            i = (end + 2).min(text.len());
        } else if text[i..].starts_with("\"\"\"") {
            let end = text[i + 3..].find("\"\"\"").map_or(text.len(), |e| i + 3 + e + 3);
            toks.push(Tok::Literal);
            i = end.min(text.len());
        } else if c == b'"' || c == b'\'' {
            let mut j = i + 1;
            while j < bytes.len() && bytes[j] != c && bytes[j] != b'\n' {
                j += if bytes[j] == b'\\' { 2 } else { 1 };
            }
            toks.push(Tok::Literal);
            i = (j + 1).min(bytes.len());
        } else if c.is_ascii_digit() {
            let mut j = i;
            while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_' || bytes[j] == b'.') {
                j += 1;
            }
            toks.push(Tok::Literal);
            i = j;
        } else if c.is_ascii_alphabetic() || c == b'_' || c == b'$' || c >= 0x80 {
            let start = i;
            let mut chars = text[i..].char_indices();
            let mut end = text.len();
            for (off, ch) in &mut chars {
                if !(ch.is_alphanumeric() || ch == '_' || ch == '$') {
                    end = i + off;
                    break;
                }
            }
            if end == start {
                // a non-identifier non-ASCII character
                let w = text[i..].chars().next().map_or(1, char::len_utf8);
                i += w;
                continue;
            }
            toks.push(Tok::Ident(text[start..end].to_string()));
            i = end;
        } else {
            match PUNCTS.iter().find(|p| text[i..].starts_with(**p)) {
                Some(p) => {
                    toks.push(Tok::Punct(p));
                    i += p.len();
                }
                None => i += 1,
            }
        }
    }
    (toks, comments)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Ctx {
    /// A class/interface/enum/record body.
    Type {
        anonymous: bool,
        enum_constants: bool,
        in_initializer: bool,
    },
    /// Method, constructor or initializer body, or any nested block.
    Code,
}

struct Bags<'a> {
    lexicon: &'a Lexicon,
    s: FileStructure,
}

fn add(lexicon: &Lexicon, bag: &mut TokenBag, ident: &str) {
    bag.merge(&lexicon.tokenize_code(ident));
}

/// The default brace-tracking scanner.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScannerExtractor;

impl StructureExtractor for ScannerExtractor {
    fn extract(&self, lexicon: &Lexicon, file_text: &str) -> FileStructure {
        let (toks, comments) = lex(file_text);
        let empty = || TokenBag::new(SourceKind::Code);
        let mut documentation = TokenBag::new(SourceKind::Natural);
        for c in &comments {
            documentation.merge(&lexicon.tokenize_natural(c));
        }
        let mut bags = Bags {
            lexicon,
            s: FileStructure {
                package_names: empty(),
                class_name: empty(),
                method_names: empty(),
                method_invocation: empty(),
                formal_parameter: empty(),
                member_reference: empty(),
                documentation,
                raw_source: lexicon.tokenize_code(file_text),
                degraded: false,
            },
        };
        Scan::new(&toks).run(&mut bags);
        bags.s
    }
}

struct Scan<'t> {
    toks: &'t [Tok],
    i: usize,
    stack: Vec<Ctx>,
    /// Parentheses opened in code: `true` when they hold `new T(...)` args.
    parens: Vec<bool>,
    pending_type: Option<bool>,
    pending_anonymous: bool,
    after_new: bool,
    degraded: bool,
}

impl<'t> Scan<'t> {
    fn new(toks: &'t [Tok]) -> Self {
        Scan {
            toks,
            i: 0,
            stack: Vec::new(),
            parens: Vec::new(),
            pending_type: None,
            pending_anonymous: false,
            after_new: false,
            degraded: false,
        }
    }

    fn peek(&self, off: usize) -> Option<&'t Tok> {
        self.toks.get(self.i + off)
    }

    fn prev(&self) -> Option<&'t Tok> {
        self.i.checked_sub(1).and_then(|j| self.toks.get(j))
    }

    fn is_punct(t: Option<&Tok>, p: &str) -> bool {
        matches!(t, Some(Tok::Punct(q)) if *q == p)
    }

    fn in_anonymous(&self) -> bool {
        self.stack
            .iter()
            .rev()
            .find_map(|c| match c {
                Ctx::Type { anonymous, .. } => Some(*anonymous),
                Ctx::Code => None,
            })
            .unwrap_or(false)
    }

    /// Whether the current position is read as declarations.
    fn declaration_level(&self) -> bool {
        match self.stack.last() {
            None => true,
            Some(Ctx::Type { in_initializer, .. }) => !in_initializer,
            Some(Ctx::Code) => false,
        }
    }

    /// Index of the `)` matching the `(` at `open`, if balanced.
    fn matching_paren(&self, open: usize) -> Option<usize> {
        let mut depth = 0usize;
        for (j, t) in self.toks.iter().enumerate().skip(open) {
            match t {
                Tok::Punct("(") => depth += 1,
                Tok::Punct(")") => {
                    depth -= 1;
                    if depth == 0 {
                        return Some(j);
                    }
                }
                _ => {}
            }
        }
        None
    }

    fn run(mut self, bags: &mut Bags) {
        while self.i < self.toks.len() {
            let toks = self.toks;
            match &toks[self.i] {
                Tok::Punct("{") => self.open_brace(),
                Tok::Punct("}") => {
                    if self.stack.pop().is_none() {
                        self.degraded = true;
                    }
                    self.after_new = false;
                    self.i += 1;
                }
                Tok::Punct(";") => {
                    if let Some(Ctx::Type {
                        in_initializer,
                        enum_constants,
                        ..
                    }) = self.stack.last_mut()
                    {
                        *in_initializer = false;
                        *enum_constants = false;
                    }
                    self.pending_type = None;
                    self.after_new = false;
                    self.i += 1;
                }
                Tok::Punct("@") => self.skip_annotation(),
                Tok::Ident(word) if word == "package" && self.stack.is_empty() => {
                    self.i += 1;
                    while let Some(t) = self.peek(0) {
                        match t {
                            Tok::Ident(p) => add(bags.lexicon, &mut bags.s.package_names, p),
                            Tok::Punct(";") => break,
                            _ => {}
                        }
                        self.i += 1;
                    }
                }
                Tok::Ident(word) if word == "import" && self.stack.is_empty() => {
                    while !Self::is_punct(self.peek(0), ";") && self.i < self.toks.len() {
                        self.i += 1;
                    }
                }
                Tok::Ident(word)
                    if self.is_type_keyword(word) && !Self::is_punct(self.prev(), ".") =>
                {
                    if let Some(Tok::Ident(name)) = self.peek(1) {
                        if !is_reserved(name) {
                            add(bags.lexicon, &mut bags.s.class_name, name);
                            self.pending_type = Some(word == "enum");
                            self.i += 2;
                            continue;
                        }
                    }
                    self.i += 1;
                }
                _ if self.declaration_level() => self.declaration_token(bags),
                _ => self.code_token(bags),
            }
        }
        if !self.stack.is_empty() || !self.parens.is_empty() {
            self.degraded = true;
        }
        bags.s.degraded = self.degraded;
    }

    fn is_type_keyword(&self, word: &str) -> bool {
        match word {
            "class" | "interface" | "enum" => true,
            // contextual: `record Name(` or `record Name<`
            "record" => {
                matches!(self.peek(1), Some(Tok::Ident(_)))
                    && (Self::is_punct(self.peek(2), "(") || Self::is_punct(self.peek(2), "<"))
            }
            _ => false,
        }
    }

    fn open_brace(&mut self) {
        let ctx = if let Some(is_enum) = self.pending_type.take() {
            Ctx::Type {
                anonymous: false,
                enum_constants: is_enum,
                in_initializer: false,
            }
        } else if std::mem::take(&mut self.pending_anonymous) {
            Ctx::Type {
                anonymous: true,
                enum_constants: false,
                in_initializer: false,
            }
        } else if matches!(self.stack.last(), Some(Ctx::Type { enum_constants: true, .. })) {
            // body of an enum constant
            Ctx::Type {
                anonymous: true,
                enum_constants: false,
                in_initializer: false,
            }
        } else {
            Ctx::Code
        };
        self.stack.push(ctx);
        self.after_new = false;
        self.i += 1;
    }

    fn skip_annotation(&mut self) {
        self.i += 1;
        if matches!(self.peek(0), Some(Tok::Ident(w)) if w == "interface") {
            // `@interface Name` is a type declaration; let the main loop see it
            return;
        }
        while let Some(Tok::Ident(_)) = self.peek(0) {
            self.i += 1;
            if Self::is_punct(self.peek(0), ".") {
                self.i += 1;
            } else {
                break;
            }
        }
        if Self::is_punct(self.peek(0), "(") {
            match self.matching_paren(self.i) {
                Some(close) => self.i = close + 1,
                None => {
                    self.degraded = true;
                    self.i = self.toks.len();
                }
            }
        }
    }

    fn declaration_token(&mut self, bags: &mut Bags) {
        let enum_constants = matches!(
            self.stack.last(),
            Some(Ctx::Type {
                enum_constants: true,
                ..
            })
        );
        let toks = self.toks;
        match &toks[self.i] {
            Tok::Punct("=") => {
                if let Some(Ctx::Type { in_initializer, .. }) = self.stack.last_mut() {
                    *in_initializer = true;
                }
                self.i += 1;
            }
            Tok::Punct("(") => {
                // enum constant arguments, record headers and the like
                match self.matching_paren(self.i) {
                    Some(close) => {
                        self.i = close + 1;
                        if enum_constants && Self::is_punct(self.peek(0), "{") {
                            self.pending_anonymous = true;
                        }
                    }
                    None => {
                        self.degraded = true;
                        self.i = self.toks.len();
                    }
                }
            }
            Tok::Ident(name)
                if !enum_constants
                    && !is_reserved(name)
                    && Self::is_punct(self.peek(1), "(")
                    && !Self::is_punct(self.prev(), ".") =>
            {
                self.method_declaration(bags, name);
            }
            _ => self.i += 1,
        }
    }

    fn method_declaration(&mut self, bags: &mut Bags, name: &str) {
        let open = self.i + 1;
        let Some(close) = self.matching_paren(open) else {
            self.degraded = true;
            self.i = self.toks.len();
            return;
        };
        if !self.in_anonymous() {
            add(bags.lexicon, &mut bags.s.method_names, name);
            for p in parameter_names(&self.toks[open + 1..close]) {
                add(bags.lexicon, &mut bags.s.formal_parameter, p);
            }
        }
        // skip `throws ...`, array dims and `default` values up to the body
        self.i = close + 1;
        while let Some(t) = self.peek(0) {
            match t {
                Tok::Punct("{") => {
                    self.stack.push(Ctx::Code);
                    self.i += 1;
                    return;
                }
                Tok::Punct(";") | Tok::Punct("}") => return,
                _ => self.i += 1,
            }
        }
    }

    fn code_token(&mut self, bags: &mut Bags) {
        let toks = self.toks;
        match &toks[self.i] {
            Tok::Punct("=") if matches!(self.stack.last(), Some(Ctx::Type { .. })) => {
                self.i += 1;
            }
            Tok::Punct("(") => {
                self.parens.push(std::mem::take(&mut self.after_new));
                self.i += 1;
            }
            Tok::Punct(")") => {
                let was_new = self.parens.pop().unwrap_or_else(|| {
                    self.degraded = true;
                    false
                });
                self.i += 1;
                if was_new && Self::is_punct(self.peek(0), "{") {
                    self.pending_anonymous = true;
                }
            }
            Tok::Ident(word) if word == "new" => {
                self.after_new = true;
                self.i += 1;
            }
            Tok::Ident(name) => {
                let prev_dot = Self::is_punct(self.prev(), ".");
                let next = self.peek(1);
                if self.after_new || is_reserved(name) {
                    // type name of an instantiation, or a keyword
                } else if Self::is_punct(next, "(") {
                    if !NON_CALL_KEYWORDS.contains(&name.as_str()) {
                        add(bags.lexicon, &mut bags.s.method_invocation, name);
                    }
                } else if prev_dot || Self::is_punct(next, ".") {
                    add(bags.lexicon, &mut bags.s.member_reference, name);
                }
                self.i += 1;
            }
            _ => self.i += 1,
        }
    }
}

/// Last identifier of each top-level comma-separated parameter.
fn parameter_names(toks: &[Tok]) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut last: Option<&str> = None;
    let mut skip_annotation = false;
    for t in toks {
        match t {
            Tok::Punct("(") | Tok::Punct("<") | Tok::Punct("[") => depth += 1,
            Tok::Punct(")") | Tok::Punct(">") | Tok::Punct("]") => depth -= 1,
            Tok::Punct(",") if depth == 0 => {
                out.extend(last.take());
            }
            Tok::Punct("@") => skip_annotation = true,
            Tok::Ident(name) if depth == 0 => {
                if skip_annotation {
                    skip_annotation = false;
                } else if !is_reserved(name) {
                    last = Some(name);
                }
            }
            _ => {}
        }
    }
    out.extend(last);
    out
}

//! Recursive-descent checker for the DOT language grammar.
//!
//! graph     : [strict] (graph | digraph) [ID] '{' stmt_list '}'
//! stmt_list : [stmt [';'] stmt_list]
//! stmt      : node_stmt | edge_stmt | attr_stmt | ID '=' ID | subgraph
//! attr_stmt : (graph | node | edge) attr_list
//! attr_list : '[' [a_list] ']' [attr_list]
//! a_list    : ID '=' ID [(';' | ',')] [a_list]
//! edge_stmt : (node_id | subgraph) edgeRHS [attr_list]
//! edgeRHS   : edgeop (node_id | subgraph) [edgeRHS]
//! node_stmt : node_id [attr_list]
//! node_id   : ID [port]
//! subgraph  : [subgraph [ID]] '{' stmt_list '}'

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Id(String),
    Sym(char),
    Edge(&'static str),
}

fn lex(src: &str) -> Result<Vec<Tok>, String> {
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    let mut out = Vec::new();
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '/' && chars.get(i + 1) == Some(&'/') || c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
        } else if c == '/' && chars.get(i + 1) == Some(&'*') {
            i += 2;
            while i + 1 < chars.len() && !(chars[i] == '*' && chars[i + 1] == '/') {
                i += 1;
            }
            if i + 1 >= chars.len() {
                return Err("unterminated comment".into());
            }
            i += 2;
        } else if "{}[]=;,:".contains(c) {
            out.push(Tok::Sym(c));
            i += 1;
        } else if c == '-' && chars.get(i + 1) == Some(&'>') {
            out.push(Tok::Edge("->"));
            i += 2;
        } else if c == '-' && chars.get(i + 1) == Some(&'-') {
            out.push(Tok::Edge("--"));
            i += 2;
        } else if c == '"' {
            let mut s = String::new();
            i += 1;
            loop {
                match chars.get(i) {
                    None => return Err("unterminated string".into()),
                    Some('"') => break,
                    Some('\\') => {
                        let next = chars.get(i + 1).ok_or("dangling escape")?;
                        s.push('\\');
                        s.push(*next);
                        i += 2;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        i += 1;
                    }
                }
            }
            i += 1;
            out.push(Tok::Id(s));
        } else if c.is_ascii_alphabetic() || c == '_' || !c.is_ascii() {
            let start = i;
            while i < chars.len()
                && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || !chars[i].is_ascii())
            {
                i += 1;
            }
            out.push(Tok::Id(chars[start..i].iter().collect()));
        } else if c.is_ascii_digit() || c == '.' || c == '-' {
            let start = i;
            i += 1;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            let num: String = chars[start..i].iter().collect();
            if num.matches('.').count() > 1 || num == "-" || num == "." {
                return Err(format!("bad numeral {num}"));
            }
            out.push(Tok::Id(num));
        } else {
            return Err(format!("unexpected character {c:?}"));
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
    edge_op: &'static str,
}

fn keyword(t: &Tok, k: &str) -> bool {
    matches!(t, Tok::Id(s) if s.eq_ignore_ascii_case(k))
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn sym(&mut self, c: char) -> Result<(), String> {
        match self.bump() {
            Some(Tok::Sym(s)) if s == c => Ok(()),
            other => Err(format!("expected {c:?}, found {other:?}")),
        }
    }

    fn at_sym(&self, c: char) -> bool {
        matches!(self.peek(), Some(Tok::Sym(s)) if *s == c)
    }

    fn id(&mut self) -> Result<String, String> {
        match self.bump() {
            Some(Tok::Id(s)) => Ok(s),
            other => Err(format!("expected ID, found {other:?}")),
        }
    }

    fn graph(&mut self) -> Result<(), String> {
        if self.peek().is_some_and(|t| keyword(t, "strict")) {
            self.pos += 1;
        }
        match self.bump() {
            Some(t) if keyword(&t, "digraph") => self.edge_op = "->",
            Some(t) if keyword(&t, "graph") => self.edge_op = "--",
            other => return Err(format!("expected graph or digraph, found {other:?}")),
        }
        if matches!(self.peek(), Some(Tok::Id(_))) {
            self.pos += 1;
        }
        self.sym('{')?;
        self.stmt_list()?;
        self.sym('}')?;
        if self.pos != self.toks.len() {
            return Err("trailing tokens".into());
        }
        Ok(())
    }

    fn stmt_list(&mut self) -> Result<(), String> {
        while !self.at_sym('}') {
            if self.peek().is_none() {
                return Err("unexpected end of input".into());
            }
            self.stmt()?;
            if self.at_sym(';') {
                self.pos += 1;
            }
        }
        Ok(())
    }

    fn attr_list(&mut self) -> Result<(), String> {
        while self.at_sym('[') {
            self.pos += 1;
            while !self.at_sym(']') {
                self.id()?;
                self.sym('=')?;
                self.id()?;
                if self.at_sym(';') || self.at_sym(',') {
                    self.pos += 1;
                }
            }
            self.sym(']')?;
        }
        Ok(())
    }

    fn subgraph(&mut self) -> Result<(), String> {
        if self.peek().is_some_and(|t| keyword(t, "subgraph")) {
            self.pos += 1;
            if matches!(self.peek(), Some(Tok::Id(_))) {
                self.pos += 1;
            }
        }
        self.sym('{')?;
        self.stmt_list()?;
        self.sym('}')
    }

    fn node_or_subgraph(&mut self) -> Result<(), String> {
        if self.at_sym('{') || self.peek().is_some_and(|t| keyword(t, "subgraph")) {
            return self.subgraph();
        }
        self.id()?;
        if self.at_sym(':') {
            self.pos += 1;
            self.id()?;
            if self.at_sym(':') {
                self.pos += 1;
                self.id()?;
            }
        }
        Ok(())
    }

    fn stmt(&mut self) -> Result<(), String> {
        let t = self.peek().cloned().ok_or("unexpected end of input")?;
        if ["graph", "node", "edge"].iter().any(|k| keyword(&t, k)) {
            self.pos += 1;
            return self.attr_list();
        }
        if matches!(t, Tok::Id(_)) && matches!(self.toks.get(self.pos + 1), Some(Tok::Sym('='))) {
            self.pos += 2;
            self.id()?;
            return Ok(());
        }
        self.node_or_subgraph()?;
        while let Some(Tok::Edge(op)) = self.peek() {
            if *op != self.edge_op {
                return Err(format!(
                    "edge operator {op} in a graph using {}",
                    self.edge_op
                ));
            }
            self.pos += 1;
            self.node_or_subgraph()?;
        }
        self.attr_list()
    }
}

/// Checks `src` against the DOT grammar.
pub fn check_dot(src: &str) -> Result<(), String> {
    let mut p = Parser {
        toks: lex(src)?,
        pos: 0,
        edge_op: "->",
    };
    p.graph()
}

use std::collections::BTreeMap;

use crate::error::{Error, Result};

use super::StructureClass;

/// Declared matrix symbol: a variable, or a named constant when `constant`
/// is set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableDecl {
    pub name: String,
    pub n: usize,
    pub structure: StructureClass,
    pub constant: bool,
}

impl VariableDecl {
    pub fn new(name: impl Into<String>, n: usize, structure: StructureClass) -> Self {
        Self { name: name.into(), n, structure, constant: false }
    }

    pub fn constant(name: impl Into<String>, n: usize, structure: StructureClass) -> Self {
        Self { name: name.into(), n, structure, constant: true }
    }
}

pub(crate) const RESERVED: &[&str] = &[
    "tr", "det", "frob2", "conj", "adj", "tp", "I", "exp", "log", "xlogx", "inv", "hd", "entry", "bil", "bilc",
    "series", "pow",
];

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Declaration context for parsing and differentiation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Decls {
    items: BTreeMap<String, VariableDecl>,
}

impl Decls {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_list(list: impl IntoIterator<Item = VariableDecl>) -> Result<Self> {
        let mut d = Self::new();
        for v in list {
            d.insert(v)?;
        }
        Ok(d)
    }

    pub fn insert(&mut self, decl: VariableDecl) -> Result<()> {
        if !is_identifier(&decl.name) || RESERVED.contains(&decl.name.as_str()) {
            return Err(Error::Input(format!("`{}` is not a valid matrix name", decl.name)));
        }
        if decl.n == 0 {
            return Err(Error::Input(format!("`{}` must have dimension >= 1", decl.name)));
        }
        if self.items.contains_key(&decl.name) {
            return Err(Error::Input(format!("`{}` declared twice", decl.name)));
        }
        self.items.insert(decl.name.clone(), decl);
        Ok(())
    }

    /// Builder-style insert for tests and examples; panics on invalid input.
    pub fn with(mut self, decl: VariableDecl) -> Self {
        self.insert(decl).expect("invalid declaration");
        self
    }

    pub fn get(&self, name: &str) -> Option<&VariableDecl> {
        self.items.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &VariableDecl> {
        self.items.values()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// The shared dimension when every declaration has the same one.
    pub fn common_dim(&self) -> Option<usize> {
        let mut dims = self.items.values().map(|d| d.n);
        let first = dims.next()?;
        dims.all(|n| n == first).then_some(first)
    }

    /// Parses the declaration file format: one `name dim structure` per
    /// line, optionally followed by `const`. Blank lines and `#` comments are
    /// ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut d = Self::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            d.insert(parse_line(line).map_err(|e| Error::Input(format!("line {}: {e}", lineno + 1)))?)?;
        }
        Ok(d)
    }

    pub fn to_text(&self) -> String {
        self.items
            .values()
            .map(|v| {
                let suffix = if v.constant { " const" } else { "" };
                format!("{} {} {}{}\n", v.name, v.n, v.structure, suffix)
            })
            .collect()
    }
}

fn parse_line(line: &str) -> Result<VariableDecl> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    let (name, n, structure, constant) = match fields.as_slice() {
        [name, n, s] => (*name, *n, *s, false),
        [name, n, s, "const"] => (*name, *n, *s, true),
        _ => return Err(Error::Input(format!("expected `name dim structure [const]`, got `{line}`"))),
    };
    let n: usize = n.parse().map_err(|_| Error::Input(format!("bad dimension `{n}`")))?;
    Ok(VariableDecl { name: name.to_string(), n, structure: structure.parse()?, constant })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_declaration_file() {
        let d = Decls::parse("# vars\nZ 4 unstructured\nR 4 hermitian\n\nA 4 unstructured const\n").unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.get("R").unwrap().structure, StructureClass::Hermitian);
        assert!(d.get("A").unwrap().constant);
        assert_eq!(d.common_dim(), Some(4));
        assert_eq!(Decls::parse(&d.to_text()).unwrap(), d);
    }

    #[test]
    fn rejects_bad_declarations() {
        assert!(Decls::parse("Z 0 unstructured").is_err());
        assert!(Decls::parse("Z 2 banded").is_err());
        assert!(Decls::parse("tr 2 unstructured").is_err());
        assert!(Decls::parse("Z 2 unstructured\nZ 2 hermitian").is_err());
        assert!(Decls::parse("Z two unstructured").is_err());
    }
}

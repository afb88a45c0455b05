//! Turtle export of the core graph.
//!
//! Output is canonical: subjects sorted by IRI, `a` first, remaining
//! predicate/object pairs sorted. Feeding the triples of a parsed export
//! back through [`write_canonical`] reproduces the same bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use super::{EdgeRecord, GraphStore, NodeClass, Relation};

pub const BOT: &str = "https://w3id.org/bot#";
pub const FOG: &str = "https://w3id.org/fog#";
pub const CBIM: &str = "urn:cbim:ontology#";
pub const INST: &str = "urn:cbim:inst:";
pub const PROP: &str = "urn:cbim:attribute:";
pub const XSD: &str = "http://www.w3.org/2001/XMLSchema#";
pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";

const PREFIXES: [(&str, &str); 6] = [
    ("bot", BOT),
    ("cbim", CBIM),
    ("fog", FOG),
    ("inst", INST),
    ("prop", PROP),
    ("xsd", XSD),
];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Iri(String),
    /// Lexical form and datatype IRI; `None` is a plain string.
    Literal(String, Option<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub subject: String,
    pub predicate: String,
    pub object: Term,
}

/// Percent-encodes everything outside `[A-Za-z0-9_-]` so the result is a
/// valid prefixed-name local part.
pub fn encode_local(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for b in raw.bytes() {
        if b.is_ascii_alphanumeric() || b == b'_' || b == b'-' {
            out.push(b as char);
        } else {
            let _ = write!(out, "%{b:02X}");
        }
    }
    out
}

fn inst(id: &str) -> String {
    format!("{INST}{}", encode_local(id))
}

fn relspatial_id(e: &EdgeRecord) -> String {
    inst(&format!("relspatial--{}--{}", e.src, e.dst))
}

fn class_iri(class: NodeClass) -> String {
    format!("{BOT}{}", class.as_str())
}

fn plain(s: &str) -> Term {
    Term::Literal(s.to_string(), None)
}

fn typed(s: String, datatype: &str) -> Term {
    Term::Literal(s, Some(format!("{XSD}{datatype}")))
}

/// The triples an export of `store` consists of.
pub fn store_triples(store: &GraphStore) -> BTreeSet<Triple> {
    let mut out = BTreeSet::new();
    let mut add = |s: &str, p: String, o: Term| {
        out.insert(Triple {
            subject: s.to_string(),
            predicate: p,
            object: o,
        });
    };
    for n in store.nodes() {
        let s = inst(&n.id);
        add(&s, RDF_TYPE.to_string(), Term::Iri(class_iri(n.node_class)));
        add(&s, format!("{CBIM}discipline"), plain(n.discipline.as_str()));
        if n.node_class == NodeClass::Element {
            add(&s, format!("{CBIM}category"), plain(&n.category));
        }
        if !n.name.is_empty() {
            add(&s, format!("{CBIM}name"), plain(&n.name));
        }
        for (k, v) in &n.attributes {
            add(&s, format!("{PROP}{}", encode_local(k)), plain(v));
        }
        if let Some(link) = &n.geometry_link {
            add(&s, format!("{FOG}asPly"), typed(link.clone(), "anyURI"));
        }
    }
    for e in store.edges() {
        match e.relation {
            Relation::RelSpatial => {
                let r = relspatial_id(e);
                add(&r, RDF_TYPE.to_string(), Term::Iri(format!("{CBIM}RelSpatial")));
                add(&r, format!("{CBIM}source"), Term::Iri(inst(&e.src)));
                add(&r, format!("{CBIM}target"), Term::Iri(inst(&e.dst)));
                if let Some(sp) = &e.spatial {
                    add(&r, format!("{CBIM}predicate"), plain(sp.predicate.as_str()));
                    add(&r, format!("{CBIM}minDistance"), typed(format!("{:?}", sp.min_distance), "double"));
                    add(&r, format!("{CBIM}computedAt"), plain(&sp.computed_at));
                    add(&r, format!("{CBIM}meshClosed"), typed(sp.mesh_closed_flag.to_string(), "boolean"));
                    add(&r, format!("{CBIM}aabbFallback"), typed(sp.aabb_fallback.to_string(), "boolean"));
                }
            }
            rel => add(
                &inst(&e.src),
                format!("{BOT}{}", rel.as_str()),
                Term::Iri(inst(&e.dst)),
            ),
        }
    }
    out
}

fn is_safe_local(local: &str) -> bool {
    let bytes = local.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if b == b'%' {
            let ok = bytes.len() > i + 2
                && bytes[i + 1].is_ascii_hexdigit()
                && bytes[i + 2].is_ascii_hexdigit();
            if !ok {
                return false;
            }
            i += 3;
        } else if b.is_ascii_alphanumeric() || b == b'_' || b == b'-' {
            i += 1;
        } else {
            return false;
        }
    }
    // A prefixed name may not start with '-'.
    !local.starts_with('-')
}

fn iri(out: &mut String, iri: &str) {
    for (prefix, ns) in PREFIXES {
        if let Some(local) = iri.strip_prefix(ns) {
            if is_safe_local(local) {
                let _ = write!(out, "{prefix}:{local}");
                return;
            }
        }
    }
    out.push('<');
    for c in iri.chars() {
        match c {
            '\u{00}'..='\u{20}' | '<' | '>' | '"' | '{' | '}' | '|' | '^' | '`' | '\\' => {
                let _ = write!(out, "\\u{:04X}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('>');
}

fn string_literal(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 || c == '\u{7f}' => {
                let _ = write!(out, "\\u{:04X}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
}

fn term(out: &mut String, t: &Term) {
    match t {
        Term::Iri(i) => iri(out, i),
        Term::Literal(value, datatype) => {
            string_literal(out, value);
            if let Some(dt) = datatype {
                out.push_str("^^");
                iri(out, dt);
            }
        }
    }
}

/// Serializes triples in canonical order with the fixed prefix set.
pub fn write_canonical<'a>(triples: impl IntoIterator<Item = &'a Triple>) -> String {
    let mut by_subject: BTreeMap<&str, BTreeSet<(bool, &str, &Term)>> = BTreeMap::new();
    for t in triples {
        by_subject.entry(&t.subject).or_default().insert((
            t.predicate != RDF_TYPE,
            &t.predicate,
            &t.object,
        ));
    }
    let mut out = String::new();
    for (prefix, ns) in PREFIXES {
        let _ = writeln!(out, "@prefix {prefix}: <{ns}> .");
    }
    for (subject, pos) in by_subject {
        out.push('\n');
        iri(&mut out, subject);
        out.push('\n');
        let last = pos.len() - 1;
        for (i, (not_type, predicate, object)) in pos.into_iter().enumerate() {
            out.push_str("    ");
            if not_type {
                iri(&mut out, predicate);
            } else {
                out.push('a');
            }
            out.push(' ');
            term(&mut out, object);
            out.push_str(if i == last { " .\n" } else { " ;\n" });
        }
    }
    out
}

pub fn export_turtle(store: &GraphStore) -> Vec<u8> {
    write_canonical(&store_triples(store)).into_bytes()
}

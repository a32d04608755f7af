//! Platform files.
//!
//! ```text
//! addrnet-platform v1
//! name <name>
//! node <id> <label> kind=accepting|fixed|configurable [ram] [kernel-managed] [constraint=<c>]
//!   accept <base>:<size>
//!   translate <base>:<size> -> <node>:<addr>[,<node>:<addr>...]
//! reach <from> <to>
//! subject <id> <label>
//! cap <type> <node>:<addr> size=<n> rights=<r> owner=<subject>
//! ```
//!
//! `accept` and `translate` lines belong to the closest preceding `node`.
//! Constraints are `unconstrained`, `granularity:<grain>` and
//! `register-array:<slot size>:<slots>`. Capability types and rights use
//! their display names; ASID ranges live under node 65535. `#` starts a
//! comment. [`print_platform`] writes the canonical form, which parses back
//! to an identical spec.

use std::fmt::Write as _;

use crate::authority::SubjectId;
use crate::config::ConfigConstraint;
use crate::net::{Name, TranslateEntry};
use crate::refmon::{CapType, Rights};
use crate::text::{fmt_range, lines, parse_name, parse_node, parse_range, parse_u64, Line, ParseError};

use super::{CapDecl, NodeDecl, NodeKind, PlatformError, PlatformSpec};

pub const PLATFORM_HEADER: &str = "addrnet-platform v1";

fn parse_constraint(s: &str) -> Option<ConfigConstraint> {
    if s == "unconstrained" {
        return Some(ConfigConstraint::Unconstrained);
    }
    if let Some(g) = s.strip_prefix("granularity:") {
        return Some(ConfigConstraint::GranularityContiguous { grain: parse_u64(g)? });
    }
    let (size, n) = s.strip_prefix("register-array:")?.split_once(':')?;
    Some(ConfigConstraint::RegisterArray { slot_size: parse_u64(size)?, num_slots: parse_u64(n)? })
}

fn print_constraint(c: &ConfigConstraint) -> Option<String> {
    match c {
        ConfigConstraint::Unconstrained => Some("unconstrained".into()),
        ConfigConstraint::GranularityContiguous { grain } => Some(format!("granularity:{grain:#x}")),
        ConfigConstraint::RegisterArray { slot_size, num_slots } => {
            Some(format!("register-array:{slot_size:#x}:{num_slots}"))
        }
        ConfigConstraint::Fixed(_) => None,
    }
}

fn positional<'a>(line: &Line<'a>, i: usize, what: &str) -> Result<(usize, &'a str), ParseError> {
    line.words.get(i).copied().ok_or_else(|| {
        let (col, w) = line.words[line.words.len() - 1];
        line.error(col + w.len(), format!("missing {what}"))
    })
}

fn expect_len(line: &Line<'_>, n: usize) -> Result<(), ParseError> {
    match line.words.get(n) {
        Some(&(col, w)) => Err(line.error(col, format!("unexpected `{w}`"))),
        None => Ok(()),
    }
}

fn parse_node_line(line: &Line<'_>) -> Result<NodeDecl, ParseError> {
    let (col, id) = positional(line, 1, "node id")?;
    let id = parse_node(id).ok_or_else(|| line.error(col, format!("invalid node id `{id}`")))?;
    let (_, label) = positional(line, 2, "node label")?;
    if label.contains('=') {
        return Err(line.error(line.words[2].0, "missing node label"));
    }
    let mut decl = NodeDecl::new(id.0, label, NodeKind::Fixed);
    let mut kind = None;
    for &(col, w) in &line.words[3..] {
        match w.split_once('=') {
            Some(("kind", k)) if kind.is_none() => {
                kind = Some(NodeKind::parse(k).ok_or_else(|| line.error(col, format!("invalid kind `{k}`")))?);
            }
            Some(("constraint", c)) if decl.constraint.is_none() => {
                decl.constraint = Some(
                    parse_constraint(c).ok_or_else(|| line.error(col, format!("invalid constraint `{c}`")))?,
                );
            }
            None if w == "ram" && !decl.ram => decl.ram = true,
            None if w == "kernel-managed" && !decl.kernel_managed => decl.kernel_managed = true,
            _ => return Err(line.error(col, format!("unexpected `{w}`"))),
        }
    }
    decl.kind = kind.ok_or_else(|| {
        let (col, w) = line.words[line.words.len() - 1];
        line.error(col + w.len(), "missing `kind=`")
    })?;
    Ok(decl)
}

fn parse_translate(line: &Line<'_>) -> Result<TranslateEntry, ParseError> {
    let (col, src) = positional(line, 1, "source range")?;
    let src = parse_range(src).ok_or_else(|| line.error(col, format!("invalid range `{src}`")))?;
    let (col, arrow) = positional(line, 2, "`->`")?;
    if arrow != "->" {
        return Err(line.error(col, "expected `->`"));
    }
    let (col, dests) = positional(line, 3, "destination")?;
    let dests = dests
        .split(',')
        .map(|d| parse_name(d).ok_or_else(|| line.error(col, format!("invalid name `{d}`"))))
        .collect::<Result<Vec<Name>, _>>()?;
    expect_len(line, 4)?;
    Ok(TranslateEntry { src, dests })
}

fn parse_cap(line: &Line<'_>) -> Result<CapDecl, ParseError> {
    let mut f = line.fields()?;
    let (col, t) = *f.positional.first().ok_or_else(|| line.error(line.words[0].1.len() + 1, "missing type"))?;
    let ctype = CapType::parse(t).ok_or_else(|| line.error(col, format!("invalid capability type `{t}`")))?;
    let (col, b) = *f.positional.get(1).ok_or_else(|| line.error(col + t.len(), "missing base name"))?;
    let base = parse_name(b).ok_or_else(|| line.error(col, format!("invalid name `{b}`")))?;
    if let Some(&(col, w)) = f.positional.get(2) {
        return Err(line.error(col, format!("unexpected `{w}`")));
    }
    let size = f.parsed("size", "size", |s| parse_u64(s).filter(|&n| n > 0))?;
    let rights = f.parsed("rights", "rights", Rights::parse)?;
    let owner = f.parsed("owner", "subject", |s| s.parse().ok().map(SubjectId))?;
    f.finish()?;
    Ok(CapDecl { ctype, base, size, rights, owner })
}

pub fn load_platform(text: &str) -> Result<PlatformSpec, PlatformError> {
    let mut it = lines(text);
    let header = it.next().ok_or(ParseError { line: 1, column: 1, message: "empty platform file".into() })?;
    let found = header.words.iter().map(|w| w.1).collect::<Vec<_>>().join(" ");
    if found != PLATFORM_HEADER {
        return Err(header.error(1, format!("expected header `{PLATFORM_HEADER}`")).into());
    }
    let mut spec = PlatformSpec {
        name: String::new(),
        nodes: Vec::new(),
        reach: Vec::new(),
        subjects: Vec::new(),
        caps: Vec::new(),
    };
    let mut named = false;
    for line in it {
        match line.keyword() {
            "name" if !named => {
                spec.name = positional(&line, 1, "platform name")?.1.to_string();
                expect_len(&line, 2)?;
                named = true;
            }
            "node" => spec.nodes.push(parse_node_line(&line)?),
            kw @ ("accept" | "translate") => {
                let node = spec
                    .nodes
                    .last_mut()
                    .ok_or_else(|| line.error(1, format!("`{kw}` outside a node")))?;
                if kw == "accept" {
                    let (col, r) = positional(&line, 1, "range")?;
                    let r = parse_range(r).ok_or_else(|| line.error(col, format!("invalid range `{r}`")))?;
                    expect_len(&line, 2)?;
                    node.spec.accept.push(r);
                } else {
                    node.spec.translate.push(parse_translate(&line)?);
                }
            }
            "reach" => {
                let mut ends = [None; 2];
                for (i, end) in ends.iter_mut().enumerate() {
                    let (col, w) = positional(&line, i + 1, "node id")?;
                    *end = Some(parse_node(w).ok_or_else(|| line.error(col, format!("invalid node id `{w}`")))?);
                }
                expect_len(&line, 3)?;
                spec.reach.push((ends[0].unwrap(), ends[1].unwrap()));
            }
            "subject" => {
                let (col, id) = positional(&line, 1, "subject id")?;
                let id = id.parse().map_err(|_| line.error(col, format!("invalid subject id `{id}`")))?;
                let (_, label) = positional(&line, 2, "subject label")?;
                expect_len(&line, 3)?;
                spec.subjects.push((SubjectId(id), label.to_string()));
            }
            "cap" => spec.caps.push(parse_cap(&line)?),
            other => return Err(line.error(1, format!("unexpected `{other}`")).into()),
        }
    }
    if !named {
        return Err(ParseError { line: 1, column: 1, message: "missing `name` line".into() }.into());
    }
    spec.validate()?;
    Ok(spec)
}

pub fn print_platform(spec: &PlatformSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{PLATFORM_HEADER}\nname {}\n", spec.name);
    for n in &spec.nodes {
        let _ = write!(out, "node {} {} kind={}", n.id, n.label, n.kind.name());
        if n.ram {
            out.push_str(" ram");
        }
        if n.kernel_managed {
            out.push_str(" kernel-managed");
        }
        if let Some(c) = n.constraint.as_ref().and_then(print_constraint) {
            let _ = write!(out, " constraint={c}");
        }
        out.push('\n');
        for a in &n.spec.accept {
            let _ = writeln!(out, "  accept {}", fmt_range(a));
        }
        for e in &n.spec.translate {
            let dests: Vec<String> = e.dests.iter().map(ToString::to_string).collect();
            let _ = writeln!(out, "  translate {} -> {}", fmt_range(&e.src), dests.join(","));
        }
    }
    if !spec.reach.is_empty() {
        out.push('\n');
    }
    for (u, v) in &spec.reach {
        let _ = writeln!(out, "reach {u} {v}");
    }
    if !spec.subjects.is_empty() {
        out.push('\n');
    }
    for (id, label) in &spec.subjects {
        let _ = writeln!(out, "subject {id} {label}");
    }
    if !spec.caps.is_empty() {
        out.push('\n');
    }
    for c in &spec.caps {
        let _ = writeln!(
            out,
            "cap {} {} size={:#x} rights={} owner={}",
            c.ctype, c.base, c.size, c.rights, c.owner
        );
    }
    out
}

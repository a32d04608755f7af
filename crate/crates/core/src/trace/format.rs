//! Trace files: one operation per line, `op key=value ...`, `#` comments.
//!
//! ```text
//! retype         subject=1 src=h0 type=frame offset=0x0 size=0x1000
//! derive-as      subject=1 table=h2
//! asid-retype    subject=1 range=h1 count=4
//! map            subject=1 table=h3|as:7 object=h2 at=0x0:0x1000 [via=canonical|node:addr|local:node]
//! unmap          subject=1 mapping=h4
//! copy           subject=1 cap=h2 to=2
//! revoke         subject=1 cap=h0
//! delete         subject=1 cap=h0
//! modify-map-raw subject=0 space=3 at=0x0:0x1000 dest=0:0x0
//! ```
//!
//! Numbers are decimal or `0x` hexadecimal. The printer emits the canonical
//! form, which the parser reads back to the same operations.

use crate::authority::SubjectId;
use crate::refmon::{CapType, Handle, TableRef, Via};
use crate::text::{fmt_range, lines, parse_name, parse_node, parse_range, parse_u64, Fields, ParseError};

use super::MonitorOp;

fn parse_handle(s: &str) -> Option<Handle> {
    s.strip_prefix('h')?.parse().ok().map(Handle)
}

fn parse_subject(s: &str) -> Option<SubjectId> {
    s.parse().ok().map(SubjectId)
}

fn parse_table(s: &str) -> Option<TableRef> {
    match s.strip_prefix("as:") {
        Some(a) => parse_node(a).map(TableRef::Space),
        None => parse_handle(s).map(TableRef::Handle),
    }
}

fn parse_via(s: &str) -> Option<Via> {
    if s == "canonical" {
        return Some(Via::Canonical);
    }
    match s.strip_prefix("local:") {
        Some(n) => parse_node(n).map(Via::Local),
        None => parse_name(s).map(Via::Name),
    }
}

fn print_table(t: &TableRef) -> String {
    match t {
        TableRef::Handle(h) => h.to_string(),
        TableRef::Space(a) => format!("as:{a}"),
    }
}

fn print_via(v: &Via) -> String {
    match v {
        Via::Canonical => "canonical".into(),
        Via::Name(n) => n.to_string(),
        Via::Local(node) => format!("local:{node}"),
    }
}

fn parse_op(kw: &str, f: &mut Fields<'_>) -> Result<Option<MonitorOp>, ParseError> {
    let subject = |f: &mut Fields<'_>| f.parsed("subject", "subject", parse_subject);
    let handle = |f: &mut Fields<'_>, k: &str| f.parsed(k, "handle", parse_handle);
    Ok(Some(match kw {
        "retype" => MonitorOp::Retype {
            subject: subject(f)?,
            src: handle(f, "src")?,
            to: f.parsed("type", "capability type", CapType::parse)?,
            offset: f.parsed("offset", "number", parse_u64)?,
            size: f.parsed("size", "number", parse_u64)?,
        },
        "derive-as" => MonitorOp::DeriveAs { subject: subject(f)?, table: handle(f, "table")? },
        "asid-retype" => MonitorOp::AsidRetype {
            subject: subject(f)?,
            range: handle(f, "range")?,
            count: f.parsed("count", "number", parse_u64)?,
        },
        "map" => MonitorOp::Map {
            subject: subject(f)?,
            table: f.parsed("table", "table", parse_table)?,
            object: handle(f, "object")?,
            at: f.parsed("at", "range", parse_range)?,
            via: f.optional("via", "via", parse_via)?.unwrap_or_default(),
        },
        "unmap" => MonitorOp::Unmap { subject: subject(f)?, mapping: handle(f, "mapping")? },
        "copy" => MonitorOp::Copy {
            subject: subject(f)?,
            cap: handle(f, "cap")?,
            to: f.parsed("to", "subject", parse_subject)?,
        },
        "revoke" => MonitorOp::Revoke { subject: subject(f)?, cap: handle(f, "cap")? },
        "delete" => MonitorOp::Delete { subject: subject(f)?, cap: handle(f, "cap")? },
        "modify-map-raw" => MonitorOp::ModifyMapRaw {
            subject: subject(f)?,
            space: f.parsed("space", "node", parse_node)?,
            at: f.parsed("at", "range", parse_range)?,
            dest: f.parsed("dest", "name", parse_name)?,
        },
        _ => return Ok(None),
    }))
}

pub fn parse_trace(text: &str) -> Result<Vec<MonitorOp>, ParseError> {
    let mut ops = Vec::new();
    for line in lines(text) {
        let mut fields = line.fields()?;
        if let Some(&(col, _)) = fields.positional.first() {
            return Err(line.error(col, "expected `key=value`"));
        }
        let op = parse_op(line.keyword(), &mut fields)?
            .ok_or_else(|| line.error(1, format!("unknown operation `{}`", line.keyword())))?;
        fields.finish()?;
        ops.push(op);
    }
    Ok(ops)
}

pub(crate) fn print_op(op: &MonitorOp) -> String {
    match op {
        MonitorOp::Retype { subject, src, to, offset, size } => {
            format!("retype subject={subject} src={src} type={to} offset={offset:#x} size={size:#x}")
        }
        MonitorOp::DeriveAs { subject, table } => format!("derive-as subject={subject} table={table}"),
        MonitorOp::AsidRetype { subject, range, count } => {
            format!("asid-retype subject={subject} range={range} count={count}")
        }
        MonitorOp::Map { subject, table, object, at, via } => format!(
            "map subject={subject} table={} object={object} at={} via={}",
            print_table(table),
            fmt_range(at),
            print_via(via)
        ),
        MonitorOp::Unmap { subject, mapping } => format!("unmap subject={subject} mapping={mapping}"),
        MonitorOp::Copy { subject, cap, to } => format!("copy subject={subject} cap={cap} to={to}"),
        MonitorOp::Revoke { subject, cap } => format!("revoke subject={subject} cap={cap}"),
        MonitorOp::Delete { subject, cap } => format!("delete subject={subject} cap={cap}"),
        MonitorOp::ModifyMapRaw { subject, space, at, dest } => {
            format!("modify-map-raw subject={subject} space={space} at={} dest={}", fmt_range(at), dest)
        }
    }
}

pub fn print_trace(ops: &[MonitorOp]) -> String {
    ops.iter().map(|op| print_op(op) + "\n").collect()
}

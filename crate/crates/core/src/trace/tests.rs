use proptest::prelude::*;

use super::*;
use crate::config::{ConfigConstraint, ConfigSpace};
use crate::net::{DecodingNet, NodeId, NodeSpec};
use crate::refmon::{InitialCap, Payload, Rights, ASID_NODE};

const OWNER: SubjectId = SubjectId(1);
const OTHER: SubjectId = SubjectId(2);

fn r(base: u64, size: u64) -> AddrRange {
    AddrRange::new(base, size).unwrap()
}

/// dram (node 0), one configurable space (node 1); OWNER holds RAM, the
/// space, and 8 ASIDs as handles h0, h1, h2.
fn world() -> KernelState {
    let mut net = DecodingNet::new();
    net.insert(NodeId(0), NodeSpec::accepting(r(0, 0x100000)));
    net.insert(NodeId(1), NodeSpec::default());
    let mut cs = ConfigSpace::default();
    cs.constraints.insert(NodeId(1), ConfigConstraint::GranularityContiguous { grain: 0x1000 });
    let mut st = KernelState::new(net, cs);
    st.add_subject(OWNER, "owner");
    st.add_subject(OTHER, "other");
    st.declare_memory(Name::new(NodeId(0), 0), 0x100000);
    let caps = [
        (CapType::Ram, Name::new(NodeId(0), 0), 0x100000, Rights::ACCESS.union(Rights::GRANT), Payload::None),
        (CapType::AddressSpace, Name::new(NodeId(1), 0), 1 << 32, Rights::MAP, Payload::AddressSpace { asid: NodeId(1) }),
        (CapType::AsidRange, Name::new(ASID_NODE, 32), 8, Rights::NONE, Payload::None),
    ];
    for (ctype, base, size, rights, payload) in caps {
        st.install_initial(InitialCap { ctype, base, size, rights, owner: OWNER, payload }).unwrap();
    }
    st
}

const MAPPING_A_RAM_OBJECT: &str = "\
# RAM -> Frame, RAM -> table, table -> address space, frame into table
retype subject=1 src=h0 type=frame offset=0x0 size=0x1000
retype subject=1 src=h0 type=tstructure:1 offset=0x1000 size=0x1000
derive-as subject=1 table=h4
map subject=1 table=h4 object=h3 at=0x0:0x1000
";

#[test]
fn mapping_a_ram_object_completes() {
    let ops = parse_trace(MAPPING_A_RAM_OBJECT).unwrap();
    let res = run_trace(world(), &ops, CheckSet::ALL);
    assert_eq!(res.outcome, Outcome::Completed);
    assert_eq!(res.states.len(), ops.len() + 1);
    assert_eq!(classify_trace(&res), Classification::Correct);
    let st = res.last().unwrap();
    let asid = NodeId(32);
    assert_eq!(
        crate::net::resolve(&st.materialized(), Name::new(asid, 0x10)).unwrap().unique(),
        Some(Name::new(NodeId(0), 0x10))
    );
}

#[test]
fn map_without_rights_aborts_and_keeps_prior_state() {
    let mut ops = parse_trace(MAPPING_A_RAM_OBJECT).unwrap();
    ops.insert(3, MonitorOp::Copy { subject: OWNER, cap: Handle(3), to: OTHER });
    ops[4] = MonitorOp::Map {
        subject: OTHER,
        table: TableRef::Space(NodeId(32)),
        object: Handle(0),
        at: r(0, 0x1000),
        via: Via::Canonical,
    };
    let res = run_trace(world(), &ops, CheckSet::ALL);
    match &res.outcome {
        Outcome::Aborted { step: 4, error } => assert_eq!(error.kind(), "RightsViolation"),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(res.states.len(), 5);
    assert_eq!(classify_trace(&res), Classification::Incorrect);
    let again = run_trace(world(), &ops[..4], CheckSet::ALL);
    assert_eq!(again.last(), res.last());
}

#[test]
fn empty_trace_is_correct() {
    let res = run_trace(world(), &[], CheckSet::ALL);
    assert_eq!(res.states, vec![world()]);
    assert_eq!(classify_trace(&res), Classification::Correct);
}

#[test]
fn invariant_failures_abort() {
    // A raw entry onto memory that is now a translation table.
    let ops = vec![
        MonitorOp::Retype { subject: OWNER, src: Handle(0), to: CapType::TStructure { level: 1 }, offset: 0, size: 0x1000 },
        MonitorOp::ModifyMapRaw { subject: crate::refmon::MONITOR, space: NodeId(1), at: r(0, 0x1000), dest: Name::new(NodeId(0), 0) },
    ];
    let res = run_trace(world(), &ops, CheckSet::ALL);
    match &res.outcome {
        Outcome::Aborted { step: 1, error } => assert_eq!(error.kind(), "NeverAccessible"),
        other => panic!("unexpected {other:?}"),
    }
    let unchecked = run_trace(world(), &ops, CheckSet::NONE);
    assert_eq!(unchecked.outcome, Outcome::Completed);
}

#[test]
fn enumeration_counts_and_sharing() {
    let a = MonitorOp::Retype { subject: OWNER, src: Handle(0), to: CapType::Frame, offset: 0, size: 0x1000 };
    let b = MonitorOp::Revoke { subject: OWNER, cap: Handle(0) };
    let one = enumerate_small_traces(&world(), std::slice::from_ref(&a), 3, CheckSet::ALL, 1000).unwrap();
    for len in 0..=3 {
        assert_eq!(one.iter().filter(|t| t.ops.len() == len).count(), 1);
    }
    let two = enumerate_small_traces(&world(), &[a.clone(), b.clone()], 2, CheckSet::ALL, 1000).unwrap();
    assert_eq!(two.iter().filter(|t| t.ops.len() == 2).count(), 4);
    for t in &two {
        let ops: Vec<_> = t.ops.iter().map(|&i| [&a, &b][i].clone()).collect();
        assert_eq!(t.result, run_trace(world(), &ops, CheckSet::ALL), "{:?}", t.ops);
    }
    assert_eq!(
        enumerate_small_traces(&world(), &[a.clone(), b], 3, CheckSet::ALL, 5).unwrap_err(),
        EnumerateError::BudgetExceeded(5)
    );
    assert_eq!(
        enumerate_small_traces(&world(), &[a], 6, CheckSet::ALL, 5).unwrap_err(),
        EnumerateError::TooLong
    );
}

#[test]
fn parse_errors_carry_positions() {
    let e = parse_trace("retype subject=1\n").unwrap_err();
    assert_eq!((e.line, e.column), (1, 17));
    let e = parse_trace("\n  frobnicate x=1\n").unwrap_err();
    assert_eq!((e.line, e.column), (2, 1));
    let e = parse_trace("unmap subject=1 mapping=7\n").unwrap_err();
    assert_eq!((e.line, e.column), (1, 17));
    let e = parse_trace("unmap subject=1 mapping=h7 extra=1\n").unwrap_err();
    assert_eq!(e.column, 28);
}

fn arb_op() -> impl Strategy<Value = MonitorOp> {
    let s = (0u32..4).prop_map(SubjectId);
    let h = (0u32..64).prop_map(Handle);
    let range = (0u64..1 << 36, 1u64..1 << 36).prop_map(|(b, n)| r(b, n));
    let name = (0u16..100, 0u64..1 << 40).prop_map(|(n, a)| Name::new(NodeId(n), a));
    let ctype = prop_oneof![
        Just(CapType::Ram),
        Just(CapType::Frame),
        (1u8..5).prop_map(|level| CapType::TStructure { level }),
    ];
    let table = prop_oneof![h.clone().prop_map(TableRef::Handle), (0u16..9).prop_map(|a| TableRef::Space(NodeId(a)))];
    let via = prop_oneof![
        Just(Via::Canonical),
        name.clone().prop_map(Via::Name),
        (0u16..9).prop_map(|n| Via::Local(NodeId(n))),
    ];
    prop_oneof![
        (s.clone(), h.clone(), ctype, any::<u32>(), 1u64..1 << 40).prop_map(|(subject, src, to, offset, size)| {
            MonitorOp::Retype { subject, src, to, offset: offset.into(), size }
        }),
        (s.clone(), h.clone()).prop_map(|(subject, table)| MonitorOp::DeriveAs { subject, table }),
        (s.clone(), h.clone(), 0u64..99).prop_map(|(subject, range, count)| MonitorOp::AsidRetype { subject, range, count }),
        (s.clone(), table, h.clone(), range.clone(), via)
            .prop_map(|(subject, table, object, at, via)| MonitorOp::Map { subject, table, object, at, via }),
        (s.clone(), h.clone()).prop_map(|(subject, mapping)| MonitorOp::Unmap { subject, mapping }),
        (s.clone(), h.clone(), s.clone()).prop_map(|(subject, cap, to)| MonitorOp::Copy { subject, cap, to }),
        (s.clone(), h.clone()).prop_map(|(subject, cap)| MonitorOp::Revoke { subject, cap }),
        (s.clone(), h).prop_map(|(subject, cap)| MonitorOp::Delete { subject, cap }),
        (s, 0u16..9, range, name).prop_map(|(subject, space, at, dest)| MonitorOp::ModifyMapRaw {
            subject,
            space: NodeId(space),
            at,
            dest
        }),
    ]
}

proptest! {
    #[test]
    fn print_parse_roundtrip(ops in prop::collection::vec(arb_op(), 0..20)) {
        let text = print_trace(&ops);
        prop_assert_eq!(parse_trace(&text).unwrap(), ops.clone());
        prop_assert_eq!(print_trace(&parse_trace(&text).unwrap()), text);
    }
}

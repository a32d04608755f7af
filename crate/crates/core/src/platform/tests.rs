use super::*;
use crate::net::{resolve, ResolveResult};

fn all_builtins() -> Vec<PlatformSpec> {
    let mut v: Vec<PlatformSpec> = builtin_names().into_iter().map(|n| builtin(n).unwrap()).collect();
    v.push(builtin("pcie_scale:3").unwrap());
    v
}

#[test]
fn builtins_validate_and_round_trip() {
    for spec in all_builtins() {
        spec.validate().unwrap_or_else(|e| panic!("{}: {e}", spec.name));
        let text = print_platform(&spec);
        let back = load_platform(&text).unwrap_or_else(|e| panic!("{}: {e}", spec.name));
        assert_eq!(back, spec);
        assert_eq!(print_platform(&back), text);
    }
}

#[test]
fn builtin_names_resolve() {
    assert_eq!(builtin("pcie_scale(5)").unwrap(), builtin("pcie_scale:5").unwrap());
    assert!(matches!(builtin("vax"), Err(PlatformError::UnknownPlatform(_))));
    assert!(matches!(builtin("pcie_scale:x"), Err(PlatformError::UnknownPlatform(_))));
    assert!(matches!(builtin("pcie_scale:40000"), Err(PlatformError::UnknownPlatform(_))));
}

#[test]
fn pcie_grows_by_two_nodes_per_device() {
    for n in 0..5 {
        let spec = pcie_scale(n).unwrap();
        assert_eq!(spec.nodes.len(), PCIE_BASELINE_NODES + 2 * n);
        let configurable = spec.nodes.iter().filter(|d| d.kind == NodeKind::Configurable).count();
        assert_eq!(configurable, 2 + n);
    }
}

#[test]
fn parse_errors() {
    let e = load_platform("").unwrap_err();
    assert_eq!(e.kind(), "ParseError");
    let e = load_platform("# only a comment\n").unwrap_err();
    assert_eq!(e.kind(), "ParseError");
    let e = load_platform("addrnet-platform v2\nname x\n").unwrap_err();
    assert!(matches!(e, PlatformError::Parse(ParseError { line: 1, column: 1, .. })));
    let e = load_platform("addrnet-platform v1\nname x\naccept 0x0:0x1000\n").unwrap_err();
    assert!(matches!(e, PlatformError::Parse(ParseError { line: 3, .. })));
    let e = load_platform("addrnet-platform v1\nname x\nnode 0 a kind=odd\n").unwrap_err();
    assert!(matches!(e, PlatformError::Parse(ParseError { line: 3, column: 10, .. })));
    let e = load_platform("addrnet-platform v1\nname x\nnode 0 a kind=fixed\n  translate 0x0:0x10 => 1:0\n")
        .unwrap_err();
    assert!(matches!(e, PlatformError::Parse(ParseError { line: 4, column: 22, .. })));
}

#[test]
fn semantic_errors() {
    let base = "addrnet-platform v1\nname x\n";
    let cases = [
        "node 0 a kind=accepting\n  accept 0x0:0x1000\nnode 0 b kind=accepting\n",
        "node 0 a kind=fixed\n  translate 0x0:0x1000 -> 9:0x0\n",
        "node 0 a kind=configurable\n",
        "node 0 a kind=configurable constraint=granularity:0x10\n",
        "node 0 a kind=fixed constraint=unconstrained\n",
        "node 0 a kind=accepting kernel-managed\n",
        "node 0 a kind=accepting ram\n  accept 0x0:0x2000\nsubject 1 s\ncap ram 0:0x0 size=0x1000 rights=access owner=1\n",
        "node 0 a kind=accepting ram\n  accept 0x0:0x1000\ncap ram 0:0x0 size=0x1000 rights=access owner=1\n",
        "node 0 a kind=accepting\nreach 0 0\n",
    ];
    for body in cases {
        let e = load_platform(&format!("{base}{body}")).unwrap_err();
        assert_eq!(e.kind(), "SemanticError", "{body}");
    }
    let ok = "node 0 a kind=accepting ram\n  accept 0x0:0x2000\nsubject 1 s\ncap ram 0:0x0 size=0x2000 rights=access owner=1\n";
    assert!(load_platform(&format!("{base}{ok}")).is_ok());
}

#[test]
fn boot_handles_follow_declaration_order() {
    let spec = xeon_phi();
    let st = spec.boot().unwrap();
    let handles = spec.boot_handles();
    for (owner, hs) in handles {
        let held: Vec<_> = spec.caps.iter().filter(|c| c.owner == owner).collect();
        for (h, decl) in hs.iter().zip(held) {
            let c = st.lookup(owner, *h).unwrap();
            assert_eq!((c.ctype, c.base, c.size), (decl.ctype, decl.base, decl.size));
        }
    }
}

#[test]
fn arm_cluster_views() {
    let uniform = arm(ArmVariant::Uniform);
    let t0 = gen_xlate(&uniform, NodeId(4)).unwrap();
    let t1 = gen_xlate(&uniform, NodeId(5)).unwrap();
    assert_eq!(t0.forward, t1.forward);

    let swapped = arm(ArmVariant::Swapped);
    let s0 = gen_xlate(&swapped, NodeId(4)).unwrap();
    let s1 = gen_xlate(&swapped, NodeId(5)).unwrap();
    let half = 1 << 30;
    assert_eq!(s0.to_canonical(ARM_DRAM_BASE), s1.to_canonical(ARM_DRAM_BASE + half));
    assert_eq!(s0.to_canonical(ARM_DRAM_BASE + half), s1.to_canonical(ARM_DRAM_BASE));

    let private = arm(ArmVariant::PrivateSwapped);
    let net = private.net();
    for (mine, other) in [(4u16, 5u16), (5, 4)] {
        let local = ARM_PRIVATE_BASE[usize::from(mine - 4)];
        let own = resolve(&net, Name::new(NodeId(mine), local)).unwrap();
        assert_eq!(own.unique().map(|n| n.node), Some(NodeId(mine - 2)));
        assert!(matches!(
            resolve(&net, Name::new(NodeId(other), local)).unwrap(),
            ResolveResult::Undecodable(_)
        ));
        let table = gen_xlate(&private, NodeId(other)).unwrap();
        assert_eq!(table.to_local(Name::new(NodeId(mine - 2), 0)), None);
    }
}

#[test]
fn xlate_round_trips() {
    for spec in all_builtins() {
        for node in spec.nodes.iter().filter(|n| n.kind == NodeKind::Fixed) {
            let t = match gen_xlate(&spec, node.id) {
                Err(XlateError::DynamicOnPath(_)) => continue,
                other => other.unwrap(),
            };
            for (r, name) in &t.forward {
                for local in [r.base(), r.base() + r.size() / 2, r.end() - 1] {
                    let canon = t.to_canonical(local).unwrap();
                    assert_eq!(canon, name.offset(local - r.base()));
                    assert_eq!(t.to_local(canon), Some(local));
                }
            }
        }
    }
}

#[test]
fn xlate_rejects_dynamic_paths() {
    let spec = xeon_phi();
    assert_eq!(gen_xlate(&spec, NodeId(4)), Err(XlateError::DynamicOnPath(NodeId(4))));
    let pcie = pcie_scale(1).unwrap();
    assert_eq!(gen_xlate(&pcie, NodeId(4)), Err(XlateError::DynamicOnPath(NodeId(5))));
    assert_eq!(gen_xlate(&spec, NodeId(99)), Err(XlateError::UnknownNode(NodeId(99))));
}

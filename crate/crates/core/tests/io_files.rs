use std::fs;

use gridforest::graph::{BranchId, NodeId};
use gridforest::io::{
    ieee33, load_network, load_scenario, save_json, save_network, BatchRow, DataError, RowStatus,
};
use gridforest::formation::VariantKind;
use gridforest::radiality::Formulation;
use gridforest::scenario::{generate_scenario, FaultCounts};

#[test]
fn network_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("feeder.json");
    let net = ieee33();
    save_network(&path, &net, "ieee33").unwrap();
    let back = load_network(&path).unwrap();
    assert_eq!(back.node_count(), 33);
    assert_eq!(back.branches(), net.branches());
    for (a, b) in back.nodes().iter().zip(net.nodes()) {
        assert_eq!((a.id, a.kind), (b.id, b.kind));
        assert!((a.p_demand - b.p_demand).abs() < 1e-9);
        assert!((a.v_max - b.v_max).abs() < 1e-12);
    }
}

#[test]
fn scenario_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    let net = ieee33();
    let counts = FaultCounts { branch_faults: 6, load_switch_faults: 3 };
    let s = generate_scenario(&net, 99, counts, 0.5).unwrap();
    save_json(&path, &s).unwrap();
    assert_eq!(load_scenario(&path).unwrap(), s);
}

#[test]
fn scenario_with_unknown_key_is_located() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, "{\n  \"seed\": 1,\n  \"L_o\": [3],\n  \"L_x\": []\n}\n").unwrap();
    match load_scenario(&path) {
        Err(DataError::Schema { line, .. }) => assert_eq!(line, 4),
        other => panic!("expected a schema error, got {other:?}"),
    }
}

#[test]
fn missing_file_reports_path() {
    let err = load_network("/nonexistent/feeder.json").unwrap_err();
    assert!(matches!(err, DataError::Io { .. }));
    assert!(err.to_string().contains("/nonexistent/feeder.json"));
}

#[test]
fn batch_csv_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("batch.csv");
    let rows = vec![
        BatchRow {
            scenario: 0,
            seed: 42,
            variant: VariantKind::Proposed,
            radiality: Formulation::Scf,
            status: RowStatus::Optimal,
            objective: Some(1234.5),
            restored_kw: Some(1200.0),
            utilization: Some(0.875),
            nodes_explored: Some(17),
            wall_ms: 3.25,
            error: None,
        },
        BatchRow {
            scenario: 0,
            seed: 42,
            variant: VariantKind::RadialBaseline,
            radiality: Formulation::Scf,
            status: RowStatus::Infeasible,
            objective: None,
            restored_kw: None,
            utilization: None,
            nodes_explored: Some(0),
            wall_ms: 1.0,
            error: None,
        },
    ];
    BatchRow::save_all(&path, &rows).unwrap();
    assert_eq!(BatchRow::load_all(&path).unwrap(), rows);
}

#[test]
fn shipped_feeder_ids() {
    let net = ieee33();
    assert_eq!(net.node_index(NodeId(1)), Some(0));
    assert!(net.branch_index(BranchId(37)).is_some());
    assert!(net.branch_index(BranchId(38)).is_none());
}

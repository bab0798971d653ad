//! The JSON files under `data/` are the serialized builder outputs.
//! Set `HILBERT_CTL_WRITE_DATA=1` to regenerate them.

use std::path::PathBuf;

use hilbert_ctl::hilbert::{HVector, OperatorExpr, Space};
use hilbert_ctl::hinf::hinf_norm;
use hilbert_ctl::io::{load_json, load_system, SystemFile};
use hilbert_ctl::riccati::{ControlledSystemSpec, CostSpec};
use hilbert_ctl::scenarios::{ex3_deterministic, ex3_system, ex4_system, ex4_x0, EX3_NORM};
use nalgebra::DMatrix;

const DATA_DIM: usize = 16;

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn scalar_system() -> ControlledSystemSpec {
    let s = Space::euclidean(1);
    ControlledSystemSpec {
        horizon: 3,
        state_space: s.clone(),
        input_space: s.clone(),
        a: OperatorExpr::scaled(0.9, OperatorExpr::identity(s.clone())).into(),
        b: OperatorExpr::dense(s.clone(), s.clone(), DMatrix::from_element(1, 1, 0.5))
            .unwrap()
            .into(),
        c: OperatorExpr::scaled(0.3, OperatorExpr::identity(s.clone())).into(),
        d: OperatorExpr::scaled(0.2, OperatorExpr::identity(s)).into(),
    }
}

fn scalar_cost() -> CostSpec {
    let s = Space::euclidean(1);
    CostSpec {
        m: OperatorExpr::identity(s.clone()).into(),
        l: OperatorExpr::zero(s.clone(), s.clone()).into(),
        r: OperatorExpr::identity(s.clone()).into(),
        s: OperatorExpr::identity(s),
    }
}

fn expected() -> Vec<(&'static str, String)> {
    let pretty = |v: serde_json::Value| serde_json::to_string_pretty(&v).unwrap() + "\n";
    let sys = |f: SystemFile| pretty(serde_json::to_value(f).unwrap());
    vec![
        (
            "ex3_system.json",
            sys(SystemFile::Disturbed(ex3_system(DATA_DIM).unwrap())),
        ),
        (
            "ex3_deterministic.json",
            sys(SystemFile::Disturbed(ex3_deterministic(DATA_DIM).unwrap())),
        ),
        (
            "ex4_system.json",
            sys(SystemFile::TwoInput(ex4_system(DATA_DIM).unwrap())),
        ),
        (
            "ex4_x0.json",
            pretty(serde_json::to_value(ex4_x0(DATA_DIM).unwrap()).unwrap()),
        ),
        ("scalar_system.json", sys(SystemFile::Controlled(scalar_system()))),
        ("scalar_cost.json", pretty(serde_json::to_value(scalar_cost()).unwrap())),
        (
            "scalar_x0.json",
            pretty(serde_json::to_value(HVector::from_vec(Space::euclidean(1), vec![1.0]).unwrap()).unwrap()),
        ),
    ]
}

#[test]
fn data_files_match_builders() {
    let dir = data_dir();
    let write = std::env::var_os("HILBERT_CTL_WRITE_DATA").is_some();
    for (name, body) in expected() {
        let path = dir.join(name);
        if write {
            std::fs::write(&path, &body).unwrap();
        }
        let on_disk = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(on_disk, body, "{name} is stale");
    }
}

#[test]
fn data_files_load_and_solve() {
    let dir = data_dir();
    let SystemFile::Disturbed(sys) = load_system(&dir.join("ex3_system.json")).unwrap() else {
        panic!("ex3_system.json is not a disturbed system");
    };
    let n = hinf_norm(&sys, 0.0, None, 1e-8).unwrap();
    assert!((n.norm - EX3_NORM).abs() < 1e-6, "{}", n.norm);

    let x0: HVector = load_json(&dir.join("ex4_x0.json")).unwrap();
    assert_eq!(x0, ex4_x0(DATA_DIM).unwrap());
    let cost: CostSpec = load_json(&dir.join("scalar_cost.json")).unwrap();
    assert_eq!(cost, scalar_cost());
}

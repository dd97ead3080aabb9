//! Model registry and CSV artifact layout.

use std::collections::BTreeMap;
use std::sync::Arc;

use glued_core::hybrid::simulate_hybrid;
use glued_core::io::write_execution_csv;
use glued_core::models::{bouncing_ball, BallParams, ModelEntry, Registry};
use glued_core::{Error, SimParams, Vector, ZeroInput};

#[test]
fn builtin_registry_lists_three_models_in_id_order() {
    let reg = Registry::builtin();
    assert_eq!(reg.ids(), vec!["bouncing_ball", "reflected_di", "ripple"]);
    let listing = reg.listing();
    assert_eq!(listing.lines().count(), 3);
    assert!(listing.lines().next().unwrap().starts_with("bouncing_ball\t"));
}

#[test]
fn custom_models_can_be_registered() {
    let mut reg = Registry::builtin();
    reg.register(ModelEntry {
        id: "aa_custom".into(),
        description: "ball alias".into(),
        defaults: BTreeMap::new(),
        factory: Arc::new(|_| bouncing_ball(BallParams::default())),
    });
    assert_eq!(reg.ids().len(), 4);
    assert_eq!(reg.ids()[0], "aa_custom");
    assert!(reg.build("aa_custom", &BTreeMap::new()).is_ok());
}

#[test]
fn empty_registry_lists_nothing() {
    let reg = Registry::empty();
    assert_eq!(reg.listing(), "");
    assert!(reg.build("bouncing_ball", &BTreeMap::new()).is_err());
}

#[test]
fn unknown_and_bad_overrides_are_rejected() {
    let reg = Registry::builtin();
    let bogus = BTreeMap::from([("nonsense".to_string(), 1.0)]);
    assert!(matches!(reg.build("bouncing_ball", &bogus), Err(Error::InvalidParameter(_))));
    assert!(matches!(reg.build("ripple", &bogus), Err(Error::InvalidParameter(_))));
    let defaults = reg.get("bouncing_ball").unwrap().defaults.clone();
    let mut negative = BTreeMap::new();
    for k in defaults.keys().filter(|k| k.as_str() == "rho") {
        negative.insert(k.clone(), -1.0);
    }
    assert!(!negative.is_empty(), "ball exposes its gravity");
    assert!(reg.build("bouncing_ball", &negative).is_err());
}

#[test]
fn execution_csv_has_pre_and_post_rows() {
    let sys = bouncing_ball::hybrid_system(1.0);
    let exec = simulate_hybrid(&sys, &Vector::from_vec(vec![2.0, -3.0]), &ZeroInput(0), &SimParams::with_horizon(1.0)).unwrap();
    let mut buf = Vec::new();
    write_execution_csv(&exec, &mut buf).unwrap();
    let mut rdr = csv::Reader::from_reader(buf.as_slice());
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["t", "interval_index", "event", "x_1", "x_2"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    let pre = rows.iter().position(|r| &r[2] == "pre").unwrap();
    assert_eq!(&rows[pre + 1][2], "post");
    assert_eq!(rows[pre][0], rows[pre + 1][0]);
    let idx = |r: &csv::StringRecord| r[1].parse::<usize>().unwrap();
    assert_eq!(idx(&rows[pre]) + 1, idx(&rows[pre + 1]));
    let v: f64 = rows[pre + 1][4].parse().unwrap();
    assert!((v - 13f64.sqrt()).abs() < 1e-8);
}

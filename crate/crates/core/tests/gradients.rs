use cmfdnet::selfcheck::gradients::{self, TOLERANCE};

fn run(name: &str) {
    let (_, case, opts) = gradients::all().into_iter().find(|c| c.0 == name).unwrap();
    let r = case(opts).unwrap();
    assert!(r.probes > 0);
    assert!(r.max_rel_error < TOLERANCE, "{name}: {r:?}");
}

#[test]
fn gab() {
    run("gab");
}

#[test]
fn cbam() {
    run("cbam");
}

#[test]
fn msa() {
    run("msa");
}

#[test]
fn cmd() {
    run("cmd");
}

#[test]
fn fd() {
    run("fd");
}

#[test]
fn vss_scan_block() {
    run("vss_scan_block");
}

#[test]
fn encoder() {
    run("encoder");
}

#[test]
fn seg_loss() {
    run("seg_loss");
}

use revlab::normal_form::{FlowSettings, ResonantParams};
use revlab::orbits::{find_symmetric_periodic, g_pair, SymmetrySearchWindow, CLASSIFY_TOL};
use revlab::system::{nf_map, twist_std, InvolutionId};

fn q5() -> revlab::ReversibleSystem {
    let params = ResonantParams::new(1, 5, -0.01, vec![1.0], 1.0, 0.0, 0.0).unwrap();
    nf_map(params, FlowSettings::default())
}

#[test]
fn nf_map_period_five_pair_on_fix_g() {
    let sys = q5();
    let mut w = SymmetrySearchWindow::new(InvolutionId::G, InvolutionId::FG, -0.3, 0.3, 3);
    w.scan_points = 401;
    assert_eq!(w.implied_period(), 5);
    let found = find_symmetric_periodic(&sys, &w).unwrap();
    let five: Vec<_> = found.orbits.iter().filter(|o| o.period == 5).collect();
    let saddle = five.iter().find(|o| o.classification.label() == "saddle").expect("saddle");
    let elliptic = five.iter().find(|o| o.classification.label() == "elliptic").expect("elliptic");
    assert!((saddle.points[0].x - 0.0953).abs() < 2e-3, "{:?}", saddle.points[0]);
    assert!((elliptic.points[0].x + 0.1054).abs() < 2e-3, "{:?}", elliptic.points[0]);
    for o in &five {
        let det = o.monodromy.det();
        assert!((det - 1.0).abs() < 1e-6, "det {det}");
        let prod = o.multipliers.0 * o.multipliers.1;
        assert!((prod - 1.0).norm() < 1e-6);
    }
}

#[test]
fn g_image_of_symmetric_orbit_is_itself() {
    let sys = twist_std(0.0, 0.03, 0.23126539843367555).unwrap();
    let w = SymmetrySearchWindow::new(InvolutionId::G, InvolutionId::G, -1.0, 1.5, 1);
    let found = find_symmetric_periodic(&sys, &w).unwrap();
    assert!(!found.orbits.is_empty());
    for o in &found.orbits {
        let img = g_pair(&sys, o, 1e-8, CLASSIFY_TOL).unwrap();
        assert_eq!(img.classification.label(), o.classification.label());
        assert!((img.multipliers.0 * o.multipliers.0 - 1.0).norm() < 1e-6 || (img.multipliers.0 - o.multipliers.0).norm() < 1e-6);
    }
}

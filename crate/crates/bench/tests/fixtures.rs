use armlab::rne::{mass_matrix, rnefda, rneida};
use armlab::SpatialLoad;
use armlab_bench::{rod_chain, spread_state, Fixture};
use nalgebra::DVector;

#[test]
fn rod_chains_are_well_posed() {
    for n in [2, 6, 12, 24] {
        let model = rod_chain(n);
        assert_eq!(model.dof(), n);
        let s = spread_state(n);
        let m = mass_matrix(&model, &s.q).unwrap();
        assert!(m.clone().cholesky().is_some(), "M not SPD for n = {n}");
        let tau = DVector::from_element(n, 0.1);
        let qdd = rnefda(&model, &s.q, &s.qd, &tau, &SpatialLoad::zero()).unwrap();
        let back = rneida(&model, &s.q, &s.qd, &qdd, &SpatialLoad::zero()).unwrap();
        assert!((back - tau).amax() < 1e-8);
    }
}

#[test]
fn ur5_fixture_matches_dimensions() {
    let f = Fixture::ur5();
    let (r, rd) = f.reference(0.5);
    assert_eq!(r.len(), f.model.dof());
    assert_eq!(rd.len(), f.model.dof());
    assert_eq!(f.state.q.len(), 6);
}

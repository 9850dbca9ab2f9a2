mod common;

use std::sync::Arc;

use gibbs_surfaces::potential::{convex_interpolation, epsilon};
use gibbs_surfaces::tilings::{enumerate_tilings, matching_to_height, SquareRegion};
use gibbs_surfaces::wedge::{wedge_normalize, GridSpec};
use gibbs_surfaces::{Dir, EdgePotential, Energy, Graph, HeightConfig, PeriodicPotential, Site, ValueDomain};

fn discrete_square() -> PeriodicPotential {
    PeriodicPotential::isotropic(ValueDomain::DiscreteInteger, EdgePotential::Quadratic { coefficient: 1.0 })
}

#[test]
fn epsilon_cycles_around_the_unit_square() {
    assert_eq!(epsilon(Site::new(0, 0)), 0);
    assert_eq!(epsilon(Site::new(0, 1)), 1);
    assert_eq!(epsilon(Site::new(1, 1)), 2);
    assert_eq!(epsilon(Site::new(1, 0)), 3);
    assert_eq!(epsilon(Site::new(-2, 7)), 1);
}

#[test]
fn domino_edge_energy_matches_height_rule() {
    let d = PeriodicPotential::domino();
    assert_eq!(d.edge_energy(Site::new(0, 0), Dir::E2, -1.0), Energy::ZERO);
    assert_eq!(d.edge_energy(Site::new(0, 0), Dir::E2, 1.0), Energy::Infinite);
    // finite exactly when 4η + Δε is ±1 or ±3
    for x in -3..3 {
        for y in -3..3 {
            let s = Site::new(x, y);
            for dir in Dir::ALL {
                let de = epsilon(s.step(dir)) - epsilon(s);
                for eta in -4i64..=4 {
                    let jump = (4 * eta + de).abs();
                    let expect = jump == 1 || jump == 3;
                    assert_eq!(d.edge_energy(s, dir, eta as f64).is_finite(), expect, "{s} {dir:?} {eta}");
                }
            }
        }
    }
}

#[test]
fn sos_abs_at_zero() {
    assert_eq!(PeriodicPotential::sos_abs().edge_energy(Site::new(4, -1), Dir::E1, 0.0), Energy::ZERO);
    assert_eq!(PeriodicPotential::sos_abs().edge_energy(Site::new(4, -1), Dir::E1, -3.0), Energy::Finite(3.0));
}

#[test]
fn hamiltonian_of_short_path() {
    let g = Arc::new(Graph::path(3));
    let c = HeightConfig::new(g, vec![0i64, 1, 3]).unwrap();
    assert_eq!(PeriodicPotential::sos_abs().hamiltonian_interior(&c, None).unwrap(), Energy::Finite(3.0));
    let sub = [Site::new(0, 0), Site::new(1, 0)];
    assert_eq!(PeriodicPotential::sos_abs().hamiltonian_interior(&c, Some(&sub)).unwrap(), Energy::Finite(1.0));
}

#[test]
fn domino_tilings_have_zero_energy() {
    let d = PeriodicPotential::domino();
    for t in enumerate_tilings(&SquareRegion::rectangle(4, 4)).unwrap() {
        let h = matching_to_height(&t).unwrap();
        assert_eq!(d.hamiltonian_interior(&h, None).unwrap(), Energy::ZERO);
    }
    // φ ≡ 0 respects the ε pattern; raising one corner breaks it
    let g = Arc::new(Graph::rectangle(3, 3));
    let flat = HeightConfig::constant(g.clone(), 0i64);
    assert_eq!(d.hamiltonian_interior(&flat, None).unwrap(), Energy::ZERO);
    let bumped = HeightConfig::from_fn(g, |s| i64::from(s == Site::new(1, 0)));
    assert_eq!(d.hamiltonian_interior(&bumped, None).unwrap(), Energy::Infinite);
}

#[test]
fn sap_validation() {
    let r = PeriodicPotential::domino().validate_sap();
    assert!(r.valid() && r.lipschitz && !r.isotropic);
    let r = discrete_square().validate_sap();
    assert!(r.valid() && !r.lipschitz && r.isotropic);
    let r = PeriodicPotential::gaussian(1.0).validate_sap();
    assert!(r.valid() && !r.lipschitz);
    let r = PeriodicPotential::tabulated(-1, vec![1.0, 0.0, 0.0]).validate_sap();
    assert!(r.valid());
    let r = PeriodicPotential::tabulated(-1, vec![0.0, 1.0, 0.0]).validate_sap();
    assert!(!r.valid());
}

#[test]
fn lipschitz_truncation() {
    let t = PeriodicPotential::sos_abs().lipschitz_truncate(2.0).unwrap();
    for j in -4i64..=4 {
        let e = t.edge_energy(Site::new(0, 0), Dir::E1, j as f64);
        if j.abs() <= 2 {
            assert_eq!(e, Energy::Finite(j.abs() as f64));
        } else {
            assert_eq!(e, Energy::Infinite);
        }
    }
    let d = PeriodicPotential::domino();
    let dt = d.lipschitz_truncate(0.0).unwrap();
    for x in 0..2 {
        for y in 0..2 {
            for dir in Dir::ALL {
                for j in -3..=3 {
                    let s = Site::new(x, y);
                    assert_eq!(dt.edge_energy(s, dir, j as f64), d.edge_energy(s, dir, j as f64));
                }
            }
        }
    }
    let q = discrete_square().lipschitz_truncate(0.5).unwrap();
    assert_eq!(q.edge_support(Site::new(0, 0), Dir::E2), (0.0, 0.0));
    assert!(q.is_lipschitz());
    assert!(PeriodicPotential::gaussian(1.0).lipschitz_truncate(1.0).is_err());
}

#[test]
fn wedge_values_at_centre_and_one() {
    let q = wedge_normalize(&EdgePotential::Quadratic { coefficient: 1.0 }, GridSpec { lo: -2.0, hi: 2.0, points: 9 }).unwrap();
    let log2 = 2f64.ln();
    assert!((q.values[4] + log2).abs() < 1e-9);
    // e^{-η²}/√π has upper tail erfc(η)/2, so V̄(1) = 1 − log(2 erfc 1)
    let oracle = 1.0 - (2.0 * statrs::function::erf::erfc(1.0)).ln();
    assert!((q.values[6] - oracle).abs() < 1e-8, "{} vs {oracle}", q.values[6]);
    assert!(q.values[6] >= 1.0 - log2);
    let a = wedge_normalize(&EdgePotential::abs(), GridSpec { lo: -1.0, hi: 1.0, points: 3 }).unwrap();
    assert!((a.values[1] + log2).abs() < 1e-9);
    assert!(a.values[2] >= 1.0 - log2);
}

#[test]
fn convex_interpolations() {
    let tent = convex_interpolation(&EdgePotential::tabulate(-1, 1, |j| j.abs() as f64));
    assert_eq!(tent.eval(0.5), Energy::Finite(0.5));
    assert_eq!(tent.eval(-0.25), Energy::Finite(0.25));
    assert_eq!(tent.eval(1.5), Energy::Infinite);
    let abs = convex_interpolation(&EdgePotential::abs());
    for k in -20..=20 {
        let x = k as f64 / 4.0;
        assert!((abs.eval(x).to_f64() - x.abs()).abs() < 1e-12);
    }
    let sq = convex_interpolation(&EdgePotential::Quadratic { coefficient: 1.0 });
    for j in -5i64..5 {
        for t in [0.0, 0.25, 0.5, 0.75] {
            let x = j as f64 + t;
            let expect = (j * j) as f64 + (2 * j + 1) as f64 * t;
            assert!((sq.eval(x).to_f64() - expect).abs() < 1e-9, "{x}");
        }
    }
}

#[test]
fn toml_round_trip_and_spec_presets() {
    for p in [PeriodicPotential::domino(), PeriodicPotential::sos_abs(), PeriodicPotential::tabulated(-2, vec![3.0, 1.0, 0.0, 1.0, 3.0])] {
        let back = PeriodicPotential::from_toml(&p.to_toml()).unwrap();
        assert_eq!(back.digest(), p.digest());
    }
    assert_eq!(PeriodicPotential::from_spec("domino").unwrap().digest(), PeriodicPotential::domino().digest());
    assert!(PeriodicPotential::from_toml("this is = = not toml").is_err());
}

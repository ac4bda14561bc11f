//! Capacities, systoles and spectral values known in closed form.
use std::f64::consts::PI;

use zollab_core::capacities::{
    ech_capacities_ellipsoid, ech_capacities_polydisk, ehgh_capacity, polydisk_ehgh, polydisk_k_bounds, viterbo_check,
    Exact, Rational,
};
use zollab_core::domains::{ellipsoid_amplitude, ContactAmplitude, Domain, Ellipsoid, Polydisk};
use zollab_core::reeb::{systole, SystoleSearch};
use zollab_core::spectral::{spectral_c0_c1_exact, NEAR_ZOLL};

fn int(n: i64) -> Exact {
    Exact::int(n)
}

#[test]
fn third_capacities_distinguish_e12_from_p11() {
    let e = Ellipsoid::new(vec![int(1), int(2)]).unwrap();
    assert_eq!(ehgh_capacity(&e, 3).unwrap(), int(2));
    assert_eq!(polydisk_ehgh(&Polydisk::new(int(1), int(1)).unwrap(), 3).unwrap(), int(3));
    assert_eq!(polydisk_k_bounds(2).unwrap(), (int(2), int(2)));
    assert_eq!(polydisk_k_bounds(3).unwrap(), (int(2), int(3)));
}

#[test]
fn normalization_and_second_capacity() {
    let ball = Ellipsoid::new(vec![Exact::pi(), Exact::pi()]).unwrap();
    assert_eq!(ehgh_capacity(&ball, 1).unwrap(), Exact::pi());
    let e = Ellipsoid::new(vec![Exact::pi(), Exact::new(Rational::new(1, 2), 1)]).unwrap();
    assert_eq!(ehgh_capacity(&e, 2).unwrap(), Exact::pi());
}

#[test]
fn ech_of_p11_and_e12_coincide() {
    let p = ech_capacities_polydisk(int(1), int(1), 100).unwrap();
    let e = ech_capacities_ellipsoid(int(1), int(2), 100).unwrap();
    assert_eq!(p.values, e.values);
}

#[test]
fn viterbo_is_sharp_on_the_ball() {
    let ball = Domain::Ellipsoid(Ellipsoid::new(vec![Exact::pi(), Exact::pi()]).unwrap());
    let r = viterbo_check(&ball, PI).unwrap();
    assert!(r.holds);
    assert!(r.equality_gap.abs() < 1e-12);
    assert!((r.lhs - PI * PI).abs() < 1e-12);
}

#[test]
fn ellipsoid_forms_have_orbits_of_periods_a_and_b() {
    let rep = systole(&ellipsoid_amplitude(1.0, 2.0).unwrap(), &SystoleSearch::default()).unwrap();
    let mut periods: Vec<f64> = rep.orbit_certificates.iter().map(|c| c.period).collect();
    periods.sort_by(f64::total_cmp);
    assert_eq!(periods, [1.0, 2.0]);
    assert_eq!(rep.systole, 1.0);
}

#[test]
fn zoll_spectral_values() {
    assert_eq!(spectral_c0_c1_exact(&Exact::pi(), &Exact::pi(), NEAR_ZOLL).unwrap(), (Exact::pi(), Exact::pi()));
    let rep = systole(&ContactAmplitude::round(), &SystoleSearch::default()).unwrap();
    assert!((rep.systole - PI).abs() < 1e-12);
    assert!((rep.ratio - 1.0).abs() < 1e-12);
}

use nalgebra::Vector3;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use proptest::prelude::*;
use webhaptics::haptics::HapticDeviceConfig;
use webhaptics::hydraulics::{
    haptic_resistance, lift_step, pressure, transmit_force, HydraulicSystem, HydraulicsError,
    STANDARD_GRAVITY,
};

fn exact(v: f64) -> BigRational {
    BigRational::from_float(v).unwrap()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn module_examples() {
    assert_eq!(pressure(10.0, 0.001).unwrap(), 10.0 / 0.001);
    assert!(close(pressure(10.0, 0.001).unwrap(), 10_000.0));
    let machine = HydraulicSystem::new(0.001, 0.01).unwrap();
    assert!(close(transmit_force(&machine, 10.0), 100.0));
    let lifted = lift_step(&machine, 0.1).unwrap();
    assert!(close(lifted.piston_out_pos, 0.01));
    assert!(lifted.volume_imbalance().abs() <= 1e-12);
    assert!(matches!(
        HydraulicSystem::new(0.0, 1.0),
        Err(HydraulicsError::NonPositiveArea(_))
    ));
    assert!(matches!(
        pressure(1.0, -1.0),
        Err(HydraulicsError::NonPositiveArea(_))
    ));
}

#[test]
fn resistance_clamped_by_device() {
    let sys = HydraulicSystem::new(0.001, 0.01).unwrap().with_load(100.0);
    let cfg = HapticDeviceConfig {
        max_force: 1.0,
        ..HapticDeviceConfig::default()
    };
    let push = Vector3::new(0.0, 0.0, -1.0);
    let r = haptic_resistance(&sys, STANDARD_GRAVITY, &push, &Vector3::zeros(), &cfg);
    assert!(close(r.required, 98.1));
    assert!(close(r.delivered.norm(), 1.0));
    assert!(r.delivered.dot(&push) < 0.0);
}

proptest! {
    #[test]
    fn pascal_rules_are_exact(
        f in 0.0f64..1e4,
        a_in in 1e-5f64..1.0,
        a_out in 1e-5f64..1.0,
        d in -0.05f64..0.05,
    ) {
        let sys = HydraulicSystem::new(a_in, a_out).unwrap();
        let (fr, ain, aout, dr) = (exact(f), exact(a_in), exact(a_out), exact(d));

        let p = pressure(f, a_in).unwrap();
        let p_exact = &fr / &ain;
        prop_assert!(close(p, p_exact.to_f64().unwrap()));

        let f_out = transmit_force(&sys, f);
        let f_out_exact = &fr * &aout / &ain;
        prop_assert!(close(f_out, f_out_exact.to_f64().unwrap()));
        // Equal pressure on both pistons.
        prop_assert_eq!(&f_out_exact / &aout, p_exact.clone());

        let d_out_exact = &dr * &ain / &aout;
        let d_out = sys.output_displacement(d);
        prop_assert!((d_out - d_out_exact.to_f64().unwrap()).abs() <= 1e-12);
        // A1 d1 = A2 d2 and F1 d1 = F2 d2, both exact in rationals.
        prop_assert_eq!(&ain * &dr, &aout * &d_out_exact);
        prop_assert_eq!(&fr * &dr, &f_out_exact * &d_out_exact);
        // And the floating-point work matches to rounding.
        prop_assert!((f * d - f_out * d_out).abs() <= 1e-12 * (f * d).abs().max(1.0));

        let back = transmit_force(&HydraulicSystem::new(a_out, a_in).unwrap(), f_out);
        prop_assert!(close(back, f));
    }

    #[test]
    fn lifting_keeps_volume(
        a_in in 1e-4f64..0.1,
        ratio in 1.0f64..50.0,
        steps in proptest::collection::vec(-0.02f64..0.02, 0..40),
    ) {
        let mut sys = HydraulicSystem::new(a_in, a_in * ratio).unwrap();
        let mut total = 0.0;
        for d in steps {
            match lift_step(&sys, d) {
                Ok(next) => {
                    total += d;
                    sys = next;
                }
                Err(HydraulicsError::StrokeLimitExceeded { piston_in, .. }) => {
                    prop_assert!(piston_in.abs() > sys.stroke_limit);
                }
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            }
            prop_assert!(sys.volume_imbalance().abs() <= 1e-12);
            prop_assert!(sys.piston_in_pos.abs() <= sys.stroke_limit);
            prop_assert!(sys.piston_out_pos.abs() <= sys.stroke_limit);
        }
        prop_assert!((sys.piston_in_pos - total).abs() <= 1e-12);
        let one_shot = lift_step(&HydraulicSystem::new(a_in, a_in * ratio).unwrap(), sys.piston_in_pos).unwrap();
        prop_assert!((one_shot.piston_out_pos - sys.piston_out_pos).abs() <= 1e-12);
    }

    #[test]
    fn resistance_is_bounded_and_opposes_push(
        mass in 0.0f64..500.0,
        a_in in 1e-4f64..0.1,
        a_out in 1e-4f64..0.1,
        push in [-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0],
        max_force in 0.1f64..10.0,
    ) {
        let push = Vector3::from(push);
        prop_assume!(push.norm() > 1e-3);
        let sys = HydraulicSystem::new(a_in, a_out).unwrap().with_load(mass);
        let cfg = HapticDeviceConfig { max_force, ..HapticDeviceConfig::default() };
        let r = haptic_resistance(&sys, STANDARD_GRAVITY, &push, &Vector3::zeros(), &cfg);
        prop_assert!(close(r.required, mass * STANDARD_GRAVITY * a_in / a_out));
        prop_assert!(r.delivered.norm() <= max_force);
        prop_assert!(close(r.delivered.norm(), r.required.min(max_force)));
        if r.required > 0.0 {
            prop_assert!((r.delivered.normalize() + push.normalize()).norm() < 1e-12);
        }
    }
}

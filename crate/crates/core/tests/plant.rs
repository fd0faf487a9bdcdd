use g2p_core::limb::{step, LimbParams};
use g2p_core::plant::{CONTROL_PERIOD, PHYSICS_DT, SUBSTEPS};
use g2p_core::{default_limb_params, ActivationVector, LimbId, Plant, PlantCommand};
use proptest::prelude::*;

fn activations() -> impl Strategy<Value = [[f64; 3]; 4]> {
    prop::array::uniform4(prop::array::uniform3(0.0f64..=1.0))
}

fn quiet_plant() -> Plant {
    Plant::new(default_limb_params(), 1, 0.0).unwrap()
}

#[test]
fn one_tick_is_ten_physics_substeps() {
    let mut plant = quiet_plant();
    let a = [0.8, 0.1, 0.5];
    let cmd = PlantCommand::new([a; 4]);
    let params: LimbParams = default_limb_params();
    let mut s = plant.world_state(LimbId::FL);
    for _ in 0..7 {
        plant.apply(&cmd, 1).unwrap();
        for _ in 0..SUBSTEPS {
            s = step(&params, &s, &ActivationVector::new(a), PHYSICS_DT).unwrap();
        }
        assert_eq!(plant.world_state(LimbId::FL), s);
    }
    assert_eq!(SUBSTEPS as f64 * PHYSICS_DT, CONTROL_PERIOD);
}

#[test]
fn observation_noise_has_configured_spread() {
    let mut errs = Vec::new();
    for seed in 0..400 {
        let mut p = Plant::new(default_limb_params(), seed, 0.002).unwrap();
        let obs = p.apply(&PlantCommand::new([[0.5; 3]; 4]), 1).unwrap().pop().unwrap();
        for id in LimbId::ALL {
            let truth = p.local_state(id).q;
            errs.push(obs.limbs[id.index()].q[0] - truth[0]);
            errs.push(obs.limbs[id.index()].q[1] - truth[1]);
        }
    }
    let n = errs.len() as f64;
    let mean = errs.iter().sum::<f64>() / n;
    let sd = (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!(mean.abs() < 2e-4, "{mean}");
    assert!((sd - 0.002).abs() < 2e-4, "{sd}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn front_and_hind_limbs_mirror_exactly(seq in prop::collection::vec(prop::array::uniform3(0.0f64..=1.0), 1..20)) {
        let mut plant = quiet_plant();
        for a in seq {
            let obs = plant.apply(&PlantCommand::new([a; 4]), 3).unwrap();
            for o in obs {
                prop_assert_eq!(o.limbs[0], o.limbs[2]);
                prop_assert_eq!(o.limbs[1], o.limbs[3]);
            }
            prop_assert_eq!(plant.world_state(LimbId::HL).q, -plant.world_state(LimbId::FL).q);
        }
    }

    #[test]
    fn limbs_do_not_influence_each_other(
        base in prop::collection::vec(activations(), 1..15),
        other in prop::collection::vec(activations(), 15),
        limb in 0usize..4,
    ) {
        let mut a = Plant::new(default_limb_params(), 3, 0.002).unwrap();
        let mut b = Plant::new(default_limb_params(), 3, 0.002).unwrap();
        for (cmd, alt) in base.iter().zip(&other) {
            let mut changed = *alt;
            changed[limb] = cmd[limb];
            let oa = a.apply(&PlantCommand::new(*cmd), 2).unwrap();
            let ob = b.apply(&PlantCommand::new(changed), 2).unwrap();
            for (x, y) in oa.iter().zip(&ob) {
                prop_assert_eq!(x.limbs[limb], y.limbs[limb]);
            }
        }
    }

    #[test]
    fn observed_angles_stay_within_limits(seq in prop::collection::vec(activations(), 1..30)) {
        let params = default_limb_params();
        let mut plant = quiet_plant();
        for (i, cmd) in seq.iter().enumerate() {
            let obs = plant.apply(&PlantCommand::new(*cmd), 5).unwrap();
            for (k, o) in obs.iter().enumerate() {
                prop_assert_eq!(o.time, (5 * i + k + 1) as f64 * CONTROL_PERIOD);
                for s in &o.limbs {
                    prop_assert!(params.within_limits(&s.q), "{:?}", s.q);
                }
            }
        }
    }
}

use exposim_core::bench::{
    ground_truth, local_errors, run_recorded, stability_search, ContactParams, Scenario,
};
use exposim_core::integrators::IntegratorKind;
use exposim_core::PadePolicy;

fn main() {
    let scn = Scenario::builtin("box-drop").unwrap();

    // Criterion 4 ingredients.
    for (integ, dt) in [
        (IntegratorKind::Expo, 0.010),
        (IntegratorKind::EulerExplicit, 0.010),
        (IntegratorKind::EulerImplicit, 0.010),
        (IntegratorKind::EulerExplicit, 0.005),
        (IntegratorKind::EulerExplicit, 0.0025),
        (IntegratorKind::EulerExplicit, 0.00125),
    ] {
        let out = run_recorded(&scn, integ, PadePolicy::Full, dt).unwrap();
        let vmax = out.ticks.iter().map(|r| r.state.v.amax()).fold(0.0_f64, f64::max);
        println!("{integ} dt={dt}: div={:?} vmax={:.2}", out.diverged_at, vmax);
    }
    let grid: Vec<f64> = (0..9).map(|k| 0.010 / 2f64.powi(k)).collect();
    let ms = stability_search(&scn, IntegratorKind::EulerExplicit, PadePolicy::Full, &grid);
    println!("euler-exp max stable: {:?}", ms.map(|o| o.map(|d| d * 1e3)));

    // Criterion 5 ingredients.
    for k in [1e4, 1e5, 1e6, 1e7, 1e8] {
        let params = ContactParams::from_damping_ratio(k, 0.5, 1.0);
        let s_k = scn.clone().with_contact(params);
        let gt = ground_truth(&s_k, IntegratorKind::Expo, PadePolicy::Full).unwrap();
        let e = local_errors(&s_k, &gt, IntegratorKind::Expo, PadePolicy::Full, 0.002).unwrap();
        let mean = e.iter().sum::<f64>() / e.len() as f64;
        let gt2 = ground_truth(&s_k, IntegratorKind::EulerExplicit, PadePolicy::Full);
        let (emean, emax) = match gt2 {
            Ok(g) => {
                let ee = local_errors(&s_k, &g, IntegratorKind::EulerExplicit, PadePolicy::Full, 0.0005).unwrap();
                (ee.iter().sum::<f64>() / ee.len() as f64, ee.iter().cloned().fold(0.0_f64, f64::max))
            }
            Err(err) => {
                println!("  euler GT failed for K={k}: {err}");
                (f64::NAN, f64::NAN)
            }
        };
        println!("K={k:.0e}: expo mean={mean:.3e} | euler-exp dt=0.5ms mean={emean:.3e} max={emax:.3e}");
    }
}

use biot_dd::assembly::{Material, MaterialField};
use biot_dd::global::GlobalProblem;
use biot_dd::mesh::{build_grid, partition, BoundaryConditions, Perturbation};
use biot_dd::schemes::{Scheme, SchemeKind, SolverSettings};
use biot_dd::subdomain::Discretization;
use biot_dd::verify::ManufacturedCase;

fn setup(n: usize, p: usize, c0: f64) -> (Discretization, ManufacturedCase) {
    let case = ManufacturedCase::example1(c0);
    let mesh = build_grid(n, n, Some(&Perturbation::new(0.1, 3))).unwrap();
    let d = partition(&mesh, p, p, BoundaryConditions::all_dirichlet()).unwrap();
    let mat = MaterialField::Uniform(Material::isotropic(
        case.lambda,
        case.mu,
        case.permeability,
        case.storativity,
        case.alpha,
    ));
    (Discretization::new(mesh, d, &mat).unwrap(), case)
}

fn max_relative_difference(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

#[test]
fn monolithic_matches_global_backward_euler() {
    let (disc, case) = setup(4, 2, 1.0);
    let dt = 1e-2;
    let global = GlobalProblem::new(&disc.mesh, BoundaryConditions::all_dirichlet(), &disc.material).unwrap();
    let reference = global.backward_euler(&case, dt, 3).unwrap();
    let scheme = Scheme::new(SchemeKind::Monolithic, &disc, &case, dt, SolverSettings::default()).unwrap();
    let mut worst: f64 = 0.0;
    scheme
        .run(3, |state, _| {
            let r = &reference[state.step];
            for (sub, f) in disc.subdomains.iter().zip(&state.fields) {
                let g = global.restrict(sub, r);
                worst = worst.max(max_relative_difference(&f.to_full(), &g.to_full()));
            }
            Ok(())
        })
        .unwrap();
    assert!(worst < 1e-8, "max relative difference {worst}");
}

#[test]
fn split_schemes_track_monolithic_pressure() {
    let (disc, case) = setup(8, 2, 1.0);
    let dt = 1e-3;
    let run = |kind| {
        let s = Scheme::new(kind, &disc, &case, dt, SolverSettings::default()).unwrap();
        s.run(10, |_, _| Ok(())).unwrap().0
    };
    let mono = run(SchemeKind::Monolithic);
    for kind in [SchemeKind::Ds, SchemeKind::Fs] {
        let split = run(kind);
        for (a, b) in split.fields.iter().zip(&mono.fields) {
            let d = max_relative_difference(&a.p, &b.p);
            assert!(d <= 10.0 * dt, "{kind}: {d}");
        }
    }
}

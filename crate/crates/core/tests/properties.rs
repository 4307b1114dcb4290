use std::path::Path;

use proptest::prelude::*;

use biot_dd::ingest::{young_modulus, CellField};
use biot_dd::mesh::{build_grid, partition, BoundaryConditions, Perturbation};
use biot_dd::verify::rates;

fn grid_case() -> impl Strategy<Value = (usize, usize, usize, usize, f64, u64)> {
    (1usize..=4, 1usize..=4, 1usize..=4, 1usize..=4, 0.0f64..0.3, any::<u64>())
        .prop_map(|(px, py, a, b, frac, seed)| (px, py, px * a, py * b, frac, seed))
}

fn perturbation(frac: f64, seed: u64, px: usize, py: usize) -> Perturbation {
    Perturbation {
        layout: (px, py),
        ..Perturbation::new(frac, seed)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn partition_covers_every_cell_once((px, py, nx, ny, frac, seed) in grid_case()) {
        let mesh = build_grid(nx, ny, Some(&perturbation(frac, seed, px, py))).unwrap();
        let d = partition(&mesh, px, py, BoundaryConditions::all_dirichlet()).unwrap();
        let mut owner = vec![usize::MAX; mesh.n_cells()];
        let mut total = 0;
        for s in 0..d.n_subdomains() {
            let cells = d.cells_of(&mesh, s);
            total += cells.len();
            for c in cells {
                prop_assert_eq!(owner[c], usize::MAX);
                owner[c] = s;
                prop_assert_eq!(d.subdomain_of_cell(c), s);
            }
        }
        prop_assert_eq!(total, mesh.n_cells());
    }

    #[test]
    fn interfaces_and_boundary_stay_on_grid_lines((px, py, nx, ny, frac, seed) in grid_case()) {
        let mesh = build_grid(nx, ny, Some(&perturbation(frac, seed, px, py))).unwrap();
        let d = partition(&mesh, px, py, BoundaryConditions::all_dirichlet()).unwrap();
        let on_line = |v: f64, parts: usize| {
            let k = (v * parts as f64).round();
            (v - k / parts as f64).abs() < 1e-14
        };
        for ie in d.interface_edges() {
            let [a, b] = mesh.edge_coords(ie.edge);
            let vertical = (a[0] - b[0]).abs() < 1e-14;
            if vertical {
                prop_assert!(on_line(a[0], px) && on_line(b[0], px));
            } else {
                prop_assert!(on_line(a[1], py) && on_line(b[1], py));
            }
            prop_assert!(ie.lower < ie.upper);
        }
        for v in mesh.vertices() {
            let boundary = v[0] == 0.0 || v[0] == 1.0 || v[1] == 0.0 || v[1] == 1.0;
            let inside = v[0] > 0.0 && v[0] < 1.0 && v[1] > 0.0 && v[1] < 1.0;
            prop_assert!(boundary || inside);
        }
        for c in 0..mesh.n_cells() {
            prop_assert!(mesh.corner_jacobians(c).iter().all(|&j| j > 0.0));
        }
    }

    #[test]
    fn same_seed_same_coordinates((px, py, nx, ny, frac, seed) in grid_case()) {
        let p = perturbation(frac, seed, px, py);
        let a = build_grid(nx, ny, Some(&p)).unwrap();
        let b = build_grid(nx, ny, Some(&p)).unwrap();
        let bits = |m: &biot_dd::mesh::Mesh| -> Vec<u64> {
            m.vertices().iter().flat_map(|v| [v[0].to_bits(), v[1].to_bits()]).collect()
        };
        prop_assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn young_modulus_is_strictly_decreasing(a in 0.0f64..0.5, b in 0.0f64..0.5) {
        prop_assume!(a != b);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(young_modulus(lo).unwrap() > young_modulus(hi).unwrap());
    }

    #[test]
    fn field_text_round_trip_is_bit_identical(
        nx in 1usize..6,
        ny in 1usize..6,
        raw in prop::collection::vec(any::<u64>(), 36),
    ) {
        let values: Vec<f64> = raw[..nx * ny]
            .iter()
            .map(|&b| f64::from_bits(b))
            .map(|v| if v.is_finite() { v } else { 1.5 })
            .collect();
        let field = CellField::new(nx, ny, values).unwrap();
        let back = CellField::parse(&field.to_text(), Path::new("field.txt"), nx, ny).unwrap();
        let bits = |f: &CellField| f.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&field));
    }

    #[test]
    fn field_file_round_trip(seed in any::<u64>()) {
        use biot_dd::ingest::{generate_field, GeneratorSpec};
        let f = generate_field(&GeneratorSpec::new(6, 4, seed)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("perm.txt");
        f.permeability.save(&path).unwrap();
        let back = CellField::load(&path, 6, 4).unwrap();
        prop_assert_eq!(back, f.permeability);
    }
}

/// Rates recomputed from published error columns match the printed ones.
#[test]
fn rate_formula_matches_printed_rates() {
    let columns: [(&[f64], &[f64]); 4] = [
        (&[2.13e0, 1.13e0, 4.84e-1, 2.01e-1, 9.15e-2], &[0.92, 1.22, 1.27, 1.14]),
        (&[7.05e-2, 3.56e-2, 1.79e-2, 8.94e-3, 4.47e-3], &[0.98, 1.00, 1.00, 1.00]),
        (&[1.93e0, 1.05e0, 4.46e-1, 2.63e-1, 2.17e-1], &[0.88, 1.23, 0.76, 0.28]),
        (&[1.42e0, 8.38e-1, 5.83e-1, 4.87e-1, 4.56e-1], &[0.76, 0.52, 0.26, 0.09]),
    ];
    for (errors, printed) in columns {
        for (r, p) in rates(errors).into_iter().zip(printed) {
            let r = r.unwrap();
            assert!((r - p).abs() <= 0.01, "{r} vs {p}");
        }
    }
}

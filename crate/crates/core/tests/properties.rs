use aniso_hybrid::{
    build_apl_system, build_mesh, eoc, error_norms, ess_distance, setup_a, solve_model, split_at_interface,
    write_matrix_market, Domain, EpsProfile, ManufacturedProblem, ModelKind, SolutionField, SolveOptions,
    SparseMatrix,
};
use proptest::prelude::*;

fn problem(eps_min: f64) -> ManufacturedProblem {
    setup_a(Domain::preset_b(), EpsProfile::tanh(eps_min, 1.0, 30.0).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eoc_is_invariant_under_rescaling(
        slope in 0.2f64..3.0,
        c in 1e-3f64..1e3,
        s_err in 1e-4f64..1e4,
        s_h in 1e-3f64..1e3,
    ) {
        let pts: Vec<(f64, f64)> = [0.2, 0.1, 0.05, 0.025].iter().map(|&h: &f64| (h, c * h.powf(slope))).collect();
        let base = eoc(&pts).unwrap();
        let scaled: Vec<(f64, f64)> = pts.iter().map(|&(h, v)| (s_h * h, s_err * v)).collect();
        prop_assert!((base - slope).abs() < 1e-10);
        prop_assert!((eoc(&scaled).unwrap() - base).abs() < 1e-10);
    }

    #[test]
    fn hybrid_sizes_follow_closed_forms(nx in 2usize..20, nz in 2usize..20, frac in 0.0f64..1.0) {
        let p = problem(1e-8);
        let mesh = build_mesh(p.domain, nx, nz).unwrap();
        let iota = 1 + ((nz - 1) as f64 * frac) as usize;
        let split = split_at_interface(&mesh, iota).unwrap();
        let s = build_apl_system(&mesh, &split, &p).unwrap().stats();
        prop_assert_eq!(s.rows, nx * (split.mz + 2));
        prop_assert_eq!(s.nnz, (3 * nx - 2) * (7 * split.mz - 1));
    }

    #[test]
    fn nodal_split_has_zero_mean_fluctuation(seed in 0u64..1000) {
        let mesh = build_mesh(Domain::preset_b(), 6, 9).unwrap();
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let mut v = vec![0.0; mesh.node_count()];
        for i in 1..=mesh.nx {
            for k in 0..=mesh.nz + 1 {
                v[mesh.node(i, k)] = next();
            }
        }
        let f = SolutionField::from_nodal(ModelKind::P, &mesh, v).unwrap();
        for i in 0..=mesh.nx + 1 {
            let col: Vec<f64> = (0..=mesh.nz + 1).map(|k| f.fluct_at(i, k)).collect();
            let integral: f64 = col.windows(2).map(|w| 0.5 * (w[0] + w[1]) * mesh.dz).sum();
            prop_assert!(integral.abs() < 1e-14);
            for k in 0..=mesh.nz + 1 {
                prop_assert!((f.mean[i] + f.fluct_at(i, k) - f.value(i, k)).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn serial_and_parallel_solves_are_bit_identical() {
    let p = problem(1e-8);
    let mesh = build_mesh(p.domain, 47, 47).unwrap();
    let split = split_at_interface(&mesh, 20).unwrap();
    for kind in [ModelKind::P, ModelKind::AP, ModelKind::APL] {
        let a = solve_model(kind, &mesh, Some(&split), &p, &SolveOptions { serial: true, ..Default::default() }).unwrap();
        let b = solve_model(kind, &mesh, Some(&split), &p, &SolveOptions::default()).unwrap();
        assert_eq!(a.field.values, b.field.values, "{kind}");
    }
}

#[test]
fn p_and_ap_agree_for_moderate_anisotropy() {
    let p = problem(1e-4);
    let mesh = build_mesh(p.domain, 31, 31).unwrap();
    let o = SolveOptions::default();
    let ep = error_norms(&solve_model(ModelKind::P, &mesh, None, &p, &o).unwrap().field, &p);
    let ea = error_norms(&solve_model(ModelKind::AP, &mesh, None, &p, &o).unwrap().field, &p);
    assert!((ep.rel_h1 / ea.rel_h1 - 1.0).abs() < 1e-6, "{} vs {}", ep.rel_h1, ea.rel_h1);
}

#[test]
fn hybrid_approaches_full_model_as_interface_descends() {
    let p = problem(1e-10);
    let mesh = build_mesh(p.domain, 63, 63).unwrap();
    let o = SolveOptions::default();
    let ap = solve_model(ModelKind::AP, &mesh, None, &p, &o).unwrap().field;
    let d: Vec<f64> = [44, 40, 36, 32]
        .iter()
        .map(|&iota| {
            let s = split_at_interface(&mesh, iota).unwrap();
            let apl = solve_model(ModelKind::APL, &mesh, Some(&s), &p, &o).unwrap().field;
            ess_distance(&ap, &apl, &s).unwrap()
        })
        .collect();
    assert!(d.windows(2).all(|w| w[1] < w[0]), "{d:?}");
}

#[test]
fn matrix_market_round_trip() {
    let p = problem(1e-8);
    let mesh = build_mesh(p.domain, 5, 6).unwrap();
    let split = split_at_interface(&mesh, 3).unwrap();
    let a = build_apl_system(&mesh, &split, &p).unwrap().system.matrix;
    let mut buf = Vec::new();
    write_matrix_market(&a, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("%%MatrixMarket matrix coordinate real general"));
    let dims: Vec<usize> = lines.next().unwrap().split_whitespace().map(|t| t.parse().unwrap()).collect();
    assert_eq!(dims, vec![a.n_rows(), a.n_cols(), a.nnz()]);
    let t: Vec<(usize, usize, f64)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            (f[0].parse::<usize>().unwrap() - 1, f[1].parse::<usize>().unwrap() - 1, f[2].parse().unwrap())
        })
        .collect();
    assert_eq!(SparseMatrix::from_triplets(dims[0], dims[1], &t).unwrap(), a);
}

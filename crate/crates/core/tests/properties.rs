use nalgebra::DVector;
use proptest::prelude::*;

use nlhardy::assembly::{assemble, read_matrix_triplets, write_matrix_triplets};
use nlhardy::cli::parse_sweep;
use nlhardy::constants::FracParams;
use nlhardy::geometry::{build_grid, label_ball_config, shrinking_family, validate, FarField, Label};
use nlhardy::inequalities::{green_identity_check, picone_check};
use nlhardy::output::to_json;
use nlhardy::spectral::{hardy_quotient, smallest_hardy_eigen};

fn params() -> FracParams {
    FracParams::new(1, 0.25).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn labels_partition_the_grid(d in 1usize..=2, r in 0.1f64..0.3, gap in 0.05f64..0.2, width in 0.1f64..0.5) {
        let g = build_grid(d, 1.0, 16, FarField::FarNeumannTruncated).unwrap();
        if let Ok(c) = label_ball_config(&g, r, (r + gap, r + gap + width)) {
            let total = c.grid.count(Label::Omega) + c.grid.count(Label::Dirichlet) + c.grid.count(Label::Neumann);
            prop_assert_eq!(total, g.cell_count());
            prop_assert!(validate(&c).is_empty());
        }
    }

    #[test]
    fn eigenvalue_monotone_in_dirichlet_set(r2a in 0.55f64..1.0, r2b in 0.55f64..1.0) {
        let (small, large) = if r2a < r2b { (r2a, r2b) } else { (r2b, r2a) };
        let g = build_grid(1, 1.0, 32, FarField::FarNeumannTruncated).unwrap();
        let (Ok(a), Ok(b)) = (label_ball_config(&g, 0.25, (0.5, small)), label_ball_config(&g, 0.25, (0.5, large))) else {
            return Ok(());
        };
        let la = smallest_hardy_eigen(&assemble(&a, &params()).unwrap(), 1e-10, 500).unwrap().lambda_h;
        let lb = smallest_hardy_eigen(&assemble(&b, &params()).unwrap(), 1e-10, 500).unwrap().lambda_h;
        prop_assert!(la <= lb + 1e-12, "{la} > {lb}");
    }

    #[test]
    fn shrinking_never_raises_lambda(k in 1usize..6) {
        let g = build_grid(1, 1.0, 32, FarField::FarNeumannTruncated).unwrap();
        let base = label_ball_config(&g, 0.25, (0.5, 1.0)).unwrap();
        let l0 = smallest_hardy_eigen(&assemble(&base, &params()).unwrap(), 1e-10, 500).unwrap().lambda_h;
        let c = shrinking_family(&base, k).unwrap();
        let lk = smallest_hardy_eigen(&assemble(&c, &params()).unwrap(), 1e-10, 500).unwrap().lambda_h;
        prop_assert!(lk <= l0 + 1e-12);
    }

    #[test]
    fn quotient_bounded_by_eigenvalue(seed in proptest::collection::vec(-3.0f64..3.0, 40)) {
        let g = build_grid(1, 1.0, 32, FarField::FarNeumannTruncated).unwrap();
        let forms = assemble(&label_ball_config(&g, 0.25, (0.5, 1.0)).unwrap(), &params()).unwrap();
        let lam = smallest_hardy_eigen(&forms, 1e-10, 500).unwrap().lambda_h;
        let u = DVector::from_fn(forms.ndof(), |i, _| seed[i % seed.len()] + 0.01 * i as f64);
        if forms.hardy_norm2(&u) > 1e-12 {
            prop_assert!(hardy_quotient(&forms, &u).unwrap() >= lam * (1.0 - 1e-9));
        }
    }

    #[test]
    fn picone_and_green_hold(us in proptest::collection::vec(-2.0f64..2.0, 40), vs in proptest::collection::vec(-2.0f64..2.0, 40)) {
        let g = build_grid(1, 1.0, 32, FarField::FarNeumannTruncated).unwrap();
        let forms = assemble(&label_ball_config(&g, 0.25, (0.5, 1.0)).unwrap(), &params()).unwrap();
        let n = forms.ndof();
        let u = DVector::from_fn(n, |i, _| us[i % us.len()].exp());
        let v = DVector::from_fn(n, |i, _| vs[(i * 7) % vs.len()]);
        let pc = picone_check(&u, &v, &forms).unwrap();
        let scale = forms.energy(&v).max(1.0);
        prop_assert!(pc.margin >= -1e-10 * scale);
        prop_assert!((pc.margin - pc.remainder).abs() <= 1e-11 * scale);
        prop_assert!(green_identity_check(&u, &v, &forms) <= 1e-11 * scale.max(forms.energy(&u)));
    }

    #[test]
    fn json_floats_round_trip_bit_exactly(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
        let text = to_json(&vec![x]).unwrap();
        let back: Vec<f64> = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back[0].to_bits(), x.to_bits());
    }

    #[test]
    fn sweep_has_requested_count(a in 0.0f64..1.0, b in 0.0f64..1.0, k in 1usize..20) {
        let v = parse_sweep(&format!("{a}:{b}:{k}")).unwrap();
        prop_assert_eq!(v.len(), k);
        prop_assert_eq!(v[0], a);
    }
}

#[test]
fn matrix_dump_round_trips_bit_exactly() {
    let g = build_grid(1, 1.0, 16, FarField::FarDirichlet).unwrap();
    let forms = assemble(&label_ball_config(&g, 0.25, (0.5, 1.0)).unwrap(), &params()).unwrap();
    let mut buf = Vec::new();
    write_matrix_triplets(&forms, &mut buf).unwrap();
    assert!(String::from_utf8_lossy(&buf).starts_with("# nlhardy A 1 "));
    let back = read_matrix_triplets(&buf[..], forms.ndof()).unwrap();
    assert_eq!(back, forms.a);
}

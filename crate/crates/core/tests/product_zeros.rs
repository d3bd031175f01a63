use equidist_core::bergman::{BergmanConfig, SectionSpace};
use equidist_core::sampling::{sample_tuple, RngStream};
use equidist_core::weights::Weight;
use equidist_core::zeros::{common_zeros_product, resultant_nonzero, ZeroTolerances};
use equidist_core::ModelSpace;

#[test]
fn random_pairs_have_full_zero_count() {
    for preset in ["fs", "fs+softjointpole(0,0,0.15)"] {
        let w = Weight::preset(ModelSpace::SphereProduct, preset).unwrap();
        for p in [2usize, 4, 6, 8] {
            let sp = SectionSpace::build(&w, p, &BergmanConfig::default()).unwrap();
            for k in 0..10 {
                let s = sample_tuple(&[&sp, &sp], &RngStream::new(7, "product-zeros", p, k));
                let m = common_zeros_product(&s[0].section, &s[1].section, &ZeroTolerances::default()).unwrap();
                assert_eq!(m.total_multiplicity(), 2 * p * p, "{preset} p={p} sample {k}");
                assert_eq!(m.unmatched, 0);
                assert!(!m.flagged && m.max_residual <= 1e-6, "{preset} p={p}: {}", m.max_residual);
                assert!((m.scale * m.total_multiplicity() as f64 - 2.0).abs() == 0.0);
            }
        }
    }
}

#[test]
fn random_pairs_have_nonzero_resultant() {
    let w = Weight::fubini_study(ModelSpace::SphereProduct);
    let sp = SectionSpace::build(&w, 6, &BergmanConfig::default()).unwrap();
    for k in 0..50 {
        let s = sample_tuple(&[&sp, &sp], &RngStream::new(3, "bertini", 6, k));
        assert!(resultant_nonzero(&s[0].section, &s[1].section).0);
    }
}

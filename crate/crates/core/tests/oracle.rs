mod common;

use std::f64::consts::FRAC_PI_2;

use common::*;
use crsf_forge::cycle::enumerate_oriented_cycles;
use crsf_forge::heaps::{heap_series, mgf_generic, tlaw_generic, CycleCatalog, DEFAULT_ENUMERATION_LIMIT};
use crsf_forge::oracle::*;
use crsf_forge::prs::{resample_mgf_exact, resample_stats_exact};
use crsf_forge::spectral::{default_mgf_grid, green_det, pi_eigenvalues, telescoping_green_product, tlaw, TLawMode};
use crsf_forge::{ConnectionGraph, CycleWeight, OrientedCycle};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn k3_law_against_cofactor_arithmetic() {
    let g = fixture("k3.edges");
    let r = tlaw(&g, TLawMode::Crsf, &default_mgf_grid()).unwrap();
    let c = char_poly(&pi_matrix(&g));
    let (mean, var, parity) = law_from_poly(3, &c);
    assert!((r.mean - mean).abs() <= 1e-12 * mean);
    assert!((r.variance - var).abs() <= 1e-12 * var);
    assert!((r.parity.unwrap() - parity).abs() <= 1e-12);
    assert!((mean - 9.0).abs() < 1e-12);
    assert!((parity + 1.0).abs() < 1e-12);
    for (t, m) in r.mgf {
        let expected = t.powi(3) * poly_eval(&c, 1.0) / poly_eval(&c, t);
        assert!((m - expected).abs() <= 1e-12 * expected.max(1e-300));
    }
}

#[test]
fn laws_on_random_graphs_match_cofactor_arithmetic() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for n in [3, 4, 5, 6] {
        for _ in 0..5 {
            let g = random_assumption_graph(&mut rng, n);
            let r = tlaw(&g, TLawMode::Crsf, &[]).unwrap();
            let (mean, var, parity) = law_from_poly(n, &char_poly(&pi_matrix(&g)));
            assert!((r.mean - mean).abs() <= 1e-9 * mean, "{} vs {mean}", r.mean);
            assert!((r.variance - var).abs() <= 1e-9 * var.abs().max(1.0));
            assert!((r.parity.unwrap() - parity).abs() <= 1e-9);
        }
    }
}

#[test]
fn mtsf_law_matches_shifted_determinant() {
    // Kernel (D + q)⁻¹(W ⊙ Φ): det(I − tM) ∝ det((D + q) − t W ⊙ Φ).
    let g = fixture("k4_noisy.edges");
    let q = 0.3;
    let r = tlaw(&g, TLawMode::Mtsf { q }, &[0.5]).unwrap();
    let at = |t: f64| {
        let mut m = magnetic(&g, q);
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                if i != j {
                    *v *= t;
                }
            }
        }
        cofactor_det(&m).re
    };
    let expected = 0.5f64.powi(4) * at(1.0) / at(0.5);
    assert!((r.mgf[0].1 - expected).abs() <= 1e-12 * expected);
}

#[test]
fn tree_mode_reduces_to_commute_structure() {
    // Single edge, tree rooted at 0: the walk from 1 takes exactly one step.
    let g = fixture("two_node.edges");
    let r = tlaw(&g, TLawMode::Tree { root: 0 }, &[0.5]).unwrap();
    assert!((r.mean - 1.0).abs() < 1e-12);
    assert!(r.variance.abs() < 1e-12);
}

#[test]
fn two_node_closed_forms() {
    for a in [0.1, 0.5, 0.9] {
        let (g, w) = two_node(a);
        let grid = [0.2, 0.5, 0.9];
        let r = tlaw_generic(&g, &w, &grid).unwrap();
        assert!((r.mean - 2.0 / a).abs() <= 1e-12 * (2.0 / a));
        for (t, m) in mgf_generic(&g, &w, &grid).unwrap() {
            let expected = a * t * t / (1.0 - (1.0 - a) * t * t);
            assert!((m - expected).abs() <= 1e-12 * expected);
        }
        let s = resample_stats_exact(&g, &w, 100).unwrap();
        assert!((s.expected_total - (1.0 - a) / a).abs() <= 1e-12 * ((1.0 - a) / a));
        // N is geometric on {0, 1, …} with success probability a.
        let t = 0.7;
        let m = resample_mgf_exact(&g, &w, |_| t).unwrap();
        assert!((m - a / (1.0 - (1.0 - a) * t)).abs() <= 1e-12);
    }
}

#[test]
fn normalization_identities_and_laplace_determinant() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..50 {
        let n = 3 + i % 4;
        let g = random_assumption_graph(&mut rng, n);
        for c in check_normalizations(&g, &CycleWeight::Determinantal, &[0.1, 1.0], 1e-9).unwrap() {
            assert!(c.pass, "{c:?}");
        }
        let ens = enumerate_oriented_crsfs(&g, &CycleWeight::Determinantal, DEFAULT_MAX_MAPS).unwrap();
        // Ensemble mass is normalized by Π deg; undo it before comparing.
        let scale: f64 = (0..n).map(|x| g.degree(x)).product();
        let d = cofactor_det(&magnetic(&g, 0.0)).re;
        assert!((ens.total * scale - d).abs() <= 1e-9 * d);
    }
}

#[test]
fn cross_engines_on_random_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for i in 0..20 {
        let g = random_assumption_graph(&mut rng, 3 + i % 4);
        for c in check_cross_engines(&g, &[0.1, 0.4, 0.8, 1.0], 1e-9).unwrap() {
            assert!(c.pass, "{c:?}");
        }
    }
}

#[test]
fn telescoping_product_is_det_ratio() {
    // Π_i G(1, x_i, x_i; earlier) = 1 / det(I − Π).
    let g = fixture("k4_noisy.edges");
    let c = char_poly(&pi_matrix(&g));
    let expected = 1.0 / poly_eval(&c, 1.0);
    for ord in [[0, 1, 2, 3], [3, 1, 0, 2], [2, 3, 1, 0]] {
        let p = telescoping_green_product(&g, &ord).unwrap();
        assert!((p - expected).abs() <= 1e-12 * expected);
    }
}

#[test]
fn green_function_as_cofactor_ratio() {
    let g = fixture("k4_noisy.edges");
    let pi = pi_matrix(&g);
    let t = 0.6;
    let shifted: Vec<Vec<_>> = (0..4)
        .map(|i| (0..4).map(|j| if i == j { num_complex::Complex64::from(1.0) } else { num_complex::Complex64::from(0.0) } - pi[i][j] * t).collect())
        .collect();
    let full = cofactor_det(&shifted).re;
    for x in 0..4 {
        let minor: Vec<Vec<_>> = shifted
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != x)
            .map(|(_, r)| r.iter().enumerate().filter(|(j, _)| *j != x).map(|(_, v)| *v).collect())
            .collect();
        let expected = cofactor_det(&minor).re / full;
        assert!((green_det(&g, t, x, &[]).unwrap() - expected).abs() <= 1e-12 * expected);
    }
}

#[test]
fn incidence_and_kernel_on_k4() {
    let g = fixture("k4_noisy.edges");
    for c in enumerate_oriented_cycles(&g, None).into_iter().filter(|c| !c.is_backtrack()) {
        let r = check_incidence(&g, &[c]).unwrap();
        assert!(r.abs_err <= 1e-8, "{r:?}");
    }
    let k = check_determinantal_kernel(&g, 3).unwrap();
    assert_eq!(k.subsets_checked, 6 + 15 + 20);
    assert!(k.max_abs_err <= 1e-8);
}

#[test]
fn kernel_on_a_graph_with_disjoint_cycles() {
    // Two noisy triangles joined by a bridge: pairs of disjoint cycles occur.
    let g = ConnectionGraph::new(
        6,
        [
            (0, 1, 1.0, 0.9),
            (1, 2, 1.0, 0.0),
            (0, 2, 1.0, 0.0),
            (3, 4, 1.0, 1.2),
            (4, 5, 1.0, 0.0),
            (3, 5, 1.0, 0.0),
            (2, 3, 1.0, 0.0),
        ],
    )
    .unwrap();
    let a = OrientedCycle::new(&[0, 1, 2]).unwrap();
    let b = OrientedCycle::new(&[3, 4, 5]).unwrap();
    let r = check_incidence(&g, &[a, b]).unwrap();
    assert!(r.enumerated > 0.0);
    assert!(r.abs_err <= 1e-8, "{r:?}");
    assert!(check_determinantal_kernel(&g, 3).unwrap().max_abs_err <= 1e-8);
}

#[test]
fn pi_spectrum_is_real_and_inside_unit_interval() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for i in 0..100 {
        let g = random_assumption_graph(&mut rng, 3 + i % 4);
        for z in pi_eigenvalues(&g).unwrap() {
            assert!(z.im.abs() <= 1e-9);
            assert!(z.re > -1.0 && z.re < 1.0);
        }
    }
}

#[test]
fn heap_series_on_two_nodes() {
    // One cycle of weight 1 − a: Σ_H w(H) = 1/a and Σ_P w(P)/|P| = −log a.
    for a in [0.3, 0.6] {
        let (g, w) = two_node(a);
        let cat = CycleCatalog::new(&g, DEFAULT_ENUMERATION_LIMIT).unwrap();
        let s = heap_series(&cat, &cat.weights(&g, &w, 1.0), 1e-14);
        assert!((s.total - 1.0 / a).abs() < 1e-10);
        assert!((s.pyramid_sum + a.ln()).abs() < 1e-10);
    }
}

#[test]
fn heap_series_inverts_trivial_sum_on_k3() {
    let g = ConnectionGraph::new(3, [(0, 1, 1.0, 0.7), (1, 2, 1.0, 0.0), (0, 2, 1.0, 0.0)]).unwrap();
    let cat = CycleCatalog::new(&g, DEFAULT_ENUMERATION_LIMIT).unwrap();
    // Small weights keep the truncated tail (heaps lighter than eps) below 5e-9.
    let w: Vec<f64> = cat.weights(&g, &CycleWeight::Determinantal, 0.35);
    let z = cat.alternating_sum(&w, cat.full_mask());
    let s = heap_series(&cat, &w, 1e-14);
    assert!((s.total - 1.0 / z).abs() < 5e-9, "{} vs {}", s.total, 1.0 / z);
    assert!((s.pyramid_sum + z.ln()).abs() < 5e-9);
}

#[test]
fn generic_mean_matches_mgf_slope() {
    // Jet-based mean against a one-sided second-order difference of the MGF at t = 1.
    let g = fixture("k3.edges");
    let cycles = enumerate_oriented_cycles(&g, None);
    let a = CycleWeight::explicit(cycles.iter().map(|c| (c.clone(), if c.is_backtrack() { 0.2 } else { 0.6 }))).unwrap();
    for c in check_normalizations(&g, &a, &[0.5], 1e-9).unwrap() {
        assert!(c.pass, "{c:?}");
    }
    let h = 1e-4;
    let m = mgf_generic(&g, &a, &[1.0, 1.0 - h, 1.0 - 2.0 * h]).unwrap();
    let slope = (3.0 * m[0].1 - 4.0 * m[1].1 + m[2].1) / (2.0 * h);
    let r = tlaw_generic(&g, &a, &[]).unwrap();
    assert!((r.mean - slope).abs() <= 1e-5 * r.mean, "{} vs {slope}", r.mean);
}

#[test]
fn chi_square_detects_a_wrong_law() {
    let g = fixture("k3.edges");
    let law = enumerate_oriented_crsfs(&g, &CycleWeight::Determinantal, DEFAULT_MAX_MAPS).unwrap().law();
    assert_eq!(law.len(), 2);
    let biased = (0..10_000).map(|i| law[usize::from(i % 10 == 0)].0.clone());
    let (obs, probs) = tally(&law, biased);
    assert!(gof_test(&obs, &probs).unwrap().rejects(1e-3));
}

#[test]
fn k3_is_the_two_oriented_triangles() {
    let g = ConnectionGraph::new(3, [(0, 1, 1.0, FRAC_PI_2), (1, 2, 1.0, 0.0), (0, 2, 1.0, 0.0)]).unwrap();
    let law = enumerate_oriented_crsfs(&g, &CycleWeight::Determinantal, DEFAULT_MAX_MAPS).unwrap().law();
    let mut succ: Vec<_> = law.iter().map(|(s, p)| (s.clone(), *p)).collect();
    succ.sort_by(|a, b| a.0.cmp(&b.0));
    assert_eq!(succ[0].0, vec![1, 2, 0]);
    assert_eq!(succ[1].0, vec![2, 0, 1]);
    assert!((succ[0].1 - 0.5).abs() < 1e-12);
}

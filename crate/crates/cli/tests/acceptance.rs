//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use comformer_cli::commands::prediction_invariance;
use comformer_cli::experiments::{bench_crystal, run_readout_experiment, time_pipeline, ReadoutSettings};
use comformer_cli::verify::{check_structure, reconstruct};
use comformer_core::fixtures::{generate, standard_fixtures, Family, FixtureSpec};
use comformer_core::geometry::random_rotation_with;
use comformer_core::graph::{build_graph, build_invariant_graph, graph_deviation};
use comformer_core::io::{
    parse_crystal_json, parse_graph_json, parse_poscar, parse_poscar_bytes, write_crystal_json, write_graph_json,
    write_poscar, StructureDocument,
};
use comformer_core::reconstruct::match_structures;
use comformer_core::symmetry::{apply_isometry, find_proper_isometry, fuzz_invariance, mirror, FuzzOptions};
use comformer_core::{build_lattice_representation, Crystal, GraphKind, Lattice, Vec3};
use comformer_model::{two_hop_angle_check, Model, ModelConfig, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Draws fixtures until one generates; some seeds are rejected by the
/// generator's separation or conditioning checks.
fn fixture(family: &Family, n: usize, rng: &mut ChaCha8Rng) -> Crystal {
    loop {
        if let Ok(c) = generate(&FixtureSpec::new(family.clone(), n, rng.random())) {
            return c;
        }
    }
}

fn ac1_completeness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let families = [Family::Cubic, Family::Orthorhombic, Family::TriclinicRandom, Family::ChiralHelix];
    let start = Instant::now();
    let mut worst_rmsd: f64 = 0.0;
    let mut worst_point: f64 = 0.0;
    let mut failures = Vec::new();
    for i in 0..500 {
        let family = &families[i % families.len()];
        let lo = if *family == Family::ChiralHelix { 3 } else { 1 };
        let c = fixture(family, rng.random_range(lo..=40), &mut rng);
        for kind in [GraphKind::Invariant, GraphKind::Equivariant] {
            let s = check_structure(format!("#{i}"), &c, 16, kind, 1e-6);
            match (s.rmsd, s.max_pointwise) {
                (Some(r), Some(p)) => {
                    worst_rmsd = worst_rmsd.max(r);
                    worst_point = worst_point.max(p);
                    if r >= 1e-6 || p >= 5e-6 {
                        failures.push(format!("#{i} {family:?} n={} {kind:?} rmsd {r:.2e} max {p:.2e}", c.len()));
                    }
                }
                _ => failures.push(format!("#{i} {family:?} n={} {kind:?}: {:?}", c.len(), s.error)),
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(
        failures.is_empty() && secs < 60.0,
        format!(
            "1000 round trips, worst rmsd {worst_rmsd:.2e}, worst pointwise {worst_point:.2e}, {secs:.1}s{}",
            failures.first().map(|f| format!(", first failure {f}")).unwrap_or_default()
        ),
    )
}

fn ac2_large_cells() -> Outcome {
    let start = Instant::now();
    let specs = [
        FixtureSpec::supercell(FixtureSpec::new(Family::TriclinicRandom, 8, 2), 4),
        FixtureSpec::supercell(FixtureSpec::new(Family::TriclinicRandom, 64, 3), 2),
        FixtureSpec::supercell(FixtureSpec::new(Family::TriclinicRandom, 27, 4), 3),
    ];
    let mut parts = Vec::new();
    let mut ok = true;
    for spec in &specs {
        let c = generate(spec).map_err(fail)?;
        let s = check_structure(spec.name(), &c, 25, GraphKind::Invariant, 1e-6);
        ok &= c.len() >= 512 && s.passed;
        parts.push(format!("n={} rmsd {:.2e}", c.len(), s.rmsd.unwrap_or(f64::NAN)));
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(ok && secs < 300.0, format!("{}, {secs:.1}s", parts.join("; ")))
}

/// Triclinic and helix cells without right angles or length ties; on such
/// lattices the representation is not decided by rounding noise.
fn non_degenerate_fixtures() -> Result<Vec<Crystal>, String> {
    let specs = [
        FixtureSpec::new(Family::TriclinicRandom, 5, 3),
        FixtureSpec::new(Family::TriclinicRandom, 9, 4),
        FixtureSpec::new(Family::ChiralHelix, 4, 5),
    ];
    let mut out = Vec::new();
    for s in &specs {
        let c = generate(s).map_err(fail)?;
        let d = build_lattice_representation(&c.lattice).map_err(fail)?.diagnostics;
        if d.length_tie || d.right_angle {
            return Err(format!("{} is tie-degenerate", s.name()));
        }
        out.push(c);
    }
    Ok(out)
}

fn ac3_passive_fuzzing() -> Outcome {
    let fixtures = non_degenerate_fixtures()?;
    let mut mismatches = 0;
    let mut worst_graph: f64 = 0.0;
    let mut worst_pred: f64 = 0.0;
    for (i, c) in fixtures.iter().enumerate() {
        let rep = fuzz_invariance(c, 12, 100, 100 + i as u64, &FuzzOptions::default()).map_err(fail)?;
        mismatches += rep.failed;
        worst_graph = worst_graph.max(rep.worst_deviation);
        for variant in [Variant::Invariant, Variant::Equivariant] {
            let model = Model::new(ModelConfig::default(), variant).map_err(fail)?;
            worst_pred = worst_pred.max(prediction_invariance(&model, c, 12, 100, 200 + i as u64).map_err(fail)?);
        }
    }
    ensure(
        mismatches == 0 && worst_pred < 1e-6,
        format!(
            "{mismatches} fingerprint mismatches in 900 trials (worst {worst_graph:.2e}), worst relative prediction change {worst_pred:.2e}"
        ),
    )
}

fn rocksalt() -> Crystal {
    let frac = [
        [0.0, 0.0, 0.0],
        [0.0, 0.5, 0.5],
        [0.5, 0.0, 0.5],
        [0.5, 0.5, 0.0],
        [0.5, 0.5, 0.5],
        [0.5, 0.0, 0.0],
        [0.0, 0.5, 0.0],
        [0.0, 0.0, 0.5],
    ]
    .map(|f| Vec3::new(f[0], f[1], f[2]));
    Crystal::from_fractional(Lattice::cubic(5.64).unwrap(), &frac, vec![11, 11, 11, 11, 17, 17, 17, 17]).unwrap()
}

fn ac4_chirality() -> Outcome {
    let normal = Vec3::new(0.2, 0.7, -0.3).normalize();
    let helix = generate(&FixtureSpec::new(Family::ChiralHelix, 4, 5)).map_err(fail)?;
    let image = mirror(&helix, &normal).map_err(fail)?;
    let (g, gm) = (build_invariant_graph(&helix, 12).map_err(fail)?, build_invariant_graph(&image, 12).map_err(fail)?);
    let graph_gap = graph_deviation(&g, &gm).map_err(fail)?;
    let (r, rm) = (reconstruct(&g).map_err(fail)?, reconstruct(&gm).map_err(fail)?);
    let proper_rmsd = match_structures(&r, &rm).map_err(fail)?.rmsd;
    let no_motion = find_proper_isometry(&r, &rm, 0.1).is_none();

    let salt = rocksalt();
    let salt_image = mirror(&salt, &normal).map_err(fail)?;
    let salt_gap = graph_deviation(
        &build_invariant_graph(&salt, 12).map_err(fail)?,
        &build_invariant_graph(&salt_image, 12).map_err(fail)?,
    )
    .map_err(fail)?;
    let salt_motion = find_proper_isometry(&salt, &salt_image, 1e-6).is_some();
    ensure(
        graph_gap > 1e-3 && proper_rmsd > 0.1 && no_motion && salt_gap <= 1e-9 && salt_motion,
        format!(
            "helix graph gap {graph_gap:.3} rad, proper-only rmsd {proper_rmsd:.3} A, proper motion found {}; rocksalt graph gap {salt_gap:.1e}, proper motion found {salt_motion}",
            !no_motion
        ),
    )
}

fn ac5_two_hop() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let family = if i % 2 == 0 { Family::TriclinicRandom } else { Family::Orthorhombic };
        let c = fixture(&family, rng.random_range(1..=10), &mut rng);
        let g = build_graph(&c, 12, GraphKind::Equivariant).map_err(fail)?;
        let scalars: Vec<f64> = (0..c.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c1 = rng.random_range(0.5..2.0);
        worst = worst.max(two_hop_angle_check(&g, c1, &scalars).map_err(fail)?.max_relative_error());
    }
    ensure(worst < 1e-10, format!("20 crystals, worst relative error {worst:.2e}"))
}

fn ac6_rotations() -> Outcome {
    let c = generate(&FixtureSpec::new(Family::TriclinicRandom, 6, 11)).map_err(fail)?;
    let model = Model::new(ModelConfig::default(), Variant::Equivariant).map_err(fail)?;
    let base = model.trace(&build_graph(&c, 12, GraphKind::Equivariant).map_err(fail)?).map_err(fail)?;
    let base_out = model.readout(&base.pooled);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut feat, mut out): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let rot = random_rotation_with(&mut rng);
        let moved = apply_isometry(&c, &rot, &Vec3::zeros()).map_err(fail)?;
        let tr = model.trace(&build_graph(&moved, 12, GraphKind::Equivariant).map_err(fail)?).map_err(fail)?;
        for (st, st_rot) in base.equivariant_states.iter().zip(&tr.equivariant_states) {
            let channels = st.vector.ncols() / 3;
            for i in 0..c.len() {
                for ch in 0..channels {
                    feat = feat.max((rot * st.vector_channel(i, ch) - st_rot.vector_channel(i, ch)).norm());
                }
            }
        }
        out = out.max((model.readout(&tr.pooled) - base_out).abs() / base_out.abs().max(1e-12));
    }
    ensure(
        feat < 1e-9 && out < 1e-6,
        format!("100 rotations, worst order-1 feature error {feat:.2e}, worst relative output change {out:.2e}"),
    )
}

fn ac7_scaling() -> Outcome {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().map_err(fail)?;
    pool.install(|| {
        let model = Model::new(ModelConfig::default(), Variant::Equivariant).map_err(fail)?;
        let mut by_n = Vec::new();
        for n in [64, 128, 256, 512] {
            let c = bench_crystal(n, 7).map_err(fail)?;
            by_n.push(time_pipeline(&c, 12, &model, 5).map_err(fail)?.total_seconds);
        }
        let c = bench_crystal(128, 8).map_err(fail)?;
        let mut by_k = Vec::new();
        for k in [12, 25, 50] {
            by_k.push((k, time_pipeline(&c, k, &model, 5).map_err(fail)?.total_seconds));
        }
        let n_ratios: Vec<f64> = by_n.windows(2).map(|w| w[1] / w[0]).collect();
        let k_ratios: Vec<(f64, f64)> =
            by_k.iter().skip(1).map(|&(k, t)| (t / by_k[0].1, 1.5 * k as f64 / 12.0)).collect();
        let ok = n_ratios.iter().all(|&r| r <= 2.5) && k_ratios.iter().all(|&(r, cap)| r <= cap);
        let n_text: Vec<String> = n_ratios.iter().map(|r| format!("{r:.2}")).collect();
        let k_text: Vec<String> = k_ratios.iter().map(|(r, cap)| format!("{r:.2}/{cap:.2}")).collect();
        ensure(
            ok,
            format!("doubling-n ratios [{}] (cap 2.5), k ratios/caps [{}]", n_text.join(", "), k_text.join(", ")),
        )
    })
}

fn ac8_readout() -> Outcome {
    let r = run_readout_experiment(&ReadoutSettings::default()).map_err(fail)?;
    let gap = r.bond_angle.full_r2 - r.bond_angle.ablation_r2;
    ensure(
        r.density.full_r2 > 0.9 && gap >= 0.05,
        format!(
            "density R2 {:.4} (ablation {:.4}); bond-cosine R2 full {:.4} vs ablation {:.4}, gap {gap:.4}",
            r.density.full_r2, r.density.ablation_r2, r.bond_angle.full_r2, r.bond_angle.ablation_r2
        ),
    )
}

fn ac9_parsers() -> Outcome {
    let mut round_trips = 0;
    for spec in standard_fixtures(0) {
        let c = generate(&spec).map_err(fail)?;
        let doc = StructureDocument::new(c.clone(), spec.name());
        if parse_crystal_json(&write_crystal_json(&doc)).map_err(fail)? != doc {
            return Err(format!("{}: JSON round trip changed the structure", spec.name()));
        }
        let text = write_poscar(&doc);
        let back = parse_poscar(&text).map_err(fail)?;
        let same_text = write_poscar(&back) == text;
        let lattice_same = back.crystal.lattice == c.lattice;
        let pos_err = back.crystal.positions.iter().zip(&c.positions).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        if !same_text || !lattice_same || back.crystal.species != c.species || pos_err > 1e-12 {
            return Err(format!("{}: POSCAR round trip drifted by {pos_err:.2e}", spec.name()));
        }
        let g = build_invariant_graph(&c, 16).map_err(fail)?;
        if parse_graph_json(&write_graph_json(&g)).map_err(fail)? != g {
            return Err(format!("{}: graph JSON round trip changed the graph", spec.name()));
        }
        round_trips += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut panics, mut accepted) = (0, 0);
    for _ in 0..10_000 {
        let len = rng.random_range(0..512);
        let bytes: Vec<u8> = (0..len).map(|_| rng.random()).collect();
        let text = String::from_utf8_lossy(&bytes).into_owned();
        let res = catch_unwind(AssertUnwindSafe(|| {
            [parse_poscar_bytes(&bytes).is_ok(), parse_crystal_json(&text).is_ok(), parse_graph_json(&text).is_ok()]
        }));
        match res {
            Ok(oks) => accepted += oks.iter().filter(|&&ok| ok).count(),
            Err(_) => panics += 1,
        }
    }
    ensure(
        panics == 0 && accepted == 0,
        format!("{round_trips} fixtures round-trip exactly; 10000 random inputs: {panics} panics, {accepted} accepted"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("AC1 completeness round trip", ac1_completeness),
        ("AC2 large-cell reconstruction", ac2_large_cells),
        ("AC3 passive-symmetry fuzzing", ac3_passive_fuzzing),
        ("AC4 chirality", ac4_chirality),
        ("AC5 two-hop angle identity", ac5_two_hop),
        ("AC6 rotation equivariance", ac6_rotations),
        ("AC7 complexity scaling", ac7_scaling),
        ("AC8 readout sanity", ac8_readout),
        ("AC9 parser robustness", ac9_parsers),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    println!("{} of 9 criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

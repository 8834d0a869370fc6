//! Timing breakdown of the grid search on the planted m = 2000 dataset.

use std::time::Instant;

use dfecs_core::ffm::{fit_hfm, fit_pfm, stack_parts, GridSpec};
use dfecs_core::geometry::{AnchorChoice, IdentityFrontalizer};
use dfecs_core::kpm::{extract_part, FacePart};
use dfecs_core::pipeline::{build_kpm, standardize_dataset};
use dfecs_core::solvers::SolverConfig;
use dfecs_core::synthetic::{generate, SyntheticSpec};

fn main() {
    let t0 = Instant::now();
    let ds = generate(&SyntheticSpec {
        subjects: 50,
        frames_per_subject: 40,
        atoms_per_part: 5,
        q: 8,
        noise: 0.0,
        seed: 42,
    });
    println!("generate: {:?}", t0.elapsed());

    let t = Instant::now();
    let std = standardize_dataset(&ds.frames, AnchorChoice::Default, None, &IdentityFrontalizer)
        .unwrap();
    let (kpm, _) = build_kpm(&std.frames, None).unwrap();
    println!("standardize + kpm: {:?}", t.elapsed());

    let grids = GridSpec::default_preset();
    let config = SolverConfig::default();
    let mut parts = Vec::new();
    for part in FacePart::ALL {
        let x_f = extract_part(&kpm.x, part);
        let t = Instant::now();
        let pm = fit_pfm(&x_f, 0.05, &grids.pfm, &config).unwrap();
        println!(
            "part {}: k = {}, alpha = {}, VE = {:.2}, exhausted = {}, {:?}",
            part.name(),
            pm.k,
            pm.alpha,
            pm.ve,
            pm.grid_exhausted,
            t.elapsed()
        );
        parts.push(dfecs_core::ffm::PartModel { part, ..pm });
    }

    let t = Instant::now();
    let (u, v) = stack_parts(&parts).unwrap();
    let hier = fit_hfm(&kpm.x, &u, &v, 0.05, &grids.hfm, &config).unwrap();
    println!(
        "hfm: q = {}, alphas = ({}, {}), VE = {:.2}, exhausted = {}, {:?}",
        hier.q,
        hier.alpha_a,
        hier.alpha_b,
        hier.ve,
        hier.grid_exhausted,
        t.elapsed()
    );
    println!("total: {:?}", t0.elapsed());
}

//! Acceptance suite: one line per criterion, non-zero exit when any criterion fails.

use std::time::{Duration, Instant};

use conelab::algebra::{build_effect_algebra, reconstruct, Verdict};
use conelab::builtins::{make_classical, make_gbit, make_quantum, Theory};
use conelab::composite::{check_local_observability, check_no_signaling, compose, Provenance};
use conelab::extras::solve_faithful_effect;
use conelab::faithful::{chi, find_pfaith_state, transpose, transpose_defining_residual};
use conelab::linalg::{eigh, hermitian, CMat, CVec, RVec};
use conelab::theory::{System, Transformation};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn builtins() -> Vec<Theory> {
    vec![
        make_classical(3).unwrap(),
        make_quantum(2).unwrap(),
        make_gbit().unwrap(),
    ]
}

fn qubit_bell() -> (Theory, conelab::composite::BipartiteSystem, RVec) {
    let q = make_quantum(2).unwrap();
    let bip = q.composite().unwrap();
    let phi = q.designated_phi.clone().unwrap();
    (q, bip, phi)
}

/// Independent distance: half the trace norm (psd), half the l1 norm of the simplex
/// coordinates (classical), half the sup norm of the square coordinates (gbit).
fn oracle_distance(sys: &System, w: &RVec, z: &RVec) -> f64 {
    match sys.state_cone.embedding() {
        Some(emb) => {
            let diff = hermitian(&(emb.synthesize(w) - emb.synthesize(z)));
            0.5 * eigh(&diff).0.iter().map(|x| x.abs()).sum::<f64>()
        }
        None if sys.name == "gbit" => 0.5 * (w[0] - z[0]).abs().max((w[1] - z[1]).abs()),
        None => 0.5 * (w - z).iter().map(|x| x.abs()).sum::<f64>(),
    }
}

fn c1_qubit_teleportation_constant() -> Outcome {
    let (_, bip, phi) = qubit_bell();
    let start = Instant::now();
    let rep = solve_faithful_effect(&bip, &phi).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(rep.feasible, "infeasible")?;
    ensure(
        (rep.alpha - 0.25).abs() <= 1e-9,
        format!("alpha = {}", rep.alpha),
    )?;
    ensure(
        elapsed < Duration::from_secs(1),
        format!("took {elapsed:?}"),
    )?;
    Ok(format!("alpha = {:.12}, {elapsed:.2?}", rep.alpha))
}

fn c2_qubit_faithful_marginal() -> Outcome {
    let (q, bip, phi) = qubit_bell();
    let x = chi(&bip, &phi);
    let half = CMat::identity(2, 2) * conelab::linalg::c(0.5);
    let emb = q.system.effect_cone.embedding().unwrap();
    let expected = RVec::from_fn(4, |k, _| {
        conelab::linalg::trace_product(&emb.basis()[k], &half)
    });
    let err = (&x - &expected).amax();
    ensure(err <= 1e-12, format!("deviation {err:.3e}"))?;
    Ok(format!("max deviation from I/2 {err:.1e}"))
}

fn c3_metric_suite() -> Outcome {
    let mut worst: f64 = 0.0;
    for t in builtins() {
        let sys = &t.system;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let w = sys.random_state(&mut rng);
            let z = sys.random_state(&mut rng);
            let y = sys.random_state(&mut rng);
            let d = |a: &RVec, b: &RVec| sys.natural_distance(a, b).map_err(|e| e.to_string());
            let (wz, zw, wy, yz, ww) = (d(&w, &z)?, d(&z, &w)?, d(&w, &y)?, d(&y, &z)?, d(&w, &w)?);
            let oracle = oracle_distance(sys, &w, &z);
            let name = &sys.name;
            ensure((wz - zw).abs() <= 1e-9, format!("{name}: asymmetric"))?;
            ensure(ww.abs() <= 1e-9, format!("{name}: d(w, w) = {ww}"))?;
            ensure(
                oracle <= 1e-6 || wz > 1e-9,
                format!("{name}: distinct states at distance 0"),
            )?;
            ensure(wz <= wy + yz + 1e-9, format!("{name}: triangle inequality"))?;
            ensure(
                (-1e-9..=1.0 + 1e-9).contains(&wz),
                format!("{name}: d = {wz}"),
            )?;
            ensure(
                (wz - oracle).abs() <= 1e-9,
                format!("{name}: {wz} vs oracle {oracle}"),
            )?;
            worst = worst.max((wz - oracle).abs());
        }
    }
    Ok(format!(
        "3000 triples, max deviation from the closed forms {worst:.1e}"
    ))
}

fn c4_monotonicity() -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    for t in builtins() {
        let sys = &t.system;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            let d = sys.random_deterministic(&mut rng);
            let w = sys.random_state(&mut rng);
            let z = sys.random_state(&mut rng);
            let before = sys.natural_distance(&w, &z).map_err(|e| e.to_string())?;
            let after = sys
                .natural_distance(&d.on_state(&w), &d.on_state(&z))
                .map_err(|e| e.to_string())?;
            ensure(
                after <= before + 1e-9,
                format!("{}: {after} > {before}", sys.name),
            )?;
            worst = worst.max(after - before);
        }
    }
    Ok(format!("1500 transformations, max increase {worst:.1e}"))
}

fn c5_identity_dichotomy() -> Outcome {
    let cl = make_classical(3).unwrap().system;
    let q = make_quantum(2).unwrap().system;
    let cl_atomic = cl
        .is_atomic(&Transformation::identity(cl.dim))
        .map_err(|e| e.to_string())?;
    let q_atomic = q
        .is_atomic(&Transformation::identity(q.dim))
        .map_err(|e| e.to_string())?;
    ensure(!cl_atomic, "classical identity reported atomic")?;
    ensure(q_atomic, "quantum identity reported refinable")?;
    Ok("classical identity refinable, quantum identity atomic".into())
}

fn c6_local_observability() -> Outcome {
    let q = make_quantum(2).unwrap().composite().unwrap();
    let g = make_gbit().unwrap().composite().unwrap();
    let c = compose(
        &make_classical(2).unwrap().system,
        &make_classical(3).unwrap().system,
        None,
    )
    .unwrap();
    let mut dims = Vec::new();
    for (bip, expected) in [(&q, 16), (&g, 9), (&c, 6)] {
        let rep = check_local_observability(bip).map_err(|e| e.to_string())?;
        ensure(
            rep.effect_span_dim == expected && rep.product_span_dim == expected,
            format!(
                "span {} / {}, expected {expected}",
                rep.effect_span_dim, rep.product_span_dim
            ),
        )?;
        dims.push(rep.effect_span_dim.to_string());
    }
    Ok(format!("spans {}", dims.join(" / ")))
}

fn c7_no_signaling() -> Outcome {
    let mut worst: f64 = 0.0;
    let theories = [
        make_classical(2).unwrap(),
        make_classical(3).unwrap(),
        make_quantum(2).unwrap(),
        make_quantum(3).unwrap(),
        make_gbit().unwrap(),
    ];
    for t in &theories {
        let bip = t.composite().map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rep = check_no_signaling(&bip, 200, &mut rng).map_err(|e| e.to_string())?;
        ensure(
            rep.max_residual <= 1e-9,
            format!("{}: {}", t.system.name, rep.max_residual),
        )?;
        worst = worst.max(rep.max_residual);
    }
    Ok(format!("5 composites, max residual {worst:.1e}"))
}

fn c8_pfaith_detection() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (q, qb, _) = qubit_bell();
    let rep = find_pfaith_state(&q, &qb, &mut rng)
        .map_err(|e| e.to_string())?
        .ok_or("no quantum candidate")?;
    ensure(
        rep.symmetric
            && rep.pure
            && rep.dyn_faithful == [true; 2]
            && rep.prep_faithful == [true; 2],
        format!("quantum flags {rep:?}"),
    )?;
    let g = make_gbit().unwrap();
    let gb = g.composite().unwrap();
    let rep = find_pfaith_state(&g, &gb, &mut rng)
        .map_err(|e| e.to_string())?
        .ok_or("no gbit candidate")?;
    ensure(
        rep.symmetric && rep.pure && rep.prep_faithful == [true; 2],
        "gbit flags",
    )?;
    for d in [2, 3] {
        let c = make_classical(d).unwrap();
        let cb = c.composite().unwrap();
        let found = find_pfaith_state(&c, &cb, &mut rng).map_err(|e| e.to_string())?;
        ensure(
            found.is_none(),
            format!("classical:{d} returned a candidate"),
        )?;
    }
    Ok("Bell state passes, PR box found, classical none".into())
}

fn c9_transpose_algebra() -> Outcome {
    let (q, bip, phi) = qubit_bell();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let tr = |t: &Transformation| transpose(&bip, &phi, t).map_err(|e| e.to_string());
    let (mut inv, mut anti, mut def): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..200 {
        let a = q.system.random_physical(&mut rng);
        let b = q.system.random_physical(&mut rng);
        inv = inv.max((tr(&tr(&a)?)?.matrix - &a.matrix).amax());
        // B o A is "A then B"; its transpose is "B' then A'".
        let ba = a.then(&b);
        anti = anti.max((tr(&ba)?.matrix - tr(&b)?.then(&tr(&a)?).matrix).amax());
        def = def.max(transpose_defining_residual(&bip, &phi, &a).map_err(|e| e.to_string())?);
    }
    ensure(inv <= 1e-9, format!("T'' - T = {inv:.3e}"))?;
    ensure(anti <= 1e-9, format!("(BA)' - A'B' = {anti:.3e}"))?;
    ensure(def <= 1e-9, format!("defining identity {def:.3e}"))?;
    Ok(format!(
        "involution {inv:.1e}, anti-homomorphism {anti:.1e}, defining identity {def:.1e}"
    ))
}

fn c10_boxworld_faithe() -> Outcome {
    let g = make_gbit().unwrap();
    let bip = g.composite().unwrap();
    ensure(
        bip.provenance == Provenance::MinTensorDefault,
        "unexpected joint cone",
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let phi = find_pfaith_state(&g, &bip, &mut rng)
        .map_err(|e| e.to_string())?
        .ok_or("no PR box")?
        .phi;
    let rep = solve_faithful_effect(&bip, &phi).map_err(|e| e.to_string())?;
    ensure(!rep.feasible, "faithful effect reported feasible")?;
    Ok("feasible = false on the minimal tensor product".into())
}

fn c11_effect_algebra() -> Outcome {
    let q = make_quantum(2).unwrap();
    let cj = q.cj.as_ref().unwrap();
    let alg = build_effect_algebra(&q.system, cj).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let res = alg.residuals(200, &mut rng);
    for (name, v) in [
        ("associativity", res.associativity),
        ("dagger", res.dagger),
        ("trace", res.trace),
    ] {
        ensure(v <= 1e-10, format!("{name} residual {v:.3e}"))?;
    }
    let op_norm = |m: &CMat| m.singular_values().max();
    let mut cstar: f64 = 0.0;
    for _ in 0..100 {
        let a = CVec::from_fn(alg.dim, |_, _| {
            num_complex::Complex64::new(rand_distr_normal(&mut rng), rand_distr_normal(&mut rng))
        });
        let o = alg.operator_rep(&a);
        let n = op_norm(&o);
        cstar = cstar.max((op_norm(&(o.adjoint() * &o)) - n * n).abs());
    }
    ensure(cstar <= 1e-8, format!("C* identity {cstar:.3e}"))?;
    Ok(format!(
        "associativity {:.1e}, dagger {:.1e}, trace {:.1e}, C* {cstar:.1e}",
        res.associativity, res.dagger, res.trace
    ))
}

fn rand_distr_normal(rng: &mut ChaCha8Rng) -> f64 {
    use rand::Rng;
    rng.sample(rand_distr::StandardNormal)
}

fn c12_reconstruction() -> Outcome {
    let q = make_quantum(2).unwrap();
    let r = reconstruct(&q.system).map_err(|e| e.to_string())?;
    ensure(
        r.verdict == Verdict::Quantum,
        format!("qubit verdict {:?}", r.verdict),
    )?;
    ensure(
        r.blocks.len() == 1 && r.blocks[0].hilbert_dim == 2,
        "qubit blocks",
    )?;
    ensure(
        r.residuals.pairing <= 1e-8,
        format!("pairing {:.3e}", r.residuals.pairing),
    )?;
    // Recompute the pairing from the fitted density operators.
    let ops = &r.blocks[0].effect_operators;
    let mut pairing: f64 = 0.0;
    for (omega, rho) in &r.fitted_states {
        for (l, o) in q.system.reference_observable.iter().zip(ops) {
            pairing = pairing.max((omega.dot(l) - conelab::linalg::trace_product(o, rho)).abs());
        }
        let trace: f64 = rho.trace().re;
        ensure((trace - 1.0).abs() <= 1e-8, "fitted state trace")?;
        ensure(
            eigh(&hermitian(rho)).0[0] >= -1e-9,
            "fitted state not positive",
        )?;
    }
    ensure(pairing <= 1e-8, format!("recomputed pairing {pairing:.3e}"))?;

    let c = reconstruct(&make_classical(3).unwrap().system).map_err(|e| e.to_string())?;
    ensure(
        c.verdict == Verdict::Hybrid,
        format!("classical verdict {:?}", c.verdict),
    )?;
    ensure(
        c.blocks.len() == 3 && c.blocks.iter().all(|b| b.hilbert_dim == 1),
        "classical blocks",
    )?;
    let g = reconstruct(&make_gbit().unwrap().system).map_err(|e| e.to_string())?;
    ensure(
        g.verdict == Verdict::NotQuantum,
        format!("gbit verdict {:?}", g.verdict),
    )?;
    Ok(format!(
        "qubit 1 block of dim 2 (pairing {pairing:.1e}), classical:3 hybrid 3x1, gbit not-quantum"
    ))
}

fn main() {
    let criteria: [Criterion; 12] = [
        (
            "qubit teleportation constant",
            c1_qubit_teleportation_constant,
        ),
        ("qubit faithful marginal", c2_qubit_faithful_marginal),
        ("metric suite", c3_metric_suite),
        ("monotonicity", c4_monotonicity),
        ("atomic identity dichotomy", c5_identity_dichotomy),
        ("local observability", c6_local_observability),
        ("no-signaling", c7_no_signaling),
        ("faithful state detection", c8_pfaith_detection),
        ("transpose algebra", c9_transpose_algebra),
        ("boxworld faithful effect", c10_boxworld_faithe),
        ("effect algebra", c11_effect_algebra),
        ("reconstruction", c12_reconstruction),
    ];
    let start = Instant::now();
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = t.elapsed();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{elapsed:.2?}]", i + 1),
            Err(why) => {
                failures += 1;
                println!("FAIL {:>2} {name}: {why} [{elapsed:.2?}]", i + 1);
            }
        }
    }
    let total = start.elapsed();
    let in_time = total <= Duration::from_secs(120);
    println!(
        "{}    total runtime {total:.2?} (limit 2 min)",
        if in_time { "PASS" } else { "FAIL" }
    );
    println!("acceptance: {} of 12 criteria passed", 12 - failures);
    if failures > 0 || !in_time {
        std::process::exit(1);
    }
}

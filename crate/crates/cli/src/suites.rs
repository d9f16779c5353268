//! Postulate check suites and the report they produce.

use clap::ValueEnum;
use conelab::algebra::{check_atomicity_closure, cj_checks};
use conelab::builtins::Theory;
use conelab::composite::{check_local_observability, check_no_signaling, BipartiteSystem};
use conelab::extras::{
    check_purify, depolarize_check, product_observable, purify_lemma_suite, solve_faithful_effect,
    teleport,
};
use conelab::faithful::{
    faithful_consequence_checks, faithful_state_checks, find_pfaith_state, FaithfulStateReport,
};
use conelab::linalg::RVec;
use conelab::report::CheckRecord;
use conelab::theory::Transformation;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Postulate {
    Nsf,
    Pfaith,
    Faithe,
    Purify,
    Ae,
    Cj,
    All,
}

impl Postulate {
    pub fn expand(self) -> Vec<Postulate> {
        use Postulate::*;
        match self {
            All => vec![Nsf, Pfaith, Faithe, Purify, Ae, Cj],
            p => vec![p],
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Section {
    pub postulate: Postulate,
    pub records: Vec<CheckRecord>,
}

/// Shared state of one invocation; the faithful-state search runs at most once.
pub struct Checker<'a> {
    pub theory: &'a Theory,
    pub samples: usize,
    pub tolerance: f64,
    rng: ChaCha8Rng,
    bip: Option<BipartiteSystem>,
    pfaith: Option<Option<FaithfulStateReport>>,
}

impl<'a> Checker<'a> {
    pub fn new(theory: &'a Theory, samples: usize, tolerance: f64, rng: ChaCha8Rng) -> Self {
        Self {
            theory,
            samples,
            tolerance,
            rng,
            bip: None,
            pfaith: None,
        }
    }

    fn bip(&mut self) -> Result<BipartiteSystem, CliError> {
        if self.bip.is_none() {
            self.bip = Some(self.theory.composite().map_err(CliError::from_theory)?);
        }
        Ok(self.bip.clone().expect("composite"))
    }

    fn pfaith_state(&mut self) -> Result<Option<FaithfulStateReport>, CliError> {
        if self.pfaith.is_none() {
            let bip = self.bip()?;
            let found =
                find_pfaith_state(self.theory, &bip, &mut self.rng).map_err(CliError::internal)?;
            self.pfaith = Some(found);
        }
        Ok(self.pfaith.clone().expect("searched"))
    }

    pub fn run(&mut self, postulate: Postulate) -> Result<Vec<Section>, CliError> {
        postulate
            .expand()
            .into_iter()
            .map(|p| {
                let records = match p {
                    Postulate::Nsf => self.nsf()?,
                    Postulate::Pfaith => self.pfaith()?,
                    Postulate::Faithe => self.faithe()?,
                    Postulate::Purify => self.purify()?,
                    Postulate::Ae => self.ae()?,
                    Postulate::Cj => self.cj()?,
                    Postulate::All => unreachable!("expanded"),
                };
                Ok(Section {
                    postulate: p,
                    records,
                })
            })
            .collect()
    }

    fn nsf(&mut self) -> Result<Vec<CheckRecord>, CliError> {
        let sys = &self.theory.system;
        let omega0 = sys
            .state_vertices()
            .iter()
            .fold(RVec::zeros(sys.dim), |acc, w| acc + w)
            / sys.state_vertices().len() as f64;
        // Measure the reference observable, then prepare omega0.
        let events: Vec<Transformation> = sys
            .reference_observable
            .iter()
            .map(|l| Transformation::new(l * omega0.transpose()))
            .collect();
        let test = sys.test(events).map_err(CliError::internal)?;
        let mut worst: f64 = 0.0;
        for _ in 0..self.samples {
            let t = sys.random_deterministic(&mut self.rng);
            worst = worst.max(
                sys.nsf_marginal_check(&test, &t, 1, &mut self.rng)
                    .map_err(CliError::internal)?,
            );
        }
        let mut out = vec![CheckRecord::new(
            "marginal-independence",
            "summing over a later test leaves the probabilities of earlier events unchanged",
            worst <= self.tolerance,
            worst,
            format!(
                "{} deterministic transformations followed by a measure-and-prepare test",
                self.samples
            ),
        )];
        let bip = self.bip()?;
        let ns =
            check_no_signaling(&bip, self.samples, &mut self.rng).map_err(CliError::internal)?;
        out.push(CheckRecord::new(
            "no-signaling",
            "local deterministic operations leave the other marginal unchanged",
            ns.max_residual <= self.tolerance,
            ns.max_residual,
            format!("{} samples", ns.samples),
        ));
        let lo = check_local_observability(&bip).map_err(CliError::internal)?;
        out.push(CheckRecord::new(
            "local-observability",
            "joint effects are spanned by products of local effects",
            lo.holds,
            0.0,
            format!(
                "effect span {}, product span {}, expected {}",
                lo.effect_span_dim, lo.product_span_dim, lo.expected
            ),
        ));
        Ok(out)
    }

    fn pfaith(&mut self) -> Result<Vec<CheckRecord>, CliError> {
        let anchor = "a symmetric pure preparationally faithful joint state exists";
        let Some(rep) = self.pfaith_state()? else {
            return Ok(vec![CheckRecord::new(
                "pfaith-state",
                anchor,
                false,
                f64::NAN,
                "no symmetric pure preparationally faithful state among the candidates",
            )]);
        };
        let mut out = vec![CheckRecord::new(
            "pfaith-state",
            anchor,
            true,
            0.0,
            format!(
                "candidate is symmetric, pure, dynamically faithful {:?}, preparationally faithful {:?}; form signature {:?}",
                rep.dyn_faithful, rep.prep_faithful, rep.signature
            ),
        )];
        let bip = self.bip()?;
        out.extend(
            faithful_state_checks(&bip, &rep.phi, self.samples, &mut self.rng)
                .map_err(CliError::internal)?,
        );
        out.extend(
            faithful_consequence_checks(&bip, &rep.phi, self.samples, &mut self.rng)
                .map_err(CliError::internal)?,
        );
        Ok(out)
    }

    fn faithe(&mut self) -> Result<Vec<CheckRecord>, CliError> {
        let names = [
            (
                "faithful-effect",
                "a joint effect inverts the state-effect correspondence of the faithful state",
            ),
            (
                "teleportation",
                "teleportation succeeds with a state-independent probability",
            ),
            (
                "depolarizing",
                "a complete joint observable maps every state to the faithful marginal",
            ),
        ];
        let Some(pf) = self.pfaith_state()? else {
            return Ok(names
                .iter()
                .map(|(n, a)| {
                    CheckRecord::not_applicable(
                        *n,
                        *a,
                        "requires a symmetric pure preparationally faithful state",
                    )
                })
                .collect());
        };
        let bip = self.bip()?;
        let phi = &pf.phi;
        let rep = solve_faithful_effect(&bip, phi).map_err(CliError::internal)?;
        let cone = serde_json::to_value(rep.cone)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default();
        let mut out = Vec::new();
        if !rep.feasible {
            out.push(CheckRecord::new(
                names[0].0,
                names[0].1,
                false,
                f64::NAN,
                format!(
                    "infeasible: no positive multiple of the solution lies in the joint effect cone ({cone}); alpha_max = {:.6}",
                    if rep.alpha_max.abs() < 1e-12 { 0.0 } else { rep.alpha_max }
                ),
            ));
            for (n, a) in &names[1..] {
                out.push(CheckRecord::not_applicable(*n, *a, "no faithful effect"));
            }
            return Ok(out);
        }
        out.push(CheckRecord::new(
            names[0].0,
            names[0].1,
            true,
            (rep.alpha - rep.alpha_max).abs(),
            format!(
                "alpha = {:.12}, alpha_max = {:.12}, joint cone {cone}",
                rep.alpha, rep.alpha_max
            ),
        ));
        let mut worst: f64 = 0.0;
        for _ in 0..self.samples {
            let omega = bip.left.random_state(&mut self.rng);
            let (p, out_state) = teleport(&bip, &rep, phi, &omega).map_err(CliError::internal)?;
            worst = worst
                .max((p - rep.alpha).abs())
                .max((out_state - &omega).amax());
        }
        out.push(CheckRecord::new(
            names[1].0,
            names[1].1,
            worst <= self.tolerance * 10.0,
            worst,
            format!("{} random states", self.samples),
        ));
        let obs = product_observable(&bip);
        let dep = depolarize_check(&bip, phi, &obs, self.samples, &mut self.rng)
            .map_err(CliError::internal)?;
        out.push(CheckRecord::new(
            names[2].0,
            names[2].1,
            dep <= self.tolerance * 10.0,
            dep,
            "product reference observable",
        ));
        Ok(out)
    }

    fn purify(&mut self) -> Result<Vec<CheckRecord>, CliError> {
        let bip = self.bip()?;
        let rep = check_purify(&bip).map_err(CliError::internal)?;
        let worst = rep.entries.iter().map(|e| e.residual).fold(0.0, f64::max);
        let detail = match rep.failing().next() {
            Some(e) => format!(
                "witness: no pure joint state has marginal {}",
                fmt_vec(&e.state)
            ),
            None => format!("{} probe states purified", rep.entries.len()),
        };
        let mut out = vec![CheckRecord::new(
            "purification",
            "every state is the marginal of a pure joint state",
            rep.all_purifiable,
            worst,
            detail,
        )];
        let phi = self.pfaith_state()?.map(|r| r.phi);
        out.extend(
            purify_lemma_suite(&bip, phi.as_ref(), &rep, &mut self.rng)
                .map_err(CliError::internal)?,
        );
        Ok(out)
    }

    fn ae(&mut self) -> Result<Vec<CheckRecord>, CliError> {
        let rep = check_atomicity_closure(&self.theory.system, self.samples, &mut self.rng)
            .map_err(CliError::internal)?;
        Ok(vec![CheckRecord::new(
            "atomic-closure",
            "the composition of atomic transformations is atomic",
            rep.holds,
            rep.violations as f64,
            format!("{} pairs, {} violations", rep.pairs_tested, rep.violations),
        )])
    }

    fn cj(&mut self) -> Result<Vec<CheckRecord>, CliError> {
        cj_checks(
            &self.theory.system,
            self.theory.cj.as_ref(),
            self.samples,
            &mut self.rng,
        )
        .map_err(CliError::internal)
    }
}

pub fn fmt_vec(v: &RVec) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

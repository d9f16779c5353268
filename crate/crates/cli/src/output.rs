//! Report assembly and rendering.

use std::fmt::Write as _;

use conelab::algebra::ReconstructionResult;
use conelab::builtins::Theory;
use conelab::composite::Provenance;
use conelab::cone::Backend;
use conelab::report::{all_pass, CheckRecord, Status};
use serde::Serialize;

use crate::suites::Section;
use crate::Format;

#[derive(Debug, Serialize)]
pub struct SystemSummary {
    pub name: String,
    pub dim: usize,
    pub backend: &'static str,
    pub effect_rays: usize,
    pub state_vertices: usize,
    pub transformation_generators: usize,
    pub cj_asserted: bool,
}

impl SystemSummary {
    pub fn of(t: &Theory) -> Self {
        let s = &t.system;
        Self {
            name: s.name.clone(),
            dim: s.dim,
            backend: match s.effect_cone.backend() {
                Backend::Polyhedral(_) => "polyhedral",
                Backend::Psd(_) => "psd",
            },
            effect_rays: s.effect_rays().len(),
            state_vertices: s.state_vertices().len(),
            transformation_generators: s.transformation_generators.len(),
            cj_asserted: t.cj.as_ref().is_some_and(|c| c.asserted()),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct CompositeSummary {
    pub dims: (usize, usize),
    pub dim: usize,
    pub provenance: Provenance,
    pub effect_rays: Option<usize>,
    pub effect_span_dim: usize,
    pub records: Vec<CheckRecord>,
    pub passed: bool,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub command: String,
    pub theory: String,
    pub seed: u64,
    pub samples: usize,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub sections: Vec<Section>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub composite: Option<CompositeSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reconstruction: Option<ReconstructionResult>,
}

impl Report {
    pub fn new(seed: u64, samples: usize, tolerance: f64) -> Self {
        Self {
            command: String::new(),
            theory: String::new(),
            seed,
            samples,
            tolerance,
            system: None,
            sections: Vec::new(),
            composite: None,
            reconstruction: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.sections.iter().all(|s| all_pass(&s.records))
            && self.composite.as_ref().is_none_or(|c| c.passed)
    }
}

pub fn emit(report: &Report, format: Format) {
    match format {
        Format::Structured => {
            let mut r = serde_json::to_value(report).expect("report serialises");
            r["verdict"] = if report.passed() { "pass" } else { "fail" }.into();
            println!(
                "{}",
                serde_json::to_string_pretty(&r).expect("report serialises")
            );
        }
        Format::Text => print!("{}", render_text(report)),
    }
}

fn status_tag(s: Status) -> &'static str {
    match s {
        Status::Pass => "PASS",
        Status::Fail => "FAIL",
        Status::NotApplicable => "N/A ",
    }
}

fn record_lines(out: &mut String, r: &CheckRecord) {
    let residual = if r.residual.is_finite() {
        format!("{:.3e}", r.residual)
    } else {
        "-".into()
    };
    let _ = writeln!(
        out,
        "  {} {:<34} residual {:<10} {}",
        status_tag(r.status),
        r.name,
        residual,
        r.detail
    );
    let _ = writeln!(out, "       ({})", r.anchor);
}

pub fn render_text(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", report.command, report.theory);
    if let Some(s) = &report.system {
        let _ = writeln!(
            out,
            "system {}: dim {}, {} backend, {} effect rays, {} state vertices, {} transformation generators{}",
            s.name,
            s.dim,
            s.backend,
            s.effect_rays,
            s.state_vertices,
            s.transformation_generators,
            if s.cj_asserted { ", CJ asserted" } else { "" }
        );
    }
    for sec in &report.sections {
        let name = serde_json::to_value(sec.postulate).expect("postulate");
        let _ = writeln!(out, "[{}]", name.as_str().unwrap_or_default());
        for r in &sec.records {
            record_lines(&mut out, r);
        }
    }
    if let Some(c) = &report.composite {
        let rays = c.effect_rays.map_or_else(
            || "psd joint cone".to_string(),
            |n| format!("{n} effect rays"),
        );
        let provenance = serde_json::to_value(c.provenance).expect("provenance");
        let _ = writeln!(
            out,
            "composite {}x{}: dim {}, {rays}, effect span {}, joint cone {}",
            c.dims.0,
            c.dims.1,
            c.dim,
            c.effect_span_dim,
            provenance.as_str().unwrap_or_default()
        );
        for r in &c.records {
            record_lines(&mut out, r);
        }
    }
    if let Some(rec) = &report.reconstruction {
        let verdict = serde_json::to_value(rec.verdict).expect("verdict");
        let _ = writeln!(
            out,
            "reconstruction: {}",
            verdict.as_str().unwrap_or_default()
        );
        for (i, b) in rec.blocks.iter().enumerate() {
            let _ = writeln!(
                out,
                "  block {i}: effect dim {}, hilbert dim {}",
                b.effect_dim, b.hilbert_dim
            );
        }
        let r = &rec.residuals;
        let _ = writeln!(
            out,
            "  residuals: pairing {:.3e}, kraus {:.3e}, composition {:.3e}; saturation {}/{}",
            r.pairing, r.kraus, r.composition, r.saturation_dim, r.algebra_dim
        );
        for n in &rec.notes {
            let _ = writeln!(out, "  note: {n}");
        }
    }
    let _ = writeln!(
        out,
        "verdict: {}",
        if report.passed() { "pass" } else { "fail" }
    );
    out
}

//! Config-driven experiment runner.
//!
//! Stages execute in dependency order (fields -> formbounds -> mollify ->
//! solve/approx -> regularity batteries); each battery writes its own CSV
//! atomically, so one failing battery never corrupts another's output.
//! Theory-hypothesis violations refuse the whole run; measured-bound
//! violations are findings collected into the manifest. Identical configs
//! produce byte-identical artifacts.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use serde_json::json;

use crate::approximation::{compact_mask, estimate_nu_plus, run_scheme, SchemeOptions, SchemeRun};
use crate::config::{BatteryConfig, BatteryName, BatteryParams, ExperimentConfig};
use crate::error::{Error, Result};
use crate::fields::{make_drift, make_matrix};
use crate::formbounds::{
    default_eps_grid, estimate_mf_delta_with, estimate_quadratic_bound_with, EigenOptions,
    PencilWorkspace,
};
use crate::grid::{build_domain, GridDomain, ScalarField};
use crate::io::{atomic_write, format_float, save_scalar_field};
use crate::mollify::{verify_mollification, MollifyVerifyOptions};
use crate::regularity as reg;
use crate::solver::{assemble, solve_dirichlet, SolveOptions, WeakForm};

/// What a subcommand asks the runner to execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Formbound,
    Mollify,
    Solve,
    Approx,
    Verify(BatteryName),
    Full,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub findings: Vec<String>,
    pub artifacts: Vec<PathBuf>,
}

struct CsvTable {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    fn new(header: Vec<&'static str>) -> Self {
        CsvTable {
            header,
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn write(&self, path: &Path) -> Result<()> {
        let mut text = String::new();
        text.push_str(&self.header.join(","));
        text.push_str("\r\n");
        for row in &self.rows {
            text.push_str(&row.join(","));
            text.push_str("\r\n");
        }
        atomic_write(path, text.as_bytes())
    }
}

fn f(v: f64) -> String {
    format_float(v)
}

struct Context {
    config: ExperimentConfig,
    domain: Arc<GridDomain>,
    eigen: EigenOptions,
    solve: SolveOptions,
    out: PathBuf,
    findings: Vec<String>,
    artifacts: Vec<PathBuf>,
    constants: serde_json::Map<String, serde_json::Value>,
}

impl Context {
    fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let domain = build_domain(
            config.domain.dimension,
            config.domain.half_extent,
            config.domain.resolution,
        )?;
        let eigen = EigenOptions {
            rel_tol: config.tolerances.eigen_rel,
            max_iterations: config.tolerances.eigen_max_iterations,
            seed: config.seed ^ 0x4b4f_4c4d,
            ..EigenOptions::default()
        };
        let solve = SolveOptions {
            rel_tol: config.tolerances.linear_rel,
            max_iterations: config.tolerances.linear_max_iterations,
        };
        std::fs::create_dir_all(&config.output_dir)?;
        Ok(Context {
            domain,
            eigen,
            solve,
            out: config.output_dir.clone(),
            config: config.clone(),
            findings: Vec::new(),
            artifacts: Vec::new(),
            constants: serde_json::Map::new(),
        })
    }

    fn emit(&mut self, name: &str, table: &CsvTable) -> Result<()> {
        let path = self.out.join(name);
        table.write(&path)?;
        self.artifacts.push(path);
        Ok(())
    }

    fn emit_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.out.join(name);
        atomic_write(&path, serde_json::to_string_pretty(value)?.as_bytes())?;
        self.artifacts.push(path);
        Ok(())
    }

    /// Standing hypothesis gate: refuse when `nu_+ >= 2 sigma`.
    fn gate(&mut self) -> Result<f64> {
        let drift = make_drift(&self.config.coefficients.drift, &self.domain)?;
        let nu_plus = estimate_nu_plus(&self.config.coefficients.drift, &drift, &self.eigen)?;
        let sigma = self.config.coefficients.matrix.sigma();
        if nu_plus >= 2.0 * sigma {
            return Err(Error::HypothesisViolated {
                nu_plus,
                two_sigma: 2.0 * sigma,
            });
        }
        self.constants
            .insert("nu_plus".into(), json!(nu_plus));
        Ok(nu_plus)
    }

    fn formbound_stage(&mut self) -> Result<()> {
        let drift = make_drift(&self.config.coefficients.drift, &self.domain)?;
        let ws = PencilWorkspace::new(&self.domain);
        let eps_grid = default_eps_grid(&self.domain, self.config.tolerances.mf_eps_points);
        let mut table = CsvTable::new(vec![
            "field_id", "class", "companion", "bound", "eps_star", "iterations", "residual",
            "grid_n",
        ]);
        let absb = drift.b.magnitude();
        let grid_n = self.domain.resolution().to_string();
        for &companion in &self.config.tolerances.companion_sweep {
            let est = estimate_mf_delta_with(&ws, &absb, companion, &eps_grid, &self.eigen)?;
            table.push(vec![
                "abs_b".into(),
                "mf".into(),
                f(companion),
                f(est.bound),
                f(est.eps_star.unwrap_or(f64::NAN)),
                est.rayleigh_iterations.to_string(),
                f(est.residual),
                grid_n.clone(),
            ]);
        }
        for (field, id) in [(&drift.div_plus, "divb_plus"), (&drift.div_minus, "divb_minus")] {
            for &companion in &self.config.tolerances.companion_sweep {
                let est = estimate_quadratic_bound_with(&ws, field, companion, &self.eigen)?;
                table.push(vec![
                    id.into(),
                    "quadratic".into(),
                    f(companion),
                    f(est.bound),
                    "".into(),
                    est.rayleigh_iterations.to_string(),
                    f(est.residual),
                    grid_n.clone(),
                ]);
            }
        }
        self.emit("formbound.csv", &table)
    }

    fn mollify_stage(&mut self) -> Result<()> {
        if self.config.schedule.is_empty() {
            return Err(Error::Config(
                "mollify stage needs a nonempty schedule".into(),
            ));
        }
        let opts = MollifyVerifyOptions {
            c_delta: 0.0,
            eps_points: self.config.tolerances.mf_eps_points,
            delta_slack: self.config.tolerances.delta_slack,
            eigen: self.eigen,
        };
        let report = verify_mollification(
            &self.config.coefficients.drift,
            &self.domain,
            &self.config.schedule,
            &opts,
        )?;
        let mut table = CsvTable::new(vec![
            "eps",
            "sup_bn",
            "sup_times_eps",
            "delta_n",
            "l1_distance",
            "divsplit_maxviolation",
            "divsplit_nonnegative",
        ]);
        for row in &report.rows {
            table.push(vec![
                f(row.eps),
                f(row.sup_bn),
                f(row.sup_times_eps),
                f(row.delta_n.bound),
                f(row.l1_distance),
                f(row.divsplit_max_violation),
                row.divsplit_nonnegative.to_string(),
            ]);
        }
        self.constants
            .insert("delta_ref".into(), json!(report.delta_ref.bound));
        self.findings.extend(report.findings.iter().cloned());
        self.emit("mollify.csv", &table)
    }

    /// Solves either the raw problem (empty schedule) or the full
    /// approximation scheme; returns the final solution field.
    fn solve_stage(&mut self, with_scheme: bool) -> Result<ScalarField> {
        let domain = self.domain.clone();
        if with_scheme && !self.config.schedule.is_empty() {
            let opts = SchemeOptions {
                form: WeakForm::DivergenceForm,
                solve: self.solve,
                eigen: self.eigen,
                c_delta: 0.0,
                mf_eps_points: self.config.tolerances.mf_eps_points.min(5),
            };
            let SchemeRun { report, mut solutions } = run_scheme(
                &self.config.coefficients.matrix,
                &self.config.coefficients.drift,
                &self.config.coefficients.boundary,
                &self.config.schedule,
                &domain,
                &opts,
            )?;
            let mut table = CsvTable::new(vec!["i", "j", "eps_i", "eps_j", "l2_distance"]);
            for i in 0..report.eps_schedule.len() {
                for j in 0..report.eps_schedule.len() {
                    table.push(vec![
                        i.to_string(),
                        j.to_string(),
                        f(report.eps_schedule[i]),
                        f(report.eps_schedule[j]),
                        f(report.cauchy_matrix[i][j]),
                    ]);
                }
            }
            self.emit("cauchy.csv", &table)?;
            self.findings.extend(report.findings.iter().cloned());
            self.constants
                .insert("limit_weak_residual".into(), json!(report.limit_weak_residual));
            self.emit_json("approx.json", &report)?;
            let u = solutions.pop().expect("nonempty schedule yields solutions");
            let path = self.out.join("u.bin");
            save_scalar_field(&u, &path)?;
            self.artifacts.push(path);
            Ok(u)
        } else {
            let a = make_matrix(&self.config.coefficients.matrix, &domain)?;
            let drift = make_drift(&self.config.coefficients.drift, &domain)?;
            let g = self.config.coefficients.boundary.realize(&domain)?;
            let system = assemble(
                &a,
                &drift.b,
                &drift.div_plus,
                &drift.div_minus,
                &domain,
                WeakForm::DivergenceForm,
            )?;
            let solved = solve_dirichlet(&system, &g, &self.solve)?;
            let summary = json!({
                "linear_residual": solved.linear_residual,
                "iterations": solved.iterations,
                "max_principle_excess": solved.max_principle_excess,
                "max_cell_peclet": system.max_cell_peclet,
                "interior_nodes": system.interior.len(),
            });
            self.emit_json("solve.json", &summary)?;
            let path = self.out.join("u.bin");
            save_scalar_field(&solved.u, &path)?;
            self.artifacts.push(path);
            Ok(solved.u)
        }
    }

    fn battery_params<'a>(&self, battery: &'a BatteryConfig) -> (Vec<Vec<f64>>, Vec<f64>, &'a BatteryParams) {
        let params = &battery.params;
        let centers = if params.centers.is_empty() {
            vec![vec![0.0; self.domain.dimension()]]
        } else {
            params.centers.clone()
        };
        let big_r = if params.big_r.is_empty() {
            vec![0.8 * self.domain.half_extent()]
        } else {
            params.big_r.clone()
        };
        (centers, big_r, params)
    }

    fn run_battery(&mut self, u: &ScalarField, battery: &BatteryConfig) -> Result<()> {
        let (centers, big_rs, params) = self.battery_params(battery);
        let mut findings = Vec::new();
        match battery.name {
            BatteryName::Caccioppoli => {
                let mut table =
                    CsvTable::new(vec!["center", "r", "big_r", "c", "caccioppoli_k"]);
                for center in &centers {
                    for &big_r in &big_rs {
                        let r = params.r_ratio * big_r;
                        match reg::caccioppoli_ratio(u, params.c, center, r, big_r) {
                            Ok(k) => table.push(vec![
                                format!("\"{center:?}\""),
                                f(r),
                                f(big_r),
                                f(params.c),
                                f(k),
                            ]),
                            Err(e) => findings.push(format!("caccioppoli skipped: {e}")),
                        }
                    }
                }
                self.emit("caccioppoli.csv", &table)?;
            }
            BatteryName::Harnack => {
                let mut table = CsvTable::new(vec!["center", "big_r", "harnack_c"]);
                for center in &centers {
                    for &big_r in &big_rs {
                        match reg::harnack_quotient(u, center, big_r) {
                            Ok(c) => {
                                table.push(vec![format!("\"{center:?}\""), f(big_r), f(c)])
                            }
                            Err(e) => findings.push(format!("harnack skipped: {e}")),
                        }
                    }
                }
                self.emit("harnack.csv", &table)?;
            }
            BatteryName::Holder => {
                let mut table = CsvTable::new(vec![
                    "center", "big_r", "gamma", "k", "raw_slope", "clamped", "degenerate",
                ]);
                for center in &centers {
                    for &big_r in &big_rs {
                        let radii = reg::default_holder_radii(u, big_r);
                        match reg::holder_fit(u, center, &radii, big_r) {
                            Ok(fit) => table.push(vec![
                                format!("\"{center:?}\""),
                                f(big_r),
                                f(fit.gamma),
                                f(fit.k),
                                f(fit.raw_slope),
                                fit.clamped.to_string(),
                                fit.degenerate.to_string(),
                            ]),
                            Err(e) => findings.push(format!("holder skipped: {e}")),
                        }
                    }
                }
                self.emit("holder.csv", &table)?;
            }
            BatteryName::Gradlp => {
                let mut table = CsvTable::new(vec![
                    "center", "big_r", "p", "grad_lp_norm", "reverse_holder_ratio", "theta",
                ]);
                for center in &centers {
                    for &big_r in &big_rs {
                        match reg::gradient_lp_profile(u, center, big_r, &params.p_list) {
                            Ok(profile) => {
                                for &(p, norm) in &profile.norms {
                                    table.push(vec![
                                        format!("\"{center:?}\""),
                                        f(big_r),
                                        f(p),
                                        f(norm),
                                        f(profile.reverse_holder_ratio),
                                        f(profile.theta),
                                    ]);
                                }
                            }
                            Err(e) => findings.push(format!("gradlp skipped: {e}")),
                        }
                    }
                }
                self.emit("gradlp.csv", &table)?;
            }
            BatteryName::Logbmo => {
                let mut table =
                    CsvTable::new(vec!["center", "r", "grad_log_k", "bmo_k"]);
                for center in &centers {
                    for &big_r in &big_rs {
                        match reg::log_bmo_check(u, center, big_r) {
                            Ok((gk, bmo)) => table.push(vec![
                                format!("\"{center:?}\""),
                                f(big_r),
                                f(gk),
                                f(bmo),
                            ]),
                            Err(e) => findings.push(format!("logbmo skipped: {e}")),
                        }
                    }
                }
                self.emit("logbmo.csv", &table)?;
            }
            BatteryName::Crossprod => {
                let mut table = CsvTable::new(vec!["center", "big_r", "q", "crossproduct_c"]);
                for center in &centers {
                    for &big_r in &big_rs {
                        match reg::crossproduct_check(u, center, big_r, params.q) {
                            Ok(c) => table.push(vec![
                                format!("\"{center:?}\""),
                                f(big_r),
                                f(params.q),
                                f(c),
                            ]),
                            Err(e) => findings.push(format!("crossprod skipped: {e}")),
                        }
                    }
                }
                self.emit("crossprod.csv", &table)?;
            }
            BatteryName::Lemmas => {
                self.lemmas_battery(params)?;
            }
            BatteryName::All => {
                for name in [
                    BatteryName::Caccioppoli,
                    BatteryName::Harnack,
                    BatteryName::Holder,
                    BatteryName::Gradlp,
                    BatteryName::Logbmo,
                    BatteryName::Crossprod,
                    BatteryName::Lemmas,
                ] {
                    let sub = BatteryConfig {
                        name,
                        params: battery.params.clone(),
                    };
                    if let Err(e) = self.run_battery(u, &sub) {
                        self.findings
                            .push(format!("battery {} failed: {e}", name.as_str()));
                    }
                }
            }
        }
        self.findings.extend(findings);
        Ok(())
    }

    fn lemmas_battery(&mut self, params: &BatteryParams) -> Result<()> {
        use rand::Rng;
        use rand::SeedableRng;
        let mut table = CsvTable::new(vec![
            "kind", "c", "gamma", "alpha", "s", "x0", "beta_max", "converged",
        ]);
        for s in [0.0, 0.5, 1.0] {
            let check = reg::caccioppoli_recurrence_bound(s, None);
            table.push(vec![
                "recurrence_cap".into(),
                "".into(),
                "".into(),
                "".into(),
                f(s),
                "".into(),
                f(check.beta_max),
                "".into(),
            ]);
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.config.seed);
        let mut failures = 0usize;
        for _ in 0..params.lemma_samples {
            let c = rng.gen_range(0.5..2.0);
            let gamma = rng.gen_range(1.5..4.0);
            let alpha = rng.gen_range(0.5..2.0);
            let x0 = reg::degiorgi_threshold(c, gamma, alpha) * (1.0 - 1e-12);
            let (_, converged) = reg::degiorgi_lemma(c, gamma, alpha, x0, 600)?;
            if !converged {
                failures += 1;
            }
            table.push(vec![
                "degiorgi".into(),
                f(c),
                f(gamma),
                f(alpha),
                "".into(),
                f(x0),
                "".into(),
                converged.to_string(),
            ]);
        }
        if failures > 0 {
            self.findings
                .push(format!("degiorgi lemma diverged on {failures} threshold samples"));
        }
        self.emit("lemmas.csv", &table)
    }

    fn manifest(&mut self) -> Result<()> {
        let manifest = json!({
            "config_hash": self.config.content_hash(),
            "crate_version": env!("CARGO_PKG_VERSION"),
            "constants": self.constants,
            "findings": self.findings,
            "artifacts": self
                .artifacts
                .iter()
                .filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()))
                .collect::<Vec<_>>(),
        });
        self.emit_json("manifest.json", &manifest)
    }
}

/// Executes one stage (or the full pipeline) for a config.
pub fn run_stage(config: &ExperimentConfig, stage: Stage) -> Result<RunOutcome> {
    let mut ctx = Context::new(config)?;
    ctx.gate()?;
    match stage {
        Stage::Formbound => ctx.formbound_stage()?,
        Stage::Mollify => ctx.mollify_stage()?,
        Stage::Solve => {
            ctx.solve_stage(false)?;
        }
        Stage::Approx => {
            ctx.solve_stage(true)?;
        }
        Stage::Verify(name) => {
            let u = ctx.solve_stage(true)?;
            let battery = config
                .batteries
                .iter()
                .find(|b| b.name == name)
                .cloned()
                .unwrap_or(BatteryConfig {
                    name,
                    params: BatteryParams::default(),
                });
            ctx.run_battery(&u, &battery)?;
        }
        Stage::Full => {
            ctx.formbound_stage()?;
            if !config.schedule.is_empty() {
                ctx.mollify_stage()?;
            }
            let u = ctx.solve_stage(true)?;
            let batteries = if config.batteries.is_empty() {
                vec![BatteryConfig {
                    name: BatteryName::All,
                    params: BatteryParams::default(),
                }]
            } else {
                config.batteries.clone()
            };
            for battery in &batteries {
                if let Err(e) = ctx.run_battery(&u, battery) {
                    ctx.findings
                        .push(format!("battery {} failed: {e}", battery.name.as_str()));
                }
            }
        }
    }
    ctx.manifest()?;
    Ok(RunOutcome {
        findings: ctx.findings,
        artifacts: ctx.artifacts,
    })
}

/// Full pipeline (the `run` subcommand).
pub fn run(config: &ExperimentConfig) -> Result<RunOutcome> {
    run_stage(config, Stage::Full)
}

/// Writes one plain-text gnuplot script per battery CSV found in
/// `report_dir`; missing or unknown CSVs are skipped with a warning.
pub fn emit_plots(report_dir: &Path) -> Result<Vec<PathBuf>> {
    let known: &[(&str, &str, &str)] = &[
        ("harnack.csv", "harnack_c", "set ylabel 'sup/inf quotient'\nplot csv using 2:3 with linespoints title 'harnack C'"),
        ("caccioppoli.csv", "caccioppoli_k", "set ylabel 'Caccioppoli K'\nplot csv using 3:5 with linespoints title 'K'"),
        ("holder.csv", "holder_gamma", "set ylabel 'gamma'\nplot csv using 2:3 with linespoints title 'gamma'"),
        ("gradlp.csv", "grad_lp", "set logscale y\nset ylabel '||grad u||_p'\nplot csv using 3:4 with linespoints title 'L^p norm'"),
        ("logbmo.csv", "log_bmo", "set ylabel 'log-solution statistics'\nplot csv using 2:3 with linespoints title 'grad log K', csv using 2:4 with linespoints title 'BMO'"),
        ("crossprod.csv", "crossproduct", "set ylabel 'cross product'\nplot csv using 2:4 with linespoints title 'C'"),
        ("mollify.csv", "mollify", "set logscale x\nset ylabel 'value'\nplot csv using 1:3 with linespoints title 'sup|b_n| eps', csv using 1:4 with linespoints title 'delta_n'"),
        ("cauchy.csv", "cauchy", "set ylabel '||u_i - u_j||_L2(K)'\nplot csv using 3:5 with points title 'pair distance'"),
        ("formbound.csv", "formbound", "set logscale x\nset ylabel 'bound'\nplot csv using 3:4 with linespoints title 'bound(c)'"),
    ];
    if !report_dir.is_dir() {
        return Err(Error::Config(format!(
            "report directory {} does not exist",
            report_dir.display()
        )));
    }
    let mut written = Vec::new();
    for (csv_name, tag, body) in known {
        let csv_path = report_dir.join(csv_name);
        if !csv_path.exists() {
            log::warn!("plot skipped: {} not found", csv_path.display());
            continue;
        }
        let script = format!(
            "# gnuplot script generated from {csv_name}\n\
             csv = '{csv_name}'\n\
             set datafile separator ','\n\
             set key autotitle columnhead\n\
             set term pngcairo size 900,600\n\
             set output '{tag}.png'\n\
             set xlabel 'parameter'\n\
             {body}\n"
        );
        let path = report_dir.join(format!("{tag}.gnuplot"));
        atomic_write(&path, script.as_bytes())?;
        written.push(path);
    }
    if written.is_empty() {
        log::warn!("no battery CSVs found in {}", report_dir.display());
    }
    Ok(written)
}

/// Compact-region mask re-export for downstream consumers.
pub fn interior_compact(domain: &GridDomain) -> Vec<usize> {
    compact_mask(domain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{
        BatteryConfig, BatteryName, CoefficientConfig, DomainConfig, ExperimentConfig, Tolerances,
    };
    use crate::fields::{DriftSpec, MatrixSpec};

    fn base_config(out: PathBuf) -> ExperimentConfig {
        ExperimentConfig {
            schema_version: 1,
            domain: DomainConfig {
                dimension: 2,
                half_extent: 1.0,
                resolution: 17,
            },
            coefficients: CoefficientConfig {
                drift: DriftSpec::zero(),
                matrix: MatrixSpec::Identity,
                boundary: crate::approximation::BoundarySpec::Affine {
                    offset: 2.0,
                    slope: vec![0.5, 0.0],
                },
            },
            schedule: vec![0.5, 0.375],
            batteries: vec![BatteryConfig {
                name: BatteryName::Harnack,
                params: Default::default(),
            }],
            output_dir: out,
            seed: 42,
            tolerances: Tolerances {
                mf_eps_points: 4,
                ..Default::default()
            },
        }
    }

    #[test]
    fn full_run_writes_expected_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let config = base_config(dir.path().join("out"));
        let outcome = run(&config).unwrap();
        for name in [
            "formbound.csv",
            "mollify.csv",
            "cauchy.csv",
            "approx.json",
            "u.bin",
            "harnack.csv",
            "manifest.json",
        ] {
            assert!(
                config.output_dir.join(name).exists(),
                "missing artifact {name}"
            );
        }
        let harnack = std::fs::read_to_string(config.output_dir.join("harnack.csv")).unwrap();
        let mut lines = harnack.lines();
        assert_eq!(lines.next().unwrap(), "center,big_r,harnack_c");
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        let quotient: f64 = first.last().unwrap().parse().unwrap();
        assert!(quotient >= 1.0);
        assert!(outcome.findings.is_empty(), "{:?}", outcome.findings);
    }

    #[test]
    fn identical_configs_give_byte_identical_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let mut c1 = base_config(dir.path().join("a"));
        c1.batteries = vec![BatteryConfig {
            name: BatteryName::All,
            params: Default::default(),
        }];
        let mut c2 = c1.clone();
        c2.output_dir = dir.path().join("b");
        run(&c1).unwrap();
        run(&c2).unwrap();
        let mut names: Vec<_> = std::fs::read_dir(&c1.output_dir)
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        names.sort();
        assert!(!names.is_empty());
        for name in names {
            let a = std::fs::read(c1.output_dir.join(&name)).unwrap();
            let b = std::fs::read(c2.output_dir.join(&name)).unwrap();
            assert_eq!(a, b, "artifact {name:?} differs between identical runs");
        }
    }

    #[test]
    fn hypothesis_gate_refuses_before_writing() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = base_config(dir.path().join("out"));
        config.domain.dimension = 3;
        config.coefficients.boundary = crate::approximation::BoundarySpec::Constant { value: 1.0 };
        config.coefficients.drift =
            DriftSpec::hardy_pair(0.8, 0.0, vec![0.0; 3], vec![0.4; 3]);
        let err = run(&config).unwrap_err();
        match err {
            Error::HypothesisViolated { nu_plus, two_sigma } => {
                assert!((nu_plus - 3.2).abs() < 1e-12);
                assert_eq!(two_sigma, 2.0);
            }
            other => panic!("expected refusal, got {other}"),
        }
        assert!(!config.output_dir.join("formbound.csv").exists());
    }

    #[test]
    fn emit_plots_writes_scripts_and_warns_on_empty() {
        let dir = tempfile::tempdir().unwrap();
        let config = base_config(dir.path().join("out"));
        run(&config).unwrap();
        let scripts = emit_plots(&config.output_dir).unwrap();
        assert!(!scripts.is_empty());
        assert!(config.output_dir.join("harnack_c.gnuplot").exists());
        let text =
            std::fs::read_to_string(config.output_dir.join("harnack_c.gnuplot")).unwrap();
        assert!(text.contains("set datafile separator ','"));

        let empty = tempfile::tempdir().unwrap();
        let scripts = emit_plots(empty.path()).unwrap();
        assert!(scripts.is_empty());
        assert!(emit_plots(&empty.path().join("missing")).is_err());
    }
}

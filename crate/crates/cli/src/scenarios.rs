//! One runner per scenario kind. Each writes its artifacts into the output
//! directory and returns the written file names plus a verdict.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use mvflow::coefficients::CoefficientModel;
use mvflow::error::{Error, Result};
use mvflow::lions::{check_flat_lions_relation, functional_by_name};
use mvflow::measures::{EmpiricalMeasure, Measure};
use mvflow::parametrix::{
    density_series, verify_derivative_scaling, verify_gaussian_bound, BoundSettings, ParametrixConfig, ProxySpec,
};
use mvflow::pde::{
    residual_check, source_constant, terminal_identity, terminal_second_moment, terminal_square, CauchyData,
    ResidualPoint, SolutionEvaluator, TerminalFn,
};
use mvflow::picard::{fitted_contraction_ratio, history_records, picard_solve, PicardConfig};
use mvflow::simulate::{chaos_convergence, euler_mv, SimConfig};
use serde::Serialize;

use crate::config::{
    DensitySection, LionsSection, PdeSection, PicardSection, ScenarioConfig, SimulateMode, SimulateSection, TerminalKind,
    VerifyCheck, VerifySection,
};
use crate::plot::{Series, SERIES_FILE};

/// What a scenario produced.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<String>,
    pub verified: Option<bool>,
    pub diagnostics: Vec<String>,
}

/// Settings that do not come from the config file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub verify_strict: bool,
    /// Replaces `parametrix.memory_budget_mb` when set.
    pub cache_mb: Option<usize>,
}

struct Writer<'a> {
    dir: &'a Path,
    files: Vec<String>,
    series: Vec<Series>,
}

impl<'a> Writer<'a> {
    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value).map_err(|e| Error::Usage(e.to_string()))?;
        fs::write(self.dir.join(name), text + "\n")?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn path(&mut self, name: &str) -> std::path::PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    fn finish(mut self, verified: Option<bool>, diagnostics: Vec<String>) -> Result<Outcome> {
        if !self.series.is_empty() {
            let series = std::mem::take(&mut self.series);
            self.json(SERIES_FILE, &series)?;
        }
        self.files.sort();
        Ok(Outcome {
            files: self.files,
            verified,
            diagnostics,
        })
    }
}

fn parametrix_cfg(cfg: &ScenarioConfig, opts: &RunOptions) -> ParametrixConfig {
    let mut p = cfg.parametrix.clone();
    if let Some(mb) = opts.cache_mb {
        p.memory_budget_mb = mb;
    }
    p
}

fn model_of(cfg: &ScenarioConfig) -> Result<Arc<dyn CoefficientModel>> {
    cfg.model
        .as_ref()
        .ok_or_else(|| Error::Usage("missing field `model`".into()))?
        .build()
}

pub fn run(cfg: &ScenarioConfig, dir: &Path, opts: &RunOptions) -> Result<Outcome> {
    let w = Writer {
        dir,
        files: Vec::new(),
        series: Vec::new(),
    };
    let seed = cfg.seed.unwrap_or(0);
    match cfg.scenario {
        crate::config::ScenarioKind::Density => density(cfg, cfg.density.as_ref().expect("validated"), w, opts),
        crate::config::ScenarioKind::Picard => picard(cfg, cfg.picard.as_ref().expect("validated"), seed, w),
        crate::config::ScenarioKind::Simulate => simulate(cfg, cfg.simulate.as_ref().expect("validated"), seed, w),
        crate::config::ScenarioKind::Pde => pde(cfg, cfg.pde.as_ref().expect("validated"), seed, w, opts),
        crate::config::ScenarioKind::Verify => verify(cfg, cfg.verify.as_ref().expect("validated"), w, opts),
        crate::config::ScenarioKind::Lions => lions(cfg.lions.as_ref().expect("validated"), w),
    }
}

fn fmt_point(x: &[f64]) -> String {
    let parts: Vec<String> = x.iter().map(|v| v.to_string()).collect();
    format!("({})", parts.join(", "))
}

fn density(cfg: &ScenarioConfig, sec: &DensitySection, mut w: Writer, opts: &RunOptions) -> Result<Outcome> {
    let model = model_of(cfg)?;
    let pcfg = parametrix_cfg(cfg, opts);
    if !(sec.t > sec.s) {
        return Err(Error::Usage("density needs t > s".into()));
    }
    let initial = match &sec.initial {
        Some(m) => m.build()?,
        None => Measure::dirac(&sec.x)?,
    };
    let picard = PicardConfig {
        start: sec.s,
        time_steps: sec.flow_steps,
        ..PicardConfig::new(initial, sec.t - sec.s)
    };
    let flow = Arc::new(picard_solve(model.as_ref(), &picard)?.flow);
    let spec = ProxySpec::new(model, flow, sec.s)?;
    let td = density_series(&spec, sec.t, &sec.x, &pcfg)?;
    td.write(&w.path("density.csv"))?;
    w.files.push("density.json".into());
    w.files.push("density.provenance.json".into());
    let mut diagnostics = Vec::new();
    if td.clipped_mass > 1e-3 {
        diagnostics.push(format!("clipped negative mass {:.3e}", td.clipped_mass));
    }
    if td.values.dim() == 1 {
        let rows = td.axis().iter().zip(td.values.values()).map(|(z, p)| vec![*z, *p]).collect();
        w.series.push(Series::new(
            "density",
            vec![
                format!("s={} t={} x={} K={}", sec.s, sec.t, fmt_point(&sec.x), pcfg.order),
                "z p(z)".into(),
            ],
            rows,
        ));
    }
    w.finish(None, diagnostics)
}

#[derive(Serialize)]
struct PicardResult {
    iterations: usize,
    final_distance: f64,
    ratios: Vec<f64>,
    fitted_ratio: Option<f64>,
    max_clip_mass: f64,
}

fn picard(cfg: &ScenarioConfig, sec: &PicardSection, seed: u64, mut w: Writer) -> Result<Outcome> {
    let model = model_of(cfg)?;
    let pc = PicardConfig {
        time_steps: sec.time_steps,
        nu: sec.nu.as_ref().map(|m| m.build()).transpose()?,
        backend: sec.backend.clone(),
        grid: sec.grid.clone(),
        cells: sec.cells,
        deposit_bandwidth: sec.deposit_bandwidth,
        tol: sec.tol,
        max_iters: sec.max_iters,
        seed,
        ..PicardConfig::new(sec.initial.build()?, sec.horizon)
    };
    let sol = picard_solve(model.as_ref(), &pc)?;
    let records = history_records(&sol.history);
    w.json("history.json", &records)?;
    if let Measure::Grid(g) = sol.flow.terminal() {
        mvflow::measures::io::write_grid(&w.path("terminal.csv"), g)?;
        w.files.push("terminal.json".into());
    }
    let ratios = sol.ratios().to_vec();
    let result = PicardResult {
        iterations: sol.history.len(),
        final_distance: sol.history.last().map_or(0.0, |s| s.distance_to_previous),
        fitted_ratio: fitted_contraction_ratio(&sol.history, 100.0 * sec.tol),
        max_clip_mass: sol.history.iter().map(|s| s.clip_mass).fold(0.0, f64::max),
        ratios: ratios.clone(),
    };
    w.json("result.json", &result)?;
    let mut diagnostics = Vec::new();
    if result.max_clip_mass > 1e-6 {
        diagnostics.push(format!("clipped negative mass {:.3e}", result.max_clip_mass));
    }
    w.series.push(Series::new(
        "ratios",
        vec!["iterate contraction_ratio".into()],
        ratios.iter().enumerate().map(|(i, r)| vec![(i + 2) as f64, *r]).collect(),
    ));
    w.series.push(Series::new(
        "distances",
        vec!["iterate distance_to_previous".into()],
        sol.distances().iter().enumerate().skip(1).map(|(i, d)| vec![i as f64, *d]).collect(),
    ));
    let verified = sec.expect_contraction.then(|| ratios.iter().all(|r| *r < 1.0));
    w.finish(verified, diagnostics)
}

#[derive(Serialize)]
struct Moments {
    times: Vec<f64>,
    mean: Vec<f64>,
    variance: Vec<f64>,
}

fn simulate(cfg: &ScenarioConfig, sec: &SimulateSection, seed: u64, mut w: Writer) -> Result<Outcome> {
    let model = model_of(cfg)?;
    let sim = SimConfig {
        particles: sec.particles,
        dt: sec.dt,
        horizon: sec.horizon,
        seed,
        record_every: sec.record_every,
        noise_refinement: sec.noise_refinement,
    };
    let mu0 = sec.initial.build_empirical()?;
    match sec.mode {
        SimulateMode::Paths => {
            let run = euler_mv(model.as_ref(), &mu0, &sim)?;
            run.write_binary(&w.path("ensemble.bin"))?;
            mvflow::measures::io::write_empirical(&w.path("terminal.csv"), &run.terminal()?)?;
            let mut m = Moments {
                times: run.times().to_vec(),
                mean: Vec::new(),
                variance: Vec::new(),
            };
            for k in 0..run.times().len() {
                let law = run.law(k)?;
                m.mean.push(law.mean()[0]);
                m.variance.push(law.variance()[0]);
            }
            w.series.push(Series::new(
                "variance",
                vec!["t variance (first coordinate)".into()],
                m.times.iter().zip(&m.variance).map(|(t, v)| vec![*t, *v]).collect(),
            ));
            w.series.push(Series::new(
                "mean",
                vec!["t mean (first coordinate)".into()],
                m.times.iter().zip(&m.mean).map(|(t, v)| vec![*t, *v]).collect(),
            ));
            w.json("moments.json", &m)?;
            w.finish(None, Vec::new())
        }
        SimulateMode::Chaos => {
            let reference = euler_mv(
                model.as_ref(),
                &mu0,
                &SimConfig {
                    particles: sec.reference_particles,
                    seed: seed ^ 0x9e37_79b9_7f4a_7c15,
                    ..sim.clone()
                },
            )?;
            let table = chaos_convergence(model.as_ref(), &mu0, &sec.counts, &Measure::Empirical(reference.terminal()?), &sim)?;
            w.json("chaos.json", &table)?;
            w.series.push(Series::new(
                "chaos",
                vec![format!("N W2 (reference N={})", sec.reference_particles)],
                table.rows.iter().map(|r| vec![r.particles as f64, r.w2]).collect(),
            ));
            w.finish(Some(table.acceptable()), Vec::new())
        }
    }
}

fn terminal_fn(kind: TerminalKind) -> TerminalFn {
    match kind {
        TerminalKind::Zero => Arc::new(|_, _| 0.0),
        TerminalKind::Identity => terminal_identity(),
        TerminalKind::Square => terminal_square(),
        TerminalKind::SecondMoment => terminal_second_moment(),
    }
}

#[derive(Serialize)]
struct UValue {
    t: f64,
    x: f64,
    value: f64,
    error: f64,
}

fn pde(cfg: &ScenarioConfig, sec: &PdeSection, seed: u64, mut w: Writer, opts: &RunOptions) -> Result<Outcome> {
    let model = model_of(cfg)?;
    let source = (sec.source != 0.0).then(|| source_constant(sec.source));
    let data = CauchyData::new("config", sec.horizon, source, terminal_fn(sec.terminal))?;
    let mut method = sec.method.clone();
    match &mut method {
        mvflow::pde::Method::ParametrixQuadrature { parametrix, .. } => {
            if let Some(mb) = opts.cache_mb {
                parametrix.memory_budget_mb = mb;
            }
        }
        mvflow::pde::Method::MonteCarlo { sim } => sim.seed = seed,
    }
    let mut ev = SolutionEvaluator::new(model, data, method);
    ev.picard.time_steps = sec.flow_steps;
    let mu = sec.mu.build()?;
    let mut values = Vec::with_capacity(sec.points.len());
    for [t, x] in &sec.points {
        let u = ev.value(*t, &[*x], &mu)?;
        values.push(UValue {
            t: *t,
            x: *x,
            value: u.value,
            error: u.error,
        });
    }
    w.json("values.json", &values)?;
    let mut order: Vec<&UValue> = values.iter().collect();
    order.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.x.total_cmp(&b.x)));
    w.series.push(Series::new(
        "solution",
        vec!["x U(t, x, mu) error t".into()],
        order.iter().map(|u| vec![u.x, u.value, u.error, u.t]).collect(),
    ));
    let mut verified = None;
    if sec.residual {
        let cloud = sec.mu.build_empirical()?;
        let points: Vec<ResidualPoint> = sec
            .points
            .iter()
            .map(|[t, x]| ResidualPoint {
                t: *t,
                x: vec![*x],
                mu: cloud.clone(),
            })
            .collect();
        let report = residual_check(&ev, &points, &sec.fd)?;
        w.json("residual.json", &report)?;
        verified = sec.residual_tol.map(|tol| report.max <= tol);
    }
    w.finish(verified, Vec::new())
}

#[derive(Serialize)]
struct VerifyResult {
    #[serde(skip_serializing_if = "Option::is_none")]
    gaussian_bound: Option<mvflow::parametrix::GaussianBoundReport>,
    scaling: Vec<mvflow::parametrix::ScalingReport>,
}

fn verify(cfg: &ScenarioConfig, sec: &VerifySection, mut w: Writer, opts: &RunOptions) -> Result<Outcome> {
    let model = model_of(cfg)?;
    let pcfg = parametrix_cfg(cfg, opts);
    let spec = ProxySpec::with_fixed_law(model, sec.law.build()?, 0.0, sec.horizon)?;
    let mut result = VerifyResult {
        gaussian_bound: None,
        scaling: Vec::new(),
    };
    let mut ok = true;
    if sec.checks.contains(&VerifyCheck::GaussianBound) {
        let raw = pcfg.raw();
        let densities = sec
            .bound_taus
            .iter()
            .map(|t| density_series(&spec, *t, &[sec.x], &raw))
            .collect::<Result<Vec<_>>>()?;
        let report = verify_gaussian_bound(&densities, &sec.c_grid, BoundSettings::new(sec.drift_sup, sec.eta))?;
        ok &= report.passed;
        result.gaussian_bound = Some(report);
    }
    if sec.checks.contains(&VerifyCheck::DerivativeScaling) {
        for n in &sec.orders {
            let r = verify_derivative_scaling(&spec, &pcfg, *n, &sec.scaling_taus, sec.x)?;
            ok &= r.within_band;
            w.series.push(Series::new(
                &format!("scaling_n{n}"),
                vec![format!("t-s sup|d^{n} p / g| slope={:.4}", r.slope)],
                r.taus.iter().zip(&r.sups).map(|(t, s)| vec![*t, *s]).collect(),
            ));
            result.scaling.push(r);
        }
    }
    w.json("verify.json", &result)?;
    w.finish(Some(ok), Vec::new())
}

fn lions(sec: &LionsSection, mut w: Writer) -> Result<Outcome> {
    let h = functional_by_name(&sec.functional)?;
    let mu = EmpiricalMeasure::uniform(1, sec.points.clone())?;
    let ys: Vec<Vec<f64>> = sec.ys.iter().map(|y| vec![*y]).collect();
    let report = check_flat_lions_relation(h.as_ref(), &mu, &ys)?;
    w.json("lions.json", &report)?;
    w.series.push(Series::new(
        "relation",
        vec![format!("y |lions - d_y flat| for {}", sec.functional)],
        sec.ys.iter().zip(&report.errors).map(|(y, e)| vec![*y, *e]).collect(),
    ));
    w.finish(Some(report.max_abs_error <= sec.tol), Vec::new())
}

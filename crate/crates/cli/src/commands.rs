//! Stage implementations. Each validates its inputs first (usage errors),
//! stops there under `--validate`, then writes through a [`Staging`] area.

use crate::config::{MethodArg, PipelineConfig};
use crate::staging::Staging;
use anyhow::{anyhow, Context};
use rand::{Rng, SeedableRng};
use std::path::{Path, PathBuf};
use t2fe::fem::{solve_static, FEModel};
use t2fe::fixture;
use t2fe::io::{self, ModelFile};
use t2fe::material::LinearRelation;
use t2fe::mesh::{ApplyPose, HexMesh, RigidTransform, NATURAL_CORNERS};
use t2fe::par::{map_indexed, Execution};
use t2fe::raster::{self, smooth_anisotropic_diffusion, FitOptions, VoxelGrid};
use t2fe::sensitivity::{run_study, StudyReport};
use t2fe::transfer::clip::Aabb;
use t2fe::transfer::{
    agreement, assign_nearest_neighbor, assign_volume_weighted, hex_box_overlap_volume, sample_overlap_volume,
    texture_stats, ElementField, FieldUnit, TransferOptions,
};
use t2fe::Vec3;

pub struct Failure {
    pub code: u8,
    pub stage: &'static str,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn usage(stage: &'static str, error: impl Into<anyhow::Error>) -> Self {
        Self { code: 2, stage, error: error.into() }
    }

    pub fn runtime(stage: &'static str, error: impl Into<anyhow::Error>) -> Self {
        Self { code: 1, stage, error: error.into() }
    }
}

pub struct Ctx {
    pub cfg: PipelineConfig,
    pub exec: Execution,
    pub validate_only: bool,
}

type Outcome = Result<String, Failure>;

trait OrFail<T> {
    fn usage(self, stage: &'static str) -> Result<T, Failure>;
    fn runtime(self, stage: &'static str) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> OrFail<T> for Result<T, E> {
    fn usage(self, stage: &'static str) -> Result<T, Failure> {
        self.map_err(|e| Failure::usage(stage, e))
    }
    fn runtime(self, stage: &'static str) -> Result<T, Failure> {
        self.map_err(|e| Failure::runtime(stage, e))
    }
}

fn require_file(stage: &'static str, path: &Path) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::usage(stage, anyhow!("{}: input file not found", path.display())))
    }
}

fn require_volume(stage: &'static str, path: &Path) -> Result<(), Failure> {
    require_file(stage, path)?;
    require_file(stage, &io::raw_path(path))
}

fn validated(ctx: &Ctx, stage: &'static str) -> Option<Outcome> {
    ctx.validate_only.then(|| Ok(format!("{stage}: config and inputs are valid")))
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

impl Ctx {
    fn out(&self, name: &str) -> PathBuf {
        self.cfg.out.join(name)
    }

    fn t2_volume(&self) -> PathBuf {
        self.cfg.t2_volume.clone().unwrap_or_else(|| self.out("t2.json"))
    }

    fn element_t2(&self, method: MethodArg) -> PathBuf {
        self.out(&format!("t2_elements_{}.csv", method.label()))
    }

    fn model_file(&self, stage: &'static str) -> Result<(ModelFile, PathBuf), Failure> {
        let path = self.cfg.model.clone().ok_or_else(|| Failure::usage(stage, anyhow!("config has no model")))?;
        require_file(stage, &path)?;
        let file = io::read_model_file(&path).usage(stage)?;
        require_file(stage, &file.mesh_path(&path))?;
        Ok((file, path))
    }

    fn mesh_path(&self, stage: &'static str) -> Result<PathBuf, Failure> {
        let path = match &self.cfg.mesh {
            Some(p) => p.clone(),
            None => {
                let (file, model) = self.model_file(stage)?;
                file.mesh_path(&model)
            }
        };
        require_file(stage, &path)?;
        Ok(path)
    }

    fn check_smoothing(&self, stage: &'static str) -> Result<(), Failure> {
        let s = &self.cfg.smooth;
        if !(s.time_step > 0.0 && s.time_step <= 0.25) || s.conductance.is_nan() || s.conductance <= 0.0 {
            return Err(Failure::usage(stage, anyhow!("smoothing needs time_step in (0, 0.25] and conductance > 0")));
        }
        Ok(())
    }

    fn check_relation(&self, stage: &'static str) -> Result<(), Failure> {
        self.cfg.relation.validate().usage(stage)
    }

    /// T₂ volume for assignment, smoothed when configured.
    fn prepared_volume(&self, stage: &'static str, path: &Path) -> Result<VoxelGrid, Failure> {
        let (grid, _) = io::read_volume(path).runtime(stage)?;
        if !self.cfg.smooth.enabled {
            return Ok(grid);
        }
        let params = t2fe::raster::DiffusionParams { execution: self.exec, ..self.cfg.diffusion() };
        smooth_anisotropic_diffusion(&grid, &params).with_context(|| display(path)).runtime(stage)
    }

    fn posed_mesh(&self, stage: &'static str, mesh_path: &Path) -> Result<HexMesh, Failure> {
        let mesh = io::read_mesh(mesh_path).runtime(stage)?;
        match &self.cfg.transform {
            None => Ok(mesh),
            Some(p) => {
                let t: RigidTransform = io::read_json(p).runtime(stage)?;
                Ok(mesh.apply_pose(&t))
            }
        }
    }

    fn assign_field(&self, stage: &'static str, mesh: &HexMesh, grid: &VoxelGrid, method: MethodArg) -> Result<(ElementField, usize), Failure> {
        let a = match method {
            MethodArg::Nn => assign_nearest_neighbor(mesh, grid, self.exec),
            MethodArg::Weighted => {
                let opts = TransferOptions { coverage_floor: self.cfg.assign.coverage_floor, execution: self.exec };
                assign_volume_weighted(mesh, grid, &opts)
            }
        }
        .runtime(stage)?;
        Ok((a.field, a.fallbacks))
    }
}

pub fn fit_t2(ctx: &Ctx) -> Outcome {
    const STAGE: &str = "fit-t2";
    if ctx.cfg.echoes.len() < 3 {
        return Err(Failure::usage(STAGE, anyhow!("config lists {} echo volumes; at least 3 are needed", ctx.cfg.echoes.len())));
    }
    for p in &ctx.cfg.echoes {
        require_volume(STAGE, p)?;
    }
    if let Some(done) = validated(ctx, STAGE) {
        return done;
    }
    let series = io::read_echo_series(&ctx.cfg.echoes).runtime(STAGE)?;
    let opts = FitOptions {
        drop_first_echo: ctx.cfg.fit.drop_first_echo,
        nonlinear_refinement: ctx.cfg.fit.nonlinear_refinement,
        execution: ctx.exec,
    };
    let fit = raster::fit_t2(&series, &opts).runtime(STAGE)?;
    let staging = Staging::new(&ctx.cfg.out, STAGE).runtime(STAGE)?;
    io::write_volume(&staging.path("t2.json"), &fit.t2, None).runtime(STAGE)?;
    io::write_volume(&staging.path("s0.json"), &fit.s0, None).runtime(STAGE)?;
    let target = staging.final_path("t2.json");
    staging.commit().runtime(STAGE)?;
    Ok(format!(
        "fit-t2: {} echoes, {} voxels, {} invalid -> {}",
        series.echo_times().len(),
        fit.t2.len(),
        fit.invalid_count,
        display(&target)
    ))
}

pub fn smooth(ctx: &Ctx) -> Outcome {
    const STAGE: &str = "smooth";
    let input = ctx.t2_volume();
    require_volume(STAGE, &input)?;
    ctx.check_smoothing(STAGE)?;
    if let Some(done) = validated(ctx, STAGE) {
        return done;
    }
    let (grid, _) = io::read_volume(&input).runtime(STAGE)?;
    let params = t2fe::raster::DiffusionParams { execution: ctx.exec, ..ctx.cfg.diffusion() };
    let smoothed = smooth_anisotropic_diffusion(&grid, &params).runtime(STAGE)?;
    let staging = Staging::new(&ctx.cfg.out, STAGE).runtime(STAGE)?;
    io::write_volume(&staging.path("t2_smooth.json"), &smoothed, None).runtime(STAGE)?;
    let target = staging.final_path("t2_smooth.json");
    staging.commit().runtime(STAGE)?;
    Ok(format!("smooth: {} iterations on {} voxels -> {}", params.iterations, grid.len(), display(&target)))
}

pub fn assign(ctx: &Ctx) -> Outcome {
    const STAGE: &str = "assign";
    let input = ctx.t2_volume();
    require_volume(STAGE, &input)?;
    let mesh_path = ctx.mesh_path(STAGE)?;
    if let Some(t) = &ctx.cfg.transform {
        require_file(STAGE, t)?;
    }
    ctx.check_smoothing(STAGE)?;
    if let Some(done) = validated(ctx, STAGE) {
        return done;
    }
    let method = ctx.cfg.assign.method;
    let grid = ctx.prepared_volume(STAGE, &input)?;
    let mesh = ctx.posed_mesh(STAGE, &mesh_path)?;
    let (field, fallbacks) = ctx.assign_field(STAGE, &mesh, &grid, method)?;
    let texture = texture_stats(&mesh, &field, &[]).runtime(STAGE)?;

    let staging = Staging::new(&ctx.cfg.out, STAGE).runtime(STAGE)?;
    let name = format!("t2_elements_{}.csv", method.label());
    io::write_field(&staging.path(&name), &field).runtime(STAGE)?;
    io::write_key_values(
        &staging.path(&format!("texture_{}.csv", method.label())),
        &[("roughness_ms", texture.roughness), ("rms_ms", texture.rms), ("elements", texture.count as f64)],
    )
    .runtime(STAGE)?;
    let other = ctx.element_t2(method.other());
    let mut summary = format!(
        "assign: {} elements by {} (fallbacks {fallbacks}), roughness {:.3} ms -> {}",
        field.len(),
        method.label(),
        texture.roughness,
        display(&staging.final_path(&name))
    );
    if other.is_file() {
        let previous = io::read_field(&other, FieldUnit::Ms).runtime(STAGE)?;
        let (weighted, nn) = match method {
            MethodArg::Weighted => (&field, &previous),
            MethodArg::Nn => (&previous, &field),
        };
        let a = agreement(weighted, nn).with_context(|| display(&other)).runtime(STAGE)?;
        io::write_key_values(
            &staging.path("agreement.csv"),
            &[
                ("n", a.n as f64),
                ("bias_ms", a.bias),
                ("sd_ms", a.sd),
                ("loa_low_ms", a.loa_low),
                ("loa_high_ms", a.loa_high),
                ("slope", a.slope),
                ("intercept_ms", a.intercept),
                ("r_squared", a.r_squared),
            ],
        )
        .runtime(STAGE)?;
        summary += &format!("; agreement (weighted - nn) bias {:.3} ms, LoA [{:.3}, {:.3}]", a.bias, a.loa_low, a.loa_high);
    }
    staging.commit().runtime(STAGE)?;
    Ok(summary)
}

pub fn relate(ctx: &Ctx) -> Outcome {
    const STAGE: &str = "relate";
    let input = ctx.element_t2(ctx.cfg.assign.method);
    require_file(STAGE, &input)?;
    ctx.check_relation(STAGE)?;
    if let Some(done) = validated(ctx, STAGE) {
        return done;
    }
    let t2 = io::read_field(&input, FieldUnit::Ms).runtime(STAGE)?;
    let rel = &ctx.cfg.relation;
    let modulus = t2.map(FieldUnit::Pa, |t| rel.e_d_from_t2(t));
    let staging = Staging::new(&ctx.cfg.out, STAGE).runtime(STAGE)?;
    io::write_field(&staging.path("modulus.csv"), &modulus).runtime(STAGE)?;
    io::write_relation(&staging.path("relation.json"), rel).runtime(STAGE)?;
    let target = staging.final_path("modulus.csv");
    staging.commit().runtime(STAGE)?;
    let (lo, hi) = modulus.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    Ok(format!("relate: {} elements, E_D {:.3}..{:.3} MPa -> {}", modulus.len(), lo / 1e6, hi / 1e6, display(&target)))
}

fn fraction_tag(f: f64) -> String {
    format!("{f:+.4}")
}

pub fn perturb(ctx: &Ctx) -> Outcome {
    const STAGE: &str = "perturb";
    ctx.check_relation(STAGE)?;
    ctx.cfg.study.validate().usage(STAGE)?;
    let family = ctx.cfg.study.family;
    let relations: Vec<(f64, LinearRelation)> = ctx
        .cfg
        .study
        .fractions
        .iter()
        .map(|&f| family.apply(&ctx.cfg.relation, f).map(|r| (f, r)))
        .collect::<Result<_, _>>()
        .usage(STAGE)?;
    let t2_path = ctx.element_t2(ctx.cfg.assign.method);
    if let Some(done) = validated(ctx, STAGE) {
        return done;
    }
    let t2 = if t2_path.is_file() { Some(io::read_field(&t2_path, FieldUnit::Ms).runtime(STAGE)?) } else { None };
    let staging = Staging::new(&ctx.cfg.out, STAGE).runtime(STAGE)?;
    let dir = staging.subdir("perturb").runtime(STAGE)?;
    for (f, rel) in &relations {
        let tag = format!("{}_f{}", family.label(), fraction_tag(*f));
        io::write_relation(&dir.join(format!("relation_{tag}.json")), rel).runtime(STAGE)?;
        if let Some(t2) = &t2 {
            let modulus = t2.map(FieldUnit::Pa, |t| rel.e_d_from_t2(t));
            io::write_field(&dir.join(format!("modulus_{tag}.csv")), &modulus).runtime(STAGE)?;
        }
    }
    let target = staging.final_path("perturb");
    staging.commit().runtime(STAGE)?;
    Ok(format!(
        "perturb: {} {} relations{} -> {}",
        relations.len(),
        family.label(),
        if t2.is_some() { " with moduli" } else { "" },
        display(&target)
    ))
}

pub fn solve(ctx: &Ctx) -> Outcome {
    const STAGE: &str = "solve";
    let (file, model_path) = ctx.model_file(STAGE)?;
    let modulus_path = file.modulus_path(&model_path).unwrap_or_else(|| ctx.out("modulus.csv"));
    require_file(STAGE, &modulus_path)?;
    if let Some(done) = validated(ctx, STAGE) {
        return done;
    }
    let mesh = io::read_mesh(&file.mesh_path(&model_path)).runtime(STAGE)?;
    let modulus = io::read_field(&modulus_path, FieldUnit::Pa).runtime(STAGE)?;
    let fail = |msg: String| Failure::runtime(STAGE, anyhow!("{}: {msg}", display(&model_path)));
    let materials = file.materials(&mesh, Some(&modulus)).map_err(fail)?;
    let boundary = file.boundary(&mesh).map_err(fail)?;
    let model = FEModel::new(mesh, materials, boundary, file.steps.clone()).map_err(|e| fail(e.to_string()))?;
    let state = solve_static(&model, &ctx.cfg.study.solver).runtime(STAGE)?;
    let staging = Staging::new(&ctx.cfg.out, STAGE).runtime(STAGE)?;
    let dir = staging.subdir("solution").runtime(STAGE)?;
    io::write_solution(&dir, &state).runtime(STAGE)?;
    let target = staging.final_path("solution");
    staging.commit().runtime(STAGE)?;
    let last = state.steps.last().expect("schedule has steps");
    let p3 = last.stress_principal().iter().map(|p| p.p3).fold(f64::INFINITY, f64::min);
    let iterations: usize = state.steps.iter().map(|s| s.diagnostics.iterations).sum();
    Ok(format!(
        "solve: {} steps, {iterations} Newton iterations, min p3 at t = {} is {:.4} MPa -> {}",
        state.steps.len(),
        last.time,
        p3 / 1e6,
        display(&target)
    ))
}

pub fn study(ctx: &Ctx) -> Outcome {
    const STAGE: &str = "study";
    let (file, model_path) = ctx.model_file(STAGE)?;
    let use_volume = ctx.cfg.t2_volume.is_some() || ctx.cfg.echoes.is_empty();
    if use_volume {
        require_volume(STAGE, &ctx.t2_volume())?;
    } else {
        for p in &ctx.cfg.echoes {
            require_volume(STAGE, p)?;
        }
    }
    let mesh_path = ctx.mesh_path(STAGE)?;
    if let Some(t) = &ctx.cfg.transform {
        require_file(STAGE, t)?;
    }
    ctx.check_smoothing(STAGE)?;
    ctx.check_relation(STAGE)?;
    ctx.cfg.study.validate().usage(STAGE)?;
    for m in &ctx.cfg.study.markers {
        if file.steps.step_of_marker(m).is_none() {
            return Err(Failure::usage(STAGE, anyhow!("{}: unknown marker '{m}'", display(&model_path))));
        }
    }
    if let Some(done) = validated(ctx, STAGE) {
        return done;
    }

    let grid = if use_volume {
        ctx.prepared_volume(STAGE, &ctx.t2_volume())?
    } else {
        let series = io::read_echo_series(&ctx.cfg.echoes).runtime(STAGE)?;
        let opts = FitOptions {
            drop_first_echo: ctx.cfg.fit.drop_first_echo,
            nonlinear_refinement: ctx.cfg.fit.nonlinear_refinement,
            execution: ctx.exec,
        };
        let t2 = raster::fit_t2(&series, &opts).runtime(STAGE)?.t2;
        if ctx.cfg.smooth.enabled {
            let params = t2fe::raster::DiffusionParams { execution: ctx.exec, ..ctx.cfg.diffusion() };
            smooth_anisotropic_diffusion(&t2, &params).runtime(STAGE)?
        } else {
            t2
        }
    };
    let posed = ctx.posed_mesh(STAGE, &mesh_path)?;
    let (t2, _) = ctx.assign_field(STAGE, &posed, &grid, ctx.cfg.assign.method)?;
    let model = file.build(&model_path, false).runtime(STAGE)?;
    if model.mesh.element_count() != t2.len() {
        return Err(Failure::runtime(
            STAGE,
            anyhow!("assignment mesh has {} elements but the model has {}", t2.len(), model.mesh.element_count()),
        ));
    }
    let report = run_study(&model, &t2, &ctx.cfg.relation, &ctx.cfg.study).runtime(STAGE)?;
    for w in &report.warnings {
        eprintln!("warning: study: {w}");
    }
    let staging = Staging::new(&ctx.cfg.out, STAGE).runtime(STAGE)?;
    let dir = staging.subdir("study").runtime(STAGE)?;
    io::write_field(&dir.join("t2_elements.csv"), &t2).runtime(STAGE)?;
    let files = io::write_report(&dir, &report).runtime(STAGE)?;
    let target = staging.final_path("study");
    staging.commit().runtime(STAGE)?;
    Ok(format!(
        "study: {} family, {} fractions x {} markers x {} metrics, {} failed fractions, {} files -> {}",
        report.family.label(),
        report.fractions.len(),
        report.markers.len(),
        report.metrics.len(),
        report.failures.len(),
        files.len() + 1,
        display(&target)
    ))
}

pub fn report(ctx: &Ctx) -> Outcome {
    const STAGE: &str = "report";
    let input = ctx.out("study").join("report.json");
    require_file(STAGE, &input)?;
    if let Some(done) = validated(ctx, STAGE) {
        return done;
    }
    let report: StudyReport = io::read_json(&input).runtime(STAGE)?;
    let staging = Staging::new(&ctx.cfg.out, STAGE).runtime(STAGE)?;
    let dir = staging.subdir("report").runtime(STAGE)?;
    let files = io::write_report(&dir, &report).runtime(STAGE)?;
    let target = staging.final_path("report");
    staging.commit().runtime(STAGE)?;
    let largest = report
        .rows
        .iter()
        .filter_map(|r| r.percent_change.map(|p| (p, r)))
        .max_by(|a, b| a.0.abs().total_cmp(&b.0.abs()));
    let headline = match largest {
        Some((p, r)) => format!("largest change {p:+.2}% ({} at {}, f = {})", r.metric.label(), r.marker, r.fraction),
        None => "no percent changes".to_string(),
    };
    Ok(format!("report: {} files, {headline} -> {}", files.len(), display(&target)))
}

pub fn demo(ctx: &Ctx) -> Outcome {
    const STAGE: &str = "demo";
    if let Some(done) = validated(ctx, STAGE) {
        return done;
    }
    let out = &ctx.cfg.out;
    let staging = Staging::new(out, STAGE).runtime(STAGE)?;
    let t2 = fixture::demo_t2_grid(fixture::DEMO_SEED);
    let series = fixture::echo_series_from_t2(&t2, &fixture::DEMO_ECHO_TIMES_MS, fixture::DEMO_S0);
    let mut echoes = Vec::new();
    for (i, (g, &te)) in series.grids().iter().zip(series.echo_times()).enumerate() {
        let name = format!("echo_{i:02}.json");
        io::write_volume(&staging.path(&name), g, Some(te)).runtime(STAGE)?;
        echoes.push(PathBuf::from(name));
    }
    io::write_volume(&staging.path("t2.json"), &t2, None).runtime(STAGE)?;
    io::write_mesh(&staging.path("mesh.json"), &fixture::demo_mesh()).runtime(STAGE)?;
    io::write_json(&staging.path("transform.json"), &RigidTransform::identity()).runtime(STAGE)?;
    io::write_json(&staging.path("model.json"), &fixture::demo_model_file()).runtime(STAGE)?;
    let config = PipelineConfig {
        out: PathBuf::from("out"),
        echoes,
        t2_volume: Some(PathBuf::from("t2.json")),
        mesh: Some(PathBuf::from("mesh.json")),
        transform: Some(PathBuf::from("transform.json")),
        model: Some(PathBuf::from("model.json")),
        ..PipelineConfig::default()
    };
    io::write_json(&staging.path("config.json"), &config).runtime(STAGE)?;
    staging.commit().runtime(STAGE)?;
    Ok(format!("demo: {} elements, {} voxels, {} echoes -> {}", fixture::demo_mesh().element_count(), t2.len(), series.echo_times().len(), display(out)))
}

pub fn check_overlap(ctx: &Ctx, pairs: usize, samples: usize, seed: u64) -> Outcome {
    const STAGE: &str = "check-overlap";
    if pairs == 0 || samples == 0 {
        return Err(Failure::usage(STAGE, anyhow!("--pairs and --samples must be positive")));
    }
    if let Some(done) = validated(ctx, STAGE) {
        return done;
    }
    let rows = map_indexed(pairs, ctx.exec, |i| {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003).wrapping_add(i as u64));
        let hex = NATURAL_CORNERS.map(|c| Vec3::from(c) * 0.5 + Vec3::from_fn(|_, _| rng.random_range(-0.1..0.1)));
        let lo = Vec3::from_fn(|_, _| rng.random_range(-0.9..0.3));
        let bx = Aabb::new(lo, lo + Vec3::from_fn(|_, _| rng.random_range(0.2..1.2)));
        let exact = hex_box_overlap_volume(&hex, &bx).map_err(|e| anyhow!("pair {i}: {e}"))?;
        let (estimate, se) = sample_overlap_volume(&hex, &bx, samples, rng.random());
        Ok::<_, anyhow::Error>((exact, estimate, se))
    });
    let rows: Vec<(f64, f64, f64)> = rows.into_iter().collect::<Result<_, _>>().runtime(STAGE)?;
    let within = rows.iter().filter(|(x, e, se)| (x - e).abs() <= 3.0 * se + 1e-12).count();
    let staging = Staging::new(&ctx.cfg.out, STAGE).runtime(STAGE)?;
    let mut table = String::from("pair,exact,estimate,standard_error\n");
    for (i, (x, e, se)) in rows.iter().enumerate() {
        table += &format!("{i},{x},{e},{se}\n");
    }
    let path = staging.path("overlap_check.csv");
    std::fs::write(&path, table).with_context(|| display(&path)).runtime(STAGE)?;
    staging.commit().runtime(STAGE)?;
    let share = within as f64 / pairs as f64;
    let detail = format!("{within}/{pairs} pairs within 3 SE ({samples} samples, seed {seed})");
    if share >= 0.99 {
        Ok(format!("{STAGE}: {detail}"))
    } else {
        Err(Failure::runtime(STAGE, anyhow!("{detail}; expected at least 99%")))
    }
}

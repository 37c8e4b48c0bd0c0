use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use pmloss_core::alignment::{icp, umeyama};
use pmloss_core::io::{read_camera, read_pfm, read_ply, write_ply};
use pmloss_core::loss::{align_pointmap, chamfer_sd, one_to_one_loss, pm_loss, LossWeights};
use pmloss_core::synthetic::{
    correspondence_fixture, generate, run_toy_optimization, LossKind, SceneBundle, SceneSpec,
    ToyConfig,
};
use pmloss_core::{evaluate, PlyFormat, SpatialIndex};

use crate::error::{CliError, IO, SHAPE};
use crate::output::{sig12, Report};
use crate::{AlignMethod, ChamferMode, OptimizeLoss, PlyEncoding};

fn emit(report: &Report) {
    print!("{}", report.as_str());
}

fn read_cloud(path: &Path) -> Result<pmloss_core::PointCloud, CliError> {
    read_ply(path).map_err(|e| CliError::from(e).context(path.display()))
}

pub fn unproject(
    depth: &Path,
    camera: &Path,
    out: &Path,
    format: PlyEncoding,
) -> Result<(), CliError> {
    let d = read_pfm(depth).map_err(|e| CliError::from(e).context(depth.display()))?;
    let cam = read_camera(camera).map_err(|e| CliError::from(e).context(camera.display()))?;
    let cloud = pmloss_core::unproject(&d, &cam)?;
    let format = match format {
        PlyEncoding::Ascii => PlyFormat::Ascii,
        PlyEncoding::Binary => PlyFormat::BinaryLittleEndian,
    };
    // PLY has no validity channel, so only valid points are written.
    write_ply(&cloud.compacted(), out, format)?;
    emit(
        Report::default()
            .line("points", cloud.len())
            .line("valid_points", cloud.valid_count()),
    );
    Ok(())
}

pub fn align(
    source: &Path,
    target: &Path,
    method: AlignMethod,
    out: Option<&Path>,
    max_iters: usize,
    rel_tol: f64,
) -> Result<(), CliError> {
    let src = read_cloud(source)?;
    let dst = read_cloud(target)?;
    let start = Instant::now();
    let fit = match method {
        AlignMethod::Umeyama => umeyama(&src, &dst)?,
        AlignMethod::Icp => icp(&src, &dst, max_iters, rel_tol)?,
    };
    let elapsed = start.elapsed().as_secs_f64() * 1e3;
    let t = &fit.transform;
    let r = t.rotation();
    let rotation: Vec<String> = r.m.iter().flatten().map(|v| v.to_string()).collect();
    let tr = t.translation();
    let mut report = Report::default();
    report
        .line("scale", t.scale())
        .line("rotation", rotation.join(" "))
        .line("translation", format!("{} {} {}", tr.x, tr.y, tr.z))
        .line("rms_residual", fit.rms_residual)
        .line("iterations", fit.iterations)
        .line("used_count", fit.used_count)
        .line("elapsed_ms", elapsed);
    if let Some(path) = out {
        fs::write(path, report.as_str())?;
    }
    emit(&report);
    Ok(())
}

pub fn chamfer(
    pred: &Path,
    reference: &Path,
    align: bool,
    mode: ChamferMode,
) -> Result<(), CliError> {
    let pred = read_cloud(pred)?;
    let reference = read_cloud(reference)?;
    let value = match (mode, align) {
        (ChamferMode::Sd, true) => pm_loss(&pred, &reference)?.0.value,
        (ChamferMode::Sd, false) => {
            let index = SpatialIndex::with_default_leaf(&reference)?;
            chamfer_sd(&pred, &index)?.value
        }
        (ChamferMode::One2one, true) => {
            let (aligned, _) = align_pointmap(&pred, &reference)?;
            one_to_one_loss(&pred, &aligned)?.value
        }
        (ChamferMode::One2one, false) => one_to_one_loss(&pred, &reference)?.value,
    };
    emit(Report::default().line("loss", sig12(value)));
    Ok(())
}

pub fn eval(pred: &Path, gt: &Path) -> Result<(), CliError> {
    let m = evaluate(&read_cloud(pred)?, &read_cloud(gt)?)?;
    let mut report = Report::default();
    for (k, v) in m.fields() {
        report.line(k, sig12(v));
    }
    emit(&report);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn optimize(
    scene: &Path,
    loss: OptimizeLoss,
    steps: usize,
    lr: f64,
    lambda_pm: f64,
    lambda_render: f64,
    trace_path: &Path,
) -> Result<(), CliError> {
    if steps == 0 || !(lr > 0.0) {
        return Err(CliError::new(SHAPE, "need --steps >= 1 and --lr > 0"));
    }
    if !(lambda_pm >= 0.0 && lambda_render >= 0.0) {
        return Err(CliError::new(SHAPE, "loss weights must be non-negative"));
    }
    let bundle = SceneBundle::load(scene)?;
    let cfg = ToyConfig {
        loss: match loss {
            OptimizeLoss::Pm3d => LossKind::Pm3d,
            OptimizeLoss::One2one => LossKind::OneToOne2d,
            OptimizeLoss::None => LossKind::None,
        },
        steps,
        lr,
        weights: LossWeights {
            lambda_pm,
            lambda_render,
        },
    };
    let trace = run_toy_optimization(&bundle, &cfg)?;
    let mut csv = String::from("step,loss,gt_overall\n");
    for row in &trace {
        csv.push_str(&format!("{},{},{}\n", row.step, row.loss, row.gt_overall));
    }
    fs::File::create(trace_path)?.write_all(csv.as_bytes())?;
    let (first, last) = (trace[0], trace[trace.len() - 1]);
    emit(
        Report::default()
            .line("steps", steps)
            .line("initial_gt_overall", sig12(first.gt_overall))
            .line("final_gt_overall", sig12(last.gt_overall))
            .line("final_loss", sig12(last.loss)),
    );
    Ok(())
}

pub fn gen(spec_path: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<(), CliError> {
    let mut spec = match spec_path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::from(e).context(p.display()))?;
            SceneSpec::from_toml(&text)
                .map_err(|e| CliError::new(IO, e.to_string()).context(p.display()))?
        }
        None => SceneSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let bundle = generate(&spec)?;
    bundle.save(out)?;
    emit(
        Report::default()
            .line("seed", spec.seed)
            .line("views", bundle.n_views())
            .line("width", bundle.width())
            .line("height", bundle.height())
            .line("points", bundle.pseudo_pointmap.len()),
    );
    Ok(())
}

fn median_ms(reps: usize, mut f: impl FnMut() -> Result<(), CliError>) -> Result<f64, CliError> {
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        f()?;
        times.push(start.elapsed().as_secs_f64() * 1e3);
    }
    Ok(pmloss_core::metrics::median(&times))
}

pub fn bench(n: usize, reps: usize, icp_iters: usize, seed: u64) -> Result<(), CliError> {
    if n < 3 || reps == 0 {
        return Err(CliError::new(SHAPE, "need --n >= 3 and --reps >= 1"));
    }
    let (source, target, _) = correspondence_fixture(n, seed, 0.01);
    let umeyama_ms = median_ms(reps, || {
        umeyama(&source, &target).map(drop).map_err(Into::into)
    })?;
    let mut icp_iterations = 0;
    let icp_ms = median_ms(reps, || {
        icp_iterations = icp(
            &source,
            &target,
            icp_iters,
            pmloss_core::alignment::DEFAULT_ICP_REL_TOL,
        )?
        .iterations;
        Ok(())
    })?;
    let chamfer_ms = median_ms(reps, || {
        let index = SpatialIndex::with_default_leaf(&target)?;
        chamfer_sd(&source, &index)?;
        Ok(())
    })?;
    emit(
        Report::default()
            .line("n", n)
            .line("reps", reps)
            .line("umeyama_ms", sig12(umeyama_ms))
            .line("icp_ms", sig12(icp_ms))
            .line("icp_iterations", icp_iterations)
            .line("chamfer_ms", sig12(chamfer_ms))
            .line("icp_over_umeyama", sig12(icp_ms / umeyama_ms)),
    );
    Ok(())
}

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use gpiwt::data::{read_array, undersample, write_array, Dataset, KSpace, Split};
use gpiwt::metrics::{metrics_csv, rss, write_pgm, MetricRow};
use gpiwt::spirit::{calibrate, consistency, SpiritKernel};
use gpiwt::training::{fit_from, prepare_samples, FitResult};
use gpiwt::unroll::{cascade_forward, load_checkpoint, save_checkpoint, CascadeParams, ReconProblem};
use gpiwt::verify::{report_csv, run_checks, Fault};
use gpiwt::{par, Error, Result};

use crate::config::RunConfig;

fn kernel_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("{}.kernel.cks", Dataset::slice_name(i)))
}

fn recon_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("{}.recon.cks", Dataset::slice_name(i)))
}

pub fn gen_data(cfg: &RunConfig) -> Result<()> {
    for (split, count, dir) in [
        (Split::Train, cfg.train_slices, &cfg.paths.train),
        (Split::Test, cfg.test_slices, &cfg.paths.test),
    ] {
        let ds = Dataset::synthesize(&cfg.data, split, count, cfg.seed)?;
        ds.save(dir)?;
        eprintln!("wrote {count} {split} slices to {}", dir.display());
    }
    Ok(())
}

/// Calibrates one kernel per slice of `split`, saved under `paths.kernels`,
/// and reports the consistency residual against the fully sampled data.
pub fn calibrate_kernels(cfg: &RunConfig, split: Split) -> Result<()> {
    let dir = match split {
        Split::Train => &cfg.paths.train,
        Split::Test => &cfg.paths.test,
    };
    let ds = Dataset::load(dir)?;
    let out = cfg.paths.kernels.join(split.to_string());
    fs::create_dir_all(&out)?;
    let results = par::map_range(ds.len(), |i| -> Result<f64> {
        let r = &ds.records[i];
        let g = calibrate(&undersample(&r.full, &r.mask)?, &r.mask, cfg.kw, cfg.tikhonov)?;
        g.save(kernel_path(&out, i))?;
        consistency(&r.full, &g)
    });
    let mut csv = String::from("slice,consistency\n");
    for (i, c) in results.into_iter().enumerate() {
        let _ = writeln!(csv, "{},{:.6e}", Dataset::slice_name(i), c?);
    }
    fs::create_dir_all(&cfg.paths.reports)?;
    fs::write(cfg.paths.reports.join(format!("calibration_{split}.csv")), csv)?;
    eprintln!("wrote {} kernels to {}", ds.len(), out.display());
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let ds = Dataset::load(&cfg.paths.train)?;
    let c = &ds.config;
    let init = CascadeParams::init(&cfg.cascade, c.n1, c.n2, c.coils, cfg.seed)?;
    fs::create_dir_all(&cfg.paths.reports)?;
    let loss_path = cfg.paths.reports.join("loss.csv");
    if cfg.epochs == 0 {
        save_checkpoint(&cfg.paths.checkpoint, &init)?;
        fs::write(cfg.paths.checkpoint.join("run.cfg"), cfg.render())?;
        fs::write(loss_path, "epoch,step,loss,lr\n")?;
        eprintln!("epochs = 0: wrote initial parameters to {}", cfg.paths.checkpoint.display());
        return Ok(());
    }
    let samples = prepare_samples(&ds, cfg.kw, cfg.tikhonov)?;
    let fit = fit_from(&cfg.train_config(), &samples, init)?;
    save_checkpoint(&cfg.paths.checkpoint, &fit.best)?;
    fs::write(cfg.paths.checkpoint.join("run.cfg"), cfg.render())?;
    fs::write(loss_path, loss_csv(&fit))?;
    eprintln!(
        "initial loss {:.6e}, best epoch {} with mean loss {:.6e}",
        fit.initial_loss, fit.best_epoch, fit.history[fit.best_epoch]
    );
    Ok(())
}

fn loss_csv(fit: &FitResult) -> String {
    let mut out = String::from("epoch,step,loss,lr\n");
    for s in &fit.steps {
        let _ = writeln!(out, "{},{},{:e},{:e}", s.epoch, s.step, s.loss, s.lr);
    }
    out
}

pub struct ReconOptions {
    pub checkpoint: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub zero_fill: bool,
}

/// Reconstructs every slice of the input dataset. Kernels saved by
/// `calibrate` are reused when present; otherwise each slice is calibrated
/// from its own ACS block.
pub fn reconstruct(cfg: &RunConfig, opts: &ReconOptions) -> Result<()> {
    let input = opts.input.as_ref().unwrap_or(&cfg.paths.test);
    let output = opts.output.as_ref().unwrap_or(&cfg.paths.recon);
    let ds = Dataset::load(input)?;
    let params = if opts.zero_fill {
        None
    } else {
        let p = load_checkpoint(opts.checkpoint.as_ref().unwrap_or(&cfg.paths.checkpoint))?;
        let d = &ds.config;
        if let Some(dims) = p.dims() {
            if dims != (d.n1, d.n2, d.coils) {
                return Err(Error::ShapeMismatch {
                    expected: vec![dims.0, dims.1, dims.2],
                    found: vec![d.n1, d.n2, d.coils],
                });
            }
        }
        Some(p)
    };
    let kernels = cfg.paths.kernels.join(ds.split.to_string());
    fs::create_dir_all(output)?;
    let done = par::map_range(ds.len(), |i| -> Result<()> {
        let r = &ds.records[i];
        let y = undersample(&r.full, &r.mask)?;
        let k = match &params {
            None => y,
            Some(p) => {
                let path = kernel_path(&kernels, i);
                let g = if path.exists() {
                    SpiritKernel::load(&path)?
                } else {
                    calibrate(&y, &r.mask, cfg.kw, cfg.tikhonov)?
                };
                cascade_forward(&ReconProblem::new(y, r.mask.clone(), g)?, p)?
            }
        };
        write_array(recon_path(output, i), k.values())?;
        let peak = rss(&r.full)?.max();
        write_pgm(output.join(format!("{}.pgm", Dataset::slice_name(i))), &rss(&k)?, peak)
    });
    done.into_iter().collect::<Result<Vec<_>>>()?;
    eprintln!("wrote {} reconstructions to {}", ds.len(), output.display());
    Ok(())
}

/// Per-slice rows followed by `mean` and `std` rows (sample standard
/// deviation; 0 for a single slice).
pub fn eval(reference: &Path, test: &Path) -> Result<String> {
    let ds = Dataset::load(reference)?;
    let mut names: Vec<String> = fs::read_dir(test)?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str()?.strip_suffix(".recon.cks").map(str::to_string))
        .collect();
    names.sort();
    let expected: Vec<String> = (0..ds.len()).map(Dataset::slice_name).collect();
    if names != expected {
        return Err(Error::InvalidArgument(format!(
            "slice sets differ: reference has {} slices, test has {}",
            expected.len(),
            names.len()
        )));
    }
    let mask = ds.config.pattern.to_string();
    let af = ds.config.af;
    let rows = par::map_range(ds.len(), |i| -> Result<MetricRow> {
        let k = KSpace::new(read_array(recon_path(test, i))?)?;
        let full = &ds.records[i].full;
        if k.dims() != full.dims() {
            return Err(Error::ShapeMismatch {
                expected: vec![full.n1(), full.n2(), full.nc()],
                found: vec![k.n1(), k.n2(), k.nc()],
            });
        }
        MetricRow::evaluate(&expected[i], &mask, af, &rss(full)?, &rss(&k)?)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut all = rows.clone();
    all.extend(summary_rows(&rows, &mask, af));
    Ok(metrics_csv(&all))
}

fn summary_rows(rows: &[MetricRow], mask: &str, af: f64) -> [MetricRow; 2] {
    let n = rows.len() as f64;
    let stat = |f: fn(&MetricRow) -> f64| {
        let mean = rows.iter().map(f).sum::<f64>() / n;
        let var = if rows.len() > 1 {
            rows.iter().map(|r| (f(r) - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        (mean, var.sqrt())
    };
    let (nmse, psnr, ssim) = (stat(|r| r.nmse), stat(|r| r.psnr), stat(|r| r.ssim));
    let row = |slice: &str, pick: fn((f64, f64)) -> f64| MetricRow {
        slice: slice.to_string(),
        mask: mask.to_string(),
        af,
        nmse: pick(nmse),
        psnr: pick(psnr),
        ssim: pick(ssim),
    };
    [row("mean", |s| s.0), row("std", |s| s.1)]
}

/// Runs the self-check suite; `Ok(false)` when any check failed.
pub fn verify(seed: u64, fault: Fault, out: Option<&Path>) -> Result<bool> {
    let results = run_checks(seed, fault)?;
    let csv = report_csv(&results);
    print!("{csv}");
    if let Some(path) = out {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, &csv)?;
    }
    Ok(results.iter().all(|r| r.passed))
}

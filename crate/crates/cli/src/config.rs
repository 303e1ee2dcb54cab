//! Flat `key = value` run configuration.

use std::fs;
use std::path::{Path, PathBuf};

use gpiwt::attention::LineAxis;
use gpiwt::data::{parse_manifest, DataConfig, MaskPattern};
use gpiwt::training::TrainConfig;
use gpiwt::unroll::CascadeConfig;
use gpiwt::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data: DataConfig,
    pub seed: u64,
    pub train_slices: usize,
    pub test_slices: usize,
    pub cascade: CascadeConfig,
    pub kw: usize,
    pub tikhonov: f64,
    pub lr: f64,
    pub decay: f64,
    pub epochs: usize,
    pub batch: usize,
    pub freeze_attention: bool,
    pub freeze_glp: bool,
    pub paths: Paths,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Paths {
    pub train: PathBuf,
    pub test: PathBuf,
    pub kernels: PathBuf,
    pub checkpoint: PathBuf,
    pub recon: PathBuf,
    pub reports: PathBuf,
}

impl Paths {
    fn under(base: &Path) -> Self {
        Paths {
            train: base.join("data/train"),
            test: base.join("data/test"),
            kernels: base.join("kernels"),
            checkpoint: base.join("checkpoint"),
            recon: base.join("recon"),
            reports: base.join("reports"),
        }
    }
}

impl RunConfig {
    /// Defaults with paths under `base`.
    pub fn defaults(base: &Path) -> Self {
        let train = TrainConfig::default();
        RunConfig {
            data: DataConfig::default(),
            seed: 0,
            train_slices: 200,
            test_slices: 20,
            cascade: train.cascade,
            kw: train.kw,
            tikhonov: train.tikhonov,
            lr: train.lr,
            decay: train.decay,
            epochs: train.epochs,
            batch: train.batch,
            freeze_attention: false,
            freeze_glp: false,
            paths: Paths::under(base),
        }
    }

    /// Reads `path`; relative paths inside resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut c = Self::defaults(base);
        for (key, value) in parse_manifest(text)? {
            c.set(&key, &value, base)?;
        }
        c.validate()?;
        Ok(c)
    }

    fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("invalid value '{value}' for key '{key}'")))
        }
        let path = || base.join(value);
        match key {
            "grid.n1" => self.data.n1 = parse(key, value)?,
            "grid.n2" => self.data.n2 = parse(key, value)?,
            "coils" => self.data.coils = parse(key, value)?,
            "acs" => self.data.acs = parse(key, value)?,
            "af" => self.data.af = parse(key, value)?,
            "mask.pattern" => self.data.pattern = parse::<MaskPattern>(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "noise.std" => self.data.noise_std = parse(key, value)?,
            "data.train_slices" => self.train_slices = parse(key, value)?,
            "data.test_slices" => self.test_slices = parse(key, value)?,
            "data.ellipses" => self.data.ellipses = parse(key, value)?,
            "cascade.T" => self.cascade.stages = parse(key, value)?,
            "cascade.H" => self.cascade.heads = parse(key, value)?,
            "cascade.d_head" => {
                self.cascade.d_head = match value {
                    "auto" | "nc" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "cascade.mu" => self.cascade.mu = parse(key, value)?,
            "cascade.lambda1" => self.cascade.lambda1 = parse(key, value)?,
            "cascade.lambda2" => self.cascade.lambda2 = parse(key, value)?,
            "cascade.gamma" => self.cascade.gamma = parse(key, value)?,
            "cascade.hard_dc" => self.cascade.hard_dc = parse(key, value)?,
            "window.w" => self.cascade.window = parse(key, value)?,
            "window.line_axis" => self.cascade.line_axis = parse::<LineAxis>(key, value)?,
            "window.line_windows" => self.cascade.line_windows = parse(key, value)?,
            "spirit.kw" => self.kw = parse(key, value)?,
            "spirit.tikhonov" => self.tikhonov = parse(key, value)?,
            "train.lr" => self.lr = parse(key, value)?,
            "train.decay" => self.decay = parse(key, value)?,
            "train.epochs" => self.epochs = parse(key, value)?,
            "train.batch" => self.batch = parse(key, value)?,
            "train.freeze_attention" => self.freeze_attention = parse(key, value)?,
            "train.freeze_glp" => self.freeze_glp = parse(key, value)?,
            "paths.train" => self.paths.train = path(),
            "paths.test" => self.paths.test = path(),
            "paths.kernels" => self.paths.kernels = path(),
            "paths.checkpoint" => self.paths.checkpoint = path(),
            "paths.recon" => self.paths.recon = path(),
            "paths.reports" => self.paths.reports = path(),
            _ => return Err(Error::InvalidArgument(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        if d.n1 == 0 || d.n2 == 0 || d.coils == 0 {
            return Err(Error::InvalidArgument("grid and coil counts must be positive".into()));
        }
        if self.batch == 0 {
            return Err(Error::InvalidArgument("train.batch must be positive".into()));
        }
        self.cascade.validate()
    }

    /// Training settings; `epochs` may be 0 here, meaning "no updates".
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch: self.batch,
            seed: self.seed,
            lr: self.lr,
            decay: self.decay,
            cascade: self.cascade.clone(),
            kw: self.kw,
            tikhonov: self.tikhonov,
            freeze_attention: self.freeze_attention,
            freeze_glp: self.freeze_glp,
        }
    }

    /// The effective configuration as `key = value` lines, for run records.
    pub fn render(&self) -> String {
        let c = &self.cascade;
        let d = &self.data;
        let p = &self.paths;
        format!(
            "grid.n1 = {}\ngrid.n2 = {}\ncoils = {}\nacs = {}\naf = {:?}\nmask.pattern = {}\nseed = {}\nnoise.std = {:?}\n\
             data.train_slices = {}\ndata.test_slices = {}\ndata.ellipses = {}\n\
             cascade.T = {}\ncascade.H = {}\ncascade.d_head = {}\ncascade.mu = {:?}\ncascade.lambda1 = {:?}\n\
             cascade.lambda2 = {:?}\ncascade.gamma = {:?}\ncascade.hard_dc = {}\nwindow.w = {}\nwindow.line_axis = {}\nwindow.line_windows = {}\n\
             spirit.kw = {}\nspirit.tikhonov = {:?}\ntrain.lr = {:?}\ntrain.decay = {:?}\ntrain.epochs = {}\n\
             train.batch = {}\ntrain.freeze_attention = {}\ntrain.freeze_glp = {}\npaths.train = {}\npaths.test = {}\npaths.kernels = {}\n\
             paths.checkpoint = {}\npaths.recon = {}\npaths.reports = {}\n",
            d.n1,
            d.n2,
            d.coils,
            d.acs,
            d.af,
            d.pattern,
            self.seed,
            d.noise_std,
            self.train_slices,
            self.test_slices,
            d.ellipses,
            c.stages,
            c.heads,
            c.d_head.map_or("auto".to_string(), |v| v.to_string()),
            c.mu,
            c.lambda1,
            c.lambda2,
            c.gamma,
            c.hard_dc,
            c.window,
            c.line_axis,
            c.line_windows,
            self.kw,
            self.tikhonov,
            self.lr,
            self.decay,
            self.epochs,
            self.batch,
            self.freeze_attention,
            self.freeze_glp,
            p.train.display(),
            p.test.display(),
            p.kernels.display(),
            p.checkpoint.display(),
            p.recon.display(),
            p.reports.display()
        )
    }
}

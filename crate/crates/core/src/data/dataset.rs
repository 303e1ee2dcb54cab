use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::cks::{read_array, write_array};
use super::coils::{gen_coil_sens, simulate_kspace};
use super::kspace::KSpace;
use super::mask::{make_mask, MaskPattern, SampleMask};
use super::phantom::{gen_phantom, PhantomSpec};
use crate::error::{Error, Result};
use crate::rng::{stream, stream_seed};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(Error::Format(format!("unknown split '{s}'"))),
        }
    }
}

/// Synthetic acquisition settings shared by every slice of a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub n1: usize,
    pub n2: usize,
    pub coils: usize,
    pub acs: usize,
    pub af: f64,
    pub pattern: MaskPattern,
    pub noise_std: f64,
    /// Inner ellipses per random phantom.
    pub ellipses: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            n1: 64,
            n2: 64,
            coils: 4,
            acs: 12,
            af: 4.0,
            pattern: MaskPattern::Random,
            noise_std: 0.0,
            ellipses: 6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub full: KSpace,
    pub mask: SampleMask,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub records: Vec<Record>,
    pub split: Split,
    pub seed: u64,
    pub config: DataConfig,
}

impl Dataset {
    /// Generates `count` slices. Slice `i` draws from the named streams
    /// `"{split}/{i}/phantom"`, `"/coils"`, `"/noise"` and `"/mask"`.
    pub fn synthesize(config: &DataConfig, split: Split, count: usize, seed: u64) -> Result<Self> {
        let records = (0..count)
            .map(|i| {
                let name = |s: &str| format!("{split}/{i}/{s}");
                let spec = PhantomSpec::random(
                    config.n1,
                    config.n2,
                    config.ellipses,
                    &mut stream(seed, &name("phantom")),
                );
                let image = gen_phantom(&spec, stream_seed(seed, &name("jitter")))?;
                let sens = gen_coil_sens(config.coils, config.n1, config.n2, stream_seed(seed, &name("coils")))?;
                let full = simulate_kspace(&image, &sens, config.noise_std, stream_seed(seed, &name("noise")))?;
                let mask = make_mask(
                    config.pattern,
                    config.af,
                    config.acs,
                    config.n1,
                    config.n2,
                    stream_seed(seed, &name("mask")),
                )?;
                Ok(Record { full, mask })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            records,
            split,
            seed,
            config: config.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn slice_name(i: usize) -> String {
        format!("slice_{i:03}")
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let c = &self.config;
        let manifest = format!(
            "# gpiwt dataset\nsplit = {}\nseed = {}\ncount = {}\nn1 = {}\nn2 = {}\ncoils = {}\nacs = {}\naf = {:?}\npattern = {}\nnoise_std = {:?}\nellipses = {}\n",
            self.split,
            self.seed,
            self.records.len(),
            c.n1,
            c.n2,
            c.coils,
            c.acs,
            c.af,
            c.pattern,
            c.noise_std,
            c.ellipses
        );
        fs::write(dir.join("manifest.txt"), manifest)?;
        for (i, r) in self.records.iter().enumerate() {
            let base = Self::slice_name(i);
            write_array(dir.join(format!("{base}.kspace.cks")), r.full.values())?;
            write_array(dir.join(format!("{base}.mask.cks")), &r.mask.to_array())?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let text = fs::read_to_string(dir.join("manifest.txt"))?;
        let kv = parse_manifest(&text)?;
        let get = |k: &str| {
            kv.iter()
                .find(|(key, _)| key == k)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::Format(format!("dataset manifest lacks '{k}'")))
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?.parse().map_err(|_| Error::Format(format!("bad integer for '{k}'")))
        };
        let real = |k: &str| -> Result<f64> {
            get(k)?.parse().map_err(|_| Error::Format(format!("bad number for '{k}'")))
        };
        let config = DataConfig {
            n1: num("n1")?,
            n2: num("n2")?,
            coils: num("coils")?,
            acs: num("acs")?,
            af: real("af")?,
            pattern: get("pattern")?.parse()?,
            noise_std: real("noise_std")?,
            ellipses: num("ellipses")?,
        };
        let count = num("count")?;
        let records = (0..count)
            .map(|i| {
                let base = Self::slice_name(i);
                let full = KSpace::new(read_array(dir.join(format!("{base}.kspace.cks")))?)?;
                let mask = SampleMask::from_array(&read_array(dir.join(format!("{base}.mask.cks")))?)?;
                if full.dims() != (config.n1, config.n2, config.coils) {
                    return Err(Error::shape(&[config.n1, config.n2, config.coils], full.values().shape()));
                }
                Ok(Record { full, mask })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            records,
            split: get("split")?.parse()?,
            seed: get("seed")?.parse().map_err(|_| Error::Format("bad seed".into()))?,
            config,
        })
    }
}

/// `key = value` lines, `#` comments, blank lines ignored.
pub fn parse_manifest(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("line {}: expected 'key = value'", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

//! Line-oriented `key = value` experiment configuration.
//!
//! Every key has a default, unknown keys are errors and `#` starts a comment.
//! Overrides go through [`Config::set`] after the file is parsed.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::activation::Activation;
use crate::data::{synth_dataset, Dataset};
use crate::error::{Error, Result};
use crate::law::{uniform_atoms, InitLaw, ScalarLaw};
use crate::limit_ode::Grid;
use crate::model::ScalingConfig;
use crate::trainer::TrainConfig;

/// Recognised keys and their defaults.
pub const DEFAULTS: &[(&str, &str)] = &[
    ("depth", "2"),
    ("n1", "10"),
    ("n2", "1024"),
    ("n3", "100"),
    ("gamma1", "1"),
    ("gamma2", "0.8"),
    ("gamma3", "1"),
    ("activation", "tanh"),
    ("alpha_c", "1"),
    ("alpha_w1", "1"),
    ("alpha_w2", "1"),
    ("alpha_w3", "1"),
    ("horizon", "1"),
    ("dt", "0.001"),
    ("batch", "1"),
    ("stride", "0"),
    ("param_bound", "10000"),
    ("seed", "0"),
    ("data", "synth"),
    ("m", "3"),
    ("d", "2"),
    ("data_seed", "1"),
    ("law", "rademacher"),
    ("law_seed", "0"),
    ("gaussian_seed", "0"),
    ("seeds", "64"),
    ("n2_grid", "256,1024,4096"),
    ("gamma2_grid", "0.5,0.6,0.7,0.8,0.9,1"),
    ("gamma1_grid", "0.5,0.6,0.7,0.8,0.9,1"),
    ("marks", "0,1"),
    ("point", "0"),
    ("mnist_dir", "data/mnist"),
    ("train_subset", "5000"),
    ("test_subset", "1000"),
    ("epochs", "5"),
    ("mnist_width", "100"),
    ("mnist_batch", "20"),
    ("mnist_seeds", "3"),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Default for Config {
    fn default() -> Self {
        Config { values: DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect() }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        let mut seen = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, _) = line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected key=value, got '{line}'", n + 1)))?;
            if let Some(prev) = seen.insert(k.trim().to_string(), n + 1) {
                return Err(Error::Config(format!("line {}: key '{}' already set on line {prev}", n + 1, k.trim())));
            }
            cfg.set(line).map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Applies one `key=value` assignment.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment.split_once('=').ok_or_else(|| Error::Config(format!("expected key=value, got '{assignment}'")))?;
        let (k, v) = (k.trim(), v.trim());
        match self.values.get_mut(k) {
            Some(slot) => {
                *slot = v.to_string();
                Ok(())
            }
            None => Err(Error::Config(format!("unknown key '{k}'"))),
        }
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.values.get(key).map(String::as_str).ok_or_else(|| Error::Config(format!("unknown key '{key}'")))
    }

    pub fn value<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.get(key)?;
        raw.parse().map_err(|_| Error::Config(format!("cannot parse {key} = '{raw}'")))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let raw = self.get(key)?;
        raw.split(',').map(|s| s.trim().parse().map_err(|_| Error::Config(format!("cannot parse element '{s}' of {key}")))).collect()
    }

    /// Sorted `key=value` lines; the input of the manifest hash.
    pub fn canonical_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn scaling(&self) -> Result<ScalingConfig> {
        let depth: usize = self.value("depth")?;
        let names = ["1", "2", "3"];
        if !(2..=3).contains(&depth) {
            return Err(Error::Config(format!("depth must be 2 or 3, got {depth}")));
        }
        let widths = names[..depth].iter().map(|k| self.value(&format!("n{k}"))).collect::<Result<Vec<usize>>>()?;
        let gammas = names[..depth].iter().map(|k| self.value(&format!("gamma{k}"))).collect::<Result<Vec<f64>>>()?;
        let mut alphas = vec![self.value("alpha_c")?];
        for k in &names[..depth] {
            alphas.push(self.value(&format!("alpha_w{k}"))?);
        }
        let act: Activation = self.get("activation")?.parse()?;
        ScalingConfig::new(widths, gammas)?.with_activation(act).with_alphas(alphas)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::new(self.scaling()?, self.value("horizon")?, self.value("seed")?)?;
        cfg.batch = self.value("batch")?;
        let stride: usize = self.value("stride")?;
        if stride > 0 {
            cfg.stride = stride;
        }
        cfg.param_bound = self.value("param_bound")?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// `rademacher`: symmetric ±1 for C and W²; `skewed`: mean-zero two-point laws on {-2, 1} and {-1, 0.5}.
    pub fn law(&self, d: usize) -> Result<InitLaw> {
        let n1 = self.value("n1")?;
        let atoms = uniform_atoms(n1, d, self.value("law_seed")?);
        let (c, w2) = match self.get("law")? {
            "rademacher" => (ScalarLaw::rademacher(), ScalarLaw::rademacher()),
            "skewed" => (ScalarLaw::two_point(2.0, 1.0), ScalarLaw::two_point(1.0, 0.5)),
            other => return Err(Error::Config(format!("unknown law '{other}'"))),
        };
        Ok(InitLaw { w1_atoms: atoms, w2, c })
    }

    /// The synthetic regression dataset; MNIST is loaded separately.
    pub fn dataset(&self) -> Result<Dataset> {
        match self.get("data")? {
            "synth" => synth_dataset(self.value("m")?, self.value("d")?, self.value("data_seed")?),
            other => Err(Error::Config(format!("data = '{other}' is not a regression dataset"))),
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.value("horizon")?, self.value("dt")?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_overrides() {
        let mut c = Config::parse("# header\n gamma2 = 0.6  # inline\n\nn2=256\n").unwrap();
        assert_eq!(c.value::<f64>("gamma2").unwrap(), 0.6);
        assert_eq!(c.value::<usize>("n2").unwrap(), 256);
        c.set("gamma2=0.9").unwrap();
        assert_eq!(c.scaling().unwrap().gammas, vec![1.0, 0.9]);
        assert_eq!(c.list::<usize>("n2_grid").unwrap(), vec![256, 1024, 4096]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Config::parse("bogus=1").is_err());
        assert!(Config::parse("gamma2").is_err());
        assert!(Config::parse("n2=1\nn2=2").is_err());
        assert!(Config::default().set("nope=1").is_err());
        let mut c = Config::default();
        c.set("gamma2=1.2").unwrap();
        let e = c.scaling().unwrap_err().to_string();
        assert_eq!(e, "gamma2 out of range (1/2,1]");
        c.set("gamma2=abc").unwrap();
        assert!(c.scaling().is_err());
    }

    #[test]
    fn canonical_text_is_order_independent() {
        let a = Config::parse("n2=5\ngamma2=0.7").unwrap();
        let b = Config::parse("gamma2=0.7\nn2=5").unwrap();
        assert_eq!(a.canonical_text(), b.canonical_text());
        assert_ne!(a.canonical_text(), Config::default().canonical_text());
    }

    #[test]
    fn builds_library_objects() {
        let mut c = Config::default();
        c.set("depth=3").unwrap();
        assert_eq!(c.scaling().unwrap().widths, vec![10, 1024, 100]);
        let c = Config::default();
        let ds = c.dataset().unwrap();
        assert_eq!((ds.len(), ds.dim()), (3, 2));
        assert_eq!(c.law(2).unwrap().n1(), 10);
        assert_eq!(c.grid().unwrap().steps, 1000);
        assert_eq!(c.train_config().unwrap().total_steps(), 1024);
    }
}

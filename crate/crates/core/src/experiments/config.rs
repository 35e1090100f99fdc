//! `key=value` experiment configuration with `#` comments.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::mechanisms::{AdaOpsParams, MechanismKind, MechanismSpec, NoiseDesign};

/// Parameters shared by all experiments. Unset optional fields fall back to
/// per-experiment defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Option<String>,
    pub n: usize,
    pub d: usize,
    /// Noise level of the synthetic responses.
    pub sigma_data: f64,
    /// Standard deviation of the isotropic output-perturbation noise.
    pub sigma_mech: f64,
    pub gamma: f64,
    /// γ sweep; experiment-specific default when unset.
    pub gammas: Option<Vec<f64>>,
    pub lambda: f64,
    pub eps_budget: f64,
    pub delta: f64,
    /// AdaOPS κ; half the admissible maximum when unset.
    pub kappa: Option<f64>,
    pub seed: u64,
    pub trials: usize,
    pub mc_samples: usize,
    pub moments: usize,
    pub search_budget: usize,
    pub mechanism: MechanismKind,
    /// Clip responses to `[−1, 1]` after row normalization.
    pub clip: bool,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            n: 1000,
            d: 5,
            sigma_data: 0.2,
            sigma_mech: 4.0,
            gamma: 1.0,
            gammas: None,
            lambda: 1.0,
            eps_budget: 1.0,
            delta: 1e-6,
            kappa: None,
            seed: 0,
            trials: 5000,
            mc_samples: 1_000_000,
            moments: 2,
            search_budget: 200,
            mechanism: MechanismKind::Ops,
            clip: true,
            out: PathBuf::from("out"),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::param(format!("invalid value `{value}` for `{key}`")))
}

impl ExperimentConfig {
    /// Parses config text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected key=value, got `{line}`"),
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Sets one field by its config key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "experiment" => self.experiment = Some(value.to_string()),
            "n" => self.n = parse_num(key, value)?,
            "d" => self.d = parse_num(key, value)?,
            "sigma_data" => self.sigma_data = parse_num(key, value)?,
            "sigma_mech" | "sigma" => self.sigma_mech = parse_num(key, value)?,
            "gamma" => self.gamma = parse_num(key, value)?,
            "gammas" => {
                let v: Result<Vec<f64>> =
                    value.split(',').map(|s| s.trim()).filter(|s| !s.is_empty()).map(|s| parse_num(key, s)).collect();
                self.gammas = Some(v?);
            }
            "lambda" => self.lambda = parse_num(key, value)?,
            "eps_budget" | "eps" => self.eps_budget = parse_num(key, value)?,
            "delta" => self.delta = parse_num(key, value)?,
            "kappa" => self.kappa = Some(parse_num(key, value)?),
            "seed" => self.seed = parse_num(key, value)?,
            "trials" => self.trials = parse_num(key, value)?,
            "mc_samples" => self.mc_samples = parse_num(key, value)?,
            "moments" => self.moments = parse_num(key, value)?,
            "search_budget" => self.search_budget = parse_num(key, value)?,
            "mechanism" => self.mechanism = value.parse()?,
            "clip" => self.clip = parse_num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            other => return Err(Error::param(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Checks ranges common to every experiment.
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| -> Result<()> {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(format!("{name} must be positive and finite, got {v}")));
            }
            Ok(())
        };
        if self.n == 0 || self.d == 0 {
            return Err(Error::param("n and d must be positive"));
        }
        if !(self.sigma_data >= 0.0 && self.sigma_data.is_finite()) {
            return Err(Error::param(format!("sigma_data must be finite and nonnegative, got {}", self.sigma_data)));
        }
        positive("sigma_mech", self.sigma_mech)?;
        positive("gamma", self.gamma)?;
        positive("eps_budget", self.eps_budget)?;
        for &g in self.gammas.iter().flatten() {
            positive("gammas entry", g)?;
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::param(format!("lambda must be finite and nonnegative, got {}", self.lambda)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::param(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if let Some(k) = self.kappa {
            positive("kappa", k)?;
        }
        if self.trials < 2 || self.mc_samples < 2 {
            return Err(Error::param("trials and mc_samples must be at least 2"));
        }
        if self.moments == 0 {
            return Err(Error::param("moments must be at least 1"));
        }
        Ok(())
    }

    pub fn gamma_sweep(&self, default: &[f64]) -> Vec<f64> {
        self.gammas.clone().unwrap_or_else(|| default.to_vec())
    }

    /// The configured mechanism for data of size `n × d`. Object
    /// perturbation uses `sigma_mech` as its noise scale.
    pub fn mechanism_spec(&self, n: usize, d: usize) -> MechanismSpec {
        let (gamma, lambda) = (self.gamma, self.lambda);
        let gaussian = |design| MechanismSpec::Gaussian { design, gamma, lambda };
        match self.mechanism {
            MechanismKind::GaussIso => gaussian(NoiseDesign::Isotropic),
            MechanismKind::GaussDemocratic => gaussian(NoiseDesign::Democratic),
            MechanismKind::GaussFisher => gaussian(NoiseDesign::Fisher),
            MechanismKind::GaussExplicit => gaussian(NoiseDesign::Explicit(crate::Matrix::identity(d, d))),
            MechanismKind::Ops => MechanismSpec::Ops { lambda, gamma },
            MechanismKind::ObjPert => MechanismSpec::ObjPert { sigma: self.sigma_mech, lambda },
            MechanismKind::AdaOps => MechanismSpec::AdaOps {
                eps: self.eps_budget,
                delta: self.delta,
                kappa: self
                    .kappa
                    .unwrap_or_else(|| 0.5 * AdaOpsParams::kappa_bound(n, d, self.eps_budget, self.delta)),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_comments_and_blanks() {
        let cfg = ExperimentConfig::parse(
            "# figure one\nexperiment = fig1\n\nn=200 # rows\nsigma_mech=8\ngammas=0.1, 1,10\nmechanism=gauss-iso\n",
        )
        .unwrap();
        assert_eq!(cfg.experiment.as_deref(), Some("fig1"));
        assert_eq!(cfg.n, 200);
        assert_eq!(cfg.sigma_mech, 8.0);
        assert_eq!(cfg.gammas, Some(vec![0.1, 1.0, 10.0]));
        assert_eq!(cfg.mechanism, MechanismKind::GaussIso);
        assert_eq!(cfg.d, 5);
        cfg.validate().unwrap();
        assert_eq!(cfg.mechanism_spec(200, 5).kind(), MechanismKind::GaussIso);
        assert!(cfg.clip && !ExperimentConfig::parse("clip=false").unwrap().clip);
    }

    #[test]
    fn errors_carry_line_numbers() {
        match ExperimentConfig::parse("n=10\nbogus=1\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(ExperimentConfig::parse("n\n"), Err(Error::Parse { line: 1, .. })));
        assert!(ExperimentConfig::parse("n=-3\n").is_err());
        assert!(ExperimentConfig { delta: 1.0, ..Default::default() }.validate().is_err());
    }
}

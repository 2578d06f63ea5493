use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use cvar_mdp::document::{ModelDocument, PolicyDocument};
use cvar_mdp::mdp::{validate_model, MdpModel};
use cvar_mdp::portfolio::{build_mdp, default_config, PortfolioConfig, PortfolioLabeling};
use serde::Serialize;

use crate::error::{CliError, CliResult, InputContext};
use crate::InputArgs;

/// Where the model of a run came from.
pub struct LoadedModel {
    pub model: MdpModel<f64>,
    /// Present for the portfolio scenario.
    pub portfolio: Option<(PortfolioConfig<f64>, PortfolioLabeling<f64>)>,
}

impl LoadedModel {
    /// `--alpha`, else the scenario's own level.
    pub fn alpha(&self, flag: Option<f64>) -> CliResult<f64> {
        flag.or_else(|| self.portfolio.as_ref().map(|(c, _)| c.alpha))
            .ok_or_else(|| CliError::input("--alpha is required for model files"))
    }
}

/// Reads a model document without the stochasticity checks, so `validate` can list violations.
pub fn read_model_unchecked(path: &Path) -> CliResult<MdpModel<f64>> {
    let text = fs::read_to_string(path).input_context(format!("cannot read model file {}", path.display()))?;
    let doc: ModelDocument<f64> =
        serde_json::from_str(&text).input_context(format!("cannot parse model file {}", path.display()))?;
    Ok(doc.to_model_unchecked()?)
}

pub fn portfolio_config(args: &InputArgs) -> CliResult<PortfolioConfig<f64>> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).input_context(format!("cannot read config {}", path.display()))?;
            serde_json::from_str(&text).input_context(format!("cannot parse config {}", path.display()))?
        }
        None => default_config(),
    };
    if let Some(v) = args.risk_free_rate {
        config.risk_free_rate = v;
    }
    if let Some(v) = args.transaction_cost {
        config.transaction_cost_rate = v;
    }
    if let Some(v) = args.wealth_scale {
        config.wealth_scale = v;
    }
    if let Some(v) = args.cost_model {
        config.cost_model = v.into();
    }
    Ok(config)
}

pub fn load(args: &InputArgs) -> CliResult<LoadedModel> {
    match (&args.model, args.scenario) {
        (Some(_), Some(_)) => Err(CliError::input("give either a model file or --scenario, not both")),
        (None, None) => Err(CliError::input("a model file or --scenario is required")),
        (None, Some(_)) => {
            let config = portfolio_config(args)?;
            let (model, labels) = build_mdp(&config)?;
            Ok(LoadedModel { model, portfolio: Some((config, labels)) })
        }
        (Some(path), None) => {
            if args.config.is_some() {
                return Err(CliError::input("--config only applies to --scenario portfolio"));
            }
            let model = read_model_unchecked(path)?;
            let report = validate_model(&model);
            if !report.is_valid() {
                return Err(cvar_mdp::Error::InvalidModel(report.violations).into());
            }
            Ok(LoadedModel { model, portfolio: None })
        }
    }
}

/// Accepts a JSON array or whitespace/comma separated action indices.
pub fn read_policy(path: &Path) -> CliResult<Vec<usize>> {
    let text = fs::read_to_string(path).input_context(format!("cannot read policy file {}", path.display()))?;
    if let Ok(PolicyDocument(actions)) = serde_json::from_str(&text) {
        return Ok(actions);
    }
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<usize>())
        .collect::<Result<_, _>>()
        .input_context(format!("policy file {} must list one action index per state", path.display()))
}

pub fn policy_text(actions: &[usize]) -> String {
    actions.iter().map(|a| format!("{a}\n")).collect()
}

pub struct OutDir(PathBuf);

impl OutDir {
    pub fn create(path: &Path) -> CliResult<Self> {
        fs::create_dir_all(path).input_context(format!("cannot create output directory {}", path.display()))?;
        Ok(Self(path.to_path_buf()))
    }

    pub fn path(&self) -> &Path {
        &self.0
    }

    pub fn json(&self, name: &str, value: &impl Serialize) -> CliResult<()> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Input(e.into()))?;
        self.text(name, &(text + "\n"))
    }

    pub fn text(&self, name: &str, contents: &str) -> CliResult<()> {
        let path = self.0.join(name);
        fs::write(&path, contents).input_context(format!("cannot write {}", path.display()))
    }

    /// Writes `header` and `rows` as CSV.
    pub fn csv<R: IntoIterator<Item = Vec<String>>>(&self, name: &str, header: &[&str], rows: R) -> CliResult<()> {
        let path = self.0.join(name);
        let write = || -> anyhow::Result<()> {
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(header)?;
            for row in rows {
                w.write_record(&row)?;
            }
            w.flush()?;
            Ok(())
        };
        write().with_context(|| format!("cannot write {}", path.display())).map_err(CliError::Input)
    }
}

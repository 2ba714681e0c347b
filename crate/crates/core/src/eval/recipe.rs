use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{channel, DesignMatrix};
use crate::ensemble::{fit_boost, fit_boost_cv, fit_forest, BoostParams, ForestParams};
use crate::error::{Error, Result};
use crate::mixed::{fit_gamm, or_last_iterate, FamilyKind, Formula, GammOptions};
use crate::model::{FittedModel, Predict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecipeKind {
    PhysicsOnly,
    DataOnly,
    GammGaussian,
    GammT,
    Forest,
    Boost,
}

impl RecipeKind {
    pub const ALL: [RecipeKind; 6] = [
        RecipeKind::PhysicsOnly,
        RecipeKind::DataOnly,
        RecipeKind::GammGaussian,
        RecipeKind::GammT,
        RecipeKind::Forest,
        RecipeKind::Boost,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            RecipeKind::PhysicsOnly => "physics_only",
            RecipeKind::DataOnly => "data_only",
            RecipeKind::GammGaussian => "gamm_gaussian",
            RecipeKind::GammT => "gamm_t",
            RecipeKind::Forest => "forest",
            RecipeKind::Boost => "boost",
        }
    }
}

impl fmt::Display for RecipeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for RecipeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RecipeKind::ALL.into_iter().find(|k| k.tag() == s).ok_or_else(|| {
            let known: Vec<&str> = RecipeKind::ALL.iter().map(|k| k.tag()).collect();
            Error::InvalidArgument(format!("unknown recipe `{s}` (expected one of {})", known.join(", ")))
        })
    }
}

/// What a recipe learns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// Nothing: the physics prediction stands alone.
    None,
    /// The cumulative physics residual; hybrid = physics + model.
    Residual,
    /// Measured cumulative energy directly; hybrid = model.
    Energy,
}

impl Target {
    pub fn channel(self) -> Option<&'static str> {
        match self {
            Target::None => None,
            Target::Residual => Some(channel::RESIDUAL_PHY),
            Target::Energy => Some(channel::MEASURED_ENERGY),
        }
    }
}

/// A model-fitting procedure evaluated by cross-validation.
pub trait Recipe: Sync {
    fn tag(&self) -> String;
    fn target(&self) -> Target;
    /// Panel features the design is built from.
    fn features(&self) -> Vec<String>;
    fn fit(&self, train: &DesignMatrix, seed: u64) -> Result<Box<dyn Predict + Send + Sync>>;
}

/// The built-in recipes with their hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecipeConfig {
    pub kind: RecipeKind,
    pub formula: Formula,
    pub forest: ForestParams,
    pub boost: BoostParams,
    /// Knots for smooths without their own count.
    pub knots: usize,
    /// Choose the boosting stage count by leave-one-trip-out folds.
    pub select_iterations: bool,
}

impl RecipeConfig {
    pub fn new(kind: RecipeKind, formula: Formula) -> Self {
        RecipeConfig {
            kind,
            formula,
            forest: ForestParams::default(),
            boost: BoostParams::default(),
            knots: GammOptions::default().default_knots,
            select_iterations: true,
        }
    }

    /// Sets one hyperparameter by its flag name.
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let count = || -> Result<usize> {
            if value >= 0.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::InvalidArgument(format!(
                    "{name} must be a whole number, got {value}"
                )))
            }
        };
        match (name, self.kind) {
            ("ntrees", RecipeKind::Forest) => self.forest.ntrees = count()?,
            ("ntrees", _) => self.boost.ntrees = count()?,
            ("mtry", _) => self.forest.mtry = count()?,
            ("min_leaf", RecipeKind::Forest) => self.forest.min_leaf = count()?,
            ("min_leaf", _) => self.boost.min_leaf = count()?,
            ("nsplit", _) => self.boost.nsplit = count()?,
            ("lambda", _) => self.boost.lambda = value,
            ("knots", _) => self.knots = count()?,
            _ => return Err(Error::InvalidArgument(format!("unknown hyperparameter `{name}`"))),
        }
        Ok(())
    }

    fn gamm_options(&self) -> GammOptions {
        GammOptions {
            family: if self.kind == RecipeKind::GammT {
                FamilyKind::StudentT
            } else {
                FamilyKind::Gaussian
            },
            default_knots: self.knots,
            ..GammOptions::default()
        }
    }

    /// Fits the recipe's model. `seed` drives the forest bootstrap.
    pub fn fit_model(&self, train: &DesignMatrix, seed: u64) -> Result<FittedModel> {
        Ok(match self.kind {
            RecipeKind::PhysicsOnly => FittedModel::Zero {
                columns: train.columns.clone(),
            },
            RecipeKind::GammGaussian | RecipeKind::GammT => FittedModel::Gamm(Box::new(or_last_iterate(fit_gamm(
                train,
                &self.formula,
                &self.gamm_options(),
            ))?)),
            RecipeKind::Forest => FittedModel::Forest(Box::new(fit_forest(train, &self.forest, seed)?)),
            RecipeKind::Boost | RecipeKind::DataOnly => FittedModel::Boost(Box::new(if self.select_iterations {
                fit_boost_cv(train, &self.boost)?
            } else {
                fit_boost(train, &self.boost)?
            })),
        })
    }
}

impl Recipe for RecipeConfig {
    fn tag(&self) -> String {
        self.kind.tag().to_string()
    }

    fn target(&self) -> Target {
        match self.kind {
            RecipeKind::PhysicsOnly => Target::None,
            RecipeKind::DataOnly => Target::Energy,
            _ => Target::Residual,
        }
    }

    fn features(&self) -> Vec<String> {
        self.formula.features()
    }

    fn fit(&self, train: &DesignMatrix, seed: u64) -> Result<Box<dyn Predict + Send + Sync>> {
        Ok(Box::new(self.fit_model(train, seed)?))
    }
}

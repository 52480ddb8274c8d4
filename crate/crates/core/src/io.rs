//! JSON game and profile files.
//!
//! A game file lists the states, the discount factor, the kernel rows and the
//! payoff triples. Payoffs are given either per player (`player1` and
//! `player2`), or through one of two shorthands:
//!
//! * `zero_sum`: `{f, g, h}` for player 1; player 2 receives `(-g, -f, -h)`.
//! * `symmetric`: `{f, g, h}` shared by both players.
//!
//! All per-state arrays are ordered like `states`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{DynkinGame, PayoffTriple, ProfileError, StoppingProfile, ValidatedGame, MAX_STATES};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error: {0}")]
    Schema(#[from] SchemaError),
    #[error("serialization failed: {0}")]
    Serialize(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchemaError {
    #[error("missing key {0:?}")]
    MissingKey(&'static str),
    #[error("conflicting payoff specifications: {0}")]
    ConflictingKeys(String),
    #[error("{field}: expected {expected} entries, found {found}")]
    LengthMismatch {
        field: String,
        expected: usize,
        found: usize,
    },
    #[error("{states} states declared, limit is {limit}")]
    ExplicitLimit { states: usize, limit: usize },
    #[error("invalid value at line {line}, column {column}: {message}")]
    InvalidValue {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid profile {name}: {source}")]
    Profile {
        name: &'static str,
        #[source]
        source: ProfileError,
    },
}

/// On-disk layout of a game file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GameFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub player1: Option<PayoffTriple>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub player2: Option<PayoffTriple>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zero_sum: Option<PayoffTriple>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub symmetric: Option<PayoffTriple>,
}

impl GameFile {
    pub fn from_game(game: &DynkinGame) -> Self {
        GameFile {
            states: Some(game.states.clone()),
            alpha: Some(game.alpha),
            kernel: Some(game.kernel.clone()),
            player1: Some(game.player1.clone()),
            player2: Some(game.player2.clone()),
            zero_sum: None,
            symmetric: None,
        }
    }

    /// Expands shorthands and checks array shapes. Value-level invariants
    /// (discount range, row sums) are left to [`DynkinGame::validate`].
    pub fn into_game(self) -> Result<DynkinGame, SchemaError> {
        let states = self.states.ok_or(SchemaError::MissingKey("states"))?;
        let alpha = self.alpha.ok_or(SchemaError::MissingKey("alpha"))?;
        let kernel = self.kernel.ok_or(SchemaError::MissingKey("kernel"))?;
        let n = states.len();
        if n > MAX_STATES {
            return Err(SchemaError::ExplicitLimit {
                states: n,
                limit: MAX_STATES,
            });
        }

        let (player1, player2) = match (self.player1, self.player2, self.zero_sum, self.symmetric) {
            (Some(p1), Some(p2), None, None) => (p1, p2),
            (None, None, Some(z), None) => {
                let p2 = z.zero_sum_opponent();
                (z, p2)
            }
            (None, None, None, Some(s)) => (s.clone(), s),
            (None, None, None, None) => return Err(SchemaError::MissingKey("player1")),
            (Some(_), None, None, None) => return Err(SchemaError::MissingKey("player2")),
            (None, Some(_), None, None) => return Err(SchemaError::MissingKey("player1")),
            _ => {
                return Err(SchemaError::ConflictingKeys(
                    "use exactly one of player1/player2, zero_sum or symmetric".into(),
                ))
            }
        };

        let check = |field: String, found: usize| {
            if found == n {
                Ok(())
            } else {
                Err(SchemaError::LengthMismatch {
                    field,
                    expected: n,
                    found,
                })
            }
        };
        check("kernel".into(), kernel.len())?;
        for (i, row) in kernel.iter().enumerate() {
            check(format!("kernel[{i}]"), row.len())?;
        }
        for (name, t) in [("player1", &player1), ("player2", &player2)] {
            check(format!("{name}.f"), t.f.len())?;
            check(format!("{name}.g"), t.g.len())?;
            check(format!("{name}.h"), t.h.len())?;
        }

        Ok(DynkinGame {
            states,
            alpha,
            kernel,
            player1,
            player2,
        })
    }
}

fn classify_json_error(e: serde_json::Error) -> IoError {
    use serde_json::error::Category;
    match e.classify() {
        Category::Data => IoError::Schema(SchemaError::InvalidValue {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }),
        Category::Io | Category::Syntax | Category::Eof => IoError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        },
    }
}

fn read(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.to_owned(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(|source| IoError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn parse_game(text: &str) -> Result<DynkinGame, IoError> {
    let file: GameFile = serde_json::from_str(text).map_err(classify_json_error)?;
    Ok(file.into_game()?)
}

pub fn load_game(path: impl AsRef<Path>) -> Result<DynkinGame, IoError> {
    parse_game(&read(path.as_ref())?)
}

pub fn game_to_json(game: &DynkinGame) -> Result<String, IoError> {
    to_json(&GameFile::from_game(game))
}

/// Writes the game in expanded per-player form.
pub fn save_game(path: impl AsRef<Path>, game: &DynkinGame) -> Result<(), IoError> {
    write(path.as_ref(), &game_to_json(game)?)
}

/// Pretty JSON. Floats use the shortest representation that round-trips exactly.
pub fn to_json<T: Serialize>(value: &T) -> Result<String, IoError> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| IoError::Serialize(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

pub fn save_report<T: Serialize>(path: impl AsRef<Path>, report: &T) -> Result<(), IoError> {
    write(path.as_ref(), &to_json(report)?)
}

/// On-disk layout of a profiles file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilesFile {
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
}

pub fn parse_profiles(
    text: &str,
    game: &ValidatedGame,
) -> Result<(StoppingProfile, StoppingProfile), IoError> {
    let file: ProfilesFile = serde_json::from_str(text).map_err(classify_json_error)?;
    let p1 = StoppingProfile::for_game(game, file.p1)
        .map_err(|source| SchemaError::Profile { name: "p1", source })?;
    let p2 = StoppingProfile::for_game(game, file.p2)
        .map_err(|source| SchemaError::Profile { name: "p2", source })?;
    Ok((p1, p2))
}

pub fn load_profiles(
    path: impl AsRef<Path>,
    game: &ValidatedGame,
) -> Result<(StoppingProfile, StoppingProfile), IoError> {
    parse_profiles(&read(path.as_ref())?, game)
}

pub fn save_profiles(
    path: impl AsRef<Path>,
    p1: &StoppingProfile,
    p2: &StoppingProfile,
) -> Result<(), IoError> {
    let file = ProfilesFile {
        p1: p1.as_slice().to_vec(),
        p2: p2.as_slice().to_vec(),
    };
    write(path.as_ref(), &to_json(&file)?)
}

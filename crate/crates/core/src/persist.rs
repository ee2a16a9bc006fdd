//! JSON persistence for trained models and LDA transforms.
//!
//! Every file is an envelope `{"format": ..., "version": ..., "payload": ...}`.
//! Floats are written with shortest round-trip formatting, so a loaded model
//! decodes exactly like the one that was saved.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::lda::LdaTransform;
use crate::model::PhoneLoopModel;

pub const FORMAT_VERSION: u32 = 1;
pub const MODEL_FORMAT: &str = "phone-loop-model";
pub const LDA_FORMAT: &str = "lda-transform";

#[derive(Serialize)]
struct EnvelopeOut<'a, T> {
    format: &'a str,
    version: u32,
    payload: &'a T,
}

#[derive(Deserialize)]
struct EnvelopeIn {
    format: String,
    version: u32,
    payload: Value,
}

fn to_string<T: Serialize>(format: &str, payload: &T) -> String {
    let env = EnvelopeOut {
        format,
        version: FORMAT_VERSION,
        payload,
    };
    serde_json::to_string_pretty(&env).expect("model types always serialize")
}

fn from_str<T: DeserializeOwned>(format: &'static str, text: &str) -> Result<T> {
    let corrupt = |message: String| Error::Corrupt { what: format, message };
    let env: EnvelopeIn = serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
    if env.format != format {
        return Err(corrupt(format!("expected format {format:?}, found {:?}", env.format)));
    }
    if env.version != FORMAT_VERSION {
        return Err(Error::Version {
            what: format,
            found: env.version,
            expected: FORMAT_VERSION,
        });
    }
    serde_json::from_value(env.payload).map_err(|e| corrupt(e.to_string()))
}

fn write(path: &Path, text: String) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn model_to_string(model: &PhoneLoopModel) -> String {
    to_string(MODEL_FORMAT, model)
}

pub fn model_from_str(text: &str) -> Result<PhoneLoopModel> {
    let model: PhoneLoopModel = from_str(MODEL_FORMAT, text)?;
    model.validate().map_err(|e| Error::Corrupt {
        what: MODEL_FORMAT,
        message: e.to_string(),
    })?;
    Ok(model)
}

pub fn save_model(model: &PhoneLoopModel, path: &Path) -> Result<()> {
    write(path, model_to_string(model))
}

pub fn load_model(path: &Path) -> Result<PhoneLoopModel> {
    model_from_str(&read(path)?)
}

pub fn lda_to_string(lda: &LdaTransform) -> String {
    to_string(LDA_FORMAT, lda)
}

pub fn lda_from_str(text: &str) -> Result<LdaTransform> {
    let lda: LdaTransform = from_str(LDA_FORMAT, text)?;
    lda.validate().map_err(|e| Error::Corrupt {
        what: LDA_FORMAT,
        message: e.to_string(),
    })?;
    Ok(lda)
}

pub fn save_lda(lda: &LdaTransform, path: &Path) -> Result<()> {
    write(path, lda_to_string(lda))
}

pub fn load_lda(path: &Path) -> Result<LdaTransform> {
    lda_from_str(&read(path)?)
}

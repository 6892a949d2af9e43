//! Plain-text model checkpoints.
//!
//! ```text
//! ccke-quantile-model v1
//! arch attention
//! token_dim 2
//! d_h 10
//! d_o 10
//! d_e 10
//! mlp1 10 10 10
//! mlp2 10 10 2
//! alpha 0.2
//! input_scale 100 15
//! output_scale 100
//! param_count 932
//! params
//! <one parameter per line, layer by layer, weights row-major then biases>
//! ```
//!
//! Floats are written in shortest round-trip form, so a write/read cycle is
//! bit-exact.

use std::collections::HashMap;
use std::io::{self, BufRead, Write};

use thiserror::Error;

use super::{Architecture, AttentionSpec, ModelError, QuantileModel, Scaling};

const MAGIC: &str = "ccke-quantile-model v1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] io::Error),
    #[error("checkpoint line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("checkpoint describes an invalid model: {0}")]
    Model(#[from] ModelError),
}

pub fn write_checkpoint<W: Write>(model: &QuantileModel, mut out: W) -> io::Result<()> {
    writeln!(out, "{MAGIC}")?;
    match model.arch() {
        Architecture::FeedForward { widths } => {
            writeln!(out, "arch feedforward")?;
            writeln!(out, "widths {}", join(widths))?;
        }
        Architecture::Attention(s) => {
            writeln!(out, "arch attention")?;
            writeln!(out, "token_dim {}", s.token_dim)?;
            writeln!(out, "d_h {}", s.d_h)?;
            writeln!(out, "d_o {}", s.d_o)?;
            writeln!(out, "d_e {}", s.d_e)?;
            writeln!(out, "mlp1 {}", join(&s.mlp1))?;
            writeln!(out, "mlp2 {}", join(&s.mlp2))?;
        }
    }
    writeln!(out, "alpha {}", model.alpha())?;
    writeln!(out, "input_scale {}", join(&model.scaling().input))?;
    writeln!(out, "output_scale {}", model.scaling().output)?;
    writeln!(out, "param_count {}", model.params().len())?;
    writeln!(out, "params")?;
    for p in model.params() {
        writeln!(out, "{p}")?;
    }
    out.flush()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

pub fn read_checkpoint<R: BufRead>(input: R) -> Result<QuantileModel, CheckpointError> {
    let mut lines = input.lines().enumerate();
    let mut next = |what: &str| -> Result<(usize, String), CheckpointError> {
        match lines.next() {
            Some((i, line)) => Ok((i + 1, line?.trim().to_string())),
            None => Err(CheckpointError::Parse {
                line: 0,
                message: format!("unexpected end of file, expected {what}"),
            }),
        }
    };

    let (line, magic) = next("header")?;
    if magic != MAGIC {
        return Err(perr(line, format!("expected header {MAGIC:?}")));
    }

    let mut fields: HashMap<String, (usize, String)> = HashMap::new();
    loop {
        let (line, text) = next("header fields")?;
        if text == "params" {
            break;
        }
        let (key, value) = text
            .split_once(' ')
            .ok_or_else(|| perr(line, format!("malformed field {text:?}")))?;
        fields.insert(key.to_string(), (line, value.trim().to_string()));
    }

    let field = |key: &str| -> Result<&(usize, String), CheckpointError> {
        fields
            .get(key)
            .ok_or_else(|| perr(0, format!("missing field {key:?}")))
    };
    let usize_of = |key: &str| -> Result<usize, CheckpointError> {
        let (line, v) = field(key)?;
        v.parse().map_err(|_| perr(*line, format!("{key}: not an integer")))
    };
    let usizes_of = |key: &str| -> Result<Vec<usize>, CheckpointError> {
        let (line, v) = field(key)?;
        v.split_whitespace()
            .map(|t| t.parse().map_err(|_| perr(*line, format!("{key}: not an integer list"))))
            .collect()
    };
    let f64s_of = |key: &str| -> Result<Vec<f64>, CheckpointError> {
        let (line, v) = field(key)?;
        v.split_whitespace()
            .map(|t| t.parse().map_err(|_| perr(*line, format!("{key}: not a number"))))
            .collect()
    };

    let arch = match field("arch")?.1.as_str() {
        "feedforward" => Architecture::FeedForward {
            widths: usizes_of("widths")?,
        },
        "attention" => Architecture::Attention(AttentionSpec {
            token_dim: usize_of("token_dim")?,
            d_h: usize_of("d_h")?,
            d_o: usize_of("d_o")?,
            d_e: usize_of("d_e")?,
            mlp1: usizes_of("mlp1")?,
            mlp2: usizes_of("mlp2")?,
        }),
        other => {
            let line = field("arch")?.0;
            return Err(perr(line, format!("unknown architecture {other:?}")));
        }
    };
    let alpha = single(f64s_of("alpha")?, field("alpha")?.0)?;
    let output = single(f64s_of("output_scale")?, field("output_scale")?.0)?;
    let scaling = Scaling {
        input: f64s_of("input_scale")?,
        output,
    };
    let count = usize_of("param_count")?;

    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let (line, text) = next("parameter")?;
        params.push(
            text.parse::<f64>()
                .map_err(|_| perr(line, format!("bad parameter {text:?}")))?,
        );
    }
    Ok(QuantileModel::from_params(arch, alpha, scaling, params)?)
}

fn single(v: Vec<f64>, line: usize) -> Result<f64, CheckpointError> {
    match v.as_slice() {
        [x] => Ok(*x),
        _ => Err(perr(line, "expected exactly one number".to_string())),
    }
}

fn perr(line: usize, message: String) -> CheckpointError {
    CheckpointError::Parse { line, message }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attention_round_trip_is_bit_exact() {
        let scaling = Scaling {
            input: vec![100.0, 15.0],
            output: 100.0,
        };
        let model = QuantileModel::init(Architecture::scheduler_attention(), 0.2, scaling, 9).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&model, &mut buf).unwrap();
        let back = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back.arch(), model.arch());
        assert_eq!(back.scaling(), model.scaling());
        assert!(back
            .params()
            .iter()
            .zip(model.params())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn feedforward_header_is_readable() {
        let model = QuantileModel::init(Architecture::link_feedforward(), 0.2, Scaling::identity(2), 1).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&model, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("ccke-quantile-model v1\narch feedforward\nwidths 2 10 10 5 2\n"));
        assert!(text.contains("param_count 207\nparams\n"));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let model = QuantileModel::init(Architecture::link_feedforward(), 0.2, Scaling::identity(2), 1).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&model, &mut buf).unwrap();
        buf.truncate(buf.len() / 2);
        let cut = buf.iter().rposition(|&b| b == b'\n').unwrap();
        buf.truncate(cut + 1);
        assert!(matches!(read_checkpoint(buf.as_slice()), Err(CheckpointError::Parse { .. })));
        assert!(read_checkpoint("nonsense\n".as_bytes()).is_err());
    }
}

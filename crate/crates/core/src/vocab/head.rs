use std::io::{Read, Write};

use super::ExpandedVocabulary;
use crate::error::{Error, Result};
use crate::par;

const MAGIC: &[u8; 4] = b"SFHD";

/// Output-layer weights (`rows × cols`, row-major) plus one bias per row.
///
/// Values are held in `f64`; the binary file stores `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadMatrix {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl HeadMatrix {
    pub fn new(rows: usize, cols: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != rows * cols || bias.len() != rows {
            return Err(Error::validation(format!(
                "head shape {rows}x{cols} does not match {} weights / {} biases",
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::validation("head contains non-finite values"));
        }
        Ok(Self {
            rows,
            cols,
            weights,
            bias,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.cols..(i + 1) * self.cols]
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `W h + b` for a hidden vector of width `cols`.
    pub fn project(&self, hidden: &[f64]) -> Vec<f64> {
        debug_assert_eq!(hidden.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                let dot: f64 = self.row(i).iter().zip(hidden).map(|(w, h)| w * h).sum();
                dot + self.bias[i]
            })
            .collect()
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let rows = u32::try_from(self.rows).map_err(|_| Error::Format("too many rows".into()))?;
        let cols = u32::try_from(self.cols).map_err(|_| Error::Format("too many columns".into()))?;
        let mut buf = Vec::with_capacity(12 + 4 * (self.weights.len() + self.bias.len()));
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&rows.to_le_bytes());
        buf.extend_from_slice(&cols.to_le_bytes());
        for v in self.weights.iter().chain(&self.bias) {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn read<R: Read>(mut input: R) -> Result<Self> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(Error::Format("missing SFHD magic".into()));
        }
        let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let count = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_add(rows))
            .ok_or_else(|| Error::Format("head dimensions overflow".into()))?;
        let body = &bytes[12..];
        if body.len() != count * 4 {
            return Err(Error::Format(format!(
                "expected {} payload bytes for {rows}x{cols}, found {}",
                count * 4,
                body.len()
            )));
        }
        let mut values: Vec<f64> = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        let bias = values.split_off(rows * cols);
        Self::new(rows, cols, values, bias)
    }
}

/// Builds the head over U: each term's row and bias is the arithmetic mean
/// of its subwords' rows and biases in the base head.
pub fn expand_head(base: &HeadMatrix, expanded: &ExpandedVocabulary) -> Result<HeadMatrix> {
    let ids: Vec<u32> = (0..expanded.len() as u32).collect();
    let pooled = par::try_map(&ids, |&term| {
        let subwords = expanded.subwords_of(term);
        if subwords.is_empty() {
            return Err(Error::Invariant(format!("term {term} has an empty subword sequence")));
        }
        let mut row = vec![0.0f64; base.cols];
        let mut bias = 0.0f64;
        for &sw in subwords {
            let sw = sw as usize;
            if sw >= base.rows {
                return Err(Error::validation(format!(
                    "subword id {sw} out of range for a base head with {} rows",
                    base.rows
                )));
            }
            for (acc, w) in row.iter_mut().zip(base.row(sw)) {
                *acc += w;
            }
            bias += base.bias[sw];
        }
        let n = subwords.len() as f64;
        row.iter_mut().for_each(|v| *v /= n);
        Ok((row, bias / n))
    })?;

    let mut weights = Vec::with_capacity(expanded.len() * base.cols);
    let mut bias = Vec::with_capacity(expanded.len());
    for (row, b) in pooled {
        weights.extend(row);
        bias.push(b);
    }
    HeadMatrix::new(expanded.len(), base.cols, weights, bias)
}
